"""Independent reference implementations used by several test modules."""

import math

import numpy as np
from scipy.linalg import null_space


def deriv_row(t, k, n):
    """Row r with r @ c = k-th derivative of sum_j c_j t^j (n coefficients)."""
    row = np.zeros(n)
    for j in range(k, n):
        row[j] = math.perm(j, k) * t ** (j - k)
    return row


def effort_gram(T, s, n):
    """Q with c @ Q @ c = int_0^T (d^s/dt^s sum c_j t^j)^2 dt."""
    Q = np.zeros((n, n))
    for i in range(s, n):
        for j in range(s, n):
            p = i + j - 2 * s + 1
            Q[i, j] = math.perm(i, s) * math.perm(j, s) * T**p / p
    return Q




def constraint_system(T, s, d0, dg, q):
    """``A c = b`` for one axis: boundary stacks, waypoints, C^{s-1} continuity."""
    m = len(T)
    n = 2 * s
    rows, rhs = [], []

    def put(piece, row):
        full = np.zeros(m * n)
        full[piece * n:(piece + 1) * n] = row
        return full

    for k in range(s):
        rows.append(put(0, deriv_row(0.0, k, n)))
        rhs.append(d0[k])
    for i in range(m - 1):
        rows.append(put(i, deriv_row(T[i], 0, n)))
        rhs.append(q[i])
        for k in range(s):
            rows.append(put(i, deriv_row(T[i], k, n)) - put(i + 1, deriv_row(0.0, k, n)))
            rhs.append(0.0)
    for k in range(s):
        rows.append(put(m - 1, deriv_row(T[-1], k, n)))
        rhs.append(dg[k])
    return np.array(rows), np.array(rhs)


def block_gram(T, s):
    n = 2 * s
    m = len(T)
    Q = np.zeros((m * n, m * n))
    for i in range(m):
        Q[i * n:(i + 1) * n, i * n:(i + 1) * n] = effort_gram(T[i], s, n)
    return Q


def kkt_min_effort(q, T, d0, dg, s):
    """Minimum-effort coefficients ``(M, 2s, 3)`` of the equality-constrained
    quadratic program, solved per axis in the null space of the constraints."""
    m = len(T)
    n = 2 * s
    Q = block_gram(T, s)
    out = np.zeros((m, n, 3))
    for ax in range(3):
        A, b = constraint_system(T, s, d0[:, ax], dg[:, ax], q[:, ax] if len(q) else [])
        c0 = np.linalg.lstsq(A, b, rcond=None)[0]
        N = null_space(A)
        if N.shape[1]:
            H = N.T @ Q @ N
            c0 = c0 - N @ np.linalg.solve(H, N.T @ Q @ c0)
        out[:, :, ax] = c0.reshape(m, n)
    return out


def effort(coeffs, T, s):
    """Control effort by exact polynomial integration with numpy.polynomial."""
    total = 0.0
    for c, dur in zip(coeffs, T):
        for ax in range(3):
            p = np.polynomial.Polynomial(c[:, ax]).deriv(s)
            sq = (p * p).integ()
            total += sq(dur) - sq(0.0)
    return total


def feasible_perturbation_basis(T, s):
    A, _ = constraint_system(T, s, np.zeros(s), np.zeros(s), np.zeros(len(T) - 1))
    return null_space(A)


def central_difference(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g
