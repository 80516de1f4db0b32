"""Penalized trajectory objective and its analytic gradient.

The objective over log-durations ``tau`` and free waypoints ``q`` is

    sum_i [ int ||p_i^(s)||^2 + rho_T T_i ]
      + rho_vel sum_i int L(||v||^2 - v_max^2)
      + rho_acc sum_i int L(||a||^2 - a_max^2)
      + rho_c   sum_i int L(||p - o_i||^2 - r_i^2)

with ``T_i = exp(tau_i)`` and ``L`` the C2 barrier below.  Penalty integrals
use the midpoint rule with a fixed node count per piece.  The gradient runs
through the coefficient solve with one adjoint (transposed) solve.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .minco import (
    _assemble,
    band_lu,
    basis,
    falling_factorials,
    lu_solve,
    lu_solve_transposed,
    piece_energy,
    solve_coefficients,
)


@numba.njit(cache=True)
def barrier3(x, mu):
    """Barrier value and its first two derivatives at ``x``."""
    if x <= 0.0:
        return 0.0, 0.0, 0.0
    if x < mu:
        r = x / mu
        return (mu - 0.5 * x) * r**3, (3.0 - 2.0 * r) * r * r, 6.0 * r * (1.0 - r) / mu
    return x - 0.5 * mu, 1.0, 0.0


def barrier(x, mu: float = 0.02):
    """Piecewise C2 penalty: 0, then a cubic blend, then linear beyond ``mu``."""
    return barrier3(float(x), float(mu))[0]


def barrier_grad(x, mu: float = 0.02):
    return barrier3(float(x), float(mu))[1]


def barrier_hess(x, mu: float = 0.02):
    return barrier3(float(x), float(mu))[2]


# indices into the term breakdown returned by the kernel
ENERGY, TIME, VELOCITY, ACCELERATION, COLLISION = range(5)


@numba.njit(cache=True)
def cost_kernel(tau, q, d0, dg, centers, radii, s, nodes, rho_t, rho_v, rho_a, rho_c, vmax, amax, mu, literal):
    """Cost, gradients w.r.t. ``tau`` and ``q``, per-term breakdown, coefficients."""
    m = tau.shape[0]
    n2 = 2 * s
    ff = falling_factorials(n2)
    T = np.exp(tau)
    c, LU, piv, ok = solve_coefficients(q, T, d0, dg, s, ff)
    G = np.zeros((m, n2, 3))  # d cost / d coefficients
    dT = np.zeros(m)  # explicit d cost / d T
    terms = np.zeros(5)
    if not ok:
        # durations under/overflowed: report an infinite cost so line
        # searches back off
        terms[:] = np.inf
        return np.inf, dT, np.zeros((m - 1, 3)), terms, c
    b0 = np.empty(n2)
    b1 = np.empty(n2)
    b2 = np.empty(n2)
    b3 = np.empty(n2)
    vm2 = vmax * vmax
    am2 = amax * amax
    pos = np.zeros(3)
    vel = np.zeros(3)
    acc = np.zeros(3)
    jer = np.zeros(3)
    for i in range(m):
        Ti = T[i]
        ci = c[i]
        # control effort and its explicit time derivative (integrand at T)
        tp = np.empty(2 * n2)
        tp[0] = 1.0
        for j in range(1, 2 * n2):
            tp[j] = tp[j - 1] * Ti
        for j in range(s, n2):
            for k in range(s, n2):
                p = j + k - 2 * s + 1
                w = ff[j, s] * ff[k, s]
                dot = ci[j, 0] * ci[k, 0] + ci[j, 1] * ci[k, 1] + ci[j, 2] * ci[k, 2]
                terms[ENERGY] += w * tp[p] / p * dot
                dT[i] += w * tp[p - 1] * dot
                for a in range(3):
                    G[i, j, a] += 2.0 * w * tp[p] / p * ci[k, a]
        terms[TIME] += rho_t * Ti
        dT[i] += rho_t
        step = Ti / nodes
        if literal:
            bound = radii[i]
        else:
            bound = radii[i] * radii[i]
        for nd in range(nodes):
            frac = (nd + 0.5) / nodes
            t = frac * Ti
            pw = 1.0
            for r in range(n2):
                # b_k[r] = d^k/dt^k t^r, built from one running power
                b0[r] = pw
                pw *= t
            for r in range(n2):
                b2[r] = ff[r, 2] * b0[r - 2] if r >= 2 else 0.0
                b3[r] = ff[r, 3] * b0[r - 3] if r >= 3 else 0.0
                b1[r] = ff[r, 1] * b0[r - 1] if r >= 1 else 0.0
            for a in range(3):
                pos[a] = 0.0
                vel[a] = 0.0
                acc[a] = 0.0
                jer[a] = 0.0
            for r in range(n2):
                for a in range(3):
                    pos[a] += b0[r] * ci[r, a]
                    vel[a] += b1[r] * ci[r, a]
                    acc[a] += b2[r] * ci[r, a]
                    jer[a] += b3[r] * ci[r, a]
            # velocity
            g = vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2 - vm2
            val, dl, _ = barrier3(g, mu)
            if val > 0.0:
                terms[VELOCITY] += rho_v * step * val
                scale = rho_v * step * dl * 2.0
                dT[i] += rho_v * val / nodes + scale * frac * (vel[0] * acc[0] + vel[1] * acc[1] + vel[2] * acc[2])
                for r in range(n2):
                    for a in range(3):
                        G[i, r, a] += scale * b1[r] * vel[a]
            # acceleration
            g = acc[0] ** 2 + acc[1] ** 2 + acc[2] ** 2 - am2
            val, dl, _ = barrier3(g, mu)
            if val > 0.0:
                terms[ACCELERATION] += rho_a * step * val
                scale = rho_a * step * dl * 2.0
                dT[i] += rho_a * val / nodes + scale * frac * (acc[0] * jer[0] + acc[1] * jer[1] + acc[2] * jer[2])
                for r in range(n2):
                    for a in range(3):
                        G[i, r, a] += scale * b2[r] * acc[a]
            # corridor: piece i stays in sphere i
            e0 = pos[0] - centers[i, 0]
            e1 = pos[1] - centers[i, 1]
            e2 = pos[2] - centers[i, 2]
            g = e0 * e0 + e1 * e1 + e2 * e2 - bound
            val, dl, _ = barrier3(g, mu)
            if val > 0.0:
                terms[COLLISION] += rho_c * step * val
                scale = rho_c * step * dl * 2.0
                dT[i] += rho_c * val / nodes + scale * frac * (e0 * vel[0] + e1 * vel[1] + e2 * vel[2])
                for r in range(n2):
                    G[i, r, 0] += scale * b0[r] * e0
                    G[i, r, 1] += scale * b0[r] * e1
                    G[i, r, 2] += scale * b0[r] * e2
    # adjoint: the coefficients depend on (q, T) through A(T) c = b(q)
    lam = lu_solve_transposed(LU, piv, G.reshape(m * n2, 3), 3 * s - 1)
    gq = np.zeros((m - 1, 3))
    for i in range(m):
        if i < m - 1:
            base = s + n2 * i
            gq[i] = lam[base]
            # row 0 pins position (order 0); row 1 + k matches order k
            basis(T[i], 1, ff, b0)
            acc_t = 0.0
            for a in range(3):
                pd = 0.0
                for r in range(n2):
                    pd += b0[r] * c[i, r, a]
                acc_t += (lam[base, a] + lam[base + 1, a]) * pd
            for k in range(1, n2 - 1):
                basis(T[i], k + 1, ff, b0)
                for a in range(3):
                    pd = 0.0
                    for r in range(n2):
                        pd += b0[r] * c[i, r, a]
                    acc_t += lam[base + 1 + k, a] * pd
            dT[i] -= acc_t
        else:
            base = s + n2 * (m - 1)
            acc_t = 0.0
            for k in range(s):
                basis(T[i], k + 1, ff, b0)
                for a in range(3):
                    pd = 0.0
                    for r in range(n2):
                        pd += b0[r] * c[i, r, a]
                    acc_t += lam[base + k, a] * pd
            dT[i] -= acc_t
    total = terms.sum()
    return total, dT * T, gq, terms, c


@numba.njit(cache=True)
def objective(x, params):
    """Packed objective ``x = [tau, q.ravel()]`` for :func:`lbfgs_nb`."""
    m, d0, dg, centers, radii, s, nodes, rho_t, rho_v, rho_a, rho_c, vmax, amax, mu, literal = params
    q = np.ascontiguousarray(x[m:]).reshape(m - 1, 3)
    f, gt, gq, _, _ = cost_kernel(x[:m], q, d0, dg, centers, radii, s, nodes, rho_t, rho_v, rho_a, rho_c,
                                  vmax, amax, mu, literal)
    g = np.empty(x.shape[0])
    g[:m] = gt
    g[m:] = gq.ravel()
    return f, g


@numba.njit(cache=True)
def _effort_and_time(tau, q, d0, dg, s, ff, rho_t):
    T = np.exp(tau)
    c, _, _, ok = solve_coefficients(q, T, d0, dg, s, ff)
    if not ok:
        return np.inf
    e = 0.0
    for i in range(T.shape[0]):
        e += piece_energy(c[i], T[i], s) + rho_t * T[i]
    return e


@numba.njit(cache=True)
def effort_curvature(tau, q, d0, dg, s, rho_t, h):
    """Diagonal curvature of control effort plus time cost over ``[tau, q]``.

    Waypoint entries are exact: the effort is quadratic in ``q`` with a
    Hessian that depends on the durations only, so each diagonal entry is
    the effort of a unit waypoint bump with zero boundary states.  Three
    waypoints share one solve (one per coordinate column).  Duration entries
    are central differences with step ``h``.
    """
    m = tau.shape[0]
    n2 = 2 * s
    ff = falling_factorials(n2)
    out = np.zeros(m + 3 * (m - 1))
    e0 = _effort_and_time(tau, q, d0, dg, s, ff, rho_t)
    for i in range(m):
        tp = tau.copy()
        tp[i] += h
        ep = _effort_and_time(tp, q, d0, dg, s, ff, rho_t)
        tp[i] -= 2.0 * h
        em = _effort_and_time(tp, q, d0, dg, s, ff, rho_t)
        out[i] = (ep + em - 2.0 * e0) / (h * h)
    if m > 1:
        T = np.exp(tau)
        A, last = _assemble(T, s, ff)
        bw = 3 * s - 1
        piv, ok = band_lu(A, bw, last)
        if not ok:
            return out
        for j0 in range(0, m - 1, 3):
            b = np.zeros((n2 * m, 3))
            for a in range(3):
                if j0 + a < m - 1:
                    b[s + n2 * (j0 + a), a] = 1.0
            c = lu_solve(A, piv, b, bw).reshape(m, n2, 3)
            for a in range(3):
                j = j0 + a
                if j >= m - 1:
                    break
                e = 0.0
                for i in range(m):
                    for r in range(s, n2):
                        for k in range(s, n2):
                            p = r + k - 2 * s + 1
                            e += ff[r, s] * ff[k, s] * T[i] ** p / p * c[i, r, a] * c[i, k, a]
                out[m + 3 * j:m + 3 * j + 3] = 2.0 * e
    return out
