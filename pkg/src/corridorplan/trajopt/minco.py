"""Minimum-control-effort piecewise polynomials.

A trajectory of ``M`` pieces and order ``s`` has pieces of degree ``2s - 1``.
Given the intermediate waypoints ``q`` and durations ``T`` its coefficients
are the unique solution of a banded linear system:

* ``s`` rows pin derivatives ``0..s-1`` of the first piece at ``t = 0``,
* per junction, one row pins the position to the waypoint and ``2s - 1``
  rows make derivatives ``0..2s-2`` continuous,
* ``s`` rows pin derivatives ``0..s-1`` of the last piece at its end.

Both the system and its transpose are solved with one banded LU
factorization, which is what makes the adjoint gradient cheap.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np


@numba.njit(cache=True)
def falling_factorials(n):
    """``ff[j, k] = j! / (j - k)!`` (zero for ``k > j``)."""
    ff = np.zeros((n, n + 1))
    for j in range(n):
        ff[j, 0] = 1.0
        for k in range(1, j + 1):
            ff[j, k] = ff[j, k - 1] * (j - k + 1)
    return ff


@numba.njit(cache=True)
def basis(t, k, ff, out):
    """k-th derivative of ``[1, t, ..., t^(n-1)]`` written into ``out``."""
    n = out.shape[0]
    pw = 1.0
    for j in range(n):
        if j < k:
            out[j] = 0.0
        else:
            out[j] = ff[j, k] * pw
            pw *= t


@numba.njit(cache=True)
def _assemble(T, s, ff):
    """Dense system matrix plus the last nonzero column of every row."""
    m = T.shape[0]
    n2 = 2 * s
    n = n2 * m
    A = np.zeros((n, n))
    last = np.empty(n, dtype=np.int64)
    tp = np.empty(n2)
    for k in range(s):
        A[k, k] = ff[k, k]
        last[k] = k
    for i in range(m):
        tp[0] = 1.0
        for j in range(1, n2):
            tp[j] = tp[j - 1] * T[i]
        ci = n2 * i
        base = s + n2 * i
        if i < m - 1:
            # position row, then continuity of orders 0..2s-2
            for j in range(n2):
                A[base, ci + j] = tp[j]
            last[base] = ci + n2 - 1
            for k in range(n2 - 1):
                r = base + 1 + k
                for j in range(k, n2):
                    A[r, ci + j] = ff[j, k] * tp[j - k]
                A[r, ci + n2 + k] = -ff[k, k]
                last[r] = ci + n2 + k
        else:
            for k in range(s):
                for j in range(k, n2):
                    A[base + k, ci + j] = ff[j, k] * tp[j - k]
                last[base + k] = n - 1
    return A, last


@numba.njit(cache=True)
def band_lu(A, bw, last):
    """In-place LU with partial pivoting of a matrix with bandwidth ``bw``.

    As in LAPACK's banded routine, multipliers stay where they were computed
    and only the trailing columns are swapped, so solves must interleave the
    swaps with the elimination steps.  ``last`` (last nonzero column per
    row, updated in place) narrows the elimination to the true fill; pass
    ``min(n - 1, r + bw)`` for a generic banded matrix.
    Returns ``(piv, ok)``; ``ok`` is False when a zero (or non-finite)
    pivot shows the matrix is singular.
    """
    n = A.shape[0]
    piv = np.empty(n, dtype=np.int64)
    for k in range(n):
        rend = min(n, k + bw + 1)
        p = k
        big = abs(A[k, k])
        for r in range(k + 1, rend):
            if abs(A[r, k]) > big:
                big = abs(A[r, k])
                p = r
        piv[k] = p
        if not big > 0.0 or not np.isfinite(big):
            return piv, False
        if p != k:
            cend = max(last[k], last[p]) + 1
            for j in range(k, cend):
                tmp = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = tmp
            tmp_l = last[k]
            last[k] = last[p]
            last[p] = tmp_l
        cend = last[k] + 1
        inv = 1.0 / A[k, k]
        for r in range(k + 1, rend):
            f = A[r, k] * inv
            if f == 0.0:
                continue
            A[r, k] = f
            for j in range(k + 1, cend):
                A[r, j] -= f * A[k, j]
            if last[k] > last[r]:
                last[r] = last[k]
    return piv, True


@numba.njit(cache=True)
def lu_solve(LU, piv, b, bw):
    n = LU.shape[0]
    x = b.copy()
    for k in range(n):
        p = piv[k]
        if p != k:
            for a in range(x.shape[1]):
                tmp = x[k, a]
                x[k, a] = x[p, a]
                x[p, a] = tmp
        for r in range(k + 1, min(n, k + bw + 1)):
            f = LU[r, k]
            if f != 0.0:
                for a in range(x.shape[1]):
                    x[r, a] -= f * x[k, a]
    for k in range(n - 1, -1, -1):
        for j in range(k + 1, min(n, k + 2 * bw + 1)):
            f = LU[k, j]
            if f != 0.0:
                for a in range(x.shape[1]):
                    x[k, a] -= f * x[j, a]
        for a in range(x.shape[1]):
            x[k, a] /= LU[k, k]
    return x


@numba.njit(cache=True)
def lu_solve_transposed(LU, piv, b, bw):
    # A = P0 L0 P1 L1 ... U, so A^T x = b is U^T y = b followed by
    # x = P0 L0^-T P1 L1^-T ... y applied right to left
    n = LU.shape[0]
    x = b.copy()
    for k in range(n):
        for j in range(max(0, k - 2 * bw), k):
            f = LU[j, k]
            if f != 0.0:
                for a in range(x.shape[1]):
                    x[k, a] -= f * x[j, a]
        for a in range(x.shape[1]):
            x[k, a] /= LU[k, k]
    for k in range(n - 1, -1, -1):
        for r in range(k + 1, min(n, k + bw + 1)):
            f = LU[r, k]
            if f != 0.0:
                for a in range(x.shape[1]):
                    x[k, a] -= f * x[r, a]
        p = piv[k]
        if p != k:
            for a in range(x.shape[1]):
                tmp = x[k, a]
                x[k, a] = x[p, a]
                x[p, a] = tmp
    return x


@numba.njit(cache=True)
def _rhs(q, d0, dg, s, m):
    n2 = 2 * s
    b = np.zeros((n2 * m, 3))
    for k in range(s):
        b[k] = d0[k]
    for i in range(m - 1):
        b[s + n2 * i] = q[i]
    base = s + n2 * (m - 1)
    for k in range(s):
        b[base + k] = dg[k]
    return b


@numba.njit(cache=True)
def solve_coefficients(q, T, d0, dg, s, ff):
    """Coefficients ``(M, 2s, 3)``, the factorization for adjoint solves, and an ok flag."""
    m = T.shape[0]
    A, last = _assemble(T, s, ff)
    bw = 3 * s - 1
    piv, ok = band_lu(A, bw, last)
    if not ok:
        return np.zeros((m, 2 * s, 3)), A, piv, False
    x = lu_solve(A, piv, _rhs(q, d0, dg, s, m), bw)
    return x.reshape(m, 2 * s, 3), A, piv, True


def _as_state(d, s):
    d = np.asarray(d, dtype=float)
    if d.shape == (3,):
        d = np.vstack([d, np.zeros((s - 1, 3))])
    if d.shape != (s, 3):
        raise ValueError(f"boundary state must have shape ({s}, 3), got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("boundary state must be finite")
    return d


@dataclass
class Trajectory:
    """Piecewise polynomial ``p_i(t) = c_i^T beta(t)`` on ``[0, T_i]``.

    Attributes:
        coeffs: ``(M, 2s, 3)`` array, row ``j`` multiplies ``t**j``.
        durations: ``(M,)`` piece durations.
        waypoints: ``(M-1, 3)`` junction positions.
        start, goal: ``(s, 3)`` boundary derivative stacks.
    """

    coeffs: np.ndarray
    durations: np.ndarray
    waypoints: np.ndarray
    start: np.ndarray
    goal: np.ndarray

    @property
    def order(self) -> int:
        return self.coeffs.shape[1] // 2

    @property
    def num_pieces(self) -> int:
        return len(self.durations)

    @property
    def total_duration(self) -> float:
        return float(np.sum(self.durations))

    @property
    def junction_times(self) -> np.ndarray:
        """Global times of the waypoints (piece ends except the last)."""
        return np.cumsum(self.durations)[:-1]

    def locate(self, t: float):
        """Piece index and local time for global time ``t`` (clamped)."""
        t = min(max(float(t), 0.0), self.total_duration)
        ends = np.cumsum(self.durations)
        i = min(int(np.searchsorted(ends, t, side="right")), self.num_pieces - 1)
        return i, t - (ends[i] - self.durations[i])

    def evaluate(self, t: float, k: int = 0) -> np.ndarray:
        """k-th derivative at global time ``t``."""
        i, tl = self.locate(t)
        ff = falling_factorials(2 * self.order)
        b = np.empty(2 * self.order)
        basis(tl, k, ff, b)
        return b @ self.coeffs[i]

    def state(self, t: float, orders: int | None = None) -> np.ndarray:
        """Derivative stack ``(orders, 3)``; defaults to ``0..s-1``."""
        orders = self.order if orders is None else orders
        return np.array([self.evaluate(t, k) for k in range(orders)])

    def piece_state(self, i: int, tl: float, orders: int | None = None) -> np.ndarray:
        """Derivative stack of piece ``i`` at local time ``tl`` (no clamping)."""
        orders = self.order if orders is None else orders
        ff = falling_factorials(2 * self.order)
        b = np.empty(2 * self.order)
        out = np.empty((orders, 3))
        for k in range(orders):
            basis(tl, k, ff, b)
            out[k] = b @ self.coeffs[i]
        return out

    def sample(self, dt: float, orders: int = 3):
        """Times ``0, dt, ...`` (plus the end time) and derivatives there.

        Returns ``(t, derivs)`` with ``derivs`` of shape ``(orders, n, 3)``.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        total = self.total_duration
        t = np.arange(0.0, total, dt)
        if len(t) == 0 or t[-1] < total:
            t = np.append(t, total)
        return t, sample_many(self.coeffs, self.durations, t, orders)

    def energy(self) -> float:
        """Integral of the squared s-th derivative."""
        s = self.order
        return float(sum(piece_energy(c, T, s) for c, T in zip(self.coeffs, self.durations)))

    def to_dict(self):
        return {
            "order": self.order,
            "pieces": [
                {"duration": float(T), "coeffs": c.tolist()} for c, T in zip(self.coeffs, self.durations)
            ],
            "waypoints": self.waypoints.tolist(),
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d):
        coeffs = np.array([p["coeffs"] for p in d["pieces"]], dtype=float)
        durations = np.array([p["duration"] for p in d["pieces"]], dtype=float)
        return cls(
            coeffs,
            durations,
            np.asarray(d.get("waypoints", []), dtype=float).reshape(-1, 3),
            np.asarray(d["start"], dtype=float),
            np.asarray(d["goal"], dtype=float),
        )

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump_csv(self, path, dt: float = 0.01):
        t, d = self.sample(dt, orders=3)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"])
            for i in range(len(t)):
                w.writerow([t[i], *d[0, i], *d[1, i], *d[2, i]])


@numba.njit(cache=True)
def sample_many(coeffs, durations, times, orders):
    m, n2, _ = coeffs.shape
    ff = falling_factorials(n2)
    out = np.empty((orders, times.shape[0], 3))
    b = np.empty(n2)
    ends = np.cumsum(durations)
    i = 0
    for j in range(times.shape[0]):
        t = min(max(times[j], 0.0), ends[-1])
        # times are usually sorted; fall back to a fresh scan otherwise
        if i > 0 and t < ends[i - 1]:
            i = 0
        while i < m - 1 and t >= ends[i]:
            i += 1
        tl = t - (ends[i] - durations[i])
        for k in range(orders):
            basis(tl, k, ff, b)
            for a in range(3):
                acc = 0.0
                for r in range(n2):
                    acc += b[r] * coeffs[i, r, a]
                out[k, j, a] = acc
    return out


@numba.njit(cache=True)
def piece_energy(c, T, s):
    n2 = 2 * s
    ff = falling_factorials(n2)
    e = 0.0
    for j in range(s, n2):
        for k in range(s, n2):
            p = j + k - 2 * s + 1
            w = ff[j, s] * ff[k, s] * T**p / p
            e += w * (c[j, 0] * c[k, 0] + c[j, 1] * c[k, 1] + c[j, 2] * c[k, 2])
    return e


def minco_construct(q, T, start, goal, s: int = 4) -> Trajectory:
    """Minimum-effort trajectory through ``q`` with durations ``T``.

    Args:
        q: ``(M-1, 3)`` intermediate waypoints.
        T: ``(M,)`` positive durations.
        start, goal: ``(s, 3)`` derivative stacks, or a bare position meaning
            zero higher derivatives.
        s: control-effort order (4 = snap).

    Raises:
        ValueError: on inconsistent shapes or non-positive durations.
        ZeroDivisionError: if the system is numerically singular.
    """
    if s < 1:
        raise ValueError("order s must be >= 1")
    T = np.atleast_1d(np.asarray(T, dtype=float))
    m = len(T)
    if m < 1:
        raise ValueError("need at least one piece")
    if not np.all(T > 0):
        raise ValueError("durations must be positive")
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    if len(q) != m - 1:
        raise ValueError(f"{m} pieces need {m - 1} waypoints, got {len(q)}")
    d0, dg = _as_state(start, s), _as_state(goal, s)
    c, _, _, ok = solve_coefficients(np.ascontiguousarray(q), T, d0, dg, s, falling_factorials(2 * s))
    if not ok:
        raise ZeroDivisionError("singular trajectory system (durations under/overflowed)")
    return Trajectory(c, T.copy(), q.copy(), d0, dg)
