"""Self-contained bounded-variable simplex for small dense LPs.

Solves   maximize c.x   subject to   row_lb <= A x <= row_ub,
                                     var_lb <=   x <= var_ub,
with all bounds finite. Range rows are handled by adjoining one slack
variable per row (A x - r = 0, r in [row_lb, row_ub]) and running the
primal simplex with upper/lower variable bounds; nonbasic variables sit
at a bound and may flip bounds without a basis change.

Every LP this package builds has a feasible bound start (all structural
variables at their lower bound), so no phase-1 is needed; the start is
validated and a violated one is rejected loudly.

The pivot kernel is JIT-compiled with numba when available; the pure
Python fallback is identical but slow.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


OPTIMAL = 0
ITERATION_LIMIT = 1
UNBOUNDED = 2
INFEASIBLE = 3

_STATUS_NAMES = {
    OPTIMAL: "optimal",
    ITERATION_LIMIT: "iteration limit",
    UNBOUNDED: "unbounded",
    INFEASIBLE: "infeasible",
}

# Reduced-cost optimality tolerance and minimum usable pivot magnitude.
_TOL_Z = 1e-9
_TOL_PIV = 1e-10
_FIXED_TOL = 1e-14


@njit(cache=True)
def _kernel(T, xB, basis, pos, at_upper, lb, ub, c, zrow, max_iter):  # pragma: no cover
    """Primal bounded-variable simplex iterations on a dense tableau.

    Mutates T, xB, basis, pos, at_upper and zrow in place; on optimal exit
    the slack entries of zrow hold the row duals. Returns (status, iters).
    """
    m, N = T.shape

    for j in range(N):
        zrow[j] = c[j]
    for i in range(m):
        cb = c[basis[i]]
        if cb != 0.0:
            for j in range(N):
                zrow[j] -= cb * T[i, j]

    iters = 0
    stall = 0
    bland = False
    while iters < max_iter:
        iters += 1

        # --- entering variable ---
        jin = -1
        best = _TOL_Z
        for j in range(N):
            if pos[j] >= 0:
                continue
            if ub[j] - lb[j] <= _FIXED_TOL:
                continue
            v = -zrow[j] if at_upper[j] else zrow[j]
            if v > best:
                jin = j
                if bland:
                    break
                best = v
        if jin < 0:
            return OPTIMAL, iters

        sigma = -1.0 if at_upper[jin] else 1.0

        # --- ratio test (with bound flip) ---
        tmax = ub[jin] - lb[jin]
        leave = -1
        leave_up = False
        piv_best = 0.0
        for i in range(m):
            d = -sigma * T[i, jin]  # rate of change of xB[i]
            bi = basis[i]
            if d > _TOL_PIV:
                ti = (ub[bi] - xB[i]) / d
                hit_up = True
            elif d < -_TOL_PIV:
                ti = (lb[bi] - xB[i]) / d
                hit_up = False
            else:
                continue
            if ti < 0.0:
                ti = 0.0
            if ti < tmax - 1e-12:
                tmax = ti
                leave = i
                leave_up = hit_up
                piv_best = abs(T[i, jin])
            elif ti < tmax + 1e-12 and leave >= 0 and abs(T[i, jin]) > piv_best:
                leave = i
                leave_up = hit_up
                piv_best = abs(T[i, jin])

        if tmax >= 1e300:
            return UNBOUNDED, iters

        if best * tmax > 1e-12:
            stall = 0
        else:
            stall += 1
            if stall > 2 * (m + N):
                bland = True

        if leave < 0:
            # bound flip: variable jumps to its other bound
            if tmax != 0.0:
                for i in range(m):
                    xB[i] -= sigma * T[i, jin] * tmax
            at_upper[jin] = not at_upper[jin]
            continue

        # --- pivot ---
        r = leave
        pivval = T[r, jin]
        if tmax != 0.0:
            for i in range(m):
                xB[i] -= sigma * T[i, jin] * tmax
        enter_val = (ub[jin] if at_upper[jin] else lb[jin]) + sigma * tmax

        lv = basis[r]
        at_upper[lv] = leave_up
        pos[lv] = -1

        inv = 1.0 / pivval
        for j in range(N):
            T[r, j] *= inv
        for i in range(m):
            if i == r:
                continue
            f = T[i, jin]
            if f != 0.0:
                for j in range(N):
                    T[i, j] -= f * T[r, j]
                T[i, jin] = 0.0
        zj = zrow[jin]
        if zj != 0.0:
            for j in range(N):
                zrow[j] -= zj * T[r, j]
            zrow[jin] = 0.0

        basis[r] = jin
        pos[jin] = r
        xB[r] = enter_val

    return ITERATION_LIMIT, iters


@njit(cache=True)
def _fill_tableau(T, A):  # pragma: no cover
    """T = [-A | I] for the slack start basis."""
    m, nx = A.shape
    for i in range(m):
        for j in range(nx):
            T[i, j] = -A[i, j]
        T[i, nx + i] = 1.0


class LpResult:
    __slots__ = ("status", "x", "objective", "iterations", "duals")

    def __init__(self, status, x, objective, iterations, duals=None):
        self.status = status
        self.x = x
        self.objective = objective
        self.iterations = iterations
        self.duals = duals  # one multiplier per row (optimal basis values)

    @property
    def status_name(self):
        return _STATUS_NAMES[self.status]

    def __repr__(self):
        return f"LpResult({self.status_name}, obj={self.objective!r}, iters={self.iterations})"


def solve_bounded_lp(
    c: np.ndarray,
    A: np.ndarray,
    row_lb: np.ndarray,
    row_ub: np.ndarray,
    var_lb: np.ndarray,
    var_ub: np.ndarray,
    max_iter: int | None = None,
) -> LpResult:
    """Maximize c.x subject to row_lb <= A x <= row_ub, var_lb <= x <= var_ub.

    All bounds must be finite. Returns structural variable values only.
    """
    c = np.ascontiguousarray(c, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    m, nx = A.shape
    N = nx + m
    if max_iter is None:
        max_iter = 200 * (m + nx) + 200

    lb = np.empty(N)
    ub = np.empty(N)
    lb[:nx] = var_lb
    ub[:nx] = var_ub
    lb[nx:] = row_lb
    ub[nx:] = row_ub
    if not (np.isfinite(lb).all() and np.isfinite(ub).all()):
        raise ValueError("solve_bounded_lp requires finite bounds")
    if (ub < lb - 1e-12).any():
        return LpResult(INFEASIBLE, None, np.nan, 0)

    T = np.zeros((m, N))
    _fill_tableau(T, A)
    basis = np.arange(nx, N, dtype=np.int64)
    pos = np.full(N, -1, dtype=np.int64)
    pos[nx:] = np.arange(m)
    at_upper = np.zeros(N, dtype=np.bool_)

    x_start = var_lb.astype(np.float64).copy()
    xB = A @ x_start

    cfull = np.zeros(N)
    cfull[:nx] = c

    if (xB < lb[nx:] - 1e-9).any() or (xB > ub[nx:] + 1e-9).any():
        raise ValueError(
            "solve_bounded_lp requires the all-lower-bound start to satisfy "
            "the row constraints"
        )

    zrow = np.empty(N)
    status, total_iters = _kernel(T, xB, basis, pos, at_upper, lb, ub, cfull, zrow, max_iter)
    if status != OPTIMAL:
        return LpResult(status, None, np.nan, total_iters)

    x = np.where(at_upper[:nx], ub[:nx], lb[:nx])
    for i in range(m):
        if basis[i] < nx:
            x[basis[i]] = xB[i]
    return LpResult(OPTIMAL, x, float(c @ x), total_iters, zrow[nx:].copy())
