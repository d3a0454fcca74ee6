"""Exact per-window battery schedule optimization.

The window problem maximizes forecast-priced revenue over an ordered set of
products subject to the storage constraints (energy range, power limits,
no simultaneous charge/discharge, efficiency-adjusted energy balance).
`solve_window` runs depth-first branch-and-bound on the per-product
charge/discharge binaries with the LP relaxation solved by the in-package
bounded-variable simplex; `brute_force_oracle` enumerates every binary
assignment and solves the remaining LPs with scipy (an independent method)
for testing.

Degenerate ties are broken toward minimum traded volume via a tiny
lexicographic penalty folded into the internal objective; reported
objectives are always the pure revenue value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EngineError, SizeLimitError
from .model import BessConfig, Product, ScheduleEntry
from . import simplex

AUCTION = "auction"
CID = "cid"

# weight of the secondary minimize-traded-volume objective
TIE_BREAK_KAPPA = 1e-9
# a product is branched when both its buy and sell exceed this
INTEGRALITY_TOL = 1e-9
_CLEAN_TOL = 1e-11
_MAX_NODES = 20_000
# bound-based pruning threshold; an order of magnitude under the guaranteed
# 1e-6 EUR absolute optimality gap
_PRUNE_GAP = 1e-7
# slack on the stored-energy state: chained float arithmetic may leave it
# a hair outside [0, e_max]
E0_TOL = 1e-9


@dataclass(frozen=True)
class WindowProblem:
    """One rolling-window optimization instance.

    `prev_position` holds the committed signed net power (buy-positive) per
    product from the previous step; all zeros for auction-form windows.
    `frozen_prefix` optionally records the dispatched (buy, sell) pairs of
    already-frozen earlier products that produced `e_initial`; it is carried
    for debug dumps only.
    """

    products: tuple[Product, ...]
    forecasts: tuple[float, ...]
    bess: BessConfig
    e_initial: float
    prev_position: tuple[float, ...] = ()
    frozen_prefix: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        products = tuple(self.products)
        forecasts = tuple(float(f) for f in self.forecasts)
        prev = tuple(float(v) for v in self.prev_position)
        if not prev:
            prev = (0.0,) * len(products)
        object.__setattr__(self, "products", products)
        object.__setattr__(self, "forecasts", forecasts)
        object.__setattr__(self, "prev_position", prev)

        if len(forecasts) != len(products):
            raise EngineError(
                f"{len(forecasts)} forecasts for {len(products)} products"
            )
        if len(prev) != len(products):
            raise EngineError(
                f"{len(prev)} previous positions for {len(products)} products"
            )
        if not all(np.isfinite(forecasts)):
            raise EngineError("non-finite forecast")
        pmax = max(self.bess.p_buy_max_mw, self.bess.p_sell_max_mw)
        for v in prev:
            if abs(v) > pmax + 1e-9:
                raise EngineError(f"previous position {v} exceeds power limit {pmax}")
        for a, b in zip(products, products[1:]):
            if b.delivery_start < a.delivery_end:
                raise EngineError(
                    f"window products overlap or are out of order: {a} then {b}"
                )

    @property
    def n(self) -> int:
        return len(self.products)


@dataclass(frozen=True)
class WindowSolution:
    schedule: tuple[ScheduleEntry, ...]
    objective: float
    status: str  # "optimal" | "infeasible"


@dataclass(frozen=True)
class RelaxedSolution:
    """Solution of the window LP with the exclusivity binaries dropped.

    May charge and discharge simultaneously; exists to show what the
    binaries rule out, and as the branch-and-bound root bound.
    """

    buys_mw: tuple[float, ...]
    sells_mw: tuple[float, ...]
    objective: float
    status: str


def _mode_arrays(prob: WindowProblem, mode: str):
    if mode not in (AUCTION, CID):
        raise EngineError(f"unknown mode {mode!r}")
    if mode == AUCTION and any(v != 0.0 for v in prob.prev_position):
        raise EngineError("auction mode requires all-zero previous positions")
    deltas = np.array([p.duration_hours for p in prob.products])
    prices = np.array(prob.forecasts, dtype=np.float64)
    return deltas, prices


def _bounds(prob: WindowProblem):
    n = prob.n
    bess = prob.bess
    lb_b = np.zeros(n)
    ub_b = np.full(n, bess.p_buy_max_mw)
    lb_s = np.zeros(n)
    ub_s = np.full(n, bess.p_sell_max_mw)
    return lb_b, ub_b, lb_s, ub_s


def _chain_matrix(deltas: np.ndarray, eta_c: float, eta_d: float) -> np.ndarray:
    """Rows k: cumulative stored-energy change after product k, vars [b; s]."""
    n = len(deltas)
    A = np.empty((n, 2 * n))
    A[:, :n] = np.tril(np.broadcast_to(eta_c * deltas, (n, n)))
    A[:, n:] = np.tril(np.broadcast_to(-deltas / eta_d, (n, n)))
    return A


def _composite_costs(deltas, prices):
    # maximize revenue, with a tiny penalty on traded volume to pick the
    # minimum-churn schedule among revenue ties
    cb = -prices * deltas - TIE_BREAK_KAPPA * deltas
    cs = prices * deltas - TIE_BREAK_KAPPA * deltas
    return np.concatenate([cb, cs])


def _reported_objective(prob, mode, prices, deltas, b, s) -> float:
    primary = float(np.dot(prices * deltas, s - b))
    if mode == CID:
        prev = np.array(prob.prev_position)
        primary += float(np.dot(prices * deltas, prev))
    return primary + 0.0


def _solve_milp_arrays(A, deltas, prices, lb_b, ub_b, lb_s, ub_s, e0, emax):
    """Branch and bound over charge/discharge exclusivity.

    `A` is the cumulative-energy chain matrix for `deltas` and the battery's
    efficiencies (see `_chain_matrix`); callers may cache it across solves.
    Returns (feasible, b, s, composite_objective).
    """
    n = len(deltas)
    row_lb = np.full(n, -e0)
    row_ub = np.full(n, emax - e0)
    c = _composite_costs(deltas, prices)

    # Negative prices reward charging and discharging the same product in
    # the relaxation (burning energy for cash), which makes the plain chain
    # relaxation uselessly weak. The exclusivity implies
    # b/p_buy_max + s/p_sell_max <= 1; adjoin that valid row for every
    # negative-priced product so the bound stays tight. The rows use the
    # root bounds, so the matrix is shared by all branch-and-bound nodes.
    neg = np.nonzero(prices < 0.0)[0]
    if len(neg):
        couple = np.zeros((len(neg), 2 * n))
        for r, i in enumerate(neg):
            couple[r, i] = 1.0 / ub_b[i] if ub_b[i] > 0 else 0.0
            couple[r, n + i] = 1.0 / ub_s[i] if ub_s[i] > 0 else 0.0
        A = np.vstack([A, couple])
        row_lb = np.concatenate([row_lb, np.zeros(len(neg))])
        row_ub = np.concatenate([row_ub, np.ones(len(neg))])

    def _node_lp(bounds):
        nlb_b, nub_b, nlb_s, nub_s = bounds
        return simplex.solve_bounded_lp(
            c,
            A,
            row_lb,
            row_ub,
            np.concatenate([nlb_b, nlb_s]),
            np.concatenate([nub_b, nub_s]),
        )

    coupled = np.zeros(n, dtype=bool)
    coupled[neg] = True

    def _integer_bound(res, nub_b, nub_s):
        """Lagrangian bound with exact two-segment product subproblems.

        Dualizing the energy rows at the node LP's optimal duals values each
        product by max(cash - lambda * energy); the LP credits the convex
        hull of the charge/discharge segments (simultaneous use), an integer
        schedule only one segment. The difference is a valid deduction from
        the LP bound, and it recovers exactly the spurious burn profit that
        negative prices create, so pruning works where the plain LP bound
        cannot.
        """
        lam = np.cumsum(res.duals[:n][::-1])[::-1]
        coef_b = c[:n] - eta_c_delta * lam
        coef_s = c[n:] + inv_eta_d_delta * lam
        vb = coef_b * nub_b
        vs = coef_s * nub_s
        seg = np.maximum(0.0, np.maximum(vb, vs))
        # hull value: box corners, clipped by the coupling cut where present
        hull = seg.copy()
        both = vb + vs
        free_corner = ~coupled | (nub_b * inv_pb + nub_s * inv_ps <= 1.0)
        np.maximum(hull, np.where(free_corner, both, -np.inf), out=hull)
        clipped = coupled & ~free_corner
        for i in np.nonzero(clipped)[0]:
            s_cap = min(nub_s[i], (1.0 - nub_b[i] * inv_pb[i]) / inv_ps[i])
            b_cap = min(nub_b[i], (1.0 - nub_s[i] * inv_ps[i]) / inv_pb[i])
            hull[i] = max(
                hull[i],
                coef_b[i] * nub_b[i] + coef_s[i] * max(s_cap, 0.0),
                coef_b[i] * max(b_cap, 0.0) + coef_s[i] * nub_s[i],
            )
        kappa = hull - seg
        kappa[kappa < 0.0] = 0.0
        return res.objective - float(kappa.sum())

    eta_c_delta = A[np.arange(n), np.arange(n)]          # eta_c * delta per product
    inv_eta_d_delta = -A[np.arange(n), n + np.arange(n)]  # delta / eta_d per product
    inv_pb = np.where(ub_b > 0, 1.0 / ub_b, 0.0)
    inv_ps = np.where(ub_s > 0, 1.0 / ub_s, 0.0)

    best_obj = -np.inf
    best_x = None
    nodes = 0
    stack = [(lb_b, ub_b, lb_s, ub_s)]
    while stack:
        node = stack.pop()
        nodes += 1
        if nodes > _MAX_NODES:
            raise EngineError("branch-and-bound node limit exceeded")
        res = _node_lp(node)
        if res.status == simplex.INFEASIBLE:
            continue
        if res.status != simplex.OPTIMAL:
            raise EngineError(f"window LP did not converge: {res.status_name}")
        if res.objective <= best_obj + _PRUNE_GAP:
            continue
        b = res.x[:n]
        s = res.x[n:]
        viol = np.minimum(b, s)
        i = int(np.argmax(viol))
        if viol[i] <= INTEGRALITY_TOL:
            best_obj = res.objective
            best_x = res.x
            continue
        node_bound = _integer_bound(res, node[1], node[3])
        if node_bound <= best_obj + _PRUNE_GAP:
            continue

        # Rounding dive: fixing every fractional product to its heavier side
        # yields a feasible schedule whose value seeds the incumbent, so the
        # bound can prune long before the tree bottoms out.
        dive = node
        for _ in range(3):
            dlb_b, dub_b, dlb_s, dub_s = dive
            db, ds = dub_b.copy(), dub_s.copy()
            frac = np.minimum(b, s) > INTEGRALITY_TOL
            for j in np.nonzero(frac)[0]:
                if b[j] >= s[j]:
                    ds[j] = 0.0
                else:
                    db[j] = 0.0
            dive = (dlb_b, db, dlb_s, ds)
            dres = _node_lp(dive)
            if dres.status != simplex.OPTIMAL:
                break
            b, s = dres.x[:n], dres.x[n:]
            if np.minimum(b, s).max() <= INTEGRALITY_TOL:
                if dres.objective > best_obj:
                    best_obj = dres.objective
                    best_x = dres.x
                break
        if node_bound <= best_obj + _PRUNE_GAP:
            continue

        b = res.x[:n]
        s = res.x[n:]
        # branch on the worst violator; explore the relaxation's heavier
        # side first (pushed last = popped first)
        nlb_b, nub_b, nlb_s, nub_s = node
        hi_s = nub_s.copy()
        hi_s[i] = 0.0  # charge only
        hi_b = nub_b.copy()
        hi_b[i] = 0.0  # discharge only
        charge_child = (nlb_b, nub_b, nlb_s, hi_s)
        discharge_child = (nlb_b, hi_b, nlb_s, nub_s)
        if b[i] >= s[i]:
            stack.append(discharge_child)
            stack.append(charge_child)
        else:
            stack.append(charge_child)
            stack.append(discharge_child)

    if best_x is None:
        return False, None, None, -np.inf
    return True, best_x[:n], best_x[n:], best_obj


def _clean_schedule(prob, b, s):
    """Clamp solver noise and rebuild the exact energy chain."""
    b = np.asarray(b, dtype=np.float64).copy()
    s = np.asarray(s, dtype=np.float64).copy()
    b[b < _CLEAN_TOL] = 0.0
    s[s < _CLEAN_TOL] = 0.0
    both = (b > 0) & (s > 0)
    for i in np.nonzero(both)[0]:
        if min(b[i], s[i]) > INTEGRALITY_TOL:
            raise EngineError("non-exclusive schedule survived branch and bound")
        if b[i] <= s[i]:
            b[i] = 0.0
        else:
            s[i] = 0.0
    bess = prob.bess
    entries = []
    e = prob.e_initial
    for i, p in enumerate(prob.products):
        e += (b[i] * bess.eta_c - s[i] / bess.eta_d) * p.duration_hours
        entries.append(ScheduleEntry(p, float(b[i]), float(s[i]), float(e)))
    return tuple(entries), b, s


def _empty_or_infeasible(prob: WindowProblem) -> WindowSolution | None:
    if not -E0_TOL <= prob.e_initial <= prob.bess.e_max_mwh + E0_TOL:
        return WindowSolution((), float("nan"), "infeasible")
    if prob.n == 0:
        return WindowSolution((), 0.0, "optimal")
    return None


def _clamped_e0(e_initial: float, e_max: float) -> float:
    return min(max(e_initial, 0.0), e_max)


def solve_window(prob: WindowProblem, mode: str) -> WindowSolution:
    """Globally optimal feasible schedule for one window (1e-6 EUR gap).

    In cid mode the objective values only the change against
    `prev_position`; with all-zero previous positions it coincides with the
    auction objective.
    """
    deltas, prices = _mode_arrays(prob, mode)
    early = _empty_or_infeasible(prob)
    if early is not None:
        return early
    lb_b, ub_b, lb_s, ub_s = _bounds(prob)
    A = _chain_matrix(deltas, prob.bess.eta_c, prob.bess.eta_d)
    feasible, b, s, _ = _solve_milp_arrays(
        A, deltas, prices, lb_b, ub_b, lb_s, ub_s,
        _clamped_e0(prob.e_initial, prob.bess.e_max_mwh), prob.bess.e_max_mwh,
    )
    if not feasible:
        return WindowSolution((), float("nan"), "infeasible")
    schedule, b, s = _clean_schedule(prob, b, s)
    return WindowSolution(schedule, _reported_objective(prob, mode, prices, deltas, b, s), "optimal")


def solve_lp_relaxation(prob: WindowProblem, mode: str) -> RelaxedSolution:
    """Window LP with the binaries dropped entirely (may charge while discharging)."""
    deltas, prices = _mode_arrays(prob, mode)
    early = _empty_or_infeasible(prob)
    if early is not None:
        return RelaxedSolution((), (), early.objective, early.status)
    lb_b, ub_b, lb_s, ub_s = _bounds(prob)
    n = prob.n
    e0 = _clamped_e0(prob.e_initial, prob.bess.e_max_mwh)
    res = simplex.solve_bounded_lp(
        _composite_costs(deltas, prices),
        _chain_matrix(deltas, prob.bess.eta_c, prob.bess.eta_d),
        np.full(n, -e0),
        np.full(n, prob.bess.e_max_mwh - e0),
        np.concatenate([lb_b, lb_s]),
        np.concatenate([ub_b, ub_s]),
    )
    if res.status == simplex.INFEASIBLE:
        return RelaxedSolution((), (), float("nan"), "infeasible")
    if res.status != simplex.OPTIMAL:
        raise EngineError(f"relaxation LP did not converge: {res.status_name}")
    b, s = res.x[:n], res.x[n:]
    return RelaxedSolution(
        tuple(b), tuple(s),
        _reported_objective(prob, mode, prices, deltas, b, s),
        "optimal",
    )


def brute_force_oracle(prob: WindowProblem, mode: str) -> WindowSolution:
    """Enumerate every charge/discharge assignment, solving each LP with scipy.

    Independent of `solve_window`'s simplex on purpose; limited to 12
    products.
    """
    from scipy.optimize import linprog

    if prob.n > 12:
        raise SizeLimitError(f"oracle limited to 12 products, got {prob.n}")
    deltas, prices = _mode_arrays(prob, mode)
    early = _empty_or_infeasible(prob)
    if early is not None:
        return early

    n = prob.n
    lb_b, ub_b, lb_s, ub_s = _bounds(prob)
    A = _chain_matrix(deltas, prob.bess.eta_c, prob.bess.eta_d)
    e0 = _clamped_e0(prob.e_initial, prob.bess.e_max_mwh)
    A_ub = np.vstack([A, -A])
    b_ub = np.concatenate([
        np.full(n, prob.bess.e_max_mwh - e0),
        np.full(n, e0),
    ])
    c_min = -_composite_costs(deltas, prices)

    best = None
    best_obj = -np.inf
    for mask in range(1 << n):
        bounds = []
        for i in range(n):
            bounds.append((0.0, ub_b[i]) if (mask >> i) & 1 else (0.0, 0.0))
        for i in range(n):
            bounds.append((0.0, 0.0) if (mask >> i) & 1 else (0.0, ub_s[i]))
        res = linprog(c_min, A_ub=A_ub, b_ub=b_ub, bounds=bounds,
                      method="highs", options={"presolve": False})
        if not res.success:
            continue
        obj = -res.fun
        if obj > best_obj + 1e-12:
            best_obj = obj
            best = res.x
    if best is None:
        return WindowSolution((), float("nan"), "infeasible")
    schedule, b, s = _clean_schedule(prob, best[:n], best[n:])
    return WindowSolution(schedule, _reported_objective(prob, mode, prices, deltas, b, s), "optimal")


def debug_dump(prob: WindowProblem, sol: WindowSolution) -> str:
    """JSON document of a problem/solution pair for bug reports."""
    doc = {
        "problem": {
            "products": [
                {"delivery_start": p.delivery_start.isoformat(), "duration_min": p.duration_min}
                for p in prob.products
            ],
            "forecasts_eur_mwh": list(prob.forecasts),
            "bess": {
                "e_max_mwh": prob.bess.e_max_mwh,
                "p_buy_max_mw": prob.bess.p_buy_max_mw,
                "p_sell_max_mw": prob.bess.p_sell_max_mw,
                "eta_c": prob.bess.eta_c,
                "eta_d": prob.bess.eta_d,
            },
            "e_initial_mwh": prob.e_initial,
            "prev_position_mw": list(prob.prev_position),
            "frozen_prefix": [list(x) for x in prob.frozen_prefix],
        },
        "solution": {
            "status": sol.status,
            "objective_eur": None if sol.status != "optimal" else sol.objective,
            "schedule": [
                {
                    "delivery_start": e.product.delivery_start.isoformat(),
                    "duration_min": e.product.duration_min,
                    "buy_mw": e.buy_mw,
                    "sell_mw": e.sell_mw,
                    "energy_end_mwh": e.energy_end_mwh,
                }
                for e in sol.schedule
            ],
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)
