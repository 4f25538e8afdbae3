"""Linear programs: representation, a self-contained simplex solver, and the
iterative working-set loop that adds violated constraints lazily.

The solver is a dense two-phase primal simplex with Bland's rule (smallest
index enters; min-ratio ties broken by smallest basic index), so runs are
deterministic and cycling-free. Free variables are handled by the standard
positive/negative split; inequality rows get slack or surplus columns and
artificials only where a starting basis is not available.

Tolerances: pivot 1e-9, feasibility 1e-7, lazy violation 1e-7.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
_RATIO_TIE = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"


class SimplexError(RuntimeError):
    """Internal solver failure (e.g. an unbounded program, which certification
    LPs can never produce because the objective is a nonnegative epsilon)."""


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    """a . z  (sense)  rhs, with sense one of '>=', '<=', '='."""

    a: np.ndarray
    sense: str
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "rhs", float(self.rhs))
        if self.sense not in (">=", "<=", "="):
            raise ValueError(f"bad sense {self.sense!r}")


@dataclass
class LPProblem:
    """Minimize objective . z subject to linear constraints and optional bounds."""

    num_vars: int
    objective: np.ndarray
    constraints: list[LinearConstraint] = field(default_factory=list)
    bounds: list[tuple[float | None, float | None] | None] | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.num_vars,):
            raise ValueError(
                f"objective shape {self.objective.shape}, expected ({self.num_vars},)")

    def add(self, a, sense, rhs):
        a = np.asarray(a, dtype=float)
        if a.shape != (self.num_vars,):
            raise ValueError(f"constraint length {a.shape} != num_vars {self.num_vars}")
        self.constraints.append(LinearConstraint(a, sense, rhs))


@dataclass(frozen=True, eq=False)
class LPSolution:
    status: str
    z: np.ndarray | None
    objective_value: float
    pivots: int


@dataclass
class LazyStats:
    """Diagnostics of one working-set solve."""

    outer_iterations: int = 0
    constraints_added: int = 0
    final_active_count: int = 0
    total_pivots: int = 0
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "constraints_added": self.constraints_added,
            "final_active_count": self.final_active_count,
            "total_pivots": self.total_pivots,
        }


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    column = T[:, col].copy()
    column[row] = 0.0
    T -= np.outer(column, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


def _iterate(T, basis, max_pivots, pivots):
    """Run simplex iterations on the tableau until optimal/unbounded/limit."""
    m = T.shape[0] - 1
    while True:
        reduced = T[-1, :-1]
        candidates = np.nonzero(reduced < -PIVOT_TOL)[0]
        if candidates.size == 0:
            return OPTIMAL, pivots
        if pivots >= max_pivots:
            return ITERATION_LIMIT, pivots
        col = int(candidates[0])  # Bland: smallest entering index
        column = T[:m, col]
        rows = np.nonzero(column > PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded", pivots
        rhs = np.maximum(T[rows, -1], 0.0)  # clip fp drift below zero
        ratios = rhs / column[rows]
        best = ratios.min()
        tie = rows[ratios <= best + _RATIO_TIE * (1.0 + abs(best))]
        leave = int(tie[np.argmin(basis[tie])])  # Bland: smallest basic index
        _pivot(T, basis, leave, col)
        pivots += 1


def _bounds_rows(problem):
    rows = []
    if problem.bounds is None:
        return rows
    if len(problem.bounds) != problem.num_vars:
        raise ValueError("bounds length != num_vars")
    for j, interval in enumerate(problem.bounds):
        if interval is None:
            continue
        lo, hi = interval
        e = np.zeros(problem.num_vars)
        e[j] = 1.0
        if lo is not None and math.isfinite(lo):
            rows.append(LinearConstraint(e, ">=", lo))
        if hi is not None and math.isfinite(hi):
            rows.append(LinearConstraint(e, "<=", hi))
    return rows


def simplex_solve(problem: LPProblem, max_pivots: int | None = None) -> LPSolution:
    """Solve the LP to an optimal basic feasible solution, deterministically."""
    n = problem.num_vars
    cons = list(problem.constraints) + _bounds_rows(problem)
    for c in cons:
        if c.a.shape != (n,):
            raise ValueError(f"constraint length {c.a.shape} != num_vars {n}")
        if not (np.all(np.isfinite(c.a)) and math.isfinite(c.rhs)):
            raise ValueError("non-finite constraint")
    if not np.all(np.isfinite(problem.objective)):
        raise ValueError("non-finite objective")

    m = len(cons)
    # free variables: z_j = y_j - y_{n+j}
    rows = []
    for c in cons:
        a2 = np.concatenate([c.a, -c.a])
        rhs, sense = c.rhs, c.sense
        if rhs < 0:
            a2, rhs = -a2, -rhs
            sense = {">=": "<=", "<=": ">=", "=": "="}[sense]
        rows.append((a2, sense, rhs))

    n_slack = sum(1 for _, sense, _ in rows if sense != "=")
    n_art = sum(1 for _, sense, _ in rows if sense != "<=")
    slack_start = 2 * n
    art_start = slack_start + n_slack
    ncols = art_start + n_art

    T = np.zeros((m + 1, ncols + 1))
    basis = np.zeros(m, dtype=int)
    si, ai = slack_start, art_start
    for i, (a2, sense, rhs) in enumerate(rows):
        T[i, : 2 * n] = a2
        T[i, -1] = rhs
        if sense == "<=":
            T[i, si] = 1.0
            basis[i] = si
            si += 1
        elif sense == ">=":
            T[i, si] = -1.0
            si += 1
            T[i, ai] = 1.0
            basis[i] = ai
            ai += 1
        else:
            T[i, ai] = 1.0
            basis[i] = ai
            ai += 1

    if max_pivots is None:
        max_pivots = 10_000 + 50 * (m + ncols)
    pivots = 0

    if n_art:
        # Phase 1: minimize the sum of artificials starting from the
        # slack/artificial basis.
        T[-1, art_start:ncols] = 1.0
        for i in range(m):
            if basis[i] >= art_start:
                T[-1] -= T[i]
        status, pivots = _iterate(T, basis, max_pivots, pivots)
        if status == ITERATION_LIMIT:
            return LPSolution(ITERATION_LIMIT, None, float("nan"), pivots)
        if status == "unbounded":
            raise SimplexError("phase-1 objective unbounded")
        if -T[-1, -1] > FEAS_TOL:
            return LPSolution(INFEASIBLE, None, float("inf"), pivots)
        # Drive leftover artificials out of the basis; rows where that is
        # impossible are redundant and dropped.
        drop = []
        for i in range(m):
            if basis[i] >= art_start:
                nz = np.nonzero(np.abs(T[i, :art_start]) > PIVOT_TOL)[0]
                if nz.size:
                    _pivot(T, basis, i, int(nz[0]))
                    pivots += 1
                else:
                    drop.append(i)
        if drop:
            T = np.delete(T, drop, axis=0)
            basis = np.delete(basis, drop)
            m -= len(drop)
        T = np.delete(T, np.s_[art_start:ncols], axis=1)
        ncols = art_start

    # Phase 2: the real objective over structural + slack columns.
    c_ext = np.zeros(ncols)
    c_ext[:n] = problem.objective
    c_ext[n: 2 * n] = -problem.objective
    T[-1, :-1] = c_ext
    T[-1, -1] = 0.0
    for i in range(m):
        cb = T[-1, basis[i]]
        if cb != 0.0:
            T[-1] -= cb * T[i]
    status, pivots = _iterate(T, basis, max_pivots, pivots)
    if status == ITERATION_LIMIT:
        return LPSolution(ITERATION_LIMIT, None, float("nan"), pivots)
    if status == "unbounded":
        raise SimplexError("objective unbounded below")

    y = np.zeros(ncols)
    y[basis] = np.maximum(T[:m, -1], 0.0)
    z = y[:n] - y[n: 2 * n]
    return LPSolution(OPTIMAL, z, float(problem.objective @ z), pivots)


def halfspace_to_constraint(h, num_vars: int) -> LinearConstraint:
    """Embed a halfspace over the leading x-variables into the LP variable space.

    Rows are rescaled to unit max coefficient, which keeps deep-network
    constraints well conditioned without changing the feasible set.
    """
    if h.sense == "=":
        coeffs, bias = h.expr.coeffs, h.expr.bias
        sense = "="
    else:
        coeffs, bias = h.ge_form()
        sense = ">="
    a = np.zeros(num_vars)
    a[: len(coeffs)] = coeffs
    scale = np.abs(coeffs).max() if len(coeffs) else 0.0
    if scale <= 0.0:
        scale = 1.0
    return LinearConstraint(a / scale, sense, -bias / scale)


def _default_checker(z, h) -> float:
    return h.slack(z[: len(h.expr.coeffs)])


def lazy_solve(core: LPProblem, pool, checker=None, violation_tol: float = FEAS_TOL,
               max_pivots: int | None = None) -> tuple[LPSolution, LazyStats]:
    """Solve core with pool constraints added only as the incumbent violates them.

    Every outer iteration solves the working LP, then appends all pool
    constraints violated by more than violation_tol. Because the working set
    only relaxes the full program, the final incumbent (feasible for the pool)
    is optimal for core + pool. Infeasibility of a working subset implies
    infeasibility of the full system.
    """
    if checker is None:
        checker = _default_checker
    start = time.perf_counter()
    work = LPProblem(core.num_vars, core.objective.copy(),
                     list(core.constraints), core.bounds)
    remaining = list(range(len(pool)))
    stats = LazyStats()
    while True:
        sol = simplex_solve(work, max_pivots)
        stats.outer_iterations += 1
        stats.total_pivots += sol.pivots
        if sol.status != OPTIMAL:
            break
        violated = [k for k in remaining if checker(sol.z, pool[k]) < -violation_tol]
        if not violated:
            break
        for k in violated:
            work.constraints.append(halfspace_to_constraint(pool[k], core.num_vars))
        hit = set(violated)
        remaining = [k for k in remaining if k not in hit]
        stats.constraints_added += len(violated)
    stats.final_active_count = len(work.constraints)
    stats.wall_time = time.perf_counter() - start
    return sol, stats


def linf_box_problem(seed, domain: tuple[float, float] | None = None) -> LPProblem:
    """Minimize epsilon = ||x - seed||_inf over variables z = (x_1..x_n, eps).

    Encoded with the standard 2n box rows x_i - seed_i <= eps and
    seed_i - x_i <= eps plus eps >= 0. Variables are free unless a domain
    interval is supplied, in which case each x_i is bounded to it.
    """
    seed = np.asarray(seed, dtype=float)
    n = seed.shape[0]
    nv = n + 1
    objective = np.zeros(nv)
    objective[n] = 1.0
    problem = LPProblem(nv, objective)
    e = np.zeros(nv)
    e[n] = 1.0
    problem.add(e, ">=", 0.0)
    for i in range(n):
        row = np.zeros(nv)
        row[n] = 1.0
        row[i] = -1.0
        problem.add(row, ">=", -seed[i])
        row = row.copy()
        row[i] = 1.0
        problem.add(row, ">=", seed[i])
    if domain is not None:
        lo, hi = domain
        problem.bounds = [(float(lo), float(hi))] * n + [None]
    return problem
