"""Ground-truth robustness on tiny networks.

exact_robustness enumerates every activation pattern of the disjunctive
encoding and minimizes the perturbation radius per pattern and target label,
so it realizes the unrestricted definition up to LP tolerance. grid_robustness
is an independent brute-force upper bound for low-dimensional inputs. Both
exist to sandwich the LP estimate in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import _target_constraints, build_disjunctive, constraint_matrix
from .lp import (OPTIMAL, LPProblem, halfspace_to_constraint, linf_box_problem,
                 simplex_solve)
from .model import Network, classify, forward_batch

_GRID_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class ExactResult:
    rho: float
    witness: np.ndarray | None
    pattern: tuple | None
    patterns_feasible: int
    patterns_total: int


def _signs_feasible(constraints, n: int) -> bool:
    problem = LPProblem(n, np.zeros(n))
    for h in constraints:
        problem.constraints.append(halfspace_to_constraint(h, n))
    return simplex_solve(problem).status == OPTIMAL


def _pattern_targets(net, seed, constraints, logits, targets, base_problem):
    """Min-epsilon solves of one pattern for each target; yields optimal ones."""
    for target in targets:
        problem = LPProblem(base_problem.num_vars, base_problem.objective,
                            list(base_problem.constraints), base_problem.bounds)
        for h in constraints:
            problem.constraints.append(halfspace_to_constraint(h, problem.num_vars))
        for h in _target_constraints(logits, target, 0.0):
            problem.constraints.append(halfspace_to_constraint(h, problem.num_vars))
        solution = simplex_solve(problem)
        if solution.status == OPTIMAL:
            yield target, max(solution.objective_value, 0.0), solution.z[: net.input_dim]


def pattern_robustness(net: Network, seed, pattern, encoding=None):
    """Min perturbation radius within one fixed activation pattern.

    Returns (rho, witness, target); rho is +inf when no target is reachable.
    """
    seed = np.asarray(seed, dtype=float)
    encoding = encoding or build_disjunctive(net)
    constraints, logits = encoding.instantiate(pattern)
    label = classify(net, seed)
    targets = [t for t in range(net.num_labels) if t != label]
    base = linf_box_problem(seed)
    best = (math.inf, None, None)
    for target, rho, witness in _pattern_targets(net, seed, constraints, logits,
                                                 targets, base):
        if rho < best[0]:
            best = (rho, witness, target)
    return best


def exact_robustness(net: Network, seed, max_sites: int = 16) -> ExactResult:
    """Exact pointwise robustness by full pattern enumeration.

    Refuses when the pattern count exceeds 2**max_sites; the per-pattern cost
    is a handful of small LPs, so the guard caps total work.
    """
    seed = np.asarray(seed, dtype=float)
    encoding = build_disjunctive(net)
    total = encoding.num_patterns()
    if total > 2 ** max_sites:
        raise ValueError(
            f"{len(encoding.sites)} sites give {total} patterns, over the"
            f" 2**{max_sites} enumeration guard")
    label = classify(net, seed)
    targets = [t for t in range(net.num_labels) if t != label]
    base = linf_box_problem(seed)
    n = net.input_dim
    feasible = 0
    best_rho, best_witness, best_pattern = math.inf, None, None
    for pattern in encoding.patterns():
        constraints, logits = encoding.instantiate(pattern)
        if not _signs_feasible(constraints, n):
            continue
        feasible += 1
        for _, rho, witness in _pattern_targets(net, seed, constraints, logits,
                                                targets, base):
            if rho < best_rho:
                best_rho, best_witness, best_pattern = rho, witness, pattern
    return ExactResult(best_rho, best_witness, best_pattern, feasible, total)


def grid_robustness(net: Network, seed, radius: float, resolution: float) -> float:
    """Smallest L-infinity distance to a label flip on a regular grid.

    An upper-bound oracle: never smaller than the exact value minus one grid
    step. Guarded to n <= 3 inputs because the grid is exponential in n.
    """
    seed = np.asarray(seed, dtype=float)
    n = seed.shape[0]
    if n > 3:
        raise ValueError(f"grid search limited to 3 input dims, got {n}")
    if radius <= 0 or resolution <= 0:
        raise ValueError("radius and resolution must be positive")
    label = classify(net, seed)
    steps = int(round(radius / resolution))
    offsets = np.arange(-steps, steps + 1) * resolution
    axes = np.meshgrid(*([offsets] * n), indexing="ij")
    deltas = np.stack([ax.ravel() for ax in axes], axis=1)
    best = math.inf
    for start in range(0, deltas.shape[0], _GRID_CHUNK):
        chunk = deltas[start: start + _GRID_CHUNK]
        labels = np.argmax(forward_batch(net, seed + chunk), axis=1)
        flipped = labels != label
        if flipped.any():
            dist = np.abs(chunk[flipped]).max(axis=1)
            best = min(best, float(dist.min()))
    return best


def _instantiations(net: Network):
    """Matrix form (A, b, W, c) of every pattern: sign rows A x + b >= 0 and
    logits W x + c."""
    encoding = build_disjunctive(net)
    out = []
    for pattern in encoding.patterns():
        constraints, logits = encoding.instantiate(pattern)
        A, b = constraint_matrix(constraints, net.input_dim)
        out.append((pattern, A, b, logits.coeffs, logits.bias))
    return out


def satisfiable_labels(net: Network, X, tol: float = 0.0) -> np.ndarray:
    """Boolean table (k, L): whether some activation pattern's constraints hold
    at each point with each output label winning (non-strictly)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {X.shape}, expected (k, {net.input_dim})")
    table = np.zeros((X.shape[0], net.num_labels), dtype=bool)
    for _, A, b, W, c in _instantiations(net):
        if A.shape[0]:
            signs_ok = (X @ A.T + b >= -tol).all(axis=1)
        else:
            signs_ok = np.ones(X.shape[0], dtype=bool)
        logits = X @ W.T + c
        wins = logits >= logits.max(axis=1, keepdims=True) - tol
        table |= signs_ok[:, None] & wins
    return table


def satisfiable_at(net: Network, x, label: int, tol: float = 0.0) -> bool:
    """Whether the disjunctive encoding admits label at the fixed input x."""
    return bool(satisfiable_labels(net, np.asarray(x, dtype=float)[None, :], tol)[0, label])
