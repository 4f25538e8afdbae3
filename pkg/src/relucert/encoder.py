"""Constraint encodings of a network around a seed input.

extract_region builds the convex region on which the network is affine (one
halfspace per ReLU unit, pairwise dominance constraints per pool window) plus
the logit expressions valid there. build_disjunctive exposes the same
machinery for an arbitrary activation pattern, which is what the exact
enumeration oracle iterates over.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .affine import AffineExpr, AffineVector, affine_dense, maxpool_fix, relu_fix
from .model import Conv, Dense, MaxPool, Network, Relu

SENSE_GE = ">="
SENSE_LE = "<="
SENSE_EQ = "="


@dataclass(frozen=True, eq=False)
class HalfspaceConstraint:
    """expr sense 0, e.g. (w.x + b) >= 0. origin tags the responsible layer/unit."""

    expr: AffineExpr
    sense: str
    origin: tuple

    def ge_form(self) -> tuple[np.ndarray, float]:
        """Coefficients (c, b) of the equivalent form c.x + b >= 0."""
        if self.sense == SENSE_GE:
            return self.expr.coeffs, self.expr.bias
        if self.sense == SENSE_LE:
            return -self.expr.coeffs, -self.expr.bias
        raise ValueError("equality constraint has no single >= form")

    def slack(self, x) -> float:
        """Signed satisfaction margin at x; >= 0 means satisfied."""
        value = self.expr.eval(x)
        if self.sense == SENSE_GE:
            return value
        if self.sense == SENSE_LE:
            return -value
        return -abs(value)


def constraint_matrix(constraints, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack inequality constraints as (A, b) with rows A x + b >= 0."""
    if not constraints:
        return np.zeros((0, n)), np.zeros(0)
    rows = [c.ge_form() for c in constraints]
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])


@dataclass(frozen=True, eq=False)
class LinearRegion:
    """The conjunction of halfspaces containing the seed, with logits valid on it."""

    constraints: tuple[HalfspaceConstraint, ...]
    logits: AffineVector
    seed: np.ndarray
    signature: tuple

    def min_slack(self, x) -> float:
        if not self.constraints:
            return float("inf")
        return min(c.slack(x) for c in self.constraints)


@dataclass(frozen=True)
class Site:
    """One disjunction site: a ReLU unit (2 branches) or a pool window (size branches)."""

    kind: str
    layer: int
    unit: int
    size: int


@dataclass(frozen=True, eq=False)
class DisjunctiveEncoding:
    """All activation-pattern choices of a network, instantiable one pattern at a time."""

    net: Network
    sites: tuple[Site, ...]

    def num_patterns(self) -> int:
        count = 1
        for site in self.sites:
            count *= site.size
        return count

    def patterns(self):
        """Iterate every activation pattern in a fixed deterministic order."""
        choices = [(False, True) if s.kind == "relu" else tuple(range(s.size))
                   for s in self.sites]
        return product(*choices)

    def instantiate(self, pattern) -> tuple[tuple[HalfspaceConstraint, ...], AffineVector]:
        """Constraints and logit expressions for one fixed activation pattern."""
        pattern = tuple(pattern)
        if len(pattern) != len(self.sites):
            raise ValueError(f"pattern length {len(pattern)} != sites {len(self.sites)}")
        cursor = 0

        def choose_relu(i, pre):
            nonlocal cursor
            signs = np.array([bool(p) for p in pattern[cursor:cursor + len(pre)]])
            cursor += len(pre)
            return signs

        def choose_pool(i, pre, windows):
            nonlocal cursor
            sel = np.array([int(p) for p in pattern[cursor:cursor + windows.shape[0]]])
            cursor += windows.shape[0]
            return sel

        constraints, logits, _ = _propagate(self.net, choose_relu, choose_pool)
        return constraints, logits


def _propagate(net: Network, choose_relu, choose_pool):
    """Run the symbolic pass, resolving each disjunction via the given choosers."""
    v = AffineVector.identity(net.input_dim)
    constraints: list[HalfspaceConstraint] = []
    signature: list = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, (Dense, Conv)):
            v = affine_dense(layer, v)
        elif isinstance(layer, Relu):
            signs = choose_relu(i, v)
            for j in range(len(v)):
                sense = SENSE_GE if signs[j] else SENSE_LE
                constraints.append(HalfspaceConstraint(v.expr(j), sense, (i, j)))
            signature.extend(bool(s) for s in signs)
            v = relu_fix(v, signs)
        elif isinstance(layer, MaxPool):
            windows = layer.windows
            sel = choose_pool(i, v, windows)
            if sel.min(initial=0) < 0 or (windows.shape[1] and sel.max(initial=0) >= windows.shape[1]):
                raise ValueError("pool selection outside its window")
            for w in range(windows.shape[0]):
                chosen = windows[w, sel[w]]
                for m in windows[w]:
                    if m == chosen:
                        continue
                    expr = v.expr(chosen) - v.expr(int(m))
                    constraints.append(HalfspaceConstraint(expr, SENSE_GE, (i, w)))
            signature.extend(int(s) for s in sel)
            v = maxpool_fix(v, sel, windows)
        else:
            raise ValueError(f"unsupported layer type {type(layer).__name__}")
    return tuple(constraints), v, tuple(signature)


def extract_region(net: Network, seed) -> LinearRegion:
    """Constraints and logits of the affine piece the seed lies in.

    ReLU units with seed pre-activation > 0 stay active (constraint expr >= 0);
    units at <= 0 are fixed inactive (expr <= 0, output zero). Pool windows fix
    their seed argmax, lowest index on ties.
    """
    seed = np.asarray(seed, dtype=float)
    if seed.shape != (net.input_dim,):
        raise ValueError(f"seed shape {seed.shape}, expected ({net.input_dim},)")

    def choose_relu(i, pre):
        return pre.eval(seed) > 0.0

    def choose_pool(i, pre, windows):
        values = pre.eval(seed)
        return np.argmax(values[windows], axis=1)

    constraints, logits, signature = _propagate(net, choose_relu, choose_pool)
    return LinearRegion(constraints, logits, seed, signature)


def _target_constraints(logits: AffineVector, target: int, margin: float):
    """logit_target - logit_other - margin >= 0 for every other label."""
    cons = []
    for other in range(len(logits)):
        if other == target:
            continue
        diff = logits.expr(target) - logits.expr(other)
        expr = AffineExpr(diff.coeffs, diff.bias - margin)
        cons.append(HalfspaceConstraint(expr, SENSE_GE, ("output", other)))
    return cons


def output_constraints(region: LinearRegion, target: int, margin: float = 0.0):
    """Constraints forcing the region's logits to rank target on top, with margin."""
    if not 0 <= target < len(region.logits):
        raise ValueError(f"target {target} out of range [0, {len(region.logits)})")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    return _target_constraints(region.logits, target, margin)


def build_disjunctive(net: Network) -> DisjunctiveEncoding:
    """Enumerate the network's disjunction sites without fixing a pattern."""
    dims = net.layer_dims()
    sites: list[Site] = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Relu):
            for j in range(dims[i]):
                sites.append(Site("relu", i, j, 2))
        elif isinstance(layer, MaxPool):
            for w in range(layer.windows.shape[0]):
                sites.append(Site("pool", i, w, layer.windows.shape[1]))
        elif not isinstance(layer, (Dense, Conv)):
            raise ValueError(f"unsupported layer type {type(layer).__name__}")
    return DisjunctiveEncoding(net, tuple(sites))
