"""Pointwise robustness estimates and adversarial example extraction.

The estimate restricts the search to the affine piece containing the seed:
minimize the L-infinity perturbation radius subject to the piece's halfspaces
(lazily enforced) and the constraints making a target label win. The result
overapproximates the true pointwise robustness because any feasible point of
the restricted program is a genuine adversarial example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoder import LinearRegion, extract_region, output_constraints
from .lp import (OPTIMAL, LazyStats, halfspace_to_constraint, lazy_solve,
                 linf_box_problem)
from .model import Network, classify, second_label

INFINITE_RHO = math.inf


@dataclass
class RobustnessRecord:
    """Per-seed certification result; rho_hat is +inf when the restricted
    program admits no adversarial example for any requested target."""

    seed_index: int
    seed_label: int
    target_label: int | None
    rho_hat: float
    adversarial: np.ndarray | None = None
    rounded_ok: bool | None = None
    lazy: LazyStats = field(default_factory=LazyStats)

    @property
    def found(self) -> bool:
        return math.isfinite(self.rho_hat)


def record_to_json(record: RobustnessRecord) -> dict:
    """One JSON object per record; timing kept under its own key so report
    diffs can ignore it."""
    return {
        "index": record.seed_index,
        "label": record.seed_label,
        "target": record.target_label,
        "rho": record.rho_hat if record.found else None,
        "adversarial": record.adversarial.tolist() if record.adversarial is not None else None,
        "rounded_ok": record.rounded_ok,
        "lazy": record.lazy.to_json(),
        "timing": {"wall_time": record.lazy.wall_time},
    }


def record_from_json(obj: dict) -> RobustnessRecord:
    lazy = LazyStats(**obj.get("lazy", {}))
    lazy.wall_time = obj.get("timing", {}).get("wall_time", 0.0)
    rho = obj.get("rho")
    adversarial = obj.get("adversarial")
    return RobustnessRecord(
        seed_index=obj.get("index", -1),
        seed_label=obj.get("label", -1),
        target_label=obj.get("target"),
        rho_hat=INFINITE_RHO if rho is None else float(rho),
        adversarial=np.asarray(adversarial, dtype=float) if adversarial is not None else None,
        rounded_ok=obj.get("rounded_ok"),
        lazy=lazy,
    )


def _restricted_lp(seed, region: LinearRegion, target: int, margin: float,
                   domain) -> tuple:
    core = linf_box_problem(seed, domain)
    for h in output_constraints(region, target, margin):
        core.constraints.append(halfspace_to_constraint(h, core.num_vars))
    return core


def _solve_target(net: Network, seed, region: LinearRegion, target: int,
                  margin: float, domain):
    core = _restricted_lp(seed, region, target, margin, domain)
    solution, stats = lazy_solve(core, region.constraints)
    return solution, stats


def pointwise_robustness(net: Network, seed, targets="second", margin: float = 0.0,
                         respect_domain: bool = False, seed_index: int = -1) -> RobustnessRecord:
    """Minimal L-infinity radius to an adversarial example inside the seed's region.

    targets: "second" (the runner-up label), "all" (minimum over every other
    label), or a fixed label index. A larger margin never shrinks the result.
    """
    seed = np.asarray(seed, dtype=float)
    if seed.shape != (net.input_dim,):
        raise ValueError(f"seed shape {seed.shape}, expected ({net.input_dim},)")
    if net.num_labels < 2:
        raise ValueError("certification needs at least two labels")
    label = classify(net, seed)
    if targets == "second":
        candidates = [second_label(net, seed)]
    elif targets == "all":
        candidates = [t for t in range(net.num_labels) if t != label]
    else:
        target = int(targets)
        if target == label:
            raise ValueError(f"fixed target {target} equals the predicted label")
        if not 0 <= target < net.num_labels:
            raise ValueError(f"target {target} out of range [0, {net.num_labels})")
        candidates = [target]

    domain = net.input_domain if respect_domain else None
    region = extract_region(net, seed)
    best = RobustnessRecord(seed_index, label, candidates[0] if len(candidates) == 1 else None,
                            INFINITE_RHO)
    for target in candidates:
        solution, stats = _solve_target(net, seed, region, target, margin, domain)
        if solution.status != OPTIMAL:
            continue
        rho = max(solution.objective_value, 0.0)
        if rho < best.rho_hat:
            best = RobustnessRecord(seed_index, label, target, rho,
                                    adversarial=solution.z[: net.input_dim], lazy=stats)
    return best


def extract_adversarial(record: RobustnessRecord, net: Network,
                        round_to_integers: bool = False):
    """The optimizer of the restricted program, optionally rounded to the
    integer grid and clamped to the input domain.

    Returns (x_adv, rounded_ok) where rounded_ok reports whether the rounded
    point still flips the predicted label (None when no rounding requested).
    """
    if not record.found or record.adversarial is None:
        raise ValueError("record has no adversarial example")
    x = np.array(record.adversarial, dtype=float)
    if not round_to_integers:
        return x, None
    rounded = np.rint(x)
    if net.input_domain is not None:
        rounded = np.clip(rounded, net.input_domain[0], net.input_domain[1])
    ok = classify(net, rounded) != record.seed_label
    record.rounded_ok = bool(ok)
    return rounded, bool(ok)


@dataclass(frozen=True)
class CertificateCheck:
    """Slack/geometry diagnostics of a finite record against its region."""

    min_slack: float
    norm_gap: float
    ranking_slack: float

    @property
    def ok(self) -> bool:
        return self.min_slack >= -1e-6 and self.norm_gap <= 1e-6 and self.ranking_slack >= -1e-6


def verify_record(net: Network, seed, record: RobustnessRecord,
                  margin: float = 0.0) -> CertificateCheck:
    """Re-derive the seed's region and check the recorded certificate against it."""
    if not record.found or record.adversarial is None:
        raise ValueError("nothing to verify on an infeasible record")
    seed = np.asarray(seed, dtype=float)
    region = extract_region(net, seed)
    x = record.adversarial
    slacks = [h.slack(x) for h in region.constraints]
    slacks += [h.slack(x) for h in output_constraints(region, record.target_label, margin)]
    min_slack = min(slacks) if slacks else math.inf
    norm_gap = abs(np.abs(x - seed).max() - record.rho_hat)
    logits = region.logits.eval(x)
    ranking = logits[record.target_label] - logits.max()
    return CertificateCheck(float(min_slack), float(norm_gap), float(ranking))
