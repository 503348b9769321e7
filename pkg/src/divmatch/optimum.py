"""Offline optimum estimate and the acceptance threshold derived from it.

The real-valued relaxation

    max  sum_j sum_k sqrt(w_kj y_kj)   s.t.  sum_k y_kj <= R+_j,  y >= 0

separates by team. Stationarity gives y_kj proportional to w_kj, hence the
closed form y_kj = R+_j w_kj / W_j and OPT* = sum_j sqrt(R+_j W_j) with
W_j = sum_k w_kj. ``verify_relaxation`` re-derives optimality independently
(KKT residuals plus a local perturbation search) so tests never trust the
closed form on its own.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

from .core import Instance, ValidationIssue
from .objective import cluster_marginal_sequence

EPS = 1e-9


@dataclass(frozen=True)
class RelaxationResult:
    # (cluster, team id) -> fractional head count
    y: dict[tuple[int, str], float]
    opt_star: float
    attribute: str = "cluster"
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class ThresholdPolicy:
    """Algorithm parameters; ``cutoff`` is the marginal gain per unit cost needed on
    a knapsack whose bound equals ``b``."""

    alpha: float
    v: float
    d: int
    b: float
    cutoff: float = field(init=False)

    def __post_init__(self) -> None:
        if not (self.v > 0 and self.b > 0 and self.d >= 1):
            raise ValueError(f"invalid policy v={self.v} b={self.b} d={self.d}")
        object.__setattr__(self, "cutoff", 2.0 * self.v / (self.b * (1 + 2 * self.d)))

    @classmethod
    def from_alpha(cls, opt_star: float, alpha: float, b: float, d: int) -> ThresholdPolicy:
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        return cls(alpha, alpha * opt_star, d, b)

    @classmethod
    def from_v(cls, v: float, b: float, d: int, opt_star: float | None = None) -> ThresholdPolicy:
        alpha = v / opt_star if opt_star else 1.0
        return cls(alpha, v, d, b)

    def as_dict(self) -> dict[str, float]:
        return {"alpha": self.alpha, "v": self.v, "d": self.d, "b": self.b, "cutoff": self.cutoff}


def solve_relaxation(instance: Instance, attribute: int = 0) -> RelaxationResult:
    """Closed-form optimum of the relaxation for one attribute's weights."""
    attr = instance.attributes[attribute]
    y: dict[tuple[int, str], float] = {}
    opt = 0.0
    warnings = []
    for j, team in enumerate(instance.teams):
        col = [attr.weights[k][j] for k in range(attr.k)]
        total = sum(col)
        if total <= 0.0:
            warnings.append(f"team {team.id} has all-zero weights")
        for k, w in enumerate(col):
            y[(k, team.id)] = team.capacity_max * w / total if total > 0 else 0.0
        opt += math.sqrt(team.capacity_max * total)
    return RelaxationResult(y, opt, attr.name, tuple(warnings))


def relaxation_bound(instance: Instance) -> float:
    """Mix-weighted sum of per-attribute relaxations; equals OPT* for one attribute."""
    return sum(a.mix * solve_relaxation(instance, i).opt_star for i, a in enumerate(instance.attributes))


def _team_objective(ws: Sequence[float], ys: Sequence[float]) -> float:
    return sum(math.sqrt(max(w * y, 0.0)) for w, y in zip(ws, ys))


def verify_relaxation(
    result: RelaxationResult, instance: Instance, attribute: int = 0, step: float = 1e-3
) -> list[ValidationIssue]:
    """Independent optimality check: feasibility, KKT stationarity, perturbations."""
    attr = instance.attributes[attribute]
    issues: list[ValidationIssue] = []
    recomputed = 0.0
    for j, team in enumerate(instance.teams):
        ws = [attr.weights[k][j] for k in range(attr.k)]
        ys = [result.y.get((k, team.id), 0.0) for k in range(attr.k)]
        cap = team.capacity_max
        if any(y < -EPS for y in ys) or sum(ys) > cap + EPS:
            issues.append(ValidationIssue("infeasible", f"team {team.id}: sum y = {sum(ys):.6g} > {cap}"))
            continue
        recomputed += _team_objective(ws, ys)
        if sum(ws) <= 0:
            continue
        # gradient 0.5 sqrt(w/y) must be equal on the support and the budget tight
        if any(w > 0 and y <= EPS for w, y in zip(ws, ys)):
            issues.append(ValidationIssue("kkt_violation", f"team {team.id}: positive-weight cluster left empty"))
            continue
        grads = [math.sqrt(w / y) for w, y in zip(ws, ys) if w > 0]
        if max(grads) - min(grads) > 1e-6 * max(1.0, max(grads)):
            issues.append(ValidationIssue("kkt_violation", f"team {team.id}: unequal marginal slopes {grads}"))
            continue
        if sum(ys) < cap - 1e-6:
            issues.append(ValidationIssue("kkt_violation", f"team {team.id}: capacity slack {cap - sum(ys):.3g}"))
            continue
        base = _team_objective(ws, ys)
        for src, dst in itertools.permutations(range(attr.k), 2):
            moved = min(step, ys[src])
            trial = list(ys)
            trial[src] -= moved
            trial[dst] += moved
            if _team_objective(ws, trial) > base + 1e-12:
                issues.append(ValidationIssue("kkt_violation", f"team {team.id}: shifting {src}->{dst} improves"))
                break
    if not issues and abs(recomputed - result.opt_star) > 1e-9 * max(1.0, recomputed):
        issues.append(ValidationIssue("kkt_violation", f"opt_star {result.opt_star} != objective {recomputed}"))
    return issues


def compute_df_quota(weights: Sequence[float], quota: int) -> float:
    """R- th largest gain among the merged per-cluster marginal sequences."""
    if quota < 1:
        raise ValueError("quota must be >= 1")
    gains = []
    for w in weights:
        if w > 0:
            gains.extend(cluster_marginal_sequence(w, quota))
    if len(gains) < quota:
        raise ValueError(f"quota {quota} exceeds the {len(gains)} available marginals")
    gains.sort(reverse=True)
    return gains[quota - 1]


def policy_for_quota(opt_star: float, df: float, b: float, d: int) -> ThresholdPolicy:
    """Largest v <= OPT* whose cutoff still admits every gain >= df."""
    if min(opt_star, df, b) <= 0 or d < 1:
        raise ValueError("opt_star, df, b and d must be positive")
    v = min(opt_star, df * b * (1 + 2 * d) / 2.0)
    return ThresholdPolicy(v / opt_star, v, d, b)


def reference_bound(instance: Instance) -> float:
    """The policy's b: the smallest team capacity (all of them in uniform instances)."""
    return float(min(t.capacity_max for t in instance.teams))


def quota_policy(instance: Instance, opt_star: float | None = None) -> ThresholdPolicy:
    """Quota-guaranteeing policy for single-attribute instances with per-team quotas.

    Team knapsacks are normalised to the reference bound b, so team j faces an
    effective cutoff cutoff * b / R+_j. Each team with a quota contributes the
    cap df_j * R+_j * (1 + 2d) / 2 on v; the tightest cap wins.
    """
    if len(instance.attributes) != 1:
        raise ValueError("quota policy is defined for single-attribute instances")
    opt = relaxation_bound(instance) if opt_star is None else opt_star
    attr = instance.attributes[0]
    b = reference_bound(instance)
    d = instance.d
    v = opt
    for j, team in enumerate(instance.teams):
        if team.quota_min < 1:
            continue
        df = compute_df_quota([attr.weights[k][j] for k in range(attr.k)], team.quota_min)
        v = min(v, df * team.capacity_max * (1 + 2 * d) / 2.0)
    return ThresholdPolicy(v / opt, v, d, b)


def alpha_policy(instance: Instance, alpha: float) -> ThresholdPolicy:
    return ThresholdPolicy.from_alpha(relaxation_bound(instance), alpha, reference_bound(instance), instance.d)
