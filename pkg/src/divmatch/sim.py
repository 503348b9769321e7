"""Experiment harness: arrival generators, seeded multi-run drivers, exact
multinomial expectations and the reproduction drivers built on them."""

from __future__ import annotations

import itertools
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Literal, Mapping, Sequence

import numpy as np

from .core import (
    Attribute,
    AttributeSet,
    Instance,
    Person,
    TeamSpec,
    team_knapsacks,
)
from .metrics import RunReport, build_report
from .optimum import ThresholdPolicy, alpha_policy, quota_policy, reference_bound, relaxation_bound
from .oracle import brute_force_offline, fcfs_state
from .stream import EdgeOrder, run_stream

GENERATOR = "numpy.random.default_rng/PCG64"
MAX_ENUMERATION = 10**7

Ordering = Literal["random", "given", "worst_case"]


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ArrivalModel:
    """Independent per-attribute cluster draws for ``m`` arrivals.

    ``theta`` maps attribute name to its cluster probabilities. ``labels`` is
    the replayed sequence for ``ordering="given"`` (one label dict per person).
    """

    theta: Mapping[str, tuple[float, ...]]
    m: int
    seed: int = 0
    ordering: Ordering = "random"
    labels: tuple[Mapping[str, int], ...] = ()
    max_teams: int | None = None

    def __post_init__(self) -> None:
        if self.m < 0:
            raise ValueError("m must be >= 0")
        for name, th in self.theta.items():
            if any(p < 0 for p in th) or abs(sum(th) - 1.0) > 1e-12:
                raise ValueError(f"theta for {name!r} must be a probability vector, got {th}")
        if self.ordering not in ("random", "given", "worst_case"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    @classmethod
    def single(cls, theta: Sequence[float], m: int, seed: int = 0, name: str = "cluster", **kw: Any) -> ArrivalModel:
        return cls({name: tuple(float(p) for p in theta)}, m, seed, **kw)


@dataclass(frozen=True)
class ExperimentConfig:
    instance: Instance
    arrivals: ArrivalModel
    # a float alpha, or "quota" for the quota-guaranteeing threshold
    alpha: float | Literal["quota"] = "quota"
    v: float | None = None
    runs: int = 100
    baseline: bool = True
    oracle: bool = False
    edge_order: EdgeOrder = "gain"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")

    def policy(self) -> ThresholdPolicy:
        inst = self.instance
        if self.v is not None:
            return ThresholdPolicy.from_v(self.v, reference_bound(inst), inst.d, relaxation_bound(inst))
        if self.alpha == "quota":
            return quota_policy(inst)
        return alpha_policy(inst, float(self.alpha))


# -- arrivals -------------------------------------------------------------------


def _first_marginal(instance: Instance, labels: Mapping[str, int]) -> float:
    """Mean over teams of the empty-team gain of a person with these labels."""
    total = 0.0
    for attr in instance.attributes:
        k = labels[attr.name]
        total += attr.mix * sum(math.sqrt(w) for w in attr.weights[k]) / instance.n_teams
    return total


def sample_arrivals(model: ArrivalModel, instance: Instance | None = None) -> list[Person]:
    """Draw ``model.m`` people; worst_case orders lowest first-marginal clusters first."""
    if model.ordering == "given":
        rows = model.labels[: model.m]
    else:
        rng = np.random.default_rng(model.seed)
        draws = {
            name: rng.choice(len(th), size=model.m, p=np.asarray(th)) if model.m else np.zeros(0, int)
            for name, th in model.theta.items()
        }
        rows = [{name: int(draws[name][i]) for name in model.theta} for i in range(model.m)]
        if model.ordering == "worst_case":
            if instance is None:
                raise ValueError("worst_case ordering needs the instance weights")
            rows = sorted(rows, key=lambda r: _first_marginal(instance, r))
    width = len(str(max(len(rows), 1)))
    return [Person(f"P{i + 1:0{width}d}", dict(r), max_teams=model.max_teams) for i, r in enumerate(rows)]


def multinomial_prob(counts: Sequence[int], theta: Sequence[float]) -> float:
    if len(counts) != len(theta):
        raise ValueError("counts and theta differ in length")
    log_p = math.lgamma(sum(counts) + 1)
    for c, p in zip(counts, theta):
        if c == 0:
            continue
        if p <= 0:
            return 0.0
        log_p += c * math.log(p) - math.lgamma(c + 1)
    return math.exp(log_p)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def expected_accepted(theta: Sequence[float], caps: Sequence[int], m: int) -> float:
    """E[sum_k min(count_k, cap_k)] for multinomial(m, theta), by exact enumeration."""
    if len(theta) != len(caps) or any(c < 0 for c in caps):
        raise ValueError("caps must be nonnegative and match theta")
    terms = math.comb(m + len(theta) - 1, len(theta) - 1)
    if terms > MAX_ENUMERATION:
        raise EnumerationTooLarge(f"{terms} count vectors; use a Monte Carlo estimate instead")
    return sum(
        multinomial_prob(counts, theta) * sum(min(c, cap) for c, cap in zip(counts, caps))
        for counts in _compositions(m, len(theta))
    )


# -- experiment drivers ---------------------------------------------------------


def _one_run(config: ExperimentConfig, policy: ThresholdPolicy, run: int) -> RunReport:
    inst = config.instance
    model = replace(config.arrivals, seed=config.arrivals.seed + run)
    arrivals = sample_arrivals(model, inst)
    result = run_stream(inst, policy, arrivals, config.edge_order)
    baseline, base_used = fcfs_state(inst, arrivals) if config.baseline else (None, None)
    oracle_value = brute_force_offline(inst, arrivals).value if config.oracle else None
    return build_report(result.state, result.interviews_used, baseline, base_used, oracle_value)


def _run_chunk(args: tuple[ExperimentConfig, ThresholdPolicy, list[int]]) -> list[tuple[int, RunReport]]:
    config, policy, runs = args
    return [(r, _one_run(config, policy, r)) for r in runs]


@dataclass
class ExperimentResult:
    policy: ThresholdPolicy
    reports: list[RunReport]
    aggregate: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    generator: str = GENERATOR


def _median(xs: Sequence[float]) -> float | None:
    xs = [x for x in xs if x is not None]
    return float(statistics.median(xs)) if xs else None


def _mean(xs: Sequence[float]) -> float | None:
    xs = [x for x in xs if x is not None]
    return float(statistics.fmean(xs)) if xs else None


def aggregate_reports(reports: Sequence[RunReport], names: Sequence[str]) -> dict[str, Any]:
    agg: dict[str, Any] = {
        "runs": len(reports),
        "median_utility": _median([r.utility for r in reports]),
        "mean_utility": _mean([r.utility for r in reports]),
        "median_interviews": _median([r.interviews_used for r in reports]),
        "mean_interviews": _mean([r.interviews_used for r in reports]),
        "max_interviews": max(r.interviews_used for r in reports),
        "total_violations": sum(r.violations for r in reports),
        "runs_with_violations": sum(1 for r in reports if r.violations),
        "median_pod_num": _median([r.pod_num for r in reports]),
        "mean_pod_num": _mean([r.pod_num for r in reports]),
        "median_pod_util": _median([r.pod_util for r in reports]),
        "median_competitive_ratio": _median([r.competitive_ratio for r in reports]),
    }
    for n in names:
        all_teams = [e for r in reports for e in r.team_entropy[n].values()]
        agg[f"median_team_entropy:{n}"] = _median(all_teams)
        agg[f"mean_entropy:{n}"] = _mean([r.mean_entropy[n] for r in reports])
        agg[f"mean_baseline_entropy:{n}"] = _mean([r.baseline_mean_entropy.get(n) for r in reports])
        agg[f"mean_entropy_gain:{n}"] = _mean([r.entropy_gain.get(n) for r in reports])
    return agg


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Seeded runs (seed + run index); results are ordered by run index."""
    policy = config.policy()
    indices = list(range(config.runs))
    if config.workers > 1:
        chunks = [indices[i :: config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(config.workers) as pool:
            pairs = [p for chunk in pool.map(_run_chunk, [(config, policy, c) for c in chunks]) for p in chunk]
    else:
        pairs = _run_chunk((config, policy, indices))
    reports = [rep for _, rep in sorted(pairs, key=lambda p: p[0])]
    agg = aggregate_reports(reports, config.instance.attributes.names)
    return ExperimentResult(policy, reports, agg, config.arrivals.seed)


def estimate_interviews_to_fill(config: ExperimentConfig, runs: int | None = None) -> dict[str, Any]:
    cfg = replace(config, runs=runs or config.runs, oracle=False)
    res = run_experiment(cfg)
    a = res.aggregate
    return {
        "mean": a["mean_interviews"],
        "median": a["median_interviews"],
        "max": a["max_interviews"],
        "violations": a["total_violations"],
        "runs_with_violations": a["runs_with_violations"],
        "median_pod_num": a["median_pod_num"],
    }


def alpha_sweep(config: ExperimentConfig, alphas: Sequence[float]) -> list[dict[str, Any]]:
    """Utility / entropy / interview medians per alpha."""
    rows = []
    name = config.instance.attributes.names[0]
    for alpha in alphas:
        res = run_experiment(replace(config, alpha=float(alpha), v=None))
        a = res.aggregate
        rows.append(
            {
                "alpha": float(alpha),
                "cutoff": res.policy.cutoff,
                "median_utility": a["median_utility"],
                "median_team_entropy": a[f"median_team_entropy:{name}"],
                "median_interviews": a["median_interviews"],
                "total_violations": a["total_violations"],
            }
        )
    return rows


def theta_grid(config: ExperimentConfig, step: float = 0.1) -> list[dict[str, float]]:
    """Median interviews and violation rate over a grid of 3-cluster theta (theta_2 = 1 - theta_0 - theta_1)."""
    name = config.instance.attributes.names[0]
    n = round(1 / step)
    rows = []
    for i, j in itertools.product(range(n + 1), repeat=2):
        if i + j > n:
            continue
        th = (i / n, j / n, (n - i - j) / n)
        model = replace(config.arrivals, theta={name: th})
        res = run_experiment(replace(config, arrivals=model, oracle=False))
        teams = config.instance.n_teams * res.aggregate["runs"]
        rows.append(
            {
                "theta_0": th[0],
                "theta_1": th[1],
                "median_interviews": res.aggregate["median_interviews"],
                "violation_rate": res.aggregate["total_violations"] / teams,
            }
        )
    return rows


# -- multi-attribute roster -----------------------------------------------------

COUNTRY_COUNTS = (20, 10, 10, 5, 5)
FEMALE_SHARE = 0.4
TEAM_CAPS = (3,) * 14 + (4,) * 16 + (5,) * 10
PERSON_CAPS = (4,) * 17 + (5,) * 18 + (6,) * 15
CAP_STRIDE = 7


def multi_attribute_instance(mix: float = 0.5) -> Instance:
    teams = tuple(TeamSpec(f"T{j + 1:02d}", c, c) for j, c in enumerate(TEAM_CAPS))
    ones = lambda k: tuple(tuple(1.0 for _ in teams) for _ in range(k))  # noqa: E731
    attrs = AttributeSet(
        (
            Attribute("country", tuple(f"C{i + 1}" for i in range(len(COUNTRY_COUNTS))), ones(5), mix),
            Attribute("gender", ("M", "F"), ones(2), 1.0 - mix),
        )
    )
    return Instance(teams, attrs, team_knapsacks(teams), sum(COUNTRY_COUNTS))


def multi_attribute_roster() -> list[Person]:
    """Canonical roster: sorted by country, then gender, then index."""
    rows = []
    for c, n in enumerate(COUNTRY_COUNTS):
        females = round(n * FEMALE_SHARE)
        rows += [(c, 0)] * (n - females) + [(c, 1)] * females
    caps = sorted(PERSON_CAPS)
    n = len(rows)
    if n != len(caps) or math.gcd(CAP_STRIDE, n) != 1:
        raise ValueError("roster inconsistent with stated counts")
    return [
        Person(f"W{i + 1:02d}", {"country": c, "gender": g}, max_teams=caps[(CAP_STRIDE * i) % n])
        for i, (c, g) in enumerate(rows)
    ]


@dataclass(frozen=True)
class MultiAttributeConfig:
    runs: int = 100
    seed: int = 0
    alpha: float = 0.53
    mix: float = 0.5
    edge_order: EdgeOrder = "team"


def run_multi_attribute_experiment(config: MultiAttributeConfig = MultiAttributeConfig()) -> dict[str, Any]:
    inst = multi_attribute_instance(config.mix)
    roster = multi_attribute_roster()
    policy = alpha_policy(inst, config.alpha)
    reports: list[RunReport] = []
    unfilled = 0
    for r in range(config.runs):
        order = np.random.default_rng(config.seed + r).permutation(len(roster))
        arrivals = [roster[i] for i in order]
        result = run_stream(inst, policy, arrivals, config.edge_order)
        base, base_used = fcfs_state(inst, arrivals)
        reports.append(build_report(result.state, result.interviews_used, base, base_used))
        unfilled += sum(1 for load, t in zip(result.state.team_load, inst.teams) if load < t.capacity_max)
    names = inst.attributes.names
    agg = aggregate_reports(reports, names)
    for n in names:
        agg[f"runs_diverse_above_baseline:{n}"] = sum(
            1 for r in reports if r.mean_entropy[n] > r.baseline_mean_entropy[n]
        )
    agg["runs_diverse_above_baseline:all"] = sum(
        1 for r in reports if all(r.mean_entropy[n] > r.baseline_mean_entropy[n] for n in names)
    )
    agg["unfilled_teams"] = unfilled
    return {
        "policy": policy.as_dict(),
        "seed": config.seed,
        "generator": GENERATOR,
        "edge_order": config.edge_order,
        "aggregate": agg,
        "reports": reports,
    }
