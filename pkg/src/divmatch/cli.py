"""Command-line front end.

    divmatch opt INSTANCE
    divmatch stream INSTANCE ARRIVALS [--alpha A | --v V]
    divmatch simulate CONFIG [--runs N] [--plot-data PATH]
    divmatch oracle INSTANCE POOL [--method brute|greedy|fcfs]

Exit codes: 0 success, 2 unreadable or malformed input, 3 invalid instance or
arrivals, 4 oracle search space too large.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .core import (
    Instance,
    InvalidInstance,
    Person,
    ValidationIssue,
    check,
    check_person,
    instance_from_dict,
)
from .metrics import build_report
from .optimum import (
    ThresholdPolicy,
    alpha_policy,
    compute_df_quota,
    quota_policy,
    reference_bound,
    relaxation_bound,
    solve_relaxation,
)
from .oracle import SearchSpaceTooLarge, brute_force_offline, fcfs_baseline, fcfs_state, offline_greedy
from .sim import (
    GENERATOR,
    ArrivalModel,
    ExperimentConfig,
    MultiAttributeConfig,
    alpha_sweep,
    run_experiment,
    run_multi_attribute_experiment,
    theta_grid,
)
from .stream import run_stream

SCHEMA_RESULTS = "divmatch.results/1"
DATA_DIR = Path(__file__).parent / "data"

EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_SEARCH = 4


class InputError(Exception):
    """Unreadable or malformed input file (exit 2)."""


# -- file formats ---------------------------------------------------------------


def resolve(path: str | Path, base: Path | None = None) -> Path:
    """Paths starting with ``data:`` name bundled fixtures; relative paths resolve against ``base``."""
    s = str(path)
    if s.startswith("data:"):
        return DATA_DIR / s[5:]
    p = Path(s)
    if not p.is_absolute() and base is not None and not p.exists():
        return base / p
    return p


def load_instance(path: str | Path) -> Instance:
    try:
        doc = json.loads(resolve(path).read_text())
        inst = instance_from_dict(doc)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InputError(f"cannot read instance {path}: {exc}") from exc
    return check(inst)


def parse_arrivals(text: str, instance: Instance) -> list[Person]:
    """Rows ``person_id, attr:cluster, ..., [max_teams]``; '#' starts a comment."""
    people = []
    seen: set[str] = set()
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not cells or not cells[0] or cells[0].startswith("#"):
            continue
        if cells[0] in ("id", "person_id"):
            continue
        pid, rest = cells[0], [c for c in cells[1:] if c]
        max_teams = None
        if rest and ":" not in rest[-1]:
            try:
                max_teams = int(rest.pop())
            except ValueError:
                raise InputError(f"line {lineno}: bad max_teams {cells[-1]!r}") from None
        labels: dict[str, int] = {}
        for cell in rest:
            if ":" not in cell:
                raise InputError(f"line {lineno}: expected attribute:cluster, got {cell!r}")
            name, label = (s.strip() for s in cell.split(":", 1))
            if name not in instance.attributes.names:
                raise InvalidInstance([ValidationIssue("unknown_attribute", f"line {lineno}: {name!r}")])
            attr = instance.attributes[instance.attributes.index(name)]
            try:
                labels[name] = attr.cluster_id(label)
            except KeyError as exc:
                raise InvalidInstance([ValidationIssue("unknown_cluster", f"line {lineno}: {exc.args[0]}")]) from None
        if pid in seen:
            raise InvalidInstance([ValidationIssue("duplicate_person", f"line {lineno}: {pid!r}")])
        seen.add(pid)
        person = Person(pid, labels, max_teams=max_teams)
        check_person(instance, person)
        people.append(person)
    return people


def load_arrivals(path: str | Path, instance: Instance) -> list[Person]:
    try:
        text = resolve(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read arrivals {path}: {exc}") from exc
    return parse_arrivals(text, instance)


def _clean(obj: Any) -> Any:
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    return obj


def results_document(command: str, body: dict[str, Any], instance: Instance | None = None) -> dict[str, Any]:
    doc = {"schema": SCHEMA_RESULTS, "tool_version": __version__, "command": command}
    if instance is not None:
        doc["instance_digest"] = instance.digest()
    doc.update(body)
    return _clean(doc)


def dump(doc: dict[str, Any]) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# -- commands -------------------------------------------------------------------


def _emit(args: argparse.Namespace, doc: dict[str, Any], text: str) -> None:
    if args.out:
        Path(args.out).write_text(dump(doc))
    sys.stdout.write(dump(doc) if args.format == "machine" else text)


def _policy(args: argparse.Namespace, inst: Instance) -> ThresholdPolicy:
    if args.v is not None:
        return ThresholdPolicy.from_v(args.v, reference_bound(inst), inst.d, relaxation_bound(inst))
    if args.alpha is not None:
        return alpha_policy(inst, args.alpha)
    return quota_policy(inst)


def _fmt(x: float | None, nd: int = 4) -> str:
    return "n/a" if x is None else f"{x:.{nd}f}"


def cmd_opt(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    lines = []
    per_attr = []
    for a, attr in enumerate(inst.attributes):
        res = solve_relaxation(inst, a)
        per_attr.append(
            {
                "attribute": attr.name,
                "mix": attr.mix,
                "opt_star": res.opt_star,
                "y": [
                    {"cluster": attr.clusters[k], "team": t, "y": y} for (k, t), y in sorted(res.y.items(), key=str)
                ],
                "warnings": list(res.warnings),
            }
        )
        lines.append(f"attribute {attr.name} (mix {attr.mix:g}): OPT* = {res.opt_star:.4f}")
        lines.append("  team      " + " ".join(f"{c:>10}" for c in attr.clusters))
        for t in inst.teams:
            ys = [res.y[(k, t.id)] for k in range(attr.k)]
            lines.append(f"  {t.id:<9} " + " ".join(f"{y:10.4f}" for y in ys))
    opt = relaxation_bound(inst)
    body: dict[str, Any] = {"opt_star": opt, "attributes": per_attr, "d": inst.d, "b": reference_bound(inst)}
    lines.append(f"OPT* = {opt:.4f}  (d = {inst.d}, b = {reference_bound(inst):g})")
    if len(inst.attributes) == 1 and any(t.quota_min for t in inst.teams):
        attr = inst.attributes[0]
        body["df_quota"] = {
            t.id: compute_df_quota([attr.weights[k][j] for k in range(attr.k)], t.quota_min)
            for j, t in enumerate(inst.teams)
            if t.quota_min
        }
        pol = quota_policy(inst, opt)
        body["suggested_policy"] = pol.as_dict()
        dfs = sorted(set(round(v, 12) for v in body["df_quota"].values()))
        lines.append(f"df_R- = {', '.join(f'{v:.4f}' for v in dfs)}")
        lines.append(f"suggested alpha = {pol.alpha:.4f}  (v = {pol.v:.4f}, cutoff = {pol.cutoff:.4f})")
    _emit(args, results_document("opt", body, inst), "\n".join(lines) + "\n")
    return 0


def cmd_stream(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    arrivals = load_arrivals(args.arrivals, inst)
    policy = _policy(args, inst)
    result = run_stream(inst, policy, arrivals, args.edge_order)
    base, base_used = fcfs_state(inst, arrivals)
    report = build_report(result.state, result.interviews_used, base, base_used)
    body = {
        "policy": policy.as_dict(),
        "edge_order": args.edge_order,
        "decisions": [d.to_record() for d in result.decisions],
        "allocation": {t.id: [e.person for e in result.state.members(t.id)] for t in inst.teams},
        "baseline_allocation": {t.id: [e.person for e in base.members(t.id)] for t in inst.teams},
        "report": report,
    }
    lines = [f"cutoff {policy.cutoff:.4f} (alpha {policy.alpha:.4f}, v {policy.v:.4f}, d {policy.d}, b {policy.b:g})"]
    for d in result.decisions:
        parts = [f"{e.team}:{'+' if e.accepted else '-'}{e.gain:.3f}" + ("" if e.accepted else f"({e.reason})") for e in d.edges]
        lines.append(f"{d.index:>3} {d.person:<6} -> {d.accepted_teams or 'rejected'}  " + " ".join(parts))
    lines.append(
        f"utility {report.utility:.4f}, interviews {report.interviews_used}, violations {report.violations}, "
        f"pod_num {_fmt(report.pod_num, 3)}, pod_util {_fmt(report.pod_util, 3)}"
    )
    _emit(args, results_document("stream", body, inst), "\n".join(lines) + "\n")
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    inst = load_instance(args.instance)
    pool = load_arrivals(args.pool, inst)
    if args.method == "brute":
        res = brute_force_offline(inst, pool)
        extra = {}
    elif args.method == "greedy":
        res = offline_greedy(inst, pool)
        extra = {}
    else:
        res, used = fcfs_baseline(inst, pool)
        extra = {"interviews_used": used}
    alloc = {t.id: res.team_members(t.id) for t in inst.teams}
    body = {"method": res.method, "value": res.value, "allocation": alloc, **extra}
    text = f"{res.method}: value {res.value:.4f}\n" + "".join(f"  {t}: {m}\n" for t, m in alloc.items())
    _emit(args, results_document("oracle", body, inst), text)
    return 0


def _config_doc(path: str) -> tuple[dict[str, Any], Path]:
    p = resolve(path)
    try:
        return json.loads(p.read_text()), p.parent
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc


def _experiment_config(doc: dict[str, Any], base: Path, seed: int, runs: int | None) -> ExperimentConfig:
    inst = load_instance(resolve(doc["instance"], base))
    theta = doc.get("theta")
    if isinstance(theta, list):
        theta = {inst.attributes.names[0]: theta}
    model = ArrivalModel(
        {k: tuple(float(p) for p in v) for k, v in theta.items()},
        int(doc.get("m", inst.max_arrivals)),
        seed,
        doc.get("ordering", "random"),
        max_teams=doc.get("max_teams"),
    )
    return ExperimentConfig(
        inst,
        model,
        alpha=doc.get("alpha", "quota"),
        v=doc.get("v"),
        runs=runs or int(doc.get("runs", 100)),
        baseline=bool(doc.get("baseline", True)),
        oracle=bool(doc.get("oracle", False)),
        edge_order=doc.get("edge_order", "gain"),
        workers=int(doc.get("workers", 1)),
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    doc, base = _config_doc(args.config)
    seed = args.seed if args.seed is not None else _env_seed(doc.get("seed", 0))
    kind = doc.get("kind", "experiment")
    try:
        if kind == "multi_attribute":
            cfg = MultiAttributeConfig(
                runs=args.runs or int(doc.get("runs", 100)),
                seed=seed,
                alpha=float(doc.get("alpha", 0.53)),
                mix=float(doc.get("mix", 0.5)),
                edge_order=doc.get("edge_order", "team"),
            )
            out = run_multi_attribute_experiment(cfg)
            body = {
                "kind": kind,
                "policy": out["policy"],
                "edge_order": out["edge_order"],
                "seed": seed,
                "generator": GENERATOR,
                "aggregate": out["aggregate"],
                "reports": out["reports"] if args.per_run else [],
            }
            agg = out["aggregate"]
            text = (
                f"multi-attribute, {cfg.runs} runs, alpha {cfg.alpha}, edge order {cfg.edge_order}\n"
                f"  GiE gender  {_fmt(agg['mean_entropy_gain:gender'], 3)}\n"
                f"  GiE country {_fmt(agg['mean_entropy_gain:country'], 3)}\n"
                f"  PoD         {_fmt(agg['mean_pod_num'], 3)}\n"
            )
            _emit(args, results_document("simulate", body), text)
            return 0
        config = _experiment_config(doc, base, seed, args.runs)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad config {args.config}: {exc}") from exc
    inst = config.instance
    body = {"kind": kind, "seed": seed, "generator": GENERATOR, "edge_order": config.edge_order}
    if kind == "alpha_sweep":
        rows = alpha_sweep(config, [float(a) for a in doc["alphas"]])
        body["sweep"] = rows
        text = "alpha  cutoff  utility  entropy  interviews  violations\n" + "".join(
            f"{r['alpha']:5.2f}  {r['cutoff']:6.3f}  {r['median_utility']:7.2f}  {r['median_team_entropy']:7.3f}"
            f"  {r['median_interviews']:10.1f}  {r['total_violations']:10d}\n"
            for r in rows
        )
    elif kind == "theta_grid":
        rows = theta_grid(config, float(doc.get("step", 0.1)))
        body["grid"] = rows
        text = "".join(f"{r['theta_0']:.2f},{r['theta_1']:.2f},{r['median_interviews']:g},{r['violation_rate']:.4f}\n" for r in rows)
        if args.plot_data:
            with open(args.plot_data, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["theta_0", "theta_1", "median_interviews", "violation_rate"])
                for r in rows:
                    w.writerow([r["theta_0"], r["theta_1"], r["median_interviews"], r["violation_rate"]])
    elif kind == "experiment":
        res = run_experiment(config)
        body["policy"] = res.policy.as_dict()
        body["aggregate"] = res.aggregate
        body["reports"] = res.reports if args.per_run else []
        a = res.aggregate
        text = (
            f"{a['runs']} runs, cutoff {res.policy.cutoff:.4f} (alpha {res.policy.alpha:.4f})\n"
            + "".join(f"  {k}: {_fmt(v) if isinstance(v, float) else v}\n" for k, v in sorted(a.items()))
        )
    else:
        raise InputError(f"unknown config kind {kind!r}")
    _emit(args, results_document("simulate", body, inst), text)
    return 0


def _env_seed(default: int) -> int:
    raw = os.environ.get("DIVMATCH_SEED")
    if raw is None:
        return int(default)
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"DIVMATCH_SEED must be an integer, got {raw!r}") from None


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "machine"), default="text")
    common.add_argument("--out", help="also write the results document here")
    common.add_argument("--seed", type=int, help="base seed (default: $DIVMATCH_SEED or the config's seed)")

    parser = argparse.ArgumentParser(prog="divmatch", description=__doc__.split("\n")[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"divmatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("opt", parents=[common], help="relaxed optimum and suggested threshold")
    p.add_argument("instance")
    p.set_defaults(func=cmd_opt)

    p = sub.add_parser("stream", parents=[common], help="run the streaming engine over an arrival file")
    p.add_argument("instance")
    p.add_argument("arrivals")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float)
    g.add_argument("--v", type=float)
    p.add_argument("--edge-order", choices=("gain", "team"), default="gain")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation config")
    p.add_argument("config")
    p.add_argument("--runs", type=int)
    p.add_argument("--plot-data", help="CSV output for theta_grid configs")
    p.add_argument("--per-run", action="store_true", help="include per-run reports")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", parents=[common], help="offline reference allocation")
    p.add_argument("instance")
    p.add_argument("pool")
    p.add_argument("--method", choices=("brute", "greedy", "fcfs"), default="brute")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidInstance as exc:
        codes = ",".join(i.code for i in exc.issues)
        print(f"error: invalid input ({codes}): {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SearchSpaceTooLarge as exc:
        print(f"error: search_space_too_large: {exc}", file=sys.stderr)
        return EXIT_SEARCH


if __name__ == "__main__":
    sys.exit(main())
