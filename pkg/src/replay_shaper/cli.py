"""Command-line front-end: ``run``, ``compare``, ``verify`` and ``render``.

Exit codes: 0 success, 1 failed verification or unusable artifacts,
2 invalid usage or configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .experiment import (
    ALGORITHMS,
    ConfigError,
    ExperimentConfig,
    atomic_write,
    load_config,
    resolve_env,
    run_all,
    write_run,
)
from .learner import greedy_policy, qtable_from_json
from .mdp import GridWorldSpec
from .render import policy_ascii, policy_svg, side_by_side
from .verify import SUITES, run_suite, suites_for

# flag name -> ExperimentConfig field
_FLAG_FIELDS = {
    "env": "env", "v": "v", "beta": "beta", "gamma": "gamma", "episodes": "episodes",
    "t0": "t0", "alpha_exp": "alpha_exponent", "kappa": "kappa", "out": "out",
    "mc_episodes": "mc_episodes",
}


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config (or a run manifest); flags override it")
    p.add_argument("--env", help="env1, env2 or a grid spec JSON file")
    p.add_argument("--v", type=float, help="replay probability (default 0.5)")
    p.add_argument("--beta", type=float, help="softmin temperature (default 5)")
    p.add_argument("--gamma", type=float, help="discount; defaults to the environment's")
    p.add_argument("--episodes", type=int, help="training episodes (default 50000)")
    p.add_argument("--seed", "--seeds", dest="seeds", type=int, nargs="+", help="one or more seeds")
    p.add_argument("--t0", type=int, help="initial exploration steps (default 500)")
    p.add_argument("--alpha-exp", dest="alpha_exp", type=float, help="learning-rate exponent (default 0.6)")
    p.add_argument("--kappa", type=float, help="risk-sensitivity for risk_sensitive (default 0.5)")
    p.add_argument("--mc-episodes", dest="mc_episodes", type=int, help="Monte Carlo episodes for risk metrics")
    p.add_argument("--out", help="output directory (default runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replay-shaper", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one algorithm and write its artifacts")
    _add_experiment_flags(p)
    p.add_argument("--algo", choices=ALGORITHMS, help="algorithm (default replay)")

    p = sub.add_parser("compare", help="train several algorithms on the same seeds")
    _add_experiment_flags(p)
    p.add_argument("--algo", "--algos", dest="algos", nargs="+", choices=ALGORITHMS,
                   help="algorithms to compare (default replay plain)")

    p = sub.add_parser("verify", help="run numerical verification suites")
    p.add_argument("--suite", default="all", choices=[*SUITES, "all"])
    p.add_argument("--out", default="verify_report.json", help="report path (a directory gets verify_report.json)")

    p = sub.add_parser("render", help="redraw policy.txt/policy.svg from stored Q-tables")
    p.add_argument("run_dir", help="run directory, or a directory containing run directories")
    return parser


def _experiment_config(args, parser) -> ExperimentConfig:
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
    except ConfigError as exc:
        parser.error(str(exc))
    for flag, name in _FLAG_FIELDS.items():
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, name, val)
            if flag == "env":
                cfg.env_spec = None
    if args.seeds:
        cfg.seeds = list(args.seeds)
    try:
        cfg.validate()
    except ConfigError as exc:
        parser.error(str(exc))
    return cfg


def _summary_rows(results) -> list[dict]:
    return [{
        "algorithm": r.algorithm,
        "seed": r.seed,
        "expected_return": r.risk.expected_return,
        "risky_traversal_prob": r.risk.risky_traversal_prob,
        "catastrophe_prob": r.risk.catastrophe_prob,
    } for r in results]


def _format_table(rows: list[dict]) -> str:
    head = f"{'algorithm':<16}{'seed':>6}{'return':>12}{'risky':>10}{'catastrophe':>13}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['algorithm']:<16}{r['seed']:>6}{r['expected_return']:>12.3f}"
                     f"{r['risky_traversal_prob']:>10.4f}{r['catastrophe_prob']:>13.4f}")
    return "\n".join(lines) + "\n"


def cmd_run(args, parser) -> int:
    cfg = _experiment_config(args, parser)
    if args.algo:
        cfg.algorithms = [args.algo]
    return _execute(cfg, compare=False)


def cmd_compare(args, parser) -> int:
    cfg = _experiment_config(args, parser)
    cfg.algorithms = list(args.algos) if args.algos else (
        cfg.algorithms if args.config and len(cfg.algorithms) > 1 else ["replay", "plain"])
    return _execute(cfg, compare=len(cfg.algorithms) > 1)


def _execute(cfg: ExperimentConfig, compare: bool) -> int:
    try:
        _, spec = resolve_env(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    jobs = [(a, s) for a in cfg.algorithms for s in cfg.seeds]
    results = run_all(cfg, jobs)
    root = Path(cfg.out)
    nested = compare or len(cfg.algorithms) > 1
    for r in results:
        sub = root / r.algorithm / f"seed_{r.seed}" if nested else root / f"seed_{r.seed}"
        write_run(r, cfg, spec, sub)
        print(f"[{r.algorithm} seed {r.seed}] -> {sub}")
        print(policy_ascii(spec, r.policy), end="")
    rows = _summary_rows(results)
    table = _format_table(rows)
    print(table, end="")
    if nested:
        grids = []
        for seed in cfg.seeds:
            blocks = {r.algorithm: policy_ascii(spec, r.policy) for r in results if r.seed == seed}
            grids.append(f"seed {seed}\n" + side_by_side(blocks))
        atomic_write(root / "compare.txt", table + "\n" + "\n".join(grids))
        atomic_write(root / "compare.json", json.dumps(rows, indent=2) + "\n")
        print("\n".join(grids), end="")
    return 0


def cmd_verify(args) -> int:
    reports = {}
    failed = []
    for name in suites_for(args.suite):
        res = run_suite(name)
        reports[name] = res.to_dict()
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {name} ({res.seconds:.1f}s)")
        for c in res.checks:
            if not c.asserted:
                print(f"     diagnostic {c.name}: {c.value}")
        failed += [f"{name}:{f}" for f in res.failures]
    out = Path(args.out)
    if out.is_dir():
        out = out / "verify_report.json"
    doc = {"passed": not failed, "failures": failed, "suites": reports}
    atomic_write(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if failed:
        print("failed checks:\n  " + "\n  ".join(failed), file=sys.stderr)
        return 1
    return 0


def _render_dir(d: Path) -> None:
    try:
        manifest = json.loads((d / "manifest.json").read_text())
        Q = qtable_from_json((d / "q_table.json").read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{d}: missing artifact {Path(exc.filename).name}") from None
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"{d}: corrupted artifact: {exc}") from None
    try:
        spec = GridWorldSpec.from_dict(manifest["env_spec"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{d}/manifest.json: bad env_spec: {exc}") from None
    if Q.shape != (spec.num_states, 4):
        raise ConfigError(f"{d}: Q-table shape {Q.shape} does not match the {spec.rows}x{spec.cols} grid")
    pol = greedy_policy(Q)
    atomic_write(d / "policy.txt", policy_ascii(spec, pol))
    title = f"{spec.name} {manifest.get('algorithm', '')} seed {manifest.get('seed', '')}".strip()
    atomic_write(d / "policy.svg", policy_svg(spec, pol, Q.max(axis=1), title=title))
    print(f"{d}:")
    print(policy_ascii(spec, pol), end="")


def cmd_render(args) -> int:
    root = Path(args.run_dir)
    if not root.is_dir():
        print(f"error: {root} is not a directory", file=sys.stderr)
        return 1
    dirs = [root] if (root / "manifest.json").exists() or (root / "q_table.json").exists() else sorted(
        p.parent for p in root.rglob("manifest.json"))
    if not dirs:
        print(f"error: no run artifacts under {root}", file=sys.stderr)
        return 1
    try:
        for d in dirs:
            _render_dir(d)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args, parser)
        if args.command == "compare":
            return cmd_compare(args, parser)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_render(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
