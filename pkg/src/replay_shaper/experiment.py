"""Experiment configuration, execution and on-disk artifacts.

A run directory holds ``q_table.json``, ``policy.txt``, ``policy.svg``,
``learning_curve.csv``, ``risk.json`` and, written last, ``manifest.json``.
The manifest carries the full configuration and the grid spec, so a run can
be repeated from it alone.  Nothing time-dependent goes into any artifact.
"""

from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import hashlib
import json
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .baselines import RiskSensitiveConfig, run_risk_sensitive_q, run_worst_case_q, td_histogram
from .learner import LearnerConfig, QTable, RunLog, greedy_policy, qtable_to_json, run_algorithm1, run_q_learning
from .mdp import ENV1_SPEC, ENV2_SPEC, GridWorldSpec, TabularMdp, build_gridworld
from .render import policy_ascii, policy_svg
from .replay import SchemeConfig
from .safety import RiskProfile, greedy_path, policy_risk_profile

ALGORITHMS = ("replay", "plain", "risk_sensitive", "worst_case")
BUILTIN_ENVS = {"env1": ENV1_SPEC, "env2": ENV2_SPEC}


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to a usage error on the command line)."""


@dataclass
class ExperimentConfig:
    env: str = "env1"
    algorithms: list[str] = field(default_factory=lambda: ["replay"])
    v: float = 0.5
    beta: float = 5.0
    gamma: float | None = None
    episodes: int = 50_000
    seeds: list[int] = field(default_factory=lambda: [0])
    t0: int = 500
    alpha_exponent: float = 0.6
    alpha_mode: str = "per_pair"
    epsilon_c: float = 1.0
    epsilon_p: float = 0.5
    q_init: float = 0.0
    kappa: float = 0.5
    mc_episodes: int = 10_000
    out: str = "runs"
    env_spec: dict | None = None

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ConfigError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)}")
        if self.env_spec is None and self.env not in BUILTIN_ENVS and not Path(self.env).is_file():
            raise ConfigError(f"unknown environment {self.env!r}: use env1, env2 or a grid spec JSON file")
        if self.mc_episodes < 1:
            raise ConfigError("mc_episodes must be positive")
        try:
            self.learner_config("replay", self.seeds[0])
            RiskSensitiveConfig(self.kappa)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def learner_config(self, algorithm: str, seed: int) -> LearnerConfig:
        return LearnerConfig(
            v=self.v if algorithm == "replay" else 0.0,
            t0=self.t0,
            alpha_exponent=self.alpha_exponent,
            alpha_mode=self.alpha_mode,
            q_init=self.q_init,
            episodes=self.episodes,
            epsilon_c=self.epsilon_c,
            epsilon_p=self.epsilon_p,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        # a manifest nests the run configuration under "config"
        if "config" in d and isinstance(d["config"], Mapping):
            inner = dict(d["config"])
            inner.setdefault("env_spec", d.get("env_spec"))
            d = inner
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        kw = dict(d)
        for key in ("algorithms", "seeds"):
            if key in kw and not isinstance(kw[key], list):
                kw[key] = [kw[key]]
        return cls(**kw)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return ExperimentConfig.from_dict(data)


def resolve_env(cfg: ExperimentConfig) -> tuple[TabularMdp, GridWorldSpec]:
    if cfg.env_spec is not None:
        spec = GridWorldSpec.from_dict(cfg.env_spec)
    elif cfg.env in BUILTIN_ENVS:
        spec = BUILTIN_ENVS[cfg.env]
    else:
        try:
            spec = GridWorldSpec.from_json(Path(cfg.env).read_text())
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load grid spec {cfg.env}: {exc}") from None
    if cfg.gamma is not None:
        spec = dataclasses.replace(spec, gamma=float(cfg.gamma))
    try:
        return build_gridworld(spec), spec
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def far_start(spec: GridWorldSpec) -> int:
    """Non-terminal cell in a goal's row farthest from that goal; ties to the lowest state id."""
    best = None
    for g in sorted(spec.goal):
        for c in range(spec.cols):
            cell = (g[0], c)
            if cell in spec.terminal_cells:
                continue
            key = (abs(c - g[1]), -spec.state_of(cell))
            if best is None or key > best[0]:
                best = (key, spec.state_of(cell))
    if best is None:
        return spec.start_states[0]
    return best[1]


@dataclass
class RunResult:
    algorithm: str
    seed: int
    q: QTable
    log: RunLog
    risk: RiskProfile
    policy: np.ndarray
    far_path: list[tuple[int, int]]
    extras: dict = field(default_factory=dict)


def run_one(cfg: ExperimentConfig, algorithm: str, seed: int,
            env: tuple[TabularMdp, GridWorldSpec] | None = None) -> RunResult:
    mdp, spec = env if env is not None else resolve_env(cfg)
    lc = cfg.learner_config(algorithm, seed)
    rng = np.random.default_rng(seed)
    extras: dict = {}
    if algorithm == "replay":
        Q, log, _ = run_algorithm1(mdp, lc, SchemeConfig(beta=cfg.beta), rng)
    elif algorithm == "plain":
        Q, log = run_q_learning(mdp, lc, rng)
    elif algorithm == "risk_sensitive":
        Q, log = run_risk_sensitive_q(mdp, RiskSensitiveConfig(cfg.kappa, lc), rng)
        extras["td_histogram"] = td_histogram(log.td_errors or [])
        log.td_errors = None
    elif algorithm == "worst_case":
        Q, log = run_worst_case_q(mdp, lc, rng)
    else:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    pol = greedy_policy(Q)
    risk = policy_risk_profile(mdp, pol, np.random.default_rng([seed, 1]), cfg.mc_episodes,
                               catastrophe_states=spec.cliff_states)
    path = greedy_path(mdp, pol, far_start(spec),
                       lambda s, a: spec.state_of(spec.move(spec.cell_of(s), a)))
    return RunResult(algorithm, seed, Q, log, risk, pol, path, extras)


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def risk_document(result: RunResult, spec: GridWorldSpec) -> dict:
    d = result.risk.to_dict()
    d["far_start"] = list(spec.cell_of(result.far_path[0][0])) if result.far_path else None
    d["far_start_path"] = [[*spec.cell_of(s), a] for s, a in result.far_path]
    return d


def write_run(result: RunResult, cfg: ExperimentConfig, spec: GridWorldSpec, out_dir: Path) -> Path:
    """Write every artifact of one run; the manifest goes last."""
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "q_table.json": qtable_to_json(result.q) + "\n",
        "policy.txt": policy_ascii(spec, result.policy),
        "policy.svg": policy_svg(spec, result.policy, result.q.max(axis=1),
                                 title=f"{spec.name} {result.algorithm} seed {result.seed}"),
        "risk.json": json.dumps(risk_document(result, spec), indent=2, sort_keys=True) + "\n",
    }
    if "td_histogram" in result.extras:
        files["td_histogram.json"] = json.dumps(result.extras["td_histogram"], indent=2) + "\n"
    for name, text in files.items():
        atomic_write(out_dir / name, text)
    result.log.write_csv(out_dir / "learning_curve.csv")
    names = sorted([*files, "learning_curve.csv"])

    run_cfg = dataclasses.replace(cfg, algorithms=[result.algorithm], seeds=[result.seed],
                                  env_spec=spec.to_dict())
    manifest = {
        "tool": "replay_shaper",
        "version": __version__,
        "git": git_describe(),
        "algorithm": result.algorithm,
        "seed": result.seed,
        "config": {k: v for k, v in run_cfg.to_dict().items() if k != "out"},
        "learner": cfg.learner_config(result.algorithm, result.seed).to_dict(),
        "env_spec": spec.to_dict(),
        "notes": list(result.log.notes),
        "artifacts": {n: _sha256(out_dir / n) for n in names},
    }
    atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out_dir


def thread_cap(default: int | None = None) -> int:
    raw = os.environ.get("REPLAY_SHAPER_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"REPLAY_SHAPER_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError("REPLAY_SHAPER_THREADS must be >= 1")
        return n
    return default or os.cpu_count() or 1


def _job(args):
    cfg, algorithm, seed = args
    return run_one(cfg, algorithm, seed)


def run_all(cfg: ExperimentConfig, jobs: Sequence[tuple[str, int]], workers: int | None = None) -> list[RunResult]:
    """Run ``(algorithm, seed)`` jobs, in worker processes when allowed; order is preserved."""
    n = min(len(jobs), workers or thread_cap())
    if n <= 1:
        env = resolve_env(cfg)
        return [run_one(cfg, a, s, env) for a, s in jobs]
    with cf.ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_job, [(cfg, a, s) for a, s in jobs]))
