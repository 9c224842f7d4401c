"""Command-line harness: named experiments writing CSV tables."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from .objectives import (
    OptimizerConfig,
    entropy_and_gradient,
    estimate_mixture_posterior,
    gradient_ascent,
    ising_heat_capacity,
    ising_heat_capacity_objective,
    mixture_entropy_objective,
    mixture_replications,
)
from .oracles import (
    enumerate_posterior,
    exact_entropy,
    finite_difference,
    finite_T_expectation,
    mixture_chain,
)

COMMANDS = ("mixture-sweep", "mixture-optimize", "ising-sweep", "ising-optimize", "variance-compare")


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    chain_length: int = 1000
    reps: int = 1
    grid_start: float = 0.0
    grid_stop: float = 1.0
    grid_points: int = 1
    algorithm: str = "adam"
    learning_rate: float = 0.05
    iterations: int = 200
    lr_decay: float = 0.0
    clip: float | None = None
    start: float = 0.0
    observation: float = 0.4
    lattice: int = 12
    theta: float = 1.0
    coupled: bool = True
    discard: int = 0
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in COMMANDS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        for name in ("chain_length", "reps", "grid_points", "lattice", "workers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("learning_rate", "theta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.iterations < 0 or self.discard < 0 or self.lr_decay < 0:
            raise ValueError("iterations, discard and lr_decay must be non-negative")
        if self.grid_points > 1 and not self.grid_stop > self.grid_start:
            raise ValueError("grid_stop must exceed grid_start")
        if self.discard >= self.chain_length:
            raise ValueError("discard must be smaller than chain_length")

    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_start, self.grid_stop, self.grid_points)

    def optimizer(self, bounds=(-math.inf, math.inf)) -> OptimizerConfig:
        return OptimizerConfig(self.algorithm, self.learning_rate, iterations=self.iterations,
                               chain_length=self.chain_length, seed=self.seed,
                               lr_decay=self.lr_decay, clip=self.clip, bounds=bounds)


DEFAULTS = {
    "mixture-sweep": dict(chain_length=2000, reps=100, grid_start=-6.0, grid_stop=8.0, grid_points=61),
    "mixture-optimize": dict(chain_length=20_000, reps=1, iterations=200, start=4.0, learning_rate=0.1,
                             lr_decay=0.02),
    "ising-sweep": dict(chain_length=10_000, reps=4, grid_start=1.5, grid_stop=3.2, grid_points=20),
    "ising-optimize": dict(chain_length=10_000, reps=8, iterations=300, start=1.8, lr_decay=0.01,
                           clip=1000.0),
    "variance-compare": dict(chain_length=1000, reps=200, grid_start=100.0, grid_stop=1000.0,
                             grid_points=3, observation=0.4),
}


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; values are JSON when they parse, strings otherwise."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_config(experiment: str, file_values: dict | None = None, overrides: dict | None = None
                 ) -> ExperimentConfig:
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = dict(DEFAULTS[experiment])
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in fields or key == "experiment":
                raise ValueError(f"unknown config key {key!r}")
            if value is not None:
                values[key] = value
    return ExperimentConfig(experiment, **values)


# --- experiments -------------------------------------------------------------

def cmd_mixture_sweep(cfg: ExperimentConfig):
    header = ["h", "p1", "p2", "p3", "entropy_est", "grad_est", "entropy_exact", "grad_exact_fd"]
    rows = []
    for i, h in enumerate(cfg.grid()):
        pv = estimate_mixture_posterior(float(h), cfg.chain_length, cfg.reps, cfg.seed, cfg.workers, key=(i,))
        H, dH = entropy_and_gradient(pv)
        rows.append([float(h), *pv.p, H, dH, exact_entropy(float(h)), finite_difference(exact_entropy, float(h))])
    return header, rows


def cmd_mixture_optimize(cfg: ExperimentConfig):
    obj = mixture_entropy_objective(cfg.chain_length, cfg.reps, cfg.workers)
    trace = gradient_ascent(obj, cfg.optimizer(), cfg.start)
    return ["iter", "h", "entropy_est", "grad_est"], [list(r) for r in trace]


def cmd_ising_sweep(cfg: ExperimentConfig):
    header = ["T", "mean_energy", "C", "dC_dT", "mean_energy_se", "C_se", "dC_dT_se"]
    rows = []
    for i, T in enumerate(cfg.grid()):
        r = ising_heat_capacity(cfg.lattice, cfg.theta, float(T), cfg.chain_length, cfg.reps, cfg.seed,
                                cfg.coupled, cfg.discard, cfg.workers, key=(i,))
        rows.append([float(T), r["energy"], r["C"], r["dC"], r["energy_se"], r["C_se"], r["dC_se"]])
    return header, rows


def cmd_ising_optimize(cfg: ExperimentConfig):
    obj = ising_heat_capacity_objective(cfg.lattice, cfg.theta, cfg.chain_length, cfg.reps, cfg.coupled,
                                        cfg.discard, cfg.workers)
    # keep iterates inside a range where the chain stays well defined
    trace = gradient_ascent(obj, cfg.optimizer(bounds=(0.25 * cfg.theta, 5.0 * cfg.theta)), cfg.start)
    return ["iter", "T", "C_est", "dC_est"], [list(r) for r in trace]


def entropy_weights(h: float) -> np.ndarray:
    """Coefficients turning a posterior-derivative vector into an entropy derivative at the exact posterior."""
    p, _ = enumerate_posterior(h)
    return -(1.0 + np.log(p))


def cmd_variance_compare(cfg: ExperimentConfig):
    h = cfg.observation
    w = entropy_weights(h)
    fs = [lambda j, k=k: float(j == k) for k in (1, 2, 3)]
    header = ["T", "var_dmh", "var_score", "mean_dmh", "mean_score", "se_dmh", "se_score", "grad_oracle"]
    rows = []
    lengths = np.unique(np.round(np.geomspace(cfg.grid_start, cfg.grid_stop, cfg.grid_points)).astype(int))
    for i, T in enumerate(lengths):
        T = int(T)
        stats = []
        for method in ("dmh", "score"):
            _, DP = mixture_replications(h, T, cfg.reps, cfg.seed, method, cfg.workers,
                                         key=(i, int(method == "score")))
            g = DP @ w
            stats.append((float(np.var(g, ddof=1)), float(np.mean(g)), float(np.std(g, ddof=1) / math.sqrt(len(g)))))
        chain = mixture_chain(1, T)
        oracle = sum(wk * finite_difference(lambda t, f=f: finite_T_expectation(chain, f, t), h)
                     for wk, f in zip(w, fs))
        (vd, md, sd), (vs, ms, ss) = stats
        rows.append([T, vd, vs, md, ms, sd, ss, float(oracle)])
    return header, rows


HANDLERS = {
    "mixture-sweep": cmd_mixture_sweep,
    "mixture-optimize": cmd_mixture_optimize,
    "ising-sweep": cmd_ising_sweep,
    "ising-optimize": cmd_ising_optimize,
    "variance-compare": cmd_variance_compare,
}


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, (int, np.integer)) and not isinstance(v, bool)
                         else format(float(v), ".17g") for v in row])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig) -> str:
    header, rows = HANDLERS[cfg.experiment](cfg)
    text = format_csv(header, rows)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


# --- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffmh", description="Differentiable Metropolis-Hastings experiments.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="file of key = value lines; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--chain-length", type=int, help="MH steps (mixture) or sweeps (Ising)")
        p.add_argument("--reps", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out")
        if name in ("mixture-sweep", "ising-sweep", "variance-compare"):
            p.add_argument("--grid-start", type=float)
            p.add_argument("--grid-stop", type=float)
            p.add_argument("--grid-points", type=int)
        if name.endswith("optimize"):
            p.add_argument("--start", type=float, help="initial h or T")
            p.add_argument("--iterations", type=int)
            p.add_argument("--algorithm", choices=["adam", "sgd"])
            p.add_argument("--learning-rate", type=float)
            p.add_argument("--lr-decay", type=float)
            p.add_argument("--clip", type=float)
        if name == "variance-compare":
            p.add_argument("--observation", type=float)
        if name.startswith("ising"):
            p.add_argument("--lattice", type=int)
            p.add_argument("--discard", type=int, help="initial sweeps left out of averages")
            p.add_argument("--theta", type=float)
            p.add_argument("--coupled", dest="coupled", action="store_const", const=True)
            p.add_argument("--uncoupled", dest="coupled", action="store_const", const=False)
    return parser


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    experiment = args.pop("experiment")
    config_path = args.pop("config")
    try:
        file_values = {}
        if config_path:
            with open(config_path) as fh:
                file_values = parse_config_text(fh.read())
        cfg = build_config(experiment, file_values, args)
        run_experiment(cfg)
    except (OSError, ValueError, TypeError) as exc:
        print(f"diffmh {experiment}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
