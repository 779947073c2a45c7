"""Command-line entry point: ``tvdnpl {simulate,fit,reproduce,verify}``.

Settings come from an optional JSON config file, overridden by flags.  The
fully resolved configuration is written to ``run_config.json`` in every
output directory, and ``tvdnpl <command> --config <dir>/run_config.json``
reproduces that run.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

from .distributions import (
    DataError,
    ModelSpec,
    NumericalDomainError,
    read_csv,
    write_csv,
)
from .losses import LossKind
from .npl import NplConfig, PosteriorError, posterior_bootstrap
from .reproduce import SCENARIOS, ScenarioRun, run_scenario, summary_table
from .simgen import EpsPoisson, NoisyProbit, SimConfig, ZeroInfBinomial, simulate
from .verify import CLAIMS, run_claims

log = logging.getLogger("tvdnpl")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_VERIFY = 5

MODELS = ("poisson", "binomial", "probit", "mlp")
CONFIG_NAME = "run_config.json"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every setting a command reads.  Unused fields stay at their defaults."""

    command: str = ""
    out: Optional[str] = None
    seed: int = 0
    B: int = 200
    parallelism: int = 1
    loss: str = "tvd"
    # simulate / reproduce
    scenario: Optional[str] = None
    k: Optional[List[int]] = None
    eps: Optional[List[float]] = None
    n: Optional[int] = None
    repeats: int = 20
    paper_scale: bool = False
    n_train: Optional[int] = None
    n_test: Optional[int] = None
    # fit
    input: Optional[str] = None
    outcome: str = "y"
    covariates: Optional[List[str]] = None
    covariate_kind: str = "discrete"
    model: str = "poisson"
    trials: Optional[int] = None
    hidden: int = 8
    # verify
    claims: List[str] = field(default_factory=list)
    mc_trials: Optional[int] = None

    def validate(self):
        if self.command not in ("simulate", "fit", "reproduce", "verify"):
            raise ConfigError(f"unknown command {self.command!r}")
        if self.B < 1:
            raise ConfigError("B must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.loss not in ("tvd", "kld"):
            raise ConfigError(f"loss must be tvd or kld, got {self.loss!r}")
        if self.command in ("simulate", "reproduce") and self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.command == "fit":
            if not self.input:
                raise ConfigError("fit needs an input file")
            if self.model not in MODELS:
                raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
            if self.model == "binomial" and not self.trials:
                raise ConfigError("binomial model needs --trials")
        bad = set(self.claims) - set(CLAIMS)
        if bad:
            raise ConfigError(f"unknown claims {sorted(bad)}; choose from {CLAIMS}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return raw


def resolve(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values = load_config(args.config) if args.config else {}
    if values.get("command", args.command) != args.command:
        raise ConfigError(f"config is for {values['command']!r}, not {args.command!r}")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and v != []:
            values[f.name] = v
    values["command"] = args.command
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.paper_scale:
        cfg.repeats, cfg.B = 100, 1000
    if cfg.out is None:
        cfg.out = f"{cfg.command}-out"
    cfg.validate()
    return cfg


def _prepare_out(cfg: RunConfig) -> str:
    try:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, CONFIG_NAME), "w") as fh:
            json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ConfigError(f"output path {cfg.out} is not writable: {exc}") from exc
    return cfg.out


def _scenario(cfg: RunConfig):
    k = cfg.k[0] if cfg.k else None
    eps = cfg.eps[0] if cfg.eps else None
    if cfg.scenario == "eps-poisson":
        return EpsPoisson(k=10 if k is None else k, eps=0.15 if eps is None else eps)
    if cfg.scenario == "zero-binomial":
        return ZeroInfBinomial(eps=0.1 if eps is None else eps)
    return NoisyProbit(flip_eps=0.1 if eps is None else eps)


def cmd_simulate(cfg: RunConfig) -> int:
    sc = _scenario(cfg)
    n = cfg.n or ScenarioRun(cfg.scenario).n_train + ScenarioRun(cfg.scenario).n_test
    data = simulate(SimConfig(sc, n, 0, cfg.seed))
    out = _prepare_out(cfg)
    write_csv(data, os.path.join(out, "data.csv"), outcome=cfg.outcome)
    log.info("wrote %d rows to %s", data.n, out)
    return EXIT_OK


def _model_for(cfg: RunConfig, d: int) -> ModelSpec:
    if cfg.model == "poisson":
        return ModelSpec.poisson(d)
    if cfg.model == "binomial":
        return ModelSpec.binomial(cfg.trials, d)
    if cfg.model == "probit":
        return ModelSpec.probit(d)
    return ModelSpec.mlp(d, cfg.hidden)


def cmd_fit(cfg: RunConfig) -> int:
    try:
        data = read_csv(cfg.input, cfg.outcome, cfg.covariates, cfg.covariate_kind)
    except OSError as exc:
        raise DataError(f"cannot read {cfg.input}: {exc.strerror}") from exc
    model = _model_for(cfg, data.d)
    npl = NplConfig(B=cfg.B, master_seed=cfg.seed, parallelism=cfg.parallelism)
    samples = posterior_bootstrap(data, model, LossKind(cfg.loss), npl)
    out = _prepare_out(cfg)
    draws = sorted(samples.draws + samples.failed, key=lambda d: d.index)
    with open(os.path.join(out, "posterior.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(model.param_names()) + ["objective", "converged"])
        for d in draws:
            w.writerow([repr(float(v)) for v in d.params]
                       + [repr(float(d.objective)), int(d.converged)])
    log.info("%d draws (%d excluded) written to %s", len(draws), samples.excluded_count, out)
    return EXIT_OK


def cmd_reproduce(cfg: RunConfig) -> int:
    grid = cfg.k if cfg.scenario == "eps-poisson" else cfg.eps
    run = ScenarioRun(cfg.scenario, grid=tuple(grid or ()), repeats=cfg.repeats, B=cfg.B,
                      seed=cfg.seed, parallelism=cfg.parallelism,
                      n_train=cfg.n_train, n_test=cfg.n_test, hidden=cfg.hidden)
    out = _prepare_out(cfg)
    if cfg.parallelism > 1:
        with ProcessPoolExecutor(cfg.parallelism) as ex:
            report = run_scenario(run, executor=ex)
    else:
        report = run_scenario(run)
    for setting in dict.fromkeys(r.setting for r in report.records):
        cell = type(report)(report.select(setting=setting), dict(report.meta, setting=setting))
        with open(os.path.join(out, f"report_{setting}.jsonl"), "w") as fh:
            fh.write(cell.to_jsonl())
    rows = summary_table(report)
    with open(os.path.join(out, "summary.tsv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), delimiter="\t", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
    with open(os.path.join(out, "summary.tsv")) as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    reports = run_claims(cfg.claims or None, seed=cfg.seed, trials=cfg.mc_trials)
    out = _prepare_out(cfg)
    with open(os.path.join(out, "reports.jsonl"), "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
    failed = 0
    for r in reports:
        print(f"{r.claim:<14} {'PASS' if r.passed else 'FAIL'}  observed={r.observed:.6g} bound={r.bound:.6g}")
        failed += not r.passed
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit,
            "reproduce": cmd_reproduce, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--B", type=int, help="posterior bootstrap draws")
    common.add_argument("--parallelism", type=int, help="worker processes")
    common.add_argument("--loss", choices=("tvd", "kld"))
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tvdnpl",
                                     description="Robust TVD posterior bootstrap for discrete outcomes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    p.add_argument("scenario", nargs="?", choices=SCENARIOS[:3])
    p.add_argument("--k", type=int, nargs=1)
    p.add_argument("--eps", type=float, nargs=1)
    p.add_argument("--n", type=int)
    p.add_argument("--outcome")

    p = sub.add_parser("fit", parents=[common], help="posterior bootstrap on a CSV file")
    p.add_argument("input", nargs="?")
    p.add_argument("--outcome")
    p.add_argument("--covariates", nargs="*")
    p.add_argument("--covariate-kind", dest="covariate_kind", choices=("discrete", "continuous"))
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--trials", type=int, help="binomial trial count m")
    p.add_argument("--hidden", type=int)

    p = sub.add_parser("reproduce", parents=[common], help="TVD vs KLD benchmark on a scenario")
    p.add_argument("scenario", nargs="?", choices=SCENARIOS)
    p.add_argument("--k", type=int, nargs="+", help="contamination shifts (eps-poisson)")
    p.add_argument("--eps", type=float, nargs="+", help="contamination levels")
    p.add_argument("--repeats", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--paper-scale", dest="paper_scale", action="store_const", const=True,
                   help="100 repeats and B=1000")

    p = sub.add_parser("verify", parents=[common], help="check the theoretical guarantees")
    p.add_argument("--claim", dest="claims", action="append", choices=CLAIMS)
    p.add_argument("--trials", dest="mc_trials", type=int, help="Monte Carlo trials")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalDomainError, PosteriorError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # remaining ValueErrors come from invalid settings (model/data dimension etc.)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
