"""Command-line entry point: ``scogap {run,verify,separation,k-stats}``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for
configuration or feasibility errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, InfeasibleParametersError
from .experiments import (
    ExperimentConfig,
    gap_experiment,
    k_concentration,
    separation,
    stderr_progress,
    verify,
    write_trials_csv,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# per-command defaults applied when neither the config file nor a flag sets them
COMMAND_DEFAULTS = {
    "run": {},
    "verify": {"trials": 10},
    "separation": {"trials": 100, "sgd_trials": 20},
    "k-stats": {"trials": 1000},
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--family", help="hard-gd, hard-reg, overfit, opt-l1, opt-l2, lambda-lb")
    p.add_argument("--optimizer", choices=["gd", "sgd", "reg-gd"])
    p.add_argument("--n", type=int, help="sample size")
    p.add_argument("--T", type=int, help="number of steps")
    p.add_argument("--d", type=int, help="dimension (derived from n, T when omitted)")
    p.add_argument("--eta", type=float, help="step size for gd / sgd")
    p.add_argument("--lambda", dest="lam", type=float, help="regularization for reg-gd")
    p.add_argument("--trials", type=int)
    p.add_argument("--mc-budget", dest="mc_budget", type=int, help="draws per risk estimate")
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true", default=None,
                   help="worst-case gamma1 for hard-reg")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--workers", type=int)
    p.add_argument("--k-min", dest="k_min", type=int, help="keep samples with K >= k-min")
    p.add_argument("--k-max", dest="k_max", type=int, help="keep samples with K <= k-max")
    p.add_argument("--gamma2", type=float, help="override the derived gamma2")
    p.add_argument("--n-sgd", dest="n_sgd", type=int, help="SGD sample size (separation)")
    p.add_argument("--sgd-trials", dest="sgd_trials", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scogap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "estimate the generalization gap of one configuration",
        "verify": "check simulated trajectories against their closed forms",
        "separation": "compare GD and SGD gaps on the same distribution",
        "k-stats": "bad-set size concentration over many samples",
    }
    for name, text in helps.items():
        _add_config_flags(sub.add_parser(name, help=text))
    return parser


_FLAG_FIELDS = ("family", "optimizer", "n", "T", "d", "eta", "lam", "trials", "mc_budget",
                "seed", "strict", "out", "workers", "k_min", "k_max", "gamma2", "n_sgd",
                "sgd_trials")


def config_from_args(args) -> ExperimentConfig:
    data = dict(COMMAND_DEFAULTS[args.command])
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        file_cfg = json.loads(text) if text.strip() else {}
        if not isinstance(file_cfg, dict):
            raise ConfigError("config must be a JSON object")
        data.update(file_cfg)
    for name in _FLAG_FIELDS:
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    if "family" not in data:
        if args.command in ("separation", "k-stats"):
            data["family"] = "hard-gd"
        else:
            raise ConfigError("--family is required")
    data.setdefault("out", "out")
    return ExperimentConfig.from_dict(data)


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def cmd_run(config: ExperimentConfig) -> int:
    report = gap_experiment(config, progress=stderr_progress("run"))
    report.write(config.out)
    print(report.status_line())
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_verify(config: ExperimentConfig) -> int:
    report = verify(config, progress=stderr_progress("verify"))
    _write_json(Path(config.out) / "report.json", report.to_dict())
    for line in report.lines():
        print(line)
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_separation(config: ExperimentConfig) -> int:
    report = separation(config, progress=stderr_progress("separation"))
    out = Path(config.out)
    _write_json(out / "report.json", report.to_dict())
    for part, rep in (("gd", report.gd), ("sgd", report.sgd)):
        (out / part).mkdir(parents=True, exist_ok=True)
        write_trials_csv(rep.records, out / part / "trials.csv")
    for line in report.lines():
        print(line)
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_k_stats(config: ExperimentConfig) -> int:
    stats = k_concentration(config)
    out = Path(config.out)
    data = stats.to_dict()
    data["config"] = config.to_dict()
    data["version"] = __version__
    _write_json(out / "report.json", data)
    with open(out / "k_values.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("trial_id,K\n")
        for i, k in enumerate(stats.Ks):
            fh.write(f"{i},{k}\n")
    print(stats.status_line())
    return EXIT_PASS if stats.passed else EXIT_FAIL


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "separation": cmd_separation,
            "k-stats": cmd_k_stats}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        return COMMANDS[args.command](config)
    except (ConfigError, InfeasibleParametersError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
