"""Experiment configuration, trial execution and report emission."""
from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from .constructions import (
    STOCHASTIC_FAMILIES,
    Family,
    InstanceParams,
    draw_alpha,
    draw_alphas_packed,
    draw_sample,
    empirical_oracle,
    objective_oracle,
    pick_gd_params,
    pick_lambda_params,
    pick_opt1_params,
    pick_opt2_params,
    pick_overfit_params,
    pick_reg_params,
    point_oracle,
)
from .errors import ConfigError, InfeasibleParametersError, LemmaPreconditionError, ProjectionFiredError
from .numerics import RngStream
from .optimizers import run_gd, run_gd_overfit, run_reg_gd, run_sgd

OPTIMIZERS = ("gd", "sgd", "reg-gd")
DEFAULT_OPTIMIZER = {
    Family.HARD_GD: "gd",
    Family.HARD_REG: "reg-gd",
    Family.OVERFIT: "gd",
    Family.OPT_L1: "gd",
    Family.OPT_L2: "gd",
    Family.LAMBDA_LB: "reg-gd",
}
ALLOWED_OPTIMIZERS = {
    Family.HARD_GD: ("gd", "sgd"),
    Family.HARD_REG: ("reg-gd",),
    Family.OVERFIT: ("gd", "sgd"),
    Family.OPT_L1: ("gd",),
    Family.OPT_L2: ("gd",),
    Family.LAMBDA_LB: ("reg-gd",),
}
CSV_COLUMNS = ("trial_id", "seed", "K", "projections", "gap_estimate", "gap_stderr",
               "threshold", "mc_samples", "stream_id")
# SGD trials draw from a disjoint block of stream ids
SGD_STREAM_OFFSET = 1 << 32
LEMMA_TOL = 1e-9
CLOSED_FORM_TOL = 1e-12


@dataclass
class ExperimentConfig:
    family: str
    optimizer: str | None = None
    n: int = 1
    T: int = 1
    d: int | None = None
    eta: float | None = None
    lam: float | None = None
    trials: int = 1
    mc_budget: int = 2000
    seed: int = 0
    strict: bool = False
    out: str | None = None
    workers: int = 1
    k_min: int | None = None
    k_max: int | None = None
    gamma2: float | None = None
    n_sgd: int = 6400
    sgd_trials: int | None = None
    stream_offset: int = 0
    max_attempts: int | None = None

    def __post_init__(self):
        try:
            fam = Family(self.family)
        except ValueError:
            raise ConfigError(f"unknown family {self.family!r}") from None
        self.family = fam.value
        if self.optimizer is None:
            self.optimizer = DEFAULT_OPTIMIZER[fam]
        self.validate()

    @property
    def fam(self) -> Family:
        return Family(self.family)

    @property
    def deterministic(self) -> bool:
        return self.fam not in STOCHASTIC_FAMILIES

    def validate(self) -> None:
        problems = []
        if self.optimizer not in OPTIMIZERS:
            problems.append(f"optimizer must be one of {', '.join(OPTIMIZERS)}")
        elif self.optimizer not in ALLOWED_OPTIMIZERS[self.fam]:
            problems.append(f"family {self.family} does not run with optimizer {self.optimizer}")
        if self.optimizer == "reg-gd":
            if self.lam is None:
                problems.append("reg-gd needs lambda")
            if self.eta is not None:
                problems.append("reg-gd takes lambda, not eta")
        elif self.optimizer in ("gd", "sgd"):
            if self.eta is None:
                problems.append(f"{self.optimizer} needs eta")
            if self.lam is not None:
                problems.append(f"{self.optimizer} takes eta, not lambda")
        if self.trials < 1:
            problems.append("trials >= 1")
        if self.mc_budget < 2:
            problems.append("mc_budget >= 2")
        if self.workers < 1:
            problems.append("workers >= 1")
        if self.T < 1 or self.n < 1:
            problems.append("n >= 1 and T >= 1")
        if not 0 <= self.seed < 2**64:
            problems.append("seed must be a 64-bit unsigned integer")
        if problems:
            raise ConfigError("invalid config: " + "; ".join(problems))

    # -- file format -------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def resolve_params(config: ExperimentConfig) -> InstanceParams:
    """Build the instance described by ``config``; raises before any trial runs."""
    fam = config.fam
    if fam is Family.HARD_GD:
        params = pick_gd_params(config.n, config.T, config.eta, config.d)
    elif fam is Family.HARD_REG:
        params = pick_reg_params(config.n, config.T, config.lam, config.strict, config.d)
    elif fam is Family.OVERFIT:
        params = pick_overfit_params(config.n, config.T, config.eta, config.d)
    elif fam is Family.OPT_L1:
        params = pick_opt1_params(config.eta, config.T, config.d)
    elif fam is Family.OPT_L2:
        params = pick_opt2_params(config.eta, config.T)
    else:
        params = pick_lambda_params(config.lam, config.T, config.d or 1)
    if config.gamma2 is not None:
        params = params.replace(gamma2=float(config.gamma2))
    return params


# ---------------------------------------------------------------------------
# reports

@dataclass
class TrialRecord:
    trial_id: int
    seed: int
    stream_id: int
    K: int | None
    projections: int
    gap_estimate: float
    gap_stderr: float
    threshold: float
    mc_samples: int
    event: bool | None = None
    extra: dict = field(default_factory=dict)

    def csv_row(self) -> list:
        return [self.trial_id, self.seed, "" if self.K is None else self.K, self.projections,
                repr(self.gap_estimate), repr(self.gap_stderr), repr(self.threshold),
                self.mc_samples, self.stream_id]


@dataclass
class GapReport:
    family: str
    optimizer: str
    trials: int
    mean_gap: float
    stderr: float
    theory_threshold: float
    direction: str
    thresholds: dict
    passed: bool
    conditional: dict | None
    checks: dict
    params: dict
    config: dict
    attempts: int
    records: list[TrialRecord]
    version: str = __version__

    def to_dict(self) -> dict:
        data = asdict(self)
        data["records"] = [asdict(r) for r in self.records]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = out / "report.json"
        report.write_text(self.to_json(), encoding="utf-8")
        trials = out / "trials.csv"
        write_trials_csv(self.records, trials)
        return report, trials

    def status_line(self) -> str:
        rel = ">=" if self.direction == "lower" else "<="
        word = "PASS" if self.passed else "FAIL"
        return (f"{word} {self.family}/{self.optimizer}: mean_gap={self.mean_gap:.6g} "
                f"(stderr {self.stderr:.3g}, {self.trials} trials) {rel} "
                f"threshold {self.theory_threshold:.6g}")


def write_trials_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(r.csv_row())


def _mean_stderr(xs) -> tuple[float, float]:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        return float("nan"), float("nan")
    if xs.size == 1:
        return float(xs[0]), 0.0
    return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(xs.size))


# ---------------------------------------------------------------------------
# thresholds per family

def family_thresholds(config: ExperimentConfig, params: InstanceParams) -> tuple[float, str, dict]:
    """(primary threshold, direction, all reference values)."""
    fam, opt = config.fam, config.optimizer
    if opt == "sgd":
        lip = 3.0 if fam is Family.HARD_GD else 2.0
        bound = an.sgd_bound(config.eta, config.T, lipschitz=lip)
        return bound, "upper", {"sgd_reference": bound}
    if fam is Family.HARD_GD:
        t16 = an.gd_threshold(config.eta, config.T, 1 / 16)
        t8 = an.gd_threshold(config.eta, config.T, 1 / 8)
        return t16, "lower", {"theorem": t16, "proof": t8}
    if fam is Family.HARD_REG:
        t = an.reg_threshold(config.lam, config.T)
        return t, "lower", {"theorem": t}
    if fam is Family.OVERFIT:
        t = an.overfit_threshold(config.n, config.eta, config.T)
        return t, "lower", {"theorem": t}
    if fam is Family.OPT_L1:
        t = an.opt1_threshold(config.eta, config.T)
        return t, "lower", {"theorem": t}
    if fam is Family.OPT_L2:
        t = an.opt2_threshold(config.eta)
        return t, "lower", {"theorem": t}
    t = an.lambda_threshold(config.lam)
    return t, "lower", {"theorem": t}


# ---------------------------------------------------------------------------
# trial selection

def sample_K(params: InstanceParams, stream: RngStream, n: int | None = None) -> int:
    """Bad-set size of the sample drawn from ``stream`` (same draws as draw_sample)."""
    n = params.n if n is None else n
    packed = draw_alphas_packed(stream, n, params.d)
    seen = np.unpackbits(np.bitwise_or.reduce(packed, axis=0), count=params.d, bitorder="little")
    return int(params.d - seen.sum())


def _trial_stream(config: ExperimentConfig, trial_id: int) -> RngStream:
    return RngStream(config.seed, config.stream_offset + trial_id)


def select_trials(config: ExperimentConfig, params: InstanceParams) -> tuple[list[int], int]:
    """Trial ids whose sample satisfies the K filter, and the number of draws tried."""
    if config.deterministic:
        return [0], 1
    if config.optimizer == "sgd" or (config.k_min is None and config.k_max is None):
        return list(range(config.trials)), config.trials
    lo = -1 if config.k_min is None else config.k_min
    hi = params.d if config.k_max is None else config.k_max
    limit = config.max_attempts or 200 * config.trials
    chosen, tid = [], 0
    while len(chosen) < config.trials and tid < limit:
        K = sample_K(params, _trial_stream(config, tid).child(0))
        if lo <= K <= hi:
            chosen.append(tid)
        tid += 1
    if len(chosen) < config.trials:
        raise InfeasibleParametersError(
            "not enough samples pass the K filter",
            [f"{config.k_min} <= K <= {config.k_max}: {len(chosen)} of {config.trials} "
             f"found in {limit} draws"])
    return chosen, tid


# ---------------------------------------------------------------------------
# per-trial work

def _claim_event(K: int, eta: float, T: int) -> bool:
    lo, hi = an.k_interval(eta, T)
    return lo <= K <= hi


def _gd_lemma_check(params, S, badset):
    """Hook plus state comparing run_gd iterates with the closed form."""
    state = {"max_dev": 0.0}

    def hook(t, w, g):
        dev = float(np.max(np.abs(w - an.predicted_gd_iterate(t, params, S, badset))))
        state["max_dev"] = max(state["max_dev"], dev)

    return hook, state


def _reg_checks(params, S, badset):
    failures = []

    def hook(t, w, g):
        if t >= 1 and not an.reg_gradient_form_check(w, S, params, t, badset):
            failures.append(t)

    return hook, failures


def _reg_post_checks(params, S, badset, traj, failures) -> dict:
    T = params.T
    if not an.reg_gradient_form_check(traj.final, S, params, T, badset):
        failures.append(T)
    out = {"gradient_form_ok": not failures, "gradient_form_failures": failures[:16]}
    try:
        sur = an.reg_surrogate(params, badset, T)
    except ProjectionFiredError as exc:
        out.update(late_projection_ok=False, late_projection_error=str(exc))
        return out
    dist = float(np.linalg.norm(traj.averaged - sur.averaged))
    bound = an.surrogate_proximity_bound(params)
    # below this, the two trajectories differ only by float rounding
    rounding = 4 * T * np.finfo(float).eps * max(1.0, float(np.linalg.norm(sur.averaged)))
    coords_mid = sur.coord_values()
    coord_bound = sur.coord_bound()
    h = T // 2
    cf_dev = max(float(np.max(np.abs(sur.closed_form(t0) - sur.coords[t0 - 1])))
                 for t0 in range(h, T + 1))
    late_norms = [float(np.linalg.norm(sur.coords[t - 1])) for t in range(h + 1, T + 1)]
    out.update(
        late_projection_ok=True,
        late_max_norm=max(late_norms) if late_norms else 0.0,
        proximity=dist, proximity_bound=bound, proximity_rounding=rounding,
        proximity_resolvable=bound > rounding, proximity_ok=dist <= bound + rounding,
        coord_bound=coord_bound, coord_max=max(coords_mid.values()) if coords_mid else None,
        coord_bound_ok=all(v <= coord_bound for v in coords_mid.values()),
        closed_form_max_dev=cf_dev, closed_form_ok=cf_dev <= CLOSED_FORM_TOL,
    )
    return out


def run_trial(config: ExperimentConfig, params: InstanceParams, trial_id: int,
              threshold: float, lemma_checks: bool = True) -> TrialRecord:
    stream = _trial_stream(config, trial_id)
    fam = config.fam
    extra: dict = {}
    K = event = None

    if config.deterministic:
        oracle = objective_oracle(params)
        if config.optimizer == "reg-gd":
            traj = run_reg_gd(oracle, config.lam, config.T, params.d)
        else:
            traj = run_gd(oracle, config.eta, config.T, params.d)
        gap = an.deterministic_value(traj.averaged, params) - an.baseline_value(params)
        se, m = 0.0, 0
        if traj.iterates is not None:
            head = [float(w[0]) for w in traj.iterates[1:9]]
            extra["iterates_head"] = head
            if fam is Family.LAMBDA_LB:
                w1 = traj.iterates[1]
                extra["fixed_point_after_step1"] = all(
                    np.array_equal(w, w1) for w in traj.iterates[1:])
        extra["averaged"] = traj.summary()["averaged"]
        return TrialRecord(trial_id, config.seed, stream.stream_id, None, traj.projection_count,
                           float(gap), se, threshold, m, None, extra)

    if config.optimizer == "sgd":
        d = params.d
        traj = run_sgd(point_oracle(params), lambda gen: draw_alpha(gen, d), config.eta,
                       config.T, d, stream.child(2))
    else:
        S = draw_sample(params, stream.child(0))
        badset = an.bad_set(S)
        K = badset.K
        if fam is Family.HARD_GD:
            event = _claim_event(K, config.eta, config.T)
            hook = state = None
            if lemma_checks and not an.gd_lemma_violations(params, badset):
                hook, state = _gd_lemma_check(params, S, badset)
            traj = run_gd(lambda w: empirical_oracle(w, S), config.eta, config.T, params.d,
                          on_step=hook)
            if state is not None:
                hook(config.T, traj.final, None)
                extra["lemma_max_dev"] = state["max_dev"]
                extra["lemma_ok"] = state["max_dev"] <= LEMMA_TOL
        elif fam is Family.HARD_REG:
            checks = lemma_checks and K >= config.T
            hook = failures = None
            if checks:
                hook, failures = _reg_checks(params, S, badset)
            traj = run_reg_gd(lambda w: empirical_oracle(w, S), config.lam, config.T,
                              params.d, on_step=hook)
            if checks:
                extra.update(_reg_post_checks(params, S, badset, traj, failures))
        else:
            traj = run_gd_overfit(S, config.eta, config.T)
            w = traj.averaged
            nrm = float(np.linalg.norm(w))
            extra["norm"] = nrm
            extra["norm_bound"] = 1 - params.d**2 / (config.eta * config.T)
    mc_stream = stream.child(1)
    if fam is Family.OVERFIT and params.d <= an.EXACT_SUPPORT_LIMIT:
        risk, se, m = an.pop_risk_exact(traj.averaged, params), 0.0, 0
    else:
        risk, se = an.pop_risk_mc(traj.averaged, params, config.mc_budget, mc_stream)
        m = config.mc_budget
    gap = risk - an.baseline_value(params)
    if fam is Family.OVERFIT:
        extra["gap_vs_exact_min"] = risk - 1 / params.d
    return TrialRecord(trial_id, config.seed, stream.stream_id, K, traj.projection_count,
                       float(gap), float(se), threshold, m, event, extra)


def _run_trial_args(args):
    return run_trial(*args)


def _map_trials(args_list, workers: int, progress=None) -> list[TrialRecord]:
    out = []
    total = len(args_list)
    if workers > 1 and total > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_trial_args, args_list, chunksize=max(1, total // (4 * workers))):
                out.append(rec)
                if progress:
                    progress(len(out), total)
    else:
        for args in args_list:
            out.append(_run_trial_args(args))
            if progress:
                progress(len(out), total)
    return out


# ---------------------------------------------------------------------------
# experiments

def _aggregate_checks(records: list[TrialRecord]) -> dict:
    checks = {}
    for key in ("lemma_ok", "gradient_form_ok", "late_projection_ok", "proximity_ok", "coord_bound_ok",
                "closed_form_ok", "fixed_point_after_step1"):
        vals = [r.extra[key] for r in records if key in r.extra]
        if vals:
            checks[key] = {"passed": all(vals), "checked": len(vals),
                           "failed": sum(not v for v in vals)}
    devs = [r.extra["lemma_max_dev"] for r in records if "lemma_max_dev" in r.extra]
    if devs:
        checks["lemma_ok"]["max_dev"] = max(devs)
    return checks


def gap_experiment(config: ExperimentConfig, params: InstanceParams | None = None,
                   progress=None) -> GapReport:
    """Run all trials of ``config`` and aggregate the gap estimates."""
    params = resolve_params(config) if params is None else params
    threshold, direction, thresholds = family_thresholds(config, params)
    ids, attempts = select_trials(config, params)
    args = [(config, params, tid, threshold) for tid in ids]
    records = _map_trials(args, config.workers, progress)
    gaps = [r.gap_estimate for r in records]
    mean, se = _mean_stderr(gaps)

    conditional = None
    if any(r.event is not None for r in records):
        cond = [r.gap_estimate for r in records if r.event]
        cm, cse = _mean_stderr(cond)
        lo, hi = an.k_interval(config.eta, config.T)
        conditional = {"event": f"{lo:.6g} <= K <= {hi:.6g}", "count": len(cond),
                       "mean_gap": None if not cond else cm,
                       "stderr": None if not cond else cse}

    checks = _aggregate_checks(records)
    if direction == "upper":
        passed = mean <= threshold
    elif config.deterministic:
        passed = mean >= threshold
    elif config.fam is Family.HARD_GD:
        passed = mean >= thresholds["theorem"] and mean >= thresholds["proof"] - 3 * se
    else:
        passed = mean >= threshold - 3 * se
    passed = passed and all(c["passed"] for c in checks.values())
    return GapReport(
        family=config.family, optimizer=config.optimizer, trials=len(records),
        mean_gap=mean, stderr=se, theory_threshold=threshold, direction=direction,
        thresholds=thresholds, passed=bool(passed), conditional=conditional, checks=checks,
        params=params.to_dict(), config=config.to_dict(), attempts=attempts, records=records,
    )


@dataclass
class KStats:
    trials: int
    fraction: float
    interval: tuple[float, float]
    mean_K: float
    expected_K: float
    min_K: int
    max_K: int
    d: int
    passed: bool
    Ks: list[int]

    def to_dict(self) -> dict:
        return asdict(self)

    def status_line(self) -> str:
        word = "PASS" if self.passed else "FAIL"
        lo, hi = self.interval
        return (f"{word} k-stats: fraction {self.fraction:.4f} of {self.trials} samples with "
                f"{lo:.4g} <= K <= {hi:.4g} (need >= 0.74); mean K {self.mean_K:.2f}, "
                f"expected {self.expected_K:.2f}")


def k_concentration(config: ExperimentConfig, d: int | None = None) -> KStats:
    """Fraction of samples whose bad set size lies in the concentration interval."""
    eta = config.eta
    if eta is None:
        raise ConfigError("k-stats needs eta")
    d = d or config.d or config.T * 2 ** (config.n + 5)
    bad = an.claim_window_violations(config.n, d, eta, config.T)
    if bad:
        raise InfeasibleParametersError("concentration window violated", bad)
    params = InstanceParams(family=Family.HARD_GD, d=d, n=config.n)
    Ks = [sample_K(params, _trial_stream(config, t).child(0)) for t in range(config.trials)]
    lo, hi = an.k_interval(eta, config.T)
    arr = np.array(Ks)
    frac = float(np.mean((arr >= lo) & (arr <= hi)))
    return KStats(trials=config.trials, fraction=frac, interval=(lo, hi), mean_K=float(arr.mean()),
                  expected_K=d / 2**config.n, min_K=int(arr.min()), max_K=int(arr.max()), d=d,
                  passed=frac >= 0.74, Ks=[int(k) for k in Ks])


# ---------------------------------------------------------------------------
# verification

@dataclass
class VerifyReport:
    family: str
    checks: dict
    trials: int
    params: dict
    config: dict
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data

    def lines(self) -> list[str]:
        out = []
        for name, c in self.checks.items():
            word = "PASS" if c["passed"] else "FAIL"
            detail = ", ".join(f"{k}={v}" for k, v in c.items() if k != "passed")
            out.append(f"{word} {name} ({detail})")
        return out


def verify(config: ExperimentConfig, progress=None) -> VerifyReport:
    """Check the closed-form trajectory lemmas on sampled instances."""
    fam = config.fam
    if fam not in (Family.HARD_GD, Family.HARD_REG):
        raise ConfigError("verify supports hard-gd and hard-reg")
    params = resolve_params(config)
    if fam is Family.HARD_GD:
        bad = params.gd_violations()
        if bad:
            raise LemmaPreconditionError("lemma preconditions unmet", bad)
        k_max = math.floor(3 / (4 * config.eta**2))
        cfg = config.replace(k_max=k_max if config.k_max is None else min(config.k_max, k_max))
    else:
        cfg = config.replace(k_min=max(config.T, config.k_min or 0))
    ids, _ = select_trials(cfg, params)
    records = []
    for i, tid in enumerate(ids):
        records.append(_verify_trial(cfg, params, tid))
        if progress:
            progress(i + 1, len(ids))
    checks = {}
    if fam is Family.HARD_GD:
        devs = [r["lemma_max_dev"] for r in records]
        Ks = [r["K"] for r in records]
        checks["trajectory_equivalence"] = {
            "passed": max(devs) <= LEMMA_TOL, "max_dev": max(devs), "trials": len(records),
            "trials_with_K_below_T": sum(k < config.T for k in Ks)}
    else:
        def agg(key):
            return all(r.get(key, False) for r in records)
        checks["gradient_form"] = {"passed": agg("gradient_form_ok"),
                                   "steps": f"1..{config.T}", "trials": len(records)}
        checks["no_late_projection"] = {"passed": agg("late_projection_ok"), "trials": len(records)}
        checks["surrogate_closed_form"] = {
            "passed": agg("closed_form_ok"),
            "max_dev": max((r.get("closed_form_max_dev", math.inf) for r in records))}
        checks["surrogate_coordinate_bound"] = {
            "passed": agg("coord_bound_ok"), "bound": records[0].get("coord_bound"),
            "worst": max((r.get("coord_max") or -math.inf) for r in records)}
        checks["surrogate_proximity"] = {
            "passed": agg("proximity_ok"), "bound": records[0].get("proximity_bound"),
            "rounding_allowance": records[0].get("proximity_rounding"),
            "worst": max(r.get("proximity", math.inf) for r in records)}
    return VerifyReport(family=config.family, checks=checks, trials=len(records),
                        params=params.to_dict(), config=config.to_dict())


def _verify_trial(config, params, tid) -> dict:
    stream = _trial_stream(config, tid)
    S = draw_sample(params, stream.child(0))
    badset = an.bad_set(S)
    oracle = lambda w: empirical_oracle(w, S)  # noqa: E731
    if params.family is Family.HARD_GD:
        hook, state = _gd_lemma_check(params, S, badset)
        traj = run_gd(oracle, config.eta, config.T, params.d, on_step=hook)
        hook(config.T, traj.final, None)
        return {"K": badset.K, "lemma_max_dev": state["max_dev"]}
    hook, failures = _reg_checks(params, S, badset)
    traj = run_reg_gd(oracle, config.lam, config.T, params.d, on_step=hook)
    out = _reg_post_checks(params, S, badset, traj, failures)
    out["K"] = badset.K
    return out


# ---------------------------------------------------------------------------
# separation

@dataclass
class SeparationReport:
    gd: GapReport
    sgd: GapReport
    ratio: float
    passed: bool
    version: str = __version__

    def to_dict(self) -> dict:
        return {"gd": self.gd.to_dict(), "sgd": self.sgd.to_dict(), "ratio": self.ratio,
                "passed": self.passed, "version": self.version,
                "note": "SGD gap is F(w_S) - F(0); F(0) = 0 upper-bounds min F, so the SGD "
                        "number is an upper estimate of its gap only up to that baseline"}

    def lines(self) -> list[str]:
        return [self.gd.status_line(), self.sgd.status_line(),
                f"{'PASS' if self.passed else 'FAIL'} separation: GD/SGD gap ratio {self.ratio:.4g}"]


def separation(config: ExperimentConfig, progress=None) -> SeparationReport:
    """GD at (n, T, eta) against SGD with n_sgd steps on the same distribution."""
    if config.fam is not Family.HARD_GD:
        raise ConfigError("separation runs on hard-gd")
    gd_cfg = config.replace(optimizer="gd")
    params = resolve_params(gd_cfg)
    n_sgd = config.n_sgd
    sgd_cfg = config.replace(optimizer="sgd", n=n_sgd, T=n_sgd, eta=1 / (3 * math.sqrt(n_sgd)),
                             trials=config.sgd_trials or config.trials, k_min=None, k_max=None,
                             stream_offset=config.stream_offset + SGD_STREAM_OFFSET)
    gd = gap_experiment(gd_cfg, params, progress)
    sgd = gap_experiment(sgd_cfg, params, progress)
    gd_ok = gd.mean_gap >= gd.thresholds["proof"] - 3 * gd.stderr
    ratio = gd.mean_gap / sgd.mean_gap if sgd.mean_gap > 0 else math.inf
    return SeparationReport(gd=gd, sgd=sgd, ratio=ratio,
                            passed=bool(gd_ok and sgd.passed and ratio > 1))


# ---------------------------------------------------------------------------
# (eta, T) sweep against the main rate shape

def window_dimension(n: int, eta: float, T: int) -> int:
    """A d inside the concentration window (geometric mean of its ends)."""
    lo = 2**n * max(16, min(2 * T, 1 / (3 * eta**2)))
    hi = 2**n / (2 * eta**2)
    if lo > hi:
        raise InfeasibleParametersError("empty concentration window", [f"{lo:.4g} > {hi:.4g}"])
    return int(round(math.sqrt(lo * hi)))


def shape_sweep(etas, n: int = 4, T: int = 256, trials: int = 20, mc_budget: int = 1000,
                seed: int = 0) -> dict:
    """Measured gaps over eta against min{eta sqrt(T) + 1/(eta T), 1} in rank order."""
    points = []
    for eta in etas:
        d = window_dimension(n, eta, T)
        hard = gap_experiment(ExperimentConfig(family="hard-gd", n=n, T=T, d=d, eta=eta,
                                               trials=trials, mc_budget=mc_budget, seed=seed))
        opt = gap_experiment(ExperimentConfig(family="opt-l1", T=T, eta=eta))
        points.append({"eta": eta, "T": T, "d": d, "shape": an.main_shape(eta, T),
                       "hard_gd_gap": hard.mean_gap, "hard_gd_stderr": hard.stderr,
                       "opt_l1_gap": opt.mean_gap,
                       "measured": max(hard.mean_gap, opt.mean_gap)})
    shape_rank = np.argsort([p["shape"] for p in points], kind="stable")
    meas_rank = np.argsort([p["measured"] for p in points], kind="stable")
    return {"points": points, "rank_consistent": bool(np.array_equal(shape_rank, meas_rank))}


def stderr_progress(label: str):
    def report(done, total):
        if done == total or done % max(1, total // 10) == 0:
            print(f"[{label}] {done}/{total} trials", file=sys.stderr, flush=True)
    return report
