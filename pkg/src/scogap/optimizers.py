"""Projected GD, SGD and regularized GD over the unit ball.

All runners start from w_0 = 0 and take an oracle ``w -> (value, subgrad)``
(SGD: ``(w, z) -> (value, subgrad)`` plus a sampler ``gen -> z``). The
optional ``on_step(t, w_t, grad_t)`` hook sees each iterate and the
subgradient used to leave it.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .constructions import Family, Sample
from .numerics import RngStream, RunningAverage, as_vector

# default cap on stored iterate entries, (T + 1) * d
MAX_STORED_ENTRIES = 2**22


@dataclass
class Trajectory:
    averaged: np.ndarray
    final: np.ndarray
    step_sizes: np.ndarray
    scheme: str
    projected: np.ndarray
    iterates: list[np.ndarray] | None = None
    values: np.ndarray | None = None
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)
    draws: list | None = None

    @property
    def T(self) -> int:
        return int(self.projected.size)

    @property
    def projection_count(self) -> int:
        return int(self.projected.sum())

    @property
    def projection_steps(self) -> list[int]:
        """Indices t + 1 of iterates that were produced by a projection."""
        return [int(t) + 1 for t in np.flatnonzero(self.projected)]

    def summary(self, max_elements: int = 64) -> dict:
        return {
            "scheme": self.scheme,
            "T": self.T,
            "averaged": vector_summary(self.averaged, max_elements),
            "final": vector_summary(self.final, max_elements),
            "projection_count": self.projection_count,
            "projection_steps": self.projection_steps[:max_elements],
            "step_sizes": _step_size_summary(self.step_sizes),
        }


def vector_summary(v: np.ndarray, max_elements: int = 64) -> dict:
    """Full values for short vectors; norm and support digest otherwise."""
    out = {"d": int(v.size), "norm": float(np.linalg.norm(v))}
    if v.size <= max_elements:
        out["values"] = [float(x) for x in v]
    else:
        support = np.flatnonzero(v).astype(np.int64)
        out["support_size"] = int(support.size)
        out["support_sha256"] = hashlib.sha256(support.tobytes()).hexdigest()
    return out


def _step_size_summary(steps: np.ndarray) -> dict:
    if steps.size and np.all(steps == steps[0]):
        return {"constant": float(steps[0]), "count": int(steps.size)}
    return {"first": [float(x) for x in steps[:4]], "last": float(steps[-1]),
            "count": int(steps.size)}


class _Recorder:
    def __init__(self, d: int, T: int, scheme: str, max_entries: int, checkpoints):
        self.keep = (T + 1) * d <= max_entries
        self.iterates = [np.zeros(d)] if self.keep else None
        self.checkpoints = {int(t): None for t in checkpoints}
        if 0 in self.checkpoints:
            self.checkpoints[0] = np.zeros(d)
        self.avg = RunningAverage(d, scheme)
        self.projected = np.zeros(T, dtype=bool)
        self.values = np.empty(T)

    def record(self, t: int, value: float, w_next: np.ndarray, projected: bool) -> None:
        self.values[t] = value
        self.projected[t] = projected
        self.avg.add(w_next)
        if self.keep:
            self.iterates.append(w_next)
        if t + 1 in self.checkpoints:
            self.checkpoints[t + 1] = w_next.copy()

    def finish(self, w: np.ndarray, steps: np.ndarray, draws=None) -> Trajectory:
        return Trajectory(
            averaged=self.avg.value(), final=w, step_sizes=steps, scheme=self.avg.scheme,
            projected=self.projected, iterates=self.iterates, values=self.values,
            checkpoints={t: v for t, v in self.checkpoints.items() if v is not None},
            draws=draws,
        )


def _project(x: np.ndarray) -> tuple[np.ndarray, bool]:
    norm = math.sqrt(float(x @ x))
    if norm > 1.0:
        return x / norm, True
    return x, False


def _check_run_args(T: int, d: int) -> None:
    if T < 1:
        raise ValueError("T must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")


def run_gd(oracle, eta: float, T: int, d: int, *, on_step=None,
           max_entries: int = MAX_STORED_ENTRIES, checkpoints=()) -> Trajectory:
    """w_{t+1} = P(w_t - eta grad F_S(w_t)); output is the uniform average of w_1..w_T."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    _check_run_args(T, d)
    rec = _Recorder(d, T, "uniform", max_entries, checkpoints)
    w = np.zeros(d)
    for t in range(T):
        value, g = oracle(w)
        g = as_vector(g, d)
        if on_step is not None:
            on_step(t, w, g)
        w, proj = _project(w - eta * g)
        rec.record(t, value, w, proj)
    return rec.finish(w, np.full(T, float(eta)))


def run_sgd(oracle, draw, eta: float, T: int, d: int, rng, *, on_step=None,
            max_entries: int = MAX_STORED_ENTRIES, checkpoints=()) -> Trajectory:
    """Each step draws a fresh z = draw(gen) and steps along oracle(w_t, z)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    _check_run_args(T, d)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    rec = _Recorder(d, T, "uniform", max_entries, checkpoints)
    draws = [] if rec.keep else None
    w = np.zeros(d)
    for t in range(T):
        z = draw(gen)
        if draws is not None:
            draws.append(z)
        value, g = oracle(w, z)
        g = as_vector(g, d)
        if on_step is not None:
            on_step(t, w, g)
        w, proj = _project(w - eta * g)
        rec.record(t, value, w, proj)
    return rec.finish(w, np.full(T, float(eta)), draws)


def run_reg_gd(oracle, lam: float, T: int, d: int, *, on_step=None,
               max_entries: int = MAX_STORED_ENTRIES, checkpoints=()) -> Trajectory:
    """GD on F_S + (lam/2)||w||^2 with eta_t = 2/(lam(t+1)).

    Moving from w_t to w_{t+1} uses eta_{t+1} = 2/(lam(t+2)); the output is
    the triangular average sum_t 2t/(T(T+1)) w_t.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    _check_run_args(T, d)
    rec = _Recorder(d, T, "triangular", max_entries, checkpoints)
    steps = np.array([2.0 / (lam * (t + 2)) for t in range(T)])
    w = np.zeros(d)
    for t in range(T):
        value, g = oracle(w)
        g = as_vector(g, d)
        if on_step is not None:
            on_step(t, w, g)
        w, proj = _project(w - steps[t] * (lam * w + g))
        rec.record(t, value, w, proj)
    return rec.finish(w, steps)


# ---------------------------------------------------------------------------
# compiled path for the over-training instance (T ~ 2^22 steps, d = 8)

@njit(cache=True)
def _overfit_gd_kernel(bits, eta, T):
    n, d = bits.shape
    w = np.zeros(d)
    total = np.zeros(d)
    coef = np.empty(n)
    projected = np.zeros(T, dtype=np.bool_)
    inv_d2 = 1.0 / (d * d)
    for t in range(T):
        for j in range(n):
            s = 0.0
            for i in range(d):
                s += bits[j, i] * (w[i] * w[i])
            coef[j] = 1.0 / math.sqrt(s) if s > 0.0 else 0.0
        nrm = 0.0
        for i in range(d):
            acc = 0.0
            for j in range(n):
                acc += coef[j] * bits[j, i]
            g = w[i] * acc / n - inv_d2
            w[i] = w[i] - eta * g
            nrm += w[i] * w[i]
        if nrm > 1.0:
            nrm = math.sqrt(nrm)
            for i in range(d):
                w[i] = w[i] / nrm
            projected[t] = True
        for i in range(d):
            total[i] += w[i]
    return total / T, w, projected


def run_gd_overfit(S: Sample, eta: float, T: int) -> Trajectory:
    """Compiled GD on the over-training instance; stores no iterates."""
    if S.params.family is not Family.OVERFIT:
        raise ValueError("run_gd_overfit needs an overfit sample")
    if not eta > 0:
        raise ValueError("eta must be positive")
    _check_run_args(T, S.d)
    averaged, final, projected = _overfit_gd_kernel(S.bits_float, float(eta), int(T))
    return Trajectory(averaged=averaged, final=final, step_sizes=np.full(T, float(eta)),
                      scheme="uniform", projected=projected)
