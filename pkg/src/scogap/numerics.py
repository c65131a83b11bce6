"""Vector helpers shared by the constructions and optimizers.

Vectors are plain ``float64`` numpy arrays. Every public helper returns a new
array and never mutates its input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DIM = 2**23


def as_vector(w, d: int | None = None) -> np.ndarray:
    """Coerce ``w`` to a 1-d float64 array, checking length and finiteness."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 0:
        w = w.reshape(1)
    if w.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {w.shape}")
    if d is not None and w.shape[0] != d:
        raise ValueError(f"dimension mismatch: expected {d}, got {w.shape[0]}")
    if w.shape[0] > MAX_DIM:
        raise ValueError(f"dimension {w.shape[0]} exceeds guard {MAX_DIM}")
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite vector")
    return w


def basis(d: int, i: int) -> np.ndarray:
    e = np.zeros(d)
    e[i] = 1.0
    return e


def project_unit_ball(w) -> np.ndarray:
    """Euclidean projection onto the closed unit ball."""
    w = as_vector(w)
    norm = np.linalg.norm(w)
    if norm <= 1.0:
        return w.copy()
    return w / norm


# ---------------------------------------------------------------------------
# averaging

def uniform_weights(T: int) -> np.ndarray:
    if T < 1:
        raise ValueError("T must be >= 1")
    return np.full(T, 1.0 / T)


def triangular_weights(T: int) -> np.ndarray:
    """Weights 2t/(T(T+1)) for t = 1..T."""
    if T < 1:
        raise ValueError("T must be >= 1")
    t = np.arange(1, T + 1, dtype=np.float64)
    return 2.0 * t / (T * (T + 1))


def check_weights(weights) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("weights must be a nonempty 1-d array")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
    return weights


def weighted_average(iterates, weights) -> np.ndarray:
    """Return sum_t weights[t] * iterates[t]."""
    weights = check_weights(weights)
    if len(iterates) != weights.size:
        raise ValueError(
            f"length mismatch: {len(iterates)} iterates, {weights.size} weights"
        )
    stacked = np.stack([as_vector(v) for v in iterates])
    return weights @ stacked


class RunningAverage:
    """Accumulates sum_t c_t w_t / sum_t c_t with integer coefficients c_t.

    Integer coefficients keep the result exact for constant and dyadic
    sequences (e.g. averaging 0.5, 0, 0.5, 0 gives exactly 0.25).
    """

    def __init__(self, d: int, scheme: str):
        if scheme not in ("uniform", "triangular"):
            raise ValueError(f"unknown averaging scheme {scheme!r}")
        self.scheme = scheme
        self.total = np.zeros(d)
        self.mass = 0
        self.count = 0

    def add(self, w: np.ndarray) -> None:
        self.count += 1
        c = 1 if self.scheme == "uniform" else self.count
        self.total += c * w
        self.mass += c

    def value(self) -> np.ndarray:
        if self.mass == 0:
            raise ValueError("empty average")
        return self.total / self.mass

    def weights(self) -> np.ndarray:
        if self.scheme == "uniform":
            return uniform_weights(self.count)
        return triangular_weights(self.count)


# ---------------------------------------------------------------------------
# randomness

@dataclass(frozen=True)
class RngStream:
    """Seeded, splittable random stream.

    Backed by numpy's Philox counter-based bit generator keyed through a
    ``SeedSequence(seed, spawn_key=(stream_id, *path))``; identical
    ``(seed, stream_id, path)`` triples give identical draws on any platform.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for v in (self.seed, self.stream_id, *self.path):
            if not 0 <= int(v) < 2**64:
                raise ValueError("seed and stream ids must be 64-bit unsigned")

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + (int(k),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.Philox(ss))


def random_ball_points(gen: np.random.Generator, m: int, d: int, radius: float = 1.0) -> np.ndarray:
    """m points drawn uniformly from the d-dimensional ball of given radius."""
    x = gen.standard_normal((m, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    r = radius * gen.random(m) ** (1.0 / d)
    return x * r[:, None]


# ---------------------------------------------------------------------------
# oracle checking

@dataclass
class SubgradCheckReport:
    central_differences: np.ndarray
    subgradient: np.ndarray
    max_abs_difference: float
    residuals: np.ndarray
    min_residual: float
    tolerance: float

    @property
    def violations(self) -> int:
        return int(np.sum(self.residuals < -self.tolerance))

    @property
    def ok(self) -> bool:
        return self.violations == 0


def finite_diff_subgrad_check(value_fn, subgrad_fn, w, step: float = 1e-6, *,
                              probes: int = 32, tolerance: float = 1e-9,
                              rng: np.random.Generator | None = None) -> SubgradCheckReport:
    """Compare a subgradient oracle against central differences.

    Also evaluates the subgradient inequality f(u) - f(w) - g.(u - w) at
    ``probes`` random points u of the unit ball; negative residuals beyond
    ``tolerance`` are counted as violations.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    w = as_vector(w)
    d = w.size
    g = as_vector(subgrad_fn(w), d)
    diffs = np.empty(d)
    for i in range(d):
        up = w.copy()
        dn = w.copy()
        up[i] += step
        dn[i] -= step
        diffs[i] = (value_fn(up) - value_fn(dn)) / (2 * step)
    rng = rng if rng is not None else np.random.default_rng(0)
    fw = value_fn(w)
    residuals = np.array([
        value_fn(u) - fw - g @ (u - w) for u in random_ball_points(rng, probes, d)
    ])
    return SubgradCheckReport(
        central_differences=diffs,
        subgradient=g,
        max_abs_difference=float(np.max(np.abs(diffs - g))) if d else 0.0,
        residuals=residuals,
        min_residual=float(residuals.min()) if residuals.size else 0.0,
        tolerance=tolerance,
    )


@dataclass
class PropertyReport:
    probes: int
    convexity_violations: int
    subgradient_violations: int
    lipschitz_violations: int
    worst_convexity: float
    worst_subgradient: float
    worst_lipschitz_ratio: float

    @property
    def ok(self) -> bool:
        return not (self.convexity_violations or self.subgradient_violations
                    or self.lipschitz_violations)


def oracle_properties(oracle, d: int, lipschitz: float, probes: int = 1000, *,
                      gen: np.random.Generator | None = None,
                      tolerance: float = 1e-9) -> PropertyReport:
    """Probe convexity, the subgradient inequality and a Lipschitz bound.

    ``oracle(w) -> (value, subgrad)``. Probe points are uniform in the unit
    ball, rescaled by a random factor in [1e-6, 1] so that both the origin
    region and the boundary get exercised.
    """
    gen = gen if gen is not None else np.random.default_rng(0)

    def points():
        x = random_ball_points(gen, probes, d)
        return x * (10.0 ** (-6 * gen.random(probes)))[:, None]

    W, U = points(), points()
    theta = gen.random(probes)
    conv = sub = lip = 0
    worst_c = worst_s = worst_l = 0.0
    for w, u, th in zip(W, U, theta):
        fw, gw = oracle(w)
        fu, _ = oracle(u)
        fm, _ = oracle(th * w + (1 - th) * u)
        c = fm - (th * fw + (1 - th) * fu)
        s = fu - fw - float(np.dot(gw, u - w))
        dist = float(np.linalg.norm(w - u))
        excess = abs(fw - fu) - lipschitz * dist
        conv += c > tolerance
        sub += s < -tolerance
        lip += excess > tolerance
        worst_c = max(worst_c, c)
        worst_s = min(worst_s, s)
        if dist > 0:
            worst_l = max(worst_l, abs(fw - fu) / dist)
    return PropertyReport(probes, int(conv), int(sub), int(lip), worst_c, worst_s, worst_l)
