"""Closed-form trajectories, risk evaluators and reference thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constructions import (
    Family,
    InstanceParams,
    Sample,
    _r_eps,
    draw_alphas_packed,
    empirical_oracle,
    lambda_lb_oracle,
    opt1_oracle,
    opt2_oracle,
    shifted_hinge,
)
from .errors import LemmaPreconditionError, ProjectionFiredError
from .numerics import as_vector

EXACT_SUPPORT_LIMIT = 20


@dataclass(frozen=True)
class BadSet:
    """Coordinates left at zero by every point of the sample, sorted."""

    indices: np.ndarray

    @property
    def K(self) -> int:
        return int(self.indices.size)

    def __len__(self) -> int:
        return self.K


def bad_set(S: Sample) -> BadSet:
    idx = np.flatnonzero(S.counts == 0)
    idx.flags.writeable = False
    return BadSet(idx)


# ---------------------------------------------------------------------------
# unregularized GD: closed-form iterates

def k_interval(eta: float, T: int) -> tuple[float, float]:
    """Range of K that the concentration claim guarantees with prob. >= 3/4."""
    return min(T, 1 / (6 * eta**2)), 3 / (4 * eta**2)


def gd_lemma_violations(params: InstanceParams, badset: BadSet) -> list[str]:
    out = params.gd_violations()
    if not badset.K <= 3 / (4 * params.eta**2):
        out.append(f"K <= 3/(4 eta^2) (K={badset.K})")
    return out


def predicted_gd_iterate(t: int, params: InstanceParams, S: Sample, badset: BadSet | None = None) -> np.ndarray:
    """w_t = -eta t g1 vbar - eta sum_{s <= min(t-1, K)} e_{i_s}."""
    if params.family is not Family.HARD_GD:
        raise ValueError("predicted_gd_iterate needs a hard-gd instance")
    badset = bad_set(S) if badset is None else badset
    bad = gd_lemma_violations(params, badset)
    if bad:
        raise LemmaPreconditionError("lemma preconditions unmet", bad)
    if not 0 <= t <= params.T:
        raise ValueError(f"t must lie in [0, {params.T}]")
    w = -params.eta * t * params.gamma1 * S.vbar
    m = min(t - 1, badset.K)
    if m > 0:
        w[badset.indices[:m]] -= params.eta
    return w


# ---------------------------------------------------------------------------
# regularized GD: gradient form and surrogate sequence

def reg_gradient_form_check(w_t, S: Sample, params: InstanceParams, t: int, badset: BadSet) -> bool:
    """True iff grad F_S(w_t) == g1 vbar + g3 e_{i_t} exactly (t is 1-based)."""
    if not 1 <= t <= badset.K:
        return False
    _, g = empirical_oracle(w_t, S)
    expected = params.gamma1 * S.vbar
    expected[badset.indices[t - 1]] += params.gamma3
    return bool(np.array_equal(g, expected))


@dataclass
class Surrogate:
    """Projection-free reference sequence w'_1..w'_T on the bad coordinates.

    ``coords[t - 1]`` holds w'_t restricted to (i_1, ..., i_T); all other
    coordinates of w'_t are zero.
    """

    params: InstanceParams
    indices: np.ndarray
    coords: np.ndarray
    averaged_coords: np.ndarray
    projected: np.ndarray

    @property
    def T(self) -> int:
        return self.coords.shape[0]

    def embed(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.params.d)
        out[self.indices] = x
        return out

    @property
    def averaged(self) -> np.ndarray:
        return self.embed(self.averaged_coords)

    def iterate(self, t: int) -> np.ndarray:
        return self.embed(self.coords[t - 1])

    def closed_form(self, t0: int) -> np.ndarray:
        """w'_{t0} for t0 >= T/2 unrolled from w'_{T/2} (coordinates only).

        w'_{t0} = 2/(lam t0 (t0+1)) (c w'_h - g3 sum_{k=h+1}^{t0} k e_{i_{k-1}}),
        h = T // 2, c = lam h (h+1) / 2.
        """
        h = self.T // 2
        if not h <= t0 <= self.T:
            raise ValueError("closed form holds for T/2 <= t0 <= T")
        lam, g3 = self.params.lam, self.params.gamma3
        acc = lam * h * (h + 1) / 2 * self.coords[h - 1]
        for k in range(h + 1, t0 + 1):
            acc[k - 2] -= g3 * k
        return 2 / (lam * t0 * (t0 + 1)) * acc

    def coord_bound(self) -> float:
        return -self.params.gamma3 / (2 * self.params.lam * (self.T + 1))

    def coord_values(self) -> dict[int, float]:
        """w'_S(i_{t0}) for T/2 < t0 <= 3T/4."""
        T = self.T
        return {t0: float(self.averaged_coords[t0 - 1])
                for t0 in range(T // 2 + 1, (3 * T) // 4 + 1)}


def reg_surrogate(params: InstanceParams, badset: BadSet, T: int | None = None) -> Surrogate:
    """w'_1 = 0, w'_{t+1} = P[(1 - eta_{t+1} lam) w'_t - eta_{t+1} g3 e_{i_t}].

    Raises ProjectionFiredError if any w'_{t} with t > T/2 needed a projection.
    """
    T = params.T if T is None else T
    if badset.K < T:
        raise LemmaPreconditionError("surrogate needs K >= T", [f"K >= T (K={badset.K}, T={T})"])
    lam, g3 = params.lam, params.gamma3
    x = np.zeros(T)
    coords = np.zeros((T, T))
    avg_total = np.zeros(T)
    projected = np.zeros(T, dtype=bool)  # projected[t-1]: w'_t came out of a projection
    avg_total += 1 * x
    for t in range(1, T):
        step = 2.0 / (lam * (t + 2))
        y = (1 - step * lam) * x
        y[t - 1] -= step * g3
        norm = math.sqrt(float(y @ y))
        if norm > 1.0:
            y = y / norm
            projected[t] = True
        x = y
        coords[t] = x
        avg_total += (t + 1) * x
    late = np.flatnonzero(projected[T // 2:])
    if late.size:
        raise ProjectionFiredError(
            f"late projection: surrogate projected at t={int(late[0]) + T // 2 + 1} > T/2")
    return Surrogate(params=params, indices=badset.indices[:T].copy(), coords=coords,
                     averaged_coords=avg_total / (T * (T + 1) / 2), projected=projected)


def surrogate_proximity_bound(params: InstanceParams) -> float:
    return params.gamma1 * math.sqrt(params.d) / params.lam


# ---------------------------------------------------------------------------
# population risk

def _mean_v(n: int) -> float:
    return 0.5 * (1 - 1 / (2 * n))


def _root_inputs(w: np.ndarray, params: InstanceParams) -> np.ndarray:
    """The vector whose alpha-masked norm forms the root term."""
    if params.family in (Family.HARD_GD, Family.HARD_REG):
        return shifted_hinge(w, params.gamma2)
    if params.family is Family.OVERFIT:
        return w
    raise ValueError(f"{params.family.value} has no root term")


def _smooth_part(w: np.ndarray, params: InstanceParams) -> float:
    """E_alpha of everything but the root term."""
    if params.family in (Family.HARD_GD, Family.HARD_REG):
        r, _ = _r_eps(w, params.epsilon)
        return params.gamma1 * _mean_v(params.n) * float(w.sum()) + params.gamma3 * r
    d = params.d
    return float(np.sum(1.0 - w)) / d**2


def deterministic_value(w, params: InstanceParams) -> float:
    fam = params.family
    w = as_vector(w, params.d)
    if fam is Family.OPT_L1:
        return opt1_oracle(w, params)[0]
    if fam is Family.OPT_L2:
        return opt2_oracle(w, params.eta)[0]
    if fam is Family.LAMBDA_LB:
        return lambda_lb_oracle(w, params.lam)[0]
    raise ValueError(f"{fam.value} is stochastic")


def expected_root(c: np.ndarray) -> float:
    """E sqrt(sum_i a_i c_i) over uniform a in {0,1}^s by enumeration."""
    sums = np.zeros(1)
    for ci in c:
        sums = np.concatenate([sums, sums + ci])
    return float(np.mean(np.sqrt(sums)))


def _binomial_root_mean(s: int) -> float:
    """E sqrt(Bin(s, 1/2))."""
    k = np.arange(s + 1)
    logp = np.array([math.lgamma(s + 1) - math.lgamma(j + 1) - math.lgamma(s - j + 1)
                     for j in k]) - s * math.log(2)
    return float(np.sum(np.exp(logp) * np.sqrt(k)))


def pop_risk_exact(w, params: InstanceParams) -> float:
    """Exact E_alpha f(w; alpha).

    The root term is enumerated over the active support when it has at most
    20 coordinates, or summed in binomial closed form when all active
    magnitudes coincide.
    """
    w = as_vector(w, params.d)
    if params.family not in (Family.HARD_GD, Family.HARD_REG, Family.OVERFIT):
        return deterministic_value(w, params)
    h = _root_inputs(w, params)
    mags = np.abs(h[h != 0])
    if mags.size <= EXACT_SUPPORT_LIMIT:
        root = expected_root(mags**2)
    elif np.all(mags == mags[0]):
        root = float(mags[0]) * _binomial_root_mean(mags.size)
    else:
        raise ValueError(f"active support {mags.size} too large for enumeration; use MC")
    return root + _smooth_part(w, params)


_BIT_TABLE = ((np.arange(256)[None, :] >> np.arange(8)[:, None]) & 1).astype(np.float64)


def pop_risk_mc(w, params: InstanceParams, m: int, rng, chunk: int = 512) -> tuple[float, float]:
    """Monte Carlo estimate of E_alpha f(w; alpha) over m fresh draws.

    Returns (mean, standard error). Alphas are drawn packed; the dot products
    alpha.w come from a per-byte lookup table so no d-wide float matrix is
    formed.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    w = as_vector(w, params.d)
    if params.family not in (Family.HARD_GD, Family.HARD_REG, Family.OVERFIT):
        v = deterministic_value(w, params)
        return v, 0.0
    d = params.d
    packed = draw_alphas_packed(rng, m, d)
    h = _root_inputs(w, params)
    active = np.flatnonzero(h)
    hh = h[active] ** 2
    byte_col, bit_pos = active // 8, (active % 8).astype(np.uint8)
    if params.family is Family.OVERFIT:
        lin_scale, lin_shift = 0.0, 0.0
        lut = None
    else:
        n = params.n
        lin_scale = params.gamma1 * (1 + 1 / (2 * n))
        lin_shift = -params.gamma1 / (2 * n) * float(w.sum())
        B = packed.shape[1]
        wpad = np.zeros(8 * B)
        wpad[:d] = w
        lut = wpad.reshape(B, 8) @ _BIT_TABLE
        cols = np.arange(B)
    if params.family is Family.OVERFIT:
        const = float(np.sum(1.0 - w)) / d**2
    else:
        const = lin_shift + params.gamma3 * _r_eps(w, params.epsilon)[0]
    vals = np.empty(m)
    for lo in range(0, m, chunk):
        block = packed[lo:lo + chunk]
        bits = (block[:, byte_col] >> bit_pos) & 1
        part = np.sqrt(bits @ hh) if active.size else np.zeros(block.shape[0])
        if lut is not None:
            part = part + lin_scale * lut[cols, block].sum(axis=1)
        vals[lo:lo + chunk] = part + const
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m))


def jensen_lower_bound(w, params: InstanceParams) -> float:
    """Convexity lower bound on the population risk.

    alpha -> ||alpha * h|| is convex, so E ||alpha * h|| >= ||h|| / 2; the
    r_eps term (nonnegative) is dropped for the hard families.
    """
    w = as_vector(w, params.d)
    h = _root_inputs(w, params)
    root = 0.5 * float(np.linalg.norm(h))
    if params.family is Family.OVERFIT:
        return root + _smooth_part(w, params)
    return root + params.gamma1 * _mean_v(params.n) * float(w.sum())


# ---------------------------------------------------------------------------
# reference thresholds and baselines

def gd_threshold(eta: float, T: int, constant: float = 1 / 16) -> float:
    return constant * min(eta * math.sqrt(T), 1 / 3)


def reg_threshold(lam: float, T: int) -> float:
    return 0.75 * min(1 / (8 * lam * math.sqrt(T + 1)), 1 / 16)


def overfit_threshold(n: int, eta: float, T: int) -> float:
    return max(1 / 8 - 2 ** (2 * n + 2) / (4 * eta * T), 0.0)


def opt1_threshold(eta: float, T: int) -> float:
    return min(1 / (36 * eta * T), 0.25)


def opt2_threshold(eta: float) -> float:
    return 0.25 * min(eta, 4 / 3)


def lambda_threshold(lam: float) -> float:
    return min(lam / 4, 0.25)


def sgd_bound(eta: float, T: int, lipschitz: float = 3.0, radius: float = 1.0) -> float:
    """Standard averaged-SGD guarantee D^2/(2 eta T) + eta L^2 / 2."""
    return radius**2 / (2 * eta * T) + eta * lipschitz**2 / 2


def gd_optimization_bound(eta: float, T: int, lipschitz: float = 3.0) -> float:
    return 1 / (2 * eta * T) + eta * lipschitz**2 / 2


def main_shape(eta: float, T: int) -> float:
    return min(eta * math.sqrt(T) + 1 / (eta * T), 1.0)


def baseline_value(params: InstanceParams) -> float:
    """Certified upper bound on min_w F(w) used as the gap baseline."""
    fam = params.family
    if fam is Family.OVERFIT:
        return 0.25
    if fam is Family.LAMBDA_LB:
        return -min(1.0, params.lam) / 2
    return 0.0


def claim_window_violations(n: int, d: int, eta: float, T: int) -> list[str]:
    """log2(2 eta^2 d) <= n <= min(log2(d/16), log2(d / min(2T, 1/(3 eta^2))))."""
    tol = 1e-12
    out = []
    if not math.log2(2 * eta**2 * d) <= n + tol:
        out.append(f"log2(2 eta^2 d) <= n ({math.log2(2 * eta**2 * d):.4f} > {n})")
    if not n <= math.log2(d / 16) + tol:
        out.append(f"n <= log2(d/16) ({n} > {math.log2(d / 16):.4f})")
    lo = min(2 * T, 1 / (3 * eta**2))
    if not n <= math.log2(d / lo) + tol:
        out.append(f"n <= log2(d/min(2T, 1/(3 eta^2))) ({n} > {math.log2(d / lo):.4f})")
    return out
