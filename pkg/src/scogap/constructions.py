"""Hard instance families and their first-order oracles.

Every oracle returns ``(value, subgradient)``. Families:

* ``hard-gd`` / ``hard-reg``: f(w; a) = sqrt(sum_i a_i h(w_i)^2) + g1 v_a.w + g3 r(w)
  with h(x) = min(x + g2, 0) and r(w) = max(0, max_i (w_i - eps_i)).
* ``overfit``: f(w; a) = sqrt(sum_i a_i w_i^2) + (1/d^2) sum_i (1 - w_i).
* ``opt-l1``: f(w) = ||w - 1/sqrt(d) + eps||_inf (deterministic).
* ``opt-l2``: scalar |w - eta/4| (eta <= 1) or 2|w - 2/3| (eta > 1).
* ``lambda-lb``: f(w) = -(min(1, lam)/2) w_1 (deterministic).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import InfeasibleParametersError
from .numerics import RngStream, as_vector


class Family(str, Enum):
    HARD_GD = "hard-gd"
    HARD_REG = "hard-reg"
    OVERFIT = "overfit"
    OPT_L1 = "opt-l1"
    OPT_L2 = "opt-l2"
    LAMBDA_LB = "lambda-lb"


STOCHASTIC_FAMILIES = (Family.HARD_GD, Family.HARD_REG, Family.OVERFIT)
_REL = 1e-12


@dataclass(frozen=True)
class InstanceParams:
    """One fully resolved hard instance.

    The epsilon schedule is the linear ramp eps_i = eps_max * i / (2d),
    i = 1..d, so it is stored by its descriptor ``eps_max`` alone.
    """

    family: Family
    d: int
    n: int = 1
    gamma1: float = 0.0
    gamma2: float = 0.0
    gamma3: float = 0.0
    lam: float = 0.0
    eta: float = 0.0
    T: int = 0
    eps_max: float = 0.0
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @cached_property
    def epsilon(self) -> np.ndarray:
        i = np.arange(1, self.d + 1, dtype=np.float64)
        eps = self.eps_max * i / (2 * self.d)
        eps.flags.writeable = False
        return eps

    def replace(self, **changes) -> "InstanceParams":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return InstanceParams(**data)

    # -- constraint checks -------------------------------------------------

    def gd_violations(self) -> list[str]:
        """Conditions under which GD follows the closed-form trajectory."""
        g1, g2, eta, T, n, d = self.gamma1, self.gamma2, self.eta, self.T, self.n, self.d
        eps = self.epsilon
        out = []
        if not (g1 > 0 and g2 > 0):
            out.append("gamma1 > 0 and gamma2 > 0")
        if not math.isclose(g2, 2 * g1 * eta * T, rel_tol=_REL):
            out.append("gamma2 = 2*gamma1*eta*T")
        if not (eps[0] > 0 and np.all(np.diff(eps) > 0)):
            out.append("0 < eps_1 < ... < eps_d")
        if not eps[-1] < g1 * eta / (2 * n):
            out.append("eps_d < gamma1*eta/(2n)")
        if not g1 * T / (2 * n) < 1:
            out.append("gamma1*T/(2n) < 1")
        if not g1 <= 1 / (2 * math.sqrt(d) * eta * T):
            out.append("gamma1 <= 1/(2 sqrt(d) eta T)")
        if self.gamma3 != 1.0:
            out.append("gamma3 = 1")
        return out

    def reg_violations(self) -> list[str]:
        g1, g2, g3, lam, T, n, d = (self.gamma1, self.gamma2, self.gamma3, self.lam,
                                    self.T, self.n, self.d)
        out = []
        if not (0 < lam < 3):
            out.append("0 < lambda < 3")
        if T < 3:
            out.append("T >= 3")
        if not math.isclose(g3, min(lam / 2 * math.sqrt(max(T - 2, 0)), 1.0), rel_tol=_REL):
            out.append("gamma3 = min((lambda/2) sqrt(T-2), 1)")
        eps = self.epsilon
        if not (eps[0] > 0 and np.all(np.diff(eps) > 0)):
            out.append("0 < eps_1 < ... < eps_d")
        if not eps[-1] < g1 / (6 * n * (T + 1)):
            out.append("eps_d < gamma1/(6n(T+1))")
        base = g3 / (4 * math.sqrt(2) * lam * math.sqrt(T + 1)) if lam > 0 else 0.0
        if not g2 <= 1e-3 / math.sqrt(T) * base * (1 + _REL):
            out.append("gamma2 <= 1e-3/sqrt(T) * gamma3/(4 sqrt(2) lambda sqrt(T+1))")
        if not g1 <= 1e-3 / (math.sqrt(d) * (3 + lam)) * base * (1 + _REL):
            out.append("gamma1 <= 1e-3/(sqrt(d)(3+lambda)) * gamma3/(4 sqrt(2) lambda sqrt(T+1))")
        if not g1 <= g2 / reg_step_sum(lam, T) * (1 + _REL):
            out.append("gamma1 <= gamma2 / sum_t eta_t")
        if self.strict and not g1 <= (lam / 3) ** (T + 1) * g3 / (T + 1) * (1 + _REL):
            out.append("gamma1 <= (lambda/3)^(T+1) gamma3/(T+1)")
        if not (g1 > 0 and g2 > 0):
            out.append("gamma1 > 0 and gamma2 > 0")
        return out

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        data = asdict(self)
        data["family"] = self.family.value
        data["epsilon"] = {"schedule": "linear", "eps_max": self.eps_max,
                           "formula": "eps_i = eps_max * i / (2d)"}
        data.pop("eps_max")
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceParams":
        data = dict(data)
        eps = data.pop("epsilon", None)
        if eps is not None:
            if eps.get("schedule", "linear") != "linear":
                raise ValueError(f"unsupported epsilon schedule {eps.get('schedule')!r}")
            data["eps_max"] = eps["eps_max"]
        return cls(**data)


def reg_step_size(lam: float, t: int) -> float:
    """eta_t = 2/(lambda(t+1))."""
    return 2.0 / (lam * (t + 1))


def reg_step_sum(lam: float, T: int) -> float:
    return sum(reg_step_size(lam, t) for t in range(1, T + 1))


# ---------------------------------------------------------------------------
# parameter selection

def pick_gd_params(n: int, T: int, eta: float, d: int | None = None) -> InstanceParams:
    """Parameters for the unregularized GD construction.

    gamma1 is half the tightest of: 1/(2 sqrt(d) eta T), 2n/T, and the slack
    gamma1 (1 + 5 eta T) sqrt(d) <= (1/16) min(eta sqrt(T), 1/3).
    """
    if n < 1 or T < 1:
        raise InfeasibleParametersError("infeasible parameters", ["n >= 1 and T >= 1"])
    if not eta > 0:
        raise InfeasibleParametersError("infeasible parameters", ["eta > 0"])
    d = int(d) if d is not None else T * 2 ** (n + 5)
    root_d = math.sqrt(d)
    bounds = (
        1 / (2 * root_d * eta * T),
        2 * n / T,
        min(eta * math.sqrt(T), 1 / 3) / 16 / ((1 + 5 * eta * T) * root_d),
    )
    gamma1 = 0.5 * min(bounds)
    if not (gamma1 > 0 and math.isfinite(gamma1)):
        raise InfeasibleParametersError("infeasible parameters", ["gamma1 > 0"])
    params = InstanceParams(
        family=Family.HARD_GD, d=d, n=n, gamma1=gamma1, gamma2=2 * gamma1 * eta * T,
        gamma3=1.0, eta=eta, T=T, eps_max=gamma1 * eta / (2 * n),
    )
    bad = params.gd_violations()
    if bad:
        raise InfeasibleParametersError("infeasible parameters", bad)
    return params


def pick_reg_params(n: int, T: int, lam: float, strict: bool = False,
                    d: int | None = None) -> InstanceParams:
    """Parameters for the regularized construction.

    ``strict`` uses the worst-case gamma1 bound with the (lambda/3)^(T+1)
    factor; otherwise gamma1 = 1e-9 gamma3/(T+1) (capped by the other
    bounds) and the gradient form is checked at run time instead.
    """
    problems = []
    if T < 3:
        problems.append("T >= 3")
    if not 0 < lam < 3:
        problems.append("0 < lambda < 3")
    if n < 1:
        problems.append("n >= 1")
    if problems:
        raise InfeasibleParametersError("infeasible parameters", problems)
    d = int(d) if d is not None else T * 2 ** (n + 5)
    gamma3 = min(lam / 2 * math.sqrt(T - 2), 1.0)
    base = gamma3 / (4 * math.sqrt(2) * lam * math.sqrt(T + 1))
    gamma2 = 1e-3 / math.sqrt(T) * base
    caps = [1e-3 / (math.sqrt(d) * (3 + lam)) * base, gamma2 / reg_step_sum(lam, T)]
    if strict:
        caps.append((lam / 3) ** (T + 1) * gamma3 / (T + 1))
    else:
        caps.append(1e-9 * gamma3 / (T + 1))
    gamma1 = min(caps)
    if not gamma1 > 0:
        raise InfeasibleParametersError("infeasible parameters", ["gamma1 > 0 (underflow)"])
    params = InstanceParams(
        family=Family.HARD_REG, d=d, n=n, gamma1=gamma1, gamma2=gamma2, gamma3=gamma3,
        lam=lam, T=T, eps_max=gamma1 / (6 * n * (T + 1)), strict=strict,
    )
    bad = params.reg_violations()
    if bad:
        raise InfeasibleParametersError("infeasible parameters", bad)
    return params


def pick_overfit_params(n: int, T: int, eta: float, d: int | None = None) -> InstanceParams:
    problems = []
    if not eta > 0:
        problems.append("eta > 0")
    elif eta * math.sqrt(T) > 0.5:
        problems.append("eta sqrt(T) <= 1/2")
    if n < 1 or T < 1:
        problems.append("n >= 1 and T >= 1")
    if problems:
        raise InfeasibleParametersError("infeasible parameters", problems)
    d = int(d) if d is not None else 2 ** (n + 1)
    return InstanceParams(family=Family.OVERFIT, d=d, n=n, eta=eta, T=T)


def pick_opt1_params(eta: float, T: int, d: int | None = None) -> InstanceParams:
    """Deterministic l_inf instance; d > 18 eta^2 T^2 unless that is <= 1."""
    if not eta > 0 or T < 1:
        raise InfeasibleParametersError("infeasible parameters", ["eta > 0 and T >= 1"])
    q = 18 * eta**2 * T**2
    if d is None:
        d = 1 if q <= 1 else math.floor(q) + 1
    d = int(d)
    if q > 1 and not d > q:
        raise InfeasibleParametersError("infeasible parameters", ["d > 18 eta^2 T^2"])
    # linear ramp ends at eps_max/2, strictly below 1/(2 sqrt(d))
    return InstanceParams(family=Family.OPT_L1, d=d, eta=eta, T=T,
                          eps_max=1 / (2 * math.sqrt(d)))


def pick_opt2_params(eta: float, T: int = 0, d: int = 1) -> InstanceParams:
    if not eta > 0:
        raise InfeasibleParametersError("infeasible parameters", ["eta > 0"])
    return InstanceParams(family=Family.OPT_L2, d=d, eta=eta, T=T)


def pick_lambda_params(lam: float, T: int = 0, d: int = 1) -> InstanceParams:
    if not lam > 0:
        raise InfeasibleParametersError("infeasible parameters", ["lambda > 0"])
    return InstanceParams(family=Family.LAMBDA_LB, d=d, lam=lam, T=T)


# ---------------------------------------------------------------------------
# sampling

def _generator(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


def draw_alphas_packed(rng, m: int, d: int) -> np.ndarray:
    """m uniform points of {0,1}^d packed little-endian into uint8 rows."""
    gen = _generator(rng)
    return gen.integers(0, 256, size=(m, (d + 7) // 8), dtype=np.uint8)


def unpack_alphas(packed: np.ndarray, d: int) -> np.ndarray:
    return np.unpackbits(packed, axis=-1, count=d, bitorder="little").astype(bool)


def draw_alpha(rng, d: int) -> np.ndarray:
    """One uniform point of {0,1}^d as a bool array."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return unpack_alphas(draw_alphas_packed(rng, 1, d), d)[0]


@dataclass(frozen=True)
class Sample:
    """An i.i.d. sample of n bit vectors sharing one instance."""

    bits: np.ndarray
    params: InstanceParams

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1:
            raise ValueError("sample must be a nonempty (n, d) bit array")
        if bits.shape[1] != self.params.d:
            raise ValueError(f"sample dimension {bits.shape[1]} != instance d={self.params.d}")
        bits = bits.copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def d(self) -> int:
        return self.bits.shape[1]

    @cached_property
    def counts(self) -> np.ndarray:
        return self.bits.sum(axis=0)

    @cached_property
    def bits_float(self) -> np.ndarray:
        return self.bits.astype(np.float64)

    @cached_property
    def vbar(self) -> np.ndarray:
        return mean_perturbation(self)


def draw_sample(params: InstanceParams, rng, n: int | None = None) -> Sample:
    n = params.n if n is None else n
    return Sample(unpack_alphas(draw_alphas_packed(rng, n, params.d), params.d), params)


def perturbation(alpha: np.ndarray, n: int) -> np.ndarray:
    """v_alpha: +1 on set bits, -1/(2n) elsewhere."""
    return np.where(alpha, 1.0, -1.0 / (2 * n))


def mean_perturbation(S: Sample) -> np.ndarray:
    """Average of v_alpha over the sample, computed from per-coordinate counts."""
    n = S.n
    c = S.counts.astype(np.float64)
    return (c + (n - c) * (-1.0 / (2 * n))) / n


# ---------------------------------------------------------------------------
# oracles

def shifted_hinge(w: np.ndarray, gamma2: float) -> np.ndarray:
    """h(a) = a + gamma2 for a < -gamma2, else 0 (elementwise)."""
    return np.where(w < -gamma2, w + gamma2, 0.0)


def _r_eps(w: np.ndarray, eps: np.ndarray) -> tuple[float, int]:
    diff = w - eps
    k = int(np.argmax(diff))  # first index on ties
    return max(0.0, float(diff[k])), k


def _require(params: InstanceParams, *families: Family) -> None:
    if params.family not in families:
        names = ", ".join(f.value for f in families)
        raise ValueError(f"family mismatch: oracle needs {names}, got {params.family.value}")


def hard_oracle(w, alpha, params: InstanceParams):
    _require(params, Family.HARD_GD, Family.HARD_REG)
    w = as_vector(w, params.d)
    alpha = np.asarray(alpha, dtype=bool)
    hm = np.where(alpha, shifted_hinge(w, params.gamma2), 0.0)
    s = float(hm @ hm)
    grad = params.gamma1 * perturbation(alpha, params.n)
    value = float(grad @ w)
    if s > 0:
        root = math.sqrt(s)
        value += root
        grad += hm / root
    r, k = _r_eps(w, params.epsilon)
    if r > 0:
        value += params.gamma3 * r
        grad[k] += params.gamma3
    return value, grad


def empirical_oracle(w, S: Sample):
    """Mean of hard_oracle over the sample, without materializing each v_alpha."""
    params = S.params
    _require(params, Family.HARD_GD, Family.HARD_REG)
    w = as_vector(w, params.d)
    h = shifted_hinge(w, params.gamma2)
    grad = params.gamma1 * S.vbar
    value = float(grad @ w)
    active = h != 0
    if active.any():
        hh = h[active]
        s = S.bits_float[:, active] @ (hh * hh)
        pos = s > 0
        if pos.any():
            root = np.sqrt(s[pos])
            value += float(root.sum()) / S.n
            coef = np.zeros(S.n)
            coef[pos] = 1.0 / root
            part = np.zeros(params.d)
            part[active] = hh * (coef @ S.bits_float[:, active]) / S.n
            grad = grad + part
    r, k = _r_eps(w, params.epsilon)
    if r > 0:
        value += params.gamma3 * r
        grad[k] += params.gamma3
    return value, grad


def overfit_oracle(w, alpha):
    w = as_vector(w)
    alpha = np.asarray(alpha, dtype=bool)
    if alpha.shape != w.shape:
        raise ValueError("dimension mismatch between w and alpha")
    d = w.size
    masked = np.where(alpha, w, 0.0)
    s = float(masked @ masked)
    value = float(np.sum(1.0 - w)) / d**2
    grad = np.full(d, -1.0 / d**2)
    if s > 0:
        root = math.sqrt(s)
        value += root
        grad += masked / root
    return value, grad


def overfit_empirical_oracle(w, S: Sample):
    _require(S.params, Family.OVERFIT)
    w = as_vector(w, S.d)
    d = S.d
    s = S.bits_float @ (w * w)
    pos = s > 0
    root = np.sqrt(s[pos])
    coef = np.zeros(S.n)
    coef[pos] = 1.0 / root
    value = float(root.sum()) / S.n + float(np.sum(1.0 - w)) / d**2
    grad = w * (coef @ S.bits_float) / S.n - 1.0 / d**2
    return value, grad


def opt1_oracle(w, params: InstanceParams):
    _require(params, Family.OPT_L1)
    w = as_vector(w, params.d)
    x = w - 1.0 / math.sqrt(params.d) + params.epsilon
    i = int(np.argmax(np.abs(x)))
    grad = np.zeros(params.d)
    grad[i] = np.sign(x[i])
    return float(abs(x[i])), grad


def opt2_oracle(w, eta: float):
    """Scalar instance; a vector argument is read through its first coordinate."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    scale, center = (1.0, eta / 4) if eta <= 1 else (2.0, 2.0 / 3)
    if np.ndim(w) == 0:
        x = float(w)
        return scale * abs(x - center), scale * float(np.sign(x - center))
    w = as_vector(w)
    grad = np.zeros(w.size)
    grad[0] = scale * np.sign(w[0] - center)
    return scale * abs(float(w[0]) - center), grad


def lambda_lb_oracle(w, lam: float):
    if not lam > 0:
        raise ValueError("lambda must be positive")
    w = as_vector(w)
    lam_bar = min(1.0, lam)
    grad = np.zeros(w.size)
    grad[0] = -lam_bar / 2
    return -lam_bar / 2 * float(w[0]), grad


# ---------------------------------------------------------------------------
# dispatch

def point_oracle(params: InstanceParams):
    """Return f(w, alpha) -> (value, subgrad) for the stochastic families."""
    if params.family in (Family.HARD_GD, Family.HARD_REG):
        return lambda w, alpha: hard_oracle(w, alpha, params)
    if params.family is Family.OVERFIT:
        return overfit_oracle
    raise ValueError(f"{params.family.value} is deterministic")


def objective_oracle(params: InstanceParams, S: Sample | None = None):
    """Return F_S(w) -> (value, subgrad); deterministic families ignore S."""
    fam = params.family
    if fam in (Family.HARD_GD, Family.HARD_REG):
        if S is None:
            raise ValueError("empirical objective needs a sample")
        return lambda w: empirical_oracle(w, S)
    if fam is Family.OVERFIT:
        if S is None:
            raise ValueError("empirical objective needs a sample")
        return lambda w: overfit_empirical_oracle(w, S)
    if fam is Family.OPT_L1:
        return lambda w: opt1_oracle(w, params)
    if fam is Family.OPT_L2:
        return lambda w: opt2_oracle(as_vector(w, params.d), params.eta)
    if fam is Family.LAMBDA_LB:
        return lambda w: lambda_lb_oracle(as_vector(w, params.d), params.lam)
    raise ValueError(f"unknown family {fam!r}")
