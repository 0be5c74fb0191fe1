"""Semi-analytic structure of the fixed-interference problem.

Everything here works at a single interference level ``i``. ``delta`` and
``sigma`` are the increments and partial sums of the cost-to-go along the
residual deadline; ``T_b(x) = x + C_b(b) + min_p {C_p(p) - s(p, i)(C_d + x)}``
maps ``sigma(b, d - 1)`` to ``sigma(b, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dp import PolicyTable, ValueTable, smallest_argmin
from .model import SuccessFunction, SystemSpec

def sgn(x: float) -> int:
    """``+1`` for ``x >= 0``, ``-1`` otherwise."""
    return 1 if x >= 0 else -1


def _level(spec: SystemSpec, level: float | None) -> float:
    if level is not None:
        return float(level)
    if spec.n_states != 1:
        raise ValueError("spec has several interference states; pass the level to fix")
    return spec.interference.levels[0]


def marginal_terms(spec: SystemSpec, level: float) -> np.ndarray:
    """``C_p(p) - s(p, i) C_d`` over the power set."""
    return spec.power_costs - spec.success(spec.powers.array, level) * spec.costs.drop_cost


def tb0(spec: SystemSpec, b: int, level: float) -> float:
    """``T_b(0)``, also the SLBPC2 drift statistic ``f_b(i)``."""
    return spec.costs.backlog(b) + float(marginal_terms(spec, level).min())


def apply_tb(spec: SystemSpec, b: int, x: float, level: float) -> float:
    s = spec.success(spec.powers.array, level)
    inner = spec.power_costs - s * (spec.costs.drop_cost + x)
    return x + spec.costs.backlog(b) + float(inner.min())


@dataclass(frozen=True, eq=False)
class SigmaTable:
    """Rows are indexed by ``b`` (row 0 unused). ``delta[:, d - 1]`` holds
    ``delta(b, d)``; ``sigma[:, d]`` holds ``sigma(b, d)`` for ``d = 0..D``."""

    delta: np.ndarray
    sigma: np.ndarray
    tb0: np.ndarray
    fixed_i: float

    @property
    def B(self) -> int:
        return self.delta.shape[0] - 1

    @property
    def D(self) -> int:
        return self.delta.shape[1]


def build_sigma(spec: SystemSpec, level: float | None = None) -> SigmaTable:
    level = _level(spec, level)
    B, D = spec.B, spec.D
    s = spec.success(spec.powers.array, level)
    cp, cd = spec.power_costs, spec.costs.drop_cost
    delta = np.zeros((B + 1, D))
    sigma = np.zeros((B + 1, D + 1))
    t0 = np.zeros(B + 1)
    for b in range(1, B + 1):
        cb = spec.costs.backlog(b)
        t0[b] = cb + float((cp - s * cd).min())
        for d in range(1, D + 1):
            delta[b, d - 1] = cb + float((cp - s * (cd + sigma[b, d - 1])).min())
            sigma[b, d] = sigma[b, d - 1] + delta[b, d - 1]
    return SigmaTable(delta, sigma, t0, level)


def semi_analytic_policy(st: SigmaTable, spec: SystemSpec) -> PolicyTable:
    """Optimal policy from ``sigma`` alone, without the cost-to-go."""
    s = spec.success(spec.powers.array, st.fixed_i)
    cp, cd = spec.power_costs, spec.costs.drop_cost
    index = np.full((st.B + 1, st.D, 1), -1, dtype=np.int64)
    for b in range(1, st.B + 1):
        for d in range(1, st.D + 1):
            obj = cp - s * (cd + st.sigma[b, d - 1])
            index[b, d - 1, 0] = smallest_argmin(obj[:, None])[0]
    return PolicyTable(spec.powers.levels, index)


def check_prop1(spec: SystemSpec, v: ValueTable, st: SigmaTable) -> float:
    """Largest violation of the delta-increment identities of the cost-to-go."""
    values = v.values
    if values.shape[2] != 1:
        raise ValueError("identity check needs a single interference state")
    if values.shape[:2] != (st.B + 1, st.D):
        raise ValueError("value table and sigma table dimensions differ")
    J = values[:, :, 0]
    cd = spec.costs.drop_cost
    worst = 0.0
    for b in range(1, st.B + 1):
        worst = max(worst, abs(J[b, 0] - (cd + J[b - 1, st.D - 1] + st.delta[b, 0])))
        for d in range(2, st.D + 1):
            worst = max(worst, abs(J[b, d - 1] - (J[b, d - 2] + st.delta[b, d - 1])))
    return float(worst)


@dataclass(frozen=True, eq=False)
class SigmaBounds:
    m: float
    M: float
    s_min: float
    s_max: float
    lower: np.ndarray
    upper: np.ndarray

    def slack(self, st: SigmaTable) -> float:
        """Smallest margin by which the bounds contain ``sigma`` (negative = violated)."""
        sig = st.sigma[1:]
        return float(min((sig - self.lower[1:]).min(), (self.upper[1:] - sig).min()))


def _geometric(ratio: float, D: int) -> np.ndarray:
    """``sum_{k=0}^{d-1} ratio**k`` for ``d = 0..D``."""
    return np.concatenate([[0.0], np.cumsum(ratio ** np.arange(D))])


def sigma_bounds(st: SigmaTable, spec: SystemSpec) -> SigmaBounds:
    terms = marginal_terms(spec, st.fixed_i)
    m, M = float(terms.min()), float(terms.max())
    s_min = float(spec.success(spec.powers.min, st.fixed_i))
    s_max = float(spec.success(spec.powers.max, st.fixed_i))
    slow = _geometric(1.0 - s_min, st.D)
    fast = _geometric(1.0 - s_max, st.D)
    lower = np.zeros_like(st.sigma)
    upper = np.zeros_like(st.sigma)
    for b in range(1, st.B + 1):
        cb = spec.costs.backlog(b)
        if st.tb0[b] > 0:
            lower[b] = (cb + m) * fast
            upper[b] = (cb + M) * slow
        elif st.tb0[b] < 0:
            lower[b] = (cb + m) * slow
            upper[b] = (cb + M) * fast
    return SigmaBounds(m, M, s_min, s_max, lower, upper)


@dataclass(frozen=True)
class ConcaveEnvelope:
    """Smallest concave majorant of a sigmoidal ``s(., i)``: a chord from
    ``(0, s(0, i))`` with slope ``k_ccv`` up to ``p_star``, then ``s`` itself."""

    p_star: float
    k_ccv: float
    base: SuccessFunction
    level: float

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        s0 = float(self.base(0.0, self.level))
        out = np.where(p < self.p_star, self.k_ccv * p + s0, self.base(p, self.level))
        return out if out.ndim else float(out)

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        out = np.where(p < self.p_star, self.k_ccv, self.base.derivative(p, self.level))
        return out if out.ndim else float(out)

    def tangency_residual(self) -> float:
        s = self.base
        chord = (s(self.p_star, self.level) - s(0.0, self.level)) / self.p_star
        return abs(float(s.derivative(self.p_star, self.level)) - chord)


def _bisect(f, lo: float, hi: float, max_iter: int = 2000) -> float:
    """Root of ``f`` with ``f(lo) >= 0 > f(hi)``, refined to float resolution."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if f(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def concave_envelope(s: SuccessFunction, level: float) -> ConcaveEnvelope:
    if s.family != "sigmoidal":
        raise ValueError("concave envelope is only built for sigmoidal success functions")
    s0 = float(s(0.0, level))

    def tangency(p):
        return float(s.derivative(p, level)) * p - (float(s(p, level)) - s0)

    # convex at p exactly when exp(-beta0 p / i + beta1) / 2 > 1 / beta2
    if 0.5 * math.exp(s.beta1) * s.beta2 <= 1.0:
        raise ValueError("success function is concave from p = 0; not a sigmoid")
    lo, hi = 1e-9, 1.0
    grow = 0
    while tangency(hi) >= 0:
        hi *= 2.0
        grow += 1
        if grow > 200:
            raise ValueError("tangency point not bracketed; malformed sigmoid")
    p_star = _bisect(tangency, lo, hi)
    return ConcaveEnvelope(p_star, float(s.derivative(p_star, level)), s, float(level))


def gamma_from_weight(
    s: SuccessFunction, level: float, k_slope: float, weight: float
) -> float:
    """Continuous minimizer over ``p >= 0`` of ``k_slope * p - s(p, level) * weight``.

    ``weight`` is ``C_d + sigma(b, d - 1)``. Sigmoidal families are handled
    through their concave envelope.
    """
    if not k_slope > 0:
        raise ValueError("k_slope must be positive")
    if weight <= 0:
        return 0.0
    target = k_slope / weight
    if s.family == "exponential":
        c = s.scale * level
        return max(0.0, c * math.log(weight / (k_slope * c)))
    if s.family == "ratio":
        return max(0.0, math.sqrt(level * weight / k_slope) - level)
    if s.family == "constant":
        return 0.0
    if 0.5 * math.exp(s.beta1) * s.beta2 > 1.0:
        env = concave_envelope(s, level)
        start, slope0 = env.p_star, env.k_ccv
    else:
        start, slope0 = 0.0, float(s.derivative(0.0, level))
    if target >= slope0:
        return 0.0
    # s' is decreasing beyond start; find s'(p) = target there
    hi = max(2.0 * start, 1.0)
    while float(s.derivative(hi, level)) > target:
        hi *= 2.0
    return _bisect(lambda p: float(s.derivative(p, level)) - target, start, hi)


def gamma(
    st: SigmaTable,
    spec: SystemSpec,
    b: int,
    d: int,
    i_ref: float,
    k_slope: float | None = None,
) -> float:
    slope = spec.costs.power_slope
    if slope is None:
        raise ValueError("gamma needs a linear power cost")
    if k_slope is None:
        k_slope = slope
    weight = spec.costs.drop_cost + float(st.sigma[b, d - 1])
    return gamma_from_weight(spec.success, i_ref, k_slope, weight)
