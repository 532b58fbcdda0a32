"""Asymptotic quantities for the growing-k nearest-neighbor test.

Integrals over R^d are written as expectations under the mixture
``phi = p f + q g`` of functions of the density ratios ``f/phi`` and
``g/phi``. In low dimension (d <= 3) they are computed by adaptive cubature
over a bounding box, otherwise by Monte Carlo sampling from ``phi``. Every
integral comes back as an :class:`Estimate` carrying a standard error.

Rate statements such as ``eps_N << N^(-1/2) (N/k_N)^(2/d)`` are decided by
exact rational arithmetic on exponents of N, never by plugging in a finite
N.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special, stats

from .errors import (
    DegenerateDirectionError,
    ToleranceError,
    UnsupportedScheduleError,
    ValidationError,
)
from .sampling import Distribution, FamilyModel, make_rng
from .statistic import null_variance_sigma0

__all__ = [
    "Estimate",
    "VarianceReport",
    "FamilyCoefficients",
    "ThresholdReport",
    "PowerPrediction",
    "REGIMES",
    "hp_dissimilarity",
    "asymptotic_variance_general",
    "asymptotic_variance_conditional",
    "variance_report",
    "unit_ball_volume",
    "coeff_a",
    "coeff_b",
    "family_coefficients",
    "parse_schedule",
    "phase_transition_dimension",
    "classify_regime",
    "predicted_power_one_sided",
    "predicted_power_two_sided",
    "mean_shift_heuristic",
    "gamma_sum",
    "gamma_sum_identity_check",
]

REGIMES = ("below-lower", "at-lower", "between", "at-upper", "above-upper", "at-N^{-1/4}")

_MC_SAMPLES = 10 ** 6
_MC_CHUNK = 50_000


@dataclass(frozen=True)
class Estimate:
    """A numerical value with its standard error (0 for quadrature)."""

    value: float
    stderr: float = 0.0
    method: str = "exact"

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Estimate({self.value:.12g} +/- {self.stderr:.3g}, {self.method})"


# -- integration engine ----------------------------------------------------


def _union_box(*dists: Distribution, tail=1e-15):
    los, his = zip(*(dist.box(tail) for dist in dists))
    return np.min(los, axis=0), np.max(his, axis=0)


def _cubature(fun, lo, hi, rtol, atol=0.0, max_subdivisions=20000):
    res = integrate.cubature(fun, np.asarray(lo, float), np.asarray(hi, float),
                             rtol=rtol, atol=atol, max_subdivisions=max_subdivisions)
    if res.status != "converged":
        raise ToleranceError(f"cubature did not converge (error estimate {res.error:.3g})",
                             float(res.estimate), float(res.error))
    return Estimate(float(res.estimate), float(res.error), "cubature")


def _streamed_mean(draw: Callable, n_samples: int, rng, chunk=_MC_CHUNK) -> Estimate:
    """Mean and standard error of ``draw(m, rng)`` values over ``n_samples``."""
    total = 0.0
    total_sq = 0.0
    n = 0
    # fixed chunk sizes keep the reduction order independent of anything else
    while n < n_samples:
        m = min(chunk, n_samples - n)
        vals = np.asarray(draw(m, rng), dtype=np.float64)
        total += math.fsum(vals)
        total_sq += math.fsum(vals * vals)
        n += m
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return Estimate(mean, math.sqrt(var / n), "monte-carlo")


def _ratios(x, f, g, p):
    """``f/phi`` and ``g/phi`` at x, and ``phi``, via log densities."""
    q = 1.0 - p
    lf = f.logpdf(x)
    lg = g.logpdf(x)
    lphi = np.logaddexp(np.log(p) + lf, np.log(q) + lg)
    with np.errstate(invalid="ignore"):
        rf = np.where(np.isneginf(lphi), 0.0, np.exp(lf - lphi))
        rg = np.where(np.isneginf(lphi), 0.0, np.exp(lg - lphi))
    return rf, rg, np.exp(lphi)


def _check_pair(f, g, p):
    if f.dim != g.dim:
        raise ValidationError(f"dimension mismatch: {f.dim} vs {g.dim}")
    if not 0 < p < 1:
        raise ValidationError(f"p must lie in (0, 1); got {p!r}")


def _phi_expectation(G, f, g, p, method="auto", rtol=1e-10, n_samples=_MC_SAMPLES,
                     seed=0, max_subdivisions=20000) -> Estimate:
    """``integral of phi(x) G(f(x)/phi(x), g(x)/phi(x)) dx``."""
    _check_pair(f, g, p)
    if method == "auto":
        method = "cubature" if f.dim <= 3 else "monte-carlo"
    if method == "cubature":
        lo, hi = _union_box(f, g)

        def integrand(x):
            rf, rg, phi = _ratios(x, f, g, p)
            return phi * G(rf, rg)

        return _cubature(integrand, lo, hi, rtol, max_subdivisions=max_subdivisions)
    if method != "monte-carlo":
        raise ValidationError(f"unknown integration method {method!r}")

    def draw(m, rng):
        from_f = rng.random(m) < p
        n_f = int(from_f.sum())
        x = np.empty((m, f.dim))
        x[from_f] = f.sample(n_f, rng)
        x[~from_f] = g.sample(m - n_f, rng)
        rf, rg, _ = _ratios(x, f, g, p)
        return G(rf, rg)

    return _streamed_mean(draw, int(n_samples), make_rng(seed))


def hp_dissimilarity(f: Distribution, g: Distribution, p: float, **integrator) -> Estimate:
    """Henze-Penrose dissimilarity ``pq * int f g / (p f + q g)``.

    At most ``pq``, with equality exactly when f = g almost everywhere.
    ``integrator`` options: ``method`` ("auto", "cubature", "monte-carlo"),
    ``rtol`` and ``max_subdivisions`` for cubature, ``n_samples`` and
    ``seed`` for Monte Carlo.
    """
    q = 1.0 - p
    return _phi_expectation(lambda rf, rg: p * q * rf * rg, f, g, p, **integrator)


def asymptotic_variance_conditional(f: Distribution, g: Distribution, p: float,
                                    **integrator) -> Estimate:
    """Limit of ``Var(T | locations) / (N k^2)``:
    ``pq * int f g (p f - q g)^2 / phi^3``."""
    q = 1.0 - p
    return _phi_expectation(lambda rf, rg: p * q * rf * rg * (p * rf - q * rg) ** 2,
                            f, g, p, **integrator)


def asymptotic_variance_general(f: Distribution, g: Distribution, p: float,
                                **integrator) -> Estimate:
    """Limit of ``Var(T) / (N k^2)``: the conditional part plus
    ``p^2 q^2 int f^2 g^2 / phi^3``."""
    q = 1.0 - p

    def G(rf, rg):
        return p * q * rf * rg * (p * rf - q * rg) ** 2 + (p * q * rf * rg) ** 2

    return _phi_expectation(G, f, g, p, **integrator)


@dataclass(frozen=True)
class VarianceReport:
    sigma_sq: Estimate
    sigma_cond_sq: Estimate
    sigma0_sq: float


def variance_report(f, g, p, **integrator) -> VarianceReport:
    return VarianceReport(asymptotic_variance_general(f, g, p, **integrator),
                          asymptotic_variance_conditional(f, g, p, **integrator),
                          null_variance_sigma0(p))


def unit_ball_volume(d: int) -> float:
    if d < 1:
        raise ValidationError("dimension must be positive")
    return math.exp(0.5 * d * math.log(math.pi) - special.gammaln(0.5 * d + 1))


# -- local-power coefficients ----------------------------------------------


@dataclass(frozen=True)
class FamilyCoefficients:
    """Coefficients of the local mean shift of the standardized statistic.

    ``a`` multiplies the squared deviation and is never negative; ``b``
    multiplies the first-order, neighborhood-size dependent term and its
    sign depends on the direction ``h``.
    """

    a: float
    b: float
    theta1: np.ndarray
    h: np.ndarray
    p: float
    a_stderr: float = 0.0
    b_stderr: float = 0.0


def _direction(family, h):
    h = np.atleast_1d(np.asarray(h, dtype=np.float64))
    if h.shape != (family.param_dim,):
        raise ValidationError(f"direction must have {family.param_dim} components")
    if not np.any(h != 0):
        raise ValidationError("direction h must be non-zero")
    return h


def coeff_a(family: FamilyModel, theta1, h, p: float, n_samples=_MC_SAMPLES,
            seed=0, method="auto") -> Estimate:
    """``(r^2 / (2 sigma0)) E[(h . grad_theta log p(X|theta1))^2]`` with r = 2pq.

    Uses the family's closed form when it has one, else Monte Carlo over
    ``X ~ p(. | theta1)``.
    """
    theta1 = family.check_theta(theta1)
    h = _direction(family, h)
    sigma0 = math.sqrt(null_variance_sigma0(p))
    r = 2 * p * (1 - p)
    closed = family.fisher_quadratic(theta1, h) if method in ("auto", "closed") else None
    if closed is not None:
        fisher = Estimate(float(closed), 0.0, "closed-form")
    elif method == "closed":
        raise ValidationError(f"{family.name} has no closed form for a")
    else:
        def draw(m, rng):
            x = family.sample(theta1, m, rng)
            return (family.log_score(x, theta1) @ h) ** 2

        fisher = _streamed_mean(draw, int(n_samples), make_rng(seed))
    if not fisher.value > 0:
        raise ValidationError("expected squared score is zero; the family is not "
                              "locally identifiable along h")
    scale = r * r / (2 * sigma0)
    return Estimate(scale * fisher.value, scale * fisher.stderr, fisher.method)


def _theta_gradient(fun, theta, h):
    """Directional derivative ``h . grad_theta fun(theta)`` by central differences."""
    out = 0.0
    for i, hi in enumerate(h):
        if hi == 0:
            continue
        step = 1e-4 * (1 + abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = step
        out = out + hi * (fun(theta + e) - fun(theta - e)) / (2 * step)
    return out


def gradient_integrand(family: FamilyModel, theta1, h):
    """``x -> h . grad_theta(tr(H_x p)/p)(x) * p(x)^((d-2)/d)`` at theta1."""
    d = family.dim

    def integrand(x):
        grad = _theta_gradient(lambda t: family.hessian_ratio(x, t), theta1, h)
        return grad * np.exp((d - 2) / d * family.logpdf(x, theta1))

    return integrand


def _gradient_integral_numeric(family, theta1, h, rtol, n_samples, seed, method):
    d = family.dim
    integrand = gradient_integrand(family, theta1, h)
    if d <= 2 and family.support is None:
        raise ToleranceError(f"gradient integral diverges in d={d} without compact support")
    if method == "auto":
        method = "cubature" if d <= 3 else "monte-carlo"
    if method == "cubature":
        if family.support is not None:
            lo, hi = family.support
        else:
            # p^((d-2)/d) has heavier tails than p
            lo, hi = family.box(theta1, tail=1e-15 ** (d / (d - 2)))
        return _cubature(integrand, lo, hi, rtol, atol=1e-300)
    if method != "monte-carlo":
        raise ValidationError(f"unknown integration method {method!r}")
    if d <= 2:
        raise ToleranceError("Monte-Carlo gradient integral needs d > 2")
    rng = make_rng(seed)
    # proposal: p(. | theta1) dilated by sqrt(d/(d-2)) about its mean, which
    # matches the tail of p^((d-2)/d)
    center = family.sample(theta1, 20_000, rng).mean(axis=0)
    c = math.sqrt(d / (d - 2))
    log_c = d * math.log(c)

    def draw(m, rng):
        y = center + c * (family.sample(theta1, m, rng) - center)
        log_q = family.logpdf(center + (y - center) / c, theta1) - log_c
        return integrand(y) * np.exp(-log_q)

    return _streamed_mean(draw, int(n_samples), rng)


def coeff_b(family: FamilyModel, theta1, h, p: float, method="auto", rtol=1e-8,
            n_samples=_MC_SAMPLES, seed=0) -> Estimate:
    """Gradient-term coefficient

    ``p^2 q / (2 (d+2) V_d^(2/d) sigma0) * int h.grad_theta(tr(H_x p)/p) p^((d-2)/d) dx``.

    ``method="closed"`` uses the family's closed-form integral,
    ``"numeric"`` forces integration (cubature for d <= 3, Monte Carlo
    above), ``"auto"`` prefers the closed form.
    """
    theta1 = family.check_theta(theta1)
    h = _direction(family, h)
    d = family.dim
    q = 1.0 - p
    sigma0 = math.sqrt(null_variance_sigma0(p))
    pref = p * p * q / (2 * (d + 2) * unit_ball_volume(d) ** (2 / d) * sigma0)
    integral = None
    if method in ("auto", "closed"):
        closed = family.gradient_integral(theta1, h)
        if closed is not None:
            integral = Estimate(float(closed), 0.0, "closed-form")
        elif method == "closed":
            raise ValidationError(f"{family.name} has no closed form for b in d={d}")
    if integral is None:
        sub = {"numeric": "auto", "auto": "auto"}.get(method, method)
        integral = _gradient_integral_numeric(family, theta1, h, rtol, n_samples, seed, sub)
    return Estimate(pref * integral.value, abs(pref) * integral.stderr, integral.method)


def family_coefficients(family, theta1, h, p, **kw) -> FamilyCoefficients:
    a = coeff_a(family, theta1, h, p, **{k: v for k, v in kw.items() if k in ("n_samples", "seed")})
    b = coeff_b(family, theta1, h, p, **kw)
    return FamilyCoefficients(a.value, b.value, family.check_theta(theta1),
                              _direction(family, h), p, a.stderr, b.stderr)


# -- thresholds and regimes ------------------------------------------------


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    # decimal literals such as 0.44 are meant exactly
    return Fraction(repr(float(x))).limit_denominator(10 ** 12)


_SCHEDULE = re.compile(
    r"^\s*(?:(?P<const>const|fixed|1)"
    r"|(?:N\s*(?:\^|\*\*)\s*(?P<exp>[-+0-9./]+))?\s*\*?\s*"
    r"(?:\(?\s*log\s*\(?\s*N\s*\)?\s*\)?\s*(?:(?:\^|\*\*)\s*(?P<lexp>[-+0-9./]+))?)?)\s*$",
    re.IGNORECASE)


def parse_schedule(schedule):
    """Neighbor schedule ``k_N = N^gamma (log N)^c`` as ``(gamma, c)``.

    Accepts a number (gamma), a ``(gamma, c)`` pair, or text such as
    ``"N^0.25"``, ``"log N"``, ``"(log N)^2"``, ``"N^0.1 log N"``, ``"const"``.
    """
    if isinstance(schedule, (int, float, Fraction)) and not isinstance(schedule, bool):
        return _frac(schedule), Fraction(0)
    if isinstance(schedule, tuple) and len(schedule) == 2:
        return _frac(schedule[0]), _frac(schedule[1])
    if isinstance(schedule, str):
        m = _SCHEDULE.match(schedule)
        if m and schedule.strip():
            if m.group("const"):
                return Fraction(0), Fraction(0)
            has_log = "log" in schedule.lower()
            try:
                gamma = _frac(Fraction(m.group("exp"))) if m.group("exp") else Fraction(0)
                lexp = _frac(Fraction(m.group("lexp"))) if m.group("lexp") else Fraction(int(has_log))
            except (ValueError, ZeroDivisionError):
                pass
            else:
                if m.group("exp") or has_log:
                    return gamma, lexp
    raise UnsupportedScheduleError(f"cannot interpret neighbor schedule {schedule!r}")


def phase_transition_dimension(schedule) -> int:
    """Largest d with ``N^(1/4) = O((N/k_N)^(2/d))``.

    For ``k_N = N^gamma`` this is ``floor(8 (1 - gamma))``. Polylog factors in
    the schedule are ignored: only the power of N decides.
    """
    gamma, _ = parse_schedule(schedule)
    if not 0 <= gamma < 1:
        raise UnsupportedScheduleError(f"need 0 <= gamma < 1; got {float(gamma)}")
    return math.floor(8 * (1 - gamma))


@dataclass(frozen=True)
class ThresholdReport:
    """Which limiting-power case applies to ``eps_N = h N^eps_exponent``.

    Exponents are of N. ``case`` is 1 when ``(N/k_N)^(2/d) >> N^(1/4)``, 2 on
    the boundary, 3 when ``(N/k_N)^(2/d) << N^(1/4)``. In cases 1 and 2 both
    thresholds equal ``-1/4``.
    """

    d: int
    gamma: Fraction
    eps_exponent: Fraction
    d_t: int
    w_exponent: Fraction
    lower_threshold: Fraction
    upper_threshold: Fraction
    case: int
    regime: str
    clt_proven: bool
    h_sign: Optional[int] = None

    def describe(self) -> str:
        return (f"d={self.d} gamma={self.gamma} b={self.eps_exponent} d_t={self.d_t} "
                f"case={self.case} regime={self.regime}")


def classify_regime(d: int, gamma, eps_exponent, h_sign: Optional[int] = None) -> ThresholdReport:
    """Place ``eps_N = h N^eps_exponent`` with ``k_N = N^gamma`` among the thresholds.

    Lower threshold ``N^(-1/2) (N/k_N)^(2/d)``, upper ``(k_N/N)^(2/d)``,
    both collapsing to ``N^(-1/4)`` when d is at most the phase-transition
    dimension. Equal exponents give the ``at-*`` regimes.
    """
    if int(d) != d or d < 1:
        raise ValidationError(f"dimension must be a positive integer; got {d!r}")
    gamma = _frac(gamma)
    b = _frac(eps_exponent)
    if not 0 <= gamma < 1:
        raise UnsupportedScheduleError(f"need 0 <= gamma < 1; got {float(gamma)}")
    if b >= 0:
        raise ValidationError("deviation exponent must be negative")
    quarter = Fraction(1, 4)
    w = 2 * (1 - gamma) / d
    d_t = phase_transition_dimension(gamma)
    case = 1 if w > quarter else 2 if w == quarter else 3
    if case < 3:
        lower = upper = -quarter
        regime = ("below-lower" if b < -quarter else
                  "at-N^{-1/4}" if b == -quarter else "above-upper")
    else:
        lower = Fraction(-1, 2) + w
        upper = -w
        if b < lower:
            regime = "below-lower"
        elif b == lower:
            regime = "at-lower"
        elif b < upper:
            regime = "between"
        elif b == upper:
            regime = "at-upper"
        else:
            regime = "above-upper"
    return ThresholdReport(int(d), gamma, b, d_t, w, lower, upper, case, regime,
                           gamma < quarter, h_sign)


@dataclass(frozen=True)
class PowerPrediction:
    """Limiting power. ``value`` is None when it depends on unknown signs."""

    value: Optional[float]
    label: str
    formula: str
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.value is not None and not -1e-12 <= self.value <= 1 + 1e-12:
            raise ValueError(f"power {self.value} outside [0, 1]")


def _coeffs(coeffs):
    if coeffs is None:
        return None, None
    if isinstance(coeffs, FamilyCoefficients):
        return coeffs.a, coeffs.b
    a, b = coeffs
    return float(a), float(b)


def _symbolic(value, alpha, formula):
    if value is None:
        return formula
    if value == 1:
        return "1"
    if value == 0:
        return "0"
    if value == alpha:
        return "alpha"
    return f"{value:.6g}"


def _known(*xs) -> bool:
    return all(x is not None for x in xs)


def predicted_power_one_sided(coeffs, regime: ThresholdReport, alpha: float,
                              beta: Optional[float] = None) -> PowerPrediction:
    """Limiting power of the lower-tail test.

    ``coeffs`` is a :class:`FamilyCoefficients` or an ``(a, b)`` pair. When
    it (or ``beta``) is missing and the answer depends on it, ``value`` is
    None and ``label`` names the expression, e.g. ``"0/1 by direction"``.
    """
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    a, b = _coeffs(coeffs)
    z = stats.norm.ppf(alpha)
    rg = regime.regime
    inputs = {"a": a, "b": b, "alpha": alpha, "beta": beta, "case": regime.case, "regime": rg}
    value = None
    if rg == "below-lower":
        value, formula = alpha, "alpha"
    elif rg == "above-upper":
        value, formula = 1.0, "1"
    elif rg == "at-N^{-1/4}" and regime.case == 1:
        formula = "Phi(z_alpha + a)"
        if _known(a):
            value = stats.norm.cdf(z + a)
    elif rg == "at-N^{-1/4}":
        formula = "Phi(z_alpha + a - beta*b)"
        if _known(a, b, beta):
            value = stats.norm.cdf(z + a - beta * b)
    elif rg == "at-lower":
        formula = "Phi(z_alpha - b)"
        if _known(b):
            value = stats.norm.cdf(z - b)
    elif rg == "between":
        formula = "0/1 by direction"
        if _known(b):
            if b == 0:
                raise DegenerateDirectionError("b(h) = 0: direction-dependent regime undefined")
            value = 0.0 if b > 0 else 1.0
    elif rg == "at-upper":
        formula = "0/1 by sign of a - b"
        if _known(a, b):
            if a == b:
                raise DegenerateDirectionError("a(h) = b(h): degenerate direction")
            value = 1.0 if a - b > 0 else 0.0
    else:
        raise ValidationError(f"unknown regime {rg!r}")
    value = None if value is None else float(value)
    return PowerPrediction(value, _symbolic(value, alpha, formula), formula, inputs)


def predicted_power_two_sided(coeffs, regime: ThresholdReport, alpha: float,
                              beta: Optional[float] = None) -> PowerPrediction:
    """Limiting power of the two-sided test; never below alpha."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    a, b = _coeffs(coeffs)
    z = stats.norm.ppf(alpha / 2)
    rg = regime.regime
    inputs = {"a": a, "b": b, "alpha": alpha, "beta": beta, "case": regime.case, "regime": rg}

    def sym(shift):
        return min(1.0, stats.norm.cdf(z - shift) + stats.norm.cdf(z + shift))

    value = None
    if rg == "below-lower":
        value, formula = alpha, "alpha"
    elif rg in ("above-upper", "between"):
        value, formula = 1.0, "1"
    elif rg == "at-N^{-1/4}" and regime.case == 1:
        formula = "Phi(z_{alpha/2} - a) + Phi(z_{alpha/2} + a)"
        if _known(a):
            value = sym(a)
    elif rg == "at-N^{-1/4}":
        formula = "Phi(z_{alpha/2} + a - beta*b) + Phi(z_{alpha/2} - a + beta*b)"
        if _known(a, b, beta):
            value = sym(a - beta * b)
    elif rg == "at-lower":
        formula = "Phi(z_{alpha/2} + b) + Phi(z_{alpha/2} - b)"
        if _known(b):
            value = sym(b)
    elif rg == "at-upper":
        if _known(a, b) and a == b:
            raise DegenerateDirectionError("a(h) = b(h): degenerate direction")
        value, formula = 1.0, "1"
    else:
        raise ValidationError(f"unknown regime {rg!r}")
    value = None if value is None else float(value)
    return PowerPrediction(value, _symbolic(value, alpha, formula), formula, inputs)


def mean_shift_heuristic(coeffs, N: float, k: float, d: int, delta: float) -> float:
    """Approximate shift of the standardized statistic for ``theta_N - theta_1 = h delta``:
    ``-a sqrt(N) delta^2 + b sqrt(N) (k/N)^(2/d) delta``."""
    a, b = _coeffs(coeffs)
    root_n = math.sqrt(N)
    return -a * root_n * delta ** 2 + b * root_n * (k / N) ** (2 / d) * delta


# -- gamma-function identity -----------------------------------------------


def gamma_sum(K: int, d: int) -> float:
    """``sum_{k=0}^{K-1} Gamma(k + 2/d + 1) / Gamma(k + 1)``.

    Each ratio is a Pochhammer symbol ``(k+1)_{2/d}``, evaluated without
    forming either Gamma value, so nothing overflows. Differences of
    ``gammaln`` lose about ``log(K!)`` ulps and are not accurate enough.
    """
    k = np.arange(int(K), dtype=np.float64)
    return math.fsum(special.poch(k + 1, 2 / d))


def gamma_sum_identity_check(K: int, d: int, rtol: float = 1e-10) -> bool:
    """Check the sum equals ``d/(d+2) Gamma(K + 2/d + 1) / Gamma(K)``."""
    if int(K) != K or K < 1 or d < 1:
        raise ValidationError("need integer K >= 1 and d >= 1")
    lhs = gamma_sum(K, d)
    # Gamma(K + 2/d + 1) / Gamma(K) = K (K+1)_{2/d}
    rhs = d / (d + 2) * K * float(special.poch(K + 1, 2 / d))
    return abs(lhs - rhs) <= rtol * abs(rhs)
