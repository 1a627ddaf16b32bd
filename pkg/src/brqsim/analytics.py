"""Closed-form performance expressions evaluated by adaptive quadrature.

Every function here has a Monte Carlo counterpart in the protocol/engine
modules; the test suite checks the two routes against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from scipy import integrate

from .channel import (
    Deterministic,
    EmpiricalTrace,
    FadingModel,
    Rayleigh,
    capacity,
    inv_capacity,
)
from .errors import InfiniteDelayError, InsufficientFeedbackError, NumericError

# Rayleigh integrands are negligible beyond this many mean-SNR multiples;
# capping there keeps the adaptive rule from hunting over empty decades.
_TAIL_MULTIPLES = 60.0

_WF_BRACKET_EPS = 1e-12
_WF_POWER_TOL = 1e-9


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for the adaptive quadrature behind every integral."""

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self) -> None:
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureSpec()


def _quad(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    spec: QuadratureSpec,
    points: list[float] | None = None,
) -> float:
    if hi <= lo:
        return 0.0
    kwargs = {}
    if points is not None and math.isfinite(hi):
        pts = [p for p in points if lo < p < hi]
        if pts:
            kwargs["points"] = pts
    out = integrate.quad(
        f,
        lo,
        hi,
        epsrel=spec.rel_tol,
        epsabs=spec.abs_tol,
        limit=spec.max_subdivisions,
        full_output=1,
        **kwargs,
    )
    value, abserr = out[0], out[1]
    if len(out) > 3:  # scipy appends an explanation when it gave up
        achieved = abserr / max(abs(value), 1.0)
        raise NumericError(
            f"quadrature did not converge: achieved ~{achieved:.2e} relative "
            f"({abserr:.2e} absolute), requested {spec.rel_tol:.0e}"
        )
    return value


def _expect_outage(
    model: FadingModel,
    f: Callable[[float], float],
    threshold: float,
    spec: QuadratureSpec,
    points: list[float] | None = None,
) -> float:
    """E[f(snr); snr < threshold] for the supported models."""
    if threshold <= 0:
        return 0.0
    if isinstance(model, Rayleigh):
        hi = min(threshold, _TAIL_MULTIPLES * model.mean_snr)
        return _quad(lambda g: model.pdf(g) * f(g), 0.0, hi, spec, points)
    if isinstance(model, Deterministic):
        return f(model.snr) if model.snr < threshold else 0.0
    if isinstance(model, EmpiricalTrace):
        return sum(f(s) for s in model.snrs if s < threshold) / len(model.snrs)
    raise TypeError(f"unsupported model type: {type(model).__name__}")


def avg_rate_full_csit(
    model: FadingModel, rate: float, spec: QuadratureSpec = DEFAULT_QUAD
) -> float:
    """Average delivered rate of backtrack retransmission with full delayed CSIT.

    E[C(snr); snr < gamma_R] + rate * P(snr >= gamma_R), where
    gamma_R = 2**rate - 1.
    """
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    if rate == 0:
        return 0.0
    gamma_r = inv_capacity(rate)
    return _expect_outage(model, capacity, gamma_r, spec) + rate * model.decode_prob(
        gamma_r
    )


def avg_rate_r_limited(
    model: FadingModel, rate: float, spec: QuadratureSpec = DEFAULT_QUAD
) -> float:
    """Average rate of the prior-CSIT reference that transmits at min{C(snr), R}.

    Equals avg_rate_full_csit; kept as a separate evaluation of the min
    expectation so the equality stays checkable.
    """
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    if rate == 0:
        return 0.0
    gamma_r = inv_capacity(rate)
    low = _expect_outage(model, lambda g: min(capacity(g), rate), gamma_r, spec)
    return low + rate * model.decode_prob(gamma_r)


def avg_rate_prior_fixed_power(
    model: FadingModel, spec: QuadratureSpec = DEFAULT_QUAD
) -> float:
    """Ergodic capacity E[C(snr)] at fixed unit power (prior-CSIT baseline)."""
    if isinstance(model, Rayleigh):
        return _quad(
            lambda g: model.pdf(g) * capacity(g), 0.0, math.inf, spec
        )
    if isinstance(model, Deterministic):
        return capacity(model.snr)
    if isinstance(model, EmpiricalTrace):
        return sum(capacity(s) for s in model.snrs) / len(model.snrs)
    raise TypeError(f"unsupported model type: {type(model).__name__}")


def _wf_mean_power(model: FadingModel, level: float, spec: QuadratureSpec) -> float:
    """Mean transmit power E[(1/level - 1/snr)^+] at a given water level."""
    if isinstance(model, Rayleigh):
        hi = max(_TAIL_MULTIPLES * model.mean_snr, 2.0 * level)
        if level >= hi:
            return 0.0
        return _quad(
            lambda g: model.pdf(g) * (1.0 / level - 1.0 / g),
            level,
            hi,
            spec,
        )
    if isinstance(model, EmpiricalTrace):
        total = 0.0
        for s in model.snrs:
            if s > level:
                total += 1.0 / level - 1.0 / s
        return total / len(model.snrs)
    raise TypeError(f"unsupported model type: {type(model).__name__}")


def waterfilling_rate(
    model: FadingModel,
    power_budget: float = 1.0,
    spec: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Average rate with prior CSIT and water-filling power allocation.

    Solves the water level by bisection so the mean power meets the
    budget within 1e-9, then integrates log2(1 + snr * power(snr)).
    """
    if power_budget <= 0:
        raise ValueError(f"power budget must be positive, got {power_budget}")
    if isinstance(model, Deterministic):
        # Constant channel: all power goes to the single state.
        return capacity(model.snr * power_budget)

    lo, hi = _WF_BRACKET_EPS, 1.0 / _WF_BRACKET_EPS
    for _ in range(8):
        if _wf_mean_power(model, lo, spec) >= power_budget:
            break
        lo /= 1e6
    else:
        raise NumericError("water-level bracket: lower end carries too little power")
    for _ in range(8):
        if _wf_mean_power(model, hi, spec) <= power_budget:
            break
        hi *= 1e6
    else:
        raise NumericError("water-level bracket: upper end carries too much power")

    level = lo
    power = _wf_mean_power(model, level, spec)
    for _ in range(200):
        level = 0.5 * (lo + hi)
        power = _wf_mean_power(model, level, spec)
        if abs(power - power_budget) <= _WF_POWER_TOL:
            break
        if power > power_budget:
            lo = level
        else:
            hi = level
    else:
        raise NumericError(
            f"water-level bisection stalled: power residual {power - power_budget:.2e}"
        )

    if isinstance(model, Rayleigh):
        hi_int = max(_TAIL_MULTIPLES * model.mean_snr, 2.0 * level)
        return _quad(
            lambda g: model.pdf(g) * math.log2(g / level),
            level,
            hi_int,
            spec,
        )
    total = 0.0
    for s in model.snrs:
        if s > level:
            total += math.log2(s / level)
    return total / len(model.snrs)


def avg_delay_slots(model: FadingModel, rate: float) -> float:
    """Mean number of failed slots a new bit waits before its decoding slot.

    The wait is geometric with the per-slot decoding probability p_R, so
    the mean is (1 - p_R) / p_R, which grows with the rate.
    """
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    p = model.decode_prob(inv_capacity(rate))
    if p == 0:
        raise InfiniteDelayError("decoding probability is zero")
    return (1.0 - p) / p


def two_phase_ir_rate(rate: float, snr: float) -> float:
    """Equivalent rate of one rate-R slot plus minimal variable-length redundancy.

    The retransmission phase sizes itself to the receiver's side
    information, so the pair delivers min{R, C(snr)}; snr = 0 yields
    rate 0 (the retransmission never ends), not an error.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return min(rate, capacity(snr))


def three_slot_backtrack_rate(rate: float, snr1: float, snr2: float) -> float:
    """Delivered rate over two outage slots resolved by a third decodable one."""
    c1, c2 = capacity(snr1), capacity(snr2)
    if c1 >= rate or c2 >= rate:
        raise ValueError("both leading slots must be in outage (C(snr) < rate)")
    return (rate + c1 + c2) / 3.0


def binary_entropy(p: float) -> float:
    """Entropy -p*log2(p) - (1-p)*log2(1-p) in bits, with H(0) = H(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def distortion_bound(feedback_bits: float, p_r: float, mean_snr: float) -> float:
    """Worst-case SNR quantization distortion for a per-slot budget of F bits.

    The success mask consumes H(p_R) bits per slot asymptotically; the
    remainder quantizes the SNR, giving mean_snr * 2**-(F - H(p_R)).
    """
    if mean_snr <= 0:
        raise ValueError(f"mean SNR must be positive, got {mean_snr}")
    h = binary_entropy(p_r)
    if feedback_bits <= h:
        raise InsufficientFeedbackError(
            f"feedback budget {feedback_bits} does not exceed mask cost {h:.4f}"
        )
    return mean_snr * 2.0 ** -(feedback_bits - h)


def avg_rate_quantized(
    model: Rayleigh,
    rate: float,
    feedback_bits: float,
    spec: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Average rate with F feedback bits per slot and block-quantized CSIT.

    Uses the conservative lower-bound SNR (snr - d)^+ with the distortion
    budget d = distortion_bound(F, p_R, mean_snr), so the value never
    exceeds the full-CSIT rate and grows toward it as F increases.
    """
    if not isinstance(model, Rayleigh):
        raise TypeError("quantized-rate analysis is defined for Rayleigh fading only")
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    gamma_r = inv_capacity(rate)
    p_r = model.decode_prob(gamma_r)
    d = distortion_bound(feedback_bits, p_r, model.mean_snr)
    if rate == 0:
        return 0.0
    low = _expect_outage(
        model,
        lambda g: capacity(max(g - d, 0.0)),
        gamma_r,
        spec,
        points=[d],
    )
    return low + rate * p_r
