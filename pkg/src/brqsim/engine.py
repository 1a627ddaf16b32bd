"""Seeded Monte Carlo orchestration, statistics and parameter sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analytics
from .analytics import DEFAULT_QUAD, QuadratureSpec
from .channel import FadingModel, LinkConfig, Rayleigh
from .errors import InsufficientFeedbackError
from .protocol import SessionLog, run_full_csit, run_quantized

_Z95 = 1.959963984540054  # two-sided 95% normal quantile

_SCHEMES = ("full", "quantized")


@dataclass(frozen=True)
class RunConfig:
    """Replication plan for one simulated operating point."""

    seed: int
    replications: int
    horizon: int
    scheme: str = "full"
    include_warmup: bool = False

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"scheme must be one of {_SCHEMES}")


@dataclass
class StatsSummary:
    """Aggregated replication statistics with 95% confidence half-widths."""

    rate_mean: float
    rate_half_width: float
    delay_mean: float
    delay_half_width: float
    delay_hist: dict[int, float]
    renewal_count: int
    undelivered_bits: float
    integrity: str  # "pass" | "fail"
    replications: int
    horizon: int

    def to_json_dict(self) -> dict:
        def scrub(x: float):
            return None if isinstance(x, float) and not math.isfinite(x) else x

        return {
            "rate_mean": scrub(self.rate_mean),
            "rate_half_width": scrub(self.rate_half_width),
            "delay_mean": scrub(self.delay_mean),
            "delay_half_width": scrub(self.delay_half_width),
            "delay_hist": {str(k): self.delay_hist[k] for k in sorted(self.delay_hist)},
            "renewal_count": self.renewal_count,
            "undelivered_bits": self.undelivered_bits,
            "integrity": self.integrity,
            "replications": self.replications,
            "horizon": self.horizon,
        }


@dataclass(frozen=True)
class RatePoint:
    """One analytic curve sample for the sweep tables."""

    mean_snr: float  # linear
    rate_r: float | None  # None for rate-independent baselines
    scheme: str  # "brq_full" | "brq_quantized" | "prior_fixed" | "waterfilling"
    value: float
    feedback_bits: float | None = None
    note: str = ""


def _replication_rngs(seed: int, rep: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent channel and payload substreams for one replication."""
    channel = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(rep, 0)))
    payload = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(rep, 1)))
    return channel, payload


def _run_session(
    run: RunConfig, link: LinkConfig, model: FadingModel, rep: int, record_slots: bool
) -> SessionLog:
    rng, source_rng = _replication_rngs(run.seed, rep)
    if run.scheme == "quantized":
        return run_quantized(
            link,
            model,
            run.horizon,
            rng,
            source_rng,
            record_slots=record_slots,
            include_warmup=run.include_warmup,
        )
    return run_full_csit(
        link, model, run.horizon, rng, source_rng, record_slots=record_slots
    )


def _mean_half_width(values: list[float]) -> tuple[float, float]:
    clean = [v for v in values if math.isfinite(v)]
    if not clean:
        return math.nan, 0.0
    mean = sum(clean) / len(clean)
    if len(clean) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in clean) / (len(clean) - 1)
    return mean, _Z95 * math.sqrt(var / len(clean))


def run_replicated(
    run: RunConfig,
    link: LinkConfig,
    model: FadingModel,
    *,
    max_workers: int | None = None,
    record_slots: bool = False,
    collect_logs: list[SessionLog] | None = None,
) -> StatsSummary:
    """Run independent replications and aggregate; the result is a pure
    function of (run, link, model), regardless of worker count."""
    reps = range(run.replications)
    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            logs = list(
                pool.map(
                    lambda i: _run_session(run, link, model, i, record_slots), reps
                )
            )
    else:
        logs = [_run_session(run, link, model, i, record_slots) for i in reps]

    if collect_logs is not None:
        collect_logs.extend(logs)

    rate_mean, rate_hw = _mean_half_width([log.delivered_rate for log in logs])
    delay_mean, delay_hw = _mean_half_width([log.mean_delay for log in logs])
    hist: dict[int, float] = {}
    for log in logs:
        for delay, bits in log.delay_hist.items():
            hist[delay] = hist.get(delay, 0.0) + bits
    return StatsSummary(
        rate_mean=rate_mean,
        rate_half_width=rate_hw,
        delay_mean=delay_mean,
        delay_half_width=delay_hw,
        delay_hist=hist,
        renewal_count=sum(log.renewal_count for log in logs),
        undelivered_bits=sum(log.undelivered_bits for log in logs),
        integrity="pass" if all(log.integrity_ok for log in logs) else "fail",
        replications=run.replications,
        horizon=run.horizon,
    )


def _quantized_point(
    model: Rayleigh, rate: float, fbits: float, spec: QuadratureSpec
) -> RatePoint:
    try:
        value = analytics.avg_rate_quantized(model, rate, fbits, spec)
        return RatePoint(model.mean_snr, rate, "brq_quantized", value, fbits)
    except InsufficientFeedbackError:
        return RatePoint(
            model.mean_snr,
            rate,
            "brq_quantized",
            math.nan,
            fbits,
            note="insufficient_feedback",
        )


def sweep_mean_snr(
    mean_snr_db_grid,
    rate_factors=(2.0, 3.0),
    feedback_bits=(1.0,),
    spec: QuadratureSpec = DEFAULT_QUAD,
) -> list[RatePoint]:
    """Analytic rates over a mean-SNR grid, with R = log2(1 + k * mean_snr).

    Emits the water-filling and fixed-power prior-CSIT baselines for each
    grid point plus, per rate factor k, the full-CSIT rate and one
    quantized rate per feedback budget.
    """
    if len(mean_snr_db_grid) == 0:
        raise ValueError("SNR grid must be nonempty")
    points: list[RatePoint] = []
    for db in mean_snr_db_grid:
        mean_snr = 10.0 ** (db / 10.0)
        model = Rayleigh(mean_snr)
        points.append(
            RatePoint(
                mean_snr, None, "waterfilling", analytics.waterfilling_rate(model, 1.0, spec)
            )
        )
        points.append(
            RatePoint(
                mean_snr, None, "prior_fixed", analytics.avg_rate_prior_fixed_power(model, spec)
            )
        )
        for k in rate_factors:
            rate = math.log2(1.0 + k * mean_snr)
            points.append(
                RatePoint(
                    mean_snr, rate, "brq_full", analytics.avg_rate_full_csit(model, rate, spec)
                )
            )
            for fbits in feedback_bits:
                points.append(_quantized_point(model, rate, fbits, spec))
    return points


def sweep_threshold_ratio(
    mean_snr: float,
    ratio_grid,
    feedback_bits=(1.0, 2.0, 8.0),
    spec: QuadratureSpec = DEFAULT_QUAD,
) -> list[RatePoint]:
    """Analytic rates at fixed mean SNR over a gamma_R / mean_snr grid.

    Each ratio x sets R = log2(1 + x * mean_snr).  Budgets that cannot
    cover the success mask are marked, not fatal.
    """
    if mean_snr <= 0:
        raise ValueError("mean SNR must be positive")
    if len(ratio_grid) == 0:
        raise ValueError("ratio grid must be nonempty")
    model = Rayleigh(mean_snr)
    points: list[RatePoint] = []
    for x in ratio_grid:
        rate = math.log2(1.0 + x * mean_snr)
        points.append(
            RatePoint(
                mean_snr, rate, "brq_full", analytics.avg_rate_full_csit(model, rate, spec)
            )
        )
        for fbits in feedback_bits:
            points.append(_quantized_point(model, rate, fbits, spec))
    return points
