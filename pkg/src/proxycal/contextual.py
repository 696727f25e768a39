"""Context- and recency-aware bias estimation.

When domains carry side information (an embedded context vector, a timestamp),
the bias distribution can be estimated locally: history domains are weighted
by a squared-exponential similarity kernel, optionally damped by a Gaussian
time-decay kernel, and the moment fit runs on the weighted differences. The
similarity bandwidth is tuned by maximizing a weighted Gaussian marginal
likelihood over a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    WARN_GAMMA2_TRUNCATED,
    WARN_INSUFFICIENT_DOMAINS,
    BiasModel,
    DomainRecord,
    TargetRecord,
    diff_stats,
)
from .intervals import ConfidenceInterval, plugin_interval

# Domains below this weight are dropped from the likelihood; under the weight
# normalization this perturbs the objective by well under 1e-9.
WEIGHT_FLOOR = 1e-12

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ContextWeights:
    """Normalized nonnegative domain weights, one per history record."""

    weights: tuple[float, ...]
    beta: float
    time_bandwidth: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise ValueError("weights must be finite and nonnegative")
        if abs(sum(self.weights) - 1.0) > _SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.time_bandwidth is not None and self.time_bandwidth <= 0:
            raise ValueError(f"time_bandwidth must be > 0, got {self.time_bandwidth}")


def similarity_weights(
    history_contexts: list[tuple[float, ...]],
    target_context: tuple[float, ...],
    beta: float,
) -> ContextWeights:
    """Squared-exponential similarity of each history context to the target.

    Raw similarity is ``exp(-||c - c_k||^2 / (2 beta^2))``, normalized to sum
    to one. If every similarity underflows to zero the target sits far outside
    the history's context support and no weighting is meaningful.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    tgt = np.asarray(target_context, dtype=float)
    ctx = [np.asarray(c, dtype=float) for c in history_contexts]
    for c in ctx:
        if c.shape != tgt.shape:
            raise ValueError(
                f"context dimension mismatch: history has {c.shape[0]}, target has {tgt.shape[0]}"
            )
    sq = np.array([float(((c - tgt) ** 2).sum()) for c in ctx])
    raw = np.exp(-sq / (2.0 * beta * beta))
    total = raw.sum()
    if total == 0.0:
        raise ValueError("all similarities underflowed: target context lies outside history support")
    return ContextWeights(weights=tuple(raw / total), beta=beta)


def time_decay_weights(
    base: ContextWeights,
    history_times: list[float],
    target_time: float,
    h: float,
) -> ContextWeights:
    """Damp ``base`` by a Gaussian kernel in the time gap and renormalize."""
    if h <= 0:
        raise ValueError(f"time bandwidth h must be > 0, got {h}")
    if len(history_times) != len(base.weights):
        raise ValueError("one timestamp per history domain is required")
    if any(t is None or not math.isfinite(t) for t in history_times):
        raise ValueError("missing or non-finite timestamp in history")
    gaps = np.asarray(history_times, dtype=float) - float(target_time)
    kern = np.exp(-(gaps ** 2) / (2.0 * h * h))
    raw = np.asarray(base.weights) * kern
    total = raw.sum()
    if total == 0.0:
        raise ValueError("all time-decay weights underflowed: history too distant in time")
    return ContextWeights(weights=tuple(raw / total), beta=base.beta, time_bandwidth=h)


def fit_weighted_mom(history: list[DomainRecord], weights: ContextWeights) -> BiasModel:
    """Moment fit with externally supplied domain weights.

    ``rho`` is the weighted mean of the differences and ``gamma2`` the
    weighted mean squared deviation minus the weighted mean difference
    variance, truncated at zero. Uniform weights reproduce the unweighted fit.
    """
    if len(weights.weights) != len(history):
        raise ValueError(
            f"got {len(weights.weights)} weights for {len(history)} history records"
        )
    if not history:
        raise ValueError("fit_weighted_mom requires a non-empty history")
    stats = [diff_stats(r) for r in history]
    d = np.array([s[0] for s in stats])
    dv = np.array([s[1] for s in stats])
    w = np.asarray(weights.weights)

    rho = float(w @ d)
    flags: list[str] = []
    if len(history) == 1:
        gamma2 = 0.0
        flags.append(WARN_INSUFFICIENT_DOMAINS)
    else:
        raw = float(w @ (d - rho) ** 2 - w @ dv)
        gamma2 = max(0.0, raw)
        if raw < 0.0:
            flags.append(WARN_GAMMA2_TRUNCATED)

    return BiasModel(
        rho=rho,
        gamma2=gamma2,
        n_domains=len(history),
        diffs=tuple(float(x) for x in d),
        diff_vars=tuple(float(x) for x in dv),
        warnings=tuple(flags),
    )


def _history_contexts(history: list[DomainRecord]) -> list[tuple[float, ...]]:
    ctxs = []
    for rec in history:
        if rec.context is None:
            raise ValueError(f"{rec.domain_id}: context required but missing")
        ctxs.append(rec.context)
    return ctxs


def _weighted_loglik(d: np.ndarray, dv: np.ndarray, w: np.ndarray, rho: float, gamma2: float) -> float:
    """Weighted Gaussian marginal log-likelihood of the differences.

    A zero total variance at a carried domain makes the likelihood degenerate;
    that bandwidth scores -inf rather than raising.
    """
    active = w > WEIGHT_FLOOR
    v = gamma2 + dv[active]
    if np.any(v == 0.0):
        return -math.inf
    terms = np.log(v) + (d[active] - rho) ** 2 / v
    return float(-0.5 * (w[active] @ terms))


def beta_profile(
    history: list[DomainRecord],
    target_context: tuple[float, ...],
    beta_grid: list[float],
) -> list[tuple[float, float]]:
    """Marginal log-likelihood at every grid bandwidth, as (beta, loglik)."""
    if not beta_grid:
        raise ValueError("beta_grid must be non-empty")
    if len(history) < 2:
        raise ValueError("bandwidth tuning requires at least 2 history records")
    ctxs = _history_contexts(history)
    stats = [diff_stats(r) for r in history]
    d = np.array([s[0] for s in stats])
    dv = np.array([s[1] for s in stats])

    profile = []
    for beta in beta_grid:
        try:
            w = np.asarray(similarity_weights(ctxs, target_context, beta).weights)
        except ValueError:
            # all-zero similarity at this bandwidth: degenerate, not fatal
            profile.append((beta, -math.inf))
            continue
        rho = float(w @ d)
        gamma2 = max(0.0, float(w @ (d - rho) ** 2 - w @ dv))
        profile.append((beta, _weighted_loglik(d, dv, w, rho, gamma2)))
    return profile


def tune_beta(
    history: list[DomainRecord],
    target_context: tuple[float, ...],
    beta_grid: list[float],
) -> tuple[float, float]:
    """Grid-search bandwidth maximizing the weighted marginal likelihood.

    Ties resolve to the first grid point attaining the maximum.
    """
    profile = beta_profile(history, target_context, beta_grid)
    best = max(range(len(profile)), key=lambda i: (profile[i][1], -i))
    return profile[best]


def default_beta_grid(num: int = 41) -> list[float]:
    """Log-spaced bandwidth grid over [1e-2, 1e2]."""
    return [float(b) for b in np.logspace(-2.0, 2.0, num)]


def contextual_interval(
    target: TargetRecord,
    history: list[DomainRecord],
    alpha: float,
    beta: float,
    h: float | None = None,
) -> ConfidenceInterval:
    """Plug-in interval from the similarity-weighted (optionally time-decayed) fit."""
    if target.context is None:
        raise ValueError(f"{target.domain_id}: target context required but missing")
    weights = similarity_weights(_history_contexts(history), target.context, beta)
    if h is not None:
        if target.timestamp is None:
            raise ValueError(f"{target.domain_id}: target timestamp required for time decay")
        times = []
        for rec in history:
            if rec.timestamp is None:
                raise ValueError(f"{rec.domain_id}: timestamp required but missing")
            times.append(rec.timestamp)
        weights = time_decay_weights(weights, times, target.timestamp, h)
    model = fit_weighted_mom(history, weights)
    return plugin_interval(target, model, alpha)
