"""Leave-one-domain-out calibration diagnostics.

True coverage cannot be checked on historical data because the primary metric
is only ever estimated. The observable stand-in: hold out one domain, build
its proxy-based interval from the remaining domains, and ask whether it
overlaps the held-out domain's own primary interval. Aggregated over domains
this yields an overlap rate and a normalized width, comparable across interval
construction methods.
"""

from __future__ import annotations

from ._rng import derive_seed
from .core import DomainRecord, TargetRecord, fit_mom
from .intervals import (
    DEFAULT_BOOTSTRAP_DRAWS,
    ConfidenceInterval,
    domain_bootstrap_interval,
    plugin_interval,
    wald_interval,
)

METHODS = ("unadjusted", "plugin", "bootstrap")


def intervals_overlap(a: ConfidenceInterval, b: ConfidenceInterval) -> bool:
    """Whether two closed intervals intersect; a shared endpoint counts."""
    return a.lower <= b.upper and b.lower <= a.upper


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def _loo_interval_pairs(
    history: list[DomainRecord],
    alpha: float,
    method: str,
    bootstrap_draws: int,
    seed: int,
) -> list[tuple[ConfidenceInterval, ConfidenceInterval]]:
    """(proxy interval, primary interval) for each held-out domain.

    The held-out domain contributes only its proxy fields to the proxy-side
    interval; its primary estimate feeds the comparison interval alone.
    """
    _check_method(method)
    if len(history) < 2:
        raise ValueError("leave-one-out diagnostics require at least 2 history records")

    pairs = []
    for k, rec in enumerate(history):
        rest = history[:k] + history[k + 1 :]
        held_out = TargetRecord(
            domain_id=rec.domain_id,
            theta_star_hat=rec.theta_star_hat,
            var_proxy=rec.var_proxy,
            context=rec.context,
            timestamp=rec.timestamp,
        )
        if method == "unadjusted":
            proxy_iv = wald_interval(held_out.theta_star_hat, held_out.var_proxy, alpha)
        elif method == "plugin":
            proxy_iv = plugin_interval(held_out, fit_mom(rest), alpha)
        else:
            proxy_iv = domain_bootstrap_interval(
                rest, held_out, alpha, draws=bootstrap_draws, seed=derive_seed(seed, k)
            )
        primary_iv = wald_interval(rec.theta_hat, rec.var_primary, alpha)
        pairs.append((proxy_iv, primary_iv))
    return pairs


def loo_overlap_rate(
    history: list[DomainRecord],
    alpha: float,
    method: str = "plugin",
    bootstrap_draws: int = DEFAULT_BOOTSTRAP_DRAWS,
    seed: int = 0,
) -> float:
    """Fraction of held-out domains whose proxy interval meets their primary interval."""
    pairs = _loo_interval_pairs(history, alpha, method, bootstrap_draws, seed)
    return sum(intervals_overlap(p, q) for p, q in pairs) / len(pairs)


def overlap_curve(
    history: list[DomainRecord],
    alphas: list[float],
    method: str = "plugin",
    bootstrap_draws: int = DEFAULT_BOOTSTRAP_DRAWS,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """Overlap rate evaluated at each alpha, as (alpha, rate) pairs."""
    return [
        (alpha, loo_overlap_rate(history, alpha, method, bootstrap_draws, seed))
        for alpha in alphas
    ]


def normalized_width(
    history: list[DomainRecord],
    alpha: float,
    method: str = "plugin",
    bootstrap_draws: int = DEFAULT_BOOTSTRAP_DRAWS,
    seed: int = 0,
) -> float:
    """Mean held-out proxy interval width over mean primary interval width."""
    pairs = _loo_interval_pairs(history, alpha, method, bootstrap_draws, seed)
    proxy_mean = sum(p.width for p, _ in pairs) / len(pairs)
    primary_mean = sum(q.width for _, q in pairs) / len(pairs)
    if primary_mean == 0.0:
        raise ValueError("primary intervals have zero mean width (degenerate variances)")
    return proxy_mean / primary_mean
