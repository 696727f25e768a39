"""Aggregate-estimate data model and the moment fit of the cross-domain bias law.

The calibration consumes nothing but per-domain aggregate summaries: a primary
estimate, a proxy estimate, and their 2x2 sampling covariance. The proxy's
residual bias is modeled as a domain-level random effect with mean ``rho`` and
between-domain variance ``gamma2``, both recovered by a closed-form
method-of-moments fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Relative slack on the covariance bound, absorbing rounding in upstream files.
_COV_SLACK = 1e-12

WARN_INSUFFICIENT_DOMAINS = "insufficient_domains_for_variance"
WARN_GAMMA2_TRUNCATED = "gamma2_truncated"


class InvalidRecordError(ValueError):
    """An aggregate record violates its variance/covariance constraints."""


def _check_cov_block(domain_id: str, var_primary: float, var_proxy: float, cov: float) -> None:
    for name, v in (("var_primary", var_primary), ("var_proxy", var_proxy)):
        if not math.isfinite(v) or v < 0:
            raise InvalidRecordError(f"{domain_id}: {name} must be finite and >= 0, got {v}")
    if not math.isfinite(cov):
        raise InvalidRecordError(f"{domain_id}: cov_primary_proxy must be finite, got {cov}")
    if cov * cov > var_primary * var_proxy * (1.0 + _COV_SLACK):
        raise InvalidRecordError(
            f"{domain_id}: cov_primary_proxy^2 = {cov * cov} exceeds "
            f"var_primary * var_proxy = {var_primary * var_proxy}"
        )


def _check_finite(domain_id: str, **values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidRecordError(f"{domain_id}: {name} must be finite, got {v}")


@dataclass(frozen=True)
class DomainRecord:
    """Aggregate summary of one fully observed historical domain.

    Holds the primary and proxy point estimates together with their sampling
    variances and covariance. This is the only per-domain input the
    calibration needs; individual-level data never enter.
    """

    domain_id: str
    theta_hat: float
    theta_star_hat: float
    var_primary: float
    var_proxy: float
    cov_primary_proxy: float
    context: tuple[float, ...] | None = None
    timestamp: float | None = None

    def __post_init__(self) -> None:
        _check_finite(self.domain_id, theta_hat=self.theta_hat, theta_star_hat=self.theta_star_hat)
        _check_cov_block(self.domain_id, self.var_primary, self.var_proxy, self.cov_primary_proxy)
        if self.context is not None:
            object.__setattr__(self, "context", tuple(float(c) for c in self.context))


@dataclass(frozen=True)
class TargetRecord:
    """Proxy estimate and its sampling variance for the unlabeled target domain."""

    domain_id: str
    theta_star_hat: float
    var_proxy: float
    context: tuple[float, ...] | None = None
    timestamp: float | None = None

    def __post_init__(self) -> None:
        _check_finite(self.domain_id, theta_star_hat=self.theta_star_hat)
        if not math.isfinite(self.var_proxy) or self.var_proxy < 0:
            raise InvalidRecordError(
                f"{self.domain_id}: var_proxy must be finite and >= 0, got {self.var_proxy}"
            )
        if self.context is not None:
            object.__setattr__(self, "context", tuple(float(c) for c in self.context))


@dataclass(frozen=True)
class BiasModel:
    """Fitted bias distribution plus the per-domain statistics it was fit on.

    ``rho`` is the mean residual bias, ``gamma2`` the between-domain bias
    variance (truncated at zero). ``diffs`` and ``diff_vars`` retain each
    domain's proxy-primary difference and its sampling variance so that
    resampling procedures can refit without the original records.
    """

    rho: float
    gamma2: float
    n_domains: int
    diffs: tuple[float, ...]
    diff_vars: tuple[float, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.n_domains < 1:
            raise ValueError(f"n_domains must be >= 1, got {self.n_domains}")
        if self.gamma2 < 0:
            raise ValueError(f"gamma2 must be >= 0, got {self.gamma2}")
        if len(self.diffs) != self.n_domains or len(self.diff_vars) != self.n_domains:
            raise ValueError("diffs and diff_vars must have length n_domains")


def diff_stats(record: DomainRecord) -> tuple[float, float]:
    """Proxy-primary difference and its sampling variance for one domain.

    Returns ``(d, diff_var)`` with ``d = theta_star_hat - theta_hat`` and
    ``diff_var = var_primary + var_proxy - 2 * cov_primary_proxy``. The
    covariance bound enforced on the record guarantees ``diff_var >= 0`` up
    to rounding, which is clipped away.
    """
    d = record.theta_star_hat - record.theta_hat
    diff_var = record.var_primary + record.var_proxy - 2.0 * record.cov_primary_proxy
    return d, max(0.0, diff_var)


def fit_mom(history: list[DomainRecord]) -> BiasModel:
    """Method-of-moments fit of the bias distribution from historical records.

    ``rho`` is the plain mean of the per-domain differences. ``gamma2`` is the
    mean squared deviation of the differences (divisor equal to the domain
    count, no Bessel correction) minus the mean difference variance, truncated
    at zero. A single-domain history cannot identify a variance: the fit
    degrades to ``gamma2 = 0`` with a warning flag instead of erroring.
    """
    if not history:
        raise ValueError("fit_mom requires a non-empty history")
    stats = [diff_stats(r) for r in history]
    d = np.array([s[0] for s in stats])
    dv = np.array([s[1] for s in stats])

    rho = float(d.mean())
    flags: list[str] = []
    if len(history) == 1:
        gamma2 = 0.0
        flags.append(WARN_INSUFFICIENT_DOMAINS)
    else:
        raw = float(((d - rho) ** 2).mean() - dv.mean())
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


def debias(target: TargetRecord, model: BiasModel) -> float:
    """Bias-corrected point estimate for the target domain."""
    return target.theta_star_hat - model.rho
