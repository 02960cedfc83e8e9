"""Heterogeneous-unit lagged OLS.

Each unit ``i`` is fitted separately on

    y_t = alpha + sum_k gamma_k y_{t-k} + sum_k beta_k x_{t-k} + e_t,  k = 1..K

with a lag order ``K`` shared across units. Estimation uses a thin QR
decomposition; the normal equations are never formed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import linalg, stats

from .errors import ConfigError, DataError, NumericalError, RankDeficiencyError, SeriesTooShortError


@dataclass(frozen=True)
class ModelSpec:
    K: int
    include_intercept: bool = True
    ci_level: float = 0.95
    two_tailed: bool = True

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"lag order K must be a positive integer, got {self.K!r}")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError(f"ci_level must lie in (0, 1), got {self.ci_level!r}")

    @property
    def n_params(self) -> int:
        return 2 * self.K + int(self.include_intercept)


def coef_names(K: int, include_intercept: bool = True) -> list[str]:
    names = ["alpha"] if include_intercept else []
    names += [f"gamma{k}" for k in range(1, K + 1)]
    names += [f"beta{k}" for k in range(1, K + 1)]
    return names


def build_lag_matrix(
    y: Sequence[float],
    x: Sequence[float],
    K: int,
    start: Optional[int] = None,
    include_intercept: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Response vector and lag design for one unit.

    Rows correspond to ``t = start .. T'-1`` (0-based; ``start`` defaults to
    ``K``). Row ``t`` of the design is
    ``[1, y[t-1], ..., y[t-K], x[t-1], ..., x[t-K]]``. Passing a common
    ``start`` larger than ``K`` aligns samples across lag orders.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.ndim != 1 or y.shape != x.shape:
        raise DataError(f"y and x must be 1-D of equal length, got {y.shape} and {x.shape}")
    if int(K) != K or K < 1:
        raise ConfigError(f"K must be a positive integer, got {K!r}")
    start = K if start is None else int(start)
    if start < K:
        raise ConfigError(f"start ({start}) must be at least K ({K})")
    t_prime = y.size
    t_eff = t_prime - start
    n_cols = 2 * K + int(include_intercept)
    if t_eff <= n_cols:
        raise SeriesTooShortError(
            f"series of length {t_prime} leaves {t_eff} usable rows for {n_cols} "
            f"coefficients at K={K}"
        )
    cols = [np.ones(t_eff)] if include_intercept else []
    cols += [y[start - k: t_prime - k] for k in range(1, K + 1)]
    cols += [x[start - k: t_prime - k] for k in range(1, K + 1)]
    return y[start:].copy(), np.column_stack(cols)


class OLSResult(NamedTuple):
    coeffs: np.ndarray
    cov: np.ndarray
    rss: float
    sigma2: float


def _check_rank(design: np.ndarray, r: np.ndarray, names=None) -> None:
    n, p = design.shape
    col_norms = np.linalg.norm(design, axis=0)
    tol = max(n, p) * np.finfo(float).eps * 10
    for j in range(p):
        if col_norms[j] == 0.0 or abs(r[j, j]) <= tol * col_norms[j]:
            raise RankDeficiencyError(j, None if names is None else names[j])


def _qr_fit(response: np.ndarray, design: np.ndarray, names=None):
    n, p = design.shape
    if n < p + 1:
        raise SeriesTooShortError(f"OLS needs more rows than columns, got {n}x{p}")
    q, r = np.linalg.qr(design)
    _check_rank(design, r, names)
    qty = q.T @ response
    coeffs = linalg.solve_triangular(r, qty)
    resid = response - design @ coeffs
    rss = float(resid @ resid)
    sigma2 = rss / (n - p)
    r_inv = linalg.solve_triangular(r, np.eye(p))
    cov = sigma2 * (r_inv @ r_inv.T)
    cov = 0.5 * (cov + cov.T)
    return OLSResult(coeffs, cov, rss, sigma2), qty


def ols(response: Sequence[float], design, names: Optional[Sequence[str]] = None) -> OLSResult:
    """Least squares via thin QR.

    Returns ``(coeffs, cov, rss, sigma2)`` with ``sigma2 = rss / (n - p)``
    and ``cov = sigma2 * (X'X)^-1`` obtained from ``R^-1``.

    Raises
    ------
    RankDeficiencyError
        Names the first column that is (numerically) a combination of the
        columns before it.
    """
    response = np.asarray(response, dtype=float)
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or response.shape != (design.shape[0],):
        raise DataError(f"incompatible shapes {response.shape} and {design.shape}")
    return _qr_fit(response, design, names)[0]


@dataclass(frozen=True, eq=False)
class UnitFit:
    """One unit's unrestricted fit plus the restricted (``beta = 0``) RSS."""

    unit_id: str
    K: int
    include_intercept: bool
    coeffs: np.ndarray
    cov: np.ndarray
    rss_u: float
    rss_r: float
    sigma2: float
    T_eff: int
    wald: float

    @property
    def names(self) -> list[str]:
        return coef_names(self.K, self.include_intercept)

    @property
    def alpha(self) -> float:
        return float(self.coeffs[0]) if self.include_intercept else 0.0

    @property
    def gamma(self) -> np.ndarray:
        o = int(self.include_intercept)
        return self.coeffs[o: o + self.K]

    @property
    def beta(self) -> np.ndarray:
        o = int(self.include_intercept)
        return self.coeffs[o + self.K: o + 2 * self.K]

    @property
    def n_params(self) -> int:
        return self.coeffs.size

    @property
    def df_resid(self) -> int:
        return self.T_eff - self.n_params

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def index_of(self, coeff) -> int:
        """Position of a coefficient given as an int or a name like ``"beta7"``."""
        if isinstance(coeff, str):
            try:
                return self.names.index(coeff)
            except ValueError:
                raise IndexError(f"no coefficient named {coeff!r}; have {self.names}") from None
        j = int(coeff)
        if not 0 <= j < self.n_params:
            raise IndexError(f"coefficient index {j} out of range 0..{self.n_params - 1}")
        return j

    def t_stats(self) -> np.ndarray:
        se = self.se
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, self.coeffs / np.where(se > 0, se, 1.0), np.nan)

    def p_values(self, two_tailed: bool = True) -> np.ndarray:
        t = self.t_stats()
        if two_tailed:
            return 2.0 * stats.t.sf(np.abs(t), self.df_resid)
        return stats.t.sf(t, self.df_resid)

    def loglik(self) -> float:
        """Gaussian log-likelihood at the ML variance ``rss / T_eff``."""
        return -0.5 * self.T_eff * (math.log(2 * math.pi) + math.log(self.rss_u / self.T_eff) + 1)

    def bic(self) -> float:
        """Per-unit BIC (diagnostic only; lag selection uses the pooled form)."""
        return self.T_eff * math.log(self.rss_u / self.T_eff) + self.n_params * math.log(self.T_eff)

    def to_dict(self, ci_level: float = 0.95, two_tailed: bool = True) -> dict:
        cis = [confidence_interval(self, j, ci_level) for j in range(self.n_params)]
        pvals = self.p_values(two_tailed)
        return {
            "unit_id": self.unit_id,
            "T_eff": self.T_eff,
            "coefficients": {
                name: {
                    "estimate": float(self.coeffs[j]),
                    "se": float(self.se[j]),
                    "ci": [float(cis[j][0]), float(cis[j][1])],
                    "p_value": None if np.isnan(pvals[j]) else float(pvals[j]),
                }
                for j, name in enumerate(self.names)
            },
            "rss_u": self.rss_u,
            "rss_r": self.rss_r,
            "sigma2": self.sigma2,
            "wald": self.wald,
        }


def fit_unit(
    y: Sequence[float],
    x: Sequence[float],
    spec: ModelSpec,
    unit_id: str = "unit",
    start: Optional[int] = None,
) -> UnitFit:
    """Fit one unit and compute the Wald statistic for ``beta_1..beta_K = 0``.

    The restricted model drops the indicator-lag block. Because that block is
    the trailing block of the design, the restricted least-squares fit is
    spanned by the leading columns of the same QR factorization, which keeps
    ``rss_r >= rss_u`` exact in floating point.

    ``wald = (rss_r - rss_u) / (rss_u / (T_eff - p))`` where ``p`` is the
    number of unrestricted coefficients.
    """
    response, design = build_lag_matrix(y, x, spec.K, start, spec.include_intercept)
    names = coef_names(spec.K, spec.include_intercept)
    try:
        res, qty = _qr_fit(response, design, names)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(exc.column, exc.name, unit_id) from None
    n, p = design.shape
    extra = float(np.sum(qty[p - spec.K:] ** 2))
    rss_u = res.rss
    rss_r = rss_u + extra
    if rss_u > 0.0:
        wald = extra / (rss_u / (n - p))
    else:
        wald = 0.0 if extra == 0.0 else math.inf
    return UnitFit(
        unit_id=str(unit_id),
        K=spec.K,
        include_intercept=spec.include_intercept,
        coeffs=res.coeffs,
        cov=res.cov,
        rss_u=rss_u,
        rss_r=rss_r,
        sigma2=res.sigma2,
        T_eff=n,
        wald=float(wald),
    )


def confidence_interval(fit: UnitFit, coeff_index, level: float = 0.95) -> tuple[float, float]:
    """Two-sided t interval ``est +/- t_{(1+level)/2, T_eff - p} * se``."""
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must lie in (0, 1), got {level!r}")
    j = fit.index_of(coeff_index)
    est = float(fit.coeffs[j])
    half = stats.t.ppf(0.5 + level / 2.0, fit.df_resid) * float(fit.se[j])
    return est - half, est + half


@dataclass(frozen=True, eq=False)
class PanelFit:
    spec: ModelSpec
    fits: tuple[UnitFit, ...]
    bic_total: float
    loglik_total: float
    n_obs_total: int

    @property
    def units(self) -> tuple[str, ...]:
        return tuple(f.unit_id for f in self.fits)

    def fit_for(self, unit_id: str) -> UnitFit:
        for f in self.fits:
            if f.unit_id == unit_id:
                return f
        raise KeyError(unit_id)

    def to_dict(self) -> dict:
        return {
            "K": self.spec.K,
            "include_intercept": self.spec.include_intercept,
            "ci_level": self.spec.ci_level,
            "ci_method": "t",
            "bic_total": self.bic_total,
            "loglik_total": self.loglik_total,
            "n_obs_total": self.n_obs_total,
            "units": [f.to_dict(self.spec.ci_level, self.spec.two_tailed) for f in self.fits],
        }


def bic(panel_fit: PanelFit) -> float:
    """Pooled BIC ``sum_i T_i ln(rss_i / T_i) + N p ln(sum_i T_i)``."""
    fits = panel_fit.fits
    if not fits:
        raise NumericalError("panel fit has no units")
    ks = {f.K for f in fits}
    if len(ks) != 1:
        raise ConfigError(f"units fitted with different lag orders {sorted(ks)}")
    n_obs = sum(f.T_eff for f in fits)
    p_total = sum(f.n_params for f in fits)
    with np.errstate(divide="ignore"):
        fit_term = math.fsum(f.T_eff * float(np.log(f.rss_u / f.T_eff)) for f in fits)
    return fit_term + p_total * math.log(n_obs)


def _units_of(panel) -> tuple[str, ...]:
    units = getattr(panel, "units", None)
    if units is None:
        return tuple(f"unit{i + 1}" for i in range(np.shape(panel.y)[0]))
    return tuple(units)


def fit_panel(panel, spec: ModelSpec, start: Optional[int] = None, jobs: int = 1) -> PanelFit:
    """Fit every unit of ``panel`` (anything with ``y``, ``x`` and ``units``).

    Units are independent; ``jobs > 1`` fits them on a thread pool and the
    results are kept in unit order.
    """
    y = np.asarray(panel.y, dtype=float)
    x = np.asarray(panel.x, dtype=float)
    units = _units_of(panel)

    def one(i):
        return fit_unit(y[i], x[i], spec, units[i], start)

    if jobs > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fits = tuple(pool.map(one, range(len(units))))
    else:
        fits = tuple(one(i) for i in range(len(units)))
    n_obs = sum(f.T_eff for f in fits)
    loglik = math.fsum(f.loglik() for f in fits) if all(f.rss_u > 0 for f in fits) else math.inf
    partial = PanelFit(spec, fits, math.nan, loglik, n_obs)
    return replace(partial, bic_total=bic(partial))


def select_lag(
    panel,
    k_max: int,
    template: Optional[ModelSpec] = None,
    jobs: int = 1,
) -> tuple[int, list[tuple[int, float]]]:
    """Choose the shared lag order minimising pooled BIC over ``K = 1..k_max``.

    Every candidate is fitted on the same response rows (those available at
    ``k_max``) so the criteria are comparable. Ties go to the smaller ``K``.
    """
    if int(k_max) != k_max or k_max < 1:
        raise ConfigError(f"k_max must be a positive integer, got {k_max!r}")
    template = template or ModelSpec(K=1)
    units = _units_of(panel)
    t_prime = np.shape(panel.y)[1]
    needed = 3 * k_max + int(template.include_intercept)
    if t_prime <= needed:
        raise SeriesTooShortError(
            f"unit {units[0]!r} has {t_prime} periods; k_max={k_max} needs more than {needed}"
        )
    curve = []
    for K in range(1, k_max + 1):
        fit = fit_panel(panel, replace(template, K=K), start=k_max, jobs=jobs)
        curve.append((K, fit.bic_total))
    best_k, best = curve[0]
    for K, value in curve[1:]:
        if value < best:
            best_k, best = K, value
    return best_k, curve
