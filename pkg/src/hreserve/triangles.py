"""Runoff triangles and the aggregate reserving methods defined on them.

Triangles aggregate one layer of the update vector by reporting year (rows)
and development year since reporting (columns).  The methods here cover the
classical chain ladder with Mack standard errors, the Poisson-deviance
multiplicative (ODP) fit, reparameterizations of it in the style of the
double chain ladder and the collective reserving model, and the
likelihood-ratio test bridging aggregate and individual models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import chi2, norm

from .data import Portfolio
from .errors import ConfigError, DataError, EstimabilityError, EvaluationError

_MARGIN_TOL = 1e-13
_MARGIN_MAX_ITER = 2000


@dataclass
class Triangle:
    """Upper-left runoff triangle of one layer.

    `values[i, j]` is the layer total for reporting year i+1 and development
    year j+1; unobserved cells hold NaN.  `exposure` is the reported-claim
    count per reporting year.
    """

    values: np.ndarray
    exposure: np.ndarray
    layer: str = "size"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ConfigError("triangle values must be a 2-d array")
        if self.exposure is None:
            self.exposure = np.zeros(self.values.shape[0])
        self.exposure = np.asarray(self.exposure, dtype=float)
        if len(self.exposure) != self.values.shape[0]:
            raise ConfigError("exposure length must match the number of rows")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_dev(self) -> int:
        return self.values.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def latest_dev(self) -> np.ndarray:
        """1-based latest observed development year per row (0 if none)."""
        obs = self.mask
        out = np.zeros(self.n_rows, dtype=np.int64)
        for i in range(self.n_rows):
            js = np.flatnonzero(obs[i])
            out[i] = js[-1] + 1 if len(js) else 0
        return out

    def cumulative(self) -> np.ndarray:
        out = np.where(self.mask, np.nan_to_num(self.values), 0.0).cumsum(axis=1)
        out[~self.mask] = np.nan
        return out

    def to_csv(self, path) -> None:
        frame = pd.DataFrame(self.values,
                             index=pd.Index(range(1, self.n_rows + 1), name="reporting_year"),
                             columns=[str(j) for j in range(1, self.n_dev + 1)])
        frame.insert(0, "exposure", self.exposure)
        frame.to_csv(path)

    @classmethod
    def from_csv(cls, path, layer: str = "size") -> "Triangle":
        frame = pd.read_csv(path, index_col="reporting_year")
        exposure = frame.pop("exposure").to_numpy() if "exposure" in frame.columns else None
        values = frame.to_numpy(dtype=float)
        if exposure is None:
            exposure = np.zeros(values.shape[0])
        return cls(values, exposure, layer)


def build_triangle(portfolio: Portfolio, layer: str = "size") -> Triangle:
    """Aggregate one record column by (reporting year, development year).

    Observed cells with no records are zero; cells beyond the observation
    boundary are NaN.
    """
    if layer not in portfolio.records.columns:
        raise ConfigError(f"records have no column {layer!r}")
    tau, d = portfolio.window.tau, portfolio.window.d
    values = np.full((tau, d), np.nan)
    i_grid = np.arange(1, tau + 1)[:, None]
    j_grid = np.arange(1, d + 1)[None, :]
    observed = j_grid <= np.minimum(d, tau - i_grid + 1)
    values[observed] = 0.0
    if len(portfolio.records):
        sums = portfolio.records.groupby(["reporting_year", "dev_year"])[layer].sum()
        for (i, j), v in sums.items():
            values[i - 1, j - 1] = v
    return Triangle(values, portfolio.reported_counts.astype(float), layer)


# -- chain ladder ------------------------------------------------------------


@dataclass
class ChainLadderResult:
    factors: np.ndarray
    completed: np.ndarray          # cumulative, lower region filled
    latest: np.ndarray
    ultimates: np.ndarray
    reserve_by_row: np.ndarray
    reserve: float
    latest_dev: np.ndarray

    def reserve_at_horizon(self, horizon: int | None = None) -> float:
        """Reserve restricted to the next `horizon` development years per row."""
        if horizon is None:
            return self.reserve
        d = self.completed.shape[1]
        total = 0.0
        for i in range(len(self.latest)):
            t = int(self.latest_dev[i])
            if t == 0 or t >= d:
                continue
            stop = min(t + horizon, d)
            total += self.completed[i, stop - 1] - self.latest[i]
        return float(total)


def chain_ladder(triangle: Triangle) -> ChainLadderResult:
    """Volume-weighted development factors and the multiplicative completion."""
    cum = triangle.cumulative()
    obs = triangle.mask
    n_rows, d = cum.shape
    factors = np.ones(max(d - 1, 0))
    for j in range(d - 1):
        rows = obs[:, j] & obs[:, j + 1]
        if not rows.any():
            continue
        denom = cum[rows, j].sum()
        numer = cum[rows, j + 1].sum()
        if denom <= 0:
            if numer == 0:
                continue  # no volume at all: no observed development, factor 1
            raise EstimabilityError(
                f"degenerate development factor: cumulative column {j + 1} sums to {denom}")
        factors[j] = numer / denom

    latest_dev = triangle.latest_dev()
    completed = cum.copy()
    for i in range(n_rows):
        t = int(latest_dev[i])
        if t == 0:
            completed[i, :] = 0.0
            continue
        for j in range(t, d):
            completed[i, j] = completed[i, j - 1] * factors[j - 1]
    latest = np.array([cum[i, latest_dev[i] - 1] if latest_dev[i] > 0 else 0.0
                       for i in range(n_rows)])
    ultimates = completed[:, -1]
    reserve_by_row = ultimates - latest
    return ChainLadderResult(factors, completed, latest, ultimates, reserve_by_row,
                             float(reserve_by_row.sum()), latest_dev)


# -- Mack standard errors ------------------------------------------------------


@dataclass
class MackResult:
    sigma2: np.ndarray
    se_by_row: np.ndarray
    se_total: float
    chain_ladder: ChainLadderResult

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        """Normal-approximation prediction interval for the total reserve."""
        z = norm.ppf(0.5 + level / 2.0)
        r = self.chain_ladder.reserve
        return (r - z * self.se_total, r + z * self.se_total)


def mack_se(triangle: Triangle) -> MackResult:
    """Distribution-free chain-ladder standard errors.

    Variance estimators follow Mack (1993): sigma_j^2 is the weighted sample
    variance of the individual development factors.  The final development
    period, where only one factor is observed, uses the customary
    extrapolation min(sigma_{J-1}^4 / sigma_{J-2}^2, sigma_{J-2}^2,
    sigma_{J-1}^2); with fewer than two preceding estimates it falls back to
    the last available sigma^2.
    """
    if triangle.n_rows < 3:
        raise EstimabilityError("Mack variance estimation needs at least 3 rows")
    cl = chain_ladder(triangle)
    cum = triangle.cumulative()
    obs = triangle.mask
    d = triangle.n_dev
    f = cl.factors

    sigma2 = np.zeros(max(d - 1, 0))
    n_pairs = np.zeros(max(d - 1, 0), dtype=np.int64)
    for j in range(d - 1):
        rows = obs[:, j] & obs[:, j + 1] & (cum[:, j] > 0)
        n_pairs[j] = int(rows.sum())
        if n_pairs[j] >= 2:
            ratios = cum[rows, j + 1] / cum[rows, j]
            sigma2[j] = float(np.sum(cum[rows, j] * (ratios - f[j]) ** 2) / (n_pairs[j] - 1))
    for j in range(d - 1):
        if n_pairs[j] >= 2:
            continue
        if n_pairs[j] == 0 and not (obs[:, j] & obs[:, j + 1]).any():
            # factor never used for completion from observed cells; variance moot
            sigma2[j] = 0.0
            continue
        if j >= 2 and sigma2[j - 2] > 0:
            sigma2[j] = min(sigma2[j - 1] ** 2 / sigma2[j - 2],
                            sigma2[j - 2], sigma2[j - 1])
        elif j >= 1:
            sigma2[j] = sigma2[j - 1]
        else:
            raise EstimabilityError(f"cannot estimate sigma^2 for development year {j + 1}")

    # S_j: the factor denominators over the rows used for f_j
    S = np.zeros(max(d - 1, 0))
    for j in range(d - 1):
        rows = obs[:, j] & obs[:, j + 1]
        S[j] = cum[rows, j].sum()

    latest_dev = cl.latest_dev
    completed = cl.completed
    mse = np.zeros(triangle.n_rows)
    for i in range(triangle.n_rows):
        t = int(latest_dev[i])
        if t == 0 or t >= d or completed[i, d - 1] <= 0:
            continue
        acc = 0.0
        for j in range(t - 1, d - 1):
            cij = completed[i, j]
            if cij <= 0 or S[j] <= 0:
                continue
            acc += sigma2[j] / f[j] ** 2 * (1.0 / cij + 1.0 / S[j])
        mse[i] = completed[i, d - 1] ** 2 * acc

    total = float(mse.sum())
    for i in range(triangle.n_rows):
        ti = int(latest_dev[i])
        if ti == 0 or ti >= d or completed[i, d - 1] <= 0:
            continue
        for k in range(i + 1, triangle.n_rows):
            tk = int(latest_dev[k])
            if tk == 0 or tk >= d or completed[k, d - 1] <= 0:
                continue
            start = max(ti, tk)
            acc = 0.0
            for j in range(start - 1, d - 1):
                if S[j] <= 0:
                    continue
                acc += sigma2[j] / f[j] ** 2 / S[j]
            total += 2.0 * completed[i, d - 1] * completed[k, d - 1] * acc

    return MackResult(sigma2=sigma2, se_by_row=np.sqrt(mse), se_total=float(np.sqrt(total)),
                      chain_ladder=cl)


# -- multiplicative (ODP) fit ---------------------------------------------------


@dataclass
class MultiplicativeFit:
    """Row/column effects of the Poisson-deviance multiplicative model.

    Fitted cell (i, j) value is row_effects[i] * col_effects[j]; column
    effects are normalized to sum to one.
    """

    row_effects: np.ndarray
    col_effects: np.ndarray
    triangle: Triangle

    def fitted(self) -> np.ndarray:
        return np.outer(self.row_effects, self.col_effects)

    def reserve(self, horizon: int | None = None) -> float:
        fitted = self.fitted()
        obs = self.triangle.mask
        latest = self.triangle.latest_dev()
        total = 0.0
        for i in range(self.triangle.n_rows):
            stop = self.triangle.n_dev
            if horizon is not None:
                stop = min(int(latest[i]) + horizon, stop)
            for j in range(int(latest[i]), stop):
                if not obs[i, j]:
                    total += fitted[i, j]
        return float(total)

    def ultimates(self) -> np.ndarray:
        fitted = self.fitted()
        obs = self.triangle.mask
        vals = np.where(obs, np.nan_to_num(self.triangle.values), fitted)
        return vals.sum(axis=1)


def _fit_margins(values: np.ndarray, obs: np.ndarray, exposure: np.ndarray | None = None
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Alternate the Poisson-MLE margin equations for E[X_ij] = a_i * E_ij * b_j."""
    n_rows, d = values.shape
    E = np.ones_like(values) if exposure is None else exposure
    row_tot = np.array([values[i, obs[i]].sum() for i in range(n_rows)])
    col_tot = np.array([values[obs[:, j], j].sum() for j in range(d)])
    a = np.where(row_tot > 0, 1.0, 0.0)
    b = np.full(d, max(col_tot.sum(), 1.0) / d)
    for _ in range(_MARGIN_MAX_ITER):
        a_new = np.zeros(n_rows)
        for i in range(n_rows):
            denom = (E[i, obs[i]] * b[obs[i]]).sum()
            a_new[i] = row_tot[i] / denom if denom > 0 else 0.0
        b_new = np.zeros(d)
        for j in range(d):
            denom = (E[obs[:, j], j] * a_new[obs[:, j]]).sum()
            b_new[j] = col_tot[j] / denom if denom > 0 else 0.0
        delta = max(np.max(np.abs(a_new - a) / np.maximum(np.abs(a_new), 1e-300)),
                    np.max(np.abs(b_new - b) / np.maximum(np.abs(b_new), 1e-300)))
        a, b = a_new, b_new
        if delta < _MARGIN_TOL:
            break
    return a, b


def fit_multiplicative(triangle: Triangle) -> MultiplicativeFit:
    """Poisson-deviance (ODP) maximum likelihood fit of row x column effects."""
    values = np.nan_to_num(triangle.values)
    obs = triangle.mask
    if (values[obs] < 0).any():
        raise DataError("multiplicative fit needs nonnegative cells")
    row_pos = [(values[i, obs[i]] > 0).any() for i in range(triangle.n_rows)]
    col_pos = [(values[obs[:, j], j] > 0).any() for j in range(triangle.n_dev)]
    if not all(row_pos):
        raise EstimabilityError(f"row {row_pos.index(False) + 1} has no positive observed cell")
    if not all(col_pos):
        raise EstimabilityError(f"development year {col_pos.index(False) + 1} has no positive "
                                "observed cell")
    a, b = _fit_margins(values, obs)
    scale = b.sum()
    return MultiplicativeFit(row_effects=a * scale, col_effects=b / scale, triangle=triangle)


# -- likelihood ratio bridge test ---------------------------------------------


@dataclass
class LrtResult:
    statistic: float
    dof: int
    p_value: float


def lrt_bridge(full_model_loglik: float, reduced_model_loglik: float,
               dof_difference: int) -> LrtResult:
    """Likelihood-ratio test of a reduced (multiplicative) against a full model.

    The models must be nested; the statistic 2 * (l_full - l_reduced) is
    referred to a chi-square with `dof_difference` degrees of freedom.
    """
    if dof_difference < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got {dof_difference}")
    stat = 2.0 * (full_model_loglik - reduced_model_loglik)
    tol = 1e-8 * max(1.0, abs(full_model_loglik))
    if stat < -tol:
        raise EvaluationError(
            f"nesting violation: full log-likelihood {full_model_loglik:.6f} is below "
            f"reduced {reduced_model_loglik:.6f}")
    stat = max(stat, 0.0)
    return LrtResult(statistic=float(stat), dof=int(dof_difference),
                     p_value=float(chi2.sf(stat, dof_difference)))


def lrt_joint(components) -> LrtResult:
    """Joint test over independent per-layer LRTs by summing statistics and dofs."""
    stats = [lrt_bridge(*c) for c in components]
    stat = sum(r.statistic for r in stats)
    dof = sum(r.dof for r in stats)
    return LrtResult(statistic=float(stat), dof=dof, p_value=float(chi2.sf(stat, dof)))


# -- DCL-style parameterization -------------------------------------------------


@dataclass
class DclParams:
    payment_probabilities: np.ndarray   # per development year
    mean_sizes: np.ndarray              # per development year
    inflation: np.ndarray               # per reporting year, normalized to year 1

    def __post_init__(self):
        probs = self.payment_probabilities
        if np.nanmin(probs) < -1e-12 or np.nanmax(probs) > 1 + 1e-12:
            raise DataError("payment probabilities must lie in [0, 1]")


@dataclass
class DclResult:
    params: DclParams
    reserve: float
    fit: MultiplicativeFit


def dcl_rbns(portfolio: Portfolio | None = None, *, size_triangle: Triangle | None = None,
             count_triangle: Triangle | None = None, horizon: int | None = None) -> DclResult:
    """Payment-probability / mean-size / inflation decomposition of the size triangle.

    The size triangle gets the multiplicative fit; the payment-count triangle
    and the reported-claim exposures identify the payment probability per
    development year, and the remaining scale splits into mean size and a
    reporting-year inflation index (normalized to 1 in the first year with
    exposure).  The reserve coincides with the multiplicative-fit reserve.
    """
    if portfolio is not None:
        size_triangle = build_triangle(portfolio, "size")
        count_triangle = build_triangle(portfolio, "payment")
    if size_triangle is None or count_triangle is None:
        raise ConfigError("dcl_rbns needs a portfolio or both triangles")
    exposure = size_triangle.exposure

    # relaxed margin fit: all-zero development years are legal here and get
    # a zero column effect (no future payments), unlike fit_multiplicative
    values = np.nan_to_num(size_triangle.values)
    obs = size_triangle.mask
    if (values[obs] < 0).any():
        raise DataError("size triangle needs nonnegative cells")
    a, b = _fit_margins(values, obs)
    scale = b.sum()
    if scale <= 0:
        raise EstimabilityError("size triangle has no positive observed cells")
    fit = MultiplicativeFit(row_effects=a * scale, col_effects=b / scale,
                            triangle=size_triangle)

    d = size_triangle.n_dev
    obs = count_triangle.mask
    counts = np.nan_to_num(count_triangle.values)
    pi = np.full(d, np.nan)
    for j in range(d):
        rows = obs[:, j]
        n_tot = exposure[rows].sum()
        if n_tot > 0:
            pi[j] = counts[rows, j].sum() / n_tot

    rows_with_exposure = np.flatnonzero(exposure > 0)
    if len(rows_with_exposure) == 0:
        raise EstimabilityError("no reporting year has positive exposure")
    base = rows_with_exposure[0]
    c = fit.row_effects[base] / exposure[base]
    if c <= 0:
        raise EstimabilityError("cannot normalize inflation: first exposed row has no volume")
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(exposure > 0, fit.row_effects / np.where(exposure > 0, exposure, 1.0) / c,
                         np.nan)
        mu = np.where(pi > 0, c * fit.col_effects / np.where(pi > 0, pi, 1.0), np.nan)

    params = DclParams(payment_probabilities=pi, mean_sizes=mu, inflation=gamma)
    return DclResult(params=params, reserve=fit.reserve(horizon), fit=fit)


# -- CRM-style two-layer model ---------------------------------------------------


@dataclass
class CrmParams:
    payment_intensities: np.ndarray     # lambda_j, payments per reported claim
    row_effects: np.ndarray             # alpha_i, size per payment
    col_effects: np.ndarray             # beta_j, normalized to sum 1

    def __post_init__(self):
        if np.nanmin(self.payment_intensities) < -1e-12:
            raise DataError("payment intensities must be nonnegative")


@dataclass
class CrmResult:
    params: CrmParams
    reserve: float


def crm_rbns(portfolio: Portfolio | None = None, *, count_triangle: Triangle | None = None,
             size_triangle: Triangle | None = None, horizon: int | None = None) -> CrmResult:
    """Two-layer aggregate model: payment counts then size per payment.

    Counts follow a Poisson rate per development year with the reported-claim
    counts as exposure; sizes follow a multiplicative row/column model with
    the count triangle as exposure (observed counts in the upper triangle,
    predicted counts in the projection).
    """
    if portfolio is not None:
        count_triangle = build_triangle(portfolio, "payment")
        size_triangle = build_triangle(portfolio, "size")
    if count_triangle is None or size_triangle is None:
        raise ConfigError("crm_rbns needs a portfolio or both triangles")
    exposure = count_triangle.exposure
    obs = count_triangle.mask
    counts = np.nan_to_num(count_triangle.values)
    sizes = np.nan_to_num(size_triangle.values)
    n_rows, d = counts.shape

    lam = np.zeros(d)
    for j in range(d):
        rows = obs[:, j]
        n_tot = exposure[rows].sum()
        if n_tot <= 0:
            raise EstimabilityError(f"zero total exposure for development year {j + 1}")
        lam[j] = counts[rows, j].sum() / n_tot

    bad = obs & (sizes > 0) & (counts <= 0)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise DataError(f"cell ({i + 1}, {j + 1}) has positive size but zero payment count")
    alpha, beta = _fit_margins(sizes, obs, exposure=counts)
    scale = beta.sum()
    if scale <= 0:
        raise EstimabilityError("size layer has no positive observed cells")
    alpha, beta = alpha * scale, beta / scale

    latest = count_triangle.latest_dev()
    reserve = 0.0
    for i in range(n_rows):
        stop = d if horizon is None else min(int(latest[i]) + horizon, d)
        for j in range(int(latest[i]), stop):
            if not obs[i, j]:
                reserve += exposure[i] * lam[j] * alpha[i] * beta[j]

    params = CrmParams(payment_intensities=lam, row_effects=alpha, col_effects=beta)
    return CrmResult(params=params, reserve=float(reserve))
