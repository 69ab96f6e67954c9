"""
Statistical procedures applied to KE values.

Diversity indices, two-sample and multi-group tests, correlation,
standardized OLS with VIF diagnostics, and the descriptive summaries
and histograms behind the report tables. All functions are pure.
"""

import math
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats
from statsmodels.stats.outliers_influence import variance_inflation_factor

from src.errors import (
    DataError,
    EmptyDistributionError,
    InsufficientDataError,
    InsufficientVarianceError,
    SingularDesignError,
    UsageError,
)

DEFAULT_ALPHA = 0.05
DEFAULT_HISTOGRAM_BINS = 20

Degrees = Union[float, Tuple[float, float]]


@dataclass(frozen=True)
class DiversityReport:
    sample_size: int
    category_count: int
    shannon: float
    simpson: float
    gini_simpson: float


@dataclass(frozen=True)
class TestResult:
    """A test statistic, its degrees of freedom and two-sided p-value."""

    statistic: float
    df: Degrees
    p_value: float
    label: str = ""

    def as_dict(self) -> Dict[str, float]:
        df1, df2 = self.df if isinstance(self.df, tuple) else (self.df, float("nan"))
        return {
            "test": self.label,
            "statistic": self.statistic,
            "df": df1,
            "df2": df2,
            "p_value": self.p_value,
        }


@dataclass(frozen=True)
class TukeyRow:
    group_a: str
    group_b: str
    mean_diff: float  # mean(group_b) - mean(group_a)
    p_adj: float
    ci_lower: float
    ci_upper: float
    reject: bool


@dataclass(frozen=True)
class TukeyTable:
    rows: Tuple[TukeyRow, ...]
    alpha: float
    df: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows],
                            columns=[f.name for f in fields(TukeyRow)])


@dataclass(frozen=True)
class Coefficient:
    beta: float
    std_err: float
    p_value: float


@dataclass(frozen=True)
class RegressionResult:
    """Fitted OLS model with multicollinearity diagnostics."""

    coefficients: Dict[str, Coefficient]
    r_squared: float
    adj_r_squared: float
    vif: Dict[str, float]
    n: int
    standardized: bool = True
    residuals: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"term": name, "beta": c.beta, "std_err": c.std_err, "p_value": c.p_value,
             "vif": self.vif.get(name, float("nan"))}
            for name, c in self.coefficients.items()
        ]
        return pd.DataFrame(rows, columns=["term", "beta", "std_err", "p_value", "vif"])


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    min: float
    max: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class KEHistogram:
    """Exact-0 and exact-1 spikes plus counts over the open interval (0, 1)."""

    zero_count: int
    one_count: int
    edges: Tuple[float, ...]
    counts: Tuple[int, ...]

    @property
    def total(self) -> int:
        return self.zero_count + self.one_count + sum(self.counts)

    def rows(self) -> List[Dict[str, object]]:
        rows = [{"kind": "zero", "lower": 0.0, "upper": 0.0, "count": self.zero_count}]
        for lower, upper, count in zip(self.edges[:-1], self.edges[1:], self.counts):
            rows.append({"kind": "interior", "lower": lower, "upper": upper, "count": count})
        rows.append({"kind": "one", "lower": 1.0, "upper": 1.0, "count": self.one_count})
        return rows


def _as_array(values: Sequence[float], name: str = "values") -> np.ndarray:
    data = np.asarray(values, dtype=float)
    if data.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{name} contain missing or non-finite entries")
    return data


def _shares(counts: Sequence[float]) -> np.ndarray:
    data = np.asarray(counts, dtype=float)
    if np.any(data < 0):
        raise DataError("category counts must be nonnegative")
    total = data.sum()
    if total <= 0:
        raise EmptyDistributionError("diversity needs at least one observation")
    return data / total


# Diversity

def shannon_index(counts: Sequence[float]) -> float:
    """Shannon entropy (natural log) of the category shares."""
    return float(stats.entropy(_shares(counts)))


def simpson_indices(counts: Sequence[float]) -> Tuple[float, float]:
    """
    Simpson concentration and Gini-Simpson diversity.

    Returns:
        Tuple[float, float]: (sum of squared shares, 1 - sum of squared shares)
    """
    simpson = float(np.sum(_shares(counts) ** 2))
    return simpson, 1.0 - simpson


def diversity_report(counts: Sequence[float]) -> DiversityReport:
    simpson, gini_simpson = simpson_indices(counts)
    return DiversityReport(
        sample_size=int(round(float(np.sum(counts)))),
        category_count=len(counts),
        shannon=shannon_index(counts),
        simpson=simpson,
        gini_simpson=gini_simpson,
    )


# Two-sample tests

def _two_samples(a: Sequence[float], b: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    x, y = _as_array(a, "a"), _as_array(b, "b")
    if len(x) < 2 or len(y) < 2:
        raise InsufficientDataError("each sample needs at least 2 observations")
    return x, y


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """
    Welch's unequal-variance t-test.

    Args:
        a: First sample (at least 2 values, nonzero variance)
        b: Second sample (at least 2 values, nonzero variance)

    Returns:
        TestResult: t, Welch-Satterthwaite df and two-sided p
    """
    x, y = _two_samples(a, b)
    va, vb = np.var(x, ddof=1) / len(x), np.var(y, ddof=1) / len(y)
    if va == 0 or vb == 0:
        raise InsufficientVarianceError("Welch t-test needs nonzero variance in both samples")

    df = (va + vb) ** 2 / (va ** 2 / (len(x) - 1) + vb ** 2 / (len(y) - 1))
    result = stats.ttest_ind(x, y, equal_var=False)
    return TestResult(float(result.statistic), float(df), float(result.pvalue), "welch_t")


def pooled_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Student's t-test with pooled variance."""
    x, y = _two_samples(a, b)
    if np.var(x, ddof=1) == 0 and np.var(y, ddof=1) == 0:
        raise InsufficientVarianceError("pooled t-test needs nonzero pooled variance")
    result = stats.ttest_ind(x, y, equal_var=True)
    return TestResult(float(result.statistic), float(len(x) + len(y) - 2),
                      float(result.pvalue), "pooled_t")


# Multi-group tests

def _groups(groups: Sequence[Sequence[float]], min_size: int = 1) -> List[np.ndarray]:
    arrays = [_as_array(g, "group") for g in groups]
    if len(arrays) < 2:
        raise InsufficientDataError("at least 2 groups are required")
    if any(len(g) < min_size for g in arrays):
        raise InsufficientDataError(f"every group needs at least {min_size} observation(s)")
    if sum(len(g) for g in arrays) <= len(arrays):
        raise InsufficientDataError("total sample size must exceed the number of groups")
    return arrays


def _within_sum_of_squares(arrays: Sequence[np.ndarray]) -> float:
    return float(sum(np.sum((g - g.mean()) ** 2) for g in arrays))


def levene_test(groups: Sequence[Sequence[float]]) -> TestResult:
    """
    Brown-Forsythe test for equal variances (median-centered Levene).

    Args:
        groups: At least two groups of at least two values

    Returns:
        TestResult: W statistic with df (k-1, N-k)
    """
    arrays = _groups(groups, min_size=2)
    k, n = len(arrays), sum(len(g) for g in arrays)
    deviations = [np.abs(g - np.median(g)) for g in arrays]

    if _within_sum_of_squares(deviations) == 0:
        # Each group's deviations are constant; W is 0 or unbounded
        levels = np.array([d[0] for d in deviations])
        statistic, p_value = (0.0, 1.0) if np.ptp(levels) == 0 else (math.inf, 0.0)
    else:
        result = stats.levene(*arrays, center="median")
        statistic, p_value = float(result.statistic), float(result.pvalue)

    return TestResult(statistic, (float(k - 1), float(n - k)), p_value, "levene")


def one_way_anova(groups: Sequence[Sequence[float]]) -> TestResult:
    """
    One-way ANOVA F-test.

    Args:
        groups: At least two groups; total size above the number of groups

    Returns:
        TestResult: F with df (k-1, N-k)
    """
    arrays = _groups(groups)
    if _within_sum_of_squares(arrays) == 0:
        raise InsufficientVarianceError("ANOVA is undefined with zero within-group variance")

    k, n = len(arrays), sum(len(g) for g in arrays)
    result = stats.f_oneway(*arrays)
    return TestResult(float(result.statistic), (float(k - 1), float(n - k)),
                      float(result.pvalue), "anova_f")


def eta_squared(groups: Sequence[Sequence[float]]) -> float:
    """Share of total variance explained by group membership."""
    arrays = _groups(groups)
    pooled = np.concatenate(arrays)
    total = float(np.sum((pooled - pooled.mean()) ** 2))
    if total == 0:
        raise InsufficientVarianceError("eta squared is undefined for constant data")
    return 1.0 - _within_sum_of_squares(arrays) / total


def tukey_hsd(groups: Mapping[str, Sequence[float]], alpha: float = DEFAULT_ALPHA) -> TukeyTable:
    """
    Tukey's honestly significant difference test over all group pairs.

    Pairs follow the mapping's order; each row reports mean(b) - mean(a),
    the studentized-range adjusted p-value and the 1-alpha interval.

    Args:
        groups: Label -> values (at least two groups of at least two values)
        alpha: Familywise error rate in (0, 1)

    Returns:
        TukeyTable: One row per unordered pair
    """
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"alpha must be in (0, 1), got {alpha}")
    labels = list(groups)
    arrays = _groups([groups[label] for label in labels], min_size=2)
    if _within_sum_of_squares(arrays) == 0:
        raise InsufficientVarianceError("Tukey HSD is undefined with zero within-group variance")

    result = stats.tukey_hsd(*arrays)
    interval = result.confidence_interval(confidence_level=1.0 - alpha)

    rows = []
    for i, j in combinations(range(len(labels)), 2):
        # statistic[j, i] is mean(j) - mean(i)
        p_adj = float(min(1.0, result.pvalue[i, j]))
        rows.append(TukeyRow(
            group_a=labels[i],
            group_b=labels[j],
            mean_diff=float(result.statistic[j, i]),
            p_adj=p_adj,
            ci_lower=float(interval.low[j, i]),
            ci_upper=float(interval.high[j, i]),
            reject=p_adj < alpha,
        ))

    df = float(sum(len(g) for g in arrays) - len(arrays))
    return TukeyTable(rows=tuple(rows), alpha=alpha, df=df)


# Correlation

def pearson_r(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """
    Pearson correlation with its two-sided t-based p-value.

    Returns:
        TestResult: r as the statistic, df = n - 2
    """
    a, b = _as_array(x, "x"), _as_array(y, "y")
    if len(a) != len(b):
        raise DataError(f"x and y differ in length ({len(a)} vs {len(b)})")
    if len(a) < 3:
        raise InsufficientDataError("correlation needs at least 3 pairs")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise InsufficientVarianceError("correlation is undefined for constant input")

    r, p_value = stats.pearsonr(a, b)
    r = float(np.clip(r, -1.0, 1.0))
    return TestResult(r, float(len(a) - 2), float(p_value), "pearson_r")


# Regression

def _check_rank(design: pd.DataFrame):
    if np.linalg.matrix_rank(design.to_numpy(dtype=float)) < design.shape[1]:
        raise SingularDesignError(
            "design matrix is rank deficient (perfectly collinear or constant predictors)"
        )


def standardize(frame: pd.DataFrame) -> pd.DataFrame:
    """Z-score every column (sample standard deviation)."""
    spread = frame.std(ddof=1)
    constant = [str(c) for c in spread.index if not spread[c] > 0]
    if constant:
        raise SingularDesignError(f"cannot standardize constant predictor(s): {', '.join(constant)}")
    return (frame - frame.mean()) / spread


def ols_fit(predictors: pd.DataFrame, outcome: Sequence[float], standardize_predictors: bool = True,
            controls: Optional[pd.DataFrame] = None) -> RegressionResult:
    """
    Ordinary least squares with intercept, optionally on z-scored predictors.

    Args:
        predictors: Predictor columns (z-scored when standardize_predictors)
        outcome: Dependent variable, one value per row
        standardize_predictors: Z-score predictors before fitting
        controls: Extra columns (e.g. indicator controls) entered unscaled

    Returns:
        RegressionResult: Coefficients, R², adjusted R² and predictor VIFs
    """
    x = predictors.astype(float).reset_index(drop=True)
    if standardize_predictors:
        x = standardize(x)
    if controls is not None and controls.shape[1]:
        x = pd.concat([x, controls.astype(float).reset_index(drop=True)], axis=1)

    y = _as_array(outcome, "outcome")
    if len(y) != len(x):
        raise DataError(f"outcome has {len(y)} rows, design has {len(x)}")
    if not np.all(np.isfinite(x.to_numpy(dtype=float))):
        raise DataError("design contains missing or non-finite entries")

    design = sm.add_constant(x, has_constant="add")
    if len(y) <= design.shape[1]:
        raise InsufficientDataError(
            f"OLS needs more observations ({len(y)}) than parameters ({design.shape[1]})"
        )
    _check_rank(design)

    with np.errstate(divide="ignore", invalid="ignore"):
        fit = sm.OLS(y, design).fit()
        coefficients = {
            str(name): Coefficient(float(fit.params[name]), float(fit.bse[name]),
                                   float(fit.pvalues[name]))
            for name in design.columns
        }
        r_squared, adj_r_squared = float(fit.rsquared), float(fit.rsquared_adj)

    exog = design.to_numpy(dtype=float)
    vifs = {
        str(name): float(variance_inflation_factor(exog, design.columns.get_loc(name)))
        for name in predictors.columns
    } if design.shape[1] > 2 else {str(predictors.columns[0]): 1.0}

    return RegressionResult(
        coefficients=coefficients,
        r_squared=r_squared,
        adj_r_squared=adj_r_squared,
        vif=vifs,
        n=len(y),
        standardized=standardize_predictors,
        residuals=np.asarray(fit.resid),
    )


def vif(design: pd.DataFrame) -> Dict[str, float]:
    """
    Variance inflation factor of every predictor column.

    Args:
        design: Predictor columns (no intercept; one is added)

    Returns:
        Dict[str, float]: 1 / (1 - R²) of each column regressed on the others
    """
    if design.shape[1] == 0:
        raise InsufficientDataError("VIF needs at least one predictor")
    if design.shape[1] == 1:
        return {str(design.columns[0]): 1.0}

    exog = sm.add_constant(design.astype(float), has_constant="add")
    _check_rank(exog)
    values = exog.to_numpy(dtype=float)
    return {
        str(name): float(variance_inflation_factor(values, i))
        for i, name in enumerate(exog.columns) if name != "const"
    }


# Descriptive

def threshold_share(values: Sequence[float], threshold: float) -> float:
    """Fraction of values at or above the threshold."""
    data = _as_array(values)
    if len(data) == 0:
        raise InsufficientDataError("threshold share needs at least one value")
    return float(np.mean(data >= threshold))


def summarize(values: Sequence[float]) -> Summary:
    data = _as_array(values)
    if len(data) == 0:
        raise InsufficientDataError("cannot summarize an empty sample")
    q1, median, q3 = np.quantile(data, [0.25, 0.5, 0.75])
    return Summary(
        n=len(data),
        mean=float(data.mean()),
        std=float(data.std(ddof=1)) if len(data) > 1 else float("nan"),
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        min=float(data.min()),
        max=float(data.max()),
    )


def ke_histogram(values: Sequence[float], bins: int = DEFAULT_HISTOGRAM_BINS) -> KEHistogram:
    """
    Histogram of KE values with the endpoints counted separately.

    Args:
        values: KE values in [0, 1]
        bins: Number of equal-width bins over the open interval (0, 1)

    Returns:
        KEHistogram: Spike counts at 0 and 1 plus interior bin counts
    """
    if bins < 1:
        raise UsageError("histogram needs at least one bin")
    data = _as_array(values)
    if np.any((data < 0) | (data > 1)):
        raise DataError("KE values must lie in [0, 1]")

    interior = data[(data > 0) & (data < 1)]
    counts, edges = np.histogram(interior, bins=bins, range=(0.0, 1.0))
    return KEHistogram(
        zero_count=int(np.sum(data == 0)),
        one_count=int(np.sum(data == 1)),
        edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
    )


# Distribution helpers

def t_quantile(probability: float, df: float) -> float:
    return float(stats.t.ppf(probability, df))


def f_survival(x: float, df1: float, df2: float) -> float:
    return float(stats.f.sf(x, df1, df2))


def studentized_range_quantile(probability: float, k: int, df: float) -> float:
    """Lower-tail quantile of the studentized range; df may be infinite."""
    return float(stats.studentized_range.ppf(probability, k, df))


def studentized_range_survival(q: float, k: int, df: float) -> float:
    return float(stats.studentized_range.sf(q, k, df))
