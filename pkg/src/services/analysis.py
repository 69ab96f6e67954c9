"""
Analysis report over a results table.

Produces the descriptive and inferential tables of a KE study: group,
year and field summaries, field composition and diversity, group
comparisons, field homogeneity/ANOVA/Tukey, correlations and bin
summaries for team size, reference count and FWCI, nested standardized
OLS models with VIF, threshold shares and KE histograms (pooled, per group
and per year, each with the exact-0 and exact-1 spikes counted apart).

Sections that cannot be computed (too little data, no variance, no
group labels) are skipped and recorded in the ``notes`` table.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.errors import StatisticsError, UsageError
from src.services import statistics as st
from src.services.cohort import GROUP_ORDER, fwci_bins, quartile_bins
from src.services.results_table import frame_rows
from src.services.work_record import FieldCategory

logger = logging.getLogger(__name__)

FIELD_ORDER = [c.value for c in FieldCategory]
REFERENCE_FIELD = FieldCategory.PHYSICAL_SCIENCES.value
OLS_PREDICTORS = ["cited_by_count", "n_refs", "fwci", "author_count"]
CORRELATION_VARIABLES = ["author_count", "n_refs", "fwci"]
T_TESTS = {"welch": st.welch_t_test, "pooled": st.pooled_t_test}


@dataclass
class AnalysisOptions:
    alpha: float = st.DEFAULT_ALPHA
    histogram_bins: int = st.DEFAULT_HISTOGRAM_BINS
    threshold: Optional[float] = None  # defaults to the pooled KE mean
    t_test: str = "welch"
    exclude_low_confidence: bool = False

    def __post_init__(self):
        if self.t_test not in T_TESTS:
            raise UsageError(f"t-test must be one of {sorted(T_TESTS)}")
        if not 0.0 < self.alpha < 1.0:
            raise UsageError("alpha must be in (0, 1)")


@dataclass
class AnalysisReport:
    """Named tables in emission order."""

    sections: Dict[str, pd.DataFrame] = field(default_factory=dict)
    notes: List[Dict[str, str]] = field(default_factory=list)

    def note(self, section: str, message: str):
        logger.info(f"{section}: {message}")
        self.notes.append({"section": section, "note": message})

    def tables(self) -> Dict[str, pd.DataFrame]:
        tables = dict(self.sections)
        tables["notes"] = pd.DataFrame(self.notes, columns=["section", "note"])
        return tables


def _ordered(values: Sequence[str], order: Sequence[str]) -> List[str]:
    present = set(values)
    known = [v for v in order if v in present]
    return known + sorted(present - set(order))


def _summary_table(frame: pd.DataFrame, by: str, order: Optional[Sequence] = None) -> pd.DataFrame:
    keys = _ordered(frame[by].unique(), order) if order is not None else sorted(frame[by].unique())
    rows = [{by: key, **st.summarize(frame.loc[frame[by] == key, "ke"]).as_dict()} for key in keys]
    return pd.DataFrame(rows)


def _groups(frame: pd.DataFrame) -> Dict[str, np.ndarray]:
    if "group" not in frame.columns:
        return {}
    labelled = frame[frame["group"].notna() & (frame["group"] != "")]
    order = _ordered(labelled["group"].unique(), [g.value for g in GROUP_ORDER])
    return {g: labelled.loc[labelled["group"] == g, "ke"].to_numpy() for g in order}


def _known_fields(frame: pd.DataFrame) -> Dict[str, np.ndarray]:
    known = frame[frame["field"] != FieldCategory.UNKNOWN.value]
    order = _ordered(known["field"].unique(), FIELD_ORDER)
    return {f: known.loc[known["field"] == f, "ke"].to_numpy() for f in order}


class KEAnalyzer:
    """Runs every report section over one results table."""

    def __init__(self, frame: pd.DataFrame, options: Optional[AnalysisOptions] = None):
        self.options = options or AnalysisOptions()
        self.report = AnalysisReport()
        self.frame = self._prepare(frame)

    def _prepare(self, frame: pd.DataFrame) -> pd.DataFrame:
        frame = frame.copy()
        frame["field"] = frame["field"].fillna(FieldCategory.UNKNOWN.value)
        if self.options.exclude_low_confidence and "low_confidence" in frame.columns:
            low = frame["low_confidence"].astype(bool)
            flagged = int(low.sum())
            frame = frame[~low]
            self.report.note("input", f"{flagged} low-confidence row(s) excluded")
        return frame.reset_index(drop=True)

    def _section(self, name: str, build: Callable[[], Optional[pd.DataFrame]]):
        try:
            table = build()
        except StatisticsError as e:
            self.report.note(name, f"skipped: {e}")
            return
        if table is not None:
            self.report.sections[name] = table

    def run(self) -> AnalysisReport:
        """
        Compute all sections.

        Returns:
            AnalysisReport: Tables plus the notes table
        """
        if self.frame.empty:
            self.report.note("input", "no rows to analyze")
            return self.report

        self._section("group_summary", self.group_summary)
        self._section("year_summary", lambda: _summary_table(self.frame, "year"))
        self._section("field_summary", lambda: _summary_table(self.frame, "field", FIELD_ORDER))
        self._section("composition", self.composition)
        self._section("year_field_counts", self.year_field_counts)
        self._section("diversity", self.diversity)
        self._section("group_tests", self.group_tests)
        self._section("field_tests", self.field_tests)
        self._section("field_tukey", self.field_tukey)
        self._section("correlations", self.correlations)
        self._bin_sections()
        self._section("ols", self.ols_models)
        self._section("threshold_share", self.threshold_shares)
        self._section("histogram", self.histogram)
        self._section("histogram_by_group", self.histogram_by_group)
        self._section("histogram_by_year", self.histogram_by_year)
        return self.report

    # Descriptive

    def group_summary(self) -> Optional[pd.DataFrame]:
        groups = _groups(self.frame)
        if not groups:
            self.report.note("group_summary", "skipped: no group labels in results")
            return None
        return pd.DataFrame([{"group": g, **st.summarize(v).as_dict()} for g, v in groups.items()])

    def composition(self) -> Optional[pd.DataFrame]:
        groups = _groups(self.frame)
        if not groups:
            return None
        labelled = self.frame[self.frame["group"].isin(list(groups))]
        counts = labelled.groupby(["group", "field"]).size()
        total = len(labelled)
        rows = []
        for group in groups:
            group_total = int(counts.loc[group].sum())
            for field_name in _ordered(labelled["field"].unique(), FIELD_ORDER):
                count = int(counts.get((group, field_name), 0))
                rows.append({
                    "group": group,
                    "field": field_name,
                    "count": count,
                    "within_share": count / group_total,
                    "total_share": count / total,
                })
        return pd.DataFrame(rows)

    def year_field_counts(self) -> pd.DataFrame:
        table = pd.crosstab(self.frame["year"], self.frame["field"])
        table = table[_ordered(table.columns, FIELD_ORDER)]
        return table.reset_index().rename_axis(columns=None)

    def diversity(self) -> Optional[pd.DataFrame]:
        groups = _groups(self.frame)
        if not groups:
            return None
        known = self.frame[self.frame["field"] != FieldCategory.UNKNOWN.value]
        fields = _ordered(known["field"].unique(), FIELD_ORDER)
        rows = []
        for group in groups:
            in_group = known[known["group"] == group]
            counts = [int((in_group["field"] == f).sum()) for f in fields]
            report = st.diversity_report(counts)
            rows.append({"group": group, **asdict(report)})
        return pd.DataFrame(rows)

    # Comparisons

    def group_tests(self) -> Optional[pd.DataFrame]:
        groups = _groups(self.frame)
        if len(groups) < 2:
            return None
        test = T_TESTS[self.options.t_test]
        rows = []
        for a, b in combinations(groups, 2):
            result = test(groups[a], groups[b])
            rows.append({
                "group_a": a, "group_b": b,
                "mean_a": float(np.mean(groups[a])), "mean_b": float(np.mean(groups[b])),
                **result.as_dict(),
            })
        return pd.DataFrame(rows)

    def field_tests(self) -> pd.DataFrame:
        samples = list(_known_fields(self.frame).values())
        levene = st.levene_test(samples)
        anova = st.one_way_anova(samples)
        rows = [levene.as_dict(), anova.as_dict()]
        rows.append({"test": "eta_squared", "statistic": st.eta_squared(samples),
                     "df": np.nan, "df2": np.nan, "p_value": np.nan})
        return pd.DataFrame(rows)

    def field_tukey(self) -> pd.DataFrame:
        return st.tukey_hsd(_known_fields(self.frame), alpha=self.options.alpha).to_frame()

    def correlations(self) -> pd.DataFrame:
        rows = []
        for variable in CORRELATION_VARIABLES:
            if variable not in self.frame.columns:
                continue
            subset = self.frame[["ke", variable]].dropna()
            if variable == "author_count":
                subset = subset[subset[variable] > 0]
            try:
                result = st.pearson_r(subset[variable], subset["ke"])
            except StatisticsError as e:
                self.report.note("correlations", f"{variable} skipped: {e}")
                continue
            rows.append({"variable": variable, "n": len(subset), "r": result.statistic,
                         "p_value": result.p_value})
        return pd.DataFrame(rows, columns=["variable", "n", "r", "p_value"])

    # Explanatory bins

    def _bin_labels(self) -> Dict[str, pd.Series]:
        labels: Dict[str, pd.Series] = {}
        frame = self.frame

        if "author_count" in frame.columns:
            with_authors = frame[frame["author_count"].fillna(0) > 0]
            missing = len(frame) - len(with_authors)
            if missing:
                self.report.note("bins", f"{missing} row(s) without authors excluded from team bins")
            try:
                labels["team"] = pd.Series(
                    [b.value for b in quartile_bins(with_authors["author_count"])],
                    index=with_authors.index)
            except StatisticsError as e:
                self.report.note("bins", f"team bins skipped: {e}")

        try:
            labels["refcount"] = pd.Series(
                [b.value for b in quartile_bins(frame["n_refs"])], index=frame.index)
        except StatisticsError as e:
            self.report.note("bins", f"reference-count bins skipped: {e}")

        if "fwci" in frame.columns:
            values = [None if pd.isna(v) else float(v) for v in frame["fwci"]]
            bins = fwci_bins(values)
            missing = sum(1 for b in bins if b is None)
            if missing:
                self.report.note("bins", f"{missing} row(s) with missing FWCI excluded from FWCI bins")
            labels["fwci"] = pd.Series([b.value if b else None for b in bins],
                                       index=frame.index).dropna()
        return labels

    def _bin_sections(self):
        labels = self._bin_labels()
        summary_rows, anova_rows = [], []
        for variable, series in labels.items():
            grouped = {
                label: self.frame.loc[series.index[series == label], "ke"].to_numpy()
                for label in sorted(series.unique(), key=_bin_rank)
            }
            for label, values in grouped.items():
                summary_rows.append({"variable": variable, "bin": label,
                                     **st.summarize(values).as_dict()})
            try:
                anova = st.one_way_anova(list(grouped.values()))
            except StatisticsError as e:
                self.report.note("bin_anova", f"{variable} skipped: {e}")
                continue
            anova_rows.append({"variable": variable, **anova.as_dict()})

        if summary_rows:
            self.report.sections["bin_summary"] = pd.DataFrame(summary_rows)
        if anova_rows:
            self.report.sections["bin_anova"] = pd.DataFrame(anova_rows)

    # Regression

    def _controls(self, sample: pd.DataFrame) -> pd.DataFrame:
        years = sorted(sample["year"].astype(int).unique())
        fields = _ordered(sample["field"].unique(), FIELD_ORDER)
        if REFERENCE_FIELD in fields:
            fields = [REFERENCE_FIELD] + [f for f in fields if f != REFERENCE_FIELD]
        year = pd.Categorical(sample["year"].astype(int), categories=years)
        field_cat = pd.Categorical(sample["field"], categories=fields)
        return pd.concat([
            pd.get_dummies(year, prefix="year", drop_first=True, dtype=float),
            pd.get_dummies(field_cat, prefix="field", drop_first=True, dtype=float),
        ], axis=1)

    def ols_models(self) -> Optional[pd.DataFrame]:
        """Four nested standardized models; predictors enter cumulatively."""
        missing = [c for c in OLS_PREDICTORS if c not in self.frame.columns]
        if missing:
            self.report.note("ols", f"skipped: missing column(s) {', '.join(missing)}")
            return None

        sample = self.frame.dropna(subset=OLS_PREDICTORS)
        sample = sample[sample["author_count"] > 0].reset_index(drop=True)
        dropped = len(self.frame) - len(sample)
        if dropped:
            self.report.note("ols", f"{dropped} incomplete row(s) excluded (missing FWCI or authors)")

        controls = self._controls(sample)
        self.report.note(
            "ols",
            f"controls: year and field indicators; reference levels "
            f"year={int(sample['year'].min()) if len(sample) else 'n/a'}, field={REFERENCE_FIELD}",
        )

        rows, fit_rows = [], []
        for model in range(1, len(OLS_PREDICTORS) + 1):
            predictors = sample[OLS_PREDICTORS[:model]]
            try:
                result = st.ols_fit(predictors, sample["ke"], controls=controls)
            except StatisticsError as e:
                self.report.note("ols", f"model {model} skipped: {e}")
                continue
            for row in result.to_frame().to_dict("records"):
                rows.append({"model": model, **row})
            fit_rows.append({"model": model, "n": result.n, "r_squared": result.r_squared,
                             "adj_r_squared": result.adj_r_squared})

        if fit_rows:
            self.report.sections["ols_fit"] = pd.DataFrame(fit_rows)
        return pd.DataFrame(rows) if rows else None

    # Distribution

    def threshold_shares(self) -> pd.DataFrame:
        threshold = self.options.threshold
        if threshold is None:
            threshold = float(self.frame["ke"].mean())
        samples = {"All": self.frame["ke"].to_numpy(), **_groups(self.frame)}
        return pd.DataFrame([
            {"group": name, "threshold": threshold, "n": len(values),
             "share": st.threshold_share(values, threshold)}
            for name, values in samples.items()
        ])

    def histogram(self) -> pd.DataFrame:
        histogram = st.ke_histogram(self.frame["ke"], bins=self.options.histogram_bins)
        return pd.DataFrame(histogram.rows())

    def _keyed_histogram(self, key: str, samples: Dict[object, np.ndarray]) -> pd.DataFrame:
        rows = []
        for name, values in samples.items():
            histogram = st.ke_histogram(values, bins=self.options.histogram_bins)
            rows.extend({key: name, **row} for row in histogram.rows())
        return pd.DataFrame(rows)

    def histogram_by_group(self) -> Optional[pd.DataFrame]:
        groups = _groups(self.frame)
        return self._keyed_histogram("group", groups) if groups else None

    def histogram_by_year(self) -> pd.DataFrame:
        years = sorted(int(y) for y in self.frame["year"].unique())
        return self._keyed_histogram("year", {
            year: self.frame.loc[self.frame["year"] == year, "ke"].to_numpy() for year in years
        })


_BIN_ORDER = ["Q1", "Q2", "Q3", "Q4", "Zero", "Low", "MidLow", "MidHigh", "High"]


def _bin_rank(label: str) -> int:
    return _BIN_ORDER.index(label) if label in _BIN_ORDER else len(_BIN_ORDER)


def analyze(frame: pd.DataFrame, options: Optional[AnalysisOptions] = None) -> AnalysisReport:
    return KEAnalyzer(frame, options).run()


def write_report(report: AnalysisReport, path: Union[str, Path], output_format: str = "json") -> Path:
    """
    Write an analysis report.

    Args:
        report: Report to write
        path: JSON file, or directory receiving one CSV per table
        output_format: 'json' or 'csv'

    Returns:
        Path: File or directory written
    """
    path = Path(path)
    tables = report.tables()

    if output_format == "json":
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump({name: frame_rows(table) for name, table in tables.items()},
                      f, indent=2, ensure_ascii=False)
            f.write("\n")
    elif output_format == "csv":
        path.mkdir(parents=True, exist_ok=True)
        for name, table in tables.items():
            table.to_csv(path / f"{name}.csv", index=False, lineterminator="\n")
    else:
        raise UsageError(f"unsupported report format: {output_format}")

    logger.info(f"Wrote {len(tables)} report table(s) to {path}")
    return path
