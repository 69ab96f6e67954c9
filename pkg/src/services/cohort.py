"""
Cohort construction for group comparisons.

Builds the three experimental groups from OpenAlex works:
- Honor: research articles published in Science or Nature
- Influence: works at or above a citation percentile of their year
- ZeroCited: works nobody has cited yet

Also derives the quartile bins (team size, reference count) and the
five-level FWCI bins used by the explanatory analyses.
"""

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import DataError, DegenerateMetricError, InsufficientDataError, UsageError
from src.services.eccentricity import KEResult, compute_ke
from src.services.openalex_client import OpenAlexClient
from src.services.work_record import FieldCategory, WorkRecord, parse_ref

logger = logging.getLogger(__name__)

DEFAULT_HONOR_SOURCES = {"Science": "S3880285", "Nature": "S137773608"}
INFLUENCE_MODES = ("percentile", "explicit")
QUARTILE_PROBABILITIES = (0.25, 0.5, 0.75)

# Exclusion reasons
TOO_FEW_REFERENCES = "too_few_references"
GROUP_PREDICATE = "group_predicate"
DUPLICATE = "duplicate"
KE_FAILED = "ke_failed"
MALFORMED_PAYLOAD = "malformed_payload"


class Group(str, Enum):
    """Experimental group of a cohort record."""

    HONOR = "Honor"
    INFLUENCE = "Influence"
    ZERO_CITED = "ZeroCited"


GROUP_ORDER = (Group.HONOR, Group.INFLUENCE, Group.ZERO_CITED)


class Quartile(str, Enum):
    Q1 = "Q1"
    Q2 = "Q2"
    Q3 = "Q3"
    Q4 = "Q4"


class FwciBin(str, Enum):
    ZERO = "Zero"
    LOW = "Low"
    MID_LOW = "MidLow"
    MID_HIGH = "MidHigh"
    HIGH = "High"


_QUARTILES = tuple(Quartile)
_POSITIVE_FWCI_BINS = (FwciBin.LOW, FwciBin.MID_LOW, FwciBin.MID_HIGH, FwciBin.HIGH)


@dataclass(frozen=True)
class CohortRecord:
    """A work joined with its group label and derived bins."""

    work: WorkRecord
    group: Group
    ke: Optional[KEResult] = None
    team_bin: Optional[Quartile] = None
    refcount_bin: Optional[Quartile] = None
    fwci_bin: Optional[FwciBin] = None
    fetched_at: Optional[str] = None

    def __post_init__(self):
        if self.group == Group.ZERO_CITED and self.work.cited_by_count != 0:
            raise ValueError(
                f"{self.work.id} has {self.work.cited_by_count} citations; "
                "ZeroCited records must have none"
            )

    @property
    def field_category(self) -> FieldCategory:
        return classify_field(self.work)


@dataclass
class CohortSpec:
    """Cohort definition, usually loaded from a JSON file."""

    years: List[int]
    groups: List[Group] = field(default_factory=lambda: list(GROUP_ORDER))
    per_cell_limit: int = 25
    honor_sources: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_HONOR_SOURCES))
    influence_mode: str = "percentile"
    influence_percentile: float = 99.0
    universe_size: int = 1000
    seed: int = 42
    influence_ids: List[str] = field(default_factory=list)
    work_type: Optional[str] = "article"

    def __post_init__(self):
        if not self.years:
            raise UsageError("cohort needs at least one publication year")
        if not self.groups:
            raise UsageError("cohort needs at least one group")
        if self.per_cell_limit < 1:
            raise UsageError(f"per-cell limit must be >= 1, got {self.per_cell_limit}")
        if self.influence_mode not in INFLUENCE_MODES:
            raise UsageError(f"influence mode must be one of {INFLUENCE_MODES}")
        if not 0.0 < self.influence_percentile < 100.0:
            raise UsageError("influence percentile must be in (0, 100)")
        if self.universe_size < 1:
            raise UsageError("universe size must be >= 1")
        if Group.HONOR in self.groups and not self.honor_sources:
            raise UsageError("Honor group needs at least one source journal")
        if (Group.INFLUENCE in self.groups and self.influence_mode == "explicit"
                and not self.influence_ids):
            raise UsageError("explicit influence mode needs influence_ids")

        self.years = sorted(set(int(y) for y in self.years))
        self.groups = [g for g in GROUP_ORDER if g in set(self.groups)]
        # OpenAlex IDs or bare DOIs; DOIs are resolved by resolve_influence_ids
        self.influence_ids = [parse_ref(ref)[1] for ref in self.influence_ids]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CohortSpec":
        try:
            values = dict(data)
            if "groups" in values:
                values["groups"] = [Group(g) for g in values["groups"]]
            return cls(**values)
        except (TypeError, ValueError) as e:
            raise UsageError(f"invalid cohort spec: {e}") from e

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CohortSpec":
        """
        Load a cohort spec from a JSON file.

        Args:
            path: JSON file with at least a ``years`` list

        Returns:
            CohortSpec: Validated spec
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read cohort spec {path}: {e}") from e
        if not isinstance(data, dict):
            raise UsageError(f"cohort spec {path} must be a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class ExclusionEntry:
    ref: str
    reason: str
    message: str = ""


@dataclass
class ExclusionReport:
    """Counts every examined work as either kept or excluded with a reason."""

    examined: int = 0
    kept: int = 0
    entries: List[ExclusionEntry] = field(default_factory=list)

    def exclude(self, ref: str, reason: str, message: str = ""):
        logger.info(f"Excluding {ref}: {reason} {message}".rstrip())
        self.entries.append(ExclusionEntry(ref, reason, message))

    @property
    def excluded(self) -> int:
        return len(self.entries)

    def counts(self) -> Dict[str, int]:
        return dict(Counter(e.reason for e in self.entries))

    def is_conserved(self) -> bool:
        return self.examined == self.kept + self.excluded

    def rows(self) -> List[Dict[str, str]]:
        return [{"ref": e.ref, "reason": e.reason, "message": e.message} for e in self.entries]


@dataclass(frozen=True)
class GroupContext:
    """What a record must satisfy to belong to its group."""

    years: FrozenSet[int]
    honor_source_ids: FrozenSet[str]
    influence_thresholds: Dict[int, float]
    influence_ids: FrozenSet[str] = frozenset()
    work_type: Optional[str] = None


@dataclass
class CohortBuild:
    """Outcome of a cohort harvest."""

    records: List[CohortRecord]
    exclusions: ExclusionReport
    context: GroupContext
    empty_cells: List[Tuple[int, Group]] = field(default_factory=list)


def classify_field(work: WorkRecord) -> FieldCategory:
    """Map a work's primary-topic domain to a field category (Unknown if absent)."""
    return FieldCategory.from_domain(work.primary_domain)


def satisfies_group(record: CohortRecord, context: GroupContext) -> bool:
    """
    Check a record against its group's membership rule.

    Args:
        record: Record to check
        context: Years, journals, thresholds and type filter of the cohort

    Returns:
        bool: True when the record belongs to its group
    """
    work = record.work
    if work.publication_year not in context.years:
        return False
    if context.work_type and work.work_type != context.work_type:
        return False

    if record.group == Group.HONOR:
        return work.source_id in context.honor_source_ids
    if record.group == Group.ZERO_CITED:
        return work.cited_by_count == 0
    if context.influence_ids:
        return work.id in context.influence_ids
    threshold = context.influence_thresholds.get(work.publication_year)
    return threshold is not None and work.cited_by_count >= threshold


def _usable_reference_count(work: WorkRecord) -> int:
    return sum(1 for r in work.referenced_works if r != work.id)


def _base_filters(spec: CohortSpec, year: int) -> Dict[str, str]:
    filters = {"publication_year": str(year)}
    if spec.work_type:
        filters["type"] = spec.work_type
    return filters


def _harvest_cell(client: OpenAlexClient, spec: CohortSpec, year: int, group: Group,
                  rejected: List[Tuple[str, str]]) -> Tuple[List[WorkRecord], Optional[float]]:
    """Fetch candidate works for one (year, group) cell."""
    filters = _base_filters(spec, year)
    limit = spec.per_cell_limit

    if group == Group.HONOR:
        filters["primary_location.source.id"] = "|".join(spec.honor_sources.values())
        return client.list_works(filters, limit, rejected=rejected), None

    if group == Group.ZERO_CITED:
        filters["cited_by_count"] = "0"
        return client.list_works(filters, limit, rejected=rejected), None

    if spec.influence_mode == "explicit":
        batch = client.fetch_works_batch(spec.influence_ids)
        works = [w for w in batch.records if w.publication_year == year]
        return works[:limit], None

    universe = client.list_works(filters, spec.universe_size, sample=spec.universe_size,
                                 seed=spec.seed, rejected=rejected)
    if not universe:
        return [], None
    citations = np.array([w.cited_by_count for w in universe], dtype=float)
    threshold = float(np.percentile(citations, spec.influence_percentile))
    logger.info(
        f"Influence threshold for {year}: {threshold:.1f} citations "
        f"(P{spec.influence_percentile:g} of {len(universe)} sampled works)"
    )
    selected = sorted(
        (w for w in universe if w.cited_by_count >= threshold),
        key=lambda w: (-w.cited_by_count, w.id),
    )
    return selected[:limit], threshold


def resolve_influence_ids(client: OpenAlexClient, refs: Sequence[str]) -> List[str]:
    """
    Turn DOIs in an explicit Influence list into OpenAlex work IDs.

    Args:
        client: OpenAlex client used to look up DOIs
        refs: OpenAlex IDs and DOIs, in any accepted form

    Returns:
        List[str]: OpenAlex IDs in input order, duplicates removed
    """
    ids = []
    for ref in refs:
        kind, value = parse_ref(ref)
        if kind == "doi":
            value = client.fetch_work(value).id
            logger.debug(f"Influence DOI {ref} is {value}")
        ids.append(value)
    return list(dict.fromkeys(ids))


def build_cohort(client: OpenAlexClient, spec: CohortSpec) -> CohortBuild:
    """
    Harvest every (year, group) cell of a cohort.

    Cells are fetched in parallel within the client's parallelism. Works
    with fewer than two references, duplicates within a cell, and works
    failing their group predicate are excluded and reported.

    Args:
        client: OpenAlex client (its cache receives every harvested work)
        spec: Cohort definition

    Returns:
        CohortBuild: Records, exclusion report and empty cells
    """
    if spec.influence_mode == "explicit" and spec.influence_ids:
        spec = replace(spec, influence_ids=resolve_influence_ids(client, spec.influence_ids))

    cells = [(year, group) for year in spec.years for group in spec.groups]
    workers = max(1, min(client.config.parallelism, len(cells)))
    rejected: List[List[Tuple[str, str]]] = [[] for _ in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        harvested = list(pool.map(
            lambda i: _harvest_cell(client, spec, *cells[i], rejected[i]), range(len(cells))
        ))

    context = GroupContext(
        years=frozenset(spec.years),
        honor_source_ids=frozenset(spec.honor_sources.values()),
        influence_thresholds={
            year: threshold
            for (year, group), (_, threshold) in zip(cells, harvested)
            if threshold is not None
        },
        influence_ids=frozenset(spec.influence_ids) if spec.influence_mode == "explicit" else frozenset(),
        work_type=spec.work_type,
    )

    report = ExclusionReport()
    records: List[CohortRecord] = []
    empty_cells: List[Tuple[int, Group]] = []

    for (year, group), (works, _), skipped in zip(cells, harvested, rejected):
        for ref, message in skipped:
            report.examined += 1
            report.exclude(ref, MALFORMED_PAYLOAD, f"{group.value} {year}: {message}")

        if not works:
            logger.warning(f"No works found for {group.value} {year}")
            empty_cells.append((year, group))
            continue

        seen = set()
        for work in works:
            report.examined += 1
            if work.id in seen:
                report.exclude(work.id, DUPLICATE, f"repeated in {group.value} {year}")
                continue
            seen.add(work.id)

            n_refs = _usable_reference_count(work)
            if n_refs < 2:
                report.exclude(work.id, TOO_FEW_REFERENCES, f"{n_refs} reference(s)")
                continue

            entry = client.cache.entry(work.id)
            try:
                record = CohortRecord(
                    work=work, group=group,
                    fetched_at=entry.fetched_at if entry else None,
                )
            except ValueError as e:
                report.exclude(work.id, GROUP_PREDICATE, str(e))
                continue
            if not satisfies_group(record, context):
                report.exclude(work.id, GROUP_PREDICATE, f"not a {group.value} work")
                continue
            records.append(record)

    report.kept = len(records)
    logger.info(
        f"Cohort: {report.kept} records kept, {report.excluded} excluded "
        f"from {report.examined} examined"
    )
    return CohortBuild(records=records, exclusions=report, context=context, empty_cells=empty_cells)


def attach_ke(client: OpenAlexClient, build: CohortBuild) -> CohortBuild:
    """
    Compute KE for every record of a built cohort.

    Records whose neighborhood cannot be resolved move to the exclusion
    report; transport errors propagate.

    Args:
        client: OpenAlex client
        build: Output of build_cohort

    Returns:
        CohortBuild: Same cohort with ``ke`` filled in
    """
    def evaluate(record: CohortRecord):
        try:
            return compute_ke(client.resolve_neighborhood(record.work.id)), None
        except (DegenerateMetricError, DataError) as e:
            return None, e

    with ThreadPoolExecutor(max_workers=client.config.parallelism) as pool:
        outcomes = list(pool.map(evaluate, build.records))

    records = []
    for record, (result, error) in zip(build.records, outcomes):
        if error is not None:
            build.exclusions.exclude(record.work.id, KE_FAILED, str(error))
            continue
        records.append(replace(record, ke=result))

    build.exclusions.kept = len(records)
    build.records = records
    return build


def _quartile_indices(values: Sequence[float]) -> np.ndarray:
    data = np.asarray(values, dtype=float)
    cutpoints = np.quantile(data, QUARTILE_PROBABILITIES)
    # side="left" sends values equal to a cutpoint to the lower bin
    return np.searchsorted(cutpoints, data, side="left")


def quartile_bins(values: Sequence[float]) -> List[Quartile]:
    """
    Assign quartile bins by the P25/P50/P75 cutpoints of the values.

    Quantiles interpolate linearly between order statistics. Values equal
    to a cutpoint fall into the lower bin.

    Args:
        values: At least four finite numbers

    Returns:
        List[Quartile]: Bin of each value, in input order
    """
    if len(values) < 4:
        raise InsufficientDataError(f"quartile bins need at least 4 values, got {len(values)}")
    if not np.all(np.isfinite(np.asarray(values, dtype=float))):
        raise InsufficientDataError("quartile bins need finite values")
    return [_QUARTILES[i] for i in _quartile_indices(values)]


def _is_missing(value: Optional[float]) -> bool:
    return value is None or bool(np.isnan(value))


def fwci_bins(values: Sequence[Optional[float]]) -> List[Optional[FwciBin]]:
    """
    Assign FWCI bins: zero, then quartiles over the positive values.

    Args:
        values: FWCI values; None or NaN marks a missing value

    Returns:
        List[Optional[FwciBin]]: Bin per value, None where FWCI is missing
    """
    positives = [(i, float(v)) for i, v in enumerate(values) if not _is_missing(v) and v > 0]
    labels: List[Optional[FwciBin]] = [
        None if _is_missing(v) else FwciBin.ZERO for v in values
    ]
    if positives:
        indices = _quartile_indices([v for _, v in positives])
        for (position, _), index in zip(positives, indices):
            labels[position] = _POSITIVE_FWCI_BINS[index]
    return labels


def assign_bins(records: Sequence[CohortRecord]) -> Tuple[List[CohortRecord], Dict[str, int]]:
    """
    Fill team-size, reference-count and FWCI bins on cohort records.

    Args:
        records: Cohort records (reference counts come from KE results when present)

    Returns:
        Tuple[List[CohortRecord], Dict[str, int]]: Binned records and the
        number of records skipped per binning (missing authors / FWCI)
    """
    records = list(records)
    skipped = {"missing_authors": 0, "missing_fwci": 0}

    with_authors = [i for i, r in enumerate(records) if r.work.author_count > 0]
    skipped["missing_authors"] = len(records) - len(with_authors)
    team: Dict[int, Quartile] = {}
    if len(with_authors) >= 4:
        bins = quartile_bins([records[i].work.author_count for i in with_authors])
        team = dict(zip(with_authors, bins))
    elif with_authors:
        logger.warning("Fewer than 4 records with authors; team bins left empty")

    refcounts: Dict[int, Quartile] = {}
    if len(records) >= 4:
        counts = [r.ke.n_refs if r.ke else _usable_reference_count(r.work) for r in records]
        refcounts = dict(enumerate(quartile_bins(counts)))

    fwci = fwci_bins([r.work.fwci for r in records])
    skipped["missing_fwci"] = sum(1 for b in fwci if b is None)

    binned = [
        replace(r, team_bin=team.get(i), refcount_bin=refcounts.get(i), fwci_bin=fwci[i])
        for i, r in enumerate(records)
    ]
    return binned, skipped
