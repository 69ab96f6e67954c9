"""
Knowledge Eccentricity (KE) computation.

KE measures how loosely a paper's cited knowledge base hangs together:
    KE = 1 - (2L / (N * (N - 1))) ** (1/3)
where N is the number of references and L the number of unordered
reference pairs in which at least one member cites the other.

Everything in this module is pure; no I/O happens here.
"""

from dataclasses import dataclass, field
from datetime import date
from types import MappingProxyType
from typing import Any, Dict, FrozenSet, Iterable, Mapping, Optional, Set, Tuple

from src.errors import (
    DegenerateNeighborhoodError,
    InvalidLinkCountError,
    UndefinedMetricError,
)

DEFAULT_COVERAGE_THRESHOLD = 0.8


@dataclass(frozen=True)
class ReferenceNeighborhood:
    """A focal work, its reference set R and each reference's own references RR."""

    focal_id: str
    references: Tuple[str, ...]
    reference_refs: Mapping[str, FrozenSet[str]]
    resolved_count: int

    def __post_init__(self):
        if len(set(self.references)) != len(self.references):
            raise ValueError("references contain duplicates")
        if self.focal_id in self.references:
            raise ValueError(f"references contain the focal work {self.focal_id}")
        if set(self.reference_refs) != set(self.references):
            raise ValueError("reference_refs keys must match the reference set")
        if not 0 <= self.resolved_count <= len(self.references):
            raise ValueError(
                f"resolved_count {self.resolved_count} outside [0, {len(self.references)}]"
            )

    @classmethod
    def build(cls, focal_id: str, references: Iterable[str],
              reference_refs: Mapping[str, Iterable[str]],
              resolved_count: Optional[int] = None) -> "ReferenceNeighborhood":
        """
        Build a neighborhood from raw reference data.

        Reference lists are deduplicated (first occurrence wins), the focal
        work is dropped from R, and each RR entry loses self-citations and
        citations of the focal work. References missing from
        ``reference_refs`` are treated as unresolved (empty set).

        Args:
            focal_id: Identifier of the work being evaluated
            references: Outbound references of the focal work
            reference_refs: Map from reference to its own outbound references
            resolved_count: Number of references whose lists were obtained;
                defaults to the number of references present in reference_refs

        Returns:
            ReferenceNeighborhood: Validated, immutable neighborhood
        """
        ordered = tuple(dict.fromkeys(r for r in references if r and r != focal_id))

        cleaned: Dict[str, FrozenSet[str]] = {}
        for ref in ordered:
            cited = reference_refs.get(ref, ())
            cleaned[ref] = frozenset(c for c in cited if c not in (ref, focal_id))

        if resolved_count is None:
            resolved_count = sum(1 for ref in ordered if ref in reference_refs)

        return cls(
            focal_id=focal_id,
            references=ordered,
            reference_refs=MappingProxyType(cleaned),
            resolved_count=resolved_count,
        )

    @property
    def size(self) -> int:
        return len(self.references)


@dataclass(frozen=True)
class KEResult:
    """KE value and diagnostics for one work."""

    focal_id: str
    n_refs: int
    internal_links: int
    ke: float
    coverage: float
    computed_at: date = field(default_factory=date.today)

    def is_low_coverage(self, threshold: float = DEFAULT_COVERAGE_THRESHOLD) -> bool:
        """Whether too few reference lists were resolved to trust the value."""
        return self.coverage < threshold

    def to_row(self, threshold: float = DEFAULT_COVERAGE_THRESHOLD) -> Dict[str, Any]:
        return {
            "id": self.focal_id,
            "n_refs": self.n_refs,
            "internal_links": self.internal_links,
            "ke": self.ke,
            "coverage": self.coverage,
            "low_confidence": self.is_low_coverage(threshold),
        }


def max_links(n: int) -> int:
    """Number of unordered pairs among n references."""
    return n * (n - 1) // 2


def count_internal_links(neigh: ReferenceNeighborhood) -> int:
    """
    Count unordered reference pairs linked by a citation in either direction.

    Args:
        neigh: Reference neighborhood with at least two references

    Returns:
        int: L, the number of linked pairs (a mutual pair counts once)
    """
    if neigh.size < 2:
        raise DegenerateNeighborhoodError(
            f"{neigh.focal_id} has {neigh.size} reference(s); KE needs at least 2 "
            "(works without a usable reference list are excluded)"
        )

    members = set(neigh.references)
    pairs: Set[Tuple[str, str]] = set()
    for source in neigh.references:
        for target in neigh.reference_refs[source] & members:
            pairs.add((source, target) if source < target else (target, source))
    return len(pairs)


def knowledge_eccentricity(n: int, l: int) -> float:
    """
    Evaluate KE for N references with L internal links.

    Args:
        n: Number of references (N >= 2)
        l: Number of linked reference pairs (0 <= L <= N(N-1)/2)

    Returns:
        float: KE in [0, 1]
    """
    if n < 2:
        raise UndefinedMetricError(f"KE is undefined for N={n}; N must be at least 2")
    upper = max_links(n)
    if not 0 <= l <= upper:
        raise InvalidLinkCountError(f"L={l} outside [0, {upper}] for N={n}")

    if l == 0:
        return 1.0
    if l == upper:
        return 0.0

    density = (2.0 * l) / (n * (n - 1))
    return min(1.0, max(0.0, 1.0 - density ** (1.0 / 3.0)))


def compute_ke(neigh: ReferenceNeighborhood,
               computed_at: Optional[date] = None) -> KEResult:
    """
    Compute the KE result for a reference neighborhood.

    Args:
        neigh: Reference neighborhood with at least two references
        computed_at: Date stamped on the result (defaults to today)

    Returns:
        KEResult: N, L, KE and coverage for the focal work
    """
    links = count_internal_links(neigh)
    return KEResult(
        focal_id=neigh.focal_id,
        n_refs=neigh.size,
        internal_links=links,
        ke=knowledge_eccentricity(neigh.size, links),
        coverage=neigh.resolved_count / neigh.size,
        computed_at=computed_at or date.today(),
    )
