"""
Scholarly work metadata as consumed from OpenAlex.

This module defines the WorkRecord type, the field categories used by the
analyses, and the helpers that normalize DOIs and OpenAlex identifiers.
"""

import re
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from src.errors import DecodeError, UsageError

OPENALEX_ID_PATTERN = re.compile(r"^W\d+$")
DOI_PATTERN = re.compile(r"^10\.\d{4,9}/\S+$")

_OPENALEX_PREFIXES = ("https://openalex.org/", "http://openalex.org/")
_DOI_PREFIXES = ("https://doi.org/", "http://doi.org/", "https://dx.doi.org/",
                 "http://dx.doi.org/", "doi:")


class FieldCategory(str, Enum):
    """Top-level research domains (OpenAlex primary-topic domains)."""

    PHYSICAL_SCIENCES = "PhysicalSciences"
    LIFE_SCIENCES = "LifeSciences"
    HEALTH_SCIENCES = "HealthSciences"
    SOCIAL_SCIENCES = "SocialSciences"
    UNKNOWN = "Unknown"

    @classmethod
    def from_domain(cls, display_name: Optional[str]) -> "FieldCategory":
        """Map an OpenAlex domain display name onto a category."""
        if not display_name:
            return cls.UNKNOWN
        return _DOMAIN_NAMES.get(display_name.strip().lower(), cls.UNKNOWN)


_DOMAIN_NAMES = {
    "physical sciences": FieldCategory.PHYSICAL_SCIENCES,
    "life sciences": FieldCategory.LIFE_SCIENCES,
    "health sciences": FieldCategory.HEALTH_SCIENCES,
    "social sciences": FieldCategory.SOCIAL_SCIENCES,
}


def normalize_openalex_id(value: str) -> str:
    """Strip the OpenAlex URL prefix: 'https://openalex.org/W1' -> 'W1'."""
    value = value.strip()
    for prefix in _OPENALEX_PREFIXES:
        if value.lower().startswith(prefix):
            value = value[len(prefix):]
            break
    return value.upper() if value[:1] in ("w", "W") else value


def normalize_doi(value: Optional[str]) -> Optional[str]:
    """Return a bare lower-case DOI, or None for empty input."""
    if not value:
        return None
    value = value.strip()
    for prefix in _DOI_PREFIXES:
        if value.lower().startswith(prefix):
            value = value[len(prefix):]
            break
    return value.lower()


def parse_ref(ref: str) -> Tuple[str, str]:
    """
    Classify a user-supplied work reference.

    Args:
        ref: DOI (bare, doi: or https://doi.org/ form) or OpenAlex work ID

    Returns:
        Tuple[str, str]: ('openalex', 'W…') or ('doi', '10.…')
    """
    if not ref or not ref.strip():
        raise UsageError("empty work reference")

    candidate = normalize_openalex_id(ref)
    if OPENALEX_ID_PATTERN.match(candidate):
        return "openalex", candidate

    doi = normalize_doi(ref)
    if doi and DOI_PATTERN.match(doi):
        return "doi", doi

    raise UsageError(f"not a DOI or OpenAlex work ID: {ref!r}")


@dataclass(frozen=True)
class WorkRecord:
    """Metadata and outbound reference list of one scholarly work."""

    id: str
    publication_year: int
    cited_by_count: int = 0
    author_count: int = 0
    doi: Optional[str] = None
    title: Optional[str] = None
    fwci: Optional[float] = None
    primary_domain: Optional[str] = None
    source_id: Optional[str] = None
    source_name: Optional[str] = None
    work_type: Optional[str] = None
    referenced_works: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.id:
            raise ValueError("work id must be nonempty")
        if self.cited_by_count < 0 or self.author_count < 0:
            raise ValueError(f"negative count on {self.id}")
        if self.fwci is not None:
            if self.fwci < 0:
                raise ValueError(f"negative FWCI on {self.id}")
            object.__setattr__(self, "fwci", float(self.fwci))
        if len(set(self.referenced_works)) != len(self.referenced_works):
            object.__setattr__(
                self, "referenced_works", tuple(dict.fromkeys(self.referenced_works))
            )

    @property
    def field_category(self) -> FieldCategory:
        return FieldCategory.from_domain(self.primary_domain)

    @classmethod
    def from_openalex(cls, payload: Dict[str, Any]) -> "WorkRecord":
        """
        Decode an OpenAlex work object.

        Args:
            payload: JSON object from the /works endpoints

        Returns:
            WorkRecord: Normalized record
        """
        try:
            primary_topic = payload.get("primary_topic") or {}
            domain = (primary_topic.get("domain") or {}).get("display_name")
            location = payload.get("primary_location") or {}
            source = location.get("source") or {}
            fwci = payload.get("fwci")
            return cls(
                id=normalize_openalex_id(payload["id"]),
                doi=normalize_doi(payload.get("doi")),
                title=payload.get("title"),
                publication_year=int(payload["publication_year"]),
                cited_by_count=int(payload.get("cited_by_count") or 0),
                fwci=float(fwci) if fwci is not None else None,
                author_count=len(payload.get("authorships") or []),
                primary_domain=domain,
                source_id=normalize_openalex_id(source["id"]) if source.get("id") else None,
                source_name=source.get("display_name"),
                work_type=payload.get("type"),
                referenced_works=tuple(
                    normalize_openalex_id(w) for w in payload.get("referenced_works") or []
                ),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            work = payload.get("id", "?") if isinstance(payload, dict) else "?"
            raise DecodeError(f"malformed OpenAlex work payload ({work}): {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["referenced_works"] = list(self.referenced_works)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WorkRecord":
        try:
            values = dict(data)
            values["referenced_works"] = tuple(values.get("referenced_works") or ())
            return cls(**values)
        except (TypeError, ValueError) as e:
            raise DecodeError(f"malformed work record: {e}") from e

