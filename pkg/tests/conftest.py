"""
Shared fixtures: a fake OpenAlex HTTP session, a fake clock and cache snapshots.
"""

import json
import shutil
import threading
import time
from pathlib import Path
from typing import Any, Dict, List, Optional
from urllib.parse import unquote

import numpy as np
import pandas as pd
import pytest

from src.services.openalex_client import OPENALEX_BASE_URL, OpenAlexClient, OpenAlexConfig, RateLimiter
from src.services.work_cache import WorkCache

FIXTURES = Path(__file__).parent / "fixtures"
OPENALEX_FIXTURES = FIXTURES / "openalex"
CACHE_SNAPSHOT = FIXTURES / "cache" / "works.jsonl"
GOLDEN = FIXTURES / "golden"

TEST_MAILTO = "ke-tests@example.org"

# Field composition (physical, life, health, social) of the three study groups
GROUP_FIELD_COUNTS = {
    "Honor": [4453, 4037, 1130, 388],
    "Influence": [3094, 1848, 1258, 877],
    "ZeroCited": [1257, 962, 533, 187],
}


def load_payloads() -> Dict[str, Dict[str, Any]]:
    """Synthetic OpenAlex work payloads keyed by short work ID."""
    payloads = {}
    for path in sorted(OPENALEX_FIXTURES.glob("*.json")):
        payloads[path.stem] = json.loads(path.read_text(encoding="utf-8"))
    return payloads


def openalex_work(work_id: str, year: int = 2015, cited_by_count: int = 0,
                  references: Optional[List[str]] = None, source_id: Optional[str] = None,
                  work_type: str = "article", domain: str = "Physical Sciences",
                  authors: int = 2, fwci: Optional[float] = 1.0) -> Dict[str, Any]:
    """Build a minimal OpenAlex work payload."""
    return {
        "id": f"https://openalex.org/{work_id}",
        "doi": None,
        "title": f"Work {work_id}",
        "publication_year": year,
        "cited_by_count": cited_by_count,
        "fwci": fwci,
        "type": work_type,
        "authorships": [{"author": {"display_name": f"Author {i}"}} for i in range(authors)],
        "primary_topic": {"domain": {"display_name": domain}},
        "primary_location": {
            "source": {"id": f"https://openalex.org/{source_id}", "display_name": source_id}
            if source_id else None
        },
        "referenced_works": [f"https://openalex.org/{r}" for r in (references or [])],
    }


class FakeResponse:
    def __init__(self, status_code: int = 200, payload: Any = None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if self._payload is None:
            raise ValueError("No JSON object could be decoded")
        return self._payload


class FakeSession:
    """Stands in for requests.Session, serving fixture payloads."""

    def __init__(self, works: Optional[Dict[str, Dict[str, Any]]] = None,
                 lists: Optional[Dict[str, List[Dict[str, Any]]]] = None):
        self.headers: Dict[str, str] = {}
        self.works = works if works is not None else load_payloads()
        self.lists = lists or {}
        self.calls: List[tuple] = []
        self.queued: List[Any] = []

    @property
    def request_count(self) -> int:
        return len(self.calls)

    def _by_doi(self, doi: str) -> Optional[Dict[str, Any]]:
        for payload in self.works.values():
            if (payload.get("doi") or "").lower().endswith(doi.lower()):
                return payload
        return None

    def get(self, url: str, params: Optional[Dict[str, Any]] = None, timeout: Any = None):
        params = dict(params or {})
        self.calls.append((url, params))
        if self.queued:
            response = self.queued.pop(0)
            if isinstance(response, Exception):
                raise response
            return response

        path = url[len(OPENALEX_BASE_URL):]
        if path.startswith("/works/doi:"):
            payload = self._by_doi(unquote(path[len("/works/doi:"):]))
            return FakeResponse(200, payload) if payload else FakeResponse(404)
        if path.startswith("/works/"):
            payload = self.works.get(path[len("/works/"):])
            return FakeResponse(200, payload) if payload else FakeResponse(404)
        if path == "/works":
            query = params.get("filter", "")
            if query.startswith("openalex_id:"):
                ids = query.split(":", 1)[1].split("|")
                results = [self.works[i] for i in ids if i in self.works]
            else:
                results = self.lists.get(query, [])
                per_page = int(params.get("per-page", 25))
                page = int(params.get("page", 1))
                results = results[(page - 1) * per_page:page * per_page]
            return FakeResponse(200, {"meta": {"count": len(results)}, "results": results})
        return FakeResponse(404)


class CountingSession(FakeSession):
    """A FakeSession with slow responses that records peak concurrency."""

    def __init__(self, *args, delay: float = 0.02, **kwargs):
        super().__init__(*args, **kwargs)
        self.delay = delay
        self.in_flight = 0
        self.peak = 0
        self._lock = threading.Lock()

    def get(self, url: str, params: Optional[Dict[str, Any]] = None, timeout: Any = None):
        with self._lock:
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        try:
            time.sleep(self.delay)
            return super().get(url, params=params, timeout=timeout)
        finally:
            with self._lock:
                self.in_flight -= 1


class FakeClock:
    """Monotonic clock advanced only by sleep()."""

    def __init__(self, start: float = 100.0):
        self.now = start
        self.sleeps: List[float] = []

    def __call__(self) -> float:
        return self.now

    def sleep(self, seconds: float):
        self.sleeps.append(seconds)
        self.now += seconds


@pytest.fixture
def fake_session():
    return FakeSession()


@pytest.fixture
def fake_clock():
    return FakeClock()


@pytest.fixture
def cache_dir(tmp_path):
    """A cache directory seeded with the committed snapshot."""
    directory = tmp_path / "cache"
    directory.mkdir()
    shutil.copy(CACHE_SNAPSHOT, directory / "works.jsonl")
    return directory


@pytest.fixture
def make_client(tmp_path, fake_clock):
    """Build an OpenAlexClient on a fake session with no real waiting."""

    def factory(session=None, cache_path=None, **config) -> OpenAlexClient:
        settings = {"mailto": TEST_MAILTO, "backoff_multiplier": 0.0, "requests_per_second": 50.0}
        settings.update(config)
        cfg = OpenAlexConfig(**settings)
        cache = WorkCache(cache_path or tmp_path / "client-cache" / "works.jsonl")
        limiter = RateLimiter(cfg.requests_per_second, clock=fake_clock, sleep=fake_clock.sleep)
        return OpenAlexClient(cfg, cache, session=session or FakeSession(), rate_limiter=limiter)

    return factory


def synthetic_results(n: int = 120, seed: int = 0) -> pd.DataFrame:
    """
    A results table with every group x field cell populated.

    Rows 0-1 have an unknown field, row 5 lacks FWCI, row 7 has no authors,
    rows 3 and 4 sit at KE 0 and 1, and every tenth row is low-confidence.
    """
    groups = ["Honor", "Influence", "ZeroCited"]
    fields = ["PhysicalSciences", "LifeSciences", "HealthSciences", "SocialSciences"]
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        zero_cited = groups[i % 3] == "ZeroCited"
        rows.append({
            "id": f"W{i}",
            "doi": None,
            "year": [2013, 2015, 2020][(i // 12) % 3],
            "field": fields[(i // 3) % 4],
            "group": groups[i % 3],
            "n_refs": int(rng.integers(2, 80)),
            "internal_links": 0,
            "ke": float(rng.uniform(0.2, 0.9)),
            "coverage": 1.0,
            "low_confidence": bool(i % 10 == 0),
            "cited_by_count": 0 if zero_cited else int(rng.integers(1, 5000)),
            "fwci": 0.0 if zero_cited else float(rng.lognormal(0.5, 1.0)),
            "author_count": int(rng.integers(1, 30)),
        })
    frame = pd.DataFrame(rows)
    frame.loc[[0, 1], "field"] = "Unknown"
    frame.loc[5, "fwci"] = np.nan
    frame.loc[7, "author_count"] = 0
    frame.loc[[3, 4], "ke"] = [0.0, 1.0]
    return frame
