"""
Tests for the OpenAlex client, run against a fake HTTP session.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from src.errors import (
    DecodeError,
    DegenerateNeighborhoodError,
    TransportError,
    UnknownWorkError,
    UsageError,
)
from src.services.eccentricity import compute_ke
from src.services.openalex_client import (
    MAX_IDS_PER_FILTER,
    OpenAlexClient,
    OpenAlexConfig,
    RateLimiter,
)
from src.services.work_cache import WorkCache
from tests.conftest import TEST_MAILTO, CountingSession, FakeResponse, FakeSession, openalex_work


def test_fetch_by_doi_sends_mailto_and_caches(make_client):
    client = make_client()
    record = client.fetch_work("https://doi.org/10.5555/ke-fixture.2013.001")
    assert record.id == "W2100000001"

    url, params = client.session.calls[0]
    assert url.endswith("/works/doi:10.5555/ke-fixture.2013.001")
    assert params["mailto"] == TEST_MAILTO
    assert TEST_MAILTO in client.session.headers["User-Agent"]

    again = client.fetch_work("W2100000001")
    assert again == record
    assert client.session.request_count == 1


def test_unknown_work(make_client):
    with pytest.raises(UnknownWorkError):
        make_client().fetch_work("W9999999999")


def test_retries_then_succeeds(make_client):
    session = FakeSession()
    session.queued = [FakeResponse(429), FakeResponse(503), requests.ConnectionError("reset")]
    client = make_client(session=session)
    assert client.fetch_work("W2100000002").id == "W2100000002"
    assert session.request_count == 4


def test_retries_exhausted(make_client):
    session = FakeSession()
    session.queued = [FakeResponse(500)] * 10
    client = make_client(session=session, max_retries=2)
    with pytest.raises(TransportError):
        client.fetch_work("W2100000002")
    assert session.request_count == 3


def test_client_error_is_not_retried(make_client):
    session = FakeSession()
    session.queued = [FakeResponse(403)]
    with pytest.raises(TransportError):
        make_client(session=session).fetch_work("W2100000002")
    assert session.request_count == 1


def test_non_json_response(make_client):
    session = FakeSession()
    session.queued = [FakeResponse(200, None)]
    with pytest.raises(DecodeError):
        make_client(session=session).fetch_work("W2100000002")


def test_batch_chunks_and_reports_missing(make_client):
    works = {f"W{i}": openalex_work(f"W{i}") for i in range(1, 121)}
    session = FakeSession(works=works)
    client = make_client(session=session, parallelism=3)
    ids = [f"W{i}" for i in range(1, 121)] + ["W999", "W5"]

    result = client.fetch_works_batch(ids)

    assert [r.id for r in result.records] == [f"W{i}" for i in range(1, 121)]
    assert result.missing == ["W999"]
    assert session.request_count == 3
    for _, params in session.calls:
        assert len(params["filter"].split("|")) <= MAX_IDS_PER_FILTER
        assert params["per-page"] == 200


def test_batch_uses_cache_first(make_client):
    client = make_client()
    client.fetch_work("W2100000101")
    before = client.session.request_count
    result = client.fetch_works_batch(["W2100000101"])
    assert [r.id for r in result.records] == ["W2100000101"]
    assert client.session.request_count == before


def test_resolve_neighborhood(make_client):
    client = make_client()
    neigh = client.resolve_neighborhood("10.5555/ke-fixture.2013.001")
    result = compute_ke(neigh)
    assert (result.n_refs, result.internal_links) == (5, 7)
    assert result.ke == pytest.approx(0.112096, abs=1e-6)
    assert result.coverage == 1.0


def test_resolve_neighborhood_with_dangling_references(make_client):
    result = compute_ke(make_client().resolve_neighborhood("W2100000003"))
    assert (result.n_refs, result.internal_links, result.ke) == (4, 0, 1.0)
    assert result.coverage == 0.5


@pytest.mark.parametrize("ref", ["W2100000004", "W2100000005"])
def test_resolve_neighborhood_too_few_references(make_client, ref):
    with pytest.raises(DegenerateNeighborhoodError):
        make_client().resolve_neighborhood(ref)


def test_offline_serves_cache_only(make_client, cache_dir):
    session = FakeSession()
    client = make_client(session=session, cache_path=cache_dir / "works.jsonl",
                         offline=True, mailto=None)
    result = compute_ke(client.resolve_neighborhood("W2100000003"))
    assert result.coverage == 0.5
    with pytest.raises(UnknownWorkError, match="offline"):
        client.fetch_work("W123")
    assert session.request_count == 0


def test_network_requires_mailto(make_client):
    with pytest.raises(UsageError):
        make_client(mailto=None).fetch_work("W2100000001")


def test_list_works_pages(make_client):
    works = [openalex_work(f"W{i}", cited_by_count=0) for i in range(1, 251)]
    query = "publication_year:2015,cited_by_count:0"
    session = FakeSession(works={}, lists={query: works})
    client = make_client(session=session)

    records = client.list_works({"publication_year": "2015", "cited_by_count": "0"}, limit=230)

    assert len(records) == 230
    assert [params["page"] for _, params in session.calls] == [1, 2]
    assert "W230" in client.cache


def test_list_works_sampling_parameters(make_client):
    session = FakeSession(works={}, lists={"publication_year:2010": [openalex_work("W1")]})
    client = make_client(session=session)
    client.list_works({"publication_year": "2010"}, limit=50, sample=50, seed=7)
    _, params = session.calls[0]
    assert (params["sample"], params["seed"], params["per-page"]) == (50, 7, 50)


def test_list_works_skips_undecodable_items(make_client):
    good = [openalex_work(f"W{i}") for i in range(1, 6)]
    items = good[:2] + [{"title": "no id here"}] + good[2:]
    session = FakeSession(works={}, lists={"x:1": items})
    client = make_client(session=session)
    rejected = []

    records = client.list_works({"x": "1"}, limit=10, rejected=rejected)

    assert [r.id for r in records] == ["W1", "W2", "W3", "W4", "W5"]
    assert len(rejected) == 1
    assert rejected[0][0] == "no id here"
    assert "id" in rejected[0][1]


def test_list_works_without_rejected_sink(make_client):
    session = FakeSession(works={}, lists={"x:1": [{"id": None}, openalex_work("W1")]})
    assert [r.id for r in make_client(session=session).list_works({"x": "1"}, limit=10)] == ["W1"]


def test_doi_is_quoted_in_path(make_client):
    payload = openalex_work("W77")
    payload["doi"] = "https://doi.org/10.5555/ke#7?v=2"
    session = FakeSession(works={"W77": payload})
    record = make_client(session=session).fetch_work("10.5555/ke#7?v=2")

    assert record.id == "W77"
    url, _ = session.calls[0]
    assert url.endswith("/works/doi:10.5555/ke%237%3Fv%3D2")


def test_thirty_reference_neighborhood(make_client):
    refs = [f"W{3000 + i}" for i in range(1, 31)]
    works = {
        ref: openalex_work(ref, references=[refs[i + 1]] if i + 1 < len(refs) else [])
        for i, ref in enumerate(refs)
    }
    works["W3000"] = openalex_work("W3000", references=refs)
    client = make_client(session=FakeSession(works=works))

    neigh = client.resolve_neighborhood("W3000")
    result = compute_ke(neigh)

    assert neigh.resolved_count == 30
    assert (result.n_refs, result.internal_links, result.coverage) == (30, 29, 1.0)
    assert result.ke == pytest.approx(1 - (2 * 29 / (30 * 29)) ** (1 / 3))


def test_concurrent_batches_share_the_parallelism_bound(make_client):
    works = {f"W{i}": openalex_work(f"W{i}") for i in range(1, 601)}
    session = CountingSession(works=works, delay=0.02)
    client = make_client(session=session, parallelism=2)
    batches = [[f"W{i}" for i in range(start, start + 150)] for start in range(1, 601, 150)]

    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(client.fetch_works_batch, batches))

    assert [len(r.records) for r in results] == [150] * 4
    assert session.request_count == 12
    assert 1 <= session.peak <= 2


def test_rate_limiter_spaces_requests(fake_clock):
    limiter = RateLimiter(4.0, clock=fake_clock, sleep=fake_clock.sleep)
    starts = [limiter.wait() for _ in range(5)]
    gaps = [b - a for a, b in zip(starts, starts[1:])]
    assert all(gap >= 0.25 - 1e-12 for gap in gaps)
    assert len(fake_clock.sleeps) == 4


def test_config_validation():
    with pytest.raises(UsageError):
        OpenAlexConfig(requests_per_second=0)
    with pytest.raises(UsageError):
        OpenAlexConfig(parallelism=0)


@pytest.mark.live
@pytest.mark.skipif(not (os.environ.get("KE_LIVE_TESTS") == "1" and os.environ.get("KE_MAILTO")),
                    reason="live OpenAlex tests need KE_LIVE_TESTS=1 and KE_MAILTO")
def test_live_smoke(tmp_path):
    """Fetch a handful of 2015 Science/Nature articles and compute KE."""
    from src.services.cohort import CohortSpec, Group, attach_ke, build_cohort

    client = OpenAlexClient(OpenAlexConfig(mailto=os.environ["KE_MAILTO"]),
                            WorkCache(tmp_path / "works.jsonl"))
    assert client.fetch_work("10.1126/science.1240474").referenced_works

    build = attach_ke(client, build_cohort(
        client, CohortSpec(years=[2015], groups=[Group.HONOR], per_cell_limit=10)))

    assert build.exclusions.is_conserved()
    for record in build.records:
        assert record.work.source_name in ("Science", "Nature")
        assert 0.0 <= record.ke.ke <= 1.0
        assert 0.0 <= record.ke.coverage <= 1.0
