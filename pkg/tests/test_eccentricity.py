"""
Tests for the KE computation.
"""

import random
from datetime import date
from itertools import combinations

import pytest

from src.errors import (
    DegenerateNeighborhoodError,
    InvalidLinkCountError,
    UndefinedMetricError,
)
from src.services.eccentricity import (
    KEResult,
    ReferenceNeighborhood,
    compute_ke,
    count_internal_links,
    knowledge_eccentricity,
    max_links,
)


def brute_force_links(neigh: ReferenceNeighborhood) -> int:
    linked = 0
    for a, b in combinations(neigh.references, 2):
        if b in neigh.reference_refs[a] or a in neigh.reference_refs[b]:
            linked += 1
    return linked


@pytest.fixture
def five_reference_neighborhood():
    """Five references with seven linked pairs, including a mutual pair."""
    return ReferenceNeighborhood.build(
        "F",
        ["A", "B", "C", "D", "E"],
        {
            "A": ["B", "C", "D", "E", "X"],
            "B": ["C", "D", "A"],
            "C": ["D"],
            "D": ["D"],
            "E": ["Y", "F"],
        },
    )


def test_complete_link_set_gives_zero():
    """Every pair linked means no eccentricity."""
    assert knowledge_eccentricity(5, 10) == 0.0


@pytest.mark.parametrize("n", range(2, 51))
def test_no_links_gives_one(n):
    assert knowledge_eccentricity(n, 0) == 1.0


def test_seven_of_ten_links():
    assert knowledge_eccentricity(5, 7) == pytest.approx(0.112, abs=1e-3)


def test_ke_decreases_as_links_increase():
    values = [knowledge_eccentricity(8, l) for l in range(max_links(8) + 1)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert all(0.0 <= v <= 1.0 for v in values)


def test_ke_undefined_below_two_references():
    with pytest.raises(UndefinedMetricError):
        knowledge_eccentricity(1, 0)
    with pytest.raises(UndefinedMetricError):
        knowledge_eccentricity(0, 0)


@pytest.mark.parametrize("n,l", [(5, 11), (5, -1), (2, 2)])
def test_link_count_out_of_range(n, l):
    with pytest.raises(InvalidLinkCountError):
        knowledge_eccentricity(n, l)


def test_count_links_on_example(five_reference_neighborhood):
    """Mutual A<->B counts once, self-citations and outside works are ignored."""
    assert count_internal_links(five_reference_neighborhood) == 7


def test_count_links_matches_brute_force():
    rng = random.Random(20240501)
    for _ in range(200):
        n = rng.randint(2, 20)
        refs = [f"R{i}" for i in range(n)]
        reference_refs = {}
        for ref in refs:
            pool = refs + ["OUT1", "OUT2", "FOCAL"]
            reference_refs[ref] = rng.sample(pool, rng.randint(0, len(pool)))
        neigh = ReferenceNeighborhood.build("FOCAL", refs, reference_refs)
        assert count_internal_links(neigh) == brute_force_links(neigh)


def test_reference_order_does_not_change_ke():
    rng = random.Random(7)
    for _ in range(100):
        n = rng.randint(2, 15)
        refs = [f"R{i}" for i in range(n)]
        reference_refs = {ref: rng.sample(refs, rng.randint(0, n)) for ref in refs}
        original = compute_ke(ReferenceNeighborhood.build("F", refs, reference_refs))

        shuffled_refs = rng.sample(refs, n)
        shuffled_lists = {ref: rng.sample(cited, len(cited)) for ref, cited in reference_refs.items()}
        permuted = compute_ke(ReferenceNeighborhood.build("F", shuffled_refs, shuffled_lists),
                              computed_at=original.computed_at)

        assert permuted.internal_links == original.internal_links
        assert permuted.ke == original.ke
        assert permuted == original


def test_build_drops_duplicates_and_focal():
    neigh = ReferenceNeighborhood.build("F", ["A", "B", "A", "F", "C"], {"A": ["B"]})
    assert neigh.references == ("A", "B", "C")
    assert neigh.resolved_count == 1
    assert neigh.reference_refs["B"] == frozenset()


def test_build_strips_self_and_focal_citations():
    neigh = ReferenceNeighborhood.build("F", ["A", "B"], {"A": ["A", "F"], "B": ["F"]})
    assert count_internal_links(neigh) == 0
    assert neigh.reference_refs["A"] == frozenset()


def test_direct_construction_validates():
    with pytest.raises(ValueError):
        ReferenceNeighborhood("F", ("A", "A"), {"A": frozenset()}, 1)
    with pytest.raises(ValueError):
        ReferenceNeighborhood("F", ("A", "F"), {"A": frozenset(), "F": frozenset()}, 2)
    with pytest.raises(ValueError):
        ReferenceNeighborhood("F", ("A", "B"), {"A": frozenset(), "B": frozenset()}, 3)


@pytest.mark.parametrize("refs", [[], ["A"], ["A", "A"]])
def test_degenerate_neighborhood(refs):
    neigh = ReferenceNeighborhood.build("F", refs, {})
    with pytest.raises(DegenerateNeighborhoodError):
        count_internal_links(neigh)
    with pytest.raises(DegenerateNeighborhoodError):
        compute_ke(neigh)


def test_compute_ke_result(five_reference_neighborhood):
    result = compute_ke(five_reference_neighborhood, computed_at=date(2026, 1, 15))
    assert result.focal_id == "F"
    assert result.n_refs == 5
    assert result.internal_links == 7
    assert result.ke == pytest.approx(0.1120959987, abs=1e-9)
    assert result.coverage == 1.0
    assert not result.is_low_coverage()
    assert result.computed_at == date(2026, 1, 15)


def test_coverage_counts_resolved_references():
    neigh = ReferenceNeighborhood.build("F", ["A", "B", "C", "D"], {"A": [], "B": []})
    result = compute_ke(neigh)
    assert result.coverage == 0.5
    assert result.is_low_coverage(0.8)
    assert not result.is_low_coverage(0.5)


def test_result_row():
    result = KEResult("W1", n_refs=4, internal_links=0, ke=1.0, coverage=0.75)
    assert result.to_row(0.8) == {
        "id": "W1", "n_refs": 4, "internal_links": 0, "ke": 1.0,
        "coverage": 0.75, "low_confidence": True,
    }
