import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homemesh.errors import (
    InstanceTooLarge,
    InvalidInput,
    InvalidPath,
    NoPath,
    UnknownNode,
)
from homemesh.netmodel import DistanceTable
from homemesh.routing import (
    CountingMode,
    RouteQuery,
    all_pairs_profile,
    brute_force_route,
    find_optimal_path,
    path_distance,
)

from conftest import random_symmetric_table
from reference_impls import enum_best_route

# frozen by enumerating every simple pair route on the repaired reference table
PROFILE_K5_TRANSMITTERS = {1: 9, 2: 9, 3: 25, 4: 9, 5: 23, 6: 17, 7: 19, 8: 9, 9: 9, 10: 11}
PROFILE_K5_ALL_NODES = {1: 18, 2: 18, 3: 34, 4: 18, 5: 32, 6: 26, 7: 28, 8: 18, 9: 18, 10: 20}
PROFILE_K5_RELAY = {1: 0, 2: 0, 3: 16, 4: 0, 5: 14, 6: 8, 7: 10, 8: 0, 9: 0, 10: 2}


def as_tuple(route):
    return (route.path, route.dist, route.hops)


def both_routes(table, query):
    try:
        fast = as_tuple(find_optimal_path(table, query))
    except NoPath:
        fast = None
    try:
        slow = as_tuple(brute_force_route(table, query))
    except NoPath:
        slow = None
    return fast, slow


def test_headline_route_prefers_fewer_hops(table1):
    route = find_optimal_path(table1, RouteQuery(1, 10, 5))
    assert as_tuple(route) == ((1, 5, 10), 10.0, 2)
    # the three-hop alternative ties on distance but loses on hops
    assert path_distance(table1, [1, 3, 7, 10]) == 10.0
    for a, b in zip([1, 3, 7, 10], [3, 7, 10]):
        assert table1.distance(a, b) <= 5


def test_same_source_and_destination(table1):
    assert as_tuple(find_optimal_path(table1, RouteQuery(7, 7, 5))) == ((7,), 0.0, 0)
    assert as_tuple(brute_force_route(table1, RouteQuery(7, 7, 5))) == ((7,), 0.0, 0)


def test_tight_radius_forces_three_hops(table1):
    route = find_optimal_path(table1, RouteQuery(1, 10, 4))
    assert as_tuple(route) == ((1, 3, 7, 10), 10.0, 3)


def test_wide_radius_goes_direct(table1):
    route = find_optimal_path(table1, RouteQuery(1, 10, 9))
    assert as_tuple(route) == ((1, 10), 9.0, 1)


def test_radius_one_unreachable(table1):
    with pytest.raises(NoPath):
        find_optimal_path(table1, RouteQuery(1, 10, 1))
    with pytest.raises(NoPath):
        brute_force_route(table1, RouteQuery(1, 10, 1))


def test_brute_force_examples(table1):
    assert as_tuple(brute_force_route(table1, RouteQuery(1, 10, 5))) == ((1, 5, 10), 10.0, 2)
    two = DistanceTable.from_rows([[0, 4], [4, 0]])
    assert as_tuple(brute_force_route(two, RouteQuery(1, 2, 4))) == ((1, 2), 4.0, 1)


def test_brute_force_lexicographic_tie(table1):
    # three routes tie at (12, 3); the smallest node sequence wins
    route = brute_force_route(table1, RouteQuery(4, 9, 5))
    assert as_tuple(route) == ((4, 3, 6, 9), 12.0, 3)
    ties = []
    for path in [(4, 3, 6, 9), (4, 5, 7, 9), (4, 5, 10, 9)]:
        assert path_distance(table1, path) == 12.0
        assert all(table1.distance(a, b) <= 5 for a, b in zip(path, path[1:]))
        ties.append(path)
    assert route.path == min(ties)


def test_query_validation(table1):
    with pytest.raises(UnknownNode):
        find_optimal_path(table1, RouteQuery(0, 5, 5))
    with pytest.raises(UnknownNode):
        find_optimal_path(table1, RouteQuery(1, 11, 5))
    with pytest.raises(InvalidInput):
        find_optimal_path(table1, RouteQuery(1, 2, -1))
    with pytest.raises(InvalidInput):
        find_optimal_path(table1, RouteQuery(1, 2, float("nan")))


def test_enumeration_bound():
    n = 13
    rows = [[0 if i == j else 1 for j in range(n)] for i in range(n)]
    table = DistanceTable.from_rows(rows)
    with pytest.raises(InstanceTooLarge):
        brute_force_route(table, RouteQuery(1, 2, 5))


def test_path_distance_examples(table1):
    assert path_distance(table1, [1, 5, 10]) == 10.0
    assert path_distance(table1, [7]) == 0.0
    assert path_distance(table1, [1, 3, 7, 10]) == 10.0


def test_path_distance_errors(table1):
    with pytest.raises(InvalidPath):
        path_distance(table1, [])
    with pytest.raises(InvalidPath):
        path_distance(table1, [1, 5, 1])
    with pytest.raises(UnknownNode):
        path_distance(table1, [1, 99])


# --- oracle agreement -------------------------------------------------------


def test_search_matches_enumeration_on_random_tables():
    rng = random.Random(1234)
    for _ in range(40):
        n = rng.randint(2, 8)
        table = random_symmetric_table(rng, n)
        radius = rng.randint(1, 9)
        for src in table.nodes:
            for dst in table.nodes:
                if src == dst:
                    continue
                fast, slow = both_routes(table, RouteQuery(src, dst, radius))
                assert fast == slow


def test_brute_force_matches_pure_enumeration():
    # validates the pruned enumerator itself against permutations
    rng = random.Random(99)
    for _ in range(25):
        n = rng.randint(2, 6)
        table = random_symmetric_table(rng, n)
        radius = rng.randint(1, 9)
        for src in table.nodes:
            for dst in table.nodes:
                if src == dst:
                    continue
                expected = enum_best_route(table.cost, src, dst, radius)
                try:
                    got = brute_force_route(table, RouteQuery(src, dst, radius))
                    got_key = (got.dist, got.hops, got.path)
                except NoPath:
                    got_key = None
                assert got_key == expected


plane = st.floats(min_value=-100, max_value=100, allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(plane, plane), min_size=2, max_size=6),
       st.floats(min_value=0, max_value=300, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_euclidean_tables_agree(points, radius):
    from homemesh.netmodel import table_from_positions

    table = table_from_positions(points)
    for src in table.nodes:
        for dst in table.nodes:
            if src != dst:
                fast, slow = both_routes(table, RouteQuery(src, dst, radius))
                assert fast == slow


directed_matrix = st.integers(min_value=2, max_value=5).flatmap(
    lambda n: st.lists(
        st.lists(st.integers(min_value=1, max_value=9), min_size=n, max_size=n),
        min_size=n,
        max_size=n,
    )
)


@given(directed_matrix, st.integers(min_value=1, max_value=9))
@settings(max_examples=60, deadline=None)
def test_directed_tables_agree(rows, radius):
    n = len(rows)
    for i in range(n):
        rows[i][i] = 0
    table = DistanceTable.from_rows(rows)
    for src in table.nodes:
        for dst in table.nodes:
            if src != dst:
                fast, slow = both_routes(table, RouteQuery(src, dst, radius))
                assert fast == slow


def test_returned_routes_are_feasible_and_consistent(table1):
    for radius in (2, 3, 4, 5, 7, 9):
        for src in table1.nodes:
            for dst in table1.nodes:
                try:
                    route = find_optimal_path(table1, RouteQuery(src, dst, radius))
                except NoPath:
                    continue
                assert len(set(route.path)) == len(route.path)
                assert all(
                    table1.distance(a, b) <= radius
                    for a, b in zip(route.path, route.path[1:])
                )
                assert route.dist == path_distance(table1, route.path)
                assert route.hops == len(route.path) - 1


def test_radius_monotonicity(table1):
    for src in table1.nodes:
        for dst in table1.nodes:
            if src == dst:
                continue
            previous = None
            for radius in range(1, 10):
                try:
                    dist = find_optimal_path(table1, RouteQuery(src, dst, radius)).dist
                except NoPath:
                    assert previous is None  # once reachable, always reachable
                    continue
                if previous is not None:
                    assert dist <= previous
                previous = dist


def test_symmetric_table_symmetric_costs(table1):
    for src in table1.nodes:
        for dst in table1.nodes:
            if src == dst:
                continue
            forward = find_optimal_path(table1, RouteQuery(src, dst, 5))
            backward = find_optimal_path(table1, RouteQuery(dst, src, 5))
            assert forward.dist == backward.dist
            assert forward.hops == backward.hops


# --- all-pairs profile --------------------------------------------------------


def test_profile_transmitters_only(table1):
    stats = all_pairs_profile(table1, 5, CountingMode.TRANSMITTERS_ONLY)
    assert stats.counts == PROFILE_K5_TRANSMITTERS
    assert stats.relay_counts == PROFILE_K5_RELAY
    assert stats.transmissions == 90
    assert stats.unreachable == 0
    assert stats.top_relays() == [3, 5, 7]


def test_profile_all_path_nodes(table1):
    stats = all_pairs_profile(table1, 5, CountingMode.ALL_PATH_NODES)
    assert stats.counts == PROFILE_K5_ALL_NODES
    assert stats.relay_counts == PROFILE_K5_RELAY


def test_profile_two_node_table():
    table = DistanceTable.from_rows([[0, 4], [4, 0]])
    stats = all_pairs_profile(table, 4, CountingMode.TRANSMITTERS_ONLY)
    assert stats.counts == {1: 1, 2: 1}
    assert stats.unreachable == 0


def test_profile_everything_unreachable(table1):
    stats = all_pairs_profile(table1, 1, CountingMode.TRANSMITTERS_ONLY)
    assert all(count == 0 for count in stats.counts.values())
    assert stats.unreachable == 90
    assert stats.transmissions == 0


def test_profile_rejects_tiny_table():
    with pytest.raises(InvalidInput):
        all_pairs_profile(DistanceTable.from_rows([[0]]), 5, CountingMode.TRANSMITTERS_ONLY)


def test_profile_conservation(table1):
    transmitters = all_pairs_profile(table1, 5, CountingMode.TRANSMITTERS_ONLY)
    everyone = all_pairs_profile(table1, 5, CountingMode.ALL_PATH_NODES)
    # each delivered route counts exactly one more node under ALL_PATH_NODES
    assert sum(everyone.counts.values()) - sum(transmitters.counts.values()) == 90
