from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import data_path
from sisabc.network import (NetworkError, ObservationSeries, PointObservation, bin_points,
                            load_network, network_queries, point_in_polygon, read_network,
                            read_series, write_network, write_series)

UNIT = [(0, 0), (1, 0), (1, 1), (0, 1)]


@st.composite
def graphs(draw, max_nodes=12):
    n = draw(st.integers(1, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    planted = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    return load_network(edges, list(enumerate(planted)))


def test_path_graph_degrees(path3):
    assert path3.degrees().tolist() == [1, 2, 1]


def test_self_loop_rejected():
    with pytest.raises(NetworkError, match="self-loop"):
        load_network([(5, 5)], 6)


def test_duplicate_edge_rejected_in_either_orientation():
    with pytest.raises(NetworkError, match="duplicate"):
        load_network([(0, 1), (1, 0)], 2)


def test_dangling_index_rejected():
    with pytest.raises(NetworkError, match="dangling"):
        load_network([(0, 3)], 3)


def test_node_ids_must_be_contiguous():
    with pytest.raises(NetworkError, match="contiguous"):
        load_network([], [(0, 1), (2, 1)])


def test_fixture_degree_extremes(fixture_net):
    deg = fixture_net.degrees()
    assert deg.max() == 10
    assert deg.min() == 1


def test_fixture_histogram_matches_edge_list(fixture_net):
    deg = Counter()
    with open(data_path("fixture_edges.csv")) as fh:
        for line in fh:
            if line[0].isdigit():
                u, v = line.strip().split(",")
                deg[int(u)] += 1
                deg[int(v)] += 1
    expected = Counter(deg[i] for i in range(fixture_net.node_count))
    assert fixture_net.degree_histogram() == dict(expected)
    assert sum(fixture_net.degree_histogram().values()) == fixture_net.node_count


def test_queries(path3):
    q = network_queries(path3, 1)
    assert (q.degree, q.neighbors, q.non_neighbor_count) == (2, frozenset({0, 2}), 0)
    iso = load_network([(0, 1), (1, 2), (2, 3)], 5)
    q = network_queries(iso, 4)
    assert (q.degree, q.neighbors, q.non_neighbor_count) == (0, frozenset(), 4)
    with pytest.raises(IndexError):
        network_queries(path3, 3)


@given(graphs())
def test_degree_sum_is_twice_edge_count(net):
    assert net.degrees().sum() == 2 * len(net.edges)
    for v in range(net.node_count):
        assert v not in net.neighbors(v)


@settings(max_examples=40, deadline=None)
@given(graphs())
def test_serialize_roundtrip(tmp_path_factory, net):
    d = tmp_path_factory.mktemp("net")
    write_network(net, d / "e.csv", d / "n.csv", header="# test\n")
    assert read_network(d / "e.csv", d / "n.csv") == net


def test_footprint_roundtrip(tmp_path, fixture_net):
    write_network(fixture_net, tmp_path / "e.csv", tmp_path / "n.csv", tmp_path / "f.csv")
    back = read_network(tmp_path / "e.csv", tmp_path / "n.csv", tmp_path / "f.csv")
    for a, b in zip(fixture_net.footprints, back.footprints):
        assert np.array_equal(a, b)


def test_malformed_file(tmp_path):
    (tmp_path / "e.csv").write_text("u,v\n0,1,2\n")
    (tmp_path / "n.csv").write_text("id,planted\n0,1\n1,1\n")
    with pytest.raises(NetworkError, match="fields"):
        read_network(tmp_path / "e.csv", tmp_path / "n.csv")


# point binning

def test_point_in_unit_square():
    assert point_in_polygon(0.5, 0.5, UNIT)[0]
    assert not point_in_polygon(2, 2, UNIT)[0]
    assert point_in_polygon(1.0, 0.5, UNIT)[0]  # on an edge
    assert point_in_polygon(0.0, 0.0, UNIT)[0]  # on a vertex


def test_point_in_concave_polygon():
    ell = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    inside = point_in_polygon([0.5, 1.5, 1.5, 0.5], [0.5, 0.5, 1.5, 1.5], ell)
    assert inside.tolist() == [True, True, False, True]


def _grid(k):
    """k x 1 row of unit squares; node i spans x in [i, i+1]."""
    polys = [[(i, 0), (i + 1, 0), (i + 1, 1), (i, 1)] for i in range(k)]
    return load_network([(i, i + 1) for i in range(k - 1)], k, polys)


def test_bin_points_examples():
    net = _grid(10)
    pts = [PointObservation(7.2, 0.5, 4), PointObservation(7.5, 0.1, 4), PointObservation(7.9, 0.9, 4)]
    res = bin_points(pts, net, 6)
    expected = np.zeros((10, 6), dtype=bool)
    expected[7, 4] = True
    assert np.array_equal(res.series.states, expected)
    assert res.rejects == []

    res = bin_points([PointObservation(20, 20, 0)], net, 6)
    assert res.rejects == [PointObservation(20, 20, 0)]
    assert not res.series.states.any()


def test_shared_boundary_goes_to_lowest_index():
    res = bin_points([(3.0, 0.5, 1)], _grid(5), 2)
    assert res.series.states[:, 1].tolist() == [False, False, True, False, False]


def test_missing_footprint_is_fatal(path3):
    with pytest.raises(NetworkError, match="footprint"):
        bin_points([(0, 0, 0)], path3, 2)


def test_snapshot_index_out_of_range():
    with pytest.raises(ValueError):
        bin_points([(0.5, 0.5, 3)], _grid(2), 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 7), st.floats(-0.5, 1.5), st.integers(0, 3)), max_size=30),
       st.randoms(use_true_random=False))
def test_bin_points_permutation_invariant(points, rnd):
    net = _grid(6)
    a = bin_points(points, net, 4)
    shuffled = list(points)
    rnd.shuffle(shuffled)
    b = bin_points(shuffled, net, 4)
    assert a.series == b.series
    assert sorted(a.rejects) == sorted(b.rejects)


def test_fixture_points_bin_to_snapshots(fixture_net, full_series):
    from sisabc.network import read_points
    res = bin_points(read_points(data_path("synthetic_points.csv")), fixture_net, 6)
    assert np.array_equal(res.series.states, full_series.states[:, :6])
    assert len(res.rejects) == 2


# observation series

def test_series_invariants():
    with pytest.raises(ValueError):
        ObservationSeries(np.zeros((3, 1), dtype=bool), ("2014-12",))
    with pytest.raises(ValueError, match="consecutive"):
        ObservationSeries(np.zeros((3, 2), dtype=bool), ("2014-12", "2015-02"))


def test_series_split(full_series):
    train, hold = full_series.split(7)
    assert train.snapshots == 38 and hold.snapshots == 8
    assert train.month_labels[-1] == hold.month_labels[0]
    assert str(train.month_labels[0]) == "2014-12"


def test_series_roundtrip(tmp_path, full_series):
    write_series(full_series, tmp_path / "s.csv", "# header\n")
    assert read_series(tmp_path / "s.csv") == full_series


def test_series_rejects_bad_values(tmp_path):
    (tmp_path / "s.csv").write_text("2014-12,2015-01\n0,2\n")
    with pytest.raises(ValueError, match="0/1"):
        read_series(tmp_path / "s.csv")
