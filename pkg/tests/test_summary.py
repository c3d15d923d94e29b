import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import THETA_STAR
from sisabc.model import SisModel
from sisabc.network import ObservationSeries, load_network
from sisabc.summary import (COUNT_NAMES, SummaryVector, discrepancy, read_summary, summarize,
                            write_summary)


def series(rows, start="2015-01"):
    from sisabc.months import month_range
    x = np.array(rows, dtype=bool)
    return ObservationSeries(x, tuple(month_range(start, x.shape[1])))


def test_all_susceptible(path3):
    s = summarize(series(np.zeros((3, 5))), path3)
    assert not s.s1.any() and not s.counts.any()
    assert len(s) == 11


def test_contact_infection_in_summer():
    net = load_network([(0, 1)], 2)
    s = summarize(series([[1, 1], [0, 1]], "2014-11"), net)
    assert s.s011_summer == 1 and s.s010_summer == 0
    assert s.s1.tolist() == [0.5, 1.0]


def test_hand_tabulated_season_change(path3):
    # Jan, Feb, Mar, Apr; the Feb -> Mar transition still counts as summer
    traj = series([[0, 1, 1, 0],
                   [0, 0, 1, 1],
                   [1, 1, 0, 1]])
    s = summarize(traj, path3)
    assert s.s1 == pytest.approx([1 / 3, 2 / 3, 2 / 3, 2 / 3])
    expected = {"s10_summer": 1, "s10_winter": 1, "s010_summer": 1, "s010_winter": 0,
                "s011_summer": 1, "s011_winter": 1}
    assert {k: getattr(s, k) for k in COUNT_NAMES} == expected


def test_explicit_season_override(path3):
    traj = series([[0, 1, 1, 0], [0, 0, 1, 1], [1, 1, 0, 1]])
    s = summarize(traj, path3, seasons=[1, 1, 1])
    assert s.counts[0::2].sum() == 0
    with pytest.raises(ValueError):
        summarize(traj, path3, seasons=[1, 1])


def test_short_trajectory_rejected(path3):
    class One:
        states = np.zeros((3, 1), dtype=bool)
        month_labels = ("2015-01",)
    with pytest.raises(ValueError):
        summarize(One(), path3)


def test_discrepancy_examples():
    a = np.r_[np.linspace(0, 1, 38), np.arange(6.0)]
    b = a.copy()
    assert discrepancy(a, b) == 0.0
    b[40] += 2
    assert abs(discrepancy(a, b) - 4 / 44) < 1e-12
    with pytest.raises(ValueError, match="lengths differ"):
        discrepancy(a, b[:-1])


@given(arrays(float, 20, elements=st.floats(-1e3, 1e3)), arrays(float, 20, elements=st.floats(-1e3, 1e3)))
def test_discrepancy_symmetric_nonnegative(a, b):
    assert discrepancy(a, b) == discrepancy(b, a) >= 0


@settings(max_examples=60)
@given(st.integers(2, 8), st.integers(2, 12), st.data())
def test_counts_are_exhaustive(n, T, data):
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = data.draw(st.lists(st.sampled_from(pairs), unique=True))
    x = data.draw(arrays(bool, (n, T)))
    s = summarize(series(x, "2014-10"), load_network(edges, n))
    # net change in prevalence equals new infections minus recoveries
    assert s.new_infections - s.recoveries == pytest.approx(n * (s.s1[-1] - s.s1[0]))
    assert s.recoveries == np.sum(x[:, :-1] & ~x[:, 1:])
    assert s.new_infections == np.sum(~x[:, :-1] & x[:, 1:])


def test_reference_length(fixture_net, training):
    assert len(summarize(training, fixture_net)) == 44


def test_kernel_summary_equals_numpy_summary(fixture_net, training):
    model = SisModel.from_series(fixture_net, training)
    for seed in range(5):
        fast = model.summary(THETA_STAR, np.random.default_rng(seed))
        slow = summarize(model.simulate(THETA_STAR, np.random.default_rng(seed)), fixture_net)
        assert np.array_equal(fast, slow.as_array())


def test_summary_vector_validation():
    with pytest.raises(ValueError):
        SummaryVector([0.5, 1.2], np.zeros(6))
    with pytest.raises(ValueError):
        SummaryVector([0.5, 0.2], np.zeros(5))
    v = SummaryVector.from_array(np.r_[0.1, 0.2, np.arange(6.0)])
    assert v.s011_winter == 5.0


def test_csv_roundtrip(tmp_path, fixture_net, training):
    s = summarize(training, fixture_net)
    write_summary(s, tmp_path / "s.csv", "# x\n")
    assert read_summary(tmp_path / "s.csv") == s
