import numpy as np
import pytest

from sisabc.rng import blocks, derive_rng, kernel_state, run_tasks


def test_derived_streams_are_reproducible_and_distinct():
    a = derive_rng(7, 2, 0).random(5)
    assert np.array_equal(a, derive_rng(7, 2, 0).random(5))
    assert not np.array_equal(a, derive_rng(7, 2, 1).random(5))
    assert not np.array_equal(a, derive_rng(7, 3, 0).random(5))


def test_missing_seed_rejected():
    with pytest.raises(ValueError):
        derive_rng(None, 1)
    with pytest.raises(ValueError):
        kernel_state(None)


def test_blocks_cover_range():
    assert blocks(2500, 1000) == [(0, 1000), (1000, 2000), (2000, 2500)]
    assert blocks(0) == []


def test_run_tasks_order_independent_of_workers():
    fn = lambda i: derive_rng(3, i).integers(1 << 30)  # noqa: E731
    assert run_tasks(fn, range(20), 1) == run_tasks(fn, list(range(20)), 4)
    with pytest.raises(ValueError):
        run_tasks(fn, [1], 0)
