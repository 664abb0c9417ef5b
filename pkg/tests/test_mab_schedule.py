"""Twin-column role alternation tests."""

import numpy as np
import pytest

from procbench.envs.mab.schedule import TwinColumnSchedule, twin_column_tick


def test_swap_fires_exactly_once_at_boundary():
    sched = TwinColumnSchedule(load_duration=240.0, clock=239.5)
    sched, swaps = twin_column_tick(sched, 1.0)
    assert swaps == 1
    assert sched.loading_column == 1
    assert sched.clock == pytest.approx(0.5)


def test_two_full_phases_restore_roles():
    sched = TwinColumnSchedule(load_duration=60.0)
    sched, s1 = twin_column_tick(sched, 60.0)
    sched, s2 = twin_column_tick(sched, 60.0)
    assert (s1, s2) == (1, 1)
    assert sched.loading_column == 0


def test_one_tick_spanning_many_phases():
    sched = TwinColumnSchedule(load_duration=10.0)
    sched, swaps = twin_column_tick(sched, 35.0)
    assert swaps == 3
    assert sched.loading_column == 1
    assert sched.clock == pytest.approx(5.0)


def test_random_partitions_fire_single_swap():
    rng = np.random.default_rng(77)
    duration = 240.0
    for _ in range(200):
        n_parts = rng.integers(1, 12)
        cuts = np.sort(rng.uniform(0.0, duration, size=n_parts - 1))
        parts = np.diff(np.concatenate([[0.0], cuts, [duration]]))
        sched = TwinColumnSchedule(load_duration=duration)
        total_swaps = 0
        for dt in parts:
            if dt <= 0.0:
                continue
            sched, swaps = twin_column_tick(sched, float(dt))
            total_swaps += swaps
        one_shot, ref_swaps = twin_column_tick(
            TwinColumnSchedule(load_duration=duration), duration
        )
        assert total_swaps == ref_swaps == 1
        assert sched.loading_column == one_shot.loading_column


def test_validation():
    with pytest.raises(ValueError):
        TwinColumnSchedule(load_duration=0.0)
    with pytest.raises(ValueError):
        twin_column_tick(TwinColumnSchedule(load_duration=1.0), 0.0)
