import time

import pytest

from app.services.sweep_runner import SweepRunner


def _slow_square(x):
    time.sleep(0.01 * (5 - x))
    return x * x


def test_results_keep_submission_order():
    for jobs in (1, 3):
        runner = SweepRunner(max_concurrent=jobs)
        assert runner.run(_slow_square, range(5)) == [0, 1, 4, 9, 16], f"jobs={jobs}"
        status = runner.get_status()
        assert status.completed_count == 5
        assert status.failed_count == 0
        assert status.pending_count == 0


def test_lowest_index_failure_is_raised():
    def task(x):
        if x in (2, 4):
            raise ValueError(f"bad point {x}")
        return x

    runner = SweepRunner(max_concurrent=4, label="points")
    with pytest.raises(ValueError, match="bad point 2"):
        runner.run(task, range(6))
    assert runner.get_status().failed_count == 2


def test_sequential_runner_stops_at_first_failure():
    seen = []

    def task(x):
        seen.append(x)
        if x == 1:
            raise RuntimeError("stop")
        return x

    runner = SweepRunner()
    with pytest.raises(RuntimeError):
        runner.run(task, [0, 1, 2])
    assert seen == [0, 1]


def test_invalid_concurrency():
    with pytest.raises(ValueError):
        SweepRunner(max_concurrent=0)
