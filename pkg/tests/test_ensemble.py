import math

import numpy as np
import pytest

from brownsheet.ensemble import (EnsembleConfig, ReplicaDiscarded, ReplicaError, map_replicas,
                                 run_ensemble, summarize)
from brownsheet.errors import ConfigurationError
from brownsheet.sheet import GridSpec, sample_sheet


def test_single_replica_has_undefined_error():
    s = summarize([3.5])
    assert s.mean == 3.5 and math.isnan(s.standard_error)
    assert not s.within(3.5)


def test_constant_task_has_zero_variance():
    s = run_ensemble(EnsembleConfig(10), lambda r: 2.0)
    assert s.mean == 2.0 and s.variance == 0.0


def test_summary_statistics():
    s = summarize([1.0, 2.0, 3.0, 4.0])
    assert s.mean == 2.5
    assert s.variance == pytest.approx(5 / 3)
    assert s.standard_error == pytest.approx(math.sqrt(5 / 12))


def _draw(r):
    return float(sample_sheet(GridSpec(1.0, 1.0, 8, 8, seed=9), 0, r).values.sum())


def test_results_do_not_depend_on_workers():
    one = run_ensemble(EnsembleConfig(40, 9, workers=1), _draw)
    many = run_ensemble(EnsembleConfig(40, 9, workers=8), _draw)
    assert one == many


def test_discards_are_counted():
    def task(r):
        if r % 3 == 0:
            raise ReplicaDiscarded
        return float(r)

    out = map_replicas(EnsembleConfig(9, workers=3), task)
    assert out[0] is None and out[1] == 1.0
    s = summarize(out)
    assert s.discards == 3 and s.n_effective == 6 and s.reps == 9


def test_failure_names_replica():
    def task(r):
        if r == 5:
            raise ZeroDivisionError("boom")
        return 0.0

    with pytest.raises(ReplicaError) as info:
        map_replicas(EnsembleConfig(8, workers=4), task)
    assert info.value.replica == 5
    assert isinstance(info.value.cause, ZeroDivisionError)


def test_vector_results_summarized_per_component():
    rows = run_ensemble(EnsembleConfig(5), lambda r: (r, 2 * r))
    assert [row.mean for row in rows] == [2.0, 4.0]


@pytest.mark.parametrize("kwargs", [{"reps": 0}, {"reps": 2, "workers": 0},
                                    {"reps": 2, "root_seed": -1}, {"reps": 1.5}])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigurationError):
        EnsembleConfig(**kwargs)


def test_all_discarded_gives_nan_mean():
    s = summarize([None, None])
    assert s.n_effective == 0 and np.isnan(s.mean) and s.discards == 2
