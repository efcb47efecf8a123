import numpy as np
import pytest

import spinfid as sf
from spinfid.errors import ConfigError


def make_series(n=64, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) * 0.05
    raw = np.exp(-t) * 4.0 + rng.normal(scale=1e-3, size=n)
    raw[0] = 4.0
    return sf.CorrelationSeries(times=t, values=raw / raw[0], stderr=np.full(n, 1e-3),
                                raw=raw, normalization=4.0,
                                meta={"method": "classical", "seed": "3"})


def test_csv_round_trip_bit_exact(tmp_path):
    s = make_series()
    path = tmp_path / "series.csv"
    sf.save_csv(s, path)
    first = path.read_bytes()
    back = sf.load_csv(path)
    assert np.array_equal(back.times, s.times)
    assert np.array_equal(back.values, s.values)
    assert np.array_equal(back.raw, s.raw)
    assert np.array_equal(back.stderr, s.stderr)
    assert back.normalization == s.normalization
    assert back.meta["method"] == "classical"
    sf.save_csv(back, path)
    assert path.read_bytes() == first


def test_time_grid_validation():
    with pytest.raises(ConfigError):
        sf.CorrelationSeries(times=np.array([0.1, 0.2]), values=np.ones(2),
                             stderr=np.zeros(2), raw=np.ones(2), normalization=1.0)
    with pytest.raises(ConfigError):
        sf.CorrelationSeries(times=np.array([0.0, 0.0]), values=np.ones(2),
                             stderr=np.zeros(2), raw=np.ones(2), normalization=1.0)


def test_value_interpolation():
    s = make_series()
    assert s.value_at(0.0) == s.values[0]
    mid = 0.5 * (s.values[3] + s.values[4])
    assert s.value_at(0.175) == pytest.approx(mid, rel=1e-12)
