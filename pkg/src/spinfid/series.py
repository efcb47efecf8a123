"""Sampled correlation functions and their CSV form.

The CSV layout is shared by the classical, typicality and exact
backends: '#'-prefixed header lines carry the metadata (method, spin
tag, parameters, table hash, seed), followed by one row per lag with
columns t, C_raw, C_normalized, stderr.  Floats are written with 17
significant digits so a round trip is bit exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(eq=False)
class CorrelationSeries:
    """<Mx(t) Mx(0)> on a uniform lag grid starting at t = 0.

    values is the normalized series (values[0] == 1), raw the ensemble
    mean before normalization, stderr the per-point standard error on
    the normalized scale, normalization the raw C(0) used to scale.
    group_values optionally keeps per-group (batch or sample) raw
    curves for resampling-based error estimates; it is not serialized.
    """

    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    raw: np.ndarray
    normalization: float
    meta: dict = field(default_factory=dict)
    group_values: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.stderr = np.asarray(self.stderr, dtype=np.float64)
        self.raw = np.asarray(self.raw, dtype=np.float64)
        if not (len(self.times) == len(self.values) == len(self.stderr) == len(self.raw)):
            raise ConfigError("series arrays must have equal length")
        if len(self.times) < 2 or self.times[0] != 0.0 or (np.diff(self.times) <= 0).any():
            raise ConfigError("times must start at 0 and increase strictly")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def value_at(self, t) -> np.ndarray:
        """Linear interpolation of the normalized series."""
        return np.interp(t, self.times, self.values)


def save_csv(series: CorrelationSeries, path) -> None:
    with open(path, "w") as fh:
        fh.write("# spinfid correlation series\n")
        for key in sorted(series.meta):
            fh.write(f"# {key}: {series.meta[key]}\n")
        fh.write(f"# normalization: {series.normalization:.17g}\n")
        fh.write("t,C_raw,C_normalized,stderr\n")
        for t, r, v, s in zip(series.times, series.raw, series.values, series.stderr):
            fh.write(f"{t:.17g},{r:.17g},{v:.17g},{s:.17g}\n")


def load_csv(path) -> CorrelationSeries:
    meta = {}
    normalization = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, val = body.split(":", 1)
                    if key.strip() == "normalization":
                        normalization = float(val)
                    else:
                        meta[key.strip()] = val.strip()
                continue
            if line.startswith("t,"):
                continue
            rows.append([float(x) for x in line.split(",")])
    if normalization is None or not rows:
        raise ConfigError(f"{path}: not a spinfid series file")
    arr = np.array(rows)
    return CorrelationSeries(times=arr[:, 0], raw=arr[:, 1], values=arr[:, 2],
                             stderr=arr[:, 3], normalization=normalization, meta=meta)
