"""Periodic lattice geometry and pair-coupling tables.

A ``CouplingTable`` stores one anisotropic coupling triple (Jx, Jy, Jz)
per unordered site pair on a periodic lattice, together with a spin tag
that records whether the magnitudes follow the classical convention
(unit vectors) or the quantum one (spin-S operators).  Tables are built
either with uniform nearest-neighbor couplings or from the truncated
magnetic dipole-dipole interaction under a strong field, where every
pair satisfies Jz = -2 Jx = -2 Jy and the magnitude falls off with the
minimum-image distance.

Dipolar couplings are stored as dimensionless multiples of the
nearest-neighbor energy scale g^2 hbar^2 / a0^3; conversion to physical
frequency units happens in the analysis layer.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, NoDynamicsError

CGS_HBAR = 1.054571817e-27  # erg s


@dataclass(frozen=True)
class LatticeSpec:
    """Extents of a periodic lattice, 1 to 3 axes."""

    dimensions: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dimensions)
        if not 1 <= len(dims) <= 3:
            raise ConfigError(f"lattice must have 1-3 axes, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise ConfigError(f"lattice extents must be >= 1, got {dims}")
        object.__setattr__(self, "dimensions", dims)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dimensions))

    def site_coordinates(self) -> np.ndarray:
        """(N, naxes) integer coordinates in row-major site order."""
        grids = np.meshgrid(*[np.arange(d) for d in self.dimensions], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def site_index(self, coord) -> int:
        return int(np.ravel_multi_index(tuple(int(c) % d for c, d in zip(coord, self.dimensions)),
                                        self.dimensions))


@dataclass(frozen=True)
class FieldDirection:
    """Static-field orientation along a cubic crystal axis."""

    label: str

    _AXES = {"100": (1.0, 0.0, 0.0), "110": (1.0, 1.0, 0.0), "111": (1.0, 1.0, 1.0)}

    def __post_init__(self):
        label = self.label.strip("[]")
        if label not in self._AXES:
            raise ConfigError(f"field direction must be one of [100], [110], [111], got {self.label!r}")
        object.__setattr__(self, "label", label)

    @property
    def unit_vector(self) -> np.ndarray:
        v = np.asarray(self._AXES[self.label])
        return v / np.linalg.norm(v)


@dataclass(frozen=True)
class DipolarConstants:
    """Physical constants fixing the dipolar energy scale.

    g is the gyromagnetic ratio in rad s^-1 Oe^-1, a0 the lattice period
    in Angstrom.  The simulation's unit of inverse time is
    g^2 hbar / a0^3 (CGS), exposed here in ms^-1.
    """

    g: float = 25166.2
    a0_angstrom: float = 2.72

    def __post_init__(self):
        if self.g <= 0 or self.a0_angstrom <= 0:
            raise ConfigError("dipolar constants must be positive")

    @property
    def rate_per_ms(self) -> float:
        a0_cm = self.a0_angstrom * 1e-8
        return self.g**2 * CGS_HBAR / a0_cm**3 * 1e-3


def spin_label(two_s) -> str:
    if two_s is None:
        return "classical"
    return f"quantum {Fraction(int(two_s), 2)}"


@dataclass(eq=False)
class CouplingTable:
    """Immutable per-pair coupling storage.

    sites holds unordered pairs (m, n) with m < n in row-major site
    order; values holds the matching (Jx, Jy, Jz) triples.  two_s is
    None for classical tables, otherwise 2S for quantum spin S.
    Instances must not be mutated after construction; they are shared
    freely across threads.
    """

    spec: LatticeSpec
    sites: np.ndarray
    values: np.ndarray
    two_s: int | None = None
    _pair_map: dict = field(default=None, repr=False)

    def __post_init__(self):
        self.sites = np.ascontiguousarray(self.sites, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.sites.ndim != 2 or self.sites.shape[1] != 2:
            raise ConfigError("sites must be an (n_pairs, 2) array")
        if self.values.shape != (len(self.sites), 3):
            raise ConfigError("values must be an (n_pairs, 3) array")
        if len(self.sites) and (self.sites[:, 0] >= self.sites[:, 1]).any():
            raise ConfigError("pairs must satisfy m < n")

    @property
    def n_pairs(self) -> int:
        return len(self.sites)

    @property
    def classical(self) -> bool:
        return self.two_s is None

    @property
    def spin(self) -> float | None:
        return None if self.two_s is None else self.two_s / 2.0

    def coupling(self, m: int, n: int) -> np.ndarray:
        """Coupling triple for the unordered pair (m, n); zeros if absent."""
        if self._pair_map is None:
            self._pair_map = {(int(a), int(b)): v for (a, b), v in zip(self.sites, self.values)}
        key = (min(m, n), max(m, n))
        v = self._pair_map.get(key)
        return np.zeros(3) if v is None else v.copy()

    def neighbor_square_sums(self) -> np.ndarray:
        """Per-site sums over neighbors of Jx^2 + Jy^2 + Jz^2."""
        q = (self.values**2).sum(axis=1)
        out = np.zeros(self.spec.n_sites)
        np.add.at(out, self.sites[:, 0], q)
        np.add.at(out, self.sites[:, 1], q)
        return out

    def coupling_matrices(self) -> np.ndarray:
        """Dense symmetric (3, N, N) coupling matrices for dynamics."""
        n = self.spec.n_sites
        mats = np.zeros((3, n, n))
        m, nn = self.sites[:, 0], self.sites[:, 1]
        for a in range(3):
            mats[a, m, nn] = self.values[:, a]
            mats[a, nn, m] = self.values[:, a]
        return mats

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.spec.dimensions).encode())
        h.update(spin_label(self.two_s).encode())
        h.update(self.sites.tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()[:16]


def build_nearest_neighbor(spec: LatticeSpec, jx: float, jy: float, jz: float,
                           two_s: int | None = None) -> CouplingTable:
    """Uniform nearest-neighbor couplings along every axis of extent >= 2.

    On an extent-2 axis the periodic bond coincides with the direct one
    and is counted once.
    """
    if spec.n_sites < 2:
        raise ConfigError("single-site lattice has no neighbor pairs")
    coords = spec.site_coordinates()
    pairs = set()
    for axis, extent in enumerate(spec.dimensions):
        if extent < 2:
            continue
        shifted = coords.copy()
        shifted[:, axis] = (shifted[:, axis] + 1) % extent
        partner = np.ravel_multi_index(shifted.T, spec.dimensions)
        for m, n in enumerate(partner):
            pairs.add((min(m, int(n)), max(m, int(n))))
    sites = np.array(sorted(pairs), dtype=np.int64)
    values = np.tile(np.array([jx, jy, jz]), (len(sites), 1))
    return CouplingTable(spec, sites, values, two_s=two_s)


def build_dipolar_couplings(spec: LatticeSpec, direction: FieldDirection,
                            constants: DipolarConstants | None = None) -> CouplingTable:
    """All-to-all truncated dipolar couplings on an odd cubic lattice.

    Every pair carries Jz = (1 - 3 cos^2 theta) / r^3 in units of
    g^2 hbar^2 / a0^3, with r and theta taken from the minimum-image
    displacement and the field direction, and Jx = Jy = -Jz / 2.  Even
    extents are rejected: they create equidistant-image ties that make
    the minimum-image sum ambiguous.  The table is tagged quantum
    spin-1/2 (the physical nuclei); rescale_to_classical produces the
    matching classical table.
    """
    dims = spec.dimensions
    if len(dims) != 3:
        raise ConfigError("dipolar builds require a 3-axis lattice")
    if any(d % 2 == 0 for d in dims):
        raise ConfigError(f"dipolar builds require odd extents, got {dims}")
    if any(d < 3 for d in dims):
        raise ConfigError(f"dipolar builds require extents >= 3, got {dims}")

    coords = spec.site_coordinates().astype(float)
    n = spec.n_sites
    m_idx, n_idx = np.triu_indices(n, k=1)
    d = coords[n_idx] - coords[m_idx]
    for axis, extent in enumerate(dims):
        d[:, axis] -= extent * np.round(d[:, axis] / extent)
    r2 = (d**2).sum(axis=1)
    cos_t = d @ direction.unit_vector / np.sqrt(r2)
    jz = (1.0 - 3.0 * cos_t**2) / r2**1.5
    values = np.stack([-jz / 2.0, -jz / 2.0, jz], axis=1)
    sites = np.stack([m_idx, n_idx], axis=1).astype(np.int64)
    return CouplingTable(spec, sites, values, two_s=1)


def rescale_to_classical(table: CouplingTable) -> CouplingTable:
    """Multiply a quantum table's couplings by sqrt(S(S+1)).

    The rescaled classical lattice has the same correlation time and
    the same short-time evolution as the quantum one.
    """
    if table.classical:
        raise ConfigError("table is already classical")
    s = table.two_s / 2.0
    factor = np.sqrt(s * (s + 1.0))
    return CouplingTable(table.spec, table.sites.copy(), table.values * factor, two_s=None)


def _site_variances(table: CouplingTable) -> np.ndarray:
    per_site = table.neighbor_square_sums()
    if per_site.max() == 0.0:
        raise NoDynamicsError("all couplings vanish; no spin dynamics")
    spread = np.ptp(per_site)
    if spread > 1e-10 * per_site.max():
        raise ConfigError("coupling table is not translationally invariant across sites")
    return per_site


def characteristic_time(table: CouplingTable) -> float:
    """Inverse root-mean-square local field, the fastest dynamical scale.

    Uses <(S^alpha)^2> = 1/3 for classical unit vectors and S(S+1)/3 for
    quantum spin S; identical on every site by translational invariance.
    """
    per_site = _site_variances(table)
    if table.classical:
        msq = 1.0 / 3.0
    else:
        s = table.two_s / 2.0
        msq = s * (s + 1.0) / 3.0
    return float(1.0 / np.sqrt(per_site[0] * msq))


def effective_neighbors(table: CouplingTable) -> float:
    """Participation ratio of neighbor contributions to the local-field variance.

    Equals the plain neighbor count for uniform nearest-neighbor tables;
    for dipolar tables it measures how many neighbors interact strongly.
    """
    _site_variances(table)
    q = (table.values**2).sum(axis=1)
    s1 = np.zeros(table.spec.n_sites)
    s2 = np.zeros(table.spec.n_sites)
    np.add.at(s1, table.sites[:, 0], q)
    np.add.at(s1, table.sites[:, 1], q)
    np.add.at(s2, table.sites[:, 0], q**2)
    np.add.at(s2, table.sites[:, 1], q**2)
    vals = s1**2 / s2
    return float(vals[0])


def save_couplings(table: CouplingTable, path) -> None:
    """Write the documented plain-text pair format (bit-exact round trip)."""
    with open(path, "w") as fh:
        fh.write("# coupling table\n")
        fh.write("# dimensions: " + " ".join(str(d) for d in table.spec.dimensions) + "\n")
        fh.write(f"# spin: {spin_label(table.two_s)}\n")
        fh.write("# units: dimensionless (multiples of the coupling energy scale)\n")
        fh.write(f"# pairs: {table.n_pairs}\n")
        for (m, n), (jx, jy, jz) in zip(table.sites, table.values):
            fh.write(f"{m} {n} {jx:.17g} {jy:.17g} {jz:.17g}\n")


def load_couplings(path) -> CouplingTable:
    dims = None
    two_s = None
    sites = []
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("dimensions:"):
                    dims = tuple(int(x) for x in body.split(":", 1)[1].split())
                elif body.startswith("spin:"):
                    tag = body.split(":", 1)[1].strip()
                    if tag == "classical":
                        two_s = None
                    elif tag.startswith("quantum"):
                        two_s = int(2 * Fraction(tag.split()[1]))
                    else:
                        raise ConfigError(f"unknown spin tag {tag!r}")
                continue
            parts = line.split()
            sites.append((int(parts[0]), int(parts[1])))
            values.append(tuple(float(x) for x in parts[2:5]))
    if dims is None:
        raise ConfigError(f"{path}: missing dimensions header")
    return CouplingTable(LatticeSpec(dims), np.array(sites, dtype=np.int64),
                         np.array(values), two_s=two_s)
