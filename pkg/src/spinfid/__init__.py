"""spinfid: classical and quantum spin-lattice autocorrelation functions.

Computes infinite-temperature <Mx(t) Mx(0)> (the NMR free induction
decay) for periodic spin lattices, classically by ensemble integration
of the precession equations and quantum mechanically by random-state
trace estimation with an exact-diagonalization oracle, plus the
diagnostics (correlation time, effective neighbor count) and long-time
tail fits used to judge when the classical result reproduces the
quantum one.
"""

__version__ = "0.1.0"

from .analysis import (ComparisonReport, TailFit, compare_series, default_fit_window,
                       fit_long_time_tail, from_physical_units, normalize,
                       second_moment, to_physical_units)
from .classical import (IntegrationParams, classical_correlation, energy, gauss_step,
                        local_field, sample_random_state)
from .errors import (ConfigError, FitConvergenceError, NoDynamicsError, NumericalError,
                     ResourceLimitError)
from .lattice import (CouplingTable, DipolarConstants, FieldDirection, LatticeSpec,
                      build_dipolar_couplings, build_nearest_neighbor,
                      characteristic_time, effective_neighbors, load_couplings,
                      rescale_to_classical, save_couplings)
from .presets import PRESETS, ExperimentConfig, config_hash, dump_config, get_preset, parse_config
from .quantum import (HilbertSpec, apply_hamiltonian, apply_total_sx, dense_hamiltonian,
                      dense_total_sx, exact_correlation, propagate, quantum_correlation,
                      sample_typical_state, spectral_bound, spin_operators)
from .series import CorrelationSeries, load_csv, save_csv
from .streams import stream

__all__ = [name for name in dir() if not name.startswith("_")]
