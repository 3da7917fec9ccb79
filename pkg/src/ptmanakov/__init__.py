"""Simulation and verification tools for PT-symmetric coupled cubic Schrodinger equations."""

from .diagnostics import (DiagnosticsSample, EnvelopeReport, apriori_envelopes, balance_rates,
                          energy, gradient_norm, mass, motion_constant, predicted_mass, q_max,
                          q_max_of, read_timeseries, sample, stokes, write_timeseries)
from .dimer import (DimerState, DimerTrajectory, gauge_reduce, integrate_dimer,
                    inverse_gauge, linear_dimer_exact, linear_propagator)
from .evolution import (BlowUpThresholds, BlowUpVerdict, StepScheme, Trajectory,
                        blow_up_monitor, evolve, global_existence_classifier,
                        reduced_initial_data, reduction_persistence, scalar_energy,
                        scalar_reduction_residual, step)
from .exceptions import *  # noqa: F401,F403
from .fields import (Grid, Params, State, gaussian_profile, gaussian_state, pt_map,
                     read_snapshot, uniform_grid, write_snapshot)
from .townes import RadialProfile, profile_integrals, townes_constants, townes_profile

__version__ = "0.1.0"
