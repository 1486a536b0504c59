"""Simulation and threshold classification for the NLS with a point nonlinearity

    i u_t + u_xx + delta(x) |u|^{p-1} u = 0,   p > 3.
"""

from .classifier import (DynamicsClassifier, DynamicsVerdict, Label, RenormalizedFeatures,
                         RenormalizedQuantities, classify, classify_evolving, classify_field,
                         renormalize)
from .detectors import (BlowupCaps, BlowupEvent, BlowupMonitor, BlowupTrigger, ScatterEvidence,
                        cs_inequality_check, detect_blowup, local_virial, scatter_evidence,
                        virial_at_zero, virial_consistency, virial_residuals)
from .evolution import (BoundaryMonitor, EvolutionState, TimeSeries, evolve, evolve_field,
                        evolve_reversed, free_propagate, step_cn, step_split)
from .exceptions import (DeltaNLSError, InternalError, InvalidArgumentError, NotApplicableError,
                         PropagationError, StepFailure, UnsupportedRegimeError)
from .functionals import (FunctionalSnapshot, GroundStateRef, coercivity_deficit, critical_exponents,
                          energy, gn_deficit, ground_state_ref, kinetic_energy, mass, point_action,
                          rescale, snapshot, variance, variance_flux)
from .grid import (Grid, PhysParams, Scheme, WaveField, make_grid, sample_gaussian,
                   sample_ground_state, sample_phase_modulated)
from .harness import ExperimentConfig, Outcome, RunReport, report_constants, run, sweep
from .volterra import BoundaryTrace, boundary_trace_volterra, free_trace, free_value, reconstruct_from_trace

__version__ = "0.1.0"
