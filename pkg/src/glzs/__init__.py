"""Geometric Landau-Zener-Stückelberg interferometry on a driven two-level system."""
from .bloch import (DOWN, UP, DegenerateFieldError, EigenPair, FieldPoint, StateVector,
                    Unitary2, adiabatic_eigenbasis, adiabatic_populations, bloch_vector,
                    canonicalize, field_components, step_propagator)
from .evolve import (ErrorOffsets, IntegratorConfig, ShotResult, Trajectory,
                     apply_static_error, evolve, final_state, measure_up, prep_error)
from .kernels import BACKEND
from .schedule import (DeltaRamp, EchoPulse, GlzsParams, Hold, OmegaSweep, PhiJump, PhiRamp,
                       Schedule, ThetaRamp, build_adiabatic_rotation, build_glzs,
                       build_lz_sweep, field_at, sample_waveform, validate)

__version__ = "0.1.0"
