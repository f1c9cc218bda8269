"""Two-spin long-lived singlet state simulator."""

__version__ = "0.1.0"

from .calibration import RateCalibration, calibrate_rates
from .ensemble import ZEnsemble
from .errors import ConfigError, PhysicsError, ProgramError, SimulationError
from .evolution import Trajectory, evolve_coherent, evolve_dissipative, run_program
from .experiments import (
    DiffusionSettings,
    ExperimentCurve,
    run_diffusion_experiment,
    run_lifetime_experiment,
)
from .fitting import (
    GaussianAttenuationRegressor,
    InversionRecoveryRegressor,
    MonoExponentialRegressor,
    fit_gaussian_attenuation,
    fit_inversion_recovery,
    fit_monoexponential,
)
from .program import Acquire, CpmgBlock, Delay, Gradient, Lock, Pulse, PulseProgram, StorageMarker
from .pulselang import parse_program, serialize
from .relaxation import NO_RELAXATION, RelaxationChannel, RelaxationModel
from .sample import OrderParameterMap, PhaseSchedule, system_at, transition_ramp
from .sequences import cl_cl, cpmg, m2s, m2s_s2m, resonance_params, s2m, stellar
from .spectrum import stick_spectrum
from .spin import SpinSystem, hamiltonian, observable, singlet_order, thermal_deviation
