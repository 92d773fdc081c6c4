"""Battery models at three fidelities, degradation accounting and schedule optimisation."""

from .core import (
    BatteryError,
    CurrentSchedule,
    InfeasibleStepError,
    LimitViolationError,
    PowerSchedule,
    PriceSeries,
    TimeGrid,
    Trace,
    ValidationError,
    build_time_grid,
    pack_power,
)
from .ecm import EcmModel, EcmParams, EcmState, OcvCurve, ecm_simulate, ecm_step, ocv_eval
from .erm import ErmModel, ErmParams, ErmState, erm_available_charge_power, erm_simulate, erm_step
from .params import ParamSet, default_params, load_params
from .spm import (
    ElectrodeParams,
    OcpCurve,
    SpmModel,
    SpmParams,
    SpmState,
    spm_simulate,
    spm_soc,
    spm_step,
    terminal_voltage,
)

__version__ = "0.1.0"

__all__ = [
    "BatteryError", "CurrentSchedule", "EcmModel", "EcmParams", "EcmState", "ElectrodeParams",
    "ErmModel", "ErmParams", "ErmState", "InfeasibleStepError", "LimitViolationError",
    "OcpCurve", "OcvCurve", "ParamSet", "PowerSchedule", "PriceSeries", "SpmModel", "SpmParams",
    "SpmState", "TimeGrid", "Trace", "ValidationError", "build_time_grid", "default_params",
    "ecm_simulate", "ecm_step", "erm_available_charge_power", "erm_simulate", "erm_step",
    "load_params", "ocv_eval", "pack_power", "spm_simulate", "spm_soc", "spm_step",
    "terminal_voltage",
]
