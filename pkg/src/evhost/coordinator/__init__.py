from .ilp import IlpModel, build_ilp
from .oracle import OracleSizeError, brute_force_oracle
from .solver import SolverError, solve
from .types import ChargingSchedule, CoordinationResult, SolveStats, Status, SwitchIndicators
from .verify import Violation, verify_schedule

__all__ = [
    "ChargingSchedule", "CoordinationResult", "IlpModel", "OracleSizeError", "SolveStats",
    "SolverError", "Status", "SwitchIndicators", "Violation", "brute_force_oracle",
    "build_ilp", "solve", "verify_schedule",
]
