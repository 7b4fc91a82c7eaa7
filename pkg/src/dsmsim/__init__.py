"""Deterministic distributed shared memory simulator with checkpoint/rollback and history checkers."""

from .checkers import (
    History,
    Verdict,
    check_causal_plus,
    check_convergence,
    check_eventual,
    check_exactly_once,
    check_linearizable,
    check_sequential,
)
from .checkpoint import CheckpointCostReport, CheckpointRecord
from .engines import EngineKind
from .errors import DsmError, MarkerAuditError, ProtocolViolation, ScenarioError
from .harness import RunReport, compare_costs, rollback_test, run, sweep
from .scenario import Scenario, generate_scenario, load_scenario, parse_scenario
from .search import BACKEND as SEARCH_BACKEND
from .simulation import Simulation
from .types import BOTTOM, Operation, OperationRecord, ReplicaState, TaggedValue, UpdateTag, apply_if_newer

__version__ = "0.1.0"

__all__ = [
    "BOTTOM", "CheckpointCostReport", "CheckpointRecord", "DsmError", "EngineKind", "History",
    "MarkerAuditError", "Operation", "OperationRecord", "ProtocolViolation", "ReplicaState", "RunReport",
    "SEARCH_BACKEND", "Scenario", "ScenarioError", "Simulation", "TaggedValue", "UpdateTag", "Verdict",
    "apply_if_newer", "check_causal_plus", "check_convergence", "check_eventual", "check_exactly_once",
    "check_linearizable", "check_sequential", "compare_costs", "generate_scenario", "load_scenario",
    "parse_scenario", "rollback_test", "run", "sweep",
]
