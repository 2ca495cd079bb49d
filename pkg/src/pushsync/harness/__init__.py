from pushsync.harness.diff import (
    COMPRESSION_COEFFICIENT,
    DiffReport,
    PayloadReport,
    payload_accounting,
    recursive_diff,
)
from pushsync.harness.experiments import PRESETS, Check, ExperimentResult, run_preset
from pushsync.harness.simulation import (
    DEFAULT_DESTINATIONS,
    DestinationResult,
    DestinationSpec,
    RunReport,
    pick_drop_uris,
    run_experiment,
)
from pushsync.harness.workload import Workload, WorkloadConfig, generate_workload

__all__ = [
    "Check",
    "DEFAULT_DESTINATIONS",
    "DestinationResult",
    "DestinationSpec",
    "DiffReport",
    "ExperimentResult",
    "COMPRESSION_COEFFICIENT",
    "PRESETS",
    "PayloadReport",
    "RunReport",
    "Workload",
    "WorkloadConfig",
    "generate_workload",
    "payload_accounting",
    "pick_drop_uris",
    "recursive_diff",
    "run_experiment",
    "run_preset",
]
