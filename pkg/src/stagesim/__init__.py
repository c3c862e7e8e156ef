"""Discrete-event simulator for staged DNN inference on a partitioned GPU.

The package models a GPU split into contexts and streams, admits periodic
inference tasks under two priority classes, tracks per-stage execution
history, and schedules stages with earliest-deadline dispatch inside fixed
priority levels.
"""

from .engine import (
    EventKind,
    LogRecord,
    MetricsReport,
    ResponseStats,
    SimResult,
    Simulation,
    format_label,
    modeled_capacity,
    parse_label,
    scale_to_overload,
)
from .errors import SimulatorError
from .gpu import (
    BatchingCurve,
    GpuConfig,
    Policy,
    allocate_rates,
    ceil_even,
    effective_stage_time,
    sm_per_context,
    water_fill,
)
from .model import (
    Job,
    Priority,
    StageJob,
    StageProfile,
    StageState,
    TaskSet,
    TaskSpec,
    TaskState,
    build_task_set,
    collapse_stages,
)
from .presets import (
    PROFILES,
    SCENARIO_PRESETS,
    build_profile_tasks,
    get_profile,
    get_scenario_preset,
    profile_stages,
)
from .replay import (
    check_admission_audit,
    check_event_order,
    check_work_conservation,
    compare_with_report,
    replay_metrics,
)
from .report import CSV_COLUMNS, emit_report, render_csv, render_json, report_row
from .scenario import (
    ScenarioConfig,
    build_simulation,
    load_scenario,
    scenario_from_dict,
)
from .scheduler import (
    AblationFlags,
    AdmissionDecision,
    Scheduler,
    SchedulerMode,
)
from .sweep import SweepSpec, expand_cells, load_sweep, run_sweep
from .timing import TimingTracker, measure_full_load_time

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "AdmissionDecision",
    "BatchingCurve",
    "CSV_COLUMNS",
    "EventKind",
    "GpuConfig",
    "Job",
    "LogRecord",
    "MetricsReport",
    "Policy",
    "Priority",
    "PROFILES",
    "ResponseStats",
    "SCENARIO_PRESETS",
    "ScenarioConfig",
    "Scheduler",
    "SchedulerMode",
    "SimResult",
    "Simulation",
    "SimulatorError",
    "StageJob",
    "StageProfile",
    "StageState",
    "SweepSpec",
    "TaskSet",
    "TaskSpec",
    "TaskState",
    "TimingTracker",
    "allocate_rates",
    "build_profile_tasks",
    "build_simulation",
    "build_task_set",
    "ceil_even",
    "check_admission_audit",
    "check_event_order",
    "check_work_conservation",
    "collapse_stages",
    "compare_with_report",
    "effective_stage_time",
    "emit_report",
    "expand_cells",
    "format_label",
    "get_profile",
    "get_scenario_preset",
    "load_scenario",
    "load_sweep",
    "measure_full_load_time",
    "modeled_capacity",
    "parse_label",
    "profile_stages",
    "render_csv",
    "render_json",
    "replay_metrics",
    "report_row",
    "run_sweep",
    "scale_to_overload",
    "scenario_from_dict",
    "sm_per_context",
    "water_fill",
]
