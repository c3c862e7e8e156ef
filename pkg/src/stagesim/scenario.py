"""Scenario files: fail-closed validation and assembly into simulations.

A scenario is a JSON object. Unknown keys anywhere are an error, never a
warning, so typos cannot silently fall back to defaults. A scenario may name
a preset; explicit keys then override the preset's values key by key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .engine import Simulation, modeled_capacity, scale_to_overload
from .errors import InvalidScenario, ParseError, SchemaError
from .gpu import BatchingCurve, GpuConfig, Policy
from .model import Priority, StageProfile, TaskSpec, build_task_set
from .presets import (
    WORKLOADS,
    build_profile_tasks,
    get_profile,
    get_scenario_preset,
)
from .scheduler import AblationFlags, SchedulerMode
from .timing import DEFAULT_FULL_LOAD_REPS, DEFAULT_WINDOW_SIZE

_TOP_KEYS = {
    "preset", "gpu", "workload", "overload_factor", "seed", "duration",
    "warmup_frac", "ws", "full_load_reps", "ablations", "hpa", "phasing",
    "placement_order", "edf_on_job_deadline", "out", "event_log",
}
_GPU_KEYS = {"total_sms", "n_contexts", "n_streams", "oversubscription",
             "policy", "kappa"}
_WORKLOAD_KEYS = {"preset", "hp_count", "lp_count", "task_jps", "batch_size", "tasks"}
_TASK_KEYS = {"id", "period", "priority", "stages", "batch_size", "batching"}
_STAGE_KEYS = {"nominal_time", "width"}
_BATCHING_KEYS = {"reference_batch", "reference_gain"}


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where} must be an object, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _number(obj: dict, key: str, where: str, default=None):
    value = obj.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}.{key} must be a number, got {value!r}")
    return value


def _integer(obj: dict, key: str, where: str, default=None):
    value = obj.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}.{key} must be an integer, got {value!r}")
    return value


def _boolean(obj: dict, key: str, where: str, default: bool) -> bool:
    value = obj.get(key, default)
    if not isinstance(value, bool):
        raise SchemaError(f"{where}.{key} must be a boolean, got {value!r}")
    return value


def _string(obj: dict, key: str, where: str, default=None):
    value = obj.get(key, default)
    if value is None:
        return None
    if not isinstance(value, str):
        raise SchemaError(f"{where}.{key} must be a string, got {value!r}")
    return value


@dataclass
class ScenarioConfig:
    """Everything one run needs, already validated."""

    gpu: GpuConfig
    tasks: list[TaskSpec]
    batch_sizes: dict[int, int] = field(default_factory=dict)
    curves: dict[int, BatchingCurve] = field(default_factory=dict)
    overload_factor: float | None = None
    seed: int = 0
    duration: float = 60.0
    warmup_frac: float = 0.1
    window_size: int = DEFAULT_WINDOW_SIZE
    full_load_reps: int = DEFAULT_FULL_LOAD_REPS
    flags: AblationFlags = AblationFlags()
    hpa: bool = False
    phasing: str = "random"
    placement_order: str = "descending_util"
    edf_on_job_deadline: bool = False
    out: str | None = None
    event_log: str | None = None

    def with_gpu(self, **fields) -> "ScenarioConfig":
        """Copy of this config with some GPU fields replaced."""
        return replace(self, gpu=replace(self.gpu, **fields))


def _merge_preset(data: dict) -> dict:
    preset_name = data.get("preset")
    if preset_name is None:
        return data
    if not isinstance(preset_name, str):
        raise SchemaError(f"preset must be a string, got {preset_name!r}")
    base = get_scenario_preset(preset_name)
    merged = {k: v for k, v in base.items()}
    for key, value in data.items():
        if key == "preset":
            continue
        if key in ("gpu", "workload") and isinstance(value, dict) and key in merged:
            nested = dict(merged[key])
            nested.update(value)
            merged[key] = nested
        else:
            merged[key] = value
    return merged


def _parse_gpu(obj: dict) -> GpuConfig:
    _check_keys(obj, _GPU_KEYS, "gpu")
    policy_name = _string(obj, "policy", "gpu", "mps-str")
    try:
        policy = Policy(policy_name)
    except ValueError:
        raise SchemaError(f"gpu.policy must be one of "
                          f"{[p.value for p in Policy]}, got {policy_name!r}") from None
    try:
        return GpuConfig(
            total_sms=_integer(obj, "total_sms", "gpu", 68),
            n_contexts=_integer(obj, "n_contexts", "gpu", 1),
            n_streams=_integer(obj, "n_streams", "gpu", 1),
            oversubscription=float(_number(obj, "oversubscription", "gpu", 1.0)),
            policy=policy,
            interference_kappa=float(_number(obj, "kappa", "gpu", 0.0)),
        )
    except ValueError as exc:
        raise InvalidScenario(str(exc)) from exc


def _parse_workload(obj: dict, total_sms: int):
    """Returns (tasks, batch_sizes, curves)."""
    _check_keys(obj, _WORKLOAD_KEYS, "workload")
    if "tasks" in obj:
        if "preset" in obj:
            raise SchemaError("workload takes either a preset or explicit tasks, not both")
        return _parse_explicit_tasks(obj["tasks"])

    name = _string(obj, "preset", "workload")
    if name is None:
        raise SchemaError("workload needs a preset name or an explicit task list")
    if name not in WORKLOADS:
        # single profile names are also valid workload names
        get_profile(name)  # raises UnknownPreset if truly unknown
    rows = WORKLOADS.get(name, [(name, 0, 0, 24.0)])

    batch_key = obj.get("batch_size", 1)
    if name == "mixed" and ("hp_count" in obj or "lp_count" in obj or "task_jps" in obj):
        raise SchemaError("the mixed workload fixes its own counts and rates")

    tasks: list[TaskSpec] = []
    batch_sizes: dict[int, int] = {}
    curves: dict[int, BatchingCurve] = {}
    next_id = 1
    for profile_name, hp_default, lp_default, jps_default in rows:
        profile = get_profile(profile_name)
        hp = _integer(obj, "hp_count", "workload", hp_default) if len(rows) == 1 else hp_default
        lp = _integer(obj, "lp_count", "workload", lp_default) if len(rows) == 1 else lp_default
        jps = _number(obj, "task_jps", "workload", jps_default) if len(rows) == 1 else jps_default
        if hp < 0 or lp < 0:
            raise SchemaError("workload counts must be >= 0")
        if jps <= 0:
            raise SchemaError("workload.task_jps must be positive")
        if batch_key == "profile":
            batch = profile.default_batch
        elif isinstance(batch_key, int) and not isinstance(batch_key, bool) and batch_key >= 1:
            batch = batch_key
        else:
            raise SchemaError(f"workload.batch_size must be an integer >= 1 or "
                              f"'profile', got {batch_key!r}")
        group = build_profile_tasks(profile, hp, lp, jps, total_sms, start_id=next_id)
        for t in group:
            batch_sizes[t.id] = batch
            curves[t.id] = profile.batching
        tasks.extend(group)
        next_id += len(group)
    return tasks, batch_sizes, curves


def _parse_explicit_tasks(items) -> tuple[list[TaskSpec], dict, dict]:
    if not isinstance(items, list):
        raise SchemaError("workload.tasks must be a list")
    tasks: list[TaskSpec] = []
    batch_sizes: dict[int, int] = {}
    curves: dict[int, BatchingCurve] = {}
    explicit_ids = any(isinstance(item, dict) and "id" in item for item in items)
    for pos, item in enumerate(items):
        where = f"workload.tasks[{pos}]"
        _check_keys(item, _TASK_KEYS, where)
        task_id = _integer(item, "id", where, None if explicit_ids else pos + 1)
        if task_id is None:
            raise SchemaError(f"{where}: give every task an id or none of them")
        period = _number(item, "period", where)
        if period is None or period <= 0:
            raise SchemaError(f"{where}.period must be a positive number")
        pri_name = _string(item, "priority", where)
        if pri_name not in ("hp", "lp"):
            raise SchemaError(f"{where}.priority must be 'hp' or 'lp', got {pri_name!r}")
        stages_raw = item.get("stages")
        if not isinstance(stages_raw, list) or not stages_raw:
            raise SchemaError(f"{where}.stages must be a non-empty list")
        stages = []
        for j, sobj in enumerate(stages_raw):
            swhere = f"{where}.stages[{j}]"
            _check_keys(sobj, _STAGE_KEYS, swhere)
            nominal = _number(sobj, "nominal_time", swhere)
            width = _integer(sobj, "width", swhere)
            if nominal is None or width is None:
                raise SchemaError(f"{swhere} needs nominal_time and width")
            stages.append(StageProfile(float(nominal), width))
        priority = Priority.HP if pri_name == "hp" else Priority.LP
        tasks.append(TaskSpec.periodic(task_id, float(period), priority, stages))
        batch = _integer(item, "batch_size", where, 1)
        if batch < 1:
            raise SchemaError(f"{where}.batch_size must be >= 1")
        batch_sizes[task_id] = batch
        if "batching" in item:
            bobj = item["batching"]
            _check_keys(bobj, _BATCHING_KEYS, f"{where}.batching")
            curves[task_id] = BatchingCurve(
                _integer(bobj, "reference_batch", f"{where}.batching"),
                float(_number(bobj, "reference_gain", f"{where}.batching")),
            )
    return tasks, batch_sizes, curves


def scenario_from_dict(data: dict) -> ScenarioConfig:
    _check_keys(data, _TOP_KEYS, "scenario")
    data = _merge_preset(data)
    _check_keys(data, _TOP_KEYS - {"preset"}, "scenario")

    gpu = _parse_gpu(data.get("gpu", {}))
    workload = data.get("workload")
    if workload is None:
        tasks: list[TaskSpec] = []
        batch_sizes: dict[int, int] = {}
        curves: dict[int, BatchingCurve] = {}
    else:
        tasks, batch_sizes, curves = _parse_workload(workload, gpu.total_sms)

    overload = _number(data, "overload_factor", "scenario")
    if overload is not None and overload <= 0:
        raise SchemaError("overload_factor must be positive")

    duration = _number(data, "duration", "scenario", 60.0)
    warmup = _number(data, "warmup_frac", "scenario", 0.1)
    window = _integer(data, "ws", "scenario", DEFAULT_WINDOW_SIZE)
    reps = _integer(data, "full_load_reps", "scenario", DEFAULT_FULL_LOAD_REPS)
    if duration <= 0:
        raise SchemaError("duration must be positive")
    if not (0.0 <= warmup < 1.0):
        raise SchemaError("warmup_frac must lie in [0, 1)")
    if window < 1:
        raise SchemaError("ws must be >= 1")
    if reps < 1:
        raise SchemaError("full_load_reps must be >= 1")

    ablations_raw = data.get("ablations", [])
    if not isinstance(ablations_raw, list) or \
            not all(isinstance(a, str) for a in ablations_raw):
        raise SchemaError("ablations must be a list of strings")
    try:
        flags = AblationFlags.from_names(ablations_raw)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc

    phasing = _string(data, "phasing", "scenario", "random")
    if phasing not in ("random", "zero"):
        raise SchemaError(f"phasing must be 'random' or 'zero', got {phasing!r}")
    order = _string(data, "placement_order", "scenario", "descending_util")
    if order not in ("descending_util", "insertion"):
        raise SchemaError(f"placement_order must be 'descending_util' or "
                          f"'insertion', got {order!r}")

    if tasks:
        build_task_set(tasks)  # validates ids, stages, periods

    return ScenarioConfig(
        gpu=gpu,
        tasks=tasks,
        batch_sizes=batch_sizes,
        curves=curves,
        overload_factor=float(overload) if overload is not None else None,
        seed=_integer(data, "seed", "scenario", 0),
        duration=float(duration),
        warmup_frac=float(warmup),
        window_size=window,
        full_load_reps=reps,
        flags=flags,
        hpa=_boolean(data, "hpa", "scenario", False),
        phasing=phasing,
        placement_order=order,
        edf_on_job_deadline=_boolean(data, "edf_on_job_deadline", "scenario", False),
        out=_string(data, "out", "scenario"),
        event_log=_string(data, "event_log", "scenario"),
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("a scenario file must hold a JSON object")
    return scenario_from_dict(data)


def build_simulation(cfg: ScenarioConfig, *, collect_log: bool = True,
                     check_invariants: bool = False) -> Simulation:
    """Turn a validated scenario into a runnable simulation.

    Overload scaling happens here: when a factor is set, periods are rescaled
    against the modeled capacity of the configured device.
    """
    tasks = cfg.tasks
    if cfg.overload_factor is not None and tasks:
        capacity = modeled_capacity(cfg.gpu, tasks, cfg.batch_sizes, cfg.curves)
        tasks = scale_to_overload(tasks, cfg.overload_factor, capacity,
                                  cfg.batch_sizes, cfg.curves)
    return Simulation(
        tasks,
        cfg.gpu,
        seed=cfg.seed,
        duration=cfg.duration,
        warmup_frac=cfg.warmup_frac,
        window_size=cfg.window_size,
        full_load_reps=cfg.full_load_reps,
        batch_sizes=cfg.batch_sizes,
        curves=cfg.curves,
        flags=cfg.flags,
        mode=SchedulerMode(hpa_enabled=cfg.hpa),
        phasing=cfg.phasing,
        placement_order=cfg.placement_order,
        edf_on_job_deadline=cfg.edf_on_job_deadline,
        collect_log=collect_log,
        check_invariants=check_invariants,
    )
