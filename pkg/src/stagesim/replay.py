"""Independent event-log checks.

Everything here recomputes results from the raw log alone, on purpose not
sharing any code with the engine's online accumulator. Tests compare the two
paths for exact equality.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

from .model import Priority, TaskSpec

_RELEASE_KINDS = {"release", "admit", "reject"}


def _as_tuple(record) -> tuple:
    if isinstance(record, Mapping):
        return (record["time"], record["kind"], record["task"], record["job"],
                record["stage"], record["context"], record["stream"], record["rate"])
    return tuple(record)


def replay_metrics(
    records: Iterable,
    tasks: Sequence[TaskSpec],
    *,
    duration: float,
    warmup_end: float,
    batch_sizes: Mapping[int, int] | None = None,
) -> dict:
    """Rebuild the headline metrics from the event log.

    Returns a dict with the same counter and statistics fields the engine
    reports, computed from scratch: releases, admissions and rejections from
    their records, responses and deadline misses from completion times
    against release times plus the task deadline.
    """
    batch_sizes = batch_sizes or {}
    spec_by_id = {t.id: t for t in tasks}
    release_time: dict[int, float] = {}
    release_counted: dict[int, bool] = {}

    released = {Priority.HP: 0, Priority.LP: 0}
    accepted = {Priority.HP: 0, Priority.LP: 0}
    rejected = {Priority.HP: 0, Priority.LP: 0}
    completed = {Priority.HP: 0, Priority.LP: 0}
    missed = {Priority.HP: 0, Priority.LP: 0}
    responses = {Priority.HP: [], Priority.LP: []}
    completed_inputs = 0

    for record in records:
        time, kind, task_id, job_id, _stage, _ctx, _stream, _rate = _as_tuple(record)
        if kind == "release":
            release_time[job_id] = time
            release_counted[job_id] = time >= warmup_end
            if release_counted[job_id]:
                released[spec_by_id[task_id].priority] += 1
        elif kind == "admit":
            if release_counted[job_id]:
                accepted[spec_by_id[task_id].priority] += 1
        elif kind == "reject":
            if release_counted[job_id]:
                rejected[spec_by_id[task_id].priority] += 1
        elif kind == "job_complete":
            if not release_counted[job_id]:
                continue
            spec = spec_by_id[task_id]
            completed[spec.priority] += 1
            completed_inputs += batch_sizes.get(task_id, 1)
            responses[spec.priority].append(time - release_time[job_id])
            if time > release_time[job_id] + spec.deadline:
                missed[spec.priority] += 1

    window = duration - warmup_end
    jps = completed_inputs / window if window > 0 else 0.0

    def stats(samples: list[float]) -> dict:
        if not samples:
            return {"mean": 0.0, "min": 0.0, "max": 0.0, "p95": 0.0, "count": 0}
        ordered = sorted(samples)
        return {
            "mean": sum(ordered) / len(ordered),
            "min": ordered[0],
            "max": ordered[-1],
            "p95": ordered[math.ceil(0.95 * len(ordered)) - 1],
            "count": len(ordered),
        }

    def rate(n: int, d: int) -> float:
        return n / d if d else 0.0

    return {
        "jps": jps,
        "dmr_hp": rate(missed[Priority.HP], accepted[Priority.HP]),
        "dmr_lp": rate(missed[Priority.LP], accepted[Priority.LP]),
        "response_hp": stats(responses[Priority.HP]),
        "response_lp": stats(responses[Priority.LP]),
        "released_hp": released[Priority.HP],
        "released_lp": released[Priority.LP],
        "accepted_hp": accepted[Priority.HP],
        "accepted_lp": accepted[Priority.LP],
        "rejected_hp": rejected[Priority.HP],
        "rejected_lp": rejected[Priority.LP],
        "completed_hp": completed[Priority.HP],
        "completed_lp": completed[Priority.LP],
        "missed_hp": missed[Priority.HP],
        "missed_lp": missed[Priority.LP],
    }


def compare_with_report(replayed: dict, report) -> list[str]:
    """Exact field-by-field comparison; returns human-readable mismatches."""
    mismatches = []
    actual = report.to_dict()
    for key, value in replayed.items():
        if actual[key] != value:
            mismatches.append(f"{key}: log replay {value!r} != accumulator {actual[key]!r}")
    return mismatches


def check_event_order(records: Iterable, duration: float) -> None:
    """Times must never decrease, never pass the horizon, and releases come
    before completions within one timestamp."""
    last_time = -math.inf
    saw_completion_at = None
    for record in records:
        time, kind, *_ = _as_tuple(record)
        if time < last_time:
            raise AssertionError(f"event log goes backwards at t={time}")
        if time > duration:
            raise AssertionError(f"event at t={time} beyond the horizon {duration}")
        if time > last_time:
            saw_completion_at = None
        last_time = time
        if kind in ("stage_complete", "job_complete"):
            saw_completion_at = time
        elif kind in _RELEASE_KINDS and saw_completion_at == time:
            raise AssertionError(f"release after completion at t={time}")


def check_work_conservation(
    records: Iterable,
    tasks: Sequence[TaskSpec],
    *,
    n_contexts: int,
    n_streams: int,
) -> None:
    """No context may idle a stream while it has a ready stage.

    Replays placements, stage starts and completions; after each timestamp's
    burst of events, every context with ready work must have all streams busy
    or no ready stages left.
    """
    stage_count = {t.id: len(t.stages) for t in tasks}
    placement: dict[int, int] = {}            # job -> context
    job_task: dict[int, int] = {}
    ready: dict[int, set] = {k: set() for k in range(1, n_contexts + 1)}
    busy: dict[int, set] = {k: set() for k in range(1, n_contexts + 1)}

    def settle(at_time: float) -> None:
        for ctx_id in ready:
            if ready[ctx_id] and len(busy[ctx_id]) < n_streams:
                raise AssertionError(
                    f"context {ctx_id} idles {n_streams - len(busy[ctx_id])} stream(s) "
                    f"while {len(ready[ctx_id])} stage(s) are ready at t={at_time}"
                )

    current_time = None
    for record in records:
        time, kind, task_id, job_id, stage, ctx_id, stream, _rate = _as_tuple(record)
        if current_time is not None and time != current_time:
            settle(current_time)
        current_time = time

        if kind == "admit":
            placement[job_id] = ctx_id
            job_task[job_id] = task_id
            ready[ctx_id].add((job_id, 0))
        elif kind == "stage_start":
            ready[ctx_id].discard((job_id, stage))
            busy[ctx_id].add(stream)
        elif kind == "stage_complete":
            busy[ctx_id].discard(stream)
            if stage + 1 < stage_count[task_id]:
                ready[placement[job_id]].add((job_id, stage + 1))
    if current_time is not None:
        settle(current_time)


def check_admission_audit(result) -> None:
    """Every low-priority job that ever started must hold a passing test.

    Cross-checks the engine's admission trail against the event log: the
    recorded decision must be internally consistent (admitted iff the strict
    inequality held) and every started job needs an admitting record.
    """
    for decision in result.admissions:
        held = decision.active_util + decision.job_util < decision.limit
        if held != decision.admitted:
            raise AssertionError(
                f"admission record for job {decision.job_id} in context "
                f"{decision.context} claims admitted={decision.admitted} but the "
                f"test value is {held}"
            )
    admitted_jobs = {d.job_id for d in result.admissions if d.admitted}
    lp_ids = {t.id for t in result.effective_tasks if t.priority is Priority.LP}
    for record in result.records:
        time, kind, task_id, job_id, *_ = _as_tuple(record)
        if kind == "stage_start" and task_id in lp_ids:
            if job_id not in admitted_jobs:
                raise AssertionError(
                    f"low-priority job {job_id} started at t={time} without a "
                    f"passing admission test"
                )
