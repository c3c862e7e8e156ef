"""Deterministic discrete-event engine.

One run works in two phases. Offline, every task's full-load baseline is
measured on the rate model and tasks are placed into contexts. Online, the
event loop interleaves job releases and stage completions; after every event
it refills free streams from the per-context ready queues, then recomputes
all rates, so predictions always reflect the current mix. Events at the same
timestamp process releases first, completions second, then the end marker.

Runs are bitwise deterministic for a given scenario and seed: all randomness
flows from one seeded generator, and every tie has an explicit order.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Sequence

from .errors import InvalidScenario
from .gpu import (
    BatchingCurve,
    ContextState,
    GpuConfig,
    allocate_rates,
    build_contexts,
    effective_stage_time,
    next_completion,
    advance_progress,
    sm_per_context,
)
from .model import (
    Job,
    Priority,
    StageState,
    TaskSpec,
    TaskState,
    collapse_stages,
    build_task_set,
    make_job,
)
from .scheduler import (
    AblationFlags,
    AdmissionDecision,
    Scheduler,
    SchedulerMode,
)
from .timing import (
    DEFAULT_FULL_LOAD_REPS,
    DEFAULT_WINDOW_SIZE,
    TimingTracker,
    measure_full_load_time,
)

_ALLOC_EPS = 1e-9


class EventKind(IntEnum):
    RELEASE = 0
    STAGE_COMPLETE = 1
    SIM_END = 2


class LogRecord(NamedTuple):
    """One line of the event log."""

    time: float
    kind: str        # release, admit, reject, stage_start, stage_complete, job_complete, sim_end
    task: int | None
    job: int | None
    stage: int | None
    context: int | None
    stream: int | None
    rate: float | None

    def to_dict(self) -> dict:
        return self._asdict()


def format_label(n_contexts: int, n_streams: int, oversubscription: float) -> str:
    """Partition notation: contexts x streams _ oversubscription, e.g. 6x1_6."""
    return f"{n_contexts}x{n_streams}_{oversubscription:g}"


def parse_label(label: str) -> tuple[int, int, float]:
    try:
        ctx_part, rest = label.split("x", 1)
        stream_part, os_part = rest.split("_", 1)
        return int(ctx_part), int(stream_part), float(os_part)
    except ValueError as exc:
        raise ValueError(f"malformed config label {label!r}") from exc


@dataclass(frozen=True)
class ResponseStats:
    mean: float = 0.0
    min: float = 0.0
    max: float = 0.0
    p95: float = 0.0
    count: int = 0

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "ResponseStats":
        if not samples:
            return cls()
        ordered = sorted(samples)
        n = len(ordered)
        p95 = ordered[math.ceil(0.95 * n) - 1]  # nearest-rank percentile
        return cls(sum(ordered) / n, ordered[0], ordered[-1], p95, n)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "min": self.min, "max": self.max,
                "p95": self.p95, "count": self.count}


@dataclass(frozen=True)
class MetricsReport:
    label: str
    policy: str
    n_contexts: int
    n_streams: int
    oversubscription: float
    seed: int
    duration: float
    warmup: float
    jps: float
    dmr_hp: float
    dmr_lp: float
    response_hp: ResponseStats
    response_lp: ResponseStats
    released_hp: int
    released_lp: int
    accepted_hp: int
    accepted_lp: int
    rejected_hp: int
    rejected_lp: int
    completed_hp: int
    completed_lp: int
    missed_hp: int
    missed_lp: int

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            out[name] = value.to_dict() if isinstance(value, ResponseStats) else value
        return out


class _Accumulator:
    """Online metrics over jobs released inside the measurement window."""

    def __init__(self, warmup_end: float):
        self.warmup_end = warmup_end
        self.released = {Priority.HP: 0, Priority.LP: 0}
        self.accepted = {Priority.HP: 0, Priority.LP: 0}
        self.rejected = {Priority.HP: 0, Priority.LP: 0}
        self.completed = {Priority.HP: 0, Priority.LP: 0}
        self.missed = {Priority.HP: 0, Priority.LP: 0}
        self.responses = {Priority.HP: [], Priority.LP: []}
        self.completed_inputs = 0  # completed jobs weighted by batch size

    def counts(self, release_time: float) -> bool:
        return release_time >= self.warmup_end

    def note_release(self, priority: Priority, release_time: float, admitted: bool) -> None:
        if not self.counts(release_time):
            return
        self.released[priority] += 1
        if admitted:
            self.accepted[priority] += 1
        else:
            self.rejected[priority] += 1

    def note_completion(self, priority: Priority, job: Job, now: float, missed: bool) -> None:
        if not self.counts(job.release_time):
            return
        self.completed[priority] += 1
        self.completed_inputs += job.batch_size
        self.responses[priority].append(now - job.release_time)
        if missed:
            self.missed[priority] += 1

    def finalize(self, *, label: str, config: GpuConfig, seed: int,
                 duration: float) -> MetricsReport:
        window = duration - self.warmup_end
        jps = self.completed_inputs / window if window > 0 else 0.0

        def dmr(priority: Priority) -> float:
            acc = self.accepted[priority]
            return self.missed[priority] / acc if acc else 0.0

        return MetricsReport(
            label=label,
            policy=config.policy.value,
            n_contexts=config.n_contexts,
            n_streams=config.n_streams,
            oversubscription=config.oversubscription,
            seed=seed,
            duration=duration,
            warmup=self.warmup_end,
            jps=jps,
            dmr_hp=dmr(Priority.HP),
            dmr_lp=dmr(Priority.LP),
            response_hp=ResponseStats.from_samples(self.responses[Priority.HP]),
            response_lp=ResponseStats.from_samples(self.responses[Priority.LP]),
            released_hp=self.released[Priority.HP],
            released_lp=self.released[Priority.LP],
            accepted_hp=self.accepted[Priority.HP],
            accepted_lp=self.accepted[Priority.LP],
            rejected_hp=self.rejected[Priority.HP],
            rejected_lp=self.rejected[Priority.LP],
            completed_hp=self.completed[Priority.HP],
            completed_lp=self.completed[Priority.LP],
            missed_hp=self.missed[Priority.HP],
            missed_lp=self.missed[Priority.LP],
        )


@dataclass
class SimResult:
    report: MetricsReport
    records: list[LogRecord]
    admissions: list[AdmissionDecision]
    effective_tasks: list[TaskSpec]
    full_load: dict[int, float]


def aggregate_demand(tasks: Sequence[TaskSpec],
                     batch_sizes: dict[int, int] | None = None,
                     curves: dict[int, BatchingCurve] | None = None) -> float:
    """Offered work in full-width seconds per second."""
    batch_sizes = batch_sizes or {}
    curves = curves or {}
    demand = 0.0
    for t in tasks:
        work = sum(
            effective_stage_time(p, batch_sizes.get(t.id, 1), curves.get(t.id))
            for p in t.stages
        )
        demand += work / t.period
    return demand


def modeled_capacity(config: GpuConfig, tasks: Sequence[TaskSpec],
                     batch_sizes: dict[int, int] | None = None,
                     curves: dict[int, BatchingCurve] | None = None) -> float:
    """Sustainable work rate of the GPU for this mix, in full-width seconds/s.

    Uses the demand-weighted mean stage width: each context can push at most
    min(streams, context_sms / width) work per second, and the device as a
    whole at most total_sms / width once cross-context scaling kicks in.
    """
    batch_sizes = batch_sizes or {}
    curves = curves or {}
    weighted = 0.0
    total_rate = 0.0
    for t in tasks:
        for p in t.stages:
            eff = effective_stage_time(p, batch_sizes.get(t.id, 1), curves.get(t.id))
            rate = eff / t.period
            weighted += rate * p.width
            total_rate += rate
    if total_rate <= 0:
        raise InvalidScenario("cannot size capacity for a task set without demand")
    mean_width = weighted / total_rate
    per_context = min(float(config.n_streams), sm_per_context(config) / mean_width)
    return min(config.n_contexts * per_context, config.total_sms / mean_width)


def scale_to_overload(tasks: Sequence[TaskSpec], factor: float, capacity: float,
                      batch_sizes: dict[int, int] | None = None,
                      curves: dict[int, BatchingCurve] | None = None) -> list[TaskSpec]:
    """Stretch or shrink every period uniformly until demand is factor * capacity.

    Only periods (and the deadlines tied to them) change, so class counts and
    their ratio are untouched. Doubling the factor halves every period.
    """
    if factor <= 0:
        raise InvalidScenario("overload factor must be positive")
    if capacity <= 0:
        raise InvalidScenario("capacity must be positive")
    demand = aggregate_demand(tasks, batch_sizes, curves)
    ratio = demand / (factor * capacity)
    return [
        TaskSpec(t.id, t.period * ratio, t.deadline * ratio, t.priority, t.stages)
        for t in tasks
    ]


class Simulation:
    """A single configured run; call run() once."""

    def __init__(
        self,
        tasks: Sequence[TaskSpec],
        config: GpuConfig,
        *,
        seed: int = 0,
        duration: float = 60.0,
        warmup_frac: float = 0.1,
        window_size: int = DEFAULT_WINDOW_SIZE,
        full_load_reps: int = DEFAULT_FULL_LOAD_REPS,
        batch_sizes: dict[int, int] | None = None,
        curves: dict[int, BatchingCurve] | None = None,
        flags: AblationFlags = AblationFlags(),
        mode: SchedulerMode = SchedulerMode(),
        phasing: str = "random",
        placement_order: str = "descending_util",
        edf_on_job_deadline: bool = False,
        collect_log: bool = True,
        check_invariants: bool = False,
    ):
        if duration <= 0:
            raise InvalidScenario("duration must be positive")
        if not (0.0 <= warmup_frac < 1.0):
            raise InvalidScenario("warmup fraction must lie in [0, 1)")
        if phasing not in ("random", "zero"):
            raise InvalidScenario(f"unknown phasing mode {phasing!r}")
        self.tasks = list(tasks)
        self.config = config
        self.seed = seed
        self.duration = duration
        self.warmup_end = duration * warmup_frac
        self.window_size = window_size
        self.full_load_reps = full_load_reps
        self.batch_sizes = dict(batch_sizes or {})
        self.curves = dict(curves or {})
        self.flags = flags
        self.mode = mode
        self.phasing = phasing
        self.placement_order = placement_order
        self.edf_on_job_deadline = edf_on_job_deadline
        self.collect_log = collect_log
        self.check_invariants = check_invariants

        for t in self.tasks:
            for p in t.stages:
                if p.width > config.total_sms:
                    raise InvalidScenario(
                        f"task {t.id} stage width {p.width} exceeds the device "
                        f"({config.total_sms} SMs)"
                    )

        self.label = format_label(config.n_contexts, config.n_streams,
                                  config.oversubscription)
        self.contexts: list[ContextState] = []
        self.tracker: TimingTracker | None = None
        self.scheduler: Scheduler | None = None
        self.states: dict[int, TaskState] = {}

    # --- offline phase ------------------------------------------------------

    def _measure_full_load(self, effective: list[TaskSpec]) -> dict[int, float]:
        """Baseline per task, measured once per distinct stage profile."""
        by_signature: dict[tuple, float] = {}
        result: dict[int, float] = {}
        order = 0
        for t in effective:
            signature = (t.stages, self.batch_sizes.get(t.id, 1),
                         self.curves.get(t.id))
            if signature not in by_signature:
                by_signature[signature] = measure_full_load_time(
                    t, effective, self.config,
                    repetitions=self.full_load_reps,
                    seed=self.seed * 7919 + order,
                    batch_sizes=self.batch_sizes,
                    curves=self.curves,
                )
                order += 1
            result[t.id] = by_signature[signature]
        return result

    # --- main loop ----------------------------------------------------------

    def run(self) -> SimResult:
        records: list[LogRecord] = []
        admissions: list[AdmissionDecision] = []
        acc = _Accumulator(self.warmup_end)

        def log(time: float, kind: str, task=None, job=None, stage=None,
                context=None, stream=None, rate=None) -> None:
            if self.collect_log:
                records.append(LogRecord(time, kind, task, job, stage,
                                         context, stream, rate))

        if not self.tasks:
            log(self.duration, "sim_end")
            report = acc.finalize(label=self.label, config=self.config,
                                  seed=self.seed, duration=self.duration)
            return SimResult(report, records, admissions, [], {})

        effective = list(build_task_set(self.tasks).tasks)
        if self.flags.no_staging:
            effective = list(collapse_stages(build_task_set(effective)).tasks)

        full_load = self._measure_full_load(effective)
        states = {t.id: TaskState.fresh(t, self.window_size) for t in effective}
        for task_id, baseline in full_load.items():
            states[task_id].full_load_time = baseline
        self.states = states

        tracker = TimingTracker(list(states.values()))
        contexts = build_contexts(self.config)
        sched = Scheduler(
            tracker, contexts, self.config,
            flags=self.flags, mode=self.mode,
            placement_order=self.placement_order,
            edf_on_job_deadline=self.edf_on_job_deadline,
        )
        sched.populate_contexts([states[t.id] for t in effective])
        self.tracker, self.scheduler, self.contexts = tracker, sched, contexts

        rng = random.Random(self.seed)
        phases: dict[int, float] = {}
        release_heap: list[tuple[float, int]] = []
        release_index: dict[int, int] = {}
        for t in effective:
            phase = rng.random() * t.period if self.phasing == "random" else 0.0
            phases[t.id] = phase
            release_index[t.id] = 0
            if phase < self.duration:
                heapq.heappush(release_heap, (phase, t.id))

        active: list[tuple] = []   # (StageJob, ctx_id) for every occupied stream
        alloc = None
        rate_index: dict[tuple[int, int], int] = {}
        job_counter = 0
        now = 0.0

        def refill_and_reallocate() -> None:
            nonlocal active, alloc, rate_index
            started = []
            for ctx in contexts:
                while True:
                    slot = ctx.free_stream_index()
                    if slot is None:
                        break
                    stage = sched.dispatch(ctx.id, now)
                    if stage is None:
                        break
                    stage.transition(StageState.RUNNING)
                    stage.started_at = now
                    stage.context = ctx.id
                    stage.stream = slot
                    ctx.streams[slot].occupant = stage
                    started.append(stage)
            active = []
            for ctx in contexts:
                for stream in ctx.streams:
                    if stream.occupant is not None:
                        active.append((stream.occupant, ctx.id))
            if active:
                alloc = allocate_rates(active, self.config)
                assert alloc.total_allocated <= self.config.total_sms + _ALLOC_EPS
            else:
                alloc = None
            rate_index = {
                (st.job_id, st.stage_index): i for i, (st, _) in enumerate(active)
            }
            for stage in started:
                log(now, "stage_start", stage.task_id, stage.job_id,
                    stage.stage_index, stage.context, stage.stream,
                    alloc.rates[rate_index[(stage.job_id, stage.stage_index)]])
            if self.check_invariants:
                self._verify_invariants(sched, tracker, contexts, states)

        while True:
            candidates = [(self.duration, EventKind.SIM_END)]
            if release_heap:
                candidates.append((release_heap[0][0], EventKind.RELEASE))
            pending = None
            if active:
                pending = next_completion(active, alloc, now)
                candidates.append((pending[2], EventKind.STAGE_COMPLETE))
            t_event, kind = min(candidates)

            if active:
                advance_progress(active, alloc, t_event - now)
            now = t_event

            if kind is EventKind.RELEASE:
                _, task_id = heapq.heappop(release_heap)
                job_counter += 1
                state = states[task_id]
                job = make_job(
                    state, now, tracker, job_id=job_counter,
                    batch_size=self.batch_sizes.get(task_id, 1),
                    batching_curve=self.curves.get(task_id),
                )
                log(now, "release", task_id, job.job_id)
                placement = sched.admit_or_migrate(job, now)
                admissions.extend(placement.audits)
                priority = state.task.priority
                acc.note_release(priority, now, not placement.rejected)
                if placement.rejected:
                    log(now, "reject", task_id, job.job_id)
                else:
                    log(now, "admit", task_id, job.job_id, None, placement.context)
                release_index[task_id] += 1
                next_release = phases[task_id] + release_index[task_id] * state.task.period
                if next_release < self.duration:
                    heapq.heappush(release_heap, (next_release, task_id))
                refill_and_reallocate()

            elif kind is EventKind.STAGE_COMPLETE:
                idx, stage, _ = pending
                rate = alloc.rates[idx]
                ctx = contexts[stage.context - 1]
                ctx.streams[stage.stream].occupant = None
                job = stage.job
                job_done, missed = sched.complete_stage(stage, now)
                log(now, "stage_complete", stage.task_id, stage.job_id,
                    stage.stage_index, stage.context, stage.stream, rate)
                if job_done:
                    log(now, "job_complete", stage.task_id, stage.job_id,
                        None, stage.context)
                    priority = states[stage.task_id].task.priority
                    acc.note_completion(priority, job, now, missed)
                refill_and_reallocate()

            else:
                log(self.duration, "sim_end")
                break

        report = acc.finalize(label=self.label, config=self.config,
                              seed=self.seed, duration=self.duration)
        return SimResult(report, records, admissions, effective, full_load)

    # --- invariant spot checks (opt-in, used by tests) -----------------------

    def _verify_invariants(self, sched, tracker, contexts, states) -> None:
        ledgers = sched.context_utilizations()
        for ledger in ledgers:
            assert ledger.lp_active <= ledger.lp_total + 1e-9
            assert ledger.hp_active <= ledger.hp_total + 1e-9
            assert abs(ledger.total - (ledger.hp_total + ledger.lp_total)) < 1e-12
            assert abs(ledger.active - (ledger.hp_total + ledger.lp_active)) < 1e-12
        for ctx in contexts:
            if ctx.free_stream_index() is not None and sched.ready[ctx.id]:
                raise AssertionError(
                    f"context {ctx.id} idles a stream while stages are ready"
                )
        # the cached utilization must match a fresh recomputation
        for st in states.values():
            expected = (st.full_load_time / st.task.period if st.completed_jobs == 0
                        else tracker.task_estimate(st.task.id) / st.task.period)
            assert abs(tracker.utilization(st.task.id) - expected) < 1e-12
