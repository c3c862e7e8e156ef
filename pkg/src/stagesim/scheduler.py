"""Scheduling core: context population, admission, migration and dispatch.

High-priority tasks are pinned to a context up front and normally bypass
admission. Low-priority jobs pass a utilization headroom test at release:
the context must fit the job's utilization next to the active low-priority
load once the full high-priority reservation is set aside. A job refused by
its home context may migrate to the passing context predicted to finish it
earliest; if none passes, the job is rejected outright.

Dispatch is priority-first, earliest-deadline second. Eight priority levels
order stages by (task priority, last stage or not, predecessor late or not),
then stage deadlines break ties within a level. A running stage is never
preempted; scheduling decisions happen at stage boundaries only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .gpu import ContextState, GpuConfig
from .model import Job, Priority, StageJob, StageState, TaskState
from .timing import TimingTracker


@dataclass(frozen=True)
class ContextUtilization:
    """Utilization ledger of one context, in fractions of a stream."""

    hp_total: float    # every high-priority task assigned here
    lp_total: float    # every low-priority task assigned here
    lp_active: float   # low-priority tasks with an admitted, unfinished job
    hp_active: float   # high-priority tasks with an admitted, unfinished job

    @property
    def total(self) -> float:
        return self.hp_total + self.lp_total

    @property
    def active(self) -> float:
        return self.hp_total + self.lp_active


@dataclass(frozen=True)
class AblationFlags:
    no_staging: bool = False  # collapse every task to a single stage
    no_last: bool = False     # drop the last-stage priority boost
    no_prior: bool = False    # drop the late-predecessor priority boost
    no_fixed: bool = False    # drop fixed priority levels entirely (pure EDF)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "AblationFlags":
        known = {"no_staging", "no_last", "no_prior", "no_fixed"}
        cleaned = {n.replace("-", "_") for n in names}
        unknown = cleaned - known
        if unknown:
            raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
        return cls(**{n: True for n in cleaned})


@dataclass(frozen=True)
class SchedulerMode:
    hpa_enabled: bool = False  # admission-test high-priority jobs too


@dataclass(frozen=True, order=True)
class PriorityKey:
    """Sort key for dispatch: smaller runs first."""

    level: int       # 0..7 fixed priority level
    edf_key: float   # absolute deadline used within the level
    task_id: int
    job_id: int


@dataclass
class AdmissionDecision:
    """Audit record of one admission test."""

    time: float
    job_id: int
    task_id: int
    priority: Priority
    context: int
    active_util: float   # load already counted against the context
    job_util: float
    limit: float         # the value active_util + job_util must stay below
    admitted: bool


@dataclass
class Placement:
    context: int | None          # None means rejected
    migrated_from: int | None = None
    audits: list[AdmissionDecision] = field(default_factory=list)

    @property
    def rejected(self) -> bool:
        return self.context is None


class Scheduler:
    """Owns placement, admission and dispatch state for one simulation."""

    def __init__(
        self,
        tracker: TimingTracker,
        contexts: Sequence[ContextState],
        config: GpuConfig,
        *,
        flags: AblationFlags = AblationFlags(),
        mode: SchedulerMode = SchedulerMode(),
        placement_order: str = "descending_util",
        edf_on_job_deadline: bool = False,
    ):
        if placement_order not in ("descending_util", "insertion"):
            raise ValueError(f"unknown placement order {placement_order!r}")
        self.tracker = tracker
        self.contexts = list(contexts)
        self.config = config
        self.flags = flags
        self.mode = mode
        self.placement_order = placement_order
        self.edf_on_job_deadline = edf_on_job_deadline
        self.ctx_tasks: dict[int, list[int]] = {c.id: [] for c in self.contexts}
        self.ready: dict[int, list[StageJob]] = {c.id: [] for c in self.contexts}
        self.live_jobs: dict[int, list[Job]] = {c.id: [] for c in self.contexts}

    # --- placement -------------------------------------------------------

    def populate_contexts(self, states: Sequence[TaskState]) -> None:
        """Assign every task a home context greedily by lightest total load.

        High-priority tasks are placed first, then low-priority ones. Within
        each class the default order is heaviest utilization first; ties and
        equal totals both resolve toward the lowest context id.
        """
        totals = {c.id: 0.0 for c in self.contexts}

        def place_class(group: list[TaskState]) -> None:
            if self.placement_order == "descending_util":
                group = sorted(
                    group,
                    key=lambda st: (-self.tracker.utilization(st.task.id), st.task.id),
                )
            for st in group:
                target = min(totals, key=lambda k: (totals[k], k))
                st.current_context = target
                self.ctx_tasks[target].append(st.task.id)
                totals[target] += self.tracker.utilization(st.task.id)

        place_class([st for st in states if st.task.priority is Priority.HP])
        place_class([st for st in states if st.task.priority is Priority.LP])

    # --- utilization ledger ----------------------------------------------

    def context_utilization(self, ctx_id: int) -> ContextUtilization:
        hp_total = lp_total = lp_active = hp_active = 0.0
        for task_id in self.ctx_tasks[ctx_id]:
            st = self.tracker.state(task_id)
            u = self.tracker.utilization(task_id)
            if st.task.priority is Priority.HP:
                hp_total += u
                if st.active_jobs > 0:
                    hp_active += u
            else:
                lp_total += u
                if st.active_jobs > 0:
                    lp_active += u
        ledger = ContextUtilization(hp_total, lp_total, lp_active, hp_active)
        self.contexts[ctx_id - 1].util_ledger = ledger
        return ledger

    def context_utilizations(self) -> list[ContextUtilization]:
        return [self.context_utilization(c.id) for c in self.contexts]

    # --- admission ---------------------------------------------------------

    def admission_test(self, job: Job, ctx_id: int, t: float) -> AdmissionDecision:
        """Headroom test for one job against one context (strict inequality).

        Low priority: active low-priority load plus the job must stay under
        the streams left once the whole high-priority reservation is carved
        out. High priority (only tested when admission of high-priority jobs
        is enabled): active load of both classes plus the job must stay under
        the context's stream count.
        """
        st = self.tracker.state(job.task_id)
        util = self.context_utilization(ctx_id)
        u_job = self.tracker.utilization(job.task_id)
        if st.task.priority is Priority.LP:
            active = util.lp_active
            limit = self.config.n_streams - util.hp_total
        else:
            active = util.hp_active + util.lp_active
            limit = float(self.config.n_streams)
        return AdmissionDecision(
            t, job.job_id, job.task_id, st.task.priority, ctx_id,
            active, u_job, limit, active + u_job < limit,
        )

    def predicted_finish(self, job: Job, ctx_id: int, t: float) -> float:
        """Crude finish-time forecast used to pick a migration target.

        Current backlog (remaining estimated work of live jobs placed here)
        spread over the context's streams, plus the job's own estimate.
        """
        backlog = 0.0
        for live in self.live_jobs[ctx_id]:
            for stage in live.stage_jobs:
                if stage.state is not StageState.DONE:
                    backlog += self.tracker.stage_estimate(live.task_id, stage.stage_index)
        return t + backlog / self.config.n_streams + self.tracker.task_estimate(job.task_id)

    def admit_or_migrate(self, job: Job, t: float) -> Placement:
        """Place a released job: home context first, then anywhere that fits.

        High-priority jobs stay home (tested there only when high-priority
        admission is on; otherwise placed unconditionally). A low-priority
        job refused at home tries every other context and follows the
        earliest predicted finish among those that pass; when none does, the
        job is rejected and never runs.
        """
        st = self.tracker.state(job.task_id)
        home = st.current_context
        audits: list[AdmissionDecision] = []

        if st.task.priority is Priority.HP:
            if not self.mode.hpa_enabled:
                self._place(job, home)
                return Placement(home, audits=audits)
            decision = self.admission_test(job, home, t)
            audits.append(decision)
            if decision.admitted:
                self._place(job, home)
                return Placement(home, audits=audits)
            return Placement(None, audits=audits)

        decision = self.admission_test(job, home, t)
        audits.append(decision)
        if decision.admitted:
            self._place(job, home)
            return Placement(home, audits=audits)

        candidates = []
        for ctx in self.contexts:
            if ctx.id == home:
                continue
            other = self.admission_test(job, ctx.id, t)
            audits.append(other)
            if other.admitted:
                candidates.append(ctx.id)
        if not candidates:
            return Placement(None, audits=audits)

        target = min(candidates, key=lambda k: (self.predicted_finish(job, k, t), k))
        self._migrate_task(job.task_id, home, target)
        self._place(job, target)
        return Placement(target, migrated_from=home, audits=audits)

    def _migrate_task(self, task_id: int, old_ctx: int, new_ctx: int) -> None:
        st = self.tracker.state(task_id)
        assert st.task.priority is Priority.LP, "high-priority tasks never migrate"
        self.ctx_tasks[old_ctx].remove(task_id)
        self.ctx_tasks[new_ctx].append(task_id)
        st.current_context = new_ctx

    def _place(self, job: Job, ctx_id: int) -> None:
        job.placement = ctx_id
        self.tracker.state(job.task_id).active_jobs += 1
        self.live_jobs[ctx_id].append(job)
        first = job.stage_jobs[0]
        first.transition(StageState.READY)
        self.ready[ctx_id].append(first)

    # --- dispatch ----------------------------------------------------------

    def priority_key(self, stage: StageJob) -> PriorityKey:
        priority = self.tracker.state(stage.task_id).task.priority
        is_last = stage.is_last and not self.flags.no_last
        late_pred = stage.predecessor_missed and not self.flags.no_prior
        level = 4 * (priority is Priority.LP) + 2 * (not is_last) + (not late_pred)
        if self.flags.no_fixed:
            level = 0
        edf = stage.job.absolute_deadline if self.edf_on_job_deadline \
            else stage.virtual_abs_deadline
        return PriorityKey(level, edf, stage.task_id, stage.job_id)

    def dispatch(self, ctx_id: int, t: float) -> StageJob | None:
        """Pop the highest-priority ready stage of this context, if any."""
        queue = self.ready[ctx_id]
        if not queue:
            return None
        best = min(queue, key=self.priority_key)
        queue.remove(best)
        return best

    # --- completion ---------------------------------------------------------

    def complete_stage(self, stage: StageJob, t: float) -> tuple[bool, bool]:
        """Book a finished stage; returns (job_done, deadline_missed).

        Records the observed wall time, promotes the successor stage (noting
        whether this stage ran past its own deadline), and on the last stage
        retires the job.
        """
        observed = t - stage.started_at
        self.tracker.record_execution(stage.task_id, stage.stage_index, observed)
        stage.transition(StageState.DONE)

        job = stage.job
        if not stage.is_last:
            successor = job.stage_jobs[stage.stage_index + 1]
            successor.predecessor_missed = t > stage.virtual_abs_deadline
            successor.transition(StageState.READY)
            self.ready[job.placement].append(successor)
            return False, False

        job.completion_time = t
        st = self.tracker.state(stage.task_id)
        st.active_jobs -= 1
        self.tracker.note_job_complete(stage.task_id)
        self.live_jobs[job.placement].remove(job)
        return True, t > job.absolute_deadline
