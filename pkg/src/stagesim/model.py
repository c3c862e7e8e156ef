"""Task, stage and job domain types, plus task-set and job construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import (
    DuplicateId,
    EmptyTaskSet,
    InvalidStage,
    InvalidTaskIds,
)
from .gpu import BatchingCurve, effective_stage_time
from .timing import DEFAULT_WINDOW_SIZE, ExecutionWindow, TimingTracker


class Priority(Enum):
    HP = "hp"  # high priority: safety-critical, never migrated
    LP = "lp"  # low priority: best effort, admission controlled


@dataclass(frozen=True)
class StageProfile:
    nominal_time: float  # seconds at full width, batch of one
    width: int           # most SMs the stage can put to work


@dataclass(frozen=True)
class TaskSpec:
    id: int
    period: float                      # seconds between releases
    deadline: float                    # relative deadline, equals period
    priority: Priority
    stages: tuple[StageProfile, ...]

    def __post_init__(self) -> None:
        if self.deadline != self.period:
            raise ValueError(f"task {self.id}: deadline must equal period")

    @classmethod
    def periodic(cls, id: int, period: float, priority: Priority,
                 stages: Sequence[StageProfile]) -> "TaskSpec":
        return cls(id, period, period, priority, tuple(stages))

    @property
    def nominal_total(self) -> float:
        return sum(p.nominal_time for p in self.stages)


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple[TaskSpec, ...]

    @property
    def size(self) -> int:
        return len(self.tasks)

    @property
    def n_hp(self) -> int:
        return sum(1 for t in self.tasks if t.priority is Priority.HP)

    @property
    def n_lp(self) -> int:
        return sum(1 for t in self.tasks if t.priority is Priority.LP)

    def by_id(self, task_id: int) -> TaskSpec:
        return self.tasks[task_id - 1]


def build_task_set(specs: Sequence[TaskSpec]) -> TaskSet:
    """Validate specs into a TaskSet. Pure: same input, same output.

    Ids must be dense 1..N, every task needs at least one stage, and every
    stage needs a positive nominal time and width of at least one SM.
    """
    if not specs:
        raise EmptyTaskSet("a task set needs at least one task")
    ids = [t.id for t in specs]
    if len(set(ids)) != len(ids):
        seen, dups = set(), set()
        for i in ids:
            (dups if i in seen else seen).add(i)
        raise DuplicateId(f"duplicate task ids: {sorted(dups)}")
    if sorted(ids) != list(range(1, len(ids) + 1)):
        raise InvalidTaskIds(f"task ids must be dense 1..{len(ids)}, got {sorted(ids)}")
    for t in specs:
        if len(t.stages) < 1:
            raise InvalidStage(f"task {t.id} has no stages")
        if t.period <= 0:
            raise InvalidStage(f"task {t.id} has a non-positive period")
        for j, p in enumerate(t.stages):
            if p.nominal_time <= 0:
                raise InvalidStage(f"task {t.id} stage {j}: nominal time must be positive")
            if p.width < 1:
                raise InvalidStage(f"task {t.id} stage {j}: width must be >= 1 SM")
    ordered = tuple(sorted(specs, key=lambda t: t.id))
    return TaskSet(ordered)


def collapse_stages(task_set: TaskSet) -> TaskSet:
    """Ablation view with staging disabled: one stage per task.

    The merged stage keeps the summed nominal time and the widest stage's
    width, so the task still claims its peak SM footprint.
    """
    merged = []
    for t in task_set.tasks:
        profile = StageProfile(t.nominal_total, max(p.width for p in t.stages))
        merged.append(TaskSpec(t.id, t.period, t.deadline, t.priority, (profile,)))
    return TaskSet(tuple(merged))


class StageState(Enum):
    PENDING = "pending"
    READY = "ready"
    RUNNING = "running"
    DONE = "done"


_STAGE_ORDER = {
    StageState.PENDING: 0,
    StageState.READY: 1,
    StageState.RUNNING: 2,
    StageState.DONE: 3,
}


@dataclass
class StageJob:
    """One stage of one job instance."""

    job: "Job"
    stage_index: int
    width: int
    remaining_work: float          # full-width seconds still owed
    virtual_abs_deadline: float    # absolute deadline of this stage alone
    predecessor_missed: bool = False
    state: StageState = StageState.PENDING
    started_at: float | None = None
    context: int | None = None     # where it is (or was) running
    stream: int | None = None

    @property
    def job_id(self) -> int:
        return self.job.job_id

    @property
    def task_id(self) -> int:
        return self.job.task_id

    @property
    def is_last(self) -> bool:
        return self.stage_index == len(self.job.stage_jobs) - 1

    def transition(self, new_state: StageState) -> None:
        # stages only ever move forward: pending -> ready -> running -> done
        if _STAGE_ORDER[new_state] != _STAGE_ORDER[self.state] + 1:
            raise ValueError(
                f"illegal stage transition {self.state.value} -> {new_state.value}"
            )
        self.state = new_state


@dataclass
class Job:
    job_id: int
    task_id: int
    release_time: float
    absolute_deadline: float
    stage_jobs: list[StageJob] = field(default_factory=list)
    batch_size: int = 1
    placement: int | None = None       # context the job was admitted into
    completion_time: float | None = None

    @property
    def done(self) -> bool:
        return self.completion_time is not None

    def remaining_stages(self):
        return [s for s in self.stage_jobs if s.state is not StageState.DONE]


@dataclass
class TaskState:
    """Mutable per-task runtime state."""

    task: TaskSpec
    current_context: int = 0            # 1-based once placed; HP never changes it
    full_load_time: float = 0.0         # offline-measured busy-system execution time
    windows: list[ExecutionWindow] = field(default_factory=list)
    completed_jobs: int = 0
    active_jobs: int = 0                # admitted, not yet finished

    @classmethod
    def fresh(cls, task: TaskSpec, window_size: int = DEFAULT_WINDOW_SIZE) -> "TaskState":
        return cls(task, windows=[ExecutionWindow(window_size) for _ in task.stages])


def make_job(
    task: TaskState,
    release_time: float,
    tracker: TimingTracker,
    *,
    job_id: int = 0,
    batch_size: int = 1,
    batching_curve: BatchingCurve | None = None,
) -> Job:
    """Instantiate a job with per-stage deadlines split along current estimates.

    Stage deadlines are cumulative from release; the last stage's deadline is
    pinned to the job's absolute deadline so the chain ends exactly on it.
    """
    spec = task.task
    absolute_deadline = release_time + spec.deadline
    shares = tracker.deadline_shares(spec.id)

    job = Job(job_id, spec.id, release_time, absolute_deadline, batch_size=batch_size)
    acc = release_time
    n = len(spec.stages)
    for j, profile in enumerate(spec.stages):
        if j == n - 1:
            stage_deadline = absolute_deadline
        else:
            acc += shares[j]
            stage_deadline = acc
        work = effective_stage_time(profile, batch_size, batching_curve)
        job.stage_jobs.append(StageJob(job, j, profile.width, work, stage_deadline))
    return job
