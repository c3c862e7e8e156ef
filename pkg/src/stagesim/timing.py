"""Execution-time tracking.

Two estimates drive every scheduling decision:

* a windowed recent maximum per stage: the largest of the last `window_size`
  observed wall-clock execution times, summed over stages for a whole task;
* a full-load baseline per task, measured offline by running the task while
  every other stream on the GPU is kept busy with random competitors.

The baseline seeds utilization before a task has completed anything; after
the first completed job the windowed maximum takes over. Per-stage deadline
shares (used to derive stage-level deadlines inside a job) always use the
freshest per-stage estimates, falling back to the baseline split by nominal
time while a stage's window is still empty.
"""

from __future__ import annotations

import random
from collections import deque
from typing import TYPE_CHECKING, Sequence

from . import gpu as gpu_model
from .errors import NonpositiveSample, ZeroTotalEstimate

if TYPE_CHECKING:  # pragma: no cover
    from .model import TaskSpec, TaskState

DEFAULT_WINDOW_SIZE = 5
DEFAULT_FULL_LOAD_REPS = 10


class ExecutionWindow:
    """Ring of the most recent execution-time samples for one stage."""

    __slots__ = ("capacity", "_samples", "_next_index")

    def __init__(self, capacity: int = DEFAULT_WINDOW_SIZE):
        if capacity < 1:
            raise ValueError("window capacity must be >= 1")
        self.capacity = capacity
        self._samples: deque[tuple[int, float]] = deque(maxlen=capacity)
        self._next_index = 0  # completion index, grows forever

    def record(self, observed_time: float) -> None:
        if observed_time <= 0:
            raise NonpositiveSample(f"observed time must be positive, got {observed_time}")
        self._samples.append((self._next_index, observed_time))
        self._next_index += 1

    def peak(self) -> float | None:
        """Largest sample in the window, or None while empty."""
        if not self._samples:
            return None
        return max(v for _, v in self._samples)

    @property
    def values(self) -> list[float]:
        return [v for _, v in self._samples]

    def __len__(self) -> int:
        return len(self._samples)


class TimingTracker:
    """Per-task execution estimates feeding utilization, admission and deadlines."""

    def __init__(self, states: Sequence["TaskState"]):
        self._states: dict[int, "TaskState"] = {st.task.id: st for st in states}
        self._util_cache: dict[int, float] = {}

    def state(self, task_id: int) -> "TaskState":
        return self._states[task_id]

    def record_execution(self, task_id: int, stage_index: int, observed_time: float) -> None:
        self._states[task_id].windows[stage_index].record(observed_time)

    def stage_estimate(self, task_id: int, stage_index: int) -> float:
        """Windowed peak for the stage; baseline share of nominal time while empty."""
        st = self._states[task_id]
        peak = st.windows[stage_index].peak()
        if peak is not None:
            return peak
        spec = st.task
        share = spec.stages[stage_index].nominal_time / spec.nominal_total
        return st.full_load_time * share

    def task_estimate(self, task_id: int) -> float:
        spec = self._states[task_id].task
        return sum(self.stage_estimate(task_id, j) for j in range(len(spec.stages)))

    def utilization(self, task_id: int) -> float:
        """Demand of one task as a fraction of a stream.

        Full-load baseline over period until the task completes its first
        job, windowed estimate over period afterwards. The value is cached
        and refreshed only when a job of the task completes, so admission
        decisions between completions all see the same number.
        """
        cached = self._util_cache.get(task_id)
        if cached is not None:
            return cached
        st = self._states[task_id]
        if st.completed_jobs == 0:
            u = st.full_load_time / st.task.period
        else:
            u = self.task_estimate(task_id) / st.task.period
        self._util_cache[task_id] = u
        return u

    def note_job_complete(self, task_id: int) -> None:
        st = self._states[task_id]
        st.completed_jobs += 1
        self._util_cache.pop(task_id, None)

    def deadline_shares(self, task_id: int) -> list[float]:
        """Relative deadline span of each stage, proportional to its estimate.

        The spans sum to the task's deadline exactly: the last stage absorbs
        whatever floating-point residue the proportional split leaves behind.
        """
        st = self._states[task_id]
        spec = st.task
        estimates = [self.stage_estimate(task_id, j) for j in range(len(spec.stages))]
        total = sum(estimates)
        if total <= 0:
            raise ZeroTotalEstimate(
                f"task {task_id} has no positive execution estimate to split its deadline over"
            )
        shares = [e / total * spec.deadline for e in estimates[:-1]]
        shares.append(spec.deadline - sum(shares))
        return shares


class _LoopStage:
    """Lightweight stage stand-in used by the offline full-load measurement."""

    __slots__ = ("job_id", "stage_index", "width", "remaining_work")

    def __init__(self, job_id: int, stage_index: int, width: int, remaining_work: float):
        self.job_id = job_id
        self.stage_index = stage_index
        self.width = width
        self.remaining_work = remaining_work


def measure_full_load_time(
    target: "TaskSpec",
    pool: Sequence["TaskSpec"],
    config: gpu_model.GpuConfig,
    repetitions: int = DEFAULT_FULL_LOAD_REPS,
    seed: int = 0,
    *,
    batch_sizes: dict[int, int] | None = None,
    curves: dict[int, gpu_model.BatchingCurve] | None = None,
) -> float:
    """Mean end-to-end time of `target` with every other stream kept busy.

    Each repetition drops the target on context 1, stream 0, fills every other
    stream with a pool task drawn uniformly at random (with replacement), and
    integrates the rate model until the target's last stage finishes. The
    competitors loop their stages back-to-back so the load never lets up.
    Deterministic for a given (seed, repetition) pair.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if not pool:
        raise ValueError("competitor pool must not be empty")
    batch_sizes = batch_sizes or {}
    curves = curves or {}

    def times_for(spec: "TaskSpec") -> list[float]:
        batch = batch_sizes.get(spec.id, 1)
        curve = curves.get(spec.id)
        return [gpu_model.effective_stage_time(p, batch, curve) for p in spec.stages]

    samples = []
    for rep in range(repetitions):
        rng = random.Random(seed * 1_000_003 + rep)
        samples.append(_busy_system_run(target, pool, times_for, config, rng))
    return sum(samples) / len(samples)


def _busy_system_run(target: "TaskSpec", pool, times_for, config, rng) -> float:
    """One repetition of the full-load measurement; returns the target's finish time."""
    n_slots = config.n_contexts * config.n_streams

    slots: list[tuple["TaskSpec", list[float]]] = [(target, times_for(target))]
    for _ in range(1, n_slots):
        comp = pool[rng.randrange(len(pool))]
        slots.append((comp, times_for(comp)))

    active: list[tuple[_LoopStage, int]] = []
    for slot, (spec, times) in enumerate(slots):
        stage = _LoopStage(slot, 0, spec.stages[0].width, times[0])
        active.append((stage, slot // config.n_streams + 1))

    lap_pos = [0] * n_slots    # which profiled stage each slot is running
    counters = [0] * n_slots   # monotone per-slot counter, keeps tie keys unique

    now = 0.0
    while True:
        alloc = gpu_model.allocate_rates(active, config)
        _idx, stage, t = gpu_model.next_completion(active, alloc, now)
        gpu_model.advance_progress(active, alloc, t - now)
        now = t

        slot = stage.job_id
        spec, times = slots[slot]
        following = lap_pos[slot] + 1
        if slot == 0 and following == len(times):
            return now
        pos = following % len(times)  # competitors wrap around and keep going
        lap_pos[slot] = pos
        counters[slot] += 1
        stage.stage_index = counters[slot]
        stage.width = spec.stages[pos].width
        stage.remaining_work = times[pos]
