"""GPU resource model.

The simulated GPU exposes `total_sms` streaming multiprocessors, carved into
`n_contexts` partitions of `sm_per_context()` SMs each. A context hosts
`n_streams` streams; each stream runs at most one stage at a time. How fast a
stage runs is decided by a two-level allocation:

1. inside a context the context's SMs are water-filled over its active
   stages, capping each stage at its own width;
2. if the sum of all context allocations exceeds the physical SM count
   (possible whenever oversubscription > 1), everything is scaled down
   proportionally.

A stage's rate is allocated SMs divided by its width, so rate 1.0 means the
stage runs at its profiled nominal speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import (
    InvalidBatch,
    InvalidOversubscription,
    NoActiveStages,
    OvershootBeyondCompletion,
)

# Slack used when comparing float SM totals; allocations are exact otherwise.
_EPS = 1e-9


class Policy(Enum):
    """How the GPU is shared between tasks."""

    STR = "str"          # one context, many streams
    MPS = "mps"          # many contexts, one stream each
    MPS_STR = "mps-str"  # many contexts, many streams


@dataclass(frozen=True)
class GpuConfig:
    total_sms: int            # physical SM count of the device
    n_contexts: int           # partitions sharing the device
    n_streams: int            # streams per context
    oversubscription: float   # 1.0 = isolated partitions, n_contexts = fully shared
    policy: Policy = Policy.MPS_STR
    interference_kappa: float = 0.0  # optional slowdown per co-located stage

    def __post_init__(self) -> None:
        if self.total_sms < 1:
            raise ValueError("total_sms must be >= 1")
        if self.n_contexts < 1 or self.n_streams < 1:
            raise ValueError("n_contexts and n_streams must be >= 1")
        if not (1.0 <= self.oversubscription <= self.n_contexts + _EPS):
            raise InvalidOversubscription(
                f"oversubscription must lie in [1, n_contexts], got "
                f"{self.oversubscription} with {self.n_contexts} contexts"
            )
        if self.policy is Policy.STR and self.n_contexts != 1:
            raise ValueError("the stream-only policy uses a single context")
        if self.policy is Policy.MPS and self.n_streams != 1:
            raise ValueError("the context-only policy uses a single stream per context")
        if self.interference_kappa < 0:
            raise ValueError("interference_kappa must be >= 0")

    @property
    def n_parallel(self) -> int:
        """Total number of streams, i.e. the degree of parallelism."""
        return self.n_contexts * self.n_streams


def ceil_even(x: float) -> int:
    """Smallest even integer >= x (tolerating float dust just below an even value)."""
    return 2 * math.ceil(x / 2.0 - _EPS)


def sm_per_context(config: GpuConfig) -> int:
    """SMs granted to each context: ceil_even(OS * total / n_contexts)."""
    os_ = config.oversubscription
    if not (1.0 <= os_ <= config.n_contexts + _EPS):
        raise InvalidOversubscription(f"oversubscription {os_} outside [1, {config.n_contexts}]")
    return ceil_even(os_ * config.total_sms / config.n_contexts)


@dataclass
class StreamState:
    """One stream of a context; occupant is the stage currently running."""

    occupant: object | None = None


@dataclass
class ContextState:
    id: int                      # 1-based
    sms: int                     # SMs granted to this context
    streams: list[StreamState]
    util_ledger: object | None = None  # last ContextUtilization computed for it

    def free_stream_index(self) -> int | None:
        for i, s in enumerate(self.streams):
            if s.occupant is None:
                return i
        return None


def build_contexts(config: GpuConfig) -> list[ContextState]:
    per = sm_per_context(config)
    return [
        ContextState(k, per, [StreamState() for _ in range(config.n_streams)])
        for k in range(1, config.n_contexts + 1)
    ]


def water_fill(widths: Sequence[float], capacity: float) -> tuple[list[float], float | None]:
    """Split `capacity` SMs over stages, capping each at its width.

    Returns (allocations, level). When capacity covers every width the
    allocations are the widths themselves and level is None. Otherwise the
    water level L is the unique value with sum(min(width, L)) == capacity;
    stages narrower than L keep their width, the rest get L.
    """
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    n = len(widths)
    if n == 0:
        return [], None
    if sum(widths) <= capacity + _EPS:
        return list(widths), None

    order = sorted(range(n), key=lambda i: (widths[i], i))
    alloc = [0.0] * n
    remaining = float(capacity)
    active = n
    for pos, idx in enumerate(order):
        level = remaining / active
        if widths[idx] <= level:
            # narrower than the level: saturates at its own width
            alloc[idx] = float(widths[idx])
            remaining -= widths[idx]
            active -= 1
        else:
            for j in order[pos:]:
                alloc[j] = level
            return alloc, level
    # unreachable: sum(widths) > capacity guarantees the level branch triggers
    raise AssertionError("water_fill failed to settle on a level")


@dataclass
class RateAllocation:
    """Per-stage SM grants and rates, aligned with the active list passed in."""

    allocated: list[float]
    rates: list[float]
    scale: float                          # level-2 shrink factor, 1.0 if no cross-context pressure
    water_levels: dict[int, float | None]  # per context id

    @property
    def total_allocated(self) -> float:
        return sum(self.allocated)


def allocate_rates(active: Sequence[tuple], config: GpuConfig) -> RateAllocation:
    """Compute SM allocations and rates for every active (stage, context_id) pair.

    Stages need `width` (max SMs they can use). Raises ValueError if a context
    is handed more stages than it has streams.
    """
    per_ctx_sms = sm_per_context(config)
    by_ctx: dict[int, list[int]] = {}
    for i, (_stage, ctx_id) in enumerate(active):
        by_ctx.setdefault(ctx_id, []).append(i)

    allocated = [0.0] * len(active)
    levels: dict[int, float | None] = {}
    for ctx_id, members in by_ctx.items():
        if len(members) > config.n_streams:
            raise ValueError(f"context {ctx_id} holds {len(members)} stages but has "
                             f"{config.n_streams} streams")
        widths = [active[i][0].width for i in members]
        fills, level = water_fill(widths, per_ctx_sms)
        levels[ctx_id] = level
        for i, amount in zip(members, fills):
            allocated[i] = amount

    total = sum(allocated)
    scale = 1.0
    if total > config.total_sms + _EPS:
        scale = config.total_sms / total
        allocated = [a * scale for a in allocated]

    kappa = config.interference_kappa
    rates = [0.0] * len(active)
    for ctx_id, members in by_ctx.items():
        crowd = len(members)
        slowdown = 1.0 + kappa * (crowd - 1) if kappa > 0 else 1.0
        for i in members:
            width = active[i][0].width
            rates[i] = allocated[i] / width / slowdown

    return RateAllocation(allocated, rates, scale, levels)


def next_completion(active: Sequence[tuple], allocation: RateAllocation, now: float):
    """Earliest finisher among active stages at current rates.

    Returns (index, stage, time). Ties resolve on (job_id, stage_index).
    """
    if not active:
        raise NoActiveStages("no active stages to complete")
    best = None
    best_key = None
    for i, (stage, _ctx) in enumerate(active):
        rate = allocation.rates[i]
        if rate <= 0:
            raise ValueError("active stage has a non-positive rate")
        t = now + stage.remaining_work / rate
        key = (t, stage.job_id, stage.stage_index)
        if best_key is None or key < best_key:
            best_key = key
            best = (i, stage, t)
    return best


def advance_progress(active: Sequence[tuple], allocation: RateAllocation, dt: float) -> None:
    """Integrate remaining work over an interval of constant rates."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    for i, (stage, _ctx) in enumerate(active):
        left = stage.remaining_work - allocation.rates[i] * dt
        if left < -_EPS:
            raise OvershootBeyondCompletion(
                f"stage (job {stage.job_id}, stage {stage.stage_index}) overshoots "
                f"completion by {-left:.3e} s"
            )
        stage.remaining_work = max(0.0, left)


@dataclass(frozen=True)
class BatchingCurve:
    """Throughput gain of batched inference, anchored at one measured point.

    gain(1) is 1 by definition; gain(reference_batch) is the measured gain.
    Between and beyond, gain is log-linear in the batch size and clamped so it
    never drops below 1.
    """

    reference_batch: int
    reference_gain: float

    def __post_init__(self) -> None:
        if self.reference_batch < 1:
            raise InvalidBatch(f"reference batch must be >= 1, got {self.reference_batch}")
        if self.reference_gain <= 0:
            raise ValueError("reference gain must be positive")

    def gain(self, batch_size: int) -> float:
        if not isinstance(batch_size, int) or batch_size < 1:
            raise InvalidBatch(f"batch size must be an integer >= 1, got {batch_size!r}")
        if batch_size == 1 or self.reference_batch == 1:
            return 1.0
        exponent = math.log(batch_size) / math.log(self.reference_batch)
        return max(1.0, self.reference_gain ** exponent)


UNIT_BATCHING = BatchingCurve(1, 1.0)


def effective_stage_time(profile, batch_size: int = 1,
                         curve: BatchingCurve | None = None) -> float:
    """Full-width seconds one stage needs for a batch of inputs.

    nominal * B / gain(B): batching amortizes work, so the per-input cost
    shrinks by the curve's gain while the per-job cost grows.
    """
    if not isinstance(batch_size, int) or batch_size < 1:
        raise InvalidBatch(f"batch size must be an integer >= 1, got {batch_size!r}")
    if curve is None:
        curve = UNIT_BATCHING
    return profile.nominal_time * batch_size / curve.gain(batch_size)
