"""Shared factories for the test suite."""

from __future__ import annotations

import pytest

from stagesim.gpu import GpuConfig, Policy
from stagesim.model import Priority, StageProfile, TaskSpec, TaskState
from stagesim.timing import TimingTracker


def make_spec(task_id: int, period: float, priority: Priority,
              stage_times: tuple[float, ...],
              widths: tuple[int, ...] | int = 16) -> TaskSpec:
    if isinstance(widths, int):
        widths = (widths,) * len(stage_times)
    stages = tuple(StageProfile(t, w) for t, w in zip(stage_times, widths))
    return TaskSpec.periodic(task_id, period=period, priority=priority, stages=stages)


def make_tracker(specs, *, full_loads=None, window_size=5):
    states = [TaskState.fresh(s, window_size) for s in specs]
    if full_loads is not None:
        for st, fl in zip(states, full_loads):
            st.full_load_time = fl
    return TimingTracker(states), states


@pytest.fixture
def mps_gpu():
    return GpuConfig(total_sms=68, n_contexts=6, n_streams=1,
                     oversubscription=6.0, policy=Policy.MPS)


@pytest.fixture
def str_gpu():
    return GpuConfig(total_sms=64, n_contexts=1, n_streams=4,
                     oversubscription=1.0, policy=Policy.STR)


@pytest.fixture
def shared_gpu():
    return GpuConfig(total_sms=64, n_contexts=2, n_streams=2,
                     oversubscription=2.0, policy=Policy.MPS_STR)
