"""Built-in workload profiles and named scenario presets.

Each profile models one DNN as a short pipeline of stages. Stage times are a
documented split of the model's end-to-end single-inference time; widths are
a fixed fraction of the device, reflecting how much of the GPU one kernel of
that network can actually occupy (wide encoder-decoder networks nearly fill
it, inception-style graphs use narrow kernels). Batching curves are anchored
at each profile's measured reference batch.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownPreset
from .gpu import BatchingCurve
from .model import Priority, StageProfile, TaskSpec


@dataclass(frozen=True)
class DnnProfile:
    name: str
    base_time: float                    # seconds per single inference, batch 1
    stage_fractions: tuple[float, ...]  # split of base_time across stages
    width_fraction: float               # share of the device one stage can use
    batching: BatchingCurve
    default_batch: int                  # batch size used in batched experiments


PROFILES: dict[str, DnnProfile] = {
    "resnet18": DnnProfile(
        name="resnet18",
        base_time=1.0 / 627.0,
        stage_fractions=(0.30, 0.30, 0.25, 0.15),
        width_fraction=0.40,
        batching=BatchingCurve(reference_batch=4, reference_gain=1.63),
        default_batch=4,
    ),
    "unet": DnnProfile(
        name="unet",
        base_time=1.0 / 241.0,
        stage_fractions=(0.30, 0.20, 0.20, 0.30),
        width_fraction=0.75,
        batching=BatchingCurve(reference_batch=2, reference_gain=1.08),
        default_batch=2,
    ),
    "inceptionv3": DnnProfile(
        name="inceptionv3",
        base_time=1.0 / 142.0,
        stage_fractions=(0.20, 0.30, 0.30, 0.20),
        width_fraction=0.20,
        batching=BatchingCurve(reference_batch=8, reference_gain=3.13),
        default_batch=8,
    ),
}


def get_profile(name: str) -> DnnProfile:
    try:
        return PROFILES[name.lower()]
    except KeyError:
        raise UnknownPreset(f"unknown workload profile {name!r}; "
                            f"known: {sorted(PROFILES)}") from None


def stage_count_for_preset(name: str, *, no_staging: bool = False) -> int:
    """Stages one task of this profile is split into (1 when staging is off)."""
    profile = get_profile(name)
    return 1 if no_staging else len(profile.stage_fractions)


def profile_stages(profile: DnnProfile, total_sms: int) -> tuple[StageProfile, ...]:
    width = max(1, min(total_sms, round(profile.width_fraction * total_sms)))
    return tuple(
        StageProfile(profile.base_time * frac, width)
        for frac in profile.stage_fractions
    )


def build_profile_tasks(
    profile: DnnProfile,
    hp_count: int,
    lp_count: int,
    task_jps: float,
    total_sms: int,
    start_id: int = 1,
) -> list[TaskSpec]:
    """Tasks of one profile: `hp_count` high-priority first, then low-priority."""
    if task_jps <= 0:
        raise ValueError("task_jps must be positive")
    stages = profile_stages(profile, total_sms)
    period = 1.0 / task_jps
    tasks = []
    for i in range(hp_count + lp_count):
        priority = Priority.HP if i < hp_count else Priority.LP
        tasks.append(TaskSpec.periodic(start_id + i, period, priority, stages))
    return tasks


# Named workload mixes: (profile, hp_count, lp_count, task_jps) rows.
WORKLOADS: dict[str, list[tuple[str, int, int, float]]] = {
    "resnet18": [("resnet18", 17, 34, 30.0)],
    "unet": [("unet", 5, 10, 24.0)],
    "inceptionv3": [("inceptionv3", 9, 18, 24.0)],
    "mixed": [
        ("resnet18", 17, 34, 30.0),
        ("unet", 5, 10, 24.0),
        ("inceptionv3", 9, 18, 24.0),
    ],
}


# Scenario presets, merged under any explicit scenario keys.
SCENARIO_PRESETS: dict[str, dict] = {
    "resnet18_main": {
        "gpu": {"total_sms": 68, "n_contexts": 6, "n_streams": 1,
                "oversubscription": 6, "policy": "mps"},
        "workload": {"preset": "resnet18"},
        "overload_factor": 1.5,
    },
    "unet_main": {
        "gpu": {"total_sms": 68, "n_contexts": 6, "n_streams": 1,
                "oversubscription": 6, "policy": "mps"},
        "workload": {"preset": "unet"},
        "overload_factor": 1.5,
    },
    "inceptionv3_main": {
        "gpu": {"total_sms": 68, "n_contexts": 6, "n_streams": 1,
                "oversubscription": 6, "policy": "mps"},
        "workload": {"preset": "inceptionv3"},
        "overload_factor": 1.5,
    },
    "mixed_main": {
        "gpu": {"total_sms": 68, "n_contexts": 6, "n_streams": 1,
                "oversubscription": 6, "policy": "mps"},
        "workload": {"preset": "mixed"},
        "overload_factor": 1.5,
    },
}


def get_scenario_preset(name: str) -> dict:
    try:
        return SCENARIO_PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown scenario preset {name!r}; "
                            f"known: {sorted(SCENARIO_PRESETS)}") from None
