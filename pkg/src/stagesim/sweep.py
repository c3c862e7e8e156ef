"""Configuration sweeps over policy, partition shape and oversubscription."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .engine import SimResult, format_label
from .errors import ParseError, SchemaError
from .gpu import GpuConfig, Policy
from .scenario import ScenarioConfig, build_simulation

_SWEEP_KEYS = {"policies", "parallelism", "pairs", "oversubscription", "seeds"}

MIN_PARALLELISM = 2
MAX_PARALLELISM = 10


@dataclass(frozen=True)
class SweepCell:
    policy: Policy
    n_contexts: int
    n_streams: int
    oversubscription: float

    @property
    def label(self) -> str:
        return format_label(self.n_contexts, self.n_streams, self.oversubscription)


@dataclass
class SweepSpec:
    policies: list[Policy]
    pairs: list[tuple[int, int]]            # (n_contexts, n_streams)
    oversubscription: list[object]          # numbers, or "nc" for fully shared
    seeds: list[int] = field(default_factory=lambda: [0])


@dataclass
class SweepOutcome:
    reports: list = field(default_factory=list)       # MetricsReport, cell-major
    results: list[SimResult] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)  # human-readable skip notes


def load_sweep(path: str | Path) -> SweepSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read sweep file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"sweep file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("a sweep file must hold a JSON object")
    return sweep_from_dict(data)


def sweep_from_dict(data: dict) -> SweepSpec:
    unknown = set(data) - _SWEEP_KEYS
    if unknown:
        raise SchemaError(f"unknown key(s) in sweep: {sorted(unknown)}")

    policies_raw = data.get("policies", [p.value for p in Policy])
    if not isinstance(policies_raw, list) or not policies_raw:
        raise SchemaError("sweep.policies must be a non-empty list")
    policies = []
    for name in policies_raw:
        try:
            policies.append(Policy(name))
        except ValueError:
            raise SchemaError(f"unknown policy {name!r} in sweep") from None

    if "pairs" in data and "parallelism" in data:
        raise SchemaError("give either sweep.pairs or sweep.parallelism, not both")
    pairs: list[tuple[int, int]] = []
    if "pairs" in data:
        for pos, raw in enumerate(data["pairs"]):
            if (not isinstance(raw, list) or len(raw) != 2
                    or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw)):
                raise SchemaError(f"sweep.pairs[{pos}] must be [n_contexts, n_streams]")
            nc, ns = raw
            if not (MIN_PARALLELISM <= nc * ns <= MAX_PARALLELISM):
                raise SchemaError(
                    f"sweep.pairs[{pos}]: total parallelism {nc * ns} outside "
                    f"[{MIN_PARALLELISM}, {MAX_PARALLELISM}]"
                )
            pairs.append((nc, ns))
    else:
        parallelism = data.get("parallelism",
                               list(range(MIN_PARALLELISM, MAX_PARALLELISM + 1)))
        if (not isinstance(parallelism, list) or not parallelism
                or not all(isinstance(v, int) and not isinstance(v, bool)
                           for v in parallelism)):
            raise SchemaError("sweep.parallelism must be a list of integers")
        for n in parallelism:
            if not (MIN_PARALLELISM <= n <= MAX_PARALLELISM):
                raise SchemaError(f"sweep.parallelism value {n} outside "
                                  f"[{MIN_PARALLELISM}, {MAX_PARALLELISM}]")
        pairs = [(n, 0) for n in parallelism]  # shaped per policy when expanding

    os_raw = data.get("oversubscription", [1, 1.5, 2, "nc"])
    if not isinstance(os_raw, list) or not os_raw:
        raise SchemaError("sweep.oversubscription must be a non-empty list")
    os_values: list[object] = []
    for v in os_raw:
        if v == "nc":
            os_values.append("nc")
        elif isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 1:
            os_values.append(float(v))
        else:
            raise SchemaError(f"oversubscription entries must be numbers >= 1 "
                              f"or 'nc', got {v!r}")

    seeds = data.get("seeds", [0])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)):
        raise SchemaError("sweep.seeds must be a non-empty list of integers")

    return SweepSpec(policies, pairs, os_values, list(seeds))


def _shapes_for(policy: Policy, pair: tuple[int, int]) -> list[tuple[int, int]]:
    """Context/stream shapes a policy admits for one parallelism entry."""
    nc, ns = pair
    if ns == 0:  # entry came from a bare parallelism number
        total = nc
        if policy is Policy.STR:
            return [(1, total)]
        if policy is Policy.MPS:
            return [(total, 1)]
        return [(c, total // c) for c in range(2, total) if total % c == 0
                and total // c >= 2]
    return [(nc, ns)]


def expand_cells(spec: SweepSpec) -> tuple[list[SweepCell], list[str]]:
    """All valid (policy, shape, oversubscription) cells, plus skip notes.

    Cells whose oversubscription exceeds the context count, or whose shape a
    policy cannot take, are skipped and reported rather than silently fixed.
    """
    cells: list[SweepCell] = []
    skipped: list[str] = []
    seen: set[tuple] = set()
    for policy in spec.policies:
        for pair in spec.pairs:
            shapes = _shapes_for(policy, pair)
            if not shapes and pair[1] == 0:
                skipped.append(f"{policy.value}: no context/stream split of "
                               f"{pair[0]} fits this policy")
                continue
            for nc, ns in shapes:
                if policy is Policy.STR and nc != 1:
                    skipped.append(f"{policy.value} {nc}x{ns}: needs a single context")
                    continue
                if policy is Policy.MPS and ns != 1:
                    skipped.append(f"{policy.value} {nc}x{ns}: needs a single stream "
                                   f"per context")
                    continue
                if policy is Policy.MPS_STR and (nc < 2 or ns < 2):
                    skipped.append(f"{policy.value} {nc}x{ns}: needs at least two "
                                   f"contexts and two streams")
                    continue
                for os_value in spec.oversubscription:
                    os_ = float(nc) if os_value == "nc" else float(os_value)
                    if os_ > nc:
                        skipped.append(
                            f"{policy.value} {format_label(nc, ns, os_)}: "
                            f"oversubscription {os_:g} exceeds {nc} context(s)"
                        )
                        continue
                    key = (policy, nc, ns, os_)
                    if key in seen:
                        continue
                    seen.add(key)
                    cells.append(SweepCell(policy, nc, ns, os_))
    return cells, skipped


def run_sweep(spec: SweepSpec, base: ScenarioConfig, *,
              collect_log: bool = False) -> SweepOutcome:
    """Run every cell of the sweep for every seed against the base scenario."""
    cells, skipped = expand_cells(spec)
    outcome = SweepOutcome(skipped=skipped)
    for cell in cells:
        gpu = GpuConfig(
            total_sms=base.gpu.total_sms,
            n_contexts=cell.n_contexts,
            n_streams=cell.n_streams,
            oversubscription=cell.oversubscription,
            policy=cell.policy,
            interference_kappa=base.gpu.interference_kappa,
        )
        for seed in spec.seeds:
            cfg = replace(base, gpu=gpu, seed=seed)
            sim = build_simulation(cfg, collect_log=collect_log)
            result = sim.run()
            outcome.reports.append(result.report)
            outcome.results.append(result)
    return outcome
