"""How the GPU model carves SMs into contexts and rates concurrent stages.

Run with: python3 demos/01_partitioning_and_rates.py
"""

from stagesim import GpuConfig, Policy, allocate_rates, sm_per_context, water_fill
from stagesim.model import Priority, StageProfile, TaskSpec, TaskState, make_job
from stagesim.timing import TimingTracker


def stage_on(ctx, width, work=0.004, job_id=1):
    spec = TaskSpec.periodic(job_id, period=0.1, priority=Priority.LP,
                             stages=(StageProfile(work, width),))
    state = TaskState.fresh(spec)
    state.full_load_time = work
    job = make_job(state, 0.0, TimingTracker([state]), job_id=job_id)
    return (job.stage_jobs[0], ctx)


def main():
    config = GpuConfig(total_sms=68, n_contexts=6, n_streams=1,
                       oversubscription=6.0, policy=Policy.MPS)
    print("A 68-SM GPU, six contexts, oversubscription 6:")
    print(f"  each context is granted {sm_per_context(config)} SMs "
          f"(raw share rounded up to an even count)\n")

    print("Water-filling inside one 48-SM budget, widths 32 / 24 / 8:")
    alloc, level = water_fill([32, 24, 8], 48.0)
    print(f"  allocations {alloc} at water level {level}")
    print("  the narrow kernel keeps its full width; the wide ones split the rest\n")

    shared = GpuConfig(total_sms=64, n_contexts=2, n_streams=2,
                       oversubscription=2.0, policy=Policy.MPS_STR)
    active = [stage_on(1, 48, job_id=1), stage_on(1, 32, job_id=2),
              stage_on(2, 16, job_id=3)]
    result = allocate_rates(active, shared)
    print("Two oversubscribed contexts competing for 64 SMs:")
    for (stage, ctx), sms, rate in zip(active, result.allocated, result.rates):
        print(f"  ctx {ctx} width {stage.width:>2}: {sms:5.1f} SMs -> "
              f"progress rate {rate:.3f}")
    print(f"  global scale {result.scale:.3f} keeps the sum within the hardware")


if __name__ == "__main__":
    main()
