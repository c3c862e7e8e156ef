"""Eight fixed priority levels with earliest-deadline order inside each.

Run with: python3 demos/04_priority_dispatch.py
"""

from stagesim import GpuConfig, Policy
from stagesim.gpu import build_contexts
from stagesim.model import Priority, StageProfile, TaskSpec, TaskState, make_job
from stagesim.scheduler import AblationFlags, Scheduler
from stagesim.timing import TimingTracker


def ready_stage(sched, tracker, state, *, stage_index, missed, deadline, job_id):
    job = make_job(state, 0.0, tracker, job_id=job_id)
    stage = job.stage_jobs[stage_index]
    stage.virtual_abs_deadline = deadline
    stage.predecessor_missed = missed
    sched.ready[1].append(stage)
    return stage


def build(flags=AblationFlags()):
    config = GpuConfig(total_sms=64, n_contexts=1, n_streams=4,
                       oversubscription=1.0, policy=Policy.STR)
    specs = [
        TaskSpec.periodic(i, period=0.05, priority=prio,
                          stages=(StageProfile(0.002, 16),
                                  StageProfile(0.002, 16)))
        for i, prio in ((1, Priority.HP), (2, Priority.HP),
                        (3, Priority.LP), (4, Priority.LP))
    ]
    states = [TaskState.fresh(s) for s in specs]
    for st in states:
        st.full_load_time = 0.004
    tracker = TimingTracker(states)
    sched = Scheduler(tracker, build_contexts(config), config, flags=flags)
    # four ready stages covering both priority classes and both boosts
    ready_stage(sched, tracker, states[0], stage_index=1, missed=False,
                deadline=0.040, job_id=1)   # HP final stage
    ready_stage(sched, tracker, states[1], stage_index=0, missed=True,
                deadline=0.010, job_id=2)   # HP, predecessor ran late
    ready_stage(sched, tracker, states[2], stage_index=1, missed=False,
                deadline=0.015, job_id=3)   # LP final stage
    ready_stage(sched, tracker, states[3], stage_index=0, missed=False,
                deadline=0.005, job_id=4)   # LP, earliest deadline of all
    return sched


def drain(sched):
    order = []
    while True:
        stage = sched.dispatch(1, 0.0)
        if stage is None:
            return order
        key = sched.priority_key(stage)
        order.append(f"task {stage.task_id} (level {key.level}, "
                     f"deadline {key.edf_key * 1e3:.0f}ms)")


def main():
    print("Default dispatch order (class, then stage boosts, then deadline):")
    for line in drain(build()):
        print(f"  {line}")

    print("\nWith fixed levels ablated, only deadlines order the queue:")
    for line in drain(build(AblationFlags(no_fixed=True))):
        print(f"  {line}")


if __name__ == "__main__":
    main()
