"""Admission tests, rejection of hopeless load, and low-priority migration.

Run with: python3 demos/03_admission_and_migration.py
"""

from stagesim import GpuConfig, Policy
from stagesim.gpu import build_contexts
from stagesim.model import Priority, StageProfile, TaskSpec, TaskState, make_job
from stagesim.scheduler import Scheduler
from stagesim.timing import TimingTracker


def task(task_id, period, priority, work, width=16):
    return TaskSpec.periodic(task_id, period=period, priority=priority,
                             stages=(StageProfile(work, width),))


def main():
    config = GpuConfig(total_sms=64, n_contexts=2, n_streams=2,
                       oversubscription=1.0, policy=Policy.MPS_STR)
    specs = [
        task(1, 0.020, Priority.HP, 0.009),      # 45% of a stream
        task(2, 0.020, Priority.LP, 0.019),      # 95%
        task(3, 0.020, Priority.LP, 0.01625),    # 81%
        task(4, 0.020, Priority.LP, 0.016),      # 80%
        task(5, 0.020, Priority.LP, 0.015625),   # 78%
    ]
    states = {s.id: TaskState.fresh(s) for s in specs}
    for s in specs:
        states[s.id].full_load_time = s.stages[0].nominal_time
    tracker = TimingTracker(states.values())
    sched = Scheduler(tracker, build_contexts(config), config)
    sched.populate_contexts(list(states.values()))
    print("Greedy placement by descending utilization:")
    for ctx_id, ids in sched.ctx_tasks.items():
        print(f"  context {ctx_id}: tasks {sorted(ids)}")

    print("\nReleasing one job per task at t=0:")
    for task_id in (1, 2, 3, 5, 4):
        st = states[task_id]
        job = make_job(st, 0.0, tracker, job_id=task_id)
        placement = sched.admit_or_migrate(job, 0.0)
        if placement.rejected:
            outcome = "rejected everywhere"
        elif placement.migrated_from is not None:
            outcome = (f"migrated ctx {placement.migrated_from} -> "
                       f"{placement.context}")
        else:
            outcome = f"admitted on ctx {placement.context}"
        print(f"  task {task_id} ({st.task.priority.value}): {outcome}")
        for audit in placement.audits:
            print(f"      ctx {audit.context}: active {audit.active_util:.2f} "
                  f"+ candidate {audit.job_util:.2f} vs limit {audit.limit:.2f} "
                  f"-> {'pass' if audit.admitted else 'fail'}")

    print("\nHigh-priority jobs skip the test entirely; low-priority jobs that")
    print("fail at home try every other context, ranked by predicted finish.")


if __name__ == "__main__":
    main()
