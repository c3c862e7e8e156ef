"""Windowed execution estimates, the utilization switch, and deadline splitting.

Run with: python3 demos/02_execution_tracking.py
"""

from stagesim.model import Priority, StageProfile, TaskSpec, TaskState
from stagesim.timing import TimingTracker


def main():
    spec = TaskSpec.periodic(
        1, period=0.100, priority=Priority.HP,
        stages=(StageProfile(0.002, 16), StageProfile(0.003, 16),
                StageProfile(0.005, 24)),
    )
    state = TaskState.fresh(spec)
    state.full_load_time = 0.020  # measured offline with every stream busy
    tracker = TimingTracker([state])

    print("Before any job completes, admission sees the busy-system baseline:")
    print(f"  utilization = {tracker.utilization(1):.2f} "
          f"(full-load 20ms / period 100ms)\n")

    print("Each stage keeps the max of its last five observed times:")
    for observed in (0.0021, 0.0019, 0.0024, 0.0020, 0.0022, 0.0018):
        tracker.record_execution(1, 0, observed)
    tracker.record_execution(1, 1, 0.0031)
    tracker.record_execution(1, 2, 0.0052)
    for j in range(3):
        print(f"  stage {j}: estimate {tracker.stage_estimate(1, j) * 1e3:.2f}ms")

    tracker.note_job_complete(1)
    print("\nAfter the first completion the estimate replaces the baseline:")
    print(f"  utilization = {tracker.utilization(1):.4f} "
          f"(sum of stage peaks / period)\n")

    shares = tracker.deadline_shares(1)
    print("The 100ms deadline splits across stages in proportion to those peaks:")
    for j, s in enumerate(shares):
        print(f"  stage {j}: {s * 1e3:.2f}ms")
    print(f"  total {sum(shares) * 1e3:.2f}ms (the last stage absorbs any residue)")


if __name__ == "__main__":
    main()
