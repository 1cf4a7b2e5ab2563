"""
One run from start to finish
============================

Train a short multi-head agent on pick-place, reload the checkpoint,
evaluate it and dump a trajectory annotated with the acting head.
Raise ``iterations`` to about 100 for an agent that actually succeeds.
"""

import json
from pathlib import Path

from chronoskill import RunConfig, dump_trajectory, evaluate, plot_curves, run_training

out = Path("runs/demo-pick-place")
config = RunConfig.for_env("pick-place-lite", "multi-head", heads=8,
                           ppo={"iterations": 10}, seed=0, out_dir=str(out), eval_interval=5)
result = run_training(config)
print(open(out / "metrics.csv").read())

report = evaluate(out / "checkpoint.ckpt", "pick-place-lite", n_episodes=10, base_seed=1000)
print("held-out:", report.mean_return, report.success_rate)

records = [json.loads(r) for r in dump_trajectory(out / "checkpoint.ckpt", "pick-place-lite", 7, out / "traj.jsonl")]
# consecutive steps by the same head form one segment of the episode
segments = []
for r in records:
    if not segments or segments[-1][0] != r["head_index"]:
        segments.append([r["head_index"], r["t"], r["t"]])
    segments[-1][2] = r["t"]
for j, first, last in segments:
    print(f"head {j}: steps {first}-{last}, gripper at {records[last]['p']}, held={records[last]['held']}")

plot_curves([out / "metrics.csv"], out / "curve.svg", title="pick-place-lite")
