"""
A task no stationary policy can solve
=====================================

The probe has two steps and a constant observation.  Reward is +a on the
first step and -a on the second, so any policy that ignores time scores 0
while the best schedule (+1 then -1) scores 2.
"""

from chronoskill import RunConfig, make_spec, optimal_return, run_training

print("optimum", optimal_return(make_spec("two-phase-probe")))

for variant in ("multi-head", "time-obs", "vanilla"):
    config = RunConfig.for_env("two-phase-probe", variant, ppo={"iterations": 40},
                               seed=0, eval_episodes=5, eval_interval=10)
    result = run_training(config, write=False)
    curve = [round(r.mean_return, 2) for _, r in result.reports]
    print(f"{variant:<11}", curve)
