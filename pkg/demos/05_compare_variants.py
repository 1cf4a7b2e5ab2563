"""
Comparing the three policy variants
===================================

``compare`` trains every (env, variant, seed) cell and reports the mean
final success rate and return per cell, plus directional verdicts.  The
probe separates the variants within a few iterations; for the manipulation
tasks use the default budget, roughly a minute and a half per cell on one
core, e.g. ``compare(["pick-place-lite"], variants, seeds=5)``.
"""

from pathlib import Path

from chronoskill import RunConfig, compare, plot_curves

variants = ["multi-head", "time-obs", "vanilla"]
out = Path("runs/demo-compare")
table = compare(["two-phase-probe"], variants, seeds=3, base=RunConfig(eval_interval=5), out_dir=out, iterations=30)
print(table.format())

series = {v: sorted((out / "two-phase-probe" / v).glob("seed*/metrics.csv")) for v in variants}
plot_curves(series, out / "curves.svg", title="two-phase-probe")
