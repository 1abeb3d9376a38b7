"""Pruned descent against the unaware tree and an exhaustive DFT sweep.

Runs a handful of trials at two SNRs on a reduced array (M = 32) and prints
mean rate, evaluations and overhead-to-target per method.  Bump ``trials``
for smoother numbers; the CLI ``sweep`` command does the same at full size.

    python3 demos/training_comparison.py
"""

from blockhcb import experiments as ex
from blockhcb.config import scenario_from_dict

sc = scenario_from_dict({
    "system": {"M": 32, "N": 64},
    "stage1": {"snapshots": 8, "starts": 2},
    "trials": 6,
})
rows = ex.sweep(sc, ex.SweepSpec("snr_db", (10.0, 30.0)))

print(f"{'snr':>5} {'method':>15} {'rate':>7} {'evals':>6} {'overhead':>9} {'outage':>7}")
for r in ex.summarize(rows, sc.system.M):
    print(f"{r['axis_value']:>5.0f} {r['method']:>15} {r['rate_mean']:>7.2f} "
          f"{r['evaluations_mean']:>6.1f} {r['overhead_mean']:>9.1f} {r['outage_fraction']:>7.2f}")
