"""How the benefit of adjustment depends on R^2.

Dialing the noise sd up lowers the R^2 of the interacted regression. At
each level the ratio mean SE(regression) / mean SE(difference in means) is
recorded. The ratio stays at or below one and climbs toward one as R^2
falls. The table is written as CSV so any plotting tool can draw it.

Run with ``python3 demos/r2_sweep.py [out.csv]``.
"""

import csv
import sys

from rxate import paper_config, r2_sweep

grid = [1.2, 1.5, 2.17, 3.0, 4.5, 7.0, 10.0, 14.0, 20.0]
rows = r2_sweep(paper_config(seed=6, replications=400), grid)

print(f"{'noise sd':>9s} {'mean R^2':>9s} {'SE ratio':>9s}")
for r in rows:
    print(f"{r.noise:9.2f} {r.mean_r2:9.3f} {r.se_ratio:9.3f}")

if len(sys.argv) > 1:
    with open(sys.argv[1], "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["noise", "mean_r2", "se_ratio"])
        wr.writerows((r.noise, r.mean_r2, r.se_ratio) for r in rows)
    print(f"wrote {sys.argv[1]}")
