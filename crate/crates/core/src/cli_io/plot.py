"""Shell spectra and norm growth from trajectory.csv and diagnostics.csv."""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent


def read(name):
    with open(here / name, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(x) for x in row] for row in rows[1:]]


head, traj = read("trajectory.csv")
shells = [int(h[2:]) for h in head[1:]]
fig, (spec, growth) = plt.subplots(1, 2, figsize=(11, 4.5))

picks = sorted({round(i * (len(traj) - 1) / 5) for i in range(6)})
for i in picks:
    row = traj[i]
    amps = [abs(a) if a != 0 else float("nan") for a in row[1:]]
    spec.semilogy(shells, amps, marker=".", label=f"t = {row[0]:.5g}")
spec.set_xlabel("shell j")
spec.set_ylabel("|a_j|")
spec.legend(fontsize="small")

dhead, diag = read("diagnostics.csv")
times = [r[0] for r in diag]
for c, name in enumerate(dhead):
    if name.startswith("hnorm_"):
        growth.semilogy(times, [r[c] for r in diag], label=name)
growth.set_xlabel("t")
growth.set_ylabel("norm")
growth.legend(fontsize="small")

fig.tight_layout()
fig.savefig(here / "plots.png", dpi=150)
