"""How the parameter count moves with core order and rank.

For a 4096 -> 256 map the count N * (sum_k I_k*J_k*R + R^d) first collapses
as the factorization deepens (the factor term shrinks), then climbs again
once the R^d core dominates, except at R=1 where the core stays a single
scalar per block.  Writes sweep.csv; renders a log-scale plot when
matplotlib is importable.
"""

from collections import defaultdict
from pathlib import Path

from blockterm import SweepConfig, run_sweep

out_dir = Path("results/sweep_demo")
cfg = SweepConfig(input_size=4096, output_size=256,
                  d_values=(1, 2, 3, 4, 5, 6, 7, 8), ranks=(1, 2, 4, 8))
rows, notes = run_sweep(cfg, out_dir=out_dir)

dense = next(r[6] for r in rows if r[0] == "dense")
print(f"dense baseline: {dense} parameters\n")

curves = defaultdict(dict)
for row in rows:
    if row[0] == "block_term":
        curves[row[2]][row[1]] = row[6]

d_values = sorted(next(iter(curves.values())).keys())
print("params by core order (columns) and rank (rows):")
print(f"{'rank':>5} " + " ".join(f"d={d:<8}" for d in d_values))
for rank in sorted(curves):
    cells = " ".join(f"{curves[rank][d]:<10}" for d in d_values)
    print(f"{rank:>5} {cells}")

print("\nfactorizations used:")
for note in notes:
    print(" ", note)
print(f"\nCSV written to {out_dir}/sweep.csv")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not available; skipping the plot")
else:
    fig, ax = plt.subplots(figsize=(6, 4))
    for rank in sorted(curves):
        ds = sorted(curves[rank])
        ax.plot(ds, [curves[rank][d] for d in ds], marker="o", label=f"R={rank}")
    ax.axhline(dense, color="k", linestyle="--", label="dense")
    ax.set_yscale("log")
    ax.set_xlabel("core order d")
    ax.set_ylabel("parameters")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "sweep.png", dpi=120)
    print(f"plot written to {out_dir}/sweep.png")
