"""
Error sweep over r and p
========================

The full grid r = 2..14, p = 2..4 with r + q = 82. Takes a few minutes.
"""

from _data import kdv_catalog
from polymanifold import run_sweep
from polymanifold.evaluation import write_records_csv

catalog = kdv_catalog()
records = run_sweep(catalog)
write_records_csv(records, "sweep.csv")
err = {(rec.method, rec.r, rec.p): rec for rec in records}
r_list = sorted({rec.r for rec in records})

print("test error")
print("method           p " + "".join(f"{r:>10d}" for r in r_list))
print("pod              - " + "".join(f"{err['pod', r, 0].test_error:10.2e}" for r in r_list))
for method in ("manifold_pod", "manifold_am"):
    for p in (2, 3, 4):
        print(f"{method:<16} {p} " + "".join(f"{err[method, r, p].test_error:10.2e}" for r in r_list))

print("\nAM cycles")
for p in (2, 3, 4):
    print(f"p={p}: " + " ".join(f"{err['manifold_am', r, p].am_cycles:3d}" for r in r_list))

best = max(r_list, key=lambda r: err["pod", r, 0].test_error / err["manifold_am", r, 4].test_error)
ratio = err["pod", best, 0].test_error / err["manifold_am", best, 4].test_error
print(f"\nlargest POD / AM error ratio: {ratio:.1f} at r={best}, p=4")
