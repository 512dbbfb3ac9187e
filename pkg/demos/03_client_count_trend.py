"""
How the number of clients affects accuracy
==========================================

The same data is split across more and more clients. With a single merge
each client sees only its own shard, so accuracy falls as shards shrink.
With repeated merging the effect largely disappears on this data.

Takes a couple of minutes.
"""

from fedsim.federation import FederationConfig
from fedsim.harness import BASELINE, DataSource, ExperimentGrid, run_grid

source = DataSource(synthetic=(6000, 23, 12, 6.0))
counts = (3, 5, 10, 15, 30)

for rounds in (1, 10):
    grid = ExperimentGrid(
        source=source,
        base=FederationConfig(t=1, rounds=rounds, local_epochs=10),
        client_counts=counts,
        repetitions=3,
    )
    summary = {row["t"]: row for row in run_grid(grid).summary()}
    print(f"\n{rounds} round(s); baseline accuracy {summary[BASELINE]['accuracy_mean']:.4f}")
    for t in counts:
        row = summary[t]
        print(f"  t={t:<3} accuracy {row['accuracy_mean']:.4f} +- {row['accuracy_std']:.4f}")
