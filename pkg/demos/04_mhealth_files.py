"""
Reading MHEALTH logs
====================

Each subject file holds whitespace-separated sensor columns and a final
activity label, where 0 marks unlabelled time. Pass a glob for the real
files, otherwise a small look-alike is written to a temporary directory.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from fedsim.data import load_mhealth_glob, partition_clients

if len(sys.argv) > 1:
    pattern = sys.argv[1]
else:
    tmp = Path(tempfile.mkdtemp())
    rng = np.random.default_rng(0)
    for s in (1, 2):
        rows = np.column_stack([rng.normal(size=(200, 23)), rng.integers(0, 13, 200)])
        np.savetxt(tmp / f"mHealth_subject{s}.log", rows, fmt=["%.5f"] * 23 + ["%d"], delimiter="\t")
    pattern = str(tmp / "mHealth_subject*.log")

data = load_mhealth_glob(pattern)
print(f"{len(data)} labelled rows, {data.n_features} features, {data.class_count} classes")
print("rows per class:", np.bincount(data.y).tolist())

# an equal random split across five clients
for client in partition_clients(data, 5, seed=0):
    print(f"client {client.client_id}: {len(client)} rows")
