"""
Summing models without seeing them
==================================

Each client adds pairwise masks to its fixed-point weights. One masked
update looks like noise, but the masks cancel in the sum.
"""

import numpy as np

from fedsim import init_model, merge_models
from fedsim import secagg as S
from fedsim.nn import flatten

t = 4
models = [init_model([5, 8, 3], seed=i) for i in range(t)]
seeds = S.deal_pairwise_seeds(t, seed=7)

updates = [S.client_update(m, i, seeds, round_index=1) for i, m in enumerate(models)]

# what the aggregator receives from client 0, next to the plain encoding
plain = S.encode_fixed(models[0]).values[:4]
print("encoded :", plain)
print("masked  :", updates[0].masked.values[:4])

# the masks of all clients add to zero modulo 2**64
ring = np.zeros(models[0].n_params, dtype=np.uint64)
for i in range(t):
    ring += S.gen_masks(i, seeds, 1, models[0].n_params)
print("mask sum is zero:", not ring.any())

total = S.aggregate_masked(updates, t)
secure = S.decode_sum(total, t, like=models[0])
gap = np.max(np.abs(flatten(secure) - flatten(merge_models(models))))
print(f"largest difference from the plaintext mean: {gap:.2e} (bound {t * 2.0**-25:.2e})")

# updates travel as bytes
blob = updates[0].to_bytes()
print(len(blob), "bytes on the wire for", models[0].n_params, "weights")
