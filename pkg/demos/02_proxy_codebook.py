"""
Learning a proxy codebook
=========================

Each category gets one binary proxy code. A small network maps one-hot
category vectors to codes and is trained until every pair of proxies is at
least k/2 bits apart.
"""

# %%
import numpy as np

from proxyhash import Hyperparams, SgdConfig, hamming_matrix, train_phnet

hp = Hyperparams(bits=32)
codebook, net, losses = train_phnet(8, hp, SgdConfig(seed=0))
print(f"trained for {len(losses)} epochs, final loss {losses[-1]:.3f}")

# %%
d = hamming_matrix(codebook.packed(), codebook.packed())
print(d)
off = ~np.eye(codebook.c, dtype=bool)
print("closest pair:", d[off].min(), "bits (target >=", hp.bits // 2, ")")

# %%
# Bit balance: how evenly each bit splits the categories.
print("per-bit sums:", codebook.codes.sum(axis=0))
