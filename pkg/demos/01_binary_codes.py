"""
Binary codes and Hamming distance
=================================

Codes are vectors over {-1, +1}. They are stored packed, one bit per entry,
so distances reduce to XOR plus popcount.
"""

# %%
import numpy as np

from proxyhash import BinaryCode, PackedCodes, hamming_distance, hamming_matrix, inner_product, sgn

rng = np.random.default_rng(0)

# sgn maps 0 to +1, so every real vector has a well-defined code
print(sgn([0.7, -0.2, 0.0]))

# %%
# For length-k codes the inner product and the Hamming distance carry the
# same information: <a, b> = k - 2 d_H(a, b).
a = BinaryCode.from_signs(rng.choice([-1, 1], 32))
b = BinaryCode.from_signs(rng.choice([-1, 1], 32))
print("d_H =", hamming_distance(a, b), " <a,b> =", inner_product(a, b))

# %%
# Packed batches compare all pairs at once.
queries = PackedCodes.from_signs(rng.choice([-1, 1], size=(3, 64)))
database = PackedCodes.from_signs(rng.choice([-1, 1], size=(5, 64)))
print(queries.words.dtype, queries.words.shape)
print(hamming_matrix(queries, database))
