"""Tensorizing vectors and contracting multiway arrays.

Walks through the primitives everything else is built on: reshaping flat
vectors into tensors, the mode-k product, multi-mode contraction, and the
multiply-add accounting hook.
"""

import numpy as np

from blockterm import FlopCounter, contract, flatten, mode_product, tensorize

# A vector of length 24 regrouped as a 2 x 3 x 4 tensor. Nothing is copied
# or reordered: entry (i1, i2, i3) is just v[i1*12 + i2*4 + i3].
v = np.arange(24.0)
t = tensorize(v, (2, 3, 4))
print("tensorized shape:", t.shape)
print("entry (1, 2, 3) =", t[1, 2, 3], "(flat index 23)")
print("round trip exact:", np.array_equal(flatten(t), v))

# The mode-k product sums over one matched mode. Contracting two matrices
# over their second modes is the familiar A @ B.T.
rng = np.random.default_rng(0)
a = rng.normal(size=(2, 3))
b = rng.normal(size=(4, 3))
print("\nmode_product(a, b, 2, 2) == a @ b.T:",
      np.allclose(mode_product(a, b, 2, 2), a @ b.T))

# contract() generalizes to several mode pairs summed simultaneously.
x = rng.normal(size=(2, 3, 4))
y = rng.normal(size=(3, 4, 5))
z = contract(x, y, modes_a=(2, 3), modes_b=(1, 2))
print("contract (2,3,4) x (3,4,5) over two pairs ->", z.shape)

# Contracting every mode of equal-shape tensors is the inner product.
w = rng.normal(size=(3, 3))
full = contract(w, w, (1, 2), (1, 2))
print("full contraction equals <w, w>:", np.allclose(full, np.sum(w * w)))

# Every contraction executed inside a FlopCounter scope reports its exact
# multiply-add count: output elements times summed index combinations.
with FlopCounter() as fc:
    contract(x, y, (2, 3), (1, 2))
print("\nmultiply-adds for the (2,3,4)x(3,4,5) contraction:", fc.multiply_adds)
print("expected 2*5 outputs x 12 summed terms =", 2 * 5 * 12)
