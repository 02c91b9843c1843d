"""A 64 -> 64 linear map stored in a few hundred parameters.

Builds block-term decompositions at several ranks, checks they act exactly
like their dense reconstructions, and verifies the analytic gradients with
finite differences.
"""

import numpy as np

from blockterm import FactorizedShape, init_btd, param_count, validate_ranks

shape = FactorizedShape(input_dims=(8, 8), output_dims=(8, 8))
print("factorized 64 -> 64 map; dense storage would need 4096 scalars\n")

print(f"{'rank':>4} {'blocks':>6} {'params':>7} {'vs dense':>9}")
for rank, blocks in ((1, 1), (1, 2), (4, 1), (8, 1)):
    p = param_count(shape, blocks, rank)
    print(f"{rank:>4} {blocks:>6} {p:>7} {p / 4096:>8.1%}")

# Oversized ranks are allowed but warned about: beyond min(I_k, J_k) the
# extra directions add parameters without adding expressiveness.
for w in validate_ranks(shape, 9):
    print("warning:", w)

# The compressed forward pass never materializes the dense matrix, yet
# matches it to floating-point accuracy.
rng = np.random.default_rng(1)
btd = init_btd(shape, n_blocks=2, rank=4, seed=42)
x = rng.normal(size=64)
y = btd.forward(x)
y_dense = btd.reconstruct_dense() @ x
print("\nforward vs dense reconstruction, max abs diff:",
      float(np.max(np.abs(y - y_dense))))

# Backward returns gradients for every core, every factor, and the input.
dy = rng.normal(size=64)
grads = btd.backward(x, dy)
print("gradient tensors:", len(grads.d_cores), "cores,",
      sum(len(f) for f in grads.d_factors), "factors, plus d_input")

# Spot-check one coordinate against a central finite difference.
h = 1e-6
target = btd.factors[0][1]
orig = target[3, 2, 1]
target[3, 2, 1] = orig + h
hi = float(dy @ btd.forward(x))
target[3, 2, 1] = orig - h
lo = float(dy @ btd.forward(x))
target[3, 2, 1] = orig
numeric = (hi - lo) / (2 * h)
exact = float(grads.d_factors[0][1][3, 2, 1])
print(f"factor grad check: analytic {exact:.10f} vs numeric {numeric:.10f}")
