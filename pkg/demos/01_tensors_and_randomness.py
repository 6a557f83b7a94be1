"""
Tensors and reproducible randomness
===================================

The library computes everything on rank 1..4 float64 tensors and draws every
random number from one named generator (SplitMix64 + Box-Muller), so any
result can be pinned to a seed, bit for bit.
"""
import numpy as np

from batchtrim import Prng, Tensor, conv2d_forward, create, matmul, maxpool2_forward, randn

print("Tensors and reproducible randomness")
print("=" * 40)

###############################################################################
# Creation and matrix product
# ---------------------------

a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
b = Tensor(np.array([[5.0, 6.0], [7.0, 8.0]]))
print("a @ b =")
print(matmul(a, b).array)

eye = Tensor(np.eye(2))
print("a @ I identical to a, bit for bit:", np.array_equal(matmul(a, eye).array, a.array))

###############################################################################
# Seeded draws: same seed, same bits
# ----------------------------------

first = randn(Prng(7), [5], mean=0.0, std=1.0)
second = randn(Prng(7), [5], mean=0.0, std=1.0)
print("\nrandn(seed=7):", np.round(first.array, 4))
print("drawn again  :", np.round(second.array, 4))
print("bit-identical:", np.array_equal(first.array, second.array))

big = randn(Prng(42), [100000], mean=0.0, std=1.0).array
print(f"100k samples: mean {big.mean():+.4f} (want 0), std {big.std():.4f} (want 1)")

###############################################################################
# Convolution and pooling kernels
# -------------------------------

x = create([1, 1, 4, 4], 0.0)
x.array[0, 0] = np.arange(16.0).reshape(4, 4)
identity_kernel = create([1, 1, 3, 3], 0.0)
identity_kernel.array[0, 0, 1, 1] = 1.0
out = conv2d_forward(x, identity_kernel, create([1], 0.0))
print("\nconv with a center-1 kernel reproduces the input:",
      np.array_equal(out.array, x.array))

pooled, argmax = maxpool2_forward(x)
print("2x2 max pool of a 0..15 ramp:")
print(pooled.array[0, 0])
print("argmax positions (3 = bottom-right of each window):")
print(argmax[0, 0])
