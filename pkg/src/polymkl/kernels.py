"""Base Gram matrices, their elementwise (Hadamard) powers, and product-kernel
Gram assembly.

A product kernel is identified by a MultiIndex: an ordered tuple of base-kernel
indices. Index 0 is the constant kernel (all-ones Gram) when enabled; indices
1..r are the per-variable linear kernels k_j(x, x') = x_j * x'_j. The empty
tuple is the degree-0 kernel, identically 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, MultiIndex


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class GramMatrix:
    """A symmetric n x n kernel matrix tagged with where it came from."""

    values: np.ndarray
    provenance: MultiIndex | str = "combined"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise KernelError(f"Gram matrix must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise KernelError("non-finite entry in Gram matrix")
        object.__setattr__(self, "values", values)


class BaseKernelSet:
    """Immutable bundle of base Grams, their sum S, and cached powers S^(.)0..D.

    Shared read-only by the sampler, gradient, and optimizer code; never
    mutated after construction.
    """

    def __init__(self, base: list[np.ndarray], indices: list[int], inputs: np.ndarray, D: int):
        if len(base) != len(indices) or not base:
            raise KernelError("base matrices and indices must align and be nonempty")
        if D < 0:
            raise KernelError("D must be nonnegative")
        self.n = base[0].shape[0]
        self.D = D
        self.inputs = inputs
        self.indices = list(indices)
        # one contiguous block holding all base Grams; per-kernel views avoid
        # duplicating it, and the flattened view lets the sampler take all
        # entrywise sums sum_ts W_ts K_j,ts in a single matrix-vector product
        self._block = np.stack([np.asarray(K, dtype=np.float64) for K in base])
        self.base = [self._block[i] for i in range(len(base))]
        self.stacked_flat = self._block.reshape(len(base), self.n * self.n)
        self._by_index = {j: K for j, K in zip(indices, self.base)}
        self.S = np.zeros((self.n, self.n))
        for K in self.base:
            self.S += K
        # powers[d] = S^(.)d elementwise; powers[0] is all ones. O(D n^2) total.
        powers = [np.ones((self.n, self.n))]
        for _ in range(D):
            powers.append(powers[-1] * self.S)
        self.powers = powers

    @property
    def num_kernels(self) -> int:
        return len(self.base)

    @property
    def has_constant(self) -> bool:
        return 0 in self._by_index

    def kernel(self, j: int) -> np.ndarray:
        try:
            return self._by_index[j]
        except KeyError:
            raise KernelError(f"no base kernel with index {j}") from None


def build_base_kernels(data: Dataset, include_constant: bool, D: int) -> BaseKernelSet:
    """Per-variable linear Grams K_j = x_j x_j^T, optionally plus an all-ones
    constant kernel, with S = sum K_j and its Hadamard powers precomputed."""
    if D < 0:
        raise KernelError("D must be nonnegative")
    base = []
    indices = []
    if include_constant:
        base.append(np.ones((data.n, data.n)))
        indices.append(0)
    for j in range(1, data.r + 1):
        col = data.inputs[:, j - 1]
        base.append(np.outer(col, col))
        indices.append(j)
    return BaseKernelSet(base=base, indices=indices, inputs=data.inputs, D=D)


def hadamard_power(mat: GramMatrix, d: int) -> GramMatrix:
    """Elementwise d-th power; d = 0 gives the all-ones matrix.

    Computed by repeated multiplication so it agrees bit for bit with a cached
    chain of elementwise products.
    """
    if d < 0:
        raise KernelError("Hadamard power must be nonnegative")
    out = np.ones_like(mat.values)
    for _ in range(d):
        out = out * mat.values
    return GramMatrix(out, provenance=mat.provenance if d == 1 else "combined")


def product_kernel_matrix(ks: BaseKernelSet, idx: MultiIndex) -> GramMatrix:
    """Elementwise product of the selected base Grams; empty idx is all-ones."""
    out = np.ones((ks.n, ks.n))
    for j in idx:
        out = out * ks.kernel(j)
    return GramMatrix(out, provenance=tuple(idx))


def product_kernel_cross(
    train_inputs: np.ndarray, query_inputs: np.ndarray, idx: MultiIndex
) -> np.ndarray:
    """Cross Gram (n_query x n_train): entry (q, t) is the product kernel
    evaluated at (x_t, x_q). Index 0 contributes the constant factor 1."""
    train_inputs = np.asarray(train_inputs)
    query_inputs = np.asarray(query_inputs)
    if train_inputs.shape[1] != query_inputs.shape[1]:
        raise KernelError(
            f"column mismatch: train has {train_inputs.shape[1]}, query has {query_inputs.shape[1]}"
        )
    out = np.ones((query_inputs.shape[0], train_inputs.shape[0]))
    for j in idx:
        if j == 0:
            continue
        if not 1 <= j <= train_inputs.shape[1]:
            raise KernelError(f"base kernel index {j} out of range")
        out = out * np.outer(query_inputs[:, j - 1], train_inputs[:, j - 1])
    return out


def count_index_set(r: int, D: int) -> tuple[int, int]:
    """(ordered tuple count sum_{d<=D} r^d, distinct multiset count C(r+D, D))."""
    if r < 1 or D < 0:
        raise KernelError("need r >= 1 and D >= 0")
    ordered = sum(r**d for d in range(D + 1))
    distinct = math.comb(r + D, D)
    return ordered, distinct
