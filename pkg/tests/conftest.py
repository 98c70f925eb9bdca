"""Shared seeded generators for the test suite."""

from __future__ import annotations

import numpy as np
from scipy.linalg import block_diag

from partialiso import (
    TwistedTuple,
    build_model_tuple,
    conjugate_tuple,
    direct_sum_tuples,
    haar_unitary,
    kron,
    random_model_spec,
    truncated_shift,
)


def leaf_key(item):
    """Sort key for (multiindex, mult) pairs with mixed int and "u" entries."""
    multiindex, mult = item
    return tuple((1,) if e == "u" else (0, e) for e in multiindex), mult


def random_hw_instance(seed: int):
    """A scrambled direct sum: random unitary (dim <= 6) plus up to 3 blocks
    J_p x I_m with p <= 5, m <= 3, conjugated by a Haar unitary.

    Returns (matrix, unitary_dim, expected block multiset merged by p).
    """
    rng = np.random.default_rng(seed)
    u_dim = int(rng.integers(0, 7))
    n_blocks = int(rng.integers(0, 4))
    if u_dim == 0 and n_blocks == 0:
        n_blocks = 1
    blocks = [(int(rng.integers(1, 6)), int(rng.integers(1, 4))) for _ in range(n_blocks)]
    parts = []
    if u_dim:
        parts.append(haar_unitary(u_dim, rng))
    for p, m in blocks:
        parts.append(kron(truncated_shift(p), np.eye(m, dtype=complex)))
    v = block_diag(*parts).astype(complex)
    w = haar_unitary(v.shape[0], rng)
    merged: dict[int, int] = {}
    for p, m in blocks:
        merged[p] = merged.get(p, 0) + m
    return w @ v @ w.conj().T, u_dim, sorted(merged.items())


def random_scrambled_model(seed: int, n_ops: int | None = None, max_dim: int = 64):
    """A seeded model tuple, scrambled; resamples until the dimension fits.

    Returns (tuple, spec) with the scramble applied to the tuple only.
    """
    sub_seed = seed
    while True:
        spec = random_model_spec(sub_seed, n_ops=n_ops, max_p=3, max_aux=2)
        t = build_model_tuple(spec)
        if t.dim <= max_dim:
            break
        sub_seed += 10_000
    scrambled = conjugate_tuple(t, haar_unitary(t.dim, seed + 777))
    return scrambled, spec


def random_decomposition_instance(seed: int):
    """A scrambled, possibly direct-summed model tuple with N <= 4, dim <= 64.

    Returns (tuple, expected) where expected is the sorted list of
    (multiindex, mult_dim) leaves, merged across summands that share a
    multiindex.
    """
    rng = np.random.default_rng(seed)
    n_ops = int(rng.integers(1, 5))
    n_summands = 1 if rng.random() < 0.6 else 2
    summands = []
    specs = []
    sub_seed = seed * 13 + 1
    while len(summands) < n_summands:
        spec = random_model_spec(sub_seed, n_ops=n_ops, max_p=3, max_aux=2)
        t = build_model_tuple(spec)
        sub_seed += 1
        total = sum(s.dim for s in summands) + t.dim
        if t.dim <= 32 and total <= 64:
            summands.append(t)
            specs.append(spec)
    combined = summands[0] if len(summands) == 1 else direct_sum_tuples(*summands)
    scrambled = conjugate_tuple(combined, haar_unitary(combined.dim, seed + 31))
    merged: dict[tuple, int] = {}
    for spec in specs:
        key = tuple(spec.slot_kinds)
        merged[key] = merged.get(key, 0) + spec.aux_dim
    expected = sorted(merged.items(), key=leaf_key)
    return scrambled, expected


def non_power_partial_isometry_3d() -> np.ndarray:
    """Partial isometry on C^3 whose square is not one: columns
    e_3, 0, (e_1 + e_2) / sqrt(2)."""
    v = np.zeros((3, 3), dtype=complex)
    v[2, 0] = 1.0
    v[0, 2] = 1.0 / np.sqrt(2.0)
    v[1, 2] = 1.0 / np.sqrt(2.0)
    return v


def single_op_tuple(m: np.ndarray) -> TwistedTuple:
    m = np.asarray(m, dtype=complex)
    return TwistedTuple(dim=m.shape[0], ops=[m])
