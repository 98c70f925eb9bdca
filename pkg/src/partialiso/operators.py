"""Concrete operator constructors and tuple-level helpers.

The central object is `TwistedTuple`: N square matrices V_1..V_N together
with a commuting family of unitary twists U_ij (stored for i < j, with
U_ji read as the adjoint). The builders here produce tuples whose twisted
commutation relations

    V_i* V_j = U_ij V_j V_i*,   V_i V_j = U_ji V_j V_i,   V_k U_ij = U_ij V_k

hold exactly up to rounding; `partialiso.twisted.verify_twisted` measures
the residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    Tolerance,
    adjoint,
    as_matrix,
    identity,
    kron,
    op_norm,
    op_norm_diff,
)

__all__ = [
    "ModelSpec",
    "TwistedTuple",
    "build_model_tuple",
    "build_twisted_shift_pair",
    "clock_shift_unitaries",
    "conjugate_tuple",
    "diag_twist",
    "direct_sum_tuples",
    "haar_unitary",
    "is_partial_isometry",
    "is_power_partial_isometry",
    "permute_tuple",
    "power_isometry_residual",
    "random_commuting_unitaries",
    "random_model_spec",
    "truncated_shift",
]


def truncated_shift(p: int) -> np.ndarray:
    """The p x p truncated shift: e_n -> e_{n+1} for n < p, e_p -> 0.

    For p = 1 this is the 1 x 1 zero matrix.
    """
    if p < 1:
        raise ValueError("truncated shift needs p >= 1")
    j = np.zeros((p, p), dtype=complex)
    for n in range(p - 1):
        j[n + 1, n] = 1.0
    return j


def unitarity_residual(u: np.ndarray) -> float:
    n = u.shape[0]
    return max(
        op_norm_diff(adjoint(u) @ u, identity(n)),
        op_norm_diff(u @ adjoint(u), identity(n)),
    )


def diag_twist(
    p_list: list[int],
    j: int,
    u: np.ndarray,
    aux_dim: int | None = None,
    tol: Tolerance = DEFAULT_TOL,
) -> np.ndarray:
    """Diagonal twist with symbol ``u`` at slot ``j`` (1-based).

    Acts on (C^{p_1} x ... x C^{p_m}) x E by e_k x eta -> e_k x u^{k_j - 1} eta,
    where k_j in {1, ..., p_j} indexes slot j and E = C^{aux_dim}. The result
    is unitary whenever ``u`` is.
    """
    u = as_matrix(u)
    if u.shape[0] != u.shape[1]:
        raise ValueError("twist symbol must be square")
    if aux_dim is not None and u.shape[0] != aux_dim:
        raise ValueError(f"symbol is {u.shape[0]}-dimensional, expected {aux_dim}")
    if not 1 <= j <= len(p_list):
        raise ValueError(f"slot index {j} out of range for {len(p_list)} slots")
    if unitarity_residual(u) > tol.eps:
        raise ValueError("twist symbol is not unitary at tolerance")
    aux = u.shape[0]
    pre = prod(p_list[: j - 1])
    post = prod(p_list[j:])
    p_j = p_list[j - 1]
    blocks = []
    power = identity(aux)
    for _ in range(p_j):
        blocks.append(kron(identity(post), power))
        power = power @ u
    inner = _block_diag(blocks)
    return kron(identity(pre), inner)


def _block_diag(blocks: list[np.ndarray]) -> np.ndarray:
    total = sum(b.shape[0] for b in blocks)
    out = np.zeros((total, total), dtype=complex)
    at = 0
    for b in blocks:
        n = b.shape[0]
        out[at : at + n, at : at + n] = b
        at += n
    return out


def is_partial_isometry(v: np.ndarray, tol: Tolerance = DEFAULT_TOL) -> tuple[bool, float]:
    """Test ||V V* V - V|| <= eps; the residual is always returned."""
    v = as_matrix(v)
    if v.shape[0] != v.shape[1]:
        raise ValueError("expected a square matrix")
    residual = op_norm(v @ adjoint(v) @ v - v)
    return residual <= tol.eps, residual


def power_isometry_residual(v: np.ndarray, max_power: int | None = None) -> float:
    """Worst partial-isometry residual of V^n over n = 1..max_power.

    Defaults to max_power = d + 1 for a d x d input.
    """
    v = as_matrix(v)
    d = v.shape[0]
    if max_power is None:
        max_power = d + 1
    worst = 0.0
    vp = v.copy()
    for _ in range(max_power):
        worst = max(worst, op_norm(vp @ adjoint(vp) @ vp - vp))
        vp = vp @ v
    return worst


def is_power_partial_isometry(
    v: np.ndarray, tol: Tolerance = DEFAULT_TOL
) -> tuple[bool, int | None]:
    """Check V^n is a partial isometry for n = 1..d+1.

    Returns (True, None) when every power passes, else (False, n) with the
    first failing power. Passing this finite check is a heuristic; the
    decomposition round-trip in `partialiso.halmos_wallen` turns it into a
    certificate.
    """
    v = as_matrix(v)
    if v.shape[0] != v.shape[1]:
        raise ValueError("expected a square matrix")
    d = v.shape[0]
    vp = v.copy()
    for n in range(1, d + 2):
        if op_norm(vp @ adjoint(vp) @ vp - vp) > tol.eps:
            return False, n
        vp = vp @ v
    return True, None


@dataclass
class TwistedTuple:
    """N operators on C^dim plus the commuting twist family.

    ``twists`` maps (i, j) with 1 <= i < j <= N to the twist U_ij; missing
    pairs default to the identity (an untwisted, star-commuting pair).
    U_ji is implicitly U_ij*. Construction checks shapes only; the math
    (unitarity, commutation, the twisted relations, the power-partial-
    isometry property of each operator) is verified, not assumed, by
    `partialiso.twisted.verify_twisted`.
    """

    dim: int
    ops: list[np.ndarray]
    twists: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.ops = [as_matrix(v) for v in self.ops]
        if not self.ops:
            raise ValueError("a tuple needs at least one operator")
        for k, v in enumerate(self.ops, 1):
            if v.shape != (self.dim, self.dim):
                raise ValueError(f"operator {k} has shape {v.shape}, expected ({self.dim}, {self.dim})")
        n = len(self.ops)
        normalized: dict[tuple[int, int], np.ndarray] = {}
        for (i, j), u in self.twists.items():
            if not (1 <= i < j <= n):
                raise ValueError(f"twist index pair {(i, j)} out of range (need 1 <= i < j <= {n})")
            u = as_matrix(u)
            if u.shape != (self.dim, self.dim):
                raise ValueError(f"twist {(i, j)} has shape {u.shape}, expected ({self.dim}, {self.dim})")
            normalized[(i, j)] = u
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                normalized.setdefault((i, j), identity(self.dim))
        self.twists = normalized

    @property
    def n_ops(self) -> int:
        return len(self.ops)

    def twist(self, i: int, j: int) -> np.ndarray:
        """U_ij for any ordered pair i != j, reading U_ji as U_ij*."""
        if i == j:
            raise ValueError("twist indices must differ")
        if i < j:
            return self.twists[(i, j)]
        return adjoint(self.twists[(j, i)])

    def pair_keys(self) -> list[tuple[int, int]]:
        return sorted(self.twists.keys())


def build_twisted_shift_pair(
    p: int, lam: complex, tol: Tolerance = DEFAULT_TOL
) -> TwistedTuple:
    """The block pair of twisted truncated-shift tensors on C^{2p^2}.

    With S1 = J_p x I_p and S2 = d[lam] x J_p, the operators are
    V1 = diag(S1, S2) and V2 = diag(S2, S1), twisted by
    U = diag(lam I, conj(lam) I). The relation residuals vanish up to
    rounding; for p = 1 all four blocks are zero.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    lam = complex(lam)
    if abs(abs(lam) - 1.0) > tol.eps:
        raise ValueError(f"lambda must be unimodular, got |lambda| = {abs(lam)}")
    j_p = truncated_shift(p)
    d_lam = np.diag(lam ** np.arange(p)).astype(complex)
    s1 = kron(j_p, identity(p))
    s2 = kron(d_lam, j_p)
    v1 = _block_diag([s1, s2])
    v2 = _block_diag([s2, s1])
    u = _block_diag([lam * identity(p * p), np.conj(lam) * identity(p * p)])
    return TwistedTuple(dim=2 * p * p, ops=[v1, v2], twists={(1, 2): u})


@dataclass
class ModelSpec:
    """Slot data for a tensor model tuple.

    ``slot_kinds`` lists, per operator, either an int p >= 1 (truncated
    shift slot) or the string "u" (unitary slot). ``twist_data`` holds the
    commuting unitaries U_ij on E = C^{aux_dim} for i < j (missing pairs
    default to the identity). ``slot_unitaries`` gives the unitary U_i on E
    for each "u" slot; the family must satisfy U_i* U_j = U_ij U_j U_i* for
    unitary-slot pairs and commute with every U_pq.
    """

    slot_kinds: list[object]
    aux_dim: int
    twist_data: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    slot_unitaries: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.aux_dim < 1:
            raise ValueError("aux_dim must be >= 1")
        kinds: list[object] = []
        for k, kind in enumerate(self.slot_kinds, 1):
            if kind == "u":
                kinds.append("u")
            else:
                p = int(kind)
                if p < 1:
                    raise ValueError(f"slot {k}: shift size must be >= 1, got {p}")
                kinds.append(p)
        self.slot_kinds = kinds
        n = len(kinds)
        full: dict[tuple[int, int], np.ndarray] = {}
        for (i, j), u in self.twist_data.items():
            if not (1 <= i < j <= n):
                raise ValueError(f"twist pair {(i, j)} out of range")
            full[(i, j)] = as_matrix(u)
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                full.setdefault((i, j), identity(self.aux_dim))
        self.twist_data = full
        self.slot_unitaries = {int(i): as_matrix(u) for i, u in self.slot_unitaries.items()}

    @property
    def n_ops(self) -> int:
        return len(self.slot_kinds)

    def shift_slots(self) -> list[int]:
        return [i for i, kind in enumerate(self.slot_kinds, 1) if kind != "u"]

    def unitary_slots(self) -> list[int]:
        return [i for i, kind in enumerate(self.slot_kinds, 1) if kind == "u"]

    def symbol(self, slot: int, op: int) -> np.ndarray:
        """Twist symbol placed at ``slot`` inside operator ``op``."""
        if slot < op:
            return self.twist_data[(slot, op)]
        return adjoint(self.twist_data[(op, slot)])

    def validate(self, tol: Tolerance = DEFAULT_TOL) -> None:
        """Raise ValueError on any relation violation above tolerance."""
        e = self.aux_dim
        pairs = sorted(self.twist_data)
        for key in pairs:
            u = self.twist_data[key]
            if u.shape != (e, e):
                raise ValueError(f"twist {key} must act on C^{e}")
            if unitarity_residual(u) > tol.eps:
                raise ValueError(f"twist {key} is not unitary at tolerance")
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                ua, ub = self.twist_data[pairs[a]], self.twist_data[pairs[b]]
                if op_norm(ua @ ub - ub @ ua) > tol.eps:
                    raise ValueError(f"twists {pairs[a]} and {pairs[b]} do not commute")
        u_slots = self.unitary_slots()
        for i in u_slots:
            if i not in self.slot_unitaries:
                raise ValueError(f"unitary slot {i} is missing its slot unitary")
            ui = self.slot_unitaries[i]
            if ui.shape != (e, e):
                raise ValueError(f"slot unitary {i} must act on C^{e}")
            if unitarity_residual(ui) > tol.eps:
                raise ValueError(f"slot unitary {i} is not unitary at tolerance")
            for key in pairs:
                upq = self.twist_data[key]
                if op_norm(ui @ upq - upq @ ui) > tol.eps:
                    raise ValueError(f"slot unitary {i} does not commute with twist {key}")
        for i in u_slots:
            for j in u_slots:
                if i >= j:
                    continue
                ui, uj = self.slot_unitaries[i], self.slot_unitaries[j]
                lhs = adjoint(ui) @ uj
                rhs = self.twist_data[(i, j)] @ uj @ adjoint(ui)
                if op_norm(lhs - rhs) > tol.eps:
                    raise ValueError(
                        f"slot unitaries {i}, {j} violate the twisted relation with U_{i}{j}"
                    )


def build_model_tuple(spec: ModelSpec, tol: Tolerance = DEFAULT_TOL) -> TwistedTuple:
    """Assemble the tuple on (x_{shift slots} C^{p_i}) x E from a ModelSpec.

    A shift-slot operator is the product of diagonal twists at every
    earlier shift slot with the truncated shift at its own slot; a
    unitary-slot operator carries diagonal twists at every shift slot and
    its slot unitary on E. The ambient twists are I_K x U_ij. Only
    truncated-shift and unitary slots exist in finite dimensions; there is
    no faithful finite model for shift or backward-shift slots, so they
    are not representable here by design.
    """
    spec.validate(tol)
    shift_slots = spec.shift_slots()
    k_dims = [spec.slot_kinds[i - 1] for i in shift_slots]
    k_total = prod(k_dims)
    aux = spec.aux_dim
    dim = k_total * aux
    ops: list[np.ndarray] = []
    for n, kind in enumerate(spec.slot_kinds, 1):
        op = identity(dim)
        for rank, m in enumerate(shift_slots, 1):
            carries = (m < n) if kind != "u" else True
            if m == n or not carries:
                continue
            op = op @ diag_twist(k_dims, rank, spec.symbol(m, n), aux, tol)
        if kind == "u":
            op = op @ kron(identity(k_total), spec.slot_unitaries[n])
        else:
            rank = shift_slots.index(n)
            pre = prod(k_dims[:rank])
            post = prod(k_dims[rank + 1 :])
            op = op @ kron(kron(identity(pre), truncated_shift(kind)), identity(post * aux))
        ops.append(op)
    twists = {
        (i, j): kron(identity(k_total), u) for (i, j), u in spec.twist_data.items()
    }
    return TwistedTuple(dim=dim, ops=ops, twists=twists)


def haar_unitary(dim: int, rng: np.random.Generator | int) -> np.ndarray:
    """Haar-distributed random unitary (QR of a complex Gaussian)."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_commuting_unitaries(dim: int, how_many: int, seed: int) -> list[np.ndarray]:
    """Pairwise commuting unitaries, deterministic per seed.

    All matrices share one random eigenbasis with independent random
    unimodular spectra, so commutators vanish up to rounding.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    q = haar_unitary(dim, rng)
    out = []
    for _ in range(how_many):
        phases = np.exp(2j * np.pi * rng.random(dim))
        out.append(q @ np.diag(phases) @ adjoint(q))
    return out


def clock_shift_unitaries(q: int) -> tuple[np.ndarray, np.ndarray, complex]:
    """Clock and cyclic-shift unitaries on C^q.

    Returns (C, S, omega) with C = diag(1, w, ..., w^{q-1}), S e_k = e_{k+1 mod q}
    and w = exp(2 pi i / q); they satisfy C* S = conj(w) S C*.
    """
    omega = np.exp(2j * np.pi / q)
    clock = np.diag(omega ** np.arange(q)).astype(complex)
    shift = np.zeros((q, q), dtype=complex)
    for k in range(q):
        shift[(k + 1) % q, k] = 1.0
    return clock, shift, omega


def conjugate_tuple(t: TwistedTuple, w: np.ndarray, tol: Tolerance = DEFAULT_TOL) -> TwistedTuple:
    """Conjugate every operator and twist by the unitary ``w``."""
    w = as_matrix(w)
    if w.shape != (t.dim, t.dim):
        raise ValueError(f"conjugator has shape {w.shape}, expected ({t.dim}, {t.dim})")
    if unitarity_residual(w) > tol.eps:
        raise ValueError("conjugator is not unitary at tolerance")
    wh = adjoint(w)
    return TwistedTuple(
        dim=t.dim,
        ops=[w @ v @ wh for v in t.ops],
        twists={key: w @ u @ wh for key, u in t.twists.items()},
    )


def direct_sum_tuples(*tuples: TwistedTuple) -> TwistedTuple:
    """Block-diagonal direct sum; all summands need the same operator count."""
    if not tuples:
        raise ValueError("need at least one tuple")
    n = tuples[0].n_ops
    for t in tuples:
        if t.n_ops != n:
            raise ValueError("all summands must have the same number of operators")
    dim = sum(t.dim for t in tuples)
    ops = [_block_diag([t.ops[k] for t in tuples]) for k in range(n)]
    twists = {
        key: _block_diag([t.twists[key] for t in tuples])
        for key in tuples[0].pair_keys()
    }
    return TwistedTuple(dim=dim, ops=ops, twists=twists)


def permute_tuple(t: TwistedTuple, perm: list[int]) -> TwistedTuple:
    """Reorder operators by ``perm`` (1-based), carrying twists along."""
    n = t.n_ops
    if sorted(perm) != list(range(1, n + 1)):
        raise ValueError(f"perm must be a permutation of 1..{n}")
    ops = [t.ops[perm[k] - 1] for k in range(n)]
    twists = {}
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            twists[(i, j)] = t.twist(perm[i - 1], perm[j - 1])
    return TwistedTuple(dim=t.dim, ops=ops, twists=twists)


def random_model_spec(
    seed: int,
    n_ops: int | None = None,
    max_p: int = 4,
    max_aux: int = 3,
) -> ModelSpec:
    """A seeded random ModelSpec that always validates.

    Twists and slot unitaries are drawn from one commuting family (shared
    random eigenbasis) mixed with random scalar phases; pairs of unitary
    slots stay untwisted, since realizing a nonscalar twist between two
    unitary slots needs special spectra (see `clock_shift_unitaries` for
    the genuinely twisted case used in the tests).
    """
    rng = np.random.default_rng(seed)
    n = int(n_ops) if n_ops is not None else int(rng.integers(1, 5))
    kinds: list[object] = []
    for _ in range(n):
        if rng.random() < 0.3:
            kinds.append("u")
        else:
            kinds.append(int(rng.integers(1, max_p + 1)))
    aux = int(rng.integers(1, max_aux + 1))
    u_slots = [i for i, k in enumerate(kinds, 1) if k == "u"]
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    family = random_commuting_unitaries(
        aux, len(pairs) + len(u_slots), int(rng.integers(2**32))
    )
    it = iter(family)
    twist_data: dict[tuple[int, int], np.ndarray] = {}
    for i, j in pairs:
        member = next(it)
        if i in u_slots and j in u_slots:
            twist_data[(i, j)] = identity(aux)
        elif rng.random() < 0.5:
            twist_data[(i, j)] = np.exp(2j * np.pi * rng.random()) * identity(aux)
        else:
            twist_data[(i, j)] = member
    slot_unitaries = {i: next(it) for i in u_slots}
    return ModelSpec(
        slot_kinds=kinds,
        aux_dim=aux,
        twist_data=twist_data,
        slot_unitaries=slot_unitaries,
    )
