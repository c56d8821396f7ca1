"""Mutually unbiased bases for power-of-two dimensions, and the
measurement channel built from them.

Construction route: the nonidentity Pauli operators on k qubits, viewed as
vectors in F_2^{2k} with the symplectic form, are partitioned into 2^k + 1
maximal commuting classes (a symplectic spread, found by backtracking
search).  Co-diagonalizing each class yields 2^k + 1 bases that are pairwise
mutually unbiased; measuring a uniformly chosen basis realizes the POVM
{ |b_ij><b_ij| / (d+1) } whose outcome distribution embeds the state
isometrically (up to the factor d+1) in l2.

Output is deterministic: the class weights used for co-diagonalization come
from a fixed internal seed, eigenvectors get a first-nonzero-real-positive
phase, and bases/vectors are canonically ordered.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from mubtest.states import DensityMatrix, StateError, SystemLayout, embed

MAX_QUBITS = 4  # partition search guard: k <= 4
MAX_MUB_DIM = 16  # basis construction guard: d <= 16


class PartitionNotFound(StateError):
    """Backtracking failed to partition the Pauli group (out-of-range k)."""


class DegenerateEigenbasis(StateError):
    """Random class Hamiltonian had a (near-)degenerate spectrum repeatedly."""


_SINGLE = {
    (0, 0): np.eye(2, dtype=np.complex128),
    (1, 0): np.array([[0, 1], [1, 0]], dtype=np.complex128),  # X
    (0, 1): np.array([[1, 0], [0, -1]], dtype=np.complex128),  # Z
    (1, 1): np.array([[0, -1], [1, 0]], dtype=np.complex128),  # XZ
}

_LETTER = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


@dataclass(frozen=True)
class PauliOperator:
    """A k-qubit Pauli word in symplectic coordinates.

    Bit t of ``x_bits``/``z_bits`` (counting from the most significant of k
    bits) gives the X/Z exponent on tensor factor t.  ``matrix`` returns the
    Hermitian representative i^{x.z} X^x Z^z.
    """

    k: int
    x_bits: int
    z_bits: int

    @property
    def encoding(self) -> int:
        """Stable integer id: x bits above z bits."""
        return (self.x_bits << self.k) | self.z_bits

    @classmethod
    def from_encoding(cls, k: int, enc: int) -> "PauliOperator":
        mask = (1 << k) - 1
        return cls(k=k, x_bits=(enc >> k) & mask, z_bits=enc & mask)

    @property
    def label(self) -> str:
        out = []
        for t in range(self.k):
            shift = self.k - 1 - t
            out.append(_LETTER[((self.x_bits >> shift) & 1, (self.z_bits >> shift) & 1)])
        return "".join(out)

    def commutes_with(self, other: "PauliOperator") -> bool:
        sym = _parity(self.x_bits & other.z_bits) ^ _parity(self.z_bits & other.x_bits)
        return sym == 0

    def matrix(self) -> np.ndarray:
        m = np.ones((1, 1), dtype=np.complex128)
        for t in range(self.k):
            shift = self.k - 1 - t
            m = np.kron(m, _SINGLE[((self.x_bits >> shift) & 1, (self.z_bits >> shift) & 1)])
        return (1j ** bin(self.x_bits & self.z_bits).count("1")) * m


@dataclass(frozen=True)
class AbelianClass:
    """One maximal commuting class of nonidentity Pauli words."""

    index: int
    members: tuple[PauliOperator, ...]

    @property
    def encodings(self) -> tuple[int, ...]:
        return tuple(p.encoding for p in self.members)


def _symplectic(k: int, a: int, b: int) -> int:
    xa, za = a >> k, a & ((1 << k) - 1)
    xb, zb = b >> k, b & ((1 << k) - 1)
    return _parity(xa & zb) ^ _parity(za & xb)


def _isotropics_containing(v: int, allowed: frozenset[int], k: int):
    """Yield maximal isotropic subspaces (as frozensets of nonzero vectors)
    that contain v and lie inside ``allowed``.

    Exactly one basis chain per subspace is explored: each extension vector
    must be the minimum of its new coset, which canonicalizes the chain.
    """
    full = 1 << k

    def rec(basis: list[int], span: frozenset[int]):
        if len(span) == full:
            yield frozenset(x for x in span if x)
            return
        for c in sorted(allowed - span):
            if any(_symplectic(k, c, b) for b in basis):
                continue
            coset = {c ^ s for s in span}
            if c != min(coset):
                continue
            if not coset <= (allowed | {0}):
                continue
            yield from rec(basis + [c], span | coset)

    yield from rec([v], frozenset({0, v}))


@functools.lru_cache(maxsize=None)
def commuting_partition(k: int) -> tuple[AbelianClass, ...]:
    """Partition the 4^k - 1 nonidentity k-qubit Paulis into 2^k + 1
    maximal commuting classes of size 2^k - 1 each.

    Deterministic (smallest-seed-first backtracking).  Raises
    PartitionNotFound for k outside 1..4.
    """
    if not 1 <= k <= MAX_QUBITS:
        raise PartitionNotFound(f"k must be in 1..{MAX_QUBITS}, got {k}")

    def search(uncovered: frozenset[int]):
        if not uncovered:
            return []
        v = min(uncovered)
        for iso in _isotropics_containing(v, uncovered, k):
            rest = search(uncovered - iso)
            if rest is not None:
                return [iso] + rest
        return None

    found = search(frozenset(range(1, 4**k)))
    if found is None:  # pragma: no cover - cannot happen for k <= 4
        raise PartitionNotFound(f"no symplectic spread found for k={k}")
    classes = sorted(tuple(sorted(s)) for s in found)
    return tuple(
        AbelianClass(
            index=a,
            members=tuple(PauliOperator.from_encoding(k, e) for e in encs),
        )
        for a, encs in enumerate(classes)
    )


@dataclass(frozen=True)
class MubFamily:
    """d + 1 mutually unbiased orthonormal bases in dimension d = 2^k.

    ``bases[i][:, j]`` is the j-th vector of basis i.  Basis 0 is the
    computational basis (the all-Z class comes first in the partition).
    """

    d: int
    k: int
    bases: np.ndarray
    classes: tuple[AbelianClass, ...]

    @property
    def n_bases(self) -> int:
        return self.d + 1

    @property
    def n_outcomes(self) -> int:
        return self.d * (self.d + 1)


def _canonical_vector_order(vecs: np.ndarray) -> np.ndarray:
    """Phase-fix and sort the columns of a unitary into canonical order."""
    d = vecs.shape[0]
    cols = []
    for j in range(d):
        v = vecs[:, j].copy()
        nz = np.flatnonzero(np.abs(v) > 1e-8)[0]
        v = v * (v[nz].conj() / abs(v[nz]))
        cols.append(v)
    keys = [tuple((round(x.real, 9), round(x.imag, 9)) for x in v) for v in cols]
    order = sorted(range(d), key=lambda j: keys[j], reverse=True)
    return np.column_stack([cols[j] for j in order])


@functools.lru_cache(maxsize=None)
def mub_family(d: int) -> MubFamily:
    """Construct the canonical MUB family for d in {2, 4, 8, 16}.

    Each class's joint eigenbasis is found by diagonalizing a random real
    combination of its (commuting, Hermitian) members; degenerate spectra are
    rejected and retried with fresh weights.  The weights come from a fixed
    seed so the family is identical from run to run.
    """
    k = d.bit_length() - 1
    if d < 2 or d != 1 << k:
        raise StateError(f"MUB construction needs a power-of-two dimension, got {d}")
    if d > MAX_MUB_DIM:
        raise StateError(f"dimension {d} exceeds the MUB construction bound {MAX_MUB_DIM}")
    classes = commuting_partition(k)
    rng = np.random.default_rng(0x6D7562 + d)
    bases = np.empty((d + 1, d, d), dtype=np.complex128)
    for cls in classes:
        mats = [p.matrix() for p in cls.members]
        vecs = None
        for _attempt in range(100):
            w = rng.standard_normal(len(mats))
            h = sum(wr * mr for wr, mr in zip(w, mats))
            eigvals, eigvecs = np.linalg.eigh(h)
            gaps = np.diff(np.sort(eigvals))
            scale = max(1.0, float(np.max(np.abs(eigvals))))
            if gaps.size == 0 or np.min(gaps) > 1e-7 * scale:
                vecs = eigvecs
                break
        if vecs is None:
            raise DegenerateEigenbasis(
                f"class {cls.index} produced degenerate spectra 100 times"
            )
        bases[cls.index] = _canonical_vector_order(vecs)
    bases.setflags(write=False)
    return MubFamily(d=d, k=k, bases=bases, classes=classes)


def pad_dim(d: int) -> int:
    """Smallest power of two >= d."""
    if d < 1:
        raise StateError(f"dimension must be positive, got {d}")
    return 1 << (d - 1).bit_length()


@dataclass(frozen=True)
class MubPovm:
    """The rank-one POVM { |b_ij><b_ij| / (d+1) } over all d(d+1) basis vectors.

    Outcome (i, j) flattens to index i*d + j.
    """

    family: MubFamily

    @property
    def n_outcomes(self) -> int:
        return self.family.n_outcomes

    def effects(self) -> np.ndarray:
        """Explicit effect operators, shape (d+1, d, d, d)."""
        fam = self.family
        d = fam.d
        out = np.empty((d + 1, d, d, d), dtype=np.complex128)
        for i in range(d + 1):
            for j in range(d):
                v = fam.bases[i][:, j]
                out[i, j] = np.outer(v, v.conj()) / (d + 1)
        return out


def mub_povm(d: int) -> MubPovm:
    return MubPovm(family=mub_family(d))


def channel_probabilities(state: DensityMatrix, povm: MubPovm | MubFamily) -> np.ndarray:
    """Outcome distribution of the MUB POVM on ``state``.

    Returns a flat length-d(d+1) vector, outcome (i, j) at index i*d + j.
    """
    fam = povm.family if isinstance(povm, MubPovm) else povm
    if state.dim != fam.d:
        raise StateError(f"state dimension {state.dim} != POVM dimension {fam.d}")
    # p[i, j] = <b_ij| rho |b_ij> / (d+1)
    p = np.einsum("aij,ik,akj->aj", fam.bases.conj(), state.mat, fam.bases)
    p = np.real(p) / (fam.d + 1)
    return np.maximum(p, 0.0).ravel()


@dataclass(frozen=True)
class MubDecomposition:
    """Coefficients of a state over MUB projectors.

    Single system: ``nu[i, j] = <b_ij|rho|b_ij> - 1/d`` and ``mu``/``chi``
    are None.  Bipartite: ``nu`` holds party-1 marginal coefficients,
    ``mu`` party-2, and ``chi`` the correlation block indexed
    [i, j, s, t]; then
    ``<b_ij x a_st|rho|b_ij x a_st> = 1/(d1 d2) + mu[s,t]/d1 + nu[i,j]/d2 + chi``.
    """

    dims: tuple[int, ...]
    nu: np.ndarray
    mu: np.ndarray | None = None
    chi: np.ndarray | None = None


def mub_decompose(state: DensityMatrix, family: MubFamily | None = None) -> MubDecomposition:
    """Single-system MUB coefficients (rows sum to zero; 1/d + sum nu^2 = purity)."""
    fam = family if family is not None else mub_family(state.dim)
    if state.dim != fam.d:
        raise StateError(f"state dimension {state.dim} != family dimension {fam.d}")
    raw = np.einsum("aij,ik,akj->aj", fam.bases.conj(), state.mat, fam.bases)
    nu = np.real(raw) - 1.0 / fam.d
    return MubDecomposition(dims=(fam.d,), nu=nu)


def mub_decompose_bipartite(state: DensityMatrix, layout: SystemLayout) -> MubDecomposition:
    """Bipartite MUB coefficients (both local dimensions must be powers of two)."""
    if layout.parties != 2:
        raise StateError(f"expected a bipartite layout, got {layout.dims}")
    layout.check(state)
    d1, d2 = layout.dims
    fam1, fam2 = mub_family(d1), mub_family(d2)
    from mubtest.states import partial_trace  # local import to avoid cycle noise

    nu = mub_decompose(partial_trace(state, layout, [0]), fam1).nu
    mu = mub_decompose(partial_trace(state, layout, [1]), fam2).nu
    # joint[i, j, s, t] = <b_ij x a_st| rho |b_ij x a_st>
    t = state.mat.reshape(d1, d2, d1, d2)
    joint = np.einsum(
        "aic,sjd,ijkl,akc,sld->acsd",
        fam1.bases.conj(),
        fam2.bases.conj(),
        t,
        fam1.bases,
        fam2.bases,
    )
    joint = np.real(joint)
    chi = (
        joint
        - 1.0 / (d1 * d2)
        - mu[None, None, :, :] / d1
        - nu[:, :, None, None] / d2
    )
    return MubDecomposition(dims=(d1, d2), nu=nu, mu=mu, chi=chi)


def recompose(decomp: MubDecomposition) -> DensityMatrix:
    """Invert a MUB decomposition back to the density matrix."""
    if decomp.chi is None:
        (d,) = decomp.dims
        fam = mub_family(d)
        m = np.eye(d, dtype=np.complex128) / d
        for i in range(d + 1):
            for j in range(d):
                v = fam.bases[i][:, j]
                m += decomp.nu[i, j] * np.outer(v, v.conj())
        return DensityMatrix(m)
    d1, d2 = decomp.dims
    fam1, fam2 = mub_family(d1), mub_family(d2)
    eye1 = np.eye(d1, dtype=np.complex128)
    eye2 = np.eye(d2, dtype=np.complex128)
    m = np.kron(eye1, eye2) / (d1 * d2)
    proj1 = np.empty((d1 + 1, d1, d1, d1), dtype=np.complex128)
    for i in range(d1 + 1):
        for j in range(d1):
            v = fam1.bases[i][:, j]
            proj1[i, j] = np.outer(v, v.conj())
    proj2 = np.empty((d2 + 1, d2, d2, d2), dtype=np.complex128)
    for s in range(d2 + 1):
        for t in range(d2):
            v = fam2.bases[s][:, t]
            proj2[s, t] = np.outer(v, v.conj())
    for s in range(d2 + 1):
        for t in range(d2):
            m += decomp.mu[s, t] * np.kron(eye1 / d1, proj2[s, t])
    for i in range(d1 + 1):
        for j in range(d1):
            m += decomp.nu[i, j] * np.kron(proj1[i, j], eye2 / d2)
    for i in range(d1 + 1):
        for j in range(d1):
            for s in range(d2 + 1):
                for t in range(d2):
                    m += decomp.chi[i, j, s, t] * np.kron(proj1[i, j], proj2[s, t])
    return DensityMatrix(m)


@dataclass(frozen=True)
class LocalMubPovm:
    """Per-party MUB POVM on a multipartite system, with power-of-two padding.

    Party t is isometrically padded from layout.dims[t] to padded_dims[t]
    (distances are preserved); its outcome alphabet has size
    padded_dims[t] * (padded_dims[t] + 1).  Joint outcomes flatten in C
    order, party 0 slowest.
    """

    layout: SystemLayout
    padded_dims: tuple[int, ...]
    families: tuple[MubFamily, ...]

    @property
    def outcome_dims(self) -> tuple[int, ...]:
        return tuple(dp * (dp + 1) for dp in self.padded_dims)

    @property
    def n_outcomes(self) -> int:
        out = 1
        for o in self.outcome_dims:
            out *= o
        return out


def local_mub_povm(layout: SystemLayout) -> LocalMubPovm:
    padded = tuple(pad_dim(d) for d in layout.dims)
    fams = tuple(mub_family(dp) for dp in padded)
    return LocalMubPovm(layout=layout, padded_dims=padded, families=fams)


def _vector_stack(fam: MubFamily) -> np.ndarray:
    """All d(d+1) basis vectors as rows, outcome-ordered, scaled by 1/sqrt(d+1)."""
    d = fam.d
    rows = np.empty((d * (d + 1), d), dtype=np.complex128)
    for i in range(d + 1):
        rows[i * d : (i + 1) * d] = fam.bases[i].T
    return rows / np.sqrt(d + 1)


def local_channel_probabilities(state: DensityMatrix, povm: LocalMubPovm) -> np.ndarray:
    """Joint outcome distribution of per-party MUB measurements.

    The state is padded party-by-party first; the returned flat vector runs
    over the product outcome alphabet in C order.
    """
    povm.layout.check(state)
    padded = embed(state, povm.layout, povm.padded_dims)
    stack = np.ones((1, 1), dtype=np.complex128)
    for fam in povm.families:
        stack = np.kron(stack, _vector_stack(fam))
    p = np.einsum("od,de,oe->o", stack.conj(), padded.mat, stack)
    return np.maximum(np.real(p), 0.0)


def family_residuals(fam: MubFamily) -> dict[str, float]:
    """Self-check numbers: worst deviations from the MUB definition.

    unbiasedness: max | |<b_ij|b_i'j'>|^2 - 1/d | over distinct bases;
    orthonormality: max |B_i^dag B_i - I|; completeness: max entry of
    |sum_ij effects - I|.
    """
    d = fam.d
    unb = 0.0
    orth = 0.0
    for i in range(d + 1):
        g = fam.bases[i].conj().T @ fam.bases[i]
        orth = max(orth, float(np.max(np.abs(g - np.eye(d)))))
        for i2 in range(i + 1, d + 1):
            overlaps = np.abs(fam.bases[i].conj().T @ fam.bases[i2]) ** 2
            unb = max(unb, float(np.max(np.abs(overlaps - 1.0 / d))))
    total = np.zeros((d, d), dtype=np.complex128)
    for i in range(d + 1):
        total += fam.bases[i] @ fam.bases[i].conj().T
    comp = float(np.max(np.abs(total / (d + 1) - np.eye(d))))
    return {"unbiasedness": unb, "orthonormality": orth, "completeness": comp}
