"""Density-matrix workbench: validation, composition, distances, random states.

Everything is dense numpy at desk scale (total dimension <= 256).  A
``DensityMatrix`` is a thin immutable wrapper around a complex array; the
operations live as module-level functions and always return fresh objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

#: Hard cap on the total Hilbert-space dimension handled by this package.
MAX_DIM = 256

#: Tolerance for Hermiticity / positivity / trace checks in :func:`validate`.
VALIDATION_TOL = 1e-9


class StateError(ValueError):
    """Base class for density-matrix contract violations."""


class NotHermitian(StateError):
    """Matrix differs from its conjugate transpose beyond tolerance."""


class NotPSD(StateError):
    """Matrix has an eigenvalue below -tol."""


class BadTrace(StateError):
    """Trace differs from one beyond tolerance."""


class DimMismatch(StateError):
    """Two states that should share a dimension do not."""


class LayoutMismatch(StateError):
    """A subsystem layout is inconsistent with the state it describes."""


class BadRank(StateError):
    """Requested rank outside 1..d."""


class BadLambda(StateError):
    """Mixing parameter outside [0, 1]."""


class DensityMatrix:
    """A density operator on a d-dimensional system.

    Construct directly only from trusted data; route untrusted input through
    :func:`validate`.  The wrapped array is frozen (non-writeable).
    """

    __slots__ = ("mat",)

    def __init__(self, mat: np.ndarray) -> None:
        arr = np.array(mat, dtype=np.complex128)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise StateError(f"expected a square matrix, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "mat", arr)

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("DensityMatrix is immutable")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


@dataclass(frozen=True)
class SystemLayout:
    """An ordered factorization of a Hilbert space into parties.

    ``dims`` lists the local dimension of each party; the total dimension is
    their product.  Every party must have dimension at least 2.
    """

    dims: tuple[int, ...]

    def __init__(self, dims: Iterable[int]) -> None:
        tdims = tuple(int(d) for d in dims)
        if not tdims:
            raise LayoutMismatch("layout needs at least one party")
        if any(d < 2 for d in tdims):
            raise LayoutMismatch(f"every party dimension must be >= 2, got {tdims}")
        object.__setattr__(self, "dims", tdims)

    @property
    def total_dim(self) -> int:
        out = 1
        for d in self.dims:
            out *= d
        return out

    @property
    def parties(self) -> int:
        return len(self.dims)

    def check(self, state: DensityMatrix) -> None:
        if state.dim != self.total_dim:
            raise LayoutMismatch(
                f"layout {self.dims} has total dimension {self.total_dim}, "
                f"state has dimension {state.dim}"
            )


@dataclass
class StatePair:
    """A planted yes/no instance pair for one tester family.

    ``yes_instance`` / ``no_instance`` hold whatever object the tester under
    test consumes (a single state, a tuple of states, ...).  The planted
    distance is exact for the no instance, in the metric named by ``metric``.
    """

    yes_instance: Any
    no_instance: Any
    planted_distance: float
    metric: str = "l1"


def validate(raw: Any, tol: float = VALIDATION_TOL) -> DensityMatrix:
    """Check Hermiticity, positivity and unit trace; return a DensityMatrix.

    Raises
    ------
    NotHermitian, NotPSD, BadTrace
        On the corresponding contract violation (checked in that order).
    StateError
        If the input is not a square matrix or exceeds the dimension cap.
    """
    arr = np.asarray(raw, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise StateError(f"expected a square matrix, got shape {arr.shape}")
    d = arr.shape[0]
    if d > MAX_DIM:
        raise StateError(f"dimension {d} exceeds the supported bound {MAX_DIM}")
    herm_gap = float(np.max(np.abs(arr - arr.conj().T))) if d else 0.0
    if herm_gap > tol:
        raise NotHermitian(f"max |M - M^dag| = {herm_gap:.3e} > tol {tol:.1e}")
    sym = (arr + arr.conj().T) / 2.0
    eigs = np.linalg.eigvalsh(sym)
    if eigs[0] < -tol:
        raise NotPSD(f"minimum eigenvalue {eigs[0]:.3e} < -tol")
    tr = float(np.real(np.trace(sym)))
    if abs(tr - 1.0) > tol:
        raise BadTrace(f"trace = {tr!r}, expected 1 within {tol:.1e}")
    return DensityMatrix(sym)


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Kronecker product of two states (a on the left factor)."""
    return DensityMatrix(np.kron(a.mat, b.mat))


def tensor_all(states: Sequence[DensityMatrix]) -> DensityMatrix:
    """Kronecker product of a non-empty sequence of states, left to right."""
    if not states:
        raise StateError("tensor_all needs at least one state")
    out = states[0].mat
    for s in states[1:]:
        out = np.kron(out, s.mat)
    return DensityMatrix(out)


def partial_trace(
    state: DensityMatrix, layout: SystemLayout, keep: Iterable[int]
) -> DensityMatrix:
    """Trace out every party not in ``keep``.

    ``keep`` is a set of party indices into ``layout.dims``; the reduced state
    is returned on the kept parties in ascending party order.
    """
    layout.check(state)
    m = layout.parties
    keep_t = tuple(sorted(set(int(i) for i in keep)))
    if not keep_t:
        raise LayoutMismatch("keep must name at least one party")
    if keep_t[0] < 0 or keep_t[-1] >= m:
        raise LayoutMismatch(f"keep indices {keep_t} out of range for {m} parties")
    dims = layout.dims
    t = state.mat.reshape(dims + dims)
    cur = list(range(m))
    for p in sorted(set(range(m)) - set(keep_t), reverse=True):
        pos = cur.index(p)
        n = len(cur)
        t = np.trace(t, axis1=pos, axis2=pos + n)
        cur.pop(pos)
    d_out = 1
    for p in cur:
        d_out *= dims[p]
    return DensityMatrix(t.reshape(d_out, d_out))


def marginals(state: DensityMatrix, layout: SystemLayout) -> list[DensityMatrix]:
    """Single-party reduced states, one per party in layout order."""
    return [partial_trace(state, layout, [t]) for t in range(layout.parties)]


def product_of_marginals(state: DensityMatrix, layout: SystemLayout) -> DensityMatrix:
    """The fully uncorrelated state with the same single-party marginals."""
    return tensor_all(marginals(state, layout))


def l1_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Trace distance ||a - b||_1 = sum of |eigenvalues| of the difference."""
    if a.dim != b.dim:
        raise DimMismatch(f"dimensions differ: {a.dim} vs {b.dim}")
    diff = a.mat - b.mat
    diff = (diff + diff.conj().T) / 2.0
    return float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def l2_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Hilbert-Schmidt distance ||a - b||_2 (Frobenius norm)."""
    if a.dim != b.dim:
        raise DimMismatch(f"dimensions differ: {a.dim} vs {b.dim}")
    return float(np.linalg.norm(a.mat - b.mat))


def distance_to_product(
    state: DensityMatrix, layout: SystemLayout, norm: str = "l1"
) -> float:
    """Distance from ``state`` to the product of its own marginals.

    Zero exactly when the parties are independent.  ``norm`` is ``"l1"``
    (trace norm, default) or ``"l2"``.
    """
    prod = product_of_marginals(state, layout)
    if norm == "l1":
        return l1_distance(state, prod)
    if norm == "l2":
        return l2_distance(state, prod)
    raise ValueError(f"unknown norm {norm!r}")


def purity(state: DensityMatrix) -> float:
    """tr(rho^2); 1 for pure states, 1/d for the maximally mixed state."""
    return float(np.real(np.trace(state.mat @ state.mat)))


def maximally_mixed(d: int) -> DensityMatrix:
    return DensityMatrix(np.eye(d) / d)


def pure_from_vector(vec: np.ndarray) -> DensityMatrix:
    """Normalize a state vector and return the corresponding projector."""
    v = np.asarray(vec, dtype=np.complex128).ravel()
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise StateError("zero vector")
    v = v / nrm
    return DensityMatrix(np.outer(v, v.conj()))


def basis_state(d: int, j: int) -> DensityMatrix:
    """Computational basis projector |j><j| in dimension d."""
    v = np.zeros(d)
    v[j] = 1.0
    return pure_from_vector(v)


def maximally_entangled(d: int) -> DensityMatrix:
    """|Phi><Phi| with |Phi> = sum_i |ii> / sqrt(d), on a d x d bipartite space."""
    v = np.zeros(d * d, dtype=np.complex128)
    for i in range(d):
        v[i * d + i] = 1.0
    return pure_from_vector(v)


def ghz(parties: int) -> DensityMatrix:
    """GHZ projector (|0...0> + |1...1>)/sqrt(2) on ``parties`` qubits."""
    D = 2**parties
    v = np.zeros(D, dtype=np.complex128)
    v[0] = 1.0
    v[D - 1] = 1.0
    return pure_from_vector(v)


def random_pure(d: int, rng: np.random.Generator) -> DensityMatrix:
    """Haar-random pure state: normalized complex Gaussian vector projector."""
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return pure_from_vector(v)


def random_mixed(d: int, rank: int, rng: np.random.Generator) -> DensityMatrix:
    """Trace-normalized Wishart state of the requested rank.

    Raises BadRank unless 1 <= rank <= d.  The sampled state has exactly
    ``rank`` nonzero eigenvalues with probability one.
    """
    if not 1 <= rank <= d:
        raise BadRank(f"rank must be in 1..{d}, got {rank}")
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    w = g @ g.conj().T
    return DensityMatrix(w / np.real(np.trace(w)))


def interpolate_toward(
    a: DensityMatrix, b: DensityMatrix, lam: float
) -> DensityMatrix:
    """Convex mixture (1-lam) a + lam b.

    The trace distance from ``a`` moves linearly: it equals
    ``lam * l1_distance(a, b)`` exactly, which is what fixture planting
    relies on.
    """
    if a.dim != b.dim:
        raise DimMismatch(f"dimensions differ: {a.dim} vs {b.dim}")
    if not 0.0 <= lam <= 1.0:
        raise BadLambda(f"mixing parameter must be in [0, 1], got {lam}")
    return DensityMatrix((1.0 - lam) * a.mat + lam * b.mat)


def embed(state: DensityMatrix, layout: SystemLayout, new_dims: Sequence[int]) -> DensityMatrix:
    """Isometrically embed each party into a larger local space (zero padding).

    Party t's basis maps to the first ``layout.dims[t]`` basis states of the
    new ``new_dims[t]``-dimensional space.  Distances between states are
    preserved exactly, which is why measurement channels for non-power-of-two
    dimensions may pad freely.
    """
    layout.check(state)
    new_t = tuple(int(d) for d in new_dims)
    if len(new_t) != layout.parties:
        raise LayoutMismatch("new_dims must list one dimension per party")
    if any(n < d for n, d in zip(new_t, layout.dims)):
        raise LayoutMismatch(f"cannot shrink parties: {layout.dims} -> {new_t}")
    iso = np.ones((1, 1))
    for d_old, d_new in zip(layout.dims, new_t):
        e = np.zeros((d_new, d_old))
        e[:d_old, :d_old] = np.eye(d_old)
        iso = np.kron(iso, e)
    return DensityMatrix(iso @ state.mat @ iso.T)


# ---------------------------------------------------------------------------
# JSON persistence.  Schema: {"dims": [d1, ...], "re": [[...]], "im": [[...]]}
# where dims records the party layout (a single entry for monopartite states).
# ---------------------------------------------------------------------------


def state_to_json(state: DensityMatrix, layout: SystemLayout | None = None) -> str:
    dims = list(layout.dims) if layout is not None else [state.dim]
    if layout is not None:
        layout.check(state)
    return json.dumps(
        {
            "dims": dims,
            "re": np.real(state.mat).tolist(),
            "im": np.imag(state.mat).tolist(),
        }
    )


def state_from_json(text: str) -> tuple[DensityMatrix, SystemLayout]:
    """Parse and validate a serialized state; returns (state, layout)."""
    obj = json.loads(text)
    try:
        dims = [int(d) for d in obj["dims"]]
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise StateError(f"malformed state JSON: {exc}") from exc
    layout = SystemLayout(dims)
    state = validate(re + 1j * im)
    layout.check(state)
    return state, layout


def save_state(state: DensityMatrix, path: str, layout: SystemLayout | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(state_to_json(state, layout))


def load_state(path: str) -> tuple[DensityMatrix, SystemLayout]:
    with open(path, "r", encoding="utf-8") as fh:
        return state_from_json(fh.read())
