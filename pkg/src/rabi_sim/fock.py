"""Truncated Fock-space primitives.

Conventions used everywhere in the package:

* quadrature X = (a + a^dagger)/sqrt(2), so the vacuum variance is 1/2;
* the qubit lives in a single-rail mode ``d`` with |g> = |0>_d and |e> = |1>_d;
* composite spaces follow the order of a :class:`ModeLayout`, Kronecker
  products taken left to right.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import (DegenerateHerald, InvalidDimension, LayoutConflict,
                     LayoutError, NotPSD)

LABELS = ("u", "u'", "d", "d'", "a", "env")

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
LEAKAGE_TOL = 1e-6


def _frozen(arr):
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModeLayout:
    """Ordered named modes with their Fock cutoffs."""

    modes: tuple

    def __post_init__(self):
        modes = tuple((str(lab), int(dim)) for lab, dim in self.modes)
        labels = [m[0] for m in modes]
        if len(set(labels)) != len(labels):
            raise LayoutConflict(f"duplicate mode labels in {labels}")
        for lab, dim in modes:
            if lab not in LABELS:
                raise LayoutError(f"unknown mode label {lab!r}")
            if dim < 2:
                raise InvalidDimension(f"mode {lab} has dim {dim} < 2")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def of(cls, **dims) -> "ModeLayout":
        # keyword order is preserved; 'up'/'dp' stand in for the primed labels
        alias = {"up": "u'", "dp": "d'"}
        return cls(tuple((alias.get(k, k), v) for k, v in dims.items()))

    @property
    def labels(self) -> tuple:
        return tuple(m[0] for m in self.modes)

    @property
    def dims(self) -> tuple:
        return tuple(m[1] for m in self.modes)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"mode {label!r} not in layout {self.labels}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.dims))

    def multi_index(self, flat: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(flat, self.dims))

    def sub(self, labels: Iterable[str]) -> "ModeLayout":
        labels = list(labels)
        for lab in labels:
            self.index(lab)
        return ModeLayout(tuple(m for m in self.modes if m[0] in labels))

    def without(self, labels: Iterable[str]) -> "ModeLayout":
        labels = set(labels)
        for lab in labels:
            self.index(lab)
        return ModeLayout(tuple(m for m in self.modes if m[0] not in labels))

    def __add__(self, other: "ModeLayout") -> "ModeLayout":
        return ModeLayout(self.modes + other.modes)


@dataclass(frozen=True)
class StateVector:
    layout: ModeLayout
    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        amp = _frozen(np.ravel(self.amplitudes))
        if amp.size != self.layout.size:
            raise LayoutError(f"{amp.size} amplitudes for layout of size {self.layout.size}")
        object.__setattr__(self, "amplitudes", amp)
        if self.normalized and abs(self.norm2 - 1.0) > 1e-12:
            raise ValueError(f"state flagged normalized has norm^2 {self.norm2}")

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def dm(self) -> "DensityOperator":
        return DensityOperator(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOperator:
    """Mixed state. ``ensemble`` optionally keeps the (weight, pure state)
    decomposition for Fock-diagonal inputs."""

    layout: ModeLayout
    matrix: np.ndarray
    ensemble: tuple = field(default=(), compare=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        n = self.layout.size
        if m.shape != (n, n):
            raise LayoutError(f"matrix shape {m.shape} does not fit layout size {n}")
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def representation(self) -> str:
        return "fock-diagonal-ensemble" if self.ensemble else "dense"

    def tensor(self) -> np.ndarray:
        return self.matrix.reshape(self.layout.dims * 2)

    def check(self, psd_tol: float = PSD_TOL) -> "DensityOperator":
        """Raise if the operator is not a valid (sub)normalized state."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise NotPSD("density operator is not Hermitian")
        tr = self.trace
        if not 0.0 < tr <= 1.0 + 1e-10:
            raise NotPSD(f"trace {tr} outside (0, 1]")
        w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if w[0] < -psd_tol:
            raise NotPSD(f"negative eigenvalue {w[0]:.3e}")
        if self.ensemble:
            weights = np.array([e[0] for e in self.ensemble])
            if np.any(weights < 0) or abs(weights.sum() - tr) > 1e-9:
                raise NotPSD("ensemble weights inconsistent with trace")
        return self

    def normalized(self) -> "DensityOperator":
        tr = self.trace
        if tr < 1e-14:
            raise DegenerateHerald(f"trace {tr:.3e}")
        ens = tuple((w / tr, s) for w, s in self.ensemble)
        return DensityOperator(self.layout, self.matrix / tr, ens)

    @classmethod
    def from_ensemble(cls, components) -> "DensityOperator":
        """Build from (weight, StateVector) pairs sharing one layout."""
        components = tuple(components)
        layout = components[0][1].layout
        terms = [w * np.outer(s.amplitudes, s.amplitudes.conj()) for w, s in components]
        return cls(layout, ksum(terms), components)


@dataclass(frozen=True)
class OperatorMatrix:
    """Matrix on the composite space of ``layout``.

    ``edge_exempt`` records whether unitarity only holds away from the
    truncation edge (true for anything built from a, a^dagger exponentials).
    """

    layout: ModeLayout
    matrix: np.ndarray
    kind: str = "unitary"
    edge_exempt: bool = False

    def __post_init__(self):
        if self.kind not in ("unitary", "kraus", "conditional-map"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        m = _frozen(self.matrix)
        n = self.layout.size
        if m.shape != (n, n):
            raise LayoutError(f"matrix shape {m.shape} does not fit layout size {n}")
        object.__setattr__(self, "matrix", m)

    @property
    def H(self) -> "OperatorMatrix":
        return OperatorMatrix(self.layout, self.matrix.conj().T, self.kind, self.edge_exempt)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            if other.layout != self.layout:
                raise LayoutError("operator layouts differ")
            kind = "unitary" if self.kind == other.kind == "unitary" else "conditional-map"
            return OperatorMatrix(self.layout, self.matrix @ other.matrix, kind,
                                  self.edge_exempt or other.edge_exempt)
        if isinstance(other, StateVector):
            return apply(self, other)
        if isinstance(other, DensityOperator):
            return apply(self, other)
        return NotImplemented

    def __mul__(self, c):
        return OperatorMatrix(self.layout, c * self.matrix, "conditional-map", self.edge_exempt)

    __rmul__ = __mul__


def ksum(arrays):
    """Neumaier-compensated sum of equally shaped arrays."""
    arrays = list(arrays)
    total = np.zeros_like(np.asarray(arrays[0], dtype=complex))
    comp = np.zeros_like(total)
    for a in arrays:
        t = total + a
        big = np.abs(total) >= np.abs(a)
        comp += np.where(big, (total - t) + a, (a - t) + total)
        total = t
    return total + comp


# --- builders -------------------------------------------------------------

def _check_dim(dim):
    if int(dim) < 2:
        raise InvalidDimension(f"dim {dim} < 2")
    return int(dim)


@lru_cache(maxsize=None)
def _a(dim):
    m = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    m.setflags(write=False)
    return m


def lowering(dim: int) -> np.ndarray:
    """Raw annihilation matrix (read-only)."""
    return _a(_check_dim(dim))


def annihilation_op(dim: int, label: str = "u") -> OperatorMatrix:
    return OperatorMatrix(ModeLayout(((label, _check_dim(dim)),)), _a(dim), "conditional-map")


def number_op(dim: int, label: str = "u") -> OperatorMatrix:
    dim = _check_dim(dim)
    return OperatorMatrix(ModeLayout(((label, dim),)), np.diag(np.arange(dim, dtype=float)),
                          "conditional-map")


def quadrature(dim: int, theta: float = 0.0) -> np.ndarray:
    a = _a(_check_dim(dim)).astype(complex)
    return (a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)) / np.sqrt(2)


def quadrature_op(dim: int, theta: float = 0.0, label: str = "u") -> OperatorMatrix:
    return OperatorMatrix(ModeLayout(((label, _check_dim(dim)),)), quadrature(dim, theta),
                          "conditional-map")


@lru_cache(maxsize=None)
def x_eigh(dim: int):
    """Eigendecomposition of the truncated X (real symmetric)."""
    x = quadrature(dim).real
    w, v = np.linalg.eigh(x)
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def function_of_x(dim: int, f, pad: int = 0) -> np.ndarray:
    """f(X) on the truncated space, through the eigenbasis of X.

    With ``pad`` > 0 the function is evaluated on a larger cutoff and then
    cut back, which removes edge artifacts of the truncated X spectrum.
    """
    w, v = x_eigh(_check_dim(dim) + pad)
    return ((v * f(w)) @ v.T)[:dim, :dim]


def pauli_ops(label: str = "d"):
    """(sx, sy, sz, s_plus, s_minus) on {|0>_d, |1>_d}; s_plus|0> = |1>."""
    lay = ModeLayout(((label, 2),))
    sx = np.array([[0, 1], [1, 0]])
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.array([[1, 0], [0, -1]])
    sp = np.array([[0, 0], [1, 0]])
    return (OperatorMatrix(lay, sx), OperatorMatrix(lay, sy), OperatorMatrix(lay, sz),
            OperatorMatrix(lay, sp, "conditional-map"),
            OperatorMatrix(lay, sp.T, "conditional-map"))


def embed_qubit(op2: np.ndarray, dim: int) -> np.ndarray:
    """Place a 2x2 qubit matrix in the lowest two levels of a dim-level mode."""
    m = np.zeros((dim, dim), dtype=complex)
    m[:2, :2] = op2
    return m


def identity(layout: ModeLayout) -> OperatorMatrix:
    return OperatorMatrix(layout, np.eye(layout.size))


def fock_state(layout: ModeLayout, **occupation) -> StateVector:
    """Product Fock state; unlisted modes are in vacuum."""
    alias = {"up": "u'", "dp": "d'"}
    occ = {alias.get(k, k): v for k, v in occupation.items()}
    idx = [occ.get(lab, 0) for lab in layout.labels]
    for (lab, dim), n in zip(layout.modes, idx):
        if not 0 <= n < dim:
            raise InvalidDimension(f"occupation {n} outside mode {lab} of dim {dim}")
    amp = np.zeros(layout.size, dtype=complex)
    amp[layout.flat_index(idx)] = 1.0
    return StateVector(layout, amp, True)


def single_mode(vec, label: str = "u", normalize_it: bool = False) -> StateVector:
    vec = np.asarray(vec, dtype=complex)
    if normalize_it:
        vec = vec / np.linalg.norm(vec)
    return StateVector(ModeLayout(((label, vec.size),)), vec)


def tensor(parts):
    """Kronecker product of states or operators on disjoint layouts."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to tensor")
    layout = parts[0].layout
    for p in parts[1:]:
        layout = layout + p.layout
    first = parts[0]
    if isinstance(first, StateVector):
        amp = first.amplitudes
        for p in parts[1:]:
            amp = np.kron(amp, p.amplitudes)
        return StateVector(layout, amp, all(p.normalized for p in parts))
    if isinstance(first, DensityOperator):
        m = first.matrix
        for p in parts[1:]:
            m = np.kron(m, p.matrix)
        return DensityOperator(layout, m)
    m = first.matrix
    for p in parts[1:]:
        m = np.kron(m, p.matrix)
    kinds = {p.kind for p in parts}
    kind = "unitary" if kinds == {"unitary"} else ("kraus" if kinds <= {"unitary", "kraus"} else "conditional-map")
    return OperatorMatrix(layout, m, kind, any(p.edge_exempt for p in parts))


# --- local application ------------------------------------------------------

def apply_local(matrix: np.ndarray, tens: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply ``matrix`` (acting on the modes at ``axes``, in that order) to
    the tensor ``tens`` without forming the composite operator."""
    sub_dims = [tens.shape[ax] for ax in axes]
    k = len(axes)
    op = np.asarray(matrix).reshape(sub_dims * 2)
    out = np.tensordot(op, tens, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def apply(op: OperatorMatrix, obj):
    """Apply an operator defined on a sub-layout to a state or density operator."""
    lay = obj.layout
    axes = [lay.index(lab) for lab in op.layout.labels]
    for lab, dim in op.layout.modes:
        if lay.dim(lab) != dim:
            raise LayoutError(f"dim mismatch on mode {lab}: {dim} vs {lay.dim(lab)}")
    if isinstance(obj, StateVector):
        return StateVector(lay, apply_local(op.matrix, obj.tensor(), axes))
    n = len(lay.modes)
    t = apply_local(op.matrix, obj.tensor(), axes)
    t = apply_local(op.matrix.conj(), t, [n + ax for ax in axes])
    return DensityOperator(lay, t.reshape(lay.size, lay.size))


def as_dm(obj) -> DensityOperator:
    return obj.dm() if isinstance(obj, StateVector) else obj


def partial_trace(rho, keep: Iterable[str]) -> DensityOperator:
    rho = as_dm(rho)
    lay = rho.layout
    keep = list(keep)
    if not keep:
        raise LayoutError("keep must be nonempty")
    keep_idx = sorted(lay.index(lab) for lab in keep)
    gone = [i for i in range(len(lay.modes)) if i not in keep_idx]
    n = len(lay.modes)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[i + n] if i in keep_idx else letters[i] for i in range(n)]
    out = "".join(row[i] for i in keep_idx) + "".join(col[i] for i in keep_idx)
    t = np.einsum("".join(row) + "".join(col) + "->" + out, rho.tensor())
    new = lay.without(lay.labels[i] for i in gone)
    return DensityOperator(new, t.reshape(new.size, new.size))


def partial_transpose(rho, mode) -> np.ndarray:
    """Transpose the indices of ``mode`` (a label or list of labels)."""
    rho = as_dm(rho)
    lay = rho.layout
    labels = [mode] if isinstance(mode, str) else list(mode)
    n = len(lay.modes)
    perm = list(range(2 * n))
    for lab in labels:
        i = lay.index(lab)
        perm[i], perm[i + n] = perm[i + n], perm[i]
    return rho.tensor().transpose(perm).reshape(lay.size, lay.size)


def normalize(state: StateVector):
    """Return (normalized state, squared norm of the input)."""
    w = state.norm2
    if w < 1e-28:
        raise DegenerateHerald("zero vector cannot be normalized")
    return StateVector(state.layout, state.amplitudes / np.sqrt(w), True), w


def top_population(obj, label: str) -> float:
    """Population of the highest retained Fock level of ``label``."""
    lay = obj.layout
    i = lay.index(label)
    if isinstance(obj, StateVector):
        t = np.moveaxis(obj.tensor(), i, 0)
        return float(np.sum(np.abs(t[-1]) ** 2))
    red = partial_trace(obj, [label])
    return float(red.matrix[-1, -1].real)


def leakage_report(obj) -> dict:
    return {lab: top_population(obj, lab) for lab in obj.layout.labels}


def is_unitary(op: OperatorMatrix, tol: float = 1e-10, edge_tol: float = 1e-8) -> bool:
    """Unitarity test honouring the truncation-edge exemption.

    With the exemption, U^dagger U = I is only required on basis states whose
    occupations all lie below 80% of each cutoff.
    """
    m = op.matrix
    g = m.conj().T @ m
    err = np.abs(g - np.eye(len(g)))
    if err.max(initial=0.0) <= tol:
        return True
    if not op.edge_exempt:
        return False
    keep = _interior_mask(op.layout)
    return err[np.ix_(keep, keep)].max(initial=0.0) <= edge_tol


def _interior_mask(layout: ModeLayout) -> np.ndarray:
    grids = np.indices(layout.dims).reshape(len(layout.dims), -1)
    lim = np.array([max(1, int(np.floor(0.8 * d))) for d in layout.dims])[:, None]
    return np.all(grids < lim, axis=0)
