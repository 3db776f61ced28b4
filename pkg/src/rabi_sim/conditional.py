"""Detector models, heralding, and the analytic conditional maps.

The analytic maps are functions of the truncated X matrix of mode u, built
through its eigendecomposition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateHerald, LayoutError, TruncationRisk
from .fock import (DensityOperator, ModeLayout, OperatorMatrix, StateVector,
                   apply_local, function_of_x, partial_trace)
from .gaussian import _expi, _bs_gen, squeezed_displaced_vacuum, squeezing

DETECTOR_KINDS = ("onoff", "fock-resolving", "trace-out")
MIN_PROBABILITY = 1e-14


@dataclass(frozen=True)
class DetectorModel:
    kind: str
    mode: str

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")

    def povm(self, dim: int) -> dict:
        """Outcome -> POVM element on the detected mode."""
        if self.kind == "onoff":
            p0 = np.zeros((dim, dim))
            p0[0, 0] = 1.0
            return {"no-click": p0, "click": np.eye(dim) - p0}
        if self.kind == "fock-resolving":
            return {n: np.diag((np.arange(dim) == n).astype(float)) for n in range(dim)}
        return {None: np.eye(dim)}


@dataclass(frozen=True)
class CorrectionSpec:
    """Local corrections applied to mode u after heralding.

    ``gaussian`` is the coefficient c of an extra numerical filter
    exp(-c X^2); a negative c undoes a Gaussian envelope.
    """

    r_corr: float = 0.0
    inverse_displacement: float = 0.0
    apply_stage: str = "numerical"
    gaussian: float = 0.0

    def __post_init__(self):
        if self.apply_stage not in ("pre", "post", "numerical"):
            raise ValueError(f"unknown apply_stage {self.apply_stage!r}")

    def matrix(self, dim: int) -> np.ndarray:
        m = function_of_x(dim, lambda x: np.exp(-self.gaussian * x ** 2
                                                - 1j * self.inverse_displacement * x))
        if self.r_corr:
            m = squeezing(dim, self.r_corr).matrix @ m
        return m


def r_corr(kappa: float, r: float = 0.0) -> float:
    """Anti-squeezing that compensates the Gaussian envelope of O0/O1."""
    return -np.log(kappa ** 2 / (np.exp(2 * r) + 1) + 1) / 2


def _outcome_key(detector, outcome):
    if detector.kind == "onoff" and outcome not in ("click", "no-click"):
        raise ValueError("onoff outcomes are 'click' or 'no-click'")
    if detector.kind == "fock-resolving" and not isinstance(outcome, (int, np.integer)):
        raise ValueError("fock-resolving outcome must be a photon number")
    return outcome


def herald(state, detector: DetectorModel, outcome=None):
    """Condition on ``outcome`` at ``detector.mode`` and remove that mode.

    Returns (unnormalized residual, probability). Rank-one outcomes on pure
    states keep a StateVector; everything else yields a DensityOperator.
    """
    lay = state.layout
    i = lay.index(detector.mode)
    dim = lay.dims[i]
    rest = lay.without([detector.mode])
    if detector.kind == "trace-out":
        out = partial_trace(state, rest.labels)
        return _checked(out, out.trace)
    outcome = _outcome_key(detector, outcome)
    if detector.kind == "fock-resolving" and not 0 <= outcome < dim:
        raise LayoutError(f"outcome {outcome} outside mode {detector.mode}")
    levels = ([outcome] if detector.kind == "fock-resolving"
              else [0] if outcome == "no-click" else list(range(1, dim)))
    if isinstance(state, StateVector):
        t = np.moveaxis(state.tensor(), i, 0)
        if len(levels) == 1:
            out = StateVector(rest, t[levels[0]])
            return _checked(out, out.norm2)
        vecs = t[levels].reshape(len(levels), -1)
        m = vecs.T @ vecs.conj()
        out = DensityOperator(rest, m)
        return _checked(out, out.trace)
    n = len(lay.modes)
    t = state.tensor()
    t = np.moveaxis(t, [i, n + i], [0, 1])
    m = sum(t[k, k] for k in levels)
    out = DensityOperator(rest, m.reshape(rest.size, rest.size))
    return _checked(out, out.trace)


def _checked(out, p):
    if p < MIN_PROBABILITY:
        raise DegenerateHerald(f"herald probability {p:.3e}")
    return out, float(p)


def _on_u(dim, m, kind="conditional-map"):
    return OperatorMatrix(ModeLayout((("u", dim),)), m, kind, True)


def _weak_terms(kappa, alpha, r):
    e2r = np.exp(2 * r)
    expo = lambda x: (-2 * e2r * alpha ** 2 / (2 * e2r + 2)
                      + 2j * np.sqrt(2) * e2r * kappa * alpha * x / (2 * e2r + 2)
                      - kappa ** 2 * x ** 2 / (2 * e2r + 2))
    return e2r, expo


def analytic_O1(kappa: float, alpha: float = 0.0, r: float = 0.0, dim: int = 25) -> OperatorMatrix:
    """Map applied to u when one photon is registered from a QND-coupled
    ancilla prepared in D[alpha]S[r]|0>, including the balanced central
    splitter amplitude."""
    e2r, expo = _weak_terms(kappa, alpha, r)
    pref = lambda x: np.sqrt(2) * (np.sqrt(2) * e2r * alpha + 1j * kappa * x) / (e2r + 1) ** 1.5
    return _on_u(dim, function_of_x(dim, lambda x: pref(x) * np.exp(expo(x))))


def analytic_O0(kappa: float, alpha: float = 0.0, r: float = 0.0, dim: int = 25) -> OperatorMatrix:
    """Map applied to u when the ancilla is found in vacuum."""
    e2r, expo = _weak_terms(kappa, alpha, r)
    return _on_u(dim, function_of_x(dim, lambda x: np.exp(expo(x)) / np.sqrt(e2r + 1)))


def correction_for(kappa: float, alpha: float = 0.0, r: float = 0.0,
                   gaussian: str = "numerical") -> CorrectionSpec:
    """CorrectionSpec removing the displacement phase and Gaussian envelope.

    ``gaussian='numerical'`` divides the envelope out exactly;
    ``'anti-squeeze'`` uses S[r_corr] instead.
    """
    e2r = np.exp(2 * r)
    theta = 2 * np.sqrt(2) * e2r * kappa * alpha / (2 * e2r + 2)
    if gaussian == "numerical":
        return CorrectionSpec(0.0, theta, "numerical", -kappa ** 2 / (2 * e2r + 2))
    if gaussian == "anti-squeeze":
        return CorrectionSpec(r_corr(kappa, r), theta, "numerical", 0.0)
    raise ValueError(f"unknown gaussian correction {gaussian!r}")


def corrected_ops(kappa: float, alpha: float = 0.0, r: float = 0.0, dim: int = 25,
                  gaussian: str = "numerical"):
    """(O1c, O0c): the two maps after dropping the common prefactor and
    applying the CorrectionSpec. At alpha = 0 they reduce to i kappa X/sqrt(2)
    and the identity."""
    e2r = np.exp(2 * r)
    spec = correction_for(kappa, alpha, r, gaussian)
    c = spec.matrix(dim)
    common = np.sqrt(e2r + 1) * np.exp(2 * e2r * alpha ** 2 / (2 * e2r + 2))
    # O1 carries an extra factor 2/(e^{2r}+1) relative to the i kappa X/sqrt(2) form
    o1 = c @ analytic_O1(kappa, alpha, r, dim).matrix * common * (e2r + 1) / 2
    o0 = c @ analytic_O0(kappa, alpha, r, dim).matrix * common
    return _on_u(dim, o1), _on_u(dim, o0)


def gaussian_x_filter(zeta: float, dim: int, label: str = "u'", pad: int = 0) -> OperatorMatrix:
    """exp(-zeta X^2) on one mode (optionally evaluated on a padded cutoff)."""
    m = function_of_x(dim, lambda x: np.exp(-zeta * x ** 2), pad)
    if np.max(np.abs(m)) > 1e12:
        raise TruncationRisk(f"zeta = {zeta} overflows at dim {dim}")
    return OperatorMatrix(ModeLayout(((label, dim),)), m, "conditional-map", True)


def selective_x_filter(zeta: float, dim: int, label: str = "u'", pad: int = 40) -> OperatorMatrix:
    """Filter acting only off the vacuum: |0><0| + Q exp(-zeta X^2) Q, Q = 1 - |0><0|.

    Since exp(-zeta X^2) is even, <1|filter = <1|exp(-zeta X^2) while the
    vacuum component passes untouched. This is the branch-selective action
    needed for the third-order scheme.
    """
    g = gaussian_x_filter(zeta, dim, label, pad).matrix.copy()
    g[0, :] = 0
    g[:, 0] = 0
    g[0, 0] = 1.0
    return OperatorMatrix(ModeLayout(((label, dim),)), g, "conditional-map", True)


def analytic_O3_ops(kappa: float, zeta: float, dim: int = 25):
    """(O1_3, O0_3) for the filtered single-photon and vacuum branches."""
    if zeta <= -1:
        raise ValueError("zeta must exceed -1")
    o1 = function_of_x(dim, lambda x: 1j * kappa * x * np.exp(-kappa ** 2 * x ** 2 / (4 * zeta + 4))
                       / (np.sqrt(2) * (zeta + 1) ** 1.5))
    o0 = function_of_x(dim, lambda x: np.exp(-kappa ** 2 * x ** 2 / 4))
    return _on_u(dim, o1), _on_u(dim, o0)


# --- second detector -------------------------------------------------------

def zeta_closed_form(r_prime: float, kappa_prime: float) -> float:
    """Closed-form (r', kappa') -> zeta relation as printed. It is negative
    for all real inputs; kept as a pluggable mapping only."""
    e = np.exp(2 * r_prime)
    return -(4 * e + 5) * kappa_prime ** 2 / (2 * (e + 1))


def spd2_operator(dim: int, r_prime: float, T_A: float, dim_a: int = 30,
                  outcome=2, kind: str = "fock-resolving") -> np.ndarray:
    """Operator on u' induced by mixing a squeezed vacuum |r'>_a on splitter A
    and detecting mode a. Column j is <outcome|_a B_A (|j>_u' |r'>_a)."""
    sq = squeezed_displaced_vacuum(dim_a, 0.0, r_prime, "a").amplitudes
    b = _expi(_bs_gen(dim, dim_a), T_A).reshape(dim, dim_a, dim, dim_a)
    out = np.tensordot(b, sq, axes=([3], [0]))          # (m, k, j)
    if kind == "fock-resolving":
        return out[:, outcome, :]
    raise ValueError("only the photon-number-resolving SPD-2 yields a pure map")


def fit_zeta(op: np.ndarray) -> float:
    """Effective zeta of an even map via <2|M|0>/<0|M|0> = -zeta/(sqrt(2)(1+zeta))."""
    ratio = (op[2, 0] / op[0, 0]).real
    return float(brentq(lambda z: -z / (np.sqrt(2) * (1 + z)) - ratio, -0.99, 1e6))



def circuit_ops(kappa: float, alpha: float = 0.0, r: float = 0.0, dim: int = 25,
                dim_up: int | None = None, T_C: float = np.pi / 4):
    """(O1, O0) read off the QND-plus-splitter circuit itself.

    The ancilla D[alpha]S[r]|0> on u' is coupled to u, mixed with d' on
    splitter C, and one photon is found on the watched port with none on the
    other. O1 is the branch with d' empty, O0 the branch with one photon in
    d'; the splitter phase i of the latter is removed.
    """
    from .setups import _bs_block, auto_dim_up
    dim_up = auto_dim_up(kappa, dim) if dim_up is None else int(dim_up)
    anc = squeezed_displaced_vacuum(dim_up, alpha, r).amplitudes
    # columns: u basis states; rows: u amplitudes; middle axis: u'
    t = np.einsum("ij,k->ikj", np.eye(dim), anc)
    from .gaussian import apply_qnd
    t = apply_qnd(t, kappa, (0, 1))
    blk1 = _bs_block(1, float(T_C))      # basis |m, 1-m> on (u', d')
    # <1,0| B |1,0> for O1 and <1,0| B |0,1> for O0
    o1 = blk1[1, 1] * t[:, 1, :]
    o0 = blk1[1, 0] * t[:, 0, :] / 1j
    return _on_u(dim, o1), _on_u(dim, o0)
