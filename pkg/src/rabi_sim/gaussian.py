"""Gaussian states, Gaussian unitaries, the QND gate and photon loss.

Exponentials are taken through cached Hermitian eigendecompositions of the
strength-free generators, so sweeping a strength only costs a diagonal
rescaling.
"""
from __future__ import annotations

from functools import lru_cache
from math import lgamma

import numpy as np

from .errors import TruncationRisk
from .fock import (DensityOperator, ModeLayout, OperatorMatrix, StateVector,
                   apply_local, as_dm, fock_state, lowering, partial_trace,
                   x_eigh)


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)
    return arrays


@lru_cache(maxsize=None)
def _disp_gen(dim):
    # D(s) = exp(s (a^dag - a)) = exp(i s H) with H = -i (a^dag - a)
    a = lowering(dim)
    w, v = np.linalg.eigh(-1j * (a.T - a))
    return _readonly(w, v)


@lru_cache(maxsize=None)
def _sq_gen(dim):
    # S(r) = exp(r/2 (a^2 - a^dag^2)) = exp(i r H) with H = -i (a^2 - a^dag^2)/2
    a = lowering(dim)
    w, v = np.linalg.eigh(-0.5j * (a @ a - a.T @ a.T))
    return _readonly(w, v)


@lru_cache(maxsize=None)
def _bs_gen(d1, d2):
    a1 = np.kron(lowering(d1), np.eye(d2))
    a2 = np.kron(np.eye(d1), lowering(d2))
    w, v = np.linalg.eigh(a1.T @ a2 + a1 @ a2.T)
    return _readonly(w, v)


def _expi(eig, s):
    w, v = eig
    return (v * np.exp(1j * s * w)) @ v.conj().T


def _single(label, dim):
    return ModeLayout(((label, dim),))


def displacement_matrix(dim: int, alpha: complex) -> np.ndarray:
    amp, phi = abs(alpha), np.angle(alpha)
    d = _expi(_disp_gen(dim), amp)
    rot = np.exp(1j * phi * np.arange(dim))
    return rot[:, None] * d * rot.conj()[None, :]


def displacement(dim: int, alpha: complex, label: str = "u") -> OperatorMatrix:
    """D[alpha] = exp(alpha a^dag - alpha^* a)."""
    if abs(alpha) ** 2 >= dim / 4:
        raise TruncationRisk(f"|alpha|^2 = {abs(alpha) ** 2:.3g} too large for dim {dim}")
    return OperatorMatrix(_single(label, dim), displacement_matrix(dim, alpha), "unitary", True)


def squeezing(dim: int, r: float, label: str = "u") -> OperatorMatrix:
    """S[r] = exp(-r/2 a^dag^2 + r/2 a^2); r > 0 squeezes X."""
    return OperatorMatrix(_single(label, dim), _expi(_sq_gen(dim), r), "unitary", True)


def beam_splitter(dims, T: float, labels=("u'", "d'")) -> OperatorMatrix:
    """exp[iT(a1^dag a2 + a1 a2^dag)]; transmittance cos T, reflectance sin T."""
    d1, d2 = (int(d) for d in dims)
    lay = ModeLayout(((labels[0], d1), (labels[1], d2)))
    return OperatorMatrix(lay, _expi(_bs_gen(d1, d2), T), "unitary", False)


def qnd_phases(d1: int, d2: int, kappa: float) -> np.ndarray:
    w1, _ = x_eigh(d1)
    w2, _ = x_eigh(d2)
    return np.exp(1j * kappa * np.outer(w1, w2))


def qnd_xx(dims, kappa: float, labels=("u", "u'")) -> OperatorMatrix:
    """exp[i kappa X1 X2] from the eigendecomposition of the generator.

    The eigenvectors of X1 (x) X2 are products of single-mode X
    eigenvectors, so the decomposition factorizes.
    """
    d1, d2 = (int(d) for d in dims)
    _, v1 = x_eigh(d1)
    _, v2 = x_eigh(d2)
    v = np.kron(v1, v2)
    u = (v * qnd_phases(d1, d2, kappa).ravel()) @ v.T
    lay = ModeLayout(((labels[0], d1), (labels[1], d2)))
    return OperatorMatrix(lay, u, "unitary", True)


def apply_qnd(tens: np.ndarray, kappa: float, axes) -> np.ndarray:
    """Apply exp[i kappa X X] to two axes of a state tensor without
    building the composite matrix."""
    i, j = axes
    d1, d2 = tens.shape[i], tens.shape[j]
    _, v1 = x_eigh(d1)
    _, v2 = x_eigh(d2)
    t = apply_local(v1.T, tens, [i])
    t = apply_local(v2.T, t, [j])
    shape = [1] * t.ndim
    shape[i], shape[j] = d1, d2
    ph = qnd_phases(d1, d2, kappa)
    t = t * (ph if i < j else ph.T).reshape(shape)
    t = apply_local(v1, t, [i])
    return apply_local(v2, t, [j])


def qnd_sandwich(dims, kappa: float, r_tr: float = 2.0, labels=("u", "u'"),
                 pad: int = 200) -> OperatorMatrix:
    """Beam splitter dressed by single-mode squeezing on mode 1.

    S1[r_tr] B(T_U) S1[-r_tr] turns the splitter generator into
    e^{r_tr} X1 X2 + e^{-r_tr} P1 P2, with T_U = kappa / (2 cosh r_tr).
    The squeezers are evaluated on mode 1 padded by ``pad`` levels, since
    S[-r_tr]|n> spreads far beyond the working cutoff, and the product is
    restricted back to ``dims``. Used only to validate the ideal gate.
    """
    d1, d2 = (int(d) for d in dims)
    big = d1 + int(pad)
    T_U = kappa / (2 * np.cosh(r_tr))
    s = np.kron(_expi(_sq_gen(big), r_tr), np.eye(d2))
    s_inv = np.kron(_expi(_sq_gen(big), -r_tr), np.eye(d2))
    b = _expi(_bs_gen(big, d2), T_U)
    m = (s @ b @ s_inv).reshape(big, d2, big, d2)[:d1, :, :d1, :]
    lay = ModeLayout(((labels[0], d1), (labels[1], d2)))
    return OperatorMatrix(lay, m.reshape(d1 * d2, d1 * d2), "unitary", True)


# --- states ----------------------------------------------------------------

def coherent_amplitudes(dim: int, beta: complex) -> np.ndarray:
    n = np.arange(dim)
    logfact = np.array([lgamma(k + 1) for k in n])
    mag = np.exp(-abs(beta) ** 2 / 2 + n * np.log(abs(beta) + 1e-300) - logfact / 2)
    if beta == 0:
        mag = (n == 0).astype(float)
    return mag * np.exp(1j * np.angle(beta) * n)


def coherent_state(dim: int, beta: complex, label: str = "u") -> StateVector:
    """|beta>, renormalized on the truncated space."""
    if abs(beta) ** 2 >= dim / 4:
        raise TruncationRisk(f"|beta|^2 = {abs(beta) ** 2:.3g} too large for dim {dim}")
    amp = coherent_amplitudes(dim, beta)
    return StateVector(_single(label, dim), amp / np.linalg.norm(amp), True)


def _fock_mixture(dim, p, label):
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    lay = _single(label, dim)
    ens = tuple((float(w), fock_state(lay, **{label: n})) for n, w in enumerate(p) if w > 0)
    return DensityOperator(lay, np.diag(p), ens)


def thermal_probabilities(dim: int, nbar: float) -> np.ndarray:
    n = np.arange(dim)
    if nbar == 0:
        return (n == 0).astype(float)
    return nbar ** n / (nbar + 1) ** (n + 1)


def thermal_state(dim: int, nbar: float, label: str = "u") -> DensityOperator:
    if nbar < 0:
        raise ValueError("nbar must be nonnegative")
    if nbar >= dim / 4:
        raise TruncationRisk(f"nbar = {nbar} too large for dim {dim}")
    return _fock_mixture(dim, thermal_probabilities(dim, nbar), label)


def prc_state(dim: int, beta: complex, label: str = "u") -> DensityOperator:
    """Phase-randomized coherent state: Poisson mixture with mean |beta|^2."""
    if abs(beta) ** 2 >= dim / 4:
        raise TruncationRisk(f"|beta|^2 = {abs(beta) ** 2:.3g} too large for dim {dim}")
    return _fock_mixture(dim, np.abs(coherent_amplitudes(dim, abs(beta))) ** 2, label)


def squeezed_displaced_vacuum(dim: int, alpha: complex = 0.0, r: float = 0.0,
                              label: str = "u'") -> StateVector:
    """D[alpha] S[r] |0>."""
    vac = np.zeros(dim, dtype=complex)
    vac[0] = 1.0
    vec = displacement_matrix(dim, alpha) @ (_expi(_sq_gen(dim), r) @ vac)
    return StateVector(_single(label, dim), vec)


def tmsv_state(dims, lam: float, labels=("d", "d'")) -> StateVector:
    """Normalized sum_n lam^n |n, n>."""
    if not 0 <= lam < 1:
        raise ValueError("lambda must lie in [0, 1)")
    d1, d2 = (int(d) for d in dims)
    lay = ModeLayout(((labels[0], d1), (labels[1], d2)))
    amp = np.zeros((d1, d2), dtype=complex)
    for n in range(min(d1, d2)):
        amp[n, n] = lam ** n
    amp /= np.linalg.norm(amp)
    return StateVector(lay, amp, True)


# --- loss ------------------------------------------------------------------

def loss_kraus(dim: int, gamma: float) -> list:
    """Kraus operators K_k = sqrt(C(n,k) gamma^k (1-gamma)^(n-k)) |n-k><n|."""
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    ks = []
    for k in range(dim):
        m = np.zeros((dim, dim))
        for n in range(k, dim):
            logc = lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)
            w = np.exp(logc) * gamma ** k * (1 - gamma) ** (n - k)
            m[n - k, n] = np.sqrt(w)
        ks.append(m)
    return ks


def loss_channel(rho, gamma: float, label: str = "u", method: str = "beam-splitter",
                 env_dim: int | None = None) -> DensityOperator:
    """Photon loss on one mode of ``rho`` (a fraction ``gamma`` of the energy).

    The beam-splitter route couples to a vacuum environment mode with
    cos^2 T = 1 - gamma and traces it out. The environment cutoff defaults to
    the cutoff of the lossy mode, which makes the channel exact on the
    truncated space.
    """
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    rho = as_dm(rho)
    lay = rho.layout
    i = lay.index(label)
    dim = lay.dims[i]
    n = len(lay.modes)
    if method == "kraus":
        t = rho.tensor()
        terms = []
        for k in loss_kraus(dim, gamma):
            s = apply_local(k, t, [i])
            terms.append(apply_local(k, s, [n + i]))
        return DensityOperator(lay, sum(terms).reshape(lay.size, lay.size))
    if method != "beam-splitter":
        raise ValueError(f"unknown loss method {method!r}")
    env_dim = dim if env_dim is None else int(env_dim)
    T = np.arccos(np.sqrt(1 - gamma))
    b = _expi(_bs_gen(dim, env_dim), T)
    env0 = np.zeros(env_dim)
    env0[0] = 1.0
    # only the env-vacuum column of B is needed: B|n, 0> = sum_{m,k} c |m, k>
    bcol = b.reshape(dim, env_dim, dim, env_dim)[:, :, :, 0]   # (m, k, n)
    t = rho.tensor()
    t = np.tensordot(bcol, t, axes=([2], [i]))                   # (m, k, ...)
    t = np.tensordot(t, bcol.conj(), axes=([n + 1 + i], [2]))
    # axes now: m, k, [rows without i], [cols without i], m', k'
    rows = [ax for ax in range(n) if ax != i]
    nr = len(rows)
    t = np.trace(t, axis1=1, axis2=2 + 2 * nr + 1)               # trace env k=k'
    # reorder to (rows with m at i, cols with m' at i)
    order_rows = list(range(1, 1 + nr))
    order_rows.insert(i, 0)
    order_cols = list(range(1 + nr, 1 + 2 * nr))
    order_cols.insert(i, 1 + 2 * nr)
    t = t.transpose(order_rows + order_cols)
    return DensityOperator(lay, t.reshape(lay.size, lay.size))
