"""Fidelity, negativity, energy and Wigner functions."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache
from math import lgamma

import numpy as np
from scipy.special import eval_genlaguerre

from .errors import NotPSD
from .fock import DensityOperator, PSD_TOL, as_dm, partial_trace, partial_transpose

log = logging.getLogger(__name__)


def _psd_sqrt(m):
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    if w[0] < -PSD_TOL * max(1.0, w[-1]):
        raise NotPSD(f"eigenvalue {w[0]:.3e} below tolerance")
    if np.any(w < 0):
        log.debug("clipped eigenvalues of magnitude up to %.2e", -w.min())
    # eigenvalues below the solver's resolution are zeros, not tiny weights;
    # their square roots would otherwise inject ~1e-8 noise
    floor = len(w) * np.finfo(float).eps * max(abs(w[-1]), 1e-300)
    clipped = np.where(w > floor, w, 0.0)
    return (v * np.sqrt(clipped)) @ v.conj().T


def fidelity(rho_id, rho_re) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Evaluated as the squared trace norm of sqrt(rho) sqrt(sigma), which is
    symmetric in the two arguments by construction.
    """
    a, b = as_dm(rho_id), as_dm(rho_re)
    if a.layout.dims != b.layout.dims:
        raise ValueError("states live on different spaces")
    sv = np.linalg.svd(_psd_sqrt(a.matrix) @ _psd_sqrt(b.matrix), compute_uv=False)
    f = float(np.sum(sv) ** 2)
    return min(f, 1.0 + 1e-12)


def negativity(rho, part="d") -> float:
    """(||rho^PT||_1 - 1)/2 with the transpose taken on ``part``."""
    rho = as_dm(rho)
    pt = partial_transpose(rho, part)
    sv = np.linalg.svd(pt, compute_uv=False)
    return float((sv.sum() - rho.trace) / 2)


def energy(rho) -> float:
    """<n_u + n_d>."""
    rho = as_dm(rho)
    total = 0.0
    for lab in ("u", "d"):
        red = partial_trace(rho, [lab]).matrix
        total += float(np.dot(np.arange(len(red)), np.diag(red).real))
    return total


@dataclass(frozen=True)
class MetricsRecord:
    t: float
    E: float
    N: float
    F_Rabi: float
    F_JC: float
    P_success: float
    variant: str = ""
    input: str = ""


# --- Wigner ----------------------------------------------------------------

@dataclass(frozen=True)
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    values: np.ndarray   # values[i, j] = W(x[j], p[i])

    @property
    def cell_area(self) -> float:
        dx = self.x[1] - self.x[0] if len(self.x) > 1 else 1.0
        dp = self.p[1] - self.p[0] if len(self.p) > 1 else 1.0
        return float(dx * dp)

    @property
    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area)


def grid_axes(lo=-4.0, hi=4.0, n=81):
    return np.linspace(lo, hi, n), np.linspace(lo, hi, n)


@lru_cache(maxsize=8)
def _parity_kernel(dim, xs, ps):
    """K[m, n, i, j] = <m| D(2a) Pi |n> / pi at a = (x_j + i p_i)/sqrt(2).

    W = sum_{mn} rho_{nm} K[m, n] because D(a) Pi D(a)^dag = D(2a) Pi.
    """
    x = np.asarray(xs)[None, :]
    p = np.asarray(ps)[:, None]
    beta = np.sqrt(2) * (x + 1j * p)          # 2 * alpha
    b2 = np.abs(beta) ** 2
    k = np.zeros((dim, dim) + beta.shape, dtype=complex)
    for n in range(dim):
        for m in range(n, dim):
            # <m|D(beta)|n> for m >= n
            pref = np.exp(0.5 * (lgamma(n + 1) - lgamma(m + 1)))
            val = pref * beta ** (m - n) * np.exp(-b2 / 2) * eval_genlaguerre(n, m - n, b2)
            k[m, n] = val * (-1) ** n
            if m != n:
                # <n|D(beta)|m> = (-1)^{m-n} conj(beta)^{m-n} ... = (-1)^{m-n} <m|D(beta)|n>^* swapped
                k[n, m] = (-1) ** (m - n) * np.conj(val) * (-1) ** m
    k /= np.pi
    k.setflags(write=False)
    return k


def wigner(rho, grid=None) -> WignerGrid:
    """Wigner function on an (x, p) grid via displaced parity.

    Normalized so that its integral over dx dp equals the trace.
    """
    rho = as_dm(rho)
    if len(rho.layout.modes) != 1:
        raise ValueError("wigner expects a single-mode state")
    xs, ps = grid if grid is not None else grid_axes()
    dim = rho.layout.size
    k = _parity_kernel(dim, tuple(np.round(xs, 12)), tuple(np.round(ps, 12)))
    vals = np.einsum("nm,mnij->ij", rho.matrix, k).real
    g = WignerGrid(np.asarray(xs), np.asarray(ps), vals)
    if abs(g.integral - rho.trace) > 2e-3:
        warnings.warn(f"Wigner grid misses weight: integral {g.integral:.4f}", RuntimeWarning)
    return g


def wigner_at(rho, x, p) -> np.ndarray:
    """Wigner values at scattered points (same formula, no grid cache)."""
    rho = as_dm(rho)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    dim = rho.layout.size
    beta = np.sqrt(2) * (x + 1j * p)
    b2 = np.abs(beta) ** 2
    out = np.zeros(beta.shape)
    for n in range(dim):
        for m in range(n, dim):
            pref = np.exp(0.5 * (lgamma(n + 1) - lgamma(m + 1)))
            val = pref * beta ** (m - n) * np.exp(-b2 / 2) * eval_genlaguerre(n, m - n, b2)
            term = rho.matrix[n, m] * val * (-1) ** n
            out += 2 * term.real if m != n else term.real
    return out / np.pi


def min_wigner(rho, grid=None) -> float:
    return float(wigner(rho, grid).values.min())


def radial_asymmetry(rho, radii=None, n_angles: int = 24) -> float:
    """Largest spread of W over a circle, maximized over the given radii.

    Zero for phase-invariant states.
    """
    radii = np.linspace(0.25, 3.0, 12) if radii is None else np.asarray(radii, dtype=float)
    phi = 2 * np.pi * np.arange(n_angles) / n_angles
    rr, pp = np.meshgrid(radii, phi, indexing="ij")
    w = wigner_at(rho, (rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()).reshape(rr.shape)
    return float(np.max(w.max(axis=1) - w.min(axis=1)))
