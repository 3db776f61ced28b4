"""Invariant and oracle checks run by ``rabi-sim validate``.

Each check returns a :class:`Check` carrying the measured deviation and the
tolerance it was held to; a raised exception inside a check counts as a
failure and is recorded in ``detail``.
"""
from __future__ import annotations

import dataclasses
import filecmp
import functools
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fock
from .conditional import (DetectorModel, analytic_O0, analytic_O1, circuit_ops,
                          herald)
from .errors import LeakageError, RabiSimError
from .fock import (DensityOperator, ModeLayout, PSD_TOL, partial_trace,
                   partial_transpose, tensor)
from .gaussian import coherent_state, loss_channel, prc_state, thermal_state
from .metrics import energy, negativity
from .setups import (SetupConfig, apply_to_input, ideal_jc, ideal_rabi,
                     run_setup, steer)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    deviation: float
    tolerance: float
    detail: str = ""


def _check(name, deviation, tol, detail=""):
    deviation = float(deviation)
    return Check(name, bool(deviation <= tol), deviation, tol, detail)


def _random_state(layout, rank=3, seed=0):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(layout.size, rank)) + 1j * rng.normal(size=(layout.size, rank))
    m = g @ g.conj().T
    return DensityOperator(layout, m / np.trace(m).real)


# --- individual checks -----------------------------------------------------

def check_povm(dim=12):
    dev = 0.0
    for kind in ("onoff", "fock-resolving", "trace-out"):
        total = sum(DetectorModel(kind, "u'").povm(dim).values())
        dev = max(dev, np.abs(total - np.eye(dim)).max())
    return _check("povm-completeness", dev, 1e-12)


def check_herald_probabilities(dim=10):
    """Outcome probabilities of a random state sum to its trace."""
    lay = ModeLayout((("u", 4), ("u'", dim)))
    rho = _random_state(lay, seed=1)
    p = sum(herald(rho, DetectorModel("fock-resolving", "u'"), n)[1] for n in range(dim))
    q = sum(herald(rho, DetectorModel("onoff", "u'"), o)[1] for o in ("click", "no-click"))
    return _check("herald-probability-sum", max(abs(p - 1), abs(q - 1)), 1e-12)


def check_loss_cptp():
    lay = ModeLayout((("u", 8), ("d", 2)))
    rho = _random_state(lay, seed=2)
    dev, detail = 0.0, []
    for gamma in (0.0, 0.15, 0.6):
        a = loss_channel(rho, gamma, "u", "beam-splitter")
        b = loss_channel(rho, gamma, "u", "kraus")
        dev = max(dev, abs(a.trace - 1), abs(b.trace - 1), np.abs(a.matrix - b.matrix).max())
    # full loss leaves vacuum on u
    full = partial_trace(loss_channel(rho, 1.0, "u"), ["u"]).matrix
    vac = np.zeros_like(full)
    vac[0, 0] = 1
    dev = max(dev, np.abs(full - vac).max())
    detail.append("gamma=1 -> vacuum")
    return _check("loss-trace-preservation", dev, 1e-10, "; ".join(detail))


def check_psd():
    lay = ModeLayout((("u", 8), ("d", 2)))
    rho = _random_state(lay, rank=1, seed=3)
    worst = 0.0
    for gamma in (0.1, 0.5, 0.9):
        w = np.linalg.eigvalsh(loss_channel(rho, gamma, "u").matrix)
        worst = max(worst, -w.min())
    return _check("psd-preservation", worst, PSD_TOL)


def check_roundtrips():
    a = _random_state(ModeLayout((("u", 5),)), seed=4)
    b = _random_state(ModeLayout((("d", 3),)), seed=5)
    ab = tensor([a, b])
    dev = max(np.abs(partial_trace(ab, ["u"]).matrix - a.matrix).max(),
              np.abs(partial_trace(ab, ["d"]).matrix - b.matrix).max())
    rho = _random_state(ModeLayout((("u", 4), ("d", 3))), seed=6)
    pt = DensityOperator(rho.layout, partial_transpose(rho, "d"))
    dev = max(dev, np.abs(partial_transpose(pt, "d") - rho.matrix).max())
    return _check("tensor-partial-trace-roundtrip", dev, 1e-13)


def check_rabi_laws(dim=25):
    dev = 0.0
    vac = coherent_state(dim, 0.0)
    for t in (0.25, 0.5, 0.7, 1.0, 1.5):
        out = apply_to_input(ideal_rabi(t, dim), "0", vac)
        dev = max(dev, abs(negativity(out) - 0.5 * np.sqrt(1 - np.exp(-2 * t ** 2))),
                  abs(energy(out) - (t ** 2 + 1 - np.exp(-t ** 2)) / 2))
    return _check("rabi-negativity-energy-law", dev, 1e-6)


def check_rabi_unitary(dim=25):
    ok = all(fock.is_unitary(ideal_rabi(t, dim)) for t in (0.3, 1.0))
    return Check("rabi-unitarity", ok, 0.0 if ok else 1.0, 0.0)


def check_jc(dim=40):
    dev = 0.0
    for psi in (coherent_state(dim, 1.0), thermal_state(dim, 1.0), prc_state(dim, 1.0)):
        for tau in (0.25, 0.7, 1.2):
            for q in ("0", "1"):
                e_in = energy(apply_to_input(ideal_jc(0.0, dim), q, psi))
                dev = max(dev, abs(energy(apply_to_input(ideal_jc(tau, dim), q, psi)) - e_in))
    vac = coherent_state(dim, 0.0)
    for tau in (0.25, 0.7, 1.2):
        dev = max(dev, abs(negativity(apply_to_input(ideal_jc(tau, dim), "+", vac))
                           - abs(np.sin(2 * tau)) / 4))
    return _check("jc-invariants", dev, 1e-8)


def check_sigma_x(dim=25):
    psi = coherent_state(dim, 0.8)
    sx = np.kron(np.eye(dim), np.array([[0, 1], [1, 0]]))
    dev = 0.0
    for q in ("0", "1", ("general", 0.6, 0.8j)):
        before = np.trace(sx @ apply_to_input(ideal_rabi(0.0, dim), q, psi).matrix).real
        after = np.trace(sx @ apply_to_input(ideal_rabi(0.9, dim), q, psi).matrix).real
        dev = max(dev, abs(before - after))
    return _check("sigma-x-conservation", dev, 1e-9)


def check_circuit_oracle(dim=25):
    dev = 0.0
    for kappa in (0.05, 0.1, 0.2):
        c1, c0 = circuit_ops(kappa, dim=dim)
        dev = max(dev, np.linalg.norm(c1.matrix - analytic_O1(kappa, dim=dim).matrix, 2),
                  np.linalg.norm(c0.matrix - analytic_O0(kappa, dim=dim).matrix, 2))
    return _check("circuit-vs-analytic-maps", dev, 1e-8)


def check_steering(dim=25):
    out = apply_to_input(ideal_rabi(0.7, dim), "0", thermal_state(dim, 1.0))
    p = steer(out, "P0")[1] + steer(out, "P1")[1]
    return _check("steering-completeness", abs(p - 1), 1e-9)


def check_config_run(setup: dict):
    """Run the configured setup once and hold it to the leakage guard."""
    cfg = SetupConfig(**{**setup, "strict": False})
    try:
        res = run_setup(None, cfg)
    except RabiSimError as exc:
        return Check("configured-run", False, float("inf"), fock.LEAKAGE_TOL,
                     f"{type(exc).__name__}: {exc}")
    leak_u, leak_up = res.leakage["u"], res.leakage["u'"]
    worst = max(leak_u, leak_up)
    w = np.linalg.eigvalsh(res.joint_state.matrix).min()
    detail = (f"t={cfg.t} variant={cfg.variant} dim_u={cfg.dim_u} "
              f"leak_u={leak_u:.3e} leak_up={leak_up:.3e} min_eig={w:.3e}")
    ok = worst <= fock.LEAKAGE_TOL and w >= -PSD_TOL and 0 <= res.success_probability <= 1
    return Check("configured-run-leakage-guard", bool(ok), worst, fock.LEAKAGE_TOL, detail)


def check_leakage_guard_fires():
    """An undersized cutoff must be flagged."""
    try:
        run_setup(None, SetupConfig(t=1.2, dim_u=6, cv_input=("coherent", 1.0)))
    except LeakageError:
        return Check("leakage-guard-triggers", True, 0.0, 0.0)
    return Check("leakage-guard-triggers", False, 1.0, 0.0, "no LeakageError at dim_u=6")


def check_determinism(plan):
    """Run a two-point sweep twice and compare the files byte by byte."""
    from . import cli
    small = dataclasses.replace(plan, t_grid=(0.0, 0.3), inputs=(("coherent", 1.0),),
                                variants=("u2-photon",), jobs=1)
    with tempfile.TemporaryDirectory() as d:
        paths = []
        for k in range(2):
            out = Path(d) / str(k)
            cli.cmd_sweep(dataclasses.replace(small, out=out))
            paths.append(out)
        names = sorted(p.name for p in paths[0].iterdir())
        same = names == sorted(p.name for p in paths[1].iterdir()) and all(
            filecmp.cmp(paths[0] / n, paths[1] / n, shallow=False) for n in names)
    return Check("output-determinism", same, 0.0 if same else 1.0, 0.0)


def run_suite(plan) -> list:
    checks = [check_povm, check_herald_probabilities, check_loss_cptp, check_psd,
              check_roundtrips, check_rabi_laws, check_rabi_unitary, check_jc,
              check_sigma_x, check_circuit_oracle, check_steering,
              check_leakage_guard_fires,
              functools.partial(check_config_run, plan.setup),
              functools.partial(check_determinism, plan)]
    results = []
    for fn in checks:
        try:
            results.append(fn())
        except Exception as exc:     # a crashing check is a failed check
            name = getattr(fn, "func", fn).__name__.replace("check_", "").replace("_", "-")
            results.append(Check(name, False, float("inf"), 0.0, f"{type(exc).__name__}: {exc}"))
    return results
