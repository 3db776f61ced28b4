"""The nine acceptance criteria, each at its stated tolerance.

Every test prints a single ``criterion N: PASS|FAIL`` line before asserting.
"""
import json
import time

import numpy as np
import pytest

from rabi_sim import cli
from rabi_sim.conditional import analytic_O0, analytic_O1, circuit_ops
from rabi_sim.config import build_plan
from rabi_sim.gaussian import coherent_state, prc_state, thermal_state
from rabi_sim.metrics import energy, fidelity, min_wigner, negativity, radial_asymmetry
from rabi_sim.setups import (SetupConfig, apply_to_input, ideal_jc, ideal_rabi,
                             input_state, run_setup, taylor_rabi)

T_GRID = tuple(round(0.05 * k, 10) for k in range(31))
INPUTS = (("coherent", 1.0), ("thermal", 1.0), ("prc", 1.0))
VARIANTS = ("u2-photon", "u3-photon", "u2-tmsv", "u3-tmsv")


def test_criterion_1_rabi_negativity(report):
    start = time.perf_counter()
    vac = coherent_state(25, 0.0)
    dev = max(abs(negativity(apply_to_input(ideal_rabi(t, 25), "0", vac))
                  - 0.5 * np.sqrt(1 - np.exp(-2 * t ** 2)))
              for t in (0.25, 0.5, 0.7, 1.0, 1.5))
    elapsed = time.perf_counter() - start
    ok = dev <= 1e-6 and elapsed < 5
    report(1, ok, f"max deviation {dev:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_2_rabi_energy(report):
    # with the qubit in |0>_d the minus branch is realized
    start = time.perf_counter()
    vac = coherent_state(25, 0.0)
    dev = max(abs(energy(apply_to_input(ideal_rabi(t, 25), "0", vac))
                  - (t ** 2 + 1 - np.exp(-t ** 2)) / 2)
              for t in (0.25, 0.5, 0.7, 1.0, 1.5))
    elapsed = time.perf_counter() - start
    ok = dev <= 1e-6 and elapsed < 5
    report(2, ok, f"max deviation {dev:.2e} (minus branch), {elapsed:.2f} s")
    assert ok


def test_criterion_3_jc_invariants(report):
    start = time.perf_counter()
    dim = 40
    e_dev = 0.0
    for psi in (coherent_state(dim, 1.0), thermal_state(dim, 1.0), prc_state(dim, 1.0)):
        for q in ("0", "1"):
            e_in = energy(apply_to_input(ideal_jc(0.0, dim), q, psi))
            for tau in (0.25, 0.7, 1.2):
                e_dev = max(e_dev, abs(energy(apply_to_input(ideal_jc(tau, dim), q, psi)) - e_in))
    vac = coherent_state(dim, 0.0)
    n_dev = max(abs(negativity(apply_to_input(ideal_jc(tau, dim), "+", vac)) - abs(np.sin(2 * tau)) / 4)
                for tau in (0.25, 0.7, 1.2, np.pi / 4))
    ref = apply_to_input(ideal_jc(0.0, dim), "0", vac).matrix
    f_dev = max(np.abs(apply_to_input(ideal_jc(tau, dim), "0", vac).matrix - ref).max()
                for tau in (0.25, 0.7, 1.2))
    elapsed = time.perf_counter() - start
    ok = max(e_dev, n_dev, f_dev) <= 1e-8 and elapsed < 10
    report(3, ok, f"energy {e_dev:.1e}, negativity {n_dev:.1e}, fixed point {f_dev:.1e}, {elapsed:.2f} s")
    assert ok


def test_criterion_4_circuit_vs_analytic(report):
    start = time.perf_counter()
    dev = 0.0
    for kappa in (0.05, 0.1, 0.2):
        c1, c0 = circuit_ops(kappa)
        dev = max(dev, np.linalg.norm(c1.matrix - analytic_O1(kappa).matrix, 2),
                  np.linalg.norm(c0.matrix - analytic_O0(kappa).matrix, 2))
    elapsed = time.perf_counter() - start
    ok = dev <= 1e-8 and elapsed < 10
    report(4, ok, f"max operator-norm deviation {dev:.2e}, {elapsed:.2f} s")
    assert ok


def _taylor_target(t, spec, dim):
    psi = input_state(SetupConfig(cv_input=spec, dim_u=dim))
    out = apply_to_input(taylor_rabi(2, t, dim, factorized=True), "0", psi)
    return out.normalized()


def test_criterion_5_u2_faithfulness(report):
    start = time.perf_counter()
    worst = 1.0
    for spec in (("vacuum",), ("coherent", 1.0)):
        for t in (0.1, 0.2, 0.3, 0.4, 0.5):
            res = run_setup(None, SetupConfig(t=t, variant="u2-photon", cv_input=spec,
                                              lam=0.01, kappa=0.1, gamma=0.0))
            worst = min(worst, fidelity(_taylor_target(t, spec, res.config.dim_u), res.joint_state))
    elapsed = time.perf_counter() - start
    ok = worst >= 0.99 and elapsed < 30
    report(5, ok, f"min fidelity {worst:.6f}, {elapsed:.2f} s")
    assert ok


@pytest.fixture(scope="module")
def grid():
    """{(variant, input kind): [(t, F_Rabi, F_JC, P)]} on the t-grid."""
    start = time.perf_counter()
    out = {}
    for v in VARIANTS:
        for spec in INPUTS:
            rows = []
            for t in T_GRID:
                r = cli.evaluate({}, v, spec, t)
                rows.append((t, r["F_Rabi"], r["F_JC"], r["P_success"]))
            out[(v, spec[0])] = rows
    return out, time.perf_counter() - start


def test_criterion_6_fidelity_ordering(grid, report):
    data, elapsed = grid
    bad_order, bad_gain = [], []
    for res in ("photon", "tmsv"):
        for spec in INPUTS:
            u2, u3 = data[(f"u2-{res}", spec[0])], data[(f"u3-{res}", spec[0])]
            for v, rows in ((f"u2-{res}", u2), (f"u3-{res}", u3)):
                bad_order += [(v, spec[0], t) for t, fr, fj, _ in rows if t > 0 and not fr > fj]
            bad_gain += [(res, spec[0], a[0]) for a, b in zip(u2, u3) if b[1] < a[1]]
    ok = not bad_order and not bad_gain and elapsed < 600
    first = {}
    for v, inp, t in bad_order:
        first.setdefault((v, inp), (t, 0))
        first[(v, inp)] = (first[(v, inp)][0], first[(v, inp)][1] + 1)
    where = "; ".join(f"{v}/{inp} from t={t:g} ({n} pts)" for (v, inp), (t, n) in sorted(first.items()))
    report(6, ok, f"F_Rabi<=F_JC at {len(bad_order)} points [{where}], "
                  f"F_Rabi(u3)<F_Rabi(u2) at {len(bad_gain)} points, grid {elapsed:.0f} s")
    assert ok


def test_criterion_7_success_probability(grid, report):
    data, elapsed = grid
    problems = []
    for (v, inp), rows in sorted(data.items()):
        p = np.array([r[3] for r in rows])
        if abs(p[0] - 0.25) > 1e-3:
            problems.append(f"{v}/{inp} P(0)={p[0]:.5f}")
        rises = np.flatnonzero(np.diff(p) > 0)
        if rises.size:
            problems.append(f"{v}/{inp} rises at {rises.size} steps")
    for res in ("photon", "tmsv"):
        for spec in INPUTS:
            p2 = np.array([r[3] for r in data[(f"u2-{res}", spec[0])]])
            p3 = np.array([r[3] for r in data[(f"u3-{res}", spec[0])]])
            above = int(np.sum(p3 > p2 + 5e-3))
            if above:
                problems.append(f"u3-{res}/{spec[0]} above u2 at {above} points")
    ok = not problems and elapsed < 600
    report(7, ok, "; ".join(problems) if problems else "all curves start at 1/4 and decrease")
    assert ok


@pytest.mark.filterwarnings("ignore:Wigner grid misses weight")
def test_criterion_8_steering_and_loss(tmp_path, report):
    start = time.perf_counter()
    plan = build_plan("wigner", {}, tmp_path)
    fails, mins, asym = [], {}, 0.0
    for spec in (("thermal", 1.0), ("prc", 1.0)):
        states = cli.wigner_states(plan, spec)
        for proc in ("ideal-rabi", "u2", "u3"):
            rho, _ = states[(proc, "P1")]
            mins[(spec[0], proc, "P1")] = w = min_wigner(rho)
            if not w < -1e-3:
                fails.append(f"{spec[0]}/{proc}/P1 min {w:.2e}")
        for proj in ("P0", "P1"):
            rho, _ = states[("u3+loss", proj)]
            mins[(spec[0], "u3+loss", proj)] = w = min_wigner(rho)
            if not w < 0:
                fails.append(f"{spec[0]}/u3+loss/{proj} min {w:.2e}")
            asym = max(asym, radial_asymmetry(states[("jc", proj)][0]))
    if asym > 2e-3:
        fails.append(f"jc radial asymmetry {asym:.2e}")
    elapsed = time.perf_counter() - start
    ok = not fails and elapsed < 300
    report(8, ok, ("; ".join(fails) if fails else "all dips negative")
           + f", jc asymmetry {asym:.1e}, {elapsed:.0f} s")
    assert ok


def test_criterion_9_property_suite(tmp_path, report):
    start = time.perf_counter()
    code = cli.main(["validate", "--out", str(tmp_path), "--format", "json"])
    doc = json.loads((tmp_path / "validate.json").read_text())
    names = {c["name"] for c in doc["checks"]}
    required = {"povm-completeness", "loss-trace-preservation", "psd-preservation",
                "leakage-guard-triggers", "configured-run-leakage-guard",
                "tensor-partial-trace-roundtrip", "output-determinism"}
    failed = [c["name"] for c in doc["checks"] if c["passed"] != "pass"]
    elapsed = time.perf_counter() - start
    ok = code == 0 and required <= names and not failed and elapsed < 120
    report(9, ok, f"{len(names)} checks, failed: {failed or 'none'}, {elapsed:.0f} s")
    assert ok
