import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rabi_sim.conditional import DetectorModel, herald
from rabi_sim.errors import ConfigError, DegenerateHerald, LeakageError
from rabi_sim.fock import (ModeLayout, OperatorMatrix, StateVector, apply, function_of_x,
                           is_unitary, quadrature)
from rabi_sim.gaussian import beam_splitter, coherent_state, displacement, qnd_xx, thermal_state
from rabi_sim.metrics import energy, fidelity, negativity
from rabi_sim.setups import (MINUS, PLUS, SetupConfig, apply_to_input, ideal_jc, ideal_rabi,
                             input_state, run_setup, steer, taylor_rabi)

from conftest import ket

# fidelities against ideal Rabi on vacuum at t = 0.7 (default cutoffs), frozen
# from the pure-state overlap <psi|rho|psi>
F_U2_PHOTON_07 = 0.9902065713645897
F_U3_PHOTON_07 = 0.998976382528528


def x_norm_interior(m, dim, keep):
    return np.linalg.norm(m.reshape(dim, 2, dim, 2)[:keep, :, :keep, :].reshape(2 * keep, 2 * keep), 2)


# --- ideal Rabi ------------------------------------------------------------

def test_rabi_identity_at_zero():
    np.testing.assert_allclose(ideal_rabi(0.0, 10).matrix, np.eye(20), atol=1e-14)


def test_rabi_plus_input_is_displaced():
    t, dim = 0.8, 25
    out = apply_to_input(ideal_rabi(t, dim), "+", coherent_state(dim, 0.0))
    target = np.kron(displacement(dim, 1j * t / np.sqrt(2)).matrix @ ket(dim, 0), PLUS)
    assert fidelity(out, StateVector(out.layout, target)) == pytest.approx(1, abs=1e-10)
    assert abs(negativity(out)) < 1e-10


@pytest.mark.parametrize("t,value", [(1.0, 0.4649367), (0.7, 0.3951863)])
def test_rabi_negativity_values(t, value):
    # 1/2 sqrt(1 - e^{-2 t^2}) evaluated by hand
    out = apply_to_input(ideal_rabi(t, 25), "0", coherent_state(25, 0.0))
    assert negativity(out) == pytest.approx(value, abs=1e-7)


def test_rabi_energy_sign_branch():
    # |0>_d input realizes (t^2 + 1 - e^{-t^2})/2, |1>_d the plus branch
    vac = coherent_state(25, 0.0)
    assert energy(apply_to_input(ideal_rabi(1.0, 25), "0", vac)) == pytest.approx(0.81606, abs=1e-5)
    assert energy(apply_to_input(ideal_rabi(1.0, 25), "1", vac)) == pytest.approx(1.18394, abs=1e-5)


@given(st.floats(0, 1.5), st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False))
def test_rabi_branch_identity(t, cp, cm):
    dim = 25
    psi = coherent_state(dim, 0.5).amplitudes
    out = ideal_rabi(t, dim).matrix @ np.kron(psi, cp * PLUS + cm * MINUS)
    dp = displacement(dim, 1j * t / np.sqrt(2)).matrix @ psi
    dm = displacement(dim, -1j * t / np.sqrt(2)).matrix @ psi
    np.testing.assert_allclose(out, cp * np.kron(dp, PLUS) + cm * np.kron(dm, MINUS), atol=1e-9)


@given(st.floats(0, 1.5))
def test_rabi_conserves_sigma_x(t):
    dim = 25
    sx = np.kron(np.eye(dim), np.array([[0, 1], [1, 0]]))
    psi = coherent_state(dim, 0.4 + 0.3j)
    q = ("general", 0.6, 0.8j)
    before = np.trace(sx @ apply_to_input(ideal_rabi(0.0, dim), q, psi).matrix).real
    after = np.trace(sx @ apply_to_input(ideal_rabi(t, dim), q, psi).matrix).real
    assert after == pytest.approx(before, abs=1e-9)


def test_rabi_unitary():
    assert is_unitary(ideal_rabi(1.0, 25))


# --- ideal JC --------------------------------------------------------------

def test_jc_vacuum_fixed_point():
    vac = coherent_state(20, 0.0)
    for tau in (0.3, 1.1):
        out = apply_to_input(ideal_jc(tau, 20), "0", vac)
        np.testing.assert_allclose(out.matrix, apply_to_input(ideal_jc(0, 20), "0", vac).matrix, atol=1e-15)
        assert abs(negativity(out)) < 1e-12


@pytest.mark.parametrize("tau", [0.2, np.pi / 4, 1.3])
def test_jc_single_excitation(tau):
    dim = 10
    vac = coherent_state(dim, 0.0)
    plus = apply_to_input(ideal_jc(tau, dim), "+", vac)
    assert negativity(plus) == pytest.approx(abs(np.sin(2 * tau)) / 4, abs=1e-12)
    one = apply_to_input(ideal_jc(tau, dim), "1", vac)
    t = one.matrix.reshape(dim, 2, dim, 2)
    assert t[0, 1, 0, 1].real == pytest.approx(np.cos(tau) ** 2)
    assert t[1, 0, 1, 0].real == pytest.approx(np.sin(tau) ** 2)
    assert negativity(one) == pytest.approx(abs(np.sin(2 * tau)) / 2, abs=1e-12)


def test_jc_unitary_below_top_level():
    op = ideal_jc(0.9, 12)
    g = op.matrix.conj().T @ op.matrix
    keep = np.arange(2 * 12) < 2 * 11
    assert np.abs(g[np.ix_(keep, keep)] - np.eye(22)).max() < 1e-12


@pytest.mark.parametrize("psi", [coherent_state(40, 1.0), thermal_state(40, 1.0)])
def test_jc_conserves_energy(psi):
    e0 = energy(apply_to_input(ideal_jc(0.0, 40), "1", psi))
    for tau in (0.25, 0.7, 1.2):
        assert energy(apply_to_input(ideal_jc(tau, 40), "1", psi)) == pytest.approx(e0, abs=1e-8)


# --- Taylor references -----------------------------------------------------

def test_taylor_first_order():
    dim, t = 8, 0.4
    g = 1j * t * np.kron(quadrature(dim), np.array([[0, 1], [1, 0]]))
    np.testing.assert_allclose(taylor_rabi(1, t, dim).matrix, np.eye(2 * dim) + g, atol=1e-15)


def test_taylor_direct_vs_factorized():
    # factorized - direct = -g t^2 X^2/2 + (1 + g) E with g = i t sx X and
    # 0 <= E = e^{-s} - 1 + s <= s^2/2, s = t^2 X^2/2; all functions of the
    # same truncated X, so the bound holds on the full space
    dim, t = 25, 0.3
    x = quadrature(dim)
    sx = np.array([[0, 1], [1, 0]])
    g = 1j * t * np.kron(x, sx)
    x2 = np.kron(x @ x, np.eye(2))
    d = taylor_rabi(2, t, dim, factorized=True).matrix - taylor_rabi(2, t, dim).matrix
    rem = d + g @ x2 * t ** 2 / 2
    x_norm = np.linalg.norm(x, 2)
    bound = (1 + t * x_norm) * t ** 4 / 8 * np.linalg.norm(np.linalg.matrix_power(x, 4), 2)
    assert np.linalg.norm(rem, 2) <= bound
    # the cross term is third order and dominates the difference
    assert np.linalg.norm(d, 2) > t ** 4 / 8 * np.linalg.norm(np.linalg.matrix_power(x, 4), 2)


def test_taylor_third_order_closer():
    dim, t, keep = 25, 0.5, 12
    ideal = ideal_rabi(t, dim).matrix
    e2 = x_norm_interior(taylor_rabi(2, t, dim).matrix - ideal, dim, keep)
    e3 = x_norm_interior(taylor_rabi(3, t, dim).matrix - ideal, dim, keep)
    assert e3 < e2


def test_taylor_rejects_orders():
    with pytest.raises(ValueError):
        taylor_rabi(4, 0.1)
    with pytest.raises(ValueError):
        taylor_rabi(3, 0.1, factorized=True)


# --- full setups -----------------------------------------------------------

def test_u2_tmsv_small_t_probability():
    res = run_setup(None, SetupConfig(t=1e-3, variant="u2-tmsv"))
    assert res.success_probability == pytest.approx(0.25, abs=1e-3)


@pytest.mark.parametrize("variant,tol", [("u2-tmsv", 1e-9), ("u2-photon", 0.1 ** 2)])
def test_t_zero_rows(variant, tol):
    # the photon variant keeps kappa = 0.1 at t = 0, so the traced partner
    # port lets an O(kappa^2) admixture through
    res = run_setup(None, SetupConfig(t=0.0, variant=variant, cv_input=("coherent", 1.0)))
    assert res.success_probability == pytest.approx(0.25, abs=1e-3)
    psi = input_state(res.config)
    assert fidelity(apply_to_input(ideal_rabi(0, 40), "0", psi), res.joint_state) >= 1 - tol


def test_u2_photon_matches_taylor_target():
    t = 0.5
    res = run_setup(None, SetupConfig(t=t, variant="u2-photon", cv_input=("coherent", 1.0),
                                      lam=0.01, kappa=0.1))
    dim = res.config.dim_u
    target = apply_to_input(taylor_rabi(2, t, dim, factorized=True), "0", input_state(res.config))
    assert fidelity(target.normalized(), res.joint_state) >= 0.99


def test_u3_improves_on_u2():
    f = {}
    for v in ("u2-photon", "u3-photon"):
        res = run_setup(None, SetupConfig(t=0.7, variant=v))
        ideal = apply_to_input(ideal_rabi(0.7, res.config.dim_u), "0", input_state(res.config))
        f[v] = fidelity(ideal, res.joint_state)
    assert f["u3-photon"] > f["u2-photon"]
    assert f["u2-photon"] == pytest.approx(F_U2_PHOTON_07, abs=1e-9)
    assert f["u3-photon"] == pytest.approx(F_U3_PHOTON_07, abs=1e-9)


def test_third_order_parameters():
    cfg = SetupConfig(t=0.7, variant="u3-tmsv").resolved()
    assert cfg.kappa == pytest.approx(np.sqrt(2) * 0.7)
    assert cfg.zeta == 2
    assert cfg.lam / np.tan(cfg.T_C) == pytest.approx(3 * np.sqrt(3) * cfg.lam ** 2, rel=1e-12)


def test_photon_and_tmsv_agree():
    a = run_setup(None, SetupConfig(t=0.6, variant="u2-photon", cv_input=("thermal", 1.0)))
    b = run_setup(None, SetupConfig(t=0.6, variant="u2-tmsv", cv_input=("thermal", 1.0)))
    # the two resources differ only through the QND strength
    assert fidelity(a.joint_state, b.joint_state) == pytest.approx(1, abs=1e-3)


@pytest.mark.parametrize("variant", ["u2-photon", "u3-photon", "u2-tmsv", "u3-tmsv"])
def test_sigma_x_eigenstate_stays_product(variant):
    res = run_setup(None, SetupConfig(t=0.6, variant=variant, qubit_input="+",
                                      cv_input=("coherent", 0.5)))
    assert abs(negativity(res.joint_state)) < 1e-10


@settings(max_examples=8)
@given(st.sampled_from(["u2-photon", "u3-photon", "u2-tmsv", "u3-tmsv"]), st.floats(0, 1.2),
       st.sampled_from([("vacuum",), ("coherent", 0.7), ("thermal", 0.5), ("prc", 1.0)]))
def test_result_invariants(variant, t, spec):
    res = run_setup(None, SetupConfig(t=t, variant=variant, cv_input=spec))
    assert 0 <= res.success_probability <= 1
    assert res.joint_state.trace == pytest.approx(1, abs=1e-10)
    res.joint_state.check()


def test_success_probability_bookkeeping():
    """Rebuild the u2-photon circuit mode by mode and herald with the detector model."""
    t, du = 0.3, 14
    res = run_setup(None, SetupConfig(t=t, variant="u2-photon", dim_u=du))
    cfg = res.config
    dup, ddp = cfg.dim_up, cfg.dim_up + 2
    lay = ModeLayout((("u", du), ("u'", dup), ("d", 3), ("d'", ddp)))
    pair = np.zeros((3, ddp), dtype=complex)
    pair[1, 0], pair[0, 1] = np.cos(cfg.T_D), 1j * np.sin(cfg.T_D)
    s = StateVector(lay, np.einsum("i,j,kl->ijkl", ket(du, 0), ket(dup, 0), pair))
    s = apply(qnd_xx((du, dup), cfg.kappa), s)
    s = apply(beam_splitter((dup, ddp), cfg.T_C, ("u'", "d'")), s)
    h, p = herald(s, DetectorModel("fock-resolving", "u'"), 1)
    rho, _ = herald(h, DetectorModel("trace-out", "d'"))
    assert p == pytest.approx(res.herald_probability, rel=1e-12)
    # merge correction and the phase shifter on d, then keep the qubit subspace
    env = function_of_x(du, lambda x: np.exp(-(t ** 2 / 2 - cfg.kappa ** 2 / 4) * x ** 2))
    corr = OperatorMatrix(ModeLayout((("u", du), ("d", 3))),
                          np.kron(env, np.diag(np.exp(1j * cfg.phase_d * np.arange(3)))), "conditional-map")
    out = apply(corr, rho).matrix.reshape(du, 3, du, 3)[:, :2, :, :2]
    tr = np.einsum("iaia->", out).real
    assert res.success_probability == pytest.approx(0.5 * tr, rel=1e-12)
    np.testing.assert_allclose(res.joint_state.matrix, out.reshape(2 * du, 2 * du) / tr, atol=1e-12)


def test_loss_lowers_energy():
    a = run_setup(None, SetupConfig(t=0.7, variant="u3-photon", cv_input=("thermal", 1.0)))
    b = run_setup(None, SetupConfig(t=0.7, variant="u3-photon", cv_input=("thermal", 1.0), gamma=0.15))
    assert energy(b.joint_state) < energy(a.joint_state)


def test_leakage_guard():
    with pytest.raises(LeakageError):
        run_setup(None, SetupConfig(t=1.2, dim_u=6, cv_input=("coherent", 1.0)))
    res = run_setup(None, SetupConfig(t=1.2, dim_u=6, cv_input=("coherent", 1.0), strict=False))
    assert res.leakage["u"] > 1e-6


def test_config_errors():
    with pytest.raises(ConfigError):
        SetupConfig(variant="u4-photon")
    with pytest.raises(ConfigError):
        SetupConfig(gamma=1.5)
    with pytest.raises(ConfigError):
        SetupConfig(lam=1.0)
    with pytest.raises(ConfigError):
        run_setup(None, SetupConfig(t=0.5, variant="u3-photon", kappa=0.1))
    with pytest.raises(ConfigError):
        run_setup(None, SetupConfig(t=0.5, variant="u2-photon", T_D=0.3))


# --- steering --------------------------------------------------------------

def test_steering_ideal_rabi():
    t, dim = 0.7, 25
    psi = coherent_state(dim, 0.6)
    out = apply_to_input(ideal_rabi(t, dim), "0", psi)
    x = quadrature(dim)
    cos = function_of_x(dim, lambda w: np.cos(t * w)) @ psi.amplitudes
    sin = function_of_x(dim, lambda w: np.sin(t * w)) @ psi.amplitudes
    r0, p0 = steer(out, "P0")
    r1, p1 = steer(out, "P1")
    assert p0 + p1 == pytest.approx(1, abs=1e-9)
    lay = ModeLayout((("u", dim),))
    assert fidelity(r0, StateVector(lay, cos / np.linalg.norm(cos))) == pytest.approx(1, abs=1e-9)
    assert fidelity(r1, StateVector(lay, sin / np.linalg.norm(sin))) == pytest.approx(1, abs=1e-9)
    for proj, sign in (("P+", 1), ("P-", -1)):
        rho, _ = steer(out, proj)
        disp = displacement(dim, sign * 1j * t / np.sqrt(2)).matrix @ psi.amplitudes
        assert fidelity(rho, StateVector(lay, disp)) == pytest.approx(1, abs=1e-9)
    assert x.shape == (dim, dim)


def test_steering_general_delta():
    t, dim, delta = 0.5, 25, 0.4
    psi = coherent_state(dim, 0.0)
    out = apply_to_input(ideal_rabi(t, dim), "0", psi)
    rho, _ = steer(out, ("general", delta))
    # <0| + delta <1| on cos|0> + i sin|1>: cos(tX) + i delta sin(tX)
    v = function_of_x(dim, lambda w: np.cos(t * w) + 1j * delta * np.sin(t * w)) @ psi.amplitudes
    lay = ModeLayout((("u", dim),))
    assert fidelity(rho, StateVector(lay, v / np.linalg.norm(v))) == pytest.approx(1, abs=1e-9)


def test_steering_degenerate():
    out = apply_to_input(ideal_rabi(0.0, 10), "0", coherent_state(10, 0.0))
    with pytest.raises(DegenerateHerald):
        steer(out, "P1")
