import numpy as np
import pytest

from xpct.core import DomainError, MaterialModel, ScanGeometry, ValidationError, wavelength_from_energy
from xpct.fresnel import constrained_field, forward_unconstrained, transfers_for_geometry
from xpct.lbfgs import SolverSettings
from xpct.linpr import ctf_retrieve, paganin_retrieve
from xpct.nlpr import (
    ConstraintParams,
    choose_constraint,
    cnlpr_retrieve,
    gradient_constrained,
    gradient_unconstrained,
    objective_constrained,
    objective_unconstrained,
    unlpr_retrieve,
    _initial_z,
)
from xpct.tomo import Phantom, Sphere, project_phantom, simulate_scan

LAM = wavelength_from_energy(20e3)
PIX = 1.29e-6
SIC = MaterialModel(delta=1.67e-6, beta=4.77e-9, name="SiC")


def _geometry(n, distances):
    return ScanGeometry(
        wavelength_m=LAM,
        pixel_width_m=PIX,
        distances_m=distances,
        n_rows=n,
        n_cols=n,
        view_angles_rad=(0.0,),
    )


def _blobs(shape, peak, sig_range, seed=1):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    out = np.zeros(shape)
    for _ in range(6):
        cy = rng.uniform(shape[0] * 0.2, shape[0] * 0.8)
        cx = rng.uniform(shape[1] * 0.2, shape[1] * 0.8)
        sig = rng.uniform(*sig_range)
        out += rng.uniform(0.3, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))
    return out * (peak / out.max())


def _nrmse_mean_matched(estimate, truth):
    e = estimate - estimate.mean() + truth.mean()
    return np.sqrt(((e - truth) ** 2).mean()) / np.sqrt((truth**2).mean())


GEOM16 = _geometry(16, (0.01, 0.2, 0.4))


def test_objective_zero_at_truth():
    phi = _blobs((16, 16), 0.05, (1.5, 3.0), seed=2)
    x = np.exp(-phi * (SIC.beta / SIC.delta) - 1j * phi)
    ys = forward_unconstrained(x, transfers_for_geometry(GEOM16))
    assert objective_unconstrained(x, ys, GEOM16) < 1e-18
    assert objective_unconstrained(np.ones((16, 16), complex), np.ones((3, 16, 16)), GEOM16) == 0.0


def test_objective_matches_direct_sum():
    phi = _blobs((16, 16), 0.3, (1.5, 3.0), seed=4)
    ys = forward_unconstrained(np.exp(-1j * phi), transfers_for_geometry(GEOM16))
    value = objective_unconstrained(np.ones((16, 16), complex), ys, GEOM16)
    direct = ((ys - 1.0) ** 2).sum()
    np.testing.assert_allclose(value, direct, rtol=1e-12)


def test_gradient_unconstrained_finite_differences():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = np.exp(
            -0.05 * rng.uniform(size=(16, 16)) - 1j * 0.4 * rng.uniform(size=(16, 16))
        )
        ys = rng.uniform(0.8, 1.2, size=(3, 16, 16))
        d = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        g = gradient_unconstrained(x, ys, GEOM16)
        analytic = np.real(np.vdot(g, d))
        eps = 1e-6
        fd = (
            objective_unconstrained(x + eps * d, ys, GEOM16)
            - objective_unconstrained(x - eps * d, ys, GEOM16)
        ) / (2 * eps)
        worst = max(worst, abs(fd - analytic) / max(abs(fd), 1e-30))
    assert worst < 1e-4


def test_gradient_zero_at_truth():
    phi = _blobs((16, 16), 0.05, (1.5, 3.0), seed=2)
    x = np.exp(-1j * phi)
    ys = forward_unconstrained(x, transfers_for_geometry(GEOM16))
    assert np.max(np.abs(gradient_unconstrained(x, ys, GEOM16))) < 1e-10


def test_gradient_doubles_with_duplicated_distance():
    rng = np.random.default_rng(8)
    x = np.exp(1j * 0.3 * rng.uniform(size=(16, 16)))
    geom_one = _geometry(16, (0.2,))
    geom_two = _geometry(16, (0.2, 0.2))
    y = rng.uniform(0.9, 1.1, size=(16, 16))
    g1 = gradient_unconstrained(x, y[None], geom_one)
    g2 = gradient_unconstrained(x, np.stack([y, y]), geom_two)
    np.testing.assert_array_equal(g2, 2.0 * g1)


def test_objective_gauge_invariance():
    rng = np.random.default_rng(3)
    x = np.exp(-0.01 * rng.uniform(size=(16, 16)) + 1j * 0.2 * rng.normal(size=(16, 16)))
    ys = rng.uniform(0.9, 1.1, size=(3, 16, 16))
    base = objective_unconstrained(x, ys, GEOM16)
    rotated = objective_unconstrained(x * np.exp(1j * 0.7), ys, GEOM16)
    assert abs(rotated - base) <= 1e-12 * max(base, 1.0)


def test_objective_constrained_composition():
    rng = np.random.default_rng(11)
    z = rng.uniform(0.5, 1.0, size=(16, 16))
    ys = rng.uniform(0.8, 1.2, size=(3, 16, 16))
    params = ConstraintParams(1.0, 350.0, "one-alpha")
    via_z = objective_constrained(z, params, ys, GEOM16)
    via_x = objective_unconstrained(constrained_field(z, 1.0, 350.0), ys, GEOM16)
    np.testing.assert_allclose(via_z, via_x, rtol=1e-12)


def test_gradient_constrained_finite_differences():
    params = ConstraintParams(1.0, 350.0, "one-alpha")
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        z = rng.uniform(0.5, 1.0, size=(16, 16))
        ys = rng.uniform(0.8, 1.2, size=(3, 16, 16))
        g = gradient_constrained(z, params, ys, GEOM16)
        eps = 1e-7
        fd = np.zeros_like(z)
        for i in range(16):
            for j in range(16):
                zp = z.copy()
                zp[i, j] += eps
                zm = z.copy()
                zm[i, j] -= eps
                fd[i, j] = (
                    objective_constrained(zp, params, ys, GEOM16)
                    - objective_constrained(zm, params, ys, GEOM16)
                ) / (2 * eps)
        worst = max(worst, np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-30))
    assert worst < 1e-4


def test_gradient_constrained_zero_at_solution():
    params = ConstraintParams(1.0, 350.0, "one-alpha")
    rng = np.random.default_rng(2)
    z = rng.uniform(0.9, 1.0, size=(16, 16))
    ys = forward_unconstrained(
        constrained_field(z, params.alpha, params.gamma), transfers_for_geometry(GEOM16)
    )
    assert np.max(np.abs(gradient_constrained(z, params, ys, GEOM16))) < 1e-10


def test_constant_phase_is_a_gauge_direction():
    # with alpha = 0 a constant z is a pure global phase; the data cannot
    # see it, so the gradient has zero mean (no pull along that direction)
    params = ConstraintParams(0.0, 6.0, "tropt")
    z = np.full((16, 16), 0.8)
    ys = np.random.default_rng(7).uniform(0.8, 1.2, size=(3, 16, 16))
    g = gradient_constrained(z, params, ys, GEOM16)
    assert abs(g.mean()) < 1e-12 * max(np.max(np.abs(g)), 1.0)


def test_constrained_domain_errors():
    params = ConstraintParams(1.0, 350.0, "one-alpha")
    ys = np.ones((3, 16, 16))
    z = np.ones((16, 16))
    z[4, 5] = 0.0
    with pytest.raises(DomainError, match=r"\(4, 5\)"):
        objective_constrained(z, params, ys, GEOM16)
    with pytest.raises(DomainError):
        gradient_constrained(-z, params, ys, GEOM16)


def test_measurement_validation():
    x = np.ones((16, 16), complex)
    with pytest.raises(ValidationError):
        objective_unconstrained(x, np.ones((2, 16, 16)), GEOM16)
    with pytest.raises(ValidationError):
        objective_unconstrained(x, np.ones((3, 8, 8)), GEOM16)
    bad = np.ones((3, 16, 16))
    bad[1, 2, 3] = np.nan
    with pytest.raises(ValidationError, match=r"\(1, 2, 3\)"):
        objective_unconstrained(x, bad, GEOM16)


def test_choose_constraint_one_alpha():
    params = choose_constraint("one-alpha", SIC, GEOM16)
    assert params.alpha == 1.0
    np.testing.assert_allclose(params.gamma, 350.105, rtol=1e-3)
    assert params.mode == "one-alpha"


def test_choose_constraint_one_gamma():
    params = choose_constraint("one-gamma", SIC, GEOM16)
    assert params.gamma == 1.0
    np.testing.assert_allclose(params.alpha, 2.856e-3, rtol=1e-3)


def test_choose_constraint_tropt():
    geom = _geometry(128, (0.2,))
    params = choose_constraint("tropt", SIC, geom, t_low=0.01)
    np.testing.assert_allclose(params.gamma, 6.07, rtol=1e-3)
    np.testing.assert_allclose(params.alpha, 1.73e-2, rtol=5e-3)
    scale = -2 * np.pi * PIX * 128 / (LAM * np.log(0.01))
    np.testing.assert_allclose(params.alpha, scale * SIC.beta, rtol=1e-12)
    np.testing.assert_allclose(params.gamma, scale * SIC.delta, rtol=1e-12)
    # defining property: z for a straight path through max(N) pixels of
    # pure material comes out exactly at t_low, in both exponents
    span = 128 * PIX
    z_alpha = np.exp(-2 * np.pi * SIC.beta * span / (LAM * params.alpha))
    z_gamma = np.exp(-2 * np.pi * SIC.delta * span / (LAM * params.gamma))
    np.testing.assert_allclose(z_alpha, 0.01, rtol=1e-12)
    np.testing.assert_allclose(z_gamma, 0.01, rtol=1e-12)


def test_choose_constraint_errors():
    with pytest.raises(DomainError):
        choose_constraint("one-alpha", MaterialModel(1e-6, 0.0, "x"), GEOM16)
    with pytest.raises(DomainError):
        choose_constraint("one-gamma", MaterialModel(0.0, 1e-9, "x"), GEOM16)
    with pytest.raises(DomainError):
        choose_constraint("tropt", MaterialModel(0.0, 1e-9, "x"), GEOM16)
    with pytest.raises(ValidationError):
        choose_constraint("magic", SIC, GEOM16)
    with pytest.raises(ValidationError):
        choose_constraint("tropt", SIC, GEOM16, t_low=1.0)


def test_constraint_params_validation():
    with pytest.raises(ValidationError):
        ConstraintParams(1.0, 350.0, "weird")
    with pytest.raises(ValidationError):
        ConstraintParams(-0.1, 350.0, "tropt")
    with pytest.raises(ValidationError):
        ConstraintParams(1.0, 0.0, "one-alpha")
    with pytest.raises(ValidationError):
        ConstraintParams(2.0, 350.0, "one-alpha")
    with pytest.raises(ValidationError):
        ConstraintParams(0.003, 2.0, "one-gamma")
    with pytest.raises(ValidationError):
        ConstraintParams(1.0, 350.0, "one-alpha", t_low=0.0)


def test_unlpr_uniform_data_stays_at_one():
    geom = _geometry(16, (0.1, 0.3))
    absorption, phase, trace = unlpr_retrieve(np.ones((2, 16, 16)), geom)
    assert trace.termination == "converged"
    np.testing.assert_array_equal(absorption, 0.0)
    np.testing.assert_array_equal(phase, 0.0)


def test_unlpr_refines_ctf_initialization():
    n = 32
    geom = _geometry(n, (0.01, 0.2, 0.4))
    phi_true = _blobs((n, n), 0.05, (1.5, 3.0), seed=5)
    x_true = np.exp(-phi_true * (SIC.beta / SIC.delta) - 1j * phi_true)
    ys = forward_unconstrained(x_true, transfers_for_geometry(geom))
    phi_ctf, a_ctf = ctf_retrieve(ys, LAM, PIX, geom.distances_m)
    settings = SolverSettings(max_iters=3000, obj_tol_pct=0.01, recon_tol_pct=0.005)
    absorption, phase, trace = unlpr_retrieve(ys, geom, init=(a_ctf, phi_ctf), settings=settings)
    assert trace.termination == "converged"
    assert trace.final_objective < trace.records[0].objective
    err_nlpr = _nrmse_mean_matched(phase, phi_true)
    err_ctf = _nrmse_mean_matched(phi_ctf, phi_true)
    assert err_nlpr < 0.05
    assert err_nlpr < err_ctf


def test_unlpr_single_distance_warns():
    geom = _geometry(16, (0.2,))
    settings = SolverSettings(history=2, max_iters=2)
    with pytest.warns(UserWarning, match="ill posed"):
        unlpr_retrieve(np.ones((1, 16, 16)), geom, settings=settings)


def test_unlpr_init_validation():
    geom = _geometry(16, (0.1, 0.3))
    ys = np.ones((2, 16, 16))
    with pytest.raises(ValidationError):
        unlpr_retrieve(ys, geom, init=(np.zeros((8, 8)), np.zeros((16, 16))))
    with pytest.raises(ValidationError):
        unlpr_retrieve(ys, geom, init=(np.full((16, 16), np.nan), np.zeros((16, 16))))


def test_cnlpr_uniform_data_stays_at_one():
    geom = _geometry(16, (0.2,))
    params = choose_constraint("one-alpha", SIC, geom)
    absorption, phase, trace = cnlpr_retrieve(np.ones((1, 16, 16)), geom, params)
    assert trace.termination == "converged"
    np.testing.assert_array_equal(phase, 0.0)
    np.testing.assert_array_equal(absorption, 0.0)


def _sphere_measurements(n, radius_m, distance_m):
    geom = _geometry(n, (distance_m,))
    phantom = Phantom(
        (Sphere(0.0, 0.0, 0.0, radius_m, SIC.delta, SIC.beta, "SiC"),)
    )
    ys = simulate_scan(phantom, geom, supersample=4, noise_pct=0.0)[:, 0]
    _, phase = project_phantom(phantom, geom)
    return geom, ys, phase[0]


def test_cnlpr_paganin_init_beats_paganin_and_zero_init():
    geom, ys, phase_true = _sphere_measurements(32, 16e-6, 0.2)
    params = choose_constraint("one-alpha", SIC, geom)
    phi_pag, _ = paganin_retrieve(ys[0], LAM, PIX, 0.2, delta=SIC.delta, beta=SIC.beta)
    settings = SolverSettings(max_iters=400)
    _, phi_init, trace_init = cnlpr_retrieve(ys, geom, params, init=phi_pag, settings=settings)
    _, phi_zero, trace_zero = cnlpr_retrieve(ys, geom, params, settings=settings)
    assert trace_init.termination == "converged"
    assert trace_zero.termination == "converged"
    err_init = _nrmse_mean_matched(phi_init, phase_true)
    assert err_init < _nrmse_mean_matched(phi_pag, phase_true)
    assert err_init < _nrmse_mean_matched(phi_zero, phase_true)


def test_cnlpr_output_ratio_identity():
    geom, ys, _ = _sphere_measurements(32, 16e-6, 0.2)
    params = choose_constraint("one-alpha", SIC, geom)
    settings = SolverSettings(max_iters=150)
    absorption, phase, _ = cnlpr_retrieve(ys, geom, params, settings=settings)
    np.testing.assert_allclose(
        phase * params.alpha, absorption * params.gamma, rtol=1e-13, atol=1e-300
    )
    assert phase.max() > 0  # positive decrement gives positive phase


def test_cnlpr_deterministic():
    geom, ys, _ = _sphere_measurements(32, 16e-6, 0.2)
    params = choose_constraint("one-alpha", SIC, geom)
    settings = SolverSettings(history=16, max_iters=60)
    a1, p1, t1 = cnlpr_retrieve(ys, geom, params, settings=settings)
    a2, p2, t2 = cnlpr_retrieve(ys, geom, params, settings=settings)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(p1, p2)
    assert t1.termination == t2.termination
    assert [r.objective for r in t1.records] == [r.objective for r in t2.records]


def test_cnlpr_init_clamped():
    z = _initial_z(np.array([[20000.0, -4000.0], [0.0, 1.0]]), 350.0, (2, 2))
    assert z[0, 0] == pytest.approx(1e-6)
    assert z[0, 1] == 1.5
    assert z[1, 0] == 1.0


def test_cnlpr_params_type_checked():
    geom = _geometry(16, (0.2,))
    with pytest.raises(ValidationError):
        cnlpr_retrieve(np.ones((1, 16, 16)), geom, params=(1.0, 350.0))
