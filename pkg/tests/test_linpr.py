import numpy as np
import pytest

from xpct.core import DomainError, ScanGeometry, ValidationError, wavelength_from_energy
from xpct.fresnel import PaddingSpec, default_padding, forward_unconstrained, transfers_for_geometry
from xpct.linpr import CtfRegularization, ctf_retrieve, normalize, paganin_retrieve
from xpct.tomo import Phantom, Sphere, project_phantom, simulate_scan

LAM = wavelength_from_energy(20e3)
PIX = 1.29e-6
SIC = dict(delta=1.67e-6, beta=4.77e-9)


def test_normalize_formula():
    raw = np.array([[5.0, 3.0], [1.0, 2.0]])
    bright = np.full((2, 2), 9.0)
    dark = np.full((2, 2), 1.0)
    y = normalize(raw, bright, dark)
    np.testing.assert_allclose(y, np.sqrt(np.array([[0.5, 0.25], [0.0, 0.125]])))


def test_normalize_clamps_negative_numerator():
    y = normalize(np.array([[0.5]]), np.array([[2.0]]), np.array([[1.0]]))
    assert y[0, 0] == 0.0


def test_normalize_round_trip():
    rng = np.random.default_rng(0)
    y = rng.uniform(0.1, 1.2, size=(3, 8, 8))
    bright = rng.uniform(2.0, 3.0, size=(8, 8))
    dark = rng.uniform(0.0, 0.5, size=(8, 8))
    raw = dark + (bright - dark) * y**2
    np.testing.assert_allclose(normalize(raw, bright, dark), y, rtol=1e-12)


def test_normalize_errors():
    with pytest.raises(DomainError, match=r"\(0, 1\)"):
        normalize(np.ones((2, 2)), np.array([[2.0, 1.0], [2.0, 2.0]]), np.ones((2, 2)))
    with pytest.raises(ValidationError):
        normalize(np.ones((3, 3)), np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        normalize(np.full((2, 2), np.nan), np.ones((2, 2)), np.zeros((2, 2)))


def _sphere_scan(n, r_m, distance_m=0.2, supersample=4):
    geom = ScanGeometry(
        wavelength_m=LAM,
        pixel_width_m=PIX,
        distances_m=(distance_m,),
        n_rows=n,
        n_cols=n,
        view_angles_rad=(0.0,),
    )
    phantom = Phantom(
        (
            Sphere(
                center_u_m=0.0,
                center_v_m=0.0,
                center_w_m=0.0,
                radius_m=r_m,
                name="SiC",
                **SIC,
            ),
        )
    )
    y = simulate_scan(phantom, geom, supersample=supersample, noise_pct=0.0)[0, 0]
    _, phase = project_phantom(phantom, geom)
    return geom, y, phase[0]


def _interior_mask(n, r_m):
    u = (np.arange(n) - (n - 1) / 2) * PIX
    return u[None, :] ** 2 + u[:, None] ** 2 < r_m**2


def test_paganin_uniform_input_gives_zero():
    phase, absorption = paganin_retrieve(np.ones((16, 16)), LAM, PIX, 0.2, **SIC)
    np.testing.assert_allclose(phase, 0.0, atol=1e-10)
    np.testing.assert_allclose(absorption, 0.0, atol=1e-12)


def test_paganin_output_ratio_is_delta_beta():
    _, y, _ = _sphere_scan(32, 10e-6)
    phase, absorption = paganin_retrieve(y, LAM, PIX, 0.2, **SIC)
    np.testing.assert_allclose(phase, absorption * (SIC["delta"] / SIC["beta"]), rtol=1e-12)


def test_paganin_recovers_sphere_projection():
    # validity improves with sphere size relative to the fringe scale
    # sqrt(lambda R) of 3.5 um; a 60 um sphere sits well inside the regime
    n, r = 128, 60e-6
    _, y, phase_true = _sphere_scan(n, r)
    phase, _ = paganin_retrieve(y, LAM, PIX, 0.2, **SIC)
    m = _interior_mask(n, r)
    err = phase[m] - phase_true[m]
    nrmse = np.sqrt((err**2).mean()) / np.sqrt((phase_true[m] ** 2).mean())
    assert nrmse < 0.05


def test_paganin_intensity_floor():
    phase, absorption = paganin_retrieve(np.zeros((12, 12)), LAM, PIX, 0.2, **SIC)
    assert np.all(np.isfinite(phase)) and np.all(np.isfinite(absorption))
    assert phase.max() > 0


def test_paganin_errors():
    y = np.ones((8, 8))
    with pytest.raises(DomainError):
        paganin_retrieve(y, LAM, PIX, 0.2, delta=1.67e-6, beta=0.0)
    with pytest.raises(DomainError):
        paganin_retrieve(y, LAM, PIX, 0.2, delta=0.0, beta=4.77e-9)
    with pytest.raises(ValidationError):
        paganin_retrieve(y, LAM, PIX, -0.2, **SIC)
    with pytest.raises(ValidationError):
        paganin_retrieve(np.ones(8), LAM, PIX, 0.2, **SIC)


def _weak_blobs(shape, peak, sig_range, seed=1):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    out = np.zeros(shape)
    for _ in range(6):
        cy = rng.uniform(shape[0] * 0.2, shape[0] * 0.8)
        cx = rng.uniform(shape[1] * 0.2, shape[1] * 0.8)
        sig = rng.uniform(*sig_range)
        out += rng.uniform(0.3, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))
    return out * (peak / out.max())


def test_ctf_exact_on_linear_data():
    # synthesize data that satisfies the linearized model exactly; the
    # least-squares inversion must then be exact up to the mean
    shape = (96, 96)
    pix = PIX
    phi = _weak_blobs(shape, 0.05, (2, 5), seed=3)
    fu = np.fft.fftfreq(shape[1], d=pix)
    fv = np.fft.fftfreq(shape[0], d=pix)
    fsq = fv[:, None] ** 2 + fu[None, :] ** 2
    dists = (0.01, 0.2, 0.4)
    spectrum = np.fft.fft2(phi)
    ys = []
    for dist in dists:
        chi = np.pi * LAM * dist * fsq
        y_sq = 1.0 + np.fft.ifft2(-2.0 * np.sin(chi) * spectrum).real
        ys.append(np.sqrt(np.maximum(y_sq, 0.0)))
    phase, absorption = ctf_retrieve(np.array(ys), LAM, pix, dists, padding=PaddingSpec(0, 0))
    err = (phase - phase.mean()) - (phi - phi.mean())
    assert np.max(np.abs(err)) < 1e-8
    assert np.max(np.abs(absorption)) < 1e-10


def test_ctf_recovers_weak_phase_object():
    # feature sizes chosen inside the band the three transfer functions
    # actually probe; near-DC content is not recoverable from pure phase
    shape = (48, 48)
    phi = _weak_blobs(shape, 0.05, (1.5, 3.0))
    geom = ScanGeometry(
        wavelength_m=LAM,
        pixel_width_m=PIX,
        distances_m=(0.01, 0.2, 0.4),
        n_rows=shape[0],
        n_cols=shape[1],
        view_angles_rad=(0.0,),
    )
    ys = forward_unconstrained(np.exp(-1j * phi), transfers_for_geometry(geom))
    phase, _ = ctf_retrieve(ys, LAM, PIX, geom.distances_m)
    est = phase - phase.mean()
    ref = phi - phi.mean()
    nrmse = np.sqrt(((est - ref) ** 2).mean()) / np.sqrt((ref**2).mean())
    assert nrmse < 0.05
    # positive decrement gives positive retrieved phase
    assert np.corrcoef(est.ravel(), ref.ravel())[0, 1] > 0.99


def test_ctf_recovers_weak_absorption_object():
    shape = (48, 48)
    absorption_true = _weak_blobs(shape, 0.05, (1.5, 3.0), seed=7)
    geom = ScanGeometry(
        wavelength_m=LAM,
        pixel_width_m=PIX,
        distances_m=(0.01, 0.2, 0.4),
        n_rows=shape[0],
        n_cols=shape[1],
        view_angles_rad=(0.0,),
    )
    ys = forward_unconstrained(
        np.exp(-absorption_true).astype(complex), transfers_for_geometry(geom)
    )
    phase, absorption = ctf_retrieve(ys, LAM, PIX, geom.distances_m)
    est = absorption - absorption.mean()
    ref = absorption_true - absorption_true.mean()
    nrmse = np.sqrt(((est - ref) ** 2).mean()) / np.sqrt((ref**2).mean())
    assert nrmse < 0.05


def test_ctf_uniform_input_gives_zero():
    ys = np.ones((3, 16, 16))
    phase, absorption = ctf_retrieve(ys, LAM, PIX, (0.01, 0.2, 0.4))
    np.testing.assert_allclose(phase, 0.0, atol=1e-12)
    np.testing.assert_allclose(absorption, 0.0, atol=1e-12)


def test_ctf_single_distance_runs():
    _, y, _ = _sphere_scan(32, 10e-6)
    phase, absorption = ctf_retrieve(y[None], LAM, PIX, (0.2,))
    assert np.all(np.isfinite(phase)) and np.all(np.isfinite(absorption))


def test_ctf_explicit_regularization_damps():
    shape = (32, 32)
    phi = _weak_blobs(shape, 0.05, (1.5, 3.0))
    geom = ScanGeometry(
        wavelength_m=LAM,
        pixel_width_m=PIX,
        distances_m=(0.01, 0.2, 0.4),
        n_rows=shape[0],
        n_cols=shape[1],
        view_angles_rad=(0.0,),
    )
    ys = forward_unconstrained(np.exp(-1j * phi), transfers_for_geometry(geom))
    ref, _ = ctf_retrieve(ys, LAM, PIX, geom.distances_m)
    damped, _ = ctf_retrieve(
        ys, LAM, PIX, geom.distances_m, regularization=CtfRegularization(mode="explicit", value=50.0)
    )
    assert np.abs(damped).max() < 0.5 * np.abs(ref).max()


def test_ctf_validation():
    with pytest.raises(ValidationError):
        ctf_retrieve(np.ones((2, 8, 8)), LAM, PIX, (0.1, 0.2, 0.3))
    with pytest.raises(ValidationError):
        CtfRegularization(mode="weird")
    with pytest.raises(ValidationError):
        CtfRegularization(mode="fixed", nu=0.0)
    with pytest.raises(ValidationError):
        CtfRegularization(mode="explicit", value=-1.0)
