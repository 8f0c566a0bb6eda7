"""Sphere phantoms, analytic projection, scan simulation, and FBP.

Coordinate conventions
----------------------
u is the horizontal detector axis (columns), v the vertical axis (rows), and
w the beam axis at the zero view angle. Pixel and voxel centers sit at
(k - (N - 1) / 2) * pixel_width along each axis, so the rotation axis (the
v axis) passes through the grid center. At view angle theta the object is
rotated counter-clockwise in the (u, w) plane:

    u' = u cos(theta) - w sin(theta),  w' = u sin(theta) + w cos(theta).

Volumes are indexed [v, u, w]: a stack of axial slices along the rotation
axis, each slice an (n_u, n_w) image matching the FBP output.

A ray through a sphere of radius r at impact parameter rho has chord length
2 sqrt(r^2 - rho^2). Projected absorption and phase for spheres with
refractive index n = 1 - delta + i beta are

    A = (2 pi / lambda) * sum_s beta_s * chord_s
    phi = (2 pi / lambda) * sum_s delta_s * chord_s

Overlapping spheres double-count in projections (chords add); voxelization
lets the later sphere win. Keep phantoms disjoint where this matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ValidationError
from .fresnel import build_transfer, default_padding, pad_field, crop_field

_MICRON = 1e-6


@dataclass(frozen=True)
class Sphere:
    """Homogeneous sphere. Center coordinates and radius in meters."""

    center_u_m: float
    center_v_m: float
    center_w_m: float
    radius_m: float
    delta: float
    beta: float
    name: str = ""

    def __post_init__(self):
        for label in ("center_u_m", "center_v_m", "center_w_m"):
            if not np.isfinite(getattr(self, label)):
                raise ValidationError(f"sphere {label} must be finite")
        if not np.isfinite(self.radius_m) or self.radius_m <= 0:
            raise ValidationError(f"sphere radius must be positive, got {self.radius_m}")
        if not np.isfinite(self.delta):
            raise ValidationError("sphere delta must be finite")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValidationError(f"sphere beta must be finite and >= 0, got {self.beta}")


@dataclass(frozen=True)
class Phantom:
    """An ordered collection of spheres. May be empty (vacuum scene)."""

    spheres: tuple

    def __post_init__(self):
        object.__setattr__(self, "spheres", tuple(self.spheres))
        for i, s in enumerate(self.spheres):
            if not isinstance(s, Sphere):
                raise ValidationError(f"spheres[{i}] is not a Sphere")


def load_phantom(path):
    """Read a phantom description file.

    One sphere per line, whitespace separated:

        center_u_um  center_v_um  center_w_um  radius_um  delta  beta  [name]

    Geometry columns are in micrometers. Blank lines and `#` comments are
    ignored.
    """
    spheres = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (6, 7):
                raise ValidationError(
                    f"{path}:{lineno}: expected 6 or 7 columns, got {len(parts)}"
                )
            try:
                cu, cv, cw, radius = (float(p) * _MICRON for p in parts[:4])
                delta, beta = float(parts[4]), float(parts[5])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: cannot parse number: {raw!r}") from exc
            name = parts[6] if len(parts) == 7 else ""
            spheres.append(
                Sphere(
                    center_u_m=cu,
                    center_v_m=cv,
                    center_w_m=cw,
                    radius_m=radius,
                    delta=delta,
                    beta=beta,
                    name=name,
                )
            )
    return Phantom(spheres=tuple(spheres))


def save_phantom(phantom, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("# center_u_um center_v_um center_w_um radius_um delta beta name\n")
        for s in phantom.spheres:
            f.write(
                f"{s.center_u_m / _MICRON:.9g} {s.center_v_m / _MICRON:.9g} "
                f"{s.center_w_m / _MICRON:.9g} {s.radius_m / _MICRON:.9g} "
                f"{s.delta:.9g} {s.beta:.9g} {s.name or '-'}\n"
            )
    return path


def evenly_spaced_angles(n_views, span_rad=np.pi):
    """n_views angles from 0, evenly spaced, endpoint excluded."""
    if n_views < 1:
        raise ValidationError("n_views must be >= 1")
    return tuple(float(a) for a in np.arange(n_views) * (span_rad / n_views))


def _axis_coords(n, pitch):
    return (np.arange(n) - (n - 1) / 2.0) * pitch


def _chord_images(phantom, geometry, angle, supersample):
    """Summed chord fields (beta-weighted, delta-weighted) for one view.

    Returned on the supersampled grid at pitch pixel_width / supersample,
    units of meters of material.
    """
    ss = int(supersample)
    rows = geometry.n_rows * ss
    cols = geometry.n_cols * ss
    pitch = geometry.pixel_width_m / ss
    u = _axis_coords(cols, pitch)[None, :]
    v = _axis_coords(rows, pitch)[:, None]
    beta_chord = np.zeros((rows, cols))
    delta_chord = np.zeros((rows, cols))
    cos_t, sin_t = np.cos(angle), np.sin(angle)
    for s in phantom.spheres:
        cu = s.center_u_m * cos_t - s.center_w_m * sin_t
        rho_sq = (u - cu) ** 2 + (v - s.center_v_m) ** 2
        chord = 2.0 * np.sqrt(np.maximum(s.radius_m**2 - rho_sq, 0.0))
        beta_chord += s.beta * chord
        delta_chord += s.delta * chord
    return beta_chord, delta_chord


def block_average(a, factor):
    """Mean over non-overlapping factor x factor blocks of the last two axes."""
    f = int(factor)
    if f == 1:
        return np.asarray(a, dtype=np.float64)
    rows, cols = a.shape[-2] // f, a.shape[-1] // f
    shaped = a.reshape(*a.shape[:-2], rows, f, cols, f)
    return shaped.mean(axis=(-3, -1))


def project_phantom(phantom, geometry, supersample=1):
    """Analytic projections of a sphere phantom at every view angle.

    Line integrals are evaluated on a supersampled grid and block-averaged
    to detector resolution (supersample=1 gives exact pixel-center values).

    Returns
    -------
    (absorption, phase) : ndarray pair, each (n_views, n_rows, n_cols)
    """
    if int(supersample) < 1:
        raise ValidationError(f"supersample must be >= 1, got {supersample}")
    k = 2.0 * np.pi / geometry.wavelength_m
    absorption = np.empty((geometry.n_views, geometry.n_rows, geometry.n_cols))
    phase = np.empty_like(absorption)
    for i, angle in enumerate(geometry.view_angles_rad):
        beta_chord, delta_chord = _chord_images(phantom, geometry, angle, supersample)
        absorption[i] = block_average(k * beta_chord, supersample)
        phase[i] = block_average(k * delta_chord, supersample)
    return absorption, phase


def simulate_scan(phantom, geometry, supersample=4, noise_pct=0.1, seed=0, padding=None):
    """Simulate square-root-normalized measurements of a phantom scan.

    For each view the complex transmission exp(-A - i phi) is formed on a
    supersampled grid (pitch pixel_width / supersample), Fresnel propagated
    to each distance, squared to intensity, block-averaged to the detector
    grid, and square rooted. Zero-mean Gaussian noise with per-pixel standard
    deviation noise_pct / 100 times the value is then added.

    Parameters
    ----------
    supersample : int
        Subpixel factor, >= 1. Keep >= 4 to avoid committing the inverse
        crime when the data will be fed back to the retrieval operators.
    noise_pct : float
        Noise level in percent. 0 disables noise.
    seed : int
        Seed for the noise generator; equal seeds give identical scans.
    padding : PaddingSpec, optional
        Padding of the supersampled grid. Defaults to half its dimensions.

    Returns
    -------
    ndarray of shape (n_distances, n_views, n_rows, n_cols)
    """
    if int(supersample) < 1:
        raise ValidationError(f"supersample must be >= 1, got {supersample}")
    if noise_pct < 0:
        raise ValidationError(f"noise_pct must be >= 0, got {noise_pct}")
    ss = int(supersample)
    ss_shape = (geometry.n_rows * ss, geometry.n_cols * ss)
    if padding is None:
        padding = default_padding(ss_shape)
    padded_shape = padding.padded_shape(ss_shape)
    pitch = geometry.pixel_width_m / ss
    transfers = [
        build_transfer(geometry.wavelength_m, pitch, padded_shape, d)
        for d in geometry.distances_m
    ]
    k = 2.0 * np.pi / geometry.wavelength_m
    y = np.empty((geometry.n_distances, geometry.n_views, geometry.n_rows, geometry.n_cols))
    for i, angle in enumerate(geometry.view_angles_rad):
        beta_chord, delta_chord = _chord_images(phantom, geometry, angle, ss)
        field = np.exp(-k * (beta_chord + 1j * delta_chord))
        spectrum = np.fft.fft2(pad_field(field, padding))
        for l, transfer in enumerate(transfers):
            prop = np.fft.ifft2(transfer.grid * spectrum)
            intensity = np.abs(crop_field(prop, padding, ss_shape)) ** 2
            y[l, i] = np.sqrt(block_average(intensity, ss))
    if noise_pct > 0:
        rng = np.random.default_rng(seed)
        y = y + rng.standard_normal(y.shape) * (noise_pct / 100.0) * y
    return y


def voxelize_phantom(phantom, geometry, value="delta"):
    """Sample a phantom on the reconstruction voxel grid.

    Parameters
    ----------
    value : {"delta", "beta", "label"}
        Voxel content: refractive index decrement, absorption index, or the
        1-based sphere index (0 for background). Later spheres win where
        spheres overlap.

    Returns
    -------
    ndarray of shape (n_rows, n_cols, n_cols), indexed [v, u, w]
    """
    if value not in ("delta", "beta", "label"):
        raise ValidationError(f"unknown voxel value {value!r}")
    pitch = geometry.pixel_width_m
    v = _axis_coords(geometry.n_rows, pitch)[:, None, None]
    u = _axis_coords(geometry.n_cols, pitch)[None, :, None]
    w = _axis_coords(geometry.n_cols, pitch)[None, None, :]
    vol = np.zeros((geometry.n_rows, geometry.n_cols, geometry.n_cols))
    for idx, s in enumerate(phantom.spheres):
        inside = (u - s.center_u_m) ** 2 + (v - s.center_v_m) ** 2 + (
            w - s.center_w_m
        ) ** 2 <= s.radius_m**2
        if value == "delta":
            vol[inside] = s.delta
        elif value == "beta":
            vol[inside] = s.beta
        else:
            vol[inside] = idx + 1
    return vol


def ramp_filter(n, pitch):
    """|f| ramp on the DFT frequencies of an n-sample axis with the given pitch."""
    return np.abs(np.fft.fftfreq(n, d=pitch))


def fbp_reconstruct(phase, geometry):
    """Filtered back projection of phase projections to the decrement delta.

    Each detector row v is an independent sinogram of the axial slice at
    that height: phi / k (k = 2 pi / lambda) gives line integrals of delta
    in meters. Rows are ramp filtered in DFT space (zero-padded to twice the
    row length) and back projected with linear interpolation and angular
    weight pi / n_views.

    Parameters
    ----------
    phase : ndarray
        (n_views, n_rows, n_cols) unwrapped phase projections.
    geometry : ScanGeometry
        Supplies wavelength, pixel width, and the view angles.

    Returns
    -------
    ndarray of shape (n_rows, n_cols, n_cols), indexed [v, u, w]
    """
    phase = np.asarray(phase, dtype=np.float64)
    if phase.ndim != 3:
        raise ValidationError(f"phase stack must be 3D, got shape {phase.shape}")
    n_views, n_rows, n_cols = phase.shape
    if n_views != geometry.n_views:
        raise ValidationError(
            f"stack has {n_views} views but geometry lists {geometry.n_views} angles"
        )
    pitch = geometry.pixel_width_m
    k = 2.0 * np.pi / geometry.wavelength_m
    sino = phase / k

    n_pad = 2 * n_cols
    ramp = ramp_filter(n_pad, pitch)
    padded = np.zeros((n_views, n_rows, n_pad))
    padded[:, :, :n_cols] = sino
    filtered = np.fft.ifft(np.fft.fft(padded, axis=-1) * ramp, axis=-1).real[:, :, :n_cols]

    coords = _axis_coords(n_cols, pitch)
    det = coords
    vol = np.zeros((n_rows, n_cols, n_cols))
    weight = np.pi / n_views
    for i, angle in enumerate(geometry.view_angles_rad):
        t = (coords[:, None] * np.cos(angle) - coords[None, :] * np.sin(angle)).ravel()
        for j in range(n_rows):
            vol[j] += np.interp(t, det, filtered[i, j], left=0.0, right=0.0).reshape(
                n_cols, n_cols
            )
    return vol * weight
