"""Linear single-step phase retrieval: flat-field normalization, the
single-distance single-material filter, and the multi-distance contrast
transfer function (CTF) solver.

Both retrievals linearize the imaging model around weak contrast and solve
in DFT space on an edge-padded grid. They are exact only in their regime of
validity; elsewhere they serve as initializers for the iterative solvers in
`xpct.nlpr`.

Sign conventions match the forward model in `xpct.fresnel`: transmission
x = exp(-A - i phi) and transfer H = exp(-i pi lambda R f^2), so a positive
refractive index decrement delta produces positive retrieved phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, ValidationError, first_offending_index
from .fresnel import crop_field, default_padding, pad_field

INTENSITY_FLOOR = 1e-8


def normalize(raw, bright, dark):
    """Flat- and dark-field correction to square-root-normalized contrast.

    y = sqrt((raw - dark) / (bright - dark)), with negative numerators
    clamped to zero before the square root.

    Parameters
    ----------
    raw : ndarray
        Measured intensities, (rows, cols) or (n_views, rows, cols).
    bright, dark : ndarray
        Flat and dark fields, (rows, cols). bright must exceed dark
        everywhere.
    """
    raw = np.asarray(raw, dtype=np.float64)
    bright = np.asarray(bright, dtype=np.float64)
    dark = np.asarray(dark, dtype=np.float64)
    if bright.shape != dark.shape:
        raise ValidationError(
            f"bright {bright.shape} and dark {dark.shape} shapes do not match"
        )
    if raw.shape[-2:] != bright.shape:
        raise ValidationError(f"raw {raw.shape} does not match flats {bright.shape}")
    for name, a in (("raw", raw), ("bright", bright), ("dark", dark)):
        bad = ~np.isfinite(a)
        if bad.any():
            idx = first_offending_index(bad, a.shape)
            raise ValidationError(f"{name} has non-finite sample at index {idx}")
    span = bright - dark
    bad = span <= 0
    if bad.any():
        idx = first_offending_index(bad, span.shape)
        raise DomainError(f"bright <= dark at index {idx}")
    return np.sqrt(np.maximum(raw - dark, 0.0) / span)


def _freq_sq(padded_shape, pixel_width_m):
    fu = np.fft.fftfreq(padded_shape[1], d=pixel_width_m)
    fv = np.fft.fftfreq(padded_shape[0], d=pixel_width_m)
    return fv[:, None] ** 2 + fu[None, :] ** 2


def paganin_retrieve(y, wavelength_m, pixel_width_m, distance_m, delta, beta, padding=None):
    """Single-distance retrieval assuming one homogeneous material.

    Inverts the transport-of-intensity model for a material with fixed
    delta/beta. With mu_a = 4 pi beta / lambda, the projected thickness is

        T = -(1/mu_a) ln( IDFT[ DFT[y^2] / (1 + (4 pi^2 R delta / mu_a) f^2) ] )

    The filtered intensity is floored at 1e-8 before the log. Outputs are
    phase = (2 pi / lambda) delta T and absorption = mu_a T / 2, which makes
    phase / absorption = delta / beta by construction.

    Returns
    -------
    (phase, absorption) : pair of (rows, cols) ndarrays
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValidationError(f"y must be 2D, got shape {y.shape}")
    if beta <= 0:
        raise DomainError(f"single-material filter requires beta > 0, got {beta}")
    if delta <= 0:
        raise DomainError(f"single-material filter requires delta > 0, got {delta}")
    if distance_m < 0:
        raise ValidationError(f"distance must be >= 0, got {distance_m}")
    if padding is None:
        padding = default_padding(y.shape)
    mu_a = 4.0 * np.pi * beta / wavelength_m
    padded = pad_field(y * y, padding)
    denom = 1.0 + (4.0 * np.pi**2 * distance_m * delta / mu_a) * _freq_sq(
        padded.shape, pixel_width_m
    )
    smoothed = np.fft.ifft2(np.fft.fft2(padded) / denom).real
    smoothed = np.maximum(smoothed, INTENSITY_FLOOR)
    thickness = -np.log(smoothed) / mu_a
    thickness = crop_field(thickness, padding, y.shape)
    phase = (2.0 * np.pi / wavelength_m) * delta * thickness
    absorption = 0.5 * mu_a * thickness
    return phase, absorption


@dataclass(frozen=True)
class CtfRegularization:
    """Regularization of the CTF least-squares denominator.

    mode "fixed" scales with the normal-equation determinant,
    alpha' = 2 nu (B C - A^2), plus nu at the DC bin alone; this leaves the
    solution untouched up to a 1/(1 + nu) factor wherever the system is well
    conditioned and zeroes the undetermined DC component. mode "explicit"
    adds a constant `value` everywhere instead.
    """

    mode: str = "fixed"
    nu: float = 1e-8
    value: float = 0.0

    def __post_init__(self):
        if self.mode not in ("fixed", "explicit"):
            raise ValidationError(f"unknown regularization mode {self.mode!r}")
        if self.mode == "fixed" and not self.nu > 0:
            raise ValidationError(f"fixed-rule nu must be > 0, got {self.nu}")
        if self.mode == "explicit" and self.value < 0:
            raise ValidationError(f"explicit alpha' must be >= 0, got {self.value}")


def ctf_retrieve(ys, wavelength_m, pixel_width_m, distances_m, padding=None, regularization=None):
    """Weak-object retrieval from one or more propagation distances.

    Per padded-grid frequency, with chi_l = pi lambda R_l f^2,
    s_l = sin chi_l, c_l = cos chi_l, and D_l the DFT of the edge-padded
    contrast y_l^2 - 1, the least-squares solution of the linearized model
    D_l = -2 s_l PHI - 2 c_l ABS is

        PHI = (A T - C S) / (2 (B C - A^2) + alpha')
        ABS = (A S - B T) / (2 (B C - A^2) + alpha')

    where A = sum s_l c_l, B = sum s_l^2, C = sum c_l^2, S = sum s_l D_l,
    T = sum c_l D_l. Retrieved phase and absorption are the real parts of
    the inverse DFTs, cropped to the nominal grid. The DC component is not
    determined by this model and is left at zero: retrieved images are
    mean-free on the padded grid.

    Returns
    -------
    (phase, absorption) : pair of (rows, cols) ndarrays
    """
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim == 2:
        ys = ys[None]
    if ys.ndim != 3:
        raise ValidationError(f"ys must be (n_distances, rows, cols), got shape {ys.shape}")
    distances = tuple(float(d) for d in np.atleast_1d(distances_m))
    if len(distances) != ys.shape[0]:
        raise ValidationError(
            f"{ys.shape[0]} images but {len(distances)} distances were given"
        )
    if regularization is None:
        regularization = CtfRegularization()
    shape = ys.shape[1:]
    if padding is None:
        padding = default_padding(shape)
    f_sq = _freq_sq(padding.padded_shape(shape), pixel_width_m)

    sum_sc = np.zeros_like(f_sq)
    sum_ss = np.zeros_like(f_sq)
    sum_cc = np.zeros_like(f_sq)
    sum_sd = np.zeros(f_sq.shape, dtype=np.complex128)
    sum_cd = np.zeros(f_sq.shape, dtype=np.complex128)
    for y, dist in zip(ys, distances):
        chi = np.pi * wavelength_m * dist * f_sq
        s, c = np.sin(chi), np.cos(chi)
        d = np.fft.fft2(pad_field(y * y - 1.0, padding))
        sum_sc += s * c
        sum_ss += s * s
        sum_cc += c * c
        sum_sd += s * d
        sum_cd += c * d

    # Cauchy-Schwarz gives B C - A^2 >= 0; clamp tiny negative float residue
    det = np.maximum(sum_ss * sum_cc - sum_sc**2, 0.0)
    if regularization.mode == "fixed":
        alpha_prime = 2.0 * regularization.nu * det
        alpha_prime.flat[0] += regularization.nu
    else:
        alpha_prime = np.full_like(det, regularization.value)
    den = 2.0 * det + alpha_prime
    # where the denominator vanishes the numerators do too (the s and c
    # vectors are parallel there); define the ratio as zero
    safe = den > 0
    den = np.where(safe, den, 1.0)
    phi_hat = np.where(safe, (sum_sc * sum_cd - sum_cc * sum_sd) / den, 0.0)
    abs_hat = np.where(safe, (sum_sc * sum_sd - sum_ss * sum_cd) / den, 0.0)
    phase = crop_field(np.fft.ifft2(phi_hat).real, padding, shape)
    absorption = crop_field(np.fft.ifft2(abs_hat).real, padding, shape)
    return phase, absorption
