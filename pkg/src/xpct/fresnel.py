"""Fresnel free-space propagation of complex transmission fields.

The propagator is diagonal in DFT space. For a padded grid with N_v rows and
N_u columns of pitch delta, the transfer function at integer frequency pair
(p, q) is

    H(p, q) = exp(-i pi lambda R (p^2 dmu^2 + q^2 dnu^2))

with dmu = 1/(N_u delta) along columns and dnu = 1/(N_v delta) along rows.
Frequencies follow standard DFT ordering (negative frequencies in the upper
half), which is what `numpy.fft.fftfreq` produces. The forward DFT is
unnormalized and the inverse carries the 1/(MN) factor, matching numpy.

Fields are edge-replicate padded before the transform and cropped back
afterwards. |H| = 1 everywhere, so propagation conserves the energy of the
padded field exactly; cropping is where energy can leave the frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, ValidationError, ensure_complex_field, first_offending_index


@dataclass(frozen=True)
class PaddingSpec:
    """Edge-replicate padding widths, applied on each side."""

    pad_rows: int
    pad_cols: int

    def __post_init__(self):
        if self.pad_rows < 0 or self.pad_cols < 0:
            raise ValidationError(f"padding must be >= 0, got {self}")
        object.__setattr__(self, "pad_rows", int(self.pad_rows))
        object.__setattr__(self, "pad_cols", int(self.pad_cols))

    def padded_shape(self, shape):
        return (shape[0] + 2 * self.pad_rows, shape[1] + 2 * self.pad_cols)


def default_padding(shape):
    """Half the image dimension per side, the package-wide default."""
    return PaddingSpec(shape[0] // 2, shape[1] // 2)


@dataclass(frozen=True)
class TransferFunction:
    """Cached propagation transfer grid for one distance on a padded grid."""

    grid: np.ndarray
    distance_m: float
    wavelength_m: float
    pixel_width_m: float

    @property
    def padded_shape(self):
        return self.grid.shape


def build_transfer(wavelength_m, pixel_width_m, padded_shape, distance_m):
    """Transfer function on a padded grid for a single distance.

    Negative distances are accepted (time-reversed propagation, used by the
    round-trip tests); the scan geometry itself only admits distances >= 0.
    """
    if wavelength_m <= 0 or pixel_width_m <= 0:
        raise ValidationError("wavelength and pixel width must be positive")
    rows_p, cols_p = int(padded_shape[0]), int(padded_shape[1])
    if rows_p < 1 or cols_p < 1:
        raise ValidationError(f"padded shape must be >= 1 x 1, got {padded_shape}")
    freq_u = np.fft.fftfreq(cols_p, d=pixel_width_m)
    freq_v = np.fft.fftfreq(rows_p, d=pixel_width_m)
    f_sq = freq_v[:, None] ** 2 + freq_u[None, :] ** 2
    grid = np.exp(-1j * np.pi * wavelength_m * distance_m * f_sq)
    return TransferFunction(
        grid=grid,
        distance_m=float(distance_m),
        wavelength_m=float(wavelength_m),
        pixel_width_m=float(pixel_width_m),
    )


def transfers_for_geometry(geometry, padding=None):
    """One TransferFunction per geometry distance, on the padded grid."""
    if padding is None:
        padding = default_padding(geometry.shape)
    padded = padding.padded_shape(geometry.shape)
    return tuple(
        build_transfer(geometry.wavelength_m, geometry.pixel_width_m, padded, d)
        for d in geometry.distances_m
    )


def pad_field(a, padding):
    """Edge-replicate padding on both axes."""
    if padding.pad_rows == 0 and padding.pad_cols == 0:
        return np.array(a, copy=True)
    return np.pad(a, ((padding.pad_rows,) * 2, (padding.pad_cols,) * 2), mode="edge")


def crop_field(a, padding, shape):
    """Crop a padded array back to the nominal shape."""
    pr, pc = padding.pad_rows, padding.pad_cols
    return a[pr : pr + shape[0], pc : pc + shape[1]]


def crop_adjoint(a, padding):
    """Adjoint of `crop_field`: embed into the padded grid with zeros."""
    pr, pc = padding.pad_rows, padding.pad_cols
    rows, cols = a.shape
    out = np.zeros((rows + 2 * pr, cols + 2 * pc), dtype=a.dtype)
    out[pr : pr + rows, pc : pc + cols] = a
    return out


def pad_adjoint(a, padding, shape):
    """Adjoint of `pad_field`: fold padded-border contributions onto the edges.

    Satisfies <pad_field(x), a> = <x, pad_adjoint(a)> for all x of `shape`.
    """
    rows, cols = shape
    pr, pc = padding.pad_rows, padding.pad_cols
    v = np.array(a[pr : pr + rows, :], copy=True)
    if pr:
        v[0, :] += a[:pr, :].sum(axis=0)
        v[-1, :] += a[pr + rows :, :].sum(axis=0)
    out = np.array(v[:, pc : pc + cols], copy=True)
    if pc:
        out[:, 0] += v[:, :pc].sum(axis=1)
        out[:, -1] += v[:, pc + cols :].sum(axis=1)
    return out


def propagate(field, transfer, padding=None, crop=True):
    """Propagate a complex field by one distance.

    Parameters
    ----------
    field : ndarray
        2D complex field on the nominal grid.
    transfer : TransferFunction
        Built for the padded shape implied by `padding`.
    padding : PaddingSpec, optional
        Defaults to half the field dimension per side.
    crop : bool
        When False, return the full padded propagated field. Useful for
        energy accounting: |H| = 1 so the padded field's total energy is
        conserved, while cropping discards whatever diffracted outside.
    """
    field = ensure_complex_field(field)
    if padding is None:
        padding = default_padding(field.shape)
    padded_shape = padding.padded_shape(field.shape)
    if transfer.grid.shape != padded_shape:
        raise ValidationError(
            f"transfer grid {transfer.grid.shape} does not match padded shape {padded_shape}"
        )
    spectrum = np.fft.fft2(pad_field(field, padding))
    out = np.fft.ifft2(transfer.grid * spectrum)
    if crop:
        return crop_field(out, padding, field.shape)
    return out


def forward_unconstrained(x, transfers, padding=None):
    """Measured magnitudes |H_l x| at every distance.

    Returns an array of shape (n_distances, rows, cols).
    """
    x = ensure_complex_field(x, "x")
    out = np.empty((len(transfers), x.shape[0], x.shape[1]))
    for l, transfer in enumerate(transfers):
        out[l] = np.abs(propagate(x, transfer, padding))
    return out


def constrained_field(z, alpha, gamma):
    """Transmission x = z^(alpha + i gamma), defined through exp and log.

    z must be strictly positive real; raises DomainError otherwise.
    """
    z = np.asarray(z, dtype=np.float64)
    bad = ~(np.isfinite(z) & (z > 0))
    if bad.any():
        idx = first_offending_index(bad, z.shape)
        raise DomainError(f"z must be strictly positive and finite, offending index {idx}")
    return np.exp((alpha + 1j * gamma) * np.log(z))


def forward_constrained(z, alpha, gamma, transfers, padding=None):
    """Measured magnitudes of a single-material field z^(alpha + i gamma)."""
    return forward_unconstrained(constrained_field(z, alpha, gamma), transfers, padding)
