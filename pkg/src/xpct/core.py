"""Scan geometry, material models, and shared validation helpers.

Conventions used throughout the package:

* Detector images are 2D float64 arrays of shape (n_rows, n_cols). Rows index
  the vertical detector axis v, columns the horizontal axis u.
* Complex transmission fields are 2D complex128 arrays on the same grid.
* All lengths are in meters, energies in eV, angles in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# h * c in eV * m, CODATA. wavelength_m = HC_EV_M / energy_ev
HC_EV_M = 1.23984193e-6


class XpctError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(XpctError, ValueError):
    """Invalid configuration, metadata, or array inputs."""


class DomainError(XpctError, ValueError):
    """Input outside the mathematical domain of an operation."""


class NumericalFailure(XpctError, RuntimeError):
    """A solver encountered non-finite values it could not recover from."""


class StackFormatError(XpctError, ValueError):
    """Malformed image stack container on disk."""


def wavelength_from_energy(energy_ev):
    """Photon wavelength in meters for an energy in eV."""
    if not np.isfinite(energy_ev) or energy_ev <= 0:
        raise ValidationError(f"energy must be positive and finite, got {energy_ev}")
    return HC_EV_M / float(energy_ev)


def energy_from_wavelength(wavelength_m):
    """Photon energy in eV for a wavelength in meters."""
    if not np.isfinite(wavelength_m) or wavelength_m <= 0:
        raise ValidationError(f"wavelength must be positive and finite, got {wavelength_m}")
    return HC_EV_M / float(wavelength_m)


def fresnel_number(pixel_width_m, wavelength_m, distance_m):
    """Pixel-scale Fresnel number N_F = delta^2 / (lambda R).

    Parameters
    ----------
    pixel_width_m : float
        Detector pixel width (square pixels).
    wavelength_m : float
        Photon wavelength.
    distance_m : float
        Object-to-detector propagation distance. Must be positive; at
        R = 0 the Fresnel number is not defined (propagation is the
        identity there).
    """
    if pixel_width_m <= 0 or wavelength_m <= 0:
        raise ValidationError("pixel width and wavelength must be positive")
    if distance_m <= 0:
        raise DomainError(f"Fresnel number requires a positive distance, got {distance_m}")
    return pixel_width_m**2 / (wavelength_m * distance_m)


@dataclass(frozen=True)
class ScanGeometry:
    """Acquisition geometry for one parallel-beam scan.

    Parameters
    ----------
    wavelength_m : float
        Photon wavelength, positive.
    pixel_width_m : float
        Square detector pixel width, positive.
    distances_m : tuple of float
        Object-to-detector distances, each >= 0, at least one.
    n_rows, n_cols : int
        Detector grid size (v rows by u columns), each >= 1.
    view_angles_rad : tuple of float
        Tomographic view angles, counter-clockwise from 0.
    """

    wavelength_m: float
    pixel_width_m: float
    distances_m: tuple = ()
    n_rows: int = 1
    n_cols: int = 1
    view_angles_rad: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "distances_m", tuple(float(d) for d in self.distances_m))
        object.__setattr__(
            self, "view_angles_rad", tuple(float(a) for a in self.view_angles_rad)
        )
        if not np.isfinite(self.wavelength_m) or self.wavelength_m <= 0:
            raise ValidationError(f"wavelength must be positive, got {self.wavelength_m}")
        if not np.isfinite(self.pixel_width_m) or self.pixel_width_m <= 0:
            raise ValidationError(f"pixel width must be positive, got {self.pixel_width_m}")
        if len(self.distances_m) < 1:
            raise ValidationError("at least one propagation distance is required")
        for i, d in enumerate(self.distances_m):
            if not np.isfinite(d) or d < 0:
                raise ValidationError(f"distance {i} must be finite and >= 0, got {d}")
        if int(self.n_rows) < 1 or int(self.n_cols) < 1:
            raise ValidationError("detector grid must be at least 1 x 1")
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        if len(self.view_angles_rad) < 1:
            raise ValidationError("at least one view angle is required")
        for i, a in enumerate(self.view_angles_rad):
            if not np.isfinite(a):
                raise ValidationError(f"view angle {i} is not finite")

    @property
    def n_views(self):
        return len(self.view_angles_rad)

    @property
    def n_distances(self):
        return len(self.distances_m)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def fresnel_numbers(self):
        """Fresnel number at each distance."""
        return tuple(
            fresnel_number(self.pixel_width_m, self.wavelength_m, d) for d in self.distances_m
        )


@dataclass(frozen=True)
class MaterialModel:
    """Complex refractive index n = 1 - delta + i*beta of a single material."""

    delta: float
    beta: float
    name: str = ""

    def __post_init__(self):
        if not np.isfinite(self.delta):
            raise ValidationError("delta must be finite")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValidationError(f"beta must be finite and >= 0, got {self.beta}")

    @property
    def delta_beta_ratio(self):
        if self.beta == 0:
            raise DomainError("delta/beta ratio undefined for beta = 0")
        return self.delta / self.beta


def first_offending_index(bad, shape):
    """Index tuple (plain ints) of the first True entry in a boolean mask."""
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(bad)), shape))


def _first_nonfinite_index(a):
    bad = ~np.isfinite(a)
    if not bad.any():
        return None
    return first_offending_index(bad, a.shape)


def ensure_real_image(a, name="image"):
    """Coerce to a finite 2D float64 array, raising ValidationError otherwise."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2D, got shape {arr.shape}")
    idx = _first_nonfinite_index(arr)
    if idx is not None:
        raise ValidationError(f"{name} has non-finite sample at index {idx}")
    return arr


def ensure_complex_field(a, name="field"):
    """Coerce to a finite 2D complex128 array, raising ValidationError otherwise."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2D, got shape {arr.shape}")
    bad = ~(np.isfinite(arr.real) & np.isfinite(arr.imag))
    if bad.any():
        idx = first_offending_index(bad, arr.shape)
        raise ValidationError(f"{name} has non-finite sample at index {idx}")
    return arr
