"""Non-linear phase retrieval by maximum-likelihood minimization.

Two formulations share one misfit: the sum over distances of squared
differences between measured magnitudes and the magnitudes of the
propagated trial field.  The unconstrained solve (U-NLPR) optimizes the
complex transmission itself and needs several distances to be well
posed; the constrained solve (C-NLPR) writes the transmission as
z^(alpha + i gamma) for one material, which halves the unknowns and
regularizes single-distance retrieval.

Gradients are analytic adjoints of the forward model, not automatic
differentiation.  For the unconstrained misfit the returned complex
array g is the conjugate-coordinate (Wirtinger) gradient scaled so that
l(x + eps*d) = l(x) + eps*Re<g, d> + O(eps^2); equivalently, its real
and imaginary parts are exactly the gradient with respect to the
stacked real and imaginary parts of x, which is the vector the
minimizer sees.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import unwrap_phase
from .core import (
    DomainError,
    NumericalFailure,
    ValidationError,
    ensure_complex_field,
    first_offending_index,
)
from .fresnel import (
    constrained_field,
    crop_adjoint,
    crop_field,
    default_padding,
    pad_adjoint,
    pad_field,
    transfers_for_geometry,
)
from .lbfgs import SolverSettings, lbfgs_minimize

MAGNITUDE_GUARD = 1e-12
CONSTRAINT_MODES = ("one-alpha", "one-gamma", "tropt")
DEFAULT_T_LOW = 0.01
Z_INIT_MIN = 1e-6
Z_INIT_MAX = 1.5


@dataclass(frozen=True)
class ConstraintParams:
    """Exponents of the single-material transmission x = z^(alpha + i gamma)."""

    alpha: float
    gamma: float
    mode: str
    t_low: float = DEFAULT_T_LOW

    def __post_init__(self):
        if self.mode not in CONSTRAINT_MODES:
            raise ValidationError(
                f"mode must be one of {CONSTRAINT_MODES}, got {self.mode!r}"
            )
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValidationError(f"alpha must be a non-negative real, got {self.alpha!r}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValidationError(f"gamma must be positive, got {self.gamma!r}")
        if not (0.0 < self.t_low < 1.0):
            raise ValidationError(f"t_low must lie in (0, 1), got {self.t_low!r}")
        if self.mode == "one-alpha" and self.alpha != 1.0:
            raise ValidationError("one-alpha fixes alpha = 1")
        if self.mode == "one-gamma" and self.gamma != 1.0:
            raise ValidationError("one-gamma fixes gamma = 1")


def choose_constraint(mode, material, geometry, t_low=DEFAULT_T_LOW):
    """Constraint exponents for a material and scan geometry.

    one-alpha: (1, delta/beta), needing only the material's ratio.
    one-gamma: (beta/delta, 1), the reciprocal parameterization.
    tropt:     both exponents set so the least transmissive plausible
               object, a straight path of length max(N_u, N_v) pixels,
               still transmits t_low of the beam.
    """
    if mode not in CONSTRAINT_MODES:
        raise ValidationError(f"mode must be one of {CONSTRAINT_MODES}, got {mode!r}")
    if mode == "one-alpha":
        if material.beta <= 0:
            raise DomainError("one-alpha needs beta > 0 (gamma would be infinite)")
        return ConstraintParams(1.0, material.delta / material.beta, mode, t_low)
    if mode == "one-gamma":
        if material.delta <= 0:
            raise DomainError("one-gamma needs delta > 0 (alpha would be infinite)")
        return ConstraintParams(material.beta / material.delta, 1.0, mode, t_low)
    if material.delta <= 0:
        raise DomainError("tropt needs delta > 0 (gamma would not be positive)")
    if not (0.0 < t_low < 1.0):
        raise ValidationError(f"t_low must lie in (0, 1), got {t_low!r}")
    span_px = max(geometry.n_rows, geometry.n_cols)
    scale = -2.0 * np.pi * geometry.pixel_width_m * span_px / (
        geometry.wavelength_m * np.log(t_low)
    )
    return ConstraintParams(scale * material.beta, scale * material.delta, mode, t_low)


def _checked_measurements(ys, geometry):
    ys = np.asarray(ys, dtype=np.float64)
    expected = (geometry.n_distances,) + geometry.shape
    if ys.shape != expected:
        raise ValidationError(
            f"measurements must have shape {expected} (distances, rows, cols), got {ys.shape}"
        )
    if not np.all(np.isfinite(ys)):
        idx = first_offending_index(~np.isfinite(ys), ys.shape)
        raise ValidationError(f"non-finite measurement at index {idx}")
    return ys


def _misfit(x, ys, transfers, padding):
    """Objective value and conjugate-coordinate gradient, one FFT pass."""
    padded = pad_field(x, padding)
    spectrum = np.fft.fft2(padded)
    value = 0.0
    acc = np.zeros(padded.shape, dtype=np.complex128)
    for y, transfer in zip(ys, transfers):
        u = crop_field(np.fft.ifft2(transfer.grid * spectrum), padding, x.shape)
        mag = np.abs(u)
        residual = y - mag
        value += float((residual * residual).sum())
        q = np.where(mag < MAGNITUDE_GUARD, 0.0, residual * u / np.maximum(mag, MAGNITUDE_GUARD))
        acc += np.conj(transfer.grid) * np.fft.fft2(crop_adjoint(q, padding))
    g = -2.0 * pad_adjoint(np.fft.ifft2(acc), padding, x.shape)
    return value, g


def _unconstrained_setup(x, ys, geometry, padding):
    x = ensure_complex_field(x, "x")
    if x.shape != geometry.shape:
        raise ValidationError(f"x shape {x.shape} does not match geometry {geometry.shape}")
    ys = _checked_measurements(ys, geometry)
    if padding is None:
        padding = default_padding(geometry.shape)
    transfers = transfers_for_geometry(geometry, padding)
    return x, ys, transfers, padding


def objective_unconstrained(x, ys, geometry, padding=None):
    """Sum of squared magnitude residuals over all distances."""
    x, ys, transfers, padding = _unconstrained_setup(x, ys, geometry, padding)
    value, _ = _misfit(x, ys, transfers, padding)
    return value


def gradient_unconstrained(x, ys, geometry, padding=None):
    """Conjugate-coordinate gradient of the magnitude misfit at x."""
    x, ys, transfers, padding = _unconstrained_setup(x, ys, geometry, padding)
    _, g = _misfit(x, ys, transfers, padding)
    return g


def objective_constrained(z, params, ys, geometry, padding=None):
    """Misfit of the single-material field z^(alpha + i gamma)."""
    x = constrained_field(z, params.alpha, params.gamma)
    return objective_unconstrained(x, ys, geometry, padding)


def gradient_constrained(z, params, ys, geometry, padding=None):
    """Real gradient of the constrained misfit with respect to z."""
    x = constrained_field(z, params.alpha, params.gamma)
    x, ys, transfers, padding = _unconstrained_setup(x, ys, geometry, padding)
    _, g = _misfit(x, ys, transfers, padding)
    return _chain_to_z(g, np.asarray(z, dtype=np.float64), params)


def _chain_to_z(g, z, params):
    ag = params.alpha + 1j * params.gamma
    dx_dz = ag * np.exp((ag - 1.0) * np.log(z))
    return np.real(np.conj(g) * dx_dz)


def _initial_z(phi0, gamma, shape):
    if phi0 is None:
        return np.ones(shape)
    phi0 = np.asarray(phi0, dtype=np.float64)
    if phi0.shape != shape:
        raise ValidationError(f"init phase shape {phi0.shape} does not match {shape}")
    if not np.all(np.isfinite(phi0)):
        raise ValidationError("init phase must be finite")
    return np.clip(np.exp(-phi0 / gamma), Z_INIT_MIN, Z_INIT_MAX)


def unlpr_retrieve(ys, geometry, init=None, settings=None, padding=None):
    """Multi-distance retrieval of the full complex transmission.

    init is None (start from x = 1 everywhere) or a pair
    (absorption0, phase0) of real images, typically from a linear
    retrieval.  Returns (absorption, phase, trace); the phase is
    unwrapped, with its global offset unconstrained.
    """
    ys = _checked_measurements(ys, geometry)
    if geometry.n_distances < 2:
        warnings.warn(
            "unconstrained retrieval from a single distance is ill posed; "
            "expect the solver to wander",
            stacklevel=2,
        )
    if padding is None:
        padding = default_padding(geometry.shape)
    transfers = transfers_for_geometry(geometry, padding)
    shape = geometry.shape
    if init is None:
        x0 = np.ones(shape, dtype=np.complex128)
    else:
        a0 = np.asarray(init[0], dtype=np.float64)
        p0 = np.asarray(init[1], dtype=np.float64)
        if a0.shape != shape or p0.shape != shape:
            raise ValidationError(
                f"init images must have shape {shape}, got {a0.shape} and {p0.shape}"
            )
        if not (np.all(np.isfinite(a0)) and np.all(np.isfinite(p0))):
            raise ValidationError("init images must be finite")
        x0 = np.exp(-a0 - 1j * p0)
    n = shape[0] * shape[1]

    def fun(v):
        x = (v[:n] + 1j * v[n:]).reshape(shape)
        value, g = _misfit(x, ys, transfers, padding)
        return value, np.concatenate([g.real.ravel(), g.imag.ravel()])

    v0 = np.concatenate([x0.real.ravel(), x0.imag.ravel()])
    v_hat, trace = lbfgs_minimize(fun, v0, settings)
    x_hat = (v_hat[:n] + 1j * v_hat[n:]).reshape(shape)
    mag = np.abs(x_hat)
    if np.any(mag == 0.0):
        idx = first_offending_index(mag == 0.0, shape)
        raise NumericalFailure(f"zero transmission magnitude at index {idx}")
    absorption = -np.log(mag)
    phase = unwrap_phase(-np.arctan2(x_hat.imag, x_hat.real))
    return absorption, phase, trace


def cnlpr_retrieve(ys, geometry, params, init=None, settings=None, padding=None):
    """Single-material retrieval over the real transmission z > 0.

    init is None (start from z = 1) or a phase image, converted to
    z0 = exp(-phase/gamma) and clamped into [1e-6, 1.5].  Positivity is
    maintained during line search by reporting +inf at any trial with
    z <= 0, which shortens the step.  Returns (absorption, phase,
    trace); the phase needs no unwrapping because it is gamma times a
    real logarithm.
    """
    ys = _checked_measurements(ys, geometry)
    if not isinstance(params, ConstraintParams):
        raise ValidationError("params must be a ConstraintParams")
    if padding is None:
        padding = default_padding(geometry.shape)
    transfers = transfers_for_geometry(geometry, padding)
    shape = geometry.shape
    z0 = _initial_z(init, params.gamma, shape)

    def fun(v):
        if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
            return np.inf, None
        z = v.reshape(shape)
        x = np.exp((params.alpha + 1j * params.gamma) * np.log(z))
        value, g = _misfit(x, ys, transfers, padding)
        return value, _chain_to_z(g, z, params).ravel()

    v_hat, trace = lbfgs_minimize(fun, z0.ravel(), settings)
    z_hat = v_hat.reshape(shape)
    if np.any(z_hat <= 0.0) or not np.all(np.isfinite(z_hat)):
        raise NumericalFailure("solver returned a non-positive transmission")
    log_z = np.log(z_hat)
    return -params.alpha * log_z, -params.gamma * log_z, trace
