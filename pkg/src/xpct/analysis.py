"""Phase unwrapping and quantitative image evaluation.

Evaluation of retrieved phase and reconstructed decrement is gauge
aware: the forward model never sees the image mean, so comparisons use
either mean-free metrics (background subtraction) or documented
conventions (NRMSE is deliberately not offset-invariant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import DomainError, ValidationError

TWO_PI = 2.0 * np.pi

SSIM_SIGMA_PX = 8.0
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DATA_RANGE = 2.0

MTF_BIN_PX = 0.1
MTF_MAX_CYCLES_PER_PX = 0.5
MTF_HALF_WINDOW_PX = 10.0


@dataclass(frozen=True)
class RegionMask:
    """Boolean region over an image or volume, with a human label."""

    mask: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.dtype != bool:
            values = np.unique(m)
            if not np.all(np.isin(values, (0, 1))):
                raise ValidationError(
                    f"mask values must be boolean or 0/1, got {values[:5]}"
                )
            m = m.astype(bool)
        if not m.any():
            raise ValidationError("mask selects no elements")
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True)
class MtfCurve:
    """Modulation transfer samples; frequency in cycles per pixel."""

    frequency_cpp: np.ndarray
    modulation: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequency_cpp, dtype=float)
        m = np.asarray(self.modulation, dtype=float)
        if f.ndim != 1 or f.shape != m.shape:
            raise ValidationError("frequency and modulation must be matching 1-D arrays")
        if f[0] != 0.0 or abs(m[0] - 1.0) > 1e-12:
            raise ValidationError("curve must start at frequency 0 with modulation 1")
        object.__setattr__(self, "frequency_cpp", f)
        object.__setattr__(self, "modulation", m)

    def to_text(self):
        lines = ["# cycles_per_px modulation"]
        for f, m in zip(self.frequency_cpp, self.modulation):
            lines.append(f"{f:.6f} {m:.9e}")
        return "\n".join(lines) + "\n"


def _as_mask(mask, shape):
    if mask is None:
        return np.ones(shape, dtype=bool)
    if isinstance(mask, RegionMask):
        m = mask.mask
    else:
        m = RegionMask(mask).mask
    if m.shape != shape:
        raise ValidationError(f"mask shape {m.shape} does not match data shape {shape}")
    return m


def _wrap_to_pi(a):
    return (a + np.pi) % TWO_PI - np.pi


def unwrap_phase(phi_wrapped):
    """Two-dimensional phase unwrapping by reliability-sorted merging.

    Pixel reliability is the inverse magnitude of wrapped second
    differences; edges are processed from most to least reliable
    (ties broken by edge index), joining pixel groups while shifting
    the smaller-rooted group by the multiple of 2*pi that brings the
    two sides within pi of each other.  The output therefore equals
    the input plus per-pixel integer multiples of 2*pi; the global
    offset is arbitrary.
    """
    phi = np.asarray(phi_wrapped, dtype=float)
    if phi.ndim != 2:
        raise ValidationError(f"expected a 2-D phase image, got shape {phi.shape}")
    if not np.all(np.isfinite(phi)):
        raise ValidationError("phase image must be finite")
    n_rows, n_cols = phi.shape
    if n_rows * n_cols == 1:
        return phi.copy()

    variation = np.full(phi.shape, np.inf)
    if n_rows >= 3 and n_cols >= 3:
        c = phi[1:-1, 1:-1]
        h = _wrap_to_pi(phi[1:-1, :-2] - c) - _wrap_to_pi(c - phi[1:-1, 2:])
        v = _wrap_to_pi(phi[:-2, 1:-1] - c) - _wrap_to_pi(c - phi[2:, 1:-1])
        d1 = _wrap_to_pi(phi[:-2, :-2] - c) - _wrap_to_pi(c - phi[2:, 2:])
        d2 = _wrap_to_pi(phi[:-2, 2:] - c) - _wrap_to_pi(c - phi[2:, :-2])
        variation[1:-1, 1:-1] = np.sqrt(h * h + v * v + d1 * d1 + d2 * d2)
    with np.errstate(divide="ignore"):
        reliability = np.where(variation > 0, 1.0 / variation, np.inf)

    ids = np.arange(phi.size).reshape(phi.shape)
    edge_a = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    edge_b = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    rel = reliability.ravel()
    edge_rel = rel[edge_a] + rel[edge_b]
    order = np.argsort(-edge_rel, kind="stable")

    flat = phi.ravel()
    parent = np.arange(phi.size)
    k_rel = np.zeros(phi.size, dtype=np.int64)
    group_size = np.ones(phi.size, dtype=np.int64)

    def find(i):
        path = []
        while parent[i] != i:
            path.append(i)
            i = parent[i]
        acc = 0
        for node in reversed(path):
            acc += k_rel[node]
            parent[node] = i
            k_rel[node] = acc
        return i

    for e in order:
        a = int(edge_a[e])
        b = int(edge_b[e])
        root_a = find(a)
        root_b = find(b)
        if root_a == root_b:
            continue
        value_a = flat[a] + TWO_PI * k_rel[a]
        value_b = flat[b] + TWO_PI * k_rel[b]
        m = int(np.round((value_a - value_b) / TWO_PI))
        if group_size[root_a] >= group_size[root_b]:
            parent[root_b] = root_a
            k_rel[root_b] = m
            group_size[root_a] += group_size[root_b]
        else:
            parent[root_a] = root_b
            k_rel[root_a] = -m
            group_size[root_b] += group_size[root_a]

    for i in range(phi.size):
        find(i)
    return (flat + TWO_PI * k_rel).reshape(phi.shape)


def nrmse(estimate, truth, mask=None):
    """Root-mean-square error normalized by the truth's RMS over the mask.

    Not offset-invariant: adding a constant to the estimate changes the
    result.  Remove gauges explicitly before calling when needed.
    """
    e = np.asarray(estimate, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise ValidationError(f"shape mismatch: estimate {e.shape} vs truth {t.shape}")
    m = _as_mask(mask, t.shape)
    t_rms = np.sqrt(np.mean(t[m] ** 2))
    if t_rms == 0.0:
        raise DomainError("truth is identically zero over the mask; NRMSE undefined")
    return float(np.sqrt(np.mean((e[m] - t[m]) ** 2)) / t_rms)


def ssim(estimate, truth, mask=None):
    """Mean structural similarity with Gaussian windows of sigma 8 px.

    Both inputs are rescaled by the affine map sending the truth's
    minimum and maximum to -1 and 1, so the comparison is relative to
    the ground-truth dynamic range (stabilizer constants use range 2).
    """
    e = np.asarray(estimate, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise ValidationError(f"shape mismatch: estimate {e.shape} vs truth {t.shape}")
    m = _as_mask(mask, t.shape)
    t_min = t.min()
    t_range = t.max() - t_min
    if t_range == 0.0:
        raise DomainError("truth has zero range; SSIM rescaling undefined")
    scale = 2.0 / t_range
    es = scale * (e - t_min) - 1.0
    ts = scale * (t - t_min) - 1.0

    c1 = (SSIM_K1 * SSIM_DATA_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_DATA_RANGE) ** 2

    def blur(a):
        return gaussian_filter(a, SSIM_SIGMA_PX, mode="reflect")

    mu_e = blur(es)
    mu_t = blur(ts)
    var_e = blur(es * es) - mu_e * mu_e
    var_t = blur(ts * ts) - mu_t * mu_t
    cov = blur(es * ts) - mu_e * mu_t
    num = (2 * mu_e * mu_t + c1) * (2 * cov + c2)
    den = (mu_e * mu_e + mu_t * mu_t + c1) * (var_e + var_t + c2)
    return float(np.mean((num / den)[m]))


def mtf_from_disc(image, disc_center, disc_radius):
    """Modulation transfer function from the edge of a uniform disc.

    Pixel values are binned by signed radial distance to the disc edge
    (bin width 0.1 px) to form an edge-spread function; its derivative
    is the line-spread function, whose Fourier magnitude, normalized to
    1 at zero frequency, is returned up to 0.5 cycles/pixel.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValidationError(f"expected a 2-D image, got shape {img.shape}")
    radius = float(disc_radius)
    if radius < 3.0:
        raise DomainError(f"disc radius {radius} px is too small to estimate an edge")
    center_row, center_col = (float(disc_center[0]), float(disc_center[1]))
    half_window = min(radius, MTF_HALF_WINDOW_PX)
    reach = radius + half_window
    n_rows, n_cols = img.shape
    if (
        center_row - reach < -0.5
        or center_col - reach < -0.5
        or center_row + reach > n_rows - 0.5
        or center_col + reach > n_cols - 0.5
    ):
        raise DomainError("disc edge window extends beyond the image")

    rows = np.arange(n_rows)[:, None] - center_row
    cols = np.arange(n_cols)[None, :] - center_col
    signed = np.sqrt(rows * rows + cols * cols) - radius
    select = np.abs(signed) <= half_window
    distances = signed[select]
    values = img[select]

    n_bins = int(np.round(2.0 * half_window / MTF_BIN_PX))
    edges = np.linspace(-half_window, half_window, n_bins + 1)
    which = np.clip(np.digitize(distances, edges) - 1, 0, n_bins - 1)
    sums = np.bincount(which, weights=values, minlength=n_bins)
    counts = np.bincount(which, minlength=n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    filled = counts > 0
    esf = np.interp(centers, centers[filled], sums[filled] / counts[filled])

    # apodize the line-spread function so that binning jitter far from
    # the edge does not set a false modulation floor at high frequency
    lsf = np.gradient(esf, MTF_BIN_PX) * np.hanning(n_bins)
    spectrum = np.abs(np.fft.rfft(lsf))
    if spectrum[0] == 0.0:
        raise DomainError("flat edge profile; MTF undefined")
    freqs = np.fft.rfftfreq(n_bins, d=MTF_BIN_PX)
    keep = freqs <= MTF_MAX_CYCLES_PER_PX
    return MtfCurve(freqs[keep], (spectrum / spectrum[0])[keep])


def background_subtract(volume, material_mask, background_mask):
    """Mean over the material region minus mean over the background.

    Invariant to any constant added to the whole volume, which is what
    makes it the right quantitative readout for reconstructions whose
    zero level is not observable.
    """
    vol = np.asarray(volume, dtype=float)
    mat = _as_mask(material_mask, vol.shape)
    bg = _as_mask(background_mask, vol.shape)
    if np.any(mat & bg):
        raise ValidationError("material and background masks overlap")
    return float(vol[mat].mean() - vol[bg].mean())
