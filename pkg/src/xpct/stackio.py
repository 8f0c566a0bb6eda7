"""Image stack container: raw float32 payload plus a structured-text sidecar.

A stack file is a pair of files. `path` holds the payload, raw little-endian
float32 samples ordered view-major then row-major. `path + ".hdr"` holds the
sidecar, UTF-8 `key = value` lines. Lists are comma-separated. Lines starting
with `#` and blank lines are ignored. Unknown keys are preserved on a round
trip.

Computation everywhere in the package is float64; storage is float32.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .core import StackFormatError, ValidationError, first_offending_index

FORMAT_VERSION = 1
PAYLOAD_DTYPE = "f32le"

# Content kinds. The first five follow the measurement pipeline; "mask" holds
# 0/1 region masks and "volume" holds reconstructed axial slices.
KINDS = (
    "intensity",
    "sqrt-normalized",
    "phase",
    "absorption",
    "z-field",
    "mask",
    "volume",
)

_MANDATORY_KEYS = (
    "version",
    "kind",
    "n_views",
    "rows",
    "cols",
    "dtype",
    "wavelength_m",
    "pixel_width_m",
    "distances_m",
    "view_angles_rad",
)


@dataclass
class ImageStack:
    """In-memory image stack with acquisition metadata.

    Parameters
    ----------
    images : ndarray
        Shape (n_views, rows, cols), finite float64.
    kind : str
        One of `KINDS`.
    wavelength_m, pixel_width_m : float
        Beam and detector metadata.
    distances_m : tuple of float
        Propagation distances this stack was measured at (one per distance
        stack) or derived from (retrieved and reconstructed products).
    view_angles_rad : tuple of float
        View angles for projection stacks; source angles for volumes, where
        n_views counts axial slices instead.
    extra : dict
        Unrecognized sidecar keys, kept verbatim.
    """

    images: np.ndarray
    kind: str
    wavelength_m: float
    pixel_width_m: float
    distances_m: tuple = ()
    view_angles_rad: tuple = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 3:
            raise ValidationError(
                f"stack images must be 3D (n_views, rows, cols), got shape {self.images.shape}"
            )
        if any(s < 1 for s in self.images.shape):
            raise ValidationError(f"stack dimensions must be >= 1, got {self.images.shape}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown stack kind {self.kind!r}, expected one of {KINDS}")
        self.distances_m = tuple(float(d) for d in self.distances_m)
        self.view_angles_rad = tuple(float(a) for a in self.view_angles_rad)
        if not np.isfinite(self.wavelength_m) or self.wavelength_m <= 0:
            raise ValidationError(f"wavelength must be positive, got {self.wavelength_m}")
        if not np.isfinite(self.pixel_width_m) or self.pixel_width_m <= 0:
            raise ValidationError(f"pixel width must be positive, got {self.pixel_width_m}")

    @property
    def n_views(self):
        return self.images.shape[0]

    @property
    def shape(self):
        return self.images.shape[1:]


def _format_value(v):
    if isinstance(v, (tuple, list, np.ndarray)):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _sidecar_text(stack):
    n_views, rows, cols = stack.images.shape
    pairs = [
        ("version", FORMAT_VERSION),
        ("kind", stack.kind),
        ("n_views", n_views),
        ("rows", rows),
        ("cols", cols),
        ("dtype", PAYLOAD_DTYPE),
        ("wavelength_m", stack.wavelength_m),
        ("pixel_width_m", stack.pixel_width_m),
        ("distances_m", stack.distances_m),
        ("view_angles_rad", stack.view_angles_rad),
    ]
    pairs += sorted(stack.extra.items())
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in pairs)


def save_stack(stack, path):
    """Write `stack` to `path` (payload) and `path + ".hdr"` (sidecar).

    Raises ValidationError if any sample is non-finite, naming the first
    offending (view, row, col) index.
    """
    path = os.fspath(path)
    with np.errstate(over="ignore"):
        samples = np.ascontiguousarray(stack.images, dtype="<f4")
    # catches non-finite input and float64 values that overflow float32
    bad = ~np.isfinite(samples)
    if bad.any():
        idx = first_offending_index(bad, stack.images.shape)
        raise ValidationError(f"stack sample not storable as float32 at index {idx}")
    payload = samples.tobytes()
    with open(path, "wb") as f:
        f.write(payload)
    with open(path + ".hdr", "w", encoding="utf-8") as f:
        f.write(_sidecar_text(stack))
    return path


def _parse_sidecar(text, path):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise StackFormatError(f"{path}: sidecar line {lineno} is not 'key = value': {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in entries:
            raise StackFormatError(f"{path}: duplicate sidecar key {key!r}")
        entries[key] = value.strip()
    missing = [k for k in _MANDATORY_KEYS if k not in entries]
    if missing:
        raise StackFormatError(f"{path}: sidecar missing mandatory keys {missing}")
    return entries


def _parse_float_list(value, key, path):
    if value == "":
        return ()
    try:
        return tuple(float(tok) for tok in value.split(","))
    except ValueError as exc:
        raise StackFormatError(f"{path}: cannot parse {key!r} as float list: {value!r}") from exc


def load_stack(path):
    """Read a stack written by `save_stack`. Returns an ImageStack (float64)."""
    path = os.fspath(path)
    header_path = path + ".hdr"
    if not os.path.exists(path):
        raise FileNotFoundError(f"stack payload not found: {path}")
    if not os.path.exists(header_path):
        raise FileNotFoundError(f"stack sidecar not found: {header_path}")
    with open(header_path, encoding="utf-8") as f:
        entries = _parse_sidecar(f.read(), header_path)

    def take_int(key):
        try:
            return int(entries.pop(key))
        except ValueError as exc:
            raise StackFormatError(f"{path}: key {key!r} is not an integer") from exc

    def take_float(key):
        try:
            return float(entries.pop(key))
        except ValueError as exc:
            raise StackFormatError(f"{path}: key {key!r} is not a number") from exc

    version = take_int("version")
    if version != FORMAT_VERSION:
        raise StackFormatError(f"{path}: unsupported format version {version}")
    kind = entries.pop("kind")
    if kind not in KINDS:
        raise StackFormatError(f"{path}: unknown stack kind {kind!r}")
    n_views, rows, cols = take_int("n_views"), take_int("rows"), take_int("cols")
    if min(n_views, rows, cols) < 1:
        raise StackFormatError(f"{path}: dimensions must be >= 1, got {(n_views, rows, cols)}")
    dtype = entries.pop("dtype")
    if dtype != PAYLOAD_DTYPE:
        raise StackFormatError(f"{path}: unsupported payload dtype {dtype!r}")
    wavelength_m = take_float("wavelength_m")
    pixel_width_m = take_float("pixel_width_m")
    distances_m = _parse_float_list(entries.pop("distances_m"), "distances_m", path)
    view_angles_rad = _parse_float_list(entries.pop("view_angles_rad"), "view_angles_rad", path)

    expected = n_views * rows * cols * 4
    with open(path, "rb") as f:
        payload = f.read()
    if len(payload) != expected:
        raise StackFormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    images = samples.reshape(n_views, rows, cols)
    bad = ~np.isfinite(images)
    if bad.any():
        idx = first_offending_index(bad, images.shape)
        raise StackFormatError(f"{path}: non-finite sample at index {idx}")

    try:
        return ImageStack(
            images=images,
            kind=kind,
            wavelength_m=wavelength_m,
            pixel_width_m=pixel_width_m,
            distances_m=distances_m,
            view_angles_rad=view_angles_rad,
            extra=entries,
        )
    except ValidationError as exc:
        raise StackFormatError(f"{path}: {exc}") from exc
