"""Scalar propagation and ideal optical elements.

Every element is a small frozen spec object with an ``apply(field)`` method so
that an arm of the apparatus is just a tuple of specs (see :func:`apply_chain`).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ValidationError
from .field import ComplexField, FWHM_PER_SIGMA, Grid2D, _readonly

__all__ = [
    "PropagationSpec", "LensSpec", "ImagingSpec", "ApertureMask",
    "propagate", "transfer_function", "beam_splitter", "apply_mask",
    "make_two_hole_mask", "make_hole_array_mask", "thin_lens", "image_system",
    "apply_chain", "gaussian_aperture", "gaussian_beam", "required_image_distance",
    "gsm_rayleigh_range", "gsm_expansion",
]


@dataclass(frozen=True)
class PropagationSpec:
    z: float
    evanescent_policy: str = "truncate"

    def __post_init__(self):
        if not (math.isfinite(self.z) and self.z >= 0):
            raise ValidationError(f"propagation distance z must be >= 0, got {self.z!r}")
        if self.evanescent_policy != "truncate":
            raise ValidationError(f"unsupported evanescent policy {self.evanescent_policy!r}")
        object.__setattr__(self, "z", float(self.z))

    def apply(self, field: ComplexField) -> ComplexField:
        return propagate(field, self)


@functools.lru_cache(maxsize=64)
def transfer_function(grid: Grid2D, z: float) -> np.ndarray:
    """Angular-spectrum transfer function ``exp(i z kz)`` in FFT order.

    Evanescent components (``kx^2 + ky^2 >= k^2``) are set to zero. The large
    common phase ``exp(i z k)`` is factored out so the per-sample phase
    ``z (kz - k)`` stays small and accurate.
    """
    k = grid.k
    kt2 = grid.kt2
    prop = kt2 < k * k
    kz_minus_k = np.where(prop, -kt2 / (k + np.sqrt(np.where(prop, k * k - kt2, 0.0))), 0.0)
    h = np.exp(1j * z * kz_minus_k) * np.exp(1j * z * k)
    h[~prop] = 0.0
    return _readonly(h)


def propagate(field: ComplexField, spec: Union[PropagationSpec, float]) -> ComplexField:
    """Free-space propagation by the exact angular-spectrum method.

    ``z = 0`` returns the input object itself. Power is conserved except for
    whatever evanescent content the input carried.
    """
    if not isinstance(spec, PropagationSpec):
        spec = PropagationSpec(spec)
    if spec.z == 0:
        return field
    return ComplexField.from_spectrum(field.grid, field.spectrum * transfer_function(field.grid, spec.z))


def beam_splitter(field: ComplexField, halve_power: bool = False) -> tuple[ComplexField, ComplexField]:
    """Ideal lossless splitter: two identical copies of the input.

    With ``halve_power`` each copy carries half the input power.
    """
    if not halve_power:
        return field, field
    out = field.scaled(1.0 / math.sqrt(2.0))
    return out, out


class ApertureMask:
    """Complex transmission ``t`` of an object plane, ``|t| <= 1``."""

    __slots__ = ("grid", "transmission", "_support")

    def __init__(self, grid: Grid2D, transmission):
        t = np.array(transmission, dtype=np.complex128)
        if t.shape != grid.shape:
            raise ValidationError(f"transmission shape {t.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(t)):
            raise ValidationError("transmission must be finite")
        if np.any(np.abs(t) > 1 + 1e-12):
            raise ValidationError("|transmission| must not exceed 1")
        self.grid = grid
        self.transmission = _readonly(t)
        self._support = None

    @property
    def open_area(self) -> float:
        """``A = sum |t|^2 dx dy`` in square meters."""
        t = self.transmission
        return float(np.sum(t.real**2 + t.imag**2)) * self.grid.pixel_area

    @property
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat indices of non-zero transmission and ``|t|^2`` there."""
        if self._support is None:
            flat = self.transmission.ravel()
            idx = np.flatnonzero(flat)
            self._support = (_readonly(idx), _readonly(np.abs(flat[idx]) ** 2))
        return self._support

    def open_points(self) -> np.ndarray:
        """Physical ``(x, y)`` of every open sample, shape ``(n, 2)``."""
        idx, _ = self.support
        j, i = np.unravel_index(idx, self.grid.shape)
        return np.column_stack([self.grid.x[i], self.grid.y[j]])


def apply_mask(field: ComplexField, mask: ApertureMask) -> ComplexField:
    if field.grid != mask.grid:
        raise ValidationError("field and mask grids differ")
    return ComplexField._wrap(field.grid, field.samples * mask.transmission)


def _as_point(p) -> tuple[float, float]:
    if np.ndim(p) == 0:
        return float(p), 0.0
    x, y = p
    return float(x), float(y)


def _hole_block(grid: Grid2D, center, side: float) -> tuple[int, int, int, int]:
    cx, cy = _as_point(center)
    mx = int(math.floor(round(side / grid.dx, 9) + 0.5))
    my = int(math.floor(round(side / grid.dy, 9) + 0.5))
    if not side > 0 or mx < 1 or my < 1:
        raise ValidationError(f"hole side {side!r} must cover at least one pixel")
    i0 = int(math.floor(round((cx - (mx - 1) * grid.dx / 2) / grid.dx + grid.nx / 2, 9) + 0.5))
    j0 = int(math.floor(round((cy - (my - 1) * grid.dy / 2) / grid.dy + grid.ny / 2, 9) + 0.5))
    if i0 < 0 or j0 < 0 or i0 + mx > grid.nx or j0 + my > grid.ny:
        raise ValidationError(f"hole at ({cx:g}, {cy:g}) does not fit inside the grid")
    return i0, i0 + mx, j0, j0 + my


def make_hole_array_mask(grid: Grid2D, centers: Sequence, side: float) -> ApertureMask:
    """Opaque screen with square ``side x side`` holes at ``centers``.

    A center may be a scalar (a point on the ``y = 0`` line) or an ``(x, y)``
    pair. Hole edges snap to whole pixels (``round(side/dx)`` per axis);
    overlapping holes are rejected.
    """
    if len(centers) == 0:
        raise ValidationError("at least one hole is required")
    t = np.zeros(grid.shape, dtype=np.complex128)
    blocks = [_hole_block(grid, c, side) for c in centers]
    for n, (i0, i1, j0, j1) in enumerate(blocks):
        for (a0, a1, b0, b1) in blocks[:n]:
            if i0 < a1 and a0 < i1 and j0 < b1 and b0 < j1:
                raise ValidationError("holes overlap")
        t[j0:j1, i0:i1] = 1.0
    return ApertureMask(grid, t)


def make_two_hole_mask(grid: Grid2D, y1, y2, s: float, l_c: Optional[float] = None) -> ApertureMask:
    """Two small square holes; with ``l_c`` also enforce hole size and spacing.

    The holes must be smaller than the correlation length and further apart
    than it.
    """
    if l_c is not None:
        p1, p2 = _as_point(y1), _as_point(y2)
        if not s < l_c:
            raise ValidationError(f"hole side {s:g} m must be smaller than l_c = {l_c:g} m")
        if not math.dist(p1, p2) > l_c:
            raise ValidationError(f"hole separation must exceed l_c = {l_c:g} m")
    return make_hole_array_mask(grid, [y1, y2], s)


def gaussian_aperture(grid: Grid2D, radius: float) -> ApertureMask:
    """Soft aperture with amplitude ``exp(-r^2/radius^2)`` (1/e^2 intensity radius)."""
    if not radius > 0:
        raise ValidationError("aperture radius must be positive")
    return ApertureMask(grid, np.exp(-grid.r2 / radius**2))


def gaussian_beam(grid: Grid2D, waist: float, amplitude: float = 1.0) -> ComplexField:
    """Collimated Gaussian beam at its waist (1/e^2 intensity radius ``waist``)."""
    return ComplexField._wrap(grid, amplitude * np.exp(-grid.r2 / waist**2).astype(np.complex128))


@dataclass(frozen=True)
class LensSpec:
    focal_length: float
    aperture_diameter: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.focal_length) or self.focal_length == 0:
            raise ValidationError("focal_length must be finite and non-zero")
        if self.aperture_diameter is not None and not self.aperture_diameter > 0:
            raise ValidationError("aperture_diameter must be positive")

    def apply(self, field: ComplexField) -> ComplexField:
        return thin_lens(field, self)


@functools.lru_cache(maxsize=16)
def _lens_pupil(grid: Grid2D, lens: LensSpec) -> np.ndarray:
    r2 = grid.r2
    pupil = np.exp(-1j * grid.k * r2 / (2.0 * lens.focal_length))
    if lens.aperture_diameter is not None:
        pupil[r2 > (lens.aperture_diameter / 2) ** 2] = 0.0
    return _readonly(pupil)


def thin_lens(field: ComplexField, lens: LensSpec) -> ComplexField:
    """Quadratic phase ``exp(-i k r^2 / 2f)``, clipped by the lens aperture if set."""
    return ComplexField._wrap(field.grid, field.samples * _lens_pupil(field.grid, lens))


def required_image_distance(z1: float, focal_length: float) -> float:
    if z1 == focal_length:
        return math.inf
    return z1 * focal_length / (z1 - focal_length)


@dataclass(frozen=True)
class ImagingSpec:
    """Single-lens imaging arm: propagate ``z1``, thin lens, propagate ``z2``."""

    z1: float
    lens: LensSpec
    z2: float

    def __post_init__(self):
        if not (self.z1 > 0 and self.z2 > 0):
            raise ValidationError("z1 and z2 must both be positive")
        f = self.lens.focal_length
        mismatch = abs(1.0 / self.z1 + 1.0 / self.z2 - 1.0 / f) * abs(f)
        if mismatch > 1e-3:
            raise ValidationError(
                f"imaging condition 1/z1 + 1/z2 = 1/f violated; for z1={self.z1:g} m the "
                f"required z2 is {required_image_distance(self.z1, f):g} m")

    @property
    def magnification(self) -> float:
        return -self.z2 / self.z1

    def apply(self, field: ComplexField) -> ComplexField:
        return propagate(thin_lens(propagate(field, self.z1), self.lens), self.z2)


def image_system(field: ComplexField, z1: float, lens: LensSpec, z2: float) -> ComplexField:
    return ImagingSpec(z1, lens, z2).apply(field)


def apply_chain(field: ComplexField, chain: Iterable) -> ComplexField:
    for op in chain:
        field = op.apply(field)
    return field


def gsm_rayleigh_range(wavelength: float, beam_radius: float, l_c: float) -> float:
    """Distance over which a Gaussian Schell-model beam widens by sqrt(2).

    ``beam_radius`` is the 1/e^2 intensity radius of the source envelope and
    ``l_c`` the FWHM of its field correlation. Reduces to ``pi w^2 / lambda``
    for a coherent beam.
    """
    k = 2 * math.pi / wavelength
    sigma_s = beam_radius / 2
    sigma_g = l_c / FWHM_PER_SIGMA
    return k * sigma_s / math.sqrt(1 / (4 * sigma_s**2) + 1 / sigma_g**2)


def gsm_expansion(z: float, wavelength: float, beam_radius: float, l_c: float) -> float:
    """Width expansion factor of a Gaussian Schell-model beam after distance ``z``.

    Both the beam radius and the correlation length scale by this factor.
    """
    return math.sqrt(1 + (z / gsm_rayleigh_range(wavelength, beam_radius, l_c)) ** 2)
