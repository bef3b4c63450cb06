"""Bucket and scanning point detectors, and one-realization measurement."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .field import ComplexField, Grid2D, _readonly, intensity
from .optics import ApertureMask, apply_chain, apply_mask, beam_splitter
from .pgm import write_pgm_p5

__all__ = [
    "PointDetectorSpec", "DetectorLayout", "RealizationRecord",
    "bucket_read", "bucket_power", "point_read", "point_read_all", "window_powers",
    "arm_fields", "measure_realization", "snap_odd", "dump_frame",
]


def snap_odd(pixels: float) -> int:
    """Nearest odd pixel count (ties round up), at least one."""
    v = round(pixels, 9)
    return max(1, 2 * int(math.floor((v - 1) / 2 + 0.5)) + 1)


def _point(p) -> tuple[float, float]:
    if np.ndim(p) == 0:
        return (float(p), 0.0)
    x, y = p
    return (float(x), float(y))


@dataclass(frozen=True)
class PointDetectorSpec:
    """Square detector of side ``side`` scanned over ``scan_positions``.

    Positions are ``(x, y)`` pairs in meters; a bare number means a point on
    the ``y = 0`` line.
    """

    side: float
    scan_positions: tuple

    def __post_init__(self):
        if not (math.isfinite(self.side) and self.side > 0):
            raise ValidationError(f"detector side must be positive, got {self.side!r}")
        pts = tuple(_point(p) for p in self.scan_positions)
        if not pts:
            raise ValidationError("at least one scan position is required")
        object.__setattr__(self, "scan_positions", pts)

    @property
    def n_positions(self) -> int:
        return len(self.scan_positions)

    def layout(self, grid: Grid2D) -> "DetectorLayout":
        return _layout(grid, self)


class DetectorLayout:
    """Pixel windows of a :class:`PointDetectorSpec` on a particular grid.

    Window centers snap to the nearest sample and the side snaps to the nearest
    odd pixel count, so every window is centered exactly on a sample.
    """

    def __init__(self, grid: Grid2D, spec: PointDetectorSpec):
        if spec.side < min(grid.dx, grid.dy) * (1 - 1e-9):
            raise ValidationError(f"detector side {spec.side:g} m is smaller than one pixel")
        self.grid = grid
        self.spec = spec
        self.wx = snap_odd(spec.side / grid.dx)
        self.wy = snap_odd(spec.side / grid.dy)
        hx, hy = self.wx // 2, self.wy // 2
        centers = np.array([grid.index_of(x, y) for x, y in spec.scan_positions], dtype=np.int64)
        ci, cj = centers[:, 0], centers[:, 1]
        if np.any(ci - hx < 0) or np.any(ci + hx >= grid.nx) or np.any(cj - hy < 0) or np.any(cj + hy >= grid.ny):
            raise ValidationError("a detector window extends outside the grid")
        self.i0 = _readonly(ci - hx)
        self.j0 = _readonly(cj - hy)
        rows = (cj - hy)[:, None, None] + np.arange(self.wy)[None, :, None]
        cols = (ci - hx)[:, None, None] + np.arange(self.wx)[None, None, :]
        self.flat_index = _readonly((rows * grid.nx + cols).reshape(len(ci), -1))

    @property
    def area(self) -> float:
        """Snapped detector area ``a`` in square meters."""
        return self.wx * self.wy * self.grid.pixel_area

    @property
    def centers(self) -> np.ndarray:
        """Snapped window centers as physical ``(x, y)``, shape ``(P, 2)``."""
        g = self.grid
        return np.column_stack([g.x[self.i0 + self.wx // 2], g.y[self.j0 + self.wy // 2]])


@functools.lru_cache(maxsize=64)
def _layout(grid: Grid2D, spec: PointDetectorSpec) -> DetectorLayout:
    return DetectorLayout(grid, spec)


@dataclass(frozen=True)
class RealizationRecord:
    realization_index: int
    bucket: float
    point_readings: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.point_readings, dtype=float)
        if not (math.isfinite(self.bucket) and self.bucket >= 0):
            raise ValidationError(f"bucket reading must be finite and >= 0, got {self.bucket!r}")
        if pts.ndim != 1 or not np.all(np.isfinite(pts)) or np.any(pts < 0):
            raise ValidationError("point readings must be a 1-D array of finite values >= 0")
        object.__setattr__(self, "point_readings", _readonly(pts))


def bucket_read(field: ComplexField) -> float:
    """Power collected by an ideal bucket covering the whole grid."""
    return float(np.sum(intensity(field))) * field.grid.pixel_area


def _intensity_at(source, flat_idx: np.ndarray) -> np.ndarray:
    # ``source`` is an intensity map or a ComplexField; only the listed samples are touched.
    if isinstance(source, ComplexField):
        e = source.samples.ravel()[flat_idx]
        return e.real * e.real + e.imag * e.imag
    return np.asarray(source).ravel()[flat_idx]


def bucket_power(source, mask: ApertureMask) -> float:
    """Bucket reading behind ``mask`` from the unmasked field or its intensity map.

    Equal to ``bucket_read(apply_mask(field, mask))`` but only touches the
    open samples, which matters for small objects.
    """
    idx, t2 = mask.support
    return float(np.dot(_intensity_at(source, idx), t2)) * mask.grid.pixel_area


def point_read(field: ComplexField, spec: PointDetectorSpec, position_index: int) -> float:
    lay = spec.layout(field.grid)
    if not 0 <= position_index < spec.n_positions:
        raise ValidationError(f"position index {position_index} out of range")
    i0, j0 = lay.i0[position_index], lay.j0[position_index]
    window = intensity(field)[j0:j0 + lay.wy, i0:i0 + lay.wx]
    return float(np.sum(window)) * field.grid.pixel_area


def window_powers(source, layout: DetectorLayout) -> np.ndarray:
    """Readings at every scan position from a field or its intensity map."""
    if layout.flat_index.shape[1] == 1:
        return _intensity_at(source, layout.flat_index[:, 0]) * layout.grid.pixel_area
    if layout.flat_index.shape[1] <= 64:
        return _intensity_at(source, layout.flat_index).sum(axis=1) * layout.grid.pixel_area
    intensity_map = intensity(source) if isinstance(source, ComplexField) else np.asarray(source)
    # Large windows: four lookups in a summed-area table.
    sat = np.zeros((intensity_map.shape[0] + 1, intensity_map.shape[1] + 1))
    np.cumsum(np.cumsum(intensity_map, axis=0), axis=1, out=sat[1:, 1:])
    i0, j0 = layout.i0, layout.j0
    i1, j1 = i0 + layout.wx, j0 + layout.wy
    total = sat[j1, i1] - sat[j0, i1] - sat[j1, i0] + sat[j0, i0]
    return total * layout.grid.pixel_area


def point_read_all(field: ComplexField, spec: PointDetectorSpec) -> np.ndarray:
    return window_powers(intensity(field), spec.layout(field.grid))


def arm_fields(source: ComplexField, object_arm: Sequence, reference_arm: Sequence,
               halve_power: bool = False) -> tuple[ComplexField, ComplexField]:
    """Split the source and run each copy through its arm.

    When the two arms are the same chain the reference copy would be computed
    by the same deterministic operations on the same input, so the object-arm
    result is reused.
    """
    beam1, beam2 = beam_splitter(source, halve_power)
    object_arm, reference_arm = tuple(object_arm), tuple(reference_arm)
    obj = apply_chain(beam1, object_arm)
    ref = obj if object_arm == reference_arm else apply_chain(beam2, reference_arm)
    return obj, ref


def measure_realization(source: ComplexField, object_arm: Sequence, reference_arm: Sequence,
                        mask: ApertureMask, detector: PointDetectorSpec,
                        realization_index: int = 0, halve_power: bool = False) -> RealizationRecord:
    """Bucket reading behind the object and point readings across the scan.

    All scan positions are read from the same reference field, i.e. the scan
    behaves like an array of simultaneous detectors.
    """
    obj, ref = arm_fields(source, object_arm, reference_arm, halve_power)
    bucket = bucket_read(apply_mask(obj, mask))
    return RealizationRecord(realization_index, bucket, point_read_all(ref, detector))


def dump_frame(path, intensity_map: np.ndarray) -> None:
    """Write one intensity frame as 16-bit binary PGM (scaled to its maximum)."""
    write_pgm_p5(path, intensity_map, maxval=65535)
