"""Machinery shared by the scenario drivers.

Ensembles are cut into fixed-size shards of consecutive realization indices.
Each shard fills its own accumulators; shards are merged in index order, so
the finalized numbers do not depend on how many workers ran the shards.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ValidationError, WindowingError
from ..field import ComplexField, Grid2D, calibration_self_check, generate_speckle, SPECTRAL
from ..optics import gaussian_aperture, gsm_expansion, apply_mask
from ..stats import CorrelationAccumulator, merge
from .config import ScenarioConfig


@dataclass(frozen=True)
class Check:
    """One pass/fail comparison ``lower <= value <= upper``."""

    name: str
    value: float
    lower: float
    upper: float
    basis: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.lower <= self.value <= self.upper)


@dataclass
class ScenarioVerdict:
    scenario: str
    seed: int
    checks: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)
    runtime: float = 0.0
    mode: str = "standard"

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, value, lower, upper, basis=""):
        self.checks.append(Check(name, float(value), float(lower), float(upper), basis))

    def flag(self, name, ok: bool, basis=""):
        self.checks.append(Check(name, 1.0 if ok else 0.0, 1.0, 1.0, basis))


@dataclass
class Table:
    columns: tuple
    rows: list


@dataclass
class ScenarioResult:
    verdict: ScenarioVerdict
    tables: dict = field(default_factory=dict)   # name -> Table (CSV)
    images: dict = field(default_factory=dict)   # name -> 2-D array (P2 PGM)
    frames: dict = field(default_factory=dict)   # name -> 2-D array (P5 PGM)


class SourceModel:
    """Source field for realization ``k``: speckle, optionally under a Gaussian envelope."""

    def __init__(self, cfg: ScenarioConfig):
        self.grid = cfg.grid.build()
        self.spec = cfg.source.build()
        self.seed = cfg.ensemble.master_seed
        self.beam_radius = cfg.source.beam_radius
        self._envelope = None
        if self.beam_radius is not None:
            self._envelope = gaussian_aperture(self.grid, self.beam_radius)

    @property
    def stationary(self) -> bool:
        return self.beam_radius is None

    def __call__(self, k: int) -> ComplexField:
        f = generate_speckle(self.grid, self.spec, k, self.seed)
        if self._envelope is not None:
            f = apply_mask(f, self._envelope)
        return f

    def self_check(self) -> Optional[float]:
        """Startup check of the synthesized correlation length (spectral method)."""
        if self.spec.method != SPECTRAL:
            return None
        return calibration_self_check(self.grid, self.spec, self.seed)

    def radius_at(self, z: float) -> float:
        return self.beam_radius * gsm_expansion(z, self.grid.wavelength, self.beam_radius, self.spec.l_c)


def guard_check(cfg: ScenarioConfig, planes: dict) -> None:
    """Raise :class:`WindowingError` if a beam radius exceeds the guard region.

    ``planes`` maps a label to the predicted 1/e^2 radius at a sampled plane.
    Stationary sources fill the periodic grid by construction and are exempt.
    """
    if cfg.source.beam_radius is None:
        return
    grid = cfg.grid.build()
    limit = cfg.analysis.guard_fraction * min(grid.extent) / 2
    for label, radius in planes.items():
        if radius > limit * (1 + 1e-9):
            raise WindowingError(
                f"beam radius {radius:.4g} m at {label} exceeds the guard region "
                f"({cfg.analysis.guard_fraction:g} of the half-extent, {limit:.4g} m); "
                "enlarge the grid or shorten the propagation")


def run_ensemble(cfg: ScenarioConfig, n_channels: int, n_positions: int,
                 process: Callable[[int], Sequence[tuple]], workers: int = 1,
                 n_realizations: Optional[int] = None) -> list:
    """Accumulate ``process(k)`` over the ensemble, one accumulator per channel.

    ``process`` returns ``n_channels`` pairs ``(bucket, point_readings)``.
    ``workers`` threads run shards concurrently; the result does not depend
    on it.
    """
    n = cfg.ensemble.n_realizations if n_realizations is None else n_realizations
    shard = cfg.ensemble.shard_size
    bounds = [(s, min(s + shard, n)) for s in range(0, n, shard)]

    def work(b):
        accs = [CorrelationAccumulator(n_positions) for _ in range(n_channels)]
        for k in range(*b):
            for acc, (bucket, points) in zip(accs, process(k)):
                acc.add(bucket, points)
        return accs

    if workers < 1:
        raise ValidationError("workers must be >= 1")
    if workers <= 1 or len(bounds) <= 1:
        parts = map(work, bounds)
        return _merge_all(parts, n_channels, n_positions)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return _merge_all(pool.map(work, bounds), n_channels, n_positions)


def _merge_all(parts, n_channels, n_positions):
    total = [CorrelationAccumulator(n_positions) for _ in range(n_channels)]
    for accs in parts:
        total = [merge(t, a) for t, a in zip(total, accs)]
    return total


def scan_axis(cfg: ScenarioConfig) -> np.ndarray:
    """Scan positions along x (y = 0), snapped to whole steps."""
    d = cfg.detector
    count = int(math.floor(round((d.scan_stop - d.scan_start) / d.scan_step, 9))) + 1
    return d.scan_start + d.scan_step * np.arange(count)


def periodic_distance(grid: Grid2D, points: np.ndarray, targets: np.ndarray,
                      periodic: bool = True) -> np.ndarray:
    """Distance from each of ``points`` to the nearest of ``targets``.

    With ``periodic`` the minimum-image convention of the grid is used.
    """
    p = np.asarray(points, dtype=float)[:, None, :]
    t = np.asarray(targets, dtype=float)[None, :, :]
    d = p - t
    if periodic:
        ext = np.array(grid.extent)
        d = d - ext * np.round(d / ext)
    return np.sqrt(np.sum(d * d, axis=-1)).min(axis=1)


@dataclass(frozen=True)
class Peak:
    position: float     # weighted centroid
    argmax: float
    height: float


def find_peaks(x: np.ndarray, profile: np.ndarray, level: float = 0.5) -> list:
    """Contiguous runs of ``profile`` above ``level * max``, one peak per run.

    The position is the centroid of the excess over the threshold, which is
    insensitive to where the run happens to be cut by the sampling.
    """
    p = np.nan_to_num(np.asarray(profile, dtype=float), nan=-np.inf)
    top = float(np.max(p))
    if not top > 0:
        return []
    thr = level * top
    above = p > thr
    peaks = []
    i = 0
    while i < p.size:
        if not above[i]:
            i += 1
            continue
        j = i
        while j < p.size and above[j]:
            j += 1
        w = p[i:j] - thr
        seg = x[i:j]
        k = i + int(np.argmax(p[i:j]))
        peaks.append(Peak(float(np.dot(w, seg) / w.sum()), float(x[k]), float(p[k])))
        i = j
    return peaks


def dip_fraction(x: np.ndarray, profile: np.ndarray, a: float, b: float) -> float:
    """Relative dip between the profile values nearest ``a`` and ``b``.

    ``1 - valley / min(peak values)``; zero or negative means no dip.
    """
    ia, ib = sorted((int(np.argmin(np.abs(x - a))), int(np.argmin(np.abs(x - b)))))
    peak = min(profile[ia], profile[ib])
    if ib - ia < 2 or not peak > 0:
        return 0.0
    valley = float(np.min(profile[ia + 1:ib]))
    return float(1.0 - valley / peak)
