"""Scenario configuration: nested section dataclasses plus per-scenario defaults.

Every field carries a ``kind`` in its metadata; the config-file reader and
writer use it to parse and print values (lengths in meters, times in seconds).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from ..errors import ValidationError
from ..field import EnsembleSpec, Grid2D, SpeckleSpec, SPECTRAL

SCENARIOS = ("equal_plane", "two_hole", "contrast_sweep", "lens_ghost", "near_to_far", "resolution_tradeoff")

OBJECT_KINDS = ("point", "two_hole", "hole_array")


def _f(default, kind, **kw):
    if isinstance(default, (list, tuple)):
        return field(default_factory=lambda: tuple(default), metadata={"kind": kind, **kw})
    return field(default=default, metadata={"kind": kind, **kw})


@dataclass(frozen=True)
class GridConfig:
    nx: int = _f(256, "int")
    ny: int = _f(256, "int")
    dx: float = _f(10e-6, "length")
    dy: Optional[float] = _f(None, "length?")
    wavelength: float = _f(532e-9, "length")

    def build(self) -> Grid2D:
        return Grid2D(self.nx, self.ny, self.dx, self.dx if self.dy is None else self.dy, self.wavelength)


@dataclass(frozen=True)
class SourceConfig:
    l_c: float = _f(80e-6, "length")
    mean_intensity: float = _f(1.0, "float")
    tau_c: float = _f(1e-6, "time")
    method: str = _f(SPECTRAL, "str")
    diffuser_correlation: Optional[float] = _f(None, "length?")
    diffuser_distance: Optional[float] = _f(None, "length?")
    # 1/e^2 intensity radius of a Gaussian envelope; none gives a stationary
    # source that fills the (periodic) grid.
    beam_radius: Optional[float] = _f(None, "length?")

    def build(self) -> SpeckleSpec:
        return SpeckleSpec(self.l_c, self.mean_intensity, self.tau_c, self.method,
                           self.diffuser_correlation, self.diffuser_distance)


@dataclass(frozen=True)
class EnsembleConfig:
    n_realizations: int = _f(20000, "int")
    master_seed: int = _f(0, "int")
    # Realizations per shard; shards are the unit of parallel work and are
    # merged in index order.
    shard_size: int = _f(250, "int")

    def build(self) -> EnsembleSpec:
        return EnsembleSpec(self.n_realizations, self.master_seed)


@dataclass(frozen=True)
class ArmsConfig:
    z_object: float = _f(0.1, "length")
    z_reference: float = _f(0.1, "length")
    focal_length: Optional[float] = _f(None, "length?")
    # Explicit imaging distances for the reference arm; when unset the lens
    # scenario derives them from the requested magnifications.
    lens_z1: Optional[float] = _f(None, "length?")
    lens_z2: Optional[float] = _f(None, "length?")
    halve_power: bool = _f(False, "bool")


@dataclass(frozen=True)
class ObjectConfig:
    # point: no object, the test arm holds a point detector at the origin.
    kind: str = _f("point", "str")
    y1: float = _f(-0.5e-3, "length")
    y2: float = _f(0.5e-3, "length")
    hole_side: float = _f(10e-6, "length")
    # Hole-array pitch in units of l_c.
    pitch: float = _f(4.0, "float")


@dataclass(frozen=True)
class DetectorConfig:
    side: float = _f(10e-6, "length")
    scan_start: float = _f(-1e-3, "length")
    scan_stop: float = _f(1e-3, "length")
    scan_step: float = _f(10e-6, "length")


@dataclass(frozen=True)
class AnalysisConfig:
    guard_fraction: float = _f(0.5, "float")
    # Background positions lie further than this many l_c from every open point.
    background_exclusion: float = _f(3.0, "float")
    # Separation (in l_c) treated as uncorrelated in the equal-plane scan.
    uncorrelated_separation: float = _f(10.0, "float")
    peak_range: tuple = _f((1.95, 2.05), "floats")
    background_range: tuple = _f((0.97, 1.03), "floats")
    contrast_tolerance: float = _f(0.1, "float")
    relative_tolerance: float = _f(0.05, "float")
    n_sigma: float = _f(3.0, "float")
    ratios: tuple = _f((1, 2, 4, 8, 16), "ints")
    detector_sides: tuple = _f((1.0, 2.0, 4.0, 8.0), "floats")
    z_factors: tuple = _f((0.1, 0.5, 1.0, 2.0, 5.0), "floats")
    magnifications: tuple = _f((-1.0, -2.0), "floats")
    dip_fraction: float = _f(0.2, "float")
    copy_check_realizations: int = _f(4, "int")
    metric_frames: int = _f(256, "int")
    cell_model_samples: int = _f(200000, "int")


@dataclass(frozen=True)
class OutputConfig:
    # Number of reference-plane intensity frames written as 16-bit PGM.
    dump_frames: int = _f(0, "int")


SECTIONS = {
    "grid": GridConfig, "source": SourceConfig, "ensemble": EnsembleConfig,
    "arms": ArmsConfig, "object": ObjectConfig, "detector": DetectorConfig,
    "analysis": AnalysisConfig, "output": OutputConfig,
}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    grid: GridConfig = field(default_factory=GridConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    arms: ArmsConfig = field(default_factory=ArmsConfig)
    object: ObjectConfig = field(default_factory=ObjectConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def replace(self, section: Optional[str] = None, **changes) -> "ScenarioConfig":
        """Copy with top-level fields, or fields of one ``section``, replaced."""
        if section is None:
            return dataclasses.replace(self, **changes)
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})

    def validate(self) -> "ScenarioConfig":
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}; registered: {', '.join(SCENARIOS)}")
        self.grid.build()
        self.source.build()
        self.ensemble.build()
        if self.ensemble.shard_size < 1:
            raise ValidationError("shard_size must be >= 1")
        if self.object.kind not in OBJECT_KINDS:
            raise ValidationError(f"object kind must be one of {', '.join(OBJECT_KINDS)}")
        if self.source.beam_radius is not None and not self.source.beam_radius > 0:
            raise ValidationError("beam_radius must be positive")
        a = self.analysis
        if not 0 < a.guard_fraction <= 1:
            raise ValidationError("guard_fraction must be in (0, 1]")
        for name in ("peak_range", "background_range"):
            lo_hi = getattr(a, name)
            if len(lo_hi) != 2 or not lo_hi[0] < lo_hi[1]:
                raise ValidationError(f"{name} must be two increasing numbers")
        if self.detector.scan_step <= 0 or self.detector.scan_stop < self.detector.scan_start:
            raise ValidationError("scan range must be increasing with a positive step")
        if (self.arms.lens_z1 is None) != (self.arms.lens_z2 is None):
            raise ValidationError("lens_z1 and lens_z2 must be given together")
        if self.output.dump_frames < 0:
            raise ValidationError("dump_frames must be >= 0")
        return self


def default_config(scenario: str) -> ScenarioConfig:
    """Documented defaults for ``scenario`` (lengths in meters)."""
    if scenario not in SCENARIOS:
        raise ValidationError(f"unknown scenario {scenario!r}; registered: {', '.join(SCENARIOS)}")
    cfg = ScenarioConfig(scenario)
    if scenario == "two_hole":
        cfg = cfg.replace("object", kind="two_hole")
    elif scenario == "contrast_sweep":
        cfg = cfg.replace("object", kind="hole_array")
    elif scenario == "lens_ghost":
        cfg = cfg.replace("source", l_c=160e-6, beam_radius=0.3e-3)
        cfg = cfg.replace("arms", z_object=0.0, z_reference=0.2, focal_length=0.1)
        cfg = cfg.replace("object", kind="two_hole", y1=-0.2e-3, y2=0.2e-3)
        cfg = cfg.replace("detector", scan_start=-0.8e-3, scan_stop=0.8e-3)
        cfg = cfg.replace("ensemble", n_realizations=6000)
        cfg = cfg.replace("analysis", relative_tolerance=0.02)
    elif scenario == "near_to_far":
        cfg = cfg.replace("source", l_c=40e-6, beam_radius=125e-6)
        cfg = cfg.replace("detector", scan_start=-0.4e-3, scan_stop=0.4e-3)
        cfg = cfg.replace("ensemble", n_realizations=6000)
        cfg = cfg.replace("analysis", peak_range=(1.9, 2.1))
    elif scenario == "resolution_tradeoff":
        cfg = cfg.replace("object", kind="two_hole", y1=-100e-6, y2=100e-6)
        cfg = cfg.replace("detector", scan_start=-0.9e-3, scan_stop=0.9e-3)
        cfg = cfg.replace("ensemble", n_realizations=10000)
    return cfg
