"""Turn-key experiment drivers and their configuration."""
from __future__ import annotations

import time

from ..errors import ValidationError
from .config import SCENARIOS, SECTIONS, ScenarioConfig, default_config
from .drivers import (run_contrast_sweep, run_equal_plane, run_lens_ghost, run_near_to_far,
                      run_resolution_tradeoff, run_two_hole_ghost)
from .engine import Check, ScenarioResult, ScenarioVerdict, Table

REGISTRY = {
    "equal_plane": run_equal_plane,
    "two_hole": run_two_hole_ghost,
    "contrast_sweep": run_contrast_sweep,
    "lens_ghost": run_lens_ghost,
    "near_to_far": run_near_to_far,
    "resolution_tradeoff": run_resolution_tradeoff,
}
assert tuple(REGISTRY) == SCENARIOS


def run_scenario(cfg: ScenarioConfig, workers: int = 1) -> ScenarioResult:
    """Dispatch ``cfg`` to its driver and record the wall-clock time.

    ``workers`` only changes how fast the ensemble runs, never its result.
    """
    try:
        driver = REGISTRY[cfg.scenario]
    except KeyError:
        raise ValidationError(
            f"unknown scenario {cfg.scenario!r}; registered: {', '.join(REGISTRY)}") from None
    t0 = time.perf_counter()
    result = driver(cfg, workers)
    result.verdict.runtime = time.perf_counter() - t0
    return result


__all__ = [
    "REGISTRY", "SCENARIOS", "SECTIONS", "Check", "ScenarioConfig", "ScenarioResult",
    "ScenarioVerdict", "Table", "default_config", "run_scenario",
    "run_contrast_sweep", "run_equal_plane", "run_lens_ghost", "run_near_to_far",
    "run_resolution_tradeoff", "run_two_hole_ghost",
]
