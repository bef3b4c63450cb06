"""Sampled complex fields and pseudo-thermal speckle synthesis.

Grid convention: sample ``(i, j)`` sits at ``((i - nx/2)*dx, (j - ny/2)*dy)``.
Arrays are stored with shape ``(ny, nx)`` so that ``x`` runs along the last
(contiguous) axis; flattening gives the row-major sample order.

Random streams
--------------
Realization ``k`` of an ensemble draws from a Philox4x64 counter generator
keyed with ``master_seed`` whose 256-bit counter starts at ``k << 192``.
Every realization therefore owns a disjoint block of 2**192 counter values and
can be produced on any thread, in any order, with bit-identical output.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Optional

import numpy as np
import scipy.fft as sfft

from .errors import CoarseGridWarning, SamplingError, ValidationError

__all__ = [
    "Grid2D", "ComplexField", "SpeckleSpec", "EnsembleSpec", "HistogramReport",
    "make_grid", "intensity", "generate_speckle", "realization_rng",
    "speckle_spectrum", "intensity_histogram_test", "exponential_ks_threshold",
    "field_correlation_fwhm", "calibration_self_check", "half_max_width",
    "SPECTRAL", "DIFFUSER",
]

SPECTRAL = "spectral-synthesis"
DIFFUSER = "phase-screen-diffuser"
_METHOD_ALIASES = {
    SPECTRAL: SPECTRAL, "spectral": SPECTRAL,
    DIFFUSER: DIFFUSER, "diffuser": DIFFUSER,
}

# FWHM of a Gaussian in units of its standard deviation.
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

# Spectral components with power below exp(-14) of the peak are not drawn;
# they carry under 1e-6 of the total power.
_SUPPORT_EXPONENT = 14.0


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    dx: float
    dy: float
    wavelength: float

    def __post_init__(self):
        for name in ("nx", "ny"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("dx", "dy", "wavelength"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, float(value))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def extent(self) -> tuple[float, float]:
        """Physical span ``(nx*dx, ny*dy)`` in meters."""
        return (self.nx * self.dx, self.ny * self.dy)

    @property
    def pixel_area(self) -> float:
        return self.dx * self.dy

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @functools.cached_property
    def x(self) -> np.ndarray:
        return _readonly((np.arange(self.nx) - self.nx / 2) * self.dx)

    @functools.cached_property
    def y(self) -> np.ndarray:
        return _readonly((np.arange(self.ny) - self.ny / 2) * self.dy)

    @functools.cached_property
    def r2(self) -> np.ndarray:
        """Squared transverse radius at every sample, shape ``(ny, nx)``."""
        return _readonly(self.y[:, None] ** 2 + self.x[None, :] ** 2)

    @functools.cached_property
    def kx(self) -> np.ndarray:
        return _readonly(2.0 * math.pi * sfft.fftfreq(self.nx, self.dx))

    @functools.cached_property
    def ky(self) -> np.ndarray:
        return _readonly(2.0 * math.pi * sfft.fftfreq(self.ny, self.dy))

    @functools.cached_property
    def kt2(self) -> np.ndarray:
        """Squared transverse angular wavenumber in FFT order, shape ``(ny, nx)``."""
        return _readonly(self.ky[:, None] ** 2 + self.kx[None, :] ** 2)

    def index_of(self, x: float, y: float = 0.0) -> tuple[int, int]:
        """Nearest sample ``(i, j)`` to the physical point ``(x, y)``."""
        i = int(math.floor(round(x / self.dx + self.nx / 2, 9) + 0.5))
        j = int(math.floor(round(y / self.dy + self.ny / 2, 9) + 0.5))
        return i, j


def make_grid(nx: int, ny: int, dx: float, dy: float, wavelength: float) -> Grid2D:
    """Validated sampling grid; see :class:`Grid2D` for the coordinate convention."""
    return Grid2D(nx, ny, dx, dy, wavelength)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class ComplexField:
    """Immutable complex amplitude sampled on a :class:`Grid2D`.

    A field may be created from real-space samples or from its (unnormalized,
    ``scipy.fft.fft2`` convention) spectrum; the other representation is
    computed on first access and cached. Chained spectral operations such as
    consecutive propagations therefore never pay for a round trip.
    """

    __slots__ = ("grid", "_samples", "_spectrum")

    def __init__(self, grid: Grid2D, samples):
        arr = np.array(samples, dtype=np.complex128)
        if arr.ndim == 1 and arr.size == grid.size:
            arr = arr.reshape(grid.shape)
        if arr.shape != grid.shape:
            raise ValidationError(f"samples shape {arr.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("field samples must all be finite")
        self.grid = grid
        self._samples = _readonly(arr)
        self._spectrum = None

    @classmethod
    def from_spectrum(cls, grid: Grid2D, spectrum: np.ndarray) -> "ComplexField":
        if spectrum.shape != grid.shape:
            raise ValidationError(f"spectrum shape {spectrum.shape} does not match grid {grid.shape}")
        obj = cls.__new__(cls)
        obj.grid = grid
        obj._samples = None
        obj._spectrum = _readonly(np.asarray(spectrum, dtype=np.complex128))
        return obj

    @classmethod
    def _wrap(cls, grid: Grid2D, samples: np.ndarray) -> "ComplexField":
        # Internal constructor for arrays produced by trusted operations.
        obj = cls.__new__(cls)
        obj.grid = grid
        obj._samples = _readonly(samples)
        obj._spectrum = None
        return obj

    @property
    def samples(self) -> np.ndarray:
        if self._samples is None:
            self._samples = _readonly(sfft.ifft2(self._spectrum))
        return self._samples

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = _readonly(sfft.fft2(self._samples))
        return self._spectrum

    @property
    def has_samples(self) -> bool:
        return self._samples is not None

    def power(self) -> float:
        """Total power ``sum |E|^2 dx dy``."""
        return float(np.sum(intensity(self))) * self.grid.pixel_area

    def scaled(self, factor: complex) -> "ComplexField":
        if self._samples is None:
            return ComplexField.from_spectrum(self.grid, self._spectrum * factor)
        return ComplexField._wrap(self.grid, self._samples * factor)

    def __repr__(self):
        g = self.grid
        return f"ComplexField({g.nx}x{g.ny}, dx={g.dx:g}, dy={g.dy:g}, wavelength={g.wavelength:g})"


def intensity(field: ComplexField) -> np.ndarray:
    """Intensity map ``|E|^2`` with the grid's ``(ny, nx)`` shape."""
    e = field.samples
    v = e.view(np.float64)
    v = v * v
    return v[:, 0::2] + v[:, 1::2]


@dataclass(frozen=True)
class SpeckleSpec:
    """Statistics of the chaotic source.

    ``l_c`` is the FWHM of the modulus of the normalized field autocorrelation.
    ``tau_c`` is metadata only: realizations are treated as snapshots separated
    by many coherence times. For the diffuser method the phase-screen
    correlation FWHM and the propagation distance after the screen are
    required; the screen's phase rms is then chosen so the developed speckle
    has correlation length ``l_c``.
    """

    l_c: float
    mean_intensity: float = 1.0
    tau_c: float = 1e-6
    method: str = SPECTRAL
    diffuser_correlation: Optional[float] = None
    diffuser_distance: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.l_c) and self.l_c > 0):
            raise ValidationError(f"l_c must be positive, got {self.l_c!r}")
        if not (math.isfinite(self.mean_intensity) and self.mean_intensity > 0):
            raise ValidationError(f"mean_intensity must be positive, got {self.mean_intensity!r}")
        if not (math.isfinite(self.tau_c) and self.tau_c > 0):
            raise ValidationError(f"tau_c must be positive, got {self.tau_c!r}")
        method = _METHOD_ALIASES.get(self.method)
        if method is None:
            raise ValidationError(
                f"unknown speckle method {self.method!r}; expected one of {SPECTRAL}, {DIFFUSER}")
        object.__setattr__(self, "method", method)
        if method == DIFFUSER:
            for name in ("diffuser_correlation", "diffuser_distance"):
                value = getattr(self, name)
                if value is None or not value > 0:
                    raise ValidationError(f"{name} must be positive for the diffuser method")

    @property
    def phase_rms(self) -> float:
        """Diffuser phase standard deviation (radians) that yields ``l_c``."""
        if self.method != DIFFUSER:
            return 0.0
        return self.diffuser_correlation / self.l_c


@dataclass(frozen=True)
class EnsembleSpec:
    n_realizations: int
    master_seed: int = 0

    def __post_init__(self):
        if int(self.n_realizations) != self.n_realizations or self.n_realizations < 1:
            raise ValidationError(f"n_realizations must be >= 1, got {self.n_realizations!r}")
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ValidationError(f"master_seed must be a non-negative integer, got {self.master_seed!r}")


def realization_rng(master_seed: int, realization_index: int) -> np.random.Generator:
    """Independent generator for one realization (see module docstring)."""
    if realization_index < 0 or realization_index >= 2**64:
        raise ValidationError(f"realization_index out of range: {realization_index}")
    key = int(master_seed) % 2**128
    return np.random.Generator(np.random.Philox(key=key, counter=int(realization_index) << 192))


def check_sampling(grid: Grid2D, spec: SpeckleSpec) -> None:
    pitch = max(grid.dx, grid.dy)
    if spec.l_c < 2 * pitch:
        raise SamplingError(
            f"l_c={spec.l_c:g} m is under-sampled: needs at least 2 pixels (pitch {pitch:g} m)")
    if spec.method == DIFFUSER and spec.diffuser_correlation < 2 * pitch:
        raise SamplingError("diffuser correlation length must span at least 2 pixels")


@functools.lru_cache(maxsize=None)
def _warn_coarse(grid: Grid2D) -> None:
    if max(grid.dx, grid.dy) > grid.wavelength / 2:
        warnings.warn(
            f"pitch {max(grid.dx, grid.dy):g} m exceeds wavelength/2; "
            "only paraxial components are represented", CoarseGridWarning, stacklevel=3)


@functools.lru_cache(maxsize=32)
def _spectral_filter(grid: Grid2D, l_c: float):
    """Flat indices and amplitudes of the Gaussian spectral envelope.

    The amplitude filter ``exp(-k^2 / (4 s^2))`` with ``s = FWHM_PER_SIGMA / l_c``
    gives a power spectrum ``exp(-k^2 / (2 s^2))`` whose transform, the field
    autocorrelation, is ``exp(-s^2 r^2 / 2)``; its FWHM is exactly ``l_c``.
    Amplitudes are scaled so that the ensemble mean intensity is one.
    """
    s = FWHM_PER_SIGMA / l_c
    kt2 = grid.kt2.ravel()
    support = np.flatnonzero(kt2 <= 2.0 * _SUPPORT_EXPONENT * s * s)
    amp = np.exp(-kt2[support] / (4.0 * s * s))
    # Unit-variance real and imaginary parts give E|noise|^2 = 2, hence the sqrt(2).
    amp *= grid.size / math.sqrt(2.0 * float(np.sum(amp * amp)))
    return _readonly(support), _readonly(amp)


def speckle_spectrum(grid: Grid2D, l_c: float, rng: np.random.Generator,
                     mean_intensity: float = 1.0) -> np.ndarray:
    """Spectrum of one stationary circular-Gaussian speckle field.

    White circular noise is drawn directly in the frequency domain, which is
    statistically identical to transforming white noise drawn on the grid.
    """
    support, amp = _spectral_filter(grid, float(l_c))
    noise = rng.standard_normal(2 * support.size).view(np.complex128)
    noise *= amp
    if mean_intensity != 1.0:
        noise *= math.sqrt(mean_intensity)
    spec = np.zeros(grid.size, dtype=np.complex128)
    spec[support] = noise
    return spec.reshape(grid.shape)


def generate_speckle(grid: Grid2D, spec: SpeckleSpec, realization_index: int,
                     master_seed: int) -> ComplexField:
    """One realization of the pseudo-thermal source field.

    The result is a pure function of its arguments. Spectral synthesis returns
    a stationary, periodic circular-Gaussian field whose ensemble mean
    intensity is ``spec.mean_intensity`` and whose field-correlation FWHM is
    ``spec.l_c``. The diffuser method illuminates a random phase screen with a
    uniform plane wave and propagates it ``spec.diffuser_distance``.
    """
    check_sampling(grid, spec)
    _warn_coarse(grid)
    rng = realization_rng(master_seed, realization_index)
    if spec.method == SPECTRAL:
        return ComplexField.from_spectrum(grid, speckle_spectrum(grid, spec.l_c, rng, spec.mean_intensity))

    from .optics import PropagationSpec, propagate

    screen = ComplexField.from_spectrum(grid, speckle_spectrum(grid, spec.diffuser_correlation, rng))
    # Real part of a unit-intensity circular field has variance 1/2.
    phase = (spec.phase_rms * math.sqrt(2.0)) * screen.samples.real
    lit = ComplexField._wrap(grid, math.sqrt(spec.mean_intensity) * np.exp(1j * phase))
    return propagate(lit, PropagationSpec(spec.diffuser_distance))


def half_max_width(profile: np.ndarray, spacing: float, level: float = 0.5) -> float:
    """Full width at ``level`` of a one-sided profile whose peak is ``profile[0]``.

    Crossings are interpolated with ``log(profile)`` linear in the squared
    offset, which is exact for Gaussian profiles. Returns ``nan`` when the
    profile never drops to the level.
    """
    p = np.asarray(profile, dtype=float)
    if p.size < 2 or not p[0] > 0:
        return float("nan")
    target = level * p[0]
    below = np.flatnonzero(p <= target)
    if below.size == 0:
        return float("nan")
    i = int(below[0])
    lo, hi = p[i - 1], p[i]
    if hi > 0 and hi < lo:
        t = (math.log(target) - math.log(lo)) / (math.log(hi) - math.log(lo))
        d0, d1 = (i - 1) ** 2, i**2
        return 2.0 * math.sqrt(d0 + t * (d1 - d0)) * spacing
    t = (lo - target) / (lo - hi)
    return 2.0 * (i - 1 + t) * spacing


def field_correlation_fwhm(fields: Iterable[ComplexField]) -> tuple[float, float]:
    """FWHM along x and y of the ensemble-averaged ``|<E(r) E*(r + d)>|``.

    Uses the periodic autocorrelation, so it applies to stationary fields that
    fill the grid.
    """
    acc = None
    grid = None
    for f in fields:
        grid = f.grid
        s = f.spectrum
        p = s.real * s.real + s.imag * s.imag
        acc = p if acc is None else acc + p
    if acc is None:
        raise ValidationError("no fields supplied")
    gamma = np.abs(sfft.ifft2(acc))
    half_x = gamma[0, : grid.nx // 2 + 1]
    half_y = gamma[: grid.ny // 2 + 1, 0]
    return half_max_width(half_x, grid.dx), half_max_width(half_y, grid.dy)


def calibration_self_check(grid: Grid2D, spec: SpeckleSpec, master_seed: int = 0,
                           n: int = 16, tolerance: float = 0.10) -> float:
    """Measure the synthesized correlation length against ``spec.l_c``.

    Returns the measured FWHM; raises :class:`SamplingError` when it deviates
    from the request by more than ``tolerance`` (relative). Only meaningful for
    grids that span many correlation lengths along x.
    """
    fields = (generate_speckle(grid, spec, i, master_seed) for i in range(n))
    fx, fy = field_correlation_fwhm(fields)
    measured = fx if grid.ny < 8 else 0.5 * (fx + fy)
    if not abs(measured - spec.l_c) <= tolerance * spec.l_c:
        raise SamplingError(
            f"speckle calibration failed: measured correlation FWHM {measured:g} m "
            f"vs requested {spec.l_c:g} m")
    return measured


@dataclass(frozen=True)
class HistogramReport:
    n_samples: int
    mean: float
    second_moment: float
    normalized_second_moment: float
    ks_distance: float
    threshold: float
    bin_edges: np.ndarray = dc_field(repr=False)
    density: np.ndarray = dc_field(repr=False)

    @property
    def passed(self) -> bool:
        return self.ks_distance < self.threshold


def _ks_exponential(samples: np.ndarray) -> float:
    x = np.sort(samples)
    n = x.size
    cdf = -np.expm1(-x / x.mean())
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


@functools.lru_cache(maxsize=16)
def exponential_ks_threshold(n_samples: int, confidence: float = 0.99,
                             trials: int = 500, seed: int = 7) -> float:
    """KS pass threshold calibrated on direct exponential draws.

    Draws ``trials`` samples of size ``n_samples`` from an exponential law,
    measures each sample's max CDF deviation from the exponential with the
    sample's own mean, and returns the ``confidence`` quantile.
    """
    rng = np.random.default_rng(seed)
    d = np.array([_ks_exponential(rng.standard_exponential(n_samples)) for _ in range(trials)])
    return float(np.quantile(d, confidence))


def intensity_histogram_test(fields: Iterable[ComplexField], stride: int = 1,
                             confidence: float = 0.99, bins: int = 50) -> HistogramReport:
    """Compare pooled intensities against the negative-exponential law.

    ``stride`` subsamples every field on a lattice of that many pixels; choose
    it near a few correlation lengths so pooled samples are close to independent
    (the threshold is calibrated for independent draws). Items may be
    :class:`ComplexField` objects or precomputed intensity maps.
    """
    chunks = [(intensity(f) if isinstance(f, ComplexField) else np.asarray(f))[::stride, ::stride].ravel()
              for f in fields]
    if not chunks:
        raise ValidationError("empty ensemble")
    if len(chunks) < 100:
        raise ValidationError(f"need at least 100 fields, got {len(chunks)}")
    samples = np.concatenate(chunks)
    mean = float(samples.mean())
    if not mean > 0:
        raise ValidationError("ensemble has zero mean intensity")
    second = float(np.mean(samples * samples))
    density, edges = np.histogram(samples / mean, bins=bins, range=(0.0, 10.0), density=True)
    return HistogramReport(
        n_samples=int(samples.size), mean=mean, second_moment=second,
        normalized_second_moment=second / mean**2,
        ks_distance=_ks_exponential(samples),
        threshold=exponential_ks_threshold(int(samples.size), confidence),
        bin_edges=edges, density=density,
    )
