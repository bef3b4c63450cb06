"""Streaming intensity-correlation estimators and contrast analytics.

Sums are kept with Neumaier compensation and merged with an error-free
two-sum, so splitting a record stream into shards and merging them changes the
finalized numbers only at the level of a final rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .detect import RealizationRecord
from .errors import InsufficientDataError, ValidationError
from .field import Grid2D, half_max_width

__all__ = [
    "CorrelationAccumulator", "CorrelationMap", "ContrastReport", "GhostImage", "SpeckleMetrics",
    "accumulate", "merge", "finalize", "ghost_image", "predicted_contrast",
    "measured_contrast", "speckle_metrics", "cell_model_contrast", "coherence_width",
]


class _CompensatedSum:
    __slots__ = ("s", "c")

    def __init__(self, shape):
        self.s = np.zeros(shape)
        self.c = np.zeros(shape)

    def add(self, x):
        s = self.s
        t = s + x
        self.c += np.where(np.abs(s) >= np.abs(x), (s - t) + x, (x - t) + s)
        self.s = t

    def merged(self, other: "_CompensatedSum") -> "_CompensatedSum":
        out = _CompensatedSum(self.s.shape)
        a, b = self.s, other.s
        t = a + b
        bp = t - a
        err = (a - (t - bp)) + (b - bp)
        out.s = t
        out.c = (self.c + other.c) + err
        return out

    def copy(self) -> "_CompensatedSum":
        out = _CompensatedSum(self.s.shape)
        out.s = self.s.copy()
        out.c = self.c.copy()
        return out

    @property
    def total(self) -> np.ndarray:
        return self.s + self.c


# Per-position sums: I_p, I_p^2, I_p I_b, (I_p I_b)^2, I_p^2 I_b, I_p I_b^2.
_P, _PP, _PB, _PBPB, _PPB, _PBB = range(6)


class CorrelationAccumulator:
    """Mergeable sums over realizations for one bucket and ``P`` scan positions.

    Besides the first and second moments, the accumulator keeps the third and
    fourth order cross sums needed for the delta-method standard error of g2.
    """

    def __init__(self, n_positions: int, positions: Optional[np.ndarray] = None):
        if n_positions < 1:
            raise ValidationError("an accumulator needs at least one scan position")
        self.n_positions = int(n_positions)
        if positions is not None:
            positions = np.asarray(positions, dtype=float).reshape(self.n_positions, -1)
        self.positions = positions
        self.n = 0
        self._per = _CompensatedSum((6, self.n_positions))
        self._bucket = _CompensatedSum((2,))

    def add(self, bucket: float, points: np.ndarray) -> "CorrelationAccumulator":
        p = np.asarray(points, dtype=float)
        if p.shape != (self.n_positions,):
            raise ValidationError(
                f"record has {p.size} point readings, accumulator expects {self.n_positions}")
        b = float(bucket)
        pb = p * b
        self._per.add(np.stack([p, p * p, pb, pb * pb, pb * p, pb * b]))
        self._bucket.add(np.array([b, b * b]))
        self.n += 1
        return self

    def same_layout(self, other: "CorrelationAccumulator") -> bool:
        if self.n_positions != other.n_positions:
            return False
        if self.positions is None or other.positions is None:
            return True
        return self.positions.shape == other.positions.shape and np.array_equal(self.positions, other.positions)

    def copy(self) -> "CorrelationAccumulator":
        out = CorrelationAccumulator(self.n_positions, self.positions)
        out.n = self.n
        out._per = self._per.copy()
        out._bucket = self._bucket.copy()
        return out

    def sums(self) -> dict:
        """Compensated totals keyed by name (for inspection and tests)."""
        per = self._per.total
        bk = self._bucket.total
        return {"n": self.n, "p": per[_P], "pp": per[_PP], "pb": per[_PB],
                "pbpb": per[_PBPB], "ppb": per[_PPB], "pbb": per[_PBB],
                "b": bk[0], "bb": bk[1]}


def accumulate(acc: CorrelationAccumulator, record: RealizationRecord) -> CorrelationAccumulator:
    """Fold one realization into ``acc`` (in place) and return it."""
    return acc.add(record.bucket, record.point_readings)


def merge(a: CorrelationAccumulator, b: CorrelationAccumulator) -> CorrelationAccumulator:
    """Field-wise sum of two accumulators over disjoint record sets."""
    if not a.same_layout(b):
        raise ValidationError("cannot merge accumulators with different scan layouts")
    out = CorrelationAccumulator(a.n_positions, a.positions if a.positions is not None else b.positions)
    out.n = a.n + b.n
    out._per = a._per.merged(b._per)
    out._bucket = a._bucket.merged(b._bucket)
    return out


@dataclass(frozen=True)
class CorrelationMap:
    positions: Optional[np.ndarray]
    g2: np.ndarray
    covariance: np.ndarray
    stderr: np.ndarray
    n_realizations: int
    mean_point: np.ndarray = dc_field(repr=False)
    mean_bucket: float = 0.0

    @property
    def x(self) -> np.ndarray:
        if self.positions is None:
            return np.arange(self.g2.size, dtype=float)
        return self.positions[:, 0]


def finalize(acc: CorrelationAccumulator) -> CorrelationMap:
    """g2, covariance and delta-method standard error at every position.

    ``g2 = <I_p I_b> / (<I_p> <I_b>)``; positions where either mean vanishes
    get ``nan``.
    """
    n = acc.n
    if n < 2:
        raise InsufficientDataError(f"finalize needs at least 2 realizations, got {n}")
    s = acc.sums()
    mp, mb, m = s["p"] / n, s["b"] / n, s["pb"] / n
    den = mp * mb
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(den > 0, m / den, np.nan)
        cov = m - den
        # Sample covariance of (Y = I_p I_b, I_p, I_b).
        c = n / (n - 1)
        v_y = c * (s["pbpb"] / n - m * m)
        v_p = c * (s["pp"] / n - mp * mp)
        v_b = c * (s["bb"] / n - mb * mb)
        c_yp = c * (s["ppb"] / n - m * mp)
        c_yb = c * (s["pbb"] / n - m * mb)
        c_pb = c * (m - mp * mb)
        d_y = 1.0 / den
        d_p = -g2 / mp
        d_b = -g2 / mb
        var = (d_y * d_y * v_y + d_p * d_p * v_p + d_b * d_b * v_b
               + 2 * (d_y * d_p * c_yp + d_y * d_b * c_yb + d_p * d_b * c_pb)) / n
        se = np.where(den > 0, np.sqrt(np.clip(var, 0.0, None)), np.nan)
    return CorrelationMap(
        positions=None if acc.positions is None else acc.positions.copy(),
        g2=g2, covariance=cov, stderr=se, n_realizations=n,
        mean_point=mp, mean_bucket=float(mb),
    )


@dataclass(frozen=True)
class GhostImage:
    positions: Optional[np.ndarray]
    covariance: np.ndarray
    g2: np.ndarray


def ghost_image(cmap: CorrelationMap) -> GhostImage:
    """Background-free ghost image ``C(x) = <I_p I_b> - <I_p><I_b>``; raw g2 rides along."""
    return GhostImage(cmap.positions, cmap.covariance.copy(), cmap.g2.copy())


def predicted_contrast(A: float, a: float) -> float:
    """Bucket-detector signal-to-background ratio ``(1 + A/a) / (A/a)``."""
    if not a > 0:
        raise ValidationError(f"detector area must be positive, got {a!r}")
    if not A >= a:
        raise ValidationError(f"object area {A!r} must be at least the detector area {a!r}")
    r = A / a
    return (1.0 + r) / r


@dataclass(frozen=True)
class ContrastReport:
    S_measured: float
    S_predicted: float
    A: float
    a: float
    signal_region: np.ndarray
    background_region: np.ndarray
    stderr: float

    @property
    def ratio(self) -> float:
        return self.A / self.a


def _region(region, size: int, name: str) -> np.ndarray:
    r = np.asarray(region)
    if r.dtype == bool:
        if r.shape != (size,):
            raise ValidationError(f"{name} mask has the wrong length")
        r = np.flatnonzero(r)
    r = np.unique(r.astype(np.int64))
    if r.size == 0:
        raise ValidationError(f"{name} region is empty")
    if r[0] < 0 or r[-1] >= size:
        raise ValidationError(f"{name} region index out of range")
    return r


def measured_contrast(cmap: CorrelationMap, signal_region, background_region,
                      object_area: float, detector_area: float,
                      ratio: Optional[float] = None) -> ContrastReport:
    """Mean g2 on the signal region over mean g2 on the background region.

    ``S_predicted`` uses ``object_area / detector_area`` unless an effective
    ``ratio`` (object area in detector-cell units) is supplied.
    """
    sig = _region(signal_region, cmap.g2.size, "signal")
    bg = _region(background_region, cmap.g2.size, "background")
    if np.intersect1d(sig, bg).size:
        raise ValidationError("signal and background regions overlap")
    gs, gb = cmap.g2[sig], cmap.g2[bg]
    if not (np.all(np.isfinite(gs)) and np.all(np.isfinite(gb))):
        raise ValidationError("g2 is undefined inside a contrast region")
    ms, mb = float(gs.mean()), float(gb.mean())
    s = ms / mb
    # Mean of per-position errors bounds the error of a mean of correlated estimates.
    es, eb = float(cmap.stderr[sig].mean()), float(cmap.stderr[bg].mean())
    stderr = s * math.hypot(es / ms, eb / mb)
    if ratio is None:
        predicted = predicted_contrast(object_area, detector_area)
    else:
        predicted = predicted_contrast(ratio, 1.0)
    return ContrastReport(s, predicted, float(object_area), float(detector_area), sig, bg, stderr)


def cell_model_contrast(ratio: int, n: int = 200_000, seed: int = 0, batches: int = 20) -> tuple[float, float]:
    """Monte Carlo contrast of the independent-cell model.

    The bucket sums ``ratio`` independent exponential cells and the point
    detector sees one of them (signal) or an unrelated cell (background).
    Returns ``(S, standard error)``, the error from batch means.
    """
    ratio = int(ratio)
    if ratio < 1:
        raise ValidationError("ratio must be a positive integer")
    rng = np.random.default_rng(seed)
    per = n // batches
    out = np.empty(batches)
    for k in range(batches):
        cells = rng.standard_exponential((per, ratio))
        other = rng.standard_exponential(per)
        bucket = cells.sum(axis=1)
        g_sig = np.mean(cells[:, 0] * bucket) / (cells[:, 0].mean() * bucket.mean())
        g_bg = np.mean(other * bucket) / (other.mean() * bucket.mean())
        out[k] = g_sig / g_bg
    return float(out.mean()), float(out.std(ddof=1) / math.sqrt(batches))


def coherence_width(separations: np.ndarray, g2: np.ndarray) -> float:
    """Speckle size from a g2-versus-separation curve along one axis.

    For circular-Gaussian light ``g2 - 1 = |mu|^2``; the result is the FWHM of
    ``|mu| = sqrt(g2 - 1)``. Separations must be uniformly spaced and include 0;
    values at ``+d`` and ``-d`` are averaged.
    """
    d = np.asarray(separations, dtype=float)
    g = np.asarray(g2, dtype=float)
    order = np.argsort(np.abs(d), kind="stable")
    d, g = d[order], g[order]
    if d.size < 3 or abs(d[0]) > 1e-15 * max(1.0, abs(d).max()):
        raise ValidationError("separations must include zero and at least two more samples")
    step = float(np.min(np.abs(d[np.abs(d) > 0])))
    lag = np.rint(np.abs(d) / step).astype(np.int64)
    sums = np.bincount(lag, weights=g)
    counts = np.bincount(lag)
    prof = sums[counts > 0] / counts[counts > 0]
    excess = np.sqrt(np.clip(prof - 1.0, 0.0, None))
    return half_max_width(excess, step)


@dataclass(frozen=True)
class SpeckleMetrics:
    l_c_measured: float
    contrast_measured: float
    intensity_fwhm: float
    n_frames: int


def speckle_metrics(frames: np.ndarray, grid: Grid2D, min_fraction: float = 0.2) -> SpeckleMetrics:
    """Speckle size and contrast of an ensemble of intensity frames.

    Fluctuations are normalized by the ensemble-mean intensity at each pixel,
    so slowly varying beam envelopes do not bias the result; pixels below
    ``min_fraction`` of the brightest mean are ignored. The normalized
    autocovariance ``c(d)`` equals ``|mu(d)|^2`` for circular-Gaussian light.
    ``l_c_measured`` is the FWHM of ``sqrt(c)`` (the field correlation, the
    same quantity the generator is calibrated to); the FWHM of ``c`` itself is
    reported as ``intensity_fwhm``. ``frames`` may be cropped from the full
    grid; only the pitch of ``grid`` is used.
    """
    f = np.asarray(frames, dtype=float)
    if f.ndim != 3:
        raise ValidationError("frames must have shape (n, ny, nx)")
    n, h, w = f.shape
    if n < 100:
        raise InsufficientDataError(f"speckle metrics need at least 100 frames, got {n}")
    mean = f.mean(axis=0)
    if not mean.max() > 0:
        raise ValidationError("frames carry no intensity")
    m = mean >= min_fraction * mean.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(m, f / mean - 1.0, 0.0)
    contrast = math.sqrt(float(np.sum(u * u)) / (n * int(m.sum())))
    shape = (2 * h, 2 * w)
    spec = sfft.rfft2(u, s=shape)
    num = sfft.irfft2(np.sum(spec.real**2 + spec.imag**2, axis=0), s=shape)
    mspec = sfft.rfft2(m.astype(float), s=shape)
    den = n * sfft.irfft2(mspec.real**2 + mspec.imag**2, s=shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(den > 0.5 * n, num / den, 0.0)
    if not c[0, 0] > 0:
        return SpeckleMetrics(float("nan"), contrast, float("nan"), n)
    cx, cy = c[0, :w], c[:h, 0]
    lx = half_max_width(np.sqrt(np.clip(cx, 0, None)), grid.dx)
    ly = half_max_width(np.sqrt(np.clip(cy, 0, None)), grid.dy)
    ix = half_max_width(cx, grid.dx)
    iy = half_max_width(cy, grid.dy)
    if h < 8:
        return SpeckleMetrics(lx, contrast, ix, n)
    return SpeckleMetrics(0.5 * (lx + ly), contrast, 0.5 * (ix + iy), n)
