"""Directional spectra and the LSDD / LSDDe / dSDD / dSDDe DOA and DPD estimators.

All array functions are vectorized over leading axes: a snapshot ``x`` has
shape (..., M), a spectrum (..., L).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .array_model import DoaGrid, SteeringSet, ideal_spectra
from .tf_transform import TFGrid, band_bins


class SimilarityKind(str, enum.Enum):
    COSINE = "cosine"
    INVERSE_RESIDUAL = "inverse_residual"


class Algorithm(str, enum.Enum):
    LSDD = "LSDD"
    LSDDE = "LSDDe"
    DSDD = "dSDD"
    DSDDE = "dSDDe"

    @property
    def energy_weighted(self) -> bool:
        return self in (Algorithm.LSDDE, Algorithm.DSDDE)

    @property
    def uses_ideal_spectrum(self) -> bool:
        return self in (Algorithm.DSDD, Algorithm.DSDDE)


def from_cosine(c, kind: SimilarityKind):
    """Map a cosine value to the requested similarity kind.

    The inverse residual 1 / min_beta(|a - beta b| / |a|) equals
    1 / sqrt(1 - c^2), since the least-squares beta = <b, a> / |b|^2 leaves
    a residual of |a| sqrt(1 - c^2). c == 1 maps to +inf.
    """
    kind = SimilarityKind(kind)
    c = np.clip(c, 0.0, 1.0)
    if kind is SimilarityKind.COSINE:
        return c
    with np.errstate(divide="ignore"):
        return 1.0 / np.sqrt(1.0 - c * c)


def similarity(a, b, kind: SimilarityKind = SimilarityKind.COSINE) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("similarity is undefined for a zero vector")
    c = abs(np.vdot(b, a)) / (na * nb)
    return float(from_cosine(c, kind))


@dataclass
class DirectionalSpectrum:
    """Spectrum values (..., L) over ``grid``; ``valid`` is False for silent bins."""

    values: np.ndarray
    grid: DoaGrid
    valid: np.ndarray
    kind: SimilarityKind = SimilarityKind.COSINE
    smoothing_radius: int = 0

    @property
    def smoothed(self) -> bool:
        return self.smoothing_radius > 0


def directional_spectrum(x, steering_row, kind: SimilarityKind = SimilarityKind.COSINE):
    """S_l = d(x, v_l) for every row v_l of ``steering_row`` (L, M).

    ``x`` may carry leading axes (..., M). Returns (values, valid); a zero
    snapshot gives an all-zero spectrum with valid False.
    """
    x = np.asarray(x)
    v = np.asarray(steering_row)
    v_unit = v / np.linalg.norm(v, axis=-1, keepdims=True)
    xn = np.linalg.norm(x, axis=-1)
    valid = xn > 0
    inner = np.abs(np.einsum("...m,lm->...l", x, v_unit.conj()))
    with np.errstate(invalid="ignore", divide="ignore"):
        c = inner / xn[..., None]
    c = np.where(valid[..., None], c, 0.0)
    values = np.where(valid[..., None], from_cosine(c, kind), 0.0)
    return values, valid


def band_spectra(x_band, steering_band, kind: SimilarityKind = SimilarityKind.COSINE):
    """Spectra for a block of STFT data.

    ``x_band`` is (M, T, F) and ``steering_band`` (F, L, M); returns values
    (T, F, L) and valid (T, F).
    """
    v_unit = steering_band / np.linalg.norm(steering_band, axis=-1, keepdims=True)
    xn = np.sqrt(np.sum(np.abs(x_band) ** 2, axis=0))
    valid = xn > 0
    inner = np.abs(np.einsum("mtf,flm->tfl", x_band, v_unit.conj()))
    with np.errstate(invalid="ignore", divide="ignore"):
        c = inner / xn[..., None]
    c = np.where(valid[..., None], c, 0.0)
    values = np.where(valid[..., None], from_cosine(c, kind), 0.0)
    return values, valid


def smooth_spectrum(values, radius: int, axis: int = -2) -> np.ndarray:
    """Moving average of length 2R+1 across frequency.

    At the ends of the frequency axis the window shrinks to the available
    bins and the mean is taken over the bins actually present.
    """
    if radius < 0:
        raise ValueError("smoothing radius must be >= 0")
    values = np.asarray(values, dtype=float)
    if radius == 0:
        return values.copy()
    moved = np.moveaxis(values, axis, 0)
    n = moved.shape[0]
    csum = np.concatenate([np.zeros((1,) + moved.shape[1:]), np.cumsum(moved, axis=0)])
    lo = np.clip(np.arange(n) - radius, 0, n)
    hi = np.clip(np.arange(n) + radius + 1, 0, n)
    count = (hi - lo).reshape((n,) + (1,) * (moved.ndim - 1))
    out = (csum[hi] - csum[lo]) / count
    return np.moveaxis(out, 0, axis)


def energy_weight(x) -> np.ndarray:
    """Median per-channel energy of a snapshot (..., M); mean of middle two for even M."""
    return np.median(np.abs(np.asarray(x)) ** 2, axis=-1)


def _argmax(values):
    idx = np.argmax(values, axis=-1)  # first maximum: lowest grid index wins ties
    chi = np.take_along_axis(values, idx[..., None], axis=-1)[..., 0]
    return idx, chi


def lsdd_estimate(values, grid: DoaGrid):
    """DOA = grid direction of the spectrum peak; DPD measure = the peak value."""
    idx, chi = _argmax(np.asarray(values))
    return grid.azimuths[idx], chi


def lsdde_estimate(values, x, grid: DoaGrid):
    theta, chi = lsdd_estimate(values, grid)
    return theta, chi * energy_weight(x)


def column_similarity(values, w, kind: SimilarityKind = SimilarityKind.COSINE):
    """Similarity of each spectrum (..., L) to every column of W.

    W is (L, L) or broadcastable (..., L, L). Returns (..., L) over columns h;
    zero spectra give zeros.
    """
    s = np.asarray(values, dtype=float)
    w = np.asarray(w, dtype=float)
    w_unit = w / np.linalg.norm(w, axis=-2, keepdims=True)
    inner = np.abs(np.matmul(s[..., None, :], w_unit)[..., 0, :])
    sn = np.linalg.norm(s, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = inner / sn[..., None]
    c = np.where(sn[..., None] > 0, c, 0.0)
    return np.where(sn[..., None] > 0, from_cosine(c, kind), 0.0)


def dsdd_estimate(values, w, grid: DoaGrid, kind: SimilarityKind = SimilarityKind.COSINE):
    """DOA = direction whose ideal spectrum (column of W) best matches the observed one."""
    idx, chi = _argmax(column_similarity(values, w, kind))
    return grid.azimuths[idx], chi


def dsdde_estimate(values, w, x, grid: DoaGrid, kind: SimilarityKind = SimilarityKind.COSINE):
    theta, chi = dsdd_estimate(values, w, grid, kind)
    return theta, chi * energy_weight(x)


@dataclass(frozen=True)
class BinEstimate:
    t: int
    f: int
    theta_hat: float
    chi: float
    algorithm: Algorithm


@dataclass
class BinEstimates:
    """Per-bin estimates of one algorithm over the analysis band.

    ``theta``, ``chi`` and ``valid`` are (T, F) arrays; ``theta`` is in the
    array frame, degrees. ``bins`` holds the STFT bin indices of the F columns.
    """

    algorithm: Algorithm
    frame_times: np.ndarray
    bins: np.ndarray
    freqs: np.ndarray
    theta: np.ndarray
    chi: np.ndarray
    valid: np.ndarray

    def records(self) -> Iterator[BinEstimate]:
        for t, f in zip(*np.nonzero(self.valid)):
            yield BinEstimate(
                int(t), int(self.bins[f]), float(self.theta[t, f]), float(self.chi[t, f]), self.algorithm
            )


@dataclass
class AnalysisConfig:
    f_low: float = 1100.0
    f_high: float = 2000.0
    kind: SimilarityKind = SimilarityKind.COSINE
    column_kind: SimilarityKind = SimilarityKind.COSINE
    smoothing_radius: int = 0

    def __post_init__(self):
        self.kind = SimilarityKind(self.kind)
        self.column_kind = SimilarityKind(self.column_kind)
        if not 0 <= self.f_low <= self.f_high:
            raise ValueError("need 0 <= f_low <= f_high")
        if self.smoothing_radius < 0:
            raise ValueError("smoothing_radius must be >= 0")


def compute_spectrum(tf: TFGrid, steering: SteeringSet, config: AnalysisConfig):
    """In-band directional spectra of ``tf`` (smoothed when R > 0).

    Returns (spectrum, band bin indices, band steering vectors (F, L, M)).
    """
    if tf.data.shape[0] != steering.num_mics:
        raise ValueError(
            f"channel count {tf.data.shape[0]} does not match geometry ({steering.num_mics} mics)"
        )
    bins = band_bins(tf.bin_frequencies, config.f_low, config.f_high)
    if bins.size == 0:
        raise ValueError(f"no STFT bins within [{config.f_low}, {config.f_high}] Hz")
    fidx = np.array([steering.freq_index(f) for f in tf.bin_frequencies[bins]])
    v_band = steering.vectors[fidx]
    values, valid = band_spectra(tf.data[:, :, bins], v_band, config.kind)
    values = smooth_spectrum(values, config.smoothing_radius, axis=1)
    spectrum = DirectionalSpectrum(values, steering.grid, valid, config.kind, config.smoothing_radius)
    return spectrum, bins, v_band


def analyze(
    tf: TFGrid,
    steering: SteeringSet,
    algorithms: Iterable[Algorithm | str] = tuple(Algorithm),
    config: AnalysisConfig | None = None,
) -> dict[Algorithm, BinEstimates]:
    """Run the requested estimators on every in-band bin of ``tf``."""
    config = config or AnalysisConfig()
    algorithms = [Algorithm(a) for a in algorithms]
    spectrum, bins, v_band = compute_spectrum(tf, steering, config)
    freqs = tf.bin_frequencies[bins]
    values, valid, grid = spectrum.values, spectrum.valid, spectrum.grid

    weight = None
    if any(a.energy_weighted for a in algorithms):
        weight = energy_weight(np.moveaxis(tf.data[:, :, bins], 0, -1))

    col = col_valid = None
    if any(a.uses_ideal_spectrum for a in algorithms):
        w = ideal_spectra(SteeringSet(freqs, grid, v_band))
        col = column_similarity(values, w, config.column_kind)
        col_valid = valid & (np.linalg.norm(values, axis=-1) > 0)

    out = {}
    for alg in algorithms:
        if alg.uses_ideal_spectrum:
            idx, chi = _argmax(col)
            ok = col_valid
        else:
            idx, chi = _argmax(values)
            ok = valid
        if alg.energy_weighted:
            chi = chi * weight
        out[alg] = BinEstimates(
            algorithm=alg,
            frame_times=tf.frame_times,
            bins=bins,
            freqs=freqs,
            theta=grid.azimuths[idx],
            chi=np.where(ok, chi, 0.0),
            valid=ok.copy(),
        )
    return out
