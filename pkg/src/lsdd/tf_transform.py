"""Multichannel STFT front end and WAV I/O."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

DEFAULT_WINDOW = 1024
DEFAULT_HOP = 512


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class MultichannelAudio:
    """M channels x N samples of real audio at ``sample_rate`` Hz."""

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 2:
            raise ValueError("samples must be (channels, n_samples)")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


@dataclass
class TFGrid:
    """Complex STFT data indexed (channel, frame, bin).

    Frame k covers samples [k*hop, k*hop + window_size); ``frame_times`` are
    the frame centers in seconds.
    """

    data: np.ndarray
    sample_rate: float
    window_size: int
    hop: int

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def num_bins(self) -> int:
        return self.data.shape[2]

    @property
    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.sample_rate / self.window_size

    @property
    def frame_times(self) -> np.ndarray:
        return frame_centers(self.num_frames, self.sample_rate, self.window_size, self.hop)

    @property
    def start_time(self) -> float:
        return 0.5 * self.window_size / self.sample_rate


def frame_centers(num_frames: int, sample_rate: float, window_size: int, hop: int) -> np.ndarray:
    return (np.arange(num_frames) * hop + 0.5 * window_size) / sample_rate


def num_frames_for(num_samples: int, window_size: int, hop: int) -> int:
    if num_samples < window_size:
        return 0
    return 1 + (num_samples - window_size) // hop


def hann(n: int, periodic: bool = True) -> np.ndarray:
    """Hann window; the periodic (DFT-even) form is the default."""
    denom = n if periodic else n - 1
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / denom)


def stft(
    audio: MultichannelAudio,
    window_size: int = DEFAULT_WINDOW,
    hop: int = DEFAULT_HOP,
    periodic: bool = True,
) -> TFGrid:
    """One-sided STFT of every channel; trailing partial frames are dropped."""
    if window_size <= 0 or window_size % 2:
        raise ValueError("window_size must be a positive even integer")
    if not 0 < hop <= window_size:
        raise ValueError("hop must satisfy 0 < hop <= window_size")
    if audio.num_channels == 0:
        raise ValueError("audio has no channels")
    if audio.num_samples < window_size:
        raise InsufficientSamplesError(
            f"insufficient samples: {audio.num_samples} < window of {window_size}"
        )
    win = hann(window_size, periodic)
    n_frames = num_frames_for(audio.num_samples, window_size, hop)
    spec = np.empty((audio.num_channels, n_frames, window_size // 2 + 1), dtype=complex)
    # per channel to bound peak memory on long recordings
    for m, channel in enumerate(audio.samples):
        frames = sliding_window_view(channel, window_size)[::hop]
        spec[m] = np.fft.rfft(frames * win, axis=-1)
    return TFGrid(spec, float(audio.sample_rate), window_size, hop)


def bin_frequency(grid: TFGrid, index: int) -> float:
    if not 0 <= index < grid.num_bins:
        raise IndexError(f"bin index {index} out of range [0, {grid.num_bins})")
    return index * grid.sample_rate / grid.window_size


def frame_time(grid: TFGrid, index: int) -> float:
    if not 0 <= index < grid.num_frames:
        raise IndexError(f"frame index {index} out of range [0, {grid.num_frames})")
    return grid.start_time + index * grid.hop / grid.sample_rate


def band_bins(freqs: np.ndarray, f_low: float, f_high: float) -> np.ndarray:
    """Indices of bins with f_low <= f <= f_high."""
    return np.flatnonzero((freqs >= f_low) & (freqs <= f_high))


def read_wav(path) -> MultichannelAudio:
    """Read PCM (8/16/24/32-bit int) or float WAV into [-1, 1] floats, (M, N)."""
    rate, data = wavfile.read(path)
    if data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit samples into int32
        x = data / 2147483648.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(float)
    else:
        raise ValueError(f"unsupported WAV sample type {data.dtype}")
    channels = data.shape[1] if data.ndim == 2 else 1
    x = x.reshape(len(x), channels).T
    return MultichannelAudio(float(rate), x)


def write_wav(path, audio: MultichannelAudio) -> None:
    """Write 32-bit float WAV, channels in geometry order."""
    wavfile.write(path, int(round(audio.sample_rate)), audio.samples.T.astype(np.float32))
