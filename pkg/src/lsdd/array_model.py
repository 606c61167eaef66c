"""Array geometry, far-field steering vectors and steering-similarity matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_SPEED_OF_SOUND = 343.0


class MissingFrequencyError(KeyError):
    """Raised when a frequency was not precomputed in a SteeringSet."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions (M x 3, meters) in the array-fixed frame.

    x points forward, y left, z up; azimuth is measured counter-clockwise
    from +x in the horizontal plane.
    """

    mic_positions: np.ndarray
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    name: str = ""

    def __post_init__(self):
        pos = np.array(self.mic_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"mic_positions must be M x 3, got shape {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("need at least 2 microphones")
        if not self.speed_of_sound > 0:
            raise ValueError("speed_of_sound must be > 0")
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        np.fill_diagonal(dist, np.inf)
        if np.min(dist) <= 1e-9:
            raise ValueError("coincident microphones in geometry")
        pos.setflags(write=False)
        object.__setattr__(self, "mic_positions", pos)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def centered_positions(self) -> np.ndarray:
        """Positions relative to the array centroid (the delay reference)."""
        return self.mic_positions - self.mic_positions.mean(axis=0)

    def delays(self, azimuth_deg) -> np.ndarray:
        """Far-field arrival delays in seconds, shape (..., M).

        A plane wave from azimuth theta reaches microphone m at
        tau_m = -(r_m . u) / c, u being the unit vector toward the source.
        """
        az = np.deg2rad(np.asarray(azimuth_deg, dtype=float))
        u = np.stack([np.cos(az), np.sin(az), np.zeros_like(az)], axis=-1)
        return -(u @ self.centered_positions.T) / self.speed_of_sound

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "speed_of_sound": self.speed_of_sound,
            "mic_positions": self.mic_positions.tolist(),
        }


def load_geometry(path) -> ArrayGeometry:
    """Read a geometry JSON file: ``speed_of_sound`` plus ordered ``mic_positions``."""
    with open(path) as f:
        data = json.load(f)
    return ArrayGeometry(
        mic_positions=np.asarray(data["mic_positions"], dtype=float),
        speed_of_sound=float(data.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND)),
        name=str(data.get("name", Path(path).stem)),
    )


def save_geometry(geometry: ArrayGeometry, path) -> None:
    with open(path, "w") as f:
        json.dump(geometry.to_dict(), f, indent=2)


def glasses_geometry() -> ArrayGeometry:
    """The bundled 6-mic glasses-like fixture."""
    ref = resources.files("lsdd").joinpath("data/glasses6.json")
    with resources.as_file(ref) as path:
        return load_geometry(path)


@dataclass(frozen=True)
class DoaGrid:
    """Uniform horizontal azimuth grid in degrees, within [0, 360)."""

    azimuths: np.ndarray

    def __post_init__(self):
        az = np.array(self.azimuths, dtype=float)
        if az.ndim != 1 or az.size < 2:
            raise ValueError("DoaGrid needs at least 2 azimuths")
        if np.any(az < 0) or np.any(az >= 360):
            raise ValueError("grid azimuths must lie in [0, 360)")
        steps = np.diff(az)
        if np.any(steps <= 0):
            raise ValueError("grid azimuths must be strictly increasing")
        if not np.allclose(steps, steps[0], atol=1e-9):
            raise ValueError("grid azimuths must be uniformly spaced")
        az.setflags(write=False)
        object.__setattr__(self, "azimuths", az)

    @classmethod
    def uniform(cls, resolution_deg: float = 6.0) -> "DoaGrid":
        n = int(round(360.0 / resolution_deg))
        return cls(np.arange(n) * (360.0 / n))

    def __len__(self) -> int:
        return self.azimuths.size

    @property
    def resolution(self) -> float:
        return float(self.azimuths[1] - self.azimuths[0])

    def index_of(self, azimuth_deg: float, atol: float = 1e-6) -> int:
        """Grid index of an on-grid azimuth; ValueError when off-grid."""
        az = float(azimuth_deg) % 360.0
        diff = np.abs((self.azimuths - az + 180.0) % 360.0 - 180.0)
        idx = int(np.argmin(diff))
        if diff[idx] > atol:
            raise ValueError(f"azimuth {azimuth_deg} deg is not on the DOA grid")
        return idx


def steering_vector(geometry: ArrayGeometry, f: float, azimuth: float) -> np.ndarray:
    """Unit-magnitude response of the array to a plane wave: exp(-j 2 pi f tau_m)."""
    if f < 0:
        raise ValueError("frequency must be >= 0")
    return np.exp(-2j * np.pi * f * geometry.delays(azimuth))


@dataclass(frozen=True)
class SteeringSet:
    """Steering vectors for every (frequency, grid direction) pair.

    ``vectors`` has shape (F, L, M).
    """

    frequencies: np.ndarray
    grid: DoaGrid
    vectors: np.ndarray
    source: str = "free-field"

    def __post_init__(self):
        freqs = np.array(self.frequencies, dtype=float)
        vecs = np.array(self.vectors, dtype=complex)
        if freqs.ndim != 1 or freqs.size == 0:
            raise ValueError("frequencies must be a nonempty 1-D array")
        if vecs.shape[:2] != (freqs.size, len(self.grid)):
            raise ValueError(
                f"vectors shape {vecs.shape} does not match "
                f"({freqs.size}, {len(self.grid)}, M)"
            )
        if np.any(np.linalg.norm(vecs, axis=-1) == 0):
            raise ValueError("steering vectors must have nonzero norm")
        freqs.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "vectors", vecs)

    @property
    def num_mics(self) -> int:
        return self.vectors.shape[2]

    def freq_index(self, f: float) -> int:
        idx = int(np.argmin(np.abs(self.frequencies - f)))
        if not np.isclose(self.frequencies[idx], f, rtol=0, atol=1e-6):
            raise MissingFrequencyError(f"frequency {f} Hz not in steering set")
        return idx

    def at(self, f: float) -> np.ndarray:
        """(L, M) steering matrix for frequency f."""
        return self.vectors[self.freq_index(f)]


def build_steering_set(geometry: ArrayGeometry, grid: DoaGrid, frequencies) -> SteeringSet:
    freqs = np.atleast_1d(np.asarray(frequencies, dtype=float))
    if freqs.size == 0:
        raise ValueError("frequencies must be nonempty")
    if np.any(freqs < 0):
        raise ValueError("frequencies must be >= 0")
    tau = geometry.delays(grid.azimuths)  # (L, M)
    vectors = np.exp(-2j * np.pi * freqs[:, None, None] * tau[None, :, :])
    return SteeringSet(freqs, grid, vectors)


def save_steering_set(steering: SteeringSet, path) -> None:
    """Store a steering set as ``.npz`` (frequencies_hz, azimuths_deg, vectors)."""
    np.savez(
        path,
        frequencies_hz=steering.frequencies,
        azimuths_deg=steering.grid.azimuths,
        vectors=steering.vectors,
    )


def load_steering_set(path) -> SteeringSet:
    """Load a measured (or previously saved) steering set from ``.npz``."""
    with np.load(path) as data:
        return SteeringSet(
            frequencies=data["frequencies_hz"],
            grid=DoaGrid(data["azimuths_deg"]),
            vectors=data["vectors"],
            source=str(path),
        )


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # |<a_i, b_j>| / (|a_i| |b_j|) over the last axis, batched over leading axes
    an = a / np.linalg.norm(a, axis=-1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=-1, keepdims=True)
    return np.clip(np.abs(an @ np.swapaxes(bn.conj(), -1, -2)), 0.0, 1.0)


def build_ideal_spectrum(steering: SteeringSet, f: float) -> np.ndarray:
    """L x L matrix W of cosine similarities between the steering vectors at f."""
    v = steering.at(f)
    w = _cosine_matrix(v, v)
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 1.0)
    return w


def ideal_spectra(steering: SteeringSet) -> np.ndarray:
    """W for every frequency of the set, shape (F, L, L)."""
    w = _cosine_matrix(steering.vectors, steering.vectors)
    w = 0.5 * (w + np.swapaxes(w, -1, -2))
    idx = np.arange(w.shape[-1])
    w[:, idx, idx] = 1.0
    return w


def band_similarity_map(steering: SteeringSet, reference_azimuth: float) -> np.ndarray:
    """Similarity of the reference steering vector to every grid direction.

    Returns an (F, L) array; the reference column is exactly 1.
    """
    h = steering.grid.index_of(reference_azimuth)
    ref = steering.vectors[:, h : h + 1, :]  # (F, 1, M)
    lam = _cosine_matrix(ref, steering.vectors)[:, 0, :]
    lam[:, h] = 1.0
    return lam


def main_lobe_width(row: np.ndarray, ref_index: int, level: float = 0.9) -> int:
    """Number of contiguous grid points (circularly) around ref_index with value >= level."""
    row = np.asarray(row)
    n = row.size
    if row[ref_index] < level:
        return 0
    if np.all(row >= level):
        return n
    width = 1
    k = 1
    while row[(ref_index + k) % n] >= level:
        width += 1
        k += 1
    k = 1
    while row[(ref_index - k) % n] >= level:
        width += 1
        k += 1
    return width
