"""Synthetic plane-wave scenes with exact ground truth.

Each source (and each discrete reflection) is rendered as a far-field plane
wave. Directions are held constant over hop-length segments centred on the
STFT frame centres, so frame k's ground truth is exactly the direction used
to render the samples around its centre. Per-microphone delays use a
32-tap Kaiser-windowed sinc fractional-delay filter.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .array_model import ArrayGeometry
from .eval_harness import GroundTruth, normalize_angle
from .tf_transform import (
    DEFAULT_HOP,
    DEFAULT_WINDOW,
    MultichannelAudio,
    frame_centers,
    num_frames_for,
    read_wav,
)

FIR_TAPS = 32
KAISER_BETA = 8.0
RAMP_SECONDS = 0.005


class SceneSpecError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid scene spec: " + "; ".join(violations))


@dataclass
class SourceSpec:
    """One talker. ``trajectory`` holds [time_s, room_azimuth_deg] keyframes.

    ``signal`` is a dict with ``kind``:
      - "sinusoids": ``freqs`` (Hz), optional ``amps`` and ``phases`` (rad)
      - "noise": band-limited Gaussian noise, ``f_low``/``f_high`` (Hz),
        optional ``modulation_hz`` and ``modulation_depth`` for a slowly
        varying log-normal envelope
      - "wav": ``path`` to a file at the scene sample rate (first channel used)
    ``active`` lists [start_s, end_s] intervals; None means always active.
    """

    id: str
    signal: dict
    trajectory: list
    gain: float = 1.0
    active: list | None = None


@dataclass
class ReflectionSpec:
    source: str
    azimuth_offset: float
    gain: float
    delay_ms: float


@dataclass
class SceneSpec:
    duration: float
    sample_rate: float = 48000.0
    sources: list[SourceSpec] = field(default_factory=list)
    reflections: list[ReflectionSpec] = field(default_factory=list)
    yaw: list = field(default_factory=lambda: [[0.0, 0.0]])
    noise_level: float = 0.0
    noise_snr_db: float | None = None
    seed: int = 0
    window_size: int = DEFAULT_WINDOW
    hop: int = DEFAULT_HOP
    geometry: str | None = None

    def violations(self) -> list[str]:
        out = []
        if not self.duration > 0:
            out.append(f"duration must be > 0 (got {self.duration})")
        if not self.sample_rate > 0:
            out.append(f"sample_rate must be > 0 (got {self.sample_rate})")
        if self.noise_level < 0:
            out.append(f"noise_level must be >= 0 (got {self.noise_level})")
        if self.window_size <= 0 or self.window_size % 2 or not 0 < self.hop <= self.window_size:
            out.append("window_size must be even and 0 < hop <= window_size")
        if not self.yaw:
            out.append("yaw needs at least one keyframe")
        ids = set()
        for i, s in enumerate(self.sources):
            where = f"sources[{i}]"
            if s.id in ids:
                out.append(f"{where}.id duplicated: {s.id}")
            ids.add(s.id)
            if s.gain < 0:
                out.append(f"{where}.gain must be >= 0")
            if not s.trajectory:
                out.append(f"{where}.trajectory needs at least one keyframe")
            kind = s.signal.get("kind")
            if kind not in ("sinusoids", "noise", "wav"):
                out.append(f"{where}.signal.kind must be sinusoids|noise|wav (got {kind!r})")
            elif kind == "noise" and not 0 <= s.signal.get("f_low", 0) < s.signal.get("f_high", 0):
                out.append(f"{where}.signal needs 0 <= f_low < f_high")
        for i, r in enumerate(self.reflections):
            where = f"reflections[{i}]"
            if r.source not in ids:
                out.append(f"{where}.source refers to unknown source {r.source!r}")
            if not 0 <= r.gain < 1:
                out.append(f"{where}.gain must be in [0, 1)")
            if r.delay_ms < 0:
                out.append(f"{where}.delay_ms must be >= 0")
        return out

    def validate(self) -> "SceneSpec":
        errs = self.violations()
        if errs:
            raise SceneSpecError(errs)
        return self

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        data = dict(data)
        try:
            data["sources"] = [SourceSpec(**s) for s in data.get("sources", [])]
            data["reflections"] = [ReflectionSpec(**r) for r in data.get("reflections", [])]
            return cls(**data)
        except TypeError as e:
            raise SceneSpecError([str(e)]) from None


def load_scene(path) -> SceneSpec:
    with open(path) as f:
        data = json.load(f)
    base = Path(path).parent
    geom = data.get("geometry")
    if geom and geom != "glasses6" and not Path(geom).is_absolute():
        data["geometry"] = str(base / geom)
    for s in data.get("sources", []):
        sig = s.get("signal", {})
        if sig.get("kind") == "wav" and not Path(sig["path"]).is_absolute():
            sig["path"] = str(base / sig["path"])
    return SceneSpec.from_dict(data)


def save_scene(spec: SceneSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(spec.to_dict(), f, indent=2)


def interp_keyframes(keyframes, t) -> np.ndarray:
    """Piecewise-linear angle trajectory, held constant outside the keyframes."""
    kf = np.asarray(keyframes, dtype=float).reshape(-1, 2)
    order = np.argsort(kf[:, 0], kind="stable")
    return np.interp(t, kf[order, 0], kf[order, 1])


def activity(source: SourceSpec, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if source.active is None:
        return np.ones(t.shape, dtype=bool)
    on = np.zeros(t.shape, dtype=bool)
    for start, end in source.active:
        on |= (t >= start) & (t < end)
    return on


def _gate(source: SourceSpec, n: int, fs: float) -> np.ndarray:
    if source.active is None:
        return np.ones(n)
    t = np.arange(n) / fs
    g = np.zeros(n)
    for start, end in source.active:
        # raised-cosine ramps avoid broadband clicks at on/offsets
        up = np.clip((t - start) / RAMP_SECONDS, 0, 1)
        down = np.clip((end - t) / RAMP_SECONDS, 0, 1)
        g = np.maximum(g, 0.5 - 0.5 * np.cos(np.pi * np.minimum(up, down)))
    return g


def _bandlimited_noise(rng, n: int, fs: float, f_low: float, f_high: float) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < f_low) | (f > f_high)] = 0.0
    x = np.fft.irfft(spec, n)
    rms = np.sqrt(np.mean(x**2))
    return x / rms if rms > 0 else x


def dry_signal(source: SourceSpec, spec: SceneSpec, rng) -> np.ndarray:
    """Source waveform at the talker, gain and activity gating applied."""
    n, fs = spec.num_samples, spec.sample_rate
    sig = source.signal
    kind = sig["kind"]
    if kind == "sinusoids":
        freqs = np.atleast_1d(np.asarray(sig["freqs"], dtype=float))
        amps = np.broadcast_to(np.asarray(sig.get("amps", 1.0), dtype=float), freqs.shape)
        phases = np.broadcast_to(np.asarray(sig.get("phases", 0.0), dtype=float), freqs.shape)
        t = np.arange(n) / fs
        x = np.sum(amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None]), axis=0)
    elif kind == "noise":
        x = _bandlimited_noise(rng, n, fs, sig["f_low"], sig["f_high"])
        mod_hz = sig.get("modulation_hz")
        if mod_hz:
            env = _bandlimited_noise(rng, n, fs, 0.0, mod_hz)
            x = x * np.exp(sig.get("modulation_depth", 1.0) * env)
            x /= np.sqrt(np.mean(x**2))
    elif kind == "wav":
        audio = read_wav(sig["path"])
        if not np.isclose(audio.sample_rate, fs):
            raise SceneSpecError([f"source {source.id}: WAV rate {audio.sample_rate} != scene rate {fs}"])
        x = np.resize(audio.samples[0], n)
    else:
        raise SceneSpecError([f"source {source.id}: unknown signal kind {kind!r}"])
    return source.gain * x * _gate(source, n, fs)


def _fractional_delay_taps(delay: np.ndarray, length: int) -> np.ndarray:
    """Kaiser-windowed sinc taps for delays (..., ) in samples; output (..., length).

    Only the FIR_TAPS integer positions nearest the delay are nonzero.
    """
    k = np.arange(length)
    x = k - delay[..., None]
    half = FIR_TAPS / 2
    base = np.floor(delay)[..., None]
    support = (k >= base - (half - 1)) & (k <= base + half)
    win = np.i0(KAISER_BETA * np.sqrt(np.clip(1 - (x / half) ** 2, 0, 1))) / np.i0(KAISER_BETA)
    return np.where(support, np.sinc(x) * win, 0.0)


class _Renderer:
    """Renders plane waves onto the microphones in hop-length segments."""

    def __init__(self, spec: SceneSpec, geometry: ArrayGeometry):
        self.spec = spec
        self.geometry = geometry
        fs, hop = spec.sample_rate, spec.hop
        n = spec.num_samples
        max_delay = np.max(np.linalg.norm(geometry.centered_positions, axis=1)) / geometry.speed_of_sound * fs
        self.bulk = FIR_TAPS // 2 + int(np.ceil(max_delay)) + 1
        self.ntaps = 2 * self.bulk + 1
        first = spec.window_size / 2 - hop / 2
        self.n0 = int(first - hop * np.ceil(first / hop))
        self.nseg = int(np.ceil((n - self.n0) / hop))
        self.seg_times = (self.n0 + (np.arange(self.nseg) + 0.5) * hop) / fs

    def render(self, signal: np.ndarray, array_az: np.ndarray) -> np.ndarray:
        """Mic signals (M, N) for ``signal`` arriving from ``array_az`` (one angle per segment)."""
        spec, hop, k = self.spec, self.spec.hop, self.ntaps
        n = spec.num_samples
        # delays grow with tau: later arrival -> larger sample delay
        delays = self.bulk + self.geometry.delays(array_az) * spec.sample_rate  # (nseg, M)
        taps = _fractional_delay_taps(delays, k)[..., ::-1]  # (nseg, M, K), oldest sample first
        taps = np.ascontiguousarray(np.swapaxes(taps, 1, 2))  # (nseg, K, M)
        total = self.nseg * hop
        ext = np.zeros(total + k - 1)
        lo = k - 1 - self.n0  # position of sample 0 in ext
        ext[lo : lo + n] = signal[: max(0, min(n, total + k - 1 - lo))]
        out = np.empty((total, self.geometry.num_mics))
        chunk = 64
        for j0 in range(0, self.nseg, chunk):
            j1 = min(j0 + chunk, self.nseg)
            view = as_strided(ext[j0 * hop :], shape=(j1 - j0, hop, k), strides=(hop * 8, 8, 8))
            out[j0 * hop : j1 * hop] = np.matmul(view, taps[j0:j1]).reshape(-1, out.shape[1])
        return out[-self.n0 : -self.n0 + n].T


def _dry_signals(spec: SceneSpec) -> dict[str, np.ndarray]:
    seeds = np.random.SeedSequence(spec.seed).spawn(len(spec.sources) + 1)
    return {s.id: dry_signal(s, spec, np.random.default_rng(seeds[i])) for i, s in enumerate(spec.sources)}


def _reflection_signal(dry: np.ndarray, refl: ReflectionSpec, fs: float) -> np.ndarray:
    shift = int(round(refl.delay_ms * 1e-3 * fs))
    out = np.zeros_like(dry)
    if shift < dry.size:
        out[shift:] = refl.gain * dry[: dry.size - shift]
    return out


def signal_power(spec: SceneSpec) -> float:
    """Mean per-mic power of the noiseless mixture, assuming uncorrelated components."""
    spec.validate()
    dry = _dry_signals(spec)
    p = sum(np.mean(x**2) for x in dry.values())
    for r in spec.reflections:
        p += np.mean(_reflection_signal(dry[r.source], r, spec.sample_rate) ** 2)
    return float(p)


def effective_noise_level(spec: SceneSpec) -> float:
    if spec.noise_snr_db is None:
        return spec.noise_level
    return float(np.sqrt(signal_power(spec) / 10 ** (spec.noise_snr_db / 10)))


def snr_at_mics(spec: SceneSpec, geometry: ArrayGeometry) -> np.ndarray:
    """Signal-to-noise ratio in dB at each microphone; +inf without noise."""
    sigma = effective_noise_level(spec)
    p = signal_power(spec)
    with np.errstate(divide="ignore"):
        snr = 10 * np.log10(p / sigma**2) if sigma > 0 else np.inf
    return np.full(geometry.num_mics, snr)


def synthesize(spec: SceneSpec, geometry: ArrayGeometry) -> tuple[MultichannelAudio, GroundTruth]:
    """Render the scene and its frame-aligned ground truth."""
    spec.validate()
    fs = spec.sample_rate
    n = spec.num_samples
    ren = _Renderer(spec, geometry)
    yaw_seg = interp_keyframes(spec.yaw, ren.seg_times)
    dry = _dry_signals(spec)
    by_id = {s.id: s for s in spec.sources}

    mix = np.zeros((geometry.num_mics, n))
    for s in spec.sources:
        az = interp_keyframes(s.trajectory, ren.seg_times)
        mix += ren.render(dry[s.id], normalize_angle(az - yaw_seg))
    for r in spec.reflections:
        az = interp_keyframes(by_id[r.source].trajectory, ren.seg_times) + r.azimuth_offset
        mix += ren.render(_reflection_signal(dry[r.source], r, fs), normalize_angle(az - yaw_seg))

    sigma = effective_noise_level(spec)
    if sigma > 0:
        noise_rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(len(spec.sources) + 1)[-1])
        mix += sigma * noise_rng.standard_normal(mix.shape)

    t = frame_centers(num_frames_for(n, spec.window_size, spec.hop), fs, spec.window_size, spec.hop)
    speakers = [{} for _ in t]
    for s in spec.sources:
        on = activity(s, t)
        az = normalize_angle(interp_keyframes(s.trajectory, t))
        for i in np.flatnonzero(on):
            speakers[i][s.id] = float(az[i])
    vad = np.array([bool(sp) for sp in speakers], dtype=bool)
    truth = GroundTruth(t, normalize_angle(interp_keyframes(spec.yaw, t)), vad, speakers)
    return MultichannelAudio(fs, mix), truth
