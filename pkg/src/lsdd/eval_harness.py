"""Block-based evaluation of per-bin DOA estimates against ground truth.

Bins are grouped into consecutive blocks of length delta_T. Within a block a
bin is valid when it is in band, in the block, voice-active, and its DPD
measure reaches the block's percentile threshold. Per-block mean error E and
hit ratio H are averaged over non-empty blocks into E_bar and H_bar.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .doa_core import BinEstimates

TRUTH_FORMAT = "lsdd-truth"
TRUTH_VERSION = 1
SWEEP_CSV_HEADER = "# lsdd-doa sweep v1"
SWEEP_COLUMNS = ["p", "delta_T_ms", "algorithm", "E_bar_deg", "H_bar_ratio", "smoothing_R", "valid_bins"]


def normalize_angle(deg):
    return np.mod(deg, 360.0)


def to_room_frame(theta_hat, yaw):
    """Array-frame azimuth to room frame: (theta + yaw) mod 360.

    Yaw is the room-frame azimuth of the array's +x axis.
    """
    return normalize_angle(np.asarray(theta_hat, dtype=float) + np.asarray(yaw, dtype=float))


def to_array_frame(psi, yaw):
    return normalize_angle(np.asarray(psi, dtype=float) - np.asarray(yaw, dtype=float))


def circular_error(psi, theta):
    d = np.abs(normalize_angle(np.asarray(psi, dtype=float) - np.asarray(theta, dtype=float)))
    return np.minimum(d, 360.0 - d)


def threshold_count(n: int, p: float) -> int:
    """Number of bins the top-p% rule keeps out of n (at least one)."""
    return max(1, math.ceil(round(p * n / 100.0, 9)))


def percentile_threshold(chis, p: float) -> float:
    """The k-th largest chi, k = ceil(p/100 * n).

    Bins with chi >= lambda pass, so ties at lambda may admit more than k bins.
    """
    chis = np.asarray(chis, dtype=float).ravel()
    if chis.size == 0:
        raise ValueError("cannot threshold an empty set of bins")
    if not 0 < p <= 100:
        raise ValueError("p must be in (0, 100]")
    k = threshold_count(chis.size, p)
    return float(np.partition(chis, chis.size - k)[chis.size - k])


@dataclass
class GroundTruth:
    """Per-frame truth: room-frame speaker azimuths, array yaw and VAD.

    ``speakers`` holds one dict per frame mapping speaker id -> azimuth.
    """

    frame_times: np.ndarray
    yaw: np.ndarray
    vad: np.ndarray
    speakers: list[dict[str, float]]

    def __post_init__(self):
        self.frame_times = np.asarray(self.frame_times, dtype=float)
        self.yaw = normalize_angle(np.asarray(self.yaw, dtype=float))
        self.vad = np.asarray(self.vad, dtype=bool)
        self.speakers = [{str(k): float(v) % 360.0 for k, v in s.items()} for s in self.speakers]
        n = self.frame_times.size
        if not (self.yaw.size == self.vad.size == len(self.speakers) == n):
            raise ValueError("ground-truth fields must all have one entry per frame")

    def __len__(self) -> int:
        return self.frame_times.size

    def resample(self, frame_times) -> "GroundTruth":
        """Hold VAD/speakers from the latest record at or before each frame; interpolate yaw."""
        frame_times = np.asarray(frame_times, dtype=float)
        src = np.clip(np.searchsorted(self.frame_times, frame_times, side="right") - 1, 0, len(self) - 1)
        yaw = np.interp(frame_times, self.frame_times, np.rad2deg(np.unwrap(np.deg2rad(self.yaw))))
        return GroundTruth(frame_times, yaw, self.vad[src], [self.speakers[i] for i in src])

    def to_dict(self) -> dict:
        frames = [
            {
                "frame_time_s": float(t),
                "array_yaw_deg": float(y),
                "vad": int(v),
                "speakers": [{"id": k, "azimuth_deg_room": a} for k, a in s.items()],
            }
            for t, y, v, s in zip(self.frame_times, self.yaw, self.vad, self.speakers)
        ]
        return {"format": TRUTH_FORMAT, "version": TRUTH_VERSION, "frames": frames}

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        frames = data["frames"]
        return cls(
            frame_times=[fr["frame_time_s"] for fr in frames],
            yaw=[fr.get("array_yaw_deg", 0.0) for fr in frames],
            vad=[bool(fr["vad"]) for fr in frames],
            speakers=[{str(s["id"]): s["azimuth_deg_room"] for s in fr.get("speakers", [])} for fr in frames],
        )


def save_truth(truth: GroundTruth, path) -> None:
    with open(path, "w") as f:
        json.dump(truth.to_dict(), f, indent=1)


def load_truth(path) -> GroundTruth:
    with open(path) as f:
        return GroundTruth.from_dict(json.load(f))


def align_truth(truth: GroundTruth, frame_times, tol: float = 1e-6) -> GroundTruth:
    """Return truth on exactly ``frame_times``.

    Truth recorded per frame must match the STFT timeline; otherwise the
    records are treated as timestamps and resampled.
    """
    frame_times = np.asarray(frame_times, dtype=float)
    if len(truth) == frame_times.size and np.allclose(truth.frame_times, frame_times, atol=tol, rtol=0):
        return truth
    if len(truth) == 0:
        raise ValueError("ground truth is empty")
    lo, hi = truth.frame_times[0], truth.frame_times[-1]
    hop = np.median(np.diff(frame_times)) if frame_times.size > 1 else 0.0
    if frame_times[0] < lo - hop or frame_times[-1] > hi + hop:
        raise ValueError(
            f"timeline mismatch: frames span [{frame_times[0]:.4f}, {frame_times[-1]:.4f}] s "
            f"but ground truth covers only [{lo:.4f}, {hi:.4f}] s"
        )
    return truth.resample(frame_times)


def nearest_truth_error(theta_room: float, speakers: dict[str, float]) -> float:
    """Smallest circular error to any active speaker; NaN when nobody is active."""
    if not speakers:
        return float("nan")
    return float(np.min(circular_error(np.fromiter(speakers.values(), float), theta_room)))


def bin_errors(estimates: BinEstimates, truth: GroundTruth) -> np.ndarray:
    """(T, F) circular error of each bin's room-frame DOA to the nearest active speaker."""
    theta_room = to_room_frame(estimates.theta, truth.yaw[:, None])
    err = np.full(theta_room.shape, np.nan)
    for t, spk in enumerate(truth.speakers):
        if spk:
            az = np.fromiter(spk.values(), float)
            err[t] = np.min(circular_error(az[:, None], theta_room[t][None, :]), axis=0)
    return err


@dataclass
class EvalConfig:
    f_low: float = 1100.0
    f_high: float = 2000.0
    delta_T: float = 0.2
    p: float = 1.0
    hit_threshold: float = 10.0

    def __post_init__(self):
        if not 0 < self.f_low < self.f_high:
            raise ValueError("need 0 < f_low < f_high")
        if not self.delta_T > 0:
            raise ValueError("delta_T must be > 0")
        if not 0 < self.p <= 100:
            raise ValueError("p must be in (0, 100]")


@dataclass
class BlockReport:
    T: float
    valid_bin_count: int
    E: float
    H: float


@dataclass
class RunReport:
    E_bar: float
    H_bar: float
    blocks: list[BlockReport]
    config: EvalConfig
    algorithm: str = ""
    smoothing_radius: int = 0

    @property
    def has_data(self) -> bool:
        return bool(self.blocks)

    @property
    def valid_bins(self) -> int:
        return sum(b.valid_bin_count for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "smoothing_R": self.smoothing_radius,
            "E_bar_deg": None if not self.has_data else self.E_bar,
            "H_bar_ratio": None if not self.has_data else self.H_bar,
            "status": "ok" if self.has_data else "no valid data",
            "valid_bins": self.valid_bins,
            "config": asdict(self.config),
            "blocks": [asdict(b) for b in self.blocks],
        }


def block_index(frame_times, delta_T: float) -> np.ndarray:
    """Block of each frame; blocks are [b*dT, (b+1)*dT) from the recording start."""
    return np.floor((np.asarray(frame_times, dtype=float) + 1e-9) / delta_T).astype(int)


def candidate_mask(estimates: BinEstimates, truth: GroundTruth, f_low: float, f_high: float) -> np.ndarray:
    """Bins meeting the band and voice-activity conditions (and carrying an estimate)."""
    in_band = (estimates.freqs >= f_low) & (estimates.freqs <= f_high)
    return estimates.valid & in_band[None, :] & truth.vad[:, None]


def select_valid_bins(
    estimates: BinEstimates, truth: GroundTruth, config: EvalConfig, block_center: float
) -> np.ndarray:
    """Boolean (T, F) mask of the valid bins of the block centered at ``block_center``."""
    t = estimates.frame_times
    half = 0.5 * config.delta_T
    in_block = (t >= block_center - half - 1e-9) & (t < block_center + half - 1e-9)
    mask = candidate_mask(estimates, truth, config.f_low, config.f_high) & in_block[:, None]
    if not mask.any():
        return mask
    lam = percentile_threshold(estimates.chi[mask], config.p)
    return mask & (estimates.chi >= lam)


class _Evaluator:
    """Shares per-bin errors and block membership across a (p, delta_T) sweep."""

    def __init__(self, estimates: BinEstimates, truth: GroundTruth, f_low: float, f_high: float):
        truth = align_truth(truth, estimates.frame_times)
        self.estimates = estimates
        self.truth = truth
        self.errors = bin_errors(estimates, truth)
        self.candidates = candidate_mask(estimates, truth, f_low, f_high)
        self.f_low, self.f_high = f_low, f_high

    def run(self, delta_T: float, p: float, hit_threshold: float = 10.0) -> RunReport:
        config = EvalConfig(self.f_low, self.f_high, delta_T, p, hit_threshold)
        blk = block_index(self.estimates.frame_times, delta_T)
        chi = self.estimates.chi
        reports = []
        for b in np.unique(blk):
            rows = np.flatnonzero(blk == b)
            cand = self.candidates[rows]
            if not cand.any():
                continue
            c_chi = chi[rows][cand]
            lam = percentile_threshold(c_chi, p)
            err = self.errors[rows][cand][c_chi >= lam]
            err = err[~np.isnan(err)]  # no active speaker -> excluded
            if err.size == 0:
                continue
            reports.append(
                BlockReport(
                    T=(b + 0.5) * delta_T,
                    valid_bin_count=int(err.size),
                    E=float(err.mean()),
                    H=float(np.mean(err <= hit_threshold)),
                )
            )
        if reports:
            e_bar = float(np.mean([r.E for r in reports]))
            h_bar = float(np.mean([r.H for r in reports]))
        else:
            e_bar = h_bar = float("nan")
        return RunReport(e_bar, h_bar, reports, config, estimates_name(self.estimates))


def estimates_name(estimates: BinEstimates) -> str:
    return getattr(estimates.algorithm, "value", str(estimates.algorithm))


def evaluate_run(estimates: BinEstimates, truth: GroundTruth, config: EvalConfig) -> RunReport:
    """E_bar / H_bar for one configuration; ``has_data`` is False when no block had valid bins."""
    return _Evaluator(estimates, truth, config.f_low, config.f_high).run(
        config.delta_T, config.p, config.hit_threshold
    )


def evaluate_sweep(
    estimates: BinEstimates,
    truth: GroundTruth,
    delta_Ts,
    ps,
    f_low: float = 1100.0,
    f_high: float = 2000.0,
    hit_threshold: float = 10.0,
    smoothing_radius: int = 0,
) -> list[RunReport]:
    ev = _Evaluator(estimates, truth, f_low, f_high)
    out = []
    for dt in delta_Ts:
        for p in ps:
            rep = ev.run(dt, p, hit_threshold)
            rep.smoothing_radius = smoothing_radius
            out.append(rep)
    return out


def write_sweep_csv(reports: list[RunReport], path) -> None:
    with open(path, "w", newline="") as f:
        f.write(SWEEP_CSV_HEADER + "\n")
        w = csv.writer(f)
        w.writerow(SWEEP_COLUMNS)
        for r in reports:
            w.writerow(
                [
                    f"{r.config.p:g}",
                    f"{r.config.delta_T * 1000:g}",
                    r.algorithm,
                    "" if not r.has_data else f"{r.E_bar:.6f}",
                    "" if not r.has_data else f"{r.H_bar:.6f}",
                    r.smoothing_radius,
                    r.valid_bins,
                ]
            )


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        header = f.readline().strip()
        if header != SWEEP_CSV_HEADER:
            raise ValueError(f"unexpected sweep CSV header {header!r}")
        rows = []
        for row in csv.DictReader(f):
            rows.append(
                {
                    "p": float(row["p"]),
                    "delta_T_ms": float(row["delta_T_ms"]),
                    "algorithm": row["algorithm"],
                    "E_bar_deg": float(row["E_bar_deg"]) if row["E_bar_deg"] else None,
                    "H_bar_ratio": float(row["H_bar_ratio"]) if row["H_bar_ratio"] else None,
                    "smoothing_R": int(row["smoothing_R"]),
                    "valid_bins": int(row["valid_bins"]),
                }
            )
        return rows
