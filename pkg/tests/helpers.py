"""Independent reference implementations used as test oracles."""

import math

import numpy as np

from lsdd.doa_core import Algorithm, BinEstimates
from lsdd.eval_harness import GroundTruth


def angle_error(a, b):
    d = abs((a - b) % 360.0)
    return min(d, 360.0 - d)


def reference_evaluation(theta, chi, valid, freqs, frame_times, truth, f_low, f_high, delta_T, p, hit=10.0):
    """Plain-loop block evaluation: returns (E_bar, H_bar, per-block bin counts)."""
    blocks = {}
    for t, ft in enumerate(frame_times):
        if not truth.vad[t]:
            continue
        b = int(math.floor((ft + 1e-9) / delta_T))
        for f, fr in enumerate(freqs):
            if valid[t, f] and f_low <= fr <= f_high:
                blocks.setdefault(b, []).append((t, f))
    es, hs, counts = [], [], []
    for b in sorted(blocks):
        bins = blocks[b]
        ordered = sorted((chi[t, f] for t, f in bins), reverse=True)
        k = max(1, math.ceil(round(p * len(bins) / 100.0, 9)))
        lam = ordered[k - 1]
        errs = []
        for t, f in bins:
            if chi[t, f] < lam or not truth.speakers[t]:
                continue
            room = (theta[t, f] + truth.yaw[t]) % 360.0
            errs.append(min(angle_error(room, a) for a in truth.speakers[t].values()))
        if errs:
            es.append(sum(errs) / len(errs))
            hs.append(sum(e <= hit for e in errs) / len(errs))
            counts.append(len(errs))
    if not es:
        return float("nan"), float("nan"), []
    return sum(es) / len(es), sum(hs) / len(hs), counts


def random_case(rng, n_frames=40, n_bins=12, hop_s=512 / 48000):
    """Random estimates plus truth with VAD gaps, multiple speakers and a moving yaw."""
    frame_times = (np.arange(n_frames) * 512 + 512) / 48000.0
    freqs = np.linspace(1000.0, 2100.0, n_bins)
    theta = rng.choice(np.arange(0, 360, 6.0), size=(n_frames, n_bins))
    chi = rng.choice(np.linspace(0, 1, 7), size=(n_frames, n_bins))  # coarse values force ties
    valid = rng.random((n_frames, n_bins)) > 0.1
    chi = np.where(valid, chi, 0.0)
    vad = rng.random(n_frames) > 0.2
    speakers = []
    for t in range(n_frames):
        n_spk = int(rng.integers(0, 3)) if vad[t] else 0
        speakers.append({f"s{i}": float(rng.uniform(0, 360)) for i in range(n_spk)})
    yaw = rng.uniform(-30, 30, n_frames)
    est = BinEstimates(Algorithm.LSDD, frame_times, np.arange(n_bins), freqs, theta, chi, valid)
    return est, GroundTruth(frame_times, yaw, vad, speakers)
