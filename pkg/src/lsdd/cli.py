"""Command-line interface: simulate, analyze, evaluate, sweep and band-map.

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .array_model import (
    ArrayGeometry,
    DoaGrid,
    SteeringSet,
    band_similarity_map,
    build_steering_set,
    glasses_geometry,
    load_geometry,
    load_steering_set,
)
from .doa_core import Algorithm, AnalysisConfig, BinEstimates, SimilarityKind, analyze
from .eval_harness import evaluate_sweep, load_truth, save_truth, write_sweep_csv
from .scene_sim import SceneSpecError, load_scene, synthesize
from .tf_transform import TFGrid, frame_centers, read_wav, stft, write_wav

log = logging.getLogger("lsdd")

ESTIMATES_HEADER = "# lsdd-doa estimates v1"
BAND_MAP_HEADER = "# lsdd-doa band-map v1"
ESTIMATE_COLUMNS = ["frame", "time_s", "bin", "freq_hz", "theta_hat_deg", "chi", "algorithm"]
SMOOTHING_PRESETS = {"none": 0, "three": 1, "nine": 4}
FIG4_ALGORITHMS = ("LSDD", "LSDDe", "dSDDe")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    geometry: str | None = None
    steering: str | None = None
    wav: str | None = None
    truth: str | None = None
    scene: str | None = None
    algorithms: list[str] = field(default_factory=lambda: list(FIG4_ALGORITHMS))
    kind: str = "cosine"
    smoothing: list[str] = field(default_factory=lambda: ["none"])
    f_low: float = 1100.0
    f_high: float = 2000.0
    delta_T_ms: list[float] = field(default_factory=lambda: [200.0, 300.0, 500.0])
    p: list[float] = field(default_factory=lambda: [1, 5, 10, 20, 50, 100])
    window_size: int = 1024
    hop: int = 512
    resolution_deg: float = 6.0
    out: str = "out"
    seed: int | None = None

    def validate(self) -> "RunConfig":
        errs = []
        if not self.algorithms:
            errs.append("algorithms: need at least one")
        for a in self.algorithms:
            try:
                Algorithm(a)
            except ValueError:
                errs.append(f"algorithms: unknown algorithm {a!r}")
        try:
            SimilarityKind(self.kind)
        except ValueError:
            errs.append(f"kind: unknown similarity kind {self.kind!r}")
        for s in self.smoothing:
            try:
                smoothing_radius(s)
            except ValueError as e:
                errs.append(f"smoothing: {e}")
        if not 0 < self.f_low < self.f_high:
            errs.append("f_low/f_high: need 0 < f_low < f_high")
        if not self.delta_T_ms or any(d <= 0 for d in self.delta_T_ms):
            errs.append("delta_T_ms: need at least one positive value")
        if not self.p or any(not 0 < p <= 100 for p in self.p):
            errs.append("p: need at least one value in (0, 100]")
        if errs:
            raise ConfigError("; ".join(errs))
        return self


def smoothing_radius(value) -> int:
    """Preset name (none/three/nine) or integer radius R."""
    if str(value) in SMOOTHING_PRESETS:
        return SMOOTHING_PRESETS[str(value)]
    try:
        r = int(value)
    except (TypeError, ValueError):
        raise ValueError(f"unknown smoothing {value!r}; use none/three/nine or an integer R") from None
    if r < 0:
        raise ValueError("smoothing radius must be >= 0")
    return r


def _geometry(path: str | None) -> ArrayGeometry:
    if path is None or path == "glasses6":
        return glasses_geometry()
    return load_geometry(path)


def _steering(cfg: RunConfig, geometry: ArrayGeometry, tf: TFGrid) -> SteeringSet:
    if cfg.steering:
        return load_steering_set(cfg.steering)
    return build_steering_set(geometry, DoaGrid.uniform(cfg.resolution_deg), tf.bin_frequencies)


def write_estimates_csv(estimates: dict, tf: TFGrid, cfg: RunConfig, radius: int, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(ESTIMATES_HEADER + "\n")
        meta = {
            "sample_rate": tf.sample_rate,
            "window_size": tf.window_size,
            "hop": tf.hop,
            "num_frames": tf.num_frames,
            "f_low": cfg.f_low,
            "f_high": cfg.f_high,
            "kind": cfg.kind,
            "smoothing_R": radius,
        }
        f.write("# " + json.dumps(meta) + "\n")
        w = csv.writer(f)
        w.writerow(ESTIMATE_COLUMNS)
        for alg, est in estimates.items():
            t_idx, f_idx = np.nonzero(est.valid)
            for t, k in zip(t_idx, f_idx):
                w.writerow(
                    [
                        t,
                        f"{est.frame_times[t]:.6f}",
                        est.bins[k],
                        f"{est.freqs[k]:.4f}",
                        f"{est.theta[t, k]:g}",
                        repr(float(est.chi[t, k])),
                        alg.value,
                    ]
                )


def read_estimates_csv(path) -> tuple[dict[Algorithm, BinEstimates], dict]:
    """Rebuild per-algorithm BinEstimates (bins absent from the file are invalid)."""
    with open(path, newline="") as f:
        header = f.readline().strip()
        if header != ESTIMATES_HEADER:
            raise ConfigError(f"{path}: not an estimates file (header {header!r})")
        meta = json.loads(f.readline().lstrip("#").strip())
        rows = list(csv.DictReader(f))
    fs, win, hop = meta["sample_rate"], meta["window_size"], meta["hop"]
    times = frame_centers(meta["num_frames"], fs, win, hop)
    all_freqs = np.arange(win // 2 + 1) * fs / win
    bins = np.flatnonzero((all_freqs >= meta["f_low"]) & (all_freqs <= meta["f_high"]))
    col = {b: i for i, b in enumerate(bins)}
    out = {}
    for alg_name in sorted({r["algorithm"] for r in rows}):
        alg = Algorithm(alg_name)
        theta = np.zeros((times.size, bins.size))
        chi = np.zeros_like(theta)
        valid = np.zeros(theta.shape, dtype=bool)
        for r in rows:
            if r["algorithm"] != alg_name:
                continue
            t, k = int(r["frame"]), col[int(r["bin"])]
            theta[t, k] = float(r["theta_hat_deg"])
            chi[t, k] = float(r["chi"])
            valid[t, k] = True
        out[alg] = BinEstimates(alg, times, bins, all_freqs[bins], theta, chi, valid)
    return out, meta


def cmd_simulate(args, cfg: RunConfig) -> int:
    spec = load_scene(cfg.scene)
    if cfg.seed is not None:
        spec.seed = cfg.seed
    geometry = _geometry(cfg.geometry or spec.geometry)
    audio, truth = synthesize(spec, geometry)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    wav_path, truth_path = out / "scene.wav", out / "truth.json"
    write_wav(wav_path, audio)
    save_truth(truth, truth_path)
    print(wav_path)
    print(truth_path)
    return 0


def _load_tf(cfg: RunConfig, geometry: ArrayGeometry) -> TFGrid:
    audio = read_wav(cfg.wav)
    if audio.num_channels != geometry.num_mics:
        raise ConfigError(
            f"channel-count mismatch: {cfg.wav} has {audio.num_channels} channels, "
            f"geometry has {geometry.num_mics} microphones"
        )
    return stft(audio, cfg.window_size, cfg.hop)


def _analysis_config(cfg: RunConfig, radius: int) -> AnalysisConfig:
    return AnalysisConfig(cfg.f_low, cfg.f_high, SimilarityKind(cfg.kind), smoothing_radius=radius)


def cmd_analyze(args, cfg: RunConfig) -> int:
    if not cfg.wav:
        raise ConfigError("analyze needs --wav")
    geometry = _geometry(cfg.geometry)
    tf = _load_tf(cfg, geometry)
    radius = smoothing_radius(cfg.smoothing[0])
    est = analyze(tf, _steering(cfg, geometry, tf), cfg.algorithms, _analysis_config(cfg, radius))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "estimates.csv"
    write_estimates_csv(est, tf, cfg, radius, path)
    print(path)
    return 0


def _emit_reports(reports, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(reports, out / "sweep.csv")
    with open(out / "report.json", "w") as f:
        json.dump({"runs": [r.to_dict() for r in reports]}, f, indent=1)
    for r in reports:
        status = f"E_bar={r.E_bar:6.2f} H_bar={r.H_bar:.3f}" if r.has_data else "no valid data"
        log.info(
            "%-6s R=%d dT=%4.0fms p=%5.1f  bins=%6d  %s",
            r.algorithm, r.smoothing_radius, r.config.delta_T * 1e3, r.config.p, r.valid_bins, status,
        )
    print(out / "sweep.csv")


def cmd_evaluate(args, cfg: RunConfig) -> int:
    if not args.estimates or not cfg.truth:
        raise ConfigError("evaluate needs --estimates and --truth")
    estimates, meta = read_estimates_csv(args.estimates)
    truth = load_truth(cfg.truth)
    dts = [d / 1000.0 for d in cfg.delta_T_ms]
    reports = []
    for alg, est in estimates.items():
        reports += evaluate_sweep(
            est, truth, dts, cfg.p, meta["f_low"], meta["f_high"], smoothing_radius=meta.get("smoothing_R", 0)
        )
    _emit_reports(reports, Path(cfg.out))
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    if cfg.scene:
        spec = load_scene(cfg.scene)
        if cfg.seed is not None:
            spec.seed = cfg.seed
        geometry = _geometry(cfg.geometry or spec.geometry)
        audio, truth = synthesize(spec, geometry)
        tf = stft(audio, cfg.window_size, cfg.hop)
    elif cfg.wav and cfg.truth:
        geometry = _geometry(cfg.geometry)
        tf = _load_tf(cfg, geometry)
        truth = load_truth(cfg.truth)
    else:
        raise ConfigError("sweep needs --scene, or --wav with --truth")
    steering = _steering(cfg, geometry, tf)
    dts = [d / 1000.0 for d in cfg.delta_T_ms]
    reports = []
    for s in cfg.smoothing:
        radius = smoothing_radius(s)
        est = analyze(tf, steering, cfg.algorithms, _analysis_config(cfg, radius))
        for e in est.values():
            reports += evaluate_sweep(e, truth, dts, cfg.p, cfg.f_low, cfg.f_high, smoothing_radius=radius)
    _emit_reports(reports, Path(cfg.out))
    log.info("sweep finished in %.1f s", time.perf_counter() - t0)
    return 0


def cmd_band_map(args, cfg: RunConfig) -> int:
    geometry = _geometry(cfg.geometry)
    fs = args.sample_rate
    freqs = np.arange(cfg.window_size // 2 + 1) * fs / cfg.window_size
    freqs = freqs[freqs <= args.f_max]
    steering = build_steering_set(geometry, DoaGrid.uniform(cfg.resolution_deg), freqs)
    try:
        lam = band_similarity_map(steering, args.reference)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "band_map.csv"
    write_band_map_csv(lam, freqs, steering.grid.azimuths, args.reference, path)
    print(path)
    return 0


def write_band_map_csv(lam, freqs, azimuths, reference, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"{BAND_MAP_HEADER} reference_deg={reference:g}\n")
        w = csv.writer(f)
        w.writerow(["freq_hz"] + [f"az_{a:g}" for a in azimuths])
        for fr, row in zip(freqs, lam):
            w.writerow([f"{fr:.4f}"] + [f"{v:.6f}" for v in row])


def read_band_map_csv(path):
    with open(path, newline="") as f:
        header = f.readline().strip()
        if not header.startswith(BAND_MAP_HEADER):
            raise ValueError(f"{path}: not a band-map file")
        rows = list(csv.reader(f))
    azimuths = np.array([float(c[3:]) for c in rows[0][1:]])
    data = np.array(rows[1:], dtype=float)
    return data[:, 0], azimuths, data[:, 1:]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsdd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of RunConfig fields; overrides flags")
        sp.add_argument(
            "--geometry",
            help="geometry JSON (speed_of_sound, mic_positions); channel order of the WAV must "
            "match mic order. Default: bundled 6-mic glasses fixture",
        )
        sp.add_argument("--out", default="out", help="output directory")
        return sp

    def analysis(sp):
        sp.add_argument("--steering", help="measured steering set (.npz) instead of free-field model")
        sp.add_argument("--algorithms", nargs="+", default=list(FIG4_ALGORITHMS), choices=[a.value for a in Algorithm])
        sp.add_argument("--kind", default="cosine", choices=[k.value for k in SimilarityKind])
        sp.add_argument("--smoothing", nargs="+", default=["none"], help="none|three|nine or integer R")
        sp.add_argument("--f-low", type=float, default=1100.0)
        sp.add_argument("--f-high", type=float, default=2000.0)
        sp.add_argument("--window-size", type=int, default=1024)
        sp.add_argument("--hop", type=int, default=512)
        sp.add_argument("--resolution-deg", type=float, default=6.0)

    def evaluation(sp):
        sp.add_argument("--truth", help="ground-truth JSON")
        sp.add_argument("--delta-t-ms", dest="delta_T_ms", type=float, nargs="+", default=[200.0, 300.0, 500.0])
        sp.add_argument("--p", type=float, nargs="+", default=[1, 5, 10, 20, 50, 100])

    sp = common(sub.add_parser("simulate", help="render a scene spec to WAV + ground truth"))
    sp.add_argument("scene", help="scene spec JSON")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("analyze", help="per-bin DOA/DPD estimates for a WAV"))
    sp.add_argument("--wav", required=True)
    analysis(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = common(sub.add_parser("evaluate", help="E_bar/H_bar for an estimates file"))
    sp.add_argument("--estimates", required=True)
    evaluation(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = common(sub.add_parser("sweep", help="analyze + evaluate over algorithms, smoothing, dT and p"))
    sp.add_argument("--scene")
    sp.add_argument("--wav")
    sp.add_argument("--seed", type=int)
    analysis(sp)
    evaluation(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = common(sub.add_parser("band-map", help="steering similarity vs frequency for one reference direction"))
    sp.add_argument("--reference", type=float, default=0.0, help="reference azimuth, degrees (on grid)")
    sp.add_argument("--sample-rate", type=float, default=48000.0)
    sp.add_argument("--f-max", type=float, default=8000.0)
    sp.add_argument("--window-size", type=int, default=1024)
    sp.add_argument("--resolution-deg", type=float, default=6.0)
    sp.set_defaults(func=cmd_band_map)
    return p


def _run_config(args) -> RunConfig:
    known = RunConfig.__dataclass_fields__
    values = {k: v for k, v in vars(args).items() if k in known and v is not None}
    cfg = RunConfig(**values)
    if args.config:
        with open(args.config) as f:
            overrides = json.load(f)
        unknown = set(overrides) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = RunConfig(**{**asdict(cfg), **overrides})
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _run_config(args)
        return args.func(args, cfg)
    except (ConfigError, SceneSpecError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
