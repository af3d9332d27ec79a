"""Command-line harness.

Every subcommand is a pure function of (config, seed, input files): outputs
are byte-identical across runs with the same inputs.  Each run writes a
`run_report.json` (command, config hash, seed, metrics, artifact paths) into
the output directory; wall-clock timing goes to a separate `timing.json` so
the report itself stays byte-stable.  On failure all partially written
outputs are removed.

Exit codes: 0 success, 2 configuration error, 3 runtime failure,
4 acceptance-check failure (`pipeline --check`).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import fftgen, lateral, metrics, preprocess, timegan
from .config import (config_hash, lateral_train_config, load_config,
                     sim_config, timegan_config)
from .core import TimeSeries, wrap_angle
from .simulator import ConfigError, SessionTrace, SimConfig, run_session


class CheckFailure(Exception):
    """An acceptance check requested via `pipeline --check` failed."""


class _Run:
    """Tracks files written by one command so they can be removed on failure
    and listed in the run report."""

    def __init__(self, command, cfg, seed, out_dir):
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.out_dir = out_dir
        self.artifacts = []
        self.started = time.monotonic()
        os.makedirs(out_dir, exist_ok=True)

    def path(self, *parts):
        p = os.path.join(self.out_dir, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        self.artifacts.append(p)
        return p

    def write_json(self, name, payload):
        with open(self.path(name), "w") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    def finish(self, metrics_map):
        report = {
            "command": self.command,
            "config_hash": config_hash(self.cfg),
            "seed": self.seed,
            "metrics": metrics_map,
            "artifacts": sorted(os.path.relpath(a, self.out_dir)
                                for a in self.artifacts),
        }
        with open(os.path.join(self.out_dir, "run_report.json"), "w") as fh:
            json.dump(report, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        with open(os.path.join(self.out_dir, "timing.json"), "w") as fh:
            json.dump({"wall_clock_s": time.monotonic() - self.started},
                      fh, sort_keys=True)
            fh.write("\n")
        return report

    def cleanup(self):
        for p in self.artifacts:
            try:
                os.remove(p)
            except OSError:
                pass


# ---------------------------------------------------------------------------
# corpus helpers


def _load_corpus(directory):
    names = sorted(f for f in os.listdir(directory) if f.endswith(".csv"))
    if not names:
        raise ConfigError(f"no rotation CSVs in {directory}")
    return [preprocess.load_rotation_csv(os.path.join(directory, f))
            for f in names]


def _load_traces(paths):
    if not paths:
        raise ConfigError("at least one trace CSV is required")
    return [SessionTrace.from_csv(p) for p in paths]


def _windows_from_traces(traces, variant, lookback, horizon):
    windows = []
    for tr in traces:
        windows.extend(lateral.build_windows(tr, variant, lookback, horizon))
    return windows


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg, args, run):
    overrides = {}
    if args.users is not None:
        overrides["num_users"] = args.users
    if args.path_kind is not None:
        overrides["path_kind"] = args.path_kind
    if args.duration is not None:
        overrides["duration"] = args.duration
    sim = sim_config(cfg)
    if overrides:
        d = {f: getattr(sim, f) for f in (
            "side", "num_users", "path_kind", "duration", "rate",
            "thresholds", "speed_mean", "speed_sigma",
            "reset_trigger_distance", "user_safety_distance",
            "wall_safety_distance", "reset_turn_rate", "user_weight",
            "curvature_feedback", "max_turn_rate", "turn_knot_spacing")}
        d.update(overrides)
        sim = SimConfig(**d)

    trace = run_session(sim, run.seed)
    trace.to_csv(run.path("trace.csv"))
    with open(run.path("reset_events.csv"), "w", newline="") as fh:
        fh.write("user,time,trigger,physical_executed,virtual_executed\n")
        for ev in trace.reset_events:
            fh.write(f"{ev.user_id},{ev.time:.6f},{ev.trigger},"
                     f"{ev.physical_executed:.6f},{ev.virtual_executed:.6f}\n")

    mind = None
    if trace.num_users > 1:
        mind = math.inf
        for a in range(trace.num_users):
            for b in range(a + 1, trace.num_users):
                d = np.hypot(trace.phys[a, :, 0] - trace.phys[b, :, 0],
                             trace.phys[a, :, 1] - trace.phys[b, :, 1])
                mind = min(mind, float(d.min()))
    return {
        "num_users": sim.num_users,
        "path_kind": sim.path_kind,
        "duration_s": sim.duration,
        "rate_hz": sim.rate,
        "num_resets": len(trace.reset_events),
        "min_inter_user_distance_m": mind,
    }


def cmd_train_lateral(cfg, args, run):
    lat = cfg["lateral"]
    variant = args.variant or lat["variant"]
    traces = _load_traces(args.traces)
    windows = _windows_from_traces(traces, variant, lat["lookback"],
                                   lat["horizon"])
    model = lateral.train_predictor(
        windows, config=lateral_train_config(cfg), seed=run.seed,
        rate=traces[0].rate, min_windows=lat["min_windows"])
    model.save(run.path("model.json"))
    return {"variant": variant, "num_windows": len(windows),
            "num_params": model.net.num_params()}


def _per_sample_csv(path, windows, preds, report):
    with open(path, "w", newline="") as fh:
        fh.write("user,end_index,pred_x,pred_y,true_x,true_y,se\n")
        for w, p, se in zip(windows, preds, report.se):
            fh.write(f"{w.user},{w.end_index},{p[0]:.6f},{p[1]:.6f},"
                     f"{w.target[0]:.6f},{w.target[1]:.6f},{se:.6f}\n")


def cmd_eval_lateral(cfg, args, run):
    lat = cfg["lateral"]
    model = lateral.PredictorModel.load(args.model)
    traces = _load_traces(args.traces)
    windows = _windows_from_traces(traces, model.variant, model.lookback,
                                   model.horizon)
    if not windows:
        raise ConfigError("traces yield no evaluation windows")
    report, preds = lateral.eval_se(
        model, windows,
        scenario={"num_users": traces[0].num_users, "lookback": lat["lookback"]})
    run.write_json("se_report.json", report.to_dict())
    _per_sample_csv(run.path("per_sample.csv"), windows, preds, report)
    return {"variant": model.variant, "num_windows": len(windows),
            "mean_se_m2": report.mean, "median_se_m2": report.median}


def cmd_make_rotations(cfg, args, run):
    rot = cfg["rotations"]
    series = preprocess.make_rotation_corpus(
        num_series=rot["num_series"], duration_s=rot["duration_s"],
        rate=rot["rate"], seed=run.seed)
    for i, s in enumerate(series):
        preprocess.save_rotation_csv(s, run.path(f"rotation_{i:03d}.csv"))
    return {"num_series": len(series), "rate_hz": rot["rate"],
            "samples_per_series": series[0].n_samples}


def cmd_train_timegan(cfg, args, run):
    pre = cfg["preprocess"]
    tg = cfg["timegan"]
    corpus = _load_corpus(args.corpus)
    windows, transformer, deg_windows = preprocess.preprocess_series(
        corpus, to_rate=pre["target_rate"], window_len=pre["window_len"],
        stride=pre["stride"])
    if windows.shape[0] > tg["max_windows"]:
        # deterministic subsample to the training budget
        idx = np.linspace(0, windows.shape[0] - 1, tg["max_windows"]).astype(int)
        windows = windows[idx]
    model, checkpoints, history = timegan.timegan_train(
        windows, config=timegan_config(cfg), seed=run.seed)
    reference_yaw = deg_windows[..., 0].ravel()
    selected, kls = timegan.select_checkpoint(
        checkpoints, transformer, reference_yaw,
        seed=run.seed, bucket_width=cfg["metrics"]["bucket_width"],
        fixed_epoch=tg["fixed_epoch"])
    run.write_json("model.json", selected.to_dict())
    run.write_json("transformer.json", transformer.to_dict())
    run.write_json("checkpoint_kl.json",
                   {str(epoch): kl for epoch, kl in sorted(kls.items())})
    return {
        "num_windows": int(windows.shape[0]),
        "selected_epoch": selected.epoch,
        "selected_yaw_kl_nats": kls.get(selected.epoch),
        "num_checkpoints": len(checkpoints),
        "final_reconstruction_mse": model.reconstruction_mse,
    }


def cmd_generate(cfg, args, run):
    pre = cfg["preprocess"]
    with open(args.model) as fh:
        model = timegan.TimeGanModel.from_dict(json.load(fh))
    with open(args.transformer) as fh:
        transformer = preprocess.QuantileTransformer.from_dict(json.load(fh))
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    gen = timegan.timegan_generate(model, args.count, run.seed)
    deg = preprocess.postprocess(gen, transformer)

    per_file = cfg["generate"]["windows_per_file"]
    n_files = 0
    for lo in range(0, deg.shape[0], per_file):
        chunk = deg[lo:lo + per_file].reshape(-1, 3)
        series = TimeSeries(rate=pre["target_rate"], values={
            "yaw": chunk[:, 0], "pitch": chunk[:, 1], "roll": chunk[:, 2]})
        preprocess.save_rotation_csv(
            series, run.path(f"generated_{n_files:03d}.csv"))
        n_files += 1
    return {"num_windows": args.count, "window_len": int(deg.shape[1]),
            "num_files": n_files}


def cmd_fft_baseline(cfg, args, run):
    pre = cfg["preprocess"]
    fft = cfg["fft"]
    corpus = _load_corpus(args.corpus)
    down = [preprocess.lowpass_downsample(
        TimeSeries(rate=s.rate, values={
            "yaw": preprocess.unwrap_series(wrap_angle(s.values["yaw"])),
            "pitch": s.values["pitch"], "roll": s.values["roll"]}),
        pre["target_rate"]) for s in corpus]
    model = fftgen.fft_baseline_fit(down)
    run.write_json("psd_model.json", model.to_dict())
    for i in range(fft["num_series"]):
        series = fftgen.fft_baseline_generate(
            model, length=fft["length"], seed=run.seed * 1000 + i)
        preprocess.save_rotation_csv(series, run.path(f"fft_{i:03d}.csv"))
    return {"num_series": fft["num_series"], "length": fft["length"],
            "fit_length": model.fit_length}


def cmd_eval_dist(cfg, args, run):
    width = cfg["metrics"]["bucket_width"]
    corpus_a = _load_corpus(args.a)
    corpus_b = _load_corpus(args.b)
    kls = {}
    for channel in preprocess.CHANNELS:
        sa = np.concatenate([s.values[channel] for s in corpus_a])
        sb = np.concatenate([s.values[channel] for s in corpus_b])
        if channel == "yaw":
            sa, sb = wrap_angle(sa), wrap_angle(sb)
        ha = metrics.histogram_pdf(sa, width)
        hb = metrics.histogram_pdf(sb, width)
        pa, pb = metrics.align_histograms(ha, hb)
        kls[channel] = metrics.kl_divergence(pa, pb)
        with open(run.path(f"hist_{channel}.csv"), "w", newline="") as fh:
            fh.write("center,mass_a,mass_b\n")
            for c, ma, mb in zip(pa.centers, pa.masses, pb.masses):
                fh.write(f"{c:.6f},{ma:.9f},{mb:.9f}\n")
    run.write_json("kl_report.json",
                   {f"kl_{c}_nats": v for c, v in kls.items()})
    return {f"kl_{c}_nats": v for c, v in kls.items()}


def cmd_beam_eval(cfg, args, run):
    beam = cfg["beam"]
    ap = tuple(beam["ap"])
    width = beam["beamwidth"]
    data = np.genfromtxt(args.predictions, delimiter=",", names=True)
    required = {"pred_x", "pred_y", "true_x", "true_y"}
    if not required.issubset(set(data.dtype.names or ())):
        raise ConfigError(
            "predictions CSV must have columns pred_x,pred_y,true_x,true_y")
    mis, covered = [], []
    for row in np.atleast_1d(data):
        r = metrics.beam_coverage((row["pred_x"], row["pred_y"]),
                                  (row["true_x"], row["true_y"]), ap, width)
        mis.append(r["misalignment"])
        covered.append(r["covered"])
    mis = np.asarray(mis)
    with open(run.path("beam_per_sample.csv"), "w", newline="") as fh:
        fh.write("misalignment,covered\n")
        for m, c in zip(mis, covered):
            fh.write(f"{m:.6f},{int(c)}\n")
    return {
        "beamwidth_deg": width,
        "num_samples": int(mis.size),
        "coverage_rate": float(np.mean(covered)),
        "mean_misalignment_deg": float(mis.mean()),
        "median_misalignment_deg": float(np.median(mis)),
    }


def cmd_pipeline(cfg, args, run):
    """End-to-end seeded run: simulate, lateral train/eval for both
    variants, rotation corpus, TimeGAN + FFT generation, distribution and
    beam reports.  With --check, verifies invariants and fails the run if
    any is violated."""
    pl = cfg["pipeline"]
    seed = run.seed
    summary = {}
    checks = []

    base_sim = sim_config(cfg)
    lat = cfg["lateral"]
    per_sample_path = None

    for users, kind in (tuple(s) for s in pl["scenarios"]):
        tag = f"{users}u_{kind}"
        d = {f: getattr(base_sim, f) for f in (
            "side", "rate", "thresholds", "speed_mean", "speed_sigma",
            "reset_trigger_distance", "user_safety_distance",
            "wall_safety_distance", "reset_turn_rate", "user_weight",
            "curvature_feedback", "max_turn_rate", "turn_knot_spacing")}
        sim = SimConfig(num_users=users, path_kind=kind,
                        duration=pl["sim_duration"], **d)
        trace = run_session(sim, seed)
        trace.to_csv(run.path("sim", f"trace_{tag}.csv"))

        if users > 1:
            mind = min(
                float(np.hypot(trace.phys[a, :, 0] - trace.phys[b, :, 0],
                               trace.phys[a, :, 1] - trace.phys[b, :, 1]).min())
                for a in range(users) for b in range(a + 1, users))
            checks.append((f"min inter-user distance {tag}", mind >= 0.3))
        inb = bool((trace.phys >= 0).all() and (trace.phys <= sim.side).all())
        checks.append((f"bounds {tag}", inb))
        checks.append((f"reset identity {tag}", all(
            abs(ev.virtual_executed - 2 * ev.physical_executed) <= 1e-6
            for ev in trace.reset_events)))

        scen = {}
        for variant in ("baseline", "virtual"):
            windows = lateral.build_windows(trace, variant, lat["lookback"],
                                            lat["horizon"])
            cut = int(round(len(windows) * 0.8))
            model = lateral.train_predictor(
                windows[:cut], config=lateral_train_config(cfg), seed=seed,
                rate=sim.rate, min_windows=lat["min_windows"])
            run.write_json(os.path.join("lateral", f"model_{tag}_{variant}.json"),
                           model.to_dict())
            report, preds = lateral.eval_se(
                model, windows[cut:], scenario={"num_users": users,
                                                "path_kind": kind})
            run.write_json(os.path.join("lateral", f"se_{tag}_{variant}.json"),
                           report.to_dict())
            if variant == "virtual" and users > 1 and per_sample_path is None:
                per_sample_path = run.path("lateral", f"per_sample_{tag}.csv")
                _per_sample_csv(per_sample_path, windows[cut:], preds, report)
            scen[variant] = report.mean
        summary[f"se_{tag}"] = scen

    rot = cfg["rotations"]
    corpus = preprocess.make_rotation_corpus(
        num_series=rot["num_series"], duration_s=pl["rotation_duration_s"],
        rate=rot["rate"], seed=seed)
    corpus_dir = os.path.join(run.out_dir, "rotations")
    os.makedirs(corpus_dir, exist_ok=True)
    for i, s in enumerate(corpus):
        preprocess.save_rotation_csv(
            s, run.path("rotations", f"rotation_{i:03d}.csv"))

    pre = cfg["preprocess"]
    tg = cfg["timegan"]
    windows, transformer, deg_windows = preprocess.preprocess_series(
        corpus, to_rate=pre["target_rate"], window_len=pre["window_len"],
        stride=pre["stride"])
    if windows.shape[0] > tg["max_windows"]:
        idx = np.linspace(0, windows.shape[0] - 1, tg["max_windows"]).astype(int)
        windows = windows[idx]
    model, checkpoints, _ = timegan.timegan_train(
        windows, config=timegan_config(cfg), seed=seed)
    reference_yaw = deg_windows[..., 0].ravel()
    selected, kls = timegan.select_checkpoint(
        checkpoints, transformer, reference_yaw, seed=seed,
        bucket_width=cfg["metrics"]["bucket_width"],
        fixed_epoch=tg["fixed_epoch"])
    run.write_json(os.path.join("timegan", "model.json"), selected.to_dict())
    run.write_json(os.path.join("timegan", "transformer.json"),
                   transformer.to_dict())

    n_gen = cfg["generate"]["scale_factor"] * deg_windows.shape[0]
    gen = timegan.timegan_generate(selected, n_gen, seed)
    gen_deg = preprocess.postprocess(gen, transformer)
    per_file = cfg["generate"]["windows_per_file"]
    for k, lo in enumerate(range(0, gen_deg.shape[0], per_file)):
        chunk = gen_deg[lo:lo + per_file].reshape(-1, 3)
        preprocess.save_rotation_csv(
            TimeSeries(rate=pre["target_rate"], values={
                "yaw": chunk[:, 0], "pitch": chunk[:, 1],
                "roll": chunk[:, 2]}),
            run.path("generated", f"generated_{k:03d}.csv"))

    psd = fftgen.fft_baseline_fit(
        [preprocess.lowpass_downsample(
            TimeSeries(rate=s.rate, values={
                "yaw": preprocess.unwrap_series(wrap_angle(s.values["yaw"])),
                "pitch": s.values["pitch"], "roll": s.values["roll"]}),
            pre["target_rate"]) for s in corpus])
    fft_series = fftgen.fft_baseline_generate(
        psd, length=cfg["fft"]["length"], seed=seed)
    preprocess.save_rotation_csv(fft_series, run.path("fft", "fft_000.csv"))

    width = cfg["metrics"]["bucket_width"]
    target_hist = metrics.histogram_pdf(wrap_angle(reference_yaw), width)
    gen_hist = metrics.histogram_pdf(wrap_angle(gen_deg[..., 0].ravel()), width)
    fft_hist = metrics.histogram_pdf(wrap_angle(fft_series.values["yaw"]), width)
    p1, q1 = metrics.align_histograms(target_hist, gen_hist)
    p2, q2 = metrics.align_histograms(target_hist, fft_hist)
    kl_gen = metrics.kl_divergence(p1, q1)
    kl_fft = metrics.kl_divergence(p2, q2)
    run.write_json(os.path.join("reports", "distribution.json"), {
        "kl_yaw_timegan_nats": kl_gen,
        "kl_yaw_fft_nats": kl_fft,
        "selected_epoch": selected.epoch,
        "checkpoint_kl": {str(e): v for e, v in sorted(kls.items())},
    })
    summary["kl_yaw_timegan_nats"] = kl_gen
    summary["kl_yaw_fft_nats"] = kl_fft
    checks.append(("yaw KL ordering (TimeGAN < FFT)", kl_gen < kl_fft))

    if per_sample_path is not None:
        beam = cfg["beam"]
        data = np.genfromtxt(per_sample_path, delimiter=",", names=True)
        results = [metrics.beam_coverage(
            (row["pred_x"], row["pred_y"]), (row["true_x"], row["true_y"]),
            tuple(beam["ap"]), beam["beamwidth"]) for row in np.atleast_1d(data)]
        summary["beam_coverage_rate"] = float(
            np.mean([r["covered"] for r in results]))
        summary["beam_mean_misalignment_deg"] = float(
            np.mean([r["misalignment"] for r in results]))

    failed = [name for name, ok in checks if not ok]
    run.write_json(os.path.join("reports", "checks.json"), {
        "checks": [{"name": n, "passed": bool(ok)} for n, ok in checks],
        "passed": [name for name, ok in checks if ok],
        "failed": failed,
    })
    if args.check:
        if failed:
            raise CheckFailure("; ".join(failed))
        summary["checks_passed"] = len(checks)
    return summary


# ---------------------------------------------------------------------------
# argument parsing / dispatch


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="vrmotion",
        description="Deterministic redirected-walking simulation, lateral "
                    "movement prediction, and synthetic head-rotation "
                    "generation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file (merged over defaults)")
        p.add_argument("--seed", type=int, default=0, help="run seed")
        p.add_argument("--out", default="out", help="output directory")
        p.set_defaults(fn=fn)
        return p

    p = add("simulate", cmd_simulate, "run one walking session")
    p.add_argument("--users", type=int)
    p.add_argument("--path-kind", choices=["straight", "random_curved"])
    p.add_argument("--duration", type=float)

    p = add("train-lateral", cmd_train_lateral, "train a movement predictor")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--variant", choices=["baseline", "virtual"])

    p = add("eval-lateral", cmd_eval_lateral, "evaluate a movement predictor")
    p.add_argument("--model", required=True)
    p.add_argument("--traces", nargs="+", required=True)

    add("make-rotations", cmd_make_rotations,
        "emit the seeded synthetic rotation corpus")

    p = add("train-timegan", cmd_train_timegan,
            "train the rotation generator on a corpus directory")
    p.add_argument("--corpus", required=True)

    p = add("generate", cmd_generate, "sample rotation windows from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--transformer", required=True)
    p.add_argument("--count", type=int, required=True)

    p = add("fft-baseline", cmd_fft_baseline,
            "fit and sample the spectral resynthesis baseline")
    p.add_argument("--corpus", required=True)

    p = add("eval-dist", cmd_eval_dist,
            "compare two rotation corpora (histograms + KL)")
    p.add_argument("--a", required=True, help="reference corpus directory")
    p.add_argument("--b", required=True, help="comparison corpus directory")

    p = add("beam-eval", cmd_beam_eval,
            "beam coverage of position predictions")
    p.add_argument("--predictions", required=True,
                   help="CSV with pred_x,pred_y,true_x,true_y columns")

    p = add("pipeline", cmd_pipeline, "end-to-end seeded run")
    p.add_argument("--check", action="store_true",
                   help="verify invariants; exit 4 on violation")

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    run = _Run(args.command, cfg, args.seed, args.out)
    try:
        metrics_map = args.fn(cfg, args, run)
    except (ConfigError, ValueError) as exc:
        run.cleanup()
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        # checks.json survives: it documents exactly what failed
        print(f"check failed: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        run.cleanup()
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    report = run.finish(metrics_map)
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
