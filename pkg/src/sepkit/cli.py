"""``sepkit`` command-line front end.

Exit codes: 0 success, 1 check failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .beamforming import DEFAULT_FILTER_LEN as BF_FILTER_LEN
from .beamforming import beamform_from_estimates, save_design
from .checks import run_losscheck
from .errors import SepkitError
from .extraction import apply_mask, identity_masks, load_masks, oracle_irm, oracle_psm
from .losses import pit
from .metrics import DEFAULT_FILTER_LEN as SDR_FILTER_LEN
from .metrics import evaluate, metric_sisdr
from .signal_core import (DEFAULT_FFT_SIZE, FrameSpec, Waveform, edge_padding, parse_frame,
                          stft)
from .simulation import MixtureScenario, simulate_example, synth_source
from .toytrain import TrainConfig, train_autoencoder
from .transforms import (TransformSpec, decode, decode_learned, encode, encode_learned,
                         init_learned, load_kernels, save_kernels)
from .wavio import read_multichannel, write_wav

MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad flags or inputs; exits with status 2."""


class CheckFailed(Exception):
    """A verification command found a violation; exits with status 1."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                         f"{exc.msg}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(path, args, config, seeds, inputs, outputs, started):
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "cwd": os.getcwd(),
        "config": config,
        "tool_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "seeds": seeds,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_time_s": time.perf_counter() - started,
    }
    _write_json(path, manifest)
    return manifest


def _mono(path):
    """Reference channel of a WAV file as a Waveform."""
    if not Path(path).is_file():
        raise UsageError(f"{path}: no such file")
    return read_multichannel(path).reference()


def _wavs(directory, prefix=None):
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"{directory}: not a directory")
    files = sorted(p for p in d.glob("*.wav") if prefix is None or p.name.startswith(prefix))
    return files


def _source_wavs(directory):
    """source_*.wav if present, else est_*.wav, else every *.wav (mixture/noise excluded)."""
    for prefix in ("source_", "est_", "bf_"):
        files = _wavs(directory, prefix)
        if files:
            return files
    return [p for p in _wavs(directory) if p.stem not in ("mixture", "noise")]


def _pool(jobs):
    if jobs <= 1:
        return None
    return concurrent.futures.ProcessPoolExecutor(max_workers=jobs)


def _map(jobs, fn, items):
    pool = _pool(jobs)
    if pool is None:
        return [fn(i) for i in items]
    with pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_one(job):
    scenario_dict, index, out_dir, fmt = job
    scenario = MixtureScenario.from_dict(scenario_dict)
    ex = simulate_example(scenario, index)
    ex_dir = Path(out_dir) / f"ex_{index:05d}"
    ex_dir.mkdir(parents=True, exist_ok=True)
    paths = {"mixture": ex_dir / "mixture.wav", "noise": ex_dir / "noise.wav"}
    write_wav(paths["mixture"], ex.mixture, fmt)
    write_wav(paths["noise"], ex.noise, fmt)
    for k, im in enumerate(ex.clean_images, start=1):
        paths[f"source_{k}"] = ex_dir / f"source_{k}.wav"
        write_wav(paths[f"source_{k}"], im, fmt)
    info = dict(ex.metadata, paths={k: p.name for k, p in paths.items()}, format=fmt)
    _write_json(ex_dir / "example.json", info)
    return [str(p) for p in paths.values()] + [str(ex_dir / "example.json")]


def cmd_simulate(args):
    started = time.perf_counter()
    raw = _load_json(args.scenario)
    if not isinstance(raw, dict):
        raise UsageError(f"{args.scenario}: scenario must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        scenario = MixtureScenario.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{args.scenario}: {exc}") from None
    if args.n_examples < 1:
        raise UsageError("--n-examples must be >= 1")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sdict = scenario.to_dict()
    jobs = [(sdict, i, str(out), args.format) for i in range(args.n_examples)]
    outputs = [p for paths in _map(args.jobs, _simulate_one, jobs) for p in paths]
    _write_manifest(out / MANIFEST, args, {"scenario": sdict, "n_examples": args.n_examples,
                                           "format": args.format},
                    {"seed": scenario.seed}, [args.scenario], outputs, started)
    print(f"wrote {args.n_examples} example(s) to {out}")
    return 0


# ---------------------------------------------------------------------------
# separate
# ---------------------------------------------------------------------------

def _resolve_transform(args, rate):
    kind = args.transform
    if kind.startswith("learned:"):
        path = kind.split(":", 1)[1]
        if not Path(path).is_file():
            raise UsageError(f"{path}: no such kernel file")
        return load_kernels(path), "learned"
    try:
        frame_spec = parse_frame(args.frame, rate)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    fft_size = args.fft_size or max(DEFAULT_FFT_SIZE, 1 << (frame_spec.window_len - 1).bit_length())
    spec = TransformSpec.stft(frame_spec, fft_size)
    if kind == "stft-mag":
        return spec, "magnitude"
    if kind == "stft-ri":
        return spec, "realimag_split"
    raise UsageError(f"unknown transform {kind!r} (stft-mag, stft-ri, learned:<path>)")


def _latent_energy(latent):
    v = latent.values
    if latent.layout == "realimag_split":
        f = v.shape[1] // 2
        return v[:, :f] ** 2 + v[:, f:] ** 2
    return v ** 2


def _write_energy_csv(path, named_latents):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["signal", "frame", "feature", "energy_db"])
        for name, latent in named_latents:
            e = 10.0 * np.log10(_latent_energy(latent) + 1e-12)
            for ell in range(e.shape[0]):
                for f in range(e.shape[1]):
                    w.writerow([name, ell, f, f"{e[ell, f]:.6g}"])


def _padded(wave, pad):
    return Waveform(np.pad(wave.samples, pad), wave.sample_rate)


def cmd_separate(args):
    """Encode, mask and decode one mixture.

    The mixture and references are zero-padded by about one window on each
    side before encoding, and outputs are trimmed back, so the overlap-add
    envelope never vanishes under the original samples. Mask files must
    therefore match the padded latent shape (as written in latent_energy.csv).
    """
    started = time.perf_counter()
    mixture = _mono(args.mixture)
    spec, layout = _resolve_transform(args, mixture.sample_rate)
    n = len(mixture)
    pad = edge_padding(n, spec.frame)
    padded_len = n + sum(pad)
    y, phase = encode(_padded(mixture, pad), spec, layout)
    mode = args.masks
    refs = []
    inputs = [args.mixture]
    if mode in ("oracle-irm", "oracle-psm"):
        if not args.references:
            raise UsageError(f"--masks {mode} needs --references (clean source WAVs or a directory)")
        ref_paths = []
        for r in args.references:
            ref_paths += _source_wavs(r) if Path(r).is_dir() else [Path(r)]
        if not ref_paths:
            raise UsageError("no reference WAVs found")
        refs = [_mono(p) for p in ref_paths]
        if any(len(r) != n for r in refs):
            raise UsageError("references must have the mixture length")
        inputs += ref_paths
        clean = [encode(_padded(r, pad), spec, layout)[0] for r in refs]
        if mode == "oracle-irm":
            masks = oracle_irm(clean, y)
        elif layout == "learned":
            raise UsageError("oracle-psm needs an STFT transform (learned latents have no phase)")
        elif layout == "magnitude":
            masks = oracle_psm([stft(_padded(r, pad), spec.frame, spec.fft_size) for r in refs],
                               stft(_padded(mixture, pad), spec.frame, spec.fft_size))
        else:
            masks = oracle_psm(clean, y)
    elif mode == "identity":
        masks = identity_masks(y, args.num_sources)
    elif mode.startswith("file:"):
        path = mode.split(":", 1)[1]
        if not Path(path).is_file():
            raise UsageError(f"{path}: no such mask file")
        masks = load_masks(path, expected_shape=y.values.shape)
        inputs.append(path)
    else:
        raise UsageError(f"unknown mask mode {mode!r}")
    estimates = apply_mask(y, masks)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs, waves = [], []
    for k, est in enumerate(estimates, start=1):
        full = decode(est, padded_len, phase).samples
        wave = Waveform(full[pad[0]:pad[0] + n], mixture.sample_rate)
        p = out / f"est_{k}.wav"
        write_wav(p, wave, args.format)
        outputs.append(p)
        waves.append(wave.samples)
    if not args.no_energy:
        p = out / "latent_energy.csv"
        _write_energy_csv(p, [("mixture", y)] + [(f"est_{k}", e) for k, e in
                                                 enumerate(estimates, start=1)])
        outputs.append(p)
    summary = {}
    if refs:
        aligned = pit(lambda e, r: -metric_sisdr(e, r), waves, [r.samples for r in refs])
        summary = {"oracle_si_sdr_db": [-v for v in aligned.per_source],
                   "input_si_sdr_db": [metric_sisdr(mixture, r) for r in refs]}
        print(json.dumps(summary))
    config = {"masks": mode, "transform": args.transform, "layout": layout,
              "frame": {"window_len": spec.frame.window_len, "advance": spec.frame.advance,
                        "window": spec.frame.window},
              "fft_size": spec.fft_size, "format": args.format, "edge_padding": list(pad),
              "summary": summary}
    _write_manifest(out / MANIFEST, args, config, {}, inputs, outputs, started)
    return 0


# ---------------------------------------------------------------------------
# beamform
# ---------------------------------------------------------------------------

def cmd_beamform(args):
    started = time.perf_counter()
    if not Path(args.mixture).is_file():
        raise UsageError(f"{args.mixture}: no such file")
    if not Path(args.estimates_dir).is_dir():
        raise UsageError(f"{args.estimates_dir}: estimates directory does not exist")
    y = read_multichannel(args.mixture)
    est_paths = _source_wavs(args.estimates_dir)
    if not est_paths:
        raise UsageError(f"{args.estimates_dir}: no estimate WAVs")
    estimates = [_mono(p) for p in est_paths]
    if any(len(e) != len(y) for e in estimates):
        raise UsageError("estimates and mixture differ in length")
    if args.filter_len < 0:
        raise UsageError("--filter-len must be >= 0")
    try:
        outs, designs = beamform_from_estimates(y, estimates, args.filter_len, args.loading)
    except SepkitError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for k, (w, d) in enumerate(zip(outs, designs), start=1):
        wp, dp = out / f"bf_{k}.wav", out / f"design_{k}.sepk"
        write_wav(wp, w, args.format)
        save_design(dp, d)
        outputs += [wp, dp]
    _write_manifest(out / MANIFEST, args, {"filter_len": args.filter_len, "loading": args.loading,
                                           "channels": y.num_channels, "format": args.format},
                    {}, [args.mixture] + est_paths, outputs, started)
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _example_pairs(est_dir, ref_dir):
    est_dir, ref_dir = Path(est_dir), Path(ref_dir)
    for d in (est_dir, ref_dir):
        if not d.is_dir():
            raise UsageError(f"{d}: not a directory")
    if _wavs(est_dir):
        return [(".", est_dir, ref_dir)]
    est_subs = sorted(p.name for p in est_dir.iterdir() if p.is_dir())
    ref_subs = sorted(p.name for p in ref_dir.iterdir() if p.is_dir())
    if est_subs != ref_subs:
        raise UsageError(f"example directories differ: {len(est_subs)} estimates vs {len(ref_subs)} references")
    return [(name, est_dir / name, ref_dir / name) for name in est_subs]


def _evaluate_one(job):
    name, est_dir, ref_dir, mixture_path, filter_len = job
    ests = [_mono(p).samples for p in _source_wavs(est_dir)]
    refs = [_mono(p).samples for p in _source_wavs(ref_dir)]
    if len(ests) != len(refs):
        raise UsageError(f"{name}: {len(ests)} estimates but {len(refs)} references")
    mix = None
    if mixture_path is not None:
        mix = _mono(mixture_path).samples
    elif (Path(ref_dir) / "mixture.wav").is_file():
        mix = _mono(Path(ref_dir) / "mixture.wav").samples
    return name, evaluate(ests, refs, mix, filter_len).to_dict()


def cmd_evaluate(args):
    started = time.perf_counter()
    pairs = _example_pairs(args.estimates_dir, args.references_dir)
    jobs = [(name, e, r, args.mixture, args.filter_len) for name, e, r in pairs]
    results = dict(_map(args.jobs, _evaluate_one, jobs))
    keys = ("mean_si_sdr_db", "mean_sdr_db", "mean_si_sdr_improvement_db", "mean_sdr_improvement_db")
    aggregate = {k: float(np.mean([r[k] for r in results.values()])) for k in keys}
    aggregate["num_examples"] = len(results)
    report = {"examples": results, "aggregate": aggregate}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, report)
    _write_manifest(out.with_name(out.stem + ".manifest.json"), args,
                    {"filter_len": args.filter_len}, {}, [args.estimates_dir, args.references_dir],
                    [out], started)
    print(json.dumps(aggregate))
    return 0


# ---------------------------------------------------------------------------
# losscheck
# ---------------------------------------------------------------------------

def cmd_losscheck(args):
    started = time.perf_counter()
    report = run_losscheck(seed=args.seed, n_pairs=args.pairs, n_grad=args.grad_instances,
                           length=args.length, broken_gradient=args.inject_broken_gradient)
    summary = {k: v for k, v in report.items() if k != "violations"}
    summary["num_violations"] = len(report["violations"])
    print(json.dumps(summary, indent=2))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, report)
        _write_manifest(out.with_name(out.stem + ".manifest.json"), args,
                        {"pairs": args.pairs, "grad_instances": args.grad_instances,
                         "length": args.length}, {"seed": args.seed}, [], [out], started)
    if not report["ok"]:
        print("violations:", file=sys.stderr)
        for v in report["violations"][:5]:
            print(json.dumps(_jsonable(v)), file=sys.stderr)
        raise CheckFailed(f"{len(report['violations'])} loss-check violation(s)")
    return 0


# ---------------------------------------------------------------------------
# toytrain
# ---------------------------------------------------------------------------

TOY_DEFAULTS = {
    "steps": 2000,
    "step_size": 1e-2,
    "plateau_patience": 50,
    "loss": "tlmse",
    "seed": 0,
    "feature_dim": 128,
    "window_ms": 4.0,
    "advance_ms": 2.0,
    "sample_rate": 8000,
    "batch": {"kind": "filtered_noise", "count": 4, "length": 4000},
}


def toy_setup(raw: dict):
    """Build ``(TrainConfig, initial TransformSpec, resolved config dict)`` from a JSON dict."""
    cfg = dict(TOY_DEFAULTS)
    unknown = set(raw) - set(cfg) - {"batch_files"}
    if unknown:
        raise UsageError(f"unknown toytrain fields: {sorted(unknown)}")
    cfg.update(raw)
    batch_cfg = dict(TOY_DEFAULTS["batch"], **cfg.get("batch", {}))
    cfg["batch"] = batch_cfg
    if cfg["steps"] <= 0:
        raise UsageError("steps must be > 0")
    rate = int(cfg["sample_rate"])
    frame_spec = FrameSpec.from_ms(cfg["window_ms"], cfg["advance_ms"], rate, "rect")
    if cfg.get("batch_files"):
        batch = [_mono(p) for p in cfg["batch_files"]]
    else:
        seeds = np.random.SeedSequence(cfg["seed"]).generate_state(batch_cfg["count"])
        batch = [synth_source(batch_cfg["kind"], batch_cfg["length"], int(s), rate) for s in seeds]
    init = init_learned(cfg["feature_dim"], frame_spec.window_len, cfg["seed"], frame_spec.advance)
    try:
        config = TrainConfig(batch, cfg["steps"], cfg["step_size"], cfg["plateau_patience"],
                             cfg["loss"], cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return config, init, cfg


def reconstruction_sisdr(spec, batch):
    scores = []
    for x in batch:
        n = spec.frame.covered_length(spec.frame.num_frames(len(x)))
        xs = x.samples[:n]
        scores.append(metric_sisdr(decode_learned(encode_learned(xs, spec), spec, n), xs))
    return scores


def cmd_toytrain(args):
    started = time.perf_counter()
    raw = _load_json(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise UsageError("toytrain config must be a JSON object")
    config, init, cfg = toy_setup(raw)
    trace = train_autoencoder(config, init)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path, kernel_path = out / "trace.csv", out / "kernels.sepk"
    trace.to_csv(trace_path)
    save_kernels(kernel_path, trace.transform)
    scores = reconstruction_sisdr(trace.transform, config.batch)
    summary = {"final_loss": trace.losses[-1], "reconstruction_si_sdr_db": scores,
               "mean_reconstruction_si_sdr_db": float(np.mean(scores))}
    _write_json(out / "summary.json", summary)
    _write_manifest(out / MANIFEST, args, cfg, {"seed": cfg["seed"]},
                    [args.config] if args.config else [],
                    [trace_path, kernel_path, out / "summary.json"], started)
    print(json.dumps(summary))
    return 0


# ---------------------------------------------------------------------------
# rerun
# ---------------------------------------------------------------------------

def cmd_rerun(args):
    manifest = _load_json(args.manifest)
    argv = manifest.get("argv")
    if not isinstance(argv, list) or not argv:
        raise UsageError(f"{args.manifest}: manifest has no argv")
    here = os.getcwd()
    os.chdir(manifest.get("cwd", here))
    try:
        return main(argv)
    finally:
        os.chdir(here)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="sepkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sepkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate synthetic mixtures from a scenario JSON")
    s.add_argument("scenario")
    s.add_argument("out_dir")
    s.add_argument("-n", "--n-examples", type=int, default=1)
    s.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("separate", help="encoder -> mask -> decoder on a mixture WAV")
    s.add_argument("mixture")
    s.add_argument("out_dir")
    s.add_argument("--masks", default="oracle-irm",
                   help="oracle-irm | oracle-psm | identity | file:<path>")
    s.add_argument("--transform", default="stft-mag", help="stft-mag | stft-ri | learned:<path>")
    s.add_argument("--frame", default="64/16", help="'64/16', '4/2' or '<ms>/<ms>'")
    s.add_argument("--fft-size", type=int, default=None)
    s.add_argument("--references", nargs="*", default=[],
                   help="clean source WAVs (or a directory) for oracle masks")
    s.add_argument("--num-sources", type=int, default=2, help="source count for identity masks")
    s.add_argument("--no-energy", action="store_true", help="skip latent_energy.csv")
    s.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    s.set_defaults(func=cmd_separate)

    s = sub.add_parser("beamform", help="time-domain Wiener beamforming from per-source estimates")
    s.add_argument("mixture")
    s.add_argument("estimates_dir")
    s.add_argument("out_dir")
    s.add_argument("--filter-len", type=int, default=BF_FILTER_LEN,
                   help="history taps L_f (filter has L_f + 1 taps per channel)")
    s.add_argument("--loading", type=float, default=1e-5)
    s.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    s.set_defaults(func=cmd_beamform)

    s = sub.add_parser("evaluate", help="SI-SDR / SDR report for estimates vs references")
    s.add_argument("estimates_dir")
    s.add_argument("references_dir")
    s.add_argument("--out", default="report.json")
    s.add_argument("--mixture", default=None)
    s.add_argument("--filter-len", type=int, default=SDR_FILTER_LEN)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("losscheck", aliases=["loss"],
                       help="loss identity and gradient finite-difference suites")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pairs", type=int, default=1000)
    s.add_argument("--grad-instances", type=int, default=100)
    s.add_argument("--length", type=int, default=64)
    s.add_argument("--out", default=None)
    s.add_argument("--inject-broken-gradient", default=None, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_losscheck)

    s = sub.add_parser("toytrain", help="fit learned encoder/decoder kernels by gradient descent")
    s.add_argument("config", nargs="?", default=None)
    s.add_argument("--out-dir", default="toytrain_out")
    s.set_defaults(func=cmd_toytrain)

    s = sub.add_parser("rerun", help="re-execute the command recorded in a manifest")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_rerun)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    if args.command == "loss":
        args.command = "losscheck"
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sepkit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except CheckFailed as exc:
        print(f"sepkit {args.command}: FAILED: {exc}", file=sys.stderr)
        return 1
    except (SepkitError, OSError) as exc:
        # SepkitError covers NumericalFailure and Diverged as well
        print(f"sepkit {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
