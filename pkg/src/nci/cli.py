"""Command-line entry point: `nci <subcommand> ...`.

Every subcommand prints one machine-readable key=value summary line, writes a
JSON run manifest next to its primary output (or to --manifest), and exits 0
on success, 2 when the analysis is inconclusive, and 1 on error. Option
defaults can be overridden through NCI_<OPTION> environment variables;
explicit flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2
ENV_PREFIX = "NCI_"

log = logging.getLogger("nci")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit status 2 for usage errors; ours is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# -- helpers ----------------------------------------------------------------------

def _span(text: str):
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP, got {text!r}") from None


def _ints(text: str):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require_file(path, flag):
    if not os.path.isfile(path):
        raise UsageError(f"{flag}: no such file: {path}")


def read_video(path, fps=30.0):
    from .io_formats import read_fseq, read_y4m

    with open(path, "rb") as fh:
        if path.endswith(".y4m"):
            return read_y4m(fh)
        return read_fseq(fh, fps=fps)


def write_video(video, path):
    from .io_formats import write_fseq, write_y4m

    blob = write_y4m(video) if path.endswith(".y4m") else write_fseq(video)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_bank(path):
    from .codegen import read_code_csv

    with open(path) as fh:
        return read_code_csv(fh)


def _write(path, data):
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(data)


def _summary(pairs):
    parts = []
    for key, value in pairs.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        parts.append(f"{key}={value}")
    print(" ".join(parts))


# -- subcommands --------------------------------------------------------------------
# Each returns (exit code, summary dict, input paths, output paths).

def cmd_gen_code(args):
    from .codegen import CodeSpec, bank_for_interval, write_code_csv

    spec = CodeSpec(fps=args.fps, segment_len=args.segment_len, band_lo=args.band_lo, band_hi=args.band_hi,
                    num_codes=args.num_codes, master_seed=args.seed, amplitude_scale=args.amplitude_scale)
    bank = bank_for_interval(spec, args.start, args.start + args.frames)
    with open(args.output, "w") as fh:
        write_code_csv(bank, fh)
    rms = float(np.sqrt(np.mean(bank.samples ** 2)))
    return EXIT_OK, {"frames": args.frames, "codes": spec.num_codes, "rms": rms}, [], [args.output]


def cmd_render(args):
    from .simulate import NoiseModel, demo_scene, load_scene, render

    _require_file(args.code, "--code")
    bank = read_bank(args.code)
    inputs = [args.code]
    if args.scene:
        scene = load_scene(args.scene)
        inputs.append(os.path.join(args.scene, "scene.txt"))
    else:
        h, w = args.size
        scene = demo_scene(h, w, args.channels, num_codes=bank.spec.num_codes, seed=args.seed)
    noise = NoiseModel(args.read_std, args.photon_coeff, args.quant_bits, noise_seed=args.seed)
    video = render(scene, bank, noise, args.t0, args.frames, threads=args.threads)
    write_video(video, args.output)
    return EXIT_OK, {"frames": video.num_frames, "t0": args.t0, "shape": "x".join(map(str, video.shape[1:]))}, \
        inputs, [args.output]


def cmd_tamper(args):
    from . import tamper

    _require_file(args.input, "input")
    video = read_video(args.input)
    if args.op == "cut":
        out, elog = tamper.cut(video, args.at, args.remove, crossfade=args.crossfade)
    elif args.op == "splice":
        segments = [_span(s) for s in args.segments.split(",")]
        out, elog = tamper.splice(video, segments)
    elif args.op == "retime":
        out, elog = tamper.retime(video, args.rho, args.range)
    elif args.op == "composite":
        if args.patch_image:
            from .io_formats import read_netpbm

            with open(args.patch_image, "rb") as fh:
                patch = read_netpbm(fh.read())
        else:
            patch = args.value
        out, elog = tamper.composite(video, patch, args.rect, args.range)
    else:  # replay
        _require_file(args.log_in, "--log-in")
        with open(args.log_in) as fh:
            out, elog = tamper.replay(video, tamper.EditLog.from_text(fh.read()))
    write_video(out, args.output)
    outputs = [args.output]
    if args.log:
        _write(args.log, elog.to_text())
        outputs.append(args.log)
    return EXIT_OK, {"op": args.op, "frames_in": video.num_frames, "frames_out": out.num_frames}, [args.input], outputs


def _analysis_code(bank, offset, length, source):
    from .codegen import code_for_interval

    return code_for_interval(bank, offset, offset + length, source)


def cmd_decode(args):
    from . import decode

    _require_file(args.video, "video")
    _require_file(args.code, "--code")
    video = read_video(args.video)
    bank = read_bank(args.code)
    code = _analysis_code(bank, args.offset, video.num_frames, args.source)
    others = [_analysis_code(bank, args.offset, video.num_frames, i)
              for i in range(bank.spec.num_codes) if i != args.source] if args.joint else None
    center = video.num_frames // 2 if args.center is None else args.center
    window = decode.AnalysisWindow(center, args.window, args.downsample)
    bilateral = (args.bilateral_sigma, args.bilateral_radius) if args.bilateral_sigma > 0 else None
    if args.transient_sigma > 0:
        ci = decode.transient_filtered_code_image(video, code, window, args.transient_sigma, source_id=args.source,
                                                  bilateral=bilateral, other_codes=others)
    else:
        ci = decode.code_image(video, code, window, source_id=args.source, bilateral=bilateral, other_codes=others)
    image, sidecar = decode.export_code_image(ci)
    _write(args.output, image)
    side = args.output + ".txt"
    _write(side, sidecar)
    summary = {"source": args.source, "window": ci.window[1], "code_rms": ci.code_rms,
               "value_mean": float(ci.values.mean()), "invalid": int((~ci.valid).sum())}
    return EXIT_OK, summary, [args.video, args.code], [args.output, side]


def _search(bank, args, length):
    lo, hi = args.search if args.search else (bank.start_frame, bank.start_frame + max(1, bank.num_frames - length + 1))
    if hi <= lo:
        raise UsageError(f"--search: empty range {lo}:{hi}")
    return lo, hi


def _full_code(bank, hi, length, source=0):
    from .codegen import code_for_interval

    return code_for_interval(bank, 0, hi + length, source)


def cmd_align(args):
    from . import temporal

    _require_file(args.video, "video")
    _require_file(args.code, "--code")
    video = read_video(args.video)
    bank = read_bank(args.code)
    lo, hi = _search(bank, args, video.num_frames)
    code = _full_code(bank, hi, video.num_frames, args.source)
    bilateral = (args.bilateral_sigma, args.bilateral_radius) if args.bilateral_sigma > 0 else None
    summary = {}
    if args.patch_size:
        res = temporal.patch_weighted_register(video, code, args.patch_size, (lo, hi), bilateral=bilateral,
                                               threshold=args.threshold)
        summary["mode"] = "patch"
    else:
        res = temporal.global_register(video, code, (lo, hi), bilateral=bilateral, threshold=args.threshold)
        summary["mode"] = "global"
    summary.update({"offset": res.offset, "confidence": res.confidence, "inconclusive": int(res.inconclusive)})
    outputs = []
    if args.output:
        lines = [f"{int(o)},{s:.9g}" for o, s in zip(res.offsets, res.scores)]
        _write(args.output, "offset,score\n" + "\n".join(lines) + "\n")
        outputs.append(args.output)
    code_ = EXIT_INCONCLUSIVE if res.inconclusive else EXIT_OK
    return code_, summary, [args.video, args.code], outputs


def cmd_align_matrix(args):
    from . import temporal

    _require_file(args.video, "video")
    _require_file(args.code, "--code")
    video = read_video(args.video)
    bank = read_bank(args.code)
    lo, hi = _search(bank, args, args.col_window)
    code = _full_code(bank, hi, args.col_window, args.source)
    matrix = temporal.alignment_matrix(video, code, args.col_window, args.col_hop, (lo, hi), threads=args.threads)
    curve = temporal.extract_alignment_curve(matrix, args.jump_threshold, args.confidence_floor)
    _write(args.output, temporal.write_matrix_csv(matrix))
    outputs = [args.output]
    if args.heatmap:
        _write(args.heatmap, temporal.matrix_heatmap(matrix))
        outputs.append(args.heatmap)
    if args.curve:
        _write(args.curve, temporal.curve_text(curve))
        outputs.append(args.curve)
    jumps = ";".join(f"{c}:{j:+d}" for c, j in curve.discontinuities) or "none"
    summary = {"columns": matrix.scores.shape[1], "confident": int(curve.confident.sum()),
               "discontinuities": len(curve.discontinuities), "jumps": jumps}
    code_ = EXIT_OK if curve.confident.any() else EXIT_INCONCLUSIVE
    return code_, summary, [args.video, args.code], outputs


def cmd_speed_scan(args):
    from . import temporal

    _require_file(args.video, "video")
    _require_file(args.code, "--code")
    video = read_video(args.video)
    bank = read_bank(args.code)
    lo, hi = _search(bank, args, 1)
    code = _full_code(bank, hi, int(math.ceil(video.num_frames * args.rho_max)) + 1, args.source)
    grid = temporal.geometric_grid(args.rho_min, args.rho_max, args.rho_step)
    res = temporal.speed_scan(video, code, grid, (lo, hi), threads=args.threads)
    outputs = []
    if args.output:
        _write(args.output, "rho,score\n" + "".join(f"{r:.9g},{s:.9g}\n" for r, s in zip(res.rho_grid, res.scores)))
        outputs.append(args.output)
    inconclusive = not res.offset_confidence >= args.threshold
    summary = {"rho": res.rho, "offset": res.offset, "confidence": res.offset_confidence,
               "inconclusive": int(inconclusive)}
    return (EXIT_INCONCLUSIVE if inconclusive else EXIT_OK), summary, [args.video, args.code], outputs


def cmd_mask(args):
    from . import decode, spatial
    from .snr import SnrModel, code_image_noise_std

    _require_file(args.video, "video")
    _require_file(args.code, "--code")
    if args.code_floor is None and args.noise is None:
        raise UsageError("--code-floor: required unless --noise A,B supplies a noise model")
    video = read_video(args.video)
    bank = read_bank(args.code)
    code = _analysis_code(bank, args.offset, video.num_frames, args.source)
    center = video.num_frames // 2 if args.center is None else args.center
    window = decode.AnalysisWindow(center, args.window, args.downsample)
    ci = decode.transient_filtered_code_image(video, code, window, source_id=args.source)
    start, stop = window.bounds(video.num_frames)
    frame = video.data[start:stop].mean(axis=0)
    noise_std = None
    if args.code_floor is None:
        model = SnrModel(*args.noise)
        level = decode.box_downsample(frame, args.downsample, axes=(0, 1))
        noise_std = code_image_noise_std(model, level, stop - start, args.downsample ** 2, ci.code_rms)
    res = spatial.manipulation_mask(frame, ci, args.bright_thresh, args.code_floor, args.min_weight,
                                    noise_std=noise_std)
    mask_bytes, score_bytes = spatial.export_mask(res)
    _write(args.output, mask_bytes)
    outputs = [args.output]
    if args.score:
        _write(args.score, score_bytes)
        outputs.append(args.score)
    if args.montage:
        from .io_formats import write_netpbm

        _write(args.montage, write_netpbm(spatial.side_by_side_export(frame, [ci], res), 8))
        outputs.append(args.montage)
    summary = {"flagged": int(res.mask.sum()), "flagged_fraction": res.flagged_fraction,
               "inconclusive_pixels": int(res.inconclusive.sum())}
    return EXIT_OK, summary, [args.video, args.code], outputs


def cmd_fit_noise(args):
    from .simulate import fit_noise_from_flats

    for p in args.flats:
        _require_file(p, "flats")
    model = fit_noise_from_flats([read_video(p) for p in args.flats])
    a = np.atleast_1d(model.read_std)
    b = np.atleast_1d(model.photon_coeff)
    summary = {"a": ",".join(f"{v:.6g}" for v in a), "b": ",".join(f"{v:.6g}" for v in b)}
    outputs = []
    if args.output:
        _write(args.output, "channel,a,b\n" + "".join(f"{i},{x!r},{y!r}\n" for i, (x, y) in enumerate(zip(a, b))))
        outputs.append(args.output)
    return EXIT_OK, summary, list(args.flats), outputs


def cmd_predict_snr(args):
    from .snr import SnrModel, predict_snr, prediction_table, write_prediction_csv

    model = SnrModel(args.a, args.b)
    outputs = []
    if args.table:
        _write(args.table, write_prediction_csv(prediction_table(model)))
        outputs.append(args.table)
    db = predict_snr(model, args.code_rms_r, args.L, args.w, args.M)
    return EXIT_OK, {"snr_db": db if math.isfinite(db) else "inf"}, [], outputs


def cmd_selftest(args):
    from . import selftest

    checks, digest = selftest.run(args.seed, args.threads)
    for name, ok in checks:
        print(f"check={name} result={'pass' if ok else 'FAIL'}")
    failed = [n for n, ok in checks if not ok]
    return (EXIT_ERROR if failed else EXIT_OK), {"selftest": "fail" if failed else "pass",
                                                 "checks": len(checks), "hash": digest}, [], []


def cmd_replay(args):
    _require_file(args.manifest, "manifest")
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    env = manifest.get("environment", {})
    # the replayed run sees exactly the recorded NCI_ variables
    touched = set(env) | {k for k in os.environ if k.startswith(ENV_PREFIX)}
    saved = {k: os.environ.get(k) for k in touched}
    for k in touched - set(env):
        del os.environ[k]
    os.environ.update(env)
    try:
        code = main(manifest["argv"] + ["--manifest", os.devnull])
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v
    mismatched = [p for p, digest in manifest.get("outputs", {}).items()
                  if not os.path.isfile(p) or _sha256(p) != digest]
    summary = {"replayed": manifest["command"], "exit": code, "outputs_match": int(not mismatched)}
    return (EXIT_ERROR if mismatched or code != manifest.get("exit_code", 0) else EXIT_OK), summary, [args.manifest], []


# -- parser -------------------------------------------------------------------------

def _common(p, outputs=True):
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--seed", type=int, default=0, help="source of all randomness")
    p.add_argument("--manifest", help="where to write the run manifest (default: <output>.manifest.json)")
    p.add_argument("-v", "--verbose", action="store_true")


def _source(p):
    p.add_argument("video", help="input video (.fseq or .y4m)")
    p.add_argument("--code", required=True, help="code CSV from gen-code")
    p.add_argument("--source", type=int, default=0, help="which code of the bank to use")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nci", description="Noise-coded illumination forensics toolkit.")
    parser.add_argument("--version", action="version", version=f"nci {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-code", help="generate a code bank CSV")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--frames", type=int, default=2048)
    p.add_argument("--start", type=int, default=0, help="first capture frame")
    p.add_argument("--num-codes", type=int, default=1)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--segment-len", type=int, default=256)
    p.add_argument("--band-lo", type=float, default=2.0)
    p.add_argument("--band-hi", type=float, default=9.0)
    p.add_argument("--amplitude-scale", type=float, default=0.001)
    _common(p)
    p.set_defaults(func=cmd_gen_code)

    p = sub.add_parser("render", help="simulate a coded capture")
    p.add_argument("--code", required=True)
    p.add_argument("-o", "--output", required=True, help=".fseq or .y4m")
    p.add_argument("--scene", help="scene directory (default: built-in demo scene)")
    p.add_argument("--size", type=_ints, default=(64, 64), help="H,W of the demo scene")
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--t0", type=int, default=0, help="first capture frame")
    p.add_argument("--frames", type=int, default=600)
    p.add_argument("--read-std", type=float, default=0.002)
    p.add_argument("--photon-coeff", type=float, default=0.005)
    p.add_argument("--quant-bits", type=int, default=8, help="0 disables quantization")
    _common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("tamper", help="apply a known manipulation")
    p.add_argument("op", choices=["cut", "splice", "retime", "composite", "replay"])
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--log", help="write the edit log here")
    p.add_argument("--log-in", help="edit log to replay (op=replay)")
    p.add_argument("--at", type=int, help="cut: first removed frame")
    p.add_argument("--remove", type=int, help="cut: number of frames removed")
    p.add_argument("--crossfade", action="store_true", help="cut: 3-frame blended seam")
    p.add_argument("--segments", help="splice: comma list of START:STOP")
    p.add_argument("--rho", type=float, help="retime: speed factor")
    p.add_argument("--range", type=_span, help="frame range START:STOP")
    p.add_argument("--rect", type=_ints, help="composite: Y,X,H,W")
    p.add_argument("--value", type=float, help="composite: constant patch value")
    p.add_argument("--patch-image", help="composite: NetPBM patch")
    _common(p)
    p.set_defaults(func=cmd_tamper)

    p = sub.add_parser("decode", help="compute a code image")
    _source(p)
    p.add_argument("-o", "--output", required=True, help="16-bit PGM/PPM; sidecar written to <output>.txt")
    p.add_argument("--offset", type=int, default=0, help="capture frame of video frame 0")
    p.add_argument("--center", type=int, help="window center frame (default: middle)")
    p.add_argument("--window", type=int, default=450)
    p.add_argument("--downsample", type=int, default=2)
    p.add_argument("--transient-sigma", type=float, default=0.0, help="> 0 enables transient weighting")
    p.add_argument("--bilateral-sigma", type=float, default=0.0, help="> 0 enables the bilateral residual")
    p.add_argument("--bilateral-radius", type=int, default=15)
    p.add_argument("--joint", action="store_true", help="solve jointly with the bank's other codes")
    _common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("align", help="global (or patch-weighted) registration")
    _source(p)
    p.add_argument("-o", "--output", help="write the score curve as CSV")
    p.add_argument("--search", type=_span, help="capture offsets START:STOP")
    p.add_argument("--threshold", type=float, default=1.5)
    p.add_argument("--patch-size", type=int, default=0, help="> 0 uses patch-weighted registration")
    p.add_argument("--bilateral-sigma", type=float, default=0.0)
    p.add_argument("--bilateral-radius", type=int, default=15)
    _common(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("align-matrix", help="alignment matrix and cut detection")
    _source(p)
    p.add_argument("-o", "--output", required=True, help="matrix CSV")
    p.add_argument("--heatmap", help="8-bit PGM heatmap")
    p.add_argument("--curve", help="alignment curve text")
    p.add_argument("--search", type=_span)
    p.add_argument("--col-window", type=int, default=90)
    p.add_argument("--col-hop", type=int, default=15)
    p.add_argument("--jump-threshold", type=float, default=2)
    p.add_argument("--confidence-floor", type=float, default=1.5)
    _common(p)
    p.set_defaults(func=cmd_align_matrix)

    p = sub.add_parser("speed-scan", help="detect a global speed change")
    _source(p)
    p.add_argument("-o", "--output", help="score curve CSV")
    p.add_argument("--search", type=_span)
    p.add_argument("--rho-min", type=float, default=0.5)
    p.add_argument("--rho-max", type=float, default=2.0)
    p.add_argument("--rho-step", type=float, default=1.01)
    p.add_argument("--threshold", type=float, default=1.5)
    _common(p)
    p.set_defaults(func=cmd_speed_scan)

    p = sub.add_parser("mask", help="flag bright-in-frame, dark-in-code regions")
    _source(p)
    p.add_argument("-o", "--output", required=True, help="mask PBM")
    p.add_argument("--score", help="score map PGM")
    p.add_argument("--montage", help="frame / code image / mask PPM")
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--center", type=int)
    p.add_argument("--window", type=int, default=450)
    p.add_argument("--downsample", type=int, default=2)
    p.add_argument("--bright-thresh", type=float, default=0.25)
    p.add_argument("--code-floor", type=float)
    p.add_argument("--min-weight", type=float, default=0.5)
    p.add_argument("--noise", type=lambda s: tuple(float(v) for v in s.split(",")),
                   help="A,B noise model for the default code floor")
    _common(p)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("fit-noise", help="fit std = a + b sqrt(L) from flat-field videos")
    p.add_argument("flats", nargs="+")
    p.add_argument("-o", "--output")
    _common(p)
    p.set_defaults(func=cmd_fit_noise)

    p = sub.add_parser("predict-snr", help="predicted code-image SNR")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--code-rms-r", type=float, default=0.005)
    p.add_argument("--L", type=float, default=0.3)
    p.add_argument("--w", type=int, default=450)
    p.add_argument("--M", type=int, default=4)
    p.add_argument("--table", help="write the full prediction grid CSV")
    _common(p)
    p.set_defaults(func=cmd_predict_snr)

    p = sub.add_parser("selftest", help="run the built-in end-to-end checks")
    _common(p)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    p.add_argument("manifest")
    _common(p)
    p.set_defaults(func=cmd_replay)

    _apply_env(sub)
    return parser


def _env_name(dest):
    return ENV_PREFIX + dest.upper()


def _apply_env(subparsers_action):
    """Environment values become option defaults, so explicit flags still take precedence."""
    for sub in subparsers_action.choices.values():
        for action in sub._actions:
            if not action.option_strings or action.dest in ("help", "manifest", "version"):
                continue
            value = os.environ.get(_env_name(action.dest))
            if value is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                value = value.strip().lower() in ("1", "true", "yes", "on")
            action.default = value
            action.required = False


_OPS_NEEDS = {
    "cut": ("at", "remove"),
    "splice": ("segments",),
    "retime": ("rho",),
    "composite": ("rect",),
    "replay": ("log_in",),
}


def _validate(args):
    if getattr(args, "threads", 1) < 1:
        raise UsageError("--threads: must be >= 1")
    if args.command == "tamper":
        for dest in _OPS_NEEDS[args.op]:
            if getattr(args, dest) is None:
                raise UsageError(f"--{dest.replace('_', '-')}: required for tamper {args.op}")
        if args.op == "composite":
            if (args.value is None) == (args.patch_image is None):
                raise UsageError("--value/--patch-image: give exactly one")
            if len(args.rect) != 4:
                raise UsageError("--rect: expected Y,X,H,W")
    if args.command == "render" and len(args.size) != 2:
        raise UsageError("--size: expected H,W")
    if args.command == "mask" and args.noise is not None and len(args.noise) != 2:
        raise UsageError("--noise: expected A,B")


def _manifest_path(args, outputs):
    if args.manifest:
        return args.manifest
    if outputs:
        return outputs[0] + ".manifest.json"
    return None


def _write_manifest(path, args, argv, code, inputs, outputs):
    params = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
    env = {k: v for k, v in sorted(os.environ.items()) if k.startswith(ENV_PREFIX)}
    manifest = {
        "command": args.command,
        "argv": [a for a in argv],
        "parameters": json.loads(json.dumps(params, default=str)),
        "seed": getattr(args, "seed", None),
        "environment": env,
        "inputs": {p: _sha256(p) for p in inputs if os.path.isfile(p)},
        "outputs": {p: _sha256(p) for p in outputs if os.path.isfile(p)},
        "exit_code": code,
        "tool_version": __version__,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        code, summary, inputs, outputs = args.func(args)
    except UsageError as exc:
        print(f"nci {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError, TypeError) as exc:
        print(f"nci {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _summary(summary)
    if args.command != "replay":
        path = _manifest_path(args, outputs)
        if path and path != os.devnull:
            _write_manifest(path, args, argv, code, inputs, outputs)
    return code


if __name__ == "__main__":
    sys.exit(main())
