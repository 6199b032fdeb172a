"""Headless end-to-end checks with a digest of every numeric result.

The digest covers the exact bytes of intermediate arrays, so it changes if
any result depends on thread count or scheduling.
"""

from __future__ import annotations

import hashlib
import io

import numpy as np

from . import decode, io_formats, spatial, tamper, temporal
from .codegen import CodeSpec, bank_for_interval, code_for_interval, read_code_csv, write_code_csv
from .simulate import NoiseModel, demo_scene, render


def _digest(h, *arrays):
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=np.float64)).tobytes())


def run(seed: int = 0, threads: int = 1):
    """Returns (list of (check name, passed), hex digest)."""
    h = hashlib.sha256()
    checks = []

    spec = CodeSpec(master_seed=seed, num_codes=2)
    bank = bank_for_interval(spec, 0, 1536)
    seg = bank.samples[:, :spec.segment_len]
    _digest(h, bank.samples)
    checks.append(("code_zero_mean", bool(np.abs(seg.mean(axis=1)).max() <= 1e-9)))
    dot = abs(seg[0] @ seg[1]) / np.sqrt((seg[0] @ seg[0]) * (seg[1] @ seg[1]))
    checks.append(("code_orthogonal", bool(dot <= 1e-9)))
    checks.append(("code_csv_round_trip", np.array_equal(read_code_csv(write_code_csv(bank)).samples, bank.samples)))

    scene = demo_scene(32, 32, 3, num_codes=2, seed=seed)
    noise = NoiseModel(0.002, 0.005, 8, noise_seed=seed)
    t0, T = 128, 512
    video = render(scene, bank, noise, t0, T, threads=threads)
    _digest(h, video.data)

    codes = [code_for_interval(bank, t0, t0 + T, i) for i in range(2)]
    ci = decode.code_image(video, codes[0], decode.AnalysisWindow(T // 2, T), other_codes=[codes[1]])
    truth = decode.box_downsample(scene.transport_images[0], 2, axes=(0, 1))
    _digest(h, ci.values)
    rel = np.linalg.norm(ci.values - truth) / np.linalg.norm(truth)
    checks.append(("decode_matches_transport", bool(rel < 0.2)))

    full = code_for_interval(bank, 0, 1536, 0)
    reg = temporal.global_register(video, full, (0, 1024))
    _digest(h, reg.scores)
    checks.append(("global_register", reg.offset == t0 and not reg.inconclusive))

    cut_video, _ = tamper.cut(video, 200, 30)
    matrix = temporal.alignment_matrix(cut_video, full, offset_range=(0, 1024), threads=threads)
    curve = temporal.extract_alignment_curve(matrix)
    _digest(h, matrix.scores)
    jumps = [j for _, j in curve.discontinuities]
    checks.append(("cut_detected", jumps == [30]))

    slow, _ = tamper.retime(video, 0.8)
    scan = temporal.speed_scan(slow, full, search_range=(0, 1024), threads=threads)
    _digest(h, scan.scores)
    checks.append(("speed_detected", bool(abs(np.log(scan.rho / 0.8)) <= np.log(1.01) + 1e-12)))

    edited, _ = tamper.composite(video, 0.6, (8, 8, 8, 8))
    ci2 = decode.transient_filtered_code_image(edited, codes[0], decode.AnalysisWindow(T // 2, T),
                                               other_codes=[codes[1]])
    frame = edited.data.mean(axis=0)
    mask = spatial.manipulation_mask(frame, ci2, code_floor=0.05)
    _digest(h, mask.score_map)
    checks.append(("composite_flagged", bool(mask.mask[8:16, 8:16].mean() > 0.5 and mask.mask.mean() < 0.1)))

    blob = io_formats.write_fseq(video)
    back = io_formats.read_fseq(io.BytesIO(blob))
    checks.append(("fseq_round_trip", io_formats.write_fseq(back) == blob))
    h.update(blob)
    return checks, h.hexdigest()
