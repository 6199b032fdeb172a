import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nci import tamper, temporal
from nci.codegen import CodeSpec, bank_for_interval, code_for_interval
from nci.io_formats import read_netpbm
from nci.simulate import NOISELESS, NoiseModel, SceneModel, demo_scene, render

NOISE = NoiseModel(0.005, 0.01, 8, noise_seed=1)


def setup(seed=3, n=3000, t0=100, T=600, size=32):
    bank = bank_for_interval(CodeSpec(master_seed=seed), 0, n)
    code = code_for_interval(bank, 0, n)
    scene = demo_scene(size, size, 1, seed=seed)
    return bank, code, scene, render(scene, bank, NoiseModel(0.005, 0.01, 8, noise_seed=seed), t0, T)


@given(st.integers(0, 2**32), st.integers(5, 60), st.integers(0, 80))
@settings(max_examples=40, deadline=None)
def test_fft_correlation_matches_direct(seed, n, extra):
    r = np.random.default_rng(seed)
    trace = r.standard_normal(n)
    code = r.standard_normal(n + extra)
    np.testing.assert_allclose(temporal.normalized_xcorr(trace, code),
                               temporal.normalized_xcorr_direct(trace, code), atol=1e-6)


def test_correlation_scores_are_bounded(rng):
    s = temporal.normalized_xcorr(rng.random(30), rng.random(200))
    assert np.all(np.abs(s) <= 1.0)
    assert temporal.normalized_xcorr(np.arange(5.0), np.arange(5.0))[0] == pytest.approx(1.0)


def test_global_register_recovers_planted_offset():
    _, code, _, v = setup()
    res = temporal.global_register(v, code, (0, 1000))
    assert res.offset == 100 and res.confidence > 1.5 and not res.inconclusive
    offset, conf = res
    assert offset == 100


def test_global_register_at_zero():
    bank, code, scene, _ = setup()
    v = render(scene, bank, NOISE, 0, 450)
    res = temporal.global_register(v, code, (0, 1000))
    assert res.offset == 0 and res.confidence > 1.5


def test_shift_equivariance():
    _, code, _, v = setup()
    base = temporal.global_register(v, code, (0, 1000)).offset
    for s in (7, 31):
        shifted = v.frames(s, v.num_frames)
        assert temporal.global_register(shifted, code, (0, 1000)).offset == base + s


def test_empty_search_range_is_rejected():
    _, code, _, v = setup()
    with pytest.raises(ValueError):
        temporal.global_register(v, code, (10, 10))
    with pytest.raises(ValueError):
        temporal.global_register(v, code[:100], None)


def test_true_offset_has_highest_expected_correlation():
    bank = bank_for_interval(CodeSpec(master_seed=9), 0, 1200)
    code = code_for_interval(bank, 0, 1200)
    scene = SceneModel(np.full((8, 8, 1), 0.5), np.full((1, 8, 8, 1), 0.05))
    curves = []
    for seed in range(50):
        v = render(scene, bank, NoiseModel(0.02, 0.0, 0, noise_seed=seed), 200, 300)
        curves.append(temporal.global_register(v, code, (0, 800)).scores)
    mean = np.mean(curves, axis=0)
    assert int(np.argmax(mean)) == 200
    others = np.delete(mean, range(185, 216))
    assert mean[200] > others.max()


def test_alignment_matrix_on_clean_video_is_one_diagonal():
    _, code, _, v = setup()
    m = temporal.alignment_matrix(v, code, offset_range=(0, 1500))
    assert np.all(np.abs(m.scores) <= 1.0)
    assert m.scores.shape == (1500, (600 - 90) // 15 + 1)
    curve = temporal.extract_alignment_curve(m)
    assert curve.discontinuities == []
    assert set(curve.offsets[curve.confident]) == {100}


def test_alignment_matrix_is_thread_independent():
    _, code, _, v = setup()
    a = temporal.alignment_matrix(v, code, offset_range=(0, 1000), threads=1)
    b = temporal.alignment_matrix(v, code, offset_range=(0, 1000), threads=4)
    assert np.array_equal(a.scores, b.scores)


def test_cut_produces_one_jump_of_the_removed_length():
    _, code, _, v = setup()
    cut, log = tamper.cut(v, 200, 30, crossfade=True)
    curve = temporal.extract_alignment_curve(temporal.alignment_matrix(cut, code, offset_range=(0, 1500)))
    assert len(curve.discontinuities) == 1
    col, jump = curve.discontinuities[0]
    assert abs(jump - 30) <= 1
    start = curve.column_starts[col]
    assert start <= 200 + 90 and start + 90 >= 200 - 15


def test_reorder_gives_segment_count_minus_one_jumps():
    _, code, _, v = setup(T=900)
    spliced, log = tamper.splice(v, [(300, 600), (0, 300), (600, 900)])
    curve = temporal.extract_alignment_curve(temporal.alignment_matrix(spliced, code, offset_range=(0, 1500)))
    # offset = capture frame minus edited-video frame; each run keeps its original timing
    assert [j for _, j in curve.discontinuities] == [-600, 300]
    assert set(curve.offsets[curve.confident]) == {100 + 300, 100 - 300, 100}
    assert log.records[0].params["segments"] == [(300, 600), (0, 300), (600, 900)]


def test_discontinuities_respect_threshold():
    _, code, _, v = setup()
    cut, _ = tamper.cut(v, 200, 30)
    curve = temporal.extract_alignment_curve(temporal.alignment_matrix(cut, code, offset_range=(0, 1500)),
                                             jump_threshold=2)
    assert all(abs(j) > 2 for _, j in curve.discontinuities)
    with pytest.raises(ValueError):
        temporal.alignment_matrix(v, code, col_window=700)


def test_speed_scan_unmodified_and_retimed():
    bank, code, scene, v = setup()
    step = np.log(1.01) + 1e-12
    res = temporal.speed_scan(v, code, search_range=(0, 1000))
    assert abs(np.log(res.rho)) <= step
    assert res.rho in res.rho_grid
    for rho in (0.6, 1.25):
        src = render(scene, bank, NOISE, 100, int(600 * max(rho, 1)))
        out, _ = tamper.retime(src, rho)
        found = temporal.speed_scan(out, code, search_range=(0, 1000))
        assert abs(np.log(found.rho / rho)) <= step
        assert abs(found.offset - 100) <= 2


def test_speed_scan_is_thread_independent():
    _, code, _, v = setup()
    a = temporal.speed_scan(v, code, search_range=(0, 1000), threads=1)
    b = temporal.speed_scan(v, code, search_range=(0, 1000), threads=3)
    assert np.array_equal(a.scores, b.scores) and a.rho == b.rho


def test_alignment_curve_slope_is_inverse_speed():
    bank, code, scene, _ = setup()
    src = render(scene, bank, NOISE, 100, 900)
    out, _ = tamper.retime(src, 1.25)
    rho = temporal.speed_scan(out, code, search_range=(0, 1000)).rho
    m = temporal.alignment_matrix(out, code, offset_range=(0, 1500), rho=rho)
    curve = temporal.extract_alignment_curve(m, jump_threshold=2)
    assert curve.confident.mean() > 0.5 and curve.discontinuities == []
    slope = curve.video_frames_per_capture_frame()
    assert slope == pytest.approx(1 / 1.25, rel=0.01)
    # a small speed change is visible even at rho = 1
    slight, _ = tamper.retime(src, 1.02)
    plain = temporal.extract_alignment_curve(temporal.alignment_matrix(slight, code, offset_range=(0, 1500)))
    assert plain.video_frames_per_capture_frame() == pytest.approx(1 / 1.02, rel=0.01)


def test_geometric_grid():
    g = temporal.geometric_grid()
    assert g[0] == 0.5 and g[-1] <= 2.0 and 2.0 / g[-1] < 1.01
    np.testing.assert_allclose(g[1:] / g[:-1], 1.01)
    with pytest.raises(ValueError):
        temporal.speed_scan(np.zeros(10), np.zeros(100), rho_grid=[])


def test_patch_weighting_matches_global_on_uniform_scene():
    _, code, _, v = setup()
    g = temporal.global_register(v, code, (0, 1000))
    p = temporal.patch_weighted_register(v, code, 16, (0, 1000))
    assert p.offset == g.offset
    assert p.weight_map.shape == (2, 2)
    assert p.weight_map.sum() == pytest.approx(1.0)


def test_patch_weighting_with_zero_code_is_inconclusive():
    bank = bank_for_interval(CodeSpec(), 0, 1500)
    code = code_for_interval(bank, 0, 1500)
    scene = SceneModel(np.full((32, 32, 1), 0.5), np.zeros((1, 32, 32, 1)))
    v = render(scene, bank, NoiseModel(0.01, 0.0, 8, noise_seed=2), 100, 450)
    assert temporal.patch_weighted_register(v, code, 16, (0, 1000)).inconclusive
    assert temporal.global_register(v, code, (0, 1000)).inconclusive


def test_patch_traces_handle_partial_edge_patches():
    from nci.video import FrameSequence

    data = np.arange(2 * 5 * 5, dtype=float).reshape(2, 5, 5)
    tr = temporal.patch_traces(FrameSequence(data), 4)
    assert tr.shape == (2, 2, 2)
    assert tr[0, 1, 1] == data[0, 4, 4]
    assert tr[0, 0, 0] == data[0, :4, :4].mean()


def test_peak_confidence_excludes_main_lobe():
    s = np.zeros(100)
    s[50], s[52], s[80] = 1.0, 0.9, 0.5
    best, conf = temporal.peak_confidence(s, exclusion=5)
    assert best == 50 and conf == pytest.approx(2.0)
    assert temporal.peak_confidence(-np.ones(10))[1] == 0.0


def test_exports():
    _, code, _, v = setup()
    cut, _ = tamper.cut(v, 200, 30)
    m = temporal.alignment_matrix(cut, code, offset_range=(0, 400))
    text = temporal.write_matrix_csv(m)
    lines = text.splitlines()
    assert lines[0] == "# col_window=90" and lines[2].startswith("offset,0,15,")
    assert len(lines) == 3 + 400
    img = read_netpbm(temporal.matrix_heatmap(m))
    assert img.shape[:2] == m.scores.shape
    curve = temporal.extract_alignment_curve(m)
    ct = temporal.curve_text(curve)
    assert ct.count("\n") == 1 + m.scores.shape[1] + len(curve.discontinuities)
