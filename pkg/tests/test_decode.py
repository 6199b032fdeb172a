import numpy as np
import pytest

from nci.codegen import CodeSpec, bank_for_interval, code_for_interval
from nci.decode import (
    AnalysisWindow,
    bilateral_residual,
    code_correlation,
    code_image,
    export_code_image,
    stabilize_translation,
    transient_filtered_code_image,
    transient_weights,
)
from nci.errors import DegenerateCodeError
from nci.io_formats import read_netpbm
from nci.simulate import NOISELESS, NoiseModel, SceneModel, Sprite, demo_scene, render
from nci.video import FrameSequence, box_downsample


def truth(scene, i=0, d=1):
    return box_downsample(scene.transport_images[i], d, axes=(0, 1))


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_noiseless_decode_is_exact_over_whole_segments():
    bank = bank_for_interval(CodeSpec(master_seed=1), 0, 512)
    scene = demo_scene(16, 16, 3)
    v = render(scene, bank, NOISELESS, 0, 512)
    c = code_for_interval(bank, 0, 512)
    ci = code_image(v, c, AnalysisWindow(256, 512, 1))
    assert rel_err(ci.values, truth(scene)) <= 1e-6


def test_two_sources_decode_independently():
    spec = CodeSpec(master_seed=2, num_codes=2)
    bank = bank_for_interval(spec, 0, 512)
    scene = demo_scene(16, 16, 1, num_codes=2)
    v = render(scene, bank, NOISELESS, 0, 512)
    for i in range(2):
        ci = code_image(v, code_for_interval(bank, 0, 512, i), AnalysisWindow(256, 512, 2))
        assert rel_err(ci.values, truth(scene, i, 2)) <= 1e-6


def test_joint_solve_removes_cross_talk_in_partial_windows():
    spec = CodeSpec(master_seed=3, num_codes=2)
    bank = bank_for_interval(spec, 0, 600)
    scene = demo_scene(16, 16, 1, num_codes=2)
    v = render(scene, bank, NOISELESS, 0, 600)
    codes = [code_for_interval(bank, 0, 600, i) for i in range(2)]
    w = AnalysisWindow(300, 450, 2)
    plain = code_image(v, codes[0], w)
    joint = code_image(v, codes[0], w, other_codes=[codes[1]])
    tjoint = transient_filtered_code_image(v, codes[0], w, other_codes=[codes[1]])
    assert rel_err(plain.values, truth(scene, 0, 2)) > 1e-3
    assert rel_err(joint.values, truth(scene, 0, 2)) <= 1e-9
    assert rel_err(tjoint.values, truth(scene, 0, 2)) <= 1e-9


def test_scale_ambiguity():
    bank = bank_for_interval(CodeSpec(master_seed=4), 0, 256)
    scene = demo_scene(8, 8, 1)
    v = render(scene, bank, NOISELESS, 0, 256)
    c = code_for_interval(bank, 0, 256)
    base = code_image(v, c).values
    np.testing.assert_allclose(code_image(v, 3.0 * c).values, base / 3.0, rtol=1e-12)
    scaled = bank_for_interval(CodeSpec(master_seed=4, amplitude_scale=0.002), 0, 256)
    v2 = render(scene, scaled, NOISELESS, 0, 256)
    np.testing.assert_allclose(code_image(v2, code_for_interval(scaled, 0, 256)).values, base, rtol=1e-9)


def test_window_additivity(rng):
    y = rng.random((100, 3, 3, 2))
    c = rng.standard_normal(100)
    np.testing.assert_allclose(code_correlation(y, c), code_correlation(y[:40], c[:40]) + code_correlation(y[40:], c[40:]))


def test_unbiased_under_noise():
    bank = bank_for_interval(CodeSpec(master_seed=5, amplitude_scale=0.004), 0, 256)
    c = code_for_interval(bank, 0, 256)
    scene = SceneModel(np.full((4, 4, 1), 0.4), np.full((1, 4, 4, 1), 0.3))
    est = []
    for seed in range(200):
        v = render(scene, bank, NoiseModel(0.01, 0.0, 0, noise_seed=seed), 0, 256)
        est.append(code_image(v, c).values.mean())
    est = np.array(est)
    sem = est.std(ddof=1) / np.sqrt(len(est))
    assert abs(est.mean() - 0.3) <= 3 * sem


def test_degenerate_code_and_bad_sigma():
    v = FrameSequence(np.zeros((10, 2, 2, 1)))
    with pytest.raises(DegenerateCodeError):
        code_image(v, np.zeros(10))
    with pytest.raises(DegenerateCodeError):
        code_image(v, np.full(10, 0.3))
    with pytest.raises(ValueError):
        transient_filtered_code_image(v, np.arange(10.0), sigma=0.0)
    with pytest.raises(ValueError):
        code_image(v, np.arange(7.0))


def test_transient_equals_plain_on_static_scene():
    bank = bank_for_interval(CodeSpec(), 0, 100)
    c = code_for_interval(bank, 0, 100)
    v = FrameSequence(np.full((100, 4, 4, 3), 0.4))
    a = code_image(v, c)
    b = transient_filtered_code_image(v, c)
    assert np.array_equal(a.values, b.values)
    assert np.all(b.weight_map == 1.0)


def test_transient_weights_properties(rng):
    raw = rng.random((20, 3, 3, 1))
    g = transient_weights(raw, 5, 0.05)
    assert np.all((g > 0) & (g <= 1))
    assert np.all(g[5] == 1.0)
    flash = np.zeros((10, 1, 1, 1))
    flash[3] = 0.5
    assert transient_weights(flash, 0, 0.05)[3].item() < np.exp(-40)


def test_flash_is_suppressed():
    bank = bank_for_interval(CodeSpec(master_seed=0), 0, 450)
    c = code_for_interval(bank, 0, 450)
    scene = demo_scene(32, 32, 1)
    v = render(scene, bank, NoiseModel(0.002, 0.005, 8, noise_seed=0), 0, 450)
    d = v.data.copy()
    d[300:304] = np.clip(d[300:304] + 0.5, 0, 1)
    flashed = v.with_data(d)
    w = AnalysisWindow(225)
    gt = truth(scene, 0, 2)
    plain = np.mean((code_image(flashed, c, w).values - gt) ** 2)
    filt = np.mean((transient_filtered_code_image(flashed, c, w).values - gt) ** 2)
    assert filt <= plain / 5


def test_weight_map_darker_under_moving_sprite():
    bank = bank_for_interval(CodeSpec(), 0, 200)
    c = code_for_interval(bank, 0, 200)
    path = [(8, (t // 2) % 24) for t in range(200)]
    scene = SceneModel(np.full((32, 32, 1), 0.3), np.full((1, 32, 32, 1), 0.3),
                       [Sprite(np.full((6, 6), 0.9), path)])
    v = render(scene, bank, NOISELESS, 0, 200)
    ci = transient_filtered_code_image(v, c, AnalysisWindow(100, 200, 1))
    wm = ci.weight_map[..., 0]
    assert wm[8:14, :30].mean() < wm[20:, :].mean() - 0.2


def test_saturated_pixels_are_reported_invalid(caplog):
    bank = bank_for_interval(CodeSpec(), 0, 64)
    c = code_for_interval(bank, 0, 64)
    data = np.full((64, 2, 2, 1), 0.5) + 0.1 * c[:, None, None, None]
    data[:, 0, 0] = 1.0
    with caplog.at_level("WARNING"):
        ci = transient_filtered_code_image(FrameSequence(data), c)
    assert not ci.valid[0, 0, 0] and ci.values[0, 0, 0] == 0.0
    assert ci.valid[1, 1, 0]
    assert "no usable transient weight" in caplog.text


def test_bilateral_residual_properties():
    const = np.full((50, 2), 0.4)
    assert np.all(bilateral_residual(const) == 0.0)
    bank = bank_for_interval(CodeSpec(master_seed=7), 0, 600)
    code = code_for_interval(bank, 0, 600)
    alpha = 0.004 / np.sqrt(np.mean(code ** 2))
    pure = 0.4 + alpha * code
    r = bilateral_residual(pure[:, None])[:, 0]
    assert np.corrcoef(r, code)[0, 1] >= 0.99
    stepped = pure + np.where(np.arange(600) >= 300, 0.3, 0.0)
    rs = bilateral_residual(stepped[:, None])[:, 0]
    assert np.corrcoef(rs, code)[0, 1] >= 0.9 * np.corrcoef(r, code)[0, 1]
    with pytest.raises(ValueError):
        bilateral_residual(const, radius=0)


def test_stabilization():
    rng = np.random.default_rng(0)
    base = rng.random((32, 32))
    shifts = [(0, 0)] + [tuple(rng.integers(-3, 4, size=2)) for _ in range(9)]
    frames = np.stack([np.roll(base, (-dy, -dx), axis=(0, 1)) for dy, dx in shifts])
    out, found = stabilize_translation(FrameSequence(frames))
    assert [tuple(s) for s in found] == [tuple(map(int, s)) for s in shifts]
    for t in range(10):
        ok = out.valid[t]
        assert np.array_equal(out.data[t, ..., 0][ok], base[ok])
    static, zero = stabilize_translation(FrameSequence(np.repeat(base[None], 4, axis=0)))
    assert not zero.any()


def test_code_flicker_does_not_induce_shifts():
    bank = bank_for_interval(CodeSpec(amplitude_scale=0.01), 0, 60)
    rng = np.random.default_rng(3)
    texture = rng.random((32, 32, 1))
    scene = SceneModel(0.2 + 0.3 * texture, 0.4 * texture[None])
    v = render(scene, bank, NOISELESS, 0, 60)
    _, shifts = stabilize_translation(v)
    assert not shifts.any()


def test_linearize_gamma_recovers_linear_transport():
    bank = bank_for_interval(CodeSpec(), 0, 256)
    c = code_for_interval(bank, 0, 256)
    scene = demo_scene(8, 8, 1)
    scene.gamma = 2.2
    v = render(scene, bank, NOISELESS, 0, 256)
    ci = code_image(v, c, linearize_gamma=2.2)
    assert rel_err(ci.values, truth(scene)) <= 1e-9


def test_export_code_image_sidecar():
    bank = bank_for_interval(CodeSpec(), 0, 256)
    scene = demo_scene(8, 8, 3)
    v = render(scene, bank, NOISELESS, 0, 256)
    ci = code_image(v, code_for_interval(bank, 0, 256), AnalysisWindow(128, 256, 2), source_id=0)
    blob, side = export_code_image(ci)
    img = read_netpbm(blob)
    assert img.shape == (4, 4, 3)
    fields = dict(line.split("=") for line in side.strip().splitlines())
    assert fields["w"] == "256" and fields["downsample"] == "2" and fields["source_id"] == "0"
    assert float(fields["scale_max"]) > 0
