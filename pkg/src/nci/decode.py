"""Code images and the motion-robust filters that precede them.

A code image is the per-pixel least-squares projection of the observed trace
onto the analysis code over a window. The code is centered (with the same
weights as the estimate) before projecting, so the uncoded term drops out
exactly even when the window's code is not perfectly zero-mean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateCodeError
from .video import FrameSequence, box_downsample

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 450
DEFAULT_DOWNSAMPLE = 2
DEFAULT_TRANSIENT_SIGMA = 0.05
DEFAULT_BILATERAL_SIGMA = 0.05
DEFAULT_BILATERAL_RADIUS = 15


@dataclass(frozen=True)
class AnalysisWindow:
    t_center: int
    w: int = DEFAULT_WINDOW
    downsample: int = DEFAULT_DOWNSAMPLE

    def __post_init__(self):
        if self.w < 2:
            raise ValueError("window length must be >= 2 frames")
        if self.downsample < 1:
            raise ValueError("downsample factor must be >= 1")

    def bounds(self, num_frames: int) -> tuple[int, int]:
        """[start, stop) of the window, shifted (and shortened if needed) to fit the video."""
        w = min(self.w, num_frames)
        start = self.t_center - w // 2
        start = min(max(start, 0), num_frames - w)
        return start, start + w

    @property
    def averaged_samples(self) -> int:
        return self.downsample ** 2


@dataclass
class CodeImage:
    values: np.ndarray  # H x W x C
    source_id: int = 0
    window: tuple = (0, 0)  # (t_center, w)
    weight_map: Optional[np.ndarray] = None
    valid: Optional[np.ndarray] = None
    scale_note: str = "relative: known only up to a global scale factor"
    code_rms: float = float("nan")
    downsample: int = 1
    extras: dict = field(default_factory=dict)


def bilateral_residual(video, sigma_r: float = DEFAULT_BILATERAL_SIGMA,
                       radius: int = DEFAULT_BILATERAL_RADIUS):
    """y - B(y) with B a 1-D temporal bilateral filter applied per pixel.

    The temporal kernel is Gaussian with std radius/2, truncated at +-radius;
    the range kernel is Gaussian with std sigma_r. Small fluctuations (the
    code) survive in the residual while large transients are absorbed by B.
    Accepts a FrameSequence or a raw T x ... array and returns the same kind.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if sigma_r <= 0:
        raise ValueError("sigma_r must be positive")
    data = video.data if isinstance(video, FrameSequence) else np.asarray(video, dtype=np.float64)
    T = data.shape[0]
    s = radius / 2.0
    num = np.zeros_like(data)
    den = np.zeros_like(data)
    inv = -0.5 / sigma_r ** 2
    for d in range(-radius, radius + 1):
        ws = np.exp(-0.5 * (d / s) ** 2)
        if d >= 0:
            cur, nb = slice(0, T - d), slice(d, T)
        else:
            cur, nb = slice(-d, T), slice(0, T + d)
        if cur.stop <= cur.start:
            continue
        diff = data[nb] - data[cur]
        wgt = ws * np.exp(inv * diff * diff)
        num[cur] += wgt * diff
        den[cur] += wgt
    # y - sum(w y')/sum(w) written as -sum(w (y' - y))/sum(w): exactly 0 on flat traces
    resid = -num / den
    if isinstance(video, FrameSequence):
        return video.with_data(resid, provenance=video.provenance + " | bilateral_residual")
    return resid


def phase_correlation_shift(reference: np.ndarray, image: np.ndarray) -> tuple[int, int]:
    """Integer (dy, dx) such that np.roll(image, (dy, dx)) best matches reference."""
    a = reference - reference.mean()
    b = image - image.mean()
    cross = np.fft.fft2(a) * np.conj(np.fft.fft2(b))
    # regularized whitening: bins with negligible energy are not amplified to unit weight
    mag = np.abs(cross)
    cross /= mag + 1e-3 * max(float(mag.max()), 1e-300)
    surface = np.fft.ifft2(cross).real
    dy, dx = np.unravel_index(np.argmax(surface), surface.shape)
    h, w = surface.shape
    if dy > h // 2:
        dy -= h
    if dx > w // 2:
        dx -= w
    return int(dy), int(dx)


def stabilize_translation(video: FrameSequence):
    """Translation-only stabilization against frame 0 by whole-frame phase correlation.

    Strongly periodic content makes the shift ambiguous; real scenes rarely are.

    Returns (stabilized video, shifts) where shifts[t] = (dy, dx) was applied to
    frame t. Pixels that wrapped around the border are marked invalid.
    """
    if video.num_frames < 2:
        raise ValueError("stabilization needs at least 2 frames")
    lum = video.data.mean(axis=3)
    T, H, W = lum.shape
    out = np.empty_like(video.data)
    valid = np.ones((T, H, W), dtype=bool) if video.valid is None else video.valid.copy()
    shifts = np.zeros((T, 2), dtype=int)
    for t in range(T):
        dy, dx = (0, 0) if t == 0 else phase_correlation_shift(lum[0], lum[t])
        shifts[t] = dy, dx
        out[t] = np.roll(video.data[t], (dy, dx), axis=(0, 1))
        valid[t] = np.roll(valid[t], (dy, dx), axis=(0, 1))
        if dy > 0:
            valid[t, :dy] = False
        elif dy < 0:
            valid[t, H + dy:] = False
        if dx > 0:
            valid[t, :, :dx] = False
        elif dx < 0:
            valid[t, :, W + dx:] = False
    note = video.provenance + " | stabilize_translation"
    return video.with_data(out, provenance=note, valid=valid), shifts


def _window_code(code, start, stop, num_frames):
    code = np.asarray(code, dtype=np.float64).ravel()
    if code.shape[0] == num_frames:
        return code[start:stop]
    if code.shape[0] == stop - start:
        return code
    raise ValueError(
        f"code has {code.shape[0]} samples; expected {num_frames} (video-aligned) "
        f"or {stop - start} (window-aligned)"
    )


def _prepare(video, code, window, *, linearize_gamma=None, bilateral=None, margin=0):
    """Slice, linearize, downsample and optionally bilateral-filter the window.

    Returns (observations, raw observations, code, valid weights, saturated, window).
    """
    T = video.num_frames
    if window is None:
        window = AnalysisWindow(t_center=T // 2, w=T, downsample=1)
    start, stop = window.bounds(T)
    c = _window_code(code, start, stop, T)

    # bilateral context on each side, not counted in the estimate
    lo = max(0, start - margin)
    hi = min(T, stop + margin)
    raw = video.data[lo:hi]
    saturated = (raw >= 1.0) | (raw <= 0.0)
    if linearize_gamma:
        raw = np.clip(raw, 0.0, 1.0) ** linearize_gamma
    valid = np.ones(raw.shape[:3], dtype=bool) if video.valid is None else video.valid[lo:hi]
    d = window.downsample
    if d > 1:
        raw = box_downsample(raw, d)
        saturated = box_downsample(saturated.astype(np.float64), d) > 0
        valid = box_downsample(valid.astype(np.float64)[..., None], d)[..., 0] >= 1.0
    obs = bilateral_residual(raw, *bilateral) if bilateral else raw
    inner = slice(start - lo, stop - lo)
    return obs[inner], raw[inner], c, valid[inner], saturated[inner], window, (start, stop)


def _weighted_estimate(y, c, g):
    """Per pixel: sum g*(c - cbar)*y / sum g*(c - cbar)*c, with cbar the g-weighted mean."""
    cb = c[:, None, None, None]
    sw = g.sum(axis=0)
    safe = np.where(sw > 0, sw, 1.0)
    cbar = (g * cb).sum(axis=0) / safe
    gcc = g * (cb - cbar[None])
    num = (gcc * y).sum(axis=0)
    den = (gcc * cb).sum(axis=0)
    return num, den, sw


def _joint_estimate(y, c, others, g):
    """Weighted least squares of y on [1, c, others...] per pixel; returns c's coefficient.

    Exact when the window's codes are not mutually orthogonal (partial segments).
    """
    basis = np.vstack([np.ones_like(c), c, others])
    p = basis.shape[0]
    gram = np.empty(g.shape[1:] + (p, p))
    rhs = np.empty(g.shape[1:] + (p,))
    gy = g * y
    for i in range(p):
        rhs[..., i] = np.tensordot(basis[i], gy, axes=(0, 0))
        for j in range(i, p):
            gram[..., i, j] = gram[..., j, i] = np.tensordot(basis[i] * basis[j], g, axes=(0, 0))
    scale = np.abs(np.diagonal(gram, axis1=-2, axis2=-1)).max(axis=-1)
    det = np.linalg.det(gram / np.where(scale > 0, scale, 1.0)[..., None, None])
    ok = np.abs(det) > 1e-12
    safe = np.where(ok[..., None, None], gram, np.eye(p))
    coef = np.linalg.solve(safe, rhs[..., None])[..., 0]
    return coef[..., 1], ok


def _window_others(other_codes, start, stop, num_frames):
    if other_codes is None or len(other_codes) == 0:
        return None
    return np.vstack([_window_code(o, start, stop, num_frames) for o in other_codes])


def code_image(video: FrameSequence, code, window: Optional[AnalysisWindow] = None, *,
               source_id: int = 0, bilateral=None, linearize_gamma=None,
               other_codes=None) -> CodeImage:
    """Estimate the transport image of one coded source.

    `code` is the analysis code, either aligned with the whole video (one sample
    per frame) or with the window only. `bilateral=(sigma_r, radius)` filters
    the traces first. Scaling the analysis code by s scales the result by 1/s.

    Codes are orthogonal only over whole segments. Passing the other sources'
    codes as `other_codes` removes their cross-talk for arbitrary windows by
    solving the joint least-squares problem instead.
    """
    margin = bilateral[1] if bilateral else 0
    y, _, c, valid, _, window, (start, stop) = _prepare(
        video, code, window, linearize_gamma=linearize_gamma, bilateral=bilateral, margin=margin
    )
    cc = c - c.mean()
    if float(cc @ cc) <= 1e-30 * len(c):
        raise DegenerateCodeError("analysis code has zero energy over the window")
    g = np.broadcast_to(valid[..., None], y.shape).astype(np.float64)
    others = _window_others(other_codes, start, stop, video.num_frames)
    if others is None:
        num, den, sw = _weighted_estimate(y, c, g)
        ok = np.abs(den) > 1e-12 * float(cc @ cc)
        values = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    else:
        values, ok = _joint_estimate(y, c, others, g)
        values = np.where(ok, values, 0.0)
    return CodeImage(
        values,
        source_id=source_id,
        window=(window.t_center, stop - start),
        valid=ok,
        code_rms=float(np.sqrt(np.mean(cc ** 2))),
        downsample=window.downsample,
    )


def transient_weights(raw: np.ndarray, center: int, sigma: float) -> np.ndarray:
    """g(t) = exp(-0.5 * ((y(t) - y(center)) / sigma)^2) per pixel and channel."""
    diff = raw - raw[center][None]
    return np.exp(-0.5 * (diff / sigma) ** 2)


def transient_filtered_code_image(video: FrameSequence, code, window: Optional[AnalysisWindow] = None,
                                  sigma: float = DEFAULT_TRANSIENT_SIGMA, *, source_id: int = 0,
                                  bilateral=None, linearize_gamma=None,
                                  other_codes=None) -> CodeImage:
    """Code image with per-sample Gaussian weights on the change from the center frame.

    Saturated or clipped samples get weight zero. Pixels whose effective
    weights vanish are reported in `valid` (False) and their value set to 0.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    margin = bilateral[1] if bilateral else 0
    y, raw, c, valid, saturated, window, (start, stop) = _prepare(
        video, code, window, linearize_gamma=linearize_gamma, bilateral=bilateral, margin=margin
    )
    cc = c - c.mean()
    if float(cc @ cc) <= 1e-30 * len(c):
        raise DegenerateCodeError("analysis code has zero energy over the window")
    center = min(max(window.t_center - start, 0), stop - start - 1)
    g = transient_weights(raw, center, sigma)
    g = np.where(saturated | ~valid[..., None], 0.0, g)
    others = _window_others(other_codes, start, stop, video.num_frames)
    if others is None:
        num, den, sw = _weighted_estimate(y, c, g)
        ok = (sw > 0) & (np.abs(den) > 1e-9 * float(cc @ cc) / len(c))
    else:
        num, ok = _joint_estimate(y, c, others, g)
        den = np.ones_like(num)
    if not ok.all():
        log.warning("%d pixel-channels have no usable transient weight", int((~ok).sum()))
    values = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    return CodeImage(
        values,
        source_id=source_id,
        window=(window.t_center, stop - start),
        weight_map=g.mean(axis=0),
        valid=ok,
        code_rms=float(np.sqrt(np.mean(cc ** 2))),
        downsample=window.downsample,
    )


def code_correlation(frames: np.ndarray, code) -> np.ndarray:
    """Raw inner product c^T y per pixel over all frames given."""
    return np.tensordot(np.asarray(code, dtype=np.float64), frames, axes=(0, 0))


def export_code_image(ci: CodeImage, bit_depth: int = 16):
    """Scale a code image for display (negatives clamp to 0) and describe the scaling.

    Returns (netpbm bytes, sidecar text).
    """
    from .io_formats import write_netpbm

    vals = np.clip(ci.values, 0.0, None)
    hi = float(np.percentile(vals, 99.5)) if vals.size else 0.0
    hi = hi if hi > 0 else 1.0
    image = np.clip(vals / hi, 0.0, 1.0)
    if image.shape[2] not in (1, 3):
        image = image.mean(axis=2, keepdims=True)
    blob = write_netpbm(image, bit_depth)
    sidecar = (
        f"source_id={ci.source_id}\n"
        f"t_center={ci.window[0]}\n"
        f"w={ci.window[1]}\n"
        f"downsample={ci.downsample}\n"
        f"scale_min=0\n"
        f"scale_max={hi!r}\n"
        f"value_min={float(ci.values.min())!r}\n"
        f"value_max={float(ci.values.max())!r}\n"
        f"code_rms={ci.code_rms!r}\n"
    )
    return blob, sidecar
