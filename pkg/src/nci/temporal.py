"""Temporal registration of video against a known code.

Offsets are capture-frame positions in the code: offset o means video frame j
was captured while the light showed code[o + j]. Scores are normalized
(zero-mean, unit-norm) cross-correlations, computed with FFTs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal

from .decode import bilateral_residual
from .parallel import pmap
from .video import FrameSequence

DEFAULT_CONFIDENCE_THRESHOLD = 1.5
# half-width of the main lobe excluded when looking for the runner-up peak;
# 15 frames is one period of the lowest default code frequency at 30 fps
DEFAULT_EXCLUSION = 15


@dataclass
class RegistrationResult:
    offset: int
    confidence: float
    offsets: np.ndarray
    scores: np.ndarray
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD

    @property
    def inconclusive(self) -> bool:
        return not self.confidence >= self.threshold

    def __iter__(self):
        yield self.offset
        yield self.confidence


@dataclass
class AlignmentMatrix:
    scores: np.ndarray  # (num offsets, num columns)
    offsets: np.ndarray  # capture-frame position for each row
    col_hop: int
    col_window: int
    rho: float = 1.0  # capture frames per video frame assumed by the columns

    @property
    def column_starts(self) -> np.ndarray:
        return np.arange(self.scores.shape[1]) * self.col_hop


@dataclass
class AlignmentCurve:
    column_starts: np.ndarray
    positions: np.ndarray  # best capture position per column
    confidence: np.ndarray
    confident: np.ndarray
    discontinuities: list = field(default_factory=list)  # (column, jump in frames)
    rho: float = 1.0

    @property
    def offsets(self) -> np.ndarray:
        """Capture position minus (rho times) video position: constant on an unedited run."""
        if self.rho == 1.0:
            return self.positions - self.column_starts
        return self.positions - self.rho * self.column_starts

    def video_frames_per_capture_frame(self) -> float:
        """Least-squares slope of video time against capture time over confident columns (1/rho)."""
        x = self.positions[self.confident].astype(float)
        y = self.column_starts[self.confident].astype(float)
        if len(x) < 2:
            return float("nan")
        return float(np.polyfit(x, y, 1)[0])


@dataclass
class SpeedScanResult:
    rho: float
    offset: int
    rho_grid: np.ndarray
    scores: np.ndarray
    offset_confidence: float = float("nan")


def geometric_grid(lo: float = 0.5, hi: float = 2.0, step: float = 1.01) -> np.ndarray:
    n = int(np.floor(np.log(hi / lo) / np.log(step) + 1e-9)) + 1
    return lo * step ** np.arange(n)


def _trace(video, bilateral=None) -> np.ndarray:
    if isinstance(video, FrameSequence):
        if bilateral:
            video = bilateral_residual(video, *bilateral)
        return video.mean_trace()
    trace = np.asarray(video, dtype=np.float64)
    if trace.ndim != 1:
        raise ValueError("expected a FrameSequence or a 1-D trace")
    return bilateral_residual(trace, *bilateral) if bilateral else trace


def normalized_xcorr(trace, code) -> np.ndarray:
    """NCC of `trace` against every full-overlap position of `code` (FFT path).

    Entry o compares trace with code[o:o + len(trace)].
    """
    trace = np.asarray(trace, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    n = len(trace)
    if len(code) < n:
        raise ValueError("code shorter than trace")
    t0 = trace - trace.mean()
    tn = np.sqrt(t0 @ t0)
    num = signal.correlate(code, t0, mode="valid", method="fft")
    cs = np.concatenate([[0.0], np.cumsum(code)])
    cs2 = np.concatenate([[0.0], np.cumsum(code * code)])
    seg_sum = cs[n:] - cs[:-n]
    seg_sq = cs2[n:] - cs2[:-n]
    var = np.maximum(seg_sq - seg_sum ** 2 / n, 0.0)
    den = tn * np.sqrt(var)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 1e-300, num / np.where(den > 0, den, 1.0), 0.0)
    return np.clip(out, -1.0, 1.0)


def normalized_xcorr_direct(trace, code) -> np.ndarray:
    """Reference O(n*m) implementation of normalized_xcorr."""
    trace = np.asarray(trace, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    n = len(trace)
    t0 = trace - trace.mean()
    out = np.empty(len(code) - n + 1)
    for o in range(len(out)):
        seg = code[o:o + n] - code[o:o + n].mean()
        den = np.sqrt((t0 @ t0) * (seg @ seg))
        out[o] = (t0 @ seg) / den if den > 0 else 0.0
    return out


def peak_confidence(scores, exclusion: int = DEFAULT_EXCLUSION):
    """(argmax, peak / best score outside +-exclusion of the peak)."""
    scores = np.asarray(scores)
    best = int(np.argmax(scores))
    peak = scores[best]
    mask = np.ones(len(scores), dtype=bool)
    mask[max(0, best - exclusion):best + exclusion + 1] = False
    if not mask.any():
        return best, float("inf") if peak > 0 else 0.0
    second = scores[mask].max()
    if peak <= 0:
        return best, 0.0
    if second <= 0:
        return best, float("inf")
    return best, float(peak / second)


def _offsets(search_range, code_len, n):
    if search_range is None:
        search_range = range(0, code_len - n + 1)
    elif isinstance(search_range, tuple):
        search_range = range(int(search_range[0]), int(search_range[1]))
    offsets = np.array([o for o in search_range if 0 <= o <= code_len - n], dtype=int)
    if len(offsets) == 0:
        raise ValueError("search range is empty (or the code is too short to cover it)")
    return offsets


def _scores_over(trace, code, offsets):
    lo, hi = offsets.min(), offsets.max()
    curve = normalized_xcorr(trace, code[lo:hi + len(trace)])
    return curve[offsets - lo]


def global_register(video, code, search_range=None, *, bilateral=None,
                    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
                    exclusion: int = DEFAULT_EXCLUSION) -> RegistrationResult:
    """Matched filter of the spatially averaged trace against the code.

    A confidence below `threshold` means registration is inconclusive, which
    for a scene lit mostly by coded sources points to temporal or frame-wide
    spatial manipulation.
    """
    trace = _trace(video, bilateral)
    code = np.asarray(code, dtype=np.float64)
    offsets = _offsets(search_range, len(code), len(trace))
    scores = _scores_over(trace, code, offsets)
    best, conf = peak_confidence(scores, exclusion)
    return RegistrationResult(int(offsets[best]), conf, offsets, scores, threshold)


def _stretched_scores(trace, code, offsets, rho):
    """NCC of trace against code sampled at o + rho * j (linear interpolation), per offset o."""
    n = len(trace)
    pos = offsets[:, None] + np.arange(n)[None, :] * rho
    segs = np.interp(pos, np.arange(len(code)), code)
    segs -= segs.mean(axis=1, keepdims=True)
    t0 = trace - trace.mean()
    den = np.linalg.norm(segs, axis=1) * np.linalg.norm(t0)
    out = (segs @ t0) / np.where(den > 0, den, 1.0)
    return np.clip(np.where(den > 0, out, 0.0), -1.0, 1.0)


def alignment_matrix(video, code, col_window: int = 90, col_hop: int = 15, offset_range=None,
                     *, bilateral=None, threads: int = 1, rho: float = 1.0) -> AlignmentMatrix:
    """Column j correlates video frames [j*hop, j*hop + window) against every code position.

    With rho != 1 (for example the speed found by speed_scan) each column is
    compared with the code stretched by rho, so retimed footage still lines up.
    """
    trace = _trace(video, bilateral)
    code = np.asarray(code, dtype=np.float64)
    if col_window > len(trace):
        raise ValueError(f"column window {col_window} exceeds video length {len(trace)}")
    if col_hop < 1:
        raise ValueError("col_hop must be >= 1")
    if not rho > 0:
        raise ValueError("rho must be > 0")
    span = int(np.ceil(rho * (col_window - 1))) + 1
    offsets = _offsets(offset_range, len(code), span)
    starts = range(0, len(trace) - col_window + 1, col_hop)
    if rho == 1.0:
        col = lambda s: _scores_over(trace[s:s + col_window], code, offsets)
    else:
        col = lambda s: _stretched_scores(trace[s:s + col_window], code, offsets, rho)
    cols = pmap(col, starts, threads)
    return AlignmentMatrix(np.stack(cols, axis=1), offsets, col_hop, col_window, float(rho))


def extract_alignment_curve(matrix: AlignmentMatrix, jump_threshold: float = 2,
                            confidence_floor: float = DEFAULT_CONFIDENCE_THRESHOLD,
                            exclusion: int = DEFAULT_EXCLUSION) -> AlignmentCurve:
    """Per-column best position; discontinuities where consecutive confident offsets jump.

    A jump is reported between two confident columns whose offsets differ by
    more than `jump_threshold` frames, attributed to the later column.
    """
    if matrix.scores.size == 0:
        raise ValueError("empty alignment matrix")
    n_cols = matrix.scores.shape[1]
    positions = np.empty(n_cols, dtype=int)
    conf = np.empty(n_cols)
    for j in range(n_cols):
        best, conf[j] = peak_confidence(matrix.scores[:, j], exclusion)
        positions[j] = matrix.offsets[best]
    confident = conf >= confidence_floor
    curve = AlignmentCurve(matrix.column_starts, positions, conf, confident, rho=matrix.rho)
    offsets = curve.offsets
    prev = None
    for j in np.flatnonzero(confident):
        jump = offsets[j] - offsets[prev] if prev is not None else 0
        if abs(jump) > jump_threshold:
            curve.discontinuities.append((int(j), int(round(jump))))
        prev = j
    return curve


# -- speed ------------------------------------------------------------------------

def _stretch(code, start, rho, length):
    pos = start + np.arange(length) * rho
    return np.interp(pos, np.arange(len(code)), code)


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def _welch_magnitude(x, nfft, window):
    hop = max(1, nfft // 2)
    frames = [x[s:s + nfft] for s in range(0, len(x) - nfft + 1, hop)]
    if not frames:
        frames = [np.pad(x, (0, nfft - len(x)))]
    mags = [np.abs(np.fft.rfft((f - f.mean()) * window)) for f in frames]
    return np.mean(mags, axis=0)


def speed_scan(video, code, rho_grid=None, search_range=None, *, bilateral=None,
               threads: int = 1, exclusion: int = DEFAULT_EXCLUSION) -> SpeedScanResult:
    """Find a global speed factor, then the offset at that speed.

    rho is capture frames per video frame (0.6 means the video plays at 0.6x).
    Stage one compares the unit-normalized magnitude spectrum of the averaged
    trace with that of the code stretched by each candidate rho, so it needs
    no alignment; stage two is a matched filter of the stretched code.
    """
    trace = _trace(video, bilateral)
    code = np.asarray(code, dtype=np.float64)
    grid = geometric_grid() if rho_grid is None else np.asarray(rho_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("rho grid is empty")
    n = len(trace)
    win = np.hanning(n)
    target = np.abs(np.fft.rfft((trace - trace.mean()) * win))
    target[0] = 0.0
    target = _unit(target)

    lo = 0 if search_range is None else int(search_range[0] if isinstance(search_range, tuple) else min(search_range))
    hi = len(code) if search_range is None else int(search_range[1] if isinstance(search_range, tuple) else max(search_range) + 1)

    def score(rho):
        span = (min(len(code), hi + int(np.ceil(rho * n))) - 1 - lo)
        length = int(span / rho) + 1
        if length < n:
            return -np.inf
        stretched = _stretch(code, lo, rho, length)
        mag = _welch_magnitude(stretched, n, win)
        mag[0] = 0.0
        return float(_unit(mag) @ target)

    scores = np.array(pmap(score, grid, threads))
    best_rho = float(grid[int(np.argmax(scores))])

    last = len(code) - 1 - best_rho * (n - 1)
    offsets = np.arange(lo, min(hi, int(np.floor(last)) + 1))
    if len(offsets) == 0:
        raise ValueError("code too short for the detected speed")
    ncc = _stretched_scores(trace, code, offsets, best_rho)
    best, conf = peak_confidence(ncc, exclusion)
    return SpeedScanResult(best_rho, int(offsets[best]), grid, scores, conf)


# -- local SNR weighting ----------------------------------------------------------

@dataclass
class PatchRegistrationResult:
    offset: int
    confidence: float
    weight_map: np.ndarray  # (patch rows, patch cols), sums to 1
    patch_peak_z: np.ndarray
    offsets: np.ndarray
    scores: np.ndarray
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD

    @property
    def inconclusive(self) -> bool:
        return not self.confidence >= self.threshold


def patch_traces(video: FrameSequence, patch_size: int) -> np.ndarray:
    """Mean trace of every patch_size x patch_size tile; edge tiles use the pixels they have."""
    data = video.data.mean(axis=3)
    T, H, W = data.shape
    ys = np.arange(0, H, patch_size)
    xs = np.arange(0, W, patch_size)
    sums = np.add.reduceat(np.add.reduceat(data, ys, axis=1), xs, axis=2)
    hs = np.diff(np.append(ys, H))
    ws = np.diff(np.append(xs, W))
    return sums / (hs[:, None] * ws[None, :])[None]


def patch_weighted_register(video: FrameSequence, code, patch_size: int = 16, search_range=None, *,
                            bilateral=None, temperature: float = 1.0,
                            threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
                            exclusion: int = DEFAULT_EXCLUSION) -> PatchRegistrationResult:
    """Registration that favors patches where the code is locally strong.

    Each patch's averaged trace gets its own correlation curve. A patch's peak
    confidence is its curve's maximum in standard deviations above the curve
    mean; weights are a softmax of those (divided by `temperature`). The final
    curve is the weighted sum of patch curves.
    """
    if patch_size < 1:
        raise ValueError("patch_size must be >= 1")
    if bilateral:
        video = bilateral_residual(video, *bilateral)
    traces = patch_traces(video, patch_size)
    T, py, px = traces.shape
    code = np.asarray(code, dtype=np.float64)
    offsets = _offsets(search_range, len(code), T)
    flat = traces.reshape(T, -1).T
    curves = np.stack([_scores_over(tr, code, offsets) for tr in flat])
    sd = curves.std(axis=1)
    z = (curves.max(axis=1) - curves.mean(axis=1)) / np.where(sd > 0, sd, 1.0)
    logits = z / temperature
    w = np.exp(logits - logits.max())
    w /= w.sum()
    combined = w @ curves
    best, conf = peak_confidence(combined, exclusion)
    return PatchRegistrationResult(
        int(offsets[best]), conf, w.reshape(py, px), z.reshape(py, px), offsets, combined, threshold
    )


# -- exports ----------------------------------------------------------------------

def write_matrix_csv(matrix: AlignmentMatrix, stream=None) -> str:
    """Rows are code offsets; the first column is the offset, then one column per video column."""
    lines = [f"# col_window={matrix.col_window}", f"# col_hop={matrix.col_hop}",
             "offset," + ",".join(str(int(s)) for s in matrix.column_starts)]
    for off, row in zip(matrix.offsets, matrix.scores):
        lines.append(f"{int(off)}," + ",".join(f"{v:.9g}" for v in row))
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def matrix_heatmap(matrix: AlignmentMatrix) -> bytes:
    """8-bit PGM, offsets down and columns across, scores mapped from [-1, 1] to [0, 255]."""
    from .io_formats import write_netpbm

    return write_netpbm((matrix.scores + 1.0) / 2.0, 8)


def curve_text(curve: AlignmentCurve) -> str:
    lines = ["# column video_frame capture_frame offset confidence confident"]
    for j, (s, p, c, ok) in enumerate(zip(curve.column_starts, curve.positions, curve.confidence, curve.confident)):
        lines.append(f"{j} {int(s)} {int(p)} {int(p - s)} {c:.6g} {int(ok)}")
    for col, jump in curve.discontinuities:
        lines.append(f"discontinuity column={col} jump={jump}")
    return "\n".join(lines) + "\n"
