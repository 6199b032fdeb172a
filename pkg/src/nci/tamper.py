"""Known-ground-truth video manipulations: cut, splice, retime, composite.

Every operation returns the edited video and an EditLog; `replay` applies a
log to the original and reproduces the output bit-exactly.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .video import FrameSequence

LOG_HEADER = "# nci-editlog v1"
KINDS = ("cut", "splice", "retime", "composite")


@dataclass
class EditRecord:
    kind: str
    params: dict

    def to_line(self) -> str:
        parts = [self.kind]
        for key, value in self.params.items():
            parts.append(f"{key}={_format_value(value)}")
        return " ".join(parts)


@dataclass
class EditLog:
    records: list = field(default_factory=list)
    source_frames: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def extend(self, other: "EditLog") -> "EditLog":
        return EditLog(self.records + other.records, self.source_frames or other.source_frames)

    def to_text(self) -> str:
        lines = [LOG_HEADER, f"# source_frames={self.source_frames}"]
        lines += [r.to_line() for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EditLog":
        lines = text.splitlines()
        if not lines or lines[0].strip() != LOG_HEADER:
            raise ParseError(f"missing header {LOG_HEADER!r}", line=1)
        log = cls()
        for no, line in enumerate(lines[1:], start=2):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# source_frames="):
                    log.source_frames = int(line.split("=", 1)[1])
                continue
            kind, *fields = line.split()
            if kind not in KINDS:
                raise ParseError(f"unknown edit kind {kind!r}", line=no)
            params = {}
            for item in fields:
                if "=" not in item:
                    raise ParseError(f"expected key=value, got {item!r}", line=no)
                key, value = item.split("=", 1)
                try:
                    params[key] = _parse_value(key, value)
                except (ValueError, TypeError) as exc:
                    raise ParseError(f"bad value for {key}: {exc}", line=no) from None
            log.records.append(EditRecord(kind, params))
        return log


def _format_value(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, np.ndarray):
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(value, dtype="<f8"), allow_pickle=False)
        return base64.b64encode(buf.getvalue()).decode("ascii")
    if isinstance(value, (list, tuple)):
        # segment lists: START:STOP items
        return ",".join(f"{int(a)}:{int(b)}" for a, b in value)
    return str(value)


_INT_KEYS = {"t_start", "n_removed", "fade", "y", "x", "h", "w", "t0", "t1", "in_frames", "out_frames"}


def _parse_value(key, value):
    if key == "patch":
        arr = np.load(io.BytesIO(base64.b64decode(value.encode("ascii"), validate=True)), allow_pickle=False)
        return arr
    if key == "segments":
        out = []
        for item in value.split(","):
            a, b = item.split(":")
            out.append((int(a), int(b)))
        return out
    if key == "crossfade":
        return value == "1"
    if key in _INT_KEYS:
        return int(value)
    if key == "rho":
        return float(value)
    return value


def _check_video(video):
    if not isinstance(video, FrameSequence):
        raise TypeError("expected a FrameSequence")


def _result(video, data, kind, params, provenance):
    log = EditLog([EditRecord(kind, params)], video.num_frames)
    note = f"{video.provenance}|{provenance}" if video.provenance else provenance
    return FrameSequence(data, video.fps, note), log


def cut(video: FrameSequence, t_start: int, n_removed: int, *, crossfade: bool = False, fade: int = 3):
    """Remove frames [t_start, t_start + n_removed).

    With `crossfade`, the first `fade` frames after the seam blend the
    continuation of the earlier footage into the later footage with linear
    weights, a stand-in for an interpolated warp cut.
    """
    _check_video(video)
    T = video.num_frames
    if t_start < 0 or n_removed < 0 or t_start + n_removed > T:
        raise ValueError(f"cut [{t_start}, {t_start + n_removed}) outside video of {T} frames")
    data = video.data
    out = np.concatenate([data[:t_start], data[t_start + n_removed:]], axis=0)
    if crossfade and n_removed > 0:
        for i in range(fade):
            j = t_start + i
            if j >= out.shape[0] or j >= T:
                break
            lam = (i + 1) / (fade + 1)
            out[j] = (1.0 - lam) * data[j] + lam * out[j]
    params = {"t_start": int(t_start), "n_removed": int(n_removed), "crossfade": bool(crossfade), "fade": int(fade)}
    return _result(video, out, "cut", params, f"cut@{t_start}+{n_removed}")


def splice(video: FrameSequence, segment_order):
    """Concatenate the given [t0, t1) segments in order."""
    _check_video(video)
    T = video.num_frames
    segs = [(int(a), int(b)) for a, b in segment_order]
    if not segs:
        raise ValueError("splice needs at least one segment")
    for a, b in segs:
        if not 0 <= a <= b <= T:
            raise ValueError(f"segment [{a}, {b}) outside video of {T} frames")
    out = np.concatenate([video.data[a:b] for a, b in segs], axis=0)
    if out.shape[0] == 0:
        raise ValueError("splice produced an empty video")
    return _result(video, out, "splice", {"segments": segs}, "splice")


def retime_length(n: int, rho: float) -> int:
    return max(1, int(round(n / rho)))


def _resample(data, rho):
    n = data.shape[0]
    m = retime_length(n, rho)
    pos = np.minimum(np.arange(m) * rho, n - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = (pos - i0)[:, None, None, None]
    return data[i0] * (1.0 - frac) + data[i1] * frac


def retime(video: FrameSequence, rho: float, t_range=None):
    """Play footage at `rho` times its captured speed using linear interpolation.

    Output frame j samples input time j * rho (clamped to the last frame), so
    the output has round(n / rho) frames. Restricting to `t_range` retimes
    only that span, modelling a local acceleration.
    """
    _check_video(video)
    if not rho > 0:
        raise ValueError("rho must be > 0")
    T = video.num_frames
    t0, t1 = (0, T) if t_range is None else (int(t_range[0]), int(t_range[1]))
    if not 0 <= t0 < t1 <= T:
        raise ValueError(f"retime range [{t0}, {t1}) outside video of {T} frames")
    mid = _resample(video.data[t0:t1], rho)
    out = np.concatenate([video.data[:t0], mid, video.data[t1:]], axis=0)
    params = {"rho": float(rho), "t0": t0, "t1": t1, "in_frames": t1 - t0, "out_frames": mid.shape[0]}
    return _result(video, out, "retime", params, f"retime x{rho}")


def composite(video: FrameSequence, patch, rect, t_range=None):
    """Replace pixels in rect = (y, x, h, w) with patch content.

    `patch` is a scalar, an h x w (x C) image, or an n x h x w (x C) sequence
    matching the frame range.
    """
    _check_video(video)
    T, H, W, C = video.shape
    y, x, h, w = (int(v) for v in rect)
    if h < 0 or w < 0 or y < 0 or x < 0 or y + h > H or x + w > W:
        raise ValueError(f"rect {rect} outside {H}x{W} frame")
    t0, t1 = (0, T) if t_range is None else (int(t_range[0]), int(t_range[1]))
    if not 0 <= t0 <= t1 <= T:
        raise ValueError(f"composite range [{t0}, {t1}) outside video of {T} frames")
    n = t1 - t0
    p = np.asarray(patch, dtype=np.float64)
    if p.ndim == 0:
        p = np.full((h, w, C), float(p))
    elif p.ndim == 2:
        p = np.repeat(p[..., None], C, axis=2)
    if p.ndim == 3 and p.shape[0] == n and p.shape[1:] == (h, w) and (h, w) != p.shape[:2]:
        p = np.repeat(p[..., None], C, axis=3)
    if p.ndim == 3:
        if p.shape[:2] != (h, w):
            raise ValueError(f"patch shape {p.shape} does not match rect {h}x{w}")
        if p.shape[2] == 1 and C > 1:
            p = np.repeat(p, C, axis=2)
        p = np.broadcast_to(p, (n, h, w, C))
    elif p.ndim == 4:
        if p.shape[0] != n or p.shape[1:3] != (h, w):
            raise ValueError(f"patch sequence shape {p.shape} does not match {n} frames of {h}x{w}")
        if p.shape[3] == 1 and C > 1:
            p = np.repeat(p, C, axis=3)
    else:
        raise ValueError(f"unsupported patch shape {p.shape}")
    out = video.data.copy()
    out[t0:t1, y:y + h, x:x + w] = p
    params = {"y": y, "x": x, "h": h, "w": w, "t0": t0, "t1": t1, "patch": np.ascontiguousarray(p)}
    return _result(video, out, "composite", params, f"composite {h}x{w}@{y},{x}")


def _apply(video, record: EditRecord):
    p = record.params
    if record.kind == "cut":
        return cut(video, p["t_start"], p["n_removed"], crossfade=p.get("crossfade", False), fade=p.get("fade", 3))
    if record.kind == "splice":
        return splice(video, p["segments"])
    if record.kind == "retime":
        return retime(video, p["rho"], (p["t0"], p["t1"]))
    if record.kind == "composite":
        return composite(video, p["patch"], (p["y"], p["x"], p["h"], p["w"]), (p["t0"], p["t1"]))
    raise ValueError(f"unknown edit kind {record.kind!r}")


def replay(video: FrameSequence, log: EditLog):
    """Apply every record of `log` in order; returns (video, combined log)."""
    if log.source_frames and log.source_frames != video.num_frames:
        raise ValueError(f"log expects {log.source_frames} source frames, video has {video.num_frames}")
    out = video
    combined = EditLog([], video.num_frames)
    for record in log:
        out, step = _apply(out, record)
        combined.records.extend(step.records)
    return out, combined


def chain(video: FrameSequence, *edits):
    """Apply edits given as (function, args, kwargs) tuples; returns (video, log)."""
    log = EditLog([], video.num_frames)
    out = video
    for fn, args, kwargs in edits:
        out, step = fn(out, *args, **kwargs)
        log.records.extend(step.records)
    return out, log
