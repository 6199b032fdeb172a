"""Binary formats: YUV4MPEG2 input, FSEQ float containers, NetPBM images.

FSEQ layout (all little-endian):

    offset  size  field
    0       4     magic b"FSEQ"
    4       4     version (u32, currently 1)
    8       16    T, H, W, C (u32 each)
    24      4*N   float32 samples, row-major (t, h, w, c)

Y4M frames are converted to RGB with the BT.601 full-range matrix

    R = Y + 1.402 (V - 128)
    G = Y - 0.344136 (U - 128) - 0.714136 (V - 128)
    B = Y + 1.772 (U - 128)

and divided by 255. 4:2:0 chroma is bilinearly upsampled assuming centered
(JPEG-style) chroma siting.
"""

from __future__ import annotations

import io
import struct
from fractions import Fraction

import numpy as np

from .errors import ParseError
from .video import FrameSequence

FSEQ_MAGIC = b"FSEQ"
FSEQ_VERSION = 1
_FSEQ_HEADER = struct.Struct("<4sIIIII")

Y4M_MAGIC = b"YUV4MPEG2"

_YUV_TO_RGB = np.array([
    [1.0, 0.0, 1.402],
    [1.0, -0.344136, -0.714136],
    [1.0, 1.772, 0.0],
])


def _read_all(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        return bytes(stream)
    return stream.read()


# -- FSEQ -------------------------------------------------------------------------

def write_fseq(video: FrameSequence, stream=None) -> bytes:
    data = np.ascontiguousarray(video.data, dtype="<f4")
    T, H, W, C = data.shape
    blob = _FSEQ_HEADER.pack(FSEQ_MAGIC, FSEQ_VERSION, T, H, W, C) + data.tobytes()
    if stream is not None:
        stream.write(blob)
    return blob


def read_fseq(stream, fps: float = 30.0) -> FrameSequence:
    """Parse an FSEQ container. The format carries no frame rate; pass `fps`."""
    blob = _read_all(stream)
    if len(blob) < _FSEQ_HEADER.size:
        raise ParseError("truncated FSEQ header", offset=len(blob))
    magic, version, T, H, W, C = _FSEQ_HEADER.unpack_from(blob, 0)
    if magic != FSEQ_MAGIC:
        raise ParseError(f"bad FSEQ magic {magic!r}", offset=0)
    if version != FSEQ_VERSION:
        raise ParseError(f"unsupported FSEQ version {version} (expected {FSEQ_VERSION})", offset=4)
    n = T * H * W * C
    expected = _FSEQ_HEADER.size + 4 * n
    if len(blob) < expected:
        raise ParseError(f"payload truncated: need {4 * n} bytes", offset=len(blob))
    if len(blob) > expected:
        raise ParseError("trailing bytes after FSEQ payload", offset=expected)
    data = np.frombuffer(blob, dtype="<f4", count=n, offset=_FSEQ_HEADER.size).reshape(T, H, W, C)
    return FrameSequence(data.astype(np.float64), fps=fps, provenance="fseq")


def fseq_payload(blob: bytes) -> np.ndarray:
    """Raw float32 samples of an FSEQ blob, without widening to float64."""
    _, _, T, H, W, C = _FSEQ_HEADER.unpack_from(blob, 0)
    return np.frombuffer(blob, dtype="<f4", offset=_FSEQ_HEADER.size).reshape(T, H, W, C)


# -- NetPBM -----------------------------------------------------------------------

def write_netpbm(image, bit_depth: int = 8) -> bytes:
    """Binary P5 (gray) or P6 (RGB) with values in [0, 1] scaled to maxval.

    A boolean 2-D array is written as a P4 bitmap (True = black).
    """
    image = np.asarray(image)
    if image.dtype == bool:
        return write_pbm(image)
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[..., 0]
    if image.ndim == 2:
        kind = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        kind = b"P6"
    else:
        raise ValueError(f"cannot write image of shape {image.shape} as NetPBM")
    maxval = 255 if bit_depth == 8 else 65535
    samples = np.rint(np.clip(image.astype(np.float64), 0.0, 1.0) * maxval)
    dtype = ">u1" if bit_depth == 8 else ">u2"
    h, w = image.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (kind, w, h, maxval)
    return header + samples.astype(dtype).tobytes()


def write_pbm(mask) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("PBM masks must be 2-D")
    h, w = mask.shape
    packed = np.packbits(mask, axis=1)
    return b"P4\n%d %d\n" % (w, h) + packed.tobytes()


def _header_tokens(blob: bytes, count: int):
    """Read `count` whitespace-separated header tokens after the magic, skipping comments."""
    pos = 2
    tokens = []
    while len(tokens) < count:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(blob):
            raise ParseError("truncated NetPBM header", offset=pos)
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace() and blob[pos:pos + 1] != b"#":
            pos += 1
        token = blob[start:pos]
        if not token.isdigit():
            raise ParseError(f"non-numeric header field {token!r}", offset=start)
        tokens.append(int(token))
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise ParseError("missing whitespace after NetPBM header", offset=pos)
    return tokens, pos + 1


def read_netpbm(stream) -> np.ndarray:
    """Parse binary P4/P5/P6. Returns H x W x C floats in [0, 1] (bool H x W for P4)."""
    blob = _read_all(stream)
    magic = blob[:2]
    if magic == b"P4":
        (w, h), pos = _header_tokens(blob, 2)
        row_bytes = (w + 7) // 8
        need = pos + row_bytes * h
        _check_length(blob, need)
        bits = np.frombuffer(blob, dtype=np.uint8, count=row_bytes * h, offset=pos).reshape(h, row_bytes)
        return np.unpackbits(bits, axis=1)[:, :w].astype(bool)
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"unsupported NetPBM magic {magic!r}", offset=0)
    (w, h, maxval), pos = _header_tokens(blob, 3)
    if not 0 < maxval < 65536:
        raise ParseError(f"maxval {maxval} out of range", offset=pos)
    channels = 1 if magic == b"P5" else 3
    size = 1 if maxval < 256 else 2
    need = pos + w * h * channels * size
    _check_length(blob, need)
    dtype = ">u1" if size == 1 else ">u2"
    raw = np.frombuffer(blob, dtype=dtype, count=w * h * channels, offset=pos)
    if raw.max(initial=0) > maxval:
        raise ParseError("sample exceeds maxval", offset=pos)
    return (raw.astype(np.float64) / maxval).reshape(h, w, channels)


def _check_length(blob, need):
    if len(blob) < need:
        raise ParseError("truncated NetPBM raster", offset=len(blob))
    if len(blob) > need:
        raise ParseError("trailing bytes after NetPBM raster", offset=need)


# -- Y4M --------------------------------------------------------------------------

_CHROMA_420 = {"420", "420jpeg", "420paldv", "420mpeg2"}


def _parse_rational(text: str, offset: int) -> Fraction:
    try:
        num, den = text.split(":")
        value = Fraction(int(num), int(den))
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"bad rational {text!r}", offset=offset) from exc
    return value


def _upsample_axis(plane: np.ndarray, size: int, axis: int) -> np.ndarray:
    """Linear 2x upsample along `axis` for centered chroma, edges clamped."""
    n = plane.shape[axis]
    pos = (np.arange(size) + 0.5) / 2.0 - 0.5
    pos = np.clip(pos, 0, n - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = pos - i0
    a = np.take(plane, i0, axis=axis)
    b = np.take(plane, i1, axis=axis)
    shape = [1] * plane.ndim
    shape[axis] = size
    frac = frac.reshape(shape)
    return a * (1 - frac) + b * frac


def yuv_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    yuv = np.stack([y, u - 128.0, v - 128.0], axis=-1)
    return (yuv @ _YUV_TO_RGB.T) / 255.0


def rgb_to_yuv(rgb: np.ndarray):
    """Inverse of yuv_to_rgb, returning unrounded Y, U, V on the 0-255 scale."""
    m = np.linalg.inv(_YUV_TO_RGB)
    yuv = (np.asarray(rgb, dtype=np.float64) * 255.0) @ m.T
    return yuv[..., 0], yuv[..., 1] + 128.0, yuv[..., 2] + 128.0


def read_y4m(stream, clip: bool = True) -> FrameSequence:
    blob = _read_all(stream)
    end = blob.find(b"\n")
    if end < 0:
        raise ParseError("missing Y4M header terminator", offset=len(blob))
    fields = blob[:end].split(b" ")
    if fields[0] != Y4M_MAGIC:
        raise ParseError(f"bad Y4M magic {fields[0]!r}", offset=0)
    width = height = None
    fps = Fraction(30)
    chroma = "420jpeg"
    offset = len(fields[0]) + 1
    for f in fields[1:]:
        if not f:
            offset += 1
            continue
        tag, value = chr(f[0]), f[1:].decode("ascii", "replace")
        if tag == "W":
            width = int(value)
        elif tag == "H":
            height = int(value)
        elif tag == "F":
            fps = _parse_rational(value, offset)
        elif tag == "C":
            chroma = value
        elif tag in "IAX":
            pass
        else:
            raise ParseError(f"unknown Y4M header tag {tag!r}", offset=offset)
        offset += len(f) + 1
    if not width or not height:
        raise ParseError("Y4M header lacks W/H", offset=end)
    if chroma == "444":
        cw, ch = width, height
    elif chroma in _CHROMA_420:
        cw, ch = (width + 1) // 2, (height + 1) // 2
    elif chroma == "mono":
        cw = ch = 0
    else:
        raise ParseError(f"unsupported chroma mode C{chroma}", offset=blob.find(b" C" + chroma.encode()) + 1)
    frame_bytes = width * height + 2 * cw * ch

    frames = []
    pos = end + 1
    index = 0
    while pos < len(blob):
        if blob[pos:pos + 5] != b"FRAME":
            raise ParseError(f"expected FRAME marker before frame {index}", offset=pos)
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise ParseError(f"unterminated FRAME header for frame {index}", offset=pos)
        start = nl + 1
        stop = start + frame_bytes
        if stop > len(blob):
            raise ParseError(
                f"frame {index} truncated: {len(blob) - start} of {frame_bytes} bytes", offset=len(blob)
            )
        raw = np.frombuffer(blob, dtype=np.uint8, count=frame_bytes, offset=start).astype(np.float64)
        y = raw[:width * height].reshape(height, width)
        if cw:
            u = raw[width * height:width * height + cw * ch].reshape(ch, cw)
            v = raw[width * height + cw * ch:].reshape(ch, cw)
            if chroma != "444":
                u = _upsample_axis(_upsample_axis(u, height, 0), width, 1)
                v = _upsample_axis(_upsample_axis(v, height, 0), width, 1)
        else:
            u = v = np.full_like(y, 128.0)
        rgb = yuv_to_rgb(y, u, v)
        frames.append(np.clip(rgb, 0.0, 1.0) if clip else rgb)
        pos = stop
        index += 1
    if not frames:
        raise ParseError("Y4M stream has no frames", offset=pos)
    return FrameSequence(np.stack(frames), fps=float(fps), provenance="y4m")


def write_y4m(video: FrameSequence, chroma: str = "444", fps=None) -> bytes:
    """Encode RGB (or gray) frames as 8-bit Y4M. 4:2:0 chroma uses 2x2 averaging."""
    data = video.data
    if data.shape[3] == 1:
        data = np.repeat(data, 3, axis=3)
    T, H, W, _ = data.shape
    rate = Fraction(fps if fps is not None else video.fps).limit_denominator(1001)
    if chroma not in ("444", "420jpeg", "420"):
        raise ValueError("chroma must be 444 or 420jpeg")
    out = io.BytesIO()
    out.write(b"YUV4MPEG2 W%d H%d F%d:%d Ip A1:1 C%s\n" % (W, H, rate.numerator, rate.denominator, chroma.encode()))
    for t in range(T):
        y, u, v = rgb_to_yuv(data[t])
        if chroma != "444":
            ph, pw = (-H) % 2, (-W) % 2
            u = np.pad(u, ((0, ph), (0, pw)), mode="edge")
            v = np.pad(v, ((0, ph), (0, pw)), mode="edge")
            u = u.reshape(u.shape[0] // 2, 2, u.shape[1] // 2, 2).mean(axis=(1, 3))
            v = v.reshape(v.shape[0] // 2, 2, v.shape[1] // 2, 2).mean(axis=(1, 3))
        out.write(b"FRAME\n")
        for plane in (y, u, v):
            out.write(np.clip(np.rint(plane), 0, 255).astype(np.uint8).tobytes())
    return out.getvalue()
