"""Noise-like illumination code generation.

Codes are built one segment at a time in the Fourier domain. Every in-band
frequency bin of a segment gets an amplitude and a phase drawn from its own
seeded stream; the bins are then dealt to the k codes in shuffled
round-robin order, so the codes have disjoint spectral support (hence are
mutually orthogonal over any whole segment) and their sum does not depend on k.

Per-bin sinusoids are accumulated on a 2**-40 fixed-point grid. Integer sums
are associative, so summing the k codes reproduces the single-code signal
bit for bit regardless of how the bins were split.
"""

from __future__ import annotations

import functools
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ParseError
from .prng import Xoshiro256, mix64

# Relative flicker sensitivity (peak = 1) at 1-12 Hz. A smooth stand-in with
# the usual rise toward 8-9 Hz at photopic luminance; replaceable per CodeSpec.
DEFAULT_FLICKER_SENSITIVITY = (
    (1.0, 0.25),
    (2.0, 0.35),
    (4.0, 0.55),
    (6.0, 0.78),
    (8.0, 0.97),
    (9.0, 1.0),
    (10.0, 0.96),
    (12.0, 0.82),
)

FIXED_POINT_BITS = 40
_FIXED_SCALE = float(2 ** FIXED_POINT_BITS)

_TAG_BIN = 1
_TAG_BLOCK = 2


@dataclass(frozen=True)
class CodeSpec:
    fps: float = 30.0
    segment_len: int = 256
    band_lo: float = 2.0
    band_hi: float = 9.0
    num_codes: int = 1
    master_seed: int = 0
    amplitude_scale: float = 0.001
    sensitivity: tuple = DEFAULT_FLICKER_SENSITIVITY

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not 0 < self.band_lo < self.band_hi < self.fps / 2:
            raise ValueError(
                f"need 0 < band_lo < band_hi < fps/2, got {self.band_lo}, {self.band_hi}, fps={self.fps}"
            )
        if int(self.segment_len) != self.segment_len or self.segment_len < 2:
            raise ValueError(f"segment_len must be an integer >= 2, got {self.segment_len}")
        if int(self.num_codes) != self.num_codes or self.num_codes < 1:
            raise ValueError(f"num_codes must be an integer >= 1, got {self.num_codes}")
        if self.amplitude_scale < 0:
            raise ValueError("amplitude_scale must be non-negative")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        knots = tuple((float(f), float(v)) for f, v in self.sensitivity)
        freqs = [f for f, _ in knots]
        if len(knots) < 2 or any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ValueError("sensitivity knots must have strictly increasing frequencies")
        if any(v <= 0 for _, v in knots):
            raise ValueError("sensitivity values must be positive")
        if self.band_lo < freqs[0] or self.band_hi > freqs[-1]:
            raise ValueError("sensitivity table does not cover the passband")
        object.__setattr__(self, "sensitivity", knots)
        nbins = len(in_band_bins(self))
        if nbins < self.num_codes:
            raise ConfigurationError(
                f"{nbins} in-band frequency bins cannot feed {self.num_codes} codes; "
                "increase segment_len or widen the band"
            )


def in_band_bins(spec: CodeSpec) -> list[int]:
    """DFT bin indices j with band_lo <= j*fps/segment_len <= band_hi."""
    n = spec.segment_len
    eps = 1e-9 * spec.fps / n
    return [
        j
        for j in range(1, (n + 1) // 2)
        if spec.band_lo - eps <= j * spec.fps / n <= spec.band_hi + eps
    ]


def flicker_weight(spec: CodeSpec, freq: float) -> float:
    """Mean relative amplitude at `freq`: amplitude_scale / sensitivity(freq)."""
    if not spec.band_lo <= freq <= spec.band_hi:
        raise ValueError(f"frequency {freq} Hz outside passband [{spec.band_lo}, {spec.band_hi}]")
    f, v = zip(*spec.sensitivity)
    return spec.amplitude_scale / float(np.interp(freq, f, v))


@dataclass
class CodeSignal:
    samples: np.ndarray
    fps: float
    source_id: int
    spec: CodeSpec
    segment_index_range: tuple

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))


@dataclass
class CodeBank:
    """k codes over a contiguous frame range [start_frame, start_frame + n)."""

    spec: CodeSpec
    samples: np.ndarray  # (k, n)
    start_frame: int = 0
    assignment_log: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[0] != self.spec.num_codes:
            raise ValueError(
                f"bank has {self.samples.shape[0]} rows but spec declares {self.spec.num_codes} codes"
            )

    @property
    def num_frames(self) -> int:
        return self.samples.shape[1]

    @property
    def codes(self) -> list[CodeSignal]:
        n = self.spec.segment_len
        first = self.start_frame // n
        last = -(-(self.start_frame + self.num_frames) // n)
        return [
            CodeSignal(self.samples[i], self.spec.fps, i, self.spec, (first, last))
            for i in range(self.spec.num_codes)
        ]


@functools.lru_cache(maxsize=256)
def _segment(spec: CodeSpec, segment_index: int):
    n = spec.segment_len
    k = spec.num_codes
    bins = in_band_bins(spec)
    t = np.arange(n, dtype=np.int64)

    # amplitudes and phases are drawn per bin before assignment, so the set of
    # sinusoids is the same for every k
    fixed = np.empty((len(bins), n), dtype=np.int64)
    for row, j in enumerate(bins):
        rng = Xoshiro256(mix64(spec.master_seed, segment_index, _TAG_BIN, j))
        mean_amp = flicker_weight(spec, j * spec.fps / n)
        amp = mean_amp * (0.5 + rng.random())
        phase = 2.0 * math.pi * rng.random()
        angle = 2.0 * np.pi * ((j * t) % n) / n + phase
        fixed[row] = np.rint(amp * np.cos(angle) * _FIXED_SCALE).astype(np.int64)

    owner = {}
    for block_index, start in enumerate(range(0, len(bins), k)):
        block = bins[start:start + k]
        perm = Xoshiro256(mix64(spec.master_seed, segment_index, _TAG_BLOCK, block_index)).permutation(k)
        for pos, j in enumerate(block):
            owner[j] = perm[pos]

    acc = np.zeros((k, n), dtype=np.int64)
    for row, j in enumerate(bins):
        acc[owner[j]] += fixed[row]
    out = acc.astype(np.float64) / _FIXED_SCALE
    out.setflags(write=False)
    return out, owner


def sample_segment(spec: CodeSpec, segment_index: int) -> CodeBank:
    """Generate all k codes for one segment."""
    if int(segment_index) != segment_index or segment_index < 0:
        raise ValueError(f"segment_index must be a non-negative integer, got {segment_index}")
    samples, owner = _segment(spec, int(segment_index))
    return CodeBank(
        spec,
        samples.copy(),
        start_frame=int(segment_index) * spec.segment_len,
        assignment_log={int(segment_index): dict(owner)},
    )


def _generate(spec: CodeSpec, t0: int, t1: int) -> np.ndarray:
    n = spec.segment_len
    out = np.empty((spec.num_codes, t1 - t0))
    pos = t0
    while pos < t1:
        seg = pos // n
        stop = min(t1, (seg + 1) * n)
        samples, _ = _segment(spec, seg)
        out[:, pos - t0:stop - t0] = samples[:, pos - seg * n:stop - seg * n]
        pos = stop
    return out


def code_for_interval(bank: CodeBank, t0: int, t1: int, source_id: int = 0) -> np.ndarray:
    """Samples of code `source_id` over capture frames [t0, t1).

    Frames stored in the bank are used as-is; anything outside is generated
    from the bank's spec.
    """
    if not 0 <= t0 < t1:
        raise ValueError(f"need 0 <= t0 < t1, got t0={t0}, t1={t1}")
    if not 0 <= source_id < bank.spec.num_codes:
        raise ValueError(f"source_id {source_id} out of range for {bank.spec.num_codes} codes")
    out = _generate(bank.spec, t0, t1)[source_id]
    lo = max(t0, bank.start_frame)
    hi = min(t1, bank.start_frame + bank.num_frames)
    if lo < hi:
        out[lo - t0:hi - t0] = bank.samples[source_id, lo - bank.start_frame:hi - bank.start_frame]
    return out


def bank_for_interval(spec: CodeSpec, t0: int, t1: int) -> CodeBank:
    """Materialize every code over capture frames [t0, t1)."""
    if not 0 <= t0 < t1:
        raise ValueError(f"need 0 <= t0 < t1, got t0={t0}, t1={t1}")
    n = spec.segment_len
    log = {s: dict(_segment(spec, s)[1]) for s in range(t0 // n, -(-t1 // n))}
    return CodeBank(spec, _generate(spec, t0, t1), start_frame=t0, assignment_log=log)


# -- CSV ---------------------------------------------------------------------

_HEADER_KEYS = {
    "fps": float,
    "segment_len": int,
    "band_lo": float,
    "band_hi": float,
    "num_codes": int,
    "master_seed": int,
    "amplitude_scale": float,
}


def _format_sensitivity(knots) -> str:
    return ";".join(f"{f!r}:{v!r}" for f, v in knots)


def _parse_sensitivity(text: str):
    knots = []
    for item in text.split(";"):
        f, v = item.split(":")
        knots.append((float(f), float(v)))
    return tuple(knots)


def write_code_csv(bank: CodeBank, stream=None) -> str:
    """Write the bank as '#'-prefixed header lines followed by one row per frame."""
    spec = bank.spec
    buf = io.StringIO()
    for key in _HEADER_KEYS:
        buf.write(f"# {key}={getattr(spec, key)!r}\n")
    buf.write(f"# start_frame={bank.start_frame}\n")
    buf.write(f"# sensitivity={_format_sensitivity(spec.sensitivity)}\n")
    for row in bank.samples.T:
        buf.write(",".join(format(float(v), ".17g") for v in row))
        buf.write("\n")
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def read_code_csv(stream) -> CodeBank:
    """Parse a bank written by write_code_csv. Accepts text or a text stream."""
    text = stream if isinstance(stream, str) else stream.read()
    header = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if rows:
                raise ParseError("header line after sample rows", line=lineno)
            body = line[1:].strip()
            if "=" not in body:
                raise ParseError(f"malformed header {raw!r}", line=lineno)
            key, value = (s.strip() for s in body.split("=", 1))
            try:
                if key in _HEADER_KEYS:
                    header[key] = _HEADER_KEYS[key](value)
                elif key == "start_frame":
                    header[key] = int(value)
                elif key == "sensitivity":
                    header[key] = _parse_sensitivity(value)
                else:
                    raise ParseError(f"unknown header key {key!r}", line=lineno)
            except ValueError as exc:
                if isinstance(exc, ParseError):
                    raise
                raise ParseError(f"bad value for {key}: {value!r}", line=lineno) from exc
            continue
        if "num_codes" not in header:
            raise ParseError("sample row before num_codes header", line=lineno)
        fields = line.split(",")
        if len(fields) != header["num_codes"]:
            raise ParseError(
                f"expected {header['num_codes']} values, found {len(fields)}", line=lineno
            )
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise ParseError(f"non-numeric sample in {raw!r}", line=lineno) from exc

    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ParseError(f"missing header keys: {', '.join(missing)}")
    if not rows:
        raise ParseError("no samples")
    kwargs = {k: header[k] for k in _HEADER_KEYS}
    if "sensitivity" in header:
        kwargs["sensitivity"] = header["sensitivity"]
    try:
        spec = CodeSpec(**kwargs)
    except ValueError as exc:
        raise ParseError(f"invalid code spec: {exc}") from exc
    return CodeBank(spec, np.array(rows).T, start_frame=header.get("start_frame", 0))


def with_num_codes(spec: CodeSpec, k: int) -> CodeSpec:
    return replace(spec, num_codes=k)
