"""Synthetic coded video under the additive code + read/shot noise model.

Each clean frame is the uncoded image plus every code times its transport
image. Sensor noise is Gaussian with standard deviation a + b*sqrt(clean),
i.e. the usual Gaussian stand-in for Poisson shot noise, after which frames
are clipped to [0, 1], optionally gamma-encoded and quantized.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .codegen import CodeBank, code_for_interval
from .parallel import pmap
from .prng import mix64
from .video import FrameSequence

log = logging.getLogger(__name__)


@dataclass
class Sprite:
    """An opaque moving patch. path[t] = (dy, dx) of its top-left corner at frame t."""

    image: np.ndarray
    path: Sequence[tuple]
    transport: Optional[np.ndarray] = None  # k x h x w x C; None means uncoded

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        if self.image.ndim == 2:
            self.image = self.image[..., None]
        if self.transport is not None:
            self.transport = np.asarray(self.transport, dtype=np.float64)

    def offset(self, t: int):
        if len(self.path) == 0:
            return (0, 0)
        dy, dx = self.path[min(t, len(self.path) - 1)]
        return int(dy), int(dx)


@dataclass
class SceneModel:
    base_image: np.ndarray
    transport_images: np.ndarray
    sprites: list = field(default_factory=list)
    gamma: Optional[float] = None

    def __post_init__(self):
        base = np.asarray(self.base_image, dtype=np.float64)
        if base.ndim == 2:
            base = base[..., None]
        trans = np.asarray(self.transport_images, dtype=np.float64)
        if trans.ndim == base.ndim:
            trans = trans[None]
        if trans.ndim == 3 and base.ndim == 3:
            trans = trans[..., None]
        if trans.shape[1:] != base.shape:
            raise ValueError(
                f"transport images {trans.shape[1:]} do not match base image {base.shape}"
            )
        self.base_image = base
        self.transport_images = trans

    @property
    def num_sources(self) -> int:
        return self.transport_images.shape[0]


@dataclass
class NoiseModel:
    read_std: object = 0.0  # a, scalar or per channel
    photon_coeff: object = 0.0  # b, scalar or per channel
    quant_bits: int = 8
    noise_seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.read_std) < 0) or np.any(np.asarray(self.photon_coeff) < 0):
            raise ValueError("noise coefficients must be non-negative")
        if self.quant_bits < 0:
            raise ValueError("quant_bits must be >= 0")

    def std(self, brightness):
        a = np.asarray(self.read_std, dtype=np.float64)
        b = np.asarray(self.photon_coeff, dtype=np.float64)
        return a + b * np.sqrt(np.maximum(brightness, 0.0))

    @property
    def is_noiseless(self) -> bool:
        return not (np.any(np.asarray(self.read_std) > 0) or np.any(np.asarray(self.photon_coeff) > 0))


NOISELESS = NoiseModel(0.0, 0.0, quant_bits=0)

# frames per work item; fixed so results never depend on the thread count
_CHUNK = 32


def _frame_rng(noise_seed: int, capture_frame: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix64(noise_seed, capture_frame)))


def _composite_sprite(frame, coded, sprite, t):
    dy, dx = sprite.offset(t)
    h, w = sprite.image.shape[:2]
    H, W = frame.shape[:2]
    y0, x0 = max(dy, 0), max(dx, 0)
    y1, x1 = min(dy + h, H), min(dx + w, W)
    if y0 >= y1 or x0 >= x1:
        return
    sy, sx = y0 - dy, x0 - dx
    patch = sprite.image[sy:sy + (y1 - y0), sx:sx + (x1 - x0)]
    if coded is not None:
        patch = patch + coded[sy:sy + (y1 - y0), sx:sx + (x1 - x0)]
    frame[y0:y1, x0:x1] = patch


def clean_frames(scene: SceneModel, codes: np.ndarray, t_start: int = 0, t_stop=None) -> np.ndarray:
    """Noise-free frames for rows t_start:t_stop of `codes` (k x T)."""
    codes = np.atleast_2d(codes)
    t_stop = codes.shape[1] if t_stop is None else t_stop
    c = codes[:, t_start:t_stop]
    # explicit per-source accumulation keeps results independent of chunking
    out = np.repeat(scene.base_image[None], c.shape[1], axis=0)
    for i in range(c.shape[0]):
        out += c[i][:, None, None, None] * scene.transport_images[i][None]
    for sprite in scene.sprites:
        for i, t in enumerate(range(t_start, t_stop)):
            coded = None
            if sprite.transport is not None:
                coded = sum(c[j, i] * sprite.transport[j] for j in range(c.shape[0]))
            _composite_sprite(out[i], coded, sprite, t)
    return out


def render(
    scene: SceneModel,
    bank: CodeBank,
    noise: NoiseModel,
    t0: int,
    T: int,
    *,
    fps: Optional[float] = None,
    threads: int = 1,
) -> FrameSequence:
    """Render capture frames [t0, t0 + T) of the scene under the bank's codes."""
    if fps is not None and abs(fps - bank.spec.fps) > 1e-9:
        raise ValueError(f"requested fps {fps} does not match code fps {bank.spec.fps}")
    if scene.num_sources != bank.spec.num_codes:
        raise ValueError(
            f"scene has {scene.num_sources} transport images but bank has {bank.spec.num_codes} codes"
        )
    if T < 1:
        raise ValueError("T must be >= 1")
    codes = np.stack([code_for_interval(bank, t0, t0 + T, i) for i in range(bank.spec.num_codes)])

    peak = scene.base_image + np.tensordot(np.abs(codes).max(axis=1), scene.transport_images, axes=(0, 0))
    if peak.max() > 1.1:
        log.warning("scene exceeds 1.1 at peak code excursion (max %.3f); clipping will occur", peak.max())

    levels = float(2 ** noise.quant_bits - 1) if noise.quant_bits else None

    def work(span):
        a, b = span
        frames = clean_frames(scene, codes, a, b)
        if not noise.is_noiseless:
            std = noise.std(frames)
            for i in range(b - a):
                rng = _frame_rng(noise.noise_seed, t0 + a + i)
                frames[i] += rng.standard_normal(frames.shape[1:]) * std[i]
        np.clip(frames, 0.0, 1.0, out=frames)
        if scene.gamma:
            frames = frames ** (1.0 / scene.gamma)
        if levels:
            frames = np.rint(frames * levels) / levels
        return frames

    spans = [(a, min(a + _CHUNK, T)) for a in range(0, T, _CHUNK)]
    pieces = pmap(work, spans, threads)
    data = np.concatenate(pieces, axis=0)
    note = f"render(t0={t0}, T={T}, seed={bank.spec.master_seed}, noise_seed={noise.noise_seed})"
    return FrameSequence(data, fps=bank.spec.fps, provenance=note)


def fit_noise_from_flats(flat_sequences) -> NoiseModel:
    """Least-squares fit of std = a + b*sqrt(mean) per channel from static flat fields.

    Per sequence, every pixel's temporal mean and variance are computed and
    pooled (mean of means, root of mean variance), giving one
    (brightness, std) point per sequence and channel.
    """
    means, stds = [], []
    for seq in flat_sequences:
        data = seq.data if isinstance(seq, FrameSequence) else np.asarray(seq, dtype=np.float64)
        if data.ndim == 3:
            data = data[..., None]
        if data.shape[0] < 2:
            raise ValueError("each flat sequence needs at least 2 frames")
        means.append(data.mean(axis=0).mean(axis=(0, 1)))
        stds.append(np.sqrt(data.var(axis=0, ddof=1).mean(axis=(0, 1))))
    means = np.array(means)
    stds = np.array(stds)
    if means.shape[0] < 3 or any(len(np.unique(np.round(means[:, c], 6))) < 3 for c in range(means.shape[1])):
        raise ValueError("need flats at >= 3 distinct brightness levels to fit read and photon noise")
    a = np.empty(means.shape[1])
    b = np.empty(means.shape[1])
    for c in range(means.shape[1]):
        design = np.column_stack([np.ones(len(means)), np.sqrt(np.maximum(means[:, c], 0.0))])
        (a[c], b[c]), *_ = np.linalg.lstsq(design, stds[:, c], rcond=None)
    return NoiseModel(np.maximum(a, 0.0), np.maximum(b, 0.0), quant_bits=0)


def render_flat(level: float, noise: NoiseModel, T: int, shape=(32, 32, 1)) -> FrameSequence:
    """Temporally static flat field at `level`, with noise. Used for noise fitting."""
    clean = np.full(shape, float(level))
    std = noise.std(clean)
    frames = np.empty((T,) + tuple(shape))
    for t in range(T):
        frames[t] = clean + _frame_rng(noise.noise_seed, t).standard_normal(shape) * std
    np.clip(frames, 0.0, 1.0, out=frames)
    if noise.quant_bits:
        levels = float(2 ** noise.quant_bits - 1)
        frames = np.rint(frames * levels) / levels
    return FrameSequence(frames, provenance=f"flat({level})")


def demo_scene(height=64, width=64, channels=3, num_codes=1, seed=0, base_level=0.3,
               coded_level=0.4, texture=0.15) -> SceneModel:
    """A smooth textured scene with each coded source lighting part of the frame.

    Source i falls off horizontally from its own side of the frame, so two-source
    scenes have visibly different code images.
    """
    rng = np.random.Generator(np.random.PCG64(mix64(seed, 0xD3)))
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    reflect = 1.0 + texture * (
        np.sin(2 * np.pi * (3 * xx + rng.uniform())) * np.cos(2 * np.pi * (2 * yy + rng.uniform()))
    )
    tint = rng.uniform(0.8, 1.0, size=channels)
    base = base_level * reflect[..., None] * tint
    trans = np.empty((num_codes, height, width, channels))
    for i in range(num_codes):
        pos = xx if i % 2 == 0 else 1.0 - xx
        falloff = 0.35 + 0.65 * (1.0 - pos)
        trans[i] = coded_level * (falloff * reflect)[..., None] * tint / num_codes
    return SceneModel(base, trans)


# -- scene directories ---------------------------------------------------------

SCENE_FILE = "scene.txt"


def _parse_kv(path):
    entries = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            entries[key] = value
    return entries


def load_scene(directory) -> SceneModel:
    """Load a scene directory.

    `scene.txt` keys (paths relative to the directory):

        base = base.ppm                  uncoded image L(x)
        transport = t0.ppm, t1.ppm       one image per coded source
        gamma = 2.2                      optional encode exponent
        sprite.N.image = s.ppm           optional sprites, N = 0, 1, ...
        sprite.N.path = path.txt         one "dy dx" line per frame
        sprite.N.transport = a.ppm, ...  optional coded response of the sprite
    """
    from .io_formats import read_netpbm

    def img(name):
        with open(os.path.join(directory, name), "rb") as fh:
            return read_netpbm(fh.read())

    entries = _parse_kv(os.path.join(directory, SCENE_FILE))
    if "base" not in entries or "transport" not in entries:
        raise ValueError("scene.txt needs 'base' and 'transport' entries")
    base = img(entries["base"])
    trans = np.stack([img(n.strip()) for n in entries["transport"].split(",") if n.strip()])
    gamma = float(entries["gamma"]) if entries.get("gamma") else None
    sprites = []
    n = 0
    while f"sprite.{n}.image" in entries:
        image = img(entries[f"sprite.{n}.image"])
        path = []
        path_file = entries.get(f"sprite.{n}.path")
        if path_file:
            with open(os.path.join(directory, path_file)) as fh:
                path = [tuple(int(v) for v in line.split()) for line in fh if line.strip()]
        st = entries.get(f"sprite.{n}.transport")
        transport = np.stack([img(s.strip()) for s in st.split(",")]) if st else None
        sprites.append(Sprite(image, path, transport))
        n += 1
    return SceneModel(base, trans, sprites, gamma or None)
