"""Flag regions that are bright in the frame but dark in a code image.

Content lit by a coded source must show up in that source's code image.
Pasted-in content carries no code, so a well-exposed pixel whose code image
is within noise of zero is suspicious.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .decode import CodeImage
from .errors import ConfigurationError
from .io_formats import write_netpbm, write_pbm
from .video import luminance

DEFAULT_BRIGHT_THRESH = 0.25
DEFAULT_MIN_WEIGHT = 0.5
DEFAULT_SATURATION = 0.98
CODE_FLOOR_SIGMAS = 3.0


@dataclass
class ManipulationMask:
    score_map: np.ndarray  # H x W in [0, 1]
    mask: np.ndarray  # score_map > bright_thresh
    inconclusive: np.ndarray  # excluded: saturated, low transient weight, or invalid decode
    bright_thresh: float
    code_floor: np.ndarray | float
    min_weight: float
    provenance: dict = field(default_factory=dict)

    @property
    def flagged_fraction(self) -> float:
        return float(self.mask.mean())


def _to_frame_grid(values: np.ndarray, shape, name: str) -> np.ndarray:
    """Nearest-neighbour upsample a per-cell map to the frame grid when it is an integer factor smaller."""
    if values.shape[:2] == tuple(shape):
        return values
    fy, fx = shape[0] // values.shape[0], shape[1] // values.shape[1]
    if fy < 1 or fy != fx or values.shape[0] * fy != shape[0] or values.shape[1] * fx != shape[1]:
        raise ValueError(f"{name} shape {values.shape[:2]} does not match frame {tuple(shape)}")
    return np.repeat(np.repeat(values, fy, axis=0), fx, axis=1)


def _plane(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return luminance(a) if a.ndim == 3 else a


def manipulation_mask(frame, code_image, bright_thresh: float = DEFAULT_BRIGHT_THRESH,
                      code_floor=None, min_weight: float = DEFAULT_MIN_WEIGHT, *,
                      noise_std=None, saturation: float = DEFAULT_SATURATION) -> ManipulationMask:
    """Score = frame luminance where the code image is below `code_floor`, else 0.

    `code_image` is a CodeImage or an array; a code image computed on a
    downsampled grid is expanded to the frame grid. `code_floor` defaults to
    3x `noise_std` (the per-pixel code-image noise std, e.g. from
    snr.code_image_noise_std). Saturated pixels, pixels with transient weight
    below `min_weight` and pixels without a valid decode are never flagged
    and are reported as inconclusive.
    """
    frame = _plane(frame)
    if isinstance(code_image, CodeImage):
        values = code_image.values
        weights = code_image.weight_map
        valid = code_image.valid
        note = {"source_id": code_image.source_id, "window": code_image.window}
    else:
        values, weights, valid, note = np.asarray(code_image), None, None, {}
    code = np.abs(_to_frame_grid(_plane(values), frame.shape, "code image"))

    if code_floor is None:
        if noise_std is None:
            raise ConfigurationError("no noise estimate available: pass code_floor explicitly")
        code_floor = CODE_FLOOR_SIGMAS * np.asarray(noise_std, dtype=np.float64)
    floor = np.asarray(code_floor, dtype=np.float64)
    if floor.ndim >= 2:
        floor = _to_frame_grid(_plane(floor), frame.shape, "code floor")

    excluded = frame >= saturation
    if weights is not None:
        excluded |= _to_frame_grid(_plane(weights), frame.shape, "weight map") < min_weight
    if valid is not None:
        v = np.asarray(valid)
        v = v.all(axis=2) if v.ndim == 3 else v
        excluded |= ~_to_frame_grid(v, frame.shape, "valid mask")

    dark_code = code < floor
    score = np.where(dark_code & ~excluded, np.clip(frame, 0.0, 1.0), 0.0)
    mask = score > bright_thresh
    note.update({"bright_thresh": bright_thresh, "min_weight": min_weight})
    return ManipulationMask(score, mask, excluded, bright_thresh, code_floor, min_weight, note)


def _display(values: np.ndarray) -> np.ndarray:
    plane = _plane(values)
    plane = np.clip(plane, 0.0, None)
    hi = float(np.percentile(plane, 99.5)) if plane.size else 0.0
    return plane / hi if hi > 0 else np.zeros_like(plane)


def side_by_side_export(frame, code_images, mask) -> np.ndarray:
    """H x (n W) x 3 montage: frame, each code image (auto-scaled), then the mask in red.

    Every panel has the frame's pixel dimensions.
    """
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim == 2:
        f = f[..., None]
    H, W = f.shape[:2]
    rgb = lambda p: np.repeat(p[..., None], 3, axis=2)
    panels = [np.clip(f if f.shape[2] == 3 else rgb(f[..., 0]), 0.0, 1.0)]
    for ci in code_images:
        values = ci.values if isinstance(ci, CodeImage) else np.asarray(ci)
        panels.append(rgb(_to_frame_grid(_display(values), (H, W), "code image")))
    m = mask.mask if isinstance(mask, ManipulationMask) else np.asarray(mask, dtype=bool)
    if m.shape != (H, W):
        raise ValueError(f"mask shape {m.shape} does not match frame {(H, W)}")
    overlay = 0.5 * panels[0]
    overlay[m] = (1.0, 0.0, 0.0)
    panels.append(overlay)
    return np.concatenate(panels, axis=1)


def export_mask(result: ManipulationMask):
    """(mask as PBM bytes, score map as 8-bit PGM bytes)."""
    return write_pbm(result.mask), write_netpbm(result.score_map, 8)
