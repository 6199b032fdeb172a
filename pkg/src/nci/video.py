"""FrameSequence: the video tensor every module passes around."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


@dataclass
class FrameSequence:
    """T x H x W x C floating frames with a frame rate.

    `valid` optionally marks usable samples per (t, y, x); stabilization sets
    it for pixels that wrapped around the frame border.
    """

    data: np.ndarray
    fps: float = 30.0
    provenance: str = ""
    valid: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 3:
            data = data[..., None]
        if data.ndim != 4:
            raise ValueError(f"frames must be T x H x W x C, got shape {data.shape}")
        if data.shape[0] < 1:
            raise ValueError("a FrameSequence needs at least one frame")
        if not np.all(np.isfinite(data)):
            raise ValueError("frame data contains non-finite values")
        self.data = data
        if self.valid is not None:
            valid = np.asarray(self.valid, dtype=bool)
            if valid.shape != data.shape[:3]:
                raise ValueError(f"valid mask shape {valid.shape} does not match frames {data.shape[:3]}")
            self.valid = valid

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __len__(self):
        return self.data.shape[0]

    def with_data(self, data, provenance=None, valid=None) -> "FrameSequence":
        note = self.provenance if provenance is None else provenance
        return replace(self, data=data, provenance=note, valid=valid)

    def frames(self, t0: int, t1: int) -> "FrameSequence":
        valid = None if self.valid is None else self.valid[t0:t1]
        return replace(self, data=self.data[t0:t1], valid=valid)

    def mean_trace(self) -> np.ndarray:
        """Spatial average over pixels and channels, one value per frame."""
        if self.valid is None:
            return self.data.mean(axis=(1, 2, 3))
        w = self.valid[..., None].astype(np.float64)
        num = (self.data * w).sum(axis=(1, 2, 3))
        den = np.maximum(self.valid.sum(axis=(1, 2)) * self.data.shape[3], 1)
        return num / den


def box_downsample(array: np.ndarray, factor: int, axes=(-3, -2)) -> np.ndarray:
    """Average non-overlapping factor x factor blocks over the two given axes.

    Trailing rows/columns that do not fill a block are dropped.
    """
    if factor == 1:
        return array
    if factor < 1:
        raise ValueError("downsample factor must be >= 1")
    a = np.moveaxis(array, axes, (-2, -1))
    h, w = a.shape[-2] // factor, a.shape[-1] // factor
    if h == 0 or w == 0:
        raise ValueError(f"frame too small for downsample factor {factor}")
    a = a[..., :h * factor, :w * factor]
    a = a.reshape(a.shape[:-2] + (h, factor, w, factor)).mean(axis=(-3, -1))
    return np.moveaxis(a, (-2, -1), axes)


def luminance(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luma for RGB, the single channel for grayscale. Input H x W x C."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.shape[-1] == 3:
        return image @ np.array([0.299, 0.587, 0.114])
    return image.mean(axis=-1)
