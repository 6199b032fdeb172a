"""Predicted and measured code-image SNR.

Per-sample noise is modelled as sigma_n(L) = a + b * sqrt(L). Averaging w
frames and M pixels per code-image sample divides the noise std by
sqrt(M * w), so a source of strength r under a code of rms Rms[c] reaches

    SNR = 20 log10( sqrt(M w) * Rms[c] * r / (a + b sqrt(L)) ).
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from .simulate import NoiseModel

SNR_GRID = {
    "L": (0.1, 0.3, 0.6),
    "code_rms_times_r": (0.002, 0.005),
    "w": (150, 450),
    "M": (1, 4),
}


@dataclass(frozen=True)
class SnrModel:
    a: float | np.ndarray = 0.0
    b: float | np.ndarray = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.a) < 0) or np.any(np.asarray(self.b) < 0):
            raise ValueError("noise coefficients a, b must be >= 0")

    @classmethod
    def from_noise_model(cls, noise: NoiseModel) -> "SnrModel":
        return cls(noise.read_std, noise.photon_coeff)

    def sigma(self, L):
        return np.asarray(self.a) + np.asarray(self.b) * np.sqrt(np.asarray(L, dtype=np.float64))


def predict_snr(model: SnrModel, code_rms_times_r, L, w, M):
    """Predicted SNR in dB; +inf when the noise model is noiseless."""
    for name, value in (("code_rms_times_r", code_rms_times_r), ("L", L), ("w", w), ("M", M)):
        if np.any(np.asarray(value) <= 0):
            raise ValueError(f"{name} must be > 0")
    sigma = model.sigma(L)
    signal = np.sqrt(np.asarray(M, dtype=np.float64) * w) * np.asarray(code_rms_times_r, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = 20.0 * np.log10(signal / sigma)
    return float(out) if np.ndim(out) == 0 else out


def code_image_noise_std(model: SnrModel, L, w, M, code_rms):
    """Std of a code-image sample (transport units) for a pixel at brightness L."""
    if code_rms <= 0:
        raise ValueError("code_rms must be > 0")
    return model.sigma(L) / (np.sqrt(M * w) * code_rms)


def _median_db(signal, noise):
    signal = np.abs(np.asarray(signal, dtype=np.float64))
    noise = np.asarray(noise, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 20.0 * np.log10(signal / noise)
    db = db[~np.isnan(db)]
    if db.size == 0:
        return float("nan")
    return float(np.median(db))


def measure_snr(estimate, ground_truth=None, *, min_trials: int = 20) -> float:
    """Empirical SNR in dB, aggregated over pixels by the median.

    With `ground_truth` (the simulated transport image), signal is the true
    value per pixel and noise is the RMS residual pooled over all pixels; a
    single pixel's residual is one draw, so pooling gives a stable estimate.
    Without it, `estimate` is a stack of >= min_trials independent-noise
    decodes along axis 0: signal is the per-pixel mean, noise the per-pixel
    std across trials. A noiseless decode measures +inf.
    """
    est = np.asarray(estimate, dtype=np.float64)
    if ground_truth is not None:
        gt = np.asarray(ground_truth, dtype=np.float64)
        if gt.shape != est.shape:
            raise ValueError(f"estimate shape {est.shape} does not match ground truth {gt.shape}")
        noise = float(np.sqrt(np.mean((est - gt) ** 2)))
        if noise == 0.0:
            return float("inf")
        return _median_db(gt, noise)
    if est.shape[0] < min_trials:
        raise ValueError(f"need >= {min_trials} independent trials, got {est.shape[0]}")
    std = np.where(np.ptp(est, axis=0) == 0, 0.0, est.std(axis=0, ddof=1))
    if not np.any(std > 0):
        return float("inf")
    return _median_db(est.mean(axis=0), std)


def prediction_table(model: SnrModel, grid=None):
    """Rows (L, code_rms_times_r, w, M, snr_db) over the cartesian grid."""
    grid = SNR_GRID if grid is None else grid
    rows = []
    for L, cr, w, M in itertools.product(grid["L"], grid["code_rms_times_r"], grid["w"], grid["M"]):
        rows.append((L, cr, w, M, predict_snr(model, cr, L, w, M)))
    return rows


def write_prediction_csv(rows, stream=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["L", "code_rms_times_r", "w", "M", "snr_db"])
    for L, cr, w, M, db in rows:
        writer.writerow([repr(float(L)), repr(float(cr)), int(w), int(M), f"{db:.6f}"])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
