"""Evaluation metrics and the reference-based quality oracle.

The oracle maps clamped segmental SNR affinely onto the [1.04, 4.64]
quality scale. It is deliberately pluggable: anything monotone in
enhancement quality with that range works as a regression target for the
quality estimator, so a heavier intrusive metric can be swapped in behind
the same signature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import GATE_CEIL, GATE_FLOOR, GATE_SPAN
from .errors import DomainError


@dataclass(frozen=True)
class SegSnrConfig:
    frame: int = 256
    hop: int = 256
    clamp_lo: float = -10.0
    clamp_hi: float = 35.0

    def __post_init__(self) -> None:
        if self.frame <= 0 or self.hop <= 0:
            raise DomainError("SegSnrConfig sizes must be positive")
        if not self.clamp_lo < self.clamp_hi:
            raise DomainError("clamp_lo must be below clamp_hi")


DEFAULT_SEGSNR = SegSnrConfig()


def seg_snr(reference: np.ndarray, test: np.ndarray, cfg: SegSnrConfig = DEFAULT_SEGSNR) -> float:
    """Mean clamped per-frame SNR in dB.

    Frames with exactly zero reference energy are excluded; a trailing
    partial frame is dropped.
    """
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape or reference.ndim != 1:
        raise DomainError(
            f"seg_snr: length mismatch ({reference.shape} vs {test.shape})"
        )
    n_frames = 1 + (reference.size - cfg.frame) // cfg.hop if reference.size >= cfg.frame else 0
    if n_frames <= 0:
        raise DomainError("seg_snr: signal shorter than one frame")
    vals = []
    for i in range(n_frames):
        lo = i * cfg.hop
        ref = reference[lo : lo + cfg.frame]
        err = ref - test[lo : lo + cfg.frame]
        ref_e = float(np.sum(ref * ref))
        if ref_e == 0.0:
            continue
        err_e = float(np.sum(err * err))
        if err_e == 0.0:
            vals.append(cfg.clamp_hi)
            continue
        vals.append(float(np.clip(10.0 * np.log10(ref_e / err_e), cfg.clamp_lo, cfg.clamp_hi)))
    if not vals:
        raise DomainError("seg_snr: every frame had zero reference energy")
    return float(np.mean(vals))


def delta_seg_snr(
    clean_rev: np.ndarray,
    noisy: np.ndarray,
    enhanced: np.ndarray,
    cfg: SegSnrConfig = DEFAULT_SEGSNR,
) -> float:
    """Segmental SNR improvement of the enhanced signal over the noisy one."""
    return seg_snr(clean_rev, enhanced, cfg) - seg_snr(clean_rev, noisy, cfg)


def quality_oracle(
    reference: np.ndarray, degraded: np.ndarray, cfg: SegSnrConfig = DEFAULT_SEGSNR
) -> float:
    """Deterministic reference-based quality score in [1.04, 4.64]."""
    snr = seg_snr(reference, degraded, cfg)
    frac = (np.clip(snr, cfg.clamp_lo, cfg.clamp_hi) - cfg.clamp_lo) / (cfg.clamp_hi - cfg.clamp_lo)
    # final clip keeps the endpoints exactly on the scale literals
    return float(np.clip(GATE_FLOOR + GATE_SPAN * frac, GATE_FLOOR, GATE_CEIL))


__all__ = [
    "SegSnrConfig",
    "DEFAULT_SEGSNR",
    "seg_snr",
    "delta_seg_snr",
    "quality_oracle",
    "GATE_FLOOR",
    "GATE_SPAN",
    "GATE_CEIL",
]
