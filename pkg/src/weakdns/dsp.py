"""STFT analysis/synthesis chain.

Framing with a periodic Hann window at 50% overlap, zero-padded DFT,
and weighted overlap-add synthesis that divides by the per-sample sum of
squared windows, which makes analysis -> synthesis an exact identity
wherever the window coverage is nonzero.

Spectrogram layout: complex array of shape (frames, 260). Bins 0..256 are
the physical one-sided spectrum of the 512-point DFT; bins 257..259 are
redundant copies of bin 256, carried only so the model's stride-2
frequency halving works out, and ignored by synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .errors import DomainError

REDUNDANT_BINS = 3


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 384
    hop: int = 192
    fft_size: int = 512

    def __post_init__(self) -> None:
        if self.frame_len <= 0 or self.hop <= 0 or self.fft_size <= 0:
            raise DomainError("StftConfig sizes must be positive")
        if self.hop * 2 != self.frame_len:
            raise DomainError("hop must be exactly half the frame length (50% overlap)")
        if self.fft_size < self.frame_len:
            raise DomainError("fft_size must be >= frame_len")

    @property
    def physical_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def total_bins(self) -> int:
        return self.physical_bins + REDUNDANT_BINS

    def window(self) -> np.ndarray:
        """Periodic Hann window; satisfies constant overlap-add at 50% hop."""
        n = np.arange(self.frame_len)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.frame_len)


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    """Number of analysis frames for a signal of the given length."""
    if n_samples <= 0:
        raise DomainError("cannot frame an empty signal")
    return max(1, ceil((n_samples - cfg.frame_len) / cfg.hop) + 1)


def _check_waveform(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("waveform must be a non-empty 1-d array")
    if not np.all(np.isfinite(x)):
        raise DomainError("waveform contains non-finite samples")
    return x


def stft(x: np.ndarray, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Analyze a waveform into the (frames, 260) complex layout.

    The last frame is completed by zero-padding the signal; the frame is
    zero-padded at its tail from frame_len to fft_size before the DFT.
    """
    x = _check_waveform(x)
    n_frames = frame_count(x.size, cfg)
    padded_len = (n_frames - 1) * cfg.hop + cfg.frame_len
    padded = np.zeros(padded_len)
    padded[: x.size] = x
    offsets = np.arange(n_frames) * cfg.hop
    frames = padded[offsets[:, None] + np.arange(cfg.frame_len)[None, :]]
    spec = np.fft.rfft(frames * cfg.window()[None, :], n=cfg.fft_size, axis=1)
    out = np.empty((n_frames, cfg.total_bins), dtype=np.complex128)
    out[:, : cfg.physical_bins] = spec
    out[:, cfg.physical_bins :] = spec[:, -1:]
    return out


def istft(spec: np.ndarray, cfg: StftConfig = StftConfig(), out_len: int | None = None) -> np.ndarray:
    """Weighted overlap-add synthesis back to a waveform.

    The inverse DFT of each frame is windowed again with the analysis
    window, overlap-added, and divided per sample by the summed squared
    windows. Output is truncated or zero-padded to out_len.
    """
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.total_bins:
        raise DomainError(
            f"spectrogram shape {spec.shape} does not match the "
            f"(frames, {cfg.total_bins}) layout"
        )
    n_frames = spec.shape[0]
    window = cfg.window()
    frames = np.fft.irfft(spec[:, : cfg.physical_bins], n=cfg.fft_size, axis=1)
    frames = frames[:, : cfg.frame_len] * window[None, :]
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    acc = np.zeros(total)
    den = np.zeros(total)
    wsq = window * window
    for i in range(n_frames):
        lo = i * cfg.hop
        acc[lo : lo + cfg.frame_len] += frames[i]
        den[lo : lo + cfg.frame_len] += wsq
    covered = den > 1e-12
    out = np.zeros(total)
    out[covered] = acc[covered] / den[covered]
    if out_len is None:
        out_len = total
    if out_len <= total:
        return out[:out_len]
    return np.concatenate([out, np.zeros(out_len - total)])


def apply_mask(spec: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Elementwise complex product of a spectrogram with a mask."""
    spec = np.asarray(spec)
    mask = np.asarray(mask)
    if spec.shape != mask.shape:
        raise DomainError(f"mask shape {mask.shape} does not match spectrogram {spec.shape}")
    return spec * mask
