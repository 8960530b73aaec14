"""Per-utterance training losses in the DFT domain.

Spectra are stored one-sided (257 physical bins of a 512-point DFT plus 3
redundant bins). The squared-error losses are averaged as if over the full
two-sided spectrum: conjugate-symmetric bins 1..255 count twice, bins 0
and 256 once, and the divisor is frames * fft_size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GATE_CEIL, GATE_FLOOR, Tensor
from .errors import DomainError


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.9   # joint (dereverb+denoise) vs denoise-only weight
    alpha: float = 0.9  # supervised vs estimator-guided weight

    def __post_init__(self) -> None:
        for name in ("beta", "alpha"):
            v = getattr(self, name)
            if not np.isfinite(v) or not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must be in [0, 1], got {v}")


def symmetric_bin_weights(fft_size: int) -> np.ndarray:
    """Two-sided-equivalent weights for a one-sided spectrum."""
    n_bins = fft_size // 2 + 1
    w = np.full(n_bins, 2.0)
    w[0] = 1.0
    if fft_size % 2 == 0 and n_bins > 1:
        w[-1] = 1.0
    return w


def _spectral_mse(sh_re: Tensor, sh_im: Tensor, target: np.ndarray, fft_size: int) -> Tensor:
    target = np.asarray(target, dtype=np.complex128)
    if sh_re.shape != sh_im.shape or len(sh_re.shape) != 2:
        raise DomainError(f"estimate must be 2-d re/im pair, got {sh_re.shape}/{sh_im.shape}")
    if target.shape != sh_re.shape:
        raise DomainError(f"target shape {target.shape} != estimate shape {sh_re.shape}")
    n_frames, n_stored = target.shape
    weights = symmetric_bin_weights(fft_size)
    n_phys = weights.size
    if n_stored < n_phys:
        raise DomainError(f"spectrum has {n_stored} bins, needs >= {n_phys} for fft {fft_size}")
    d_re = sh_re + Tensor(-target.real)
    d_im = sh_im + Tensor(-target.imag)
    sq = d_re.square() + d_im.square()
    if n_stored > n_phys:  # drop redundant bins from the average
        sq = ad.narrow(sq, 1, 0, n_phys)
    w_full = Tensor(np.broadcast_to(weights[None, :], (n_frames, n_phys)).copy())
    return (sq * w_full).sum() * (1.0 / (n_frames * fft_size))


def joint_loss(sh_re: Tensor, sh_im: Tensor, clean_spec: np.ndarray, fft_size: int = 512) -> Tensor:
    """Squared error against the clean spectrum: dereverberation + denoising."""
    return _spectral_mse(sh_re, sh_im, clean_spec, fft_size)


def noise_loss(sh_re: Tensor, sh_im: Tensor, reverb_spec: np.ndarray, fft_size: int = 512) -> Tensor:
    """Squared error against the reverberated clean spectrum: denoising only."""
    return _spectral_mse(sh_re, sh_im, reverb_spec, fft_size)


def synth_loss(
    sh_re: Tensor,
    sh_im: Tensor,
    clean_spec: np.ndarray,
    reverb_spec: np.ndarray,
    cfg: LossConfig = LossConfig(),
    fft_size: int = 512,
) -> Tensor:
    """Supervised loss for synthetic pairs: beta-weighted blend of the two."""
    return combine_synth(
        joint_loss(sh_re, sh_im, clean_spec, fft_size),
        noise_loss(sh_re, sh_im, reverb_spec, fft_size),
        cfg,
    )


def combine_synth(joint: Tensor | float, noise: Tensor | float, cfg: LossConfig) -> Tensor:
    j = joint if isinstance(joint, Tensor) else Tensor(float(joint))
    n = noise if isinstance(noise, Tensor) else Tensor(float(noise))
    return j * cfg.beta + n * (1.0 - cfg.beta)


def _as_scalar(estimated) -> Tensor:
    est = estimated if isinstance(estimated, Tensor) else Tensor(float(estimated))
    if est.size != 1:
        raise DomainError(f"estimated score must be scalar, got shape {est.shape}")
    return est


def estimator_loss(estimated: Tensor, oracle: float) -> Tensor:
    """Regression loss pulling the estimator toward the oracle score."""
    oracle = float(oracle)
    if not GATE_FLOOR <= oracle <= GATE_CEIL:
        raise DomainError(f"oracle score {oracle} outside [{GATE_FLOOR}, {GATE_CEIL}]")
    return (_as_scalar(estimated) - oracle).square().sum()


def real_loss(estimated: Tensor) -> Tensor:
    """Reference-free loss: push the estimated score toward the scale top."""
    return (_as_scalar(estimated) - GATE_CEIL).square().sum()


def total_loss(
    kind: str,
    real_term: Tensor,
    synth_term: Tensor | None = None,
    cfg: LossConfig = LossConfig(),
) -> Tensor:
    """Final per-utterance loss: reference-free for real recordings, an
    alpha blend of supervised and reference-free terms for synthetic ones."""
    if kind == "real":
        return real_term
    if kind == "synthetic":
        if synth_term is None:
            raise DomainError("synthetic utterances need a supervised loss term")
        return synth_term * cfg.alpha + real_term * (1.0 - cfg.alpha)
    raise DomainError(f"unknown utterance kind '{kind}'")
