"""The two trainable networks and input normalization.

DenoiserNet maps a noisy complex spectrogram to a complex mask whose
per-bin magnitude is architecturally bounded by 1. QualityNet scores the
amplitude spectrum of an enhanced utterance on the [1.04, 4.64] scale
without ever seeing a reference (non-intrusiveness is structural: there
is no second input).

Both are deliberately small, fixed topologies sized to train on a CPU in
minutes; the training machinery in this package is architecture-agnostic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError, DomainError

SPEC_BINS = 260  # one-sided 512-point spectrum (257) plus 3 redundant bins

# the 1e-8 floor, snapped to the float32 grid: norm stats are persistent
# model state and must survive float32 checkpoint payloads bit-exactly
STD_FLOOR = float(np.float32(1e-8))


@dataclass
class NormStats:
    """Per-bin amplitude mean/std fitted once on the training set."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DomainError("NormStats mean/std must be 1-d and equally shaped")
        if np.any(self.std < STD_FLOOR):
            raise DomainError(f"NormStats std below floor {STD_FLOOR}")

    def normalize(self, amplitudes: np.ndarray) -> np.ndarray:
        return (amplitudes - self.mean[None, :]) / self.std[None, :]


def fit_norm_stats(amplitude_specs) -> NormStats:
    """Fit per-bin mean and population std over all frames of a corpus."""
    total = None
    total_sq = None
    count = 0
    for amp in amplitude_specs:
        amp = np.asarray(amp, dtype=np.float64)
        if total is None:
            total = amp.sum(axis=0)
            total_sq = (amp * amp).sum(axis=0)
        else:
            total += amp.sum(axis=0)
            total_sq += (amp * amp).sum(axis=0)
        count += amp.shape[0]
    if count == 0:
        raise DomainError("fit_norm_stats: empty corpus")
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    std = np.maximum(ad.f32_grid(np.sqrt(var)), STD_FLOOR)
    return NormStats(ad.f32_grid(mean), std)


def _conv_init(rng: np.random.Generator, out_ch, in_ch, kh, kw, scale=None):
    fan_in = in_ch * kh * kw
    std = scale if scale is not None else np.sqrt(2.0 / fan_in)
    return ad.f32_grid(rng.normal(0.0, std, size=(out_ch, in_ch, kh, kw)))


def _param(data) -> Tensor:
    return Tensor(ad.f32_grid(data), requires_grad=True)


def bounded_mask(z_re: Tensor, z_im: Tensor) -> tuple[Tensor, Tensor]:
    """Bound a complex field to the unit disc: m = z * tanh(|z|) / |z|.

    Smooth, phase-preserving, and exactly bounded: |m| = tanh(|z|) <= 1,
    with m = 0 (no NaN) where z = 0.
    """
    gain = ad.tanhc(ad.complex_abs(z_re, z_im))
    return z_re * gain, z_im * gain


class _ParamModel:
    """Shared plumbing: a named parameter dict plus checkpoint helpers."""

    topology: str

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def set_trainable(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, p in self.params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data, dtype=np.float32).tobytes())
        return h.hexdigest()

    def export_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": p.data for k, p in self.params.items()}

    def load_arrays(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            key = f"{prefix}.{k}"
            if key not in arrays:
                raise DataError(f"checkpoint is missing tensor '{key}'")
            data = np.asarray(arrays[key], dtype=np.float64)
            if data.shape != p.data.shape:
                raise DataError(
                    f"checkpoint tensor '{key}' has shape {data.shape}, expected {p.data.shape}"
                )
            p.data = data


class DenoiserNet(_ParamModel):
    """Complex-mask denoiser.

    Encoder: two stride-(1,2) conv blocks (16 then 32 channels, 3x5
    kernels, relu) halving 260 bins to 65. A single convolutional gated
    recurrent cell (state 32 channels, 1x3 kernel) runs over frames. The
    decoder mirrors the encoder with transposed convs, and a 2-channel
    1x1 head emits z = (re, im), bounded to the unit disc by
    m = z * tanh(|z|)/|z|.
    """

    topology = "denoiser_cgru_v1"

    CH1, CH2 = 16, 32

    def __init__(self, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng([int(seed), 0x6D61736B])
        ch1, ch2 = self.CH1, self.CH2
        p = self.params
        p["enc1.w"] = _param(_conv_init(rng, ch1, 3, 3, 5))
        p["enc1.b"] = _param(np.zeros(ch1))
        p["enc2.w"] = _param(_conv_init(rng, ch2, ch1, 3, 5))
        p["enc2.b"] = _param(np.zeros(ch2))
        gate_scale = np.sqrt(1.0 / (ch2 * 3))
        p["gru.wz"] = _param(_conv_init(rng, ch2, ch2, 1, 3, gate_scale))
        p["gru.bz"] = _param(np.zeros(ch2))
        p["gru.uz"] = _param(_conv_init(rng, ch2, ch2, 1, 3, gate_scale))
        p["gru.wc"] = _param(_conv_init(rng, ch2, ch2, 1, 3, gate_scale))
        p["gru.bc"] = _param(np.zeros(ch2))
        p["gru.uc"] = _param(_conv_init(rng, ch2, ch2, 1, 3, gate_scale))
        p["dec1.w"] = _param(_conv_init(rng, ch2, ch1, 3, 5))
        p["dec1.b"] = _param(np.zeros(ch1))
        p["dec2.w"] = _param(_conv_init(rng, ch1, ch1, 3, 5))
        p["dec2.b"] = _param(np.zeros(ch1))
        p["head.w"] = _param(_conv_init(rng, 2, ch1, 1, 1, 0.01))
        # bias the real head channel so training starts from a roughly
        # pass-through mask (|m| ~ tanh(1)) instead of near-total silence
        p["head.b"] = _param(np.array([1.0, 0.0]))

    def forward(self, spec: np.ndarray, norm: NormStats) -> tuple[Tensor, Tensor]:
        """Return (mask_re, mask_im) tensors of shape (frames, 260).

        Input channels are the normalized amplitude plus the raw real and
        imaginary parts of the noisy spectrum.
        """
        spec = np.asarray(spec)
        if spec.ndim != 2 or spec.shape[1] != SPEC_BINS:
            raise DomainError(f"denoiser expects (frames, {SPEC_BINS}), got {spec.shape}")
        n_frames = spec.shape[0]
        if n_frames == 0:
            raise DomainError("denoiser: zero frames")
        amp_n = norm.normalize(np.abs(spec))
        x = Tensor(np.stack([amp_n, spec.real, spec.imag])[None, :, :, :])

        p = self.params
        e1 = ad.conv2d(x, p["enc1.w"], p["enc1.b"], stride=(1, 2)).relu()
        e2 = ad.conv2d(e1, p["enc2.w"], p["enc2.b"], stride=(1, 2)).relu()
        bins = e2.shape[3]

        # Input-to-gate convolutions cover all frames at once (1x3 kernels
        # do not mix frames); only the state path runs per frame.
        xz = ad.conv2d(e2, p["gru.wz"], p["gru.bz"])
        xc = ad.conv2d(e2, p["gru.wc"], p["gru.bc"])
        h = Tensor(np.zeros((1, self.CH2, 1, bins)))
        states = []
        for t in range(n_frames):
            xz_t = ad.narrow(xz, 2, t, 1)
            xc_t = ad.narrow(xc, 2, t, 1)
            z = ad.sigmoid(xz_t + ad.conv2d(h, p["gru.uz"]))
            c = ad.tanh(xc_t + ad.conv2d(h, p["gru.uc"]))
            h = z * c + (1.0 - z) * h
            states.append(h)
        r = ad.concat(states, axis=2)

        d1 = ad.transposed_conv2d(
            r, p["dec1.w"], p["dec1.b"], stride=(1, 2), out_hw=(n_frames, SPEC_BINS // 2)
        ).relu()
        d2 = ad.transposed_conv2d(
            d1, p["dec2.w"], p["dec2.b"], stride=(1, 2), out_hw=(n_frames, SPEC_BINS)
        ).relu()
        z_head = ad.conv2d(d2, p["head.w"], p["head.b"])
        z_re = ad.narrow(z_head, 1, 0, 1).reshape(n_frames, SPEC_BINS)
        z_im = ad.narrow(z_head, 1, 1, 1).reshape(n_frames, SPEC_BINS)
        return bounded_mask(z_re, z_im)

    def mask(self, spec: np.ndarray, norm: NormStats) -> np.ndarray:
        """Inference-only complex mask."""
        with ad.no_grad():
            m_re, m_im = self.forward(spec, norm)
        return m_re.data + 1j * m_im.data

    def enhance_spectrogram(self, spec: np.ndarray, norm: NormStats) -> np.ndarray:
        return spec * self.mask(spec, norm)


class QualityNet(_ParamModel):
    """Non-intrusive utterance-level quality estimator.

    Conv stack (16/32/64 channels, 3x3, stride 2, relu) over the
    normalized amplitude spectrum, temporal statistics pooling (mean and
    max over frames concatenated), a 64-unit dense relu layer, and a
    single gated output in (1.04, 4.64).
    """

    topology = "quality_cnn_v1"

    MIN_FRAMES = 8
    _POOL_BINS = 33  # 260 bins through three stride-2 halvings
    _EMBED = 2 * 64 * _POOL_BINS

    def __init__(self, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng([int(seed), 0x71756C74])
        p = self.params
        p["c1.w"] = _param(_conv_init(rng, 16, 1, 3, 3))
        p["c1.b"] = _param(np.zeros(16))
        p["c2.w"] = _param(_conv_init(rng, 32, 16, 3, 3))
        p["c2.b"] = _param(np.zeros(32))
        p["c3.w"] = _param(_conv_init(rng, 64, 32, 3, 3))
        p["c3.b"] = _param(np.zeros(64))
        p["fc1.w"] = _param(rng.normal(0.0, np.sqrt(2.0 / self._EMBED), size=(self._EMBED, 64)))
        p["fc1.b"] = _param(np.zeros((1, 64)))
        p["fc2.w"] = _param(rng.normal(0.0, 0.01, size=(64, 1)))
        p["fc2.b"] = _param(np.zeros((1, 1)))

    def embed_frames(self, amp_norm) -> Tensor:
        """Conv-stack features, NCHW (1, 64, frames/8, 33); frame axis 2."""
        x = amp_norm if isinstance(amp_norm, Tensor) else Tensor(np.asarray(amp_norm))
        if len(x.shape) != 2 or x.shape[1] != SPEC_BINS:
            raise DomainError(f"quality net expects (frames, {SPEC_BINS}), got {x.shape}")
        if x.shape[0] < self.MIN_FRAMES:
            raise DomainError(
                f"quality net needs at least {self.MIN_FRAMES} frames, got {x.shape[0]}"
            )
        p = self.params
        h = x.reshape(1, 1, x.shape[0], SPEC_BINS)
        h = ad.conv2d(h, p["c1.w"], p["c1.b"], stride=(2, 2)).relu()
        h = ad.conv2d(h, p["c2.w"], p["c2.b"], stride=(2, 2)).relu()
        h = ad.conv2d(h, p["c3.w"], p["c3.b"], stride=(2, 2)).relu()
        return h  # (1, 64, frames/8, 33)

    @staticmethod
    def pool_statistics(embeddings: Tensor) -> Tensor:
        """Concatenated mean and max over the frame axis; duplication of
        the frame sequence leaves the result unchanged."""
        avg = embeddings.mean(axis=2)
        mx = ad.reduce_max_over_frames(embeddings, axis=2)
        return ad.concat([avg, mx], axis=1).reshape(1, -1)

    def forward(self, amp_norm) -> Tensor:
        """Score one utterance; returns a (1, 1) tensor in (1.04, 4.64)."""
        pooled = self.pool_statistics(self.embed_frames(amp_norm))
        p = self.params
        hidden = (ad.matmul(pooled, p["fc1.w"]) + p["fc1.b"]).relu()
        raw = ad.matmul(hidden, p["fc2.w"]) + p["fc2.b"]
        return ad.clamp_scale_gate(raw)

    def score(self, amp_norm: np.ndarray) -> float:
        with ad.no_grad():
            return self.forward(amp_norm).item()
