"""WAV file I/O: RIFF PCM, mono, 16-bit little-endian, 16 kHz only.

Integer samples map to floats in [-1, 1) by division by 32768. Anything
else (other rates, widths, channel counts, compressed streams) is rejected
with a descriptive error rather than silently converted.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError

SAMPLE_RATE = 16000
_SCALE = 32768.0


def read_wav(path: str | Path) -> np.ndarray:
    """Read a mono 16-bit 16 kHz WAV file to float64 samples in [-1, 1)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"WAV file not found: {path}")
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            n = w.getnframes()
            raw = w.readframes(n)
    except wave.Error as exc:
        raise DomainError(f"{path}: not a readable RIFF PCM WAV ({exc})") from exc
    if channels != 1:
        raise DomainError(f"{path}: expected mono audio, got {channels} channels")
    if width != 2:
        raise DomainError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate != SAMPLE_RATE:
        raise DomainError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
    ints = np.frombuffer(raw, dtype="<i2")
    return ints.astype(np.float64) / _SCALE


def write_wav(path: str | Path, samples: np.ndarray) -> None:
    """Write float samples as a mono 16-bit 16 kHz WAV file.

    Values are clipped to the representable range; samples already on the
    1/32768 grid round-trip exactly through read_wav.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise DomainError(f"expected a 1-d sample array, got shape {samples.shape}")
    if not np.all(np.isfinite(samples)):
        raise DomainError("refusing to write non-finite samples")
    ints = np.clip(np.rint(samples * _SCALE), -32768, 32767).astype("<i2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(ints.tobytes())
