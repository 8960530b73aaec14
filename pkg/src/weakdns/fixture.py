"""Tiny generated fixture corpus.

Synthesizes speech-like harmonic bursts, colored noise, parametric room
impulse responses, and "real" noisy-only recordings, then mixes them into
train/val/test datasets. Everything derives from one seed, so two runs
produce byte-identical datasets.

The speech signals keep their energy below ~2.5 kHz while the noise is
broadband, which gives a small model something genuinely learnable in a
few CPU minutes.

Run `python -m weakdns.fixture OUTDIR` to materialize one.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mixer import CorpusSpec, build_corpus, make_rir, mix_at_snr, fit_noise_length
from .wavio import SAMPLE_RATE, write_wav

SPEECH_PEAK = 0.25
NOISE_RMS = 0.05


def speech_like(rng: np.random.Generator, duration_s: float = 2.0) -> np.ndarray:
    """Harmonic bursts with vibrato and syllable-rate amplitude envelope."""
    n = int(duration_s * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(110.0, 220.0)
    vibrato = 1.0 + 0.02 * np.sin(2.0 * np.pi * rng.uniform(4.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2.0 * np.pi * f0 * np.cumsum(vibrato) / SAMPLE_RATE
    x = np.zeros(n)
    k = 1
    while k * f0 < 2400.0:
        x += (1.0 / k) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
        k += 1
    # syllable envelope: raised-cosine bursts with silent gaps
    env = np.zeros(n)
    pos = 0
    while pos < n:
        burst = int(rng.uniform(0.12, 0.3) * SAMPLE_RATE)
        gap = int(rng.uniform(0.03, 0.12) * SAMPLE_RATE)
        end = min(pos + burst, n)
        ramp = np.hanning(max(end - pos, 2))
        env[pos:end] = ramp[: end - pos]
        pos = end + gap
    x *= env
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= SPEECH_PEAK / peak
    return x


def noise_like(rng: np.random.Generator, duration_s: float = 2.0) -> np.ndarray:
    """Broadband noise, lightly colored by a one-pole smoother per file."""
    n = int(duration_s * SAMPLE_RATE)
    white = rng.standard_normal(n)
    a = rng.uniform(0.0, 0.5)
    if a > 0:
        out = np.empty(n)
        acc = 0.0
        for i in range(n):
            acc = a * acc + (1.0 - a) * white[i]
            out[i] = acc
        white = out
    white *= NOISE_RMS / np.sqrt(np.mean(white * white))
    return white


@dataclass(frozen=True)
class FixturePaths:
    root: Path
    train: Path
    val: Path
    test: Path
    manifest_train: Path
    manifest_val: Path
    manifest_test: Path


def generate_fixture(
    root: str | Path,
    n_clean: int = 60,
    n_noise: int = 8,
    n_rir: int = 4,
    n_real_train: int = 12,
    n_real_val: int = 3,
    duration_s: float = 2.0,
    snr_lo: float = 0.0,
    snr_hi: float = 10.0,
    reverb_fraction: float = 0.5,
    seed: int = 7,
) -> FixturePaths:
    """Write the raw bank, per-split manifests, and mixed datasets."""
    root = Path(root)
    raw = root / "raw"
    rng = np.random.default_rng([seed, 0xF1C5])

    clean_paths = []
    for i in range(n_clean):
        p = raw / f"clean_{i:03d}.wav"
        write_wav(p, speech_like(rng, duration_s))
        clean_paths.append(p)
    noise_paths = []
    for i in range(n_noise):
        p = raw / f"noise_{i:03d}.wav"
        write_wav(p, noise_like(rng, duration_s * 1.5))
        noise_paths.append(p)
    rir_paths = []
    for i in range(n_rir):
        p = raw / f"rir_{i:03d}.wav"
        write_wav(p, make_rir(rng, t60=float(rng.uniform(0.15, 0.35))))
        rir_paths.append(p)

    # "real" recordings: mixed the same way but their references are
    # discarded on the spot; downstream they are noisy-only.
    real_paths = []
    for i in range(n_real_train + n_real_val):
        speech = speech_like(rng, duration_s)
        noise = fit_noise_length(noise_like(rng, duration_s * 1.5), speech.size, rng)
        noisy, _ = mix_at_snr(speech, noise, float(rng.uniform(snr_lo, snr_hi)))
        p = raw / f"real_{i:03d}.wav"
        write_wav(p, noisy)
        real_paths.append(p)

    n_val = max(1, n_clean // 10)
    n_test = max(1, n_clean // 10)
    n_train = n_clean - n_val - n_test
    if n_noise >= 3:  # hold one noise file out for each of val and test
        noise_split = (noise_paths[:-2], noise_paths[-2:-1], noise_paths[-1:])
    else:
        noise_split = (noise_paths, noise_paths, noise_paths)
    splits = {
        "train": (clean_paths[:n_train], noise_split[0], real_paths[:n_real_train]),
        "val": (clean_paths[n_train : n_train + n_val], noise_split[1],
                real_paths[n_real_train:]),
        "test": (clean_paths[n_train + n_val :], noise_split[2], []),
    }

    manifests = {}
    for name, (cl, no, re) in splits.items():
        lines = []
        for p in cl:
            lines.append(f"{p.stem}\tclean\t{p.resolve()}")
        for p in no:
            lines.append(f"{p.stem}\tnoise\t{p.resolve()}")
        for p in rir_paths:
            lines.append(f"{p.stem}\trir\t{p.resolve()}")
        for p in re:
            lines.append(f"{p.stem}\treal\t{p.resolve()}")
        mpath = root / f"manifest_{name}.tsv"
        mpath.write_text("\n".join(lines) + "\n", encoding="utf-8")
        manifests[name] = mpath

    datasets = {}
    for i, name in enumerate(("train", "val", "test")):
        spec = CorpusSpec(snr_lo=snr_lo, snr_hi=snr_hi,
                          reverb_fraction=reverb_fraction, seed=seed + i)
        out = root / name
        build_corpus(manifests[name], out, spec)
        datasets[name] = out

    return FixturePaths(
        root=root,
        train=datasets["train"],
        val=datasets["val"],
        test=datasets["test"],
        manifest_train=manifests["train"],
        manifest_val=manifests["val"],
        manifest_test=manifests["test"],
    )


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m weakdns.fixture OUTDIR", file=sys.stderr)
        return 2
    paths = generate_fixture(argv[0])
    print(f"fixture corpus written under {paths.root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
