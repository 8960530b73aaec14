"""Shared fixtures: tiny deterministic corpora for mixer/trainer/CLI tests."""

import numpy as np
import pytest

from weakdns.fixture import generate_fixture, noise_like, speech_like
from weakdns.mixer import make_rir
from weakdns.wavio import write_wav


def write_mini_bank(root, n_clean=4, n_noise=2, n_rir=2, n_real=2, duration_s=0.5, seed=11):
    """Raw WAV bank plus a manifest, smaller than the packaged fixture."""
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(n_clean):
        p = root / f"clean_{i}.wav"
        write_wav(p, speech_like(rng, duration_s))
        lines.append(f"clean_{i}\tclean\t{p}")
    for i in range(n_noise):
        p = root / f"noise_{i}.wav"
        write_wav(p, noise_like(rng, duration_s * 2))
        lines.append(f"noise_{i}\tnoise\t{p}")
    for i in range(n_rir):
        p = root / f"rir_{i}.wav"
        write_wav(p, make_rir(rng, t60=0.2))
        lines.append(f"rir_{i}\trir\t{p}")
    for i in range(n_real):
        p = root / f"real_{i}.wav"
        write_wav(p, noise_like(rng, duration_s) + speech_like(rng, duration_s))
        lines.append(f"real_{i}\treal\t{p}")
    manifest = root / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


@pytest.fixture(scope="session")
def mini_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("bank")
    return write_mini_bank(root)


@pytest.fixture(scope="session")
def tiny_fixture(tmp_path_factory):
    """A complete (but very small) train/val/test fixture corpus with
    short utterances, enough frames for the quality net."""
    root = tmp_path_factory.mktemp("fixture")
    return generate_fixture(
        root,
        n_clean=12,
        n_noise=4,
        n_rir=2,
        n_real_train=4,
        n_real_val=2,
        duration_s=0.45,
        seed=21,
    )
