"""Synthetic training-pair construction and corpus ingestion.

Synthetic records follow the additive model: clean speech convolved with a
room impulse response, plus noise gained to hit a target SNR measured
against the active speech level. Real records are noisy-only; they carry
no references by definition.

Manifest format: UTF-8 text, one record per line,
    id<TAB>role<TAB>path          role in {clean, noise, rir, real}
Dataset layout on disk:
    <root>/noisy/<id>.wav, <root>/clean/<id>.wav, <root>/clean_rev/<id>.wav
    <root>/meta/<id>.json   (fields: id, snr_db, rir_id, scale, reverberated)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import DataError, DomainError
from .wavio import read_wav, write_wav

ACTIVE_FRAME = 512  # 32 ms at 16 kHz
ACTIVE_HOP = 256    # 16 ms
ACTIVE_MARGIN_DB = 15.9
PEAK_LIMIT = 0.999  # mixtures are rescaled under this before 16-bit write


@dataclass(frozen=True)
class MixSpec:
    """Per-utterance mixing plan."""

    snr_db: float
    reverberate: bool
    rir_id: str | None
    seed: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.snr_db):
            raise DomainError("snr_db must be finite")


@dataclass
class UtteranceRecord:
    id: str
    noisy: np.ndarray
    clean: np.ndarray | None = None
    clean_rev: np.ndarray | None = None
    kind: str = "synthetic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind == "synthetic":
            if self.clean is None or self.clean_rev is None:
                raise DomainError(f"synthetic record '{self.id}' needs clean and clean_rev")
        elif self.kind == "real":
            if self.clean is not None or self.clean_rev is not None:
                raise DomainError(f"real record '{self.id}' must not carry references")
        else:
            raise DomainError(f"unknown record kind '{self.kind}'")


def reverberate(speech: np.ndarray, rir: np.ndarray) -> np.ndarray:
    """Full linear convolution with the impulse response, cut to len(speech)."""
    speech = np.asarray(speech, dtype=np.float64)
    rir = np.asarray(rir, dtype=np.float64)
    if rir.size == 0:
        raise DomainError("empty impulse response")
    if rir.size > speech.size:
        raise DomainError(f"impulse response ({rir.size}) longer than speech ({speech.size})")
    return fftconvolve(speech, rir, mode="full")[: speech.size]


def mean_power(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x))


def active_level(x: np.ndarray) -> float:
    """Mean power over active frames.

    A frame (32 ms, 16 ms hop) is active when its RMS exceeds the maximum
    frame RMS minus 15.9 dB. This is a documented stand-in for a formal
    active-speech-level measurement: deterministic and close enough for
    SNR scaling.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise DomainError("active_level: empty signal")
    if x.size <= ACTIVE_FRAME:
        frames = x[None, :]
    else:
        starts = np.arange(0, x.size - ACTIVE_FRAME + 1, ACTIVE_HOP)
        frames = x[starts[:, None] + np.arange(ACTIVE_FRAME)[None, :]]
    powers = np.mean(frames * frames, axis=1)
    rms = np.sqrt(powers)
    threshold = np.max(rms) * 10.0 ** (-ACTIVE_MARGIN_DB / 20.0)
    active = rms > threshold
    if not np.any(active):
        raise DomainError("active_level: no active speech found")
    return float(np.mean(powers[active]))


def mix_at_snr(speech: np.ndarray, noise: np.ndarray, snr_db: float) -> tuple[np.ndarray, float]:
    """Add gained noise to speech so the active-level SNR hits snr_db.

    Returns (mixture, noise_gain). Noise longer than speech is cropped
    from the front; it must be at least as long.
    """
    speech = np.asarray(speech, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size < speech.size:
        raise DomainError("noise must be at least as long as speech (tile it first)")
    noise = noise[: speech.size]
    npow = mean_power(noise)
    if npow == 0.0:
        raise DomainError("mix_at_snr: zero-power noise")
    gain = float(np.sqrt(active_level(speech) / (npow * 10.0 ** (snr_db / 10.0))))
    return speech + gain * noise, gain


def fit_noise_length(noise: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    """Crop long noise at a random offset; tile short noise with an offset."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size == 0:
        raise DomainError("empty noise signal")
    if noise.size >= length:
        off = int(rng.integers(0, noise.size - length + 1))
        return noise[off : off + length].copy()
    reps = int(np.ceil((length + noise.size) / noise.size))
    tiled = np.tile(noise, reps)
    off = int(rng.integers(0, noise.size))
    return tiled[off : off + length].copy()


def make_rir(rng: np.random.Generator, t60: float = 0.3, sample_rate: int = 16000,
             max_len: int = 4000) -> np.ndarray:
    """Parametric room impulse response: unit direct path at tap 0 plus an
    exponentially decaying Gaussian tail reaching -60 dB at t60 seconds."""
    if not 0.05 <= t60 <= 2.0:
        raise DomainError(f"t60 {t60} outside the supported 0.05..2.0 s range")
    n = min(int(round(t60 * sample_rate)), max_len)
    taps = np.arange(1, n)
    decay = np.exp(-6.9078 * taps / (t60 * sample_rate))
    h = np.empty(n)
    h[0] = 1.0
    h[1:] = 0.35 * rng.standard_normal(n - 1) * decay
    return h


# -- manifests and corpus construction ---------------------------------------

MANIFEST_ROLES = ("clean", "noise", "rir", "real")


def read_manifest(path: str | Path) -> dict[str, list[tuple[str, Path]]]:
    """Parse a manifest into role -> [(id, path)] with existence checks."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    entries: dict[str, list[tuple[str, Path]]] = {r: [] for r in MANIFEST_ROLES}
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'id<TAB>role<TAB>path'")
        uid, role, rel = parts
        if role not in MANIFEST_ROLES:
            raise DataError(f"{path}:{lineno}: unknown role '{role}'")
        if uid in seen:
            raise DataError(f"{path}:{lineno}: duplicate id '{uid}'")
        seen.add(uid)
        wav = Path(rel)
        if not wav.is_absolute():
            wav = path.parent / wav
        if not wav.exists():
            raise DataError(f"{path}:{lineno}: file not found: {wav}")
        entries[role].append((uid, wav))
    return entries


@dataclass(frozen=True)
class CorpusSpec:
    snr_lo: float = 0.0
    snr_hi: float = 10.0
    reverb_fraction: float = 0.5
    seed: int = 0
    # when set, SNRs are drawn per utterance uniformly over these values
    # instead of the continuous [snr_lo, snr_hi] range
    snr_choices: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.snr_lo <= self.snr_hi:
            raise DomainError("snr_lo must be <= snr_hi")
        if not 0.0 <= self.reverb_fraction <= 1.0:
            raise DomainError("reverb_fraction must be in [0, 1]")
        if self.snr_choices is not None and len(self.snr_choices) == 0:
            raise DomainError("snr_choices must be non-empty when given")


def _utterance_rng(seed: int, uid: str) -> np.random.Generator:
    digest = hashlib.sha256(uid.encode("utf-8")).digest()
    return np.random.default_rng([seed & 0xFFFFFFFF, int.from_bytes(digest[:8], "little")])


def build_corpus(manifest_path: str | Path, out_dir: str | Path,
                 spec: CorpusSpec) -> list[UtteranceRecord]:
    """Mix a dataset to disk; returns the in-memory records.

    Deterministic for a given (manifest, spec): per-utterance draws derive
    from (seed, id), and the reverberated subset is a seeded permutation
    of the sorted clean ids, sized round(fraction * N) exactly.
    """
    entries = read_manifest(manifest_path)
    cleans = sorted(entries["clean"])
    noises = sorted(entries["noise"])
    rirs = sorted(entries["rir"])
    reals = sorted(entries["real"])
    if cleans and not noises:
        raise DataError("manifest has clean files but no noise files to mix with")
    if spec.reverb_fraction > 0.0 and cleans and not rirs:
        raise DataError("reverb_fraction > 0 but the manifest lists no RIRs")

    out_dir = Path(out_dir)
    n_reverb = int(round(spec.reverb_fraction * len(cleans)))
    perm = np.random.default_rng([spec.seed & 0xFFFFFFFF, 0x72657662]).permutation(len(cleans))
    reverb_set = {cleans[i][0] for i in perm[:n_reverb]}

    records: list[UtteranceRecord] = []
    for uid, clean_path in cleans:
        rng = _utterance_rng(spec.seed, uid)
        clean = read_wav(clean_path)
        if spec.snr_choices is not None:
            snr_db = float(spec.snr_choices[int(rng.integers(len(spec.snr_choices)))])
        else:
            snr_db = float(rng.uniform(spec.snr_lo, spec.snr_hi))
        noise_id, noise_path = noises[int(rng.integers(len(noises)))]
        noise = fit_noise_length(read_wav(noise_path), clean.size, rng)
        if uid in reverb_set:
            rir_id, rir_path = rirs[int(rng.integers(len(rirs)))]
            clean_rev = reverberate(clean, read_wav(rir_path))
        else:
            rir_id = None
            clean_rev = clean.copy()
        noisy, gain = mix_at_snr(clean_rev, noise, snr_db)
        peak = float(np.max(np.abs(noisy)))
        if peak > PEAK_LIMIT:
            # common rescale of the whole triple: keeps the SNR and the
            # additive decomposition intact while avoiding 16-bit clipping
            factor = PEAK_LIMIT / peak
            noisy = noisy * factor
            clean = clean * factor
            clean_rev = clean_rev * factor
        meta = {
            "id": uid,
            "snr_db": snr_db,
            "rir_id": rir_id,
            "scale": gain,
            "reverberated": uid in reverb_set,
        }
        rec = UtteranceRecord(uid, noisy, clean, clean_rev, "synthetic", meta)
        _write_record(out_dir, rec)
        records.append(rec)

    for uid, real_path in reals:
        meta = {"id": uid, "snr_db": None, "rir_id": None, "scale": None, "reverberated": False}
        rec = UtteranceRecord(uid, read_wav(real_path), kind="real", meta=meta)
        _write_record(out_dir, rec)
        records.append(rec)
    return records


def _write_record(root: Path, rec: UtteranceRecord) -> None:
    write_wav(root / "noisy" / f"{rec.id}.wav", rec.noisy)
    if rec.kind == "synthetic":
        write_wav(root / "clean" / f"{rec.id}.wav", rec.clean)
        write_wav(root / "clean_rev" / f"{rec.id}.wav", rec.clean_rev)
    meta_path = root / "meta" / f"{rec.id}.json"
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    meta_path.write_text(json.dumps(rec.meta, sort_keys=True) + "\n", encoding="utf-8")


def load_dataset(root: str | Path) -> list[UtteranceRecord]:
    """Read a mixed dataset back from disk, sorted by utterance id."""
    root = Path(root)
    meta_dir = root / "meta"
    if not meta_dir.is_dir():
        raise DataError(f"not a dataset directory (no meta/): {root}")
    records = []
    for meta_path in sorted(meta_dir.glob("*.json")):
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        uid = meta["id"]
        noisy = read_wav(root / "noisy" / f"{uid}.wav")
        clean_path = root / "clean" / f"{uid}.wav"
        if clean_path.exists():
            records.append(
                UtteranceRecord(
                    uid,
                    noisy,
                    read_wav(clean_path),
                    read_wav(root / "clean_rev" / f"{uid}.wav"),
                    "synthetic",
                    meta,
                )
            )
        else:
            records.append(UtteranceRecord(uid, noisy, kind="real", meta=meta))
    if not records:
        raise DataError(f"dataset at {root} is empty")
    return records


def dataset_digest(root: str | Path) -> str:
    """Content hash over the sidecar metadata, for checkpoint provenance."""
    root = Path(root)
    h = hashlib.sha256()
    for meta_path in sorted((root / "meta").glob("*.json")):
        h.update(meta_path.name.encode())
        h.update(meta_path.read_bytes())
    return h.hexdigest()
