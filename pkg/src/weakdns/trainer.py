"""Training orchestration: pre-training, two-stage fine-tuning, and the
alternating protocol.

One protocol cycle <r-s-p> runs r denoiser updates on real minibatches and
s on synthetic minibatches (total loss, quality estimator frozen), then
freezes the denoiser and runs p consecutive estimator updates regressing
onto oracle scores of speech enhanced by the now-fixed denoiser. Exactly
one model's parameters change in any step; a checkpoint is emitted every
`checkpoint_every` protocol runs.

Determinism contract: all shuffling derives from (seed, stream tag, pass
index), parameters and optimizer moments live on the float32 grid, and a
checkpoint carries every counter needed to resume bit-exactly.
"""

from __future__ import annotations

import json
import re
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .checkpoint import load_tensors, save_tensors
from .dsp import StftConfig, istft, stft
from .errors import DataError, DomainError
from .losses import LossConfig, estimator_loss, real_loss, synth_loss, total_loss
from .metrics import DEFAULT_SEGSNR, SegSnrConfig, delta_seg_snr, quality_oracle, seg_snr
from .mixer import UtteranceRecord
from .models import SPEC_BINS, DenoiserNet, NormStats, QualityNet, fit_norm_stats

STEP_LOG_COLUMNS = ("step", "cycle", "phase", "loss_kind", "loss_value", "lr", "wall_ms")

PHASE_DENOISER_REAL = "denoiser_real"
PHASE_DENOISER_SYNTH = "denoiser_synth"
PHASE_ESTIMATOR = "estimator"


@dataclass(frozen=True)
class ProtocolSpec:
    """One alternating-training cycle: r real + s synthetic denoiser
    minibatches, then p consecutive estimator minibatches."""

    real: int = 1
    synth: int = 1
    estimator: int = 50
    minibatch: int = 3

    def __post_init__(self) -> None:
        if self.real < 0 or self.synth < 0:
            raise DomainError("protocol counts must be non-negative")
        if self.real + self.synth < 1:
            raise DomainError("protocol needs at least one denoiser minibatch per cycle")
        if self.estimator < 1:
            raise DomainError("protocol needs at least one estimator minibatch per cycle")
        if self.minibatch < 1:
            raise DomainError("minibatch size must be >= 1")

    _PATTERN = re.compile(r"^[⟨<]?\s*(\d+)\s*[-−–]\s*(\d+)\s*[-−–]\s*(\d+)\s*[⟩>]?$")

    @classmethod
    def parse(cls, text: str, minibatch: int = 3) -> "ProtocolSpec":
        m = cls._PATTERN.match(text.strip())
        if not m:
            raise DomainError(f"cannot parse protocol '{text}' (expected like '1-1-50')")
        return cls(int(m.group(1)), int(m.group(2)), int(m.group(3)), minibatch)

    def __str__(self) -> str:
        return f"⟨{self.real}−{self.synth}−{self.estimator}⟩"


class Cursor:
    """Deterministic, resumable shuffled cycling over utterance ids."""

    def __init__(self, ids, seed: int, tag: str):
        self.ids = sorted(ids)
        self.seed = int(seed)
        self.tag = tag
        self.pass_index = -1
        self.pos = 0
        self._order: list[str] = []

    def _order_for(self, pass_index: int) -> list[str]:
        rng = np.random.default_rng(
            [self.seed & 0xFFFFFFFF, zlib.crc32(self.tag.encode()), pass_index]
        )
        return [self.ids[i] for i in rng.permutation(len(self.ids))]

    def take(self, k: int) -> list[str]:
        if not self.ids:
            raise DataError(f"data stream '{self.tag}' is empty")
        out: list[str] = []
        while len(out) < k:
            if self.pass_index < 0 or self.pos >= len(self._order):
                self.pass_index += 1
                self._order = self._order_for(self.pass_index)
                self.pos = 0
            out.append(self._order[self.pos])
            self.pos += 1
        return out

    def state(self) -> dict:
        return {"pass_index": self.pass_index, "pos": self.pos}

    def restore(self, state: dict) -> None:
        self.pass_index = int(state["pass_index"])
        self.pos = int(state["pos"])
        self._order = self._order_for(self.pass_index) if self.pass_index >= 0 else []


@dataclass
class TrainerConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    protocol: ProtocolSpec = field(default_factory=ProtocolSpec)
    seg_snr: SegSnrConfig = DEFAULT_SEGSNR
    lr_denoiser: float = 1e-4
    lr_quality: float = 1e-4
    checkpoint_every: int = 39
    seed: int = 0
    out_dir: Path | None = None


class Trainer:
    """Owns both models, their optimizers, and every counter."""

    def __init__(
        self,
        cfg: TrainerConfig,
        synth_train: list[UtteranceRecord],
        real_train: list[UtteranceRecord] | None = None,
        synth_val: list[UtteranceRecord] | None = None,
        real_val: list[UtteranceRecord] | None = None,
        norm: NormStats | None = None,
    ):
        self.cfg = cfg
        self.synth_train = {r.id: r for r in synth_train}
        self.real_train = {r.id: r for r in (real_train or [])}
        self.synth_val = list(synth_val or [])
        self.real_val = list(real_val or [])
        for rec in self.synth_train.values():
            if rec.kind != "synthetic":
                raise DataError(f"record '{rec.id}' in the synthetic stream is not synthetic")
        for rec in self.real_train.values():
            if rec.kind != "real":
                raise DataError(f"record '{rec.id}' in the real stream is not real")

        if norm is None:
            if not synth_train:
                raise DataError("cannot fit normalization on an empty training set")
            norm = fit_norm_stats(
                np.abs(stft(r.noisy, cfg.stft)) for r in synth_train
            )
        self.norm = norm

        self.denoiser = DenoiserNet(seed=cfg.seed)
        self.quality = QualityNet(seed=cfg.seed)
        self.adam_d = Adam(self.denoiser.params, lr=cfg.lr_denoiser)
        self.adam_q = Adam(self.quality.params, lr=cfg.lr_quality)

        self.step = 0
        self.cycle = 0
        self.protocol_runs = 0
        self.synth_cursor = Cursor(self.synth_train.keys(), cfg.seed, "synth")
        self.real_cursor = Cursor(self.real_train.keys(), cfg.seed, "real")
        self.est_cursor = Cursor(self.synth_train.keys(), cfg.seed, "estimator")
        self.pre_cursor = Cursor(self.synth_train.keys(), cfg.seed, "pretrain")

        self.log_rows: list[dict] = []
        self.on_step = None  # callback(trainer, row) for observers
        self.data_digests: dict[str, str] = {}  # dataset content hashes for provenance
        self._denoiser_version = 0
        self._enh_cache: dict[str, tuple[np.ndarray, float]] = {}
        self._enh_cache_version = -1
        self._spec_cache: dict[str, dict] = {}
        self._norm_const: dict[int, tuple[Tensor, Tensor]] = {}
        self._log_file = None
        if cfg.out_dir is not None:
            cfg.out_dir.mkdir(parents=True, exist_ok=True)

    # -- cached per-record spectra ----------------------------------------

    def _spectra(self, rec: UtteranceRecord) -> dict:
        got = self._spec_cache.get(rec.id)
        if got is None:
            got = {"Y": stft(rec.noisy, self.cfg.stft)}
            if rec.kind == "synthetic":
                got["S"] = stft(rec.clean, self.cfg.stft)
                got["S_rev"] = stft(rec.clean_rev, self.cfg.stft)
            self._spec_cache[rec.id] = got
        return got

    def _norm_tensors(self, n_frames: int) -> tuple[Tensor, Tensor]:
        got = self._norm_const.get(n_frames)
        if got is None:
            shape = (n_frames, self.norm.mean.size)
            neg_mean = Tensor(np.broadcast_to(-self.norm.mean[None, :], shape).copy())
            inv_std = Tensor(np.broadcast_to(1.0 / self.norm.std[None, :], shape).copy())
            got = (neg_mean, inv_std)
            self._norm_const[n_frames] = got
        return got

    # -- per-utterance graphs ----------------------------------------------

    def _masked_spectrum(self, rec: UtteranceRecord) -> tuple[Tensor, Tensor, np.ndarray]:
        spec = self._spectra(rec)["Y"]
        m_re, m_im = self.denoiser.forward(spec, self.norm)
        y_re, y_im = Tensor(spec.real), Tensor(spec.imag)
        sh_re = m_re * y_re - m_im * y_im
        sh_im = m_re * y_im + m_im * y_re
        return sh_re, sh_im, spec

    def _estimate_quality(self, sh_re: Tensor, sh_im: Tensor) -> Tensor:
        amp = ad.complex_abs(sh_re, sh_im)
        neg_mean, inv_std = self._norm_tensors(amp.shape[0])
        return self.quality.forward((amp + neg_mean) * inv_std)

    def _total_loss_graph(self, rec: UtteranceRecord) -> Tensor:
        sh_re, sh_im, _ = self._masked_spectrum(rec)
        j_real = real_loss(self._estimate_quality(sh_re, sh_im))
        if rec.kind == "real":
            return total_loss("real", j_real, cfg=self.cfg.loss)
        spectra = self._spectra(rec)
        j_synth = synth_loss(
            sh_re, sh_im, spectra["S"], spectra["S_rev"], self.cfg.loss, self.cfg.stft.fft_size
        )
        return total_loss("synthetic", j_real, j_synth, self.cfg.loss)

    def _supervised_loss_graph(self, rec: UtteranceRecord) -> Tensor:
        sh_re, sh_im, _ = self._masked_spectrum(rec)
        spectra = self._spectra(rec)
        return synth_loss(
            sh_re, sh_im, spectra["S"], spectra["S_rev"], self.cfg.loss, self.cfg.stft.fft_size
        )

    def _frozen_enhancement(self, rec: UtteranceRecord) -> tuple[np.ndarray, float]:
        """Enhanced amplitude (normalized) and oracle score under the
        current frozen denoiser; cached per denoiser version."""
        if self._enh_cache_version != self._denoiser_version:
            self._enh_cache.clear()
            self._enh_cache_version = self._denoiser_version
        got = self._enh_cache.get(rec.id)
        if got is None:
            spec = self._spectra(rec)["Y"]
            enhanced = self.denoiser.enhance_spectrogram(spec, self.norm)
            wave = istft(enhanced, self.cfg.stft, out_len=rec.noisy.size)
            oracle = quality_oracle(rec.clean, wave, self.cfg.seg_snr)
            amp_norm = self.norm.normalize(np.abs(enhanced))
            got = (amp_norm, oracle)
            self._enh_cache[rec.id] = got
        return got

    # -- updates -------------------------------------------------------------

    def _log(self, phase: str, loss_kind: str, loss_value: float, lr: float, wall_ms: float):
        self.step += 1
        row = {
            "step": self.step,
            "cycle": self.cycle,
            "phase": phase,
            "loss_kind": loss_kind,
            "loss_value": loss_value,
            "lr": lr,
            "wall_ms": wall_ms,
        }
        self.log_rows.append(row)
        if self.cfg.out_dir is not None:
            path = self.cfg.out_dir / "steps.csv"
            new = not path.exists()
            with open(path, "a", encoding="utf-8") as f:
                if new:
                    f.write(",".join(STEP_LOG_COLUMNS) + "\n")
                f.write(",".join(str(row[c]) for c in STEP_LOG_COLUMNS) + "\n")
        if self.on_step is not None:
            self.on_step(self, row)

    def _denoiser_update(self, recs: list[UtteranceRecord], phase: str, supervised: bool):
        t0 = time.perf_counter()
        self.quality.set_trainable(False)
        self.denoiser.set_trainable(True)
        self.adam_d.zero_grad()
        total = 0.0
        w = 1.0 / len(recs)
        for rec in recs:
            loss = (
                self._supervised_loss_graph(rec) if supervised else self._total_loss_graph(rec)
            )
            total += loss.item()
            (loss * w).backward()
        self.adam_d.step()
        self._denoiser_version += 1
        self._log(phase, "synth" if supervised else "total", total * w,
                  self.adam_d.lr, (time.perf_counter() - t0) * 1e3)

    def _estimator_update(self, recs: list[UtteranceRecord]):
        t0 = time.perf_counter()
        self.denoiser.set_trainable(False)
        self.quality.set_trainable(True)
        self.adam_q.zero_grad()
        total = 0.0
        w = 1.0 / len(recs)
        for rec in recs:
            amp_norm, oracle = self._frozen_enhancement(rec)
            loss = estimator_loss(self.quality.forward(amp_norm), oracle)
            total += loss.item()
            (loss * w).backward()
        self.adam_q.step()
        self._log(PHASE_ESTIMATOR, "estimator", total * w,
                  self.adam_q.lr, (time.perf_counter() - t0) * 1e3)

    def _records(self, ids: list[str], pool: dict) -> list[UtteranceRecord]:
        return [pool[i] for i in ids]

    # -- protocol ------------------------------------------------------------

    def run_protocol_cycle(self) -> None:
        """One full <r-s-p> cycle; checkpoints at the configured cadence."""
        proto = self.cfg.protocol
        if proto.real > 0 and not self.real_train:
            raise DataError("protocol requires real data but the real stream is empty")
        if not self.synth_train:
            raise DataError("protocol requires synthetic data but the stream is empty")
        for _ in range(proto.real):
            ids = self.real_cursor.take(proto.minibatch)
            self._denoiser_update(self._records(ids, self.real_train),
                                  PHASE_DENOISER_REAL, supervised=False)
        for _ in range(proto.synth):
            ids = self.synth_cursor.take(proto.minibatch)
            self._denoiser_update(self._records(ids, self.synth_train),
                                  PHASE_DENOISER_SYNTH, supervised=False)
        for _ in range(proto.estimator):
            ids = self.est_cursor.take(proto.minibatch)
            self._estimator_update(self._records(ids, self.synth_train))
        self.cycle += 1
        self.protocol_runs += 1
        if self.cfg.out_dir is not None and self.protocol_runs % self.cfg.checkpoint_every == 0:
            self.save_checkpoint(self.cfg.out_dir / f"ckpt_{self.protocol_runs}")

    def run_stage2(self, cycles: int) -> None:
        for _ in range(cycles):
            self.run_protocol_cycle()

    # -- pre-training ----------------------------------------------------------

    def pretrain_denoiser(self, epochs: int) -> list[float]:
        """Supervised training on synthetic pairs; returns per-epoch
        validation losses, with the initial loss prepended."""
        history = [self.validation_synth_loss()]
        n = len(self.synth_train)
        batches = max(1, n // self.cfg.protocol.minibatch)
        for _ in range(epochs):
            for _ in range(batches):
                ids = self.pre_cursor.take(self.cfg.protocol.minibatch)
                self._denoiser_update(self._records(ids, self.synth_train),
                                      PHASE_DENOISER_SYNTH, supervised=True)
            history.append(self.validation_synth_loss())
        return history

    def pretrain_quality(self, epochs: int) -> list[float]:
        """Regress the estimator onto oracle scores of speech enhanced by
        the current (frozen) denoiser; returns validation MSE history."""
        history = [self.validation_quality_mse()]
        n = len(self.synth_train)
        batches = max(1, n // self.cfg.protocol.minibatch)
        for _ in range(epochs):
            for _ in range(batches):
                ids = self.est_cursor.take(self.cfg.protocol.minibatch)
                self._estimator_update(self._records(ids, self.synth_train))
            history.append(self.validation_quality_mse())
        return history

    # -- validation --------------------------------------------------------------

    def validation_synth_loss(self) -> float:
        if not self.synth_val:
            raise DataError("no synthetic validation records")
        with ad.no_grad():
            vals = [self._supervised_loss_graph(r).item() for r in self.synth_val]
        return float(np.mean(vals))

    def validation_quality_mse(self) -> float:
        if not self.synth_val:
            raise DataError("no synthetic validation records")
        errs = []
        with ad.no_grad():
            for rec in self.synth_val:
                amp_norm, oracle = self._frozen_enhancement(rec)
                errs.append((self.quality.forward(amp_norm).item() - oracle) ** 2)
        return float(np.mean(errs))

    def validation_total_loss(self, records: list[UtteranceRecord]) -> float:
        if not records:
            raise DataError("empty validation set")
        with ad.no_grad():
            vals = [self._total_loss_graph(r).item() for r in records]
        return float(np.mean(vals))

    # -- checkpointing -------------------------------------------------------------

    def _counters(self) -> dict:
        return {
            "step": self.step,
            "cycle": self.cycle,
            "protocol_runs": self.protocol_runs,
            "denoiser_version": self._denoiser_version,
            "adam_d_t": self.adam_d.t,
            "adam_q_t": self.adam_q.t,
            "cursors": {
                "synth": self.synth_cursor.state(),
                "real": self.real_cursor.state(),
                "estimator": self.est_cursor.state(),
                "pretrain": self.pre_cursor.state(),
            },
        }

    def save_checkpoint(self, path_base: str | Path, extra_meta: dict | None = None) -> Path:
        path_base = Path(path_base)
        tensors: dict[str, np.ndarray] = {}
        tensors.update(self.denoiser.export_arrays("denoiser"))
        tensors.update(self.quality.export_arrays("quality"))
        tensors["norm.mean"] = self.norm.mean
        tensors["norm.std"] = self.norm.std
        tensors.update(self.adam_d.state_arrays("adam_d"))
        tensors.update(self.adam_q.state_arrays("adam_q"))
        save_tensors(path_base.with_suffix(".wdns"), tensors)
        meta = {
            "topology": {"denoiser": self.denoiser.topology, "quality": self.quality.topology},
            "protocol": str(self.cfg.protocol),
            "alpha": self.cfg.loss.alpha,
            "beta": self.cfg.loss.beta,
            "seed": self.cfg.seed,
            "lr_denoiser": self.cfg.lr_denoiser,
            "lr_quality": self.cfg.lr_quality,
            "data_digests": self.data_digests,
            "counters": self._counters(),
        }
        if extra_meta:
            meta.update(extra_meta)
        path_base.with_suffix(".json").write_text(
            json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )
        return path_base.with_suffix(".wdns")

    def restore_checkpoint(self, path_base: str | Path) -> None:
        path_base = Path(path_base)
        meta = json.loads(path_base.with_suffix(".json").read_text(encoding="utf-8"))
        topo = meta.get("topology", {})
        if topo.get("denoiser") != self.denoiser.topology or topo.get("quality") != self.quality.topology:
            raise DataError(
                f"topology mismatch: checkpoint has {topo}, models are "
                f"{{'denoiser': '{self.denoiser.topology}', 'quality': '{self.quality.topology}'}}"
            )
        arrays = load_tensors(path_base.with_suffix(".wdns"))
        self.denoiser.load_arrays("denoiser", arrays)
        self.quality.load_arrays("quality", arrays)
        self.norm = NormStats(arrays["norm.mean"], arrays["norm.std"])
        self._norm_const.clear()
        counters = meta["counters"]
        self.adam_d.load_state("adam_d", arrays, counters["adam_d_t"])
        self.adam_q.load_state("adam_q", arrays, counters["adam_q_t"])
        self.step = counters["step"]
        self.cycle = counters["cycle"]
        self.protocol_runs = counters["protocol_runs"]
        self._denoiser_version = counters["denoiser_version"]
        self.synth_cursor.restore(counters["cursors"]["synth"])
        self.real_cursor.restore(counters["cursors"]["real"])
        self.est_cursor.restore(counters["cursors"]["estimator"])
        self.pre_cursor.restore(counters["cursors"]["pretrain"])
        self._enh_cache.clear()
        self._enh_cache_version = -1


# -- standalone model loading / inference ------------------------------------


def load_models(path_base: str | Path) -> tuple[DenoiserNet, QualityNet, NormStats, dict]:
    """Load a checkpoint into fresh models, refusing topology mismatches."""
    path_base = Path(path_base)
    json_path = path_base.with_suffix(".json")
    if not json_path.exists():
        raise DataError(f"checkpoint metadata not found: {json_path}")
    meta = json.loads(json_path.read_text(encoding="utf-8"))
    denoiser = DenoiserNet()
    quality = QualityNet()
    topo = meta.get("topology", {})
    if topo.get("denoiser") != denoiser.topology or topo.get("quality") != quality.topology:
        raise DataError(f"topology mismatch: checkpoint carries {topo}")
    arrays = load_tensors(path_base.with_suffix(".wdns"))
    denoiser.load_arrays("denoiser", arrays)
    quality.load_arrays("quality", arrays)
    norm = NormStats(arrays["norm.mean"], arrays["norm.std"])
    return denoiser, quality, norm, meta


def enhance_waveform(
    denoiser: DenoiserNet, norm: NormStats, wave: np.ndarray, stft_cfg: StftConfig = StftConfig()
) -> np.ndarray:
    """Full enhancement chain; output has exactly the input's length."""
    spec = stft(wave, stft_cfg)
    enhanced = denoiser.enhance_spectrogram(spec, norm)
    return istft(enhanced, stft_cfg, out_len=wave.size)


# -- model selection -----------------------------------------------------------


@dataclass
class SelectionReport:
    synth_ranking: list[tuple[str, float]]
    real_ranking: list[tuple[str, float]]
    chosen_synth: str
    chosen_real: str
    agree: bool


def select_model(
    checkpoint_bases: list[str | Path],
    synth_val: list[UtteranceRecord],
    real_val: list[UtteranceRecord],
    cfg: TrainerConfig,
) -> SelectionReport:
    """Rank checkpoints by mean total loss on each validation set.

    The real set uses the reference-free branch by necessity; both
    rankings (and their argmin) are reported rather than assumed equal.
    """
    if not checkpoint_bases:
        raise DataError("select_model: no checkpoints given")
    synth_scores: list[tuple[str, float]] = []
    real_scores: list[tuple[str, float]] = []
    placeholder = NormStats(np.zeros(SPEC_BINS), np.ones(SPEC_BINS))
    for base in checkpoint_bases:
        trainer = Trainer(
            cfg,
            synth_train=[],
            real_train=None,
            synth_val=synth_val,
            real_val=real_val,
            norm=placeholder,  # replaced by the checkpoint's own stats
        )
        trainer.restore_checkpoint(Path(base))
        name = str(base)
        if synth_val:
            synth_scores.append((name, trainer.validation_total_loss(synth_val)))
        if real_val:
            real_scores.append((name, trainer.validation_total_loss(real_val)))
    synth_ranking = sorted(synth_scores, key=lambda kv: kv[1])
    real_ranking = sorted(real_scores, key=lambda kv: kv[1])
    chosen_synth = synth_ranking[0][0] if synth_ranking else ""
    chosen_real = real_ranking[0][0] if real_ranking else ""
    agree = bool(chosen_synth and chosen_real and chosen_synth == chosen_real)
    return SelectionReport(synth_ranking, real_ranking, chosen_synth, chosen_real, agree)


# -- evaluation -----------------------------------------------------------------


REPORT_COLUMNS = (
    "utterance_id",
    "seg_snr_noisy",
    "seg_snr_enhanced",
    "delta_seg_snr",
    "oracle_q_noisy",
    "oracle_q_enhanced",
    "estimated_q_enhanced",
)


def evaluate_records(
    denoiser: DenoiserNet,
    quality: QualityNet | None,
    norm: NormStats,
    records: list[UtteranceRecord],
    stft_cfg: StftConfig = StftConfig(),
    seg_cfg: SegSnrConfig = DEFAULT_SEGSNR,
    identity_mask: bool = False,
) -> list[dict]:
    """Per-utterance metric rows plus aggregate mean rows.

    Synthetic records only (references are required). Aggregates: a
    'mean:all' row always, plus 'mean:dry' / 'mean:reverb' when both
    classes are present.
    """
    rows = []
    classes: dict[str, list[dict]] = {"dry": [], "reverb": []}
    for rec in records:
        if rec.kind != "synthetic":
            continue
        if identity_mask:
            enhanced_wave = rec.noisy.copy()
            enhanced_spec = stft(rec.noisy, stft_cfg)
        else:
            enhanced_spec = denoiser.enhance_spectrogram(stft(rec.noisy, stft_cfg), norm)
            enhanced_wave = istft(enhanced_spec, stft_cfg, out_len=rec.noisy.size)
        row = {
            "utterance_id": rec.id,
            "seg_snr_noisy": seg_snr(rec.clean_rev, rec.noisy, seg_cfg),
            "seg_snr_enhanced": seg_snr(rec.clean_rev, enhanced_wave, seg_cfg),
            "oracle_q_noisy": quality_oracle(rec.clean, rec.noisy, seg_cfg),
            "oracle_q_enhanced": quality_oracle(rec.clean, enhanced_wave, seg_cfg),
        }
        row["delta_seg_snr"] = row["seg_snr_enhanced"] - row["seg_snr_noisy"]
        if quality is not None:
            row["estimated_q_enhanced"] = quality.score(
                norm.normalize(np.abs(enhanced_spec))
            )
        else:
            row["estimated_q_enhanced"] = float("nan")
        rows.append(row)
        classes["reverb" if rec.meta.get("reverberated") else "dry"].append(row)
    if not rows:
        raise DataError("no synthetic records to evaluate")

    def mean_row(name: str, subset: list[dict]) -> dict:
        out = {"utterance_id": name}
        for col in REPORT_COLUMNS[1:]:
            out[col] = float(np.mean([r[col] for r in subset]))
        return out

    aggregates = [mean_row("mean:all", rows)]
    if classes["dry"] and classes["reverb"]:
        aggregates.append(mean_row("mean:dry", classes["dry"]))
        aggregates.append(mean_row("mean:reverb", classes["reverb"]))
    return rows + aggregates


def write_report(path: str | Path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row[c]) for c in REPORT_COLUMNS) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
