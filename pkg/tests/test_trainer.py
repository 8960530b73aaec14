"""Trainer tests: protocol mechanics, phase exclusivity, determinism,
resume, selection, and evaluation reports."""

import csv
import json

import numpy as np
import pytest

from weakdns import trainer as tr
from weakdns.errors import DataError, DomainError
from weakdns.losses import LossConfig
from weakdns.mixer import load_dataset
from weakdns.trainer import (
    Cursor,
    PHASE_DENOISER_REAL,
    PHASE_DENOISER_SYNTH,
    PHASE_ESTIMATOR,
    ProtocolSpec,
    Trainer,
    TrainerConfig,
    enhance_waveform,
    evaluate_records,
    load_models,
    select_model,
    write_report,
)


def make_config(tmp_path=None, protocol=ProtocolSpec(1, 1, 2), seed=3, every=39):
    return TrainerConfig(
        loss=LossConfig(),
        protocol=protocol,
        lr_denoiser=1e-3,
        lr_quality=1e-3,
        checkpoint_every=every,
        seed=seed,
        out_dir=tmp_path,
    )


@pytest.fixture(scope="module")
def corpus(tiny_fixture):
    train = load_dataset(tiny_fixture.train)
    val = load_dataset(tiny_fixture.val)
    return {
        "synth_train": [r for r in train if r.kind == "synthetic"],
        "real_train": [r for r in train if r.kind == "real"],
        "synth_val": [r for r in val if r.kind == "synthetic"],
        "real_val": [r for r in val if r.kind == "real"],
        "test": load_dataset(tiny_fixture.test),
    }


def make_trainer(corpus, tmp_path=None, **kw):
    cfg = make_config(tmp_path, **kw)
    return Trainer(cfg, corpus["synth_train"], corpus["real_train"],
                   corpus["synth_val"], corpus["real_val"])


# -- protocol spec ------------------------------------------------------------


def test_protocol_parse_and_print_round_trip():
    spec = ProtocolSpec.parse("1-1-50")
    assert (spec.real, spec.synth, spec.estimator) == (1, 1, 50)
    assert str(spec) == "⟨1−1−50⟩"
    assert ProtocolSpec.parse(str(spec)) == spec  # unicode form round-trips
    assert ProtocolSpec.parse("⟨0−2−50⟩") == ProtocolSpec(0, 2, 50)


def test_protocol_validation():
    with pytest.raises(DomainError):
        ProtocolSpec(0, 0, 50)
    with pytest.raises(DomainError):
        ProtocolSpec(1, 1, 0)
    with pytest.raises(DomainError):
        ProtocolSpec(-1, 1, 5)
    with pytest.raises(DomainError):
        ProtocolSpec.parse("not-a-protocol")


# -- cursor ----------------------------------------------------------------------


def test_cursor_deterministic_and_resumable():
    ids = [f"u{i}" for i in range(5)]
    c1 = Cursor(ids, seed=4, tag="x")
    seq1 = [c1.take(2) for _ in range(6)]
    c2 = Cursor(ids, seed=4, tag="x")
    seq2 = [c2.take(2) for _ in range(6)]
    assert seq1 == seq2
    # resume mid-stream
    c3 = Cursor(ids, seed=4, tag="x")
    [c3.take(2) for _ in range(3)]
    state = c3.state()
    rest_a = [c3.take(2) for _ in range(3)]
    c4 = Cursor(ids, seed=4, tag="x")
    c4.restore(state)
    rest_b = [c4.take(2) for _ in range(3)]
    assert rest_a == rest_b
    # each pass covers every id exactly once
    c5 = Cursor(ids, seed=0, tag="y")
    assert sorted(c5.take(5)) == ids


def test_cursor_empty_stream_errors():
    c = Cursor([], seed=0, tag="none")
    with pytest.raises(DataError):
        c.take(1)


# -- protocol execution -------------------------------------------------------------


def test_phase_sequence_1_1_p(corpus):
    t = make_trainer(corpus, protocol=ProtocolSpec(1, 1, 3))
    t.run_protocol_cycle()
    phases = [row["phase"] for row in t.log_rows]
    assert phases == [PHASE_DENOISER_REAL, PHASE_DENOISER_SYNTH] + [PHASE_ESTIMATOR] * 3
    assert t.cycle == 1 and t.protocol_runs == 1


def test_phase_sequence_0_2_p(corpus):
    t = make_trainer(corpus, protocol=ProtocolSpec(0, 2, 2))
    t.run_protocol_cycle()
    phases = [row["phase"] for row in t.log_rows]
    assert phases == [PHASE_DENOISER_SYNTH] * 2 + [PHASE_ESTIMATOR] * 2


def test_protocol_update_counts(corpus):
    t = make_trainer(corpus, protocol=ProtocolSpec(1, 2, 3))
    n = 3
    for _ in range(n):
        t.run_protocol_cycle()
    phases = [row["phase"] for row in t.log_rows]
    assert phases.count(PHASE_DENOISER_REAL) == n * 1
    assert phases.count(PHASE_DENOISER_SYNTH) == n * 2
    assert phases.count(PHASE_ESTIMATOR) == n * 3
    assert t.adam_d.t == n * 3 and t.adam_q.t == n * 3


def test_frozen_model_constant_within_phase(corpus):
    t = make_trainer(corpus, protocol=ProtocolSpec(1, 1, 3))
    checksums = []
    t.on_step = lambda trainer, row: checksums.append(
        (row["phase"], trainer.denoiser.checksum(), trainer.quality.checksum())
    )
    q_before = t.quality.checksum()
    d_mid = None
    t.run_protocol_cycle()
    # during both denoiser phases the quality net never moved
    for phase, d_sum, q_sum in checksums:
        if phase in (PHASE_DENOISER_REAL, PHASE_DENOISER_SYNTH):
            assert q_sum == q_before
        else:
            if d_mid is None:
                d_mid = d_sum
            assert d_sum == d_mid  # denoiser frozen across all estimator steps


def test_gradient_exclusivity(corpus):
    t = make_trainer(corpus)
    t.quality.zero_grad()
    t._denoiser_update([corpus["synth_train"][0]] * 3, PHASE_DENOISER_SYNTH, supervised=False)
    assert all(np.all(p.grad == 0) for p in t.quality.params.values())
    # denoiser gradient was nonzero (it moved)
    t.denoiser.zero_grad()
    t._estimator_update([corpus["synth_train"][0]] * 3)
    assert all(np.all(p.grad == 0) for p in t.denoiser.params.values())


def test_empty_real_stream_aborts_cleanly(corpus):
    cfg = make_config(protocol=ProtocolSpec(1, 1, 2))
    t = Trainer(cfg, corpus["synth_train"], [], corpus["synth_val"], [])
    with pytest.raises(DataError):
        t.run_protocol_cycle()
    assert t.cycle == 0 and t.protocol_runs == 0 and not t.log_rows


def test_checkpoint_cadence(corpus, tmp_path):
    t = make_trainer(corpus, tmp_path=tmp_path, protocol=ProtocolSpec(1, 1, 1), every=2)
    for _ in range(5):
        t.run_protocol_cycle()
    found = sorted(p.name for p in tmp_path.glob("ckpt_*.wdns"))
    assert found == ["ckpt_2.wdns", "ckpt_4.wdns"]


def test_oracle_does_not_touch_denoiser_updates(corpus, monkeypatch):
    rec = corpus["synth_train"][0]
    t = make_trainer(corpus)
    t.quality.set_trainable(False)
    t.denoiser.set_trainable(True)

    def grads_with_oracle(value):
        monkeypatch.setattr(tr, "quality_oracle", lambda *a, **k: value)
        t.adam_d.zero_grad()
        t._total_loss_graph(rec).backward()
        return [p.grad.copy() for p in t.denoiser.params.values()]

    g1 = grads_with_oracle(2.0)
    g2 = grads_with_oracle(4.0)
    for a, b in zip(g1, g2):
        np.testing.assert_array_equal(a, b)


# -- pre-training -------------------------------------------------------------------


def test_pretrain_denoiser_learns_and_is_deterministic(corpus):
    t1 = make_trainer(corpus, seed=7)
    h1 = t1.pretrain_denoiser(epochs=2)
    assert h1[-1] < h1[0]
    t2 = make_trainer(corpus, seed=7)
    h2 = t2.pretrain_denoiser(epochs=2)
    assert h1 == h2  # bit-identical histories for equal seeds
    assert t1.denoiser.checksum() == t2.denoiser.checksum()


def test_pretrain_zero_epochs_keeps_initialization(corpus):
    t = make_trainer(corpus)
    before = t.denoiser.checksum()
    t.pretrain_denoiser(epochs=0)
    assert t.denoiser.checksum() == before


def test_pretrain_quality_regresses_and_freezes_denoiser(corpus):
    t = make_trainer(corpus)
    t.pretrain_denoiser(epochs=1)
    d_sum = t.denoiser.checksum()
    hist = t.pretrain_quality(epochs=3)
    assert hist[-1] < hist[0]
    assert t.denoiser.checksum() == d_sum
    # predictions stay inside the open gate interval
    for rec in corpus["synth_val"]:
        amp, _ = t._frozen_enhancement(rec)
        score = t.quality.forward(amp).item()
        assert 1.04 < score < 4.64


# -- checkpoint / resume ---------------------------------------------------------------


def test_resume_is_bit_exact(corpus, tmp_path):
    proto = ProtocolSpec(1, 1, 2)
    # uninterrupted: two cycles
    t_full = make_trainer(corpus, protocol=proto, seed=5)
    t_full.run_protocol_cycle()
    t_full.run_protocol_cycle()

    # interrupted: one cycle, checkpoint, restore into a fresh trainer, one more
    t_a = make_trainer(corpus, protocol=proto, seed=5)
    t_a.run_protocol_cycle()
    base = tmp_path / "mid"
    t_a.save_checkpoint(base)
    t_b = make_trainer(corpus, protocol=proto, seed=5)
    t_b.restore_checkpoint(base)
    t_b.run_protocol_cycle()

    assert t_b.denoiser.checksum() == t_full.denoiser.checksum()
    assert t_b.quality.checksum() == t_full.quality.checksum()
    for name in t_full.adam_d.m:
        np.testing.assert_array_equal(t_b.adam_d.m[name], t_full.adam_d.m[name])
        np.testing.assert_array_equal(t_b.adam_d.v[name], t_full.adam_d.v[name])
    for name in t_full.adam_q.m:
        np.testing.assert_array_equal(t_b.adam_q.m[name], t_full.adam_q.m[name])
    assert t_b.adam_d.t == t_full.adam_d.t
    assert t_b.cycle == t_full.cycle == 2
    assert t_b.protocol_runs == t_full.protocol_runs == 2


def test_checkpoint_metadata_contents(corpus, tmp_path):
    t = make_trainer(corpus, protocol=ProtocolSpec(1, 1, 50))
    base = tmp_path / "meta_check"
    t.save_checkpoint(base, extra_meta={"cli_args": {"protocol": "1-1-50", "alpha": "0.9"}})
    meta = json.loads(base.with_suffix(".json").read_text())
    assert meta["protocol"] == "⟨1−1−50⟩"
    assert meta["alpha"] == 0.9 and meta["beta"] == 0.9
    assert meta["cli_args"] == {"protocol": "1-1-50", "alpha": "0.9"}
    assert meta["topology"]["denoiser"] == t.denoiser.topology


def test_topology_mismatch_refused(corpus, tmp_path):
    t = make_trainer(corpus)
    base = tmp_path / "topo"
    t.save_checkpoint(base)
    meta = json.loads(base.with_suffix(".json").read_text())
    meta["topology"]["denoiser"] = "someone_elses_net_v9"
    base.with_suffix(".json").write_text(json.dumps(meta))
    with pytest.raises(DataError, match="topology"):
        t.restore_checkpoint(base)
    with pytest.raises(DataError, match="topology"):
        load_models(base)


# -- selection -----------------------------------------------------------------------


def test_select_model_rankings(corpus, tmp_path):
    cfg = make_config()
    t = make_trainer(corpus, seed=2)
    bases = []
    for i in range(3):
        base = tmp_path / f"gen{i}"
        t.save_checkpoint(base)
        bases.append(base)
        t.pretrain_denoiser(epochs=1)
    report = select_model(bases, corpus["synth_val"], corpus["real_val"], cfg)
    assert len(report.synth_ranking) == 3 and len(report.real_ranking) == 3
    losses = [v for _, v in report.synth_ranking]
    assert losses == sorted(losses)
    assert report.chosen_synth == report.synth_ranking[0][0]
    # single checkpoint: trivially chosen
    single = select_model([bases[0]], corpus["synth_val"], corpus["real_val"], cfg)
    assert single.chosen_synth == str(bases[0])
    with pytest.raises(DataError):
        select_model([], corpus["synth_val"], corpus["real_val"], cfg)


# -- evaluation and enhancement ----------------------------------------------------------


def test_evaluate_rows_and_aggregates(corpus):
    t = make_trainer(corpus)
    rows = evaluate_records(t.denoiser, t.quality, t.norm, corpus["test"])
    per_utt = [r for r in rows if not r["utterance_id"].startswith("mean:")]
    agg = {r["utterance_id"]: r for r in rows if r["utterance_id"].startswith("mean:")}
    assert len(per_utt) == sum(1 for r in corpus["test"] if r.kind == "synthetic")
    assert "mean:all" in agg
    got = agg["mean:all"]["delta_seg_snr"]
    want = np.mean([r["delta_seg_snr"] for r in per_utt])
    assert abs(got - want) < 1e-9
    for r in per_utt:
        assert 1.04 < r["estimated_q_enhanced"] < 4.64
        assert 1.04 <= r["oracle_q_enhanced"] <= 4.64


def test_evaluate_single_utterance_row_plus_aggregate(corpus):
    t = make_trainer(corpus)
    one = [r for r in corpus["test"] if r.kind == "synthetic"][:1]
    rows = evaluate_records(t.denoiser, t.quality, t.norm, one)
    assert len(rows) == 2
    assert rows[0]["utterance_id"] == one[0].id
    assert rows[1]["utterance_id"] == "mean:all"
    assert rows[1]["delta_seg_snr"] == rows[0]["delta_seg_snr"]


def test_evaluate_identity_mask_zero_delta(corpus):
    t = make_trainer(corpus)
    rows = evaluate_records(t.denoiser, t.quality, t.norm, corpus["test"], identity_mask=True)
    for r in rows:
        if not r["utterance_id"].startswith("mean:"):
            assert r["delta_seg_snr"] == 0.0


def test_report_csv_schema(corpus, tmp_path):
    t = make_trainer(corpus)
    rows = evaluate_records(t.denoiser, t.quality, t.norm, corpus["test"])
    path = tmp_path / "report.csv"
    write_report(path, rows)
    with open(path) as f:
        got = list(csv.DictReader(f))
    assert list(got[0].keys()) == list(tr.REPORT_COLUMNS)
    assert len(got) == len(rows)


def test_step_log_csv_schema(corpus, tmp_path):
    t = make_trainer(corpus, tmp_path=tmp_path, protocol=ProtocolSpec(1, 1, 1))
    t.run_protocol_cycle()
    with open(tmp_path / "steps.csv") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0].keys()) == list(tr.STEP_LOG_COLUMNS)
    assert [r["phase"] for r in rows] == [PHASE_DENOISER_REAL, PHASE_DENOISER_SYNTH,
                                          PHASE_ESTIMATOR]


def test_enhance_waveform_length_and_silence(corpus):
    t = make_trainer(corpus)
    rec = corpus["test"][0]
    out = enhance_waveform(t.denoiser, t.norm, rec.noisy)
    assert out.shape == rec.noisy.shape
    silent = enhance_waveform(t.denoiser, t.norm, np.zeros(4000))
    np.testing.assert_array_equal(silent, np.zeros(4000))
