"""Training loop: determinism, early stopping, checkpoints, divergence."""

import numpy as np
import pytest

from convcause.metrics import MetricsReport
from convcause.model import ModelConfig
from convcause.synth import SynthConfig, synth_generate
from convcause.training import (
    Checkpoint,
    EarlyStopping,
    TrainConfig,
    TrainingDivergedError,
    evaluate_model,
    load_checkpoint,
    save_checkpoint,
    train,
)


def small_data(n=8, seed=0):
    cfg = SynthConfig(
        n_conversations=n, min_length=3, max_length=5, vocab_size=60,
        tokens_min=2, tokens_max=4,
    )
    return synth_generate(cfg, seed)


def small_model_config(**overrides):
    base = dict(vocab_size=60, d_h=8, d_e=6, heads=2, layers=1, dropout=0.1)
    base.update(overrides)
    return ModelConfig(**base)


def fake_report(macro):
    return MetricsReport(pos_f1=macro, neg_f1=macro, macro_f1=macro,
                         tp=0, fp=0, fn=0, tn=0)


class TestEarlyStopping:
    def test_decreasing_after_first_epoch_stops_at_patience(self):
        # dev scores strictly decreasing after epoch 1, patience 3
        stopper = EarlyStopping(patience=3)
        scores = [0.9, 0.8, 0.7, 0.6, 0.5]
        stopped_at = None
        for epoch, s in enumerate(scores, start=1):
            if stopper.update(s, epoch):
                stopped_at = epoch
                break
        assert stopped_at == 4
        assert stopper.best_epoch == 1

    def test_improvement_resets_counter(self):
        stopper = EarlyStopping(patience=2)
        assert not stopper.update(0.5, 1)
        assert not stopper.update(0.4, 2)
        assert not stopper.update(0.6, 3)
        assert not stopper.update(0.5, 4)
        assert stopper.update(0.5, 5)

    def test_plateau_counts_as_stale(self):
        stopper = EarlyStopping(patience=2)
        assert not stopper.update(1.0, 1)
        assert not stopper.update(1.0, 2)
        assert stopper.update(1.0, 3)


class TestTrainLoop:
    def test_same_seed_bitwise_identical(self):
        data = small_data(6)
        dev = small_data(4, seed=1)
        cfg = small_model_config()
        tc = TrainConfig(epochs=3, batch_size=2, learning_rate=1e-3,
                         patience=5, seed=11)
        r1 = train(data, dev, cfg, tc)
        r2 = train(data, dev, cfg, tc)
        assert r1.history == r2.history
        assert set(r1.checkpoint.params) == set(r2.checkpoint.params)
        for name in r1.checkpoint.params:
            assert np.array_equal(r1.checkpoint.params[name],
                                  r2.checkpoint.params[name]), name

    def test_scripted_dev_scores_stop_training(self):
        data = small_data(4)
        scores = iter([0.9, 0.8, 0.7, 0.6, 0.5, 0.4])

        def scripted(model, dev):
            return fake_report(next(scores))

        tc = TrainConfig(epochs=10, patience=3, seed=0)
        result = train(data, data, small_model_config(), tc, dev_scorer=scripted)
        assert result.stopped_epoch == 4
        assert len(result.history) == 4
        assert result.checkpoint.epoch == 1
        assert result.checkpoint.dev_macro_f1 == 0.9

    def test_best_checkpoint_matches_history_max(self):
        data = small_data(6)
        dev = small_data(4, seed=2)
        tc = TrainConfig(epochs=4, patience=10, seed=3)
        result = train(data, dev, small_model_config(), tc)
        best_in_history = max(r.dev_macro_f1 for r in result.history)
        assert result.checkpoint.dev_macro_f1 == best_in_history

    def test_reloaded_checkpoint_reproduces_dev_score(self):
        data = small_data(6)
        dev = small_data(4, seed=4)
        tc = TrainConfig(epochs=3, patience=10, seed=5)
        result = train(data, dev, small_model_config(), tc)
        model = result.checkpoint.build_model()
        report = evaluate_model(model, dev, tc.threshold)
        assert report.macro_f1 == result.checkpoint.dev_macro_f1

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train([], small_data(2), small_model_config(), TrainConfig())

    def test_divergence_names_the_batch(self):
        data = small_data(4)
        tc = TrainConfig(epochs=2, learning_rate=1e150, seed=6)
        with pytest.raises(TrainingDivergedError, match="conversations"):
            train(data, data, small_model_config(dropout=0.0), tc)


class TestCheckpointFiles:
    def test_round_trip_bit_exact(self, tmp_path):
        data = small_data(4)
        tc = TrainConfig(epochs=2, patience=5, seed=7)
        result = train(data, data, small_model_config(), tc)
        ckpt = result.checkpoint
        ckpt.vocab = {"<unk>": 0, "w1": 1}
        path = tmp_path / "model.json"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.model_config == ckpt.model_config
        assert loaded.dev_macro_f1 == ckpt.dev_macro_f1
        assert loaded.epoch == ckpt.epoch
        assert loaded.vocab == ckpt.vocab
        for name, arr in ckpt.params.items():
            assert np.array_equal(arr, loaded.params[name]), name

    def test_rejects_unknown_schema_version(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"schema_version": 99}')
        with pytest.raises(ValueError, match="schema_version"):
            load_checkpoint(path)

    def test_two_saves_identical_bytes(self, tmp_path):
        data = small_data(4)
        tc = TrainConfig(epochs=1, seed=8)
        ckpt = train(data, data, small_model_config(), tc).checkpoint
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(ckpt, p1)
        save_checkpoint(ckpt, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestConfig:
    def test_paper_faithful_values(self):
        tc = TrainConfig.paper_faithful()
        assert tc.learning_rate == 1e-5
        assert tc.batch_size == 2
        assert tc.epochs == 40

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(patience=0)


def test_memorization_smoke():
    """A small model should drive training-set macro F1 to 1.0 quickly."""
    data = small_data(6, seed=9)
    cfg = small_model_config(d_h=16, heads=2, layers=1, dropout=0.0)
    tc = TrainConfig(epochs=150, batch_size=2, learning_rate=5e-3,
                     patience=150, seed=10)
    result = train(data, data, cfg, tc)
    assert max(r.dev_macro_f1 for r in result.history) == 1.0
