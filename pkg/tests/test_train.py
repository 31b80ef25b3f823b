import numpy as np
import pytest

from factqa.encoding import build_vocab, encode_pairs
from factqa.errors import GenerationError
from factqa.model import EncoderConfig, Stage, init_params, compute_loss
from factqa.pairs import Origin, PairExample, Role, TaskGenConfig, gen_completion_examples
from factqa.synth import make_world
from factqa.text import tokenize
from factqa.train import (
    AdamState,
    Hyperparams,
    TrainingCurve,
    adam_step,
    clip_gradients,
    train_stage,
)

TINY = EncoderConfig(hidden_size=16, num_layers=1, num_heads=2, feed_forward_size=32,
                     max_len=16, vocab_size=64, dropout_rate=0.1)


def _scalar_params():
    cfg = EncoderConfig(hidden_size=2, num_layers=1, num_heads=1, feed_forward_size=2,
                        max_len=8, vocab_size=5)
    return init_params(cfg, seed=0)


class TestAdam:
    def test_zero_gradients_leave_params_unchanged(self):
        params = _scalar_params()
        before = {k: v.copy() for k, v in params.tensors.items()}
        grads = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        state = AdamState.init(params)
        adam_step(params, grads, state, lr=0.1)
        assert all(np.array_equal(before[k], params.tensors[k]) for k in before)

    def test_step_count_increments(self):
        params = _scalar_params()
        grads = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        state = AdamState.init(params)
        for expected in (1, 2, 3):
            adam_step(params, grads, state, lr=0.1)
            assert state.step == expected

    def test_first_step_closed_form(self):
        """Bias-corrected first step with constant gradient 1 moves by
        lr * 1 / (1 + eps), i.e. almost exactly -lr."""
        params = _scalar_params()
        name = "cls.b"
        start = params.tensors[name].copy()
        grads = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        grads[name] = np.ones_like(params.tensors[name])
        state = AdamState.init(params)
        adam_step(params, grads, state, lr=0.1)
        delta = params.tensors[name] - start
        expected = -0.1 * 1.0 / (1.0 + 1e-8)
        np.testing.assert_allclose(delta, expected, rtol=1e-9)


class TestClipping:
    def test_norm_and_scaling(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        norm, clipped = clip_gradients(grads, max_norm=1.0)
        assert norm == pytest.approx(5.0)
        assert clipped
        total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        assert total == pytest.approx(1.0)

    def test_below_threshold_untouched(self):
        grads = {"a": np.array([0.3])}
        norm, clipped = clip_gradients(grads, max_norm=1.0)
        assert not clipped
        assert grads["a"][0] == pytest.approx(0.3)


def _vocab_and_examples():
    world = make_world(50 * 2, seed=9)
    vocab = build_vocab([tokenize(s) for _, s in world.kb.sentences()], max_size=1000)
    examples = gen_completion_examples(world.kb, TaskGenConfig(rng_seed=1))
    return world, vocab, examples


class TestTrainStage:
    def test_single_example_loss_decreases(self):
        vocab = build_vocab([["ice", "solid"]], max_size=16)
        cfg = EncoderConfig(hidden_size=16, num_layers=1, num_heads=2,
                            feed_forward_size=32, max_len=8, vocab_size=len(vocab),
                            dropout_rate=0.0)
        params = init_params(cfg, seed=0)
        example = PairExample("ice", "solid", 1, Origin.COMPLETION, "f0", Role.OBJECT)
        examples = [example] * 8
        batch = encode_pairs([("ice", "solid")], vocab, cfg.max_len)
        before = compute_loss(params, batch, np.array([1]))
        trained, curve = train_stage(
            params, vocab, examples, Hyperparams(batch_size=8, learning_rate=1e-3,
                                                 epochs=1, shuffle_seed=0))
        after = compute_loss(trained, batch, np.array([1]))
        assert after < before

    def test_synthetic_kb_losses_improve(self):
        """Seeded run-and-compare oracle on a 50-triple world: the final epoch's
        mean training loss must undercut the first epoch's."""
        _, vocab, examples = _vocab_and_examples()
        cfg = EncoderConfig(hidden_size=16, num_layers=1, num_heads=2,
                            feed_forward_size=32, max_len=16, vocab_size=len(vocab),
                            dropout_rate=0.1)
        params = init_params(cfg, seed=1)
        trained, curve = train_stage(
            params, vocab, examples,
            Hyperparams(batch_size=32, learning_rate=1e-3, epochs=5, shuffle_seed=4))
        assert curve.points[-1].train_loss < curve.points[0].train_loss
        assert all(np.isfinite(p.train_loss) for p in curve.points)
        assert [p.epoch for p in curve.points] == [1, 2, 3, 4, 5]

    def test_bit_reproducible(self):
        _, vocab, examples = _vocab_and_examples()
        cfg = EncoderConfig(hidden_size=16, num_layers=1, num_heads=2,
                            feed_forward_size=32, max_len=16, vocab_size=len(vocab),
                            dropout_rate=0.1)
        hyper = Hyperparams(batch_size=16, learning_rate=1e-3, epochs=2, shuffle_seed=3)
        a, _ = train_stage(init_params(cfg, seed=1), vocab, examples, hyper)
        b, _ = train_stage(init_params(cfg, seed=1), vocab, examples, hyper)
        assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)

    def test_stage_stamping_and_lineage(self):
        _, vocab, examples = _vocab_and_examples()
        cfg = EncoderConfig(hidden_size=16, num_layers=1, num_heads=2,
                            feed_forward_size=32, max_len=16, vocab_size=len(vocab))
        hyper = Hyperparams(batch_size=32, learning_rate=1e-3, epochs=1, shuffle_seed=0)
        theta_k, _ = train_stage(init_params(cfg, seed=0), vocab, examples, hyper)
        assert theta_k.stage.stage is Stage.KNOWLEDGE
        assert theta_k.stage.parent is None
        assert theta_k.stage.lineage == ("init", "knowledge")

        cloze = [PairExample(e.question_text, e.answer_text, e.label, Origin.CLOZE,
                             e.group_id) for e in examples[:64]]
        theta_kq, _ = train_stage(theta_k, vocab, cloze, hyper)
        assert theta_kq.stage.stage is Stage.CLOZE
        assert theta_kq.stage.parent is Stage.KNOWLEDGE
        assert theta_kq.stage.lineage == ("init", "knowledge", "cloze")

        ft = [PairExample(e.question_text, e.answer_text, e.label, Origin.FINETUNE,
                          e.group_id) for e in examples[:64]]
        theta_f, _ = train_stage(theta_kq, vocab, ft, hyper)
        assert theta_f.stage.stage is Stage.FINETUNED
        assert theta_f.stage.parent is Stage.CLOZE
        assert theta_f.stage.lineage[0] == "init"

    def test_mixed_origins_rejected(self):
        _, vocab, examples = _vocab_and_examples()
        mixed = examples[:2] + [PairExample("q", "a", 1, Origin.CLOZE, "g")]
        params = init_params(
            EncoderConfig(hidden_size=16, num_layers=1, num_heads=2,
                          feed_forward_size=32, max_len=16, vocab_size=len(vocab)),
            seed=0)
        with pytest.raises(GenerationError, match="mix"):
            train_stage(params, vocab, mixed, Hyperparams(epochs=1))

    def test_empty_examples_rejected(self):
        vocab = build_vocab([["a"]], max_size=8)
        params = init_params(TINY, seed=0)
        with pytest.raises(GenerationError):
            train_stage(params, vocab, [], Hyperparams(epochs=1))

    def test_input_params_not_mutated(self):
        _, vocab, examples = _vocab_and_examples()
        cfg = EncoderConfig(hidden_size=16, num_layers=1, num_heads=2,
                            feed_forward_size=32, max_len=16, vocab_size=len(vocab))
        start = init_params(cfg, seed=0)
        before = {k: v.copy() for k, v in start.tensors.items()}
        train_stage(start, vocab, examples[:32],
                    Hyperparams(batch_size=16, learning_rate=1e-3, epochs=1))
        assert all(np.array_equal(before[k], start.tensors[k]) for k in before)


class TestCurve:
    def test_epochs_strictly_increasing(self):
        curve = TrainingCurve()
        curve.add(1, 0.5, None)
        with pytest.raises(ValueError):
            curve.add(1, 0.4, None)

    def test_csv_round_trip(self):
        curve = TrainingCurve()
        curve.add(1, 0.5, 0.25)
        curve.add(2, 0.25, None)
        back = TrainingCurve.from_csv(curve.to_csv())
        assert back.points[0].epoch == 1
        assert back.points[0].train_loss == pytest.approx(0.5)
        assert back.points[0].dev_accuracy == pytest.approx(0.25)
        assert back.points[1].dev_accuracy is None

    def test_nonfinite_loss_rejected(self):
        curve = TrainingCurve()
        with pytest.raises(Exception):
            curve.add(1, float("nan"), None)


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        Hyperparams(batch_size=0)
    with pytest.raises(ValueError):
        Hyperparams(learning_rate=0.0)
    with pytest.raises(ValueError):
        Hyperparams(epochs=0)
