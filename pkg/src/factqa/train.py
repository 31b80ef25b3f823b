"""Seeded mini-batch training with Adam, gradient clipping, and curve logging.

One loop serves all three stages; the produced checkpoint is stamped with the
stage implied by the example origin and the starting parameters.
"""

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from factqa import evaluate as evaluation
from factqa.encoding import Vocabulary, encode_pairs
from factqa.errors import GenerationError, NumericError
from factqa.model import CheckpointStage, ModelParams, Stage, config_hash, loss_and_gradients
from factqa.pairs import Origin, PairExample
from factqa.questions import MultipleChoiceQuestion

logger = logging.getLogger(__name__)

ORIGIN_TO_STAGE = {
    Origin.COMPLETION: Stage.KNOWLEDGE,
    Origin.CLOZE: Stage.CLOZE,
    Origin.FINETUNE: Stage.FINETUNED,
}


@dataclass(frozen=True)
class Hyperparams:
    batch_size: int = 32
    learning_rate: float = 5e-5
    epochs: int = 5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 1.0
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.tensors.items()},
            v={k: np.zeros_like(a) for k, a in params.tensors.items()},
        )


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Textbook Adam with bias correction; mutates params in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.tensors[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> tuple[float, bool]:
    """Scale gradients to the given global norm; returns (norm, clipped?)."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
        return norm, True
    return norm, False


@dataclass
class CurvePoint:
    epoch: int
    train_loss: float
    dev_accuracy: Optional[float] = None


@dataclass
class TrainingCurve:
    points: list[CurvePoint] = field(default_factory=list)

    def add(self, epoch: int, train_loss: float, dev_accuracy: Optional[float]) -> None:
        if self.points and epoch <= self.points[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        if not np.isfinite(train_loss):
            raise NumericError(f"non-finite loss logged at epoch {epoch}")
        self.points.append(CurvePoint(epoch, train_loss, dev_accuracy))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["epoch", "train_loss", "dev_accuracy"])
        for p in self.points:
            writer.writerow(
                [p.epoch, f"{p.train_loss:.8f}",
                 "" if p.dev_accuracy is None else f"{p.dev_accuracy:.6f}"]
            )
        return buf.getvalue()

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str) -> "TrainingCurve":
        curve = cls()
        for row in csv.DictReader(io.StringIO(text)):
            curve.add(
                int(row["epoch"]),
                float(row["train_loss"]),
                float(row["dev_accuracy"]) if row["dev_accuracy"] else None,
            )
        return curve


def _stage_for(examples: Sequence[PairExample], start: ModelParams) -> CheckpointStage:
    origins = {ex.origin for ex in examples}
    if len(origins) != 1:
        raise GenerationError(f"examples mix origins: {sorted(o.value for o in origins)}")
    stage = ORIGIN_TO_STAGE[origins.pop()]
    parent = start.stage.stage if start.stage else None
    lineage = (start.stage.lineage if start.stage else ("init",)) + (stage.value,)
    return CheckpointStage(
        stage=stage, parent=parent, seed=0, train_config_hash="", lineage=lineage
    )


def train_stage(
    start: ModelParams,
    vocab: Vocabulary,
    examples: Sequence[PairExample],
    hyper: Hyperparams,
    dev_questions: Optional[Sequence[MultipleChoiceQuestion]] = None,
) -> tuple[ModelParams, TrainingCurve]:
    """Run one training stage over seeded-shuffled mini-batches.

    Returns fresh parameters stamped with the stage implied by the example
    origin (the input is not mutated) and the per-epoch loss/accuracy curve.
    """
    if not examples:
        raise GenerationError("cannot train on an empty example list")
    stage_stamp = _stage_for(examples, start)
    stage_stamp = CheckpointStage(
        stage=stage_stamp.stage,
        parent=stage_stamp.parent,
        seed=hyper.shuffle_seed,
        train_config_hash=config_hash({**asdict(hyper), "examples": len(examples)}),
        lineage=stage_stamp.lineage,
    )

    max_len = start.config.max_len
    batch_all = encode_pairs(
        [(ex.question_text, ex.answer_text) for ex in examples], vocab, max_len
    )
    labels_all = np.array([ex.label for ex in examples], dtype=np.int64)

    params = start.copy()
    state = AdamState.init(params)
    rng = np.random.default_rng(hyper.shuffle_seed)
    curve = TrainingCurve()
    n = len(examples)
    clip_events = 0
    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, hyper.batch_size):
            idx = order[lo : lo + hyper.batch_size]
            batch = batch_all.take(idx)
            try:
                loss, grads = loss_and_gradients(
                    params, batch, labels_all[idx], train_mode=True, dropout_rng=rng
                )
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch}, batch starting at {lo}: {exc}"
                ) from exc
            _, clipped = clip_gradients(grads, hyper.grad_clip_norm)
            clip_events += int(clipped)
            adam_step(
                params, grads, state, hyper.learning_rate,
                hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps,
            )
            loss_sum += loss * len(idx)
        dev_acc = None
        if dev_questions:
            dev_acc = evaluation.evaluate(
                params, dev_questions, vocab, max_len, config_label=stage_stamp.stage.value
            ).accuracy
        curve.add(epoch, loss_sum / n, dev_acc)
    if clip_events:
        logger.info("gradient clipping triggered on %d batches", clip_events)
    return params.with_stage(stage_stamp), curve
