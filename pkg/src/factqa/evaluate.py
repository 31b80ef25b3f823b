"""Multiple-choice answering by pairwise scoring, accuracy reports, the
repeated-seed protocol, and the knowledge-category ablation matrix."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from factqa.encoding import Vocabulary, encode_pair, stack_encoded
from factqa.errors import EncodingError, EvaluationError
from factqa.kb import KnowledgeCategory
from factqa.model import ModelParams, score_batch
from factqa.questions import MultipleChoiceQuestion

logger = logging.getLogger(__name__)

SCORE_CHUNK = 256

# knowledge rows of the ablation matrix, in report order
ABLATION_ROWS: tuple[tuple[str, Optional[frozenset]], ...] = (
    ("None", frozenset()),
    ("Retrieval", frozenset({KnowledgeCategory.RETRIEVAL})),
    ("Inference-supporting", frozenset({KnowledgeCategory.INFERENCE_SUPPORTING})),
    ("Complex inference", frozenset({KnowledgeCategory.COMPLEX_INFERENCE})),
    ("All", frozenset(KnowledgeCategory)),
)


def predict_from_scores(scores: Sequence[float]) -> int:
    """Argmax with ties broken by the lowest candidate index."""
    best, best_score = 0, -math.inf
    for i, s in enumerate(scores):
        if s > best_score:
            best, best_score = i, s
    return best


def candidate_scores(
    params: ModelParams,
    question: MultipleChoiceQuestion,
    vocab: Vocabulary,
    max_len: int,
) -> list[float]:
    """Pair probability per candidate; candidates that cannot be encoded score -inf."""
    encoded, positions = [], []
    for i, cand in enumerate(question.candidates):
        try:
            encoded.append(encode_pair(question.stem, cand, vocab, max_len))
            positions.append(i)
        except EncodingError as exc:
            logger.warning("question %s candidate %d: %s", question.question_id, i, exc)
    if not encoded:
        raise EvaluationError(f"question {question.question_id}: no candidate could be scored")
    probs = score_batch(params, stack_encoded(encoded))
    scores = [-math.inf] * len(question.candidates)
    for pos, prob in zip(positions, probs):
        scores[pos] = float(prob)
    return scores


def answer_question(
    params: ModelParams,
    question: MultipleChoiceQuestion,
    vocab: Vocabulary,
    max_len: int,
) -> int:
    if len(question.candidates) < 2:
        raise EvaluationError(f"question {question.question_id} has fewer than 2 candidates")
    return predict_from_scores(candidate_scores(params, question, vocab, max_len))


@dataclass
class EvalReport:
    dataset_tag: str
    split: str
    accuracy: float
    predictions: dict[str, int]
    config_label: str
    n_questions: int = 0
    n_gold: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "dataset_tag": self.dataset_tag,
                "split": self.split,
                "accuracy": self.accuracy,
                "predictions": self.predictions,
                "config_label": self.config_label,
                "n_questions": self.n_questions,
                "n_gold": self.n_gold,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, blob: str) -> "EvalReport":
        d = json.loads(blob)
        return cls(
            dataset_tag=d["dataset_tag"],
            split=d["split"],
            accuracy=d["accuracy"],
            predictions={k: int(v) for k, v in d["predictions"].items()},
            config_label=d["config_label"],
            n_questions=int(d.get("n_questions", 0)),
            n_gold=int(d.get("n_gold", 0)),
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "EvalReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def evaluate(
    params: ModelParams,
    questions: Sequence[MultipleChoiceQuestion],
    vocab: Vocabulary,
    max_len: int,
    config_label: str = "",
) -> EvalReport:
    """Accuracy over questions that carry a gold index; every question still
    receives a prediction (persisted for error analysis)."""
    predictions: dict[str, int] = {}
    # batch candidate sequences across questions to keep forward calls large
    pending: list[tuple[str, int, int]] = []  # (qid, candidate index, row in chunk)
    scores: dict[str, list[float]] = {}
    chunk: list = []

    def flush():
        if not chunk:
            return
        probs = score_batch(params, stack_encoded([c for c in chunk]))
        for (qid, cand_idx, _), prob in zip(pending, probs):
            scores[qid][cand_idx] = float(prob)
        chunk.clear()
        pending.clear()

    for q in questions:
        if len(q.candidates) < 2:
            raise EvaluationError(f"question {q.question_id} has fewer than 2 candidates")
        scores[q.question_id] = [-math.inf] * len(q.candidates)
        encodable = 0
        for i, cand in enumerate(q.candidates):
            try:
                enc = encode_pair(q.stem, cand, vocab, max_len)
            except EncodingError as exc:
                logger.warning("question %s candidate %d: %s", q.question_id, i, exc)
                continue
            encodable += 1
            pending.append((q.question_id, i, len(chunk)))
            chunk.append(enc)
            if len(chunk) >= SCORE_CHUNK:
                flush()
        if encodable == 0:
            raise EvaluationError(f"question {q.question_id}: no candidate could be scored")
    flush()

    correct = 0
    n_gold = 0
    for q in questions:
        pred = predict_from_scores(scores[q.question_id])
        predictions[q.question_id] = pred
        if q.gold_index is not None:
            n_gold += 1
            correct += int(pred == q.gold_index)
    accuracy = correct / n_gold if n_gold else 0.0
    tags = {q.dataset_tag for q in questions}
    splits = {q.split for q in questions}
    return EvalReport(
        dataset_tag=tags.pop() if len(tags) == 1 else "mixed",
        split=splits.pop() if len(splits) == 1 else "mixed",
        accuracy=accuracy,
        predictions=predictions,
        config_label=config_label,
        n_questions=len(questions),
        n_gold=n_gold,
    )


@dataclass
class RepeatedReport:
    runs: list[EvalReport]
    mean_accuracy: float
    stddev: Optional[float]  # sample stddev; absent for a single run

    @classmethod
    def from_runs(cls, runs: list[EvalReport]) -> "RepeatedReport":
        if not runs:
            raise EvaluationError("repeated evaluation needs at least one run")
        accs = np.array([r.accuracy for r in runs])
        stddev = float(accs.std(ddof=1)) if len(runs) >= 2 else None
        return cls(runs=runs, mean_accuracy=float(accs.mean()), stddev=stddev)

    def summary(self) -> str:
        if self.stddev is None:
            return f"{self.mean_accuracy:.2%}"
        return f"{self.mean_accuracy:.2%} +-{self.stddev:.4f}"


def repeated_eval(
    train_recipe: Callable[[int], EvalReport],
    n_runs: int = 5,
    first_seed: int = 0,
) -> RepeatedReport:
    """Run the full recipe once per init seed (data seeds stay fixed inside the
    recipe) and aggregate mean and sample standard deviation."""
    runs = [train_recipe(first_seed + i) for i in range(n_runs)]
    return RepeatedReport.from_runs(runs)


@dataclass
class AblationCell:
    knowledge: str
    config_label: str
    reports: list[EvalReport]

    def report_for(self, dataset_tag: str, split: str) -> Optional[EvalReport]:
        for r in self.reports:
            if (r.dataset_tag, r.split) == (dataset_tag, split):
                return r
        return None


@dataclass
class AblationMatrix:
    cells: list[AblationCell] = field(default_factory=list)

    def get(self, knowledge: str, config_label: str) -> Optional[AblationCell]:
        for cell in self.cells:
            if cell.knowledge == knowledge and cell.config_label == config_label:
                return cell
        return None


def ablation_matrix(
    recipe: Callable[[frozenset, str], list[EvalReport]],
    configs: tuple[str, ...] = ("K", "K+Q"),
) -> AblationMatrix:
    """Knowledge subset x training config grid.

    recipe(categories, config_label) trains with only the given knowledge
    categories (empty set = no completion stage) and evaluates every target
    split. The empty ("None") row is meaningful only for the cloze-only
    config, so it is run once with label "Q".
    """
    matrix = AblationMatrix()
    for knowledge, categories in ABLATION_ROWS:
        labels = ("Q",) if not categories else configs
        for label in labels:
            matrix.cells.append(AblationCell(knowledge, label, recipe(categories, label)))
    return matrix


def _render_rows(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(c.ljust(widths[j]) for j, c in enumerate(row)))
        if i == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)


def render_accuracy_table(
    reports_by_label: dict[str, list[EvalReport]],
    column_order: Sequence[tuple[str, str]],
) -> str:
    """Rows are config labels, columns are (dataset, split) pairs."""
    rows = [["Config"] + [f"{tag} {split}" for tag, split in column_order]]
    for label, reports in reports_by_label.items():
        by_col = {(r.dataset_tag, r.split): f"{r.accuracy:.2%}" for r in reports}
        rows.append([label] + [by_col.get(col, "-") for col in column_order])
    return _render_rows(rows)


def render_ablation_table(
    matrix: AblationMatrix, column_order: Sequence[tuple[str, str]]
) -> str:
    rows = [["Knowledge", "Config"] + [f"{tag} {split}" for tag, split in column_order]]
    for cell in matrix.cells:
        row = [cell.knowledge, cell.config_label]
        for tag, split in column_order:
            r = cell.report_for(tag, split)
            row.append(f"{r.accuracy:.2%}" if r else "-")
        rows.append(row)
    return _render_rows(rows)
