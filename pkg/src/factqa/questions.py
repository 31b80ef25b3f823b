"""Loaders that bring the four multiple-choice QA datasets into one shape.

WorldTree ships questions as a TSV with lettered choices embedded in the
question string plus an answer-key column; ARC and OpenBookQA ship JSON lines.
Everything downstream sees only MultipleChoiceQuestion.
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from factqa.errors import LoadError, ParseError

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")

_CHOICE_MARKER = re.compile(r"\(([A-E1-5])\)")
_LETTER_TO_INDEX = {letter: i for i, letter in enumerate("ABCDE")}
_DIGIT_TO_INDEX = {str(i + 1): i for i in range(5)}

MIN_CANDIDATES = 2
MAX_CANDIDATES = 5


@dataclass(frozen=True)
class MultipleChoiceQuestion:
    question_id: str
    stem: str
    candidates: tuple[str, ...]
    gold_index: Optional[int]
    dataset_tag: str
    split: str

    def __post_init__(self):
        if self.gold_index is not None and not (0 <= self.gold_index < len(self.candidates)):
            raise ValueError(
                f"question {self.question_id}: gold index {self.gold_index} "
                f"out of range for {len(self.candidates)} candidates"
            )


@dataclass
class DatasetStats:
    per_split: dict[str, int] = field(default_factory=dict)

    def count(self, split: str) -> int:
        return self.per_split.get(split, 0)


def _key_to_index(key: str) -> Optional[int]:
    key = key.strip().upper()
    if key in _LETTER_TO_INDEX:
        return _LETTER_TO_INDEX[key]
    if key in _DIGIT_TO_INDEX:
        return _DIGIT_TO_INDEX[key]
    return None


def _find_column(header: list[str], *names: str) -> Optional[int]:
    lowered = [col.strip().lower() for col in header]
    for name in names:
        if name.lower() in lowered:
            return lowered.index(name.lower())
    return None


def load_worldtree_questions(
    tsv_path: Path, split: str, dataset_tag: str = "worldtree"
) -> list[MultipleChoiceQuestion]:
    """Parse the WorldTree question TSV: stem and candidates are separated by
    splitting the question string on its (A)...(E) markers."""
    tsv_path = Path(tsv_path)
    if not tsv_path.exists():
        raise LoadError(f"question file not found: {tsv_path}")
    lines = tsv_path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"{tsv_path}: empty file")
    header = lines[0].split("\t")
    q_col = _find_column(header, "question")
    if q_col is None:
        raise ParseError(f"{tsv_path}: no 'question' column in header")
    id_col = _find_column(header, "questionid", "id")
    key_col = _find_column(header, "answerkey", "answer")

    questions: list[MultipleChoiceQuestion] = []
    skipped = 0
    for row_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        values = line.split("\t")
        if q_col >= len(values):
            skipped += 1
            continue
        raw = values[q_col]
        parts = _CHOICE_MARKER.split(raw)
        # parts = [stem, marker1, text1, marker2, text2, ...]
        if len(parts) < 5:  # fewer than two choices
            skipped += 1
            continue
        stem = parts[0].strip().lower()
        markers = parts[1::2]
        texts = [t.strip().lower() for t in parts[2::2]]
        if not stem or any(not t for t in texts):
            skipped += 1
            continue
        if not (MIN_CANDIDATES <= len(texts) <= MAX_CANDIDATES):
            skipped += 1
            continue

        gold: Optional[int] = None
        if key_col is not None and key_col < len(values) and values[key_col].strip():
            key_idx = _key_to_index(values[key_col])
            if key_idx is None or key_idx >= len(texts):
                skipped += 1
                continue
            # markers may start at (1) or (A); resolve the key against them
            marker_positions = {m.upper(): i for i, m in enumerate(markers)}
            gold = marker_positions.get(values[key_col].strip().upper(), key_idx)
        elif split in ("train", "dev"):
            raise LoadError(f"{tsv_path}:{row_no}: missing answer key on {split} split")

        qid = values[id_col].strip() if id_col is not None and id_col < len(values) else ""
        questions.append(
            MultipleChoiceQuestion(
                question_id=qid or f"{dataset_tag}-{split}-{row_no}",
                stem=stem,
                candidates=tuple(texts),
                gold_index=gold,
                dataset_tag=dataset_tag,
                split=split,
            )
        )
    if skipped:
        logger.warning("%s: skipped %d unparseable questions", tsv_path.name, skipped)
    return questions


def load_arc_or_openbook(
    jsonl_path: Path, split: str, dataset_tag: str = "arc"
) -> list[MultipleChoiceQuestion]:
    """Parse ARC / OpenBookQA JSON lines; numeric and letter answer keys both work."""
    jsonl_path = Path(jsonl_path)
    if not jsonl_path.exists():
        raise LoadError(f"question file not found: {jsonl_path}")
    questions: list[MultipleChoiceQuestion] = []
    skipped = 0
    with open(jsonl_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                stem = rec["question"]["stem"]
                choices = rec["question"]["choices"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{jsonl_path}:{line_no}: malformed record ({exc})") from exc
            labels = [str(c.get("label", "")).strip() for c in choices]
            texts = [str(c.get("text", "")).strip().lower() for c in choices]
            if not (MIN_CANDIDATES <= len(texts) <= MAX_CANDIDATES) or any(
                not t for t in texts
            ):
                skipped += 1
                continue
            gold: Optional[int] = None
            key = str(rec.get("answerKey", "")).strip()
            if key:
                if key in labels:
                    gold = labels.index(key)
                else:
                    gold = _key_to_index(key)
                if gold is None or gold >= len(texts):
                    raise ParseError(
                        f"{jsonl_path}:{line_no}: answer key {key!r} matches no choice"
                    )
            questions.append(
                MultipleChoiceQuestion(
                    question_id=str(rec.get("id", f"{dataset_tag}-{split}-{line_no}")),
                    stem=stem.strip().lower(),
                    candidates=tuple(texts),
                    gold_index=gold,
                    dataset_tag=dataset_tag,
                    split=split,
                )
            )
    if skipped:
        logger.warning("%s: skipped %d questions with unusable choices", jsonl_path.name, skipped)
    return questions


def dataset_stats(questions: Iterable[MultipleChoiceQuestion]) -> DatasetStats:
    stats = DatasetStats()
    for q in questions:
        stats.per_split[q.split] = stats.per_split.get(q.split, 0) + 1
    return stats


def render_stats_table(stats_by_dataset: dict[str, DatasetStats]) -> str:
    """Plain-text split-size table, one dataset per row."""
    rows = [("Dataset", "#Train", "#Dev", "#Test")]
    for tag, stats in stats_by_dataset.items():
        rows.append(
            (tag, *(f"{stats.count(split):,}" for split in SPLITS))
        )
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = []
    for i, row in enumerate(rows):
        lines.append(
            "  ".join(cell.ljust(widths[j]) if j == 0 else cell.rjust(widths[j])
                      for j, cell in enumerate(row))
        )
        if i == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)
