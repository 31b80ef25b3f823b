"""Training-pair construction.

Knowledge completion: mask one component of a triple, ask the model to judge
whether a candidate text fills the gap (negatives drawn from other facts).
Cloze QA: pair a question stem with each candidate answer, gold labeled 1.
Both produce the same PairExample shape, so one training loop serves all
stages.
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from factqa.errors import GenerationError
from factqa.kb import KnowledgeBase, Triple
from factqa.questions import MultipleChoiceQuestion

logger = logging.getLogger(__name__)

MAX_COLLISION_RESAMPLES = 16


class Role(Enum):
    SUBJECT = "subject"
    PREDICATE = "predicate"
    OBJECT = "object"


ROLE_ORDER = (Role.SUBJECT, Role.PREDICATE, Role.OBJECT)


class Origin(Enum):
    COMPLETION = "completion"
    CLOZE = "cloze"
    FINETUNE = "finetune"


@dataclass(frozen=True)
class PairExample:
    question_text: str
    answer_text: str
    label: int
    origin: Origin
    group_id: str
    masked_role: Optional[Role] = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if not self.question_text or not self.answer_text:
            raise ValueError("question_text and answer_text must be non-empty")


@dataclass(frozen=True)
class TaskGenConfig:
    negatives_per_positive: int = 1
    mask_roles: tuple[Role, ...] = (Role.SUBJECT, Role.OBJECT)
    rng_seed: int = 0

    def __post_init__(self):
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if not self.mask_roles:
            raise ValueError("mask_roles must be non-empty")


def _component(triple: Triple, role: Role) -> str:
    return {
        Role.SUBJECT: triple.subject,
        Role.PREDICATE: triple.predicate,
        Role.OBJECT: triple.object,
    }[role]


def masked_question(triple: Triple, role: Role) -> str:
    """Remaining components in subject-predicate-object order, gap closed."""
    parts = [_component(triple, r) for r in ROLE_ORDER if r is not role]
    return " ".join(p for p in parts if p)


def sample_negative(
    triple: Triple,
    role: Role,
    donors: Sequence[tuple[str, str]],
    rng: np.random.Generator,
) -> tuple[str, bool]:
    """Uniformly pick the `role` component of a different fact.

    donors: (source_fact_id, component text) with empty texts already removed.
    Resamples up to MAX_COLLISION_RESAMPLES times when the drawn text equals
    the true answer, then accepts the collision; returns (text, collided).
    """
    truth = _component(triple, role)
    text = truth
    for _ in range(MAX_COLLISION_RESAMPLES + 1):
        while True:
            fact_id, text = donors[int(rng.integers(len(donors)))]
            if fact_id != triple.source_fact_id:
                break
        if text != truth:
            return text, False
    return text, True


def gen_completion_examples(
    kb: KnowledgeBase,
    cfg: TaskGenConfig,
    include: Optional[set[tuple[str, Role]]] = None,
) -> list[PairExample]:
    """One positive and cfg.negatives_per_positive negatives per (triple, role).

    `include` optionally restricts generation to the given (source_fact_id,
    role) maskings; negatives are still drawn from the whole knowledge base.
    """
    if len(kb.triples) < 2:
        raise GenerationError("knowledge completion needs at least 2 triples for negatives")
    rng = np.random.default_rng(cfg.rng_seed)
    roles = tuple(r for r in ROLE_ORDER if r in cfg.mask_roles)

    donors_by_role = {
        role: [
            (t.source_fact_id, _component(t, role))
            for t in kb.triples
            if _component(t, role)
        ]
        for role in roles
    }

    examples: list[PairExample] = []
    collisions = 0
    for triple in kb.triples:
        for role in roles:
            if include is not None and (triple.source_fact_id, role) not in include:
                continue
            answer = _component(triple, role)
            if not answer:
                continue  # only the predicate can be empty
            donors = donors_by_role[role]
            if len({fid for fid, _ in donors}) < 2:
                logger.warning("no negative donors for role %s; skipping", role.value)
                continue
            question = masked_question(triple, role)
            examples.append(
                PairExample(
                    question_text=question,
                    answer_text=answer,
                    label=1,
                    origin=Origin.COMPLETION,
                    group_id=triple.source_fact_id,
                    masked_role=role,
                )
            )
            for _ in range(cfg.negatives_per_positive):
                text, collided = sample_negative(triple, role, donors, rng)
                collisions += int(collided)
                examples.append(
                    PairExample(
                        question_text=question,
                        answer_text=text,
                        label=0,
                        origin=Origin.COMPLETION,
                        group_id=triple.source_fact_id,
                        masked_role=role,
                    )
                )
    if collisions:
        logger.warning("%d negatives collide with the true answer (accepted)", collisions)
    order = rng.permutation(len(examples))
    return [examples[i] for i in order]


def gen_cloze_examples(
    questions: Iterable[MultipleChoiceQuestion],
    origin: Origin = Origin.CLOZE,
) -> list[PairExample]:
    """One example per candidate; the gold candidate carries label 1."""
    examples: list[PairExample] = []
    for q in questions:
        if q.gold_index is None:
            raise GenerationError(f"question {q.question_id} has no gold answer")
        for i, candidate in enumerate(q.candidates):
            examples.append(
                PairExample(
                    question_text=q.stem,
                    answer_text=candidate,
                    label=int(i == q.gold_index),
                    origin=origin,
                    group_id=q.question_id,
                )
            )
    return examples


def save_pairs_jsonl(examples: Iterable[PairExample], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = {
                "question": ex.question_text,
                "answer": ex.answer_text,
                "label": ex.label,
                "origin": ex.origin.value,
                "group_id": ex.group_id,
                "masked_role": ex.masked_role.value if ex.masked_role else None,
            }
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def load_pairs_jsonl(path: Path) -> list[PairExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            examples.append(
                PairExample(
                    question_text=rec["question"],
                    answer_text=rec["answer"],
                    label=int(rec["label"]),
                    origin=Origin(rec["origin"]),
                    group_id=rec["group_id"],
                    masked_role=Role(rec["masked_role"]) if rec.get("masked_role") else None,
                )
            )
    return examples
