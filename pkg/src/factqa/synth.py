"""Deterministic synthetic mini-corpus for tests and smoke experiments.

Builds a small world of pseudo-word entities connected by a handful of
relation templates, renders it in the same on-disk formats the real loaders
consume (TSV tables + mapping + manifest, question TSV, JSON-lines), and
derives multiple-choice questions from fact maskings. Nothing here is copied
from any real dataset.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from factqa.kb import ExplanatoryFact, KnowledgeBase, KnowledgeCategory, Triple
from factqa.pairs import Role, masked_question
from factqa.questions import MultipleChoiceQuestion

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

# relation template -> knowledge category; mirrors the taxonomy/action/causal split
RELATIONS: tuple[tuple[str, KnowledgeCategory], ...] = (
    ("is a kind of", KnowledgeCategory.RETRIEVAL),
    ("is made of", KnowledgeCategory.RETRIEVAL),
    ("is used for", KnowledgeCategory.INFERENCE_SUPPORTING),
    ("requires", KnowledgeCategory.INFERENCE_SUPPORTING),
    ("causes", KnowledgeCategory.COMPLEX_INFERENCE),
    ("changes into", KnowledgeCategory.COMPLEX_INFERENCE),
)


def pseudo_word(rng: np.random.Generator, syllables: int = 2) -> str:
    parts = []
    for _ in range(syllables):
        parts.append(_CONSONANTS[int(rng.integers(len(_CONSONANTS)))])
        parts.append(_VOWELS[int(rng.integers(len(_VOWELS)))])
    if rng.random() < 0.4:
        parts.append(_CONSONANTS[int(rng.integers(len(_CONSONANTS)))])
    return "".join(parts)


N_GROUPS = 10


@dataclass
class SynthWorld:
    kb: KnowledgeBase
    subjects: list[str]
    group_objects: list[str]  # one object per subject group
    group_of: dict[str, int]

    @property
    def triples(self) -> list[Triple]:
        return self.kb.triples

    def facts_of_subject(self, j: int) -> tuple[Triple, Triple]:
        return self.kb.triples[2 * j], self.kb.triples[2 * j + 1]


def _fresh_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    words: list[str] = []
    while len(words) < n:
        w = pseudo_word(rng, syllables=int(rng.integers(2, 4)))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def make_world(
    n_triples: int,
    seed: int = 0,
    avoid: Optional[set[str]] = None,
    group_objects: Optional[list[str]] = None,
) -> SynthWorld:
    """A knowledge base with compositional group structure.

    Subjects are two-word entities "<group marker> <individual>"; every subject
    belongs to one of N_GROUPS groups, appears in exactly two facts (different
    relations), and the group alone determines the object. A masking held out
    of training therefore stays answerable through the subject's other fact and
    through group-mates, i.e. by abstraction rather than memorization. Groups
    are assigned in contiguous blocks of subjects, so disjoint subject ranges
    use disjoint groups (which keeps control configurations leak-free).

    `avoid` excludes words already used elsewhere (e.g. by a companion world);
    `group_objects` reuses another world's objects so only the subject side is
    new vocabulary.
    """
    if n_triples % 2 or n_triples < 2 * N_GROUPS:
        raise ValueError(f"n_triples must be even and >= {2 * N_GROUPS}")
    rng = np.random.default_rng(seed)
    taken = {rel for rel, _ in RELATIONS} | (avoid or set())
    n_subjects = n_triples // 2
    if group_objects is None:
        group_objects = _fresh_words(rng, N_GROUPS, taken)
    elif len(group_objects) != N_GROUPS:
        raise ValueError(f"group_objects must have {N_GROUPS} entries")
    else:
        taken |= set(group_objects)
    group_markers = _fresh_words(rng, N_GROUPS, taken)
    individuals = _fresh_words(rng, n_subjects, taken)

    facts: list[ExplanatoryFact] = []
    triples: list[Triple] = []
    per_table_rows: dict[str, int] = {}
    group_of: dict[str, int] = {}
    subjects: list[str] = []

    def add_fact(subject: str, rel_idx: int, obj: str) -> None:
        relation, category = RELATIONS[rel_idx % len(RELATIONS)]
        table = relation.replace(" ", "_")
        row = per_table_rows.get(table, 0)
        per_table_rows[table] = row + 1
        fact_id = f"{table}#{row}"
        facts.append(
            ExplanatoryFact(
                fact_id=fact_id,
                table_name=table,
                category=category,
                cells=(("x", subject), ("link", relation), ("y", obj)),
            )
        )
        triples.append(
            Triple(subject=subject, predicate=relation, object=obj, source_fact_id=fact_id)
        )

    group_size = max(1, -(-n_subjects // N_GROUPS))  # ceil division
    for j, individual in enumerate(individuals):
        g = min(j // group_size, N_GROUPS - 1)
        subject = f"{group_markers[g]} {individual}"
        subjects.append(subject)
        group_of[subject] = g
        add_fact(subject, j, group_objects[g])
        add_fact(subject, j + 3, group_objects[g])

    kb = KnowledgeBase(facts=facts, triples=triples)
    return SynthWorld(
        kb=kb, subjects=subjects, group_objects=group_objects, group_of=group_of
    )


def _component(triple: Triple, role: Role) -> str:
    return {Role.SUBJECT: triple.subject, Role.PREDICATE: triple.predicate,
            Role.OBJECT: triple.object}[role]


def questions_from_maskings(
    triples: Sequence[Triple],
    role: Role,
    all_triples: Sequence[Triple],
    rng: np.random.Generator,
    n_choices: int = 4,
    dataset_tag: str = "synth",
    split: str = "dev",
) -> list[MultipleChoiceQuestion]:
    """One question per triple: the masked component is the gold answer,
    distractors are same-role components of other facts."""
    donor_texts = sorted({_component(t, role) for t in all_triples})
    questions = []
    for q_ord, triple in enumerate(triples):
        truth = _component(triple, role)
        distractors = [d for d in donor_texts if d != truth]
        picks = rng.choice(len(distractors), size=n_choices - 1, replace=False)
        candidates = [truth] + [distractors[int(i)] for i in picks]
        order = rng.permutation(n_choices)
        shuffled = [candidates[int(i)] for i in order]
        gold = int(np.where(order == 0)[0][0])
        questions.append(
            MultipleChoiceQuestion(
                question_id=f"{dataset_tag}-{split}-{role.value}-{q_ord}",
                stem=masked_question(triple, role),
                candidates=tuple(shuffled),
                gold_index=gold,
                dataset_tag=dataset_tag,
                split=split,
            )
        )
    return questions


def write_world_tables(world: SynthWorld, out_dir: Path) -> tuple[Path, Path, Path]:
    """Materialize the world as TSV tables + mapping file + category manifest,
    exercising both the explicit-mapping and heuristic ingestion paths."""
    out_dir = Path(out_dir)
    tables_dir = out_dir / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)

    by_table: dict[str, list[ExplanatoryFact]] = {}
    categories: dict[str, KnowledgeCategory] = {}
    for fact in world.kb.facts:
        by_table.setdefault(fact.table_name, []).append(fact)
        categories[fact.table_name] = fact.category

    for table, facts in by_table.items():
        lines = ["x\tlink\ty\t[SKIP] UID"]
        for i, fact in enumerate(facts):
            cells = fact.cell_map()
            lines.append(f"{cells['x']}\t{cells['link']}\t{cells['y']}\tuid-{table}-{i}")
        (tables_dir / f"{table}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # explicit mapping for the first table; the rest use the positional heuristic
    first = sorted(by_table)[0]
    mapping_file = out_dir / "mapping.json"
    mapping_file.write_text(
        json.dumps(
            {first: {"subject": ["x"], "predicate": ["link"], "object": ["y"]}}, indent=2
        )
        + "\n",
        encoding="utf-8",
    )
    manifest_file = out_dir / "categories.tsv"
    manifest_lines = ["# table file\tcategory"]
    for table in sorted(by_table):
        manifest_lines.append(f"{table}.tsv\t{categories[table].value}")
    manifest_file.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    return tables_dir, mapping_file, manifest_file


def write_worldtree_style_questions(
    questions: Sequence[MultipleChoiceQuestion], path: Path
) -> None:
    """Questions in the lettered-choice TSV layout the WorldTree loader parses."""
    letters = "ABCDE"
    lines = ["QuestionID\tquestion\tAnswerKey"]
    for q in questions:
        embedded = q.stem + " " + " ".join(
            f"({letters[i]}) {cand}" for i, cand in enumerate(q.candidates)
        )
        key = letters[q.gold_index] if q.gold_index is not None else ""
        lines.append(f"{q.question_id}\t{embedded}\t{key}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_jsonl_style_questions(
    questions: Sequence[MultipleChoiceQuestion], path: Path
) -> None:
    """Questions in the ARC/OpenBookQA JSON-lines layout."""
    letters = "ABCDE"
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            rec = {
                "id": q.question_id,
                "question": {
                    "stem": q.stem,
                    "choices": [
                        {"text": cand, "label": letters[i]}
                        for i, cand in enumerate(q.candidates)
                    ],
                },
            }
            if q.gold_index is not None:
                rec["answerKey"] = letters[q.gold_index]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_synthetic_dataset(
    out_dir: Path,
    n_triples: int = 200,
    n_questions: int = 60,
    seed: int = 0,
) -> dict[str, str]:
    """Full mini data tree: tables, mapping, manifest, and question files in
    both supported formats. Returns the written paths."""
    out_dir = Path(out_dir)
    world = make_world(n_triples, seed=seed)
    tables_dir, mapping_file, manifest_file = write_world_tables(world, out_dir)
    rng = np.random.default_rng(seed + 1)
    take = min(n_questions, len(world.triples))
    questions = questions_from_maskings(
        world.triples[:take], Role.OBJECT, world.triples, rng, split="train"
    )
    tsv_path = out_dir / "questions.train.tsv"
    jsonl_path = out_dir / "questions.train.jsonl"
    write_worldtree_style_questions(questions, tsv_path)
    write_jsonl_style_questions(questions, jsonl_path)
    return {
        "tables_dir": str(tables_dir),
        "mapping_file": str(mapping_file),
        "category_manifest": str(manifest_file),
        "questions_tsv": str(tsv_path),
        "questions_jsonl": str(jsonl_path),
    }
