"""Ingestion of semi-structured fact tables into subject/predicate/object triples.

Tables are UTF-8 TSV files whose first row names the columns. A per-table
mapping assigns columns to the subject/predicate/object roles; unmapped tables
fall back to a positional heuristic (first content column is the subject, last
is the object, everything between joins into the predicate). Columns whose
name starts with ``[SKIP]`` are metadata and never part of a triple.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Optional

from factqa.errors import ConfigurationError, LoadError, ParseError
from factqa.text import normalize_cell

logger = logging.getLogger(__name__)

SKIP_PREFIX = "[SKIP]"


class KnowledgeCategory(Enum):
    RETRIEVAL = "retrieval"
    INFERENCE_SUPPORTING = "inference_supporting"
    COMPLEX_INFERENCE = "complex_inference"

    @classmethod
    def parse(cls, label: str) -> "KnowledgeCategory":
        key = label.strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "retrieval": cls.RETRIEVAL,
            "inference_supporting": cls.INFERENCE_SUPPORTING,
            "inferencesupporting": cls.INFERENCE_SUPPORTING,
            "complex_inference": cls.COMPLEX_INFERENCE,
            "complexinference": cls.COMPLEX_INFERENCE,
        }
        if key not in aliases:
            raise ConfigurationError(f"unknown knowledge category: {label!r}")
        return aliases[key]


ALL_CATEGORIES = frozenset(KnowledgeCategory)


@dataclass(frozen=True)
class ExplanatoryFact:
    """One raw table row: ordered (column_role, text) cells plus provenance."""

    fact_id: str
    table_name: str
    category: KnowledgeCategory
    cells: tuple[tuple[str, str], ...]

    def cell_map(self) -> dict[str, str]:
        return dict(self.cells)


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str
    source_fact_id: str

    def sentence(self) -> str:
        return " ".join(part for part in (self.subject, self.predicate, self.object) if part)


@dataclass(frozen=True)
class TableMapping:
    table_name: str
    subject_columns: tuple[str, ...]
    predicate_columns: tuple[str, ...]
    object_columns: tuple[str, ...]

    def __post_init__(self):
        if not self.subject_columns or not self.object_columns:
            raise ConfigurationError(
                f"mapping for table {self.table_name!r} needs subject and object columns"
            )
        groups = [self.subject_columns, self.predicate_columns, self.object_columns]
        seen: set[str] = set()
        for group in groups:
            for col in group:
                if col in seen:
                    raise ConfigurationError(
                        f"mapping for table {self.table_name!r} assigns column {col!r} twice"
                    )
                seen.add(col)


def default_mapping(table_name: str, header: Iterable[str]) -> TableMapping:
    """Positional heuristic for tables without an explicit mapping entry."""
    content = [col for col in header if not col.startswith(SKIP_PREFIX)]
    if len(content) < 2:
        raise ConfigurationError(
            f"table {table_name!r} has fewer than two content columns; add a mapping entry"
        )
    return TableMapping(
        table_name=table_name,
        subject_columns=(content[0],),
        predicate_columns=tuple(content[1:-1]),
        object_columns=(content[-1],),
    )


@dataclass
class KnowledgeBase:
    facts: list[ExplanatoryFact]
    triples: list[Triple]
    skipped_rows: dict[str, int] = field(default_factory=dict)
    dropped_facts: dict[str, int] = field(default_factory=dict)

    @property
    def category_counts(self) -> dict[KnowledgeCategory, int]:
        counts = {cat: 0 for cat in KnowledgeCategory}
        for fact in self.facts:
            counts[fact.category] += 1
        return counts

    def fact_by_id(self, fact_id: str) -> ExplanatoryFact:
        return self._fact_index()[fact_id]

    def _fact_index(self) -> dict[str, ExplanatoryFact]:
        if not hasattr(self, "_idx") or len(self._idx) != len(self.facts):
            self._idx = {f.fact_id: f for f in self.facts}
        return self._idx

    def sentences(self) -> list[tuple[str, str]]:
        """(fact_id, triple rendered as one sentence) for every triple."""
        return [(t.source_fact_id, t.sentence()) for t in self.triples]


def parse_table(
    raw_tsv: IO[str],
    mapping: Optional[TableMapping],
    category: KnowledgeCategory,
    table_name: str = "table",
) -> list[ExplanatoryFact]:
    """Parse one TSV table into facts. Rows whose cell count does not match the
    header are skipped (counted and logged), empty rows are ignored."""
    facts, skipped = _parse_rows(raw_tsv, mapping, category, table_name)
    if skipped:
        logger.warning("table %s: skipped %d malformed rows", table_name, skipped)
    return facts


def _parse_rows(
    raw_tsv: IO[str],
    mapping: Optional[TableMapping],
    category: KnowledgeCategory,
    table_name: str,
) -> tuple[list[ExplanatoryFact], int]:
    header_line = raw_tsv.readline()
    if not header_line:
        raise ParseError(f"table {table_name!r}: empty file, expected a header row")
    header = [col.strip() for col in header_line.rstrip("\n").rstrip("\r").split("\t")]
    if any(not col for col in header):
        raise ParseError(f"table {table_name!r}: header contains an empty column name")
    if len(set(header)) != len(header):
        raise ParseError(f"table {table_name!r}: header contains duplicate column names")
    if mapping is not None:
        known = set(header)
        for col in (
            mapping.subject_columns + mapping.predicate_columns + mapping.object_columns
        ):
            if col not in known:
                raise ConfigurationError(
                    f"mapping for table {table_name!r} references absent column {col!r}"
                )

    facts: list[ExplanatoryFact] = []
    skipped = 0
    for row_idx, line in enumerate(raw_tsv):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        values = line.split("\t")
        if len(values) != len(header):
            skipped += 1
            continue
        cells = tuple((col, val.strip()) for col, val in zip(header, values))
        if all(not text for _, text in cells):
            continue
        facts.append(
            ExplanatoryFact(
                fact_id=f"{table_name}#{row_idx}",
                table_name=table_name,
                category=category,
                cells=cells,
            )
        )
    return facts, skipped


def normalize_to_triple(fact: ExplanatoryFact, mapping: TableMapping) -> Optional[Triple]:
    """Map a fact's cells onto the three roles; None means the fact is dropped
    because its subject or object came out empty."""
    if mapping.table_name != fact.table_name:
        raise ConfigurationError(
            f"mapping for table {mapping.table_name!r} applied to fact from {fact.table_name!r}"
        )
    cells = fact.cell_map()
    for col in mapping.subject_columns + mapping.predicate_columns + mapping.object_columns:
        if col not in cells:
            raise ConfigurationError(
                f"mapping for table {fact.table_name!r} references absent column {col!r}"
            )

    def join(columns: tuple[str, ...]) -> str:
        parts = [normalize_cell(cells[col]) for col in columns]
        return " ".join(p for p in parts if p)

    subject = join(mapping.subject_columns)
    predicate = join(mapping.predicate_columns)
    obj = join(mapping.object_columns)
    if not subject or not obj:
        return None
    return Triple(subject=subject, predicate=predicate, object=obj, source_fact_id=fact.fact_id)


def load_mappings(mapping_file: Path) -> dict[str, TableMapping]:
    """Mapping file: JSON object of table name -> {subject, predicate, object} column lists."""
    try:
        raw = json.loads(Path(mapping_file).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"mapping file {mapping_file}: invalid JSON ({exc})") from exc
    mappings = {}
    for table_name, roles in raw.items():
        mappings[table_name] = TableMapping(
            table_name=table_name,
            subject_columns=tuple(roles.get("subject", [])),
            predicate_columns=tuple(roles.get("predicate", [])),
            object_columns=tuple(roles.get("object", [])),
        )
    return mappings


def load_category_manifest(manifest_file: Path) -> list[tuple[str, KnowledgeCategory]]:
    """Manifest: one `<table file>\\t<category>` line per table; # comments allowed."""
    entries = []
    for line in Path(manifest_file).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigurationError(
                f"category manifest {manifest_file}: bad line {line!r} (want name<TAB>category)"
            )
        entries.append((parts[0], KnowledgeCategory.parse(parts[1])))
    return entries


def load_knowledge_base(
    table_directory: Path,
    mapping_file: Optional[Path],
    category_manifest: Path,
) -> KnowledgeBase:
    """Parse every manifest table, normalize facts to triples, count per category.

    Fact order is deterministic: lexicographic by table name, then row index.
    """
    table_directory = Path(table_directory)
    entries = load_category_manifest(category_manifest)
    mappings = load_mappings(mapping_file) if mapping_file else {}

    missing = [name for name, _ in entries if not (table_directory / name).exists()]
    if missing:
        raise LoadError(f"missing table files: {', '.join(sorted(missing))}")

    facts: list[ExplanatoryFact] = []
    triples: list[Triple] = []
    skipped_rows: dict[str, int] = {}
    dropped_facts: dict[str, int] = {}
    for file_name, category in sorted(entries, key=lambda e: Path(e[0]).stem):
        table_name = Path(file_name).stem
        with open(table_directory / file_name, encoding="utf-8") as fh:
            header_probe = fh.readline().rstrip("\n").rstrip("\r").split("\t")
            fh.seek(0)
            mapping = mappings.get(table_name) or default_mapping(
                table_name, [c.strip() for c in header_probe]
            )
            table_facts, skipped = _parse_rows(fh, mapping, category, table_name)
        if skipped:
            skipped_rows[table_name] = skipped
        dropped = 0
        for fact in table_facts:
            triple = normalize_to_triple(fact, mapping)
            if triple is None:
                dropped += 1
            else:
                triples.append(triple)
        if dropped:
            dropped_facts[table_name] = dropped
        facts.extend(table_facts)

    kb = KnowledgeBase(
        facts=facts, triples=triples, skipped_rows=skipped_rows, dropped_facts=dropped_facts
    )
    logger.info(
        "loaded %d facts / %d triples from %d tables (%d rows skipped, %d facts dropped)",
        len(kb.facts),
        len(kb.triples),
        len(entries),
        sum(skipped_rows.values()),
        sum(dropped_facts.values()),
    )
    return kb


def filter_by_category(
    kb: KnowledgeBase, categories: Iterable[KnowledgeCategory]
) -> KnowledgeBase:
    wanted = set(categories)
    facts = [f for f in kb.facts if f.category in wanted]
    keep_ids = {f.fact_id for f in facts}
    triples = [t for t in kb.triples if t.source_fact_id in keep_ids]
    return KnowledgeBase(
        facts=facts,
        triples=triples,
        skipped_rows=dict(kb.skipped_rows),
        dropped_facts=dict(kb.dropped_facts),
    )


def save_kb_jsonl(kb: KnowledgeBase, path: Path) -> None:
    """Canonical JSON-lines cache: one meta record, then facts, then triples."""
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "kind": "meta",
            "version": 1,
            "counts": {cat.value: n for cat, n in kb.category_counts.items()},
            "skipped_rows": kb.skipped_rows,
            "dropped_facts": kb.dropped_facts,
        }
        fh.write(json.dumps(meta, sort_keys=True, ensure_ascii=False) + "\n")
        for fact in kb.facts:
            rec = {
                "kind": "fact",
                "fact_id": fact.fact_id,
                "table_name": fact.table_name,
                "category": fact.category.value,
                "cells": [list(c) for c in fact.cells],
            }
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
        for triple in kb.triples:
            rec = {
                "kind": "triple",
                "subject": triple.subject,
                "predicate": triple.predicate,
                "object": triple.object,
                "source_fact_id": triple.source_fact_id,
            }
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def load_kb_jsonl(path: Path) -> KnowledgeBase:
    facts: list[ExplanatoryFact] = []
    triples: list[Triple] = []
    skipped_rows: dict[str, int] = {}
    dropped_facts: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "meta":
                skipped_rows = rec.get("skipped_rows", {})
                dropped_facts = rec.get("dropped_facts", {})
            elif kind == "fact":
                facts.append(
                    ExplanatoryFact(
                        fact_id=rec["fact_id"],
                        table_name=rec["table_name"],
                        category=KnowledgeCategory(rec["category"]),
                        cells=tuple((role, text) for role, text in rec["cells"]),
                    )
                )
            elif kind == "triple":
                triples.append(
                    Triple(
                        subject=rec["subject"],
                        predicate=rec["predicate"],
                        object=rec["object"],
                        source_fact_id=rec["source_fact_id"],
                    )
                )
            else:
                raise ParseError(f"{path}:{line_no}: unknown record kind {kind!r}")
    return KnowledgeBase(
        facts=facts, triples=triples, skipped_rows=skipped_rows, dropped_facts=dropped_facts
    )
