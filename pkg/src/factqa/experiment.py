"""Experiment configuration and the staged training recipes behind the CLI.

A config file names the knowledge base, the QA datasets, the encoder preset,
per-stage hyperparameters, and a configuration label (K, Q, K+Q, optionally
+FT) that selects which training stages run.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from factqa.encoding import Vocabulary, build_vocab
from factqa.errors import ConfigurationError, LoadError
from factqa.evaluate import EvalReport, evaluate
from factqa.kb import (
    ALL_CATEGORIES,
    KnowledgeBase,
    KnowledgeCategory,
    filter_by_category,
    load_knowledge_base,
)
from factqa.model import EncoderConfig, ModelParams, PRESETS, Stage, init_params
from factqa.pairs import Origin, Role, TaskGenConfig, gen_cloze_examples, gen_completion_examples
from factqa.questions import MultipleChoiceQuestion, load_arc_or_openbook, load_worldtree_questions
from factqa.text import tokenize
from factqa.train import Hyperparams, TrainingCurve, train_stage

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "FACTQA_DATA_ROOT"

VALID_LABELS = ("K", "Q", "K+Q", "FT", "K+FT", "Q+FT", "K+Q+FT")


@dataclass
class DatasetSpec:
    format: str  # "worldtree" (TSV) or "jsonl"
    paths: dict[str, str]  # split -> file path

    def load(self, split: str, root: Path, tag: str) -> list[MultipleChoiceQuestion]:
        if split not in self.paths:
            raise ConfigurationError(f"dataset {tag!r} has no {split!r} split configured")
        path = root / self.paths[split]
        if self.format == "worldtree":
            return load_worldtree_questions(path, split, dataset_tag=tag)
        if self.format == "jsonl":
            return load_arc_or_openbook(path, split, dataset_tag=tag)
        raise ConfigurationError(f"dataset {tag!r}: unknown format {self.format!r}")


@dataclass
class ExperimentConfig:
    kb_tables_dir: str
    kb_mapping_file: Optional[str]
    kb_category_manifest: str
    datasets: dict[str, DatasetSpec]
    train_dataset: Optional[str] = "worldtree"
    target_dataset: Optional[str] = None
    eval_sets: list[tuple[str, str]] = field(default_factory=list)
    encoder: str | dict = "tiny"
    max_len: int = 128
    vocab_max_size: int = 20000
    vocab_min_freq: int = 1
    negatives_per_positive: int = 1
    mask_roles: tuple[str, ...] = ("subject", "object")
    label: str = "K+Q"
    init_seed: int = 0
    data_seed: int = 0
    shuffle_seed: int = 0
    stage_hyper: dict[str, dict] = field(default_factory=dict)
    categories: Optional[list[str]] = None  # knowledge subset for ablations
    dev_set: Optional[tuple[str, str]] = None  # per-epoch accuracy during training
    output_dir: str = "runs/out"
    data_root: Optional[str] = None

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise LoadError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path}: invalid JSON ({exc})")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        kb = raw.get("kb", {})
        datasets = {
            tag: DatasetSpec(format=spec.get("format", "jsonl"),
                             paths={k: v for k, v in spec.items() if k != "format"})
            for tag, spec in raw.get("datasets", {}).items()
        }
        seeds = raw.get("seeds", {})
        cfg = cls(
            kb_tables_dir=kb.get("tables_dir", ""),
            kb_mapping_file=kb.get("mapping_file"),
            kb_category_manifest=kb.get("category_manifest", ""),
            datasets=datasets,
            train_dataset=raw.get("train_dataset", "worldtree"),
            target_dataset=raw.get("target_dataset"),
            eval_sets=[tuple(pair) for pair in raw.get("eval", [])],
            encoder=raw.get("encoder", "tiny"),
            max_len=int(raw.get("max_len", 128)),
            vocab_max_size=int(raw.get("vocab", {}).get("max_size", 20000)),
            vocab_min_freq=int(raw.get("vocab", {}).get("min_freq", 1)),
            negatives_per_positive=int(raw.get("taskgen", {}).get("negatives_per_positive", 1)),
            mask_roles=tuple(raw.get("taskgen", {}).get("mask_roles", ["subject", "object"])),
            label=raw.get("label", "K+Q"),
            init_seed=int(seeds.get("init", 0)),
            data_seed=int(seeds.get("data", 0)),
            shuffle_seed=int(seeds.get("shuffle", 0)),
            stage_hyper=raw.get("stages", {}),
            categories=raw.get("categories"),
            dev_set=tuple(raw["dev"]) if raw.get("dev") else None,
            output_dir=raw.get("output_dir", "runs/out"),
            data_root=raw.get("data_root"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.label not in VALID_LABELS:
            raise ConfigurationError(
                f"label must be one of {', '.join(VALID_LABELS)}; got {self.label!r}"
            )
        if "FT" in self.label.split("+") and not self.target_dataset:
            raise ConfigurationError("FT configurations need a target_dataset")
        if "Q" in self.label.split("+") and not self.train_dataset:
            raise ConfigurationError("Q configurations need a train_dataset")
        if isinstance(self.encoder, str) and self.encoder not in PRESETS:
            raise ConfigurationError(
                f"encoder preset must be one of {sorted(PRESETS)}; got {self.encoder!r}"
            )

    def root(self) -> Path:
        base = self.data_root or os.environ.get(DATA_ROOT_ENV, ".")
        return Path(base)

    def snapshot(self) -> dict:
        d = dict(self.__dict__)
        d["datasets"] = {
            tag: {"format": spec.format, **spec.paths} for tag, spec in self.datasets.items()
        }
        d["eval_sets"] = [list(pair) for pair in self.eval_sets]
        d["mask_roles"] = list(self.mask_roles)
        return d

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        if isinstance(self.encoder, str):
            base = PRESETS[self.encoder]
            return EncoderConfig(
                hidden_size=base.hidden_size,
                num_layers=base.num_layers,
                num_heads=base.num_heads,
                feed_forward_size=base.feed_forward_size,
                max_len=self.max_len,
                vocab_size=vocab_size,
                dropout_rate=base.dropout_rate,
            )
        return EncoderConfig(**{**self.encoder, "vocab_size": vocab_size,
                                "max_len": self.max_len})

    def hyper_for(self, stage: Stage) -> Hyperparams:
        defaults = {
            Stage.KNOWLEDGE: dict(batch_size=32, learning_rate=5e-5, epochs=5),
            Stage.CLOZE: dict(batch_size=32, learning_rate=5e-5, epochs=5),
            Stage.FINETUNED: dict(batch_size=32, learning_rate=5e-5, epochs=40),
        }[stage]
        overrides = self.stage_hyper.get(stage.value, {})
        merged = {**defaults, **overrides}
        return Hyperparams(shuffle_seed=self.shuffle_seed, **merged)


def stage_plan(label: str) -> list[Stage]:
    parts = label.split("+")
    plan = []
    if "K" in parts:
        plan.append(Stage.KNOWLEDGE)
    if "Q" in parts:
        plan.append(Stage.CLOZE)
    if "FT" in parts:
        plan.append(Stage.FINETUNED)
    return plan


def load_kb_for(cfg: ExperimentConfig) -> KnowledgeBase:
    root = cfg.root()
    kb = load_knowledge_base(
        root / cfg.kb_tables_dir,
        (root / cfg.kb_mapping_file) if cfg.kb_mapping_file else None,
        root / cfg.kb_category_manifest,
    )
    if cfg.categories is not None:
        kb = filter_by_category(kb, {KnowledgeCategory.parse(c) for c in cfg.categories})
    return kb


def vocab_for(
    cfg: ExperimentConfig,
    kb: Optional[KnowledgeBase],
    question_sets: list[list[MultipleChoiceQuestion]],
) -> Vocabulary:
    """Vocabulary over the KB sentences and all configured training questions.

    Built from the *unfiltered* text sources so ablation runs share one id
    space and checkpoints stay comparable.
    """
    corpus = []
    if kb is not None:
        corpus.extend(tokenize(sentence) for _, sentence in kb.sentences())
    for questions in question_sets:
        for q in questions:
            corpus.append(tokenize(q.stem))
            for cand in q.candidates:
                corpus.append(tokenize(cand))
    return build_vocab(corpus, min_freq=cfg.vocab_min_freq, max_size=cfg.vocab_max_size)


@dataclass
class TrainedRun:
    params_by_stage: dict[Stage, ModelParams]
    curves_by_stage: dict[Stage, TrainingCurve]
    final: ModelParams


def run_stages(
    cfg: ExperimentConfig,
    vocab: Vocabulary,
    kb: Optional[KnowledgeBase],
    cloze_questions: Optional[list[MultipleChoiceQuestion]],
    target_questions: Optional[list[MultipleChoiceQuestion]],
    dev_questions: Optional[list[MultipleChoiceQuestion]] = None,
    init_seed: Optional[int] = None,
) -> TrainedRun:
    """Run the stages selected by cfg.label from a fresh initialization."""
    plan = stage_plan(cfg.label)
    if not plan:
        raise ConfigurationError(f"label {cfg.label!r} selects no training stage")
    enc_cfg = cfg.encoder_config(vocab_size=len(vocab))
    params = init_params(enc_cfg, cfg.init_seed if init_seed is None else init_seed)

    params_by_stage: dict[Stage, ModelParams] = {}
    curves: dict[Stage, TrainingCurve] = {}
    for stage in plan:
        if stage is Stage.KNOWLEDGE:
            if kb is None or len(kb.triples) < 2:
                raise ConfigurationError("knowledge stage needs a knowledge base")
            examples = gen_completion_examples(
                kb,
                TaskGenConfig(
                    negatives_per_positive=cfg.negatives_per_positive,
                    mask_roles=tuple(Role(r) for r in cfg.mask_roles),
                    rng_seed=cfg.data_seed,
                ),
            )
        elif stage is Stage.CLOZE:
            if not cloze_questions:
                raise ConfigurationError("cloze stage needs training questions")
            examples = gen_cloze_examples(cloze_questions, origin=Origin.CLOZE)
        else:
            if not target_questions:
                raise ConfigurationError("fine-tune stage needs target questions")
            examples = gen_cloze_examples(target_questions, origin=Origin.FINETUNE)
        params, curve = train_stage(
            params, vocab, examples, cfg.hyper_for(stage), dev_questions=dev_questions
        )
        params_by_stage[stage] = params
        curves[stage] = curve
        logger.info("stage %s done: final train loss %.4f", stage.value,
                    curve.points[-1].train_loss)
    return TrainedRun(params_by_stage=params_by_stage, curves_by_stage=curves, final=params)


def eval_on(
    cfg: ExperimentConfig,
    params: ModelParams,
    vocab: Vocabulary,
    eval_sets: Optional[list[tuple[str, str]]] = None,
    label: Optional[str] = None,
) -> list[EvalReport]:
    reports = []
    for tag, split in eval_sets if eval_sets is not None else cfg.eval_sets:
        if tag not in cfg.datasets:
            raise ConfigurationError(f"eval set names unknown dataset {tag!r}")
        questions = cfg.datasets[tag].load(split, cfg.root(), tag)
        reports.append(
            evaluate(params, questions, vocab, cfg.max_len,
                     config_label=label or cfg.label)
        )
    return reports
