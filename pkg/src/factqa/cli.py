"""Command-line entry points.

Each subcommand reads the experiment config, writes versioned artifacts into
the output directory together with a manifest (config snapshot + input
hashes), and skips recomputation when an up-to-date manifest is found.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from factqa import __version__, bm25
from factqa.checkpoint import load_checkpoint, save_checkpoint
from factqa.errors import FactQaError
from factqa.evaluate import (
    ABLATION_ROWS,
    AblationCell,
    AblationMatrix,
    EvalReport,
    evaluate,
    render_ablation_table,
    render_accuracy_table,
)
from factqa.experiment import (
    DATA_ROOT_ENV,
    ExperimentConfig,
    eval_on,
    load_kb_for,
    run_stages,
    stage_plan,
    vocab_for,
)
from factqa.encoding import Vocabulary
from factqa.kb import (
    KnowledgeCategory,
    filter_by_category,
    load_category_manifest,
    load_kb_jsonl,
    save_kb_jsonl,
)
from factqa.manifest import is_up_to_date, write_manifest
from factqa.pairs import (
    Origin,
    Role,
    TaskGenConfig,
    gen_cloze_examples,
    gen_completion_examples,
    save_pairs_jsonl,
)
from factqa.questions import dataset_stats, render_stats_table
from factqa.synth import write_synthetic_dataset

logger = logging.getLogger("factqa")


def _fail(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if args.data_root:
        cfg.data_root = args.data_root
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _kb_inputs(cfg: ExperimentConfig) -> dict[str, Path]:
    root = cfg.root()
    inputs = {"category_manifest": root / cfg.kb_category_manifest}
    if cfg.kb_mapping_file:
        inputs["mapping_file"] = root / cfg.kb_mapping_file
    for name, _ in load_category_manifest(root / cfg.kb_category_manifest):
        inputs[f"table:{name}"] = root / cfg.kb_tables_dir / name
    return inputs


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    kb_path = out / "kb.jsonl"
    manifest_path = out / "manifest-ingest.json"
    inputs = _kb_inputs(cfg)
    snapshot = {"command": "ingest", "config": cfg.snapshot()}
    if not args.force and is_up_to_date(manifest_path, snapshot, inputs, [kb_path]):
        print(f"ingest: {kb_path} is up to date")
        return 0
    kb = load_kb_for(cfg)
    save_kb_jsonl(kb, kb_path)
    write_manifest(manifest_path, snapshot, inputs)
    counts = kb.category_counts
    print(f"facts: {len(kb.facts)}  triples: {len(kb.triples)}")
    for cat in KnowledgeCategory:
        print(f"  {cat.value}: {counts[cat]}")
    if kb.skipped_rows:
        print(f"skipped rows: {sum(kb.skipped_rows.values())} ({dict(kb.skipped_rows)})")
    if kb.dropped_facts:
        print(f"dropped facts (empty subject/object): {sum(kb.dropped_facts.values())}")
    print(f"wrote {kb_path}")
    return 0


def cmd_stats(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    stats = {}
    for tag, spec in cfg.datasets.items():
        questions = []
        for split in spec.paths:
            questions.extend(spec.load(split, cfg.root(), tag))
        stats[tag] = dataset_stats(questions)
    table = render_stats_table(stats)
    print(table)
    (out / "stats.json").write_text(
        json.dumps({tag: s.per_split for tag, s in stats.items()}, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    return 0


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    kb_path = out / "kb.jsonl"
    taskgen = TaskGenConfig(
        negatives_per_positive=cfg.negatives_per_positive,
        mask_roles=tuple(Role(r) for r in cfg.mask_roles),
        rng_seed=cfg.data_seed,
    )
    wrote = []
    if args.kind in ("completion", "all"):
        if not kb_path.exists():
            return _fail(f"missing {kb_path}; run `factqa ingest` first", 3)
        kb = load_kb_jsonl(kb_path)
        if cfg.categories is not None:
            kb = filter_by_category(kb, {KnowledgeCategory.parse(c) for c in cfg.categories})
        examples = gen_completion_examples(kb, taskgen)
        path = out / "pairs-completion.jsonl"
        save_pairs_jsonl(examples, path)
        wrote.append((path, len(examples)))
    if args.kind in ("cloze", "all"):
        if not cfg.train_dataset:
            return _fail("config has no train_dataset for cloze generation")
        questions = cfg.datasets[cfg.train_dataset].load("train", cfg.root(), cfg.train_dataset)
        examples = gen_cloze_examples(questions, origin=Origin.CLOZE)
        path = out / "pairs-cloze.jsonl"
        save_pairs_jsonl(examples, path)
        wrote.append((path, len(examples)))
    for path, n in wrote:
        print(f"wrote {n} examples to {path}")
    return 0


def _prepare_questions(cfg: ExperimentConfig):
    cloze_q = None
    target_q = None
    dev_q = None
    if "Q" in cfg.label.split("+"):
        cloze_q = cfg.datasets[cfg.train_dataset].load("train", cfg.root(), cfg.train_dataset)
    if "FT" in cfg.label.split("+"):
        target_q = cfg.datasets[cfg.target_dataset].load("train", cfg.root(), cfg.target_dataset)
    if cfg.dev_set:
        tag, split = cfg.dev_set
        dev_q = cfg.datasets[tag].load(split, cfg.root(), tag)
    return cloze_q, target_q, dev_q


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    plan = stage_plan(cfg.label)
    if not plan:
        return _fail(f"label {cfg.label!r} selects no training stage")
    needs_kb = any(s.value == "knowledge" for s in plan)
    kb = load_kb_for(cfg) if needs_kb else None
    cloze_q, target_q, dev_q = _prepare_questions(cfg)

    vocab_sources = [q for q in (cloze_q, target_q) if q]
    vocab = vocab_for(cfg, kb, vocab_sources)
    vocab.save(out / "vocab.txt")

    run = run_stages(cfg, vocab, kb, cloze_q, target_q, dev_questions=dev_q)
    for stage, params in run.params_by_stage.items():
        ckpt = out / f"checkpoint-{stage.value}.ckpt"
        save_checkpoint(params, ckpt)
        run.curves_by_stage[stage].save(out / f"curve-{stage.value}.csv")
        print(f"stage {stage.value}: wrote {ckpt}")
    snapshot = {"command": "train", "config": cfg.snapshot()}
    write_manifest(out / "manifest-train.json", snapshot, {})
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    ckpt_path = Path(args.checkpoint) if args.checkpoint else None
    if ckpt_path is None:
        plan = stage_plan(cfg.label)
        if not plan:
            return _fail(f"label {cfg.label!r} selects no training stage")
        ckpt_path = out / f"checkpoint-{plan[-1].value}.ckpt"
    if not ckpt_path.exists():
        return _fail(f"missing checkpoint {ckpt_path}; run `factqa train` first", 3)
    vocab_path = out / "vocab.txt"
    if not vocab_path.exists():
        return _fail(f"missing {vocab_path}; run `factqa train` first", 3)
    params = load_checkpoint(ckpt_path)
    vocab = Vocabulary.load(vocab_path)
    reports = eval_on(cfg, params, vocab)
    for report in reports:
        report.save(out / f"report-{cfg.label}-{report.dataset_tag}-{report.split}.json")
    table = render_accuracy_table({cfg.label: reports},
                                  [(r.dataset_tag, r.split) for r in reports])
    print(table)
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    rcfg = bm25.RetrievalConfig(top_k=args.top_k, scoring=args.scoring)
    kb_path = out / "kb.jsonl"
    kb = load_kb_jsonl(kb_path) if kb_path.exists() else load_kb_for(cfg)
    sentences = kb.sentences()
    cache = out / "bm25-index.npz"
    want_hash = bm25.corpus_hash([s for _, s in sentences])
    index = None
    if cache.exists():
        try:
            index = bm25.load_index(cache, expect_hash=want_hash)
        except FactQaError:
            index = None
    if index is None:
        index = bm25.build_index(sentences)
        bm25.save_index(index, cache)
    reports = []
    for tag, split in cfg.eval_sets:
        questions = cfg.datasets[tag].load(split, cfg.root(), tag)
        predictions = {}
        correct = n_gold = 0
        for q in questions:
            pred = bm25.ir_answer(q, index, rcfg)
            predictions[q.question_id] = pred
            if q.gold_index is not None:
                n_gold += 1
                correct += int(pred == q.gold_index)
        report = EvalReport(
            dataset_tag=tag,
            split=split,
            accuracy=correct / n_gold if n_gold else 0.0,
            predictions=predictions,
            config_label=rcfg.label,
            n_questions=len(questions),
            n_gold=n_gold,
        )
        report.save(out / f"report-baseline-{tag}-{split}.json")
        reports.append(report)
    print(render_accuracy_table({rcfg.label: reports},
                                [(r.dataset_tag, r.split) for r in reports]))
    return 0


def _ablation_worker(raw_cfg: dict, categories: list[str], label: str) -> list[str]:
    cfg = ExperimentConfig.from_dict(raw_cfg)
    cfg.categories = categories if categories else None
    cfg.label = label
    kb_full = load_kb_for(cfg) if label != "Q" else None
    cloze_q, target_q, dev_q = _prepare_questions(cfg)
    vocab = vocab_for(cfg, kb_full, [q for q in (cloze_q, target_q) if q])
    run = run_stages(cfg, vocab, kb_full, cloze_q, target_q, dev_questions=None)
    reports = eval_on(cfg, run.final, vocab, label=label)
    return [r.to_json() for r in reports]


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    raw = cfg.snapshot()
    raw_cfg = {
        "kb": {
            "tables_dir": raw["kb_tables_dir"],
            "mapping_file": raw["kb_mapping_file"],
            "category_manifest": raw["kb_category_manifest"],
        },
        "datasets": raw["datasets"],
        "train_dataset": raw["train_dataset"],
        "target_dataset": raw["target_dataset"],
        "eval": raw["eval_sets"],
        "encoder": raw["encoder"],
        "max_len": raw["max_len"],
        "vocab": {"max_size": raw["vocab_max_size"], "min_freq": raw["vocab_min_freq"]},
        "taskgen": {
            "negatives_per_positive": raw["negatives_per_positive"],
            "mask_roles": raw["mask_roles"],
        },
        "seeds": {"init": cfg.init_seed, "data": cfg.data_seed, "shuffle": cfg.shuffle_seed},
        "stages": raw["stage_hyper"],
        "output_dir": raw["output_dir"],
        "data_root": raw["data_root"],
    }
    jobs = []
    for knowledge, categories in ABLATION_ROWS:
        labels = ("Q",) if not categories else ("K", "K+Q")
        for label in labels:
            jobs.append((knowledge, [c.value for c in categories], label))

    matrix = AblationMatrix()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                (knowledge, label, pool.submit(_ablation_worker, raw_cfg, cats, label))
                for knowledge, cats, label in jobs
            ]
            for knowledge, label, fut in futures:
                reports = [EvalReport.from_json(blob) for blob in fut.result()]
                matrix.cells.append(AblationCell(knowledge, label, reports))
    else:
        for knowledge, cats, label in jobs:
            reports = [EvalReport.from_json(blob) for blob in _ablation_worker(raw_cfg, cats, label)]
            matrix.cells.append(AblationCell(knowledge, label, reports))

    column_order = list(cfg.eval_sets)
    table = render_ablation_table(matrix, column_order)
    print(table)
    (out / "ablation.json").write_text(
        json.dumps(
            [
                {
                    "knowledge": c.knowledge,
                    "config": c.config_label,
                    "reports": [json.loads(r.to_json()) for r in c.reports],
                }
                for c in matrix.cells
            ],
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    return 0


def cmd_report(args) -> int:
    out = Path(args.output_dir)
    if not out.exists():
        return _fail(f"no such output directory: {out}", 3)
    reports = []
    for path in sorted(out.glob("report-*.json")):
        reports.append(EvalReport.load(path))
    if reports:
        by_label: dict[str, list[EvalReport]] = {}
        for r in reports:
            by_label.setdefault(r.config_label, []).append(r)
        cols = sorted({(r.dataset_tag, r.split) for r in reports})
        print(render_accuracy_table(by_label, cols))
    curves = sorted(out.glob("curve-*.csv"))
    for path in curves:
        dat_path = path.with_suffix(".dat")
        rows = path.read_text(encoding="utf-8").splitlines()
        lines = ["# epoch train_loss dev_accuracy"]
        for row in rows[1:]:
            parts = row.split(",")
            if len(parts) == 3 and parts[0]:
                lines.append(" ".join(p if p else "nan" for p in parts))
        dat_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {dat_path}")
    if not reports and not curves:
        print("nothing to report; run `factqa eval` or `factqa train` first")
    return 0


def cmd_synth(args) -> int:
    paths = write_synthetic_dataset(
        Path(args.out), n_triples=args.triples, n_questions=args.questions, seed=args.seed
    )
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factqa",
        description="Fact-knowledge transfer experiments for multiple-choice science QA",
    )
    parser.add_argument("--version", action="version", version=f"factqa {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--data-root", default=None,
                       help=f"overrides the config / ${DATA_ROOT_ENV} data root")
        p.add_argument("--output-dir", default=None, help="overrides config output_dir")
        return p

    p = with_config(sub.add_parser("ingest", help="parse tables into a cached knowledge base"))
    p.add_argument("--force", action="store_true", help="rebuild even if up to date")
    p.set_defaults(func=cmd_ingest)

    p = with_config(sub.add_parser("stats", help="print split sizes for all datasets"))
    p.set_defaults(func=cmd_stats)

    p = with_config(sub.add_parser("gen", help="write training-pair streams"))
    p.add_argument("--kind", choices=["completion", "cloze", "all"], default="all")
    p.set_defaults(func=cmd_gen)

    p = with_config(sub.add_parser("train", help="run the training stages for the config label"))
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("eval", help="evaluate a checkpoint on the eval sets"))
    p.add_argument("--checkpoint", default=None, help="checkpoint path (default: last stage)")
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("baseline", help="BM25 retrieval baseline over the eval sets"))
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--scoring", choices=["cosine", "okapi"], default="cosine")
    p.set_defaults(func=cmd_baseline)

    p = with_config(sub.add_parser("ablate", help="knowledge-category x config matrix"))
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render tables and gnuplot files from an output dir")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write the bundled synthetic mini-corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--triples", type=int, default=200)
    p.add_argument("--questions", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FactQaError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
