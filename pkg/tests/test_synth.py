import numpy as np
import pytest

from factqa.kb import KnowledgeCategory, load_knowledge_base
from factqa.pairs import Role
from factqa.questions import load_arc_or_openbook, load_worldtree_questions
from factqa.synth import (
    make_world,
    questions_from_maskings,
    write_jsonl_style_questions,
    write_synthetic_dataset,
    write_world_tables,
    write_worldtree_style_questions,
)


class TestMakeWorld:
    def test_deterministic(self):
        a = make_world(60, seed=4)
        b = make_world(60, seed=4)
        assert a.kb.triples == b.kb.triples

    def test_size_and_structure(self):
        world = make_world(60, seed=4)
        assert len(world.kb.triples) == 60
        assert len(world.subjects) == 30
        # each subject appears in exactly two facts sharing one object
        for j in range(30):
            f1, f2 = world.facts_of_subject(j)
            assert f1.subject == f2.subject == world.subjects[j]
            assert f1.object == f2.object
            assert f1.predicate != f2.predicate
            g = world.group_of[f1.subject]
            assert f1.object == world.group_objects[g]

    def test_group_markers_in_surface_form(self):
        world = make_world(40, seed=1)
        for subject, g in world.group_of.items():
            marker = subject.split()[0]
            same_group = [s for s, gg in world.group_of.items() if gg == g]
            assert all(s.split()[0] == marker for s in same_group)

    def test_all_categories_present(self):
        world = make_world(60, seed=4)
        counts = world.kb.category_counts
        assert all(counts[cat] > 0 for cat in KnowledgeCategory)

    def test_avoid_excludes_words(self):
        from factqa.synth import RELATIONS

        a = make_world(40, seed=1)
        words_a = {tok for _, s in a.kb.sentences() for tok in s.split()}
        b = make_world(40, seed=2, avoid=words_a)
        words_b = {tok for _, s in b.kb.sentences() for tok in s.split()}
        relation_words = {tok for rel, _ in RELATIONS for tok in rel.split()}
        assert (words_a & words_b) - relation_words == set()

    def test_shared_group_objects(self):
        a = make_world(40, seed=1)
        words_a = {tok for _, s in a.kb.sentences() for tok in s.split()}
        b = make_world(40, seed=2, avoid=words_a, group_objects=a.group_objects)
        assert b.group_objects == a.group_objects

    def test_odd_or_tiny_rejected(self):
        with pytest.raises(ValueError):
            make_world(41)
        with pytest.raises(ValueError):
            make_world(10)


class TestQuestionsFromMaskings:
    def test_gold_is_masked_component(self, rng):
        world = make_world(40, seed=5)
        questions = questions_from_maskings(world.triples[:10], Role.OBJECT,
                                            world.triples, rng)
        for q, triple in zip(questions, world.triples[:10]):
            assert q.candidates[q.gold_index] == triple.object
            assert triple.subject in q.stem
            assert len(q.candidates) == 4
            assert len(set(q.candidates)) == 4

    def test_subject_masking(self, rng):
        world = make_world(40, seed=5)
        (q,) = questions_from_maskings(world.triples[:1], Role.SUBJECT,
                                       world.triples, rng)
        assert q.candidates[q.gold_index] == world.triples[0].subject


class TestFileEmission:
    def test_tables_round_trip_through_loader(self, tmp_path):
        world = make_world(40, seed=6)
        tables_dir, mapping_file, manifest_file = write_world_tables(world, tmp_path)
        kb = load_knowledge_base(tables_dir, mapping_file, manifest_file)
        assert sorted(t.sentence() for t in kb.triples) == sorted(
            t.sentence() for t in world.kb.triples)
        assert kb.category_counts == world.kb.category_counts

    def test_worldtree_format_round_trip(self, tmp_path, rng):
        world = make_world(40, seed=6)
        questions = questions_from_maskings(world.triples[:8], Role.OBJECT,
                                            world.triples, rng, split="train")
        path = tmp_path / "q.tsv"
        write_worldtree_style_questions(questions, path)
        back = load_worldtree_questions(path, "train", dataset_tag="synth")
        assert len(back) == len(questions)
        for orig, loaded in zip(questions, back):
            assert loaded.stem == orig.stem
            assert loaded.candidates == orig.candidates
            assert loaded.gold_index == orig.gold_index

    def test_jsonl_format_round_trip(self, tmp_path, rng):
        world = make_world(40, seed=6)
        questions = questions_from_maskings(world.triples[:8], Role.OBJECT,
                                            world.triples, rng, split="dev")
        path = tmp_path / "q.jsonl"
        write_jsonl_style_questions(questions, path)
        back = load_arc_or_openbook(path, "dev", dataset_tag="synth")
        for orig, loaded in zip(questions, back):
            assert loaded.stem == orig.stem
            assert loaded.candidates == orig.candidates
            assert loaded.gold_index == orig.gold_index

    def test_write_synthetic_dataset_tree(self, tmp_path):
        paths = write_synthetic_dataset(tmp_path, n_triples=40, n_questions=12, seed=1)
        kb = load_knowledge_base(paths["tables_dir"], paths["mapping_file"],
                                 paths["category_manifest"])
        assert len(kb.facts) == 40
        tsv_qs = load_worldtree_questions(paths["questions_tsv"], "train", "synth")
        jsonl_qs = load_arc_or_openbook(paths["questions_jsonl"], "train", "synth")
        assert len(tsv_qs) == len(jsonl_qs) == 12
