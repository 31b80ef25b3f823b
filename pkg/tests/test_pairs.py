import numpy as np
import pytest

from factqa.errors import GenerationError
from factqa.kb import ExplanatoryFact, KnowledgeBase, KnowledgeCategory, Triple
from factqa.pairs import (
    Origin,
    PairExample,
    Role,
    TaskGenConfig,
    gen_cloze_examples,
    gen_completion_examples,
    load_pairs_jsonl,
    masked_question,
    sample_negative,
    save_pairs_jsonl,
)
from factqa.questions import MultipleChoiceQuestion


def test_masked_question_object():
    t = Triple("ice", "is a kind of", "solid", "f0")
    assert masked_question(t, Role.OBJECT) == "ice is a kind of"


def test_masked_question_subject():
    t = Triple("ice", "is a kind of", "solid", "f0")
    assert masked_question(t, Role.SUBJECT) == "is a kind of solid"


def test_masked_question_skips_empty_predicate():
    t = Triple("a", "", "b", "f0")
    assert masked_question(t, Role.OBJECT) == "a"
    assert masked_question(t, Role.PREDICATE) == "a b"


class TestCompletionGeneration:
    def test_two_triple_enumeration(self, two_triple_kb):
        """Brute-force oracle for the 2-triple fixture: with both roles and one
        negative per positive there are exactly 8 examples, 4 positive, and
        every negative answer comes from the other fact."""
        cfg = TaskGenConfig(negatives_per_positive=1,
                            mask_roles=(Role.SUBJECT, Role.OBJECT), rng_seed=11)
        examples = gen_completion_examples(two_triple_kb, cfg)
        assert len(examples) == 8
        positives = [e for e in examples if e.label == 1]
        assert len(positives) == 4

        expected_positives = set()
        for t in two_triple_kb.triples:
            for role, answer in ((Role.SUBJECT, t.subject), (Role.OBJECT, t.object)):
                expected_positives.add((masked_question(t, role), answer))
        assert {(e.question_text, e.answer_text) for e in positives} == expected_positives

        by_fact = {t.source_fact_id: t for t in two_triple_kb.triples}
        for e in examples:
            if e.label == 0:
                own = by_fact[e.group_id]
                own_answer = own.subject if e.masked_role is Role.SUBJECT else own.object
                assert e.answer_text != own_answer

    def test_ratio_per_triple_and_role(self, two_triple_kb):
        cfg = TaskGenConfig(negatives_per_positive=3, rng_seed=0)
        examples = gen_completion_examples(two_triple_kb, cfg)
        for t in two_triple_kb.triples:
            for role in (Role.SUBJECT, Role.OBJECT):
                group = [e for e in examples
                         if e.group_id == t.source_fact_id and e.masked_role is role]
                assert sum(e.label for e in group) == 1
                assert len(group) == 4

    def test_same_seed_identical_stream(self, two_triple_kb):
        cfg = TaskGenConfig(rng_seed=42)
        a = gen_completion_examples(two_triple_kb, cfg)
        b = gen_completion_examples(two_triple_kb, cfg)
        assert a == b

    def test_seed_changes_negatives_not_positives(self):
        triples = [Triple(f"s{i}", "rel", f"o{i}", f"f{i}") for i in range(10)]
        facts = [ExplanatoryFact(f"f{i}", "t", KnowledgeCategory.RETRIEVAL,
                                 (("x", f"s{i}"), ("y", f"o{i}"))) for i in range(10)]
        kb = KnowledgeBase(facts=facts, triples=triples)
        a = gen_completion_examples(kb, TaskGenConfig(rng_seed=1))
        b = gen_completion_examples(kb, TaskGenConfig(rng_seed=2))
        pos = lambda ex: sorted((e.question_text, e.answer_text) for e in ex if e.label == 1)
        neg = lambda ex: sorted((e.question_text, e.answer_text) for e in ex if e.label == 0)
        assert pos(a) == pos(b)
        assert neg(a) != neg(b)

    def test_too_small_kb_rejected(self):
        kb = KnowledgeBase(
            facts=[ExplanatoryFact("f0", "t", KnowledgeCategory.RETRIEVAL, (("x", "a"),))],
            triples=[Triple("a", "r", "b", "f0")],
        )
        with pytest.raises(GenerationError):
            gen_completion_examples(kb, TaskGenConfig())

    def test_include_filter(self, two_triple_kb):
        keep = {("t#0", Role.OBJECT)}
        cfg = TaskGenConfig(rng_seed=0)
        examples = gen_completion_examples(two_triple_kb, cfg, include=keep)
        assert {(e.group_id, e.masked_role) for e in examples} == {("t#0", Role.OBJECT)}
        assert len(examples) == 2


def test_sample_negative_avoids_own_fact(rng):
    t = Triple("ice", "r", "solid", "f0")
    donors = [("f0", "solid"), ("f1", "gas"), ("f2", "liquid")]
    for _ in range(50):
        text, collided = sample_negative(t, Role.OBJECT, donors, rng)
        assert text in ("gas", "liquid")
        assert not collided


def test_sample_negative_collision_flagged(rng):
    t = Triple("ice", "r", "solid", "f0")
    donors = [("f1", "solid"), ("f0", "solid")]  # only donor text equals the truth
    text, collided = sample_negative(t, Role.OBJECT, donors, rng)
    assert text == "solid" and collided


class TestClozeGeneration:
    def test_four_choice_question(self):
        q = MultipleChoiceQuestion("q1", "which is a solid?",
                                   ("ice", "steam", "air", "fire"), 0, "t", "train")
        examples = gen_cloze_examples([q])
        assert len(examples) == 4
        assert sum(e.label for e in examples) == 1
        assert examples[0].label == 1
        assert all(e.group_id == "q1" for e in examples)
        assert all(e.origin is Origin.CLOZE for e in examples)

    def test_two_choice_gold_zero(self):
        q = MultipleChoiceQuestion("q1", "s?", ("yes", "no"), 0, "t", "train")
        labels = [e.label for e in gen_cloze_examples([q])]
        assert labels == [1, 0]

    def test_label_sum_per_group_is_one(self, rng):
        questions = [
            MultipleChoiceQuestion(f"q{i}", f"stem {i}",
                                   tuple(f"c{i}{j}" for j in range(4)),
                                   int(rng.integers(4)), "t", "train")
            for i in range(50)
        ]
        examples = gen_cloze_examples(questions)
        sums: dict[str, int] = {}
        for e in examples:
            sums[e.group_id] = sums.get(e.group_id, 0) + e.label
        assert all(v == 1 for v in sums.values())

    def test_count_oracle(self, rng):
        questions = [
            MultipleChoiceQuestion(f"q{i}", "s", ("a", "b", "c", "d"), 0, "t", "train")
            for i in range(25)
        ]
        assert len(gen_cloze_examples(questions)) == sum(len(q.candidates) for q in questions)

    def test_missing_gold_named(self):
        q = MultipleChoiceQuestion("q77", "s?", ("a", "b"), None, "t", "test")
        with pytest.raises(GenerationError, match="q77"):
            gen_cloze_examples([q])

    def test_finetune_origin(self):
        q = MultipleChoiceQuestion("q1", "s?", ("a", "b"), 0, "t", "train")
        examples = gen_cloze_examples([q], origin=Origin.FINETUNE)
        assert all(e.origin is Origin.FINETUNE for e in examples)


def test_pair_example_validation():
    with pytest.raises(ValueError):
        PairExample("q", "a", 2, Origin.CLOZE, "g")
    with pytest.raises(ValueError):
        PairExample("", "a", 1, Origin.CLOZE, "g")


def test_jsonl_round_trip(tmp_path, two_triple_kb):
    examples = gen_completion_examples(two_triple_kb, TaskGenConfig(rng_seed=5))
    path = tmp_path / "pairs.jsonl"
    save_pairs_jsonl(examples, path)
    assert load_pairs_jsonl(path) == examples
