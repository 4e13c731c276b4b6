import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaprobe.corpus import ContextRecord
from qaprobe.extraction import EntityCandidate, RelationTriple
from qaprobe.generation import (
    AnswerPayload,
    CandidateTest,
    gen_entity_questions,
    gen_relation_questions,
    parse_qe_pairs,
)

from helpers import mock_gateway


class TestParseQePairs:
    def test_single_pair(self):
        assert parse_qe_pairs("Question: Q1? Explanation: E1.") == [("Q1?", "E1.")]

    def test_numbered_pairs_in_order(self):
        raw = "1. Question: A? Explanation: B.\n2. Question: C? Explanation: D."
        assert parse_qe_pairs(raw) == [("A?", "B."), ("C?", "D.")]

    def test_explanation_without_question(self):
        assert parse_qe_pairs("Explanation: orphaned rationale") == []

    def test_question_without_explanation_dropped(self):
        raw = "Question: lonely?\nQuestion: paired? Explanation: yes."
        assert parse_qe_pairs(raw) == [("paired?", "yes.")]

    def test_bracketed_segments_unwrapped(self):
        raw = "Question: [Who left?] Explanation: [The text says so.]"
        assert parse_qe_pairs(raw) == [("Who left?", "The text says so.")]

    def test_multiline_explanation(self):
        raw = "Question: Why?\nExplanation: line one\nline two\nQuestion: And? Explanation: tail."
        pairs = parse_qe_pairs(raw)
        assert pairs[0] == ("Why?", "line one\nline two")
        assert pairs[1] == ("And?", "tail.")

    def test_empty_input(self):
        assert parse_qe_pairs("") == []

    @given(
        st.lists(
            st.tuples(
                st.text(
                    alphabet=st.characters(whitelist_categories=("L", "N")),
                    min_size=1, max_size=20,
                ),
                st.text(
                    alphabet=st.characters(whitelist_categories=("L", "N")),
                    min_size=1, max_size=20,
                ),
            ),
            min_size=0, max_size=6,
        )
    )
    @settings(max_examples=200)
    def test_idempotent_over_reserialization(self, pairs):
        rendered = "\n".join(f"Question: {q} Explanation: {e}" for q, e in pairs)
        once = parse_qe_pairs(rendered)
        again = parse_qe_pairs(
            "\n".join(f"Question: {q} Explanation: {e}" for q, e in once)
        )
        assert once == again
        assert once == [(q.strip(), e.strip()) for q, e in pairs]


RECORD = ContextRecord(
    id="ctx-1", source="custom",
    text="Lucius Harney becomes Mr. Royall's boarder.",
)
ENTITY = EntityCandidate(
    kind="noun_phrase", text="Lucius Harney", sentence_index=0,
    span=(0, 13), sentence_span=(0, 44),
)
TRIPLE = RelationTriple(
    entity1="Lucius Harney", relation="becomes", entity2="Mr. Royall's boarder",
    explanation="stated directly", source_context_id="ctx-1",
)

FIVE_PAIRS = "\n".join(
    f"Question: Entity question number {i} about the boarder? Explanation: "
    f"The answer is Lucius Harney as stated."
    for i in range(1, 6)
)


class TestGenEntityQuestions:
    def test_five_pairs_to_five_candidates(self):
        gw = mock_gateway(rules=[("Word or phrase: Lucius Harney", [FIVE_PAIRS])])
        cands = gen_entity_questions(RECORD, ENTITY, gw, model_id="m")
        assert len(cands) == 5
        assert all(c.gold_answer == "Lucius Harney" for c in cands)
        assert all(c.kind == "entity" for c in cands)
        assert all(c.context_id == "ctx-1" for c in cands)

    def test_malformed_pairs_dropped(self):
        raw = (
            "Question: Good one with enough words? Explanation: fine.\n"
            "Question: missing explanation marker\n"
            "Question: Another good one here? Explanation: also fine.\n"
            "Explanation: orphan\n"
            "Question: Third good question text? Explanation: ok."
        )
        gw = mock_gateway(rules=[("Word or phrase:", [raw])])
        cands = gen_entity_questions(RECORD, ENTITY, gw, model_id="m")
        assert len(cands) == 3

    def test_empty_response(self):
        gw = mock_gateway(rules=[("Word or phrase:", [""])])
        assert gen_entity_questions(RECORD, ENTITY, gw, model_id="m") == []

    def test_prompt_carries_sentence_and_context(self):
        gw = mock_gateway(rules=[("Word or phrase:", [""])])
        gen_entity_questions(RECORD, ENTITY, gw, model_id="m")
        # inspect via mock: single rule consumed once
        assert gw.chat_provider.call_count == 1


class TestGenRelationQuestions:
    def test_ten_pairs(self):
        raw = "\n".join(
            f"Question: Relation question number {i} mentioning both entities? "
            f"Explanation: The relation is becomes."
            for i in range(1, 11)
        )
        gw = mock_gateway(rules=[("Triple: [Lucius Harney, becomes,", [raw])])
        cands = gen_relation_questions(RECORD, TRIPLE, gw, model_id="m")
        assert len(cands) == 10
        assert all(c.gold_answer == "becomes" for c in cands)
        assert all(c.answer.triple is TRIPLE for c in cands)

    def test_candidate_omitting_entity_still_emitted(self):
        # rejection happens in validation, not here
        raw = "Question: What happens to Lucius Harney eventually? Explanation: becomes."
        gw = mock_gateway(rules=[("Triple:", [raw])])
        cands = gen_relation_questions(RECORD, TRIPLE, gw, model_id="m")
        assert len(cands) == 1

    def test_empty_response(self):
        gw = mock_gateway(rules=[("Triple:", [""])])
        assert gen_relation_questions(RECORD, TRIPLE, gw, model_id="m") == []


class TestPayloadInvariants:
    def test_relation_payload_requires_matching_gold(self):
        with pytest.raises(ValueError):
            AnswerPayload(gold_answer="other", payload_kind="relation", triple=TRIPLE)

    def test_relation_payload_requires_triple(self):
        with pytest.raises(ValueError):
            AnswerPayload(gold_answer="x", payload_kind="relation")

    def test_candidate_requires_nonempty_fields(self):
        payload = AnswerPayload(gold_answer="x", payload_kind="entity")
        with pytest.raises(ValueError):
            CandidateTest(context_id="c", kind="entity", answer=payload,
                          question="", explanation="e")

    def test_generation_leaves_inputs_untouched(self):
        gw = mock_gateway(rules=[("Word or phrase:", [FIVE_PAIRS])])
        before = (RECORD.text, ENTITY.text, ENTITY.span)
        gen_entity_questions(RECORD, ENTITY, gw, model_id="m")
        assert (RECORD.text, ENTITY.text, ENTITY.span) == before
