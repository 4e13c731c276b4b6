import math

import pytest

from qaprobe.corpus import ContextRecord
from qaprobe.errors import InputError
from qaprobe.gateway import Gateway, MockChatProvider, MockRule, ScriptedEmbedder
from qaprobe.oracle import (
    JudgeResult,
    Verdict,
    adjudicate,
    canonicalize_boolean,
    stage2_judge,
)
from qaprobe.sut import SutAnswer
from qaprobe.validation import TestCase

from helpers import mock_gateway

RECORD = ContextRecord(id="c1", source="custom", text="Some context text here.")
BOOLQ_RECORD = ContextRecord(id="b1", source="boolq", text="Some passage.")


def make_test(gold="gold"):
    return TestCase(context_id="c1", question="A question longer than needed?",
                    gold_answer=gold, kind="entity")


def sut_answer(text):
    return SutAnswer(text=text, latency_ms=1.0, sut_identity="mock-sut/1")


def stub_gateway(similarity, judge_score=None):
    """Gateway whose stage-1 cosine between 'gold' and 'sut' is `similarity`."""
    table = {
        "gold": (1.0, 0.0),
        "sut": (similarity, math.sqrt(1 - similarity**2)),
    }
    rules = []
    if judge_score is not None:
        rules.append(MockRule(contains="sut_answer:",
                              responses=[f"{judge_score}\nscripted rationale"]))
    return Gateway(
        chat_provider=MockChatProvider(rules),
        embedding_provider=ScriptedEmbedder(table, dimension=2),
        cache=None,
        retry_base_delay=0.0,
    )


class TestJudgeParsing:
    def test_mandated_format(self):
        gw = mock_gateway(rules=[("sut_answer:", ["95\nSame referent."])])
        result = stage2_judge("ctx", "q?", "a", "b", gw, model_id="m")
        assert result.score == 95
        assert result.explanation == "Same referent."

    def test_zero_score(self):
        gw = mock_gateway(rules=[("sut_answer:", ["0\nContradictory."])])
        assert stage2_judge("ctx", "q?", "a", "b", gw, model_id="m").score == 0

    def test_lenient_number_extraction(self):
        gw = mock_gateway(rules=[("sut_answer:", ["consistent (score 88)"])])
        assert stage2_judge("ctx", "q?", "a", "b", gw, model_id="m").score == 88

    def test_bracketed_format(self):
        gw = mock_gateway(rules=[("sut_answer:", ["[72]\n[close enough]"])])
        result = stage2_judge("ctx", "q?", "a", "b", gw, model_id="m")
        assert result.score == 72
        assert result.explanation == "close enough"

    def test_out_of_range_clamped(self):
        gw = mock_gateway(rules=[("sut_answer:", ["150\ntoo sure"])])
        assert stage2_judge("ctx", "q?", "a", "b", gw, model_id="m").score == 100

    def test_unparseable_retries_once_then_fails(self):
        gw = mock_gateway(rules=[("sut_answer:", ["no digits here"])])
        with pytest.raises(InputError):
            stage2_judge("ctx", "q?", "a", "b", gw, model_id="m")
        assert gw.chat_provider.call_count == 2

    def test_judge_result_range_enforced(self):
        with pytest.raises(ValueError):
            JudgeResult(score=101, explanation="", raw="")


class TestAdjudicate:
    def adjudicate(self, gw):
        return adjudicate(make_test(), sut_answer("sut"), RECORD, gw,
                          judge_model_id="m", stage1_threshold=0.75, judge_threshold=50)

    def test_stage1_pass_short_circuits(self):
        gw = stub_gateway(similarity=0.9)
        verdict = self.adjudicate(gw)
        assert verdict.outcome == "pass"
        assert verdict.stage2 is None
        assert gw.chat_provider.call_count == 0

    def test_low_similarity_high_judge_passes(self):
        verdict = self.adjudicate(stub_gateway(similarity=0.3, judge_score=80))
        assert verdict.outcome == "pass"
        assert verdict.stage2.score == 80

    def test_defect_only_when_both_inconsistent(self):
        verdict = self.adjudicate(stub_gateway(similarity=0.3, judge_score=10))
        assert verdict.outcome == "defect"
        assert verdict.stage1_similarity < 0.75
        assert verdict.stage2.score < 50

    def test_truth_table_single_defect_cell(self):
        outcomes = {}
        for sim in (0.3, 0.9):
            for score in (10, 80):
                gw = stub_gateway(similarity=sim, judge_score=score)
                verdict = self.adjudicate(gw)
                outcomes[(sim, score)] = verdict.outcome
        assert outcomes == {
            (0.3, 10): "defect",
            (0.3, 80): "pass",
            (0.9, 10): "pass",
            (0.9, 80): "pass",
        }

    def test_judge_failure_is_inconclusive(self):
        gw = stub_gateway(similarity=0.3)  # no judge rule scripted
        gw.chat_provider.default = None
        from qaprobe.errors import MockScriptError

        with pytest.raises(MockScriptError):
            self.adjudicate(gw)
        # an unparseable judge is inconclusive rather than an error
        gw2 = stub_gateway(similarity=0.3, judge_score=None)
        gw2.chat_provider.rules.append(
            MockRule(contains="sut_answer:", responses=["garbled"]))
        verdict = self.adjudicate(gw2)
        assert verdict.outcome == "inconclusive"

    def test_embedding_failure_is_inconclusive(self):
        gw = mock_gateway(embedder=ScriptedEmbedder({}, dimension=2))
        from qaprobe.errors import MockScriptError

        # ScriptedEmbedder with empty table raises MockScriptError, which is
        # not a provider error; wrap in a stub raising InputError instead
        class BadEmbedder:
            name = "bad"
            model_id = "bad"
            dimension = 2

            def embed(self, text):
                raise InputError("no embedding")

        gw = mock_gateway(embedder=BadEmbedder())
        verdict = self.adjudicate(gw)
        assert verdict.outcome == "inconclusive"
        assert math.isnan(verdict.stage1_similarity)


class TestBooleanCanonicalizer:
    @pytest.mark.parametrize(
        "raw, expected",
        [("true", "yes"), ("True.", "yes"), ("YES", "yes"), ("false", "no"),
         ("No!", "no"), ("Paris", "Paris")],
    )
    def test_mapping(self, raw, expected):
        assert canonicalize_boolean(raw) == expected

    def test_boolq_surface_variants_pass_stage1(self):
        test = TestCase(context_id="b1", question="Long enough boolean question?",
                        gold_answer="yes", kind="entity")
        gw = mock_gateway()  # hashing embedder: "yes" vs canonicalized "true" -> "yes"
        verdict = adjudicate(test, sut_answer("True."), BOOLQ_RECORD, gw,
                             judge_model_id="m")
        assert verdict.outcome == "pass"
        assert verdict.stage1_similarity == pytest.approx(1.0, abs=1e-9)


def test_verdict_outcome_validated():
    with pytest.raises(ValueError):
        Verdict(outcome="maybe", stage1_similarity=0.5, stage2=None, test_ref="x")
