"""Two-stage adjudication of SUT answers against the mined gold answer.

Stage 1 compares embeddings; an answer clearing the similarity threshold
passes outright and never reaches the judge. Only when stage 1 finds the
answers inconsistent does a chat-model judge score them in context, and
only when the judge also scores below its cutoff is a defect declared.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional

from . import prompts
from .corpus import ContextRecord
from .errors import InputError, ProviderError
from .gateway import ChatRequest, Gateway
from .sut import SutAnswer
from .textnorm import normalize_answer
from .validation import TestCase

logger = logging.getLogger(__name__)

OUTCOME_PASS = "pass"
OUTCOME_DEFECT = "defect"
OUTCOME_INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class JudgeResult:
    score: int
    explanation: str
    raw: str

    def __post_init__(self):
        if not (0 <= self.score <= 100):
            raise ValueError(f"judge score {self.score} outside [0, 100]")


@dataclass(frozen=True)
class Verdict:
    outcome: str
    stage1_similarity: float
    stage2: Optional[JudgeResult]
    test_ref: str

    def __post_init__(self):
        if self.outcome not in (OUTCOME_PASS, OUTCOME_DEFECT, OUTCOME_INCONCLUSIVE):
            raise ValueError(f"unknown outcome {self.outcome!r}")


_BOOLEAN_FORMS = {
    "true": "yes",
    "yes": "yes",
    "y": "yes",
    "false": "no",
    "no": "no",
    "n": "no",
}


def canonicalize_boolean(text: str) -> str:
    """Map boolean surface forms onto "yes"/"no"; other text is untouched."""
    return _BOOLEAN_FORMS.get(normalize_answer(text), text)


def stage1_similarity(gold: str, sut: str, gateway: Gateway) -> float:
    return gateway.similarity(normalize_answer(gold), normalize_answer(sut))


_FIRST_INT_RE = re.compile(r"-?\d+")


def _parse_judge(raw: str) -> tuple[int, str] | None:
    lines = raw.strip().splitlines()
    if not lines:
        return None
    head = lines[0].strip().strip("[]")
    rest = "\n".join(lines[1:]).strip().strip("[]").strip()
    match = _FIRST_INT_RE.fullmatch(head)
    if match:
        return int(head), rest
    # lenient fallback: first integer anywhere in the response
    match = _FIRST_INT_RE.search(raw)
    if match:
        return int(match.group()), raw.strip()
    return None


def stage2_judge(
    context: str,
    question: str,
    gold: str,
    sut: str,
    gateway: Gateway,
    model_id: str,
    max_output: int = 512,
) -> JudgeResult:
    """Score answer consistency 0-100 with the judging prompt.

    The mandated response shape is "[score] \\n [explanation]"; scores
    parsed outside [0, 100] are clamped with a warning, and an
    unparseable response is retried once before giving up.
    """
    prompt = prompts.CONSISTENCY_JUDGE.format(
        context=context, question=question, gold=gold, sut=sut
    )
    last_raw = ""
    for attempt in range(2):
        response = gateway.complete(
            ChatRequest(
                prompt=prompt,
                model_id=model_id,
                temperature=0.0,
                max_output=max_output,
                sample_count=1,
            )
        )
        last_raw = response.texts[0]
        parsed = _parse_judge(last_raw)
        if parsed is not None:
            score, explanation = parsed
            if not (0 <= score <= 100):
                logger.warning("judge score %d clamped into [0, 100]", score)
                score = min(100, max(0, score))
            return JudgeResult(score=score, explanation=explanation, raw=last_raw)
        logger.warning("unparseable judge response (attempt %d)", attempt + 1)
    raise InputError(f"judge response unparseable after retry: {last_raw[:120]!r}")


def adjudicate(
    test: TestCase,
    sut_answer: SutAnswer,
    context: ContextRecord,
    gateway: Gateway,
    judge_model_id: str,
    stage1_threshold: float = 0.75,
    judge_threshold: int = 50,
) -> Verdict:
    """Apply the two-stage rule; a defect needs both stages to disagree.

    BoolQ-style contexts first map boolean surface variants onto
    "yes"/"no" so they do not flood stage 2.
    """
    gold = test.gold_answer
    sut_text = sut_answer.text
    if context.source == "boolq":
        gold = canonicalize_boolean(gold)
        sut_text = canonicalize_boolean(sut_text)
    try:
        similarity = stage1_similarity(gold, sut_text, gateway)
    except (ProviderError, InputError) as exc:
        logger.warning("stage 1 inconclusive for %s: %s", test.digest(), exc)
        return Verdict(
            outcome=OUTCOME_INCONCLUSIVE,
            stage1_similarity=float("nan"),
            stage2=None,
            test_ref=test.digest(),
        )
    if similarity >= stage1_threshold:
        return Verdict(
            outcome=OUTCOME_PASS,
            stage1_similarity=similarity,
            stage2=None,
            test_ref=test.digest(),
        )
    try:
        judged = stage2_judge(
            context.text,
            test.question,
            test.gold_answer,
            sut_answer.text,
            gateway,
            model_id=judge_model_id,
        )
    except (ProviderError, InputError) as exc:
        logger.warning("stage 2 inconclusive for %s: %s", test.digest(), exc)
        return Verdict(
            outcome=OUTCOME_INCONCLUSIVE,
            stage1_similarity=similarity,
            stage2=None,
            test_ref=test.digest(),
        )
    outcome = OUTCOME_PASS if judged.score >= judge_threshold else OUTCOME_DEFECT
    return Verdict(
        outcome=outcome,
        stage1_similarity=similarity,
        stage2=judged,
        test_ref=test.digest(),
    )


def verdict_to_dict(v: Verdict, sut_identity: str, stage1_threshold: float,
                    judge_threshold: int) -> dict:
    row = {
        "test_ref": v.test_ref,
        "outcome": v.outcome,
        "stage1_similarity": v.stage1_similarity,
        "sut_identity": sut_identity,
        "thresholds": {"stage1": stage1_threshold, "judge": judge_threshold},
    }
    if v.stage2 is not None:
        row["stage2_score"] = v.stage2.score
        row["stage2_explanation"] = v.stage2.explanation
    return row
