"""Versioned catalog of every prompt the harness sends to a chat model.

Prompt text lives here, and only here, so that reports can stamp the
catalog version and reviewers can audit exactly what was sent.
"""

from __future__ import annotations

CATALOG_VERSION = "1.0"

RELATION_EXTRACTION = """\
Extract relationships between noun entities in the text and provide clear explanations.
Rules:
1. Ensure that extraction results are explicit and unambiguous. If a pronoun (e.g., he, she) appears in a triple, replace it with the corresponding noun.
2. Reasoning about implicit relationships between entities based on the text is allowed. Extract as many relation triples as possible.
3. The extracted relation should be a content verb or noun, rather than a linking verb (e.g., is, are, have). Separate each triple with a comma, and ensure the two entities in a triple are not identical.
Example: Text: Lucius Harney becomes Mr. Royall's boarder.
Relation: [Lucius Harney, becomes, Mr. Royall's boarder.]
Explanation: The text states directly that Lucius Harney becomes the boarder of Mr. Royall.

Text: {context}
"""

ENTITY_QUESTIONS = """\
Design at least {count} questions focused on a specific word or phrase within the sentence. Ensure that the answer to each question is exactly that word or phrase, and provide a clear explanation for each question.
Requirements:
1. Each question should be precise enough to avoid ambiguity and guarantee a single, unique answer.
2. To enhance complexity, you may incorporate additional contextual details. Each question must exceed 25 characters in length.
3. The questions should be phrased naturally, as if posed by a human.
Example Format:
Question: [...] Explanation: [...]

Word or phrase: {answer}
Sentence: {sentence}
Context: {context}
"""

# Worked demonstrations for the relation setting; the relation task is the
# harder one, so the request carries both the format and reasoning examples.
RELATION_FEW_SHOT = """\
Triple: [Marie Curie, discovered, radium]
Context: Marie Curie discovered radium in 1898 while working in Paris.
Question: What did Marie Curie famously do with radium in 1898? Explanation: The context says Marie Curie discovered radium, so the relation "discovered" answers what she did with it, and the question names both Marie Curie and radium without stating the relation.
Question: In 1898, what achievement connects Marie Curie to radium? Explanation: The achievement linking Marie Curie and radium in the context is that she discovered it, so "discovered" is the unique answer.
"""

RELATION_QUESTIONS = """\
Design at least {count} questions based on relation triples in the format [Entity1, Relation, Entity2], and provide explanations for each.
Requirements:
1. The answer must be the relation described in the triple.
2. The explanation should be strictly derived from the content of the question.
3. Each question must mention both Entity1 and Entity2, but should not directly state the relation.
4. The question should be sufficiently specific to ensure a unique answer.
Example Format:
Question: [...] Explanation: [...]

Examples:
{few_shot}
Triple: [{entity1}, {relation}, {entity2}]
Context: {context}
"""

REASK = """\
Given the provided context and question, output the answer.
Requirements:
1. Output strictly the answer, with no additional content.
2. Ensure that the answer is precise and unambiguous.

Context: {context}
Question: {question}
"""

CONSISTENCY_JUDGE = """\
Given the context and question, evaluate the consistency between gold_answer and sut_answer (the answer generated by the system under test).
Evaluation Criteria:
1. The answers exhibit high semantic similarity.
2. Both answers refer to the same information.
3. The content of gold_answer is contained in sut_answer, and the entirety of sut_answer appears explicitly in the context.
Scoring Guidelines:
- If the above criteria are met, the answers are considered consistent and should receive a high score.
- The score ranges from 0 (inconsistent) to 100 (fully consistent).
- Each scoring result must include an explanation in the following format:
"[score] \\n [explanation]"

Context: {context}
Question: {question}
gold_answer: {gold}
sut_answer: {sut}
"""

# The three metric prompts below are reconstructions written for this
# harness (catalog-versioned); they are not verbatim from any upstream
# source, unlike the generation and judging prompts above.

COVERAGE_MATCH = """\
You are given a context passage and a numbered list of questions about it.
For each question, return the single verbatim segment of the context that the
question addresses. Copy the segment exactly, character for character, from
the context. If a question addresses no part of the context, return NONE.
Output exactly one line per question in the form:
<question number>: <verbatim segment or NONE>

Context: {context}
Questions:
{questions}
"""

NATURALNESS = """\
Score the question below against its source context on three criteria, each
on a 0-5 scale:
CR1 Natural Phrasing: whether the question is phrased the way a human would
naturally ask it. 5 = fully fluent and idiomatic; 3 = understandable but
awkward; 0 = garbled or machine-like.
CR2 Topical Clarity: whether the question has one clear, focused topic.
5 = a single unambiguous topic; 3 = somewhat diffuse; 0 = multiple unrelated
topics or no discernible topic.
CR3 Contextual Grounding: whether the answer and the main subject of the
question appear within the provided context. 5 = both clearly present;
3 = partially grounded; 0 = not grounded in the context at all.
Output exactly three lines:
CR1: <score>
CR2: <score>
CR3: <score>
Then one line of rationale.

Context: {context}
Question: {question}
"""

HALLUCINATION_CLASSIFY = """\
A question was generated from the context below with the intended answer
given. Classify the question into exactly one category:
- content_violation: the question introduces facts, entities, or
  relationships that do not appear in the context, or misrepresents the
  context (wrong causality, contradiction, reliance on outside knowledge).
- instructional_violation: the question breaks the generation constraints,
  such as stating or implying its own answer, asking beyond the context, or
  being incomplete or unfocused.
- none: the question is faithful to the context and the constraints.
Output the category name on the first line, then one line of rationale.

Context: {context}
Intended answer: {answer}
Question: {question}
"""
