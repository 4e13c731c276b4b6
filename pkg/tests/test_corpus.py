import json
import os

import pytest

from qaprobe import corpus
from qaprobe.errors import DataError


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestBoolq:
    def test_direct_field_mapping(self, tmp_path):
        path = tmp_path / "boolq.jsonl"
        write_lines(path, [json.dumps({"question": "is x true", "passage": "X is true.", "answer": True})])
        loaded = corpus.load_boolq(path)
        assert len(loaded) == 1
        rec = loaded.records[0]
        assert rec.text == "X is true."
        assert rec.seed_qas == (corpus.SeedQA(question="is x true", answer="yes"),)
        assert rec.source == "boolq"

    def test_false_maps_to_no(self, tmp_path):
        path = tmp_path / "boolq.jsonl"
        write_lines(path, [json.dumps({"question": "q", "passage": "p", "answer": False})])
        assert corpus.load_boolq(path).records[0].seed_qas[0].answer == "no"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "boolq.jsonl"
        path.write_text("", encoding="utf-8")
        assert len(corpus.load_boolq(path)) == 0

    def test_malformed_lines_reported_with_line_number(self, tmp_path):
        path = tmp_path / "boolq.jsonl"
        good = json.dumps({"question": "q", "passage": "p", "answer": True})
        write_lines(path, [good, "{not json", good, json.dumps({"question": "q"}), good])
        loaded = corpus.load_boolq(path)
        assert len(loaded) == 3
        assert len(loaded.issues) == 2
        assert {i.location for i in loaded.issues} == {"boolq.jsonl:2", "boolq.jsonl:4"}

    def test_missing_file_is_fatal(self, tmp_path):
        with pytest.raises(DataError):
            corpus.load_boolq(tmp_path / "nope.jsonl")


class TestSquad2:
    @staticmethod
    def payload():
        return {
            "data": [
                {
                    "title": "T",
                    "paragraphs": [
                        {
                            "context": "Paris is the capital of France.",
                            "qas": [
                                {
                                    "question": "What is the capital?",
                                    "answers": [{"text": "Paris", "answer_start": 0}],
                                    "is_impossible": False,
                                },
                                {
                                    "question": "Who is the king?",
                                    "answers": [],
                                    "is_impossible": True,
                                },
                            ],
                        }
                    ],
                },
                {"title": "Empty", "paragraphs": []},
            ]
        }

    def test_paragraph_mapping_and_no_answer(self, tmp_path):
        path = tmp_path / "squad.json"
        path.write_text(json.dumps(self.payload()), encoding="utf-8")
        loaded = corpus.load_squad2(path)
        assert len(loaded) == 1  # article with zero paragraphs contributes none
        rec = loaded.records[0]
        assert len(rec.seed_qas) == 2
        assert rec.seed_qas[0].answer == "Paris"
        assert rec.seed_qas[1].answer == corpus.NO_ANSWER
        assert corpus.NO_ANSWER == "⟨No Answer⟩"

    def test_missing_keys_name_the_path(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"data": [{"paragraphs": [{"qas": []}]}]}),
                        encoding="utf-8")
        with pytest.raises(DataError, match=r"data\[0\].paragraphs\[0\]"):
            corpus.load_squad2(path)

    @pytest.mark.skipif(
        "SQUAD2_DEV_PATH" not in os.environ,
        reason="set SQUAD2_DEV_PATH to the official dev file to run",
    )
    def test_official_dev_seed_qa_count(self):
        loaded = corpus.load_squad2(os.environ["SQUAD2_DEV_PATH"])
        assert loaded.seed_qa_count() == 11_873


class TestNarrativeqa:
    def test_rows_group_by_document(self, tmp_path):
        path = tmp_path / "nqa.csv"
        path.write_text(
            "document_id,summary,question,answers\n"
            'd1,"A short summary.","Who?","Bob"\n'
            'd1,"A short summary.","Where?","Home"\n'
            'd2,,"What?","x"\n',
            encoding="utf-8",
        )
        loaded = corpus.load_narrativeqa(path)
        assert len(loaded) == 1
        assert len(loaded.records[0].seed_qas) == 2
        assert len(loaded.issues) == 1  # d2 has no summary

    def test_empty_table(self, tmp_path):
        path = tmp_path / "nqa.csv"
        path.write_text("document_id,summary,question,answers\n", encoding="utf-8")
        assert len(corpus.load_narrativeqa(path)) == 0

    @pytest.mark.skipif(
        "NARRATIVEQA_TEST_PATH" not in os.environ,
        reason="set NARRATIVEQA_TEST_PATH to the official test split to run",
    )
    def test_official_test_seed_qa_count(self):
        loaded = corpus.load_narrativeqa(os.environ["NARRATIVEQA_TEST_PATH"])
        assert loaded.seed_qa_count() == 3_461


class TestCustom:
    def test_load_and_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [json.dumps({"id": "a", "text": "Alpha."}),
                           json.dumps({"id": "a", "text": "Beta."})])
        with pytest.raises(DataError, match="duplicate record id"):
            corpus.load_custom(path)

    def test_text_is_nfc_normalized(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_lines(path, [json.dumps({"id": "a", "text": "Café one.\r\nTwo."})])
        rec = corpus.load_custom(path).records[0]
        assert rec.text == "Café one.\nTwo."


class TestSample:
    @staticmethod
    def make(n):
        records = tuple(
            corpus.ContextRecord(id=f"r{i}", source="custom", text=f"Text {i}.")
            for i in range(n)
        )
        return corpus.Corpus(
            records=records,
            provenance=corpus.Provenance(source_path="mem", loader="custom"),
        )

    def test_zero(self):
        assert len(corpus.sample(self.make(5), 0, seed=1)) == 0

    def test_n_at_least_size_keeps_order(self):
        full = self.make(4)
        out = corpus.sample(full, 10, seed=1)
        assert [r.id for r in out.records] == ["r0", "r1", "r2", "r3"]

    def test_deterministic(self):
        full = self.make(50)
        a = corpus.sample(full, 10, seed=7)
        b = corpus.sample(full, 10, seed=7)
        assert [r.id for r in a.records] == [r.id for r in b.records]
        c = corpus.sample(full, 10, seed=8)
        assert [r.id for r in a.records] != [r.id for r in c.records]

    def test_subset_preserves_relative_order(self):
        full = self.make(30)
        out = corpus.sample(full, 12, seed=3)
        ids = [int(r.id[1:]) for r in out.records]
        assert ids == sorted(ids)


def test_reload_identical(tmp_path):
    path = tmp_path / "c.jsonl"
    rows = [json.dumps({"id": f"r{i}", "text": f"Some text {i}."}) for i in range(5)]
    write_lines(path, rows)
    first = corpus.load_custom(path)
    second = corpus.load_custom(path)
    assert first.records == second.records
