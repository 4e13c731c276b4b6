"""Command-line entry points.

Exit codes: 0 success, 2 config error, 3 provider error, 4 data error,
1 anything else. Failures print one machine-readable JSON object on
stderr.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from . import harness
from .config import RunConfig
from .errors import ConfigError, QaprobeError
from .generation import candidate_from_dict, candidate_to_dict
from .metrics import classify_hallucination, compute_coverage, score_naturalness
from .validation import load_test_case, validate

logger = logging.getLogger(__name__)


def _fail(exc: Exception) -> int:
    code = getattr(exc, "exit_code", 1)
    payload = {"error": {"type": type(exc).__name__, "message": str(exc), "code": code}}
    click.echo(json.dumps(payload), err=True)
    return code


def common_options(fn):
    @click.option("--config", "config_path", required=True, type=click.Path(),
                  help="Path to the run config (YAML or JSON).")
    @click.option("--cache-dir", default=None, type=click.Path(),
                  help="Override the response cache directory.")
    @click.option("--workers", default=None, type=int, help="Override worker count.")
    @click.option("--mock-providers", "mock_dir", default=None, type=click.Path(),
                  help="Directory with scripted chat.json (and sut.json).")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def _load_config(config_path, cache_dir, workers) -> RunConfig:
    cfg = RunConfig.from_file(config_path)
    if cache_dir:
        cfg.cache_dir = cache_dir
    if workers:
        cfg.workers = workers
    return cfg.validate()


def _build_adapter(cfg: RunConfig, mock_dir):
    if mock_dir and (Path(mock_dir) / "sut.json").exists():
        from .sut import MockSutAdapter

        return MockSutAdapter.from_file(Path(mock_dir) / "sut.json")
    return harness.build_adapter(cfg)


@click.group()
def main():
    """Generate, validate and adjudicate QA test cases from contexts."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@common_options
@click.option("--out", "out_path", default="answers.jsonl", type=click.Path())
def extract(config_path, cache_dir, workers, mock_dir, out_path):
    """Mine entities and relation triples from the configured corpus."""
    try:
        cfg = _load_config(config_path, cache_dir, workers)
        gateway = harness.build_gateway(cfg, mock_dir=mock_dir)
        backend = harness.build_syntax_backend(cfg)
        loaded = harness.load_corpus(cfg)
        from .extraction import extract_entities, extract_relations
        from .syntax import parse_context

        with open(out_path, "w", encoding="utf-8") as fh:
            for record in loaded:
                sentences = parse_context(record, backend)
                for entity in extract_entities(sentences, record):
                    fh.write(json.dumps({
                        "context_id": record.id, "kind": entity.kind,
                        "text": entity.text, "sentence_index": entity.sentence_index,
                        "span": list(entity.span),
                        "sentence_span": list(entity.sentence_span),
                    }, ensure_ascii=False) + "\n")
                for t in extract_relations(
                    record, gateway, model_id=cfg.provider.chat_model,
                    temperature=cfg.provider.extraction_temperature,
                ):
                    fh.write(json.dumps({
                        "context_id": record.id, "kind": "relation",
                        "entity1": t.entity1, "relation": t.relation,
                        "entity2": t.entity2, "explanation": t.explanation,
                    }, ensure_ascii=False) + "\n")
        click.echo(f"wrote {out_path}")
    except QaprobeError as exc:
        sys.exit(_fail(exc))


@main.command()
@common_options
@click.option("--answers", "answers_path", required=True, type=click.Path(),
              help="JSONL produced by `extract`.")
@click.option("--out", "out_path", default="candidates.jsonl", type=click.Path())
def generate(config_path, cache_dir, workers, mock_dir, answers_path, out_path):
    """Generate candidate questions for previously mined answers."""
    try:
        cfg = _load_config(config_path, cache_dir, workers)
        gateway = harness.build_gateway(cfg, mock_dir=mock_dir)
        loaded = harness.load_corpus(cfg)
        records = loaded.by_id()
        from .extraction import EntityCandidate, RelationTriple
        from .generation import gen_entity_questions, gen_relation_questions

        with open(answers_path, encoding="utf-8") as fh, \
                open(out_path, "w", encoding="utf-8") as out:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                record = records.get(row["context_id"])
                if record is None:
                    logger.warning("unknown context id %s", row["context_id"])
                    continue
                if row["kind"] == "relation":
                    triple = RelationTriple(
                        entity1=row["entity1"], relation=row["relation"],
                        entity2=row["entity2"],
                        explanation=row.get("explanation", ""),
                        source_context_id=row["context_id"],
                    )
                    cands = gen_relation_questions(
                        record, triple, gateway, model_id=cfg.provider.chat_model,
                        count=cfg.relation_question_count,
                        temperature=cfg.provider.generation_temperature,
                    )
                else:
                    entity = EntityCandidate(
                        kind=row["kind"], text=row["text"],
                        sentence_index=row["sentence_index"],
                        span=tuple(row["span"]),
                        sentence_span=tuple(row.get("sentence_span", row["span"])),
                    )
                    cands = gen_entity_questions(
                        record, entity, gateway, model_id=cfg.provider.chat_model,
                        count=cfg.entity_question_count,
                        temperature=cfg.provider.generation_temperature,
                    )
                for cand in cands:
                    out.write(json.dumps(candidate_to_dict(cand), ensure_ascii=False) + "\n")
        click.echo(f"wrote {out_path}")
    except QaprobeError as exc:
        sys.exit(_fail(exc))


@main.command(name="validate")
@common_options
@click.option("--in", "in_path", required=True, type=click.Path(),
              help="Candidates JSONL to validate.")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Write accepted tests here (JSONL).")
def validate_cmd(config_path, cache_dir, workers, mock_dir, in_path, out_path):
    """Filter candidates; the validation report goes to stdout as JSON."""
    try:
        cfg = _load_config(config_path, cache_dir, workers)
        gateway = harness.build_gateway(cfg, mock_dir=mock_dir)
        loaded = harness.load_corpus(cfg)
        candidates = []
        with open(in_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    candidates.append(candidate_from_dict(json.loads(line)))
        tests, report = validate(
            candidates, loaded.by_id(), gateway,
            model_id=cfg.provider.chat_model,
            threshold=cfg.thresholds.consistency,
            k=cfg.reask_k,
            reask_temperature=cfg.provider.reask_temperature,
            denied=cfg.deny_set(),
        )
        if out_path:
            from .validation import dump_test_case

            with open(out_path, "w", encoding="utf-8") as fh:
                for t in tests:
                    fh.write(json.dumps(dump_test_case(t), ensure_ascii=False) + "\n")
        click.echo(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))
    except QaprobeError as exc:
        sys.exit(_fail(exc))


@main.command(name="test")
@common_options
@click.option("--dry-run", is_flag=True, default=False,
              help="Plan stage counts and call budget; no provider calls.")
def test_cmd(config_path, cache_dir, workers, mock_dir, dry_run):
    """Run the full pipeline: extract, generate, validate, query, adjudicate."""
    try:
        cfg = _load_config(config_path, cache_dir, workers)
        if dry_run:
            loaded = harness.load_corpus(cfg)
            budget = harness.estimate_budget(cfg, n_contexts=len(loaded))
            click.echo(json.dumps(budget, indent=2))
            return
        adapter = _build_adapter(cfg, mock_dir)
        result = harness.run_pipeline(cfg, adapter, mock_dir=mock_dir)
        click.echo(json.dumps(result.report.to_dict(), indent=2, ensure_ascii=False,
                              sort_keys=True))
        if result.report.incomplete:
            sys.exit(3)
    except QaprobeError as exc:
        sys.exit(_fail(exc))


@main.command()
@common_options
@click.option("--tests", "tests_path", required=True, type=click.Path(),
              help="Accepted tests JSONL (from a run's tests.jsonl).")
@click.option("--candidates", "candidates_path", default=None, type=click.Path(),
              help="Optional candidates JSONL for hallucination labels.")
@click.option("--out", "out_path", default="metrics.json", type=click.Path())
@click.option("--csv", "csv_path", default=None, type=click.Path(),
              help="Also write a flat CSV for tabulation.")
@click.option("--max-contexts", default=100, show_default=True, type=int,
              help="Deterministic context sample size for cost control.")
def metrics(config_path, cache_dir, workers, mock_dir, tests_path, candidates_path,
            out_path, csv_path, max_contexts):
    """Coverage, naturalness and hallucination metrics over generated tests."""
    try:
        cfg = _load_config(config_path, cache_dir, workers)
        gateway = harness.build_gateway(cfg, mock_dir=mock_dir)
        loaded = harness.load_corpus(cfg)
        records = loaded.by_id()
        by_context: dict[str, list] = {}
        with open(tests_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                t = load_test_case(json.loads(line))
                by_context.setdefault(t.context_id, []).append(t)
        selected = sorted(by_context)
        if len(selected) > max_contexts:
            import random

            rng = random.Random(cfg.corpus.seed)
            selected = sorted(rng.sample(selected, max_contexts))
        out = {"coverage": [], "naturalness": [], "hallucination": []}
        for context_id in selected:
            tests = by_context[context_id]
            record = records.get(context_id)
            if record is None:
                continue
            cov = compute_coverage(
                record, [t.question for t in tests], gateway,
                model_id=cfg.judge_model,
            )
            out["coverage"].append({
                "context_id": context_id,
                "coverage": cov.coverage,
                "matched_spans": [list(s) for s in cov.matched_spans],
            })
            for t in tests:
                score = score_naturalness(record, t.question, gateway,
                                          model_id=cfg.judge_model)
                out["naturalness"].append({
                    "context_id": context_id,
                    "question": t.question,
                    "scores": None if score is None else {
                        "cr1": score.cr1, "cr2": score.cr2, "cr3": score.cr3,
                        "avg": score.avg,
                    },
                })
        if candidates_path:
            selected_set = set(selected)
            with open(candidates_path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    cand = candidate_from_dict(json.loads(line))
                    record = records.get(cand.context_id)
                    if record is None:
                        continue
                    if by_context and cand.context_id not in selected_set:
                        continue
                    label = classify_hallucination(cand, record, gateway,
                                                   model_id=cfg.judge_model)
                    out["hallucination"].append({
                        "context_id": cand.context_id,
                        "question": cand.question,
                        "label": label.label,
                        "warning": label.warning,
                    })
        Path(out_path).write_text(
            json.dumps(out, indent=2, ensure_ascii=False), encoding="utf-8"
        )
        if csv_path:
            _write_metrics_csv(out, csv_path)
        click.echo(f"wrote {out_path}")
    except QaprobeError as exc:
        sys.exit(_fail(exc))


def _write_metrics_csv(out: dict, csv_path) -> None:
    import csv as csv_mod

    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(["metric", "context_id", "question", "value", "detail"])
        for row in out["coverage"]:
            writer.writerow(["coverage", row["context_id"], "", row["coverage"], ""])
        for row in out["naturalness"]:
            scores = row["scores"]
            value = "" if scores is None else scores["avg"]
            detail = "" if scores is None else (
                f"cr1={scores['cr1']};cr2={scores['cr2']};cr3={scores['cr3']}"
            )
            writer.writerow(["naturalness", row["context_id"], row["question"],
                             value, detail])
        for row in out["hallucination"]:
            writer.writerow(["hallucination", row["context_id"], row["question"],
                             row["label"], "warning" if row["warning"] else ""])


@main.command()
@common_options
@click.option("--tests", "tests_path", required=True, type=click.Path())
@click.option("--sizes", default="10000,1000,1000", show_default=True,
              help="train,val,test sizes.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_dir", default="finetune-out", type=click.Path())
def export(config_path, cache_dir, workers, mock_dir, tests_path, sizes, seed, out_dir):
    """Export deduplicated fine-tune splits from accepted tests."""
    try:
        cfg = _load_config(config_path, cache_dir, workers)
        loaded = harness.load_corpus(cfg)
        tests = []
        with open(tests_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    tests.append(load_test_case(json.loads(line)))
        try:
            parts = tuple(int(s) for s in sizes.split(","))
            if len(parts) != 3:
                raise ValueError
        except ValueError:
            raise ConfigError(f"--sizes must be three comma-separated ints, got {sizes!r}")
        paths = harness.export_finetune(
            tests, loaded.by_id(), sizes=parts, seed=seed, out_dir=out_dir
        )
        click.echo(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    except QaprobeError as exc:
        sys.exit(_fail(exc))


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(),
              help="A run output directory (contains report.json).")
def report(run_dir):
    """Summarize a finished run."""
    try:
        path = Path(run_dir) / "report.json"
        if not path.exists():
            raise ConfigError(f"no report.json under {run_dir}")
        data = json.loads(path.read_text(encoding="utf-8"))
        counts = data["counts"]
        lines = [
            f"run {data['run_id']}  (incomplete: {data['incomplete']})",
            f"  contexts:   {counts['contexts']}",
            f"  entities:   {counts['entities']}  relations: {counts['relations']}",
            f"  candidates: {counts['candidates']}  accepted: {counts['accepted']}",
            f"  verdicts:   pass={counts['passes']} defect={counts['defects']} "
            f"inconclusive={counts['inconclusive']}",
            f"  cache hit rate: {data['cache_hit_rate']:.2%}",
        ]
        click.echo("\n".join(lines))
    except QaprobeError as exc:
        sys.exit(_fail(exc))


if __name__ == "__main__":
    main()
