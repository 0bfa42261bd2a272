"""Batch driver tying the pipeline together.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import synthetic
from .corpus import (
    load_corpus,
    load_splits,
    make_splits,
    save_corpus,
    save_splits,
    validate_splits,
)
from .embedder import HashingEmbedder, default_similarity_embedder, from_id
from .errors import CorpusError, EvidentError, GatewayError
from .evaluation import (
    dataset_histograms,
    evaluate_model,
    evidence_count_ablation,
    multi_seed_eval,
    write_ablation_csv,
    write_histograms_csv,
    write_metrics_csv,
)
from .evidence import default_queries_path, load_evidence, load_queries, save_evidence
from .gateway import CachedBackend, HTTPBackend, MockBackend, load_fixture, save_fixture
from .labeler import ConditionSet, DEFAULT_CONDITIONS, labels_by_patient, load_labels, save_labels
from .nam import TrainConfig, load_model, predict, prior, save_model, train
from .pipeline import (
    PipelineConfig,
    build_examples,
    featurize,
    run_training_pipeline,
    split_all_timelines,
)
from .ranker import mark_duplicates, rank as rank_evidence, save_ranked
from .stablehash import stable_uniform


def _parse_list(value: str, cast=str) -> list:
    return [cast(part.strip()) for part in value.split(",") if part.strip()]


def _parse_seeds(value: str) -> list[int]:
    if ".." in value:
        lo, hi = value.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return _parse_list(value, int)


def _backend(kind: str, fixture: str | None, llm_url: str | None, cache_dir: str | None):
    if kind == "mock":
        if not fixture:
            raise click.UsageError("--backend mock requires --fixture")
        backend = MockBackend(load_fixture(fixture))
    else:
        backend = HTTPBackend(url=llm_url)
    if cache_dir:
        backend = CachedBackend(backend, cache_dir)
    return backend


def _splits_subset(splits: dict[str, list[str]], names: str) -> list[str]:
    ids = []
    for name in _parse_list(names):
        if name not in splits:
            raise CorpusError(f"unknown split {name!r}")
        ids.extend(splits[name])
    return ids


def _subsample_negative_ids(ids, label_sets, rate, seed):
    """Negative subsampling on bare patient ids (evidence files carry no timelines)."""
    if not (0 < rate <= 1):
        raise CorpusError(f"negative rate must be in (0, 1], got {rate}")
    return [
        pid
        for pid in ids
        if label_sets.get(pid) or stable_uniform("subsample", seed, pid) < rate
    ]


@click.group()
def cli() -> None:
    """Interpretable risk prediction over longitudinal clinical notes."""


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", required=True, type=click.Path(exists=True))
def ingest(corpus_path: str, splits_path: str) -> None:
    """Load and validate a corpus and split file."""
    corpus = load_corpus(corpus_path)
    splits = load_splits(splits_path)
    validate_splits(corpus, splits)
    counts = {name: len(ids) for name, ids in splits.items()}
    click.echo(
        json.dumps(
            {
                "patients": len(corpus),
                "reports": sum(len(p.reports) for p in corpus),
                "splits": counts,
            }
        )
    )


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), help="Synthetic spec JSON; defaults to the built-in demo spec.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fixture-out", type=click.Path(), help="Also write the matching mock-backend fixture.")
@click.option("--spec-out", type=click.Path(), help="Write the effective synthetic spec JSON.")
def synth(spec_path: str | None, seed: int, out_path: str, fixture_out: str | None, spec_out: str | None) -> None:
    """Generate a deterministic synthetic corpus."""
    spec = synthetic.load_synthetic_spec(spec_path) if spec_path else synthetic.demo_spec()
    corpus = synthetic.generate_synthetic_corpus(spec, seed)
    save_corpus(corpus, out_path)
    if fixture_out:
        save_fixture(synthetic.gateway_rules(spec), fixture_out)
    if spec_out:
        synthetic.save_synthetic_spec(spec, spec_out)
    click.echo(json.dumps({"patients": len(corpus), "out": out_path}))


@cli.command("make-splits")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fractions", default="0.7,0.1,0.1,0.1", show_default=True, help="train,validation,test,annotation")
@click.option("--seed", type=int, default=0, show_default=True)
def make_splits_cmd(corpus_path: str, out_path: str, fractions: str, seed: int) -> None:
    """Partition patients into train/validation/test/annotation splits."""
    corpus = load_corpus(corpus_path)
    parts = tuple(_parse_list(fractions, float))
    if len(parts) != 4:
        raise click.UsageError("--fractions needs exactly 4 comma-separated values")
    splits = make_splits(corpus, parts, seed=seed)
    save_splits(splits, out_path)
    click.echo(json.dumps({name: len(ids) for name, ids in splits.items()}))


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_names", default="train,validation,test", show_default=True)
@click.option("--queries", "queries_path", type=click.Path(exists=True), help="Defaults to the built-in query set.")
@click.option("--backend", type=click.Choice(["mock", "remote"]), default="mock", show_default=True)
@click.option("--fixture", type=click.Path(exists=True), help="Mock fixture file.")
@click.option("--llm-url", help="Remote backend URL (default: EVIDENT_LLM_URL).")
@click.option("--cache-dir", type=click.Path(), help="Completion cache directory.")
@click.option("--seed", type=int, default=0, show_default=True, help="Past/future split seed.")
@click.option("--max-reports", type=int, default=200, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def retrieve(
    corpus_path: str,
    splits_path: str,
    split_names: str,
    queries_path: str | None,
    backend: str,
    fixture: str | None,
    llm_url: str | None,
    cache_dir: str | None,
    seed: int,
    max_reports: int,
    out_path: str,
) -> None:
    """Run gate/extract retrieval over every (report, query) pair."""
    from .corpus import filter_long_records
    from .evidence import retrieve_for_timeline

    corpus = filter_long_records(load_corpus(corpus_path), max_reports)
    corpus = split_all_timelines(corpus, seed)
    splits = load_splits(splits_path)
    queries = load_queries(queries_path or default_queries_path())
    gateway = _backend(backend, fixture, llm_url, cache_dir)
    in_corpus = {p.patient_id for p in corpus}
    by_patient = {}
    for pid in _splits_subset(splits, split_names):
        if pid not in in_corpus:
            continue
        by_patient[pid] = retrieve_for_timeline(corpus.get(pid), queries, gateway)
    save_evidence(by_patient, out_path)
    click.echo(json.dumps({"patients": len(by_patient), "snippets": sum(len(v) for v in by_patient.values())}))


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_names", default="train,validation,test", show_default=True)
@click.option("--backend", type=click.Choice(["mock", "remote"]), default="mock", show_default=True)
@click.option("--fixture", type=click.Path(exists=True))
@click.option("--llm-url", help="Remote backend URL (default: EVIDENT_LLM_URL).")
@click.option("--cache-dir", type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True, help="Past/future split seed.")
@click.option("--conditions", default=",".join(DEFAULT_CONDITIONS), show_default=True)
@click.option("--threshold", type=float, default=0.85, show_default=True, help="Normalization cosine threshold.")
@click.option("--max-reports", type=int, default=200, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def label(
    corpus_path: str,
    splits_path: str,
    split_names: str,
    backend: str,
    fixture: str | None,
    llm_url: str | None,
    cache_dir: str | None,
    seed: int,
    conditions: str,
    threshold: float,
    max_reports: int,
    out_path: str,
) -> None:
    """Extract confident-diagnosis labels from future reports."""
    from .corpus import filter_long_records
    from .labeler import label_patient

    corpus = filter_long_records(load_corpus(corpus_path), max_reports)
    corpus = split_all_timelines(corpus, seed)
    splits = load_splits(splits_path)
    gateway = _backend(backend, fixture, llm_url, cache_dir)
    targets = ConditionSet(tuple(_parse_list(conditions)))
    sim_embedder = default_similarity_embedder()
    in_corpus = {p.patient_id for p in corpus}
    labels = []
    for pid in _splits_subset(splits, split_names):
        if pid not in in_corpus:
            continue
        labels.extend(
            label_patient(corpus.get(pid).future, targets, gateway, sim_embedder, threshold=threshold)
        )
    save_labels(labels, out_path)
    click.echo(json.dumps({"labels": len(labels)}))


@cli.command("train")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--evidence", "evidence_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", required=True, type=click.Path(exists=True))
@click.option("--conditions", default=",".join(DEFAULT_CONDITIONS), show_default=True)
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--negative-rate", type=float, default=0.2, show_default=True)
@click.option("--embed-dim", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def train_cmd(
    labels_path: str,
    evidence_path: str,
    splits_path: str,
    conditions: str,
    epochs: int,
    lr: float,
    batch_size: int,
    negative_rate: float,
    embed_dim: int,
    seed: int,
    out_path: str,
) -> None:
    """Train the additive risk head on precomputed evidence and labels."""
    splits = load_splits(splits_path)
    evidence = load_evidence(evidence_path)
    label_sets = labels_by_patient(load_labels(labels_path))
    names = tuple(_parse_list(conditions))
    embedder = HashingEmbedder(embed_dim)

    train_ids = [pid for pid in splits["train"] if pid in evidence]
    kept = _subsample_negative_ids(train_ids, label_sets, negative_rate, seed)
    val_ids = [pid for pid in splits["validation"] if pid in evidence]
    train_examples, _ = build_examples(kept, evidence, label_sets, names, embedder)
    val_examples, _ = build_examples(val_ids, evidence, label_sets, names, embedder)
    config = TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size, seed=seed)
    result = train(train_examples, val_examples, names, embedder.spec.embedder_id, config)
    save_model(result, out_path)
    click.echo(
        json.dumps(
            {
                "checkpoints": len(result.history),
                "best_step": result.best_step,
                "best_val_macro_auroc": max(h.val_macro_auroc for h in result.history),
                "out": out_path,
            }
        )
    )


@cli.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--evidence", "evidence_path", required=True, type=click.Path(exists=True))
@click.option("--patient", "patient_id", required=True)
def predict_cmd(model_path: str, evidence_path: str, patient_id: str) -> None:
    """Print aggregate and per-evidence predictions for one patient."""
    model, _ = load_model(model_path)
    embedder = from_id(model.embedder_id)
    evidence = load_evidence(evidence_path)
    snippets = evidence.get(patient_id)
    if snippets is None:
        raise CorpusError(f"no evidence recorded for patient {patient_id!r}")
    features = featurize(snippets, embedder)
    pred = predict(model, features)
    base = prior(model)
    click.echo(
        json.dumps(
            {
                "patient_id": patient_id,
                "conditions": list(model.conditions),
                "probabilities": [float(p) for p in pred.probabilities],
                "prior": [float(p) for p in base],
                "relative_risk": [float(r) for r in pred.relative_risk],
                "evidence": [
                    {
                        "text": s.text,
                        "query": s.query.term if s.query else None,
                        "relative_day": s.relative_day,
                        "log_odds": [float(v) for v in pred.per_evidence[i]],
                    }
                    for i, s in enumerate(snippets)
                ],
            },
            indent=2,
        )
    )


@cli.command("rank")
@click.option("--model", "model_path", type=click.Path(exists=True), help="Needed for log_odds ranking.")
@click.option("--evidence", "evidence_path", required=True, type=click.Path(exists=True))
@click.option(
    "--strategy",
    type=click.Choice(["log_odds", "confidence", "reverse_chronological", "random"]),
    default="log_odds",
    show_default=True,
)
@click.option("--seed", type=int, default=None, help="Required for random ranking.")
@click.option("--patient", "patient_id", help="Limit to one patient.")
@click.option("--out", "out_path", required=True, type=click.Path())
def rank_cmd(
    model_path: str | None,
    evidence_path: str,
    strategy: str,
    seed: int | None,
    patient_id: str | None,
    out_path: str,
) -> None:
    """Order retrieved evidence by the chosen strategy."""
    evidence = load_evidence(evidence_path)
    if patient_id is not None:
        if patient_id not in evidence:
            raise CorpusError(f"no evidence recorded for patient {patient_id!r}")
        evidence = {patient_id: evidence[patient_id]}
    model = embedder = None
    if strategy == "log_odds":
        if not model_path:
            raise click.UsageError("--strategy log_odds requires --model")
        model, _ = load_model(model_path)
        embedder = from_id(model.embedder_id)
    try:
        ranked = {
            pid: mark_duplicates(
                rank_evidence(snips, strategy, model=model, embedder=embedder, seed=seed)
            )
            for pid, snips in evidence.items()
        }
    except ValueError as exc:
        raise CorpusError(str(exc)) from exc
    save_ranked(ranked, out_path)
    click.echo(json.dumps({"patients": len(ranked), "strategy": strategy}))


@cli.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True), help="Config template; re-trained per seed.")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", required=True, type=click.Path(exists=True))
@click.option("--split", "eval_split", default="test", show_default=True)
@click.option("--queries", "queries_path", type=click.Path(exists=True))
@click.option("--backend", type=click.Choice(["mock", "remote"]), default="mock", show_default=True)
@click.option("--fixture", type=click.Path(exists=True))
@click.option("--llm-url", help="Remote backend URL (default: EVIDENT_LLM_URL).")
@click.option("--cache-dir", type=click.Path())
@click.option("--seeds", default="0..4", show_default=True, help="Past/future split seeds, 'a..b' or comma list.")
@click.option("--negative-rate", type=float, default=0.2, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--histograms-out", type=click.Path(), help="Also write histogram series CSV.")
def eval_cmd(
    model_path: str,
    corpus_path: str,
    splits_path: str,
    eval_split: str,
    queries_path: str | None,
    backend: str,
    fixture: str | None,
    llm_url: str | None,
    cache_dir: str | None,
    seeds: str,
    negative_rate: float,
    threshold: float,
    out_path: str,
    histograms_out: str | None,
) -> None:
    """Re-split, retrain, and evaluate per seed; report mean and stddev."""
    if eval_split != "test":
        raise click.UsageError("only --split test is supported for evaluation")
    model, meta = load_model(model_path)
    corpus = load_corpus(corpus_path)
    splits = load_splits(splits_path)
    queries = load_queries(queries_path or default_queries_path())
    gateway = _backend(backend, fixture, llm_url, cache_dir)
    feature_embedder = from_id(model.embedder_id)
    sim_embedder = default_similarity_embedder()
    conditions = ConditionSet(model.conditions)
    train_meta = meta.get("training_config") or {}
    base_train = TrainConfig(
        epochs=train_meta.get("epochs", 10),
        lr=train_meta.get("lr", 0.1),
        batch_size=train_meta.get("batch_size", 32),
        seed=train_meta.get("seed", 0),
    )
    seed_list = _parse_seeds(seeds)
    last_run = {}

    def trainer(seed: int):
        config = PipelineConfig(
            split_seed=seed,
            train=base_train,
            negative_rate=negative_rate,
            threshold=threshold,
        )
        run = run_training_pipeline(
            corpus, splits, queries, gateway, feature_embedder, sim_embedder, conditions, config
        )
        last_run["run"] = run
        return run.test_report

    if len(seed_list) == 1:
        report = trainer(seed_list[0])
        write_metrics_csv(out_path, {f"seed-{seed_list[0]}": report})
    else:
        reports = {}

        def capture(seed: int):
            report = trainer(seed)
            reports[f"seed-{seed}"] = report
            return report

        mean, std = multi_seed_eval(capture, seed_list)
        reports["mean"] = mean
        reports["std"] = std
        write_metrics_csv(out_path, reports)
    if histograms_out:
        run = last_run["run"]
        write_histograms_csv(
            histograms_out,
            dataset_histograms(run.result.model, run.examples["test"]),
        )
    click.echo(json.dumps({"seeds": seed_list, "out": out_path}))


@cli.command("ablate-evidence")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--evidence", "evidence_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", required=True, type=click.Path(exists=True))
@click.option("--split", "eval_split", default="test", show_default=True)
@click.option("--k", "k_values", default="1,2,5,10,20,50", show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def ablate_evidence(
    model_path: str,
    evidence_path: str,
    labels_path: str,
    splits_path: str,
    eval_split: str,
    k_values: str,
    threshold: float,
    out_path: str,
) -> None:
    """Evaluate predictions limited to the top-k ranked snippets per patient."""
    model, _ = load_model(model_path)
    embedder = from_id(model.embedder_id)
    evidence = load_evidence(evidence_path)
    label_sets = labels_by_patient(load_labels(labels_path))
    splits = load_splits(splits_path)
    ids = [pid for pid in splits.get(eval_split, []) if pid in evidence]
    if not ids:
        raise CorpusError(f"no patients with evidence in split {eval_split!r}")
    examples, _ = build_examples(ids, evidence, label_sets, model.conditions, embedder)
    by_k = evidence_count_ablation(model, examples, _parse_list(k_values, int), threshold=threshold)
    write_ablation_csv(out_path, by_k)
    click.echo(json.dumps({"patients": len(ids), "k": _parse_list(k_values, int), "out": out_path}))


@cli.command("annotation-stats")
@click.option("--export", "export_path", required=True, type=click.Path(exists=True),
              help="NDJSON export from GET /v1/export/annotations.")
@click.option("--include-duplicates", is_flag=True, help="Keep evidence marked as duplicates.")
@click.option("--usefulness-out", type=click.Path(), help="Write usefulness-by-variant/query CSV.")
@click.option("--histograms-out", type=click.Path(), help="Write served-evidence histogram CSV.")
def annotation_stats_cmd(
    export_path: str,
    include_duplicates: bool,
    usefulness_out: str | None,
    histograms_out: str | None,
) -> None:
    """Aggregate exported annotation sessions into summary statistics."""
    from .evaluation import annotation_stats, write_histograms_csv, write_query_usefulness_csv

    sessions = [
        json.loads(line)
        for line in Path(export_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    stats = annotation_stats(sessions, exclude_duplicates=not include_duplicates)
    if usefulness_out:
        write_query_usefulness_csv(usefulness_out, stats)
    if histograms_out:
        write_histograms_csv(
            histograms_out,
            {"evidence_count": stats.evidence_counts, "vote_log_odds": stats.vote_log_odds},
        )
    click.echo(json.dumps({"rows": stats.per_annotator, "aggregated": stats.aggregated}, indent=2))


@cli.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--splits", "splits_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", type=click.Path(exists=True), help="Default: EVIDENT_MODEL_PATH.")
@click.option("--evidence", "evidence_path", type=click.Path(exists=True))
@click.option("--labels", "labels_path", type=click.Path(exists=True))
@click.option("--store-dir", type=click.Path(), help="Default: EVIDENT_STORE_DIR.")
@click.option("--split-seed", type=int, default=0, show_default=True)
def serve(
    port: int,
    host: str,
    corpus_path: str,
    splits_path: str,
    model_path: str | None,
    evidence_path: str | None,
    labels_path: str | None,
    store_dir: str | None,
    split_seed: int,
) -> None:
    """Run the annotation service."""
    import os

    import uvicorn

    from .service import MODEL_PATH_ENV, ServiceConfig, create_app_from_config

    model_path = model_path or os.environ.get(MODEL_PATH_ENV)
    if not model_path:
        raise click.UsageError(f"--model or {MODEL_PATH_ENV} is required")
    config = ServiceConfig(
        corpus_path=corpus_path,
        splits_path=splits_path,
        model_path=model_path,
        evidence_path=evidence_path,
        labels_path=labels_path,
        store_dir=store_dir,
        split_seed=split_seed,
    )
    uvicorn.run(create_app_from_config(config), host=host, port=port)


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except GatewayError as exc:
        click.echo(f"backend error: {exc}", err=True)
        sys.exit(3)
    except (CorpusError, EvidentError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(2)
    except (OSError, ValueError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
