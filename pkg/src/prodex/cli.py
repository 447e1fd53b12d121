"""Command-line interface: corpus generation, compression, extraction runs,
evaluation and strategy comparison.

Run directories are self-describing: each carries a manifest.json naming the
strategy, variant, corpus and models, so `evaluate` can consume any mix of
them. Live-provider credentials come from PRODEX_API_BASE / PRODEX_API_KEY.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import prompts
from .compress import RawDocument, Variant, compress_both, compress_html, count_tokens, extract_text
from .corpus import Corpus, generate_shop, load_corpus, preset_spec, write_corpus
from .direct import extract_direct_batch
from .evaluate import (
    RunReport,
    ShopReport,
    compare_strategies,
    emit_report,
    merge_reports,
    page_accuracy,
    summarize_runs,
)
from .gateway import CostLedger, LiveProvider, RecordingProvider, ReplayProvider
from .indirect import OrchestratorConfig, process_shop
from .oracle import OracleConfig, OracleProvider
from .schema import food_product_descriptor, parse_product


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with default options for the extract commands.")
@click.pass_context
def main(ctx, config_path):
    """Schema-constrained product extraction: direct and indirect strategies."""
    ctx.ensure_object(dict)
    if config_path:
        ctx.obj["config"] = json.loads(Path(config_path).read_text(encoding="utf-8"))
    else:
        ctx.obj["config"] = {}


# --- corpus ------------------------------------------------------------------

@main.group()
def corpus():
    """Synthetic shop corpora."""


@corpus.command("generate")
@click.option("--preset", type=click.Choice(["alpha", "beta", "gamma"]), required=True)
@click.option("--pages", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def corpus_generate(preset, pages, seed, out_dir):
    """Generate a deterministic synthetic shop with ground truth."""
    spec = preset_spec(preset, pages, seed)
    shop = generate_shop(spec)
    write_corpus(shop, out_dir, preset=preset, spec=spec)
    click.echo(f"wrote {len(shop.pages)} pages to {out_dir} (corpus {shop.corpus_id})")


# --- compress ------------------------------------------------------------------

@main.command("compress")
@click.option("--variant", type=click.Choice(["html", "text"]), default="html", show_default=True)
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def compress_cmd(variant, in_path, out_dir):
    """Compress pages to HTML_COMPRESSED or TEXT plus a token manifest."""
    in_path = Path(in_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if in_path.is_dir():
        files = sorted(in_path.glob("*.html"))
    else:
        files = [in_path]
    manifest = []
    for path in files:
        raw = RawDocument(page_id=path.stem, url=str(path), html=path.read_text(encoding="utf-8"))
        compressed = compress_html(raw)
        if variant == "text":
            compressed = extract_text(compressed)
            out_file = out / f"{raw.page_id}.txt"
        else:
            out_file = out / f"{raw.page_id}.html"
        out_file.write_text(compressed.content, encoding="utf-8")
        manifest.append(
            {
                "page_id": raw.page_id,
                "variant": compressed.variant.value,
                "token_count": compressed.token_count,
                "original_token_count": count_tokens(raw.html),
            }
        )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    click.echo(f"compressed {len(files)} page(s) into {out}")


# --- providers -------------------------------------------------------------------

def _build_provider(provider_name, shop: Corpus | None, session, record,
                    oracle_imperfections, oracle_unreparable_template,
                    oracle_unreparable_rate, oracle_seed):
    if provider_name == "oracle":
        if shop is None:
            raise click.UsageError("oracle provider needs --corpus")
        provider = OracleProvider(
            shop,
            OracleConfig(
                imperfections_per_generation=oracle_imperfections,
                unreparable_templates=frozenset(oracle_unreparable_template),
                unreparable_rate=oracle_unreparable_rate,
                seed=oracle_seed,
            ),
        )
    elif provider_name == "replay":
        if not session:
            raise click.UsageError("replay provider needs --session")
        provider = ReplayProvider(session)
    elif provider_name == "live":
        provider = LiveProvider()
    else:
        raise click.UsageError(f"unknown provider {provider_name}")
    if record:
        provider = RecordingProvider(provider, record)
    return provider


_PROVIDER_OPTIONS = [
    click.option("--provider", "provider_name",
                 type=click.Choice(["oracle", "replay", "live"]), default="oracle",
                 show_default=True),
    click.option("--session", type=click.Path(), default=None,
                 help="Session directory for the replay provider."),
    click.option("--record", type=click.Path(), default=None,
                 help="Record all exchanges into this session directory."),
    click.option("--oracle-imperfections", type=int, default=0, show_default=True,
                 help="Planted imperfections per oracle program generation."),
    click.option("--oracle-unreparable-template", multiple=True,
                 help="Template id the oracle never repairs (repeatable)."),
    click.option("--oracle-unreparable-rate", type=float, default=0.0, show_default=True),
    click.option("--oracle-seed", type=int, default=0, show_default=True),
]


def _with_provider_options(fn):
    for option in reversed(_PROVIDER_OPTIONS):
        fn = option(fn)
    return fn


# --- extract ----------------------------------------------------------------------

@main.group()
def extract():
    """Run an extraction strategy over a corpus."""


@extract.command("direct")
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--variant", type=click.Choice(["html", "text"]), default="html", show_default=True)
@click.option("--model", default="o3-mini", show_default=True)
@click.option("--resume/--fresh", default=True, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True,
              help="Parallel page requests (useful with the live provider).")
@_with_provider_options
def extract_direct_cmd(corpus_dir, out_dir, variant, model, resume, workers, provider_name,
                       session, record, oracle_imperfections, oracle_unreparable_template,
                       oracle_unreparable_rate, oracle_seed):
    """One structured model call per page (with resume checkpointing)."""
    shop = load_corpus(corpus_dir)
    provider = _build_provider(provider_name, shop, session, record,
                               oracle_imperfections, oracle_unreparable_template,
                               oracle_unreparable_rate, oracle_seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "checkpoint.json"
    if not resume and checkpoint.exists():
        checkpoint.unlink()

    docs = []
    for raw in shop.pages:
        html_doc, text_doc = compress_both(raw)
        docs.append(text_doc if variant == "text" else html_doc)

    ledger = CostLedger()
    ledger.meta["prompt_bundle_hash"] = prompts.bundle_hash()
    ledger.meta["shop_id"] = shop.shop_id
    results, failures = extract_direct_batch(
        docs, food_product_descriptor(), provider, model, ledger,
        checkpoint_path=checkpoint, out_dir=out, workers=workers,
    )
    (out / "ledger.json").write_text(ledger.to_json(), encoding="utf-8")
    if failures:
        (out / "failures.json").write_text(
            json.dumps(failures, indent=2, sort_keys=True), encoding="utf-8"
        )
    manifest = {
        "strategy": "direct",
        "variant": Variant.TEXT.value if variant == "text" else Variant.HTML_COMPRESSED.value,
        "shop_id": shop.shop_id,
        "corpus_id": shop.corpus_id,
        "model": model,
        "provider": provider_name,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    click.echo(
        f"direct extraction: {len(results)} pages ok, {len(failures)} failed, "
        f"{len(ledger.entries)} calls, ${ledger.total_usd}"
    )


@extract.command("indirect")
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), default=None,
              help="Override the corpus bootstrap labels file.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--runs", type=int, default=10, show_default=True,
              help="Repeated runs with derived seeds (the ten-run protocol).")
@click.option("--ensemble-size", type=int, default=None)
@click.option("--max-refinements", type=int, default=None)
@click.option("--max-alternatives", type=int, default=None)
@click.option("--fill-threshold", type=float, default=None)
@click.option("--min-valid-attributes", type=int, default=None)
@click.option("--primary-model", default=None)
@click.option("--decision-model", default=None)
@_with_provider_options
@click.pass_context
def extract_indirect_cmd(ctx, corpus_dir, out_dir, labels_path, seed, runs,
                         ensemble_size, max_refinements, max_alternatives,
                         fill_threshold, min_valid_attributes, primary_model,
                         decision_model, provider_name, session, record,
                         oracle_imperfections, oracle_unreparable_template,
                         oracle_unreparable_rate, oracle_seed):
    """Generate extraction programs once per template, reuse them everywhere."""
    shop = load_corpus(corpus_dir)
    if labels_path:
        shop.labels = {
            k: bool(v)
            for k, v in json.loads(Path(labels_path).read_text(encoding="utf-8")).items()
        }
    provider = _build_provider(provider_name, shop, session, record,
                               oracle_imperfections, oracle_unreparable_template,
                               oracle_unreparable_rate, oracle_seed)

    file_config = dict(ctx.obj.get("config", {})) if ctx.obj else {}
    overrides = {
        "decision_ensemble_size": ensemble_size,
        "max_refinements": max_refinements,
        "max_alternatives": max_alternatives,
        "reference_fill_threshold": fill_threshold,
        "min_valid_attributes": min_valid_attributes,
        "primary_model": primary_model,
        "decision_model": decision_model,
    }
    for key, value in overrides.items():
        if value is not None:
            file_config[key] = value
    file_config["bootstrap_sample_size"] = len(shop.labels)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    precompressed = {doc.page_id: compress_both(doc) for doc in shop.pages}

    run_seeds = []
    accuracies = []
    primary_calls = []
    for run_index in range(runs):
        run_seed = seed if runs == 1 else seed * 1_000_003 + run_index
        run_seeds.append(run_seed)
        config = OrchestratorConfig(rng_seed=run_seed, **file_config)
        result = process_shop(shop, provider, config, precompressed=precompressed)
        run_dir = out / f"run-{run_index:02d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "products.json").write_text(
            json.dumps(
                [result.page_results[pid].to_dict() for pid in sorted(result.page_results)],
                indent=2,
                ensure_ascii=False,
            ),
            encoding="utf-8",
        )
        (run_dir / "library.json").write_text(result.library.to_json(), encoding="utf-8")
        (run_dir / "metrics.json").write_text(result.metrics.to_json(), encoding="utf-8")
        (run_dir / "ledger.json").write_text(result.ledger.to_json(), encoding="utf-8")
        accuracies.append(result.metrics.accuracy)
        primary_calls.append(result.metrics.llm_calls_primary_model)
        click.echo(
            f"run {run_index}: seed {run_seed}, accuracy "
            f"{result.metrics.accuracy}, primary calls "
            f"{result.metrics.llm_calls_primary_model}"
        )

    distribution = (
        summarize_runs([a for a in accuracies if a is not None])
        if any(a is not None for a in accuracies)
        else None
    )
    summary = {
        "master_seed": seed,
        "runs": runs,
        "run_seeds": run_seeds,
        "accuracies": accuracies,
        "primary_calls": primary_calls,
        "distribution": distribution,
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    if distribution is not None:
        (out / "summary.csv").write_text(
            "shop_id,runs,min,mean,max,stddev\n"
            f"{shop.shop_id},{distribution['n']},{distribution['min']:.4f},"
            f"{distribution['mean']:.4f},{distribution['max']:.4f},"
            f"{distribution['stddev']:.4f}\n",
            encoding="utf-8",
        )
    manifest = {
        "strategy": "indirect",
        "variant": Variant.HTML_COMPRESSED.value,
        "shop_id": shop.shop_id,
        "corpus_id": shop.corpus_id,
        "provider": provider_name,
        "master_seed": seed,
        "runs": runs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")


# --- evaluate / compare -----------------------------------------------------------

def _load_truth(truth_path):
    from .corpus import GroundTruthRecord

    path = Path(truth_path)
    if path.is_dir():
        path = path / "truth.jsonl"
    truth = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = GroundTruthRecord.from_dict(json.loads(line))
                truth[record.page_id] = record
    return truth


def _report_from_results_dir(results_dir, truth) -> RunReport:
    root = Path(results_dir)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    strategy = manifest["strategy"]
    shop_id = manifest["shop_id"]
    corpus_id = manifest["corpus_id"]
    variant = manifest.get("variant", Variant.HTML_COMPRESSED.value)

    if strategy == "direct":
        products = {}
        for path in sorted((root / "products").glob("*.json")):
            products[path.stem] = parse_product(path.read_text(encoding="utf-8"))
        ledger = CostLedger.from_json((root / "ledger.json").read_text(encoding="utf-8"))
        accuracy, _ = page_accuracy(products, truth)
        shop = ShopReport(
            shop_id=shop_id,
            accuracy_by_variant={variant: accuracy},
            calls_primary=len(ledger.entries),
            cost_usd=str(ledger.total_usd),
            run_accuracies=[accuracy],
        )
        return RunReport(strategy="direct", corpus_id=corpus_id, shops={shop_id: shop})

    run_dirs = sorted(root.glob("run-*"))
    if not run_dirs:
        run_dirs = [root]
    run_accuracies = []
    calls_primary = 0
    calls_decision = 0
    cost = "0"
    from decimal import Decimal as _Decimal

    total_cost = _Decimal(0)
    for run_dir in run_dirs:
        products = {}
        for entry in json.loads((run_dir / "products.json").read_text(encoding="utf-8")):
            products[entry["page_id"]] = parse_product(
                json.dumps(entry["product"], ensure_ascii=False)
            )
        accuracy, _ = page_accuracy(products, truth)
        run_accuracies.append(accuracy)
        metrics = json.loads((run_dir / "metrics.json").read_text(encoding="utf-8"))
        calls_primary += metrics["llm_calls_primary_model"]
        calls_decision += metrics["llm_calls_decision_model"]
        total_cost += _Decimal(metrics["cost_total_usd"])
    cost = str(total_cost)
    shop = ShopReport(
        shop_id=shop_id,
        accuracy_by_variant={variant: sum(run_accuracies) / len(run_accuracies)},
        calls_primary=calls_primary,
        calls_decision=calls_decision,
        cost_usd=cost,
        run_accuracies=run_accuracies,
        distribution=summarize_runs(run_accuracies) if len(run_accuracies) > 1 else None,
    )
    return RunReport(strategy="indirect", corpus_id=corpus_id, shops={shop_id: shop})


@main.command("evaluate")
@click.option("--results", "results_dirs", type=click.Path(exists=True), multiple=True,
              required=True, help="Run output directory (repeatable).")
@click.option("--truth", "truth_path", type=click.Path(exists=True), required=True,
              help="Corpus directory or truth.jsonl file.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv", "markdown"]),
              default="json", show_default=True)
def evaluate_cmd(results_dirs, truth_path, out_path, fmt):
    """Score run outputs against ground truth and write a report."""
    truth = _load_truth(truth_path)
    reports = [_report_from_results_dir(d, truth) for d in results_dirs]
    merged = merge_reports(reports)
    emit_report(merged, fmt, out_path)
    click.echo(f"mean accuracy {merged.mean_accuracy():.2f} -> {out_path}")


@main.command("compare")
@click.option("--direct", "direct_path", type=click.Path(exists=True), required=True)
@click.option("--indirect", "indirect_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def compare_cmd(direct_path, indirect_path, out_path):
    """Compare two strategy reports (accuracy delta, call reduction, cost)."""
    direct = RunReport.from_dict(json.loads(Path(direct_path).read_text(encoding="utf-8")))
    indirect = RunReport.from_dict(json.loads(Path(indirect_path).read_text(encoding="utf-8")))
    summary = compare_strategies(direct, indirect)
    Path(out_path).write_text(
        json.dumps(summary, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    click.echo(
        f"Δaccuracy {summary['delta_accuracy']:+.2f}, "
        f"call reduction {summary['call_reduction_pct']:.2f}%"
    )


if __name__ == "__main__":
    sys.exit(main())
