"""Indirect strategy: generate extraction programs once per template, run
them locally everywhere, and only pay for model calls when needed.

Per shop run:
  1. Generate an odd-sized ensemble of decision programs from a small
     labeled bootstrap sample; a page is decision-positive when a strict
     majority of programs says so.
  2. Visit pages in a seed-shuffled order. Run every library program on the
     page and keep the result with the most extracted attributes.
  3. When no program extracts anything AND the page is decision-positive:
     acquire a reference object through direct extraction (it must fill at
     least the configured share of schema fields, with one text-variant
     retry), then synthesize a program against that reference: generate,
     refine up to `max_refinements` times on similarity feedback, and fall
     back to up to `max_alternatives` fresh generations. The best program,
     perfect or not, joins the library and the page is re-evaluated.
  4. Decision-negative pages produce an empty product and never reach the
     primary model.

All primary-model calls (references, generations, refinements) and
decision-model calls are counted and priced into the run's ledger; the
metrics invariant `primary == references + generations + refinements` is
checked at the end of every run.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional

from . import prompts
from .compress import CompressedDocument, compress_both
from .corpus import Corpus
from .direct import ExtractionFailed, extract_direct
from .dsl import (
    DecisionProgram,
    ExtractionProgram,
    ProgramParseError,
    count_extracted,
    decision_program_json_schema,
    extraction_program_json_schema,
    parse_program,
    run_decision,
    run_extraction_on_tree,
)
from .gateway import (
    CostLedger,
    Provider,
    ProviderRefusal,
    ReplayMiss,
    TransportError,
    structured_call,
)
from .htmltree import parse_html
from .schema import (
    FoodProduct,
    SchemaDescriptor,
    SchemaViolation,
    filled_field_ratio,
    food_product_descriptor,
    product_to_dict,
    serialize_product,
)
from .similarity import compare, render_feedback


class EnsembleBootstrapFailed(Exception):
    """No generated decision program beat chance on the bootstrap sample."""


class ReferenceUnattainable(Exception):
    """No sufficiently filled reference object obtainable for a page."""


@dataclass(frozen=True)
class OrchestratorConfig:
    decision_ensemble_size: int = 5
    bootstrap_sample_size: int = 10
    reference_fill_threshold: float = 0.8
    max_refinements: int = 5
    max_alternatives: int = 3
    min_valid_attributes: int = 1
    rng_seed: int = 0
    primary_model: str = "o3-mini"
    decision_model: str = "gpt-4o"

    def __post_init__(self):
        if self.decision_ensemble_size < 1 or self.decision_ensemble_size % 2 == 0:
            raise ValueError("decision_ensemble_size must be odd and positive")
        if not (0.0 < self.reference_fill_threshold <= 1.0):
            raise ValueError("reference_fill_threshold must be in (0, 1]")
        if self.bootstrap_sample_size < 2:
            raise ValueError("bootstrap_sample_size must be at least 2")


@dataclass
class LibraryEntry:
    program: ExtractionProgram
    pages_matched: int = 0
    attrs_total: int = 0

    @property
    def mean_attributes_extracted(self) -> float:
        if self.pages_matched == 0:
            return 0.0
        return self.attrs_total / self.pages_matched

    def to_dict(self) -> dict:
        return {
            "program": self.program.to_dict(),
            "pages_matched": self.pages_matched,
            "mean_attributes_extracted": self.mean_attributes_extracted,
        }


class FunctionLibrary:
    """Accepted extraction programs with per-program usage stats."""

    def __init__(self):
        self.entries: list[LibraryEntry] = []

    def add(self, program: ExtractionProgram) -> LibraryEntry:
        if any(e.program.program_id == program.program_id for e in self.entries):
            raise ValueError(f"duplicate program_id {program.program_id}")
        entry = LibraryEntry(program=program)
        self.entries.append(entry)
        return entry

    def to_dict(self) -> dict:
        return {"programs": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


@dataclass
class ShopRunMetrics:
    shop_id: str
    pages_total: int
    llm_calls_primary_model: int
    llm_calls_decision_model: int
    functions_generated: int
    refinements_performed: int
    reference_extractions: int
    seed: int
    accuracy: Optional[float]
    cost_primary_usd: str
    cost_decision_usd: str
    cost_total_usd: str
    synthesis_log: list[dict] = field(default_factory=list)

    def check_invariants(self) -> None:
        expected = (
            self.reference_extractions
            + self.functions_generated
            + self.refinements_performed
        )
        if self.llm_calls_primary_model != expected:
            raise AssertionError(
                f"primary call accounting broken: {self.llm_calls_primary_model} != {expected}"
            )

    def to_dict(self) -> dict:
        return {
            "shop_id": self.shop_id,
            "pages_total": self.pages_total,
            "llm_calls_primary_model": self.llm_calls_primary_model,
            "llm_calls_decision_model": self.llm_calls_decision_model,
            "functions_generated": self.functions_generated,
            "refinements_performed": self.refinements_performed,
            "reference_extractions": self.reference_extractions,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "cost_primary_usd": self.cost_primary_usd,
            "cost_decision_usd": self.cost_decision_usd,
            "cost_total_usd": self.cost_total_usd,
            "synthesis_log": self.synthesis_log,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


@dataclass
class PageResult:
    page_id: str
    product: FoodProduct
    source: str  # program_id | "no-info" | "none"
    count_extracted: int

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "source": self.source,
            "count_extracted": self.count_extracted,
            "product": product_to_dict(self.product),
        }


@dataclass
class ShopRunResult:
    page_results: dict[str, PageResult]
    library: FunctionLibrary
    metrics: ShopRunMetrics
    ledger: CostLedger


# --- Decision ensemble -------------------------------------------------------

def render_samples(samples: list[tuple[CompressedDocument, bool]]) -> str:
    blocks = []
    for j, (doc, label) in enumerate(samples):
        verdict = "yes" if label else "no"
        blocks.append(
            f"--- SAMPLE {j} (contains target information: {verdict}) ---\n{doc.content}"
        )
    return "\n\n".join(blocks)


def build_decision_ensemble(
    samples: list[tuple[CompressedDocument, bool]],
    provider: Provider,
    config: OrchestratorConfig,
    ledger: CostLedger,
    token_prefix: str = "run",
) -> list[DecisionProgram]:
    """Generate the ensemble; each member must classify all samples correctly
    or is regenerated up to 3 times, keeping its best attempt."""
    labels = [label for _, label in samples]
    if not any(labels) or all(labels):
        raise ValueError("bootstrap samples need at least one positive and one negative")
    if len(samples) != config.bootstrap_sample_size:
        raise ValueError(
            f"expected {config.bootstrap_sample_size} bootstrap samples, got {len(samples)}"
        )
    schema = decision_program_json_schema()
    schema_text = json.dumps(schema, indent=2, ensure_ascii=False)
    system = prompts.load("decision_system.txt")
    user_template = prompts.load("decision_user.txt")
    samples_text = render_samples(samples)

    ensemble: list[DecisionProgram] = []
    best_scores: list[int] = []
    for member in range(config.decision_ensemble_size):
        best_program: Optional[DecisionProgram] = None
        best_score = -1
        for attempt in range(3):
            user = user_template.format(
                schema=schema_text,
                member_token=f"{token_prefix}-m{member}a{attempt}",
                samples=samples_text,
            )
            try:
                exchange = structured_call(
                    provider, config.decision_model, system, user, schema,
                    ledger=ledger, role_tag="decision_gen",
                )
                program = parse_program(exchange.response_text)
            except (SchemaViolation, ProgramParseError):
                continue
            if not isinstance(program, DecisionProgram):
                continue
            score = sum(
                1 for doc, label in samples if run_decision(program, doc) == label
            )
            if score > best_score:
                best_score = score
                best_program = program
            if score == len(samples):
                break
        if best_program is not None:
            ensemble.append(best_program)
            best_scores.append(best_score)
    if not ensemble or max(best_scores) * 2 <= len(samples):
        raise EnsembleBootstrapFailed(
            "no decision program classified more than half of the bootstrap samples"
        )
    return ensemble


def decide(ensemble: list[DecisionProgram], doc: CompressedDocument) -> bool:
    """Strict majority vote over the ensemble's individual decisions."""
    if not ensemble or len(ensemble) % 2 == 0:
        raise ValueError("ensemble must be non-empty and odd-sized")
    votes = sum(1 for program in ensemble if run_decision(program, doc))
    return votes * 2 > len(ensemble)


# --- Reference acquisition ----------------------------------------------------

def acquire_reference(
    html_doc: CompressedDocument,
    text_doc: CompressedDocument,
    desc: SchemaDescriptor,
    provider: Provider,
    config: OrchestratorConfig,
    ledger: CostLedger,
) -> tuple[FoodProduct, int]:
    """Direct-extract a reference object with enough populated fields.

    Falls back once to the TEXT variant; returns (reference, calls_made).
    Raises ReferenceUnattainable when both attempts fall short.
    """
    calls = 0
    for doc in (html_doc, text_doc):
        before = len(ledger.entries)
        try:
            result = extract_direct(
                doc, desc, provider, config.primary_model,
                ledger=ledger, role_tag="reference",
            )
        except ExtractionFailed:
            calls += len(ledger.entries) - before
            continue
        calls += len(ledger.entries) - before
        if filled_field_ratio(result.product) >= config.reference_fill_threshold:
            return result.product, calls
    raise ReferenceUnattainableWithCalls(html_doc.page_id, calls)


class ReferenceUnattainableWithCalls(ReferenceUnattainable):
    def __init__(self, page_id: str, calls: int):
        super().__init__(f"page {page_id}: no suitable reference object")
        self.calls = calls


# --- Program synthesis ----------------------------------------------------------

@dataclass
class SynthesisResult:
    best_program: Optional[ExtractionProgram]
    accepted: bool
    best_similarity: float
    generations: int
    refinements: int


def synthesize_program(
    html_doc: CompressedDocument,
    reference: FoodProduct,
    desc: SchemaDescriptor,
    provider: Provider,
    config: OrchestratorConfig,
    ledger: CostLedger,
    token_prefix: str = "run",
) -> SynthesisResult:
    """Generate-and-refine until the program reproduces the reference.

    One initial generation plus up to `max_alternatives` fresh starts, each
    followed by up to `max_refinements` feedback-driven refinement calls;
    at most (1+max_refinements)*(1+max_alternatives) primary calls total.
    """
    schema = extraction_program_json_schema(desc)
    schema_text = json.dumps(schema, indent=2, ensure_ascii=False)
    gen_system = prompts.load("funcgen_system.txt")
    gen_template = prompts.load("funcgen_user.txt")
    refine_template = prompts.load("refine_user.txt")
    reference_text = serialize_product(reference)
    tree = parse_html(html_doc.content)

    best_program: Optional[ExtractionProgram] = None
    best_similarity = -1.0
    generations = 0
    refinements = 0

    def call_for_program(user_prompt: str, role: str) -> Optional[ExtractionProgram]:
        nonlocal generations, refinements
        before = len(ledger.entries)
        try:
            exchange = structured_call(
                provider, config.primary_model, gen_system, user_prompt, schema,
                ledger=ledger, role_tag=role, page_id=html_doc.page_id,
            )
            program = parse_program(exchange.response_text, desc)
        except (SchemaViolation, ProgramParseError):
            program = None
        finally:
            calls = len(ledger.entries) - before
            if role == "func_gen":
                generations += calls
            else:
                refinements += calls
        if not isinstance(program, ExtractionProgram):
            return None
        return program

    for alternative in range(1 + config.max_alternatives):
        attempt_token = f"{token_prefix}-{html_doc.page_id}-alt{alternative}"
        user = gen_template.format(
            schema=schema_text,
            attempt_token=attempt_token,
            reference=reference_text,
            content=html_doc.content,
        )
        program = call_for_program(user, "func_gen")
        if program is None:
            continue
        program = _with_generation(program, 0)
        outcome = run_extraction_on_tree(program, tree, desc)
        report = compare(outcome.product, reference, desc)
        if report.overall > best_similarity:
            best_program, best_similarity = program, report.overall

        for round_no in range(1, config.max_refinements + 1):
            if report.overall == 1.0:
                break
            refine_user = refine_template.format(
                schema=schema_text,
                attempt_token=attempt_token,
                round=round_no,
                program=program.to_json(),
                feedback=render_feedback(report),
                reference=reference_text,
                content=html_doc.content,
            )
            refined = call_for_program(refine_user, "refine")
            if refined is None:
                continue
            program = _with_generation(refined, round_no)
            outcome = run_extraction_on_tree(program, tree, desc)
            report = compare(outcome.product, reference, desc)
            if report.overall > best_similarity:
                best_program, best_similarity = program, report.overall
        if report.overall == 1.0:
            return SynthesisResult(
                best_program=program,
                accepted=True,
                best_similarity=1.0,
                generations=generations,
                refinements=refinements,
            )
    return SynthesisResult(
        best_program=best_program,
        accepted=False,
        best_similarity=best_similarity,
        generations=generations,
        refinements=refinements,
    )


def _with_generation(program: ExtractionProgram, generation: int) -> ExtractionProgram:
    return ExtractionProgram(
        program_id=program.program_id,
        target_schema_name=program.target_schema_name,
        rules=program.rules,
        created_by=program.created_by,
        generation=generation,
    )


# --- Whole-shop processing -------------------------------------------------------

def process_shop(
    corpus: Corpus,
    provider: Provider,
    config: OrchestratorConfig,
    desc: Optional[SchemaDescriptor] = None,
    ledger: Optional[CostLedger] = None,
    precompressed: Optional[dict[str, tuple[CompressedDocument, CompressedDocument]]] = None,
) -> ShopRunResult:
    """Run the full indirect algorithm over one shop's corpus."""
    desc = desc or food_product_descriptor()
    ledger = ledger if ledger is not None else CostLedger()
    ledger.meta.setdefault("prompt_bundle_hash", prompts.bundle_hash())
    ledger.meta.setdefault("shop_id", corpus.shop_id)

    compressed: dict[str, tuple[CompressedDocument, CompressedDocument]] = {}
    if precompressed is not None:
        compressed = precompressed
    else:
        for doc in corpus.pages:
            compressed[doc.page_id] = compress_both(doc)

    token_prefix = f"{corpus.shop_id}-s{config.rng_seed}"

    samples = [
        (compressed[page_id][1], label)
        for page_id, label in sorted(corpus.labels.items())
        if page_id in compressed
    ]
    decision_calls_before = len(ledger.entries)
    ensemble = build_decision_ensemble(samples, provider, config, ledger, token_prefix)
    decision_calls = len(ledger.entries) - decision_calls_before

    order = [doc.page_id for doc in corpus.pages]
    random.Random(config.rng_seed).shuffle(order)

    library = FunctionLibrary()
    page_results: dict[str, PageResult] = {}
    decision_cache: dict[str, bool] = {}
    functions_generated = 0
    refinements_performed = 0
    reference_extractions = 0
    synthesis_log: list[dict] = []

    def page_decision(page_id: str) -> bool:
        if page_id not in decision_cache:
            decision_cache[page_id] = decide(ensemble, compressed[page_id][1])
        return decision_cache[page_id]

    def best_library_result(tree) -> tuple[Optional[LibraryEntry], FoodProduct, int]:
        best_entry: Optional[LibraryEntry] = None
        best_product = FoodProduct()
        best_key = (-1, -1.0, 0.0)
        for index, entry in enumerate(library.entries):
            outcome = run_extraction_on_tree(entry.program, tree, desc)
            count = count_extracted(outcome.product)
            key = (count, entry.mean_attributes_extracted, -float(index))
            if key > best_key:
                best_key = key
                best_entry = entry
                best_product = outcome.product
        return best_entry, best_product, max(best_key[0], 0)

    for page_id in order:
        html_doc, text_doc = compressed[page_id]
        tree = parse_html(html_doc.content)
        entry, product, count = best_library_result(tree)
        if entry is not None and count >= config.min_valid_attributes:
            entry.pages_matched += 1
            entry.attrs_total += count
            page_results[page_id] = PageResult(page_id, product, entry.program.program_id, count)
            continue
        if not page_decision(page_id):
            page_results[page_id] = PageResult(page_id, FoodProduct(), "no-info", 0)
            continue
        # Synthesis episode: reference acquisition, then generate-and-refine.
        counts_before = dict(ledger.count_by_role())
        reference = None
        try:
            reference, ref_calls = acquire_reference(
                html_doc, text_doc, desc, provider, config, ledger
            )
            reference_extractions += ref_calls
            synthesis = synthesize_program(
                html_doc, reference, desc, provider, config, ledger, token_prefix
            )
        except ReferenceUnattainableWithCalls as exc:
            reference_extractions += exc.calls
            synthesis_log.append(
                {"page_id": page_id, "outcome": "reference_unattainable", "calls": exc.calls}
            )
            page_results[page_id] = PageResult(page_id, product, "none", count)
            continue
        except (TransportError, ProviderRefusal, ReplayMiss) as exc:
            # A provider failure mid-episode: true the counters up from the
            # ledger and move on to the next page.
            counts_now = ledger.count_by_role()

            def _delta(role: str) -> int:
                return counts_now.get(role, 0) - counts_before.get(role, 0)

            if reference is None:
                reference_extractions += _delta("reference")
            functions_generated += _delta("func_gen")
            refinements_performed += _delta("refine")
            synthesis_log.append(
                {"page_id": page_id, "outcome": "provider_error", "error": str(exc)}
            )
            page_results[page_id] = PageResult(page_id, product, "none", count)
            continue
        functions_generated += synthesis.generations
        refinements_performed += synthesis.refinements
        synthesis_log.append(
            {
                "page_id": page_id,
                "outcome": "accepted" if synthesis.accepted else "best_imperfect",
                "reference_calls": ref_calls,
                "generations": synthesis.generations,
                "refinements": synthesis.refinements,
                "best_similarity": synthesis.best_similarity,
                "program_id": synthesis.best_program.program_id
                if synthesis.best_program
                else None,
            }
        )
        if synthesis.best_program is not None:
            unique = _with_id(
                synthesis.best_program,
                f"{synthesis.best_program.program_id}-{len(library.entries):02d}",
            )
            library.add(unique)
        entry, product, count = best_library_result(tree)
        if entry is not None and count >= config.min_valid_attributes:
            entry.pages_matched += 1
            entry.attrs_total += count
            page_results[page_id] = PageResult(page_id, product, entry.program.program_id, count)
        else:
            page_results[page_id] = PageResult(page_id, product, "none", count)

    accuracy = None
    if corpus.truth:
        total = 0.0
        for page_id, result in page_results.items():
            total += compare(result.product, corpus.truth[page_id].product, desc).overall
        accuracy = 100.0 * total / len(page_results) if page_results else None

    by_role_cost = ledger.total_by_role()
    primary_cost = sum(
        (by_role_cost.get(role, Decimal(0)) for role in ("reference", "func_gen", "refine")),
        Decimal(0),
    )
    by_role_count = ledger.count_by_role()
    primary_calls = (
        by_role_count.get("reference", 0)
        + by_role_count.get("func_gen", 0)
        + by_role_count.get("refine", 0)
    )
    metrics = ShopRunMetrics(
        shop_id=corpus.shop_id,
        pages_total=len(corpus.pages),
        llm_calls_primary_model=primary_calls,
        llm_calls_decision_model=decision_calls,
        functions_generated=functions_generated,
        refinements_performed=refinements_performed,
        reference_extractions=reference_extractions,
        seed=config.rng_seed,
        accuracy=accuracy,
        cost_primary_usd=str(primary_cost),
        cost_decision_usd=str(by_role_cost.get("decision_gen", Decimal(0))),
        cost_total_usd=str(ledger.total_usd),
        synthesis_log=synthesis_log,
    )
    metrics.check_invariants()
    return ShopRunResult(
        page_results=page_results,
        library=library,
        metrics=metrics,
        ledger=ledger,
    )


def _with_id(program: ExtractionProgram, program_id: str) -> ExtractionProgram:
    return ExtractionProgram(
        program_id=program_id,
        target_schema_name=program.target_schema_name,
        rules=program.rules,
        created_by=program.created_by,
        generation=program.generation,
    )
