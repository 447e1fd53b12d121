"""Direct strategy: one schema-constrained completion per product page."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import prompts
from .compress import CompressedDocument, Variant
from .gateway import (
    CostLedger,
    Provider,
    ProviderRefusal,
    ReplayMiss,
    TransportError,
    Usage,
    structured_call,
)
from .schema import (
    FoodProduct,
    SchemaDescriptor,
    SchemaViolation,
    food_product_descriptor,
    parse_product,
    product_to_dict,
    to_json_schema,
    to_json_schema_dict,
)


class ExtractionFailed(Exception):
    """Direct extraction gave no schema-valid product for a page."""


@dataclass(frozen=True)
class DirectResult:
    page_id: str
    product: FoodProduct
    usage: Usage
    variant_used: Variant


def build_direct_prompts(doc: CompressedDocument, desc: SchemaDescriptor) -> tuple[str, str]:
    system = prompts.load("direct_system.txt")
    user = prompts.load("direct_user.txt").format(
        schema=to_json_schema(desc),
        variant=doc.variant.value,
        content=doc.content,
    )
    return system, user


def extract_direct(
    doc: CompressedDocument,
    desc: Optional[SchemaDescriptor],
    provider: Provider,
    model_id: str,
    ledger: Optional[CostLedger] = None,
    role_tag: str = "direct",
) -> DirectResult:
    """Extract the product object from one compressed page."""
    desc = desc or food_product_descriptor()
    system, user = build_direct_prompts(doc, desc)
    schema = to_json_schema_dict(desc)
    try:
        exchange = structured_call(
            provider, model_id, system, user, schema,
            ledger=ledger, role_tag=role_tag, page_id=doc.page_id,
        )
        product = parse_product(exchange.response_text, desc)
    except SchemaViolation as exc:
        raise ExtractionFailed(f"page {doc.page_id}: {exc}") from exc
    return DirectResult(
        page_id=doc.page_id,
        product=product,
        usage=exchange.usage,
        variant_used=doc.variant,
    )


def extract_direct_batch(
    docs: list[CompressedDocument],
    desc: Optional[SchemaDescriptor],
    provider: Provider,
    model_id: str,
    ledger: CostLedger,
    checkpoint_path=None,
    out_dir=None,
    workers: int = 1,
) -> tuple[list[DirectResult], dict[str, str]]:
    """Process a corpus page by page; failures are recorded, not fatal.

    A JSON checkpoint maps finished page_ids to their products, so an
    interrupted run resumes without re-calling the provider for done pages.
    With workers > 1, pages fan out over a thread pool (the live provider's
    in-flight semaphore still caps concurrency); ledger entries land in
    completion order, keyed by page_id.
    """
    desc = desc or food_product_descriptor()
    checkpoint: dict[str, dict] = {}
    if checkpoint_path is not None:
        checkpoint_path = Path(checkpoint_path)
        if checkpoint_path.exists():
            checkpoint = json.loads(checkpoint_path.read_text(encoding="utf-8"))

    products_dir = None
    if out_dir is not None:
        products_dir = Path(out_dir) / "products"
        products_dir.mkdir(parents=True, exist_ok=True)

    results: dict[str, DirectResult] = {}
    failures: dict[str, str] = {}
    pending: list[CompressedDocument] = []
    for doc in docs:
        if doc.page_id in checkpoint:
            product = parse_product(json.dumps(checkpoint[doc.page_id], ensure_ascii=False), desc)
            results[doc.page_id] = DirectResult(
                page_id=doc.page_id,
                product=product,
                usage=Usage(),
                variant_used=doc.variant,
            )
        else:
            pending.append(doc)

    def finish(doc: CompressedDocument, result: DirectResult) -> None:
        results[doc.page_id] = result
        checkpoint[doc.page_id] = product_to_dict(result.product)
        if checkpoint_path is not None:
            checkpoint_path.write_text(
                json.dumps(checkpoint, indent=2, ensure_ascii=False, sort_keys=True),
                encoding="utf-8",
            )
        if products_dir is not None:
            (products_dir / f"{doc.page_id}.json").write_text(
                json.dumps(product_to_dict(result.product), indent=2, ensure_ascii=False),
                encoding="utf-8",
            )

    if workers <= 1:
        for doc in pending:
            try:
                finish(doc, extract_direct(doc, desc, provider, model_id, ledger=ledger))
            except (ExtractionFailed, TransportError, ProviderRefusal, ReplayMiss) as exc:
                failures[doc.page_id] = str(exc)
    else:
        from concurrent.futures import ThreadPoolExecutor, as_completed

        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(extract_direct, doc, desc, provider, model_id, ledger): doc
                for doc in pending
            }
            for future in as_completed(futures):
                doc = futures[future]
                try:
                    finish(doc, future.result())
                except (ExtractionFailed, TransportError, ProviderRefusal, ReplayMiss) as exc:
                    failures[doc.page_id] = str(exc)

    ordered = [results[doc.page_id] for doc in docs if doc.page_id in results]
    return ordered, failures
