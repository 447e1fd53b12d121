"""Provider abstraction for schema-constrained chat completions.

Three provider families share one interface: a live JSON-over-HTTP client
speaking the chat-completions wire shape, a recording wrapper that persists
every exchange, and a replay provider that serves recorded exchanges keyed by
a content hash of (model, system prompt, user prompt, schema). Replay makes
every pipeline bit-deterministic offline.

Cost accounting is exact: usage is priced from a per-model table using
``Decimal`` arithmetic, and a ledger's total is always the sum of its
entries with no floating-point drift.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Optional, Protocol

import jsonschema

from .compress import count_tokens
from .schema import SchemaViolation


class TransportError(Exception):
    """Network or HTTP-level failure after retries."""


class ProviderRefusal(Exception):
    """The provider declined to answer."""


class ReplayMiss(Exception):
    """No recorded exchange for the requested prompt key."""


class UnknownModel(Exception):
    """Model id not present in the price table."""


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    cached_input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if min(self.input_tokens, self.cached_input_tokens, self.output_tokens) < 0:
            raise ValueError("token counts must be non-negative")
        if self.cached_input_tokens > self.input_tokens:
            raise ValueError("cached_input_tokens cannot exceed input_tokens")

    def to_dict(self) -> dict:
        return {
            "input_tokens": self.input_tokens,
            "cached_input_tokens": self.cached_input_tokens,
            "output_tokens": self.output_tokens,
        }

    @staticmethod
    def from_dict(data: dict) -> "Usage":
        return Usage(
            input_tokens=int(data.get("input_tokens", 0)),
            cached_input_tokens=int(data.get("cached_input_tokens", 0)),
            output_tokens=int(data.get("output_tokens", 0)),
        )


@dataclass(frozen=True)
class ChatExchange:
    model_id: str
    system_prompt: str
    user_prompt: str
    response_text: str
    usage: Usage
    timestamp: float = 0.0

    @property
    def key(self) -> str:
        return exchange_key(self.model_id, self.system_prompt, self.user_prompt, None)


def exchange_key(model_id: str, system_prompt: str, user_prompt: str, json_schema) -> str:
    """Content hash identifying an exchange for record/replay."""
    payload = json.dumps(
        {
            "model_id": model_id,
            "system_prompt": system_prompt,
            "user_prompt": user_prompt,
            "schema": json_schema,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# --- Pricing ----------------------------------------------------------------

@dataclass(frozen=True)
class ModelPrice:
    input_usd_per_1m: Decimal
    cached_input_usd_per_1m: Decimal
    output_usd_per_1m: Decimal

    def __post_init__(self):
        for rate in (
            self.input_usd_per_1m,
            self.cached_input_usd_per_1m,
            self.output_usd_per_1m,
        ):
            if rate < 0:
                raise ValueError("price rates must be non-negative")


def default_price_table() -> dict[str, ModelPrice]:
    return {
        "o3-mini": ModelPrice(Decimal("1.10"), Decimal("0.55"), Decimal("4.40")),
        "gpt-4o": ModelPrice(Decimal("2.50"), Decimal("1.25"), Decimal("10.00")),
    }


def load_price_table(path) -> dict[str, ModelPrice]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        model: ModelPrice(
            input_usd_per_1m=Decimal(str(entry["input_usd_per_1m"])),
            cached_input_usd_per_1m=Decimal(str(entry["cached_input_usd_per_1m"])),
            output_usd_per_1m=Decimal(str(entry["output_usd_per_1m"])),
        )
        for model, entry in data.items()
    }


_MILLION = Decimal(1_000_000)


def cost(
    usage: Usage,
    model_id: str,
    price_table: Optional[dict[str, ModelPrice]] = None,
) -> Decimal:
    """Exact USD cost of a usage record under the model's pricing."""
    table = price_table if price_table is not None else default_price_table()
    if model_id not in table:
        raise UnknownModel(model_id)
    price = table[model_id]
    uncached = usage.input_tokens - usage.cached_input_tokens
    return (
        Decimal(uncached) * price.input_usd_per_1m / _MILLION
        + Decimal(usage.cached_input_tokens) * price.cached_input_usd_per_1m / _MILLION
        + Decimal(usage.output_tokens) * price.output_usd_per_1m / _MILLION
    )


# --- Ledger -----------------------------------------------------------------

ROLE_TAGS = ("direct", "reference", "decision_gen", "func_gen", "refine")


@dataclass(frozen=True)
class LedgerEntry:
    exchange_ref: str
    model_id: str
    role_tag: str
    usage: Usage
    cost_usd: Decimal
    page_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "exchange_ref": self.exchange_ref,
            "model_id": self.model_id,
            "role_tag": self.role_tag,
            "usage": self.usage.to_dict(),
            "cost_usd": str(self.cost_usd),
            "page_id": self.page_id,
        }


class CostLedger:
    """Ordered record of priced LLM calls; appends are thread-safe."""

    def __init__(self, price_table: Optional[dict[str, ModelPrice]] = None):
        self.price_table = price_table if price_table is not None else default_price_table()
        self.entries: list[LedgerEntry] = []
        self.meta: dict[str, str] = {}
        self._lock = threading.Lock()

    def add(
        self,
        exchange_ref: str,
        model_id: str,
        role_tag: str,
        usage: Usage,
        page_id: Optional[str] = None,
    ) -> LedgerEntry:
        entry = LedgerEntry(
            exchange_ref=exchange_ref,
            model_id=model_id,
            role_tag=role_tag,
            usage=usage,
            cost_usd=cost(usage, model_id, self.price_table),
            page_id=page_id,
        )
        with self._lock:
            self.entries.append(entry)
        return entry

    @property
    def total_usd(self) -> Decimal:
        return sum((e.cost_usd for e in self.entries), Decimal(0))

    def total_by_role(self) -> dict[str, Decimal]:
        totals: dict[str, Decimal] = {}
        for entry in self.entries:
            totals[entry.role_tag] = totals.get(entry.role_tag, Decimal(0)) + entry.cost_usd
        return totals

    def count_by_role(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for entry in self.entries:
            counts[entry.role_tag] = counts.get(entry.role_tag, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "meta": dict(self.meta),
            "total_usd": str(self.total_usd),
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @staticmethod
    def from_json(text: str, price_table: Optional[dict[str, ModelPrice]] = None) -> "CostLedger":
        data = json.loads(text)
        ledger = CostLedger(price_table)
        ledger.meta = dict(data.get("meta", {}))
        for raw in data.get("entries", []):
            ledger.entries.append(
                LedgerEntry(
                    exchange_ref=raw["exchange_ref"],
                    model_id=raw["model_id"],
                    role_tag=raw["role_tag"],
                    usage=Usage.from_dict(raw["usage"]),
                    cost_usd=Decimal(raw["cost_usd"]),
                    page_id=raw.get("page_id"),
                )
            )
        return ledger


# --- Providers ---------------------------------------------------------------

class Provider(Protocol):
    def complete_structured(
        self, model_id: str, system_prompt: str, user_prompt: str, json_schema: dict
    ) -> ChatExchange:
        ...


def check_schema(json_schema: dict) -> None:
    """Reject malformed schemas before any provider work."""
    try:
        jsonschema.validators.validator_for(json_schema).check_schema(json_schema)
    except jsonschema.SchemaError as exc:
        raise SchemaViolation([("$schema", f"invalid JSON Schema: {exc.message}")])
    if not isinstance(json_schema, dict) or "type" not in json_schema:
        raise SchemaViolation([("$schema", "schema must be an object with a type")])


def validates_against(json_text: str, json_schema: dict) -> bool:
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError:
        return False
    try:
        jsonschema.validate(data, json_schema)
    except jsonschema.ValidationError:
        return False
    return True


def estimate_usage(system_prompt: str, user_prompt: str, response_text: str) -> Usage:
    return Usage(
        input_tokens=count_tokens(system_prompt) + count_tokens(user_prompt),
        cached_input_tokens=0,
        output_tokens=count_tokens(response_text),
    )


class LiveProvider:
    """Generic OpenAI-compatible chat-completions client.

    Base URL and API key come from the environment (PRODEX_API_BASE,
    PRODEX_API_KEY) unless given explicitly. Transient transport failures are
    retried up to 3 times with exponential backoff; concurrent requests are
    capped by a semaphore.
    """

    RETRIES = 3
    BACKOFF_BASE_SECONDS = 0.5

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        max_in_flight: int = 4,
        timeout_seconds: float = 120.0,
    ):
        self.base_url = (base_url or os.environ.get("PRODEX_API_BASE", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("PRODEX_API_KEY", "")
        if not self.base_url:
            raise ValueError("live provider needs a base URL (PRODEX_API_BASE)")
        self.timeout_seconds = timeout_seconds
        self._slots = threading.Semaphore(max_in_flight)

    def complete_structured(
        self, model_id: str, system_prompt: str, user_prompt: str, json_schema: dict
    ) -> ChatExchange:
        check_schema(json_schema)
        payload = {
            "model": model_id,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": json_schema.get("title", "response"),
                    "schema": json_schema,
                    "strict": True,
                },
            },
        }
        body = self._post_with_retries(payload)
        try:
            choice = body["choices"][0]["message"]
        except (KeyError, IndexError, TypeError):
            raise TransportError(f"malformed completion response: {body!r}")
        if choice.get("refusal"):
            raise ProviderRefusal(str(choice["refusal"]))
        response_text = choice.get("content") or ""
        usage = self._usage_from_body(body, system_prompt, user_prompt, response_text)
        return ChatExchange(
            model_id=model_id,
            system_prompt=system_prompt,
            user_prompt=user_prompt,
            response_text=response_text,
            usage=usage,
            timestamp=time.time(),
        )

    def _post_with_retries(self, payload: dict) -> dict:
        import requests

        url = f"{self.base_url}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Optional[Exception] = None
        for attempt in range(self.RETRIES):
            if attempt:
                time.sleep(self.BACKOFF_BASE_SECONDS * (2 ** (attempt - 1)))
            with self._slots:
                try:
                    response = requests.post(
                        url, json=payload, headers=headers, timeout=self.timeout_seconds
                    )
                except requests.RequestException as exc:
                    last_error = exc
                    continue
            if response.status_code in (429,) or response.status_code >= 500:
                last_error = TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
                continue
            if response.status_code != 200:
                raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
            try:
                return response.json()
            except ValueError as exc:
                last_error = exc
                continue
        raise TransportError(f"request failed after {self.RETRIES} attempts: {last_error}")

    @staticmethod
    def _usage_from_body(body, system_prompt, user_prompt, response_text) -> Usage:
        raw = body.get("usage") or {}
        if not raw:
            return estimate_usage(system_prompt, user_prompt, response_text)
        details = raw.get("prompt_tokens_details") or {}
        return Usage(
            input_tokens=int(raw.get("prompt_tokens", 0)),
            cached_input_tokens=int(details.get("cached_tokens", 0)),
            output_tokens=int(raw.get("completion_tokens", 0)),
        )


class RecordingProvider:
    """Wraps any provider and persists each exchange in a session directory."""

    def __init__(self, inner: Provider, session_dir):
        self.inner = inner
        self.session_dir = Path(session_dir)
        self.session_dir.mkdir(parents=True, exist_ok=True)
        self._index_path = self.session_dir / "index.json"
        self._index: list[dict] = []
        if self._index_path.exists():
            self._index = json.loads(self._index_path.read_text(encoding="utf-8"))
        self._lock = threading.Lock()

    def complete_structured(self, model_id, system_prompt, user_prompt, json_schema) -> ChatExchange:
        exchange = self.inner.complete_structured(
            model_id, system_prompt, user_prompt, json_schema
        )
        key = exchange_key(model_id, system_prompt, user_prompt, json_schema)
        record = {
            "key": key,
            "model_id": model_id,
            "system_prompt": system_prompt,
            "user_prompt": user_prompt,
            "schema": json_schema,
            "response_text": exchange.response_text,
            "usage": exchange.usage.to_dict(),
            "timestamp": exchange.timestamp,
        }
        with self._lock:
            (self.session_dir / f"{key}.json").write_text(
                json.dumps(record, indent=2, ensure_ascii=False), encoding="utf-8"
            )
            if not any(e["key"] == key for e in self._index):
                self._index.append({"key": key, "model_id": model_id})
            self._index_path.write_text(
                json.dumps(self._index, indent=2), encoding="utf-8"
            )
        return exchange


class ReplayProvider:
    """Serves recorded exchanges; any unseen prompt is a ReplayMiss."""

    def __init__(self, session_dir):
        self.session_dir = Path(session_dir)
        if not (self.session_dir / "index.json").exists():
            raise ReplayMiss(f"no session index in {self.session_dir}")

    def complete_structured(self, model_id, system_prompt, user_prompt, json_schema) -> ChatExchange:
        key = exchange_key(model_id, system_prompt, user_prompt, json_schema)
        path = self.session_dir / f"{key}.json"
        if not path.exists():
            raise ReplayMiss(key)
        record = json.loads(path.read_text(encoding="utf-8"))
        return ChatExchange(
            model_id=record["model_id"],
            system_prompt=record["system_prompt"],
            user_prompt=record["user_prompt"],
            response_text=record["response_text"],
            usage=Usage.from_dict(record["usage"]),
            timestamp=float(record.get("timestamp", 0.0)),
        )


# --- Schema-enforcing call helper --------------------------------------------

CORRECTIVE_INSTRUCTION = (
    "\n\nIMPORTANT: Your previous answer did not validate against the JSON "
    "schema. Respond again with JSON that is valid against the schema, and "
    "output nothing but the JSON object."
)


def structured_call(
    provider: Provider,
    model_id: str,
    system_prompt: str,
    user_prompt: str,
    json_schema: dict,
    ledger: Optional[CostLedger] = None,
    role_tag: str = "direct",
    page_id: Optional[str] = None,
) -> ChatExchange:
    """One schema-constrained call with a single corrective retry.

    Every attempt is priced into the ledger. The retry uses an amended user
    prompt, so recorded sessions replay it under its own key.
    """
    check_schema(json_schema)
    exchange = provider.complete_structured(model_id, system_prompt, user_prompt, json_schema)
    if ledger is not None:
        ledger.add(
            exchange_key(model_id, system_prompt, user_prompt, json_schema),
            model_id,
            role_tag,
            exchange.usage,
            page_id=page_id,
        )
    if validates_against(exchange.response_text, json_schema):
        return exchange
    retry_prompt = user_prompt + CORRECTIVE_INSTRUCTION
    exchange = provider.complete_structured(model_id, system_prompt, retry_prompt, json_schema)
    if ledger is not None:
        ledger.add(
            exchange_key(model_id, system_prompt, retry_prompt, json_schema),
            model_id,
            role_tag,
            exchange.usage,
            page_id=page_id,
        )
    if validates_against(exchange.response_text, json_schema):
        return exchange
    raise SchemaViolation([("$", "provider output failed schema validation after retry")])
