"""Target data model: an eight-attribute food product record.

One free-text ingredient statement plus the seven quantitative nutrients of
the EU mandatory nutrition declaration (energy, fat, saturated fat,
carbohydrates, sugars, protein, salt), each a value/unit pair. All fields are
optional; absence is meaningful and must never be fabricated.

The field list and per-field descriptions live in a ``SchemaDescriptor`` that
can also be loaded from JSON, so new target schemas work without code
changes. ``to_json_schema`` emits the descriptor as JSON Schema text for
prompts and response validation; ``parse_product`` is the inverse direction,
turning (possibly messy) model output into a validated ``FoodProduct``.

Numbers accept both decimal point and decimal comma on input and are held as
``Decimal``; canonical serialization uses the decimal point and string-encoded
numbers to avoid float round-tripping.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields as dc_fields
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import Optional, Union

NUTRIENT_FIELDS = (
    "energy",
    "fat",
    "saturated_fat",
    "carbohydrates",
    "sugars",
    "protein",
    "salt",
)

#: Unit codes accepted without a warning (kilojoule, kilocalorie, gram, milligram).
KNOWN_UNIT_CODES = frozenset({"KJO", "E14", "GRM", "MGM"})

#: Label prefixes stripped from ingredient statements on parse.
KNOWN_LABEL_PREFIXES = ("Zutaten:", "Zutatenliste:", "Ingredients:")

_DECIMAL_PATTERN = r"^-?[0-9]+(?:[.,][0-9]+)?$"
_DECIMAL_RE = re.compile(_DECIMAL_PATTERN)


class SchemaViolation(Exception):
    """Validation failure; carries (field_path, reason) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        summary = "; ".join(f"{path}: {reason}" for path, reason in errors)
        super().__init__(summary or "schema violation")


class FieldKind(str, Enum):
    TEXT = "text"
    QUANTITY = "quantity"


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: FieldKind
    description: str


@dataclass(frozen=True)
class SchemaDescriptor:
    name: str
    fields: tuple[FieldSpec, ...]

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def field_map(self) -> dict[str, FieldSpec]:
        return {f.name: f for f in self.fields}

    @staticmethod
    def from_json_file(path: Union[str, Path]) -> "SchemaDescriptor":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        specs = tuple(
            FieldSpec(
                name=entry["name"],
                kind=FieldKind(entry["kind"]),
                description=entry.get("description", ""),
            )
            for entry in data["fields"]
        )
        return SchemaDescriptor(name=data["name"], fields=specs)


_INGREDIENT_DESCRIPTION = (
    "Information on the constituent ingredient make up of the product "
    "specified as one string.\n\nAdditional description:\n"
    "- Remove unnecessary prefixes"
)

_NUTRIENT_DESCRIPTIONS = {
    "energy": "Energy content of the product per reference quantity.",
    "fat": "Total fat content of the product per reference quantity.",
    "saturated_fat": "Saturated fatty acid content per reference quantity.",
    "carbohydrates": "Total carbohydrate content per reference quantity.",
    "sugars": "Sugar content per reference quantity.",
    "protein": "Protein content of the product per reference quantity.",
    "salt": "Salt content of the product per reference quantity.",
}


def food_product_descriptor() -> SchemaDescriptor:
    """The default eight-field food product descriptor."""
    specs = [FieldSpec("ingredient_statement", FieldKind.TEXT, _INGREDIENT_DESCRIPTION)]
    for name in NUTRIENT_FIELDS:
        specs.append(FieldSpec(name, FieldKind.QUANTITY, _NUTRIENT_DESCRIPTIONS[name]))
    return SchemaDescriptor(name="FoodProduct", fields=tuple(specs))


@dataclass(frozen=True)
class QuantitativeValue:
    value: Decimal
    unit_code: Optional[str] = None

    def __post_init__(self):
        if not self.value.is_finite():
            raise ValueError("quantitative value must be finite")
        if self.unit_code is not None and not self.unit_code:
            raise ValueError("unit_code must be non-empty when given")

    def display(self) -> str:
        text = format(self.value, "f")
        return f"{text} {self.unit_code}" if self.unit_code else text


@dataclass(frozen=True)
class FoodProduct:
    ingredient_statement: Optional[str] = None
    energy: Optional[QuantitativeValue] = None
    fat: Optional[QuantitativeValue] = None
    saturated_fat: Optional[QuantitativeValue] = None
    carbohydrates: Optional[QuantitativeValue] = None
    sugars: Optional[QuantitativeValue] = None
    protein: Optional[QuantitativeValue] = None
    salt: Optional[QuantitativeValue] = None

    def get(self, name: str):
        return getattr(self, name)

    @staticmethod
    def field_names() -> tuple[str, ...]:
        return tuple(f.name for f in dc_fields(FoodProduct))

    def populated_fields(self) -> tuple[str, ...]:
        return tuple(n for n in self.field_names() if getattr(self, n) is not None)


def filled_field_ratio(product: FoodProduct) -> float:
    """Populated top-level fields over the schema's eight fields."""
    names = product.field_names()
    return len(product.populated_fields()) / len(names)


# --- JSON Schema emission -------------------------------------------------

def to_json_schema(desc: SchemaDescriptor) -> str:
    """Emit the descriptor as JSON Schema text (deterministic bytes)."""
    return json.dumps(to_json_schema_dict(desc), indent=2, ensure_ascii=False)


def to_json_schema_dict(desc: SchemaDescriptor) -> dict:
    properties = {}
    needs_quantity = False
    for spec in desc.fields:
        if spec.kind is FieldKind.TEXT:
            properties[spec.name] = {
                "description": spec.description,
                "anyOf": [{"type": "string"}, {"type": "null"}],
            }
        else:
            needs_quantity = True
            properties[spec.name] = {
                "description": spec.description,
                "anyOf": [
                    {"$ref": "#/$defs/QuantitativeValue"},
                    {"type": "null"},
                ],
            }
    schema = {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": desc.name,
        "type": "object",
        "additionalProperties": False,
        "properties": properties,
    }
    if needs_quantity:
        schema["$defs"] = {
            "QuantitativeValue": {
                "type": "object",
                "additionalProperties": False,
                "required": ["value"],
                "properties": {
                    "value": {
                        "description": "Numeric quantity of the measurement.",
                        "anyOf": [
                            {"type": "number"},
                            {"type": "string", "pattern": _DECIMAL_PATTERN},
                        ],
                    },
                    "unit_code": {
                        "description": "Measurement unit code (e.g. KJO, E14, GRM, MGM).",
                        "anyOf": [
                            {"type": "string", "minLength": 1},
                            {"type": "null"},
                        ],
                    },
                },
            }
        }
    return schema


# --- Parsing and serialization ---------------------------------------------

def parse_decimal(raw) -> Decimal:
    """Decimal from a JSON number or a string using point or comma."""
    if isinstance(raw, Decimal):
        return raw
    if isinstance(raw, int):
        return Decimal(raw)
    if isinstance(raw, float):
        return Decimal(str(raw))
    if isinstance(raw, str):
        text = raw.strip()
        if not _DECIMAL_RE.match(text):
            raise InvalidOperation(f"not a decimal: {raw!r}")
        return Decimal(text.replace(",", "."))
    raise InvalidOperation(f"not a decimal: {raw!r}")


def strip_known_prefix(text: str) -> tuple[str, bool]:
    for prefix in KNOWN_LABEL_PREFIXES:
        if text.lower().startswith(prefix.lower()):
            return text[len(prefix):].lstrip(), True
    return text, False


def validate_product_json(
    json_text: str, desc: Optional[SchemaDescriptor] = None
) -> tuple[Optional[FoodProduct], list[tuple[str, str]], list[str]]:
    """Validate and build a product; returns (product|None, errors, warnings)."""
    desc = desc or food_product_descriptor()
    errors: list[tuple[str, str]] = []
    warnings: list[str] = []
    try:
        data = json.loads(json_text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        return None, [("$", f"invalid JSON: {exc.msg}")], warnings
    if not isinstance(data, dict):
        return None, [("$", "top level must be a JSON object")], warnings

    known = desc.field_map()
    values: dict[str, object] = {}
    for key, raw in data.items():
        if key not in known:
            errors.append((key, "unknown field"))
            continue
        if raw is None:
            continue
        spec = known[key]
        if spec.kind is FieldKind.TEXT:
            if not isinstance(raw, str):
                errors.append((key, f"expected string, got {type(raw).__name__}"))
                continue
            text, stripped = strip_known_prefix(raw.strip())
            if stripped:
                warnings.append(f"{key}: removed label prefix from statement")
            if text:
                values[key] = text
        else:
            qv = _parse_quantity(key, raw, errors, warnings)
            if qv is not None:
                values[key] = qv
    if errors:
        return None, errors, warnings
    return FoodProduct(**values), errors, warnings  # type: ignore[arg-type]


def _parse_quantity(path, raw, errors, warnings) -> Optional[QuantitativeValue]:
    if not isinstance(raw, dict):
        errors.append((path, f"expected object, got {type(raw).__name__}"))
        return None
    unknown = set(raw) - {"value", "unit_code"}
    for key in sorted(unknown):
        errors.append((f"{path}.{key}", "unknown field"))
    if "value" not in raw or raw["value"] is None:
        errors.append((f"{path}.value", "missing value"))
        return None
    try:
        value = parse_decimal(raw["value"])
    except InvalidOperation:
        errors.append((f"{path}.value", f"malformed number: {raw['value']!r}"))
        return None
    unit = raw.get("unit_code")
    if unit is not None:
        if not isinstance(unit, str) or not unit:
            errors.append((f"{path}.unit_code", "must be a non-empty string"))
            return None
        if unit.upper() not in KNOWN_UNIT_CODES:
            warnings.append(f"{path}.unit_code: unknown unit code {unit!r}")
    if unknown:
        return None
    return QuantitativeValue(value=value, unit_code=unit)


def parse_product(json_text: str, desc: Optional[SchemaDescriptor] = None) -> FoodProduct:
    """Parse model output into a product; raises SchemaViolation on failure."""
    product, errors, _ = validate_product_json(json_text, desc)
    if errors:
        raise SchemaViolation(errors)
    assert product is not None
    return product


def product_to_dict(product: FoodProduct) -> dict:
    """JSON-ready dict; absent fields omitted, numbers as canonical strings."""
    out: dict[str, object] = {}
    for name in product.field_names():
        value = getattr(product, name)
        if value is None:
            continue
        if isinstance(value, QuantitativeValue):
            entry: dict[str, object] = {"value": format(value.value, "f")}
            if value.unit_code is not None:
                entry["unit_code"] = value.unit_code
            out[name] = entry
        else:
            out[name] = value
    return out


def serialize_product(product: FoodProduct) -> str:
    """Canonical product JSON (stable bytes for a given product)."""
    return json.dumps(product_to_dict(product), indent=2, ensure_ascii=False)


def product_from_dict(data: dict) -> FoodProduct:
    return parse_product(json.dumps(data, ensure_ascii=False, default=str))
