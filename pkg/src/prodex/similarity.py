"""Scored comparison between an extracted product and a reference product.

Every top-level attribute gets a local score in [0, 1]; the overall score is
the arithmetic mean of the top-level scores. Disagreements are classified as
one of three kinds: the extracted object has an attribute the reference lacks
(additional), lacks one the reference has (missing), or both are present but
disagree (value mismatch). Value/unit pairs are compared recursively, their
attribute score being the mean of the two nested comparisons.

Free-text fields earn partial credit through normalized Levenshtein
similarity; every other primitive is scored all-or-nothing. Numeric equality
is exact after decimal normalization; unit codes compare case-insensitively.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .schema import (
    FieldKind,
    FoodProduct,
    QuantitativeValue,
    SchemaDescriptor,
    food_product_descriptor,
)


class MismatchKind(str, Enum):
    ADDITIONAL_ATTRIBUTE = "AdditionalAttribute"
    MISSING_ATTRIBUTE = "MissingAttribute"
    VALUE_MISMATCH = "ValueMismatch"


@dataclass(frozen=True)
class Mismatch:
    field_path: str
    kind: MismatchKind
    extracted_value: Optional[str]
    expected_value: Optional[str]


@dataclass(frozen=True)
class SimilarityReport:
    overall: float
    per_attribute: dict[str, float]
    mismatches: tuple[Mismatch, ...]

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "per_attribute": dict(self.per_attribute),
            "mismatches": [
                {
                    "field_path": m.field_path,
                    "kind": m.kind.value,
                    "extracted_value": m.extracted_value,
                    "expected_value": m.expected_value,
                }
                for m in self.mismatches
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


def levenshtein(a: str, b: str) -> int:
    """Edit distance via the usual two-row dynamic program."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def string_similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity in [0, 1]."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return max(0.0, 1.0 - levenshtein(a, b) / longest)


def _display(value) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, QuantitativeValue):
        return value.display()
    return str(value)


def compare(
    extracted: FoodProduct,
    reference: FoodProduct,
    desc: Optional[SchemaDescriptor] = None,
) -> SimilarityReport:
    """Score the extracted product against the reference."""
    desc = desc or food_product_descriptor()
    per_attribute: dict[str, float] = {}
    mismatches: list[Mismatch] = []
    for spec in desc.fields:
        got = extracted.get(spec.name)
        want = reference.get(spec.name)
        if got is None and want is None:
            per_attribute[spec.name] = 1.0
            continue
        if got is not None and want is None:
            per_attribute[spec.name] = 0.0
            mismatches.append(
                Mismatch(spec.name, MismatchKind.ADDITIONAL_ATTRIBUTE, _display(got), None)
            )
            continue
        if got is None and want is not None:
            per_attribute[spec.name] = 0.0
            mismatches.append(
                Mismatch(spec.name, MismatchKind.MISSING_ATTRIBUTE, None, _display(want))
            )
            continue
        if spec.kind is FieldKind.TEXT:
            per_attribute[spec.name] = _score_text(spec.name, got, want, mismatches)
        else:
            per_attribute[spec.name] = _score_quantity(spec.name, got, want, mismatches)
    overall = sum(per_attribute.values()) / len(per_attribute)
    return SimilarityReport(
        overall=overall,
        per_attribute=per_attribute,
        mismatches=tuple(mismatches),
    )


def _score_text(path: str, got: str, want: str, mismatches: list[Mismatch]) -> float:
    if got == want:
        return 1.0
    mismatches.append(Mismatch(path, MismatchKind.VALUE_MISMATCH, got, want))
    return string_similarity(got, want)


def _score_quantity(
    path: str,
    got: QuantitativeValue,
    want: QuantitativeValue,
    mismatches: list[Mismatch],
) -> float:
    # value: exact decimal equality
    if got.value == want.value:
        value_score = 1.0
    else:
        value_score = 0.0
        mismatches.append(
            Mismatch(
                f"{path}.value",
                MismatchKind.VALUE_MISMATCH,
                format(got.value, "f"),
                format(want.value, "f"),
            )
        )
    # unit: case-insensitive equality, absences handled like attributes
    if got.unit_code is None and want.unit_code is None:
        unit_score = 1.0
    elif got.unit_code is not None and want.unit_code is None:
        unit_score = 0.0
        mismatches.append(
            Mismatch(f"{path}.unit_code", MismatchKind.ADDITIONAL_ATTRIBUTE, got.unit_code, None)
        )
    elif got.unit_code is None and want.unit_code is not None:
        unit_score = 0.0
        mismatches.append(
            Mismatch(f"{path}.unit_code", MismatchKind.MISSING_ATTRIBUTE, None, want.unit_code)
        )
    elif got.unit_code.upper() == want.unit_code.upper():
        unit_score = 1.0
    else:
        unit_score = 0.0
        mismatches.append(
            Mismatch(
                f"{path}.unit_code",
                MismatchKind.VALUE_MISMATCH,
                got.unit_code,
                want.unit_code,
            )
        )
    return (value_score + unit_score) / 2


_KIND_LABEL = {
    MismatchKind.ADDITIONAL_ATTRIBUTE: "additional attribute",
    MismatchKind.MISSING_ATTRIBUTE: "missing attribute",
    MismatchKind.VALUE_MISMATCH: "value mismatch",
}


def render_feedback(report: SimilarityReport) -> str:
    """Stable textual feedback for refinement prompts; one line per mismatch."""
    if not report.mismatches:
        return "PERFECT MATCH"
    lines = []
    for m in report.mismatches:
        expected = m.expected_value if m.expected_value is not None else "nothing"
        extracted = m.extracted_value if m.extracted_value is not None else "nothing"
        lines.append(
            f"- {m.field_path}: {_KIND_LABEL[m.kind]}; "
            f"expected {expected!r}, extracted {extracted!r}"
        )
    return "\n".join(lines)
