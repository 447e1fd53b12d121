"""Declarative extraction and decision programs plus their interpreter.

Generated extraction logic is represented as data, not code: an extraction
program is a list of per-field rules (CSS selector, optional node index,
optional single-group capture regex, ordered post-processing ops), and a
decision program is a boolean predicate tree over text atoms. Programs are
emitted by a model as schema-constrained JSON, so the same refinement loop
that fixes products can edit programs.

The interpreter is pure and sandboxed by construction: it can only read the
document tree it is given, selector matching is capped, and each field rule
is evaluated independently of the others.

Post-ops:
    trim                      strip surrounding whitespace
    strip_label_prefix        drop a leading label such as "Zutaten:"
    parse_decimal_comma       normalize "3,5" / "3.5" to a decimal string
    to_unit_code              map raw unit text ("kJ", "g") to a unit code

Field paths address schema leaves: a text field by name
(``ingredient_statement``) or a nutrient component (``fat.value``,
``fat.unit_code``).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Optional, Union

from . import htmltree
from .compress import CompressedDocument, Variant, WrongVariant
from .schema import (
    FieldKind,
    FoodProduct,
    QuantitativeValue,
    SchemaDescriptor,
    food_product_descriptor,
)

SELECTOR_MATCH_LIMIT = 10_000
MAX_PREDICATE_DEPTH = 8

#: Default label prefixes for strip_label_prefix when none are given.
DEFAULT_LABEL_PREFIXES = ("Zutaten:", "Zutatenliste:", "Ingredients:")

POST_OP_NAMES = ("trim", "strip_label_prefix", "parse_decimal_comma", "to_unit_code")


@dataclass(frozen=True)
class ProgramIssue:
    path: str  # where in the program: e.g. "rules[2].selector"
    kind: str  # InvalidSelector | InvalidRegex | UnknownField | UnknownPostOp | Malformed
    message: str


class ProgramParseError(Exception):
    """Program rejected; issues are renderable as regeneration feedback."""

    def __init__(self, issues: list[ProgramIssue]):
        self.issues = issues
        super().__init__("; ".join(f"{i.path}: {i.message}" for i in issues))

    def render_feedback(self) -> str:
        return "\n".join(f"- {i.path}: {i.kind}: {i.message}" for i in self.issues)


@dataclass(frozen=True)
class PostOp:
    op: str
    prefixes: tuple[str, ...] = ()
    unit_map: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class FieldRule:
    field_path: str
    selector: str
    node_index: int = 0
    capture: Optional[str] = None
    post_ops: tuple[PostOp, ...] = ()


@dataclass(frozen=True)
class ExtractionProgram:
    program_id: str
    target_schema_name: str
    rules: tuple[FieldRule, ...]
    created_by: str = ""
    generation: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": "extraction",
            "program_id": self.program_id,
            "target_schema_name": self.target_schema_name,
            "created_by": self.created_by,
            "generation": self.generation,
            "rules": [_rule_to_dict(rule) for rule in self.rules],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class Predicate:
    op: str  # and | or | not | contains_keyword | matches_regex
    args: tuple["Predicate", ...] = ()
    value: Optional[str] = None

    def to_dict(self) -> dict:
        if self.op in ("contains_keyword", "matches_regex"):
            key = "value" if self.op == "contains_keyword" else "pattern"
            return {"op": self.op, key: self.value}
        return {"op": self.op, "args": [a.to_dict() for a in self.args]}


@dataclass(frozen=True)
class DecisionProgram:
    program_id: str
    predicate: Predicate
    created_by: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": "decision",
            "program_id": self.program_id,
            "created_by": self.created_by,
            "predicate": self.predicate.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)


def _rule_to_dict(rule: FieldRule) -> dict:
    ops = []
    for post in rule.post_ops:
        if post.op == "strip_label_prefix":
            ops.append({"op": post.op, "prefixes": list(post.prefixes)})
        elif post.op == "to_unit_code":
            ops.append({"op": post.op, "map": dict(post.unit_map)})
        else:
            ops.append({"op": post.op})
    return {
        "field_path": rule.field_path,
        "selector": rule.selector,
        "node_index": rule.node_index,
        "capture": rule.capture,
        "post_ops": ops,
    }


# --- Parsing ----------------------------------------------------------------

def parse_program(
    json_text: str, desc: Optional[SchemaDescriptor] = None
) -> Union[ExtractionProgram, DecisionProgram]:
    """Validate program JSON into a program object or raise ProgramParseError."""
    desc = desc or food_product_descriptor()
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise ProgramParseError([ProgramIssue("$", "Malformed", f"invalid JSON: {exc.msg}")])
    if not isinstance(data, dict):
        raise ProgramParseError([ProgramIssue("$", "Malformed", "expected a JSON object")])
    kind = data.get("kind")
    if kind == "extraction":
        return _parse_extraction(data, desc)
    if kind == "decision":
        return _parse_decision(data)
    raise ProgramParseError(
        [ProgramIssue("kind", "Malformed", f"kind must be 'extraction' or 'decision', got {kind!r}")]
    )


def _leaf_paths(desc: SchemaDescriptor) -> dict[str, str]:
    """Map of valid field paths to their leaf type: 'text'|'value'|'unit'."""
    leaves: dict[str, str] = {}
    for spec in desc.fields:
        if spec.kind is FieldKind.TEXT:
            leaves[spec.name] = "text"
        else:
            leaves[f"{spec.name}.value"] = "value"
            leaves[f"{spec.name}.unit_code"] = "unit"
    return leaves


_OPS_ALLOWED_BY_LEAF = {
    "text": {"trim", "strip_label_prefix"},
    "value": {"trim", "parse_decimal_comma"},
    "unit": {"trim", "to_unit_code"},
}


def _parse_extraction(data: dict, desc: SchemaDescriptor) -> ExtractionProgram:
    issues: list[ProgramIssue] = []
    leaves = _leaf_paths(desc)
    rules_data = data.get("rules")
    if not isinstance(rules_data, list):
        raise ProgramParseError([ProgramIssue("rules", "Malformed", "rules must be a list")])
    seen_paths: set[str] = set()
    rules: list[FieldRule] = []
    for i, entry in enumerate(rules_data):
        where = f"rules[{i}]"
        if not isinstance(entry, dict):
            issues.append(ProgramIssue(where, "Malformed", "rule must be an object"))
            continue
        path = entry.get("field_path")
        if not isinstance(path, str) or path not in leaves:
            issues.append(
                ProgramIssue(f"{where}.field_path", "UnknownField", f"unknown field path {path!r}")
            )
            continue
        if path in seen_paths:
            issues.append(
                ProgramIssue(f"{where}.field_path", "Malformed", f"duplicate rule for {path}")
            )
            continue
        seen_paths.add(path)
        selector = entry.get("selector")
        if not isinstance(selector, str):
            issues.append(ProgramIssue(f"{where}.selector", "InvalidSelector", "selector must be a string"))
            continue
        try:
            htmltree.parse_selector(selector)
        except ValueError as exc:
            issues.append(ProgramIssue(f"{where}.selector", "InvalidSelector", str(exc)))
            continue
        node_index = entry.get("node_index", 0)
        if node_index is None:
            node_index = 0
        if not isinstance(node_index, int) or node_index < 0:
            issues.append(ProgramIssue(f"{where}.node_index", "Malformed", "node_index must be a non-negative integer"))
            continue
        capture = entry.get("capture")
        if capture is not None:
            if not isinstance(capture, str):
                issues.append(ProgramIssue(f"{where}.capture", "InvalidRegex", "capture must be a string"))
                continue
            try:
                compiled = re.compile(capture)
            except re.error as exc:
                issues.append(ProgramIssue(f"{where}.capture", "InvalidRegex", str(exc)))
                continue
            if compiled.groups != 1:
                issues.append(
                    ProgramIssue(f"{where}.capture", "InvalidRegex", "capture needs exactly one group")
                )
                continue
        post_ops = _parse_post_ops(entry.get("post_ops", []), leaves[path], where, issues)
        if post_ops is None:
            continue
        rules.append(
            FieldRule(
                field_path=path,
                selector=selector,
                node_index=node_index,
                capture=capture,
                post_ops=post_ops,
            )
        )
    if issues:
        raise ProgramParseError(issues)
    return ExtractionProgram(
        program_id=str(data.get("program_id", "")) or "prog-unnamed",
        target_schema_name=str(data.get("target_schema_name", desc.name)),
        rules=tuple(rules),
        created_by=str(data.get("created_by", "")),
        generation=int(data.get("generation", 0)),
    )


def _parse_post_ops(raw, leaf_type: str, where: str, issues: list[ProgramIssue]):
    if not isinstance(raw, list):
        issues.append(ProgramIssue(f"{where}.post_ops", "Malformed", "post_ops must be a list"))
        return None
    ops: list[PostOp] = []
    ok = True
    for j, op_entry in enumerate(raw):
        spot = f"{where}.post_ops[{j}]"
        if isinstance(op_entry, str):
            op_entry = {"op": op_entry}
        if not isinstance(op_entry, dict) or "op" not in op_entry:
            issues.append(ProgramIssue(spot, "UnknownPostOp", "post op must name an op"))
            ok = False
            continue
        name = op_entry["op"]
        if name not in POST_OP_NAMES:
            issues.append(ProgramIssue(spot, "UnknownPostOp", f"unknown post op {name!r}"))
            ok = False
            continue
        if name not in _OPS_ALLOWED_BY_LEAF[leaf_type]:
            issues.append(
                ProgramIssue(spot, "UnknownPostOp", f"post op {name!r} not applicable to this field")
            )
            ok = False
            continue
        if name == "strip_label_prefix":
            prefixes = op_entry.get("prefixes") or list(DEFAULT_LABEL_PREFIXES)
            if not isinstance(prefixes, list) or not all(isinstance(p, str) for p in prefixes):
                issues.append(ProgramIssue(spot, "UnknownPostOp", "prefixes must be strings"))
                ok = False
                continue
            ops.append(PostOp(op=name, prefixes=tuple(prefixes)))
        elif name == "to_unit_code":
            mapping = op_entry.get("map")
            if not isinstance(mapping, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in mapping.items()
            ):
                issues.append(ProgramIssue(spot, "UnknownPostOp", "map must be string-to-string"))
                ok = False
                continue
            ops.append(PostOp(op=name, unit_map=tuple(sorted(mapping.items()))))
        else:
            ops.append(PostOp(op=name))
    return tuple(ops) if ok else None


def _parse_decision(data: dict) -> DecisionProgram:
    issues: list[ProgramIssue] = []
    predicate = _parse_predicate(data.get("predicate"), "predicate", 1, issues)
    if issues or predicate is None:
        raise ProgramParseError(
            issues or [ProgramIssue("predicate", "Malformed", "missing predicate")]
        )
    return DecisionProgram(
        program_id=str(data.get("program_id", "")) or "dec-unnamed",
        predicate=predicate,
        created_by=str(data.get("created_by", "")),
    )


def _parse_predicate(raw, where: str, depth: int, issues: list[ProgramIssue]) -> Optional[Predicate]:
    if depth > MAX_PREDICATE_DEPTH:
        issues.append(ProgramIssue(where, "Malformed", f"predicate deeper than {MAX_PREDICATE_DEPTH}"))
        return None
    if not isinstance(raw, dict) or "op" not in raw:
        issues.append(ProgramIssue(where, "Malformed", "predicate node must be an object with an op"))
        return None
    op = raw["op"]
    if op == "contains_keyword":
        value = raw.get("value")
        if not isinstance(value, str) or not value:
            issues.append(ProgramIssue(where, "Malformed", "contains_keyword needs a non-empty value"))
            return None
        return Predicate(op=op, value=value)
    if op == "matches_regex":
        pattern = raw.get("pattern")
        if not isinstance(pattern, str):
            issues.append(ProgramIssue(where, "InvalidRegex", "matches_regex needs a pattern"))
            return None
        try:
            re.compile(pattern)
        except re.error as exc:
            issues.append(ProgramIssue(where, "InvalidRegex", str(exc)))
            return None
        return Predicate(op=op, value=pattern)
    if op in ("and", "or", "not"):
        args_raw = raw.get("args")
        if not isinstance(args_raw, list) or not args_raw:
            issues.append(ProgramIssue(where, "Malformed", f"{op} needs args"))
            return None
        if op == "not" and len(args_raw) != 1:
            issues.append(ProgramIssue(where, "Malformed", "not takes exactly one arg"))
            return None
        args = []
        for k, arg_raw in enumerate(args_raw):
            arg = _parse_predicate(arg_raw, f"{where}.args[{k}]", depth + 1, issues)
            if arg is None:
                return None
            args.append(arg)
        return Predicate(op=op, args=tuple(args))
    issues.append(ProgramIssue(where, "Malformed", f"unknown predicate op {op!r}"))
    return None


# --- Interpretation ---------------------------------------------------------

@dataclass(frozen=True)
class ExtractionOutcome:
    product: FoodProduct
    field_status: dict[str, str]  # field_path -> extracted | no_match | post_op_failed


def run_extraction(
    prog: ExtractionProgram,
    doc: CompressedDocument,
    desc: Optional[SchemaDescriptor] = None,
) -> ExtractionOutcome:
    """Evaluate every rule independently; failures never abort other rules."""
    if doc.variant is not Variant.HTML_COMPRESSED:
        raise WrongVariant(f"extraction runs on HTML_COMPRESSED, got {doc.variant.value}")
    tree = htmltree.parse_html(doc.content)
    return run_extraction_on_tree(prog, tree, desc)


def run_extraction_on_tree(
    prog: ExtractionProgram,
    tree,
    desc: Optional[SchemaDescriptor] = None,
) -> ExtractionOutcome:
    """Like run_extraction, for callers that parsed the page tree already."""
    desc = desc or food_product_descriptor()
    field_status: dict[str, str] = {}
    leaf_values: dict[str, str] = {}
    for rule in prog.rules:
        status, value = _run_rule(rule, tree)
        field_status[rule.field_path] = status
        if status == "extracted":
            leaf_values[rule.field_path] = value
    product = _assemble_product(leaf_values, desc)
    return ExtractionOutcome(product=product, field_status=field_status)


def _run_rule(rule: FieldRule, tree) -> tuple[str, Optional[str]]:
    try:
        nodes = htmltree.select(tree, rule.selector, limit=SELECTOR_MATCH_LIMIT)
    except ValueError:
        return "no_match", None
    if rule.node_index >= len(nodes):
        return "no_match", None
    text = htmltree.text_content(nodes[rule.node_index])
    if rule.capture is not None:
        match = re.search(rule.capture, text)
        if not match or match.group(1) is None:
            return "no_match", None
        text = match.group(1)
    for post in rule.post_ops:
        text = _apply_post_op(post, text)
        if text is None:
            return "post_op_failed", None
    if not text:
        return "no_match", None
    return "extracted", text


def _apply_post_op(post: PostOp, text: str) -> Optional[str]:
    if post.op == "trim":
        return text.strip()
    if post.op == "strip_label_prefix":
        for prefix in post.prefixes:
            if text.lower().startswith(prefix.lower()):
                return text[len(prefix):].lstrip()
        return text
    if post.op == "parse_decimal_comma":
        candidate = text.strip().replace(",", ".")
        try:
            Decimal(candidate)
        except InvalidOperation:
            return None
        return candidate
    if post.op == "to_unit_code":
        key = text.strip()
        mapping = dict(post.unit_map)
        for raw, code in mapping.items():
            if raw.lower() == key.lower():
                return code
        return None
    raise AssertionError(f"unreachable post op {post.op}")


def _assemble_product(leaf_values: dict[str, str], desc: SchemaDescriptor) -> FoodProduct:
    values: dict[str, object] = {}
    for spec in desc.fields:
        if spec.kind is FieldKind.TEXT:
            if spec.name in leaf_values:
                values[spec.name] = leaf_values[spec.name]
            continue
        raw_value = leaf_values.get(f"{spec.name}.value")
        if raw_value is None:
            continue
        try:
            value = Decimal(raw_value.strip().replace(",", "."))
        except InvalidOperation:
            continue
        unit = leaf_values.get(f"{spec.name}.unit_code")
        values[spec.name] = QuantitativeValue(value=value, unit_code=unit)
    return FoodProduct(**values)  # type: ignore[arg-type]


def run_decision(prog: DecisionProgram, doc: CompressedDocument) -> bool:
    """Evaluate the predicate over a TEXT document."""
    if doc.variant is not Variant.TEXT:
        raise WrongVariant(f"decision runs on TEXT, got {doc.variant.value}")
    return _eval_predicate(prog.predicate, doc.content)


def _eval_predicate(p: Predicate, text: str) -> bool:
    if p.op == "contains_keyword":
        return p.value.lower() in text.lower()
    if p.op == "matches_regex":
        return re.search(p.value, text) is not None
    if p.op == "and":
        return all(_eval_predicate(a, text) for a in p.args)
    if p.op == "or":
        return any(_eval_predicate(a, text) for a in p.args)
    if p.op == "not":
        return not _eval_predicate(p.args[0], text)
    raise AssertionError(f"unreachable predicate op {p.op}")


def count_extracted(product: FoodProduct) -> int:
    """Populated top-level fields; a nutrient counts iff its value is set."""
    return len(product.populated_fields())


# --- JSON Schemas for schema-constrained program generation ----------------

def extraction_program_json_schema(desc: Optional[SchemaDescriptor] = None) -> dict:
    desc = desc or food_product_descriptor()
    paths = sorted(_leaf_paths(desc))
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "ExtractionProgram",
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", "program_id", "rules"],
        "properties": {
            "kind": {"const": "extraction"},
            "program_id": {"type": "string", "minLength": 1},
            "target_schema_name": {"type": "string"},
            "created_by": {"type": "string"},
            "generation": {"type": "integer", "minimum": 0},
            "rules": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["field_path", "selector"],
                    "properties": {
                        "field_path": {"enum": paths},
                        "selector": {"type": "string", "minLength": 1},
                        "node_index": {"type": "integer", "minimum": 0},
                        "capture": {"type": ["string", "null"]},
                        "post_ops": {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "required": ["op"],
                                "properties": {
                                    "op": {"enum": list(POST_OP_NAMES)},
                                    "prefixes": {
                                        "type": "array",
                                        "items": {"type": "string"},
                                    },
                                    "map": {
                                        "type": "object",
                                        "additionalProperties": {"type": "string"},
                                    },
                                },
                                "additionalProperties": False,
                            },
                        },
                    },
                },
            },
        },
    }


def decision_program_json_schema() -> dict:
    predicate_schema = {
        "type": "object",
        "oneOf": [
            {
                "properties": {
                    "op": {"const": "contains_keyword"},
                    "value": {"type": "string", "minLength": 1},
                },
                "required": ["op", "value"],
                "additionalProperties": False,
            },
            {
                "properties": {
                    "op": {"const": "matches_regex"},
                    "pattern": {"type": "string", "minLength": 1},
                },
                "required": ["op", "pattern"],
                "additionalProperties": False,
            },
            {
                "properties": {
                    "op": {"enum": ["and", "or", "not"]},
                    "args": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"$ref": "#/$defs/predicate"},
                    },
                },
                "required": ["op", "args"],
                "additionalProperties": False,
            },
        ],
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "DecisionProgram",
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", "program_id", "predicate"],
        "properties": {
            "kind": {"const": "decision"},
            "program_id": {"type": "string", "minLength": 1},
            "created_by": {"type": "string"},
            "predicate": {"$ref": "#/$defs/predicate"},
        },
        "$defs": {"predicate": predicate_schema},
    }
