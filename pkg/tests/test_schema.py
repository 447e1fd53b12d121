import json
from decimal import Decimal

import jsonschema
import pytest
from hypothesis import given, settings, strategies as st

from prodex.schema import (
    FieldKind,
    FieldSpec,
    FoodProduct,
    NUTRIENT_FIELDS,
    QuantitativeValue,
    SchemaDescriptor,
    SchemaViolation,
    filled_field_ratio,
    food_product_descriptor,
    parse_product,
    product_to_dict,
    serialize_product,
    to_json_schema,
    to_json_schema_dict,
    validate_product_json,
)


class TestDescriptor:
    def test_eight_fields(self):
        desc = food_product_descriptor()
        assert len(desc.fields) == 8
        assert desc.field_names() == ("ingredient_statement",) + NUTRIENT_FIELDS

    def test_loadable_from_json_file(self, tmp_path):
        path = tmp_path / "desc.json"
        path.write_text(
            json.dumps(
                {
                    "name": "Snack",
                    "fields": [
                        {"name": "label", "kind": "text", "description": "d"},
                        {"name": "weight", "kind": "quantity", "description": "w"},
                    ],
                }
            )
        )
        desc = SchemaDescriptor.from_json_file(path)
        assert desc.name == "Snack"
        assert desc.fields[1].kind is FieldKind.QUANTITY


class TestJsonSchemaEmission:
    def test_ingredient_description_embeds_instruction(self):
        text = to_json_schema(food_product_descriptor())
        data = json.loads(text)
        description = data["properties"]["ingredient_statement"]["description"]
        assert "Remove unnecessary prefixes" in description

    def test_single_field_descriptor_has_one_property(self):
        desc = SchemaDescriptor(
            name="One", fields=(FieldSpec("only", FieldKind.TEXT, "d"),)
        )
        data = json.loads(to_json_schema(desc))
        assert list(data["properties"]) == ["only"]

    def test_round_trip_reproduces_field_names(self):
        desc = food_product_descriptor()
        data = json.loads(to_json_schema(desc))
        assert tuple(data["properties"]) == desc.field_names()

    def test_deterministic_bytes(self):
        assert to_json_schema(food_product_descriptor()) == to_json_schema(
            food_product_descriptor()
        )

    def test_emitted_schema_is_valid_jsonschema(self):
        schema = to_json_schema_dict(food_product_descriptor())
        jsonschema.validators.validator_for(schema).check_schema(schema)


class TestParseProduct:
    def test_single_text_field(self):
        product = parse_product('{"ingredient_statement":"Zucker, Kakao"}')
        assert product.ingredient_statement == "Zucker, Kakao"
        assert len(product.populated_fields()) == 1

    def test_quantity_field_validates_against_emitted_schema(self):
        payload = '{"fat":{"value":3.5,"unit_code":"GRM"}}'
        product = parse_product(payload)
        assert product.fat == QuantitativeValue(Decimal("3.5"), "GRM")
        # independent check through the jsonschema library
        jsonschema.validate(json.loads(payload), to_json_schema_dict(food_product_descriptor()))

    def test_type_error_reports_path(self):
        with pytest.raises(SchemaViolation) as err:
            parse_product('{"fat":{"value":"lots"}}')
        assert any(path == "fat.value" for path, _ in err.value.errors)

    def test_unknown_field_rejected(self):
        with pytest.raises(SchemaViolation) as err:
            parse_product('{"brand":"X"}')
        assert err.value.errors == [("brand", "unknown field")]

    def test_decimal_comma_string_accepted(self):
        product = parse_product('{"salt":{"value":"0,9","unit_code":"GRM"}}')
        assert product.salt.value == Decimal("0.9")

    def test_null_fields_are_absent(self):
        product = parse_product('{"fat":null,"ingredient_statement":null}')
        assert product.populated_fields() == ()

    def test_prefix_stripped_with_warning(self):
        product, errors, warnings = validate_product_json(
            '{"ingredient_statement":"Zutaten: Zucker"}'
        )
        assert not errors
        assert product.ingredient_statement == "Zucker"
        assert any("prefix" in w for w in warnings)

    def test_unknown_unit_code_preserved_but_flagged(self):
        product, errors, warnings = validate_product_json(
            '{"fat":{"value":1,"unit_code":"OZ"}}'
        )
        assert not errors
        assert product.fat.unit_code == "OZ"
        assert any("unknown unit code" in w for w in warnings)

    def test_quantity_without_value_rejected(self):
        with pytest.raises(SchemaViolation):
            parse_product('{"fat":{"unit_code":"GRM"}}')

    def test_malformed_json(self):
        with pytest.raises(SchemaViolation):
            parse_product("{nope")


class TestFilledFieldRatio:
    def test_full(self):
        product = parse_product(
            json.dumps(
                {
                    "ingredient_statement": "a",
                    **{
                        n: {"value": "1", "unit_code": "GRM"}
                        for n in NUTRIENT_FIELDS
                    },
                }
            )
        )
        assert filled_field_ratio(product) == 1.0

    def test_empty(self):
        assert filled_field_ratio(FoodProduct()) == 0.0

    def test_seven_of_eight(self):
        product = parse_product(
            json.dumps(
                {n: {"value": "1", "unit_code": "GRM"} for n in NUTRIENT_FIELDS}
            )
        )
        assert filled_field_ratio(product) == 0.875


# --- property tests -----------------------------------------------------------

_decimals = st.decimals(
    min_value=Decimal("0"), max_value=Decimal("9999"), places=2, allow_nan=False
)
_units = st.sampled_from(["KJO", "E14", "GRM", "MGM"])
_quantities = st.builds(
    QuantitativeValue,
    value=_decimals,
    unit_code=st.one_of(st.none(), _units),
)
# Valid products carry canonical (stripped, prefix-free) statements.
_statements = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd", "Zs"), whitelist_characters="äöüß,"),
    min_size=1,
    max_size=40,
).map(str.strip).filter(bool)


@st.composite
def products(draw):
    fields = {}
    if draw(st.booleans()):
        fields["ingredient_statement"] = draw(_statements)
    for nutrient in NUTRIENT_FIELDS:
        if draw(st.booleans()):
            fields[nutrient] = draw(_quantities)
    return FoodProduct(**fields)


@given(products())
@settings(max_examples=100, deadline=None)
def test_parse_serialize_round_trip(product):
    again = parse_product(serialize_product(product))
    assert again == product


@given(st.dictionaries(
    keys=st.sampled_from(list(("ingredient_statement",) + NUTRIENT_FIELDS) + ["bogus"]),
    values=st.one_of(
        st.none(),
        st.text(max_size=8),
        st.integers(min_value=-5, max_value=5),
        st.fixed_dictionaries(
            {},
            optional={
                "value": st.one_of(
                    st.integers(-10, 10), st.sampled_from(["3,5", "x", "1.25", ""])
                ),
                "unit_code": st.one_of(st.none(), st.sampled_from(["GRM", "", "OZ"])),
                "extra": st.just(1),
            },
        ),
    ),
    max_size=4,
))
@settings(max_examples=200, deadline=None)
def test_parser_agrees_with_independent_jsonschema_checker(doc):
    """Dual-route check: hand validator and the jsonschema library must agree.

    The one deliberate divergence is the ingredient prefix strip, which never
    changes acceptance, and text fields that strip to empty (accepted as
    absent by the parser, accepted as a string by the schema) — both accept.
    """
    payload = json.dumps(doc, ensure_ascii=False)
    product, errors, _ = validate_product_json(payload)
    ours_ok = not errors
    schema = to_json_schema_dict(food_product_descriptor())
    try:
        jsonschema.validate(json.loads(payload), schema)
        theirs_ok = True
    except jsonschema.ValidationError:
        theirs_ok = False
    assert ours_ok == theirs_ok


def test_product_to_dict_omits_absent_fields():
    product = FoodProduct(fat=QuantitativeValue(Decimal("3.5"), "GRM"))
    assert product_to_dict(product) == {"fat": {"value": "3.5", "unit_code": "GRM"}}
