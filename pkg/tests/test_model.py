from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from intentsearch.model import (
    ChangeSpec,
    ComposedIntent,
    IntentElement,
    IntentExpression,
    MetadataConstraint,
    PriceOrder,
    RankingConfig,
    as_price,
    deserialize_expression,
    expression_from_payload,
    serialize_expression,
    validate_expression,
)
from intentsearch.parser import parse_query


def simple_expression() -> IntentExpression:
    return IntentExpression(
        options=[
            ComposedIntent([IntentElement.visual("woman"), IntentElement.visual("pixel style")])
        ],
        negatives=[IntentElement.visual("black hair")],
        changes=[
            ChangeSpec(
                source=IntentElement.visual("red hat"), target=IntentElement.visual("blue hat")
            )
        ],
        metadata=MetadataConstraint(
            collection="Azuki",
            price_order=PriceOrder.DESC,
            price_range=(Decimal("0.1"), Decimal("2.0")),
        ),
        raw_query="woman in pixel style ...",
    )


class TestValidation:
    def test_empty_options_reported(self):
        expr = IntentExpression(options=[], raw_query="x")
        assert "options must be non-empty" in validate_expression(expr)

    def test_valid_parse_result_has_no_violations(self):
        assert validate_expression(parse_query("woman")) == []

    def test_change_source_equals_target(self):
        expr = IntentExpression(
            options=[ComposedIntent([IntentElement.visual("dog")])],
            changes=[
                ChangeSpec(
                    source=IntentElement.visual("red hat"),
                    target=IntentElement.visual("red hat"),
                )
            ],
        )
        assert "change source equals target" in validate_expression(expr)

    def test_duplicate_element_texts_in_option(self):
        expr = IntentExpression(
            options=[
                ComposedIntent([IntentElement.visual("hat"), IntentElement.visual("Hat")])
            ]
        )
        assert any("duplicate element" in v for v in validate_expression(expr))

    def test_price_rank_element_needs_direction(self):
        bad = IntentElement(kind=IntentElement.visual("x").kind, text="x", direction=PriceOrder.ASC)
        expr = IntentExpression(options=[ComposedIntent([bad])])
        assert any("direction present iff" in v for v in validate_expression(expr))

    def test_inverted_price_range(self):
        expr = IntentExpression(
            options=[ComposedIntent([IntentElement.visual("dog")])],
            metadata=MetadataConstraint(price_range=(Decimal(3), Decimal(1))),
        )
        assert any("low must be <= high" in v for v in validate_expression(expr))

    def test_validation_never_mutates(self):
        expr = simple_expression()
        before = serialize_expression(expr)
        validate_expression(expr)
        assert serialize_expression(expr) == before


class TestCanonicalSerialization:
    def test_documented_schema_shape(self):
        text = serialize_expression(simple_expression())
        assert '"options":[["woman","pixel style"]]' in text
        assert '"negatives":["black hair"]' in text
        assert '"changes":[{"source":"red hat","target":"blue hat"}]' in text
        assert '"collection":"Azuki"' in text
        assert '"price_range":[0.1,2.0]' in text

    def test_absent_fields_omitted(self):
        expr = IntentExpression(
            options=[ComposedIntent([IntentElement.visual("dog")])], raw_query="dog"
        )
        text = serialize_expression(expr)
        assert text == '{"options":[["dog"]],"raw_query":"dog"}'

    def test_round_trip_identity(self):
        expr = simple_expression()
        assert deserialize_expression(serialize_expression(expr)) == expr

    def test_collection_prefix_round_trip(self):
        expr = IntentExpression(
            options=[ComposedIntent([IntentElement.collection("Bored Ape Yacht Club")])]
        )
        text = serialize_expression(expr)
        assert '"C_Bored Ape Yacht Club"' in text
        back = deserialize_expression(text)
        assert back.options[0].elements[0].kind.value == "collection"
        assert back.options[0].elements[0].text == "Bored Ape Yacht Club"

    def test_byte_stability(self):
        for query in ("woman in pixel style but no black hair", "penguin under 2 ETH"):
            a = serialize_expression(parse_query(query))
            b = serialize_expression(parse_query(query))
            assert a == b

    def test_unknown_fields_rejected(self):
        with pytest.raises(ValueError):
            expression_from_payload({"options": [["a"]], "bogus": 1})


_texts = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), max_codepoint=0x017F),
    min_size=1,
    max_size=12,
).map(lambda s: s.strip()).filter(lambda s: s and not s.startswith("C_"))


@st.composite
def expressions(draw):
    def element():
        return IntentElement.visual(draw(_texts))

    options = []
    for _ in range(draw(st.integers(1, 3))):
        seen, elements = set(), []
        for _ in range(draw(st.integers(1, 3))):
            el = element()
            if el.key not in seen:
                seen.add(el.key)
                elements.append(el)
        options.append(ComposedIntent(elements))
    negatives = [element() for _ in range(draw(st.integers(0, 2)))]
    metadata = MetadataConstraint(
        collection=draw(st.none() | _texts),
        price_order=draw(st.none() | st.sampled_from(list(PriceOrder))),
        price_range=draw(
            st.none()
            | st.tuples(
                st.decimals(min_value=0, max_value=5, places=2),
                st.decimals(min_value=5, max_value=99, places=2),
            )
        ),
    )
    return IntentExpression(
        options=options,
        negatives=negatives,
        metadata=metadata,
        raw_query=draw(st.text(max_size=20)),
    )


@given(expressions())
def test_serialization_round_trip_property(expr):
    assert deserialize_expression(serialize_expression(expr)) == expr


class TestRankingConfig:
    def test_paper_constants(self):
        cfg = RankingConfig()
        assert cfg.w == 1.0
        assert cfg.w_elem == 0.5
        assert cfg.prefilter_k == 500
        assert cfg.exclusion_fraction == 0.4
        assert cfg.alpha0 == 0.9
        assert cfg.alpha1 == 0.1
        assert cfg.triplet_alpha == 0.05

    def test_alpha_sum_enforced(self):
        with pytest.raises(ValueError):
            RankingConfig(alpha0=0.8, alpha1=0.1)

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            RankingConfig(exclusion_fraction=1.0)
        with pytest.raises(ValueError):
            RankingConfig(exclusion_fraction=0.0)


class TestPrices:
    def test_from_string_keeps_digits(self):
        assert str(as_price("2.0")) == "2.0"
        assert str(as_price("2")) == "2"

    def test_deep_fractions_quantized_to_18(self):
        value = as_price("0.1234567890123456789999")
        assert -value.as_tuple().exponent <= 18

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            as_price("not a price")
