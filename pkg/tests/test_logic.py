import math

import pytest
from hypothesis import given, settings, strategies as st

from mmln.errors import ParseError
from mmln.logic import (Atom, Literal, Model, PredicateSchema, Role, Term, WeightedFormula,
                        format_model, format_weight, load_model, parse_model, validate_model)

EQ1 = "Fever(case)\nConsolidation(case)\nPneumonia(case)\n2.0 Fever(x) ^ Consolidation(x) => Pneumonia(x)"

PAPER_WEIGHTS = [0.933901, 3.59945, 3.49846, 1.55942, 1.24346]


def test_parse_eq1():
    m = parse_model(EQ1)
    assert len(m.schemas) == 3
    assert len(m.formulas) == 1
    f = m.formulas[0]
    assert f.weight == 2.0
    assert [str(l) for l in f.body] == ["Fever(x)", "Consolidation(x)"]
    assert str(f.head) == "Pneumonia(x)"
    assert m.query.name == "Pneumonia"
    assert m.schema("Fever").role is Role.EVIDENCE


def test_paper_model_parses_in_order(data_dir):
    m = load_model(data_dir / "models" / "pneumonia_learned.mln")
    assert [f.weight for f in m.formulas] == PAPER_WEIGHTS
    assert [f.id for f in m.formulas] == [0, 1, 2, 3, 4]
    assert [l.atom.predicate for l in m.formulas[0].body] == [
        "CXR_Lung_inflammation", "Cough", "Expectoration"]
    assert validate_model(m) == []


def test_undeclared_predicate_error():
    with pytest.raises(ParseError) as exc:
        parse_model("2.0 Fever(x) => Pneumonia(x)")
    assert exc.value.code == "UndeclaredPredicate"
    assert "Fever" in str(exc.value)
    assert (exc.value.line, exc.value.column) == (1, 5)


@pytest.mark.parametrize("text, code, line", [
    ("Fever(case)\nPneumonia(case)\n1 Pneumonia(x) => Fever(x)", "HeadNotQuery", 3),
    ("Fever(case)\nPneumonia(case)\n1 Fever(x) => Pneumonia(y)", "UnsafeVariable", 3),
    ("Fever(case)\nFever(case)\nPneumonia(case)", "DuplicatePredicate", 2),
    ("Fever(case)\nPneumonia(case)\n1 Fever(x, y) => Pneumonia(x)", "ArityMismatch", 3),
    ("Fever(case)\nPneumonia(case)\n1 Fever(P1) => Pneumonia(P1)", "ConstantInFormula", 3),
    ("Fever(case)\nPneumonia(case)\n1 Fever(x) => !Pneumonia(x)", "NegatedHead", 3),
    ("Fever(case)\nPneumonia(case)\n1 Fever(x) Pneumonia(x)", "SyntaxError", 3),
    ("Fever(case)\nPneumonia(case)\n1 Fever(x) => Pneumonia(x) junk", "SyntaxError", 3),
    ("Fever(case)\n  Pneu$monia(case)", "SyntaxError", 2),
    ("Fever(case)", "QueryCount", 1),
])
def test_located_errors(text, code, line):
    with pytest.raises(ParseError) as exc:
        parse_model(text)
    assert exc.value.code == code
    assert exc.value.line == line


def test_syntax_error_column():
    with pytest.raises(ParseError) as exc:
        parse_model("Pneumonia(case)\nFever(case)\n1.5 Fever(x) ^ => Pneumonia(x)")
    assert (exc.value.line, exc.value.column) == (3, 16)


def test_comments_blank_lines_and_negation():
    text = """
    // header comment
    Fever(case)   // trailing
    Cough(case)
    Pneumonia(case)

    -1.25 Cough(x) ^ !Fever(x) => Pneumonia(x)  // exclusion-style rule
    """
    m = parse_model(text)
    f = m.formulas[0]
    assert f.weight == -1.25
    assert f.body == (Literal(Atom("Cough", (Term("x"),))), Literal(Atom("Fever", (Term("x"),)), False))


def test_custom_query_name():
    m = parse_model("Fever(case)\nFlu(case)\n1 Fever(x) => Flu(x)", query="Flu")
    assert m.query.name == "Flu"


def test_format_eq1():
    text = format_model(parse_model(EQ1))
    assert "2.000000 Fever(x) ^ Consolidation(x) => Pneumonia(x)" in text.splitlines()


def test_format_declarations_only():
    text = format_model(parse_model("Fever(case)\nPneumonia(case)"))
    assert text == "Fever(case)\nPneumonia(case)\n"


def test_format_paper_model(data_dir):
    m = load_model(data_dir / "models" / "pneumonia_learned.mln")
    rules = [l for l in format_model(m).splitlines() if l[:1].isdigit()]
    assert len(rules) == 5
    assert [float(r.split()[0]) for r in rules] == PAPER_WEIGHTS
    assert rules[0].startswith("0.933901 ")
    assert parse_model(format_model(m)) == m


@pytest.mark.parametrize("w, text", [
    (2.0, "2.000000"), (0.933901, "0.933901"), (-1.5, "-1.500000"),
    (0.1234567891, "0.1234567891"), (1e-9, "0.000000001"),
])
def test_format_weight(w, text):
    assert format_weight(w) == text
    assert float(format_weight(w)) == w


def test_validate_head_not_query():
    fever = PredicateSchema("Fever", ("case",))
    pn = PredicateSchema("Pneumonia", ("case",), Role.QUERY)
    x = (Term("x"),)
    f = WeightedFormula(0, 1.0, (Literal(Atom("Pneumonia", x)),), Atom("Fever", x))
    assert [v.code for v in validate_model(Model((fever, pn), (f,)))] == ["HeadNotQuery"]


def test_validate_unsafe_variable():
    fever = PredicateSchema("Fever", ("case",))
    pn = PredicateSchema("Pneumonia", ("case",), Role.QUERY)
    f = WeightedFormula(0, 1.0, (Literal(Atom("Fever", (Term("x"),))),), Atom("Pneumonia", (Term("y"),)))
    assert [v.code for v in validate_model(Model((fever, pn), (f,)))] == ["UnsafeVariable"]


def test_validate_collects_every_violation():
    pn = PredicateSchema("Pneumonia", ("case",), Role.QUERY)
    f = WeightedFormula(3, math.inf, (Literal(Atom("Ghost", (Term("x"),))),), Atom("Pneumonia", (Term("y"),)))
    codes = {v.code for v in validate_model(Model((pn, pn), (f,)))}
    assert codes == {"DuplicatePredicate", "QueryCount", "FormulaOrder", "NonFiniteWeight",
                     "UndeclaredPredicate", "UnsafeVariable"}


def test_with_weights_keeps_structure():
    m = parse_model(EQ1)
    m2 = m.with_weights([-0.5])
    assert m2.formulas[0].weight == -0.5
    assert m2.formulas[0].body == m.formulas[0].body


# --------------------------------------------------------------- properties

names = st.from_regex(r"[A-Z][a-z0-9_]{0,8}", fullmatch=True)
weights = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


@st.composite
def models(draw):
    evidence = draw(st.lists(names.filter(lambda n: n != "Pneumonia"), min_size=1, max_size=6, unique=True))
    schemas = [PredicateSchema(n, ("case",)) for n in evidence]
    schemas.insert(draw(st.integers(0, len(schemas))), PredicateSchema("Pneumonia", ("case",), Role.QUERY))
    formulas = []
    for i in range(draw(st.integers(0, 5))):
        preds = draw(st.lists(st.sampled_from(evidence), min_size=1, max_size=4))
        body = tuple(Literal(Atom(p, (Term("x"),)), draw(st.booleans())) for p in preds)
        formulas.append(WeightedFormula(i, draw(weights), body, Atom("Pneumonia", (Term("x"),))))
    return Model(tuple(schemas), tuple(formulas))


@given(models())
@settings(max_examples=300)
def test_round_trip(m):
    assert validate_model(m) == []
    back = parse_model(format_model(m))
    assert back == m
    for a, b in zip(back.formulas, m.formulas):
        assert abs(a.weight - b.weight) <= 1e-9


@given(st.binary(max_size=200))
@settings(max_examples=500)
def test_parser_total_on_bytes(data):
    try:
        parse_model(data)
    except ParseError as exc:
        assert exc.line >= 1 and exc.column >= 1


@given(st.text(alphabet="Fevr(cas)x^=>!.0123- \n/P_", max_size=120))
@settings(max_examples=500)
def test_parser_total_on_near_miss_text(text):
    try:
        m = parse_model(text)
    except ParseError as exc:
        assert exc.line >= 1 and exc.column >= 1
    else:
        assert validate_model(m) == []
