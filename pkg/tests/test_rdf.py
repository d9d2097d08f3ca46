import pytest
import rdflib
from hypothesis import given, settings, strategies as st

from hyperttt.rdf import (RDF_TYPE, XSD_INTEGER, Literal, TripleSet, TurtleError,
                          parse_turtle, serialize_turtle)
from hyperttt.vocab import XSD

EX = "http://example.org/ns#"
PREFIXES = {"ex": EX, "xsd": XSD}


def to_rdflib(graph: TripleSet) -> set:
    out = set()
    for s, p, o in graph:
        if isinstance(o, Literal):
            if o.lang:
                obj = rdflib.Literal(o.value, lang=o.lang)
            elif o.datatype:
                obj = rdflib.Literal(o.value, datatype=rdflib.URIRef(o.datatype))
            else:
                obj = rdflib.Literal(o.value)
        else:
            obj = rdflib.URIRef(o)
        out.add((rdflib.URIRef(s), rdflib.URIRef(p), obj))
    return out


def test_empty_graph_has_only_prefixes():
    text = serialize_turtle(TripleSet(), PREFIXES)
    assert [ln for ln in text.splitlines() if ln.strip()] == [
        f"@prefix ex: <{EX}> .", f"@prefix xsd: <{XSD}> ."]
    assert len(parse_turtle(text)) == 0


def test_single_triple_single_statement_line():
    g = TripleSet([(EX + "a", RDF_TYPE, EX + "Thing")])
    lines = [ln for ln in serialize_turtle(g, PREFIXES).splitlines()
             if ln.strip() and not ln.startswith("@prefix")]
    assert lines == ["ex:a a ex:Thing ."]


def test_set_semantics():
    g = TripleSet()
    g.add(EX + "a", EX + "p", Literal.of(1))
    g.add(EX + "a", EX + "p", Literal.of(1))
    assert len(g) == 1


def test_literal_datatypes():
    assert Literal.of(3) == Literal("3", XSD_INTEGER)
    assert Literal.of(True).value == "true"
    assert Literal.of("x") == Literal("x")


def test_deterministic_and_order_independent():
    triples = [(EX + f"s{i % 3}", EX + f"p{i % 2}", Literal.of(i)) for i in range(10)]
    a = serialize_turtle(TripleSet(triples), PREFIXES)
    b = serialize_turtle(TripleSet(reversed(triples)), PREFIXES)
    assert a == b


def test_parser_features():
    text = """
    @prefix ex: <http://example.org/ns#> .
    PREFIX xsd: <http://www.w3.org/2001/XMLSchema#>
    ex:a a ex:Thing ;
        ex:name "A \\"quoted\\" name"@en , "plain" ;
        ex:n 42 ;
        ex:d "1.5"^^xsd:decimal ;
        ex:ok true .
    <http://example.org/other> ex:link ex:a .
    """
    g = parse_turtle(text)
    assert len(g) == 7
    assert (EX + "a", EX + "name", Literal('A "quoted" name', None, "en")) in g
    assert (EX + "a", EX + "n", Literal("42", XSD_INTEGER)) in g
    assert ("http://example.org/other", EX + "link", EX + "a") in g
    assert to_rdflib(g) == set(rdflib.Graph().parse(data=text, format="turtle"))


def test_parser_rejects_garbage():
    with pytest.raises(TurtleError):
        parse_turtle("ex:a ex:b ex:c .")  # undeclared prefix
    with pytest.raises(TurtleError):
        parse_turtle("@prefix ex: <http://e/> . ex:a ex:b")


_local = st.from_regex(r"[A-Za-z][A-Za-z0-9_]{0,6}", fullmatch=True)
_obj = st.one_of(
    _local.map(lambda s: EX + s),
    st.integers(-10**6, 10**6).map(Literal.of),
    st.text(st.characters(blacklist_categories=("Cs",)), max_size=20).map(Literal.of),
    st.booleans().map(Literal.of),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(_local.map(lambda s: EX + s), _local.map(lambda s: EX + s), _obj),
                max_size=15))
def test_round_trip_and_rdflib_agreement(triples):
    g = TripleSet(triples)
    text = serialize_turtle(g, PREFIXES)
    assert parse_turtle(text) == g
    ref = rdflib.Graph().parse(data=text, format="turtle")
    assert set(ref) == to_rdflib(g)
