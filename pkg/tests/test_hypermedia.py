import json

import pytest
from hypothesis import given, settings, strategies as st

from hyperttt import hypermedia
from hyperttt.hypermedia import (IRI, Form, Link, MalformedDocument, Representation,
                                 extract_form_actions, parse, serialize)
from hyperttt.vocab import HTV, WOT, UnregisteredTerm, Vocabulary

from fixtures import register_snippet

VOCAB = Vocabulary()
CTX = VOCAB.ttt_context()


def snippet_document() -> str:
    doc = {"@context": CTX.to_json(), **register_snippet()}
    for form in doc["forms"]:
        form["fields"] = ["@id"]
    return json.dumps(doc)


def test_register_snippet_parses():
    rep = parse(snippet_document(), "http://ttt.api/")
    assert [(l.href, l.method) for l in rep.links] == [
        ("http://ttt.api/", "GET"), ("http://ttt.api/Board?id=id1234", "GET")]
    first = rep.forms[0]
    assert first.href == "http://ttt.api/Square11?id=id1234"
    assert first.method == "PUT"
    assert first.operation == WOT + "writeproperty"
    assert extract_form_actions(rep)[0] == ("http://ttt.api/Square11?id=id1234", "PUT", ["@id"])


def test_snippet_without_context_uses_default():
    rep = parse(json.dumps(register_snippet()), "http://ttt.api/")
    assert len(rep.links) == 2 and len(rep.forms) == 1
    assert rep.forms[0].content_type == "application/json"


def test_empty_document():
    rep = parse("{}", "http://x/")
    assert rep.links == [] and rep.forms == [] and extract_form_actions(rep) == []


@pytest.mark.parametrize("bad", [
    "not json",
    "[]",
    '{"forms": [{"htv:methodName": "PUT"}]}',
    '{"links": [{"href": "http://a/"}]}',
    '{"links": {"href": "http://a/"}}',
    '{"forms": ["x"]}',
    '{"@context": "http://remote/context"}',
    '{"@context": {"@vocab": "https://www.w3.org/2019/wot/hypermedia#"}, "zz:p": 1}',
])
def test_malformed_documents(bad):
    with pytest.raises(MalformedDocument):
        parse(bad, "http://x/")


def test_serialize_links_and_forms():
    rep = Representation(CTX, "http://ttt.api/", links=[Link("http://ttt.api/")],
                         forms=[Form("http://ttt.api/Square11?id=g", "PUT",
                                     WOT + "writeproperty", ("@id",))])
    doc = json.loads(serialize(rep))
    assert doc["links"] == [{"href": "http://ttt.api/", "htv:methodName": "GET"}]
    assert list(doc["forms"][0]) == ["href", "contentType", "htv:methodName", "wot:op", "fields"]
    assert doc["forms"][0]["fields"] == ["@id"]
    assert doc["forms"][0]["wot:op"] == "writeproperty"


def test_serialize_empty_controls():
    doc = json.loads(serialize(Representation(CTX)))
    assert doc["links"] == [] and doc["forms"] == []


def test_unregistered_property_rejected():
    rep = Representation(CTX, properties={VOCAB.ontology_iri("ttt") + "madeUp": 1})
    with pytest.raises(UnregisteredTerm):
        serialize(rep, VOCAB)
    with pytest.raises(UnregisteredTerm):
        serialize(Representation(CTX, properties={"http://elsewhere/p": 1}))


def test_relative_hrefs_resolve_against_base():
    doc = {"links": [{"href": "Board?id=7", "htv:methodName": "GET"}],
           "forms": [{"href": "../Square22?id=7", "htv:methodName": "PUT"}],
           "@id": "Board?id=7"}
    rep = parse(json.dumps(doc), "http://h/base/path/")
    assert rep.links[0].href == "http://h/base/path/Board?id=7"
    assert rep.forms[0].href == "http://h/base/Square22?id=7"
    assert rep.id == "http://h/base/path/Board?id=7"


def test_unknown_properties_preserved():
    rep = parse('{"ttt:board": "X--------", "somethingElse": [1, 2]}', "http://x/")
    assert rep.get(VOCAB.ttt("board")) == "X--------"
    assert rep.get("https://www.w3.org/2019/wot/hypermedia#somethingElse") == [1, 2]


_ttt_props = sorted(i for i, t in VOCAB.terms.items() if t.prefix == "ttt")
_urls = st.builds(lambda host, path: f"http://{host}.example/{path}",
                  st.from_regex(r"[a-z]{1,8}", fullmatch=True),
                  st.from_regex(r"[A-Za-z0-9]{0,8}(\?id=[a-z0-9]{1,6})?", fullmatch=True))
_values = st.one_of(
    st.text(max_size=12), st.integers(-1000, 1000), st.booleans(),
    st.floats(allow_nan=False, allow_infinity=False), _urls.map(IRI),
)
_forms = st.builds(
    Form, href=_urls, method=st.sampled_from(["PUT", "POST"]),
    operation=st.one_of(st.none(), st.sampled_from([WOT + "writeproperty", VOCAB.ttt("register")])),
    fields=st.lists(st.sampled_from(["@id", "name"]), max_size=2, unique=True).map(tuple),
)
_reps = st.builds(
    Representation,
    context=st.just(CTX),
    id=st.one_of(st.none(), _urls),
    properties=st.dictionaries(st.sampled_from(_ttt_props), _values, max_size=6),
    links=st.lists(st.builds(Link, _urls), max_size=3),
    forms=st.lists(_forms, max_size=9),
)


@settings(max_examples=200, deadline=None)
@given(_reps)
def test_round_trip(rep):
    text = serialize(rep, VOCAB)
    back = parse(text, "http://base.example/")
    assert back == rep
    assert serialize(back, VOCAB) == text
    doc = json.loads(text)
    assert len(extract_form_actions(back)) == len(doc["forms"])
    for obj in doc["links"] + doc["forms"]:
        assert obj["href"].startswith("http://")


def test_method_key_is_http_vocab():
    rep = parse(snippet_document(), "http://ttt.api/")
    assert hypermedia.to_json(rep)["links"][0]["htv:methodName"] == "GET"
    assert CTX.expand("htv:methodName") == HTV + "methodName"
