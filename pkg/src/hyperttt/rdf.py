"""A small in-memory triple set with a deterministic Turtle writer and a
parser for the Turtle subset we produce (prefixes, IRIs, prefixed names,
``a``, literals, ``;`` and ``,`` lists). No blank nodes or collections."""

from __future__ import annotations

import re
from typing import Iterable, Iterator, Mapping, NamedTuple, Union

from .vocab import RDF, XSD

RDF_TYPE = RDF + "type"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_DOUBLE = XSD + "double"
XSD_BOOLEAN = XSD + "boolean"
XSD_STRING = XSD + "string"


class TurtleError(ValueError):
    pass


class Literal(NamedTuple):
    value: str
    datatype: str | None = None
    lang: str | None = None

    @classmethod
    def of(cls, value: object) -> "Literal":
        if isinstance(value, bool):
            return cls("true" if value else "false", XSD_BOOLEAN)
        if isinstance(value, int):
            return cls(str(value), XSD_INTEGER)
        if isinstance(value, float):
            return cls(repr(value), XSD_DOUBLE)
        return cls(str(value))


Object = Union[str, Literal]
Triple = tuple[str, str, Object]


def _obj_key(o: Object) -> tuple:
    if isinstance(o, Literal):
        return (1, o.value, o.datatype or "", o.lang or "")
    return (0, o, "", "")


class TripleSet:
    """Set of ``(subject, predicate, object)``; IRIs are plain strings,
    literals are :class:`Literal`."""

    def __init__(self, triples: Iterable[Triple] = ()):
        self._triples: set[Triple] = set()
        for t in triples:
            self.add(*t)

    def add(self, s: str, p: str, o: Object) -> None:
        if not isinstance(o, (str, Literal)):
            o = Literal.of(o)
        self._triples.add((s, p, o))

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __contains__(self, t: object) -> bool:
        return t in self._triples

    def __eq__(self, other: object) -> bool:
        if isinstance(other, TripleSet):
            return self._triples == other._triples
        return NotImplemented

    def sorted(self) -> list[Triple]:
        return sorted(self._triples, key=lambda t: (t[0], t[1], _obj_key(t[2])))

    def subjects(self, p: str, o: Object) -> list[str]:
        return sorted(s for s, p2, o2 in self._triples if p2 == p and o2 == o)

    def objects(self, s: str, p: str) -> list[Object]:
        return sorted((o for s2, p2, o in self._triples if s2 == s and p2 == p), key=_obj_key)

    def instances(self, cls: str) -> list[str]:
        return self.subjects(RDF_TYPE, cls)


# -- writer -----------------------------------------------------------------

_PN_LOCAL = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")
_INTEGER = re.compile(r"^[+-]?\d+$")


def _escape(s: str) -> str:
    return (s.replace("\\", "\\\\").replace('"', '\\"')
            .replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t"))


def _term(iri: str, prefixes: Mapping[str, str]) -> str:
    for prefix, ns in prefixes.items():
        if iri.startswith(ns) and _PN_LOCAL.match(iri[len(ns):]):
            return f"{prefix}:{iri[len(ns):]}"
    return f"<{iri}>"


def _literal(lit: Literal, prefixes: Mapping[str, str]) -> str:
    if lit.datatype == XSD_INTEGER and _INTEGER.match(lit.value):
        return lit.value
    if lit.datatype == XSD_BOOLEAN and lit.value in ("true", "false"):
        return lit.value
    text = f'"{_escape(lit.value)}"'
    if lit.lang:
        return f"{text}@{lit.lang}"
    if lit.datatype and lit.datatype != XSD_STRING:
        return f"{text}^^{_term(lit.datatype, prefixes)}"
    return text


def serialize_turtle(graph: TripleSet, prefixes: Mapping[str, str] | None = None) -> str:
    """Turtle text: prefix block, then one ``s p o .`` line per triple,
    sorted by subject, predicate, object."""
    prefixes = dict(sorted((prefixes or {}).items()))
    lines = [f"@prefix {p}: <{ns}> ." for p, ns in prefixes.items()]
    lines.append("")
    for s, p, o in graph.sorted():
        pred = "a" if p == RDF_TYPE else _term(p, prefixes)
        obj = _literal(o, prefixes) if isinstance(o, Literal) else _term(o, prefixes)
        lines.append(f"{_term(s, prefixes)} {pred} {obj} .")
    return "\n".join(lines) + "\n"


# -- parser -----------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<directive>@prefix|@base)\b
  | (?P<lang>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<dtype>\^\^)
  | (?P<number>[+-]?(?:\d*\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+))
  | (?P<punct>[.;,])
  | (?P<pname>(?P<prefix>[A-Za-z][A-Za-z0-9_\-]*)?:(?P<local>[A-Za-z0-9_](?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?)?)
  | (?P<word>[A-Za-z]+)
""", re.VERBOSE)

_UNESCAPE = {"t": "\t", "n": "\n", "r": "\r", '"': '"', "'": "'", "\\": "\\", "b": "\b", "f": "\f"}


def _unescape(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1]
            if nxt in _UNESCAPE:
                out.append(_UNESCAPE[nxt])
                i += 2
            elif nxt == "u":
                out.append(chr(int(body[i + 2:i + 6], 16)))
                i += 6
            elif nxt == "U":
                out.append(chr(int(body[i + 2:i + 10], 16)))
                i += 10
            else:
                raise TurtleError(f"bad escape \\{nxt}")
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _tokenize(text: str) -> list[tuple[str, str, str | None]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise TurtleError(f"unexpected input at offset {pos}: {text[pos:pos + 20]!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind in ("pname", "prefix", "local"):
            tokens.append(("pname", m.group("prefix") or "", m.group("local") or ""))
        else:
            tokens.append((kind, m.group(0), None))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.prefixes: dict[str, str] = {}
        self.graph = TripleSet()

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, None)

    def next(self):
        tok = self.peek()
        if tok[0] is None:
            raise TurtleError("unexpected end of document")
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, text, _ = self.next()
        if text != value:
            raise TurtleError(f"expected {value!r}, got {text!r}")

    def iri(self, tok) -> str:
        kind, text, local = tok
        if kind == "iri":
            return text[1:-1]
        if kind == "pname":
            if text not in self.prefixes:
                raise TurtleError(f"undeclared prefix {text!r}")
            return self.prefixes[text] + (local or "")
        raise TurtleError(f"expected an IRI, got {text!r}")

    def parse(self) -> TripleSet:
        while self.peek()[0] is not None:
            kind, text, _ = self.peek()
            if text == "@base" or (kind == "word" and text.upper() == "BASE"):
                raise TurtleError("@base is not supported")
            if text == "@prefix" or (kind == "word" and text.upper() == "PREFIX"):
                self.next()
                pkind, ptext, plocal = self.next()
                if pkind != "pname" or plocal:
                    raise TurtleError(f"bad prefix declaration near {ptext!r}")
                self.prefixes[ptext] = self.iri(self.next())
                if text == "@prefix":
                    self.expect(".")
                continue
            subject = self.iri(self.next())
            self.predicate_objects(subject)
            self.expect(".")
        return self.graph

    def predicate_objects(self, subject: str) -> None:
        while True:
            tok = self.next()
            pred = RDF_TYPE if tok[0] == "word" and tok[1] == "a" else self.iri(tok)
            while True:
                self.graph.add(subject, pred, self.object())
                if self.peek()[1] != ",":
                    break
                self.next()
            if self.peek()[1] != ";":
                return
            self.next()
            if self.peek()[1] in (".", None):
                return

    def object(self) -> Object:
        kind, text, local = self.next()
        if kind == "string":
            value = _unescape(text[1:-1])
            nk, nt, _ = self.peek()
            if nk == "lang":
                self.next()
                return Literal(value, None, nt[1:])
            if nk == "dtype":
                self.next()
                dt = self.iri(self.next())
                return Literal(value, None if dt == XSD_STRING else dt)
            return Literal(value)
        if kind == "number":
            if re.fullmatch(r"[+-]?\d+", text):
                return Literal(text, XSD_INTEGER)
            if "e" in text.lower():
                return Literal(text, XSD_DOUBLE)
            return Literal(text, XSD_DECIMAL)
        if kind == "word" and text in ("true", "false"):
            return Literal(text, XSD_BOOLEAN)
        return self.iri((kind, text, local))


def parse_turtle(text: str) -> TripleSet:
    return _Parser(text).parse()
