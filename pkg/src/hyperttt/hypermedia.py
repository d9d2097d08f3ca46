"""JSON-LD representations carrying data, links and forms.

Supports a deliberately small JSON-LD profile: one inline ``@context``,
``prefix:term`` compaction, flat node objects, ``{"@id": ...}`` for IRI
values. That covers every document the service and agents exchange.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any
from urllib.parse import urljoin

from .vocab import HCTL, HTV, WOT, ContextDefinition, UnregisteredTerm, Vocabulary

JSON_LD = "application/ld+json"

_HREF = HCTL + "href"
_CONTENT_TYPE = HCTL + "contentType"
_FIELDS = HCTL + "fields"
_LINKS = HCTL + "links"
_FORMS = HCTL + "forms"
_METHOD = HTV + "methodName"
_OP = WOT + "op"


class MalformedDocument(ValueError):
    pass


class IRI(str):
    """A property value that names a resource rather than a literal."""

    def __repr__(self) -> str:
        return f"IRI({str.__repr__(self)})"


@dataclass(frozen=True)
class Link:
    href: str
    method: str = "GET"


@dataclass(frozen=True)
class Form:
    href: str
    method: str
    operation: str | None = None
    fields: tuple[str, ...] = ()
    content_type: str = "application/json"


@dataclass
class Representation:
    context: ContextDefinition
    id: str | None = None
    properties: dict[str, Any] = field(default_factory=dict)
    links: list[Link] = field(default_factory=list)
    forms: list[Form] = field(default_factory=list)

    def get(self, iri: str, default: Any = None) -> Any:
        return self.properties.get(iri, default)


def _compact_op(ctx: ContextDefinition, op: str) -> str:
    # WoT operation types are conventionally bare strings ("writeproperty").
    if op.startswith(WOT) and ":" not in op[len(WOT):]:
        return op[len(WOT):]
    return ctx.compact(op)


def _expand_op(ctx: ContextDefinition, value: str) -> str:
    if ":" not in value:
        return WOT + value
    return ctx.expand(value)


def to_json(rep: Representation, vocab: Vocabulary | None = None) -> dict:
    ctx = rep.context
    doc: dict[str, Any] = {"@context": ctx.to_json()}
    if rep.id is not None:
        doc["@id"] = rep.id
    for iri, value in rep.properties.items():
        if vocab is not None and iri not in vocab:
            raise UnregisteredTerm(iri)
        doc[ctx.compact(iri)] = {"@id": str(value)} if isinstance(value, IRI) else value
    method_key = ctx.compact(_METHOD)
    doc[ctx.compact(_LINKS)] = [
        {ctx.compact(_HREF): link.href, method_key: link.method} for link in rep.links
    ]
    forms = []
    for form in rep.forms:
        obj = {
            ctx.compact(_HREF): form.href,
            ctx.compact(_CONTENT_TYPE): form.content_type,
            method_key: form.method,
        }
        if form.operation is not None:
            obj[ctx.compact(_OP)] = _compact_op(ctx, form.operation)
        obj[ctx.compact(_FIELDS)] = list(form.fields)
        forms.append(obj)
    doc[ctx.compact(_FORMS)] = forms
    return doc


def serialize(rep: Representation, vocab: Vocabulary | None = None,
              indent: int | None = None) -> str:
    """Compact JSON-LD text. Raises UnregisteredTerm for terms outside ``vocab``
    (when given) or outside the representation's context."""
    return json.dumps(to_json(rep, vocab), indent=indent, ensure_ascii=False)


def _resolve(base: str, href: str) -> str:
    if href.startswith(("http://", "https://")):
        return href
    return urljoin(base, href)


def _control(ctx: ContextDefinition, obj: Any, kind: str, base: str) -> dict[str, Any]:
    if not isinstance(obj, dict):
        raise MalformedDocument(f"{kind} entry is not an object")
    expanded = {}
    for key, value in obj.items():
        try:
            expanded[ctx.expand(key)] = value
        except KeyError as exc:
            raise MalformedDocument(f"unknown prefix in {kind} key {key!r}") from exc
    href = expanded.get(_HREF)
    method = expanded.get(_METHOD)
    if not isinstance(href, str) or not href:
        raise MalformedDocument(f"{kind} entry has no href")
    if not isinstance(method, str) or not method:
        raise MalformedDocument(f"{kind} entry has no method")
    expanded[_HREF] = _resolve(base, href)
    return expanded


_CONTEXTS: dict[tuple, ContextDefinition] = {}


def _context_from_json(raw: dict) -> ContextDefinition:
    # Contexts repeat on every document; reuse the parsed (and memoised) one.
    try:
        key = tuple(raw.items())
        ctx = _CONTEXTS.get(key)
    except TypeError:
        raise MalformedDocument("context values must be strings") from None
    if ctx is None:
        try:
            ctx = ContextDefinition.from_json(raw)
        except ValueError as exc:
            raise MalformedDocument(str(exc)) from exc
        if len(_CONTEXTS) < 64:
            _CONTEXTS[key] = ctx
    return ctx


def from_json(doc: Any, base: str, default_context: ContextDefinition | None = None) -> Representation:
    if not isinstance(doc, dict):
        raise MalformedDocument("top level is not a JSON object")
    raw_ctx = doc.get("@context")
    if isinstance(raw_ctx, dict):
        ctx = _context_from_json(raw_ctx)
    elif raw_ctx is None:
        ctx = default_context or _DEFAULT_CONTEXT
    else:
        raise MalformedDocument("only inline object contexts are supported")

    rep = Representation(context=ctx)
    if "@id" in doc:
        rep.id = _resolve(base, doc["@id"])
    for key, value in doc.items():
        if key in ("@context", "@id"):
            continue
        try:
            iri = ctx.expand(key)
        except KeyError as exc:
            raise MalformedDocument(f"unknown prefix in key {key!r}") from exc
        if iri == _LINKS:
            if not isinstance(value, list):
                raise MalformedDocument("links is not a list")
            for obj in value:
                c = _control(ctx, obj, "link", base)
                rep.links.append(Link(c[_HREF], c[_METHOD]))
        elif iri == _FORMS:
            if not isinstance(value, list):
                raise MalformedDocument("forms is not a list")
            for obj in value:
                c = _control(ctx, obj, "form", base)
                op = c.get(_OP)
                rep.forms.append(Form(
                    href=c[_HREF],
                    method=c[_METHOD],
                    operation=_expand_op(ctx, op) if isinstance(op, str) else None,
                    fields=tuple(c.get(_FIELDS, ())),
                    content_type=c.get(_CONTENT_TYPE, "application/json"),
                ))
        elif isinstance(value, dict) and set(value) == {"@id"}:
            rep.properties[iri] = IRI(_resolve(base, value["@id"]))
        else:
            rep.properties[iri] = value
    return rep


def parse(text: str | bytes, base: str, default_context: ContextDefinition | None = None) -> Representation:
    """Parse a representation, resolving every href against ``base``.

    Documents without links or forms are fine; a link/form entry lacking an
    href or method raises MalformedDocument.
    """
    try:
        doc = json.loads(text)
    except (ValueError, TypeError) as exc:
        raise MalformedDocument(f"not JSON: {exc}") from exc
    return from_json(doc, base, default_context)


def extract_form_actions(rep: Representation) -> list[tuple[str, str, list[str]]]:
    """``(href, method, required fields)`` per form, in document order."""
    return [(f.href, f.method, list(f.fields)) for f in rep.forms]


_DEFAULT_CONTEXT = Vocabulary().ttt_context()
