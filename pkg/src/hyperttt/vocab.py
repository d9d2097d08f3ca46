"""Ontology terms, JSON-LD contexts, and the Turtle documents for the custom
vocabularies (``ttt``, ``fipa``, ``tf``).

The custom namespaces hang off a configurable ontology base URL so the
ontology routes of a running service dereference them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

HCTL = "https://www.w3.org/2019/wot/hypermedia#"
HTV = "http://www.w3.org/2011/http#"
WOT = "https://www.w3.org/2019/wot/td#"
RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"

DEFAULT_ONTOLOGY_BASE = "http://localhost:8080/ontology/"

_LOCAL_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")


class UnknownPrefix(KeyError):
    pass


class UnregisteredTerm(KeyError):
    pass


class UnknownOntology(KeyError):
    pass


@dataclass(frozen=True)
class VocabTerm:
    prefix: str
    local_name: str
    iri: str
    kind: str = "property"  # "class", "property" or "individual"


# (local name, kind, comment) per custom vocabulary.
_TTT_TERMS = [
    ("Game", "class", "A single game of Tic-Tac-Toe."),
    ("Move", "class", "One mark placed on one square."),
    ("Square", "class", "One of the nine board squares."),
    ("PlayerRole", "class", "The X or O side of a game."),
    ("Result", "class", "The outcome of a finished game."),
    ("Draw", "individual", "Result marker for a drawn game."),
    ("inSquare", "property", "Links a Move to the Square it occupies."),
    ("moveTakenBy", "property", "Links a Move to the PlayerRole that made it."),
    ("moveIndex", "property", "1-based position of a Move in the game."),
    ("hasMove", "property", "Links a Game to one of its Moves."),
    ("hasSquare", "property", "Links a Game to one of its Squares."),
    ("hasPlayerRole", "property", "Links a Game to a PlayerRole."),
    ("hasMark", "property", "The mark (X or O) of a PlayerRole."),
    ("playedBy", "property", "The agent IRI occupying a PlayerRole."),
    ("row", "property", "Row number (1-3) of a Square."),
    ("column", "property", "Column number (1-3) of a Square."),
    ("hasResult", "property", "Winning PlayerRole, or ttt:Draw."),
    ("result", "property", "Links a finished board to its result resource."),
    ("gameId", "property", "Opaque game identifier."),
    ("board", "property", "Row-major board marks, one of X, O, - per square."),
    ("toMove", "property", "Mark of the player whose turn it is."),
    ("status", "property", "InProgress, WonByX, WonByO or Draw."),
    ("agentRole", "property", "PlayerRole assigned to the registered agent."),
    ("agentMark", "property", "Mark assigned to the registered agent."),
    ("register", "individual", "Operation type of the registration form."),
    ("EntryPoint", "class", "The API entry point."),
]

_TF_TERMS = [
    ("Query", "property", "What is being asked for."),
    ("Action", "class", "A recommended action for a state."),
    ("hasState", "property", "URL of the board resource the query is about."),
    ("RecommendedAction", "property", "The recommended square (e.g. Square13)."),
    ("hasScore", "property", "Normalised confidence in [0, 1]."),
    ("Reason", "property", "Why no recommendation was made."),
    ("UnknownState", "individual", "Advisor has no values for the state."),
    ("BudgetExhausted", "individual", "Advisor has no advice budget left."),
    ("Malformed", "individual", "Request could not be interpreted."),
]

_FIPA_TERMS = [
    ("request", "property", "Request performative."),
    ("inform", "property", "Inform performative."),
    ("failure", "property", "Failure performative."),
    ("sender", "property", "Sending agent."),
    ("receiver", "property", "Receiving agent."),
    ("reply-to", "property", "Where replies should be delivered."),
    ("conversation-id", "property", "Conversation identifier."),
    ("ontology", "property", "Ontology the content is expressed in."),
    ("content", "property", "Message content."),
]

# Terms of the shared W3C vocabularies used on the wire.
_HCTL_TERMS = ["href", "contentType", "links", "forms", "fields"]
_HTV_TERMS = ["methodName"]
_WOT_TERMS = ["op", "writeproperty", "readproperty"]


@dataclass(frozen=True)
class ContextDefinition:
    default_vocab: str
    prefixes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_compacted", {})
        object.__setattr__(self, "_expanded", {})

    def to_json(self) -> dict:
        out = {"@vocab": self.default_vocab}
        out.update(self.prefixes)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "ContextDefinition":
        if "@vocab" not in obj:
            raise ValueError("context has no @vocab")
        return cls(obj["@vocab"], {k: v for k, v in obj.items() if not k.startswith("@")})

    def expand(self, term: str) -> str:
        try:
            return self._expanded[term]
        except KeyError:
            iri = self._expand(term)
        self._expanded[term] = iri
        return iri

    def _expand(self, term: str) -> str:
        if "://" in term or term.startswith("urn:"):
            return term
        if ":" in term:
            prefix, local = term.split(":", 1)
            try:
                return self.prefixes[prefix] + local
            except KeyError:
                raise UnknownPrefix(prefix) from None
        return self.default_vocab + term

    def compact(self, iri: str) -> str:
        """Shortest compact form; the default vocab wins over prefixes."""
        try:
            return self._compacted[iri]
        except KeyError:
            term = self._compact(iri)
        self._compacted[iri] = term
        return term

    def _compact(self, iri: str) -> str:
        if iri.startswith(self.default_vocab):
            local = iri[len(self.default_vocab):]
            if _LOCAL_NAME.match(local):
                return local
        for prefix, ns in self.prefixes.items():
            if iri.startswith(ns):
                local = iri[len(ns):]
                if _LOCAL_NAME.match(local):
                    return f"{prefix}:{local}"
        raise UnregisteredTerm(iri)


class Vocabulary:
    """Registry of every term used on the wire, built once at startup."""

    def __init__(self, ontology_base: str = DEFAULT_ONTOLOGY_BASE):
        if not ontology_base.endswith("/"):
            ontology_base += "/"
        self.ontology_base = ontology_base
        self.namespaces = {
            "htv": HTV,
            "wot": WOT,
            "ttt": ontology_base + "ttt#",
            "fipa": ontology_base + "fipa#",
            "tf": ontology_base + "transfer#",
        }
        self.terms: dict[str, VocabTerm] = {}
        self._comments: dict[str, str] = {}
        self._add("", HCTL, ((t, "property", "") for t in _HCTL_TERMS))
        self._add("htv", HTV, ((t, "property", "") for t in _HTV_TERMS))
        self._add("wot", WOT, ((t, "property", "") for t in _WOT_TERMS))
        self._add("ttt", self.namespaces["ttt"], _TTT_TERMS)
        self._add("fipa", self.namespaces["fipa"], _FIPA_TERMS)
        self._add("tf", self.namespaces["tf"], _TF_TERMS)

    def _add(self, prefix: str, ns: str, entries: Iterable[tuple[str, str, str]]) -> None:
        for local, kind, comment in entries:
            iri = ns + local
            self.terms[iri] = VocabTerm(prefix, local, iri, kind)
            self._comments[iri] = comment

    def __contains__(self, iri: str) -> bool:
        return iri in self.terms

    def iri(self, prefix: str, local: str) -> str:
        ns = HCTL if prefix == "" else self.namespaces[prefix]
        iri = ns + local
        if iri not in self.terms:
            raise UnregisteredTerm(f"{prefix}:{local}")
        return iri

    def ttt(self, local: str) -> str:
        return self.iri("ttt", local)

    def tf(self, local: str) -> str:
        return self.iri("tf", local)

    def fipa(self, local: str) -> str:
        return self.iri("fipa", local)

    def ttt_context(self) -> ContextDefinition:
        return ContextDefinition(
            HCTL, {p: self.namespaces[p] for p in ("htv", "wot", "ttt")}
        )

    def messaging_context(self) -> ContextDefinition:
        return ContextDefinition(
            HCTL, {p: self.namespaces[p] for p in ("fipa", "tf")}
        )

    def ontology_iri(self, name: str) -> str:
        key = {"transfer": "tf"}.get(name, name)
        if key not in ("ttt", "fipa", "tf"):
            raise UnknownOntology(name)
        return self.namespaces[key]

    def ontology_document(self, name: str) -> str:
        """Turtle document declaring the classes/properties of one custom
        vocabulary: ``ttt``, ``fipa`` or ``transfer``."""
        prefix = {"ttt": "ttt", "fipa": "fipa", "transfer": "tf"}.get(name)
        if prefix is None:
            raise UnknownOntology(name)
        ns = self.namespaces[prefix]
        lines = [
            f"@prefix {prefix}: <{ns}> .",
            f"@prefix rdf: <{RDF}> .",
            f"@prefix rdfs: <{RDFS}> .",
            f"@prefix owl: <{OWL}> .",
            "",
            f"<{ns[:-1]}> rdf:type owl:Ontology .",
        ]
        kinds = {"class": "owl:Class", "property": "rdf:Property",
                 "individual": "owl:NamedIndividual"}
        for term in self.terms.values():
            if term.prefix != prefix:
                continue
            name_ = f"<{term.iri}>" if not _LOCAL_NAME.match(term.local_name) else \
                f"{prefix}:{term.local_name}"
            comment = self._comments[term.iri].replace("\\", "\\\\").replace('"', '\\"')
            lines.append(f"{name_} rdf:type {kinds[term.kind]} ;")
            lines.append(f'    rdfs:comment "{comment}" .')
        return "\n".join(lines) + "\n"
