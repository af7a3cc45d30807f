"""Minimal Turtle parser and in-memory triple store.

Supports the Turtle subset used by the shipped building models: ``@prefix``
directives, the ``a`` keyword, predicate lists (``;``), object lists (``,``),
prefixed names, absolute IRIs in angle brackets, plain double-quoted string
literals, and ``#`` comments.  Blank nodes, typed/tagged literals, numbers,
and collections are rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional, Union

RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS_NS = "http://www.w3.org/2000/01/rdf-schema#"
RDF_TYPE = RDF_NS + "type"
RDFS_SUBCLASS_OF = RDFS_NS + "subClassOf"

# Namespaces used throughout the shipped building model.
BRICK_NS = "https://brickschema.org/schema/1.0.3/Brick#"
BF_NS = "https://brickschema.org/schema/1.0.3/BrickFrame#"
BOT_NS = "https://w3id.org/bot#"


class TurtleError(ValueError):
    """Turtle syntax or prefix error, carrying the source position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Literal:
    """An opaque string literal; no datatype or language handling."""

    value: str

    def __str__(self) -> str:
        return self.value


#: Object position of a triple: an IRI string or a Literal.
Term = Union[str, Literal]


class Triple(NamedTuple):
    subject: str
    predicate: str
    object: Term


def _is_valid_iri(value: str) -> bool:
    return bool(value) and not any(ch.isspace() for ch in value)


class TripleGraph:
    """A set of triples plus the prefix table they were parsed with.

    Immutable once constructed; index dictionaries make single-position
    pattern lookups cheap.  Safe for concurrent readers.
    """

    def __init__(self, triples: Iterable[Triple], prefixes: Optional[dict[str, str]] = None):
        self._triples: frozenset[Triple] = frozenset(triples)
        self.prefixes: dict[str, str] = dict(prefixes or {})
        for t in self._triples:
            if not _is_valid_iri(t.subject) or not _is_valid_iri(t.predicate):
                raise ValueError(f"invalid IRI in triple: {t!r}")
            if isinstance(t.object, str) and not _is_valid_iri(t.object):
                raise ValueError(f"invalid object IRI in triple: {t!r}")
        self._by_s: dict[str, list[Triple]] = {}
        self._by_p: dict[str, list[Triple]] = {}
        self._by_o: dict[Term, list[Triple]] = {}
        for t in self._triples:
            self._by_s.setdefault(t.subject, []).append(t)
            self._by_p.setdefault(t.predicate, []).append(t)
            self._by_o.setdefault(t.object, []).append(t)

    @property
    def triples(self) -> frozenset[Triple]:
        return self._triples

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    def match(
        self,
        subject: Optional[str] = None,
        predicate: Optional[str] = None,
        object: Optional[Term] = None,
    ) -> set[Triple]:
        """All triples matching the fixed positions; None is a wildcard."""
        candidates: Optional[list[Triple]] = None
        if subject is not None:
            candidates = self._by_s.get(subject, [])
        if predicate is not None:
            by_p = self._by_p.get(predicate, [])
            candidates = by_p if candidates is None else (
                by_p if len(by_p) < len(candidates) else candidates
            )
        if object is not None:
            by_o = self._by_o.get(object, [])
            candidates = by_o if candidates is None else (
                by_o if len(by_o) < len(candidates) else candidates
            )
        if candidates is None:
            return set(self._triples)
        out = set()
        for t in candidates:
            if subject is not None and t.subject != subject:
                continue
            if predicate is not None and t.predicate != predicate:
                continue
            if object is not None and t.object != object:
                continue
            out.add(t)
        return out

    def objects(self, subject: str, predicate: str) -> set[Term]:
        return {t.object for t in self.match(subject, predicate, None)}

    def subjects(self, predicate: str, object: Term) -> set[str]:
        return {t.subject for t in self.match(None, predicate, object)}

    def types_of(self, subject: str) -> set[str]:
        return {o for o in self.objects(subject, RDF_TYPE) if isinstance(o, str)}

    def merged(self, other: "TripleGraph") -> "TripleGraph":
        """Union of both triple sets; other's prefixes win on collision."""
        prefixes = dict(self.prefixes)
        prefixes.update(other.prefixes)
        return TripleGraph(self._triples | other._triples, prefixes)

    def compact(self, iri: str) -> str:
        """Shorten an IRI with the longest matching declared namespace."""
        best = None
        for prefix, ns in self.prefixes.items():
            if iri.startswith(ns) and (best is None or len(ns) > len(self.prefixes[best])):
                best = prefix
        if best is None:
            return f"<{iri}>"
        local = iri[len(self.prefixes[best]):]
        if _PN_LOCAL_RE.fullmatch(local):
            return f"{best}:{local}"
        return f"<{iri}>"

    def expand(self, name: str) -> str:
        """Expand ``prefix:local`` using this graph's prefix table."""
        if name.startswith("<") and name.endswith(">"):
            return name[1:-1]
        if ":" in name:
            prefix, local = name.split(":", 1)
            if prefix in self.prefixes:
                return self.prefixes[prefix] + local
        return name


def subclass_closure(graph: TripleGraph, cls: str) -> set[str]:
    """All classes reaching ``cls`` by zero or more subClassOf hops.

    Reflexive, so ``cls`` is always included; a visited set makes cycles
    terminate.
    """
    seen = {cls}
    frontier = [cls]
    while frontier:
        current = frontier.pop()
        for sub in graph.subjects(RDFS_SUBCLASS_OF, current):
            if sub not in seen:
                seen.add(sub)
                frontier.append(sub)
    return seen


def superclass_chain(graph: TripleGraph, cls: str) -> list[str]:
    """Classes reachable upward from ``cls``, nearest first, cycle-safe."""
    chain = []
    seen = {cls}
    current = cls
    while True:
        parents = sorted(
            o for o in graph.objects(current, RDFS_SUBCLASS_OF) if isinstance(o, str)
        )
        nxt = next((p for p in parents if p not in seen), None)
        if nxt is None:
            return chain
        chain.append(nxt)
        seen.add(nxt)
        current = nxt


# --- tokenizer -------------------------------------------------------------

_PN_LOCAL_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.\-]*")


class _Token(NamedTuple):
    kind: str  # prefix_kw, iriref, pname, pname_ns, a, string, dot, semi, comma, eof
    value: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)

    def err(msg: str) -> TurtleError:
        return TurtleError(msg, line, col)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch == "@":
            m = re.match(r"@[A-Za-z]+", text[i:])
            word = m.group(0) if m else "@"
            if word != "@prefix":
                raise err(f"unsupported directive {word!r}")
            tokens.append(_Token("prefix_kw", word, start_line, start_col))
            i += len(word)
            col += len(word)
            continue
        if ch == "<":
            end = text.find(">", i + 1)
            if end == -1:
                raise err("unterminated IRI")
            iri = text[i + 1:end]
            if not _is_valid_iri(iri):
                raise err(f"invalid IRI <{iri}>")
            tokens.append(_Token("iriref", iri, start_line, start_col))
            col += end + 1 - i
            i = end + 1
            continue
        if ch == '"':
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    esc = text[j + 1]
                    buf.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc, esc))
                    j += 2
                elif text[j] == "\n":
                    raise err("unterminated string literal")
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise err("unterminated string literal")
            tokens.append(_Token("string", "".join(buf), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch == ".":
            tokens.append(_Token("dot", ".", start_line, start_col))
            i += 1
            col += 1
            continue
        if ch == ";":
            tokens.append(_Token("semi", ";", start_line, start_col))
            i += 1
            col += 1
            continue
        if ch == ",":
            tokens.append(_Token("comma", ",", start_line, start_col))
            i += 1
            col += 1
            continue
        if ch == "[" or ch == "]" or text.startswith("_:", i):
            raise err("blank nodes are not supported")
        if ch.isalpha() or ch == "_" or ch == ":":
            # prefixed name, bare prefix declaration, or the `a` keyword
            m = re.match(r"[A-Za-z0-9_\-]*:", text[i:])
            if m:
                prefix = m.group(0)[:-1]
                rest = text[i + len(m.group(0)):]
                lm = _PN_LOCAL_RE.match(rest)
                local = lm.group(0) if lm else ""
                # a PN_LOCAL may contain dots but not end with one
                while local.endswith("."):
                    local = local[:-1]
                if local:
                    tokens.append(_Token("pname", f"{prefix}:{local}", start_line, start_col))
                else:
                    tokens.append(_Token("pname_ns", prefix, start_line, start_col))
                consumed = len(m.group(0)) + len(local)
                i += consumed
                col += consumed
                continue
            m = re.match(r"[A-Za-z][A-Za-z0-9_\-]*", text[i:])
            word = m.group(0)
            if word == "a":
                tokens.append(_Token("a", "a", start_line, start_col))
                i += 1
                col += 1
                continue
            raise err(f"unexpected bare word {word!r}")
        raise err(f"unexpected character {ch!r}")
    tokens.append(_Token("eof", "", line, col))
    return tokens


# --- parser ----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.prefixes: dict[str, str] = {}
        self.triples: list[Triple] = []

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.take()
        if tok.kind != kind:
            raise TurtleError(f"expected {what}, found {tok.value!r}", tok.line, tok.col)
        return tok

    def parse(self) -> TripleGraph:
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind == "prefix_kw":
                self.take()
                self.directive()
            else:
                self.statement()
        return TripleGraph(self.triples, self.prefixes)

    def directive(self) -> None:
        ns_tok = self.take()
        if ns_tok.kind not in ("pname_ns", "pname"):
            raise TurtleError("expected prefix name", ns_tok.line, ns_tok.col)
        if ns_tok.kind == "pname":
            raise TurtleError(
                f"prefix declaration must end with ':': {ns_tok.value!r}",
                ns_tok.line, ns_tok.col,
            )
        iri_tok = self.expect("iriref", "namespace IRI")
        self.expect("dot", "'.' after @prefix")
        self.prefixes[ns_tok.value] = iri_tok.value

    def resolve(self, tok: _Token) -> str:
        if tok.kind == "iriref":
            return tok.value
        prefix, local = tok.value.split(":", 1)
        if prefix not in self.prefixes:
            raise TurtleError(f"unknown prefix {prefix!r}", tok.line, tok.col)
        return self.prefixes[prefix] + local

    def statement(self) -> None:
        subj_tok = self.take()
        if subj_tok.kind not in ("iriref", "pname"):
            raise TurtleError(
                f"expected subject IRI, found {subj_tok.value!r}", subj_tok.line, subj_tok.col
            )
        subject = self.resolve(subj_tok)
        while True:
            self.pred_objects(subject)
            tok = self.take()
            if tok.kind == "dot":
                return
            if tok.kind == "semi":
                # trailing `;` immediately before `.` is permitted
                if self.peek().kind == "dot":
                    self.take()
                    return
                continue
            if tok.kind == "eof":
                raise TurtleError("unterminated statement", tok.line, tok.col)
            raise TurtleError(f"expected '.' or ';', found {tok.value!r}", tok.line, tok.col)

    def pred_objects(self, subject: str) -> None:
        verb_tok = self.take()
        if verb_tok.kind == "a":
            predicate = RDF_TYPE
        elif verb_tok.kind in ("iriref", "pname"):
            predicate = self.resolve(verb_tok)
        else:
            raise TurtleError(
                f"expected predicate, found {verb_tok.value!r}", verb_tok.line, verb_tok.col
            )
        while True:
            obj_tok = self.take()
            if obj_tok.kind in ("iriref", "pname"):
                obj: Term = self.resolve(obj_tok)
            elif obj_tok.kind == "string":
                obj = Literal(obj_tok.value)
            else:
                raise TurtleError(
                    f"expected object, found {obj_tok.value!r}", obj_tok.line, obj_tok.col
                )
            self.triples.append(Triple(subject, predicate, obj))
            if self.peek().kind == "comma":
                self.take()
                continue
            return


def parse_turtle(text: str) -> TripleGraph:
    """Parse a Turtle document (subset, see module docstring) into a graph."""
    return _Parser(_tokenize(text)).parse()


def parse_turtle_file(path) -> TripleGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_turtle(fh.read())


def serialize_turtle(graph: TripleGraph) -> str:
    """Pretty-print a graph; output re-parses to the identical triple set."""
    lines = []
    for prefix in sorted(graph.prefixes):
        lines.append(f"@prefix {prefix}: <{graph.prefixes[prefix]}> .")
    if graph.prefixes:
        lines.append("")

    def term(t: Term) -> str:
        if isinstance(t, Literal):
            escaped = t.value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            return f'"{escaped}"'
        return graph.compact(t)

    by_subject: dict[str, dict[str, list[Term]]] = {}
    for t in sorted(graph.triples, key=lambda t: (t.subject, t.predicate, str(t.object))):
        by_subject.setdefault(t.subject, {}).setdefault(t.predicate, []).append(t.object)
    for subject in sorted(by_subject):
        preds = by_subject[subject]
        parts = []
        for predicate in sorted(preds, key=lambda p: (p != RDF_TYPE, p)):
            verb = "a" if predicate == RDF_TYPE else graph.compact(predicate)
            objs = ", ".join(term(o) for o in preds[predicate])
            parts.append(f"{verb} {objs}")
        lines.append(f"{graph.compact(subject)} " + " ;\n    ".join(parts) + " .")
        lines.append("")
    return "\n".join(lines)
