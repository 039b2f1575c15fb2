"""Knowledge-graph store: loading, entity linking, subgraph retrieval, perturbation.

A knowledge graph is a set of (head, relation, tail) facts over string entity
ids.  Ids are the canonical lowercase form of the entity's surface text with
spaces replaced by underscores; the surface form is recovered by the inverse
substitution.  Per-statement subgraphs consist of the entities linked in the
statement text plus all entities lying on paths of length <= 2 between linked
entities, closed under induced edges, and are completed with a virtual
question node tied to the linked entities.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from factpool.util import canonical_json

VIRTUAL_NODE_ID = "question"
VIRTUAL_QUESTION_RELATION = "entity"
VIRTUAL_ANSWER_RELATION = "a_entity"
VIRTUAL_RELATIONS = (VIRTUAL_QUESTION_RELATION, VIRTUAL_ANSWER_RELATION)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class KGFormatError(ValueError):
    """Raised for malformed or empty knowledge-graph files."""


def surface_to_id(surface: str) -> str:
    """Canonical entity id: lowercase, internal whitespace collapsed to '_'."""
    return "_".join(surface.lower().split())


def id_to_surface(entity_id: str) -> str:
    return entity_id.replace("_", " ")


def text_tokens(text: str) -> list[str]:
    """Lowercase alphanumeric tokens, punctuation discarded."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True, order=True)
class Fact:
    head: str
    relation: str
    tail: str

    def __post_init__(self) -> None:
        if self.head == VIRTUAL_NODE_ID and self.relation not in VIRTUAL_RELATIONS:
            raise ValueError(
                f"head '{VIRTUAL_NODE_ID}' is reserved for virtual edges, "
                f"got relation {self.relation!r}"
            )

    def key(self) -> str:
        return f"{self.head}\t{self.relation}\t{self.tail}"


@dataclass
class KnowledgeGraph:
    entities: set[str]
    relations: set[str]
    facts: set[Fact]
    adjacency: dict[str, tuple[Fact, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.adjacency:
            self.adjacency = _build_adjacency(self.facts)
        # Built eagerly: the graph is immutable after construction and may be
        # read from concurrent retrievals.
        index: dict[str, set[str]] = {}
        for entity in self.entities:
            tokens = text_tokens(id_to_surface(entity))
            if not tokens:
                continue
            for key in {tokens[0], _strip_plural(tokens[0])}:
                index.setdefault(key, set()).add(entity)
        self._first_token_index = {key: tuple(sorted(vals)) for key, vals in index.items()}

    def neighbors(self, entity: str) -> set[str]:
        out = set()
        for fact in self.adjacency.get(entity, ()):
            out.add(fact.tail if fact.head == entity else fact.head)
        out.discard(entity)
        return out

    def first_token_index(self) -> dict[str, tuple[str, ...]]:
        """Entities grouped by (plural-folded) first surface token, for linking."""
        return self._first_token_index


def _build_adjacency(facts: set[Fact]) -> dict[str, tuple[Fact, ...]]:
    index: dict[str, list[Fact]] = {}
    for fact in sorted(facts):
        index.setdefault(fact.head, []).append(fact)
        if fact.tail != fact.head:
            index.setdefault(fact.tail, []).append(fact)
    return {entity: tuple(incident) for entity, incident in index.items()}


def load_kg(path: str) -> KnowledgeGraph:
    """Load a KG from a UTF-8 TSV of `head\\trelation\\ttail` lines.

    Lines starting with '#' and blank lines are ignored.  Fields are
    normalized through surface_to_id, duplicates collapse to one fact.
    """
    entities: set[str] = set()
    relations: set[str] = set()
    facts: set[Fact] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise KGFormatError(f"{path}: malformed line {lineno}: {line!r}")
            head, relation, tail = (surface_to_id(p) for p in parts)
            try:
                fact = Fact(head, relation, tail)
            except ValueError as exc:
                raise KGFormatError(f"{path}: line {lineno}: {exc}") from exc
            entities.add(head)
            entities.add(tail)
            relations.add(relation)
            facts.add(fact)
    if not facts:
        raise KGFormatError(f"{path}: empty KG")
    return KnowledgeGraph(entities=entities, relations=relations, facts=facts)


@dataclass
class GroundedStatement:
    context: str
    question: str
    candidate: str
    question_entities: set[str]
    answer_entities: set[str]
    label: bool = False

    def __post_init__(self) -> None:
        overlap = self.question_entities & self.answer_entities
        if overlap:
            raise ValueError(f"question/answer entity sets overlap: {sorted(overlap)}")

    def statement_text(self) -> str:
        return " ".join(part for part in (self.context, self.question, self.candidate) if part)


def ground_statement(
    kg: KnowledgeGraph,
    context: str,
    question: str,
    candidate: str,
    label: bool = False,
    question_entities: set[str] | None = None,
    answer_entities: set[str] | None = None,
) -> GroundedStatement:
    """Link entities for one (context, question, candidate) statement.

    Answer entities take precedence: anything linked in the candidate text is
    excluded from the question set so the two sets stay disjoint.
    """
    if answer_entities is None:
        answer_entities = link_entities(candidate, kg)
    else:
        answer_entities = set(answer_entities) & kg.entities
    if question_entities is None:
        question_entities = link_entities(f"{context} {question}", kg)
    else:
        question_entities = set(question_entities) & kg.entities
    return GroundedStatement(
        context=context,
        question=question,
        candidate=candidate,
        question_entities=question_entities - answer_entities,
        answer_entities=answer_entities,
        label=label,
    )


def _strip_plural(token: str) -> str:
    return token[:-1] if len(token) > 1 and token.endswith("s") else token


def _tokens_match(text_token: str, surface_token: str) -> bool:
    # Exact match with naive plural folding so "birds" links entity "bird".
    if text_token == surface_token:
        return True
    return _strip_plural(text_token) == surface_token or _strip_plural(surface_token) == text_token


def link_entities(statement_text: str, kg: KnowledgeGraph) -> set[str]:
    """Entities whose surface tokens appear contiguously in the text.

    Matching is by whole token, case-folded, with naive plural folding;
    overlapping and nested matches all link.
    """
    tokens = text_tokens(statement_text)
    if not tokens:
        return set()
    index = kg.first_token_index()
    linked: set[str] = set()
    for start, tok in enumerate(tokens):
        candidates = set(index.get(tok, ()))
        candidates.update(index.get(_strip_plural(tok), ()))
        for entity in candidates:
            if entity in linked:
                continue
            surface_tokens = text_tokens(id_to_surface(entity))
            if start + len(surface_tokens) > len(tokens):
                continue
            if all(
                _tokens_match(tokens[start + j], surface_tokens[j])
                for j in range(len(surface_tokens))
            ):
                linked.add(entity)
    return linked


@dataclass
class Subgraph:
    nodes: set[str]
    edges: set[Fact]
    provenance: dict[Fact, str] = field(default_factory=dict)
    virtual_node: str | None = None

    def sorted_edges(self) -> list[Fact]:
        return sorted(self.edges)

    def canonical(self) -> str:
        payload = {
            "nodes": sorted(self.nodes),
            "virtual_node": self.virtual_node,
            "edges": [
                [e.head, e.relation, e.tail, self.provenance.get(e, "kg")]
                for e in sorted(self.edges)
            ],
        }
        return canonical_json(payload)


def _relevance_score(entity: str, statement_tokens: set[str]) -> int:
    surface_tokens = set(text_tokens(id_to_surface(entity)))
    return sum(
        1
        for tok in statement_tokens
        if any(_tokens_match(tok, s) for s in surface_tokens)
    )


def retrieve_subgraph(kg: KnowledgeGraph, stmt: GroundedStatement, max_nodes: int) -> Subgraph:
    """Linked entities plus length-<=2 connectors, capped, edge-induced.

    When the node set exceeds max_nodes the most statement-relevant entities
    are kept: relevance is the count of distinct statement tokens matching the
    entity surface, ties broken by entity id.  The virtual question node is
    added separately and never counts against the cap.
    """
    if max_nodes < 1:
        raise ValueError("max_nodes must be >= 1")
    linked = (stmt.question_entities | stmt.answer_entities) & kg.entities
    candidates = set(linked)
    # A length-2 path u - m - v between distinct linked entities retains m.
    for entity in sorted(linked):
        for mid in kg.neighbors(entity):
            if mid in linked or mid in candidates:
                continue
            linked_neighbors = kg.neighbors(mid) & linked
            if len(linked_neighbors) >= 2:
                candidates.add(mid)
    if len(candidates) > max_nodes:
        statement_tokens = set(text_tokens(stmt.statement_text()))
        ranked = sorted(
            candidates,
            key=lambda ent: (-_relevance_score(ent, statement_tokens), ent),
        )
        candidates = set(ranked[:max_nodes])
    edges = {
        fact
        for fact in kg.facts
        if fact.head in candidates and fact.tail in candidates
    }
    return Subgraph(
        nodes=candidates,
        edges=edges,
        provenance={fact: "kg" for fact in edges},
        virtual_node=None,
    )


def add_virtual_question_node(sub: Subgraph, stmt: GroundedStatement) -> Subgraph:
    """Attach the virtual question node to retained question/answer entities."""
    if sub.virtual_node is not None:
        raise ValueError("virtual node already present")
    nodes = set(sub.nodes)
    nodes.add(VIRTUAL_NODE_ID)
    edges = set(sub.edges)
    provenance = dict(sub.provenance)
    for entity in sorted(stmt.question_entities):
        if entity in sub.nodes:
            fact = Fact(VIRTUAL_NODE_ID, VIRTUAL_QUESTION_RELATION, entity)
            edges.add(fact)
            provenance[fact] = "virtual"
    for entity in sorted(stmt.answer_entities):
        if entity in sub.nodes:
            fact = Fact(VIRTUAL_NODE_ID, VIRTUAL_ANSWER_RELATION, entity)
            edges.add(fact)
            provenance[fact] = "virtual"
    return Subgraph(nodes=nodes, edges=edges, provenance=provenance, virtual_node=VIRTUAL_NODE_ID)


def remove_answer_edges(sub: Subgraph, stmt: GroundedStatement) -> Subgraph:
    """Drop every edge incident to an answer entity; nodes stay (idempotent).

    Virtual a_entity edges count as incident and are removed as well.
    """
    answers = stmt.answer_entities
    kept = {e for e in sub.edges if e.head not in answers and e.tail not in answers}
    return replace(
        sub,
        nodes=set(sub.nodes),
        edges=kept,
        provenance={e: p for e, p in sub.provenance.items() if e in kept},
    )
