"""Knowledge-graph fact pooling for multiple-choice QA.

Facts retrieved from a knowledge graph are verbalized, encoded into a shared
vector space, and aggregated by attention pooling into a small number of graph
vectors that are fused into a compact transformer classifier.  A generic
message-passing baseline and an answer-edge-removal robustness protocol are
included for controlled comparisons.
"""

from factpool.config import Config
from factpool.kg import (
    Fact,
    GroundedStatement,
    KnowledgeGraph,
    Subgraph,
    add_virtual_question_node,
    link_entities,
    load_kg,
    remove_answer_edges,
    retrieve_subgraph,
)
from factpool.pooling import PoolingHead, attention_weights, pool, pool_backward, pool_multi
from factpool.verbalize import TemplateTable, VerbalizedFact, verbalize

__all__ = [
    "Config",
    "Fact",
    "GroundedStatement",
    "KnowledgeGraph",
    "Subgraph",
    "TemplateTable",
    "VerbalizedFact",
    "PoolingHead",
    "add_virtual_question_node",
    "attention_weights",
    "link_entities",
    "load_kg",
    "pool",
    "pool_backward",
    "pool_multi",
    "remove_answer_edges",
    "retrieve_subgraph",
    "verbalize",
]
