"""QA model: statement pipeline, fused forward, scoring, training, gradcheck.

Three model kinds share one transformer trunk and scoring skeleton:

  * "pooled": per-candidate subgraph edges are encoded and pooled into K+1
    graph vectors; vector 0 initializes the graph token, vectors 1..K are
    added to the graph token's hidden state immediately before layers
    L-1 .. L-K (late fusion).  Candidate score = f_q(question state) +
    f_g(graph part), where the graph part is the raw pooled vector when K=0
    and the graph token's final state when K>0.
  * "lm": the same skeleton with every graph vector forced to zero.
  * "gnn": graph vectors zero; a message-passing module over the subgraph,
    seeded with the question state at the virtual node, provides the graph
    score through its own readout head.

Candidate scores are normalized across a question's candidates by softmax
and trained with cross entropy.  Everything is deterministic for a fixed
seed; gradients are exact reverse-mode and checked against central finite
differences by `gradient_check`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from factpool.config import Config
from factpool.data import QuestionRecord
from factpool.encoders import FileBackedEncoder, HashBagEncoder, ToyTrunkEncoder
from factpool.gnn import (
    GNNConfig,
    SubgraphArrays,
    gnn_backward_arrays,
    gnn_forward_arrays,
    init_gnn_params,
    subgraph_arrays,
)
from factpool.kg import (
    VIRTUAL_ANSWER_RELATION,
    VIRTUAL_NODE_ID,
    VIRTUAL_QUESTION_RELATION,
    Fact,
    GroundedStatement,
    KnowledgeGraph,
    Subgraph,
    add_virtual_question_node,
    ground_statement,
    id_to_surface,
    remove_answer_edges,
    retrieve_subgraph,
)
from factpool.optim import RAdam
from factpool.pooling import (
    AttentionWeights,
    GraphRepr,
    PoolingHead,
    init_pooling_head,
    pool_backward_arrays,
    pool_forward,
)
from factpool.tokenizer import PAD_ID, Tokenizer, tokenize_statement
from factpool.transformer import (
    init_scalar_head,
    init_trunk_params,
    scalar_head_backward,
    scalar_head_forward,
    trunk_forward,
    trunk_backward,
)
from factpool.util import derive_seed
from factpool.verbalize import TemplateTable, verbalize
from factpool.checkpoint import load_checkpoint, save_checkpoint

MODEL_KINDS = ("pooled", "gnn", "lm")
WITH_ANSWERS = "with_answers"
WITHOUT_ANSWERS = "without_answers"
CONDITIONS = (WITH_ANSWERS, WITHOUT_ANSWERS)

_FROZEN_PREFIX = "frozen."


@dataclass
class Model:
    cfg: Config
    kind: str
    params: dict[str, np.ndarray]
    relations: list[str]  # relation table order shared by GNN and metadata
    tokenizer: Tokenizer

    @property
    def relation_index(self) -> dict[str, int]:
        return {rel: i for i, rel in enumerate(self.relations)}

    def pooling_heads(self) -> list[PoolingHead]:
        heads = []
        for k in range(self.cfg.num_pooling_heads()):
            heads.append(
                PoolingHead(
                    w_value=self.params[f"pool{k}.w_value"],
                    b_value=self.params[f"pool{k}.b_value"],
                    w_key1=self.params[f"pool{k}.w_key1"],
                    b_key1=self.params[f"pool{k}.b_key1"],
                    w_key2=self.params[f"pool{k}.w_key2"],
                    b_key2=self.params[f"pool{k}.b_key2"],
                )
            )
        return heads

    def frozen_snapshot(self) -> dict[str, np.ndarray]:
        return {
            name[len(_FROZEN_PREFIX) :]: arr
            for name, arr in self.params.items()
            if name.startswith(_FROZEN_PREFIX)
        }

    def gnn_config(self) -> GNNConfig:
        return GNNConfig(layers=self.cfg.gnn_layers, aggregation=self.cfg.gnn_aggregation)


def relation_table(kg: KnowledgeGraph) -> list[str]:
    return sorted(kg.relations | {VIRTUAL_QUESTION_RELATION, VIRTUAL_ANSWER_RELATION})


def create_model(cfg: Config, kind: str, relations: list[str]) -> Model:
    """Seeded parameter construction; the draw order is fixed per kind."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"model kind must be one of {MODEL_KINDS}")
    rng = np.random.default_rng(derive_seed(cfg.seed, "init", kind))
    dtype = cfg.dtype
    params = init_trunk_params(cfg.L, cfg.d, cfg.vocab_size, cfg.max_tokens, rng, dtype)
    params.update(init_scalar_head("fq", cfg.d, rng, dtype))
    if kind in ("pooled", "lm"):
        params.update(init_scalar_head("fg", cfg.d, rng, dtype))
    if kind == "pooled":
        for k in range(cfg.num_pooling_heads()):
            head = init_pooling_head(cfg.d, rng, dtype)
            params[f"pool{k}.w_value"] = head.w_value
            params[f"pool{k}.b_value"] = head.b_value
            params[f"pool{k}.w_key1"] = head.w_key1
            params[f"pool{k}.b_key1"] = head.b_key1
            params[f"pool{k}.w_key2"] = head.w_key2
            params[f"pool{k}.b_key2"] = head.b_key2
    if kind == "gnn":
        params.update(init_gnn_params(cfg.d, len(relations), rng, dtype))
    if cfg.encoder_kind == "shared-toy-encoder":
        # Pre-fine-tuning snapshot of the embedder and trunk; never trained.
        trunk_names = [n for n in params if n.startswith(("tok_emb", "pos_emb", "layer"))]
        for name in trunk_names:
            params[_FROZEN_PREFIX + name] = params[name].copy()
    return Model(
        cfg=cfg,
        kind=kind,
        params=params,
        relations=list(relations),
        tokenizer=Tokenizer(cfg.vocab_size),
    )


def build_encoder(model: Model, cache_path: str | None = None):
    cfg = model.cfg
    if cfg.encoder_kind == "hash-bag":
        return HashBagEncoder(cfg.d, derive_seed(cfg.seed, "encoder"), cfg.token_pooling)
    if cfg.encoder_kind == "shared-toy-encoder":
        return ToyTrunkEncoder(
            model.frozen_snapshot(),
            cfg.L,
            cfg.heads,
            model.tokenizer,
            cfg.token_pooling,
            max_tokens=cfg.max_tokens,
        )
    if cfg.encoder_kind == "external-file":
        if cache_path is None:
            raise ValueError("external-file encoder needs a cache path")
        return FileBackedEncoder(cache_path)
    raise ValueError(f"unknown encoder kind {cfg.encoder_kind!r}")


# --- statement preparation ----------------------------------------------------


@dataclass
class PreparedCandidate:
    ids: np.ndarray  # [T] token ids
    facts: list[Fact]  # canonical edge order, aligned with edge_matrix rows
    fact_texts: list[str]
    edge_matrix: np.ndarray  # [E, d]; E may be 0
    subgraph: Subgraph
    statement: GroundedStatement
    gnn: SubgraphArrays | None = None
    node_init: np.ndarray | None = None  # [N, d]; virtual row is a placeholder


@dataclass
class PreparedQuestion:
    candidates: list[PreparedCandidate]
    answer_index: int


def build_statement_subgraph(
    kg: KnowledgeGraph, stmt: GroundedStatement, max_nodes: int, condition: str
) -> Subgraph:
    sub = retrieve_subgraph(kg, stmt, max_nodes)
    sub = add_virtual_question_node(sub, stmt)
    if condition == WITHOUT_ANSWERS:
        sub = remove_answer_edges(sub, stmt)
    elif condition != WITH_ANSWERS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    return sub


def prepare_question(
    model: Model,
    kg: KnowledgeGraph,
    templates: TemplateTable,
    encoder,
    record: QuestionRecord,
    condition: str = WITH_ANSWERS,
) -> PreparedQuestion:
    cfg = model.cfg
    needs_gnn = model.kind == "gnn"
    if needs_gnn and not hasattr(encoder, "encode_text"):
        raise ValueError(
            "gnn models need a text-capable encoder for entity node states; "
            "the external-file encoder only serves cached facts"
        )
    candidates = []
    for idx, cand_text in enumerate(record.candidates):
        stmt = ground_statement(
            kg,
            record.context,
            record.question,
            cand_text,
            label=(idx == record.answer_index),
            question_entities=(
                set(record.question_entities) if record.question_entities is not None else None
            ),
            answer_entities=(
                set(record.answer_entities[idx]) if record.answer_entities is not None else None
            ),
        )
        sub = build_statement_subgraph(kg, stmt, cfg.max_nodes, condition)
        facts = sub.sorted_edges()
        texts = [verbalize(f, templates).text for f in facts]
        if facts:
            matrix = np.stack(
                [encoder.encode_fact_text(f, t) for f, t in zip(facts, texts)]
            )
        else:
            matrix = np.zeros((0, cfg.d))
        ids = np.asarray(
            tokenize_statement(
                record.context, record.question, cand_text, model.tokenizer, cfg.max_tokens
            ),
            dtype=np.int64,
        )
        cand = PreparedCandidate(
            ids=ids,
            facts=facts,
            fact_texts=texts,
            edge_matrix=matrix,
            subgraph=sub,
            statement=stmt,
        )
        if needs_gnn:
            cand.gnn = subgraph_arrays(sub, model.relation_index)
            init = np.zeros((len(cand.gnn.node_ids), cfg.d))
            for i, node in enumerate(cand.gnn.node_ids):
                if node != VIRTUAL_NODE_ID:
                    init[i] = encoder.encode_text(id_to_surface(node))
            cand.node_init = init
        candidates.append(cand)
    return PreparedQuestion(candidates=candidates, answer_index=record.answer_index)


def prepare_dataset(
    model: Model,
    kg: KnowledgeGraph,
    templates: TemplateTable,
    encoder,
    records: list[QuestionRecord],
    condition: str = WITH_ANSWERS,
) -> list[PreparedQuestion]:
    return [
        prepare_question(model, kg, templates, encoder, rec, condition) for rec in records
    ]


# --- batched forward / backward ----------------------------------------------


@dataclass
class BatchResult:
    loss: float
    scores: np.ndarray  # [num candidates total]
    probs: list[np.ndarray]  # per question
    predictions: list[int]
    slices: list[slice]
    pool_weights: list[list[np.ndarray]]  # per candidate, per head
    aggregations: int  # instrumented count of pooling/GNN aggregation events
    _caches: dict = field(default_factory=dict, repr=False)


def _flatten(questions: list[PreparedQuestion]):
    flat: list[PreparedCandidate] = []
    slices = []
    for q in questions:
        start = len(flat)
        flat.extend(q.candidates)
        slices.append(slice(start, len(flat)))
    t_max = max(len(c.ids) for c in flat)
    ids = np.full((len(flat), t_max), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(flat), t_max), dtype=bool)
    for i, c in enumerate(flat):
        ids[i, : len(c.ids)] = c.ids
        mask[i, : len(c.ids)] = True
    return flat, slices, ids, mask


def _injection_layer(L: int, k: int) -> int:
    # Fusion vector k is added immediately before layer L-k; index 0 means
    # the input state (only reachable when K = L).
    return L - k


def candidate_log_probabilities(scores: np.ndarray) -> np.ndarray:
    """Log of softmax across one question's candidate scores."""
    z = scores - scores.max()
    return z - np.log(np.exp(z).sum())


def candidate_probabilities(scores: np.ndarray) -> np.ndarray:
    """Candidate scores -> probabilities (positive, summing to one)."""
    return np.exp(candidate_log_probabilities(scores))


def batch_forward(model: Model, questions: list[PreparedQuestion]) -> BatchResult:
    cfg = model.cfg
    params = model.params
    flat, slices, ids, mask = _flatten(questions)
    bs = len(flat)
    aggregations = 0
    pool_caches: list[list] = [[] for _ in range(bs)]
    pool_weights: list[list[np.ndarray]] = [[] for _ in range(bs)]
    if model.kind == "pooled":
        heads = model.pooling_heads()
        g = np.zeros((len(heads), bs, cfg.d))
        for i, cand in enumerate(flat):
            for k, head in enumerate(heads):
                if cand.edge_matrix.shape[0]:
                    pooled, weights, cache = pool_forward(head, cand.edge_matrix)
                    g[k, i] = pooled
                else:
                    weights, cache = np.zeros(0), None
                pool_caches[i].append(cache)
                pool_weights[i].append(weights)
                aggregations += 1
        graph_init = g[0]
        injections = {
            _injection_layer(cfg.L, k): g[k] for k in range(1, cfg.num_pooling_heads())
        }
    else:
        g = np.zeros((1, bs, cfg.d))
        graph_init = g[0]
        injections = {}
    states, trunk_cache = trunk_forward(
        params, cfg.L, cfg.heads, ids, mask, graph_init, injections
    )
    q_final = states[:, 1, :]
    graph_final = states[:, 0, :]
    fq_scores, fq_cache = scalar_head_forward(params, "fq", q_final)
    gnn_caches = []
    if model.kind == "gnn":
        gcfg = model.gnn_config()
        gamma = np.zeros((bs, cfg.d))
        for i, cand in enumerate(flat):
            node_init = cand.node_init.copy()
            node_init[cand.gnn.virtual_index] = q_final[i]
            final, gcache, count = gnn_forward_arrays(params, gcfg, cand.gnn, node_init)
            gamma[i] = final[cand.gnn.virtual_index]
            gnn_caches.append(gcache)
            aggregations += count
        graph_scores, fg_cache = scalar_head_forward(params, "gnn.score", gamma)
    else:
        gamma = graph_init if cfg.K == 0 else graph_final
        graph_scores, fg_cache = scalar_head_forward(params, "fg", gamma)
    scores = fq_scores + graph_scores
    loss = 0.0
    d_scores = np.zeros(bs)
    probs_per_q: list[np.ndarray] = []
    predictions = []
    nq = len(questions)
    for q, sl in zip(questions, slices):
        s = scores[sl]
        log_probs = candidate_log_probabilities(s)
        probs = np.exp(log_probs)
        probs_per_q.append(probs)
        predictions.append(int(np.argmax(s)))
        loss += -log_probs[q.answer_index] / nq
        d = probs.copy()
        d[q.answer_index] -= 1.0
        d_scores[sl] = d / nq
    caches = {
        "flat": flat,
        "pool_caches": pool_caches,
        "trunk_cache": trunk_cache,
        "fq_cache": fq_cache,
        "fg_cache": fg_cache,
        "gnn_caches": gnn_caches,
        "d_scores": d_scores,
        "q_final": q_final,
        "graph_states_final": states,
    }
    return BatchResult(
        loss=float(loss),
        scores=scores,
        probs=probs_per_q,
        predictions=predictions,
        slices=slices,
        pool_weights=pool_weights,
        aggregations=aggregations,
        _caches=caches,
    )


def batch_backward(model: Model, result: BatchResult) -> dict[str, np.ndarray]:
    cfg = model.cfg
    params = model.params
    caches = result._caches
    flat = caches["flat"]
    bs = len(flat)
    d_scores = caches["d_scores"]
    grads: dict[str, np.ndarray] = {}

    def accumulate(new: dict[str, np.ndarray]) -> None:
        for name, grad in new.items():
            if name in grads:
                grads[name] += grad
            else:
                grads[name] = grad

    fq_grads, d_q_final = scalar_head_backward(params, "fq", caches["fq_cache"], d_scores)
    accumulate(fq_grads)
    d_states = np.zeros_like(caches["graph_states_final"])
    d_g0_direct = None
    if model.kind == "gnn":
        head_grads, d_gamma = scalar_head_backward(
            params, "gnn.score", caches["fg_cache"], d_scores
        )
        accumulate(head_grads)
        gcfg = model.gnn_config()
        for i, cand in enumerate(flat):
            n = len(cand.gnn.node_ids)
            d_final = np.zeros((n, cfg.d))
            d_final[cand.gnn.virtual_index] = d_gamma[i]
            gnn_grads, d_init = gnn_backward_arrays(params, gcfg, caches["gnn_caches"][i], d_final)
            accumulate(gnn_grads)
            d_q_final[i] += d_init[cand.gnn.virtual_index]
    else:
        head_grads, d_gamma = scalar_head_backward(params, "fg", caches["fg_cache"], d_scores)
        accumulate(head_grads)
        if cfg.K == 0:
            d_g0_direct = d_gamma
        else:
            d_states[:, 0, :] += d_gamma
    d_states[:, 1, :] += d_q_final
    trunk_grads, d_graph_init, d_injections = trunk_backward(
        params, cfg.L, caches["trunk_cache"], d_states
    )
    accumulate(trunk_grads)
    if model.kind == "pooled":
        heads = model.pooling_heads()
        d_g = np.zeros((len(heads), bs, cfg.d))
        d_g[0] = d_graph_init
        if d_g0_direct is not None:
            d_g[0] += d_g0_direct
        for k in range(1, len(heads)):
            layer = _injection_layer(cfg.L, k)
            if layer in d_injections:
                d_g[k] = d_injections[layer]
        pool_caches = caches["pool_caches"]
        for i, cand in enumerate(flat):
            if not cand.edge_matrix.shape[0]:
                continue
            for k, head in enumerate(heads):
                head_grads, _d_edges = pool_backward_arrays(
                    head, pool_caches[i][k], d_g[k, i]
                )
                accumulate({f"pool{k}.{name}": grad for name, grad in head_grads.items()})
    return grads


def loss_and_grads(model: Model, questions: list[PreparedQuestion]):
    result = batch_forward(model, questions)
    grads = batch_backward(model, result)
    return result.loss, grads, result


def batch_loss(model: Model, questions: list[PreparedQuestion]) -> float:
    return batch_forward(model, questions).loss


# --- single-statement trace API ------------------------------------------------


@dataclass
class ForwardTrace:
    final_states: np.ndarray  # [T, d]
    graph_final: np.ndarray  # [d], graph token after layer L
    question_final: np.ndarray  # [d], classification token after layer L
    layer_graph_states: np.ndarray  # [L+1, d]: embedding stage, then per layer
    pooling_weights: list[AttentionWeights] = field(default_factory=list)


@dataclass
class CandidateScores:
    scores: np.ndarray  # [A] unnormalized
    probabilities: np.ndarray  # [A], positive, sums to 1


def forward(
    model: Model,
    ids: np.ndarray,
    graph_reprs: list[GraphRepr],
    mode: str | None = None,
) -> ForwardTrace:
    """Run one statement through the trunk with explicit graph vectors.

    mode "early" expects exactly one graph vector, "early_late" expects K+1;
    vector k targets the skip connection before layer L-k.
    """
    cfg = model.cfg
    mode = mode or cfg.fusion_mode
    expected = 1 if mode == "early" else cfg.num_pooling_heads()
    if len(graph_reprs) != expected:
        raise ValueError(
            f"mode {mode!r} with K={cfg.K} expects {expected} graph vectors, "
            f"got {len(graph_reprs)}"
        )
    vectors = [np.asarray(g.vector if isinstance(g, GraphRepr) else g) for g in graph_reprs]
    ids = np.asarray(ids, dtype=np.int64)[None, :]
    mask = np.ones_like(ids, dtype=bool)
    injections = {
        _injection_layer(cfg.L, k): vectors[k][None, :] for k in range(1, len(vectors))
    }
    states, cache = trunk_forward(
        model.params, cfg.L, cfg.heads, ids, mask, vectors[0][None, :], injections
    )
    graph_states = np.stack([gs[0] for gs in cache[6]])
    return ForwardTrace(
        final_states=states[0],
        graph_final=states[0, 0, :].copy(),
        question_final=states[0, 1, :].copy(),
        layer_graph_states=graph_states,
    )


def score_candidate(model: Model, trace: ForwardTrace, graph_repr_for_scoring) -> float:
    """Unnormalized score; softmax across candidates happens in `predict`."""
    vec = np.asarray(
        graph_repr_for_scoring.vector
        if isinstance(graph_repr_for_scoring, GraphRepr)
        else graph_repr_for_scoring
    )
    fq, _ = scalar_head_forward(model.params, "fq", trace.question_final[None, :])
    fg, _ = scalar_head_forward(model.params, "fg", vec[None, :])
    return float(fq[0] + fg[0])


def predict(
    model: Model,
    record: QuestionRecord,
    kg: KnowledgeGraph,
    templates: TemplateTable,
    encoder,
    condition: str = WITH_ANSWERS,
):
    """Full pipeline for one question.  Returns (choice index, CandidateScores).

    Ties break toward the lowest candidate index.
    """
    prepared = prepare_question(model, kg, templates, encoder, record, condition)
    result = batch_forward(model, [prepared])
    return result.predictions[0], CandidateScores(
        scores=result.scores.copy(), probabilities=result.probs[0]
    )


def evaluate(model: Model, questions: list[PreparedQuestion]) -> float:
    """Accuracy in percent over prepared questions."""
    if not questions:
        raise ValueError("empty evaluation set")
    correct = 0
    for start in range(0, len(questions), 64):
        chunk = questions[start : start + 64]
        result = batch_forward(model, chunk)
        correct += sum(
            int(pred == q.answer_index) for pred, q in zip(result.predictions, chunk)
        )
    return 100.0 * correct / len(questions)


# --- training -------------------------------------------------------------------


class DivergenceError(RuntimeError):
    pass


def train_model(
    model: Model,
    train_questions: list[PreparedQuestion],
    epochs: int | None = None,
    out_dir: str | None = None,
    log: bool = False,
) -> list[float]:
    """Cross-entropy training with RAdam; returns the per-epoch loss curve.

    Deterministic for a fixed config seed.  When out_dir is given a
    checkpoint is written after every epoch plus a `final.ckpt`.
    """
    cfg = model.cfg
    if not train_questions:
        raise ValueError("empty training set")
    if any(len(q.candidates) < 2 for q in train_questions):
        raise ValueError("training questions need at least two candidates")
    epochs = cfg.epochs if epochs is None else epochs
    optimizer = RAdam(model.params, cfg.lr_lm, cfg.lr_graph)
    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle", model.kind))
    losses: list[float] = []
    step = 0
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(len(train_questions))
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_questions[i] for i in order[start : start + cfg.batch_size]]
            loss, grads, _ = loss_and_grads(model, batch)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss {loss} at epoch {epoch} step {step} "
                    f"(kind={model.kind}, lr_lm={cfg.lr_lm}, lr_graph={cfg.lr_graph})"
                )
            optimizer.step(model.params, grads)
            epoch_loss += loss
            batches += 1
            step += 1
        losses.append(epoch_loss / batches)
        if log:
            print(f"epoch {epoch:3d}  loss {losses[-1]:.6f}")
        if out_dir is not None:
            save_model(model, f"{out_dir}/epoch_{epoch:03d}.ckpt", step=step)
    if out_dir is not None:
        save_model(model, f"{out_dir}/final.ckpt", step=step)
    return losses


# --- persistence ----------------------------------------------------------------


def save_model(model: Model, path: str, step: int = 0) -> None:
    save_checkpoint(
        path,
        model.params,
        config=model.cfg.to_dict(),
        seed=model.cfg.seed,
        step=step,
        meta={"kind": model.kind, "relations": model.relations},
    )


def load_model(path: str) -> Model:
    params, header = load_checkpoint(path)
    cfg = Config(**header["config"])
    meta = header["meta"]
    return Model(
        cfg=cfg,
        kind=meta["kind"],
        params=params,
        relations=list(meta["relations"]),
        tokenizer=Tokenizer(cfg.vocab_size),
    )


# --- gradient checking ------------------------------------------------------------


@dataclass
class GradCheckReport:
    group_errors: dict[str, float]
    max_error: float
    checked: int

    def lines(self) -> list[str]:
        out = [f"{group}: {err:.3e}" for group, err in sorted(self.group_errors.items())]
        out.append(f"max_relative_error: {self.max_error:.3e} over {self.checked} parameters")
        return out


def _group_of(name: str) -> str:
    return name.split(".", 1)[0]


def gradient_check(
    model: Model,
    questions: list[PreparedQuestion],
    step: float = 1e-5,
    max_per_param: int | None = None,
) -> GradCheckReport:
    """Central finite differences against the analytic gradients.

    Relative error uses a small magnitude floor so finite-difference noise on
    near-zero gradients does not dominate.  `max_per_param` caps how many
    (deterministically chosen) elements per tensor are probed.
    """
    base_loss, grads, _ = loss_and_grads(model, questions)
    del base_loss
    group_errors: dict[str, float] = {}
    checked = 0
    for name in sorted(model.params):
        if name.startswith(_FROZEN_PREFIX):
            continue
        param = model.params[name]
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param)
        flat = param.reshape(-1)
        grad_flat = np.asarray(grad).reshape(-1)
        if max_per_param is not None and flat.size > max_per_param:
            picker = np.random.default_rng(derive_seed(0, "gradcheck", name))
            indices = picker.choice(flat.size, size=max_per_param, replace=False)
        else:
            indices = np.arange(flat.size)
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + step
            up = batch_loss(model, questions)
            flat[idx] = original - step
            down = batch_loss(model, questions)
            flat[idx] = original
            numeric = (up - down) / (2.0 * step)
            analytic = grad_flat[idx]
            denom = max(abs(analytic), abs(numeric), 1e-4)
            err = abs(analytic - numeric) / denom
            group = _group_of(name)
            group_errors[group] = max(group_errors.get(group, 0.0), err)
            checked += 1
    return GradCheckReport(
        group_errors=group_errors,
        max_error=max(group_errors.values()) if group_errors else 0.0,
        checked=checked,
    )
