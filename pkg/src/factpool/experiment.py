"""Experiment runner: training/eval under graph perturbation, sweeps, reports.

A run trains one model per seed under the configured training condition,
then evaluates the held-out questions twice: once on intact subgraphs
(`with_answers`) and once after removing every edge incident to candidate
answer entities (`without_answers`).  The headline number is the relative
accuracy degradation between the two evaluations, reported in percent at
one decimal with ties rounded away from zero.  Pipeline stages are hashed
so runs under different conditions can be shown to differ only at the
perturbation step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from factpool.config import Config
from factpool.data import QuestionRecord, load_dataset
from factpool.gnn import GNNConfig, gnn_forward_arrays, init_gnn_params, subgraph_arrays
from factpool.kg import KnowledgeGraph, Subgraph, load_kg
from factpool.model import (
    CONDITIONS,
    WITH_ANSWERS,
    WITHOUT_ANSWERS,
    Model,
    batch_forward,
    build_encoder,
    build_statement_subgraph,
    create_model,
    evaluate,
    ground_statement,
    prepare_dataset,
    prepare_question,
    relation_table,
    train_model,
)
from factpool.pooling import init_pooling_head, pool_forward
from factpool.util import atomic_write_text, canonical_json, round_half_away, sha256_hex
from factpool.verbalize import TemplateTable, load_templates


def delta_acc(acc_with: float, acc_without: float) -> float:
    """Relative degradation in percent, one decimal, ties away from zero."""
    if acc_with == 0.0:
        return 0.0
    return round_half_away(100.0 * (acc_without - acc_with) / acc_with, 1)


@dataclass
class SeedResult:
    seed: int
    acc_with: float
    acc_without: float
    delta: float
    final_loss: float


@dataclass
class Metrics:
    model_kind: str
    condition: str
    per_seed: list[SeedResult]
    acc_with_mean: float
    acc_without_mean: float
    acc_with_spread: float  # max absolute deviation from the mean
    acc_without_spread: float
    delta_acc: float  # computed on seed-mean accuracies
    pipeline_hashes: dict[str, str] = field(default_factory=dict)

    def render(self) -> str:
        lines = [
            f"model_kind={self.model_kind}",
            f"condition_train={self.condition}",
            f"seeds={','.join(str(r.seed) for r in self.per_seed)}",
            f"acc_with_mean={_fmt(self.acc_with_mean)}",
            f"acc_without_mean={_fmt(self.acc_without_mean)}",
            f"acc_with_spread={_fmt(self.acc_with_spread)}",
            f"acc_without_spread={_fmt(self.acc_without_spread)}",
            f"delta_acc={_fmt(self.delta_acc)}",
        ]
        for stage, digest in sorted(self.pipeline_hashes.items()):
            lines.append(f"hash_{stage}={digest}")
        lines.append("[table]")
        lines.append("seed\tacc_with\tacc_without\tdelta_acc\tfinal_loss")
        for r in self.per_seed:
            lines.append(
                f"{r.seed}\t{_fmt(r.acc_with)}\t{_fmt(r.acc_without)}"
                f"\t{_fmt(r.delta)}\t{_fmt(r.final_loss)}"
            )
        lines.append("[/table]")
        return "\n".join(lines) + "\n"


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def _aggregate(model_kind: str, condition: str, per_seed: list[SeedResult]) -> Metrics:
    acc_with = [r.acc_with for r in per_seed]
    acc_without = [r.acc_without for r in per_seed]
    mean_with = float(np.mean(acc_with))
    mean_without = float(np.mean(acc_without))
    return Metrics(
        model_kind=model_kind,
        condition=condition,
        per_seed=per_seed,
        acc_with_mean=mean_with,
        acc_without_mean=mean_without,
        acc_with_spread=float(max(abs(a - mean_with) for a in acc_with)),
        acc_without_spread=float(max(abs(a - mean_without) for a in acc_without)),
        delta_acc=delta_acc(mean_with, mean_without),
    )


@dataclass
class ExperimentConfig:
    config: Config
    kg_path: str
    dataset_path: str
    templates_path: str
    train_count: int
    test_count: int
    model_kind: str = "pooled"
    condition: str = WITH_ANSWERS  # training condition
    seeds: tuple[int, ...] = (0, 1, 2)
    k_values: tuple[int, ...] = (0, 2, 5)
    max_nodes_values: tuple[int, ...] = (16, 32, 64)
    out_dir: str | None = None


@dataclass
class ExperimentAssets:
    kg: KnowledgeGraph
    templates: TemplateTable
    train_records: list[QuestionRecord]
    test_records: list[QuestionRecord]


def load_assets(ecfg: ExperimentConfig) -> ExperimentAssets:
    kg = load_kg(ecfg.kg_path)
    templates = load_templates(ecfg.templates_path)
    records = load_dataset(ecfg.dataset_path)
    if len(records) < ecfg.train_count + ecfg.test_count:
        raise ValueError(
            f"dataset has {len(records)} records, need "
            f"{ecfg.train_count}+{ecfg.test_count}"
        )
    return ExperimentAssets(
        kg=kg,
        templates=templates,
        train_records=records[: ecfg.train_count],
        test_records=records[ecfg.train_count : ecfg.train_count + ecfg.test_count],
    )


def run_experiment(ecfg: ExperimentConfig, assets: ExperimentAssets | None = None) -> Metrics:
    """Train per seed under ecfg.condition; evaluate under both conditions."""
    if ecfg.condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    assets = assets or load_assets(ecfg)
    per_seed: list[SeedResult] = []
    for seed in ecfg.seeds:
        cfg = replace(ecfg.config, seed=seed)
        model = create_model(cfg, ecfg.model_kind, relation_table(assets.kg))
        encoder = build_encoder(model)
        train_q = prepare_dataset(
            model, assets.kg, assets.templates, encoder, assets.train_records, ecfg.condition
        )
        ckpt_dir = None
        if ecfg.out_dir is not None:
            ckpt_dir = str(Path(ecfg.out_dir) / f"{ecfg.model_kind}_seed{seed}")
        losses = train_model(model, train_q, out_dir=ckpt_dir)
        accs = {}
        for condition in CONDITIONS:
            test_q = prepare_dataset(
                model, assets.kg, assets.templates, encoder, assets.test_records, condition
            )
            accs[condition] = evaluate(model, test_q)
        per_seed.append(
            SeedResult(
                seed=seed,
                acc_with=accs[WITH_ANSWERS],
                acc_without=accs[WITHOUT_ANSWERS],
                delta=delta_acc(accs[WITH_ANSWERS], accs[WITHOUT_ANSWERS]),
                final_loss=losses[-1],
            )
        )
    metrics = _aggregate(ecfg.model_kind, ecfg.condition, per_seed)
    metrics.pipeline_hashes = pipeline_hashes(
        assets.kg, assets.train_records, ecfg.config, ecfg.condition
    )
    if ecfg.out_dir is not None:
        out = Path(ecfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / f"metrics_{ecfg.model_kind}.txt", metrics.render())
    return metrics


def sweep(ecfg: ExperimentConfig, axis: str, values=None):
    """One run per value along `axis` ('K' or 'max_nodes'), shared seeds."""
    if axis not in ("K", "max_nodes"):
        raise ValueError("axis must be 'K' or 'max_nodes'")
    if values is None:
        values = ecfg.k_values if axis == "K" else ecfg.max_nodes_values
    if not values:
        raise ValueError("sweep needs at least one value")
    assets = load_assets(ecfg)
    rows = []
    for value in values:
        if axis == "K":
            cfg = replace(ecfg.config, K=int(value), fusion_mode="early_late")
        else:
            cfg = replace(ecfg.config, max_nodes=int(value))
        cell = replace(ecfg, config=cfg, out_dir=None)
        rows.append((value, run_experiment(cell, assets)))
    table = [f"axis={axis}", "value\tacc_with_mean\tacc_without_mean\tdelta_acc"]
    for value, metrics in rows:
        table.append(
            f"{value}\t{_fmt(metrics.acc_with_mean)}"
            f"\t{_fmt(metrics.acc_without_mean)}\t{_fmt(metrics.delta_acc)}"
        )
    text = "\n".join(table) + "\n"
    if ecfg.out_dir is not None:
        out = Path(ecfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / f"sweep_{axis}.txt", text)
    return rows, text


# --- pipeline hashing ---------------------------------------------------------


def pipeline_hashes(
    kg: KnowledgeGraph,
    records: list[QuestionRecord],
    cfg: Config,
    condition: str,
) -> dict[str, str]:
    """Stage digests: everything before the perturbation step is
    condition-independent; the perturbation stage reflects the condition."""
    kg_digest = sha256_hex("\n".join(sorted(f.key() for f in kg.facts)))
    dataset_digest = sha256_hex("\n".join(r.to_json() for r in records))
    linking = []
    retrieval = []
    perturbation = []
    for record in records:
        for idx, cand in enumerate(record.candidates):
            stmt = ground_statement(
                kg,
                record.context,
                record.question,
                cand,
                label=(idx == record.answer_index),
                question_entities=(
                    set(record.question_entities)
                    if record.question_entities is not None
                    else None
                ),
                answer_entities=(
                    set(record.answer_entities[idx])
                    if record.answer_entities is not None
                    else None
                ),
            )
            linking.append(
                canonical_json(
                    {
                        "q": sorted(stmt.question_entities),
                        "a": sorted(stmt.answer_entities),
                    }
                )
            )
            intact = build_statement_subgraph(kg, stmt, cfg.max_nodes, WITH_ANSWERS)
            retrieval.append(intact.canonical())
            conditioned = build_statement_subgraph(kg, stmt, cfg.max_nodes, condition)
            perturbation.append(conditioned.canonical())
    return {
        "kg": kg_digest,
        "dataset": dataset_digest,
        "linking": sha256_hex("\n".join(linking)),
        "retrieval": sha256_hex("\n".join(retrieval)),
        "perturbation": sha256_hex("\n".join(perturbation)),
    }


# --- interpretability ----------------------------------------------------------


@dataclass
class ExplainEntry:
    weight: float
    fact_key: str
    text: str


@dataclass
class CandidateExplanation:
    candidate_index: int
    candidate_text: str
    per_layer: list[list[ExplainEntry]]  # index k -> descending top-N
    layer_weight_sums: list[float]


@dataclass
class ExplainReport:
    question: str
    candidates: list[CandidateExplanation]

    def render(self) -> str:
        lines = [f"question: {self.question}"]
        for cand in self.candidates:
            lines.append(f"candidate[{cand.candidate_index}]: {cand.candidate_text}")
            for k, entries in enumerate(cand.per_layer):
                lines.append(f"  fusion layer k={k} (weight sum {_fmt(cand.layer_weight_sums[k])})")
                for rank, entry in enumerate(entries, start=1):
                    lines.append(
                        f"    {rank}. {entry.weight:.4f}  {entry.text}  [{entry.fact_key}]"
                    )
        return "\n".join(lines) + "\n"


def explain(
    model: Model,
    kg: KnowledgeGraph,
    templates: TemplateTable,
    encoder,
    record: QuestionRecord,
    top_n: int = 3,
    condition: str = WITH_ANSWERS,
) -> ExplainReport:
    """Top-N facts per fusion layer by attention weight, from a real forward."""
    if model.kind != "pooled":
        raise ValueError("explain requires a pooled model")
    prepared = prepare_question(model, kg, templates, encoder, record, condition)
    result = batch_forward(model, [prepared])
    out = []
    for idx, cand in enumerate(prepared.candidates):
        per_layer = []
        sums = []
        for k in range(model.cfg.num_pooling_heads()):
            weights = result.pool_weights[idx][k]
            order = np.argsort(-weights, kind="stable")[: min(top_n, len(weights))]
            per_layer.append(
                [
                    ExplainEntry(
                        weight=float(weights[i]),
                        fact_key=cand.facts[i].key(),
                        text=cand.fact_texts[i],
                    )
                    for i in order
                ]
            )
            sums.append(float(weights.sum()))
        out.append(
            CandidateExplanation(
                candidate_index=idx,
                candidate_text=record.candidates[idx],
                per_layer=per_layer,
                layer_weight_sums=sums,
            )
        )
    return ExplainReport(question=record.question, candidates=out)


# --- complexity instrumentation --------------------------------------------------


@dataclass
class AggregationCount:
    model_kind: str
    count: int
    detail: dict


def count_aggregations(model_kind: str, sub: Subgraph, cfg: Config) -> AggregationCount:
    """Instrumented aggregation events for one statement's subgraph."""
    rng = np.random.default_rng(0)
    if model_kind == "pooled":
        edges = sub.sorted_edges()
        matrix = rng.standard_normal((len(edges), cfg.d))
        count = 0
        for _ in range(cfg.num_pooling_heads()):
            head = init_pooling_head(cfg.d, rng)
            if len(edges):
                pool_forward(head, matrix)
            count += 1
        return AggregationCount("pooled", count, {"K": cfg.K, "edges": len(edges)})
    if model_kind == "gnn":
        relations = sorted({e.relation for e in sub.edges})
        relation_index = {rel: i for i, rel in enumerate(relations)}
        arrays = subgraph_arrays(sub, relation_index)
        params = init_gnn_params(cfg.d, max(1, len(relations)), rng)
        node_init = rng.standard_normal((len(arrays.node_ids), cfg.d))
        gcfg = GNNConfig(layers=cfg.gnn_layers, aggregation=cfg.gnn_aggregation)
        _, _, count = gnn_forward_arrays(params, gcfg, arrays, node_init)
        return AggregationCount(
            "gnn", count, {"nodes": len(arrays.node_ids), "layers": cfg.gnn_layers}
        )
    raise ValueError("model_kind must be 'pooled' or 'gnn'")
