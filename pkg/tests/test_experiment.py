from dataclasses import replace

import numpy as np
import pytest

from factpool.config import Config
from factpool.experiment import (
    ExperimentConfig,
    count_aggregations,
    delta_acc,
    explain,
    load_assets,
    pipeline_hashes,
    run_experiment,
    sweep,
)
from factpool.kg import Fact, Subgraph
from factpool.model import (
    WITH_ANSWERS,
    WITHOUT_ANSWERS,
    batch_forward,
    build_encoder,
    create_model,
    prepare_question,
    relation_table,
    train_model,
    prepare_dataset,
)
from factpool.synthetic import SyntheticSpec, write_synthetic


def micro_config(**overrides):
    base = dict(
        L=2, d=16, heads=2, K=1, fusion_mode="early_late", max_tokens=48,
        max_nodes=8, vocab_size=128, epochs=2, batch_size=4, seed=0,
        lr_lm=3e-3, lr_graph=1e-2,
    )
    base.update(overrides)
    return Config(**base)


@pytest.fixture(scope="module")
def micro_assets(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    spec = SyntheticSpec(
        entities=400, relations=3, questions=16, candidates=3,
        distractor_rate=0.5, kg_fraction=0.7, seed=3,
    )
    paths = write_synthetic(spec, out)
    return paths


def micro_ecfg(paths, tmp_out=None, **overrides):
    cfg = micro_config()
    base = dict(
        config=cfg,
        kg_path=str(paths["kg"]),
        dataset_path=str(paths["dataset"]),
        templates_path=str(paths["templates"]),
        train_count=10,
        test_count=6,
        seeds=(0,),
        out_dir=tmp_out,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# --- delta_acc -----------------------------------------------------------------


def test_delta_acc_reference_values():
    assert delta_acc(68.3, 65.0) == -4.8
    assert delta_acc(66.7, 64.8) == -2.8
    assert delta_acc(50.0, 50.0) == 0.0


def test_delta_acc_rounding_away_from_zero():
    from factpool.util import round_half_away

    # 2.25 is an exact binary midpoint at one decimal: ties go away from zero
    assert round_half_away(2.25, 1) == 2.3
    assert round_half_away(-2.25, 1) == -2.3
    assert round(2.25, 1) == 2.2  # the stdlib banker's rule would disagree
    assert delta_acc(100.0, 97.75) == -2.3


# --- run_experiment / metrics ----------------------------------------------------


def test_run_experiment_writes_reproducible_metrics(micro_assets, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    metrics_a = run_experiment(micro_ecfg(micro_assets, str(out_a)))
    metrics_b = run_experiment(micro_ecfg(micro_assets, str(out_b)))
    file_a = (out_a / "metrics_pooled.txt").read_bytes()
    file_b = (out_b / "metrics_pooled.txt").read_bytes()
    assert file_a == file_b
    assert metrics_a.acc_with_mean == metrics_b.acc_with_mean
    text = file_a.decode()
    assert "acc_with_mean=" in text and "[table]" in text and "delta_acc=" in text


def test_condition_isolation_hashes(micro_assets):
    ecfg = micro_ecfg(micro_assets)
    assets = load_assets(ecfg)
    with_h = pipeline_hashes(assets.kg, assets.train_records, ecfg.config, WITH_ANSWERS)
    without_h = pipeline_hashes(assets.kg, assets.train_records, ecfg.config, WITHOUT_ANSWERS)
    for stage in ("kg", "dataset", "linking", "retrieval"):
        assert with_h[stage] == without_h[stage], stage
    assert with_h["perturbation"] != without_h["perturbation"]
    assert with_h["perturbation"] == with_h["retrieval"]  # no-op condition


def test_sweep_singleton_matches_run_experiment(micro_assets):
    ecfg = micro_ecfg(micro_assets)
    rows, text = sweep(ecfg, "max_nodes", [8])
    assert len(rows) == 1
    single = run_experiment(replace(ecfg, config=replace(ecfg.config, max_nodes=8)))
    assert rows[0][1].acc_with_mean == single.acc_with_mean
    assert rows[0][1].delta_acc == single.delta_acc
    assert "axis=max_nodes" in text


def test_sweep_rejects_bad_axis(micro_assets):
    with pytest.raises(ValueError, match="axis"):
        sweep(micro_ecfg(micro_assets), "width", [1])


# --- explain ----------------------------------------------------------------------


def test_explain_report_structure(micro_assets):
    ecfg = micro_ecfg(micro_assets)
    assets = load_assets(ecfg)
    model = create_model(ecfg.config, "pooled", relation_table(assets.kg))
    encoder = build_encoder(model)
    prepared = prepare_dataset(
        model, assets.kg, assets.templates, encoder, assets.train_records
    )
    train_model(model, prepared, epochs=1)
    record = next(r for r in assets.train_records if r.meta.get("kind") == "kg")
    report = explain(model, assets.kg, assets.templates, encoder, record, top_n=3)
    forward = batch_forward(
        model,
        [prepare_question(model, assets.kg, assets.templates, encoder, record)],
    )
    assert len(report.candidates) == len(record.candidates)
    for idx, cand in enumerate(report.candidates):
        assert len(cand.per_layer) == ecfg.config.K + 1
        for k, entries in enumerate(cand.per_layer):
            weights = [e.weight for e in entries]
            assert weights == sorted(weights, reverse=True)
            assert all(0.0 <= w <= 1.0 for w in weights)
            full = forward.pool_weights[idx][k]
            assert len(entries) == min(3, len(full))
            # report weights are exactly the forward pass attention values
            top = sorted(full, reverse=True)[: len(entries)]
            assert np.allclose(weights, top, atol=0)
            assert abs(cand.layer_weight_sums[k] - full.sum()) == 0.0
    rendered = report.render()
    assert "fusion layer k=0" in rendered


def test_explain_top_n_larger_than_edges(micro_assets):
    ecfg = micro_ecfg(micro_assets)
    assets = load_assets(ecfg)
    model = create_model(ecfg.config, "pooled", relation_table(assets.kg))
    encoder = build_encoder(model)
    record = assets.train_records[0]
    report = explain(model, assets.kg, assets.templates, encoder, record, top_n=50)
    prepared = prepare_question(model, assets.kg, assets.templates, encoder, record)
    for cand_report, cand in zip(report.candidates, prepared.candidates):
        for entries in cand_report.per_layer:
            assert len(entries) == len(cand.facts)


def test_explain_requires_pooled(micro_assets):
    ecfg = micro_ecfg(micro_assets)
    assets = load_assets(ecfg)
    model = create_model(ecfg.config, "lm", relation_table(assets.kg))
    encoder = build_encoder(model)
    with pytest.raises(ValueError, match="pooled"):
        explain(model, assets.kg, assets.templates, encoder, assets.train_records[0])


# --- aggregation counts -------------------------------------------------------------


def path_subgraph(n):
    entities = [f"n{i}" for i in range(n)]
    edges = {Fact(entities[i], "r", entities[i + 1]) for i in range(n - 1)}
    return Subgraph(nodes=set(entities), edges=edges, provenance={e: "kg" for e in edges})


@pytest.mark.parametrize("k", [0, 2, 5])
def test_pooled_aggregation_count_is_k_plus_one(k):
    cfg = Config(L=6, d=16, heads=2, K=k,
                 fusion_mode="early" if k == 0 else "early_late", vocab_size=64)
    record = count_aggregations("pooled", path_subgraph(6), cfg)
    assert record.count == k + 1


@pytest.mark.parametrize("nodes,layers", [(4, 1), (10, 2), (16, 2)])
def test_gnn_aggregation_count_is_nodes_times_layers(nodes, layers):
    cfg = Config(L=2, d=16, heads=2, gnn_layers=layers, vocab_size=64)
    record = count_aggregations("gnn", path_subgraph(nodes), cfg)
    assert record.count == nodes * layers
