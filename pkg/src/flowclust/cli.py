"""Command-line interface: generate, spectral, train, evaluate, report, sweep.

Every command writes machine-readable outputs (CSV/JSON) into an
output directory together with a manifest of the resolved
configuration and all seeds, so runs can be reproduced exactly.
Exit codes: 0 success, 2 configuration error, 3 partial sweep
failure, 4 total sweep failure.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .dsbm import DsbmSpec, STRUCTURES, build_meta_graph, default_beta, sample_dsbm
from .evaluation import adjusted_rand_index, one_hot, report as build_report
from .graphs import (largest_weakly_connected_component, ratio_transform, read_edge_list,
                     read_labels, write_edge_list, write_labels, write_node_mapping)
from .imbalance import NORMALIZATIONS, global_objective, pair_scores
from .model import forward, init_params
from .spectral import kmeans, make_features
from .training import TrainConfig, make_splits, save_checkpoint, train

DEFAULTS = {
    "features": {"source": "spectral", "normalization": "random_walk"},
    "model": {"hidden": 32, "hops": 2, "tau": 0.5, "dropout": 0.5},
    "training": {
        "max_epochs": 1000, "patience": 200, "learning_rate": 0.01,
        "weight_decay": 5e-4, "loss_norm": "vol_sum", "loss_variant": "sort",
        "beta": None, "std_warmup_epochs": 50, "warmup_beta": 3,
        "gamma_seed": 50.0, "gamma_triplet": 0.1, "test_fraction": 0.1,
        "validation_fraction": 0.1, "seed_ratio": 0.0, "seed": 0,
    },
}


class ConfigError(Exception):
    pass


def _merged_section(config: dict, name: str) -> dict:
    section = dict(DEFAULTS.get(name, {}))
    extra = config.get(name, {})
    unknown = set(extra) - set(section) if name in DEFAULTS else set()
    if unknown:
        raise ConfigError(f"[{name}] has unknown keys: {sorted(unknown)}")
    section.update(extra)
    return section


def _load_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _train_config(section: dict, beta_default=None) -> TrainConfig:
    beta = section["beta"]
    if beta is None and section["loss_variant"] == "sort":
        beta = beta_default
    try:
        return TrainConfig(
            max_epochs=int(section["max_epochs"]), patience=int(section["patience"]),
            lr=float(section["learning_rate"]), weight_decay=float(section["weight_decay"]),
            loss_norm=section["loss_norm"], loss_variant=section["loss_variant"],
            beta=None if beta is None else int(beta),
            std_warmup_epochs=int(section["std_warmup_epochs"]),
            warmup_beta=int(section["warmup_beta"]),
            gamma_seed=float(section["gamma_seed"]),
            gamma_triplet=float(section["gamma_triplet"]),
            tau=float(section.get("tau", 0.5)),
            seed=int(section["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_dataset(edges, labels=None, features=None, ratio=False, largest_component=True,
                 mapping_out=None):
    """Read a dataset from files and normalize it for the pipeline.

    Extracts the largest weakly connected component by default,
    re-indexing features and labels through the component mapping, and
    optionally applies the pairwise ratio transform to the weights.
    Returns (graph, features, labels, node_ids).
    """
    g, node_ids = read_edge_list(edges)
    lab = None
    if labels is not None:
        lab = read_labels(labels)
        if lab.size != g.n:
            raise ConfigError(f"labels file has {lab.size} rows for {g.n} nodes")
    feats = None
    if features is not None:
        feats = np.loadtxt(features, delimiter=",", ndmin=2, dtype=np.float64)
        if feats.shape[0] != g.n:
            raise ConfigError(f"features file has {feats.shape[0]} rows for {g.n} nodes")
    if largest_component:
        g, keep = largest_weakly_connected_component(g)
        node_ids = node_ids[keep]
        lab = lab[keep] if lab is not None else None
        feats = feats[keep] if feats is not None else None
    if ratio:
        g = ratio_transform(g)
    if mapping_out is not None:
        write_node_mapping(node_ids, mapping_out)
    return g, feats, lab, node_ids


def _load_for_command(*args, **kwargs):
    try:
        return load_dataset(*args, **kwargs)
    except (ConfigError, ValueError) as exc:
        raise click.UsageError(str(exc)) from exc


def _read_assignment(path: Path):
    """Label file (one integer per line) or CSV probability matrix."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    if "," in first:
        return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return read_labels(path)


def _write_pair_table(g, p, beta, path) -> None:
    by_norm = {norm: pair_scores(g, p, norm, "naive") for norm in NORMALIZATIONS}
    std_selected = set(pair_scores(g, p, "vol_sum", "std").selected)
    sort_selected = set(pair_scores(g, p, "vol_sum", "sort", beta=beta).selected)
    cuts = by_norm["vol_sum"].cuts
    k = cuts.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "l", "cut_kl", "cut_lk"]
                        + [f"ci_{norm}" for norm in NORMALIZATIONS]
                        + ["selected_sort", "selected_std"])
        for a in range(k):
            for b in range(a + 1, k):
                writer.writerow(
                    [a, b, repr(float(cuts[a, b])), repr(float(cuts[b, a]))]
                    + [repr(float(by_norm[norm].ci[a, b])) for norm in NORMALIZATIONS]
                    + [int((a, b) in sort_selected), int((a, b) in std_selected)])


def _write_epoch_log(log, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_objective", "test_ari", "variant"])
        for rec in log:
            writer.writerow([rec.epoch, repr(float(rec.train_loss)), repr(float(rec.val_objective)),
                             "" if rec.test_ari is None else repr(float(rec.test_ari)),
                             rec.variant_used])


def _write_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _derived_seed(*key) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


OUTPUT_ROOT_ENV = "FLOWCLUST_OUTPUT_ROOT"


def _resolve_out(path, default_name: str) -> Path:
    """Resolve an output directory against the optional output root.

    Relative paths (and the fallback ``default_name``) land under
    ``$FLOWCLUST_OUTPUT_ROOT`` when that variable is set, otherwise
    under the working directory; absolute paths are taken as given.
    """
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    path = Path(path) if path is not None else Path(default_name)
    return path if path.is_absolute() else root / path


@click.group()
@click.version_option(version=__version__, prog_name="flowclust")
def main():
    """Cluster directed graphs by maximizing flow imbalance."""


@main.command()
@click.option("--structure", type=click.Choice(STRUCTURES), default="cycle", show_default=True)
@click.option("--clusters", "-k", type=int, default=3, show_default=True)
@click.option("--eta", type=float, default=0.05, show_default=True,
              help="Direction flip probability in [0, 0.5].")
@click.option("--ambient/--no-ambient", default=False, show_default=True)
@click.option("--nodes", "-n", type=int, default=1000, show_default=True)
@click.option("--edge-prob", "-p", type=float, default=0.1, show_default=True)
@click.option("--rho", type=float, default=1.0, show_default=True,
              help="Largest/smallest cluster size ratio.")
@click.option("--self-loops/--no-self-loops", default=True, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def generate(structure, clusters, eta, ambient, nodes, edge_prob, rho, self_loops, seed, out):
    """Sample a synthetic block-model digraph and write it to disk."""
    out = _resolve_out(out, "flowclust-generate")
    try:
        meta = build_meta_graph(structure, clusters, eta, ambient, seed=seed)
        spec = DsbmSpec(meta, nodes, edge_prob, rho, seed=seed, self_loops=self_loops)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    labeled = sample_dsbm(spec)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(labeled.graph, out / "edges.tsv")
    write_labels(labeled.labels, out / "labels.txt")
    _write_json({
        "structure": structure, "clusters": clusters, "eta": eta, "ambient": ambient,
        "nodes": nodes, "edge_prob": edge_prob, "rho": rho, "self_loops": self_loops,
        "seed": seed, "beta": default_beta(meta),
        "flow": meta.flow.tolist(), "flow_filled": meta.flow_filled.tolist(),
        "n_edges": labeled.graph.n_edges, "version": __version__,
    }, out / "meta.json")
    click.echo(f"wrote {labeled.graph.n} nodes, {labeled.graph.n_edges} edges to {out}")


@main.command("spectral")
@click.option("--edges", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--clusters", "-k", type=int, required=True)
@click.option("--normalization", type=click.Choice(["none", "random_walk"]),
              default="random_walk", show_default=True)
@click.option("--restarts", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ratio-transform", "ratio", is_flag=True, default=False)
@click.option("--keep-all-components", is_flag=True, default=False)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def spectral_cmd(edges, clusters, normalization, restarts, seed, ratio,
                 keep_all_components, out):
    """Spectral features plus a k-means baseline clustering."""
    out = _resolve_out(out, "flowclust-spectral")
    out.mkdir(parents=True, exist_ok=True)
    g, _, _, _ = _load_for_command(edges, ratio=ratio,
                                   largest_component=not keep_all_components,
                                   mapping_out=out / "mapping.csv")
    features = make_features(g, clusters, normalization)
    labels = kmeans(features, clusters, restarts=restarts, seed=seed)
    np.savetxt(out / "features.csv", features, delimiter=",")
    write_labels(labels, out / "labels.txt")
    click.echo(f"wrote spectral features {features.shape} and labels to {out}")


@main.command()
@click.option("--edges", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--assignment", type=click.Path(exists=True, path_type=Path), required=True,
              help="Label file (one id per line) or CSV probability matrix.")
@click.option("--clusters", "-k", type=int, default=None,
              help="Number of clusters; inferred from the assignment if omitted.")
@click.option("--beta", type=int, default=None, help="Pair count for the sort variant.")
@click.option("--truth", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--ratio-transform", "ratio", is_flag=True, default=False)
@click.option("--keep-all-components", is_flag=True, default=False)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def evaluate(edges, assignment, clusters, beta, truth, ratio, keep_all_components, out):
    """Score a partition with all twelve imbalance objectives."""
    out = _resolve_out(out, "flowclust-evaluate")
    out.mkdir(parents=True, exist_ok=True)
    g, _, _, _ = _load_for_command(edges, ratio=ratio,
                                   largest_component=not keep_all_components)
    pred = _read_assignment(assignment)
    if pred.ndim == 1 and clusters is not None:
        pred = one_hot(pred, clusters)
    if pred.shape[0] != g.n:
        raise click.UsageError(
            f"assignment has {pred.shape[0]} rows but the graph has {g.n} nodes")
    truth_labels = read_labels(truth) if truth else None
    rep = build_report(g, pred, truth=truth_labels, beta=beta)
    _write_json(rep.to_dict(), out / "objectives.json")
    p = pred if pred.ndim == 2 else one_hot(pred)
    k = p.shape[1]
    _write_pair_table(g, p, beta if beta is not None else max(k - 1, 1), out / "pairs.csv")
    click.echo(f"wrote objectives.json and pairs.csv to {out}")


@main.command("report")
@click.option("--edges", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--prediction", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--truth", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--beta", type=int, default=None)
@click.option("--ratio-transform", "ratio", is_flag=True, default=False)
@click.option("--keep-all-components", is_flag=True, default=False)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def report_cmd(edges, prediction, truth, beta, ratio, keep_all_components, out):
    """Full partition report: objectives, ARI/NMI, sizes, flow matrix."""
    out = _resolve_out(out, "flowclust-report")
    out.mkdir(parents=True, exist_ok=True)
    g, _, _, _ = _load_for_command(edges, ratio=ratio,
                                   largest_component=not keep_all_components)
    pred = _read_assignment(prediction)
    truth_labels = read_labels(truth) if truth else None
    rep = build_report(g, pred, truth=truth_labels, beta=beta)
    _write_json(rep.to_dict(), out / "report.json")
    p = pred if np.asarray(pred).ndim == 2 else one_hot(pred)
    _write_pair_table(g, p, beta if beta is not None else max(p.shape[1] - 1, 1),
                      out / "pairs.csv")
    np.savetxt(out / "flow.csv", rep.flow_matrix, delimiter=",")
    click.echo(f"wrote report.json, pairs.csv and flow.csv to {out}")


def _resolve_dataset(section: dict, seed: int):
    """Build (graph, labels, meta_or_None) from a [dataset] config section."""
    if "edges" in section:
        g, feats, lab, _ = load_dataset(
            section["edges"], labels=section.get("labels"),
            features=None, ratio=bool(section.get("ratio_transform", False)),
            largest_component=bool(section.get("largest_component", True)))
        return g, lab, None, feats
    required = {"structure", "clusters", "nodes", "edge_prob"}
    missing = required - set(section)
    if missing:
        raise ConfigError(f"[dataset] missing keys: {sorted(missing)}")
    meta = build_meta_graph(section["structure"], int(section["clusters"]),
                            float(section.get("eta", 0.05)),
                            bool(section.get("ambient", False)), seed=seed)
    spec = DsbmSpec(meta, int(section["nodes"]), float(section["edge_prob"]),
                    float(section.get("rho", 1.0)), seed=seed,
                    self_loops=bool(section.get("self_loops", True)))
    labeled = sample_dsbm(spec)
    return labeled.graph, labeled.labels, meta, None


def _features_for(g, clusters, section, file_features):
    if section["source"] == "file":
        if file_features is None:
            path = section.get("path")
            if path is None:
                raise ConfigError("[features] source='file' needs a path")
            file_features = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        if file_features.shape[0] != g.n:
            raise ConfigError("feature row count does not match the graph")
        return file_features
    if section["source"] != "spectral":
        raise ConfigError(f"unknown feature source {section['source']!r}")
    return make_features(g, clusters, section["normalization"])


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Overrides [output].directory from the config.")
def train_cmd(config_path, out):
    """Train the clustering model from a TOML experiment config."""
    try:
        raw = _load_toml(config_path)
        dataset = raw.get("dataset")
        if dataset is None:
            raise ConfigError("config needs a [dataset] section")
        features_cfg = _merged_section(raw, "features")
        model_cfg = _merged_section(raw, "model")
        training_cfg = _merged_section(raw, "training")
        out_dir = _resolve_out(out if out is not None
                               else raw.get("output", {}).get("directory"),
                               "flowclust-run")

        data_seed = int(dataset.get("seed", training_cfg["seed"]))
        g, labels, meta, file_feats = _resolve_dataset(dataset, data_seed)
        clusters = int(dataset.get("clusters", 0)) or (int(labels.max()) + 1 if labels is not None else 0)
        if clusters < 2:
            raise ConfigError("need [dataset].clusters >= 2 (or a labels file)")
        x = _features_for(g, clusters, features_cfg, file_feats)
        cfg = _train_config(training_cfg,
                            beta_default=default_beta(meta) if meta is not None else max(clusters - 1, 1))
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc

    out_dir.mkdir(parents=True, exist_ok=True)
    shutil.copy(config_path, out_dir / "config.toml")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    splits = make_splits(g.n, labels=labels,
                         test_frac=float(training_cfg["test_fraction"]),
                         val_frac=float(training_cfg["validation_fraction"]),
                         seed_ratio=float(training_cfg["seed_ratio"]) if labels is not None else 0.0,
                         rng=rng)
    params = init_params(x.shape[1], int(model_cfg["hidden"]), clusters,
                         hops=int(model_cfg["hops"]), dropout=float(model_cfg["dropout"]),
                         rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 2])))
    cfg = dataclasses.replace(cfg, tau=float(model_cfg["tau"]))
    best, log = train(g, x, params, splits, cfg, labels=labels)

    trace = forward(g, x, best, "eval", tau=cfg.tau)
    pred = trace.p.argmax(axis=1)
    rep = build_report(g, trace.p, truth=labels, beta=cfg.beta)
    save_checkpoint(best, out_dir / "checkpoint.npz")
    _write_epoch_log(log, out_dir / "epochs.csv")
    write_labels(pred, out_dir / "labels_pred.txt")
    np.savetxt(out_dir / "probabilities.csv", trace.p, delimiter=",")
    _write_json(rep.to_dict(), out_dir / "report.json")
    manifest = {
        "version": __version__, "config": str(config_path), "nodes": g.n,
        "edges": g.n_edges, "clusters": clusters, "epochs_run": len(log),
        "best_epoch": int(np.argmax([r.val_objective for r in log])) + 1,
        "seeds": {"data": data_seed, "training": cfg.seed},
        "training": dataclasses.asdict(cfg),
        "test_ari": log[-1].test_ari,
    }
    _write_json(manifest, out_dir / "manifest.json")
    click.echo(f"trained {len(log)} epochs; outputs in {out_dir}")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _execute_run(task: dict) -> dict:
    """One (setting, graph, split) training run; returns a result row."""
    row = {key: task[key] for key in ("eta", "setting_index", "graph_index", "split_index",
                                      "graph_seed", "split_seed", "init_seed", "train_seed")}
    try:
        dataset = task["dataset"]
        meta = build_meta_graph(dataset["structure"], dataset["clusters"], task["eta"],
                                dataset.get("ambient", False), seed=task["graph_seed"])
        spec = DsbmSpec(meta, dataset["nodes"], dataset["edge_prob"],
                        dataset.get("rho", 1.0), seed=task["graph_seed"],
                        self_loops=dataset.get("self_loops", True))
        labeled = sample_dsbm(spec)
        g, labels = labeled.graph, labeled.labels
        x = make_features(g, meta.k, task["features"]["normalization"])
        splits = make_splits(g.n, labels=labels,
                             test_frac=task["training"]["test_fraction"],
                             val_frac=task["training"]["validation_fraction"],
                             seed_ratio=task["training"]["seed_ratio"],
                             rng=np.random.default_rng(task["split_seed"]))
        params = init_params(x.shape[1], task["model"]["hidden"], meta.k,
                             hops=task["model"]["hops"], dropout=task["model"]["dropout"],
                             rng=np.random.default_rng(task["init_seed"]))
        cfg = _train_config({**task["training"], "seed": task["train_seed"]},
                            beta_default=default_beta(meta))
        cfg = dataclasses.replace(cfg, tau=task["model"]["tau"])
        best, log = train(g, x, params, splits, cfg, labels=labels)
        trace = forward(g, x, best, "eval", tau=cfg.tau)
        pred = trace.p.argmax(axis=1)
        objective, _ = global_objective(g, trace.p, cfg.loss_norm, cfg.loss_variant, cfg.beta)
        row.update({
            "test_ari": adjusted_rand_index(labels[splits.test], pred[splits.test]),
            "objective": objective,
            "epochs_run": len(log),
            "error": "",
        })
    except Exception as exc:  # noqa: BLE001 - failures become rows
        row.update({"test_ari": "", "objective": "", "epochs_run": "",
                    "error": f"{type(exc).__name__}: {exc}"})
    return row


def _sweep_tasks(config: dict):
    dataset = config.get("dataset")
    if dataset is None or "structure" not in dataset:
        raise ConfigError("sweep needs a synthetic [dataset] section")
    dataset = {
        "structure": dataset["structure"], "clusters": int(dataset["clusters"]),
        "nodes": int(dataset["nodes"]), "edge_prob": float(dataset["edge_prob"]),
        "rho": float(dataset.get("rho", 1.0)), "ambient": bool(dataset.get("ambient", False)),
        "self_loops": bool(dataset.get("self_loops", True)),
    }
    sweep = config.get("sweep", {})
    eta_grid = [float(e) for e in sweep.get("eta_grid", [0.05])]
    graphs_per_setting = int(sweep.get("graphs_per_setting", 5))
    splits_per_graph = int(sweep.get("splits_per_graph", 10))
    master_seed = int(sweep.get("master_seed", 0))
    if graphs_per_setting < 1 or splits_per_graph < 1:
        raise ConfigError("replication counts must be >= 1")
    features_cfg = _merged_section(config, "features")
    if features_cfg["source"] != "spectral":
        raise ConfigError("sweeps support only spectral features")
    model_cfg = _merged_section(config, "model")
    training_cfg = _merged_section(config, "training")
    _train_config(training_cfg, beta_default=1)  # validate eagerly

    tasks = []
    for s_idx, eta in enumerate(eta_grid):
        for g_idx in range(graphs_per_setting):
            graph_seed = _derived_seed(master_seed, s_idx, g_idx, 0xA)
            for split_idx in range(splits_per_graph):
                run_seeds = np.random.SeedSequence(
                    [master_seed, s_idx, g_idx, split_idx, 0xB]).generate_state(3)
                tasks.append({
                    "eta": eta, "setting_index": s_idx, "graph_index": g_idx,
                    "split_index": split_idx, "graph_seed": graph_seed,
                    "split_seed": int(run_seeds[0]), "init_seed": int(run_seeds[1]),
                    "train_seed": int(run_seeds[2]),
                    "dataset": dataset, "features": features_cfg,
                    "model": model_cfg, "training": training_cfg,
                })
    manifest = {
        "version": __version__, "eta_grid": eta_grid,
        "graphs_per_setting": graphs_per_setting, "splits_per_graph": splits_per_graph,
        "master_seed": master_seed, "dataset": dataset, "features": features_cfg,
        "model": model_cfg, "training": training_cfg,
        "seeds": [{key: t[key] for key in ("eta", "graph_seed", "split_seed",
                                           "init_seed", "train_seed")} for t in tasks],
    }
    return tasks, manifest


def run_sweep(config: dict, jobs: int = 1):
    """Replicated eta sweep. Returns (rows, summary_rows, n_failed).

    Rows are ordered by (setting, graph, split) regardless of how many
    workers executed them; failed runs carry an ``error`` message and
    are excluded from the per-setting summary statistics.
    """
    tasks, manifest = _sweep_tasks(config)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_execute_run, tasks))
    else:
        rows = [_execute_run(task) for task in tasks]
    rows.sort(key=lambda r: (r["setting_index"], r["graph_index"], r["split_index"]))

    summary = []
    for s_idx in sorted({r["setting_index"] for r in rows}):
        group = [r for r in rows if r["setting_index"] == s_idx]
        good = [r for r in group if not r["error"]]
        aris = np.array([r["test_ari"] for r in good], dtype=np.float64)
        objs = np.array([r["objective"] for r in good], dtype=np.float64)
        entry = {"eta": group[0]["eta"], "n_runs": len(group), "n_failed": len(group) - len(good)}
        if good:
            entry.update({
                "mean_ari": float(aris.mean()),
                "stderr_ari": float(aris.std(ddof=1) / np.sqrt(len(good))) if len(good) > 1 else 0.0,
                "mean_objective": float(objs.mean()),
                "stderr_objective": float(objs.std(ddof=1) / np.sqrt(len(good))) if len(good) > 1 else 0.0,
            })
        else:
            entry.update({"mean_ari": "", "stderr_ari": "", "mean_objective": "",
                          "stderr_objective": ""})
        summary.append(entry)
    n_failed = sum(1 for r in rows if r["error"])
    return rows, summary, n_failed, manifest


_RUN_COLUMNS = ["eta", "setting_index", "graph_index", "split_index", "graph_seed",
                "split_seed", "init_seed", "train_seed", "test_ari", "objective",
                "epochs_run", "error"]
_SUMMARY_COLUMNS = ["eta", "n_runs", "n_failed", "mean_ari", "stderr_ari",
                    "mean_objective", "stderr_objective"]


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, "") for key in columns})


@main.command("sweep")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Concurrent training runs.")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Overrides [output].directory from the config.")
def sweep_cmd(config_path, jobs, out):
    """Run a replicated noise sweep and summarize mean +/- stderr."""
    try:
        config = _load_toml(config_path)
        out_dir = _resolve_out(out if out is not None
                               else config.get("output", {}).get("directory"),
                               "flowclust-sweep")
        tasks, _ = _sweep_tasks(config)  # validate before any work
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc

    rows, summary, n_failed, manifest = run_sweep(config, jobs=jobs)
    out_dir.mkdir(parents=True, exist_ok=True)
    shutil.copy(config_path, out_dir / "config.toml")
    _write_csv(out_dir / "runs.csv", _RUN_COLUMNS, rows)
    _write_csv(out_dir / "summary.csv", _SUMMARY_COLUMNS, summary)
    _write_json(manifest, out_dir / "manifest.json")
    for entry in summary:
        click.echo(f"eta={entry['eta']}: mean ARI {entry['mean_ari']} "
                   f"(stderr {entry['stderr_ari']}, {entry['n_failed']} failed)")
    if n_failed == len(rows):
        sys.exit(4)
    if n_failed:
        sys.exit(3)
