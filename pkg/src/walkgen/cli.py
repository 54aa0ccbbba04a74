"""Command-line front end. Each subcommand wraps one module operation with
file I/O; `pipeline` chains them all with a resumable run manifest."""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from walkgen import assemble as assemble_mod
from walkgen import graph as graph_mod
from walkgen import metrics as metrics_mod
from walkgen import plots
from walkgen import switch as switch_mod
from walkgen import walks as walks_mod
from walkgen.bloom import BloomParams, NeighborhoodFilter, build_neighborhood_filter
from walkgen.models import ModelConfig, TrainParams, load_model, save_model, train
from walkgen.models.sampling import sample_walks
from walkgen.pipeline import ConfigError, RunConfig, StageError, run_pipeline


def _fail_as_stage_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, click.UsageError):
            raise
        except StageError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except Exception as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _require(path, producer):
    if not Path(path).is_file():
        raise click.UsageError(f"missing artifact {path}; produce it with `walkgen {producer}`")
    return Path(path)


@click.group()
def cli():
    """Graph generation with fast/slow next-node models."""


@cli.command("make-sbm")
@click.option("--communities", default=4, show_default=True)
@click.option("--size", default=75, show_default=True, help="Nodes per community")
@click.option("--p-in", default=0.1, show_default=True)
@click.option("--p-out", default=0.005, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--labels-out", type=click.Path(), default=None, help="Optional community label file")
@_fail_as_stage_error
def cmd_make_sbm(communities, size, p_in, p_out, seed, out, labels_out):
    """Sample a stochastic block model graph to an edge list."""
    from walkgen.datasets import sample_sbm

    g = sample_sbm([size] * communities, p_in, p_out, seed=seed)
    graph_mod.save_edge_list(g, out)
    if labels_out:
        with open(labels_out, "w") as fh:
            for node in range(g.n):
                fh.write(f"{node} {g.community_labels[node]}\n")
    click.echo(f"wrote {g.n} nodes, {g.num_edges} edges to {out}")


@cli.command("split")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--fraction", default=0.2, show_default=True)
@click.option("--seed", default=1, show_default=True)
@click.option("--outdir", required=True, type=click.Path())
@_fail_as_stage_error
def cmd_split(graph_path, fraction, seed, outdir):
    """Hold out edges for link prediction, keeping the train graph connected."""
    g = graph_mod.lcc(graph_mod.load_edge_list(graph_path))
    split = graph_mod.split_edges(g, fraction, seed)
    graph_mod.save_split(split, outdir)
    click.echo(
        f"train {split.train_graph.num_edges} edges, "
        f"heldout {len(split.heldout_edges)}, negatives {len(split.negative_edges)}"
    )


@cli.command("sample-walks")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--m", required=True, type=int, help="Number of walks")
@click.option("--k", default=16, show_default=True, help="Walk length")
@click.option("--p", "p_param", default=1.0, show_default=True, help="Return parameter")
@click.option("--q", "q_param", default=1.0, show_default=True, help="In-out parameter")
@click.option("--seed", default=2, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--text-out", type=click.Path(), default=None, help="Also write walks as text")
@_fail_as_stage_error
def cmd_sample_walks(graph_path, m, k, p_param, q_param, seed, workers, out, text_out):
    """Build a second-order random walk corpus."""
    g = graph_mod.load_edge_list(graph_path)
    if not g.is_connected():
        raise click.UsageError("graph must be connected; run `walkgen split` or lcc first")
    corpus = walks_mod.build_corpus(
        g, m=m, k=k, params=walks_mod.SamplerParams(p=p_param, q=q_param), seed=seed, workers=workers
    )
    corpus.save(out)
    if text_out:
        corpus.save_text(text_out)
    click.echo(f"wrote {corpus.m}x{corpus.k} corpus over {corpus.n} nodes to {out}")


@cli.command("train")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--depth", default=1, show_default=True)
@click.option("--width", default=128, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--context-len", default=None, type=int, help="Default: max walk/generation need")
@click.option("--dropout", default=0.0, show_default=True)
@click.option("--lr", default=3e-3, show_default=True)
@click.option("--batch", default=256, show_default=True)
@click.option("--epochs", default=5, show_default=True)
@click.option("--warmup", default=50, show_default=True)
@click.option("--seed", default=3, show_default=True)
@click.option("--gen-len", default=24, show_default=True, help="Longest walk to generate later")
@click.option("--out", required=True, type=click.Path())
@_fail_as_stage_error
def cmd_train(corpus_path, depth, width, heads, context_len, dropout, lr, batch, epochs, warmup, seed, gen_len, out):
    """Train an attention next-node model on a walk corpus."""
    corpus = walks_mod.WalkMatrix.load(_require(corpus_path, "sample-walks"))
    if context_len is None:
        context_len = max(corpus.k - 1, gen_len - 1)
    config = ModelConfig(
        vocab=corpus.n + 1, depth=depth, width=width, heads=heads,
        context_len=context_len, dropout=dropout,
    )
    hyper = TrainParams(lr=lr, batch=batch, epochs=epochs, seed=seed, warmup_steps=warmup)
    model, report = train(corpus, config, hyper)
    save_model(model, out)
    report_path = Path(out).with_suffix(".train.json")
    with open(report_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(
        f"trained depth={depth} ({report.parameter_count} params), "
        f"final CE {report.final_cross_entropy:.4f} nats, report at {report_path}"
    )


@cli.command("build-filter")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--window", default=4, show_default=True, help="Neighborhood size p")
@click.option("--fp-rate", default=0.01, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_fail_as_stage_error
def cmd_build_filter(corpus_path, window, fp_rate, out):
    """Index every p-node training window in a scalable bloom filter."""
    corpus = walks_mod.WalkMatrix.load(_require(corpus_path, "sample-walks"))
    params = BloomParams(
        target_fp_rate=fp_rate, initial_capacity=max(1, corpus.m * (corpus.k - window + 1))
    )
    filt = build_neighborhood_filter(corpus, window, params)
    filt.save(out)
    click.echo(
        f"inserted {filt.total_inserted} windows across {len(filt.stages)} stage(s), "
        f"{filt.serialized_bytes} bytes"
    )


@cli.command("curves")
@click.option("--fast", "fast_path", required=True, type=click.Path())
@click.option("--slow", "slow_path", required=True, type=click.Path())
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--filter", "filter_path", required=True, type=click.Path())
@click.option("--n-walks", default=10000, show_default=True)
@click.option("--len", "length", default=24, show_default=True)
@click.option("--seed", default=5, show_default=True)
@click.option("--out-csv", required=True, type=click.Path())
@click.option("--out-png", type=click.Path(), default=None)
@_fail_as_stage_error
def cmd_curves(fast_path, slow_path, graph_path, filter_path, n_walks, length, seed, out_csv, out_png):
    """Measure per-step exploration of both models against the training filter."""
    g = graph_mod.load_edge_list(graph_path)
    filt = NeighborhoodFilter.load(_require(filter_path, "build-filter"))
    fast = load_model(_require(fast_path, "train"))
    slow = load_model(_require(slow_path, "train"))
    fast_curve = switch_mod.exploration_curve(fast, g, filt, n_walks, length, seed=seed, model_tag="fast")
    slow_curve = switch_mod.exploration_curve(slow, g, filt, n_walks, length, seed=seed, model_tag="slow")
    ent_n = min(n_walks, 2000)
    fast_ent = switch_mod.entropy_curve(fast, ent_n, length, seed=seed)
    slow_ent = switch_mod.entropy_curve(slow, ent_n, length, seed=seed)
    switch_mod.save_curves_csv(out_csv, fast_curve, slow_curve, fast_ent, slow_ent)
    if out_png:
        plots.save_exploration_figure(out_png, fast_curve.ex, slow_curve.ex,
                                      fast_entropy=fast_ent, slow_entropy=slow_ent)
    click.echo(f"wrote curves to {out_csv}")


@cli.command("knee")
@click.option("--curves", "curves_path", type=click.Path(), default=None)
@click.option("--window", default=4, show_default=True, help="Positions below this are excluded")
@click.option("--sensitivity", default=1.0, show_default=True)
@click.option("--fixed", type=int, default=None, help="Bypass measurement with a fixed handover")
@click.option("--out", required=True, type=click.Path())
@_fail_as_stage_error
def cmd_knee(curves_path, window, sensitivity, fixed, out):
    """Pick the handover point from the slow model's exploration knee."""
    if fixed is not None:
        hp = switch_mod.HandoverPoint(j=fixed, method="fixed")
    else:
        if curves_path is None:
            raise click.UsageError("either --curves or --fixed is required")
        data = switch_mod.load_curves_csv(_require(curves_path, "curves"))
        fast_curve = switch_mod.ExplorationCurve(data["ex_fast"], 0, "fast", window)
        slow_curve = switch_mod.ExplorationCurve(data["ex_slow"], 0, "slow", window)
        hp = switch_mod.handover_point(fast_curve, slow_curve, sensitivity=sensitivity)
    with open(out, "w") as fh:
        json.dump({"j": hp.j, "method": hp.method, "source": hp.source}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"handover j={hp.j} ({hp.method})")


@cli.command("generate")
@click.option("--fast", "fast_path", required=True, type=click.Path())
@click.option("--slow", "slow_path", type=click.Path(), default=None)
@click.option("--handover", "handover_path", type=click.Path(), default=None)
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--n-walks", default=20000, show_default=True)
@click.option("--len", "length", default=24, show_default=True)
@click.option("--temperature", default=1.0, show_default=True)
@click.option("--seed", default=6, show_default=True)
@click.option("--batch", default=512, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_fail_as_stage_error
def cmd_generate(fast_path, slow_path, handover_path, graph_path, n_walks, length, temperature, seed, batch, out):
    """Generate walks from one model, or a fast->slow cascade."""
    g = graph_mod.load_edge_list(graph_path)
    model = load_model(_require(fast_path, "train"))
    starts = np.random.default_rng([seed, 2**63]).integers(g.n, size=n_walks)
    t0 = time.perf_counter()
    if slow_path is None:
        corpus = sample_walks(model, starts, length, temperature=temperature, seed=seed, batch_size=batch)
    else:
        slow = load_model(_require(slow_path, "train"))
        if handover_path is None:
            raise click.UsageError("cascade generation needs --handover from `walkgen knee`")
        with open(_require(handover_path, "knee")) as fh:
            j = json.load(fh)["j"]
        corpus = switch_mod.generate_fast_slow(
            model, slow, j, starts, length, seed=seed, temperature=temperature, batch_size=batch
        )
    seconds = time.perf_counter() - t0
    corpus.save(out)
    click.echo(f"generated {n_walks} walks of length {length} in {seconds:.2f}s -> {out}")


@cli.command("assemble")
@click.option("--walks", "walks_path", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["top_e", "bernoulli"]), default="top_e", show_default=True)
@click.option("--target-edges", type=int, default=None)
@click.option("--seed", default=6, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--counts-out", type=click.Path(), default=None, help="Also write 'i j count' triplets")
@click.option("--scores-out", type=click.Path(), default=None, help="Also write 'i j score' triplets")
@_fail_as_stage_error
def cmd_assemble(walks_path, mode, target_edges, seed, out, counts_out, scores_out):
    """Reassemble a graph from generated walks via the count matrix."""
    corpus = walks_mod.WalkMatrix.load(_require(walks_path, "generate"))
    counts = assemble_mod.count_matrix(corpus)
    if mode == "top_e" and target_edges is None:
        raise click.UsageError("--target-edges is required in top_e mode")
    g = assemble_mod.assemble_graph(counts, mode=mode, target_edges=target_edges, seed=seed)
    graph_mod.save_edge_list(g, out)
    if counts_out:
        assemble_mod.save_triplets(counts.matrix, counts_out, fmt="{v:d}")
    if scores_out:
        scores = assemble_mod.symmetrized_scores(assemble_mod.edge_scores(counts))
        assemble_mod.save_triplets(scores, scores_out, fmt="{v:.9g}")
    click.echo(f"assembled {g.num_edges} edges over {g.n} nodes -> {out}")


@cli.command("eval")
@click.option("--walks", "walks_path", required=True, type=click.Path())
@click.option("--split-dir", required=True, type=click.Path())
@click.option("--assembled", "assembled_path", type=click.Path(), default=None,
              help="Edge list for structural metrics (defaults to top_e at the train budget)")
@click.option("--generation-seconds", type=float, default=0.0, show_default=True)
@click.option("--tag", default="run", show_default=True)
@click.option("--out-json", required=True, type=click.Path())
@click.option("--out-csv", type=click.Path(), default=None)
@_fail_as_stage_error
def cmd_eval(walks_path, split_dir, assembled_path, generation_seconds, tag, out_json, out_csv):
    """Link-prediction AUC/AP plus structural metrics of the assembled graph."""
    import csv as csv_mod

    if not (Path(split_dir) / "split.json").is_file():
        raise click.UsageError(f"missing artifact {split_dir}/split.json; produce it with `walkgen split`")
    split = graph_mod.load_split(split_dir)
    corpus = walks_mod.WalkMatrix.load(_require(walks_path, "generate"))
    counts = assemble_mod.count_matrix(corpus)
    scores = assemble_mod.symmetrized_scores(assemble_mod.edge_scores(counts))
    auc_val, ap_val = metrics_mod.link_prediction_eval(scores, split)
    if assembled_path:
        edges = []
        with open(_require(assembled_path, "assemble")) as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    u, v = line.split()
                    edges.append((int(u), int(v)))
        g = graph_mod.Graph(split.train_graph.n, edges)
    else:
        g = assemble_mod.assemble_graph(counts, mode="top_e", target_edges=split.train_graph.num_edges)
    report = metrics_mod.EvalReport(
        auc=auc_val,
        average_precision=ap_val,
        wall_clock_generation_seconds=generation_seconds,
        structural=metrics_mod.structural_report(g),
        tag=tag,
    )
    report.to_json(out_json)
    if out_csv:
        new_file = not Path(out_csv).is_file()
        with open(out_csv, "a", newline="") as fh:
            writer = csv_mod.writer(fh)
            if new_file:
                writer.writerow(metrics_mod.EvalReport.CSV_FIELDS)
            writer.writerow(report.csv_row())
    click.echo(f"{tag}: auc={auc_val:.4f} ap={ap_val:.4f}")


@cli.command("pipeline")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--set", "overrides", multiple=True, help="Override config keys, e.g. --set sampler.m=50000")
@click.option("--workers", type=int, default=None, help="Cap intra-stage parallelism")
def cmd_pipeline(config_path, overrides, workers):
    """Run every stage end to end with a resumable manifest."""
    kv = {}
    for item in overrides:
        if "=" not in item:
            raise click.UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        kv[key.strip()] = value.strip()
    if workers is not None:
        kv["workers"] = workers
    try:
        config = RunConfig.load(config_path, kv)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    try:
        run_pipeline(config, echo=click.echo)
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"manifest at {Path(config['outdir']) / 'manifest.json'}")


def main():
    cli(prog_name="walkgen")


if __name__ == "__main__":
    main()
