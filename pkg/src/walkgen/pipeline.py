"""End-to-end pipeline: sample, train fast/slow, filter, curves, knee,
cascaded generation, assembly, evaluation. Stages are resumable: a stage
reruns only when its config slice or any input artifact changed."""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

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


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# flat config key -> (default, type); a None default marks an optional key
DEFAULTS = {
    "graph": (None, str),
    "outdir": ("run", str),
    "labels": (None, str),
    "workers": (1, int),
    "split.fraction": (0.2, float),
    "split.seed": (1, int),
    "sampler.m": (100000, int),
    "sampler.k": (16, int),
    "sampler.p": (1.0, float),
    "sampler.q": (1.0, float),
    "sampler.seed": (2, int),
    "fast.depth": (1, int),
    "fast.width": (128, int),
    "fast.heads": (4, int),
    "fast.dropout": (0.0, float),
    "fast.lr": (3e-3, float),
    "fast.batch": (256, int),
    "fast.epochs": (5, int),
    "fast.warmup": (50, int),
    "fast.seed": (3, int),
    "slow.depth": (6, int),
    "slow.width": (128, int),
    "slow.heads": (4, int),
    "slow.dropout": (0.0, float),
    "slow.lr": (3e-3, float),
    "slow.batch": (256, int),
    "slow.epochs": (5, int),
    "slow.warmup": (50, int),
    "slow.seed": (4, int),
    "filter.fp_rate": (0.01, float),
    "filter.window": (4, int),
    "switch.n_walks": (10000, int),
    "switch.len": (24, int),
    "switch.sensitivity": (1.0, float),
    "switch.fixed_j": (None, int),
    "switch.seed": (5, int),
    "generation.n_walks": (20000, int),
    "generation.len": (24, int),
    "generation.temperature": (1.0, float),
    "generation.seed": (6, int),
    "generation.batch": (512, int),
    "assembly.mode": ("top_e", str),
    "assembly.target_edges": (None, int),
}


def _coerce(key, raw):
    default, typ = DEFAULTS[key]
    if raw is None or raw == "" or (isinstance(raw, str) and raw.lower() == "none"):
        return None if default is None else default
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return str(raw)


class RunConfig:
    """Flat key-value configuration; precedence overrides > file > defaults."""

    def __init__(self, values):
        self.values = values

    @classmethod
    def load(cls, path=None, overrides=None):
        values = {k: d for k, (d, _) in DEFAULTS.items()}
        if path is not None:
            for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = (part.strip() for part in stripped.split("=", 1))
                if key not in DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _coerce(key, raw)
        for key, raw in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw)
        cfg = cls(values)
        cfg.validate()
        return cfg

    def validate(self):
        v = self.values
        if not v["graph"]:
            raise ConfigError("config key 'graph' (edge-list path) is required")
        if not 0 < v["split.fraction"] < 1:
            raise ConfigError("split.fraction must be in (0,1)")
        if v["sampler.k"] < 2:
            raise ConfigError("sampler.k must be >= 2")
        if v["sampler.m"] < 1 or v["generation.n_walks"] < 1 or v["switch.n_walks"] < 1:
            raise ConfigError("walk counts must be positive")
        if v["filter.window"] > v["sampler.k"]:
            raise ConfigError("filter.window cannot exceed sampler.k")
        if v["switch.len"] < v["filter.window"] or v["generation.len"] < 2:
            raise ConfigError("generation/switch lengths too short")
        fixed = v["switch.fixed_j"]
        if fixed is not None and not 0 < fixed < v["generation.len"]:
            raise ConfigError("switch.fixed_j must satisfy 0 < j < generation.len")
        if v["assembly.mode"] not in ("top_e", "bernoulli"):
            raise ConfigError("assembly.mode must be top_e or bernoulli")
        for role in ("fast", "slow"):
            if v[f"{role}.width"] % v[f"{role}.heads"] != 0:
                raise ConfigError(f"{role}.width must be divisible by {role}.heads")

    def subset(self, prefix):
        return {k: v for k, v in self.values.items() if k == prefix or k.startswith(prefix + ".")}

    def __getitem__(self, key):
        return self.values[key]


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _fingerprint(config_slice, input_hashes):
    payload = json.dumps({"config": config_slice, "inputs": input_hashes}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def write_json_atomic(path, payload):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


class Pipeline:
    def __init__(self, config, echo=print):
        self.config = config
        self.outdir = Path(config["outdir"])
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.echo = echo
        self.stages = []
        self.previous = self._load_previous()
        self.handover = None
        self.reports = {}

    def _load_previous(self):
        manifest = self.outdir / "manifest.json"
        if manifest.is_file():
            try:
                with open(manifest) as fh:
                    return {s["name"]: s for s in json.load(fh).get("stages", [])}
            except (json.JSONDecodeError, KeyError):
                return {}
        return {}

    def path(self, name):
        return self.outdir / name

    def _run_stage(self, name, config_keys, inputs, outputs, fn):
        config_slice = {}
        for key in config_keys:
            config_slice.update(self.config.subset(key))
        input_hashes = {str(p): file_sha256(p) for p in inputs}
        fp = _fingerprint(config_slice, input_hashes)

        prev = self.previous.get(name)
        out_paths = [self.path(o) for o in outputs]
        if prev and prev.get("fingerprint") == fp and all(p.is_file() for p in out_paths):
            record = {
                "name": name,
                "fingerprint": fp,
                "outputs": {o: file_sha256(self.path(o)) for o in outputs},
                "seconds": prev.get("seconds", 0.0),
                "skipped": True,
            }
            self.stages.append(record)
            self.echo(f"[skip] {name}")
            return record
        self.echo(f"[run ] {name}")
        t0 = time.perf_counter()
        try:
            fn()
        except Exception as exc:
            raise StageError(name, exc) from exc
        seconds = time.perf_counter() - t0
        record = {
            "name": name,
            "fingerprint": fp,
            "outputs": {o: file_sha256(self.path(o)) for o in outputs},
            "seconds": round(seconds, 3),
            "skipped": False,
        }
        self.stages.append(record)
        return record

    # ---- stages ----

    def run(self):
        cfg = self.config
        graph_path = Path(cfg["graph"])
        if not graph_path.is_file():
            raise ConfigError(f"graph edge list not found: {graph_path}")

        self._run_stage(
            "graph",
            ["graph", "labels"],
            [graph_path],
            ["graph.edges", "nodes.map"],
            lambda: self._stage_graph(graph_path),
        )
        self._run_stage(
            "split",
            ["split"],
            [self.path("graph.edges")],
            ["split/train.edges", "split/heldout.edges", "split/negative.edges", "split/split.json"],
            self._stage_split,
        )
        self._run_stage(
            "corpus",
            ["sampler"],
            [self.path("split/train.edges")],
            ["corpus.wlk"],
            self._stage_corpus,
        )
        for role in ("fast", "slow"):
            self._run_stage(
                f"train_{role}",
                [role, "sampler", "generation.len"],
                [self.path("corpus.wlk")],
                [f"{role}.ckpt", f"{role}_train.json"],
                lambda role=role: self._stage_train(role),
            )
        self._run_stage(
            "filter",
            ["filter"],
            [self.path("corpus.wlk")],
            ["filter.bloom"],
            self._stage_filter,
        )
        self._run_stage(
            "curves",
            ["switch.n_walks", "switch.len", "switch.seed", "filter.window"],
            [self.path("fast.ckpt"), self.path("slow.ckpt"), self.path("filter.bloom")],
            ["curves.csv", "curves.png"],
            self._stage_curves,
        )
        self._run_stage(
            "knee",
            ["switch"],
            [self.path("curves.csv")],
            ["handover.json"],
            self._stage_knee,
        )
        with open(self.path("handover.json")) as fh:
            handover = json.load(fh)
        self.handover = handover

        self._run_stage(
            "generate",
            ["generation", "switch.fixed_j"],
            [self.path("fast.ckpt"), self.path("slow.ckpt"), self.path("handover.json")],
            ["gen_fast.wlk", "gen_slow.wlk", "gen_cascade.wlk", "gen_times.json"],
            self._stage_generate,
        )
        self._run_stage(
            "assemble",
            ["assembly"],
            [self.path("gen_fast.wlk"), self.path("gen_slow.wlk"), self.path("gen_cascade.wlk"), self.path("split/split.json")],
            ["gen_fast.edges", "gen_slow.edges", "gen_cascade.edges"],
            self._stage_assemble,
        )
        self._run_stage(
            "eval",
            ["assembly", "labels"],
            [
                self.path("gen_fast.wlk"),
                self.path("gen_slow.wlk"),
                self.path("gen_cascade.wlk"),
                self.path("gen_fast.edges"),
                self.path("gen_slow.edges"),
                self.path("gen_cascade.edges"),
                self.path("gen_times.json"),
                self.path("split/heldout.edges"),
                self.path("split/negative.edges"),
            ],
            ["eval_fast.json", "eval_slow.json", "eval_cascade.json", "eval.csv", "tradeoff.png"],
            self._stage_eval,
        )
        return self.write_manifest()

    def _stage_graph(self, graph_path):
        report = {}
        g = graph_mod.lcc(graph_mod.load_edge_list(graph_path, report=report))
        graph_mod.save_edge_list(g, self.path("graph.edges"))
        graph_mod.save_id_map(g, self.path("nodes.map"))
        if report.get("dropped_self_loops") or report.get("dropped_duplicates"):
            self.echo(f"  dropped {report['dropped_self_loops']} self-loops, "
                      f"{report['dropped_duplicates']} duplicates")

    def _graph(self):
        return graph_mod.load_edge_list(self.path("graph.edges"))

    def _stage_split(self):
        g = self._graph()
        split = graph_mod.split_edges(g, self.config["split.fraction"], self.config["split.seed"])
        graph_mod.save_split(split, self.path("split"))

    def _stage_corpus(self):
        split = graph_mod.load_split(self.path("split"))
        params = walks_mod.SamplerParams(p=self.config["sampler.p"], q=self.config["sampler.q"])
        corpus = walks_mod.build_corpus(
            split.train_graph,
            m=self.config["sampler.m"],
            k=self.config["sampler.k"],
            params=params,
            seed=self.config["sampler.seed"],
            workers=self.config["workers"],
        )
        corpus.save(self.path("corpus.wlk"))

    def _stage_train(self, role):
        cfg = self.config
        corpus = walks_mod.WalkMatrix.load(self.path("corpus.wlk"))
        context_len = max(cfg["sampler.k"] - 1, cfg["generation.len"] - 1, cfg["switch.len"] - 1)
        model_config = ModelConfig(
            vocab=corpus.n + 1,
            depth=cfg[f"{role}.depth"],
            width=cfg[f"{role}.width"],
            heads=cfg[f"{role}.heads"],
            context_len=context_len,
            dropout=cfg[f"{role}.dropout"],
        )
        hyper = TrainParams(
            lr=cfg[f"{role}.lr"],
            batch=cfg[f"{role}.batch"],
            epochs=cfg[f"{role}.epochs"],
            seed=cfg[f"{role}.seed"],
            warmup_steps=cfg[f"{role}.warmup"],
        )
        model, report = train(corpus, model_config, hyper)
        save_model(model, self.path(f"{role}.ckpt"))
        write_json_atomic(self.path(f"{role}_train.json"), report.to_dict())
        self.echo(f"  {role}: {report.parameter_count} params, "
                  f"final CE {report.final_cross_entropy:.4f} nats")

    def _stage_filter(self):
        corpus = walks_mod.WalkMatrix.load(self.path("corpus.wlk"))
        window = self.config["filter.window"]
        params = BloomParams(
            target_fp_rate=self.config["filter.fp_rate"],
            initial_capacity=max(1, corpus.m * (corpus.k - window + 1)),
        )
        filt = build_neighborhood_filter(corpus, window, params)
        filt.save(self.path("filter.bloom"))

    def _stage_curves(self):
        cfg = self.config
        split = graph_mod.load_split(self.path("split"))
        filt = NeighborhoodFilter.load(self.path("filter.bloom"))
        curves = {}
        entropies = {}
        for role in ("fast", "slow"):
            model = load_model(self.path(f"{role}.ckpt"))
            curves[role] = switch_mod.exploration_curve(
                model,
                split.train_graph,
                filt,
                n_walks=cfg["switch.n_walks"],
                l=cfg["switch.len"],
                seed=cfg["switch.seed"],
                batch_size=cfg["generation.batch"],
                model_tag=role,
            )
            entropies[role] = switch_mod.entropy_curve(
                model,
                n_walks=min(cfg["switch.n_walks"], 2000),
                l=cfg["switch.len"],
                seed=cfg["switch.seed"],
                batch_size=cfg["generation.batch"],
            )
        switch_mod.save_curves_csv(
            self.path("curves.csv"), curves["fast"], curves["slow"], entropies["fast"], entropies["slow"]
        )
        plots.save_exploration_figure(
            self.path("curves.png"),
            curves["fast"].ex,
            curves["slow"].ex,
            fast_entropy=entropies["fast"],
            slow_entropy=entropies["slow"],
        )

    def _stage_knee(self):
        cfg = self.config
        fixed = cfg["switch.fixed_j"]
        if fixed is not None:
            hp = switch_mod.HandoverPoint(j=fixed, method="fixed")
        else:
            data = switch_mod.load_curves_csv(self.path("curves.csv"))
            fast_curve = switch_mod.ExplorationCurve(
                data["ex_fast"], cfg["switch.n_walks"], "fast", cfg["filter.window"]
            )
            slow_curve = switch_mod.ExplorationCurve(
                data["ex_slow"], cfg["switch.n_walks"], "slow", cfg["filter.window"]
            )
            hp = switch_mod.handover_point(fast_curve, slow_curve, sensitivity=cfg["switch.sensitivity"])
            if not 0 < hp.j < cfg["generation.len"]:
                hp = switch_mod.HandoverPoint(
                    j=min(max(hp.j, 1), cfg["generation.len"] - 1), method=hp.method, source=hp.source
                )
        write_json_atomic(self.path("handover.json"), {"j": hp.j, "method": hp.method, "source": hp.source})
        self.echo(f"  handover j={hp.j} ({hp.method})")

    def _stage_generate(self):
        cfg = self.config
        fast = load_model(self.path("fast.ckpt"))
        slow = load_model(self.path("slow.ckpt"))
        with open(self.path("handover.json")) as fh:
            j = json.load(fh)["j"]
        split = graph_mod.load_split(self.path("split"))
        n_walks, l = cfg["generation.n_walks"], cfg["generation.len"]
        starts = np.random.default_rng([cfg["generation.seed"], 2**63]).integers(
            split.train_graph.n, size=n_walks
        )
        times = {}

        def timed(tag, fn):
            t0 = time.perf_counter()
            out = fn()
            times[tag] = round(time.perf_counter() - t0, 3)
            return out

        common = dict(seed=cfg["generation.seed"], temperature=cfg["generation.temperature"],
                      batch_size=cfg["generation.batch"])
        timed("fast", lambda: sample_walks(fast, starts, l, **common)).save(self.path("gen_fast.wlk"))
        timed("slow", lambda: sample_walks(slow, starts, l, **common)).save(self.path("gen_slow.wlk"))
        timed(
            "cascade",
            lambda: switch_mod.generate_fast_slow(fast, slow, j, starts, l, **common),
        ).save(self.path("gen_cascade.wlk"))
        write_json_atomic(self.path("gen_times.json"), times)
        self.echo("  generation seconds: " + ", ".join(f"{k}={v}" for k, v in times.items()))

    def _stage_assemble(self):
        cfg = self.config
        split = graph_mod.load_split(self.path("split"))
        target = cfg["assembly.target_edges"] or split.train_graph.num_edges
        for tag in ("fast", "slow", "cascade"):
            corpus = walks_mod.WalkMatrix.load(self.path(f"gen_{tag}.wlk"))
            counts = assemble_mod.count_matrix(corpus)
            mode = cfg["assembly.mode"]
            g = assemble_mod.assemble_graph(
                counts,
                mode=mode,
                target_edges=target if mode == "top_e" else None,
                seed=cfg["generation.seed"],
            )
            graph_mod.save_edge_list(g, self.path(f"gen_{tag}.edges"))

    def _stage_eval(self):
        import csv as csv_mod

        split = graph_mod.load_split(self.path("split"))
        with open(self.path("gen_times.json")) as fh:
            times = json.load(fh)
        labels = self._load_labels()
        rows = []
        self.reports = {}
        for tag in ("fast", "slow", "cascade"):
            corpus = walks_mod.WalkMatrix.load(self.path(f"gen_{tag}.wlk"))
            counts = assemble_mod.count_matrix(corpus)
            scores = assemble_mod.symmetrized_scores(assemble_mod.edge_scores(counts))
            auc_val, ap_val = metrics_mod.link_prediction_eval(scores, split)
            assembled = _read_graph_with_n(self.path(f"gen_{tag}.edges"), split.train_graph.n)
            structural = metrics_mod.structural_report(assembled, communities=labels)
            report = metrics_mod.EvalReport(
                auc=auc_val,
                average_precision=ap_val,
                wall_clock_generation_seconds=times[tag],
                structural=structural,
                tag=tag,
            )
            report.to_json(self.path(f"eval_{tag}.json"))
            self.reports[tag] = report
            rows.append(report)
            self.echo(f"  {tag}: auc={auc_val:.4f} ap={ap_val:.4f} gen={times[tag]}s")
        with open(self.path("eval.csv"), "w", newline="") as fh:
            writer = csv_mod.writer(fh)
            writer.writerow(metrics_mod.EvalReport.CSV_FIELDS)
            for report in rows:
                writer.writerow(report.csv_row())
        plots.save_tradeoff_figure(self.path("tradeoff.png"), rows)

    def _load_labels(self):
        """Community labels keyed by original node label, translated to the
        pipeline's compact LCC ids via nodes.map."""
        labels_path = self.config["labels"]
        if not labels_path:
            return None
        raw = {}
        with open(labels_path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                node, community = line.split()
                raw[node] = int(community)
        labels = {}
        with open(self.path("nodes.map")) as fh:
            for line in fh:
                compact, original = line.split()
                if original in raw:
                    labels[int(compact)] = raw[original]
        return labels or None

    def write_manifest(self, error=None):
        reports = {tag: r.to_dict() for tag, r in self.reports.items()}
        if not reports:
            # eval stage may have been skipped; recover the persisted triplet
            for tag in ("fast", "slow", "cascade"):
                path = self.path(f"eval_{tag}.json")
                if path.is_file():
                    with open(path) as fh:
                        reports[tag] = json.load(fh)
        payload = {
            "config": dict(self.config.values),
            "stages": self.stages,
            "handover": self.handover,
            "reports": reports,
        }
        if error is not None:
            payload["error"] = error
        write_json_atomic(self.path("manifest.json"), payload)
        return payload


def _read_graph_with_n(path, n):
    """Edge list over an already-compact id universe of size n (no re-compaction)."""
    edges = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            u, v = line.split()
            edges.append((int(u), int(v)))
    return graph_mod.Graph(n, edges)


def run_pipeline(config, echo=print):
    pipeline = Pipeline(config, echo=echo)
    try:
        return pipeline.run()
    except StageError as exc:
        pipeline.write_manifest(error={"stage": exc.stage, "message": str(exc.cause)})
        raise
