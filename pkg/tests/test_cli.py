import json

import numpy as np
import pytest
from click.testing import CliRunner

from walkgen.cli import cli
from walkgen.pipeline import ConfigError, RunConfig
from walkgen.walks import WalkMatrix


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def sbm_files(tmp_path, runner):
    edges = tmp_path / "g.edges"
    labels = tmp_path / "g.labels"
    result = runner.invoke(cli, [
        "make-sbm", "--communities", "3", "--size", "15", "--p-in", "0.4",
        "--p-out", "0.03", "--seed", "3", "--out", str(edges), "--labels-out", str(labels),
    ])
    assert result.exit_code == 0, result.output
    return edges, labels


def _option_default(command_name, option_name):
    command = cli.commands[command_name]
    for param in command.params:
        if param.name == option_name:
            return param.default
    raise KeyError(option_name)


class TestDefaults:
    def test_paper_anchored_flag_defaults(self):
        assert _option_default("sample-walks", "k") == 16
        assert _option_default("sample-walks", "p_param") == 1.0
        assert _option_default("sample-walks", "q_param") == 1.0
        assert _option_default("curves", "n_walks") == 10000
        assert _option_default("curves", "length") == 24
        assert _option_default("build-filter", "window") == 4
        assert _option_default("build-filter", "fp_rate") == 0.01
        assert _option_default("knee", "sensitivity") == 1.0
        assert _option_default("split", "fraction") == 0.2


class TestKneeCommand:
    def test_fixed_override(self, tmp_path, runner):
        out = tmp_path / "handover.json"
        result = runner.invoke(cli, ["knee", "--fixed", "13", "--out", str(out)])
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload == {"j": 13, "method": "fixed", "source": ""}

    def test_missing_curves_artifact_names_producer(self, tmp_path, runner):
        result = runner.invoke(cli, [
            "knee", "--curves", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "h.json"),
        ])
        assert result.exit_code == 2
        assert "walkgen curves" in result.output

    def test_requires_curves_or_fixed(self, tmp_path, runner):
        result = runner.invoke(cli, ["knee", "--out", str(tmp_path / "h.json")])
        assert result.exit_code == 2


class TestArtifactErrors:
    def test_train_names_sample_walks(self, tmp_path, runner):
        result = runner.invoke(cli, [
            "train", "--corpus", str(tmp_path / "missing.wlk"), "--out", str(tmp_path / "m.ckpt"),
        ])
        assert result.exit_code == 2
        assert "walkgen sample-walks" in result.output

    def test_generate_names_train(self, tmp_path, sbm_files, runner):
        edges, _ = sbm_files
        result = runner.invoke(cli, [
            "generate", "--fast", str(tmp_path / "missing.ckpt"), "--graph", str(edges),
            "--n-walks", "5", "--out", str(tmp_path / "g.wlk"),
        ])
        assert result.exit_code == 2
        assert "walkgen train" in result.output


class TestSampleWalks:
    def test_writes_corpus(self, tmp_path, sbm_files, runner):
        edges, _ = sbm_files
        out = tmp_path / "c.wlk"
        text = tmp_path / "c.txt"
        result = runner.invoke(cli, [
            "sample-walks", "--graph", str(edges), "--m", "50", "--k", "8",
            "--seed", "1", "--out", str(out), "--text-out", str(text),
        ])
        assert result.exit_code == 0, result.output
        corpus = WalkMatrix.load(out)
        assert corpus.walks.shape == (50, 8)
        assert len(text.read_text().splitlines()) == 50


class TestRunConfig:
    def test_defaults_and_overrides(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("graph = g.edges\nsampler.m = 1234\n# comment\n")
        cfg = RunConfig.load(cfg_file, {"sampler.k": "8"})
        assert cfg["graph"] == "g.edges"
        assert cfg["sampler.m"] == 1234
        assert cfg["sampler.k"] == 8
        assert cfg["split.fraction"] == 0.2

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("graph = g.edges\nsampler.mm = 5\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig.load(cfg_file)

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig.load(None, {"graph": "g", "nope": "1"})

    def test_missing_graph_rejected(self):
        with pytest.raises(ConfigError, match="graph"):
            RunConfig.load(None, {})

    def test_invalid_fraction_rejected(self):
        with pytest.raises(ConfigError, match="fraction"):
            RunConfig.load(None, {"graph": "g", "split.fraction": "1.5"})

    def test_flags_beat_file(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("graph = g.edges\nsampler.m = 10\n")
        cfg = RunConfig.load(cfg_file, {"sampler.m": "99"})
        assert cfg["sampler.m"] == 99


class TestPipelineCommand:
    def test_config_error_exit_code_2(self, runner, tmp_path):
        result = runner.invoke(cli, ["pipeline", "--set", "unknown.key=1"])
        assert result.exit_code == 2
        assert "config error" in result.output

    def test_stage_failure_exit_code_3(self, runner, tmp_path):
        # graph file exists but is empty -> graph stage fails
        bad = tmp_path / "empty.edges"
        bad.write_text("# no edges\n")
        result = runner.invoke(cli, [
            "pipeline", "--set", f"graph={bad}", "--set", f"outdir={tmp_path/'run'}",
        ])
        assert result.exit_code == 3
        assert "graph" in result.output
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["error"]["stage"] == "graph"

    @pytest.mark.slow
    def test_tiny_end_to_end_and_resume(self, runner, tmp_path, sbm_files):
        edges, labels = sbm_files
        outdir = tmp_path / "run"
        args = [
            "pipeline",
            "--set", f"graph={edges}",
            "--set", f"labels={labels}",
            "--set", f"outdir={outdir}",
            "--set", "sampler.m=1500",
            "--set", "sampler.k=8",
            "--set", "fast.width=32", "--set", "fast.epochs=1",
            "--set", "slow.width=32", "--set", "slow.depth=2", "--set", "slow.epochs=1",
            "--set", "switch.n_walks=300", "--set", "switch.len=10",
            "--set", "generation.n_walks=1000", "--set", "generation.len=10",
            "--set", "generation.batch=256",
        ]
        first = runner.invoke(cli, args)
        assert first.exit_code == 0, first.output
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert set(manifest["reports"]) == {"fast", "slow", "cascade"}
        assert (outdir / "curves.csv").is_file()
        assert (outdir / "curves.png").is_file()
        assert (outdir / "tradeoff.png").is_file()
        assert (outdir / "eval.csv").is_file()
        for stage in manifest["stages"]:
            assert not stage["skipped"]
        hashes = {name: h for s in manifest["stages"] for name, h in s["outputs"].items()}

        second = runner.invoke(cli, args)
        assert second.exit_code == 0, second.output
        manifest2 = json.loads((outdir / "manifest.json").read_text())
        assert all(s["skipped"] for s in manifest2["stages"])
        hashes2 = {name: h for s in manifest2["stages"] for name, h in s["outputs"].items()}
        assert hashes2 == hashes
        assert manifest2["reports"] == manifest["reports"]

        # changing one upstream knob reruns from that stage onward
        third = runner.invoke(cli, args[:-2] + ["--set", "generation.batch=128"])
        assert third.exit_code == 0, third.output
        manifest3 = json.loads((outdir / "manifest.json").read_text())
        by_name = {s["name"]: s for s in manifest3["stages"]}
        assert by_name["corpus"]["skipped"]
        assert not by_name["generate"]["skipped"]
