import json
from pathlib import Path

import pytest
import yaml

from fewie_bench import cli, synthetic
from fewie_bench.corpus import serialize_conll
from fewie_bench.encoders import EncoderConfig
from fewie_bench.errors import ConfigError, FewieBenchError
from fewie_bench.harness import (
    ExperimentConfig,
    RunManifest,
    _format_cell,
    config_from_dict,
    emit_table,
    load_config,
    run_experiment,
)


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "syn.conll"
    corpus = synthetic.balanced_corpus(n_classes=5, sentences_per_class=10,
                                       sentence_length=4)
    path.write_text(serialize_conll(corpus), encoding="utf-8")
    return path


def small_config(corpus_file, out_dir, **overrides):
    base = dict(
        corpus_path=corpus_file,
        output_dir=out_dir,
        scenarios=((5, 1, 1),),
        n_episodes=25,
        seed=9,
        encoder=EncoderConfig("random", dim=32, seed=1),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def scrubbed_manifest(run_dir):
    data = json.loads((run_dir / "run_manifest.json").read_text())
    data.pop("created_at")
    return data


class TestConfigLoading:
    def test_yaml_round_trip(self, corpus_file, tmp_path):
        config_path = tmp_path / "cfg.yaml"
        config_path.write_text(yaml.safe_dump({
            "corpus": {"path": str(corpus_file), "format": "conll"},
            "sampling": {"scenarios": [{"n_ways": 5, "k_shots": 1}],
                         "n_episodes": 10, "seed": 3},
            "encoder": {"kind": "random", "dim": 16, "seed": 2, "label": "rand16"},
            "readout": {"kind": "nc"},
            "output_dir": str(tmp_path / "out"),
        }))
        config = load_config(config_path)
        assert config.scenarios == ((5, 1, 1),)
        assert config.readout_kind == "nc"
        assert config.resolved_encoder_label == "rand16"

    def test_defaults_match_standard_protocol(self, corpus_file, tmp_path):
        config = config_from_dict({
            "corpus": {"path": str(corpus_file)},
            "output_dir": str(tmp_path / "out"),
        })
        assert config.scenarios == ((5, 1, 1), (5, 5, 1), (5, 10, 1))
        assert config.n_episodes == 600
        assert config.readout_kind == "lr"
        assert config.l2_lambda == 1.0

    def test_relative_paths_resolve_against_config_dir(self, corpus_file, tmp_path):
        config_path = tmp_path / "cfg.yaml"
        (tmp_path / "corpus.conll").write_text(corpus_file.read_text())
        config_path.write_text(yaml.safe_dump({
            "corpus": {"path": "corpus.conll"},
            "output_dir": "out",
        }))
        config = load_config(config_path)
        assert config.corpus_path == tmp_path / "corpus.conll"
        assert config.output_dir == tmp_path / "out"

    def test_unknown_keys_rejected(self, corpus_file, tmp_path):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_dict({
                "corpus": {"path": str(corpus_file)},
                "output_dir": str(tmp_path),
                "optimizer": {"name": "sgd"},
            })

    def test_missing_corpus_path_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="corpus.path"):
            config_from_dict({"output_dir": str(tmp_path)})

    def test_empty_scenarios_rejected(self, corpus_file, tmp_path):
        with pytest.raises(ConfigError, match="scenarios"):
            config_from_dict({
                "corpus": {"path": str(corpus_file)},
                "output_dir": str(tmp_path),
                "sampling": {"scenarios": []},
            })


class TestRunExperiment:
    def test_artifacts_written(self, corpus_file, tmp_path):
        manifest = run_experiment(small_config(corpus_file, tmp_path / "run"))
        scenario = manifest.scenarios[0]
        assert scenario.n_episodes == 25
        assert 0.0 <= scenario.mean_f1 <= 1.0
        run_dir = tmp_path / "run"
        assert (run_dir / scenario.episodes_path).is_file()
        assert (run_dir / scenario.scores_path).is_file()
        assert (run_dir / scenario.predictions_path).is_file()
        scores = manifest.load_scores(scenario)
        assert len(scores) == 25

    def test_reruns_are_byte_identical(self, corpus_file, tmp_path):
        config_a = small_config(corpus_file, tmp_path / "a")
        config_b = small_config(corpus_file, tmp_path / "b")
        run_experiment(config_a)
        run_experiment(config_b)
        for name in ("n5_k1_q1/episodes.jsonl", "n5_k1_q1/scores.jsonl",
                     "n5_k1_q1/predictions.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        a = scrubbed_manifest(tmp_path / "a")
        b = scrubbed_manifest(tmp_path / "b")
        a["config"]["output_dir"] = b["config"]["output_dir"] = "X"
        assert a == b

    def test_failing_scenario_recorded_and_others_continue(self, corpus_file, tmp_path):
        config = small_config(corpus_file, tmp_path / "run",
                              scenarios=((5, 1, 1), (5, 50, 1)))
        manifest = run_experiment(config)
        assert len(manifest.scenarios) == 1
        assert len(manifest.errors) == 1
        assert manifest.errors[0]["scenario"] == [5, 50, 1]
        assert manifest.errors[0]["infeasible"] is True

    def test_contrastive_path_runs(self, corpus_file, tmp_path):
        from fewie_bench.contrastive import ContrastiveConfig

        config = small_config(corpus_file, tmp_path / "run",
                              contrastive=ContrastiveConfig(pair_seed=4), n_episodes=8)
        manifest = run_experiment(config)
        episodes = (tmp_path / "run" / "n5_k1_q1/episodes.jsonl").read_text().splitlines()
        first = json.loads(episodes[0])
        assert len(first["extra_support"]) == 5  # one extra shot per class at K=1
        assert manifest.scenarios[0].n_episodes == 8


class TestFormatCell:
    def test_reference_cells(self):
        assert _format_cell(0.6611) == "66.11"
        assert _format_cell(0.7276) == "72.76"

    def test_half_up(self):
        assert _format_cell(0.06125) == "6.13"

    def test_extremes(self):
        assert _format_cell(0.0) == "0.00"
        assert _format_cell(1.0) == "100.00"


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("table")
    corpus = synthetic.balanced_corpus(n_classes=5, sentences_per_class=12,
                                       sentence_length=4)
    corpus_path = tmp / "syn.conll"
    corpus_path.write_text(serialize_conll(corpus), encoding="utf-8")
    store_path = tmp / "clustered.bin"
    synthetic.write_clustered_store(corpus, store_path, dim=8, noise_scale=0.1, seed=5)

    strong = ExperimentConfig(
        corpus_path=corpus_path, output_dir=tmp / "strong",
        scenarios=((5, 1, 1),), n_episodes=40, seed=2,
        encoder=EncoderConfig("store", store_path=store_path),
        encoder_label="clustered",
    )
    weak = ExperimentConfig(
        corpus_path=corpus_path, output_dir=tmp / "weak",
        scenarios=((5, 1, 1),), n_episodes=40, seed=2,
        encoder=EncoderConfig("random", dim=16, seed=3),
        encoder_label="random",
    )
    return run_experiment(strong), run_experiment(weak)


class TestEmitTable:
    def test_best_is_bolded_with_dagger(self, two_runs):
        csv_text, md_text = emit_table(list(two_runs))
        assert csv_text.splitlines()[0] == (
            "dataset,n_ways,k_shots,k_query,clustered,random,best,significant")
        assert ",clustered,true" in csv_text.splitlines()[1]
        assert "**" in md_text and "†" in md_text

    def test_exact_tie_bolds_first_without_dagger(self, two_runs):
        import copy

        strong, _ = two_runs
        twin = copy.deepcopy(strong)
        twin.encoder_label = "clustered-twin"
        csv_text, md_text = emit_table([strong, twin])
        assert ",clustered,false" in csv_text.splitlines()[1]
        assert "†" not in md_text

    def test_mismatched_scenarios_rejected(self, two_runs, corpus_file, tmp_path):
        strong, _ = two_runs
        other = run_experiment(small_config(corpus_file, tmp_path / "other",
                                            scenarios=((5, 2, 1),), n_episodes=5))
        with pytest.raises(FewieBenchError, match="scenario"):
            emit_table([strong, other])

    def test_different_episode_manifests_rejected(self, two_runs, tmp_path):
        strong, weak = two_runs
        reseeded = ExperimentConfig(
            corpus_path=Path(strong.config["corpus"]["path"]),
            output_dir=tmp_path / "reseeded",
            scenarios=((5, 1, 1),), n_episodes=40, seed=777,
            encoder=EncoderConfig("random", dim=16, seed=3),
            encoder_label="reseeded",
        )
        manifest = run_experiment(reseeded)
        with pytest.raises(FewieBenchError, match="different episodes"):
            emit_table([strong, manifest])


class TestCli:
    def test_sample_twice_is_byte_identical(self, corpus_file, tmp_path, capsys):
        out_a = tmp_path / "a.jsonl"
        out_b = tmp_path / "b.jsonl"
        base = [str(corpus_file), "--n", "5", "--k", "1", "--episodes", "20",
                "--seed", "11"]
        assert cli.main(["sample", *base, "--out", str(out_a)]) == 0
        assert cli.main(["sample", *base, "--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_validate_clean_manifest(self, corpus_file, tmp_path, capsys):
        manifest = tmp_path / "episodes.jsonl"
        cli.main(["sample", str(corpus_file), "--n", "5", "--k", "1",
                  "--episodes", "10", "--seed", "1", "--out", str(manifest)])
        assert cli.main(["validate", str(corpus_file), str(manifest)]) == 0
        assert "10 episode(s) valid" in capsys.readouterr().out

    def test_validate_detects_tampering(self, corpus_file, tmp_path, capsys):
        manifest = tmp_path / "episodes.jsonl"
        cli.main(["sample", str(corpus_file), "--n", "5", "--k", "1",
                  "--episodes", "5", "--seed", "1", "--out", str(manifest)])
        lines = manifest.read_text().splitlines()
        record = json.loads(lines[0])
        record["query"][0] = dict(record["support"][0])  # support/query overlap
        lines[0] = json.dumps(record)
        manifest.write_text("\n".join(lines) + "\n")
        assert cli.main(["validate", str(corpus_file), str(manifest)]) == 2
        assert "both support and query" in capsys.readouterr().out

    def test_run_and_table(self, corpus_file, tmp_path, capsys):
        config_path = tmp_path / "cfg.yaml"
        config_path.write_text(yaml.safe_dump({
            "corpus": {"path": str(corpus_file)},
            "sampling": {"scenarios": [[5, 1, 1]], "n_episodes": 10, "seed": 4},
            "encoder": {"kind": "random", "dim": 16, "seed": 0},
            "output_dir": str(tmp_path / "run"),
        }))
        assert cli.main(["run", str(config_path)]) == 0
        assert cli.main(["table", str(tmp_path / "run"),
                         "--out-dir", str(tmp_path / "tables")]) == 0
        assert (tmp_path / "tables" / "results.csv").is_file()
        assert (tmp_path / "tables" / "results.md").is_file()

    def test_run_override_flags(self, corpus_file, tmp_path):
        config_path = tmp_path / "cfg.yaml"
        config_path.write_text(yaml.safe_dump({
            "corpus": {"path": str(corpus_file)},
            "sampling": {"scenarios": [[5, 1, 1]], "n_episodes": 50, "seed": 4},
            "encoder": {"kind": "random", "dim": 16, "seed": 0},
            "output_dir": str(tmp_path / "run"),
        }))
        assert cli.main(["run", str(config_path), "--n-episodes", "5",
                         "--readout", "nn",
                         "--output-dir", str(tmp_path / "other")]) == 0
        manifest = RunManifest.load(tmp_path / "other")
        assert manifest.readout_kind == "nn"
        assert manifest.scenarios[0].n_episodes == 5

    def test_infeasible_run_exits_3(self, corpus_file, tmp_path):
        config_path = tmp_path / "cfg.yaml"
        config_path.write_text(yaml.safe_dump({
            "corpus": {"path": str(corpus_file)},
            "sampling": {"scenarios": [[5, 99, 1]], "n_episodes": 5, "seed": 4},
            "encoder": {"kind": "random", "dim": 8, "seed": 0},
            "output_dir": str(tmp_path / "run"),
        }))
        assert cli.main(["run", str(config_path)]) == 3

    def test_unknown_flag_exits_1(self, capsys):
        assert cli.main(["run", "cfg.yaml", "--frobnicate"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_missing_corpus_exits_2(self, tmp_path):
        assert cli.main(["validate", str(tmp_path / "nope.conll"),
                         str(tmp_path / "nope.jsonl")]) == 2
