"""Config-driven experiment runner.

Wires corpus -> sampler -> encoder -> (optional contrastive head) -> readout
-> metrics, persists every artifact needed to reproduce or re-score a run:

    <output_dir>/
        run_manifest.json           resolved config + aggregate results
        n5_k1_q1/episodes.jsonl     episode manifest (sampler format)
        n5_k1_q1/scores.jsonl       {"episode_index", "f1", "tp", "fp", "fn"}
        n5_k1_q1/predictions.jsonl  per-token gold and predicted class indices

Everything except the run manifest's ``created_at`` stamp is a deterministic
function of (config, corpus, store). Episodes evaluate in parallel when
``FEWIE_BENCH_THREADS`` allows it (0/unset = hardware default); results are
reduced in episode order, so thread count never changes output bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np
import yaml

from fewie_bench import __version__
from fewie_bench._rng import derive_seed
from fewie_bench.contrastive import ContrastiveConfig, train_head
from fewie_bench.corpus import Corpus, TagScheme, convert_scheme, load_corpus
from fewie_bench.encoders import EncoderConfig, l2_normalize, make_encoder
from fewie_bench.errors import ConfigError, FewieBenchError, InfeasibleEpisodeError
from fewie_bench.metrics import EpisodeScore, aggregate, episode_micro_f1, significance
from fewie_bench.readout import SupportSet, fit_logreg, fit_readout, predict_batch
from fewie_bench.sampler import Episode, EpisodeSpec, dump_manifest, sample_run

THREADS_ENV_VAR = "FEWIE_BENCH_THREADS"

DEFAULT_SCENARIOS = ((5, 1, 1), (5, 5, 1), (5, 10, 1))
DEFAULT_N_EPISODES = 600


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_path: Path
    output_dir: Path
    corpus_format: str = "conll"
    token_col: int = 0
    tag_col: int = -1
    scheme: str | None = None
    max_length: int = 128
    dataset_label: str | None = None
    scenarios: tuple[tuple[int, int, int], ...] = DEFAULT_SCENARIOS
    n_episodes: int = DEFAULT_N_EPISODES
    seed: int = 0
    encoder: EncoderConfig = EncoderConfig("random")
    encoder_label: str | None = None
    readout_kind: str = "lr"
    l2_lambda: float = 1.0
    tol: float = 1e-6
    max_iter: int = 1000
    contrastive: ContrastiveConfig | None = None

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("scenarios must be nonempty")
        if self.n_episodes < 1:
            raise ConfigError(f"n_episodes must be >= 1, got {self.n_episodes}")
        if self.readout_kind not in ("lr", "nn", "nc"):
            raise ConfigError(f"unknown readout kind {self.readout_kind!r}")

    @property
    def resolved_dataset_label(self) -> str:
        return self.dataset_label or self.corpus_path.stem

    @property
    def resolved_encoder_label(self) -> str:
        if self.encoder_label:
            return self.encoder_label
        if self.encoder.kind == "random":
            return f"random-{self.encoder.dim}"
        return f"store-{Path(self.encoder.store_path).stem}"

    def to_dict(self) -> dict:
        snapshot = {
            "corpus": {
                "path": str(self.corpus_path),
                "format": self.corpus_format,
                "token_col": self.token_col,
                "tag_col": self.tag_col,
                "scheme": self.scheme,
                "max_length": self.max_length,
            },
            "dataset_label": self.resolved_dataset_label,
            "sampling": {
                "scenarios": [list(s) for s in self.scenarios],
                "n_episodes": self.n_episodes,
                "seed": self.seed,
            },
            "encoder": {
                "kind": self.encoder.kind,
                "dim": self.encoder.dim,
                "seed": self.encoder.seed,
                "store_path": (None if self.encoder.store_path is None
                               else str(self.encoder.store_path)),
                "label": self.resolved_encoder_label,
            },
            "readout": {
                "kind": self.readout_kind,
                "l2_lambda": self.l2_lambda,
                "tol": self.tol,
                "max_iter": self.max_iter,
            },
            "contrastive": None,
            "output_dir": str(self.output_dir),
        }
        if self.contrastive is not None:
            snapshot["contrastive"] = dataclasses.asdict(self.contrastive)
        return snapshot


def _known_keys(section: dict, allowed: set[str], where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from parsed YAML; relative paths resolve against base_dir."""
    base = Path(base_dir) if base_dir is not None else Path.cwd()

    def resolve(path_str: str) -> Path:
        path = Path(path_str)
        return path if path.is_absolute() else base / path

    _known_keys(data, {"corpus", "dataset_label", "sampling", "encoder", "readout",
                       "contrastive", "output_dir"}, "config")

    corpus_section = data.get("corpus")
    if not isinstance(corpus_section, dict) or "path" not in corpus_section:
        raise ConfigError("config requires corpus.path")
    _known_keys(corpus_section, {"path", "format", "token_col", "tag_col", "scheme",
                                 "max_length"}, "corpus")

    sampling = data.get("sampling", {})
    _known_keys(sampling, {"scenarios", "n_episodes", "seed"}, "sampling")
    raw_scenarios = sampling.get("scenarios")
    if raw_scenarios is None:
        scenarios = DEFAULT_SCENARIOS
    else:
        scenarios = []
        for entry in raw_scenarios:
            if isinstance(entry, dict):
                scenarios.append((int(entry["n_ways"]), int(entry["k_shots"]),
                                  int(entry.get("k_query", 1))))
            else:
                parts = list(entry)
                scenarios.append((int(parts[0]), int(parts[1]),
                                  int(parts[2]) if len(parts) > 2 else 1))
        scenarios = tuple(scenarios)

    encoder_section = dict(data.get("encoder", {}))
    _known_keys(encoder_section, {"kind", "dim", "seed", "store_path", "label"}, "encoder")
    encoder_label = encoder_section.pop("label", None)
    store_path = encoder_section.get("store_path")
    if store_path is not None:
        encoder_section["store_path"] = resolve(store_path)
    try:
        encoder = EncoderConfig(
            kind=encoder_section.get("kind", "random"),
            dim=int(encoder_section.get("dim", 768)),
            seed=int(encoder_section.get("seed", 0)),
            store_path=encoder_section.get("store_path"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    readout_section = data.get("readout", {})
    _known_keys(readout_section, {"kind", "l2_lambda", "tol", "max_iter"}, "readout")

    contrastive_section = data.get("contrastive")
    contrastive_config = None
    if contrastive_section:
        _known_keys(contrastive_section,
                    {"enabled", "margin", "learning_rate", "epochs", "adam_beta1",
                     "adam_beta2", "adam_eps", "pair_seed"}, "contrastive")
        if contrastive_section.get("enabled", True):
            params = {k: v for k, v in contrastive_section.items() if k != "enabled"}
            try:
                contrastive_config = ContrastiveConfig(**params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from None

    if "output_dir" not in data:
        raise ConfigError("config requires output_dir")

    try:
        return ExperimentConfig(
            corpus_path=resolve(str(corpus_section["path"])),
            output_dir=resolve(str(data["output_dir"])),
            corpus_format=corpus_section.get("format", "conll"),
            token_col=int(corpus_section.get("token_col", 0)),
            tag_col=int(corpus_section.get("tag_col", -1)),
            scheme=corpus_section.get("scheme"),
            max_length=int(corpus_section.get("max_length", 128)),
            dataset_label=data.get("dataset_label"),
            scenarios=scenarios,
            n_episodes=int(sampling.get("n_episodes", DEFAULT_N_EPISODES)),
            seed=int(sampling.get("seed", 0)),
            encoder=encoder,
            encoder_label=encoder_label,
            readout_kind=readout_section.get("kind", "lr"),
            l2_lambda=float(readout_section.get("l2_lambda", 1.0)),
            tol=float(readout_section.get("tol", 1e-6)),
            max_iter=int(readout_section.get("max_iter", 1000)),
            contrastive=contrastive_config,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return config_from_dict(data, base_dir=path.parent)


@dataclass
class ScenarioResult:
    n_ways: int
    k_shots: int
    k_query: int
    spec_seed: int
    n_episodes: int
    episodes_path: str
    episodes_sha256: str
    scores_path: str
    predictions_path: str
    mean_f1: float
    std_f1: float
    ci95_half_width: float

    @property
    def scenario(self) -> tuple[int, int, int]:
        return (self.n_ways, self.k_shots, self.k_query)


@dataclass
class RunManifest:
    artifact_version: str
    dataset_label: str
    encoder_label: str
    readout_kind: str
    contrastive_enabled: bool
    config: dict
    scenarios: list[ScenarioResult]
    errors: list[dict] = field(default_factory=list)
    created_at: str = ""
    root: Path | None = None  # set on load; not serialized

    def to_dict(self) -> dict:
        return {
            "artifact_version": self.artifact_version,
            "dataset_label": self.dataset_label,
            "encoder_label": self.encoder_label,
            "readout_kind": self.readout_kind,
            "contrastive_enabled": self.contrastive_enabled,
            "config": self.config,
            "scenarios": [dataclasses.asdict(s) for s in self.scenarios],
            "errors": self.errors,
            "created_at": self.created_at,
        }

    def write(self, run_dir: Path) -> Path:
        path = run_dir / "run_manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n",
                        encoding="utf-8")
        return path

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunManifest":
        run_dir = Path(run_dir)
        path = run_dir / "run_manifest.json"
        if not path.is_file():
            raise FewieBenchError(f"{run_dir} has no run_manifest.json")
        data = json.loads(path.read_text(encoding="utf-8"))
        scenarios = [ScenarioResult(**entry) for entry in data["scenarios"]]
        return cls(
            artifact_version=data["artifact_version"],
            dataset_label=data["dataset_label"],
            encoder_label=data["encoder_label"],
            readout_kind=data["readout_kind"],
            contrastive_enabled=data["contrastive_enabled"],
            config=data["config"],
            scenarios=scenarios,
            errors=data.get("errors", []),
            created_at=data.get("created_at", ""),
            root=run_dir,
        )

    def load_scores(self, result: ScenarioResult) -> list[EpisodeScore]:
        if self.root is None:
            raise FewieBenchError("manifest not attached to a run directory")
        scores = []
        for line in (self.root / result.scores_path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                obj = json.loads(line)
                scores.append(EpisodeScore(obj["episode_index"], obj["f1"],
                                           obj["tp"], obj["fp"], obj["fn"]))
        return scores


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if raw in ("", "0"):
        return os.cpu_count() or 1
    count = int(raw)
    if count < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be >= 0, got {raw}")
    return count


def _renormalize_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / np.where(norms == 0.0, 1.0, norms)


def _shot_rows(shots, cache: dict[str, np.ndarray], class_of: dict[str, int]):
    blocks = []
    labels = []
    for shot in shots:
        block = cache[shot.sentence_id][shot.start:shot.end]
        blocks.append(block)
        labels.extend([class_of[shot.entity_type]] * block.shape[0])
    return np.concatenate(blocks, axis=0), np.array(labels, dtype=np.int64)


def _evaluate_episode(episode: Episode, episode_index: int, cache: dict[str, np.ndarray],
                      config: ExperimentConfig, spec: EpisodeSpec):
    class_of = {name: i for i, name in enumerate(episode.classes)}
    support_rows, support_labels = _shot_rows(episode.support, cache, class_of)
    query_rows, query_labels = _shot_rows(episode.query, cache, class_of)

    if config.contrastive is not None:
        contrastive_rows = support_rows
        contrastive_labels = support_labels
        if episode.extra_support:
            extra_rows, extra_labels = _shot_rows(episode.extra_support, cache, class_of)
            contrastive_rows = np.concatenate([support_rows, extra_rows], axis=0)
            contrastive_labels = np.concatenate([support_labels, extra_labels])
        pair_seed = derive_seed(config.contrastive.pair_seed, "episode-pairs", episode_index)
        episode_cc = dataclasses.replace(config.contrastive, pair_seed=pair_seed)
        head = train_head(
            SupportSet(contrastive_rows, contrastive_labels, spec.n_ways),
            spec.n_ways, spec.k_shots, episode_cc,
        )
        support_rows = _renormalize_rows(head.apply(support_rows))
        query_rows = _renormalize_rows(head.apply(query_rows))

    support = SupportSet(support_rows, support_labels, spec.n_ways)
    if config.readout_kind == "lr":
        model = fit_logreg(support, config.l2_lambda, config.tol, config.max_iter)
    else:
        model = fit_readout(config.readout_kind, support)
    predictions, _ = predict_batch(model, query_rows)
    score = episode_micro_f1(predictions, query_labels, spec.n_ways,
                             episode_index=episode_index)
    return score, query_labels.tolist(), predictions.tolist()


def _run_scenario(config: ExperimentConfig, corpus: Corpus, encoder,
                  scenario: tuple[int, int, int], run_dir: Path,
                  cache: dict[str, np.ndarray]) -> ScenarioResult:
    n_ways, k_shots, k_query = scenario
    spec_seed = derive_seed(config.seed, "scenario", n_ways, k_shots, k_query)
    spec = EpisodeSpec(n_ways, k_shots, k_query, seed=spec_seed,
                       cl_extra=config.contrastive is not None)
    episodes = sample_run(corpus, spec, config.n_episodes)

    scenario_dir = run_dir / f"n{n_ways}_k{k_shots}_q{k_query}"
    scenario_dir.mkdir(parents=True, exist_ok=True)
    manifest_text = dump_manifest(episodes)
    (scenario_dir / "episodes.jsonl").write_text(manifest_text, encoding="utf-8")
    manifest_sha = hashlib.sha256(manifest_text.encode("utf-8")).hexdigest()

    # Embeddings are computed once per sentence for the whole run (episodes
    # heavily reuse sentences) and filled in before the parallel section, so
    # worker threads only read the cache.
    needed: set[str] = set()
    for episode in episodes:
        for shot in episode.support + episode.query + episode.extra_support:
            needed.add(shot.sentence_id)
    for sentence_id in sorted(needed - cache.keys()):
        matrix = l2_normalize(encoder.encode(corpus.get(sentence_id)))
        cache[sentence_id] = matrix.vectors

    def evaluate(i: int):
        return _evaluate_episode(episodes[i], i, cache, config, spec)

    threads = _thread_count()
    if threads > 1 and len(episodes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(evaluate, range(len(episodes))))
    else:
        outcomes = [evaluate(i) for i in range(len(episodes))]

    score_lines = []
    prediction_lines = []
    scores = []
    for i, (score, gold, predicted) in enumerate(outcomes):
        scores.append(score)
        score_lines.append(json.dumps(
            {"episode_index": i, "f1": score.f1, "tp": score.tp,
             "fp": score.fp, "fn": score.fn},
            ensure_ascii=False, separators=(",", ":")))
        prediction_lines.append(json.dumps(
            {"episode_index": i, "gold": gold, "predicted": predicted},
            ensure_ascii=False, separators=(",", ":")))
    (scenario_dir / "scores.jsonl").write_text("\n".join(score_lines) + "\n",
                                               encoding="utf-8")
    (scenario_dir / "predictions.jsonl").write_text("\n".join(prediction_lines) + "\n",
                                                    encoding="utf-8")

    mean, std, half_width = aggregate(scores)
    return ScenarioResult(
        n_ways=n_ways, k_shots=k_shots, k_query=k_query, spec_seed=spec_seed,
        n_episodes=len(episodes),
        episodes_path=f"{scenario_dir.name}/episodes.jsonl",
        episodes_sha256=manifest_sha,
        scores_path=f"{scenario_dir.name}/scores.jsonl",
        predictions_path=f"{scenario_dir.name}/predictions.jsonl",
        mean_f1=mean, std_f1=std, ci95_half_width=half_width,
    )


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Run every scenario of a config and persist all artifacts.

    A failing scenario is recorded under ``errors`` in the run manifest and
    does not stop the remaining scenarios.
    """
    corpus = load_corpus(config.corpus_path, config.corpus_format,
                         token_col=config.token_col, tag_col=config.tag_col,
                         max_length=config.max_length)
    if config.scheme is not None:
        corpus = convert_scheme(corpus, TagScheme.from_string(config.scheme))
    encoder = make_encoder(config.encoder)

    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    results: list[ScenarioResult] = []
    errors: list[dict] = []
    embedding_cache: dict[str, np.ndarray] = {}
    for scenario in config.scenarios:
        try:
            results.append(_run_scenario(config, corpus, encoder, scenario, run_dir,
                                         embedding_cache))
        except FewieBenchError as exc:
            errors.append({
                "scenario": list(scenario),
                "error_type": type(exc).__name__,
                "message": str(exc),
                "infeasible": isinstance(exc, InfeasibleEpisodeError),
            })

    manifest = RunManifest(
        artifact_version=__version__,
        dataset_label=config.resolved_dataset_label,
        encoder_label=config.resolved_encoder_label,
        readout_kind=config.readout_kind,
        contrastive_enabled=config.contrastive is not None,
        config=config.to_dict(),
        scenarios=results,
        errors=errors,
        created_at=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        root=run_dir,
    )
    manifest.write(run_dir)
    return manifest


def _format_cell(mean_f1: float) -> str:
    return str(Decimal(repr(mean_f1 * 100)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def emit_table(manifests: list[RunManifest]) -> tuple[str, str]:
    """Build CSV and markdown result tables from finished runs.

    Rows are (dataset, scenario); columns are encoder labels. The best cell
    per row is bolded in the markdown table and marked with a dagger when
    the paired test against the next-best run is significant at 0.05. Exact
    mean ties bold the first (lowest-index) column and never get a dagger.

    All runs must cover the same scenarios, and runs being compared must
    have sampled identical episode manifests.
    """
    if not manifests:
        raise FewieBenchError("no run manifests given")
    for manifest in manifests:
        if manifest.errors:
            raise FewieBenchError(
                f"run {manifest.encoder_label!r} has failed scenarios; "
                f"cannot tabulate: {manifest.errors}"
            )

    labels: list[str] = []
    for manifest in manifests:
        if manifest.encoder_label not in labels:
            labels.append(manifest.encoder_label)
    datasets: list[str] = []
    for manifest in manifests:
        if manifest.dataset_label not in datasets:
            datasets.append(manifest.dataset_label)

    by_key: dict[tuple[str, str], RunManifest] = {}
    for manifest in manifests:
        key = (manifest.dataset_label, manifest.encoder_label)
        if key in by_key:
            raise FewieBenchError(f"duplicate run for dataset/encoder {key}")
        by_key[key] = manifest

    reference_scenarios = [s.scenario for s in manifests[0].scenarios]
    for manifest in manifests:
        if [s.scenario for s in manifest.scenarios] != reference_scenarios:
            raise FewieBenchError(
                f"run {manifest.encoder_label!r} covers scenarios "
                f"{[s.scenario for s in manifest.scenarios]}, expected {reference_scenarios}"
            )

    csv_lines = ["dataset,n_ways,k_shots,k_query,"
                 + ",".join(labels) + ",best,significant"]
    md_header = "| dataset | scenario | " + " | ".join(labels) + " |"
    md_rule = "|" + "---|" * (2 + len(labels))
    md_lines = [md_header, md_rule]

    for dataset in datasets:
        for scenario_index, scenario in enumerate(reference_scenarios):
            cells = []
            entries = []
            for label in labels:
                manifest = by_key.get((dataset, label))
                if manifest is None:
                    raise FewieBenchError(f"no run for dataset {dataset!r} encoder {label!r}")
                result = manifest.scenarios[scenario_index]
                entries.append((manifest, result))
                cells.append(_format_cell(result.mean_f1))

            means = [result.mean_f1 for _, result in entries]
            best = int(np.argmax(means))
            dagger = False
            order = sorted(range(len(means)), key=lambda i: (-means[i], i))
            if len(order) > 1 and means[order[0]] > means[order[1]]:
                best_manifest, best_result = entries[order[0]]
                next_manifest, next_result = entries[order[1]]
                if best_result.episodes_sha256 != next_result.episodes_sha256:
                    raise FewieBenchError(
                        f"runs {best_manifest.encoder_label!r} and "
                        f"{next_manifest.encoder_label!r} sampled different episodes for "
                        f"scenario {scenario}; re-run with a shared sampling seed"
                    )
                _, dagger = significance(best_manifest.load_scores(best_result),
                                         next_manifest.load_scores(next_result))

            n_ways, k_shots, k_query = scenario
            csv_lines.append(
                f"{dataset},{n_ways},{k_shots},{k_query},"
                + ",".join(cells)
                + f",{labels[best]},{str(dagger).lower()}"
            )
            md_cells = list(cells)
            md_cells[best] = f"**{md_cells[best]}**" + ("†" if dagger else "")
            md_lines.append(
                f"| {dataset} | {n_ways}-way {k_shots}-shot | " + " | ".join(md_cells) + " |"
            )

    return "\n".join(csv_lines) + "\n", "\n".join(md_lines) + "\n"
