"""Episode sampling: N-way K-shot support/query construction.

A shot is one entity mention together with its sentence context. Episodes
obey three constraints:

* purity: every sentence referenced by a shot contains only mentions whose
  types belong to the episode's class set;
* disjointness: no sentence id appears on both the support side (including
  contrastive extras) and the query side;
* exact counts: K support and K' query shots per class.

Sampling is deterministic: episode ``i`` of a run draws from an independent
generator keyed by ``(seed, "episode", i)`` (see ``fewie_bench._rng``), so
extending a run never changes earlier episodes and episodes can be generated
in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fewie_bench._rng import make_generator
from fewie_bench.corpus import Corpus, EntityMention, extract_mentions
from fewie_bench.errors import InfeasibleEpisodeError

# Class-set draws attempted before declaring a spec infeasible.
RETRY_BUDGET = 1000


@dataclass(frozen=True)
class EpisodeSpec:
    """Episode shape: N classes, K support and K' query mentions per class.

    ``cl_extra`` reserves one additional support mention per class; it is
    only consumed by contrastive pair construction when K = 1 and never
    enters the readout support or the query set.
    """

    n_ways: int
    k_shots: int
    k_query: int = 1
    seed: int = 0
    cl_extra: bool = False

    def __post_init__(self):
        if self.n_ways < 2:
            raise ValueError(f"n_ways must be >= 2, got {self.n_ways}")
        if self.k_shots < 1:
            raise ValueError(f"k_shots must be >= 1, got {self.k_shots}")
        if self.k_query < 1:
            raise ValueError(f"k_query must be >= 1, got {self.k_query}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def extra_per_class(self) -> int:
        return 1 if (self.cl_extra and self.k_shots == 1) else 0

    @property
    def mentions_needed(self) -> int:
        return self.k_shots + self.extra_per_class + self.k_query


@dataclass(frozen=True)
class ShotRef:
    """One sampled mention: sentence id, token span, and its class."""

    sentence_id: str
    start: int
    end: int
    entity_type: str

    @classmethod
    def from_mention(cls, mention: EntityMention) -> "ShotRef":
        return cls(mention.sentence_id, mention.start, mention.end, mention.entity_type)


@dataclass(frozen=True)
class Episode:
    """A sampled evaluation unit: ordered classes, support, and query shots."""

    classes: tuple[str, ...]
    support: tuple[ShotRef, ...]
    query: tuple[ShotRef, ...]
    extra_support: tuple[ShotRef, ...] = ()

    def class_index(self, entity_type: str) -> int:
        return self.classes.index(entity_type)


@dataclass
class MentionIndex:
    """Per-corpus lookup tables reused across many sampling calls."""

    labels: tuple[str, ...]
    mentions_by_type: dict[str, list[EntityMention]]
    sentence_types: dict[str, frozenset[str]]
    mentions_by_sentence: dict[str, list[EntityMention]]

    @classmethod
    def build(cls, corpus: Corpus) -> "MentionIndex":
        mentions_by_type: dict[str, list[EntityMention]] = {}
        sentence_types: dict[str, frozenset[str]] = {}
        mentions_by_sentence: dict[str, list[EntityMention]] = {}
        for sentence in corpus.sentences:
            mentions = extract_mentions(sentence, corpus.scheme)
            mentions_by_sentence[sentence.id] = mentions
            sentence_types[sentence.id] = frozenset(m.entity_type for m in mentions)
            for mention in mentions:
                mentions_by_type.setdefault(mention.entity_type, []).append(mention)
        return cls(
            labels=tuple(sorted(corpus.label_space)),
            mentions_by_type=mentions_by_type,
            sentence_types=sentence_types,
            mentions_by_sentence=mentions_by_sentence,
        )

    def eligible(self, entity_type: str, class_set: frozenset[str]) -> list[EntityMention]:
        """Mentions of ``entity_type`` in sentences pure w.r.t. ``class_set``."""
        return [
            mention
            for mention in self.mentions_by_type.get(entity_type, [])
            if self.sentence_types[mention.sentence_id] <= class_set
        ]


def _try_sample(index: MentionIndex, spec: EpisodeSpec,
                rng: np.random.Generator) -> Episode | str:
    """One class-set draw; returns an Episode or the name of the failing class."""
    class_draw = rng.choice(len(index.labels), size=spec.n_ways, replace=False)
    classes = tuple(index.labels[i] for i in class_draw)
    class_set = frozenset(classes)

    eligible = {}
    for entity_type in classes:
        pool = index.eligible(entity_type, class_set)
        if len(pool) < spec.mentions_needed:
            return entity_type
        eligible[entity_type] = pool

    support: list[ShotRef] = []
    extra: list[ShotRef] = []
    support_sentences: set[str] = set()
    per_class_support = spec.k_shots + spec.extra_per_class
    for entity_type in classes:
        pool = eligible[entity_type]
        picks = rng.choice(len(pool), size=per_class_support, replace=False)
        for position, pick in enumerate(picks):
            shot = ShotRef.from_mention(pool[pick])
            (support if position < spec.k_shots else extra).append(shot)
            support_sentences.add(shot.sentence_id)

    query: list[ShotRef] = []
    for entity_type in classes:
        pool = [m for m in eligible[entity_type] if m.sentence_id not in support_sentences]
        if len(pool) < spec.k_query:
            return entity_type
        picks = rng.choice(len(pool), size=spec.k_query, replace=False)
        query.extend(ShotRef.from_mention(pool[pick]) for pick in picks)

    return Episode(classes, tuple(support), tuple(query), tuple(extra))


def sample_episode(corpus: Corpus, spec: EpisodeSpec, rng: np.random.Generator,
                   index: MentionIndex | None = None) -> Episode:
    """Sample one episode from ``rng``.

    Classes are drawn uniformly without replacement; within each class,
    support mentions are drawn first (uniformly, without replacement, from
    sentences pure w.r.t. the drawn class set), then queries from the
    remaining sentences. Draws whose class set cannot satisfy the counts are
    rejected and redrawn, up to ``RETRY_BUDGET`` attempts.

    Raises:
        InfeasibleEpisodeError: Budget exhausted; names the class that most
            recently lacked eligible mentions.
    """
    if index is None:
        index = MentionIndex.build(corpus)
    if len(index.labels) < spec.n_ways:
        raise InfeasibleEpisodeError(
            f"corpus has {len(index.labels)} entity types, episode needs {spec.n_ways}"
        )
    failing: str | None = None
    for _ in range(RETRY_BUDGET):
        outcome = _try_sample(index, spec, rng)
        if isinstance(outcome, Episode):
            return outcome
        failing = outcome
    raise InfeasibleEpisodeError(
        f"no valid episode after {RETRY_BUDGET} class draws; class {failing!r} "
        f"repeatedly lacked {spec.mentions_needed} eligible mentions in pure sentences",
        entity_type=failing,
    )


def sample_run(corpus: Corpus, spec: EpisodeSpec, n_episodes: int) -> list[Episode]:
    """Sample ``n_episodes`` episodes, one independent stream per episode."""
    if n_episodes < 0:
        raise ValueError(f"n_episodes must be >= 0, got {n_episodes}")
    index = MentionIndex.build(corpus)
    episodes = []
    for i in range(n_episodes):
        rng = make_generator(spec.seed, "episode", i)
        episodes.append(sample_episode(corpus, spec, rng, index=index))
    return episodes


def validate_episode(corpus: Corpus, episode: Episode) -> list[str]:
    """Audit an episode against the corpus; return human-readable violations.

    An empty list means the episode satisfies all invariants: shots resolve
    to real mentions of the stated type, per-class shot counts are uniform,
    support and query sentences are disjoint, referenced sentences are pure,
    and no shot is duplicated. Dangling sentence ids are reported as
    violations, not raised.
    """
    violations: list[str] = []
    class_set = frozenset(episode.classes)
    if len(class_set) != len(episode.classes):
        violations.append(f"duplicate classes in {episode.classes}")

    index_cache: dict[str, list[EntityMention]] = {}

    def mentions_of(sentence_id: str) -> list[EntityMention] | None:
        if sentence_id not in index_cache:
            sentence = corpus.get(sentence_id)
            index_cache[sentence_id] = (
                None if sentence is None else extract_mentions(sentence, corpus.scheme)
            )
        return index_cache[sentence_id]

    def check_shot(shot: ShotRef, side: str):
        if shot.entity_type not in class_set:
            violations.append(f"{side} shot {shot}: type not in episode classes")
        mentions = mentions_of(shot.sentence_id)
        if mentions is None:
            violations.append(f"{side} shot {shot}: sentence id not in corpus")
            return
        target = EntityMention(shot.sentence_id, shot.start, shot.end, shot.entity_type)
        if target not in mentions:
            violations.append(f"{side} shot {shot}: span is not a mention of that type")
        foreign = {m.entity_type for m in mentions} - class_set
        if foreign:
            violations.append(
                f"{side} shot {shot}: sentence contains out-of-episode types {sorted(foreign)}"
            )

    for side, shots in (("support", episode.support), ("extra_support", episode.extra_support),
                        ("query", episode.query)):
        seen: set[ShotRef] = set()
        for shot in shots:
            if shot in seen:
                violations.append(f"{side} shot {shot}: duplicated")
            seen.add(shot)
            check_shot(shot, side)

    support_sentences = {s.sentence_id for s in episode.support + episode.extra_support}
    query_sentences = {s.sentence_id for s in episode.query}
    for sentence_id in sorted(support_sentences & query_sentences):
        violations.append(f"sentence {sentence_id!r} appears in both support and query")

    def count_by_class(shots: tuple[ShotRef, ...], side: str):
        counts = {c: 0 for c in episode.classes}
        for shot in shots:
            if shot.entity_type in counts:
                counts[shot.entity_type] += 1
        if len(set(counts.values())) > 1:
            violations.append(f"{side} shot counts differ across classes: {counts}")

    count_by_class(episode.support, "support")
    count_by_class(episode.query, "query")
    if episode.extra_support:
        count_by_class(episode.extra_support, "extra_support")

    return violations


def _shot_to_json(shot: ShotRef) -> dict:
    return {"sentence_id": shot.sentence_id, "start": shot.start,
            "end": shot.end, "type": shot.entity_type}


def _shot_from_json(obj: dict) -> ShotRef:
    return ShotRef(obj["sentence_id"], int(obj["start"]), int(obj["end"]), obj["type"])


def dump_manifest(episodes: list[Episode]) -> str:
    """Serialize episodes as JSON lines (the reproducibility artifact)."""
    lines = []
    for i, episode in enumerate(episodes):
        lines.append(json.dumps({
            "episode_index": i,
            "classes": list(episode.classes),
            "support": [_shot_to_json(s) for s in episode.support],
            "query": [_shot_to_json(s) for s in episode.query],
            "extra_support": [_shot_to_json(s) for s in episode.extra_support],
        }, ensure_ascii=False, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def write_manifest(episodes: list[Episode], path: str | Path) -> None:
    Path(path).write_text(dump_manifest(episodes), encoding="utf-8")


def read_manifest(path: str | Path) -> list[tuple[int, Episode]]:
    """Load (episode_index, episode) pairs from a manifest file."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        episode = Episode(
            classes=tuple(obj["classes"]),
            support=tuple(_shot_from_json(s) for s in obj["support"]),
            query=tuple(_shot_from_json(s) for s in obj["query"]),
            extra_support=tuple(_shot_from_json(s) for s in obj.get("extra_support", [])),
        )
        out.append((int(obj["episode_index"]), episode))
    return out
