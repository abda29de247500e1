"""fewie-bench: episodic N-way K-shot evaluation of frozen token embeddings
for low-resource NER.

Corpora are parsed into sentences with per-token tags, episodes are sampled
under purity and disjointness constraints, token embeddings come from a
seeded random baseline or a precomputed binary store, and lightweight
readout models (logistic regression, 1-nearest-neighbor, nearest centroid)
classify query tokens. Scores are token-level micro-F1 per episode.
"""

__version__ = "0.1.0"

from fewie_bench.corpus import (  # noqa: E402,F401
    Corpus,
    EntityMention,
    Sentence,
    TagScheme,
    convert_scheme,
    extract_mentions,
    load_corpus,
    parse_conll,
    parse_jsonl,
)
from fewie_bench.encoders import (  # noqa: E402,F401
    EmbeddingMatrix,
    EmbeddingStore,
    EncoderConfig,
    encode,
    l2_normalize,
    make_encoder,
    store_read,
    store_write,
)
from fewie_bench.sampler import (  # noqa: E402,F401
    Episode,
    EpisodeSpec,
    ShotRef,
    sample_episode,
    sample_run,
    validate_episode,
)
from fewie_bench.readout import (  # noqa: E402,F401
    ReadoutModel,
    SupportSet,
    fit_logreg,
    fit_readout,
    predict_batch,
    predict_readout,
)
from fewie_bench.contrastive import (  # noqa: E402,F401
    ContrastiveConfig,
    PairSet,
    ProjectionHead,
    build_pairs,
    contrastive_grad,
    contrastive_loss,
    train_head,
)
from fewie_bench.metrics import (  # noqa: E402,F401
    EpisodeScore,
    RunResult,
    aggregate,
    episode_micro_f1,
    significance,
)
