import pytest
import torch
from tokenizers import BertWordPieceTokenizer
from transformers import BertConfig, BertModel, BertTokenizerFast

# Tiny deterministic BERT checkpoint built offline. The vocab contains
# single letters plus ##-continuations so multi-letter corpus tokens split
# into several subwords, exercising the alignment logic.
VOCAB = (
    ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    + list("abcdefghij")
    + [f"##{c}" for c in "abcdefghij"]
)


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    model_dir = tmp_path_factory.mktemp("tiny-bert")
    backend = BertWordPieceTokenizer(vocab={t: i for i, t in enumerate(VOCAB)},
                                     lowercase=True)
    tokenizer = BertTokenizerFast(tokenizer_object=backend._tokenizer)
    tokenizer.save_pretrained(model_dir)

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=16,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=160,
    )
    BertModel(config).save_pretrained(model_dir)
    return model_dir


@pytest.fixture()
def conll_corpus(tmp_path):
    """Three sentences of letter tokens the tiny tokenizer can split."""
    text = (
        "-DOCSTART- O\n"
        "\n"
        "ab B-PER\n"
        "c I-PER\n"
        "de O\n"
        "\n"
        "f B-LOC\n"
        "ghi O\n"
        "\n"
        "a O\n"
        "bc B-ORG\n"
        "d O\n"
        "e O\n"
    )
    path = tmp_path / "tiny.conll"
    path.write_text(text, encoding="utf-8")
    return path
