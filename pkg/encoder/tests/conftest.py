import pytest
import torch

# Local stand-in for a base multilingual encoder: same geometry where it
# matters (hidden width 768, layer 8 reachable), tiny vocab, random weights.
# The sandbox has no model hub access, so tests build their own checkpoint.
HIDDEN = 768
LAYERS = 8
MAX_POS = 64

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "le", "chat", "dort", "sur", "la", "maison", ".", ",",
    "el", "gato", "duerme", "en", "casa",
    "il", "gatto", "dorme", "nella",
    "##s", "##a", "##o", "##ment", "proba", "##ble",
]


def build_checkpoint(path):
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.pre_tokenizers import Whitespace
    from tokenizers.processors import TemplateProcessing
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    vocab = {t: i for i, t in enumerate(VOCAB)}
    tk = Tokenizer(WordPiece(vocab, unk_token="[UNK]"))
    tk.pre_tokenizer = Whitespace()
    tk.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tk,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=HIDDEN,
        num_hidden_layers=LAYERS,
        num_attention_heads=8,
        intermediate_size=512,
        max_position_embeddings=MAX_POS,
    )
    torch.manual_seed(20260810)
    model = BertModel(config)
    model.eval()
    tokenizer.save_pretrained(path)
    model.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    return build_checkpoint(tmp_path_factory.mktemp("checkpoint") / "encoder-768")


@pytest.fixture(scope="session")
def loaded_encoder(model_dir):
    from nnrank_encoder import load_encoder

    return load_encoder(model_dir)


@pytest.fixture
def corpus_3_lines(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("le chat dort .\nla maison .\nle chat dort sur la maison .\n", encoding="utf-8")
    return path


def write_corpus(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
