"""Shared fixture: a tiny causal LM + tokenizer built locally on disk.

Keeps the suite hermetic (no hub access) while exercising the exact
AutoTokenizer/AutoModelForCausalLM loading path a hub checkpoint would use.
"""

import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

WORDS = [
    "<unk>", "<pad>", "<bos>",
    "the", "a", "cat", "dog", "runs", "sleeps", "eats", "fish", "bird", "sky",
    "blue", "red", "fast", "slow", "and", "or", "then", "so", "first", "next",
    "we", "solve", "answer", "is", "step", "by", "count", "add", "two", "three",
    "four", "five", "sum", "therefore", "because", "question", "think", "how",
    "to", "this", ".", ",", "let", "'", "s",
]


def build_tiny_model(root, seed=1234, n_positions=64, chat_template=True):
    vocab = {word: i for i, word in enumerate(WORDS)}
    tokenizer = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tokenizer.pre_tokenizer = Whitespace()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token="<unk>",
        pad_token="<pad>",
        bos_token="<bos>",
        eos_token="<bos>",
        model_max_length=n_positions,
    )
    if chat_template:
        fast.chat_template = "{% for m in messages %}{{ m['content'] }} {% endfor %}"
    fast.save_pretrained(root)
    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=n_positions,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=vocab["<bos>"],
        eos_token_id=vocab["<bos>"],
        pad_token_id=vocab["<pad>"],
    )
    torch.manual_seed(seed)
    model = GPT2LMHeadModel(config)
    model.save_pretrained(root)
    return root


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    return str(build_tiny_model(tmp_path_factory.mktemp("tiny_model")))


@pytest.fixture(scope="session")
def other_vocab_model_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("other_model")
    vocab = {word: i for i, word in enumerate(["<unk>", "<pad>", "x", "y", "z"])}
    tokenizer = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tokenizer.pre_tokenizer = Whitespace()
    fast = PreTrainedTokenizerFast(tokenizer_object=tokenizer, unk_token="<unk>", pad_token="<pad>")
    fast.save_pretrained(root)
    config = GPT2Config(vocab_size=len(vocab), n_positions=32, n_embd=16, n_layer=1, n_head=1)
    torch.manual_seed(7)
    GPT2LMHeadModel(config).save_pretrained(root)
    return str(root)


def make_sentence(rng, length):
    words = [w for w in WORDS if not w.startswith("<")]
    return " ".join(words[int(rng.integers(0, len(words)))] for _ in range(length))
