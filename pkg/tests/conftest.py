import pytest

from snps3.tokenizer import Vocab, load_vocab

TOY_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "boy", "play", "##ing"]


@pytest.fixture
def toy_vocab_file(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("\n".join(TOY_TOKENS) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def toy_vocab(toy_vocab_file):
    return load_vocab(toy_vocab_file)


@pytest.fixture
def mining_vocab():
    """Toy vocab with whole words used by the mining examples."""
    return Vocab.from_tokens(
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "boy", "plays", "dog", "runs", "red",
         "the", "skate", "##board", "##ing", "plane", "land", "##s", "."]
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
