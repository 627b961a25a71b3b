import pytest
import torch

from pocketforge.data.vocab import (
    AMINO_ACIDS,
    OTHER_ELEMENT,
    PAD,
    SEPARATOR,
    VOCAB_SIZE,
    CoEvoVocabulary,
    bond_type_index,
    detokenize_coevolution,
    element_index,
    indices_to_sequence,
    sequence_to_indices,
    tokenize_coevolution,
)
from pocketforge.errors import EmptyAlignmentError, ShapeError, VocabularyError


@pytest.fixture
def vocab():
    return CoEvoVocabulary.load()


def test_packaged_vocabulary(vocab):
    assert len(vocab) == VOCAB_SIZE
    assert vocab.symbols[:20] == list(AMINO_ACIDS)
    assert vocab.decode([vocab.separator, vocab.pad]) == SEPARATOR + PAD
    assert vocab.encode("C>>O") == [vocab.symbol_to_index[c] for c in "C>>O"]


def test_vocabulary_rejects_bad_tables():
    with pytest.raises(VocabularyError):
        CoEvoVocabulary(list(AMINO_ACIDS))
    symbols = list(CoEvoVocabulary.load().symbols)
    symbols[1] = symbols[0]
    with pytest.raises(VocabularyError):
        CoEvoVocabulary(symbols)


def test_custom_vocabulary_file(tmp_path, vocab):
    path = tmp_path / "table.txt"
    path.write_text("\n".join(reversed(vocab.symbols)) + "\n", encoding="utf-8")
    custom = CoEvoVocabulary.load(path)
    assert custom.symbols == list(reversed(vocab.symbols))
    assert custom.name == "table.txt"


def test_encode_unknown_character(vocab):
    with pytest.raises(VocabularyError):
        vocab.encode("AC!")


def test_sequence_indices_roundtrip():
    indices = sequence_to_indices("MKV")
    assert indices.tolist() == [AMINO_ACIDS.index(c) for c in "MKV"]
    assert indices_to_sequence(indices.tolist()) == "MKV"
    assert indices_to_sequence([0, 20]) == "AX"
    with pytest.raises(VocabularyError):
        sequence_to_indices("MZ")


def test_element_index_other_bucket(caplog):
    assert element_index("c") == element_index("C")
    assert element_index("CL") == element_index("Cl")
    with caplog.at_level("WARNING"):
        assert element_index("Xx") == OTHER_ELEMENT
    assert "Xx" in caplog.text


def test_bond_type_index():
    assert [bond_type_index(o) for o in (1, 2, 3, 4)] == [0, 1, 2, 3]
    with pytest.raises(VocabularyError):
        bond_type_index(0)


def test_tokenize_pads_and_truncates(vocab):
    grid = tokenize_coevolution(["AC-", "AD"], ["C>>O", "C>>N"], vocab, n_token=8)
    assert grid.shape == (2, 8)
    row0 = "AC-|C>>O"
    assert grid.tokens[0].tolist() == vocab.encode(row0)
    assert grid.cell_mask[0].all()
    row1 = "AD|C>>N"
    assert grid.tokens[1, :7].tolist() == vocab.encode(row1)
    assert grid.tokens[1, 7] == vocab.pad
    assert grid.cell_mask[1].tolist() == [True] * 7 + [False]

    short = tokenize_coevolution(["ACDEFGHIK"], ["C>>O"], vocab, n_token=4)
    assert vocab.decode(short.tokens[0].tolist()) == "ACDE"


def test_tokenize_keeps_first_rows(vocab):
    grid = tokenize_coevolution(["A", "C", "D"], ["O", "O", "O"], vocab, n_token=4, n_msa=2)
    assert grid.shape == (2, 4)
    assert vocab.decode(grid.tokens[:, 0].tolist()) == "AC"


def test_tokenize_errors(vocab):
    with pytest.raises(EmptyAlignmentError):
        tokenize_coevolution([], [], vocab, n_token=4)
    with pytest.raises(ShapeError):
        tokenize_coevolution(["A", "C"], ["O"], vocab, n_token=4)
    with pytest.raises(VocabularyError):
        tokenize_coevolution(["A"], ["C>>?"], vocab, n_token=8)


def test_detokenize_splits_on_separator(vocab):
    grid = tokenize_coevolution(["AC-", "AD"], ["C>>O", "C>>N"], vocab, n_token=12)
    enzyme, reaction = detokenize_coevolution(grid, vocab)
    assert enzyme == ["AC-", "AD"]
    assert reaction == ["C>>O", "C>>N"]

    hidden = grid.with_tokens(grid.tokens.clone())
    hidden.row_mask = torch.tensor([True, False])
    assert detokenize_coevolution(hidden, vocab) == (["AC-"], ["C>>O"])
