"""Fixed character-level vocabulary.

A ~100 symbol table: five specials followed by a frozen list of printable
characters. Character-level keeps the pipeline free of external tokenizer
files while preserving the reading difficulty of the task.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PAD = 0
SEP = 1
BOA = 2  # begin-of-answer marker, stands in for the literal " A:" cue
EOS = 3
UNK = 4

SPECIAL_NAMES = {PAD: "<pad>", SEP: "<sep>", BOA: "<boa>", EOS: "<eos>", UNK: "<unk>"}

_CHARS = (
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "0123456789"
    " .,:;?!'\"-_/()[]#$%&+*=@<>"
)


@dataclass(frozen=True)
class TokenVocab:
    """Immutable char->id table covering printable text plus specials."""

    chars: str = _CHARS
    char_to_id: dict = field(init=False, repr=False)
    id_to_char: dict = field(init=False, repr=False)

    def __post_init__(self):
        c2i = {c: i + len(SPECIAL_NAMES) for i, c in enumerate(self.chars)}
        i2c = {i: c for c, i in c2i.items()}
        object.__setattr__(self, "char_to_id", c2i)
        object.__setattr__(self, "id_to_char", i2c)

    @property
    def size(self) -> int:
        return len(SPECIAL_NAMES) + len(self.chars)

    def encode(self, s: str) -> list[int]:
        """Tokenize a string; unknown characters map to UNK."""
        return [self.char_to_id.get(c, UNK) for c in s]

    def decode(self, ids) -> str:
        """Inverse of ``encode`` on in-vocab strings; specials render as tags."""
        out = []
        for i in ids:
            i = int(i)
            if i in self.id_to_char:
                out.append(self.id_to_char[i])
            else:
                out.append(SPECIAL_NAMES.get(i, "<?>"))
        return "".join(out)


DEFAULT_VOCAB = TokenVocab()


def tokenize_text(s: str, vocab: TokenVocab = DEFAULT_VOCAB) -> list[int]:
    return vocab.encode(s)


def detokenize(ids, vocab: TokenVocab = DEFAULT_VOCAB) -> str:
    return vocab.decode(ids)
