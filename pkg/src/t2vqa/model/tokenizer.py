"""Minimal deterministic tokenizer with five reserved quality-level tokens.

Words are lowercased alphanumeric runs.  The five level words map to
fixed reserved ids; everything else is feature-hashed into the remaining
vocabulary, so no external vocabulary file is needed and identical text
always yields identical ids.
"""

from __future__ import annotations

import hashlib
import re

LEVEL_WORDS = ("bad", "poor", "fair", "good", "excellent")

PAD_ID = 0
UNK_ID = 1
FIRST_LEVEL_ID = 2
FIRST_HASHED_ID = FIRST_LEVEL_ID + len(LEVEL_WORDS)

_WORD_RE = re.compile(r"[a-z0-9]+")


class Tokenizer:
    def __init__(self, vocab_size: int = 512):
        if vocab_size <= FIRST_HASHED_ID:
            raise ValueError(f"vocab_size must exceed {FIRST_HASHED_ID}")
        self.vocab_size = vocab_size
        self.level_ids = tuple(range(FIRST_LEVEL_ID, FIRST_LEVEL_ID + len(LEVEL_WORDS)))
        self._level_map = dict(zip(LEVEL_WORDS, self.level_ids))

    def token_id(self, word: str) -> int:
        level = self._level_map.get(word)
        if level is not None:
            return level
        digest = hashlib.blake2s(word.encode("utf-8"), digest_size=8).digest()
        span = self.vocab_size - FIRST_HASHED_ID
        return FIRST_HASHED_ID + int.from_bytes(digest, "big") % span

    def encode(self, text: str) -> list[int]:
        ids = [self.token_id(w) for w in _WORD_RE.findall(text.lower())]
        return ids if ids else [UNK_ID]
