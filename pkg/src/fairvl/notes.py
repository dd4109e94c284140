"""Deterministic clinical-note synthesis and text-pair selection.

Each sample carries a demographic-free "neutral" note and K variants of
the same note with 1-2 randomly sampled demographic clauses inserted
after the first sentence. Training pairs are drawn with a configurable
probability of picking the neutral note as the primary text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .datamodel import AttributeSchema
from .errors import ConfigError

_AGE_PHRASE = re.compile(r"\b\d+ years old\b")
_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")

_MAX_DISTINCT_TRIES = 1000


def _load_templates() -> dict:
    with resources.files("fairvl.resources").joinpath("templates.json").open() as fh:
        return json.load(fh)


_TEMPLATES = _load_templates()


@dataclass(frozen=True)
class NoteVariants:
    neutral: str
    randomized: tuple[str, ...]

    @property
    def K(self) -> int:
        return len(self.randomized)

    @property
    def all_variants(self) -> tuple[str, ...]:
        return (self.neutral,) + self.randomized


@dataclass(frozen=True)
class SelectionConfig:
    p_txt1: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_txt1 <= 1.0:
            raise ConfigError("p_txt1 must lie in [0, 1]")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def demographic_lexicon(schema: AttributeSchema) -> set[str]:
    """Lowercased group-name tokens; age phrases are matched by pattern."""
    lex: set[str] = set()
    for _, values in schema.attributes:
        for v in values:
            lex.update(tokenize(v))
    return lex


def contains_demographic_token(text: str, schema: AttributeSchema) -> bool:
    if _AGE_PHRASE.search(text.lower()):
        return True
    lex = demographic_lexicon(schema)
    return any(t in lex for t in tokenize(text))


def _demographic_clause(schema: AttributeSchema, rng: np.random.Generator) -> str:
    # slot M is a synthetic "age" attribute; real slots use schema groups
    slot = int(rng.integers(schema.M + 1))
    if slot == schema.M:
        lo, hi = _TEMPLATES["age_range"]
        age = int(rng.integers(lo, hi + 1))
        return _TEMPLATES["age_template"].format(age=age)
    values = schema.values(slot)
    value = values[int(rng.integers(len(values)))]
    return _TEMPLATES["demographic_template"].format(value=value)


def synthesize_notes(label: int, attribute_values: tuple[int, ...],
                     schema: AttributeSchema, K: int, seed: int) -> NoteVariants:
    """Build the neutral note and K distinct demographic-randomized variants.

    The inserted demographics are sampled uniformly from the schema and are
    independent of the sample's true attribute_values; the disease clause of
    the neutral note is preserved verbatim in every variant.
    """
    if K < 1:
        raise ConfigError("K must be >= 1")
    bank = _TEMPLATES["positive_clauses" if label else "negative_clauses"]
    if not bank:
        raise ConfigError(f"empty template bank for label {label}")
    rng = np.random.default_rng(seed)
    disease = bank[int(rng.integers(len(bank)))]
    extra = _TEMPLATES["extra_sentences"][int(rng.integers(len(_TEMPLATES["extra_sentences"])))]
    neutral = f"{disease} {extra}"

    variants: list[str] = []
    for _ in range(K):
        for _attempt in range(_MAX_DISTINCT_TRIES):
            n_clauses = int(rng.integers(1, 3))
            clauses = " ".join(_demographic_clause(schema, rng) for _ in range(n_clauses))
            variant = f"{disease} {clauses} {extra}"
            if variant not in variants:
                variants.append(variant)
                break
        else:
            raise ConfigError(
                "cannot generate enough distinct demographic variants; "
                "schema too small for requested K"
            )
    return NoteVariants(neutral=neutral, randomized=tuple(variants))


def sample_text_pair(variants: NoteVariants, cfg: SelectionConfig,
                     rng: np.random.Generator | None = None) -> tuple[str, str]:
    """Draw (txt1, txt2): txt1 is the neutral note with probability p_txt1,
    otherwise uniform over the K randomized variants; txt2 is uniform over
    the remaining K variants, so txt1 != txt2 always."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    K = variants.K
    if rng.random() < cfg.p_txt1:
        idx1 = 0
    else:
        idx1 = 1 + int(rng.integers(K))
    pool = [i for i in range(K + 1) if i != idx1]
    idx2 = pool[int(rng.integers(len(pool)))]
    allv = variants.all_variants
    return allv[idx1], allv[idx2]


def _fnv1a64(token: str) -> int:
    h = 0xCBF29CE484222325
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def embed_tokens(note: str, vocab_dim: int) -> np.ndarray:
    """Hashed bag-of-words count vector; stable across runs and platforms."""
    if vocab_dim < 16:
        raise ConfigError("vocab_dim must be >= 16")
    vec = np.zeros(vocab_dim)
    for token in tokenize(note):
        vec[_fnv1a64(token) % vocab_dim] += 1.0
    return vec
