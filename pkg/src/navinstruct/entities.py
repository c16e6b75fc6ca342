"""Entity-phrase extraction and embedding-based entity-landmark matching."""

from __future__ import annotations

import json
import logging
import re
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .landmarks import Landmark
from .providers import ProviderError

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\S+")
_EDGE_PUNCT = string.punctuation


@dataclass(frozen=True)
class WordLists:
    """Closed word lists that break entity spans; shipped as a config file."""

    determiners: frozenset[str]
    pronouns: frozenset[str]
    conjunctions: frozenset[str]
    prepositions: frozenset[str]
    adverbs: frozenset[str]
    motion_verbs: frozenset[str]

    @property
    def breakers(self) -> frozenset[str]:
        return (self.determiners | self.pronouns | self.conjunctions
                | self.prepositions | self.adverbs | self.motion_verbs)

    @classmethod
    def from_dict(cls, raw: dict) -> WordLists:
        kwargs = {}
        for name in ("determiners", "pronouns", "conjunctions",
                     "prepositions", "adverbs", "motion_verbs"):
            words = raw.get(name, [])
            if not isinstance(words, list):
                raise ValueError(f"word list {name!r} must be a list")
            kwargs[name] = frozenset(str(w).lower() for w in words)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str) -> WordLists:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@lru_cache(maxsize=1)
def default_word_lists() -> WordLists:
    raw = resources.files("navinstruct.data").joinpath("wordlists.json").read_text("utf-8")
    return WordLists.from_dict(json.loads(raw))


@dataclass(frozen=True)
class EntitySpan:
    """A phrase with its exact [start, end) offsets into the source text."""

    text: str
    start: int
    end: int
    normalized: str


def _strip_leading_determiners(words: list[str], lists: WordLists) -> list[str]:
    i = 0
    while i < len(words) and words[i] in lists.determiners:
        i += 1
    return words[i:]


def extract_entity_candidates(sub_instruction: str,
                              lists: WordLists | None = None) -> list[EntitySpan]:
    """Maximal token runs free of function words and motion verbs, in order.

    Tokens are compared against the lists after lowercasing and trimming edge
    punctuation; spans keep the exact offsets of the surviving tokens, with
    edge punctuation excluded.
    """
    if not sub_instruction:
        raise ValueError("empty sub-instruction")
    if lists is None:
        lists = default_word_lists()
    breakers = lists.breakers

    spans: list[EntitySpan] = []
    run: list[tuple[int, int, str]] = []

    def flush() -> None:
        if not run:
            return
        start = run[0][0]
        end = run[-1][1]
        text = sub_instruction[start:end]
        words = _strip_leading_determiners([w for _, _, w in run], lists)
        spans.append(EntitySpan(text=text, start=start, end=end,
                                normalized=" ".join(words)))
        run.clear()

    for match in _TOKEN_RE.finditer(sub_instruction):
        token = match.group()
        core = token.strip(_EDGE_PUNCT)
        if not core or core.lower() in breakers:
            flush()
            continue
        offset = match.start() + token.index(core)
        run.append((offset, offset + len(core), core.lower()))
    flush()
    return spans


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("undefined cosine: zero-norm embedding")
    return float(a.dot(b) / (na * nb))


@dataclass(frozen=True)
class EntityLandmarkPair:
    entity: EntitySpan
    landmark: Landmark
    similarity: float


def select_entity(provider, landmark: Landmark, candidates: list[EntitySpan],
                  scan: str, *, source: str = "crop") -> EntityLandmarkPair | None:
    """Match the landmark to the candidate phrase with the highest cosine.

    The landmark embeds from its panorama crop identity by default, or from
    its label string with source="label". Candidates the provider cannot
    embed are skipped with a warning; equal similarities fall to the
    earlier span.
    """
    if not candidates:
        return None
    if source == "crop":
        landmark_vec = provider.embed_image(scan, landmark.viewpoint_id,
                                            landmark.detection.bbox.as_list())
    elif source == "label":
        landmark_vec = provider.embed_text(landmark.label)
    else:
        raise ValueError(f"unknown embedding source {source!r}")

    best: EntityLandmarkPair | None = None
    best_key: tuple[float, int] | None = None
    for cand in candidates:
        try:
            vec = provider.embed_text(cand.text)
        except ProviderError as exc:
            logger.warning("skipping candidate %r: %s", cand.text, exc)
            continue
        sim = cosine_similarity(vec, landmark_vec)
        key = (sim, -cand.start)
        if best_key is None or key > best_key:
            best = EntityLandmarkPair(entity=cand, landmark=landmark,
                                      similarity=sim)
            best_key = key
    if best is None:
        logger.warning("no embeddable candidate for landmark %r", landmark.label)
    return best
