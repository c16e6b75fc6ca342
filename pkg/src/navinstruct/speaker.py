"""Instruction rewriting: losses, contrastive search, and provider-driven decoding."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PROMPT = "Manual instructions to rewrite this path in the style of R2R instructions"

VIEWS_PER_PANORAMA = 36


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token strings with reserved begin/end sentinels."""

    tokens: tuple[str, ...]
    bos_id: int
    eos_id: int

    def __post_init__(self) -> None:
        if len(self.tokens) < 2:
            raise ValueError("vocabulary needs at least 2 tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        for name, idx in (("bos_id", self.bos_id), ("eos_id", self.eos_id)):
            if not 0 <= idx < len(self.tokens):
                raise ValueError(f"{name} out of range")

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def id(self, token: str) -> int:
        return self.tokens.index(token)

    def detokenize(self, token_ids: Sequence[int]) -> str:
        words = [self.tokens[i] for i in token_ids
                 if i not in (self.bos_id, self.eos_id)]
        return " ".join(words)


@dataclass(frozen=True)
class Candidate:
    """One top-k continuation: token id, probability, representation vector."""

    token_id: int
    p: float
    rep: np.ndarray


@dataclass(frozen=True)
class DecodingParams:
    k: int
    alpha: float
    max_len: int = 24
    rho: float = 0.5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")


@dataclass(frozen=True)
class PanoFeatures:
    """36 view vectors of one viewpoint plus the index of the oriented view."""

    views: np.ndarray
    oriented_index: int

    def __post_init__(self) -> None:
        if self.views.ndim != 2 or self.views.shape[0] != VIEWS_PER_PANORAMA:
            raise ValueError(f"expected {VIEWS_PER_PANORAMA} view vectors, "
                             f"got shape {self.views.shape}")
        if not 0 <= self.oriented_index < VIEWS_PER_PANORAMA:
            raise ValueError("oriented_index out of range")
        if not np.isfinite(self.views).all():
            raise ValueError("non-finite view feature")


def aggregate_panorama(pano: PanoFeatures) -> np.ndarray:
    """Mean-pool the 36 views and add the oriented view as a residual."""
    return pano.views.mean(axis=0) + pano.views[pano.oriented_index]


# --------------------------------------------------------------------------- #
# losses
# --------------------------------------------------------------------------- #

def mle_loss(step_probs: Sequence[Mapping[int, float] | Sequence[float]],
             targets: Sequence[int]) -> float:
    """Negative mean log-probability of the target tokens."""
    if len(step_probs) != len(targets):
        raise ValueError("step_probs and targets must have equal length")
    if not targets:
        raise ValueError("empty target sequence")
    total = 0.0
    for t, (dist, target) in enumerate(zip(step_probs, targets)):
        if isinstance(dist, Mapping):
            p = dist.get(target, 0.0)
        else:
            p = dist[target]
        if p <= 0.0:
            raise ValueError(f"infinite loss: zero probability for target "
                             f"{target} at step {t}")
        if p > 1.0:
            raise ValueError(f"probability {p} above 1 at step {t}")
        total += math.log(p)
    return -total / len(targets)


def _unit_rows(reps: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(reps, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(f"undefined cosine: zero-norm {what}")
    return reps / norms[:, None]


def contrastive_loss(reps: Sequence[np.ndarray], rho: float) -> float:
    """Mean margin violation over ordered pairs of distinct token positions.

    Each pair (i, j) contributes max(0, rho - 1 + cos(r_i, r_j)), the
    self-similarity term being identically 1 under cosine.
    """
    if len(reps) < 2:
        raise ValueError("need at least 2 token representations")
    matrix = np.asarray(reps, dtype=float)
    unit = _unit_rows(matrix, "token representation")
    cos = unit @ unit.T
    terms = np.maximum(0.0, rho - 1.0 + cos)
    np.fill_diagonal(terms, 0.0)
    n = len(reps)
    return float(terms.sum() / (n * (n - 1)))


def simctg_loss(mle: float, cl: float) -> float:
    if not (math.isfinite(mle) and math.isfinite(cl)):
        raise ValueError("loss terms must be finite")
    return mle + cl


# --------------------------------------------------------------------------- #
# decoding
# --------------------------------------------------------------------------- #

def contrastive_search_step(candidates: Sequence[Candidate],
                            history_reps: Sequence[np.ndarray],
                            alpha: float) -> Candidate:
    """Pick the candidate maximizing confidence minus degeneration penalty.

    The penalty is the maximum cosine similarity to any already-generated
    token representation; with empty history it is 0. Ties break toward
    higher probability, then lower token id.
    """
    if not candidates:
        raise ValueError("empty candidate set")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    cand_matrix = np.asarray([c.rep for c in candidates], dtype=float)
    cand_unit = _unit_rows(cand_matrix, "candidate representation")
    if history_reps:
        hist_unit = _unit_rows(np.asarray(history_reps, dtype=float),
                               "history representation")
        penalties = (cand_unit @ hist_unit.T).max(axis=1)
    else:
        penalties = np.zeros(len(candidates))
    best = None
    best_key = None
    for cand, penalty in zip(candidates, penalties):
        key = ((1.0 - alpha) * cand.p - alpha * float(penalty),
               cand.p, -cand.token_id)
        if best_key is None or key > best_key:
            best, best_key = cand, key
    assert best is not None
    return best


@dataclass(frozen=True)
class GeneratedInstruction:
    text: str
    token_ids: tuple[int, ...]
    truncated: bool
    params: DecodingParams


def decode(prompt: str, crafted_text: str, panoramas: Sequence[PanoFeatures],
           provider, vocab: Vocabulary,
           params: DecodingParams) -> GeneratedInstruction:
    """Generate a sub-instruction by iterated contrastive search.

    The conditioning blob forwarded to the provider carries the prompt, the
    crafted text, and one aggregated vector per panorama; the pipeline itself
    never interprets it. Decoding stops at the end sentinel or, with a
    truncation flag, at max_len tokens.
    """
    cond = {
        "prompt": prompt,
        "crafted": crafted_text,
        "panoramas": [aggregate_panorama(p).tolist() for p in panoramas],
    }
    context = [vocab.bos_id]
    history_reps: list[np.ndarray] = []
    out_ids: list[int] = []
    truncated = True
    for _ in range(params.max_len):
        candidates = provider.lm_step(context, cond, params.k)
        chosen = contrastive_search_step(candidates, history_reps, params.alpha)
        if chosen.token_id == vocab.eos_id:
            truncated = False
            break
        out_ids.append(chosen.token_id)
        history_reps.append(chosen.rep)
        context.append(chosen.token_id)
    text = vocab.detokenize(out_ids)
    return GeneratedInstruction(text=text, token_ids=tuple(out_ids),
                                truncated=truncated, params=params)
