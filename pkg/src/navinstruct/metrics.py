"""Evaluation metrics: navigation (TL, NE, SR, SPL) and language (BLEU-4,
ROUGE-L, CIDEr, METEOR-lite).

Language metrics tokenize by lowercasing, stripping punctuation characters,
and splitting on whitespace. METEOR is a lite variant (exact + suffix-stem
unigram alignment, no synonym resources): scores are internally comparable,
not comparable to full METEOR implementations.
"""

from __future__ import annotations

import json
import math
import string
from collections import Counter
from dataclasses import dataclass

from .navgraph import Vec3

SUCCESS_RADIUS = 3.0

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    return text.lower().translate(_PUNCT_TABLE).split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# --------------------------------------------------------------------------- #
# corpora
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class EvalItem:
    id: str
    hyp: str
    refs: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.refs:
            raise ValueError("item needs at least one reference")


@dataclass(frozen=True)
class NavEpisode:
    id: str
    path: tuple[Vec3, ...]
    goal: Vec3
    geodesic: float

    def __post_init__(self) -> None:
        if not self.path:
            raise ValueError("episode path must be non-empty")
        if self.geodesic < 0:
            raise ValueError("geodesic distance must be non-negative")


def _read_jsonl(path: str):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc


def load_eval_corpus(path: str) -> list[EvalItem]:
    items = []
    for line_no, raw in _read_jsonl(path):
        if not isinstance(raw, dict) or not isinstance(raw.get("hyp"), str) \
                or not isinstance(raw.get("refs"), list) or not raw["refs"] \
                or not all(isinstance(r, str) for r in raw["refs"]):
            raise ValueError(f"{path}: line {line_no}: expected "
                             f"{{id, hyp, refs}} record")
        items.append(EvalItem(id=str(raw.get("id", line_no)), hyp=raw["hyp"],
                              refs=tuple(raw["refs"])))
    if not items:
        raise ValueError(f"{path}: empty corpus")
    return items


def load_episodes(path: str) -> list[NavEpisode]:
    episodes = []
    for line_no, raw in _read_jsonl(path):
        ok = (isinstance(raw, dict) and isinstance(raw.get("path"), list)
              and raw["path"]
              and all(isinstance(p, list) and len(p) == 3 for p in raw["path"])
              and isinstance(raw.get("goal"), list) and len(raw["goal"]) == 3
              and isinstance(raw.get("geodesic"), (int, float)))
        if not ok:
            raise ValueError(f"{path}: line {line_no}: expected "
                             f"{{id, path, goal, geodesic}} record")
        episodes.append(NavEpisode(
            id=str(raw.get("id", line_no)),
            path=tuple(Vec3(*map(float, p)) for p in raw["path"]),
            goal=Vec3(*map(float, raw["goal"])),
            geodesic=float(raw["geodesic"])))
    if not episodes:
        raise ValueError(f"{path}: empty episode file")
    return episodes


# --------------------------------------------------------------------------- #
# navigation metrics
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class NavSummary:
    tl: float
    ne: float
    sr: float
    spl: float

    def as_dict(self) -> dict:
        return {"TL": self.tl, "NE": self.ne, "SR": self.sr, "SPL": self.spl}


def navigation_metrics(episodes: list[NavEpisode]) -> NavSummary:
    """Mean trajectory length, navigation error, success rate, and SPL.

    Success means stopping within 3 m of the goal. SPL weights success by
    geodesic-over-taken length; a no-move episode that starts at its goal
    contributes its plain success value.
    """
    if not episodes:
        raise ValueError("no episodes")
    tl = ne = sr = spl = 0.0
    for ep in episodes:
        length = sum(a.distance_to(b) for a, b in zip(ep.path, ep.path[1:]))
        error = ep.path[-1].distance_to(ep.goal)
        success = 1.0 if error <= SUCCESS_RADIUS else 0.0
        if length == 0.0 and ep.geodesic == 0.0:
            weighted = success
        else:
            weighted = success * ep.geodesic / max(length, ep.geodesic)
        tl += length
        ne += error
        sr += success
        spl += weighted
    n = len(episodes)
    return NavSummary(tl=tl / n, ne=ne / n, sr=sr / n, spl=spl / n)


# --------------------------------------------------------------------------- #
# BLEU-4
# --------------------------------------------------------------------------- #

def bleu4(corpus: list[EvalItem], smoothing: bool = False) -> float:
    """Corpus BLEU with uniform 1-4-gram weights, scaled by 100.

    No smoothing by default: a missing n-gram order zeroes the score.
    With smoothing=True, orders above 1 get add-one counts.
    """
    if not corpus:
        raise ValueError("empty corpus")
    max_n = 4
    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for item in corpus:
        hyp = tokenize(item.hyp)
        refs = [tokenize(r) for r in item.refs]
        hyp_len += len(hyp)
        ref_len += min((len(r) for r in refs),
                       key=lambda L: (abs(L - len(hyp)), L))
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp, n)
            if not hyp_counts:
                continue
            max_ref: Counter = Counter()
            for ref in refs:
                for gram, count in _ngrams(ref, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            totals[n - 1] += sum(hyp_counts.values())
            clipped[n - 1] += sum(min(count, max_ref[gram])
                                  for gram, count in hyp_counts.items())
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        num, den = clipped[n - 1], totals[n - 1]
        if smoothing and n > 1:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return 0.0
        log_sum += math.log(num / den)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_sum / max_n) * 100.0


# --------------------------------------------------------------------------- #
# ROUGE-L
# --------------------------------------------------------------------------- #

def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok in a:
        cur = [0] * (len(b) + 1)
        for j, other in enumerate(b, start=1):
            if tok == other:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(corpus: list[EvalItem], beta: float = 1.2) -> float:
    """Mean per-item LCS F-measure (recall-weighted), max over references, x100."""
    if not corpus:
        raise ValueError("empty corpus")
    total = 0.0
    for item in corpus:
        hyp = tokenize(item.hyp)
        best = 0.0
        for ref_text in item.refs:
            ref = tokenize(ref_text)
            lcs = _lcs_length(hyp, ref)
            if lcs == 0:
                continue
            precision = lcs / len(hyp)
            recall = lcs / len(ref)
            f = ((1 + beta ** 2) * precision * recall
                 / (recall + beta ** 2 * precision))
            best = max(best, f)
        total += best
    return total / len(corpus) * 100.0


# --------------------------------------------------------------------------- #
# CIDEr
# --------------------------------------------------------------------------- #

def _weight_cosine(a: dict, b: dict) -> float:
    if not a or not b:
        return 0.0
    dot = sum(w * b[g] for g, w in a.items() if g in b)
    norm_a = math.sqrt(sum(w * w for w in a.values()))
    norm_b = math.sqrt(sum(w * w for w in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def cider(corpus: list[EvalItem]) -> float:
    """Consensus tf-idf metric over 1-4-grams, cosine per order, x10.

    Document frequencies come from this run's reference sets, so scores are
    self-contained to the evaluated corpus. Base variant: no length penalty.
    """
    if not corpus:
        raise ValueError("empty corpus")
    max_n = 4
    df: Counter = Counter()
    ref_grams: list[list[list[Counter]]] = []
    for item in corpus:
        per_ref = []
        seen: set = set()
        for ref_text in item.refs:
            ref = tokenize(ref_text)
            counts = [_ngrams(ref, n) for n in range(1, max_n + 1)]
            per_ref.append(counts)
            for c in counts:
                seen.update(c)
        ref_grams.append(per_ref)
        df.update(seen)
    n_items = len(corpus)
    idf = {g: math.log(n_items / max(1.0, df[g])) for g in df}

    def weigh(counts: Counter) -> dict:
        return {g: c * idf.get(g, math.log(n_items)) for g, c in counts.items()}

    total = 0.0
    for item, per_ref in zip(corpus, ref_grams):
        hyp = tokenize(item.hyp)
        item_score = 0.0
        for n in range(1, max_n + 1):
            hyp_vec = weigh(_ngrams(hyp, n))
            sim = 0.0
            for counts in per_ref:
                sim += _weight_cosine(hyp_vec, weigh(counts[n - 1]))
            item_score += sim / len(per_ref)
        total += item_score / max_n
    return total / n_items * 10.0


# --------------------------------------------------------------------------- #
# METEOR-lite
# --------------------------------------------------------------------------- #

_STEM_SUFFIXES = ("ing", "est", "ed", "es", "ly", "s")


def _stem(token: str) -> str:
    for suffix in _STEM_SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[:-len(suffix)]
    return token


def _align(hyp: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Unigram alignment: exact matches first, then stem matches, in order."""
    used = [False] * len(ref)
    pairs = []
    unmatched = []
    for hi, tok in enumerate(hyp):
        for ri, other in enumerate(ref):
            if not used[ri] and tok == other:
                used[ri] = True
                pairs.append((hi, ri))
                break
        else:
            unmatched.append(hi)
    for hi in unmatched:
        stem = _stem(hyp[hi])
        for ri, other in enumerate(ref):
            if not used[ri] and stem == _stem(other):
                used[ri] = True
                pairs.append((hi, ri))
                break
    pairs.sort()
    return pairs


def _meteor_item(hyp: list[str], ref: list[str]) -> float:
    if not hyp or not ref:
        return 0.0
    pairs = _align(hyp, ref)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(hyp)
    recall = matches / len(ref)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    chunks = 1
    for (h0, r0), (h1, r1) in zip(pairs, pairs[1:]):
        if h1 != h0 + 1 or r1 != r0 + 1:
            chunks += 1
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty)


def meteor_lite(corpus: list[EvalItem]) -> float:
    """Exact + stem unigram alignment METEOR variant, recall weight 9, x100."""
    if not corpus:
        raise ValueError("empty corpus")
    total = 0.0
    for item in corpus:
        hyp = tokenize(item.hyp)
        total += max(_meteor_item(hyp, tokenize(r)) for r in item.refs)
    return total / len(corpus) * 100.0


def language_metrics(corpus: list[EvalItem]) -> dict:
    return {
        "BLEU-4": bleu4(corpus),
        "METEOR-lite": meteor_lite(corpus),
        "ROUGE-L": rouge_l(corpus),
        "CIDEr": cider(corpus),
    }
