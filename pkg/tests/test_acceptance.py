"""Acceptance gate: eleven numbered criteria, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they
print. Every criterion carries a wall-clock budget; exceeding it fails the
criterion even if the checks themselves pass.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import time
from contextlib import contextmanager

import numpy as np
from click.testing import CliRunner

from navinstruct.assembly import (SubPair, dataset_statistics,
                                  integrate_sub_pairs, read_records,
                                  validate_dataset)
from navinstruct.chunking import (ChunkKind, HorizontalClass, VerticalClass,
                                  chunk_trajectory, classify_horizontal,
                                  classify_vertical)
from navinstruct.cli import main as cli_main
from navinstruct.entities import (EntityLandmarkPair, EntitySpan,
                                  extract_entity_candidates, select_entity)
from navinstruct.landmarks import (BBox, CategoryLibrary, Detection, Landmark,
                                   bbox_heading_bounds, detection_sector,
                                   select_landmark)
from navinstruct.metrics import (EvalItem, NavEpisode, bleu4, cider,
                                 navigation_metrics, rouge_l, tokenize)
from navinstruct.navgraph import (Vec3, load_graph, normalize_angle,
                                  sample_trajectories)
from navinstruct.providers import ToyLM
from navinstruct.speaker import DecodingParams, contrastive_loss, decode
from navinstruct.templating import build_template_library

from conftest import fixtures_dir as _fixtures_dir_fixture  # noqa: F401
from conftest import random_toy_lm, repetition_toy_lm
from test_metrics import lcs_reference, reference_cider


@contextmanager
def criterion(num: int, name: str, budget: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - start
        print(f"ACCEPTANCE {num:02d} {name}: FAIL ({elapsed:.2f}s)",
              flush=True)
        raise
    elapsed = time.perf_counter() - start
    verdict = "PASS" if elapsed < budget else "FAIL"
    print(f"ACCEPTANCE {num:02d} {name}: {verdict} "
          f"({elapsed:.2f}s, budget {budget:.0f}s)", flush=True)
    assert elapsed < budget, f"{name}: {elapsed:.2f}s exceeded {budget}s budget"


# --------------------------------------------------------------------------- #
# 1. template library
# --------------------------------------------------------------------------- #

def test_criterion_01_template_library():
    with criterion(1, "template library", 1.0):
        library = build_template_library()
        assert len(library) == 108
        keys = {(k.horizontal, k.vertical, k.relation)
                for k in library.entries}
        expected = set(itertools.product(HorizontalClass, VerticalClass,
                                         list(type(next(iter(keys))[2]))))
        assert keys == expected
        for text in library.entries.values():
            assert text.count("{landmark}") == 1


# --------------------------------------------------------------------------- #
# 2. classification totality
# --------------------------------------------------------------------------- #

def test_criterion_02_classification_totality():
    with criterion(2, "classification totality", 5.0):
        seen_h = set()
        for i in range(-1799, 1801):  # 0.1-degree grid over (-180, 180]
            cls = classify_horizontal(i / 10.0)
            assert isinstance(cls, HorizontalClass)
            seen_h.add(cls)
        assert seen_h == set(HorizontalClass)

        seen_v = set()
        for i in range(-500, 501):  # centimeter grid over [-5, 5] m
            cls = classify_vertical(i / 100.0)
            assert isinstance(cls, VerticalClass)
            seen_v.add(cls)
        assert seen_v == set(VerticalClass)

        # Band edges sit in the band they open.
        edges = {15.0: HorizontalClass.SLIGHT_RIGHT,
                 45.0: HorizontalClass.MODERATE_RIGHT,
                 75.0: HorizontalClass.HARD_RIGHT,
                 105.0: HorizontalClass.SLIGHT_RIGHT_REAR,
                 135.0: HorizontalClass.SHARP_RIGHT_REAR,
                 165.0: HorizontalClass.BACKWARD,
                 -15.0: HorizontalClass.SLIGHT_LEFT,
                 -45.0: HorizontalClass.MODERATE_LEFT,
                 -75.0: HorizontalClass.HARD_LEFT,
                 -105.0: HorizontalClass.SLIGHT_LEFT_REAR,
                 -135.0: HorizontalClass.SHARP_LEFT_REAR,
                 -165.0: HorizontalClass.BACKWARD}
        for angle, expected in edges.items():
            assert classify_horizontal(angle) is expected, angle
        assert classify_vertical(0.19) is VerticalClass.LEVEL
        assert classify_vertical(-0.19) is VerticalClass.LEVEL
        assert classify_vertical(0.2) is VerticalClass.UPWARD
        assert classify_vertical(-0.2) is VerticalClass.DOWNWARD


# --------------------------------------------------------------------------- #
# 3. chunking partition property
# --------------------------------------------------------------------------- #

def test_criterion_03_chunking_partition(fixtures_dir):
    with criterion(3, "chunking partition", 10.0):
        graph = load_graph(str(fixtures_dir / "grid10.json"))
        trajectories = sample_trajectories(graph, 2, 9, seed=123, count=1000)
        assert len(trajectories) == 1000
        for traj in trajectories:
            chunks = chunk_trajectory(traj)
            assert chunks[0].start == 0
            assert chunks[-1].end == traj.steps
            for left, right in zip(chunks, chunks[1:]):
                assert left.end == right.start
                assert not (left.kind is ChunkKind.STRAIGHT_RUN
                            and right.kind is ChunkKind.STRAIGHT_RUN)
            for chunk in chunks:
                if chunk.kind is ChunkKind.TURN:
                    assert chunk.end - chunk.start == 1
                    assert chunk.horizontal is not HorizontalClass.STRAIGHT
                else:
                    span = traj.deltas[chunk.start:chunk.end]
                    assert all(classify_horizontal(d.turn_angle)
                               is HorizontalClass.STRAIGHT for d in span)


# --------------------------------------------------------------------------- #
# 4. contrastive search degeneracy
# --------------------------------------------------------------------------- #

def _greedy_tokens(model: dict, max_len: int) -> list[str]:
    """Independent argmax walk over the raw bigram table."""
    index = {t: i for i, t in enumerate(model["tokens"])}
    out: list[str] = []
    prev = model["bos"]
    for _ in range(max_len):
        row = model["bigram"][prev]
        token = min(row, key=lambda t: (-row[t], index[t]))
        if token == model["eos"]:
            break
        out.append(token)
        prev = token
    return out


def test_criterion_04_search_degeneracy():
    with criterion(4, "search degeneracy at alpha=0", 10.0):
        params = DecodingParams(k=4, alpha=0.0, max_len=16)
        for seed in range(200):
            model = random_toy_lm(seed)
            lm = ToyLM(model)
            vocab = lm.vocabulary
            result = decode("", "", [], lm, vocab, params)
            expected = _greedy_tokens(model, params.max_len)
            assert [vocab.tokens[t] for t in result.token_ids] == expected, seed


# --------------------------------------------------------------------------- #
# 5. anti-repetition
# --------------------------------------------------------------------------- #

def _longest_run(token_ids) -> int:
    return max((len(list(g)) for _, g in itertools.groupby(token_ids)),
               default=0)


def test_criterion_05_anti_repetition():
    with criterion(5, "degeneration penalty", 1.0):
        lm = ToyLM(repetition_toy_lm())
        vocab = lm.vocabulary
        greedy = decode("", "", [], lm, vocab,
                        DecodingParams(k=3, alpha=0.0, max_len=12))
        assert _longest_run(greedy.token_ids) >= 3
        penalized = decode("", "", [], lm, vocab,
                           DecodingParams(k=3, alpha=0.6, max_len=12))
        assert penalized.token_ids
        assert _longest_run(penalized.token_ids) < 3


# --------------------------------------------------------------------------- #
# 6. loss oracles
# --------------------------------------------------------------------------- #

def _loss_oracle(reps, rho: float) -> float:
    def cos(a, b):
        return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))

    n = len(reps)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += max(0.0, rho - cos(reps[i], reps[i])
                             + cos(reps[i], reps[j]))
    return total / (n * (n - 1))


def test_criterion_06_loss_oracles():
    with criterion(6, "contrastive loss oracle", 5.0):
        rng = random.Random(29)
        for _ in range(100):
            n = rng.randint(2, 8)
            dim = rng.randint(2, 5)
            reps = []
            for _ in range(n):
                vec = np.array([rng.uniform(-2.0, 2.0) for _ in range(dim)])
                if np.linalg.norm(vec) < 1e-6:
                    vec[0] = 1.0
                reps.append(vec)
            rho = rng.uniform(-1.0, 1.0)
            assert math.isclose(contrastive_loss(reps, rho),
                                _loss_oracle(reps, rho), abs_tol=1e-12)
        same = [np.array([1.0, 2.0, 3.0])] * 4
        assert contrastive_loss(same, 0.5) == 0.5
        ortho = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        assert contrastive_loss(ortho, 0.0) == 0.0


# --------------------------------------------------------------------------- #
# 7. span integrity
# --------------------------------------------------------------------------- #

_WORDS = ("walk", "to", "the", "wooden", "chair", "past", "a", "small",
          "table", "turn", "left", "and", "go", "up", "stairs", "door")


def _random_sub_pair(rng: random.Random, step: int) -> SubPair:
    words = [rng.choice(_WORDS) for _ in range(rng.randint(1, 6))]
    segment = " ".join(words)
    entity = None
    if rng.random() < 0.6:
        i0 = rng.randrange(len(words))
        i1 = rng.randrange(i0, len(words))
        start = len(" ".join(words[:i0])) + (1 if i0 else 0)
        text = " ".join(words[i0:i1 + 1])
        span = EntitySpan(text=text, start=start, end=start + len(text),
                          normalized=text.lower())
        landmark = Landmark(viewpoint_id=f"vp{step}",
                            detection=Detection("chair",
                                                BBox(0.0, 0.0, 10.0, 10.0),
                                                0.5),
                            heading_bounds=(0.0, 1.0))
        entity = EntityLandmarkPair(entity=span, landmark=landmark,
                                    similarity=rng.random())
    return SubPair(steps=(step, step + 1), sub_instruction=segment,
                   landmark=entity.landmark if entity else None,
                   entity=entity)


def test_criterion_07_span_integrity():
    with criterion(7, "span integrity", 30.0):
        rng = random.Random(41)
        joiners = (". ", ", ", "; ")
        for _ in range(10000):
            pairs = [_random_sub_pair(rng, step)
                     for step in range(rng.randint(1, 5))]
            result = integrate_sub_pairs(pairs, rng.choice(joiners))
            for sub in result.sub_pairs:
                lo, hi = sub.text_span
                assert 0 <= lo <= hi <= len(result.instruction)
                if sub.entity_span is not None:
                    s, e = sub.entity_span
                    assert lo <= s <= e <= hi
                    assert result.instruction[s:e] == sub.entity_text


# --------------------------------------------------------------------------- #
# 8. metric sanity
# --------------------------------------------------------------------------- #

def _rouge_oracle(corpus, beta: float = 1.2) -> float:
    total = 0.0
    for item in corpus:
        hyp = tokenize(item.hyp)
        best = 0.0
        for ref in item.refs:
            ref_toks = tokenize(ref)
            lcs = lcs_reference(tuple(hyp), tuple(ref_toks))
            if lcs == 0:
                continue
            p = lcs / len(hyp)
            r = lcs / len(ref_toks)
            best = max(best, (1 + beta ** 2) * p * r / (r + beta ** 2 * p))
        total += best
    return 100.0 * total / len(corpus)


def _random_corpus(rng: random.Random, n_items: int):
    vocab = ["walk", "turn", "left", "right", "chair", "door", "go", "stairs",
             "past", "the"]
    items = []
    for i in range(n_items):
        hyp = " ".join(rng.choice(vocab) for _ in range(rng.randint(3, 9)))
        refs = [" ".join(rng.choice(vocab) for _ in range(rng.randint(3, 9)))
                for _ in range(rng.randint(1, 3))]
        items.append(EvalItem(id=f"i{i}", hyp=hyp, refs=tuple(refs)))
    return items


def test_criterion_08_metric_sanity():
    with criterion(8, "metric sanity", 30.0):
        identity = [EvalItem(id=f"i{k}", hyp=text, refs=(text,))
                    for k, text in enumerate(
                        ["walk to the wooden chair in the corner",
                         "turn left and go past the open door"])]
        assert bleu4(identity) == 100.0

        rng = random.Random(53)
        for _ in range(1000):
            episodes = []
            for k in range(rng.randint(1, 8)):
                if rng.random() < 0.05:
                    point = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), 0.0)
                    episodes.append(NavEpisode(id=f"d{k}", path=(point,),
                                               goal=point, geodesic=0.0))
                    continue
                path = tuple(Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10),
                                  rng.uniform(-1, 1))
                             for _ in range(rng.randint(2, 6)))
                goal = Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10), 0.0)
                episodes.append(NavEpisode(id=f"e{k}", path=path, goal=goal,
                                           geodesic=rng.uniform(0.5, 20.0)))
            summary = navigation_metrics(episodes)
            assert summary.spl <= summary.sr + 1e-12

        at_goal = NavEpisode(id="z", path=(Vec3(0, 0, 0), Vec3(3, 4, 0)),
                             goal=Vec3(3, 4, 0), geodesic=5.0)
        assert navigation_metrics([at_goal]).sr == 1.0

        for seed in range(10):
            corpus = _random_corpus(random.Random(seed), n_items=4)
            assert math.isclose(cider(corpus), reference_cider(corpus),
                                abs_tol=1e-4)
            assert math.isclose(rouge_l(corpus), _rouge_oracle(corpus),
                                abs_tol=1e-6)


# --------------------------------------------------------------------------- #
# 9. landmark selection
# --------------------------------------------------------------------------- #

class _InlineDetector:
    def __init__(self, detections):
        self._detections = list(detections)

    def detect(self, scan, viewpoint_id, categories, pano_width, pano_height):
        wanted = {c.lower() for c in categories}
        return [d for d in self._detections if d.label in wanted]


def _wrap_180(value: float) -> float:
    wrapped = math.fmod(value + 180.0, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    return wrapped - 180.0


def test_criterion_09_landmark_selection():
    labels = ["chair", "table", "door", "window", "plant"]
    library = CategoryLibrary({"s": labels})
    width = 1024.0
    with criterion(9, "landmark selection", 10.0):
        rng = random.Random(61)
        for _ in range(500):
            detections = []
            for _ in range(rng.randint(2, 6)):
                x_min = rng.uniform(0.0, width - 2.0)
                x_max = rng.uniform(x_min + 1.0, width)
                detections.append(Detection(rng.choice(labels),
                                            BBox(x_min, 100.0, x_max, 300.0),
                                            round(rng.uniform(0.1, 1.0), 2)))
            center = rng.uniform(-180.0, 180.0)
            sector = detection_sector(rng.uniform(-180.0, 180.0))

            picked = select_landmark(_InlineDetector(detections), "s", "vp",
                                     sector, library,
                                     pano_center_heading=center)

            # Independent sector filter from the linear pixel-to-heading map.
            survivors = []
            for det in detections:
                column = (det.bbox.x_min + det.bbox.x_max) / 2.0
                heading = _wrap_180(center + column / width * 360.0 - 180.0)
                if -90.0 < normalize_angle(heading - sector.center) <= 90.0:
                    survivors.append(det)

            if not survivors:
                assert picked is None
                continue
            expected = min(survivors,
                           key=lambda d: (-d.confidence, d.label,
                                          d.bbox.x_min))
            assert picked is not None
            assert picked.detection == expected

            shuffled = detections[:]
            rng.shuffle(shuffled)
            again = select_landmark(_InlineDetector(shuffled), "s", "vp",
                                    sector, library,
                                    pano_center_heading=center)
            assert again is not None and again.detection == expected

            chi_min = _wrap_180(center + expected.bbox.x_min / width * 360.0
                                - 180.0)
            chi_max = chi_min + (expected.bbox.x_max
                                 - expected.bbox.x_min) * 360.0 / width
            got = bbox_heading_bounds(expected.bbox, width, center)
            assert math.isclose(got[0], chi_min, abs_tol=1e-9)
            assert math.isclose(got[1], chi_max, abs_tol=1e-9)
            assert picked.heading_bounds == got


# --------------------------------------------------------------------------- #
# 10. end-to-end determinism
# --------------------------------------------------------------------------- #

def test_criterion_10_end_to_end_determinism(fixtures_dir, tmp_path):
    with criterion(10, "end-to-end determinism", 30.0):
        config = {
            "graph": str(fixtures_dir / "grid10.json"),
            "categories": str(fixtures_dir / "categories.json"),
            "providers": {
                "detector": {"fixture": str(fixtures_dir / "detections.json")},
                "lm": {"fixture": str(fixtures_dir / "toy_lm.json")},
                "embedding": {"fixture": str(fixtures_dir
                                             / "embeddings.json")},
            },
            "count": 5,
            "seed": 11,
            "variants": [{"alpha": 0.3, "k": 4}, {"alpha": 0.7, "k": 8}],
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        out = tmp_path / "e2e.jsonl"

        runs = []
        for _ in range(3):
            result = CliRunner().invoke(cli_main, [
                "generate", "--config", str(config_path),
                "--out", str(out), "--force"])
            assert result.exit_code == 0, result.output
            runs.append(out.read_bytes())
        assert runs[0] == runs[1] == runs[2]

        graph = load_graph(str(fixtures_dir / "grid10.json"))
        assert validate_dataset(str(out), graph) == []

        records = read_records(str(out))
        stats = dataset_statistics(records)
        assert stats.trajectories == 5
        assert stats.instructions == 10
        assert stats.sub_pairs == sum(len(r["sub_pairs"]) for r in records)
        assert stats.entity_pairs == sum(
            1 for r in records for sp in r["sub_pairs"] if sp.get("entity"))


# --------------------------------------------------------------------------- #
# 11. entity selection
# --------------------------------------------------------------------------- #

class _InlineEmbedding:
    def __init__(self, text: dict, image_vec, scale: float = 1.0):
        self._text = text
        self._image_vec = image_vec
        self._scale = scale

    def embed_text(self, phrase: str):
        return np.array(self._text[phrase]) * self._scale

    def embed_image(self, scan, viewpoint_id, bbox):
        return np.array(self._image_vec) * self._scale


def test_criterion_11_entity_selection():
    with criterion(11, "entity selection", 5.0):
        landmark = Landmark(viewpoint_id="vp",
                            detection=Detection("chair",
                                                BBox(1.0, 2.0, 3.0, 4.0),
                                                0.8),
                            heading_bounds=(-5.0, 5.0))
        candidates = extract_entity_candidates(
            "walk past the small table to the wooden chair")
        assert [c.normalized for c in candidates] == ["small table",
                                                      "wooden chair"]
        text_vecs = {"small table": [1.0, 0.2, 0.0],
                     "wooden chair": [0.9, 0.05, 0.1]}
        image_vec = [1.0, 0.0, 0.1]
        base = select_entity(_InlineEmbedding(text_vecs, image_vec), landmark,
                             candidates, "s")
        assert base is not None
        for scale in (17.0, 0.25, 3.5):
            scaled = select_entity(_InlineEmbedding(text_vecs, image_vec,
                                                    scale),
                                   landmark, candidates, "s")
            assert scaled is not None
            assert scaled.entity == base.entity
            assert math.isclose(scaled.similarity, base.similarity,
                                rel_tol=1e-9)

        # Identical similarities resolve to the earlier span, repeatably.
        tied = {"small table": [1.0, 0.0, 0.0],
                "wooden chair": [1.0, 0.0, 0.0]}
        for _ in range(5):
            pick = select_entity(_InlineEmbedding(tied, [2.0, 0.0, 0.0]),
                                 landmark, candidates, "s")
            assert pick is not None
            assert pick.entity.normalized == "small table"
