"""End-to-end dataset generation: config, provider wiring, record building."""

from __future__ import annotations

import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, assembly, entities, landmarks, navgraph, speaker
from .chunking import SubTrajectory, chunk_trajectory
from .entities import WordLists, extract_entity_candidates, select_entity
from .landmarks import CategoryLibrary, Landmark, detection_sector, load_category_library
from .navgraph import ConnectivityGraph, Trajectory, load_graph
from .providers import MockDetector, MockEmbedding, ProviderError, SubprocessProvider, ToyLM
from .speaker import DecodingParams, PanoFeatures, Vocabulary, decode
from .templating import TemplateLibrary, build_template_library, craft_sub_instruction

logger = logging.getLogger(__name__)

DEFAULT_VARIANTS: tuple[tuple[float, int], ...] = (
    (0.3, 4), (0.3, 8), (0.5, 4), (0.5, 8), (0.7, 4), (0.7, 8),
)

PANO_FEATURE_DIM = 4


@dataclass
class PipelineConfig:
    graphs: list[str]
    categories: str
    providers: dict[str, dict]
    count: int = 5
    min_steps: int = 5
    max_steps: int = 7
    seed: int = 0
    variants: list[tuple[float, int]] = field(default_factory=lambda: list(DEFAULT_VARIANTS))
    wordlists: str | None = None
    landmark_anchor: str = "exit_waypoint"
    entity_embedding: str = "crop"
    prompt: str = speaker.PROMPT
    max_len: int = 24
    joiner: str = assembly.DEFAULT_JOINER
    pano_width: float = 1024.0
    pano_height: float = 1024.0
    pano_center_heading: float = 0.0
    min_length: float | None = None
    max_length: float | None = None
    out: str = "dataset.jsonl"

    def __post_init__(self) -> None:
        if not self.graphs:
            raise ValueError("config: at least one graph path required")
        if not self.variants:
            raise ValueError("config: at least one decoding variant required")
        for alpha, k in self.variants:
            DecodingParams(k=k, alpha=alpha, max_len=self.max_len)
        if self.count < 0:
            raise ValueError("config: 'count' must be non-negative")
        if self.landmark_anchor not in ("exit_waypoint", "detection_waypoint"):
            raise ValueError(f"config: unknown landmark_anchor "
                             f"{self.landmark_anchor!r}")
        if self.entity_embedding not in ("crop", "label"):
            raise ValueError(f"config: unknown entity_embedding "
                             f"{self.entity_embedding!r}")
        for name in ("detector", "lm", "embedding"):
            spec = self.providers.get(name)
            if not isinstance(spec, dict) or not ("fixture" in spec or "command" in spec):
                raise ValueError(f"config: provider {name!r} needs a "
                                 f"'fixture' path or a 'command' argv list")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> PipelineConfig:
        if not isinstance(raw, dict):
            raise ValueError("config: top level must be an object")
        base = base_dir or Path.cwd()

        def resolve(p: str) -> str:
            return str((base / p).resolve()) if p else p

        graphs = raw.get("graphs")
        if graphs is None and "graph" in raw:
            graphs = [raw["graph"]]
        if not isinstance(graphs, list) or not all(isinstance(g, str) for g in graphs):
            raise ValueError("config: field 'graph'/'graphs' must give path(s)")

        variants_raw = raw.get("variants")
        if variants_raw is None:
            variants = list(DEFAULT_VARIANTS)
        else:
            if not isinstance(variants_raw, list):
                raise ValueError("config: field 'variants' must be a list")
            variants = []
            for i, v in enumerate(variants_raw):
                if not isinstance(v, dict) or "alpha" not in v or "k" not in v:
                    raise ValueError(f"config: variants[{i}] needs 'alpha' and 'k'")
                variants.append((float(v["alpha"]), int(v["k"])))

        providers = {}
        for name, spec in (raw.get("providers") or {}).items():
            spec = dict(spec)
            if "fixture" in spec:
                spec["fixture"] = resolve(spec["fixture"])
            providers[name] = spec

        length_filter = raw.get("length_filter") or {}
        kwargs = {
            "graphs": [resolve(g) for g in graphs],
            "categories": resolve(raw.get("categories", "")),
            "providers": providers,
            "min_length": length_filter.get("min"),
            "max_length": length_filter.get("max"),
            "variants": variants,
        }
        if raw.get("wordlists"):
            kwargs["wordlists"] = resolve(raw["wordlists"])
        for name in ("count", "min_steps", "max_steps", "seed",
                     "landmark_anchor", "entity_embedding", "prompt",
                     "max_len", "joiner", "pano_width", "pano_height",
                     "pano_center_heading", "out"):
            if name in raw:
                kwargs[name] = raw[name]
        if not kwargs["categories"]:
            raise ValueError("config: field 'categories' path required")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> PipelineConfig:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"config {path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw, base_dir=Path(path).resolve().parent)

    def canonical_dict(self) -> dict:
        return {
            "graphs": self.graphs,
            "categories": self.categories,
            "providers": self.providers,
            "count": self.count,
            "min_steps": self.min_steps,
            "max_steps": self.max_steps,
            "seed": self.seed,
            "variants": [{"alpha": a, "k": k} for a, k in self.variants],
            "wordlists": self.wordlists,
            "landmark_anchor": self.landmark_anchor,
            "entity_embedding": self.entity_embedding,
            "prompt": self.prompt,
            "max_len": self.max_len,
            "joiner": self.joiner,
            "pano_width": self.pano_width,
            "pano_height": self.pano_height,
            "pano_center_heading": self.pano_center_heading,
            "min_length": self.min_length,
            "max_length": self.max_length,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------- #
# providers
# --------------------------------------------------------------------------- #

@dataclass
class ProviderSet:
    detector: object
    lm: object
    embedding: object
    vocabulary: Vocabulary
    _subprocesses: list[SubprocessProvider] = field(default_factory=list)

    def identities(self) -> dict:
        return {name: getattr(self, name).identity()
                for name in ("detector", "lm", "embedding")}

    def close(self) -> None:
        for proc in self._subprocesses:
            try:
                proc.close()
            except Exception:
                logger.warning("provider %s did not shut down cleanly", proc.name)


def build_providers(config: PipelineConfig) -> ProviderSet:
    """Instantiate the three providers from fixture paths or commands."""
    subprocesses: list[SubprocessProvider] = []

    def make(name: str, fixture_cls):
        spec = config.providers[name]
        if "command" in spec:
            proc = SubprocessProvider(spec["command"], name=name)
            subprocesses.append(proc)
            return proc
        return fixture_cls.from_file(spec["fixture"])

    detector = make("detector", MockDetector)
    embedding = make("embedding", MockEmbedding)
    lm = make("lm", ToyLM)
    # The token inventory always comes from the LM fixture file, including
    # when steps are served by a subprocess.
    lm_spec = config.providers["lm"]
    if isinstance(lm, ToyLM):
        vocabulary = lm.vocabulary
    else:
        if "fixture" not in lm_spec:
            raise ValueError("config: command-based 'lm' provider still needs "
                             "a 'fixture' path for the vocabulary")
        vocabulary = ToyLM.from_file(lm_spec["fixture"]).vocabulary
    return ProviderSet(detector=detector, lm=lm, embedding=embedding,
                       vocabulary=vocabulary, _subprocesses=subprocesses)


# --------------------------------------------------------------------------- #
# synthetic panorama features
# --------------------------------------------------------------------------- #

def pano_features(scan: str, viewpoint_id: str, heading: float,
                  dim: int = PANO_FEATURE_DIM) -> PanoFeatures:
    """Deterministic stand-in view features for a viewpoint.

    Fixtures carry detections and embeddings rather than pixels, so view
    vectors are derived from a content hash of (scan, viewpoint); the
    oriented view is the 10-degree slot containing the heading.
    """
    digest = hashlib.sha256(f"{scan}/{viewpoint_id}".encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    views = np.array([[rng.uniform(-1.0, 1.0) for _ in range(dim)]
                      for _ in range(speaker.VIEWS_PER_PANORAMA)])
    oriented = int((heading % 360.0) // 10.0) % speaker.VIEWS_PER_PANORAMA
    return PanoFeatures(views=views, oriented_index=oriented)


# --------------------------------------------------------------------------- #
# per-chunk stages
# --------------------------------------------------------------------------- #

def chunk_landmark(chunk: SubTrajectory, scan: str, detector,
                   library: CategoryLibrary,
                   config: PipelineConfig) -> Landmark | None:
    """Best in-sector detection over every waypoint of the sub-trajectory.

    The sector faces the chunk's exit heading. Ties beyond the per-detection
    rule fall to the earlier waypoint. The winning detection keeps its own
    viewpoint (that is where the crop lives); the anchor setting picks which
    panorama frame derives the heading bounds, which coincide while all
    panoramas share one center heading.
    """
    sector = detection_sector(chunk.exit_heading)
    survivors = []
    for order, viewpoint_id in enumerate(chunk.viewpoint_ids):
        detections = detector.detect(scan, viewpoint_id,
                                     library.categories_for(scan),
                                     config.pano_width, config.pano_height)
        for det in detections:
            if landmarks.in_sector(det, sector, config.pano_width,
                                   config.pano_center_heading):
                survivors.append((det, viewpoint_id, order))
    if not survivors:
        return None
    det, viewpoint_id, _ = min(
        survivors,
        key=lambda s: (-s[0].confidence, s[0].label, s[0].bbox.x_min, s[2]))
    bounds = landmarks.bbox_heading_bounds(det.bbox, config.pano_width,
                                           config.pano_center_heading)
    return Landmark(viewpoint_id=viewpoint_id, detection=det,
                    heading_bounds=bounds)


def _sub_pair(chunk: SubTrajectory, landmark: Landmark | None, crafted_text: str,
              scan: str, providers: ProviderSet, wordlists: WordLists,
              params: DecodingParams, config: PipelineConfig) -> assembly.SubPair:
    panos = [pano_features(scan, pose.viewpoint_id, pose.heading)
             for pose in chunk.trajectory.poses[chunk.start:chunk.end + 1]]
    generated = decode(config.prompt, crafted_text, panos, providers.lm,
                       providers.vocabulary, params)
    text = generated.text
    if not text:
        logger.debug("empty generation for steps [%d, %d), falling back to "
                     "crafted text", chunk.start, chunk.end)
        text = crafted_text
    entity = None
    if landmark is not None:
        candidates = extract_entity_candidates(text, wordlists)
        if candidates:
            entity = select_entity(providers.embedding, landmark, candidates,
                                   scan, source=config.entity_embedding)
    return assembly.SubPair(steps=(chunk.start, chunk.end),
                            sub_instruction=text, landmark=landmark,
                            entity=entity)


def records_for_trajectory(index: int, trajectory: Trajectory,
                           providers: ProviderSet, library: CategoryLibrary,
                           templates: TemplateLibrary, wordlists: WordLists,
                           config: PipelineConfig) -> list[dict]:
    scan = trajectory.scan_id
    chunks = chunk_trajectory(trajectory)
    prepared = []
    for chunk in chunks:
        landmark = chunk_landmark(chunk, scan, providers.detector, library, config)
        crafted = craft_sub_instruction(chunk, landmark, templates)
        prepared.append((chunk, landmark, crafted.text))
    records = []
    for vi, (alpha, k) in enumerate(config.variants):
        params = DecodingParams(k=k, alpha=alpha, max_len=config.max_len)
        pairs = [
            _sub_pair(chunk, landmark, crafted_text, scan, providers,
                      wordlists, params, config)
            for chunk, landmark, crafted_text in prepared
        ]
        pair = assembly.integrate_sub_pairs(
            pairs, config.joiner, trajectory=trajectory,
            instr_id=f"{scan}_{index:04d}_{vi}",
            gen={"alpha": alpha, "k": k, "seed": config.seed})
        records.append(assembly.to_record(pair))
    return records


# --------------------------------------------------------------------------- #
# generate
# --------------------------------------------------------------------------- #

def manifest_path_for(out: str) -> Path:
    return Path(out).with_suffix(".manifest.json")


def _sample_all(config: PipelineConfig) -> list[Trajectory]:
    trajectories = []
    for gi, graph_path in enumerate(config.graphs):
        graph = load_graph(graph_path)
        trajectories.extend(navgraph.sample_trajectories(
            graph, config.min_steps, config.max_steps,
            seed=config.seed + gi, count=config.count,
            min_length=config.min_length, max_length=config.max_length))
    return trajectories


def generate(config: PipelineConfig, out: str | None = None, *,
             workers: int = 1, force: bool = False) -> dict:
    """Run the full pipeline and write dataset + manifest; returns the manifest.

    Deterministic for fixed config and fixtures: reruns produce byte-identical
    output. A completed run (matching manifest and record count) is skipped
    unless force is set.
    """
    out = out or config.out
    manifest_path = manifest_path_for(out)
    config_hash = config.config_hash()

    if not force and manifest_path.exists() and Path(out).exists():
        with open(manifest_path, encoding="utf-8") as fh:
            previous = json.load(fh)
        if previous.get("config_hash") == config_hash:
            with open(out, encoding="utf-8") as fh:
                lines = sum(1 for line in fh if line.strip())
            if lines == previous.get("counts", {}).get("instructions"):
                logger.info("output %s is complete for this config; skipping "
                            "(use force to regenerate)", out)
                return previous

    providers = build_providers(config)
    try:
        library = load_category_library(config.categories)
        templates = build_template_library()
        wordlists = (WordLists.load(config.wordlists) if config.wordlists
                     else entities.default_word_lists())
        trajectories = _sample_all(config)

        def build(args: tuple[int, Trajectory]) -> list[dict]:
            index, trajectory = args
            return records_for_trajectory(index, trajectory, providers,
                                          library, templates, wordlists, config)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                batches = list(pool.map(build, enumerate(trajectories)))
        else:
            batches = [build(item) for item in enumerate(trajectories)]
    finally:
        providers.close()

    records = [record for batch in batches for record in batch]
    assembly.write_records(records, out)
    stats = assembly.dataset_statistics(records)
    manifest = {
        "schema": 1,
        "tool_version": __version__,
        "seed": config.seed,
        "config_hash": config_hash,
        "config": config.canonical_dict(),
        "providers": providers.identities(),
        "counts": stats.as_dict(),
        "out": str(out),
    }
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("wrote %d records to %s", len(records), out)
    return manifest
