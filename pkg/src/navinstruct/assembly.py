"""Sub-pair integration into full records, JSONL serialization, statistics."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

from .entities import EntityLandmarkPair
from .landmarks import Landmark
from .navgraph import Trajectory

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_JOINER = ". "


@dataclass(frozen=True)
class SubPair:
    """A sub-trajectory's step range with its sub-instruction and annotations."""

    steps: tuple[int, int]
    sub_instruction: str
    landmark: Landmark | None = None
    entity: EntityLandmarkPair | None = None


@dataclass(frozen=True)
class IntegratedSubPair:
    steps: tuple[int, int]
    text_span: tuple[int, int]
    entity_text: str | None
    entity_span: tuple[int, int] | None
    landmark: Landmark | None


@dataclass(frozen=True)
class InstructionTrajectoryPair:
    instruction: str
    sub_pairs: tuple[IntegratedSubPair, ...]
    trajectory: Trajectory | None = None
    instr_id: str | None = None
    gen: dict | None = None


def _capitalize(text: str) -> str:
    return text[:1].upper() + text[1:]


def integrate_sub_pairs(pairs: list[SubPair], joiner: str = DEFAULT_JOINER, *,
                        trajectory: Trajectory | None = None,
                        instr_id: str | None = None,
                        gen: dict | None = None) -> InstructionTrajectoryPair:
    """Join capitalized sub-instructions and remap entity spans globally.

    Each segment's first character is uppercased, segments are joined, and a
    terminal period is appended. Entity spans shift by the segment's start
    offset; an entity beginning at offset 0 picks up the capitalization, and
    the remapped entity text is re-read from the full instruction so the
    exact-substring invariant holds by construction.
    """
    if not pairs:
        raise ValueError("need at least one sub-pair")
    segments = []
    integrated: list[IntegratedSubPair] = []
    offset = 0
    for pair in pairs:
        if not pair.sub_instruction:
            raise ValueError("empty sub-instruction")
        if pair.entity is not None:
            span = pair.entity.entity
            if not (0 <= span.start < span.end <= len(pair.sub_instruction)):
                raise ValueError(f"entity span [{span.start}, {span.end}) outside "
                                 f"sub-instruction of length {len(pair.sub_instruction)}")
            if pair.sub_instruction[span.start:span.end] != span.text:
                raise ValueError(f"entity text {span.text!r} does not match its span")
        segment = _capitalize(pair.sub_instruction)
        entity_text = entity_span = None
        if pair.entity is not None:
            span = pair.entity.entity
            entity_span = (offset + span.start, offset + span.end)
            entity_text = segment[span.start:span.end]
        landmark = pair.landmark
        if landmark is None and pair.entity is not None:
            landmark = pair.entity.landmark
        integrated.append(IntegratedSubPair(
            steps=pair.steps,
            text_span=(offset, offset + len(segment)),
            entity_text=entity_text,
            entity_span=entity_span,
            landmark=landmark,
        ))
        segments.append(segment)
        offset += len(segment) + len(joiner)
    instruction = joiner.join(segments) + "."
    return InstructionTrajectoryPair(
        instruction=instruction, sub_pairs=tuple(integrated),
        trajectory=trajectory, instr_id=instr_id, gen=gen)


def to_record(pair: InstructionTrajectoryPair) -> dict:
    """Serialize an integrated pair carrying trajectory metadata."""
    if pair.trajectory is None or pair.instr_id is None or pair.gen is None:
        raise ValueError("record needs trajectory, instr_id, and gen metadata")
    sub_pairs = []
    for sp in pair.sub_pairs:
        entity = None
        if sp.entity_text is not None and sp.entity_span is not None:
            entity = {"text": sp.entity_text, "span": list(sp.entity_span)}
        landmark = None
        if sp.landmark is not None:
            landmark = {
                "viewpoint": sp.landmark.viewpoint_id,
                "label": sp.landmark.label,
                "bbox": sp.landmark.detection.bbox.as_list(),
                "confidence": sp.landmark.detection.confidence,
            }
        sub_pairs.append({
            "steps": list(sp.steps),
            "text_span": list(sp.text_span),
            "entity": entity,
            "landmark": landmark,
        })
    return {
        "schema": SCHEMA_VERSION,
        "instr_id": pair.instr_id,
        "scan": pair.trajectory.scan_id,
        "path": pair.trajectory.path,
        "headings": pair.trajectory.headings,
        "instruction": pair.instruction,
        "sub_pairs": sub_pairs,
        "gen": pair.gen,
    }


# --------------------------------------------------------------------------- #
# record validation
# --------------------------------------------------------------------------- #

def _is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) \
        and math.isfinite(value)


def _check_span(span: object, upper: int, field: str, out: list[str]) -> tuple[int, int] | None:
    if (not isinstance(span, list) or len(span) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in span)):
        out.append(f"field {field!r} must be an [start, end) integer pair")
        return None
    s, e = span
    if not 0 <= s < e <= upper:
        out.append(f"field {field!r} span [{s}, {e}) outside [0, {upper})")
        return None
    return (s, e)


def validate_record(record: object, graph=None) -> list[str]:
    """All violations of the record schema and its span/coverage invariants."""
    out: list[str] = []
    if not isinstance(record, dict):
        return ["record must be a JSON object"]
    if record.get("schema") != SCHEMA_VERSION:
        out.append(f"field 'schema' must be {SCHEMA_VERSION}")
    for field in ("instr_id", "scan", "instruction"):
        if not isinstance(record.get(field), str) or not record.get(field):
            out.append(f"field {field!r} must be a non-empty string")
    path = record.get("path")
    if (not isinstance(path, list) or len(path) < 2
            or not all(isinstance(v, str) and v for v in path)):
        out.append("field 'path' must list at least 2 viewpoint ids")
        path = None
    headings = record.get("headings")
    if not isinstance(headings, list) or not all(_is_number(h) for h in headings):
        out.append("field 'headings' must be a list of finite numbers")
    elif path is not None and len(headings) != len(path):
        out.append("field 'headings' length must match 'path'")
    gen = record.get("gen")
    if not isinstance(gen, dict):
        out.append("field 'gen' must be an object")
    else:
        if not _is_number(gen.get("alpha")):
            out.append("field 'gen.alpha' must be a number")
        if not isinstance(gen.get("k"), int):
            out.append("field 'gen.k' must be an integer")
        if not isinstance(gen.get("seed"), int):
            out.append("field 'gen.seed' must be an integer")

    instruction = record.get("instruction") if isinstance(record.get("instruction"), str) else ""
    sub_pairs = record.get("sub_pairs")
    if not isinstance(sub_pairs, list) or not sub_pairs:
        out.append("field 'sub_pairs' must be a non-empty list")
        sub_pairs = []
    expected_start = 0
    for i, sp in enumerate(sub_pairs):
        where = f"sub_pairs[{i}]"
        if not isinstance(sp, dict):
            out.append(f"{where} must be an object")
            continue
        steps = sp.get("steps")
        if path is not None:
            bounds = _check_span(steps, len(path) - 1, f"{where}.steps", out)
            if bounds is not None:
                if bounds[0] != expected_start:
                    out.append(f"{where}.steps starts at {bounds[0]}, "
                               f"expected {expected_start}")
                expected_start = bounds[1]
        _check_span(sp.get("text_span"), len(instruction), f"{where}.text_span", out)
        entity = sp.get("entity")
        if entity is not None:
            if not isinstance(entity, dict):
                out.append(f"{where}.entity must be an object or null")
            else:
                text = entity.get("text")
                if not isinstance(text, str) or not text:
                    out.append(f"{where}.entity.text must be a non-empty string")
                span = _check_span(entity.get("span"), len(instruction),
                                   f"{where}.entity.span", out)
                if span is not None and isinstance(text, str) \
                        and instruction[span[0]:span[1]] != text:
                    out.append(f"{where}.entity.span does not spell "
                               f"{text!r} in the instruction")
            if sp.get("landmark") is None:
                out.append(f"{where} has an entity but no landmark")
        landmark = sp.get("landmark")
        if landmark is not None:
            if not isinstance(landmark, dict):
                out.append(f"{where}.landmark must be an object or null")
            else:
                for field in ("viewpoint", "label"):
                    if not isinstance(landmark.get(field), str) or not landmark.get(field):
                        out.append(f"{where}.landmark.{field} must be a "
                                   f"non-empty string")
                bbox = landmark.get("bbox")
                if (not isinstance(bbox, list) or len(bbox) != 4
                        or not all(_is_number(v) for v in bbox)
                        or not (bbox[0] < bbox[2] and bbox[1] < bbox[3])):
                    out.append(f"{where}.landmark.bbox must be [x0, y0, x1, y1] "
                               f"with x0 < x1 and y0 < y1")
                conf = landmark.get("confidence")
                if not _is_number(conf) or not 0.0 <= conf <= 1.0:
                    out.append(f"{where}.landmark.confidence must lie in [0, 1]")
    if path is not None and sub_pairs and expected_start != len(path) - 1:
        out.append(f"sub_pairs cover steps [0, {expected_start}), "
                   f"expected [0, {len(path) - 1})")
    if graph is not None and path is not None:
        if isinstance(record.get("scan"), str) and record["scan"] != graph.scan_id:
            out.append(f"field 'scan' is {record['scan']!r}, graph is "
                       f"{graph.scan_id!r}")
        for u, v in zip(path, path[1:]):
            if u not in graph.viewpoints or v not in graph.viewpoints:
                out.append(f"path viewpoint {u!r} or {v!r} not in graph")
            elif not graph.has_edge(u, v):
                out.append(f"path hop {u!r} -> {v!r} is not a graph edge")
    return out


def record_line(record: dict) -> str:
    """Canonical single-line serialization used for all dataset output."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_records(records: list[dict], path: str) -> None:
    """Write validated records as canonical JSONL."""
    for i, record in enumerate(records):
        violations = validate_record(record)
        if violations:
            raise ValueError(f"record {i}: {violations[0]}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(record_line(record) + "\n")


def read_records(path: str) -> list[dict]:
    """Read a dataset JSONL file, failing on the first invalid line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {line_no}: invalid JSON: {exc}") from exc
            violations = validate_record(record)
            if violations:
                raise ValueError(f"{path}: line {line_no}: {violations[0]}")
            records.append(record)
    return records


def validate_dataset(path: str, graph=None) -> list[str]:
    """Violation messages ("line N: ...") for every record in a dataset file."""
    out: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                out.append(f"line {line_no}: invalid JSON: {exc}")
                continue
            for violation in validate_record(record, graph=graph):
                out.append(f"line {line_no}: {violation}")
    return out


# --------------------------------------------------------------------------- #
# statistics
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class DatasetStats:
    trajectories: int
    instructions: int
    sub_pairs: int
    entity_pairs: int

    def as_dict(self) -> dict:
        return {
            "trajectories": self.trajectories,
            "instructions": self.instructions,
            "sub_pairs": self.sub_pairs,
            "entity_pairs": self.entity_pairs,
        }


def dataset_statistics(records: list[dict]) -> DatasetStats:
    """Count trajectories, instructions, sub-pairs, and entity pairs.

    Records sharing an instr_id are counted once, with a warning; distinct
    trajectories key on (scan, viewpoint sequence).
    """
    seen_ids: set[str] = set()
    trajectories: set[tuple] = set()
    sub_pairs = 0
    entity_pairs = 0
    duplicates = 0
    for record in records:
        instr_id = record.get("instr_id")
        if instr_id in seen_ids:
            duplicates += 1
            continue
        seen_ids.add(instr_id)
        trajectories.add((record.get("scan"), tuple(record.get("path", ()))))
        for sp in record.get("sub_pairs", []):
            sub_pairs += 1
            if sp.get("entity") is not None:
                entity_pairs += 1
    if duplicates:
        logger.warning("%d duplicate instruction ids counted once", duplicates)
    return DatasetStats(trajectories=len(trajectories),
                        instructions=len(seen_ids),
                        sub_pairs=sub_pairs,
                        entity_pairs=entity_pairs)
