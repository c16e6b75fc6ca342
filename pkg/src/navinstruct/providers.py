"""Pluggable model providers: request protocol, file-backed mocks, toy LM.

All providers speak the same newline-delimited JSON protocol: one request
object per line, one response object per line, matched by "id". The in-tree
mocks can be used directly in process or served over stdio pipes to exercise
the subprocess transport.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import subprocess
import sys
import threading
from typing import IO, Iterable, Protocol

import numpy as np

from .landmarks import BBox, Detection
from .speaker import Candidate, Vocabulary

logger = logging.getLogger(__name__)


class ProviderError(Exception):
    """Protocol violation, unreachable provider, or unknown fixture key."""


class DetectorProvider(Protocol):
    def detect(self, scan: str, viewpoint: str, categories: list[str],
               pano_width: float, pano_height: float) -> list[Detection]: ...


class LMProvider(Protocol):
    def lm_step(self, context: list[int], cond: dict, k: int) -> list[Candidate]: ...


class EmbeddingProvider(Protocol):
    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_image(self, scan: str, viewpoint: str,
                    bbox: list[float]) -> np.ndarray: ...


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


# --------------------------------------------------------------------------- #
# response parsing (shared by mocks and the subprocess client)
# --------------------------------------------------------------------------- #

def _parse_detections(raw: object, pano_width: float, pano_height: float,
                      where: str) -> list[Detection]:
    if not isinstance(raw, list):
        raise ProviderError(f"{where}: 'detections' must be a list")
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ProviderError(f"{where}: detections[{i}] must be an object")
        label = entry.get("label")
        bbox = entry.get("bbox")
        confidence = entry.get("confidence")
        if not isinstance(label, str) or not label:
            raise ProviderError(f"{where}: detections[{i}] missing 'label'")
        if (not isinstance(bbox, list) or len(bbox) != 4
                or not all(isinstance(v, (int, float)) for v in bbox)):
            raise ProviderError(f"{where}: detections[{i}] field 'bbox' "
                                f"must be [x0, y0, x1, y1]")
        if not isinstance(confidence, (int, float)):
            raise ProviderError(f"{where}: detections[{i}] missing 'confidence'")
        x0, y0, x1, y1 = (float(v) for v in bbox)
        if not (0.0 <= x0 < x1 <= pano_width and 0.0 <= y0 < y1 <= pano_height):
            raise ProviderError(f"{where}: detections[{i}] bbox {bbox} outside "
                                f"{pano_width:g}x{pano_height:g} panorama")
        try:
            out.append(Detection(label=label, bbox=BBox(x0, y0, x1, y1),
                                 confidence=float(confidence)))
        except ValueError as exc:
            raise ProviderError(f"{where}: detections[{i}]: {exc}") from exc
    return out


def _parse_candidates(raw: object, where: str) -> list[Candidate]:
    if not isinstance(raw, list) or not raw:
        raise ProviderError(f"{where}: 'candidates' must be a non-empty list")
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ProviderError(f"{where}: candidates[{i}] must be an object")
        token = entry.get("token")
        p = entry.get("p")
        rep = entry.get("r")
        if not isinstance(token, int) or token < 0:
            raise ProviderError(f"{where}: candidates[{i}] missing 'token' id")
        if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
            raise ProviderError(f"{where}: candidates[{i}] probability "
                                f"outside [0, 1]")
        if not isinstance(rep, list) or not rep:
            raise ProviderError(f"{where}: candidates[{i}] missing "
                                f"representation 'r'")
        vec = np.asarray(rep, dtype=float)
        if not np.isfinite(vec).all():
            raise ProviderError(f"{where}: candidates[{i}] non-finite "
                                f"representation")
        out.append(Candidate(token_id=token, p=float(p), rep=vec))
    return out


def _parse_vec(raw: object, where: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise ProviderError(f"{where}: 'vec' must be a non-empty list")
    vec = np.asarray(raw, dtype=float)
    if not np.isfinite(vec).all():
        raise ProviderError(f"{where}: non-finite embedding")
    return vec


# --------------------------------------------------------------------------- #
# file-backed mocks
# --------------------------------------------------------------------------- #

def _load_fixture(path: str, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ProviderError(f"{what} fixture not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ProviderError(f"{what} fixture {path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ProviderError(f"{what} fixture {path}: top level must be an object")
    return raw


class MockDetector:
    """Serves detections from a JSON fixture keyed by "scan/viewpoint"."""

    def __init__(self, data: dict, identity: dict | None = None):
        self.data = data
        self._identity = identity or {"kind": "inline"}

    @classmethod
    def from_file(cls, path: str) -> MockDetector:
        return cls(_load_fixture(path, "detector"),
                   {"kind": "fixture", "path": path, "sha256": file_sha256(path)})

    def identity(self) -> dict:
        return self._identity

    def detect(self, scan: str, viewpoint: str, categories: list[str],
               pano_width: float, pano_height: float) -> list[Detection]:
        raw = self.data.get(f"{scan}/{viewpoint}", [])
        detections = _parse_detections(raw, pano_width, pano_height,
                                       f"detector fixture {scan}/{viewpoint}")
        allowed = {c.lower() for c in categories}
        return [d for d in detections if d.label.lower() in allowed]


def bbox_key(bbox: Iterable[float]) -> str:
    return ",".join(format(float(v), "g") for v in bbox)


class MockEmbedding:
    """Serves embeddings from a JSON fixture with exact-string keys.

    Text vectors key on the exact phrase; image vectors key on
    "scan/viewpoint/x0,y0,x1,y1" crop identity.
    """

    def __init__(self, data: dict, identity: dict | None = None):
        self.text = data.get("text", {})
        self.image = data.get("image", {})
        self._identity = identity or {"kind": "inline"}

    @classmethod
    def from_file(cls, path: str) -> MockEmbedding:
        return cls(_load_fixture(path, "embedding"),
                   {"kind": "fixture", "path": path, "sha256": file_sha256(path)})

    def identity(self) -> dict:
        return self._identity

    def embed_text(self, text: str) -> np.ndarray:
        raw = self.text.get(text)
        if raw is None:
            raise ProviderError(f"no text embedding for {text!r}")
        return _parse_vec(raw, f"embedding fixture text {text!r}")

    def embed_image(self, scan: str, viewpoint: str,
                    bbox: list[float]) -> np.ndarray:
        key = f"{scan}/{viewpoint}/{bbox_key(bbox)}"
        raw = self.image.get(key)
        if raw is None:
            raise ProviderError(f"no image embedding for {key!r}")
        return _parse_vec(raw, f"embedding fixture image {key!r}")


class ToyLM:
    """Bigram language model over a word vocabulary, from a JSON fixture.

    The fixture holds the token list with begin/end sentinels, a bigram
    probability table keyed by token strings, and one representation vector
    per token. Conditioning input is accepted and ignored; the model sees
    only the last context token.
    """

    def __init__(self, data: dict, identity: dict | None = None):
        self._identity = identity or {"kind": "inline"}
        tokens = data.get("tokens")
        if not isinstance(tokens, list) or len(tokens) < 2:
            raise ProviderError("toy LM: 'tokens' must list at least 2 tokens")
        self.tokens = [str(t) for t in tokens]
        self._index = {t: i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ProviderError("toy LM: duplicate tokens")
        for name in ("bos", "eos"):
            if data.get(name) not in self._index:
                raise ProviderError(f"toy LM: {name!r} token missing from 'tokens'")
        self.bos = data["bos"]
        self.eos = data["eos"]

        reps = data.get("reps")
        if not isinstance(reps, dict):
            raise ProviderError("toy LM: missing 'reps' table")
        self.reps: dict[str, np.ndarray] = {}
        dim = None
        for tok in self.tokens:
            vec = reps.get(tok)
            if not isinstance(vec, list) or not vec:
                raise ProviderError(f"toy LM: missing representation for {tok!r}")
            arr = np.asarray(vec, dtype=float)
            if dim is None:
                dim = arr.shape
            elif arr.shape != dim:
                raise ProviderError(f"toy LM: representation for {tok!r} has "
                                    f"dimension {arr.shape}, expected {dim}")
            if not np.isfinite(arr).all() or not arr.any():
                raise ProviderError(f"toy LM: bad representation for {tok!r}")
            self.reps[tok] = arr

        bigram = data.get("bigram")
        if not isinstance(bigram, dict):
            raise ProviderError("toy LM: missing 'bigram' table")
        self.bigram: dict[str, dict[str, float]] = {}
        for prev, row in bigram.items():
            if prev not in self._index:
                raise ProviderError(f"toy LM: bigram row for unknown token {prev!r}")
            if not isinstance(row, dict) or not row:
                raise ProviderError(f"toy LM: bigram row {prev!r} must be a "
                                    f"non-empty object")
            total = 0.0
            parsed = {}
            for nxt, p in row.items():
                if nxt not in self._index:
                    raise ProviderError(f"toy LM: bigram {prev!r} -> unknown "
                                        f"token {nxt!r}")
                if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                    raise ProviderError(f"toy LM: bigram {prev!r} -> {nxt!r} "
                                        f"probability outside [0, 1]")
                parsed[nxt] = float(p)
                total += float(p)
            if total > 1.0 + 1e-9:
                raise ProviderError(f"toy LM: bigram row {prev!r} sums to "
                                    f"{total}, above 1")
            self.bigram[prev] = parsed

    @classmethod
    def from_file(cls, path: str) -> ToyLM:
        return cls(_load_fixture(path, "toy LM"),
                   {"kind": "fixture", "path": path, "sha256": file_sha256(path)})

    def identity(self) -> dict:
        return self._identity

    @property
    def vocabulary(self) -> Vocabulary:
        return Vocabulary(tokens=tuple(self.tokens),
                          bos_id=self._index[self.bos],
                          eos_id=self._index[self.eos])

    def lm_step(self, context: list[int], cond: dict, k: int) -> list[Candidate]:
        if not context:
            raise ProviderError("toy LM: empty context")
        if not 0 <= context[-1] < len(self.tokens):
            raise ProviderError(f"toy LM: context token id {context[-1]} "
                                f"out of range")
        prev = self.tokens[context[-1]]
        row = self.bigram.get(prev)
        if row is None:
            # Unmodeled history: fall back to a uniform step over everything
            # but the begin sentinel.
            options = [t for t in self.tokens if t != self.bos]
            row = {t: 1.0 / len(options) for t in options}
        ranked = sorted(row.items(), key=lambda kv: (-kv[1], self._index[kv[0]]))
        return [Candidate(token_id=self._index[tok], p=p, rep=self.reps[tok])
                for tok, p in ranked[:k]]


# --------------------------------------------------------------------------- #
# subprocess transport
# --------------------------------------------------------------------------- #

class SubprocessProvider:
    """Client for a provider subprocess speaking the line protocol on stdio."""

    def __init__(self, command: list[str], name: str = "provider"):
        self.command = list(command)
        self.name = name
        self._lock = threading.Lock()
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise ProviderError(f"provider {name}: cannot start "
                                f"{self.command[0]!r}: {exc}") from exc

    def identity(self) -> dict:
        return {"kind": "command", "argv": self.command}

    def close(self) -> None:
        if self._proc.stdin is not None:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)

    def _call(self, op: str, **payload) -> dict:
        with self._lock:
            self._next_id += 1
            request = {"id": self._next_id, "op": op, **payload}
            if self._proc.poll() is not None:
                raise ProviderError(f"provider {self.name}: process exited "
                                    f"with {self._proc.returncode}")
            assert self._proc.stdin is not None and self._proc.stdout is not None
            try:
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ProviderError(f"provider {self.name}: {exc}") from exc
            line = self._proc.stdout.readline()
        if not line:
            raise ProviderError(f"provider {self.name}: closed the stream")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderError(f"provider {self.name}: invalid response "
                                f"JSON: {exc}") from exc
        if response.get("id") != request["id"]:
            raise ProviderError(f"provider {self.name}: response id "
                                f"{response.get('id')} does not match request "
                                f"id {request['id']}")
        if "error" in response:
            raise ProviderError(f"provider {self.name}: request {request['id']}: "
                                f"{response['error']}")
        return response

    def detect(self, scan: str, viewpoint: str, categories: list[str],
               pano_width: float, pano_height: float) -> list[Detection]:
        response = self._call("detect", scan=scan, viewpoint=viewpoint,
                              categories=list(categories),
                              pano_width=pano_width, pano_height=pano_height)
        return _parse_detections(response.get("detections"), pano_width,
                                 pano_height, f"provider {self.name}")

    def lm_step(self, context: list[int], cond: dict, k: int) -> list[Candidate]:
        response = self._call("lm_step", context=list(context), cond=cond, k=k)
        return _parse_candidates(response.get("candidates"),
                                 f"provider {self.name}")

    def embed_text(self, text: str) -> np.ndarray:
        response = self._call("embed_text", text=text)
        return _parse_vec(response.get("vec"), f"provider {self.name}")

    def embed_image(self, scan: str, viewpoint: str,
                    bbox: list[float]) -> np.ndarray:
        response = self._call("embed_image", scan=scan, viewpoint=viewpoint,
                              bbox=list(bbox))
        return _parse_vec(response.get("vec"), f"provider {self.name}")


# --------------------------------------------------------------------------- #
# stdio server over the mocks
# --------------------------------------------------------------------------- #

def serve_stdio(detector: MockDetector | None = None,
                embedding: MockEmbedding | None = None,
                lm: ToyLM | None = None,
                stdin: IO[str] | None = None,
                stdout: IO[str] | None = None) -> None:
    """Answer line-protocol requests on stdio until EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            stdout.write(json.dumps({"id": None, "error": "invalid JSON"}) + "\n")
            stdout.flush()
            continue
        req_id = request.get("id")
        op = request.get("op")
        try:
            if op == "detect" and detector is not None:
                detections = detector.detect(
                    request["scan"], request["viewpoint"],
                    request["categories"], request["pano_width"],
                    request["pano_height"])
                body = {"detections": [
                    {"label": d.label, "bbox": d.bbox.as_list(),
                     "confidence": d.confidence} for d in detections]}
            elif op == "lm_step" and lm is not None:
                candidates = lm.lm_step(request["context"],
                                        request.get("cond", {}), request["k"])
                body = {"candidates": [
                    {"token": c.token_id, "p": c.p, "r": c.rep.tolist()}
                    for c in candidates]}
            elif op == "embed_text" and embedding is not None:
                body = {"vec": embedding.embed_text(request["text"]).tolist()}
            elif op == "embed_image" and embedding is not None:
                body = {"vec": embedding.embed_image(
                    request["scan"], request["viewpoint"],
                    request["bbox"]).tolist()}
            else:
                raise ProviderError(f"unsupported op {op!r}")
            response = {"id": req_id, **body}
        except (ProviderError, KeyError) as exc:
            response = {"id": req_id, "error": str(exc)}
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Serve mock providers over the stdio line protocol.")
    parser.add_argument("--detections", help="detector fixture JSON")
    parser.add_argument("--embeddings", help="embedding fixture JSON")
    parser.add_argument("--lm", help="toy LM fixture JSON")
    args = parser.parse_args(argv)
    detector = MockDetector.from_file(args.detections) if args.detections else None
    embedding = MockEmbedding.from_file(args.embeddings) if args.embeddings else None
    lm = ToyLM.from_file(args.lm) if args.lm else None
    if detector is None and embedding is None and lm is None:
        parser.error("nothing to serve; pass at least one fixture")
    serve_stdio(detector=detector, embedding=embedding, lm=lm)
    return 0


if __name__ == "__main__":
    sys.exit(main())
