"""
GlobalStore for cross-task experience

Entries are persisted as an append-only JSONL file plus a binary sidecar of
float32 embedding rows (little-endian, row-major) behind a small header that
records the vector dimension. Retrieval is an exhaustive cosine scan.
"""

import hashlib
import json
import logging
import re
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import requests

from ..models.memory_models import ExperienceItem, GlobalExperience, embedding_text
from ..util.clock import SystemClock
from ..util.exceptions import ConfigError, EmbedderUnavailable, StoreCorruptedError, ValidationError

logger = logging.getLogger(__name__)

ENTRIES_FILE = "store.jsonl"
VECTORS_FILE = "store.vec"
MAGIC = b"EVOVEC\x00\x01"
HEADER_DTYPE = np.dtype("<u4")
HEADER_SIZE = len(MAGIC) + 2 * HEADER_DTYPE.itemsize
VECTOR_DTYPE = np.dtype("<f4")
FORMAT_VERSION = 1
NORM_TOLERANCE = 1e-6
TOKEN = re.compile(r"[a-z0-9]+")


class Embedder(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return an (n, dimension) array of unit-norm rows."""
        ...


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise EmbedderUnavailable("Embedder produced a zero vector")
    return matrix / norms


class HashEmbedder:
    """
    Deterministic offline embedder: signed feature hashing of word unigrams
    and bigrams. Texts without tokens map to the first basis vector.
    """

    name = "hash"

    def __init__(self, dimension: int = 256) -> None:
        if dimension < 2:
            raise ConfigError("[Embedding] dimension must be at least 2")
        self.dimension = dimension

    def _features(self, text: str) -> List[str]:
        words = TOKEN.findall(text.lower())
        return words + [f"{a} {b}" for a, b in zip(words, words[1:])]

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        matrix = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, text in enumerate(texts):
            for feature in self._features(text):
                digest = hashlib.sha256(feature.encode("utf-8")).digest()
                index = int.from_bytes(digest[:4], "little") % self.dimension
                matrix[row, index] += 1.0 if digest[4] & 1 else -1.0
            if not matrix[row].any():
                matrix[row, 0] = 1.0
        return _normalize_rows(matrix)


class HttpEmbedder:
    """
    Embedder backed by an OpenAI-compatible ``/embeddings`` endpoint.
    """

    name = "http"

    def __init__(
        self,
        config_manager: Any,
        api_key: str,
        session: Optional[requests.Session] = None,
    ) -> None:
        self.api_base_url = (config_manager.get("Embedding", "api_base_url") or "").rstrip("/")
        self.model_name = config_manager.get("Embedding", "model_name")
        self.dimension = config_manager.getint("Embedding", "dimension", fallback=256)
        self.request_timeout = config_manager.getint(
            "Embedding", "request_timeout_sec", fallback=60
        )
        if not self.api_base_url or not self.model_name:
            raise ConfigError("[Embedding] api_base_url and model_name are required")
        self._api_key = api_key
        self._session = session or requests.Session()
        logger.info(f"HttpEmbedder initialized with model: {self.model_name}")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """
        Raises:
            EmbedderUnavailable: On transport errors or malformed payloads
        """
        try:
            response = self._session.post(
                f"{self.api_base_url}/embeddings",
                json={"model": self.model_name, "input": list(texts)},
                headers={"Authorization": f"Bearer {self._api_key}"},
                timeout=self.request_timeout,
            )
            response.raise_for_status()
            rows = [item["embedding"] for item in response.json()["data"]]
        except requests.exceptions.RequestException as e:
            raise EmbedderUnavailable(f"Embedding request failed: {type(e).__name__}") from e
        except (KeyError, TypeError, ValueError) as e:
            raise EmbedderUnavailable(f"Malformed embedding payload: {e}") from e

        matrix = np.asarray(rows, dtype=np.float64)
        if matrix.shape != (len(texts), self.dimension):
            raise EmbedderUnavailable(
                f"Expected {len(texts)} embeddings of dimension {self.dimension}, "
                f"got shape {matrix.shape}",
            )
        return _normalize_rows(matrix)


class GlobalStore:
    """
    Persistent collection of GlobalExperience entries.

    Readers may retrieve concurrently; appends are serialized. Entries are
    never modified once written.
    """

    def __init__(self, directory: Path, embedder: Embedder, clock: Any = None) -> None:
        self.directory = Path(directory)
        self.embedder = embedder
        self.clock = clock or SystemClock()
        self.dimension = embedder.dimension
        self._lock = threading.Lock()
        self.entries: List[GlobalExperience] = []
        self.vectors = np.zeros((0, self.dimension), dtype=VECTOR_DTYPE)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._load()

    @property
    def entries_path(self) -> Path:
        return self.directory / ENTRIES_FILE

    @property
    def vectors_path(self) -> Path:
        return self.directory / VECTORS_FILE

    def __len__(self) -> int:
        return len(self.entries)

    def _header(self) -> bytes:
        return MAGIC + np.array([FORMAT_VERSION, self.dimension], dtype=HEADER_DTYPE).tobytes()

    def _read_vectors(self) -> np.ndarray:
        raw = self.vectors_path.read_bytes()
        if len(raw) < HEADER_SIZE or raw[: len(MAGIC)] != MAGIC:
            raise StoreCorruptedError(f"Bad vector file header in {self.vectors_path}")
        version, dimension = np.frombuffer(raw[len(MAGIC) : HEADER_SIZE], dtype=HEADER_DTYPE)
        if int(version) != FORMAT_VERSION:
            raise StoreCorruptedError(f"Unsupported vector file version {int(version)}")
        if int(dimension) != self.dimension:
            raise StoreCorruptedError(
                f"Store dimension {int(dimension)} does not match embedder "
                f"dimension {self.dimension}",
            )
        body = raw[HEADER_SIZE:]
        row_bytes = self.dimension * VECTOR_DTYPE.itemsize
        if len(body) % row_bytes:
            raise StoreCorruptedError("Vector file ends with a partial row")
        return np.frombuffer(body, dtype=VECTOR_DTYPE).reshape(-1, self.dimension).copy()

    def _load(self) -> None:
        if not self.entries_path.exists() and not self.vectors_path.exists():
            return
        if not self.vectors_path.exists():
            raise StoreCorruptedError(f"Missing vector file {self.vectors_path}")

        vectors = self._read_vectors()
        records: List[Dict[str, Any]] = []
        if self.entries_path.exists():
            with open(self.entries_path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        try:
                            records.append(json.loads(line))
                        except json.JSONDecodeError as e:
                            raise StoreCorruptedError(f"Malformed store entry: {e}") from e
        if len(records) != len(vectors):
            raise StoreCorruptedError(
                f"{len(records)} entries but {len(vectors)} vector rows",
                details={"directory": str(self.directory)},
            )

        for record, vector in zip(records, vectors):
            self.entries.append(
                GlobalExperience(
                    experience_id=record["experience_id"],
                    task_id=record["task_id"],
                    items=[ExperienceItem.from_dict(i) for i in record["items"]],
                    embedding=vector,
                    created_at=record["created_at"],
                )
            )
        self.vectors = vectors
        logger.info(
            f"Opened global store with {len(self.entries)} entries",
            extra={"directory": str(self.directory)},
        )

    def find(self, task_id: str, start: int = 0) -> Optional[GlobalExperience]:
        """Latest entry for a task among entries at index ``start`` or later."""
        with self._lock:
            matches = [e for e in self.entries[start:] if e.task_id == task_id]
        return matches[-1] if matches else None

    def add(self, task_id: str, items: Sequence[ExperienceItem]) -> GlobalExperience:
        """
        Embed and persist one task-level experience.

        Raises:
            ValidationError: If items is empty or holds more than five entries
            EmbedderUnavailable: If the embedding cannot be computed
        """
        if not 1 <= len(items) <= 5:
            raise ValidationError(f"A global experience holds 1-5 items, got {len(items)}")
        vector = self.embedder.embed([embedding_text(list(items))])[0].astype(VECTOR_DTYPE)

        with self._lock:
            entry = GlobalExperience(
                experience_id=f"g{len(self.entries):06d}",
                task_id=task_id,
                items=list(items),
                embedding=vector,
                created_at=self.clock.now_iso(),
            )
            vectors_size = self.vectors_path.stat().st_size if self.vectors_path.exists() else None
            entries_size = self.entries_path.stat().st_size if self.entries_path.exists() else None
            try:
                if vectors_size is None:
                    self.vectors_path.write_bytes(self._header())
                with open(self.vectors_path, "ab") as f:
                    f.write(vector.tobytes())
                with open(self.entries_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(entry.to_record(), ensure_ascii=False) + "\n")
            except Exception:
                self._truncate(self.vectors_path, vectors_size)
                self._truncate(self.entries_path, entries_size)
                logger.error(
                    f"Failed to persist global experience {entry.experience_id}; store rolled back",
                    extra={"task_id": task_id},
                )
                raise
            self.entries.append(entry)
            self.vectors = np.vstack([self.vectors, vector[np.newaxis, :]])

        logger.info(
            f"Stored global experience {entry.experience_id}",
            extra={"task_id": task_id, "items": len(items)},
        )
        return entry

    @staticmethod
    def _truncate(path: Path, size: Optional[int]) -> None:
        """Restore a file to its size before a failed append; None removes it."""
        if size is None:
            path.unlink(missing_ok=True)
        elif path.exists():
            with open(path, "r+b") as f:
                f.truncate(size)

    def search(
        self, query_vectors: np.ndarray, k_per_query: int
    ) -> List[Tuple[GlobalExperience, float]]:
        """
        Exhaustive cosine top-k per query, deduplicated across queries.

        Duplicates keep their highest similarity. Results are ordered by
        similarity descending, then insertion order.
        """
        with self._lock:
            entries = list(self.entries)
            vectors = self.vectors.astype(np.float64)
        if not entries or len(query_vectors) == 0 or k_per_query < 1:
            return []

        similarities = np.asarray(query_vectors, dtype=np.float64) @ vectors.T
        best: Dict[int, float] = {}
        for row in similarities:
            order = np.argsort(-row, kind="stable")[:k_per_query]
            for index in order:
                score = float(row[index])
                if int(index) not in best or score > best[int(index)]:
                    best[int(index)] = score
        ranked = sorted(best.items(), key=lambda pair: (-pair[1], pair[0]))
        return [(entries[index], score) for index, score in ranked]

    def retrieve(self, queries: Sequence[str], k_per_query: int = 3) -> List[GlobalExperience]:
        """
        Embed the queries and return at most len(queries) * k_per_query
        distinct entries. An unavailable embedder yields an empty result.
        """
        if not queries or not self.entries:
            return []
        try:
            query_vectors = self.embedder.embed(list(queries))
        except EmbedderUnavailable as e:
            logger.warning(f"Retrieval skipped: {e.message}")
            return []
        return [entry for entry, _ in self.search(query_vectors, k_per_query)]

    def verify(self) -> List[str]:
        """Re-read the files and return a list of invariant violations."""
        problems: List[str] = []
        try:
            vectors = self._read_vectors() if self.vectors_path.exists() else np.zeros((0, self.dimension))
        except StoreCorruptedError as e:
            return [e.message]

        records = 0
        ids = set()
        if self.entries_path.exists():
            with open(self.entries_path, encoding="utf-8") as f:
                for number, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    records += 1
                    try:
                        record = json.loads(line)
                    except json.JSONDecodeError:
                        problems.append(f"line {number}: malformed JSON")
                        continue
                    if record.get("experience_id") in ids:
                        problems.append(f"line {number}: duplicate id {record.get('experience_id')}")
                    ids.add(record.get("experience_id"))
                    if not 1 <= len(record.get("items", [])) <= 5:
                        problems.append(f"line {number}: expected 1-5 items")

        if records != len(vectors):
            problems.append(f"{records} entries but {len(vectors)} vector rows")
        if len(vectors):
            norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
            for row in np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE):
                problems.append(f"row {int(row)}: norm {norms[row]:.9f}")
        return problems


def build_embedder(config_manager: Any, api_key: str = "") -> Embedder:
    """Embedder selected by ``[Embedding] backend`` (hash or http)."""
    backend = (config_manager.get("Embedding", "backend", fallback="hash") or "hash").lower()
    dimension = config_manager.getint("Embedding", "dimension", fallback=256)
    if backend == "hash":
        return HashEmbedder(dimension)
    if backend == "http":
        return HttpEmbedder(config_manager, api_key)
    raise ConfigError(f"Unknown embedding backend '{backend}'")
