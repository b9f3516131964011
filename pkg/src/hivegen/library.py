"""Weight-based code library: similarity retrieval with dynamic block weights.

Retrieval scores every live entry by cosine(query, entry) * weight and
returns the argmax, subject to a controlling threshold. Weights start at
0.5 and move multiplicatively with outcomes (x1.06 on success, x0.9 on
failure). Three safeguards keep the store healthy:

* second chance: the first time a block would fail below 0.3 its weight is
  reset to 0.5 instead (once per entry, ever);
* starvation relief: a block passed over by its same-module siblings m
  times re-enters the candidate comparison once even when the normal
  scoring would miss;
* garbage collection: blocks below 0.2 (or still under 0.3 after j
  retrievals) are marked, offered one refinement attempt against their
  nearest healthy sibling, and otherwise removed with their content hash
  recorded so identical code can never be re-inserted.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import requests

from .llm import ChatRequest, ChatResponse, LlmBackend, LlmParams
from .model import CodeBlock, HivegenError, hash_block, new_block_id

EMBED_DIM = 64

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]")


class EmbedUnavailable(HivegenError):
    pass


class NotFound(HivegenError):
    pass


@dataclass(frozen=True)
class Embedding:
    """A fixed-dimension, L2-normalized feature vector."""

    vector: tuple[float, ...]

    def __post_init__(self) -> None:
        norm = math.sqrt(sum(x * x for x in self.vector))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding not unit length: |v| = {norm}")

    @property
    def dim(self) -> int:
        return len(self.vector)


def cosine(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return sum(x * y for x, y in zip(a.vector, b.vector))


def _normalize(values: Sequence[float]) -> Embedding:
    norm = math.sqrt(sum(x * x for x in values))
    if norm == 0.0:
        unit = [0.0] * len(values)
        unit[0] = 1.0
        return Embedding(tuple(unit))
    return Embedding(tuple(x / norm for x in values))


def embed(text: str, dim: int = EMBED_DIM) -> Embedding:
    """Default embedder: signed token-hash bag of features, normalized.

    Deterministic and dependency-free; adequate for ordering structural
    similarity of HDL interfaces at library scale.
    """
    acc = [0.0] * dim
    for token in _TOKEN_RE.findall(text):
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
        sign = 1.0 if (h >> 8) & 1 else -1.0
        acc[h % dim] += sign
    return _normalize(acc)


class RemoteEmbedder:
    """Optional HTTP embedder honoring the same contract as embed()."""

    def __init__(self, url: str, dim: int = EMBED_DIM, timeout_s: float = 30.0):
        self.url = url
        self.dim = dim
        self.timeout_s = timeout_s

    def __call__(self, text: str) -> Embedding:
        try:
            resp = requests.post(self.url, json={"input": text}, timeout=self.timeout_s)
            resp.raise_for_status()
            values = resp.json()["embedding"]
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise EmbedUnavailable(f"remote embedder failed: {exc}") from exc
        if len(values) != self.dim:
            raise EmbedUnavailable(f"remote embedder returned dim {len(values)}, want {self.dim}")
        return _normalize([float(v) for v in values])


@dataclass(frozen=True)
class LibraryPolicy:
    """Weight dynamics and lifecycle thresholds."""

    success_factor: float = 1.06
    failure_factor: float = 0.9
    reset_weight: float = 0.5
    second_chance_floor: float = 0.3
    gc_floor: float = 0.2
    retrieval_threshold: float = 0.45
    m: int = 10
    j: int = 30

    def __post_init__(self) -> None:
        if not 0 < self.gc_floor < self.second_chance_floor < self.reset_weight:
            raise ValueError("need 0 < gc_floor < second_chance_floor < reset_weight")
        if not self.failure_factor < 1.0 < self.success_factor:
            raise ValueError("need failure_factor < 1 < success_factor")


@dataclass
class LibraryEntry:
    """One stored block with its retrieval weight and lifecycle counters."""

    block: CodeBlock
    embedding: Embedding
    weight: float = 0.5
    second_chance: bool = True
    retrieval_count: int = 0
    sibling_skip_count: int = 0
    gc_marked: bool = False

    @property
    def id(self) -> str:
        return self.block.id

    @property
    def module_name(self) -> str:
        return self.block.module_name

    def to_json(self) -> dict:
        return {
            "block": self.block.to_json(),
            "embedding": list(self.embedding.vector),
            "weight": self.weight,
            "second_chance": self.second_chance,
            "retrieval_count": self.retrieval_count,
            "sibling_skip_count": self.sibling_skip_count,
            "gc_marked": self.gc_marked,
        }

    @classmethod
    def from_json(cls, data: dict) -> "LibraryEntry":
        return cls(
            block=CodeBlock.from_json(data["block"]),
            embedding=Embedding(tuple(float(x) for x in data["embedding"])),
            weight=float(data["weight"]),
            second_chance=bool(data["second_chance"]),
            retrieval_count=int(data["retrieval_count"]),
            sibling_skip_count=int(data["sibling_skip_count"]),
            gc_marked=bool(data["gc_marked"]),
        )


@dataclass(frozen=True)
class InsertResult:
    accepted: bool
    reason: Optional[str] = None  # "unverified" | "avoided" | "duplicate"


@dataclass(frozen=True)
class GcReport:
    refined: tuple[str, ...]
    removed: tuple[str, ...]
    deferred: tuple[str, ...] = ()


REFINE_SYSTEM_PROMPT = (
    "You are a Verilog maintainer. Improve the first module using the second,"
    " better-performing module of the same role as a reference. Keep the"
    " interface identical. Reply with Verilog source only."
)


class CodeLibrary:
    """Embedding-indexed store of verified blocks; single serialized writer.

    All mutations (retrieval bookkeeping, outcomes, inserts, gc) run under
    one lock, so retrieve's read-then-increment is a single atomic step.
    """

    def __init__(self, policy: LibraryPolicy = LibraryPolicy()):
        self.policy = policy
        self._entries: dict[str, LibraryEntry] = {}
        self._avoidance: set[str] = set()
        self._lock = threading.RLock()

    # -- queries ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[LibraryEntry]:
        with self._lock:
            return list(self._entries.values())

    def get(self, entry_id: str) -> LibraryEntry:
        with self._lock:
            if entry_id not in self._entries:
                raise NotFound(f"no library entry {entry_id}")
            return self._entries[entry_id]

    def avoidance_hashes(self) -> set[str]:
        with self._lock:
            return set(self._avoidance)

    def retrieve(self, query: Embedding, module_name: str) -> Optional[LibraryEntry]:
        """Best cosine*weight match over live entries, or None below threshold.

        Ties break toward the smallest entry id. When the best score misses
        the threshold, any entry for this module skipped by siblings at
        least m times (with its second chance intact) still competes once;
        its skip counter resets whether or not it wins. The winner's
        retrieval count increments and every passed-over entry of the
        requested module gains one sibling skip.
        """
        with self._lock:
            live = [e for e in self._entries.values() if not e.gc_marked]
            if not live:
                return None
            scores = {e.id: cosine(query, e.embedding) * e.weight for e in live}
            best = self._argmax(live, scores)
            if scores[best.id] >= self.policy.retrieval_threshold:
                winner = best
            else:
                starved = [
                    e
                    for e in live
                    if e.module_name == module_name
                    and e.sibling_skip_count >= self.policy.m
                    and e.second_chance
                ]
                if not starved:
                    return None
                winner = self._argmax(starved, scores)
                for e in starved:
                    e.sibling_skip_count = 0
            winner.retrieval_count += 1
            winner.sibling_skip_count = 0
            for e in live:
                if e is not winner and e.module_name == module_name:
                    e.sibling_skip_count += 1
            self._refresh_gc_mark(winner)
            return winner

    @staticmethod
    def _argmax(entries: Sequence[LibraryEntry], scores: dict[str, float]) -> LibraryEntry:
        best = entries[0]
        for e in entries[1:]:
            if scores[e.id] > scores[best.id] or (scores[e.id] == scores[best.id] and e.id < best.id):
                best = e
        return best

    # -- weight dynamics -------------------------------------------------

    def record_outcome(self, entry_ids: Sequence[str], success: bool) -> dict[str, float]:
        """Apply one outcome to a batch of entries, all-or-nothing.

        Success multiplies each weight by the success factor. Failure
        normally multiplies by the failure factor, except that an entry
        below the second-chance floor with its chance intact is reset to
        the initial weight instead (consuming the chance). Entries are
        then re-marked for collection where the thresholds say so.
        """
        with self._lock:
            missing = [i for i in entry_ids if i not in self._entries]
            if missing:
                raise NotFound(f"unknown entry ids: {', '.join(missing)}")
            updated: dict[str, float] = {}
            for entry_id in entry_ids:
                entry = self._entries[entry_id]
                if success:
                    entry.weight *= self.policy.success_factor
                elif entry.weight < self.policy.second_chance_floor and entry.second_chance:
                    entry.weight = self.policy.reset_weight
                    entry.second_chance = False
                else:
                    entry.weight *= self.policy.failure_factor
                self._refresh_gc_mark(entry)
                updated[entry_id] = entry.weight
            return updated

    def _refresh_gc_mark(self, entry: LibraryEntry) -> None:
        entry.gc_marked = entry.weight < self.policy.gc_floor or (
            entry.retrieval_count >= self.policy.j and entry.weight < self.policy.second_chance_floor
        )

    # -- garbage collection ----------------------------------------------

    def run_gc(
        self,
        llm: LlmBackend,
        verifier: Optional[Callable[[str, str], bool]] = None,
        params: LlmParams = LlmParams(),
    ) -> GcReport:
        """Refine-or-remove every marked entry.

        Each marked block gets one refinement attempt against the most
        similar healthy entry of its module. A refinement that passes the
        verifier re-enters at the reset weight with a fresh hash; anything
        else is removed and its hash joins the avoidance set permanently.
        Backend failures defer entries instead of silently removing them.
        """
        with self._lock:
            marked = [e for e in self._entries.values() if e.gc_marked]
        refined: list[str] = []
        removed: list[str] = []
        deferred: list[str] = []
        for entry in marked:
            neighbor = self._most_similar_live(entry)
            user = f"Module to refine:\n{entry.block.source}\n"
            if neighbor is not None:
                user += f"\nReference module (better performing):\n{neighbor.block.source}\n"
            request = ChatRequest(system=REFINE_SYSTEM_PROMPT, user=user, params=params)
            try:
                response = llm.complete(request)
            except HivegenError:
                deferred.append(entry.id)
                continue
            candidate = response.text.strip()
            passed = bool(candidate) and verifier is not None and verifier(entry.module_name, candidate)
            with self._lock:
                if entry.id not in self._entries:
                    continue
                if passed:
                    entry.block = CodeBlock(
                        id=entry.block.id,
                        module_name=entry.module_name,
                        source=candidate,
                        verified=True,
                    )
                    entry.weight = self.policy.reset_weight
                    entry.second_chance = True
                    entry.retrieval_count = 0
                    entry.sibling_skip_count = 0
                    entry.gc_marked = False
                    refined.append(entry.id)
                else:
                    self._avoidance.add(entry.block.content_hash)
                    del self._entries[entry.id]
                    removed.append(entry.id)
        return GcReport(refined=tuple(refined), removed=tuple(removed), deferred=tuple(deferred))

    def _most_similar_live(self, entry: LibraryEntry) -> Optional[LibraryEntry]:
        with self._lock:
            candidates = [
                e
                for e in self._entries.values()
                if not e.gc_marked and e.module_name == entry.module_name and e.id != entry.id
            ]
            if not candidates:
                return None
            scores = {e.id: cosine(entry.embedding, e.embedding) for e in candidates}
            return self._argmax(candidates, scores)

    # -- inserts ----------------------------------------------------------

    def insert(self, block: CodeBlock, embedding: Embedding) -> InsertResult:
        """Store a verified, novel block at the initial weight."""
        with self._lock:
            for existing in self._entries.values():
                if existing.embedding.dim != embedding.dim:
                    raise ValueError(
                        f"embedding dimension {embedding.dim} does not match this"
                        f" library's dimension {existing.embedding.dim}"
                    )
                break
            if not block.verified:
                return InsertResult(False, "unverified")
            if block.content_hash in self._avoidance:
                return InsertResult(False, "avoided")
            if any(e.block.content_hash == block.content_hash for e in self._entries.values()):
                return InsertResult(False, "duplicate")
            self._entries[block.id] = LibraryEntry(
                block=block,
                embedding=embedding,
                weight=self.policy.reset_weight,
                second_chance=True,
            )
            return InsertResult(True)

    # -- persistence -------------------------------------------------------

    @staticmethod
    def avoidance_path(path: Union[str, Path]) -> Path:
        return Path(str(path) + ".avoid")

    def save(self, path: Union[str, Path]) -> None:
        """Write entries as JSON lines plus the sidecar avoidance digest file."""
        path = Path(path)
        with self._lock:
            lines = [json.dumps(e.to_json(), sort_keys=True) for e in sorted(self._entries.values(), key=lambda e: e.id)]
            avoid = sorted(self._avoidance)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
            tmp.replace(path)
            avoid_tmp = self.avoidance_path(path).with_suffix(".avoid.tmp")
            avoid_tmp.write_text("\n".join(avoid) + ("\n" if avoid else ""), encoding="utf-8")
            avoid_tmp.replace(self.avoidance_path(path))
        except OSError as exc:
            raise HivegenError(f"library save failed: {exc}") from exc

    @classmethod
    def load(cls, path: Union[str, Path], policy: LibraryPolicy = LibraryPolicy()) -> "CodeLibrary":
        path = Path(path)
        lib = cls(policy=policy)
        if path.exists():
            for line in path.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if not line:
                    continue
                entry = LibraryEntry.from_json(json.loads(line))
                lib._entries[entry.id] = entry
        avoid_path = cls.avoidance_path(path)
        if avoid_path.exists():
            lib._avoidance = {
                h.strip() for h in avoid_path.read_text(encoding="utf-8").splitlines() if h.strip()
            }
        return lib


def make_verified_block(module_name: str, source: str) -> CodeBlock:
    """Convenience for tests and preloading: a block marked verified."""
    return CodeBlock(
        id=new_block_id(module_name, source),
        module_name=module_name,
        source=source,
        verified=True,
    )
