"""Core domain types, dataset manifests, and the EMB1 embedding file format.

A dataset is described by three files:

* a manifest CSV declaring subjects and their twin/family relationships,
* an image-map CSV assigning each image id to its owning subject,
* an EMB1 binary file holding one fixed-dimension f32 vector per image.

Embeddings are stored as 32-bit floats on disk and promoted to 64-bit for
all arithmetic.  All types here are immutable after construction and safe
to share read-only across threads.
"""
from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FormatError,
    JoinError,
    NonFiniteError,
    ParseError,
    TruncationError,
    UnknownSubject,
    ValidationError,
)

SubjectId = str
ImageId = str


class TwinKind(enum.Enum):
    IDENTICAL = "identical"
    IDENTICAL_MIRROR = "identical_mirror"
    FRATERNAL = "fraternal"


class PairKind(enum.Enum):
    SAME_SUBJECT = "same_subject"
    IDENTICAL_TWIN = "identical_twin"
    IDENTICAL_MIRROR_TWIN = "identical_mirror_twin"
    FRATERNAL_TWIN = "fraternal_twin"
    FAMILY = "family"
    NO_RELATION = "no_relation"
    UNKNOWN = "unknown"


_TWIN_TO_PAIR = {
    TwinKind.IDENTICAL: PairKind.IDENTICAL_TWIN,
    TwinKind.IDENTICAL_MIRROR: PairKind.IDENTICAL_MIRROR_TWIN,
    TwinKind.FRATERNAL: PairKind.FRATERNAL_TWIN,
}


@dataclass(frozen=True)
class PairClass:
    """Relationship class of an unordered subject pair.

    ``family_label`` carries the free-form kind label (e.g. "Mother") and is
    set only when ``kind`` is FAMILY.
    """

    kind: PairKind
    family_label: str | None = None

    @property
    def label(self) -> str:
        """Stable string key used for grouping and CSV output."""
        if self.kind is PairKind.FAMILY:
            return f"family:{self.family_label}"
        return self.kind.value

    @staticmethod
    def from_label(label: str) -> "PairClass":
        if label.startswith("family:"):
            return PairClass(PairKind.FAMILY, label.split(":", 1)[1])
        return PairClass(PairKind(label))


SAME_SUBJECT = PairClass(PairKind.SAME_SUBJECT)
IDENTICAL_TWIN = PairClass(PairKind.IDENTICAL_TWIN)
IDENTICAL_MIRROR_TWIN = PairClass(PairKind.IDENTICAL_MIRROR_TWIN)
FRATERNAL_TWIN = PairClass(PairKind.FRATERNAL_TWIN)
NO_RELATION = PairClass(PairKind.NO_RELATION)
UNKNOWN = PairClass(PairKind.UNKNOWN)


@dataclass(frozen=True)
class IdentityGraph:
    """Subjects plus twin/family relationship edges.

    Invariants enforced at construction: twin and family edges are
    irreflexive and reference declared subjects only; a subject has at most
    one twin edge; edges are stored symmetrically (keyed by unordered pair).
    """

    subjects: frozenset[SubjectId]
    twin_kind: dict[SubjectId, TwinKind] = field(default_factory=dict)
    twin_of: dict[SubjectId, SubjectId] = field(default_factory=dict)
    family_label: dict[frozenset[SubjectId], str] = field(default_factory=dict)
    dataset_tag: dict[SubjectId, str] = field(default_factory=dict)
    meta_complete: dict[SubjectId, bool] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.twin_of) != set(self.twin_kind):
            raise ValidationError("twin_of and twin_kind must cover the same subjects")
        for a, b in self.twin_of.items():
            if a == b:
                raise ValidationError(f"self twin edge on subject {a!r}")
            if a not in self.subjects or b not in self.subjects:
                raise ValidationError(f"twin edge ({a!r}, {b!r}) references unknown subject")
            if self.twin_of.get(b) != a:
                raise ValidationError(f"twin edge ({a!r}, {b!r}) is not symmetric")
            if self.twin_kind[a] != self.twin_kind[b]:
                raise ValidationError(f"twin edge ({a!r}, {b!r}) has conflicting kinds")
        for pair in self.family_label:
            if len(pair) != 2:
                raise ValidationError(f"self family edge on subject {set(pair)!r}")
            for s in pair:
                if s not in self.subjects:
                    raise ValidationError(f"family edge {sorted(pair)!r} references unknown subject {s!r}")

    @property
    def twin_edges(self) -> set[tuple[SubjectId, SubjectId, TwinKind]]:
        """Twin edges as unordered (a, b, kind) triples with a < b."""
        return {
            (min(a, b), max(a, b), k)
            for a, k in self.twin_kind.items()
            for b in [self.twin_of[a]]
        }

    def related(self, a: SubjectId, b: SubjectId) -> bool:
        """True when a and b are the same subject, twins, or family."""
        return a == b or self.twin_of.get(a) == b or frozenset((a, b)) in self.family_label


def classify_pair(a: SubjectId, b: SubjectId, graph: IdentityGraph) -> PairClass:
    """Relationship class of an unordered subject pair.

    Precedence: same subject, then twin edge, then family edge.  When no
    relation is declared, subjects with an incomplete-metadata flag fall in
    the UNKNOWN class; everything else is NO_RELATION.  Symmetric in a, b.
    """
    if a not in graph.subjects:
        raise UnknownSubject(a)
    if b not in graph.subjects:
        raise UnknownSubject(b)
    if a == b:
        return SAME_SUBJECT
    if graph.twin_of.get(a) == b:
        return PairClass(_TWIN_TO_PAIR[graph.twin_kind[a]])
    key = frozenset((a, b))
    if key in graph.family_label:
        return PairClass(PairKind.FAMILY, graph.family_label[key])
    if not graph.meta_complete.get(a, True) or not graph.meta_complete.get(b, True):
        return UNKNOWN
    return NO_RELATION


# --- manifest CSV ---

_MANIFEST_HEADER = [
    "subject_id", "dataset_tag", "twin_of", "twin_kind",
    "family_of", "family_kind", "meta_complete",
]
_TWIN_KIND_TOKENS = {k.value: k for k in TwinKind}


def _check_token(value: str, what: str, path, line: int) -> str:
    if not value:
        raise ParseError(path, line, f"empty {what}")
    if "," in value or any(c.isspace() for c in value):
        raise ParseError(path, line, f"{what} {value!r} contains whitespace or comma")
    return value


def read_manifest(path) -> IdentityGraph:
    """Parse and validate a dataset manifest CSV into an IdentityGraph.

    Raises ParseError (with line number) on grammar violations and
    ValidationError on dangling edges, duplicate subjects, or self edges.
    """
    subjects: dict[SubjectId, int] = {}
    dataset_tag: dict[SubjectId, str] = {}
    meta_complete: dict[SubjectId, bool] = {}
    twin_decl: dict[SubjectId, tuple[SubjectId, TwinKind]] = {}
    family_decl: list[tuple[SubjectId, SubjectId, str, int]] = []

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty manifest") from None
        if header != _MANIFEST_HEADER:
            raise ParseError(path, 1, f"bad header {header!r}, expected {_MANIFEST_HEADER!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_MANIFEST_HEADER):
                raise ParseError(path, lineno, f"expected {len(_MANIFEST_HEADER)} fields, got {len(row)}")
            sid, tag, twin_of, twin_kind, family_of, family_kind, meta = row
            sid = _check_token(sid, "subject_id", path, lineno)
            if sid in subjects:
                raise ValidationError(f"duplicate subject {sid!r} (lines {subjects[sid]} and {lineno})")
            subjects[sid] = lineno
            dataset_tag[sid] = tag
            if meta not in ("0", "1"):
                raise ParseError(path, lineno, f"meta_complete must be 0 or 1, got {meta!r}")
            meta_complete[sid] = meta == "1"
            if bool(twin_of) != bool(twin_kind):
                raise ParseError(path, lineno, "twin_of and twin_kind must be given together")
            if twin_of:
                if twin_kind not in _TWIN_KIND_TOKENS:
                    raise ParseError(path, lineno, f"unknown twin_kind {twin_kind!r}")
                twin_decl[sid] = (twin_of, _TWIN_KIND_TOKENS[twin_kind])
            if bool(family_of) != bool(family_kind):
                raise ParseError(path, lineno, "family_of and family_kind must be given together")
            if family_of:
                family_decl.append((sid, family_of, family_kind, lineno))

    twin_of_map: dict[SubjectId, SubjectId] = {}
    twin_kind_map: dict[SubjectId, TwinKind] = {}
    for a, (b, kind) in twin_decl.items():
        if a == b:
            raise ValidationError(f"self twin edge on subject {a!r}")
        if b not in subjects:
            raise ValidationError(f"twin edge ({a!r}, {b!r}) references unknown subject {b!r}")
        if b in twin_decl:
            other, other_kind = twin_decl[b]
            if other != a:
                raise ValidationError(f"subject {b!r} has conflicting twin edges ({a!r} vs {other!r})")
            if other_kind != kind:
                raise ValidationError(f"twin edge ({a!r}, {b!r}) declared with conflicting kinds")
        if twin_of_map.get(a, b) != b or twin_kind_map.get(a, kind) != kind:
            raise ValidationError(f"subject {a!r} has more than one twin edge")
        if twin_of_map.get(b, a) != a:
            raise ValidationError(f"subject {b!r} has more than one twin edge")
        # symmetric closure: a one-sided declaration covers both subjects
        twin_of_map[a] = b
        twin_of_map[b] = a
        twin_kind_map[a] = kind
        twin_kind_map[b] = kind

    family_map: dict[frozenset[SubjectId], str] = {}
    for a, b, kind, lineno in family_decl:
        if a == b:
            raise ValidationError(f"self family edge on subject {a!r}")
        if b not in subjects:
            raise ValidationError(f"family edge ({a!r}, {b!r}) references unknown subject {b!r}")
        key = frozenset((a, b))
        if family_map.get(key, kind) != kind:
            raise ValidationError(f"family edge ({a!r}, {b!r}) declared with conflicting kinds")
        family_map[key] = kind

    return IdentityGraph(
        subjects=frozenset(subjects),
        twin_kind=twin_kind_map,
        twin_of=twin_of_map,
        family_label=family_map,
        dataset_tag=dataset_tag,
        meta_complete=meta_complete,
    )


def _assign_family_declarers(edges: set[frozenset[str]]) -> dict[str, str]:
    """Map each family edge to a distinct declaring subject.

    The manifest grammar allows one family edge per subject row, so each
    edge must be declared by exactly one of its endpoints and no endpoint
    may declare twice.  Leaf-stripping handles tree-like components; what
    remains must be simple cycles, which are oriented in walk order.
    """
    adjacency: dict[str, set[str]] = {}
    for pair in edges:
        a, b = sorted(pair)
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)

    declares: dict[str, str] = {}
    pending = {s for s, nbrs in adjacency.items() if len(nbrs) == 1}
    while pending:
        s = min(pending)
        pending.discard(s)
        nbrs = adjacency.get(s, set())
        if not nbrs:
            continue
        other = next(iter(nbrs))
        declares[s] = other
        nbrs.discard(other)
        adjacency[other].discard(s)
        if len(adjacency[other]) == 1:
            pending.add(other)

    # remaining edges: every vertex has degree 2 (disjoint cycles) or the
    # component is denser than one row per subject can express
    for start in sorted(adjacency):
        while adjacency[start]:
            if len(adjacency[start]) > 2 or start in declares:
                raise ValidationError(
                    "family edges are too dense to express as one edge per manifest row")
            cur, nxt = start, min(adjacency[start])
            while True:
                declares[cur] = nxt
                adjacency[cur].discard(nxt)
                adjacency[nxt].discard(cur)
                cur, candidates = nxt, adjacency[nxt]
                if not candidates:
                    break
                if len(candidates) > 1 or cur in declares:
                    raise ValidationError(
                        "family edges are too dense to express as one edge per manifest row")
                nxt = next(iter(candidates))
    return declares


def write_manifest(path, graph: IdentityGraph) -> None:
    """Write an IdentityGraph back to the manifest CSV grammar."""
    family_declares = _assign_family_declarers(set(graph.family_label))
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(_MANIFEST_HEADER)
        for sid in sorted(graph.subjects):
            twin_of = twin_kind = ""
            other = graph.twin_of.get(sid)
            if other is not None and sid < other:
                twin_of, twin_kind = other, graph.twin_kind[sid].value
            family_of = family_kind = ""
            if sid in family_declares:
                family_of = family_declares[sid]
                family_kind = graph.family_label[frozenset((sid, family_of))]
            w.writerow([
                sid, graph.dataset_tag.get(sid, ""), twin_of, twin_kind,
                family_of, family_kind, "1" if graph.meta_complete.get(sid, True) else "0",
            ])


# --- image map CSV ---

_IMAGE_MAP_HEADER = ["image_id", "subject_id"]


def read_image_map(path) -> dict[ImageId, SubjectId]:
    """Parse an image-map CSV; image ids must be unique."""
    mapping: dict[ImageId, SubjectId] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty image map") from None
        if header != _IMAGE_MAP_HEADER:
            raise ParseError(path, 1, f"bad header {header!r}, expected {_IMAGE_MAP_HEADER!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
            image, sid = row
            image = _check_token(image, "image_id", path, lineno)
            sid = _check_token(sid, "subject_id", path, lineno)
            if image in mapping:
                raise ValidationError(f"duplicate image id {image!r}")
            mapping[image] = sid
    return mapping


def write_image_map(path, mapping: dict[ImageId, SubjectId]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(_IMAGE_MAP_HEADER)
        for image, sid in mapping.items():
            w.writerow([image, sid])


# --- EMB1 binary embeddings ---

_EMB1_MAGIC = b"EMB1"
_EMB1_VERSION = 1
_EMB1_DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHBBIQ")   # magic, version, dtype, reserved, dim, count


@dataclass(frozen=True)
class EmbeddingStore:
    """Ordered collection of per-image embedding vectors sharing dimension d.

    ``vectors`` is an (n, d) float32 array; use :meth:`matrix64` for
    arithmetic.  Row order matches ``image_ids``.
    """

    image_ids: tuple[ImageId, ...]
    vectors: np.ndarray

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 2 or v.shape[0] != len(self.image_ids):
            raise ValidationError(f"vectors shape {v.shape} does not match {len(self.image_ids)} image ids")
        if v.shape[1] < 1:
            raise ValidationError("embedding dimension must be >= 1")
        if v.dtype != np.float32:
            raise ValidationError(f"vectors must be float32 on the store, got {v.dtype}")
        if not np.isfinite(v).all():
            idx = int(np.argwhere(~np.isfinite(v).all(axis=1))[0, 0])
            raise NonFiniteError(f"non-finite component in record {idx} ({self.image_ids[idx]!r})")
        v.setflags(write=False)

    def __len__(self) -> int:
        return len(self.image_ids)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def matrix64(self) -> np.ndarray:
        """Vectors promoted to float64 for arithmetic."""
        return self.vectors.astype(np.float64)

    def row(self, i: int) -> np.ndarray:
        return self.vectors[i].astype(np.float64)


def read_embeddings(path) -> EmbeddingStore:
    """Read an EMB1 file (little-endian, f32 records).

    Raises FormatError on bad magic/version/dtype, TruncationError when the
    payload ends before the declared count, NonFiniteError on NaN/Inf.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise TruncationError(f"{path}: file shorter than EMB1 header")
    magic, version, dtype, reserved, dim, count = _HEADER.unpack_from(data, 0)
    if magic != _EMB1_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _EMB1_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != _EMB1_DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if reserved != 0:
        raise FormatError(f"{path}: reserved byte must be 0, got {reserved}")
    if dim < 1:
        raise FormatError(f"{path}: dimension must be >= 1, got {dim}")

    offset = _HEADER.size
    ids: list[ImageId] = []
    vecs = np.empty((count, dim), dtype=np.float32)
    vec_bytes = 4 * dim
    for i in range(count):
        if offset + 2 > len(data):
            raise TruncationError(f"{path}: truncated at record {i} (declared count {count})")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(data):
            raise TruncationError(f"{path}: truncated at record {i} (declared count {count})")
        ids.append(data[offset:offset + id_len].decode("utf-8"))
        offset += id_len
        vecs[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
        if not np.isfinite(vecs[i]).all():
            raise NonFiniteError(f"{path}: non-finite component in record {i} ({ids[-1]!r})")
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes after {count} records")
    return EmbeddingStore(image_ids=tuple(ids), vectors=vecs)


def write_embeddings(path, store: EmbeddingStore) -> None:
    """Write a store in the EMB1 layout; read_embeddings inverts it byte-exactly."""
    parts = [_HEADER.pack(_EMB1_MAGIC, _EMB1_VERSION, _EMB1_DTYPE_F32, 0,
                          store.dim, len(store))]
    little = store.vectors.astype("<f4", copy=False)
    for i, image in enumerate(store.image_ids):
        encoded = image.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValidationError(f"image id {image!r} exceeds 65535 encoded bytes")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(little[i].tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def resolve_owners(store: EmbeddingStore, image_map: dict[ImageId, SubjectId],
                   graph: IdentityGraph) -> tuple[SubjectId, ...]:
    """Owner subject of each store row, in store order.

    Fails loudly (JoinError) when an image is missing from the map or its
    owner is not a declared subject.
    """
    owners = []
    for image in store.image_ids:
        sid = image_map.get(image)
        if sid is None:
            raise JoinError(f"image {image!r} has no subject in the image map")
        if sid not in graph.subjects:
            raise JoinError(f"image {image!r} maps to unknown subject {sid!r}")
        owners.append(sid)
    return tuple(owners)
