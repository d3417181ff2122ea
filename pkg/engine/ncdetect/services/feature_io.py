"""
On-disk formats.

Binary feature container (little-endian):

    header: magic "NCDF" | u8 version | u32 D | u64 n
    record: u64 image_id | 4 x f32 box (x, y, w, h) | u8 source
            | u8 base_pred_flag + u32 base_pred | u8 objectness_flag + f32 objectness
            | u8 gt_flag + u32 gt_class | D x f32 feature

base_pred_flag is 0 (absent), 1 (background) or 2 (base class in base_pred);
the other flags are 0 (absent) or 1 (present). A record takes 40 + 4D bytes.

The embedding container shares the header with magic "NCDE"; its records
are u64 record_index | E x f32 embedding, record_index pointing into the
feature file the embeddings were computed for.

Prototypes, mappings, detections, annotations, class tables and reports
are line-delimited JSON.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from ..core.exceptions import (
    BadMagicError,
    CorruptRecordError,
    DimensionMismatchError,
    DomainError,
    FeatureFormatError,
    MissingInputError,
    NonFiniteValueError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from ..models.records import BasePrediction, FeatureRecord, Source
from ..schemas.detection import ClassInfo, Detection, GroundTruthAnnotation
from ..schemas.geometry import BoxGeometry
from ..schemas.mapping import LabelMapping, MappingMethod
from ..schemas.prototypes import BasePrototype, PrototypeSet

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"NCDF"
EMBEDDING_MAGIC = b"NCDE"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sBIQ")

BASE_PRED_ABSENT = 0
BASE_PRED_BACKGROUND = 1
BASE_PRED_CLASS = 2

M = TypeVar('M', bound=BaseModel)


def record_dtype(dim: int) -> np.dtype:
    return np.dtype([
        ("image_id", "<u8"),
        ("box", "<f4", (4,)),
        ("source", "u1"),
        ("base_pred_flag", "u1"),
        ("base_pred", "<u4"),
        ("objectness_flag", "u1"),
        ("objectness", "<f4"),
        ("gt_flag", "u1"),
        ("gt_class", "<u4"),
        ("feature", "<f4", (dim,)),
    ])


def record_size(dim: int) -> int:
    return record_dtype(dim).itemsize


def embedding_dtype(dim: int) -> np.dtype:
    return np.dtype([("record_index", "<u8"), ("embedding", "<f4", (dim,))])


def _read_container(path: Path, magic: bytes, dtype_for) -> Tuple[int, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError("Feature file", path)
    data = path.read_bytes()

    if len(data) < len(magic) or data[:len(magic)] != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {data[:len(magic)]!r}", path)
    if len(data) < HEADER.size:
        raise TruncatedPayloadError("file ends inside the header", path)

    _, version, dim, n = HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported version {version} (expected {FORMAT_VERSION})", path)
    if n > 0 and dim == 0:
        raise CorruptRecordError("records declared with zero dimension", path)

    dtype = dtype_for(dim)
    expected = HEADER.size + n * dtype.itemsize
    if len(data) < expected:
        available = (len(data) - HEADER.size) // dtype.itemsize
        raise TruncatedPayloadError(
            f"header declares {n} records but payload holds {available}",
            path,
            {"declared": n, "available": available},
        )
    if len(data) > expected:
        raise CorruptRecordError(f"{len(data) - expected} trailing bytes after {n} records", path)

    return dim, np.frombuffer(data, dtype=dtype, count=n, offset=HEADER.size)


def read_feature_file(path: Path) -> List[FeatureRecord]:
    """
    Read a binary feature file.

    Raises:
        BadMagicError, VersionMismatchError, TruncatedPayloadError,
        NonFiniteValueError, CorruptRecordError
    """
    dim, raw = _read_container(path, FEATURE_MAGIC, record_dtype)

    if not np.all(np.isfinite(raw["feature"])):
        bad = int(np.argmax(~np.all(np.isfinite(raw["feature"]), axis=1)))
        raise NonFiniteValueError(f"non-finite feature in record {bad}", path, {"record": bad})
    if not np.all(np.isfinite(raw["box"])):
        raise NonFiniteValueError("non-finite box coordinates", path)
    flagged_objectness = raw["objectness"][raw["objectness_flag"] == 1]
    if not np.all(np.isfinite(flagged_objectness)):
        raise NonFiniteValueError("non-finite objectness", path)

    if np.any(raw["source"] > Source.RPN):
        raise CorruptRecordError("unknown source value", path)
    if np.any(raw["base_pred_flag"] > BASE_PRED_CLASS):
        raise CorruptRecordError("unknown base_pred flag", path)
    if np.any(raw["objectness_flag"] > 1) or np.any(raw["gt_flag"] > 1):
        raise CorruptRecordError("presence flags must be 0 or 1", path)

    features = raw["feature"].astype(np.float64)
    boxes = raw["box"].astype(np.float64)
    records = []
    for i, row in enumerate(raw):
        base_flag = int(row["base_pred_flag"])
        if base_flag == BASE_PRED_BACKGROUND:
            base_pred = BasePrediction.background()
        elif base_flag == BASE_PRED_CLASS:
            base_pred = BasePrediction.of(int(row["base_pred"]))
        else:
            base_pred = None

        try:
            records.append(FeatureRecord(
                image_id=int(row["image_id"]),
                box=BoxGeometry.from_xywh(boxes[i]),
                feature=features[i],
                source=Source(int(row["source"])),
                base_pred=base_pred,
                objectness=float(row["objectness"]) if row["objectness_flag"] else None,
                gt_class=int(row["gt_class"]) if row["gt_flag"] else None,
            ))
        except (ValidationError, DomainError) as e:
            raise CorruptRecordError(f"record {i} is invalid: {e}", path, {"record": i}) from e

    logger.debug(f"Read {len(records)} records of dimension {dim} from {path}")
    return records


def write_feature_file(path: Path, records: Sequence[FeatureRecord], dim: Optional[int] = None):
    """
    Write records to a binary feature file.

    Every record must share one dimension; mixed dimensions are rejected
    before anything is written. An empty list needs no dim (header D = 0).
    """
    records = list(records)
    dims = {r.dim for r in records}
    if dim is not None:
        dims.add(dim)
    if len(dims) > 1:
        expected = dim if dim is not None else records[0].dim
        actual = next(d for d in sorted(dims) if d != expected)
        raise DimensionMismatchError(expected, actual, "feature record")
    file_dim = dims.pop() if dims else 0

    arr = np.zeros(len(records), dtype=record_dtype(file_dim))
    for i, r in enumerate(records):
        arr["image_id"][i] = r.image_id
        arr["box"][i] = r.box.as_xywh()
        arr["source"][i] = int(r.source)
        if r.base_pred is not None:
            if r.base_pred.is_background:
                arr["base_pred_flag"][i] = BASE_PRED_BACKGROUND
            else:
                arr["base_pred_flag"][i] = BASE_PRED_CLASS
                arr["base_pred"][i] = r.base_pred.class_id
        if r.objectness is not None:
            arr["objectness_flag"][i] = 1
            arr["objectness"][i] = r.objectness
        if r.gt_class is not None:
            arr["gt_flag"][i] = 1
            arr["gt_class"][i] = r.gt_class
        arr["feature"][i] = r.feature

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, file_dim, len(records)))
        f.write(arr.tobytes())
    logger.debug(f"Wrote {len(records)} records of dimension {file_dim} to {path}")


def read_embedding_file(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (record_index array, embedding matrix)"""
    dim, raw = _read_container(path, EMBEDDING_MAGIC, embedding_dtype)
    embeddings = raw["embedding"].astype(np.float64).reshape(len(raw), dim)
    if not np.all(np.isfinite(embeddings)):
        raise NonFiniteValueError("non-finite embedding", path)
    return raw["record_index"].astype(np.int64), embeddings


def write_embedding_file(path: Path, record_indices: Sequence[int], embeddings: np.ndarray):
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or embeddings.shape[0] != len(record_indices):
        raise DomainError("need one embedding row per record index")
    dim = embeddings.shape[1]
    arr = np.zeros(len(record_indices), dtype=embedding_dtype(dim))
    arr["record_index"] = np.asarray(record_indices, dtype=np.uint64)
    arr["embedding"] = embeddings
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(HEADER.pack(EMBEDDING_MAGIC, FORMAT_VERSION, dim, len(record_indices)))
        f.write(arr.tobytes())


# Line-delimited JSON

def _open_lines(path: Path) -> List[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError("JSONL file", path)
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise FeatureFormatError(f"line {lineno} is not valid JSON: {e}", path) from e
    return rows


def _write_lines(path: Path, rows: Iterable[str]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(row)
            f.write("\n")


def write_jsonl(path: Path, items: Iterable[BaseModel]):
    _write_lines(path, (item.model_dump_json() for item in items))


def read_jsonl(path: Path, model: Type[M]) -> List[M]:
    try:
        return [model.model_validate(row) for row in _open_lines(path)]
    except ValidationError as e:
        raise FeatureFormatError(f"invalid {model.__name__} record: {e}", path) from e


def write_detections(path: Path, detections: Iterable[Detection]):
    write_jsonl(path, detections)


def read_detections(path: Path) -> List[Detection]:
    return read_jsonl(path, Detection)


def write_annotations(path: Path, annotations: Iterable[GroundTruthAnnotation]):
    write_jsonl(path, annotations)


def read_annotations(path: Path) -> List[GroundTruthAnnotation]:
    return read_jsonl(path, GroundTruthAnnotation)


def write_class_table(path: Path, classes: Iterable[ClassInfo]):
    write_jsonl(path, sorted(classes, key=lambda c: c.class_id))


def read_class_table(path: Path) -> List[ClassInfo]:
    classes = read_jsonl(path, ClassInfo)
    ids = [c.class_id for c in classes]
    if sorted(ids) != list(range(len(ids))):
        raise FeatureFormatError("class ids must be dense 0..C-1", path)
    return sorted(classes, key=lambda c: c.class_id)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_prototypes(path: Path, protos: PrototypeSet):
    """Header line, then one line per base prototype and per cluster center"""
    rows = [_dumps({"kind": "header", "dim": protos.dim, "k": protos.k, "q": protos.q,
                    "metadata": protos.metadata})]
    rows += [_dumps({"kind": "base", "class_id": p.class_id, "vector": p.vector}) for p in protos.base]
    rows += [_dumps({"kind": "novel", "index": j, "vector": v}) for j, v in enumerate(protos.novel)]
    _write_lines(path, rows)


def read_prototypes(path: Path) -> PrototypeSet:
    rows = _open_lines(path)
    if not rows or rows[0].get("kind") != "header":
        raise FeatureFormatError("prototype file must start with a header line", path)
    header = rows[0]
    base = [BasePrototype(class_id=r["class_id"], vector=r["vector"]) for r in rows[1:] if r["kind"] == "base"]
    novel_rows = sorted((r for r in rows[1:] if r["kind"] == "novel"), key=lambda r: r["index"])
    if len(base) != header["k"] or len(novel_rows) != header["q"]:
        raise FeatureFormatError("prototype counts disagree with the header", path)
    try:
        return PrototypeSet(
            dim=header["dim"],
            base=base,
            novel=[r["vector"] for r in novel_rows],
            metadata=header.get("metadata", {}),
        )
    except ValidationError as e:
        raise FeatureFormatError(f"invalid prototype set: {e}", path) from e


def write_base_prototypes(path: Path, base: Sequence[Tuple[int, np.ndarray]]):
    _write_lines(path, (
        _dumps({"class_id": int(class_id), "vector": [float(x) for x in vector]})
        for class_id, vector in base
    ))


def read_base_prototypes(path: Path) -> List[Tuple[int, np.ndarray]]:
    return [(int(r["class_id"]), np.asarray(r["vector"], dtype=np.float64)) for r in _open_lines(path)]


def write_mapping(path: Path, mapping: LabelMapping):
    rows = [_dumps({"kind": "header", "method": mapping.method.value, "kappa": mapping.kappa})]
    rows += [_dumps({"kind": "entry", "cluster": c, "class_id": s}) for c, s in sorted(mapping.entries.items())]
    _write_lines(path, rows)


def read_mapping(path: Path) -> LabelMapping:
    rows = _open_lines(path)
    if not rows or rows[0].get("kind") != "header":
        raise FeatureFormatError("mapping file must start with a header line", path)
    try:
        return LabelMapping(
            entries={int(r["cluster"]): int(r["class_id"]) for r in rows[1:]},
            method=MappingMethod(rows[0]["method"]),
            kappa=rows[0].get("kappa"),
        )
    except (ValidationError, ValueError) as e:
        raise FeatureFormatError(f"invalid mapping: {e}", path) from e


def write_text_embeddings(path: Path, texts: Sequence[Tuple[int, str, np.ndarray]]):
    _write_lines(path, (
        _dumps({"class_id": int(cid), "name": name, "embedding": [float(x) for x in vec]})
        for cid, name, vec in texts
    ))


def read_text_embeddings(path: Path) -> List[Tuple[int, np.ndarray]]:
    rows = _open_lines(path)
    return [(int(r["class_id"]), np.asarray(r["embedding"], dtype=np.float64)) for r in rows]
