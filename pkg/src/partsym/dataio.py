"""Labeled xyz files, dataset preprocessing, and JSONL records."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .geom import PointCloud, resample_part

log = logging.getLogger(__name__)

XYZ_SUFFIX = ".xyz"


class DataFormatError(ValueError):
    pass


# ---------------------------------------------------------------- xyz files


def parse_xyz(text: str, source: str = "<string>") -> PointCloud:
    """Parse "x y z [label]" lines. Blank lines and '#' comments are skipped."""
    rows, labels = [], []
    ncols = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        where = f"{source}:{lineno}"
        if len(parts) not in (3, 4):
            raise DataFormatError(f"{where}: expected 'x y z [label]', got {len(parts)} fields")
        if ncols is None:
            ncols = len(parts)
        elif len(parts) != ncols:
            raise DataFormatError(f"{where}: expected {ncols} fields like earlier lines, got {len(parts)}")
        try:
            xyz = [float(v) for v in parts[:3]]
        except ValueError:
            raise DataFormatError(f"{where}: non-numeric coordinate in {line!r}") from None
        if not all(np.isfinite(xyz)):
            raise DataFormatError(f"{where}: non-finite coordinate")
        rows.append(xyz)
        if ncols == 4:
            try:
                lab = int(parts[3])
            except ValueError:
                raise DataFormatError(f"{where}: label {parts[3]!r} is not an integer") from None
            if lab < 0:
                raise DataFormatError(f"{where}: negative label {lab}")
            labels.append(lab)
    if not rows:
        raise DataFormatError(f"{source}: no points")
    return PointCloud(np.array(rows), np.array(labels, dtype=np.int64) if ncols == 4 else None)


def load_xyz(path) -> PointCloud:
    path = Path(path)
    return parse_xyz(path.read_text(), str(path))


def format_xyz(c: PointCloud) -> str:
    lines = []
    for i, p in enumerate(c.points):
        row = " ".join(format(float(v), ".17g") for v in p)
        if c.labels is not None:
            row += f" {int(c.labels[i])}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def save_xyz(path, c: PointCloud):
    Path(path).write_text(format_xyz(c))


def load_dataset(directory) -> list[tuple[str, PointCloud]]:
    """All ``*.xyz`` files of a directory in lexicographic filename order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"{directory}: not a directory")
    files = sorted(p for p in directory.iterdir() if p.suffix == XYZ_SUFFIX and p.is_file())
    if not files:
        raise DataFormatError(f"{directory}: no {XYZ_SUFFIX} files")
    return [(p.stem, load_xyz(p)) for p in files]


def save_dataset(directory, shapes):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for sid, c in shapes:
        save_xyz(directory / f"{sid}{XYZ_SUFFIX}", c)


# ----------------------------------------------------------- preprocessing


def part_targets(shapes) -> dict[int, int]:
    """Per-part mean point count over the shapes that have the part, rounded half up."""
    counts: dict[int, list[int]] = {}
    for _, c in shapes:
        for j in c.part_ids():
            counts.setdefault(j, []).append(len(c.part(j)))
    return {j: int(np.floor(np.mean(v) + 0.5)) for j, v in sorted(counts.items())}


def preprocess(shapes, seed: int = 0, targets: dict[int, int] | None = None):
    """Resample every part to its category mean size.

    Shapes lacking a part that other shapes have are skipped with a warning
    and do not count towards the means. Returns ``(kept, skipped_ids)``.
    """
    shapes = list(shapes)
    wanted = set(targets) if targets is not None else {j for _, c in shapes for j in c.part_ids()}
    complete, skipped = [], []
    for sid, c in shapes:
        missing = sorted(wanted - set(c.part_ids()))
        if missing:
            log.warning("skipping shape %s: missing part(s) %s", sid, missing)
            skipped.append(sid)
        else:
            complete.append((sid, c))
    if targets is None:
        # skipped shapes do not vote on the target sizes
        targets = part_targets(complete)
    rng = np.random.default_rng(seed)
    kept = []
    for sid, c in complete:
        pts, labs = [], []
        for j in sorted(wanted):
            part = c.part(j)
            if len(part) != targets[j]:
                part = resample_part(part, targets[j], rng)
            pts.append(part.points)
            labs.append(np.full(len(part), j, dtype=np.int64))
        labels = np.concatenate(labs) if c.labels is not None else None
        kept.append((sid, PointCloud(np.vstack(pts), labels)))
    return kept, skipped


# ------------------------------------------------------------ JSONL records


@dataclass(frozen=True)
class HeaderRecord:
    command: str
    seed: int
    config: dict
    meta: dict = field(default_factory=dict)
    kind = "header"


@dataclass(frozen=True)
class SymmetryRecord:
    shape: str
    part: int
    generators: tuple[float, ...]
    fd_indices: tuple[int, ...]
    residual: float
    found: bool
    kind = "symmetry"

    def __post_init__(self):
        if len(self.generators) != 12:
            raise DataFormatError(f"symmetry record needs 12 generator values, got {len(self.generators)}")
        if not self.residual >= 0:
            raise DataFormatError("residual must be non-negative")


@dataclass(frozen=True)
class AssemblerRecord:
    shape: str
    params: tuple[float, ...]
    residuals: tuple[float, ...]
    kind = "assemblers"

    def __post_init__(self):
        if len(self.params) != 9 * len(self.residuals):
            raise DataFormatError("assembler record needs 9 parameters per part")


@dataclass(frozen=True)
class SampleRecord:
    index: int
    generators: tuple[float, ...]
    kind = "sample"


@dataclass(frozen=True)
class EvalRecord:
    shape: str
    metric: str
    raw: float
    scaled: float
    scale: float
    normalized: bool
    chamfer_variant: str
    kind = "eval"


RECORD_TYPES = {cls.kind: cls for cls in (HeaderRecord, SymmetryRecord, AssemblerRecord, SampleRecord, EvalRecord)}
_TUPLE_FIELDS = {"generators", "fd_indices", "params", "residuals"}


def _plain(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def encode_record(rec) -> str:
    body = {"type": rec.kind}
    body.update(_plain(asdict(rec)))
    return json.dumps(body, sort_keys=False, allow_nan=False, separators=(",", ":"))


def decode_record(line: str):
    try:
        body = json.loads(line)
    except json.JSONDecodeError as err:
        raise DataFormatError(f"invalid JSON: {err}") from None
    if not isinstance(body, dict):
        raise DataFormatError("record is not a JSON object")
    kind = body.pop("type", None)
    cls = RECORD_TYPES.get(kind)
    if cls is None:
        raise DataFormatError(f"unknown record type {kind!r}")
    names = {f.name for f in fields(cls)}
    if set(body) != names:
        raise DataFormatError(f"{kind} record fields {sorted(body)} != {sorted(names)}")
    for k in _TUPLE_FIELDS & names:
        body[k] = tuple(body[k])
    return cls(**body)


def write_jsonl(path, records):
    text = "".join(encode_record(r) + "\n" for r in records)
    Path(path).write_text(text)


def read_jsonl(path) -> list:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(decode_record(line))
        except (DataFormatError, TypeError) as err:
            raise DataFormatError(f"{path}:{lineno}: {err}") from None
    return out
