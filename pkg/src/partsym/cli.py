"""Command-line interface: ``partsym <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import AssemblerSet, compose_shape, fit_assembler
from .config import RunConfig, format_config, load_config
from .dataio import (
    AssemblerRecord,
    DataFormatError,
    EvalRecord,
    HeaderRecord,
    SampleRecord,
    SymmetryRecord,
    format_xyz,
    load_dataset,
    load_xyz,
    preprocess,
    read_jsonl,
    write_jsonl,
)
from .detect import detect_symmetry_group
from .geom import PointCloud
from .metrics import MetricKind, one_nna, sdi_default, sdi_parts
from .plot import render_svg
from .sampler import VectorDb, sample_generator_set
from .symgroup import GeneratorSet, apply_group, extract_fundamental_domain, generate_group

log = logging.getLogger("partsym")

MIN_DETECT_POINTS = 8


class CliError(RuntimeError):
    pass


def shape_seed(seed: int, shape_id: str, part: int = 0) -> np.random.Generator:
    """Per-shape stream that does not depend on which other shapes are present."""
    return np.random.default_rng([seed, zlib.crc32(shape_id.encode()), part])


def _header(command: str, cfg: RunConfig, **meta) -> HeaderRecord:
    return HeaderRecord(command, cfg.seed, cfg.to_dict(), {k: str(v) for k, v in meta.items()})


def _xyz_with_header(c: PointCloud, command: str, cfg: RunConfig) -> str:
    head = f"# partsym {command} seed={cfg.seed}\n"
    head += "".join(f"# {line}\n" for line in format_config(cfg).splitlines())
    return head + format_xyz(c)


def _write_shapes(out_dir, shapes, command: str, cfg: RunConfig):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for sid, c in shapes:
        (out / f"{sid}.xyz").write_text(_xyz_with_header(c, command, cfg))


def _parts(c: PointCloud):
    return [(j, c.part(j)) for j in c.part_ids()]


def _read_syms(path) -> dict[str, dict[int, SymmetryRecord]]:
    out: dict[str, dict[int, SymmetryRecord]] = {}
    for rec in read_jsonl(path):
        if isinstance(rec, SymmetryRecord):
            out.setdefault(rec.shape, {})[rec.part] = rec
    if not out:
        raise CliError(f"{path}: no symmetry records")
    return out


def _gens(rec: SymmetryRecord) -> GeneratorSet:
    return GeneratorSet.from_vector(np.array(rec.generators))


def _records_for(syms, sid: str, path) -> dict[int, SymmetryRecord]:
    if sid not in syms:
        raise CliError(f"shape {sid!r} has no record in {path}")
    return syms[sid]


# ---------------------------------------------------------------- commands


def cmd_detect(args, cfg: RunConfig):
    dcfg = cfg.detect_config()
    records = [_header("detect", cfg, input=args.input)]
    for sid, c in load_dataset(args.input):
        for j, part in _parts(c):
            if len(part) < MIN_DETECT_POINTS:
                log.warning("shape %s part %d: %d points, too few to detect; leaving it asymmetric", sid, j, len(part))
                gens, residual, found = GeneratorSet.empty(), 0.0, False
            else:
                det = detect_symmetry_group(part, dcfg, shape_seed(cfg.seed, sid, j))
                gens, residual, found = det.generators, det.residual, det.found
            fd = extract_fundamental_domain(gens, part, check=False, max_order=cfg.max_order)
            records.append(
                SymmetryRecord(
                    shape=sid,
                    part=j,
                    generators=tuple(float(v) for v in gens.to_vector()),
                    fd_indices=tuple(int(i) for i in fd.indices),
                    residual=float(residual),
                    found=bool(found),
                )
            )
    write_jsonl(args.out, records)


def cmd_fd(args, cfg: RunConfig):
    syms = _read_syms(args.syms)
    out = []
    for sid, c in load_dataset(args.input):
        recs = _records_for(syms, sid, args.syms)
        pts, labs = [], []
        for j, part in _parts(c):
            if j not in recs:
                raise CliError(f"shape {sid!r} part {j} has no record in {args.syms}")
            idx = np.array(recs[j].fd_indices, dtype=np.int64)
            if len(idx) == 0 or idx.max() >= len(part):
                raise CliError(f"shape {sid!r} part {j}: domain indices do not fit {len(part)} points")
            pts.append(part.points[idx])
            labs.append(np.full(len(idx), j, dtype=np.int64))
        labels = np.concatenate(labs) if c.labels is not None else None
        out.append((sid, PointCloud(np.vstack(pts), labels)))
    _write_shapes(args.out, out, "fd", cfg)


def cmd_reconstruct(args, cfg: RunConfig):
    syms = _read_syms(args.syms)
    out = []
    for sid, d in load_dataset(args.fd):
        recs = _records_for(syms, sid, args.syms)
        pts, labs = [], []
        for j, part in _parts(d):
            if j not in recs:
                raise CliError(f"shape {sid!r} part {j} has no record in {args.syms}")
            g = generate_group(_gens(recs[j]), cfg.max_order)
            rec = apply_group(g, part).points
            pts.append(rec)
            labs.append(np.full(len(rec), j, dtype=np.int64))
        labels = np.concatenate(labs) if d.labels is not None else None
        out.append((sid, PointCloud(np.vstack(pts), labels)))
    _write_shapes(args.out, out, "reconstruct", cfg)


def cmd_sdi(args, cfg: RunConfig):
    kind = MetricKind(args.metric)
    syms = None if args.default_mirror else _read_syms(args.syms)
    records = [_header("sdi", cfg, input=args.input, metric=kind.value, default_mirror=args.default_mirror)]
    rows = []
    for sid, c in load_dataset(args.input):
        if syms is None:
            rep = sdi_default(c, kind, seed=cfg.seed)
        else:
            recs = _records_for(syms, sid, args.syms)
            rep = sdi_parts(c, {j: _gens(r) for j, r in recs.items()}, kind, seed=cfg.seed)
        records.append(EvalRecord(shape=sid, **rep.to_dict()))
        rows.append((sid, rep.raw, rep.scaled))
    if args.out:
        write_jsonl(args.out, records)
    name = f"SDI-{kind.value.upper()}"
    width = max(len("shape"), *(len(r[0]) for r in rows))
    scaled_head = f"{name} x{kind.sdi_scale:g}"
    print(f"{'shape':<{width}}  {'raw':>14}  {scaled_head:>16}")
    for sid, raw, scaled in rows:
        print(f"{sid:<{width}}  {raw:>14.6e}  {scaled:>16.6e}")
    print(f"{'mean':<{width}}  {np.mean([r[1] for r in rows]):>14.6e}  {np.mean([r[2] for r in rows]):>16.6e}")


def cmd_sample_sym(args, cfg: RunConfig):
    recs = [r for r in read_jsonl(args.db) if isinstance(r, SymmetryRecord)]
    if not recs:
        raise CliError(f"{args.db}: no symmetry records")
    db = VectorDb(np.array([r.generators for r in recs]))
    rng = np.random.default_rng(cfg.seed)
    out = [_header("sample-sym", cfg, db=args.db, n=args.n)]
    for i in range(args.n):
        gens = sample_generator_set(
            db, cfg.schedule(), cfg.langevin(), rng, cfg.slot_threshold, cfg.max_retries, cfg.max_order
        )
        out.append(SampleRecord(index=i, generators=tuple(float(v) for v in gens.to_vector())))
    write_jsonl(args.out, out)


def cmd_fit_assemblers(args, cfg: RunConfig):
    canon = dict(load_dataset(args.canon))
    out = [_header("fit-assemblers", cfg, input=args.input, canon=args.canon)]
    for sid, placed in load_dataset(args.input):
        if sid not in canon:
            raise CliError(f"shape {sid!r} has no canonical parts in {args.canon}")
        can = canon[sid]
        if can.part_ids() != placed.part_ids():
            raise CliError(f"shape {sid!r}: canonical parts {can.part_ids()} != placed parts {placed.part_ids()}")
        params, residuals = [], []
        for j in placed.part_ids():
            t, res = fit_assembler(can.part(j), placed.part(j), return_residual=True)
            params.extend(float(v) for v in t.to_vector())
            residuals.append(res)
        out.append(AssemblerRecord(shape=sid, params=tuple(params), residuals=tuple(residuals)))
    write_jsonl(args.out, out)


def cmd_assemble(args, cfg: RunConfig):
    asm = {r.shape: r for r in read_jsonl(args.asm) if isinstance(r, AssemblerRecord)}
    out = []
    for sid, c in load_dataset(args.parts):
        if sid not in asm:
            raise CliError(f"shape {sid!r} has no record in {args.asm}")
        parts = [p for _, p in _parts(c)]
        out.append((sid, compose_shape(parts, AssemblerSet.from_vector(asm[sid].params))))
    _write_shapes(args.out, out, "assemble", cfg)


def cmd_eval_1nna(args, cfg: RunConfig):
    gen = [c for _, c in load_dataset(args.gen)]
    ref = [c for _, c in load_dataset(args.ref)]
    pct = one_nna(gen, ref, MetricKind(args.metric))
    print(f"{pct:.4f}")


def cmd_preprocess(args, cfg: RunConfig):
    kept, skipped = preprocess(load_dataset(args.input), seed=cfg.seed)
    for sid in skipped:
        print(f"skipped {sid}: missing part", file=sys.stderr)
    if not kept:
        raise CliError("every shape was skipped")
    _write_shapes(args.out, kept, "preprocess", cfg)


def cmd_plot(args, cfg: RunConfig):
    c = load_xyz(args.input)
    svg = render_svg(c, title=Path(args.input).name)
    config = "".join(f"  {line}\n" for line in format_config(cfg).splitlines())
    comment = f"<!-- partsym plot seed={cfg.seed}\n{config}-->\n"
    Path(args.out).write_text(svg.replace("\n", "\n" + comment, 1))


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="partsym", description="Part symmetry detection, sampling and assembly.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("detect", cmd_detect, "detect per-part symmetry generators")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)

    sp = add("fd", cmd_fd, "write fundamental-domain clouds")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--syms", required=True)
    sp.add_argument("--out", required=True)

    sp = add("reconstruct", cmd_reconstruct, "apply the groups to fundamental domains")
    sp.add_argument("--fd", required=True)
    sp.add_argument("--syms", required=True)
    sp.add_argument("--out", required=True)

    sp = add("sdi", cmd_sdi, "symmetry discrepancy index per shape")
    sp.add_argument("--in", dest="input", required=True)
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--syms")
    grp.add_argument("--default-mirror", action="store_true")
    sp.add_argument("--metric", choices=["cd", "emd"], default="cd")
    sp.add_argument("--out", help="JSONL report file")

    sp = add("sample-sym", cmd_sample_sym, "sample generator sets by annealed Langevin dynamics")
    sp.add_argument("--db", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True)

    sp = add("fit-assemblers", cmd_fit_assemblers, "fit per-part assemblers")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--canon", required=True)
    sp.add_argument("--out", required=True)

    sp = add("assemble", cmd_assemble, "compose shapes from parts and assemblers")
    sp.add_argument("--parts", required=True)
    sp.add_argument("--asm", required=True)
    sp.add_argument("--out", required=True)

    sp = add("eval-1nna", cmd_eval_1nna, "1-nearest-neighbour accuracy in percent")
    sp.add_argument("--gen", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--metric", choices=["cd", "emd"], default="cd")

    sp = add("preprocess", cmd_preprocess, "resample parts to the category mean size")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)

    sp = add("plot", cmd_plot, "three orthographic projections as SVG")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = RunConfig(**{**cfg.__dict__, "seed": args.seed})
        args.func(args, cfg)
    except (CliError, DataFormatError, ValueError, ArithmeticError, OSError) as err:
        msg = " ".join(str(err).split())
        print(f"partsym: error: {args.command}: {type(err).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
