"""Command-line front end: ``tcoarsen <command> ...``.

Exit status is 0 on success, 1 when verification finds a mismatch, 2 for
usage, parse, transform and precondition errors and 3 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .benchgen import (
    DIVERGENCE_KINDS, FULL_N, BenchSpec, buffer_manifest, full_grid, generate,
    sweep_grid, resolved_irregularity,
)
from .bufio import read_buffers, write_buffers
from .cache import CacheModel, calibrate, generate_indices
from .coarsen import CoarsenConfig, coarsen, emit_replication, emit_simd
from .errors import ExecutionError, ParseError, PreconditionError, TCoarsenError
from .interp import BufferSet, LaunchConfig, interpret
from .lsu import DEFAULT_CACHE_BITS, analyze
from .parser import parse_file
from .printer import print_kernel
from .verify import verify

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
MANIFEST_SCHEMA = "tcoarsen-run/1"


class UsageError(Exception):
    pass


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Records one command: inputs, the full config and every output written."""

    def __init__(self, command, config, inputs=(), seed=None):
        self.data = {"schema": MANIFEST_SCHEMA, "command": command,
                     "tool_version": __version__, "inputs": [str(p) for p in inputs],
                     "config": config, "seed": seed, "outputs": [],
                     "started": _now(), "finished": None}

    def output(self, path):
        self.data["outputs"].append(str(path))
        return path

    def write(self, path):
        self.data["finished"] = _now()
        Path(path).write_text(json.dumps(self.data, indent=2) + "\n")


def _write_text(path, text, manifest=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    if manifest is not None:
        manifest.output(path)


def _manifest_path(out):
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def _scalars(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise UsageError(f"--scalar expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        try:
            out[name] = int(value)
        except ValueError:
            out[name] = float(value)
    return out


# -- commands ------------------------------------------------------------------

def cmd_coarsen(args):
    if args.kind == "gapped" and not args.extent:
        raise UsageError("--kind gapped requires --extent")
    kernel = parse_file(args.input)
    config = CoarsenConfig(args.kind, args.degree, args.extent, args.tail_policy)
    result = coarsen(kernel, config)
    if args.simd is not None:
        result = emit_simd(result, args.simd)
    if args.compute_units is not None:
        result = emit_replication(result, args.compute_units)
    text = print_kernel(result)
    if args.output is None:
        sys.stdout.write(text)
        return EXIT_OK
    manifest = RunManifest("coarsen", {"kind": args.kind, "degree": args.degree,
                                       "extent": args.extent,
                                       "tail_policy": args.tail_policy,
                                       "simd": args.simd,
                                       "compute_units": args.compute_units},
                           [args.input])
    _write_text(args.output, text, manifest)
    manifest.write(_manifest_path(args.output))
    return EXIT_OK


def cmd_verify(args):
    original = parse_file(args.original)
    transformed = parse_file(args.transformed)
    result = verify(original, transformed, args.global_size, args.degree,
                    seed=args.seed, trials=args.trials, scalars=_scalars(args.scalar),
                    dump_dir=args.dump)
    lines = [json.dumps(v.to_dict()) for v in result.verdicts]
    for line in lines:
        print(line)
    if args.output:
        manifest = RunManifest("verify", {"global_size": args.global_size,
                                          "degree": args.degree, "trials": args.trials,
                                          "scalars": _scalars(args.scalar)},
                               [args.original, args.transformed], args.seed)
        _write_text(args.output, "\n".join(lines) + "\n", manifest)
        manifest.write(_manifest_path(args.output))
    for v in result.verdicts:
        if v.status != "match":
            where = ""
            if v.mismatch is not None:
                m = v.mismatch
                where = (f": {m.pointer}[{m.index}] expected {m.expected!r} got {m.actual!r} "
                         f"(written by work-item {m.original_writer} originally, "
                         f"{m.transformed_writer} after the transform)")
            elif v.error:
                where = f": {v.error}"
            print(f"verify: trial {v.trial} {v.status}{where}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_MISMATCH


def cmd_analyze(args):
    kernel = parse_file(args.input)
    report = analyze(kernel, cache_bits=args.cache_bits)
    text = report.to_json()
    if args.output is None:
        sys.stdout.write(text)
        return EXIT_OK
    manifest = RunManifest("analyze", {"cache_bits": args.cache_bits}, [args.input])
    _write_text(args.output, text, manifest)
    manifest.write(_manifest_path(args.output))
    return EXIT_OK


def _spec_from_args(args):
    fields = {}
    if args.spec:
        fields.update(json.loads(Path(args.spec).read_text()))
    for name, value in (("num_loads", args.loads), ("ai", args.ai),
                        ("access", args.access), ("irregularity", args.irregularity),
                        ("divergence", args.divergence),
                        ("divergence_degree", args.divergence_degree)):
        if value is not None:
            fields[name] = value
    fields["n"] = FULL_N if args.full_size else (args.n or fields.get("n", 1 << 20))
    fields["seed"] = args.seed
    return BenchSpec(**fields)


def _emit_bench(spec, outdir, manifest, stem=None):
    kernel = generate(spec)
    stem = stem or spec.name
    _write_text(outdir / f"{stem}.cl", print_kernel(kernel), manifest)
    info = {"kernel": kernel.name, "spec": spec.to_dict(),
            "irregularity": resolved_irregularity(spec),
            "buffers": buffer_manifest(spec)}
    if spec.access == "indirect":
        idx = generate_indices(spec.n, info["irregularity"], spec.seed)
        path = outdir / f"{stem}.idx.json"
        write_buffers(BufferSet({"idx": idx.values}), path)
        manifest.output(path)
        manifest.output(path.with_suffix(".bin"))
        info["index_file"] = path.name
    _write_text(outdir / f"{stem}.buffers.json", json.dumps(info, indent=2) + "\n", manifest)
    return stem


def cmd_genbench(args):
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    n = FULL_N if args.full_size else (args.n or 1 << 20)
    config = {"n": n, "grid": args.grid, "full_grid": args.full_grid,
              "hit_rate": args.hit_rate}
    manifest = RunManifest("genbench", config, [args.spec] if args.spec else [], args.seed)
    status = EXIT_OK
    if args.hit_rate is not None:
        cal = calibrate(args.hit_rate, CacheModel(), n, args.seed)
        _write_text(outdir / "calibration.json", json.dumps(cal.to_dict(), indent=2) + "\n",
                    manifest)
        print(json.dumps(cal.to_dict()))
        if cal.reachable:
            spec = BenchSpec(access="indirect", irregularity=cal.degree, n=n, seed=args.seed)
            _emit_bench(spec, outdir, manifest, f"{spec.name}_d{cal.degree}")
        else:
            print(f"genbench: hit rate {args.hit_rate:.2f} is unreachable "
                  f"(nearest {cal.achieved:.4f} at D={cal.degree})", file=sys.stderr)
    elif args.grid or args.full_grid:
        index = []
        if args.grid:
            for spec, target in sweep_grid(n, args.seed):
                stem = spec.name if target is None else f"{spec.name}_hr{round(target * 100)}"
                _emit_bench(spec, outdir, manifest, stem)
                index.append({"file": f"{stem}.cl", "hit_rate_target": target,
                              "spec": spec.to_dict()})
        else:
            for spec in full_grid(n, args.seed):
                _emit_bench(spec, outdir, manifest)
                index.append({"file": f"{spec.name}.cl", "spec": spec.to_dict()})
        _write_text(outdir / "grid.json", json.dumps(index, indent=2) + "\n", manifest)
    else:
        spec = _spec_from_args(args)
        config["spec"] = spec.to_dict()
        _emit_bench(spec, outdir, manifest)
    manifest.write(outdir / "manifest.json")
    return status


def cmd_calibrate(args):
    model = CacheModel(args.capacity_bits, args.line_bytes, args.associativity)
    cal = calibrate(args.target, model, args.n, args.seed)
    text = json.dumps(cal.to_dict(), indent=2) + "\n"
    if args.output:
        manifest = RunManifest("calibrate", {"target": args.target, "n": args.n,
                                             "capacity_bits": args.capacity_bits,
                                             "line_bytes": args.line_bytes,
                                             "associativity": args.associativity},
                               seed=args.seed)
        _write_text(args.output, text, manifest)
        manifest.write(_manifest_path(args.output))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args):
    kernel = parse_file(args.input)
    buffers = read_buffers(args.buffers)
    buffers.scalars.update(_scalars(args.scalar))
    launch = LaunchConfig(args.global_size, args.local_size)
    result = interpret(kernel, launch, buffers)
    out = BufferSet(result.buffers, dict(buffers.scalars), dict(buffers.local_sizes))
    stats = result.stats.as_dict()
    print(json.dumps(stats))
    if args.output:
        manifest = RunManifest("run", {"global_size": args.global_size,
                                       "local_size": launch.local_size},
                               [args.input, args.buffers])
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_buffers(out, path)
        manifest.output(path)
        manifest.output(path.with_suffix(".bin"))
        _write_text(path.with_name(path.stem + ".stats.json"),
                    json.dumps(stats, indent=2) + "\n", manifest)
        manifest.write(_manifest_path(path))
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="tcoarsen", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tcoarsen {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("coarsen", help="apply consecutive or gapped thread coarsening")
    c.add_argument("input")
    c.add_argument("--kind", choices=("consecutive", "gapped"), default="consecutive")
    c.add_argument("--degree", type=int, default=2)
    c.add_argument("--extent", help="int parameter holding the problem size N")
    c.add_argument("--tail-policy", choices=("require-divisible", "guard-tails"),
                   default="require-divisible")
    c.add_argument("--simd", type=int, help="also set num_simd_work_items")
    c.add_argument("--compute-units", type=int, help="also set num_compute_units")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_coarsen)

    v = sub.add_parser("verify", help="check a transformed kernel against the original")
    v.add_argument("original")
    v.add_argument("transformed")
    v.add_argument("--global-size", type=int, required=True)
    v.add_argument("--degree", type=int, required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=1)
    v.add_argument("--scalar", action="append", metavar="NAME=VALUE",
                   help="scalar argument (int params default to the global size)")
    v.add_argument("--dump", metavar="DIR", help="write inputs of failing trials here")
    v.add_argument("-o", "--output", help="write per-trial JSON verdicts here")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("analyze", help="predict load-store units as JSON")
    a.add_argument("input")
    a.add_argument("--cache-bits", type=int, default=DEFAULT_CACHE_BITS)
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("genbench", help="generate microbenchmark kernels and inputs")
    g.add_argument("--spec", help="JSON file with BenchSpec fields")
    g.add_argument("--loads", type=int)
    g.add_argument("--ai", type=int)
    g.add_argument("--access", choices=("direct", "indirect"))
    g.add_argument("--irregularity", type=int)
    g.add_argument("--divergence", choices=DIVERGENCE_KINDS)
    g.add_argument("--divergence-degree", type=int, choices=(0, 2, 4))
    g.add_argument("--n", type=int)
    g.add_argument("--full-size", action="store_true", help="use 64M-element arrays")
    g.add_argument("--seed", type=int, default=0)
    mode = g.add_mutually_exclusive_group()
    mode.add_argument("--grid", action="store_true",
                      help="one-factor sweeps: AI, divergence, degree, hit rate")
    mode.add_argument("--full-grid", action="store_true",
                      help="every AI x access x divergence configuration")
    mode.add_argument("--hit-rate", type=float, help="calibrate to this cache hit rate")
    g.add_argument("-o", "--output", required=True, metavar="DIR")
    g.set_defaults(func=cmd_genbench)

    k = sub.add_parser("calibrate", help="irregularity degree for a target hit rate")
    k.add_argument("--target", type=float, required=True)
    k.add_argument("--n", type=int, default=1 << 20)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--capacity-bits", type=int, default=CacheModel().capacity_bits)
    k.add_argument("--line-bytes", type=int, default=CacheModel().line_bytes)
    k.add_argument("--associativity", type=int, default=1)
    k.add_argument("-o", "--output")
    k.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("run", help="interpret a kernel over stored buffers")
    r.add_argument("input")
    r.add_argument("--buffers", required=True, help="buffer manifest JSON")
    r.add_argument("--global-size", type=int, required=True)
    r.add_argument("--local-size", type=int)
    r.add_argument("--scalar", action="append", metavar="NAME=VALUE")
    r.add_argument("-o", "--output", help="manifest path for the resulting buffers")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(exc.diagnostic(), file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, PreconditionError, TCoarsenError, ValueError, OSError) as exc:
        if isinstance(exc, ExecutionError):
            print(f"tcoarsen: execution error: {exc}", file=sys.stderr)
        else:
            print(f"tcoarsen: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:  # noqa: BLE001 - report anything else as an internal error
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
