"""Command-line experiment runner.

``ssmp <kind> --config FILE [--seed N] [--out-dir DIR] [--threads N]``

Exit status: 0 when every requested check passes (or nothing is checked),
1 when a check fails, 2 on configuration, usage or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import lamperti, maps, paths, processes, veritas
from .config import KINDS, ConfigError, parse_config, serialize_config
from .rng import RngStream

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _write_path(path, out_dir: Path, name: str, cfg) -> str:
    fmt = cfg.output.format
    if fmt == "csv":
        target = out_dir / f"{name}.csv"
        target.write_text(paths.to_csv(path, provenance=serialize_config(cfg)))
    else:
        target = out_dir / f"{name}.ssmp"
        target.write_bytes(paths.to_binary(path))
        side = out_dir / f"{name}.ssmp.json"
        side.write_text(json.dumps({"seed": cfg.seed, "config": cfg.model_dump(mode="json")}, indent=2) + "\n")
    return target.name


def _source_paths(cfg):
    proc = cfg.process.build()
    stream = RngStream(cfg.seed)
    return [processes.simulate(proc, stream.derive(k)) for k in range(cfg.n_paths)]


def _run_transforms(cfg, out_dir: Path) -> dict:
    prefix = cfg.output.prefix
    files = []
    if cfg.kind == "lamperti-forward":
        spec = cfg.map.build()
        stream = RngStream(cfg.seed)
        for k in range(cfg.n_paths):
            mp = maps.simulate_map(spec, cfg.start_state, cfg.xi0, cfg.horizon, cfg.step, stream.derive(k))
            files.append(_write_path(mp, out_dir, f"{prefix}_{k}_map", cfg))
            files.append(_write_path(lamperti.lamperti_forward(mp, cfg.alpha), out_dir, f"{prefix}_{k}", cfg))
        return {"artifacts": files}
    for k, xp in enumerate(_source_paths(cfg)):
        files.append(_write_path(xp, out_dir, f"{prefix}_{k}", cfg))
        if cfg.kind == "lamperti-inverse":
            files.append(_write_path(lamperti.lamperti_inverse(xp), out_dir, f"{prefix}_{k}_map", cfg))
        elif cfg.kind == "invert":
            files.append(_write_path(lamperti.invert_path(xp), out_dir, f"{prefix}_{k}_inverted", cfg))
        elif cfg.kind == "embed":
            files.append(_write_path(lamperti.embed_unabsorbed(xp), out_dir, f"{prefix}_{k}_embedded", cfg))
    return {"artifacts": files}


def _exponent(cfg) -> dict:
    spec = cfg.map.build()
    u = complex(cfg.u_re, cfg.u_im)
    a = maps.matrix_exponent(spec, u)
    out = {"u": [u.real, u.imag], "A": _cmat(a)}
    if cfg.t is not None:
        out["t"] = cfg.t
        out["exp_At"] = _cmat(maps.map_characteristic(spec, u, cfg.t))
    return out


def _cmat(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def _checks(cfg, threads: int | None) -> list[veritas.VerificationReport | maps.ReversibilityReport]:
    stream = RngStream(cfg.seed)
    k = cfg.kind
    if k == "check-duality":
        return [veritas.check_duality(cfg.proc_a.build(), cfg.proc_b.build(), cfg.measure.build(), cfg.t,
                                      cfg.f.build(), cfg.g.build(), cfg.n, stream, cfg.n_se, threads)]
    if k == "check-self-duality":
        return [veritas.check_self_duality(cfg.sampler.build(), cfg.measure.build(), cfg.t, cfg.f.build(),
                                           cfg.g.build(), cfg.n, stream, cfg.n_se, threads)]
    if k == "check-h":
        return [veritas.check_h_transform(cfg.base.build(), cfg.candidate.build(), cfg.h.build(), cfg.x, cfg.t,
                                          cfg.g.build(), cfg.n, stream, cfg.n_se, threads)]
    if k == "check-moment":
        spec = cfg.map.build()
        return [veritas.check_moment_identity(spec, lam, cfg.t, cfg.n, stream.derive(i), cfg.n_se, threads)
                for i, lam in enumerate(cfg.lambdas)]
    if k == "check-isotropy":
        return [veritas.check_isotropy(cfg.sampler.build(), cfg.x0, cfg.t, cfg.rotations(), cfg.n, stream,
                                       cfg.level, threads)]
    if k == "check-reversibility":
        return [maps.check_reversibility(cfg.map.build(), cfg.pi, stream, cfg.tol)]
    raise ConfigError(f"{k} is not a check")


def run(cfg, out_dir: Path, threads: int | None = None) -> int:
    """Execute a validated experiment, write ``report.json`` and return the exit status."""
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"kind": cfg.kind, "seed": cfg.seed, "config": cfg.model_dump(mode="json")}
    status = EXIT_PASS
    if cfg.kind.startswith("check-"):
        results = _checks(cfg, threads)
        dicts = [r.to_dict() for r in results]
        report["results"] = dicts
        report["pass"] = all(d["pass"] for d in dicts)
        for r, d in zip(results, dicts):
            print(r.summary() if hasattr(r, "summary") else
                  f"{'PASS' if d['pass'] else 'FAIL'} reversibility: residual={d['balance_residual']:.4g}")
        status = EXIT_PASS if report["pass"] else EXIT_FAIL
    elif cfg.kind == "exponent":
        report["results"] = _exponent(cfg)
    else:
        report.update(_run_transforms(cfg, out_dir))
        print(f"wrote {len(report['artifacts'])} path file(s) to {out_dir}")
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssmp", description="Self-similar Markov process experiments.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="YAML experiment document")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out-dir", default=".", help="directory for reports and paths")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default: ${veritas.THREADS_ENV} or 1)")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_ERROR
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text, kind=args.kind)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return run(cfg, Path(args.out_dir), args.threads)
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"ssmp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
