"""Command-line front end: ``vcmass <subcommand> ...``.

Every run writes CSV files whose leading ``#`` lines describe the plot they
feed and the fully resolved configuration, plus a ``run.json`` sidecar.  CSV
bodies depend only on the configuration; the timestamp lives in the sidecar.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from . import __version__
from .dynamics import BENCHMARKS, run_convergence, tcrit_table
from .errors import (
    DefinitenessError,
    EmptySystemError,
    InstabilityError,
    InvalidArgumentError,
    LoadEvaluationError,
    MeshFormatError,
    UnsupportedConfigurationError,
)
from .meshkit import DIRICHLET, NEUMANN, ElementKind, read_mesh

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return "nan" if not math.isfinite(value) else repr(float(value))
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path: Path, figure: str, config: dict, header: list[str], rows) -> Path:
    buf = io.StringIO()
    buf.write(f"# figure: {figure}\n")
    buf.write(f"# config: {json.dumps(config, sort_keys=True, default=str)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())
    return path


def write_sidecar(out: Path, command: str, config: dict, files: list[Path], extra: dict | None = None) -> None:
    meta = {
        "command": command,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config": config,
        "files": [p.name for p in files],
    }
    meta.update(extra or {})
    _atomic_write(out / "run.json", json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


# -- subcommands ----------------------------------------------------------------

def cmd_spectrum(args) -> int:
    from .spectra import SPECTRUM_BENCHMARKS, compute_spectrum, normalized_spectrum, spectrum_problem
    from .dynamics import scaled_operators

    if args.benchmark not in SPECTRUM_BENCHMARKS:
        raise UsageError(f"unknown benchmark {args.benchmark!r}; valid: {', '.join(SPECTRUM_BENCHMARKS)}")
    if args.benchmark == "string1d" and args.bc != DIRICHLET:
        raise UsageError("string1d supports only --bc dirichlet; drum2d-quad and drum2d-tri accept neumann")
    config = {"benchmark": args.benchmark, "bc": args.bc, "p": args.p, "c": args.c, "seed": args.seed}
    ratio_rows, abs_rows = [], []
    summary = {}
    for P in args.p:
        space, family = spectrum_problem(args.benchmark, P, args.bc)
        ops = scaled_operators(space)
        for c in args.c:
            spec = compute_spectrum(space, c=c, family=family, operators=ops)
            x, ratio = normalized_spectrum(spec, family)
            ratio_rows += [(xi, ri, c, P) for xi, ri in zip(x, ratio)]
            freqs = np.sort(spec.frequencies[spec.matched_indices])
            abs_rows += [(k + 1, w, c, P) for k, w in enumerate(freqs)]
            summary[f"P={P},c={c:g}"] = {"modes": len(ratio), "max_ratio": float(ratio.max()),
                                         "last_ratio": float(ratio[-1])}
    out = Path(args.out)
    files = [
        write_csv(out / "spectrum.csv", "normalized discrete/analytic frequency ratio against normalized mode number",
                  config, ["n_over_N", "ratio", "c", "P"], ratio_rows),
        write_csv(out / "spectrum_abs.csv", "absolute discrete eigenfrequencies in ascending order",
                  config, ["n", "omega", "c", "P"], abs_rows),
    ]
    write_sidecar(out, "spectrum", config, files, {"summary": summary})
    for key, val in summary.items():
        print(f"{key}: {val['modes']} modes, max ratio {val['max_ratio']:.4f}, last ratio {val['last_ratio']:.4f}")
    return EXIT_OK


def _load_meshes(args):
    if not args.mesh:
        return None
    meshes = []
    for path in args.mesh.split(","):
        try:
            meshes.append(read_mesh(path))
        except FileNotFoundError:
            raise UsageError(f"mesh file not found: {path}") from None
        except MeshFormatError as exc:
            raise MeshFormatError(f"{path}: {exc}", line=exc.line) from None
    return meshes


def cmd_tcrit(args) -> int:
    meshes = _load_meshes(args)
    refinements = meshes if meshes else args.refine
    config = {"mesh": args.mesh or args.benchmark_mesh, "kind": args.kind, "refine": args.refine if not meshes else None,
              "p": args.p, "c": args.c, "seed": args.seed}
    cs = sorted(set([0.0] + list(args.c)))
    rows = tcrit_table(refinements, args.p, cs, mesh=args.benchmark_mesh, kind=ElementKind(args.kind))
    out = Path(args.out)
    files = [write_csv(out / "tcrit.csv", "critical time step and its gain over c=0 per refinement and order",
                       config, ["refinement", "P", "c", "tcrit", "ratio"],
                       [(r.refinement, r.P, r.c, r.tcrit, r.ratio) for r in rows])]
    write_sidecar(out, "tcrit", config, files)
    for r in rows:
        print(f"refinement={r.refinement} P={r.P} c={r.c:g} tcrit={r.tcrit:.6g} ratio={r.ratio:.4f}")
    return EXIT_OK


def cmd_converge(args) -> int:
    if args.benchmark not in BENCHMARKS:
        raise UsageError(f"unknown benchmark {args.benchmark!r}; valid: {', '.join(sorted(BENCHMARKS))}")
    meshes = _load_meshes(args)
    refinements = meshes if meshes else args.refine
    config = {"benchmark": args.benchmark, "mesh": args.mesh or args.benchmark_mesh, "kind": args.kind,
              "refine": args.refine if not meshes else None, "p": args.p, "c": args.c,
              "integrator": args.integrator, "safety": args.safety, "t_end": args.t_end, "seed": args.seed}
    rows, unstable = [], False
    for P in args.p:
        for c in args.c:
            table = run_convergence(args.benchmark, refinements, P, c, args.integrator, args.safety, args.t_end,
                                    mesh=args.benchmark_mesh, kind=ElementKind(args.kind), flag_instability=True)
            for r in table.rows:
                unstable |= r.unstable_step is not None
                rows.append((r.h, r.error, r.rate, c, P, r.dt, r.steps,
                             "" if r.unstable_step is None else r.unstable_step))
                note = f" UNSTABLE at step {r.unstable_step}" if r.unstable_step is not None else ""
                print(f"P={P} c={c:g} h={r.h:.4g} error={r.error:.4e} rate={r.rate:.3f}{note}")
    out = Path(args.out)
    files = [write_csv(out / "convergence.csv", "L2 error at the final time against element size",
                       config, ["h", "error", "rate", "c", "P", "dt", "steps", "unstable_step"], rows)]
    write_sidecar(out, "converge", config, files)
    return EXIT_NUMERICAL if unstable else EXIT_OK


def cmd_beam(args) -> int:
    from .hyperel import BeamConfig, build_beam, dft_blackman, run_beam, tcrit_gains

    P, c = args.p[0], args.c[0]
    if len(args.p) > 1 or len(args.c) > 1:
        raise UsageError("beam takes a single --p and a single --c (use --sweep-c for a gain curve)")
    cfg = BeamConfig(P=P, c=c, t_end=args.t_end, counts=tuple(args.counts), amplitude=args.amplitude,
                     sample_every=args.sample_every)
    config = dict(cfg.as_dict(), seed=args.seed, fft_window=args.fft_window, sweep_c=args.sweep_c)
    out = Path(args.out)
    files = []
    if args.sweep_c:
        cs = [0.0] + list(np.geomspace(1.0, 5000.0, 8))
        gains = tcrit_gains(cfg, cs)
        files.append(write_csv(out / "beam_tcrit.csv", "critical time step gain of the beam against c",
                               config, ["c", "tcrit", "ratio", "P"], [(g[0], g[1], g[2], P) for g in gains]))
        for g in gains:
            print(f"c={g[0]:.6g} tcrit={g[1]:.6g} ratio={g[2]:.4f}")
    else:
        model = build_beam(cfg)
        hist = run_beam(cfg, model)
        t = np.asarray(hist.times)
        tip = hist.probe("tip")
        files.append(write_csv(out / "beam_tip.csv", "tip displacement against time", config,
                               ["t", "ux", "uy", "uz"], [(ti, *ui) for ti, ui in zip(t, tip)]))
        twist = hist.probe("twist")
        sel = t <= args.fft_window * (1 + 1e-12)
        if sel.sum() >= 8:
            freq, mag = dft_blackman(t[sel], twist[sel])
            files.append(write_csv(out / "beam_twist_fft.csv",
                                   "Blackman-windowed Fourier magnitude of the tip twist angle", config,
                                   ["freq_hz", "magnitude", "c", "P"], [(f, m, c, P) for f, m in zip(freq, mag)]))
        else:
            print("too few samples inside the FFT window; twist spectrum skipped", file=sys.stderr)
        print(f"steps={hist.metadata['steps']} dt={hist.metadata['dt']:.4g} tcrit={hist.metadata['tcrit']:.4g}")
    write_sidecar(out, "beam", config, files)
    return EXIT_OK


def cmd_mesh_info(args) -> int:
    meshes = _load_meshes(args)
    if meshes is None:
        from .dynamics import benchmark_mesh

        meshes = [benchmark_mesh(args.benchmark_mesh, n, ElementKind(args.kind)) for n in args.refine]
    for mesh in meshes:
        tags, counts = np.unique(mesh.boundary_tags.astype(str), return_counts=True)
        info = {
            "kind": mesh.kind.value,
            "dim": mesh.dim,
            "nodes": mesh.n_nodes,
            "elements": mesh.n_elements,
            "interior_facets": len(mesh.interior_facets),
            "boundary_facets": {str(t): int(n) for t, n in zip(tags, counts)},
            "h_min": float(mesh.diameters().min()),
            "h_max": float(mesh.diameters().max()),
        }
        print(json.dumps(info, sort_keys=True))
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcmass", description="Variationally consistent mass scaling benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, orders="1", cs="0"):
        p.add_argument("--p", type=_ints, default=_ints(orders), help="polynomial orders, comma separated")
        p.add_argument("--c", type=_floats, default=_floats(cs), help="scaling factors c, comma separated")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="seed recorded with the run")

    def meshes(p, refine):
        p.add_argument("--mesh", help="mesh document(s), comma separated; replaces --refine")
        p.add_argument("--refine", type=_ints, default=_ints(refine), help="elements per side of built-in meshes")
        p.add_argument("--benchmark-mesh", default="square-hole", choices=["square-hole", "square"])
        p.add_argument("--kind", default="quad", choices=["quad", "triangle"])

    sp_ = sub.add_parser("spectrum", help="normalized eigenfrequency spectra")
    sp_.add_argument("benchmark", help="string1d, drum2d-quad or drum2d-tri")
    sp_.add_argument("--bc", default=DIRICHLET, choices=[DIRICHLET, NEUMANN])
    common(sp_, "1", "0")
    sp_.set_defaults(func=cmd_spectrum)

    tc = sub.add_parser("tcrit", help="critical time steps over refinements, orders and c")
    common(tc, "1,2,3,4", "1,5")
    meshes(tc, "8,12,16")
    tc.set_defaults(func=cmd_tcrit)

    cv = sub.add_parser("converge", help="L2 convergence of the forced-vibration benchmark")
    cv.add_argument("--benchmark", default="nine-term", help="nine-term or single-mode")
    cv.add_argument("--integrator", default="rk4", choices=["rk4", "cd"])
    cv.add_argument("--safety", type=float, default=0.9)
    cv.add_argument("--t-end", type=float, default=0.1)
    common(cv, "1,2,3", "0,1")
    meshes(cv, "16,32,64")
    cv.set_defaults(func=cmd_converge)

    bm = sub.add_parser("beam", help="hyperelastic beam released from a bent shape")
    bm.add_argument("--sweep-c", action="store_true", help="write the critical-step gain over c instead")
    bm.add_argument("--t-end", type=float, default=0.01)
    bm.add_argument("--counts", type=_ints, default=[20, 4, 2], help="elements along x,y,z")
    bm.add_argument("--amplitude", type=float, default=1.0, help="scale of the initial bend")
    bm.add_argument("--sample-every", type=int, default=1)
    bm.add_argument("--fft-window", type=float, default=0.01, help="seconds of twist data transformed")
    common(bm, "1", "0")
    bm.set_defaults(func=cmd_beam)

    mi = sub.add_parser("mesh-info", help="summarize a mesh document or built-in mesh")
    meshes(mi, "8")
    mi.add_argument("--out", default=".")
    mi.add_argument("--seed", type=int, default=0)
    mi.set_defaults(func=cmd_mesh_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidArgumentError, UnsupportedConfigurationError, MeshFormatError) as exc:
        print(f"vcmass {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstabilityError, DefinitenessError, EmptySystemError, LoadEvaluationError,
            ArithmeticError, np.linalg.LinAlgError, spla.ArpackError) as exc:
        print(f"vcmass {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
