"""Command line entry point: ``python -m hypimm <command> ...``.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 inconsistent
input data.  Every command writes ``manifest.json`` (configuration echo,
versions, tolerances, outputs) into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import warnings
from dataclasses import asdict, dataclass
from dataclasses import field as dc_field
from importlib import metadata, resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_INCONSISTENT = 0, 2, 3, 4
SUITE_NAMES = ("schatten", "hyperbolic", "surface", "codazzi", "energy", "reconstruct")
COMMANDS = ("surface", "minimize", "decompose", "reconstruct", "roundtrip", "verify")

logger = logging.getLogger("hypimm")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    genus: int = 2
    refine: int = 3
    eps_schedule: list = dc_field(default_factory=lambda: [1.0, 0.3, 0.1, 0.03, 0.0])
    max_iters: int = 5000
    tol: float = 1e-9
    newton_tol: float = 1e-10
    seed: int = 20240611
    out_dir: str = "."
    json: bool = False
    q_coeffs: Optional[list] = None
    qprime_coeffs: Optional[list] = None
    field: Optional[str] = None
    rep: Optional[str] = None
    init: str = "equidistant"
    init_t: float = 0.5
    init_map: Optional[str] = None
    out_rep: Optional[str] = None
    probe_clinearity: bool = False
    probe_step: float = 0.02
    gauss_scale: float = 1.0
    suite: list = dc_field(default_factory=list)

    def validate(self) -> "RunConfig":
        if self.genus < 2:
            raise UsageError("genus must be at least 2 (negative Euler characteristic)")
        if self.refine < 0:
            raise UsageError("refinement level must be nonnegative")
        if self.command in ("decompose", "reconstruct", "roundtrip") and self.refine < 2:
            raise UsageError("the Codazzi kernel needs --refine >= 2")
        for name in ("tol", "newton_tol", "probe_step"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.max_iters <= 0:
            raise UsageError("max-iters must be positive")
        s = [float(x) for x in self.eps_schedule]
        if not s or any(x < 0 for x in s) or any(b >= a for a, b in zip(s, s[1:])):
            raise UsageError("eps schedule must be strictly decreasing and nonnegative")
        if s[-1] != 0.0:
            logger.warning("eps schedule does not end at 0: the result minimizes a regularized energy")
        n = 6 * self.genus - 6
        for name in ("q_coeffs", "qprime_coeffs"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise UsageError(f"--{name.replace('_', '-')} needs {n} values at genus {self.genus}")
        for s_ in self.suite:
            if s_ not in SUITE_NAMES:
                raise UsageError(f"unknown suite {s_!r}")
        if self.init not in ("identity", "equidistant", "random", "file"):
            raise UsageError("--init must be identity, equidistant, random or file")
        return self


# --- helpers -----------------------------------------------------------------------------


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [_jsonable(float(x.real)), _jsonable(float(x.imag))]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def _fmt(v) -> str:
    return " ".join(f"{x:+.6f}" for x in np.asarray(v, dtype=float))


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def versions() -> dict:
    import scipy

    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"artifact": pkg, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


class Output:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(dumps(obj))
        return p

    def manifest(self, tolerances: dict, status: str) -> None:
        cfg = asdict(self.cfg)
        self.write_json(
            "manifest.json",
            {
                "format": "HMANIFEST 1",
                "command": self.cfg.command,
                "status": status,
                "config": cfg,
                "versions": versions(),
                "tolerances": tolerances,
                "outputs": sorted(set(self.files)),
            },
        )


def _emit(cfg: RunConfig, payload: dict, lines: Sequence[str]) -> None:
    if cfg.json:
        sys.stdout.write(dumps(payload))
    else:
        for line in lines:
            print(line)


def _load_mesh(cfg: RunConfig):
    from .surface import surface

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return surface(cfg.genus, cfg.refine)


def _datum(cfg: RunConfig, mesh, qd):
    """Vertex field from ``--field`` or from Newton at ``--q-coeffs``, ``--qprime-coeffs``."""
    from .codazzi import newton_det
    from .fileio import read_field

    if cfg.field:
        _, phi, support = read_field(cfg.field, mesh)
        if support != "vertex":
            phi = mesh.from_triangles(phi)
        return phi, None
    n = qd.dimension
    q = np.zeros(n) if cfg.q_coeffs is None else np.asarray(cfg.q_coeffs)
    qp = np.zeros(n) if cfg.qprime_coeffs is None else np.asarray(cfg.qprime_coeffs)
    md = newton_det(mesh, q, qp, qd=qd, tol=cfg.newton_tol)
    return md.phi, md


# --- commands --------------------------------------------------------------------------------


def cmd_surface(cfg: RunConfig) -> int:
    from .fileio import write_surface

    mesh = _load_mesh(cfg)
    out = Output(cfg)
    write_surface(mesh, out.path("surface.hsurf"))
    info = {
        "genus": mesh.genus,
        "level": mesh.level,
        "vertices": mesh.n_vertices,
        "triangles": mesh.n_triangles,
        "area": mesh.total_area,
        "area_target": 4 * np.pi * (mesh.genus - 1),
        "relation_residual": mesh.domain.relation_residual,
        "mesh_size": mesh.mesh_size,
    }
    out.write_json("surface.json", info)
    out.manifest({"gluing": 1e-9}, "ok")
    _emit(cfg, info, [f"area {info['area']:.10f} (4 pi (g - 1) = {info['area_target']:.10f})", f"relation residual {info['relation_residual']:.3e}"])
    return EXIT_OK


def _initial_map(cfg: RunConfig, mesh, rep):
    from . import hyperbolic as hyp
    from .energy import EquivariantMap
    from .fileio import read_map

    if cfg.init == "file" or cfg.init_map:
        f = read_map(cfg.init_map, mesh)
        return EquivariantMap(mesh, rep, f.positions)
    if not rep.is_fuchsian():
        # a plane-preserving copy may not be equivariant: start from a developed image instead
        raise UsageError("non-Fuchsian targets need --init-map (for instance from the reconstruct command)")
    if cfg.init == "identity":
        return EquivariantMap.identity(mesh, rep)
    if cfg.init == "equidistant":
        return EquivariantMap.equidistant(mesh, cfg.init_t, rep)
    rng = np.random.default_rng(cfg.seed)
    x = mesh.vertices
    v = hyp.project_tangent(x, rng.normal(size=x.shape) * cfg.init_t)
    return EquivariantMap(mesh, rep, hyp.exp_point(x, v))


def cmd_minimize(cfg: RunConfig) -> int:
    from .codazzi import el_residuals, mesh_tolerance
    from .energy import minimize
    from .fileio import write_map
    from .reconstruct import extract_data
    from .representation import Representation

    mesh = _load_mesh(cfg)
    if cfg.rep:
        rep = Representation.from_dict(json.loads(Path(cfg.rep).read_text()))
        if rep.genus != mesh.genus:
            raise UsageError("representation and surface have different genus")
    else:
        rep = Representation.fuchsian(mesh.domain)
    f0 = _initial_map(cfg, mesh, rep)
    out = Output(cfg)
    res = minimize(rep, f0, schedule=cfg.eps_schedule, max_iter=cfg.max_iters, gtol=cfg.tol)
    with out.path("energy_trace.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "evaluation", "energy"])
        for eps, it, val in res.trace:
            w.writerow([repr(float(eps)), it, repr(float(val))])
    report = {"energy": res.energy, "converged": res.converged, "gradient_norm": res.gradient_norm, "stages": res.stages}
    try:
        b, a = extract_data(res.map)
        report["el_residuals"] = el_residuals(mesh, b, a)
    except ValueError as exc:
        report["el_residuals"] = None
        report["el_error"] = str(exc)
    report["mesh_tolerance"] = mesh_tolerance(mesh)
    write_map(res.map, out.path("minimizer.hmap"))
    if not res.converged:
        report["error"] = {"stage": "minimize", "message": "optimizer did not converge"}
        out.write_json("minimize.json", report)
        out.manifest({"gtol": cfg.tol}, "numerical-failure")
        _emit(cfg, report, ["error: optimizer did not converge", dumps(report)])
        return EXIT_NUMERICAL
    out.write_json("minimize.json", report)
    out.manifest({"gtol": cfg.tol, "mesh_tolerance": report["mesh_tolerance"]}, "ok")
    lines = [f"energy {res.energy:.10f}"]
    if report["el_residuals"]:
        lines += [f"  {k} {v:.3e}" for k, v in sorted(report["el_residuals"].items())]
    _emit(cfg, report, lines)
    return EXIT_OK


def cmd_decompose(cfg: RunConfig) -> int:
    from .codazzi import decompose, qd_basis, symmetry_defect
    from .fileio import write_field

    mesh = _load_mesh(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        qd = qd_basis(mesh)
    out = Output(cfg)
    phi, md = _datum(cfg, mesh, qd)
    if symmetry_defect(phi) > 1e-8 * max(1.0, np.abs(phi).max()):
        raise _Inconsistent("field is not self-adjoint")
    dec = decompose(mesh, phi, qd)
    if md is not None:
        write_field(mesh, phi, out.path("phi.hfield"))
    report = {
        "q": dec.q,
        "qprime": dec.qprime,
        "u_mean": complex(mesh.integrate(dec.u) / mesh.total_area),
        "u_range": [float(np.abs(dec.u).min()), float(np.abs(dec.u).max())],
        "projection_residual": dec.projection_residual,
        "reassembly_error": dec.reassembly_error,
        "qd_gap": qd.gap,
    }
    if md is not None:
        report["newton"] = {"iterations": md.iterations, "det_residual": md.det_residual, "positivity_margin": md.positivity_margin, "history": md.history}
    write_field(mesh, dec.u[:, None, None] * np.eye(2), out.path("u.hfield"), name="u")
    out.write_json("decompose.json", report)
    out.manifest({"newton_tol": cfg.newton_tol, "max_projection_residual": 0.05}, "ok")
    _emit(cfg, report, [f"q  {_fmt(dec.q)}", f"q' {_fmt(dec.qprime)}", f"projection residual {dec.projection_residual:.3e}"])
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig) -> int:
    from .codazzi import qd_basis, split_b_a
    from .fileio import write_map
    from .reconstruct import clinearity_probe, fc_value, integrate_immersion, monodromy_report

    mesh = _load_mesh(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        qd = qd_basis(mesh)
    out = Output(cfg)
    phi, md = _datum(cfg, mesh, qd)
    b, a = split_b_a(phi)
    f, frames = integrate_immersion(mesh, cfg.gauss_scale * b, a)
    rep, mon = monodromy_report(frames, mesh)
    rep_path = Path(cfg.out_rep) if cfg.out_rep else out.path("rep.json")
    if cfg.out_rep:
        out.files.append(str(rep_path))
    rep_path.write_text(rep.dumps() + "\n")
    write_map(f.__class__(mesh, rep, f.positions), out.path("immersion.hmap"))
    report = {
        "relation_residual": rep.relation_residual,
        "raw_relation_residual": mon.raw_relation_residual,
        "side_matching": mon.fit_residuals,
        "loop_defect": float(frames.loop_defects.max()),
        "lorentz_residual": frames.lorentz_residual(),
        "trace_invariants": rep.trace_invariants(),
        "fc": fc_value(mesh, phi),
    }
    if cfg.probe_clinearity:
        n = qd.dimension
        q = np.zeros(n) if cfg.q_coeffs is None else np.asarray(cfg.q_coeffs)
        qp = np.zeros(n) if cfg.qprime_coeffs is None else np.asarray(cfg.qprime_coeffs)
        d = np.zeros(n)
        d[0] = 1.0
        pr = clinearity_probe(mesh, q, qp, d, step=cfg.probe_step, qd=qd)
        report["clinearity"] = asdict(pr)
    out.write_json("reconstruct.json", report)
    out.manifest({"newton_tol": cfg.newton_tol}, "ok")
    _emit(cfg, report, [f"relation residual {rep.relation_residual:.3e} (before projection {mon.raw_relation_residual:.3e})", f"representation written to {rep_path}"])
    return EXIT_OK


def cmd_roundtrip(cfg: RunConfig) -> int:
    from .codazzi import qd_basis
    from .fileio import write_map
    from .pipeline import StageError, roundtrip
    from .reconstruct import InconsistentDataError

    mesh = _load_mesh(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        qd = qd_basis(mesh)
    out = Output(cfg)
    n = qd.dimension
    q = np.zeros(n) if cfg.q_coeffs is None else np.asarray(cfg.q_coeffs)
    qp = np.zeros(n) if cfg.qprime_coeffs is None else np.asarray(cfg.qprime_coeffs)
    try:
        rep = roundtrip(
            mesh, q, qp, qd=qd, schedule=cfg.eps_schedule, max_iter=cfg.max_iters, gtol=cfg.tol,
            newton_tol=cfg.newton_tol, gauss_scale=cfg.gauss_scale,
        )
    except StageError as exc:
        code = EXIT_INCONSISTENT if isinstance(exc.cause, InconsistentDataError) else EXIT_NUMERICAL
        err = {"error": {"stage": exc.stage, "type": type(exc.cause).__name__, "message": str(exc.cause)}}
        out.write_json("roundtrip.json", err)
        out.manifest({"newton_tol": cfg.newton_tol, "gtol": cfg.tol}, "failed")
        _emit(cfg, err, [f"error in stage {exc.stage}: {exc.cause}"])
        return code
    summary = rep.summary()
    summary.pop("timings")
    write_map(rep.minimizer, out.path("minimizer.hmap"))
    out.write_json("roundtrip.json", summary)
    out.manifest({"newton_tol": cfg.newton_tol, "gtol": cfg.tol}, "ok")
    _emit(
        cfg,
        summary,
        [
            f"field error |phi' - phi| / |phi| = {rep.field_error:.4%}",
            f"Re F_C = {rep.fc.real:.8f}, minimized F = {rep.energy:.8f} (gap {rep.energy_gap:.3e})",
            f"relation residual {rep.relation_residual:.3e}",
        ],
    )
    return EXIT_OK


def verify_schema() -> dict:
    return json.loads(resources.files("hypimm").joinpath("schemas/verify_report.schema.json").read_text())


def cmd_verify(cfg: RunConfig) -> int:
    import jsonschema

    from .checks import run_suite

    out = Output(cfg)
    names = cfg.suite or list(SUITE_NAMES)
    suites = []
    lines = []
    for name in names:
        results = run_suite(name, seed=cfg.seed)
        margins = [r.to_dict()["worst_margin"] for r in results if r.gating]
        margins = [m for m in margins if m is not None and np.isfinite(m)]
        suites.append(
            {
                "name": name,
                "passed": all(r.passed for r in results if r.gating),
                "seconds": sum(r.seconds for r in results),
                "worst_margin": min(margins) if margins else None,
                "criteria": [r.to_dict() for r in results],
            }
        )
        lines.append(f"== {name}")
        for r in results:
            lines += r.lines()
    report = {"format": "HVERIFY 1", "seed": cfg.seed, "passed": all(s["passed"] for s in suites), "suites": suites}
    report = json.loads(dumps(report))
    jsonschema.validate(report, verify_schema())
    out.write_json("verify.json", report)
    out.manifest({}, "ok" if report["passed"] else "failed")
    lines.append("all suites passed" if report["passed"] else "some suites FAILED")
    _emit(cfg, report, lines)
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


class _Inconsistent(ValueError):
    pass


HANDLERS = {
    "surface": cmd_surface,
    "minimize": cmd_minimize,
    "decompose": cmd_decompose,
    "reconstruct": cmd_reconstruct,
    "roundtrip": cmd_roundtrip,
    "verify": cmd_verify,
}


# --- argument parsing --------------------------------------------------------------------------


def _global_args(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file with option values (flags override it)")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out-dir", default=S)
    p.add_argument("--json", action="store_true", default=S, help="print the report as JSON")
    p.add_argument("-v", "--verbose", action="store_true", default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="hypimm", description="Minimizing immersions of hyperbolic surfaces into H^3.")
    _global_args(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    def mesh_args(p):
        p.add_argument("--genus", type=int, default=S)
        p.add_argument("--refine", type=int, default=S, help="subdivision level")

    def coeff_args(p):
        p.add_argument("--q-coeffs", type=_floats, default=S, help="real parts, comma separated")
        p.add_argument("--qprime-coeffs", type=_floats, default=S, help="imaginary parts, comma separated")
        p.add_argument("--newton-tol", type=float, default=S)
        p.add_argument("--field", default=S, help="HFIELD file with a vertex or triangle field (overrides the coefficients)")

    def opt_args(p):
        p.add_argument("--eps-schedule", type=_floats, default=S, help="e.g. 1,0.3,0.1,0.03,0")
        p.add_argument("--max-iters", type=int, default=S)
        p.add_argument("--tol", type=float, default=S, help="gradient tolerance of the optimizer")

    p = sub.add_parser("surface", help="build the mesh and write an HSURF file")
    mesh_args(p)
    _global_args(p)

    p = sub.add_parser("minimize", help="minimize the energy over equivariant maps")
    mesh_args(p)
    opt_args(p)
    p.add_argument("--rep", default=S, help="representation JSON (default: the Fuchsian one)")
    p.add_argument("--init", default=S, choices=["identity", "equidistant", "random", "file"])
    p.add_argument("--init-t", type=float, default=S, help="pushoff distance or random scale")
    p.add_argument("--init-map", default=S, help="HMAP file with the initial map")
    _global_args(p)

    p = sub.add_parser("decompose", help="split a Codazzi field as cod(u) + b_q + i b_q'")
    mesh_args(p)
    coeff_args(p)
    _global_args(p)

    p = sub.add_parser("reconstruct", help="integrate a datum and extract its monodromy")
    mesh_args(p)
    coeff_args(p)
    p.add_argument("--out-rep", default=S, help="where to write the representation JSON")
    p.add_argument("--probe-clinearity", action="store_true", default=S)
    p.add_argument("--probe-step", type=float, default=S)
    p.add_argument("--gauss-scale", type=float, default=S, help=argparse.SUPPRESS)
    _global_args(p)

    p = sub.add_parser("roundtrip", help="datum -> monodromy -> minimizer -> datum")
    mesh_args(p)
    coeff_args(p)
    opt_args(p)
    p.add_argument("--gauss-scale", type=float, default=S, help="multiply b before integration (corrupts the data)")
    _global_args(p)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--suite", action="append", default=S, choices=SUITE_NAMES)
    _global_args(p)
    return parser


def make_config(argv: Optional[Sequence[str]] = None) -> tuple[RunConfig, bool]:
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    values: dict = {}
    if "config" in ns:
        try:
            values.update(json.loads(Path(ns["config"]).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns['config']}: {exc}") from exc
    values.update({k: v for k, v in ns.items() if k not in ("config", "verbose")})
    values = {k.replace("-", "_"): v for k, v in values.items()}
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
    if values.get("command") == "verify" and isinstance(values.get("suite"), str):
        values["suite"] = [values["suite"]]
    cfg = RunConfig(**values)
    return cfg.validate(), bool(ns.get("verbose", False))


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .codazzi import DecompositionError, NewtonError
    from .energy import ConvergenceError
    from .fileio import FormatError
    from .reconstruct import InconsistentDataError
    from .surface import SolverError

    try:
        cfg, verbose = make_config(argv)
    except UsageError as exc:
        print(f"hypimm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"hypimm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InconsistentDataError, DecompositionError, FormatError, _Inconsistent) as exc:
        _fail(cfg, "inconsistent input data", exc)
        return EXIT_INCONSISTENT
    except (NewtonError, ConvergenceError, SolverError, np.linalg.LinAlgError, ValueError) as exc:
        _fail(cfg, "numerical failure", exc)
        return EXIT_NUMERICAL


def _fail(cfg: RunConfig, kind: str, exc: BaseException) -> None:
    err = {"error": {"kind": kind, "command": cfg.command, "type": type(exc).__name__, "message": str(exc)}}
    if cfg.json:
        sys.stdout.write(dumps(err))
    print(f"hypimm: {kind}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
