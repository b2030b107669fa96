"""Batch driver for refinement studies.

Configuration comes from defaults, then an optional ``key = value`` file
(``--config``), then command line flags, each overriding the previous.
Exit status: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ._validation import DOMAINS, check_case, check_choice, check_integer, check_levels, check_positive_float
from .assembly import TRACE_PROJECTIONS
from .estimator import SOLVERS, MaxwellHDG, SolverFailure
from .mesh import build_mesh
from .polyquad import DEFAULT_GRADING_LEVELS
from .postprocess import to_csv, to_markdown

logger = logging.getLogger("hdgmaxwell")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
FORMATS = ("csv", "md")


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    case: str = "smooth"
    domain: str | None = None  # smooth -> cube, singular -> lshape
    k: int = 1
    m: int | None = None  # smooth -> k - 1, singular -> k
    alpha: int = -1
    trace_projection: str | None = None  # smooth -> l2, singular -> hdiv
    levels: list[int] = field(default_factory=lambda: [2, 4, 8])
    solver: str = "direct"
    gmres_tol: float = 1e-10
    gmres_restart: int = 200
    gmres_max_iters: int = 5000
    quad_inc: int = 0
    grading_levels: int = DEFAULT_GRADING_LEVELS
    out: str | None = None
    format: str = "md"
    threads: int = 1
    dump_mesh: str | None = None
    dump_matrix: str | None = None

    def estimator(self) -> MaxwellHDG:
        return MaxwellHDG(
            k=self.k, m=self.m, alpha=self.alpha, trace_projection=self.trace_projection,
            solver=self.solver, gmres_tol=self.gmres_tol, gmres_restart=self.gmres_restart,
            gmres_max_iters=self.gmres_max_iters, quad_inc=self.quad_inc, grading_levels=self.grading_levels,
        )

    def title(self) -> str:
        return (
            f"{self.case} on {self.domain}: k={self.k}, m={self.m}, alpha={self.alpha}, "
            f"boundary projection {self.trace_projection}"
        )

    def echo(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                value = ",".join(map(str, value))
            lines.append(f"{f.name} = {'' if value is None else value}")
        return "\n".join(lines) + "\n"


def _levels(text: str) -> list[int]:
    items = [s.strip() for s in str(text).split(",") if s.strip()]
    try:
        return [int(s) for s in items]
    except ValueError:
        raise ValueError(f"levels must be comma-separated integers, got {text!r}") from None


def _optional_str(text: str) -> str | None:
    return text or None


CONVERTERS = {
    "case": str,
    "domain": str,
    "k": int,
    "m": int,
    "alpha": int,
    "trace_projection": str,
    "levels": _levels,
    "solver": str,
    "gmres_tol": float,
    "gmres_restart": int,
    "gmres_max_iters": int,
    "quad_inc": int,
    "grading_levels": int,
    "out": _optional_str,
    "format": str,
    "threads": int,
    "dump_mesh": _optional_str,
    "dump_matrix": _optional_str,
}


def read_config_file(path) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONVERTERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONVERTERS[key](value)
        except ValueError as err:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {err}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hdgmaxwell",
        description="HDG convergence studies for the mixed curl-curl problem.",
        argument_default=argparse.SUPPRESS,
    )
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--case", help="smooth | singular:t=<value> (default smooth)")
    p.add_argument("--domain", choices=DOMAINS, help="default: cube for smooth, lshape for singular")
    p.add_argument("--k", type=int, help="degree of u, p and traces (default 1)")
    p.add_argument("--m", type=int, help="degree of r, k-1 or k (default k-1 for smooth, k for singular)")
    p.add_argument("--alpha", type=int, help="-1 or 1 (default -1)")
    p.add_argument(
        "--trace-projection", dest="trace_projection", choices=TRACE_PROJECTIONS,
        help="default: l2 for smooth, hdiv for singular",
    )
    p.add_argument("--levels", type=_levels, help="comma-separated h^-1 values, each doubling (default 2,4,8)")
    p.add_argument("--solver", choices=SOLVERS, help="default direct")
    p.add_argument("--gmres-tol", dest="gmres_tol", type=float, help="default 1e-10")
    p.add_argument("--gmres-restart", dest="gmres_restart", type=int, help="default 200")
    p.add_argument("--gmres-max-iters", dest="gmres_max_iters", type=int, help="default 5000")
    p.add_argument("--quad-inc", dest="quad_inc", type=int, help="extra quadrature degree (default 0)")
    p.add_argument(
        "--grading-levels", dest="grading_levels", type=int,
        help=f"panels in graded rules near the singular edge (default {DEFAULT_GRADING_LEVELS})",
    )
    p.add_argument("--out", help="write the table here instead of stdout")
    p.add_argument("--format", choices=FORMATS, help="table format (default md)")
    p.add_argument("--threads", type=int, help="BLAS/solver threads (default 1)")
    p.add_argument("--dump-mesh", dest="dump_mesh", help="write each level's mesh; '{n}' expands to h^-1")
    p.add_argument(
        "--dump-matrix", dest="dump_matrix",
        help="write each condensed matrix as 1-based 'row col value' lines; '{n}' expands to h^-1",
    )
    p.add_argument("--dry-run", dest="dry_run", action="store_true", help="print the resolved configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def resolve_config(values: dict) -> StudyConfig:
    """Fill case-dependent defaults and check every invariant."""
    unknown = set(values) - set(CONVERTERS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    cfg = StudyConfig(**values)
    try:
        case = check_case(cfg.case)
        if cfg.m is None:
            cfg.m = cfg.k if case.singular else cfg.k - 1
        cfg.domain = cfg.domain or ("lshape" if case.singular else "cube")
        cfg.trace_projection = cfg.trace_projection or ("hdiv" if case.singular else "l2")
        check_choice(cfg.domain, "domain", DOMAINS)
        check_choice(cfg.trace_projection, "trace_projection", TRACE_PROJECTIONS)
        check_choice(cfg.solver, "solver", SOLVERS)
        check_choice(cfg.format, "format", FORMATS)
        check_integer(cfg.threads, "threads", minimum=1)
        check_positive_float(cfg.gmres_tol, "gmres_tol")
        cfg.levels = check_levels(cfg.levels, cfg.domain)
        cfg.estimator()._discrete_spec()
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None
    return cfg


def parse_config(argv=None) -> tuple[StudyConfig, bool]:
    """Return the resolved configuration and whether this is a dry run."""
    argv = sys.argv[1:] if argv is None else list(argv)
    args = vars(build_parser().parse_args(argv))
    verbose = args.pop("verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    dry_run = args.pop("dry_run", False) or not argv
    values = read_config_file(args.pop("config")) if "config" in args else {}
    values.update(args)
    return resolve_config(values), dry_run


def _level_path(template: str, n: int, many: bool) -> Path:
    if "{n}" in template:
        return Path(template.replace("{n}", str(n)))
    path = Path(template)
    return path.with_name(f"{path.stem}_h{n}{path.suffix}") if many else path


def dump_matrix(A, path) -> None:
    coo = A.tocoo()
    order = np.lexsort((coo.col, coo.row))
    table = np.column_stack([coo.row[order] + 1, coo.col[order] + 1, coo.data[order]])
    np.savetxt(path, table, fmt=("%d", "%d", "%.17g"))


def run_study(cfg: StudyConfig, stream=None) -> tuple[int, list]:
    """Solve every level in order and emit the table; returns ``(status, reports)``."""
    stream = sys.stdout if stream is None else stream
    reports, status = [], EXIT_OK
    many = len(cfg.levels) > 1
    with threadpool_limits(limits=cfg.threads):
        for n in cfg.levels:
            mesh = build_mesh(cfg.domain, n)
            if cfg.dump_mesh:
                mesh.dump(_level_path(cfg.dump_mesh, n, many))
            est = cfg.estimator()
            try:
                est.fit(mesh, cfg.case)
            except SolverFailure as err:
                print(f"error: solve failed at h^-1={n}: {err}", file=sys.stderr)
                status = EXIT_SOLVER
                break
            if cfg.dump_matrix:
                dump_matrix(est.system_.A, _level_path(cfg.dump_matrix, n, many))
            rep = est.error_report()
            logger.info(
                "h^-1=%d: dof %d, residual %.2e, assembly %.1fs, solve %.1fs",
                n, rep.dof, rep.solver_residual, rep.timings["t_assembly"], rep.timings["t_solve"],
            )
            reports.append(rep)
    if reports:
        text = to_csv(reports) if cfg.format == "csv" else to_markdown(reports, cfg.title())
        if cfg.out:
            Path(cfg.out).write_text(text)
        else:
            stream.write(text)
    return status, reports


def main(argv=None) -> int:
    try:
        cfg, dry_run = parse_config(argv)
    except ConfigError as err:
        print(f"hdgmaxwell: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if dry_run:
        sys.stdout.write("# dry run; resolved configuration\n" + cfg.echo())
        return EXIT_OK
    status, _ = run_study(cfg)
    return status


if __name__ == "__main__":
    sys.exit(main())
