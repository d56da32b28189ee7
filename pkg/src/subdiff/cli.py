"""Command-line front end.

    subdiff convergence --scheme l1 --alpha 0.5 --sigma 1.5 --gamma 1 --example 1 --N 100,200,400
    subdiff reproduce 6 --output out/
    subdiff kernels --scheme fraccn --alpha 0.4 --gamma 3 --N 128
    subdiff mesh --gamma 5/3 --N 64
    subdiff solve --scheme fraccn --alpha 0.4 --sigma 1.2 --gamma 5/3 --example 2 --N 64 --M 256
    subdiff bounds --alpha 0.9 --gamma 2 --N 64 --M 64

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, kernels, mesh as meshmod, spatial
from .problems import example1, example2
from .solver import SchemeConfig, solve
from .spatial import ZeroPivotError
from .special import SeriesDivergenceError

log = logging.getLogger("subdiff")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_gamma(text) -> Fraction:
    """'5/3', '2.5' or a number -> exact Fraction."""
    try:
        g = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"invalid grading parameter {text!r}")
    if g < 1:
        raise UsageError(f"grading parameter must be >= 1, got {text}")
    return g


def parse_int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"invalid integer list {text!r}")


@dataclass
class RunConfig:
    scheme: str = "l1"
    alpha: float = 0.5
    sigma: float = 1.5
    gamma: str = "1"
    N_list: list = field(default_factory=lambda: [100, 200, 400])
    M: int = analysis.DEFAULT_M
    guard: str = "proxy"
    M_max: int = analysis.DEFAULT_M_MAX
    example: int = 1
    T: float = 1.0
    seed: int = 0
    norm: str = "energy"
    output: Optional[str] = None
    format: str = "md"

    def validate(self) -> "RunConfig":
        self.scheme = str(self.scheme).lower()
        if self.scheme not in ("l1", "fraccn"):
            raise UsageError(f"scheme must be l1 or fraccn, got {self.scheme!r}")
        if not 0 < self.alpha < 1:
            raise UsageError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.sigma > 0:
            raise UsageError(f"sigma must be positive, got {self.sigma}")
        self.gamma = str(parse_gamma(self.gamma))
        self.N_list = parse_int_list(self.N_list)
        if not self.N_list:
            raise UsageError("the N list is empty")
        for a, b in zip(self.N_list, self.N_list[1:]):
            if b != 2 * a:
                raise UsageError(f"N list must double at each step; got {a} then {b}")
        if self.N_list[0] < 2:
            raise UsageError("N must be at least 2")
        if self.M < 2 or self.M_max < self.M:
            raise UsageError("need 2 <= M <= M_max")
        if self.example not in (1, 2):
            raise UsageError(f"example must be 1 or 2, got {self.example}")
        if self.T != 1.0:
            raise UsageError("the example problems are posed with T = 1")
        if self.guard is True:
            self.guard = "proxy"
        elif self.guard is False:
            self.guard = "off"
        if self.guard not in analysis.GUARD_MODES:
            raise UsageError(f"guard must be one of {analysis.GUARD_MODES}")
        if self.norm not in analysis.NORMS:
            raise UsageError(f"norm must be one of {analysis.NORMS}")
        if self.format not in ("csv", "md"):
            raise UsageError("format must be csv or md")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data).validate()

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"configuration is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise UsageError("configuration must be a JSON object")
        return cls.from_dict(data)


_FLAG_KEYS = {
    "scheme": "scheme",
    "alpha": "alpha",
    "sigma": "sigma",
    "gamma": "gamma",
    "N": "N_list",
    "M": "M",
    "M_max": "M_max",
    "example": "example",
    "T": "T",
    "seed": "seed",
    "norm": "norm",
    "guard": "guard",
    "output": "output",
    "format": "format",
}


def config_from_args(args) -> RunConfig:
    """JSON file (if given) overlaid with every flag that was set."""
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read configuration: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"configuration is not valid JSON: {exc}")
    for flag, key in _FLAG_KEYS.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[key] = val
    if getattr(args, "no_guard", False):
        data["guard"] = "off"
    return RunConfig.from_dict(data)


def _emit(text: str, output: Optional[str], suffix: str) -> None:
    if output is None:
        sys.stdout.write(text)
        return
    path = Path(output)
    if path.suffix == "":
        path = path.with_suffix(suffix)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


# ------------------------------------------------------------- commands


def cmd_convergence(args) -> int:
    cfg = config_from_args(args)
    if args.save_config:
        Path(args.save_config).write_text(cfg.dumps() + "\n")
    report = analysis.run_convergence(
        cfg.scheme,
        cfg.example,
        cfg.alpha,
        cfg.sigma,
        cfg.gamma,
        cfg.N_list,
        cfg.M,
        guard=cfg.guard,
        M_max=cfg.M_max,
        norm=cfg.norm,
    )
    text = report.to_csv() if cfg.format == "csv" else report.to_markdown()
    _emit(text, cfg.output, "." + cfg.format)
    return EXIT_OK


def _run_preset(job):
    preset, Ns, M, M_max, norm, guard = job
    published = preset.orders[: max(len(Ns) - 1, 0)]
    return analysis.run_convergence(
        preset.scheme,
        preset.example,
        preset.alpha,
        preset.sigma,
        preset.gamma,
        Ns,
        M,
        guard=guard,
        M_max=M_max,
        norm=norm,
        published_orders=published,
    )


def reproduce_table(table_id: int, *, columns=None, n_max=None, M=analysis.DEFAULT_M, M_max=analysis.DEFAULT_M_MAX, norm="plain", guard="proxy", workers=1):
    """Reports for the chosen columns of a preset table, in column order."""
    if table_id not in analysis.TABLE_PRESETS:
        raise UsageError(f"unknown table {table_id}; choose from {sorted(analysis.TABLE_PRESETS)}")
    presets = analysis.TABLE_PRESETS[table_id]
    columns = list(range(len(presets))) if columns is None else list(columns)
    for c in columns:
        if not 0 <= c < len(presets):
            raise UsageError(f"table {table_id} has columns 0..{len(presets) - 1}")
    jobs = []
    for c in columns:
        p = presets[c]
        Ns = [n for n in p.Ns if n_max is None or n <= n_max]
        if len(Ns) < 2:
            raise UsageError("need at least two N values per column")
        jobs.append((p, Ns, M, M_max, norm, guard))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_preset, jobs))
    return [_run_preset(j) for j in jobs]


def cmd_reproduce(args) -> int:
    cols = None if args.columns is None else parse_int_list(args.columns)
    reports = reproduce_table(
        args.table_id,
        columns=cols,
        n_max=args.n_max,
        M=args.M,
        M_max=args.M_max,
        norm=args.norm,
        guard="off" if args.no_guard else args.guard,
        workers=args.workers,
    )
    md = "".join(r.to_markdown() + "\n" for r in reports)
    csv_text = "".join(r.to_csv() for r in reports)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"table{args.table_id}.md").write_text(md)
        (out / f"table{args.table_id}.csv").write_text(csv_text)
    sys.stdout.write(md)
    return EXIT_OK


def _build_mesh(args) -> meshmod.TimeMesh:
    if getattr(args, "mesh_file", None):
        return meshmod.load_mesh_csv(args.mesh_file)
    if getattr(args, "random", False):
        return meshmod.random_mesh(args.N, rho=args.rho, rng=args.seed)
    return meshmod.build_graded_mesh(float(parse_gamma(args.gamma)), args.N, T0=args.T0)


def _row_csv(label: str, n: int, coeffs) -> str:
    lines = [f"{label},n,j,value"]
    lines += [f"{label},{n},{j},{c:.16e}" for j, c in enumerate(coeffs)]
    return "\n".join(lines) + "\n"


def cmd_kernels(args) -> int:
    mesh = _build_mesh(args)
    alpha = args.alpha
    if not 0 < alpha < 1:
        raise UsageError("alpha must lie in (0, 1)")
    rows = kernels.kernel_rows(args.scheme, mesh, alpha)
    nu = kernels.scheme_offset(args.scheme, alpha)
    if args.dump_row is not None:
        if not 1 <= args.dump_row <= mesh.N:
            raise UsageError(f"row index must lie in 1..{mesh.N}")
        sys.stdout.write(_row_csv("A", args.dump_row, rows[args.dump_row - 1].coeffs))
        return EXIT_OK
    report = kernels.verify_kernel_assumptions(rows, mesh, nu)
    out = {"scheme": args.scheme, "alpha": alpha, "N": mesh.N, "rho_max": float(mesh.ratios.max()) if mesh.N > 1 else None}
    out["assumptions"] = report.as_dict()
    out["assumptions_ok"] = report.ok
    if report.a1_monotone_ok:
        p_rows = kernels.complementary_rows(rows)
        if args.dump_p_row is not None:
            if not 1 <= args.dump_p_row <= mesh.N:
                raise UsageError(f"row index must lie in 1..{mesh.N}")
            sys.stdout.write(_row_csv("P", args.dump_p_row, p_rows[args.dump_p_row - 1].coeffs))
            return EXIT_OK
        out["identity_deviation"] = kernels.identity_deviation_all(p_rows, rows)
        pi_a = 1.0 if nu == 0 else 11.0 / 4.0
        out["p_bound_pi_a"] = pi_a
        out["p_bound_margin"] = {m: kernels.verify_p_bound(p_rows, mesh, alpha, m, pi_a) for m in (0, 1)}
    else:
        out["identity_deviation"] = None
        out["note"] = "kernels are not monotone; complementary kernels skipped"
    sys.stdout.write(json.dumps(out, indent=2, default=_json_default) + "\n")
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    return str(obj)


def cmd_mesh(args) -> int:
    mesh = _build_mesh(args)
    gamma = float(parse_gamma(args.gamma))
    rep = meshmod.mesh_diagnostics(mesh, gamma, args.rho)
    if args.output:
        meshmod.save_mesh_csv(mesh, args.output)
    out = {"N": mesh.N, "T": mesh.T, "tau_max": mesh.tau_max, **rep.as_dict()}
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def _example(example: int, alpha: float, sigma: float):
    return (example1 if example == 1 else example2)(alpha, sigma)


def cmd_solve(args) -> int:
    cfg = config_from_args(args)
    problem = _example(cfg.example, cfg.alpha, cfg.sigma)
    mesh = meshmod.build_graded_mesh(float(Fraction(cfg.gamma)), cfg.N_list[0])
    grid = spatial.build_grid(problem.xl, problem.xr, cfg.M)
    hist = solve(SchemeConfig(cfg.scheme, cfg.alpha), problem, mesh, grid)
    err, per_level = analysis.h1_error(hist, problem, norm=cfg.norm)
    if cfg.output:
        hist.to_csv(cfg.output)
    sys.stdout.write(json.dumps({"N": mesh.N, "M": cfg.M, "error": err, "worst_level": int(np.argmax(per_level))}) + "\n")
    return EXIT_OK


def stability_sweep(scheme: str, alpha: float, gamma: float, N: int, M: int, samples: int, seed: int):
    """Zero-forcing runs with random initial data on the Example 1
    coefficients; returns (max over samples of max_n |u^n|_1^2 / bound^n,
    number of violations, restriction flag)."""
    base = example1(alpha, 2.0 - alpha)
    from .problems import custom_problem

    mesh = meshmod.build_graded_mesh(gamma, N)
    grid = spatial.build_grid(base.xl, base.xr, M)
    rows = kernels.kernel_rows(scheme, mesh, alpha)
    p_rows = kernels.complementary_rows(rows)
    pi_a = 1.0 if scheme == "l1" else 11.0 / 4.0
    kappa = 3.0
    c_omega = math.pi / math.sqrt(6.0)
    rng = np.random.default_rng(seed)
    worst, violations, restriction = 0.0, 0, True
    mu_half = spatial.half_point_values(grid, base.mu)
    for _ in range(samples):
        vals = np.zeros(M + 1)
        vals[1:-1] = rng.standard_normal(M - 1)
        u0 = lambda x, v=vals: np.interp(x, grid.nodes, v)  # noqa: E731
        prob = custom_problem(base.mu, base.c, lambda x, t: np.zeros_like(x), u0, name="random-initial")
        hist = solve(SchemeConfig(scheme, alpha), prob, mesh, grid, check=False)
        norms2 = np.array([spatial.h1_seminorm(grid, mu_half, hist.level(n)) ** 2 for n in range(1, N + 1)])
        sb = analysis.stability_bound(
            spatial.h1_seminorm(grid, mu_half, vals), np.zeros(N), p_rows, mesh, alpha, kappa, c_omega, pi_a=pi_a
        )
        restriction = sb.restriction_ok
        violations += int(np.sum(norms2 > sb.bound))
        with np.errstate(invalid="ignore", divide="ignore"):
            worst = max(worst, float(np.max(norms2 / sb.bound)))
    return worst, violations, restriction


def cmd_bounds(args) -> int:
    gamma = float(parse_gamma(args.gamma))
    out = {}
    for scheme in ("l1", "fraccn"):
        worst, viol, restr = stability_sweep(scheme, args.alpha, gamma, args.N, args.M, args.samples, args.seed)
        out[scheme] = {"max_ratio_to_bound": worst, "violations": viol, "step_restriction_ok": restr}
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


# --------------------------------------------------------------- parsing


def _add_run_flags(p, *, with_guard=True):
    p.add_argument("--config", help="JSON configuration; flags override its entries")
    p.add_argument("--scheme", choices=["l1", "fraccn"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--gamma", help="grading parameter, e.g. 2 or 5/3")
    p.add_argument("--example", type=int, choices=[1, 2])
    p.add_argument("--N", help="comma separated doubling list, e.g. 100,200,400")
    p.add_argument("--M", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--norm", choices=list(analysis.NORMS))
    p.add_argument("--output")
    p.add_argument("--format", choices=["csv", "md"])
    if with_guard:
        p.add_argument("--M-max", dest="M_max", type=int)
        p.add_argument("--guard", choices=list(analysis.GUARD_MODES))
        p.add_argument("--no-guard", action="store_true", help="same as --guard off")


def _add_mesh_flags(p):
    p.add_argument("--gamma", default="1")
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--T0", type=float)
    p.add_argument("--mesh-file", help="CSV with one time point per line")
    p.add_argument("--random", action="store_true", help="random mesh with ratios in [1/rho, rho]")
    p.add_argument("--rho", type=float, default=7.0 / 4.0)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="subdiff", description="Nonuniform L1 / FracCN schemes for 1-D reaction-subdiffusion")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("convergence", help="error and order table over doubling N")
    _add_run_flags(p)
    p.add_argument("--save-config", help="write the effective configuration as JSON")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("reproduce", help="rerun a preset table next to its printed orders")
    p.add_argument("table_id", type=int)
    p.add_argument("--columns", help="comma separated column indices (default all)")
    p.add_argument("--n-max", dest="n_max", type=int, help="drop N above this value")
    p.add_argument("--M", type=int, default=analysis.DEFAULT_M)
    p.add_argument("--M-max", dest="M_max", type=int, default=analysis.DEFAULT_M_MAX)
    p.add_argument("--norm", choices=list(analysis.NORMS), default="plain")
    p.add_argument("--guard", choices=list(analysis.GUARD_MODES), default="proxy")
    p.add_argument("--no-guard", action="store_true", help="same as --guard off")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", help="directory for tableK.csv and tableK.md")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("kernels", help="kernel assumption report, identity and P-bound check")
    p.add_argument("--scheme", choices=["l1", "fraccn"], default="l1")
    p.add_argument("--alpha", type=float, default=0.5)
    _add_mesh_flags(p)
    p.add_argument("--dump-row", dest="dump_row", type=int, help="print kernel row n as CSV")
    p.add_argument("--dump-p-row", dest="dump_p_row", type=int, help="print complementary row n as CSV")
    p.set_defaults(func=cmd_kernels)

    p = sub.add_parser("mesh", help="mesh diagnostics and optional CSV dump")
    _add_mesh_flags(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("solve", help="single run with error report and optional solution CSV")
    _add_run_flags(p, with_guard=False)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bounds", help="zero-forcing stability sweep against the H1 bound")
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--gamma", default="2")
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"subdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (meshmod.MeshError, kernels.KernelError) as exc:
        print(f"subdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ZeroPivotError, SeriesDivergenceError, FloatingPointError) as exc:
        print(f"subdiff: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
