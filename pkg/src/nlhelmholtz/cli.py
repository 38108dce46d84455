"""Batch front end: ``nlhelm solve | converge-n | verify``.

Exit codes: 0 success, 2 configuration or usage error, 3 solver failure
(non-convergence, divergence, failed sweep or failed verification).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import artifacts, boundary, verify
from .assembly import assemble_linear
from .config import RunConfig, load_config
from .errors import ConfigurationError, DivergenceError, HelmholtzError, SweepError
from .solver import boundary_flux, solve_fixed_point

log = logging.getLogger("nlhelmholtz")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _read_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"config: cannot read {path}: {exc}", key="config") from None
    return load_config(text)


def _provenance(rc: RunConfig, **extra):
    return dict(
        config=artifacts.config_hash(rc.text),
        kappa=rc.ctx.kappa,
        R=rc.ctx.R,
        N=rc.ctx.N,
        nonlinearity=rc.nonlinearity().tag,
        **extra,
    )


def _out_dir(rc: RunConfig, out) -> Path:
    d = Path(out if out is not None else rc.values["output.dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_solve(config_path, out=None) -> int:
    """Solve the configured problem and write solution, history, trace and summary CSVs."""
    try:
        rc = _read_config(config_path)
        mesh = rc.build_mesh()
        nl, inc, cfg = rc.nonlinearity(), rc.incident(), rc.solver()
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    d = _out_dir(rc, out)
    prov = _provenance(rc)
    try:
        sys_ = assemble_linear(mesh, rc.ctx)
        try:
            sol = solve_fixed_point(sys_, nl, inc, cfg)
        except DivergenceError as exc:
            sol = exc.solution
            if sol is None:
                raise
    except HelmholtzError as exc:
        return _fail(EXIT_SOLVER, str(exc))

    u = sol.u_h
    artifacts.write_table(
        d / "solution.csv",
        ("node_id", "x", "y", "re_u", "im_u"),
        [(i, p[0], p[1], u[i].real, u[i].imag) for i, p in enumerate(mesh.nodes)],
        **prov,
    )
    est = list(sol.contraction_estimates)
    artifacts.write_table(
        d / "history.csv",
        ("iteration", "residual", "contraction"),
        [(k + 1, r, est[k - 1] if 0 < k <= len(est) else float("nan")) for k, r in enumerate(sol.residual_history)],
        **prov,
    )
    boundary.write_trace(sys_.trace(u), d / "trace.csv", provenance=artifacts.header_line(**prov))
    flux = boundary_flux(u, sys_, inc=inc)
    artifacts.write_table(
        d / "summary.csv",
        ("converged", "iterations", "residual", "contraction", "flux", "condition", "status"),
        [(bool(sol.converged), sol.iterations, sol.residual, sol.contraction, flux, sys_.condition, sol.status)],
        **prov,
    )
    log.info("solve: %s after %d iterations, residual %.3e", sol.status, sol.iterations, sol.residual)
    if not sol.converged:
        return _fail(EXIT_SOLVER, f"solver did not converge ({sol.status}); artifacts written to {d}")
    return EXIT_OK


def _parse_N_list(text):
    try:
        vals = [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise ConfigurationError(f"N list: cannot parse {text!r} as comma-separated integers", key="N list") from None
    if not vals or min(vals) < 0:
        raise ConfigurationError(f"N list: need nonnegative integers, got {text!r}", key="N list")
    return vals


def cmd_converge_n(config_path, N_list, N_ref=None, out=None) -> int:
    """Sweep the truncation order and write ``converge_n.csv``."""
    try:
        rc = _read_config(config_path)
        Ns = _parse_N_list(N_list) if isinstance(N_list, str) else [int(n) for n in N_list]
        if not Ns or min(Ns) < 0:
            raise ConfigurationError("N list: need nonnegative integers", key="N list")
        problem = verify.Problem(rc.build_mesh(), rc.ctx.kappa, rc.nonlinearity(), rc.incident(), rc.solver())
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        table = verify.convergence_in_N(problem, Ns, N_ref)
    except SweepError as exc:
        return _fail(EXIT_SOLVER, str(exc))
    except HelmholtzError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    d = _out_dir(rc, out)
    artifacts.write_table(d / "converge_n.csv", table.columns, table.rows, **_provenance(rc, N_ref=table.N_ref))
    return EXIT_OK


def cmd_verify(suite, out=None) -> int:
    """Run a verification suite and write ``verify_<suite>.csv``; exit 0 iff all checks pass."""
    if suite not in verify.SUITES + ("all",):
        return _fail(EXIT_CONFIG, f"suite: unknown suite {suite!r}; expected one of {', '.join(verify.SUITES + ('all',))}")
    results = verify.run_suite(suite)
    ok = all(bool(r.passed) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.suite}.{r.check} value={r.value:.6g} threshold={r.threshold:.6g}")
    if out is not None:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        artifacts.write_table(
            d / f"verify_{suite}.csv",
            ("suite", "check", "passed", "value", "threshold"),
            [(r.suite, r.check, bool(r.passed), r.value, r.threshold) for r in results],
            suite=suite,
        )
    return EXIT_OK if ok else EXIT_SOLVER


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nlhelm", description="Nonlinear Helmholtz scattering with a truncated DtN boundary.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("solve", help="solve one configuration")
    s.add_argument("config")
    s.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    c = sub.add_parser("converge-n", help="sweep the truncation order N")
    c.add_argument("config")
    c.add_argument("--N", required=True, dest="N_list", help="comma-separated list, e.g. 4,6,8")
    c.add_argument("--n-ref", type=int, default=None, help="reference order (default 2*max N)")
    c.add_argument("--out", default=None)
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", help="specfun, garding, oracle or all")
    v.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "solve":
        return cmd_solve(args.config, args.out)
    if args.command == "converge-n":
        return cmd_converge_n(args.config, args.N_list, args.n_ref, args.out)
    return cmd_verify(args.suite, args.out)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
