"""Command line front end.

Every command reads a JSON config (``--config``) and writes JSON or CSV to
``--out`` (default stdout).  Exit codes: 0 success, 2 config error, 3 numerical
failure.  Output is deterministic for a fixed config and seed; wall-clock
timings are only included with ``--timings``.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .angles import PairPath, count_singularities, lift_track, morse_selector, top_row
from .config import ProblemConfig, load_config
from .errors import ConfigError, NumericalError

log = logging.getLogger("polarsturm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _clean(obj):
    """Make ``obj`` JSON-serializable with plain floats (non-finite -> None)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dump_json(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n"


def dump_csv(header: list, rows: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    np.savetxt(buf, np.atleast_2d(rows), delimiter=",", fmt="%.17g")
    return buf.getvalue()


def _crossing(e) -> dict:
    return {"param": e.param, "branch": e.branch, "direction": e.direction, "level": e.level}


# ---------------------------------------------------------------------------
# commands


def _frame_track(cfg: ProblemConfig, args):
    from .flow import integrate_fundamental

    if cfg.kind not in ("hamiltonian", "morse"):
        raise ConfigError(f"command needs a hamiltonian or morse config, got {cfg.kind!r}")
    model = cfg.model()
    flow = integrate_fundamental(model, _lam(cfg, args), cfg.t, cfg.options.h)
    selector = morse_selector(cfg.N()) if cfg.kind == "morse" else top_row
    path = PairPath.from_flow(flow, selector, stride=cfg.options.stride)
    init = np.zeros(model.n) if cfg.kind == "morse" else None
    return lift_track(path, init), flow


def _lam(cfg: ProblemConfig, args) -> float:
    return args.lam if getattr(args, "lam", None) is not None else cfg.options.lam


def _sl_setup(cfg: ProblemConfig, args):
    from .sturm import SLSolver, normalize

    if cfg.kind != "sturm-liouville":
        raise ConfigError(f"command needs a sturm-liouville config, got {cfg.kind!r}")
    norm = normalize(cfg.sl_problem())
    return norm, SLSolver(norm, cfg.options.h)


def cmd_angles(cfg: ProblemConfig, args):
    if cfg.kind == "sturm-liouville":
        norm, solver = _sl_setup(cfg, args)
        if cfg.options.sweep == "lambda":
            from .sturm import angle_surface

            grid = cfg.options.lambda_grid
            if not grid:
                raise ConfigError("lambda sweep needs a non-empty options.lambda_grid")
            surf = angle_surface(norm, grid, solver)
            rows = np.column_stack([surf.lams, surf.phi_t])
            return "csv", (["lambda"] + [f"phi_{j + 1}" for j in range(norm.n)], rows)
        track = solver.tau_track(_lam(cfg, args))
    else:
        track, _ = _frame_track(cfg, args)
    rows = np.column_stack([track.param, track.phi])
    return "csv", (["param"] + [f"phi_{j + 1}" for j in range(track.n)], rows)


def cmd_conjugate(cfg: ProblemConfig, args):
    if cfg.kind == "sturm-liouville":
        from .sturm import tau_crossing_count

        _, solver = _sl_setup(cfg, args)
        count = tau_crossing_count(solver, _lam(cfg, args))
    else:
        track, _ = _frame_track(cfg, args)
        count = count_singularities(track, cfg.t)
    return "json", {
        "count": count.count,
        "signed": count.signed,
        "events": [_crossing(e) for e in count.events],
        "boundary_events": [_crossing(e) for e in count.boundary_events],
    }


def cmd_morse(cfg: ProblemConfig, args):
    from .morse import ActionProblem, discretize_quadratic_form, morse_index

    if cfg.kind != "morse":
        raise ConfigError(f"command needs a morse config, got {cfg.kind!r}")
    problem = ActionProblem(cfg.model(), cfg.N(), cfg.t)
    res = morse_index(problem, cfg.options.h)
    out = {"mu": res.mu, "mu_j": res.mu_j, "phi_t": res.phi_t,
           "conjugate_points": res.conjugate_points, "sigma_min": res.sigma_min}
    m = args.oracle if args.oracle is not None else cfg.options.oracle
    if m is not None:
        form = discretize_quadratic_form(problem, m)
        out["oracle_m"] = m
        out["oracle_mu"] = form.negative_count()
        out["oracle_agrees"] = out["oracle_mu"] == res.mu
    return "json", out


def _branches(cfg, args):
    if args.branches:
        return [int(b) for b in args.branches.split(",")]
    return cfg.options.branches


def cmd_sl_eigs(cfg: ProblemConfig, args):
    from .sturm import solve_eigenvalues

    norm, solver = _sl_setup(cfg, args)
    count = args.count if args.count is not None else cfg.options.count
    lo = args.lambda_min if args.lambda_min is not None else cfg.options.lambda_min
    hi = args.lambda_max if args.lambda_max is not None else cfg.options.lambda_max
    pairs = solve_eigenvalues(norm, _branches(cfg, args), range(count), (lo, hi),
                              cfg.options.h, solver)
    return "json", {
        "eigenvalues": [
            {"branch": p.branch, "k": p.k, "eigenvalue": p.eigenvalue, "l": p.l,
             "zero_count": p.zero_count, "phi_t": p.phi_t, "det_residual": p.det_residual}
            for p in pairs
        ]
    }


def cmd_sl_eigenfunction(cfg: ProblemConfig, args):
    from .sturm import attach_eigenfunction, eigenfunction_residuals, solve_eigenvalues

    norm, solver = _sl_setup(cfg, args)
    branch = args.branch if args.branch is not None else cfg.options.branch
    k = args.k if args.k is not None else cfg.options.k
    lo = args.lambda_min if args.lambda_min is not None else cfg.options.lambda_min
    hi = args.lambda_max if args.lambda_max is not None else cfg.options.lambda_max
    (pair,) = solve_eigenvalues(norm, [branch], [k], (lo, hi), cfg.options.h, solver)
    attach_eigenfunction(norm, pair, cfg.options.h)
    if args.format == "json":
        res = eigenfunction_residuals(norm, pair)
        return "json", {"branch": branch, "k": k, "eigenvalue": pair.eigenvalue,
                        "residuals": {"left": res.left, "right": res.right, "ode": res.ode},
                        "samples": int(pair.tau.size)}
    rows = np.column_stack([pair.tau, pair.q])
    return "csv", (["tau"] + [f"q_{j + 1}" for j in range(norm.n)], rows)


def _verify_bc(cfg: ProblemConfig, seed: int, samples: int) -> dict:
    from .bc import build_L_blocks, check_condition_b, check_proposition, check_selfadjoint, q2_direct
    from .symplectic import random_symplectic

    bc = cfg.bc()
    sa = check_selfadjoint(bc)
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63 - 1, size=samples)
    worst_b, worst_q2 = 0.0, 0.0
    L = build_L_blocks(bc)
    for s in seeds:
        phi = random_symplectic(bc.n, seed=int(s))
        worst_b = max(worst_b, max(check_condition_b(bc, phi).residuals))
        direct = q2_direct(bc, phi)
        diff = L.apply(phi)[: bc.n, : bc.n] - direct
        worst_q2 = max(worst_q2, float(np.linalg.norm(diff)) / max(1.0, float(np.linalg.norm(direct))))
    return {
        "selfadjoint": {"ok": sa.ok, "residuals": sa.residuals},
        "proposition": check_proposition(bc),
        "condition_b": {"ok": worst_b <= 1e-9, "max_residual": worst_b, "samples": samples},
        "l_blocks": {"q2_residual": worst_q2, "l0_identity_residual": L.l0_identity_residual},
    }


def _verify_sl(cfg: ProblemConfig, args) -> dict:
    from .flow import integrate_fundamental
    from .sturm import c2_sl, local_direction_checks

    norm, solver = _sl_setup(cfg, args)
    lam = _lam(cfg, args)
    flow = integrate_fundamental(norm.model, lam, norm.t, cfg.options.h)
    directions = local_direction_checks(norm, lam, solver)
    try:
        _, c2 = c2_sl(norm, lam, flow=flow)
        c2_ok, c2_top = True, float(np.max(np.linalg.eigvalsh(c2[1:])))
    except NumericalError:
        c2_ok, c2_top = False, float("nan")
    return {
        "normalization": norm.identity_residuals(),
        "symplectic_drift": flow.max_residual,
        "c2_negative_definite": c2_ok,
        "c2_max_eigenvalue": c2_top,
        "sin_zero_directions": {"ok": directions.ok,
                                "events": [_crossing(e) for e in directions.events]},
    }


def cmd_verify(cfg: ProblemConfig, args):
    seed = args.seed if args.seed is not None else cfg.options.seed
    if cfg.kind == "bc-check":
        return "json", _verify_bc(cfg, seed, cfg.options.samples)
    if cfg.kind == "sturm-liouville":
        return "json", _verify_sl(cfg, args)
    if cfg.kind in ("hamiltonian", "morse"):
        from .flow import integrate_fundamental
        model = cfg.model()
        flow = integrate_fundamental(model, _lam(cfg, args), cfg.t, cfg.options.h)
        return "json", {"symplectic_drift": flow.max_residual}
    raise ConfigError(f"verify does not handle kind {cfg.kind!r}")


def cmd_classify_n1(cfg: ProblemConfig, args):
    from .bc import (
        affine_coefficients,
        appendix_classify,
        appendix_construct,
        family_symplectic_residual,
        necessary_conditions,
    )

    if cfg.kind != "appendix":
        raise ConfigError(f"command needs an appendix config, got {cfg.kind!r}")
    spec = cfg.raw.get("appendix", {})
    seed = args.seed if args.seed is not None else cfg.options.seed
    samples = cfg.options.samples
    if "case" in spec:
        if "x" not in spec or "a" not in spec:
            raise ConfigError("construction needs 'x' and 'a'")
        nu = int(spec.get("nu", 1))
        L1, L2 = appendix_construct(spec["case"], spec["x"], spec["a"], spec.get("b", 0.0),
                                    spec.get("c", 0.0), nu)
        L0 = np.zeros((2, 2))
        cond = necessary_conditions(L0, L1, L2)
        fam = family_symplectic_residual(L0, L1, L2, samples, seed)
        return "json", {
            "case": spec["case"], "nu": nu, "L1": L1, "L2": L2,
            "det_L1": float(np.linalg.det(L1)), "det_L2": float(np.linalg.det(L2)),
            "x": affine_coefficients(L1, L2),
            "necessary_conditions": {"det_residual": cond.det_residual,
                                     "cross_residual": cond.cross_residual},
            "family_residual": fam, "symplectic_family": fam <= 1e-9,
        }
    try:
        L0, L1, L2 = (np.asarray(spec[k], dtype=float) for k in ("L0", "L1", "L2"))
    except KeyError as exc:
        raise ConfigError(f"appendix section needs L0, L1, L2 or a case ({exc} missing)") from None
    res = appendix_classify(L0, L1, L2, samples=samples, seed=seed)
    return "json", {"case": res.case, "det_L0": res.det_L0, "det_L1": res.det_L1,
                    "det_L2": res.det_L2, "family_residual": res.family_residual,
                    "necessary_conditions": {"det_residual": res.conditions.det_residual,
                                             "cross_residual": res.conditions.cross_residual}}


COMMANDS = {
    "angles": cmd_angles,
    "conjugate": cmd_conjugate,
    "morse": cmd_morse,
    "sl-eigs": cmd_sl_eigs,
    "sl-eigenfunction": cmd_sl_eigenfunction,
    "verify": cmd_verify,
    "classify-n1": cmd_classify_n1,
}
DEFAULT_FORMAT = {"angles": "csv", "sl-eigenfunction": "csv"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polarsturm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", required=True)
        c.add_argument("--out", default=None)
        c.add_argument("--format", choices=("json", "csv"), default=None)
        c.add_argument("--oracle", type=int, default=None)
        c.add_argument("--seed", type=int, default=None)
        c.add_argument("--lambda-min", dest="lambda_min", type=float, default=None)
        c.add_argument("--lambda-max", dest="lambda_max", type=float, default=None)
        c.add_argument("--lambda", dest="lam", type=float, default=None)
        c.add_argument("--branches", default=None)
        c.add_argument("--branch", type=int, default=None)
        c.add_argument("--k", type=int, default=None)
        c.add_argument("--count", type=int, default=None)
        c.add_argument("--timings", action="store_true")
        c.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv: Optional[list] = None) -> tuple[int, str, Optional[str]]:
    """Execute a command; returns ``(exit_code, text, out_path)`` without writing anything."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fmt = args.format or DEFAULT_FORMAT.get(args.command, "json")
    start = time.perf_counter()
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be non-negative")
        if args.count is not None and args.count < 1:
            raise ConfigError("count must be positive")
        cfg = load_config(args.config)
        kind, payload = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        return EXIT_CONFIG, f"config error: {exc}\n", None
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        return EXIT_NUMERIC, f"numerical error: {exc}\n", None
    if kind == "csv" and fmt == "csv":
        header, rows = payload
        return EXIT_OK, dump_csv(header, rows), args.out
    if kind == "csv":
        header, rows = payload
        payload = {"columns": header, "rows": rows}
    envelope = {"command": args.command, "config_digest": cfg.digest, "outputs": payload,
                "version": __version__}
    if args.timings:
        envelope["diagnostics"] = {"runtime_s": time.perf_counter() - start}
    return EXIT_OK, dump_json(envelope), args.out


def main(argv: Optional[list] = None) -> int:
    try:
        code, text, out = run(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    if code != EXIT_OK:
        sys.stderr.write(text)
        return code
    if out:
        try:
            with open(out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            sys.stderr.write(f"config error: cannot write {out}: {exc.strerror}\n")
            return EXIT_CONFIG
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); silence the flush at exit
            sys.stdout = open(os.devnull, "w")
    return code


if __name__ == "__main__":
    sys.exit(main())
