"""Command-line front end.

    polaronscatter {polaron,scatter1,scatter2,dynamics,chainmap,sweep} [--config F] [--out D] [--jobs N]
    polaronscatter oracle {ground,evolve,compare-dynamics} [--config F] [--out D]

Every run writes ``manifest.json`` next to its CSV files. Numeric output is
bit-reproducible; the manifest timestamp is the only field that changes
between identical runs.

Exit codes: 0 ok, 2 configuration/parameter, 3 convergence, 4 accuracy,
5 resource, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .chainmap import chain_coefficients
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import assemble_hamiltonian, enumerate_basis, initial_state, run_dynamics
from .errors import ParameterError, PolaronScatterError
from .linres import scatter1 as run_scatter1
from .model import CutoffKind, DispersionKind, build_mode_grid, gaussian_wavepacket
from .oracle import FockTruncation, compare_dynamics, exact_evolve, ground_convergence, number_drift, \
    polaron_fock_state
from .polaron import solve_polaron
from .twophoton import Pi2Cache, QuadratureSpec, scatter2 as run_scatter2

COMMANDS = ("polaron", "scatter1", "scatter2", "dynamics", "chainmap", "oracle", "sweep")
ORACLE_COMMANDS = ("ground", "evolve", "compare-dynamics")


# ------------------------------------------------------------------ output

def write_csv(path: str, header: list[str], columns) -> None:
    """Columns of reals written with 17 significant digits."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else np.empty((0, 0))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -------------------------------------------------------------- experiments

def make_grid(cfg: ExperimentConfig):
    m = cfg.model
    return build_mode_grid(
        m.n_modes,
        m.length,
        DispersionKind(m.dispersion.kind, m.dispersion.c, m.dispersion.band_top),
        CutoffKind(m.cutoff.kind, m.cutoff.omega_c),
        m.alpha,
    )


def make_polaron(cfg: ExperimentConfig, grid):
    p = cfg.polaron
    return solve_polaron(grid, cfg.model.delta, tol=p.tol, max_iter=p.max_iter, damping=p.damping)


def _polaron_residuals(params) -> dict:
    return {"polaron_residual": params.residual, "polaron_iterations": params.iterations}


def cmd_polaron(cfg, out):
    grid = make_grid(cfg)
    params = make_polaron(cfg, grid)
    write_json(os.path.join(out, "polaron.json"), {"grid": grid.to_dict(), "polaron": params.to_dict()})
    return ["polaron.json"], _polaron_residuals(params), {"delta_tilde": params.delta_tilde}


def cmd_scatter1(cfg, out):
    grid = make_grid(cfg)
    params = make_polaron(cfg, grid)
    res = run_scatter1(params, grid, cfg.scatter1.source, cfg.scatter1.eta)
    t, r = res.t, res.r
    write_csv(
        os.path.join(out, "scatter1.csv"),
        ["omega", "re_s", "im_s", "abs_t2", "abs_r2", "lamb_shift", "gamma"],
        [res.omegas, res.s.real, res.s.imag, np.abs(t) ** 2, np.abs(r) ** 2, res.lamb_shift, res.gamma],
    )
    unit = float(np.max(np.abs(np.abs(res.s) - 1.0)))
    return ["scatter1.csv"], _polaron_residuals(params) | {"max_unimodularity_error": unit}, {}


def _nearest(grid, w) -> int:
    return int(np.argmin(np.abs(grid.omegas - w)))


def cmd_scatter2(cfg, out):
    grid = make_grid(cfg)
    params = make_polaron(cfg, grid)
    s2 = cfg.scatter2
    k_res = _nearest(grid, params.delta_tilde)
    k1 = k_res if s2.k1 is None else s2.k1
    k2 = k_res if s2.k2 is None else s2.k2
    q = s2.quad
    cache = Pi2Cache(params, grid, s2.source, QuadratureSpec(q.epsabs, q.epsrel, q.limit, q.eta))
    res1 = run_scatter1(params, grid, s2.source)
    res = run_scatter2(k1, k2, params, grid, cache, res1)
    write_csv(
        os.path.join(out, "scatter2.csv"),
        ["p1", "p2", "omega_p1", "omega_p2", "re_M", "im_M", "abs_M2"],
        [res.p1, res.p2, grid.omegas[res.p1], grid.omegas[res.p2], res.kernel.real, res.kernel.imag,
         np.abs(res.kernel) ** 2],
    )
    extra = {"k1": k1, "k2": k2, "energy": res.energy, "quadrature": res.diagnostics}
    return ["scatter2.csv"], _polaron_residuals(params), extra


def _packets(grid, params, packet_cfgs):
    out = []
    for p in packet_cfgs:
        mu = params.delta_tilde if p.mu is None else p.mu
        out.append(gaussian_wavepacket(grid, mu, p.s, p.x))
    return out


def cmd_dynamics(cfg, out):
    grid = make_grid(cfg)
    params = make_polaron(cfg, grid)
    d = cfg.dynamics
    basis = enumerate_basis(grid)
    h = assemble_hamiltonian(basis, params, grid)
    state = initial_state(basis, params, _packets(grid, params, d.packets))
    final, recs = run_dynamics(state, h, d.t_final, d.dt_report, d.tol, d.method)
    times = [r.time for r in recs]
    write_csv(os.path.join(out, "dynamics.csv"), ["t", "p_e", "n_excit", "norm"],
              [times, [r.p_e for r in recs], [r.n_excit for r in recs], [r.norm for r in recs]])
    mode_cols = [f"w{k}" for k in range(grid.n_modes)]
    files = ["dynamics.csv"]
    psi1 = np.array([np.abs(r.psi1) ** 2 for r in recs])
    write_csv(os.path.join(out, "psi1_abs2.csv"), ["t"] + mode_cols, [times] + list(psi1.T))
    files.append("psi1_abs2.csv")
    if len(d.packets) == 2:
        fm = np.array([r.f_marginal for r in recs])
        write_csv(os.path.join(out, "f_marginal.csv"), ["t"] + mode_cols, [times] + list(fm.T))
        files.append("f_marginal.csv")
    write_csv(os.path.join(out, "omegas.csv"), ["k", "omega"], [np.arange(grid.n_modes), grid.omegas])
    files.append("omegas.csv")
    norm_drift = max(abs(r.norm - 1.0) for r in recs)
    n_drift = max(abs(r.n_excit - recs[0].n_excit) for r in recs)
    return files, _polaron_residuals(params) | {"norm_drift": norm_drift, "n_excit_drift": n_drift}, {}


def cmd_chainmap(cfg, out):
    grid = make_grid(cfg)
    params = make_polaron(cfg, grid)
    ch = chain_coefficients(params, grid)
    betas = np.append(ch.betas, np.nan)
    write_csv(os.path.join(out, "chain.csv"), ["r", "alpha_r", "beta_r"],
              [np.arange(ch.length), ch.alphas, betas])
    write_json(os.path.join(out, "chain.json"), ch.header())
    spec_err = float(np.max(np.abs(np.sort(ch.eigenvalues()) - np.sort(grid.omegas)))) \
        if ch.length == grid.n_modes else None
    return ["chain.csv", "chain.json"], _polaron_residuals(params) | {
        "orthogonality_error": ch.orthogonality_error(), "spectrum_error": spec_err}, {}


def cmd_oracle(cfg, out, sub):
    grid = make_grid(cfg)
    params = make_polaron(cfg, grid)
    o = cfg.oracle
    trunc = FockTruncation(grid.n_modes, o.n_max, o.budget)
    res = _polaron_residuals(params)
    if sub == "ground":
        levels = list(range(1, o.n_max + 1))
        energies = ground_convergence(grid, levels, cfg.model.delta)
        write_csv(os.path.join(out, "ground.csv"), ["n_max", "energy"],
                  [[n for n, _ in energies], [e for _, e in energies]])
        e_exact = energies[-1][1]
        extra = {"exact_ground": e_exact, "polaron_vacuum_energy": params.vacuum_energy,
                 "variational_gap": params.vacuum_energy - e_exact}
        if len(energies) > 1:
            res["truncation_change"] = abs(energies[-1][1] - energies[-2][1])
        return ["ground.csv"], res, extra

    basis = enumerate_basis(grid)
    packet = _packets(grid, params, [o.packet])[0]
    state = initial_state(basis, params, packet)
    n_steps = int(math.ceil(o.t_final / o.dt_report - 1e-9)) if o.t_final > 0 else 0
    times = [min(i * o.dt_report, o.t_final) for i in range(n_steps + 1)]
    if sub == "evolve":
        recs = exact_evolve(grid, params, trunc, polaron_fock_state(state, trunc), times)
        write_csv(os.path.join(out, "evolve.csv"), ["t", "p_e", "n_excit", "leakage"],
                  [[r.time for r in recs], [r.p_e for r in recs], [r.n_excit for r in recs],
                   [r.leakage for r in recs]])
        return ["evolve.csv"], res | {"n_excit_relative_drift": number_drift(recs),
                                      "max_leakage": max(r.leakage for r in recs)}, {}
    cmp = compare_dynamics(grid, params, trunc, state, o.t_final, o.dt_report)
    write_csv(os.path.join(out, "compare.csv"), ["t", "p_e_exact", "p_e_model", "n_exact", "n_model"],
              [cmp.times, cmp.p_e_exact, cmp.p_e_model, cmp.n_exact, cmp.n_model])
    return ["compare.csv"], res | {"p_e_sup_error": cmp.sup_error,
                                   "p_e_relative_sup_error": cmp.relative_sup_error}, {}


# ------------------------------------------------------------------ driver

def _manifest(command, cfg, files, residuals, extra, caught, error=None) -> dict:
    return {
        "command": command,
        "version": __version__,
        "status": "ok" if error is None else "error",
        "error": error,
        "config": cfg.to_dict() if cfg is not None else None,
        "outputs": files,
        "residuals": residuals,
        "results": extra,
        "warnings": [f"{w.category.__name__}: {w.message}" for w in caught],
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def run_experiment(cfg: ExperimentConfig, command: str, out: str, oracle_sub: str | None = None) -> int:
    """Run one subcommand, write artifacts and a manifest, return the exit status."""
    os.makedirs(out, exist_ok=True)
    files, residuals, extra, error, code = [], {}, {}, None, 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            if command == "oracle":
                files, residuals, extra = cmd_oracle(cfg, out, oracle_sub)
            else:
                files, residuals, extra = {
                    "polaron": cmd_polaron,
                    "scatter1": cmd_scatter1,
                    "scatter2": cmd_scatter2,
                    "dynamics": cmd_dynamics,
                    "chainmap": cmd_chainmap,
                }[command](cfg, out)
        except PolaronScatterError as exc:
            error = {"class": type(exc).__name__, "message": str(exc)}
            code = exc.exit_code
        except Exception as exc:  # noqa: BLE001 - reported in the manifest
            error = {"class": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
            code = 1
    name = command if oracle_sub is None else f"oracle {oracle_sub}"
    write_json(os.path.join(out, "manifest.json"), _manifest(name, cfg, files, residuals, extra, caught, error))
    if error is not None:
        print(f"error ({error['class']}): {error['message']}", file=sys.stderr)
    return code


def run_sweep(cfg: ExperimentConfig, out: str, jobs: int = 1) -> int:
    """Polaron solve for every alpha in ``sweep.alpha``; one directory per value."""
    if not cfg.sweep.alpha:
        raise ConfigError("sweep.alpha: must list at least one value")

    def one(alpha):
        sub = ExperimentConfig(**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__})
        sub.model = type(cfg.model)(**{**cfg.model.__dict__, "alpha": float(alpha)})
        return run_experiment(sub, "polaron", os.path.join(out, f"alpha_{alpha:g}"))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        codes = list(pool.map(one, cfg.sweep.alpha))
    return max(codes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polaronscatter",
                                     description="Polaron-frame waveguide QED scattering and dynamics")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")

    for name in COMMANDS:
        p = subs.add_parser(name)
        if name == "oracle":
            p.add_argument("oracle_command", choices=ORACLE_COMMANDS)
        common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else _default_config()
        if args.jobs < 1:
            raise ParameterError("--jobs must be at least 1")
        out = args.out or cfg.output.directory
        if args.command == "sweep":
            return run_sweep(cfg, out, args.jobs)
        return run_experiment(cfg, args.command, out, getattr(args, "oracle_command", None))
    except ParameterError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return exc.exit_code


def _default_config() -> ExperimentConfig:
    cfg = ExperimentConfig()
    cfg.validate()
    cfg.model.resolve()
    return cfg


if __name__ == "__main__":
    sys.exit(main())
