"""Command-line entry point.

Subcommands: dataset, fit, sample, conditional, surrogate, trajectory,
evaluate, experiment.  Every subcommand is deterministic under --seed.
Exit codes: 0 success, 2 usage or convergence failure, 1 internal error.

A ``--config FILE`` with ``key = value`` lines supplies defaults for any
long option (dashes become underscores); explicit flags override the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import datasets
from .bridge import ConvergenceError, load_model, sinkhorn_fit
from .conditional import (
    ClosureModel,
    ConditionalSpec,
    conditional_chain,
    extract_closure_samples,
    surrogate_simulate,
    trajectory_generate,
)
from .evaluation import OtConfig, entropic_ot, histogram, ks_statistic, marginal_ot_1d
from .experiments import PRESETS, run_experiment
from .kernel import KernelSpec, TrainingSet, variable_bandwidth_spec, write_csv_rows
from .rng import stream
from .sampler import SCHEMES, SamplerConfig, run_chain
from .bridge import save_model

DRIFTS = {
    "zero": lambda z: np.zeros_like(np.asarray(z, dtype=np.float64)),
    "double-well": datasets.double_well_drift,
}


def _floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")], dtype=np.float64)


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


def _load_config(path: str) -> dict:
    values: dict[str, object] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line without '=': {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = _parse_config_value(raw)
    return values


def _parse_config_value(raw: str):
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw.strip("\"'")


def _load_training(path: str, header: bool, binary: bool) -> TrainingSet:
    if binary:
        return TrainingSet.load_binary(path)
    return TrainingSet.load_csv(path, header=header)


def _write_series(path, series: np.ndarray, dt: float, names: list[str]) -> None:
    t = np.arange(series.shape[1]) * dt
    write_csv_rows(path, np.column_stack([t, series.T]), header=["t", *names])


# -- subcommand handlers ---------------------------------------------------


def cmd_dataset(args) -> int:
    kind = args.kind
    if kind == "gaussian2d":
        ts = datasets.singular_gaussian_2d(args.m, args.nu, seed=args.seed)
        ts.save_csv(args.out)
    elif kind == "ring":
        ts = datasets.gaussian_ring(args.m, args.sigma_r, args.sigma_theta, seed=args.seed)
        ts.save_csv(args.out)
    elif kind == "semisphere":
        ts = datasets.hyper_semisphere(
            args.m, args.d, alpha=args.alpha, radial_noise=args.radial_noise,
            seed=args.seed, full_sphere=args.full_sphere,
        )
        ts.save_csv(args.out)
    elif kind == "l63":
        sys_ = datasets.lorenz63()
        series = datasets.integrate_ode(
            sys_, _floats(args.state0), args.t_end, args.dt, rtol=args.rtol, atol=args.atol
        )
        _write_series(args.out, series, args.dt, ["y1", "y2", "y3"])
    elif kind == "multiscale":
        series = datasets.multiscale_l63(
            h_mode=args.h_mode,
            eps_sep=args.eps_sep,
            t_end=args.t_end,
            dt_out=args.dt,
            seed_state=args.seed,
            transient=args.transient,
        )
        _write_series(args.out, series, args.dt, ["z"])
        if args.closure_out:
            pairs = extract_closure_samples(series, datasets.double_well_drift, args.dt)
            pairs.save_csv(args.closure_out)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown dataset kind {kind!r}")
    return 0


def cmd_fit(args) -> int:
    ts = _load_training(args.data, args.header, args.binary)
    if args.mode == "variable":
        spec = variable_bandwidth_spec(ts, args.epsilon, args.beta)
    else:
        k_matrix = np.cov(ts.data) if args.k_matrix == "empirical" else None
        if k_matrix is not None and k_matrix.ndim == 0:
            k_matrix = k_matrix.reshape(1, 1)
        spec = KernelSpec(epsilon=args.epsilon, k_matrix=k_matrix)
    model = sinkhorn_fit(
        ts, spec, tol=args.tol, max_iter=args.max_iter, materialize_limit=args.materialize_limit
    )
    save_model(model, args.out)
    print(f"fitted M={model.count} d={model.dim} residual={model.residual:.3e} "
          f"iterations={model.iterations_used}")
    return 0


def _sampler_config(args, init) -> SamplerConfig:
    return SamplerConfig(
        scheme=args.scheme,
        n_steps=args.steps,
        delta_tau=args.delta_tau,
        burn_in=args.burn,
        thin=args.thin,
        seed=args.seed,
        init=init,
    )


def cmd_sample(args) -> int:
    model = load_model(args.model)
    init = None
    if args.init is not None:
        init = _floats(args.init)
    elif args.init_index is not None:
        init = model.training.data[:, args.init_index]
    out = run_chain(model, _sampler_config(args, init), record_pre_projection=bool(args.noisy_out))
    write_csv_rows(args.out, out.samples.T)
    if args.noisy_out and out.pre_projection is not None:
        write_csv_rows(args.noisy_out, out.pre_projection.T)
    if args.diagnostics:
        with open(args.diagnostics, "w") as fh:
            for n in range(out.max_weight.size):
                record = {
                    "step": n + 1,
                    "max_weight": float(out.max_weight[n]),
                    "entropy": float(out.entropy[n]),
                    "in_hull": bool(out.in_hull[n]),
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"kept {out.samples.shape[1]} samples")
    return 0


def cmd_conditional(args) -> int:
    model = load_model(args.model)
    spec = ConditionalSpec(
        y_indices=_ints(args.clamp_indices),
        y_star=_floats(args.clamp_values),
        n_inner=args.n_inner,
        noise_mode=args.noise,
        reset_inner=args.reset_inner,
    )
    cfg = SamplerConfig(
        scheme="unaware-split",  # outer bookkeeping only; steps are clamped
        n_steps=args.steps,
        burn_in=args.burn,
        thin=args.thin,
        seed=args.seed,
    )
    out = conditional_chain(model, spec, cfg)
    write_csv_rows(args.out, out.samples.T)
    print(f"kept {out.samples.shape[1]} conditional samples")
    return 0


def cmd_surrogate(args) -> int:
    model = load_model(args.model)
    closure = ClosureModel(bridge=model, drift_fn=DRIFTS[args.drift], dt=args.dt)
    rng = stream(args.seed, "sample")
    z = surrogate_simulate(
        closure,
        _floats(args.z0),
        n_outer=args.outer,
        n_inner=args.inner,
        rng=rng,
        reset_inner=args.reset_inner,
    )
    names = [f"z{k + 1}" for k in range(z.shape[0])]
    _write_series(args.out, z, args.dt, names)
    print(f"simulated {z.shape[1]} surrogate steps")
    return 0


def cmd_trajectory(args) -> int:
    model = load_model(args.model)
    rng = stream(args.seed, "sample")
    ds = model.dim // 2
    if args.y0 is not None and args.y1 is not None:
        y0, y1 = _floats(args.y0), _floats(args.y1)
    else:
        start = int(rng.integers(model.count))
        y0 = model.training.data[:ds, start]
        y1 = model.training.data[ds:, start]
    traj = trajectory_generate(
        model, y0, y1, n_steps=args.steps, n_inner=args.inner, rng=rng
    )
    names = [f"y{k + 1}" for k in range(ds)]
    _write_series(args.out, traj, args.dt, names)
    print(f"generated {traj.shape[1]} trajectory steps")
    return 0


def cmd_evaluate(args) -> int:
    gen = TrainingSet.load_csv(args.generated, header=args.header)
    ref = TrainingSet.load_csv(args.reference, header=args.header)
    cfg = OtConfig(penalty=args.penalty, max_iter=args.max_iter, tol=args.tol)
    result = entropic_ot(gen.data, ref.data, cfg)
    coord = args.marginal_coord if args.marginal_coord >= 0 else gen.dim - 1
    marginal = marginal_ot_1d(gen.data[coord], ref.data[coord], cfg)
    lo = min(gen.data[coord].min(), ref.data[coord].min())
    hi = max(gen.data[coord].max(), ref.data[coord].max())
    c_gen, edges = histogram(gen.data[coord], args.bins, range=(lo, hi))
    c_ref, _ = histogram(ref.data[coord], args.bins, range=(lo, hi))
    report = {
        "ot_distance": result.distance,
        "transport_cost": result.transport_cost,
        "entropy": result.entropy,
        "marginals_residual": result.plan_residual,
        "iterations": result.iterations,
        "marginal_ot": marginal.distance,
        "marginal_coord": coord,
        "ks": [ks_statistic(gen.data[k], ref.data[k]) for k in range(gen.dim)],
        "histogram": {
            "edges": [float(v) for v in edges],
            "counts_generated": [int(v) for v in c_gen],
            "counts_reference": [int(v) for v in c_ref],
        },
    }
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.figure:
        from . import figures

        figures.evaluation_histograms(args.figure, gen.data, ref.data)
    print(f"ot_distance={result.distance:.6g} transport_cost={result.transport_cost:.6g}")
    return 0


def cmd_experiment(args) -> int:
    if args.name not in PRESETS:
        print(
            f"unknown preset {args.name!r}; available: {', '.join(sorted(PRESETS))}",
            file=sys.stderr,
        )
        return 2
    summary = run_experiment(
        args.name,
        args.out_dir,
        seed=args.seed,
        scale=args.scale,
        render_figures=not args.no_figures,
        cache_dir=args.cache_dir,
        full_m=args.full_m,
        full_reference=args.full_reference,
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgesampler",
        description="Entropic-coupling Langevin sampling toolkit",
    )
    parser.add_argument("--config", help="key = value file with option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p_data = sub.add_parser("dataset", help="generate a synthetic dataset CSV")
    kinds = p_data.add_subparsers(dest="kind", required=True)

    def _common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)

    k = kinds.add_parser("gaussian2d")
    k.add_argument("--m", type=int, default=1000)
    k.add_argument("--nu", type=float, default=1e-4)
    _common(k)
    k.set_defaults(func=cmd_dataset)

    k = kinds.add_parser("ring")
    k.add_argument("--m", type=int, default=2000)
    k.add_argument("--sigma-r", type=float, default=0.06)
    k.add_argument("--sigma-theta", type=float, default=0.6)
    _common(k)
    k.set_defaults(func=cmd_dataset)

    k = kinds.add_parser("semisphere")
    k.add_argument("--m", type=int, default=1000)
    k.add_argument("--d", type=int, default=3)
    k.add_argument("--alpha", type=float, default=5.0)
    k.add_argument("--radial-noise", type=float, default=0.01)
    k.add_argument("--full-sphere", action="store_true")
    _common(k)
    k.set_defaults(func=cmd_dataset)

    k = kinds.add_parser("l63")
    k.add_argument("--state0", default="1.0,1.0,24.0")
    k.add_argument("--t-end", type=float, default=100.0)
    k.add_argument("--dt", type=float, default=0.1)
    k.add_argument("--rtol", type=float, default=1e-8)
    k.add_argument("--atol", type=float, default=1e-10)
    _common(k)
    k.set_defaults(func=cmd_dataset)

    k = kinds.add_parser("multiscale")
    k.add_argument("--h-mode", choices=["additive", "multiplicative"], default="additive")
    k.add_argument("--eps-sep", type=float, default=0.01)
    k.add_argument("--t-end", type=float, default=200.0)
    k.add_argument("--dt", type=float, default=0.1)
    k.add_argument("--transient", type=float, default=100.0)
    k.add_argument("--closure-out", help="also write (state, closure) pairs CSV")
    _common(k)
    k.set_defaults(func=cmd_dataset)

    p_fit = sub.add_parser("fit", help="fit the coupling and write a model file")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--header", action="store_true")
    p_fit.add_argument("--binary", action="store_true", help="data is an SBTS binary dump")
    p_fit.add_argument("--epsilon", type=float, required=True)
    p_fit.add_argument("--mode", choices=["fixed", "variable"], default="fixed")
    p_fit.add_argument("--beta", type=float, default=0.0)
    p_fit.add_argument("--k-matrix", choices=["identity", "empirical"], default="identity")
    p_fit.add_argument("--tol", type=float, default=1e-10)
    p_fit.add_argument("--max-iter", type=int, default=10_000)
    p_fit.add_argument("--materialize-limit", type=int, default=20_000)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_sample = sub.add_parser("sample", help="run an unconditional chain")
    p_sample.add_argument("--model", required=True)
    p_sample.add_argument("--scheme", choices=list(SCHEMES), default="unaware-split")
    p_sample.add_argument("--steps", type=int, required=True)
    p_sample.add_argument("--burn", type=int, default=None)
    p_sample.add_argument("--thin", type=int, default=20)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--delta-tau", type=float, default=None)
    p_sample.add_argument("--init", help="comma-separated start point")
    p_sample.add_argument("--init-index", type=int, help="start from this training sample")
    p_sample.add_argument("--out", required=True)
    p_sample.add_argument("--noisy-out", help="also write kept pre-projection states")
    p_sample.add_argument("--diagnostics", help="write per-step diagnostics as JSON lines")
    p_sample.set_defaults(func=cmd_sample)

    p_cond = sub.add_parser("conditional", help="sample a block conditioned on a clamp")
    p_cond.add_argument("--model", required=True)
    p_cond.add_argument("--clamp-indices", required=True)
    p_cond.add_argument("--clamp-values", required=True)
    p_cond.add_argument("--n-inner", type=int, default=100)
    p_cond.add_argument("--noise", choices=["unaware", "aware"], default="unaware")
    p_cond.add_argument("--reset-inner", action="store_true")
    p_cond.add_argument("--steps", type=int, required=True)
    p_cond.add_argument("--burn", type=int, default=None)
    p_cond.add_argument("--thin", type=int, default=20)
    p_cond.add_argument("--seed", type=int, default=0)
    p_cond.add_argument("--out", required=True)
    p_cond.set_defaults(func=cmd_conditional)

    p_surr = sub.add_parser("surrogate", help="simulate the stochastic closure model")
    p_surr.add_argument("--model", required=True)
    p_surr.add_argument("--drift", choices=list(DRIFTS), default="double-well")
    p_surr.add_argument("--dt", type=float, default=0.1)
    p_surr.add_argument("--z0", required=True, help="comma-separated initial slow state")
    p_surr.add_argument("--outer", type=int, required=True)
    p_surr.add_argument("--inner", type=int, default=100)
    p_surr.add_argument("--reset-inner", action="store_true")
    p_surr.add_argument("--seed", type=int, default=0)
    p_surr.add_argument("--out", required=True)
    p_surr.set_defaults(func=cmd_surrogate)

    p_traj = sub.add_parser("trajectory", help="generate a trajectory from pair data")
    p_traj.add_argument("--model", required=True)
    p_traj.add_argument("--steps", type=int, required=True)
    p_traj.add_argument("--inner", type=int, default=20)
    p_traj.add_argument("--dt", type=float, default=0.1)
    p_traj.add_argument("--y0", help="comma-separated current state")
    p_traj.add_argument("--y1", help="comma-separated next state")
    p_traj.add_argument("--seed", type=int, default=0)
    p_traj.add_argument("--out", required=True)
    p_traj.set_defaults(func=cmd_trajectory)

    p_eval = sub.add_parser("evaluate", help="transport diagnostics between two sample CSVs")
    p_eval.add_argument("--generated", required=True)
    p_eval.add_argument("--reference", required=True)
    p_eval.add_argument("--header", action="store_true")
    p_eval.add_argument("--penalty", type=float, default=100.0)
    p_eval.add_argument("--tol", type=float, default=1e-9)
    p_eval.add_argument("--max-iter", type=int, default=50_000)
    p_eval.add_argument("--marginal-coord", type=int, default=-1)
    p_eval.add_argument("--bins", type=int, default=50)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--figure", help="render histogram overlays to this file")
    p_eval.set_defaults(func=cmd_evaluate)

    p_exp = sub.add_parser("experiment", help="run a named preset end to end")
    p_exp.add_argument("name")
    p_exp.add_argument("--out-dir", required=True)
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--scale", type=float, default=1.0)
    p_exp.add_argument("--no-figures", action="store_true")
    p_exp.add_argument("--cache-dir", default=None)
    p_exp.add_argument("--full-m", action="store_true")
    p_exp.add_argument("--full-reference", action="store_true")
    p_exp.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        try:
            parser.set_defaults(**_load_config(cfg_path))
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, IndexError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and signal internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
