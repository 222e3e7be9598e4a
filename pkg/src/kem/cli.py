"""Command line interface.

Exit status: 0 on success, 2 for invalid input, 3 for numerical failure.
``KEM_THREADS`` caps the number of BLAS/OpenMP threads.
"""

import argparse
import json
import os
import sys

import numpy as np

from .discrete import cluster_states, extract_graph
from .dynamics import StateDistribution, evolve, operator_power
from .errors import NumericError, ValidationError
from .experiments import (
    PRESETS,
    ExperimentConfig,
    cross_validate,
    evaluate_forecasts,
    read_series_csv,
    run_experiment,
    summary_json,
    write_prediction_csv,
    write_series_csv,
)
from .model import ModelConfig, fit, is_model_dir, load_model, save_model
from .processes import (
    SdeSpec,
    even_process,
    generate_hmm,
    integrate_sde,
    lorenz96_initial,
    mess3,
    random_embed,
    window_pairs,
)


def _write_csv(path, table, header, fmt="%.17g"):
    target = sys.stdout if path in (None, "-") else path
    np.savetxt(target, table, fmt=fmt, delimiter=",", header=header, comments="")


def _load(path):
    if not is_model_dir(path):
        raise ValidationError(f"{path} is not a model directory")
    return load_model(path)


# -- subcommands -----------------------------------------------------------

def cmd_generate(args):
    if args.n < 1:
        raise ValidationError("--n must be >= 1")
    if args.process == "even":
        series = generate_hmm(even_process(), args.n, args.seed)
    elif args.process == "mess3":
        series = generate_hmm(mess3(), args.n, args.seed)
    else:
        if args.process == "lorenz63":
            spec = SdeSpec("lorenz63", eta=args.eta, nu=args.nu, dt=args.dt, seed=args.seed)
            init = [1.0, 1.0, 1.0]
        else:
            spec = SdeSpec("lorenz96", params={"D": args.dim, "F": args.forcing},
                           eta=args.eta, nu=args.nu, dt=args.dt, seed=args.seed)
            init = lorenz96_initial(args.dim, args.forcing, args.seed)
        series = integrate_sde(spec, args.n, init, args.transient)
        if args.embed_dim:
            var = 1.0 / series.dim if args.noise_var is None else args.noise_var
            series, _ = random_embed(series, args.embed_dim, var, args.seed + 1)
    write_series_csv(series, args.out)


def cmd_fit(args):
    cfg = ModelConfig(
        bandwidth=args.bandwidth, decay=args.decay, eps=args.eps, bandwidth_y=args.bandwidth_y,
        M_max=args.M_max, theta=args.theta, method=args.method, seed=args.seed,
    )
    pairs = window_pairs(read_series_csv(args.data), args.Lx, args.Ly)
    model = fit(pairs, cfg, dump_gram=args.dump_gram, workdir=args.workdir)
    save_model(model, args.out)
    print(f"fitted N={len(pairs)} M={model.basis.M} method={model.info['method']} -> {args.out}")


def cmd_spectrum(args):
    basis = _load(args.model).basis
    lam = basis.spectrum if args.all else basis.eigenvalues
    _write_csv(args.out, np.column_stack([np.arange(len(lam)), lam]), "index,eigenvalue", ["%d", "%.17g"])


def cmd_coords(args):
    basis = _load(args.model).basis
    header = ",".join(f"c{m}" for m in range(1, basis.M + 1))
    _write_csv(args.out, basis.coords(), header)


def cmd_graph(args):
    model = _load(args.model)
    coords = model.basis.psi[:, 1:1 + args.dims]
    labels = cluster_states(coords, args.radius, args.min_pts)
    graph = extract_graph(labels, model.pairs, coords=coords)
    text = graph.to_json(indent=2, sort_keys=True) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.dot:
        with open(args.dot, "w") as fh:
            fh.write(graph.to_dot())


def cmd_operator(args):
    op = _load(args.model).operator
    if args.steps != 1:
        op = operator_power(op, args.steps)
    _write_csv(args.out, op.E, "")


def cmd_evolve(args):
    model = _load(args.model)
    start = StateDistribution.from_sample(model.basis, args.sample)
    f = model.function()
    rows = []
    for n in range(args.steps + 1):
        c = evolve(start, model.operator, n).coeffs
        rows.append(np.concatenate([[n], c, np.atleast_1d(f.at(c))]))
    M, D = model.operator.size, model.pairs.D
    header = ",".join(["step"] + [f"q{m}" for m in range(M)] + [f"f{d}" for d in range(D)])
    _write_csv(args.out, np.array(rows), header)


def cmd_predict(args):
    model = _load(args.model)
    test = read_series_csv(args.test)
    truth = read_series_csv(args.truth) if args.truth else test
    if truth.values.shape != test.values.shape:
        raise ValidationError("--truth must have the same shape as --test")
    if test.dim != model.pairs.D:
        raise ValidationError(f"test series has dimension {test.dim}, model expects {model.pairs.D}")
    if args.horizon_steps < 0 or args.every < 1:
        raise ValidationError("--horizon-steps must be >= 0 and --every >= 1")
    Lx, H = model.pairs.Lx, args.horizon_steps
    probes = np.arange(Lx - 1, test.n_steps - H - 1, args.probe_spacing)[: args.probes]
    if len(probes) == 0:
        raise ValidationError("test series is too short for one probe at this horizon")
    metrics, rows = evaluate_forecasts(model, test, truth, probes, [H], args.every)
    write_prediction_csv(args.out, rows, model.pairs.D)
    print(json.dumps(metrics, sort_keys=True))


def _experiment_config(args):
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
    preset = args.preset or values.pop("preset", None)
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            values[key] = json.loads(raw)
        except json.JSONDecodeError:
            values[key] = raw
    if args.scale is not None:
        values["scale"] = args.scale
    if preset is None and "process" not in values:
        raise ValidationError("give --preset or a config naming a process")
    return ExperimentConfig.from_dict(values, preset)


def cmd_run(args):
    cfg = _experiment_config(args)
    summary = run_experiment(cfg, args.out, save=not args.no_save, workdir=args.workdir)
    brief = {k: summary[k] for k in ("n_samples", "M", "method", "spectral_gap") if k in summary}
    if "forecast" in summary:
        brief["forecast"] = summary["forecast"]
    if "graph" in summary:
        brief["clusters"] = [round(c["probability"], 4) for c in summary["graph"]["clusters"]]
    print(json.dumps(brief, sort_keys=True))


def cmd_cv(args):
    cfg = _experiment_config(args)
    best, table = cross_validate(cfg, args.bandwidths, args.eps, args.horizon, workdir=args.workdir)
    text = summary_json({"best": best, "table": table})
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    if best is None:
        raise NumericError("every grid point failed")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


# -- parser ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="kem", description="Kernel epsilon-machine reconstruction.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a benchmark process to CSV")
    g.add_argument("--process", required=True, choices=["even", "mess3", "lorenz63", "lorenz96"])
    g.add_argument("--n", type=int, required=True, help="number of time steps")
    g.add_argument("--dt", type=float, default=0.01)
    g.add_argument("--eta", type=float, default=0.0, help="thermal noise amplitude")
    g.add_argument("--nu", type=float, default=0.0, help="measurement noise standard deviation")
    g.add_argument("--dim", type=int, default=5, help="Lorenz-96 dimension")
    g.add_argument("--forcing", type=float, default=8.0, help="Lorenz-96 forcing")
    g.add_argument("--embed-dim", type=int, default=0, help="random embedding dimension (0: none)")
    g.add_argument("--noise-var", type=float, default=None, help="embedding noise variance (default 1/D)")
    g.add_argument("--transient", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a model to a CSV series")
    f.add_argument("--data", required=True)
    f.add_argument("--Lx", type=int, required=True)
    f.add_argument("--Ly", type=int, required=True)
    f.add_argument("--bandwidth", type=float, default=1.0)
    f.add_argument("--bandwidth-y", type=float, default=None)
    f.add_argument("--decay", type=float, default=1.0)
    f.add_argument("--eps", type=float, default=1e-3)
    f.add_argument("--M-max", dest="M_max", type=int, default=20)
    f.add_argument("--theta", type=float, default=0.0)
    f.add_argument("--method", default="auto",
                   choices=["auto", "dense", "compressed", "few-futures", "out-of-core"])
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--dump-gram", default=None, help="write the state similarity matrix here")
    f.add_argument("--workdir", default=None, help="scratch directory for out-of-core fits")
    f.add_argument("--out", required=True, help="model directory")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("spectrum", help="eigenvalues as index,eigenvalue CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--all", action="store_true", help="include components below the floor")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_spectrum)

    c = sub.add_parser("coords", help="state coordinates CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_coords)

    gr = sub.add_parser("graph", help="cluster states and emit the transition graph")
    gr.add_argument("--model", required=True)
    gr.add_argument("--radius", type=float, default=0.1)
    gr.add_argument("--min-pts", type=int, default=5)
    gr.add_argument("--dims", type=int, default=1, help="number of coordinates to cluster on")
    gr.add_argument("--out", default=None, help="JSON output (default stdout)")
    gr.add_argument("--dot", default=None, help="also write Graphviz DOT here")
    gr.set_defaults(func=cmd_graph)

    o = sub.add_parser("operator", help="evolution operator CSV")
    o.add_argument("--model", required=True)
    o.add_argument("--steps", type=int, default=1, help="power of the one-step operator")
    o.add_argument("--out", default=None)
    o.set_defaults(func=cmd_operator)

    e = sub.add_parser("evolve", help="evolve the state of a training sample")
    e.add_argument("--model", required=True)
    e.add_argument("--sample", type=int, required=True)
    e.add_argument("--steps", type=int, required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evolve)

    pr = sub.add_parser("predict", help="forecast from windows of a held-out series")
    pr.add_argument("--model", required=True)
    pr.add_argument("--test", required=True, help="observed held-out series CSV")
    pr.add_argument("--truth", default=None, help="noise-free version of --test to score against")
    pr.add_argument("--horizon-steps", type=int, required=True)
    pr.add_argument("--every", type=int, default=5, help="output spacing in steps")
    pr.add_argument("--probes", type=int, default=100)
    pr.add_argument("--probe-spacing", type=int, default=50)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    for name, func, text in (("run", cmd_run, "run a preset or configured experiment"),
                             ("cv", cmd_cv, "cross-validate bandwidth and eps")):
        r = sub.add_parser(name, help=text)
        r.add_argument("--preset", choices=sorted(PRESETS), default=None)
        r.add_argument("--config", default=None, help="JSON file of configuration fields")
        r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one field")
        r.add_argument("--scale", type=float, default=None, help="multiply the sample count")
        r.add_argument("--workdir", default=None)
        r.set_defaults(func=func)
        if name == "run":
            r.add_argument("--out", required=True, help="artifact directory")
            r.add_argument("--no-save", action="store_true", help="skip writing the model directory")
        else:
            r.add_argument("--bandwidths", type=_floats, required=True)
            r.add_argument("--eps", type=_floats, required=True)
            r.add_argument("--horizon", type=int, default=None)
            r.add_argument("--out", default=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = os.environ.get("KEM_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            try:
                limit = int(threads)
            except ValueError:
                raise ValidationError(f"KEM_THREADS must be an integer, got {threads!r}") from None
            with threadpool_limits(limits=limit):
                args.func(args)
        else:
            args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
