"""Benchmark experiments: configuration, data generation, evaluation and
cross-validation of the kernel bandwidth and regularisation.

``run_experiment`` writes an artifact directory and returns a summary dict
whose JSON form is byte-identical across runs with the same configuration.
"""

import csv
import json
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .discrete import cluster_states, extract_graph
from .dynamics import StateDistribution, power_discrepancy, estimate_operator, operator_power
from .errors import KemError, ValidationError
from .geometry import limit_density, spectral_gap
from .model import ModelConfig, fit, save_model
from .prediction import forecast_path, project_new
from .processes import (
    SdeSpec,
    Series,
    concat_pairs,
    even_process,
    generate_hmm,
    integrate_sde,
    lorenz96_initial,
    mess3,
    random_embed,
    window_pairs,
)

__all__ = [
    "PRESETS",
    "ExperimentConfig",
    "Dataset",
    "make_dataset",
    "run_experiment",
    "evaluate_forecasts",
    "cross_validate",
    "read_series_csv",
    "write_series_csv",
]

PROCESSES = ("even", "mess3", "lorenz63", "lorenz96", "csv")
DISCRETE = ("even", "mess3")

PRESETS = {
    "even-process": dict(
        process="even", n_pairs=30000, Lx=10, Ly=5, decay=0.01, bandwidth=1.0,
        M_max=10, cluster_dims=1, radius=0.1, min_pts=5,
    ),
    "mess3": dict(
        process="mess3", n_pairs=25000, Lx=15, Ly=1, decay=0.01, bandwidth=0.1,
        M_max=10, cluster_dims=2, radius=0.1, min_pts=5,
    ),
    "lorenz63": dict(
        process="lorenz63", n_pairs=20000, Lx=5, Ly=5, dt=0.01, decay=0.01, bandwidth=200.0,
        M_max=8, horizons=[50], probes=100, probe_spacing=50,
    ),
    "lorenz96": dict(
        process="lorenz96", n_pairs=10000, Lx=5, Ly=5, dt=0.01, dim=5, forcing=8.0,
        embed_dim=1000, noise_var=0.2, runs=10, decay=0.01, bandwidth=600.0,
        M_max=10, horizons=[5], probes=20, probe_spacing=50,
    ),
}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``n_pairs`` is the sample count at ``scale=1``; the fitted count is
    ``round(n_pairs * scale)``. ``horizons`` are forecast lead times in
    operator steps. For Lorenz-96 ``noise_var`` is the per-component noise
    variance after the random embedding, while ``nu`` is measurement noise
    on the flow itself.
    """

    process: str = "even"
    data: str = None
    n_pairs: int = 5000
    scale: float = 1.0
    Lx: int = 10
    Ly: int = 5
    bandwidth: float = 1.0
    bandwidth_y: float = None
    decay: float = 0.01
    eps: float = 1e-3
    M_max: int = 10
    theta: float = 0.0
    method: str = "auto"
    dt: float = 0.01
    eta: float = 0.0
    nu: float = 0.0
    transient: int = 1000
    dim: int = 5
    forcing: float = 8.0
    embed_dim: int = 0
    noise_var: float = 0.0
    runs: int = 1
    cluster_dims: int = 1
    radius: float = 0.1
    min_pts: int = 5
    horizons: list = field(default_factory=lambda: [50])
    probes: int = 100
    probe_spacing: int = 50
    every: int = 5
    seed: int = 0

    @classmethod
    def from_dict(cls, values, preset=None):
        """Build from a preset name and/or a dict, rejecting unknown keys."""
        merged = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ValidationError(f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            merged.update(PRESETS[preset])
        names = {f.name for f in fields(cls)}
        for key, value in (values or {}).items():
            if key not in names:
                raise ValidationError(f"{key}: unknown configuration field")
            merged[key] = value
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @property
    def n(self):
        return max(int(round(self.n_pairs * self.scale)), 2)

    @property
    def discrete(self):
        return self.process in DISCRETE

    def validate(self):
        def need(ok, name, what):
            if not ok:
                raise ValidationError(f"{name}: must be {what}, got {getattr(self, name)!r}")

        need(self.process in PROCESSES, "process", f"one of {PROCESSES}")
        need(self.process != "csv" or (self.data and os.path.isfile(self.data)), "data", "an existing CSV file")
        need(self.n_pairs >= 2, "n_pairs", ">= 2")
        need(self.scale > 0, "scale", "> 0")
        need(self.n > self.M_max, "scale", f"large enough to leave more than M_max={self.M_max} samples")
        for name in ("Lx", "Ly", "runs", "min_pts", "cluster_dims", "probes", "probe_spacing", "every", "dim"):
            need(int(getattr(self, name)) >= 1, name, ">= 1")
        need(0 < self.decay <= 1, "decay", "in (0, 1]")
        need(self.bandwidth > 0, "bandwidth", "> 0")
        need(self.bandwidth_y is None or self.bandwidth_y > 0, "bandwidth_y", "> 0")
        need(self.eps > 0, "eps", "> 0")
        need(self.dt > 0, "dt", "> 0")
        need(self.radius > 0, "radius", "> 0")
        for name in ("eta", "nu", "noise_var", "theta", "M_max", "transient", "embed_dim"):
            need(getattr(self, name) >= 0, name, ">= 0")
        need(all(int(h) >= 0 for h in self.horizons), "horizons", "nonnegative step counts")
        need(self.process != "lorenz96" or self.dim >= 4, "dim", ">= 4 for Lorenz-96")
        need(self.embed_dim == 0 or self.embed_dim >= self.dim, "embed_dim", "0 or >= dim")
        self.model_config()

    def model_config(self):
        return ModelConfig(
            bandwidth=self.bandwidth, decay=self.decay, eps=self.eps, bandwidth_y=self.bandwidth_y,
            M_max=self.M_max, theta=self.theta, method=self.method, seed=self.seed,
        )

    def to_dict(self):
        return asdict(self)


@contextmanager
def _stage(name):
    """Prefix package errors raised inside the block with a stage name."""
    try:
        yield
    except KemError as exc:
        if exc.args and not str(exc.args[0]).startswith(f"[{name}]"):
            exc.args = (f"[{name}] {exc.args[0]}",) + exc.args[1:]
        exc.stage = name
        raise


# -- data ------------------------------------------------------------------

@dataclass
class Dataset:
    """Training pairs plus, for flows, a held-out trajectory.

    ``test`` is the observed held-out series and ``test_clean`` the same
    trajectory without measurement noise; both are ``None`` for discrete
    processes and CSV input.
    """

    pairs: object
    test: Series = None
    test_clean: Series = None


def read_series_csv(path):
    """Read a ``t,x0,x1,...`` CSV into a Series."""
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, StopIteration, ValueError) as exc:
        raise ValidationError(f"cannot read series CSV {path}: {exc}") from exc
    if not header or header[0].strip() != "t" or table.shape[1] < 2:
        raise ValidationError(f"{path}: expected header 't,x0,x1,...'")
    t = table[:, 0]
    dt = float(np.median(np.diff(t))) if len(t) > 1 else 1.0
    if len(t) > 1 and np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(1.0, abs(dt)):
        raise ValidationError(f"{path}: time column is not evenly spaced")
    return Series(table[:, 1:], dt=dt if dt > 0 else 1.0, t0=float(t[0]))


def write_series_csv(series, path):
    """Write a Series as ``t,x0,x1,...`` with round-trippable decimals."""
    header = ",".join(["t"] + [f"x{i}" for i in range(series.dim)])
    table = np.column_stack([series.times, series.values])
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")


def _flow_spec(cfg, nu, seed):
    if cfg.process == "lorenz63":
        return SdeSpec("lorenz63", eta=cfg.eta, nu=nu, dt=cfg.dt, seed=seed)
    return SdeSpec("lorenz96", params={"D": cfg.dim, "F": cfg.forcing}, eta=cfg.eta, nu=nu, dt=cfg.dt, seed=seed)


def _flow_initial(cfg, seed):
    if cfg.process == "lorenz63":
        rng = np.random.default_rng(seed)
        return np.array([1.0, 1.0, 25.0]) + rng.uniform(-5.0, 5.0, 3)
    return lorenz96_initial(cfg.dim, cfg.forcing, seed)


def simulate_flow(cfg, n_steps, seed, R=None):
    """Observed and noise-free series of one flow run.

    Both share the integrated trajectory; the observed one carries
    measurement noise ``nu`` and, with ``embed_dim > 0``, the random
    embedding and its noise.
    """
    init = _flow_initial(cfg, seed)
    clean = integrate_sde(_flow_spec(cfg, 0.0, seed), n_steps, init, cfg.transient)
    obs = integrate_sde(_flow_spec(cfg, cfg.nu, seed), n_steps, init, cfg.transient) if cfg.nu > 0 else clean
    if cfg.embed_dim:
        obs, R = random_embed(obs, cfg.embed_dim, cfg.noise_var, seed + 1, R=R)
        clean, _ = random_embed(clean, cfg.embed_dim, 0.0, seed + 1, R=R)
    return obs, clean, R


def make_dataset(cfg, with_test=True):
    """Generate (or load) the training pairs and the held-out trajectory."""
    n, L = cfg.n, cfg.Lx + cfg.Ly
    if cfg.process == "even":
        return Dataset(window_pairs(generate_hmm(even_process(), n + L - 1, cfg.seed), cfg.Lx, cfg.Ly))
    if cfg.process == "mess3":
        return Dataset(window_pairs(generate_hmm(mess3(), n + L - 1, cfg.seed), cfg.Lx, cfg.Ly))
    if cfg.process == "csv":
        return Dataset(window_pairs(read_series_csv(cfg.data), cfg.Lx, cfg.Ly))

    R = None  # drawn by the first run, shared by the rest
    per_run = [n // cfg.runs + (r < n % cfg.runs) for r in range(cfg.runs)]
    sets = []
    for r, count in enumerate(per_run):
        obs, _, R = simulate_flow(cfg, count + L - 1, cfg.seed + 100 * (r + 1), R)
        sets.append(window_pairs(obs, cfg.Lx, cfg.Ly, series_id=r))
    pairs = sets[0] if len(sets) == 1 else concat_pairs(sets)
    if not with_test:
        return Dataset(pairs)
    test_len = cfg.probes * cfg.probe_spacing + cfg.Lx + max(cfg.horizons, default=0) + 1
    test, test_clean, _ = simulate_flow(cfg, test_len, cfg.seed + 7919, R)
    return Dataset(pairs, test, test_clean)


# -- evaluation ------------------------------------------------------------

def probe_indices(cfg, test):
    """Present indices of the held-out probes."""
    start = cfg.Lx - 1
    idx = start + cfg.probe_spacing * np.arange(cfg.probes)
    last = max(cfg.horizons, default=0) + 1
    return idx[idx + last < test.n_steps]


def evaluate_forecasts(model, test, test_clean, probes, horizons, every=None):
    """Forecast from held-out windows and compare with the noise-free truth.

    At horizon ``h`` the forecast targets the observation ``h + 1`` steps
    after the probe's present (``h`` operator steps, then the one-step
    function). Persistence uses the observed present value.

    Returns
    -------
    metrics : dict
        Per horizon: model RMSE, persistence RMSE, climatology RMSE.
    rows : list of tuple
        ``(probe, step, truth, pred, err)`` for steps ``0, every, ...``.
    """
    pairs = model.pairs
    D = pairs.D
    f = model.function()
    clim = f.values.mean(axis=0)
    H = max(horizons, default=0)
    steps = sorted(set(horizons) | (set(range(0, H + 1, every)) if every else set()))
    paths, rows = [], []
    for k, p in enumerate(probes):
        x = test.values[p - pairs.Lx + 1:p + 1].ravel()
        est = project_new(x, model.context, model.basis)
        path = forecast_path(est.distribution, model.operator, f, H)
        paths.append(path)
        for s in steps:
            truth = test_clean.values[p + s + 1]
            rows.append((k, s, truth, path[s], float(np.linalg.norm(path[s] - truth))))
    paths = np.array(paths)
    metrics = {}
    for h in horizons:
        truth = test_clean.values[probes + h + 1]
        rmse = lambda pred: float(np.sqrt(np.mean(np.sum((pred - truth) ** 2, axis=1))))
        metrics[str(h)] = {
            "rmse": rmse(paths[:, h]),
            "persistence_rmse": rmse(test.values[probes, :D]),
            "climatology_rmse": rmse(np.broadcast_to(clim, truth.shape)),
        }
    return metrics, rows


def write_prediction_csv(path, rows, D):
    header = ["probe", "step"] + [f"truth{i}" for i in range(D)] + [f"pred{i}" for i in range(D)] + ["err"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for probe, step, truth, pred, err in rows:
            w.writerow([probe, step] + [repr(float(v)) for v in truth] + [repr(float(v)) for v in pred] + [repr(err)])


def _discrete_summary(model, cfg):
    coords = model.basis.psi[:, 1:1 + cfg.cluster_dims]
    labels = cluster_states(coords, cfg.radius, cfg.min_pts)
    graph = extract_graph(labels, model.pairs, coords=coords)
    return labels, graph


def _json_ready(x):
    if isinstance(x, dict):
        return {str(k): _json_ready(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_ready(v) for v in x]
    if isinstance(x, np.ndarray):
        return _json_ready(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def summary_json(summary):
    return json.dumps(_json_ready(summary), indent=2, sort_keys=True) + "\n"


def run_experiment(cfg, outdir, save=True, workdir=None):
    """Run one experiment end to end and write its artifacts.

    Files written to ``outdir``: ``spectrum.csv``, ``coords.csv``,
    ``summary.json``, ``graph.json`` and ``graph.dot`` (discrete processes),
    ``prediction.csv`` (flows) and, with ``save``, the ``model`` directory.
    """
    os.makedirs(outdir, exist_ok=True)
    with _stage("generate"):
        data = make_dataset(cfg)
    with _stage("fit"):
        model = fit(data.pairs, cfg.model_config(), workdir=workdir)
    basis = model.basis
    summary = {
        "config": cfg.to_dict(),
        "n_samples": len(data.pairs),
        "method": model.info["method"],
        "M": basis.M,
        "eigenvalues": basis.eigenvalues,
        "spectrum": basis.spectrum,
        "fixed_point_leak": model.operator.fixed_point_leak(),
    }
    with _stage("spectrum"):
        if np.sum(basis.spectrum[1:] > 0) >= 2:
            m, ratio = spectral_gap(basis.spectrum)
            summary["spectral_gap"] = {"components": m, "ratio": ratio}
        np.savetxt(
            os.path.join(outdir, "spectrum.csv"),
            np.column_stack([np.arange(len(basis.spectrum)), basis.spectrum]),
            fmt=["%d", "%.17g"], delimiter=",", header="index,eigenvalue", comments="",
        )
        np.savetxt(
            os.path.join(outdir, "coords.csv"), basis.coords(), fmt="%.17g", delimiter=",",
            header=",".join(f"c{m}" for m in range(1, basis.M + 1)), comments="",
        )
    with _stage("operator"):
        if len(data.pairs) > 4:
            direct = estimate_operator(basis, data.pairs, 2)
            summary["operator_power_discrepancy"] = power_discrepancy(direct, operator_power(model.operator, 2))
        ell = StateDistribution.limit(model.operator.size)
        moved = model.operator.E @ ell.coeffs
        summary["limit_fixed_point_error"] = float(np.linalg.norm(moved / moved[0] - ell.coeffs))
        dens = limit_density(basis)
        summary["limit_density_entropy"] = float(-np.sum(dens[dens > 0] * np.log(dens[dens > 0])))
    if cfg.discrete:
        with _stage("graph"):
            labels, graph = _discrete_summary(model, cfg)
            summary["graph"] = graph.to_dict()
            with open(os.path.join(outdir, "graph.json"), "w") as fh:
                fh.write(graph.to_json(indent=2, sort_keys=True) + "\n")
            with open(os.path.join(outdir, "graph.dot"), "w") as fh:
                fh.write(graph.to_dot())
            np.savetxt(os.path.join(outdir, "labels.csv"), labels, fmt="%d", header="label", comments="")
    elif data.test is not None and cfg.horizons:
        with _stage("predict"):
            probes = probe_indices(cfg, data.test)
            metrics, rows = evaluate_forecasts(model, data.test, data.test_clean, probes, cfg.horizons, cfg.every)
            summary["forecast"] = metrics
            summary["in_sample_r2"] = model.function().r2(basis)
            write_prediction_csv(os.path.join(outdir, "prediction.csv"), rows, data.pairs.D)
    if save:
        with _stage("save"):
            save_model(model, os.path.join(outdir, "model"))
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        fh.write(summary_json(summary))
    return _json_ready(summary)


# -- cross-validation ------------------------------------------------------

def cross_validate(cfg, bandwidths, epsilons, horizon=None, workdir=None):
    """Exhaustive grid search of ``(bandwidth, eps)`` by held-out forecast RMSE.

    The held-out trajectory is the experiment's test trajectory. Grid
    points whose fit or forecast fails get ``rmse = None`` and an error
    message. The best point has the smallest RMSE; ties go to the smaller
    ``eps``, then the smaller bandwidth.

    Returns
    -------
    best : dict or None
    table : list of dict
    """
    bandwidths, epsilons = list(bandwidths), list(epsilons)
    if not bandwidths or not epsilons:
        raise ValidationError("grid: bandwidth and eps lists must be non-empty")
    if cfg.discrete or cfg.process == "csv":
        raise ValidationError("process: cross-validation needs a simulated flow with a held-out run")
    h = int(cfg.horizons[0] if horizon is None else horizon)
    base = dict(cfg.to_dict(), horizons=[h])
    data = make_dataset(ExperimentConfig.from_dict(base))
    probes = probe_indices(ExperimentConfig.from_dict(base), data.test)
    table = []
    for xi in bandwidths:
        for eps in epsilons:
            row = {"bandwidth": float(xi), "eps": float(eps), "rmse": None, "error": None}
            try:
                point = ExperimentConfig.from_dict(dict(base, bandwidth=xi, eps=eps))
                model = fit(data.pairs, point.model_config(), workdir=workdir)
                metrics, _ = evaluate_forecasts(model, data.test, data.test_clean, probes, [h])
                rmse = metrics[str(h)]["rmse"]
                if np.isfinite(rmse):
                    row["rmse"] = rmse
                else:
                    row["error"] = "non-finite forecast"
            except (KemError, np.linalg.LinAlgError) as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            table.append(row)
    scored = [r for r in table if r["rmse"] is not None]
    best = min(scored, key=lambda r: (r["rmse"], r["eps"], r["bandwidth"])) if scored else None
    return best, table
