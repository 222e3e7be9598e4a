"""End-to-end fitting of a kernel epsilon-machine and its on-disk format."""

import hashlib
import json
import os
import platform
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import EvolutionOperator, estimate_operator
from .embedding import (
    compressed_state_gram,
    solve_weights,
    state_gram,
    state_gram_few_futures,
    state_gram_out_of_core,
    unique_windows,
)
from .errors import ValidationError
from .geometry import DiffusionBasis, diffusion_basis
from .kernels import KernelSpec, gram, write_gram
from .prediction import PastContext, fit_function
from .processes import SamplePairSet

__all__ = [
    "ModelConfig",
    "KernelEMachine",
    "fit",
    "save_model",
    "load_model",
    "memory_available",
    "memory_required",
]

FORMAT_VERSION = 1
__version__ = "0.1.0"
METHODS = ("auto", "dense", "compressed", "few-futures", "out-of-core")
# resident N x N float64 arrays needed by each method
_RESIDENT = {"dense": 2.2, "few-futures": 1.2, "out-of-core": 1.2, "compressed": 0.0}


@dataclass
class ModelConfig:
    """Estimation settings.

    ``bandwidth_y`` defaults to ``bandwidth``. ``similarity`` selects the
    matrix fed to the diffusion map: ``"state"`` (conditional embeddings)
    or ``"data"`` (the past Gram matrix, used as a data-space baseline).
    ``method`` is ``"auto"``, ``"dense"``, ``"compressed"``,
    ``"few-futures"`` or ``"out-of-core"``; all give the same matrix up to
    rounding.
    """

    bandwidth: float = 1.0
    decay: float = 1.0
    eps: float = 1e-3
    bandwidth_y: float = None
    M_max: int = 20
    theta: float = 0.0
    similarity: str = "state"
    method: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.bandwidth_y is None:
            self.bandwidth_y = self.bandwidth
        for name in ("bandwidth", "bandwidth_y", "eps"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 < self.decay <= 1:
            raise ValidationError(f"decay must lie in (0, 1], got {self.decay}")
        if self.M_max < 0 or self.theta < 0:
            raise ValidationError("M_max and theta must be >= 0")
        if self.similarity not in ("state", "data"):
            raise ValidationError(f"similarity must be 'state' or 'data', got {self.similarity!r}")
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")

    def kernels(self, pairs):
        kx = KernelSpec(self.bandwidth, self.decay, pairs.Lx, pairs.D)
        ky = KernelSpec(self.bandwidth_y, self.decay, pairs.Ly, pairs.D)
        return kx, ky


@dataclass
class KernelEMachine:
    """Fitted model: training pairs, reduced basis, operator and settings."""

    config: ModelConfig
    pairs: SamplePairSet
    basis: DiffusionBasis
    operator: EvolutionOperator
    info: dict = field(default_factory=dict)
    _context: PastContext = field(default=None, repr=False)

    @property
    def context(self):
        if self._context is None:
            kx, _ = self.config.kernels(self.pairs)
            self._context = PastContext(self.pairs.X, kx, self.config.eps)
        return self._context

    def release_context(self):
        """Drop the cached projection context and its distinct-past Gram matrix."""
        self._context = None

    def function(self, tau=None):
        """Fitted next-observation function (``tau`` defaults to ``dt``)."""
        return fit_function(self.pairs, self.basis, self.pairs.dt if tau is None else tau)


def memory_available():
    """Bytes of memory currently available, from /proc/meminfo when present."""
    try:
        with open("/proc/meminfo") as fh:
            for line in fh:
                if line.startswith("MemAvailable:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    return os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_AVPHYS_PAGES")


def memory_required(n, method, n_distinct=0):
    """Approximate peak bytes for a fit on ``n`` samples."""
    if method == "compressed":
        return 2.2 * 8.0 * n_distinct**2 + 8.0 * n * 64
    return _RESIDENT[method] * 8.0 * n * n


def _choose_method(pairs, config):
    n = len(pairs)
    if config.similarity == "data":
        method, n_x = "dense", n
    else:
        n_x = len(unique_windows(pairs.X)[2])
        n_y = len(unique_windows(pairs.Y)[2])
        method = config.method
        if method == "auto":
            if n_x <= n // 2 and n_y <= n // 2:
                method = "compressed"
            elif n_y <= n // 4:
                method = "few-futures"
            elif memory_required(n, "dense") < 0.9 * memory_available():
                method = "dense"
            else:
                method = "out-of-core"
    need = memory_required(n, method, n_x)
    have = memory_available()
    if need > 0.9 * have:
        raise ValidationError(
            f"N={n} with method {method!r} needs about {need / 2**30:.1f} GiB of memory, "
            f"{have / 2**30:.1f} GiB available; reduce N (e.g. --scale)"
        )
    return method


def similarity_matrix(pairs, config, method=None, workdir=None):
    """The matrix handed to the diffusion map, and the method used."""
    kx, ky = config.kernels(pairs)
    method = method or _choose_method(pairs, config)
    if config.similarity == "data":
        return gram(pairs.X, kx, "past"), "dense"
    if method == "compressed":
        return compressed_state_gram(pairs.X, pairs.Y, kx, ky, config.eps), method
    if method == "few-futures":
        return state_gram_few_futures(pairs.X, pairs.Y, kx, ky, config.eps), method
    if method == "out-of-core":
        with tempfile.TemporaryDirectory(dir=workdir) as tmp:
            return state_gram_out_of_core(pairs.X, pairs.Y, kx, ky, config.eps, tmp), method
    weights = solve_weights(gram(pairs.X, kx, "past"), config.eps, overwrite=True)
    return state_gram(weights, gram(pairs.Y, ky, "future"), overwrite=True), method


def fit(pairs, config=None, dump_gram=None, workdir=None):
    """Fit the reduced basis and one-step evolution operator.

    Parameters
    ----------
    pairs : SamplePairSet
    config : ModelConfig, optional
    dump_gram : str, optional
        Write the similarity matrix to this path (binary, see
        ``kernels.write_gram``).
    workdir : str, optional
        Scratch directory for the out-of-core path.
    """
    config = config or ModelConfig()
    if config.M_max >= len(pairs):
        raise ValidationError(f"M_max={config.M_max} needs more than {len(pairs)} samples")
    S, method = similarity_matrix(pairs, config, workdir=workdir)
    if dump_gram:
        _dump_similarity(dump_gram, S)
    basis = diffusion_basis(S, M_max=config.M_max, theta=config.theta, overwrite=True, seed=config.seed)
    del S
    op = estimate_operator(basis, pairs, 1)
    info = {"method": method, "n_samples": len(pairs), "fixed_point_leak": op.fixed_point_leak()}
    return KernelEMachine(config=config, pairs=pairs, basis=basis, operator=op, info=info)


def _dump_similarity(path, S, block=1024):
    """Stream the (possibly compressed) similarity matrix in the Gram file format."""
    inverse = getattr(S, "inverse", None)
    M = getattr(S, "matrix", S)
    if inverse is None:
        write_gram(path, M)
        return
    n = len(inverse)
    with open(path, "wb") as fh:
        fh.write(np.uint64(n).astype("<u8").tobytes())
        for start in range(0, n, block):
            rows = M[inverse[start:start + block]][:, inverse]
            fh.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())


# -- persistence -------------------------------------------------------------

def _write_matrix(path, A):
    A = np.ascontiguousarray(A, dtype="<f8")
    if A.ndim == 1:
        A = A[:, None]
    with open(path, "wb") as fh:
        fh.write(np.array(A.shape, dtype="<u8").tobytes())
        fh.write(A.tobytes())


def _read_matrix(path):
    with open(path, "rb") as fh:
        rows, cols = np.frombuffer(fh.read(16), dtype="<u8").astype(int)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValidationError(f"{path}: truncated matrix file")
    return data.reshape(rows, cols).copy()


def config_hash(config):
    """SHA-256 of the canonical JSON form of a configuration dict."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def save_model(model, directory):
    """Write a model directory: JSON metadata, CSV tables, binary f64 matrices.

    Binary files hold two little-endian uint64 (rows, cols) followed by
    row-major little-endian f64 data. Reloading is bit-exact.
    """
    os.makedirs(directory, exist_ok=True)
    p = model.pairs
    config = asdict(model.config)
    meta = {
        "format_version": FORMAT_VERSION,
        "versions": {"kem": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "config": config,
        "config_hash": config_hash(config),
        "pairs": {"Lx": p.Lx, "Ly": p.Ly, "D": p.D, "dt": p.dt, "N": len(p)},
        "M": model.basis.M,
        "operator_dt": model.operator.dt,
        "operator_n_train": model.operator.n_train,
        "info": model.info,
    }
    with open(os.path.join(directory, "model.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    fmt = "%.17g"
    np.savetxt(
        os.path.join(directory, "eigenvalues.csv"),
        np.column_stack([np.arange(model.basis.M + 1), model.basis.eigenvalues]),
        fmt=["%d", fmt], delimiter=",", header="index,eigenvalue", comments="",
    )
    np.savetxt(
        os.path.join(directory, "spectrum.csv"),
        np.column_stack([np.arange(len(model.basis.spectrum)), model.basis.spectrum]),
        fmt=["%d", fmt], delimiter=",", header="index,eigenvalue", comments="",
    )
    np.savetxt(os.path.join(directory, "operator.csv"), model.operator.E, fmt=fmt, delimiter=",")
    _write_matrix(os.path.join(directory, "operator_raw.f64"), model.operator.raw)
    for name, arr in (("psi", model.basis.psi), ("phi", model.basis.phi),
                      ("X", p.X), ("Y", p.Y), ("t", p.t), ("series", p.series.astype(float))):
        _write_matrix(os.path.join(directory, f"{name}.f64"), arr)


def load_model(directory):
    """Inverse of ``save_model``."""
    try:
        with open(os.path.join(directory, "model.json")) as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read model directory {directory}: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format {meta.get('format_version')}")
    if "config_hash" in meta and meta["config_hash"] != config_hash(meta["config"]):
        raise ValidationError(f"{directory}: config does not match its recorded hash")
    config = ModelConfig(**meta["config"])
    pp = meta["pairs"]
    read = lambda name: _read_matrix(os.path.join(directory, f"{name}.f64"))
    pairs = SamplePairSet(
        X=read("X"), Y=read("Y"), t=read("t")[:, 0], Lx=pp["Lx"], Ly=pp["Ly"], D=pp["D"],
        dt=pp["dt"], series=read("series")[:, 0].astype(int),
    )
    eig = np.loadtxt(os.path.join(directory, "eigenvalues.csv"), delimiter=",", skiprows=1, ndmin=2)
    spec = np.loadtxt(os.path.join(directory, "spectrum.csv"), delimiter=",", skiprows=1, ndmin=2)
    basis = DiffusionBasis(eigenvalues=eig[:, 1], psi=read("psi"), phi=read("phi"), spectrum=spec[:, 1])
    E = np.loadtxt(os.path.join(directory, "operator.csv"), delimiter=",", ndmin=2)
    op = EvolutionOperator(E=E, dt=meta["operator_dt"], n_train=meta["operator_n_train"], raw=read("operator_raw"))
    return KernelEMachine(config=config, pairs=pairs, basis=basis, operator=op, info=meta.get("info", {}))


def is_model_dir(path):
    return os.path.isfile(os.path.join(path, "model.json"))

