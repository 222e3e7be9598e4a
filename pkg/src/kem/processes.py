"""Benchmark process generators and past/future windowing.

Four sources are provided: the Even Process and mess3 (discrete symbols
emitted by edge-labelled hidden Markov models) and the Lorenz-63 and
Lorenz-96 flows driven by additive thermal noise and observed through
Gaussian measurement noise.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError, ValidationError

__all__ = [
    "Series",
    "SamplePairSet",
    "HmmSpec",
    "SdeSpec",
    "even_process",
    "mess3",
    "generate_hmm",
    "lorenz63_drift",
    "lorenz96_drift",
    "integrate_sde",
    "lorenz96_initial",
    "random_embed",
    "window_pairs",
    "concat_pairs",
]


@dataclass(frozen=True)
class Series:
    """Regularly sampled observations, one row per time step."""

    values: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValidationError("series needs at least one row of observations")
        if not np.all(np.isfinite(values)):
            raise ValidationError("series contains non-finite values")
        if not self.dt > 0:
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps)


@dataclass(frozen=True)
class SamplePairSet:
    """Aligned (past, future, time) triples.

    ``X[i]`` holds the observations at times ``t[i] - (Lx-1)dt ... t[i]``
    (oldest first) and ``Y[i]`` those at ``t[i] + dt ... t[i] + Ly dt``.
    ``series[i]`` identifies the source series so that consecutive samples
    from different runs are never treated as a time step.
    """

    X: np.ndarray
    Y: np.ndarray
    t: np.ndarray
    Lx: int
    Ly: int
    D: int
    dt: float
    series: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.series is None:
            object.__setattr__(self, "series", np.zeros(len(self.t), dtype=int))
        n = len(self.t)
        if n < 1:
            raise ValidationError("a sample pair set needs at least one pair")
        if self.X.shape != (n, self.Lx * self.D) or self.Y.shape != (n, self.Ly * self.D):
            raise ValidationError("window matrices do not match Lx, Ly and D")

    def __len__(self):
        return len(self.t)

    def successor_index(self, n=1):
        """Indices ``(i, j)`` such that sample ``j`` is ``n`` steps after ``i``.

        Only pairs within one source series and exactly ``n`` sample
        spacings apart are returned.
        """
        spacing = self.sample_spacing()
        i = np.arange(len(self) - n)
        j = i + n
        ok = self.series[i] == self.series[j]
        ok &= np.abs(self.t[j] - self.t[i] - n * spacing) <= 1e-9 * max(1.0, n * spacing)
        return i[ok], j[ok]

    def sample_spacing(self):
        """Time between consecutive samples of one series (stride times dt)."""
        if len(self) < 2:
            return self.dt
        same = self.series[1:] == self.series[:-1]
        if not np.any(same):
            return self.dt
        return float(np.median(np.diff(self.t)[same]))

    def next_symbols(self):
        """First observed component of each future window."""
        return self.Y[:, 0]


@dataclass(frozen=True)
class HmmSpec:
    """Edge-emitting hidden Markov model.

    ``transitions`` is a list of ``(from_state, to_state, symbol, probability)``.
    """

    states: tuple
    transitions: tuple
    initial: tuple

    def __post_init__(self):
        states = tuple(self.states)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "transitions", tuple(tuple(tr) for tr in self.transitions))
        initial = np.asarray(self.initial, dtype=float)
        if initial.shape != (len(states),):
            raise ValidationError("initial distribution must have one entry per state")
        if np.any(initial < 0) or np.any(initial > 1) or abs(initial.sum() - 1) > 1e-12:
            raise ValidationError("initial distribution must be a probability vector")
        totals = dict.fromkeys(states, 0.0)
        for src, dst, _, p in self.transitions:
            if src not in totals or dst not in totals:
                raise ValidationError(f"transition {src!r}->{dst!r} names an unknown state")
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"transition probability {p} outside [0, 1]")
            totals[src] += p
        for state, total in totals.items():
            if abs(total - 1.0) > 1e-12:
                raise ValidationError(
                    f"outgoing probabilities of state {state!r} sum to {total!r}, not 1"
                )


def even_process():
    """Two-state Even Process; 1s come in blocks of even length."""
    return HmmSpec(
        states=("s0", "s1"),
        transitions=(
            ("s0", "s0", 0, 0.5),
            ("s0", "s1", 1, 0.5),
            ("s1", "s0", 1, 1.0),
        ),
        initial=(2 / 3, 1 / 3),
    )


def mess3(a=0.6, x=0.15):
    """Three-state nonunifilar generator whose mixed states form a gasket.

    Each transition out of state ``i`` carries three symbol-labelled edges;
    the edge probabilities below are the joint (move, emit) probabilities.
    """
    b = (1 - a) / 2
    y = 1 - 2 * x
    transitions = []
    for i in range(3):
        prev, nxt = (i - 1) % 3, (i + 1) % 3
        # self loop
        transitions += [(i, i, i, a * y), (i, i, prev, b * x), (i, i, nxt, b * x)]
        # to i+1
        transitions += [(i, nxt, i, a * x), (i, nxt, prev, b * x), (i, nxt, nxt, b * y)]
        # to i-1
        transitions += [(i, prev, i, a * x), (i, prev, prev, b * y), (i, prev, nxt, b * x)]
    return HmmSpec(states=(0, 1, 2), transitions=transitions, initial=(1 / 3, 1 / 3, 1 / 3))


def generate_hmm(spec, n_steps, seed, return_states=False):
    """Sample ``n_steps`` symbols from an edge-emitting HMM.

    The initial state is drawn from ``spec.initial``; each step then picks an
    outgoing edge with its probability, emits the edge symbol and moves.

    Returns a :class:`Series` of symbols (as floats). With
    ``return_states=True`` also returns the state index occupied *before*
    each emission, plus the final state, as an int array of length
    ``n_steps + 1``.
    """
    if n_steps < 1:
        raise ValidationError("n_steps must be >= 1")
    index = {s: k for k, s in enumerate(spec.states)}
    n_states = len(spec.states)
    edges = [[] for _ in range(n_states)]
    for src, dst, sym, p in spec.transitions:
        edges[index[src]].append((index[dst], sym, p))
    dst_table = [np.array([e[0] for e in row], dtype=int) for row in edges]
    sym_table = [np.array([e[1] for e in row], dtype=float) for row in edges]
    cum_table = [np.cumsum([e[2] for e in row]) for row in edges]

    rng = np.random.default_rng(seed)
    state = int(rng.choice(n_states, p=np.asarray(spec.initial, dtype=float)))
    u = rng.random(n_steps)
    symbols = np.empty(n_steps)
    path = np.empty(n_steps + 1, dtype=int)
    for k in range(n_steps):
        path[k] = state
        cum = cum_table[state]
        e = min(int(np.searchsorted(cum, u[k] * cum[-1], side="right")), len(cum) - 1)
        symbols[k] = sym_table[state][e]
        state = dst_table[state][e]
    path[n_steps] = state
    series = Series(symbols, dt=1.0, t0=0.0)
    if return_states:
        return series, path
    return series


def lorenz63_drift(sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    def f(s):
        u, v, w = s
        return np.array([-sigma * (u - v), rho * u - v - u * w, -beta * w + u * v])

    f.dim = 3
    return f


def lorenz96_drift(D=5, F=8.0):
    """Lorenz-96 vector field with cyclic indices."""

    def f(s):
        return (np.roll(s, -1) - np.roll(s, 2)) * np.roll(s, 1) - s + F

    f.dim = D
    return f


_FLOWS = {"lorenz63": lorenz63_drift, "lorenz96": lorenz96_drift}


@dataclass(frozen=True)
class SdeSpec:
    """Additive-noise SDE around one of the named flows.

    ``params`` holds ``sigma, rho, beta`` for Lorenz-63 and ``D, F`` for
    Lorenz-96. ``eta`` scales the Wiener increments, ``nu`` is the standard
    deviation of the measurement noise added to retained samples.
    """

    drift: str
    params: dict = field(default_factory=dict)
    eta: float = 0.0
    nu: float = 0.0
    dt: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.drift not in _FLOWS:
            raise ValidationError(f"unknown flow {self.drift!r}; expected one of {sorted(_FLOWS)}")
        if not self.dt > 0:
            raise ValidationError("dt must be > 0")
        if self.eta < 0 or self.nu < 0:
            raise ValidationError("noise amplitudes must be >= 0")

    def vector_field(self):
        return _FLOWS[self.drift](**self.params)


def integrate_sde(spec, n_steps, initial, transient=1000):
    """Euler-Maruyama integration of ``spec``.

    ``transient`` steps are integrated and discarded; the state reached is
    the first of the ``n_steps`` retained rows. Measurement noise of standard
    deviation ``spec.nu`` is then added to the retained rows only. With
    ``eta == 0`` no random numbers are drawn during integration.
    """
    f = spec.vector_field()
    x = np.array(initial, dtype=float)
    if x.shape != (f.dim,):
        raise ValidationError(f"initial state must have dimension {f.dim}, got {x.shape}")
    if transient < 0 or n_steps < 1:
        raise ValidationError("need transient >= 0 and n_steps >= 1")
    rng = np.random.default_rng(spec.seed)
    dt = spec.dt
    amp = spec.eta * np.sqrt(dt)
    total = transient + n_steps - 1
    out = np.empty((n_steps, f.dim))
    if transient == 0:
        out[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, total + 1):
            x = x + f(x) * dt
            if amp > 0:
                x = x + amp * rng.standard_normal(f.dim)
            if not np.all(np.isfinite(x)):
                raise IntegrationError(k)
            if k >= transient:
                out[k - transient] = x
    if spec.nu > 0:
        out = out + spec.nu * rng.standard_normal(out.shape)
    return Series(out, dt=dt, t0=transient * dt)


def lorenz96_initial(D, F, seed):
    """Start near the equilibrium ``u_i = F`` with a uniform(-0.5, 0.5) kick."""
    rng = np.random.default_rng(seed)
    return F + rng.uniform(-0.5, 0.5, size=D)


def random_embed(series, target_dim, noise_var, seed, R=None):
    """Project ``series`` into ``target_dim`` dimensions and add noise.

    ``R`` has i.i.d. normal entries of standard deviation ``1/D``; the
    output is ``U R + noise`` with per-entry noise variance ``noise_var``.
    Returns ``(embedded_series, R)``. Passing ``R`` skips its random draw.
    """
    U = series.values
    D = U.shape[1]
    if target_dim < D:
        raise ValidationError("target dimension must be at least the source dimension")
    rng = np.random.default_rng(seed)
    if R is None:
        R = rng.normal(0.0, 1.0 / D, size=(D, target_dim))
    R = np.asarray(R, dtype=float)
    if R.shape != (D, target_dim):
        raise ValidationError(f"embedding matrix must be {D}x{target_dim}")
    W = U @ R
    if noise_var > 0:
        W += rng.normal(0.0, np.sqrt(noise_var), size=W.shape)
    return Series(W, dt=series.dt, t0=series.t0), R


def window_pairs(series, Lx, Ly, stride=1, series_id=0):
    """Cut a series into past/future windows.

    The present index of pair ``k`` is ``Lx - 1 + k * stride``; there are
    ``floor((T - Lx - Ly) / stride) + 1`` pairs.
    """
    if Lx < 1 or Ly < 1 or stride < 1:
        raise ValidationError("Lx, Ly and stride must be positive")
    V = series.values
    T, D = V.shape
    if T < Lx + Ly:
        raise ValidationError(f"series of length {T} is too short for Lx={Lx}, Ly={Ly}")
    n = (T - Lx - Ly) // stride + 1
    present = Lx - 1 + stride * np.arange(n)
    windows = np.lib.stride_tricks.sliding_window_view(V, Lx + Ly, axis=0)
    # windows[k] has shape (D, Lx+Ly) and starts at row k
    block = windows[present - (Lx - 1)].transpose(0, 2, 1)
    X = np.ascontiguousarray(block[:, :Lx, :]).reshape(n, Lx * D)
    Y = np.ascontiguousarray(block[:, Lx:, :]).reshape(n, Ly * D)
    t = series.t0 + series.dt * present
    return SamplePairSet(
        X=X, Y=Y, t=t, Lx=Lx, Ly=Ly, D=D, dt=series.dt,
        series=np.full(n, series_id, dtype=int),
    )


def concat_pairs(pair_sets):
    """Stack pair sets from independent runs, keeping their series ids distinct."""
    pair_sets = list(pair_sets)
    if not pair_sets:
        raise ValidationError("nothing to concatenate")
    first = pair_sets[0]
    for p in pair_sets[1:]:
        if (p.Lx, p.Ly, p.D) != (first.Lx, first.Ly, first.D) or p.dt != first.dt:
            raise ValidationError("pair sets differ in window layout or time step")
    ids, offset = [], 0
    for p in pair_sets:
        _, inv = np.unique(p.series, return_inverse=True)
        ids.append(inv + offset)
        offset += inv.max() + 1
    return SamplePairSet(
        X=np.concatenate([p.X for p in pair_sets]),
        Y=np.concatenate([p.Y for p in pair_sets]),
        t=np.concatenate([p.t for p in pair_sets]),
        Lx=first.Lx, Ly=first.Ly, D=first.D, dt=first.dt,
        series=np.concatenate(ids),
    )
