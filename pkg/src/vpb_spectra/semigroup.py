"""Mode propagation, radial reconstruction of global norms and decay fits.

Initial data are radial in xi with zero momentum, so every mode can be
computed at xi = s e1 and global L^2 norms reduce to

    int_{R^3} |g(xi)|^2 dxi = int_0^inf 4 pi s^2 |g(s)|^2 ds.

Fourier transforms are unitary: f^(xi) = (2 pi)^{-3/2} int f(x) e^{-i x.xi} dx.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import sqrt

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.special import roots_legendre
from scipy.stats import linregress

from .basis import BasisSet, chi, projector
from .collision import CollisionAssembly
from .modes import ModeOperator, assemble_mode

log = logging.getLogger(__name__)

COND_LIMIT = 1e8
QUANTITIES = ("macro_0", "macro_1", "macro_2", "macro_3", "macro_4",
              "micro_P1", "field", "field_grad", "total")


class PropagationError(RuntimeError):
    pass


# -- single-mode propagation ----------------------------------------------------

@dataclass(frozen=True)
class ModeTrajectory:
    s: float
    times: np.ndarray
    states: np.ndarray = field(repr=False)   # (n_times, dim)
    method: str = "eig"
    condition: float = 1.0


def _block_propagate(A: np.ndarray, f0: np.ndarray, times: np.ndarray, cond_limit: float):
    vals, V = sla.eig(A)
    cond = float(np.linalg.cond(V))
    if np.isfinite(cond) and cond <= cond_limit:
        c = np.linalg.solve(V, f0)
        out = (np.exp(np.outer(times, vals)) * c) @ V.T
        if np.all(np.isfinite(out)):
            return out, "eig", cond
    # scaling-and-squaring fallback
    out = np.array([sla.expm(A * t) @ f0 for t in times])
    if not np.all(np.isfinite(out)):
        raise PropagationError(f"both propagators failed (eigenvector condition {cond:.2e})")
    return out, "expm", cond


def propagate_mode(mode: ModeOperator, f0: np.ndarray, times,
                   cond_limit: float = COND_LIMIT) -> ModeTrajectory:
    """States exp(t A) f0 by one eigendecomposition per parity block.

    Falls back to the matrix exponential at every time when the eigenvector
    matrix has condition number above ``cond_limit``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and increasing")
    f0 = np.asarray(f0, dtype=complex)
    dim = mode.matrix.shape[0]
    states = np.zeros((len(times), dim), dtype=complex)
    if mode.sectors is None:
        blocks = [np.arange(dim)]
    else:
        blocks = [np.flatnonzero(mode.sectors == k) for k in np.unique(mode.sectors)]
    methods, conds = set(), [1.0]
    for idx in blocks:
        if not np.any(f0[idx]):
            continue
        out, method, cond = _block_propagate(mode.matrix[np.ix_(idx, idx)], f0[idx],
                                             times, cond_limit)
        states[:, idx] = out
        methods.add(method)
        conds.append(cond)
    states[times == 0] = f0
    return ModeTrajectory(s=mode.s, times=times, states=states,
                          method="expm" if "expm" in methods else "eig",
                          condition=max(conds))


def ode_reference(mode: ModeOperator, f0: np.ndarray, t: float,
                  rtol: float = 1e-11, atol: float = 1e-13) -> np.ndarray:
    """exp(t A) f0 by adaptive Runge-Kutta (Dormand-Prince 4(5)); an independent check."""
    A = mode.matrix
    sol = solve_ivp(lambda _, y: A @ y, (0.0, t), np.asarray(f0, dtype=complex),
                    method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise PropagationError(f"ODE integration failed: {sol.message}")
    return sol.y[:, -1]


# -- radial grid and initial data -------------------------------------------------

@dataclass(frozen=True)
class RadialGrid:
    nodes: np.ndarray
    weights: np.ndarray     # quadrature weights for int_0^smax g(s) ds
    description: str = ""

    @property
    def volume_weights(self) -> np.ndarray:
        """Weights for int_{R^3} g(|xi|) dxi = int 4 pi s^2 g(s) ds."""
        return 4 * np.pi * self.nodes**2 * self.weights


def radial_grid(kind: str = "panels", points: int = 64, s_max: float = 8.0,
                s_min: float = 1e-3, order: int = 6) -> RadialGrid:
    """Radial frequency quadrature.

    ``panels``: composite Gauss-Legendre with panels of width 0.02 on [0, 1] and
    0.25 on [1, s_max]; resolves e^{i c s t} oscillations up to t ~ 100.
    ``geometric``: ``points`` nodes geometrically spaced from s_min with
    trapezoid weights.
    """
    if kind == "geometric":
        s = np.geomspace(s_min, s_max, points)
        w = np.zeros_like(s)
        d = np.diff(s)
        w[:-1] += d / 2
        w[1:] += d / 2
        return RadialGrid(s, w, f"geometric {points} points on [{s_min}, {s_max}]")
    if kind != "panels":
        raise ValueError(f"unknown radial grid kind {kind!r}")
    coarse = int(round((s_max - 1) / 0.25)) + 1
    edges = np.concatenate([np.linspace(0, 1, 51), np.linspace(1, s_max, coarse)[1:]])
    x, w = roots_legendre(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * (x + 1) + lo).ravel()
    weights = (0.5 * (hi - lo) * w).ravel()
    return RadialGrid(nodes, weights, f"Gauss-Legendre panels ({order} points) on [0, {s_max}]")


@dataclass(frozen=True)
class InitialData:
    grid: RadialGrid
    profile: np.ndarray = field(repr=False)     # (n_s, dim)
    description: dict = field(default_factory=dict)


def gaussian_transform(s) -> np.ndarray:
    """Unitary 3D Fourier transform of e^{-|x|^2/2}: e^{-|xi|^2/2}."""
    return np.exp(-0.5 * np.asarray(s, dtype=float) ** 2)


def build_initial(basis: BasisSet, grid: RadialGrid, kind: str = "gaussian", d0: float = 1.0,
                  d1: float = 1.0, r_param: float = 0.3, profile=None,
                  check: bool = True) -> InitialData:
    """Transform of d0 e^{r^2/2} e^{-|x|^2/2} (chi_0 + d1 chi_4), or a custom profile.

    For the standard example the low-frequency hypotheses of the decay
    estimates are checked on the grid nodes with s <= r_param: |(f, chi_0)| >= d0,
    zero momentum, and |(f, chi_4)| >= c sup |(f, chi_0)| with c reported.
    """
    if kind == "gaussian":
        if d0 <= 0 or d1 <= 0:
            raise ValueError("d0 and d1 must be positive")
        amp = d0 * np.exp(0.5 * r_param**2) * gaussian_transform(grid.nodes)
        velocity = chi(basis, 0) + d1 * chi(basis, 4)
        values = amp[:, None] * velocity[None, :]
    elif kind == "custom":
        values = np.asarray(profile(grid.nodes), dtype=complex)
    else:
        raise ValueError(f"unknown initial data kind {kind!r}")
    desc = {"kind": kind, "d0": d0, "d1": d1, "r_param": r_param, "grid": grid.description}
    low = grid.nodes <= r_param
    if low.any():
        n = np.abs(values[low] @ chi(basis, 0).conj())
        q = np.abs(values[low] @ chi(basis, 4).conj())
        m = max(float(np.abs(values[low] @ chi(basis, j).conj()).max()) for j in (1, 2, 3))
        hyp = {
            "density_inf": float(n.min()),
            "density_ok": bool(n.min() >= d0 * (1 - 1e-12)),
            "momentum_sup": m,
            "momentum_ok": m == 0.0,
            "energy_ratio": float(q.min() / n.max()) if n.max() > 0 else float("nan"),
            "energy_ok": bool(q.min() > 0),
        }
        desc["hypotheses"] = hyp
        if check and kind == "gaussian":
            failed = [k[:-3] for k in ("density_ok", "momentum_ok", "energy_ok") if not hyp[k]]
            if failed:
                raise ValueError(f"initial data violate the low-frequency hypotheses: {failed}")
    return InitialData(grid=grid, profile=values, description=desc)


def physical_norm_sq(d0: float = 1.0, d1: float = 1.0, r_param: float = 0.3) -> float:
    """||f||^2_{L^2_{x,v}} of the standard example in closed form."""
    return d0**2 * np.exp(r_param**2) * (1 + d1**2) * np.pi**1.5


# -- evolution and global norms -----------------------------------------------------

@dataclass(frozen=True)
class RadialEvolution:
    kind: str
    grid: RadialGrid
    times: np.ndarray
    states: np.ndarray = field(repr=False)      # (n_s, n_t, dim)
    methods: tuple = ()
    a: float = 1.0
    b: float = 1.0


def evolve(asm: CollisionAssembly, kind: str, initial: InitialData, times,
           a: float = 1.0, b: float = 1.0) -> RadialEvolution:
    times = np.asarray(times, dtype=float)
    states = np.empty((len(initial.grid.nodes), len(times), asm.basis.dim), dtype=complex)
    methods = []
    for i, s in enumerate(initial.grid.nodes):
        traj = propagate_mode(assemble_mode(kind, s, asm, a, b), initial.profile[i], times)
        states[i] = traj.states
        methods.append(traj.method)
    return RadialEvolution(kind, initial.grid, times, states, tuple(methods), a, b)


@dataclass
class DecaySeries:
    quantity: str
    k: int
    times: np.ndarray
    values: np.ndarray
    fit: "DecayFit | None" = None


def mode_density_sq(evo: RadialEvolution, basis: BasisSet, quantity: str) -> np.ndarray:
    """Per-mode squared magnitude of ``quantity``, shape (n_s, n_t)."""
    S = evo.states
    s = evo.grid.nodes[:, None]
    if quantity.startswith("macro_"):
        j = int(quantity[-1])
        return np.abs(S @ chi(basis, j).conj()) ** 2
    if quantity == "micro_P1":
        P1 = projector(basis, "P1")
        return np.sum(np.abs(S @ P1.T) ** 2, axis=-1)
    if quantity == "total":
        return np.sum(np.abs(S) ** 2, axis=-1)
    n2 = np.abs(S[..., 0]) ** 2
    if quantity == "field":
        if evo.kind == "B":
            return n2 / s**2          # |grad Phi^|^2 with Phi^ = -n^/|xi|^2
        # H^1 norm of the potential, (1 + s^2)|Phi^|^2 with Phi^ = -n^/(1 + s^2)
        return n2 / b_plus_as2(evo, s)
    if quantity == "field_grad":
        if evo.kind == "B":
            return n2 / s**2
        return s**2 * n2 / b_plus_as2(evo, s) ** 2
    raise ValueError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")


def b_plus_as2(evo: RadialEvolution, s):
    if evo.kind == "Bm_general":
        return evo.b + evo.a * s**2
    return 1 + s**2


def global_norms(evo: RadialEvolution, basis: BasisSet, quantity: str, k: int = 0) -> DecaySeries:
    """sqrt( int 4 pi s^2 s^{2k} |quantity(s, t)|^2 ds ) for every time."""
    dens = mode_density_sq(evo, basis, quantity)
    w = evo.grid.volume_weights * evo.grid.nodes ** (2 * k)
    return DecaySeries(quantity, k, evo.times, np.sqrt(w @ dens))


# -- fits -------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    model: str                  # "algebraic", "exponential" or "undetermined"
    exponent: float             # p in value ~ C (1+t)^p
    exponent_stderr: float
    rate: float                 # r in value ~ C e^{-r t}
    rate_stderr: float
    residual_algebraic: float
    residual_exponential: float
    window: tuple
    points: int


def fit_decay(series: DecaySeries, window=(10.0, 100.0), min_r2: float = 0.99) -> DecayFit:
    """Fit log-log and semilog lines on the window and keep the better one.

    Residuals are RMS deviations of log(value).  A fit is poor when it explains
    less than ``min_r2`` of the variance of log(value); if both are poor the
    model is reported as undetermined.
    """
    lo, hi = window
    if (1 + lo) / lo > 1.1 + 1e-12:
        raise ValueError(f"window start {lo} too small: (1+t) ~ t needs t >= 10")
    sel = (series.times >= lo) & (series.times <= hi)
    if sel.sum() < 3:
        raise ValueError(f"fewer than 3 samples in window {window}")
    t, v = series.times[sel], series.values[sel]
    if np.any(v <= 0):
        raise ValueError("decay values must be positive to fit")
    y = np.log(v)
    alg = linregress(np.log1p(t), y)
    exp = linregress(t, y)
    r_alg = float(np.sqrt(np.mean((y - alg.intercept - alg.slope * np.log1p(t)) ** 2)))
    r_exp = float(np.sqrt(np.mean((y - exp.intercept - exp.slope * t) ** 2)))
    if max(alg.rvalue ** 2, exp.rvalue ** 2) < min_r2:
        model = "undetermined"
    else:
        model = "algebraic" if r_alg < r_exp else "exponential"
    fit = DecayFit(model, float(alg.slope), float(alg.stderr), float(-exp.slope),
                   float(exp.stderr), r_alg, r_exp, (float(lo), float(hi)), int(sel.sum()))
    series.fit = fit
    return fit


def default_times(t_max: float = 100.0, window=(10.0, 100.0), n_window: int = 46) -> np.ndarray:
    early = np.concatenate([[0.0], np.geomspace(0.1, window[0], 20, endpoint=False)])
    return np.unique(np.concatenate([early, np.geomspace(window[0], t_max, n_window)]))


def oscillation_frequency(times: np.ndarray, values: np.ndarray) -> float:
    """Angular frequency pi / (mean spacing of sign changes), crossings linearly interpolated."""
    v = np.real(values)
    idx = np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)
    if len(idx) < 2:
        raise ValueError("fewer than two zero crossings")
    t0, t1, v0, v1 = times[idx], times[idx + 1], v[idx], v[idx + 1]
    crossings = t0 - v0 * (t1 - t0) / (v1 - v0)
    return float(np.pi / np.mean(np.diff(crossings)))


# -- leading-order low-frequency semigroup ---------------------------------------

def s1_macro(t: float, s: float, f0hat: np.ndarray, eigenvalues: dict, basis: BasisSet,
             r0: float = 0.3):
    """Leading-order density, omega-momentum and energy of S_1(t, xi) f0 at xi = s e1.

    ``eigenvalues`` maps branch labels -1, 0, 1 to lambda_j(s).  The O(s)
    remainder operators are dropped.
    """
    if s > r0:
        raise ValueError(f"s = {s} exceeds the low-frequency radius r0 = {r0}")
    n = complex(np.vdot(chi(basis, 0), f0hat))
    m = complex(np.vdot(chi(basis, 1), f0hat))
    q = complex(np.vdot(chi(basis, 4), f0hat))
    r2, r3 = sqrt(2), sqrt(3)
    e = {j: np.exp(eigenvalues[j] * t) for j in (-1, 0, 1)}
    wave = {j: r3 / 2 * n - j * r2 / 2 * m + r2 / 4 * q for j in (-1, 1)}
    heat = r2 / 2 * n - r3 / 2 * q
    density = r3 / 4 * sum(e[j] * wave[j] for j in (-1, 1)) + r2 / 4 * e[0] * heat
    momentum = -r2 / 2 * sum(j * e[j] * wave[j] for j in (-1, 1))
    energy = r2 / 4 * sum(e[j] * wave[j] for j in (-1, 1)) - r3 / 2 * e[0] * heat
    return density, momentum, energy
