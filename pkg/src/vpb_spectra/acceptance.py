"""The ten acceptance checks, shared by ``vpb-spectra validate`` and the test suite."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from math import sqrt

import numpy as np

from . import collision, semigroup as sg, spectral as sp
from .basis import chi, invariants, norm
from .config import RunConfig
from .modes import assemble_mode

log = logging.getLogger(__name__)

ACOUSTIC_MVPB = 2 * sqrt(2 / 3)
ACOUSTIC_BOLTZMANN = sqrt(5 / 3)
GENERAL_B = (0.5, 1.0, 2.0)
CHECK_TIMES = (20.0, 40.0, 80.0)


@dataclass
class Check:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{tag}] criterion {self.number}: {self.name} ({vals})"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    return str(v)


def closed_form_leading_vectors(basis) -> dict:
    """Closed-form leading eigenvectors at omega = e1, W^2 = e2 and W^3 = e3."""
    c0, c1, c2, c3, c4 = (chi(basis, j) for j in range(5))
    r2, r3 = sqrt(2), sqrt(3)
    return {
        0: r2 / 4 * c0 - r3 / 2 * c4,
        1: r3 / 4 * c0 - r2 / 2 * c1 + r2 / 4 * c4,
        -1: r3 / 4 * c0 + r2 / 2 * c1 + r2 / 4 * c4,
        2: c2,
        3: c3,
    }


class Context:
    """Shared, lazily computed ingredients for one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg

    @cached_property
    def asm(self) -> collision.CollisionAssembly:
        c = self.cfg
        return collision.assemble_cached(c.degree, c.samples, c.seed, c.cache_dir)

    @cached_property
    def asm_coarse(self) -> collision.CollisionAssembly:
        return self.asm.truncate(self.cfg.degree - 2)

    @cached_property
    def gap(self) -> collision.GapReport:
        return collision.coercivity_gap(self.asm)

    @cached_property
    def coeffs(self) -> sp.ExpansionCoefficients:
        return sp.analytic_coefficients(self.asm, mu=self.gap.mu)

    @cached_property
    def s_grid(self) -> np.ndarray:
        return sp.default_branch_grid(self.cfg.r0, self.cfg.s_min, self.cfg.branch_points)

    @cached_property
    def gap_grid(self) -> np.ndarray:
        c = self.cfg
        return np.geomspace(c.gap_s_min, c.gap_s_max, c.gap_points)

    def tracked(self, kind: str, b: float = 1.0, coarse: bool = False):
        key = (kind, b, coarse)
        cache = self.__dict__.setdefault("_tracked_cache", {})
        if key not in cache:
            asm = self.asm_coarse if coarse else self.asm
            rep = sp.track_branches(kind, self.s_grid, asm, b=b, mu=self.gap.mu)
            for br in rep.branches.values():
                br.fit = sp.fit_expansion(br, self.cfg.r0)
            cache[key] = rep
        return cache[key]

    def gap_table(self, kind: str) -> np.ndarray:
        cache = self.__dict__.setdefault("_gap_cache", {})
        if kind not in cache:
            cache[kind] = sp.gap_scan(kind, self.gap_grid, self.asm, nu0=self.gap.nu0)
        return cache[kind]

    @cached_property
    def a1(self) -> float:
        """Measured bipolar gap: -sup_s max Re sigma(B(s)) over the gap grid."""
        return float(-self.gap_table("B")[:, 1].max())

    def evolution(self, kind: str) -> sg.RadialEvolution:
        cache = self.__dict__.setdefault("_evo_cache", {})
        if kind not in cache:
            c = self.cfg
            grid = sg.radial_grid(c.radial_grid, c.radial_points)
            init = sg.build_initial(self.asm.basis, grid, d0=c.d0, d1=c.d1, r_param=c.r_param)
            times = np.union1d(sg.default_times(c.t_max, (c.fit_lo, c.fit_hi), c.window_points),
                               CHECK_TIMES)
            cache[kind] = sg.evolve(self.asm, kind, init, times)
        return cache[kind]


# -- criteria ----------------------------------------------------------------------

def criterion_1(ctx: Context) -> Check:
    asm = ctx.asm
    basis = asm.basis
    gram = float(np.abs(basis.gram - np.eye(basis.dim)).max())
    d = collision.null_space_diagnostics(asm.L, asm.L1, basis)
    null = max(d["null_residual_L"] + [d["null_residual_L1"]])
    sym = max(float(np.abs(A - A.T).max()) for A in (asm.K, asm.K1, asm.nu_diag))
    top = max(d["max_eig_L"], d["max_eig_L1"])
    mu = ctx.gap.mu
    rng = np.random.default_rng(0)
    P1 = np.eye(basis.dim) - invariants(basis) @ invariants(basis).T
    worst = -np.inf
    for _ in range(100):
        f = rng.standard_normal(basis.dim)
        p = P1 @ f
        worst = max(worst, float(f @ asm.L @ f) / float(p @ p))
    da = asm.diagnostics
    stderr = max(da["max_standard_error_L"] / da["op_norm_L"],
                 da["max_standard_error_L1"] / da["op_norm_L1"])
    ok = gram <= 1e-10 and null <= 1e-4 and sym <= 1e-12 and top <= 1e-8 and mu > 0 \
        and worst <= -mu + 1e-8 and stderr <= collision.STDERR_TOL
    return Check(1, "structure", ok, {"gram_err": gram, "null_residual": null,
                                      "rel_stderr": stderr,
                                      "asymmetry": sym, "max_eig": top, "mu": mu,
                                      "max_rayleigh": worst})


def _slopes(ctx: Context, coarse: bool = False) -> dict:
    out = {"Bm": ctx.tracked("Bm", coarse=coarse).branches[1].fit.c_imag,
           "E": ctx.tracked("E", coarse=coarse).branches[1].fit.c_imag}
    for b in GENERAL_B:
        out[f"b={b}"] = ctx.tracked("Bm_general", b, coarse).branches[1].fit.c_imag
    return out


def criterion_2(ctx: Context) -> Check:
    slopes = _slopes(ctx)
    targets = {"Bm": ACOUSTIC_MVPB, "E": ACOUSTIC_BOLTZMANN}
    targets.update({f"b={b}": sqrt(1 / b + 5 / 3) for b in GENERAL_B})
    errs = {k: abs(slopes[k] - targets[k]) / targets[k] for k in targets}
    measured = {f"slope[{k}]": slopes[k] for k in slopes}
    measured["max_rel_err"] = max(errs.values())
    return Check(2, "sound speeds", max(errs.values()) <= 0.02, measured)


def _curvatures(ctx: Context, coarse: bool = False) -> dict:
    rep = ctx.tracked("Bm", coarse=coarse)
    return {j: rep.branches[j].fit.c_real for j in (-1, 0, 1, 2)}


def criterion_3(ctx: Context) -> Check:
    co = ctx.coeffs
    fitted = _curvatures(ctx)
    errs = {j: abs(fitted[j] - co.curvature(j)) / co.curvature(j) for j in fitted}
    ident1 = abs(co.a_2 - co.kappa1)
    ident2 = abs(co.a_0 - 0.75 * co.kappa2)
    measured = {f"fit_a[{j}]": fitted[j] for j in fitted}
    measured.update(a_pm1=co.a_plus1, a_0=co.a_0, a_2=co.a_2,
                    max_rel_err=max(errs.values()), a2_minus_kappa1=ident1,
                    a0_minus_075kappa2=ident2)
    ok = max(errs.values()) <= 0.05 and ident1 <= 1e-10 and ident2 <= 1e-10
    return Check(3, "curvature coefficients", ok, measured)


def criterion_4(ctx: Context) -> Check:
    rep = ctx.tracked("Bm")
    worst = 0.0
    for k, s in enumerate(rep.branches[0].s):
        if s > ctx.cfg.r0 + 1e-12:
            continue
        w = rep.weights[k]
        Psi = np.stack([rep.branches[j].vectors[:, k] for j in sp.LABELS], axis=1)
        G = Psi.T @ (w[:, None] * Psi)
        worst = max(worst, float(np.abs(G - np.eye(5)).max()))
    lead = closed_form_leading_vectors(ctx.asm.basis)
    w0 = rep.weights[0]
    overlaps = {j: sp.weighted_overlap(rep.branches[j].vectors[:, 0], lead[j], w0)
                for j in sp.LABELS}
    # the closed-form vectors are unit in (f, g) + (P_d f, P_d g)
    unit = {j: float(np.sqrt(np.sum(np.abs(v) ** 2) + abs(v[0]) ** 2)) for j, v in lead.items()}
    ok = worst <= 1e-6 and min(overlaps.values()) >= 0.999
    measured = {"biorth_err": worst, "min_overlap": min(overlaps.values()),
                "s_first": float(rep.branches[0].s[0]),
                "max_unit_dev": max(abs(u - 1) for u in unit.values())}
    return Check(4, "eigenfunctions", ok, measured)


def criterion_5(ctx: Context) -> Check:
    B = ctx.gap_table("B")
    a1 = ctx.a1
    Bm = ctx.gap_table("Bm")
    s, re = Bm[:, 0], Bm[:, 1]
    small = s <= 0.05
    ratio = -re[small] / s[small] ** 2
    at_first = float(re[0])
    alpha = float(-re[s >= 0.5].max())
    quad = bool(np.all(re[small] < 0) and ratio.max() / ratio.min() <= 1.2)
    ok = a1 > 0 and bool(np.all(B[:, 1] <= -a1 + 1e-12)) and quad and \
        -1e-4 <= at_first < 0 and alpha > 0
    return Check(5, "spectral gap contrast", ok, {
        "a1": a1, "Bm_maxre_at_smin": at_first, "Bm_curvature_min": float(ratio.min()),
        "Bm_curvature_max": float(ratio.max()), "alpha_s>=0.5": alpha})


def criterion_6(ctx: Context) -> Check:
    c = ctx.cfg
    scan = sp.root_scan(ctx.asm, c.r0, c.scan_re, c.scan_im, c.scan_s, ctx.coeffs)
    worst, count = 0.0, 0
    for s in np.geomspace(c.gap_s_min, c.gap_s_max, 12):
        for _, r in sp.dispersion_consistency(ctx.asm, s, ctx.gap.mu):
            worst = max(worst, r)
            count += 1
    ok = scan.root_free and count > 0 and worst <= 1e-6
    return Check(6, "dispersion relation", ok, {
        "max_winding": int(np.abs(scan.winding).max()), "min_abs_F": float(scan.min_abs_grid.min()),
        "left_edge": -scan.a0 / 4, "eigs_checked": count, "max_residual": worst})


def criterion_7(ctx: Context) -> Check:
    asm = ctx.asm
    dim = asm.basis.dim
    rng = np.random.default_rng(7)
    worst_growth = -np.inf
    for kind in ("B", "Bm"):
        for _ in range(100):
            s = float(np.exp(rng.uniform(np.log(1e-2), np.log(10))))
            t = float(np.exp(rng.uniform(np.log(0.1), np.log(10))))
            f = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            mode = assemble_mode(kind, s, asm)
            g = sg.propagate_mode(mode, f, [t]).states[-1]
            worst_growth = max(worst_growth, norm(g, mode.product) / norm(f, mode.product) - 1)
    comp, ode = 0.0, 0.0
    for kind in ("B", "Bm"):
        for s in (0.05, 0.5, 2.0):
            mode = assemble_mode(kind, s, asm)
            f = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            t1, t2 = 0.7, 1.9
            direct = sg.propagate_mode(mode, f, [t1 + t2]).states[-1]
            half = sg.propagate_mode(mode, f, [t1]).states[-1]
            twice = sg.propagate_mode(mode, half, [t2]).states[-1]
            comp = max(comp, float(np.linalg.norm(direct - twice) / np.linalg.norm(direct)))
            eig = sg.propagate_mode(mode, f, [1.0]).states[-1]
            ref = sg.ode_reference(mode, f, 1.0)
            ode = max(ode, float(np.linalg.norm(eig - ref) / np.linalg.norm(ref)))
    ok = worst_growth <= 1e-8 and comp <= 1e-8 and ode <= 1e-6
    return Check(7, "semigroup properties", ok, {
        "max_norm_growth": worst_growth, "composition_err": comp, "ode_err": ode})


MVPB_RANGES = {("macro_0", 0): (-0.90, -0.60), ("macro_0", 1): (-1.40, -1.10),
               ("micro_P1", 0): (-1.40, -1.10), ("field", 0): (-0.90, -0.60)}
BVPB_QUANTITIES = ("macro_0", "micro_P1", "field", "total")


def decay_fits(ctx: Context) -> dict:
    c = ctx.cfg
    window = (c.fit_lo, c.fit_hi)
    basis = ctx.asm.basis
    out = {}
    evo = ctx.evolution("Bm")
    for (q, k) in MVPB_RANGES:
        out[("Bm", q, k)] = sg.fit_decay(sg.global_norms(evo, basis, q, k), window)
    evo = ctx.evolution("B")
    for q in BVPB_QUANTITIES:
        out[("B", q, 0)] = sg.fit_decay(sg.global_norms(evo, basis, q, 0), window)
    return out


def criterion_8(ctx: Context) -> Check:
    fits = decay_fits(ctx)
    measured, ok = {}, True
    for (q, k), (lo, hi) in MVPB_RANGES.items():
        f = fits[("Bm", q, k)]
        good = f.model == "algebraic" and lo <= f.exponent <= hi
        ok &= good
        measured[f"Bm {q} k={k}"] = round(f.exponent, 4)
    half_a1 = 0.5 * ctx.a1
    for q in BVPB_QUANTITIES:
        f = fits[("B", q, 0)]
        good = f.residual_exponential < f.residual_algebraic and f.rate >= half_a1
        ok &= good
        measured[f"B {q} rate"] = round(f.rate, 4)
    measured["half_a1"] = half_a1
    return Check(8, "decay rates", bool(ok), measured)


def criterion_9(ctx: Context) -> Check:
    evo = ctx.evolution("Bm")
    ser = sg.global_norms(evo, ctx.asm.basis, "macro_0", 0)
    idx = [int(np.argmin(np.abs(ser.times - t))) for t in CHECK_TIMES]
    scaled = ser.values[idx] * ser.times[idx] ** 0.75
    ratio = float(scaled.max() / scaled.min())
    return Check(9, "two-sided algebraic bound", ratio <= 3, {
        "c": float(scaled.min()), "C": float(scaled.max()), "C_over_c": ratio})


def criterion_10(ctx: Context) -> Check:
    fine = {**_slopes(ctx), **{f"a[{j}]": v for j, v in _curvatures(ctx).items()}}
    coarse = {**_slopes(ctx, True), **{f"a[{j}]": v for j, v in _curvatures(ctx, True).items()}}
    drift = {k: abs(coarse[k] - fine[k]) / abs(fine[k]) for k in fine}
    key = max(drift, key=drift.get)
    return Check(10, "refinement stability", max(drift.values()) <= 0.03, {
        "degrees": f"{ctx.cfg.degree - 2}/{ctx.cfg.degree}", "max_drift": drift[key],
        "worst": key})


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def run_all(cfg: RunConfig, only=None) -> list[Check]:
    ctx = Context(cfg)
    out = []
    for fn in CRITERIA:
        number = int(fn.__name__.split("_")[1])
        if only and number not in only:
            continue
        try:
            out.append(fn(ctx))
        except Exception as exc:  # a crashed criterion is a failed criterion
            log.exception("criterion %d crashed", number)
            out.append(Check(number, fn.__name__, False, {"error": f"{type(exc).__name__}: {exc}"}))
    return out
