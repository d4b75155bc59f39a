"""Command-line front end: vpb-spectra {coeffs,branches,gap,dispersion,decay,validate}.

Every command writes its data files and a manifest.json into <out>/<command>/.
Data files contain no timestamps, so identical configurations give
byte-identical data; wall-clock times live only in the manifest.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from .config import FAMILIES, RunConfig, load_config

log = logging.getLogger("vpb_spectra")

COMMANDS = ("coeffs", "branches", "gap", "dispersion", "decay", "validate")


class StageError(RuntimeError):
    pass


# -- output helpers ------------------------------------------------------------------

class Run:
    """Collects output files and stage timings for one command."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.dir = Path(cfg.out) / command
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        self.diagnostics: dict = {}

    def stage(self, name: str, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(f"stage {name!r} failed: {type(exc).__name__}: {exc}") from exc
        self.timings[name] = round(time.perf_counter() - t0, 3)
        return result

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.dir / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(x) for x in row])
        self.files.append(name)
        return path

    def write_json(self, name: str, data: dict) -> Path:
        path = self.dir / name
        payload = dict(data, manifest="manifest.json")
        path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        self.files.append(name)
        return path

    def finish(self, verdict: bool | None) -> Path:
        from . import __version__
        manifest = {
            "command": self.command,
            "config": self.cfg.as_dict(),
            "code_version": __version__,
            "assembly_diagnostics": self.diagnostics,
            "wall_clock_seconds": self.timings,
            "verdict": verdict,
            "files": {f: hashlib.sha256((self.dir / f).read_bytes()).hexdigest()
                      for f in self.files},
        }
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path


def _cell(x):
    if isinstance(x, float) or type(x).__name__.startswith("float"):
        return format(float(x), ".17g")
    return x


def _plain(obj):
    """Make numpy scalars, tuples and non-finite floats JSON friendly."""
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def _assembly(run: Run):
    from . import collision
    c = run.cfg
    asm = run.stage("assembly", collision.assemble_cached, c.degree, c.samples, c.seed, c.cache_dir)
    run.diagnostics = dict(asm.diagnostics, sample_count=asm.sample_count,
                           assembly_seed=asm.assembly_seed)
    gap = run.stage("coercivity_gap", collision.coercivity_gap, asm)
    return asm, gap


# -- commands --------------------------------------------------------------------------

def cmd_coeffs(cfg: RunConfig) -> bool:
    from . import spectral as sp
    run = Run(cfg, "coeffs")
    asm, gap = _assembly(run)
    co = run.stage("coefficients", sp.analytic_coefficients, asm, cfg.b, gap.mu)
    report = {
        "a1": co.a_plus1, "a0": co.a_0, "a2": co.a_2,
        "kappa1": co.kappa1, "kappa2": co.kappa2, "kappa3": co.kappa3,
        "kappa5": co.kappa5, "kappa6": co.kappa6, "mu": co.mu,
        "a0_dispersion": co.a0_dispersion, "nu0": gap.nu0, "nu1": gap.nu1, "b": cfg.b,
        "a2_minus_kappa1": co.a_2 - co.kappa1,
        "a0_minus_0.75kappa2": co.a_0 - 0.75 * co.kappa2,
    }
    positive = all(report[k] > 0 for k in ("a1", "a0", "a2", "kappa1", "kappa2", "kappa3", "mu"))
    report["verdict"] = positive
    run.write_json("coeffs.json", report)
    run.finish(positive)
    return positive


def cmd_branches(cfg: RunConfig) -> bool:
    import numpy as np
    from . import spectral as sp
    if cfg.family == "B":
        raise StageError("family B has no small-frequency branches (its spectrum has a gap)")
    run = Run(cfg, "branches")
    asm, gap = _assembly(run)
    grid = sp.default_branch_grid(cfg.r0, cfg.s_min, cfg.branch_points)
    b = cfg.b if cfg.family == "Bm_general" else 1.0
    rep = run.stage("tracking", sp.track_branches, cfg.family, grid, asm, cfg.a, b, mu=gap.mu)
    co = run.stage("coefficients", sp.analytic_coefficients, asm,
                   np.inf if cfg.family == "E" else b, gap.mu)
    _, slopes = sp.leading_vectors(asm.basis, cfg.family, cfg.a, b)
    rows, fits, ok = [], {}, True
    for j, br in rep.branches.items():
        for s, lam, ov in zip(br.s, br.values, br.overlaps):
            rows.append((s, lam.real, lam.imag, j, ov))
        fit = sp.fit_expansion(br, cfg.r0)
        slope_ok = abs(fit.c_imag - slopes[j]) <= max(0.02 * abs(slopes[j]), 1e-3)
        curv_ok = abs(fit.c_real - co.curvature(j)) <= 0.05 * co.curvature(j)
        ok &= slope_ok and curv_ok and fit.stable
        fits[str(j)] = {"c_imag": fit.c_imag, "c_real": fit.c_real, "residual": fit.residual,
                        "cubic_constant": fit.cubic_constant, "stable": fit.stable,
                        "half_window_c_imag": fit.half_c_imag,
                        "half_window_c_real": fit.half_c_real,
                        "analytic_c_imag": slopes[j], "analytic_c_real": co.curvature(j),
                        "slope_ok": slope_ok, "curvature_ok": curv_ok}
    rows.sort(key=lambda r: (r[3], r[0]))
    run.write_csv("branches.csv", ("s", "re", "im", "branch", "overlap"), rows)
    run.write_json("branches.json", {
        "family": cfg.family, "a": cfg.a, "b": b, "fits": fits,
        "seed_overlaps": rep.seed_overlaps,
        "window_counts_min": int(rep.window_counts.min()), "verdict": bool(ok)})
    run.finish(bool(ok))
    return bool(ok)


def cmd_gap(cfg: RunConfig) -> bool:
    import numpy as np
    from . import spectral as sp
    run = Run(cfg, "gap")
    asm, gap = _assembly(run)
    grid = np.geomspace(cfg.gap_s_min, cfg.gap_s_max, cfg.gap_points)
    table = run.stage("gap_scan", sp.gap_scan, cfg.family, grid, asm, cfg.a, cfg.b, gap.nu0)
    run.write_csv("gap.csv", ("s", "max_re"), table.tolist())
    s, re = table[:, 0], table[:, 1]
    report = {"family": cfg.family}
    if cfg.family == "B":
        a1 = float(-re.max())
        report["a1_estimate"] = a1
        ok = a1 > 0
    else:
        alpha = float(-re[s >= 0.5].max()) if np.any(s >= 0.5) else float("nan")
        report.update(max_re_at_smin=float(re[0]), curvature_at_smin=float(-re[0] / s[0] ** 2),
                      alpha_s_ge_0_5=alpha)
        ok = bool(re[0] < 0 and alpha > 0)
    report["verdict"] = bool(ok)
    run.write_json("gap.json", report)
    run.finish(bool(ok))
    return bool(ok)


def cmd_dispersion(cfg: RunConfig) -> bool:
    import numpy as np
    from . import spectral as sp
    run = Run(cfg, "dispersion")
    asm, gap = _assembly(run)
    co = run.stage("coefficients", sp.analytic_coefficients, asm, 1.0, gap.mu)
    scan = run.stage("root_scan", sp.root_scan, asm, cfg.r0, cfg.scan_re, cfg.scan_im,
                     cfg.scan_s, co)
    run.write_csv("dispersion.csv", ("s", "winding", "min_abs_grid", "min_abs_boundary"),
                  zip(scan.s_values, scan.winding.tolist(), scan.min_abs_grid,
                      scan.min_abs_boundary))
    checks = []
    for s in np.geomspace(cfg.gap_s_min, cfg.gap_s_max, 12):
        for lam, res in sp.dispersion_consistency(asm, s, gap.mu):
            checks.append((s, lam.real, lam.imag, res))
    run.write_csv("consistency.csv", ("s", "re", "im", "abs_lambda_minus_D"), checks)
    worst = max((c[3] for c in checks), default=float("nan"))
    ok = scan.root_free and bool(checks) and worst <= 1e-6
    run.write_json("dispersion.json", {
        "roots_in_region": 0 if scan.root_free else "present", "left_edge": -scan.a0 / 4,
        "a0_dispersion": scan.a0, "box": list(scan.box), "max_consistency_residual": worst,
        "verdict": bool(ok)})
    run.finish(bool(ok))
    return bool(ok)


def cmd_decay(cfg: RunConfig) -> bool:
    import numpy as np
    from . import acceptance, semigroup as sg, spectral as sp
    run = Run(cfg, "decay")
    asm, gap = _assembly(run)
    grid = sg.radial_grid(cfg.radial_grid, cfg.radial_points)
    init = sg.build_initial(asm.basis, grid, d0=cfg.d0, d1=cfg.d1, r_param=cfg.r_param)
    times = np.union1d(sg.default_times(cfg.t_max, (cfg.fit_lo, cfg.fit_hi), cfg.window_points),
                       acceptance.CHECK_TIMES)
    evo = run.stage("evolution", sg.evolve, asm, cfg.family, init, times, cfg.a, cfg.b)
    columns = [("macro_0", 0), ("macro_1", 0), ("macro_4", 0), ("macro_0", 1),
               ("micro_P1", 0), ("total", 0)]
    if cfg.family != "E":
        columns += [("field", 0), ("field_grad", 0)]
    series = {f"{q}_k{k}": sg.global_norms(evo, asm.basis, q, k) for q, k in columns}
    run.write_csv("decay.csv", ["t"] + list(series),
                  [[t] + [ser.values[i] for ser in series.values()] for i, t in enumerate(times)])
    fits = {}
    for name, ser in series.items():
        if name.startswith("macro_1"):
            continue    # zero momentum for radial data
        f = sg.fit_decay(ser, (cfg.fit_lo, cfg.fit_hi))
        fits[name] = f.__dict__
    report = {"family": cfg.family, "fits": fits, "initial_data": init.description}
    ok = None
    if cfg.family == "Bm":
        ok = all(lo <= fits[f"{q}_k{k}"]["exponent"] <= hi and
                 fits[f"{q}_k{k}"]["model"] == "algebraic"
                 for (q, k), (lo, hi) in acceptance.MVPB_RANGES.items())
    elif cfg.family == "B":
        table = run.stage("gap_scan", sp.gap_scan, "B",
                          np.geomspace(cfg.gap_s_min, cfg.gap_s_max, cfg.gap_points), asm,
                          nu0=gap.nu0)
        a1 = float(-table[:, 1].max())
        report["a1_estimate"] = a1
        ok = all(fits[f"{q}_k0"]["residual_exponential"] < fits[f"{q}_k0"]["residual_algebraic"]
                 and fits[f"{q}_k0"]["rate"] >= 0.5 * a1 for q in acceptance.BVPB_QUANTITIES)
    report["verdict"] = ok
    run.write_json("decay.json", report)
    run.finish(ok)
    return ok is not False


def cmd_validate(cfg: RunConfig) -> bool:
    from . import acceptance, collision
    run = Run(cfg, "validate")
    try:
        _assembly(run)
    except StageError as exc:
        print(f"[FAIL] assembly: {exc}")
        run.write_json("validate.json", {"checks": [], "assembly_error": str(exc),
                                         "verdict": False})
        run.finish(False)
        return False
    checks = run.stage("acceptance", acceptance.run_all, cfg)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    run.write_json("validate.json", {
        "checks": [{"criterion": c.number, "name": c.name, "passed": c.passed,
                    "measured": c.measured} for c in checks],
        "verdict": ok})
    run.finish(ok)
    return ok


DISPATCH = {"coeffs": cmd_coeffs, "branches": cmd_branches, "gap": cmd_gap,
            "dispersion": cmd_dispersion, "decay": cmd_decay, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vpb-spectra",
        description="Spectra and decay rates of linearized Vlasov-Poisson-Boltzmann operators")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="TOML file; flags override it")
    p.add_argument("--out", help="output directory (default: runs)")
    p.add_argument("--family", choices=FAMILIES, help="mode operator family (default: Bm)")
    p.add_argument("--a", type=float, help="field constant a for Bm_general")
    p.add_argument("--b", type=float, help="field constant b for Bm_general")
    p.add_argument("--seed", type=int, help="collision assembly seed")
    p.add_argument("--samples", type=int, help="collision sample budget (default: 1e7)")
    p.add_argument("--degree", type=int, help="total Hermite degree (default: 10)")
    p.add_argument("--threads", type=int, help="BLAS threads (default: 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, out=args.out, family=args.family, a=args.a, b=args.b,
                          seed=args.seed, samples=args.samples, degree=args.degree,
                          threads=args.threads)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    from threadpoolctl import threadpool_limits
    try:
        with threadpool_limits(limits=cfg.threads):
            ok = DISPATCH[args.command](cfg)
    except StageError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
