"""Named experiments: each maps a resolved config to result rows and a report.

Every experiment draws its randomness from counter lanes fixed by the
config, and parallel work is split along those lanes, so outputs do not
depend on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import besov, gibbs, ou, wick
from .rng import CounterRNG
from .shifted import BlowUpError, OuPath, SimConfig, integrate, solve_full, stability_profile
from .spectral import SpectralField, coeffs_to_grid, eigenvalues, grid_size, half_plane_mask, single_mode, wavenumbers

SIM_KEYS = ("cutoff", "side_length", "grid", "dt", "horizon", "wick_mode", "dealias",
            "scheme", "coupling")


@dataclass
class Outcome:
    columns: list[str]
    rows: list[tuple]
    assertions: list[dict]
    details: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)   # file name -> (columns, rows)
    blowup: dict | None = None

    @property
    def status(self) -> str:
        if self.blowup is not None:
            return "blow-up"
        return "pass" if all(a["passed"] for a in self.assertions) else "fail"


def check(name: str, measured, tolerance, passed: bool, **more) -> dict:
    return {"name": name, "measured": measured, "tolerance": tolerance, "passed": bool(passed), **more}


def sim_config(cfg: dict, seed: int, **kw) -> SimConfig:
    fields = {k: cfg[k] for k in SIM_KEYS if k in cfg}
    fields.update(kw)
    return SimConfig(seed=seed, **fields)


def parallel_map(fn: Callable, tasks: list, workers: int) -> list:
    """Ordered map; results never depend on ``workers``."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def chunks(n: int, parts: int) -> list[tuple[int, int]]:
    """Fixed split of range(n); the split is a function of n only."""
    size = max(1, math.ceil(n / parts))
    return [(a, min(n, a + size)) for a in range(0, n, size)]


# fixed task granularity so that the work list is independent of --workers
TASK_BLOCKS = 8


def initial_field(cfg: dict, seed: int) -> SpectralField:
    n, side, amp = cfg["cutoff"], cfg["side_length"], cfg["init_amplitude"]
    kind = cfg["init"]
    if kind == "zero":
        return SpectralField.zeros(n, side)
    if kind == "modes":
        return single_mode(n, (1, 0), amp, side) + single_mode(n, (0, 1), 0.6 * amp, side)
    if kind == "gibbs":
        sc = sim_config(cfg, seed)
        model = gibbs.GibbsModel.from_config(sc)
        return gibbs.run_chain(model, seed, 1, cfg.get("n_burn", 20_000),
                               lane=gibbs.LANE_START).state.phi
    raise ValueError(f"unknown init {kind!r}")


# ---------------------------------------------------------------- ou-covariance


def _ou_chunk(cutoff, t, seed, lo, hi, n_steps, side, max_mode):
    z = ou.ou_ensemble(cutoff, t, hi - lo, seed, lo, n_steps, side)
    idx = _rep_window(cutoff, max_mode)
    flat = z.reshape(z.shape[0], -1)[:, idx]
    return flat.real ** 2 + flat.imag ** 2


def _noise_chunk(cutoff, dt, seed, lo, hi, side, max_mode):
    return ou.divergence_noise_power(cutoff, dt, hi - lo, seed, 0, lo, side, max_mode)


def _rep_modes(cutoff, max_mode):
    mask = half_plane_mask(cutoff)
    k1, k2 = wavenumbers(cutoff)
    k1, k2 = k1[mask], k2[mask]
    keep = np.maximum(np.abs(k1), np.abs(k2)) <= max_mode
    return k1, k2, keep


def _rep_window_half(cutoff, max_mode):
    return np.nonzero(_rep_modes(cutoff, max_mode)[2])[0]


def _rep_window(cutoff, max_mode):
    lay = ou.mode_layout(cutoff)
    return lay.rep_index[_rep_window_half(cutoff, max_mode)]


def run_ou_covariance(cfg: dict, seed: int, workers: int) -> Outcome:
    n, t, side, mm = cfg["cutoff"], cfg["t"], cfg["side_length"], cfg["max_mode"]
    samples = cfg["samples"]
    tasks = [(n, t, seed, lo, hi, cfg["n_steps"], side, mm) for lo, hi in chunks(samples, TASK_BLOCKS)]
    power = np.concatenate(parallel_map(_ou_chunk, tasks, workers))
    k1, k2, keep = _rep_modes(n, mm)
    k1, k2 = k1[keep], k2[keep]
    lam = eigenvalues(n, side)[k1 + n, k2 + n]
    exact = -np.expm1(-t * lam * lam) / lam
    mean = power.mean(axis=0)
    se = power.std(axis=0, ddof=1) / np.sqrt(samples)
    z = (mean - exact) / se

    inc = cfg["noise_increments"]
    dt = cfg["noise_dt"]
    ntasks = [(n, dt, seed, lo, hi, side, mm) for lo, hi in chunks(inc, TASK_BLOCKS)]
    npow = np.concatenate(parallel_map(_noise_chunk, ntasks, workers))
    nmean = npow.mean(axis=0)
    nse = npow.std(axis=0, ddof=1) / np.sqrt(inc)
    nz = (nmean - lam) / nse

    tol = cfg["tol_se"]
    rows = [(int(a), int(b), float(l), float(e), float(m), float(s), float(zz), float(nm), float(ns), float(zn))
            for a, b, l, e, m, s, zz, nm, ns, zn in zip(k1, k2, lam, exact, mean, se, z, nmean, nse, nz)]
    names = [f"abs2_{a}_{b}" for a, b in zip(k1, k2)]
    return Outcome(
        ["k1", "k2", "lambda", "ou_exact", "ou_mean", "ou_se", "ou_z", "noise_mean", "noise_se", "noise_z"],
        rows,
        [check("ou_variance_max_abs_z", float(np.abs(z).max()), tol, np.abs(z).max() <= tol),
         check("noise_bbstar_max_abs_z", float(np.abs(nz).max()), tol, np.abs(nz).max() <= tol)],
        {"samples": samples, "noise_increments": inc, "modes": len(rows)},
        {"samples.csv": (["sample"] + names, [(i, *map(float, r)) for i, r in enumerate(power)])},
    )


# ---------------------------------------------------------------- wick-verify


def run_wick_verify(cfg: dict, seed: int, workers: int) -> Outcome:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x57]))
    pairs = cfg["pairs"]
    s = rng.normal(scale=cfg["scale"], size=pairs)
    t = rng.normal(scale=cfg["scale"], size=pairs)
    rows = []
    worst_scaled = 0.0
    for deg in range(cfg["max_degree"] + 1):
        res = np.abs(wick.binomial_shift(deg, s, t) - wick.hermite(deg, s + t))
        scaled = res / (1.0 + np.abs(s) + np.abs(t)) ** deg
        worst_scaled = max(worst_scaled, float(scaled.max()))
        rows += [("binomial", deg, i, float(a), float(b), float(r), float(sr))
                 for i, (a, b, r, sr) in enumerate(zip(s, t, res, scaled))]
    n, side = cfg["cutoff"], cfg["side_length"]
    m = grid_size(n)
    worst_recomb = 0.0
    for i in range(cfg["fields"]):
        y = besov.rough_field(n, 0.5, seed, lane=2 * i, side_length=side)
        zf = ou.stationary_sample(n, CounterRNG(seed, 2 * i + 1), side, step=0)
        c = float(rng.uniform(0.0, 1.0))
        bundle = wick.make_wick_bundle(zf, c, m)
        phi = (y + zf).coeffs
        pg = coeffs_to_grid(phi, m, side)
        for deg in (2, 3):
            direct = wick.wick_power(pg, deg, c)
            err = float(np.abs(direct - wick.recombine_grid(y, bundle, deg)).max())
            worst_recomb = max(worst_recomb, err)
            rows.append(("recombine", deg, i, c, float(np.abs(pg).max()), err, err))
    tol = cfg["tol"]
    return Outcome(
        ["check", "degree", "sample", "s_or_c", "t_or_sup", "residual", "scaled_residual"],
        rows,
        [check("binomial_scaled_residual", worst_scaled, tol, worst_scaled <= tol),
         check("recombination_residual", worst_recomb, tol, worst_recomb <= tol)],
    )


# ---------------------------------------------------------------- energy-identity


def _energy_run(cfg_dict, seed, level):
    dt = cfg_dict["dt"] / 2 ** level
    sub = 2 ** (cfg_dict["halvings"] - level)
    sc = sim_config(cfg_dict, seed, dt=dt)
    y0 = initial_field(cfg_dict, seed)
    tr = integrate(sc, y0, OuPath(cfg_dict["noise"], seed, 0, sub))
    led = tr.ledger
    return dt, led.summed_residual(), led.as_rows() if level == 0 else None


def run_energy_identity(cfg: dict, seed: int, workers: int) -> Outcome:
    h = cfg["halvings"]
    try:
        res = parallel_map(_energy_run, [(cfg, seed, lv) for lv in range(h + 1)], workers)
    except BlowUpError as err:
        return Outcome([], [], [], blowup=err.report())
    lo, hi = cfg["ratio_lo"], cfg["ratio_hi"]
    rows, asserts = [], []
    for i, (dt, r, _) in enumerate(res):
        ratio = res[i - 1][1] / r if i else float("nan")
        rows.append((dt, r, ratio))
        if i:
            asserts.append(check(f"ratio_{i}", ratio, [lo, hi], lo <= ratio <= hi))
    ledger_rows = res[0][2]
    return Outcome(["dt", "summed_residual", "ratio"], rows, asserts,
                   extra={"ledger.csv": (["t", "h_minus1_sq", "h1_sq", "l4_quad", "pairing"], ledger_rows)})


# ---------------------------------------------------------------- simulate


def run_simulate(cfg: dict, seed: int, workers: int) -> Outcome:
    sc = sim_config(cfg, seed)
    x0 = initial_field(cfg, seed)
    path = OuPath(cfg["noise"], seed, 0, 1)
    try:
        tr = solve_full(sc, x0, record_every=cfg["record_every"], z_path=path, ledger=True)
    except BlowUpError as err:
        return Outcome([], [], [check("no_blowup", err.step, None, False)], blowup=err.report())
    lam = eigenvalues(sc.cutoff, sc.side_length)
    inv = np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)
    n = sc.cutoff
    led = tr.ledger
    every = cfg["record_every"]
    rows = []
    max_mean = 0.0
    for i, t in enumerate(tr.times):
        y, z = tr.y[i], tr.z[i]
        x = y + z
        mean = abs(y[n, n])
        max_mean = max(max_mean, mean)
        j = i * every
        rows.append((float(t), float(np.sum(inv * np.abs(x) ** 2)), float(np.sum(inv * np.abs(y) ** 2)),
                     float(np.sum(inv * np.abs(z) ** 2)), float(mean), float(led.h1_sq[j]),
                     float(led.l4_quad[j]), float(led.pairing[j])))
    exact_start = bool(np.array_equal(tr.x[0], x0.coeffs))
    return Outcome(
        ["t", "x_h_minus1_sq", "y_h_minus1_sq", "z_h_minus1_sq", "abs_mean_y", "h1_sq", "l4_quad", "pairing"],
        rows,
        [check("mean_conserved", max_mean, 0.0, max_mean == 0.0),
         check("x0_reproduced", exact_start, True, exact_start)],
        {"summed_residual": led.summed_residual()},
    )


# ---------------------------------------------------------------- stability


def _stability_run(cfg_dict, seed, delta):
    sc = sim_config(cfg_dict, seed)
    y0 = initial_field(cfg_dict, seed)
    times, ratio = stability_profile(sc, y0, delta, z_path=OuPath(cfg_dict["noise"], seed, 0, 1))
    return float(ratio.max()), float(ratio[-1])


def run_stability(cfg: dict, seed: int, workers: int) -> Outcome:
    deltas = [float(d) for d in cfg["deltas"]]
    try:
        res = parallel_map(_stability_run, [(cfg, seed, d) for d in deltas], workers)
    except BlowUpError as err:
        return Outcome([], [], [], blowup=err.report())
    sup = np.array([r[0] for r in res])
    spread = float(sup.max() / sup.min() - 1.0)
    end = np.array([r[1] for r in res])
    end_spread = float(end.max() / end.min() - 1.0) if end.min() > 0 else float("inf")
    tol = cfg["tol"]
    return Outcome(
        ["delta", "gronwall_factor", "final_ratio"],
        [(d, s, e) for d, (s, e) in zip(deltas, res)],
        [check("factor_spread", spread, tol, np.all(np.isfinite(sup)) and spread <= tol)],
        # the end-of-run ratio sits near round-off for the smallest delta; reported only
        {"final_ratio_spread": end_spread},
    )


# ---------------------------------------------------------------- gibbs-invariance


def _gibbs_chain(cfg_dict, seed, coupling):
    sc = sim_config(cfg_dict, seed, coupling=coupling)
    return gibbs.chain_part(sc, cfg_dict["n_chain"], cfg_dict["n_burn"])


def _gibbs_dyn(cfg_dict, seed, coupling):
    sc = sim_config(cfg_dict, seed, coupling=coupling)
    return gibbs.dynamics_part(sc, sc.n_steps, cfg_dict["n_burn"], cfg_dict["record_every"])


def _gibbs_job(kind, cfg_dict, seed, coupling):
    return (_gibbs_chain if kind == "chain" else _gibbs_dyn)(cfg_dict, seed, coupling)


def run_gibbs_invariance(cfg: dict, seed: int, workers: int) -> Outcome:
    couplings = [("full", float(cfg["coupling"]))]
    if cfg["free_control"]:
        couplings.append(("free", 0.0))
    tasks = [(kind, cfg, seed, g) for _, g in couplings for kind in ("chain", "dynamics")]
    parts = parallel_map(_gibbs_job, tasks, workers)
    rows, asserts, details, batches = [], [], {}, []
    names = gibbs.panel_names(cfg["cutoff"])
    for v, (label, g) in enumerate(couplings):
        chain, dyn = parts[2 * v], parts[2 * v + 1]
        sc = sim_config(cfg, seed, coupling=g)
        rep = gibbs.combine(sc, chain, dyn, cfg["tol_z"], cfg["tol_closed"])
        if rep["status"] == "blow-up":
            return Outcome([], [], [], blowup=rep["blowup"])
        for name, o in rep["observables"].items():
            rows.append((label, name, o["chain_mean"], o["chain_se"], o["dyn_mean"], o["dyn_se"],
                         o["z_score"], o.get("exact", float("nan")), o["chain_ess"], o["dyn_ess"]))
        zmax = max(abs(o["z_score"]) for o in rep["observables"].values())
        asserts.append(check(f"{label}_max_abs_z", zmax, cfg["tol_z"], zmax <= cfg["tol_z"]))
        if g == 0:
            ce = max(max(abs(o["chain_z_exact"]), abs(o["dyn_z_exact"])) for o in rep["observables"].values())
            asserts.append(check("free_closed_form_max_abs_z", ce, cfg["tol_closed"], ce <= cfg["tol_closed"]))
        bound_ok = rep["potential_min"] >= rep["potential_bound"] - 1e-12
        asserts.append(check(f"{label}_potential_bound", rep["potential_min"], rep["potential_bound"], bound_ok))
        asserts.append(check(f"{label}_cache_coherence", rep["coherence_defect"], 1e-10,
                             rep["coherence_defect"] <= 1e-10))
        details[label] = {k: rep[k] for k in ("acceptance", "beta", "c", "coupling", "flags", "observables")}
        for src, part in (("chain", chain), ("dynamics", dyn)):
            x = part["panel"]
            nb = 50
            usable = x.shape[0] - x.shape[0] % nb
            bm = x[:usable].reshape(nb, -1, x.shape[1]).mean(axis=1)
            batches += [(label, src, b, *map(float, r)) for b, r in enumerate(bm)]
    return Outcome(
        ["variant", "observable", "chain_mean", "chain_se", "dyn_mean", "dyn_se", "z_score", "exact",
         "chain_ess", "dyn_ess"],
        rows, asserts, details,
        {"batch_means.csv": (["variant", "source", "batch"] + names, batches)},
    )


# ---------------------------------------------------------------- schauder


def _schauder_field(cfg_dict, seed, lane):
    u = besov.rough_field(cfg_dict["cutoff"], cfg_dict["alpha"], seed, lane, cfg_dict["side_length"])
    fit = besov.schauder_fit(u, cfg_dict["alpha"], cfg_dict["delta"], None, _p(cfg_dict["p"]),
                             _p(cfg_dict["q"]), cfg_dict["n_times"])
    return fit.slope, fit.times, fit.norms


def _p(v):
    return math.inf if v in ("inf", math.inf) else float(v)


def run_schauder(cfg: dict, seed: int, workers: int) -> Outcome:
    res = parallel_map(_schauder_field, [(cfg, seed, i) for i in range(cfg["fields"])], workers)
    lo, hi = cfg["slope_lo"], cfg["slope_hi"]
    rows = [(i, float(t), float(nv), slope) for i, (slope, ts, ns) in enumerate(res) for t, nv in zip(ts, ns)]
    asserts = [check(f"slope_field_{i}", r[0], [lo, hi], lo <= r[0] <= hi) for i, r in enumerate(res)]
    window = besov.resolved_window(cfg["cutoff"], cfg["side_length"])
    return Outcome(["field", "t", "norm", "slope"], rows, asserts,
                   {"window": list(window), "expected_slope": -cfg["delta"] / 4})


# ---------------------------------------------------------------- besov-interp


def run_besov_interp(cfg: dict, seed: int, workers: int) -> Outcome:
    rows = []
    worst = math.inf
    recon = 0.0
    for i in range(cfg["fields"]):
        u = besov.rough_field(cfg["cutoff"], cfg["alpha"], seed, i, cfg["side_length"])
        total = sum(besov.lp_blocks(u), SpectralField.zeros(u.cutoff, u.side_length))
        recon = max(recon, float(np.abs(total.coeffs - u.coeffs).max()))
        for s1, s2 in cfg["pairs"]:
            for th in cfg["thetas"]:
                sl = besov.interpolation_slack(u, s1, s2, th)
                worst = min(worst, sl)
                rows.append((i, float(s1), float(s2), float(th), sl))
    tol = cfg["tol"]
    return Outcome(["field", "s1", "s2", "theta", "slack"], rows,
                   [check("min_slack", worst, -tol, worst >= -tol),
                    check("partition_residual", recon, 1e-12, recon <= 1e-12)])


# ---------------------------------------------------------------- registry


SIM_DEFAULTS = {"side_length": 2.0, "grid": None, "wick_mode": "covariance_Q", "dealias": "oversample",
                "scheme": "exponential_euler", "coupling": 1.0}


@dataclass(frozen=True)
class Experiment:
    name: str
    run: Callable[[dict, int, int], Outcome]
    defaults: dict
    columns: tuple[str, ...]
    summary: str


EXPERIMENTS: dict[str, Experiment] = {}


def _register(name, run, defaults, columns, summary):
    EXPERIMENTS[name] = Experiment(name, run, defaults, tuple(columns), summary)


_register("ou-covariance", run_ou_covariance,
          {"cutoff": 16, "side_length": 2.0, "t": 0.1, "samples": 10_000, "n_steps": 1, "max_mode": 4,
           "noise_increments": 100_000, "noise_dt": 1.0, "tol_se": 5.0},
          ["k1", "k2", "lambda", "ou_exact", "ou_mean", "ou_se", "ou_z", "noise_mean", "noise_se", "noise_z"],
          "per-mode OU variance and divergence-noise intensity against closed forms")
_register("wick-verify", run_wick_verify,
          {"cutoff": 8, "side_length": 2.0, "pairs": 1000, "max_degree": 8, "scale": 2.0, "fields": 20,
           "tol": 1e-10},
          ["check", "degree", "sample", "s_or_c", "t_or_sup", "residual", "scaled_residual"],
          "Hermite binomial identity and Wick recombination residuals")
_register("energy-identity", run_energy_identity,
          {**SIM_DEFAULTS, "cutoff": 8, "dt": 1e-4, "horizon": 0.5, "halvings": 3, "init": "modes",
           "init_amplitude": 0.5, "noise": "ou", "ratio_lo": 1.5, "ratio_hi": 2.5},
          ["dt", "summed_residual", "ratio"],
          "decay of the summed energy-identity residual under dt halving")
_register("simulate", run_simulate,
          {**SIM_DEFAULTS, "cutoff": 8, "dt": 1e-4, "horizon": 0.1, "init": "modes", "init_amplitude": 0.5,
           "noise": "ou", "record_every": 10, "n_burn": 20_000},
          ["t", "x_h_minus1_sq", "y_h_minus1_sq", "z_h_minus1_sq", "abs_mean_y", "h1_sq", "l4_quad",
           "pairing"],
          "one trajectory X = Y + Z with energy terms")
_register("stability", run_stability,
          {**SIM_DEFAULTS, "cutoff": 8, "dt": 1e-4, "horizon": 0.5, "init": "modes", "init_amplitude": 0.5,
           "noise": "ou", "deltas": [1e-6, 1e-7, 1e-8], "tol": 0.2},
          ["delta", "gronwall_factor", "final_ratio"],
          "linear response of the flow to perturbed initial data")
_register("gibbs-invariance", run_gibbs_invariance,
          {**SIM_DEFAULTS, "cutoff": 4, "dt": 1e-4, "horizon": 200.0, "n_chain": 200_000, "n_burn": 20_000,
           "record_every": 100, "free_control": True, "tol_z": 3.0, "tol_closed": 5.0},
          ["variant", "observable", "chain_mean", "chain_se", "dyn_mean", "dyn_se", "z_score", "exact",
           "chain_ess", "dyn_ess"],
          "pCN chain under the Gibbs measure against dynamics time averages")
_register("schauder", run_schauder,
          {"cutoff": 128, "side_length": 2.0, "alpha": 0.5, "delta": 1.0, "fields": 3, "n_times": 25,
           "p": "inf", "q": "inf", "slope_lo": -0.35, "slope_hi": -0.10},
          ["field", "t", "norm", "slope"],
          "log-log slope of heat smoothing in Besov norms")
_register("besov-interp", run_besov_interp,
          {"cutoff": 16, "side_length": 2.0, "alpha": 0.0, "fields": 100, "thetas": [0.25, 0.5, 0.75],
           "pairs": [[-1, 1], [0, 2]], "tol": 1e-12},
          ["field", "s1", "s2", "theta", "slack"],
          "Besov interpolation inequality slack on random fields")


def run_named(name: str, cfg: dict[str, Any], seed: int, workers: int = 1) -> Outcome:
    return EXPERIMENTS[name].run(cfg, seed, workers)
