"""Truncated Gibbs measure nu_N ~ exp(-g/4 int :phi^4:) mu_N and its pCN sampler.

The same configuration object supplies the constant c to the potential and
to the dynamics, so the chain and the Langevin flow target one measure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernel
from .ou import mode_layout, stationary_sample
from .rng import STREAM_PCN_ACCEPT, STREAM_PCN_PROPOSAL, CounterRNG, counter_normal, counter_uniform
from .shifted import BlowUpError, OuPath, SimConfig, solve_full
from .spectral import DEFAULT_SIDE, SpectralField, coeffs_to_grid, eigenvalues, grid_size

_PROPOSAL = np.uint64(STREAM_PCN_PROPOSAL)
_ACCEPT = np.uint64(STREAM_PCN_ACCEPT)
_ACCEPT_KEY = np.zeros(1, dtype=np.uint64)

PANEL_RADIUS = 2
TARGET_ACCEPTANCE = 0.3
MIN_ESS = 100.0


# ---------------------------------------------------------------- potential


@kernel
def _wick4_integral(coeffs, c, m, side):
    g = coeffs_to_grid(coeffs, m, side)
    g2 = g * g
    return (side / m) ** 2 * np.sum(g2 * g2 - 6.0 * c * g2 + 3.0 * c * c)


def potential_of(phi: SpectralField, c: float, coupling: float = 1.0, m: int | None = None) -> float:
    """coupling * 1/4 int (phi^4 - 6 c phi^2 + 3 c^2) dx, exact quadrature.

    The default grid has at least 4N + 1 points per side, so the quartic is
    integrated without aliasing.
    """
    if not phi.is_zero_mean():
        raise ValueError("potential is defined on zero-mean fields")
    if m is None:
        m = grid_size(phi.cutoff)
    if m < 4 * phi.cutoff + 1:
        raise ValueError("grid too coarse for an exact quartic integral")
    return 0.25 * coupling * float(_wick4_integral(phi.coeffs, c, m, phi.side_length))


def potential_lower_bound(c: float, side_length: float = DEFAULT_SIDE, coupling: float = 1.0) -> float:
    """x^4 - 6 c x^2 + 3 c^2 >= -6 c^2 pointwise, so N >= -3/2 g c^2 L^2."""
    return -1.5 * coupling * c * c * side_length ** 2


@dataclass(frozen=True)
class GibbsModel:
    cutoff: int
    side_length: float = DEFAULT_SIDE
    c: float = 0.0
    coupling: float = 1.0
    m: int | None = None

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "GibbsModel":
        return cls(cfg.cutoff, cfg.side_length, cfg.c, cfg.coupling, grid_size(cfg.cutoff))

    @property
    def grid(self) -> int:
        return self.m if self.m is not None else grid_size(self.cutoff)

    def potential(self, phi: SpectralField) -> float:
        return potential_of(phi, self.c, self.coupling, self.grid)

    def log_prior(self, phi: SpectralField) -> float:
        """log mu_N density up to a constant: -sum_{reps} lambda |phi_k|^2."""
        lay = mode_layout(self.cutoff, self.side_length)
        v = phi.coeffs.ravel()[lay.rep_index]
        return float(-np.sum(lay.lam_rep * np.abs(v) ** 2))


@dataclass
class GibbsChainState:
    phi: SpectralField
    potential: float
    beta: float = 0.5
    accepted: int = 0
    proposed: int = 0
    lane: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


def initial_state(model: GibbsModel, beta: float = 0.5, phi: SpectralField | None = None,
                  lane: int = 0) -> GibbsChainState:
    if phi is None:
        phi = SpectralField.zeros(model.cutoff, model.side_length)
    return GibbsChainState(phi, model.potential(phi), beta, 0, 0, lane)


# ---------------------------------------------------------------- chain kernel


@kernel
def _pcn_kernel(phi0, q4_0, beta0, first_step, n_steps, n_burn, adapt_every, target,
                sd_rep, rep_index, mirror_index, keys, seed, lane, m, side, c, coupling,
                inv_lam, panel_index, check_every):
    n = phi0.shape[0]
    n_rep = rep_index.shape[0]
    phi = phi0.ravel().copy()
    q4 = q4_0
    beta = beta0
    n_panel = 3 + panel_index.shape[0]
    panel = np.zeros((max(n_steps - n_burn, 0), n_panel))
    accepted = 0
    window = 0
    q4_min = q4
    coherence = 0.0
    area = side * side
    for i in range(n_steps):
        step = np.uint64(first_step + i)
        g = counter_normal(seed, _PROPOSAL, lane, step, keys)
        xi = np.zeros(n * n, dtype=np.complex128)
        half = sd_rep * (g[0:2 * n_rep:2] + 1j * g[1:2 * n_rep:2])
        xi[rep_index] = half
        xi[mirror_index] = np.conj(half)
        prop = np.sqrt(1.0 - beta * beta) * phi + beta * xi
        q4p = _wick4_integral(prop.reshape(n, n), c, m, side)
        if q4p < q4_min:
            q4_min = q4p
        log_ratio = 0.25 * coupling * (q4 - q4p)
        u = counter_uniform(seed, _ACCEPT, lane, step, _ACCEPT_KEY)[0]
        if np.log(u) <= log_ratio:
            phi = prop
            q4 = q4p
            accepted += 1
            window += 1
        if i < n_burn:
            if (i + 1) % adapt_every == 0:
                rate = window / adapt_every
                beta = min(1.0, max(1e-3, beta * np.exp(2.0 * (rate - target))))
                window = 0
        else:
            r = i - n_burn
            a2 = phi.real ** 2 + phi.imag ** 2
            panel[r, 0] = np.sum(inv_lam * a2)
            panel[r, 1] = np.sum(a2) - c * area
            panel[r, 2] = q4
            for p in range(panel_index.shape[0]):
                panel[r, 3 + p] = a2[panel_index[p]]
        if check_every > 0 and (i + 1) % check_every == 0:
            d = abs(_wick4_integral(phi.reshape(n, n), c, m, side) - q4)
            if d > coherence:
                coherence = d
    return phi.reshape(n, n), q4, beta, accepted, panel, q4_min, coherence


def panel_modes(cutoff: int, radius: int = PANEL_RADIUS) -> list[tuple[int, int]]:
    """Half-plane representatives 0 < |k|_inf <= radius."""
    r = min(radius, cutoff)
    return [(k1, k2) for k1 in range(-r, r + 1) for k2 in range(-r, r + 1)
            if (k1 > 0 or (k1 == 0 and k2 > 0))]


def panel_names(cutoff: int, radius: int = PANEL_RADIUS) -> list[str]:
    return ["h_minus1_sq", "wick2_integral", "wick4_integral"] + [
        f"mode_sq_{k1}_{k2}" for k1, k2 in panel_modes(cutoff, radius)]


def _panel_index(cutoff: int, radius: int = PANEL_RADIUS) -> np.ndarray:
    n = 2 * cutoff + 1
    return np.array([(k1 + cutoff) * n + (k2 + cutoff) for k1, k2 in panel_modes(cutoff, radius)],
                    dtype=np.int64)


def _inv_lam(cutoff: int, side: float) -> np.ndarray:
    lam = eigenvalues(cutoff, side).ravel()
    return np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)


def _run(model: GibbsModel, state: GibbsChainState, seed: int, n_steps: int, n_burn: int = 0,
         adapt_every: int = 100, check_every: int = 0):
    lay = mode_layout(model.cutoff, model.side_length)
    if not 0 < state.beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    q4_0 = _wick4_integral(state.phi.coeffs, model.c, model.grid, model.side_length)
    return _pcn_kernel(
        np.array(state.phi.coeffs), q4_0, float(state.beta), state.proposed, int(n_steps),
        int(n_burn), int(adapt_every), TARGET_ACCEPTANCE, np.sqrt(0.5 / lay.lam_rep),
        lay.rep_index, lay.mirror_index, lay.keys, np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF),
        np.uint64(state.lane), model.grid, float(model.side_length), float(model.c),
        float(model.coupling), _inv_lam(model.cutoff, model.side_length),
        _panel_index(model.cutoff), int(check_every))


def pcn_step(state: GibbsChainState, model: GibbsModel, seed: int) -> GibbsChainState:
    """One pCN move; the draw is keyed by (seed, state.lane, state.proposed)."""
    phi, q4, _, acc, _, _, _ = _run(model, state, seed, 1)
    new_phi = SpectralField(phi, model.side_length)
    return GibbsChainState(new_phi, 0.25 * model.coupling * q4, state.beta,
                           state.accepted + acc, state.proposed + 1, state.lane)


@dataclass
class ChainResult:
    state: GibbsChainState
    panel: np.ndarray
    names: list[str]
    potential_min: float
    coherence_defect: float
    burn_in: int
    beta_final: float = field(default=0.0)


def run_chain(model: GibbsModel, seed: int, n_samples: int, n_burn: int = 20_000,
              beta: float = 0.5, lane: int = 0, phi0: SpectralField | None = None,
              check_every: int = 1000) -> ChainResult:
    """Adapt beta towards 30% acceptance for ``n_burn`` steps, then freeze
    it and record the observable panel at each of ``n_samples`` steps."""
    state = initial_state(model, beta, phi0, lane)
    phi, q4, beta_f, acc, panel, q4_min, coh = _run(
        model, state, seed, n_burn + n_samples, n_burn, check_every=check_every)
    final = GibbsChainState(SpectralField(phi, model.side_length), 0.25 * model.coupling * q4,
                            beta_f, acc, n_burn + n_samples, lane)
    return ChainResult(final, panel, panel_names(model.cutoff), 0.25 * model.coupling * q4_min,
                       0.25 * abs(model.coupling) * coh, n_burn, beta_f)


def log_reversibility_defect(phi: SpectralField, phi_new: SpectralField, beta: float,
                             model: GibbsModel) -> float:
    """Relative mismatch of nu(phi) q(phi, phi') a(phi, phi') against the
    reversed move, computed in logs. Zero up to rounding for pCN."""
    lay = mode_layout(model.cutoff, model.side_length)
    rho = np.sqrt(1.0 - beta * beta)

    def log_q(a, b):
        va = a.coeffs.ravel()[lay.rep_index]
        vb = b.coeffs.ravel()[lay.rep_index]
        return -np.sum(lay.lam_rep * np.abs(vb - rho * va) ** 2) / beta ** 2

    def log_a(a, b):
        return min(0.0, model.potential(a) - model.potential(b))

    fwd = -model.potential(phi) + model.log_prior(phi) + log_q(phi, phi_new) + log_a(phi, phi_new)
    bwd = -model.potential(phi_new) + model.log_prior(phi_new) + log_q(phi_new, phi) + log_a(phi_new, phi)
    return float(abs(fwd - bwd) / (1.0 + abs(fwd)))


# ---------------------------------------------------------------- statistics


def batch_means(x: np.ndarray, n_batches: int = 50) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column means, batch-means standard errors and effective sample sizes."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0] - x.shape[0] % n_batches
    if n < n_batches * 2:
        raise ValueError("too few samples for batch means")
    b = x[:n].reshape(n_batches, n // n_batches, -1).mean(axis=1)
    mean = x.mean(axis=0)
    se = b.std(axis=0, ddof=1) / np.sqrt(n_batches)
    var = x.var(axis=0, ddof=1)
    ess = np.where(se > 0, var / np.where(se > 0, se * se, 1.0), float(x.shape[0]))
    return mean, se, ess


def field_panel(coeffs: np.ndarray, c: float, side_length: float, m: int | None = None) -> np.ndarray:
    """Observable panel for a stack of coefficient arrays (n_samples, 2N+1, 2N+1)."""
    coeffs = np.asarray(coeffs)
    cutoff = (coeffs.shape[-1] - 1) // 2
    if m is None:
        m = grid_size(cutoff)
    inv_lam = _inv_lam(cutoff, side_length)
    idx = _panel_index(cutoff)
    flat = coeffs.reshape(coeffs.shape[0], -1)
    a2 = flat.real ** 2 + flat.imag ** 2
    out = np.empty((coeffs.shape[0], 3 + idx.size))
    out[:, 0] = a2 @ inv_lam
    out[:, 1] = a2.sum(axis=1) - c * side_length ** 2
    out[:, 2] = [_wick4_integral(cf, c, m, side_length) for cf in coeffs]
    out[:, 3:] = a2[:, idx]
    return out


def free_field_panel(cutoff: int, side_length: float = DEFAULT_SIDE) -> np.ndarray:
    """Exact panel expectations under mu_N with c = renorm_constant(N)."""
    lam = eigenvalues(cutoff, side_length)
    pos = lam[lam > 0]
    modes = panel_modes(cutoff)
    return np.array([np.sum(pos ** -2.0), 0.0, 0.0] +
                    [1.0 / float(lam[k1 + cutoff, k2 + cutoff]) for k1, k2 in modes])


def free_field_samples(cutoff: int, n: int, seed: int, side_length: float = DEFAULT_SIDE,
                       lane: int = 0) -> np.ndarray:
    rng = CounterRNG(seed, lane)
    return np.stack([stationary_sample(cutoff, rng, side_length, step=i).coeffs for i in range(n)])


# ---------------------------------------------------------------- cross-check


LANE_CHAIN = 0
LANE_START = 1
LANE_DYNAMICS = 2


def chain_part(cfg: SimConfig, n_chain: int, n_burn: int) -> dict:
    model = GibbsModel.from_config(cfg)
    res = run_chain(model, cfg.seed, n_chain, n_burn, lane=LANE_CHAIN)
    mean, se, ess = batch_means(res.panel)
    return {"mean": mean, "se": se, "ess": ess,
            "acceptance": res.state.accepted / res.state.proposed, "beta": res.beta_final,
            "potential_min": res.potential_min, "coherence_defect": res.coherence_defect,
            "panel": res.panel}


def dynamics_part(cfg: SimConfig, n_dyn: int, n_burn: int, record_every: int) -> dict:
    """Time average of the panel along X started from a nu_N draw."""
    model = GibbsModel.from_config(cfg)
    start = run_chain(model, cfg.seed, 1, n_burn, lane=LANE_START).state.phi
    run_cfg = SimConfig(**{**cfg.to_dict(), "horizon": n_dyn * cfg.dt})
    try:
        tr = solve_full(run_cfg, start, record_every=record_every,
                        z_path=OuPath("ou", cfg.seed, LANE_DYNAMICS))
    except BlowUpError as err:
        return {"blowup": err.report()}
    panel = field_panel(tr.x[1:], cfg.c, cfg.side_length)
    mean, se, ess = batch_means(panel)
    half = panel.shape[0] // 2
    m1, s1, _ = batch_means(panel[:half], 25)
    m2, s2, _ = batch_means(panel[half:], 25)
    stat = (m1 - m2) / np.sqrt(s1 ** 2 + s2 ** 2)
    return {"mean": mean, "se": se, "ess": ess, "stationarity_z": stat, "panel": panel,
            "times": tr.times[1:]}


def combine(cfg: SimConfig, chain: dict, dyn: dict, tol_z: float = 3.0, tol_closed: float = 5.0) -> dict:
    """Per-observable comparison report."""
    names = panel_names(cfg.cutoff)
    if "blowup" in dyn:
        return {"status": "blow-up", "blowup": dyn["blowup"], "observables": {}}
    free = cfg.coupling == 0
    exact = free_field_panel(cfg.cutoff, cfg.side_length) if free else None
    obs = {}
    ok = True
    flags = []
    for i, name in enumerate(names):
        cm, cs, dm, ds = (float(chain["mean"][i]), float(chain["se"][i]),
                          float(dyn["mean"][i]), float(dyn["se"][i]))
        z = (cm - dm) / np.hypot(cs, ds) if np.hypot(cs, ds) > 0 else 0.0
        row = {"chain_mean": cm, "chain_se": cs, "dyn_mean": dm, "dyn_se": ds, "z_score": float(z),
               "chain_ess": float(chain["ess"][i]), "dyn_ess": float(dyn["ess"][i]),
               "stationarity_z": float(dyn["stationarity_z"][i])}
        row["pass"] = bool(abs(z) <= tol_z)
        if exact is not None:
            row["exact"] = float(exact[i])
            row["chain_z_exact"] = float((cm - exact[i]) / cs) if cs > 0 else 0.0
            row["dyn_z_exact"] = float((dm - exact[i]) / ds) if ds > 0 else 0.0
            row["pass"] = row["pass"] and abs(row["chain_z_exact"]) <= tol_closed \
                and abs(row["dyn_z_exact"]) <= tol_closed
        if min(row["chain_ess"], row["dyn_ess"]) < MIN_ESS:
            flags.append(f"low_ess:{name}")
        ok = ok and row["pass"]
        obs[name] = row
    return {
        "status": "pass" if ok else "fail",
        "coupling": cfg.coupling,
        "c": cfg.c,
        "acceptance": chain["acceptance"],
        "beta": chain["beta"],
        "potential_min": chain["potential_min"],
        "potential_bound": potential_lower_bound(cfg.c, cfg.side_length, cfg.coupling),
        "coherence_defect": chain["coherence_defect"],
        "flags": flags,
        "observables": obs,
    }


def invariance_crosscheck(cfg: SimConfig, n_chain: int = 200_000, n_dyn: int | None = None,
                          n_burn: int = 20_000, record_every: int = 100) -> dict:
    """pCN averages under nu_N against time averages of the dynamics."""
    if cfg.cutoff > 8:
        raise ValueError("cross-check is meant for cutoff <= 8")
    if n_dyn is None:
        n_dyn = cfg.n_steps
    return combine(cfg, chain_part(cfg, n_chain, n_burn), dynamics_part(cfg, n_dyn, n_burn, record_every))
