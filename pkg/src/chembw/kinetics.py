"""The chemical Baum-Welch run: simulate the compiled network to equilibrium.

Species that no reaction changes (E, pi, the last beta layer) are constant
by construction; a clamp set additionally freezes whole species kinds so
the E-step or M-step subsystem can be studied on its own.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import compiler
from .crn import RateAssignment, ReactionNetwork, flower_totals, is_positive
from .hmm import Hmm, check_observations
from .integrate import integrate_network

log = logging.getLogger(__name__)

CLAMPS = {
    "none": (),
    "em-e": ("theta", "psi"),
    "em-m": ("alpha", "beta", "gamma", "xi"),
}
BOUNDARY_FRACTION = 1e-6


@dataclass(frozen=True)
class SimConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    t_max: float = 1e6
    convergence_tol: float = 1e-9
    checkpoint_interval: float = 0.0  # 0 records every accepted step
    clamp: str = "none"

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "t_max", "convergence_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be nonnegative")
        if self.clamp not in CLAMPS:
            raise ValueError(f"clamp must be one of {sorted(CLAMPS)}, got {self.clamp!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    converged: bool
    final_rhs_norm: float
    free: np.ndarray
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.times, self.states, self.free):
            arr.setflags(write=False)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def t_final(self) -> float:
        return float(self.times[-1])


def free_mask(net: ReactionNetwork, clamp: str = "none") -> np.ndarray:
    """Species integrated by :func:`simulate` under ``clamp``."""
    free = np.zeros(net.n_species, bool)
    free[net.compiled.change_idx] = True
    frozen = set(CLAMPS[clamp])
    for s in net.species:
        if s.kind in frozen:
            free[s.id] = False
    return free


def simulate(net: ReactionNetwork, rates: RateAssignment, x0, cfg: SimConfig | None = None) -> Trajectory:
    """Integrate the mass-action ODE from ``x0`` until the scaled rhs vanishes.

    The stopping norm is ``max |dx_i/dt| / T_i`` over free species, with
    ``T_i`` the total of the flower holding species ``i``. Raises
    :class:`chembw.integrate.IntegrationError` on step size underflow.
    """
    cfg = cfg or SimConfig()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (net.n_species,):
        raise ValueError(f"state has shape {x0.shape}, expected ({net.n_species},)")
    if np.any(x0 < 0):
        raise ValueError("initial concentrations must be nonnegative")
    free = free_mask(net, cfg.clamp)
    scale = flower_totals(net, x0)
    scale[scale <= 0] = 1.0
    res = integrate_network(
        net.compiled, rates.vector(net), x0, cfg.t_max,
        rtol=cfg.rel_tol, atol=cfg.abs_tol, free=free, rhs_scale=scale,
        convergence_tol=cfg.convergence_tol, checkpoint_dt=cfg.checkpoint_interval,
        names=net.names,
    )
    if not res.converged:
        log.warning("no convergence by t=%g (scaled rhs %.3g)", res.t_final, res.final_rhs_norm)
    return Trajectory(np.array(res.times), np.array(res.states), res.converged, res.final_rhs_norm, free, res.stats)


@dataclass
class Readout:
    theta: np.ndarray
    psi: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    positive: bool
    boundary: list
    zero_rows: list


def _normalize_rows(block: np.ndarray, label: str, zero_rows: list) -> np.ndarray:
    flat = block.reshape(block.shape[0], -1)
    tot = flat.sum(axis=1)
    out = np.full_like(flat, np.nan)
    for i, s in enumerate(tot):
        if s > 0:
            out[i] = flat[i] / s
        else:
            zero_rows.append(f"{label}[{i + 1}]")
    return out.reshape(block.shape)


def readout(layout: compiler.SpeciesLayout, x, net: ReactionNetwork | None = None) -> Readout:
    """Normalized parameters and posteriors held in state ``x``.

    A flower member below ``BOUNDARY_FRACTION`` of its flower total counts as
    a boundary component. Rows with zero total are left as NaN and listed in
    ``zero_rows``.
    """
    x = np.asarray(x, dtype=float)
    zero_rows: list = []
    theta = _normalize_rows(x[layout.theta], "theta", zero_rows)
    psi = _normalize_rows(x[layout.psi], "psi", zero_rows)
    gamma = _normalize_rows(x[layout.gamma], "gamma", zero_rows)
    xi = _normalize_rows(x[layout.xi], "xi", zero_rows)
    net = net or compiler.compile_network(layout.config)[0]
    members = np.concatenate([list(fl.members) for fl in net.flowers]) if net.flowers else np.empty(0, int)
    eps = BOUNDARY_FRACTION * flower_totals(net, x)[members]
    positive, boundary = is_positive(x[members], eps, [net.names[i] for i in members])
    return Readout(theta, psi, gamma, xi, positive, boundary, zero_rows)


@dataclass
class ChemicalRun:
    theta: np.ndarray
    psi: np.ndarray
    trajectory: Trajectory
    diagnostics: dict
    network: ReactionNetwork
    layout: compiler.SpeciesLayout
    rates: RateAssignment


def run_chemical_baum_welch(
    hmm: Hmm,
    obs,
    cfg: SimConfig | None = None,
    seed: int = 0,
    h_star: int | None = None,
    v_star: int = 0,
    rates: RateAssignment | None = None,
    beta_value: float = 1.0,
) -> ChemicalRun:
    """Compile, initialize and run the whole network in one pot.

    ``h_star`` defaults to the last hidden state. Diagnostics carry the
    positivity report and the fixed-point residuals of the readout.
    """
    from .analysis import check_fixed_point

    cfg = cfg or SimConfig()
    obs = check_observations(obs, hmm.n_visible)
    h_star = hmm.n_hidden - 1 if h_star is None else h_star
    net, layout = compiler.compile_for(hmm, len(obs), h_star, v_star)
    rates = rates or compiler.default_rates(net)
    x0 = compiler.initial_concentrations(layout, hmm, obs, seed=seed, beta_value=beta_value)
    traj = simulate(net, rates, x0, cfg)
    out = readout(layout, traj.final, net)
    report = check_fixed_point(hmm, obs, traj.final, layout=layout, net=net, rates=rates)
    diagnostics = dict(
        converged=traj.converged,
        t_final=traj.t_final,
        final_rhs_norm=traj.final_rhs_norm,
        positive=out.positive,
        boundary_species=out.boundary,
        zero_rows=out.zero_rows,
        bw_residuals=report.bw_residuals,
        network_rhs_norm=report.crn_rhs_norm,
        classification=report.classification,
        stats=dict(traj.stats),
        h_star=h_star,
        v_star=v_star,
        seed=seed,
        clamp=cfg.clamp,
    )
    return ChemicalRun(out.theta, out.psi, traj, diagnostics, net, layout, rates)


def trajectory_csv(traj: Trajectory, names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *names])
    for t, row in zip(traj.times, traj.states):
        w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
    return buf.getvalue()


def summary_json(run: ChemicalRun, extra: dict | None = None) -> str:
    doc = dict(
        theta=run.theta.tolist(),
        psi=run.psi.tolist(),
        **{k: v for k, v in run.diagnostics.items()},
    )
    if extra:
        doc.update(extra)
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj
