"""Barabasi-Albert metapopulation networks with degree-driven diffusion rates.

Rates follow the generic diffusion model

    p_ij = C * k_j**theta_i / sum_{l in nb(i)} k_l**theta_i

with one exponent theta_i per source node drawn from N(theta_mean, theta_var).
Every node therefore sends exactly a fraction C of its residents per tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from . import rng as _rng
from .errors import CalibrationError, ConfigError
from .network import MetapopNetwork


@dataclass(frozen=True)
class NetGenConfig:
    node_count: int = 3000
    attachment_m: int = 8
    mean_theta: float = 0.4
    theta_var: float = 0.0
    mobility_constant: float = 0.1
    initial_population: int = 600_000
    seed: int = 0
    target_exponent: float = 1.5
    population_mode: str = "uniform"  # or "traffic": N ~ T**lambda_exponent
    lambda_exponent: float = 0.5
    theta_prime: float = 0.5  # empirical <p_ij> ~ (k_i k_j)**theta' (metadata only)

    def check(self) -> "NetGenConfig":
        if not (0.0 < self.mobility_constant < 1.0):
            raise ConfigError(f"mobility constant C must lie in (0, 1), got {self.mobility_constant}")
        if self.attachment_m < 1:
            raise ConfigError("attachment_m must be >= 1")
        if self.node_count <= self.attachment_m:
            raise ConfigError(
                f"node_count ({self.node_count}) must exceed attachment_m ({self.attachment_m})"
            )
        if self.theta_var < 0:
            raise ConfigError("theta_var must be >= 0")
        if self.initial_population < 1:
            raise ConfigError("initial_population must be >= 1")
        if self.population_mode not in ("uniform", "traffic"):
            raise ConfigError(f"unknown population_mode {self.population_mode!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def generate_ba_topology(config: NetGenConfig) -> MetapopNetwork:
    """Undirected BA graph grown from a complete core of ``m + 1`` nodes.

    Returned network has every rate set to 0.0.
    """
    config.check()
    n, m = config.node_count, config.attachment_m
    gen = _rng.stream(config.seed, _rng.TOPOLOGY)
    adj: list[set[int]] = [set() for _ in range(n)]
    # each node appears once per incident edge end
    ends: list[int] = []
    core = m + 1
    for i in range(core):
        for j in range(i + 1, core):
            adj[i].add(j)
            adj[j].add(i)
            ends.extend((i, j))
    for v in range(core, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(ends[int(gen.integers(len(ends)))])
        for u in sorted(targets):
            adj[v].add(u)
            adj[u].add(v)
            ends.extend((v, u))
    pops = np.full(n, config.initial_population, dtype=np.int64)
    nbrs = [sorted(a) for a in adj]
    return MetapopNetwork(pops, nbrs, [np.zeros(len(a)) for a in nbrs], directed=False)


def draw_thetas(config: NetGenConfig) -> np.ndarray:
    gen = _rng.stream(config.seed, _rng.THETA)
    if config.theta_var == 0:
        return np.full(config.node_count, float(config.mean_theta))
    return gen.normal(config.mean_theta, math.sqrt(config.theta_var), size=config.node_count)


def assign_diffusion_rates(network: MetapopNetwork, config: NetGenConfig, theta_draws=None) -> MetapopNetwork:
    """Set p_ij = C k_j^theta_i / sum_l k_l^theta_i over each node's neighbours."""
    config.check()
    thetas = draw_thetas(config) if theta_draws is None else np.asarray(theta_draws, dtype=float)
    if thetas.shape != (network.node_count,):
        raise ConfigError("need one theta per node")
    k = network.degrees.astype(np.float64)
    C = float(config.mobility_constant)
    rates = []
    for i, js in enumerate(network.neighbors):
        if len(js) == 0:
            rates.append(np.zeros(0))
            continue
        w = k[js] ** thetas[i]
        # fsum is exactly rounded, so the result ignores neighbour order
        total = math.fsum(w.tolist())
        rates.append(C * (w / total))
    return network.with_rates(rates)


def inflow_traffic(network: MetapopNetwork) -> np.ndarray:
    """T_j = sum_l w_lj with w_lj = p_lj N_l (passengers arriving per tick)."""
    T = np.zeros(network.node_count)
    pops = network.populations.astype(np.float64)
    for i, (js, ps) in enumerate(zip(network.neighbors, network.rates)):
        np.add.at(T, js, ps * pops[i])
    return T


def traffic_exponent(network: MetapopNetwork, bins: int = 10) -> float:
    """Slope of log T against log k, after averaging within degree-decile bins."""
    k = network.degrees.astype(np.float64)
    T = inflow_traffic(network)
    mask = (k > 0) & (T > 0)
    k, T = k[mask], T[mask]
    if len(np.unique(k)) < 2:
        raise CalibrationError("all nodes share one degree; exponent undefined")
    edges = np.unique(np.quantile(k, np.linspace(0, 1, bins + 1)))
    idx = np.clip(np.searchsorted(edges, k, side="right") - 1, 0, len(edges) - 2)
    xs, ys = [], []
    for b in np.unique(idx):
        sel = idx == b
        xs.append(np.log(k[sel]).mean())
        ys.append(np.log(T[sel]).mean())
    if len(xs) < 2:
        raise CalibrationError("degree bins collapsed to a single point")
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def assign_populations(network: MetapopNetwork, config: NetGenConfig) -> MetapopNetwork:
    if config.population_mode == "uniform":
        return network.with_populations(np.full(network.node_count, config.initial_population))
    T = inflow_traffic(network.with_populations(np.full(network.node_count, config.initial_population)))
    weight = np.power(np.maximum(T, 1e-300), config.lambda_exponent)
    total = config.initial_population * network.node_count
    pops = np.maximum(1, np.rint(weight / weight.sum() * total)).astype(np.int64)
    return network.with_populations(pops)


def generate_network(config: NetGenConfig) -> MetapopNetwork:
    """Topology, rates and populations in one call."""
    topo = generate_ba_topology(config)
    net = assign_diffusion_rates(topo, config)
    return assign_populations(net, config)


@dataclass(frozen=True)
class Calibration:
    theta_mean: float
    theta_var: float
    residual: float
    slopes: dict  # (theta, var) -> mean fitted exponent over the ensemble


def _ensemble_slope(topologies, theta_mean, theta_var, base: NetGenConfig, seed_offset=0) -> float:
    slopes = []
    for r, topo in enumerate(topologies):
        cfg = NetGenConfig(**{**base.to_dict(), "mean_theta": theta_mean, "theta_var": theta_var,
                              "node_count": topo.node_count, "seed": base.seed + seed_offset + r})
        net = assign_diffusion_rates(topo, cfg)
        net = net.with_populations(np.full(net.node_count, base.initial_population))
        slopes.append(traffic_exponent(net))
    return float(np.mean(slopes))


def calibrate_theta(
    topologies: Sequence[MetapopNetwork],
    target_exponent: float = 1.5,
    theta_grid: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5),
    var_grid: Sequence[float] = (0.0,),
    base: NetGenConfig | None = None,
) -> Calibration:
    """Least-squares fit of (theta_mean, theta_var) to a target traffic exponent.

    For each variance the ensemble exponent is regressed linearly on
    theta_mean over the grid and the line is solved for the target; the
    variance with the smallest squared residual at its solution wins.
    """
    base = base or NetGenConfig()
    if not topologies:
        raise CalibrationError("empty ensemble")
    slopes: dict[tuple[float, float], float] = {}
    best = None
    for var in var_grid:
        ys = [_ensemble_slope(topologies, th, var, base) for th in theta_grid]
        for th, y in zip(theta_grid, ys):
            slopes[(float(th), float(var))] = y
        if len(theta_grid) == 1:
            theta = float(theta_grid[0])
            resid = (ys[0] - target_exponent) ** 2
        else:
            b, a = np.polyfit(theta_grid, ys, 1)
            if b == 0:
                raise CalibrationError("traffic exponent does not respond to theta")
            theta = float((target_exponent - a) / b)
            resid = (_ensemble_slope(topologies, theta, var, base) - target_exponent) ** 2
        if best is None or resid < best[2]:
            best = (theta, float(var), float(resid))
    return Calibration(best[0], best[1], best[2], slopes)
