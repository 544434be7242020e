"""Closed-form convergence and lower bounds for gossip dual averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from pairgossip.dualavg import StepSchedule
from pairgossip.errors import ParameterError
from pairgossip.graph import Graph, UNREACHABLE, require_gossip_graph
from pairgossip.rng import trial_rng

LOWER_BOUND_TIME_CONDITION = "t < (d - 2) min{Delta_bar, 1}"


def _gap_ratio(g: Graph) -> float:
    require_gossip_graph(g)
    return g.spectrum.spectral_gap / g.n_edges


def c_of_graph(g: Graph) -> float:
    """Mixing constant ``(gap/|E|) (1 - gap/(2|E|))``."""
    r = _gap_ratio(g)
    return r * (1 - r / 2)


def mixing_time(g: Graph, eps: float) -> float:
    """``log(sqrt(n)/eps) / |log c(G)|``, clamped at zero."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    c = c_of_graph(g)
    return max(0.0, math.log(math.sqrt(g.n) / eps) / abs(math.log(c)))


@dataclass
class RateInputs:
    T: int
    sched: StepSchedule
    L: float
    theta_star_norm: float
    gap_ratio: float  # spectral gap / |E|
    bias_series: np.ndarray | None = None  # E[(omega_hat(t) - theta*)^T eps_hat(t)], t = 1..T-1

    @classmethod
    def for_graph(cls, g: Graph, T: int, sched: StepSchedule, L: float, theta_star_norm: float,
                  bias_series=None) -> "RateInputs":
        return cls(T, sched, L, theta_star_norm, _gap_ratio(g),
                   None if bias_series is None else np.asarray(bias_series, dtype=float))


def _gamma_sum(sched: StepSchedule, upto: int) -> float:
    if upto < 1:
        return 0.0
    return float(np.sum(sched.gamma(np.arange(1, upto + 1))))


def rate_bound_decomposition(inp: RateInputs, with_bias: bool = False) -> dict[str, float]:
    """Centralized term C1, network term C2 and bias term C3 (when ``with_bias``)."""
    T = inp.T
    if T < 2:
        raise ParameterError("the decomposition needs T >= 2")
    gs = _gamma_sum(inp.sched, T - 1)
    c1 = inp.theta_star_norm**2 / (2 * T * float(inp.sched.gamma(T))) + inp.L**2 / (2 * T) * gs
    c2 = 3 * inp.L**2 / (T * (1 - math.sqrt(1 - inp.gap_ratio))) * gs
    out = {"C1": c1, "C2": c2}
    if with_bias:
        if inp.bias_series is None or len(inp.bias_series) < T - 1:
            raise ParameterError("C3 needs a bias series of length >= T - 1")
        out["C3"] = float(np.sum(inp.bias_series[: T - 1]) / T)
    return out


def ergodic_rate_bound(g: Graph, T: int, sched: StepSchedule, L: float, D: float, eps: float) -> dict[str, float]:
    """Three-term bound with the bias controlled by the mixing time ``tau(eps)``."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    tau = mixing_time(g, eps)
    r = _gap_ratio(g)
    c1 = D**2 / (2 * T * float(sched.gamma(T))) + (1 + 12 * tau) * L**2 / (2 * T) * _gamma_sum(sched, T)
    c2 = 3 * L**2 / (T * (1 - math.sqrt(1 - r))) * _gamma_sum(sched, T - 1)
    c3 = 2 * L * D * (eps + tau / T)
    return {"C1": c1, "C2": c2, "C3": c3, "tau": tau, "total": c1 + c2 + c3}


def rate_bound_corollary(T: int, a: float, g: Graph, L: float, dist0: float) -> float:
    """Explicit rate for ``gamma(t) = a / sqrt(t)``, first printed form."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    if a <= 0:
        raise ParameterError("a must be positive")
    r = _gap_ratio(g)
    abslogc = abs(math.log(c_of_graph(g)))
    logT = math.log(T)
    lead = (dist0**2 / (2 * a) + a * L**2 + 6 * a * L**2 / (1 - math.sqrt(1 - r))
            + 12 * a * L**2 / abslogc * logT)
    return lead / math.sqrt(T) + 2 * L * dist0 / T * (1 + abslogc * logT)


def centralized_bound(T: int, sched: StepSchedule, L: float, theta_star_norm: float) -> float:
    """Deterministic/stochastic dual averaging bound ``||theta*||^2/(2T gamma(T)) + L^2/(2T) sum gamma``."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    return theta_star_norm**2 / (2 * T * float(sched.gamma(T))) + L**2 / (2 * T) * _gamma_sum(sched, T - 1)


# ---------------------------------------------------------------------------
# lower bound


def worst_pair(g: Graph) -> tuple[int, int]:
    """Lexicographically smallest pair at maximum graph distance."""
    dist = g.distance_table.dist
    if np.any(dist == UNREACHABLE):
        raise ParameterError("worst pair needs a connected graph")
    best = dist.max()
    i, j = np.argwhere(dist == best)[0]
    return int(i), int(j)


def delta_tilde(g: Graph, i: int, j: int) -> float:
    """Mean over the other nodes ``k`` of ``d(i, k) + d(k, j)``."""
    n = g.n
    if n <= 2:
        raise ParameterError("delta_tilde needs n > 2")
    dist = g.distance_table.dist
    if np.any(dist == UNREACHABLE):
        raise ParameterError("delta_tilde needs a connected graph")
    others = [k for k in range(n) if k not in (i, j)]
    return float(sum(dist[i, k] + dist[k, j] for k in others) / (n - 2))


def lower_bound(R: float, L: float, t, dt: float):
    """``(R L / 36) sqrt(1 / (1 + t/dt)^2 + 1 / (1 + t))``."""
    t = np.asarray(t, dtype=float)
    val = R * L / 36 * np.sqrt(1 / (1 + t / dt) ** 2 + 1 / (1 + t))
    return float(val) if val.ndim == 0 else val


@dataclass
class HardInstance:
    """Pairwise objective that forces alternating communication between two far nodes.

    Coordinates are 0-based here: the chain terms couple ``theta[2r]`` with
    ``theta[2r-1]`` (node ``i0``) and ``theta[2r-1]`` with ``theta[2r-2]``
    (node ``i1``) for ``r = 1..k``.
    """

    n: int
    i0: int
    i1: int
    j0: list[int]
    j1: list[int]
    k: int
    alpha: float
    beta: float
    gamma: float
    delta: float
    dim: int
    delta_tilde: float
    notes: list[str] = field(default_factory=lambda: [LOWER_BOUND_TIME_CONDITION])

    def pair_value(self, u: int, v: int, theta) -> float:
        th = np.asarray(theta, dtype=float)
        n = self.n
        val = 0.5 * self.alpha * float(th @ th)
        if u == v == self.i0:
            val -= n * self.beta * th[0]
        elif u == v == self.i1:
            val += n * self.delta * th[2 * self.k]
        elif u == self.i0 and v in self.j0:
            r = self.j0.index(v) + 1
            val += n * self.gamma * abs(th[2 * r] - th[2 * r - 1])
        elif u == self.i1 and v in self.j1:
            r = self.j1.index(v) + 1
            val += n * self.gamma * abs(th[2 * r - 1] - th[2 * r - 2])
        return float(val)

    def F(self, theta) -> np.ndarray | float:
        th = np.asarray(theta, dtype=float)
        k, n = self.k, self.n
        r = np.arange(1, k + 1)
        chain = np.abs(th[..., 2 * r] - th[..., 2 * r - 1]).sum(-1) + np.abs(th[..., 2 * r - 1] - th[..., 2 * r - 2]).sum(-1)
        val = (0.5 * self.alpha * np.sum(th * th, axis=-1)
               + (-self.beta * th[..., 0] + self.delta * th[..., 2 * k] + self.gamma * chain) / n)
        return float(val) if np.ndim(val) == 0 else val

    def subgradient(self, theta) -> np.ndarray:
        """A subgradient of ``F``; ``sign(0) = 0`` selects the minimal element for each kink."""
        th = np.asarray(theta, dtype=float)
        k, n = self.k, self.n
        g = self.alpha * th.copy()
        g[0] -= self.beta / n
        g[2 * k] += self.delta / n
        for r in range(1, k + 1):
            s = np.sign(th[2 * r] - th[2 * r - 1])
            g[2 * r] += self.gamma * s / n
            g[2 * r - 1] -= self.gamma * s / n
            s = np.sign(th[2 * r - 1] - th[2 * r - 2])
            g[2 * r - 1] += self.gamma * s / n
            g[2 * r - 2] -= self.gamma * s / n
        return g


def hard_instance(g: Graph, k: int, params: dict | None = None, seed: int = 0, dim: int | None = None) -> HardInstance:
    params = {"alpha": 1.0, "beta": 1.0, "gamma": 1.0, "delta": 1.0, **(params or {})}
    if k < 1:
        raise ParameterError("k must be >= 1")
    if g.n < 2 * k + 2:
        raise ParameterError(f"need n >= 2k + 2 = {2 * k + 2} nodes, graph has {g.n}")
    i0, i1 = worst_pair(g)
    others = np.array([v for v in range(g.n) if v not in (i0, i1)])
    picks = trial_rng(seed, 0).choice(others, size=2 * k, replace=False)
    dim = max(dim or 0, 2 * k + 1)
    return HardInstance(
        n=g.n, i0=i0, i1=i1, j0=[int(v) for v in picks[:k]], j1=[int(v) for v in picks[k:]], k=k,
        alpha=float(params["alpha"]), beta=float(params["beta"]), gamma=float(params["gamma"]),
        delta=float(params["delta"]), dim=dim, delta_tilde=delta_tilde(g, i0, i1) if g.n > 2 else 0.0,
    )


def bounds_report(g: Graph, T: int, a: float, L: float, dist0: float, eps: float, R: float = 1.0,
                  alpha: float = -0.5) -> dict:
    """Everything the ``bounds`` subcommand prints."""
    sched = StepSchedule(a, alpha)
    dec = rate_bound_decomposition(RateInputs.for_graph(g, T, sched, L, dist0)) if T >= 2 else {}
    i, j = worst_pair(g)
    dt = delta_tilde(g, i, j) if g.n > 2 else float("nan")
    return {
        "topology": g.name, "n": g.n, "n_edges": g.n_edges,
        "gap_over_edges": _gap_ratio(g), "c_G": c_of_graph(g),
        "T": T, "a": a, "alpha": alpha, "L": L, "dist0": dist0, "eps": eps,
        "C1": dec.get("C1", float("nan")), "C2": dec.get("C2", float("nan")),
        "tau": mixing_time(g, eps),
        "corollary": rate_bound_corollary(T, a, g, L, dist0),
        "worst_pair": f"{i}-{j}", "delta_tilde": dt,
        "lower_bound": lower_bound(R, L, T, dt) if g.n > 2 else float("nan"),
        "lower_bound_condition": LOWER_BOUND_TIME_CONDITION,
    }
