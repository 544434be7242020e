"""Gossip estimation of pairwise statistics: GoSta, U1-gossip and U2-gossip.

All simulators run a batch of independent runs at once: state arrays carry a
leading run axis, and each run consumes its own pre-drawn edge sequence. A
single seeded run is the batch of size one, so Monte-Carlo aggregates and
individual runs see bit-identical trajectories.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from pairgossip.errors import ParameterError
from pairgossip.graph import Graph, require_gossip_graph, transition
from pairgossip.pairwise import KernelMatrix, dispersion
from pairgossip.rng import edge_draws

PROTOCOLS = ("gosta", "u1", "u2", "gosta_async")

# number of independent edge draws consumed per iteration
_DRAWS = {"gosta": 1, "u1": 1, "u2": 2, "gosta_async": 1}


@dataclass
class Trajectory:
    """Recorded estimates of one run.

    ``z`` has shape ``(len(t), n)``; ``target`` is what the protocol converges
    to (``U 1`` for GoSta/U2, the partial sums for U1).
    """

    t: np.ndarray
    z: np.ndarray
    target: np.ndarray
    protocol: str
    seed: int | None = None
    aux: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def node_err_l2(self) -> np.ndarray:
        return np.linalg.norm(self.z - self.target, axis=1)

    @property
    def mean_z(self) -> np.ndarray:
        return self.z.mean(axis=1)

    @property
    def std_z(self) -> np.ndarray:
        return self.z.std(axis=1)

    def rows(self) -> list[dict]:
        err, mz, sz = self.node_err_l2, self.mean_z, self.std_z
        return [
            {"t": int(t), "node_err_l2": float(e), "mean_z": float(m), "std_z": float(s),
             "seed": self.seed, "protocol": self.protocol}
            for t, e, m, s in zip(self.t, err, mz, sz)
        ]

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, [self])


TRAJECTORY_COLUMNS = ("t", "node_err_l2", "mean_z", "std_z", "seed", "protocol")


def write_trajectory_csv(path, trajectories: Iterable[Trajectory]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRAJECTORY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for traj in trajectories:
            for row in traj.rows():
                w.writerow({**row, **{k: repr(v) for k, v in row.items() if isinstance(v, float)}})


def record_steps(T: int, record_every: int = 1) -> np.ndarray:
    """Recorded iterations: multiples of ``record_every`` up to ``T``, ``T`` always included."""
    if T < 0:
        raise ParameterError("T must be >= 0")
    if record_every < 1:
        raise ParameterError("record_every must be >= 1")
    steps = list(range(record_every, T + 1, record_every))
    if T >= 1 and (not steps or steps[-1] != T):
        steps.append(T)
    return np.array(steps, dtype=np.int64)


def target(km: KernelMatrix, protocol: str) -> np.ndarray:
    if protocol == "u1":
        return km.h_bar.copy()
    return np.full(km.n, km.u_full)


def _check(g: Graph, km: KernelMatrix, protocol: str) -> None:
    if protocol not in PROTOCOLS:
        raise ParameterError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    if g.n != km.n:
        raise ParameterError(f"graph has {g.n} nodes but kernel matrix has {km.n}")
    if not km.symmetric:
        raise ParameterError("gossip protocols require a symmetric kernel")
    require_gossip_graph(g)


def simulate_batch(
    g: Graph,
    km: KernelMatrix,
    draws: np.ndarray,
    protocol: str,
    steps: Sequence[int] | None = None,
    return_aux: bool = False,
):
    """Run ``R`` independent runs driven by ``draws`` of shape ``(R, T, k)``.

    ``draws[r, t-1]`` holds the edge indices used at iteration ``t`` (``k=2``
    for U2). Returns the estimates at ``steps`` as ``(R, len(steps), n)``;
    ``steps`` defaults to ``1..T``. Step 0 (all zeros) may be requested.
    """
    _check(g, km, protocol)
    draws = np.asarray(draws, dtype=np.int64)
    if draws.ndim == 2:
        draws = draws[:, :, None]
    R, T, k = draws.shape
    if k < _DRAWS[protocol]:
        raise ParameterError(f"{protocol} needs {_DRAWS[protocol]} edge draws per iteration")
    steps = np.arange(1, T + 1) if steps is None else np.asarray(steps, dtype=np.int64)
    if steps.size and (steps.min() < 0 or steps.max() > T):
        raise ParameterError("requested step outside 0..T")
    H = km.H
    n = km.n
    ends = g.edges
    rows = np.arange(R)
    nodes = np.arange(n)[None, :]
    z = np.zeros((R, n))
    aux = np.tile(np.arange(n), (R, 1))
    aux2 = aux.copy()
    m = np.zeros((R, n))
    p_node = g.degrees / g.n_edges
    out = np.empty((R, len(steps), n))
    aux_out = np.empty((R, len(steps), n), dtype=np.int64) if return_aux else None
    slot = {int(s): idx for idx, s in enumerate(steps)}
    if 0 in slot:
        out[:, slot[0]] = 0.0
        if return_aux:
            aux_out[:, slot[0]] = aux
    for t in range(1, T + 1):
        e = ends[draws[:, t - 1, 0]]
        i, j = e[:, 0], e[:, 1]
        if protocol == "gosta":
            z = (t - 1) / t * z + H[nodes, aux] / t
            avg = 0.5 * (z[rows, i] + z[rows, j])
            z[rows, i] = avg
            z[rows, j] = avg
            aux[rows, i], aux[rows, j] = aux[rows, j], aux[rows, i].copy()
        elif protocol == "u1":
            aux[rows, i], aux[rows, j] = aux[rows, j], aux[rows, i].copy()
            z = (t - 1) / t * z + H[nodes, aux] / t
        elif protocol == "u2":
            z = (t - 1) / t * z + H[aux, aux2] / t
            aux[rows, i], aux[rows, j] = aux[rows, j], aux[rows, i].copy()
            e2 = ends[draws[:, t - 1, 1]]
            k2, l2 = e2[:, 0], e2[:, 1]
            aux2[rows, k2], aux2[rows, l2] = aux2[rows, l2], aux2[rows, k2].copy()
        else:  # gosta_async: only the two endpoints act, with local clocks
            for node in (i, j):
                m[rows, node] += 1.0 / p_node[node]
                w = np.minimum(1.0, 1.0 / (m[rows, node] * p_node[node]))
                z[rows, node] = (1 - w) * z[rows, node] + w * H[node, aux[rows, node]]
            avg = 0.5 * (z[rows, i] + z[rows, j])
            z[rows, i] = avg
            z[rows, j] = avg
            aux[rows, i], aux[rows, j] = aux[rows, j], aux[rows, i].copy()
        if t in slot:
            out[:, slot[t]] = z
            if return_aux:
                aux_out[:, slot[t]] = aux
    if return_aux:
        return out, aux_out
    return out


def _run(protocol: str, g, km, T, seed, record_every, forced_edges=None) -> Trajectory:
    k = _DRAWS[protocol]
    draws = edge_draws(seed, 0, g.n_edges, T, per_step=k)
    if forced_edges is not None:
        # force the first iterations to use given edges, e.g. for hand traces
        lookup = {tuple(map(int, e)): idx for idx, e in enumerate(g.edges)}
        for t, pair in enumerate(forced_edges):
            pair = np.atleast_2d(pair)
            for col, (a, b) in enumerate(pair):
                draws[t, col] = lookup[(min(a, b), max(a, b))]
    steps = record_steps(T, record_every)
    z, aux = simulate_batch(g, km, draws[None], protocol, steps, return_aux=True)
    return Trajectory(t=steps, z=z[0], target=target(km, protocol), protocol=protocol,
                      seed=seed, aux=aux[0])


def gosta_sync(g: Graph, km: KernelMatrix, T: int, seed: int = 0, record_every: int = 1,
               forced_edges=None) -> Trajectory:
    """Synchronous GoSta: local running-average update, then average along a random edge, then swap."""
    return _run("gosta", g, km, T, seed, record_every, forced_edges)


def gosta_async(g: Graph, km: KernelMatrix, T: int, seed: int = 0, record_every: int = 1,
                forced_edges=None) -> Trajectory:
    """Asynchronous GoSta on the global event clock.

    Only the endpoints of the drawn edge update, using the running-average
    weight ``1 / (m_k p_k)`` of their local clock estimate ``m_k``.
    No convergence bound is provided for this variant.
    """
    return _run("gosta_async", g, km, T, seed, record_every, forced_edges)


def u1_gossip(g: Graph, km: KernelMatrix, T: int, seed: int = 0, record_every: int = 1,
              forced_edges=None) -> Trajectory:
    """U1-gossip: swap along a random edge, then every node updates towards its partial sum."""
    return _run("u1", g, km, T, seed, record_every, forced_edges)


def u2_gossip(g: Graph, km: KernelMatrix, T: int, seed: int = 0, record_every: int = 1,
              forced_edges=None) -> Trajectory:
    """U2-gossip: update from two auxiliary observations, each propagated by its own random edge."""
    return _run("u2", g, km, T, seed, record_every, forced_edges)


RUNNERS = {"gosta": gosta_sync, "u1": u1_gossip, "u2": u2_gossip, "gosta_async": gosta_async}


# ---------------------------------------------------------------------------
# oracles

ORACLE_MAX_T = 500
ORACLE_MAX_N = 40
BRUTE_FORCE_MAX_BRANCHES = 10**6


def exact_expectation(g: Graph, km: KernelMatrix, T: int, protocol: str = "gosta") -> np.ndarray:
    """``E[z(t)]`` for ``t = 0..T``, shape ``(T + 1, n)``.

    Edge draws at distinct iterations are independent. The estimate mixing
    after iteration ``s`` only involves draws ``s..t`` while the kernel value
    entering at ``s`` only involves draws ``< s`` (``<= s`` for U1), so each
    summand factorises into powers of the expected transitions ``W_2`` and
    ``W_1``.
    """
    if protocol not in ("gosta", "u1", "u2"):
        raise ParameterError(f"no exact expectation for protocol {protocol!r}")
    _check(g, km, protocol)
    if T > ORACLE_MAX_T or km.n > ORACLE_MAX_N:
        raise ParameterError(f"exact expectation limited to T <= {ORACLE_MAX_T}, n <= {ORACLE_MAX_N}")
    H = km.H
    n = km.n
    w1 = transition(g, 1).w
    w2 = transition(g, 2).w
    out = np.zeros((T + 1, n))
    ez = np.zeros(n)
    walk = np.eye(n)  # W_1^(t-1): law of the auxiliary index after t-1 swaps
    for t in range(1, T + 1):
        if protocol == "gosta":
            v = np.sum(H * walk, axis=1)
            ez = w2 @ ((t - 1) / t * ez + v / t)
        elif protocol == "u1":
            v = np.sum(H * (walk @ w1), axis=1)
            ez = (t - 1) / t * ez + v / t
        else:
            v = np.einsum("pj,jl,pl->p", walk, H, walk)
            ez = (t - 1) / t * ez + v / t
        walk = walk @ w1
        out[t] = ez
    return out


def brute_force_expectation(g: Graph, km: KernelMatrix, T: int, protocol: str = "gosta") -> np.ndarray:
    """``E[z(t)]`` for ``t = 0..T`` by enumerating every equally likely edge sequence."""
    _check(g, km, protocol)
    k = _DRAWS[protocol]
    branches = g.n_edges ** (k * T)
    if branches > BRUTE_FORCE_MAX_BRANCHES:
        raise ParameterError(f"{branches} edge sequences exceed the enumeration limit")
    if T == 0:
        return np.zeros((1, km.n))
    seqs = np.array(list(itertools.product(range(g.n_edges), repeat=k * T)), dtype=np.int64)
    draws = seqs.reshape(-1, T, k)
    z = simulate_batch(g, km, draws, protocol, steps=np.arange(T + 1))
    return z.mean(axis=0)


# ---------------------------------------------------------------------------
# Monte-Carlo aggregation


@dataclass
class MonteCarloResult:
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_runs: int

    @property
    def stderr(self) -> np.ndarray:
        return self.std / math.sqrt(self.n_runs)


def monte_carlo(
    run: Callable[[int], np.ndarray],
    n_runs: int,
    base_seed: int = 0,
    reducers: dict[str, Callable[[np.ndarray], np.ndarray]] | None = None,
    t: np.ndarray | None = None,
) -> dict[str, MonteCarloResult]:
    """Per-step mean and std of ``run(seed)`` over seeds ``base_seed .. base_seed + n_runs - 1``.

    ``run`` returns an array whose leading axis is the recorded step. Each
    reducer maps that array to the per-step statistic to aggregate; the
    default aggregates the raw output under the key ``"value"``.
    """
    if n_runs < 1:
        raise ParameterError("n_runs must be >= 1")
    reducers = reducers or {"value": lambda a: a}
    samples = {name: [] for name in reducers}
    for r in range(n_runs):
        out = np.asarray(run(base_seed + r))
        for name, red in reducers.items():
            samples[name].append(np.asarray(red(out), dtype=float))
    return {name: _aggregate(np.stack(vals), t) for name, vals in samples.items()}


def _aggregate(stack: np.ndarray, t=None) -> MonteCarloResult:
    steps = np.arange(stack.shape[1]) if t is None else np.asarray(t)
    return MonteCarloResult(t=steps, mean=stack.mean(axis=0), std=stack.std(axis=0, ddof=0),
                            n_runs=stack.shape[0])


def monte_carlo_estimation(
    g: Graph,
    km: KernelMatrix,
    T: int,
    protocol: str,
    n_runs: int,
    base_seed: int = 0,
    steps: Sequence[int] | None = None,
    chunk: int = 2000,
) -> dict[str, MonteCarloResult]:
    """Batched Monte-Carlo for the estimation protocols.

    Same seeds and per-run trajectories as calling the single-run protocol
    once per seed. Returns aggregates of ``z`` (``"z"``) and of the error
    norm ``||z - target||`` (``"err"``).
    """
    if n_runs < 1:
        raise ParameterError("n_runs must be >= 1")
    steps = np.arange(0, T + 1) if steps is None else np.asarray(steps, dtype=np.int64)
    k = _DRAWS[protocol]
    tgt = target(km, protocol)
    zs, errs = [], []
    for lo in range(0, n_runs, chunk):
        seeds = range(base_seed + lo, base_seed + min(n_runs, lo + chunk))
        draws = np.stack([edge_draws(s, 0, g.n_edges, T, per_step=k) for s in seeds])
        z = simulate_batch(g, km, draws, protocol, steps)
        zs.append(z)
        errs.append(np.linalg.norm(z - tgt, axis=2))
    z = np.concatenate(zs)
    err = np.concatenate(errs)
    return {"z": _aggregate(z, steps), "err": _aggregate(err, steps)}


# ---------------------------------------------------------------------------
# bounds


def _gap_terms(g: Graph) -> tuple[float, float]:
    require_gossip_graph(g)
    return float(g.n_edges), g.spectrum.spectral_gap


def bound_gosta_expectation(g: Graph, km: KernelMatrix, t) -> np.ndarray | float:
    """``|E| D(h) / (t gap)`` bound on ``||E[z(t)] - U 1||``."""
    m, gap = _gap_terms(g)
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ParameterError("t must be >= 1")
    val = m * dispersion(km) / (t * gap)
    return float(val) if val.ndim == 0 else val


def bound_gosta_deviation(g: Graph, km: KernelMatrix, t) -> np.ndarray | float:
    """Bound on ``E ||z(t) - U 1||``, decaying like ``1 / sqrt(t)``."""
    m, gap = _gap_terms(g)
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ParameterError("t must be >= 1")
    H = km.H
    centered = np.linalg.norm(H - km.h_bar[:, None]) ** 2
    full = np.linalg.norm(H) ** 2
    inner = (1 + 2 * m / gap) * centered + (4 * m / gap) * (1 + 1 / (2 * t)) * full
    val = np.sqrt(inner) / np.sqrt(t)
    return float(val) if val.ndim == 0 else val


def bound_u1(g: Graph, km: KernelMatrix, t) -> np.ndarray:
    """Per-node bound ``|E| ||H e_k|| / (2 gap t)`` on ``|E[z_k(t)] - h_bar_k|``.

    Returns shape ``(n,)`` for scalar ``t`` and ``(len(t), n)`` otherwise.
    """
    m, gap = _gap_terms(g)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("t must be > 0")
    cols = np.linalg.norm(km.H, axis=0)
    return m * cols / (2 * gap * t[..., None])


def bound_u2(g: Graph, km: KernelMatrix, t) -> np.ndarray | float:
    """Bound on ``||E[z(t)] - U 1||`` for U2-gossip."""
    m, gap = _gap_terms(g)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("t must be > 0")
    r = gap / m
    centered = np.linalg.norm(km.H - km.h_bar[:, None])
    spread = np.linalg.norm(km.h_bar - km.u_full)
    val = m / (t * gap) * ((3 - r) / (2 - r) * centered + spread)
    return float(val) if val.ndim == 0 else val
