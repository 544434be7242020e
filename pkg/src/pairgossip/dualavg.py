"""Dual averaging: projections, centralized/stochastic/distributed variants and
gossip dual averaging for pairwise objectives.

The gossip optimizers run a batch of independent runs in lockstep (leading
run axis on every state array). Run ``r`` of a batch started at seed ``s``
is bit-identical to a single run with seed ``s + r``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from pairgossip.errors import ParameterError
from pairgossip.estimation import record_steps
from pairgossip.graph import Graph, require_gossip_graph
from pairgossip.losses import PairwiseObjective
from pairgossip.rng import trial_rng

log = logging.getLogger(__name__)

SAFETY_RADIUS = 1e6


@dataclass(frozen=True)
class StepSchedule:
    """``gamma(t) = a * t**alpha`` with ``alpha`` in (-1, 0)."""

    a: float = 1.0
    alpha: float = -0.5

    def __post_init__(self):
        if self.a <= 0:
            raise ParameterError("step scale a must be positive")
        if not -1 < self.alpha < 0:
            raise ParameterError("step exponent alpha must lie in (-1, 0)")

    def gamma(self, t):
        return self.a * np.power(np.asarray(t, dtype=float), self.alpha)

    def capital_gamma(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.gamma(t)


@dataclass(frozen=True)
class ProjectionSpec:
    """Constraint handled by the primal map: ``none``, ``ball`` of radius ``D`` or ``psd`` cone of side ``d``."""

    kind: str = "none"
    D: float | None = None
    d: int | None = None
    warn_radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "ball", "psd"):
            raise ParameterError(f"unknown projection kind {self.kind!r}")
        if self.kind == "ball" and (self.D is None or self.D <= 0):
            raise ParameterError("ball projection needs a radius D > 0")
        if self.kind == "psd" and (self.d is None or self.d < 1):
            raise ParameterError("psd projection needs the matrix side d")


def experiment_projection() -> ProjectionSpec:
    """No regularisation, with a large safety ball that logs a warning if it ever binds."""
    return ProjectionSpec("ball", D=SAFETY_RADIUS, warn_radius=SAFETY_RADIUS)


def project_scaled(y: np.ndarray, psi: ProjectionSpec) -> np.ndarray:
    """Euclidean projection of the already scaled point ``y = gamma * z`` onto the constraint set."""
    if psi.kind == "none":
        return y
    if psi.kind == "ball":
        norm = np.linalg.norm(y, axis=-1, keepdims=True)
        over = norm > psi.D
        if psi.warn_radius is not None and np.any(over):
            log.warning("safety ball of radius %g is active", psi.D)
        return np.where(over, y * (psi.D / np.where(over, norm, 1.0)), y)
    d = psi.d
    if y.shape[-1] != d * d:
        raise ParameterError(f"psd projection expects vectors of length {d * d}, got {y.shape[-1]}")
    mat = y.reshape(*y.shape[:-1], d, d)
    mat = 0.5 * (mat + np.swapaxes(mat, -1, -2))
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    out = (vecs * vals[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return out.reshape(y.shape)


def project(z, t, sched: StepSchedule, psi: ProjectionSpec = ProjectionSpec()) -> np.ndarray:
    """Primal map ``argmax_{theta in Theta} gamma(t) theta^T z - ||theta||^2 / 2``.

    ``t`` may be real (asynchronous clocks) and may broadcast against the
    leading axes of ``z``.
    """
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("projection time must be positive")
    gamma = sched.gamma(t)
    if gamma.ndim:
        gamma = gamma[..., None]
    return project_scaled(gamma * z, psi)


def primal(z, t, sched: StepSchedule, psi: ProjectionSpec = ProjectionSpec()) -> np.ndarray:
    """Primal point of the gradient accumulator ``z``: ``project(-z)``.

    ``z`` sums gradients, so the descent iterate lives along ``-z``;
    :func:`project` keeps the literal ``argmax`` form.
    """
    return project(-np.asarray(z, dtype=float), t, sched, psi)


# ---------------------------------------------------------------------------
# centralized variants


@dataclass
class CentralTrajectory:
    theta: np.ndarray  # (T, p), theta(t) after iteration t
    theta_bar: np.ndarray  # (T, p)
    grad_norm: np.ndarray  # (T,)
    risk: np.ndarray | None = None  # F(theta_bar(t)) when recorded


def centralized_da(obj: PairwiseObjective, sched: StepSchedule, psi: ProjectionSpec, T: int,
                   record_risk: bool = True) -> CentralTrajectory:
    """Dual averaging with the exact gradient of the full risk."""
    return _central(obj, sched, psi, T, lambda t, theta: obj.full_grad(theta), record_risk)


def stochastic_da(obj: PairwiseObjective, sched: StepSchedule, psi: ProjectionSpec, T: int, seed: int = 0,
                  record_risk: bool = True) -> CentralTrajectory:
    """Dual averaging with the gradient of one uniformly drawn pair ``(I_t, J_t)``."""
    pairs = trial_rng(seed, 0).integers(0, obj.n, size=(T, 2))
    return _central(obj, sched, psi, T,
                    lambda t, theta: obj.pair_grad(theta, pairs[t - 1, 0], pairs[t - 1, 1]), record_risk)


def _central(obj, sched, psi, T, grad_fn, record_risk) -> CentralTrajectory:
    if T < 1:
        raise ParameterError("T must be >= 1")
    p = obj.dim
    z = np.zeros(p)
    theta = np.zeros(p)
    theta_bar = np.zeros(p)
    thetas = np.empty((T, p))
    bars = np.empty((T, p))
    norms = np.empty(T)
    for t in range(1, T + 1):
        g = grad_fn(t, theta)
        norms[t - 1] = np.linalg.norm(g)
        z = z + g
        theta = primal(z, t, sched, psi)
        theta_bar = (1 - 1 / t) * theta_bar + theta / t
        thetas[t - 1] = theta
        bars[t - 1] = theta_bar
    risk = obj.risk(bars) if record_risk else None
    return CentralTrajectory(thetas, bars, norms, risk)


def distributed_da(w: np.ndarray, grad_fn: Callable[[int, np.ndarray], np.ndarray], sched: StepSchedule,
                   psi: ProjectionSpec, T: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Dual averaging for separable objectives with a fixed doubly stochastic mixing matrix.

    ``grad_fn(t, theta)`` returns the ``(n, dim)`` stack of local gradients.
    Returns the final per-node ``theta`` and running averages ``theta_bar``.
    """
    n = w.shape[0]
    Z = np.zeros((n, dim))
    theta = np.zeros((n, dim))
    theta_bar = np.zeros((n, dim))
    for t in range(1, T + 1):
        Z = w @ Z + grad_fn(t, theta)
        theta = primal(Z, t, sched, psi)
        theta_bar = (1 - 1 / t) * theta_bar + theta / t
    return theta, theta_bar


# ---------------------------------------------------------------------------
# gossip dual averaging


@dataclass
class BiasRecord:
    t: int
    eps_hat: np.ndarray
    omega_hat: np.ndarray
    zhat: np.ndarray

    @property
    def inner(self) -> float:
        return float(self.eps_hat @ self.omega_hat)


@dataclass
class OptimizerState:
    """Per-node state of a batch of runs; every array has a leading run axis."""

    z: np.ndarray
    theta: np.ndarray
    theta_bar: np.ndarray
    aux: np.ndarray
    m: np.ndarray
    p: np.ndarray
    t: int = 0


@dataclass
class GossipTrajectory:
    """Recorded running averages ``theta_bar`` with shape ``(R, S, n, p)``.

    ``bias_inner`` (``(R, S)``) holds the bias term at recorded steps when
    requested; the ``eps_hat``/``omega_hat``/``zhat`` arrays are ``(R, S, p)``.
    """

    mode: str
    t: np.ndarray
    theta_bar: np.ndarray
    seeds: list[int]
    final: OptimizerState
    eps_hat: np.ndarray | None = None
    omega_hat: np.ndarray | None = None
    zhat: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def bias_inner(self) -> np.ndarray | None:
        if self.eps_hat is None:
            return None
        return np.einsum("rsp,rsp->rs", self.eps_hat, self.omega_hat)

    def bias_records(self, run: int = 0) -> list[BiasRecord]:
        if self.eps_hat is None:
            return []
        return [BiasRecord(int(t), self.eps_hat[run, s], self.omega_hat[run, s], self.zhat[run, s])
                for s, t in enumerate(self.t)]

    def node_risk(self, obj: PairwiseObjective) -> np.ndarray:
        """``F(theta_bar_i(t))`` with shape ``(R, S, n)``."""
        return obj.risk(self.theta_bar)


MODES = ("sync", "async", "baseline")


def bias_term(theta: np.ndarray, aux: np.ndarray, obj: PairwiseObjective, z: np.ndarray,
              t: float, sched: StepSchedule, psi: ProjectionSpec) -> BiasRecord:
    """Average gradient bias across the network and the averaged iterate.

    ``theta`` is ``(n, p)`` (values used for the gradients), ``aux`` the
    auxiliary indices at the same instant and ``z`` the ``(n, p)`` dual
    variables whose mean is projected.
    """
    eps, omega, zhat = _bias(theta[None], aux[None], obj, z[None], t, sched, psi)
    return BiasRecord(int(t), eps[0], omega[0], zhat[0])


def _bias(theta, aux, obj, z, t, sched, psi):
    nodes = np.arange(obj.n)[None, :]
    local = obj.pair_grad(theta, nodes, aux)
    eps = (local - obj.partial_grads(theta)).mean(axis=1)
    zhat = z.mean(axis=1)
    omega = primal(zhat, t, sched, psi)
    return eps, omega, zhat


def _lookup_forced(g: Graph, forced_edges) -> list[int]:
    lookup = {tuple(map(int, e)): idx for idx, e in enumerate(g.edges)}
    return [lookup[(min(a, b), max(a, b))] for a, b in forced_edges]


def gossip_da_batch(
    g: Graph,
    obj: PairwiseObjective,
    sched: StepSchedule,
    psi: ProjectionSpec,
    T: int,
    seeds: Sequence[int],
    mode: str = "sync",
    record_every: int = 1,
    record_bias: bool = False,
    forced_edges=None,
    steps: Sequence[int] | None = None,
) -> GossipTrajectory:
    """Run gossip dual averaging for every seed in ``seeds`` at once.

    ``mode`` is ``sync`` (all nodes step each iteration), ``async`` (only the
    two endpoints of the drawn edge step, on local clocks) or ``baseline``
    (sync, but each node pairs with a fresh uniformly drawn observation).
    For ``async``, ``t`` counts global edge events.
    """
    if mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}; expected one of {MODES}")
    if T < 1:
        raise ParameterError("T must be >= 1")
    if g.n != obj.n:
        raise ParameterError(f"graph has {g.n} nodes but the dataset has {obj.n} points")
    if g.n > 1:
        require_gossip_graph(g)
    if record_bias and mode == "async":
        raise ParameterError("bias recording is defined for the synchronous iteration only")
    seeds = [int(s) for s in seeds]
    R, n, p = len(seeds), obj.n, obj.dim
    m_edges = max(g.n_edges, 1)
    draws = np.empty((R, T), dtype=np.int64)
    partners = np.empty((R, T, n), dtype=np.int64) if mode == "baseline" else None
    for r, s in enumerate(seeds):
        rng = trial_rng(s, 0)
        draws[r] = rng.integers(0, m_edges, size=T)
        if partners is not None:
            partners[r] = rng.integers(0, n, size=(T, n))
    if forced_edges is not None:
        for t, idx in enumerate(_lookup_forced(g, forced_edges)):
            draws[:, t] = idx
    steps = record_steps(T, record_every) if steps is None else np.asarray(steps, dtype=np.int64)
    slot = {int(s): k for k, s in enumerate(steps)}
    S = len(steps)

    ends = g.edges if g.n_edges else np.zeros((1, 2), dtype=np.int64)
    rows = np.arange(R)
    nodes = np.arange(n)[None, :]
    p_node = g.degrees / m_edges if g.n_edges else np.ones(n)
    st = OptimizerState(
        z=np.zeros((R, n, p)), theta=np.zeros((R, n, p)), theta_bar=np.zeros((R, n, p)),
        aux=np.tile(np.arange(n), (R, 1)), m=np.zeros((R, n)), p=np.broadcast_to(p_node, (R, n)).copy(),
    )
    out = np.empty((R, S, n, p))
    eps_out = np.empty((R, S, p)) if record_bias else None
    omega_out = np.empty((R, S, p)) if record_bias else None
    zhat_out = np.empty((R, S, p)) if record_bias else None

    for t in range(1, T + 1):
        e = ends[draws[:, t - 1]]
        i, j = e[:, 0], e[:, 1]
        if g.n_edges == 0:
            i = j = np.zeros(R, dtype=np.int64)
        if mode == "async":
            _async_event(st, obj, sched, psi, rows, i, j)
        else:
            avg = 0.5 * (st.z[rows, i] + st.z[rows, j])
            st.z[rows, i] = avg
            st.z[rows, j] = avg
            st.aux[rows, i], st.aux[rows, j] = st.aux[rows, j], st.aux[rows, i].copy()
            partner = st.aux if mode == "sync" else partners[:, t - 1]
            if record_bias and t in slot:
                eps, omega, zhat = _bias(st.theta, partner, obj, st.z, t, sched, psi)
                eps_out[:, slot[t]] = eps
                omega_out[:, slot[t]] = omega
                zhat_out[:, slot[t]] = zhat
            st.z += obj.pair_grad(st.theta, nodes, partner)
            st.theta = primal(st.z, t, sched, psi)
            st.theta_bar = (1 - 1 / t) * st.theta_bar + st.theta / t
        st.t = t
        if t in slot:
            out[:, slot[t]] = st.theta_bar
    return GossipTrajectory(mode=mode, t=steps, theta_bar=out, seeds=seeds, final=st,
                            eps_hat=eps_out, omega_hat=omega_out, zhat=zhat_out)


def _async_event(st: OptimizerState, obj, sched, psi, rows, i, j) -> None:
    st.aux[rows, i], st.aux[rows, j] = st.aux[rows, j], st.aux[rows, i].copy()
    avg = 0.5 * (st.z[rows, i] + st.z[rows, j])
    for k in (i, j):
        pk = st.p[rows, k]
        grad = obj.pair_grad(st.theta[rows, k], k, st.aux[rows, k])
        zk = avg + grad / pk[:, None]
        st.z[rows, k] = zk
        st.m[rows, k] += 1.0 / pk
        mk = st.m[rows, k]
        theta_k = primal(zk, mk, sched, psi)
        st.theta[rows, k] = theta_k
        w = np.minimum(1.0, 1.0 / (mk * pk))[:, None]
        st.theta_bar[rows, k] = (1 - w) * st.theta_bar[rows, k] + w * theta_k


def _single(mode, g, obj, sched, psi, T, seed, record_every, record_bias=False, forced_edges=None):
    return gossip_da_batch(g, obj, sched, psi, T, [seed], mode=mode, record_every=record_every,
                           record_bias=record_bias, forced_edges=forced_edges)


def gossip_pairwise_da_sync(g: Graph, obj: PairwiseObjective, sched: StepSchedule, psi: ProjectionSpec,
                            T: int, seed: int = 0, record_bias: bool = False, record_every: int = 1,
                            forced_edges=None) -> GossipTrajectory:
    """Synchronous gossip dual averaging: mix and swap along one edge, then every node takes a step."""
    return _single("sync", g, obj, sched, psi, T, seed, record_every, record_bias, forced_edges)


def gossip_pairwise_da_async(g: Graph, obj: PairwiseObjective, sched: StepSchedule, psi: ProjectionSpec,
                             T: int, seed: int = 0, record_every: int = 1,
                             forced_edges=None) -> GossipTrajectory:
    """Asynchronous gossip dual averaging driven by ``T`` edge events.

    Node ``k`` is touched with probability ``p_k = d_k / |E|``; its gradient
    is weighted by ``1 / p_k`` and its clock estimate ``m_k`` replaces the
    global time in the step size and the running average.
    """
    return _single("async", g, obj, sched, psi, T, seed, record_every, False, forced_edges)


def unbiased_baseline_sync(g: Graph, obj: PairwiseObjective, sched: StepSchedule, psi: ProjectionSpec,
                           T: int, seed: int = 0, record_bias: bool = False, record_every: int = 1,
                           forced_edges=None) -> GossipTrajectory:
    """Synchronous variant where each node pairs with a uniformly random observation every step."""
    return _single("baseline", g, obj, sched, psi, T, seed, record_every, record_bias, forced_edges)
