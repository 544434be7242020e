"""Communication graphs: generators, Laplacian spectrum, gossip transitions, distances."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from pairgossip.errors import NumericError, ParameterError, PreconditionError
from pairgossip.rng import trial_rng

UNREACHABLE = -1


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph on nodes ``0..n-1``.

    ``edges`` is an ``(m, 2)`` integer array with ``i < j`` in every row, in
    the order edge draws index into.
    """

    n: int
    edges: np.ndarray
    name: str = ""
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 1:
            raise ParameterError("graph needs at least one node")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ParameterError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ParameterError("self-loops are not allowed")
        edges = np.sort(edges, axis=1)
        if len({(int(a), int(b)) for a, b in edges}) != len(edges):
            raise ParameterError("duplicate edges are not allowed")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_pairs(cls, n: int, pairs, name: str = "", notes=()) -> "Graph":
        """Build a graph from unordered pairs, canonicalising to ``i < j`` and sorting."""
        canon = sorted({(min(int(a), int(b)), max(int(a), int(b))) for a, b in pairs})
        return cls(n, np.array(canon, dtype=np.int64).reshape(-1, 2), name=name, notes=tuple(notes))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int64)
        a[self.edges[:, 0], self.edges[:, 1]] = 1
        a[self.edges[:, 1], self.edges[:, 0]] = 1
        a.setflags(write=False)
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        d = self.adjacency.sum(axis=1)
        d.setflags(write=False)
        return d

    @cached_property
    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for a, b in self.edges:
            nbrs[a].append(int(b))
            nbrs[b].append(int(a))
        return nbrs

    @cached_property
    def laplacian(self) -> np.ndarray:
        lap = np.diag(self.degrees).astype(float) - self.adjacency
        lap.setflags(write=False)
        return lap

    @cached_property
    def spectrum(self) -> "Spectrum":
        return spectrum(self)

    @cached_property
    def distance_table(self) -> "DistanceTable":
        return distances(self)

    def is_connected(self) -> bool:
        return is_connected(self)

    def is_bipartite(self) -> bool:
        return is_bipartite(self)

    def is_complete(self) -> bool:
        return self.n_edges == self.n * (self.n - 1) // 2

    def __repr__(self) -> str:
        label = self.name or "Graph"
        return f"<{label}: n={self.n}, |E|={self.n_edges}>"


@dataclass(frozen=True)
class Spectrum:
    laplacian: np.ndarray
    eigenvalues: np.ndarray  # ascending

    @property
    def spectral_gap(self) -> float:
        return float(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else 0.0

    @property
    def tol(self) -> float:
        return 1e-9 * max(float(self.eigenvalues[-1]), 1.0)

    @property
    def connected(self) -> bool:
        return self.spectral_gap > self.tol


@dataclass(frozen=True)
class TransitionMatrix:
    alpha: float
    w: np.ndarray
    lambda2: float  # second largest eigenvalue of w


@dataclass(frozen=True)
class DistanceTable:
    dist: np.ndarray  # UNREACHABLE marks disconnected pairs

    @property
    def diameter(self) -> int:
        finite = self.dist[self.dist != UNREACHABLE]
        return int(finite.max()) if finite.size else 0


# ---------------------------------------------------------------------------
# generators


def complete(n: int) -> Graph:
    if n < 2:
        raise ParameterError("complete graph needs n >= 2")
    i, j = np.triu_indices(n, k=1)
    return Graph(n, np.column_stack([i, j]), name=f"complete:{n}")


def cycle(n: int) -> Graph:
    if n < 3:
        raise ParameterError("cycle needs n >= 3")
    return Graph.from_pairs(n, [(i, (i + 1) % n) for i in range(n)], name=f"cycle:{n}")


def path(n: int) -> Graph:
    if n < 2:
        raise ParameterError("path needs n >= 2")
    return Graph.from_pairs(n, [(i, i + 1) for i in range(n - 1)], name=f"path:{n}")


def grid2d(rows: int, cols: int, wrap: bool = False) -> Graph:
    """Rows x cols lattice, node id ``r * cols + c``; ``wrap`` makes it a torus."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ParameterError("grid needs rows*cols >= 2")
    pairs = set()
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            for rr, cc in ((r + 1, c), (r, c + 1)):
                if wrap:
                    rr, cc = rr % rows, cc % cols
                elif rr >= rows or cc >= cols:
                    continue
                v = rr * cols + cc
                if u != v:
                    pairs.add((min(u, v), max(u, v)))
    suffix = ":wrap" if wrap else ""
    return Graph.from_pairs(rows * cols, pairs, name=f"grid2d:{rows}x{cols}{suffix}")


def _ws_once(n: int, k: int, p: float, rng: np.random.Generator) -> set[tuple[int, int]]:
    adj = [set() for _ in range(n)]
    for u in range(n):
        for off in range(1, k // 2 + 1):
            v = (u + off) % n
            adj[u].add(v)
            adj[v].add(u)
    # rewire each lattice edge (u, u+off) with probability p, as in the original model
    for off in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + off) % n
            if v not in adj[u] or rng.random() >= p:
                continue
            if len(adj[u]) >= n - 1:
                continue
            w = int(rng.integers(n))
            while w == u or w in adj[u]:
                w = int(rng.integers(n))
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    return {(min(u, v), max(u, v)) for u in range(n) for v in adj[u]}


def watts_strogatz(n: int, k: int, p: float, seed: int, max_attempts: int = 100) -> Graph:
    """Small-world graph: ring lattice of degree ``k`` with edges rewired w.p. ``p``.

    Odd ``k`` is rounded up to the next even integer (recorded in ``notes``).
    If the result is disconnected the seed is incremented and the draw repeated.
    """
    notes = []
    if not 0 < p < 1:
        raise ParameterError("Watts-Strogatz needs 0 < p < 1")
    if k < 2:
        raise ParameterError("Watts-Strogatz needs k >= 2")
    if k % 2:
        notes.append(f"k={k} rounded up to {k + 1}")
        k += 1
    if n <= k:
        raise ParameterError(f"Watts-Strogatz needs n > k (n={n}, k={k})")
    for attempt in range(max_attempts):
        pairs = _ws_once(n, k, p, trial_rng(seed + attempt, 0))
        g = Graph.from_pairs(n, pairs, name=f"ws:{n}:{k}:{p}:{seed}")
        if is_connected(g):
            if attempt:
                notes.append(f"seed {seed} disconnected; used seed {seed + attempt}")
            return Graph(g.n, g.edges, name=g.name, notes=tuple(notes))
    raise NumericError(f"no connected Watts-Strogatz graph after {max_attempts} seeds")


def erdos_renyi_connected(n: int, p: float, seed: int, max_attempts: int = 1000) -> Graph:
    """Connected G(n, p) sample, redrawn until connected. Used for randomized checks."""
    for attempt in range(max_attempts):
        rng = trial_rng(seed, attempt)
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(len(iu)) < p
        g = Graph(n, np.column_stack([iu[keep], ju[keep]]), name=f"gnp:{n}:{p}:{seed}")
        if is_connected(g):
            return g
    raise NumericError("could not draw a connected random graph")


def read_edge_list(path: str | Path, n: int | None = None) -> Graph:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParameterError(f"{path}:{lineno}: expected 'i j', got {line!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise ParameterError(f"{path}:{lineno}: non-integer node id") from exc
    if not pairs:
        raise ParameterError(f"{path}: empty edge list")
    size = n if n is not None else 1 + max(max(a, b) for a, b in pairs)
    return Graph.from_pairs(size, pairs, name=f"file:{path}")


def generate(descriptor: str) -> Graph:
    """Build a graph from a topology descriptor.

    Grammar: ``complete:N``, ``cycle:N``, ``path:N``, ``grid2d:RxC[:wrap]``,
    ``grid:N`` (torus of the most square factorisation, 3x233 for 699),
    ``ws:N:K:P:SEED`` and ``file:PATH``.
    """
    kind, _, rest = descriptor.strip().partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "complete":
            return complete(int(args[0]))
        if kind == "cycle":
            return cycle(int(args[0]))
        if kind == "path":
            return path(int(args[0]))
        if kind == "grid2d":
            rows, cols = (int(v) for v in args[0].lower().split("x"))
            wrap = len(args) > 1 and args[1] == "wrap"
            return grid2d(rows, cols, wrap=wrap)
        if kind == "grid":
            n = int(args[0])
            rows = max(r for r in range(1, math.isqrt(n) + 1) if n % r == 0)
            return grid2d(rows, n // rows, wrap=True)
        if kind in ("ws", "watts_strogatz"):
            n, k, p, seed = int(args[0]), int(args[1]), float(args[2]), int(args[3])
            return watts_strogatz(n, k, p, seed)
        if kind == "file":
            return read_edge_list(rest)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"malformed topology descriptor {descriptor!r}") from exc
    raise ParameterError(f"unknown topology kind {kind!r} in {descriptor!r}")


# ---------------------------------------------------------------------------
# spectral machinery


def jacobi_eigvalsh(a: np.ndarray, rtol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.

    Quadratic cost per sweep; intended for small matrices and as a
    cross-check of the LAPACK path.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError("Jacobi eigensolver needs a square matrix")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(scale, 1.0)):
        raise ParameterError("Jacobi eigensolver needs a symmetric matrix")
    if n < 2 or scale == 0.0:
        return np.sort(np.diag(a))
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= rtol * scale:
            return np.sort(np.diag(a))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
    raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")


def spectrum(g: Graph, method: str = "lapack") -> Spectrum:
    lap = g.laplacian
    if method == "jacobi":
        vals = jacobi_eigvalsh(lap)
    elif method == "lapack":
        try:
            vals = np.linalg.eigvalsh(lap)
        except np.linalg.LinAlgError as exc:
            raise NumericError(str(exc)) from exc
    else:
        raise ParameterError(f"unknown eigensolver {method!r}")
    return Spectrum(laplacian=lap, eigenvalues=np.sort(vals))


def spectral_gap(g: Graph) -> float:
    return g.spectrum.spectral_gap


def transition(g: Graph, alpha: float) -> TransitionMatrix:
    """Expected one-step gossip transition ``I - L / (alpha |E|)``.

    ``alpha = 1`` describes swapping auxiliary observations, ``alpha = 2``
    pairwise averaging.
    """
    if alpha < 1:
        raise ParameterError("alpha must be >= 1")
    if not is_connected(g):
        raise PreconditionError("transition matrix requires a connected graph")
    m = g.n_edges
    w = np.eye(g.n) - g.laplacian / (alpha * m)
    lam2 = 1.0 - g.spectrum.spectral_gap / (alpha * m)
    return TransitionMatrix(alpha=float(alpha), w=w, lambda2=lam2)


def tensor_with_complete(g: Graph, k: int, link_virtual: bool = False) -> Graph:
    """Replace every node by ``k`` virtual copies, node ``(i, a)`` -> ``a * n + i``.

    Copies of ``i`` and ``j`` are all linked whenever ``i ~ j``; the adjacency
    is ``ones(k, k) kron A`` and ``|E| = k^2 |E_G|``. ``link_virtual`` also
    joins the ``k`` copies of each node to one another.
    """
    if k < 2:
        raise ParameterError("k must be >= 2")
    if not is_connected(g):
        raise PreconditionError("tensor product requires a connected graph")
    if is_bipartite(g):
        raise PreconditionError("tensor product gap identity requires a non-bipartite graph")
    if g.is_complete():
        raise PreconditionError("tensor product gap identity requires a non-complete graph")
    n = g.n
    pairs = []
    for i, j in g.edges:
        for a in range(k):
            for b in range(k):
                pairs.append((a * n + int(i), b * n + int(j)))
    if link_virtual:
        for i in range(n):
            for a in range(k):
                for b in range(a + 1, k):
                    pairs.append((a * n + i, b * n + i))
    return Graph.from_pairs(k * n, pairs, name=f"{g.name or 'G'}(x)K{k}")


# ---------------------------------------------------------------------------
# distances and flags


def _bfs(g: Graph, source: int) -> np.ndarray:
    dist = np.full(g.n, UNREACHABLE, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    nbrs = g.neighbors
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if dist[v] == UNREACHABLE:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def distances(g: Graph) -> DistanceTable:
    """All-pairs hop counts (unweighted shortest paths); ``UNREACHABLE`` (-1) when disconnected."""
    adj = csr_matrix((np.ones(g.n_edges), (g.edges[:, 0], g.edges[:, 1])), shape=(g.n, g.n))
    raw = shortest_path(adj, method="D", directed=False, unweighted=True)
    dist = np.where(np.isinf(raw), UNREACHABLE, raw).astype(np.int64)
    dist.setflags(write=False)
    return DistanceTable(dist)


def is_connected(g: Graph) -> bool:
    return bool(np.all(_bfs(g, 0) != UNREACHABLE))


def is_bipartite(g: Graph) -> bool:
    color = np.full(g.n, -1, dtype=np.int64)
    nbrs = g.neighbors
    for start in range(g.n):
        if color[start] >= 0:
            continue
        color[start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    return False
    return True


def require_gossip_graph(g: Graph) -> None:
    """Raise unless ``g`` is connected and non-bipartite."""
    if g.n < 2 or g.n_edges == 0 or not is_connected(g):
        raise PreconditionError(f"{g!r} is not connected")
    if is_bipartite(g):
        raise PreconditionError(f"{g!r} is bipartite; gossip protocols need a non-bipartite graph")


def spectral_report(g: Graph) -> dict:
    sp = g.spectrum
    return {
        "topology": g.name,
        "n": g.n,
        "n_edges": g.n_edges,
        "spectral_gap": sp.spectral_gap,
        "gap_over_edges": sp.spectral_gap / g.n_edges if g.n_edges else 0.0,
        "lambda_max": float(sp.eigenvalues[-1]),
        "connected": is_connected(g),
        "bipartite": is_bipartite(g),
        "diameter": g.distance_table.diameter,
        "notes": list(g.notes),
    }
