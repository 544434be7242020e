"""Acceptance criteria 1 to 13.

Each test records its verdict before asserting, so the terminal summary
shows one PASS/FAIL line per criterion even when an assertion fails.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import VERDICTS
from pairgossip.bounds import (
    delta_tilde, hard_instance, lower_bound, rate_bound_corollary, worst_pair, centralized_bound,
)
from pairgossip.cli import main
from pairgossip.data import auc_toy
from pairgossip.dualavg import (
    ProjectionSpec, StepSchedule, centralized_da, experiment_projection, gossip_da_batch, project,
)
from pairgossip.estimation import (
    bound_gosta_deviation, bound_gosta_expectation, bound_u1, bound_u2, brute_force_expectation,
    exact_expectation, monte_carlo_estimation,
)
from pairgossip.graph import (
    complete, cycle, erdos_renyi_connected, generate, is_bipartite, path, spectral_gap, tensor_with_complete,
)
from pairgossip.losses import AucLogistic, MetricHinge, QuadraticPair, RankingLogistic, ZeroObjective, grad_check
from pairgossip.pairwise import Dataset, kernel_matrix, product_kernel
from pairgossip.rng import trial_rng


def check(cid: int, name: str, ok: bool, info: str = "") -> bool:
    VERDICTS[cid].append((name, bool(ok), info))
    print(f"criterion {cid} [{name}]: {'PASS' if ok else 'FAIL'} {info}")
    return bool(ok)


def estimation_graphs():
    kms = {
        "K3": (complete(3), kernel_matrix(product_kernel(), np.array([1.0, 2.0, 3.0]))),
        "C5": (cycle(5), kernel_matrix(product_kernel(), np.array([1.0, -2.0, 0.5, 3.0, 1.5]))),
    }
    g7 = erdos_renyi_connected(7, 0.4, seed=0)
    kms["ER7"] = (g7, kernel_matrix(product_kernel(), np.linspace(-1.0, 2.0, 7)))
    return kms


# ---------------------------------------------------------------------------
# 1. spectral constant


def test_c1_spectral_constant_printed_value():
    start = time.perf_counter()
    g = complete(699)
    ratio = spectral_gap(g) / g.n_edges
    wall = time.perf_counter() - start
    rel = abs(ratio - 2.86e-3) / 2.86e-3
    ok = check(1, "printed 2.86e-3 within 1e-4 rel", rel <= 1e-4, f"ratio={ratio:.6e}, rel diff={rel:.2e}")
    check(1, "runtime < 60 s", wall < 60, f"{wall:.2f} s")
    assert wall < 60
    assert ok, f"gap/|E| = {ratio!r} differs from 2.86e-3 by {rel:.2e} relative"


def test_c1_spectral_constant_closed_form():
    g = complete(699)
    ratio = spectral_gap(g) / g.n_edges
    ok = check(1, "equals n/(n(n-1)/2) = 2/698", abs(ratio - 2 / 698) <= 1e-12 * 2 / 698, f"{ratio!r}")
    assert ok
    # three significant digits, correctly rounded
    assert f"{ratio:.2e}" == "2.87e-03"


# ---------------------------------------------------------------------------
# 2. oracle chain


def test_c2_oracle_chain():
    start = time.perf_counter()
    worst_exact, worst_z = 0.0, 0.0
    for name in ("K3", "C5"):
        g, km = estimation_graphs()[name]
        for protocol in ("gosta", "u1", "u2"):
            T_brute = 4 if protocol != "u2" or g.n_edges <= 3 else 2
            ex = exact_expectation(g, km, 50, protocol)
            brute = brute_force_expectation(g, km, T_brute, protocol)
            worst_exact = max(worst_exact, float(np.abs(ex[: T_brute + 1] - brute).max()))
            mc = monte_carlo_estimation(g, km, 50, protocol, 10_000, base_seed=1000)
            se = mc["z"].stderr
            z = np.abs(mc["z"].mean - ex)
            worst_z = max(worst_z, float(np.max(np.where(se > 0, z / np.where(se > 0, se, 1), np.where(z > 1e-12, np.inf, 0)))))
    wall = time.perf_counter() - start
    ok1 = check(2, "enumeration == exact", worst_exact <= 1e-12, f"max diff {worst_exact:.1e}")
    ok2 = check(2, "MC within 4 stderr", worst_z <= 4, f"max |dev|/stderr {worst_z:.2f}")
    ok3 = check(2, "runtime < 30 s", wall < 30, f"{wall:.1f} s")
    assert ok1 and ok2 and ok3


# ---------------------------------------------------------------------------
# 3 and 4. bound dominance and O(1/t) decay


def test_c3_bound_dominance():
    start = time.perf_counter()
    T = 200
    t = np.arange(1, T + 1)
    failures = []
    for name, (g, km) in estimation_graphs().items():
        ex = exact_expectation(g, km, T, "gosta")[1:]
        if np.any(np.linalg.norm(ex - km.u_full, axis=1) > bound_gosta_expectation(g, km, t)):
            failures.append(f"{name} gosta expectation")
        mc = monte_carlo_estimation(g, km, T, "gosta", 2000, base_seed=7, steps=t)
        if np.any(mc["err"].mean > bound_gosta_deviation(g, km, t) + 3 * mc["err"].stderr):
            failures.append(f"{name} gosta deviation")
        e1 = exact_expectation(g, km, T, "u1")[1:]
        if np.any(np.abs(e1 - km.h_bar) > bound_u1(g, km, t)):
            failures.append(f"{name} u1")
        e2 = exact_expectation(g, km, T, "u2")[1:]
        if np.any(np.linalg.norm(e2 - km.u_full, axis=1) > bound_u2(g, km, t)):
            failures.append(f"{name} u2")
    wall = time.perf_counter() - start
    ok = check(3, "all bounds hold for t=1..200", not failures, ", ".join(failures) or "K3, C5, ER7")
    ok_t = check(3, "runtime < 2 min", wall < 120, f"{wall:.1f} s")
    assert ok and ok_t


def test_c4_expectation_decay():
    t = np.arange(10, 201)
    ratios = {}
    for name, (g, km) in estimation_graphs().items():
        ex = exact_expectation(g, km, 200, "gosta")[10:]
        scaled = t * np.linalg.norm(ex - km.u_full, axis=1)
        ratios[name] = float(scaled.max() / scaled.min())
    worst = max(ratios.values())
    ok = check(4, "max/min of t*err over [10, 200] <= 10", worst <= 10,
               ", ".join(f"{k}={v:.2f}" for k, v in ratios.items()))
    assert ok


# ---------------------------------------------------------------------------
# 5. tensor product gap


def test_c5_tensor_gap():
    worst, used, seed = 0.0, 0, 0
    rng = trial_rng(55)
    while used < 10:
        g = erdos_renyi_connected(int(rng.integers(5, 11)), 0.45, seed=seed)
        seed += 1
        if is_bipartite(g) or g.is_complete():
            continue
        k = int(rng.integers(2, 5))
        worst = max(worst, abs(spectral_gap(tensor_with_complete(g, k)) - k * spectral_gap(g)))
        used += 1
    ok = check(5, "gap(G x K_k) = k gap(G) on 10 graphs", worst <= 1e-9, f"max diff {worst:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 6. dual averaging correctness


def test_c6_dual_averaging():
    data = Dataset(trial_rng(6).normal(size=(10, 3)))
    D = 4.0
    obj = QuadraticPair(data, radius=D)
    sched = StepSchedule(0.5)
    tr = centralized_da(obj, sched, ProjectionSpec("ball", D=D), 1000)
    star = obj.minimizer
    gaps = tr.risk - obj.risk(star)
    Ts = np.arange(1, 1001)
    bounds = np.array([centralized_bound(int(T), sched, obj.lipschitz, float(np.linalg.norm(star))) for T in Ts])
    ok1 = check(6, "centralized bound at every T <= 1000", bool(np.all(gaps[1:] <= bounds[1:])),
                f"min slack {float(np.min(bounds[1:] - gaps[1:])):.3e}")

    auc_obj = AucLogistic(auc_toy(12, dim=3, seed=6))
    theta = np.array([0.3, -0.2, 0.5])
    rng = trial_rng(66)
    i = rng.integers(0, 12, size=100_000)
    j = rng.integers(0, 12, size=100_000)
    gs = auc_obj.pair_grad(theta, i, j)
    dev = np.abs(gs.mean(axis=0) - auc_obj.full_grad(theta)) / (gs.std(axis=0) / math.sqrt(len(gs)))
    ok2 = check(6, "stochastic gradient unbiased", bool(np.all(dev <= 4)), f"max |dev|/stderr {dev.max():.2f}")

    worst = -np.inf
    for psi in (ProjectionSpec(), ProjectionSpec("ball", D=1.0), ProjectionSpec("psd", d=3)):
        z1 = rng.normal(scale=3, size=(1000, 9))
        z2 = rng.normal(scale=3, size=(1000, 9))
        ts = rng.integers(1, 100, size=1000)
        lhs = np.linalg.norm(project(z1, ts, sched, psi) - project(z2, ts, sched, psi), axis=-1)
        worst = max(worst, float(np.max(lhs - sched.gamma(ts) * np.linalg.norm(z1 - z2, axis=-1))))
    ok3 = check(6, "projection gamma(t)-Lipschitz", worst <= 1e-10, f"max excess {worst:.1e}")
    assert ok1 and ok2 and ok3


# ---------------------------------------------------------------------------
# 7, 8, 10. optimization on K_20


def k20_problem():
    obj = AucLogistic(auc_toy(20, 2, 0.5, seed=0))
    central = centralized_da(obj, StepSchedule(1.0), ProjectionSpec(), 100_000, record_risk=False)
    cands = [central.theta[-1], central.theta_bar[-1]]
    res = minimize(lambda th: float(obj.risk(th)), cands[0], jac=lambda th: obj.full_grad(th), method="BFGS",
                   options={"gtol": 1e-12})
    cands.append(res.x)
    star = min(cands, key=lambda th: float(obj.risk(th)))
    return obj, star, float(obj.risk(star))


@pytest.fixture(scope="module")
def k20():
    return k20_problem()


def test_c7_optimization_bound(k20):
    start = time.perf_counter()
    obj, star, fstar = k20
    g = complete(20)
    T = 2000
    tr = gossip_da_batch(g, obj, StepSchedule(1.0), experiment_projection(), T, range(50), record_every=T)
    excess = obj.risk(tr.theta_bar[:, -1]) - fstar  # (runs, nodes)
    worst_node = float(excess.mean(axis=0).max())
    bound = rate_bound_corollary(T, 1.0, g, obj.lipschitz, float(np.linalg.norm(star)))
    wall = time.perf_counter() - start
    ok = check(7, "MC excess risk <= corollary", worst_node <= bound, f"excess {worst_node:.4g} vs bound {bound:.4g}")
    ok_t = check(7, "runtime < 3 min", wall < 180, f"{wall:.1f} s")
    assert ok and ok_t


def test_c8_bias_and_baseline(k20):
    obj, _, fstar = k20
    g = complete(20)
    T, sched = 1000, StepSchedule(1e-3)
    sync = gossip_da_batch(g, obj, sched, experiment_projection(), T, range(50), record_every=T, record_bias=True)
    base = gossip_da_batch(g, obj, sched, experiment_projection(), T, range(50), mode="baseline", record_every=T)
    bias = float(np.abs(sync.bias_inner[:, -1]).mean())
    risk_s = obj.risk(sync.theta_bar[:, -1]).mean(axis=1)
    risk_b = obj.risk(base.theta_bar[:, -1]).mean(axis=1)
    excess = float(risk_s.mean() - fstar)
    ok1 = check(8, "mean |bias| <= 0.1 x excess", bias <= 0.1 * excess, f"{bias:.3g} vs {0.1 * excess:.3g}")
    se = math.sqrt(risk_s.var() / len(risk_s) + risk_b.var() / len(risk_b))
    z = abs(risk_s.mean() - risk_b.mean()) / se
    ok2 = check(8, "sync vs baseline within 3 stderr", z <= 3, f"{z:.2f} combined stderr")
    assert ok1 and ok2


# ---------------------------------------------------------------------------
# 9. topology ordering


def test_c9_topology_ordering():
    obj = AucLogistic(auc_toy(100, 2, 0.5, seed=1))
    T = 2000
    stats = {}
    for topo in ("complete:100", "ws:100:5:0.3:7", "grid2d:4x25:wrap"):
        tr = gossip_da_batch(generate(topo), obj, StepSchedule(3.0), experiment_projection(), T, range(50),
                             record_every=T)
        risk = obj.risk(tr.theta_bar[:, -1]).mean(axis=1)
        stats[topo] = (float(risk.mean()), float(risk.std() / math.sqrt(len(risk))))
    (mc, sc), (mw, sw), (mg, sg) = stats.values()
    m1 = (mw - mc) / math.hypot(sc, sw)
    m2 = (mg - mw) / math.hypot(sw, sg)
    info = ", ".join(f"{k}={m:.5f}+-{s:.5f}" for k, (m, s) in stats.items())
    ok = check(9, "complete < WS < torus by 3 stderr", m1 >= 3 and m2 >= 3, f"{info}; margins {m1:.1f}, {m2:.1f}")
    assert ok


# ---------------------------------------------------------------------------
# 10. asynchronous clocks


def test_c10_async(k20):
    devs = []
    for g in (complete(3), cycle(5)):
        obj = ZeroObjective(Dataset(np.zeros((g.n, 1))))
        tr = gossip_da_batch(g, obj, StepSchedule(), ProjectionSpec(), 30, range(10_000), mode="async")
        m = tr.final.m
        devs.append(float(np.max(np.abs(m.mean(axis=0) - 30) / (m.std(axis=0) / 100))))
    ok1 = check(10, "E[m_k(30)] = 30 within 4 stderr", max(devs) <= 4, f"max dev {max(devs):.2f} stderr")

    obj, _, _ = k20
    g = complete(20)
    sync = gossip_da_batch(g, obj, StepSchedule(1.0), experiment_projection(), 2000, range(50), record_every=2000)
    asy = gossip_da_batch(g, obj, StepSchedule(1.0), experiment_projection(), 10_000, range(50), mode="async",
                          record_every=10_000)
    rs = float(obj.risk(sync.theta_bar[:, -1]).mean())
    ra = float(obj.risk(asy.theta_bar[:, -1]).mean())
    ok2 = check(10, "async at 5x events within 10% of sync", abs(ra - rs) <= 0.1 * rs, f"async {ra:.4f}, sync {rs:.4f}")
    assert ok1 and ok2


# ---------------------------------------------------------------------------
# 11. lower bound formulas


def test_c11_lower_bound():
    ok1 = check(11, "delta_tilde(P3) = 2", delta_tilde(path(3), 0, 2) == 2.0)
    lb = lower_bound(1.0, 36.0, 0, 1.0)
    ok2 = check(11, "lower_bound(1, 36, 0, 1) = sqrt 2", lb == math.sqrt(2), repr(lb))
    dom = []
    for s in range(20):
        g = erdos_renyi_connected(12, 0.25, seed=100 + s)
        i, j = worst_pair(g)
        dom.append(delta_tilde(g, i, j) >= g.distance_table.dist[i, j])
    ok3 = check(11, "delta_tilde >= d(i, j) on 20 graphs", all(dom))
    inst = hard_instance(cycle(9), 2, seed=4)
    rng = trial_rng(11)
    a = rng.normal(size=(1000, inst.dim))
    b = rng.normal(size=(1000, inst.dim))
    conv = float(np.max(inst.F(0.5 * (a + b)) - 0.5 * (inst.F(a) + inst.F(b))))
    ok4 = check(11, "hard instance convex", conv <= 1e-12, f"max midpoint excess {conv:.1e}")
    diff = 0.0
    for th in rng.normal(size=(20, inst.dim)):
        brute = sum(inst.pair_value(u, v, th) for u in range(9) for v in range(9)) / 81
        diff = max(diff, abs(inst.F(th) - brute))
    ok5 = check(11, "F equals exhaustive pair sum", diff <= 1e-12, f"max diff {diff:.1e}")
    assert ok1 and ok2 and ok3 and ok4 and ok5


# ---------------------------------------------------------------------------
# 12. gradient checks


def test_c12_gradient_checks():
    rng = trial_rng(12)
    smooth_err, hinge_err, skipped = 0.0, 0.0, 0
    labelled = auc_toy(10, dim=3, seed=12)
    ranked = Dataset(labelled.points, rng.normal(size=10))
    for obj in (AucLogistic(labelled), RankingLogistic(ranked), QuadraticPair(labelled), ZeroObjective(labelled)):
        for _ in range(20):
            i, j = rng.integers(0, 10, size=2)
            smooth_err = max(smooth_err, grad_check(obj, rng.normal(size=obj.dim), (i, j)).max_rel_error)
    hinge = MetricHinge(Dataset(labelled.points, np.arange(10) % 3))
    for _ in range(40):
        a = rng.normal(size=(3, 3))
        i, j = rng.integers(0, 10, size=2)
        res = grad_check(hinge, (a @ a.T).ravel(), (i, j))
        if res.skipped:
            skipped += 1
            continue
        hinge_err = max(hinge_err, res.max_rel_error)
    ok1 = check(12, "smooth losses < 1e-5", smooth_err < 1e-5, f"max {smooth_err:.1e}")
    ok2 = check(12, "hinge off-kink < 1e-4", hinge_err < 1e-4, f"max {hinge_err:.1e}, {skipped} at the kink")
    assert ok1 and ok2


# ---------------------------------------------------------------------------
# 13. determinism


def test_c13_cli_determinism(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\ntopology = ws:16:4:0.3:1\nT = 50\nn_trials = 4\nrecord_every = 10\n"
                   "record_bias = true\nchunk = 2\n[data]\nsource = toy\n")
    invocations = {
        "spectral": ["spectral", "--topology", "ws:30:4:0.3:2", "--out", "{out}/s.csv"],
        "estimate": ["estimate", "--topology", "cycle:7", "--protocol", "gosta_async", "--T", "40", "--runs", "3",
                     "--seed", "9", "--out", "{out}/e.csv"],
        "optimize": ["optimize", "--topology", "complete:8", "--mode", "async", "--T", "60", "--runs", "3",
                     "--seed", "2", "--per-node", "--out", "{out}/o.csv"],
        "bounds": ["bounds", "--topology", "grid2d:3x5:wrap", "--T", "500", "--out", "{out}/b.csv"],
        "experiment": ["experiment", "--config", str(cfg), "--workers", "2", "--out", "{out}"],
    }
    same = {}
    for name, argv in invocations.items():
        outs = []
        for rep in ("a", "b"):
            d = tmp_path / name / rep
            d.mkdir(parents=True)
            assert main([a.replace("{out}", str(d)) for a in argv]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))})
        capsys.readouterr()
        same[name] = outs[0] == outs[1] and len(outs[0]) > 0
    ok = check(13, "repeated CLI runs give identical CSVs", all(same.values()),
               ", ".join(k for k, v in same.items() if v))
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
