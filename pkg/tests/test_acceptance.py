"""Acceptance criteria.  Each test prints one ``CRITERION n: PASS|FAIL`` line."""

import dataclasses
import os
import time

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from lpvtube.longitudinal import solve_longitudinal_step
from lpvtube.opt import QpProblem, solve_qp
from lpvtube.polytope import (HPolytope, halfspace_conversion, minkowski_sum, support_many,
                              vertex_enumeration)
from lpvtube.simulation import compute_metrics, run_batch, run_scenario
from lpvtube.synthesis import closed_loop_vertices, lateral_lmi, lyapunov_decrease, validate_invariance

from oracles import box_qp_candidates, random_box_qp


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} ({title}): {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def test_criterion_1_rpi_soundness(model, gains, rpi, report):
    t0 = time.perf_counter()
    rep = validate_invariance(rpi, model, gains, n_samples=10_000, seed=0)
    dt = time.perf_counter() - t0
    ok = rep.violations == 0 and rep.worst_margin >= -1e-9 and dt < 10
    assert report(1, "RPI soundness", ok,
                  f"violations={rep.violations} worst_margin={rep.worst_margin:.3e} "
                  f"vertex_margin={rep.vertex_worst_margin:.3e} time={dt:.2f}s")


def test_criterion_2_lmi_validity(model, gains, report):
    lmi = lateral_lmi(model, gains.Q_syn, gains.R_syn, gains.preconditioned)
    eig = lmi.problem.min_eigenvalues(gains.lmi_theta)
    pairs = eig[:4]  # the four vertex(j,l) blocks come first
    rho = [max(abs(np.linalg.eigvals(A))) for A in closed_loop_vertices(model, gains)]
    dec = lyapunov_decrease(model, gains).max()
    ok = pairs.min() >= 1e-6 - 1e-8 and eig.min() >= 1e-6 - 1e-8 and max(rho) < 1 and dec <= 1e-6
    assert report(2, "LMI validity", ok,
                  f"min_eig(pairs)={pairs.min():.3e} min_eig(all)={eig.min():.3e} "
                  f"rho={max(rho):.4f} lyap_max={dec:.3e}")


def test_criterion_3_qp_engine(report):
    rng = np.random.default_rng(2024)
    solve_time, worst_obj, worst_x, n_bad = 0.0, 0.0, 0.0, 0
    for _ in range(500):
        n = int(rng.integers(1, 7))
        H, f, lb, ub, Gg, hg = random_box_qp(rng, n, n_general=int(rng.integers(1, 4)))
        G = np.vstack([np.eye(n), -np.eye(n), Gg])
        h = np.concatenate([ub, -lb, hg])
        t0 = time.perf_counter()
        sol = solve_qp(QpProblem(H, f, G, h))
        solve_time += time.perf_counter() - t0
        x_ref, obj_ref = box_qp_candidates(H, f, lb, ub, Gg, hg)
        eo = abs(sol.objective - obj_ref)
        ex = np.abs(sol.x - x_ref).max()
        worst_obj, worst_x = max(worst_obj, eo), max(worst_x, ex)
        n_bad += not (sol.ok and eo <= 1e-6 and ex <= 1e-5)
    ok = n_bad == 0 and solve_time < 30
    assert report(3, "QP engine", ok,
                  f"mismatches={n_bad}/500 max_obj_err={worst_obj:.2e} max_x_err={worst_x:.2e} "
                  f"solver_time={solve_time:.2f}s")


def test_criterion_4_polytope_kernel(report):
    rng = np.random.default_rng(7)
    mismatches, worst_mink = 0, 0.0
    for k in range(100):
        dim = 2 + k % 3
        G = rng.standard_normal((2 * dim + 6, dim))
        G /= np.linalg.norm(G, axis=1, keepdims=True)
        G = np.vstack([G, np.eye(dim), -np.eye(dim)])
        P = HPolytope(G, rng.uniform(0.5, 2.0, size=G.shape[0]))
        V = vertex_enumeration(P)
        P2 = halfspace_conversion(V)
        hull = ConvexHull(V.vertices)  # independent membership oracle
        lo, hi = V.vertices.min(axis=0), V.vertices.max(axis=0)
        pts = rng.uniform(lo - 0.1, hi + 0.1, size=(1000, dim))
        m_p = np.max(pts @ P.G.T - P.h, axis=1)
        m_hull = np.max(pts @ hull.equations[:, :-1].T + hull.equations[:, -1], axis=1)
        clear = np.abs(m_p) > 1e-7
        a = m_p[clear] <= 0
        mismatches += int(np.sum(a != (m_hull[clear] <= 0)))
        mismatches += int(np.sum(a != P2.contains(pts[clear], tol=0.0)))
        Q = vertex_enumeration(HPolytope.from_box(-rng.uniform(0.1, 1, dim), rng.uniform(0.1, 1, dim)))
        S = minkowski_sum(V, Q)
        D = rng.standard_normal((20, dim))
        err = np.abs(support_many(S, D) - support_many(V, D) - support_many(Q, D)).max()
        worst_mink = max(worst_mink, err)
    ok = mismatches == 0 and worst_mink <= 1e-8
    assert report(4, "polytope kernel", ok,
                  f"membership_mismatches={mismatches} minkowski_err={worst_mink:.2e}")


def test_criterion_5_longitudinal(lon_model, report):
    v, s, t = 25.0, 1.0, 0.0
    trace = []
    for _ in range(60):
        c = solve_longitudinal_step(s, v, 18.0, lon_model)
        trace.append((t, v, c.a_cmd))
        s, v = lon_model.step(s, v, c.a_cmd)
        t = round(t + lon_model.t_s, 12)
    trace = np.array(trace)
    tt, vv, aa = trace.T
    approach = vv > 18.0 + 0.05
    sat_ok = bool(np.all(np.abs(aa[approach] + 6.0) <= 1e-6))
    settled = np.flatnonzero(np.abs(vv - 18.0) <= 0.05)
    first = int(settled[0]) if settled.size else len(vv)
    time_ok = settled.size > 0 and tt[first] <= 1.4 + 1e-9 and np.all(np.abs(vv[first:] - 18.0) <= 0.05)
    tail_ok = bool(np.all(np.abs(aa[first:]) <= 1e-6))
    worst = np.flatnonzero(approach & (np.abs(aa + 6.0) > 1e-6))
    detail = (f"saturated_until_band={sat_ok} settle_t={tt[first] if settled.size else np.nan:.1f}s "
              f"zero_after={tail_ok} max|a|_after={np.abs(aa[first:]).max():.2e}")
    if worst.size:
        detail += f" first_unsaturated_step={worst[0]} a={aa[worst[0]]:.3f}"
    assert report(5, "longitudinal behavior", sat_ok and time_ok and tail_ok, detail)


def test_criterion_6_lateral(cfg, model, gains, rpi, report):
    dmax = cfg.mpc.delta_max
    nominal = run_scenario(cfg, gains, rpi, model)
    met = compute_metrics(nominal, model)
    ey = np.abs(nominal.col("e_y"))
    nom_ok = (ey.max() <= 4.0 and np.abs(nominal.col("delta_cmd")).max() <= dmax
              and met["time_to_e_y_band"] <= 10.0 and met["infeasible_steps"] == 0)
    t0 = time.perf_counter()
    logs = run_batch(cfg, gains, rpi, range(100), model, jobs=os.cpu_count() or 1)
    dt = time.perf_counter() - t0
    mets = [compute_metrics(log, model) for log in logs]
    infeasible = sum(m["infeasible_steps"] for m in mets)
    violations = sum(m["constraint_violations"] for m in mets)
    worst_band = max(m["time_to_e_y_band"] for m in mets)
    ok = nom_ok and infeasible == 0 and violations == 0 and dt < 300
    assert report(6, "lateral behavior", ok,
                  f"nominal max|e_y|={ey.max():.3f} band_t={met['time_to_e_y_band']:.1f}s; "
                  f"100 seeds: infeasible={infeasible} violations={violations} "
                  f"worst_band_t={worst_band:.1f}s time={dt:.0f}s")


def test_criterion_7_equilibrium(cfg, model, gains, rpi, report):
    c = cfg.replace(x0=(0.0, 0.0, 0.0, 0.0), disturbance="off",
                    mpc=dataclasses.replace(cfg.mpc, delta_unc=0.0))
    log = run_scenario(c, gains, rpi, model)
    dev = max(np.abs(log.states).max(), np.abs(log.col("delta_cmd")).max())
    assert report(7, "equilibrium", dev <= 1e-10, f"max_deviation={dev:.2e}")


def test_criterion_8_determinism(cfg, model, gains, rpi, tmp_path, report):
    c = cfg.replace(seed=11)
    a = run_scenario(c, gains, rpi, model).to_csv(tmp_path / "a.csv")
    b = run_scenario(c, gains, rpi, model).to_csv(tmp_path / "b.csv")
    same = a.read_bytes() == b.read_bytes()
    assert report(8, "determinism", same, f"identical_csv={same}")


def test_criterion_9_scale(cfg, model, gains, rpi, report):
    from lpvtube.tube_mpc import build_lateral_qp, build_scheduling_tube
    bounded = bool(np.all(np.isfinite(rpi.V.vertices)))
    tube = build_scheduling_tube(np.full(cfg.mpc.N, cfg.v0), cfg.mpc.delta_unc, model)
    qp = build_lateral_qp(np.array(cfg.x0), tube, gains, rpi, cfg.mpc.Q, cfg.mpc.R, cfg.mpc.N, model)
    reported = qp.counts["total"] == qp.problem.n_ineq > 0
    nv = rpi.n_vertices
    ok = bounded and reported and 20 <= nv <= 300
    assert report(9, "scale sanity", ok,
                  f"vertices={nv} (range 20..300; reference 93) facets={rpi.H.n_rows} "
                  f"qp_constraints={qp.counts['total']} (reference 1770)")
