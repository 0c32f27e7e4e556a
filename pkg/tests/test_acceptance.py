"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line each.  The default campaign (dataset -> train -> three
optimization runs -> compare -> prediction scatter) is built once per
session through the CLI entry points and shared by the criteria that
consume it.
"""

import json
import math
import time

import numpy as np
import pytest
import yaml

from dvopt import benchmarks as bm
from dvopt import machine_model as mm
from dvopt import optimizer as opt
from dvopt import postprocess as pp
from dvopt import sampling as sa
from dvopt import surrogate as sg
from dvopt.cli import EXIT_OK, main
from dvopt.design_space import default_spec, geometry_check

SPEC = default_spec()


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\n[acceptance] {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{criterion}: {detail}"


# --- the shared default campaign -------------------------------------------------

CAMPAIGN = {
    "sampling": {"n_samples": 2500, "seed": 4242},
    "dataset": {"test_fraction": 0.2},
    "training": {"seed": 9, "max_epochs": 2000, "patience": 150},
    "optimizer": {"seed": 99, "population": 64, "generations": 100,
                  "hv_tol": 0.0},
}


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    run_dir = root / "run"
    cfg_path = root / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(dict(CAMPAIGN, run_dir=str(run_dir))))
    timings: dict[str, float] = {}
    for step in (["dataset", "-c", str(cfg_path)],
                 ["train", "-c", str(cfg_path)],
                 ["optimize", "-c", str(cfg_path), "-a", "classical"],
                 ["optimize", "-c", str(cfg_path), "-a", "hybrid"],
                 ["optimize", "-c", str(cfg_path), "-a", "factor2"],
                 ["compare", "-c", str(cfg_path), "--a", "classical",
                  "--b", "hybrid"],
                 ["compare", "-c", str(cfg_path), "--a", "classical",
                  "--b", "factor2"],
                 ["predict-plot", "-c", str(cfg_path), "--run", "hybrid"]):
        t0 = time.perf_counter()
        assert main(step) == EXIT_OK, f"campaign step failed: {step}"
        timings[" ".join(step[:1] + step[2:])] = time.perf_counter() - t0
    return cfg_path, run_dir, timings


# --- 1: optimizer correctness on analytic benchmarks ------------------------------

def test_c1_zdt_benchmarks():
    results = {}
    for suite, floor in (("zdt1", 0.66), ("zdt2", 0.32)):
        prob = bm.get_problem(suite)
        cfg = opt.OptimizerConfig(seed=1, population=100, max_generations=250,
                                  hv_tol=0.0)
        t0 = time.perf_counter()
        res = opt.run(cfg, prob.spec, prob.evaluator, use_geometry_gate=False)
        seconds = time.perf_counter() - t0
        hv = opt.hypervolume_2d(res.front_points(), (1.0, 1.0))
        results[suite] = (hv, floor, seconds)
    ok = all(hv >= floor and s < 60.0 for hv, floor, s in results.values())
    detail = ", ".join(f"{k} hv={v[0]:.4f} (floor {v[1]}, {v[2]:.1f}s)"
                       for k, v in results.items())
    report("C1 optimizer-on-ZDT", ok, detail)


# --- 2: sorting oracle --------------------------------------------------------------

def _oracle_fronts(feas, viol, kpis):
    n = len(feas)
    dom = np.zeros((n, n), dtype=bool)
    both_feas = feas[:, None] & feas[None, :]
    better = ((kpis[:, None, :] <= kpis[None, :, :]).all(-1)
              & (kpis[:, None, :] < kpis[None, :, :]).any(-1))
    dom |= both_feas & better
    dom |= feas[:, None] & ~feas[None, :]
    both_inf = ~feas[:, None] & ~feas[None, :]
    dom |= both_inf & (viol[:, None] < viol[None, :])
    np.fill_diagonal(dom, False)
    remaining = np.ones(n, dtype=bool)
    fronts = []
    while remaining.any():
        idx = np.nonzero(remaining)[0]
        sub = dom[np.ix_(idx, idx)]
        nd = idx[~sub.any(axis=0)]
        fronts.append(nd.tolist())
        remaining[nd] = False
    return fronts


def test_c2_sorting_matches_brute_force():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        feas = rng.random(n) < 0.7
        viol = np.where(feas, 0.0, rng.random(n))
        kpis = rng.random((n, 2))
        pop = [opt.EvaluatedDesign(
            uid=i, params=np.zeros(1), kpis=(kpis[i, 0], kpis[i, 1]),
            constraints=np.empty(0), feasible=bool(feas[i]),
            violation=float(viol[i]), generation=0, evaluator="analytic")
            for i in range(n)]
        if opt.non_dominated_sort(pop) != _oracle_fronts(feas, viol, kpis):
            mismatches += 1
    report("C2 sorting-oracle", mismatches == 0,
           f"{mismatches} mismatches in 1000 random populations")


# --- 3: hypervolume oracle -----------------------------------------------------------

def test_c3_hypervolume_vs_monte_carlo():
    rng = np.random.default_rng(33)
    worst = 0.0
    for _ in range(50):
        front = rng.random((int(rng.integers(1, 25)), 2))
        exact = opt.hypervolume_2d(front, (1.0, 1.0))
        hits = 0
        n_samples = 1_000_000
        for _ in range(10):
            pts = rng.random((n_samples // 10, 2))
            dominated = np.zeros(len(pts), dtype=bool)
            for p in front:
                dominated |= (pts[:, 0] >= p[0]) & (pts[:, 1] >= p[1])
            hits += int(dominated.sum())
        mc = hits / n_samples
        worst = max(worst, abs(exact - mc))
    report("C3 hypervolume-oracle", worst < 0.01,
           f"worst |exact - MC| = {worst:.5f} over 50 fronts")


# --- 4: operating-point solver --------------------------------------------------------

def test_c4_solver_vs_brute_force_grid():
    designs = sa.lhs_feasible(sa.SamplingConfig(n_samples=20, seed=321), SPEC)
    speeds_rpm = (500.0, 4000.0, 8000.0, 12000.0, 16000.0)
    worst_shortfall = 0.0
    infeasible_points = 0
    for v in designs:
        m = mm.evaluate_measures(v)
        i_max = mm.current_limit(v)
        r_s = pp.stator_resistance(v)
        p = int(v[0])
        for rpm in speeds_rpm:
            omega = pp.rpm_to_rad_s(rpm)
            op = pp.max_torque_at_speed(m, v, omega)
            if op.feasible:
                amp = math.hypot(op.i_d, op.i_q)
                if amp > i_max * (1 + 1e-9) or op.u_mag > pp.U_MAX * (1 + 1e-9):
                    infeasible_points += 1
            gam = np.linspace(0.5 * math.pi, math.pi, 201)
            amps = np.linspace(0.0, i_max, 201)
            cg = np.minimum(np.cos(gam), 0.0)
            sgn = np.clip(np.sin(gam), 0.0, 1.0)
            i_d = amps[:, None] * cg[None, :]
            i_q = amps[:, None] * sgn[None, :]
            pd, pq = pp.interp_flux(m, i_max, i_d, i_q)
            u = pp.voltage_magnitude(pd, pq, i_d, i_q, p * omega, r_s)
            t = pp.torque(pd, pq, i_d, i_q, p)
            t[u > pp.U_MAX] = -np.inf
            oracle = float(t.max())
            if oracle > 0.0:
                worst_shortfall = max(worst_shortfall,
                                      (oracle - op.torque) / oracle)
    ok = worst_shortfall < 0.005 and infeasible_points == 0
    report("C4 operating-point-solver", ok,
           f"worst shortfall vs 201x201 grid = {worst_shortfall * 100:.3f}% "
           f"(tolerance 0.5%), constraint-violating points = {infeasible_points}")


# --- 5: surrogate training mechanics ----------------------------------------------------

def test_c5_gradient_check_and_overfit():
    rng = np.random.default_rng(55)
    params = sg.init_params(rng)
    x = rng.random((5, 14))
    y = rng.standard_normal((5, 165))
    _, grads = sg.loss_and_gradients(params, x, y)
    h = 1e-5
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = sg.loss_and_gradients(params, x, y)
            flat[i] = orig - h
            lm, _ = sg.loss_and_gradients(params, x, y)
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            worst = max(worst, abs(fd - g_flat[i]) / max(abs(fd), abs(g_flat[i]), 1e-10))

    designs = sa.lhs_feasible(sa.SamplingConfig(n_samples=16, seed=16), SPEC)
    ds = sg.build_dataset(designs, SPEC)
    model = sg.train(ds, sg.TrainConfig(seed=5, max_epochs=2000, batch_size=16,
                                        validation_fraction=0.0, patience=None))
    mse = model.metadata["final_train_loss"]
    ok = worst < 1e-4 and mse < 1e-4
    report("C5 gradient-and-overfit", ok,
           f"max grad rel err = {worst:.2e} (tol 1e-4), "
           f"16-sample overfit MSE = {mse:.2e} (tol 1e-4)")


# --- 6: surrogate accuracy ---------------------------------------------------------------

def test_c6_surrogate_accuracy(campaign):
    _, run_dir, _ = campaign
    report_json = json.loads((run_dir / "train_metrics.json").read_text())
    m = report_json["metrics"]
    train_seconds = report_json["train_seconds"]
    ok = (m["flux"]["r2"] >= 0.97 and m["scalars"]["r2"] >= 0.97
          and m["kpi_max_power"]["mape"] <= 0.05
          and m["kpi_cost"]["mape"] <= 0.03
          and report_json["n_train"] == 2000 and report_json["n_eval"] == 500
          and train_seconds < 600.0)
    report("C6 surrogate-accuracy", ok,
           f"flux R2={m['flux']['r2']:.4f} scalars R2={m['scalars']['r2']:.4f} "
           f"power MAPE={m['kpi_max_power']['mape'] * 100:.2f}% "
           f"cost MAPE={m['kpi_cost']['mape'] * 100:.4f}% "
           f"train {train_seconds:.0f}s (2000 train / 500 held out)")


# --- 7: comparison protocol ----------------------------------------------------------------

def test_c7_protocol_analogue(campaign):
    _, run_dir, _ = campaign
    cmp_h = json.loads(
        (run_dir / "compare_classical_hybrid" / "report.json").read_text())
    cmp_f2 = json.loads(
        (run_dir / "compare_classical_factor2" / "report.json").read_text())
    t_cla = json.loads((run_dir / "classical" / "timing.json").read_text())
    t_hyb = json.loads((run_dir / "hybrid" / "timing.json").read_text())
    ratio_h = cmp_h["hv_ratio_b_over_a"]
    ratio_f2 = cmp_f2["hv_ratio_b_over_a"]
    spe_c = t_cla["seconds_per_evaluation"]
    spe_h = t_hyb["seconds_per_evaluation"]
    ok = (ratio_h >= 0.95 and ratio_f2 >= 0.98 and spe_h < spe_c)
    report("C7 protocol-analogue", ok,
           f"hybrid/classical HV = {ratio_h:.4f} (floor 0.95), "
           f"factor2/classical HV = {ratio_f2:.4f} (floor 0.98), "
           f"eval time {spe_h * 1e3:.2f} vs {spe_c * 1e3:.2f} ms "
           f"(speedup x{spe_c / spe_h:.2f})")


# --- 8: prediction scatter ---------------------------------------------------------------

def test_c8_prediction_scatter(campaign):
    _, run_dir, _ = campaign
    summary = json.loads(
        (run_dir / "predict_plot_hybrid" / "summary.json").read_text())
    r2 = summary["max_power"]["r2"]
    report("C8 prediction-scatter", r2 >= 0.95,
           f"max-power R2 = {r2:.4f} over {summary['n_designs']} "
           f"hybrid Pareto designs (floor 0.95)")


# --- 9: reproducibility --------------------------------------------------------------------

def test_c9_byte_identical_reruns(tmp_path):
    files = ("dataset.csv", "classical/archive.csv", "classical/front.json",
             "classical/history.csv", "classical/meta.json",
             "hybrid/archive.csv", "hybrid/front.json", "hybrid/history.csv",
             "hybrid/meta.json")

    def one_pass(run_dir):
        cfg_path = run_dir.parent / f"{run_dir.name}.yaml"
        cfg_path.write_text(yaml.safe_dump({
            "run_dir": str(run_dir),
            "sampling": {"n_samples": 150, "seed": 77},
            "dataset": {"test_fraction": 0.2},
            "training": {"seed": 7, "max_epochs": 40, "patience": None},
            "optimizer": {"seed": 17, "population": 16, "generations": 8,
                          "hv_tol": 0.0},
        }))
        for step in (["dataset"], ["train"], ["optimize", "-a", "classical"],
                     ["optimize", "-a", "hybrid"]):
            assert main([step[0], "-c", str(cfg_path)] + step[1:]) == EXIT_OK
        return {f: (run_dir / f).read_bytes() for f in files}

    a = one_pass(tmp_path / "run_a")
    b = one_pass(tmp_path / "run_b")
    diffs = [f for f in files if a[f] != b[f]]
    report("C9 reproducibility", not diffs,
           f"byte-compared {len(files)} artifacts across two campaigns"
           + (f"; diffs: {diffs}" if diffs else ""))


# --- 10: LHS properties ----------------------------------------------------------------------

def test_c10_lhs_properties():
    lo, hi = SPEC.lower_bounds(), SPEC.upper_bounds()
    stratified = True
    for n in (5, 64, 1000):
        out = np.array(sa.lhs_sample(sa.SamplingConfig(n_samples=n, seed=n), SPEC))
        for d in range(SPEC.n_dims):
            if SPEC.parameters[d].integer:
                continue
            buckets = np.floor((np.sort(out[:, d]) - lo[d])
                               / (hi[d] - lo[d]) * n).astype(int)
            buckets = np.clip(buckets, 0, n - 1)
            if not np.array_equal(buckets, np.arange(n)):
                stratified = False
    feas = sa.lhs_feasible(sa.SamplingConfig(n_samples=200, seed=12), SPEC)
    all_feasible = all(geometry_check(v).feasible for v in feas)
    report("C10 lhs-properties", stratified and all_feasible,
           f"stratification exact for N in (5, 64, 1000); "
           f"{len(feas)}/200 rejection-sampled designs pass the geometry gate")
