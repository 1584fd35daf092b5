"""End-to-end acceptance checks, one test per criterion, at the stated tolerances.

Each test prints a PASS/FAIL line; the lines are repeated in a summary section
at the end of the pytest run.
"""

import time

import numpy as np
import pytest

from ecx.cli import main
from ecx.equilibrium import (
    PreferenceMatrix,
    accounts,
    consumption,
    equilibrium_wages,
    price_threshold,
    solve_prices,
)
from ecx.experiments import (
    DESK_DIMS,
    DESK_GRID,
    DESK_REPS,
    default_workers,
    network_from_specialization,
    run_model,
    run_phase_sweep,
)
from ecx.model import GeneratorSpec, block_labels, gen_linspace, output_single
from ecx.netgen import backbone, longest_ordered_cycle, proximity, spectral_bisection
from ecx.oracle import (
    ParityCase,
    check_separable_rca,
    matches_up_to_sign,
    oracle_eci,
    oracle_mcc,
    oracle_mcp,
    shifted_condition,
)
from ecx.pipeline import binarize, drop_empty, rca, run_pipeline, spearman
from ecx.rng import substream


def _check(record, label, ok, detail, elapsed, limit):
    fast = elapsed < limit
    record(label, ok and fast, f"{detail}; {elapsed:.2f} s (limit {limit:g} s)")
    assert ok, detail
    assert fast, f"took {elapsed:.2f} s, limit {limit} s"


def test_criterion_1_oracle_equivalence(acceptance_log):
    t0 = time.perf_counter()
    parts = []
    ok = True
    for n_c, n_p in [(4, 6), (5, 6), (5, 7), (10, 20), (11, 20), (15, 17)]:
        r, q = gen_linspace(n_c), gen_linspace(n_p)
        case = ParityCase.from_sizes(n_c, n_p)
        run = run_pipeline(output_single(r, q))
        m_ok = np.array_equal(run.specialization.values, oracle_mcp(r, q).values)
        err = float(np.abs(run.projection.values - oracle_mcc(case).values).max())
        sign_ok = matches_up_to_sign(run.result.eci_raw, oracle_eci(case))
        ok &= m_ok and err < 1e-12 and sign_ok
        parts.append(f"{n_c}x{n_p} M={'ok' if m_ok else 'X'} err={err:.0e} sign={'ok' if sign_ok else 'X'}")
    _check(acceptance_log, "criterion 1 (oracle equivalence)", ok, ", ".join(parts),
           time.perf_counter() - t0, 1.0)


def test_criterion_2_separable_null(acceptance_log):
    t0 = time.perf_counter()
    rng = substream(2, "misc")
    worst = 0.0
    for _ in range(100):
        f = rng.uniform(0.01, 10.0, int(rng.integers(2, 51)))
        g = rng.uniform(0.01, 10.0, int(rng.integers(2, 81)))
        worst = max(worst, check_separable_rca(f, g)[1])
    _check(acceptance_log, "criterion 2 (separable RCA = 1)", worst < 1e-10,
           f"max |R - 1| = {worst:.2e} over 100 instances", time.perf_counter() - t0, 1.0)


def test_criterion_3_shifted_condition(acceptance_log):
    t0 = time.perf_counter()
    rng = substream(3, "misc")
    mismatches = compared = skipped = 0
    for _ in range(100):
        f = rng.uniform(-1.0, 2.0, int(rng.integers(2, 40)))
        g = rng.uniform(-1.0, 2.0, int(rng.integers(2, 40)))
        fg = np.outer(f, g)
        b = max(0.0, -fg.min()) + float(rng.uniform(0.05, 2.0))
        m = binarize(rca(b + fg), policy="error").values
        cond = shifted_condition(f, g, b).values
        dev = np.abs(np.outer(f - f.mean(), g - g.mean()))
        off = dev > 1e-9 * dev.max()
        mismatches += int((m[off] != cond[off]).sum())
        compared += int(off.sum())
        skipped += int((~off).sum())
    _check(acceptance_log, "criterion 3 (shifted sign condition)", mismatches == 0,
           f"{mismatches} mismatches in {compared} off-tie entries ({skipped} boundary ties skipped)",
           time.perf_counter() - t0, 1.0)


def test_criterion_4_multi_capability_monotone(acceptance_log):
    t0 = time.perf_counter()
    run = run_model(GeneratorSpec(n_economies=100, n_activities=1000, n_capabilities=10))
    rho = run.spearman_eci
    r = run.endowment
    r_peak = float(r[int(np.argmax(run.pipeline.specialization.diversity))])
    ok = rho == 1.0 and r_peak < r.max() and 0.7 <= r_peak <= 0.9
    _check(acceptance_log, "criterion 4 (ECI monotone in r)", ok,
           f"spearman = {rho!r}, diversity peaks at r = {r_peak:.3f}", time.perf_counter() - t0, 30.0)


def test_criterion_5_gaussian_minmax(acceptance_log):
    t0 = time.perf_counter()
    rhos = []
    for seed in range(1, 11):
        spec = GeneratorSpec(kind="gaussian-minmax", n_economies=100, n_activities=1000,
                             n_capabilities=10, seed=seed)
        rhos.append(run_model(spec).spearman_eci)
    _check(acceptance_log, "criterion 5 (gaussian-minmax)", min(rhos) >= 0.99,
           f"min spearman over 10 seeds = {min(rhos):.5f}", time.perf_counter() - t0, 300.0)


def test_criterion_6_phase_transition(acceptance_log):
    t0 = time.perf_counter()
    lo, hi, points = DESK_GRID
    res = run_phase_sweep(np.linspace(lo, hi, points), DESK_REPS, DESK_DIMS, seed=0,
                          workers=default_workers())
    a, c = res.alpha_grid, res.corr_mean
    high = float(c[a >= 0.45].min())
    low = float(c[a <= 0.15].max())
    where = res.transition()
    ok_high, ok_low, ok_where = high > 0.95, low < 0.5, 0.2 <= where <= 0.5
    curve = " ".join(f"{x:.2f}:{y:.3f}" for x, y in zip(a, c))
    _check(acceptance_log, "criterion 6 (phase transition)", ok_high and ok_low and ok_where,
           f"min mean|rho| for alpha>=0.45 = {high:.3f} ({'ok' if ok_high else 'X'}), "
           f"max for alpha<=0.15 = {low:.3f} ({'ok' if ok_low else 'X'}), "
           f"steepest drop at {where:.3f} ({'ok' if ok_where else 'X'}); curve {curve}",
           time.perf_counter() - t0, 600.0)


def test_criterion_7_equilibrium_identities(acceptance_log):
    t0 = time.perf_counter()
    rng = substream(7, "misc")
    worst = dict(wage=0.0, budget=0.0, clearing=0.0, fixed=0.0, threshold=0.0)
    min_rho = 1.0
    for _ in range(50):
        n_c, n_p = int(rng.integers(2, 60)), int(rng.integers(3, 80))
        r, q = rng.random(n_c), rng.random(n_p)
        labor = rng.uniform(0.5, 2.0, n_c)
        prefs = PreferenceMatrix(rng.uniform(0.1, 2.0, (n_c, n_p)))
        sol = solve_prices(prefs, q, r)
        pi = sol.prices.values
        w = equilibrium_wages(pi, q, r, labor).wages
        direct = (pi[None, :] * (1 - np.outer(1 - r, q))).sum(axis=1) / labor
        worst["wage"] = max(worst["wage"], float(np.abs(w - direct).max()))
        c = consumption(prefs, pi, q, r)
        income = accounts(pi, q, r, labor).income
        worst["budget"] = max(worst["budget"], float(np.abs(c.values @ pi - income).max()))
        worst["clearing"] = max(worst["clearing"], sol.clearing_residual)
        worst["fixed"] = max(worst["fixed"], sol.fixed_point_residual)
        dq = q - q.mean()
        d = rng.standard_normal(n_p)
        d -= d.mean()
        d -= dq * (d @ dq) / (dq @ dq)
        pi0 = 1.0 + 0.5 * d / np.abs(d).max()
        worst["threshold"] = max(worst["threshold"], abs(price_threshold(q, pi0) - q.mean()))
        uni = solve_prices(PreferenceMatrix.uniform(n_c, n_p), q, r).prices.values
        min_rho = min(min_rho, spearman(uni, q))
    ok = (worst["wage"] < 1e-12 and worst["budget"] < 1e-10 and worst["clearing"] < 1e-8
          and worst["fixed"] < 1e-10 and worst["threshold"] < 1e-12 and min_rho == 1.0)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", min spearman(pi, q) {min_rho}"
    _check(acceptance_log, "criterion 7 (equilibrium identities)", ok, detail,
           time.perf_counter() - t0, 30.0)


class TestCriterion8Networks:
    budget = 300.0
    spent = 0.0

    def _timed(self, t0):
        TestCriterion8Networks.spent += time.perf_counter() - t0
        return TestCriterion8Networks.spent

    def test_a_two_components(self, acceptance_log):
        t0 = time.perf_counter()
        m = binarize(rca(output_single(gen_linspace(10), gen_linspace(20))))
        g = backbone(proximity(m))
        _check(acceptance_log, "criterion 8a (even case: two components)", g.n_components == 2,
               f"{g.n_components} components", self._timed(t0), self.budget)

    def test_b_circulant_ring(self, acceptance_log):
        t0 = time.perf_counter()
        spec = GeneratorSpec(kind="circulant", n_economies=200, n_activities=200,
                             n_capabilities=200, alpha=0.8, seed=0)
        m = drop_empty(run_model(spec).pipeline.specialization)
        g = backbone(proximity(m))
        deg = g.degrees()
        low_degree = float(np.mean(deg <= 3))
        order = np.argsort([int(a[1:]) for a in g.ids])
        cycle = longest_ordered_cycle(g, order)
        ring = len(cycle) / g.n_nodes
        _check(acceptance_log, "criterion 8b (circulant ring)", low_degree >= 0.95 and ring >= 0.8,
               f"degree<=3 fraction {low_degree:.3f} (need 0.95), median degree "
               f"{np.median(deg):g}, ring cycle covers {ring:.3f} of nodes (need 0.8)",
               self._timed(t0), self.budget)

    def test_c_core_periphery(self, acceptance_log):
        t0 = time.perf_counter()
        rows = []
        ok = True
        for alpha in (0.6, 0.75, 0.9):
            for seed in (1, 2, 3):
                spec = GeneratorSpec(kind="mixed", n_economies=100, n_activities=200,
                                     n_capabilities=10, alpha=alpha, seed=seed)
                g = network_from_specialization(run_model(spec).pipeline.specialization)
                q = g.degree_by_quartile()
                ok &= q[3] > q[0]
                rows.append(f"a={alpha} s={seed}: {q[0]:.1f}<{q[3]:.1f}")
        _check(acceptance_log, "criterion 8c (core of high-PCI nodes)", ok, "; ".join(rows),
               self._timed(t0), self.budget)

    def test_d_block_communities(self, acceptance_log):
        t0 = time.perf_counter()
        spec = GeneratorSpec(kind="block", n_economies=100, n_activities=500, n_capabilities=20,
                             alpha=0.25, k=2, seed=0)
        m = drop_empty(run_model(spec).pipeline.specialization)
        g = backbone(proximity(m))
        truth = block_labels(500, 2)[[int(a[1:]) for a in g.ids]]
        labels = spectral_bisection(g)
        agree = float(np.mean(labels == truth))
        agree = max(agree, 1.0 - agree)
        _check(acceptance_log, "criterion 8d (planted blocks recovered)", agree >= 0.9,
               f"agreement {agree:.3f} on {g.n_nodes} nodes", self._timed(t0), self.budget)


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    sweep_cfg = tmp_path / "sweep.cfg"
    sweep_cfg.write_text("alpha_points = 6\nreps = 4\nn_economies = 30\nn_activities = 120\n"
                         "n_capabilities = 6\n")
    multi_cfg = tmp_path / "multi.cfg"
    multi_cfg.write_text("n_economies = 40\nn_activities = 200\nn_capabilities = 5\n")
    commands = [
        ["single", "--seed", "3"],
        ["multi", "--seed", "3", "--config", str(multi_cfg)],
        ["equilibrium", "--seed", "3"],
        ["network", "--seed", "3"],
        ["oracle-check", "--seed", "3"],
    ]
    ok = True
    bad = []
    for cmd in commands:
        a, b = tmp_path / (cmd[0] + "_a"), tmp_path / (cmd[0] + "_b")
        assert main([*cmd, "--out", str(a)]) == 0 and main([*cmd, "--out", str(b)]) == 0
        same = _tree_bytes(a) == _tree_bytes(b)
        ok &= same
        if not same:
            bad.append(cmd[0])
    serial, parallel = tmp_path / "sweep_1", tmp_path / "sweep_2"
    assert main(["sweep", "--config", str(sweep_cfg), "--seed", "5", "--workers", "1",
                 "--out", str(serial)]) == 0
    assert main(["sweep", "--config", str(sweep_cfg), "--seed", "5", "--workers", "2",
                 "--out", str(parallel)]) == 0
    same = _tree_bytes(serial) == _tree_bytes(parallel)
    ok &= same
    if not same:
        bad.append("sweep")
    n_files = sum(len(_tree_bytes(tmp_path / (c[0] + "_a"))) for c in commands)
    _check(acceptance_log, "criterion 9 (byte-identical reruns)", ok,
           f"{n_files + len(_tree_bytes(serial))} files compared; differing: {bad or 'none'}",
           time.perf_counter() - t0, 600.0)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
