"""Acceptance gate: one test per numbered criterion, each logging a PASS/FAIL line.

The Monte Carlo criteria (4, 5, 6, 7, 10) run at the stated replication
counts with the default experiment seed and take minutes; they carry the
``slow`` marker. Criterion 11 needs the STAR data, supplied by the user.
"""

import dataclasses
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from helpers import (
    nested_design,
    parts,
    record,
    rel_diff,
    theta_oracle,
    var_oracle,
    var_pairs_oracle,
)
from svtest import Partition, RegressionData, build_scores, delete_cluster_fit, ols, partial_out
from svtest.bootstrap import SvProblem
from svtest.errors import NumericalError
from svtest.robust import cv1, cv3, hc1, hc3
from svtest.simulation import allocate_sizes, preset, run_experiment
from svtest.statistics import tau_sigma, tau_Sigma, theta_contrast, var_theta

SEED = 20240917


def binom_se(p, R):
    return math.sqrt(p * (1 - p) / R)


# -- 1 ---------------------------------------------------------------------

def random_instance(rng):
    """Observation-level instance: G <= 8, M_g <= 6, N_gh <= 5, k1 <= 3."""
    G = int(rng.integers(1, 9))
    k1 = int(rng.integers(1, 4))
    fine_a, coarse_a, f = [], [], 0
    for g in range(G):
        for _ in range(int(rng.integers(1, 7))):
            n = int(rng.integers(1, 6))
            fine_a += [f] * n
            coarse_a += [g] * n
            f += 1
    N = len(fine_a)
    order = rng.permutation(N)
    fine = Partition.from_assignment("fine", np.array(fine_a)[order])
    coarse = Partition.from_assignment("coarse", np.array(coarse_a)[order])
    Z = rng.standard_normal((N, k1)) * rng.uniform(0.1, 10.0)
    u = rng.standard_normal(N)
    return build_scores(Z, u, fine, coarse)


def test_criterion_1_exact_identities():
    rng = np.random.default_rng(SEED)
    worst = {"var": 0.0, "theta": 0.0, "k1": 0.0}
    n_var = n_k1 = 0
    for _ in range(1000):
        s = random_instance(rng)
        groups = s.groups()
        worst["theta"] = max(worst["theta"], rel_diff(np.atleast_1d(theta_contrast(s)), theta_oracle(groups)))
        try:
            v = np.atleast_2d(var_theta(s))
        except NumericalError:
            assert max(len(g) for g in groups) == 1
            continue
        n_var += 1
        worst["var"] = max(worst["var"], rel_diff(v, var_oracle(groups)), rel_diff(v, var_pairs_oracle(groups)))
        if s.k1 == 1:
            n_k1 += 1
            worst["k1"] = max(worst["k1"], rel_diff(tau_Sigma(s).value, tau_sigma(s).value ** 2))
    ok = worst["var"] <= 1e-12 and worst["theta"] <= 1e-12 and worst["k1"] <= 1e-10
    record(1, ok, f"1000 instances ({n_var} with a variance, {n_k1} with k1 = 1); worst rel diff "
                  f"var {worst['var']:.1e}, theta {worst['theta']:.1e}, tauSigma vs tausigma^2 {worst['k1']:.1e}")
    assert ok


# -- 2 ---------------------------------------------------------------------

def test_criterion_2_fwl():
    rng = np.random.default_rng(SEED + 2)
    worst_b = worst_u = 0.0
    for i in range(100):
        fe = [None, "fine", "coarse"][i % 3]
        d = nested_design(rng, G=int(rng.integers(3, 8)), M=3, k1=int(rng.integers(1, 4)), fe=fe)
        full = ols(d.X, d.y)
        design, fit = partial_out(d)
        # partialed route, computed independently with lstsq
        m2y = d.y - d.X2 @ np.linalg.lstsq(d.X2, d.y, rcond=None)[0]
        b1 = np.linalg.lstsq(design.Z, m2y, rcond=None)[0]
        u = m2y - design.Z @ b1
        worst_b = max(worst_b, rel_diff(b1, full.beta_hat[: d.k1]))
        worst_u = max(worst_u, rel_diff(u, full.residuals), rel_diff(fit.residuals, full.residuals))
    ok = worst_b <= 1e-10 and worst_u <= 1e-10
    record(2, ok, f"100 instances incl. fixed-effect dummies; worst rel diff beta1 {worst_b:.1e}, residuals {worst_u:.1e}")
    assert ok


# -- 3 ---------------------------------------------------------------------

def shuffled_relabeled(d, rng):
    fine = d.labels["fine"]
    order = np.arange(d.N)
    for f in np.unique(fine):
        idx = np.flatnonzero(fine == f)
        order[idx] = rng.permutation(idx)
    new_f = rng.permutation(fine.max() + 1) + 1000
    new_c = rng.permutation(d.labels["coarse"].max() + 1)[::-1] * 3
    labels = {"fine": new_f[fine[order]], "coarse": new_c[d.labels["coarse"][order]]}
    return RegressionData(d.y[order], d.X1[order], d.X2[order], labels)


def test_criterion_3_invariance():
    rng = np.random.default_rng(SEED + 3)
    worst, n_recomb, n_bits, bit_fail = 0.0, 0, 0, 0
    for i in range(100):
        k1 = int(rng.integers(1, 4))
        d = nested_design(rng, G=10, M=3, n=4, k1=k1, fe="coarse" if i % 2 else None, clustered=1.0)
        fine, coarse = parts(d)
        C = rng.standard_normal((k1, k1))
        if abs(np.linalg.det(C)) < 0.05:
            continue
        try:
            a = SvProblem(d, fine, coarse).statistic("Sigma").value
        except NumericalError:
            continue
        b = SvProblem(RegressionData(d.y, d.X1 @ C, d.X2, d.labels), fine, coarse).statistic("Sigma").value
        worst = max(worst, rel_diff(a, b))
        n_recomb += 1
        d2 = shuffled_relabeled(d, rng)
        kinds = ["Sigma", "sigma"] if k1 == 1 else ["Sigma"]
        for kind in kinds:
            x = SvProblem(d, fine, coarse).statistic(kind).value
            y = SvProblem(d2, *parts(d2)).statistic(kind).value
            n_bits += 1
            bit_fail += x != y
    ok = worst <= 1e-8 and bit_fail == 0 and n_recomb >= 80
    record(3, ok, f"X1 -> X1 C on {n_recomb} designs: worst rel change {worst:.1e}; relabel + within-cluster "
                  f"shuffle: {n_bits - bit_fail}/{n_bits} bit-identical")
    assert ok


# -- 4 ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_4_null_calibration_independence_vs_coarse():
    spec = dataclasses.replace(preset("fig1d")[0], G_coarse=10, fine_per_coarse=1, obs_per_fine=100,
                               R=2000, B=199, grid=(("k1", (1, 2)),))
    rows = run_experiment(spec).rows
    rates = {r["k1"]: r["boot_wald"] for r in rows}
    ok = all(0.035 <= v <= 0.065 for v in rates.values())
    record(4, ok, "bootstrap tauSigma, none vs coarse, G=10, N_g=100, R=2000, B=199: "
                  + ", ".join(f"k1={k}: {v:.4f}" for k, v in rates.items()) + " (target [0.035, 0.065])")
    assert ok


# -- 5 ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_asymptotic_overrejects_upper_tail():
    spec = dataclasses.replace(preset("fig3a")[0], G_coarse=6, engines=("asymptotic", "bootstrap"), grid=(),
                               R=2000, B=199)
    row = run_experiment(spec).rows[0]
    up, two = row["asy_upper"], row["asy_two_sided"]
    se = math.hypot(binom_se(up, 2000), binom_se(two, 2000))
    ok = (up - two > 2 * se and up > 0.05 and two > 0.05
          and 0.035 <= row["boot_upper"] <= 0.065 and 0.035 <= row["boot_two_sided"] <= 0.065)
    record(5, ok, f"fine vs coarse, G=6, R=2000: asymptotic upper {up:.4f} vs two-sided {two:.4f} "
                  f"(diff {up - two:.4f}, 2 SE = {2 * se:.4f}); bootstrap upper {row['boot_upper']:.4f}, "
                  f"two-sided {row['boot_two_sided']:.4f}")
    assert ok


# -- 6 ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_power_ordering():
    spec = dataclasses.replace(preset("fig4a")[0], R=500, B=199,
                               grid=((("fine_per_coarse", "obs_per_fine"), ((4, 125),)), ("u_rho", (0.0, 0.05, 0.1))))
    rows = {r["u_rho"]: r for r in run_experiment(spec).rows}
    up = [rows[x]["boot_upper"] for x in (0.0, 0.05, 0.1)]
    steps = [b - a > 2 * math.hypot(binom_se(a, 500), binom_se(b, 500)) for a, b in zip(up, up[1:])]
    mid = rows[0.05]
    order = mid["boot_upper"] >= mid["boot_two_sided"] >= mid["boot_equal_tail"]
    ok = 0.03 <= up[0] <= 0.07 and all(steps) and order
    record(6, ok, "upper-tail bootstrap rejection at rho 0/0.05/0.10: " + "/".join(f"{v:.3f}" for v in up)
                  + f"; at 0.05 upper {mid['boot_upper']:.3f} >= two-sided {mid['boot_two_sided']:.3f}"
                  f" >= equal-tail {mid['boot_equal_tail']:.3f}")
    assert ok


# -- 7 ---------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_sequential_shares():
    spec = dataclasses.replace(preset("fig6a")[0], grid=(("u_rho", (0.0,)),), engines=("bootstrap",), R=2000, B=199)
    row = run_experiment(spec).rows[0]
    ok = (abs(row["m0"] - 0.95) <= 0.02 and abs(row["m1"] - 0.0475) <= 0.015 and abs(row["m2"] - 0.0025) <= 0.005
          and row["min_rule_agrees"] == 1.0)
    record(7, ok, f"R=2000, true m0=0: shares m=0 {row['m0']:.4f}, m=1 {row['m1']:.4f}, m=2 {row['m2']:.4f}; "
                  f"loop equals min rule on {row['min_rule_agrees']:.0%} of replications")
    assert ok


# -- 8 ---------------------------------------------------------------------

def test_criterion_8_allocation_ranges():
    got = {d: allocate_sizes(1000, 10, d) for d in (0.0, 2.0, 4.0)}
    ranges = {d: (int(v.min()), int(v.max())) for d, v in got.items()}
    ok = ranges == {0.0: (100, 100), 2.0: (34, 213), 4.0: (9, 340)} and all(v.sum() == 1000 for v in got.values())
    record(8, ok, "N=1000, G=10: " + ", ".join(f"delta={d:g} -> {lo}-{hi}" for d, (lo, hi) in ranges.items()))
    assert ok


# -- 9 ---------------------------------------------------------------------

def refit_jackknife(data, level, scale):
    full = ols(data.X, data.y).beta_hat[: data.k1]
    D = np.array([delete_cluster_fit(data, level, g, drop_empty_nuisance=True)[: data.k1] - full
                  for g in range(level.G)])
    return scale * D.T @ D


def test_criterion_9_robust_se_oracles():
    rng = np.random.default_rng(SEED + 9)
    worst_cv3 = worst_hc3 = 0.0
    cv1_equal = True
    for i in range(30):
        fe = [None, "fine", "coarse"][i % 3]
        d = nested_design(rng, G=int(rng.integers(3, 7)), M=3, k1=int(rng.integers(1, 3)), fe=fe)
        for name in ("fine", "coarse"):
            lev = d.partition(name)
            worst_cv3 = max(worst_cv3, rel_diff(cv3(d, lev).vcov, refit_jackknife(d, lev, (lev.G - 1) / lev.G)))
        worst_hc3 = max(worst_hc3, rel_diff(hc3(d).vcov, refit_jackknife(d, Partition.singletons(d.N), 1.0)))
        cv1_equal &= bool(np.array_equal(cv1(d, Partition.singletons(d.N)).vcov, hc1(d).vcov))
    ok = worst_cv3 <= 1e-10 and worst_hc3 <= 1e-10 and cv1_equal
    record(9, ok, f"30 designs: CV3 vs refit jackknife worst rel diff {worst_cv3:.1e}; HC3 vs delete-one "
                  f"{worst_hc3:.1e}; CV1 on singletons == HC1: {cv1_equal}")
    assert ok


# -- 10 --------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_pretest_direction():
    spec = dataclasses.replace(preset("fig7c")[0], grid=(("eta", (0.0, 0.5, 1.0)),), engines=("asymptotic",), R=500)
    rows = {r["eta"]: r for r in run_experiment(spec).rows}
    r0, r5, r1 = rows[0.0], rows[0.5], rows[1.0]
    a = r0["rmse_pre0.2"] <= r0["rmse_coarse"]
    b = abs(r1["rmse_pre0.2"] / r1["rmse_coarse"] - 1.0) <= 0.05
    c = r5["cover_fine"] < 0.90
    ok = a and b and c
    record(10, ok, f"eta=0: RMSE pre-test(0.20) {r0['rmse_pre0.2']:.5f} vs coarse {r0['rmse_coarse']:.5f}; "
                   f"eta=1: {r1['rmse_pre0.2']:.5f} vs {r1['rmse_coarse']:.5f}; "
                   f"eta=0.5: fine-level coverage {r5['cover_fine']:.3f}")
    assert ok


# -- 11 --------------------------------------------------------------------

STAR = os.environ.get("SVTEST_STAR_CSV")


@pytest.mark.slow
@pytest.mark.skipif(not STAR or not Path(STAR).exists(), reason="STAR data not supplied (set SVTEST_STAR_CSV)")
def test_criterion_11_star_table(tmp_path):
    from svtest.cli import main

    header = Path(STAR).read_text().splitlines()[0].split(",")
    controls = [c for c in header if c not in ("readone", "small", "aide", "classroom", "school")]
    out = tmp_path / "star.json"
    args = ["test", "--data", STAR, "--y", "readone", "--x1", "small", "--x2", "aide"]
    for c in controls:
        args += ["--x2", c]
    args += ["--levels", "none,classroom,school", "--boot", "99999", "--weights", "rademacher",
             "--df-factors", "--no-timing", "--out", str(out)]
    assert main(args) == 0
    tests = {(t["fine"], t["coarse"]): t for t in json.loads(out.read_text())["tests"] if t["stat"] == "tau_sigma"}
    nr, rs = tests[("none", "classroom")], tests[("classroom", "school")]
    ok = (abs(nr["value"] - 28.388) <= 0.001 and abs(rs["value"] + 0.101) <= 0.001
          and abs(nr["bootstrap_p"] - 0.000) <= 0.01 and abs(rs["bootstrap_p"] - 0.543) <= 0.01)
    record(11, ok, f"small, N vs R: {nr['value']:.3f} (boot P {nr['bootstrap_p']:.3f}); "
                   f"R vs S: {rs['value']:.3f} (boot P {rs['bootstrap_p']:.3f})")
    assert ok
