import dataclasses
import json
import math

import numpy as np
import pytest

from svtest import Partition
from svtest.errors import ExperimentFailure, InputError
from svtest.simulation import (
    PRESET_NAMES,
    ExperimentSpec,
    FactorDgpSpec,
    allocate_sizes,
    gen_factor,
    gen_sample,
    preset,
    run_experiment,
    within_positions,
)


class TestAllocateSizes:
    @pytest.mark.parametrize("delta, lo, hi", [(0.0, 100, 100), (2.0, 34, 213), (4.0, 9, 340)])
    def test_printed_ranges(self, delta, lo, hi):
        sizes = allocate_sizes(1000, 10, delta)
        assert (sizes.min(), sizes.max()) == (lo, hi)
        assert sizes.sum() == 1000

    @pytest.mark.parametrize("N, G, delta", [(1000, 10, 1.0), (97, 7, 0.5), (500, 3, 3.3), (50, 50, 0.0)])
    def test_sums_to_n(self, N, G, delta):
        assert allocate_sizes(N, G, delta).sum() == N

    def test_increasing(self):
        assert np.all(np.diff(allocate_sizes(1000, 10, 2.0)[:-1]) >= 0)

    def test_empty_cluster_is_an_error(self):
        with pytest.raises(InputError, match="empty cluster"):
            allocate_sizes(20, 10, 8.0)
        with pytest.raises(InputError):
            allocate_sizes(5, 10, 0.0)


class TestFactor:
    def test_within_positions(self):
        np.testing.assert_array_equal(within_positions([2, 0, 2, 0, 2, 1]), [1, 1, 2, 2, 3, 1])

    def test_rho_zero_is_iid_standard_normal(self):
        z = gen_factor(FactorDgpSpec(0.0, seed=1), sizes=[1000] * 100)
        n = z.size
        assert abs(z.mean()) < 4 / math.sqrt(n)
        assert z.var() == pytest.approx(1.0, abs=4 * math.sqrt(2 / n))

    @pytest.mark.parametrize("rho", [0.1, 0.5, 0.9])
    def test_moments(self, rho):
        # 50,000 clusters of size 2: positions 1 and 2 load on different effects;
        # a second draw with size-3 clusters gives same-parity pairs (positions 1 and 3)
        n = 50_000
        z2 = gen_factor(FactorDgpSpec(rho, seed=2), sizes=[2] * n).reshape(n, 2)
        z3 = gen_factor(FactorDgpSpec(rho, seed=3), sizes=[3] * n).reshape(n, 3)
        allz = np.r_[z2.ravel(), z3.ravel()]
        se_var = math.sqrt(2 / allz.size)
        assert allz.var() == pytest.approx(1.0, abs=4 * se_var)
        se_corr = 1 / math.sqrt(n)
        assert np.corrcoef(z3[:, 0], z3[:, 2])[0, 1] == pytest.approx(rho, abs=4 * se_corr)
        assert np.corrcoef(z2[:, 0], z2[:, 1])[0, 1] == pytest.approx(0.0, abs=4 * se_corr)

    def test_parity_follows_position_not_global_index(self):
        # clusters of odd size: global index parity and within-cluster parity disagree in cluster 2
        z = gen_factor(FactorDgpSpec(0.999999, seed=4), sizes=[3, 3])
        assert z[3] == pytest.approx(z[5], abs=0.01)
        assert z[0] == pytest.approx(z[2], abs=0.01)

    def test_rho_bounds(self):
        with pytest.raises(InputError):
            FactorDgpSpec(1.0)


class TestGenSample:
    def test_levels_and_zero_coefficients(self):
        spec = ExperimentSpec(G_coarse=5, fine_per_coarse=3, obs_per_fine=4, u_kind="fine", u_rho=0.2)
        data, nest = gen_sample(spec, 0)
        assert nest.names == ["none", "fine", "coarse"]
        assert [lv.G for lv in nest.levels] == [60, 15, 5]
        assert data.k2 == 5  # coarse dummies, no intercept
        # y is the disturbance itself
        u2 = gen_sample(dataclasses.replace(spec, k1=1), 0)[0].y
        np.testing.assert_array_equal(data.y, u2)

    def test_no_fixed_effects_means_constant_only(self):
        data, _ = gen_sample(ExperimentSpec(G_coarse=4, fine_per_coarse=2, obs_per_fine=5, fe_level="none"))
        assert data.x2_names == ("const",)

    def test_convex_mix(self):
        base = ExperimentSpec(G_coarse=6, fine_per_coarse=4, obs_per_fine=5, u_kind="convex", eta_fine="fine")
        u = {eta: gen_sample(dataclasses.replace(base, eta=eta), 3)[0].y for eta in (0.0, 0.3, 1.0)}
        # the components do not depend on eta, so each mix is an exact combination of the endpoints
        want = (0.3 * u[1.0] + 0.7 * u[0.0]) / math.sqrt(0.3**2 + 0.7**2)
        np.testing.assert_allclose(u[0.3], want, atol=1e-14)

    def test_size_heterogeneous_layout(self):
        spec = ExperimentSpec(G_coarse=10, N=1000, delta=2.0, fine_per_coarse=1)
        data, nest = gen_sample(spec)
        assert sorted(nest["coarse"].sizes.tolist()) == sorted(allocate_sizes(1000, 10, 2.0).tolist())
        assert nest.names == ["none", "coarse"]

    def test_replications_differ_and_repeat(self):
        spec = ExperimentSpec(G_coarse=4, fine_per_coarse=2, obs_per_fine=5)
        a, b = gen_sample(spec, 0)[0].y, gen_sample(spec, 1)[0].y
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, gen_sample(spec, 0)[0].y)

    def test_independent_design_is_a_true_null(self):
        data, nest = gen_sample(ExperimentSpec(G_coarse=3, fine_per_coarse=1, obs_per_fine=4, u_kind="independent"))
        assert isinstance(nest["none"], Partition) and nest["none"].is_singletons


class TestRunExperiment:
    @pytest.fixture
    def small(self):
        return ExperimentSpec(G_coarse=8, fine_per_coarse=3, obs_per_fine=10, R=40, B=99, weights="webb6",
                              tails=("upper", "two_sided"), grid=(("u_rho", (0.0, 0.3)),))

    def test_rows_and_frequencies(self, small):
        s = run_experiment(small)
        assert [r["u_rho"] for r in s.rows] == [0.0, 0.3]
        for row in s.rows:
            for key in ("asy_upper", "asy_two_sided", "boot_upper", "boot_two_sided"):
                assert 0.0 <= row[key] <= 1.0
                assert row[f"{key}_se"] == pytest.approx(math.sqrt(row[key] * (1 - row[key]) / 40))
            assert row["failed"] == 0

    def test_thread_count_does_not_change_results(self, small):
        a = run_experiment(small, threads=1, keep_raw=True)
        b = run_experiment(small, threads=3, keep_raw=True)
        assert a.rows == b.rows
        assert a.raw == b.raw

    def test_single_replication(self, small):
        s = run_experiment(dataclasses.replace(small, R=1, grid=()))
        assert len(s.rows) == 1 and s.rows[0]["boot_upper"] in (0.0, 1.0)

    def test_sequential_shares_sum_to_one(self):
        spec = dataclasses.replace(preset("fig6a")[0], R=30, grid=(("u_rho", (0.0, 0.5)),))
        for row in run_experiment(spec).rows:
            assert row["m0"] + row["m1"] + row["m2"] == pytest.approx(1.0, abs=1e-12)
            assert row["min_rule_agrees"] == 1.0

    def test_pretest_summary(self):
        spec = dataclasses.replace(preset("fig7a")[0], R=20, grid=(("eta", (0.0, 1.0)),))
        row = run_experiment(spec).rows[0]
        for tag in ("fine", "coarse", "pre0.05", "pre0.2"):
            assert row[f"rmse_{tag}"] >= 0 and 0 <= row[f"cover_{tag}"] <= 1

    def test_failures_abort(self):
        spec = ExperimentSpec(G_coarse=4, fine_per_coarse=2, obs_per_fine=5, R=5, null_level="coarse",
                              engines=("asymptotic",))
        with pytest.raises(ExperimentFailure, match="5 of 5") as info:
            run_experiment(spec)
        assert info.value.n_failed == 5

    def test_outputs(self, small, tmp_path):
        s = run_experiment(dataclasses.replace(small, R=5))
        lines = s.write_csv(tmp_path / "out.csv").read_text().splitlines()
        assert lines[0].startswith("u_rho,R,")
        assert len(lines) == 3
        meta = json.loads(s.write_meta(tmp_path / "out.json").read_text())
        assert meta["seed"] == small.seed and meta["R"] == 5 and meta["spec"]["grid"][0][0] == "u_rho"

    def test_seed_changes_results(self, small):
        a = run_experiment(dataclasses.replace(small, R=60), keep_raw=True)
        b = run_experiment(dataclasses.replace(small, R=60, seed=1), keep_raw=True)
        assert a.raw != b.raw


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_every_preset_runs(name):
    (spec,) = preset(name)
    first = spec.points()[0]
    small = dataclasses.replace(spec.at(first, 0), R=3, B=19)
    row = run_experiment(small).rows[0]
    assert row["failed"] == 0 and row["R"] == 3


def test_preset_lookup():
    assert [s.name for s in preset("fig3")] == ["fig3a", "fig3b", "fig3c", "fig3d"]
    assert preset("fig1a", "paper")[0].R == 400_000
    assert preset("fig1a", R=7)[0].R == 7
    with pytest.raises(InputError, match="unknown preset"):
        preset("fig9")
    with pytest.raises(InputError):
        preset("fig1a", "huge")


def test_spec_validation():
    with pytest.raises(InputError):
        ExperimentSpec(task="plot")
    with pytest.raises(InputError):
        ExperimentSpec(eta=1.5)
    with pytest.raises(InputError):
        ExperimentSpec(R=0)
