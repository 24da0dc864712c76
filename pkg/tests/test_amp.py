import dataclasses

import numpy as np
import pytest

from rle.amp import (empirical_ymmse, generate_coupled_instance, generate_instance,
                     run_amp)
from rle.exceptions import DomainError, ResourceLimitError
from rle.potential import SystemParams
from rle.prior import DiscretePrior, bernoulli_prior, binary_prior
from rle.state_evolution import build_ensemble, run_se

POINT = DiscretePrior([[0.7]], [1.0])
BIN_AMP, BIN_RS = 0.01324686015208807, 0.04928186394529251   # binary, alpha=0.5
BERN_MID = 0.5 * (0.0016580430510703312 + 0.0058644207854384196)


def tracking_gap(params, L, n, max_iter=300):
    """Largest |mean AMP MSE - SE MSE| over the iterations SE needs to converge.

    SE starts from the prior variance, which is the MSE of AMP's prior-mean
    initialization.  Finished AMP runs are held at their final value.
    """
    se = run_se(params, init=float(np.sum(params.prior.variance))).mse
    runs = [run_amp(generate_instance(params, L, seed), max_iter=max_iter) for seed in range(n)]
    T = max(len(se), max(len(r.mse_per_iter) for r in runs))
    amp = np.mean([np.pad(r.mse_per_iter, (0, T - len(r.mse_per_iter)), mode="edge")
                   for r in runs], axis=0)
    return float(np.max(np.abs(amp[:len(se)] - se))), runs


class TestGenerateInstance:
    def test_one_by_one(self):
        inst = generate_instance(SystemParams(1.0, 0.3, binary_prior()), 1, 5)
        assert inst.phi.shape == (1, 1) and inst.M == 1
        np.testing.assert_allclose(inst.y, inst.phi @ inst.signal + inst.z * np.sqrt(0.3),
                                   rtol=0, atol=1e-12)

    def test_noiseless(self):
        inst = generate_instance(SystemParams(0.5, 0.0, bernoulli_prior(0.1)), 200, 1)
        np.testing.assert_array_equal(inst.y, inst.phi @ inst.signal)

    @pytest.mark.parametrize("alpha, L", [(0.5, 101), (0.25, 10), (2.0, 7)])
    def test_dimensions(self, alpha, L):
        inst = generate_instance(SystemParams(alpha, 1.0, binary_prior()), L, 0)
        assert inst.N == L and inst.M == round(alpha * L)

    def test_output_variance(self):
        delta = 0.1
        inst = generate_instance(SystemParams(0.5, delta, binary_prior()), 2000, 11)
        se = (1.0 + delta) * np.sqrt(2.0 / (inst.M - 1))
        assert abs(np.var(inst.y, ddof=1) - (1.0 + delta)) <= 5 * se

    def test_entry_variance(self):
        inst = generate_instance(SystemParams(1.0, 1.0, binary_prior()), 400, 2)
        np.testing.assert_allclose(inst.phi.var() * inst.L, 1.0, rtol=0.02)

    def test_deterministic(self):
        p = SystemParams(0.5, 0.2, bernoulli_prior(0.1))
        a, b = generate_instance(p, 300, 42), generate_instance(p, 300, 42)
        for f in ("phi", "s", "z", "y"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
        assert not np.array_equal(a.phi, generate_instance(p, 300, 43).phi)

    def test_with_delta_keeps_draws(self):
        inst = generate_instance(SystemParams(0.5, 0.2, binary_prior()), 100, 3)
        other = inst.with_delta(0.8)
        np.testing.assert_array_equal(other.phi, inst.phi)
        np.testing.assert_array_equal(other.z, inst.z)
        np.testing.assert_allclose(other.y, inst.phi @ inst.signal + inst.z * np.sqrt(0.8),
                                   atol=1e-12)

    def test_memory_guard(self, monkeypatch):
        monkeypatch.setenv("RLE_MAX_MEM_MIB", "1")
        with pytest.raises(ResourceLimitError, match="RLE_MAX_MEM_MIB"):
            generate_instance(SystemParams(1.0, 1.0, binary_prior()), 2000, 0)

    def test_no_measurements(self):
        p = SystemParams(0.01, 1.0, binary_prior())
        with pytest.raises(DomainError):
            generate_instance(p, 10, 0)
        assert generate_instance(p, 10, 0, allow_empty=True).M == 0
        with pytest.raises(DomainError):
            generate_instance(p, 0, 0)


class TestCoupledInstance:
    def test_block_diagonal(self):
        inst = generate_coupled_instance(build_ensemble("seeded", 4, 0),
                                         SystemParams(0.5, 0.1, binary_prior()), 64, 0)
        rows, cols = inst.M // 4, inst.N // 4
        for r in range(4):
            for c in range(4):
                blk = inst.phi[r * rows:(r + 1) * rows, c * cols:(c + 1) * cols]
                assert np.any(blk != 0) == (r == c)

    def test_periodic_band(self):
        inst = generate_coupled_instance(build_ensemble("periodic", 9, 2),
                                         SystemParams(1.0, 0.1, binary_prior()), 90, 0)
        nz = np.abs(inst.phi).reshape(9, 10, 9, 10).sum(axis=(1, 3)) > 0
        assert np.all(nz.sum(axis=1) == 5)
        np.testing.assert_allclose(inst.y, inst.phi @ inst.signal + inst.z * np.sqrt(0.1),
                                   atol=1e-12)

    def test_homogeneous_matches_generate_instance(self):
        p = SystemParams(1.0, 0.1, binary_prior())
        inst = generate_coupled_instance(build_ensemble("periodic", 5, 2), p, 400, 7)
        plain = generate_instance(p, 400, 7)
        np.testing.assert_allclose(inst.phi, plain.phi, rtol=1e-14)
        assert inst.revealed == frozenset()

    def test_divisibility(self):
        p = SystemParams(0.25, 0.1, binary_prior())
        with pytest.raises(DomainError, match="nearest valid L is 32"):
            generate_coupled_instance(build_ensemble("seeded", 4, 1), p, 30, 0)

    def test_revealed_sections(self):
        ens = build_ensemble("seeded", 8, 2)
        inst = generate_coupled_instance(ens, SystemParams(0.5, 0.1, binary_prior()), 64, 0)
        expected = set(range(16)) | set(range(48, 64))
        assert inst.revealed == frozenset(expected)


class TestRunAmp:
    def test_single_atom(self):
        inst = generate_instance(SystemParams(0.5, 1.0, POINT), 50, 0)
        traj = run_amp(inst)
        assert traj.mse_per_iter[0] == 0.0 and traj.converged
        np.testing.assert_allclose(traj.estimate, 0.7)

    def test_first_entry_is_prior_mean(self):
        inst = generate_instance(SystemParams(0.5, 0.1, bernoulli_prior(0.1)), 500, 1)
        traj = run_amp(inst, max_iter=3)
        err = inst.signal - 0.1
        np.testing.assert_allclose(traj.mse_per_iter[0], err @ err / 500, rtol=1e-14)
        assert np.all(traj.mse_per_iter >= 0) and np.all(traj.ymmse_per_iter >= 0)

    def test_recovery_matches_se(self):
        p = SystemParams(1.0, 0.01, binary_prior())
        traj = run_amp(generate_instance(p, 2000, 0))
        assert traj.converged and traj.mse_per_iter[-1] < 1e-3
        assert abs(traj.mse_per_iter[-1] - run_se(p).final[0]) < 1e-3

    def test_deterministic(self):
        inst = generate_instance(SystemParams(0.5, 0.05, binary_prior()), 400, 9)
        a, b = run_amp(inst, max_iter=40), run_amp(inst, max_iter=40)
        np.testing.assert_array_equal(a.mse_per_iter, b.mse_per_iter)
        np.testing.assert_array_equal(a.estimate, b.estimate)

    def test_clamped_sections_are_exact(self):
        ens = build_ensemble("seeded", 8, 1)
        inst = generate_coupled_instance(ens, SystemParams(0.25, BERN_MID, bernoulli_prior(0.1)),
                                         512, 0)
        traj = run_amp(inst, max_iter=20)
        idx = sorted(inst.revealed)
        np.testing.assert_array_equal(traj.estimate[idx], inst.signal[idx])

    def test_bad_input(self):
        inst = generate_instance(SystemParams(0.5, 0.1, binary_prior()), 40, 0)
        with pytest.raises(DomainError):
            run_amp(dataclasses.replace(inst, y=inst.y[:-1]))
        for damping in (-0.1, 1.0):
            with pytest.raises(DomainError):
                run_amp(inst, damping=damping)

    def test_damping_converges_to_same_point(self):
        inst = generate_instance(SystemParams(1.0, 0.05, binary_prior()), 1000, 4)
        plain, damped = run_amp(inst), run_amp(inst, damping=0.3)
        assert damped.iterations > plain.iterations
        np.testing.assert_allclose(damped.mse_per_iter[-1], plain.mse_per_iter[-1], atol=1e-4)


class TestEmpiricalYmmse:
    def test_truth_gives_zero(self):
        inst = generate_instance(SystemParams(0.5, 0.1, binary_prior()), 100, 0)
        assert empirical_ymmse(inst, inst.signal) == 0.0
        with pytest.raises(DomainError):
            empirical_ymmse(inst, inst.signal[:-1])

    def test_prior_mean_gives_power(self):
        vals = [empirical_ymmse(inst, np.zeros(inst.N)) for inst in
                (generate_instance(SystemParams(0.5, 0.1, binary_prior()), 500, s)
                 for s in range(20))]
        se = np.std(vals, ddof=1) / np.sqrt(len(vals))
        assert abs(np.mean(vals) - 1.0) <= 5 * se

    @pytest.mark.slow
    def test_relation_to_mse(self):
        delta = 0.3
        p = SystemParams(1.0, delta, binary_prior())
        y, m = [], []
        for seed in range(100):
            t = run_amp(generate_instance(p, 2000, seed))
            y.append(t.ymmse_per_iter[-1])
            m.append(t.mse_per_iter[-1])
        mse = np.mean(m)
        np.testing.assert_allclose(np.mean(y), mse / (1 + mse / delta), rtol=0.05)


@pytest.mark.slow
class TestStatistical:
    def test_clamping_never_hurts(self):
        ens = build_ensemble("seeded", 8, 1)
        p = SystemParams(0.25, BERN_MID, bernoulli_prior(0.1))
        diffs = []
        for seed in range(10):
            inst = generate_coupled_instance(ens, p, 1024, seed)
            clamped = run_amp(inst).mse_per_iter[-1]
            free = run_amp(dataclasses.replace(inst, revealed=frozenset())).mse_per_iter[-1]
            diffs.append(clamped - free)
        se = np.std(diffs, ddof=1) / np.sqrt(len(diffs))
        assert np.mean(diffs) <= 5 * se

    def test_tracks_se_above_rs(self):
        gap, runs = tracking_gap(SystemParams(0.5, 1.5 * BIN_RS, binary_prior()), 2000, 20)
        assert all(r.converged for r in runs)
        assert gap <= 0.05

    @pytest.mark.xfail(strict=True, reason=(
        "below the algorithmic threshold the SE trajectory crosses a long plateau; "
        "at L=2000, 7 of 20 undamped runs lose calibration there and never "
        "converge, which moves the mean far from SE (gap about 0.16)"))
    def test_tracks_se_below_amp(self):
        gap, _ = tracking_gap(SystemParams(0.5, 0.5 * BIN_AMP, binary_prior()), 2000, 20)
        assert gap <= 0.05
