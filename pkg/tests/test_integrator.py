import numpy as np
import pytest

from skt_spde.integrator import (
    BlowUpBudgetExceeded,
    BlowUpError,
    SimConfig,
    em_step,
    run_ensemble,
    run_path,
)
from skt_spde.model import ModelParams, check_conditions
from skt_spde.noise import NoiseSpec, WienerIncrement
from skt_spde.spectral import GalerkinState, SpectralBasis, project


def heat_setup(M=8):
    p = ModelParams(n=1, a0=[1.0], a=[[1.0]])
    basis = SpectralBasis(dim=1, lengths=(np.pi,), modes_per_axis=M)
    u0 = project(basis, np.cos(basis.grid(0)))[None, :]
    return p, basis, u0


def noisy_setup():
    p = ModelParams(n=2, a0=[0.5, 0.8], a=[[1.0, 0.3], [0.3, 1.2]], pi=[1.0, 1.0])
    basis = SpectralBasis(dim=1, lengths=(np.pi,), modes_per_axis=8)
    x = basis.grid(0)
    u0 = np.stack(
        [project(basis, 1.0 + 0.3 * np.cos(x)), project(basis, 1.0 + 0.2 * np.cos(2 * x))]
    )
    spec = NoiseSpec(
        family="diagonal-multiplicative", rank=4, q=[1.0, 0.5, 1 / 3, 0.25],
        scale=0.3, master_seed=7,
    )
    return p, basis, u0, spec


class TestConfigValidation:
    def test_rejects_bad_time_grid(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.0, t_end=1.0, initial=np.zeros((1, 4)))
        with pytest.raises(ValueError):
            SimConfig(dt=2.0, t_end=1.0, initial=np.zeros((1, 4)))

    def test_rejects_unknown_scheme(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.1, t_end=1.0, initial=np.zeros((1, 4)), scheme="magic")

    def test_save_grid_includes_endpoints_and_respects_budget(self):
        cfg = SimConfig(dt=0.001, t_end=1.0, initial=np.zeros((1, 4)), max_snapshots=11)
        steps = cfg.save_steps()
        assert steps[0] == 0 and steps[-1] == cfg.n_steps
        assert len(steps) <= 11


class TestSingleStep:
    def test_explicit_linear_one_step(self):
        p, basis, u0 = heat_setup()
        cfg = SimConfig(
            dt=0.01, t_end=0.01, initial=u0, scheme="euler-maruyama", linear_mode=True
        )
        out = em_step(basis, p, None, cfg, GalerkinState(u0.copy()), None)
        np.testing.assert_allclose(
            out.coeffs[0], u0[0] * (1.0 - 0.01 * basis.eigenvalues), rtol=1e-14
        )

    def test_semi_implicit_linear_one_step(self):
        p, basis, u0 = heat_setup()
        cfg = SimConfig(
            dt=0.01, t_end=0.01, initial=u0, scheme="semi-implicit-diffusion", linear_mode=True
        )
        out = em_step(basis, p, None, cfg, GalerkinState(u0.copy()), None)
        np.testing.assert_allclose(
            out.coeffs[0], u0[0] / (1.0 + 0.01 * basis.eigenvalues), rtol=1e-14
        )

    def test_tamed_step_matches_explicit_for_small_drift(self):
        p, basis, u0 = heat_setup()
        base = dict(dt=1e-6, t_end=1e-6, initial=u0, linear_mode=True)
        explicit = em_step(
            basis, p, None, SimConfig(scheme="euler-maruyama", **base),
            GalerkinState(u0.copy()), None,
        )
        tamed = em_step(
            basis, p, None, SimConfig(scheme="tamed-euler-maruyama", **base),
            GalerkinState(u0.copy()), None,
        )
        np.testing.assert_allclose(tamed.coeffs, explicit.coeffs, rtol=1e-5)

    def test_blow_up_raises(self):
        p, basis, _ = heat_setup()
        huge = np.full((1, 8), 1e13)
        cfg = SimConfig(dt=0.01, t_end=0.01, initial=huge, scheme="euler-maruyama")
        with pytest.raises(BlowUpError):
            em_step(basis, p, None, cfg, GalerkinState(huge.copy()), None)

    def test_noise_increment_enters_linearly(self):
        p, basis, u0, spec = noisy_setup()
        cfg = SimConfig(dt=0.01, t_end=0.01, initial=u0, scheme="euler-maruyama")
        inc0 = WienerIncrement(np.zeros((2, 4)), 0.01)
        inc1 = WienerIncrement(np.ones((2, 4)), 0.01)
        s0 = em_step(basis, p, spec, cfg, GalerkinState(u0.copy()), inc0)
        s1 = em_step(basis, p, spec, cfg, GalerkinState(u0.copy()), inc1)
        inc2 = WienerIncrement(2.0 * np.ones((2, 4)), 0.01)
        s2 = em_step(basis, p, spec, cfg, GalerkinState(u0.copy()), inc2)
        np.testing.assert_allclose(
            s2.coeffs - s0.coeffs, 2.0 * (s1.coeffs - s0.coeffs), rtol=1e-12, atol=1e-14
        )


class TestDeterministicIntegration:
    def test_heat_decay_terminal_coefficient(self):
        p, basis, u0 = heat_setup(16)
        cfg = SimConfig(
            dt=1e-3, t_end=1.0, initial=u0, scheme="semi-implicit-diffusion",
            linear_mode=True, max_snapshots=2,
        )
        result = run_path(basis, p, None, cfg)
        assert result.exit_status == "completed"
        c1 = result.states[-1].coeffs[0, 1]
        assert c1 / u0[0, 1] == pytest.approx(np.exp(-1.0), rel=1e-3)

    def test_zero_noise_mass_conservation(self):
        p, basis, u0, _ = noisy_setup()
        cfg = SimConfig(dt=1e-3, t_end=0.2, initial=u0, max_snapshots=5)
        result = run_path(basis, p, None, cfg)
        mass0 = result.records[0].mass
        for rec in result.records[1:]:
            np.testing.assert_allclose(rec.mass, mass0, rtol=1e-10)

    def test_clip_negative_keeps_grid_nonnegative(self):
        p, basis, u0, spec = noisy_setup()
        strong = NoiseSpec(
            family=spec.family, rank=spec.rank, q=spec.q, scale=3.0,
            master_seed=spec.master_seed,
        )
        cfg = SimConfig(dt=1e-3, t_end=0.05, initial=u0, clip_negative=True, max_snapshots=5)
        result = run_path(basis, p, strong, cfg)
        from skt_spde.spectral import synthesize

        for state in result.states:
            assert synthesize(basis, state.coeffs).min() >= -1e-12


class TestEnsemble:
    def test_worker_count_does_not_change_results(self):
        p, basis, u0, spec = noisy_setup()
        rep = check_conditions(p)
        cfg = SimConfig(dt=1e-3, t_end=0.05, initial=u0, paths=64, max_snapshots=3)
        serial = run_ensemble(basis, p, spec, cfg, report=rep, workers=1)
        parallel = run_ensemble(basis, p, spec, cfg, report=rep, workers=4)
        for key in serial.time_stats:
            np.testing.assert_array_equal(
                serial.time_stats[key].mean, parallel.time_stats[key].mean
            )
        for key in serial.path_stats:
            np.testing.assert_array_equal(
                serial.path_stats[key].mean, parallel.path_stats[key].mean
            )

    def test_block_size_does_not_change_results(self):
        p, basis, u0, spec = noisy_setup()
        cfg1 = SimConfig(dt=1e-3, t_end=0.05, initial=u0, paths=30, max_snapshots=3, block_size=7)
        cfg2 = SimConfig(dt=1e-3, t_end=0.05, initial=u0, paths=30, max_snapshots=3, block_size=30)
        a = run_ensemble(basis, p, spec, cfg1)
        b = run_ensemble(basis, p, spec, cfg2)
        np.testing.assert_allclose(
            a.time_stats["l2_sq"].mean, b.time_stats["l2_sq"].mean, rtol=1e-12
        )

    def test_ensemble_matches_per_path_runs(self):
        p, basis, u0, spec = noisy_setup()
        cfg = SimConfig(dt=1e-3, t_end=0.02, initial=u0, paths=5, max_snapshots=3)
        stats = run_ensemble(basis, p, spec, cfg)
        per_path = []
        for pid in range(5):
            result = run_path(basis, p, spec, cfg, path_id=pid)
            per_path.append([rec.l2_sq for rec in result.records])
        np.testing.assert_allclose(
            stats.time_stats["l2_sq"].mean, np.mean(per_path, axis=0), rtol=1e-10
        )

    def test_mean_mass_constant_with_noise(self):
        p, basis, u0, spec = noisy_setup()
        cfg = SimConfig(dt=1e-3, t_end=0.1, initial=u0, paths=1000, max_snapshots=3)
        stats = run_ensemble(basis, p, spec, cfg)
        mass = stats.time_stats["mass"]
        drift = np.abs(mass.mean[-1] - mass.mean[0])
        assert np.all(drift <= 3 * mass.stderr[-1])

    def test_blow_up_budget_exceeded(self):
        # explicit scheme far beyond its stability limit diverges surely
        p, basis, u0 = heat_setup(16)
        p2 = ModelParams(n=1, a0=[50.0], a=[[1.0]])
        cfg = SimConfig(
            dt=0.5, t_end=50.0, initial=1e3 * u0, scheme="euler-maruyama",
            linear_mode=True, paths=8, max_snapshots=3,
        )
        with pytest.raises(BlowUpBudgetExceeded) as err:
            run_ensemble(basis, p2, None, cfg)
        assert err.value.blown == 8

    def test_inadmissible_report_is_accepted_but_recorded(self):
        # run_ensemble itself does not gate on admissibility (the command
        # line does); it must still integrate fine with report=None
        p, basis, u0, spec = noisy_setup()
        cfg = SimConfig(dt=1e-3, t_end=0.01, initial=u0, paths=2, max_snapshots=2)
        stats = run_ensemble(basis, p, spec, cfg, report=None)
        assert stats.total_paths == 2


class TestItoAudit:
    def test_constant_state_zero_noise_residual_is_zero(self):
        from skt_spde.diagnostics import ito_residual

        p = ModelParams(n=1, a0=[1.0], a=[[1.0]])
        basis = SpectralBasis(dim=1, lengths=(np.pi,), modes_per_axis=4)
        c0 = np.zeros((1, 4))
        c0[0, 0] = 2.0
        cfg = SimConfig(dt=0.01, t_end=0.05, initial=c0, audit_ito=True)
        result = run_path(basis, p, None, cfg)
        for i, audit in enumerate(result.audits):
            res = ito_residual(result.records[i], result.records[i + 1], audit, 0.01)
            assert abs(res) <= 1e-14

    def test_explicit_linear_defect_formula(self):
        # one explicit step of mode k: H changes by the exact square defect
        # (1/2) (dt a_0 lambda_k)^2 c^2 pi relative to the identity
        from skt_spde.diagnostics import ito_residual

        p = ModelParams(n=1, a0=[1.3], a=[[1.0]], pi=[2.0])
        basis = SpectralBasis(dim=1, lengths=(np.pi,), modes_per_axis=4)
        c0 = np.zeros((1, 4))
        c0[0, 2] = 1.7
        dt = 1e-3
        cfg = SimConfig(
            dt=dt, t_end=dt, initial=c0, scheme="euler-maruyama",
            linear_mode=True, audit_ito=True,
        )
        result = run_path(basis, p, None, cfg)
        res = ito_residual(result.records[0], result.records[1], result.audits[0], dt)
        lam = basis.eigenvalues[2]
        expect = 0.5 * (dt * 1.3 * lam) ** 2 * 1.7**2 * 2.0
        assert abs(res) == pytest.approx(expect, rel=1e-10)
        assert abs(res) <= dt**2 * (1.3 * lam) ** 2 * 1.7**2 * 2.0

    def test_with_noise_audit_martingale_matches_manual(self):
        p, basis, u0, spec = noisy_setup()
        dt = 1e-3
        cfg = SimConfig(dt=dt, t_end=5 * dt, initial=u0, audit_ito=True)
        result = run_path(basis, p, spec, cfg)
        assert len(result.audits) == 5
        for audit in result.audits:
            assert np.isfinite(audit.martingale)
            assert audit.hs_projected >= 0.0
            assert audit.dissipation >= 0.0
