"""Fixed-stress coupling loop, difference bookkeeping and the contraction monitor."""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from porosplit import tensor as tn
from porosplit.coupling import (REPORT_COLUMNS, REPORT_FIELDS, SUMMARY_COLUMNS, Controls,
                                CouplingError, Problem, SplitState, contraction_report,
                                convergence_criterion, equilibrate, fixed_stress_step,
                                iteration_difference, mass_residual, mass_residual_scale,
                                monolithic_residual, run_transient)
from porosplit.verify import canonical_problem, plastic_problem


@pytest.fixture(scope="module")
def elastic_step():
    prob = canonical_problem(n=2)
    return prob, fixed_stress_step(prob, SplitState.initial(prob), 1.0, Controls(tol=1e-10))


@pytest.fixture(scope="module")
def plastic_step():
    prob = plastic_problem(n=2)
    ctl = Controls(tol=1e-9, newton_tol=1e-13)
    return prob, fixed_stress_step(prob, SplitState.initial(prob), 1.0, ctl)


class TestProblem:
    def test_initial_state_is_consistent(self):
        prob = canonical_problem(n=2)
        st = SplitState.initial(prob, p0=2e5)
        st.check(prob)
        assert_allclose(st.gauss.sigma, -prob.model.alpha * 2e5 + np.zeros_like(st.gauss.sigma))
        assert_allclose(st.tangent[0, 0], prob.model.D)

    def test_flow_operator_cached(self):
        prob = canonical_problem(n=2)
        assert prob.flow_operator(1.0) is prob.flow_operator(1.0)
        assert prob.flow_operator(0.5) is not prob.flow_operator(1.0)

    def test_time_dependent_data(self):
        prob = canonical_problem(n=2)
        tprob = Problem(prob.mesh, prob.model, source=lambda x, t: t * x[0],
                        pressure_bc={"xmin": lambda x, t: -t}, time_dependent=True)
        assert tprob.source_at(2.0)(np.array([3.0, 0, 0])) == 6.0
        assert tprob.pressure_bc_at(0.5)["xmin"](np.zeros(3)) == -0.5

    def test_nonpositive_dt(self):
        prob = canonical_problem(n=2)
        with pytest.raises(ValueError):
            fixed_stress_step(prob, SplitState.initial(prob), 0.0)


class TestDifferences:
    def test_iteration_difference(self, elastic_step):
        prob, res = elastic_step
        a = res.state
        b = replace(a, p=a.p - 1.0, m=a.m - 1,
                    gauss=replace(a.gauss, sigma=a.gauss.sigma - prob.model.alpha))
        d = iteration_difference(a, b, prob.model)
        assert_allclose(d.dp, 1.0)
        assert_allclose(d.dsigma, np.broadcast_to(prob.model.alpha, d.dsigma.shape))
        assert np.all(d.dphi_flow == 0) and np.array_equal(d.dp_flow, d.dp)
        C, B = prob.model.C, prob.model.B
        assert_allclose(d.dzeta, C + C / 3.0 * tn.ddot(B, prob.model.alpha), rtol=1e-13)
        assert_allclose(d.dzeta_flow, C, rtol=1e-14)

    def test_rejects_mismatched_iterates(self, elastic_step):
        prob, res = elastic_step
        with pytest.raises(ValueError, match="time level"):
            iteration_difference(res.state, replace(res.state, n=0), prob.model)
        other = SplitState.initial(canonical_problem(n=1))
        with pytest.raises(ValueError, match="discretisation"):
            iteration_difference(res.state, other, prob.model)

    def test_convergence_criterion(self, elastic_step):
        prob, res = elastic_step
        same = iteration_difference(res.state, res.state, prob.model)
        rep = res.reports[-1]
        ok, rdp, rdu = convergence_criterion(same, rep, res.state, 1e-8, 1e-8, 1.0)
        assert ok and rdp == 0.0 and rdu == 0.0
        first = res.reports[0]
        moved = iteration_difference(res.state, replace(res.first_iterate, m=1), prob.model)
        ok, rdp, _ = convergence_criterion(moved, first, res.state, 1e-8, 1e-8,
                                           first.bracket)
        assert not ok and rdp > 1e-8


class TestElasticMonitor:
    def test_converges_with_reports(self, elastic_step):
        _, res = elastic_step
        assert res.converged and res.iterations == len(res.reports) + 1
        assert [r.m for r in res.reports] == list(range(2, res.iterations + 1))
        assert res.reports[-1].converged and not res.reports[0].converged

    def test_corrected_balance_closes(self, elastic_step):
        _, res = elastic_step
        for r in res.reports:
            assert r.balance_rel_error <= 1e-10
            assert r.lag_term == 0.0
            assert r.compliance_secant == pytest.approx(r.compliance_term, rel=1e-9,
                                                        abs=1e-12 * r.metric_sigma)

    def test_stated_ledger_misses_by_fluid_content_gap(self, elastic_step):
        """Without plasticity the stated form is off by exactly the gap term."""
        _, res = elastic_step
        for r in res.reports:
            assert r.ledger_residual == pytest.approx(r.zeta_gap, rel=1e-7,
                                                      abs=1e-9 * abs(r.pressure_term))
            assert r.zeta_gap == pytest.approx(r.zeta_gap_identity, rel=1e-9)

    def test_contraction_and_young(self, elastic_step):
        _, res = elastic_step
        for r in res.reports:
            assert r.metric_sigma <= r.rhs_prev * (1 + 1e-8)
            assert r.young_slack >= 0.0
            assert r.young_bound - (-r.cross_term) >= -1e-12 * r.young_bound
            assert r.ratio < 1.0

    def test_rows_cover_columns(self, elastic_step):
        _, res = elastic_step
        row = res.reports[0].row()
        assert tuple(row) == REPORT_COLUMNS
        assert set(REPORT_FIELDS) <= set(REPORT_COLUMNS)
        assert "max_ratio" in SUMMARY_COLUMNS

    def test_report_on_zero_differences(self, elastic_step):
        prob, res = elastic_step
        d = iteration_difference(res.state, res.state, prob.model)
        rep = contraction_report(d, d.dsigma, d.dphi, res.state.tangent, prob.model, 1.0,
                                 prob.flow)
        assert rep.metric_sigma == 0.0 and rep.cross_term == 0.0
        assert np.isnan(rep.ratio)


class TestFixedPoint:
    def test_monolithic_residual(self, elastic_step):
        prob, res = elastic_step
        r = monolithic_residual(prob, res.state, SplitState.initial(prob), 1.0)
        assert max(r.values()) <= 1e-7

    def test_zero_forcing_keeps_state(self):
        prob = canonical_problem(n=2, drawdown=0.0)
        st = SplitState.initial(prob)
        res = fixed_stress_step(prob, st, 1.0)
        assert np.abs(res.state.p).max() == 0.0 and np.abs(res.state.u).max() == 0.0
        assert res.iterations == 2

    def test_decoupled_two_iterations(self):
        prob = canonical_problem(n=2, alpha=0.0)
        res = fixed_stress_step(prob, SplitState.initial(prob), 1.0)
        assert res.iterations == 2
        r = res.reports[0]
        assert r.cross_term == 0.0 and r.metric_sigma == 0.0

    def test_flow_operator_reused_across_steps(self):
        prob = canonical_problem(n=2)
        r1 = fixed_stress_step(prob, SplitState.initial(prob), 1.0)
        r2 = fixed_stress_step(prob, r1.state, 1.0)
        assert not r1.flow_operator_reused and r2.flow_operator_reused

    def test_run_transient_first_step_matches(self):
        prob = canonical_problem(n=2)
        h = run_transient(prob, 1.0, 1)
        ref = fixed_stress_step(canonical_problem(n=2),
                                SplitState.initial(canonical_problem(n=2)), 1.0)
        assert_allclose(h.states[-1].p, ref.state.p, rtol=1e-14)
        assert h.summaries[0].iterations == ref.iterations
        assert len(h.reports) == len(ref.reports)

    def test_mass_residual_bounded_by_coupling_tolerance(self):
        prob = canonical_problem(n=2)
        st0 = SplitState.initial(prob)
        res = fixed_stress_step(prob, st0, 1.0, Controls(tol=1e-10))
        r = mass_residual(prob, res.state, st0, 1.0)
        scale = mass_residual_scale(prob, res.state, st0, 1.0)
        assert np.all(np.abs(r) <= 10 * 1e-10 * scale)

    def test_equilibrate_balances_initial_state(self):
        prob = canonical_problem(n=2)
        st = equilibrate(prob, SplitState.initial(prob, p0=1e5))
        r = monolithic_residual(prob, st, st, 1.0)
        assert r["momentum"] <= 1e-10


class TestFailures:
    def test_iteration_cap_carries_history(self):
        prob = canonical_problem(n=2)
        with pytest.raises(CouplingError) as err:
            run_transient(prob, 1.0, 2, Controls(tol=1e-14, max_iterations=3))
        h = err.value.history
        assert h is not None and h.error.startswith("step 1")
        assert len(h.states) == 1 and len(h.reports) == 2

    def test_scripted_steps(self):
        prob = canonical_problem(n=2)
        h = run_transient(prob, [0.5, 1.0], 2)
        assert [s.time for s in h.summaries] == [0.5, 1.5]


class TestPlasticMonitor:
    def test_plastic_porosity_active(self, plastic_step):
        _, res = plastic_step
        phi = res.state.gauss.phi_p
        assert np.abs(phi).max() > 0
        assert np.abs(tn.trace(res.state.gauss.eps_p)).max() > 0

    def test_balance_with_plasticity(self, plastic_step):
        _, res = plastic_step
        assert any(r.lag_term != 0.0 for r in res.reports)
        for r in res.reports:
            assert r.balance_rel_error <= 1e-7
            assert np.isfinite(r.bracket)

    def test_identity_with_plastic_porosity(self, plastic_step):
        _, res = plastic_step
        for r in res.reports:
            assert r.zeta_gap_balance_rel_error <= 1e-9
