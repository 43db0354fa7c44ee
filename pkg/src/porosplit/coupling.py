"""Fixed-stress split driver and per-iteration contraction monitor.

Each coupling iteration solves the flow problem with total stress and plastic
porosity lagged from the previous iteration, then the mechanics problem with
the new pressure frozen. The monitor evaluates, for every iteration ``k >= 2``,
the energy terms of the contraction estimate built from the iteration
differences ``d = x^k - x^{k-1}`` and ``d' = x^{k-1} - x^{k-2}``.

Flow iterates after the first are computed directly in difference form
(same factorised operator, right-hand side ``-(C/3)(B:d'sigma) - d'phi_p``), and
elastic mechanics likewise, so the monitored differences are exact solutions
of the difference equations rather than differences of large nearly equal
vectors.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import tensor as tn
from .flow import (FlowDiscretization, FlowOperator, assemble_flow_rhs, coupling_rhs,
                   dirichlet_vector, flow_residuals, local_mass_residual, source_vector)
from .material import GaussPointState, return_map_field
from .mechanics import MechDiscretization, assemble_mechanics, solve_mechanics
from .mesh import build_dofmap

log = logging.getLogger(__name__)


class CouplingError(RuntimeError):
    """Coupling iterations failed; ``reports`` / ``history`` hold partial results."""

    def __init__(self, message, reports=None, history=None):
        super().__init__(message)
        self.reports = reports
        self.history = history


@dataclass
class Controls:
    tol: float = 1e-8
    tol_bracket: float = 1e-8
    bracket_atol: float = 0.0
    max_iterations: int = 50
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    linear_tol: float = 1e-10
    linear_solver: str = "direct"
    equilibrate: bool = False


class Problem:
    """Mesh, material and loading of a coupled run.

    ``source`` (q), ``pressure_bc`` (g per side) and ``traction`` values may be
    constants or callables; with ``time_dependent=True`` callables take
    ``(x, t)`` and are evaluated at the new time level.
    """

    def __init__(self, mesh, model, source=0.0, pressure_bc=None, traction=None,
                 gravity=False, time_dependent=False):
        self.mesh = mesh
        self.model = model
        self.source = source
        self.pressure_bc = pressure_bc
        self.traction = traction or {}
        self.gravity = gravity
        self.time_dependent = time_dependent
        self.dofmap = build_dofmap(mesh)
        geom = mesh.geometry()
        self.flow = FlowDiscretization(mesh, model, geom)
        self.mech = MechDiscretization(mesh, model, self.dofmap, geom)
        self._flow_ops = {}

    def flow_operator(self, dt):
        if dt not in self._flow_ops:
            self._flow_ops[dt] = FlowOperator(self.flow, dt)
        return self._flow_ops[dt]

    def _bind(self, value, t):
        if self.time_dependent and callable(value):
            return lambda x: value(x, t)
        return value

    def source_at(self, t):
        return self._bind(self.source, t)

    def pressure_bc_at(self, t):
        g = self.pressure_bc
        if isinstance(g, dict):
            return {k: self._bind(v, t) for k, v in g.items()}
        return self._bind(g, t)

    def traction_at(self, t):
        return {k: self._bind(v, t) for k, v in self.traction.items()}

    @property
    def body_force(self):
        return self.model.body_force if self.gravity else None

    @property
    def n_gauss(self):
        return (self.mesh.n_cells, 8)


@dataclass
class SplitState:
    p: np.ndarray
    z: np.ndarray
    u: np.ndarray
    gauss: GaussPointState       # sigma = total stress
    eps: np.ndarray              # total strain at Gauss points
    tangent: np.ndarray          # D_ep at Gauss points
    time: float = 0.0
    n: int = 0
    m: int = 0

    @classmethod
    def initial(cls, problem, p0=0.0):
        mesh, model = problem.mesh, problem.model
        p = source_vector(problem.flow, p0)
        gauss = GaussPointState.zeros(problem.n_gauss)
        gauss = replace(gauss, sigma=-model.alpha * p[:, None, None]
                        + np.zeros(problem.n_gauss + (6,)))
        return cls(p=p, z=np.zeros(mesh.n_faces), u=np.zeros(3 * mesh.n_vertices),
                   gauss=gauss, eps=np.zeros(problem.n_gauss + (6,)),
                   tangent=np.broadcast_to(model.D, problem.n_gauss + (6, 6)).copy())

    def check(self, problem):
        dm = problem.dofmap
        assert self.p.shape == (dm.n_cells,)
        assert self.z.shape == (dm.n_faces,)
        assert self.u.shape == (3 * dm.n_vertices,)
        assert np.all(self.z[dm.flux_fixed] == 0.0)
        assert np.all(self.u[dm.constrained] == 0.0)


@dataclass
class Differences:
    """Iteration differences at one coupling iteration (Gauss-point arrays (nc, 8, ...))."""

    dp: np.ndarray
    dz: np.ndarray
    du: np.ndarray
    dsigma: np.ndarray
    deps: np.ndarray
    deps_p: np.ndarray
    dphi: np.ndarray
    dp_flow: np.ndarray
    dphi_flow: np.ndarray
    dzeta: np.ndarray
    dzeta_flow: np.ndarray


def _make_differences(dp, dz, du, dsigma, deps, deps_p, dphi, C, B):
    dp_gp = np.broadcast_to(dp[:, None], dphi.shape)
    dphi_flow = np.zeros_like(dphi)
    dzeta = C * dp_gp + C / 3.0 * tn.ddot(B, dsigma) + dphi
    dzeta_flow = C * dp_gp + dphi_flow
    return Differences(dp=dp, dz=dz, du=du, dsigma=dsigma, deps=deps, deps_p=deps_p,
                       dphi=dphi, dp_flow=dp.copy(), dphi_flow=dphi_flow, dzeta=dzeta,
                       dzeta_flow=dzeta_flow)


def iteration_difference(state_m, state_m_minus_1, model):
    """Differences of two iterates at the same time level.

    Plastic porosity is a mechanics quantity and does not change during the flow
    solve, so the flow-only change ``dphi_flow`` is zero and ``dp_flow = dp``.
    """
    if state_m.p.shape != state_m_minus_1.p.shape or state_m.u.shape != state_m_minus_1.u.shape:
        raise ValueError("iterates belong to different discretisations")
    if state_m.n != state_m_minus_1.n:
        raise ValueError("iterates belong to different time levels")
    a, b = state_m, state_m_minus_1
    return _make_differences(
        a.p - b.p, a.z - b.z, a.u - b.u, a.gauss.sigma - b.gauss.sigma, a.eps - b.eps,
        a.gauss.eps_p - b.gauss.eps_p, a.gauss.phi_p - b.gauss.phi_p, model.C, model.B)


REPORT_FIELDS = (
    "metric_sigma", "pressure_term", "darcy_term", "compliance_term", "zeta_term",
    "phi_gap_term", "bracket", "rhs_prev", "cross_term",
)


@dataclass
class ContractionReport:
    """Terms of the contraction estimate at coupling iteration ``m``.

    The first nine fields follow the estimate as stated; ``ledger_residual`` is
    ``LHS - bracket - cross_term`` for those fields. The ``balance_*`` fields
    hold the exactly balancing variant of the same energy identity (coefficient
    ``2/C`` on the fluid-content gap, secant compliance, and the term ``lag_term``
    arising from lagging plastic porosity); ``balance_residual`` vanishes up to
    solver accuracy for every consistent iterate.
    """

    step: int
    m: int
    metric_sigma: float
    pressure_term: float
    darcy_term: float
    compliance_term: float
    zeta_term: float
    phi_gap_term: float
    bracket: float
    rhs_prev: float
    cross_term: float
    young_bound: float = 0.0
    young_slack: float = 0.0
    ledger_residual: float = 0.0
    ledger_rel_error: float = 0.0
    zeta_gap: float = 0.0           # (1/C)|dzeta - dzeta_f|^2
    zeta_gap_identity: float = 0.0  # (C/9)|B:dsigma|^2
    zeta_gap_rel_error: float = 0.0
    zeta_gap_balance_rel_error: float = 0.0
    compliance_secant: float = 0.0
    lag_term: float = 0.0
    balance_bracket: float = 0.0
    balance_phi_gap: float = 0.0
    balance_residual: float = 0.0
    balance_rel_error: float = 0.0
    ratio: float = float("nan")
    rel_dp: float = float("nan")
    rel_du: float = float("nan")
    converged: bool = False

    @property
    def lhs(self):
        return (self.metric_sigma + self.pressure_term + self.darcy_term
                + self.compliance_term + self.zeta_term + self.phi_gap_term - self.bracket)

    def row(self):
        return asdict(self)


def _l2sq(jxw, values):
    return float(np.einsum("cg,cg->", jxw, values * values))


def _l2dot(jxw, a, b):
    return float(np.einsum("cg,cg->", jxw, a * b))


def contraction_report(diffs, dsigma_prev, dphi_prev, tangent_prev, model, dt, flow_disc,
                       step=0, m=0):
    """Evaluate every term of the contraction estimate by Gauss quadrature.

    ``dsigma_prev`` / ``dphi_prev`` are the previous iteration's differences
    (the ones the current flow solve lagged); ``tangent_prev`` is ``D_ep`` at
    the previous iterate, inverted per Gauss point for ``compliance_term``.
    """
    C, B = model.C, model.B
    jxw = flow_disc.geom.jxw
    P = np.broadcast_to(diffs.dp[:, None], jxw.shape)
    b = tn.ddot(B, diffs.dsigma)
    b_prev = tn.ddot(B, dsigma_prev)
    Phi, Phi_f = diffs.dphi, diffs.dphi_flow
    e = diffs.dzeta - diffs.dzeta_flow

    metric = C / 6.0 * _l2sq(jxw, b)
    pressure = C / 2.0 * _l2sq(jxw, P)
    darcy = dt * float(diffs.dz @ (flow_disc.A_zz @ diffs.dz))
    try:
        comp_inv = tn.invert6(tangent_prev)
        s_inv = tn.apply4(comp_inv, diffs.dsigma)
        compliance = float(np.einsum("cg,cg->", jxw, tn.ddot(diffs.dsigma, s_inv)))
    except np.linalg.LinAlgError:
        compliance = float("nan")
    zeta = _l2sq(jxw, diffs.dzeta) / (2.0 * C)
    phi_gap = _l2sq(jxw, Phi - Phi_f) / C
    zgap = _l2sq(jxw, e) / C
    bracket = zgap + _l2sq(jxw, Phi) / (2.0 * C) + _l2dot(jxw, b, Phi_f) / 3.0
    rhs_prev = C / 6.0 * _l2sq(jxw, b_prev)
    cross = -C / 3.0 * _l2dot(jxw, b_prev, P)
    young = C / 3.0 * (0.5 * _l2sq(jxw, b_prev) + 0.5 * _l2sq(jxw, P))
    # bound - cross is a perfect square; evaluate it as one to avoid cancellation
    slack = C / 6.0 * _l2sq(jxw, b_prev + P)

    terms = [metric, pressure, darcy, compliance, zeta, phi_gap, bracket, cross]
    lhs = metric + pressure + darcy + compliance + zeta + phi_gap - bracket
    scale = max(max(abs(t) for t in terms), 1e-300)
    ledger = lhs - cross

    # strain change not explained by pressure: d(eps) - D^{-1} alpha dp
    pressure_strain = tn.apply4(model.D_inv, model.alpha)
    secant = float(np.einsum("cg,cg->", jxw, tn.ddot(
        diffs.dsigma, diffs.deps - pressure_strain * P[..., None])))
    lag = _l2dot(jxw, Phi - np.broadcast_to(dphi_prev, Phi.shape), P)
    bal_phi_gap = 2.0 * _l2sq(jxw, Phi - Phi_f) / C
    bal_bracket = (2.0 * zgap + _l2sq(jxw, Phi) / (2.0 * C) - _l2dot(jxw, b, Phi)
                   + 4.0 / 3.0 * _l2dot(jxw, b, Phi_f))
    bal_lhs = metric + pressure + darcy + secant + zeta + bal_phi_gap - bal_bracket
    bal_terms = [metric, pressure, darcy, secant, zeta, bal_phi_gap, bal_bracket, cross, lag]
    bal_scale = max(max(abs(t) for t in bal_terms), 1e-300)
    bal_res = bal_lhs - cross - lag

    ident = C / 9.0 * _l2sq(jxw, b)
    ident_lhs = zgap - _l2sq(jxw, Phi - Phi_f) / C - _l2dot(jxw, b, Phi - Phi_f) / 3.0
    ident_scale = max(abs(ident), abs(ident_lhs), 1e-300)
    # same identity with the cross coefficient that follows from expanding the square
    ident_bal = zgap - _l2sq(jxw, Phi - Phi_f) / C - 2.0 * _l2dot(jxw, b, Phi - Phi_f) / 3.0
    ident_bal_scale = max(abs(ident), abs(ident_bal), 1e-300)
    return ContractionReport(
        step=step, m=m, metric_sigma=metric, pressure_term=pressure, darcy_term=darcy,
        compliance_term=compliance, zeta_term=zeta, phi_gap_term=phi_gap, bracket=bracket,
        rhs_prev=rhs_prev, cross_term=cross, young_bound=young, young_slack=slack,
        ledger_residual=ledger, ledger_rel_error=abs(ledger) / scale,
        zeta_gap=zgap, zeta_gap_identity=ident,
        zeta_gap_rel_error=abs(ident_lhs - ident) / ident_scale,
        zeta_gap_balance_rel_error=abs(ident_bal - ident) / ident_bal_scale,
        compliance_secant=secant, lag_term=lag, balance_bracket=bal_bracket,
        balance_phi_gap=bal_phi_gap, balance_residual=bal_res,
        balance_rel_error=abs(bal_res) / bal_scale,
        ratio=metric / rhs_prev if rhs_prev > 0 else float("nan"),
    )


def _rel(d, x, weights=None):
    if weights is None:
        dn, xn = np.linalg.norm(d), np.linalg.norm(x)
    else:
        dn, xn = np.sqrt(np.sum(weights * d * d)), np.sqrt(np.sum(weights * x * x))
    if dn == 0.0:
        return 0.0
    return dn / xn if xn > 0 else float("inf")


def convergence_criterion(diffs, report, state, tol, tol_bracket, bracket_initial,
                          bracket_atol=0.0, volumes=None):
    """Relative pressure and displacement changes below ``tol`` and the bracket
    below ``max(tol_bracket * bracket_initial, bracket_atol)``."""
    rel_dp = _rel(diffs.dp, state.p, volumes)
    rel_du = _rel(diffs.du, state.u)
    bracket_ok = abs(report.bracket) <= max(tol_bracket * abs(bracket_initial), bracket_atol)
    return bool(rel_dp <= tol and rel_du <= tol and bracket_ok), rel_dp, rel_du


@dataclass
class StepResult:
    state: SplitState
    reports: list
    iterations: int
    converged: bool
    rel_dp: float
    rel_du: float
    flow_operator_reused: bool
    newton_iterations: list = field(default_factory=list)
    first_iterate: SplitState = None


def _mechanics(problem, p, state_prev, states_n, t, controls, u_start):
    system = assemble_mechanics(problem.mech, p, traction=problem.traction_at(t),
                                body_force=problem.body_force)
    return solve_mechanics(problem.mech, system, states_n, u0=u_start,
                           tol=controls.newton_tol, max_iter=controls.newton_max_iter,
                           linear_solver=controls.linear_solver,
                           linear_tol=min(controls.linear_tol, 1e-12))


def fixed_stress_step(problem, state_n, dt, controls=None):
    """Advance one backward-Euler step with fixed-stress coupling iterations."""
    controls = controls or Controls()
    if dt <= 0:
        raise ValueError("dt must be positive")
    model = problem.model
    C, B = model.C, model.B
    flow = problem.flow
    mech = problem.mech
    t = state_n.time + dt
    reused = dt in problem._flow_ops
    op = problem.flow_operator(dt)
    elastic = model.plasticity is None
    states_n = state_n.gauss
    q, g = problem.source_at(t), problem.pressure_bc_at(t)

    prev = state_n
    dsig_prev = dphi_prev = None
    reports, newton_its = [], []
    bracket0 = None
    first = None
    rel_dp = rel_du = float("inf")
    for k in range(1, controls.max_iterations + 1):
        # flow solve, stress and plastic porosity lagged
        if k == 1:
            rhs_p, rhs_z = assemble_flow_rhs(flow, state_n.p, states_n.sigma, states_n.phi_p,
                                             prev.gauss.sigma, prev.gauss.phi_p, dt, q, g,
                                             gravity=problem.gravity)
            p, z = op.solve(rhs_p, rhs_z)
            dp, dz = p - prev.p, z - prev.z
        else:
            dp, dz = op.solve(coupling_rhs(flow, dsig_prev, dphi_prev, C, B),
                              np.zeros(problem.mesh.n_faces))
            p, z = prev.p + dp, prev.z + dz

        # mechanics solve, pressure frozen
        if elastic and k > 1 and controls.linear_solver == "direct":
            du = np.zeros(mech.ndof)
            du[mech.free] = mech.elastic_factorization().solve(
                mech.pressure_force(dp)[mech.free])
            u = prev.u + du
            deps = mech.strain(du)
            dsig = tn.apply4(model.D, deps) - model.alpha * dp[:, None, None]
            eps = prev.eps + deps
            gauss = replace(prev.gauss, sigma=prev.gauss.sigma + dsig)
            tangent = prev.tangent
            deps_p = np.zeros_like(deps)
            dphi = np.zeros(problem.n_gauss)
            newton_its.append(1)
        else:
            res = _mechanics(problem, p, prev, states_n, t, controls, prev.u)
            newton_its.append(res.iterations)
            u, eps, tangent = res.u, res.eps, res.tangent
            gauss = replace(res.states, sigma=res.sigma)
            du = res.du
            deps = eps - prev.eps
            dsig = gauss.sigma - prev.gauss.sigma
            deps_p = gauss.eps_p - prev.gauss.eps_p
            dphi = gauss.phi_p - prev.gauss.phi_p

        cur = SplitState(p=p, z=z, u=u, gauss=gauss, eps=eps, tangent=tangent,
                         time=t, n=state_n.n + 1, m=k)
        if k == 1:
            first = cur
        else:
            diffs = _make_differences(dp, dz, du, dsig, deps, deps_p, dphi, C, B)
            rep = contraction_report(diffs, dsig_prev, dphi_prev, prev.tangent, model, dt,
                                     flow, step=state_n.n + 1, m=k)
            if bracket0 is None:
                bracket0 = rep.bracket
            ok, rel_dp, rel_du = convergence_criterion(
                diffs, rep, cur, controls.tol, controls.tol_bracket, bracket0,
                controls.bracket_atol, flow.volumes)
            rep.rel_dp, rep.rel_du, rep.converged = rel_dp, rel_du, ok
            reports.append(rep)
            log.debug("step %d iteration %d: rel_dp=%.3e rel_du=%.3e ratio=%.4f",
                      cur.n, k, rel_dp, rel_du, rep.ratio)
            if ok:
                return StepResult(cur, reports, k, True, rel_dp, rel_du, reused, newton_its,
                                  first)
        prev = cur
        dsig_prev, dphi_prev = dsig, dphi
    raise CouplingError(
        f"fixed-stress iterations did not converge in {controls.max_iterations} "
        f"iterations (rel_dp={rel_dp:.3e}, rel_du={rel_du:.3e})", reports=reports)


def equilibrate(problem, state, controls=None):
    """Solve mechanics at the initial pressure so that the start state is balanced."""
    controls = controls or Controls()
    res = _mechanics(problem, state.p, state, state.gauss, state.time, controls, state.u)
    return replace(state, u=res.u, eps=res.eps, tangent=res.tangent,
                   gauss=replace(res.states, sigma=res.sigma))


def mass_residual(problem, state_new, state_old, dt):
    return local_mass_residual(
        problem.flow, state_new.p, state_new.z, state_new.gauss.sigma, state_new.gauss.phi_p,
        state_old.p, state_old.gauss.sigma, state_old.gauss.phi_p, dt,
        problem.source_at(state_new.time))


def mass_residual_scale(problem, state_new, state_old, dt):
    """Per-cell magnitude of the terms entering the local mass balance."""
    flow = problem.flow
    model = problem.model
    C, B = model.C, model.B
    terms = [
        C * np.abs(state_new.p) * flow.volumes,
        C * np.abs(state_old.p) * flow.volumes,
        flow.cell_integral(np.abs(C / 3.0 * tn.ddot(B, state_new.gauss.sigma))),
        flow.cell_integral(np.abs(C / 3.0 * tn.ddot(B, state_old.gauss.sigma))),
        dt * (abs(flow.B_div) @ np.abs(state_new.z)),
        dt * np.abs(source_vector(flow, problem.source_at(state_new.time))) * flow.volumes,
    ]
    return np.max(terms, axis=0)


def monolithic_residual(problem, state_new, state_old, dt):
    """Relative residuals of the unsplit discrete equations at ``state_new``.

    The mass balance uses the actual new stress and plastic porosity (no lag).
    """
    flow, mech, model = problem.flow, problem.mech, problem.model
    t = state_new.time
    rhs_p, rhs_z = assemble_flow_rhs(
        flow, state_old.p, state_old.gauss.sigma, state_old.gauss.phi_p,
        state_new.gauss.sigma, state_new.gauss.phi_p, dt, problem.source_at(t),
        problem.pressure_bc_at(t), gravity=problem.gravity)
    r_p, r_z = flow_residuals(flow, state_new.p, state_new.z, rhs_p, rhs_z, dt)
    free = problem.mesh.flow_marker != 2
    C = model.C
    scale_p = max(np.linalg.norm(C * flow.volumes * state_new.p),
                  np.linalg.norm(dt * (flow.B_div @ state_new.z)), np.linalg.norm(rhs_p),
                  1e-300)
    scale_z = max(np.linalg.norm((flow.A_zz @ state_new.z)[free]),
                  np.linalg.norm((flow.B_div.T @ state_new.p)[free]),
                  np.linalg.norm(rhs_z[free]), 1e-300)
    system = assemble_mechanics(mech, state_new.p, traction=problem.traction_at(t),
                                body_force=problem.body_force)
    p_gp = np.broadcast_to(state_new.p[:, None], problem.n_gauss)
    sig_eff, _, _ = return_map_field(state_new.eps, state_old.gauss, model, p_gp)
    R = (mech.internal_force(sig_eff) - system.rhs_u)[mech.free]
    scale_u = max(np.linalg.norm(system.rhs_u[mech.free]),
                  np.linalg.norm(mech.internal_force(sig_eff)[mech.free]), 1e-300)
    return {
        "mass": float(np.linalg.norm(r_p) / scale_p),
        "darcy": float(np.linalg.norm(r_z) / scale_z),
        "momentum": float(np.linalg.norm(R) / scale_u),
    }


@dataclass
class StepSummary:
    step: int
    time: float
    iterations: int
    converged: bool
    rel_dp: float
    rel_du: float
    mean_ratio: float
    max_ratio: float
    max_ledger_rel_error: float
    max_balance_rel_error: float
    min_young_slack: float
    max_mass_residual: float
    mass_residual_rel: float
    storage_constant: float
    storage_constant_tangent: float
    max_newton_iterations: int

    def row(self):
        return asdict(self)


@dataclass
class History:
    states: list
    reports: list           # flat list of ContractionReport over all steps
    summaries: list
    equilibrated: bool = False
    error: str = None


def tangent_storage_constant(problem, state):
    """Volume average of ``1/M + alpha : D_ep^{-1} alpha`` (diagnostic only)."""
    model = problem.model
    try:
        inv = tn.invert6(state.tangent)
    except np.linalg.LinAlgError:
        return float("nan")
    vals = 1.0 / model.biot_modulus + tn.ddot(model.alpha, tn.apply4(inv, model.alpha))
    jxw = problem.flow.geom.jxw
    return float(np.sum(vals * jxw) / np.sum(jxw))


def summarize_step(problem, result, state_old, dt):
    reps = result.reports
    ratios = np.array([r.ratio for r in reps if np.isfinite(r.ratio) and r.ratio > 0])
    mres = mass_residual(problem, result.state, state_old, dt)
    mscale = mass_residual_scale(problem, result.state, state_old, dt)
    return StepSummary(
        step=result.state.n, time=result.state.time, iterations=result.iterations,
        converged=result.converged, rel_dp=result.rel_dp, rel_du=result.rel_du,
        mean_ratio=float(np.exp(np.mean(np.log(ratios)))) if len(ratios) else float("nan"),
        max_ratio=float(ratios.max()) if len(ratios) else float("nan"),
        max_ledger_rel_error=max((r.ledger_rel_error for r in reps), default=0.0),
        max_balance_rel_error=max((r.balance_rel_error for r in reps), default=0.0),
        min_young_slack=min((r.young_slack for r in reps), default=0.0),
        max_mass_residual=float(np.abs(mres).max()),
        mass_residual_rel=float(np.max(np.abs(mres) / np.maximum(mscale, 1e-300))),
        storage_constant=problem.model.C,
        storage_constant_tangent=tangent_storage_constant(problem, result.state),
        max_newton_iterations=max(result.newton_iterations, default=0),
    )


def run_transient(problem, dt, n_steps, controls=None, p0=0.0, on_step=None):
    """March ``n_steps`` backward-Euler steps (``dt`` scalar or sequence).

    ``on_step(history)`` is called after each completed step. On failure a
    :class:`CouplingError` carrying the partial ``history`` is raised.
    """
    controls = controls or Controls()
    dts = np.broadcast_to(np.asarray(dt, dtype=float), (n_steps,))
    state = SplitState.initial(problem, p0)
    if controls.equilibrate:
        state = equilibrate(problem, state, controls)
    history = History(states=[state], reports=[], summaries=[],
                      equilibrated=controls.equilibrate)
    for n in range(n_steps):
        try:
            result = fixed_stress_step(problem, state, float(dts[n]), controls)
        except Exception as exc:
            if isinstance(exc, CouplingError) and exc.reports:
                history.reports.extend(exc.reports)
            history.error = f"step {n + 1}: {exc}"
            raise CouplingError(history.error, reports=getattr(exc, "reports", None),
                                history=history) from exc
        history.reports.extend(result.reports)
        history.summaries.append(summarize_step(problem, result, state, float(dts[n])))
        state = result.state
        history.states.append(state)
        if on_step is not None:
            on_step(history)
    return history


REPORT_COLUMNS = tuple(f.name for f in fields(ContractionReport))
SUMMARY_COLUMNS = tuple(f.name for f in fields(StepSummary))
