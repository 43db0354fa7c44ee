"""Canned scenarios and the built-in property checks behind ``porosplit verify``."""

import itertools
import time

import numpy as np

from . import tensor as tn
from .coupling import Controls, Problem, SplitState, fixed_stress_step
from .material import (GaussPointState, MaterialModel, Plasticity, return_map, skempton_tensor,
                       yield_function)
from .mechanics import MechDiscretization, assemble_mechanics, solve_mechanics
from .mesh import SIDES, build_dofmap, classify_boundary, generate_brick

ORTHOTROPIC = dict(E1=1.0e9, E2=0.6e9, E3=0.4e9, nu12=0.25, nu13=0.2, nu23=0.3,
                   G12=0.4e9, G13=0.3e9, G23=0.2e9)
ANISOTROPIC_BIOT = np.array([0.8, 0.7, 0.6, 0.05, 0.03, 0.02])


def drawdown_mesh(n=4, distortion=0.0, seed=0, confined=False):
    """Unit cube; flow-Dirichlet left face, no-flow elsewhere; rollers on the
    minimum sides (``confined``: on every side except ``zmax``)."""
    mesh = generate_brick(n, n, n, distortion=distortion, seed=seed)
    rules = {s: ("neumann", "neumann") for s in SIDES}
    for s in ("xmin", "ymin", "zmin"):
        rules[s] = ("neumann", "dirichlet")
    if confined:
        for s in ("xmax", "ymax"):
            rules[s] = ("neumann", "dirichlet")
    rules["xmin"] = ("dirichlet", "dirichlet")
    return classify_boundary(mesh, rules)


def canonical_material(anisotropic=False, alpha=0.8, plasticity=None):
    common = dict(biot_modulus=1e9, permeability=1e-12, viscosity=1.0, plasticity=plasticity)
    if anisotropic:
        return MaterialModel(D=tn.orthotropic_stiffness(**ORTHOTROPIC),
                             alpha=ANISOTROPIC_BIOT * (alpha / 0.8), **common)
    return MaterialModel.isotropic(1e9, 0.25, alpha=alpha, **common)


def canonical_problem(n=4, anisotropic=False, alpha=0.8, drawdown=-1e6, distortion=0.0):
    """Elastic drawdown test: 1 MPa pressure drop on the left face."""
    return Problem(drawdown_mesh(n, distortion), canonical_material(anisotropic, alpha),
                   pressure_bc={"xmin": drawdown})


def plastic_problem(kind="drucker_prager", n=2, yield_stress=3e5, friction=0.1,
                    hardening=5e8, load=-3e6, drawdown=-1e6):
    """Confined column under a top load with a left-face drawdown; yields at step 1."""
    plast = Plasticity(kind, yield_stress=yield_stress, hardening=hardening,
                       friction=friction if kind == "drucker_prager" else 0.0)
    return Problem(drawdown_mesh(n, confined=True), canonical_material(plasticity=plast),
                   pressure_bc={"xmin": drawdown}, traction={"zmax": [0.0, 0.0, load]})


def uniaxial_cube(plasticity, E=1.0, nu=0.0):
    """Single cube with rollers on the minimum sides, loaded on ``zmax``."""
    mesh = generate_brick(1, 1, 1)
    rules = {s: ("neumann", "neumann") for s in SIDES}
    for s in ("xmin", "ymin", "zmin"):
        rules[s] = ("neumann", "dirichlet")
    mesh = classify_boundary(mesh, rules)
    model = MaterialModel.isotropic(E, nu, alpha=0.0, biot_modulus=1.0, permeability=1.0,
                                    plasticity=plasticity)
    return mesh, model, MechDiscretization(mesh, model, build_dofmap(mesh))


def uniaxial_oracle(load, E, yield_stress, hardening):
    """Total axial strain of a uniaxial-stress bar (nu = 0) under linear hardening."""
    if load <= yield_stress:
        return load / E
    return load / E + (load - yield_stress) / hardening


# checks: name -> callable returning (passed, detail)

def _check_tensor(rng):
    worst = 0.0
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        S, T = A + A.T, rng.standard_normal((3, 3))
        T = T + T.T
        P = rng.standard_normal((6, 6))
        full = tn.mandel_to_tensor4(P)
        loop = sum(S[i, j] * T[i, j] for i, j in itertools.product(range(3), repeat=2))
        worst = max(worst, abs(tn.ddot(tn.to_mandel(S), tn.to_mandel(T)) - loop)
                    / max(abs(loop), 1e-300))
        PS = np.zeros((3, 3))
        for i, j, k, l in itertools.product(range(3), repeat=4):
            PS[i, j] += full[i, j, k, l] * S[k, l]
        got = tn.from_mandel(tn.apply4(P, tn.to_mandel(S)))
        worst = max(worst, np.abs(got - PS).max() / np.abs(PS).max())
    return worst <= 1e-13, f"max relative error {worst:.2e}"


def _check_skempton(rng):
    worst = 0.0
    for _ in range(5):
        E, nu, a, M = rng.uniform(1e8, 1e10), rng.uniform(0.0, 0.45), rng.uniform(0.1, 1), \
            rng.uniform(1e8, 1e10)
        model = MaterialModel.isotropic(E, nu, alpha=a, biot_modulus=M, permeability=1e-12)
        Kb = E / (3.0 * (1.0 - 2.0 * nu))
        C = model.C
        B = skempton_tensor(model, model.D_inv, C)
        exact = a / (Kb * C) * tn.IDENTITY2
        worst = max(worst, np.abs(B - exact).max() / np.abs(exact).max())
    return worst <= 1e-12, f"max relative error {worst:.2e}"


def _check_darcy_column(rng):
    mesh = generate_brick(4, 2, 2)
    rules = {s: ("neumann", "dirichlet") for s in SIDES}
    rules["xmin"] = ("dirichlet", "dirichlet")
    rules["xmax"] = ("dirichlet", "dirichlet")
    mesh = classify_boundary(mesh, rules)
    model = MaterialModel.isotropic(1.0, 0.25, alpha=0.0, biot_modulus=1.0, permeability=1.0)
    prob = Problem(mesh, model, pressure_bc={"xmin": 1.0, "xmax": 0.0})
    st = SplitState.initial(prob, p0=lambda x: 1.0 - x[0])
    res = fixed_stress_step(prob, st, 1.0)
    err = np.abs(res.state.p - (1.0 - mesh.cell_centers()[:, 0])).max()
    return err <= 1e-12, f"max pressure error {err:.2e}"


def _check_uniaxial_plastic(rng):
    sy, H, load = 0.5, 0.3, 1.0
    mesh, model, disc = uniaxial_cube(Plasticity("von_mises", yield_stress=sy, hardening=H))
    system = assemble_mechanics(disc, np.zeros(1), traction={"zmax": [0.0, 0.0, load]})
    res = solve_mechanics(disc, system, GaussPointState.zeros((1, 8)), tol=1e-13)
    uz = res.u[3 * np.flatnonzero(np.isclose(mesh.vertices[:, 2], 1.0)) + 2]
    err = np.abs(uz - uniaxial_oracle(load, 1.0, sy, H)).max()
    f = np.abs(yield_function(res.sigma_eff, res.states.acc, model.plasticity)).max()
    ok = err <= 1e-10 and f <= 1e-10 * sy
    return ok, f"displacement error {err:.2e}, |f| {f:.2e}"


def _check_return_map(rng):
    model = MaterialModel.isotropic(1.0, 0.3, alpha=0.0, biot_modulus=1.0, permeability=1.0,
                                    plasticity=Plasticity("drucker_prager", 0.01, 0.1,
                                                          friction=0.1))
    state = GaussPointState.zeros()
    eps = np.array([0.02, -0.01, 0.005, 0.004, 0.0, 0.01])
    sig, D, new = return_map(eps, state, model)
    h = 1e-7
    fd = np.column_stack([(return_map(eps + h * e, state, model)[0]
                           - return_map(eps - h * e, state, model)[0]) / (2 * h)
                          for e in np.eye(6)])
    err = np.abs(fd - D).max() / np.abs(D).max()
    ok = err <= 1e-6 and abs(float(new.phi_p)) > 0
    return ok, f"tangent vs finite differences {err:.2e}, phi_p {float(new.phi_p):.3e}"


def _check_ledger(rng):
    prob = canonical_problem(n=2)
    res = fixed_stress_step(prob, SplitState.initial(prob), 1.0, Controls(tol=1e-10))
    reps = res.reports
    bal = max(r.balance_rel_error for r in reps)
    ident = max(r.zeta_gap_rel_error for r in reps)
    contract = all(r.metric_sigma <= r.rhs_prev * (1 + 1e-8) for r in reps)
    young = min(r.young_slack for r in reps) >= 0
    ok = bal <= 1e-8 and ident <= 1e-9 and contract and young
    return ok, (f"{res.iterations} iterations, balance {bal:.1e}, identity {ident:.1e}, "
                f"contraction {'ok' if contract else 'violated'}, "
                f"young {'ok' if young else 'violated'}")


def _check_decoupled(rng):
    prob = canonical_problem(n=2, alpha=0.0)
    res = fixed_stress_step(prob, SplitState.initial(prob), 1.0)
    return res.iterations == 2, f"{res.iterations} iterations"


def _info_stated_ledger(rng):
    prob = canonical_problem(n=2)
    res = fixed_stress_step(prob, SplitState.initial(prob), 1.0, Controls(tol=1e-10))
    worst = max(r.ledger_rel_error for r in res.reports)
    return None, f"stated-form ledger residual (informational) {worst:.2e}"


CHECKS = {
    "tensor": _check_tensor,
    "skempton": _check_skempton,
    "darcy_column": _check_darcy_column,
    "uniaxial_plastic": _check_uniaxial_plastic,
    "return_map": _check_return_map,
    "ledger": _check_ledger,
    "decoupled": _check_decoupled,
    "stated_ledger": _info_stated_ledger,
}


def run_checks(name_filter=None, write=print, seed=0):
    """Run the checks whose name contains ``name_filter``; returns (all_passed, n_run)."""
    rng = np.random.default_rng(seed)
    passed, n = True, 0
    for name, check in CHECKS.items():
        if name_filter and name_filter not in name:
            continue
        n += 1
        t0 = time.perf_counter()
        try:
            ok, detail = check(rng)
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        tag = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        write(f"{tag} {name}: {detail} ({time.perf_counter() - t0:.2f}s)")
        passed = passed and ok is not False
    return passed, n
