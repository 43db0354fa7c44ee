import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from porosplit import tensor as tn
from porosplit.material import (GaussPointState, MaterialError, MaterialModel, Plasticity,
                                ReturnMappingError, fluid_content, fluid_content_from_strain,
                                return_map, return_map_field, skempton_tensor, storage_constant,
                                strain_from_stress, stress_from_strain, yield_function)


def iso(**kw):
    base = dict(E=1e9, nu=0.25, alpha=0.8, biot_modulus=1e9, permeability=1e-12)
    base.update(kw)
    return MaterialModel.isotropic(base.pop("E"), base.pop("nu"), **base)


class TestValidation:
    @pytest.mark.parametrize("kw, name", [
        (dict(biot_modulus=-1.0), "biot_modulus"),
        (dict(biot_modulus=0.0), "biot_modulus"),
        (dict(permeability=-1e-12), "permeability"),
        (dict(viscosity=0.0), "viscosity"),
        (dict(porosity=1.0), "porosity"),
        (dict(nu=0.5), "poisson_ratio"),
    ])
    def test_rejects(self, kw, name):
        with pytest.raises(MaterialError) as err:
            iso(**kw)
        assert err.value.name == name

    def test_rejects_nonsymmetric_stiffness(self):
        D = tn.isotropic_from_young(1.0, 0.2)
        D[0, 1] += 0.1
        with pytest.raises(MaterialError, match="stiffness"):
            MaterialModel(D=D, alpha=tn.IDENTITY2, biot_modulus=1.0, permeability=1.0)

    def test_rejects_indefinite_permeability(self):
        with pytest.raises(MaterialError, match="permeability"):
            iso(permeability=np.diag([1.0, -1.0, 1.0]))

    def test_permeability_forms(self):
        assert_allclose(iso(permeability=2.0).permeability, 2.0 * np.eye(3))
        assert_allclose(iso(permeability=[1.0, 2.0, 3.0]).permeability, np.diag([1, 2, 3.0]))

    def test_plasticity_defaults(self):
        vm = Plasticity("von_mises", 1.0, friction=0.3)
        assert vm.friction == 0.0 and vm.dilatancy == 0.0
        dp = Plasticity("drucker_prager", 1.0, friction=0.3)
        assert dp.dilatancy == 0.3
        with pytest.raises(MaterialError):
            Plasticity("cam_clay", 1.0)
        with pytest.raises(MaterialError):
            Plasticity("von_mises", -1.0)


class TestStorage:
    def test_isotropic_storage(self):
        m = iso()
        Kb = 1e9 / (3 * (1 - 2 * 0.25))
        assert m.C == pytest.approx(1 / 1e9 + 0.8 ** 2 / Kb, rel=1e-14)

    def test_skempton_isotropic_closed_form(self, rng):
        for _ in range(5):
            E, nu = rng.uniform(1e8, 5e10), rng.uniform(-0.5, 0.45)
            a, M = rng.uniform(0.05, 1.0), rng.uniform(1e8, 1e11)
            m = iso(E=E, nu=nu, alpha=a, biot_modulus=M)
            Kb = E / (3 * (1 - 2 * nu))
            C = storage_constant(m)
            B = skempton_tensor(m, m.D_inv, C)
            exact = a / (Kb * C) * tn.IDENTITY2
            assert np.abs(B - exact).max() <= 1e-12 * np.abs(exact).max()

    def test_fluid_content_two_forms_agree(self, rng):
        D = tn.orthotropic_stiffness(1e9, 0.7e9, 0.5e9, 0.2, 0.25, 0.3, 0.4e9, 0.3e9, 0.2e9)
        m = MaterialModel(D=D, alpha=np.array([0.8, 0.6, 0.7, 0.05, 0.0, 0.02]),
                          biot_modulus=2e9, permeability=1e-12)
        C, B = m.C, m.B
        for _ in range(10):
            eps = rng.standard_normal(6) * 1e-3
            p = rng.standard_normal() * 1e6
            sigma = stress_from_strain(eps, np.zeros(6), p, m)
            z1 = fluid_content(p, sigma, 0.0, C, B)
            z2 = fluid_content_from_strain(p, eps, 0.0, m)
            assert z1 == pytest.approx(z2, rel=1e-12, abs=1e-18)
            back = strain_from_stress(sigma, p, m, m.D_inv, C, B)
            assert_allclose(back, eps, rtol=1e-10, atol=1e-16)

    def test_body_force(self):
        m = iso(gravity=[0, 0, -10.0], porosity=0.25, fluid_density=1000.0, rock_density=2000.0)
        assert_allclose(m.body_force, [0, 0, -10 * (250 + 1500)])


def vm_model(sy=1.0, H=0.5, E=1.0, nu=0.3):
    return MaterialModel.isotropic(E, nu, alpha=0.0, biot_modulus=1.0, permeability=1.0,
                                   plasticity=Plasticity("von_mises", sy, H))


def dp_model(sy=0.01, H=0.1, friction=0.1, dilatancy=None):
    return MaterialModel.isotropic(1.0, 0.3, alpha=0.0, biot_modulus=1.0, permeability=1.0,
                                   plasticity=Plasticity("drucker_prager", sy, H,
                                                         friction=friction,
                                                         dilatancy=dilatancy))


def fd_tangent(eps, state, model, h=1e-7):
    cols = [(return_map(eps + h * e, state, model)[0] - return_map(eps - h * e, state, model)[0])
            / (2 * h) for e in np.eye(6)]
    return np.column_stack(cols)


class TestReturnMap:
    def test_elastic_inside(self):
        m = vm_model()
        eps = np.array([0.1, 0, 0, 0, 0, 0])
        sig, D, new = return_map(eps, GaussPointState.zeros(), m)
        assert_allclose(sig, m.D @ eps)
        assert_allclose(D, m.D)
        assert float(new.acc) == 0.0

    def test_uniaxial_strain_radial_return(self):
        """Scalar radial-return oracle for a uniaxial strain increment."""
        E, nu, sy, H = 1.0, 0.3, 0.1, 0.2
        m = vm_model(sy, H, E, nu)
        G = E / (2 * (1 + nu))
        e = 0.5
        eps = np.array([e, 0, 0, 0, 0, 0])
        # trial deviatoric norm 2G |dev eps|; return along the same direction
        dev_norm = 2 * G * np.sqrt(2.0 / 3.0) * e
        dlam = (dev_norm - np.sqrt(2 / 3) * sy) / (2 * G + 2 / 3 * H)
        sig, _, new = return_map(eps, GaussPointState.zeros(), m)
        s = tn.deviator(sig)
        assert tn.norm(s) == pytest.approx(dev_norm - 2 * G * dlam, rel=1e-12)
        assert float(new.acc) == pytest.approx(np.sqrt(2 / 3) * dlam, rel=1e-12)
        f = yield_function(sig, new.acc, m.plasticity)
        assert abs(f) <= 1e-10 * sy

    @pytest.mark.parametrize("model", [vm_model(0.01, 0.05), dp_model(), dp_model(dilatancy=0.0)],
                             ids=["von_mises", "drucker_prager", "dp_nonassociated"])
    def test_consistent_tangent(self, model, rng):
        for _ in range(5):
            eps = rng.standard_normal(6) * 0.02
            sig, D, _ = return_map(eps, GaussPointState.zeros(), model)
            if np.allclose(D, model.D):
                continue
            err = np.abs(fd_tangent(eps, GaussPointState.zeros(), model) - D).max()
            assert err <= 1e-6 * np.abs(D).max()

    def test_drucker_prager_plastic_porosity(self):
        m = dp_model()
        eps = np.array([0.02, -0.01, 0.005, 0.004, 0.0, 0.01])
        _, D, new = return_map(eps, GaussPointState.zeros(), m)
        tr = tn.trace(new.eps_p)
        assert tr > 0
        assert float(new.phi_p) == pytest.approx(m.plasticity.beta_p * tr)
        assert_allclose(D, D.T, atol=1e-12 * np.abs(D).max())

    def test_idempotent(self):
        m = vm_model(0.01, 0.05)
        eps = np.array([0.03, -0.01, 0.0, 0.0, 0.01, 0.0])
        _, _, st1 = return_map(eps, GaussPointState.zeros(), m)
        sig2, _, st2 = return_map(eps, st1, m)
        assert_allclose(st2.eps_p, st1.eps_p, atol=1e-15)

    def test_total_stress_includes_pressure(self):
        m = iso(plasticity=Plasticity("von_mises", 1e9))
        eps = np.full(6, 1e-4)
        sig, _, st_ = return_map(eps, GaussPointState.zeros(), m, pressure=2e6)
        assert_allclose(st_.sigma, sig - m.alpha * 2e6)

    def test_apex_raises(self):
        m = dp_model(friction=0.5)
        with pytest.raises(ReturnMappingError):
            return_map(np.array([1.0, 1.0, 1.0, 0, 0, 0]), GaussPointState.zeros(), m)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-0.05, 0.05), min_size=6, max_size=6))
    def test_stress_admissible(self, comps):
        m = vm_model(0.01, 0.05)
        sig, _, new = return_map(np.array(comps), GaussPointState.zeros(), m)
        assert yield_function(sig, new.acc, m.plasticity) <= 1e-10 * 0.01

    def test_field_matches_pointwise(self, rng):
        m = dp_model()
        eps = rng.standard_normal((3, 8, 6)) * 0.01
        states = GaussPointState.zeros((3, 8))
        p = rng.standard_normal(3)[:, None]
        sig, D, new = return_map_field(eps, states, m, p)
        for c, g in np.ndindex(3, 8):
            s1, d1, n1 = return_map(eps[c, g], states[c, g], m, p[c, 0])
            assert_allclose(sig[c, g], s1, atol=1e-15)
            assert_allclose(D[c, g], d1, atol=1e-14)
            assert_allclose(new.sigma[c, g], n1.sigma, atol=1e-15)
