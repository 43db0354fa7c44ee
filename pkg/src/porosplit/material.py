"""Poroelastoplastic constitutive layer.

Stresses are total Cauchy stresses ``sigma = D (eps - eps_p) - alpha p`` and the
yield criterion acts on the effective stress ``D (eps - eps_p)``. The storage
constant ``C`` and the Skempton tensor ``B`` are built from the elastic
compliance, which makes the two fluid-content expressions

    zeta = p / M + alpha : eps_e + phi_p = C p + (C / 3) B : sigma + phi_p

identical for any constitutively consistent state.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as tn


class MaterialError(ValueError):
    """Invalid material parameters."""

    def __init__(self, name, message):
        super().__init__(f"{name}: {message}")
        self.name = name


class ReturnMappingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Plasticity:
    """Associative (by default) pressure-sensitive J2 plasticity.

    ``kind="von_mises"`` uses ``f = |dev s| - sqrt(2/3) (sy + H a)``;
    ``kind="drucker_prager"`` adds ``friction * tr(s)`` to ``f`` and
    ``dilatancy * I`` to the flow direction (``dilatancy`` defaults to
    ``friction``).
    """

    kind: str = "von_mises"
    yield_stress: float = 1.0
    hardening: float = 0.0
    beta_p: float = 1.0
    friction: float = 0.0
    dilatancy: float = None

    def __post_init__(self):
        if self.kind not in ("von_mises", "drucker_prager"):
            raise MaterialError("plasticity", f"unknown model {self.kind!r}")
        if self.yield_stress <= 0:
            raise MaterialError("yield_stress", "must be > 0")
        if self.hardening < 0:
            raise MaterialError("hardening", "must be >= 0")
        if self.kind == "von_mises":
            object.__setattr__(self, "friction", 0.0)
            object.__setattr__(self, "dilatancy", 0.0)
        elif self.dilatancy is None:
            object.__setattr__(self, "dilatancy", self.friction)


@dataclass(frozen=True, eq=False)
class MaterialModel:
    D: np.ndarray                     # Mandel stiffness (Pa)
    alpha: np.ndarray                 # Mandel Biot tensor
    biot_modulus: float               # M (Pa)
    permeability: np.ndarray          # K (m^2), 3x3
    viscosity: float = 1.0            # mu (Pa s)
    fluid_compressibility: float = 0.0
    fluid_density: float = 1000.0     # rho0
    rock_density: float = 2650.0      # rho_r
    porosity: float = 0.2             # phi0
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    plasticity: Plasticity = None

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        K = np.atleast_2d(np.asarray(self.permeability, dtype=float))
        if K.shape == (1, 1):
            K = K[0, 0] * np.eye(3)
        elif K.shape == (1, 3):
            K = np.diag(K[0])
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "permeability", K)
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))
        if D.shape != (6, 6):
            raise MaterialError("stiffness", "must be a 6x6 Mandel matrix")
        if np.abs(D - D.T).max() > 1e-12 * np.abs(D).max():
            raise MaterialError("stiffness", "must be symmetric")
        if np.linalg.eigvalsh(D).min() <= 0:
            raise MaterialError("stiffness", "must be positive definite")
        if alpha.shape != (6,):
            raise MaterialError("biot", "must be a Mandel 6-vector")
        if not self.biot_modulus > 0:
            raise MaterialError("biot_modulus", "must be > 0")
        if K.shape != (3, 3) or np.abs(K - K.T).max() > 1e-12 * np.abs(K).max() \
                or np.linalg.eigvalsh(K).min() <= 0:
            raise MaterialError("permeability", "must be symmetric positive definite")
        if not self.viscosity > 0:
            raise MaterialError("viscosity", "must be > 0")
        if not 0.0 < self.porosity < 1.0:
            raise MaterialError("porosity", "must lie in (0, 1)")
        if self.fluid_compressibility < 0:
            raise MaterialError("fluid_compressibility", "must be >= 0")

    @classmethod
    def isotropic(cls, E, nu, alpha=1.0, **kwargs):
        """Isotropic skeleton; a scalar ``alpha`` means ``alpha * I``."""
        if not -1.0 < nu < 0.5:
            raise MaterialError("poisson_ratio", "must lie in (-1, 0.5)")
        if np.ndim(alpha) == 0:
            alpha = alpha * tn.IDENTITY2
        return cls(D=tn.isotropic_from_young(E, nu), alpha=alpha, **kwargs)

    @property
    def D_inv(self):
        return tn.invert6(self.D)

    @property
    def kappa(self):
        return self.permeability / self.viscosity

    @property
    def kappa_inv(self):
        return np.linalg.inv(self.kappa)

    @property
    def C(self):
        return storage_constant(self)

    @property
    def B(self):
        return skempton_tensor(self, self.D_inv, self.C)

    @property
    def body_force(self):
        """``f = rho0 phi0 g + rho_r (1 - phi0) g`` per unit volume."""
        phi = self.porosity
        return (self.fluid_density * phi + self.rock_density * (1.0 - phi)) * self.gravity

    def fluid_density_at(self, p, p_ref=0.0):
        return self.fluid_density * (1.0 + self.fluid_compressibility * (p - p_ref))

    def with_(self, **changes):
        return replace(self, **changes)


def storage_constant(model):
    """``C = 1/M + alpha : D^{-1} alpha``."""
    return 1.0 / model.biot_modulus + tn.ddot(model.alpha, tn.apply4(model.D_inv, model.alpha))


def skempton_tensor(model, D_inv, C):
    """``B = (3 / C) D^{-1} alpha``."""
    return 3.0 / C * tn.apply4(D_inv, model.alpha)


def stress_from_strain(eps, eps_p, p, model):
    return tn.apply4(model.D, eps - eps_p) - model.alpha * np.asarray(p)[..., None]


def strain_from_stress(sigma, p, model, tangent_inv, C, B):
    return tn.apply4(tangent_inv, sigma) + (C / 3.0) * B * np.asarray(p)[..., None]


def fluid_content(p, sigma, phi_p, C, B):
    """``zeta = C p + (C/3) B : sigma + phi_p``."""
    return C * p + C / 3.0 * tn.ddot(B, sigma) + phi_p


def fluid_content_from_strain(p, eps_e, phi_p, model):
    """``zeta = p / M + alpha : eps_e + phi_p``."""
    return p / model.biot_modulus + tn.ddot(model.alpha, eps_e) + phi_p


@dataclass(frozen=True)
class GaussPointState:
    """Internal variables at one or many Gauss points (leading batch axes)."""

    eps_p: np.ndarray
    phi_p: np.ndarray
    sigma: np.ndarray
    acc: np.ndarray

    @classmethod
    def zeros(cls, shape=()):
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        return cls(eps_p=np.zeros(shape + (6,)), phi_p=np.zeros(shape),
                   sigma=np.zeros(shape + (6,)), acc=np.zeros(shape))

    def __getitem__(self, idx):
        return GaussPointState(self.eps_p[idx], self.phi_p[idx], self.sigma[idx], self.acc[idx])

    def copy(self):
        return GaussPointState(self.eps_p.copy(), self.phi_p.copy(), self.sigma.copy(),
                               self.acc.copy())


def yield_function(sig_eff, acc, plast):
    s = tn.deviator(sig_eff)
    return (tn.norm(s) + plast.friction * tn.trace(sig_eff)
            - np.sqrt(2.0 / 3.0) * (plast.yield_stress + plast.hardening * acc))


def return_map(eps_trial, state_old, model, pressure=0.0, yield_tol=1e-10, max_iter=50):
    """Backward-Euler return mapping at a single Gauss point.

    Returns ``(sigma_eff, D_ep, state_new)`` where ``D_ep`` is the consistent
    (algorithmic) tangent and ``state_new.sigma`` is the total stress
    ``sigma_eff - alpha * pressure``.
    """
    D = model.D
    plast = model.plasticity
    sig_trial = tn.apply4(D, eps_trial - state_old.eps_p)
    if plast is None:
        return sig_trial, D, replace(state_old, sigma=sig_trial - model.alpha * pressure)
    f_trial = yield_function(sig_trial, state_old.acc, plast)
    if f_trial <= yield_tol * plast.yield_stress:
        return sig_trial, D, replace(state_old, sigma=sig_trial - model.alpha * pressure)

    D_inv = model.D_inv
    H = plast.hardening
    c23 = np.sqrt(2.0 / 3.0)
    sig, dlam = sig_trial.copy(), 0.0
    scale_eps = np.abs(tn.apply4(D_inv, sig_trial)).max()
    for _ in range(max_iter):
        s = tn.deviator(sig)
        s_norm = tn.norm(s)
        if s_norm <= 1e-14 * plast.yield_stress:
            raise ReturnMappingError("return mapping reached the cone apex")
        n = s / s_norm
        m = n + plast.dilatancy * tn.IDENTITY2
        nf = n + plast.friction * tn.IDENTITY2
        r_eps = tn.apply4(D_inv, sig - sig_trial) + dlam * m
        r_f = yield_function(sig, state_old.acc + c23 * dlam, plast)
        dn = (tn.DEVIATORIC_PROJECTOR - np.outer(n, n)) / s_norm
        if (np.abs(r_eps).max() <= 1e-13 * scale_eps
                and abs(r_f) <= 1e-13 * plast.yield_stress):
            break
        jac = np.zeros((7, 7))
        jac[:6, :6] = D_inv + dlam * dn
        jac[:6, 6] = m
        jac[6, :6] = nf
        jac[6, 6] = -2.0 / 3.0 * H
        step = np.linalg.solve(jac, -np.append(r_eps, r_f))
        sig = sig + step[:6]
        dlam = dlam + step[6]
    else:
        raise ReturnMappingError(
            f"return mapping did not converge (|f| = {abs(r_f):.3e})")
    if dlam < 0:
        raise ReturnMappingError("negative plastic multiplier")

    xi = np.linalg.inv(D_inv + dlam * dn)
    xi_m = xi @ m
    nf_xi = nf @ xi
    D_ep = xi - np.outer(xi_m, nf_xi) / (nf @ xi_m + 2.0 / 3.0 * H)
    eps_p = state_old.eps_p + dlam * m
    state_new = GaussPointState(
        eps_p=eps_p,
        phi_p=np.asarray(plast.beta_p * tn.trace(eps_p)),
        sigma=sig - model.alpha * pressure,
        acc=np.asarray(state_old.acc + c23 * dlam),
    )
    return sig, D_ep, state_new


def return_map_field(eps_trial, states_old, model, pressure):
    """Vectorised return mapping over arrays of Gauss points.

    ``eps_trial`` has shape ``(..., 6)`` and ``pressure`` broadcasts against the
    leading axes. Elastic points are handled in bulk; only yielding points go
    through the scalar return map.
    """
    pressure = np.broadcast_to(np.asarray(pressure, dtype=float), eps_trial.shape[:-1])
    sig = tn.apply4(model.D, eps_trial - states_old.eps_p)
    D_ep = np.broadcast_to(model.D, eps_trial.shape + (6,)).copy()
    new = GaussPointState(states_old.eps_p.copy(), states_old.phi_p.copy(),
                          sig - model.alpha * pressure[..., None], states_old.acc.copy())
    if model.plasticity is None:
        return sig, D_ep, new
    f = yield_function(sig, states_old.acc, model.plasticity)
    for idx in zip(*np.nonzero(f > 1e-10 * model.plasticity.yield_stress)):
        s_i, d_i, st = return_map(eps_trial[idx], states_old[idx], model, pressure[idx])
        sig[idx] = s_i
        D_ep[idx] = d_i
        new.eps_p[idx] = st.eps_p
        new.phi_p[idx] = st.phi_p
        new.sigma[idx] = st.sigma
        new.acc[idx] = st.acc
    return sig, D_ep, new
