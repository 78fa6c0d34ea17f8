"""Elasticity tensors and water-in-solid mixing rules.

All 4th order tensors are stored as 6x6 matrices in Voigt order
(xx, yy, zz, yz, xz, xy) with engineering shear strain, so stress = C @
strain holds with gamma = 2 * eps for the shear rows. The wet stiffness
of a saturated cell comes from a spherical-inclusion estimate pinched
between the parallel (Voigt) and series (Reuss) mixture bounds; the
estimate itself drifts outside those bounds at high water fraction, so
the engine path projects it back inside before use.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import MaterialError

#: Condition number above which a tensor inversion is refused.
COND_LIMIT = 1e12

_EYE6 = np.eye(6)


@dataclasses.dataclass(frozen=True)
class IsotropicElastic:
    """Isotropic solid described by Young's modulus (Pa) and Poisson ratio."""

    young_modulus: float
    poisson_ratio: float

    def __post_init__(self):
        e, nu = self.young_modulus, self.poisson_ratio
        if not np.isfinite(e) or e <= 0.0:
            raise MaterialError(f"Young's modulus must be positive, got {e}")
        if not np.isfinite(nu):
            raise MaterialError(f"Poisson ratio must be finite, got {nu}")
        if nu >= 0.5 - 1e-9:
            raise MaterialError(
                f"Poisson ratio {nu} is at the incompressible limit; "
                "the stiffness tensor diverges as nu -> 0.5"
            )
        if nu <= -1.0 + 1e-9:
            raise MaterialError(f"Poisson ratio must exceed -1, got {nu}")

    @property
    def lame_lambda(self) -> float:
        e, nu = self.young_modulus, self.poisson_ratio
        return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def lame_mu(self) -> float:
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def bulk_modulus(self) -> float:
        return self.lame_lambda + 2.0 * self.lame_mu / 3.0

    @classmethod
    def from_lame(cls, lame_lambda: float, lame_mu: float) -> "IsotropicElastic":
        if lame_mu <= 0.0:
            raise MaterialError(f"shear modulus must be positive, got {lame_mu}")
        nu = lame_lambda / (2.0 * (lame_lambda + lame_mu))
        e = lame_mu * (3.0 * lame_lambda + 2.0 * lame_mu) / (lame_lambda + lame_mu)
        return cls(young_modulus=e, poisson_ratio=nu)


@dataclasses.dataclass(frozen=True)
class PorousMaterial:
    """Scene-level description of a water-absorbing solid.

    ``porosity`` is the void fraction available to water; the water volume
    fraction of a cell is porosity times its saturation. Water gets a tiny
    artificial shear modulus ``shear_regulariser * mu_solid`` so the
    mixing algebra stays invertible.
    """

    solid: IsotropicElastic
    density: float
    porosity: float
    water_bulk_modulus: float = 2.2e9
    shear_regulariser: float = 1e-6

    def __post_init__(self):
        if not (0.0 <= self.porosity < 1.0):
            raise MaterialError(f"porosity must lie in [0, 1), got {self.porosity}")
        if self.density <= 0.0:
            raise MaterialError(f"density must be positive, got {self.density}")
        if self.water_bulk_modulus <= 0.0:
            raise MaterialError(
                f"water bulk modulus must be positive, got {self.water_bulk_modulus}"
            )
        if not (0.0 < self.shear_regulariser <= 1e-2):
            raise MaterialError(
                f"shear regulariser must lie in (0, 1e-2], got {self.shear_regulariser}"
            )

    def water_stiffness(self) -> "ElasticityTensor":
        mu_w = self.shear_regulariser * self.solid.lame_mu
        return stiffness_from_bulk_shear(self.water_bulk_modulus, mu_w)

    def water_compliance(self) -> "ElasticityTensor":
        # Closed form: the water tensor's bulk/shear contrast (~1e12 for
        # default parameters) is too extreme for a numerical inversion.
        mu_w = self.shear_regulariser * self.solid.lame_mu
        return compliance_from_bulk_shear(self.water_bulk_modulus, mu_w)


class ElasticityTensor:
    """Symmetric positive definite 6x6 matrix tagged stiffness or compliance."""

    KINDS = ("stiffness", "compliance")

    def __init__(self, matrix: np.ndarray, kind: str, check_definite: bool = True):
        if kind not in self.KINDS:
            raise MaterialError(f"kind must be one of {self.KINDS}, got {kind!r}")
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (6, 6):
            raise MaterialError(f"expected a 6x6 matrix, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise MaterialError("tensor contains non-finite entries")
        scale = float(np.abs(matrix).max())
        if np.abs(matrix - matrix.T).max() > 1e-9 * max(scale, 1e-300):
            raise MaterialError("tensor is not symmetric")
        self.matrix = 0.5 * (matrix + matrix.T)
        self.kind = kind
        if check_definite:
            eigs = np.linalg.eigvalsh(self.matrix)
            if eigs[0] < -1e-9 * max(eigs[-1], 0.0):
                raise MaterialError(
                    f"{kind} tensor is not positive semi-definite (min eig {eigs[0]:.3e})"
                )

    def inverse(self, check_definite: bool = True) -> "ElasticityTensor":
        cond = np.linalg.cond(self.matrix)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise MaterialError(
                f"{self.kind} tensor is too ill-conditioned to invert (cond {cond:.3e})"
            )
        other = "compliance" if self.kind == "stiffness" else "stiffness"
        channels = isotropic_channels(self.matrix)
        if channels is not None and min(channels) > 0.0:
            inv = _from_channels(*(1.0 / c for c in channels))
        else:
            inv = np.linalg.inv(self.matrix)
        return ElasticityTensor(0.5 * (inv + inv.T), other, check_definite=check_definite)

    def spectral_norm(self) -> float:
        return float(np.abs(np.linalg.eigvalsh(self.matrix)).max())

    def __repr__(self):
        return f"ElasticityTensor(kind={self.kind!r}, norm={self.spectral_norm():.4e})"


def _iso_matrix(lame_lambda: float, lame_mu: float) -> np.ndarray:
    c = np.zeros((6, 6))
    c[:3, :3] = lame_lambda
    c[np.diag_indices(3)] = lame_lambda + 2.0 * lame_mu
    c[3, 3] = c[4, 4] = c[5, 5] = lame_mu
    return c


def _iso_pattern(diag: float, off: float, shear: float) -> np.ndarray:
    m = np.zeros((6, 6))
    m[:3, :3] = off
    m[np.diag_indices(3)] = diag
    m[3, 3] = m[4, 4] = m[5, 5] = shear
    return m


def isotropic_channels(matrix: np.ndarray, tol: float = 1e-10):
    """Eigenvalues (hydrostatic, deviatoric, shear) of an isotropic matrix.

    Returns None when the matrix does not have the isotropic sparsity
    pattern within ``tol`` relative to its largest entry. The channel
    form supports exact clamping and inversion: channels of vastly
    different magnitude never contaminate each other the way a dense
    eigendecomposition lets them.
    """
    m = np.asarray(matrix, dtype=np.float64)
    diag = float(m[0, 0])
    off = float(m[0, 1])
    shear = float(m[3, 3])
    if np.abs(m - _iso_pattern(diag, off, shear)).max() > tol * max(np.abs(m).max(), 1e-300):
        return None
    return diag + 2.0 * off, diag - off, shear


def _from_channels(hydro: float, dev: float, shear: float) -> np.ndarray:
    return _iso_pattern((hydro + 2.0 * dev) / 3.0, (hydro - dev) / 3.0, shear)


def isotropic_stiffness(material: IsotropicElastic) -> ElasticityTensor:
    return ElasticityTensor(_iso_matrix(material.lame_lambda, material.lame_mu), "stiffness")


def isotropic_compliance(material: IsotropicElastic) -> ElasticityTensor:
    e, nu = material.young_modulus, material.poisson_ratio
    s = np.zeros((6, 6))
    s[:3, :3] = -nu / e
    s[np.diag_indices(3)] = 1.0 / e
    s[3, 3] = s[4, 4] = s[5, 5] = 1.0 / material.lame_mu
    return ElasticityTensor(s, "compliance")


def stiffness_from_bulk_shear(bulk: float, shear: float) -> ElasticityTensor:
    """Stiffness from (K, mu); safe for nearly incompressible fluids."""
    if bulk <= 0.0 or shear <= 0.0:
        raise MaterialError(f"bulk and shear moduli must be positive, got {bulk}, {shear}")
    return ElasticityTensor(_iso_matrix(bulk - 2.0 * shear / 3.0, shear), "stiffness")


def compliance_from_bulk_shear(bulk: float, shear: float) -> ElasticityTensor:
    """Exact compliance from (K, mu), bypassing a matrix inversion."""
    if bulk <= 0.0 or shear <= 0.0:
        raise MaterialError(f"bulk and shear moduli must be positive, got {bulk}, {shear}")
    s = np.zeros((6, 6))
    s[:3, :3] = 1.0 / (9.0 * bulk) - 1.0 / (6.0 * shear)
    s[np.diag_indices(3)] = 1.0 / (9.0 * bulk) + 1.0 / (3.0 * shear)
    s[3, 3] = s[4, 4] = s[5, 5] = 1.0 / shear
    return ElasticityTensor(s, "compliance")


def eshelby_spherical(poisson_ratio: float) -> np.ndarray:
    """Interior strain-concentration matrix for a spherical inclusion.

    Returned in the same engineering-shear Voigt convention as the
    elasticity tensors, so the shear diagonal carries a factor 2 relative
    to the tensor components.
    """
    nu = poisson_ratio
    if nu >= 0.5 - 1e-9 or nu <= -1.0 + 1e-9:
        raise MaterialError(f"Poisson ratio {nu} out of range for the inclusion solution")
    d = 15.0 * (1.0 - nu)
    s1111 = (7.0 - 5.0 * nu) / d
    s1122 = (5.0 * nu - 1.0) / d
    s1212 = (4.0 - 5.0 * nu) / d
    p = np.zeros((6, 6))
    p[:3, :3] = s1122
    p[np.diag_indices(3)] = s1111
    p[3, 3] = p[4, 4] = p[5, 5] = 2.0 * s1212
    return p


# -- mixing ---------------------------------------------------------------


def _check_phi(phi: float) -> float:
    if not (0.0 <= phi <= 1.0) or not np.isfinite(phi):
        raise MaterialError(f"volume fraction must lie in [0, 1], got {phi}")
    return float(phi)


def voigt_upper(solid_c: ElasticityTensor, water_c: ElasticityTensor,
                phi: float) -> ElasticityTensor:
    """Parallel (iso-strain) mixture stiffness, the stiff bound."""
    phi = _check_phi(phi)
    for t in (solid_c, water_c):
        if t.kind != "stiffness":
            raise MaterialError("voigt_upper expects stiffness tensors")
    return ElasticityTensor((1.0 - phi) * solid_c.matrix + phi * water_c.matrix, "stiffness")


def reuss_lower(solid_s: ElasticityTensor, water_s: ElasticityTensor,
                phi: float) -> ElasticityTensor:
    """Series (iso-stress) mixture compliance, the soft bound."""
    phi = _check_phi(phi)
    for t in (solid_s, water_s):
        if t.kind != "compliance":
            raise MaterialError("reuss_lower expects compliance tensors")
    return ElasticityTensor((1.0 - phi) * solid_s.matrix + phi * water_s.matrix, "compliance")


def _solve_named(a: np.ndarray, b: np.ndarray, name: str) -> np.ndarray:
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise MaterialError(f"factor {name} is singular to working precision (cond {cond:.3e})")
    return np.linalg.solve(a, b)


def inclusion_compliance(solid: IsotropicElastic, inclusion_c: ElasticityTensor,
                         phi: float) -> ElasticityTensor:
    """Effective compliance with spherical inclusions at volume fraction phi.

    This is the single-inclusion (dilute) estimate: the inclusion strain
    concentration is evaluated against the pristine matrix, and the
    compliance correction scales linearly in phi. It is exact as phi -> 0
    and progressively overshoots for large phi; callers that need the
    result to respect the mixture bounds should project it afterwards.
    """
    phi = _check_phi(phi)
    s_m = isotropic_compliance(solid)
    if phi == 0.0:
        return s_m
    if inclusion_c.kind != "stiffness":
        raise MaterialError("inclusion tensor must be a stiffness")
    c_m = isotropic_stiffness(solid).matrix
    p = eshelby_spherical(solid.poisson_ratio)
    q = _solve_named(c_m - inclusion_c.matrix, c_m, "(C_matrix - C_inclusion)")
    correction = _solve_named(q - p, _EYE6 * phi, "(Q - P)")
    s_eff = (_EYE6 + correction) @ s_m.matrix
    # Past roughly 78% water the estimate leaves the positive cone; it is
    # still returned so callers can measure the excursion before clamping.
    return ElasticityTensor(0.5 * (s_eff + s_eff.T), "compliance", check_definite=False)


def bounds_check(c_eff: ElasticityTensor, c_upper: ElasticityTensor,
                 s_lower: ElasticityTensor, tol: float = 1e-8):
    """Test C within the mixture bounds; returns (ok, margins).

    Margins are the smallest eigenvalues of ``C_upper - C`` and
    ``C - inv(S_lower)``, both scaled by the spectral norm of the upper
    bound. Nonnegative margins (within -tol) mean the tensor sits inside
    the bound interval.
    """
    c_lower = s_lower.inverse()
    norm = c_upper.spectral_norm()
    upper_margin = float(np.linalg.eigvalsh(c_upper.matrix - c_eff.matrix)[0]) / norm
    lower_margin = float(np.linalg.eigvalsh(c_eff.matrix - c_lower.matrix)[0]) / norm
    ok = upper_margin >= -tol and lower_margin >= -tol
    return ok, {"upper_margin": upper_margin, "lower_margin": lower_margin}


def _project_psd_above(matrix: np.ndarray, floor: np.ndarray) -> np.ndarray:
    """Nearest matrix (Frobenius) that dominates ``floor`` in the Loewner order."""
    diff = matrix - floor
    eigval, eigvec = np.linalg.eigh(0.5 * (diff + diff.T))
    out = floor + (eigvec * np.maximum(eigval, 0.0)) @ eigvec.T
    return 0.5 * (out + out.T)


def project_to_bounds(s_eff: ElasticityTensor, c_upper: ElasticityTensor,
                      s_upper: ElasticityTensor) -> ElasticityTensor:
    """Pull a compliance into the closed interval [inv(C_upper), S_upper].

    Isotropic inputs are clamped channel by channel, which is exact: a
    clamped channel lands on the bound value as the same float. Otherwise
    the lower clamp runs first as a positive-part projection, then the
    upper one; for commuting bounds the order does not matter.
    """
    ch_s = isotropic_channels(s_eff.matrix)
    ch_cu = isotropic_channels(c_upper.matrix)
    ch_su = isotropic_channels(s_upper.matrix)
    if ch_s is not None and ch_cu is not None and ch_su is not None and min(ch_cu) > 0.0:
        clamped = tuple(min(max(s, 1.0 / cu), su)
                        for s, cu, su in zip(ch_s, ch_cu, ch_su))
        return ElasticityTensor(_from_channels(*clamped), "compliance")
    s_low = c_upper.inverse().matrix
    out = _project_psd_above(s_eff.matrix, s_low)
    out = s_upper.matrix - _project_psd_above(s_upper.matrix - out, np.zeros((6, 6)))
    return ElasticityTensor(out, "compliance")


def effective_compliance(material: PorousMaterial, phi: float,
                         project: bool = True) -> ElasticityTensor:
    """Wet compliance of a cell with water volume fraction ``phi``.

    With ``project`` enabled (the engine default) the inclusion estimate
    is clamped into the Voigt/Reuss interval, which keeps the tensor
    physically admissible and positive definite at every fraction.
    """
    raw = inclusion_compliance(material.solid, material.water_stiffness(), phi)
    if not project or phi == 0.0:
        return raw
    c_v = voigt_upper(isotropic_stiffness(material.solid), material.water_stiffness(), phi)
    s_r = reuss_lower(isotropic_compliance(material.solid), material.water_compliance(), phi)
    return project_to_bounds(raw, c_v, s_r)


def effective_stiffness(material: PorousMaterial, phi: float) -> ElasticityTensor:
    return effective_compliance(material, phi).inverse()
