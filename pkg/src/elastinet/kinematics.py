"""Exact 3x3 tensor algebra and finite-strain kinematics.

Conventions used across the package:
  * strain measures are dimensionless, stresses are in GPa;
  * Voigt order is (11, 22, 33, 12, 23, 13) and stores raw tensor
    components (no factor-2 engineering shear anywhere);
  * 9x9 tangent storage pairs indices row-major: (iJ) -> 3*i + J.
"""

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from .errors import (
    BasisError,
    DegenerateAxisError,
    InvalidKinematicsError,
    SpectralDomainError,
    ToleranceError,
)

IDENTITY = np.eye(3)

# Levi-Civita permutation tensor.
PERMUTATION = np.zeros((3, 3, 3))
PERMUTATION[0, 1, 2] = PERMUTATION[1, 2, 0] = PERMUTATION[2, 0, 1] = 1.0
PERMUTATION[0, 2, 1] = PERMUTATION[2, 1, 0] = PERMUTATION[1, 0, 2] = -1.0

# Voigt index pairs, order (11, 22, 33, 12, 23, 13).
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2))

# Row labels of the 13 monoclinic stiffness coefficients, in Voigt slots.
MONOCLINIC_LABELS = ("D11", "D22", "D33", "D44", "D55", "D66",
                     "D12", "D13", "D23", "D15", "D25", "D35", "D46")
MONOCLINIC_SLOTS = {"D11": (0, 0), "D22": (1, 1), "D33": (2, 2),
                    "D44": (3, 3), "D55": (4, 4), "D66": (5, 5),
                    "D12": (0, 1), "D13": (0, 2), "D23": (1, 2),
                    "D15": (0, 4), "D25": (1, 4), "D35": (2, 4),
                    "D46": (3, 5)}


def sym(a):
    """Symmetric part 0.5*(a + a^T)."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def require_symmetric(a, tol=1e-8, what="tensor"):
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise InvalidKinematicsError(f"{what} must be 3x3, got shape {a.shape}")
    if np.max(np.abs(a - a.T)) > tol * max(1.0, np.max(np.abs(a))):
        raise InvalidKinematicsError(f"{what} is not symmetric to tolerance {tol}")
    return sym(a)


# ------------------ Voigt / full-index conversions ------------------

def tensor2_to_voigt6(t):
    """Symmetric 3x3 tensor -> 6-vector of raw components, order (11,22,33,12,23,13)."""
    t = np.asarray(t, dtype=float)
    return np.array([t[i, j] for (i, j) in VOIGT_PAIRS])


def voigt6_to_tensor2(v):
    """6-vector (raw components) -> symmetric 3x3 tensor."""
    v = np.asarray(v, dtype=float)
    t = np.zeros((3, 3))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        t[i, j] = v[a]
        t[j, i] = v[a]
    return t


def tensor4_to_voigt6(c, tol=1e-9):
    """Minor-symmetric fourth-order tensor -> 6x6 Voigt matrix (raw components)."""
    c = np.asarray(c, dtype=float)
    scale = max(1.0, np.max(np.abs(c)))
    if (np.max(np.abs(c - np.swapaxes(c, 0, 1))) > tol * scale
            or np.max(np.abs(c - np.swapaxes(c, 2, 3))) > tol * scale):
        raise InvalidKinematicsError("tensor lacks minor symmetry; cannot store in Voigt form")
    d = np.empty((6, 6))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        for b, (k, l) in enumerate(VOIGT_PAIRS):
            d[a, b] = c[i, j, k, l]
    return d


def voigt6_to_tensor4(d):
    """6x6 Voigt matrix -> full minor-symmetric fourth-order tensor."""
    d = np.asarray(d, dtype=float)
    c = np.zeros((3, 3, 3, 3))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        for b, (k, l) in enumerate(VOIGT_PAIRS):
            val = d[a, b]
            c[i, j, k, l] = val
            c[j, i, k, l] = val
            c[i, j, l, k] = val
            c[j, i, l, k] = val
    return c


def tensor4_to_full9(c):
    """Fourth-order tensor -> 9x9 matrix with pairing (iJ),(kL) -> (3i+J, 3k+L)."""
    c = np.asarray(c, dtype=float)
    return c.reshape(9, 9)


def full9_to_tensor4(m):
    """Inverse of :func:`tensor4_to_full9`."""
    m = np.asarray(m, dtype=float)
    return m.reshape(3, 3, 3, 3)


def apply_stiffness_voigt(d, e):
    """Contract a Voigt 6x6 stiffness with a symmetric strain tensor: S = C : E."""
    ev = tensor2_to_voigt6(e) * np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
    return voigt6_to_tensor2(np.asarray(d, dtype=float) @ ev)


def monoclinic_stiffness(values, diad_axis="x"):
    """Assemble a 6x6 monoclinic stiffness from its 13 coefficients.

    Parameters
    ----------
    values : mapping or sequence
        The 13 coefficients, either keyed by the D-labels (D11 ... D46) or a
        sequence in MONOCLINIC_LABELS order.
    diad_axis : 'x' or 'y'
        Placement of the four shear couplings. 'x' puts them in the slots of
        the coefficient-table convention (two-fold axis along e1); 'y' moves
        them to the slots compatible with a two-fold axis along e2 (the
        crystal b-axis), i.e. (11)(13), (22)(13), (33)(13), (12)(23).
    """
    if not isinstance(values, dict):
        values = dict(zip(MONOCLINIC_LABELS, values))
    missing = [k for k in MONOCLINIC_LABELS if k not in values]
    if missing:
        raise InvalidKinematicsError(f"missing monoclinic coefficients: {missing}")
    d = np.zeros((6, 6))
    y_slots = {"D15": (0, 5), "D25": (1, 5), "D35": (2, 5), "D46": (3, 4)}
    for label in MONOCLINIC_LABELS:
        slot = MONOCLINIC_SLOTS[label]
        if diad_axis == "y" and label in y_slots:
            slot = y_slots[label]
        elif diad_axis not in ("x", "y"):
            raise InvalidKinematicsError(f"unknown diad_axis {diad_axis!r}")
        a, b = slot
        d[a, b] = values[label]
        d[b, a] = values[label]
    return d


# ------------------ strain measures ------------------

def det_f(f):
    f = np.asarray(f, dtype=float)
    return float(np.linalg.det(f))


def require_orientation_preserving(f):
    f = np.asarray(f, dtype=float)
    if f.shape != (3, 3):
        raise InvalidKinematicsError(f"deformation gradient must be 3x3, got {f.shape}")
    j = np.linalg.det(f)
    if not np.isfinite(j) or j <= 0.0:
        raise InvalidKinematicsError(f"deformation gradient must have det F > 0, got {j}")
    return f


def green_strain(f):
    """Green strain E = 0.5*(F^T F - I)."""
    f = require_orientation_preserving(f)
    return 0.5 * (f.T @ f - IDENTITY)


def right_cauchy_green(f):
    """C = F^T F."""
    f = require_orientation_preserving(f)
    return f.T @ f


def _spd_eig(c, what="tensor"):
    c = require_symmetric(c, what=what)
    w, v = np.linalg.eigh(c)
    if np.any(w <= 0.0):
        raise SpectralDomainError(f"{what} must be positive-definite, eigenvalues {w}")
    return w, v


def log_strain(c):
    """Logarithmic strain 0.5*ln(C) of an SPD right Cauchy-Green tensor."""
    w, v = _spd_eig(c, what="right Cauchy-Green tensor")
    return (v * (0.5 * np.log(w))) @ v.T


def sym_exp(a):
    """Matrix exponential of a symmetric tensor via eigendecomposition."""
    a = require_symmetric(a)
    w, v = np.linalg.eigh(a)
    return (v * np.exp(w)) @ v.T


def spd_sqrt(c):
    """Principal square root of an SPD tensor."""
    w, v = _spd_eig(c)
    return (v * np.sqrt(w)) @ v.T


def polar_decompose(f):
    """F = R U with R in SO(3), U SPD. Returns (R, U)."""
    f = require_orientation_preserving(f)
    u = spd_sqrt(f.T @ f)
    r = f @ np.linalg.inv(u)
    return r, u


# ------------------ rotations ------------------

def spn(theta_vec):
    """Skew matrix of a 3-vector, spn(v) @ x == cross(v, x)."""
    theta_vec = np.asarray(theta_vec, dtype=float)
    return -np.einsum("ijk,k->ij", PERMUTATION, theta_vec)


def rotation_exp(theta_vec):
    """Finite rotation from a rotation vector (Rodrigues form).

    Small angles use the second-order Taylor expansions of sin(t)/t and
    (1-cos(t))/t^2 to avoid 0/0.
    """
    theta_vec = np.asarray(theta_vec, dtype=float)
    t = float(np.linalg.norm(theta_vec))
    w = spn(theta_vec)
    if t < 1e-6:
        c1 = 1.0 - t * t / 6.0
        c2 = 0.5 - t * t / 24.0
    else:
        c1 = np.sin(t) / t
        c2 = (1.0 - np.cos(t)) / (t * t)
    return IDENTITY + c1 * w + c2 * (w @ w)


def rotation_log(q):
    """Rotation vector of a rotation matrix (inverse of rotation_exp)."""
    return _ScipyRotation.from_matrix(np.asarray(q, dtype=float)).as_rotvec()


def require_rotation(q, tol=1e-10):
    q = np.asarray(q, dtype=float)
    if np.max(np.abs(q.T @ q - IDENTITY)) > tol or abs(np.linalg.det(q) - 1.0) > tol:
        raise InvalidKinematicsError("matrix is not a proper rotation")
    return q

def random_rotations(rng, m):
    """m Haar-uniform rotation matrices from seeded Gaussian quaternions."""
    quats = rng.standard_normal((m, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return _ScipyRotation.from_quat(quats).as_matrix()


def euler_zyz(q):
    """Intrinsic Z-Y-Z Euler angles of a rotation matrix."""
    return _ScipyRotation.from_matrix(np.asarray(q, dtype=float)).as_euler("ZYZ")


def euler_zyz_to_matrix(angles):
    """Rotation matrix from intrinsic Z-Y-Z Euler angles."""
    return _ScipyRotation.from_euler("ZYZ", np.asarray(angles, dtype=float)).as_matrix()


# ------------------ stress maps ------------------

def push_forward_stress(s, f):
    """Cauchy stress from second Piola-Kirchhoff: sigma = J^-1 F S F^T."""
    f = require_orientation_preserving(f)
    s = require_symmetric(s, what="second Piola-Kirchhoff stress")
    j = np.linalg.det(f)
    return (f @ s @ f.T) / j


def pull_back_stress(sigma, f):
    """Second Piola-Kirchhoff stress from Cauchy: S = J F^-1 sigma F^-T."""
    f = require_orientation_preserving(f)
    sigma = require_symmetric(sigma, what="Cauchy stress")
    j = np.linalg.det(f)
    finv = np.linalg.inv(f)
    return j * (finv @ sigma @ finv.T)


# ------------------ derivative of C = exp(2*eps) w.r.t. eps ------------------

def dC_deps_series(eps, n_terms=20, tail_tol=1e-12):
    """Truncated series for d(exp(2*eps))/d(eps) as a fourth-order tensor.

    Returns D with dC = D : d(eps) (full double contraction) for symmetric
    perturbations; D is symmetrized over its last index pair, so at eps = 0
    D_ijkl = delta_ik delta_lj + delta_il delta_kj.

    Raises ToleranceError when the final term's norm exceeds tail_tol relative
    to the accumulated sum (series not converged at n_terms).
    """
    eps = require_symmetric(eps, what="logarithmic strain")
    if n_terms < 1:
        raise ToleranceError("n_terms must be >= 1")
    # Powers eps^0 .. eps^(n_terms-1).
    powers = [IDENTITY.copy()]
    for _ in range(n_terms - 1):
        powers.append(powers[-1] @ eps)
    out = np.zeros((3, 3, 3, 3))
    coeff = 1.0
    last_norm = 0.0
    for n in range(1, n_terms + 1):
        coeff *= 2.0 / n
        term = np.zeros((3, 3, 3, 3))
        for m in range(1, n + 1):
            term += np.einsum("ik,lj->ijkl", powers[m - 1], powers[n - m])
        term *= coeff
        out += term
        last_norm = np.linalg.norm(term)
    out = 0.5 * (out + np.swapaxes(out, 2, 3))
    total = np.linalg.norm(out)
    if last_norm > tail_tol * max(total, 1.0):
        raise ToleranceError(
            f"series for dC/deps not converged at {n_terms} terms "
            f"(last term norm {last_norm:.3e} vs total {total:.3e})")
    return out


# ------------------ monoclinic crystal kinematics ------------------

# Lab-frame lattice constants of the reference monoclinic cell:
# a along x, b along y, c in the +z half-plane (angstrom, degrees).
LATTICE_A = 6.53
LATTICE_B = 11.03
LATTICE_C = 7.35
LATTICE_BETA_DEG = 102.689


class CrystalBasis:
    """Covariant lattice vectors M1..M3 and their duals for a monoclinic cell."""

    def __init__(self, m1, m2, m3):
        self.vectors = np.column_stack([m1, m2, m3]).astype(float)
        vol = np.linalg.det(self.vectors)
        if abs(vol) < 1e-12 * np.max(np.abs(self.vectors)) ** 3:
            raise BasisError("crystal basis vectors are coplanar")
        # Dual (contravariant) vectors as rows of the inverse: M^i . M_j = delta_ij.
        self.duals = np.linalg.inv(self.vectors)

    @classmethod
    def from_lattice(cls, a=LATTICE_A, b=LATTICE_B, c=LATTICE_C,
                     beta_deg=LATTICE_BETA_DEG):
        """Monoclinic cell with a || x, b || y, c in the +z half-plane."""
        beta = np.deg2rad(beta_deg)
        m1 = np.array([a, 0.0, 0.0])
        m2 = np.array([0.0, b, 0.0])
        m3 = np.array([c * np.cos(beta), 0.0, c * np.sin(beta)])
        return cls(m1, m2, m3)

    def covariant(self, i):
        return self.vectors[:, i].copy()

    def contravariant(self, i):
        return self.duals[i, :].copy()


DEFAULT_BASIS = CrystalBasis.from_lattice()


def monoclinic_stretch(a1, a2, a3, a4, basis=DEFAULT_BASIS):
    """Monoclinic-cell-preserving stretch on the crystal basis.

    U = sum_i a_i M_i (x) M^i + a4 (M_1 (x) M^3 + M_3 (x) M^1).
    The component matrix on the crystal basis is symmetric positive-definite
    when a1, a2, a3 > 0 and a1*a3 - a4^2 > 0 (the lab-frame matrix need not
    be symmetric because the basis is non-orthogonal).
    """
    if a1 <= 0.0 or a2 <= 0.0 or a3 <= 0.0 or a1 * a3 - a4 * a4 <= 0.0:
        raise InvalidKinematicsError(
            f"stretch coefficients ({a1}, {a2}, {a3}, {a4}) are not positive-definite "
            "on the crystal basis")
    m = [basis.covariant(i) for i in range(3)]
    md = [basis.contravariant(i) for i in range(3)]
    u = (a1 * np.outer(m[0], md[0]) + a2 * np.outer(m[1], md[1])
         + a3 * np.outer(m[2], md[2])
         + a4 * (np.outer(m[0], md[2]) + np.outer(m[2], md[0])))
    return u


def monoclinic_F(a1, a2, a3, a4, rotation=None, basis=DEFAULT_BASIS):
    """Deformation gradient F = R U preserving the monoclinic cell family."""
    u = monoclinic_stretch(a1, a2, a3, a4, basis=basis)
    if rotation is None:
        return u
    return require_rotation(rotation) @ u


def is_monoclinic_F(f, basis=DEFAULT_BASIS, tol=1e-8):
    """Check membership of F in the monoclinic family (F = R U, U cell-preserving).

    F belongs to the family exactly when det F > 0 and the deformed b-axis
    stays orthogonal to the deformed a- and c-axes, i.e. the crystal
    components of C = F^T F vanish at the (1,2) and (2,3) slots.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (3, 3) or not np.all(np.isfinite(f)) or np.linalg.det(f) <= 0.0:
        return False
    p = basis.vectors
    chat = p.T @ (f.T @ f) @ p
    scale = max(np.max(np.abs(chat)), 1e-30)
    return abs(chat[0, 1]) < tol * scale and abs(chat[1, 2]) < tol * scale


def symmetry_rotation(f, m2_ref, k=1):
    """Half-turn (k odd) about the deformed b-axis direction m2 = F . M2."""
    f = np.asarray(f, dtype=float)
    m2 = f @ np.asarray(m2_ref, dtype=float)
    norm = np.linalg.norm(m2)
    if norm < 1e-12:
        raise DegenerateAxisError("deformed symmetry axis has zero length")
    return rotation_exp((k * np.pi / norm) * m2)


def monoclinic_symmetry_rotations(f, basis=DEFAULT_BASIS, tol=1e-8):
    """Non-trivial symmetry rotations of the deformed monoclinic cell.

    The group is 2-periodic about the deformed b-axis; the identity (k = 0)
    is omitted, so the list holds the single half-turn generator.
    """
    if not is_monoclinic_F(f, basis=basis, tol=tol):
        raise InvalidKinematicsError(
            "F is not in the monoclinic cell-preserving family")
    return [symmetry_rotation(f, basis.covariant(1), k=1)]
