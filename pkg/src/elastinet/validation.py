"""Post-training audits for learned hyperelastic energies.

Covers conversions between the tangents of the three energy-conjugate
pairs (S-E, P-F, sigma-epsilon), a gradient-free strong-ellipticity
search over the acoustic tensor, first-order convexity sampling, energy
growth under volumetric collapse, the wave-speed anisotropy index, and
the 13-coefficient monoclinic tangent tables at pressure-located states.

Every report serializes to versioned JSON (deterministic key order),
renders a human-readable text block, and where a curve is involved
emits plot-ready CSV.
"""

import csv
import io
import json

import numpy as np
from scipy.optimize import brentq

from . import kinematics as kin
from .errors import ConfigError, NumericalError, RangeError

REPORT_VERSION = 1

# Default search-space bounds: protocol strain box for the stretch
# parameters and the printed hemisphere for the sphere angles.
ANGLE_BOUNDS = ((0.0, np.pi), (0.0, np.pi))
STRETCH_RANGE = (0.85, 1.15)
SHEAR_RANGE = (-0.15, 0.15)

CRITERIA = ("f", "g", "d")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _dump_json(payload, path=None):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ------------------ energy-source adapter ------------------

class EnergySource:
    """Uniform evaluation surface over a model bundle of either conjugate pair.

    Exposes the stored energy, both Piola stresses, the Cauchy stress, and
    the referential (dS/dE) and two-point (dP/dF) tangents at a deformation
    gradient, converting from whichever pair the model natively carries.
    """

    def __init__(self, bundle):
        if bundle.variant not in ("SE", "PF"):
            raise ConfigError(f"unsupported variant {bundle.variant!r}")
        self.bundle = bundle
        self.variant = bundle.variant

    def energy(self, f):
        f = np.asarray(f, dtype=float)
        if self.variant == "SE":
            return self.bundle.energy(kin.green_strain(f))
        return self.bundle.energy(f)

    def stress_pk1(self, f):
        f = np.asarray(f, dtype=float)
        if self.variant == "SE":
            return f @ self.bundle.stress(kin.green_strain(f))
        return self.bundle.stress(f)

    def stress_pk2(self, f):
        f = np.asarray(f, dtype=float)
        if self.variant == "SE":
            return self.bundle.stress(kin.green_strain(f))
        return np.linalg.solve(f, self.bundle.stress(f))

    def cauchy(self, f):
        f = np.asarray(f, dtype=float)
        sigma = self.stress_pk1(f) @ f.T / np.linalg.det(f)
        return kin.sym(sigma)

    def tangent_se(self, f):
        """dS/dE as a full fourth-order tensor at E(F)."""
        f = np.asarray(f, dtype=float)
        if self.variant == "SE":
            return kin.voigt6_to_tensor4(self.bundle.tangent(kin.green_strain(f)))
        a = self.bundle.tangent(f).reshape(3, 3, 3, 3)
        s = self.stress_pk2(f)
        finv = np.linalg.inv(f)
        geo = np.einsum("JL,ik->iJkL", s, np.eye(3))
        return np.einsum("Ii,Kk,iJkL->IJKL", finv, finv, a - geo)


def as_source(model):
    return model if isinstance(model, EnergySource) else EnergySource(model)


# ------------------ tangent conversions ------------------

def tangent_PF(model, f):
    """Two-point tangent dP/dF as a 9x9 matrix with (iJ),(kL) pairing.

    Assembled from the referential tangent by pushing both stress legs
    forward with F and adding the geometric stress term:
    A_iJkL = F_iI F_kK [dS/dE]_IJKL + S_JL delta_ik.
    """
    src = as_source(model)
    f = kin.require_orientation_preserving(f)
    if src.variant == "PF":
        return np.asarray(src.bundle.tangent(f), dtype=float)
    c4 = src.tangent_se(f)
    s = src.stress_pk2(f)
    a = np.einsum("iI,kK,IJKL->iJkL", f, f, c4)
    a += np.einsum("JL,ik->iJkL", s, np.eye(3))
    return a.reshape(9, 9)


def tangent_sigma_eps(model, f, n_terms=30):
    """Small-strain tangent d(sigma)/d(epsilon) in 6x6 Voigt form.

    Chains the push-forward of the stress legs (at frozen geometry), the
    referential tangent dS/dE, and half the series derivative of
    C = exp(2 epsilon) evaluated at the logarithmic strain of F.
    """
    src = as_source(model)
    f = kin.require_orientation_preserving(f)
    eps = kin.log_strain(kin.right_cauchy_green(f))
    d_c = kin.dC_deps_series(eps, n_terms=n_terms)
    c_se = src.tangent_se(f)
    j = np.linalg.det(f)
    t1 = (np.einsum("iK,jL->ijKL", f, f)
          + np.einsum("iL,jK->ijKL", f, f)) * (0.5 / j)
    c4 = np.einsum("ijKL,KLMN,MNkl->ijkl", t1, c_se, 0.5 * d_c)
    return kin.tensor4_to_voigt6(0.5 * (c4 + np.swapaxes(c4, 0, 1)))


# ------------------ acoustic tensor and ellipticity criteria ------------------

class AcousticTensor:
    """3x3 acoustic tensor A(N) with the generating direction (and F if known)."""

    def __init__(self, matrix, direction, f=None):
        self.matrix = np.asarray(matrix, dtype=float)
        self.direction = np.asarray(direction, dtype=float)
        self.f = None if f is None else np.asarray(f, dtype=float)


def acoustic(c_pf, n, f=None):
    """Contract the two-point tangent with a unit direction: A_ik = N_J C_iJkL N_L."""
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ConfigError("acoustic tensor direction must be a unit vector")
    c4 = np.asarray(c_pf, dtype=float).reshape(3, 3, 3, 3)
    return AcousticTensor(np.einsum("J,iJkL,L->ik", n, c4, n), n, f)


_OFFDIAG = ((0, 1), (0, 2), (1, 2))


def ellipticity_criteria(a):
    """The three positivity checks of an acoustic tensor: (f, g, d).

    f is the smallest diagonal entry, g the smallest of the three 2x2
    principal-minor combinations A_ii A_jj - A_ij^2, d the determinant.
    """
    m = a.matrix if isinstance(a, AcousticTensor) else np.asarray(a, dtype=float)
    f = float(np.min(np.diag(m)))
    g = float(min(m[i, i] * m[j, j] - m[i, j] ** 2 for i, j in _OFFDIAG))
    return f, g, float(np.linalg.det(m))


def _acoustic_batch(c4, ns):
    return np.einsum("sJ,iJkL,sL->sik", ns, c4, ns)


def _criteria_batch(a):
    f = np.min(a[:, (0, 1, 2), (0, 1, 2)], axis=1)
    g = np.min(np.stack([a[:, i, i] * a[:, j, j] - a[:, i, j] ** 2
                         for i, j in _OFFDIAG], axis=1), axis=1)
    return f, g, np.linalg.det(a)


# ------------------ direction grids and the gradient-free search ------------------

def sphere_angles(n):
    """Uniform (phi, theta) grid over [0, pi] x [0, pi] with n points total.

    The row count is the divisor of n nearest sqrt(n), so the grid stays
    as square as the factorization of n allows.
    """
    if n < 1:
        raise ConfigError(f"direction count must be >= 1, got {n}")
    divisors = [k for k in range(1, n + 1) if n % k == 0]
    rows = min(divisors, key=lambda k: abs(k - np.sqrt(n)))
    phis = np.linspace(0.0, np.pi, rows) if rows > 1 else np.array([0.0])
    thetas = np.linspace(0.0, np.pi, n // rows) if n // rows > 1 \
        else np.array([0.0])
    pp, tt = np.meshgrid(phis, thetas, indexing="ij")
    return np.column_stack([pp.ravel(), tt.ravel()])


def direction_from_angles(angles):
    """Unit vector(s) from spherical (phi, theta): polar angle from e3."""
    angles = np.asarray(angles, dtype=float)
    phi, theta = angles[..., 0], angles[..., 1]
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=-1)


def sphere_grid(n):
    """n unit vectors on the printed hemisphere grid (A(-N) = A(N) covers the rest)."""
    return direction_from_angles(sphere_angles(n))


def hill_climb(objective, start, iterations=10000, seed=0, step=None,
               bounds=None):
    """Random-neighbor descent accepting only strict improvements.

    Proposals are Gaussian steps around the incumbent; after 100
    consecutive rejections the step scale is halved. Bounds, when given,
    clip every proposal. Returns (best params, best value, per-iteration
    trace of the incumbent value). Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    x = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    lo = hi = None
    if bounds is not None:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
        x = np.clip(x, lo, hi)
    if step is None:
        scale = 0.05 * (hi - lo) if bounds is not None \
            else np.full(x.shape, 0.1)
    else:
        scale = np.full(x.shape, float(step))
    fx = float(objective(x))
    if not np.isfinite(fx):
        raise NumericalError("hill climb objective is not finite at the start")
    trace = np.empty(iterations)
    rejections = 0
    for it in range(iterations):
        prop = x + scale * rng.standard_normal(x.shape)
        if bounds is not None:
            prop = np.clip(prop, lo, hi)
        fp = float(objective(prop))
        if fp < fx:
            x, fx = prop, fp
            rejections = 0
        else:
            rejections += 1
            if rejections >= 100:
                scale = scale * 0.5
                rejections = 0
        trace[it] = fx
    return x, fx, trace


# ------------------ strong ellipticity ------------------

def monoclinic_f_grid(grid_points=5, stretch_range=STRETCH_RANGE,
                      shear_range=SHEAR_RANGE):
    """Uniform grid over the pure monoclinic stretch parameters (a1..a4)."""
    a = np.linspace(*stretch_range, grid_points)
    s = np.linspace(*shear_range, grid_points)
    params = np.stack(np.meshgrid(a, a, a, s, indexing="ij"),
                      axis=-1).reshape(-1, 4)
    return params


class EllipticityReport:
    """Searched minima of the three acoustic positivity criteria."""

    kind = "ellipticity"

    def __init__(self, mode):
        self.mode = mode
        self.criteria = {}
        self.failures = []
        self.passed = None

    def to_dict(self):
        return {"version": REPORT_VERSION, "kind": self.kind,
                "mode": self.mode, "passed": self.passed,
                "failures": self.failures, "criteria": self.criteria}

    def to_json(self, path=None):
        return _dump_json(self.to_dict(), path)

    def to_text(self):
        lines = [f"strong ellipticity ({self.mode} deformation): "
                 f"{'PASS' if self.passed else 'FAIL'}"]
        for name in CRITERIA:
            c = self.criteria[name]
            lines.append(
                f"  {name}: min {c['min_value']:+.6e}  "
                f"(grid {c['grid_min']:+.6e}, {c['candidates']} candidates, "
                f"{c['trace_length']} optimizer steps) -> "
                f"{'ok' if c['passed'] else 'VIOLATED'}")
        if self.failures:
            lines.append(f"  {len(self.failures)} grid points excluded "
                         "(tangent evaluation failed)")
        return "\n".join(lines)


def _select_candidates(values, tol, floor, cap):
    vmin = float(np.min(values))
    keep = np.flatnonzero(values <= vmin + max(tol * abs(vmin), floor))
    keep = keep[np.argsort(values[keep], kind="stable")]
    return vmin, keep[:cap]


def strong_ellipticity_test(model, f=None, f_range=False, n_directions=1000,
                            iterations=10000, seed=0, candidate_tol=0.05,
                            candidate_floor=1e-9, max_candidates=16,
                            grid_points=5, stretch_range=STRETCH_RANGE,
                            shear_range=SHEAR_RANGE):
    """Three-step positivity audit of the acoustic tensor.

    Step 1 evaluates the criteria on a uniform point cloud (directions
    alone for a fixed F, directions x monoclinic stretch box when f_range
    is true) and keeps every point within candidate_tol of the minimum
    (with an absolute floor near zero). Step 2 hill-climbs from each
    candidate. Step 3 passes iff the worst value found stays positive.
    """
    src = as_source(model)
    report = EllipticityReport("range" if f_range else "fixed")
    angles = sphere_angles(n_directions)
    ns = direction_from_angles(angles)

    if not f_range:
        f = np.eye(3) if f is None else np.asarray(f, dtype=float)
        c4 = tangent_PF(src, f).reshape(3, 3, 3, 3)
        crit = dict(zip(CRITERIA, _criteria_batch(_acoustic_batch(c4, ns))))

        def make_objective(name):
            idx = CRITERIA.index(name)

            def objective(q):
                n = direction_from_angles(q)
                return ellipticity_criteria(
                    np.einsum("J,iJkL,L->ik", n, c4, n))[idx]
            return objective

        points = angles

        def arg_f(q):
            return f

        bounds = list(ANGLE_BOUNDS)
    else:
        params = monoclinic_f_grid(grid_points, stretch_range, shear_range)
        rows = {name: [] for name in CRITERIA}
        kept_points = []
        for p in params:
            fp = kin.monoclinic_F(*p)
            try:
                c4 = tangent_PF(src, fp).reshape(3, 3, 3, 3)
            except (NumericalError, ConfigError) as err:
                report.failures.append(
                    {"params": p.tolist(), "error": str(err)})
                continue
            fv, gv, dv = _criteria_batch(_acoustic_batch(c4, ns))
            rows["f"].append(fv)
            rows["g"].append(gv)
            rows["d"].append(dv)
            kept_points.append(np.column_stack(
                [angles, np.broadcast_to(p, (len(angles), 4))]))
        if not kept_points:
            raise NumericalError(
                "tangent evaluation failed on the whole deformation grid")
        points = np.vstack(kept_points)
        crit = {name: np.concatenate(rows[name]) for name in CRITERIA}

        def make_objective(name):
            idx = CRITERIA.index(name)

            def objective(q):
                try:
                    c4 = tangent_PF(src, kin.monoclinic_F(*q[2:])
                                    ).reshape(3, 3, 3, 3)
                except (NumericalError, ConfigError):
                    return np.inf
                n = direction_from_angles(q[:2])
                return ellipticity_criteria(
                    np.einsum("J,iJkL,L->ik", n, c4, n))[idx]
            return objective

        def arg_f(q):
            return kin.monoclinic_F(*q[2:])

        bounds = list(ANGLE_BOUNDS) + [stretch_range] * 3 + [shear_range]

    for k, name in enumerate(CRITERIA):
        grid_min, cand = _select_candidates(
            crit[name], candidate_tol, candidate_floor, max_candidates)
        objective = make_objective(name)
        best_q, best_v, steps = None, np.inf, 0
        for j, idx in enumerate(cand):
            q, v, trace = hill_climb(objective, points[idx],
                                     iterations=iterations,
                                     seed=[seed, k, j], bounds=bounds)
            steps += len(trace)
            if v < best_v:
                best_q, best_v = q, v
        report.criteria[name] = {
            "grid_min": grid_min,
            "min_value": float(best_v),
            "argmin_q": best_q.tolist(),
            "argmin_f": np.asarray(arg_f(best_q)).tolist(),
            "candidates": int(len(cand)),
            "trace_length": int(steps),
            "passed": bool(best_v > 0.0),
        }
    report.passed = all(report.criteria[n]["passed"] for n in CRITERIA)
    return report


def ellipticity_sweep(model, fs, labels=None, stop_at_failure=True, **kwargs):
    """Fixed-F ellipticity tests along a load path; localizes the first failure.

    Returns a dict with one entry per evaluated step (label, criterion
    minima, pass flag) and the label of the first failing step, stopping
    there unless stop_at_failure is false.
    """
    fs = np.asarray(fs, dtype=float).reshape(-1, 3, 3)
    if labels is None:
        labels = list(range(len(fs)))
    if len(labels) != len(fs):
        raise ConfigError("sweep labels and states disagree in length")
    steps = []
    first_failure = None
    for label, f in zip(labels, fs):
        rep = strong_ellipticity_test(model, f=f, **kwargs)
        steps.append({"label": label,
                      **{name: rep.criteria[name]["min_value"]
                         for name in CRITERIA},
                      "passed": rep.passed})
        if not rep.passed and first_failure is None:
            first_failure = label
            if stop_at_failure:
                break
    return {"version": REPORT_VERSION, "kind": "ellipticity-sweep",
            "steps": steps, "first_failure": first_failure}


def sweep_csv(sweep, path=None):
    """Plot-ready CSV of criterion minima versus the sweep label."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["label", *CRITERIA, "passed"])
    for s in sweep["steps"]:
        writer.writerow([s["label"], *(repr(float(s[n])) for n in CRITERIA),
                         int(s["passed"])])
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    return buf.getvalue()


# ------------------ convexity ------------------

class ConvexityReport:
    """First-order convexity gaps over sampled deformation pairs."""

    kind = "convexity"

    def __init__(self, pairs, residuals):
        self.pairs = pairs
        self.residuals = np.asarray(residuals, dtype=float)
        self.count = len(self.pairs)
        worst = int(np.argmin(self.residuals)) if self.count else 0
        self.worst_residual = float(self.residuals[worst]) if self.count else 0.0
        self.worst_pair = self.pairs[worst] if self.count else None
        self.violations = int(np.sum(self.residuals < 0.0))
        self.passed = self.violations == 0

    def to_dict(self):
        return {"version": REPORT_VERSION, "kind": self.kind,
                "count": self.count, "violations": self.violations,
                "worst_residual": self.worst_residual,
                "worst_pair": None if self.worst_pair is None else
                [self.worst_pair[0].tolist(), self.worst_pair[1].tolist()],
                "passed": self.passed}

    def to_json(self, path=None):
        return _dump_json(self.to_dict(), path)

    def to_text(self):
        return (f"convexity: {self.violations} violations in {self.count} "
                f"pairs, worst gap {self.worst_residual:+.6e} -> "
                f"{'PASS' if self.passed else 'FAIL'}")


def _default_pair_sampler(spread=0.12):
    def sampler(rng):
        while True:
            f0 = np.eye(3) + spread * rng.uniform(-1.0, 1.0, (3, 3))
            f1 = np.eye(3) + spread * rng.uniform(-1.0, 1.0, (3, 3))
            if np.linalg.det(f0) > 0.0 and np.linalg.det(f1) > 0.0:
                return f0, f1
    return sampler


def convexity_check(model, sampler=None, n_pairs=200, seed=0):
    """Sample deformation pairs and audit the first-order convexity gap.

    The residual per pair is psi(F') - psi(F) - P(F) : (F' - F); any
    negative value is a convexity violation.
    """
    src = as_source(model)
    sampler = sampler if sampler is not None else _default_pair_sampler()
    rng = np.random.default_rng(seed)
    pairs, residuals = [], []
    for _ in range(n_pairs):
        f0, f1 = sampler(rng)
        gap = (src.energy(f1) - src.energy(f0)
               - np.sum(src.stress_pk1(f0) * (f1 - f0)))
        pairs.append((np.asarray(f0, dtype=float), np.asarray(f1, dtype=float)))
        residuals.append(gap)
    return ConvexityReport(pairs, residuals)


# ------------------ growth under volumetric collapse ------------------

class GrowthReport:
    """Energy versus det F on a volumetric-collapse path."""

    kind = "growth"

    def __init__(self, js, psis, min_training_j=None, failure=None):
        self.js = np.asarray(js, dtype=float)
        self.psis = np.asarray(psis, dtype=float)
        self.min_training_j = min_training_j
        self.failure = failure
        self.monotone = bool(len(self.psis) >= 2
                             and np.all(np.diff(self.psis) > 0.0))
        self.divergent = None
        self.slope_first = self.slope_last = None
        if failure is None and len(self.js) >= 2:
            x = -np.log(self.js[:len(self.psis)])
            self.slope_first, self.slope_last = self._decade_slopes(x)
            if self.slope_first is not None:
                self.divergent = bool(
                    self.slope_last > 10.0 * self.slope_first)

    def _decade_slopes(self, x):
        ln10 = np.log(10.0)
        first = (x >= -1e-12) & (x <= ln10 + 1e-12)
        last = x >= x[-1] - ln10 - 1e-12
        slopes = []
        for mask in (first, last):
            if np.sum(mask) < 2:
                return None, None
            xs, ys = x[mask], self.psis[mask]
            slopes.append(float((ys[-1] - ys[0]) / (xs[-1] - xs[0])))
        return slopes[0], slopes[1]

    def to_dict(self):
        return {"version": REPORT_VERSION, "kind": self.kind,
                "j": self.js.tolist(), "energy": self.psis.tolist(),
                "monotone": self.monotone, "divergent": self.divergent,
                "slope_first_decade": self.slope_first,
                "slope_last_decade": self.slope_last,
                "min_training_j": self.min_training_j,
                "failure": self.failure}

    def to_json(self, path=None):
        return _dump_json(self.to_dict(), path)

    def to_text(self):
        verdict = "divergent (growth condition satisfied)" if self.divergent \
            else "bounded (growth condition NOT satisfied)"
        if self.divergent is None:
            verdict = "unclassified"
        reach = f" down to det F = {self.js[len(self.psis) - 1]:.3e}" \
            if len(self.psis) else ""
        lines = [f"growth: {verdict}; "
                 f"{'monotone' if self.monotone else 'NOT monotone'} over "
                 f"{len(self.psis)} states{reach}"]
        if self.min_training_j is not None:
            lines.append(f"  minimum det F in training data: "
                         f"{self.min_training_j:.6f}")
        if self.failure is not None:
            lines.append(f"  evaluation failed at step "
                         f"{self.failure['step']}: {self.failure['error']}")
        return "\n".join(lines)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["det_f", "minus_log_j", "energy"])
        for j, p in zip(self.js, self.psis):
            writer.writerow([repr(float(j)), repr(float(-np.log(j))),
                             repr(float(p))])
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        return buf.getvalue()


def growth_test(model, js=None, min_training_j=None):
    """Evaluate the energy on volumetric states F = J^(1/3) I with J -> 0.

    The J sequence must be strictly decreasing within (0, 1]. The report
    classifies the curve as divergent when the final-decade slope of
    energy versus -ln J exceeds ten times the first decade's slope.
    """
    src = as_source(model)
    if js is None:
        js = np.logspace(0.0, -9.0, 19)
    js = np.asarray(js, dtype=float)
    if np.any(js <= 0.0) or np.any(js > 1.0):
        raise ConfigError("growth J values must lie in (0, 1]")
    if len(js) > 1 and np.any(np.diff(js) >= 0.0):
        raise ConfigError("growth J sequence must be strictly decreasing")
    psis, failure = [], None
    for step, j in enumerate(js):
        f = j ** (1.0 / 3.0) * np.eye(3)
        try:
            psis.append(float(src.energy(f)))
        except Exception as err:  # partial report with a failure marker
            failure = {"step": step, "j": float(j), "error": str(err)}
            break
    return GrowthReport(js[:len(psis)] if failure is not None else js,
                        psis, min_training_j, failure)


# ------------------ anisotropy index ------------------

class AnisotropyReport:
    """Extremal squared wave speeds and their ratio along a load path."""

    kind = "anisotropy"

    def __init__(self):
        self.entries = []

    def append(self, entry):
        self.entries.append(entry)

    def to_dict(self):
        return {"version": REPORT_VERSION, "kind": self.kind,
                "entries": self.entries}

    def to_json(self, path=None):
        return _dump_json(self.to_dict(), path)

    def to_text(self):
        lines = ["anisotropy index (ratio of extremal squared wave speeds):"]
        for e in self.entries:
            tag = "DIVERGENT" if e["divergent"] else f"{e['index']:.4f}"
            lines.append(f"  {e['label']}: A_I = {tag}  "
                         f"(v1^2 = {e['v1_sq']:.4f}, v2^2 = {e['v2_sq']:.4f})")
        return "\n".join(lines)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["label", "v1_sq", "v2_sq", "index", "divergent"])
        for e in self.entries:
            writer.writerow([e["label"], repr(float(e["v1_sq"])),
                             repr(float(e["v2_sq"])),
                             repr(float(e["index"])), int(e["divergent"])])
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        return buf.getvalue()


def anisotropy_index(model, f=None, n_directions=1000, iterations=10000,
                     seed=0, label=0):
    """Extremal acoustic-tensor eigenvalues over the direction sphere.

    Seeds min/max eigenvalue searches on the uniform grid, refines each
    with the gradient-free climber, and reports the index v2^2 / v1^2
    (the density cancels in the ratio). A non-positive smallest value
    marks the index divergent.
    """
    src = as_source(model)
    f = np.eye(3) if f is None else np.asarray(f, dtype=float)
    c4 = tangent_PF(src, f).reshape(3, 3, 3, 3)
    angles = sphere_angles(n_directions)
    eigs = np.linalg.eigvalsh(_acoustic_batch(
        c4, direction_from_angles(angles)))

    def smallest(q):
        n = direction_from_angles(q)
        return float(np.linalg.eigvalsh(
            np.einsum("J,iJkL,L->ik", n, c4, n))[0])

    def neg_largest(q):
        n = direction_from_angles(q)
        return -float(np.linalg.eigvalsh(
            np.einsum("J,iJkL,L->ik", n, c4, n))[2])

    grid_v1 = float(np.min(eigs[:, 0]))
    grid_v2 = float(np.max(eigs[:, 2]))
    q1, v1, trace1 = hill_climb(smallest, angles[np.argmin(eigs[:, 0])],
                                iterations=iterations, seed=[seed, 0],
                                bounds=list(ANGLE_BOUNDS))
    q2, neg_v2, trace2 = hill_climb(neg_largest, angles[np.argmax(eigs[:, 2])],
                                    iterations=iterations, seed=[seed, 1],
                                    bounds=list(ANGLE_BOUNDS))
    v2 = -neg_v2
    divergent = v1 <= 0.0
    return {"label": label, "v1_sq": float(v1), "v2_sq": float(v2),
            "index": float(np.inf if divergent else v2 / v1),
            "divergent": bool(divergent),
            "grid_v1_sq": grid_v1, "grid_v2_sq": grid_v2,
            "direction_min": direction_from_angles(q1).tolist(),
            "direction_max": direction_from_angles(q2).tolist(),
            "trace_length": int(len(trace1) + len(trace2))}


def anisotropy_sweep(model, fs, labels=None, **kwargs):
    """Anisotropy-index entries for each state along a load path."""
    fs = np.asarray(fs, dtype=float).reshape(-1, 3, 3)
    if labels is None:
        labels = list(range(len(fs)))
    if len(labels) != len(fs):
        raise ConfigError("sweep labels and states disagree in length")
    report = AnisotropyReport()
    for label, f in zip(labels, fs):
        report.append(anisotropy_index(model, f, label=label, **kwargs))
    return report


# ------------------ coefficient tables at pressure-located states ------------------

TABLE_LABELS = kin.MONOCLINIC_LABELS
TABLE_COLUMNS = ("SE", "PF", "sigma_eps")


class TangentTable:
    """The 13 monoclinic coefficients of all three tangents at one state."""

    kind = "tangent-table"

    def __init__(self, name, f, pressure, columns):
        self.name = name
        self.f = np.asarray(f, dtype=float)
        self.pressure = float(pressure)
        self.columns = columns  # column name -> label -> value

    def row(self, label):
        return {c: self.columns[c][label] for c in TABLE_COLUMNS}

    def to_dict(self):
        return {"version": REPORT_VERSION, "kind": self.kind,
                "state": self.name, "pressure": self.pressure,
                "f": self.f.tolist(), "labels": list(TABLE_LABELS),
                "columns": self.columns}

    def to_json(self, path=None):
        return _dump_json(self.to_dict(), path)

    def to_text(self):
        lines = [f"elastic coefficients at state '{self.name}' "
                 f"(Cauchy pressure {self.pressure:.6g} GPa):",
                 f"  {'':>6} {'S-E':>12} {'P-F':>12} {'sigma-eps':>12}"]
        for label in TABLE_LABELS:
            r = self.row(label)
            lines.append(f"  {label:>6} {r['SE']:>12.4f} {r['PF']:>12.4f} "
                         f"{r['sigma_eps']:>12.4f}")
        return "\n".join(lines)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["label", *TABLE_COLUMNS])
        for label in TABLE_LABELS:
            r = self.row(label)
            writer.writerow([label, *(repr(float(r[c]))
                                      for c in TABLE_COLUMNS)])
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        return buf.getvalue()


def cauchy_pressure(model, f):
    """Pressure -tr(sigma)/3 (tension and dilative pressure positive)."""
    return float(-np.trace(as_source(model).cauchy(f)) / 3.0)


def locate_pressure_state(model, pressure, j_bounds=(0.5, 1.05),
                          scan_points=200):
    """Find F = J^(1/3) I on the volumetric path with the requested pressure.

    Scans the path for a sign-change bracket and refines it with a root
    solver. Raises a range error when the pressure is not bracketed.
    """
    src = as_source(model)

    def gap(j):
        return cauchy_pressure(src, j ** (1.0 / 3.0) * np.eye(3)) - pressure

    js = np.linspace(j_bounds[1], j_bounds[0], scan_points)
    vals = np.array([gap(j) for j in js])
    if np.any(vals == 0.0):
        j_star = float(js[np.flatnonzero(vals == 0.0)[0]])
    else:
        sign_change = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
        if len(sign_change) == 0:
            reached = vals + pressure
            raise RangeError(
                f"Cauchy pressure {pressure} GPa is not bracketed on the "
                f"volumetric path (reached [{np.min(reached):.4g}, "
                f"{np.max(reached):.4g}] GPa)")
        k = sign_change[0]
        j_star = brentq(gap, js[k + 1], js[k], xtol=1e-13, rtol=1e-15)
    return float(j_star) ** (1.0 / 3.0) * np.eye(3)


def _thirteen(voigt):
    return {label: float(voigt[kin.MONOCLINIC_SLOTS[label]])
            for label in TABLE_LABELS}


def tangent_table(model, pressure=None, name=None, j_bounds=(0.5, 1.05),
                  scan_points=200):
    """Monoclinic coefficient table of all three tangents at a named state.

    With no pressure the reference state F = I is used; otherwise the
    state is located on the volumetric-compression path at the requested
    Cauchy pressure. The two-point tangent column reads the 13 slot
    components of the raw fourth-order tensor; the referential tangent is
    minor-symmetrized before Voigt compression.
    """
    src = as_source(model)
    if pressure is None:
        f = np.eye(3)
        pressure_at = cauchy_pressure(src, f)
        name = name if name is not None else "reference"
    else:
        f = locate_pressure_state(src, pressure, j_bounds, scan_points)
        pressure_at = cauchy_pressure(src, f)
        name = name if name is not None else f"p={pressure:g}GPa"

    c_se = src.tangent_se(f)
    c_se = 0.5 * (c_se + np.swapaxes(c_se, 0, 1))
    c_se = 0.5 * (c_se + np.swapaxes(c_se, 2, 3))
    a_pf = tangent_PF(src, f).reshape(3, 3, 3, 3)
    pf_voigt = np.empty((6, 6))
    for a, (i, j) in enumerate(kin.VOIGT_PAIRS):
        for b, (k, l) in enumerate(kin.VOIGT_PAIRS):
            pf_voigt[a, b] = a_pf[i, j, k, l]
    columns = {"SE": _thirteen(kin.tensor4_to_voigt6(c_se)),
               "PF": _thirteen(pf_voigt),
               "sigma_eps": _thirteen(tangent_sigma_eps(src, f))}
    return TangentTable(name, f, pressure_at, columns)
