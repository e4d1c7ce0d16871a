"""Synthetic stress-series generation, spectral filtering, and datasets.

The generator plays the role of an MD production run: it drives an analytic
ground-truth energy along the loading protocols, converts to Cauchy stress,
and adds temporally correlated noise to the stress eigenvalues. The filter
smooths eigenvalues and the eigenbasis separately so that the result does not
depend on the lab frame.
"""

import warnings

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from . import kinematics as kin
from .errors import (
    ConfigError,
    DataError,
    DatasetError,
    ProtocolError,
    WindowError,
)
from .network import Normalizer, features_from_tensor

# Reference monoclinic stiffness sets (GPa) used by the synthetic ground
# truth: near-ambient column and a high-pressure (5 GPa) column.
REFERENCE_STIFFNESS_AMBIENT = {
    "D11": 22.97, "D22": 22.62, "D33": 21.67,
    "D44": 8.645, "D55": 10.407, "D66": 9.527,
    "D12": 9.2, "D13": 12.32, "D23": 12.37,
    "D15": -0.43, "D25": 4.47, "D35": 1.84, "D46": 2.248,
}
REFERENCE_STIFFNESS_5GPA = {
    "D11": 87.71, "D22": 67.08, "D33": 62.11,
    "D44": 19.461, "D55": 34.08, "D66": 19.662,
    "D12": 36.93, "D13": 52.95, "D23": 46.49,
    "D15": -11.32, "D25": 11.1, "D35": 2.48, "D46": 6.06,
}

PATH_KINDS = ("uniaxial-compression", "uniaxial-tension",
              "shear-positive", "shear-negative", "biaxial-compression")
_AXIS_NAMES = "xyz"

# Protocol bounds on total imposed strain.
_UNIAXIAL_SHEAR_BOUND = 0.3
_BIAXIAL_BOUND = 0.15


class LoadingPath:
    """One loading protocol: a linear strain ramp at fixed rate.

    rate is strain per picosecond, duration and dt are picoseconds. Uniaxial
    and shear ramps may reach total strain 0.3; biaxial ramps 0.15 per axis.
    """

    def __init__(self, kind, axes, rate, duration=300.0, dt=0.1):
        if kind not in PATH_KINDS:
            raise ProtocolError(f"unknown loading kind {kind!r}")
        axes = tuple(int(a) for a in axes)
        if kind.startswith("uniaxial"):
            if len(axes) != 1 or not 0 <= axes[0] <= 2:
                raise ProtocolError(f"uniaxial path needs one axis, got {axes}")
        else:
            if (len(axes) != 2 or not all(0 <= a <= 2 for a in axes)
                    or axes[0] >= axes[1]):
                raise ProtocolError(
                    f"{kind} needs an ordered axis pair (i < j), got {axes}")
        if rate < 0.0 or duration < 0.0 or dt <= 0.0:
            raise ProtocolError("rate and duration must be >= 0 and dt > 0")
        total = rate * duration
        bound = (_BIAXIAL_BOUND if kind == "biaxial-compression"
                 else _UNIAXIAL_SHEAR_BOUND)
        if total > bound + 1e-12:
            raise ProtocolError(
                f"total strain {total:.4f} exceeds protocol bound {bound} for {kind}")
        self.kind = kind
        self.axes = axes
        self.rate = float(rate)
        self.duration = float(duration)
        self.dt = float(dt)

    @property
    def name(self):
        return f"{self.kind}-{''.join(_AXIS_NAMES[a] for a in self.axes)}"

    def times(self):
        n = int(round(self.duration / self.dt)) + 1 if self.duration > 0.0 else 1
        return np.arange(n) * self.dt

    def f_at(self, t):
        gamma = self.rate * t
        f = np.eye(3)
        if self.kind == "uniaxial-compression":
            f[self.axes[0], self.axes[0]] = 1.0 - gamma
        elif self.kind == "uniaxial-tension":
            f[self.axes[0], self.axes[0]] = 1.0 + gamma
        elif self.kind == "shear-positive":
            f[self.axes[0], self.axes[1]] = gamma
        elif self.kind == "shear-negative":
            f[self.axes[0], self.axes[1]] = -gamma
        else:  # biaxial-compression
            f[self.axes[0], self.axes[0]] = 1.0 - gamma
            f[self.axes[1], self.axes[1]] = 1.0 - gamma
        return f

    def to_dict(self):
        return {"kind": self.kind, "axes": list(self.axes), "rate": self.rate,
                "duration": self.duration, "dt": self.dt}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["axes"], d["rate"], d["duration"], d["dt"])


def generate_path(path):
    """Deformation gradients along a loading path, one per sample time."""
    fs = np.stack([path.f_at(t) for t in path.times()])
    dets = np.linalg.det(fs)
    if np.any(dets <= 0.0):
        raise ProtocolError(f"path {path.name} produced det F <= 0")
    return fs


def default_paths(dt=0.1, duration=300.0):
    """The fifteen-protocol production set.

    Three uniaxial compressions, three tensions (rate 0.1 / 100 ps, strain
    0.3), six shears on the tilt pairs with both signs (same rate), and three
    biaxial compressions (rate 0.05 / 100 ps, strain 0.15 per axis).
    """
    uni_rate = 0.1 / 100.0 * (300.0 / duration) if duration > 0 else 0.0
    bi_rate = 0.05 / 100.0 * (300.0 / duration) if duration > 0 else 0.0
    paths = []
    for a in range(3):
        paths.append(LoadingPath("uniaxial-compression", (a,), uni_rate,
                                 duration, dt))
    for a in range(3):
        paths.append(LoadingPath("uniaxial-tension", (a,), uni_rate, duration, dt))
    for pair in ((0, 1), (0, 2), (1, 2)):
        paths.append(LoadingPath("shear-positive", pair, uni_rate, duration, dt))
    for pair in ((0, 1), (0, 2), (1, 2)):
        paths.append(LoadingPath("shear-negative", pair, uni_rate, duration, dt))
    for pair in ((0, 1), (0, 2), (1, 2)):
        paths.append(LoadingPath("biaxial-compression", pair, bi_rate, duration, dt))
    return paths


class GroundTruthModel:
    """Quadratic-in-Green-strain energy with a constant reference stiffness.

    psi(E) = 0.5 E : C : E, S = C : E, sigma = J^-1 F S F^T.
    """

    def __init__(self, stiffness_voigt, tag="svk-ambient"):
        d = np.asarray(stiffness_voigt, dtype=float)
        if d.shape != (6, 6) or np.max(np.abs(d - d.T)) > 1e-9 * np.max(np.abs(d)):
            raise ConfigError("ground-truth stiffness must be a symmetric 6x6 matrix")
        # The energy quadratic form on the six strain components is congruent
        # to the raw Voigt matrix, so definiteness can be checked directly.
        if np.any(np.linalg.eigvalsh(0.5 * (d + d.T)) <= 0.0):
            raise ConfigError("ground-truth stiffness must be positive-definite")
        self.stiffness = d
        self.tag = tag

    @classmethod
    def ambient(cls):
        return cls(kin.monoclinic_stiffness(REFERENCE_STIFFNESS_AMBIENT),
                   tag="svk-ambient")

    @classmethod
    def high_pressure(cls):
        return cls(kin.monoclinic_stiffness(REFERENCE_STIFFNESS_5GPA),
                   tag="svk-5gpa")

    def second_piola(self, e):
        return kin.apply_stiffness_voigt(self.stiffness, e)

    def energy_from_strain(self, e):
        s = self.second_piola(e)
        return 0.5 * float(np.tensordot(s, e))

    def energy(self, f):
        return self.energy_from_strain(kin.green_strain(f))

    def cauchy(self, f):
        s = self.second_piola(kin.green_strain(f))
        return kin.push_forward_stress(s, f)


class NoiseModel:
    """First-order autoregressive Gaussian noise on stress eigenvalues.

    Each record's clean Cauchy stress is eigendecomposed and the three
    eigenvalues are perturbed by independent AR(1) streams (stationary
    standard deviation = amplitude GPa, lag-one correlation exp(-1/correlation)
    in records); the eigenvectors are left untouched.
    """

    def __init__(self, amplitude=0.05, correlation=10.0, seed=0):
        if amplitude < 0.0:
            raise ConfigError("noise amplitude must be >= 0")
        if correlation < 0.0:
            raise ConfigError("noise correlation must be >= 0")
        self.amplitude = float(amplitude)
        self.correlation = float(correlation)
        self.seed = int(seed)

    def perturb(self, sigmas):
        sigmas = np.asarray(sigmas, dtype=float)
        if self.amplitude == 0.0:
            return sigmas.copy()
        rng = np.random.default_rng(self.seed)
        rho = np.exp(-1.0 / self.correlation) if self.correlation > 0.0 else 0.0
        innovation = np.sqrt(1.0 - rho * rho)
        out = np.empty_like(sigmas)
        eta = self.amplitude * rng.standard_normal(3)
        for t in range(len(sigmas)):
            if t > 0:
                eta = rho * eta + innovation * self.amplitude * rng.standard_normal(3)
            w, v = np.linalg.eigh(sigmas[t])
            out[t] = (v * (w + eta)) @ v.T
        return out

    def to_dict(self):
        return {"amplitude": self.amplitude, "correlation": self.correlation,
                "seed": self.seed}


class StressSeries:
    """Time-ordered records of (t, imposed F, Cauchy stress in GPa)."""

    def __init__(self, times, deformation_gradients, stresses, metadata=None):
        times = np.asarray(times, dtype=float)
        fs = np.asarray(deformation_gradients, dtype=float)
        sigmas = np.asarray(stresses, dtype=float)
        n = len(times)
        if fs.shape != (n, 3, 3) or sigmas.shape != (n, 3, 3):
            raise DataError(
                f"series shapes inconsistent: {n} times, F {fs.shape}, "
                f"stress {sigmas.shape}")
        if n > 1 and np.any(np.diff(times) <= 0.0):
            raise DataError("series times must be strictly increasing")
        if np.any(np.linalg.det(fs) <= 0.0):
            raise DataError("series contains a record with det F <= 0")
        asym = np.max(np.abs(sigmas - np.swapaxes(sigmas, 1, 2)))
        if asym > 1e-8 * max(1.0, np.max(np.abs(sigmas))):
            raise DataError("Cauchy stress records must be symmetric")
        self.times = times
        self.deformation_gradients = fs
        self.stresses = 0.5 * (sigmas + np.swapaxes(sigmas, 1, 2))
        self.metadata = {str(k): str(v) for k, v in (metadata or {}).items()}

    def __len__(self):
        return len(self.times)


def synthesize_stress(path, truth, noise=None):
    """Drive the ground truth along a path and add spectral-frame noise."""
    times = path.times()
    fs = generate_path(path)
    sigmas = np.stack([truth.cauchy(f) for f in fs])
    meta = {"path": path.name, "kind": path.kind,
            "axes": "".join(_AXIS_NAMES[a] for a in path.axes),
            "rate": repr(path.rate), "duration": repr(path.duration),
            "dt": repr(path.dt), "truth": truth.tag}
    if noise is not None:
        sigmas = noise.perturb(sigmas)
        meta.update({"noise_amplitude": repr(noise.amplitude),
                     "noise_correlation": repr(noise.correlation),
                     "noise_seed": str(noise.seed)})
    return StressSeries(times, fs, sigmas, meta)


# ------------------ series file I/O ------------------

_F_COLUMNS = [f"F{i + 1}{j + 1}" for i in range(3) for j in range(3)]
_S_COLUMNS = [f"S{i + 1}{j + 1}" for (i, j) in kin.VOIGT_PAIRS]
_HEADER = "t," + ",".join(_F_COLUMNS) + "," + ",".join(_S_COLUMNS)


def save_series(series, path):
    """CSV with `# key=value` metadata comments and one row per record."""
    lines = []
    for key in sorted(series.metadata):
        lines.append(f"# {key}={series.metadata[key]}")
    lines.append(_HEADER)
    for t, f, s in zip(series.times, series.deformation_gradients,
                       series.stresses):
        values = ([t] + [f[i, j] for i in range(3) for j in range(3)]
                  + [s[i, j] for (i, j) in kin.VOIGT_PAIRS])
        lines.append(",".join(repr(float(v)) for v in values))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_series(path):
    metadata = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header_seen = False
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    metadata[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line != _HEADER:
                    raise DataError(
                        f"{path}:{line_no}: unexpected series header {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 16:
                raise DataError(
                    f"{path}:{line_no}: expected 16 columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
    if not header_seen or not rows:
        raise DataError(f"{path}: no series records found")
    arr = np.asarray(rows)
    times = arr[:, 0]
    fs = arr[:, 1:10].reshape(-1, 3, 3)
    sigmas = np.stack([kin.voigt6_to_tensor2(v) for v in arr[:, 10:16]])
    return StressSeries(times, fs, sigmas, metadata)


# ------------------ spectral moving-average filter ------------------

_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def _match_eigenpairs(prev, w, v):
    """Reorder and sign-fix eigenpairs (w, v) to follow the basis `prev`.

    Columns are matched by the permutation maximizing the total |dot| with
    the previous basis, signs are chosen to make the matched dots positive,
    and if that leaves an improper basis the most ambiguous column (smallest
    |dot|) is flipped back so the result stays a proper rotation.
    """
    dots = prev.T @ v  # dots[i, k] = prev column i . new column k
    best = max(_PERMS, key=lambda p: sum(abs(dots[i, p[i]]) for i in range(3)))
    w = w[list(best)]
    v = v[:, list(best)]
    matched = np.array([dots[i, best[i]] for i in range(3)])
    signs = np.sign(matched)
    signs[signs == 0.0] = 1.0
    v = v * signs
    if np.linalg.det(v) < 0.0:
        weakest = int(np.argmin(np.abs(matched)))
        v[:, weakest] = -v[:, weakest]
    return w, v


def _tracked_spectral(sigmas):
    """Eigen-decompose a stress series with continuity-tracked bases.

    Returns (eigenvalues[N,3], bases[N,3,3]); bases are proper rotations and
    neighboring records are matched by maximal |dot| with sign fixing, so
    eigenvalue crossings do not swap axes. Tracking is anchored (descending
    eigenvalue order, proper orientation) at the first record with a
    non-degenerate spectrum — a spectrally degenerate start (e.g. an exactly
    stress-free first record) has no preferred eigenbasis, so such records
    are back-filled from the anchor instead of imposing an arbitrary frame.
    """
    n = len(sigmas)
    raw_w = np.empty((n, 3))
    raw_v = np.empty((n, 3, 3))
    for t in range(n):
        raw_w[t], raw_v[t] = np.linalg.eigh(sigmas[t])
    spread = raw_w[:, 2] - raw_w[:, 0]
    scale = np.maximum(np.abs(raw_w).max(axis=1), 1.0)
    distinct = spread > 1e-10 * scale
    anchor = int(np.argmax(distinct)) if distinct.any() else 0

    def step(t, neighbor):
        if distinct[t]:
            lam[t], bases[t] = _match_eigenpairs(bases[neighbor], raw_w[t],
                                                 raw_v[t])
        else:
            # Fully degenerate record: every orthonormal basis diagonalizes
            # it, so keep the neighbor's frame.
            lam[t] = raw_w[t][::-1]
            bases[t] = bases[neighbor]

    lam = np.empty((n, 3))
    bases = np.empty((n, 3, 3))
    order = np.argsort(-raw_w[anchor], kind="stable")
    lam[anchor] = raw_w[anchor][order]
    bases[anchor] = raw_v[anchor][:, order]
    if np.linalg.det(bases[anchor]) < 0.0:
        bases[anchor, :, 2] = -bases[anchor, :, 2]
    for t in range(anchor + 1, n):
        step(t, t - 1)
    for t in range(anchor - 1, -1, -1):
        step(t, t + 1)
    return lam, bases


def _shrunk_window(i, n, half):
    h = min(half, i, n - 1 - i)
    return i - h, i + h + 1


def filter_series(series, window=300):
    """Moving-average filter applied in the spectral frame of the stress.

    Eigenvalues are smoothed by a centered uniform average; the eigenbasis is
    smoothed by averaging the relative rotation vectors within the window and
    applying the mean rotation. Near the ends the window shrinks
    symmetrically. The construction commutes with a global rotation of the
    lab frame.
    """
    window = int(window)
    if window < 1:
        raise WindowError("window must be >= 1")
    n = len(series)
    if n <= window:
        raise WindowError(
            f"series length {n} must exceed the window ({window})")
    half = window // 2
    lam, bases = _tracked_spectral(series.stresses)

    lam_smooth = np.empty_like(lam)
    cums = np.vstack([np.zeros(3), np.cumsum(lam, axis=0)])
    for i in range(n):
        lo, hi = _shrunk_window(i, n, half)
        lam_smooth[i] = (cums[hi] - cums[lo]) / (hi - lo)

    bases_smooth = np.empty_like(bases)
    for i in range(n):
        lo, hi = _shrunk_window(i, n, half)
        if hi - lo == 1:
            bases_smooth[i] = bases[i]
            continue
        rel = np.einsum("ji,sjk->sik", bases[i], bases[lo:hi])
        mean_vec = _ScipyRotation.from_matrix(rel).as_rotvec().mean(axis=0)
        bases_smooth[i] = bases[i] @ kin.rotation_exp(mean_vec)

    smoothed = np.einsum("sij,sj,skj->sik", bases_smooth, lam_smooth, bases_smooth)
    meta = dict(series.metadata)
    meta["filter_window"] = str(window)
    return StressSeries(series.times, series.deformation_gradients, smoothed, meta)


def euler_angle_track(sigmas):
    """Z-Y-Z Euler angles of the continuity-tracked eigenbasis, per record."""
    _, bases = _tracked_spectral(sigmas)
    with warnings.catch_warnings():
        # A basis aligned with the lab axes sits at the polar singularity of
        # the Z-Y-Z chart; the convention there (third angle zero) is fine.
        warnings.simplefilter("ignore", UserWarning)
        return np.stack([kin.euler_zyz(b) for b in bases])


# ------------------ dataset assembly ------------------

_DATASET_FORMAT = "elastinet-dataset"
_DATASET_VERSION = 1


class Dataset:
    """Normalized training pairs plus the split and the tagged reference.

    inputs/targets are stored on the normalized scale; the normalizer (fit on
    the training split) recovers physical units. The stress-free reference
    record is kept outside the split so the loss can pin it every batch.
    """

    def __init__(self, variant, inputs, targets, train_indices, val_indices,
                 normalizer, reference_input, reference_target, metadata=None):
        if variant not in ("SE", "PF"):
            raise DatasetError(f"unknown dataset variant {variant!r}")
        self.variant = variant
        self.inputs = np.asarray(inputs, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.train_indices = np.asarray(train_indices, dtype=np.int64)
        self.val_indices = np.asarray(val_indices, dtype=np.int64)
        self.normalizer = normalizer
        self.reference_input = np.asarray(reference_input, dtype=float)
        self.reference_target = np.asarray(reference_target, dtype=float)
        self.metadata = dict(metadata or {})
        n = len(self.inputs)
        joined = np.sort(np.concatenate([self.train_indices, self.val_indices]))
        if len(joined) != n or np.any(joined != np.arange(n)):
            raise DatasetError("train/validation split must be disjoint and exhaustive")

    def __len__(self):
        return len(self.inputs)

    def physical_targets(self, indices=None):
        """Targets in physical units: dP/dF slots (PF) or the strain-feature
        conjugate (SE, shear slots doubled relative to the stress tensor)."""
        s = self.targets if indices is None else self.targets[indices]
        return s * self.normalizer.s_range + self.normalizer.s_min


# Work-conjugate packing for the six plain strain features: the off-diagonal
# strain pair moves together, so the energy gradient per shear feature carries
# both tensor slots (2 S_ij), while each diagonal slot appears once.
_SE_CONJUGATE = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


def _stress_features(f, sigma, variant):
    s = kin.pull_back_stress(sigma, f)
    if variant == "SE":
        return _SE_CONJUGATE * kin.tensor2_to_voigt6(s)
    return (f @ s).reshape(9)


def build_dataset(series_list, variant, split=0.7, seed=0, metadata=None):
    """Assemble a normalized dataset from filtered stress series.

    Inputs are Green-strain components (SE) or deformation-gradient
    components (PF); targets are the corresponding work-conjugate stress
    components recovered from the Cauchy stress by the inverse push-forward.
    For SE the shear target slots carry twice the stress-tensor component, so
    the target vector is exactly the energy gradient with respect to the six
    strain features; for PF all nine slots are independent and the targets
    are the first Piola-Kirchhoff components directly.
    """
    if variant not in ("SE", "PF"):
        raise DatasetError(f"unknown dataset variant {variant!r}")
    if not series_list:
        raise DatasetError("at least one stress series is required")
    if not 0.0 < split < 1.0:
        raise DatasetError(f"split fraction must be in (0, 1), got {split}")
    feats = []
    targs = []
    for series in series_list:
        for f, sigma in zip(series.deformation_gradients, series.stresses):
            if variant == "SE":
                x = kin.tensor2_to_voigt6(kin.green_strain(f))
            else:
                x = f.reshape(9)
            feats.append(x)
            targs.append(_stress_features(f, sigma, variant))
    feats = np.asarray(feats)
    targs = np.asarray(targs)
    n = len(feats)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(np.floor(split * n))
    if n_train < 1 or n_train >= n:
        raise DatasetError(f"split {split} leaves an empty partition for {n} points")
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train:])
    normalizer = Normalizer.from_arrays(feats[train_idx], targs[train_idx])
    ref_f = np.eye(3)
    ref_input = (np.zeros(6) if variant == "SE" else ref_f.reshape(9))
    meta = {"variant": variant, "split": repr(float(split)), "seed": str(seed),
            "series_count": str(len(series_list)), "points": str(n)}
    meta.update({str(k): str(v) for k, v in (metadata or {}).items()})
    return Dataset(variant,
                   normalizer.normalize_x(feats),
                   normalizer.normalize_s(targs),
                   train_idx, val_idx, normalizer,
                   normalizer.normalize_x(ref_input[None])[0],
                   normalizer.normalize_s(np.zeros(len(ref_input))[None])[0],
                   meta)


def save_dataset(dataset, path):
    import base64
    import json

    def enc(a, dtype="<f8"):
        a = np.ascontiguousarray(a, dtype=dtype)
        return {"shape": list(a.shape), "dtype": dtype,
                "data": base64.b64encode(a.tobytes()).decode("ascii")}

    doc = {"format": _DATASET_FORMAT, "version": _DATASET_VERSION,
           "variant": dataset.variant,
           "normalizer": dataset.normalizer.to_dict(),
           "inputs": enc(dataset.inputs), "targets": enc(dataset.targets),
           "train_indices": enc(dataset.train_indices, "<i8"),
           "val_indices": enc(dataset.val_indices, "<i8"),
           "reference_input": enc(dataset.reference_input),
           "reference_target": enc(dataset.reference_target),
           "metadata": dataset.metadata}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_dataset(path):
    import base64
    import json

    def dec(d):
        raw = base64.b64decode(d["data"])
        a = np.frombuffer(raw, dtype=d.get("dtype", "<f8")).copy()
        return a.reshape([int(s) for s in d["shape"]])

    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except Exception as exc:
            raise DatasetError(f"{path}: not a valid dataset file: {exc}") from exc
    if doc.get("format") != _DATASET_FORMAT:
        raise DatasetError(f"{path}: missing dataset format tag")
    if doc.get("version") != _DATASET_VERSION:
        raise DatasetError(
            f"{path}: unsupported dataset version {doc.get('version')!r}")
    return Dataset(doc["variant"], dec(doc["inputs"]), dec(doc["targets"]),
                   dec(doc["train_indices"]), dec(doc["val_indices"]),
                   Normalizer.from_dict(doc["normalizer"]),
                   dec(doc["reference_input"]), dec(doc["reference_target"]),
                   doc.get("metadata", {}))
