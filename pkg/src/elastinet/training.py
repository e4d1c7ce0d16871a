"""Stress-matching training: Sobolev loss, physics penalties, and drivers.

All loss arithmetic happens on the normalized scale: network inputs are
min-max normalized features, stress residuals are physical differences
divided by the per-feature target range, and tangent residuals carry the
matching range ratio, so every term is O(1) and vanishes exactly when the
underlying physical identity holds. The base loss pins the stress-free
reference record (zero energy, zero stress) in every evaluation; the two
penalties enforce frame indifference (left rotations of the deformation
gradient) and material symmetry (right rotations by the half-turn about
the deformed unique cell axis).

Summation order inside batches and epochs is fixed, so a run is fully
reproducible from its seed.
"""

import csv

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from . import kinematics as kin
from .errors import ConfigError, DegenerateAxisError, TrainingDivergedError
from .network import ModelBundle, Normalizer

CONSTRAINTS = ("frame-invariance", "symmetry")
METRIC_ROTATIONS = 4
METRIC_ROWS = 128

_VOIGT_MULT = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


class LossWeights:
    """Nonnegative weights for the stress, first-stress, energy, and tangent terms."""

    def __init__(self, w_S=1.0, w_P=1.0, w_psi=1.0, w_C=1.0):
        for name, value in (("w_S", w_S), ("w_P", w_P),
                            ("w_psi", w_psi), ("w_C", w_C)):
            if not np.isfinite(value) or value < 0.0:
                raise ConfigError(f"loss weight {name} must be >= 0, got {value}")
        self.w_S = float(w_S)
        self.w_P = float(w_P)
        self.w_psi = float(w_psi)
        self.w_C = float(w_C)

    def to_dict(self):
        return {"w_S": self.w_S, "w_P": self.w_P,
                "w_psi": self.w_psi, "w_C": self.w_C}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class TrainConfig:
    """Optimization settings for a training run."""

    def __init__(self, epochs, batch=512, learning_rate=0.002, beta1=0.9,
                 beta2=0.999, epsilon=1e-7, seed=0, rotations=4,
                 square_energy=False):
        if epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {epochs}")
        if batch < 1:
            raise ConfigError(f"batch size must be >= 1, got {batch}")
        if rotations < 0:
            raise ConfigError(f"rotation count must be >= 0, got {rotations}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ConfigError("momentum decay rates must lie in [0, 1)")
        if learning_rate <= 0.0 or epsilon <= 0.0:
            raise ConfigError("learning rate and epsilon must be positive")
        self.epochs = int(epochs)
        self.batch = int(batch)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.seed = int(seed)
        self.rotations = int(rotations)
        self.square_energy = bool(square_energy)

    def to_dict(self):
        return {"epochs": self.epochs, "batch": self.batch,
                "learning_rate": self.learning_rate, "beta1": self.beta1,
                "beta2": self.beta2, "epsilon": self.epsilon,
                "seed": self.seed, "rotations": self.rotations,
                "square_energy": self.square_energy}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class LossTrace:
    """Per-epoch loss components and constraint metrics."""

    COLUMNS = ("epoch", "total", "stress", "ref_energy", "ref_stress",
               "inv_energy", "inv_stress", "sym_energy", "sym_stress",
               "val_stress", "val_inv_energy", "val_inv_stress",
               "val_sym_energy", "val_sym_stress")

    def __init__(self):
        self.rows = []

    def append(self, row):
        missing = [c for c in self.COLUMNS if c not in row]
        if missing:
            raise ConfigError(f"loss-trace row is missing columns: {missing}")
        values = [row[c] for c in self.COLUMNS]
        if not np.all(np.isfinite(values)):
            raise TrainingDivergedError(
                "loss trace received a non-finite entry", trace=self)
        self.rows.append({c: float(row[c]) for c in self.COLUMNS})

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows:
                writer.writerow([repr(row[c]) if c != "epoch" else int(row[c])
                                 for c in self.COLUMNS])


def _require_variant(model, variant):
    if model.variant != variant:
        raise ConfigError(
            f"loss requires the {variant} conjugate pair, model is {model.variant}")


# ------------------ base Sobolev loss ------------------

def sobolev_terms(model, inputs, targets, reference_input, reference_target,
                  weights=None, want_grads=False):
    """Stress-matching loss with the pinned reference record.

    inputs/targets and the reference pair live on the normalized scale. The
    loss is psi_hat(ref)^2 + w_S ||r_ref||^2 + (w_S / N) sum_i ||r_i||^2 with
    r the normalized stress residual (physical difference over target
    range). Returns (loss, parts, parameter gradients or None).
    """
    weights = weights if weights is not None else LossWeights()
    norm = model.normalizer
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if inputs.shape != targets.shape:
        raise ConfigError(
            f"batch inputs {inputs.shape} and targets {targets.shape} disagree")
    n = len(inputs)
    alpha = norm.energy_scale / (norm.x_range * norm.s_range)
    beta = norm.s_min / norm.s_range

    stacked_x = np.vstack([np.asarray(reference_input, float)[None, :], inputs])
    stacked_t = np.vstack([np.asarray(reference_target, float)[None, :], targets])
    psi, g, _, cache = model.net.forward(stacked_x, order=1,
                                         want_cache=want_grads)
    resid = alpha * g - beta - stacked_t
    ref_energy = float(psi[0] ** 2)
    ref_stress = float(weights.w_S * resid[0] @ resid[0])
    stress = float(weights.w_S / n * np.sum(resid[1:] ** 2)) if n else 0.0
    loss = ref_energy + ref_stress + stress
    parts = {"stress": stress, "ref_energy": ref_energy,
             "ref_stress": ref_stress}
    grads = None
    if want_grads:
        abar = np.zeros(n + 1)
        abar[0] = 2.0 * psi[0]
        gbar = np.empty_like(resid)
        gbar[0] = 2.0 * weights.w_S * resid[0] * alpha
        if n:
            gbar[1:] = (2.0 * weights.w_S / n) * resid[1:] * alpha
        grads = model.net.backward(cache, abar, gbar)
    return loss, parts, grads


def loss_sobolev_SE(model, inputs, targets, reference_input, reference_target,
                    weights=None):
    """Scalar Sobolev loss for the second Piola-Kirchhoff / Green-strain pair."""
    _require_variant(model, "SE")
    return sobolev_terms(model, inputs, targets, reference_input,
                         reference_target, weights)[0]


def loss_sobolev_PF(model, inputs, targets, reference_input, reference_target,
                    weights=None):
    """Scalar Sobolev loss for the first Piola-Kirchhoff / deformation-gradient pair."""
    _require_variant(model, "PF")
    return sobolev_terms(model, inputs, targets, reference_input,
                         reference_target, weights)[0]


# ------------------ physics penalties ------------------

def _energy_residual(delta, scale, square_energy):
    if square_energy:
        return scale * np.sum(delta ** 2), 2.0 * scale * delta
    return scale * np.sum(np.abs(delta)), scale * np.sign(delta)


def _pf_fields(model, fs, order, want_cache):
    norm = model.normalizer
    feats = fs.reshape(len(fs), 9)
    psi, g, h, cache = model.net.forward(norm.normalize_x(feats), order=order,
                                         want_cache=want_cache)
    p = (norm.energy_scale * g / norm.x_range).reshape(len(fs), 3, 3)
    a = None
    if order >= 2:
        scale = norm.energy_scale / np.outer(norm.x_range, norm.x_range)
        a = (h * scale).reshape(len(fs), 3, 3, 3, 3)
    return psi, p, a, cache


def frame_invariance_terms(model, fs, rotations, weights=None,
                           square_energy=False, want_grads=False):
    """Objectivity penalty: energy, stress, and tangent legs under left rotations.

    Averages over the supplied rotations Q the per-sample residuals of
    psi(QF) = psi(F), P(QF) = Q P(F), and A(QF) = A(F) with both spatial
    legs rotated. Residuals are normalized per feature by the target
    ranges. Returns (loss, parts, parameter gradients or None).
    """
    _require_variant(model, "PF")
    weights = weights if weights is not None else LossWeights()
    rotations = np.asarray(rotations, dtype=float)
    if rotations.ndim == 2:
        rotations = rotations[None]
    m = len(rotations)
    if m == 0:
        raise ConfigError("frame-invariance penalty needs at least one rotation")
    fs = np.asarray(fs, dtype=float).reshape(-1, 3, 3)
    n = len(fs)
    if n == 0:
        raise ConfigError("frame-invariance penalty needs a non-empty batch")
    norm = model.normalizer
    order = 2 if weights.w_C > 0.0 else 1
    sr3 = norm.s_range.reshape(3, 3)
    xr3 = norm.x_range.reshape(3, 3)
    grad_scale = norm.energy_scale / norm.x_range
    hess_scale = norm.energy_scale / np.outer(norm.x_range, norm.x_range)
    tan_scale = xr3[None, None, :, :] / sr3[:, :, None, None]

    psi_b, p_b, a_b, cache_b = _pf_fields(model, fs, order, want_grads)
    energy = stress = tangent = 0.0
    grads = None
    if want_grads:
        grads = [np.zeros(shape) for _, shape in model.net.param_shapes]
        abar_b = np.zeros(n)
        gbar_b = np.zeros((n, 9))
        hbar_b = np.zeros((n, 9, 9)) if order >= 2 else None

    for q in rotations:
        fq = np.einsum("ij,sjk->sik", q, fs)
        psi_a, p_a, a_a, cache_a = _pf_fields(model, fq, order, want_grads)
        e_term, e_seed = _energy_residual(psi_a - psi_b,
                                          weights.w_psi / (m * n), square_energy)
        energy += e_term
        rs = (p_a - np.einsum("ij,sjk->sik", q, p_b)) / sr3
        stress += weights.w_P / (m * n) * np.sum(rs * rs)
        if order >= 2:
            rot_a = np.einsum("im,kn,smJnL->siJkL", q, q, a_b)
            rc = (a_a - rot_a) * tan_scale
            tangent += weights.w_C / (m * n) * np.sum(rc * rc)
        if want_grads:
            dp_a = (2.0 * weights.w_P / (m * n)) * rs / sr3
            gbar_a = dp_a.reshape(n, 9) * grad_scale
            hbar_a = None
            if order >= 2:
                w4 = (2.0 * weights.w_C / (m * n)) * rc * tan_scale
                hbar_a = w4.reshape(n, 9, 9) * hess_scale
                hbar_b -= np.einsum("im,kn,siJkL->smJnL", q, q,
                                    w4).reshape(n, 9, 9) * hess_scale
            for gi, ga in zip(grads, model.net.backward(cache_a, e_seed,
                                                        gbar_a, hbar_a)):
                gi += ga
            abar_b -= e_seed
            gbar_b -= np.einsum("ji,sjk->sik", q, dp_a).reshape(n, 9) * grad_scale
    if want_grads:
        for gi, gb in zip(grads, model.net.backward(cache_b, abar_b,
                                                    gbar_b, hbar_b)):
            gi += gb
    parts = {"energy": float(energy), "stress": float(stress),
             "tangent": float(tangent)}
    return energy + stress + tangent, parts, grads


def loss_frame_invariance(model, fs, rotations, weights=None,
                          square_energy=False):
    """Scalar objectivity penalty averaged over the supplied rotations."""
    return frame_invariance_terms(model, fs, rotations, weights,
                                  square_energy)[0]


def symmetry_terms(model, fs, rotations, weights=None, square_energy=False,
                   want_grads=False):
    """Material-symmetry penalty under right rotations of F.

    rotations is a list of rotation sets; each entry is one 3x3 rotation
    shared by the batch or an [N,3,3] per-sample array. The residuals of
    psi(FQ) = psi(F), P(FQ) = P(F) Q, and A(FQ) = A(F) with both
    referential legs rotated are summed over the list (no averaging) and
    normalized per feature. Returns (loss, parts, gradients or None).
    """
    _require_variant(model, "PF")
    weights = weights if weights is not None else LossWeights()
    if len(rotations) == 0:
        raise ConfigError("symmetry penalty needs at least one rotation set")
    fs = np.asarray(fs, dtype=float).reshape(-1, 3, 3)
    n = len(fs)
    if n == 0:
        raise ConfigError("symmetry penalty needs a non-empty batch")
    norm = model.normalizer
    order = 2 if weights.w_C > 0.0 else 1
    sr3 = norm.s_range.reshape(3, 3)
    xr3 = norm.x_range.reshape(3, 3)
    grad_scale = norm.energy_scale / norm.x_range
    hess_scale = norm.energy_scale / np.outer(norm.x_range, norm.x_range)
    tan_scale = xr3[None, None, :, :] / sr3[:, :, None, None]

    psi_b, p_b, a_b, cache_b = _pf_fields(model, fs, order, want_grads)
    energy = stress = tangent = 0.0
    grads = None
    if want_grads:
        grads = [np.zeros(shape) for _, shape in model.net.param_shapes]
        abar_b = np.zeros(n)
        gbar_b = np.zeros((n, 9))
        hbar_b = np.zeros((n, 9, 9)) if order >= 2 else None

    for q in rotations:
        qs = np.asarray(q, dtype=float)
        if qs.ndim == 2:
            qs = np.broadcast_to(qs, (n, 3, 3))
        fq = np.einsum("sij,sjk->sik", fs, qs)
        psi_a, p_a, a_a, cache_a = _pf_fields(model, fq, order, want_grads)
        e_term, e_seed = _energy_residual(psi_a - psi_b, weights.w_psi / n,
                                          square_energy)
        energy += e_term
        rs = (p_a - np.einsum("sij,sjk->sik", p_b, qs)) / sr3
        stress += weights.w_P / n * np.sum(rs * rs)
        if order >= 2:
            rot_a = np.einsum("siMkN,sMJ,sNL->siJkL", a_b, qs, qs)
            rc = (a_a - rot_a) * tan_scale
            tangent += weights.w_C / n * np.sum(rc * rc)
        if want_grads:
            dp_a = (2.0 * weights.w_P / n) * rs / sr3
            gbar_a = dp_a.reshape(n, 9) * grad_scale
            hbar_a = None
            if order >= 2:
                w4 = (2.0 * weights.w_C / n) * rc * tan_scale
                hbar_a = w4.reshape(n, 9, 9) * hess_scale
                hbar_b -= np.einsum("siJkL,sMJ,sNL->siMkN", w4, qs,
                                    qs).reshape(n, 9, 9) * hess_scale
            for gi, ga in zip(grads, model.net.backward(cache_a, e_seed,
                                                        gbar_a, hbar_a)):
                gi += ga
            abar_b -= e_seed
            gbar_b -= np.einsum("sij,skj->sik", dp_a, qs).reshape(n, 9) * grad_scale
    if want_grads:
        for gi, gb in zip(grads, model.net.backward(cache_b, abar_b,
                                                    gbar_b, hbar_b)):
            gi += gb
    parts = {"energy": float(energy), "stress": float(stress),
             "tangent": float(tangent)}
    return energy + stress + tangent, parts, grads


def loss_symmetry(model, fs, rotations, weights=None, square_energy=False):
    """Scalar material-symmetry penalty summed over the rotation sets."""
    return symmetry_terms(model, fs, rotations, weights, square_energy)[0]


def symmetry_rotations_for(fs, m2=None):
    """Per-sample half-turn about each deformed unique axis F . M2."""
    fs = np.asarray(fs, dtype=float).reshape(-1, 3, 3)
    if m2 is None:
        m2 = kin.DEFAULT_BASIS.covariant(1)
    axes = fs @ np.asarray(m2, dtype=float)
    norms = np.linalg.norm(axes, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateAxisError("deformed symmetry axis has zero length")
    return _ScipyRotation.from_rotvec(np.pi * axes / norms[:, None]).as_matrix()


def constraint_metrics(model, fs, rotations, square_energy=False):
    """Unweighted objectivity and symmetry metrics on a batch of F records.

    The energy metrics are mean absolute energy mismatches; the stress
    metrics are mean squared normalized stress residuals. Tangent legs are
    excluded (metric weights are 1, 1, 0).
    """
    metric_weights = LossWeights(w_S=0.0, w_P=1.0, w_psi=1.0, w_C=0.0)
    _, inv, _ = frame_invariance_terms(model, fs, rotations, metric_weights,
                                       square_energy)
    qs = symmetry_rotations_for(fs)
    _, sym, _ = symmetry_terms(model, fs, [qs], metric_weights, square_energy)
    return {"inv_energy": inv["energy"], "inv_stress": inv["stress"],
            "sym_energy": sym["energy"], "sym_stress": sym["stress"]}


# ------------------ analytic reference models ------------------

class _AnalyticQuadraticNet:
    """Drop-in network computing the quadratic-in-strain energy analytically.

    Mimics the EnergyNet forward contract (identity normalization semantics)
    so the loss machinery and the validation suite can run against an exact
    reference energy. It has no trainable parameters.
    """

    def __init__(self, stiffness, variant):
        self.stiffness = np.asarray(stiffness, dtype=float)
        if self.stiffness.shape != (6, 6):
            raise ConfigError("analytic model needs a 6x6 stiffness")
        self.variant = variant
        self.input_width = 6 if variant == "SE" else 9
        self.c4 = kin.voigt6_to_tensor4(self.stiffness)
        # Quadratic form on the six raw strain features (shears counted once).
        self.qform = (self.stiffness * np.outer(_VOIGT_MULT, _VOIGT_MULT))

    def forward(self, xbar, order=0, want_cache=False):
        x = np.asarray(xbar, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        b = len(x)
        if self.variant == "SE":
            sx = x @ self.qform
            psi = 0.5 * np.einsum("sa,sa->s", x, sx)
            grad = sx if order >= 1 else None
            hess = (np.broadcast_to(self.qform, (b, 6, 6)).copy()
                    if order >= 2 else None)
        else:
            f = x.reshape(b, 3, 3)
            e = 0.5 * (np.einsum("sji,sjk->sik", f, f)
                       - np.eye(3)[None, :, :])
            s = np.einsum("IJKL,sKL->sIJ", self.c4, e)
            psi = 0.5 * np.einsum("sij,sij->s", s, e)
            grad = np.einsum("siI,sIJ->siJ", f, s).reshape(b, 9) \
                if order >= 1 else None
            hess = None
            if order >= 2:
                a = np.einsum("siI,skK,IJKL->siJkL", f, f, self.c4)
                a += np.einsum("sJL,ik->siJkL", s, np.eye(3))
                hess = a.reshape(b, 9, 9)
        if single:
            psi = psi[0]
            grad = None if grad is None else grad[0]
            hess = None if hess is None else hess[0]
        return psi, grad, hess, None

    def backward(self, cache, psi_bar, grad_bar=None, hess_bar=None):
        raise ConfigError("the analytic reference model has no parameters")


def analytic_model(stiffness, variant):
    """Exact quadratic-energy model wrapped in the standard bundle interface."""
    net = _AnalyticQuadraticNet(stiffness, variant)
    return ModelBundle(net, Normalizer.identity(net.input_width), variant,
                       {"analytic": True})


# ------------------ optimizer ------------------

class Nadam:
    """Adaptive-moment optimizer with Nesterov lookahead."""

    def __init__(self, shapes, config):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.lr = config.learning_rate
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.epsilon

    def step(self, params, grads):
        self.t += 1
        t, b1, b2 = self.t, self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** (t + 1))
            v_hat = v / (1.0 - b2 ** t)
            g_hat = g / (1.0 - b1 ** t)
            p -= self.lr * (b1 * m_hat + (1.0 - b1) * g_hat) \
                / (np.sqrt(v_hat) + self.eps)


# ------------------ training drivers ------------------

def _check_dataset(model, dataset):
    if dataset.variant != model.variant:
        raise ConfigError(
            f"dataset variant {dataset.variant} does not match model "
            f"variant {model.variant}")
    a, b = model.normalizer, dataset.normalizer
    same = (np.array_equal(a.x_min, b.x_min) and np.array_equal(a.x_max, b.x_max)
            and np.array_equal(a.s_min, b.s_min)
            and np.array_equal(a.s_max, b.s_max))
    if not same:
        raise ConfigError("model normalizer does not match the dataset")


def _metric_sample(rng, indices, cap=METRIC_ROWS):
    if len(indices) == 0:
        return np.empty(0, dtype=int)
    take = min(cap, len(indices))
    return indices[rng.choice(len(indices), size=take, replace=False)]


def train(model, dataset, config, weights=None, constraint=None):
    """Minibatch optimization of the Sobolev loss, optionally with a penalty.

    Returns (trained model, trace). The input model is left untouched; the
    returned bundle carries updated parameters and metadata. Every epoch
    logs the loss parts plus objectivity/symmetry metrics (deformation-
    gradient models only) on fixed seed-derived subsamples with fixed
    metric rotations, whether or not a penalty is active.
    """
    weights = weights if weights is not None else LossWeights()
    _check_dataset(model, dataset)
    if constraint is not None:
        if constraint not in CONSTRAINTS:
            raise ConfigError(f"unknown constraint {constraint!r}; "
                              f"choose from {CONSTRAINTS}")
        if model.variant != "PF":
            raise ConfigError(
                "physics penalties apply to the deformation-gradient variant only")
        if constraint == "frame-invariance" and config.rotations < 1:
            raise ConfigError(
                "frame-invariance penalty needs at least one rotation per epoch")

    net = model.net.clone()
    working = ModelBundle(net, model.normalizer, model.variant,
                          dict(model.metadata))
    x_tr = dataset.inputs[dataset.train_indices]
    t_tr = dataset.targets[dataset.train_indices]
    x_val = dataset.inputs[dataset.val_indices]
    t_val = dataset.targets[dataset.val_indices]
    ref_x = dataset.reference_input
    ref_t = dataset.reference_target
    n_tr = len(x_tr)
    if n_tr == 0:
        raise ConfigError("dataset has an empty training split")

    shuffle_rng = np.random.default_rng([config.seed, 0])
    rot_rng = np.random.default_rng([config.seed, 1])
    metric_rng = np.random.default_rng([config.seed, 2])
    metric_rots = kin.random_rotations(metric_rng, METRIC_ROTATIONS)
    pf = model.variant == "PF"
    f_metric_tr = f_metric_val = None
    if pf:
        idx_tr = _metric_sample(metric_rng, np.arange(n_tr))
        idx_val = _metric_sample(metric_rng, np.arange(len(x_val)))
        denorm = model.normalizer.denormalize_x
        f_metric_tr = denorm(x_tr[idx_tr]).reshape(-1, 3, 3)
        f_metric_val = denorm(x_val[idx_val]).reshape(-1, 3, 3) \
            if len(idx_val) else None

    trace = LossTrace()
    optimizer = Nadam([s for _, s in net.param_shapes], config)
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n_tr)
        rots = None
        if constraint == "frame-invariance":
            rots = kin.random_rotations(rot_rng, config.rotations)
        sums = {"total": 0.0, "stress": 0.0, "ref_energy": 0.0,
                "ref_stress": 0.0}
        for start in range(0, n_tr, config.batch):
            idx = perm[start:start + config.batch]
            loss, parts, grads = sobolev_terms(
                working, x_tr[idx], t_tr[idx], ref_x, ref_t, weights,
                want_grads=True)
            if constraint is not None:
                fs = model.normalizer.denormalize_x(x_tr[idx]).reshape(-1, 3, 3)
                if constraint == "frame-invariance":
                    closs, _, cgrads = frame_invariance_terms(
                        working, fs, rots, weights, config.square_energy,
                        want_grads=True)
                else:
                    qs = symmetry_rotations_for(fs)
                    closs, _, cgrads = symmetry_terms(
                        working, fs, [qs], weights, config.square_energy,
                        want_grads=True)
                loss += closs
                for gi, cg in zip(grads, cgrads):
                    gi += cg
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became non-finite in epoch {epoch}", trace=trace)
            optimizer.step(net.params, grads)
            frac = len(idx) / n_tr
            sums["total"] += loss * frac
            for key in ("stress", "ref_energy", "ref_stress"):
                sums[key] += parts[key] * frac

        row = {"epoch": epoch, **sums,
               "inv_energy": 0.0, "inv_stress": 0.0,
               "sym_energy": 0.0, "sym_stress": 0.0,
               "val_stress": 0.0, "val_inv_energy": 0.0,
               "val_inv_stress": 0.0, "val_sym_energy": 0.0,
               "val_sym_stress": 0.0}
        if len(x_val):
            _, vparts, _ = sobolev_terms(working, x_val, t_val, ref_x, ref_t,
                                         weights)
            row["val_stress"] = vparts["stress"]
        if pf:
            met = constraint_metrics(working, f_metric_tr, metric_rots,
                                     config.square_energy)
            row.update(met)
            if f_metric_val is not None:
                met = constraint_metrics(working, f_metric_val, metric_rots,
                                         config.square_energy)
                row.update({f"val_{k}": v for k, v in met.items()})
        trace.append(row)

    meta = dict(model.metadata)
    meta["trained_epochs"] = int(meta.get("trained_epochs", 0)) + config.epochs
    meta["last_training"] = {"epochs": config.epochs, "seed": config.seed,
                             "constraint": constraint or "none",
                             "weights": weights.to_dict()}
    return ModelBundle(net, model.normalizer, model.variant, meta), trace


def transfer_train(model, dataset, config, extra, weights=None):
    """Continue training a model with an added physics penalty.

    extra selects the penalty ('frame-invariance' or 'symmetry'); the base
    stress-matching loss stays active, and both constraint metric families
    are logged every epoch regardless of the selection.
    """
    if extra not in CONSTRAINTS:
        raise ConfigError(
            f"transfer penalty must be one of {CONSTRAINTS}, got {extra!r}")
    return train(model, dataset, config, weights, constraint=extra)
