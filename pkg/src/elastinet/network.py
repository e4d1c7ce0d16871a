"""Feed-forward stored-energy model with exact derivative propagation.

The scalar-output network is a fixed stack

    dense(width) -> activation -> multiply -> multiply
                 -> dense(width) -> activation -> dense(1, linear)

evaluated on min-max normalized inputs. First and second derivatives with
respect to the inputs are propagated exactly through every layer (Taylor
mode), and reverse-mode adjoints give parameter gradients of losses that
involve the value, the input gradient, and the input Hessian. No numerical
differentiation happens anywhere in this module.
"""

import base64
import json

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ModelFormatError

WIDTH = 100
ACTIVATION_FAMILIES = ("softplus", "rectifier")
MULTIPLY_KINDS = ("square", "branch")
MODEL_FORMAT = "elastinet-model"
MODEL_VERSION = 1

# Voigt component order shared with kinematics (11, 22, 33, 12, 23, 13).
_VOIGT = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2))


def _glorot(rng, fan_out, fan_in):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


class ActivationFamily:
    """Scalar activation with derivatives up to third order."""

    def __init__(self, family="softplus", sharpness=10.0):
        if family not in ACTIVATION_FAMILIES:
            raise ConfigError(f"unknown activation family {family!r}")
        if sharpness <= 0.0:
            raise ConfigError("activation sharpness must be positive")
        self.family = family
        self.sharpness = float(sharpness)

    def derivatives(self, z, order):
        """List [phi(z), phi'(z), ...] up to the requested order."""
        if self.family == "softplus":
            k = self.sharpness
            out = [np.logaddexp(0.0, k * z) / k]
            if order >= 1:
                s = expit(k * z)
                out.append(s)
            if order >= 2:
                out.append(k * s * (1.0 - s))
            if order >= 3:
                out.append(k * k * s * (1.0 - s) * (1.0 - 2.0 * s))
        else:
            pos = (z > 0.0).astype(float)
            out = [z * pos]
            if order >= 1:
                out.append(pos)
            for _ in range(2, order + 1):
                out.append(np.zeros_like(z))
        return out


def _mat_tensor(w, t):
    """Contract w[q,p] with t[B,p,...] over the unit axis."""
    b = t.shape[0]
    flat = t.reshape(b, t.shape[1], -1)
    out = np.matmul(w, flat)
    return out.reshape((b, w.shape[0]) + t.shape[2:])


def _pair_sym(x, y):
    """Symmetric outer product over the trailing axis: x_m y_n + y_m x_n."""
    return x[..., :, None] * y[..., None, :] + y[..., :, None] * x[..., None, :]


def _sym_apply(hbar, g):
    """(hbar + hbar^T_mn) applied to g over the last axis."""
    return (np.einsum("bpmn,bpn->bpm", hbar, g)
            + np.einsum("bpnm,bpn->bpm", hbar, g))


class _Affine:
    def __init__(self, iw, ib):
        self.iw = iw
        self.ib = ib

    def forward(self, params, a, g, h, order, cache):
        w = params[self.iw]
        a2 = a @ w.T + params[self.ib]
        g2 = _mat_tensor(w, g) if order >= 1 else None
        h2 = _mat_tensor(w, h) if order >= 2 else None
        if cache is not None:
            cache.append((a, g, h))
        return a2, g2, h2

    def backward(self, params, entry, abar, gbar, hbar, grads):
        a, g, h = entry
        w = params[self.iw]
        gw = abar.T @ a
        grads[self.ib] += abar.sum(axis=0)
        abar_in = abar @ w
        gbar_in = None
        hbar_in = None
        if gbar is not None:
            gw += np.einsum("bqn,bpn->qp", gbar, g)
            gbar_in = _mat_tensor(w.T, gbar)
        if hbar is not None:
            b = h.shape[0]
            gw += np.einsum("bqm,bpm->qp", hbar.reshape(b, hbar.shape[1], -1),
                            h.reshape(b, h.shape[1], -1))
            hbar_in = _mat_tensor(w.T, hbar)
        grads[self.iw] += gw
        return abar_in, gbar_in, hbar_in


class _Activation:
    def __init__(self, phi):
        self.phi = phi

    def forward(self, params, a, g, h, order, cache):
        want = order + 1 if cache is not None else order
        d = self.phi.derivatives(a, max(want, order))
        a2 = d[0]
        g2 = d[1][:, :, None] * g if order >= 1 else None
        h2 = None
        if order >= 2:
            h2 = d[1][:, :, None, None] * h + d[2][:, :, None, None] * _pair_sym(g, g) * 0.5
        if cache is not None:
            cache.append((a, g, h, d))
        return a2, g2, h2

    def backward(self, params, entry, abar, gbar, hbar, grads):
        a, g, h, d = entry
        abar_in = d[1] * abar
        gbar_in = None
        hbar_in = None
        if gbar is not None:
            abar_in += d[2] * np.einsum("bpn,bpn->bp", gbar, g)
            gbar_in = d[1][:, :, None] * gbar
        if hbar is not None:
            abar_in += d[2] * np.einsum("bpmn,bpmn->bp", hbar, h)
            abar_in += d[3] * np.einsum("bpmn,bpm,bpn->bp", hbar, g, g)
            gbar_in = gbar_in + d[2][:, :, None] * _sym_apply(hbar, g)
            hbar_in = d[1][:, :, None, None] * hbar
        return abar_in, gbar_in, hbar_in


class _SelfSquare:
    def forward(self, params, a, g, h, order, cache):
        a2 = a * a
        g2 = 2.0 * a[:, :, None] * g if order >= 1 else None
        h2 = None
        if order >= 2:
            h2 = 2.0 * a[:, :, None, None] * h + _pair_sym(g, g)
        if cache is not None:
            cache.append((a, g, h))
        return a2, g2, h2

    def backward(self, params, entry, abar, gbar, hbar, grads):
        a, g, h = entry
        abar_in = 2.0 * a * abar
        gbar_in = None
        hbar_in = None
        if gbar is not None:
            abar_in += 2.0 * np.einsum("bpn,bpn->bp", gbar, g)
            gbar_in = 2.0 * a[:, :, None] * gbar
        if hbar is not None:
            abar_in += 2.0 * np.einsum("bpmn,bpmn->bp", hbar, h)
            gbar_in = gbar_in + 2.0 * _sym_apply(hbar, g)
            hbar_in = 2.0 * a[:, :, None, None] * hbar
        return abar_in, gbar_in, hbar_in


class _BranchMultiply:
    """Product of two parallel dense branches of the incoming activation."""

    def __init__(self, iwu, ibu, iwv, ibv):
        self.iwu, self.ibu = iwu, ibu
        self.iwv, self.ibv = iwv, ibv

    def forward(self, params, a, g, h, order, cache):
        wu, bu = params[self.iwu], params[self.ibu]
        wv, bv = params[self.iwv], params[self.ibv]
        u = a @ wu.T + bu
        v = a @ wv.T + bv
        gu = gv = hu = hv = None
        a2 = u * v
        g2 = h2 = None
        if order >= 1:
            gu = _mat_tensor(wu, g)
            gv = _mat_tensor(wv, g)
            g2 = u[:, :, None] * gv + v[:, :, None] * gu
        if order >= 2:
            hu = _mat_tensor(wu, h)
            hv = _mat_tensor(wv, h)
            h2 = (u[:, :, None, None] * hv + v[:, :, None, None] * hu
                  + _pair_sym(gu, gv))
        if cache is not None:
            cache.append((a, g, h, u, v, gu, gv, hu, hv))
        return a2, g2, h2

    def backward(self, params, entry, abar, gbar, hbar, grads):
        a, g, h, u, v, gu, gv, hu, hv = entry
        wu, wv = params[self.iwu], params[self.iwv]
        ubar = v * abar
        vbar = u * abar
        gubar = gvbar = None
        hubar = hvbar = None
        if gbar is not None:
            ubar += np.einsum("bpn,bpn->bp", gbar, gv)
            vbar += np.einsum("bpn,bpn->bp", gbar, gu)
            gubar = v[:, :, None] * gbar
            gvbar = u[:, :, None] * gbar
        if hbar is not None:
            ubar += np.einsum("bpmn,bpmn->bp", hbar, hv)
            vbar += np.einsum("bpmn,bpmn->bp", hbar, hu)
            gubar = gubar + _sym_apply(hbar, gv)
            gvbar = gvbar + _sym_apply(hbar, gu)
            hubar = v[:, :, None, None] * hbar
            hvbar = u[:, :, None, None] * hbar
        # Through the two affine branches.
        abar_in = ubar @ wu + vbar @ wv
        grads[self.ibu] += ubar.sum(axis=0)
        grads[self.ibv] += vbar.sum(axis=0)
        gwu = ubar.T @ a
        gwv = vbar.T @ a
        gbar_in = None
        hbar_in = None
        if gbar is not None:
            gwu += np.einsum("bqn,bpn->qp", gubar, g)
            gwv += np.einsum("bqn,bpn->qp", gvbar, g)
            gbar_in = _mat_tensor(wu.T, gubar) + _mat_tensor(wv.T, gvbar)
        if hbar is not None:
            b = h.shape[0]
            hflat = h.reshape(b, h.shape[1], -1)
            gwu += np.einsum("bqm,bpm->qp", hubar.reshape(b, hubar.shape[1], -1), hflat)
            gwv += np.einsum("bqm,bpm->qp", hvbar.reshape(b, hvbar.shape[1], -1), hflat)
            hbar_in = _mat_tensor(wu.T, hubar) + _mat_tensor(wv.T, hvbar)
        grads[self.iwu] += gwu
        grads[self.iwv] += gwv
        return abar_in, gbar_in, hbar_in


class EnergyNet:
    """Scalar network operating on normalized feature vectors."""

    def __init__(self, input_width, activation="softplus", sharpness=10.0,
                 multiply="square", width=WIDTH, seed=0):
        if input_width not in (6, 9):
            raise ConfigError(f"input width must be 6 or 9, got {input_width}")
        if multiply not in MULTIPLY_KINDS:
            raise ConfigError(f"unknown multiply kind {multiply!r}")
        self.input_width = int(input_width)
        self.width = int(width)
        self.activation = activation
        self.sharpness = float(sharpness)
        self.multiply = multiply
        self.seed = int(seed)
        self.phi = ActivationFamily(activation, sharpness)
        self.param_shapes = self._build_shapes()
        self.params = self._init_params(seed)
        self.layers = self._build_layers()

    def _build_shapes(self):
        w, n = self.width, self.input_width
        shapes = [("dense0.W", (w, n)), ("dense0.b", (w,))]
        if self.multiply == "branch":
            for m in range(2):
                shapes += [(f"mul{m}.Wu", (w, w)), (f"mul{m}.bu", (w,)),
                           (f"mul{m}.Wv", (w, w)), (f"mul{m}.bv", (w,))]
        shapes += [("dense1.W", (w, w)), ("dense1.b", (w,)),
                   ("dense2.W", (1, w)), ("dense2.b", (1,))]
        return shapes

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        params = []
        for name, shape in self.param_shapes:
            if name.endswith(".b") or name.endswith(".bu") or name.endswith(".bv"):
                params.append(np.zeros(shape))
            else:
                params.append(_glorot(rng, shape[0], shape[1]))
        return params

    def _index(self, name):
        for i, (n, _) in enumerate(self.param_shapes):
            if n == name:
                return i
        raise KeyError(name)

    def _build_layers(self):
        ix = self._index
        layers = [_Affine(ix("dense0.W"), ix("dense0.b")), _Activation(self.phi)]
        if self.multiply == "square":
            layers += [_SelfSquare(), _SelfSquare()]
        else:
            layers += [_BranchMultiply(ix("mul0.Wu"), ix("mul0.bu"),
                                       ix("mul0.Wv"), ix("mul0.bv")),
                       _BranchMultiply(ix("mul1.Wu"), ix("mul1.bu"),
                                       ix("mul1.Wv"), ix("mul1.bv"))]
        layers += [_Affine(ix("dense1.W"), ix("dense1.b")), _Activation(self.phi),
                   _Affine(ix("dense2.W"), ix("dense2.b"))]
        return layers

    # ---- evaluation ----

    def forward(self, xbar, order=0, want_cache=False):
        """Value (and input derivatives) of the scalar output.

        Returns (psi[B], grad[B,n] or None, hess[B,n,n] or None, cache).
        """
        xbar = np.asarray(xbar, dtype=float)
        single = xbar.ndim == 1
        a = np.atleast_2d(xbar)
        b, n = a.shape
        if n != self.input_width:
            raise ConfigError(
                f"input width {n} does not match network width {self.input_width}")
        g = np.broadcast_to(np.eye(n), (b, n, n)).copy() if order >= 1 else None
        h = np.zeros((b, n, n, n)) if order >= 2 else None
        cache = [] if want_cache else None
        for layer in self.layers:
            a, g, h = layer.forward(self.params, a, g, h, order, cache)
        psi = a[:, 0]
        grad = g[:, 0, :] if order >= 1 else None
        hess = h[:, 0, :, :] if order >= 2 else None
        if single:
            psi = psi[0]
            grad = None if grad is None else grad[0]
            hess = None if hess is None else hess[0]
        return psi, grad, hess, cache

    def backward(self, cache, psi_bar, grad_bar=None, hess_bar=None):
        """Parameter gradients of sum_b [psi_bar.psi + grad_bar.grad + hess_bar.hess]."""
        b = np.atleast_1d(psi_bar).shape[0]
        n = self.input_width
        abar = np.asarray(psi_bar, dtype=float).reshape(b, 1)
        if hess_bar is not None and grad_bar is None:
            grad_bar = np.zeros((b, n))
        gbar = None if grad_bar is None else np.asarray(grad_bar, float).reshape(b, 1, n)
        hbar = None if hess_bar is None else np.asarray(hess_bar, float).reshape(b, 1, n, n)
        grads = [np.zeros(shape) for _, shape in self.param_shapes]
        for layer, entry in zip(reversed(self.layers), reversed(cache)):
            abar, gbar, hbar = layer.backward(self.params, entry, abar, gbar,
                                              hbar, grads)
        return grads

    def clone(self):
        other = EnergyNet(self.input_width, self.activation, self.sharpness,
                          self.multiply, self.width, self.seed)
        other.params = [p.copy() for p in self.params]
        return other


class Normalizer:
    """Per-feature min-max maps for inputs and stress targets.

    Normalized inputs live in [0,1] over the training range. The physical
    energy is energy_scale times the raw network output; the scalar
    energy_scale is the mean of the per-feature products of stress range and
    input range, which makes physical stress the exact gradient of physical
    energy through the chain rule.
    """

    def __init__(self, x_min, x_max, s_min, s_max):
        self.x_min = np.asarray(x_min, dtype=float)
        self.x_max = np.asarray(x_max, dtype=float)
        self.s_min = np.asarray(s_min, dtype=float)
        self.s_max = np.asarray(s_max, dtype=float)
        if np.any(self.x_max <= self.x_min) or np.any(self.s_max <= self.s_min):
            raise ConfigError("normalizer requires max > min for every feature")
        self.x_range = self.x_max - self.x_min
        self.s_range = self.s_max - self.s_min
        self.energy_scale = float(np.mean(self.s_range * self.x_range))

    @staticmethod
    def _padded(lo, hi, tiny=1e-12):
        lo = np.asarray(lo, dtype=float).copy()
        hi = np.asarray(hi, dtype=float).copy()
        flat = hi - lo < tiny
        center = 0.5 * (hi + lo)
        lo[flat] = center[flat] - 0.5
        hi[flat] = center[flat] + 0.5
        return lo, hi

    @classmethod
    def from_arrays(cls, x, s):
        """Fit ranges from feature arrays x[N,n] and stress targets s[N,n].

        Constant features are assigned a centered unit range so that the
        constant value maps to 0.5.
        """
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        x_lo, x_hi = cls._padded(x.min(axis=0), x.max(axis=0))
        s_lo, s_hi = cls._padded(s.min(axis=0), s.max(axis=0))
        return cls(x_lo, x_hi, s_lo, s_hi)

    @classmethod
    def identity(cls, n):
        z = np.zeros(n)
        o = np.ones(n)
        return cls(z, o, z, o)

    def normalize_x(self, x):
        return (np.asarray(x, dtype=float) - self.x_min) / self.x_range

    def denormalize_x(self, xbar):
        return np.asarray(xbar, dtype=float) * self.x_range + self.x_min

    def normalize_s(self, s):
        return (np.asarray(s, dtype=float) - self.s_min) / self.s_range

    def to_dict(self):
        return {"x_min": self.x_min.tolist(), "x_max": self.x_max.tolist(),
                "s_min": self.s_min.tolist(), "s_max": self.s_max.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["x_min"], d["x_max"], d["s_min"], d["s_max"])


VARIANTS = ("SE", "PF")
_SHEAR_HALF = np.array([1.0, 1.0, 1.0, 0.5, 0.5, 0.5])


def features_from_tensor(x, variant):
    """Flatten strain input tensors to network feature vectors."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    t = x[None] if single else x
    if t.shape[-2:] != (3, 3):
        raise ConfigError(f"expected 3x3 strain inputs, got shape {x.shape}")
    if variant == "SE":
        t = 0.5 * (t + np.swapaxes(t, -1, -2))
        feats = np.stack([t[:, i, j] for (i, j) in _VOIGT], axis=1)
    else:
        feats = t.reshape(len(t), 9)
    return feats, single


class ModelBundle:
    """EnergyNet + Normalizer + conjugate-pair tag, evaluated in physical units.

    variant 'SE': input is the Green strain E (symmetric), stress output is
    the second Piola-Kirchhoff tensor S, tangent is dS/dE in 6x6 Voigt form.
    variant 'PF': input is the deformation gradient F, stress output is the
    first Piola-Kirchhoff tensor P, tangent is dP/dF in 9x9 form.
    """

    def __init__(self, net, normalizer, variant, metadata=None):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}")
        expected = 6 if variant == "SE" else 9
        if net.input_width != expected:
            raise ConfigError(
                f"variant {variant} requires input width {expected}, "
                f"net has {net.input_width}")
        if normalizer.x_min.shape != (expected,) or normalizer.s_min.shape != (expected,):
            raise ConfigError("normalizer width does not match variant")
        self.net = net
        self.normalizer = normalizer
        self.variant = variant
        self.metadata = dict(metadata or {})

    # ---- feature-space (flat) evaluation in physical units ----

    def features(self, x):
        feats, single = features_from_tensor(x, self.variant)
        return feats, single

    def energy_features(self, feats):
        psi, _, _, _ = self.net.forward(self.normalizer.normalize_x(feats), order=0)
        return self.normalizer.energy_scale * psi

    def gradient_features(self, feats):
        """d(energy)/d(feature) in physical units, shape [B, n]."""
        _, g, _, _ = self.net.forward(self.normalizer.normalize_x(feats), order=1)
        return self.normalizer.energy_scale * g / self.normalizer.x_range

    def hessian_features(self, feats):
        """d2(energy)/d(feature)2 in physical units, shape [B, n, n]."""
        _, _, h, _ = self.net.forward(self.normalizer.normalize_x(feats), order=2)
        r = self.normalizer.x_range
        return self.normalizer.energy_scale * h / (r[:, None] * r[None, :])

    # ---- tensor-facing API ----

    def energy(self, x):
        feats, single = self.features(x)
        e = self.energy_features(feats)
        return float(e[0]) if single else e

    def stress(self, x):
        feats, single = self.features(x)
        g = self.gradient_features(feats)
        if self.variant == "PF":
            out = g.reshape(-1, 3, 3)
        else:
            half = g * _SHEAR_HALF
            out = np.zeros((len(g), 3, 3))
            for a, (i, j) in enumerate(_VOIGT):
                out[:, i, j] = half[:, a]
                out[:, j, i] = half[:, a]
        return out[0] if single else out

    def tangent(self, x):
        feats, single = self.features(x)
        h = self.hessian_features(feats)
        if self.variant == "SE":
            h = _SHEAR_HALF[None, :, None] * h * _SHEAR_HALF[None, None, :]
        out = h
        return out[0] if single else out


def init_model(seed, variant, activation="softplus", sharpness=10.0,
               multiply="square", width=WIDTH, normalizer=None, metadata=None):
    """Fresh model with Glorot-uniform weights and zero biases."""
    n = 6 if variant == "SE" else 9
    net = EnergyNet(n, activation=activation, sharpness=sharpness,
                    multiply=multiply, width=width, seed=seed)
    norm = normalizer if normalizer is not None else Normalizer.identity(n)
    meta = {"seed": int(seed)}
    meta.update(metadata or {})
    return ModelBundle(net, norm, variant, meta)


# ------------------ serialization ------------------

def _encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d):
    raw = base64.b64decode(d["data"])
    shape = tuple(int(s) for s in d["shape"])
    a = np.frombuffer(raw, dtype="<f8").copy()
    if a.size != int(np.prod(shape, dtype=int)):
        raise ModelFormatError(
            f"array payload size {a.size} does not match shape {shape}")
    return a.reshape(shape)


def serialize_model(bundle):
    """Versioned JSON document; parameters round-trip bit-exactly via base64."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "variant": bundle.variant,
        "activation": bundle.net.activation,
        "sharpness": bundle.net.sharpness,
        "multiply": bundle.net.multiply,
        "width": bundle.net.width,
        "input_width": bundle.net.input_width,
        "seed": bundle.net.seed,
        "metadata": bundle.metadata,
        "normalizer": bundle.normalizer.to_dict(),
        "params": {name: _encode_array(p)
                   for (name, _), p in zip(bundle.net.param_shapes, bundle.net.params)},
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def deserialize_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"model document is not valid JSON at line {exc.lineno} "
            f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("document is not a model file (missing format tag)")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"unsupported model version {doc.get('version')!r}; "
            f"this build reads version {MODEL_VERSION}")
    try:
        net = EnergyNet(doc["input_width"], activation=doc["activation"],
                        sharpness=doc["sharpness"], multiply=doc["multiply"],
                        width=doc["width"], seed=doc["seed"])
        params = doc["params"]
        loaded = []
        for name, shape in net.param_shapes:
            if name not in params:
                raise ModelFormatError(f"model document is missing parameter {name!r}")
            arr = _decode_array(params[name])
            if arr.shape != shape:
                raise ModelFormatError(
                    f"parameter {name!r} has shape {arr.shape}, expected {shape}")
            loaded.append(arr)
        net.params = loaded
        norm = Normalizer.from_dict(doc["normalizer"])
        return ModelBundle(net, norm, doc["variant"], doc.get("metadata", {}))
    except KeyError as exc:
        raise ModelFormatError(f"model document is missing field {exc}") from exc


def save_model(bundle, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(bundle))
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize_model(fh.read())
