"""Fully connected tanh network with exact spatial jets and parameter gradients.

The architecture is fixed to two tanh hidden layers and a linear scalar output.
Spatial derivatives to second order propagate forward through the layers; the
gradient of any scalar built from the output jets propagates backward to every
weight and bias. Both passes run on the selected kernel backend (compiled
Cython or vectorized numpy, see ``eigencurve._kernels``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import Domain, PointBatch
from .jets import Jet2
from .seeding import TAG_INIT, make_rng

SNAPSHOT_FORMAT = "eigencurve-mlp-1"


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Weights and biases of a [d, h1, h2, 1] tanh network."""

    widths: tuple
    weights: tuple  # (W1, W2, W3) with W_l of shape (widths[l+1], widths[l])
    biases: tuple   # (b1, b2, b3)
    seed: int = 0

    def __post_init__(self):
        w = tuple(int(x) for x in self.widths)
        if len(w) != 4:
            raise ValueError("widths must be [d, h1, h2, 1]: exactly two hidden layers")
        if w[-1] != 1:
            raise ValueError("output width must be 1")
        if min(w) < 1:
            raise ValueError("all widths must be >= 1")
        Ws, bs = [], []
        for l in range(3):
            W = np.ascontiguousarray(self.weights[l], dtype=float)
            b = np.ascontiguousarray(self.biases[l], dtype=float)
            if W.shape != (w[l + 1], w[l]) or b.shape != (w[l + 1],):
                raise ValueError(f"layer {l} shapes {W.shape}/{b.shape} do not match widths {w}")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {l} has non-finite entries")
            W.setflags(write=False)
            b.setflags(write=False)
            Ws.append(W)
            bs.append(b)
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "weights", tuple(Ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def dim(self) -> int:
        return self.widths[0]

    def n_params(self) -> int:
        return sum(W.size for W in self.weights) + sum(b.size for b in self.biases)


@dataclass(frozen=True, eq=False)
class ParamGradient:
    """Per-parameter gradient with the same shapes as MlpParams."""

    weights: tuple
    biases: tuple

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def scaled(self, c: float) -> "ParamGradient":
        return ParamGradient(tuple(c * W for W in self.weights), tuple(c * b for b in self.biases))


def init_params(widths, seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases; deterministic in (widths, seed)."""
    w = tuple(int(x) for x in widths)
    if len(w) != 4 or w[-1] != 1 or min(w) < 1:
        raise ValueError("widths must be [d, h1, h2, 1] with positive entries")
    rng = make_rng(seed, TAG_INIT)
    Ws, bs = [], []
    for l in range(3):
        fan_in, fan_out = w[l], w[l + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        Ws.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MlpParams(widths=w, weights=tuple(Ws), biases=tuple(bs), seed=int(seed))


def _args(params: MlpParams):
    W1, W2, W3 = params.weights
    b1, b2, b3 = params.biases
    return W1, b1, W2, b2, W3, b3


JET_CHUNK = 4096  # evaluation chunk; bounds the transient tape memory


def forward_jets(params: MlpParams, X: np.ndarray):
    """Batched raw-network jets: values (n,), gradients (n,d), Hessians (n,d,d)."""
    X = np.ascontiguousarray(X, dtype=float)
    n = X.shape[0]
    if n <= JET_CHUNK:
        v, g, h, _ = _kernels.forward(*_args(params), X)
        return v, g, h
    parts = [_kernels.forward(*_args(params), X[i:i + JET_CHUNK])[:3]
             for i in range(0, n, JET_CHUNK)]
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]),
            np.concatenate([p[2] for p in parts]))


def forward_values(params: MlpParams, X: np.ndarray) -> np.ndarray:
    """Values only (no derivatives); cheap path for dense lattice evaluation."""
    W1, b1, W2, b2, W3, b3 = _args(params)
    t1 = np.tanh(X @ W1.T + b1)
    t2 = np.tanh(t1 @ W2.T + b2)
    return (t2 @ W3.T + b3)[:, 0]


def forward_jet(params: MlpParams, x) -> Jet2:
    """Jet of the raw network at a single point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.dim,):
        raise ValueError(f"expected a point of dimension {params.dim}, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("input point must be finite")
    v, g, h = forward_jets(params, x[None, :])
    return Jet2(float(v[0]), g[0], h[0])


def trial_from_raw(v, g, h, bjets):
    """Second-order product rule for u = B * N given raw jets and boundary jets."""
    B, gB, hB = bjets
    u = B * v
    Gu = B[:, None] * g + v[:, None] * gB
    cross = gB[:, :, None] * g[:, None, :]
    Hu = B[:, None, None] * h + cross + np.swapaxes(cross, 1, 2) + v[:, None, None] * hB
    return u, Gu, Hu


def raw_cotangents_from_trial(wv, wg, wh, bjets):
    """Transpose of the product rule: cotangents on u = B*N become cotangents on N."""
    B, gB, hB = bjets
    whs = wh + np.swapaxes(wh, 1, 2)
    rv = B * wv + np.einsum('nd,nd->n', gB, wg) + np.einsum('nde,nde->n', hB, wh)
    rg = B[:, None] * wg + np.einsum('nde,ne->nd', whs, gB)
    rh = B[:, None, None] * wh
    return rv, rg, rh


def trial_jets(params: MlpParams, domain: Domain, X: np.ndarray, bjets=None):
    """Batched jets of the trial function u(x) = B(x) * N(x)."""
    X = np.ascontiguousarray(X, dtype=float)
    if bjets is None:
        bjets = domain.boundary_jets(X)
    v, g, h = forward_jets(params, X)
    return trial_from_raw(v, g, h, bjets)


def trial_jet(params: MlpParams, domain: Domain, x) -> Jet2:
    """Jet of the boundary-conditioned trial function at a single point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.dim,):
        raise ValueError(f"expected a point of dimension {params.dim}, got shape {x.shape}")
    u, Gu, Hu = trial_jets(params, domain, x[None, :])
    return Jet2(float(u[0]), Gu[0], Hu[0])


def loss_gradient(params: MlpParams, batch: PointBatch, loss_spec, bjets=None):
    """Loss value and its exact parameter gradient on a collocation batch.

    ``loss_spec`` is called with batched jets (values, gradients, Hessians) and
    must return ``(value, (wv, wg, wh))`` where the w-arrays are the cotangents
    of the scalar value with respect to each jet component. When ``loss_spec``
    has a non-None ``domain`` attribute the jets passed to it are trial jets
    (boundary factor applied) and the cotangents are transposed back through
    the product rule automatically.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    X = batch.points
    domain = getattr(loss_spec, "domain", None)
    v, g, h, tape = _kernels.forward(*_args(params), X)
    if domain is not None:
        if bjets is None:
            bjets = domain.boundary_jets(X)
        u, Gu, Hu = trial_from_raw(v, g, h, bjets)
        value, (wv, wg, wh) = loss_spec(u, Gu, Hu)
        wv, wg, wh = raw_cotangents_from_trial(wv, wg, wh, bjets)
    else:
        value, (wv, wg, wh) = loss_spec(v, g, h)
    wv = np.ascontiguousarray(wv, dtype=float)
    wg = np.ascontiguousarray(wg, dtype=float)
    wh = np.ascontiguousarray(wh, dtype=float)
    dW1, db1, dW2, db2, dW3, db3 = _kernels.backward(*_args(params), tape, wv, wg, wh)
    grad = ParamGradient(weights=(dW1, dW2, dW3), biases=(db1, db2, db3))
    return value, grad


# --- flat-vector view (optimizer currency) ---

def params_to_vector(params: MlpParams) -> np.ndarray:
    return np.concatenate([a.ravel() for pair in zip(params.weights, params.biases) for a in pair])


def vector_to_params(vec: np.ndarray, widths, seed: int = 0) -> MlpParams:
    w = tuple(int(x) for x in widths)
    Ws, bs, off = [], [], 0
    for l in range(3):
        k = w[l + 1] * w[l]
        Ws.append(vec[off:off + k].reshape(w[l + 1], w[l]).copy())
        off += k
        bs.append(vec[off:off + w[l + 1]].copy())
        off += w[l + 1]
    if off != vec.size:
        raise ValueError(f"vector length {vec.size} does not match widths {w}")
    return MlpParams(widths=w, weights=tuple(Ws), biases=tuple(bs), seed=seed)


# --- snapshot serialization: JSON header line + little-endian float64 payload ---

def serialize_params(params: MlpParams) -> bytes:
    header = {
        "format": SNAPSHOT_FORMAT,
        "widths": list(params.widths),
        "seed": params.seed,
        "count": params.n_params(),
    }
    payload = params_to_vector(params).astype("<f8").tobytes()
    return json.dumps(header, sort_keys=True).encode() + b"\n" + payload


def deserialize_params(blob: bytes) -> MlpParams:
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl].decode())
    if header.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"unknown snapshot format: {header.get('format')!r}")
    vec = np.frombuffer(blob[nl + 1:], dtype="<f8").astype(float)
    if vec.size != header["count"]:
        raise ValueError("snapshot payload length does not match header count")
    return vector_to_params(vec, header["widths"], seed=int(header.get("seed", 0)))


def snapshot_ref(blob: bytes) -> str:
    """Content address of a serialized snapshot."""
    return hashlib.sha256(blob).hexdigest()[:16]
