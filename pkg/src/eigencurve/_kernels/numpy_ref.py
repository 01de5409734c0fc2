"""Vectorized numpy implementation of the jet-propagation kernels.

Jets of every hidden unit are stored in one (h, n, m) array with m = 1 + d + d*d
slots per point: value, gradient, flattened Hessian. Affine layers then act on
all slots at once as a single (h_out, h_in) x (h_in, n*m) matrix product, and
tanh composes slot-wise via t' = 1 - t^2 and t'' = -2 t (1 - t^2).
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def forward(W1, b1, W2, b2, W3, b3, X):
    """Jets of the raw network at each row of X.

    Returns (v, g, h, tape): values (n,), gradients (n, d), Hessians (n, d, d)
    and the intermediates needed by backward().
    """
    n, d = X.shape
    m = 1 + d + d * d
    h1, h2 = W1.shape[0], W2.shape[0]

    # layer 1 pre-activation jet: value W1 x + b1, gradient W1, Hessian 0
    A1 = np.zeros((h1, n, m))
    A1[:, :, 0] = W1 @ X.T + b1[:, None]
    A1[:, :, 1:1 + d] = W1[:, None, :]
    t1 = np.tanh(A1[:, :, 0])
    d11 = 1.0 - t1 * t1
    d21 = -2.0 * t1 * d11
    Z1 = np.empty_like(A1)
    Z1[:, :, 0] = t1
    G1 = A1[:, :, 1:1 + d]
    Z1[:, :, 1:1 + d] = d11[:, :, None] * G1
    Z1[:, :, 1 + d:] = (d21[:, :, None, None] * (G1[:, :, :, None] * G1[:, :, None, :])).reshape(h1, n, d * d)

    A2 = (W2 @ Z1.reshape(h1, n * m)).reshape(h2, n, m)
    A2[:, :, 0] += b2[:, None]
    t2 = np.tanh(A2[:, :, 0])
    d12 = 1.0 - t2 * t2
    d22 = -2.0 * t2 * d12
    Z2 = np.empty_like(A2)
    Z2[:, :, 0] = t2
    G2 = A2[:, :, 1:1 + d]
    H2 = A2[:, :, 1 + d:]
    Z2[:, :, 1:1 + d] = d12[:, :, None] * G2
    Z2[:, :, 1 + d:] = d12[:, :, None] * H2 + (
        d22[:, :, None, None] * (G2[:, :, :, None] * G2[:, :, None, :])
    ).reshape(h2, n, d * d)

    out = (W3 @ Z2.reshape(h2, n * m)).reshape(1, n, m)
    out[:, :, 0] += b3[:, None]
    v = out[0, :, 0].copy()
    g = out[0, :, 1:1 + d].copy()
    h = out[0, :, 1 + d:].reshape(n, d, d).copy()
    tape = (X, t1, d11, d21, A1, t2, d12, d22, A2, Z1, Z2)
    return v, g, h, tape


def backward(W1, b1, W2, b2, W3, b3, tape, wv, wg, wh):
    """Parameter gradients of sum_i <(wv, wg, wh)_i, jet_i> by reverse accumulation."""
    X, t1, d11, d21, A1, t2, d12, d22, A2, Z1, Z2 = tape
    n, d = X.shape
    m = 1 + d + d * d
    h1, h2 = W1.shape[0], W2.shape[0]

    wOut = np.empty((1, n, m))
    wOut[0, :, 0] = wv
    wOut[0, :, 1:1 + d] = wg
    wOut[0, :, 1 + d:] = wh.reshape(n, d * d)
    dW3 = wOut.reshape(1, n * m) @ Z2.reshape(h2, n * m).T
    db3 = np.array([wv.sum()])
    wZ2 = (W3.T @ wOut.reshape(1, n * m)).reshape(h2, n, m)

    wA2 = _tanh_reverse(wZ2, t2, d12, d22, A2, d)
    dW2 = wA2.reshape(h2, n * m) @ Z1.reshape(h1, n * m).T
    db2 = wA2[:, :, 0].sum(axis=1)
    wZ1 = (W2.T @ wA2.reshape(h2, n * m)).reshape(h1, n, m)

    wA1 = _tanh_reverse(wZ1, t1, d11, d21, A1, d)
    # layer-1 pre-activation gradient slot is W1 itself, so its cotangent
    # contributes to dW1 directly; the Hessian slot is identically zero
    dW1 = wA1[:, :, 0] @ X + wA1[:, :, 1:1 + d].sum(axis=1)
    db1 = wA1[:, :, 0].sum(axis=1)
    return dW1, db1, dW2, db2, dW3, db3


def _tanh_reverse(wZ, t, d1, d2, A, d):
    """Cotangent on a tanh layer's pre-activation jet given the one on its output jet."""
    h, n, m = wZ.shape
    G = A[:, :, 1:1 + d]
    H = A[:, :, 1 + d:].reshape(h, n, d, d)
    wt = wZ[:, :, 0]
    wG = wZ[:, :, 1:1 + d]
    wH = wZ[:, :, 1 + d:].reshape(h, n, d, d)
    dd2 = -2.0 * d1 * (1.0 - 3.0 * t * t)
    wHG = np.einsum('hnde,hne->hnd', wH, G)
    wHGT = np.einsum('hnde,hnd->hne', wH, G)
    wA = np.empty((h, n, m))
    wA[:, :, 0] = (
        wt * d1
        + d2 * np.einsum('hnd,hnd->hn', wG, G)
        + d2 * np.einsum('hnde,hnde->hn', wH, H)
        + dd2 * np.einsum('hnd,hnd->hn', wHG, G)
    )
    wA[:, :, 1:1 + d] = d1[:, :, None] * wG + d2[:, :, None] * (wHG + wHGT)
    wA[:, :, 1 + d:] = (d1[:, :, None, None] * wH).reshape(h, n, d * d)
    return wA
