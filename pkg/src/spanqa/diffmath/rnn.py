"""Gated recurrent sequence kernels.

The cell is h' = (1 - z) * h + z * c with
    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    c = tanh(x W_h + (r * h) U_h + b_h)
and a zero initial state.  A whole sequence pass is a single graph node:
the forward loop caches gate activations and the closure runs
backpropagation-through-time in one sweep, which keeps graphs small and
fast.  Gate weights are packed [z | r | h] along the output axis.
"""

from dataclasses import dataclass

import numpy as np

from .optim import glorot_uniform
from .tensor import Tensor, _make, concat_cols, flip_rows


@dataclass
class GruParams:
    """One direction: w (in, 3d), u_zr (d, 2d), u_h (d, d), b (3d,)."""

    w: Tensor
    u_zr: Tensor
    u_h: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.u_h.data.shape[0]

    def tensors(self):
        yield "w", self.w
        yield "u_zr", self.u_zr
        yield "u_h", self.u_h
        yield "b", self.b


@dataclass
class BiGruParams:
    fwd: GruParams
    bwd: GruParams

    @property
    def hidden(self) -> int:
        return self.fwd.hidden

    def tensors(self):
        for name, t in self.fwd.tensors():
            yield "fwd/" + name, t
        for name, t in self.bwd.tensors():
            yield "bwd/" + name, t


def init_gru_params(in_dim: int, hidden: int, rng) -> GruParams:
    return GruParams(
        w=Tensor(glorot_uniform((in_dim, 3 * hidden), rng), requires_grad=True),
        u_zr=Tensor(glorot_uniform((hidden, 2 * hidden), rng), requires_grad=True),
        u_h=Tensor(glorot_uniform((hidden, hidden), rng), requires_grad=True),
        b=Tensor(np.zeros(3 * hidden), requires_grad=True),
    )


def init_bigru_params(in_dim: int, hidden: int, rng) -> BiGruParams:
    return BiGruParams(
        fwd=init_gru_params(in_dim, hidden, rng),
        bwd=init_gru_params(in_dim, hidden, rng),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _gru_forward_pass(inputs: Tensor, params: GruParams, h0) -> Tensor:
    x = inputs.data
    n = x.shape[0]
    d = params.hidden
    w, u_zr, u_h, b = params.w.data, params.u_zr.data, params.u_h.data, params.b.data

    xw = x @ w + b
    h = np.zeros(d) if h0 is None else np.asarray(h0, dtype=np.float64)
    hs = np.empty((n, d))
    hprev = np.empty((n, d))
    zs = np.empty((n, d))
    rs = np.empty((n, d))
    cs = np.empty((n, d))
    for t in range(n):
        hprev[t] = h
        zr = _sigmoid(xw[t, : 2 * d] + h @ u_zr)
        z, r = zr[:d], zr[d:]
        c = np.tanh(xw[t, 2 * d :] + (r * h) @ u_h)
        h = (1.0 - z) * h + z * c
        zs[t], rs[t], cs[t], hs[t] = z, r, c, h

    def back(g):
        dzr = np.empty((n, 2 * d))
        dah = np.empty((n, d))
        dh = np.zeros(d)
        u_zr_t, u_h_t = u_zr.T, u_h.T
        for t in range(n - 1, -1, -1):
            dht = g[t] + dh
            z, r, c, hp = zs[t], rs[t], cs[t], hprev[t]
            da = (dht * z) * (1.0 - c * c)
            dah[t] = da
            drh = da @ u_h_t
            dzr[t, :d] = (dht * (c - hp)) * z * (1.0 - z)
            dzr[t, d:] = (drh * hp) * r * (1.0 - r)
            dh = dht * (1.0 - z) + drh * r + dzr[t] @ u_zr_t
        dxw = np.concatenate([dzr, dah], axis=1)
        return (
            dxw @ w.T,
            x.T @ dxw,
            hprev.T @ dzr,
            (rs * hprev).T @ dah,
            dxw.sum(axis=0),
        )

    return _make(hs, (inputs, params.w, params.u_zr, params.u_h, params.b), back)


def gru_sequence(inputs: Tensor, params: GruParams, direction: str = "forward", h0=None) -> Tensor:
    """Run the recurrence over the rows of `inputs`, returning one state per step.

    direction="backward" processes the reversed sequence and re-reverses
    the output, so row t still describes token t.  `h0` overrides the zero
    initial state (constant, not differentiated).
    """
    if inputs.data.ndim != 2 or inputs.data.shape[0] < 1:
        raise ValueError(f"gru_sequence needs a nonempty (n, in) input, got shape {inputs.data.shape}")
    if inputs.data.shape[1] != params.w.data.shape[0]:
        raise ValueError(
            f"gru_sequence input width {inputs.data.shape[1]} does not match "
            f"weight shape {params.w.data.shape}"
        )
    if direction == "forward":
        return _gru_forward_pass(inputs, params, h0)
    if direction == "backward":
        return flip_rows(_gru_forward_pass(flip_rows(inputs), params, h0))
    raise ValueError(f"unknown direction: {direction!r}")


def bigru(inputs: Tensor, params: BiGruParams) -> Tensor:
    """Concatenate forward and backward passes along the feature axis: (n, 2d)."""
    return concat_cols(
        [
            gru_sequence(inputs, params.fwd, "forward"),
            gru_sequence(inputs, params.bwd, "backward"),
        ]
    )
