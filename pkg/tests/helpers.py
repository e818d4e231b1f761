"""Shared test utilities: finite-difference gradient checking, tiny models."""

import numpy as np

from spanqa.diffmath import backward
from spanqa.encoder import CharVocab, EncoderConfig, Vocab
from spanqa.model import QaModel

TINY_WORDS = ["camels", "store", "fat", "in", "their", "humps", "what", "do", "?", "sand", "dune", "walks"]


def tiny_model(hidden_dim=2, word_dim=4, char_out_dim=3, words=None, seed=0, keep_prob=1.0):
    config = EncoderConfig(
        word_dim=word_dim,
        char_dim=5,
        char_conv_width=3,
        char_out_dim=char_out_dim,
        hidden_dim=hidden_dim,
        keep_prob=keep_prob,
    )
    vocab = Vocab(words or TINY_WORDS)
    return QaModel.create(config, vocab, CharVocab.from_vocab(vocab), seed=seed)


def numeric_grad(f, x, h=1e-5):
    """Central-difference gradient of the scalar-valued callable f w.r.t. x.

    x is perturbed in place and restored; f must recompute from x's current
    contents on every call.
    """
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f()
        x[i] = orig - h
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-4)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / denom))


def check_grads(build, tensors, tol=1e-4, h=1e-5):
    """Compare backward() against finite differences for each leaf in `tensors`.

    `build` must rebuild the graph from the leaves' current data and return
    a scalar Tensor.
    """
    loss = build()
    backward(loss)
    for t in tensors:
        assert t.grad is not None, "leaf received no gradient"
        analytic = t.grad.copy()
        numeric = numeric_grad(lambda: build().item(), t.data, h=h)
        err = max_rel_err(analytic, numeric)
        assert err < tol, f"gradient mismatch: max rel err {err:.3e} (tol {tol:.0e})"
        t.zero_grad()
