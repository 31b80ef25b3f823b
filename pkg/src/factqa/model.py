"""A compact transformer pair-classifier with exact reverse-mode gradients.

The network is the standard pre-classifier stack: summed token + position +
segment embeddings, `num_layers` blocks of multi-head self-attention and a
GELU feed-forward (each with residual + post layer-norm), then an affine map
from the position-0 vector to two logits. Everything runs in float64 numpy;
the backward pass is hand-derived and checked against finite differences.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import erf, ndtr, ndtri

from factqa._kernels import scatter_add_rows
from factqa.encoding import EncodedBatch, EncodedSequence
from factqa.errors import NumericError

logger = logging.getLogger(__name__)

LN_EPS = 1e-5
ATTN_NEG = -1e9  # additive bias on padded keys; underflows to exactly 0 after softmax
INIT_STD = 0.02
INIT_TRUNC = 2.0  # truncation, in units of the base normal's sigma


@dataclass(frozen=True)
class EncoderConfig:
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    feed_forward_size: int = 256
    max_len: int = 128
    vocab_size: int = 20000
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.hidden_size % self.num_heads != 0:
            raise ValueError("hidden_size must be divisible by num_heads")
        for name in ("hidden_size", "num_layers", "num_heads", "feed_forward_size",
                     "max_len", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads


PRESETS = {
    "tiny": EncoderConfig(hidden_size=64, num_layers=2, num_heads=4, feed_forward_size=256),
    "small": EncoderConfig(hidden_size=128, num_layers=4, num_heads=4, feed_forward_size=512),
}


class Stage(Enum):
    KNOWLEDGE = "knowledge"  # trained on fact-completion pairs
    CLOZE = "cloze"  # trained (further) on cloze QA pairs
    FINETUNED = "finetuned"  # additionally tuned on a target dataset


_ALLOWED_PARENTS = {
    Stage.KNOWLEDGE: {None},
    Stage.CLOZE: {Stage.KNOWLEDGE, None},  # None covers the cloze-only ablation
    Stage.FINETUNED: {Stage.CLOZE, Stage.KNOWLEDGE, None},
}


@dataclass(frozen=True)
class CheckpointStage:
    stage: Stage
    parent: Optional[Stage]
    seed: int
    train_config_hash: str
    lineage: tuple[str, ...] = ()  # stage values from the init record forward

    def __post_init__(self):
        if self.parent not in _ALLOWED_PARENTS[self.stage]:
            raise ValueError(
                f"stage {self.stage.value} cannot descend from "
                f"{self.parent.value if self.parent else 'init'}"
            )


def param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Declared parameter order; checkpoint blocks are serialized in this order."""
    H, F = config.hidden_size, config.feed_forward_size
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, H),
        "pos_emb": (config.max_len, H),
        "seg_emb": (2, H),
    }
    for i in range(config.num_layers):
        p = f"l{i}."
        shapes[p + "attn.wq"] = (H, H)
        shapes[p + "attn.bq"] = (H,)
        shapes[p + "attn.wk"] = (H, H)
        shapes[p + "attn.bk"] = (H,)
        shapes[p + "attn.wv"] = (H, H)
        shapes[p + "attn.bv"] = (H,)
        shapes[p + "attn.wo"] = (H, H)
        shapes[p + "attn.bo"] = (H,)
        shapes[p + "ln1.g"] = (H,)
        shapes[p + "ln1.b"] = (H,)
        shapes[p + "ff.w1"] = (H, F)
        shapes[p + "ff.b1"] = (F,)
        shapes[p + "ff.w2"] = (F, H)
        shapes[p + "ff.b2"] = (H,)
        shapes[p + "ln2.g"] = (H,)
        shapes[p + "ln2.b"] = (H,)
    shapes["cls.w"] = (H, 2)
    shapes["cls.b"] = (2,)
    return shapes


@dataclass
class ModelParams:
    config: EncoderConfig
    tensors: dict[str, np.ndarray]
    stage: Optional[CheckpointStage] = None

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            stage=self.stage,
        )

    def num_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def with_stage(self, stage: Optional[CheckpointStage]) -> "ModelParams":
        return replace(self, stage=stage)


def config_hash(obj) -> str:
    """Stable short hash of any JSON-serializable config snapshot."""
    blob = json.dumps(obj, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _truncated_normal(
    rng: np.random.Generator, shape: tuple[int, ...], std: float, trunc: float
) -> np.ndarray:
    """Zero-mean truncated normal whose *final* standard deviation is `std`.

    Truncating a normal at +-trunc sigma shrinks its spread, so the base sigma
    is inflated by the closed-form factor to land the requested scale.
    """
    phi = np.exp(-0.5 * trunc * trunc) / np.sqrt(2.0 * np.pi)
    mass = 2.0 * ndtr(trunc) - 1.0
    shrink = np.sqrt(1.0 - 2.0 * trunc * phi / mass)
    base_sigma = std / shrink
    lo, hi = ndtr(-trunc), ndtr(trunc)
    u = rng.uniform(lo, hi, size=shape)
    return ndtri(u) * base_sigma


def init_params(config: EncoderConfig, seed: int) -> ModelParams:
    """Weights: truncated normal at scale 0.02; biases zero; layer-norm gains one."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("g",):
            tensors[name] = np.ones(shape, dtype=np.float64)
        elif leaf in ("b", "bq", "bk", "bv", "bo", "b1", "b2") or name == "cls.b":
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            tensors[name] = _truncated_normal(rng, shape, INIT_STD, INIT_TRUNC)
    return ModelParams(config=config, tensors=tensors, stage=None)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _ln_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv_std
    return xhat * g + b, (xhat, inv_std)


def _ln_backward(dy: np.ndarray, g: np.ndarray, cache):
    xhat, inv_std = cache
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _dropout_mask(
    rng: Optional[np.random.Generator], rate: float, shape: tuple[int, ...]
) -> Optional[np.ndarray]:
    if rng is None or rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _apply(x: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return x if mask is None else x * mask


def _check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values after {where}")


def _forward(
    params: ModelParams,
    batch: EncodedBatch,
    train_mode: bool,
    dropout_rng: Optional[np.random.Generator],
    need_cache: bool,
):
    cfg = params.config
    t = params.tensors
    ids, segs, attn = batch.token_ids, batch.segment_ids, batch.attention_mask
    if ids.max() >= cfg.vocab_size:
        raise NumericError(
            f"token id {int(ids.max())} out of range for vocab_size={cfg.vocab_size}"
        )
    # the layout pads to max_len; compute only over the longest real prefix
    t_eff = max(int(attn.sum(axis=1).max()), 1)
    ids, segs, attn = ids[:, :t_eff], segs[:, :t_eff], attn[:, :t_eff]
    B, T = ids.shape
    H, A, D = cfg.hidden_size, cfg.num_heads, cfg.head_dim
    rng = dropout_rng if train_mode else None
    rate = cfg.dropout_rate

    E = t["tok_emb"][ids] + t["pos_emb"][:T][None, :, :] + t["seg_emb"][segs]
    emb_mask = _dropout_mask(rng, rate, E.shape)
    X = _apply(E, emb_mask)
    _check_finite(X, "embedding sum")

    key_bias = (1.0 - attn)[:, None, None, :] * ATTN_NEG  # (B,1,1,T)
    scale = 1.0 / np.sqrt(D)
    layers = []
    for i in range(cfg.num_layers):
        p = f"l{i}."
        Xin = X
        Q = Xin @ t[p + "attn.wq"] + t[p + "attn.bq"]
        K = Xin @ t[p + "attn.wk"] + t[p + "attn.bk"]
        V = Xin @ t[p + "attn.wv"] + t[p + "attn.bv"]
        Qh = Q.reshape(B, T, A, D).transpose(0, 2, 1, 3)
        Kh = K.reshape(B, T, A, D).transpose(0, 2, 1, 3)
        Vh = V.reshape(B, T, A, D).transpose(0, 2, 1, 3)
        S = Qh @ Kh.swapaxes(-1, -2) * scale + key_bias
        P = softmax(S, axis=-1)
        p_mask = _dropout_mask(rng, rate, P.shape)
        Pd = _apply(P, p_mask)
        Ch = Pd @ Vh
        C = Ch.transpose(0, 2, 1, 3).reshape(B, T, H)
        O = C @ t[p + "attn.wo"] + t[p + "attn.bo"]
        o_mask = _dropout_mask(rng, rate, O.shape)
        A1 = Xin + _apply(O, o_mask)
        X1, ln1_cache = _ln_forward(A1, t[p + "ln1.g"], t[p + "ln1.b"])
        U = X1 @ t[p + "ff.w1"] + t[p + "ff.b1"]
        G = gelu(U)
        Fo = G @ t[p + "ff.w2"] + t[p + "ff.b2"]
        f_mask = _dropout_mask(rng, rate, Fo.shape)
        A2 = X1 + _apply(Fo, f_mask)
        X, ln2_cache = _ln_forward(A2, t[p + "ln2.g"], t[p + "ln2.b"])
        _check_finite(X, f"encoder layer {i}")
        if need_cache:
            layers.append(
                dict(Xin=Xin, Qh=Qh, Kh=Kh, Vh=Vh, P=P, p_mask=p_mask, Pd=Pd, C=C,
                     o_mask=o_mask, ln1=ln1_cache, X1=X1, U=U, G=G, f_mask=f_mask,
                     ln2=ln2_cache)
            )

    cls = X[:, 0, :]
    logits = cls @ t["cls.w"] + t["cls.b"]
    _check_finite(logits, "classifier head")
    cache = None
    if need_cache:
        cache = dict(ids=ids, segs=segs, t_eff=T, emb_mask=emb_mask, key_bias=key_bias,
                     layers=layers, cls=cls, X_out=X, scale=scale)
    return logits, cls, cache


def forward(
    params: ModelParams,
    batch: EncodedBatch,
    train_mode: bool = False,
    dropout_rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the encoder; returns (logits (B, 2), cls embeddings (B, H))."""
    logits, cls, _ = _forward(params, batch, train_mode, dropout_rng, need_cache=False)
    return logits, cls


def score_pair(params: ModelParams, encoded: EncodedSequence) -> float:
    """Probability that the answer correctly completes the question."""
    batch = EncodedBatch(
        token_ids=encoded.token_ids[None, :],
        segment_ids=encoded.segment_ids[None, :],
        attention_mask=encoded.attention_mask[None, :],
    )
    return float(score_batch(params, batch)[0])


def score_batch(params: ModelParams, batch: EncodedBatch) -> np.ndarray:
    logits, _ = forward(params, batch, train_mode=False)
    return softmax(logits, axis=-1)[:, 1]


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean -log softmax(logits)[label], via log-sum-exp."""
    m = logits.max(axis=-1, keepdims=True)
    log_z = m[:, 0] + np.log(np.exp(logits - m).sum(axis=-1))
    picked = logits[np.arange(len(labels)), labels]
    return float(np.mean(log_z - picked))


def compute_loss(params: ModelParams, batch: EncodedBatch, labels: np.ndarray) -> float:
    """Eval-mode mean cross-entropy without gradients (finite-difference probes)."""
    logits, _, _ = _forward(params, batch, train_mode=False, dropout_rng=None, need_cache=False)
    return cross_entropy(logits, np.asarray(labels, dtype=np.int64))


def loss_and_gradients(
    params: ModelParams,
    batch: EncodedBatch,
    labels: np.ndarray,
    train_mode: bool = False,
    dropout_rng: Optional[np.random.Generator] = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy and exact gradients for every parameter tensor.

    With a dropout_rng the masks drawn in the forward pass are reused in the
    backward pass, so the gradient is exact for the sampled sub-network.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() > 1:
        raise ValueError("labels must be 0 or 1")
    cfg = params.config
    t = params.tensors
    logits, cls, cache = _forward(params, batch, train_mode, dropout_rng, need_cache=True)
    B = logits.shape[0]
    loss = cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")

    probs = softmax(logits, axis=-1)
    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B

    grads = {name: np.zeros_like(arr) for name, arr in t.items()}
    grads["cls.w"] += cls.T @ dlogits
    grads["cls.b"] += dlogits.sum(axis=0)
    dcls = dlogits @ t["cls.w"].T

    T_eff = cache["t_eff"]
    H, A, D = cfg.hidden_size, cfg.num_heads, cfg.head_dim
    dX = np.zeros((B, T_eff, H))
    dX[:, 0, :] = dcls

    for i in reversed(range(cfg.num_layers)):
        p = f"l{i}."
        lc = cache["layers"][i]
        dA2, dg2, db2 = _ln_backward(dX, t[p + "ln2.g"], lc["ln2"])
        grads[p + "ln2.g"] += dg2
        grads[p + "ln2.b"] += db2
        dX1 = dA2.copy()
        dFo = _apply(dA2, lc["f_mask"])
        grads[p + "ff.w2"] += lc["G"].reshape(-1, cfg.feed_forward_size).T @ dFo.reshape(-1, H)
        grads[p + "ff.b2"] += dFo.sum(axis=(0, 1))
        dG = dFo @ t[p + "ff.w2"].T
        dU = dG * gelu_grad(lc["U"])
        grads[p + "ff.w1"] += lc["X1"].reshape(-1, H).T @ dU.reshape(-1, cfg.feed_forward_size)
        grads[p + "ff.b1"] += dU.sum(axis=(0, 1))
        dX1 += dU @ t[p + "ff.w1"].T

        dA1, dg1, db1 = _ln_backward(dX1, t[p + "ln1.g"], lc["ln1"])
        grads[p + "ln1.g"] += dg1
        grads[p + "ln1.b"] += db1
        dXin = dA1.copy()
        dO = _apply(dA1, lc["o_mask"])
        grads[p + "attn.wo"] += lc["C"].reshape(-1, H).T @ dO.reshape(-1, H)
        grads[p + "attn.bo"] += dO.sum(axis=(0, 1))
        dC = dO @ t[p + "attn.wo"].T
        dCh = dC.reshape(B, T_eff, A, D).transpose(0, 2, 1, 3)
        dPd = dCh @ lc["Vh"].swapaxes(-1, -2)
        dVh = lc["Pd"].swapaxes(-1, -2) @ dCh
        dP = _apply(dPd, lc["p_mask"])
        P = lc["P"]
        dS = P * (dP - (dP * P).sum(axis=-1, keepdims=True))
        dQh = dS @ lc["Kh"] * cache["scale"]
        dKh = dS.swapaxes(-1, -2) @ lc["Qh"] * cache["scale"]
        dQ = dQh.transpose(0, 2, 1, 3).reshape(B, T_eff, H)
        dK = dKh.transpose(0, 2, 1, 3).reshape(B, T_eff, H)
        dV = dVh.transpose(0, 2, 1, 3).reshape(B, T_eff, H)
        Xin = lc["Xin"]
        flatX = Xin.reshape(-1, H)
        grads[p + "attn.wq"] += flatX.T @ dQ.reshape(-1, H)
        grads[p + "attn.bq"] += dQ.sum(axis=(0, 1))
        grads[p + "attn.wk"] += flatX.T @ dK.reshape(-1, H)
        grads[p + "attn.bk"] += dK.sum(axis=(0, 1))
        grads[p + "attn.wv"] += flatX.T @ dV.reshape(-1, H)
        grads[p + "attn.bv"] += dV.sum(axis=(0, 1))
        dXin += dQ @ t[p + "attn.wq"].T + dK @ t[p + "attn.wk"].T + dV @ t[p + "attn.wv"].T
        dX = dXin

    dE = _apply(dX, cache["emb_mask"])
    scatter_add_rows(grads["tok_emb"], cache["ids"].reshape(-1), dE.reshape(-1, H))
    grads["pos_emb"][:T_eff] += dE.sum(axis=0)
    scatter_add_rows(grads["seg_emb"], cache["segs"].reshape(-1), dE.reshape(-1, H))
    return loss, grads
