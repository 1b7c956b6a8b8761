"""Learned per-link utility estimators.

Two estimators map a network snapshot (graph, q, r) to one scalar score per
link, consumed by the greedy solver:

* ``gcn``: mean aggregation over closed neighborhoods, dense + ReLU per
  layer, linear head.
* ``transgnn``: per-vertex candidate sets (interference neighbors plus
  sampled long-range vertices), multi-head attention with residual and
  layer norm, feedforward block with residual, linear head.  Structural
  positional encodings (degree + random-walk return probabilities) can be
  appended to the input features.

Both are permutation equivariant and differentiable end to end; the
candidate-set selection itself is discrete, so the bilinear sampling score
receives zero analytic gradient and is trained by the zeroth-order loop
like everything else.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .graphs import ConflictGraph
from .nn import Params
from .solver import solve

__all__ = [
    "ModelConfig",
    "node_features",
    "positional_encoding",
    "attention_sampling",
    "build_features",
    "init_params",
    "utilities",
    "gcn_utilities",
    "transgnn_utilities",
    "utilities_with_grad",
    "make_policy",
    "save_model",
    "load_model",
]

VARIANTS = ("gcn", "transgnn")

FF_WIDTH = 2  # feedforward block width multiplier


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "transgnn"
    attention_sampling: bool = True
    positional_encoding: bool = True
    hidden_dim: int = 16
    num_layers: int = 2
    num_heads: int = 2
    sample_k: int = 8
    pe_dim: int = 8
    rate_cap: float = 100.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.variant == "transgnn":
            if self.num_heads < 1 or self.hidden_dim % self.num_heads != 0:
                raise ValueError(
                    f"num_heads={self.num_heads} must divide hidden_dim={self.hidden_dim}"
                )
            if self.sample_k < 1:
                raise ValueError("sample_k must be >= 1")
            if self.pe_dim < 1:
                raise ValueError("pe_dim must be >= 1")

    @property
    def feature_dim(self) -> int:
        base = 3
        if self.variant == "transgnn" and self.positional_encoding:
            base += self.pe_dim
        return base

    def to_meta(self) -> dict:
        return {k: v for k, v in asdict(self).items()}

    @staticmethod
    def from_meta(meta: dict) -> "ModelConfig":
        def as_bool(s):
            return str(s).strip().lower() in ("true", "1", "yes")
        return ModelConfig(
            variant=str(meta["variant"]),
            attention_sampling=as_bool(meta["attention_sampling"]),
            positional_encoding=as_bool(meta["positional_encoding"]),
            hidden_dim=int(meta["hidden_dim"]),
            num_layers=int(meta["num_layers"]),
            num_heads=int(meta["num_heads"]),
            sample_k=int(meta["sample_k"]),
            pe_dim=int(meta["pe_dim"]),
            rate_cap=float(meta["rate_cap"]),
        )


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def node_features(graph: ConflictGraph, q, r, q_scale=None, rate_cap: float = 100.0):
    """Per-vertex rows [q norm, r norm, degree norm].

    q is normalized by q_scale (callers keep a running per-episode max,
    floored at 1), r by its hard cap, degree by n-1.
    """
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    scale = max(1.0, float(q.max()) if q_scale is None else float(q_scale))
    deg = graph.degrees().astype(np.float64)
    feats = np.stack(
        [q / scale, r / rate_cap, deg / max(graph.n - 1, 1)], axis=1
    )
    if not np.isfinite(feats).all():
        raise ValueError("node features contain NaN or infinite entries")
    return feats


def positional_encoding(graph: ConflictGraph, dim: int) -> np.ndarray:
    """Structure-only per-vertex encoding.

    Column 0 is the normalized degree; columns 1..dim-1 hold the k-step
    random-walk return probabilities on the degree-normalized adjacency.
    Isolated vertices encode as all zeros.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = graph.n
    deg = graph.degrees().astype(np.float64)
    enc = np.zeros((n, dim))
    enc[:, 0] = deg / max(n - 1, 1)
    if dim == 1:
        return enc
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.where(deg[:, None] > 0, graph.adj / np.maximum(deg[:, None], 1.0), 0.0)
    M = np.eye(n)
    for k in range(1, dim):
        M = M @ P
        enc[:, k] = np.diag(M)
    return enc


def attention_sampling(
    graph: ConflictGraph, features: np.ndarray, B: np.ndarray, k: int
) -> np.ndarray:
    """Boolean candidate mask: mask[v, w] lets v attend to w.

    Every vertex always attends to itself and its full 1-hop neighborhood
    (interference neighbors can never be sampled away).  Remaining budget
    up to k total targets is filled with the non-neighbors scoring highest
    under the ReLU-gated bilinear similarity relu(f_v B f_w).  The gate is
    strict: non-positive similarity means "not relevant" and such vertices
    are never sampled, which keeps the selection label-free (the id
    tie-break below only ever decides exact score collisions).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = graph.n
    mask = graph.adj.copy()
    np.fill_diagonal(mask, True)
    budget_total = min(k, n)
    scores = nn.relu(features @ B @ features.T)
    ids = np.arange(n)
    for v in range(n):
        fill = budget_total - 1 - len(graph.neighbors[v])
        if fill <= 0:
            continue
        nonnb = ids[~mask[v]]
        if fill >= nonnb.size:
            mask[v, nonnb] = True  # budget covers everything: saturate
            continue
        eligible = nonnb[scores[v, nonnb] > 0.0]
        if eligible.size == 0:
            continue
        order = np.lexsort((eligible, -scores[v, eligible]))
        mask[v, eligible[order[:fill]]] = True
    return mask


def build_features(graph, q, r, config: ModelConfig, q_scale=None, pe=None):
    feats = node_features(graph, q, r, q_scale=q_scale, rate_cap=config.rate_cap)
    if config.variant == "transgnn" and config.positional_encoding:
        if pe is None:
            pe = positional_encoding(graph, config.pe_dim)
        feats = np.concatenate([feats, pe], axis=1)
    return feats


def _candidate_mask(graph, feats, params, config: ModelConfig):
    if config.attention_sampling:
        return attention_sampling(graph, feats, params["sampler.B"], config.sample_k)
    mask = graph.adj.copy()
    np.fill_diagonal(mask, True)
    return mask


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------

def init_params(config: ModelConfig, rng: np.random.Generator) -> Params:
    """Parameter dict in the fixed order that defines the flat view."""
    h = config.hidden_dim
    F = config.feature_dim
    params: Params = {}

    def dense(name, din, dout):
        params[f"{name}.W"] = rng.normal(0.0, 1.0 / np.sqrt(din), size=(din, dout))
        params[f"{name}.b"] = np.zeros(dout)

    if config.variant == "gcn":
        din = F
        for i in range(config.num_layers):
            dense(f"layer{i}", din, h)
            din = h
        dense("head", h, 1)
        return params

    if config.attention_sampling:
        params["sampler.B"] = rng.normal(0.0, 1.0 / F, size=(F, F))
    dense("input", F, h)
    for i in range(config.num_layers):
        for nm in ("Wq", "Wk", "Wv", "Wo"):
            params[f"layer{i}.attn.{nm}"] = rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, h))
        params[f"layer{i}.attn.bo"] = np.zeros(h)
        params[f"layer{i}.ln.g"] = np.ones(h)
        params[f"layer{i}.ln.b"] = np.zeros(h)
        dense(f"layer{i}.ff1", h, FF_WIDTH * h)
        dense(f"layer{i}.ff2", FF_WIDTH * h, h)
    dense("head", h, 1)
    return params


# ---------------------------------------------------------------------------
# GCN forward / backward
# ---------------------------------------------------------------------------

def _gcn_norm(graph: ConflictGraph) -> np.ndarray:
    # mean over the closed neighborhood {v} u N(v)
    A = graph.adj.astype(np.float64) + np.eye(graph.n)
    return A / A.sum(axis=1, keepdims=True)

def _gcn_forward(graph, feats, params, config):
    Anorm = _gcn_norm(graph)
    H = feats
    caches = []
    for i in range(config.num_layers):
        Z = Anorm @ H
        Y = nn.dense_forward(Z, params[f"layer{i}.W"], params[f"layer{i}.b"])
        caches.append((H, Z, Y))
        H = nn.relu(Y)
    u = nn.dense_forward(H, params["head.W"], params["head.b"])[:, 0]
    return u, (Anorm, caches, H)


def _gcn_backward(graph, params, config, cache, du):
    Anorm, caches, H_last = cache
    grads: Params = {}
    dH, dWh, dbh = nn.dense_backward(H_last, params["head.W"], du[:, None])
    grads["head.W"] = dWh
    grads["head.b"] = dbh
    for i in reversed(range(config.num_layers)):
        H_in, Z, Y = caches[i]
        dY = nn.relu_backward(Y, dH)
        dZ, dW, db = nn.dense_backward(Z, params[f"layer{i}.W"], dY)
        grads[f"layer{i}.W"] = dW
        grads[f"layer{i}.b"] = db
        dH = Anorm.T @ dZ
    return grads


# ---------------------------------------------------------------------------
# TransGNN forward / backward
# ---------------------------------------------------------------------------

def _split_heads(X, nh):
    dh = X.shape[1] // nh
    return [X[:, i * dh:(i + 1) * dh] for i in range(nh)]


def _transgnn_forward(graph, feats, params, config: ModelConfig, mask):
    X = nn.dense_forward(feats, params["input.W"], params["input.b"])
    layer_caches = []
    for i in range(config.num_layers):
        p = lambda nm: params[f"layer{i}.{nm}"]
        Q = X @ p("attn.Wq")
        K = X @ p("attn.Wk")
        V = X @ p("attn.Wv")
        head_caches = []
        outs = []
        for Qh, Kh, Vh in zip(*(_split_heads(M, config.num_heads) for M in (Q, K, V))):
            Oh, ch = nn.attention_forward(Qh, Kh, Vh, mask)
            outs.append(Oh)
            head_caches.append(ch)
        C = np.concatenate(outs, axis=1)
        O = C @ p("attn.Wo") + p("attn.bo")
        X1, ln_cache = nn.layer_norm_forward(X + O, p("ln.g"), p("ln.b"))
        Y1 = nn.dense_forward(X1, p("ff1.W"), p("ff1.b"))
        F1 = nn.relu(Y1)
        F2 = nn.dense_forward(F1, p("ff2.W"), p("ff2.b"))
        layer_caches.append((X, Q, K, V, head_caches, C, ln_cache, X1, Y1, F1))
        X = X1 + F2
    u = nn.dense_forward(X, params["head.W"], params["head.b"])[:, 0]
    return u, (feats, layer_caches, X)


def _transgnn_backward(graph, params, config: ModelConfig, cache, du):
    feats, layer_caches, X_last = cache
    nh = config.num_heads
    grads: Params = {}
    dX, dWh, dbh = nn.dense_backward(X_last, params["head.W"], du[:, None])
    grads["head.W"] = dWh
    grads["head.b"] = dbh
    for i in reversed(range(config.num_layers)):
        X_in, Q, K, V, head_caches, C, ln_cache, X1, Y1, F1 = layer_caches[i]
        key = lambda nm: f"layer{i}.{nm}"
        # X_out = X1 + F2
        dX1 = dX.copy()
        dF2 = dX
        dF1, dW2, db2 = nn.dense_backward(F1, params[key("ff2.W")], dF2)
        grads[key("ff2.W")] = dW2
        grads[key("ff2.b")] = db2
        dY1 = nn.relu_backward(Y1, dF1)
        dX1_ff, dW1, db1 = nn.dense_backward(X1, params[key("ff1.W")], dY1)
        grads[key("ff1.W")] = dW1
        grads[key("ff1.b")] = db1
        dX1 += dX1_ff
        dZ, dg, dbeta = nn.layer_norm_backward(ln_cache, dX1)
        grads[key("ln.g")] = dg
        grads[key("ln.b")] = dbeta
        # Z = X_in + O
        dO = dZ
        dC = dO @ params[key("attn.Wo")].T
        grads[key("attn.Wo")] = C.T @ dO
        grads[key("attn.bo")] = dO.sum(axis=0)
        dQ = np.zeros_like(Q)
        dK = np.zeros_like(K)
        dV = np.zeros_like(V)
        dh = Q.shape[1] // nh
        for hidx, ch in enumerate(head_caches):
            sl = slice(hidx * dh, (hidx + 1) * dh)
            dQh, dKh, dVh = nn.attention_backward(ch, dC[:, sl])
            dQ[:, sl] = dQh
            dK[:, sl] = dKh
            dV[:, sl] = dVh
        grads[key("attn.Wq")] = X_in.T @ dQ
        grads[key("attn.Wk")] = X_in.T @ dK
        grads[key("attn.Wv")] = X_in.T @ dV
        dX = dZ + dQ @ params[key("attn.Wq")].T \
            + dK @ params[key("attn.Wk")].T \
            + dV @ params[key("attn.Wv")].T
    dFeats, dWin, dbin = nn.dense_backward(feats, params["input.W"], dX)
    grads["input.W"] = dWin
    grads["input.b"] = dbin
    if config.attention_sampling:
        # candidate selection is discrete; the sampler only reroutes attention
        grads["sampler.B"] = np.zeros_like(params["sampler.B"])
    return grads


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _forward(graph, q, r, params, config, q_scale=None, pe=None):
    feats = build_features(graph, q, r, config, q_scale=q_scale, pe=pe)
    if config.variant == "gcn":
        return _gcn_forward(graph, feats, params, config), None
    mask = _candidate_mask(graph, feats, params, config)
    return _transgnn_forward(graph, feats, params, config, mask), mask


def utilities(graph, q, r, params: Params, config: ModelConfig,
              q_scale=None, pe=None) -> np.ndarray:
    """One utility score per vertex for the current snapshot."""
    (u, _), _ = _forward(graph, q, r, params, config, q_scale=q_scale, pe=pe)
    if not np.isfinite(u).all():
        raise FloatingPointError("utility estimator produced non-finite scores")
    return u


def gcn_utilities(graph, q, r, params, config, q_scale=None):
    if config.variant != "gcn":
        raise ValueError("config.variant must be 'gcn'")
    return utilities(graph, q, r, params, config, q_scale=q_scale)


def transgnn_utilities(graph, q, r, params, config, q_scale=None, pe=None):
    if config.variant != "transgnn":
        raise ValueError("config.variant must be 'transgnn'")
    return utilities(graph, q, r, params, config, q_scale=q_scale, pe=pe)


def utilities_with_grad(graph, q, r, params, config, dout, q_scale=None, pe=None):
    """Utilities plus analytic parameter gradients of dout . u."""
    (u, cache), mask = _forward(graph, q, r, params, config, q_scale=q_scale, pe=pe)
    if config.variant == "gcn":
        grads = _gcn_backward(graph, params, config, cache, dout)
    else:
        grads = _transgnn_backward(graph, params, config, cache, dout)
    return u, grads


def mean_utility_fn(graph, q, r, config, q_scale=None, pe=None):
    """Closure params -> (mean utility, grads); grad_check entry point."""
    n = graph.n
    dout = np.full(n, 1.0 / n)

    def f(params):
        u, grads = utilities_with_grad(graph, q, r, params, config, dout,
                                       q_scale=q_scale, pe=pe)
        return float(u.mean()), grads

    return f


def make_policy(config: ModelConfig, params: Params):
    """Scheduling policy driving the greedy solver with model utilities.

    Keeps a running per-episode maximum of the queue vector for feature
    normalization; the cache resets when a different graph object shows
    up, so build one policy per episode.
    """
    ctx = {"graph": None, "pe": None, "qmax": 1.0}

    def policy(graph: ConflictGraph, q, r):
        if ctx["graph"] is not graph:
            ctx["graph"] = graph
            ctx["qmax"] = 1.0
            if config.variant == "transgnn" and config.positional_encoding:
                ctx["pe"] = positional_encoding(graph, config.pe_dim)
            else:
                ctx["pe"] = None
        ctx["qmax"] = max(ctx["qmax"], float(np.max(q)))
        u = utilities(graph, q, r, params, config, q_scale=ctx["qmax"], pe=ctx["pe"])
        return solve(graph, u).members

    return policy


def save_model(path, params: Params, config: ModelConfig, extra_meta: dict | None = None):
    meta = config.to_meta()
    if extra_meta:
        meta.update(extra_meta)
    nn.save_checkpoint(path, params, meta)


def load_model(path) -> tuple[Params, ModelConfig, dict]:
    params, meta = nn.load_checkpoint(path)
    config = ModelConfig.from_meta(meta)
    expected = init_params(config, np.random.default_rng(0))
    if [(k, v.shape) for k, v in expected.items()] != [(k, v.shape) for k, v in params.items()]:
        raise ValueError(f"{path}: checkpoint tensors do not match architecture {config.variant}")
    return params, config, meta
