"""The performance predictor: two attention branches and a scoring head.

A cell is encoded twice. The node branch runs a small GIN over the DAG
(one-hot op features, symmetrized neighborhoods), lifts node embeddings to
the attention width, and pools them with a global-context attention into a
graph feature map. The path branch embeds the cell's sorted path-id tokens
and runs one transformer encoder block over them (PAD keys masked out),
mean-pooling the valid positions. The two feature maps concatenate into
the soft encoding, which the Concat/Project/Full/Score head maps to a
sigmoid score in [0, 1].

The soft encoder spans input to the concat boundary; pretraining only ever
produces gradients there, fine-tuning reaches the head as well.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, no_grad, take_rows
from .errors import CheckpointError, ParameterError, PathLookupError, StateError
from .paths import PathTable, encode_architecture, path_id_sequence
from .space import Architecture, SearchSpace, structural_digest

CHECKPOINT_MAGIC = "pathnas-checkpoint"
CHECKPOINT_VERSION = 1

_NEG_INF = -1e30


@dataclass(frozen=True)
class PredictorConfig:
    """Dimensions and seed of one predictor instance.

    ``node_dim`` doubles as the node-branch feature-map width, so it must
    equal ``feature_dim``; the soft encoding length is ``2 * feature_dim``.
    """

    num_node_features: int
    table_size: int
    seq_len: int
    gin_dim: int = 8
    gin_layers: int = 3
    node_dim: int = 16
    token_dim: int = 64  # benchmark-scale runs select 128 via config
    feature_dim: int = 16
    heads: int = 4
    ff_mult: int = 4
    seed: int = 0

    def __post_init__(self):
        problems = []
        for name in ("num_node_features", "table_size", "seq_len", "gin_dim",
                     "gin_layers", "node_dim", "token_dim", "feature_dim",
                     "heads", "ff_mult"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        if self.node_dim != self.feature_dim:
            problems.append("node_dim must equal feature_dim (graph pooling is the node feature map)")
        if self.token_dim % self.heads != 0:
            problems.append("token_dim must be divisible by heads")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def soft_len(self) -> int:
        return 2 * self.feature_dim


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _build_params(cfg: PredictorConfig) -> dict[str, Tensor]:
    """Parameter tensors in the documented fixed (checkpoint) order."""
    rng = np.random.default_rng(cfg.seed)
    p: dict[str, np.ndarray] = {}
    in_dim = cfg.num_node_features
    for m in range(cfg.gin_layers):
        p[f"gin{m}.w1"] = _uniform(rng, in_dim, (in_dim, cfg.gin_dim))
        p[f"gin{m}.b1"] = _uniform(rng, in_dim, (cfg.gin_dim,))
        p[f"gin{m}.w2"] = _uniform(rng, cfg.gin_dim, (cfg.gin_dim, cfg.gin_dim))
        p[f"gin{m}.b2"] = _uniform(rng, cfg.gin_dim, (cfg.gin_dim,))
        p[f"gin{m}.eps"] = np.zeros(())
        in_dim = cfg.gin_dim
    p["lift.w"] = _uniform(rng, cfg.gin_dim, (cfg.gin_dim, cfg.node_dim))
    p["lift.b"] = _uniform(rng, cfg.gin_dim, (cfg.node_dim,))
    p["context.w"] = _uniform(rng, cfg.node_dim, (cfg.node_dim, cfg.node_dim))
    p["token.table"] = _uniform(rng, cfg.token_dim, (cfg.table_size + 1, cfg.token_dim))
    de = cfg.token_dim
    for name in ("wq", "wk", "wv", "wo"):
        p[f"attn.{name}"] = _uniform(rng, de, (de, de))
        p[f"attn.b{name[1]}"] = _uniform(rng, de, (de,))
    p["attn.ln1.g"] = np.ones(de)
    p["attn.ln1.b"] = np.zeros(de)
    p["attn.ff.w1"] = _uniform(rng, de, (de, cfg.ff_mult * de))
    p["attn.ff.b1"] = _uniform(rng, de, (cfg.ff_mult * de,))
    p["attn.ff.w2"] = _uniform(rng, cfg.ff_mult * de, (cfg.ff_mult * de, de))
    p["attn.ff.b2"] = _uniform(rng, cfg.ff_mult * de, (de,))
    p["attn.ln2.g"] = np.ones(de)
    p["attn.ln2.b"] = np.zeros(de)
    p["pool.w"] = _uniform(rng, de, (de, cfg.feature_dim))
    p["pool.b"] = _uniform(rng, de, (cfg.feature_dim,))
    p["head.project.w"] = _uniform(rng, cfg.soft_len, (cfg.soft_len, cfg.feature_dim))
    p["head.project.b"] = _uniform(rng, cfg.soft_len, (cfg.feature_dim,))
    p["head.full.w"] = _uniform(rng, cfg.feature_dim, (cfg.feature_dim, cfg.feature_dim))
    p["head.full.b"] = _uniform(rng, cfg.feature_dim, (cfg.feature_dim,))
    p["head.score.w"] = _uniform(rng, cfg.feature_dim, (cfg.feature_dim, 1))
    p["head.score.b"] = _uniform(rng, cfg.feature_dim, (1,))
    return {k: Tensor(v, requires_grad=True) for k, v in p.items()}


def _softmax_last(t: Tensor) -> Tensor:
    shift = t.max_const(axis=-1, keepdims=True)
    e = (t - Tensor(shift)).exp()
    return e / e.sum(axis=-1, keepdims=True)


def _layer_norm(x: Tensor, g: Tensor, b: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc / ((var + eps) ** 0.5) * g + b


@dataclass
class _ArchFeatures:
    node_feat: np.ndarray  # [V, F] one-hot ops (+input/output sentinels)
    adj_sym: np.ndarray    # [V, V] symmetrized adjacency
    n_nodes: int
    token_ids: np.ndarray  # [L] table row indices (PAD already mapped)
    token_valid: np.ndarray  # [L] bool, False at PAD


class Predictor:
    """Predictor model bound to one search space and its path table."""

    def __init__(self, config: PredictorConfig, space: SearchSpace, table: PathTable):
        if config.table_size != len(table):
            raise ParameterError(
                f"config.table_size {config.table_size} != path table size {len(table)}"
            )
        if config.seq_len != space.seq_cap:
            raise ParameterError(
                f"config.seq_len {config.seq_len} != space.seq_cap {space.seq_cap}"
            )
        if config.num_node_features != len(space.op_set) + 2:
            raise ParameterError(
                "config.num_node_features must be |op_set| + 2 (input/output sentinels)"
            )
        self.config = config
        self.space = space
        self.table = table
        self.params = _build_params(config)
        self._feature_cache: dict[str, _ArchFeatures] = {}

    # -- featurization ---------------------------------------------------------

    def _map_token_ids(self, raw_ids: np.ndarray) -> np.ndarray:
        out = np.empty_like(raw_ids)
        for i, pid in enumerate(raw_ids):
            if pid == self.table.pad_id:
                out[i] = self.config.table_size
            elif 0 <= pid < self.config.table_size:
                out[i] = pid
            else:
                raise PathLookupError(f"token id {pid} not in table and not PAD")
        return out

    def _featurize(self, arch: Architecture) -> _ArchFeatures:
        key = structural_digest(arch)
        hit = self._feature_cache.get(key)
        if hit is not None:
            return hit
        ops = self.space.op_set
        n = arch.n_nodes
        feat = np.zeros((n, len(ops) + 2))
        feat[0, len(ops)] = 1.0
        feat[n - 1, len(ops) + 1] = 1.0
        for i, op in enumerate(arch.node_ops[1:-1], start=1):
            feat[i, ops.index(op)] = 1.0
        adj = arch.adjacency.astype(np.float64)
        raw_ids = path_id_sequence(arch, self.space, self.table)
        fa = _ArchFeatures(
            node_feat=feat,
            adj_sym=adj + adj.T,
            n_nodes=n,
            token_ids=self._map_token_ids(raw_ids),
            token_valid=raw_ids != self.table.pad_id,
        )
        self._feature_cache[key] = fa
        return fa

    def _batch_arrays(self, archs: list[Architecture]):
        feats = [self._featurize(a) for a in archs]
        b = len(feats)
        vmax = max(f.n_nodes for f in feats)
        fdim = self.config.num_node_features
        node_feat = np.zeros((b, vmax, fdim))
        adj = np.zeros((b, vmax, vmax))
        mask = np.zeros((b, vmax, 1))
        for i, f in enumerate(feats):
            v = f.n_nodes
            node_feat[i, :v] = f.node_feat
            adj[i, :v, :v] = f.adj_sym
            mask[i, :v, 0] = 1.0
        ids = np.stack([f.token_ids for f in feats])
        valid = np.stack([f.token_valid for f in feats])
        return node_feat, adj, mask, ids, valid

    # -- forward passes ----------------------------------------------------------

    def _gin_stack(self, h: Tensor, adj: Tensor, mask: Tensor) -> Tensor:
        p = self.params
        for m in range(self.config.gin_layers):
            agg = (p[f"gin{m}.eps"] + 1.0) * h + adj @ h
            hidden = (agg @ p[f"gin{m}.w1"] + p[f"gin{m}.b1"]).relu()
            h = (hidden @ p[f"gin{m}.w2"] + p[f"gin{m}.b2"]) * mask
        return h

    def _attention_pool(self, hn: Tensor, mask: np.ndarray) -> Tensor:
        """Global-context attention over lifted node embeddings [B,V,D] -> [B,D]."""
        p = self.params
        counts = mask.sum(axis=1)  # [B,1] true node counts
        summed = hn.sum(axis=1)  # [B,D]
        ctx = ((summed @ p["context.w"].swapaxes(0, 1)) * Tensor(1.0 / counts)).tanh()
        att = (hn @ ctx.reshape(ctx.shape[0], ctx.shape[1], 1)).sigmoid() * Tensor(mask)
        return (att * hn).sum(axis=1)

    def _node_branch(self, node_feat, adj, mask) -> Tensor:
        p = self.params
        h = self._gin_stack(Tensor(node_feat), Tensor(adj), Tensor(mask))
        hn = (h @ p["lift.w"] + p["lift.b"]) * Tensor(mask)
        return self._attention_pool(hn, mask)  # [B,D] == FM_n

    def _path_branch(self, ids, valid, want_attention: bool = False):
        p = self.params
        cfg = self.config
        b, L = ids.shape
        de, h = cfg.token_dim, cfg.heads
        dh = de // h
        e = take_rows(p["token.table"], ids)  # [B,L,De]
        q = (e @ p["attn.wq"] + p["attn.bq"]).reshape(b, L, h, dh).swapaxes(1, 2)
        k = (e @ p["attn.wk"] + p["attn.bk"]).reshape(b, L, h, dh).swapaxes(1, 2)
        v = (e @ p["attn.wv"] + p["attn.bv"]).reshape(b, L, h, dh).swapaxes(1, 2)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))  # [B,h,L,L]
        key_bias = np.where(valid, 0.0, _NEG_INF)[:, None, None, :]
        attn = _softmax_last(scores + Tensor(key_bias))
        ctx = (attn @ v).swapaxes(1, 2).reshape(b, L, de)
        x = _layer_norm(e + (ctx @ p["attn.wo"] + p["attn.bo"]),
                        p["attn.ln1.g"], p["attn.ln1.b"])
        ff = (x @ p["attn.ff.w1"] + p["attn.ff.b1"]).relu() @ p["attn.ff.w2"] + p["attn.ff.b2"]
        x = _layer_norm(x + ff, p["attn.ln2.g"], p["attn.ln2.b"])  # [B,L,De]
        pool = valid.astype(np.float64)
        empty = ~valid.any(axis=1)
        pool[empty] = 1.0  # an all-PAD row pools over every position
        pooled = (x * Tensor(pool[:, :, None])).sum(axis=1) * Tensor(
            1.0 / pool.sum(axis=1, keepdims=True)
        )
        fm_p = pooled @ p["pool.w"] + p["pool.b"]
        if want_attention:
            return fm_p, attn
        return fm_p

    def _head(self, soft: Tensor) -> Tensor:
        p = self.params
        proj = (soft @ p["head.project.w"] + p["head.project.b"]).relu()
        full = proj @ p["head.full.w"] + p["head.full.b"]
        logit = full @ p["head.score.w"] + p["head.score.b"]
        return logit.sigmoid().reshape(logit.shape[0])

    def forward_soft_t(self, archs: list[Architecture]) -> Tensor:
        """Soft encodings (concat-layer activations) with graph recording."""
        node_feat, adj, mask, ids, valid = self._batch_arrays(archs)
        fm_n = self._node_branch(node_feat, adj, mask)
        fm_p = self._path_branch(ids, valid)
        return concat([fm_n, fm_p], axis=-1)

    def forward_scores_t(self, archs: list[Architecture]) -> Tensor:
        return self._head(self.forward_soft_t(archs))

    def soft_encodings(self, archs: list[Architecture]) -> np.ndarray:
        with no_grad():
            return self.forward_soft_t(archs).data

    def scores(self, archs: list[Architecture]) -> np.ndarray:
        with no_grad():
            return self.forward_scores_t(archs).data

    # -- gradient bookkeeping -------------------------------------------------------

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None

    def collect_grads(self) -> dict[str, np.ndarray]:
        """Gradient bundle after a backward pass; zeros for untouched groups."""
        if all(p.grad is None for p in self.params.values()):
            raise StateError("no gradients recorded; run a forward pass and backward() first")
        return {
            k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
            for k, p in self.params.items()
        }

    def soft_encoder_param_names(self) -> list[str]:
        return [k for k in self.params if not k.startswith("head.")]

    # -- persistence -------------------------------------------------------------

    def save(self, path) -> None:
        """Versioned binary container: JSON header line + raw float64 arrays."""
        header = {
            "magic": CHECKPOINT_MAGIC,
            "version": CHECKPOINT_VERSION,
            "config": {
                "num_node_features": self.config.num_node_features,
                "table_size": self.config.table_size,
                "seq_len": self.config.seq_len,
                "gin_dim": self.config.gin_dim,
                "gin_layers": self.config.gin_layers,
                "node_dim": self.config.node_dim,
                "token_dim": self.config.token_dim,
                "feature_dim": self.config.feature_dim,
                "heads": self.config.heads,
                "ff_mult": self.config.ff_mult,
                "seed": self.config.seed,
            },
            "params": [
                {"name": k, "shape": list(p.data.shape)} for k, p in self.params.items()
            ],
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            for p in self.params.values():
                fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, space: SearchSpace, table: PathTable) -> "Predictor":
        with open(path, "rb") as fh:
            header_line = fh.readline()
            blob = fh.read()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise CheckpointError("not a predictor checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
        cfg = PredictorConfig(**header["config"])
        model = cls(cfg, space, table)
        offset = 0
        for spec in header["params"]:
            name, shape = spec["name"], tuple(spec["shape"])
            if name not in model.params or model.params[name].data.shape != shape:
                raise CheckpointError(f"parameter {name} {shape} does not match model")
            size = int(np.prod(shape)) if shape else 1
            chunk = blob[offset : offset + 8 * size]
            if len(chunk) != 8 * size:
                raise CheckpointError("checkpoint truncated")
            model.params[name].data = (
                np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
            )
            offset += 8 * size
        if offset != len(blob):
            raise CheckpointError("trailing bytes in checkpoint")
        return model

    def clone(self) -> "Predictor":
        twin = Predictor(self.config, self.space, self.table)
        for k, p in self.params.items():
            twin.params[k].data = p.data.copy()
        return twin


# -- single-architecture views used by tests and notebooks ------------------------


def gin_forward(model: Predictor, arch: Architecture) -> np.ndarray:
    """Per-node embeddings after the GIN stack (before the lift), shape [V, gin_dim]."""
    node_feat, adj, mask, _, _ = model._batch_arrays([arch])
    with no_grad():
        h = model._gin_stack(Tensor(node_feat), Tensor(adj), Tensor(mask))
    return h.data[0]


def node_attention_pool(model: Predictor, node_embeds: np.ndarray) -> np.ndarray:
    """Context-attention pooling of lifted node embeddings into one graph vector."""
    h = np.asarray(node_embeds, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 1:
        raise ParameterError("node_embeds must be [v_s, D] with at least one node")
    with no_grad():
        pooled = model._attention_pool(Tensor(h[None]), np.ones((1, h.shape[0], 1)))
    return pooled.data[0]


def path_attention_forward(
    model: Predictor, path_ids, return_attention: bool = False
):
    """Path-branch feature map for one padded path-id sequence."""
    raw = np.asarray(path_ids, dtype=np.int64)
    if raw.shape != (model.config.seq_len,):
        raise ParameterError(f"expected {model.config.seq_len} padded ids, got {raw.shape}")
    ids = model._map_token_ids(raw)[None, :]
    valid = (raw != model.table.pad_id)[None, :]
    with no_grad():
        out = model._path_branch(ids, valid, want_attention=return_attention)
    if return_attention:
        fm_p, attn = out
        return fm_p.data[0], attn.data[0]
    return out.data[0]


def forward_embedding(model: Predictor, arch: Architecture) -> np.ndarray:
    return model.soft_encodings([arch])[0]


def forward_score(model: Predictor, arch: Architecture) -> float:
    return float(model.scores([arch])[0])


def hard_encoding(model: Predictor, arch: Architecture) -> np.ndarray:
    return encode_architecture(arch, model.space, model.table)


def default_config_for(
    space: SearchSpace, table: PathTable, *, seed: int = 0, **overrides
) -> PredictorConfig:
    """Config wired to a space/table pair, with keyword overrides."""
    base = dict(
        num_node_features=len(space.op_set) + 2,
        table_size=len(table),
        seq_len=space.seq_cap,
        seed=seed,
    )
    base.update(overrides)
    return PredictorConfig(**base)
