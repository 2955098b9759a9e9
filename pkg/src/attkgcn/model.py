"""Attention-weighted graph-convolutional item representations.

An item's representation is built from a sampled receptive field: each node
draws K edges, recursively, down to depth H. Edge weights combine a
user-relation score (inner product of user and relation embeddings) with an
optional attention logit computed from the raw embeddings of the edge's two
endpoints, normalized by one softmax over the K edges of each node. The field
is then folded inward H times; fold h applies aggregator weights (w_h, b_h)
with ReLU at inner folds and tanh at the outermost one. The interaction
probability is the sigmoid of the inner product between the user embedding
and the folded item vector.

Gradients are produced by a hand-derived backward pass over the recorded
forward intermediates rather than a general autodiff tape; the
finite-difference oracle in :mod:`attkgcn.numerics` guards the derivation.
Forward passes are pure given a parameter snapshot and an rng, so any number
may run concurrently over shared read-only parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kg import KnowledgeGraph
from .numerics import ParamStore, glorot_uniform, relu, sigmoid, softmax

AGGREGATORS = ("sum", "concat", "neighbor")


@dataclass(frozen=True)
class HyperParams:
    """All run-level knobs with their documented defaults."""

    k: int = 8  # neighbor sample size per node
    dim: int = 32  # embedding dimension
    depth: int = 2  # receptive-field depth (number of folds)
    l2: float = 1e-4  # L2 penalty weight over batch-touched parameters
    lr: float = 0.01  # Adam learning rate
    batch: int = 32
    aggregator: str = "sum"
    attention: bool = True
    seed: int = 1
    epochs: int = 20
    patience: int = 5  # epochs without validation-AUC improvement; 0 disables

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(
                f"unknown aggregator {self.aggregator!r}; valid: {', '.join(AGGREGATORS)}"
            )
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


def relation_score(u_vec: np.ndarray, r_vec: np.ndarray) -> float:
    """Inner product between a user vector and a relation vector."""
    u = np.asarray(u_vec, dtype=np.float64)
    r = np.asarray(r_vec, dtype=np.float64)
    if u.shape != r.shape or u.ndim != 1:
        raise ValueError(f"dimension mismatch: {u.shape} vs {r.shape}")
    return float(np.dot(u, r))


def attention_logit(
    e_v: np.ndarray,
    e_vi: np.ndarray,
    attn_w: np.ndarray,
    attn_b: np.ndarray,
    attn_h: np.ndarray,
) -> float:
    """Scalar relatedness of a node to one neighbor: h . relu(W [e_v, e_vi] + b)."""
    ev = np.asarray(e_v, dtype=np.float64)
    evi = np.asarray(e_vi, dtype=np.float64)
    if ev.shape != evi.shape or ev.ndim != 1:
        raise ValueError(f"dimension mismatch: {ev.shape} vs {evi.shape}")
    w = np.asarray(attn_w, dtype=np.float64)
    b = np.ravel(np.asarray(attn_b, dtype=np.float64))
    h = np.ravel(np.asarray(attn_h, dtype=np.float64))
    d = ev.shape[0]
    if w.shape != (d, 2 * d) or b.shape != (d,) or h.shape != (d,):
        raise ValueError(
            f"attention parameter shapes {w.shape}/{b.shape}/{h.shape} do not match dim {d}"
        )
    z = w @ np.concatenate([ev, evi]) + b
    return float(np.dot(h, relu(z)))


def neighborhood_repr(weights: np.ndarray, neighbor_vecs: np.ndarray) -> np.ndarray:
    """Convex combination of neighbor vectors; weights must sum to 1."""
    w = np.asarray(weights, dtype=np.float64)
    vecs = np.asarray(neighbor_vecs, dtype=np.float64)
    if w.ndim != 1 or vecs.ndim != 2 or vecs.shape[0] != w.shape[0]:
        raise ValueError(f"shape mismatch: weights {w.shape} vs vectors {vecs.shape}")
    return w @ vecs


def aggregate(kind: str, v_vec, n_vec, w, b, nonlin) -> np.ndarray:
    """Combine a node vector with its neighborhood vector.

    sum:      nonlin(w (v + n) + b)
    concat:   nonlin(w [v, n] + b)
    neighbor: nonlin(w n + b)
    """
    v = np.asarray(v_vec, dtype=np.float64)
    n = np.asarray(n_vec, dtype=np.float64)
    wmat = np.asarray(w, dtype=np.float64)
    bvec = np.ravel(np.asarray(b, dtype=np.float64))
    if kind == "sum":
        x = v + n
    elif kind == "concat":
        x = np.concatenate([v, n])
    elif kind == "neighbor":
        x = n
    else:
        raise ValueError(f"unknown aggregator kind {kind!r}; valid: {', '.join(AGGREGATORS)}")
    if wmat.shape[1] != x.shape[0] or wmat.shape[0] != bvec.shape[0]:
        raise ValueError(f"aggregator shapes w{wmat.shape}, b{bvec.shape} vs input {x.shape}")
    return nonlin(wmat @ x + bvec)


def init_params(
    hp: HyperParams,
    user_count: int,
    entity_count: int,
    relation_count: int,
    rng: np.random.Generator,
) -> ParamStore:
    """Fresh parameter tables: Glorot-uniform weights, zero biases.

    Attention tensors are always allocated so the attention on/off switch
    changes only the forward pass, never the parameter inventory.
    """
    d = hp.dim
    store = ParamStore()
    store.add("user_emb", glorot_uniform(rng, user_count, d))
    store.add("entity_emb", glorot_uniform(rng, entity_count, d))
    store.add("relation_emb", glorot_uniform(rng, relation_count, d))
    store.add("attn_w", glorot_uniform(rng, d, 2 * d))
    store.add("attn_b", np.zeros((1, d)))
    store.add("attn_h", glorot_uniform(rng, 1, d))
    in_dim = 2 * d if hp.aggregator == "concat" else d
    for hop in range(1, hp.depth + 1):
        store.add(f"agg_w_{hop}", glorot_uniform(rng, d, in_dim))
        store.add(f"agg_b_{hop}", np.zeros((1, d)))
    return store


@dataclass
class ForwardTape:
    """Recorded intermediates of one batched forward pass."""

    users: np.ndarray  # (B,)
    u_vecs: np.ndarray  # (B, d)
    ents: list  # level l -> (B, K**l) entity ids
    rels: list  # level l -> (B, K**l) edge relation ids; rels[0] is None
    pi: list  # level l -> (B, K**l, K) softmax edge weights, l < H
    attn_in: list  # level l -> (B, n, K, 2d) concat inputs, or None
    attn_z: list  # level l -> (B, n, K, d) pre-ReLU activations, or None
    attn_act: list  # level l -> ReLU(attn_z), or None
    reps: list  # reps[it][l] -> (B, K**l, d); reps[0] are raw embeddings
    nvecs: list  # nvecs[it][l] -> weighted neighborhood mix at fold it
    item_vecs: np.ndarray  # (B, d)
    raw: np.ndarray  # (B,) pre-sigmoid scores


class AttKGCN:
    """Forward/backward engine bound to one graph, one hyperparameter set,
    and one parameter store."""

    def __init__(self, graph: KnowledgeGraph, hp: HyperParams, params: ParamStore):
        # structural checks only; full hyperparameter validation happens at
        # run entry so optimizer-only knobs (lr, epochs) stay out of scope
        if hp.k < 1 or hp.dim < 1 or hp.depth < 0:
            raise ValueError("k must be >= 1, dim >= 1, depth >= 0")
        if hp.aggregator not in AGGREGATORS:
            raise ValueError(
                f"unknown aggregator {hp.aggregator!r}; valid: {', '.join(AGGREGATORS)}"
            )
        d = hp.dim
        if params["user_emb"].shape[1] != d or params["entity_emb"].shape[1] != d:
            raise ValueError("embedding tables do not match hyperparameter dim")
        if params["entity_emb"].shape[0] < graph.entity_count:
            raise ValueError("entity table smaller than the graph's entity count")
        if params["relation_emb"].shape[0] < graph.relation_count:
            raise ValueError("relation table smaller than the graph's relation count")
        for hop in range(1, hp.depth + 1):
            if f"agg_w_{hop}" not in params:
                raise ValueError(f"missing aggregator weights for hop {hop}")
        self.graph = graph
        self.hp = hp
        self.params = params

    # -- edge weighting ----------------------------------------------------

    def neighbor_weights(
        self,
        u_vec: np.ndarray,
        parent: int,
        edges: list,
        attention: bool | None = None,
    ) -> np.ndarray:
        """Softmax weights over the sampled (relation, entity) edges of ``parent``.

        With attention off the logit is the user-relation score alone, which
        is the plain-convolution ablation; with attention on the per-edge
        attention logit is added before the softmax.
        """
        if len(edges) < 1:
            raise ValueError("at least one edge required")
        use_attn = self.hp.attention if attention is None else attention
        values = self.params.values
        e_parent = values["entity_emb"][parent]
        logits = np.empty(len(edges), dtype=np.float64)
        for j, (rel, ent) in enumerate(edges):
            score = relation_score(u_vec, values["relation_emb"][rel])
            if use_attn:
                score += attention_logit(
                    e_parent,
                    values["entity_emb"][ent],
                    values["attn_w"],
                    values["attn_b"],
                    values["attn_h"],
                )
            logits[j] = score
        return softmax(logits)

    # -- receptive field ---------------------------------------------------

    def sample_receptive_field(
        self, entities: np.ndarray, rng: np.random.Generator
    ) -> tuple[list, list]:
        """Layered K-ary expansion: level l holds (B, K**l) node ids.

        rels[l] carries the relation of the edge through which each level-l
        node was reached (rels[0] is None). Sampling consumes the rng in a
        fixed order: level by level, batch row by batch row, node by node.
        """
        k, depth = self.hp.k, self.hp.depth
        ents0 = np.asarray(entities, dtype=np.int64).reshape(-1, 1)
        ents = [ents0]
        rels: list = [None]
        for _ in range(depth):
            src = ents[-1]
            batch, n = src.shape
            r_next = np.empty((batch, n * k), dtype=np.int64)
            e_next = np.empty((batch, n * k), dtype=np.int64)
            for b in range(batch):
                row = src[b]
                for p in range(n):
                    rr, ee = self.graph.sample_neighbor_arrays(int(row[p]), k, rng)
                    r_next[b, p * k : (p + 1) * k] = rr
                    e_next[b, p * k : (p + 1) * k] = ee
            rels.append(r_next)
            ents.append(e_next)
        return ents, rels

    # -- forward -----------------------------------------------------------

    def forward_batch(
        self, users: np.ndarray, entities: np.ndarray, rng: np.random.Generator
    ) -> ForwardTape:
        """Raw interaction scores for aligned (user, item-entity) arrays."""
        hp = self.hp
        k, depth, d = hp.k, hp.depth, hp.dim
        users = np.asarray(users, dtype=np.int64)
        values = self.params.values

        ents, rels = self.sample_receptive_field(entities, rng)
        batch = ents[0].shape[0]
        if users.shape != (batch,):
            raise ValueError("users and entities must have the same length")

        u_vecs = values["user_emb"][users]
        e_raw = [values["entity_emb"][lv] for lv in ents]

        pi: list = []
        attn_in: list = []
        attn_z: list = []
        attn_act: list = []
        for lvl in range(depth):
            n = ents[lvl].shape[1]
            r_vecs = values["relation_emb"][rels[lvl + 1]]  # (B, n*k, d)
            logits = np.matmul(r_vecs, u_vecs[:, :, None])[:, :, 0].reshape(batch, n, k)
            if hp.attention:
                parent = np.broadcast_to(e_raw[lvl][:, :, None, :], (batch, n, k, d))
                child = e_raw[lvl + 1].reshape(batch, n, k, d)
                cc = np.concatenate([parent, child], axis=3)
                z = (cc.reshape(-1, 2 * d) @ values["attn_w"].T).reshape(
                    batch, n, k, d
                ) + values["attn_b"][0]
                act = np.maximum(z, 0.0)
                logits = logits + np.matmul(act, values["attn_h"][0])
                attn_in.append(cc)
                attn_z.append(z)
                attn_act.append(act)
            else:
                attn_in.append(None)
                attn_z.append(None)
                attn_act.append(None)
            pi.append(softmax(logits, axis=-1))

        reps: list = [list(e_raw)]
        nvecs: list = []
        for it in range(depth):
            w_t = values[f"agg_w_{it + 1}"].T  # (in_dim, d)
            b = values[f"agg_b_{it + 1}"][0]
            last = it == depth - 1
            outs: list = []
            nvs: list = []
            for lvl in range(depth - it):
                s_mat = reps[it][lvl]
                n = s_mat.shape[1]
                child = reps[it][lvl + 1].reshape(batch, n, k, d)
                nv = np.matmul(pi[lvl][:, :, None, :], child)[:, :, 0, :]
                if hp.aggregator == "sum":
                    x = s_mat + nv
                elif hp.aggregator == "concat":
                    x = np.concatenate([s_mat, nv], axis=2)
                else:  # neighbor
                    x = nv
                pre = (x.reshape(-1, x.shape[2]) @ w_t).reshape(batch, n, d) + b
                outs.append(np.tanh(pre) if last else np.maximum(pre, 0.0))
                nvs.append(nv)
            reps.append(outs)
            nvecs.append(nvs)

        item_vecs = reps[depth][0][:, 0, :]
        raw = np.sum(u_vecs * item_vecs, axis=1)
        return ForwardTape(
            users=users,
            u_vecs=u_vecs,
            ents=ents,
            rels=rels,
            pi=pi,
            attn_in=attn_in,
            attn_z=attn_z,
            attn_act=attn_act,
            reps=reps,
            nvecs=nvecs,
            item_vecs=item_vecs,
            raw=raw,
        )

    # -- backward ----------------------------------------------------------

    def backward_batch(self, tape: ForwardTape, d_raw: np.ndarray) -> None:
        """Accumulate d(loss)/d(params) into the store's gradient buffers,
        given d(loss)/d(raw score) per batch row."""
        hp = self.hp
        k, depth, d = hp.k, hp.depth, hp.dim
        values = self.params.values
        grads = self.params.grads
        batch = tape.raw.shape[0]
        d_raw = np.asarray(d_raw, dtype=np.float64)

        d_u = d_raw[:, None] * tape.item_vecs
        cur = [(d_raw[:, None] * tape.u_vecs).reshape(batch, 1, d)]
        dpi = [np.zeros_like(p) for p in tape.pi]

        for it in reversed(range(depth)):
            w = values[f"agg_w_{it + 1}"]
            last = it == depth - 1
            prev = [np.zeros_like(tape.reps[it][lv]) for lv in range(depth - it + 1)]
            for lvl in range(depth - it):
                out = tape.reps[it + 1][lvl]
                d_out = cur[lvl]
                d_pre = d_out * (1.0 - out * out) if last else d_out * (out > 0.0)
                s_mat = tape.reps[it][lvl]
                nv = tape.nvecs[it][lvl]
                if hp.aggregator == "sum":
                    x = s_mat + nv
                elif hp.aggregator == "concat":
                    x = np.concatenate([s_mat, nv], axis=2)
                else:
                    x = nv
                d_pre_f = d_pre.reshape(-1, d)
                x_f = x.reshape(-1, x.shape[2])
                grads[f"agg_w_{it + 1}"] += d_pre_f.T @ x_f
                grads[f"agg_b_{it + 1}"][0] += d_pre_f.sum(axis=0)
                d_x = (d_pre_f @ w).reshape(x.shape)
                if hp.aggregator == "sum":
                    d_s, d_n = d_x, d_x
                elif hp.aggregator == "concat":
                    d_s, d_n = d_x[:, :, :d], d_x[:, :, d:]
                else:
                    d_s, d_n = None, d_x
                if d_s is not None:
                    prev[lvl] += d_s
                n = s_mat.shape[1]
                child = tape.reps[it][lvl + 1].reshape(batch, n, k, d)
                dpi[lvl] += np.matmul(child, d_n[:, :, :, None])[:, :, :, 0]
                prev[lvl + 1] += (tape.pi[lvl][..., None] * d_n[:, :, None, :]).reshape(
                    batch, n * k, d
                )
            cur = prev

        d_eraw = cur  # gradients w.r.t. raw embeddings, levels 0..depth
        for lvl in range(depth):
            p = tape.pi[lvl]
            dp = dpi[lvl]
            d_logit = p * (dp - np.sum(dp * p, axis=-1, keepdims=True))
            n = p.shape[1]
            r_vecs = values["relation_emb"][tape.rels[lvl + 1]]  # (B, n*k, d)
            d_u += np.matmul(d_logit.reshape(batch, 1, n * k), r_vecs)[:, 0, :]
            d_rel = d_logit[..., None] * tape.u_vecs[:, None, None, :]
            np.add.at(grads["relation_emb"], tape.rels[lvl + 1].ravel(), d_rel.reshape(-1, d))
            if hp.attention:
                act_f = tape.attn_act[lvl].reshape(-1, d)
                grads["attn_h"][0] += act_f.T @ d_logit.ravel()
                d_act = d_logit[..., None] * values["attn_h"][0]
                d_z = d_act * (tape.attn_z[lvl] > 0.0)
                d_z_f = d_z.reshape(-1, d)
                grads["attn_w"] += d_z_f.T @ tape.attn_in[lvl].reshape(-1, 2 * d)
                grads["attn_b"][0] += d_z_f.sum(axis=0)
                d_cc = (d_z_f @ values["attn_w"]).reshape(batch, n, k, 2 * d)
                d_eraw[lvl] += d_cc[..., :d].sum(axis=2)
                d_eraw[lvl + 1] += d_cc[..., d:].reshape(batch, n * k, d)
        for lvl in range(depth + 1):
            np.add.at(grads["entity_emb"], tape.ents[lvl].ravel(), d_eraw[lvl].reshape(-1, d))
        np.add.at(grads["user_emb"], tape.users, d_u)

    # -- single-instance conveniences ---------------------------------------

    def item_repr(self, user: int, entity: int, rng: np.random.Generator) -> np.ndarray:
        """Folded d-vector for one (user, item-entity) pair.

        With depth 0 this is the raw entity embedding and the rng is never
        consumed.
        """
        tape = self.forward_batch(np.array([user]), np.array([entity]), rng)
        return tape.item_vecs[0].copy()

    def predict(self, user: int, entity: int, rng: np.random.Generator) -> float:
        """Interaction probability, sigmoid of the raw score."""
        tape = self.forward_batch(np.array([user]), np.array([entity]), rng)
        return float(sigmoid(tape.raw[0]))

    def _eval_chunk(self) -> int:
        # bound peak memory of the (B, K**H, K, 2d) attention buffers
        nodes = max(1, self.hp.k**self.hp.depth)
        return max(1, min(512, 4_000_000 // (nodes * self.hp.dim)))

    def predict_batch(
        self, users: np.ndarray, entities: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Probabilities for aligned arrays, evaluated in fixed-size chunks.

        The chunk size depends only on the hyperparameters, so rng
        consumption (and therefore the result) is reproducible.
        """
        users = np.asarray(users, dtype=np.int64)
        entities = np.asarray(entities, dtype=np.int64)
        chunk = self._eval_chunk()
        probs = []
        for start in range(0, users.shape[0], chunk):
            tape = self.forward_batch(
                users[start : start + chunk], entities[start : start + chunk], rng
            )
            probs.append(sigmoid(tape.raw))
        if not probs:
            return np.empty(0, dtype=np.float64)
        return np.concatenate(probs)
