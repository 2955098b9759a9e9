"""Pairwise ranking loss, the minibatch training loop, and split evaluation.

The loss over a batch of (positive, sampled-negative) score pairs is the mean
of -log sigmoid(pos - neg), plus an L2 penalty restricted to the parameters a
batch actually touched: the embedding rows gathered during its forward passes
plus the shared weight tensors that participated. Regularization pressure
therefore scales with usage.

Evaluation pairs every held-out positive with one freshly drawn
non-interacted item under a fixed evaluation seed, so per-epoch metrics are
comparable and re-runs are bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NegativeSamplingError, UndefinedMetricError
from .interactions import InteractionSet, sample_negative
from .kg import KnowledgeGraph
from .metrics import ScoredLabel, auc, classification_metrics
from .model import AttKGCN, HyperParams, init_params
from .numerics import ParamStore, adam_step, sigmoid, softplus

EVAL_POLICY = "one uniform non-interacted item per held-out positive"


@dataclass(frozen=True)
class Touched:
    """Rows and tensors referenced by a batch's forward passes."""

    user_rows: np.ndarray
    entity_rows: np.ndarray
    relation_rows: np.ndarray
    hops: int
    attention_used: bool


def batch_touched(tapes: list, hp: HyperParams) -> Touched:
    users = np.unique(np.concatenate([t.users for t in tapes]))
    ents = np.unique(np.concatenate([lv.ravel() for t in tapes for lv in t.ents]))
    rel_levels = [lv.ravel() for t in tapes for lv in t.rels if lv is not None]
    rels = (
        np.unique(np.concatenate(rel_levels))
        if rel_levels
        else np.empty(0, dtype=np.int64)
    )
    return Touched(
        user_rows=users,
        entity_rows=ents,
        relation_rows=rels,
        hops=hp.depth,
        attention_used=hp.attention and hp.depth > 0,
    )


def l2_penalty(params: ParamStore, touched: Touched) -> float:
    """Sum of squared entries over exactly the touched parameters."""
    values = params.values
    total = 0.0
    for table, rows in (
        ("user_emb", touched.user_rows),
        ("entity_emb", touched.entity_rows),
        ("relation_emb", touched.relation_rows),
    ):
        if rows.size:
            sub = values[table][rows]
            total += float(np.dot(sub.ravel(), sub.ravel()))
    full = []
    if touched.attention_used:
        full += ["attn_w", "attn_b", "attn_h"]
    for hop in range(1, touched.hops + 1):
        full += [f"agg_w_{hop}", f"agg_b_{hop}"]
    for name in full:
        t = values[name]
        total += float(np.dot(t.ravel(), t.ravel()))
    return total


def add_l2_grads(params: ParamStore, touched: Touched, lam: float) -> None:
    if lam == 0.0:
        return
    values, grads = params.values, params.grads
    for table, rows in (
        ("user_emb", touched.user_rows),
        ("entity_emb", touched.entity_rows),
        ("relation_emb", touched.relation_rows),
    ):
        if rows.size:
            grads[table][rows] += 2.0 * lam * values[table][rows]
    full = []
    if touched.attention_used:
        full += ["attn_w", "attn_b", "attn_h"]
    for hop in range(1, touched.hops + 1):
        full += [f"agg_w_{hop}", f"agg_b_{hop}"]
    for name in full:
        grads[name] += 2.0 * lam * values[name]


def pairwise_loss(
    pos_raw: np.ndarray,
    neg_raw: np.ndarray,
    params: ParamStore | None = None,
    lam: float = 0.0,
    touched: Touched | None = None,
) -> float:
    """Mean -log sigmoid(pos - neg) over pairs, plus lam * touched L2."""
    pos = np.asarray(pos_raw, dtype=np.float64)
    neg = np.asarray(neg_raw, dtype=np.float64)
    if pos.shape != neg.shape or pos.ndim != 1 or pos.shape[0] < 1:
        raise ValueError(f"score vectors must be equal-length and non-empty: {pos.shape} vs {neg.shape}")
    loss = float(np.mean(softplus(neg - pos)))
    if lam != 0.0:
        if params is None or touched is None:
            raise ValueError("params and touched are required when lam != 0")
        loss += lam * l2_penalty(params, touched)
    return loss


@dataclass
class TrainState:
    """Mutable state of one training run."""

    model: AttKGCN
    hp: HyperParams
    epoch: int = 0
    best_val_auc: float = float("-inf")
    patience_used: int = 0
    shuffle_rng: np.random.Generator = None
    neg_rng: np.random.Generator = None
    field_rng: np.random.Generator = None

    @property
    def params(self) -> ParamStore:
        return self.model.params


def _rng_streams(seed: int):
    root = np.random.SeedSequence(seed)
    init_ss, shuffle_ss, neg_ss, field_ss, eval_ss = root.spawn(5)
    eval_neg_ss, eval_field_ss = eval_ss.spawn(2)
    return init_ss, shuffle_ss, neg_ss, field_ss, eval_neg_ss, eval_field_ss


def eval_seed_sequences(seed: int):
    """The two evaluation seed sequences derived from a run seed: one for
    negative draws, one for receptive-field sampling."""
    streams = _rng_streams(seed)
    return streams[4], streams[5]


def train_epoch(state: TrainState, graph: KnowledgeGraph, iset: InteractionSet):
    """One pass over the shuffled training positives in minibatches.

    Each positive is paired with a freshly sampled negative; users whose
    positives cover the whole catalog are skipped. Returns (mean pair loss
    including the L2 term, mean gradient norm). Deterministic given the
    state's rng streams.
    """
    if not iset.train:
        raise DataError("training split is empty")
    model, hp = state.model, state.hp
    params = model.params

    order = state.shuffle_rng.permutation(len(iset.train))
    users: list[int] = []
    pos_items: list[int] = []
    neg_items: list[int] = []
    for idx in order:
        inter = iset.train[int(idx)]
        try:
            neg = sample_negative(iset, inter.user, state.neg_rng)
        except NegativeSamplingError:
            continue
        users.append(inter.user)
        pos_items.append(inter.item)
        neg_items.append(neg)
    if not users:
        raise DataError("no trainable pairs: every user has interacted with every item")

    users_arr = np.array(users, dtype=np.int64)
    pos_ents = iset.item_to_entity[np.array(pos_items, dtype=np.int64)]
    neg_ents = iset.item_to_entity[np.array(neg_items, dtype=np.int64)]

    total_loss = 0.0
    total_norm = 0.0
    n_batches = 0
    n_pairs = users_arr.shape[0]
    for start in range(0, n_pairs, hp.batch):
        sl = slice(start, min(start + hp.batch, n_pairs))
        tape_pos = model.forward_batch(users_arr[sl], pos_ents[sl], state.field_rng)
        tape_neg = model.forward_batch(users_arr[sl], neg_ents[sl], state.field_rng)
        touched = batch_touched([tape_pos, tape_neg], hp)
        loss = pairwise_loss(tape_pos.raw, tape_neg.raw, params, hp.l2, touched)
        margin = tape_pos.raw - tape_neg.raw
        # d(mean softplus(-m))/dm = -sigmoid(-m)/B
        d_margin = -sigmoid(-margin) / margin.shape[0]
        model.backward_batch(tape_pos, d_margin)
        model.backward_batch(tape_neg, -d_margin)
        add_l2_grads(params, touched, hp.l2)
        total_norm += params.grad_norm()
        adam_step(params, hp.lr)
        bsize = margin.shape[0]
        total_loss += loss * bsize
        n_batches += 1
    return total_loss / n_pairs, total_norm / n_batches


def evaluate_split(
    model: AttKGCN,
    iset: InteractionSet,
    split_name: str,
    eval_neg_ss,
    eval_field_ss,
) -> dict | None:
    """AUC / F1 / accuracy on one split under the fixed evaluation seed.

    Returns None for an empty split. AUC is NaN when the realized pair set
    is single-class (possible only when every positive's user is saturated).
    """
    inters = getattr(iset, split_name)
    if not inters:
        return None
    neg_rng = np.random.default_rng(eval_neg_ss)
    field_rng = np.random.default_rng(eval_field_ss)
    users: list[int] = []
    pos_items: list[int] = []
    neg_items: list[int] = []
    for inter in inters:
        try:
            neg = sample_negative(iset, inter.user, neg_rng)
        except NegativeSamplingError:
            continue
        users.append(inter.user)
        pos_items.append(inter.item)
        neg_items.append(neg)
    if not users:
        return None
    users2 = np.array(users + users, dtype=np.int64)
    ents2 = np.concatenate(
        [
            iset.item_to_entity[np.array(pos_items, dtype=np.int64)],
            iset.item_to_entity[np.array(neg_items, dtype=np.int64)],
        ]
    )
    probs = model.predict_batch(users2, ents2, field_rng)
    n = len(users)
    scored = [ScoredLabel(float(probs[i]), 1) for i in range(n)]
    scored += [ScoredLabel(float(probs[n + i]), 0) for i in range(n)]
    try:
        auc_value = auc(scored)
    except UndefinedMetricError:
        auc_value = float("nan")
    cm = classification_metrics(scored)
    return {
        "auc": auc_value,
        "f1": cm.f1,
        "accuracy": cm.accuracy,
        "precision": cm.precision,
        "recall": cm.recall,
    }


@dataclass
class RunReport:
    """Machine-readable record of one training run."""

    header: dict
    epochs: list = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def jsonl(self) -> str:
        lines = [json.dumps({"type": "header", **self.header}, sort_keys=True)]
        for rec in self.epochs:
            lines.append(json.dumps({"type": "epoch", **rec}, sort_keys=True))
        lines.append(json.dumps({"type": "final", **self.final}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.jsonl())


def train(
    hp: HyperParams,
    graph: KnowledgeGraph,
    iset: InteractionSet,
    progress=None,
) -> tuple[ParamStore, RunReport]:
    """Full training protocol; returns the best-validation checkpoint.

    Runs up to hp.epochs epochs, evaluates train and validation metrics after
    each, keeps the parameter snapshot with the best validation AUC, and
    stops early after hp.patience epochs without improvement (patience 0
    disables early stopping). Test metrics are computed exactly once, on the
    kept snapshot.
    """
    hp.validate()
    if not iset.is_split:
        raise ValueError("interaction set must be split before training")
    bad = iset.item_to_entity[iset.item_to_entity >= graph.entity_count]
    if bad.size:
        raise DataError(f"item map points at entity {int(bad[0])} outside the graph")

    init_ss, shuffle_ss, neg_ss, field_ss, eval_neg_ss, eval_field_ss = _rng_streams(hp.seed)
    params = init_params(
        hp,
        iset.user_count,
        graph.entity_count,
        graph.relation_count,
        np.random.default_rng(init_ss),
    )
    model = AttKGCN(graph, hp, params)
    state = TrainState(
        model=model,
        hp=hp,
        shuffle_rng=np.random.default_rng(shuffle_ss),
        neg_rng=np.random.default_rng(neg_ss),
        field_rng=np.random.default_rng(field_ss),
    )

    header = {
        "eval_negatives": EVAL_POLICY,
        "k": hp.k,
        "dim": hp.dim,
        "depth": hp.depth,
        "l2": hp.l2,
        "lr": hp.lr,
        "batch": hp.batch,
        "aggregator": hp.aggregator,
        "attention": "on" if hp.attention else "off",
        "seed": hp.seed,
        "epochs": hp.epochs,
        "patience": hp.patience,
    }
    report = RunReport(header=header)

    best_values = params.copy_values()
    best_epoch = 0
    best_auc = float("-inf")
    for epoch in range(1, hp.epochs + 1):
        state.epoch = epoch
        mean_loss, _ = train_epoch(state, graph, iset)
        params.check_finite()
        train_m = evaluate_split(model, iset, "train", eval_neg_ss, eval_field_ss)
        val_m = evaluate_split(model, iset, "validation", eval_neg_ss, eval_field_ss)
        rec = {
            "epoch": epoch,
            "train_loss": mean_loss,
            "train_auc": train_m["auc"] if train_m else float("nan"),
            "train_f1": train_m["f1"] if train_m else float("nan"),
            "train_accuracy": train_m["accuracy"] if train_m else float("nan"),
            "val_auc": val_m["auc"] if val_m else float("nan"),
            "val_f1": val_m["f1"] if val_m else float("nan"),
            "val_accuracy": val_m["accuracy"] if val_m else float("nan"),
        }
        report.epochs.append(rec)
        if progress is not None:
            progress(rec)

        val_auc = rec["val_auc"]
        if np.isnan(val_auc):
            # no validation signal: keep the latest snapshot, never stop early
            best_values = params.copy_values()
            best_epoch = epoch
        elif val_auc > best_auc:
            best_auc = val_auc
            best_values = params.copy_values()
            best_epoch = epoch
            state.patience_used = 0
        else:
            state.patience_used += 1
            if hp.patience > 0 and state.patience_used >= hp.patience:
                break
        state.best_val_auc = best_auc

    best_params = ParamStore()
    for name, arr in best_values.items():
        best_params.add(name, arr)
    best_model = AttKGCN(graph, hp, best_params)
    test_m = evaluate_split(best_model, iset, "test", eval_neg_ss, eval_field_ss)
    report.final = {
        "best_epoch": best_epoch,
        "test_auc": test_m["auc"] if test_m else float("nan"),
        "test_f1": test_m["f1"] if test_m else float("nan"),
        "test_accuracy": test_m["accuracy"] if test_m else float("nan"),
    }
    return best_params, report
