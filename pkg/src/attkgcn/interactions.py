"""User-item interaction loading, implicit-feedback conversion, deterministic
7:1:2 splitting, and uniform negative sampling.

Every observed (user, item) pair counts as one positive regardless of the
recorded rating value; the rating column is provenance only. User and item
ids are re-indexed densely from 0 (sorted by raw id) and the raw ids are kept
for output.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, NegativeSamplingError

TRAIN_FRACTION = 0.7
VALIDATION_FRACTION = 0.1
MIN_SPLIT_POSITIVES = 10


@dataclass(frozen=True)
class Interaction:
    user: int
    item: int
    label: int


@dataclass(frozen=True)
class InteractionSet:
    user_count: int
    item_count: int
    item_to_entity: np.ndarray  # dense item id -> entity id
    users_raw: np.ndarray  # dense user id -> raw id from file
    items_raw: np.ndarray  # dense item id -> raw id from file
    positives: tuple[Interaction, ...]  # all positives, sorted by (user, item)
    user_positive_items: tuple[frozenset, ...]  # per user, across all splits
    train: tuple[Interaction, ...] = ()
    validation: tuple[Interaction, ...] = ()
    test: tuple[Interaction, ...] = ()
    is_split: bool = field(default=False)
    split_warning: bool = field(default=False)

    def user_dense(self, raw_user: int) -> int:
        idx = int(np.searchsorted(self.users_raw, raw_user))
        if idx >= self.users_raw.shape[0] or self.users_raw[idx] != raw_user:
            raise DataError(f"unknown user id {raw_user}")
        return idx


def _parse_int(token: str, path, lineno: int) -> int:
    try:
        value = int(token)
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: non-integer field {token!r}") from exc
    if value < 0:
        raise DataError(f"{path}:{lineno}: negative id {token!r}")
    return value


def load_interactions(ratings_path, item_map_path) -> InteractionSet:
    """Read a ratings file and an item-entity map into an unsplit set.

    Ratings lines are "user<TAB>item<TAB>rating"; map lines are
    "item<TAB>entity". Every rated item must appear in the map. Duplicate
    (user, item) pairs collapse to one positive.
    """
    entity_of: dict[int, int] = {}
    with open(item_map_path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(
                    f"{item_map_path}:{lineno}: expected 2 tab-separated fields, got {len(parts)}"
                )
            item = _parse_int(parts[0], item_map_path, lineno)
            entity = _parse_int(parts[1], item_map_path, lineno)
            if item in entity_of:
                raise DataError(f"{item_map_path}:{lineno}: item {item} listed twice")
            entity_of[item] = entity

    pairs: set[tuple[int, int]] = set()
    with open(ratings_path, encoding="utf-8") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{ratings_path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            user = _parse_int(parts[0], ratings_path, lineno)
            item = _parse_int(parts[1], ratings_path, lineno)
            try:
                float(parts[2])  # provenance only
            except ValueError as exc:
                raise DataError(f"{ratings_path}:{lineno}: bad rating {parts[2]!r}") from exc
            if item not in entity_of:
                raise DataError(f"{ratings_path}:{lineno}: item {item} missing from item map")
            pairs.add((user, item))

    users_raw = np.array(sorted({u for u, _ in pairs}), dtype=np.int64)
    items_raw = np.array(sorted(entity_of), dtype=np.int64)
    user_dense = {int(raw): i for i, raw in enumerate(users_raw)}
    item_dense = {int(raw): i for i, raw in enumerate(items_raw)}
    item_to_entity = np.array([entity_of[int(raw)] for raw in items_raw], dtype=np.int64)

    dense_pairs = sorted((user_dense[u], item_dense[i]) for u, i in pairs)
    positives = tuple(Interaction(u, i, 1) for u, i in dense_pairs)
    per_user: list[set[int]] = [set() for _ in range(len(users_raw))]
    for inter in positives:
        per_user[inter.user].add(inter.item)

    users_raw.flags.writeable = False
    items_raw.flags.writeable = False
    item_to_entity.flags.writeable = False
    return InteractionSet(
        user_count=len(users_raw),
        item_count=len(items_raw),
        item_to_entity=item_to_entity,
        users_raw=users_raw,
        items_raw=items_raw,
        positives=positives,
        user_positive_items=tuple(frozenset(s) for s in per_user),
    )


def split(iset: InteractionSet, seed: int) -> InteractionSet:
    """Shuffle positives with a seeded rng and cut 7:1:2.

    Cuts fall at floor(0.7 n) and floor(0.8 n). The same seed always yields
    the same membership. Fewer than 10 positives sets ``split_warning``
    instead of raising.
    """
    n = len(iset.positives)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = [iset.positives[i] for i in order]
    cut_train = int(np.floor(TRAIN_FRACTION * n))
    cut_val = int(np.floor((TRAIN_FRACTION + VALIDATION_FRACTION) * n))
    return replace(
        iset,
        train=tuple(shuffled[:cut_train]),
        validation=tuple(shuffled[cut_train:cut_val]),
        test=tuple(shuffled[cut_val:]),
        is_split=True,
        split_warning=n < MIN_SPLIT_POSITIVES,
    )


def sample_negative(iset: InteractionSet, user: int, rng: np.random.Generator) -> int:
    """Uniform draw over items the user has never interacted with (any split)."""
    if not 0 <= user < iset.user_count:
        raise ValueError(f"user id {user} out of range [0, {iset.user_count})")
    positives = iset.user_positive_items[user]
    if len(positives) >= iset.item_count:
        raise NegativeSamplingError(f"user {user} has interacted with every item")
    while True:
        candidate = int(rng.integers(0, iset.item_count))
        if candidate not in positives:
            return candidate
