"""Synthetic knowledge-graph and interaction datasets with planted category
structure.

Every item and attribute entity gets a category. Informative relations
connect an item to entities of its own category; noise relations connect it
to uniformly random entities, so attention has something to learn to ignore.
Each user prefers one category and draws 90% of their positives from it, 10%
uniformly, which keeps held-out ranking solvable but not saturated. With a
single category the informative edges lose all signal, giving a natural null
dataset.

Output files use exactly the formats the loaders consume: tab-separated,
LF-terminated, headerless. Generation is a pure function of the config, so
equal seeds give byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    users: int = 50
    items: int = 200
    extra_entities: int = 300
    relations: int = 6
    noise_relations: int = 2
    categories: int = 4
    triples_per_item: int = 8
    positives_per_user: int = 20
    seed: int = 1

    def validate(self) -> None:
        if self.items < 1:
            raise ConfigError("items must be >= 1")
        if self.users < 0 or self.extra_entities < 0:
            raise ConfigError("users and extra_entities must be >= 0")
        if self.categories < 1:
            raise ConfigError("categories must be >= 1")
        if self.categories > self.items:
            raise ConfigError("categories cannot exceed items")
        if self.relations < 1:
            raise ConfigError("relations must be >= 1")
        if not 0 <= self.noise_relations <= self.relations:
            raise ConfigError("noise_relations must lie in [0, relations]")
        if self.triples_per_item < 1:
            raise ConfigError("triples_per_item must be >= 1")
        if self.positives_per_user > self.items:
            raise ConfigError("positives_per_user cannot exceed items")
        if self.positives_per_user < 0:
            raise ConfigError("positives_per_user must be >= 0")
        # every attribute entity must fit into some item's edge budget so the
        # generated graph touches the full entity range
        slots_needed = math.ceil(self.extra_entities / self.items)
        if slots_needed > self.triples_per_item:
            raise ConfigError(
                "extra_entities too large: raise triples_per_item so every "
                "attribute entity can receive an edge"
            )


@dataclass(frozen=True)
class GeneratedPaths:
    kg: Path
    ratings: Path
    item_map: Path
    ground_truth: Path


def paper_scale_preset() -> SynthConfig:
    """A realistic-scale preset: 51 users, 5210 items, 9982 entities,
    14 relations, about 25.6k triples, about 6.1k positives."""
    return SynthConfig(
        users=51,
        items=5210,
        extra_entities=4772,
        relations=14,
        noise_relations=4,
        categories=10,
        triples_per_item=5,
        positives_per_user=119,
        seed=1,
    )


def _item_category(cfg: SynthConfig, item: int) -> int:
    return item % cfg.categories


def _attr_category(cfg: SynthConfig, attr_index: int) -> int:
    # attribute j shares the category of item (j mod items); that item also
    # owns the coverage edge pointing at j, keeping the edge same-category
    return _item_category(cfg, attr_index % cfg.items)


def generate(cfg: SynthConfig, out_dir) -> GeneratedPaths:
    """Write kg.tsv, ratings.tsv, item_map.tsv, and ground_truth.tsv.

    Items occupy entity ids [0, items); attribute entities follow. The
    triple file holds exactly items * triples_per_item distinct lines with
    every entity id referenced at least once.
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    n_entities = cfg.items + cfg.extra_entities
    informative = cfg.relations - cfg.noise_relations
    categories = [_item_category(cfg, i) for i in range(cfg.items)] + [
        _attr_category(cfg, j) for j in range(cfg.extra_entities)
    ]
    pool_by_cat: list[list[int]] = [[] for _ in range(cfg.categories)]
    for ent, cat in enumerate(categories):
        pool_by_cat[cat].append(ent)
    items_by_cat: list[list[int]] = [[] for _ in range(cfg.categories)]
    for item in range(cfg.items):
        items_by_cat[categories[item]].append(item)

    kg_lines: list[str] = []
    for item in range(cfg.items):
        cat = categories[item]
        used: set[tuple[int, int]] = set()
        edges: list[tuple[int, int]] = []

        # coverage edges: attribute j is wired to item (j mod items)
        attr = item
        while attr < cfg.extra_entities and len(edges) < cfg.triples_per_item:
            if informative > 0:
                rel = int(rng.integers(0, informative))
            else:
                rel = int(rng.integers(0, cfg.relations))
            target = cfg.items + attr
            edges.append((rel, target))
            used.add((rel, target))
            attr += cfg.items

        pool = pool_by_cat[cat]
        tries = 0
        while len(edges) < cfg.triples_per_item:
            rel = int(rng.integers(0, cfg.relations))
            if rel < informative:
                target = pool[int(rng.integers(0, len(pool)))]
            else:
                target = int(rng.integers(0, n_entities))
            tries += 1
            if target == item or (rel, target) in used:
                if tries > 1000 * cfg.triples_per_item:
                    raise ConfigError(
                        f"cannot place {cfg.triples_per_item} distinct edges for item {item}; "
                        "config too tight"
                    )
                continue
            edges.append((rel, target))
            used.add((rel, target))
        for rel, target in edges:
            kg_lines.append(f"{item}\t{rel}\t{target}")

    rating_lines: list[str] = []
    user_cats: list[int] = []
    for user in range(cfg.users):
        cat = int(rng.integers(0, cfg.categories))
        user_cats.append(cat)
        chosen: list[int] = []
        chosen_set: set[int] = set()
        cat_items = items_by_cat[cat]
        while len(chosen) < cfg.positives_per_user:
            if rng.random() < 0.9:
                item = cat_items[int(rng.integers(0, len(cat_items)))]
            else:
                item = int(rng.integers(0, cfg.items))
            if item in chosen_set:
                continue
            chosen.append(item)
            chosen_set.add(item)
        for item in chosen:
            rating = round(float(rng.uniform(1.0, 5.0)), 1)
            rating_lines.append(f"{user}\t{item}\t{rating:.1f}")

    map_lines = [f"{item}\t{item}" for item in range(cfg.items)]
    truth_lines = [f"item\t{i}\t{categories[i]}" for i in range(cfg.items)]
    truth_lines += [
        f"entity\t{cfg.items + j}\t{categories[cfg.items + j]}"
        for j in range(cfg.extra_entities)
    ]
    truth_lines += [f"user\t{u}\t{user_cats[u]}" for u in range(cfg.users)]

    paths = GeneratedPaths(
        kg=out / "kg.tsv",
        ratings=out / "ratings.tsv",
        item_map=out / "item_map.tsv",
        ground_truth=out / "ground_truth.tsv",
    )
    _write_lines(paths.kg, kg_lines)
    _write_lines(paths.ratings, rating_lines)
    _write_lines(paths.item_map, map_lines)
    _write_lines(paths.ground_truth, truth_lines)
    return paths


def _write_lines(path: Path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if lines:
            fh.write("\n".join(lines) + "\n")
