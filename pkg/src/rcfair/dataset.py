"""Scored datasets: loading, validation and per-group indexing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

VALIDATION = "validation"
TEST = "test"

_SPLIT_ALIASES = {"val": VALIDATION, "validation": VALIDATION, "test": TEST}

DEFAULT_COLUMNS = {"score": "score", "label": "label", "group": "group", "split": "split"}


class DatasetError(ValueError):
    """Raised when scored data fails validation."""


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int
    group: str
    split: str = TEST

    def __post_init__(self):
        if not math.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise DatasetError(f"score {self.score!r} outside [0, 1]")
        if self.label not in (0, 1):
            raise DatasetError(f"label {self.label!r} not in {{0, 1}}")
        if not self.group:
            raise DatasetError("empty group key")
        if self.split not in (VALIDATION, TEST):
            raise DatasetError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class GroupStats:
    size: int
    weight: float
    base_rate: float
    positives: int


@dataclass(frozen=True, eq=False)
class ScoredDataset:
    """Immutable set of (score, label, group, split) records.

    Arrays are read-only.  ``per_group_index[g]`` lists the members of ``g``
    sorted by score descending, ties by original row index ascending; every
    allocation in the package selects a prefix of these lists.
    """

    scores: np.ndarray
    labels: np.ndarray
    group_codes: np.ndarray
    groups: tuple[str, ...]
    splits: np.ndarray
    per_group_index: Mapping[str, np.ndarray] = field(repr=False)

    @classmethod
    def from_arrays(
        cls,
        scores: Sequence[float],
        labels: Sequence[int],
        groups: Sequence[str],
        splits: Sequence[str] | None = None,
    ) -> "ScoredDataset":
        scores = np.asarray(scores, dtype=float)
        labels_arr = np.asarray(labels)
        group_list = [str(g) for g in groups]
        n = len(scores)
        if n == 0:
            raise DatasetError("empty dataset")
        if len(labels_arr) != n or len(group_list) != n:
            raise DatasetError("scores, labels and groups differ in length")
        if not np.all(np.isfinite(scores)) or scores.min() < 0.0 or scores.max() > 1.0:
            bad = int(np.flatnonzero(~np.isfinite(scores) | (scores < 0) | (scores > 1))[0])
            raise DatasetError(f"row {bad}: score {scores[bad]!r} outside [0, 1]")
        if not np.all((labels_arr == 0) | (labels_arr == 1)):
            bad = int(np.flatnonzero((labels_arr != 0) & (labels_arr != 1))[0])
            raise DatasetError(f"row {bad}: label {labels_arr[bad]!r} not in {{0, 1}}")
        labels_arr = labels_arr.astype(np.int8)
        if any(not g for g in group_list):
            raise DatasetError("empty group key")

        keys: dict[str, int] = {}
        codes = np.empty(n, dtype=np.int64)
        for i, g in enumerate(group_list):
            codes[i] = keys.setdefault(g, len(keys))
        if len(keys) < 2:
            raise DatasetError("at least two groups required")

        if splits is None:
            split_arr = np.full(n, TEST, dtype=object)
        else:
            split_arr = np.asarray([_normalise_split(s) for s in splits], dtype=object)
            if len(split_arr) != n:
                raise DatasetError("splits differ in length")

        order = np.lexsort((np.arange(n), -scores))
        index = {}
        for g, code in keys.items():
            members = order[codes[order] == code]
            members.setflags(write=False)
            index[g] = members
        for arr in (scores, labels_arr, codes, split_arr):
            arr.setflags(write=False)
        return cls(scores, labels_arr, codes, tuple(keys), split_arr, index)

    @classmethod
    def from_samples(cls, samples: Iterable[ScoredSample]) -> "ScoredDataset":
        samples = list(samples)
        return cls.from_arrays(
            [s.score for s in samples],
            [s.label for s in samples],
            [s.group for s in samples],
            [s.split for s in samples],
        )

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def n(self) -> int:
        return len(self.scores)

    def samples(self) -> list[ScoredSample]:
        return [
            ScoredSample(float(s), int(y), self.groups[c], str(sp))
            for s, y, c, sp in zip(self.scores, self.labels, self.group_codes, self.splits)
        ]

    def group_of(self, i: int) -> str:
        return self.groups[self.group_codes[i]]

    def group_size(self, group: str) -> int:
        return len(self._index(group))

    def _index(self, group: str) -> np.ndarray:
        try:
            return self.per_group_index[group]
        except KeyError:
            raise KeyError(f"unknown group {group!r}") from None

    @cached_property
    def sorted_labels(self) -> dict[str, np.ndarray]:
        """Labels of each group's members in score order."""
        return {g: self.labels[idx].astype(np.int64) for g, idx in self.per_group_index.items()}

    @cached_property
    def cum_positives(self) -> dict[str, np.ndarray]:
        """``cum_positives[g][k]`` = positives among the top ``k`` of ``g`` (length |g|+1)."""
        return {
            g: np.concatenate(([0], np.cumsum(lab))) for g, lab in self.sorted_labels.items()
        }

    @cached_property
    def global_order(self) -> np.ndarray:
        return np.lexsort((np.arange(self.n), -self.scores))

    @property
    def total_positives(self) -> int:
        return int(self.labels.sum())

    def split(self, name: str) -> "ScoredDataset":
        """Sub-dataset holding only rows of split ``name``."""
        name = _normalise_split(name)
        mask = self.splits == name
        if not mask.any():
            raise DatasetError(f"no rows in split {name!r}")
        return self.subset(np.flatnonzero(mask))

    def subset(self, rows: Sequence[int]) -> "ScoredDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return ScoredDataset.from_arrays(
            self.scores[rows],
            self.labels[rows],
            [self.groups[c] for c in self.group_codes[rows]],
            list(self.splits[rows]),
        )

    def to_csv(self, path: str | Path, columns: Mapping[str, str] | None = None) -> None:
        cols = {**DEFAULT_COLUMNS, **(columns or {})}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write_csv(self, fh, cols)


def write_csv(ds: ScoredDataset, fh, columns: Mapping[str, str] | None = None) -> None:
    cols = {**DEFAULT_COLUMNS, **(columns or {})}
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([cols["score"], cols["label"], cols["group"], cols["split"]])
    for s in ds.samples():
        # repr keeps the float round-trip exact
        writer.writerow([repr(s.score), s.label, s.group, s.split])


def _normalise_split(value) -> str:
    key = str(value).strip().lower()
    if key not in _SPLIT_ALIASES:
        raise DatasetError(f"unknown split value {value!r}")
    return _SPLIT_ALIASES[key]


def load_csv(path: str | Path, column_map: Mapping[str, str] | None = None) -> ScoredDataset:
    """Read a scored CSV; ``column_map`` overrides the default header names."""
    cols = {**DEFAULT_COLUMNS, **(column_map or {})}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise DatasetError(f"{path}: empty file")
        for role in ("score", "label", "group"):
            if cols[role] not in header:
                raise DatasetError(f"{path}: missing column {cols[role]!r}")
        has_split = cols["split"] in header
        scores, labels, groups, splits = [], [], [], []
        for row_no, row in enumerate(reader, start=2):
            raw_score, raw_label = row[cols["score"]], row[cols["label"]]
            try:
                score = float(raw_score)
            except (TypeError, ValueError):
                raise DatasetError(
                    f"{path}: row {row_no}, column {cols['score']!r}: unparseable score {raw_score!r}"
                ) from None
            if not math.isfinite(score) or not 0.0 <= score <= 1.0:
                raise DatasetError(
                    f"{path}: row {row_no}, column {cols['score']!r}: score {raw_score!r} outside [0, 1]"
                )
            try:
                label = int(str(raw_label).strip())
            except (TypeError, ValueError):
                raise DatasetError(
                    f"{path}: row {row_no}, column {cols['label']!r}: unparseable label {raw_label!r}"
                ) from None
            if label not in (0, 1):
                raise DatasetError(
                    f"{path}: row {row_no}, column {cols['label']!r}: label {raw_label!r} not in {{0, 1}}"
                )
            group = (row[cols["group"]] or "").strip()
            if not group:
                raise DatasetError(f"{path}: row {row_no}, column {cols['group']!r}: empty group")
            scores.append(score)
            labels.append(label)
            groups.append(group)
            if has_split:
                try:
                    splits.append(_normalise_split(row[cols["split"]]))
                except DatasetError as exc:
                    raise DatasetError(f"{path}: row {row_no}: {exc}") from None
    if not scores:
        raise DatasetError(f"{path}: empty file")
    return ScoredDataset.from_arrays(scores, labels, groups, splits if has_split else None)


def group_stats(ds: ScoredDataset) -> dict[str, GroupStats]:
    out = {}
    for g in ds.groups:
        size = ds.group_size(g)
        pos = int(ds.cum_positives[g][-1])
        out[g] = GroupStats(size=size, weight=size / ds.n, base_rate=pos / size, positives=pos)
    return out


def base_rate_disparity(ds: ScoredDataset, disadvantaged: str, advantaged: str) -> float:
    """P(Y=1 | disadvantaged) - P(Y=1 | advantaged)."""
    stats = group_stats(ds)
    for g in (disadvantaged, advantaged):
        if g not in stats:
            raise KeyError(f"unknown group {g!r}")
    return stats[disadvantaged].base_rate - stats[advantaged].base_rate
