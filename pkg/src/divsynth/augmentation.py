"""Masked attribute variants and their mask labels.

Variant i of a class attribute zeroes the dimensions of group i; variant 0
is the untouched attribute. The variant index doubles as the label the
mask classifier is trained against.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ShapeError, WriteError
from .grouping import AttributeGroups


@dataclass
class AugmentedAttribute:
    vector: np.ndarray       # (d_a,) masked attribute
    group_index: int         # 0..m, 0 = complete
    label: int               # mask label, equal to group_index
    source_class: int


def mask_group(a: np.ndarray, groups: AttributeGroups, i: int) -> np.ndarray:
    """Copy of ``a`` with group i zeroed; i = 0 returns an untouched copy."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != groups.d_a:
        raise ShapeError(f"attribute length {a.shape[-1]} != {groups.d_a} dimensions")
    if not 0 <= i <= groups.m:
        raise ArgumentError(f"group index {i} outside 0..{groups.m}")
    out = a.copy()
    if i > 0:
        out[..., groups.assignment == i] = 0.0
    return out


def build_augmented_set(attributes: np.ndarray, groups: AttributeGroups,
                        include_complete: bool = True,
                        drop_noop_masks: bool = False) -> list[AugmentedAttribute]:
    """All masked variants for every class row, class-major then group order.

    A variant whose masked group was already all-zero equals the complete
    vector but keeps its own label; ``drop_noop_masks`` removes such rows.
    """
    attributes = np.asarray(attributes, dtype=np.float64)
    if attributes.ndim != 2 or attributes.shape[1] != groups.d_a:
        raise ShapeError(
            f"attribute matrix shape {attributes.shape} incompatible with "
            f"{groups.d_a} grouped dimensions")
    out: list[AugmentedAttribute] = []
    start = 0 if include_complete else 1
    for c, row in enumerate(attributes):
        for i in range(start, groups.m + 1):
            masked = mask_group(row, groups, i)
            if drop_noop_masks and i > 0 and np.array_equal(masked, row):
                continue
            out.append(AugmentedAttribute(vector=masked, group_index=i,
                                          label=i, source_class=c))
    return out


def export_augmented_csv(entries: list[AugmentedAttribute], path: str | Path) -> Path:
    path = Path(path)
    if not entries:
        raise ArgumentError("nothing to export")
    d_a = entries[0].vector.shape[0]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "group_index"] + [f"a{j}" for j in range(d_a)])
            for e in entries:
                writer.writerow([str(e.source_class), str(e.group_index)]
                                + [repr(float(v)) for v in e.vector])
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc
    return path
