"""Feature screening by sparse PCA, either within each feature group or over
the whole table at once."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureTable, GroupMap
from .spca import SpcaConfig, selected_features, spca_fit


@dataclass(frozen=True)
class GroupSelection:
    group_name: str
    member_count: int
    selected_feature_names: tuple[str, ...]
    first_component_loadings: tuple[float, ...]


@dataclass(frozen=True)
class GroupSelectionResult:
    per_group: tuple[GroupSelection, ...]
    merged_features: tuple[str, ...]
    method_tag: str

    def groups_touched(self, groups: GroupMap) -> int:
        """Number of groups in ``groups`` with at least one merged feature."""
        owner = groups.group_of()
        return len({owner[f] for f in self.merged_features if f in owner})


def _merge(table: FeatureTable, per_group) -> tuple[str, ...]:
    chosen = {f for g in per_group for f in g.selected_feature_names}
    return tuple(f for f in table.feature_names if f in chosen)


def gspca_select(table: FeatureTable, groups: GroupMap, per_group_components: int,
                 config_template: SpcaConfig) -> GroupSelectionResult:
    groups.validate_against(table.feature_names)
    per_group = []
    for name, members in groups.groups:
        if len(members) < per_group_components:
            raise ValueError(
                f"group {name!r} has {len(members)} feature(s), fewer than "
                f"per_group_components={per_group_components}")
        sub = table.select_features(members).values
        config = config_template.with_components(per_group_components)
        fit = spca_fit(sub, config)
        keep = selected_features(fit, per_group_components)
        per_group.append(GroupSelection(
            name, len(members), tuple(members[i] for i in keep),
            tuple(float(v) for v in fit.loadings[:, 0])))
    return GroupSelectionResult(tuple(per_group), _merge(table, per_group), "gspca")


def spca_global_select(table: FeatureTable, components: int, config: SpcaConfig) -> GroupSelectionResult:
    if not 1 <= components <= min(table.n, table.m):
        raise ValueError(f"components={components} out of range [1, {min(table.n, table.m)}]")
    fit = spca_fit(table.values, config.with_components(components))
    keep = selected_features(fit, components)
    names = tuple(table.feature_names[i] for i in keep)
    pseudo = GroupSelection("ALL", table.m, names, tuple(float(v) for v in fit.loadings[:, 0]))
    return GroupSelectionResult((pseudo,), names, "spca_global")


def no_selection(table: FeatureTable, groups: GroupMap | None = None) -> GroupSelectionResult:
    if groups is None:
        per_group = (GroupSelection("ALL", table.m, table.feature_names, ()),)
    else:
        per_group = tuple(GroupSelection(name, len(members), members, ())
                          for name, members in groups.groups)
    return GroupSelectionResult(per_group, tuple(table.feature_names), "none")


# ----------------------------------------------------------------- report

@dataclass(frozen=True)
class ReportRow:
    group: str
    members: int
    selected: int

    @property
    def fraction(self) -> float:
        return round(self.selected / self.members, 3) if self.members else 0.0

    def cells(self) -> list[str]:
        return [self.group, str(self.members), str(self.selected), repr(self.fraction)]


def selection_report(result: GroupSelectionResult) -> list[ReportRow]:
    """One row per group plus a trailing ``TOTAL`` row."""
    rows = [ReportRow(g.group_name, g.member_count, len(g.selected_feature_names))
            for g in result.per_group]
    total = sum(r.members for r in rows)
    rows.append(ReportRow("TOTAL", total, len(result.merged_features)))
    return rows


def report_text(rows: list[ReportRow]) -> str:
    width = max(len("group"), *(len(r.group) for r in rows))
    lines = [f"{'group':<{width}}  members  selected  fraction"]
    for r in rows:
        lines.append(f"{r.group:<{width}}  {r.members:>7}  {r.selected:>8}  {r.fraction:>8}")
    return "\n".join(lines)


def report_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "members", "selected", "fraction"])
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()
