"""Parameter-count comparison of center matching against a classification head."""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class ParamRow:
    method: str  # "LSC" or "Classification"
    n_classes: int
    backbone_params: int
    extra_params: int
    output_shape: str

    @property
    def total_params(self) -> int:
        return self.backbone_params + self.extra_params

    @property
    def head_exceeds_backbone(self) -> bool:
        return self.extra_params > self.backbone_params


@dataclass(frozen=True)
class ParamReport:
    n_dim: int
    rows: tuple[ParamRow, ...]

    @property
    def crossover(self) -> int | None:
        """Smallest listed n_classes whose classification head outgrows the backbone."""
        hits = [r.n_classes for r in self.rows if r.method == "Classification" and r.head_exceeds_backbone]
        return min(hits) if hits else None

    def to_text(self) -> str:
        head = f"{'method':<15}{'n_classes':>12}{'backbone':>14}{'extra':>16}{'total':>16}  output"
        lines = [head]
        for r in self.rows:
            flag = "  *head > backbone" if r.head_exceeds_backbone else ""
            lines.append(
                f"{r.method:<15}{r.n_classes:>12}{r.backbone_params:>14}{r.extra_params:>16}"
                f"{r.total_params:>16}  {r.output_shape}{flag}"
            )
        if self.crossover is not None:
            lines.append(f"classification head exceeds the backbone from n_classes={self.crossover}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "n_classes", "backbone_params", "extra_params", "total_params",
                        "output_shape", "head_exceeds_backbone"])
            for r in self.rows:
                w.writerow([r.method, r.n_classes, r.backbone_params, r.extra_params, r.total_params,
                            r.output_shape, int(r.head_exceeds_backbone)])


def report_params(n_dim: int, backbone_params: int, n_classes_list) -> ParamReport:
    """LSC adds nothing per class; a linear head adds n_dim * n_classes weights."""
    if n_dim < 1 or backbone_params < 1:
        raise ConfigurationError("n_dim and backbone_params must be positive")
    backbone_params = int(backbone_params)
    rows = []
    for k in n_classes_list:
        k = int(k)
        if k < 1:
            raise ConfigurationError("n_classes must be positive")
        rows.append(ParamRow("LSC", k, backbone_params, 0, f"[b_s, {n_dim}]"))
    for k in n_classes_list:
        k = int(k)
        rows.append(ParamRow("Classification", k, backbone_params, n_dim * k, f"[b_s, {k}]"))
    return ParamReport(n_dim, tuple(rows))
