"""Ablation runner: train and evaluate a family of config variants.

Four groups are built in, mirroring the questions the architecture
raises: which branch losses matter, how many refinement stages to run,
which components earn their keep, and how wide the embeddings should be.
Every variant trains with the same seed and dataset; each run writes its
own directory with the canonical config echo, so any row of the emitted
table can be audited against the exact configuration that produced it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .config import RunConfig, with_overrides
from .summary import count_parameters
from .train import train
from .metrics import MetricReport
from .model import Model
from .rng import Rng
from .train import SegmentationDataset, evaluate, load_checkpoint


@dataclass
class Variant:
    group: str
    name: str
    overrides: dict


def loss_variants() -> list[Variant]:
    """Branch-loss combinations: static, dynamic, both, both + contrastive."""
    return [
        Variant("loss", "static_only", {"lambda_dynamic": 0.0, "contrastive": False}),
        Variant("loss", "dynamic_only", {"lambda_static": 0.0, "contrastive": False}),
        Variant("loss", "dual_no_contrastive", {"contrastive": False}),
        Variant("loss", "dual_contrastive", {}),
    ]


def stage_variants() -> list[Variant]:
    return [Variant("stages", f"stages_{l}", {"stages": l}) for l in (1, 2, 3, 4)]


def component_variants() -> list[Variant]:
    """Single-component knockouts plus the full model."""
    rows = [
        ("no_modulator", {"modulator": False}),
        ("no_aggregator", {"aggregator": False}),
        ("no_interaction", {"interaction": False}),
        ("full", {}),
    ]
    return [Variant("components", name, overrides) for name, overrides in rows]


def width_variants() -> list[Variant]:
    return [
        Variant("width", f"width_{w}", {"embed_channels": w})
        for w in (64, 128, 256, 512)
    ]


GROUPS = {
    "loss": loss_variants,
    "stages": stage_variants,
    "components": component_variants,
    "width": width_variants,
}


@dataclass
class AblationRow:
    group: str
    name: str
    overrides: dict
    param_count: int
    miou: float
    mf1: float
    oa: float
    run_dir: str


def run_variant(base: RunConfig, variant: Variant, data_root: str, out_root: str) -> AblationRow:
    run_dir = os.path.join(out_root, f"{variant.group}_{variant.name}")
    config = with_overrides(
        base, {**variant.overrides, "out_dir": run_dir, "data_root": data_root}
    )
    train(config, data_root=data_root, out_dir=run_dir)

    model = Model(config, Rng(config.seed))
    load_checkpoint(os.path.join(run_dir, "checkpoints", "best"), model)
    report: MetricReport = evaluate(model, SegmentationDataset(data_root, "val"), config)
    return AblationRow(
        group=variant.group,
        name=variant.name,
        overrides=variant.overrides,
        param_count=count_parameters(config),
        miou=report.miou,
        mf1=report.mf1,
        oa=report.oa,
        run_dir=run_dir,
    )


def render_table(rows: list[AblationRow]) -> str:
    name_width = max([len(f"{r.group}/{r.name}") for r in rows] + [len("variant")])
    header = (
        f"{'variant':<{name_width}}  {'params':>10}  {'miou':>8}  {'mf1':>8}  {'oa':>8}"
    )
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.group + '/' + r.name:<{name_width}}  {r.param_count:>10}"
            f"  {r.miou:>8.4f}  {r.mf1:>8.4f}  {r.oa:>8.4f}"
        )
    return "\n".join(lines)


def ablate(
    base: RunConfig,
    data_root: str,
    out_root: str,
    groups: list[str] | None = None,
) -> list[AblationRow]:
    """Run every variant of the requested groups; writes ablation.txt."""
    os.makedirs(out_root, exist_ok=True)
    selected = groups or list(GROUPS)
    rows = []
    for group in selected:
        for variant in GROUPS[group]():
            rows.append(run_variant(base, variant, data_root, out_root))
    table = render_table(rows)
    with open(os.path.join(out_root, "ablation.txt"), "w", encoding="utf-8") as handle:
        handle.write(table + "\n")
    return rows
