"""Dataset directory layout used by the CLI.

    <dir>/crops/<object_id>.ppm
    <dir>/factors.csv        id,image_id,color_class,bulb_radius,...
    <dir>/annotations.jsonl  one record per image
    <dir>/dataset.json       generation settings
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

from . import detect_eval, formats
from .synthgen import CropFactors, DatasetSpec, ImageCrop

FACTOR_COLUMNS = ["id", "image_id", "color_class", "bulb_radius", "background_brightness",
                  "blur_sigma", "inlay", "hue_shift"]


@dataclass
class Dataset:
    ids: list
    crops: list
    factors: list  # dict rows from factors.csv
    annotations: list

    def labels(self) -> list[str]:
        return [r["color_class"] for r in self.factors]

    def factor_map(self) -> dict:
        return {r["id"]: r for r in self.factors}


def write_dataset(out, spec: DatasetSpec, crops, factors, annotations) -> None:
    out = Path(out)
    (out / "crops").mkdir(parents=True, exist_ok=True)
    rows = []
    for crop, f, a in zip(crops, factors, annotations):
        formats.write_ppm(out / "crops" / f"{a.object_id}.ppm", crop.pixels)
        r = f.as_row()
        rows.append([a.object_id, a.image_id] + [r[c] for c in FACTOR_COLUMNS[2:]])
    formats.write_rows(out / "factors.csv", FACTOR_COLUMNS, rows)
    formats.write_jsonl(out / "annotations.jsonl", detect_eval.annotations_to_records(annotations))
    doc = asdict(spec)
    doc["factor_ranges"] = {k: list(v) for k, v in spec.factor_ranges.items()}
    doc["exclude_classes"] = list(spec.exclude_classes)
    formats.write_json(out / "dataset.json", doc)


def require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing input: {p}")
    return p


def load_dataset(root, with_crops: bool = True, exclude_classes=()) -> Dataset:
    root = Path(root)
    rows = formats.read_rows(require(root / "factors.csv"))
    rows = [r for r in rows if r["color_class"] not in exclude_classes]
    ann = {a.object_id: a for a in detect_eval.annotations_from_records(
        formats.read_jsonl(require(root / "annotations.jsonl")))}
    crops = [ImageCrop(formats.read_ppm(require(root / "crops" / f"{r['id']}.ppm"))) for r in rows] if with_crops else []
    return Dataset([r["id"] for r in rows], crops, rows, [ann[r["id"]] for r in rows if r["id"] in ann])


def factors_from_row(row: dict) -> CropFactors:
    return CropFactors(
        color_class=row["color_class"],
        bulb_radius=float(row["bulb_radius"]),
        background_brightness=float(row["background_brightness"]),
        blur_sigma=float(row["blur_sigma"]),
        inlay=row["inlay"],
        hue_shift=float(row["hue_shift"]),
    )
