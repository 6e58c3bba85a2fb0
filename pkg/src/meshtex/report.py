"""Run reports: JSON summary, per-step CSV, and matplotlib figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def write_report(report: dict, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    path.write_text(json.dumps(report, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)}")


def write_step_csv(step_records: list[dict], out_dir: str | Path) -> Path | None:
    if not step_records:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "steps.csv"
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(step_records[0].keys()))
        writer.writeheader()
        writer.writerows(step_records)
    return path


def render_report_figures(report: dict, out_dir: str | Path) -> list[Path]:
    """Residual and inversion-loss curves as PNG files next to the report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    steps = report.get("steps", [])
    if isinstance(steps, list) and steps and isinstance(steps[0], dict):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([s["step"] for s in steps], [s["render_residual"] for s in steps])
        ax.set_xlabel("diffusion step")
        ax.set_ylabel("weighted render residual")
        ax.set_yscale("log")
        ax.set_title("Latent render residual per step")
        fig.tight_layout()
        path = out_dir / "render_residual.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    losses = report.get("inversion_losses", [])
    if losses:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(np.arange(len(losses)), losses)
        ax.set_xlabel("inversion step")
        ax.set_ylabel("smoothed l1 loss")
        ax.set_title("Latent alignment loss")
        fig.tight_layout()
        path = out_dir / "inversion_loss.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    spreads = report.get("masked_spread", [])
    if spreads:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(np.arange(len(spreads)), spreads)
        ax.set_xlabel("diffusion step")
        ax.set_ylabel("masked RMS spread")
        ax.set_title("Cross-image agreement in the masked region")
        fig.tight_layout()
        path = out_dir / "masked_spread.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written


def save_rgb_png(image: np.ndarray, path: str | Path) -> None:
    """Clamp an RGB float image to [0, 1] and write it as 8-bit PNG."""
    from PIL import Image

    image = np.asarray(image, dtype=np.float64)
    if not np.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    quantized = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path)


def save_gray_png(values: np.ndarray, path: str | Path) -> None:
    """Dump a single-channel map (e.g. depth/weight/mask) as 8-bit PNG."""
    from PIL import Image

    values = np.asarray(values, dtype=np.float64)
    vmax = values.max()
    scaled = values / vmax if vmax > 0 else values
    Image.fromarray(np.floor(scaled * 255.0 + 0.5).astype(np.uint8), "L").save(path)
