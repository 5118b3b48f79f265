"""Displacement-error metrics and the test-set evaluation report."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Manifest, read_sample


class LengthMismatch(ValueError):
    pass


class HorizonTooShort(ValueError):
    pass


def _check_pair(preds: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
        t = t[None]
    if p.shape != t.shape or p.ndim != 3 or p.shape[0] < 1:
        raise LengthMismatch(f"predictions {p.shape} vs targets {t.shape}")
    return p, t


def _dists(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.linalg.norm(p - t, axis=2)  # (n, H)


def ade_full(preds, targets) -> float:
    """Mean over samples of the mean waypoint displacement."""
    p, t = _check_pair(preds, targets)
    return float(np.mean(np.mean(_dists(p, t), axis=1)))


def ade_half(preds, targets) -> float:
    """Displacement averaged over the first floor((H-1)/2) waypoints only."""
    p, t = _check_pair(preds, targets)
    h = p.shape[1]
    half = (h - 1) // 2
    if half < 1:
        raise HorizonTooShort(f"horizon {h} leaves no early waypoints")
    return float(np.mean(np.mean(_dists(p, t)[:, :half], axis=1)))


def fde(preds, targets) -> float:
    """Mean displacement of the final waypoint."""
    p, t = _check_pair(preds, targets)
    return float(np.mean(_dists(p, t)[:, -1]))


def mde(preds, targets) -> float:
    """Mean over samples of the worst per-sample waypoint displacement."""
    p, t = _check_pair(preds, targets)
    return float(np.mean(np.max(_dists(p, t), axis=1)))


@dataclass
class EvalReport:
    model: str
    n: int
    ade_full: float
    ade_half: float
    fde: float
    mde: float

    def to_text(self) -> str:
        header = f"{'Model':<24}{'ADE_FULL':>12}{'ADE_HALF':>12}{'FDE':>12}{'MDE':>12}"
        row = (f"{self.model:<24}{self.ade_full:>12.6f}{self.ade_half:>12.6f}"
               f"{self.fde:>12.6f}{self.mde:>12.6f}")
        detail = "\n".join(
            f"{k}={getattr(self, k)!r}"
            for k in ("n", "ade_full", "ade_half", "fde", "mde")
        )
        return header + "\n" + row + "\n\n" + detail + "\n"

    def to_json(self) -> str:
        payload = {
            "model": self.model,
            "n": self.n,
            "ade_full": self.ade_full,
            "ade_half": self.ade_half,
            "fde": self.fde,
            "mde": self.mde,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def evaluate(model, data_dir: str | Path, manifest: Manifest, which: str = "test",
             name: str | None = None) -> EvalReport:
    """Run MAP inference per sample of a split and aggregate all four metrics.

    `model` only needs an infer_map(plan, scene) method returning waypoints.
    """
    names = {"train": manifest.train, "test": manifest.test}[which]
    if not names:
        raise LengthMismatch(f"{which} split is empty")
    preds = []
    targets = []
    for fname in names:
        s = read_sample(Path(data_dir) / fname)
        traj = model.infer_map(s.plan, s.scene)
        wp = traj.waypoints if hasattr(traj, "waypoints") else np.asarray(traj)
        if wp.shape != s.target.shape:
            raise LengthMismatch(f"{fname}: prediction {wp.shape} vs target {s.target.shape}")
        preds.append(wp)
        targets.append(s.target)
    p = np.stack(preds)
    t = np.stack(targets)
    if name is None:
        h = manifest.config.get("H", p.shape[1])
        s_cfg = manifest.config.get("S")
        name = f"TridentNet-H{h}" + (f"-S{s_cfg:g}" if s_cfg is not None else "")
    return EvalReport(
        model=name,
        n=len(names),
        ade_full=ade_full(p, t),
        ade_half=ade_half(p, t),
        fde=fde(p, t),
        mde=mde(p, t),
    )
