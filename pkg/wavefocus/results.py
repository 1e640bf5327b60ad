"""
Result records and the files they are written to.
"""

import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .allocation import Heatmap

logger = logging.getLogger(__name__)

TRIAL_COLUMNS = [
    "trial",
    "scheme",
    "K",
    "L",
    "M",
    "nmse",
    "iterations",
    "sum_rate_bps_hz",
    "min_sinr_db",
    "max_sinr_db",
]


@dataclass
class TrialResult:
    trial: int
    scheme: str
    K: int
    L: int
    M: int
    nmse: float = math.nan
    iterations: int = 0
    sum_rate: float = math.nan
    sinr: List[float] = field(default_factory=list)  # linear, per UE
    powers: List[float] = field(default_factory=list)  # W, per UE
    arm: str = "near"
    power_converged: bool = True  # False when water-filling hit its round limit
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def sinr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(np.asarray(self.sinr, dtype=float))

    def row(self) -> dict:
        db = self.sinr_db()
        return {
            "trial": self.trial,
            "scheme": self.scheme,
            "K": self.K,
            "L": self.L,
            "M": self.M,
            "nmse": _fmt(self.nmse),
            "iterations": self.iterations,
            "sum_rate_bps_hz": _fmt(self.sum_rate),
            "min_sinr_db": _fmt(float(db.min())) if db.size else "nan",
            "max_sinr_db": _fmt(float(db.max())) if db.size else "nan",
        }


def _fmt(value: float) -> str:
    return repr(float(value))


def _ensure_dir(path: str) -> None:
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)


def write_trials_csv(results: Iterable[TrialResult], out_path: str) -> int:
    """Per-trial rows in trial order; failures also go to <name>_errors.csv."""
    ordered = sorted(results, key=lambda r: (r.trial, r.L, r.K, r.arm, r.scheme))
    _ensure_dir(out_path)
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=TRIAL_COLUMNS)
        writer.writeheader()
        for r in ordered:
            writer.writerow(r.row())

    failed = [r for r in ordered if not r.ok]
    if failed:
        root, ext = os.path.splitext(out_path)
        with open(f"{root}_errors{ext}", "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=["trial", "scheme", "K", "L", "error"])
            writer.writeheader()
            for r in failed:
                writer.writerow({"trial": r.trial, "scheme": r.scheme, "K": r.K, "L": r.L, "error": r.error})
        logger.warning("%d failed trial rows recorded", len(failed))
    return len(ordered)


def to_frame(results: Iterable[TrialResult]) -> pd.DataFrame:
    rows = []
    for r in results:
        d = asdict(r)
        d.pop("sinr")
        d.pop("powers")
        rows.append(d)
    frame = pd.DataFrame(rows, columns=["trial", "scheme", "K", "L", "M", "nmse", "iterations",
                                        "sum_rate", "arm", "power_converged", "error"])
    return frame.sort_values(["trial", "L", "K", "arm", "scheme"], kind="mergesort").reset_index(drop=True)


def summarize(results: Iterable[TrialResult], by: Sequence[str]) -> pd.DataFrame:
    """Mean and std of sum rate and NMSE per group.

    Failed trials are counted, not averaged. `power_unconverged` counts rows
    whose water-filling stopped at the round limit.
    """
    frame = to_frame(results)
    keys = list(by)
    good = frame[frame["error"].isna()].assign(unconverged=lambda f: ~f["power_converged"].astype(bool))
    table = (
        good.groupby(keys, sort=True)
        .agg(
            trials=("trial", "count"),
            sum_rate_mean=("sum_rate", "mean"),
            sum_rate_std=("sum_rate", "std"),
            nmse_mean=("nmse", "mean"),
            nmse_std=("nmse", "std"),
            iterations_mean=("iterations", "mean"),
            power_unconverged=("unconverged", "sum"),
        )
        .reset_index()
    )
    failures = frame[frame["error"].notna()].groupby(keys, sort=True).size().rename("failed").reset_index()
    table = table.merge(failures, on=keys, how="outer").fillna({"failed": 0, "trials": 0, "power_unconverged": 0})
    table["failed"] = table["failed"].astype(int)
    table["power_unconverged"] = table["power_unconverged"].astype(int)
    table["trials"] = table["trials"].astype(int)
    return table.sort_values(keys, kind="mergesort").reset_index(drop=True)


def write_table(table: pd.DataFrame, out_path: str) -> None:
    _ensure_dir(out_path)
    table.to_csv(out_path, index=False, float_format="%.10g")


def write_heatmap(grid: Heatmap, out_path: str) -> None:
    """Header '# x_min x_max nx', '# y_min y_max ny', then ny rows of nx energies."""
    _ensure_dir(out_path)
    with open(out_path, "w", encoding="utf-8") as f:
        f.write(f"# {_fmt(grid.x[0])} {_fmt(grid.x[-1])} {grid.x.size}\n")
        f.write(f"# {_fmt(grid.y[0])} {_fmt(grid.y[-1])} {grid.y.size}\n")
        for row in grid.energy:
            f.write(" ".join(_fmt(v) for v in row) + "\n")


def read_heatmap(path: str) -> Heatmap:
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]
    x_min, x_max, nx = lines[0].lstrip("#").split()
    y_min, y_max, ny = lines[1].lstrip("#").split()
    energy = np.array([[float(v) for v in line.split()] for line in lines[2:]])
    xs = np.linspace(float(x_min), float(x_max), int(nx))
    ys = np.linspace(float(y_min), float(y_max), int(ny))
    return Heatmap(xs, ys, energy.reshape(int(ny), int(nx)))
