# visualization/svg_plots.py
from __future__ import annotations
from io import BytesIO
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from domain.errors import RunDataError  # noqa: E402


def _to_svg(fig) -> bytes:
    buf = BytesIO()
    fig.tight_layout()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    return buf.getvalue()


def price_plot(prices: pd.Series, tariff: Optional[np.ndarray] = None) -> bytes:
    """Цена по слотам; тариф сети пунктиром."""
    fig, ax = plt.subplots(figsize=(8, 3.5))
    slots = np.arange(len(prices))
    ax.step(slots, prices.to_numpy(dtype=float), where="post", linewidth=2, label="clearing price")
    if tariff is not None:
        ax.step(slots, tariff, where="post", linestyle="--", color="gray", label="grid tariff")
    ax.set_xlabel("slot")
    ax.set_ylabel("€cent/kWh")
    ax.set_title("Clearing price")
    ax.legend()
    return _to_svg(fig)


def lambda_trace_plot(trace: pd.DataFrame, slot: int) -> bytes:
    rows = trace[trace["slot"] == slot]
    if rows.empty:
        raise RunDataError(f"trace has no iterations for slot {slot}")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(rows["iter"], rows["lambda"], marker=".", linewidth=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("λ, €cent/kWh")
    ax.set_title(f"Price iterations, slot {slot}")
    return _to_svg(fig)


def profile_plot(profile: pd.DataFrame) -> bytes:
    """Выработка генераторов (с накоплением) против суммарного потребления."""
    generators = [c for c in profile.columns if c not in ("slot", "consumption")]
    slots = profile["slot"].to_numpy()
    fig, ax = plt.subplots(figsize=(8, 4))
    # NaN в упавших слотах: рисуем как ноль
    ax.stackplot(
        slots,
        *[np.nan_to_num(profile[g].to_numpy(dtype=float)) for g in generators],
        labels=generators,
        alpha=0.8,
    )
    ax.plot(slots, profile["consumption"], color="black", linewidth=2, label="consumption")
    ax.set_xlabel("slot")
    ax.set_ylabel("kW")
    ax.set_title("Generation and consumption")
    ax.legend(loc="upper left")
    return _to_svg(fig)
