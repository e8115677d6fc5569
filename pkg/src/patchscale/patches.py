"""Patch construction from segmentation boundaries and directional classification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .segmentation import Segmentation
from .trades import SignedSeries

DIRECTION_BUY = "buy"
DIRECTION_SELL = "sell"
NON_DIRECTIONAL = "none"

DEFAULT_THETA = 0.75
DEFAULT_MIN_TRADES = 10


@dataclass(frozen=True, slots=True)
class Patch:
    """One contiguous segment of a signed series with its trade aggregates.

    V is exactly V_b + V_s; the range is [start, end) over series indices.
    """

    firm_id: str
    stock_id: str
    start: int
    end: int
    V_b: float
    V_s: float
    V: float
    n_buy: int
    n_sell: int
    t_first: int
    t_last: int


@dataclass(frozen=True, slots=True)
class DirectionalPatch:
    """A buy or sell patch with the variables the scaling analysis consumes."""

    patch: Patch
    direction: str
    T: int
    N_m: int
    V_m: float


def cut_patches(series: SignedSeries, seg: Segmentation) -> list[Patch]:
    """One Patch per consecutive boundary pair; ranges tile the series exactly."""
    boundaries = seg.boundaries
    n = len(series)
    if not boundaries or boundaries[0] != 0 or boundaries[-1] != n:
        raise ValueError(f"boundaries {boundaries!r} do not span a series of length {n}")
    if any(b >= c for b, c in zip(boundaries, boundaries[1:])):
        raise ValueError("boundaries must be strictly increasing")
    values = series.signed_values
    timestamps = series.timestamps
    out = []
    for start, end in zip(boundaries[:-1], boundaries[1:]):
        chunk = values[start:end]
        buys = chunk > 0
        v_b = float(chunk[buys].sum())
        v_s = float(-chunk[~buys].sum())
        out.append(
            Patch(
                firm_id=series.firm_id,
                stock_id=series.stock_id,
                start=int(start),
                end=int(end),
                V_b=v_b,
                V_s=v_s,
                V=v_b + v_s,
                n_buy=int(buys.sum()),
                n_sell=int(end - start - buys.sum()),
                t_first=int(timestamps[start]),
                t_last=int(timestamps[end - 1]),
            )
        )
    return out


def classify(patch: Patch, theta: float = DEFAULT_THETA) -> str:
    """Buy iff V_b/V > theta, sell iff V_s/V > theta, otherwise non-directional.

    The inequality is strict, so a patch exactly at the threshold is
    non-directional.  theta above 0.5 makes the outcomes mutually exclusive.
    """
    if not 0.5 < theta <= 1.0:
        raise ValueError(f"theta must be in (0.5, 1], got {theta}")
    if patch.V <= 0.0:
        return NON_DIRECTIONAL
    if patch.V_b / patch.V > theta:
        return DIRECTION_BUY
    if patch.V_s / patch.V > theta:
        return DIRECTION_SELL
    return NON_DIRECTIONAL


def as_directional(patch: Patch, direction: str) -> DirectionalPatch:
    """Attach (T, N_m, V_m) for an already-classified buy or sell patch."""
    if direction == DIRECTION_BUY:
        n_m, v_m = patch.n_buy, patch.V_b
    elif direction == DIRECTION_SELL:
        n_m, v_m = patch.n_sell, patch.V_s
    else:
        raise ValueError(f"direction must be buy or sell, got {direction!r}")
    return DirectionalPatch(
        patch=patch,
        direction=direction,
        T=patch.t_last - patch.t_first,
        N_m=n_m,
        V_m=v_m,
    )


def directional_patches(
    series: SignedSeries,
    seg: Segmentation,
    theta: float = DEFAULT_THETA,
    min_trades: int = DEFAULT_MIN_TRADES,
) -> list[DirectionalPatch]:
    """Buy/sell patches with at least min_trades total trades, in series order."""
    out = []
    for patch in cut_patches(series, seg):
        if patch.end - patch.start < min_trades:
            continue
        direction = classify(patch, theta)
        if direction == NON_DIRECTIONAL:
            continue
        out.append(as_directional(patch, direction))
    return out


def variables(patches: list[DirectionalPatch]) -> dict[str, np.ndarray]:
    """Arrays of T, N_m, V_m across patches, keyed by variable name."""
    return {
        "T": np.array([p.T for p in patches], dtype=np.float64),
        "N_m": np.array([p.N_m for p in patches], dtype=np.float64),
        "V_m": np.array([p.V_m for p in patches], dtype=np.float64),
    }
