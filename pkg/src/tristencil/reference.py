"""Reference transport step over flat element arrays.

This is the unstructured-style formulation: element identities are opaque
ranks, neighborhoods come from explicit tables, and every stage is a plain
loop over elements.  It shares no execution machinery with the stage
framework -- bodies here are written out longhand -- yet follows the same
operation order, so a correct framework must reproduce it bitwise.

Arrays are indexed ``[element, level]``.  Neighbor tables may be built under
any element numbering, as long as data arrays use the same ranks.
"""

from __future__ import annotations

import numpy as np


def upwind_flux(e2v: np.ndarray, vn: np.ndarray, pd: np.ndarray) -> np.ndarray:
    """Donor-cell edge flux: the upwind endpoint supplies the density."""
    flux = np.empty_like(vn)
    for e in range(vn.shape[0]):
        v1, v2 = e2v[e]
        zpos = np.maximum(vn[e], 0.0)
        zneg = np.minimum(vn[e], 0.0)
        flux[e] = pd[v1] * zpos + pd[v2] * zneg
    return flux


def centred_flux(e2v: np.ndarray, vn: np.ndarray, pd: np.ndarray) -> np.ndarray:
    """Arithmetic-mean edge flux."""
    flux = np.empty_like(vn)
    for e in range(vn.shape[0]):
        v1, v2 = e2v[e]
        flux[e] = 0.5 * vn[e] * (pd[v1] + pd[v2])
    return flux


def upwind_fluz(wn: np.ndarray, pd: np.ndarray, pivbz: float) -> np.ndarray:
    """Vertical interface flux with scaled-copy boundaries.

    Interior interfaces upwind between the adjacent layers; the bottom and
    top interfaces literally copy the neighboring interior interface scaled
    by ``pivbz``.
    """
    n, levels = pd.shape
    if levels < 2:
        raise ValueError(f"need at least 2 levels, got {levels}")
    if wn.shape != (n, levels + 1):
        raise ValueError(f"wn must be staggered: expected {(n, levels + 1)}, "
                         f"got {wn.shape}")
    fluz = np.empty_like(wn)
    for v in range(n):
        w = wn[v, 1:levels]
        fluz[v, 1:levels] = (
            np.maximum(w, 0.0) * pd[v, : levels - 1]
            + np.minimum(w, 0.0) * pd[v, 1:]
        )
        fluz[v, 0] = pivbz * fluz[v, 1]
        fluz[v, levels] = pivbz * fluz[v, levels - 1]
    return fluz


def flux_divergence(
    v2e: np.ndarray,
    signs: np.ndarray,
    dual_volumes: np.ndarray,
    flux: np.ndarray,
    fluz: np.ndarray,
) -> np.ndarray:
    """Signed flux sum per dual volume, horizontal then vertical."""
    n, levels = fluz.shape[0], fluz.shape[1] - 1
    div = np.empty((n, levels), dtype=flux.dtype)
    for v in range(n):
        acc = 0.0
        for slot in range(v2e.shape[1]):
            acc = signs[v, slot] * flux[v2e[v, slot]] + acc
        acc = acc + (fluz[v, 1:] - fluz[v, :-1])
        div[v] = acc / dual_volumes[v]
    return div


def advance_density(pd: np.ndarray, div: np.ndarray, rho: np.ndarray,
                    dt: float) -> np.ndarray:
    """Explicit Euler: density minus dt times divergence over rho."""
    out = np.empty_like(pd)
    for v in range(pd.shape[0]):
        slope = dt * div[v]
        slope = slope / rho[v]
        out[v] = pd[v] - slope
    return out


def transport_step(
    e2v: np.ndarray,
    v2e: np.ndarray,
    signs: np.ndarray,
    dual_volumes: np.ndarray,
    pd: np.ndarray,
    vn: np.ndarray,
    wn: np.ndarray,
    rho: np.ndarray,
    dt: float,
    pivbz: float,
    flux_op: str = "upwind",
) -> dict[str, np.ndarray]:
    """One full step; returns every intermediate for inspection."""
    if flux_op == "upwind":
        flux = upwind_flux(e2v, vn, pd)
    elif flux_op == "centred":
        flux = centred_flux(e2v, vn, pd)
    else:
        raise ValueError(f"unknown flux operator {flux_op!r}")
    fluz = upwind_fluz(wn, pd, pivbz)
    div = flux_divergence(v2e, signs, dual_volumes, flux, fluz)
    out = advance_density(pd, div, rho, dt)
    return {"flux": flux, "fluz": fluz, "div": div, "pd_out": out}


def cell_divergence(
    c2e: np.ndarray,
    vn: np.ndarray,
    edge_length: np.ndarray,
    cell_area: np.ndarray,
) -> np.ndarray:
    """Per-cell divergence: length-weighted normal velocities over the area."""
    n = c2e.shape[0]
    div = np.empty((n,) + vn.shape[1:], dtype=vn.dtype)
    for c in range(n):
        acc = 0.0
        for slot in range(c2e.shape[1]):
            e = c2e[c, slot]
            acc = vn[e] * edge_length[e] + acc
        div[c] = acc / cell_area[c]
    return div


def neighbor_sum(table: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Plain neighborhood sum in table order (slot 0 first)."""
    out = np.empty((table.shape[0],) + a.shape[1:], dtype=a.dtype)
    for r in range(table.shape[0]):
        acc = 0.0
        for slot in range(table.shape[1]):
            acc = a[table[r, slot]] + acc
        out[r] = acc
    return out


def neighbor_sum_scaled(table: np.ndarray, a: np.ndarray,
                        fac: np.ndarray) -> np.ndarray:
    """Neighborhood sum times a per-element factor."""
    out = np.empty((table.shape[0],) + a.shape[1:], dtype=a.dtype)
    for r in range(table.shape[0]):
        acc = 0.0
        for slot in range(table.shape[1]):
            acc = a[table[r, slot]] + acc
        out[r] = acc * fac[r]
    return out
