"""Convolutional spatialization of mono events, static or moving.

Moving sources are rendered with a time-variant scheme: the impulse
response advances along the trajectory with the traversed angle, and each
input sample's contribution is linearly cross-faded between the two nearest
node IRs over every update hop. A single-node trajectory therefore
degenerates to the static renderer.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .arrays import SAMPLE_RATE

MOVING_HOP_S = 0.02


def render_static(signal: np.ndarray, ir: np.ndarray,
                  signal_sr: int | None = None,
                  ir_sr: int | None = None) -> np.ndarray:
    """Linear convolution of a mono signal with a (taps, 4) IR.

    Output shape is (len(signal) + taps - 1, 4); truncation to scene bounds
    is the caller's business.
    """
    if signal_sr is not None and ir_sr is not None and signal_sr != ir_sr:
        raise ValueError(f"sample-rate mismatch: signal {signal_sr}, ir {ir_sr}")
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 1 or signal.size == 0:
        raise ValueError("signal must be non-empty and mono")
    ir = np.atleast_2d(np.asarray(ir, dtype=float))
    return fftconvolve(signal[:, None], ir, axes=0)


def render_moving(signal: np.ndarray, irs: np.ndarray,
                  speed_deg_per_s: float,
                  hop_s: float = MOVING_HOP_S,
                  node_arcs_deg: np.ndarray | None = None,
                  sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Time-variant convolution along an ordered IR sequence.

    Parameters
    ----------
    signal : (n,) mono input.
    irs : (n_nodes, taps, 4) IRs in traversal order.
    speed_deg_per_s : angular speed of the traversal.
    hop_s : IR update interval; within each hop the contribution is
        linearly cross-faded between the hop's boundary IRs.
    node_arcs_deg : cumulative arc position of each IR along the traversal;
        defaults to 1 degree per node.

    The trajectory must reach the arc traversed by the end of the signal.
    """
    signal = np.asarray(signal, dtype=float)
    irs = np.asarray(irs, dtype=float)
    if irs.ndim != 3:
        raise ValueError("irs must have shape (n_nodes, taps, 4)")
    n_nodes, taps, n_ch = irs.shape
    if node_arcs_deg is None:
        node_arcs_deg = np.arange(n_nodes, dtype=float)
    node_arcs_deg = np.asarray(node_arcs_deg, dtype=float)

    n = signal.size
    total_arc = speed_deg_per_s * n / sample_rate
    if n_nodes > 1 and total_arc > node_arcs_deg[-1] + 1e-3:
        raise ValueError(
            f"trajectory too short: need {total_arc:.1f} deg, "
            f"have {node_arcs_deg[-1]:.1f}")

    if n_nodes == 1:
        return fftconvolve(signal[:, None], irs[0], axes=0)

    hop = max(1, int(round(hop_s * sample_rate)))
    starts = np.arange(0, n, hop)
    stops = np.minimum(starts + hop, n)
    boundary_t = np.append(starts, n) / sample_rate
    boundary_nodes = np.argmin(
        np.abs(node_arcs_deg[:, None] - speed_deg_per_s * boundary_t[None, :]),
        axis=0)

    # Group the cross-faded input by destination node: each sample's
    # contribution moves linearly from the block's start-boundary IR to its
    # stop-boundary IR, so one convolution per visited node suffices.
    pieces: dict[int, list[tuple[int, np.ndarray]]] = {}
    for b, (start, stop) in enumerate(zip(starts, stops)):
        block = signal[start:stop]
        idx0, idx1 = int(boundary_nodes[b]), int(boundary_nodes[b + 1])
        if idx0 == idx1:
            pieces.setdefault(idx0, []).append((start, block))
        else:
            w = (np.arange(stop - start) + 0.5) / hop
            pieces.setdefault(idx0, []).append((start, block * (1.0 - w)))
            pieces.setdefault(idx1, []).append((start, block * w))

    out = np.zeros((n + taps - 1, n_ch))
    for idx, chunks in pieces.items():
        span_start = min(s for s, _ in chunks)
        span_stop = max(s + c.size for s, c in chunks)
        weighted = np.zeros(span_stop - span_start)
        for s, c in chunks:
            weighted[s - span_start: s - span_start + c.size] += c
        seg = fftconvolve(weighted[:, None], irs[idx], axes=0)
        out[span_start: span_start + seg.shape[0]] += seg
    return out
