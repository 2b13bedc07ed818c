"""Raw CSI sequence -> real-valued model input.

Pipeline per sequence: trigonometric temporal embedding of each sampling time,
conjugate multiplication against the first Rx chain (cancels the per-packet
common phase error), per-channel normalization over the sequence, and
complex-to-real expansion into (modulus, cos angle, sin angle).

Row n of the output is
    [ tau(t[n]) | |x[n]| | cos(angle x[n]) | sin(angle x[n]) ]
with width L_P = L_T + 3 * n_subcarriers * n_tx * (n_rx - 1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import CsiSequence

DEFAULT_TEMPORAL_WIDTH = 16


@dataclass(frozen=True)
class LinkLayout:
    """Index mapping of the flat CSI vector: subcarrier-major, then tx, then rx."""

    n_subcarriers: int
    n_tx: int
    n_rx: int

    @property
    def n_links(self) -> int:
        return self.n_subcarriers * self.n_tx * self.n_rx

    @property
    def n_channels(self) -> int:
        """Conjugate-multiplied output channels: (n_rx - 1) per (subcarrier, tx)."""
        return self.n_subcarriers * self.n_tx * (self.n_rx - 1)


def output_width(layout: LinkLayout, temporal_width: int = DEFAULT_TEMPORAL_WIDTH) -> int:
    return temporal_width + 3 * layout.n_channels


def temporal_embed(t: float, duration: float, width: int = DEFAULT_TEMPORAL_WIDTH) -> np.ndarray:
    """Periodic trigonometric embedding of a sampling time.

    Element j (1-based) is sin(t / T^(j/width)) for even j and
    cos(t / T^((j-1)/width)) for odd j, giving phase progressions at a
    geometric ladder of speeds.
    """
    if width < 2 or width % 2 != 0:
        raise ValueError("temporal width must be an even integer >= 2")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > duration):
        raise ValueError("sampling times must lie in [0, duration]")
    j = np.arange(1, width + 1)
    exponent = np.where(j % 2 == 0, j, j - 1) / width
    scale = duration ** exponent
    arg = t[..., None] / scale
    return np.where(j % 2 == 0, np.sin(arg), np.cos(arg))


def conjugate_multiply(h: np.ndarray, layout: LinkLayout) -> np.ndarray:
    """Multiply each non-reference Rx chain by the conjugate of the first.

    Accepts (..., L_H) and returns (..., n_channels); a phase factor common to
    all Rx chains of a sample cancels exactly.
    """
    h = np.asarray(h)
    if h.shape[-1] != layout.n_links:
        raise ValueError(f"expected last dimension {layout.n_links}, got {h.shape[-1]}")
    grid = h.reshape(h.shape[:-1] + (layout.n_subcarriers, layout.n_tx, layout.n_rx))
    out = grid[..., 1:] * np.conj(grid[..., :1])
    return out.reshape(h.shape[:-1] + (layout.n_channels,))


def normalize(series: np.ndarray) -> np.ndarray:
    """Detrend one channel's time series by its complex mean, then scale the
    peak modulus to 1.  A constant series maps to all zeros."""
    series = np.asarray(series, dtype=complex)
    if series.shape[-1] < 2:
        raise ValueError("normalization needs at least 2 samples")
    centered = series - series.mean(axis=-1, keepdims=True)
    peak = np.abs(centered).max(axis=-1, keepdims=True)
    return np.divide(centered, peak, out=np.zeros_like(centered), where=peak > 0)


def complex_to_real(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(|x|, cos angle, sin angle); the zero sample maps to (0, 1, 0)."""
    x = np.asarray(x, dtype=complex)
    mod = np.abs(x)
    safe = np.where(mod > 0, mod, 1.0)
    cos = np.where(mod > 0, x.real / safe, 1.0)
    sin = np.where(mod > 0, x.imag / safe, 0.0)
    return mod, cos, sin


def preprocess_sequence(seq: CsiSequence, layout: LinkLayout, duration: float,
                        temporal_width: int = DEFAULT_TEMPORAL_WIDTH) -> np.ndarray:
    """Model input matrix X, shape (N, L_T + 3 * n_channels).

    Normalization runs per conjugate-multiplied channel across the N samples
    of this sequence, before the complex-to-real expansion.
    """
    tau = temporal_embed(seq.timestamps, duration, temporal_width)
    x = conjugate_multiply(seq.samples, layout)          # (N, n_channels)
    x = normalize(x.T).T                                 # per channel over the sequence
    mod, cos, sin = complex_to_real(x)
    out = np.concatenate([tau, mod, cos, sin], axis=1)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("preprocessing produced non-finite values")
    return out


def preprocess_domain(entries, layout: LinkLayout, duration: float,
                      temporal_width: int = DEFAULT_TEMPORAL_WIDTH):
    """Preprocess a list of (CsiSequence, one-hot) pairs.

    Returns (list of X matrices, targets array (M, C)).
    """
    xs = [preprocess_sequence(seq, layout, duration, temporal_width) for seq, _ in entries]
    targets = np.array([onehot for _, onehot in entries], dtype=float)
    return xs, targets
