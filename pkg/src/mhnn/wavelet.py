"""Multilevel discrete wavelet decomposition of multichannel windows.

Every routine works along the last axis, so a single window (C, T) and a
batch of windows (B, C, T) go through the same code path. Channels never
interact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class FilterPair:
    lowpass: np.ndarray
    highpass: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lowpass, dtype=np.float64)
        hi = np.asarray(self.highpass, dtype=np.float64)
        if lo.ndim != 1 or hi.ndim != 1 or lo.shape != hi.shape or lo.size < 2:
            raise ValueError("lowpass and highpass must be vectors of equal length >= 2")
        object.__setattr__(self, "lowpass", lo)
        object.__setattr__(self, "highpass", hi)

    @property
    def length(self) -> int:
        return self.lowpass.size


def haar_filters() -> FilterPair:
    return FilterPair(
        lowpass=np.array([_INV_SQRT2, _INV_SQRT2]),
        highpass=np.array([_INV_SQRT2, -_INV_SQRT2]),
    )


def _extend_to_even(signal: np.ndarray) -> np.ndarray:
    # zero-order hold: repeat the last sample
    if signal.shape[-1] % 2 == 0:
        return signal
    return np.concatenate([signal, signal[..., -1:]], axis=-1)


def dwt_step(signal, filters: FilterPair) -> tuple[np.ndarray, np.ndarray]:
    """One analysis step: stride-2 correlation with the low- and high-pass filters.

    ``approx[m] = sum_k signal[2m + k] * lowpass[k]`` and likewise for
    ``detail``. Odd-length input is first extended by repeating its last
    sample, so both outputs have length ``ceil(n / 2)`` for two-tap filters.
    """
    signal = np.asarray(signal)
    if signal.ndim == 0 or signal.shape[-1] == 0:
        raise ValueError("empty input")
    if not np.issubdtype(signal.dtype, np.floating):
        signal = signal.astype(np.float64)
    ext = _extend_to_even(signal)
    k = filters.length
    if ext.shape[-1] < k:
        raise ValueError("signal shorter than filter")
    n_out = (ext.shape[-1] - k) // 2 + 1
    lo = filters.lowpass.astype(ext.dtype)
    hi = filters.highpass.astype(ext.dtype)
    # Tap-by-tap elementwise sums: every output position rounds identically,
    # unlike a BLAS product whose lanes may fuse differently.
    approx = np.zeros(ext.shape[:-1] + (n_out,), dtype=ext.dtype)
    detail = np.zeros_like(approx)
    for j in range(k):
        taps = ext[..., j : j + 2 * n_out - 1 : 2]
        approx += taps * lo[j]
        detail += taps * hi[j]
    return approx, detail


def idwt_step(approx, detail, filters: FilterPair, length: int | None = None) -> np.ndarray:
    """Synthesis step for an orthonormal two-tap pair (transpose of ``dwt_step``).

    ``length`` truncates the result, undoing the odd-length extension.
    """
    approx = np.asarray(approx)
    detail = np.asarray(detail)
    if approx.shape != detail.shape:
        raise ValueError("inconsistent pyramid")
    if filters.length != 2:
        raise NotImplementedError("reconstruction is implemented for two-tap filters only")
    lo = filters.lowpass.astype(approx.dtype)
    hi = filters.highpass.astype(approx.dtype)
    out = np.empty(approx.shape[:-1] + (2 * approx.shape[-1],), dtype=approx.dtype)
    out[..., 0::2] = approx * lo[0] + detail * hi[0]
    out[..., 1::2] = approx * lo[1] + detail * hi[1]
    if length is not None:
        if not (2 * approx.shape[-1] - 1 <= length <= 2 * approx.shape[-1]):
            raise ValueError("inconsistent pyramid")
        out = out[..., :length]
    return out


@dataclass
class WaveletPyramid:
    """Components ``[X, H(1), ..., H(I), L(I)]`` of one window (or a batch).

    ``details[i - 1]`` holds H(i); temporal lengths halve (rounding up) per level.
    """

    x: np.ndarray
    details: list[np.ndarray]
    approx: np.ndarray
    levels: int = field(default=0)

    def __post_init__(self):
        if not self.levels:
            self.levels = len(self.details)

    def components(self) -> dict[str, np.ndarray]:
        out = {"x": self.x}
        for i, d in enumerate(self.details, start=1):
            out[f"h{i}"] = d
        out[f"l{self.levels}"] = self.approx
        return out

    def check(self) -> None:
        if len(self.details) != self.levels or self.levels < 1:
            raise ValueError("inconsistent pyramid")
        length = self.x.shape[-1]
        lead = self.x.shape[:-1]
        for d in self.details:
            length = math.ceil(length / 2)
            if d.shape != lead + (length,):
                raise ValueError("inconsistent pyramid")
        if self.approx.shape != self.details[-1].shape:
            raise ValueError("inconsistent pyramid")


def mdwd(window, filters: FilterPair, levels: int) -> WaveletPyramid:
    """Decompose each channel of ``window`` (..., C, T) into ``levels`` detail bands
    plus the final approximation, recursing on the low-pass output."""
    window = np.asarray(window)
    if not np.issubdtype(window.dtype, np.floating):
        window = window.astype(np.float64)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if window.ndim < 1 or window.shape[-1] < 2**levels:
        raise ValueError("window too short for decomposition depth")
    details = []
    approx = window
    for _ in range(levels):
        approx, detail = dwt_step(approx, filters)
        details.append(detail)
    return WaveletPyramid(x=window, details=details, approx=approx, levels=levels)


def reconstruct(pyramid: WaveletPyramid, filters: FilterPair) -> np.ndarray:
    """Invert ``mdwd``. Lengths recorded in the pyramid drive truncation of the
    odd-length extensions, so the original window length is returned."""
    pyramid.check()
    lengths = [pyramid.x.shape[-1]] + [d.shape[-1] for d in pyramid.details]
    approx = pyramid.approx
    for i in range(pyramid.levels, 0, -1):
        approx = idwt_step(approx, pyramid.details[i - 1], filters, length=lengths[i - 1])
    return approx
