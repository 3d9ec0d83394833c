"""Binaural signal-model primitives.

Everything here is a pure function of its arguments.  Convolutions are
truncated to the length of the dry signal so that mixture, target and
interferer stay sample-aligned with the utterance.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.fft
from scipy.signal import firwin, resample_poly

from .audio import AudioBuffer, Brir
from .errors import DegenerateSignalError, InvalidArgumentError

SPLIT_MODES = ("from-zero", "from-onset")
ONSET_THRESHOLD_DB = -20.0

KAISER_BETA = 14.0
PASSBAND_EDGE = 0.9  # fraction of the lower Nyquist frequency kept flat
STOPBAND_EDGE = 1.0


def _as_1d(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size == 0:
        raise InvalidArgumentError(f"{name} must be non-empty")
    return arr


def convolve_array(signal, ir, method: str = "fft") -> np.ndarray:
    """Linear convolution of two 1-D arrays, truncated to ``len(signal)``."""
    x = _as_1d(signal, "signal")
    h = _as_1d(ir, "impulse response")
    n = x.size
    if method == "direct":
        return np.convolve(x, h[:n])[:n]
    if method != "fft":
        raise InvalidArgumentError(f"unknown convolution method {method!r}")
    h = h[:n]  # taps beyond the output length cannot contribute
    size = scipy.fft.next_fast_len(n + h.size - 1, real=True)
    out = scipy.fft.irfft(scipy.fft.rfft(x, size) * scipy.fft.rfft(h, size), size)
    return out[:n]


def convolve(signal: AudioBuffer, ir_channel, method: str = "fft") -> AudioBuffer:
    """Convolve a mono buffer with one impulse-response channel.

    The output keeps the propagation delay of the response and drops the
    reverberant tail past the end of ``signal``.
    """
    if signal.n_frames == 0:
        raise InvalidArgumentError("signal must be non-empty")
    return AudioBuffer.mono(convolve_array(signal.data, ir_channel, method), signal.rate)


@dataclass(frozen=True, eq=False)
class IrSplit:
    early: Brir
    late: Brir
    boundary_ms: float
    boundary_index: int


def onset_index(ir: Brir, threshold_db: float = ONSET_THRESHOLD_DB) -> int:
    """First sample whose magnitude exceeds ``threshold_db`` below the pair peak."""
    envelope = np.maximum(np.abs(ir.left), np.abs(ir.right))
    peak = envelope.max()
    if peak == 0:
        return 0
    return int(np.argmax(envelope > peak * 10 ** (threshold_db / 20)))


def boundary_index(ir: Brir, boundary_ms: float, mode: str = "from-zero") -> int:
    if boundary_ms < 0:
        raise InvalidArgumentError(f"boundary_ms must be >= 0, got {boundary_ms}")
    if mode not in SPLIT_MODES:
        raise InvalidArgumentError(f"unknown split mode {mode!r}; expected one of {SPLIT_MODES}")
    k = int(round(boundary_ms / 1000 * ir.rate))
    if mode == "from-onset":
        k += onset_index(ir)
    return k


def split_ir(ir: Brir, boundary_ms: float, mode: str = "from-zero") -> IrSplit:
    """Split a BRIR into early and late parts at the reflection boundary.

    Samples before the boundary index go to ``early``, the rest to ``late``;
    the other part is zero there, so ``early + late`` rebuilds ``ir`` exactly.
    """
    k = boundary_index(ir, boundary_ms, mode)
    idx = np.arange(len(ir))
    before = idx < k
    parts = []
    for keep in (before, ~before):
        left = np.where(keep, ir.left, 0.0)
        right = np.where(keep, ir.right, 0.0)
        parts.append(Brir(left, right, ir.rate, ir.room_id, ir.azimuth_deg))
    return IrSplit(parts[0], parts[1], float(boundary_ms), k)


def downmix(stereo: AudioBuffer) -> AudioBuffer:
    if stereo.n_channels != 2:
        raise InvalidArgumentError(f"downmix expects 2 channels, got {stereo.n_channels}")
    left, right = stereo.samples
    return AudioBuffer.mono((left + right) / 2, stereo.rate)


def energy(x) -> float:
    x = np.asarray(x.samples if isinstance(x, AudioBuffer) else x, dtype=np.float64)
    return float(np.sum(x * x))


def gain_for_snr(target: AudioBuffer, interferer: AudioBuffer, snr_db: float) -> float:
    """Gain for ``interferer`` so that the target-to-interferer energy ratio is ``snr_db``.

    ``snr_db = +inf`` returns 0 (interferer muted).
    """
    e_target = energy(target)
    e_interferer = energy(interferer)
    if e_target <= 0:
        raise DegenerateSignalError("target has zero energy")
    if e_interferer <= 0:
        raise DegenerateSignalError("interferer has zero energy")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return math.sqrt(e_target / (e_interferer * 10 ** (snr_db / 10)))


def mix(target: AudioBuffer, interferer: AudioBuffer, gain: float) -> AudioBuffer:
    if target.samples.shape != interferer.samples.shape:
        raise InvalidArgumentError(
            f"shape mismatch: target {target.samples.shape} vs interferer {interferer.samples.shape}"
        )
    if target.rate != interferer.rate:
        raise InvalidArgumentError(f"rate mismatch: {target.rate} vs {interferer.rate}")
    return AudioBuffer(target.samples + gain * interferer.samples, target.rate)


@functools.lru_cache(maxsize=32)
def resampling_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc low-pass for a rational ``up/down`` rate change.

    The response is flat to within far less than 0.1 dB up to 0.9 of the lower
    Nyquist frequency and fully attenuated at the Nyquist frequency itself.
    """
    max_rate = max(up, down)
    # Kaiser's design rules: beta = 0.1102 (A - 8.7), taps = (A - 7.95) / (2.285 dw)
    stop_db = KAISER_BETA / 0.1102 + 8.7
    width = math.pi * (STOPBAND_EDGE - PASSBAND_EDGE) / max_rate
    numtaps = int(math.ceil((stop_db - 7.95) / (2.285 * width))) | 1
    cutoff = (PASSBAND_EDGE + STOPBAND_EDGE) / 2 / max_rate
    return firwin(numtaps, cutoff, window=("kaiser", KAISER_BETA))


def resample_array(x: np.ndarray, from_rate: int, to_rate: int) -> np.ndarray:
    """Resample along the last axis; output length is ``round(n * to_rate / from_rate)``."""
    if to_rate <= 0 or from_rate <= 0:
        raise InvalidArgumentError("rates must be positive")
    x = np.asarray(x, dtype=np.float64)
    if to_rate == from_rate:
        return x.copy()
    ratio = Fraction(int(to_rate), int(from_rate))
    up, down = ratio.numerator, ratio.denominator
    n_out = int(round(x.shape[-1] * to_rate / from_rate))
    y = resample_poly(x, up, down, axis=-1, window=resampling_filter(up, down))
    if y.shape[-1] >= n_out:
        return y[..., :n_out]
    pad = [(0, 0)] * (y.ndim - 1) + [(0, n_out - y.shape[-1])]
    return np.pad(y, pad)


def resample(buffer: AudioBuffer, to_rate: int) -> AudioBuffer:
    if to_rate <= 0:
        raise InvalidArgumentError(f"to_rate must be positive, got {to_rate}")
    if to_rate == buffer.rate:
        return AudioBuffer(buffer.samples.copy(), buffer.rate)
    return AudioBuffer(resample_array(buffer.samples, buffer.rate, to_rate), to_rate)


def resample_brir(ir: Brir, to_rate: int) -> Brir:
    if to_rate == ir.rate:
        return ir
    both = resample_array(np.stack([ir.left, ir.right]), ir.rate, to_rate)
    if both.shape[1] == 0:
        both = np.zeros((2, 1))
    return Brir(both[0], both[1], to_rate, ir.room_id, ir.azimuth_deg)


def peak_normalize(buffers, headroom_db: float = 1.0):
    """Scale all ``buffers`` by one gain so their joint peak sits at ``-headroom_db`` dBFS.

    Returns ``(scaled_buffers, gain)``.
    """
    buffers = list(buffers)
    peak = max((float(np.max(np.abs(b.samples))) if b.n_frames else 0.0) for b in buffers) if buffers else 0.0
    if peak <= 0:
        raise DegenerateSignalError("cannot normalize all-zero buffers")
    gain = 10 ** (-headroom_db / 20) / peak
    return [AudioBuffer(b.samples * gain, b.rate) for b in buffers], gain
