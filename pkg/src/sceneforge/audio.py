"""Audio containers and RIFF/WAVE input/output.

Samples are held as float64 arrays shaped ``(channels, frames)``.  Reading
goes through :mod:`scipy.io.wavfile`; durations for catalog scans come from
a light header walk so that large corpora never have to be decoded.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import InvalidArgumentError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

SAMPLE_FORMATS = ("float32", "pcm16")


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Uniformly sampled multi-channel audio.

    ``samples`` is a float64 array of shape ``(channels, frames)`` and ``rate``
    the sampling rate in Hz.
    """

    samples: np.ndarray
    rate: int

    def __post_init__(self):
        data = np.asarray(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2:
            raise InvalidArgumentError(f"samples must be 1-D or 2-D, got {data.ndim}-D")
        if int(self.rate) != self.rate or self.rate <= 0:
            raise InvalidArgumentError(f"rate must be a positive integer, got {self.rate}")
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("samples must be finite")
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "rate", int(self.rate))

    @classmethod
    def mono(cls, samples, rate: int) -> AudioBuffer:
        return cls(np.asarray(samples, dtype=np.float64).reshape(1, -1), rate)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_frames / self.rate

    @property
    def data(self) -> np.ndarray:
        """The single channel of a mono buffer as a 1-D array."""
        if self.n_channels != 1:
            raise InvalidArgumentError(f"expected a mono buffer, got {self.n_channels} channels")
        return self.samples[0]

    def __len__(self):
        return self.n_frames


@dataclass(frozen=True, eq=False)
class Brir:
    """Binaural room impulse response for one source position."""

    left: np.ndarray
    right: np.ndarray
    rate: int
    room_id: str = ""
    azimuth_deg: float = 0.0

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.float64).ravel()
        right = np.asarray(self.right, dtype=np.float64).ravel()
        if left.shape != right.shape:
            raise InvalidArgumentError("BRIR channels must have identical length")
        if left.size < 1:
            raise InvalidArgumentError("BRIR must hold at least one sample")
        if not -180.0 <= self.azimuth_deg <= 180.0:
            raise InvalidArgumentError(f"azimuth {self.azimuth_deg} outside [-180, 180]")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def from_buffer(cls, buffer: AudioBuffer, room_id: str = "", azimuth_deg: float = 0.0) -> Brir:
        if buffer.n_channels == 1:
            left = right = buffer.samples[0]
        elif buffer.n_channels == 2:
            left, right = buffer.samples
        else:
            raise InvalidArgumentError(f"BRIR file must be mono or stereo, got {buffer.n_channels} channels")
        return cls(left, right, buffer.rate, room_id, azimuth_deg)

    def __len__(self):
        return self.left.size

    def channels(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class WavInfo:
    rate: int
    channels: int
    frames: int
    bits: int
    format_tag: int = field(default=WAVE_FORMAT_PCM)

    @property
    def duration(self) -> float:
        return self.frames / self.rate


def read_wav_info(path) -> WavInfo:
    """Parse the RIFF header of ``path`` without reading sample data."""
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            raise InvalidArgumentError(f"{path}: not a RIFF/WAVE file")
        fmt = None
        while True:
            chunk = f.read(8)
            if len(chunk) < 8:
                break
            cid, size = chunk[:4], struct.unpack("<I", chunk[4:])[0]
            if cid == b"fmt ":
                body = f.read(size)
                if len(body) < 16:
                    raise InvalidArgumentError(f"{path}: truncated fmt chunk")
                tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
                if tag == WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
                    tag = struct.unpack("<H", body[24:26])[0]
                fmt = (tag, channels, rate, block_align, bits)
            elif cid == b"data":
                if fmt is None:
                    raise InvalidArgumentError(f"{path}: data chunk before fmt chunk")
                tag, channels, rate, block_align, bits = fmt
                if channels < 1 or rate < 1 or block_align < 1:
                    raise InvalidArgumentError(f"{path}: invalid fmt chunk")
                return WavInfo(rate, channels, size // block_align, bits, tag)
            else:
                f.seek(size + (size & 1), os.SEEK_CUR)
                continue
            if size & 1:
                f.seek(1, os.SEEK_CUR)
    raise InvalidArgumentError(f"{path}: no data chunk")


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.int64:
        return data.astype(np.float64) / 9223372036854775808.0
    return data.astype(np.float64)


def read_wav(path, start: int = 0, frames: int | None = None) -> AudioBuffer:
    """Read ``frames`` frames starting at ``start`` (whole file by default).

    Reading past the end of the file returns fewer frames, never an error.
    """
    try:
        rate, data = wavfile.read(path, mmap=True)
    except ValueError:
        rate, data = wavfile.read(path)
    stop = None if frames is None else start + frames
    data = data[start:stop]
    data = _to_float(np.array(data))
    if data.ndim == 1:
        data = data[np.newaxis, :]
    else:
        data = data.T
    return AudioBuffer(np.ascontiguousarray(data), rate)


def write_wav(path, buffer: AudioBuffer, sample_format: str = "float32") -> None:
    """Write ``buffer`` atomically (temporary file in the same directory, then rename)."""
    if sample_format == "float32":
        data = buffer.samples.astype(np.float32)
    elif sample_format == "pcm16":
        data = np.clip(np.round(buffer.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise InvalidArgumentError(f"unknown sample format {sample_format!r}; expected one of {SAMPLE_FORMATS}")
    data = data[0] if buffer.n_channels == 1 else data.T
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            wavfile.write(f, buffer.rate, np.ascontiguousarray(data))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
