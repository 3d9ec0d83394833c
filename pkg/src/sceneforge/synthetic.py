"""Synthetic assets: metadata-only corpus catalogs and small audio trees.

``published_catalog`` reproduces the published corpus sizes (speakers,
utterance counts, average/min/max lengths, noise hours, rooms and BRIR
counts) without any audio, which is all the sampler and the repetition
statistics need.  ``write_fixture_tree`` writes a tiny but complete audio
tree with a matching catalog config, for end-to-end rendering.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, Brir, write_wav
from .catalog import BrirItem, Catalog, NoiseItem, SpeechItem, build_catalog

# corpus: (speakers, utterances, hours, avg, min, max length in s)
PUBLISHED_SPEECH = {
    "timit": (630, 6300, 5.4, 3.1, 0.9, 7.8),
    "librispeech": (251, 28539, 100.6, 12.7, 1.4, 24.5),
    "wsj": (131, 34738, 69.5, 7.2, 0.9, 44.8),
    "clarity": (40, 11352, 8.9, 2.8, 1.2, 7.7),
    "vctk": (110, 44455, 41.6, 3.4, 1.2, 16.6),
}
# database: (noise types, hours)
PUBLISHED_NOISE = {
    "tau": (10, 40.0),
    "noisex": (15, 1.0),
    "icra": (10, 1.1),
    "demand": (18, 1.5),
    "arte": (13, 0.5),
}
# database: (rooms, BRIRs)
PUBLISHED_BRIR = {
    "surrey": (4, 148),
    "ash": (35, 538),
    "bras": (4, 180),
    "catt": (11, 407),
    "avil": (4, 96),
}

# Published training-set sizes: hours -> number of mixtures.
PUBLISHED_DATASET_SIZES = {3: 2595, 10: 8660, 30: 25930, 100: 86074, 300: 258259}
# Published repetition shares (percent of duration) per training-set size.
PUBLISHED_REPETITION = {
    3: {"timit": 2, "wsj": 1, "clarity": 2, "librispeech": 0, "vctk": 0, "total": 5},
    10: {"timit": 8, "wsj": 1, "clarity": 5, "librispeech": 0, "vctk": 1, "total": 15},
    30: {"timit": 15, "wsj": 3, "clarity": 12, "librispeech": 1, "vctk": 3, "total": 34},
    100: {"timit": 20, "wsj": 9, "clarity": 19, "librispeech": 5, "vctk": 9, "total": 61},
    300: {"timit": 20, "wsj": 15, "clarity": 20, "librispeech": 11, "vctk": 17, "total": 83},
}
PUBLISHED_EPOCHS = {3: 1000, 10: 300, 30: 100, 100: 30, 300: 10}


def utterance_durations(n, avg, lo, hi, rng, concentration=6.0) -> np.ndarray:
    """``n`` durations in ``[lo, hi]`` with mean ``avg``, hitting both extremes."""
    m = (avg - lo) / (hi - lo)
    d = lo + (hi - lo) * rng.beta(m * concentration, (1 - m) * concentration, size=n)
    if n >= 3:
        d[0], d[1] = lo, hi
        for _ in range(20):
            excess = d[2:] - lo
            want = n * avg - lo - hi - (n - 2) * lo
            d[2:] = lo + excess * (want / excess.sum())
            if d.max() <= hi:
                break
            d[2:] = np.minimum(d[2:], hi)
    return np.round(d, 4)


def published_catalog(seed: int = 0) -> Catalog:
    """Metadata-only catalog with the published corpus, noise and BRIR sizes."""
    rng = np.random.default_rng(seed)
    speech = {}
    for cid, (n_spk, n_utt, _hours, avg, lo, hi) in PUBLISHED_SPEECH.items():
        d = utterance_durations(n_utt, avg, lo, hi, rng)
        speech[cid] = [
            SpeechItem(f"{cid}/spk{k % n_spk:04d}/utt{k:06d}.wav", cid, f"spk{k % n_spk:04d}", float(d[k]))
            for k in range(n_utt)
        ]
    noise = {}
    for did, (types, hours) in PUBLISHED_NOISE.items():
        per_file = hours * 3600 / types
        noise[did] = [NoiseItem(f"{did}/type{k:02d}.wav", did, f"type{k:02d}", per_file) for k in range(types)]
    brirs = {}
    for did, (n_rooms, n_brirs) in PUBLISHED_BRIR.items():
        brirs[did] = {}
        for r in range(n_rooms):
            count = n_brirs // n_rooms + (1 if r < n_brirs % n_rooms else 0)
            room = f"{did}_room{r:02d}"
            brirs[did][room] = [
                BrirItem(f"{did}/{room}/az{k:03d}.wav", did, room, float(az), k, 0.5)
                for k, az in enumerate(np.round(np.linspace(-90, 90, count), 3))
            ]
    return build_catalog(speech, noise, brirs)


# --------------------------------------------------------------------------
# Signals


def speech_like(duration: float, rate: int, rng: np.random.Generator) -> np.ndarray:
    """Voiced syllables with gliding pitch, a formant-like tilt and pauses."""
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    f0 = rng.uniform(95, 220)
    pitch = f0 * (1 + 0.12 * np.sin(2 * np.pi * rng.uniform(0.3, 1.2) * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(pitch) / rate
    voiced = np.zeros(n)
    formants = rng.uniform([400, 1100, 2300], [800, 1800, 3200])
    for k in range(1, int(0.45 * rate / f0)):
        f = k * f0
        amp = sum(np.exp(-0.5 * ((f - fm) / 250) ** 2) for fm in formants) + 0.05 / k
        voiced += amp * np.sin(k * phase)

    env = np.zeros(n)
    pos = int(rng.uniform(0.02, 0.1) * rate)
    while pos < n:
        length = int(rng.uniform(0.08, 0.3) * rate)
        seg = np.sin(np.pi * np.arange(length) / length) ** 2 * rng.uniform(0.3, 1.0)
        end = min(n, pos + length)
        env[pos:end] += seg[: end - pos]
        pos = end + int(rng.uniform(0.03, 0.2) * rate)
    fric = rng.standard_normal(n) * 0.05
    x = env * (voiced / max(np.abs(voiced).max(), 1e-9) + fric)
    return 0.5 * x / max(np.abs(x).max(), 1e-9)


def noise_signal(duration: float, rate: int, rng: np.random.Generator, color: str = "pink") -> np.ndarray:
    n = int(round(duration * rate))
    white = rng.standard_normal(n)
    if color == "white":
        x = white
    else:
        spec = np.fft.rfft(white)
        f = np.arange(spec.size)
        f[0] = 1
        spec /= np.sqrt(f) if color == "pink" else f
        x = np.fft.irfft(spec, n)
        x *= 1 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.1, 2) * np.arange(n) / rate)
    return 0.3 * x / np.abs(x).max()


def synthetic_brir(
    rate: int,
    azimuth_deg: float,
    rng: np.random.Generator,
    length_s: float = 0.3,
    rt60: float = 0.4,
    room_id: str = "",
) -> Brir:
    """Direct path with interaural delay and level difference plus a decaying tail."""
    n = max(1, int(round(length_s * rate)))
    az = np.deg2rad(azimuth_deg)
    base = rng.uniform(0.001, 0.004)
    itd = 0.0007 * np.sin(az)
    out = []
    for ear, sign in (("left", -1), ("right", 1)):
        h = np.zeros(n)
        delay = base + max(0.0, -sign * itd)
        idx = min(n - 1, int(round(delay * rate)))
        h[idx] = 1.0 + 0.3 * sign * np.sin(az)
        tail_start = min(n, idx + int(0.002 * rate))
        t = np.arange(n - tail_start) / rate
        h[tail_start:] += 0.3 * rng.standard_normal(t.size) * np.exp(-6.9 * t / rt60)
        out.append(h)
    return Brir(out[0], out[1], rate, room_id, float(azimuth_deg))


def write_fixture_tree(root, seed: int = 0) -> Path:
    """Write a small asset tree plus ``catalog.json``; returns the config path.

    Two speech corpora (one at 32 kHz to exercise resampling), two noise
    databases and two BRIR databases with two rooms each.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    for cid, rate, n_spk, n_utt in (("alpha", 16000, 2, 6), ("beta", 32000, 3, 6)):
        for k in range(n_utt):
            path = root / "speech" / cid / f"spk{k % n_spk}" / f"utt{k:03d}.wav"
            path.parent.mkdir(parents=True, exist_ok=True)
            dur = rng.uniform(1.0, 2.5)
            write_wav(path, AudioBuffer.mono(speech_like(dur, rate, rng), rate))
    for did, rate in (("hum", 16000), ("street", 8000)):
        for k, color in enumerate(("pink", "white")):
            path = root / "noise" / did / color / f"{did}{k}.wav"
            path.parent.mkdir(parents=True, exist_ok=True)
            write_wav(path, AudioBuffer.mono(noise_signal(16.0, rate, rng, color), rate))
    for did, rate in (("hall", 16000), ("booth", 48000)):
        for room in (f"{did}1", f"{did}2"):
            for az in (-90, -60, -30, -15, 0, 15, 30, 60, 90, 135):
                path = root / "brir" / did / room / f"az{az:+04d}.wav"
                path.parent.mkdir(parents=True, exist_ok=True)
                ir = synthetic_brir(rate, az, rng, length_s=0.25, rt60=rng.uniform(0.2, 0.6), room_id=room)
                write_wav(path, AudioBuffer(np.stack([ir.left, ir.right]), rate))
    config = {
        "entries": [
            {"id": "alpha", "kind": "speech", "root": "speech/alpha", "include": ["**/*.wav"],
             "pattern": r"(?P<speaker>[^/]+)/[^/]+\.wav$"},
            {"id": "beta", "kind": "speech", "root": "speech/beta", "include": ["**/*.wav"],
             "pattern": r"(?P<speaker>[^/]+)/[^/]+\.wav$"},
            {"id": "hum", "kind": "noise", "root": "noise/hum", "include": ["**/*.wav"],
             "pattern": r"(?P<type>[^/]+)/[^/]+\.wav$"},
            {"id": "street", "kind": "noise", "root": "noise/street", "include": ["**/*.wav"]},
            {"id": "hall", "kind": "brir", "root": "brir/hall", "include": ["**/*.wav"],
             "pattern": r"(?P<room>[^/]+)/az(?P<azimuth>[+-]\d+)\.wav$"},
            {"id": "booth", "kind": "brir", "root": "brir/booth", "include": ["**/*.wav"],
             "pattern": r"(?P<room>[^/]+)/az(?P<azimuth>[+-]\d+)\.wav$"},
        ]
    }
    path = root / "catalog.json"
    path.write_text(json.dumps(config, indent=2) + "\n")
    return path
