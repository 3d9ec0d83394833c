"""Scene rendering and dataset building.

A scene is rendered as follows.  Speech, noise segments and BRIRs are
brought to 16 kHz.  Per ear, the target is the speech convolved with the
early BRIR part, and the interferer is the speech convolved with the late
part plus every noise convolved with its own BRIR.  Both ears are averaged,
the interferer is scaled to the requested SNR, the mixture is their sum,
and one common gain puts the joint peak at -1 dBFS.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .audio import AudioBuffer, Brir, read_wav, read_wav_info, write_wav
from .catalog import Catalog
from .errors import AssetResolutionError, DegenerateSignalError, InvalidArgumentError, SceneforgeError
from .sampler import DatasetManifest, SceneSpec

log = logging.getLogger(__name__)

RATE = 16000
HEADROOM_DB = 1.0
ROLES = ("mixture", "target", "interferer")


@dataclass(frozen=True, eq=False)
class RenderedScene:
    mixture: AudioBuffer
    target: AudioBuffer
    interferer: AudioBuffer
    applied_gain: float  # common peak-normalization gain
    snr_gain: float  # gain applied to the interferer before normalization
    realized_snr_db: float


def _snr(target: np.ndarray, interferer: np.ndarray) -> float:
    e_n = dsp.energy(interferer)
    if e_n == 0:
        return math.inf
    e_t = dsp.energy(target)
    return 10 * math.log10(e_t / e_n) if e_t > 0 else -math.inf


def render_arrays(
    speech,
    noises,
    speech_brir: Brir,
    noise_brirs,
    snr_db: float | None,
    boundary_ms: float = 50.0,
    rate: int = RATE,
    split_mode: str = "from-zero",
    headroom_db: float | None = HEADROOM_DB,
) -> RenderedScene:
    """Render one scene from in-memory signals already at ``rate``.

    ``snr_db=None`` skips the SNR scaling (unit interferer gain) and
    ``headroom_db=None`` skips peak normalization.
    """
    s = np.asarray(speech, dtype=np.float64)
    noises = [np.asarray(n, dtype=np.float64) for n in noises]
    if len(noises) != len(noise_brirs):
        raise InvalidArgumentError(f"{len(noises)} noise signals but {len(noise_brirs)} noise BRIRs")
    for k, n in enumerate(noises):
        if n.shape != s.shape:
            raise InvalidArgumentError(f"noise {k} has {n.size} samples, speech has {s.size}")
    for ir in (speech_brir, *noise_brirs):
        if ir.rate != rate:
            raise InvalidArgumentError(f"BRIR at {ir.rate} Hz, expected {rate} Hz")

    split = dsp.split_ir(speech_brir, boundary_ms, split_mode)
    target_ears, interferer_ears = [], []
    for ear in (0, 1):
        y = dsp.convolve_array(s, split.early.channels()[ear])
        n = dsp.convolve_array(s, split.late.channels()[ear])
        for noise, ir in zip(noises, noise_brirs):
            n = n + dsp.convolve_array(noise, ir.channels()[ear])
        target_ears.append(y)
        interferer_ears.append(n)
    y = dsp.downmix(AudioBuffer(np.stack(target_ears), rate))
    n = dsp.downmix(AudioBuffer(np.stack(interferer_ears), rate))

    g = 1.0 if snr_db is None else dsp.gain_for_snr(y, n, snr_db)
    n = AudioBuffer(n.samples * g, rate)
    x = dsp.mix(y, n, 1.0)
    c = 1.0
    if headroom_db is not None:
        (x, y, n), c = dsp.peak_normalize([x, y, n], headroom_db)
    return RenderedScene(x, y, n, c, g, _snr(y.data, n.data))


class AssetCache:
    """Small thread-safe LRU keyed by ``(path, rate)``."""

    def __init__(self, maxsize: int = 256):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key, loader):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = loader()
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value


def _resolve(catalog: Catalog, kind: str, ref: str, scene_id: int) -> tuple:
    try:
        item = catalog.lookup(kind, ref)
    except KeyError:
        raise AssetResolutionError(f"scene {scene_id}: {kind} {ref!r} is not in the catalog") from None
    path = catalog.resolve(ref)
    if not path.is_file():
        raise AssetResolutionError(f"scene {scene_id}: {kind} file {path} not found")
    return item, path


def _load_speech(path: Path, rate: int) -> np.ndarray:
    buf = read_wav(path)
    mono = buf.samples.mean(axis=0) if buf.n_channels > 1 else buf.samples[0]
    return dsp.resample_array(mono, buf.rate, rate)


def _load_brir(path: Path, item, rate: int) -> Brir:
    buf = read_wav(path)
    ir = Brir.from_buffer(buf, item.room_id, item.azimuth_deg)
    return dsp.resample_brir(ir, rate)


def _load_noise_segment(path: Path, start_s: float, length: int, rate: int) -> np.ndarray:
    info = read_wav_info(path)
    first = int(round(start_s * info.rate))
    frames = int(math.ceil(length * info.rate / rate))
    buf = read_wav(path, first, frames)
    mono = buf.samples.mean(axis=0) if buf.n_channels > 1 else buf.samples[0]
    seg = dsp.resample_array(mono, info.rate, rate)
    if seg.size >= length:
        return seg[:length]
    return np.pad(seg, (0, length - seg.size))


_default_cache = AssetCache()


def render_scene(
    spec: SceneSpec,
    catalog: Catalog,
    rate: int = RATE,
    headroom_db: float | None = HEADROOM_DB,
    cache: AssetCache | None = None,
) -> RenderedScene:
    """Load the assets referenced by ``spec`` and render the scene."""
    cache = _default_cache if cache is None else cache
    sid = spec.scene_id
    _, speech_path = _resolve(catalog, "speech", spec.speech_ref, sid)
    s = cache.get(("speech", str(speech_path), rate), lambda: _load_speech(speech_path, rate))

    brirs = []
    for ref in (spec.speech_brir, *spec.noise_brirs):
        item, path = _resolve(catalog, "brir", ref, sid)
        if item.room_id != spec.room_id:
            raise InvalidArgumentError(f"scene {sid}: BRIR {ref!r} is in room {item.room_id!r}, not {spec.room_id!r}")
        brirs.append(cache.get(("brir", str(path), rate), lambda p=path, i=item: _load_brir(p, i, rate)))

    noises = []
    for ref, start in spec.noise_refs:
        _, path = _resolve(catalog, "noise", ref, sid)
        noises.append(_load_noise_segment(path, start, s.size, rate))

    try:
        return render_arrays(s, noises, brirs[0], brirs[1:], spec.snr_db, spec.boundary_ms, rate,
                             headroom_db=headroom_db)
    except DegenerateSignalError as exc:
        raise DegenerateSignalError(f"scene {sid}: {exc}") from exc


# --------------------------------------------------------------------------
# Dataset building


def audio_path(out_dir, scene_id: int, role: str) -> Path:
    return Path(out_dir) / "audio" / f"{scene_id:06d}_{role}.wav"


_worker_catalog = None


def _init_worker(catalog):
    global _worker_catalog
    _worker_catalog = catalog


def _build_one(args):
    spec, out_dir, sample_format, write_interferer, headroom_db = args
    catalog = _worker_catalog
    try:
        scene = render_scene(spec, catalog, headroom_db=headroom_db)
    except (SceneforgeError, OSError, ValueError) as exc:
        return {"scene_id": spec.scene_id, "error": f"{type(exc).__name__}: {exc}"}
    roles = ROLES if write_interferer else ROLES[:2]
    for role, buf in zip(ROLES, (scene.mixture, scene.target, scene.interferer)):
        if role in roles:
            write_wav(audio_path(out_dir, spec.scene_id, role), buf, sample_format)
    return {
        "scene_id": spec.scene_id,
        "duration_s": scene.mixture.n_frames / scene.mixture.rate,
        "snr_db": spec.snr_db,
        "realized_snr_db": scene.realized_snr_db,
        "applied_gain": scene.applied_gain,
        "snr_gain": scene.snr_gain,
    }


def _write_json(path: Path, payload) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(json.dumps(payload, indent=2) + "\n")
    os.replace(tmp, path)


def build_dataset(
    manifest: DatasetManifest,
    catalog: Catalog,
    out_dir,
    workers: int = 1,
    sample_format: str = "float32",
    write_interferer: bool = True,
    headroom_db: float = HEADROOM_DB,
) -> dict:
    """Render every scene of ``manifest`` into ``out_dir``.

    Writes ``manifest.jsonl``, ``report.json`` and ``audio/{id}_{role}.wav``.
    File contents do not depend on ``workers``.  Per-scene failures are
    collected in the report's ``failures`` list instead of aborting the build.
    """
    if sample_format not in ("float32", "pcm16"):
        raise InvalidArgumentError(f"unknown sample format {sample_format!r}")
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.jsonl").write_text(manifest.dumps())

    jobs = [(spec, out_dir, sample_format, write_interferer, headroom_db) for spec in manifest.scenes]
    if workers <= 1 or len(jobs) <= 1:
        _init_worker(catalog)
        results = [_build_one(j) for j in jobs]
    else:
        chunk = max(1, len(jobs) // (workers * 4))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(catalog,)) as pool:
            results = list(pool.map(_build_one, jobs, chunksize=chunk))

    done = sorted((r for r in results if "error" not in r), key=lambda r: r["scene_id"])
    failures = sorted((r for r in results if "error" in r), key=lambda r: r["scene_id"])
    for f in failures:
        log.error("scene %d failed: %s", f["scene_id"], f["error"])
    report = {
        "scene_count": len(done),
        "failure_count": len(failures),
        "total_duration_s": sum(r["duration_s"] for r in done),
        "sample_format": sample_format,
        "interferer_written": write_interferer,
        "rate": RATE,
        "scenes": done,
        "failures": failures,
    }
    _write_json(out_dir / "report.json", report)
    return report


def verify_dataset(out_dir, linearity_tol: float | None = None, snr_tol: float = 0.01) -> dict:
    """Re-check ``x = y + n`` and the realized SNR of every built scene.

    ``linearity_tol`` defaults to 1e-6 for float32 datasets and 1e-3 for
    16-bit ones (quantization alone exceeds 1e-6 there).
    """
    out_dir = Path(out_dir)
    manifest = DatasetManifest.read(out_dir / "manifest.jsonl")
    report = json.loads((out_dir / "report.json").read_text())
    if not report.get("interferer_written", True):
        raise InvalidArgumentError("dataset was built without interferer files")
    if linearity_tol is None:
        linearity_tol = 1e-6 if report.get("sample_format") == "float32" else 1e-3
    failed = {f["scene_id"] for f in report.get("failures", [])}

    max_lin, max_snr, flagged = 0.0, 0.0, []
    for spec in manifest.scenes:
        if spec.scene_id in failed:
            continue
        reasons = []
        try:
            x, y, n = (read_wav(audio_path(out_dir, spec.scene_id, r)).samples[0] for r in ROLES)
        except (OSError, ValueError) as exc:
            flagged.append({"scene_id": spec.scene_id, "reasons": [f"unreadable: {exc}"]})
            continue
        if not (x.size == y.size == n.size):
            flagged.append({"scene_id": spec.scene_id, "reasons": ["length mismatch"]})
            continue
        norm = math.sqrt(dsp.energy(x))
        lin = math.sqrt(dsp.energy(x - (y + n))) / norm if norm > 0 else math.inf
        dev = abs(_snr(y, n) - spec.snr_db)
        if not math.isfinite(dev):
            dev = math.inf
        max_lin, max_snr = max(max_lin, lin), max(max_snr, dev)
        if not lin <= linearity_tol:
            reasons.append(f"linearity error {lin:.3g} > {linearity_tol:g}")
        if not dev <= snr_tol:
            reasons.append(f"SNR deviation {dev:.3g} dB > {snr_tol:g} dB")
        if reasons:
            flagged.append({"scene_id": spec.scene_id, "reasons": reasons})
    return {
        "scene_count": len(manifest.scenes) - len(failed),
        "max_linearity_error": max_lin,
        "max_snr_deviation_db": max_snr,
        "linearity_tol": linearity_tol,
        "snr_tol": snr_tol,
        "flagged": flagged,
        "ok": not flagged,
    }
