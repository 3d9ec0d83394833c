"""Intrusive metrics: SNR, ESTOI and an external PESQ hook.

ESTOI uses the canonical constants: 10 kHz analysis rate, 256-sample Hann
frames with 50 % overlap, 512-point FFT, 15 one-third-octave bands from
150 Hz, 30-frame (384 ms) segments and a 40 dB silent-frame range.
"""

from __future__ import annotations

import csv
import json
import math
import re
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .audio import AudioBuffer, read_wav
from .errors import DegenerateSignalError, InvalidArgumentError, SceneforgeError
from .renderer import audio_path
from .sampler import DatasetManifest

SNR_CAP_DB = 120.0

ESTOI_RATE = 10000
ESTOI_FRAME = 256
ESTOI_NFFT = 512
ESTOI_BANDS = 15
ESTOI_MIN_FREQ = 150.0
ESTOI_SEGMENT = 30
ESTOI_DYN_RANGE = 40.0
ESTOI_MIN_DURATION = 0.5

_EPS = np.finfo(np.float64).eps


def _samples(x) -> np.ndarray:
    if isinstance(x, AudioBuffer):
        return x.data
    return np.asarray(x, dtype=np.float64).ravel()


def snr_db(estimate, reference) -> float:
    """Reference-based SNR in dB, capped at +120 dB."""
    est, ref = _samples(estimate), _samples(reference)
    if est.shape != ref.shape:
        raise InvalidArgumentError(f"length mismatch: {est.size} vs {ref.size}")
    e_ref = float(np.sum(ref * ref))
    if e_ref <= 0:
        raise DegenerateSignalError("reference has zero energy")
    err = est - ref
    value = 10 * math.log10(e_ref / (float(np.sum(err * err)) + 1e-12 * e_ref))
    return min(value, SNR_CAP_DB)


def si_snr_db(estimate, reference) -> float:
    """Scale-invariant SNR (zero-mean signals, optimal reference scaling), capped at +120 dB."""
    est, ref = _samples(estimate), _samples(reference)
    if est.shape != ref.shape:
        raise InvalidArgumentError(f"length mismatch: {est.size} vs {ref.size}")
    est = est - est.mean()
    ref = ref - ref.mean()
    e_ref = float(np.sum(ref * ref))
    if e_ref <= 0:
        raise DegenerateSignalError("reference has zero energy")
    proj = float(np.dot(est, ref)) / e_ref * ref
    e_proj = float(np.sum(proj * proj))
    err = est - proj
    value = 10 * math.log10((e_proj + 1e-12 * e_ref) / (float(np.sum(err * err)) + 1e-12 * e_ref))
    return min(value, SNR_CAP_DB)


def delta_snr(mixture, enhanced, target, scale_invariant: bool = False) -> float:
    f = si_snr_db if scale_invariant else snr_db
    return f(enhanced, target) - f(mixture, target)


# --------------------------------------------------------------------------
# ESTOI


def third_octave_matrix(rate=ESTOI_RATE, nfft=ESTOI_NFFT, n_bands=ESTOI_BANDS, min_freq=ESTOI_MIN_FREQ):
    """Binary band-membership matrix ``(n_bands, nfft // 2 + 1)`` and centre frequencies."""
    freqs = np.linspace(0, rate, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands)
    centres = min_freq * 2.0 ** (k / 3)
    lows = min_freq * 2.0 ** ((2 * k - 1) / 6)
    highs = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((n_bands, freqs.size))
    for b in range(n_bands):
        lo = int(np.argmin((freqs - lows[b]) ** 2))
        hi = int(np.argmin((freqs - highs[b]) ** 2))
        obm[b, lo:hi] = 1.0
    return obm, centres


def _hann(n):
    return np.hanning(n + 2)[1:-1]


def _frames(x, size, hop):
    # Reference framing: the last start is strictly below len(x) - size.
    starts = np.arange(0, x.size - size, hop)
    return np.stack([x[s : s + size] for s in starts]) if starts.size else np.empty((0, size))


def remove_silent_frames(reference, estimate, dyn_range=ESTOI_DYN_RANGE, size=ESTOI_FRAME, hop=ESTOI_FRAME // 2):
    """Drop frames whose reference energy is more than ``dyn_range`` dB below the loudest frame.

    Both signals are re-assembled by overlap-add of the kept windowed frames.
    """
    w = _hann(size)
    ref_frames = _frames(reference, size, hop) * w
    est_frames = _frames(estimate, size, hop) * w
    if ref_frames.shape[0] == 0:
        raise InvalidArgumentError("signal shorter than one analysis frame")
    level = 20 * np.log10(np.linalg.norm(ref_frames, axis=1) + _EPS)
    keep = level > level.max() - dyn_range
    ref_frames, est_frames = ref_frames[keep], est_frames[keep]
    n = (ref_frames.shape[0] - 1) * hop + size
    ref_out, est_out = np.zeros(n), np.zeros(n)
    for k in range(ref_frames.shape[0]):
        ref_out[k * hop : k * hop + size] += ref_frames[k]
        est_out[k * hop : k * hop + size] += est_frames[k]
    return ref_out, est_out


def _band_envelopes(x, obm):
    w = _hann(ESTOI_FRAME)
    spec = np.fft.rfft(_frames(x, ESTOI_FRAME, ESTOI_FRAME // 2) * w, n=ESTOI_NFFT, axis=1)
    return np.sqrt(obm @ (np.abs(spec) ** 2).T)  # (bands, frames)


def _normalize(x, axis):
    x = x - x.mean(axis=axis, keepdims=True)
    return x / (np.sqrt(np.sum(x * x, axis=axis, keepdims=True)) + _EPS)


def estoi(estimate, reference, rate: int) -> float:
    """Extended short-time objective intelligibility of ``estimate`` against ``reference``."""
    est, ref = _samples(estimate), _samples(reference)
    if est.shape != ref.shape:
        raise InvalidArgumentError(f"length mismatch: {est.size} vs {ref.size}")
    if ref.size < ESTOI_MIN_DURATION * rate:
        raise InvalidArgumentError(f"ESTOI needs at least {ESTOI_MIN_DURATION} s of audio")
    if not np.any(ref):
        raise DegenerateSignalError("reference is silent")
    if rate != ESTOI_RATE:
        ref = dsp.resample_array(ref, rate, ESTOI_RATE)
        est = dsp.resample_array(est, rate, ESTOI_RATE)
    ref, est = remove_silent_frames(ref, est)
    obm, _ = third_octave_matrix()
    ref_env, est_env = _band_envelopes(ref, obm), _band_envelopes(est, obm)
    n_frames = ref_env.shape[1]
    if n_frames < ESTOI_SEGMENT:
        raise InvalidArgumentError(
            f"only {n_frames} non-silent frames; ESTOI needs at least {ESTOI_SEGMENT}"
        )
    idx = np.arange(ESTOI_SEGMENT)[None, :] + np.arange(n_frames - ESTOI_SEGMENT + 1)[:, None]
    ref_seg = ref_env[:, idx].transpose(1, 0, 2)  # (segments, bands, frames)
    est_seg = est_env[:, idx].transpose(1, 0, 2)
    ref_n = _normalize(_normalize(ref_seg, axis=2), axis=1)
    est_n = _normalize(_normalize(est_seg, axis=2), axis=1)
    return float(np.sum(ref_n * est_n) / (ESTOI_SEGMENT * ref_n.shape[0]))


# --------------------------------------------------------------------------
# External PESQ hook

_NUMBER = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")


def parse_pesq_output(text: str) -> float:
    """Pick the score from a PESQ tool's standard output.

    The last line holding a number is used; if it contains ``=``, only the text
    after the last ``=`` is read.  With two numbers there (raw MOS, MOS-LQO),
    the second is returned, otherwise the only one.
    """
    for line in reversed(text.strip().splitlines()):
        tail = line.rsplit("=", 1)[-1]
        nums = _NUMBER.findall(tail)
        if nums:
            return float(nums[-1])
    raise ValueError(f"no score found in PESQ output: {text!r}")


def run_pesq(command: str, ref, deg, rate: int, timeout: float = 120.0) -> float:
    argv = [tok.format(ref=str(ref), deg=str(deg), rate=rate) for tok in shlex.split(command)]
    proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    if proc.returncode != 0:
        raise RuntimeError(f"PESQ command exited with {proc.returncode}: {proc.stderr.strip()[:200]}")
    return parse_pesq_output(proc.stdout)


# --------------------------------------------------------------------------
# Dataset evaluation


@dataclass
class EvalOptions:
    trim: bool = False
    allow_missing: bool = False
    scale_invariant: bool = False
    pesq_command: str | None = None
    pesq_concurrency: int = 4
    workers: int = 1


@dataclass
class MetricReport:
    per_scene: list
    aggregate: dict
    scene_count: int
    missing: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_scene": self.per_scene,
            "aggregate": self.aggregate,
            "scene_count": self.scene_count,
            "missing": self.missing,
            "errors": self.errors,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path) -> None:
        cols = sorted({k for row in self.per_scene for k in row} - {"scene_id"})
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["scene_id", *cols])
            for row in self.per_scene:
                writer.writerow([row["scene_id"], *(row.get(c, "") for c in cols)])


DELTA_KEYS = ("delta_snr_db", "delta_estoi", "delta_pesq")


def aggregate(per_scene) -> dict:
    out = {}
    for key in DELTA_KEYS:
        values = [row[key] for row in per_scene if key in row]
        if values:
            arr = np.array(values)
            out[key] = {"mean": float(arr.mean()), "std": float(arr.std())}
    return out


def _load_mono(path, rate=None) -> np.ndarray:
    buf = read_wav(path)
    x = buf.samples.mean(axis=0) if buf.n_channels > 1 else buf.samples[0]
    if rate is not None and buf.rate != rate:
        x = dsp.resample_array(x, buf.rate, rate)
    return x, buf.rate


def evaluate_scene(mixture_path, enhanced_path, target_path, options: EvalOptions, pesq_gate=None) -> dict:
    target, rate = _load_mono(target_path)
    mixture, _ = _load_mono(mixture_path, rate)
    enhanced, _ = _load_mono(enhanced_path, rate)
    if not (mixture.size == enhanced.size == target.size):
        if not options.trim:
            raise InvalidArgumentError(
                f"length mismatch (mixture {mixture.size}, enhanced {enhanced.size}, target {target.size})"
            )
        n = min(mixture.size, enhanced.size, target.size)
        mixture, enhanced, target = mixture[:n], enhanced[:n], target[:n]
    f = si_snr_db if options.scale_invariant else snr_db
    row = {"snr_in_db": f(mixture, target), "snr_out_db": f(enhanced, target)}
    row["delta_snr_db"] = row["snr_out_db"] - row["snr_in_db"]
    row["estoi_in"] = estoi(mixture, target, rate)
    row["estoi_out"] = estoi(enhanced, target, rate)
    row["delta_estoi"] = row["estoi_out"] - row["estoi_in"]
    if options.pesq_command:
        gate = pesq_gate or threading.BoundedSemaphore(1)
        with gate:
            row["pesq_in"] = run_pesq(options.pesq_command, target_path, mixture_path, rate)
            row["pesq_out"] = run_pesq(options.pesq_command, target_path, enhanced_path, rate)
        row["delta_pesq"] = row["pesq_out"] - row["pesq_in"]
    return row


def evaluate_pairs(dataset_dir, enhanced_dir, options: EvalOptions | None = None) -> MetricReport:
    """Score enhanced files against the dataset targets, scene by scene.

    The enhanced file for a scene carries the same name as its mixture file
    (``{scene_id:06d}_mixture.wav``).  Missing files are listed in
    ``report.missing``; failures in ``report.errors``.
    """
    options = options or EvalOptions()
    dataset_dir, enhanced_dir = Path(dataset_dir), Path(enhanced_dir)
    manifest = DatasetManifest.read(dataset_dir / "manifest.jsonl")
    gate = threading.BoundedSemaphore(max(1, options.pesq_concurrency))

    jobs, missing = [], []
    for spec in manifest.scenes:
        mix_path = audio_path(dataset_dir, spec.scene_id, "mixture")
        enh_path = enhanced_dir / mix_path.name
        if not enh_path.is_file():
            missing.append(spec.scene_id)
            continue
        jobs.append((spec.scene_id, mix_path, enh_path, audio_path(dataset_dir, spec.scene_id, "target")))

    def work(job):
        sid, mix_path, enh_path, tgt_path = job
        try:
            return {"scene_id": sid, **evaluate_scene(mix_path, enh_path, tgt_path, options, gate)}
        except (SceneforgeError, OSError, ValueError, RuntimeError, subprocess.TimeoutExpired) as exc:
            return {"scene_id": sid, "error": f"{type(exc).__name__}: {exc}"}

    if options.workers > 1:
        with ThreadPoolExecutor(options.workers) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(j) for j in jobs]
    per_scene = [r for r in rows if "error" not in r]
    errors = [r for r in rows if "error" in r]
    return MetricReport(per_scene, aggregate(per_scene), len(per_scene), missing, errors)


def plot_report(report: MetricReport, path) -> None:
    """Histogram of each per-scene improvement, saved as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "sceneforge"}):  # stable element ids
        keys = [k for k in DELTA_KEYS if k in report.aggregate]
        fig, axes = plt.subplots(1, max(1, len(keys)), figsize=(4 * max(1, len(keys)), 3))
        axes = np.atleast_1d(axes)
        for ax, key in zip(axes, keys):
            values = [row[key] for row in report.per_scene]
            ax.hist(values, bins=min(30, max(5, len(values) // 2)))
            ax.axvline(report.aggregate[key]["mean"], color="k", linestyle="--")
            ax.set_title(key)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
