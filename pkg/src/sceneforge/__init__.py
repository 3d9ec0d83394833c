"""Noisy reverberant speech dataset synthesis with controlled diversity.

Modules
-------
dsp        binaural signal model: convolution, early/late split, downmix, SNR gain, resampling
catalog    corpus/noise/BRIR catalogs and train/test pool splits
sampler    scene recipes, dataset planning, repetition statistics
renderer   scene rendering and deterministic parallel dataset builds
metrics    SNR, ESTOI and the external PESQ hook
synthetic  metadata-only corpus tables and small audio fixture trees
"""

__version__ = "0.1.0"

from .audio import AudioBuffer, Brir, read_wav, write_wav
from .catalog import Catalog, PoolAssignment, assign_pools, corpus_stats, load_catalog, scan
from .dsp import convolve, downmix, gain_for_snr, mix, peak_normalize, resample, split_ir
from .metrics import delta_snr, estoi, evaluate_pairs, snr_db
from .renderer import build_dataset, render_arrays, render_scene, verify_dataset
from .sampler import (
    DatasetManifest,
    SamplerConfig,
    SceneSpec,
    corpus_weights,
    plan_dataset,
    repetition_stats,
    sample_scene,
    schedule_epochs,
)

__all__ = [
    "AudioBuffer", "Brir", "read_wav", "write_wav",
    "Catalog", "PoolAssignment", "assign_pools", "corpus_stats", "load_catalog", "scan",
    "convolve", "downmix", "gain_for_snr", "mix", "peak_normalize", "resample", "split_ir",
    "delta_snr", "estoi", "evaluate_pairs", "snr_db",
    "build_dataset", "render_arrays", "render_scene", "verify_dataset",
    "DatasetManifest", "SamplerConfig", "SceneSpec", "corpus_weights", "plan_dataset",
    "repetition_stats", "sample_scene", "schedule_epochs",
]
