"""Scene sampling, dataset planning and repetition statistics.

Every scene is drawn from its own generator seeded by ``(dataset_seed,
scene_id)``, so a manifest is a pure function of the pools, the config and
the dataset seed, and a smaller plan is always a prefix of a larger one.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .catalog import Catalog, CorpusStats, PoolAssignment
from .errors import ConfigError, InvalidArgumentError, UnsatisfiableSceneError

FORMAT_VERSION = 1
WEIGHTING_MODES = ("inverse-avg-length", "uniform")
REPETITION_MODES = ("all", "later")


@dataclass(frozen=True)
class SamplerConfig:
    snr_range: tuple = (-5.0, 10.0)
    n_sources: tuple = (1, 2, 3)
    azimuth_range: tuple = (-90.0, 90.0)
    boundary_ms: float = 50.0
    corpus_weighting: str = "inverse-avg-length"
    redraw_limit: int = 100

    def __post_init__(self):
        lo, hi = self.snr_range
        if not lo <= hi:
            raise ConfigError(f"empty SNR range {self.snr_range}")
        if not self.n_sources or any(int(n) != n or n < 1 for n in self.n_sources):
            raise ConfigError(f"n_sources must be a non-empty set of positive integers, got {self.n_sources}")
        a, b = self.azimuth_range
        if not -180 <= a <= b <= 180:
            raise ConfigError(f"invalid azimuth range {self.azimuth_range}")
        if self.boundary_ms < 0:
            raise ConfigError("boundary_ms must be >= 0")
        if self.corpus_weighting not in WEIGHTING_MODES:
            raise ConfigError(f"corpus_weighting must be one of {WEIGHTING_MODES}")
        if int(self.redraw_limit) != self.redraw_limit or self.redraw_limit < 1:
            raise ConfigError("redraw_limit must be an integer >= 1")
        object.__setattr__(self, "snr_range", (float(lo), float(hi)))
        object.__setattr__(self, "n_sources", tuple(sorted({int(n) for n in self.n_sources})))
        object.__setattr__(self, "azimuth_range", (float(a), float(b)))
        object.__setattr__(self, "boundary_ms", float(self.boundary_ms))

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> SamplerConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown sampler config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class SceneSpec:
    scene_id: int
    speech_ref: str
    noise_refs: tuple  # ((noise path, segment start in s), ...)
    room_id: str
    speech_brir: str
    noise_brirs: tuple
    snr_db: float
    boundary_ms: float
    scene_seed: int

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "speech_ref": self.speech_ref,
            "noise_refs": [[p, s] for p, s in self.noise_refs],
            "room_id": self.room_id,
            "speech_brir": self.speech_brir,
            "noise_brirs": list(self.noise_brirs),
            "snr_db": self.snr_db,
            "boundary_ms": self.boundary_ms,
            "scene_seed": self.scene_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        return cls(
            scene_id=int(d["scene_id"]),
            speech_ref=d["speech_ref"],
            noise_refs=tuple((p, float(s)) for p, s in d["noise_refs"]),
            room_id=d["room_id"],
            speech_brir=d["speech_brir"],
            noise_brirs=tuple(d["noise_brirs"]),
            snr_db=float(d["snr_db"]),
            boundary_ms=float(d["boundary_ms"]),
            scene_seed=int(d["scene_seed"]),
        )


@dataclass
class DatasetManifest:
    dataset_seed: int
    config: SamplerConfig
    pool_fingerprint: str
    target_hours: float
    scenes: list = field(default_factory=list)
    total_duration_s: float = 0.0
    split: str = "train"
    format_version: int = FORMAT_VERSION

    def header(self) -> dict:
        return {
            "format_version": self.format_version,
            "dataset_seed": self.dataset_seed,
            "config": self.config.to_dict(),
            "pool_fingerprint": self.pool_fingerprint,
            "target_hours": self.target_hours,
            "split": self.split,
            "total_duration_s": self.total_duration_s,
        }

    def dumps(self) -> str:
        lines = [json.dumps(self.header())]
        lines.extend(json.dumps(s.to_dict()) for s in self.scenes)
        return "".join(line + "\n" for line in lines)

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> DatasetManifest:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ConfigError("empty manifest")
        try:
            head = json.loads(lines[0])
            if head.get("format_version") != FORMAT_VERSION:
                raise ConfigError(f"unsupported manifest format_version {head.get('format_version')!r}")
            return cls(
                dataset_seed=int(head["dataset_seed"]),
                config=SamplerConfig.from_dict(head["config"]),
                pool_fingerprint=head["pool_fingerprint"],
                target_hours=float(head["target_hours"]),
                scenes=[SceneSpec.from_dict(json.loads(ln)) for ln in lines[1:]],
                total_duration_s=float(head.get("total_duration_s", 0.0)),
                split=head.get("split", "train"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed manifest: {exc}") from exc

    @classmethod
    def read(cls, path) -> DatasetManifest:
        return cls.loads(Path(path).read_text())

    def __len__(self):
        return len(self.scenes)


# --------------------------------------------------------------------------
# Corpus weighting


def corpus_weights(stats: dict, mode: str = "inverse-avg-length") -> dict[str, float]:
    """Corpus selection probabilities.

    ``stats`` maps corpus ids to :class:`CorpusStats` or to plain average
    utterance lengths in seconds.  ``inverse-avg-length`` makes each corpus
    contribute the same expected duration; ``uniform`` gives every corpus 1/C.
    """
    if mode not in WEIGHTING_MODES:
        raise ConfigError(f"corpus weighting must be one of {WEIGHTING_MODES}, got {mode!r}")
    if not stats:
        raise InvalidArgumentError("no corpora to weight")
    ids = sorted(stats)
    if mode == "uniform":
        return {c: 1.0 / len(ids) for c in ids}
    avg = np.array([s.avg_len if isinstance(s, CorpusStats) else float(s) for s in (stats[c] for c in ids)])
    if np.any(avg <= 0):
        raise InvalidArgumentError("average utterance lengths must be positive")
    inv = 1.0 / avg
    return dict(zip(ids, (inv / inv.sum()).tolist()))


def pool_avg_lengths(pools: PoolAssignment) -> dict[str, float]:
    return {c: float(np.mean([i.duration_s for i in items])) for c, items in pools.speech.items() if items}


# --------------------------------------------------------------------------
# Scene drawing


def scene_seed(dataset_seed: int, scene_id: int) -> int:
    ss = np.random.SeedSequence([int(dataset_seed) & 0xFFFFFFFFFFFFFFFF, int(scene_id)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class _Tables:
    """Pools flattened into arrays for fast repeated draws."""

    def __init__(self, pools: PoolAssignment, config: SamplerConfig, weights: dict | None):
        self.config = config
        self.corpora = [c for c in sorted(pools.speech) if pools.speech[c]]
        if not self.corpora:
            raise InvalidArgumentError("speech pool is empty")
        if weights is None:
            weights = corpus_weights(pool_avg_lengths(pools), config.corpus_weighting)
        missing = set(self.corpora) - set(weights)
        if missing:
            raise InvalidArgumentError(f"no weight for corpora {sorted(missing)}")
        p = np.array([weights[c] for c in self.corpora], dtype=np.float64)
        if np.any(p < 0) or p.sum() <= 0:
            raise InvalidArgumentError("corpus weights must be non-negative with positive sum")
        self.cum = np.cumsum(p / p.sum())
        self.cum[-1] = 1.0
        self.speech = [pools.speech[c] for c in self.corpora]

        self.noise = [pools.noise_regions[d] for d in sorted(pools.noise_regions) if pools.noise_regions[d]]
        if not self.noise:
            raise InvalidArgumentError("noise pool is empty")

        lo, hi = config.azimuth_range
        self.rooms = []  # per database: list of (room_id, eligible BRIRs)
        for d in sorted(pools.brirs):
            rooms = [
                (room, tuple(b for b in items if lo <= b.azimuth_deg <= hi))
                for room, items in sorted(pools.brirs[d].items())
            ]
            rooms = [r for r in rooms if r[1]]
            if rooms:
                self.rooms.append(rooms)
        if not self.rooms:
            raise InvalidArgumentError(f"no pooled BRIR with azimuth in {config.azimuth_range}")

    def draw(self, rng: np.random.Generator, scene_id: int, seed: int) -> SceneSpec:
        cfg = self.config
        corpus = int(np.searchsorted(self.cum, rng.random(), side="right"))
        corpus = min(corpus, len(self.corpora) - 1)
        items = self.speech[corpus]
        utt = items[int(rng.integers(len(items)))]
        dur = utt.duration_s
        n_src = cfg.n_sources[int(rng.integers(len(cfg.n_sources)))]

        noise_refs = []
        for _ in range(n_src):
            for _attempt in range(cfg.redraw_limit):
                db = self.noise[int(rng.integers(len(self.noise)))]
                item, start, end = db[int(rng.integers(len(db)))]
                slack = end - start - dur
                if slack >= 0:
                    noise_refs.append((item.path, min(start + rng.random() * slack, end - dur)))
                    break
            else:
                raise UnsatisfiableSceneError(
                    f"scene {scene_id}: no noise region fits a {dur:.2f} s utterance "
                    f"after {cfg.redraw_limit} draws"
                )

        for _attempt in range(cfg.redraw_limit):
            rooms = self.rooms[int(rng.integers(len(self.rooms)))]
            room_id, brirs = rooms[int(rng.integers(len(rooms)))]
            if len(brirs) >= 1 + n_src:
                picks = rng.choice(len(brirs), size=1 + n_src, replace=False)
                chosen = [brirs[int(k)].path for k in picks]
                break
        else:
            raise UnsatisfiableSceneError(
                f"scene {scene_id}: no room offers {1 + n_src} distinct BRIRs in "
                f"{cfg.azimuth_range} after {cfg.redraw_limit} draws"
            )

        lo, hi = cfg.snr_range
        snr = float(rng.uniform(lo, hi)) if hi > lo else lo
        return SceneSpec(
            scene_id=scene_id,
            speech_ref=utt.path,
            noise_refs=tuple(noise_refs),
            room_id=room_id,
            speech_brir=chosen[0],
            noise_brirs=tuple(chosen[1:]),
            snr_db=snr,
            boundary_ms=cfg.boundary_ms,
            scene_seed=seed,
        )


def sample_scene(
    pools: PoolAssignment,
    config: SamplerConfig,
    rng: np.random.Generator,
    weights: dict | None = None,
    scene_id: int = 0,
    seed: int = 0,
) -> SceneSpec:
    """Draw one scene recipe from ``pools``.

    ``weights`` are corpus probabilities (see :func:`corpus_weights`); by
    default they are derived from the pooled utterance lengths using
    ``config.corpus_weighting``.
    """
    return _Tables(pools, config, weights).draw(rng, scene_id, seed)


def plan_dataset(
    target_hours: float,
    pools: PoolAssignment,
    config: SamplerConfig,
    dataset_seed: int,
    weights: dict | None = None,
    durations: dict | None = None,
) -> DatasetManifest:
    """Draw scenes until the summed utterance duration reaches ``target_hours``.

    ``durations`` optionally maps speech paths to durations; otherwise the
    pooled item durations are used.
    """
    if not target_hours > 0:
        raise InvalidArgumentError(f"target_hours must be positive, got {target_hours}")
    tables = _Tables(pools, config, weights)
    if durations is None:
        durations = {i.path: i.duration_s for items in pools.speech.values() for i in items}
    target_s = target_hours * 3600.0
    scenes, total = [], 0.0
    while total < target_s:
        sid = len(scenes)
        seed = scene_seed(dataset_seed, sid)
        spec = tables.draw(np.random.default_rng(seed), sid, seed)
        scenes.append(spec)
        total += durations[spec.speech_ref]
    return DatasetManifest(
        dataset_seed=int(dataset_seed),
        config=config,
        pool_fingerprint=pools.fingerprint(),
        target_hours=float(target_hours),
        scenes=scenes,
        total_duration_s=total,
        split=pools.split,
    )


# --------------------------------------------------------------------------
# Repetition statistics


@dataclass(frozen=True)
class RepetitionReport:
    """Duration share (percent) of mixtures built on repeated utterances."""

    per_corpus: dict
    total: float
    mode: str = "all"

    def to_dict(self) -> dict:
        return {"per_corpus": dict(self.per_corpus), "total": self.total, "mode": self.mode}


def _repeated_mask(ids: np.ndarray, mode: str) -> np.ndarray:
    if mode not in REPETITION_MODES:
        raise InvalidArgumentError(f"repetition mode must be one of {REPETITION_MODES}, got {mode!r}")
    if mode == "all":
        _, inverse, counts = np.unique(ids, return_inverse=True, return_counts=True)
        return counts[inverse] >= 2
    _, first = np.unique(ids, return_index=True)
    mask = np.ones(ids.size, dtype=bool)
    mask[first] = False
    return mask


def repetition_stats(manifest: DatasetManifest, catalog: Catalog, mode: str = "all") -> RepetitionReport:
    """Share of the manifest duration that uses repeated speech utterances.

    In ``all`` mode every occurrence of an utterance drawn at least twice
    counts; in ``later`` mode only the second and later occurrences count.
    """
    if not manifest.scenes:
        raise InvalidArgumentError("manifest has no scenes")
    refs = [s.speech_ref for s in manifest.scenes]
    index = {p: k for k, p in enumerate(dict.fromkeys(refs))}
    ids = np.array([index[p] for p in refs])
    items = [catalog.lookup("speech", p) for p in refs]
    dur = np.array([i.duration_s for i in items])
    corpus = [i.corpus_id for i in items]
    repeated = _repeated_mask(ids, mode)
    total = dur.sum()
    shares = {c: 0.0 for c in sorted(catalog.speech)}
    for c, d, r in zip(corpus, dur, repeated):
        if r:
            shares[c] += float(d)
    shares = {c: float(100.0 * v / total) for c, v in shares.items()}
    return RepetitionReport(shares, float(100.0 * dur[repeated].sum() / total), mode)


def simulate_repetition(
    pool_durations: dict,
    weights: dict,
    hours,
    seed: int = 0,
    mode: str = "all",
) -> list[RepetitionReport]:
    """Metadata-only Monte Carlo of the repetition table.

    Only the speech draws matter for repetition, so they are simulated in bulk:
    corpus by ``weights``, utterance uniform in the pool, until the summed
    duration reaches each entry of ``hours``.  The sizes share one draw stream
    (each smaller dataset is a prefix of the larger ones).
    """
    corpora = sorted(pool_durations)
    durs = [np.asarray(pool_durations[c], dtype=np.float64) for c in corpora]
    p = np.array([weights[c] for c in corpora], dtype=np.float64)
    p /= p.sum()
    offsets = np.concatenate([[0], np.cumsum([d.size for d in durs])])
    flat = np.concatenate(durs)
    targets = [float(h) * 3600.0 for h in hours]
    mean_len = float(sum(pi * d.mean() for pi, d in zip(p, durs)))
    rng = np.random.default_rng(seed)

    corpus_idx = np.empty(0, dtype=np.int64)
    utt_idx = np.empty(0, dtype=np.int64)
    cum = np.empty(0)
    while cum.size == 0 or cum[-1] < max(targets):
        have = cum[-1] if cum.size else 0.0
        n = int((max(targets) - have) / mean_len * 1.05) + 1000
        c = rng.choice(len(corpora), size=n, p=p)
        sizes = np.array([d.size for d in durs])[c]
        u = offsets[c] + np.floor(rng.random(n) * sizes).astype(np.int64)
        corpus_idx = np.concatenate([corpus_idx, c])
        utt_idx = np.concatenate([utt_idx, u])
        cum = np.concatenate([cum, have + np.cumsum(flat[u])])

    reports = []
    for target in targets:
        n = int(np.searchsorted(cum, target, side="left")) + 1
        ids, cs = utt_idx[:n], corpus_idx[:n]
        d = flat[ids]
        rep = _repeated_mask(ids, mode)
        per = np.bincount(cs[rep], weights=d[rep], minlength=len(corpora)) / d.sum() * 100.0
        reports.append(RepetitionReport(dict(zip(corpora, per.tolist())), float(per.sum()), mode))
    return reports


def expected_duration_shares(weights: dict, avg_lengths: dict) -> dict[str, float]:
    """Expected fraction of total duration contributed by each corpus."""
    mass = {c: weights[c] * avg_lengths[c] for c in weights}
    total = sum(mass.values())
    return {c: m / total for c, m in mass.items()}


def schedule_epochs(size_hours: float, budget: float = 3000.0) -> int:
    """Epoch count holding ``epochs * hours`` at ``budget`` (constant number of updates)."""
    if not size_hours > 0 or math.isinf(size_hours):
        raise InvalidArgumentError(f"dataset size must be a positive number of hours, got {size_hours}")
    if not budget > 0:
        raise InvalidArgumentError(f"budget must be positive, got {budget}")
    return int(round(budget / size_hours))


def count_by_corpus(manifest: DatasetManifest, catalog: Catalog) -> Counter:
    return Counter(catalog.lookup("speech", s.speech_ref).corpus_id for s in manifest.scenes)
