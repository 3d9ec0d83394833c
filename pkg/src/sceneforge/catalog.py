"""Asset catalogs for speech corpora, noise databases and BRIR databases.

A catalog is built once by :func:`scan` (or loaded from its JSON Lines cache)
and is immutable afterwards.  :func:`assign_pools` applies the train/test
pool rules: a seeded 80/20 split of each speech corpus, the first/last part
of every noise file, and alternating BRIRs within each room.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import zlib
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import read_wav_info
from .errors import ConfigError, EmptyCorpusError, InvalidArgumentError

log = logging.getLogger(__name__)

KINDS = ("speech", "noise", "brir")
DATA_ROOT_ENV = "SCENEFORGE_DATA_ROOT"


@dataclass(frozen=True)
class SpeechItem:
    path: str
    corpus_id: str
    speaker_id: str
    duration_s: float


@dataclass(frozen=True)
class NoiseItem:
    path: str
    database_id: str
    noise_type: str
    duration_s: float


@dataclass(frozen=True)
class BrirItem:
    path: str
    database_id: str
    room_id: str
    azimuth_deg: float
    index_in_room: int
    duration_s: float = 0.0


@dataclass(frozen=True)
class CorpusStats:
    speakers: int
    utterances: int
    hours: float
    avg_len: float
    min_len: float
    max_len: float

    def rounded(self) -> dict:
        """Values as printed in a corpus table: hours and lengths to 0.1."""
        return {
            "speakers": self.speakers,
            "utterances": self.utterances,
            "hours": round(self.hours, 1),
            "avg_len": round(self.avg_len, 1),
            "min_len": round(self.min_len, 1),
            "max_len": round(self.max_len, 1),
        }


@dataclass(frozen=True)
class Catalog:
    speech: dict  # corpus_id -> tuple[SpeechItem, ...]
    noise: dict  # database_id -> tuple[NoiseItem, ...]
    brirs: dict  # database_id -> {room_id -> tuple[BrirItem, ...]}, azimuth-sorted
    base_dir: Path | None = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for kind, items in (
            ("speech", (i for v in self.speech.values() for i in v)),
            ("noise", (i for v in self.noise.values() for i in v)),
            ("brir", (i for rooms in self.brirs.values() for v in rooms.values() for i in v)),
        ):
            for item in items:
                key = (kind, item.path)
                if key in index:
                    raise InvalidArgumentError(f"duplicate {kind} path {item.path!r}")
                index[key] = item
        self._index.update(index)

    def lookup(self, kind: str, path: str):
        try:
            return self._index[(kind, path)]
        except KeyError:
            raise KeyError(f"no {kind} item with path {path!r}") from None

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p

    def iter_items(self):
        """Yield ``(kind, id, item)`` in cache order."""
        for cid in sorted(self.speech):
            for item in self.speech[cid]:
                yield "speech", cid, item
        for did in sorted(self.noise):
            for item in self.noise[did]:
                yield "noise", did, item
        for did in sorted(self.brirs):
            for room in sorted(self.brirs[did]):
                for item in self.brirs[did][room]:
                    yield "brir", did, item

    def __len__(self):
        return len(self._index)


# --------------------------------------------------------------------------
# Cache (JSON Lines)


def _item_record(kind, cid, item) -> dict:
    rec = {"kind": kind, "id": cid, "path": item.path, "duration_s": item.duration_s}
    if kind == "speech":
        rec["speaker_id"] = item.speaker_id
    elif kind == "noise":
        rec["noise_type"] = item.noise_type
    else:
        rec["room_id"] = item.room_id
        rec["azimuth_deg"] = item.azimuth_deg
        rec["index_in_room"] = item.index_in_room
    return rec


def dump_catalog(catalog: Catalog, path) -> None:
    lines = [json.dumps(_item_record(*t), sort_keys=True) for t in catalog.iter_items()]
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_catalog(path, base_dir=None) -> Catalog:
    """Load a JSON Lines cache written by :func:`dump_catalog`.

    Relative item paths resolve against ``base_dir``, then ``$SCENEFORGE_DATA_ROOT``,
    then the directory holding the cache file.
    """
    path = Path(path)
    if base_dir is None:
        base_dir = os.environ.get(DATA_ROOT_ENV) or path.parent
    speech, noise, brirs = defaultdict(list), defaultdict(list), defaultdict(lambda: defaultdict(list))
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind, cid = rec["kind"], rec["id"]
                if kind == "speech":
                    speech[cid].append(SpeechItem(rec["path"], cid, rec["speaker_id"], rec["duration_s"]))
                elif kind == "noise":
                    noise[cid].append(NoiseItem(rec["path"], cid, rec["noise_type"], rec["duration_s"]))
                elif kind == "brir":
                    brirs[cid][rec["room_id"]].append(
                        BrirItem(rec["path"], cid, rec["room_id"], rec["azimuth_deg"],
                                 rec["index_in_room"], rec["duration_s"])
                    )
                else:
                    raise ValueError(f"unknown kind {kind!r}")
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: malformed catalog record: {exc}") from exc
    return build_catalog(speech, noise, brirs, base_dir=Path(base_dir))


def build_catalog(speech, noise, brirs, base_dir=None) -> Catalog:
    """Assemble a catalog with the canonical ordering.

    Speech and noise items are sorted by path.  BRIRs are sorted by azimuth
    within each room and re-indexed from 0.
    """
    speech = {cid: tuple(sorted(v, key=lambda i: i.path)) for cid, v in sorted(speech.items())}
    noise = {did: tuple(sorted(v, key=lambda i: i.path)) for did, v in sorted(noise.items())}
    rooms_out = {}
    for did, rooms in sorted(brirs.items()):
        rooms_out[did] = {}
        for room, items in sorted(rooms.items()):
            ordered = sorted(items, key=lambda i: (i.azimuth_deg, i.path))
            rooms_out[did][room] = tuple(
                BrirItem(i.path, did, room, i.azimuth_deg, k, i.duration_s) for k, i in enumerate(ordered)
            )
    return Catalog(speech, noise, rooms_out, Path(base_dir) if base_dir is not None else None)


# --------------------------------------------------------------------------
# Scanning


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    kind: str
    root: str
    include: tuple = ("**/*.wav",)
    pattern: str | None = None


def _check_glob(glob: str):
    if not isinstance(glob, str) or not glob:
        raise ConfigError(f"include glob must be a non-empty string, got {glob!r}")
    if os.path.isabs(glob) or ".." in Path(glob).parts:
        raise ConfigError(f"include glob must stay inside the entry root: {glob!r}")
    depth = 0
    for ch in glob:
        if ch == "[":
            depth += 1
        elif ch == "]" and depth:
            depth -= 1
    if depth:
        raise ConfigError(f"unbalanced bracket in include glob {glob!r}")


def parse_config(config) -> list[CatalogEntry]:
    """Validate a catalog config mapping (or JSON file path) into entries."""
    if isinstance(config, (str, Path)):
        try:
            config = json.loads(Path(config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read catalog config: {exc}") from exc
    raw = config.get("entries") if isinstance(config, dict) else None
    if not isinstance(raw, list) or not raw:
        raise ConfigError("catalog config needs a non-empty 'entries' list")
    entries, seen = [], set()
    for e in raw:
        if not isinstance(e, dict):
            raise ConfigError(f"catalog entry must be an object, got {e!r}")
        unknown = set(e) - {"id", "kind", "root", "include", "pattern"}
        if unknown:
            raise ConfigError(f"unknown keys in catalog entry: {sorted(unknown)}")
        try:
            cid, kind, root = e["id"], e["kind"], e["root"]
        except KeyError as exc:
            raise ConfigError(f"catalog entry missing {exc}") from exc
        if kind not in KINDS:
            raise ConfigError(f"entry {cid!r}: kind must be one of {KINDS}, got {kind!r}")
        if (kind, cid) in seen:
            raise ConfigError(f"duplicate entry {kind}:{cid}")
        seen.add((kind, cid))
        include = e.get("include", ["**/*.wav"])
        if isinstance(include, str):
            include = [include]
        for g in include:
            _check_glob(g)
        pattern = e.get("pattern")
        if pattern is not None:
            try:
                re.compile(pattern)
            except re.error as exc:
                raise ConfigError(f"entry {cid!r}: bad pattern: {exc}") from exc
        entries.append(CatalogEntry(cid, kind, root, tuple(include), pattern))
    return entries


def _glob_files(root: Path, globs) -> list[Path]:
    found = set()
    for g in globs:
        found.update(p for p in root.glob(g) if p.is_file())
    return sorted(found)


def _relpath(path: Path, base: Path) -> str:
    try:
        return path.relative_to(base).as_posix()
    except ValueError:
        return path.as_posix()


def _item_from_file(entry: CatalogEntry, file: Path, rel_in_entry: str, stored: str):
    match = re.search(entry.pattern, rel_in_entry) if entry.pattern else None
    if entry.pattern and match is None:
        raise ValueError(f"path does not match pattern {entry.pattern!r}")
    groups = match.groupdict() if match else {}
    info = read_wav_info(file)
    if info.frames <= 0:
        raise ValueError("no audio frames")
    parent = file.parent.name
    if entry.kind == "speech":
        return SpeechItem(stored, entry.id, groups.get("speaker") or parent, info.duration)
    if entry.kind == "noise":
        return NoiseItem(stored, entry.id, groups.get("type") or parent, info.duration)
    if info.channels not in (1, 2):
        raise ValueError(f"BRIR must be mono or stereo, got {info.channels} channels")
    az = groups.get("azimuth")
    if az is None:
        raise ValueError("no azimuth group matched")
    az = float(az)
    if not -180 <= az <= 180:
        raise ValueError(f"azimuth {az} outside [-180, 180]")
    return BrirItem(stored, entry.id, groups.get("room") or parent, az, -1, info.duration)


def scan(root, config, workers: int = 1) -> Catalog:
    """Walk the asset tree under ``root`` and read durations from WAV headers.

    Files that cannot be read (or do not match the entry pattern) are logged
    and skipped.  An entry that ends up empty raises :class:`EmptyCorpusError`.
    """
    root = Path(root)
    entries = parse_config(config)
    if not root.is_dir():
        raise ConfigError(f"data root {root} is not a directory")

    jobs = []
    for entry in entries:
        entry_root = root / entry.root
        for file in _glob_files(entry_root, entry.include):
            jobs.append((entry, file, file.relative_to(entry_root).as_posix(), _relpath(file, root)))

    def work(job):
        entry, file, rel, stored = job
        try:
            return _item_from_file(entry, file, rel, stored)
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", file, exc)
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            items = list(pool.map(work, jobs))
    else:
        items = [work(j) for j in jobs]

    speech, noise, brirs = defaultdict(list), defaultdict(list), defaultdict(lambda: defaultdict(list))
    counts = defaultdict(int)
    for (entry, *_), item in zip(jobs, items):
        if item is None:
            continue
        counts[(entry.kind, entry.id)] += 1
        if entry.kind == "speech":
            speech[entry.id].append(item)
        elif entry.kind == "noise":
            noise[entry.id].append(item)
        else:
            brirs[entry.id][item.room_id].append(item)
    for entry in entries:
        if counts[(entry.kind, entry.id)] == 0:
            raise EmptyCorpusError(f"{entry.kind} entry {entry.id!r} has no readable files under {root / entry.root}")
    return build_catalog(speech, noise, brirs, base_dir=root)


# --------------------------------------------------------------------------
# Statistics


def corpus_stats(catalog: Catalog) -> dict[str, CorpusStats]:
    out = {}
    for cid, items in catalog.speech.items():
        if not items:
            raise EmptyCorpusError(f"speech corpus {cid!r} is empty")
        d = np.array([i.duration_s for i in items])
        out[cid] = CorpusStats(
            speakers=len({i.speaker_id for i in items}),
            utterances=len(items),
            hours=float(d.sum() / 3600),
            avg_len=float(d.mean()),
            min_len=float(d.min()),
            max_len=float(d.max()),
        )
    return out


def noise_stats(catalog: Catalog) -> dict[str, dict]:
    return {
        did: {"types": len({i.noise_type for i in items}), "hours": sum(i.duration_s for i in items) / 3600}
        for did, items in catalog.noise.items()
    }


def brir_stats(catalog: Catalog) -> dict[str, dict]:
    return {
        did: {"rooms": len(rooms), "brirs": sum(len(v) for v in rooms.values())}
        for did, rooms in catalog.brirs.items()
    }


# --------------------------------------------------------------------------
# Pool splitting


def _check_fraction(fraction):
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must lie strictly between 0 and 1, got {fraction}")


def _stream_seed(seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])


def split_speech(items, fraction: float = 0.8, seed: int = 0, corpus_id: str | None = None):
    """Seeded shuffle of one corpus; the first ``round(fraction * n)`` go to train.

    Rounding is half-up.  Returns ``(train, test)`` tuples in catalog order.
    """
    _check_fraction(fraction)
    items = list(items)
    if len(items) < 2:
        raise InvalidArgumentError(f"corpus {corpus_id!r} needs at least 2 utterances to split, has {len(items)}")
    if corpus_id is None:
        corpus_id = items[0].corpus_id
    n = len(items)
    n_train = min(max(math.floor(fraction * n + 0.5), 1), n - 1)
    order = np.random.default_rng(_stream_seed(seed, corpus_id)).permutation(n)
    train_idx = set(order[:n_train].tolist())
    train = tuple(it for k, it in enumerate(items) if k in train_idx)
    test = tuple(it for k, it in enumerate(items) if k not in train_idx)
    return train, test


def split_noise(item: NoiseItem, fraction: float = 0.8):
    """Train region ``[0, fraction * L)`` and test region ``[fraction * L, L)`` in seconds."""
    _check_fraction(fraction)
    if item.duration_s <= 0:
        raise InvalidArgumentError(f"noise {item.path!r} has non-positive duration")
    cut = fraction * item.duration_s
    return (0.0, cut), (cut, item.duration_s)


def split_brirs(room_items):
    """Even azimuth-sorted indices go to train, odd ones to test."""
    room_items = sorted(room_items, key=lambda i: i.index_in_room)
    if len(room_items) < 2:
        room = room_items[0].room_id if room_items else "?"
        raise InvalidArgumentError(f"room {room!r} needs at least 2 BRIRs to split, has {len(room_items)}")
    return tuple(room_items[0::2]), tuple(room_items[1::2])


@dataclass(frozen=True)
class PoolAssignment:
    split: str
    speech: dict  # corpus_id -> tuple[SpeechItem, ...]
    noise_regions: dict  # database_id -> tuple[(NoiseItem, start_s, end_s), ...]
    brirs: dict  # database_id -> {room_id -> tuple[BrirItem, ...]}

    def fingerprint(self) -> str:
        payload = {
            "split": self.split,
            "speech": {c: [i.path for i in v] for c, v in sorted(self.speech.items())},
            "noise": {d: [[n.path, a, b] for n, a, b in v] for d, v in sorted(self.noise_regions.items())},
            "brirs": {
                d: {r: [i.path for i in v] for r, v in sorted(rooms.items())} for d, rooms in sorted(self.brirs.items())
            },
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def assign_pools(
    catalog: Catalog, seed: int = 0, speech_fraction: float = 0.8, noise_fraction: float = 0.8
) -> dict[str, PoolAssignment]:
    """Split every corpus, noise file and room into ``{"train": ..., "test": ...}`` pools."""
    _check_fraction(speech_fraction)
    _check_fraction(noise_fraction)
    speech = {"train": {}, "test": {}}
    for cid, items in catalog.speech.items():
        speech["train"][cid], speech["test"][cid] = split_speech(items, speech_fraction, seed, cid)
    noise = {"train": {}, "test": {}}
    for did, items in catalog.noise.items():
        regions = [split_noise(i, noise_fraction) for i in items]
        noise["train"][did] = tuple((i, *r[0]) for i, r in zip(items, regions))
        noise["test"][did] = tuple((i, *r[1]) for i, r in zip(items, regions))
    brirs = {"train": {}, "test": {}}
    for did, rooms in catalog.brirs.items():
        brirs["train"][did], brirs["test"][did] = {}, {}
        for room, items in rooms.items():
            brirs["train"][did][room], brirs["test"][did][room] = split_brirs(items)
    return {s: PoolAssignment(s, speech[s], noise[s], brirs[s]) for s in ("train", "test")}
