"""Raster and manifest I/O, sparse sampling, preprocessing and measurement noise."""

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, ParseError
from .grid import BinaryGrid, Grid
from .rdm import RdmParams, radio_depth_map
from .scene import Scene, SimParams, random_scene, simulate_radiomap

SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


# --------------------------------------------------------------------------
# sparse observations

@dataclass(frozen=True)
class SampleSet:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.int64).ravel()
        ys = np.asarray(self.ys, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if not (len(xs) == len(ys) == len(vals)):
            raise ValueError("xs, ys and values must have equal length")
        if len(xs):
            if xs.min() < 0 or ys.min() < 0 or xs.max() >= self.width or ys.max() >= self.height:
                raise ValueError("sample coordinates out of bounds")
            if len(np.unique(ys * self.width + xs)) != len(xs):
                raise ValueError("sample coordinates must be unique")
            if not (np.all(np.isfinite(vals)) and vals.min() >= 0.0 and vals.max() <= 1.0):
                raise ValueError("sample values must lie in [0, 1]")
        for name, a in (("xs", xs), ("ys", ys), ("values", vals)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return len(self.values)

    @property
    def source_size(self):
        return self.width, self.height

    @property
    def entries(self):
        return [((int(x), int(y)), float(v)) for x, y, v in zip(self.xs, self.ys, self.values)]

    @classmethod
    def empty(cls, width, height):
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), width, height)

    def with_values(self, values):
        return replace(self, values=values)


@dataclass(frozen=True)
class PreprocessParams:
    low_threshold: float = 0.0
    sr: float = 0.01
    noise_snr_db: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.low_threshold < 1:
            raise ConfigError(f"low_threshold must lie in [0, 1), got {self.low_threshold}")
        if not 0 < self.sr <= 1:
            raise ConfigError(f"sampling ratio must lie in (0, 1], got {self.sr}")


def requested_count(sr, width, height):
    # tolerance guards against 0.07 * 100 = 7.000000000000001 style round-off
    return int(math.floor(sr * width * height + 1e-9))


def sample_uniform(rm, p):
    """Draw floor(sr·W·H) distinct pixels, then drop those below the low threshold."""
    h, w = rm.shape
    k = requested_count(p.sr, w, h)
    if k < 1:
        raise ConfigError(f"sampling ratio {p.sr} yields no samples on a {w}x{h} grid")
    rng = np.random.default_rng(p.seed)
    idx = np.sort(rng.choice(w * h, size=k, replace=False))
    ys, xs = np.divmod(idx, w)
    vals = rm.values[ys, xs]
    keep = vals >= p.low_threshold
    if not keep.any():
        raise ConfigError(f"every sample fell below low_threshold={p.low_threshold}")
    s = SampleSet(xs[keep], ys[keep], np.clip(vals[keep], 0.0, 1.0), w, h)
    if p.noise_snr_db is not None:
        s = add_awgn(s, p.noise_snr_db, p.seed)
    return s


def to_observation_grid(s):
    """Zero-padded observation raster: sample values at sampled pixels, 0 elsewhere."""
    a = np.zeros((s.height, s.width))
    a[s.ys, s.xs] = s.values
    return Grid(a)


def _no_noise(snr_db):
    return snr_db is None or (isinstance(snr_db, str) and snr_db.lower() in ("none", "inf")) \
        or (not isinstance(snr_db, str) and math.isinf(snr_db) and snr_db > 0)


def awgn_sigma(values, snr_db):
    """Noise std for a target SNR relative to the mean squared sample value."""
    if _no_noise(snr_db):
        return 0.0
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return 0.0
    power = float(np.mean(values ** 2))
    return math.sqrt(power / 10.0 ** (float(snr_db) / 10.0))


def awgn_noise(values, snr_db, seed):
    sigma = awgn_sigma(values, snr_db)
    if sigma == 0.0:
        return np.zeros(len(values))
    return np.random.default_rng(seed).normal(0.0, sigma, size=len(values))


def add_awgn(s, snr_db, seed):
    """Additive Gaussian noise on each sample value, clamped back to [0, 1]."""
    if _no_noise(snr_db) or len(s) == 0:
        return s
    noise = awgn_noise(s.values, snr_db, seed)
    if not noise.any():
        return s
    return s.with_values(np.clip(s.values + noise, 0.0, 1.0))


def write_samples_csv(s, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "value"])
        for x, y, v in zip(s.xs, s.ys, s.values):
            w.writerow([int(x), int(y), repr(float(v))])


def read_samples_csv(path, width, height):
    try:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        xs = [int(r["x"]) for r in rows]
        ys = [int(r["y"]) for r in rows]
        vs = [float(r["value"]) for r in rows]
        return SampleSet(xs, ys, vs, width, height)
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed sample CSV: {exc}") from exc


# --------------------------------------------------------------------------
# rasters

def quantize(g):
    """8-bit codes (round half up) for a grid with values in [0, 1]."""
    vals = g.values if isinstance(g, Grid) else np.asarray(g, dtype=np.float64)
    return np.clip(np.floor(vals * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _parse_pgm(data):
    tokens = []
    i, n = 0, len(data)
    while i < n and len(tokens) < 4:
        c = data[i:i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append((i, data[i:j]))
            i = j
    if not tokens or tokens[0][1] != b"P2":
        raise FormatError("not an ASCII PGM (P2) file")
    if len(tokens) < 4:
        raise ParseError("truncated PGM header", i)
    head = []
    for off, tok in tokens[1:]:
        if not tok.isdigit():
            raise ParseError(f"bad PGM header field {tok!r}", off)
        head.append(int(tok))
    w, h, maxval = head
    if w < 1 or h < 1:
        raise ParseError("PGM dimensions must be positive", tokens[1][0])
    if maxval != 255:
        raise FormatError(f"PGM max value must be 255, got {maxval}")
    vals = []
    while i < n:
        c = data[i:i + 1]
        if c.isspace():
            i += 1
            continue
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace():
            j += 1
        tok = data[i:j]
        if not tok.isdigit() or int(tok) > 255:
            raise ParseError(f"bad PGM pixel value {tok!r}", i)
        vals.append(int(tok))
        i = j
    if len(vals) != w * h:
        raise ParseError(f"expected {w * h} PGM pixels, found {len(vals)}", n)
    return np.array(vals, dtype=np.uint8).reshape(h, w)


def _read_png(data):
    from PIL import Image, UnidentifiedImageError

    try:
        im = Image.open(io.BytesIO(data))
        im.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ParseError(f"unreadable PNG: {exc}", 0) from exc
    if im.mode == "1":
        im = im.convert("L")
    if im.mode != "L":
        raise FormatError(f"raster must be 8-bit grayscale, got PIL mode {im.mode!r}")
    return np.asarray(im, dtype=np.uint8)


def load_raster_codes(path):
    data = Path(path).read_bytes()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(data)
    if data[:2] == b"P2":
        return _parse_pgm(data)
    if data[:1] == b"P" and data[1:2].isdigit():
        raise FormatError(f"{path}: only ASCII grayscale PGM (P2) is supported")
    raise FormatError(f"{path}: neither PNG nor PGM")


def load_raster(path):
    """Read an 8-bit grayscale PNG or P2 PGM; pixel v maps to v/255."""
    return Grid(load_raster_codes(path).astype(np.float64) / 255.0)


def save_raster(g, path):
    """Write a [0, 1] grid as 8-bit grayscale; format chosen from the suffix (.png or .pgm)."""
    codes = quantize(g)
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(codes, mode="L").save(path, format="PNG")
        return
    h, w = codes.shape
    lines = [f"P2\n{w} {h}\n255"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in codes)
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# manifests

@dataclass
class ManifestEntry:
    gain: str
    buildings: str
    tx: list
    split: str = "train"


@dataclass
class DatasetManifest:
    entries: list
    normalization: dict = field(default_factory=dict)
    base_dir: Path | None = None

    def to_dict(self):
        d = {"entries": [{"gain": e.gain, "buildings": e.buildings, "tx": [list(t) for t in e.tx],
                          "split": e.split} for e in self.entries]}
        if self.normalization:
            d["normalization"] = dict(self.normalization)
        return d

    def split_indices(self, split):
        return [i for i, e in enumerate(self.entries) if e.split == split]


def load_manifest(path):
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(d, dict) or not isinstance(d.get("entries"), list):
        raise DataError(f"{path}: manifest needs an 'entries' list")
    entries = []
    for k, e in enumerate(d["entries"]):
        try:
            split = e.get("split", "train")
            if split not in SPLITS:
                raise DataError(f"{path}: entry {k} has unknown split {split!r}")
            tx = [(int(t[0]), int(t[1])) for t in e["tx"]]
            entries.append(ManifestEntry(str(e["gain"]), str(e["buildings"]), tx, split))
        except (KeyError, TypeError, IndexError, ValueError, AttributeError) as exc:
            raise DataError(f"{path}: malformed entry {k}: {exc}") from exc
    norm = d.get("normalization", {}) or {}
    if norm and not {"lo_db", "hi_db"} <= set(norm):
        raise DataError(f"{path}: normalization needs lo_db and hi_db")
    return DatasetManifest(entries, norm, path.parent)


def save_manifest(m, path):
    Path(path).write_text(json.dumps(m.to_dict(), indent=1))


def split_dataset(manifest, fractions=DEFAULT_FRACTIONS, seed=0):
    """Seeded shuffle into train/val/test; val and test take floor shares, train the rest."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = len(manifest.entries)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_test = int(math.floor(fractions[2] * n + 1e-9))
    labels = ["train"] * n
    for pos, i in enumerate(order):
        if pos < n_val:
            labels[i] = "val"
        elif pos < n_val + n_test:
            labels[i] = "test"
    entries = [replace(e, split=s) for e, s in zip(manifest.entries, labels)]
    return DatasetManifest(entries, dict(manifest.normalization), manifest.base_dir)


def to_db(g, normalization):
    """Undo the linear normalization: [0, 1] back to dB."""
    lo, hi = float(normalization["lo_db"]), float(normalization["hi_db"])
    return lo + g.values * (hi - lo)


# --------------------------------------------------------------------------
# in-memory datasets

@dataclass(frozen=True)
class MapItem:
    scene: Scene
    radiomap: Grid
    rdm: Grid
    split: str = "train"


@dataclass
class RadioDataset:
    items: list
    normalization: dict = field(default_factory=dict)

    def split(self, name):
        return [it for it in self.items if it.split == name]

    def __len__(self):
        return len(self.items)


def make_synthetic_dataset(n_scenes, size=32, n_buildings=5, n_tx=1, seed=0,
                           sim=None, rdm_params=None, fractions=DEFAULT_FRACTIONS):
    """Random scenes, their simulated radiomaps and depth maps, split by seeded shuffle."""
    sim = sim or SimParams()
    rdm_params = rdm_params or RdmParams()
    ss = np.random.SeedSequence(seed)
    scene_seeds = [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(n_scenes)]
    items = []
    for s in scene_seeds:
        sc = random_scene(size, n_buildings, n_tx, s)
        items.append(MapItem(sc, simulate_radiomap(sc, sim), radio_depth_map(sc, rdm_params)))
    dummy = DatasetManifest([ManifestEntry("", "", [], "train") for _ in items])
    labels = [e.split for e in split_dataset(dummy, fractions, seed).entries]
    items = [replace(it, split=lab) for it, lab in zip(items, labels)]
    return RadioDataset(items, {"lo_db": sim.floor_db, "hi_db": sim.ref_power_db})


def write_dataset(ds, out_dir, fmt="png"):
    """Persist gain and building rasters plus a manifest; returns the manifest path."""
    from .scene import save_scene

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, it in enumerate(ds.items):
        gain = f"{i:05d}_gain.{fmt}"
        bld = f"{i:05d}_buildings.{fmt}"
        save_raster(it.radiomap, out / gain)
        save_raster(it.scene.buildings, out / bld)
        save_scene(it.scene, out / f"{i:05d}_scene.json")
        entries.append(ManifestEntry(gain, bld, [[t.x, t.y] for t in it.scene.transmitters], it.split))
    path = out / "manifest.json"
    save_manifest(DatasetManifest(entries, dict(ds.normalization)), path)
    return path


def load_dataset(manifest_path, rdm_params=None):
    """Read a manifest and its rasters; depth maps are recomputed from buildings and transmitters."""
    rdm_params = rdm_params or RdmParams()
    m = load_manifest(manifest_path)
    items = []
    for e in m.entries:
        rm = load_raster(m.base_dir / e.gain)
        mask = load_raster(m.base_dir / e.buildings).values >= 0.5
        try:
            sc = Scene(BinaryGrid(mask), tuple(e.tx))
        except ConfigError as exc:
            raise DataError(f"{e.buildings}: {exc}") from exc
        if rm.shape != mask.shape:
            raise DataError(f"{e.gain}: raster shape {rm.shape} differs from buildings {mask.shape}")
        items.append(MapItem(sc, rm, radio_depth_map(sc, rdm_params), e.split))
    return RadioDataset(items, dict(m.normalization))
