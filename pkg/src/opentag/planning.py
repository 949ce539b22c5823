"""Vocabulary, split-variant, and soundscape/clip planning.

Plans class vocabularies, rotating known/unknown split variants with a
target openness, and the event/clip specifications that the feature
synthesizer consumes.  Everything here is pure bookkeeping: no features
are rendered and no audio exists at any point.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

TAG_KNOWN = "KK"
TAG_KNOWN_UNKNOWN = "KU"
TAG_UNKNOWN = "UU"

POOLS = ("train", "val", "test", "tuning")
_POOL_CODE = {name: i for i, name in enumerate(POOLS)}

SOUNDSCAPE_DURATION = 10.0
CLIP_LENGTH = 1.0
ONSET_RANGE = (0.0, 9.0)
EVENT_DURATION_RANGE = (0.5, 4.0)
PITCH_RANGE = (-2.0, 2.0)
STRETCH_RANGE = (0.8, 1.2)
POLYPHONY_RANGE = (1, 4)

# Disjoint virtual source-id blocks, one per pool, so no "source" is ever
# shared between splits.
_POOL_SOURCE_BASE = {name: (i + 1) << 40 for i, name in enumerate(POOLS)}


@dataclass
class ClassVocabulary:
    """Ordered class ids 0..C-1 with relative sampling weights."""

    classes: list
    weights: np.ndarray

    def __post_init__(self):
        self.classes = list(self.classes)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.classes != list(range(len(self.classes))):
            raise ValueError("class ids must be unique and contiguous from 0")
        if len(self.weights) != len(self.classes):
            raise ValueError("one weight per class required")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1 within 1e-9")

    def __len__(self):
        return len(self.classes)

    @classmethod
    def uniform(cls, n_classes):
        return cls(list(range(n_classes)), np.full(n_classes, 1.0 / n_classes))

    @classmethod
    def power_law(cls, n_classes, exponent=1.0):
        """Imbalanced vocabulary: weight of class c proportional to 1/(c+1)^exponent."""
        w = 1.0 / np.arange(1, n_classes + 1, dtype=float) ** exponent
        return cls(list(range(n_classes)), w / w.sum())


@dataclass
class OpennessReport:
    c_tr: int
    c_te: int
    o_star: float

    def as_dict(self):
        return {"c_tr": self.c_tr, "c_te": self.c_te, "o_star": self.o_star}


def compute_openness(c_tr, c_te):
    """Openness of a split: 1 - sqrt(2*c_tr / (c_tr + c_te)).

    ``c_tr`` counts classes seen during training, ``c_te`` classes present
    at test time.  Larger training vocabularies give lower openness; the
    closed set (c_tr == c_te) has openness 0.
    """
    if c_tr < 1:
        raise ValueError("c_tr must be >= 1")
    if c_tr > c_te:
        raise ValueError("c_tr cannot exceed c_te")
    o_star = 1.0 - math.sqrt(2.0 * c_tr / (c_tr + c_te))
    return OpennessReport(c_tr=int(c_tr), c_te=int(c_te), o_star=o_star)


@dataclass
class ClassSplit:
    """One variant's partition of the vocabulary into tagged subsets."""

    variant_id: int
    subsets: list               # list of lists of class ids
    assignment: list            # per-subset tag: KK / KU / UU
    openness_mode: str          # "low" | "high"

    def __post_init__(self):
        flat = [c for sub in self.subsets for c in sub]
        if len(flat) != len(set(flat)):
            raise ValueError("subsets must be disjoint")
        if len(self.assignment) != len(self.subsets):
            raise ValueError("one tag per subset required")
        bad = set(self.assignment) - {TAG_KNOWN, TAG_KNOWN_UNKNOWN, TAG_UNKNOWN}
        if bad:
            raise ValueError(f"unknown subset tags: {sorted(bad)}")
        if self.openness_mode == "high" and TAG_KNOWN_UNKNOWN in self.assignment:
            raise ValueError("high-openness splits have no KU subsets")
        if TAG_KNOWN not in self.assignment:
            raise ValueError("at least one KK subset required")

    @property
    def known_classes(self):
        """Training-visible classes (KK plus KU subsets), sorted."""
        out = []
        for sub, tag in zip(self.subsets, self.assignment):
            if tag in (TAG_KNOWN, TAG_KNOWN_UNKNOWN):
                out.extend(sub)
        return sorted(out)

    @property
    def unknown_classes(self):
        """Classes seen only at test time (UU subsets), sorted."""
        out = []
        for sub, tag in zip(self.subsets, self.assignment):
            if tag == TAG_UNKNOWN:
                out.extend(sub)
        return sorted(out)

    @property
    def all_classes(self):
        return sorted(c for sub in self.subsets for c in sub)

    def openness(self):
        return compute_openness(len(self.known_classes), len(self.all_classes))

    def as_dict(self):
        return {
            "variant_id": self.variant_id,
            "openness_mode": self.openness_mode,
            "subsets": [list(map(int, sub)) for sub in self.subsets],
            "assignment": list(self.assignment),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            variant_id=int(d["variant_id"]),
            subsets=[list(map(int, sub)) for sub in d["subsets"]],
            assignment=list(d["assignment"]),
            openness_mode=d["openness_mode"],
        )


def _base_pattern(n_subsets, openness_mode):
    if openness_mode == "low":
        return [TAG_KNOWN] * (n_subsets - 2) + [TAG_KNOWN_UNKNOWN, TAG_UNKNOWN]
    if openness_mode == "high":
        return [TAG_KNOWN] * (n_subsets - 2) + [TAG_UNKNOWN, TAG_UNKNOWN]
    raise ValueError(f"openness_mode must be 'low' or 'high', got {openness_mode!r}")


def make_split_variants(vocab, n_subsets, openness_mode):
    """Build one split variant per subset by rotating the tag pattern.

    Subsets are contiguous id blocks whose sizes differ by at most one
    (larger blocks first).  Variant 1 uses the base pattern (all leading
    subsets KK, trailing KU/UU or UU/UU depending on mode); each further
    variant rotates the pattern one subset to the right.
    """
    if n_subsets < 3:
        raise ValueError("need at least 3 subsets")
    n_classes = len(vocab)
    if n_classes < n_subsets:
        raise ValueError("vocabulary too small: every subset needs >= 1 class")

    base_size, rem = divmod(n_classes, n_subsets)
    sizes = [base_size + 1] * rem + [base_size] * (n_subsets - rem)
    subsets, start = [], 0
    for size in sizes:
        subsets.append(list(range(start, start + size)))
        start += size

    pattern = _base_pattern(n_subsets, openness_mode)
    variants = []
    for v in range(1, n_subsets + 1):
        assignment = [pattern[(s - (v - 1)) % n_subsets] for s in range(n_subsets)]
        variants.append(
            ClassSplit(
                variant_id=v,
                subsets=[list(sub) for sub in subsets],
                assignment=assignment,
                openness_mode=openness_mode,
            )
        )
    return variants


@dataclass
class EventSpec:
    """One placed sound event inside a soundscape."""

    class_id: int
    onset: float
    duration: float
    pitch_shift: float
    time_stretch: float
    source_id: int = field(default=-1)

    def __post_init__(self):
        if not ONSET_RANGE[0] <= self.onset <= ONSET_RANGE[1]:
            raise ValueError(f"onset {self.onset} outside {ONSET_RANGE}")
        if self.duration < EVENT_DURATION_RANGE[0] or self.duration > EVENT_DURATION_RANGE[1]:
            raise ValueError(f"duration {self.duration} outside {EVENT_DURATION_RANGE}")
        if not PITCH_RANGE[0] <= self.pitch_shift <= PITCH_RANGE[1]:
            raise ValueError(f"pitch_shift {self.pitch_shift} outside {PITCH_RANGE}")
        if not STRETCH_RANGE[0] <= self.time_stretch <= STRETCH_RANGE[1]:
            raise ValueError(f"time_stretch {self.time_stretch} outside {STRETCH_RANGE}")

    @property
    def offset(self):
        return self.onset + self.duration

    def as_dict(self):
        return {
            "class": int(self.class_id),
            "onset": self.onset,
            "duration": self.duration,
            "pitch": self.pitch_shift,
            "stretch": self.time_stretch,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            class_id=int(d["class"]),
            onset=float(d["onset"]),
            duration=float(d["duration"]),
            pitch_shift=float(d["pitch"]),
            time_stretch=float(d["stretch"]),
        )


@dataclass
class SoundscapeSpec:
    spec_id: str
    events: list
    duration: float = SOUNDSCAPE_DURATION

    def __post_init__(self):
        if not POLYPHONY_RANGE[0] <= len(self.events) <= POLYPHONY_RANGE[1]:
            raise ValueError(
                f"soundscape needs {POLYPHONY_RANGE[0]}..{POLYPHONY_RANGE[1]} events"
            )
        for ev in self.events:
            if ev.onset > ONSET_RANGE[1] or ev.onset < ONSET_RANGE[0]:
                raise ValueError("event does not fit the placement window")

    def as_dict(self):
        return {"id": self.spec_id, "events": [ev.as_dict() for ev in self.events]}

    @classmethod
    def from_dict(cls, d):
        return cls(
            spec_id=str(d["id"]),
            events=[EventSpec.from_dict(e) for e in d["events"]],
        )


@dataclass
class ClipSpec:
    """A one-second window centered on an event, with overlap-derived labels."""

    clip_id: str
    soundscape_id: str
    window: tuple                # (start, end), end - start == CLIP_LENGTH
    labels: tuple                # sorted class ids with positive overlap
    polyphony: int               # number of overlapping events (m)

    def __post_init__(self):
        start, end = self.window
        if abs((end - start) - CLIP_LENGTH) > 1e-9:
            raise ValueError("clip window must have length 1.0 s")
        if not POLYPHONY_RANGE[0] <= self.polyphony <= POLYPHONY_RANGE[1]:
            raise ValueError("clip polyphony out of range")

    def as_dict(self):
        return {
            "id": self.clip_id,
            "soundscape_id": self.soundscape_id,
            "window": [self.window[0], self.window[1]],
            "labels": [int(c) for c in self.labels],
            "m": int(self.polyphony),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            clip_id=str(d["id"]),
            soundscape_id=str(d["soundscape_id"]),
            window=(float(d["window"][0]), float(d["window"][1])),
            labels=tuple(sorted(int(c) for c in d["labels"])),
            polyphony=int(d["m"]),
        )


def default_min_examples(n_soundscapes):
    """Desk-scale rescaling of the 200-per-class floor used at full scale."""
    return math.ceil(200 * n_soundscapes / 200_000)


def pool_rng(rng_seed, pool, *extra):
    """Derived generator for one pool (and optional sub-index) of a plan seed."""
    if pool not in _POOL_CODE:
        raise ValueError(f"pool must be one of {POOLS}, got {pool!r}")
    return np.random.default_rng(
        np.random.SeedSequence((int(rng_seed), _POOL_CODE[pool]) + tuple(int(x) for x in extra))
    )


def sample_soundscape_specs(split, n, pool, rng_seed, vocab=None, min_examples=None):
    """Draw ``n`` soundscape specs for one pool of one split variant.

    Train/val pools draw event classes from the training-visible classes
    only; test/tuning pools draw from the full vocabulary.  Per-class
    event counts follow the (renormalized) vocabulary weights subject to
    a per-class minimum; polyphony, onsets, durations, and augmentations
    are sampled uniformly.  Deterministic under ``rng_seed``; each pool
    allocates virtual source ids from its own disjoint block.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if pool in ("train", "val"):
        eligible = split.known_classes
    else:
        eligible = split.all_classes
    if vocab is not None:
        by_class = dict(zip(vocab.classes, vocab.weights))
        weights = np.asarray([by_class[c] for c in eligible], dtype=float)
        weights = weights / weights.sum()
    else:
        weights = np.full(len(eligible), 1.0 / len(eligible))

    if min_examples is None:
        min_examples = default_min_examples(n)

    rng = pool_rng(rng_seed, pool)
    polyphony = rng.integers(POLYPHONY_RANGE[0], POLYPHONY_RANGE[1] + 1, size=n)
    total_slots = int(polyphony.sum())
    floor_total = min_examples * len(eligible)
    if total_slots < floor_total:
        raise ValueError(
            f"n={n} gives {total_slots} event slots; "
            f"{floor_total} needed for the per-class minimum of {min_examples}"
        )

    counts = np.full(len(eligible), min_examples, dtype=int)
    counts += rng.multinomial(total_slots - floor_total, weights)
    class_slots = np.repeat(np.asarray(eligible, dtype=int), counts)
    rng.shuffle(class_slots)

    source_base = _POOL_SOURCE_BASE[pool]
    specs, slot = [], 0
    for i in range(n):
        m = int(polyphony[i])
        events = []
        for j in range(m):
            onset = float(rng.uniform(*ONSET_RANGE))
            duration = float(rng.uniform(*EVENT_DURATION_RANGE))
            # Truncate events that would run past the soundscape end,
            # as an audio renderer would.
            duration = min(duration, SOUNDSCAPE_DURATION - onset)
            events.append(
                EventSpec(
                    class_id=int(class_slots[slot]),
                    onset=onset,
                    duration=duration,
                    pitch_shift=float(rng.uniform(*PITCH_RANGE)),
                    time_stretch=float(rng.uniform(*STRETCH_RANGE)),
                    source_id=source_base + slot,
                )
            )
            slot += 1
        specs.append(
            SoundscapeSpec(spec_id=f"{pool}-v{split.variant_id}-{i:06d}", events=events)
        )
    return specs


def window_clips(spec):
    """One clip per event: a 1 s window on the event center, clamped inside
    the soundscape, labeled with every class whose event overlaps the
    window with strictly positive length."""
    clips = []
    for idx, ev in enumerate(spec.events):
        center = ev.onset + ev.duration / 2.0
        start = min(max(center - CLIP_LENGTH / 2.0, 0.0), spec.duration - CLIP_LENGTH)
        end = start + CLIP_LENGTH
        overlapping = [
            j
            for j, other in enumerate(spec.events)
            if min(other.offset, end) - max(other.onset, start) > 0.0
        ]
        labels = tuple(sorted({spec.events[j].class_id for j in overlapping}))
        clips.append(
            ClipSpec(
                clip_id=f"{spec.spec_id}-c{idx}",
                soundscape_id=spec.spec_id,
                window=(start, end),
                labels=labels,
                polyphony=len(overlapping),
            )
        )
    return clips


def clip_event_indices(spec, clip):
    """Indices of the events of ``spec`` overlapping ``clip``'s window."""
    start, end = clip.window
    return [
        j
        for j, ev in enumerate(spec.events)
        if min(ev.offset, end) - max(ev.onset, start) > 0.0
    ]


def write_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.as_dict(), sort_keys=True) + "\n")


def read_soundscapes_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [SoundscapeSpec.from_dict(json.loads(line)) for line in fh if line.strip()]


def read_clips_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [ClipSpec.from_dict(json.loads(line)) for line in fh if line.strip()]
