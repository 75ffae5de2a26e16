"""Toy trajectory-video domain and the dual-event prompt suite.

A "video" is a T x F frame matrix, each frame laid out as
``[pos_x, pos_y, identity..., background...]`` with ``F = 2 + 2d``.
Dual-event semantics: frames before ``floor(T/2)`` belong to event 1 and
the rest to event 2, and the step into frame m is driven by the event
that owns frame m.  The first-person view stores heading-relative steps
instead of absolute positions; identity/background channels are
view-independent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .analytic import GaussianMixture, sample_mixture
from .conditioning import ConditionEmbedding, compose_concat, compose_single

__all__ = [
    "VIEWS",
    "CATEGORIES",
    "TABLE_COUNTS",
    "EventParams",
    "PromptRecord",
    "SuiteReport",
    "embed_event",
    "blended_event",
    "mean_trajectory",
    "sample_trajectory",
    "condition_of",
    "gaussian_of",
    "generate_suite",
    "write_suite",
    "read_suite",
    "validate_suite",
    "mixture_data_sampler",
    "suite_training_pairs",
]

VIEWS = ("first", "third")
CATEGORIES = ("General", "MotionOrder", "HumanIdentity", "ComplexPlot", "EgoExo")

# Fixed category sizes of the generated benchmark suite (total 310).
TABLE_COUNTS = {
    "General": 60,
    "MotionOrder": 98,
    "HumanIdentity": 32,
    "ComplexPlot": 60,
    "EgoExo": 100,
}

TWO_PI = 2.0 * math.pi


def _as_feature(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EventParams:
    """One event: heading (radians), speed (units/frame), identity and
    background feature vectors."""

    direction: float
    speed: float
    identity: np.ndarray
    background: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.direction) and 0.0 <= self.direction < TWO_PI):
            raise ValueError(f"direction must lie in [0, 2*pi), got {self.direction}")
        if not (np.isfinite(self.speed) and self.speed >= 0.0):
            raise ValueError(f"speed must be finite and >= 0, got {self.speed}")
        object.__setattr__(self, "identity", _as_feature(self.identity, "identity"))
        object.__setattr__(self, "background", _as_feature(self.background, "background"))
        if self.identity.shape != self.background.shape:
            raise ValueError("identity and background must share one dimension")

    @property
    def feature_dim(self) -> int:
        return self.identity.shape[0]

    @property
    def drift(self) -> np.ndarray:
        """Per-frame displacement vector speed * (cos, sin)."""
        return self.speed * np.array(
            [math.cos(self.direction), math.sin(self.direction)]
        )

    def __eq__(self, other):
        if not isinstance(other, EventParams):
            return NotImplemented
        return (
            self.direction == other.direction
            and self.speed == other.speed
            and np.array_equal(self.identity, other.identity)
            and np.array_equal(self.background, other.background)
        )

    def __hash__(self):
        return hash(
            (self.direction, self.speed, self.identity.tobytes(), self.background.tobytes())
        )


@dataclass(frozen=True, eq=False)
class PromptRecord:
    """One benchmark prompt: two ordered events plus bookkeeping."""

    id: str
    category: str
    view: str
    events: tuple[EventParams, EventParams]
    pair_id: str | None = None
    text: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.view not in VIEWS:
            raise ValueError(f"view must be one of {VIEWS}, got {self.view!r}")
        events = tuple(self.events)
        if len(events) != 2:
            raise ValueError("events must have length 2")
        if events[0].feature_dim != events[1].feature_dim:
            raise ValueError("events differ in feature dimension")
        object.__setattr__(self, "events", events)

    @property
    def feature_dim(self) -> int:
        return self.events[0].feature_dim


def embed_event(event: EventParams) -> np.ndarray:
    """Event slot vector [cos(dir), sin(dir), speed, identity..., background...]."""
    return np.concatenate(
        [
            [math.cos(event.direction), math.sin(event.direction), event.speed],
            event.identity,
            event.background,
        ]
    )


def _rotate(vec: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])


def mean_trajectory(
    e1: EventParams, e2: EventParams, n_frames: int, view: str = "third"
) -> np.ndarray:
    """Noiseless trajectory for event 1 then event 2, split at floor(T/2).

    Positions start at the origin and integrate the owning event's drift,
    so they are exactly piecewise linear in the frame index within each
    segment.  ``view='first'`` stores, per frame, the step out of that
    frame rotated by minus the driving event's heading (the last frame
    repeats the previous step); third-view positions are recoverable by
    rotating back and cumulatively summing.
    """
    if n_frames < 2:
        raise ValueError("a trajectory needs at least 2 frames")
    if view not in VIEWS:
        raise ValueError(f"view must be one of {VIEWS}, got {view!r}")
    if e1.feature_dim != e2.feature_dim:
        raise ValueError("events differ in feature dimension")
    split = n_frames // 2
    d = e1.feature_dim
    frames = np.zeros((n_frames, 2 + 2 * d))

    def owner(m: int) -> EventParams:
        return e1 if m < split else e2

    steps = np.stack([owner(m).drift for m in range(1, n_frames)])
    for m in range(n_frames):
        frames[m, 2 : 2 + d] = owner(m).identity
        frames[m, 2 + d :] = owner(m).background
    if view == "third":
        frames[1:, :2] = np.cumsum(steps, axis=0)
    else:
        for m in range(n_frames - 1):
            frames[m, :2] = _rotate(steps[m], -owner(m + 1).direction)
        frames[-1, :2] = frames[-2, :2]
    return frames


def sample_trajectory(
    e1: EventParams,
    e2: EventParams,
    n_frames: int,
    sigma: float,
    seed: int,
    view: str = "third",
) -> np.ndarray:
    """Mean trajectory plus i.i.d. Gaussian observation noise."""
    if not (np.isfinite(sigma) and sigma >= 0.0):
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    mean = mean_trajectory(e1, e2, n_frames, view)
    if sigma == 0.0:
        return mean
    rng = np.random.default_rng(seed)
    return mean + sigma * rng.standard_normal(mean.shape)


def condition_of(record: PromptRecord, which: str) -> ConditionEmbedding:
    """Condition embedding for one of ``event1``, ``event2`` or ``concat``."""
    e1, e2 = record.events
    if which == "event1":
        return compose_single(embed_event(e1))
    if which == "event2":
        return compose_single(embed_event(e2))
    if which == "concat":
        return compose_concat(embed_event(e1), embed_event(e2))
    raise ValueError(f"which must be 'event1', 'event2' or 'concat', got {which!r}")


def blended_event(e1: EventParams, e2: EventParams) -> EventParams:
    """Pseudo-event averaging both drifts and both appearance vectors."""
    v = 0.5 * (e1.drift + e2.drift)
    speed = float(np.hypot(v[0], v[1]))
    direction = math.atan2(v[1], v[0]) % TWO_PI if speed > 0.0 else 0.0
    return EventParams(
        direction,
        speed,
        0.5 * (e1.identity + e2.identity),
        0.5 * (e1.background + e2.background),
    )


def gaussian_of(
    record: PromptRecord,
    which: str,
    n_frames: int,
    sigma: float,
    w_mix: float = 0.5,
) -> GaussianMixture:
    """Data distribution implied by a prompt condition.

    ``event1``/``event2`` give an isotropic Gaussian around the
    corresponding single-event video.  ``concat`` is a two-component
    mixture: weight ``w_mix`` on the event-1-then-event-2 video and the
    rest on a blended-drift video, reflecting that naming both events can
    come out as either reading.  ``w_mix`` is clamped to [0.01, 0.99] so
    neither component degenerates; ``sigma = 0`` yields point masses at
    the variance floor.
    """
    if not (np.isfinite(sigma) and sigma >= 0.0):
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    e1, e2 = record.events
    var = sigma * sigma

    def flat(a: EventParams, b: EventParams) -> np.ndarray:
        return mean_trajectory(a, b, n_frames, record.view).ravel()

    if which == "event1":
        return _iso(flat(e1, e1), var)
    if which == "event2":
        return _iso(flat(e2, e2), var)
    if which == "concat":
        w = min(max(float(w_mix), 0.01), 0.99)
        blend = blended_event(e1, e2)
        means = np.stack([flat(e1, e2), flat(blend, blend)])
        variances = np.full_like(means, var)
        return GaussianMixture(np.array([w, 1.0 - w]), means, variances)
    raise ValueError(f"which must be 'event1', 'event2' or 'concat', got {which!r}")


def _iso(mean: np.ndarray, var: float) -> GaussianMixture:
    return GaussianMixture(
        np.array([1.0]), mean[None, :], np.full((1, mean.shape[0]), var)
    )


# ---------------------------------------------------------------------------
# suite generation

def _unit(rng: np.random.Generator) -> np.ndarray:
    phi = rng.uniform(0.0, TWO_PI)
    return np.array([math.cos(phi), math.sin(phi)])


def _distinct_angle(rng: np.random.Generator, avoid: float) -> float:
    while True:
        theta = rng.uniform(0.0, TWO_PI)
        gap = abs((theta - avoid + math.pi) % TWO_PI - math.pi)
        if gap > 1e-6:
            return theta


def _speed(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.5, 1.5))


def _general_events(rng: np.random.Generator) -> tuple[EventParams, EventParams]:
    theta1 = rng.uniform(0.0, TWO_PI)
    theta2 = _distinct_angle(rng, theta1)
    identity, background = _unit(rng), _unit(rng)
    return (
        EventParams(theta1, _speed(rng), identity, background),
        EventParams(theta2, _speed(rng), identity, background),
    )


def generate_suite(seed: int) -> list[PromptRecord]:
    """Deterministic benchmark suite with the fixed category counts.

    Category recipes: General changes direction; MotionOrder turns left
    by pi/2 with everything else shared; HumanIdentity changes only the
    identity vector; ComplexPlot changes direction, identity and
    background; EgoExo emits each event pair twice (first/third view)
    under a shared pair id.
    """
    rng = np.random.default_rng(seed)
    records: list[PromptRecord] = []

    for i in range(TABLE_COUNTS["General"]):
        records.append(
            PromptRecord(f"general-{i:03d}", "General", "third", _general_events(rng))
        )

    for i in range(TABLE_COUNTS["MotionOrder"]):
        theta1 = rng.uniform(0.0, TWO_PI)
        speed = _speed(rng)
        identity, background = _unit(rng), _unit(rng)
        events = (
            EventParams(theta1, speed, identity, background),
            EventParams((theta1 + math.pi / 2.0) % TWO_PI, speed, identity, background),
        )
        records.append(PromptRecord(f"motionorder-{i:03d}", "MotionOrder", "third", events))

    for i in range(TABLE_COUNTS["HumanIdentity"]):
        theta = rng.uniform(0.0, TWO_PI)
        speed = _speed(rng)
        id1 = _unit(rng)
        id2 = _unit(rng)
        while np.allclose(id1, id2):
            id2 = _unit(rng)
        background = _unit(rng)
        events = (
            EventParams(theta, speed, id1, background),
            EventParams(theta, speed, id2, background),
        )
        records.append(
            PromptRecord(f"humanidentity-{i:03d}", "HumanIdentity", "third", events)
        )

    for i in range(TABLE_COUNTS["ComplexPlot"]):
        theta1 = rng.uniform(0.0, TWO_PI)
        theta2 = _distinct_angle(rng, theta1)
        events = (
            EventParams(theta1, _speed(rng), _unit(rng), _unit(rng)),
            EventParams(theta2, _speed(rng), _unit(rng), _unit(rng)),
        )
        records.append(PromptRecord(f"complexplot-{i:03d}", "ComplexPlot", "third", events))

    for i in range(TABLE_COUNTS["EgoExo"] // 2):
        events = _general_events(rng)
        pair_id = f"egoexo-{i:03d}"
        for view in VIEWS:
            records.append(
                PromptRecord(f"{pair_id}-{view}", "EgoExo", view, events, pair_id=pair_id)
            )
    return records


# ---------------------------------------------------------------------------
# suite serialization: one self-contained JSON object per line (UTF-8)

def _record_to_dict(record: PromptRecord) -> dict:
    return {
        "id": record.id,
        "category": record.category,
        "view": record.view,
        "pair_id": record.pair_id,
        "events": [
            {
                "direction": e.direction,
                "speed": e.speed,
                "identity": list(e.identity),
                "background": list(e.background),
            }
            for e in record.events
        ],
        "text": record.text,
    }


def _record_from_dict(obj) -> PromptRecord:
    if not isinstance(obj, dict):
        raise ValueError("record must be a key-value object")
    missing = {"id", "category", "view", "events"} - obj.keys()
    if missing:
        raise ValueError(f"record missing fields: {sorted(missing)}")
    events_raw = obj["events"]
    if not isinstance(events_raw, list) or len(events_raw) != 2:
        raise ValueError("events must have length 2")
    events = []
    for e in events_raw:
        if not isinstance(e, dict):
            raise ValueError("each event must be a key-value object")
        ev_missing = {"direction", "speed", "identity", "background"} - e.keys()
        if ev_missing:
            raise ValueError(f"event missing fields: {sorted(ev_missing)}")
        events.append(
            EventParams(e["direction"], e["speed"], e["identity"], e["background"])
        )
    return PromptRecord(
        id=obj["id"],
        category=obj["category"],
        view=obj["view"],
        events=tuple(events),
        pair_id=obj.get("pair_id"),
        text=obj.get("text"),
    )


def write_suite(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_record_to_dict(record), sort_keys=True))
            fh.write("\n")


def read_suite(path) -> list[PromptRecord]:
    """Strict parse; malformed lines raise with their line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(_record_from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return records


@dataclass(frozen=True)
class SuiteReport:
    """Validation outcome: empty ``violations`` means the suite is valid."""

    n_records: int
    violations: tuple[tuple[str | None, str], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        if self.ok:
            return [f"OK: {self.n_records} records, no violations"]
        out = [f"{len(self.violations)} violation(s) in {self.n_records} record(s):"]
        out.extend(
            f"  {rid if rid is not None else '<suite>'}: {msg}"
            for rid, msg in self.violations
        )
        return out


def validate_suite(source, strict_counts: bool = False) -> SuiteReport:
    """Validate a suite given as records or as a file path.

    Per-record structural problems, duplicate ids and broken first/third
    pairing are reported as violations; ``strict_counts`` additionally
    pins the per-category sizes to :data:`TABLE_COUNTS`.
    """
    violations: list[tuple[str | None, str]] = []
    records: list[PromptRecord] = []
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(_record_from_dict(json.loads(line)))
                except json.JSONDecodeError:
                    violations.append((None, f"line {lineno}: invalid JSON"))
                except (ValueError, TypeError) as exc:
                    violations.append((None, f"line {lineno}: {exc}"))
    else:
        records = list(source)

    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            violations.append((record.id, "duplicate record id"))
        seen.add(record.id)
        if record.category == "EgoExo" and record.pair_id is None:
            violations.append((record.id, "EgoExo record without pair_id"))
        if record.category != "EgoExo" and record.pair_id is not None:
            violations.append((record.id, "pair_id set on a non-EgoExo record"))

    pairs: dict[str, list[PromptRecord]] = {}
    for record in records:
        if record.category == "EgoExo" and record.pair_id is not None:
            pairs.setdefault(record.pair_id, []).append(record)
    for pair_id, members in sorted(pairs.items()):
        if len(members) != 2:
            violations.append((pair_id, f"pair has {len(members)} members, expected 2"))
            continue
        if {m.view for m in members} != set(VIEWS):
            violations.append((pair_id, "pair must contain one first and one third view"))
        if members[0].events != members[1].events:
            violations.append((pair_id, "paired records must share identical events"))

    if strict_counts:
        counts = {c: 0 for c in CATEGORIES}
        for record in records:
            counts[record.category] += 1
        for category, expected in TABLE_COUNTS.items():
            if counts[category] != expected:
                violations.append(
                    (None, f"category {category} has {counts[category]} records, expected {expected}")
                )
        total = sum(TABLE_COUNTS.values())
        if len(records) != total:
            violations.append((None, f"suite has {len(records)} records, expected {total}"))

    return SuiteReport(len(records), tuple(violations))


# ---------------------------------------------------------------------------
# training data

def mixture_data_sampler(pairs):
    """Training stream over ``[(condition, mixture), ...]`` pairs.

    Returns ``draw(rng, n) -> (z0, cond_vectors)``: picks a pair
    uniformly per example, then draws the clean sample from its mixture.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one (condition, mixture) pair")
    dim = pairs[0][1].dim
    if any(m.dim != dim for _, m in pairs):
        raise ValueError("all mixtures must share one dimension")
    vectors = np.stack([c.vector for c, _ in pairs])
    if any(v.shape != vectors[0].shape for v in vectors):
        raise ValueError("all conditions must share one width")

    def draw(rng: np.random.Generator, n: int):
        idx = rng.integers(0, len(pairs), size=n)
        z0 = np.empty((n, dim))
        for k in np.unique(idx):
            mask = idx == k
            z0[mask] = sample_mixture(pairs[k][1], rng, int(mask.sum()))
        return z0, vectors[idx]

    return draw


def suite_training_pairs(records, n_frames: int, sigma: float, w_mix: float = 0.5):
    """All (condition, mixture) pairs a sweep can query, for training."""
    pairs = []
    for record in records:
        for which in ("event1", "event2", "concat"):
            pairs.append(
                (
                    condition_of(record, which),
                    gaussian_of(record, which, n_frames, sigma, w_mix),
                )
            )
    return pairs
