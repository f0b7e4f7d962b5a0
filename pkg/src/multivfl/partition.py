"""Data topology: vertical image splits, label scenarios, ID alignment.

The alignment step intersects salted 64-bit FNV-1a digests of sample IDs.
It is a plain hashed intersection standing in for private set intersection;
it offers no cryptographic protection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError

log = logging.getLogger(__name__)

SCENARIOS = ("iid", "1niid", "2niid", "3niid", "4niid")
NUM_CLASSES = 10


def vertical_split(images, D: int) -> list[np.ndarray]:
    """Split a batch along the image-height axis into ``D`` equal row strips.

    Works for (N, H, W) and (N, C, H, W) arrays; returns views.
    """
    images = np.asarray(images)
    if D < 1:
        raise ConfigurationError(f"number of data owners must be >= 1, got {D}")
    h = images.shape[-2]
    if h % D:
        raise ConfigurationError(f"image height {h} is not divisible by {D} data owners")
    step = h // D
    return [images[..., d * step : (d + 1) * step, :] for d in range(D)]


@dataclass(frozen=True)
class LabelScenario:
    name: str
    allowed: tuple[tuple[int, ...], ...]  # per label owner
    samples_per_owner: int = 5000

    @property
    def K(self) -> int:
        return len(self.allowed)


def make_scenario(name: str, K: int = 5, samples_per_owner: int = 5000, num_classes: int = NUM_CLASSES) -> LabelScenario:
    """Label sets per owner for a named scenario.

    ``<n>niid`` gives the last ``n`` owners two classes each ({0,1}, {2,3}, ...)
    and every other owner all classes; ``iid`` gives everyone all classes.
    """
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {name!r}; valid: {', '.join(SCENARIOS)}")
    if K < 1 or samples_per_owner < 1:
        raise ConfigurationError("K and samples_per_owner must be positive")
    n_skewed = 0 if name == "iid" else int(name[0])
    if n_skewed > K:
        raise ConfigurationError(f"scenario {name} needs at least {n_skewed} label owners, got K={K}")
    if 2 * n_skewed > num_classes:
        raise ConfigurationError(f"scenario {name} needs {2 * n_skewed} classes, only {num_classes} exist")
    full = tuple(range(num_classes))
    pairs = [(2 * j, 2 * j + 1) for j in range(n_skewed)]
    return LabelScenario(name, tuple([full] * (K - n_skewed) + pairs), samples_per_owner)


def assign_labels(labels, K: int, scenario: LabelScenario, seed: int) -> list[np.ndarray]:
    """Pick each label owner's sample indices according to ``scenario``.

    Owners are drawn disjointly while supply allows; an owner that cannot be
    served from unused samples draws from the full pool instead (overlap with
    other owners, never duplicates within itself) and a warning is logged.
    Restricted owners are served first so the fallback is rarely needed.
    """
    labels = np.asarray(labels)
    if scenario.K != K:
        raise ConfigurationError(f"scenario {scenario.name} defines {scenario.K} label owners, K={K}")
    rng = np.random.default_rng(seed)
    n = scenario.samples_per_owner
    used = np.zeros(len(labels), dtype=bool)
    result: list[np.ndarray | None] = [None] * K
    for k in sorted(range(K), key=lambda k: (len(scenario.allowed[k]), k)):
        eligible = np.isin(labels, scenario.allowed[k])
        fresh = np.flatnonzero(eligible & ~used)
        if len(fresh) >= n:
            pool = fresh
        else:
            pool = np.flatnonzero(eligible)
            if len(pool) < n:
                raise ConfigurationError(
                    f"label owner {k} needs {n} samples with labels {set(scenario.allowed[k])} "
                    f"but only {len(pool)} exist (short by {n - len(pool)})")
            log.warning("label owner %d: only %d unused samples for %d requested; drawing with overlap "
                        "across owners", k, len(fresh), n)
        chosen = rng.choice(pool, size=n, replace=False)
        used[chosen] = True
        result[k] = chosen
    return result


# -- ID alignment --------------------------------------------------------------

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


def fnv1a64(ids: Sequence[str], salt: bytes = b"") -> np.ndarray:
    """Vectorised 64-bit FNV-1a of ``salt + id`` for every id."""
    encoded = [salt + s.encode("utf-8") for s in ids]
    if not encoded:
        return np.zeros(0, dtype=np.uint64)
    lengths = np.fromiter((len(e) for e in encoded), dtype=np.int64, count=len(encoded))
    width = int(lengths.max())
    buf = np.zeros((len(encoded), width), dtype=np.uint8)
    for i, e in enumerate(encoded):
        buf[i, : len(e)] = np.frombuffer(e, dtype=np.uint8)
    h = np.full(len(encoded), _FNV_OFFSET, dtype=np.uint64)
    for j in range(width):
        live = lengths > j
        h[live] = (h[live] ^ buf[live, j].astype(np.uint64)) * _FNV_PRIME
    return h


@dataclass
class AlignedIndex:
    ids: list[str]
    digests: np.ndarray
    permutations: list[np.ndarray]  # local_ids[perm] == ids, per party

    def __len__(self):
        return len(self.ids)


def align_ids(party_id_lists: Sequence[Sequence[str]], salt: bytes = b"multivfl") -> AlignedIndex:
    """Intersect the parties' ID sets via salted digests, ordered by digest."""
    if not party_id_lists:
        raise InputError("need at least one party")
    tables = []
    for p, ids in enumerate(party_id_lists):
        ids = list(ids)
        if len(set(ids)) != len(ids):
            raise InputError(f"party {p} lists duplicate IDs")
        digests = fnv1a64(ids, salt)
        if len(np.unique(digests)) != len(digests):
            raise InputError(f"party {p}: two distinct IDs share a digest; choose another salt")
        tables.append((ids, digests))
    common = tables[0][1]
    for _, digests in tables[1:]:
        common = np.intersect1d(common, digests, assume_unique=True)
    perms = []
    for ids, digests in tables:
        order = np.argsort(digests, kind="stable")
        perms.append(order[np.searchsorted(digests[order], common)])
    # digests stand in for IDs; compare raw IDs so a cross-party collision cannot leak in
    ref_ids = tables[0][0]
    keep = np.ones(len(common), dtype=bool)
    for (ids, _), perm in zip(tables[1:], perms[1:]):
        keep &= np.fromiter((ids[j] == ref_ids[i] for i, j in zip(perms[0], perm)), dtype=bool, count=len(common))
    perms = [perm[keep] for perm in perms]
    return AlignedIndex([ref_ids[i] for i in perms[0]], common[keep], perms)
