"""Multi-party split-learning rounds with D data owners and K label owners.

Each data owner keeps one copy of its bottom network per label owner. In a
round every label owner trains with all data owners over its own samples;
the server then folds the K label-owner deltas into one shared top network
and each data owner averages its K copies back into one.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import fedopt, nn
from .dataio import Dataset
from .errors import ConfigurationError, InputError, ProtocolError
from .fedopt import ServerOptState
from .nn import LayerSpec, Net, ParamSet
from .partition import align_ids, assign_labels, make_scenario, vertical_split

PIPELINES = ("interleaved", "two_phase")


def default_data_owner_layers(cut_channels: int = 32) -> list[LayerSpec]:
    return [nn.conv2d(1, cut_channels, 3, stride=1, padding=1), nn.relu()]


def default_label_owner_layers(H: int, W: int, cut_channels: int = 32, conv_channels: int = 8,
                               hidden: int = 128, classes: int = 10) -> list[LayerSpec]:
    h, w = nn.conv_out_size(H, 3, 2, 1), nn.conv_out_size(W, 3, 2, 1)
    return [
        nn.conv2d(cut_channels, conv_channels, 3, stride=2, padding=1), nn.relu(), nn.flatten(),
        nn.dense(conv_channels * h * w, hidden), nn.relu(), nn.dense(hidden, classes),
    ]


def subseed(seed: int, *tags: int) -> int:
    """Independent 32-bit seed for a (seed, tags...) stream."""
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


@dataclass
class DataOwnerState:
    id: int
    net: Net  # architecture template; parameters live in ``copies``
    features: np.ndarray  # (N_aligned, h, W) row strip in aligned order
    copies: list[ParamSet]  # one per label owner
    lr: float

    def copy_net(self, k: int) -> Net:
        return self.net.with_params(self.copies[k])


@dataclass
class LabelOwnerState:
    id: int
    indices: np.ndarray  # aligned sample positions
    labels: np.ndarray
    params: ParamSet
    lr: float
    batch_size: int


@dataclass
class RoundMetrics:
    round: int
    losses: list[float]
    accuracy: float
    duration_s: float
    beta1_effective: float

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.losses))


@dataclass
class World:
    data_owners: list[DataOwnerState]
    label_owners: list[LabelOwnerState]
    label_net: Net  # architecture template for W^S
    server_state: ServerOptState
    server_params: ParamSet  # authoritative shared W^S
    test_set: Dataset | None = None
    local_epochs: int = 1
    pipeline: str = "interleaved"
    seed: int = 0
    threads: int = 1
    history: list[RoundMetrics] = field(default_factory=list)

    @property
    def D(self) -> int:
        return len(self.data_owners)

    @property
    def K(self) -> int:
        return len(self.label_owners)


# -- one batch between all data owners and one label owner ----------------------

def _data_forward(data_owners, columns, batch, label_input):
    """Forward every data owner's strip; activations land in one (B, H, W, C) buffer."""
    h_in, w_in, c_in = label_input
    heights = []
    for do in data_owners:
        shape = do.net.output_shape
        if len(shape) != 3 or shape[1] != w_in or shape[2] != c_in:
            raise ProtocolError(f"data owner {do.id} produces activations {shape}, expected (h, {w_in}, {c_in})")
        heights.append(shape[0])
    if sum(heights) != h_in:
        raise ProtocolError(f"activation heights {heights} do not add up to {h_in}")
    A = np.empty((len(batch), h_in, w_in, c_in))
    caches, top = [], 0
    for do, params, h in zip(data_owners, columns, heights):
        x = do.features[batch][..., None]
        _, cache = nn.net_forward(do.net.with_params(params), x, out=A[:, top : top + h])
        caches.append(cache)
        top += h
    return A, heights, caches


def _label_step(label_net, label_params, A, heights, y, lr):
    out, cache = nn.net_forward(label_net.with_params(label_params), A)
    loss, dlogits = nn.softmax_cross_entropy(out, y)
    grads, dA = nn.net_backward(label_net.with_params(label_params), cache, dlogits)
    return loss, nn.sgd_step(label_params, grads, lr), np.split(dA, np.cumsum(heights)[:-1], axis=1)


def _data_backward(data_owners, columns, caches, dAs):
    updated = []
    for do, params, cache, dA in zip(data_owners, columns, caches, dAs):
        grads, _ = nn.net_backward(do.net.with_params(params), cache, dA, input_grad=False)
        updated.append(nn.sgd_step(params, grads, do.lr))
    return updated


def session_batch(data_owners: Sequence[DataOwnerState], label_owner: LabelOwnerState, label_net: Net,
                  batch, columns=None, label_params=None):
    """One forward/backward exchange over ``batch`` (aligned sample positions).

    ``columns`` and ``label_params`` default to the parties' stored copies for
    this label owner. Returns (loss, new data-owner params, new label params)
    without modifying any state.
    """
    k = label_owner.id
    columns = [do.copies[k] for do in data_owners] if columns is None else columns
    label_params = label_owner.params if label_params is None else label_params
    batch = np.asarray(batch)
    y = _labels_for(label_owner, batch)
    A, heights, caches = _data_forward(data_owners, columns, batch, label_net.input_shape)
    loss, new_label, dAs = _label_step(label_net, label_params, A, heights, y, label_owner.lr)
    return loss, _data_backward(data_owners, columns, caches, dAs), new_label


def _labels_for(label_owner: LabelOwnerState, batch) -> np.ndarray:
    lookup = dict(zip(label_owner.indices.tolist(), label_owner.labels.tolist()))
    try:
        return np.fromiter((lookup[int(i)] for i in batch), dtype=np.int64, count=len(batch))
    except KeyError as exc:
        raise InputError(f"sample {exc.args[0]} is not in label owner {label_owner.id}'s shard") from None


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled positions 0..n-1 cut into batches; the last one may be short."""
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def label_owner_round(world: World, k: int, r: int) -> tuple[ParamSet, float]:
    """Train label owner ``k`` with every data owner for one federated round.

    Commits the trained W_k^S and the column of copies W_{d,k}; returns the
    delta of W_k^S and the mean per-batch training loss.
    """
    lo = world.label_owners[k]
    if len(lo.indices) == 0:
        raise ConfigurationError(f"label owner {k} has no samples")
    start = lo.params
    label_params = start
    columns = [do.copies[k] for do in world.data_owners]
    losses = []
    for epoch in range(world.local_epochs):
        rng = np.random.default_rng(subseed(world.seed, 1, r, k, epoch))
        batches = epoch_batches(len(lo.indices), lo.batch_size, rng)
        if world.pipeline == "interleaved":
            for pos in batches:
                batch = lo.indices[pos]
                A, heights, caches = _data_forward(world.data_owners, columns, batch, world.label_net.input_shape)
                loss, label_params, dAs = _label_step(world.label_net, label_params, A, heights, lo.labels[pos],
                                                      lo.lr)
                columns = _data_backward(world.data_owners, columns, caches, dAs)
                losses.append(loss)
        else:
            # all activations first with the epoch-start weights, then backprop batch by batch
            forwards = [_data_forward(world.data_owners, columns, lo.indices[pos], world.label_net.input_shape)
                        for pos in batches]
            for pos, (A, heights, caches) in zip(batches, forwards):
                loss, label_params, dAs = _label_step(world.label_net, label_params, A, heights, lo.labels[pos],
                                                      lo.lr)
                columns = _data_backward(world.data_owners, columns, caches, dAs)
                losses.append(loss)
    lo.params = label_params
    for do, params in zip(world.data_owners, columns):
        do.copies[k] = params
    return label_params - start, float(np.mean(losses)) if losses else 0.0


def run_round(world: World, r: int, order: Sequence[int] | None = None) -> RoundMetrics:
    """Execute federated round ``r`` (1-based).

    ``order`` fixes a sequential session order; otherwise sessions run in
    index order, or on ``world.threads`` threads when that is above 1.
    The result does not depend on either choice.
    """
    if r > world.server_state.total_rounds:
        raise InputError(f"round {r} exceeds the configured {world.server_state.total_rounds} rounds")
    t0 = time.perf_counter()
    beta1_eff = 0.0 if world.server_state.algorithm == "fedavg" else world.server_state.beta1_at(r)
    ks = list(range(world.K))
    if order is not None:
        if sorted(order) != ks:
            raise InputError(f"session order must be a permutation of {ks}")
        results = {k: label_owner_round(world, k, r) for k in order}
    elif world.threads > 1:
        with ThreadPoolExecutor(max_workers=world.threads) as pool:
            futures = {k: pool.submit(label_owner_round, world, k, r) for k in ks}
            results = {k: f.result() for k, f in futures.items()}
    else:
        results = {k: label_owner_round(world, k, r) for k in ks}
    deltas = [results[k][0] for k in ks]
    losses = [results[k][1] for k in ks]

    world.server_state, world.server_params = fedopt.server_step(world.server_state, world.server_params, deltas)
    for lo in world.label_owners:
        lo.params = world.server_params.copy()
    for do in world.data_owners:
        mean = fedopt.average_params(do.copies)
        do.copies = [mean.copy() for _ in range(world.K)]

    accuracy = evaluate(world, world.test_set) if world.test_set is not None else float("nan")
    metrics = RoundMetrics(r, losses, accuracy, time.perf_counter() - t0, beta1_eff)
    world.history.append(metrics)
    return metrics


def split_predict(data_nets: Sequence[Net], label_net: Net, images, batch_size: int = 500) -> np.ndarray:
    """Logits of the split model for (N, H, W) images."""
    images = np.asarray(images, dtype=np.float64)
    out = []
    for i in range(0, len(images), batch_size):
        strips = vertical_split(images[i : i + batch_size], len(data_nets))
        acts = [nn.net_forward(net, s[..., None])[0] for net, s in zip(data_nets, strips)]
        out.append(nn.net_forward(label_net, np.concatenate(acts, axis=1))[0])
    return np.concatenate(out)


def evaluate(world: World, test_set: Dataset) -> float:
    """Accuracy of the averaged data-owner models plus the shared label model."""
    if test_set is None or len(test_set) == 0:
        raise InputError("evaluation needs a non-empty test set")
    data_nets = [do.copy_net(0) for do in world.data_owners]
    logits = split_predict(data_nets, world.label_net.with_params(world.server_params), test_set.images)
    return float(np.mean(np.argmax(logits, axis=1) == test_set.labels))


def run(world: World, rounds: int | None = None) -> Iterator[RoundMetrics]:
    done = len(world.history)
    total = world.server_state.total_rounds if rounds is None else done + rounds
    for r in range(done + 1, total + 1):
        yield run_round(world, r)


# -- world construction ------------------------------------------------------------

def build_world(train: Dataset, test: Dataset | None, *, D: int = 4, K: int = 5, scenario: str = "iid",
                optimizer: str = "fedavg", rounds: int = 1, local_epochs: int = 1, batch_size: int = 64,
                local_lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.99, eta_s: float = 1e-3,
                s: float = 1e-3, second_moment_source: str = "momentum", pipeline: str = "interleaved",
                samples_per_owner: int = 5000, seed: int = 0, threads: int = 1, cut_channels: int = 32,
                label_conv_channels: int = 8, label_hidden: int = 128, data_layers: Sequence[Sequence[LayerSpec]] | None = None,
                label_layers: Sequence[LayerSpec] | None = None, salt: bytes = b"multivfl") -> World:
    """Align, partition and initialise every party for one experiment."""
    if pipeline not in PIPELINES:
        raise ConfigurationError(f"unknown pipeline {pipeline!r}; valid: {', '.join(PIPELINES)}")
    if local_epochs < 0 or batch_size < 1 or threads < 1:
        raise ConfigurationError("local_epochs must be >= 0, batch_size and threads >= 1")
    _, H, W = train.images.shape

    # every party lists the training IDs it holds; features/labels follow the aligned order
    aligned = align_ids([train.ids] * (D + 1), salt=salt)
    vertical_split(train.images[:1], D)  # rejects D < 1 and H not divisible by D
    rows = [(d * (H // D), (d + 1) * (H // D)) for d in range(D)]
    labels = train.labels[aligned.permutations[D]]

    sc = make_scenario(scenario, K, samples_per_owner)
    shards = assign_labels(labels, K, sc, subseed(seed, 2))

    if data_layers is None:
        data_layers = [default_data_owner_layers(cut_channels)] * D
    if len(data_layers) != D:
        raise ConfigurationError(f"got {len(data_layers)} data-owner architectures for {D} data owners")
    data_owners = []
    for d, ((r0, r1), layers) in enumerate(zip(rows, data_layers)):
        net = nn.net_init(layers, subseed(seed, 3, d), input_shape=(r1 - r0, W, 1))
        features = train.images[aligned.permutations[d], r0:r1, :]
        data_owners.append(DataOwnerState(d, net, features, [net.params.copy() for _ in range(K)], local_lr))

    if label_layers is None:
        label_layers = default_label_owner_layers(H, W, cut_channels, label_conv_channels, label_hidden)
    cut_c = data_owners[0].net.output_shape[-1]
    label_net = nn.net_init(label_layers, subseed(seed, 4), input_shape=(H, W, cut_c))
    label_owners = [LabelOwnerState(k, np.asarray(idx), labels[idx], label_net.params.copy(), local_lr, batch_size)
                    for k, idx in enumerate(shards)]
    state = fedopt.init_server_state(optimizer, label_net.params, rounds, beta1=beta1, beta2=beta2, eta_s=eta_s,
                                     s=s, second_moment_source=second_moment_source)
    return World(data_owners, label_owners, label_net, state, label_net.params.copy(), test,
                 local_epochs, pipeline, seed, threads)
