import logging
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multivfl.errors import ConfigurationError, InputError
from multivfl.partition import (SCENARIOS, align_ids, assign_labels, fnv1a64, make_scenario, vertical_split)


class TestVerticalSplit:
    def test_identity(self):
        x = np.arange(2 * 28 * 28.0).reshape(2, 28, 28)
        (only,) = vertical_split(x, 1)
        assert np.array_equal(only, x)

    def test_mnist_four_strips(self):
        shards = vertical_split(np.zeros((3, 28, 28)), 4)
        assert [s.shape for s in shards] == [(3, 7, 28)] * 4

    def test_rows_assigned_in_order(self):
        x = np.arange(28.0)[None, :, None] * np.ones((1, 28, 5))
        for d, shard in enumerate(vertical_split(x, 4)):
            assert shard[0, :, 0].tolist() == list(range(7 * d, 7 * d + 7))

    @settings(max_examples=30, deadline=None)
    @given(D=st.sampled_from([1, 2, 4, 8]), n=st.integers(1, 4), seed=st.integers(0, 1000))
    def test_reassembly_exact(self, D, n, seed):
        x = np.random.default_rng(seed).normal(size=(n, 8, 8))
        assert np.array_equal(np.concatenate(vertical_split(x, D), axis=1), x)

    @pytest.mark.parametrize("D", [0, 3, 5])
    def test_bad_D(self, D):
        with pytest.raises(ConfigurationError):
            vertical_split(np.zeros((1, 28, 28)), D)


def mnist_like_labels(n_per_class=1200, seed=0):
    labels = np.repeat(np.arange(10), n_per_class)
    return np.random.default_rng(seed).permutation(labels)


class TestScenarios:
    def test_table(self):
        full = tuple(range(10))
        assert make_scenario("iid").allowed == (full,) * 5
        assert make_scenario("1niid").allowed == (full,) * 4 + ((0, 1),)
        assert make_scenario("2niid").allowed == (full,) * 3 + ((0, 1), (2, 3))
        assert make_scenario("3niid").allowed == (full,) * 2 + ((0, 1), (2, 3), (4, 5))
        assert make_scenario("4niid").allowed == (full,) + ((0, 1), (2, 3), (4, 5), (6, 7))

    def test_unknown(self):
        with pytest.raises(ConfigurationError, match="5niid"):
            make_scenario("5niid")

    def test_too_few_owners(self):
        with pytest.raises(ConfigurationError):
            make_scenario("4niid", K=3)


class TestAssignLabels:
    @pytest.mark.parametrize("name", SCENARIOS)
    def test_allowed_labels_and_sizes(self, name):
        labels = mnist_like_labels()
        sc = make_scenario(name, samples_per_owner=500)
        parts = assign_labels(labels, 5, sc, seed=3)
        for k, idx in enumerate(parts):
            assert len(idx) == 500
            assert len(np.unique(idx)) == 500
            assert set(labels[idx].tolist()) <= set(sc.allowed[k])

    def test_4niid_owner2(self):
        labels = mnist_like_labels()
        parts = assign_labels(labels, 5, make_scenario("4niid", samples_per_owner=1000), seed=0)
        assert set(labels[parts[1]].tolist()) <= {0, 1}

    def test_iid_single_owner_covers_all_labels(self):
        labels = mnist_like_labels()
        (idx,) = assign_labels(labels, 1, make_scenario("iid", K=1, samples_per_owner=5000), seed=0)
        assert len(idx) == 5000 and set(labels[idx].tolist()) == set(range(10))

    def test_deterministic(self):
        labels = mnist_like_labels()
        sc = make_scenario("2niid", samples_per_owner=700)
        a = assign_labels(labels, 5, sc, seed=9)
        b = assign_labels(labels, 5, sc, seed=9)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_disjoint_when_supply_allows(self):
        labels = mnist_like_labels()
        parts = assign_labels(labels, 5, make_scenario("4niid", samples_per_owner=1000), seed=1)
        flat = np.concatenate(parts)
        assert len(np.unique(flat)) == len(flat)

    def test_overlap_fallback_logged(self, caplog):
        labels = mnist_like_labels(n_per_class=100)
        with caplog.at_level(logging.WARNING):
            parts = assign_labels(labels, 2, make_scenario("iid", K=2, samples_per_owner=600), seed=0)
        assert "overlap" in caplog.text
        assert all(len(np.unique(p)) == 600 for p in parts)

    def test_shortfall(self):
        labels = mnist_like_labels(n_per_class=100)
        with pytest.raises(ConfigurationError, match="short by 300"):
            assign_labels(labels, 5, make_scenario("1niid", samples_per_owner=500), seed=0)

    def test_K_mismatch(self):
        with pytest.raises(ConfigurationError):
            assign_labels(mnist_like_labels(), 4, make_scenario("iid"), seed=0)


class TestFnv:
    def test_reference_vectors(self):
        # published FNV-1a 64-bit test vectors
        got = fnv1a64(["", "a", "foobar"])
        assert [int(x) for x in got] == [0xCBF29CE484222325, 0xAF63DC4C8601EC8C, 0x85944171F73967E8]

    def test_salt_is_prefix(self):
        assert fnv1a64(["bar"], b"foo")[0] == fnv1a64(["foobar"])[0]


class TestAlignIds:
    def test_small(self):
        al = align_ids([["a", "b", "c"], ["b", "c", "d"]])
        assert sorted(al.ids) == ["b", "c"]

    def test_identical(self):
        ids = [f"id{i}" for i in range(50)]
        assert sorted(align_ids([ids, ids, ids]).ids) == sorted(ids)

    def test_permutations_reproduce_order(self):
        rng = random.Random(0)
        parties = [rng.sample([f"u{i}" for i in range(300)], 200) for _ in range(3)]
        al = align_ids(parties)
        for ids, perm in zip(parties, al.permutations):
            assert [ids[i] for i in perm] == al.ids
        assert list(al.digests) == sorted(al.digests)

    def test_brute_force_oracle(self):
        rng = random.Random(1)
        universe = [f"person-{i}" for i in range(3000)]
        parties = [rng.sample(universe, 1000) for _ in range(3)]
        brute = set(parties[0]) & set(parties[1]) & set(parties[2])
        assert set(align_ids(parties).ids) == brute
        assert len(align_ids(parties).ids) == len(brute)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_order_invariant(self, seed):
        rng = random.Random(seed)
        parties = [rng.sample(range(60), rng.randint(0, 60)) for _ in range(3)]
        parties = [[str(x) for x in p] for p in parties]
        ref = align_ids(parties).ids
        shuffled = [rng.sample(p, len(p)) for p in parties]
        rng.shuffle(shuffled)
        assert align_ids(shuffled).ids == ref

    def test_duplicates(self):
        with pytest.raises(InputError, match="party 1"):
            align_ids([["a"], ["a", "a"]])
