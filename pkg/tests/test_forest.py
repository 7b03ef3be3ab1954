import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoforest.forest import (
    ALL_POINTS,
    IN_BAG,
    LEAF,
    Forest,
    ForestConfig,
    ProximityMatrix,
    Tree,
    accumulate_leaves,
    build_tree,
    tree_rng,
)
from geoforest.projection import SparseProjection
from geoforest.synthdata import gen_gmm, gen_helix


def blobs(seed=0, n=200):
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n // 2)
    X = np.where(labels[:, None] == 0, -10.0, 10.0) + rng.normal(size=(n, 3))
    return X, labels


def subtree_members(tree, node):
    if tree.is_leaf(node):
        return tree.members[node]
    return np.concatenate([subtree_members(tree, tree.left[node]), subtree_members(tree, tree.right[node])])


class TestConfig:
    def test_defaults(self):
        cfg = ForestConfig()
        assert (cfg.n_trees, cfg.minparent, cfg.criterion, cfg.sparsity, cfg.proximity_mode) == (
            100, 100, "fastbic", 1 / 20, ALL_POINTS)
        assert cfg.resolve_subsample(1000) == 632
        assert cfg.resolve_mtry(3) == 2 and cfg.resolve_mtry(10_003) == 101

    @pytest.mark.parametrize("kwargs", [
        {"n_trees": 0}, {"minparent": 1}, {"mtry": 0}, {"sparsity": 0.0},
        {"criterion": "gini"}, {"proximity_mode": "oob"}, {"subsample": 1.5},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ForestConfig(**kwargs)

    def test_subsample_bounds(self):
        with pytest.raises(ValueError):
            ForestConfig(subsample=11).resolve_subsample(10)
        with pytest.raises(ValueError):
            Forest(ForestConfig(subsample=11)).fit(np.zeros((10, 2)))
        with pytest.raises(ValueError):
            ForestConfig(subsample=1).resolve_subsample(10)


class TestBuildTree:
    def test_small_node_is_leaf(self):
        X, _ = blobs()
        tree = build_tree(X, np.arange(49), ForestConfig(minparent=50), np.random.default_rng(0))
        assert tree.n_nodes == 1 and tree.is_leaf(0)
        assert np.array_equal(tree.members[0], np.arange(49))

    def test_identical_points(self):
        X = np.ones((300, 4))
        tree = build_tree(X, np.arange(300), ForestConfig(minparent=10), np.random.default_rng(0))
        assert tree.n_nodes == 1

    @pytest.mark.parametrize("criterion", ["fastbic", "twomeans", "embic"])
    def test_root_separates_blobs(self, criterion):
        X, labels = blobs(seed=1)
        tree = build_tree(X, np.arange(200), ForestConfig(minparent=50, criterion=criterion), np.random.default_rng(3))
        left = set(subtree_members(tree, tree.left[0]).tolist())
        side = np.array([i in left for i in range(200)])
        misrouted = min(np.sum(side != (labels == 0)), np.sum(side != (labels == 1)))
        assert misrouted <= 2

    def test_partition_and_routing(self):
        X, _ = gen_helix(400)
        ids = np.sort(np.random.default_rng(0).choice(400, 250, replace=False))
        tree = build_tree(X, ids, ForestConfig(minparent=20), np.random.default_rng(1))
        members = np.concatenate([tree.members[l] for l in tree.leaves()])
        assert np.array_equal(np.sort(members), ids)
        leaf_of = tree.apply(X)
        for leaf in tree.leaves():
            assert np.all(leaf_of[tree.members[leaf]] == leaf)
        for node in range(tree.n_nodes):
            if not tree.is_leaf(node):
                assert subtree_members(tree, tree.left[node]).size > 0
                assert subtree_members(tree, tree.right[node]).size > 0
                assert tree.weights[node].d == 1

    def test_empty_sample(self):
        with pytest.raises(ValueError):
            build_tree(np.zeros((3, 2)), [], ForestConfig(), np.random.default_rng(0))


class TestRouting:
    def manual_tree(self):
        tree = Tree(2)
        root, left, right = tree._new_node(), tree._new_node(), tree._new_node()
        tree.left[root], tree.right[root] = left, right
        tree.weights[root] = SparseProjection.from_triplets(2, 1, [(0, 0, 1)])
        tree.threshold[root] = 0.5
        tree.members[left], tree.members[right] = np.array([0]), np.array([1])
        return tree

    def test_single_leaf(self):
        tree = Tree(3)
        tree._new_node()
        tree.members[0] = np.arange(4)
        assert tree.route([1.0, 2.0, 3.0]) == 0

    def test_threshold_goes_right(self):
        tree = self.manual_tree()
        assert tree.route([0.5, 9.0]) == 2
        assert tree.route([math.nextafter(0.5, 0), 9.0]) == 1

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            self.manual_tree().route([1.0, 2.0, 3.0])

    def test_training_points_return_to_their_leaf(self):
        X, _ = gen_gmm(300, seed=2)
        forest = Forest(ForestConfig(n_trees=3, minparent=20, seed=5)).fit(X)
        for tree, ids in zip(forest.trees, forest.in_bag):
            for leaf in tree.leaves():
                for i in tree.members[leaf]:
                    assert tree.route(X[i]) == leaf


class TestForest:
    def test_deterministic(self):
        X, _ = gen_gmm(200, seed=0)
        a = Forest(ForestConfig(n_trees=5, minparent=20, seed=9)).fit(X)
        b = Forest(ForestConfig(n_trees=5, minparent=20, seed=9)).fit(X)
        assert a.to_dict() == b.to_dict()
        assert np.array_equal(a.proximity(X).similarity, b.proximity(X).similarity)

    def test_prefix_stable(self):
        X, _ = gen_gmm(200, seed=0)
        small = Forest(ForestConfig(n_trees=3, minparent=20, seed=4)).fit(X).to_dict()["trees"]
        large = Forest(ForestConfig(n_trees=7, minparent=20, seed=4)).fit(X).to_dict()["trees"]
        assert large[:3] == small

    def test_thread_count_irrelevant(self):
        X, _ = gen_gmm(200, seed=0)
        a = Forest(ForestConfig(n_trees=6, minparent=20, seed=2), n_jobs=1).fit(X)
        b = Forest(ForestConfig(n_trees=6, minparent=20, seed=2), n_jobs=3).fit(X)
        assert a.to_dict() == b.to_dict()

    def test_subsample(self):
        X, _ = gen_gmm(100, seed=0)
        forest = Forest(ForestConfig(n_trees=4, minparent=20)).fit(X)
        for ids in forest.in_bag:
            assert ids.size == 64 and np.unique(ids).size == 64

    def test_streams_differ(self):
        a = tree_rng(0, 0).random(4)
        assert not np.array_equal(a, tree_rng(0, 1).random(4))
        assert np.array_equal(a, tree_rng(0, 0).random(4))

    def test_save_load(self, tmp_path):
        X, _ = gen_gmm(150, seed=1)
        forest = Forest(ForestConfig(n_trees=4, minparent=15, seed=3)).fit(X)
        forest.save(tmp_path / "f.json")
        back = Forest.load(tmp_path / "f.json")
        assert back.to_dict() == forest.to_dict()
        assert np.array_equal(back.apply(X), forest.apply(X))
        for mode in (ALL_POINTS, IN_BAG):
            assert np.array_equal(back.proximity(X, mode).counts, forest.proximity(X, mode).counts)

    def test_load_rejects_other_formats(self):
        with pytest.raises(ValueError):
            Forest.from_dict({"format": "other"})
        with pytest.raises(ValueError):
            Forest.from_dict({"format": "geoforest-forest", "version": 99})

    def test_gmm_block_structure(self):
        X, oracle = gen_gmm(1000, seed=0)
        forest = Forest(ForestConfig(n_trees=100, seed=0)).fit(X)
        S = forest.proximity(X).similarity
        same = oracle.labels[:, None] == oracle.labels[None, :]
        off = ~np.eye(1000, dtype=bool)
        assert S[same & off].mean() > S[~same].mean()


class TestProximity:
    def test_single_tree_indicator(self):
        X, _ = gen_helix(120)
        forest = Forest(ForestConfig(n_trees=1, minparent=20)).fit(X)
        leaf = forest.trees[0].apply(X)
        S = forest.proximity(X).similarity
        assert np.array_equal(S, (leaf[:, None] == leaf[None, :]).astype(float))

    def test_one_leaf_all_ones(self):
        X, _ = gen_helix(30)
        forest = Forest(ForestConfig(n_trees=1, minparent=100)).fit(X)
        assert np.all(forest.proximity(X).similarity == 1.0)

    def test_ratio(self):
        prox = ProximityMatrix(np.array([[100, 37], [37, 100]]), np.full((2, 2), 100))
        assert prox.similarity[0, 1] == 0.37

    @given(st.integers(0, 2**16), st.integers(20, 80), st.integers(1, 6), st.sampled_from(["fastbic", "twomeans"]))
    @settings(max_examples=20, deadline=None)
    def test_invariants(self, seed, n, trees, criterion):
        X = np.random.default_rng(seed).normal(size=(n, 4))
        cfg = ForestConfig(n_trees=trees, minparent=8, criterion=criterion, seed=seed)
        forest = Forest(cfg).fit(X)
        S = forest.proximity(X).similarity
        assert np.array_equal(S, S.T)
        assert np.all(np.diag(S) == 1.0)
        assert np.all((S >= 0) & (S <= 1))
        for tree in forest.trees:
            assert np.bincount(tree.apply(X)).sum() == n
        assert forest.leaf_sizes(X).sum() == n * trees

    def test_exchangeable(self):
        X, _ = gen_gmm(150, seed=3)
        forest = Forest(ForestConfig(n_trees=6, minparent=15)).fit(X)
        for mode in (ALL_POINTS, IN_BAG):
            a = forest.proximity(X, mode)
            b = forest.proximity(X, mode, trees=[5, 2, 0, 4, 1, 3])
            assert np.array_equal(a.counts, b.counts) and np.array_equal(a.totals, b.totals)

    def test_regrouping(self):
        X, _ = gen_gmm(150, seed=3)
        forest = Forest(ForestConfig(n_trees=6, minparent=15)).fit(X)
        whole = forest.proximity(X, IN_BAG)
        parts = ProximityMatrix.zeros(150)
        for group in ([0, 3], [1], [2, 4, 5]):
            parts = parts + forest.proximity(X, IN_BAG, trees=group)
        assert np.array_equal(whole.similarity, parts.similarity)

    def test_in_bag_mode(self):
        X, _ = gen_gmm(60, seed=3)
        forest = Forest(ForestConfig(n_trees=2, subsample=10, minparent=4)).fit(X)
        prox = forest.proximity(X, IN_BAG)
        bag = np.zeros((2, 60), dtype=bool)
        for t, ids in enumerate(forest.in_bag):
            bag[t, ids] = True
        both = (bag[:, :, None] & bag[:, None, :]).sum(axis=0)
        assert np.array_equal(prox.totals, both)
        assert np.all(prox.counts <= prox.totals)
        assert prox.unsupported.any()
        assert np.all(prox.similarity[prox.unsupported] == 0)

    def test_training_matrix_required(self):
        X, _ = gen_gmm(40, seed=0)
        forest = Forest(ForestConfig(n_trees=1, minparent=10)).fit(X)
        with pytest.raises(ValueError):
            forest.proximity(X[:30])

    def test_add_shape_mismatch(self):
        with pytest.raises(ValueError):
            ProximityMatrix.zeros(3) + ProximityMatrix.zeros(4)

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_accumulate_leaves_brute_force(self, leaves):
        leaf_of = np.array(leaves)
        n = leaf_of.size
        counts = np.zeros((n, n), dtype=np.int64)
        accumulate_leaves(counts, leaf_of)
        assert np.array_equal(counts, (leaf_of[:, None] == leaf_of[None, :]).astype(np.int64))


def test_leaf_marker():
    tree = Tree(1)
    tree._new_node()
    assert tree.left[0] == LEAF and tree.leaves() == [0]
