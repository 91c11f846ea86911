import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icstrace.clustering import (
    Dataset,
    KMeansOptions,
    SeedSet,
    assign_step,
    euclidean_distance,
    farthest_point_init,
    partial_seeded_kmeans,
    repair_empty,
    seed_means,
    sse,
    update_step,
)
from icstrace.errors import DimensionMismatch, EmptySeedGroup, InsufficientSamples, InvalidSeeds

from .oracles import exact_lloyd, optimal_sse


def line(*values):
    return Dataset.from_points([[float(v)] for v in values])


# -- distance -------------------------------------------------------------------


def test_distance_examples():
    assert euclidean_distance((0, 0), (3, 4)) == 5.0
    assert euclidean_distance((1.5, -2.0), (1.5, -2.0)) == 0.0


def test_distance_matches_loop_oracle():
    rng = random.Random(3)
    for _ in range(50):
        x = [rng.uniform(-10, 10) for _ in range(7)]
        y = [rng.uniform(-10, 10) for _ in range(7)]
        oracle = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)))
        assert abs(euclidean_distance(x, y) - oracle) <= 1e-12
        assert euclidean_distance(x, y) == euclidean_distance(y, x)


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        euclidean_distance((1, 2), (1, 2, 3))


# -- data types -----------------------------------------------------------------


def test_dataset_rejects_duplicates_and_bad_shapes():
    with pytest.raises(ValueError):
        Dataset(["a", "a"], np.zeros((2, 1)))
    with pytest.raises(DimensionMismatch):
        Dataset(["a"], np.zeros((2, 1)))


def test_seedset_validation():
    with pytest.raises(EmptySeedGroup):
        SeedSet([("A", [])])
    with pytest.raises(InvalidSeeds):
        SeedSet([("A", ["1"]), ("B", ["1", "2"])])
    seeds = SeedSet.from_labels({"3": "B", "1": "A", "2": "A"})
    assert seeds.names == ["A", "B"] and seeds.l == 2
    assert seeds.restricted_to(["1"]).groups == [("A", ["1"])]


# -- seed means -----------------------------------------------------------------


def test_seed_means_examples():
    data = Dataset(["a", "b", "c"], [[0, 0], [2, 2], [5, 5]])
    assert seed_means(data, SeedSet([("x", ["a", "b"])])).tolist() == [[1.0, 1.0]]
    assert seed_means(line(5), SeedSet([("x", ["0"])])).tolist() == [[5.0]]
    pts = Dataset(["p", "q", "r"], [[1, 2, 3], [4, 0, -1], [0.5, 7, 2]])
    oracle = [sum(col) / 3 for col in zip([1, 2, 3], [4, 0, -1], [0.5, 7, 2])]
    assert np.allclose(seed_means(pts, SeedSet([("x", ["p", "q", "r"])]))[0], oracle, atol=1e-12)


def test_seed_ip_missing_from_dataset():
    with pytest.raises(InvalidSeeds):
        seed_means(line(0, 1), SeedSet([("x", ["99"])]))


# -- initialization -------------------------------------------------------------


def score_oracle(x, means):
    d = [abs(x - m) for m in means]
    return sum(d) / len(d) + min(d)


def test_farthest_point_example():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    means, picked = farthest_point_init(X, np.array([[0.5]]), 2, candidates=[2, 3])
    assert picked == [3] and means[1].tolist() == [11.0]
    assert score_oracle(11, [0.5]) == 21.0 and score_oracle(10, [0.5]) == 19.0


@pytest.mark.parametrize("variant", ["literal", "maxmin"])
def test_farthest_point_matches_exhaustive_scores(variant):
    rng = random.Random(11)
    for _ in range(40):
        X = np.array([[rng.uniform(0, 20)] for _ in range(8)])
        known = np.array([[rng.uniform(0, 20)]])
        means, picked = farthest_point_init(X, known, 3, variant=variant)
        chosen = [known[0, 0]]
        expected = []
        pool = list(range(8))
        for _ in range(2):
            def score(i):
                d = [abs(X[i, 0] - m) for m in chosen]
                return (sum(d) / len(d) + min(d)) if variant == "literal" else min(d)

            best = max(pool, key=lambda i: (score(i), -i))
            expected.append(best)
            chosen.append(X[best, 0])
            pool.remove(best)
        assert picked == expected


def test_no_extra_centers_when_l_equals_k():
    known = np.array([[1.0], [2.0]])
    means, picked = farthest_point_init(np.array([[0.0], [5.0]]), known, 2)
    assert picked == [] and np.array_equal(means, known)


def test_score_ties_pick_lowest_index():
    X = np.array([[-3.0], [3.0], [0.0]])
    _, picked = farthest_point_init(X, np.array([[0.0]]), 2, candidates=[0, 1])
    assert picked == [0]


def test_first_pick_without_seeds_is_farthest_from_centroid():
    X = np.array([[0.0], [1.0], [2.0], [9.0]])
    _, picked = farthest_point_init(X, np.zeros((0, 1)), 1)
    assert picked == [3]


def test_insufficient_samples():
    with pytest.raises(InsufficientSamples):
        farthest_point_init(np.zeros((3, 1)), np.zeros((1, 1)), 3, candidates=[0])


def test_unknown_variant():
    with pytest.raises(ValueError):
        KMeansOptions(init="kmeans++")
    with pytest.raises(ValueError):
        farthest_point_init(np.zeros((3, 1)), np.zeros((1, 1)), 2, variant="x")


# -- assignment / update --------------------------------------------------------


def test_assignment_tie_goes_to_lowest_index():
    means = np.array([[100.0], [100.0], [-1.0], [100.0], [100.0], [1.0]])
    assert assign_step(np.array([[0.0]]), means).tolist() == [2]


def test_seed_sample_can_leave_its_seed_cluster():
    data = line(0, 1, 20, 21, 22)
    part = partial_seeded_kmeans(data, SeedSet([("low", ["0", "1", "2"])]), 2)
    # seed mean starts at 7; the seeded 20 is nearer the picked 22
    assert part.initial_means.ravel().tolist() == [7.0, 22.0]
    assert part.assignment["2"] == 1 and part.assignment["0"] == 0


def test_all_samples_coincide():
    X = np.ones((4, 2))
    labels = assign_step(X, np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]))
    assert labels.tolist() == [0, 0, 0, 0]
    assert np.bincount(labels, minlength=3).tolist() == [4, 0, 0]


def test_update_examples():
    X = np.array([[0.0, 0.0], [2.0, 0.0]])
    means, changed = update_step(X, np.array([0, 0]), np.array([[5.0, 5.0]]))
    assert means.tolist() == [[1.0, 0.0]] and changed
    again, changed = update_step(X, np.array([0, 0]), means)
    assert np.array_equal(again, means) and not changed


def test_empty_cluster_repair_reseeds_farthest_point():
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    means = np.array([[3.25], [100.0]])
    repaired, which = repair_empty(X, np.array([0, 0, 0, 0]), means)
    assert which == [1] and repaired[1].tolist() == [10.0]


def max_gap(X, means):
    return np.sqrt(((X[:, None, :] - means[None]) ** 2).sum(axis=2)).min(axis=1).max()


def test_repair_reduces_max_distance_on_small_instances():
    rng = random.Random(5)
    strict = 0
    for _ in range(300):
        X = np.array([[rng.randint(0, 9), rng.randint(0, 9)] for _ in range(rng.randint(2, 7))], float)
        if len(np.unique(X, axis=0)) < 2:
            continue
        means = np.vstack([X.mean(axis=0), [1e6, 1e6]])
        repaired, _ = repair_empty(X, np.zeros(len(X), dtype=int), means)
        before = max_gap(X, means[:1])
        after = max_gap(X, repaired)
        assert after <= before
        dist = np.sqrt(((X - means[0]) ** 2).sum(axis=1))
        if len(np.unique(X[dist == dist.max()], axis=0)) == 1:
            # a unique farthest location strictly shrinks the worst gap
            assert after < before
            strict += 1
    assert strict > 100


# -- full algorithm -------------------------------------------------------------


def test_two_separated_groups():
    part = partial_seeded_kmeans(line(0, 1, 10, 11), SeedSet([("A", ["0", "1"])]), 2)
    assert part.labels.tolist() == [0, 0, 1, 1]
    assert part.converged and part.sse == 1.0
    assert abs(optimal_sse(np.array([[0.0], [1.0], [10.0], [11.0]]), 2) - part.sse) <= 1e-12


def test_single_cluster_lands_on_centroid():
    data = line(0, 1, 5)
    part = partial_seeded_kmeans(data, None, 1)
    assert part.means.tolist() == [[2.0]]
    assert part.sse_history[0] == part.sse
    assert part.labels.tolist() == [0, 0, 0]


def test_k_equals_n_gives_zero_sse():
    part = partial_seeded_kmeans(line(3, 1, 4, 1.5, 9), None, 5)
    assert part.sse == 0.0
    assert sorted(part.labels.tolist()) == [0, 1, 2, 3, 4]


def test_seeded_reduction_l_equals_k():
    data = Dataset([str(i) for i in range(6)], [[0, 0], [1, 0], [5, 5], [6, 5], [9, 0], [9, 1]])
    seeds = SeedSet([("A", ["0", "1"]), ("B", ["2", "3"]), ("C", ["4", "5"])])
    part = partial_seeded_kmeans(data, seeds, 3)
    assert np.array_equal(part.initial_means, seed_means(data, seeds))
    assert part.seed_names == ["A", "B", "C"]


def test_argument_errors():
    with pytest.raises(ValueError):
        partial_seeded_kmeans(line(0, 1), None, 3)
    with pytest.raises(ValueError):
        partial_seeded_kmeans(line(0, 1, 2), SeedSet([("A", ["0"]), ("B", ["1"])]), 1)


def test_iteration_cap_reported():
    X = Dataset.from_points(np.random.default_rng(0).normal(size=(40, 2)))
    part = partial_seeded_kmeans(X, None, 6, KMeansOptions(max_iter=1))
    assert part.iterations == 1 and not part.converged


def test_partition_export_shapes():
    part = partial_seeded_kmeans(line(0, 1, 10, 11), None, 2)
    assert part.means.shape == (2, 1)
    assert sum(len(c) for c in part.clusters()) == 4
    assert set(part.assignment) == {"0", "1", "2", "3"}


points_st = st.integers(2, 8).flatmap(
    lambda n: st.tuples(
        st.lists(st.lists(st.integers(-5, 5), min_size=2, max_size=2), min_size=n, max_size=n),
        st.integers(1, n),
        st.sampled_from(["literal", "maxmin"]),
    )
)


@settings(max_examples=150, deadline=None)
@given(points_st)
def test_lloyd_properties_match_oracles(case):
    pts, k, init = case
    X = np.array(pts, dtype=float)
    data = Dataset.from_points(X)
    part = partial_seeded_kmeans(data, None, k, KMeansOptions(init=init))
    history = part.sse_history
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
    assert part.sse >= optimal_sse(X, k) - 1e-9
    assert abs(sse(X, part.labels, part.means) - part.sse) <= 1e-9
    _, exact = exact_lloyd(X, part.initial_means)
    assert abs(exact - part.sse) <= 1e-9
    again = partial_seeded_kmeans(data, None, k, KMeansOptions(init=init))
    assert np.array_equal(again.labels, part.labels) and np.array_equal(again.means, part.means)
