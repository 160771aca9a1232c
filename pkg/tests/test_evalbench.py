import numpy as np
import pytest
from sklearn import metrics as skmetrics

from groupmc.evalbench import (SyntheticSpec, adjusted_rand_index,
                               frobenius_error, generate_crossed_groups,
                               kmeans, normalized_mutual_information,
                               per_group_grassmann, per_group_subspace_error,
                               rmse_on, select_lambda_scale)
from groupmc.groups import GroupStructure
from groupmc.observation import ObservationMask, sample_uniform_mask


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------- generator

def test_generator_defaults():
    spec = SyntheticSpec()
    assert (spec.n, spec.m) == (1000, 500)
    assert (spec.num_groups, spec.num_subclusters) == (10, 5)


def test_generator_beta_one_kills_subcluster_component():
    spec = SyntheticSpec(n=120, m=40, num_groups=4, num_subclusters=3,
                         beta=1.0, noise_sigma=0.0, seed=1)
    X, _, hidden, parts = generate_crossed_groups(spec)
    assert np.all(parts["sub_lowrank"] == 0.0)
    # The subcluster label enters X only through its mean vector.
    rebuilt = (parts["group_means"] + parts["sub_means"]
               + parts["group_lowrank"])
    np.testing.assert_allclose(X, rebuilt, atol=1e-12)
    assert hidden.min() >= 0 and hidden.max() < 3


def test_generator_deterministic():
    spec = SyntheticSpec(n=50, m=20, num_groups=3, num_subclusters=2, seed=9)
    X1, _, h1, _ = generate_crossed_groups(spec)
    X2, _, h2, _ = generate_crossed_groups(spec)
    assert np.array_equal(X1, X2)
    assert np.array_equal(h1, h2)


def test_generator_group_cell_rank_bound():
    # With beta=1 and no noise, rows sharing (group, subcluster) differ only
    # through their group low-rank scores; a stacked cell has rank at most
    # group_rank + 2.
    spec = SyntheticSpec(n=300, m=30, num_groups=3, num_subclusters=2,
                         group_rank=3, beta=1.0, noise_sigma=0.0, seed=2)
    X, _, hidden, parts = generate_crossed_groups(spec)
    g_labels = parts["group_labels"]
    checked = 0
    for gv in range(3):
        for sv in range(2):
            cell = X[(g_labels == gv) & (hidden == sv)]
            if cell.shape[0] < spec.group_rank + 3:
                continue
            s = np.linalg.svd(cell, compute_uv=False)
            assert np.all(s[spec.group_rank + 2:] < 1e-8)
            checked += 1
    assert checked >= 4


def test_generator_unit_score_normalization():
    spec = SyntheticSpec(n=40, m=25, num_groups=2, num_subclusters=2, seed=3)
    _, _, _, parts = generate_crossed_groups(spec)
    np.testing.assert_allclose(np.linalg.norm(parts["group_scores"], axis=1),
                               1.0, atol=1e-12)
    raw = SyntheticSpec(n=40, m=25, num_groups=2, num_subclusters=2, seed=3,
                        score_norm="raw")
    _, _, _, parts_raw = generate_crossed_groups(raw)
    assert not np.allclose(np.linalg.norm(parts_raw["group_scores"], axis=1), 1.0)


def test_generator_rejects_bad_spec():
    with pytest.raises(ValueError):
        generate_crossed_groups(SyntheticSpec(beta=1.5))
    with pytest.raises(ValueError):
        generate_crossed_groups(SyntheticSpec(m=10, group_rank=11))


# ------------------------------------------------------------------- rmse

def test_rmse_zero_at_truth():
    X = rng(4).standard_normal((6, 5))
    assert rmse_on(ObservationMask.full(6, 5), X, X) == 0.0


def test_rmse_constant_offset():
    X = rng(5).standard_normal((6, 5))
    mask = sample_uniform_mask(6, 5, 0.7, seed=6)
    assert rmse_on(mask, X, X + 0.37) == pytest.approx(0.37)


def test_rmse_single_cell():
    X = rng(7).standard_normal((4, 4))
    W = rng(8).standard_normal((4, 4))
    mask = ObservationMask.from_pairs(4, 4, [2], [1])
    assert rmse_on(mask, X, W) == pytest.approx(abs(W[2, 1] - X[2, 1]))


def test_rmse_empty_mask_rejected():
    with pytest.raises(ValueError):
        rmse_on(ObservationMask.empty(3, 3), np.ones((3, 3)), np.ones((3, 3)))


def test_rmse_two_code_paths():
    # rmse == ||P_test(X - W)||_F / sqrt(|test|).
    X = rng(9).standard_normal((8, 6))
    W = rng(10).standard_normal((8, 6))
    mask = sample_uniform_mask(8, 6, 0.5, seed=11)
    direct = np.linalg.norm(np.where(mask.dense(), X - W, 0.0))
    assert rmse_on(mask, X, W) == pytest.approx(
        direct / np.sqrt(mask.n_observed), rel=1e-12)


def test_frobenius_error():
    A = rng(12).standard_normal((5, 4))
    out = frobenius_error(A, A + 1.0)
    assert out["absolute"] == pytest.approx(np.sqrt(20.0))
    assert out["relative"] == pytest.approx(np.sqrt(20.0) / np.linalg.norm(A))


# -------------------------------------------------------- subspace metrics

def planted_two_groups(seed=13, n=40, m=20, r=2):
    gen = rng(seed)
    half = n // 2
    W = np.zeros((n, m))
    bases = []
    for lo, hi in ((0, half), (half, n)):
        V = np.linalg.qr(gen.standard_normal((m, r)))[0]
        bases.append(V)
        W[lo:hi] = gen.standard_normal((hi - lo, r)) @ V.T
    g = GroupStructure.build(n, [("a", range(half)), ("b", range(half, n))])
    return W, g, bases


def test_subspace_error_zero_at_truth():
    W, g, _ = planted_two_groups()
    errs = per_group_subspace_error(g, W, W, ranks=2)
    assert all(v <= 1e-8 for v in errs.values())


def test_subspace_error_invariant_to_inner_rotation():
    # Rotating a block inside its own right subspace must not register.
    W, g, bases = planted_two_groups()
    V = bases[0]
    R = np.linalg.qr(rng(14).standard_normal((2, 2)))[0]
    M = V @ R @ V.T + (np.eye(20) - V @ V.T)
    W_hat = W.copy()
    W_hat[:20] = W[:20] @ M
    errs = per_group_subspace_error(g, W, W_hat, ranks=2)
    assert errs["a"] <= 1e-8


def test_subspace_error_scales_linearly_in_noise():
    W, g, _ = planted_two_groups()
    noise = rng(15).standard_normal(W.shape)
    noise /= np.linalg.norm(noise)
    errs = {}
    for eps in (1e-3, 1e-2):
        out = per_group_subspace_error(g, W, W + eps * noise, ranks=2)
        errs[eps] = np.mean(list(out.values()))
    ratio = errs[1e-2] / errs[1e-3]
    assert 7.0 < ratio < 14.0


def test_subspace_error_diameter_bound():
    W, g, _ = planted_two_groups()
    other = rng(16).standard_normal(W.shape)
    errs = per_group_subspace_error(g, W, other, ranks=2)
    assert all(v <= np.sqrt(2 * 2) + 1e-12 for v in errs.values())


def test_subspace_error_rank_too_large():
    W, g, _ = planted_two_groups(n=8, m=4)
    with pytest.raises(ValueError):
        per_group_subspace_error(g, W, W, ranks=5)


def test_grassmann_eval_zero_at_truth_and_mean_key():
    W, g, _ = planted_two_groups()
    out = per_group_grassmann(g, W, W, ranks=2)
    assert set(out) == {"a", "b", "mean"}
    assert out["mean"] <= 1e-8


# ---------------------------------------------------------------- kmeans

def blob_data(seed=17, n_per=30, d=5, sep=8.0):
    gen = rng(seed)
    a = gen.standard_normal((n_per, d))
    b = gen.standard_normal((n_per, d)) + sep
    X = np.vstack([a, b])
    labels = np.array([0] * n_per + [1] * n_per)
    return X, labels


def test_kmeans_separable_blobs():
    X, truth = blob_data()
    labels = kmeans(X, 2, seed=1)
    assert adjusted_rand_index(labels, truth) == pytest.approx(1.0)


def test_kmeans_k1():
    X, _ = blob_data()
    assert np.all(kmeans(X, 1, seed=0) == 0)


def test_kmeans_wcss_not_worse_than_planted():
    X, truth = blob_data(seed=18, sep=3.0)

    def wcss(labels):
        return sum(((X[labels == j] - X[labels == j].mean(axis=0)) ** 2).sum()
                   for j in np.unique(labels))

    ours = kmeans(X, 2, seed=2)
    assert wcss(ours) <= wcss(truth) + 1e-9


def test_kmeans_k_out_of_range():
    X, _ = blob_data(n_per=3)
    with pytest.raises(ValueError):
        kmeans(X, 7, seed=0)


def test_kmeans_deterministic():
    X, _ = blob_data(seed=19, sep=1.0)
    assert np.array_equal(kmeans(X, 3, seed=5), kmeans(X, 3, seed=5))


# ------------------------------------------------------------ ari and nmi

def test_ari_identical():
    a = np.array([0, 0, 1, 1, 2, 2])
    assert adjusted_rand_index(a, a) == pytest.approx(1.0)


def test_ari_constant_labeling_is_zero():
    a = np.zeros(8, dtype=int)
    b = np.array([0, 1, 2, 3, 0, 1, 2, 3])
    assert adjusted_rand_index(a, b) == pytest.approx(0.0)


def brute_force_ari(a, b):
    # Independent pair-counting oracle (Hubert & Arabie via pair categories).
    n = len(a)
    n11 = n00 = n10 = n01 = 0
    for i in range(n):
        for j in range(i + 1, n):
            sa, sb = a[i] == a[j], b[i] == b[j]
            if sa and sb:
                n11 += 1
            elif sa and not sb:
                n10 += 1
            elif not sa and sb:
                n01 += 1
            else:
                n00 += 1
    denom = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00)
    if denom == 0:
        return 1.0
    return 2.0 * (n11 * n00 - n10 * n01) / denom


def test_ari_four_point_contingency():
    a = np.array([0, 0, 1, 1])
    b = np.array([0, 1, 0, 1])
    expected = brute_force_ari(a, b)
    assert adjusted_rand_index(a, b) == pytest.approx(expected)
    assert expected == pytest.approx(-0.5)


def test_ari_matches_brute_force_and_sklearn_on_random_labelings():
    gen = rng(20)
    for _ in range(5):
        a = gen.integers(0, 4, size=12)
        b = gen.integers(0, 3, size=12)
        ours = adjusted_rand_index(a, b)
        assert ours == pytest.approx(brute_force_ari(a, b), abs=1e-12)
        assert ours == pytest.approx(skmetrics.adjusted_rand_score(a, b),
                                     abs=1e-12)


def test_ari_nmi_label_permutation_invariance():
    gen = rng(21)
    a = gen.integers(0, 4, size=30)
    b = gen.integers(0, 3, size=30)
    a_renamed = (a + 7) % 11
    assert adjusted_rand_index(a, b) == pytest.approx(
        adjusted_rand_index(a_renamed, b))
    assert normalized_mutual_information(a, b) == pytest.approx(
        normalized_mutual_information(a_renamed, b))


def test_nmi_identical_multiclass():
    a = np.array([0, 0, 1, 1, 2, 2])
    assert normalized_mutual_information(a, a) == pytest.approx(1.0)


def test_nmi_independent_labelings_near_zero():
    gen = rng(22)
    a = gen.integers(0, 4, size=10000)
    b = gen.integers(0, 4, size=10000)
    assert normalized_mutual_information(a, b) < 0.05


def test_nmi_constant_is_zero():
    a = np.zeros(10, dtype=int)
    b = np.arange(10) % 3
    assert normalized_mutual_information(a, b) == 0.0
    assert normalized_mutual_information(a, a) == 0.0


def test_nmi_matches_sklearn_geometric():
    gen = rng(23)
    for _ in range(5):
        a = gen.integers(0, 5, size=40)
        b = gen.integers(0, 4, size=40)
        ours = normalized_mutual_information(a, b)
        ref = skmetrics.normalized_mutual_info_score(
            a, b, average_method="geometric")
        assert ours == pytest.approx(ref, abs=1e-10)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        adjusted_rand_index([0, 1], [0, 1, 2])
    with pytest.raises(ValueError):
        normalized_mutual_information([0, 1], [0, 1, 2])


# -------------------------------------------------------- scale selection

def test_select_lambda_scale_grouped():
    W, g, _ = planted_two_groups(seed=24, n=30, m=15)
    mask = sample_uniform_mask(30, 15, 0.8, seed=25)
    base = {"a": 0.2, "b": 0.2}
    best, scores = select_lambda_scale(W, mask, [0.1, 1.0, 50.0], groups=g,
                                       base_lambdas=base, val_frac=0.2,
                                       seed=26, max_iters=200)
    assert set(scores) == {0.1, 1.0, 50.0}
    # A penalty large enough to zero everything cannot win on clean data.
    assert best != 50.0


def test_select_lambda_scale_global():
    W, _, _ = planted_two_groups(seed=27, n=30, m=15)
    mask = sample_uniform_mask(30, 15, 0.8, seed=28)
    best, scores = select_lambda_scale(W, mask, [0.1, 1.0], base_lambda=0.3,
                                       val_frac=0.2, seed=29, max_iters=200)
    assert best in scores
