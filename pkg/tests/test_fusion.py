import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from comret.core import FusionConfig
from comret.errors import DimMismatch, LengthMismatch, MalformedRunLine, MissingChannel
from comret.fusion import (
    fuse_linear,
    fuse_ucmr,
    inner_product_scores,
    modality_scores,
    rank_top_k,
    read_run,
    retrieve,
    run_queries,
    sigmoid_normalize,
    write_run,
    zscore_normalize,
)

import reference
from conftest import make_index, make_query, random_index, unified_query

bounded_scores = st.lists(
    st.floats(min_value=-30, max_value=30, allow_nan=False, allow_infinity=False),
    min_size=2,
    max_size=50,
)


class TestSigmoidNormalize:
    def test_zero_maps_to_half(self):
        assert sigmoid_normalize(np.array([0.0]))[0] == 0.5

    def test_symmetry_sums_to_one(self, rng):
        z = rng.standard_normal(100) * 5
        total = sigmoid_normalize(z) + sigmoid_normalize(-z)
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_log_nine_maps_to_point_nine(self):
        np.testing.assert_allclose(sigmoid_normalize(np.array([math.log(9.0)])), [0.9], atol=1e-12)

    @given(
        st.lists(st.integers(min_value=-3000, max_value=3000), min_size=2, max_size=50)
    )
    @settings(max_examples=50)
    def test_strictly_order_preserving(self, hundredths):
        # Score gaps below f64 resolution (~1e-16) cannot survive the
        # squash, so generate on a 0.01 grid spanning [-30, 30].
        z = np.asarray(hundredths, dtype=np.float64) / 100.0
        out = sigmoid_normalize(z)
        order_in = np.argsort(-z, kind="stable")
        order_out = np.argsort(-out, kind="stable")
        np.testing.assert_array_equal(order_in, order_out)


class TestZscoreNormalize:
    def test_hand_computed_example(self):
        out, mu, sigma = zscore_normalize(np.array([0.2, 0.5, 0.8]))
        assert mu == pytest.approx(0.5)
        assert sigma == pytest.approx(0.2449490, abs=1e-7)
        np.testing.assert_allclose(out, [-1.2247449, 0.0, 1.2247449], atol=1e-7)

    def test_constant_input_falls_back_to_zeros(self):
        out, _, sigma = zscore_normalize(np.array([0.7, 0.7, 0.7]))
        assert sigma == 0.0
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_singleton_is_degenerate(self):
        out, mu, sigma = zscore_normalize(np.array([0.3]))
        assert sigma == 0.0 and mu == pytest.approx(0.3)
        np.testing.assert_array_equal(out, [0.0])

    def test_population_statistics(self, rng):
        for _ in range(20):
            x = rng.standard_normal(int(rng.integers(2, 200)))
            out, _, sigma = zscore_normalize(x)
            if sigma > 0:
                assert abs(out.mean()) < 1e-9
                assert abs(math.sqrt(np.mean(out**2)) - 1.0) < 1e-9

    def test_matches_naive_reference(self, rng):
        x = rng.random(37)
        out, mu, sigma = zscore_normalize(x)
        want, want_mu, want_sigma = reference.zscore(list(x))
        assert mu == pytest.approx(want_mu, abs=1e-12)
        assert sigma == pytest.approx(want_sigma, abs=1e-12)
        np.testing.assert_allclose(out, want, atol=1e-9)

    @given(bounded_scores, st.floats(min_value=-100, max_value=100, allow_nan=False))
    @settings(max_examples=100)
    def test_shift_invariance(self, values, shift):
        x = np.asarray(values)
        base, _, sigma_base = zscore_normalize(x)
        shifted, _, sigma_shift = zscore_normalize(x + shift)
        # Mathematically exact; floating point leaves ~1e-9 residue.
        np.testing.assert_allclose(shifted, base, atol=1e-6)
        assert (sigma_base == 0.0) == (sigma_shift == 0.0)


class TestFuse:
    def test_alpha_boundaries(self):
        zt, zi = np.array([2.0, 0.0]), np.array([0.0, 2.0])
        np.testing.assert_array_equal(fuse_linear(zt, zi, 1.0), zt)
        np.testing.assert_array_equal(fuse_linear(zt, zi, 0.0), zi)
        np.testing.assert_array_equal(fuse_linear(zt, zi, 0.5), [1.0, 1.0])

    def test_beta_weighting(self):
        zt, zi = np.array([1.0, -1.0]), np.array([-1.0, 1.0])
        np.testing.assert_allclose(fuse_ucmr(zt, zi, 0.1), [-0.8, 0.8], atol=1e-12)
        np.testing.assert_array_equal(fuse_ucmr(zt, zi, 0.0), zi)
        np.testing.assert_array_equal(fuse_ucmr(zt, zi, 1.0), zt)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            fuse_linear(np.ones(3), np.ones(2), 0.5)


class TestRankTopK:
    def test_tie_broken_by_lower_index(self):
        entries = rank_top_k(np.array([0.3, 0.9, 0.9, 0.1]), ["a", "b", "c", "d"], 2)
        assert [(r, pid) for r, pid, _ in entries] == [(1, "b"), (2, "c")]

    def test_truncates_to_corpus_size(self):
        entries = rank_top_k(np.array([1.0, 2.0, 3.0, 4.0]), list("abcd"), 10)
        assert len(entries) == 4
        assert [pid for _, pid, _ in entries] == ["d", "c", "b", "a"]

    def test_all_equal_scores_keep_ingestion_order(self):
        entries = rank_top_k(np.zeros(4), list("abcd"), 4)
        assert [pid for _, pid, _ in entries] == ["a", "b", "c", "d"]
        assert [r for r, _, _ in entries] == [1, 2, 3, 4]


class TestInnerProductScores:
    def test_hand_values(self):
        idx = make_index([[1, 0], [0, 1], [1, 1]], [[0, 0]] * 3)
        np.testing.assert_array_equal(inner_product_scores(np.array([1.0, 0.0]), idx.images), [1, 0, 1])
        np.testing.assert_array_equal(
            inner_product_scores(np.array([0.5, -0.5]), make_index([[2, 2]], [[0, 0]]).images), [0.0]
        )

    def test_dim_mismatch(self):
        idx = make_index([[1, 0]], [[1, 0]])
        with pytest.raises(DimMismatch):
            inner_product_scores(np.array([1.0, 0.0, 0.0]), idx.images)


class TestRetrieve:
    def test_four_page_fixture_matches_reference_pipeline(self):
        image_rows = [[0, 1], [1, 0], [0.5, 0], [0, 0]]
        text_rows = [[0, 0]] * 4
        idx = make_index(image_rows, text_rows)
        q = unified_query("q1", [1.0, 0.0])
        result = retrieve(q, idx, FusionConfig(mode="ucmr", beta=0.1, top_k=3))

        order, fused = reference.normalized_fusion_ranking(
            [1.0, 0.0], [1.0, 0.0], image_rows, text_rows, beta=0.1
        )
        assert result.page_ids() == tuple(f"p{i + 1}" for i in order[:3])
        assert result.entries[0].page_id == "p2"
        for entry, idx_ref in zip(result.entries, order):
            assert entry.fused_score == pytest.approx(fused[idx_ref], abs=1e-12)

    def test_single_page_corpus(self):
        idx = make_index([[1.0]], [[1.0]])
        for mode in ("image-only", "text-only", "raw-linear", "ucmr"):
            result = retrieve(unified_query("q", [2.0]), idx, FusionConfig(mode=mode, top_k=5))
            assert [(e.rank, e.page_id) for e in result.entries] == [(1, "p1")]

    def test_beta_zero_matches_image_only_permutation(self, rng):
        idx = random_index(rng, pages=30, dim=8)
        q = unified_query("q", rng.standard_normal(8).tolist())
        ucmr = retrieve(q, idx, FusionConfig(mode="ucmr", beta=0.0, top_k=30))
        image = retrieve(q, idx, FusionConfig(mode="image-only", top_k=30))
        assert ucmr.page_ids() == image.page_ids()

    def test_beta_one_matches_text_only_permutation(self, rng):
        idx = random_index(rng, pages=30, dim=8)
        q = unified_query("q", rng.standard_normal(8).tolist())
        ucmr = retrieve(q, idx, FusionConfig(mode="ucmr", beta=1.0, top_k=30))
        text = retrieve(q, idx, FusionConfig(mode="text-only", top_k=30))
        assert ucmr.page_ids() == text.page_ids()

    def test_matches_brute_force_on_random_instances(self, rng):
        for _ in range(25):
            pages, dim = int(rng.integers(1, 60)), int(rng.integers(1, 16))
            image_rows = rng.standard_normal((pages, dim)).tolist()
            text_rows = rng.standard_normal((pages, dim)).tolist()
            idx = make_index(image_rows, text_rows)
            qvec = rng.standard_normal(dim).tolist()
            beta = float(rng.random())
            result = retrieve(unified_query("q", qvec), idx, FusionConfig(mode="ucmr", beta=beta, top_k=pages))
            # Reference uses the stored float32 rows, same as the engine.
            stored_i = idx.images.data.tolist()
            stored_t = idx.texts.data.tolist()
            q32 = np.asarray(qvec, dtype=np.float32).tolist()
            order, _ = reference.normalized_fusion_ranking(q32, q32, stored_i, stored_t, beta)
            assert result.page_ids() == tuple(f"p{i + 1}" for i in order)

    def test_ensemble_uses_each_channel(self):
        idx = make_index([[1, 0], [0, 1]], [[1, 0], [0, 1]])
        q = make_query("q", image_vec=[1.0, 0.0], text_vec=[0.0, 1.0])
        result = retrieve(q, idx, FusionConfig(mode="ensemble-ucmr", beta=0.5, top_k=2))
        # image channel favors p1, text channel favors p2; blend is symmetric
        assert result.entries[0].fused_score == pytest.approx(result.entries[1].fused_score)

    def test_ensemble_requires_both_channels(self):
        idx = make_index([[1, 0]], [[1, 0]])
        q = make_query("q", image_vec=[1.0, 0.0])
        with pytest.raises(MissingChannel) as err:
            retrieve(q, idx, FusionConfig(mode="ensemble-ucmr"))
        assert err.value.channel == "text-query"

    def test_missing_all_channels(self):
        idx = make_index([[1, 0]], [[1, 0]])
        q = make_query("q")
        with pytest.raises(MissingChannel):
            retrieve(q, idx, FusionConfig(mode="image-only"))

    def test_single_modality_modes_zero_other_column(self):
        idx = make_index([[1.0, 0.0]], [[0.5, 0.5]])
        q = unified_query("q", [1.0, 1.0])
        image = retrieve(q, idx, FusionConfig(mode="image-only", top_k=1))
        assert image.entries[0].text_score == 0.0
        assert image.entries[0].image_score == pytest.approx(1.0)
        text = retrieve(q, idx, FusionConfig(mode="text-only", top_k=1))
        assert text.entries[0].image_score == 0.0
        assert text.entries[0].text_score == pytest.approx(1.0)

    def test_raw_linear_breakdown_carries_raw_scores(self):
        idx = make_index([[2.0]], [[3.0]])
        q = unified_query("q", [1.0])
        result = retrieve(q, idx, FusionConfig(mode="raw-linear", alpha=0.25, top_k=1))
        e = result.entries[0]
        assert (e.image_score, e.text_score) == (2.0, 3.0)
        assert e.fused_score == pytest.approx(0.25 * 3.0 + 0.75 * 2.0)

    def test_constant_text_modality_contributes_nothing(self, rng):
        image_rows = rng.standard_normal((12, 4)).tolist()
        idx_const = make_index(image_rows, [[1.0, 1.0, 1.0, 1.0]] * 12)
        q = unified_query("q", rng.standard_normal(4).tolist())
        with_const = retrieve(q, idx_const, FusionConfig(mode="ucmr", beta=0.4, top_k=12))
        image_only = retrieve(q, idx_const, FusionConfig(mode="image-only", top_k=12))
        assert with_const.page_ids() == image_only.page_ids()
        assert all(e.text_score == 0.0 for e in with_const.entries)


class TestRunFile:
    def test_write_read_round_trip(self, rng):
        idx = random_index(rng, pages=6, dim=3)
        queries = [unified_query(f"q{i}", rng.standard_normal(3).tolist()) for i in range(3)]
        results = run_queries(idx, queries, FusionConfig(mode="ucmr", top_k=4))
        buf = io.StringIO()
        write_run(results, "ucmr", buf)
        parsed = read_run(buf.getvalue().splitlines())
        assert parsed == {r.query_id: list(r.page_ids()) for r in results}

    def test_scores_use_nine_significant_digits(self):
        idx = make_index([[1.0, 0.0]], [[1.0, 0.0]])
        q = unified_query("q1", [1 / 3, 0.0])
        buf = io.StringIO()
        write_run([retrieve(q, idx, FusionConfig(mode="image-only", top_k=1))], "image-only", buf)
        fields = buf.getvalue().strip().split("\t")
        assert fields[3] == "0.333333343"  # float32 third, 9 significant digits

    def test_malformed_line_rejected(self):
        with pytest.raises(MalformedRunLine):
            read_run(["q1\tp1\tone\t0\t0\t0\tucmr"])
        with pytest.raises(MalformedRunLine):
            read_run(["q1\tp1\t1\t0\t0"])

    def test_results_sorted_by_query_id(self, rng):
        idx = random_index(rng, pages=4, dim=2)
        queries = [unified_query(qid, rng.standard_normal(2).tolist()) for qid in ("qz", "qa", "qm")]
        results = run_queries(idx, queries, FusionConfig(top_k=1), threads=3)
        assert [r.query_id for r in results] == ["qa", "qm", "qz"]

    def test_threaded_matches_serial(self, rng):
        idx = random_index(rng, pages=20, dim=5)
        queries = [unified_query(f"q{i}", rng.standard_normal(5).tolist()) for i in range(8)]
        cfg = FusionConfig(mode="ucmr", top_k=5)
        serial = run_queries(idx, queries, cfg, threads=1)
        threaded = run_queries(idx, queries, cfg, threads=4)
        assert [r.page_ids() for r in serial] == [r.page_ids() for r in threaded]


class TestScoreVector:
    def test_pipeline_fields_consistent(self, rng):
        idx = random_index(rng, pages=15, dim=6)
        sv = modality_scores(rng.standard_normal(6), idx.images, "image")
        assert sv.modality == "image"
        assert len(sv.raw) == len(sv.sigmoid) == len(sv.zscored) == 15
        assert ((sv.sigmoid > 0) & (sv.sigmoid < 1)).all()
        np.testing.assert_allclose(sv.zscored * sv.sigma + sv.mu, sv.sigmoid, atol=1e-12)
