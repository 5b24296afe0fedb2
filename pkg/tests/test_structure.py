import numpy as np
import pytest

import arrowqp as aq
from arrowqp.flops import _factorization_cost3
from arrowqp.structure import (SparsityPattern, detect, detection_pattern,
                               merge_blocks, verify_cover)

from util import random_qp


def pattern_of(dense) -> SparsityPattern:
    return SparsityPattern.from_matrix(np.asarray(dense, dtype=float))


class TestDetectionPattern:
    def test_diagonal_p_only(self):
        qp = aq.make_general_qp(np.diag([1.0, 2.0, 3.0]), np.zeros(3))
        pat = detection_pattern(qp)
        for i, cols in enumerate(pat.rows):
            np.testing.assert_array_equal(cols, [i])

    def test_constraint_product_fill(self):
        qp = aq.make_general_qp(np.zeros((2, 2)), np.zeros(2),
                                A=np.array([[1.0, 1.0]]), b=np.zeros(1))
        pat = detection_pattern(qp)
        assert 0 in pat.rows[1].tolist()

    def test_invariant_to_row_permutation(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            qp = random_qp(rng, n=8, p=4, m=6)
            pat = detection_pattern(qp)
            perm_a = rng.permutation(qp.p)
            perm_g = rng.permutation(qp.m)
            qp2 = aq.make_general_qp(qp.P, qp.c, qp.A.toarray()[perm_a],
                                     qp.b[perm_a], qp.G.toarray()[perm_g],
                                     qp.h[perm_g])
            pat2 = detection_pattern(qp2)
            assert pat.n == pat2.n
            for a, b in zip(pat.rows, pat2.rows):
                np.testing.assert_array_equal(a, b)


class TestDetect:
    def test_block_diagonal(self):
        dense = np.zeros((9, 9))
        for k in range(3):
            dense[3 * k:3 * k + 3, 3 * k:3 * k + 3] = 1
        st = detect(pattern_of(dense))
        assert st.block_sizes == (3, 3, 3)
        assert st.arrow_width == 0

    def test_fully_dense(self):
        st = detect(pattern_of(np.ones((6, 6))))
        assert st.block_sizes == (6,)
        assert st.arrow_width == 0

    def test_pure_diagonal(self):
        st = detect(pattern_of(np.eye(7)))
        assert st.block_sizes == (1,) * 7
        assert st.arrow_width == 0

    def test_tridiagonal_band(self):
        dense = np.eye(8) + np.diag(np.ones(7), -1)
        st = detect(pattern_of(dense))
        assert verify_cover(pattern_of(dense), st) is None

    def test_arrow_only(self):
        dense = np.eye(10)
        dense[8:, :] = 1
        st = detect(pattern_of(dense))
        assert st.arrow_width == 2
        assert st.block_sizes == (1,) * 8

    def test_scenario_instance_matches_drawn_partition(self):
        prob = aq.scenario(aq.ScenarioConfig(M=2, N=4, N_s=2, seed=0))
        qp, _ = aq.to_general_qp(prob)
        st = detect(detection_pattern(qp))
        assert st.arrow_width == 5
        assert st.block_sizes == (5, 5, 5, 4, 5, 5, 5, 4)

    def test_determinism(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            qp = random_qp(rng)
            pat = detection_pattern(qp)
            assert detect(pat) == detect(pat)

    def test_cover_soundness_fuzzed(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            qp = random_qp(rng)
            pat = detection_pattern(qp)
            assert verify_cover(pat, detect(pat)) is None

    def test_generator_families_beat_single_block(self):
        cases = []
        prob, _ = aq.spring_mass(aq.SpringMassConfig(M=3, N=8, r_d=0.1, seed=3))
        cases.append(prob)
        cases.append(aq.scenario(aq.ScenarioConfig(M=2, N=4, N_s=2, seed=4)))
        cases.append(aq.extended_lqc(6, 3, 2, 2, seed=5))
        for prob in cases:
            qp, _ = aq.to_general_qp(prob)
            pat = detection_pattern(qp)
            st = detect(pat)
            single = _factorization_cost3((qp.n,), 0)
            got = _factorization_cost3(st.block_sizes, st.arrow_width)
            assert got <= single


class TestVerifyCover:
    def test_detect_output_passes(self):
        rng = np.random.default_rng(3)
        qp = random_qp(rng, n=10, p=4, m=5)
        pat = detection_pattern(qp)
        assert verify_cover(pat, detect(pat)) is None

    def test_dense_against_three_blocks(self):
        pat = pattern_of(np.ones((9, 9)))
        st = aq.BlockStructure((3, 3, 3), 0)
        assert verify_cover(pat, st) == (6, 0)

    def test_diagonal_single_block(self):
        pat = pattern_of(np.eye(5))
        assert verify_cover(pat, aq.BlockStructure((5,), 0)) is None

    def test_size_mismatch_raises(self):
        with pytest.raises(ValueError):
            verify_cover(pattern_of(np.eye(4)), aq.BlockStructure((5,), 0))


class TestMergeBlocks:
    def test_scalar_pair_with_coupling_merges(self):
        pat = pattern_of(np.ones((2, 2)))
        st = merge_blocks(aq.BlockStructure((1, 1), 0), pat)
        assert st.block_sizes == (2,)

    def test_uncoupled_pair_stays(self):
        dense = np.zeros((8, 8))
        dense[:4, :4] = 1
        dense[4:, 4:] = 1
        st = merge_blocks(aq.BlockStructure((4, 4), 0), pattern_of(dense))
        assert st.block_sizes == (4, 4)

    def test_single_block_idempotent(self):
        pat = pattern_of(np.ones((5, 5)))
        st = merge_blocks(aq.BlockStructure((5,), 0), pat)
        assert st.block_sizes == (5,)

    def test_idempotence(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            qp = random_qp(rng)
            pat = detection_pattern(qp)
            st = detect(pat)
            once = merge_blocks(st, pat)
            assert merge_blocks(once, pat) == once

    def test_non_covering_input_rejected(self):
        pat = pattern_of(np.ones((9, 9)))
        with pytest.raises(ValueError):
            merge_blocks(aq.BlockStructure((3, 3, 3), 0), pat)


class TestOrderingInvariance:
    def test_detection_invariant_to_constraint_order(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            qp = random_qp(rng, n=9, p=4, m=6)
            base = detect(detection_pattern(qp))
            for _ in range(5):
                perm_a = rng.permutation(qp.p)
                perm_g = rng.permutation(qp.m)
                qp2 = aq.make_general_qp(qp.P, qp.c, qp.A.toarray()[perm_a],
                                         qp.b[perm_a], qp.G.toarray()[perm_g],
                                         qp.h[perm_g])
                assert detect(detection_pattern(qp2)) == base


class TestSparsityPattern:
    def test_requires_diagonal(self):
        with pytest.raises(ValueError):
            SparsityPattern(2, (np.array([0]), np.array([0])))

    def test_structure_accessors(self):
        st = aq.BlockStructure((2, 3), 2)
        assert st.n == 7
        assert st.offsets == (0, 2, 5)
        assert [st.block_of(i) for i in range(7)] == [0, 0, 1, 1, 1, 2, 2]

    def test_bad_structure_rejected(self):
        with pytest.raises(ValueError):
            aq.BlockStructure((0, 3), 1)
        with pytest.raises(ValueError):
            aq.BlockStructure((), 2)
        with pytest.raises(ValueError):
            aq.BlockStructure((3,), -1)
