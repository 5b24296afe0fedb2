import numpy as np
import pytest

import arrowqp as aq
from arrowqp.flops import (_augmentation_overhead3, _factorization_cost3,
                           _mpc_closed_form3)
from arrowqp.kernels import FlopCounter

from util import random_spd_btda, random_structure


def test_kernel_costs_from_table():
    assert aq.kernel_cost("gemm", 2, 3, 4) == 48
    assert aq.kernel_cost("potrf", 3) == 9
    assert aq.kernel_cost("syrk", 4, 2) == 32
    assert aq.kernel_cost("trsm", 3, 2) == 12


def test_kernel_cost_rejects_unknown():
    with pytest.raises(ValueError):
        aq.kernel_cost("axpy", 3)


def test_predict_single_block_is_potrf():
    assert aq.predict_factorization(aq.BlockStructure((6,), 0)) == 72


def test_predict_two_blocks_exact_rational():
    # potrf(2) + trsm(2,2) + syrk(2,2) + potrf(2) = 8/3 + 8 + 8 + 8/3 = 64/3
    st = aq.BlockStructure((2, 2), 0)
    assert aq.predict_factorization(st) == 21


def test_predict_matches_instrumented_tally_fuzzed():
    rng = np.random.default_rng(42)
    for _ in range(50):
        st = random_structure(rng)
        psi = random_spd_btda(rng, st)
        counter = FlopCounter()
        aq.factorize(psi, counter=counter)
        assert counter.scaled_total == _factorization_cost3(
            st.block_sizes, st.arrow_width)
        assert counter.total == aq.predict_factorization(st)


def test_mpc_closed_form_spring_mass_point():
    rep = aq.mpc_closed_form(15, 4, 1, 0)
    assert rep.factorize == 3325
    assert rep.total == sum([rep.construct_psi, rep.factorize,
                             rep.construct_rbar, rep.solve, rep.recover_dy])


def test_mpc_closed_form_global_terms_vanish():
    with_g = aq.mpc_closed_form(10, 6, 2, 0)
    base3 = _mpc_closed_form3(10, 6, 2, 0)
    assert all(v % 3 in (0, 1, 2) for v in base3.values())
    # doubling N doubles every row when n_g = 0
    doubled = aq.mpc_closed_form(20, 6, 2, 0)
    for key in ("construct_psi", "factorize", "construct_rbar", "solve",
                "recover_dy"):
        assert getattr(doubled, key) == pytest.approx(
            2 * getattr(with_g, key), abs=1)


def test_augmentation_overhead_zero_without_global():
    assert aq.augmentation_overhead(7, 5, 3, 0) == 0


def test_augmentation_overhead_small_case():
    # Substitution value: factorize(1, 2, 0, 0) - factorize(1, 1, 0, 1)
    # = 56/3 - 17/3 = 13.
    assert aq.augmentation_overhead(1, 1, 0, 1) == 13


def test_substitution_identity_exact_on_grid():
    for N in (1, 3, 7, 20):
        for n_x in (0, 1, 4, 9, 16):
            for n_u in (0, 2, 5, 16):
                for n_g in (0, 1, 3, 8, 16):
                    lhs = _augmentation_overhead3(N, n_x, n_u, n_g)
                    rhs = (_mpc_closed_form3(N, n_x + n_g, n_u, 0)["factorize"]
                           - _mpc_closed_form3(N, n_x, n_u, n_g)["factorize"])
                    assert lhs == rhs


def test_overhead_strictly_positive_for_real_globals():
    for N in (1, 2, 5, 12):
        for n_x in (1, 3, 8):
            for n_u in (0, 2, 6):
                for n_g in (1, 2, 7):
                    assert aq.augmentation_overhead(N, n_x, n_u, n_g) > 0


def test_reduced_coupling_heights():
    # The state-transition zero block shrinks coupling rows from
    # n_x + n_u to n_x; per-stage cost then matches the closed form.
    n_x, n_u, n_stages = 16, 7, 15
    sizes = tuple([n_x + n_u] * n_stages + [n_x])
    heights = [n_x] * n_stages
    structural = aq.predict_factorization(
        aq.BlockStructure(sizes, 0), coupling_heights=heights)
    closed = aq.mpc_closed_form(n_stages, n_x, n_u, 0).factorize
    assert abs(structural - closed) / closed < 0.15
