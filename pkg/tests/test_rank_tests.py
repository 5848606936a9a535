#!/usr/bin/env python3
"""
Tests for the stacked flattening matrix and the singular-value rank test
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from causal_pinpointer.errors import InvalidArgumentError, NumericError
from causal_pinpointer.graph_model import ParamSet, graph_from_edges, reference_graph
from causal_pinpointer.rank_tests import (
    OrderPair,
    build_A,
    estimate_pair_confounding,
    minimal_orders,
    rank_deficiency_test,
    threshold_schedule,
)
from causal_pinpointer.simulation_bench import SemModel, exact_cumulants_for

EXACT = 1e-7


def _two_node_cumulants(k_max=4):
    g = reference_graph("two_node")
    params = ParamSet(np.array([[0.0, 0.0], [0.6, 0.0]]), np.array([[0.8], [0.7]]))
    return exact_cumulants_for(SemModel(g, params, "gamma", [1.0, 0.7, 1.3]), k_max)


def _chain_cumulants(k_max=4):
    g = graph_from_edges(2, [(0, 1)], [])
    params = ParamSet(np.array([[0.0, 0.0], [0.75, 0.0]]), np.zeros((2, 0)))
    return exact_cumulants_for(SemModel(g, params, "lognormal", [1.0, 0.8]), k_max)


def test_minimal_orders():
    """k1 = ell+2 and the smallest k2 with enough stacked rows"""
    table = {0: (2, 3), 1: (3, 4), 2: (4, 6), 3: (5, 7), 4: (6, 8)}
    for ell, (k1, k2) in table.items():
        orders = minimal_orders(ell)
        assert (orders.k1, orders.k2) == (k1, k2), f"ell={ell} should use orders ({k1}, {k2})"
        assert orders.row_count >= ell + 2
        assert orders.ell == ell
    with pytest.raises(InvalidArgumentError):
        minimal_orders(-1)
    with pytest.raises(InvalidArgumentError):
        OrderPair(4, 3)
    print("✓ Minimal order table")


def test_threshold_schedule():
    """0.08 n^-0.2 in the first iteration, 0.2 (i-1) n^-0.2 afterwards"""
    scale = 10000 ** -0.2
    assert threshold_schedule(10000, 1) == pytest.approx(0.08 * scale)
    assert threshold_schedule(10000, 2) == pytest.approx(0.2 * scale)
    assert threshold_schedule(10000, 3) == pytest.approx(0.4 * scale)
    with pytest.raises(InvalidArgumentError):
        threshold_schedule(0, 1)
    print(f"✓ Threshold schedule (n=10000: {threshold_schedule(10000, 1):.4f})")


def test_rank_deficiency_test():
    """Ratio sigma_{ell+2} / sigma_1 against the threshold"""
    rank_one = np.outer([1.0, 2.0, -1.0], [1.0, 0.5])
    decision = rank_deficiency_test(rank_one, 0, 0.01)
    assert decision.accepted and decision.ratio < 1e-12, "Rank-one matrix should pass at ell=0"

    full = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    decision = rank_deficiency_test(full, 0, 0.1)
    assert not decision.accepted, "Full-rank matrix should fail"
    assert decision.ratio == pytest.approx(1 / np.sqrt(3))

    vacuous = rank_deficiency_test(np.eye(2), 1, 0.01)
    assert vacuous.accepted and vacuous.vacuous and vacuous.ratio == 0.0

    with pytest.raises(NumericError):
        rank_deficiency_test(np.array([[np.nan, 1.0], [1.0, 1.0], [0.0, 1.0]]), 0, 0.1)
    print("✓ Rank decisions")


def test_build_A_layout():
    """ell=0 stacks (c00, c01), (c000, c001), (c001, c011)"""
    C = _two_node_cumulants()
    A = build_A(C, (0, 1), minimal_orders(0))
    expected = np.array([
        [C[2][(0, 0)], C[2][(0, 1)]],
        [C[3][(0, 0, 0)], C[3][(0, 0, 1)]],
        [C[3][(0, 0, 1)], C[3][(0, 1, 1)]],
    ])
    assert np.allclose(A, expected), "A for ell=0 has the covariance row and two third-order rows"
    assert build_A(C, (0, 1), minimal_orders(1)).shape == (3, 3)

    reversed_A = build_A(C, (1, 0), minimal_orders(0))
    assert reversed_A[0, 0] == pytest.approx(C[2][(1, 1)]), "Direction relabels v first"

    with pytest.raises(InvalidArgumentError):
        build_A(C, (0, 1), minimal_orders(2))
    print("✓ A-matrix layout")


def test_exact_rank_drops():
    """On exact cumulants the source direction drops rank at the true ell"""
    C = _two_node_cumulants().standardized()
    forward = estimate_pair_confounding(C, 0, 1, ell_max=1, threshold=EXACT)
    assert forward.ell == 1, "Confounded pair needs one latent"
    assert forward.tests[0].decision.ratio > EXACT, "ell=0 must be rejected"
    backward = estimate_pair_confounding(C, 1, 0, ell_max=1, threshold=EXACT)
    assert backward.ell is None, "The sink is not a source of the pair"

    chain = _chain_cumulants().standardized()
    assert estimate_pair_confounding(chain, 0, 1, ell_max=1, threshold=EXACT).ell == 0
    assert estimate_pair_confounding(chain, 1, 0, ell_max=0, threshold=EXACT).ell is None

    with pytest.raises(InvalidArgumentError):
        estimate_pair_confounding(C, 0, 1, ell_max=1)
    print("✓ Exact rank drops identify source and confounding")


def run_all_tests():
    """Run all tests"""
    print("=" * 70)
    print("CAUSAL-PINPOINTER RANK TEST TESTS")
    print("=" * 70)
    print()

    tests = [
        ("Minimal Orders", test_minimal_orders),
        ("Threshold Schedule", test_threshold_schedule),
        ("Rank Decisions", test_rank_deficiency_test),
        ("A Layout", test_build_A_layout),
        ("Exact Rank Drops", test_exact_rank_drops),
    ]

    passed = 0
    failed = 0

    for test_name, test_func in tests:
        print(f"\nTesting: {test_name}")
        print("-" * 70)
        try:
            test_func()
            passed += 1
            print(f"✅ {test_name} PASSED\n")
        except AssertionError as e:
            failed += 1
            print(f"❌ {test_name} FAILED: {e}\n")
        except Exception as e:
            failed += 1
            print(f"❌ {test_name} ERROR: {e}\n")

    print("=" * 70)
    print(f"TEST RESULTS: {passed} passed, {failed} failed")
    print("=" * 70)

    return failed == 0


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
