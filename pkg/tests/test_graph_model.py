#!/usr/bin/env python3
"""
Tests for latent DAGs, path matrices and compatible-matrix enumeration
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from causal_pinpointer.errors import InvalidArgumentError, InvalidModelError, InvalidSwapError
from causal_pinpointer.graph_model import (
    LatentDag,
    ParamSet,
    PathMatrix,
    conf_set,
    count_compatible,
    count_sparsest,
    enumerate_compatible,
    exog_set,
    graph_from_edges,
    infer_graph,
    normalize_params,
    path_matrix,
    recover_params,
    reference_graph,
    sib_set,
    support_preserving,
    swap_choices,
    swap_params,
)
from causal_pinpointer.simulation_bench import random_latent_dag, sample_model, two_node_graph


def _two_node_params(lam=0.6, g0=1.0, g1=0.7):
    return ParamSet(np.array([[0.0, 0.0], [lam, 0.0]]), np.array([[g0], [g1]]))


def test_path_matrix():
    """B = (I - Lambda)^-1 (I, Gamma) and its inverse"""
    lam, g0, g1 = 0.6, 0.8, 0.7
    B = path_matrix(_two_node_params(lam, g0, g1))
    expected = np.array([[1.0, 0.0, g0], [lam, 1.0, lam * g0 + g1]])
    assert np.allclose(B.values, expected), "Two-node path matrix mismatch"
    assert (B.p, B.ell) == (2, 1)

    params = recover_params(B)
    assert np.allclose(params.lam, [[0.0, 0.0], [lam, 0.0]]), "Lambda should be recovered"
    assert np.allclose(params.gamma, [[g0], [g1]]), "Gamma should be recovered"

    g = infer_graph(B, 1e-6)
    assert g.observed_edges == frozenset({(0, 1)}) and g.latent_edges == frozenset({(0, 0), (0, 1)})
    print("✓ Path matrix and parameter recovery agree")


def test_latent_dag_validation():
    """Cycles and single-child latents are rejected"""
    with pytest.raises(InvalidModelError):
        graph_from_edges(2, [(0, 1), (1, 0)], [])
    with pytest.raises(InvalidModelError):
        graph_from_edges(2, [(0, 1)], [[1]])
    with pytest.raises(InvalidArgumentError):
        reference_graph("nope")

    g = reference_graph("f")
    assert (g.p, g.ell) == (5, 2)
    assert g.topological_order()[0] == 0
    relabeled = g.relabeled([4, 3, 2, 1, 0])
    assert (4, 3) in relabeled.observed_edges, "Edge 0 -> 1 becomes 4 -> 3"
    print("✓ Graph validation and relabeling")


def test_exog_and_counts():
    """Exchangeable latents and the number of compatible matrices"""
    two = reference_graph("two_node")
    assert exog_set(two, 0) == {0} and exog_set(two, 1) == set()
    assert count_compatible(two) == 2 and count_sparsest(two) == 2

    chain = graph_from_edges(3, [(0, 1), (1, 2)], [])
    assert count_compatible(chain) == 1 and count_sparsest(chain) == 1, "Latent-free DAG is unique"

    g = reference_graph("chain_two_latents")
    assert exog_set(g, 0) == {0, 1}, "Both latents share the descendants of X0"
    assert count_compatible(g) == 3
    assert count_sparsest(g) == 1, "No swap keeps the support"

    under = reference_graph("underdetermined")
    assert count_compatible(under) == 3 and count_sparsest(under) == 3

    b = reference_graph("b")
    assert exog_set(b, 1) == {0}
    assert count_compatible(b) == 2 and count_sparsest(b) == 1, "Swap at X1 would add the edge X0 -> X2"
    print("✓ Exog sets and compatible counts")


def test_two_node_family_counts():
    """ell latents on X0 -> X1 give ell+1 compatible matrices"""
    for ell in (1, 2, 3):
        g = two_node_graph(ell)
        assert count_compatible(g) == ell + 1, f"ell={ell} should give {ell + 1} matrices"
        assert count_sparsest(g) == ell + 1
        no_edge = two_node_graph(ell, edge=False)
        assert count_compatible(no_edge) == 1, "Without the edge no latent shares the descendants of X0"
        assert count_sparsest(no_edge) == 1
    print("✓ Two-node family counts")


def test_sibling_and_confounder_sets():
    """Siblings share a parent; confounders reach both nodes by disjoint paths"""
    g = reference_graph("chain_two_latents")
    assert sib_set(g, 1) == {0}, "X1 shares L0 with X0"
    assert sib_set(g, 2) == {0}

    two = reference_graph("two_node")
    assert conf_set(two, 0, 1) == {2}, "The latent (node 2) confounds X0 and X1"

    fork = reference_graph("fork_two_latents")
    assert conf_set(fork, 1, 2) == {0, 3, 4}, "X0 and both latents confound X1 and X2"
    with pytest.raises(InvalidArgumentError):
        conf_set(fork, 1, 1)
    print("✓ Sibling and confounder sets")


def test_swap_params_matches_column_swap():
    """Closed-form swap equals exchanging the noise and latent columns of B"""
    lam, g1 = 0.6, 0.7
    params = _two_node_params(lam, 1.0, g1)
    swapped = swap_params(params, 0, 0)
    B_swapped = path_matrix(swapped)
    B = path_matrix(params)
    assert np.allclose(B_swapped.values, B.swapped(0, 0).values), "Swap should exchange columns 0 and L0"
    assert np.isclose(swapped.lam[1, 0], lam + g1)
    assert np.allclose(swapped.gamma[:, 0], [1.0, -g1])

    with pytest.raises(InvalidSwapError):
        swap_params(params, 1, 0)
    with pytest.raises(InvalidSwapError):
        swap_params(_two_node_params(lam, 0.5, g1), 0, 0)
    print("✓ Closed-form swap")


def test_enumerate_compatible():
    """Enumeration yields n_G matrices, starting with the input"""
    g = reference_graph("chain_two_latents")
    params = ParamSet(
        np.array([[0.0, 0.0, 0.0], [0.7, 0.0, 0.0], [0.0, -0.6, 0.0]]),
        np.array([[1.0, 1.0], [0.8, 0.0], [0.0, 0.9]]),
    )
    B = path_matrix(params)
    candidates = enumerate_compatible(B, g)
    assert len(candidates) == count_compatible(g) == 3
    assert np.allclose(candidates[0].values, B.values), "First candidate is B itself"

    for candidate in candidates[1:]:
        recovered = recover_params(candidate)
        assert np.allclose(path_matrix(recovered).values, candidate.values), "Candidates are valid path matrices"

    with pytest.raises(InvalidArgumentError):
        enumerate_compatible(PathMatrix(np.eye(3)), g)
    print("✓ Enumeration of compatible matrices")


def test_support_flags():
    """Each compatible matrix is flagged by whether it keeps the support"""
    assert support_preserving(reference_graph("two_node")) == [True, True]
    assert support_preserving(reference_graph("b")) == [True, False], "Swap at X1 adds X0 -> X2"
    assert support_preserving(reference_graph("chain_two_latents")) == [True, False, False]
    chain = graph_from_edges(3, [(0, 1), (1, 2)], [])
    assert swap_choices(chain) == [(None, None, None)] and support_preserving(chain) == [True]
    print("✓ Support flags")


def test_sparsest_count_matches_brute_force():
    """Support-preserving candidates found numerically match count_sparsest on random graphs"""
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(50):
        p = int(rng.integers(2, 6))
        g = random_latent_dag(p, int(rng.integers(0, 4)), rng)
        _, params = sample_model(g, rng, permute=False)
        candidates = enumerate_compatible(path_matrix(params), g)
        assert len(candidates) == count_compatible(g)
        kept = [infer_graph(candidate, 1e-8) == g for candidate in candidates]
        assert kept == support_preserving(g), f"Support flags differ on {sorted(g.observed_edges)}"
        assert sum(kept) == count_sparsest(g), f"count_sparsest off on {sorted(g.observed_edges)}"
        checked += len(candidates)
    print(f"✓ {checked} candidates checked against count_sparsest")


def test_normalize_params():
    """Latent edge to the oldest child becomes 1"""
    params = _two_node_params(0.6, 0.5, 0.7)
    normalized, factors = normalize_params(params)
    assert np.allclose(normalized.gamma[:, 0], [1.0, 1.4])
    assert np.allclose(factors, [0.5])
    print("✓ Latent normalization")


def test_path_matrix_helpers():
    """Column normalization and shape checks"""
    B = PathMatrix(np.array([[1.0, 0.0, -2.0], [0.5, 1.0, 1.0]]))
    normalized = B.column_normalized()
    assert np.allclose(normalized[:, 2], [1.0, -0.5]), "Divide by the largest-magnitude entry"
    with pytest.raises(InvalidArgumentError):
        PathMatrix(np.ones((3, 2)))
    assert isinstance(reference_graph("a"), LatentDag)
    print("✓ Path matrix helpers")


def run_all_tests():
    """Run all tests"""
    print("=" * 70)
    print("CAUSAL-PINPOINTER GRAPH MODEL TESTS")
    print("=" * 70)
    print()

    tests = [
        ("Path Matrix", test_path_matrix),
        ("Graph Validation", test_latent_dag_validation),
        ("Exog And Counts", test_exog_and_counts),
        ("Two-Node Family", test_two_node_family_counts),
        ("Sibling And Confounder Sets", test_sibling_and_confounder_sets),
        ("Closed-Form Swap", test_swap_params_matches_column_swap),
        ("Enumerate Compatible", test_enumerate_compatible),
        ("Support Flags", test_support_flags),
        ("Sparsest Brute Force", test_sparsest_count_matches_brute_force),
        ("Normalize Params", test_normalize_params),
        ("Path Matrix Helpers", test_path_matrix_helpers),
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
