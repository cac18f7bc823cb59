import numpy as np
import pytest

from hiercon.errors import DomainError, InvalidSpecError, StructuralError
from hiercon.hierarchy import (
    GroupSpec, HierarchySpec, LayerSpec, assemble, block_structure_check, fig1,
    group_laplacian, numeric_rank, physical_numbers, physical_weights_all, validate,
)
from conftest import FIG1_A, random_specs

RANDOM = random_specs(100)


def single_layer(size=3, edges=((0, 1), (1, 2)), weights=(1.0, 2.0, 3.0)):
    return HierarchySpec((LayerSpec((GroupSpec(size, edges),)),), weights)


# validate

def test_fig1_is_valid():
    assert validate(fig1()) == []


def test_disconnected_group_reported():
    spec = fig1()
    layer1 = LayerSpec((GroupSpec(3),) + spec.layers[0].groups[1:])
    bad = HierarchySpec((layer1,) + spec.layers[1:], spec.physical_weights)
    msgs = [(v.layer, v.group, v.message) for v in validate(bad)]
    assert (1, 1, "group disconnected") in msgs


def test_collecting_sum_reported():
    layer1 = LayerSpec((GroupSpec(2, ((0, 1),)),), collecting=((0.5, 0.6),))
    top = LayerSpec((GroupSpec(1),))
    spec = HierarchySpec((layer1, top), (1.0, 1.0), (0.0,))
    assert any("collecting row sums to 1.1" in str(v) for v in validate(spec))


def test_validate_collects_every_violation():
    layer1 = LayerSpec((GroupSpec(3), GroupSpec(2, ((0, 0),))), collecting=((1.0, 0.0, 0.0), (-0.5, 1.5)))
    top = LayerSpec((GroupSpec(2, ((0, 1),)),))
    spec = HierarchySpec((layer1, top), (1.0, 1.0, 1.0, 1.0), (0.1,))
    vs = validate(spec)
    assert len(vs) >= 4  # disconnected, self-loop, negative entry, weight count
    assert all(v.layer is not None or v.field for v in vs)


def test_chain_mismatch_reported():
    layer1 = LayerSpec((GroupSpec(1), GroupSpec(1)))
    top = LayerSpec((GroupSpec(3, ((0, 1), (1, 2))),))
    assert validate(HierarchySpec((layer1, top), (1.0, 1.0), (0.0,)))


def test_top_layer_must_be_single_group():
    layer = LayerSpec((GroupSpec(1), GroupSpec(1)))
    assert validate(HierarchySpec((layer,), (1.0, 1.0)))


def test_negative_delay_and_weight_reported():
    spec = fig1(hop_delays=(-1.0, 0.0), physical_weights=(0.8, -0.7, 1.5, 1.0, 0.8, 1.2))
    fields = {v.field for v in validate(spec)}
    assert {"hop_delays", "physical_weights"} <= fields


def test_assemble_rejects_invalid():
    with pytest.raises(InvalidSpecError):
        assemble(single_layer(edges=()))


# group_laplacian

@pytest.mark.parametrize("g, expected", [
    (GroupSpec(2, ((0, 1),)), [[1, -1], [-1, 1]]),
    (GroupSpec(1), [[0]]),
    (GroupSpec(3, ((0, 1), (1, 2))), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]),
])
def test_group_laplacian_examples(g, expected):
    np.testing.assert_array_equal(group_laplacian(g), expected)


def test_group_laplacian_weighted():
    L = group_laplacian(GroupSpec(3, ((0, 1), (0, 2)), (2.0, 0.5)))
    np.testing.assert_allclose(L, [[2.5, -2, -0.5], [-2, 2, 0], [-0.5, 0, 0.5]])


def test_group_laplacian_out_of_range():
    with pytest.raises(StructuralError):
        group_laplacian(GroupSpec(2, ((0, 2),)))


# physical numbers and weights

def test_fig1_physical_numbers():
    n = physical_numbers(fig1())
    assert list(n[0]) == [1] * 6
    assert list(n[1]) == [3, 1, 2]
    assert list(n[2]) == [4, 2]


def test_single_layer_physical_numbers():
    assert list(physical_numbers(single_layer())[0]) == [1, 1, 1]


def _tree_leaves(spec):
    """Oracle: build the spanning tree explicitly and count leaves by walking it."""
    children = {}
    for l, layer in enumerate(spec.layers[:-1]):
        idx = 0
        for p, k in enumerate(g.size for g in layer.groups):
            children[(l + 1, p)] = [(l, idx + q) for q in range(k)]
            idx += k
    def leaves(node):
        l, p = node
        if l == 0:
            return 1
        return sum(leaves(c) for c in children[node])
    return [[leaves((l, p)) for p in range(n)] for l, n in enumerate(spec.node_counts())]


@pytest.mark.parametrize("k", range(0, 100, 7))
def test_physical_numbers_match_tree_walk(k):
    spec = RANDOM[k]
    got = [list(v) for v in physical_numbers(spec)]
    assert got == _tree_leaves(spec)
    assert sum(got[-1]) == spec.n_physical


def test_fig1_physical_weights():
    a = physical_weights_all(fig1())
    np.testing.assert_allclose(a[0], FIG1_A)
    np.testing.assert_allclose(a[1], [3.0, 1.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(a[2], [4.0, 2.0], atol=1e-15)


def test_unit_weights_equal_physical_numbers():
    spec = fig1(physical_weights=(1.0,) * 6)
    for a, n in zip(physical_weights_all(spec), physical_numbers(spec)):
        np.testing.assert_array_equal(a, n)


def test_single_layer_weights_unchanged():
    a = physical_weights_all(single_layer())
    assert len(a) == 1 and list(a[0]) == [1.0, 2.0, 3.0]


def test_nonpositive_weight_is_domain_error():
    with pytest.raises(DomainError):
        physical_weights_all(fig1(physical_weights=(0.8, 0.0, 1.5, 1.0, 0.8, 1.2)))


# assemble

def test_fig1_ranks(fig1_m):
    ranks = [numeric_rank(E) for E in fig1_m.effective]
    assert ranks == [3, 1, 1]
    assert sum(ranks) == fig1_m.N - 1


def test_single_layer_assembly():
    spec = single_layer()
    m = assemble(spec)
    expected = np.diag([1.0, 1 / 2, 1 / 3]) @ group_laplacian(spec.layers[0].groups[0])
    np.testing.assert_allclose(m.total, expected, atol=1e-15)


def test_fig1_weighted_left_null(fig1_m):
    ones_K = np.ones(6) @ np.diag(FIG1_A)
    for E in fig1_m.effective:
        assert np.max(np.abs(ones_K @ E)) < 1e-12


def test_fig1_effective_layer2_by_hand(fig1_m):
    # layer 2 acts on the {1,2,3} and {4} blocks: K2 L_D2 = [[1/3, -1/3], [-1, 1]]
    B = np.zeros((6, 3)); B[0:3, 0] = 1; B[3, 1] = 1; B[4:6, 2] = 1
    C = np.zeros((3, 6)); C[0, 0:3] = [0.8 / 3, 0.7 / 3, 1.5 / 3]; C[1, 3] = 1; C[2, 4:6] = [0.4, 0.6]
    Le = np.array([[1 / 3, -1 / 3, 0], [-1, 1, 0], [0, 0, 0]])
    np.testing.assert_allclose(fig1_m.effective[1], B @ Le @ C, atol=1e-15)


def _check_invariants(m):
    K = m.K
    ones = np.ones(m.N)
    assert np.max(np.abs(m.total @ ones)) < 1e-12
    for E in m.effective:
        assert np.max(np.abs(ones @ K @ E)) < 1e-12
    for LD in m.laplacians:
        assert np.max(np.abs(LD.sum(axis=1))) < 1e-12
        assert np.all(np.diag(LD) >= 0)
        off = LD - np.diag(np.diag(LD))
        assert np.all(off <= 0)
    for l in range(1, m.M):
        CB = m.collect_chain(l) @ m.broadcast_chain(l)
        np.testing.assert_allclose(CB, np.eye(CB.shape[0]), atol=1e-12, rtol=0)


def test_invariants_fig1(fig1_m):
    _check_invariants(fig1_m)


@pytest.mark.parametrize("k", range(100))
def test_invariants_random(k):
    m = assemble(RANDOM[k])
    _check_invariants(m)
    assert sum(numeric_rank(E) for E in m.effective) == m.N - 1


# block structure

def test_block_check_fig1(fig1_m):
    assert block_structure_check(fig1_m).ok


def test_block_check_catches_corruption():
    m = assemble(fig1())
    m.effective[1] = m.effective[1].copy()
    m.effective[1][1, 3] += 1e-6
    report = block_structure_check(m)
    assert not report.ok
    layers = {v[0] for v in report.violations}
    assert layers == {2}
    assert any(v[1] == "rows-differ" and v[2] == (1, 2) for v in report.violations)


def test_block_check_single_layer():
    assert block_structure_check(assemble(single_layer())).ok


@pytest.mark.parametrize("k", range(0, 100, 5))
def test_block_check_random(k):
    assert block_structure_check(assemble(RANDOM[k])).ok
