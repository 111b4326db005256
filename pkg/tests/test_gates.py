import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from strategies import layers

from nn_costmodel import metrics
from nn_costmodel.gates import (
    CLB_TABLES,
    LUT4_TABLE,
    LUT6_TABLE,
    REFERENCE_27X18,
    GateCount,
    GateError,
    adder_gates,
    clb_estimate,
    layer_nlg,
    multiplier_gates,
    operations,
    parse_clb_table,
)
from nn_costmodel.model import (
    BitwidthConfig,
    DenseSpec,
    InvariantViolation,
    LayerSpec,
    QuantScheme,
    SpecSyntaxError,
)

B8 = BitwidthConfig.uniform(8)


def test_worked_27x18_multiplier():
    g = multiplier_gates(27, 18)
    assert (g.and_gates, g.half_adders, g.full_adders) == (486, 18, 450)
    assert (g.and_gates, g.half_adders, g.full_adders) == (
        REFERENCE_27X18.and_gates, REFERENCE_27X18.half_adders, REFERENCE_27X18.full_adders)


def test_smallest_multiplier():
    g = multiplier_gates(2, 1)
    assert (g.and_gates, g.half_adders, g.full_adders) == (2, 1, 0)
    with pytest.raises(GateError):
        multiplier_gates(1, 1)


def test_8x8_expansion():
    g = multiplier_gates(8, 8)
    assert (g.and_gates, g.half_adders, g.full_adders) == (64, 8, 48)
    assert g.total_gates == 64 + 8 * 2 + 48 * 5 == 320
    assert g.expanded() == {"and": 64 + 8 + 96, "xor": 8 + 96, "or": 48}
    assert sum(g.expanded().values()) == g.total_gates


def test_pipeline_registers():
    assert multiplier_gates(8, 8, pipeline_depth=2).flip_flops == 32
    assert multiplier_gates(8, 8, pipeline_depth=2).total_gates == 320


@pytest.mark.parametrize("width, fa", [(1, 0), (16, 15), (26, 25)])
def test_ripple_adder(width, fa):
    assert adder_gates(width) == GateCount(half_adders=1, full_adders=fa)


@given(st.integers(2, 64), st.integers(1, 64))
def test_multiplier_cell_counts(m, n):
    g = multiplier_gates(m, n)
    assert g.and_gates == m * n
    assert g.half_adders + g.full_adders == (m - 1) * n


def test_dense_nlg_compositions():
    one = LayerSpec("d", DenseSpec(1, 1), B8)
    assert layer_nlg(one) == multiplier_gates(8, 8) + adder_gates(16)
    pot = LayerSpec("d", DenseSpec(2, 1), B8, QuantScheme.pot())
    assert layer_nlg(pot) == adder_gates(17) + adder_gates(17)


def _pot_uniform(n_i, n_n):
    uniform = LayerSpec("d", DenseSpec(n_i, n_n), B8)
    return layer_nlg(uniform.with_quant(QuantScheme.pot())).total_gates, layer_nlg(uniform).total_gates


@given(st.integers(1, 32), st.integers(1, 64))
def test_pot_dense_under_a_quarter_of_uniform(n_i, n_n):
    # per product: PoT 5*acc - 3 gates against 320 + 5*acc - 3, so the bound needs acc <= 21
    pot, uniform = _pot_uniform(n_i, n_n)
    assert 4 * pot < uniform


def test_quarter_bound_ends_when_adders_dominate():
    pot, uniform = _pot_uniform(33, 1)
    assert 4 * pot >= uniform


@given(layers())
def test_inventory_matches_rm(layer):
    ops = operations(layer)
    counted = sum(ops.weight_multiplies.values()) + sum(ops.ew_multiplies.values())
    assert counted == metrics.rm(layer)


@given(layers())
def test_scheme_ordering_of_gates(layer):
    b_w = layer.bits.b_w
    pot = layer_nlg(layer, QuantScheme.pot()).total_gates
    uniform = layer_nlg(layer, QuantScheme.uniform()).total_gates
    assert pot <= uniform
    if b_w >= 3:
        assert pot <= layer_nlg(layer, QuantScheme.apot(1)).total_gates


def test_tables_are_consistent():
    for table in CLB_TABLES.values():
        assert table.total_min == sum(r.per_clb * r.min_gates for r in table.rows)
        assert table.total_max == sum(r.per_clb * r.max_gates for r in table.rows)
    assert (LUT4_TABLE.total_min, LUT4_TABLE.total_max) == (15, 48)
    assert (LUT6_TABLE.total_min, LUT6_TABLE.total_max) == (144, 312)


def test_clb_estimates():
    assert clb_estimate(GateCount(and_gates=2850), LUT4_TABLE).typical_clbs == 100
    six = clb_estimate(GateCount(and_gates=312), LUT6_TABLE)
    assert (six.min_clbs, six.max_clbs, six.typical_clbs) == (1, 3, None)
    zero = clb_estimate(GateCount(), LUT4_TABLE)
    assert (zero.min_clbs, zero.max_clbs, zero.typical_clbs) == (0, 0, 0)


@given(st.integers(0, 10 ** 6))
def test_clb_range_brackets_typical(gates):
    est = clb_estimate(GateCount(and_gates=gates), LUT4_TABLE)
    assert est.min_clbs <= est.typical_clbs <= est.max_clbs


CUSTOM = """
clb_table "mine" {
    era = lut6; total_min = 144; total_max = 312; typical = 228;
    resource "6-input LUT" { per_clb = 8; min = 6; max = 15; }
    resource "flip-flop" { per_clb = 16; min = 6; max = 12; }
}
"""


def test_custom_table_block_and_json():
    table = parse_clb_table(CUSTOM)
    assert table.era == "lut6"
    assert table.rows == LUT6_TABLE.rows
    assert table.typical_gates_per_clb == 228
    data = {"clb_table": {"era": "lut6", "total_min": 144, "total_max": 312, "typical": 228,
                          "resources": [{"name": r.resource, "per_clb": r.per_clb,
                                         "min": r.min_gates, "max": r.max_gates}
                                        for r in LUT6_TABLE.rows]}}
    assert parse_clb_table(json.dumps(data)) == table
    assert parse_clb_table(CUSTOM.replace("228", "28.5")).typical_gates_per_clb == Fraction(57, 2)


def test_bad_tables():
    with pytest.raises(InvariantViolation):
        parse_clb_table(CUSTOM.replace("total_min = 144", "total_min = 400"))
    with pytest.raises(SpecSyntaxError):
        parse_clb_table('model "m" { }')
