from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from strategies import bitwidths, layers, recurrent_shapes

from nn_costmodel import metrics
from nn_costmodel.metrics import (
    acc,
    analyze,
    bop,
    bop_conv1d,
    bop_dense,
    mult,
    nabs,
    nabs_conv1d,
    nabs_dense,
    rm,
    rm_conv1d,
    rm_dense,
    round_half_up,
)
from nn_costmodel.model import (
    BitwidthConfig,
    Conv1DSpec,
    DenseSpec,
    ESNSpec,
    InvariantViolation,
    LayerSpec,
    ModelSpec,
    QuantScheme,
    RecurrentKind,
    RecurrentSpec,
)

B8 = BitwidthConfig.uniform(8)
UNI, POT = QuantScheme.uniform(), QuantScheme.pot()


def rec(cell, n_i, n_h, n_s, bits=B8, quant=UNI):
    return LayerSpec(cell.value, RecurrentSpec(cell, n_i, n_h, n_s), bits, quant)


@pytest.mark.parametrize("args, expected", [((1000, 8, 8), 26), ((1, 8, 8), 16), ((2, 4, 4), 9)])
def test_acc(args, expected):
    assert acc(*args) == expected


@pytest.mark.parametrize("args, expected", [((1, 8, 8), 64), ((2, 8, 8), 145), ((1000, 8, 8), 89974)])
def test_mult(args, expected):
    assert mult(*args) == expected


def test_round_half_up():
    assert [round_half_up(Fraction(k, 2)) for k in range(5)] == [0, 1, 1, 2, 2]


class TestDense:
    def test_rm(self):
        assert rm_dense(DenseSpec(1500, 1500)) == 2_250_000
        assert rm_dense(DenseSpec(1, 1)) == 1
        assert rm_dense(DenseSpec(1000, 2000)) == 2_000_000

    def test_bop_table(self):
        assert bop_dense(DenseSpec(1000, 2000), B8) == 2000 * 1000 * (64 + 26) == 180_000_000

    def test_bop_exact(self):
        assert bop_dense(DenseSpec(1, 1), B8, "exact") == 80
        # n_n * (n_i*64 + (n_i - 1)*26) + n_n*26: the bias add fills the tree's missing addition
        assert bop_dense(DenseSpec(1000, 2000), B8, "exact") == 2000 * (89974 + 26) == 180_000_000

    def test_bop_modes_agree(self):
        b = BitwidthConfig(4, 2, 8, 4)
        s = DenseSpec(7, 3)
        assert bop_dense(s, b, "table") == bop_dense(s, b, "exact")
        with pytest.raises(ValueError):
            bop_dense(s, b, "fast")

    def test_nabs(self):
        s = DenseSpec(1000, 2000)
        assert nabs_dense(s, B8, UNI) == 416_000_000
        assert nabs_dense(s, B8, POT) == 52_000_000
        assert nabs_dense(DenseSpec(1, 1), B8, POT) == 16


class TestConv:
    def test_rm(self):
        assert rm_conv1d(Conv1DSpec(n_i=100, n_f=1, n_k=150, n_s=275)) == 1_890_000
        assert rm_conv1d(Conv1DSpec(1, 1, 1, 1)) == 1
        assert rm_conv1d(Conv1DSpec(n_i=100, n_f=1, n_k=100, n_s=300)) == 2_010_000

    def test_bop(self):
        assert bop_conv1d(Conv1DSpec(1, 1, 1, 1), B8) == 80
        s = Conv1DSpec(n_i=100, n_f=1, n_k=100, n_s=300)
        assert mult(10000, 8, 8) == 10000 * 64 + 9999 * 30 == 939_970
        assert bop_conv1d(s, B8) == 201 * 939_970 + 30 == 188_933_970 + 30

    def test_nabs(self):
        s = Conv1DSpec(n_i=100, n_f=1, n_k=100, n_s=300)
        assert nabs_conv1d(s, B8, UNI) == 201 * (10000 * 8 - 1) * 30 + 30

    def test_unavailable_output(self):
        with pytest.raises(InvariantViolation):
            Conv1DSpec(n_i=100, n_f=1, n_k=100, n_s=50)


class TestRecurrent:
    def test_rm(self):
        assert rm(rec(RecurrentKind.RNN, 100, 100, 100)) == 2_000_000
        assert rm(rec(RecurrentKind.RNN, 1, 1, 1)) == 2
        assert rm(rec(RecurrentKind.LSTM, 100, 100, 100)) == 8_030_000
        assert rm(rec(RecurrentKind.LSTM, 1, 1, 1)) == 11
        assert rm(rec(RecurrentKind.GRU, 100, 100, 100)) == 6_030_000
        assert rm(rec(RecurrentKind.GRU, 1, 1, 1)) == 9

    def test_bop_single_unit(self):
        assert bop(rec(RecurrentKind.RNN, 1, 1, 1)) == 64 + 64 + 2 * 16 == 160
        assert bop(rec(RecurrentKind.LSTM, 1, 1, 1)) == 4 * 64 + 4 * 64 + 3 * 64 + 9 * 16 == 848

    def test_nabs_single_unit(self):
        # X_w = 0: the input term (n_i - 1) vanishes, the recurrent term keeps n_h + 1 adds
        assert nabs(rec(RecurrentKind.RNN, 1, 1, 1, quant=POT)) == 2 * 16
        assert nabs(rec(RecurrentKind.LSTM, 1, 1, 1, quant=POT)) == 4 * 2 * 16 + 6 * 8

    @given(recurrent_shapes(), bitwidths())
    def test_gru_cheaper_than_lstm(self, shape, b):
        lstm = LayerSpec("l", RecurrentSpec(RecurrentKind.LSTM, shape.n_i, shape.n_h, shape.n_s), b)
        gru = LayerSpec("g", RecurrentSpec(RecurrentKind.GRU, shape.n_i, shape.n_h, shape.n_s), b)
        assert rm(gru) < rm(lstm)
        assert bop(gru) < bop(lstm)
        assert nabs(gru) < nabs(lstm)

    def test_wrong_cell_rejected(self):
        with pytest.raises(ValueError):
            metrics.rm_lstm(RecurrentSpec(RecurrentKind.GRU, 1, 1, 1))


class TestESN:
    FIXTURE = ESNSpec(n_r=100, n_i=100, n_o=100, n_s=100, s_p=Fraction(1, 2))

    def test_rm(self):
        assert metrics.rm_esn(self.FIXTURE) == 100 * 100 * (100 + 50 + 2 + 100) == 2_520_000

    def test_no_reservoir_multiplies_at_zero_density(self):
        s = ESNSpec(n_r=7, n_i=3, n_o=2, n_s=5, s_p=0)
        assert metrics.rm_esn(s) == 5 * 7 * (3 + 2 + 2)

    def test_rounds_once_per_layer(self):
        s = ESNSpec(n_r=3, n_i=1, n_o=1, n_s=1, s_p=Fraction(1, 2))
        # 3 * (1 + 1.5 + 2 + 1) = 16.5 -> 17
        assert metrics.rm_esn(s) == 17

    def test_ordering_at_fixture(self):
        esn = LayerSpec("e", self.FIXTURE, B8)
        rnn, gru, lstm = (rec(c, 100, 100, 100) for c in
                          (RecurrentKind.RNN, RecurrentKind.GRU, RecurrentKind.LSTM))
        for f in (rm, bop, nabs):
            assert f(rnn) < f(esn) < f(gru) < f(lstm)


def _scaled_time(layer, k):
    s = layer.shape
    if isinstance(s, DenseSpec):
        return None
    fields = {name: getattr(s, name) for name in s.__dataclass_fields__}
    fields["n_s"] = s.n_s * k
    if isinstance(s, Conv1DSpec):
        return None  # output size is affine, not linear, in n_s
    return LayerSpec(layer.name, type(s)(**fields), layer.bits, layer.quant)


@given(layers(), st.integers(2, 4))
def test_recurrent_metrics_linear_in_time_steps(layer, k):
    scaled = _scaled_time(layer, k)
    if scaled is None or isinstance(layer.shape, ESNSpec):
        return
    for f in (rm, bop, nabs):
        assert f(scaled) == k * f(layer)


@given(layers())
def test_metrics_are_nonnegative_ints(layer):
    for value in (rm(layer), bop(layer), bop(layer, "exact"), nabs(layer)):
        assert type(value) is int and value >= 0


@given(layers())
def test_nabs_scheme_ordering(layer):
    b_w = layer.bits.b_w
    pot, uniform = nabs(layer, POT), nabs(layer, UNI)
    assert pot <= uniform
    for n in range(1, b_w - 1):
        assert pot <= nabs(layer, QuantScheme.apot(n)) <= uniform


@given(layers(), st.sampled_from(["b_w", "b_i", "b_a"]))
def test_bop_monotone_in_bitwidths(layer, which):
    wider = LayerSpec(layer.name, layer.shape, layer.bits.replace(**{which: getattr(layer.bits, which) + 1}),
                      layer.quant)
    assert bop(wider) >= bop(layer)


@given(layers())
def test_nabs_affine_in_adders(layer):
    b_w = layer.bits.b_w
    if b_w < 3:
        return
    values = [nabs(layer, QuantScheme.for_adders(x, b_w)) for x in range(b_w)]
    steps = {b - a for a, b in zip(values, values[1:])}
    if isinstance(layer.shape, ESNSpec):
        assert max(steps) - min(steps) <= 1  # rounding once per layer
    else:
        assert len(steps) == 1


def test_dense_uniform_to_pot_ratio_is_exactly_eight():
    layer = LayerSpec("d", DenseSpec(1000, 2000), B8)
    assert nabs(layer, UNI) == 8 * nabs(layer, POT)


def test_analyze_totals():
    model = ModelSpec("m", (
        LayerSpec("d", DenseSpec(1000, 2000), B8),
        rec(RecurrentKind.LSTM, 100, 100, 100),
        LayerSpec("c", Conv1DSpec(n_i=100, n_f=1, n_k=100, n_s=300), B8),
    ))
    report = analyze(model)
    assert [m.rm for m in report.per_layer] == [2_000_000, 8_030_000, 2_010_000]
    assert report.totals["rm"] == 12_040_000
    assert report.totals["bop"] == sum(m.bop for m in report.per_layer)
    assert report.to_dict()["totals"] == report.totals


def test_analyze_bop_mode():
    layer = LayerSpec("d", DenseSpec(2, 2), B8)
    report = analyze(ModelSpec("m", (layer,)), "exact")
    assert report.bop_mode == "exact"
    with pytest.raises(ValueError):
        analyze(ModelSpec("m", (layer,)), "rough")
