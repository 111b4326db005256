"""Hypothesis strategies shared by the test modules."""

from fractions import Fraction

from hypothesis import strategies as st

from nn_costmodel.model import (
    BitwidthConfig,
    Conv1DSpec,
    DenseSpec,
    ESNSpec,
    LayerSpec,
    QuantScheme,
    RecurrentKind,
    RecurrentSpec,
)

dims = st.integers(min_value=1, max_value=8)
bit_choices = st.sampled_from([2, 4, 8])


@st.composite
def bitwidths(draw, bits=bit_choices):
    b_w, b_i, b_a = draw(bits), draw(bits), draw(bits)
    return BitwidthConfig(b_w, b_i, b_a, draw(st.integers(1, b_w + b_i)))


@st.composite
def schemes(draw, b_w):
    options = [QuantScheme.uniform(), QuantScheme.pot()]
    if b_w >= 3:
        options.append(QuantScheme.apot(draw(st.integers(1, b_w - 2))))
    return draw(st.sampled_from(options))


@st.composite
def dense_shapes(draw, d=dims):
    return DenseSpec(draw(d), draw(d))


@st.composite
def conv_shapes(draw, d=dims):
    n_k = draw(d)
    n_s = draw(st.integers(n_k, max(n_k, 8)))
    return Conv1DSpec(draw(d), draw(d), n_k, n_s)


@st.composite
def recurrent_shapes(draw, d=dims, cells=st.sampled_from(list(RecurrentKind))):
    return RecurrentSpec(draw(cells), draw(d), draw(d), draw(d))


@st.composite
def esn_shapes(draw, d=dims, exact_mask=False):
    n_r = draw(d)
    if exact_mask:
        s_p = Fraction(draw(st.integers(0, n_r * n_r)), n_r * n_r)
    else:
        s_p = Fraction(draw(st.integers(0, 20)), 20)
    return ESNSpec(n_r, draw(d), draw(d), draw(d), s_p)


def shapes(d=dims, exact_mask=False):
    return st.one_of(dense_shapes(d), conv_shapes(d), recurrent_shapes(d),
                     esn_shapes(d, exact_mask=exact_mask))


@st.composite
def layers(draw, d=dims, bits=bit_choices, exact_mask=False):
    b = draw(bitwidths(bits))
    return LayerSpec("l", draw(shapes(d, exact_mask)), b, draw(schemes(b.b_w)))
