import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arksim.footprint import (
    COMMITMENT_SHAPE,
    DEFAULT_MODEL,
    LEAF_SHAPE,
    NODE_SHAPE,
    TxShape,
    calibrate,
    cost_table,
    cost_table_csv,
    exit_cost,
    exit_depth,
    exit_vbytes,
    vbytes,
)


def test_calibration_solves_reference_shapes():
    model = calibrate()
    assert vbytes(COMMITMENT_SHAPE, model) == 197
    assert vbytes(NODE_SHAPE, model) == 150
    assert vbytes(LEAF_SHAPE, model) == 107


def test_calibrated_component_sizes():
    # independently derived from the three shape equations:
    #   overhead + k*57.5 + s*40.5 + o*43 + a*13
    model = calibrate()
    assert model.tx_overhead == Fraction(21, 2)
    assert model.vb_per_keypath_input == Fraction(115, 2)
    assert model.vb_per_scriptpath_input == Fraction(81, 2)
    assert model.vb_per_p2tr_output == Fraction(43)
    assert model.vb_per_anchor_output == Fraction(13)


def test_default_model_matches_calibration():
    assert DEFAULT_MODEL == calibrate()


def test_vbytes_requires_an_input():
    with pytest.raises(Exception):
        vbytes(TxShape(0, 0, 1, 0))


def test_exit_depth():
    assert exit_depth(1) == 0
    assert exit_depth(2) == 1
    assert exit_depth(128) == 7
    assert exit_depth(1024) == 10


def test_exit_cost_reference_point():
    assert exit_cost(128, 6) == 6942


def test_exit_vbytes_formula():
    for n in (1, 2, 4, 64, 1024):
        assert exit_vbytes(n) == exit_depth(n) * 150 + 107


def test_cost_table_row_128():
    rows = {r["n"]: r for r in cost_table([2 ** i for i in range(11)], 6)}
    assert rows[128] == {"n": 128, "depth": 7, "vbytes": 1157, "sats": 6942}


def test_cost_table_csv_format():
    text = cost_table_csv([128], 6)
    assert text == "n,depth,vbytes,sats\n128,7,1157,6942\n"


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=4096), st.integers(min_value=0, max_value=50))
def test_property_cost_monotone_in_fee_rate(n, fr):
    assert exit_cost(n, fr + 1) >= exit_cost(n, fr)
    assert exit_cost(n, fr) == fr * exit_vbytes(n)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=2047))
def test_property_depth_is_ceil_log2(n):
    assert exit_depth(n) == (0 if n == 1 else math.ceil(math.log2(n)))
