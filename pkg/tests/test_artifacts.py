import json

import numpy as np
import pytest

from ltcsnn.ann import build_network
from ltcsnn.artifacts import (file_digest, load_ann, load_snn, read_csv, save_ann, save_snn,
                              write_csv, write_json)
from ltcsnn.coding import ExponentRange, LaVariant
from ltcsnn.converter import convert
from ltcsnn.errors import ConfigError
from ltcsnn.runtime import run_batch


def make_net():
    return build_network("3C3s1p1-P2-F5", (1, 6, 6), hidden_range=ExponentRange(-7, -4),
                         output_range=ExponentRange(-3, 4), input_range=ExponentRange(-7, 0),
                         hidden_variant=LaVariant.SINGLE, seed=2)


def test_ann_roundtrip_is_bit_exact(tmp_path):
    net = make_net()
    net.ops[0].weight[0, 0, 0, 0] = np.nextafter(0.1, 1)  # survives without decimal rounding
    save_ann(net, tmp_path / "m", extra={"config": {"seed": 2}})
    back = load_ann(tmp_path / "m")
    for a, b in zip(net.ops, back.ops):
        assert a.kind == b.kind and a.out_shape == b.out_shape
        assert a.weight.tobytes() == b.weight.tobytes()
    assert back.ranges == net.ranges and back.variants == net.variants
    assert back.input_range == net.input_range and back.mode == net.mode
    assert json.loads((tmp_path / "m" / "manifest.json").read_text())["config"] == {"seed": 2}


def test_snn_roundtrip_runs_identically(tmp_path):
    snn = convert(make_net())
    save_snn(snn, tmp_path / "s")
    back = load_snn(tmp_path / "s")
    x = np.random.default_rng(0).uniform(0, 1, (4, 1, 6, 6))
    np.testing.assert_array_equal(run_batch(snn, x).output_raster, run_batch(back, x).output_raster)
    assert [l.cfg for l in back.layers] == [l.cfg for l in snn.layers]


def test_wrong_or_missing_bundle(tmp_path):
    save_ann(make_net(), tmp_path / "m")
    with pytest.raises(ConfigError):
        load_snn(tmp_path / "m")
    with pytest.raises(FileNotFoundError):
        load_ann(tmp_path / "nothing")


def test_csv_and_json_helpers(tmp_path):
    write_csv(tmp_path / "a.csv", ("x", "y"), [(1, 2.5), (3, 4.0)], {"seed": 7})
    meta, rows = read_csv(tmp_path / "a.csv")
    assert meta == {"seed": "7"} and rows == [{"x": "1", "y": "2.5"}, {"x": "3", "y": "4.0"}]
    write_csv(tmp_path / "b.csv", ("x", "y"), [(1, 2.5), (3, 4.0)], {"seed": 7})
    assert file_digest(tmp_path / "a.csv") == file_digest(tmp_path / "b.csv")
    write_json(tmp_path / "c.json", {"n": np.int64(3), "r": ExponentRange(-3, 4), "a": np.arange(2)})
    assert json.loads((tmp_path / "c.json").read_text()) == {"n": 3, "r": "-3..4", "a": [0, 1]}
