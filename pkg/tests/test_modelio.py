import numpy as np
import pytest

from diattack.cstr import CstrParams
from diattack.errors import ParseError, ValidationError
from diattack.modelio import (
    dumps_model,
    linear_model,
    load_model,
    model_from_manifest,
    parse_model,
    run_manifest,
    save_model,
)

LINEAR = """
kind = "linear"
A = [[0.5, 0.1], [0.0, 0.3]]
B = [[1.0], [0.5]]
C = [[1.0, 0.0], [0.0, 1.0]]
Sigma_dd = [[0.1, 0.0], [0.0, 0.1]]
Sigma_nn = [[0.2, 0.0], [0.0, 0.2]]

[gains]
Q_lqr = [[1.0, 0.0], [0.0, 1.0]]
R_lqr = [[1.0]]
"""


class TestLoad:
    def test_builtin_alias(self):
        model = load_model("cstr-table1")
        assert model.kind == "cstr"
        assert model.description["params"] == {k: float(v) for k, v in CstrParams().__dict__.items()}
        assert model.plant.n == 4 and model.plant.m == 4

    def test_linear_synthesized(self):
        model = parse_model(LINEAR)
        assert model.closed_loop.K.shape == (1, 2)
        assert model.unit_groups == {}

    def test_sigma_nn_not_psd(self):
        text = LINEAR.replace("Sigma_nn = [[0.2, 0.0], [0.0, 0.2]]", "Sigma_nn = [[0.2, 0.0], [0.0, -0.2]]")
        with pytest.raises(ValidationError, match="Sigma_nn not PSD"):
            parse_model(text)

    def test_parse_error_has_line(self):
        with pytest.raises(ParseError) as info:
            parse_model('kind = "linear"\nA = [[1.0, \n')
        assert info.value.line is not None

    def test_missing_field(self):
        with pytest.raises(ParseError) as info:
            parse_model(LINEAR.replace("A = [[0.5, 0.1], [0.0, 0.3]]\n", ""))
        assert info.value.field == "A"

    def test_ragged_matrix(self):
        with pytest.raises(ParseError):
            parse_model(LINEAR.replace("[[0.5, 0.1], [0.0, 0.3]]", "[[0.5, 0.1], [0.0]]"))

    def test_unknown_kind(self):
        with pytest.raises(ParseError):
            parse_model('kind = "quantum"\n')

    def test_unknown_cstr_field(self):
        with pytest.raises(ParseError):
            parse_model('kind = "cstr"\n[params]\nwarp = 9\n')

    def test_cstr_override(self):
        model = parse_model('kind = "cstr"\ndt = 0.005\n[params]\nF10 = 5\n')
        assert model.description["dt"] == 0.005

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_model(tmp_path / "nope.toml")


class TestRoundTrip:
    def test_linear_bit_identical(self, tmp_path, rng):
        base = parse_model(LINEAR)
        model = linear_model(base.plant, base.closed_loop.K, base.closed_loop.L)
        path = tmp_path / "m.toml"
        save_model(model, path)
        again = load_model(path)
        for name in ("A", "B", "C", "Sigma_dd", "Sigma_nn"):
            assert np.array_equal(getattr(again.plant, name), getattr(model.plant, name))
        assert np.array_equal(again.closed_loop.K, model.closed_loop.K)
        assert np.array_equal(again.closed_loop.L, model.closed_loop.L)
        assert dumps_model(again) == dumps_model(model)
        assert again.model_hash == model.model_hash

    def test_cstr_round_trip(self, tmp_path, cstr_model):
        path = tmp_path / "c.toml"
        save_model(cstr_model, path)
        again = load_model(path)
        assert again.model_hash == cstr_model.model_hash
        assert np.array_equal(again.closed_loop.F, cstr_model.closed_loop.F)

    def test_manifest_rebuilds(self, cstr_model):
        manifest = run_manifest(cstr_model, seed=3)
        assert manifest["dt"] == 0.01 and manifest["seed"] == 3
        assert model_from_manifest(manifest).model_hash == cstr_model.model_hash
