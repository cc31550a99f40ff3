"""Model construction, validation, and JSON round-trip behavior."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csviu import (
    AnalysisConfig,
    CsviuModel,
    DimensionError,
    ParseError,
    SymMatrix,
    load_config,
    load_model,
    save_model,
    validate,
)
from csviu.model import as_weight

SCALAR_DOC = {
    "n": 1, "r": 1, "p": 1,
    "A": [[0.5]], "sigma_x": [[0.2]], "sigma_bar_x": [[0.3]],
    "sigma": [[0.1]], "C": [[1.0]],
}


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


class TestSymMatrix:
    def test_symmetrizes_by_averaging(self):
        M = SymMatrix([[1.0, 2.0], [0.0, 3.0]])
        assert np.allclose(np.asarray(M), [[1.0, 1.0], [1.0, 3.0]])
        assert np.array_equal(np.asarray(M), np.asarray(M).T)

    def test_psd_query_matches_min_eigenvalue(self):
        assert SymMatrix([[1.0, 0.0], [0.0, 2.0]]).is_psd()
        assert not SymMatrix([[1.0, 0.0], [0.0, -1.0]]).is_psd()
        # within the stated tolerance a tiny negative eigenvalue still counts
        assert SymMatrix([[-1e-12]]).is_psd(tol=1e-10)

    def test_positive_definite_is_strict(self):
        assert SymMatrix([[2.0]]).is_positive_definite()
        assert not SymMatrix([[0.0]]).is_positive_definite()

    def test_quad_form(self):
        M = SymMatrix([[2.0, 1.0], [1.0, 3.0]])
        x = np.array([1.0, -1.0])
        assert M.quad(x) == pytest.approx(2.0 - 2.0 + 3.0)

    def test_identity_and_zeros(self):
        assert np.array_equal(np.asarray(SymMatrix.identity(3)), np.eye(3))
        assert np.array_equal(np.asarray(SymMatrix.zeros(2)), np.zeros((2, 2)))

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            SymMatrix([[1.0, 2.0]])

    @given(st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_as_weight_roundtrips_arrays_and_symmatrix(self, n, seed):
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((n, n))
        sym = (raw + raw.T) / 2
        assert np.allclose(np.asarray(as_weight(sym, n)), sym)
        assert np.allclose(np.asarray(as_weight(SymMatrix(sym), n)), sym)

    def test_as_weight_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            as_weight(np.eye(2), 3)


class TestLoadSave:
    def test_scalar_file_loads(self, tmp_path):
        model = load_model(write_json(tmp_path / "m.json", SCALAR_DOC))
        assert (model.n, model.r, model.p, model.m) == (1, 1, 1, 0)
        assert model.A[0, 0] == 0.5
        assert model.B is None and model.D is None

    def test_save_load_roundtrip_bit_exact(self, tmp_path, scalar_model):
        path = tmp_path / "roundtrip.json"
        save_model(scalar_model, path)
        again = load_model(path)
        for name in ("A", "sigma_x", "sigma_bar_x", "sigma", "C"):
            assert np.array_equal(getattr(again, name), getattr(scalar_model, name))

    def test_roundtrip_with_input_and_awkward_floats(self, tmp_path):
        doc = dict(SCALAR_DOC)
        doc.update({"m": 1, "B": [[0.1 + 0.2]], "D": [[1e-300]]})
        path = write_json(tmp_path / "ex.json", doc)
        model = load_model(path)
        save_model(model, path)
        again = load_model(path)
        assert again.B[0, 0] == 0.1 + 0.2  # bit-exact, not approx
        assert again.D[0, 0] == 1e-300

    def test_bad_shape_raises_dimension_error(self, tmp_path):
        doc = dict(SCALAR_DOC)
        doc["A"] = [[0.5, 0.1, 0.2], [0.0, 0.3, 0.1]]  # 2x3
        with pytest.raises(DimensionError):
            load_model(write_json(tmp_path / "m.json", doc))

    def test_nan_entry_raises_value_error(self, tmp_path):
        doc = dict(SCALAR_DOC)
        doc["sigma"] = [["NaN"]]
        with pytest.raises(ValueError):
            load_model(write_json(tmp_path / "m.json", doc))

    def test_malformed_json_raises_parse_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_model(path)

    def test_missing_keys_raise_parse_error(self, tmp_path):
        doc = {"n": 1, "r": 1, "p": 1}
        with pytest.raises(ParseError, match="missing keys"):
            load_model(write_json(tmp_path / "m.json", doc))

    def test_m_inferred_from_B_when_absent(self, tmp_path):
        doc = dict(SCALAR_DOC)
        doc["B"] = [[1.0, 2.0]]
        doc["D"] = [[0.0, 0.0]]
        model = load_model(write_json(tmp_path / "m.json", doc))
        assert model.m == 2


class TestValidate:
    def test_valid_model_has_no_violations(self, scalar_model):
        assert validate(scalar_model) == []

    def test_missing_B_with_positive_m(self, scalar_model):
        broken = CsviuModel(
            n=1, r=1, p=1, m=1,
            A=scalar_model.A, sigma_x=scalar_model.sigma_x,
            sigma_bar_x=scalar_model.sigma_bar_x, sigma=scalar_model.sigma,
            C=scalar_model.C,
        )
        assert "B required when m>0" in validate(broken)

    def test_C_row_count_mismatch(self, scalar_model):
        broken = CsviuModel(
            n=1, r=1, p=1, m=0,
            A=scalar_model.A, sigma_x=scalar_model.sigma_x,
            sigma_bar_x=scalar_model.sigma_bar_x, sigma=scalar_model.sigma,
            C=[[1.0], [0.0]],  # two rows, declared p=1
        )
        assert "C row count != p" in validate(broken)

    def test_clean_validation_means_downstream_acceptance(self, random_model_factory):
        import csviu

        for seed in range(5):
            model = random_model_factory(seed, 3, target=0.5)
            assert validate(model) == []
            csviu.check_stability(model, 0.9)
            csviu.solve_lyapunov(model, 0.9, np.eye(3))


class TestAnalysisConfig:
    def test_defaults(self):
        cfg = AnalysisConfig(alpha=0.9)
        assert cfg.Q is None
        assert cfg.solver_tol == 1e-12
        assert cfg.max_iter == 100000

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ValueError, match="alpha must be positive"):
            AnalysisConfig(alpha=0.0)

    def test_rejects_indefinite_Q(self):
        with pytest.raises(ValueError, match="positive semidefinite"):
            AnalysisConfig(alpha=0.9, Q=[[-1.0]])

    def test_weight_for_defaults_to_CtC(self, scalar_model):
        cfg = AnalysisConfig(alpha=0.9)
        assert np.allclose(cfg.weight_for(scalar_model), scalar_model.C.T @ scalar_model.C)

    def test_load_config(self, tmp_path, scalar_model):
        path = write_json(
            tmp_path / "cfg.json",
            {"alpha": 1.2, "Q": [[2.0]], "x0": [1.0], "max_iter": 50},
        )
        cfg = load_config(path, model=scalar_model)
        assert cfg.alpha == 1.2
        assert np.asarray(cfg.Q)[0, 0] == 2.0
        assert cfg.max_iter == 50

    def test_load_config_requires_alpha(self, tmp_path):
        with pytest.raises(ParseError, match="alpha"):
            load_config(write_json(tmp_path / "cfg.json", {"Q": [[1.0]]}))
