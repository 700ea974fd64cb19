import numpy as np
import pytest

from gpev.core import (
    ConfigError,
    DataError,
    Dataset,
    GpHyper,
    default_n_basis,
    derive_rng,
    load_dataset,
    make_rng,
    save_dataset,
    validate_config,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadDataset:
    def test_three_row_file_echoes_input(self, tmp_path):
        p = write(tmp_path / "d.csv", "w,y\n0.1,1.0\n0.2,0.9\n0.3,1.1\n")
        ds = load_dataset(p)
        assert ds.n == 3
        assert ds.y[0] == 1.0
        assert np.allclose(ds.w, [0.1, 0.2, 0.3])

    def test_column_order_is_free(self, tmp_path):
        a = load_dataset(write(tmp_path / "a.csv", "w,y\n0.1,1.0\n0.2,0.9\n"))
        b = load_dataset(write(tmp_path / "b.csv", "y,w\n1.0,0.1\n0.9,0.2\n"))
        assert np.array_equal(a.y, b.y) and np.array_equal(a.w, b.w)

    def test_group_column_round_trip(self, tmp_path):
        p = write(
            tmp_path / "g.csv",
            "w,y,group\n0.1,1.0,treat\n0.2,0.9,control\n0.3,1.1,treat\n0.4,1.2,control\n",
        )
        ds = load_dataset(p)
        assert ds.groups() == ("treat", "control")
        sub = ds.subset("treat")
        assert sub.n == 2 and np.allclose(sub.w, [0.1, 0.3])
        out = tmp_path / "copy.csv"
        save_dataset(ds, out)
        again = load_dataset(out)
        assert np.array_equal(again.y, ds.y)
        assert np.array_equal(again.w, ds.w)
        assert again.group == ds.group

    def test_full_precision_round_trip(self, tmp_path):
        rng = make_rng(3)
        ds = Dataset(y=rng.standard_normal(5), w=rng.standard_normal(5))
        out = tmp_path / "rt.csv"
        save_dataset(ds, out)
        again = load_dataset(out)
        assert np.array_equal(again.y, ds.y) and np.array_equal(again.w, ds.w)

    def test_missing_column(self, tmp_path):
        p = write(tmp_path / "m.csv", "w,z\n0.1,1.0\n0.2,0.9\n")
        with pytest.raises(DataError, match="missing column 'y'"):
            load_dataset(p)

    def test_non_numeric_cell(self, tmp_path):
        p = write(tmp_path / "n.csv", "w,y\n0.1,1.0\nfoo,0.9\n")
        with pytest.raises(DataError, match="non-numeric"):
            load_dataset(p)

    def test_too_few_rows(self, tmp_path):
        p = write(tmp_path / "s.csv", "w,y\n0.1,1.0\n")
        with pytest.raises(DataError, match="at least 2"):
            load_dataset(p)

    def test_custom_column_names(self, tmp_path):
        p = write(tmp_path / "c.csv", "proxy,resp\n0.1,1.0\n0.2,0.9\n")
        ds = load_dataset(p, w_col="proxy", y_col="resp")
        assert ds.n == 2 and ds.y[1] == 0.9


class TestValidateConfig:
    def test_empty_config_fills_documented_defaults(self):
        cfg = validate_config({})
        assert cfg.dpmm.truncation == 20
        assert cfg.dpmm.mu0 == 0.0
        assert cfg.dpmm.kappa0 == 1.0
        assert cfg.dpmm.a_tau == 1.0
        assert cfg.dpmm.b_tau == 1.0
        assert cfg.dpmm.alpha == 1.0
        assert cfg.gp.lambda_prior_shape == 5.0
        assert cfg.gp.lambda_prior_scale == 1.0

    def test_zero_basis_rejected(self):
        with pytest.raises(ConfigError, match="n_basis must be >= 1"):
            validate_config({"n_basis": 0})

    def test_fixed_sigma2_echoed(self):
        cfg = validate_config({"sigma2": 0.04})
        assert cfg.noise.sigma2 == 0.04
        assert cfg.noise.sigma2_sampled is False

    def test_sample_flag(self):
        cfg = validate_config({"sigma2": "sample", "delta2": 0.35})
        assert cfg.noise.sigma2_sampled is True
        assert cfg.noise.delta2 == 0.35 and cfg.noise.delta2_sampled is False

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown configuration keys"):
            validate_config({"bandwidth": 2.0})

    def test_unknown_estimator_rejected(self):
        with pytest.raises(ConfigError, match="unknown estimator name"):
            validate_config({"methods": "gpev_a,quux"})

    def test_negative_sigma2_rejected(self):
        with pytest.raises(ConfigError, match="sigma2"):
            validate_config({"sigma2": -1.0})


class TestRng:
    def test_same_seed_same_stream(self):
        a = make_rng(123).standard_normal(8)
        b = make_rng(123).standard_normal(8)
        assert np.array_equal(a, b)

    def test_derived_streams_keyed(self):
        a = derive_rng(7, "fit", 0, "gpev_a").standard_normal(4)
        b = derive_rng(7, "fit", 0, "gpev_a").standard_normal(4)
        c = derive_rng(7, "fit", 1, "gpev_a").standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_seed_range_checked(self):
        with pytest.raises(ConfigError):
            make_rng(-1)
        with pytest.raises(ConfigError):
            make_rng(2**64)


def test_default_n_basis_rounds_and_clamps():
    assert default_n_basis(500) == 111
    assert default_n_basis(100) == 22
    assert default_n_basis(20) == 10
    assert default_n_basis(5) == 5
    assert GpHyper(n_basis=80).resolve_n_basis(500) == 80


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(y=np.array([1.0]), w=np.array([2.0]))
    with pytest.raises(DataError):
        Dataset(y=np.array([1.0, np.inf]), w=np.array([0.0, 1.0]))
    with pytest.raises(DataError):
        Dataset(y=np.array([1.0, 2.0]), w=np.array([0.0, 1.0]), group=("a",))
