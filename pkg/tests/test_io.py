import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sdridge.errors import DataError, ParameterError, ParseError
from sdridge.io import (
    CURVE_COLUMNS,
    load_config_file,
    load_csv,
    merge_config,
    sanitize,
    split,
    standardize,
    write_dataset_csv,
    write_json,
    write_table,
)
from sdridge.ridge import Dataset


def write(path, text):
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_basic(self, tmp_path):
        d = load_csv(write(tmp_path / "a.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n"))
        assert (d.n, d.p) == (3, 2)
        assert np.array_equal(d.y, [3, 6, 9])
        assert d.meta["feature_names"] == ["a", "b"] and d.meta["target_name"] == "y"

    def test_target_by_name_and_index(self, tmp_path):
        f = write(tmp_path / "a.csv", "a,b,y\n1,2,3\n4,5,6\n")
        assert np.array_equal(load_csv(f, "a").y, [1, 4])
        assert np.array_equal(load_csv(f, "1").y, [2, 5])
        assert np.array_equal(load_csv(f, -1).y, [3, 6])
        with pytest.raises(ParameterError):
            load_csv(f, "zz")
        with pytest.raises(ParameterError):
            load_csv(f, 5)

    def test_no_header(self, tmp_path):
        d = load_csv(write(tmp_path / "a.csv", "1,2,3\n4,5,6\n"), has_header=False)
        assert (d.n, d.p) == (2, 2) and d.meta["feature_names"] == ["x0", "x1"]
        with pytest.raises(ParameterError):
            load_csv(tmp_path / "a.csv", "y", has_header=False)

    @pytest.mark.parametrize("token", ["", "NA", "nan", "NULL", "None", "?", "inf"])
    def test_missing_row_dropped(self, tmp_path, token):
        d = load_csv(write(tmp_path / "a.csv", f"a,b,y\n1,2,3\n4,{token},6\n7,8,9\n"))
        assert d.n == 2 and d.meta["dropped_rows"] == 1
        assert np.array_equal(d.y, [3, 9])

    def test_parse_error_location(self, tmp_path):
        with pytest.raises(ParseError) as exc:
            load_csv(write(tmp_path / "a.csv", "a,b,y\n1,2,3\n4,abc,6\n"))
        assert (exc.value.row, exc.value.col) == (3, 2)
        assert "row 3" in str(exc.value) and "column 2" in str(exc.value)

    def test_ragged_row(self, tmp_path):
        with pytest.raises(ParseError):
            load_csv(write(tmp_path / "a.csv", "a,b,y\n1,2,3\n4,5\n"))

    def test_empty_after_filtering(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path / "a.csv", "a,y\nNA,1\n2,\n"))
        with pytest.raises(DataError):
            load_csv(write(tmp_path / "b.csv", ""))

    def test_round_trip_bit_exact(self, tmp_path, rng):
        d = Dataset(rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-20, 20, (7, 3)), rng.standard_normal(7))
        write_dataset_csv(d, tmp_path / "d.csv")
        back = load_csv(tmp_path / "d.csv")
        assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 4)),
              elements=st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False)))
def test_round_trip_property(tmp_path_factory, A):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    d = Dataset(A[:, :-1], A[:, -1])
    write_dataset_csv(d, path)
    back = load_csv(path)
    assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y)


class TestSplit:
    def data(self, n=10):
        return Dataset(np.arange(2.0 * n).reshape(n, 2), np.arange(float(n)))

    def test_sequential(self):
        tr, te = split(self.data(), 0.7, "sequential")
        assert np.array_equal(tr.y, np.arange(7.0)) and np.array_equal(te.y, [7.0, 8.0, 9.0])

    def test_random_seeded_partition(self):
        tr, te = split(self.data(), 0.7, "random", seed=4)
        tr2, _ = split(self.data(), 0.7, "random", seed=4)
        assert np.array_equal(tr.y, tr2.y)
        assert sorted(np.concatenate([tr.y, te.y]).tolist()) == list(range(10))
        assert not np.array_equal(split(self.data(), 0.7, "random", seed=5)[0].y, tr.y)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, 0.01])
    def test_bad_ratio(self, ratio):
        with pytest.raises((ParameterError, DataError)):
            split(self.data(), ratio)

    def test_bad_mode(self):
        with pytest.raises(ParameterError):
            split(self.data(), 0.5, "stratified")


class TestStandardize:
    def test_train_statistics(self):
        train = Dataset(np.array([[3.0, 1.0], [7.0, 1.0]]), np.array([0.0, 2.0]))
        test = Dataset(np.array([[7.0, 1.0]]), np.array([4.0]))
        tr, te, stats = standardize(train, test)
        assert stats.x_mean[0] == 5.0 and stats.x_std[0] == 2.0
        assert te.X[0, 0] == 1.0 and te.y[0] == 3.0
        assert stats.dropped_columns == (1,) and tr.p == te.p == 1
        assert te.meta["dropped_columns"] == [1]

    def test_no_leakage(self, rng):
        train = Dataset(rng.standard_normal((30, 3)), rng.standard_normal(30))
        test = Dataset(rng.standard_normal((20, 3)) + 4.0, rng.standard_normal(20))
        _, te, s1 = standardize(train, test)
        assert np.all(np.abs(te.X.mean(axis=0)) > 1.0)
        perm = rng.permutation(20)
        _, _, s2 = standardize(train, Dataset(test.X[perm], test.y[perm]))
        assert np.array_equal(s1.x_mean, s2.x_mean) and np.array_equal(s1.x_std, s2.x_std)
        assert s1.y_mean == s2.y_mean

    def test_all_constant(self):
        d = Dataset(np.ones((4, 2)), np.arange(4.0))
        with pytest.raises(DataError):
            standardize(d, d)

    def test_train_moments(self, rng):
        train = Dataset(rng.standard_normal((50, 4)) * 3 + 1, rng.standard_normal(50) + 2)
        tr, _, _ = standardize(train, train)
        assert np.allclose(tr.X.mean(0), 0) and np.allclose(tr.X.std(0), 1)
        assert tr.y.mean() == pytest.approx(0, abs=1e-12) and tr.y.std() == pytest.approx(1)


class TestConfig:
    def test_precedence(self, tmp_path):
        f = write(tmp_path / "c.json", json.dumps({"seed": 3, "lambda_points": 5, "split_mode": "sequential"}))
        cfg = merge_config("tune", {"seed": 9, "lambda_points": None}, load_config_file(f))
        assert cfg.seed == 9 and cfg.lambda_points == 5 and cfg.split_mode == "sequential"
        assert merge_config("tune", {}).lambda_points == 40

    def test_schema_violation(self, tmp_path):
        with pytest.raises(ParameterError):
            load_config_file(write(tmp_path / "c.json", json.dumps({"lambda_min": -1})))

    def test_invalid_json(self, tmp_path):
        with pytest.raises(ParseError):
            load_config_file(write(tmp_path / "c.json", "{seed: 1"))

    def test_validation(self):
        with pytest.raises(ParameterError):
            merge_config("tune", {"lambda_min": 0.0})
        with pytest.raises(ParameterError):
            merge_config("tune", {"split_ratio": 1.0})
        with pytest.raises(ParameterError):
            merge_config("bogus", {})

    def test_grid(self):
        cfg = merge_config("tune", {"lambda_min": 0.1, "lambda_max": 10.0, "lambda_points": 3})
        assert np.allclose(cfg.lambda_grid(), [0.1, 1.0, 10.0])
        assert np.array_equal(merge_config("tune", {"lambdas": [2.0, 1.0]}).lambda_grid(), [1.0, 2.0])

    def test_extra_keys(self):
        assert merge_config("simulate", {"reps": 3}).extra == {"reps": 3}


class TestOutput:
    def test_csv_header_fixed(self, tmp_path):
        write_table(tmp_path / "o.csv", "tune", [(1.0,) * 9 + (False,)])
        lines = (tmp_path / "o.csv").read_text().splitlines()
        assert lines[0].split(",") == CURVE_COLUMNS["tune"]
        assert lines[1].endswith(",0")

    def test_json_table(self, tmp_path):
        write_table(tmp_path / "o.json", "kernel", [(1.0, 2.0, float("nan"), 0.5, True)], "json", {"k": 1})
        doc = json.loads((tmp_path / "o.json").read_text())
        assert doc["columns"] == CURVE_COLUMNS["kernel"]
        assert doc["rows"] == [[1.0, 2.0, None, 0.5, True]]

    def test_stdout(self, capsys):
        write_table(None, "fit", [(0, "a", 1.5)])
        assert capsys.readouterr().out.splitlines() == ["index,name,coef", "0,a,1.5"]

    def test_sanitize_and_schema(self, tmp_path):
        assert sanitize({"a": np.array([1.0, np.inf]), "b": (np.float32(2.0), np.int64(3))}) == {
            "a": [1.0, None], "b": [2.0, 3]}
        import jsonschema

        with pytest.raises(jsonschema.ValidationError):
            write_json(tmp_path / "x.json", {"a": 1}, {"type": "object", "required": ["b"]})
