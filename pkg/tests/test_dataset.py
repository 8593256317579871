"""Loading, encoding, folds, and serialization of binary datasets."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import datagen
from branchrules.dataset import (
    BinaryDataset,
    FoldPlan,
    dataset_from_json,
    dataset_to_json,
    decode_feature_names,
    load_csv,
    one_hot_encode,
    schema_to_json,
    stratified_folds,
)
from branchrules.errors import DataError


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


BASIC_CSV = (
    "color,size,flag,class\n"
    "red,small,1,yes\n"
    "blue,large,0,no\n"
    "red,large,1,yes\n"
    "green,small,0,no\n"
)


class TestLoadCsv:
    def test_basic_table(self, tmp_path):
        table = load_csv(write_csv(tmp_path, BASIC_CSV), "class", "yes")
        assert table.column_names == ("color", "size", "flag")
        assert table.column_kinds == ("categorical", "categorical", "binary")
        assert table.columns[0] == ("red", "blue", "red", "green")
        assert table.labels == (0, 1, 0, 1)
        assert table.class_names == ("yes", "no")
        assert table.label_column == "class"
        assert table.n_records == 4

    def test_cells_are_stripped(self, tmp_path):
        text = "a,class\n 1 , yes \n0,no\n"
        table = load_csv(write_csv(tmp_path, text), "class", "yes")
        assert table.columns[0] == ("1", "0")
        assert table.class_names == ("yes", "no")

    def test_blank_lines_are_skipped(self, tmp_path):
        text = "a,class\n1,yes\n\n0,no\n"
        table = load_csv(write_csv(tmp_path, text), "class", "yes")
        assert table.n_records == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(tmp_path / "absent.csv", "class", "yes")

    def test_duplicate_header(self, tmp_path):
        path = write_csv(tmp_path, "a,a,class\n1,2,yes\n3,4,no\n")
        with pytest.raises(DataError, match="duplicate column names"):
            load_csv(path, "class", "yes")

    def test_missing_label_column(self, tmp_path):
        path = write_csv(tmp_path, BASIC_CSV)
        with pytest.raises(DataError, match="label column 'target'"):
            load_csv(path, "target", "yes")

    def test_no_data_rows(self, tmp_path):
        path = write_csv(tmp_path, "a,class\n")
        with pytest.raises(DataError, match="no data rows"):
            load_csv(path, "class", "yes")

    def test_ragged_row_reports_line(self, tmp_path):
        path = write_csv(tmp_path, "a,b,class\n1,2,yes\n3,no\n")
        with pytest.raises(DataError, match="line 3 has 2 cells, expected 3"):
            load_csv(path, "class", "yes")

    def test_missing_cell_rejected(self, tmp_path):
        path = write_csv(tmp_path, "a,b,class\n1,,yes\n0,1,no\n")
        with pytest.raises(DataError, match="missing value at line 2, column 'b'"):
            load_csv(path, "class", "yes")

    def test_skip_missing_rows_drops_and_warns(self, tmp_path):
        text = "a,class\n1,yes\n,yes\n0,no\n,no\n"
        path = write_csv(tmp_path, text)
        with pytest.warns(UserWarning, match="dropped 2 rows"):
            table = load_csv(path, "class", "yes", skip_missing_rows=True)
        assert table.n_records == 2
        assert table.labels == (0, 1)

    def test_skip_missing_rows_all_dropped(self, tmp_path):
        path = write_csv(tmp_path, "a,class\n,yes\n,no\n")
        with pytest.raises(DataError, match="all rows"):
            with pytest.warns(UserWarning):
                load_csv(path, "class", "yes", skip_missing_rows=True)

    def test_equals_sign_in_feature_name(self, tmp_path):
        path = write_csv(tmp_path, "a=b,class\n1,yes\n0,no\n")
        with pytest.raises(DataError, match="reserved"):
            load_csv(path, "class", "yes")

    def test_positive_class_absent(self, tmp_path):
        path = write_csv(tmp_path, BASIC_CSV)
        with pytest.raises(DataError, match="'maybe' does not occur"):
            load_csv(path, "class", "maybe")

    def test_three_label_values(self, tmp_path):
        path = write_csv(tmp_path, "a,class\n1,yes\n0,no\n1,maybe\n")
        with pytest.raises(DataError, match="3 distinct values"):
            load_csv(path, "class", "yes")

    def test_single_label_value(self, tmp_path):
        path = write_csv(tmp_path, "a,class\n1,yes\n0,yes\n")
        with pytest.raises(DataError, match="single value"):
            load_csv(path, "class", "yes")


class TestOneHotEncode:
    def test_categorical_expansion_first_appearance_order(self, tmp_path):
        ds = one_hot_encode(load_csv(write_csv(tmp_path, BASIC_CSV), "class", "yes"))
        assert ds.feature_names == (
            "color=red", "color=blue", "color=green",
            "size=small", "size=large", "flag",
        )
        expected = np.array(
            [
                [1, 0, 0, 1, 0, 1],
                [0, 1, 0, 0, 1, 0],
                [1, 0, 0, 0, 1, 1],
                [0, 0, 1, 1, 0, 0],
            ],
            dtype=np.uint8,
        )
        assert np.array_equal(ds.features, expected)
        assert np.array_equal(ds.labels, [0, 1, 0, 1])
        assert ds.class_names == ("yes", "no")

    def test_binary_column_passthrough(self, tmp_path):
        text = "f,class\n1,yes\n0,no\n1,yes\n"
        ds = one_hot_encode(load_csv(write_csv(tmp_path, text), "class", "yes"))
        assert ds.feature_names == ("f",)
        assert np.array_equal(ds.features[:, 0], [1, 0, 1])

    def test_single_value_column_warns(self, tmp_path):
        text = "a,b,class\nx,1,yes\nx,0,no\n"
        table = load_csv(write_csv(tmp_path, text), "class", "yes")
        with pytest.warns(UserWarning, match="single distinct value 'x'"):
            ds = one_hot_encode(table)
        assert ds.feature_names == ("a=x", "b")

    def test_tictactoe_shape(self, ttt):
        # 9 board cells, each holding x/o/b, expand to 27 one-hot columns;
        # the solved game tree has 958 boards, 626 of them x wins.
        assert ds_shape(ttt) == (958, 27)
        counts = ttt.class_counts()
        assert (int(counts[0]), int(counts[1])) == (626, 332)
        sources = {name.split("=", 1)[0] for name in ttt.feature_names}
        assert sources == set(datagen.TTT_COLUMNS)

    def test_wisconsin_shaped_counts(self, tmp_path):
        path = write_csv(tmp_path, datagen.wisconsin_shaped_csv_text())
        ds = one_hot_encode(load_csv(path, "class", "malignant"))
        # 9 columns spanning values 1..10 expand to 90 one-hot features
        assert ds_shape(ds) == (683, 90)

    def test_krkp_shaped_counts(self, tmp_path):
        path = write_csv(tmp_path, datagen.krkp_shaped_csv_text())
        ds = one_hot_encode(load_csv(path, "class", "won"))
        # 35 two-valued columns and one three-valued column: 73 features
        assert ds_shape(ds) == (3196, 73)


def ds_shape(ds):
    return (ds.n_records, ds.n_features)


class TestDecodeFeatureNames:
    def test_round_trip(self, tmp_path):
        table = load_csv(write_csv(tmp_path, BASIC_CSV), "class", "yes")
        ds = one_hot_encode(table)
        schema = decode_feature_names(ds.feature_names)
        assert schema == (
            ("color", ("red", "blue", "green")),
            ("size", ("small", "large")),
            ("flag", None),
        )

    def test_binary_name_collision(self):
        with pytest.raises(DataError, match="collides"):
            decode_feature_names(("a", "a=x"))

    def test_duplicate_binary_name(self):
        with pytest.raises(DataError, match="appears twice"):
            decode_feature_names(("a", "a"))


class TestBinaryDataset:
    def make(self, **kwargs):
        defaults = dict(
            features=np.array([[0, 1], [1, 0]], dtype=np.uint8),
            labels=np.array([0, 1], dtype=np.uint8),
            feature_names=("a", "b"),
            class_names=("pos", "neg"),
        )
        defaults.update(kwargs)
        return BinaryDataset(**defaults)

    def test_valid(self):
        ds = self.make()
        assert ds.n_records == 2
        assert ds.n_features == 2
        assert np.array_equal(ds.class_counts(), [1, 1])

    def test_not_two_dimensional(self):
        with pytest.raises(DataError, match="2-dimensional"):
            self.make(features=np.array([0, 1], dtype=np.uint8))

    def test_label_length_mismatch(self):
        with pytest.raises(DataError, match="one entry per record"):
            self.make(labels=np.array([0, 1, 1], dtype=np.uint8))

    def test_non_binary_cell(self):
        with pytest.raises(DataError, match="0 or 1"):
            self.make(features=np.array([[0, 2], [1, 0]], dtype=np.uint8))

    def test_missing_class(self):
        with pytest.raises(DataError, match="'neg' has no records"):
            self.make(labels=np.array([0, 0], dtype=np.uint8))

    def test_name_count_mismatch(self):
        with pytest.raises(DataError, match="length does not match"):
            self.make(feature_names=("a",))

    def test_duplicate_names(self):
        with pytest.raises(DataError, match="unique"):
            self.make(feature_names=("a", "a"))

    def test_arrays_read_only(self):
        ds = self.make()
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1
        with pytest.raises(ValueError):
            ds.labels[0] = 1

    def test_subset_keeps_given_order(self):
        ds = self.make(
            features=np.array([[0, 1], [1, 0], [1, 1]], dtype=np.uint8),
            labels=np.array([0, 1, 0], dtype=np.uint8),
        )
        sub = ds.subset(np.array([2, 1]))
        assert np.array_equal(sub.features, [[1, 1], [1, 0]])
        assert np.array_equal(sub.labels, [0, 1])
        assert sub.feature_names == ds.feature_names

    def test_subset_single_class_rejected(self):
        ds = self.make(
            features=np.array([[0, 1], [1, 0], [1, 1]], dtype=np.uint8),
            labels=np.array([0, 1, 0], dtype=np.uint8),
        )
        with pytest.raises(DataError, match="has no records"):
            ds.subset(np.array([0, 2]))


class TestStratifiedFolds:
    def test_partition_and_balance(self, ttt):
        plan = stratified_folds(ttt, n_folds=10, n_repeats=3, seed=0)
        assert plan.assignments.shape == (3, ttt.n_records)
        for r in range(plan.n_repeats):
            for class_id in (0, 1):
                class_idx = np.flatnonzero(ttt.labels == class_id)
                per_fold = np.bincount(plan.assignments[r][class_idx], minlength=10)
                lo = len(class_idx) // 10
                assert set(per_fold) <= {lo, lo + 1}

    def test_test_train_indices_partition(self, xor):
        plan = stratified_folds(xor, n_folds=4, n_repeats=2, seed=7)
        for r in range(2):
            for fold in range(4):
                test = plan.test_indices(r, fold)
                train = plan.train_indices(r, fold)
                assert len(np.intersect1d(test, train)) == 0
                assert len(test) + len(train) == xor.n_records

    def test_deterministic_in_seed(self, xor):
        a = stratified_folds(xor, 5, 2, seed=42)
        b = stratified_folds(xor, 5, 2, seed=42)
        c = stratified_folds(xor, 5, 2, seed=43)
        assert np.array_equal(a.assignments, b.assignments)
        assert not np.array_equal(a.assignments, c.assignments)

    def test_repeats_differ(self, xor):
        plan = stratified_folds(xor, 5, 2, seed=0)
        assert not np.array_equal(plan.assignments[0], plan.assignments[1])

    def test_too_few_folds(self, xor):
        with pytest.raises(DataError, match="at least 2"):
            stratified_folds(xor, 1, 1, seed=0)

    def test_too_few_repeats(self, xor):
        with pytest.raises(DataError, match="at least 1"):
            stratified_folds(xor, 2, 0, seed=0)

    def test_class_smaller_than_folds(self):
        ds = BinaryDataset(
            features=np.zeros((5, 1), dtype=np.uint8),
            labels=np.array([0, 0, 0, 0, 1], dtype=np.uint8),
            feature_names=("f",),
            class_names=("pos", "neg"),
        )
        with pytest.raises(DataError, match="fewer than n_folds"):
            stratified_folds(ds, 3, 1, seed=0)

    @settings(deadline=None, max_examples=30)
    @given(
        n_pos=st.integers(6, 40),
        n_neg=st.integers(6, 40),
        n_folds=st.integers(2, 6),
        seed=st.integers(0, 2**31),
    )
    def test_balance_property(self, n_pos, n_neg, n_folds, seed):
        rng = np.random.default_rng(0)
        n = n_pos + n_neg
        labels = np.array([0] * n_pos + [1] * n_neg, dtype=np.uint8)
        ds = BinaryDataset(
            features=(rng.random((n, 3)) < 0.5).astype(np.uint8),
            labels=labels,
            feature_names=("a", "b", "c"),
            class_names=("pos", "neg"),
        )
        plan = stratified_folds(ds, n_folds, 2, seed)
        for r in range(2):
            # disjoint cover of all records
            assert np.all((plan.assignments[r] >= 0) & (plan.assignments[r] < n_folds))
            for class_id, size in ((0, n_pos), (1, n_neg)):
                idx = np.flatnonzero(labels == class_id)
                per_fold = np.bincount(plan.assignments[r][idx], minlength=n_folds)
                assert per_fold.sum() == size
                assert per_fold.max() - per_fold.min() <= 1

    def test_manifest_text(self, xor):
        plan = stratified_folds(xor, 2, 1, seed=0)
        text = plan.manifest_text()
        lines = text.splitlines()
        assert lines[0] == "# format: branchrules.folds/1"
        assert lines[1] == "# n_folds=2 n_repeats=1 seed=0"
        assert lines[2] == "repeat,fold,record"
        assert len(lines) == 3 + xor.n_records

    def test_fold_plan_validation(self):
        with pytest.raises(DataError, match="empty fold"):
            FoldPlan(
                n_folds=3,
                n_repeats=1,
                seed=0,
                assignments=np.array([[0, 1, 0, 1]]),
            )
        with pytest.raises(DataError, match="out of range"):
            FoldPlan(
                n_folds=2,
                n_repeats=1,
                seed=0,
                assignments=np.array([[0, 1, 2]]),
            )


class TestSerialization:
    def test_dataset_round_trip(self, xor):
        text = dataset_to_json(xor)
        back = dataset_from_json(text)
        assert np.array_equal(back.features, xor.features)
        assert np.array_equal(back.labels, xor.labels)
        assert back.feature_names == xor.feature_names
        assert back.class_names == xor.class_names

    def test_dataset_bad_format_tag(self):
        with pytest.raises(DataError, match="unrecognized dataset format"):
            dataset_from_json('{"format": "something/9"}')

    def test_dataset_invalid_json(self):
        with pytest.raises(DataError, match="not valid JSON"):
            dataset_from_json("{nope")

    def test_dataset_empty_payload(self):
        text = (
            '{"format": "branchrules.dataset/1", "class_names": ["a", "b"],'
            ' "feature_names": [], "labels": [], "rows": []}'
        )
        with pytest.raises(DataError, match="no records"):
            dataset_from_json(text)

    def test_schema_sidecar(self, tmp_path):
        table = load_csv(write_csv(tmp_path, BASIC_CSV), "class", "yes")
        import json

        payload = json.loads(schema_to_json(table))
        assert payload["format"] == "branchrules.schema/1"
        assert payload["label_column"] == "class"
        assert payload["class_names"] == ["yes", "no"]
        assert payload["columns"][0] == {
            "name": "color",
            "kind": "categorical",
            "values": ["red", "blue", "green"],
        }
