import numpy as np
import pytest

from src.data.dataset import (
    NOK, OK, Dataset, TimeSeries, normalize_minmax, read_csv_dataset, read_dataset, stratified_split,
    write_dataset,
)
from src.utils.errors import DataError, ParameterError


def make_dataset(rng, n=12, length=8):
    labels = [NOK if i % 4 == 0 else OK for i in range(n)]
    return Dataset([TimeSeries(rng.normal(size=length), label, f"id{i}") for i, label in enumerate(labels)])


def test_time_series_rejects_bad_label():
    with pytest.raises(DataError):
        TimeSeries([1.0, 2.0], label=2)


def test_normalize_minmax_rows_and_constant():
    out = normalize_minmax(np.array([[0.0, 5.0, 10.0], [3.0, 3.0, 3.0]]))
    np.testing.assert_array_equal(out, [[0.0, 0.5, 1.0], [0.0, 0.0, 0.0]])


def test_dataset_length_and_lookup(rng):
    dataset = make_dataset(rng)
    assert dataset.length == 8
    assert dataset.by_ids(["id3", "id1"]).ids == ["id3", "id1"]
    with pytest.raises(DataError):
        dataset.by_ids(["nope"])
    with pytest.raises(DataError):
        Dataset().length
    assert dataset.nok_fraction() == pytest.approx(0.25)


@pytest.mark.parametrize("suffix", [".csv", ".ndjson"])
def test_write_read_preserves_values_exactly(tmp_path, rng, suffix):
    dataset = make_dataset(rng)
    path = write_dataset(dataset, str(tmp_path / f"corpus{suffix}"))
    loaded = read_dataset(path)
    assert loaded.ids == dataset.ids
    np.testing.assert_array_equal(loaded.labels, dataset.labels)
    np.testing.assert_array_equal(loaded.values(), dataset.values())


def test_unlabeled_series_round_trip(tmp_path):
    dataset = Dataset([TimeSeries([1.0, 2.0], None, "u")])
    loaded = read_dataset(write_dataset(dataset, str(tmp_path / "u.csv")))
    assert loaded[0].label is None


def test_headerless_csv_gets_row_ids(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text("0.1,0.2,0.3,0\n0.4,0.5,0.6,1\n")
    dataset = read_csv_dataset(str(path))
    assert dataset.ids == ["s00000", "s00001"]
    np.testing.assert_array_equal(dataset.labels, [0, 1])
    unlabeled = read_csv_dataset(str(path), has_label=False)
    assert unlabeled.length == 4
    assert unlabeled[0].label is None


def test_malformed_row_names_the_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,v0,v1,label\na,0.1,zzz,0\n")
    with pytest.raises(DataError, match="row 2"):
        read_csv_dataset(str(path))


def test_stratified_split_keeps_proportions():
    labels = np.array([OK] * 90 + [NOK] * 10)
    parts = stratified_split(labels, (0.6, 0.2, 0.2), np.random.default_rng(0))
    assert [len(p) for p in parts] == [60, 20, 20]
    assert [int(np.sum(labels[p] == NOK)) for p in parts] == [6, 2, 2]
    assert sorted(np.concatenate(parts).tolist()) == list(range(100))


def test_stratified_split_rejects_bad_fractions():
    with pytest.raises(ParameterError):
        stratified_split(np.zeros(10), (0.5, 0.6), np.random.default_rng(0))
