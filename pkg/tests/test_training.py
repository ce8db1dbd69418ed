import numpy as np
import pytest

from src.data.dataset import NOK, OK, Dataset, TimeSeries
from src.models import training
from src.models.training import TrainReport, reconstruction_mse, train
from src.utils.errors import DataError, TrainingDivergedError
from tests.toys import tiny_ae_config


def test_report_describes_stratified_splits(small_corpus, trained):
    _, report = trained
    assert report.split_sizes == {"train": 24, "validation": 8, "test": 8}
    assert sum(len(ids) for ids in report.split_ids.values()) == len(small_corpus)
    assert set().union(*map(set, report.split_ids.values())) == set(small_corpus.ids)
    assert report.nok_fractions["train"] == pytest.approx(0.1, abs=0.05)
    assert report.epochs_run == 2
    assert len(report.train_loss) == len(report.val_loss) == 2
    assert all(np.isfinite(report.train_loss))
    assert report.normalization == "minmax"


def test_nok_instances_are_trained_on(small_corpus, trained):
    _, report = trained
    nok_ids = {s.series_id for s in small_corpus if s.label == NOK}
    assert nok_ids & set(report.split_ids["train"])


def test_training_is_deterministic(small_corpus, trained):
    model, report = trained
    again_model, again_report = train(small_corpus, tiny_ae_config(epochs=2))
    assert again_report == report
    for a, b in zip(model.parameters(), again_model.parameters()):
        np.testing.assert_array_equal(a, b)


def test_identical_series_are_learned():
    wave = 0.5 + 0.4 * np.sin(np.linspace(0.0, 4.0 * np.pi, 64))
    dataset = Dataset([TimeSeries(wave, OK, f"s{i}") for i in range(10)])
    config = tiny_ae_config(epochs=60).with_training(batch_size=4, split_fractions=(0.6, 0.2, 0.2))
    _, report = train(dataset, config)
    assert report.train_loss[-1] < report.train_loss[0]


def test_empty_and_ragged_datasets_are_rejected():
    with pytest.raises(DataError):
        train(Dataset(), tiny_ae_config())
    ragged = Dataset([TimeSeries(np.zeros(64), OK, "a"), TimeSeries(np.zeros(32), OK, "b")])
    with pytest.raises(DataError):
        train(ragged, tiny_ae_config())


def test_non_finite_loss_names_the_epoch(small_corpus, monkeypatch):
    def exploding(prediction, target):
        return float("nan"), np.zeros_like(prediction)

    monkeypatch.setattr(training, "mse_loss", exploding)
    with pytest.raises(TrainingDivergedError) as excinfo:
        train(small_corpus, tiny_ae_config())
    assert excinfo.value.epoch == 1


def test_patience_keeps_best_epoch(small_corpus):
    config = tiny_ae_config(epochs=4).with_training(patience=1)
    _, report = train(small_corpus, config)
    assert 1 <= report.best_epoch <= report.epochs_run
    assert report.val_loss[report.best_epoch - 1] == min(report.val_loss)


def test_reconstruction_mse_of_empty_batch(tiny_model):
    assert reconstruction_mse(tiny_model, np.zeros((0, 1, 64))) == 0.0


def test_report_dict_round_trip(trained):
    _, report = trained
    assert TrainReport.from_dict(report.to_dict()) == report
