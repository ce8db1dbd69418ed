import numpy as np
import pytest

from src.models.search import SearchSpace, random_search, sample_config
from src.nn.layers import SEARCH_FILTERS, SEARCH_KERNEL_SIZES
from src.utils.errors import ParameterError
from tests.toys import tiny_ae_config


def test_sampled_configs_stay_in_the_space(rng):
    space = SearchSpace()
    for _ in range(50):
        config = sample_config(space, rng, 1024)
        config.validate(1024, search_space=True)
        assert 1 <= len(config.encoder_blocks) <= 3
        assert 1 <= len(config.decoder_blocks) <= 3
        assert len(config.encoder_dnn_blocks) <= 2
        for block in config.encoder_blocks + config.decoder_blocks:
            assert block.filters in SEARCH_FILTERS
            assert block.kernel_size in SEARCH_KERNEL_SIZES
        assert config.activation in space.activations


def test_pooling_is_dropped_for_indivisible_lengths(rng):
    space = SearchSpace(conv_blocks=(3, 3))
    config = sample_config(space, rng, 100)
    assert not any(block.pool for block in config.encoder_blocks)
    config.validate(100, search_space=True)


def test_search_space_validation():
    with pytest.raises(ParameterError):
        SearchSpace(filters=()).validate()
    with pytest.raises(ParameterError):
        SearchSpace(filters=(24,)).validate()
    with pytest.raises(ParameterError):
        SearchSpace(conv_blocks=(0, 2)).validate()
    with pytest.raises(ParameterError):
        SearchSpace(dense_blocks=(1, 3)).validate()


def test_single_trial_returns_its_config(small_corpus):
    space = SearchSpace(filters=(16,), kernel_sizes=(8,), conv_blocks=(1, 1), dense_blocks=(0, 0))
    result = random_search(small_corpus, space, trials=1, epochs=1, seed=3, base=tiny_ae_config())
    assert len(result.leaderboard) == 1
    assert result.best_config == result.leaderboard[0].config
    assert result.best_config.training.epochs == 1


def test_leaderboard_is_sorted(small_corpus):
    space = SearchSpace(filters=(16, 32), kernel_sizes=(8,), conv_blocks=(1, 2), dense_blocks=(0, 1))
    result = random_search(small_corpus, space, trials=3, epochs=1, seed=9, base=tiny_ae_config())
    scores = [trial.val_mse for trial in result.leaderboard]
    assert scores == sorted(scores)
    assert result.to_dict()["leaderboard"][0]["trial"] == result.leaderboard[0].trial


def test_search_rejects_zero_trials(small_corpus):
    with pytest.raises(ParameterError):
        random_search(small_corpus, trials=0)


def test_search_is_reproducible(small_corpus):
    space = SearchSpace(filters=(16,), kernel_sizes=(8, 16), conv_blocks=(1, 2), dense_blocks=(0, 0))
    a = random_search(small_corpus, space, trials=2, epochs=1, seed=4, base=tiny_ae_config())
    b = random_search(small_corpus, space, trials=2, epochs=1, seed=4, base=tiny_ae_config())
    assert a.to_dict() == b.to_dict()
    assert np.isfinite(a.leaderboard[0].val_mse)
