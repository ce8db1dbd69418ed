import struct

import numpy as np
import pytest

from src.models.autoencoder import build_autoencoder
from src.models.serialization import MAGIC, load_model, model_from_bytes, model_to_bytes, save_model
from src.utils.errors import ModelFormatError, UnsupportedVersionError
from tests.toys import conv_encoder, tiny_ae_config


@pytest.mark.parametrize("seed", range(10))
def test_round_trip_encodes_bit_identically(tmp_path, seed):
    rng = np.random.default_rng(seed)
    model = build_autoencoder(tiny_ae_config(latent_dim=1 + seed % 3), 64, rng)
    path = save_model(model, str(tmp_path / "model.aee"))
    loaded = load_model(path)
    batch = rng.normal(size=(4, 64))
    np.testing.assert_array_equal(loaded.encode(batch), model.encode(batch))
    np.testing.assert_array_equal(loaded.reconstruct(batch), model.reconstruct(batch))
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert a.tobytes() == b.tobytes()
    assert loaded.config == model.config
    assert model_to_bytes(loaded) == model_to_bytes(model)


def test_encoder_only_model_round_trip(rng):
    model = conv_encoder(rng)
    loaded = model_from_bytes(model_to_bytes(model))
    assert loaded.decoder is None
    assert loaded.config is None
    x = rng.normal(size=32)
    np.testing.assert_array_equal(loaded.encode(x), model.encode(x))


def test_bumped_version_is_rejected(rng):
    data = bytearray(model_to_bytes(conv_encoder(rng)))
    struct.pack_into("<I", data, 4, 2)
    with pytest.raises(UnsupportedVersionError) as excinfo:
        model_from_bytes(bytes(data))
    assert excinfo.value.found == 2


def test_corrupt_payload_fails_checksum(rng):
    data = bytearray(model_to_bytes(conv_encoder(rng)))
    data[-20] ^= 0xFF
    with pytest.raises(ModelFormatError):
        model_from_bytes(bytes(data))


def test_bad_magic_and_truncation(rng):
    data = model_to_bytes(conv_encoder(rng))
    assert data[:4] == MAGIC
    with pytest.raises(ModelFormatError):
        model_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ModelFormatError):
        model_from_bytes(data[:10])


def test_file_size_grows_linearly_with_parameters():
    rng = np.random.default_rng(0)
    small = build_autoencoder(tiny_ae_config(latent_dim=2), 64, rng)
    large = build_autoencoder(tiny_ae_config(latent_dim=6), 64, rng)
    added = large.parameter_count() - small.parameter_count()
    size_delta = len(model_to_bytes(large)) - len(model_to_bytes(small))
    header_slack = 64
    assert 8 * added <= size_delta <= 8 * added + header_slack
