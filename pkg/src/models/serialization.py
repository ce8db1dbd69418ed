"""
Model Serialization Module

Versioned binary container for AEModel:

    b"AEE1" | uint32 format_version | uint32 header length | JSON header |
    raw little-endian float64 parameter blobs | uint32 CRC32 of everything before

The JSON header holds the layer specs, the parameter shapes, the input length, the latent
size, the normalization scheme and the configuration the model was built from.
"""

import os
import json
import struct
import zlib
from typing import Any, Dict, List, Optional

import numpy as np

from src.models.autoencoder import FORMAT_VERSION, AEConfig, AEModel
from src.nn.layers import LayerSpec
from src.nn.network import Network
from src.utils.errors import ModelFormatError, UnsupportedVersionError
from src.utils.logger import get_logger

logger = get_logger()

MAGIC = b"AEE1"
_UINT32 = struct.Struct("<I")


def _network_header(network: Optional[Network]) -> Optional[Dict[str, Any]]:
    if network is None:
        return None
    return {
        "specs": [spec.to_dict() for spec in network.specs],
        "shapes": [list(p.shape) for p in network.parameters()],
    }


def model_to_bytes(model: AEModel) -> bytes:
    header = {
        "format_version": model.format_version,
        "input_length": model.input_length,
        "latent_dim": model.latent_dim,
        "normalization": model.normalization,
        "config": model.config.to_dict() if model.config is not None else None,
        "encoder": _network_header(model.encoder),
        "decoder": _network_header(model.decoder),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blobs = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.parameters())
    body = MAGIC + _UINT32.pack(FORMAT_VERSION) + _UINT32.pack(len(header_bytes)) + header_bytes + blobs
    return body + _UINT32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def save_model(model: AEModel, path: str) -> str:
    """
    Write a model file.

    Args:
        model: Model to save
        path: Output file

    Returns:
        str: The path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    data = model_to_bytes(model)
    with open(path, "wb") as handle:
        handle.write(data)
    logger.info(f"Saved model ({model.parameter_count()} parameters, {len(data)} bytes) to {path}")
    return path


def _read_network(section: Optional[Dict[str, Any]], blob: memoryview, cursor: int):
    if section is None:
        return None, cursor
    params: List[np.ndarray] = []
    for shape in section["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        end = cursor + 8 * count
        if end > len(blob):
            raise ModelFormatError("parameter data is truncated")
        params.append(np.frombuffer(blob[cursor:end], dtype="<f8").astype(np.float64).reshape(shape))
        cursor = end
    specs = [LayerSpec.from_dict(s) for s in section["specs"]]
    return Network.from_specs(specs, params=params), cursor


def model_from_bytes(data: bytes) -> AEModel:
    """
    Parse a model container.

    Raises:
        UnsupportedVersionError: Unknown format version
        ModelFormatError: Bad magic, checksum, header or parameter data
    """
    if len(data) < 16 or data[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic bytes)")
    version = _UINT32.unpack_from(data, 4)[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(version, FORMAT_VERSION)
    body, stored_crc = data[:-4], _UINT32.unpack_from(data, len(data) - 4)[0]
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ModelFormatError("checksum mismatch; the model file is corrupt")

    header_length = _UINT32.unpack_from(data, 8)[0]
    header_end = 12 + header_length
    if header_end > len(body):
        raise ModelFormatError("header is truncated")
    try:
        header = json.loads(bytes(body[12:header_end]).decode("utf-8"))
        blob = memoryview(body)
        encoder, cursor = _read_network(header["encoder"], blob, header_end)
        decoder, cursor = _read_network(header["decoder"], blob, cursor)
        config = AEConfig.from_dict(header["config"]) if header.get("config") else None
        model = AEModel(
            encoder, decoder, header["input_length"], header["latent_dim"],
            header.get("normalization", "minmax"), config, version,
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"invalid model header: {e}")
    if cursor != len(body):
        raise ModelFormatError(f"{len(body) - cursor} unexpected trailing bytes")
    return model


def load_model(path: str) -> AEModel:
    """
    Read a model file written by save_model.

    Args:
        path: Model file

    Returns:
        AEModel: The model, parameters bit-identical to the saved ones
    """
    with open(path, "rb") as handle:
        data = handle.read()
    model = model_from_bytes(data)
    logger.info(f"Loaded {model} from {path}")
    return model
