import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import torch
from pydantic import ValidationError

from bido.models.detector import BidoDetector
from bido.schemas.config import ModelConfig
from bido.utils.errors import IoFailure, MalformedContainer
from bido.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"BIDO"
VERSION = 1
PREAMBLE = struct.Struct("<4sHI")


class CheckpointServices:
    """
    Reads and writes model parameters in the BIDO tensor format:

    magic "BIDO", u16 version, u32 tensor count, then per tensor a u32 name
    length, the UTF-8 name, a u32 rank, u64 extents and float64 little-endian
    values. The model configuration travels in a JSON sidecar.
    """

    @staticmethod
    def encode_tensors(tensors: Dict[str, torch.Tensor]) -> bytes:
        chunks = [PREAMBLE.pack(MAGIC, VERSION, len(tensors))]
        for name, tensor in tensors.items():
            encoded = name.encode("utf-8")
            values = tensor.detach().cpu().to(torch.float64).contiguous().numpy()
            chunks.append(struct.pack("<I", len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack("<I", values.ndim))
            chunks.append(struct.pack(f"<{values.ndim}Q", *values.shape))
            chunks.append(values.astype("<f8").tobytes())
        return b"".join(chunks)

    @staticmethod
    def decode_tensors(data: bytes) -> Dict[str, torch.Tensor]:
        try:
            magic, version, count = PREAMBLE.unpack_from(data, 0)
        except struct.error:
            raise MalformedContainer("checkpoint is too short")
        if magic != MAGIC:
            raise MalformedContainer(f"bad checkpoint magic {magic!r}")
        if version != VERSION:
            raise MalformedContainer(f"unsupported checkpoint version {version}")

        offset = PREAMBLE.size
        tensors = {}
        try:
            for _ in range(count):
                (name_length,) = struct.unpack_from("<I", data, offset)
                offset += 4
                name = data[offset : offset + name_length].decode("utf-8")
                offset += name_length
                (rank,) = struct.unpack_from("<I", data, offset)
                offset += 4
                shape = struct.unpack_from(f"<{rank}Q", data, offset)
                offset += 8 * rank
                size = int(np.prod(shape, dtype=np.int64)) if rank else 1
                values = (
                    np.frombuffer(data, dtype="<f8", count=size, offset=offset)
                    if size
                    else np.zeros(0)
                )
                offset += 8 * size
                tensors[name] = torch.from_numpy(values.astype(np.float64).reshape(shape))
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise MalformedContainer(f"truncated or corrupt checkpoint: {exc}")
        return tensors

    @staticmethod
    def sidecar_path(path: Path) -> Path:
        return path.with_name(path.name + ".json")

    @staticmethod
    def save(model: BidoDetector, path: Path) -> Path:
        """
        Write the model parameters and its configuration sidecar.

        Args:
            model (BidoDetector): The trained model.
            path (Path): Checkpoint file path.

        Returns:
            Path: The checkpoint path.
        """
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(CheckpointServices.encode_tensors(model.state_dict()))
            CheckpointServices.sidecar_path(path).write_text(model.config.model_dump_json(indent=2))
        except OSError as exc:
            raise IoFailure(f"could not write checkpoint {path}: {exc}")
        logger.info(f"checkpoint written to {path}")
        return path

    @staticmethod
    def load(path: Path) -> Tuple[BidoDetector, ModelConfig]:
        """
        Rebuild a model from a checkpoint and its sidecar.

        Args:
            path (Path): Checkpoint file path.

        Returns:
            Tuple[BidoDetector, ModelConfig]: The model in eval mode and its configuration.
        """
        path = Path(path)
        sidecar = CheckpointServices.sidecar_path(path)
        try:
            data = path.read_bytes()
            config_json = sidecar.read_text()
        except OSError as exc:
            raise IoFailure(f"could not read checkpoint {path}: {exc}")
        try:
            config = ModelConfig.model_validate_json(config_json)
        except ValidationError as exc:
            raise MalformedContainer(f"invalid checkpoint sidecar {sidecar}: {exc}")

        model = BidoDetector(config)
        tensors = CheckpointServices.decode_tensors(data)
        expected = model.state_dict()
        if set(tensors) != set(expected):
            raise MalformedContainer("checkpoint tensors do not match the model architecture")
        for name, tensor in tensors.items():
            if tensor.shape != expected[name].shape:
                raise MalformedContainer(f"tensor {name} has shape {tuple(tensor.shape)}")
        model.load_state_dict(tensors)
        model.eval()
        return model, config
