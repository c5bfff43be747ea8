import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from src.nn.core import ParameterStore
from src.utils.errors import ConfigurationError

MAGIC = b'AHSDFCKP'
VERSION = 1
CHECKPOINT_SUFFIX = '.ckpt'

logger = logging.getLogger('checkpoint')


@dataclass
class Checkpoint:
    header: Dict[str, Any]
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.header['step'])

    @property
    def config(self) -> Dict[str, Any]:
        return self.header['config']


def _store_arrays(store: ParameterStore) -> Dict[str, np.ndarray]:
    arrays = {}
    for name in store.names():
        arrays[f"param/{name}"] = store.params[name]
        arrays[f"adam_m/{name}"] = store.m[name]
        arrays[f"adam_v/{name}"] = store.v[name]
    return arrays


def save_checkpoint(path: Union[str, Path],
                    store: ParameterStore,
                    step: int,
                    config: Dict[str, Any],
                    rng_state: Optional[Dict[str, Any]] = None,
                    state: Optional[Dict[str, Any]] = None) -> Path:
    """Magic, u32 header length, JSON header, then length-prefixed little-endian float32 blobs"""
    path = Path(path)
    arrays = _store_arrays(store)
    header = {
        'version': VERSION,
        'step': int(step),
        'adam_step': int(store.step),
        'config': config,
        'rng': rng_state,
        'state': state or {},
        'arrays': [{'name': name, 'shape': list(arr.shape)} for name, arr in arrays.items()],
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
        with open(path, 'wb') as f:
            f.write(MAGIC)
            f.write(struct.pack('<I', len(header_bytes)))
            f.write(header_bytes)
            for arr in arrays.values():
                blob = np.ascontiguousarray(arr, dtype='<f4').tobytes()
                f.write(struct.pack('<Q', len(blob)))
                f.write(blob)
        logger.info(f"Checkpoint saved: {path} (step {step})")
        return path
    except Exception as e:
        logger.error(f"Checkpoint write error: {str(e)}")
        raise


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    with open(path, 'rb') as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ConfigurationError(f"{path} is not a checkpoint file")
        (header_len,) = struct.unpack('<I', f.read(4))
        header = json.loads(f.read(header_len).decode('utf-8'))
        if 'version' not in header:
            raise ConfigurationError(f"{path}: checkpoint header lacks a version")
        if header['version'] != VERSION:
            raise ConfigurationError(f"{path}: unsupported checkpoint version {header['version']}")
        arrays = {}
        for entry in header['arrays']:
            (size,) = struct.unpack('<Q', f.read(8))
            data = np.frombuffer(f.read(size), dtype='<f4')
            arrays[entry['name']] = data.reshape(entry['shape'])
    return Checkpoint(header, arrays)


def restore_store(store: ParameterStore, checkpoint: Checkpoint) -> None:
    """Copy parameters and Adam moments into a store built from the same config"""
    expected = set(_store_arrays(store))
    found = set(checkpoint.arrays)
    if expected != found:
        raise ConfigurationError(
            f"Checkpoint arrays do not match the model: missing {sorted(expected - found)[:5]}, "
            f"unexpected {sorted(found - expected)[:5]}")
    for name in store.names():
        store.assign(name, checkpoint.arrays[f"param/{name}"])
        store.m[name][...] = checkpoint.arrays[f"adam_m/{name}"]
        store.v[name][...] = checkpoint.arrays[f"adam_v/{name}"]
    store.step = int(checkpoint.header.get('adam_step', 0))


def list_checkpoints(directory: Union[str, Path]) -> List[Path]:
    return sorted(Path(directory).glob(f"step_*{CHECKPOINT_SUFFIX}"))


def checkpoint_name(step: int) -> str:
    return f"step_{step:07d}{CHECKPOINT_SUFFIX}"
