import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from src.render.camera import CameraModel
from src.utils.errors import ConfigurationError

MANIFEST_NAME = 'manifest.json'


@dataclass
class SceneManifest:
    intrinsics: Dict[str, float]
    background: List[float]
    frames: List[Dict] = field(default_factory=list)
    scene: str = ''
    scale: float = 1.0
    seed: int = 0

    def cameras(self) -> List[CameraModel]:
        intr = self.intrinsics
        return [CameraModel(intr['fx'], intr['fy'], intr['cx'], intr['cy'],
                            int(intr['width']), int(intr['height']),
                            np.asarray(frame['transform'], dtype=np.float64).reshape(3, 4))
                for frame in self.frames]

    def to_dict(self) -> Dict:
        return {
            'scene': self.scene,
            'scale': self.scale,
            'seed': self.seed,
            'intrinsics': self.intrinsics,
            'background': list(self.background),
            'frames': self.frames,
        }

    def save(self, out_dir: Union[str, Path]) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load(cls, root: Union[str, Path]) -> 'SceneManifest':
        path = Path(root)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.exists():
            raise FileNotFoundError(f"Manifest not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        missing = {'intrinsics', 'background', 'frames'} - set(data)
        if missing:
            raise ConfigurationError(f"Manifest {path} lacks keys: {sorted(missing)}")
        return cls(intrinsics=data['intrinsics'], background=data['background'], frames=data['frames'],
                   scene=data.get('scene', ''), scale=data.get('scale', 1.0), seed=data.get('seed', 0))
