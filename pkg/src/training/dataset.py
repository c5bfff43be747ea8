import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from tqdm import tqdm

from src.render.image_io import ImageUtils
from src.scene.manifest import SceneManifest
from src.utils.errors import ConfigurationError


class SceneDataset:
    """Posed images of a generated scene, sampled uniformly over all pixels"""

    def __init__(self, root: Union[str, Path]):
        self.logger = logging.getLogger('dataset')
        self.root = Path(root)
        try:
            self.manifest = SceneManifest.load(self.root)
            self.cameras = self.manifest.cameras()
            if len(self.cameras) == 0:
                raise ConfigurationError(f"Dataset {self.root} has no frames")
            intr = self.manifest.intrinsics
            self.width, self.height = int(intr['width']), int(intr['height'])
            self.fx, self.fy, self.cx, self.cy = intr['fx'], intr['fy'], intr['cx'], intr['cy']

            images = []
            for frame in tqdm(self.manifest.frames, desc="Loading images", disable=len(self.cameras) < 8):
                image = ImageUtils.read_ppm(self.root / frame['file'])
                if image.shape != (self.height, self.width, 3):
                    raise ConfigurationError(
                        f"{frame['file']} is {image.shape[1]}x{image.shape[0]}, "
                        f"manifest declares {self.width}x{self.height}")
                images.append(image)
            self.images = np.stack(images)
        except Exception as e:
            self.logger.error(f"Dataset loading error: {str(e)}")
            raise

        self.rotations = np.stack([cam.rotation for cam in self.cameras])
        self.centers = np.stack([cam.center for cam in self.cameras])
        self.background = np.asarray(self.manifest.background, dtype=np.float64)
        self.logger.info(f"Loaded {len(self.cameras)} views of {self.width}x{self.height} from {self.root}")

    @property
    def n_pixels(self) -> int:
        return self.images.shape[0] * self.width * self.height

    def sample_rays(self, rng: np.random.Generator, n_rays: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Uniform pixels over every view with sub-pixel jitter: (origins, dirs, target colors)"""
        flat = rng.integers(0, self.n_pixels, n_rays)
        jitter = rng.random((n_rays, 2))
        view, pixel = np.divmod(flat, self.width * self.height)
        v, u = np.divmod(pixel, self.width)
        cam = np.stack([(u + jitter[:, 0] - self.cx) / self.fx,
                        (v + jitter[:, 1] - self.cy) / self.fy,
                        np.ones(n_rays)], axis=1)
        dirs = np.einsum('nij,nj->ni', self.rotations[view], cam)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return self.centers[view].copy(), dirs, self.images[view, v, u]
