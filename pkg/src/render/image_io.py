import logging
from pathlib import Path
from typing import Union

import cv2
import numpy as np

logger = logging.getLogger('image_io')


class ImageUtils:
    @staticmethod
    def quantize(image: np.ndarray) -> np.ndarray:
        """Linear [0, 1] floats to 8-bit, clamped, round half up"""
        return np.floor(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)

    @staticmethod
    def write_ppm(path: Union[str, Path], image: np.ndarray) -> Path:
        """Write an (H, W, 3) RGB image as binary PPM (P6, maxval 255)"""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            data = ImageUtils.quantize(image)
            if not cv2.imwrite(str(path), cv2.cvtColor(data, cv2.COLOR_RGB2BGR)):
                raise IOError(f"OpenCV could not write {path}")
            return path
        except Exception as e:
            logger.error(f"PPM write error: {str(e)}")
            raise

    @staticmethod
    def read_ppm(path: Union[str, Path]) -> np.ndarray:
        """(H, W, 3) RGB floats in [0, 1]"""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Image not found: {path}")
        data = cv2.imread(str(path), cv2.IMREAD_COLOR)
        if data is None:
            raise IOError(f"OpenCV could not decode {path}")
        return cv2.cvtColor(data, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0

    @staticmethod
    def colormap(values: np.ndarray) -> np.ndarray:
        """Blue (0) to red (1) ramp: (v, 0, 1 - v)"""
        v = np.clip(values, 0.0, 1.0)
        return np.stack([v, np.zeros_like(v), 1.0 - v], axis=-1)
