import numpy as np

from src.utils.errors import ConfigurationError

C0 = 0.28209479177387814
C1 = 0.48860251190291987
C2 = (1.0925484305920792, 0.94617469575755997, 0.31539156525251999, 0.54627421529603959)
C3 = (0.59004358992664352, 2.8906114426405538, 0.45704579946446572, 0.3731763325901154,
      1.4453057213202769)


def sh_encode(dirs: np.ndarray, bands: int = 4) -> np.ndarray:
    """Real spherical-harmonic basis of unit directions, bands l = 0..bands-1.

    Rows of `dirs` that are not unit length are normalized first. Returns an
    array of shape (n, bands**2) in the same dtype as `dirs`.
    """
    if bands not in (1, 2, 3, 4):
        raise ConfigurationError(f"sh_encode supports 1 to 4 bands, got {bands}")
    dirs = np.asarray(dirs)
    norm = np.linalg.norm(dirs, axis=-1, keepdims=True)
    dirs = dirs / np.maximum(norm, 1e-12)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]

    out = np.empty((dirs.shape[0], bands * bands), dtype=dirs.dtype)
    out[:, 0] = C0
    if bands > 1:
        out[:, 1] = -C1 * y
        out[:, 2] = C1 * z
        out[:, 3] = -C1 * x
    if bands > 2:
        xx, yy, zz = x * x, y * y, z * z
        out[:, 4] = C2[0] * x * y
        out[:, 5] = -C2[0] * y * z
        out[:, 6] = C2[1] * zz - C2[2]
        out[:, 7] = -C2[0] * x * z
        out[:, 8] = C2[3] * (xx - yy)
    if bands > 3:
        out[:, 9] = C3[0] * y * (3.0 * xx - yy)
        out[:, 10] = C3[1] * x * y * z
        out[:, 11] = C3[2] * y * (5.0 * zz - 1.0)
        out[:, 12] = C3[3] * z * (5.0 * zz - 3.0)
        out[:, 13] = C3[2] * x * (5.0 * zz - 1.0)
        out[:, 14] = C3[4] * z * (xx - yy)
        out[:, 15] = C3[0] * x * (xx - 3.0 * yy)
    return out
