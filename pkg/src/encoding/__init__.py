from src.encoding.hash_grid import GridLevelSpec, MultiResHashGrid, level_resolutions, vertex_index
from src.encoding.spatial_mask import (PinnedMask, SpatialMaskField, apply_mask,
                                       apply_mask_backward)
