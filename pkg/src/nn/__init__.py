from src.nn.core import (DenseLayer, MLP, ParameterStore, component_rng, get_dtype,
                         set_precision, softplus)
from src.nn.optim import Adam, adam_step
from src.nn.spherical_harmonics import sh_encode
