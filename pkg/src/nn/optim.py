import logging
from typing import List, Optional

import numpy as np

from src.nn.core import ParameterStore

logger = logging.getLogger(__name__)


def adam_step(store: ParameterStore,
              lr: float,
              beta1: float = 0.9,
              beta2: float = 0.99,
              eps: float = 1e-15) -> List[str]:
    """One bias-corrected Adam update over every non-frozen array of the store.

    Arrays whose gradient holds NaN or inf are left untouched (moments included)
    and counted in `store.nonfinite_skips`. Returns the names that were skipped.
    """
    store.step += 1
    t = store.step
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    skipped = []

    for name, param in store.params.items():
        if name in store.frozen:
            continue
        grad = store.grads[name]
        if not np.all(np.isfinite(grad)):
            skipped.append(name)
            continue
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        param -= lr * m_hat / (np.sqrt(v_hat) + eps)

    if skipped:
        store.nonfinite_skips += len(skipped)
        logger.warning(f"Skipped Adam update for non-finite gradients: {', '.join(skipped)}")
    return skipped


class Adam:
    """Adam optimizer bound to a parameter store"""

    def __init__(self,
                 store: ParameterStore,
                 lr: float = 1e-3,
                 beta1: float = 0.9,
                 beta2: float = 0.99,
                 eps: float = 1e-15):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, lr: Optional[float] = None) -> List[str]:
        return adam_step(self.store,
                         self.lr if lr is None else lr,
                         self.beta1, self.beta2, self.eps)
