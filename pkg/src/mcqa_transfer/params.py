"""Named parameter collections and the SGD update."""
import fnmatch

import numpy as np

from .errors import ContractError, DomainError
from .tensor import Tensor


class ParamStore:
    """Dotted name -> Tensor, with a frozen flag per name.

    Iteration is lexicographic by name. Frozen tensors have
    ``requires_grad=False`` so no graph is recorded through them.
    ``pretrained`` lists names that were initialised from external vectors;
    freeze presets keep those frozen unless told otherwise.
    """

    def __init__(self):
        self._params = {}
        self._frozen = set()
        self.pretrained = set()

    def add(self, name, value, frozen=False, pretrained=False):
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        self._params[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=not frozen, name=name)
        if frozen:
            self._frozen.add(name)
        if pretrained:
            self.pretrained.add(name)
        return self._params[name]

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self.names())

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def match(self, pattern):
        return [n for n in self.names() if fnmatch.fnmatchcase(n, pattern)]

    def is_frozen(self, name):
        return name in self._frozen

    def set_frozen(self, name, frozen=True):
        t = self._params[name]
        if frozen:
            self._frozen.add(name)
        else:
            self._frozen.discard(name)
        t.requires_grad = not frozen
        if frozen:
            t.grad = None

    def freeze_only(self, names):
        """Freeze exactly ``names`` and unfreeze everything else."""
        names = set(names)
        for n in self._params:
            self.set_frozen(n, n in names)

    def frozen(self):
        return sorted(self._frozen)

    def trainable(self):
        return [n for n in self.names() if n not in self._frozen]

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def copy(self):
        other = ParamStore()
        for n in self.names():
            other.add(n, self._params[n].data.copy(), frozen=n in self._frozen)
        other.pretrained = set(self.pretrained)
        return other

    def arrays(self):
        return {n: self._params[n].data for n in self.names()}

    def load_arrays(self, arrays):
        for n, v in arrays.items():
            t = self._params[n]
            v = np.asarray(v, dtype=np.float64)
            if v.shape != t.shape:
                raise ContractError(f"shape mismatch for {n!r}: {v.shape} vs {t.shape}")
            t.data = v.copy()

    def equal(self, other):
        """Bit-for-bit equality of names, frozen flags and values."""
        if self.names() != other.names() or self.frozen() != other.frozen():
            return False
        return all(np.array_equal(self[n].data, other[n].data) for n in self.names())

    def __repr__(self):
        return f"ParamStore({len(self)} tensors, {len(self._frozen)} frozen)"


def sgd_step(store, lr):
    """``p <- p - lr * grad(p)`` on every unfrozen parameter, then clear grads."""
    if not lr >= 0:
        raise DomainError(f"learning rate must be non-negative, got {lr}")
    for name in store.trainable():
        if store[name].grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
    if lr > 0:
        for name in store.trainable():
            t = store[name]
            t.data = t.data - lr * t.grad
    store.zero_grad()
    return store
