from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class Dataset:
    """Per-output observations, possibly at different inputs (heterotopic).

    The flattened views (:attr:`X`, :attr:`outputs`, :attr:`y`) stack the
    outputs in order, i.e. output-major blocks.
    """

    inputs: list
    targets: list
    names: list = field(default=None)

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise DataError("inputs and targets must list the same outputs")
        if not self.inputs:
            raise DataError("dataset has no outputs")
        xs, ys = [], []
        p = None
        for d, (x, y) in enumerate(zip(self.inputs, self.targets)):
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x.reshape(-1, 1)
            y = np.asarray(y, dtype=float).ravel()
            if x.shape[0] != y.shape[0]:
                raise DataError(f"output {d}: {x.shape[0]} inputs but {y.shape[0]} targets")
            if x.shape[0] and p is not None and x.shape[1] != p:
                raise DataError(f"output {d}: input dimension {x.shape[1]} != {p}")
            if x.shape[0]:
                p = x.shape[1]
            xs.append(x)
            ys.append(y)
        p = p or 1
        self.inputs = [x if x.shape[0] else np.zeros((0, p)) for x in xs]
        self.targets = ys
        if self.names is None:
            self.names = [str(d) for d in range(len(xs))]
        self.names = [str(n) for n in self.names]

    @property
    def n_outputs(self) -> int:
        return len(self.inputs)

    @property
    def input_dim(self) -> int:
        return self.inputs[0].shape[1]

    @property
    def sizes(self) -> list[int]:
        return [x.shape[0] for x in self.inputs]

    def __len__(self):
        return sum(self.sizes)

    @property
    def X(self) -> np.ndarray:
        return np.ascontiguousarray(np.vstack(self.inputs))

    @property
    def outputs(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_outputs), self.sizes)

    @property
    def y(self) -> np.ndarray:
        return np.concatenate(self.targets)

    def permuted(self, order) -> "Dataset":
        """Dataset with the outputs relabelled in ``order``."""
        return Dataset(
            [self.inputs[i] for i in order],
            [self.targets[i] for i in order],
            [self.names[i] for i in order],
        )

    def subset(self, index_per_output) -> "Dataset":
        return Dataset(
            [x[idx] for x, idx in zip(self.inputs, index_per_output)],
            [y[idx] for y, idx in zip(self.targets, index_per_output)],
            list(self.names),
        )
