"""The worker-visible network: protected trunk plus expanded output layer.

To the worker this is an ordinary rectifier MLP with an ``N_o``-wide linear
output.  Nothing in here (or in its file) names the sets, the hash pairs, the
class count or the thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from . import serialization as ser

PUBLIC_FORMAT = "checknet-public"


@dataclass
class PublicModel:
    layers: list

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def sizes(self) -> list[int]:
        return [self.input_dim] + [W.shape[0] for W, _ in self.layers]

    def forward(self, x) -> np.ndarray:
        """Outputs for one input or a batch.

        Batches are evaluated row by row: a blocked matrix product rounds
        differently from a matrix-vector one, and a worker answering single
        queries must reproduce the owner's outputs bit for bit.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.input_dim,) or x.ndim > 2:
            raise nx.ShapeError(f"expected inputs of width {self.input_dim}, got {x.shape}")
        if x.ndim == 1:
            return nx.mlp_forward(self.layers, x)[-1]
        out = np.empty((len(x), self.output_dim))
        for i, row in enumerate(x):
            out[i] = nx.mlp_forward(self.layers, row)[-1]
        return out

    __call__ = forward

    def to_doc(self) -> dict:
        return {"format": PUBLIC_FORMAT, "version": ser.FORMAT_VERSION,
                "input_dim": self.input_dim, "output_dim": self.output_dim,
                "activation": "relu", "layers": ser.encode_layers(self.layers)}

    @classmethod
    def from_doc(cls, doc: dict) -> "PublicModel":
        try:
            model = cls(ser.decode_layers(doc["layers"]))
            ok = model.input_dim == doc["input_dim"] and model.output_dim == doc["output_dim"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ser.BundleError(f"malformed public model: {exc}") from exc
        for (W1, _), (W2, _) in zip(model.layers, model.layers[1:]):
            ok = ok and W1.shape[0] == W2.shape[1]
        if not ok:
            raise ser.BundleError("public model layer shapes are inconsistent")
        return model

    def save(self, path) -> None:
        ser.write_json(path, self.to_doc())


def load_public(path) -> PublicModel:
    return PublicModel.from_doc(ser.read_json(path, PUBLIC_FORMAT))
