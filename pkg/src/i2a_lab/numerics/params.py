"""Flat parameter storage with named slices."""

import numpy as np


class ParamVector:
    """All trainable values of a model in one float64 array.

    ``layout`` maps a name to ``(offset, shape)``; slices are contiguous,
    non-overlapping and cover ``values`` exactly.
    """

    def __init__(self, specs, values=None):
        self.layout = {}
        offset = 0
        for name, shape in specs:
            shape = tuple(int(s) for s in shape)
            if name in self.layout:
                raise ValueError(f"duplicate parameter name {name!r}")
            self.layout[name] = (offset, shape)
            offset += int(np.prod(shape, dtype=np.int64))
        if values is None:
            values = np.zeros(offset)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (offset,):
            raise ValueError(f"expected {offset} values, got shape {values.shape}")
        self.values = values

    @property
    def size(self):
        return self.values.size

    @property
    def specs(self):
        return [(name, shape) for name, (_, shape) in self.layout.items()]

    def __contains__(self, name):
        return name in self.layout

    def view(self, name, array=None):
        """Reshaped view of one slice of ``values`` (or of ``array``)."""
        offset, shape = self.layout[name]
        n = int(np.prod(shape, dtype=np.int64))
        src = self.values if array is None else array
        return src[offset:offset + n].reshape(shape)

    def __getitem__(self, name):
        return self.view(name)

    def __setitem__(self, name, value):
        self.view(name)[...] = value

    def copy(self):
        return ParamVector(self.specs, self.values.copy())

    def with_values(self, values):
        return ParamVector(self.specs, values)

    def names(self, prefix=""):
        return [n for n in self.layout if n.startswith(prefix)]

    def check(self):
        covered = 0
        for name, (offset, shape) in sorted(self.layout.items(), key=lambda kv: kv[1][0]):
            if offset != covered:
                raise ValueError(f"layout gap or overlap at {name!r}")
            covered += int(np.prod(shape, dtype=np.int64))
        if covered != self.values.size:
            raise ValueError("layout does not cover the value array")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite parameter values")

    def to_dict(self):
        return {"specs": [[n, list(s)] for n, s in self.specs], "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls([(n, tuple(s)) for n, s in d["specs"]], np.array(d["values"], dtype=np.float64))


def init_params(specs, rng, scale=None):
    """Glorot-uniform weights for 2-D slices, zeros for biases.

    Names ending in ``.b`` are biases; ``scale`` overrides the bound.
    """
    pv = ParamVector(specs)
    gen = rng.numpy()
    for name, shape in specs:
        if name.endswith(".b") or len(shape) < 2:
            continue
        fan_in, fan_out = shape[0], shape[-1]
        bound = scale if scale is not None else np.sqrt(6.0 / (fan_in + fan_out))
        pv[name] = gen.uniform(-bound, bound, size=shape)
    return pv
