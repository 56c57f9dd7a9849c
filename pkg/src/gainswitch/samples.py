"""Per-pulse sample container shared by the optics and analysis layers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = ["PulseSamples"]


@dataclass(frozen=True, eq=False)
class PulseSamples:
    """One scalar per pulse taken at the interference sampling point.

    ``bits`` is set when ``values`` are integer ADC codes; ``None`` marks
    normalized real values.
    """

    values: np.ndarray
    rep_rate: float
    bits: int | None = 8
    offset: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise InputError("PulseSamples values must be 1-D")
        if v.size < 2:
            raise InputError("PulseSamples needs at least 2 values")
        if self.bits is not None:
            if not np.issubdtype(v.dtype, np.integer):
                if not np.all(np.isfinite(v)) or np.any(v != np.round(v)):
                    raise InputError("integer-typed PulseSamples must hold whole codes")
                v = v.astype(np.int64)
            if v.min() < 0 or v.max() >= 2**self.bits:
                raise InputError(f"codes outside [0, {2**self.bits - 1}]")
        elif not np.all(np.isfinite(v)):
            raise InputError("PulseSamples values must be finite")
        v = v.view()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.count
