"""Minimal vectorized forward-mode differentiation.

An :class:`Ad` holds values ``val`` (shape ``(n,)``) and their gradients
``jac`` (shape ``(n, k)``) with respect to ``k`` local unknowns. All entries
share the same local unknown layout (e.g. ``(P, S, C)`` of one cell, or of
the two cells of a face).
"""

from __future__ import annotations

import numpy as np


class Ad:
    __slots__ = ("val", "jac")
    __array_priority__ = 100.0

    def __init__(self, val, jac):
        self.val = np.asarray(val, dtype=float)
        self.jac = np.asarray(jac, dtype=float)

    @classmethod
    def variable(cls, val, slot: int, width: int) -> "Ad":
        val = np.asarray(val, dtype=float)
        jac = np.zeros((val.size, width))
        jac[:, slot] = 1.0
        return cls(val, jac)

    @classmethod
    def constant(cls, val, width: int) -> "Ad":
        val = np.asarray(val, dtype=float)
        return cls(val, np.zeros((val.size, width)))

    @property
    def width(self) -> int:
        return self.jac.shape[1]

    def __len__(self):
        return self.val.size

    def __getitem__(self, idx) -> "Ad":
        return Ad(self.val[idx], self.jac[idx])

    def chain(self, value, deriv) -> "Ad":
        """Compose with a univariate function given its value and derivative here."""
        return Ad(value, np.asarray(deriv)[:, None] * self.jac)

    def embed(self, offset: int, width: int) -> "Ad":
        """Place this gradient into columns ``offset:offset+self.width`` of a wider layout."""
        jac = np.zeros((self.val.size, width))
        jac[:, offset : offset + self.width] = self.jac
        return Ad(self.val, jac)

    # arithmetic ------------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Ad):
            return Ad(self.val + other.val, self.jac + other.jac)
        return Ad(self.val + other, self.jac)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Ad):
            return Ad(self.val - other.val, self.jac - other.jac)
        return Ad(self.val - other, self.jac)

    def __rsub__(self, other):
        return Ad(other - self.val, -self.jac)

    def __neg__(self):
        return Ad(-self.val, -self.jac)

    def __mul__(self, other):
        if isinstance(other, Ad):
            return Ad(self.val * other.val, self.jac * other.val[:, None] + other.jac * self.val[:, None])
        other = np.asarray(other, dtype=float)
        return Ad(self.val * other, self.jac * (other[:, None] if other.ndim else other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Ad):
            inv = 1.0 / other.val
            val = self.val * inv
            return Ad(val, (self.jac - other.jac * val[:, None]) * inv[:, None])
        other = np.asarray(other, dtype=float)
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        val = other * inv
        d = -val * inv
        return Ad(val, self.jac * d[:, None])

    def __pow__(self, p: float):
        v = self.val**p
        d = p * self.val ** (p - 1.0)
        return Ad(v, self.jac * d[:, None])

    def __repr__(self):
        return f"Ad(val={self.val!r}, jac={self.jac!r})"


def where(mask, a: Ad, b: Ad) -> Ad:
    mask = np.asarray(mask, dtype=bool)
    return Ad(np.where(mask, a.val, b.val), np.where(mask[:, None], a.jac, b.jac))


def value(x):
    return x.val if isinstance(x, Ad) else x
