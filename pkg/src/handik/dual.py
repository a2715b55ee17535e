"""Forward-mode automatic differentiation with vectorised dual numbers.

A :class:`Dual` carries a value array of shape ``S`` and a partials array of
shape ``S + (n,)``: every element is a dual scalar with ``n`` derivative
slots.  Arithmetic on the value slot reproduces plain numpy arithmetic
exactly, while the partials propagate exact first derivatives.  Batching the
partials into one trailing axis keeps derivative evaluation at numpy speed
instead of paying Python overhead per scalar.

The module-level ``sin``/``cos``/``sqrt``/``value``/``concat`` helpers
dispatch on the input type so numeric code can be written once and run on
either plain arrays or duals.
"""

from __future__ import annotations

import numpy as np


class Dual:
    """Array of dual scalars: values plus a trailing axis of partials."""

    __slots__ = ("val", "eps")

    # Make ndarray-on-the-left arithmetic defer to our reflected methods
    # instead of building object arrays.
    __array_ufunc__ = None

    def __init__(self, val, eps):
        self.val = val
        self.eps = eps

    @classmethod
    def _make(cls, val, eps):
        # Keep eps aligned to val's shape so indexing stays consistent.
        val = np.asarray(val)
        if eps.shape[:-1] != val.shape:
            eps = np.broadcast_to(eps, val.shape + eps.shape[-1:])
        return cls(val, eps)

    @classmethod
    def seed(cls, values, offset, n):
        """Lift ``values`` (shape ``(k,)``) into duals seeded on consecutive
        derivative slots starting at ``offset``."""
        values = np.asarray(values, dtype=float)
        k = values.shape[0] if values.ndim else 1
        eps = np.zeros(values.shape + (n,))
        idx = np.arange(k)
        eps.reshape(k, n)[idx, offset + idx] = 1.0
        return cls(values, eps)

    @classmethod
    def constant(cls, values, n):
        values = np.asarray(values, dtype=float)
        return cls(values, np.zeros(values.shape + (n,)))

    @property
    def nslots(self):
        return self.eps.shape[-1]

    def __getitem__(self, key):
        return Dual(self.val[key], self.eps[key])

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual._make(self.val + other.val, self.eps + other.eps)
        return Dual._make(self.val + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual._make(self.val - other.val, self.eps - other.eps)
        return Dual._make(self.val - other, self.eps)

    def __rsub__(self, other):
        return Dual._make(other - self.val, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual._make(
                self.val * other.val,
                self.eps * other.val[..., None] + other.eps * self.val[..., None],
            )
        other = np.asarray(other)
        return Dual._make(self.val * other, self.eps * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            val = self.val / other.val
            eps = (self.eps - val[..., None] * other.eps) / other.val[..., None]
            return Dual._make(val, eps)
        other = np.asarray(other)
        return Dual._make(self.val / other, self.eps / other[..., None])

    def __rtruediv__(self, other):
        val = other / self.val
        return Dual._make(val, -(val / self.val)[..., None] * self.eps)

    def sin(self):
        return Dual(np.sin(self.val), np.cos(self.val)[..., None] * self.eps)

    def cos(self):
        return Dual(np.cos(self.val), -np.sin(self.val)[..., None] * self.eps)

    def sqrt(self):
        root = np.sqrt(self.val)
        return Dual(root, self.eps / (2.0 * root[..., None]))

    def __repr__(self):
        return f"Dual(val={self.val!r}, nslots={self.nslots})"


def value(x):
    """Value slot of ``x`` whether it is a Dual or a plain array."""
    return x.val if isinstance(x, Dual) else x


def sin(x):
    return x.sin() if isinstance(x, Dual) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Dual) else np.cos(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Dual) else np.sqrt(x)


def concat(parts):
    """Concatenate a mix of 1-d arrays and Duals along axis 0."""
    n = next((p.nslots for p in parts if isinstance(p, Dual)), None)
    if n is None:
        return np.concatenate([np.atleast_1d(p) for p in parts])
    vals = []
    epss = []
    for p in parts:
        if isinstance(p, Dual):
            v = np.atleast_1d(p.val)
            e = p.eps.reshape(v.shape + (n,))
        else:
            v = np.atleast_1d(np.asarray(p, dtype=float))
            e = np.zeros(v.shape + (n,))
        vals.append(v)
        epss.append(e)
    return Dual(np.concatenate(vals), np.concatenate(epss, axis=0))
