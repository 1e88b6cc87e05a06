"""Second-order forward-mode differentiation on numpy arrays.

A :class:`Jet` carries a value, its gradient and its Hessian with respect to a
fixed set of d coordinates, for every point of an array at once. Composite
test functions are built from jets so their first and second derivatives are
exact up to rounding; closed-form derivative formulas are checked against them.
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 100

    def __init__(self, val, grad, hess):
        self.val = np.asarray(val, dtype=float)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    @property
    def dim(self) -> int:
        return self.grad.shape[-1]

    @classmethod
    def variable(cls, value, index: int, dim: int) -> "Jet":
        v = np.asarray(value, dtype=float)
        g = np.zeros(v.shape + (dim,))
        g[..., index] = 1.0
        return cls(v, g, np.zeros(v.shape + (dim, dim)))

    @classmethod
    def constant(cls, value, dim: int, shape=None) -> "Jet":
        v = np.asarray(value, dtype=float)
        if shape is not None:
            v = np.broadcast_to(v, shape).copy()
        return cls(v, np.zeros(v.shape + (dim,)), np.zeros(v.shape + (dim, dim)))

    @classmethod
    def coordinates(cls, *arrays) -> list:
        dim = len(arrays)
        arrs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in arrays])
        return [cls.variable(a, k, dim) for k, a in enumerate(arrs)]

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(np.broadcast_to(np.asarray(other, dtype=float), self.val.shape), self.dim)

    def chain(self, f0, f1, f2) -> "Jet":
        """Apply a scalar function given its value and first two derivatives at self.val."""
        g = self.grad
        hess = f1[..., None, None] * self.hess + f2[..., None, None] * g[..., :, None] * g[..., None, :]
        return Jet(f0, f1[..., None] * g, hess)

    def __add__(self, other):
        o = self._lift(other)
        return Jet(self.val + o.val, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            return Jet(self.val * c, self.grad * c[..., None], self.hess * c[..., None, None])
        g1, g2 = self.grad, other.grad
        hess = (self.val[..., None, None] * other.hess + other.val[..., None, None] * self.hess
                + g1[..., :, None] * g2[..., None, :] + g2[..., :, None] * g1[..., None, :])
        return Jet(self.val * other.val, self.val[..., None] * g2 + other.val[..., None] * g1, hess)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.val
        return self.chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        p = float(p)
        v = self.val
        if p == 2.0:
            return self * self
        return self.chain(v**p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))

    def exp(self):
        e = np.exp(self.val)
        return self.chain(e, e, e)

    def log(self):
        v = self.val
        return self.chain(np.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self):
        s = np.sqrt(self.val)
        return self.chain(s, 0.5 / s, -0.25 / (s * self.val))

    def cos(self):
        return self.chain(np.cos(self.val), -np.sin(self.val), -np.cos(self.val))

    def sin(self):
        return self.chain(np.sin(self.val), np.cos(self.val), -np.sin(self.val))

    def laplacian(self) -> np.ndarray:
        return np.trace(self.hess, axis1=-2, axis2=-1)

    def gradsq(self) -> np.ndarray:
        return np.sum(self.grad**2, axis=-1)


def polar_gradsq(f: Jet, r: np.ndarray) -> np.ndarray:
    """|grad f|^2 for an axisymmetric f given as a jet in (r, rho)."""
    return f.grad[..., 0] ** 2 + (f.grad[..., 1] / r) ** 2


def polar_laplacian(f: Jet, r: np.ndarray, rho: np.ndarray, n: int) -> np.ndarray:
    """Laplacian in R^n of an axisymmetric f(r, rho) given as a jet in (r, rho)."""
    f_r, f_t = f.grad[..., 0], f.grad[..., 1]
    f_rr, f_tt = f.hess[..., 0, 0], f.hess[..., 1, 1]
    return f_rr + (n - 1) / r * f_r + (f_tt + (n - 2) * f_t / np.tan(rho)) / r**2
