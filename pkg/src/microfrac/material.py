"""Isotropic plane-strain material law.

The stored elastic density is

    w(e) = mu * (e_xx^2 + e_yy^2 + 2 e_xy^2) + lam/2 * (e_xx + e_yy)^2,

a strictly positive definite quadratic form on symmetric strains for
``mu > 0`` and ``lam + mu > 0``.  Strains travel in Voigt order
``(e_xx, e_yy, e_xy)``; note the shear slot holds the tensor component
``e_xy``, not the engineering shear ``2 e_xy``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Material:
    """Lame parameters plus the Griffith surface energy per unit length."""

    lam: float
    mu: float
    griffith: float

    def __post_init__(self):
        self.lam = float(self.lam)
        self.mu = float(self.mu)
        self.griffith = float(self.griffith)
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.lam + self.mu <= 0:
            raise ValueError("lam + mu must be positive")
        if self.griffith < 0:
            raise ValueError("griffith must be nonnegative")


def density(material, strain):
    """Elastic energy density for Voigt strains of shape ``(..., 3)``."""
    e = np.asarray(strain, dtype=np.float64)
    exx, eyy, exy = e[..., 0], e[..., 1], e[..., 2]
    return material.mu * (exx**2 + eyy**2 + 2.0 * exy**2) + (
        material.lam / 2.0
    ) * (exx + eyy) ** 2


def stiffness_form(material):
    """Symmetric 3x3 matrix ``Q`` with ``density(e) = 1/2 e' Q e``."""
    lam, mu = material.lam, material.mu
    return np.array(
        [
            [2.0 * mu + lam, lam, 0.0],
            [lam, 2.0 * mu + lam, 0.0],
            [0.0, 0.0, 4.0 * mu],
        ]
    )


def sym_grad(grad):
    """Voigt symmetric part of displacement gradients ``(..., 2, 2)``."""
    g = np.asarray(grad, dtype=np.float64)
    exx = g[..., 0, 0]
    eyy = g[..., 1, 1]
    exy = 0.5 * (g[..., 0, 1] + g[..., 1, 0])
    return np.stack([exx, eyy, exy], axis=-1)


def coercivity_constant(material):
    """Largest ``c`` with ``density(e) >= c * (e_xx^2 + e_yy^2 + 2 e_xy^2)``
    guaranteed by the admissibility bounds on the Lame parameters."""
    return min(material.mu, material.mu + material.lam)
