"""Parameter-to-observable maps and finite-difference Jacobians.

Models are callables on a stacked coordinate vector; linear models also
expose their matrix so samplers can switch to exact conditional updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh_fem import DarcySolver


class ForwardModelError(ValueError):
    pass


def monod_forward(p, m, substrate):
    """Saturating growth response mu_i = p * S_i / (m + S_i)."""
    s = np.asarray(substrate, dtype=float)
    denom = m + s
    if np.any(np.abs(denom) < 1e-12):
        raise ForwardModelError(f"half-velocity offset m + S within 1e-12 of zero (m={m})")
    return p * s / denom


@dataclass(frozen=True)
class MonodModel:
    """Two-parameter saturation model observed at fixed substrate levels."""

    substrate: np.ndarray
    is_linear: bool = field(default=False, init=False)

    @property
    def q(self):
        return len(self.substrate)

    def __call__(self, s):
        p, m = np.asarray(s, dtype=float)
        return monod_forward(p, m, self.substrate)

    def jacobian(self, s):
        """Analytic Jacobian columns (d mu / d p, d mu / d m)."""
        p, m = np.asarray(s, dtype=float)
        sv = np.asarray(self.substrate, dtype=float)
        return np.column_stack([sv / (m + sv), -p * sv / (m + sv) ** 2])


def cokrige_forward(p, m, b1, b2):
    """Stacked pointwise observations (B1 @ p, B2 @ m)."""
    p = np.asarray(p, dtype=float)
    m = np.asarray(m, dtype=float)
    if b1.shape[1] != p.shape[0] or b2.shape[1] != m.shape[0]:
        raise ValueError(
            f"operator shapes {b1.shape}, {b2.shape} do not match fields "
            f"({p.shape[0]},), ({m.shape[0]},)"
        )
    return np.concatenate([b1 @ p, b2 @ m])


@dataclass(frozen=True)
class CokrigeModel:
    """Linear model selecting p at one set of locations and m at another."""

    b1: np.ndarray
    b2: np.ndarray
    is_linear: bool = field(default=True, init=False)

    @property
    def n1(self):
        return self.b1.shape[1]

    @property
    def n2(self):
        return self.b2.shape[1]

    @property
    def matrix(self):
        g = np.zeros((self.b1.shape[0] + self.b2.shape[0], self.n1 + self.n2))
        g[: self.b1.shape[0], : self.n1] = self.b1
        g[self.b1.shape[0] :, self.n1 :] = self.b2
        return g

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return cokrige_forward(s[: self.n1], s[self.n1 :], self.b1, self.b2)


def darcy_forward(p, m, mesh, b1, b2, solver=None):
    """Head observations B1 @ u(p, m) stacked with direct observations B2 @ p."""
    solver = solver if solver is not None else DarcySolver(mesh)
    u = solver.solve(p, m)
    return np.concatenate([b1 @ u, b2 @ np.asarray(p, dtype=float)])


class DarcyModel:
    """Nonlinear groundwater model: log-permeability p and log-recharge m to
    pointwise head and permeability observations."""

    is_linear = False

    def __init__(self, mesh, b1, b2):
        self.mesh = mesh
        self.b1 = b1
        self.b2 = b2
        self.solver = DarcySolver(mesh)

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        n = self.n_nodes
        return darcy_forward(s[:n], s[n:], self.mesh, self.b1, self.b2, solver=self.solver)


@dataclass(frozen=True)
class ReducedFieldMap:
    """Truncated-basis reconstruction of the two fields from reduced coordinates."""

    basis_p: object
    basis_m: object
    mean_p: np.ndarray
    mean_m: np.ndarray

    @property
    def k(self):
        return self.basis_p.k + self.basis_m.k

    def expand(self, shat):
        shat = np.asarray(shat, dtype=float)
        kp = self.basis_p.k
        p = self.mean_p + self.basis_p.expand(shat[:kp])
        m = self.mean_m + self.basis_m.expand(shat[kp:])
        return p, m

    def project(self, p, m):
        """Basis projection of mean-free fields (warm-start initialisation)."""
        return np.concatenate([
            self.basis_p.modes.T @ (np.asarray(p, dtype=float) - self.mean_p)
            / self.basis_p.scales,
            self.basis_m.modes.T @ (np.asarray(m, dtype=float) - self.mean_m)
            / self.basis_m.scales,
        ])


class ReducedModel:
    """Forward model composed with a reduced-coordinate field reconstruction."""

    is_linear = False

    def __init__(self, base, field_map):
        self.base = base
        self.field_map = field_map

    def __call__(self, shat):
        p, m = self.field_map.expand(shat)
        return self.base(np.concatenate([p, m]))


def fd_jacobian(model, s0, h_rel=1e-5):
    """Central-difference Jacobian with per-coordinate step h_rel * (1 + |s0_i|)."""
    s0 = np.asarray(s0, dtype=float)
    cols = []
    for i in range(s0.size):
        h = h_rel * (1.0 + abs(s0[i]))
        sp = s0.copy()
        sm = s0.copy()
        sp[i] += h
        sm[i] -= h
        try:
            fp = np.asarray(model(sp), dtype=float)
            fm = np.asarray(model(sm), dtype=float)
        except Exception as exc:
            raise ForwardModelError(
                f"forward model failed while perturbing coordinate {i}: {exc}"
            ) from exc
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise ForwardModelError(
                f"forward model returned non-finite values while perturbing coordinate {i}"
            )
        cols.append((fp - fm) / (2.0 * h))
    return np.column_stack(cols)
