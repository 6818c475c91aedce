"""Jointly normal prior with prescribed marginals and contraction-encoded
cross-correlation.

Given whitening filters L_p, L_m of the two marginal covariances and a strict
contraction C, the joint covariance

    Gamma = [[Gamma_p,               L_p^{-1} C L_m^{-T}],
             [L_m^{-1} C^T L_p^{-T}, Gamma_m          ]]

is positive definite for every strict contraction and preserves both
marginals exactly.  Sampling and whitening never densify Gamma: with the
defect operator D (D D^T = I - C^T C),

    draw    s = [[L_p^{-1},      0        ],   whiten  L = [[L_p,               0          ],
                 [L_m^{-1} C^T,  L_m^{-1} D]]               [-D^{-1} C^T L_p,   D^{-1} L_m]]

satisfy cov(draw(eta)) = Gamma and Gamma = (L^T L)^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import CONTRACTION_MARGIN, ContractionError, scale_rows


class Defect(object):
    """Defect operator D with D @ D.T == I - C.T @ C.

    Diagonal for diagonal-like contractions; otherwise the symmetric root of
    the Gram complement, stored by its eigendecomposition.
    """

    def __init__(self, diag=None, eig=None):
        self._diag = diag
        self._eig = eig  # (w, q) of I - C^T C

    @property
    def dim(self):
        return self._diag.shape[0] if self._diag is not None else self._eig[1].shape[0]

    def apply(self, x):
        if self._diag is not None:
            return scale_rows(self._diag, x)
        w, q = self._eig
        return q @ scale_rows(np.sqrt(w), q.T @ x)

    def solve(self, x):
        if self._diag is not None:
            return scale_rows(1.0 / self._diag, x)
        w, q = self._eig
        return q @ scale_rows(1.0 / np.sqrt(w), q.T @ x)

    def dense(self):
        if self._diag is not None:
            return np.diag(self._diag)
        w, q = self._eig
        return (q * np.sqrt(w)) @ q.T


class Contraction:
    """Cross-correlation operator with spectral norm strictly below 1.

    Variants:
      scalar          c * I on a shared n-node index set
      piecewise       diag(values[labels]) - one coefficient per subdomain label
      paired_sparse   C[rows[k], cols[k]] = values[k], a one-to-one pairing
                      (couples fields of different dimensions)
      dense           arbitrary rectangular strict contraction

    The first three expose free correlation coordinates through ``values`` /
    ``with_values``; correlation inference reparameterises each coordinate
    as tanh(gamma).
    """

    def __init__(self, variant, shape, *, value=None, labels=None, values=None,
                 rows=None, cols=None, matrix=None):
        self.variant = variant
        self.shape = (int(shape[0]), int(shape[1]))
        self._value = value
        self._labels = labels
        self._values = values
        self._rows = rows
        self._cols = cols
        self._matrix = matrix
        sigma = self.sigma_max()
        if sigma >= 1.0 - CONTRACTION_MARGIN:
            raise ContractionError(
                f"not a strict contraction: sigma_max = {sigma:.17g} "
                f">= 1 - {CONTRACTION_MARGIN:g}",
                sigma_max=sigma,
            )

    # -- constructors ------------------------------------------------------

    @classmethod
    def scalar(cls, c, n):
        """Homogeneous correlation c * I on n shared indices."""
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        return cls("scalar", (n, n), value=float(c))

    @classmethod
    def piecewise(cls, labels, values):
        """Per-subdomain correlation: diag entry i is values[labels[i]]."""
        labels = np.asarray(labels, dtype=int)
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a nonempty 1-D integer array")
        if labels.min() < 0 or labels.max() >= values.size:
            raise ValueError(
                f"labels reference values outside [0, {values.size})"
            )
        n = labels.size
        return cls("piecewise", (n, n), labels=labels.copy(), values=values.copy())

    @classmethod
    def paired_sparse(cls, rows, cols, values, shape):
        """One-to-one index pairing: C[rows[k], cols[k]] = values[k]."""
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        values = np.asarray(values, dtype=float)
        if not rows.shape == cols.shape == values.shape or rows.ndim != 1:
            raise ValueError("rows, cols, values must be 1-D arrays of equal length")
        n1, n2 = shape
        if rows.size:
            if rows.min() < 0 or rows.max() >= n1 or cols.min() < 0 or cols.max() >= n2:
                raise ValueError(f"pair indices out of range for shape {shape}")
            if np.unique(rows).size != rows.size or np.unique(cols).size != cols.size:
                raise ValueError("paired_sparse requires each row and column index at most once")
        return cls("paired_sparse", (n1, n2), rows=rows.copy(), cols=cols.copy(),
                   values=values.copy())

    @classmethod
    def dense(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError(f"dense contraction must be 2-D, got shape {matrix.shape}")
        return cls("dense", matrix.shape, matrix=matrix.copy())

    # -- free correlation coordinates ---------------------------------------

    @property
    def n_free(self):
        if self.variant == "scalar":
            return 1
        if self.variant in ("piecewise", "paired_sparse"):
            return self._values.size
        return 0

    @property
    def values(self):
        """Free correlation coordinates (not defined for dense contractions)."""
        if self.variant == "scalar":
            return np.array([self._value])
        if self.variant in ("piecewise", "paired_sparse"):
            return self._values.copy()
        raise ValueError("dense contractions carry no free correlation coordinates")

    def with_values(self, values):
        """Same structure, new correlation coordinates."""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if values.size != self.n_free:
            raise ValueError(f"expected {self.n_free} correlation values, got {values.size}")
        if self.variant == "scalar":
            return Contraction.scalar(values[0], self.shape[0])
        if self.variant == "piecewise":
            return Contraction.piecewise(self._labels, values)
        if self.variant == "paired_sparse":
            return Contraction.paired_sparse(self._rows, self._cols, values, self.shape)
        raise ValueError("dense contractions carry no free correlation coordinates")

    # -- linear operator interface ------------------------------------------

    def _diag_entries(self):
        if self.variant == "scalar":
            return np.full(self.shape[0], self._value)
        if self.variant == "piecewise":
            return self._values[self._labels]
        raise AssertionError(self.variant)

    def matvec(self, x):
        """C @ x for x of shape (n2,) or (n2, k)."""
        x = np.asarray(x, dtype=float)
        if self.variant in ("scalar", "piecewise"):
            return scale_rows(self._diag_entries(), x)
        if self.variant == "paired_sparse":
            y = np.zeros((self.shape[0],) + x.shape[1:])
            y[self._rows] = scale_rows(self._values, x[self._cols])
            return y
        return self._matrix @ x

    def rmatvec(self, y):
        """C.T @ y for y of shape (n1,) or (n1, k)."""
        y = np.asarray(y, dtype=float)
        if self.variant in ("scalar", "piecewise"):
            return scale_rows(self._diag_entries(), y)
        if self.variant == "paired_sparse":
            x = np.zeros((self.shape[1],) + y.shape[1:])
            x[self._cols] = scale_rows(self._values, y[self._rows])
            return x
        return self._matrix.T @ y

    def as_matrix(self):
        if self.variant in ("scalar", "piecewise"):
            return np.diag(self._diag_entries())
        if self.variant == "paired_sparse":
            c = np.zeros(self.shape)
            c[self._rows, self._cols] = self._values
            return c
        return self._matrix.copy()

    def sigma_max(self):
        if self.variant == "scalar":
            return abs(self._value)
        if self.variant in ("piecewise", "paired_sparse"):
            return float(np.abs(self._values).max()) if self._values.size else 0.0
        return linalg.spectral_norm(self._matrix)

    # -- defect and determinants ---------------------------------------------

    def defect(self):
        """Defect operator D with D @ D.T == I - C.T @ C (symmetric choice)."""
        n2 = self.shape[1]
        if self.variant in ("scalar", "piecewise"):
            return Defect(diag=np.sqrt(1.0 - self._diag_entries() ** 2))
        if self.variant == "paired_sparse":
            d = np.ones(n2)
            d[self._cols] = np.sqrt(1.0 - self._values**2)
            return Defect(diag=d)
        gram = np.eye(n2) - self._matrix.T @ self._matrix
        w, q = linalg.sym_eig(0.5 * (gram + gram.T), "defect Gram matrix")
        return Defect(eig=(w, q))

    def logdet_complement(self):
        """log det(I - C C^T) = log det(I - C^T C).

        Diagonal-like variants use the product formula over their nonzero
        coefficients; dense variants factor the smaller Gram complement
        (the two determinants coincide for any rectangular C).
        """
        if self.variant in ("scalar", "piecewise"):
            return float(np.sum(np.log1p(-self._diag_entries() ** 2)))
        if self.variant == "paired_sparse":
            return float(np.sum(np.log1p(-self._values**2)))
        n1, n2 = self.shape
        c = self._matrix
        if n2 <= n1:
            gram = np.eye(n2) - c.T @ c
        else:
            gram = np.eye(n1) - c @ c.T
        return linalg.logdet_spd(0.5 * (gram + gram.T), "Gram complement")


def _add_mean(x, mean):
    return (x.T + mean).T


class JointPrior:
    """Joint Gaussian prior assembled from marginal whitening filters, a
    strict contraction, and marginal means.  Immutable after construction."""

    def __init__(self, filter_p, filter_m, contraction, mean_p, mean_m):
        n1, n2 = filter_p.dim, filter_m.dim
        if contraction.shape != (n1, n2):
            raise ValueError(
                f"contraction shape {contraction.shape} does not match marginals ({n1}, {n2})"
            )
        mean_p = np.zeros(n1) if mean_p is None else np.asarray(mean_p, dtype=float)
        mean_m = np.zeros(n2) if mean_m is None else np.asarray(mean_m, dtype=float)
        if mean_p.shape != (n1,) or mean_m.shape != (n2,):
            raise ValueError(
                f"mean shapes {mean_p.shape}, {mean_m.shape} do not match marginals ({n1}, {n2})"
            )
        self.filter_p = filter_p
        self.filter_m = filter_m
        self.contraction = contraction
        self.mean_p = mean_p
        self.mean_m = mean_m
        self.defect = contraction.defect()

    @property
    def n1(self):
        return self.filter_p.dim

    @property
    def n2(self):
        return self.filter_m.dim

    @property
    def n(self):
        return self.n1 + self.n2

    @property
    def mean(self):
        return np.concatenate([self.mean_p, self.mean_m])

    def split(self, s):
        s = np.asarray(s, dtype=float)
        return s[: self.n1], s[self.n1 :]

    def sample(self, eta):
        """Colour white noise eta (shape (n,) or (n, k)) into joint draws."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape[0] != self.n:
            raise ValueError(f"eta must have leading dimension {self.n}, got {eta.shape}")
        eta1, eta2 = eta[: self.n1], eta[self.n1 :]
        p = _add_mean(self.filter_p.solve(eta1), self.mean_p)
        m = _add_mean(
            self.filter_m.solve(self.contraction.rmatvec(eta1) + self.defect.apply(eta2)),
            self.mean_m,
        )
        return np.concatenate([p, m])

    def whiten(self, s):
        """Exact inverse of ``sample``: recovers eta from a joint state."""
        s = np.asarray(s, dtype=float)
        xp = _add_mean(s[: self.n1], -self.mean_p)
        xm = _add_mean(s[self.n1 :], -self.mean_m)
        w1 = self.filter_p.apply(xp)
        w2 = self.defect.solve(self.filter_m.apply(xm) - self.contraction.rmatvec(w1))
        return np.concatenate([w1, w2])

    def logdet_complement(self):
        return self.contraction.logdet_complement()

    def log_density(self, s, include_logdet=True):
        """Joint log prior density up to a constant independent of s and C.

        Returns -(|L (s - s*)|^2 + log det(I - C C^T)) / 2; the quadratic
        form is evaluated through the joint whitening filter, never by a
        dense inversion.  The contraction-independent parts of log det Gamma
        are dropped.
        """
        w = self.whiten(s)
        quad = float(w @ w)
        if include_logdet:
            return -0.5 * (quad + self.logdet_complement())
        return -0.5 * quad

    def cross_covariance(self):
        """Dense off-diagonal block L_p^{-1} C L_m^{-T}."""
        y = self.filter_p.solve(self.contraction.as_matrix())
        return self.filter_m.solve(y.T).T

    def dense_covariance(self):
        """Densified joint covariance (testing and small problems only)."""
        gp = self.filter_p.covariance()
        gm = self.filter_m.covariance()
        gpm = self.cross_covariance()
        top = np.hstack([gp, gpm])
        bottom = np.hstack([gpm.T, gm])
        return np.vstack([top, bottom])


def build_joint_prior(filter_p, filter_m, contraction, mean_p=None, mean_m=None):
    """Assemble the joint prior; raises on shape mismatch or non-contraction."""
    return JointPrior(filter_p, filter_m, contraction, mean_p, mean_m)


def sample_joint(prior, eta):
    """Deterministic colouring map of Gaussian white noise into a joint draw."""
    return prior.sample(eta)


@dataclass(frozen=True)
class JointWhitening:
    """Block whitening operator L of the joint prior: Gamma = (L^T L)^{-1}."""

    prior: JointPrior

    def apply(self, x):
        """L @ x for mean-free joint vectors x of shape (n,) or (n, k)."""
        p = self.prior
        xp, xm = x[: p.n1], x[p.n1 :]
        w1 = p.filter_p.apply(xp)
        w2 = p.defect.solve(p.filter_m.apply(xm) - p.contraction.rmatvec(w1))
        return np.concatenate([w1, w2])

    def dense(self):
        p = self.prior
        lp = p.filter_p.dense_matrix()
        lm = p.filter_m.dense_matrix()
        bottom_left = -p.defect.solve(p.contraction.rmatvec(lp))
        bottom_right = p.defect.solve(lm)
        top = np.hstack([lp, np.zeros((p.n1, p.n2))])
        bottom = np.hstack([bottom_left, bottom_right])
        return np.vstack([top, bottom])


def joint_whitening_filter(prior):
    return JointWhitening(prior)


def joint_log_density(prior, s, include_logdet=True):
    return prior.log_density(s, include_logdet=include_logdet)


def canonical_cross(prior):
    """Whitened cross-covariance and its singular values.

    Returns (W, sigma) with W = Gamma_p^{-1/2} Gamma_pm Gamma_m^{-1/2}.  The
    singular values of W are the canonical correlations between the two
    fields; with principal-square-root filters W equals the contraction
    entrywise, and for any valid filter pair sigma(W) = sigma(C).
    """
    def inv_sqrt(cov, name):
        w, q = linalg.sym_eig(cov, name)
        if w[0] <= 0 or w[-1] <= linalg.EIGENVALUE_FLOOR * w[0]:
            raise linalg.FactorizationError(f"{name} is not positive definite")
        m = (q / np.sqrt(w)) @ q.T
        return 0.5 * (m + m.T)

    gpm = prior.cross_covariance()
    w_matrix = inv_sqrt(prior.filter_p.covariance(), "p-marginal") @ gpm
    w_matrix = w_matrix @ inv_sqrt(prior.filter_m.covariance(), "m-marginal")
    sigma = np.linalg.svd(w_matrix, compute_uv=False)
    return w_matrix, sigma


def scalar_prior_stationary(p, m, c):
    """Value, gradient, and Hessian of the scalar joint log prior.

    V(p, m, c) = -(p^2 - 2 c p m + m^2) / (2 (1 - c^2)) - log(1 - c^2) / 2
    is the log density (up to a constant) of standard-normal marginals with
    correlation c and a flat correlation prior.  Its only stationary point
    is the saddle at the origin, where the Hessian is diag(-1, -1, 1): for
    fixed (p, m) the value can always be increased by pushing c towards
    +-1, which is why joint maximum-a-posteriori estimation of the
    correlation is unreliable.
    """
    if abs(c) >= 1.0:
        raise ValueError(f"correlation must satisfy |c| < 1, got {c}")
    t = 1.0 - c * c
    a = p - c * m
    b = m - c * p
    v = -(p * p - 2.0 * c * p * m + m * m) / (2.0 * t) - 0.5 * np.log(t)
    grad = np.array([-a / t, -b / t, c / t + a * b / (t * t)])
    n = a * b
    n_c = 2.0 * c * p * m - p * p - m * m  # d(a b)/dc
    hess = np.empty((3, 3))
    hess[0, 0] = -1.0 / t
    hess[1, 1] = -1.0 / t
    hess[0, 1] = hess[1, 0] = c / t
    hess[0, 2] = hess[2, 0] = (m * t - 2.0 * c * a) / (t * t)
    hess[1, 2] = hess[2, 1] = (p * t - 2.0 * c * b) / (t * t)
    hess[2, 2] = (1.0 + c * c) / (t * t) + (n_c * t + 4.0 * c * n) / (t * t * t)
    return float(v), grad, hess


def correlation_prior_logdensity(gamma):
    """Log density of the correlation coordinates gamma, c_i = tanh(gamma_i).

    Each coordinate carries density sech(gamma)^2 / 2, the pushforward of
    the uniform distribution on (-1, 1) through atanh; the log uses a
    saturation-safe log cosh.
    """
    g = np.abs(np.atleast_1d(np.asarray(gamma, dtype=float)))
    # log(0.5 sech^2 g) = log 2 - 2 (g + log1p(exp(-2 g)))
    return float(np.sum(np.log(2.0) - 2.0 * (g + np.log1p(np.exp(-2.0 * g)))))


def reduced_joint_covariance(basis_p, basis_m, contraction):
    """Joint covariance of the truncated-basis coordinates.

    With orthonormal mode matrices V_hat, U_hat the reduced coordinates have
    identity marginals and cross block V_hat.T @ C @ U_hat, which inherits
    strict contractivity from C, so the block matrix is SPD.
    """
    if contraction.shape != (basis_p.n, basis_m.n):
        raise ValueError(
            f"contraction shape {contraction.shape} does not match bases "
            f"({basis_p.n}, {basis_m.n})"
        )
    chat = basis_p.modes.T @ contraction.matvec(basis_m.modes)
    kp, km = basis_p.k, basis_m.k
    top = np.hstack([np.eye(kp), chat])
    bottom = np.hstack([chat.T, np.eye(km)])
    return np.vstack([top, bottom])
