"""Likelihoods, exact linear-Gaussian posteriors, the adaptive
Metropolis-within-Gibbs sampler, and the Gauss-Newton warm start.

The sampler alternates block updates: the field block s is updated by an
exact Gibbs draw when the forward model is linear (the conditional is
Gaussian) and by adaptive random-walk Metropolis otherwise; the correlation
coordinates gamma (c_i = tanh(gamma_i)) take a fixed number of random-walk
Metropolis steps per field update.  Proposal adaptation runs during burn-in
only, so the retained chain is Markovian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .forward_models import ForwardModelError, fd_jacobian
from .joint_prior import JointPrior, correlation_prior_logdensity
from .linalg import ContractionError, FactorizationError, cholesky_lower


@dataclass(frozen=True)
class NoiseModel:
    """Blockwise white observation noise: cov = diag(delta1^2 I, delta2^2 I)."""

    delta1: float = 1.0
    q1: int = 0
    delta2: float = 1.0
    q2: int = 0

    def __post_init__(self):
        if self.q1 < 0 or self.q2 < 0:
            raise ValueError("block sizes must be nonnegative")
        if (self.q1 > 0 and self.delta1 <= 0) or (self.q2 > 0 and self.delta2 <= 0):
            raise ValueError("noise standard deviations must be positive")

    @property
    def q(self):
        return self.q1 + self.q2

    @property
    def std_vector(self):
        return np.concatenate([
            np.full(self.q1, self.delta1), np.full(self.q2, self.delta2)
        ])

    @property
    def var_vector(self):
        return self.std_vector**2

    def covariance(self):
        return np.diag(self.var_vector)

    def sample(self, rng):
        return self.std_vector * rng.standard_normal(self.q)


def gaussian_loglik(d, prediction, noise):
    """Gaussian log likelihood up to a constant: -|d - prediction|^2_cov / 2."""
    d = np.asarray(d, dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if d.shape != (noise.q,) or prediction.shape != (noise.q,):
        raise ValueError(
            f"data/prediction shapes {d.shape}, {prediction.shape} do not match q = {noise.q}"
        )
    r = (d - prediction) / noise.std_vector
    return -0.5 * float(r @ r)


def _precision_from_cov(cov):
    r = cholesky_lower(cov, "prior covariance")
    prec = cho_solve((r, True), np.eye(cov.shape[0]))
    return 0.5 * (prec + prec.T)


def _posterior_state(g, d, noise, prior_mean, prior_prec):
    """Posterior mean and the lower Cholesky factor of the posterior precision."""
    g = np.asarray(g, dtype=float)
    d = np.asarray(d, dtype=float)
    w = 1.0 / noise.var_vector
    h = (g.T * w) @ g + prior_prec
    r = cholesky_lower(0.5 * (h + h.T), "posterior precision")
    b = g.T @ (w * d) + prior_prec @ prior_mean
    mean = solve_triangular(r, solve_triangular(r, b, lower=True), lower=True, trans="T")
    return mean, r


def linear_gaussian_posterior(g, d, noise, prior_mean, prior_cov):
    """Conjugate Gaussian update for a linear model d = G s + e.

    Returns (mean, covariance) with
    covariance = (G^T cov_e^{-1} G + prior_cov^{-1})^{-1} and
    mean = covariance @ (G^T cov_e^{-1} d + prior_cov^{-1} prior_mean).
    """
    prior_mean = np.asarray(prior_mean, dtype=float)
    prior_prec = _precision_from_cov(np.asarray(prior_cov, dtype=float))
    mean, r = _posterior_state(g, d, noise, prior_mean, prior_prec)
    cov = cho_solve((r, True), np.eye(r.shape[0]))
    return mean, 0.5 * (cov + cov.T)


def gibbs_update_linear(rng, g, d, noise, prior_mean, prior_cov):
    """Exact draw from the Gaussian conditional of a linear model.

    Samples via a factor of the posterior covariance: with R R^T the
    posterior precision, mean + R^{-T} z has exactly the posterior law.
    """
    prior_mean = np.asarray(prior_mean, dtype=float)
    prior_prec = _precision_from_cov(np.asarray(prior_cov, dtype=float))
    mean, r = _posterior_state(g, d, noise, prior_mean, prior_prec)
    z = rng.standard_normal(mean.size)
    return mean + solve_triangular(r, z, lower=True, trans="T")


# ----------------------------------------------------------------------------
# Prior families: correlation values -> joint prior, in full or reduced space
# ----------------------------------------------------------------------------


class FullJointFamily:
    """Joint prior over the stacked field vector as a function of the free
    correlation coordinates of its contraction."""

    def __init__(self, filter_p, filter_m, contraction, mean_p=None, mean_m=None):
        self._template = build = JointPrior(filter_p, filter_m, contraction, mean_p, mean_m)
        self.filter_p = filter_p
        self.filter_m = filter_m
        self.contraction = contraction
        self.mean = build.mean
        self.n_free = contraction.n_free
        self.dim = build.n
        self._scalar_cache = None

    def prior(self, values=None):
        c = self.contraction if values is None else self.contraction.with_values(values)
        return JointPrior(self.filter_p, self.filter_m, c,
                          self._template.mean_p, self._template.mean_m)

    def log_density(self, s, values):
        return self.prior(values).log_density(s)

    def _scalar_blocks(self):
        if self._scalar_cache is None:
            lam_p = self.filter_p.precision()
            lam_m = self.filter_m.precision()
            cross = self.filter_p.apply_t(self.filter_m.dense_matrix())
            self._scalar_cache = (lam_p, lam_m, cross)
        return self._scalar_cache

    def precision(self, values=None):
        """Dense joint precision; homogeneous scalar correlation uses the
        closed-form blocks, other variants the dense whitening product."""
        c = self.contraction if values is None else self.contraction.with_values(values)
        if c.variant == "scalar":
            lam_p, lam_m, cross = self._scalar_blocks()
            cval = c.values[0]
            u = 1.0 / (1.0 - cval * cval)
            n1 = self.filter_p.dim
            prec = np.empty((self.dim, self.dim))
            prec[:n1, :n1] = u * lam_p
            prec[n1:, n1:] = u * lam_m
            prec[:n1, n1:] = (-cval * u) * cross
            prec[n1:, :n1] = prec[:n1, n1:].T
            return prec
        prior = self.prior(values)
        lp = self.filter_p.dense_matrix()
        lm = self.filter_m.dense_matrix()
        z = -prior.defect.solve(prior.contraction.rmatvec(lp))
        w = prior.defect.solve(lm)
        n1 = self.filter_p.dim
        prec = np.empty((self.dim, self.dim))
        prec[:n1, :n1] = lp.T @ lp + z.T @ z
        prec[:n1, n1:] = z.T @ w
        prec[n1:, :n1] = prec[:n1, n1:].T
        prec[n1:, n1:] = w.T @ w
        return 0.5 * (prec + prec.T)


class ReducedJointFamily:
    """Joint prior over truncated-basis coordinates (identity marginals,
    cross block V_hat^T C U_hat) as a function of the correlation values."""

    def __init__(self, basis_p, basis_m, contraction):
        if contraction.shape != (basis_p.n, basis_m.n):
            raise ValueError(
                f"contraction shape {contraction.shape} does not match bases "
                f"({basis_p.n}, {basis_m.n})"
            )
        self.basis_p = basis_p
        self.basis_m = basis_m
        self.contraction = contraction
        self.n_free = contraction.n_free
        self.dim = basis_p.k + basis_m.k
        self.mean = np.zeros(self.dim)
        # cross blocks are linear in the correlation values for the
        # diagonal-like variants: precompute one block per coordinate
        self._blocks = None
        if contraction.variant in ("scalar", "piecewise"):
            v = basis_p.modes
            u = basis_m.modes
            if contraction.variant == "scalar":
                self._blocks = [v.T @ u]
            else:
                labels = contraction._labels
                self._blocks = [
                    v[labels == l].T @ u[labels == l] for l in range(contraction.n_free)
                ]

    def cross_block(self, values):
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if self._blocks is not None:
            chat = np.zeros((self.basis_p.k, self.basis_m.k))
            for val, block in zip(values, self._blocks):
                chat += val * block
            return chat
        c = self.contraction.with_values(values)
        return self.basis_p.modes.T @ c.matvec(self.basis_m.modes)

    def log_density(self, shat, values):
        """Reduced joint log prior up to a constant independent of shat and C."""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if np.any(np.abs(values) >= 1.0):
            raise ContractionError("correlation values reached +-1", sigma_max=float(np.abs(values).max()))
        chat = self.cross_block(values)
        kp = self.basis_p.k
        shat = np.asarray(shat, dtype=float)
        phat, mhat = shat[:kp], shat[kp:]
        gram = np.eye(self.basis_m.k) - chat.T @ chat
        r = cholesky_lower(0.5 * (gram + gram.T), "reduced Gram complement")
        resid = solve_triangular(r, mhat - chat.T @ phat, lower=True)
        quad = float(phat @ phat) + float(resid @ resid)
        logdet = 2.0 * float(np.sum(np.log(np.diagonal(r))))
        return -0.5 * (quad + logdet)

    def precision(self, values=None):
        values = self.contraction.values if values is None else values
        chat = self.cross_block(values)
        gram = np.eye(self.basis_m.k) - chat.T @ chat
        gram_inv = _precision_from_cov(gram)
        kp = self.basis_p.k
        prec = np.empty((self.dim, self.dim))
        prec[:kp, :kp] = np.eye(kp) + chat @ gram_inv @ chat.T
        prec[:kp, kp:] = -chat @ gram_inv
        prec[kp:, :kp] = prec[:kp, kp:].T
        prec[kp:, kp:] = gram_inv
        return 0.5 * (prec + prec.T)


# ----------------------------------------------------------------------------
# Sampler configuration and chain storage
# ----------------------------------------------------------------------------


@dataclass
class MwgConfig:
    """Settings of the Metropolis-within-Gibbs run.

    The field proposal scale tau follows a diminishing-adaptation rule,
    ln tau += batch^(-adapt_decay) * (batch acceptance - accept_target),
    and the proposal factor is refreshed from the accepted history every
    cov_refresh iterations with a small ridge.  Adaptation happens during
    burn-in only.
    """

    total_samples: int
    burn_in: int
    c_steps_per_s_step: int = 1
    gamma_step_std: float = 1.0
    accept_target: float = 0.23
    adapt_decay: float = 0.6
    adapt_batch: int = 50
    cov_refresh: int = 1000
    cov_ridge: float = 1e-8
    tau0: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.total_samples < 1:
            raise ValueError("total_samples must be >= 1")
        if not 0 <= self.burn_in < self.total_samples:
            raise ValueError(
                f"burn-in {self.burn_in} leaves an empty chain out of "
                f"{self.total_samples} total samples"
            )
        if self.c_steps_per_s_step < 1:
            raise ValueError("c_steps_per_s_step must be >= 1")
        if not 0.0 < self.accept_target < 1.0:
            raise ValueError("acceptance target must lie in (0, 1)")
        if self.gamma_step_std <= 0:
            raise ValueError("gamma proposal stddev must be positive")


@dataclass
class Chain:
    """Retained MCMC samples with acceptance and adaptation bookkeeping."""

    states: np.ndarray     # (retained, dim) field or reduced coordinates
    corr: np.ndarray       # (retained, n_free) correlation values tanh(gamma)
    total_samples: int
    burn_in: int
    seed: int
    kind: str              # "gibbs" or "adaptive"
    s_steps: int = 0
    s_accepted: int = 0
    gamma_steps: int = 0
    gamma_accepted: int = 0
    tau_trace: np.ndarray | None = None  # (records, 2): iteration, tau

    @property
    def retained(self):
        return self.states.shape[0]

    @property
    def s_acceptance(self):
        return self.s_accepted / self.s_steps if self.s_steps else float("nan")

    @property
    def gamma_acceptance(self):
        return self.gamma_accepted / self.gamma_steps if self.gamma_steps else float("nan")

    def acceptance_rates(self):
        return {"s": self.s_acceptance, "gamma": self.gamma_acceptance}


class AdaptiveProposal:
    """Random-walk proposal tau * A @ z with diminishing adaptation of tau and
    periodic refresh of A from the accepted history."""

    def __init__(self, dim, cfg: MwgConfig, factor0=None):
        self.dim = dim
        self.cfg = cfg
        self.tau = cfg.tau0 if cfg.tau0 is not None else 2.38 / np.sqrt(dim)
        self.factor = np.eye(dim) if factor0 is None else np.asarray(factor0, dtype=float)
        self.accepted_states = []
        self._batch_accepts = 0
        self._batch_count = 0
        self._batch_index = 0
        self.trace = [(0, self.tau)]

    def step(self, rng):
        return self.tau * (self.factor @ rng.standard_normal(self.dim))

    def register(self, accepted, state, iteration, adapting):
        if accepted and adapting:
            self.accepted_states.append(np.array(state, dtype=float))
        if not adapting:
            return
        self._batch_accepts += int(accepted)
        self._batch_count += 1
        cfg = self.cfg
        if self._batch_count >= cfg.adapt_batch:
            self._batch_index += 1
            rate = self._batch_accepts / self._batch_count
            self.tau = float(np.exp(
                np.log(self.tau)
                + self._batch_index ** (-cfg.adapt_decay) * (rate - cfg.accept_target)
            ))
            self._batch_accepts = 0
            self._batch_count = 0
            self.trace.append((iteration + 1, self.tau))
        if (iteration + 1) % cfg.cov_refresh == 0 and len(self.accepted_states) >= self.dim:
            cov = np.cov(np.asarray(self.accepted_states), rowvar=False)
            cov = np.atleast_2d(cov) + cfg.cov_ridge * np.eye(self.dim)
            self.factor = cholesky_lower(cov, "proposal covariance")

    def trace_array(self):
        return np.asarray(self.trace, dtype=float)


_REJECTABLE = (ForwardModelError, ContractionError, FactorizationError, ValueError,
               ArithmeticError)


def adaptive_metropolis_update_s(rng, x, cur_logdens, log_target, proposal,
                                 iteration=0, adapting=False):
    """One adaptive random-walk Metropolis step on the field block.

    A proposal where the target raises or returns a non-finite value is
    rejected and counted.  Returns (state, log density, accepted).
    """
    prop = x + proposal.step(rng)
    try:
        cand = float(log_target(prop))
    except _REJECTABLE:
        cand = -np.inf
    accepted = np.isfinite(cand) and np.log(rng.random()) < cand - cur_logdens
    if accepted:
        x, cur_logdens = prop, cand
    proposal.register(accepted, x, iteration, adapting)
    return x, cur_logdens, accepted


def metropolis_update_correlation(rng, gamma, prior_logdens, corr_prior, x, family,
                                  step_std):
    """One Gaussian random-walk Metropolis step on the correlation coordinates.

    The target combines the state-dependent joint prior density (quadratic
    form plus contraction log-determinant) with the tanh-induced coordinate
    prior; the symmetric proposal cancels.  Returns
    (gamma, prior_logdens, corr_prior, accepted).
    """
    prop = gamma + step_std * rng.standard_normal(gamma.shape)
    try:
        prop_pd = family.log_density(x, np.tanh(prop))
    except _REJECTABLE:
        return gamma, prior_logdens, corr_prior, False
    prop_cp = correlation_prior_logdensity(prop)
    log_ratio = (prop_pd + prop_cp) - (prior_logdens + corr_prior)
    if np.log(rng.random()) < log_ratio:
        return prop, prop_pd, prop_cp, True
    return gamma, prior_logdens, corr_prior, False


class _LinearGibbs:
    """Exact Gibbs draws for linear models, with a single-entry factorisation
    cache so fixed-correlation runs factor the posterior precision once."""

    def __init__(self, g, d, noise, family):
        g = np.asarray(g, dtype=float)
        w = 1.0 / noise.var_vector
        self.gtg = (g.T * w) @ g
        self.gtb = g.T @ (w * np.asarray(d, dtype=float))
        self.family = family
        self._key = None
        self._state = None

    def draw(self, rng, values):
        key = np.asarray(values, dtype=float).tobytes()
        if key != self._key:
            prec = self.family.precision(values)
            h = self.gtg + prec
            r = cholesky_lower(0.5 * (h + h.T), "posterior precision")
            b = self.gtb + prec @ self.family.mean
            mean = solve_triangular(
                r, solve_triangular(r, b, lower=True), lower=True, trans="T"
            )
            self._key, self._state = key, (mean, r)
        mean, r = self._state
        z = rng.standard_normal(mean.size)
        return mean + solve_triangular(r, z, lower=True, trans="T")


def mwg_run(model, family, noise, d, cfg: MwgConfig, *, sample_correlation=True,
            init_state=None, init_gamma=None, proposal_factor=None):
    """Metropolis-within-Gibbs over (s, gamma); fully reproducible from cfg.seed.

    Linear models (model.is_linear with a ``matrix``) get exact Gibbs field
    updates; otherwise the field block uses adaptive random-walk Metropolis
    started from ``init_state`` (required), optionally with an initial
    proposal factor (e.g. a Laplace factor from the warm start).  When
    ``sample_correlation`` is false the correlation stays at its initial
    value and only the field block is sampled.
    """
    rng = np.random.default_rng(cfg.seed)
    retained = cfg.total_samples - cfg.burn_in
    n_free = family.n_free
    gamma = np.zeros(n_free) if init_gamma is None else np.atleast_1d(
        np.asarray(init_gamma, dtype=float)
    ).copy()
    values = np.tanh(gamma)
    track_gamma = sample_correlation and n_free > 0

    linear = bool(getattr(model, "is_linear", False))
    if linear:
        gibbs = _LinearGibbs(model.matrix, d, noise, family)
        x = gibbs.draw(rng, values)
        proposal = None
    else:
        if init_state is None:
            raise ValueError("nonlinear models need an initial state")
        x = np.asarray(init_state, dtype=float).copy()
        cur_ll = gaussian_loglik(d, model(x), noise)
        cur_pd = family.log_density(x, values)
        if not np.isfinite(cur_ll + cur_pd):
            raise ValueError("target log density is not finite at the initial state")
        proposal = AdaptiveProposal(family.dim, cfg, proposal_factor)

    states = np.empty((retained, family.dim))
    corr = np.empty((retained, n_free))
    s_steps = s_accepted = gamma_steps = gamma_accepted = 0
    cur_pd = None if linear else cur_pd
    cur_cp = correlation_prior_logdensity(gamma) if track_gamma else 0.0

    for k in range(cfg.total_samples):
        adapting = k < cfg.burn_in
        if linear:
            x = gibbs.draw(rng, values)
            s_steps += 1
            s_accepted += 1
            if track_gamma:
                cur_pd = family.log_density(x, values)
        else:
            prop = x + proposal.step(rng)
            try:
                prop_ll = gaussian_loglik(d, model(prop), noise)
                prop_pd = family.log_density(prop, values)
                cand = prop_ll + prop_pd
            except _REJECTABLE:
                cand = -np.inf
            accepted = np.isfinite(cand) and np.log(rng.random()) < cand - (cur_ll + cur_pd)
            if accepted:
                x, cur_ll, cur_pd = prop, prop_ll, prop_pd
            proposal.register(accepted, x, k, adapting)
            s_steps += 1
            s_accepted += int(accepted)

        if track_gamma:
            for _ in range(cfg.c_steps_per_s_step):
                gamma, cur_pd, cur_cp, acc = metropolis_update_correlation(
                    rng, gamma, cur_pd, cur_cp, x, family, cfg.gamma_step_std
                )
                gamma_steps += 1
                gamma_accepted += int(acc)
            values = np.tanh(gamma)

        if k >= cfg.burn_in:
            states[k - cfg.burn_in] = x
            corr[k - cfg.burn_in] = values

    return Chain(
        states=states, corr=corr, total_samples=cfg.total_samples,
        burn_in=cfg.burn_in, seed=cfg.seed, kind="gibbs" if linear else "adaptive",
        s_steps=s_steps, s_accepted=s_accepted,
        gamma_steps=gamma_steps, gamma_accepted=gamma_accepted,
        tau_trace=None if linear else proposal.trace_array(),
    )


# ----------------------------------------------------------------------------
# Gauss-Newton MAP and Laplace warm start
# ----------------------------------------------------------------------------


class GaussNewtonError(RuntimeError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass
class GaussNewtonResult:
    point: np.ndarray
    covariance: np.ndarray  # Laplace (Gauss-Newton) posterior covariance
    factor: np.ndarray      # lower factor L with L L^T = covariance
    iterations: int
    objective: float
    converged: bool
    objective_trace: list | None = None


def gauss_newton_map(model, d, noise, prior_mean, prior_precision, init=None, *,
                     h_rel=1e-5, grad_tol=1e-8, max_iter=100, max_halvings=30):
    """Gauss-Newton minimisation of the negative log posterior with Armijo
    backtracking, returning the MAP point and the Laplace covariance factor.

    Terminates when the gradient norm falls below grad_tol * (1 + initial
    norm) or after max_iter accepted steps; a failed line search raises
    GaussNewtonError carrying the last iterate.
    """
    prior_mean = np.asarray(prior_mean, dtype=float)
    prior_precision = np.asarray(prior_precision, dtype=float)
    x = prior_mean.copy() if init is None else np.asarray(init, dtype=float).copy()
    w = 1.0 / noise.var_vector

    def objective(xx):
        r = d - model(xx)
        dx = xx - prior_mean
        return 0.5 * float((r * w) @ r) + 0.5 * float(dx @ (prior_precision @ dx))

    fx = objective(x)
    trace = [fx]
    grad0 = None
    iterations = 0
    converged = False
    for _ in range(max_iter):
        jac = fd_jacobian(model, x, h_rel)
        r = d - model(x)
        grad = -jac.T @ (w * r) + prior_precision @ (x - prior_mean)
        gnorm = float(np.linalg.norm(grad))
        if grad0 is None:
            grad0 = gnorm
        if gnorm <= grad_tol * (1.0 + grad0):
            converged = True
            break
        h = (jac.T * w) @ jac + prior_precision
        rchol = cholesky_lower(0.5 * (h + h.T), "Gauss-Newton Hessian")
        step = solve_triangular(
            rchol, solve_triangular(rchol, -grad, lower=True), lower=True, trans="T"
        )
        slope = float(grad @ step)
        alpha = 1.0
        for _ in range(max_halvings + 1):
            try:
                fn = objective(x + alpha * step)
            except _REJECTABLE:
                fn = np.inf
            if fn <= fx + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            raise GaussNewtonError(
                f"line search failed after {max_halvings} halvings", last_iterate=x
            )
        x = x + alpha * step
        fx = fn
        trace.append(fx)
        iterations += 1

    jac = fd_jacobian(model, x, h_rel)
    h = (jac.T * w) @ jac + prior_precision
    rchol = cholesky_lower(0.5 * (h + h.T), "Laplace precision")
    cov = cho_solve((rchol, True), np.eye(x.size))
    cov = 0.5 * (cov + cov.T)
    factor = cholesky_lower(cov, "Laplace covariance")
    return GaussNewtonResult(
        point=x, covariance=cov, factor=factor, iterations=iterations,
        objective=fx, converged=converged, objective_trace=trace,
    )
