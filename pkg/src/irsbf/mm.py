"""Reflect-beamforming optimizer over the lifted unit-modulus vector.

Each iteration minorizes the separable objective with a tight
linear-plus-constant surrogate built from the previous iterate, whose
unconstrained maximizer over the torus is obtained entrywise by taking
phases of a single matrix-vector product.  The quadratic coupling term is
bounded by shifting with the dominant eigenvalue of a positive
semidefinite coupling matrix, found by power iteration.  The objective is
therefore non-decreasing step to step, with an optional squared
extrapolation (SQUAREM-style) cycle that preserves monotonicity through
backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CompositeChannel,
    ConfigError,
    EvalResult,
    PhaseConstraint,
    PhaseKind,
    ReflectConfig,
    SystemConfig,
    check_unit_modulus,
    extract_reflect,
)
from .txbf import psi_tilde_from_v, snr_at_optimal_beam_from_v, psi_from_psi_tilde

# Multiplicative safety margin applied to the power-iteration eigenvalue so
# the shifted coupling matrix stays dominated even with a slightly
# underconverged estimate.  The surrogate's tightness and gradient at the
# expansion point are independent of the shift, so this only strengthens
# the minorization.
_LAMBDA_MARGIN = 1e-6


class PowerIterationError(RuntimeError):
    """Power iteration failed to converge; carries the last estimate."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class MMSettings:
    """Knobs of the iterative optimizer."""

    epsilon: float = 1e-5
    max_iter: int = 5000
    accelerate: bool = True
    power_iter_tol: float = 1e-12
    power_iter_max: int = 10000

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class MMIterate:
    """One iterate plus the surrogate quantities that produced it.

    ``xi0``, ``lambda_max`` and ``alpha`` are the cached quantities of the
    expansion point (the previous iterate); they are ``None`` on the
    initial iterate which no step produced.
    """

    theta_tilde: np.ndarray
    objective: float
    xi0: np.ndarray | None
    lambda_max: float | None
    alpha: np.ndarray | None
    iteration: int


def lifted_objective(theta_tilde: np.ndarray, psi: CompositeChannel, cfg: SystemConfig) -> float:
    """Objective of the lifted problem; equals the reflect objective after extraction."""
    return psi_tilde_from_v(psi.psi @ np.asarray(theta_tilde, dtype=complex).ravel(), cfg)


def lambda_max_power_iteration(
    omega: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 10000,
    start: np.ndarray | None = None,
) -> float:
    """Dominant eigenvalue of a Hermitian PSD matrix by power iteration.

    Uses the Rayleigh quotient as the running estimate and stops when its
    relative change drops below ``tol``.  Raises PowerIterationError
    (carrying the last estimate) if ``max_iter`` is exhausted first.
    """
    omega = np.asarray(omega)
    n = omega.shape[0]
    if n == 0 or not np.any(omega):
        return 0.0
    if start is None:
        rng = np.random.default_rng(0x9E3779B9)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    else:
        x = np.asarray(start, dtype=complex).ravel().copy()
    x /= np.linalg.norm(x)
    lam_prev = None
    for _ in range(max_iter):
        y = omega @ x
        lam = float(np.real(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            return lam
        lam_prev = lam
    raise PowerIterationError(
        f"power iteration did not converge within {max_iter} iterations",
        estimate=lam_prev if lam_prev is not None else 0.0,
    )


def _mm_quantities(
    tt0: np.ndarray,
    psi: CompositeChannel,
    cfg: SystemConfig,
    settings: MMSettings,
    gram: np.ndarray | None = None,
):
    """Per-antenna weights and shifted-coupling eigenvalue at the expansion point.

    Returns (v0, xi, d, lam) with v0 the effective channel at tt0, xi the
    diagonal weight, d the diagonal of the coupling matrix factor, and lam
    the (margin-inflated) dominant eigenvalue of the coupling matrix.
    """
    m = psi.psi
    v0 = m @ tt0
    a = (1.0 + cfg.kappa_d) * cfg.kappa_s
    c = (1.0 + cfg.kappa_d) * cfg.sigma_n2 / cfg.p_tilde
    xi = a * np.abs(v0) ** 2 + c
    if a == 0.0:
        return v0, xi, np.zeros_like(xi), 0.0
    d = np.abs(v0 / xi) ** 2
    # lambda_max of m^H diag(d) m equals that of the small Gram
    # sqrt(d) (m m^H) sqrt(d), which power iteration handles cheaply.
    if gram is None:
        gram = m @ m.conj().T
    sd = np.sqrt(d)
    small = sd[:, None] * gram * sd[None, :]
    lam = lambda_max_power_iteration(
        small, tol=settings.power_iter_tol, max_iter=settings.power_iter_max
    )
    lam = max(lam, 0.0) * (1.0 + _LAMBDA_MARGIN)
    return v0, xi, d, lam


def _mm_alpha(tt0, psi, cfg, v0, xi, d, lam):
    """Surrogate linear coefficient: one application of the surrogate matrix."""
    m = psi.psi
    a = (1.0 + cfg.kappa_d) * cfg.kappa_s
    alpha = m.conj().T @ (v0 / xi)
    if a > 0.0:
        alpha = alpha - a * (m.conj().T @ (d * v0) - lam * tt0)
    return alpha


def _phases_of(alpha: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Entrywise unit-modulus maximizer; zero coefficients keep the old phase."""
    out = np.where(alpha != 0.0, np.exp(1j * np.angle(alpha)), keep)
    return out


def _mm_map(tt0, psi, cfg, settings, gram=None):
    v0, xi, d, lam = _mm_quantities(tt0, psi, cfg, settings, gram=gram)
    alpha = _mm_alpha(tt0, psi, cfg, v0, xi, d, lam)
    return _phases_of(alpha, tt0), xi, lam, alpha


def initial_iterate(theta_tilde: np.ndarray, psi: CompositeChannel, cfg: SystemConfig) -> MMIterate:
    tt = check_unit_modulus(theta_tilde)
    return MMIterate(
        theta_tilde=tt,
        objective=lifted_objective(tt, psi, cfg),
        xi0=None,
        lambda_max=None,
        alpha=None,
        iteration=0,
    )


def mm_step(
    prev: MMIterate,
    psi: CompositeChannel,
    cfg: SystemConfig,
    settings: MMSettings = MMSettings(),
) -> MMIterate:
    """One minorize-maximize step from ``prev``; objective never decreases."""
    tt_new, xi, lam, alpha = _mm_map(prev.theta_tilde, psi, cfg, settings)
    return MMIterate(
        theta_tilde=tt_new,
        objective=lifted_objective(tt_new, psi, cfg),
        xi0=xi,
        lambda_max=lam,
        alpha=alpha,
        iteration=prev.iteration + 1,
    )


def omega_matrix(
    tt0: np.ndarray,
    psi: CompositeChannel,
    cfg: SystemConfig,
    settings: MMSettings = MMSettings(),
) -> np.ndarray:
    """Materialize the PSD coupling matrix at an expansion point (test hook)."""
    m = psi.psi
    v0, xi, d, _ = _mm_quantities(tt0, psi, cfg, settings)
    del v0
    return m.conj().T @ (d[:, None] * m)


def surrogate_value(
    tt: np.ndarray,
    tt0: np.ndarray,
    psi: CompositeChannel,
    cfg: SystemConfig,
    settings: MMSettings = MMSettings(),
) -> float:
    """Minorizer of the lifted objective, expanded at ``tt0`` and evaluated at ``tt``.

    Lower-bounds the objective everywhere on the torus, touches it at the
    expansion point, and matches its first-order behavior there.
    """
    m = psi.psi
    tt = np.asarray(tt, dtype=complex).ravel()
    tt0 = np.asarray(tt0, dtype=complex).ravel()
    n = tt0.shape[0]
    a = (1.0 + cfg.kappa_d) * cfg.kappa_s
    v0, xi, d, lam = _mm_quantities(tt0, psi, cfg, settings)
    vt = m @ tt
    # linear term: tt0^H (Psi^H Xi0^-1 Psi - a*(Omega - lam I)) tt
    lin = np.vdot(v0 / xi, vt)
    if a > 0.0:
        lin = lin - a * (np.vdot(d * v0, vt) - lam * np.vdot(tt0, tt))
    term1 = 2.0 * float(np.real(lin))
    term2 = -2.0 * a * n * lam
    term3 = 2.0 * a * float(np.sum(d * np.abs(v0) ** 2)) - float(np.sum(np.abs(v0) ** 2 / xi))
    return term1 + term2 + term3


def _project_unit(vec: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    mags = np.abs(vec)
    out = np.where(mags > 0.0, vec / np.where(mags > 0.0, mags, 1.0), fallback)
    return out


def _squarem_cycle(tt, psi, cfg, settings, gram=None):
    """One accelerated cycle: two MM maps plus a safeguarded extrapolation.

    The returned objective is never below the plain two-step value, so
    monotonicity of the outer sequence is preserved.
    """
    x1, _, _, _ = _mm_map(tt, psi, cfg, settings, gram=gram)
    x2, _, _, _ = _mm_map(x1, psi, cfg, settings, gram=gram)
    obj2 = lifted_objective(x2, psi, cfg)
    r = x1 - tt
    v = x2 - x1 - r
    nr = np.linalg.norm(r)
    nv = np.linalg.norm(v)
    if nr == 0.0 or nv == 0.0:
        return x2, obj2
    alpha = -nr / nv
    for _ in range(60):
        if abs(alpha + 1.0) < 1e-4:
            break
        cand = _project_unit(tt - 2.0 * alpha * r + alpha**2 * v, fallback=x2)
        obj_c = lifted_objective(cand, psi, cfg)
        if obj_c >= obj2:
            return cand, obj_c
        alpha = (alpha - 1.0) / 2.0
    return x2, obj2


def squarem_accelerate(
    state: MMIterate,
    psi: CompositeChannel,
    cfg: SystemConfig,
    settings: MMSettings = MMSettings(),
) -> MMIterate:
    """Accelerated counterpart of ``mm_step``.

    Extrapolates through two fixed-point maps with a negative squared step
    length, reprojects onto the torus, and backtracks the step toward the
    plain composition until the objective does not decrease.  At a fixed
    point it degenerates to the plain step.
    """
    v0, xi, d, lam = _mm_quantities(state.theta_tilde, psi, cfg, settings)
    alpha = _mm_alpha(state.theta_tilde, psi, cfg, v0, xi, d, lam)
    tt_new, obj_new = _squarem_cycle(state.theta_tilde, psi, cfg, settings)
    return MMIterate(
        theta_tilde=tt_new,
        objective=obj_new,
        xi0=xi,
        lambda_max=lam,
        alpha=alpha,
        iteration=state.iteration + 1,
    )


@dataclass(frozen=True)
class MMResult:
    """Outcome of a full optimizer run."""

    reflect: ReflectConfig
    result: EvalResult
    iterations: int
    converged: bool
    objectives: tuple


def random_lifted_init(rng: np.random.Generator, n_i: int) -> np.ndarray:
    """Entrywise-normalized random complex vector of length n_i + 1."""
    z = rng.standard_normal(n_i + 1) + 1j * rng.standard_normal(n_i + 1)
    mags = np.abs(z)
    z = np.where(mags > 0.0, z / np.where(mags > 0.0, mags, 1.0), 1.0 + 0.0j)
    return z


def ones_lifted_init(n_i: int) -> np.ndarray:
    """Deterministic all-ones starting point, for regression tests."""
    return np.ones(n_i + 1, dtype=complex)


def run_mm(
    init: np.ndarray,
    psi: CompositeChannel,
    cfg: SystemConfig,
    settings: MMSettings = MMSettings(),
) -> MMResult:
    """Iterate the optimizer to a stationary reflection configuration.

    Stops when the relative objective change over one iteration (one
    accelerated cycle when ``settings.accelerate``) falls below
    ``settings.epsilon``, or flags non-convergence after
    ``settings.max_iter`` iterations.  The reflection matrix is read off
    the final lifted vector by dividing out the slack entry, which leaves
    the objective unchanged.
    """
    tt = check_unit_modulus(init).copy()
    gram = psi.psi @ psi.psi.conj().T
    obj = lifted_objective(tt, psi, cfg)
    objectives = [obj]
    converged = False
    iterations = 0
    for _ in range(settings.max_iter):
        if settings.accelerate:
            tt_new, obj_new = _squarem_cycle(tt, psi, cfg, settings, gram=gram)
        else:
            tt_new, _, _, _ = _mm_map(tt, psi, cfg, settings, gram=gram)
            obj_new = lifted_objective(tt_new, psi, cfg)
        iterations += 1
        objectives.append(obj_new)
        delta = abs(obj_new - obj) / max(1.0, abs(obj))
        tt, obj = tt_new, obj_new
        if delta < settings.epsilon:
            converged = True
            break
    reflect = extract_reflect(tt)
    v = psi.psi @ tt / tt[-1]
    pt = psi_tilde_from_v(v, cfg)
    result = EvalResult(
        snr=snr_at_optimal_beam_from_v(v, cfg),
        psi_val=psi_from_psi_tilde(pt, cfg),
        psi_tilde_val=pt,
    )
    return MMResult(
        reflect=reflect,
        result=result,
        iterations=iterations,
        converged=converged,
        objectives=tuple(objectives),
    )


def quantize_phases(theta: ReflectConfig, pc: PhaseConstraint) -> ReflectConfig:
    """Project each phase onto the nearest discrete level under angular distance.

    Distances wrap around the circle; exact ties go to the smaller level.
    """
    if pc.kind is not PhaseKind.DISCRETE:
        raise ConfigError("quantize_phases requires a discrete phase constraint")
    levels = 2.0 * np.pi * np.arange(pc.levels) / pc.levels
    diff = theta.phases[:, None] - levels[None, :]
    wrapped = np.abs((diff + np.pi) % (2.0 * np.pi) - np.pi)
    picks = np.argmin(wrapped, axis=1)
    return ReflectConfig.from_phases(levels[picks])
