"""Core domain types: system configuration, channel blocks, reflect configs.

All powers are linear watts internally; dB conversion happens only at the
CLI boundary.  All types are immutable value objects and safe to share
across parallel workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

UNIT_MODULUS_TOL = 1e-12


class ConfigError(ValueError):
    """Raised when a configuration value is outside its allowed range."""


class DimensionError(ValueError):
    """Raised when channel blocks disagree with the configured array sizes."""


class DegenerateChannelError(RuntimeError):
    """Raised when the composite channel vanishes and no beam direction exists."""


@dataclass(frozen=True)
class SystemConfig:
    """Scalar system parameters of the impaired MISO link.

    Attributes:
        n_s: number of source antennas (>= 1).
        n_i: number of reflecting elements (>= 0; 0 models the no-IRS baselines).
        p: maximum source transmit power in watts.
        kappa_s: normalized transmit distortion level, in [0, 1).
        kappa_d: normalized receive distortion level, in [0, 1).
        sigma_n2: destination noise power in watts.
    """

    n_s: int
    n_i: int
    p: float
    kappa_s: float
    kappa_d: float
    sigma_n2: float

    def __post_init__(self):
        validate_config(self)

    @property
    def p_tilde(self) -> float:
        """Effective beam power budget after the transmit-distortion overhead."""
        return self.p / (1.0 + self.kappa_s)


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Check all scalar invariants; return ``cfg`` unchanged if they hold."""
    if int(cfg.n_s) != cfg.n_s or cfg.n_s < 1:
        raise ConfigError(f"n_s must be a positive integer, got {cfg.n_s}")
    if int(cfg.n_i) != cfg.n_i or cfg.n_i < 0:
        raise ConfigError(f"n_i must be a non-negative integer, got {cfg.n_i}")
    if not (cfg.p > 0.0) or not np.isfinite(cfg.p):
        raise ConfigError(f"p must be positive and finite, got {cfg.p}")
    if not (0.0 <= cfg.kappa_s < 1.0):
        raise ConfigError(f"kappa_s out of range [0, 1): {cfg.kappa_s}")
    if not (0.0 <= cfg.kappa_d < 1.0):
        raise ConfigError(f"kappa_d out of range [0, 1): {cfg.kappa_d}")
    if not (cfg.sigma_n2 > 0.0) or not np.isfinite(cfg.sigma_n2):
        raise ConfigError(f"sigma_n2 must be positive and finite, got {cfg.sigma_n2}")
    return cfg


def effective_power(cfg: SystemConfig) -> float:
    """Beam power budget p/(1+kappa_s); decreasing in kappa_s, linear in p."""
    return cfg.p / (1.0 + cfg.kappa_s)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of the three channel blocks.

    ``h_si`` is the source-to-IRS matrix (n_i x n_s), ``h_id`` the
    IRS-to-destination vector (n_i), ``h_sd`` the direct-link vector (n_s).
    """

    h_si: np.ndarray
    h_id: np.ndarray
    h_sd: np.ndarray

    def __post_init__(self):
        h_si = np.asarray(self.h_si, dtype=complex)
        h_id = np.asarray(self.h_id, dtype=complex).ravel()
        h_sd = np.asarray(self.h_sd, dtype=complex).ravel()
        if h_si.ndim != 2:
            raise DimensionError(f"h_si must be a matrix, got ndim={h_si.ndim}")
        n_i, n_s = h_si.shape
        if h_id.shape != (n_i,):
            raise DimensionError(
                f"h_id has {h_id.shape[0]} entries, expected {n_i} from h_si"
            )
        if h_sd.shape != (n_s,):
            raise DimensionError(
                f"h_sd has {h_sd.shape[0]} entries, expected {n_s} from h_si"
            )
        for name, arr in (("h_si", h_si), ("h_id", h_id), ("h_sd", h_sd)):
            if not np.all(np.isfinite(arr.view(float))):
                raise DimensionError(f"{name} contains non-finite entries")
        object.__setattr__(self, "h_si", h_si)
        object.__setattr__(self, "h_id", h_id)
        object.__setattr__(self, "h_sd", h_sd)

    @property
    def n_i(self) -> int:
        return self.h_si.shape[0]

    @property
    def n_s(self) -> int:
        return self.h_si.shape[1]

    def check_against(self, cfg: SystemConfig) -> "ChannelSet":
        if (self.n_i, self.n_s) != (cfg.n_i, cfg.n_s):
            raise DimensionError(
                f"channel is {self.n_i}x{self.n_s}, config wants {cfg.n_i}x{cfg.n_s}"
            )
        return self


@dataclass(frozen=True)
class CompositeChannel:
    """Stacked effective channel: IRS columns scaled by the drop link, plus direct.

    ``psi`` has shape n_s x (n_i + 1).  Multiplying it by a lifted phase
    vector reproduces the end-to-end channel seen by the destination.
    """

    psi: np.ndarray

    @property
    def n_s(self) -> int:
        return self.psi.shape[0]

    @property
    def n_i(self) -> int:
        return self.psi.shape[1] - 1


def build_composite(ch: ChannelSet) -> CompositeChannel:
    """Assemble the n_s x (n_i+1) composite matrix from the channel blocks."""
    reflect_cols = ch.h_si.conj().T * ch.h_id[None, :]
    psi = np.concatenate([reflect_cols, ch.h_sd[:, None]], axis=1)
    return CompositeChannel(psi=psi)


class PhaseKind(enum.Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class PhaseConstraint:
    """Feasible set for each reflecting element's phase."""

    kind: PhaseKind
    bits: int | None = None

    def __post_init__(self):
        if self.kind is PhaseKind.DISCRETE:
            if self.bits is None or int(self.bits) != self.bits or self.bits < 1:
                raise ConfigError(f"discrete phases need bits >= 1, got {self.bits}")
        elif self.bits is not None:
            raise ConfigError("bits only applies to discrete phase sets")

    @classmethod
    def continuous(cls) -> "PhaseConstraint":
        return cls(kind=PhaseKind.CONTINUOUS)

    @classmethod
    def discrete(cls, bits: int) -> "PhaseConstraint":
        return cls(kind=PhaseKind.DISCRETE, bits=bits)

    @property
    def levels(self) -> int:
        if self.kind is not PhaseKind.DISCRETE:
            raise ConfigError("levels only defined for discrete phase sets")
        return 2 ** self.bits


@dataclass(frozen=True)
class ReflectConfig:
    """Unit-modulus reflection coefficients, stored as the physical diagonal.

    ``phases`` is canonical; ``theta`` is exp(1j*phases) and therefore
    unit-modulus by construction.
    """

    theta: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=complex).ravel()
        phases = np.asarray(self.phases, dtype=float).ravel()
        if theta.shape != phases.shape:
            raise DimensionError("theta and phases must have equal length")
        if np.any(np.abs(np.abs(theta) - 1.0) > UNIT_MODULUS_TOL):
            raise ConfigError("reflection coefficients must be unit modulus")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phases", phases)

    @classmethod
    def from_phases(cls, phases: np.ndarray) -> "ReflectConfig":
        phases = np.asarray(phases, dtype=float).ravel()
        return cls(theta=np.exp(1j * phases), phases=phases)

    @classmethod
    def from_theta(cls, theta: np.ndarray) -> "ReflectConfig":
        """Build from arbitrary nonzero coefficients, renormalizing each entry."""
        theta = np.asarray(theta, dtype=complex).ravel()
        mags = np.abs(theta)
        if np.any(mags == 0.0):
            raise ConfigError("cannot normalize a zero reflection coefficient")
        return cls.from_phases(np.angle(theta))

    @property
    def n_i(self) -> int:
        return self.theta.shape[0]


def lift_reflect(rc: ReflectConfig) -> np.ndarray:
    """Lifted phase vector: conjugated coefficients with a trailing unit slack.

    Conjugation happens exactly once, here, so that multiplying the
    composite matrix by the lifted vector reproduces the physical
    end-to-end channel.
    """
    return np.concatenate([np.conj(rc.theta), [1.0 + 0.0j]])


def extract_reflect(theta_tilde: np.ndarray) -> ReflectConfig:
    """Undo the lifting: divide out the slack entry and conjugate back."""
    tt = np.asarray(theta_tilde, dtype=complex).ravel()
    if tt.shape[0] < 1:
        raise DimensionError("lifted vector must have at least the slack entry")
    return ReflectConfig.from_theta(np.conj(tt[:-1] / tt[-1]))


def check_unit_modulus(vec: np.ndarray, tol: float = UNIT_MODULUS_TOL) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex).ravel()
    err = np.max(np.abs(np.abs(vec) - 1.0)) if vec.size else 0.0
    if err > tol:
        raise ConfigError(f"entries deviate from unit modulus by {err:.3e}")
    return vec


@dataclass(frozen=True)
class EvalResult:
    """SNR and reflect-objective values for one (beam, reflection) pair.

    ``snr`` is the physical receive SNR, ``psi_tilde_val`` the separable
    reflect objective, and ``psi_val`` the power-scaled objective
    p_tilde * psi_tilde / (kappa_d * psi_tilde + 1).
    """

    snr: float
    psi_val: float
    psi_tilde_val: float
