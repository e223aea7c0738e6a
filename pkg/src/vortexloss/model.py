"""Closed-form vortex loss model for a niobium cavity wall.

Vortices trapped in the wall respond to the RF current in the
Gittleman-Rosenblum (zero creep) limit, with a flux-flow resistivity set
by Bardeen-Stephen and a depinning frequency that grows exponentially
with temperature. Expanding the surface impedance to first order in the
trapped field gives a complex sensitivity ``S + iS'`` per unit field.

All functions are pure, broadcast over numpy arrays in ``t`` and work in
SI units (K, T, rad/s, ohm, ohm/T).
"""

from dataclasses import dataclass

import numpy as np
from scipy import constants

from ._validation import (
    as_float_array,
    check_nonnegative,
    check_positive,
    check_temperature,
    scalar_or_array,
)
from .exceptions import DomainError
from .units import to_nohm_per_mg

# Reject temperatures this close to Tc: lambda_s and 1/B_c2 diverge there.
TC_GUARD = 0.999


@dataclass(frozen=True)
class MaterialParams:
    """Fixed niobium and cavity constants.

    Attributes
    ----------
    rho_n : float
        Normal-state resistivity (ohm m).
    bc2_0 : float
        Upper critical field at 0 K (T).
    tc : float
        Critical temperature (K).
    lambda_L : float
        London penetration depth at 0 K (m).
    G : float
        Geometry factor (ohm).
    f0 : float
        Resonant frequency (Hz).
    """

    rho_n: float = 4e-10
    bc2_0: float = 0.2
    tc: float = 9.2
    lambda_L: float = 39e-9
    G: float = 275.0
    f0: float = 6e9

    def __post_init__(self):
        for name in ("rho_n", "bc2_0", "tc", "lambda_L", "G", "f0"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"MaterialParams.{name} must be > 0, got {value!r}")

    @property
    def omega(self):
        """Cavity angular frequency 2*pi*f0 (rad/s)."""
        return 2 * np.pi * self.f0


@dataclass(frozen=True)
class PinningParams:
    """Vortex pinning parameters for one dataset.

    ``omega0`` is the depinning frequency at 0 K (rad/s), ``alpha`` the
    thermal activation coefficient (1/K) and ``F`` the dimensionless
    scale applied to the reactive response.
    """

    omega0: float = 2.22e10
    alpha: float = 0.701
    F: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.omega0) and self.omega0 > 0):
            raise DomainError(f"omega0 must be > 0, got {self.omega0!r}")
        if not np.isfinite(self.alpha):
            raise DomainError(f"alpha must be finite, got {self.alpha!r}")
        if not (np.isfinite(self.F) and self.F >= 0):
            raise DomainError(f"F must be >= 0, got {self.F!r}")


@dataclass(frozen=True)
class ComplexSensitivity:
    """Resistive (``s``) and reactive (``s_prime``) sensitivity in ohm/T."""

    s: "float | np.ndarray"
    s_prime: "float | np.ndarray"

    @property
    def complex(self):
        return np.asarray(self.s) + 1j * np.asarray(self.s_prime)

    def to_nohm_per_mg(self):
        return ComplexSensitivity(to_nohm_per_mg(self.s), to_nohm_per_mg(self.s_prime))


DEFAULT_MATERIAL = MaterialParams()

# Shared (omega0, alpha) with one F per dataset, ordered by trapped field
# 50, 100, 250 mG.
REFERENCE_PINNING = (
    PinningParams(2.22e10, 0.701, 1.91e3),
    PinningParams(2.22e10, 0.701, 7.43e2),
    PinningParams(2.22e10, 0.701, 4.97e2),
)


def _omega(omega, mp):
    if omega is None:
        return mp.omega
    return check_positive(omega, "omega")


def bc2(t, mp=DEFAULT_MATERIAL):
    """Upper critical field ``bc2_0 * (1 - (t/tc)**2)`` in tesla."""
    t = check_temperature(t, mp.tc)
    return scalar_or_array(mp.bc2_0 * (1.0 - (t / mp.tc) ** 2))


def lambda_s(t, mp=DEFAULT_MATERIAL):
    """Condensate penetration depth in the two-fluid form.

    ``lambda_L / sqrt(1 - (t/tc)**4)``. Below about 1.3 K this differs from
    ``lambda_L`` by less than 0.05 %, so the choice of form is immaterial
    in the millikelvin regime. No mean-free-path correction is applied.
    """
    t = check_temperature(t, mp.tc, TC_GUARD)
    return scalar_or_array(mp.lambda_L / np.sqrt(1.0 - (t / mp.tc) ** 4))


def depinning_frequency(t, pp):
    """Thermally activated depinning frequency ``omega0 * exp(alpha * t)``."""
    t = check_nonnegative(t, "temperature")
    return scalar_or_array(pp.omega0 * np.exp(pp.alpha * t))


def crossover_temperature(pp, omega=None, mp=DEFAULT_MATERIAL):
    """Temperature at which the depinning frequency equals ``omega``.

    Raises DomainError when ``alpha == 0`` (no crossover) or the crossover
    would sit at negative temperature.
    """
    omega = float(_omega(omega, mp))
    if pp.alpha == 0:
        raise DomainError("alpha = 0: depinning frequency never crosses omega")
    t_star = np.log(omega / pp.omega0) / pp.alpha
    if t_star < 0:
        raise DomainError(f"crossover at negative temperature ({t_star:g} K)")
    return float(t_star)


def flux_flow_resistivity(t, b_trap, mp=DEFAULT_MATERIAL):
    """Bardeen-Stephen flux-flow resistivity ``rho_n * b_trap / B_c2(t)``."""
    t = check_temperature(t, mp.tc, TC_GUARD)
    b_trap = check_nonnegative(b_trap, "b_trap")
    b_c2 = mp.bc2_0 * (1.0 - (t / mp.tc) ** 2)
    if np.any(b_trap > b_c2):
        raise DomainError("b_trap exceeds B_c2(t): the wall would be in the normal state")
    return scalar_or_array(mp.rho_n * b_trap / b_c2)


def gr_resistivity(t, b_trap, omega=None, mp=DEFAULT_MATERIAL, pp=PinningParams()):
    """Complex vortex resistivity in the Gittleman-Rosenblum limit.

    ``rho_ff / (1 - i * omega_d / omega)``: free flux flow for
    ``omega_d << omega``, purely pinned (vanishing) for ``omega_d >> omega``.
    """
    omega = _omega(omega, mp)
    rho_ff = np.asarray(flux_flow_resistivity(t, b_trap, mp))
    omega_d = np.asarray(depinning_frequency(t, pp))
    return scalar_or_array(rho_ff / (1.0 - 1j * omega_d / omega))


def _response_factors(t, omega, pp):
    """Return ``(omega**2, omega*omega_d) / (omega**2 + omega_d**2)``.

    Written in terms of r = omega_d/omega so that very large depinning
    frequencies underflow to zero instead of producing inf/inf.
    """
    with np.errstate(over="ignore", divide="ignore"):
        r = pp.omega0 * np.exp(pp.alpha * t) / omega
        inv_r = 1.0 / r
        real = 1.0 / (1.0 + r * r)
        imag = 1.0 / (r + inv_r)
    return real, imag


def dispersive_factor(t, pp, omega=None, mp=DEFAULT_MATERIAL):
    """Reactive shape ``omega*omega_d / (omega**2 + omega_d**2)``; peaks at 1/2."""
    t = check_nonnegative(t, "temperature")
    return scalar_or_array(_response_factors(t, _omega(omega, mp), pp)[1])


def sensitivity_prefactor(t, mp=DEFAULT_MATERIAL):
    """``rho_n / (2 lambda_s(t) B_c2(t))`` in ohm/T, the free flux-flow limit of S."""
    t = check_temperature(t, mp.tc, TC_GUARD)
    lam = mp.lambda_L / np.sqrt(1.0 - (t / mp.tc) ** 4)
    b_c2 = mp.bc2_0 * (1.0 - (t / mp.tc) ** 2)
    return scalar_or_array(mp.rho_n / (2.0 * lam * b_c2))


def sensitivity_model(t, omega=None, mp=DEFAULT_MATERIAL, pp=PinningParams()):
    """Complex sensitivity to trapped flux, ``S + iS'`` in ohm/T.

    Parameters
    ----------
    t : float or array_like
        Temperature (K), ``0 <= t < 0.999 * tc``.
    omega : float, optional
        RF angular frequency (rad/s); defaults to ``mp.omega``.
    mp : MaterialParams
    pp : PinningParams
        ``F`` multiplies the reactive term only.

    Returns
    -------
    ComplexSensitivity
    """
    t = check_temperature(t, mp.tc, TC_GUARD)
    omega = _omega(omega, mp)
    pref = np.asarray(sensitivity_prefactor(t, mp))
    real, imag = _response_factors(t, omega, pp)
    return ComplexSensitivity(
        scalar_or_array(pref * real), scalar_or_array(pref * pp.F * imag)
    )


def surface_impedance(t, b_trap, omega=None, mp=DEFAULT_MATERIAL, pp=PinningParams()):
    """Surface impedance ``i omega mu0 sqrt(lambda_s**2 + lambda_v**2)`` in ohm.

    The vortex penetration depth is taken as
    ``lambda_v**2 = -i rho_GR / (mu0 omega)``, the branch for which the
    wall is passive (``Re Z >= 0``) and whose first-order expansion in
    ``b_trap`` reproduces :func:`sensitivity_model` with ``F = 1``.
    """
    omega = _omega(omega, mp)
    lam_s = np.asarray(lambda_s(t, mp))
    rho = np.asarray(gr_resistivity(t, b_trap, omega, mp, pp))
    mu0 = constants.mu_0
    lam_v_sq = -1j * rho / (mu0 * omega)
    return scalar_or_array(1j * omega * mu0 * np.sqrt(lam_s**2 + lam_v_sq))


def scale_sensitivity_frequency(s, f_from, f_to):
    """Rescale a resistive sensitivity assuming ``R_Fl ~ sqrt(f)``."""
    f_from = check_positive(f_from, "f_from")
    f_to = check_positive(f_to, "f_to")
    return scalar_or_array(as_float_array(s, "s") * np.sqrt(f_to / f_from))


def t1_bound(q_ox0, s, b_trap, mp=DEFAULT_MATERIAL):
    """Photon lifetime bound from oxide and trapped-vortex losses.

    ``T1 = 1 / (omega * (1/q_ox0 + s * b_trap / G))``. Pass ``q_ox0=None``
    (or ``inf``) for an oxide-free surface; with no trapped flux either the
    result is ``inf``.
    """
    b_trap = check_nonnegative(b_trap, "b_trap")
    s = as_float_array(s, "s")
    if q_ox0 is None or np.isinf(q_ox0):
        oxide_loss = 0.0
    else:
        oxide_loss = 1.0 / float(check_positive(q_ox0, "q_ox0"))
    loss = oxide_loss + s * b_trap / mp.G
    with np.errstate(divide="ignore"):
        return scalar_or_array(1.0 / (mp.omega * loss))
