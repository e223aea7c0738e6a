"""Synthetic measurements with known ground truth.

Used as the independent oracle for the reduction pipeline and the fitter:
data are generated forward from the closed-form model, optionally with
multiplicative Gaussian noise, and every output records the truth it was
built from.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import DEFAULT_MATERIAL, REFERENCE_PINNING, MaterialParams, sensitivity_model
from .pipeline import DecayTrace, QDataset, SensitivityCurve
from .units import mg_to_tesla

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"


@dataclass
class SynthSpec:
    """Ground truth and noise model for a synthetic experiment.

    ``pinning`` and ``b_trap`` (tesla) hold one entry per flux cooldown.
    ``noise_rel`` is the relative Gaussian noise actually applied and
    ``sigma_rel`` the relative uncertainty reported in the error columns
    (defaults to ``noise_rel``; set it separately to get noiseless data
    that still carries realistic weights).
    """

    pinning: tuple = REFERENCE_PINNING
    b_trap: tuple = (mg_to_tesla(50.0), mg_to_tesla(100.0), mg_to_tesla(250.0))
    temperatures: np.ndarray = field(default_factory=lambda: np.linspace(0.01, 1.3, 25))
    material: MaterialParams = DEFAULT_MATERIAL
    noise_rel: float = 0.0
    sigma_rel: float = None
    seed: int = 0
    field_v_per_m: float = 50.0
    cooldown_ids: tuple = None

    def __post_init__(self):
        self.pinning = tuple(self.pinning)
        self.b_trap = tuple(float(b) for b in self.b_trap)
        self.temperatures = np.atleast_1d(np.asarray(self.temperatures, dtype=float))
        if len(self.pinning) != len(self.b_trap):
            raise ValueError("need one PinningParams per trapped-field level")
        if self.noise_rel < 0 or (self.sigma_rel is not None and self.sigma_rel < 0):
            raise ValueError("noise levels must be >= 0")
        if self.sigma_rel is None:
            self.sigma_rel = self.noise_rel
        if self.cooldown_ids is None:
            self.cooldown_ids = tuple(f"CD{k + 2}" for k in range(len(self.b_trap)))

    def truth(self, k):
        pp = self.pinning[k]
        return {
            "omega0_rad_s": pp.omega0,
            "alpha_per_k": pp.alpha,
            "f": pp.F,
            "b_trap_tesla": self.b_trap[k],
            "noise_rel": self.noise_rel,
            "sigma_rel": self.sigma_rel,
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
        }


def generate_decay(
    q_l, f0, p0=1e-12, duration=None, rate=None, noise_rel=0.0, seed=0,
    temperature=0.01, n_samples=2000, label=None,
):
    """Exponential ringdown ``p0 * exp(-omega t / q_l) * (1 + eps)``.

    With ``duration``/``rate`` unset the trace spans five power decay times
    in ``n_samples`` samples (or one second if ``q_l`` is infinite).
    """
    omega = 2 * np.pi * f0
    tau = q_l / omega
    if duration is None:
        duration = 5 * tau if np.isfinite(tau) else 1.0
    if rate is None:
        rate = n_samples / duration
    n = max(int(round(duration * rate)), 8)
    t = np.arange(n) / rate
    power = p0 * np.exp(-t / tau)
    if noise_rel > 0:
        rng = np.random.default_rng(seed)
        power = power * (1.0 + noise_rel * rng.standard_normal(n))
        power = np.clip(power, 0.0, None)
    meta = {"label": "" if label is None else str(label), "truth_q_loaded": float(q_l)}
    return DecayTrace(t, power, float(f0), float(temperature), meta)


def generate_sensitivity_curves(spec):
    """One :class:`SensitivityCurve` per flux cooldown in ``spec``."""
    rng = np.random.default_rng(spec.seed)
    t = spec.temperatures
    curves = []
    for k, pp in enumerate(spec.pinning):
        model = sensitivity_model(t, None, spec.material, pp)
        s = np.asarray(model.s, dtype=float) * np.ones_like(t)
        sp = np.asarray(model.s_prime, dtype=float) * np.ones_like(t)
        eps = rng.standard_normal((2, t.size))
        curves.append(
            SensitivityCurve(
                cooldown_id=spec.cooldown_ids[k],
                b_trap=spec.b_trap[k],
                temperature=t,
                field=np.full(t.size, spec.field_v_per_m),
                s=s * (1.0 + spec.noise_rel * eps[0]),
                s_err=spec.sigma_rel * np.abs(s),
                s_prime=sp * (1.0 + spec.noise_rel * eps[1]),
                s_prime_err=spec.sigma_rel * np.abs(sp),
                meta={"truth": spec.truth(k)},
            )
        )
    return curves


def _as_function(model, default):
    if model is None:
        return lambda t: np.full(np.shape(t), default, dtype=float)
    if callable(model):
        return lambda t: np.asarray(model(t), dtype=float) * np.ones(np.shape(t))
    return lambda t: np.full(np.shape(t), float(model))


def generate_qdatasets(spec, q_ref_model=5e9, f_ref_model=None):
    """Reference and flux-cooldown QDatasets consistent with the model.

    The reference Q0(T) and f0(T) come from ``q_ref_model`` and
    ``f_ref_model`` (constants or callables of temperature; f0 defaults to
    the material f0). Each flux dataset adds the vortex loss
    ``S * B / G`` to ``1/Q0`` and shifts the frequency by
    ``-S' * B * f0_ref(T_min) / (2 G)``.

    Returns
    -------
    reference : QDataset
    fluxes : list of QDataset
        One per trapped-field level in ``spec``.
    """
    rng = np.random.default_rng(spec.seed)
    mp = spec.material
    t = spec.temperatures
    e = np.full(t.size, spec.field_v_per_m)
    n_ph = np.zeros(t.size)
    q_ref = _as_function(q_ref_model, None)(t)
    f_ref = _as_function(f_ref_model, mp.f0)(t)
    f_zero = f_ref[np.argmin(t)]

    q_ref_obs = q_ref * (1.0 + spec.noise_rel * rng.standard_normal(t.size))
    reference = QDataset(
        "CD1", 0.0, 0.0, t, e, n_ph, q_ref_obs, spec.sigma_rel * q_ref, f_ref, np.zeros(t.size)
    )
    fluxes = []
    for k, pp in enumerate(spec.pinning):
        b = spec.b_trap[k]
        model = sensitivity_model(t, None, mp, pp)
        q = 1.0 / (1.0 / q_ref + np.asarray(model.s) * b / mp.G)
        shift = np.asarray(model.s_prime) * b * f_zero / (2.0 * mp.G) * np.ones(t.size)
        eps = rng.standard_normal((2, t.size))
        fluxes.append(
            QDataset(
                spec.cooldown_ids[k], b, 0.0, t, e, n_ph,
                q * (1.0 + spec.noise_rel * eps[0]),
                spec.sigma_rel * q,
                f_ref - shift * (1.0 + spec.noise_rel * eps[1]),
                spec.sigma_rel * np.abs(shift),
            )
        )
    return reference, fluxes
