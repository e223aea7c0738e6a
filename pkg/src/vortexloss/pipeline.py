"""Reduction of cavity measurements to vortex sensitivities.

The chain is: transmitted-power ringdown -> field-resolved loaded Q ->
intrinsic Q0 binned by on-axis field -> subtraction of a zero-field
reference cooldown, normalized by the trapped field.
"""

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import constants

from ._validation import check_nonnegative, check_positive, scalar_or_array
from .exceptions import (
    DataError,
    EmptyResultError,
    IllConditionedError,
    NoMatchError,
    NonphysicalCouplingError,
    UndefinedRatioError,
)
from .model import DEFAULT_MATERIAL

logger = logging.getLogger(__name__)

Q1_DEFAULT = 1.4e9
DEFAULT_WINDOW = 21
MIN_TRACE_SAMPLES = 8


@dataclass
class DecayTrace:
    """Transmitted power sampled after the drive is switched off."""

    time: np.ndarray
    power: np.ndarray
    f0: float
    temperature: float
    label: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.time.ndim != 1 or self.time.shape != self.power.shape:
            raise DataError("time and power must be 1-d arrays of equal length")
        if self.time.size < MIN_TRACE_SAMPLES:
            raise DataError(
                f"decay trace needs at least {MIN_TRACE_SAMPLES} samples, got {self.time.size}"
            )
        if np.any(np.diff(self.time) <= 0):
            raise DataError("decay trace times must be strictly increasing")
        if np.any(self.power < 0) or not np.all(np.isfinite(self.power)):
            raise DataError("decay trace powers must be finite and >= 0")
        if not self.f0 > 0:
            raise DataError(f"f0 must be > 0, got {self.f0!r}")


@dataclass
class LoadedQ:
    """Field-resolved loaded quality factor from one trace.

    One entry per retained regression window: window-centre time, fitted
    power at that time and the loaded Q. ``n_flagged`` counts windows
    dropped because the power was not decaying.
    """

    time: np.ndarray
    power: np.ndarray
    q_loaded: np.ndarray
    n_flagged: int = 0


_QCOLUMNS = ("temperature", "field", "photon_n", "q0", "q0_err", "f0", "f0_err")


@dataclass
class QDataset:
    """Intrinsic Q0 and resonance frequency for one cooldown.

    Rows are kept sorted by temperature, then field.
    """

    cooldown_id: str
    b_trap: float
    b_trap_err: float
    temperature: np.ndarray
    field: np.ndarray
    photon_n: np.ndarray
    q0: np.ndarray
    q0_err: np.ndarray
    f0: np.ndarray
    f0_err: np.ndarray

    def __post_init__(self):
        cols = [np.atleast_1d(np.asarray(getattr(self, c), dtype=float)) for c in _QCOLUMNS]
        n = cols[0].size
        if any(c.shape != (n,) for c in cols):
            raise DataError("QDataset columns must be 1-d and of equal length")
        if np.any(cols[3] <= 0):
            raise DataError(f"QDataset {self.cooldown_id}: Q0 must be > 0")
        if self.b_trap_err < 0:
            raise DataError("b_trap uncertainty must be >= 0")
        order = np.lexsort((cols[1], cols[0]))
        for name, col in zip(_QCOLUMNS, cols):
            setattr(self, name, col[order])

    def __len__(self):
        return self.temperature.size


@dataclass
class SensitivityCurve:
    """Resistive and reactive sensitivity of one flux cooldown, in ohm/T.

    ``ref_index``/``flux_index`` point back to the QDataset rows each
    point was computed from (``-1`` when interpolated or unknown).
    """

    cooldown_id: str
    b_trap: float
    temperature: np.ndarray
    field: np.ndarray
    s: np.ndarray
    s_err: np.ndarray
    s_prime: np.ndarray
    s_prime_err: np.ndarray
    ref_index: np.ndarray = None
    flux_index: np.ndarray = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        names = ("temperature", "field", "s", "s_err", "s_prime", "s_prime_err")
        for name in names:
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        n = self.temperature.size
        if any(getattr(self, name).shape != (n,) for name in names):
            raise DataError("SensitivityCurve columns must be 1-d and of equal length")
        if np.any(self.s_err < 0) or np.any(self.s_prime_err < 0):
            raise DataError("sensitivity uncertainties must be >= 0")
        for name in ("ref_index", "flux_index"):
            idx = getattr(self, name)
            idx = np.full(n, -1, dtype=int) if idx is None else np.asarray(idx, dtype=int)
            setattr(self, name, idx)

    def __len__(self):
        return self.temperature.size


def ql_from_decay(trace, window=DEFAULT_WINDOW, noise_floor=0.0, step=1):
    """Loaded Q along a ringdown from the log-derivative of the power.

    A straight line is fitted to ``ln P`` over each sliding window of
    ``window`` samples and ``Q_L = -omega / slope``. Samples at or below
    ``noise_floor`` are discarded first. Windows whose slope is not
    negative are flagged and dropped.

    Raises
    ------
    EmptyResultError
        If no window shows a decaying power.
    """
    if window < 3:
        raise DataError(f"window must be >= 3 samples, got {window}")
    keep = trace.power > noise_floor
    t = trace.time[keep]
    y = np.log(trace.power[keep])
    if t.size < window:
        raise EmptyResultError(
            f"only {t.size} samples above the noise floor, need at least {window}"
        )
    tw = np.lib.stride_tricks.sliding_window_view(t, window)[::step]
    yw = np.lib.stride_tricks.sliding_window_view(y, window)[::step]
    t_mean = tw.mean(axis=1)
    y_mean = yw.mean(axis=1)
    dt = tw - t_mean[:, None]
    slope = np.sum(dt * (yw - y_mean[:, None]), axis=1) / np.sum(dt * dt, axis=1)

    ok = slope < 0
    n_flagged = int(np.count_nonzero(~ok))
    if not np.any(ok):
        raise EmptyResultError("no decaying window in trace (power is not falling)")
    omega = 2 * np.pi * trace.f0
    return LoadedQ(
        time=t_mean[ok],
        power=np.exp(y_mean[ok]),
        q_loaded=-omega / slope[ok],
        n_flagged=n_flagged,
    )


def q0_from_ql(q_l, q1=Q1_DEFAULT):
    """Intrinsic quality factor ``(1/Q_L - 1/Q1)**-1``; ``q1`` may be ``inf``."""
    q_l = check_positive(q_l, "q_l")
    q1 = np.asarray(q1, dtype=float)
    if np.any(np.isnan(q1)) or np.any(q1 <= 0):
        raise DataError(f"q1 must be > 0, got {q1!r}")
    if np.any(q_l >= q1):
        raise NonphysicalCouplingError(
            f"loaded Q {np.max(q_l):.4g} is not below the coupling Q {float(np.min(q1)):.4g}"
        )
    return scalar_or_array(1.0 / (1.0 / q_l - 1.0 / q1))


def onaxis_field(p_t, q1=Q1_DEFAULT, cal=1.0):
    """On-axis field ``cal * sqrt(p_t * q1)`` (V/m for a calibrated ``cal``)."""
    p_t = check_nonnegative(p_t, "p_t")
    return scalar_or_array(cal * np.sqrt(p_t * q1))


def photon_number(u, f0):
    """Intracavity photon number ``u / (hbar * 2 pi f0)``."""
    u = check_nonnegative(u, "u")
    return scalar_or_array(u / (constants.hbar * 2 * np.pi * f0))


def stored_energy(p_t, f0, q1=Q1_DEFAULT):
    """Stored energy from transmitted power, ``U = p_t * q1 / omega``."""
    return scalar_or_array(check_nonnegative(p_t, "p_t") * q1 / (2 * np.pi * f0))


def field_bin(field_v_per_m, bins_per_decade=1):
    """Index of the log-spaced field bin; non-positive fields share one bin."""
    e = np.asarray(field_v_per_m, dtype=float)
    out = np.full(e.shape, np.iinfo(np.int64).min, dtype=np.int64)
    pos = e > 0
    # nudge so exact decade edges (e.g. 100 V/m) are not split by round-off
    out[pos] = np.floor(np.log10(e[pos]) * bins_per_decade + 1e-9).astype(np.int64)
    return out


def reduce_traces(
    traces,
    q1=Q1_DEFAULT,
    *,
    cooldown_id="",
    b_trap=0.0,
    b_trap_err=0.0,
    window=DEFAULT_WINDOW,
    cal=1.0,
    bins_per_decade=1,
):
    """Reduce decay traces of one cooldown to a :class:`QDataset`.

    Each trace gives a series of Q0 values at decreasing field; these are
    grouped into log-spaced field bins and averaged, one row per bin and
    trace. Windows with ``Q_L >= q1`` are excluded with a warning.
    """
    rows = []
    for k, trace in enumerate(traces):
        name = trace.label.get("label", k)
        lq = ql_from_decay(trace, window=window)
        physical = lq.q_loaded < q1
        n_bad = int(np.count_nonzero(~physical))
        if n_bad:
            logger.warning("trace %s: %d windows with Q_L >= Q1 excluded", name, n_bad)
        if not np.any(physical):
            logger.warning("trace %s: no usable windows, trace skipped", name)
            continue
        q0 = q0_from_ql(lq.q_loaded[physical], q1)
        p = lq.power[physical]
        e = np.asarray(onaxis_field(p, q1, cal))
        n = np.asarray(photon_number(stored_energy(p, trace.f0, q1), trace.f0))
        bins = field_bin(e, bins_per_decade)
        f0_err = float(trace.label.get("f0_err_hz", 0.0))
        logger.info(
            "trace %s: %d windows retained, %d flagged, %d field bins",
            name, q0.size, lq.n_flagged + n_bad, np.unique(bins).size,
        )
        for b in np.unique(bins):
            sel = bins == b
            m = int(np.count_nonzero(sel))
            err = float(np.std(q0[sel], ddof=1) / np.sqrt(m)) if m > 1 else 0.0
            rows.append(
                (trace.temperature, e[sel].mean(), n[sel].mean(), q0[sel].mean(),
                 err, trace.f0, f0_err)
            )
    if not rows:
        raise EmptyResultError("no usable decay windows in any trace")
    cols = np.array(rows, dtype=float).T
    return QDataset(cooldown_id, b_trap, b_trap_err, *cols)


def _match_nearest(ref, flux, temp_tol, bins_per_decade):
    ref_bins = field_bin(ref.field, bins_per_decade)
    flux_bins = field_bin(flux.field, bins_per_decade)
    pairs = []
    for i in range(len(flux)):
        cand = np.flatnonzero(ref_bins == flux_bins[i])
        if cand.size == 0:
            continue
        dtemp = np.abs(ref.temperature[cand] - flux.temperature[i])
        dfield = np.abs(np.log(np.maximum(ref.field[cand], 1e-300))
                        - np.log(max(flux.field[i], 1e-300)))
        j = cand[np.lexsort((dfield, dtemp))[0]]
        if abs(ref.temperature[j] - flux.temperature[i]) <= temp_tol:
            pairs.append((j, i))
    return pairs


def _interpolated_reference(ref, flux, temp_tol, bins_per_decade):
    """Reference 1/Q0, its error, f0 and its error interpolated in temperature."""
    ref_bins = field_bin(ref.field, bins_per_decade)
    flux_bins = field_bin(flux.field, bins_per_decade)
    out = []
    for i in range(len(flux)):
        cand = np.flatnonzero(ref_bins == flux_bins[i])
        if cand.size == 0:
            continue
        # one row per reference temperature: the one nearest in field
        best = {}
        for j in cand:
            d = abs(np.log(max(ref.field[j], 1e-300)) - np.log(max(flux.field[i], 1e-300)))
            tj = ref.temperature[j]
            if tj not in best or d < best[tj][0]:
                best[tj] = (d, j)
        idx = np.array([best[tj][1] for tj in sorted(best)])
        tt = ref.temperature[idx]
        ti = flux.temperature[i]
        if ti < tt[0] - temp_tol or ti > tt[-1] + temp_tol:
            continue
        inv_q = np.interp(ti, tt, 1.0 / ref.q0[idx])
        inv_q_err = np.interp(ti, tt, ref.q0_err[idx] / ref.q0[idx] ** 2)
        f = np.interp(ti, tt, ref.f0[idx])
        f_err = np.interp(ti, tt, ref.f0_err[idx])
        out.append((i, inv_q, inv_q_err, f, f_err))
    return out


def extract_sensitivity(
    ref, flux, mp=DEFAULT_MATERIAL, *, temp_tol=0.01, bins_per_decade=1, interpolate=False
):
    """Sensitivity curve of ``flux`` relative to the zero-field ``ref`` cooldown.

    ``S = (G/B)(1/Q0_flux - 1/Q0_ref)`` and
    ``S' = -(2G/B)(f0_flux - f0_ref) / f0_ref(T->0)``, where ``f0_ref(T->0)``
    is the reference frequency at its lowest temperature. Rows are paired
    within the same field bin by nearest temperature (``temp_tol`` in K),
    or by linear interpolation of the reference in temperature when
    ``interpolate`` is set. Uncertainties are first-order, in quadrature,
    from the Q0, f0 and trapped-field errors.
    """
    b, b_err = float(flux.b_trap), float(flux.b_trap_err)
    if b <= 0 or b <= b_err:
        raise IllConditionedError(
            f"cooldown {flux.cooldown_id}: trapped field {b:g} T is not resolved "
            f"above its uncertainty {b_err:g} T"
        )
    if abs(ref.b_trap) > max(ref.b_trap_err, 0.0) and ref.b_trap != 0:
        logger.warning(
            "reference cooldown %s has a resolved trapped field of %g T",
            ref.cooldown_id, ref.b_trap,
        )
    if len(ref) == 0 or len(flux) == 0:
        raise NoMatchError("empty dataset")
    f_zero = ref.f0[0]
    G = mp.G

    if interpolate:
        entries = _interpolated_reference(ref, flux, temp_tol, bins_per_decade)
        if not entries:
            raise NoMatchError("no flux rows fall inside the reference temperature range")
        fi = np.array([e[0] for e in entries], dtype=int)
        ri = np.full(fi.size, -1, dtype=int)
        inv_q_ref, inv_q_ref_err, f_ref, f_ref_err = (
            np.array([e[k] for e in entries]) for k in range(1, 5)
        )
    else:
        pairs = _match_nearest(ref, flux, temp_tol, bins_per_decade)
        if not pairs:
            raise NoMatchError(
                f"no (T, E) pairs between {ref.cooldown_id!r} and {flux.cooldown_id!r} "
                f"within {temp_tol:g} K"
            )
        ri = np.array([p[0] for p in pairs], dtype=int)
        fi = np.array([p[1] for p in pairs], dtype=int)
        inv_q_ref = 1.0 / ref.q0[ri]
        inv_q_ref_err = ref.q0_err[ri] / ref.q0[ri] ** 2
        f_ref, f_ref_err = ref.f0[ri], ref.f0_err[ri]

    inv_q = 1.0 / flux.q0[fi]
    inv_q_err = flux.q0_err[fi] / flux.q0[fi] ** 2
    s = G / b * (inv_q - inv_q_ref)
    s_err = np.sqrt((G / b) ** 2 * (inv_q_err**2 + inv_q_ref_err**2) + (s * b_err / b) ** 2)
    sp = -2.0 * G / b * (flux.f0[fi] - f_ref) / f_zero
    sp_err = np.sqrt(
        (2.0 * G / (b * f_zero)) ** 2 * (flux.f0_err[fi] ** 2 + f_ref_err**2)
        + (sp * b_err / b) ** 2
    )
    return SensitivityCurve(
        cooldown_id=flux.cooldown_id,
        b_trap=b,
        temperature=flux.temperature[fi],
        field=flux.field[fi],
        s=s,
        s_err=s_err,
        s_prime=sp,
        s_prime_err=sp_err,
        ref_index=ri,
        flux_index=fi,
        meta={"reference": ref.cooldown_id, "b_trap_err": b_err, "f0_ref_zero_hz": f_zero},
    )


def flux_trapping_ratio(b_nc, b_sc):
    """Ratio ``B_SC / B_NC`` with first-order propagated uncertainty.

    Both arguments are ``(value, sigma)`` pairs in any common unit.
    """
    (nc, nc_err), (sc, sc_err) = b_nc, b_sc
    if nc == 0 or abs(nc) < nc_err:
        raise UndefinedRatioError(f"B_NC = {nc:g} +/- {nc_err:g} is consistent with zero")
    ratio = sc / nc
    if sc == 0:
        return ratio, abs(sc_err / nc)
    return ratio, abs(ratio) * np.hypot(nc_err / nc, sc_err / sc)


def average_thermalized(traces, criterion=None, rel_tol=0.01):
    """Pointwise mean of the traces judged thermalized.

    By default a trace passes when its temperature lies within ``rel_tol``
    of the median temperature of the set. ``criterion`` may be any
    callable ``trace -> bool``. Traces on a different time grid are
    linearly resampled onto the first retained trace's grid.
    """
    traces = list(traces)
    if not traces:
        raise EmptyResultError("no traces to average")
    if criterion is None:
        t_med = float(np.median([tr.temperature for tr in traces]))

        def criterion(tr):
            return abs(tr.temperature - t_med) <= rel_tol * max(t_med, 1e-12)

    kept = [tr for tr in traces if criterion(tr)]
    if not kept:
        raise EmptyResultError("no trace passed the thermalization criterion")
    base = kept[0]
    stack = []
    for tr in kept:
        if tr.time.shape == base.time.shape and np.array_equal(tr.time, base.time):
            stack.append(tr.power)
        else:
            stack.append(np.interp(base.time, tr.time, tr.power))
    label = dict(base.label)
    label["n_averaged"] = len(kept)
    return DecayTrace(
        time=base.time.copy(),
        power=np.mean(stack, axis=0),
        f0=float(np.mean([tr.f0 for tr in kept])),
        temperature=float(np.mean([tr.temperature for tr in kept])),
        label=label,
    )
