import numpy as np
import pytest
from scipy import constants

from vortexloss.exceptions import (
    DomainError,
    DataError,
    EmptyResultError,
    IllConditionedError,
    NoMatchError,
    NonphysicalCouplingError,
    UndefinedRatioError,
)
from vortexloss.model import DEFAULT_MATERIAL, sensitivity_model
from vortexloss.pipeline import (
    DecayTrace,
    QDataset,
    average_thermalized,
    extract_sensitivity,
    field_bin,
    flux_trapping_ratio,
    onaxis_field,
    photon_number,
    q0_from_ql,
    ql_from_decay,
    reduce_traces,
)
from vortexloss.synth import SynthSpec, generate_decay, generate_qdatasets


def make_qdataset(cid, b, q0, f0, temps=(0.01,), fields=(50.0,), q0_err=0.0, f0_err=0.0, b_err=0.0):
    n = len(temps)
    return QDataset(
        cid, b, b_err, np.array(temps), np.array(fields), np.zeros(n),
        np.broadcast_to(q0, n), np.broadcast_to(q0_err, n),
        np.broadcast_to(f0, n), np.broadcast_to(f0_err, n),
    )


class TestDecayTrace:
    def test_too_short(self):
        with pytest.raises(DataError):
            DecayTrace(np.arange(5.0), np.ones(5), 6e9, 0.01)

    def test_non_increasing_time(self):
        t = np.arange(10.0)
        t[4] = t[3]
        with pytest.raises(DataError):
            DecayTrace(t, np.ones(10), 6e9, 0.01)

    def test_negative_power(self):
        p = np.ones(10)
        p[2] = -1
        with pytest.raises(DataError):
            DecayTrace(np.arange(10.0), p, 6e9, 0.01)


class TestQlFromDecay:
    def test_noiseless_exponential(self):
        tr = generate_decay(1e9, 6e9)
        lq = ql_from_decay(tr)
        np.testing.assert_allclose(lq.q_loaded, 1e9, rtol=1e-3)
        assert lq.n_flagged == 0

    def test_constant_power(self):
        tr = DecayTrace(np.arange(50.0), np.full(50, 2e-12), 6e9, 0.01)
        with pytest.raises(EmptyResultError):
            ql_from_decay(tr)

    def test_infinite_q_gives_constant_trace(self):
        tr = generate_decay(np.inf, 6e9, n_samples=100)
        assert np.all(tr.power == tr.power[0])
        with pytest.raises(EmptyResultError):
            ql_from_decay(tr)

    def test_two_slopes(self):
        # piecewise oracle: Q_L switches from 2e9 to 8e8 at the knee
        omega = 2 * np.pi * 6e9
        t = np.linspace(0, 0.2, 2001)
        knee = 0.1
        q_a, q_b = 2e9, 8e8
        log_p = np.where(t < knee, -omega * t / q_a, -omega * knee / q_a - omega * (t - knee) / q_b)
        lq = ql_from_decay(DecayTrace(t, 1e-12 * np.exp(log_p), 6e9, 0.01), window=21)
        half_span = 10 * (t[1] - t[0])
        early = lq.time < knee - 2 * half_span
        late = lq.time > knee + 2 * half_span
        np.testing.assert_allclose(lq.q_loaded[early], q_a, rtol=1e-2)
        np.testing.assert_allclose(lq.q_loaded[late], q_b, rtol=1e-2)

    def test_power_scale_invariance(self):
        tr = generate_decay(7e8, 6e9, noise_rel=0.01, seed=4)
        scaled = DecayTrace(tr.time, 1e3 * tr.power, tr.f0, tr.temperature)
        np.testing.assert_allclose(ql_from_decay(scaled).q_loaded, ql_from_decay(tr).q_loaded, rtol=1e-9)

    def test_rising_windows_are_flagged(self):
        t = np.arange(60.0) * 1e-3
        p = np.exp(-t / 0.01)
        p[40:] = p[39] * np.exp((t[40:] - t[39]) / 0.01)
        lq = ql_from_decay(DecayTrace(t, p, 6e9, 0.01), window=5)
        assert lq.n_flagged > 0
        assert np.all(lq.q_loaded > 0)

    def test_noise_floor(self):
        tr = generate_decay(1e9, 6e9, p0=1e-12)
        lq = ql_from_decay(tr, noise_floor=1e-13)
        assert lq.power.min() > 1e-13

    def test_window_too_small(self):
        with pytest.raises(DataError):
            ql_from_decay(generate_decay(1e9, 6e9), window=2)


class TestQ0:
    def test_half(self):
        assert q0_from_ql(7e8, 1.4e9) == pytest.approx(1.4e9, rel=1e-14)

    def test_lossless_antenna(self):
        assert q0_from_ql(3e9, np.inf) == 3e9

    def test_boundary(self):
        with pytest.raises(NonphysicalCouplingError):
            q0_from_ql(1.4e9, 1.4e9)

    def test_inverse_of_coupling(self):
        q0, q1 = 3.3e9, 1.4e9
        q_l = 1.0 / (1.0 / q0 + 1.0 / q1)
        assert q0_from_ql(q_l, q1) == pytest.approx(q0, rel=1e-13)


class TestFieldAndPhotons:
    def test_zero_power(self):
        assert onaxis_field(0.0, 1.4e9) == 0.0

    def test_square_root_law(self):
        assert onaxis_field(4e-15, 1.4e9) == pytest.approx(2 * onaxis_field(1e-15, 1.4e9))

    def test_value(self):
        assert onaxis_field(1e-18, 1.4e9, cal=1.0) == pytest.approx(3.7416573867739413e-05)

    def test_negative_power(self):
        with pytest.raises(DomainError):
            onaxis_field(-1.0)

    def test_one_photon(self):
        u = constants.hbar * 2 * np.pi * 6e9
        assert photon_number(u, 6e9) == pytest.approx(1.0, rel=1e-14)

    def test_zero_energy(self):
        assert photon_number(0.0, 6e9) == 0.0

    def test_thousand_photons(self):
        assert photon_number(3.975642087564048e-21, 6e9) == pytest.approx(1000.0, rel=1e-6)


class TestExtractSensitivity:
    def test_equal_q_gives_zero(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9)
        flux = make_qdataset("CD2", 1e-5, 5e9, 6e9)
        c = extract_sensitivity(ref, flux)
        assert c.s[0] == 0.0 and c.s_prime[0] == 0.0

    def test_resistive_value(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9)
        flux = make_qdataset("CD2", 1e-5, 2.5e9, 6e9)
        assert extract_sensitivity(ref, flux).s[0] == pytest.approx(5.5e-3, rel=1e-12)

    def test_reactive_value(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9)
        flux = make_qdataset("CD2", 1e-5, 5e9, 6e9 - 1.0)
        assert extract_sensitivity(ref, flux).s_prime[0] == pytest.approx(9.166666666666667e-3, rel=1e-6)

    def test_uses_lowest_temperature_reference_frequency(self):
        ref = make_qdataset("CD1", 0.0, 5e9, np.array([6e9, 6e9 - 50]), temps=(0.01, 1.0), fields=(50, 50))
        flux = make_qdataset("CD2", 1e-5, 5e9, np.array([6e9 - 1, 6e9 - 51]), temps=(0.01, 1.0), fields=(50, 50))
        c = extract_sensitivity(ref, flux)
        np.testing.assert_allclose(c.s_prime, 2 * 275 / 1e-5 / 6e9, rtol=1e-6)

    def test_traceability(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9, temps=(0.01, 0.1, 0.2), fields=(50, 50, 50))
        flux = make_qdataset("CD2", 1e-5, 4e9, 6e9, temps=(0.103, 0.2), fields=(50, 50))
        c = extract_sensitivity(ref, flux)
        assert list(c.ref_index) == [1, 2]
        assert list(c.flux_index) == [0, 1]

    def test_temperature_tolerance(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9, temps=(0.01,))
        flux = make_qdataset("CD2", 1e-5, 4e9, 6e9, temps=(0.05,))
        with pytest.raises(NoMatchError):
            extract_sensitivity(ref, flux)
        assert len(extract_sensitivity(ref, flux, temp_tol=0.05)) == 1

    def test_field_bins_must_match(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9, fields=(50.0,))
        flux = make_qdataset("CD2", 1e-5, 4e9, 6e9, fields=(500.0,))
        with pytest.raises(NoMatchError):
            extract_sensitivity(ref, flux)

    def test_unresolved_trapped_field(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9)
        with pytest.raises(IllConditionedError):
            extract_sensitivity(ref, make_qdataset("CD2", 0.0, 4e9, 6e9))
        with pytest.raises(IllConditionedError):
            extract_sensitivity(ref, make_qdataset("CD2", 1e-6, 4e9, 6e9, b_err=2e-6))

    def test_error_scaling_with_q_errors(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9, q0_err=1e7)
        flux = make_qdataset("CD2", 1e-5, 2.5e9, 6e9, q0_err=1e7)
        ref2 = make_qdataset("CD1", 0.0, 5e9, 6e9, q0_err=2e7)
        flux2 = make_qdataset("CD2", 1e-5, 2.5e9, 6e9, q0_err=2e7)
        a = extract_sensitivity(ref, flux)
        b = extract_sensitivity(ref2, flux2)
        assert b.s_err[0] == pytest.approx(2 * a.s_err[0], rel=1e-12)

    def test_error_from_field_only(self):
        ref = make_qdataset("CD1", 0.0, 5e9, 6e9)
        flux = make_qdataset("CD2", 1e-5, 2.5e9, 6e9 - 1, b_err=1e-6)
        c = extract_sensitivity(ref, flux)
        assert c.s_err[0] / c.s[0] == pytest.approx(0.1, rel=1e-12)
        assert c.s_prime_err[0] / c.s_prime[0] == pytest.approx(0.1, rel=1e-12)

    def test_interpolated_reference(self):
        temps = np.linspace(0.01, 1.0, 12)
        spec = SynthSpec(temperatures=temps)
        ref, fluxes = generate_qdatasets(spec, q_ref_model=lambda t: 5e9 * (1 + t))
        # drop every other reference row: flux rows now fall between them
        keep = np.arange(0, len(ref), 2)
        sparse = QDataset(ref.cooldown_id, 0.0, 0.0, *(getattr(ref, c)[keep] for c in (
            "temperature", "field", "photon_n", "q0", "q0_err", "f0", "f0_err")))
        c = extract_sensitivity(sparse, fluxes[0], interpolate=True, temp_tol=0.1)
        assert len(c) == len(fluxes[0])
        model = sensitivity_model(c.temperature, None, DEFAULT_MATERIAL, spec.pinning[0])
        # 1/Q0_ref is not linear in T, so interpolation leaves a small bias
        np.testing.assert_allclose(c.s, model.s, rtol=0.05)

    def test_round_trip(self):
        spec = SynthSpec()
        ref, fluxes = generate_qdatasets(spec, q_ref_model=lambda t: 4e9 + 1e9 * t)
        for flux, pp in zip(fluxes, spec.pinning):
            c = extract_sensitivity(ref, flux)
            model = sensitivity_model(c.temperature, None, DEFAULT_MATERIAL, pp)
            np.testing.assert_allclose(c.s, model.s, rtol=1e-6)
            np.testing.assert_allclose(c.s_prime, model.s_prime, rtol=1e-6)


class TestFluxTrappingRatio:
    def test_cd4(self):
        ratio, sigma = flux_trapping_ratio((250.5, 13.3), (254.8, 13.7))
        assert round(ratio, 2) == 1.02
        assert sigma == pytest.approx(0.08, rel=0.15)

    def test_equal(self):
        assert flux_trapping_ratio((40.0, 1.0), (40.0, 1.0))[0] == 1.0

    def test_cd1_undefined(self):
        with pytest.raises(UndefinedRatioError):
            flux_trapping_ratio((0.0, 5.2), (-0.1, 6.4))


class TestAverageThermalized:
    def test_single(self):
        tr = generate_decay(1e9, 6e9, n_samples=50)
        avg = average_thermalized([tr])
        np.testing.assert_array_equal(avg.power, tr.power)
        assert avg.label["n_averaged"] == 1

    def test_identical(self):
        tr = generate_decay(1e9, 6e9, n_samples=50)
        avg = average_thermalized([tr] * 4)
        np.testing.assert_allclose(avg.power, tr.power, rtol=1e-15)

    def test_mean(self):
        tr = generate_decay(1e9, 6e9, n_samples=50)
        other = DecayTrace(tr.time, 3 * tr.power, tr.f0, tr.temperature)
        np.testing.assert_allclose(average_thermalized([tr, other]).power, 2 * tr.power, rtol=1e-15)

    def test_unthermalized_dropped(self):
        a = generate_decay(1e9, 6e9, n_samples=50, temperature=0.100)
        b = generate_decay(1e9, 6e9, n_samples=50, temperature=0.1005)
        c = DecayTrace(a.time, 10 * a.power, a.f0, 0.2)
        avg = average_thermalized([a, b, c])
        assert avg.label["n_averaged"] == 2
        np.testing.assert_allclose(avg.power, a.power, rtol=1e-12)

    def test_resampling(self):
        a = generate_decay(1e9, 6e9, n_samples=50)
        t2 = a.time * 0.5
        b = DecayTrace(t2, np.interp(t2, a.time, a.power), a.f0, a.temperature)
        avg = average_thermalized([a, b])
        assert avg.time.shape == a.time.shape

    def test_none_pass(self):
        tr = generate_decay(1e9, 6e9, n_samples=50)
        with pytest.raises(EmptyResultError):
            average_thermalized([tr], criterion=lambda _: False)
        with pytest.raises(EmptyResultError):
            average_thermalized([])


class TestReduceTraces:
    def test_known_q0(self):
        traces = [generate_decay(q, 6e9, temperature=0.01 * (k + 1)) for k, q in enumerate((1e9, 8e8))]
        ds = reduce_traces(traces, 1.4e9, cooldown_id="CDx", b_trap=5e-6)
        expected = {0.01: 3.5e9, 0.02: 1.0 / (1 / 8e8 - 1 / 1.4e9)}
        for t, q in zip(ds.temperature, ds.q0):
            assert q == pytest.approx(expected[round(t, 2)], rel=1e-3)
        assert ds.b_trap == 5e-6
        assert np.all(np.diff(ds.temperature) >= 0)

    def test_overcoupled_trace_excluded(self, caplog):
        good = generate_decay(1e9, 6e9, temperature=0.01)
        bad = generate_decay(2e9, 6e9, temperature=0.02)
        ds = reduce_traces([good, bad], 1.4e9)
        assert set(np.round(ds.temperature, 3)) == {0.01}
        assert "Q_L >= Q1" in caplog.text

    def test_all_excluded(self):
        with pytest.raises(EmptyResultError):
            reduce_traces([generate_decay(2e9, 6e9)], 1.4e9)


def test_field_bins():
    assert field_bin([50.0, 99.0, 100.0, 0.0], 1).tolist()[:3] == [1, 1, 2]
    assert field_bin([50.0], 4)[0] == 6
