"""Pulse-schedule compilation: precompensation, calibration, interchange."""

import numpy as np
import pytest

from starkshaper.errors import ConfigError, PrecompensationRangeError
from starkshaper.patterns import (
    AnnulusPattern,
    DisplacedGaussianPattern,
    EllipticalGaussianPattern,
)
from starkshaper.planner import (
    DeformationComponent,
    MirrorDeformation,
    PulseSchedule,
    PulseSegment,
    plan_parallel,
    plan_serial,
    schedule_from_json_dict,
    schedule_hash,
    schedule_to_json_dict,
    validate_schedule,
)
from starkshaper.specfun import J1_PEAK_VALUE, ZernikeIndex, bessel_j
from starkshaper.zernike import ZernikeExpansion, decompose

U0 = 2 * np.pi * 1.0e4
OMEGA = 2 * np.pi * 1.8e5
PERIOD = 2 * np.pi / OMEGA


def _expansion(pattern, n_max, m_max):
    return decompose(pattern, n_max=n_max, m_max=m_max)


class TestSerialStructure:
    def test_annulus_single_static_segment(self):
        pat = AnnulusPattern(amplitude=1.0)
        s = plan_serial(_expansion(pat, 24, 0), U0, OMEGA, pattern_peak=pat.peak_value())
        assert s.mode == "serial"
        assert len(s.segments) == 1
        assert s.segments[0].beatnotes == (0,)
        # static segment keeps the uncommensurated calibrated duration
        assert s.segments[0].duration_s == pytest.approx(25e-6, rel=1e-12)
        assert s.gate_time_s == pytest.approx(25e-6, rel=1e-12)
        assert s.segments[0].u_rad_s == pytest.approx(U0)

    def test_elliptical_six_even_segments(self):
        pat = EllipticalGaussianPattern(amplitude=0.5)
        s = plan_serial(_expansion(pat, 26, 10), U0, OMEGA, pattern_peak=pat.peak_value())
        assert len(s.segments) == 6
        assert [seg.beatnotes[0] for seg in s.segments] == [0, 2, 4, 6, 8, 10]
        for seg in s.segments:
            assert seg.duration_s == pytest.approx(18 * PERIOD, rel=1e-12)
        assert s.total_duration_s == pytest.approx(600e-6, rel=1e-9)

    def test_displaced_segment_count_reflects_exact_symmetry(self):
        # center angle is exactly pi/6: even m=3,9 and odd m=6 vanish,
        # leaving 16 of the generic 19 components for |m| <= 9
        pat = DisplacedGaussianPattern(amplitude=3.0)
        s = plan_serial(_expansion(pat, 40, 9), U0, OMEGA, pattern_peak=pat.peak_value())
        assert len(s.segments) == 16
        for seg in s.segments:
            assert seg.duration_s == pytest.approx(3 * PERIOD, rel=1e-12)
            assert seg.duration_s == pytest.approx(16.6667e-6, rel=1e-4)

    def test_segments_ordered_by_m_even_before_odd(self):
        pat = DisplacedGaussianPattern(amplitude=0.5)
        s = plan_serial(_expansion(pat, 20, 4), U0, OMEGA, pattern_peak=pat.peak_value())
        keys = []
        for seg in s.segments:
            comp = seg.deformation.components[0]
            keys.append((comp.m, 0 if comp.even is not None else 1))
        assert keys == sorted(keys)

    def test_dm_reset_accounted_in_wall_time(self):
        pat = EllipticalGaussianPattern(amplitude=0.5)
        s = plan_serial(
            _expansion(pat, 26, 10), U0, OMEGA,
            pattern_peak=pat.peak_value(), dm_reset_time_s=50e-6,
        )
        assert s.wall_time_s == pytest.approx(600e-6 + 5 * 50e-6, rel=1e-12)


class TestCalibrationIdentity:
    """The factor-of-2 anchor: a pure single-order pattern, serially
    compiled, must put the peak ion through exactly a pi rotation."""

    def test_static_arccos_identity(self):
        pat = AnnulusPattern(amplitude=1.0)
        exp = _expansion(pat, 24, 0)
        s = plan_serial(exp, U0, OMEGA, pattern_peak=pat.peak_value())
        seg = s.segments[0]
        comp = seg.deformation.components[0]
        rho = np.linspace(0, 1, 500)
        # cos(delta + psi) recovers A*P0 wherever the clip did not engage
        prof = exp.radial_profiles()
        target = np.clip(exp.amplitude * prof.even(0, rho), -1.0, 1.0)
        realized = np.cos(comp.even(rho) + seg.psi)
        np.testing.assert_allclose(realized, target, atol=1e-12)
        # peak ion phase: 2 * U * F * T = pi
        assert 2 * seg.u_rad_s * 1.0 * seg.duration_s == pytest.approx(np.pi, rel=1e-12)

    def test_rotating_precompensation_round_trip(self):
        pat = EllipticalGaussianPattern(amplitude=0.5)
        exp = _expansion(pat, 26, 10)
        s = plan_serial(exp, U0, OMEGA, pattern_peak=pat.peak_value())
        prof = exp.radial_profiles()
        rho = np.linspace(0, 1, 400)
        for seg in s.segments:
            comp = seg.deformation.components[0]
            if comp.m == 0:
                continue
            achieved = bessel_j(1, comp.even(rho))
            wanted = exp.amplitude * prof.even(comp.m, rho)
            np.testing.assert_allclose(achieved, wanted, atol=1e-10)

    def test_odd_component_round_trip(self):
        pat = DisplacedGaussianPattern(amplitude=3.0)
        exp = _expansion(pat, 30, 5)
        s = plan_serial(exp, U0, OMEGA, pattern_peak=pat.peak_value())
        prof = exp.radial_profiles()
        rho = np.linspace(0, 1, 400)
        odd_segments = [
            seg for seg in s.segments
            if seg.deformation.components[0].odd is not None
        ]
        assert odd_segments
        for seg in odd_segments:
            comp = seg.deformation.components[0]
            achieved = bessel_j(1, comp.odd(rho))
            wanted = exp.amplitude * prof.odd(comp.m, rho)
            np.testing.assert_allclose(achieved, wanted, atol=1e-10)


class TestCommensuration:
    def test_rotating_durations_are_integer_periods(self):
        pat = DisplacedGaussianPattern(amplitude=3.0)
        s = plan_serial(_expansion(pat, 40, 9), U0, OMEGA, pattern_peak=pat.peak_value())
        for seg in s.segments:
            rot = seg.duration_s / PERIOD
            assert abs(rot - round(rot)) < 1e-9

    def test_strength_rescaled_to_preserve_area(self):
        # awkward peak: T_base not an integer period count, so U shrinks
        pat = EllipticalGaussianPattern(amplitude=0.37)
        peak = pat.peak_value()
        s = plan_serial(_expansion(pat, 20, 8), U0, OMEGA, pattern_peak=peak)
        t_base = np.pi / (2 * U0 * peak)
        for seg in s.segments:
            assert seg.duration_s >= t_base - 1e-15
            assert seg.u_rad_s <= U0 * (1 + 1e-12)
            assert seg.u_rad_s * seg.duration_s == pytest.approx(U0 * t_base, rel=1e-12)

    def test_rotation_override(self):
        pat = EllipticalGaussianPattern(amplitude=0.5)
        s = plan_serial(
            _expansion(pat, 20, 8), U0, OMEGA,
            pattern_peak=pat.peak_value(), segment_rotations=25,
        )
        for seg in s.segments:
            assert seg.duration_s == pytest.approx(25 * PERIOD, rel=1e-12)


class TestParallel:
    def test_single_segment_full_comb(self):
        pat = EllipticalGaussianPattern(amplitude=0.4)
        s = plan_parallel(_expansion(pat, 26, 10), U0, OMEGA, pattern_peak=pat.peak_value())
        assert s.mode == "parallel"
        assert len(s.segments) == 1
        assert s.segments[0].beatnotes == (0, 2, 4, 6, 8, 10)
        assert s.segments[0].duration_s == pytest.approx(45 * PERIOD, rel=1e-12)
        assert s.target_u_rad_s == pytest.approx(0.5 * s.segments[0].u_rad_s, rel=1e-15)

    def test_gate_times_for_reference_amplitudes(self):
        for amp, rots in [(0.4, 45), (0.2, 90)]:
            pat = EllipticalGaussianPattern(amplitude=amp)
            s = plan_parallel(_expansion(pat, 26, 10), U0, OMEGA, pattern_peak=pat.peak_value())
            assert s.gate_time_s == pytest.approx(rots * PERIOD, rel=1e-12)
        pat = DisplacedGaussianPattern(amplitude=0.3)
        s = plan_parallel(_expansion(pat, 40, 9), U0, OMEGA, pattern_peak=pat.peak_value())
        assert s.gate_time_s == pytest.approx(60 * PERIOD, rel=1e-12)

    def test_m0_component_halved_others_unscaled(self):
        pat = DisplacedGaussianPattern(amplitude=0.3)
        exp = _expansion(pat, 20, 6)
        s = plan_parallel(exp, U0, OMEGA, pattern_peak=pat.peak_value())
        prof = exp.radial_profiles()
        rho = np.linspace(0, 1, 300)
        for comp in s.segments[0].deformation.components:
            if comp.m == 0:
                np.testing.assert_allclose(
                    comp.even(rho), 0.5 * exp.amplitude * prof.even(0, rho), atol=1e-14
                )
            else:
                if comp.even is not None:
                    np.testing.assert_allclose(
                        comp.even(rho), exp.amplitude * prof.even(comp.m, rho), atol=1e-14
                    )
                if comp.odd is not None:
                    np.testing.assert_allclose(
                        comp.odd(rho), exp.amplitude * prof.odd(comp.m, rho), atol=1e-14
                    )

    def test_amplitude_warning_above_linear_regime(self):
        pat = EllipticalGaussianPattern(amplitude=0.4)
        s = plan_parallel(_expansion(pat, 20, 8), U0, OMEGA, pattern_peak=pat.peak_value())
        rep = validate_schedule(s)
        assert rep.ok  # warning, not a structural failure
        assert any("linear regime" in w for w in rep.warnings)


class TestRangeErrors:
    def test_arccos_domain_violation(self):
        # amplitude 1.2 pushes |A*P0| well past 1
        pat = AnnulusPattern(amplitude=1.2)
        with pytest.raises(PrecompensationRangeError, match="arccos"):
            plan_serial(_expansion(pat, 24, 0), U0, OMEGA, pattern_peak=pat.peak_value())

    def test_j1_range_violation_names_order(self):
        # huge amplitude drives A*P^m beyond the J1 peak
        pat = EllipticalGaussianPattern(amplitude=3.0)
        with pytest.raises(PrecompensationRangeError, match="m="):
            plan_serial(_expansion(pat, 26, 10), U0, OMEGA, pattern_peak=pat.peak_value())

    def test_slight_arccos_overshoot_is_clipped(self):
        # truncation ripple pushes |A*P0| a hair over 1 for A=1; the planner
        # must clip, not fail
        pat = AnnulusPattern(amplitude=1.0)
        s = plan_serial(_expansion(pat, 54, 0), U0, OMEGA, pattern_peak=pat.peak_value())
        comp = s.segments[0].deformation.components[0]
        vals = comp.even(np.linspace(0, 1, 1000))
        assert np.all(np.isfinite(vals))


class TestScheduleInterchange:
    def test_json_round_trip_preserves_segments(self):
        pat = DisplacedGaussianPattern(amplitude=3.0)
        s = plan_serial(_expansion(pat, 30, 5), U0, OMEGA, pattern_peak=pat.peak_value())
        clone = schedule_from_json_dict(schedule_to_json_dict(s))
        assert clone.mode == s.mode
        assert len(clone.segments) == len(s.segments)
        assert clone.gate_time_s == s.gate_time_s
        rho = np.linspace(0, 1, 512)  # export grid: interpolation is exact here
        for a, b in zip(s.segments, clone.segments):
            assert a.beatnotes == b.beatnotes
            assert a.duration_s == b.duration_s
            ca, cb = a.deformation.components[0], b.deformation.components[0]
            fa = ca.even if ca.even is not None else ca.odd
            fb = cb.even if cb.even is not None else cb.odd
            np.testing.assert_allclose(fb(rho), fa(rho), atol=1e-15)

    def test_hash_is_deterministic_and_content_sensitive(self):
        pat = EllipticalGaussianPattern(amplitude=0.5)
        exp = _expansion(pat, 20, 8)
        s1 = plan_serial(exp, U0, OMEGA, pattern_peak=pat.peak_value())
        s2 = plan_serial(exp, U0, OMEGA, pattern_peak=pat.peak_value())
        assert schedule_hash(s1) == schedule_hash(s2)
        s3 = plan_serial(exp, U0, OMEGA, psi=-1.2, pattern_peak=pat.peak_value())
        assert schedule_hash(s3) != schedule_hash(s1)

    def test_calibration_invariant_under_strength_rescale(self):
        # u_seg * T_seg is pinned by the pi calibration and T is quantized
        # to rotation periods, so a small U change yields the same program
        pat = EllipticalGaussianPattern(amplitude=0.5)
        exp = _expansion(pat, 20, 8)
        s1 = plan_serial(exp, U0, OMEGA, pattern_peak=pat.peak_value())
        s3 = plan_serial(exp, U0 * 1.01, OMEGA, pattern_peak=pat.peak_value())
        assert schedule_hash(s3) == schedule_hash(s1)

    def test_malformed_json_rejected(self):
        with pytest.raises(ConfigError):
            schedule_from_json_dict({"mode": "serial", "segments": []})


class TestStructuralValidation:
    def test_component_requires_a_part(self):
        with pytest.raises(ConfigError):
            DeformationComponent(2)

    def test_m0_cannot_carry_sin(self):
        with pytest.raises(ConfigError):
            DeformationComponent(0, even=lambda r: r, odd=lambda r: r)

    def test_duplicate_orders_rejected(self):
        with pytest.raises(ConfigError):
            MirrorDeformation(
                (DeformationComponent(1, even=lambda r: r),
                 DeformationComponent(1, odd=lambda r: r))
            )

    def test_parallel_multi_segment_rejected(self):
        seg = PulseSegment(
            deformation=MirrorDeformation((DeformationComponent(0, even=lambda r: r),)),
            beatnotes=(0,), duration_s=1e-5, u_rad_s=1e4, psi=-np.pi / 2,
        )
        with pytest.raises(ConfigError):
            PulseSchedule(
                mode="parallel", omega_rad_s=OMEGA, segments=(seg, seg),
                target_u_rad_s=1e4, gate_time_s=2e-5, amplitude=0.1,
            )

    def test_validation_flags_noncommensurate_rotating_segment(self):
        seg = PulseSegment(
            deformation=MirrorDeformation((DeformationComponent(2, even=lambda r: 0.1 * r),)),
            beatnotes=(2,), duration_s=1.37 * PERIOD, u_rad_s=1e4, psi=-np.pi / 2,
        )
        s = PulseSchedule(
            mode="serial", omega_rad_s=OMEGA, segments=(seg,),
            target_u_rad_s=1e4, gate_time_s=seg.duration_s, amplitude=0.1,
        )
        rep = validate_schedule(s)
        assert not rep.ok
        assert any("commensurate" in w for w in rep.warnings)

    def test_empty_expansion_refused(self):
        exp = ZernikeExpansion(
            amplitude=1.0, n_max=4, m_max=2, coefficients={ZernikeIndex(2, 0): 0.0}
        )
        with pytest.raises(ConfigError):
            plan_serial(exp, U0, OMEGA, pattern_peak=1.0)
