//! Pulse generator, emission falloff, repellence and habituation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, PestSpecies};
use crate::geometry::Point2;

/// Astable pulse-generator components. The capacitor is the tuning element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorConfig {
    pub r1_ohm: f64,
    pub r2_ohm: f64,
    pub capacitance_f: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            r1_ohm: 10_000.0,
            r2_ohm: 33_000.0,
            capacitance_f: 470e-12,
        }
    }
}

/// Output frequency of the astable timer, `1.44 / ((R1 + 2·R2)·C)`.
pub fn oscillator_frequency(cfg: &OscillatorConfig) -> Result<f64> {
    for (key, v) in [
        ("oscillator.r1_ohm", cfg.r1_ohm),
        ("oscillator.r2_ohm", cfg.r2_ohm),
        ("oscillator.capacitance_f", cfg.capacitance_f),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(key, format!("must be positive, got {v}")));
        }
    }
    Ok(1.44 / ((cfg.r1_ohm + 2.0 * cfg.r2_ohm) * cfg.capacitance_f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpec {
    pub acoustic_power_w: f64,
    pub frequency_hz: f64,
    pub rf_enabled: bool,
    pub effective_range_m: f64,
}

impl EmitterSpec {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("emitter.acoustic_power_w", self.acoustic_power_w),
            ("emitter.frequency_hz", self.frequency_hz),
            ("emitter.effective_range_m", self.effective_range_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Free-field inverse-square intensity in W/m², zero past the effective range.
pub fn intensity_at(em: &EmitterSpec, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::SingularDistance);
    }
    Ok(intensity_unchecked(em, distance_m))
}

#[inline]
fn intensity_unchecked(em: &EmitterSpec, distance_m: f64) -> f64 {
    if distance_m > em.effective_range_m {
        0.0
    } else {
        em.acoustic_power_w / (4.0 * PI * distance_m * distance_m)
    }
}

/// Repellence constants: `k` scales the removal hazard and `i_ref` is the
/// intensity at which the response saturates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub k: f64,
    pub i_ref: f64,
}

/// Integrated removal hazard over one step of `dt_s`. The step's removal
/// probability is `1 - exp(-hazard)`.
pub fn repellence_hazard(
    sp: &PestSpecies,
    intensity: f64,
    freq_hz: f64,
    habituation: f64,
    rf_on: bool,
    dt_s: f64,
    cal: &Calibration,
) -> f64 {
    if intensity <= 0.0 || !sp.in_band(freq_hz) {
        return 0.0;
    }
    let gain = if rf_on && sp.rf_susceptible {
        1.0
    } else {
        1.0 - habituation
    };
    cal.k * sp.base_susceptibility * (intensity / cal.i_ref).min(1.0) * gain * dt_s
}

pub fn repellence_probability(
    sp: &PestSpecies,
    intensity: f64,
    freq_hz: f64,
    habituation: f64,
    rf_on: bool,
    dt_s: f64,
    cal: &Calibration,
) -> f64 {
    let h = repellence_hazard(sp, intensity, freq_hz, habituation, rf_on, dt_s, cal);
    (-(-h).exp_m1()).clamp(0.0, 1.0)
}

/// Linear habituation: full habituation after `sp.habituation_days` of exposure.
pub fn habituate(h: f64, exposed_days: f64, sp: &PestSpecies) -> f64 {
    (h + exposed_days / sp.habituation_days).min(1.0)
}

/// Accumulated acoustic dose (W·s/m²) per field cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureField {
    nx: usize,
    ny: usize,
    cell_size_m: f64,
    dose: Vec<f64>,
}

impl ExposureField {
    pub fn new(field: &FieldSpec) -> Self {
        Self {
            nx: field.nx(),
            ny: field.ny(),
            cell_size_m: field.cell_size_m,
            dose: vec![0.0; field.cell_count()],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dose(&self, i: usize, j: usize) -> f64 {
        self.dose[j * self.nx + i]
    }

    pub fn max_dose(&self) -> f64 {
        self.dose.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_dose(&self) -> f64 {
        self.dose.iter().sum()
    }

    /// Adds another field's dose cell by cell. Both must share a grid.
    pub fn add(&mut self, other: &ExposureField) {
        assert_eq!((self.nx, self.ny), (other.nx, other.ny), "grid mismatch");
        for (a, b) in self.dose.iter_mut().zip(&other.dose) {
            *a += b;
        }
    }

    /// Adds `intensity · dt_s` to every cell whose center is within range of
    /// the emitter. Distances are clamped to half a cell.
    pub fn accumulate(&mut self, agent_xy: Point2, em: &EmitterSpec, dt_s: f64) {
        if dt_s <= 0.0 {
            return;
        }
        let cs = self.cell_size_m;
        let range = em.effective_range_m;
        let lo = |c: f64| ((c - range) / cs - 0.5).floor().max(0.0) as usize;
        let hi = |c: f64, n: usize| (((c + range) / cs - 0.5).ceil().max(0.0) as usize).min(n - 1);
        let (i0, i1) = (lo(agent_xy.x), hi(agent_xy.x, self.nx));
        let (j0, j1) = (lo(agent_xy.y), hi(agent_xy.y, self.ny));
        let range_sq = range * range;
        let min_d = 0.5 * cs;
        for j in j0..=j1 {
            let cy = (j as f64 + 0.5) * cs;
            let dy = cy - agent_xy.y;
            let row = &mut self.dose[j * self.nx..(j + 1) * self.nx];
            for (i, cell) in row.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                let dx = (i as f64 + 0.5) * cs - agent_xy.x;
                let d_sq = dx * dx + dy * dy;
                if d_sq <= range_sq {
                    *cell += intensity_unchecked(em, d_sq.sqrt().max(min_d)) * dt_s;
                }
            }
        }
    }
}

/// Free function form of [`ExposureField::accumulate`].
pub fn accumulate_exposure(ef: &mut ExposureField, agent_xy: Point2, em: &EmitterSpec, dt_s: f64) {
    ef.accumulate(agent_xy, em, dt_s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_field, FieldSection};
    use proptest::prelude::*;

    fn emitter(power: f64) -> EmitterSpec {
        EmitterSpec {
            acoustic_power_w: power,
            frequency_hz: 40_000.0,
            rf_enabled: true,
            effective_range_m: 15.0,
        }
    }

    const CAL: Calibration = Calibration { k: 0.2, i_ref: 0.01 };

    #[test]
    fn oscillator_closed_form() {
        // 1.44 / ((10e3 + 66e3) · 470e-12) and 1.44 / (21e3 · 10e-9), by hand.
        let f = oscillator_frequency(&OscillatorConfig::default()).unwrap();
        assert!((f - 40_313.549).abs() < 1e-2, "{f}");
        let f2 = oscillator_frequency(&OscillatorConfig {
            r1_ohm: 1_000.0,
            r2_ohm: 10_000.0,
            capacitance_f: 10e-9,
        })
        .unwrap();
        assert!((f2 - 6_857.142_857).abs() < 1e-5, "{f2}");
    }

    #[test]
    fn doubling_capacitance_halves_frequency() {
        let base = OscillatorConfig::default();
        let doubled = OscillatorConfig {
            capacitance_f: 2.0 * base.capacitance_f,
            ..base
        };
        let f = oscillator_frequency(&base).unwrap();
        assert_eq!(oscillator_frequency(&doubled).unwrap(), f / 2.0);
    }

    #[test]
    fn oscillator_rejects_non_positive() {
        let cfg = OscillatorConfig {
            r2_ohm: 0.0,
            ..OscillatorConfig::default()
        };
        assert!(matches!(
            oscillator_frequency(&cfg),
            Err(Error::Config { ref key, .. }) if key == "oscillator.r2_ohm"
        ));
    }

    #[test]
    fn intensity_examples() {
        let em = emitter(4.0 * PI);
        assert!((intensity_at(&em, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(intensity_at(&em, 16.0).unwrap(), 0.0);
        assert!(intensity_at(&em, 15.0).unwrap() > 0.0);
        assert!(matches!(intensity_at(&em, 0.0), Err(Error::SingularDistance)));
    }

    #[test]
    fn repellence_edge_cases() {
        let sp = PestSpecies::default();
        assert_eq!(repellence_probability(&sp, 0.0, 40e3, 0.0, false, 0.5, &CAL), 0.0);
        assert_eq!(repellence_probability(&sp, 1.0, 40e3, 1.0, false, 0.5, &CAL), 0.0);
        let fresh = repellence_probability(&sp, 1.0, 40e3, 0.0, false, 0.5, &CAL);
        assert!(fresh > 0.0);
        assert_eq!(repellence_probability(&sp, 1.0, 40e3, 1.0, true, 0.5, &CAL), fresh);
        // out of band
        assert_eq!(repellence_probability(&sp, 1.0, 10e3, 0.0, true, 0.5, &CAL), 0.0);
        let deaf = PestSpecies {
            rf_susceptible: false,
            ..sp
        };
        assert_eq!(repellence_probability(&deaf, 1.0, 40e3, 1.0, true, 0.5, &CAL), 0.0);
    }

    #[test]
    fn habituation_examples() {
        let sp = PestSpecies::default();
        assert_eq!(habituate(0.0, 10.0, &sp), 1.0);
        assert_eq!(habituate(0.0, 0.0, &sp), 0.0);
        assert!((habituate(0.5, 2.0, &sp) - 0.7).abs() < 1e-15);
        assert_eq!(habituate(0.9, 5.0, &sp), 1.0);
    }

    #[test]
    fn exposure_linearity_and_falloff() {
        let field = build_field(&FieldSection::default()).unwrap();
        let em = emitter(1.0);
        let agent = Point2::new(10.25, 10.25);

        let mut ef = ExposureField::new(&field);
        ef.accumulate(agent, &em, 0.0);
        assert_eq!(ef.total_dose(), 0.0);

        ef.accumulate(agent, &em, 0.5);
        let once = ef.clone();
        ef.accumulate(agent, &em, 0.5);
        for j in 0..field.ny() {
            for i in 0..field.nx() {
                assert!((ef.dose(i, j) - 2.0 * once.dose(i, j)).abs() <= 1e-15 * ef.dose(i, j));
            }
        }
        // cell centers at 2 m and 4 m east of the agent
        let near = once.dose(24, 20);
        let far = once.dose(28, 20);
        assert!((far - near / 4.0).abs() < 1e-15);
        // beyond 15 m nothing
        assert_eq!(once.dose(59, 59), 0.0);
    }

    proptest! {
        #[test]
        fn inverse_square_exact(power in 1e-3f64..1e3, d in 1e-3f64..7.5) {
            let em = emitter(power);
            let i1 = intensity_at(&em, d).unwrap();
            let i2 = intensity_at(&em, 2.0 * d).unwrap();
            prop_assert!(((i2 - i1 / 4.0) / (i1 / 4.0)).abs() <= 1e-12);
        }

        #[test]
        fn intensity_strictly_decreasing(d in 1e-3f64..14.0, step in 1e-3f64..1.0) {
            let em = emitter(1.0);
            prop_assert!(intensity_at(&em, d + step).unwrap() < intensity_at(&em, d).unwrap());
        }

        #[test]
        fn repellence_is_probability_and_monotone(
            intensity in 0.0f64..1.0,
            di in 0.0f64..1.0,
            h in 0.0f64..1.0,
            dh in 0.0f64..1.0,
            dt in 0.0f64..5.0,
            rf in any::<bool>(),
        ) {
            let sp = PestSpecies::default();
            let p = repellence_probability(&sp, intensity, 40e3, h, rf, dt, &CAL);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(repellence_probability(&sp, intensity + di, 40e3, h, rf, dt, &CAL) >= p);
            prop_assert!(repellence_probability(&sp, intensity, 40e3, h, rf, dt + 0.1, &CAL) >= p);
            let h2 = (h + dh).min(1.0);
            let p_h2 = repellence_probability(&sp, intensity, 40e3, h2, false, dt, &CAL);
            prop_assert!(p_h2 <= repellence_probability(&sp, intensity, 40e3, h, false, dt, &CAL));
            // rf-on and rf-susceptible ignores habituation exactly
            prop_assert_eq!(
                repellence_probability(&sp, intensity, 40e3, h, true, dt, &CAL),
                repellence_probability(&sp, intensity, 40e3, h2, true, dt, &CAL)
            );
        }

        #[test]
        fn oscillator_decreasing_in_each_component(
            r1 in 1e2f64..1e6, r2 in 1e2f64..1e6, c in 1e-12f64..1e-6, bump in 1.001f64..3.0
        ) {
            let base = OscillatorConfig { r1_ohm: r1, r2_ohm: r2, capacitance_f: c };
            let f = oscillator_frequency(&base).unwrap();
            for cfg in [
                OscillatorConfig { r1_ohm: r1 * bump, ..base },
                OscillatorConfig { r2_ohm: r2 * bump, ..base },
                OscillatorConfig { capacitance_f: c * bump, ..base },
            ] {
                prop_assert!(oscillator_frequency(&cfg).unwrap() < f);
            }
        }
    }
}
