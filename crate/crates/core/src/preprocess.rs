//! Subcarrier selection and Butterworth low-pass denoising.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::CsiTrace;
use crate::error::{Error, Result};

/// Amplitude waveform of one subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSeries {
    pub fs: u32,
    pub values: Vec<f64>,
    /// 0-based subcarrier the series was taken from.
    pub source_subcarrier: usize,
}

impl AmplitudeSeries {
    pub fn new(fs: u32, values: Vec<f64>, source_subcarrier: usize) -> Result<Self> {
        if fs == 0 {
            return Err(Error::invalid("fs", "must be positive"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("amplitude", "values must be finite"));
        }
        Ok(AmplitudeSeries {
            fs,
            values,
            source_subcarrier,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Low-pass Butterworth design parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub order: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            cutoff_hz: 7.5,
            order: 4,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, fs: u32) -> Result<()> {
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(Error::invalid("filter.order", "must be a positive even integer"));
        }
        let nyquist = f64::from(fs) / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::invalid(
                "filter.cutoff_hz",
                format!("{} Hz is outside (0, {nyquist}) Hz", self.cutoff_hz),
            ));
        }
        Ok(())
    }

    /// Ideal analog Butterworth magnitude `1/sqrt(1 + (f/fc)^(2N))`.
    pub fn analog_magnitude(&self, f: f64) -> f64 {
        1.0 / (1.0 + (f / self.cutoff_hz).powi(2 * self.order as i32)).sqrt()
    }

    /// Closed-form magnitude of the bilinear-transform design at `fs`:
    /// the analog response evaluated at the prewarped frequency.
    pub fn digital_magnitude(&self, fs: u32, f: f64) -> f64 {
        let fs = f64::from(fs);
        let ratio = (PI * f / fs).tan() / (PI * self.cutoff_hz / fs).tan();
        1.0 / (1.0 + ratio.powi(2 * self.order as i32)).sqrt()
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (1.0 + self.a[0] * z_inv + self.a[1] * z2)
    }
}

/// Cascade of biquads realizing a digital Butterworth low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthLowpass {
    pub sections: Vec<Biquad>,
    fs: u32,
}

impl ButterworthLowpass {
    /// Bilinear-transform design with cutoff prewarping. Each section pairs a
    /// conjugate analog pole pair with quality factor `1 / (2 cos θ_k)`.
    pub fn design(spec: &FilterSpec, fs: u32) -> Result<Self> {
        spec.validate(fs)?;
        let k = (PI * spec.cutoff_hz / f64::from(fs)).tan();
        let k2 = k * k;
        let n = spec.order;
        let sections = (0..n / 2)
            .map(|i| {
                let theta = PI * (2 * i + 1) as f64 / (2 * n) as f64;
                let q = 1.0 / (2.0 * theta.cos());
                let norm = 1.0 / (1.0 + k / q + k2);
                let b0 = k2 * norm;
                Biquad {
                    b: [b0, 2.0 * b0, b0],
                    a: [2.0 * (k2 - 1.0) * norm, (1.0 - k / q + k2) * norm],
                }
            })
            .collect();
        Ok(ButterworthLowpass { sections, fs })
    }

    /// Magnitude of the realized transfer function at `f` Hz.
    pub fn magnitude(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f / f64::from(self.fs);
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .product::<Complex64>()
            .norm()
    }

    /// Causal single pass. Section states start at the steady state of a
    /// constant pre-history equal to the first input sample.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        let Some(&first) = input.first() else {
            return out;
        };
        for s in &self.sections {
            let [b0, b1, b2] = s.b;
            let [a1, a2] = s.a;
            // DC gain of each section is 1, so every section sees `first` as pre-history.
            let mut z2 = (b2 - a2) * first;
            let mut z1 = (b1 - a1) * first + z2;
            for v in out.iter_mut() {
                let x = *v;
                let y = b0 * x + z1;
                z1 = b1 * x - a1 * y + z2;
                z2 = b2 * x - a2 * y;
                *v = y;
            }
        }
        out
    }
}

/// Low-pass filters `series`; output has the same length and source.
pub fn butterworth_lowpass(series: &AmplitudeSeries, spec: &FilterSpec) -> Result<AmplitudeSeries> {
    let filter = ButterworthLowpass::design(spec, series.fs)?;
    Ok(AmplitudeSeries {
        fs: series.fs,
        values: filter.apply(&series.values),
        source_subcarrier: series.source_subcarrier,
    })
}

/// `points` log-spaced rows of (frequency, analog magnitude, digital magnitude)
/// from 0.1 Hz up to just below Nyquist.
pub fn magnitude_response_table(spec: &FilterSpec, fs: u32, points: usize) -> Result<Vec<[f64; 3]>> {
    let filter = ButterworthLowpass::design(spec, fs)?;
    let lo = 0.1f64.ln();
    let hi = (0.999 * f64::from(fs) / 2.0).ln();
    Ok((0..points)
        .map(|i| {
            let frac = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.0 };
            let f = (lo + (hi - lo) * frac).exp();
            [f, spec.analog_magnitude(f), filter.magnitude(f)]
        })
        .collect())
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Amplitude variance of every subcarrier over the whole trace.
pub fn subcarrier_variances(trace: &CsiTrace) -> Vec<f64> {
    (0..trace.subcarriers())
        .map(|s| population_variance(&trace.amplitude(s)))
        .collect()
}

/// Picks the subcarrier whose amplitude varies most; ties go to the lowest index.
pub fn select_subcarrier(trace: &CsiTrace) -> Result<AmplitudeSeries> {
    if trace.is_empty() || trace.subcarriers() == 0 {
        return Err(Error::Degenerate("trace has no samples".into()));
    }
    if trace.samples.iter().flatten().all(|h| h.norm() == 0.0) {
        return Err(Error::Degenerate("all-zero trace has no informative subcarrier".into()));
    }
    let variances = subcarrier_variances(trace);
    let best = variances
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > variances[best] { i } else { best });
    AmplitudeSeries::new(trace.fs, trace.amplitude(best), best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sine(fs: u32, f: f64, secs: f64) -> Vec<f64> {
        let n = (f64::from(fs) * secs) as usize;
        (0..n).map(|i| (2.0 * PI * f * i as f64 / f64::from(fs)).sin()).collect()
    }

    /// Least-squares amplitude over whole periods after a settling time.
    fn steady_gain(y: &[f64], fs: u32, f: f64, settle: usize) -> f64 {
        let period = f64::from(fs) / f;
        let periods = ((y.len() - settle) as f64 / period).floor().max(1.0);
        let n = (periods * period).round() as usize;
        let (mut c, mut s) = (0.0, 0.0);
        for i in settle..settle + n {
            let ph = 2.0 * PI * f * i as f64 / f64::from(fs);
            c += y[i] * ph.cos();
            s += y[i] * ph.sin();
        }
        2.0 * (c * c + s * s).sqrt() / n as f64
    }

    fn series(values: Vec<f64>) -> AmplitudeSeries {
        AmplitudeSeries::new(1000, values, 0).unwrap()
    }

    #[test]
    fn constant_passes_unchanged() {
        let out = butterworth_lowpass(&series(vec![3.25; 500]), &FilterSpec::default()).unwrap();
        for v in out.values {
            assert_relative_eq!(v, 3.25, max_relative = 1e-12);
        }
    }

    #[test]
    fn cutoff_gain_is_half_power() {
        let x = sine(1000, 7.5, 4.0);
        let y = butterworth_lowpass(&series(x), &FilterSpec::default()).unwrap().values;
        let g = steady_gain(&y, 1000, 7.5, 2000);
        assert!((g - 0.707).abs() <= 0.01, "gain {g}");
    }

    #[test]
    fn sixty_hz_is_suppressed() {
        let x = sine(1000, 60.0, 3.0);
        let y = butterworth_lowpass(&series(x), &FilterSpec::default()).unwrap().values;
        let g = steady_gain(&y, 1000, 60.0, 2000);
        // analog bound (7.5/60)^4 = 2.44e-4; the prewarped design is slightly lower
        assert!(g <= 3e-4, "gain {g}");
        assert_relative_eq!(FilterSpec::default().analog_magnitude(60.0), 2.441e-4, max_relative = 1e-3);
    }

    #[test]
    fn realized_response_matches_closed_form() {
        let spec = FilterSpec { cutoff_hz: 12.0, order: 6 };
        let f = ButterworthLowpass::design(&spec, 1000).unwrap();
        for hz in [0.0, 1.0, 7.5, 12.0, 40.0, 200.0, 450.0] {
            assert_relative_eq!(f.magnitude(hz), spec.digital_magnitude(1000, hz), max_relative = 1e-9);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let s = series(vec![0.0; 10]);
        assert!(butterworth_lowpass(&s, &FilterSpec { cutoff_hz: 500.0, order: 4 }).is_err());
        assert!(butterworth_lowpass(&s, &FilterSpec { cutoff_hz: 7.5, order: 3 }).is_err());
        assert!(butterworth_lowpass(&s, &FilterSpec { cutoff_hz: 0.0, order: 4 }).is_err());
    }

    #[test]
    fn response_table_has_requested_points() {
        let t = magnitude_response_table(&FilterSpec::default(), 1000, 200).unwrap();
        assert_eq!(t.len(), 200);
        assert_relative_eq!(t[0][0], 0.1, max_relative = 1e-12);
        assert!(t.windows(2).all(|w| w[1][0] > w[0][0]));
    }

    fn trace_from(rows: Vec<Vec<f64>>) -> CsiTrace {
        CsiTrace::new(
            1000,
            rows.into_iter()
                .map(|r| r.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn selects_the_moving_subcarrier() {
        let mut rows = vec![vec![2.0; 400]; 30];
        rows[17] = (0..400).map(|i| 2.0 + (i as f64 * 0.05).sin()).collect();
        assert_eq!(select_subcarrier(&trace_from(rows)).unwrap().source_subcarrier, 17);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let wave: Vec<f64> = (0..400).map(|i| 2.0 + (i as f64 * 0.05).sin()).collect();
        let mut rows = vec![vec![2.0; 400]; 6];
        rows[2] = wave.clone();
        rows[4] = wave;
        assert_eq!(select_subcarrier(&trace_from(rows)).unwrap().source_subcarrier, 2);
    }

    #[test]
    fn all_zero_trace_rejected() {
        assert!(matches!(
            select_subcarrier(&trace_from(vec![vec![0.0; 50]; 3])),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn filter_is_linear(
            xs in proptest::collection::vec(-10.0f64..10.0, 64),
            ys in proptest::collection::vec(-10.0f64..10.0, 64),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let f = ButterworthLowpass::design(&FilterSpec::default(), 1000).unwrap();
            let mixed: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = f.apply(&mixed);
            let fx = f.apply(&xs);
            let fy = f.apply(&ys);
            let scale = lhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn selection_invariant_to_scaling(c in 0.01f64..100.0, seed in 0u64..1000) {
            let rows: Vec<Vec<f64>> = (0..8)
                .map(|s| (0..200).map(|i| 1.0 + ((i as u64 * 31 + s * 7 + seed) % 97) as f64 * (s as f64 + 1.0) / 97.0).collect())
                .collect();
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
            prop_assert_eq!(
                select_subcarrier(&trace_from(rows)).unwrap().source_subcarrier,
                select_subcarrier(&trace_from(scaled)).unwrap().source_subcarrier
            );
        }
    }
}
