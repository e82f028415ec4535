//! Built-in and file-backed sources for the renewable-generation and
//! grid-price traces.
//!
//! Trace files are plain text, one value per slot per line; renewable first
//! column convention is a single value per line in each file.

use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{ConfigError, FieldError};
use crate::num::{c, Real};
use crate::server_policy::EnergyTraces;

/// Shape of the built-in traces: a diurnal renewable sinusoid with uniform
/// noise and a two-level peak/off-peak price square wave.
#[derive(Debug, Clone, Serialize)]
pub struct TraceSpec<T: Real> {
    /// Peak grid price, currency/J.
    pub chi_peak: T,
    /// Off-peak grid price, currency/J.
    pub chi_offpeak: T,
    /// Diurnal period in slots.
    pub period_slots: usize,
    /// Peak-price window `[start, end)` within each period.
    pub peak_start: usize,
    pub peak_end: usize,
    /// Uniform noise amplitude as a fraction of the renewable peak.
    pub noise: T,
    /// Optional file overrides (one value per line).
    pub renewable_file: Option<String>,
    pub price_file: Option<String>,
}

impl<T: Real> TraceSpec<T> {
    /// Renewable level before noise at slot `t`: a day/night sinusoid
    /// starting at the night trough.
    fn renewable_base(&self, t: usize, u_max: T) -> T {
        let phase = (t % self.period_slots) as f64 / self.period_slots as f64;
        let wave = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * phase - std::f64::consts::FRAC_PI_2).sin();
        u_max * c(wave)
    }

    fn price_at(&self, t: usize) -> T {
        let phase = t % self.period_slots;
        if phase >= self.peak_start && phase < self.peak_end {
            self.chi_peak
        } else {
            self.chi_offpeak
        }
    }

    /// Builds the traces for `slots` slots. Noise draws are consumed
    /// sequentially so a longer horizon extends the same prefix.
    pub fn build<R: Rng>(
        &self,
        u_max: T,
        slots: usize,
        rng: &mut R,
    ) -> Result<EnergyTraces<T>, ConfigError> {
        let renewable = match &self.renewable_file {
            Some(path) => load_trace_file(path, "renewable_file", slots)?,
            None => (0..slots)
                .map(|t| {
                    let noise: T = c::<T>(2.0 * rng.gen::<f64>() - 1.0) * self.noise * u_max;
                    (self.renewable_base(t, u_max) + noise).max(T::zero()).min(u_max)
                })
                .collect(),
        };
        let (price, price_max) = match &self.price_file {
            Some(path) => {
                let values: Vec<T> = load_trace_file(path, "price_file", slots)?;
                // The source maximum covers the whole file, not just the
                // horizon prefix, so theta stays prefix-stable.
                let all: Vec<T> = load_trace_file(path, "price_file", usize::MAX)?;
                let max = all.iter().cloned().fold(T::zero(), T::max);
                (values, max)
            }
            None => (
                (0..slots).map(|t| self.price_at(t)).collect(),
                self.chi_peak.max(self.chi_offpeak),
            ),
        };
        Ok(EnergyTraces {
            renewable,
            price,
            price_max,
        })
    }
}

/// Reads up to `max_values` newline-separated numbers from a trace file.
fn load_trace_file<T: Real>(
    path: &str,
    field: &str,
    max_values: usize,
) -> Result<Vec<T>, ConfigError> {
    let text = std::fs::read_to_string(Path::new(path))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if out.len() >= max_values {
            break;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let value: f64 = trimmed.parse().map_err(|_| {
            ConfigError::Invalid(vec![FieldError {
                path: field.to_string(),
                message: format!("{path}:{}: not a number: {trimmed:?}", lineno + 1),
            }])
        })?;
        out.push(c(value));
    }
    if max_values != usize::MAX && out.len() < max_values {
        return Err(ConfigError::Invalid(vec![FieldError {
            path: field.to_string(),
            message: format!(
                "{path}: trace has {} values but the horizon needs {max_values}",
                out.len()
            ),
        }]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> TraceSpec<f64> {
        TraceSpec {
            chi_peak: 6e-11,
            chi_offpeak: 1.5e-11,
            period_slots: 500,
            peak_start: 125,
            peak_end: 375,
            noise: 0.05,
            renewable_file: None,
            price_file: None,
        }
    }

    #[test]
    fn builtin_traces_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let traces = spec().build(2e-9, 2000, &mut rng).unwrap();
        assert_eq!(traces.len(), 2000);
        assert!(traces.renewable.iter().all(|u| (0.0..=2e-9).contains(u)));
        assert!(traces.price.iter().all(|p| *p > 0.0));
        assert_eq!(traces.price_max, 6e-11);
    }

    #[test]
    fn prefix_stability_of_noise_draws() {
        let mut rng1 = ChaCha8Rng::seed_from_u64(9);
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        let a = spec().build(2e-9, 100, &mut rng1).unwrap();
        let b = spec().build(2e-9, 300, &mut rng2).unwrap();
        assert_eq!(&a.renewable[..], &b.renewable[..100]);
        assert_eq!(&a.price[..], &b.price[..100]);
    }

    #[test]
    fn file_traces_round_trip() {
        let dir = std::env::temp_dir().join("pado-trace-test");
        std::fs::create_dir_all(&dir).unwrap();
        let upath = dir.join("u.txt");
        let cpath = dir.join("chi.txt");
        std::fs::write(&upath, "1e-9\n2e-9\n1.5e-9\n").unwrap();
        std::fs::write(&cpath, "# prices\n1e-11\n9e-11\n2e-11\n").unwrap();
        let mut s = spec();
        s.renewable_file = Some(upath.to_string_lossy().into_owned());
        s.price_file = Some(cpath.to_string_lossy().into_owned());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let traces = s.build(2e-9, 2, &mut rng).unwrap();
        assert_eq!(traces.renewable, vec![1e-9, 2e-9]);
        assert_eq!(traces.price, vec![1e-11, 9e-11]);
        // price_max scans the whole file, not just the horizon.
        assert_eq!(traces.price_max, 9e-11);
    }

    #[test]
    fn short_file_is_a_config_error() {
        let dir = std::env::temp_dir().join("pado-trace-test-short");
        std::fs::create_dir_all(&dir).unwrap();
        let upath = dir.join("u.txt");
        std::fs::write(&upath, "1e-9\n").unwrap();
        let mut s = spec();
        s.renewable_file = Some(upath.to_string_lossy().into_owned());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(s.build(2e-9, 10, &mut rng).is_err());
    }
}
