//! Fitting and summary statistics used by the studies.

use crate::error::{Error, Result};

/// Least-squares line `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("a line fit needs at least two paired samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `log e` against `log h`.
pub fn convergence_order(steps: &[f64], errors: &[f64]) -> Result<f64> {
    if steps.iter().chain(errors).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("convergence fit needs positive steps and errors".into()));
    }
    let lx: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(linear_fit(&lx, &ly)?.0)
}

/// Index range `[start, end)` of a step sweep used for order fitting.
///
/// Leading points with `ω_max·h > 0.5` do not resolve the fastest mode and
/// are excluded as pre-asymptotic. Trailing points whose error falls by less
/// than the first-order factor `h_prev/h` sit on the round-off plateau and
/// are excluded too.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitWindow {
    pub start: usize,
    pub end: usize,
}

impl FitWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

pub fn fit_window(steps: &[f64], errors: &[f64], omega_max: f64) -> Result<FitWindow> {
    if steps.len() != errors.len() {
        return Err(Error::Domain("steps and errors differ in length".into()));
    }
    if steps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("steps must be strictly decreasing".into()));
    }
    let n = steps.len();
    let mut start = 0;
    while start < n && omega_max * steps[start] > 0.5 {
        start += 1;
    }
    let mut end = n;
    while end > start + 1 {
        let i = end - 1;
        let floor = !(errors[i] > 0.0) || errors[i - 1] / errors[i] < steps[i - 1] / steps[i];
        if !floor {
            break;
        }
        end -= 1;
    }
    if end - start < 2 {
        return Ok(FitWindow { start: 0, end: n });
    }
    Ok(FitWindow { start, end })
}

/// Fluctuation and drift of a sampled energy history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStats {
    pub initial: f64,
    /// `max E − min E`.
    pub fluctuation: f64,
    /// Least-squares `dE/dt`.
    pub slope: f64,
    /// `|slope|·duration / fluctuation`.
    pub drift_ratio: f64,
    /// `E_end − E_0`.
    pub end_change: f64,
    pub monotone_decreasing: bool,
}

pub fn energy_stats(time: &[f64], energy: &[f64]) -> Result<EnergyStats> {
    let (slope, _) = linear_fit(time, energy)?;
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = energy.iter().copied().fold(f64::INFINITY, f64::min);
    let fluctuation = max - min;
    let duration = time[time.len() - 1] - time[0];
    Ok(EnergyStats {
        initial: energy[0],
        fluctuation,
        slope,
        drift_ratio: if fluctuation > 0.0 {
            slope.abs() * duration / fluctuation
        } else {
            0.0
        },
        end_change: energy[energy.len() - 1] - energy[0],
        monotone_decreasing: energy.windows(2).all(|w| w[1] < w[0]),
    })
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_order() {
        let h = [1e-2, 5e-3, 1e-3];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((convergence_order(&h, &e).unwrap() - 2.0).abs() < 1e-12);
        assert!(convergence_order(&h[..1], &e[..1]).is_err());
    }

    #[test]
    fn window_drops_unresolved_and_floor() {
        let h = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
        let e = [1e-1, 1e-6, 1e-8, 1e-10, 0.9e-10];
        let w = fit_window(&h, &e, 100.0).unwrap();
        assert_eq!((w.start, w.end), (1, 4));
        let w = fit_window(&h, &e, 1.0).unwrap();
        assert_eq!(w.start, 0);
    }

    #[test]
    fn energy_stats_of_line_and_wave() {
        let t: Vec<f64> = (0..101).map(|i| i as f64 * 0.1).collect();
        let line: Vec<f64> = t.iter().map(|x| 1.0 - 0.01 * x).collect();
        let s = energy_stats(&t, &line).unwrap();
        assert!((s.slope + 0.01).abs() < 1e-12);
        assert!(s.monotone_decreasing);
        assert!((s.drift_ratio - 1.0).abs() < 1e-9);
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!((m, sd), (2.0, 1.0));
    }
}
