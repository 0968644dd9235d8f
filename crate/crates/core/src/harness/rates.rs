use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log ε ≈ slope·(log W − t·log|log ε|) + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub log_power: f64,
}

/// Least-squares rate of `(work, error)` pairs, optionally with `|log ε|^t` divided out of the work.
pub fn fit_rate(points: &[(f64, f64)], log_power: Option<f64>) -> Result<RateFit> {
    let t = log_power.unwrap_or(0.0);
    let mut works: Vec<f64> = points.iter().map(|p| p.0).collect();
    works.sort_by(f64::total_cmp);
    works.dedup();
    if works.len() < 3 {
        return Err(Error::Precondition("rate fit needs at least 3 distinct work values".into()));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(w, e) in points {
        if !(w > 0.0 && e > 0.0 && w.is_finite() && e.is_finite()) {
            return Err(Error::Domain(format!("cannot fit work {w}, error {e}")));
        }
        let le = e.ln();
        let mut x = w.ln();
        if t != 0.0 {
            if e >= 1.0 {
                return Err(Error::Domain(format!("log correction needs error below 1, got {e}")));
            }
            x -= t * (-le).ln();
        }
        xs.push(x);
        ys.push(le);
    }
    let (slope, intercept) = least_squares_line(&xs, &ys);
    Ok(RateFit {
        slope,
        intercept,
        log_power: t,
    })
}

fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Points not dominated in both work and error, by increasing work.
pub fn lower_envelope(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1.is_finite()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for p in sorted {
        if out.last().map_or(true, |q| p.1 < q.1) {
            out.push(p);
        }
    }
    out
}

/// Smallest work among points whose error is at most `target`.
pub fn work_to_reach(points: &[(f64, f64)], target: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.1 <= target)
        .map(|p| p.0)
        .min_by(f64::total_cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let f = fit_rate(&[(1.0, 1.0), (10.0, 0.1), (100.0, 0.01)], None).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        let pts: Vec<(f64, f64)> = (0..5).map(|i| {
            let w = 10f64.powi(i + 1);
            (w, w.powf(-0.75))
        }).collect();
        assert!((fit_rate(&pts, None).unwrap().slope + 0.75).abs() < 1e-12);
        assert!(fit_rate(&pts[..2], None).is_err());
        let dup = [(1.0, 1.0), (1.0, 0.5), (2.0, 0.2)];
        assert!(fit_rate(&dup, None).is_err());
    }

    #[test]
    fn log_power_divided_out() {
        // W = ε^{-1}|log ε| exactly.
        let pts: Vec<(f64, f64)> = (1..6).map(|i| {
            let e = 10f64.powi(-i);
            (-e.ln() / e, e)
        }).collect();
        assert!((fit_rate(&pts, Some(1.0)).unwrap().slope + 1.0).abs() < 1e-12);
        assert!(fit_rate(&pts, None).unwrap().slope > -1.0);
        assert!(fit_rate(&[(1.0, 2.0), (2.0, 0.5), (3.0, 0.1)], Some(1.0)).is_err());
    }

    #[test]
    fn envelope_of_crossing_curves() {
        let a = [(1.0, 1.0), (2.0, 0.5), (4.0, 0.4)];
        let b = [(1.5, 0.9), (3.0, 0.2), (6.0, 0.05)];
        let all: Vec<_> = a.iter().chain(&b).copied().collect();
        assert_eq!(lower_envelope(&all), vec![(1.0, 1.0), (1.5, 0.9), (2.0, 0.5), (3.0, 0.2), (6.0, 0.05)]);
        assert_eq!(work_to_reach(&all, 0.45), Some(3.0));
        assert_eq!(work_to_reach(&all, 0.01), None);
    }
}
