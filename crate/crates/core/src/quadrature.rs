//! Small quadrature helpers shared by the mollifier and the experiment
//! harness.

use crate::error::{invalid, Result};
use crate::real::Real;

/// Composite Simpson rule for `f` on `[lo, hi]` with `intervals` panels.
/// `intervals` must be even and positive.
pub fn composite_simpson<S: Real>(
    lo: S,
    hi: S,
    intervals: usize,
    mut f: impl FnMut(S) -> S,
) -> Result<S> {
    if intervals == 0 || intervals % 2 != 0 {
        return Err(invalid(format!(
            "Simpson rule needs a positive even panel count, got {intervals}"
        )));
    }
    if hi < lo {
        return Err(invalid("Simpson rule needs hi >= lo"));
    }
    let n = S::of_usize(intervals);
    let h = (hi - lo) / n;
    let mut acc = f(lo) + f(hi);
    for i in 1..intervals {
        let x = lo + h * S::of_usize(i);
        let w = if i % 2 == 1 { S::of(4.0) } else { S::of(2.0) };
        acc += w * f(x);
    }
    Ok(acc * h / S::of(3.0))
}

/// Composite trapezoid rule over uniformly spaced samples with spacing `h`.
pub fn trapezoid_uniform<S: Real>(samples: &[S], h: S) -> Result<S> {
    if samples.len() < 2 {
        return Err(invalid("trapezoid rule needs at least two samples"));
    }
    let mut acc = (samples[0] + samples[samples.len() - 1]) / S::of(2.0);
    for v in &samples[1..samples.len() - 1] {
        acc += *v;
    }
    Ok(acc * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = composite_simpson(0.0_f64, 2.0, 8, |x| x * x * x - x).unwrap();
        assert!((v - (4.0 - 2.0)).abs() < 1e-14, "got {v}");
    }

    #[test]
    fn simpson_rejects_odd_panel_counts() {
        assert!(composite_simpson(0.0_f64, 1.0, 3, |x| x).is_err());
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let samples: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let v = trapezoid_uniform(&samples, 0.1).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }
}
