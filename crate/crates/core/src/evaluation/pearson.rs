use crate::error::{Error, Result};

/// Largest |r| - 1 attributed to rounding and clamped away.
pub const OVERSHOOT_TOLERANCE: f64 = 1e-12;

/// Pearson's r in its single-pass sum form,
///
/// ```text
/// r = (N Σxy - Σx Σy) / sqrt((N Σx² - (Σx)²) (N Σy² - (Σy)²))
/// ```
///
/// evaluated on the series translated by their means. The formula is
/// translation invariant; without the shift, channels with a large offset
/// (gravity on an accelerometer axis) lose most significant digits to
/// cancellation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} samples", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pearson input".into()));
    }
    for (name, s) in [("x", x), ("y", y)] {
        if s.iter().all(|&v| v == s[0]) {
            return Err(Error::UndefinedCorrelation(format!("{name} is constant")));
        }
    }

    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (a - mx, b - my);
        sx += a;
        sy += b;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    if den.is_nan() || den <= 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    let r = num / den;
    if r.abs() > 1.0 + OVERSHOOT_TOLERANCE {
        return Err(Error::NonFinite(format!("pearson r = {r} outside [-1, 1]")));
    }
    Ok(r.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_and_inverse() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() <= 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn large_offset_keeps_precision() {
        let x: Vec<f64> = (0..50).map(|i| 9.81e6 + (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| v - 9.81e6).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0], &[2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }
}
