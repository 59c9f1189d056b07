//! Two-tailed Student-t p-values from the closed-form finite series for
//! integer degrees of freedom (no incomplete beta involved).

use std::f64::consts::PI;

/// P(|T| > t) with `df` degrees of freedom.
pub fn two_tailed_p(t: f64, df: u64) -> f64 {
    assert!(df >= 1);
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    let within = if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = 1.0;
            sum = 1.0;
            let mut k = 2;
            while k + 1 < df {
                term *= c2 * k as f64 / (k + 1) as f64;
                sum += term;
                k += 2;
            }
        }
        2.0 / PI * (theta + s * c * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while k + 1 < df {
            term *= c2 * k as f64 / (k + 1) as f64;
            sum += term;
            k += 2;
        }
        s * sum
    };
    (1.0 - within).clamp(0.0, 1.0)
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// p for a Pearson r over n observations.
pub fn p_for_r(r: f64, n: u64) -> f64 {
    let df = n - 2;
    let t = r * (df as f64 / (1.0 - r * r)).sqrt();
    two_tailed_p(t, df)
}
