use super::special::student_t_sf;
use super::{mean, variance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch's t-test of `mean(a) > mean(b)` (one-tailed, upper).
///
/// Returns `None` when either sample has fewer than 2 values or both
/// variances are zero.
pub fn welch_one_tailed_t(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a), variance(b));
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Some(TTest {
        t,
        df,
        p: student_t_sf(t, df),
    })
}

/// Paired t-test on `a - b`; `p` is two-sided.
pub fn paired_t(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let v = variance(&d);
    if v <= 0.0 {
        return None;
    }
    let t = mean(&d) / (v / n).sqrt();
    let df = n - 1.0;
    Some(TTest {
        t,
        df,
        p: (2.0 * student_t_sf(t.abs(), df)).min(1.0),
    })
}
