//! Gauss-Legendre rules and the node/weight container used for Gram matrices.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    x.iter().zip(&w).map(|(t, wi)| (a + h * (t + 1.0), h * wi)).collect()
}

/// Equispaced angles with equal weights summing to `2π`; exact for
/// trigonometric polynomials of degree below `m`.
pub fn periodic(m: usize) -> Vec<(f64, f64)> {
    let h = 2.0 * PI / m as f64;
    (0..m).map(|k| ((k as f64 + 0.5) * h, h)).collect()
}

/// Weighted point set in `C^n` approximating Lebesgue measure on a domain.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<C64>>,
    pub weights: Vec<f64>,
    pub descriptor: String,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |v| v.len())
    }

    pub fn integrate(&self, mut f: impl FnMut(&[C64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(z)).sum()
    }

    /// Writes `re_1,im_1,...,re_n,im_n,weight` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.dim();
        let mut header: Vec<String> = Vec::new();
        for j in 1..=n {
            header.push(format!("re{j}"));
            header.push(format!("im{j}"));
        }
        header.push("weight".into());
        writeln!(out, "{}", header.join(","))?;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let mut row: Vec<String> = Vec::with_capacity(2 * n + 1);
            for zj in z {
                row.push(format!("{:.17e}", zj.re));
                row.push(format!("{:.17e}", zj.im));
            }
            row.push(format!("{:.17e}", w));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = gauss_legendre_on(6, 0.0, 2.0);
        let s: f64 = rule.iter().map(|(x, w)| w * x.powi(11)).sum();
        assert_relative_eq!(s, 2f64.powi(12) / 12.0, max_relative = 1e-13);
    }

    #[test]
    fn high_order_weights_sum() {
        let (_, w) = gauss_legendre(200);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
        let (x, _) = gauss_legendre(201);
        assert!(x[100].abs() < 1e-15);
    }

    #[test]
    fn periodic_rule_is_exact_for_trig() {
        let rule = periodic(8);
        let s: f64 = rule.iter().map(|(t, w)| w * (3.0 * t).cos().powi(2)).sum();
        assert_relative_eq!(s, PI, epsilon = 1e-13);
    }
}
