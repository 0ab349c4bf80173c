//! Closed-form metrics on model domains and the biholomorphisms used to
//! check invariance.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::domain::{DomainKind, DomainSpec, Point};
use crate::error::{Error, Result};
use crate::linalg::{c, czero, max_abs, CMat};
use crate::metrics::{Flavor, MetricDerivatives, MetricTensor};

/// Holomorphic map with Jacobian `F'[i][j] = ∂F_i/∂z_j`.
pub trait Biholomorphism {
    fn dim(&self) -> usize;
    fn apply(&self, z: &[C64]) -> Result<Point>;
    fn jacobian(&self, z: &[C64]) -> Result<CMat>;
}

#[derive(Debug, Clone)]
pub struct Identity(pub usize);

impl Biholomorphism for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, z: &[C64]) -> Result<Point> {
        Ok(z.to_vec())
    }

    fn jacobian(&self, _z: &[C64]) -> Result<CMat> {
        Ok(CMat::identity(self.0, self.0))
    }
}

/// Disc automorphism `z ↦ (z - a)/(1 - ā z)`.
#[derive(Debug, Clone)]
pub struct DiscMobius {
    pub a: C64,
}

impl Biholomorphism for DiscMobius {
    fn dim(&self) -> usize {
        1
    }

    fn apply(&self, z: &[C64]) -> Result<Point> {
        Ok(vec![(z[0] - self.a) / (c(1.0) - self.a.conj() * z[0])])
    }

    fn jacobian(&self, z: &[C64]) -> Result<CMat> {
        let d = c(1.0) - self.a.conj() * z[0];
        Ok(CMat::from_element(1, 1, c(1.0 - self.a.norm_sqr()) / (d * d)))
    }
}

/// Linear map `z ↦ U z`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub u: CMat,
}

impl Biholomorphism for LinearMap {
    fn dim(&self) -> usize {
        self.u.nrows()
    }

    fn apply(&self, z: &[C64]) -> Result<Point> {
        Ok((0..self.u.nrows()).map(|i| (0..z.len()).map(|j| self.u[(i, j)] * z[j]).sum()).collect())
    }

    fn jacobian(&self, _z: &[C64]) -> Result<CMat> {
        Ok(self.u.clone())
    }
}

/// `F'(z)^T G conj(F'(z))`.
pub fn pullback(jac: &CMat, g_target: &CMat) -> CMat {
    jac.transpose() * g_target * jac.map(|x| x.conj())
}

/// `max |G_source(z) - F'(z)^T G_target(F(z)) conj(F'(z))|`.
pub fn transformation_residual(
    f: &dyn Biholomorphism,
    z: &[C64],
    g_source: &MetricTensor,
    g_target: &MetricTensor,
) -> Result<f64> {
    let jac = f.jacobian(z)?;
    Ok(max_abs(&(&g_source.g - pullback(&jac, &g_target.g))))
}

/// Truncated Taylor series `Σ f_k s^k` in one real variable.
#[derive(Debug, Clone)]
pub struct TaylorSeries(pub Vec<f64>);

impl TaylorSeries {
    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    fn truncated(&self, order: usize) -> Self {
        Self(self.0[..=order.min(self.order())].to_vec())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let n = self.order().min(o.order());
        Self((0..=n).map(|k| (0..=k).map(|i| self.0[i] * o.0[k - i]).sum()).collect())
    }

    pub fn recip(&self) -> Self {
        let n = self.order();
        let mut r = vec![0.0; n + 1];
        r[0] = 1.0 / self.0[0];
        for k in 1..=n {
            let s: f64 = (1..=k).map(|i| self.0[i] * r[k - i]).sum();
            r[k] = -s / self.0[0];
        }
        Self(r)
    }

    pub fn ln(&self) -> Self {
        let n = self.order();
        let q = self.derivative().mul(&self.truncated(n - 1).recip());
        let mut l = vec![self.0[0].ln()];
        for k in 1..=n {
            l.push(q.0[k - 1] / k as f64);
        }
        Self(l)
    }

    pub fn derivative(&self) -> Self {
        Self((1..=self.order()).map(|k| k as f64 * self.0[k]).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|x| x * s).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.order().min(o.order());
        Self((0..=n).map(|k| self.0[k] - o.0[k]).collect())
    }

    /// `F' + t F''` about `t0`, i.e. `∂∂̄ F(|z|^2)`.
    pub fn radial_laplacian(&self, t0: f64) -> Self {
        let d1 = self.derivative();
        let d2 = d1.derivative();
        let n = d2.order();
        Self((0..=n).map(|k| d1.0[k] + t0 * d2.0[k] + if k > 0 { d2.0[k - 1] } else { 0.0 }).collect())
    }
}

/// Radial kernels `K(t)`, `t = |z|^2`, of planar model domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialKernel {
    /// Disc of radius `sqrt(r2)`.
    Disc { r2: f64 },
    /// Annulus `r < |z| < 1`, from the Laurent norms.
    Annulus { r: f64 },
    /// Unit-disc kernel truncated after `t^degree`.
    TruncatedDisc { degree: usize },
}

const RADIAL_ORDER: usize = 10;

impl RadialKernel {
    pub fn for_domain(d: &DomainSpec) -> Result<Self> {
        match d.kind() {
            DomainKind::Disc => Ok(Self::Disc { r2: 1.0 }),
            DomainKind::Annulus { inner_radius } => Ok(Self::Annulus { r: *inner_radius }),
            DomainKind::ReinhardtEllipsoid { coefficients, exponents }
                if coefficients.len() == 1 && exponents[0] == 1 =>
            {
                Ok(Self::Disc { r2: 1.0 / coefficients[0] })
            }
            _ => Err(Error::UnsupportedKind(d.name().into())),
        }
    }

    /// Taylor coefficients of `K(t0 + s)` in `s`.
    pub fn taylor(&self, t0: f64, order: usize) -> TaylorSeries {
        match *self {
            RadialKernel::Disc { r2 } => {
                let d = r2 - t0;
                let k0 = r2 / (PI * d * d);
                TaylorSeries((0..=order).map(|k| k0 * (k + 1) as f64 / d.powi(k as i32)).collect())
            }
            RadialKernel::TruncatedDisc { degree } => {
                let mut f = vec![0.0; order + 1];
                for k in 0..=degree {
                    let mut c = (k + 1) as f64 / PI;
                    for (m, fm) in f.iter_mut().enumerate().take(k.min(order) + 1) {
                        *fm += c * t0.powi((k - m) as i32);
                        c *= (k - m) as f64 / (m + 1) as f64;
                    }
                }
                TaylorSeries(f)
            }
            RadialKernel::Annulus { r } => {
                let mut f = vec![0.0; order + 1];
                let lt = t0.ln();
                // Adds the term `t^k / N_k`; reports whether every
                // coefficient moved by less than 1e-15 of its partial sum.
                let mut add = |k: i64| -> bool {
                    let ln_nk = crate::basis::ln_laurent_norm(k, r);
                    let mut small = true;
                    for (m, fm) in f.iter_mut().enumerate() {
                        let fall: f64 = (0..m).map(|i| k as f64 - i as f64).product();
                        if fall == 0.0 {
                            continue;
                        }
                        let fact: f64 = (1..=m).map(|i| i as f64).product();
                        let term = fall / fact * ((k as f64 - m as f64) * lt - ln_nk).exp();
                        *fm += term;
                        small &= term.abs() < 1e-15 * fm.abs();
                    }
                    small
                };
                add(0);
                for k in 1..1_000_000 {
                    if add(k) && k > 2 * order as i64 {
                        break;
                    }
                }
                for k in 1..1_000_000 {
                    if add(-k) && k > 2 * order as i64 {
                        break;
                    }
                }
                TaylorSeries(f)
            }
        }
    }

    pub fn kernel(&self, t: f64) -> f64 {
        self.taylor(t, 0).0[0]
    }

    /// Radial profiles of the Bergman and Kobayashi-Fuks densities about `t0`.
    pub fn profiles(&self, t0: f64) -> RadialProfiles {
        let k = self.taylor(t0, RADIAL_ORDER);
        let gb = k.ln().radial_laplacian(t0);
        let ric = gb.ln().radial_laplacian(t0).scale(-1.0);
        let gkf = gb.scale(2.0).sub(&ric);
        let curv = gkf.ln().radial_laplacian(t0);
        RadialProfiles {
            kernel: k.0[0],
            bergman: gb.0[0],
            ricci: ric.0[0],
            kf: gkf.0[0],
            kf_dt: gkf.0[1],
            gaussian_kf: -curv.0[0] / gkf.0[0],
        }
    }
}

/// Values at one radius `t = |z|^2`.
#[derive(Debug, Clone, Copy)]
pub struct RadialProfiles {
    pub kernel: f64,
    pub bergman: f64,
    pub ricci: f64,
    pub kf: f64,
    /// `d g_KF / dt`.
    pub kf_dt: f64,
    pub gaussian_kf: f64,
}

/// Closed-form metric tensor on disc, ball, polydisc and annulus.
pub fn oracle_metric(d: &DomainSpec, flavor: Flavor, z: &[C64]) -> Result<MetricTensor> {
    if z.len() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), got: z.len() });
    }
    if !d.contains(z) {
        return Err(Error::PointOutsideDomain);
    }
    let n = d.dim();
    let g = match d.kind() {
        DomainKind::Ball => {
            let s = 1.0 - z.iter().map(|x| x.norm_sqr()).sum::<f64>();
            let f = match flavor {
                Flavor::Bergman => (n + 1) as f64,
                Flavor::KobayashiFuks => ((n + 1) * (n + 2)) as f64,
            };
            CMat::from_fn(n, n, |a, b| {
                let delta = if a == b { 1.0 / s } else { 0.0 };
                (c(delta) + z[a].conj() * z[b] / (s * s)) * f
            })
        }
        DomainKind::Polydisc => {
            let f = match flavor {
                Flavor::Bergman => 2.0,
                Flavor::KobayashiFuks => 2.0 * (n + 2) as f64,
            };
            CMat::from_fn(n, n, |a, b| if a == b { c(f / (1.0 - z[a].norm_sqr()).powi(2)) } else { czero() })
        }
        _ => {
            let rk = RadialKernel::for_domain(d)?;
            let p = rk.profiles(z[0].norm_sqr());
            let v = match flavor {
                Flavor::Bergman => p.bergman,
                Flavor::KobayashiFuks => p.kf,
            };
            CMat::from_element(1, 1, c(v))
        }
    };
    Ok(MetricTensor::new(g, flavor, z.to_vec()))
}

/// Wirtinger derivatives of a metric field by central differences in the
/// real coordinates, with step `h`.
pub fn metric_derivatives_by_differences(
    field: &dyn Fn(&[C64]) -> Result<CMat>,
    z: &[C64],
    h: f64,
) -> Result<MetricDerivatives> {
    let n = z.len();
    let shift = |k: usize, dir: C64| -> Vec<C64> {
        let mut w = z.to_vec();
        w[k] += dir;
        w
    };
    let g = field(z)?;
    let mut dx = Vec::new();
    let mut dy = Vec::new();
    for k in 0..n {
        dx.push((field(&shift(k, c(h)))? - field(&shift(k, c(-h)))?) / c(2.0 * h));
        dy.push((field(&shift(k, C64::new(0.0, h)))? - field(&shift(k, C64::new(0.0, -h)))?) / c(2.0 * h));
    }
    let dz = (0..n).map(|k| (&dx[k] - &dy[k] * C64::new(0.0, 1.0)) * c(0.5)).collect();
    let dzbar = (0..n).map(|k| (&dx[k] + &dy[k] * C64::new(0.0, 1.0)) * c(0.5)).collect();
    // Second real partials ∂_{s_k} ∂_{s_l} with s ∈ {x, y}.
    let second = |k: usize, a: C64, l: usize, b: C64| -> Result<CMat> {
        let mut pp = z.to_vec();
        pp[k] += a;
        pp[l] += b;
        let mut pm = z.to_vec();
        pm[k] += a;
        pm[l] -= b;
        let mut mp = z.to_vec();
        mp[k] -= a;
        mp[l] += b;
        let mut mm = z.to_vec();
        mm[k] -= a;
        mm[l] -= b;
        Ok((field(&pp)? - field(&pm)? - field(&mp)? + field(&mm)?) / c(4.0 * h * h))
    };
    let (ex, ey) = (c(h), C64::new(0.0, h));
    let i = C64::new(0.0, 1.0);
    let mut ddbar = Vec::new();
    for k in 0..n {
        let mut row = Vec::new();
        for l in 0..n {
            // ∂_k ∂̄_l = ¼ (∂x_k - i∂y_k)(∂x_l + i∂y_l)
            let xx = second(k, ex, l, ex)?;
            let xy = second(k, ex, l, ey)?;
            let yx = second(k, ey, l, ex)?;
            let yy = second(k, ey, l, ey)?;
            row.push((xx + xy * i - yx * i + yy) * c(0.25));
        }
        ddbar.push(row);
    }
    Ok(MetricDerivatives { g, dz, dzbar, ddbar })
}
