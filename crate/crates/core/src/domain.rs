//! Bounded domains in `C^n`: membership, boundary geometry and quadrature.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{c, czero, hermitian_eigen, norm, CMat};
use crate::quadrature::{gauss_legendre_on, periodic, QuadratureRule};

pub type Point = Vec<C64>;

/// Real-valued defining function with its complex first and second derivatives.
pub trait DefiningFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, z: &[C64]) -> f64;
    /// `∂ρ/∂z_j`.
    fn grad_z(&self, z: &[C64]) -> Vec<C64>;
    /// `∂²ρ/∂z_j∂z_k`.
    fn hess_zz(&self, z: &[C64]) -> CMat;
    /// `∂²ρ/∂z_j∂z̄_k`.
    fn hess_zzbar(&self, z: &[C64]) -> CMat;

    fn grad_zbar(&self, z: &[C64]) -> Vec<C64> {
        self.grad_z(z).iter().map(|g| g.conj()).collect()
    }
}

/// `Σ c_j |z_j|^{2 m_j} - 1`; the ball, the disc and Reinhardt ellipsoids.
#[derive(Debug, Clone)]
pub struct PowerSumRho {
    pub coefficients: Vec<f64>,
    pub exponents: Vec<u32>,
}

impl DefiningFunction for PowerSumRho {
    fn dim(&self) -> usize {
        self.coefficients.len()
    }

    fn value(&self, z: &[C64]) -> f64 {
        let s: f64 = z
            .iter()
            .zip(self.coefficients.iter().zip(&self.exponents))
            .map(|(zj, (cj, mj))| cj * zj.norm_sqr().powi(*mj as i32))
            .sum();
        s - 1.0
    }

    fn grad_z(&self, z: &[C64]) -> Vec<C64> {
        z.iter()
            .zip(self.coefficients.iter().zip(&self.exponents))
            .map(|(zj, (cj, &m))| zj.conj() * (cj * m as f64 * zj.norm_sqr().powi(m as i32 - 1)))
            .collect()
    }

    fn hess_zz(&self, z: &[C64]) -> CMat {
        let n = self.dim();
        let mut h = CMat::zeros(n, n);
        for j in 0..n {
            let m = self.exponents[j] as i32;
            if m >= 2 {
                let zb = z[j].conj();
                h[(j, j)] = zb * zb * (self.coefficients[j] * (m * (m - 1)) as f64 * z[j].norm_sqr().powi(m - 2));
            }
        }
        h
    }

    fn hess_zzbar(&self, z: &[C64]) -> CMat {
        let n = self.dim();
        let mut h = CMat::zeros(n, n);
        for j in 0..n {
            let m = self.exponents[j] as i32;
            h[(j, j)] = c(self.coefficients[j] * (m * m) as f64 * z[j].norm_sqr().powi(m - 1));
        }
        h
    }
}

/// The Siegel model `2 Re z_n + |'z|^2`.
#[derive(Debug, Clone)]
pub struct SiegelRho {
    pub n: usize,
}

impl DefiningFunction for SiegelRho {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, z: &[C64]) -> f64 {
        2.0 * z[self.n - 1].re + z[..self.n - 1].iter().map(|x| x.norm_sqr()).sum::<f64>()
    }

    fn grad_z(&self, z: &[C64]) -> Vec<C64> {
        let mut g: Vec<C64> = z.iter().map(|x| x.conj()).collect();
        g[self.n - 1] = c(1.0);
        g
    }

    fn hess_zz(&self, _z: &[C64]) -> CMat {
        CMat::zeros(self.n, self.n)
    }

    fn hess_zzbar(&self, _z: &[C64]) -> CMat {
        let mut h = CMat::identity(self.n, self.n);
        h[(self.n - 1, self.n - 1)] = czero();
        h
    }
}

/// Piecewise defining function of the annulus: `|z|^2 - 1` near the outer
/// circle and `r^2 - |z|^2` near the inner one.
#[derive(Debug, Clone)]
pub struct AnnulusRho {
    pub inner_radius: f64,
}

impl AnnulusRho {
    fn inner(&self, z: &[C64]) -> bool {
        let a = z[0].norm();
        a - self.inner_radius < 1.0 - a
    }
}

impl DefiningFunction for AnnulusRho {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, z: &[C64]) -> f64 {
        if self.inner(z) {
            self.inner_radius.powi(2) - z[0].norm_sqr()
        } else {
            z[0].norm_sqr() - 1.0
        }
    }

    fn grad_z(&self, z: &[C64]) -> Vec<C64> {
        let s = if self.inner(z) { -1.0 } else { 1.0 };
        vec![z[0].conj() * s]
    }

    fn hess_zz(&self, _z: &[C64]) -> CMat {
        CMat::zeros(1, 1)
    }

    fn hess_zzbar(&self, z: &[C64]) -> CMat {
        let s = if self.inner(z) { -1.0 } else { 1.0 };
        CMat::from_element(1, 1, c(s))
    }
}

/// `max_j (|z_j|^2 - 1)`, differentiated along the active coordinate.
#[derive(Debug, Clone)]
pub struct PolydiscRho {
    pub n: usize,
}

impl PolydiscRho {
    fn active(&self, z: &[C64]) -> usize {
        (0..self.n).max_by(|&a, &b| z[a].norm_sqr().total_cmp(&z[b].norm_sqr())).unwrap_or(0)
    }
}

impl DefiningFunction for PolydiscRho {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, z: &[C64]) -> f64 {
        z.iter().map(|x| x.norm_sqr() - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }

    fn grad_z(&self, z: &[C64]) -> Vec<C64> {
        let k = self.active(z);
        let mut g = vec![czero(); self.n];
        g[k] = z[k].conj();
        g
    }

    fn hess_zz(&self, _z: &[C64]) -> CMat {
        CMat::zeros(self.n, self.n)
    }

    fn hess_zzbar(&self, z: &[C64]) -> CMat {
        let k = self.active(z);
        let mut h = CMat::zeros(self.n, self.n);
        h[(k, k)] = c(1.0);
        h
    }
}

/// `{|z| < 1, Re z > cut}`: arc piece `|z|^2 - 1`, chord piece `cut - Re z`.
#[derive(Debug, Clone)]
pub struct SegmentRho {
    pub cut: f64,
}

impl SegmentRho {
    fn on_arc(&self, z: &[C64]) -> bool {
        1.0 - z[0].norm() <= z[0].re - self.cut
    }
}

impl DefiningFunction for SegmentRho {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, z: &[C64]) -> f64 {
        (z[0].norm_sqr() - 1.0).max(self.cut - z[0].re)
    }

    fn grad_z(&self, z: &[C64]) -> Vec<C64> {
        if self.on_arc(z) {
            vec![z[0].conj()]
        } else {
            vec![c(-0.5)]
        }
    }

    fn hess_zz(&self, _z: &[C64]) -> CMat {
        CMat::zeros(1, 1)
    }

    fn hess_zzbar(&self, z: &[C64]) -> CMat {
        let v = if self.on_arc(z) { 1.0 } else { 0.0 };
        CMat::from_element(1, 1, c(v))
    }
}

/// Domain given by a user-supplied defining function.
#[derive(Clone)]
pub struct GeneralDomain {
    pub rho: Arc<dyn DefiningFunction>,
    /// Real intervals for `(Re z_1, Im z_1, ..., Re z_n, Im z_n)`.
    pub bbox: Vec<(f64, f64)>,
    pub tubular_radius: f64,
    pub interior_point: Point,
}

impl fmt::Debug for GeneralDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralDomain")
            .field("rho", &self.rho)
            .field("bbox", &self.bbox)
            .field("tubular_radius", &self.tubular_radius)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum DomainKind {
    Disc,
    Ball,
    Polydisc,
    Annulus {
        inner_radius: f64,
    },
    ReinhardtEllipsoid {
        coefficients: Vec<f64>,
        exponents: Vec<u32>,
    },
    /// The part of the unit disc to the right of the line `Re z = cut`.
    CircularSegment {
        cut: f64,
    },
    General(GeneralDomain),
}

const NEAREST_POINT_ITERATIONS: usize = 2000;

#[derive(Debug, Clone)]
pub struct DomainSpec {
    kind: DomainKind,
    n: usize,
}

/// Nearest boundary point with the complex normal and tangent frame there.
#[derive(Debug, Clone)]
pub struct BoundaryFrame {
    pub base: Point,
    pub distance: f64,
    /// Unit vector along `∇_z̄ ρ`.
    pub normal: Vec<C64>,
    pub tangential: Vec<Vec<C64>>,
    pub levi_eigenvalues: Vec<f64>,
}

impl BoundaryFrame {
    /// Splits `u` into `(u_N, u_H)`.
    pub fn split(&self, u: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let coef: C64 = u.iter().zip(&self.normal).map(|(a, b)| a * b.conj()).sum();
        let un: Vec<C64> = self.normal.iter().map(|v| v * coef).collect();
        let uh = u.iter().zip(&un).map(|(a, b)| a - b).collect();
        (un, uh)
    }
}

impl DomainSpec {
    pub fn disc() -> Self {
        Self { kind: DomainKind::Disc, n: 1 }
    }

    pub fn ball(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(if n == 1 { Self::disc() } else { Self { kind: DomainKind::Ball, n } })
    }

    pub fn polydisc(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(if n == 1 { Self::disc() } else { Self { kind: DomainKind::Polydisc, n } })
    }

    pub fn annulus(inner_radius: f64) -> Result<Self> {
        if !(inner_radius > 0.0 && inner_radius < 1.0) {
            return Err(Error::InvalidDomain(format!("annulus inner radius {inner_radius} not in (0, 1)")));
        }
        Ok(Self { kind: DomainKind::Annulus { inner_radius }, n: 1 })
    }

    pub fn ellipsoid(coefficients: Vec<f64>, exponents: Vec<u32>) -> Result<Self> {
        let n = coefficients.len();
        check_dim(n)?;
        if exponents.len() != n {
            return Err(Error::InvalidDomain("ellipsoid coefficients and exponents differ in length".into()));
        }
        if coefficients.iter().any(|c| !(*c > 0.0 && c.is_finite())) || exponents.contains(&0) {
            return Err(Error::InvalidDomain("ellipsoid needs positive coefficients and exponents".into()));
        }
        Ok(Self { kind: DomainKind::ReinhardtEllipsoid { coefficients, exponents }, n })
    }

    /// The disc of the given radius, as a one-dimensional ellipsoid.
    pub fn scaled_disc(radius: f64) -> Result<Self> {
        Self::ellipsoid(vec![1.0 / (radius * radius)], vec![1])
    }

    pub fn circular_segment(cut: f64) -> Result<Self> {
        if !(cut > -1.0 && cut < 1.0) {
            return Err(Error::InvalidDomain(format!("segment cut {cut} not in (-1, 1)")));
        }
        Ok(Self { kind: DomainKind::CircularSegment { cut }, n: 1 })
    }

    /// Intersection of the annulus with the half-plane `Re z > cut`; the cut
    /// must clear the hole.
    pub fn annulus_cut(inner_radius: f64, cut: f64) -> Result<Self> {
        if cut <= inner_radius {
            return Err(Error::InvalidDomain("half-plane cut must clear the annulus hole".into()));
        }
        Self::circular_segment(cut)
    }

    /// A domain `{ρ < 0}` inside `bbox`. Boundary points reached along rays
    /// from `interior_point` are checked for a nonvanishing gradient.
    pub fn general(
        rho: Arc<dyn DefiningFunction>,
        bbox: Vec<(f64, f64)>,
        tubular_radius: f64,
        interior_point: Point,
    ) -> Result<Self> {
        let n = rho.dim();
        check_dim(n)?;
        if bbox.len() != 2 * n || interior_point.len() != n {
            return Err(Error::InvalidDomain("bounding box or interior point has wrong dimension".into()));
        }
        if !(tubular_radius > 0.0) {
            return Err(Error::InvalidDomain("tubular radius must be positive".into()));
        }
        if !(rho.value(&interior_point) < 0.0) {
            return Err(Error::InvalidDomain("interior point does not satisfy rho < 0".into()));
        }
        let g = GeneralDomain { rho, bbox, tubular_radius, interior_point };
        let spec = Self { kind: DomainKind::General(g), n };
        spec.check_boundary_samples()?;
        Ok(spec)
    }

    fn check_boundary_samples(&self) -> Result<()> {
        let DomainKind::General(g) = &self.kind else { return Ok(()) };
        let n = self.n;
        let dirs = 16;
        for k in 0..dirs {
            let t = 2.0 * PI * k as f64 / dirs as f64;
            let mut d = vec![czero(); n];
            d[k % n] = C64::from_polar(1.0, t);
            let diam = g.bbox.iter().map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
            let f = |s: f64| {
                let p: Vec<C64> = g.interior_point.iter().zip(&d).map(|(a, b)| a + b * s).collect();
                if !in_box(&g.bbox, &p) {
                    return 1.0;
                }
                g.rho.value(&p)
            };
            let Some(s) = bracket_root(f, diam) else {
                return Err(Error::InvalidDomain("domain is not contained in its bounding box".into()));
            };
            let p: Vec<C64> = g.interior_point.iter().zip(&d).map(|(a, b)| a + b * s).collect();
            if !in_box(&g.bbox, &p) {
                return Err(Error::InvalidDomain("domain is not contained in its bounding box".into()));
            }
            if norm(&g.rho.grad_z(&p)) < 1e-10 {
                return Err(Error::InvalidDomain("defining function has a critical point on the boundary".into()));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DomainKind::Disc => "disc",
            DomainKind::Ball => "ball",
            DomainKind::Polydisc => "polydisc",
            DomainKind::Annulus { .. } => "annulus",
            DomainKind::ReinhardtEllipsoid { .. } => "reinhardt_ellipsoid",
            DomainKind::CircularSegment { .. } => "circular_segment",
            DomainKind::General(_) => "general",
        }
    }

    /// Invariant under independent rotations of each coordinate.
    pub fn is_reinhardt(&self) -> bool {
        matches!(
            self.kind,
            DomainKind::Disc
                | DomainKind::Ball
                | DomainKind::Polydisc
                | DomainKind::Annulus { .. }
                | DomainKind::ReinhardtEllipsoid { .. }
        )
    }

    /// Power-sum parameters for disc, ball and ellipsoid.
    pub fn power_sum(&self) -> Option<(Vec<f64>, Vec<u32>)> {
        match &self.kind {
            DomainKind::Disc | DomainKind::Ball => Some((vec![1.0; self.n], vec![1; self.n])),
            DomainKind::ReinhardtEllipsoid { coefficients, exponents } => {
                Some((coefficients.clone(), exponents.clone()))
            }
            _ => None,
        }
    }

    pub fn defining_function(&self) -> Arc<dyn DefiningFunction> {
        match &self.kind {
            DomainKind::Polydisc => Arc::new(PolydiscRho { n: self.n }),
            DomainKind::Annulus { inner_radius } => Arc::new(AnnulusRho { inner_radius: *inner_radius }),
            DomainKind::CircularSegment { cut } => Arc::new(SegmentRho { cut: *cut }),
            DomainKind::General(g) => g.rho.clone(),
            _ => {
                let (coefficients, exponents) = self.power_sum().expect("power-sum kind");
                Arc::new(PowerSumRho { coefficients, exponents })
            }
        }
    }

    /// Radius below which nearest boundary points are unique.
    pub fn tubular_radius(&self) -> f64 {
        match &self.kind {
            DomainKind::Disc | DomainKind::Ball | DomainKind::Polydisc => 1.0,
            DomainKind::Annulus { inner_radius } => (1.0 - inner_radius) / 2.0,
            DomainKind::CircularSegment { cut } => (1.0 - cut) / 2.0,
            DomainKind::ReinhardtEllipsoid { coefficients, exponents } => coefficients
                .iter()
                .zip(exponents)
                .map(|(c, m)| {
                    let semi = c.powf(-0.5 / *m as f64);
                    if *m == 1 {
                        semi
                    } else {
                        0.5 * semi
                    }
                })
                .fold(f64::INFINITY, f64::min)
                .min(0.5),
            DomainKind::General(g) => g.tubular_radius,
        }
    }

    /// Bound on `|z_j|` over the domain, per coordinate.
    pub fn coordinate_bounds(&self) -> Vec<f64> {
        match &self.kind {
            DomainKind::ReinhardtEllipsoid { coefficients, exponents } => {
                coefficients.iter().zip(exponents).map(|(c, m)| c.powf(-0.5 / *m as f64)).collect()
            }
            DomainKind::General(g) => (0..self.n)
                .map(|j| {
                    let (a, b) = g.bbox[2 * j];
                    let (c0, d0) = g.bbox[2 * j + 1];
                    (a.abs().max(b.abs()).powi(2) + c0.abs().max(d0.abs()).powi(2)).sqrt()
                })
                .collect(),
            _ => vec![1.0; self.n],
        }
    }

    pub fn contains(&self, z: &[C64]) -> bool {
        if z.len() != self.n {
            return false;
        }
        match &self.kind {
            DomainKind::Disc | DomainKind::Ball => z.iter().map(|x| x.norm_sqr()).sum::<f64>() < 1.0,
            DomainKind::Polydisc => z.iter().all(|x| x.norm_sqr() < 1.0),
            DomainKind::Annulus { inner_radius } => {
                let a = z[0].norm();
                a > *inner_radius && a < 1.0
            }
            DomainKind::CircularSegment { cut } => z[0].norm_sqr() < 1.0 && z[0].re > *cut,
            DomainKind::ReinhardtEllipsoid { .. } => self.defining_function().value(z) < 0.0,
            DomainKind::General(g) => in_box(&g.bbox, z) && g.rho.value(z) < 0.0,
        }
    }

    fn require_inside(&self, z: &[C64]) -> Result<()> {
        if self.contains(z) {
            Ok(())
        } else {
            Err(Error::PointOutsideDomain)
        }
    }

    /// Euclidean distance to the boundary.
    pub fn boundary_distance(&self, z: &[C64]) -> Result<f64> {
        self.require_inside(z)?;
        Ok(match &self.kind {
            DomainKind::Disc | DomainKind::Ball => 1.0 - norm(z),
            DomainKind::Polydisc => z.iter().map(|x| 1.0 - x.norm()).fold(f64::INFINITY, f64::min),
            DomainKind::Annulus { inner_radius } => {
                let a = z[0].norm();
                (a - inner_radius).min(1.0 - a)
            }
            DomainKind::CircularSegment { cut } => {
                let p = segment_nearest(*cut, z[0]);
                (z[0] - p).norm()
            }
            _ => {
                let w = self.nearest_point_solver(z)?;
                distance(z, &w)
            }
        })
    }

    /// Nearest boundary point `π(z)`.
    pub fn nearest_boundary_point(&self, z: &[C64]) -> Result<Point> {
        self.require_inside(z)?;
        Ok(match &self.kind {
            DomainKind::Disc | DomainKind::Ball => {
                let r = norm(z);
                if r == 0.0 {
                    return Err(Error::AmbiguousNearestPoint { distance: 1.0, radius: 1.0 });
                }
                z.iter().map(|x| x / r).collect()
            }
            DomainKind::Polydisc => {
                let k = (0..self.n).max_by(|&a, &b| z[a].norm().total_cmp(&z[b].norm())).unwrap_or(0);
                let mut w = z.to_vec();
                if z[k].norm() == 0.0 {
                    return Err(Error::AmbiguousNearestPoint { distance: 1.0, radius: 1.0 });
                }
                w[k] = z[k] / z[k].norm();
                w
            }
            DomainKind::Annulus { inner_radius } => {
                let a = z[0].norm();
                let target = if a - inner_radius < 1.0 - a { *inner_radius } else { 1.0 };
                vec![z[0] * (target / a)]
            }
            DomainKind::CircularSegment { cut } => vec![segment_nearest(*cut, z[0])],
            _ => self.nearest_point_solver(z)?,
        })
    }

    /// Fixed-point iteration `w <- z + t n(w)` with `ρ(z + t n(w)) = 0`.
    /// Converges to a critical point of the distance, the nearest point inside
    /// the tubular neighbourhood.
    fn nearest_point_solver(&self, z: &[C64]) -> Result<Point> {
        let rho = self.defining_function();
        let diam = 2.0 * self.coordinate_bounds().iter().map(|r| r * r).sum::<f64>().sqrt();
        let mut w = z.to_vec();
        if norm(&rho.grad_zbar(z)) < 1e-12 {
            // Critical point of ρ: start from the boundary along the
            // coordinate axis with the smallest extent.
            let bounds = self.coordinate_bounds();
            let j = (0..self.n).min_by(|&a, &b| bounds[a].total_cmp(&bounds[b])).unwrap_or(0);
            let f = |t: f64| {
                let mut p = z.to_vec();
                p[j] += t;
                rho.value(&p)
            };
            let t = bracket_root(f, diam).ok_or(Error::NearestPointFailed)?;
            w[j] += t;
        }
        // Descent on the ray length t(d) with ρ(z + t d) = 0: blending d
        // towards the normal at the hit point shortens t; the blend factor
        // backtracks until it does.
        let hit = |d: &[C64]| -> Result<(f64, Point)> {
            let f = |t: f64| {
                let p: Vec<C64> = z.iter().zip(d).map(|(a, b)| a + b * t).collect();
                rho.value(&p)
            };
            let t = bracket_root(f, diam).ok_or(Error::NearestPointFailed)?;
            Ok((t, z.iter().zip(d).map(|(a, b)| a + b * t).collect()))
        };
        let unit = |v: Vec<C64>| -> Result<Vec<C64>> {
            let n = norm(&v);
            if n < 1e-14 {
                return Err(Error::NearestPointFailed);
            }
            Ok(v.iter().map(|x| x / n).collect())
        };
        let mut d = unit(rho.grad_zbar(&w))?;
        let (mut t, mut p) = hit(&d)?;
        let mut lambda = 1.0;
        for _ in 0..NEAREST_POINT_ITERATIONS {
            let nrm = unit(rho.grad_zbar(&p))?;
            let mut accepted = false;
            while lambda > 1e-12 {
                let cand = unit(d.iter().zip(&nrm).map(|(a, b)| a * (1.0 - lambda) + b * lambda).collect())?;
                let (tc, pc) = hit(&cand)?;
                if tc <= t {
                    let step = distance(&pc, &p);
                    d = cand;
                    t = tc;
                    p = pc;
                    if step < 1e-10 {
                        return Ok(p);
                    }
                    lambda = (lambda * 2.0).min(1.0);
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                // no shorter ray in the normal direction: p is stationary
                return Ok(p);
            }
        }
        Err(Error::NearestPointFailed)
    }

    /// Nearest point, unit normal, tangent frame and Levi eigenvalues.
    pub fn boundary_frame(&self, z: &[C64]) -> Result<BoundaryFrame> {
        let d = self.boundary_distance(z)?;
        let radius = self.tubular_radius();
        if d >= radius {
            return Err(Error::AmbiguousNearestPoint { distance: d, radius });
        }
        let base = self.nearest_boundary_point(z)?;
        let rho = self.defining_function();
        let probe = inward_probe(&base, z);
        let g = rho.grad_zbar(&probe);
        let gn = norm(&g);
        if gn == 0.0 {
            return Err(Error::NearestPointFailed);
        }
        let normal: Vec<C64> = g.iter().map(|x| x / gn).collect();
        let tangential = complement_frame(&normal);
        let h = rho.hess_zzbar(&probe);
        let m = self.n - 1;
        let mut levi = CMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                levi[(i, j)] = levi_value(&h, &tangential[i], &tangential[j]);
            }
        }
        let levi_eigenvalues = if m > 0 { hermitian_eigen(&levi).0 } else { Vec::new() };
        Ok(BoundaryFrame { base, distance: d, normal, tangential, levi_eigenvalues })
    }

    /// `u = u_N + u_H` relative to the nearest boundary point of `z`.
    pub fn split_normal_tangential(&self, z: &[C64], u: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        Ok(self.boundary_frame(z)?.split(u))
    }

    /// `Σ ρ_{αβ̄}(p) v_α v̄_β` for a complex-tangential `v` at the boundary point `p`.
    pub fn levi_form(&self, p: &[C64], v: &[C64]) -> Result<f64> {
        if p.len() != self.n || v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len().min(p.len()) });
        }
        levi_form_of(self.defining_function().as_ref(), p, v)
    }

    pub fn build_quadrature(&self, resolution: usize) -> Result<QuadratureRule> {
        if resolution == 0 {
            return Err(Error::InvalidDomain("quadrature resolution must be positive".into()));
        }
        let r = resolution;
        let rule = match &self.kind {
            DomainKind::Disc => polar_rule(0.0, 1.0, r),
            DomainKind::Annulus { inner_radius } => polar_rule(*inner_radius, 1.0, r),
            DomainKind::Polydisc => {
                let disc = polar_rule(0.0, 1.0, r);
                let mut rule = QuadratureRule { nodes: vec![vec![]], weights: vec![1.0], descriptor: String::new() };
                for _ in 0..self.n {
                    rule = product(&rule, &disc);
                }
                rule.descriptor = format!("polydisc product radial {r}x{}", 2 * r);
                rule
            }
            DomainKind::Ball | DomainKind::ReinhardtEllipsoid { .. } => {
                let (cs, ms) = self.power_sum().expect("power-sum kind");
                nested_radial_rule(&cs, &ms, r)
            }
            DomainKind::CircularSegment { cut } => segment_rule(*cut, r),
            DomainKind::General(g) => cell_rule(g, r)?,
        };
        debug_assert!(rule.nodes.iter().all(|z| self.contains(z)));
        Ok(rule)
    }

    pub fn default_quadrature_resolution(&self) -> usize {
        match self.n {
            1 => 32,
            _ => 12,
        }
    }

    /// Lebesgue volume in closed form where available.
    pub fn volume(&self) -> Option<f64> {
        match &self.kind {
            DomainKind::Disc => Some(PI),
            DomainKind::Ball => Some(PI.powi(self.n as i32) / factorial(self.n)),
            DomainKind::Polydisc => Some(PI.powi(self.n as i32)),
            DomainKind::Annulus { inner_radius } => Some(PI * (1.0 - inner_radius * inner_radius)),
            DomainKind::CircularSegment { cut } => {
                let t = cut.acos();
                Some(t - cut * (1.0 - cut * cut).sqrt())
            }
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<Value> {
        let params = match &self.kind {
            DomainKind::Disc | DomainKind::Ball | DomainKind::Polydisc => json!({}),
            DomainKind::Annulus { inner_radius } => json!({ "inner_radius": inner_radius }),
            DomainKind::ReinhardtEllipsoid { coefficients, exponents } => {
                json!({ "coefficients": coefficients, "exponents": exponents })
            }
            DomainKind::CircularSegment { cut } => json!({ "cut": cut }),
            DomainKind::General(_) => {
                return Err(Error::InvalidDomain("general domains carry code and cannot be serialized".into()))
            }
        };
        Ok(json!({ "kind": self.name(), "n": self.n, "params": params }))
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let rec: DomainRecord =
            serde_json::from_value(v.clone()).map_err(|e| Error::InvalidDomain(format!("bad domain record: {e}")))?;
        rec.try_into()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainRecord {
    pub kind: String,
    pub n: usize,
    #[serde(default)]
    pub params: Value,
}

impl TryFrom<DomainRecord> for DomainSpec {
    type Error = Error;

    fn try_from(rec: DomainRecord) -> Result<Self> {
        let num = |key: &str| -> Result<f64> {
            rec.params
                .get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::InvalidDomain(format!("missing numeric parameter '{key}'")))
        };
        let spec = match rec.kind.as_str() {
            "disc" => DomainSpec::disc(),
            "ball" => DomainSpec::ball(rec.n)?,
            "polydisc" => DomainSpec::polydisc(rec.n)?,
            "annulus" => DomainSpec::annulus(num("inner_radius")?)?,
            "circular_segment" => DomainSpec::circular_segment(num("cut")?)?,
            "reinhardt_ellipsoid" => {
                let coefficients: Vec<f64> = serde_json::from_value(rec.params["coefficients"].clone())
                    .map_err(|e| Error::InvalidDomain(format!("ellipsoid coefficients: {e}")))?;
                let exponents: Vec<u32> = serde_json::from_value(rec.params["exponents"].clone())
                    .map_err(|e| Error::InvalidDomain(format!("ellipsoid exponents: {e}")))?;
                DomainSpec::ellipsoid(coefficients, exponents)?
            }
            other => return Err(Error::InvalidDomain(format!("unknown domain kind '{other}'"))),
        };
        if spec.n != rec.n {
            return Err(Error::DimensionMismatch { expected: spec.n, got: rec.n });
        }
        Ok(spec)
    }
}

impl Serialize for DomainSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DomainSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = DomainRecord::deserialize(d)?;
        rec.try_into().map_err(serde::de::Error::custom)
    }
}

pub fn levi_form_of(rho: &dyn DefiningFunction, p: &[C64], v: &[C64]) -> Result<f64> {
    let g = rho.grad_z(p);
    let lin: C64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
    let scale = norm(&g) * norm(v);
    if lin.norm() > 1e-8 * scale.max(1e-300) {
        return Err(Error::VectorNotTangential(lin.norm() / norm(&g).max(1e-300)));
    }
    Ok(levi_value(&rho.hess_zzbar(p), v, v).re)
}

fn levi_value(h: &CMat, a: &[C64], b: &[C64]) -> C64 {
    let mut s = czero();
    for i in 0..a.len() {
        for j in 0..b.len() {
            s += h[(i, j)] * a[i] * b[j].conj();
        }
    }
    s
}

/// Orthonormal complement of a unit vector in `C^n`.
pub fn complement_frame(nu: &[C64]) -> Vec<Vec<C64>> {
    let n = nu.len();
    let mut frame: Vec<Vec<C64>> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nu[a].norm().total_cmp(&nu[b].norm()));
    for &k in &order {
        if frame.len() == n - 1 {
            break;
        }
        let mut v = vec![czero(); n];
        v[k] = c(1.0);
        for _ in 0..2 {
            for q in frame.iter().chain(std::iter::once(&nu.to_vec())) {
                let p: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for i in 0..n {
                    v[i] -= q[i] * p;
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            frame.push(v.iter().map(|x| x / nv).collect());
        }
    }
    frame
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidDomain("dimension must be positive".into()))
    } else {
        Ok(())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn in_box(bbox: &[(f64, f64)], z: &[C64]) -> bool {
    z.iter().enumerate().all(|(j, x)| {
        let (a, b) = bbox[2 * j];
        let (c0, d0) = bbox[2 * j + 1];
        x.re >= a && x.re <= b && x.im >= c0 && x.im <= d0
    })
}

/// Point slightly inside the domain from `base` toward `z`, used to pick the
/// smooth piece of piecewise defining functions.
fn inward_probe(base: &[C64], z: &[C64]) -> Point {
    base.iter().zip(z).map(|(b, x)| b + (x - b) * 1e-9).collect()
}

/// First `t` in `(0, limit]` with `f(t) = 0`, assuming `f(0) < 0`.
pub(crate) fn bracket_root(f: impl Fn(f64) -> f64, limit: f64) -> Option<f64> {
    let mut lo = 0.0;
    let mut flo = f(0.0);
    if flo >= 0.0 {
        return Some(0.0);
    }
    let mut hi = (limit * 1e-3).max(1e-12);
    let mut fhi = f(hi);
    while fhi < 0.0 {
        lo = hi;
        flo = fhi;
        hi *= 2.0;
        if hi > 4.0 * limit {
            return None;
        }
        fhi = f(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let t = if flo.is_finite() && fhi.is_finite() && fhi != flo {
            let s = lo - flo * (hi - lo) / (fhi - flo);
            if s > lo && s < hi && (s - mid).abs() < 0.5 * (hi - lo) {
                s
            } else {
                mid
            }
        } else {
            mid
        };
        let ft = f(t);
        if ft < 0.0 {
            lo = t;
            flo = ft;
        } else {
            hi = t;
            fhi = ft;
        }
        if ft == 0.0 {
            return Some(t);
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm < 0.0 {
            lo = m;
            flo = fm;
        } else {
            hi = m;
            fhi = fm;
        }
    }
    Some(0.5 * (lo + hi))
}

fn segment_nearest(cut: f64, z: C64) -> C64 {
    let corner_y = (1.0 - cut * cut).sqrt();
    let corners = [C64::new(cut, corner_y), C64::new(cut, -corner_y)];
    let mut cands: Vec<C64> = corners.to_vec();
    if z.norm() > 0.0 {
        let radial = z / z.norm();
        if radial.re >= cut {
            cands.push(radial);
        }
    }
    if z.im.abs() <= corner_y {
        cands.push(C64::new(cut, z.im));
    }
    cands.into_iter().min_by(|a, b| (z - a).norm().total_cmp(&(z - b).norm())).expect("nonempty candidates")
}

fn polar_rule(r0: f64, r1: f64, res: usize) -> QuadratureRule {
    let radial = gauss_legendre_on(res, r0, r1);
    let angles = periodic(2 * res);
    let mut nodes = Vec::with_capacity(radial.len() * angles.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for (r, wr) in &radial {
        for (t, wt) in &angles {
            nodes.push(vec![C64::from_polar(*r, *t)]);
            weights.push(wr * r * wt);
        }
    }
    QuadratureRule { nodes, weights, descriptor: format!("polar radial {res}x{}", 2 * res) }
}

fn product(a: &QuadratureRule, b: &QuadratureRule) -> QuadratureRule {
    let mut nodes = Vec::with_capacity(a.len() * b.len());
    let mut weights = Vec::with_capacity(a.len() * b.len());
    for (za, wa) in a.nodes.iter().zip(&a.weights) {
        for (zb, wb) in b.nodes.iter().zip(&b.weights) {
            let mut z = za.clone();
            z.extend_from_slice(zb);
            nodes.push(z);
            weights.push(wa * wb);
        }
    }
    QuadratureRule { nodes, weights, descriptor: String::new() }
}

/// Nested polar rule on `Σ c_j r_j^{2 m_j} < 1`: each radius runs up to the
/// bound left by the previous ones.
fn nested_radial_rule(cs: &[f64], ms: &[u32], res: usize) -> QuadratureRule {
    let angles = periodic(2 * res);
    let mut partial: Vec<(Vec<f64>, f64, f64)> = vec![(Vec::new(), 0.0, 1.0)];
    for (cj, mj) in cs.iter().zip(ms) {
        let mut next = Vec::new();
        for (radii, used, w) in &partial {
            let left = (1.0 - used).max(0.0);
            let top = (left / cj).powf(0.5 / *mj as f64);
            for (r, wr) in gauss_legendre_on(res, 0.0, top) {
                let mut rr = radii.clone();
                rr.push(r);
                next.push((rr, used + cj * r.powi(2 * *mj as i32), w * wr * r));
            }
        }
        partial = next;
    }
    let n = cs.len();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let total_angles = angles.len().pow(n as u32);
    for (radii, _, w) in &partial {
        for idx in 0..total_angles {
            let mut k = idx;
            let mut z = Vec::with_capacity(n);
            let mut wt = *w;
            for r in radii {
                let (t, wa) = angles[k % angles.len()];
                k /= angles.len();
                z.push(C64::from_polar(*r, t));
                wt *= wa;
            }
            nodes.push(z);
            weights.push(wt);
        }
    }
    QuadratureRule { nodes, weights, descriptor: format!("nested radial {res}, angles {}", 2 * res) }
}

/// Polar Gauss rule on the segment: `θ ∈ [-θ0, θ0]`, `r ∈ [cut / cos θ, 1]`.
fn segment_rule(cut: f64, res: usize) -> QuadratureRule {
    let t0 = cut.acos();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (t, wt) in gauss_legendre_on(res, -t0, t0) {
        let r0 = (cut / t.cos()).max(0.0);
        for (r, wr) in gauss_legendre_on(res, r0, 1.0) {
            nodes.push(vec![C64::from_polar(r, t)]);
            weights.push(wt * wr * r);
        }
    }
    QuadratureRule { nodes, weights, descriptor: format!("segment polar gauss {res}x{res}") }
}

/// Cell grid over the bounding box: interior cells get an 8x8 Gauss rule,
/// boundary cells are split four times and then clipped node by node.
fn cell_rule(g: &GeneralDomain, res: usize) -> Result<QuadratureRule> {
    if g.rho.dim() != 1 {
        return Err(Error::InvalidDomain("cell quadrature supports planar domains only".into()));
    }
    let (x0, x1) = g.bbox[0];
    let (y0, y1) = g.bbox[1];
    let hx = (x1 - x0) / res as f64;
    let hy = (y1 - y0) / res as f64;
    let unit = gauss_legendre_on(8, 0.0, 1.0);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut clipped_area = 0.0;
    let inside = |x: f64, y: f64| {
        let z = [C64::new(x, y)];
        in_box(&g.bbox, &z) && g.rho.value(&z) < 0.0
    };
    let mut stack: Vec<(f64, f64, f64, f64, u32)> = Vec::new();
    for i in 0..res {
        for j in 0..res {
            stack.push((x0 + i as f64 * hx, y0 + j as f64 * hy, hx, hy, 0));
        }
    }
    while let Some((cx, cy, wx, wy, level)) = stack.pop() {
        let mut flags = Vec::with_capacity(unit.len() * unit.len() + 4);
        for (u, _) in &unit {
            for (v, _) in &unit {
                flags.push(inside(cx + u * wx, cy + v * wy));
            }
        }
        for (u, v) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            flags.push(inside(cx + u * wx, cy + v * wy));
        }
        let all_in = flags.iter().all(|f| *f);
        let all_out = flags.iter().all(|f| !*f);
        if all_out {
            continue;
        }
        if all_in || level >= 4 {
            let mut kept = 0.0;
            for (u, wu) in &unit {
                for (v, wv) in &unit {
                    let (x, y) = (cx + u * wx, cy + v * wy);
                    let w = wu * wv * wx * wy;
                    if inside(x, y) {
                        nodes.push(vec![C64::new(x, y)]);
                        weights.push(w);
                        kept += w;
                    }
                }
            }
            if !all_in {
                clipped_area += wx * wy - kept;
            }
            continue;
        }
        let (hx2, hy2) = (wx / 2.0, wy / 2.0);
        for (a, b) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            stack.push((cx + a * hx2, cy + b * hy2, hx2, hy2, level + 1));
        }
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        descriptor: format!("cell grid {res}x{res}, gauss 8, 4 levels, clipped area {clipped_area:.3e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> C64 {
        C64::new(x, y)
    }

    #[test]
    fn membership() {
        assert!(DomainSpec::disc().contains(&[p(0.0, 0.0)]));
        assert!(!DomainSpec::annulus(0.2).unwrap().contains(&[p(0.1, 0.0)]));
        assert!(!DomainSpec::ball(2).unwrap().contains(&[p(0.6, 0.0), p(0.8, 0.0)]));
    }

    #[test]
    fn closed_form_distances() {
        assert_relative_eq!(DomainSpec::disc().boundary_distance(&[p(0.3, 0.0)]).unwrap(), 0.7, epsilon = 1e-15);
        let ann = DomainSpec::annulus(0.2).unwrap();
        assert_relative_eq!(ann.boundary_distance(&[p(0.5, 0.0)]).unwrap(), 0.3, epsilon = 1e-15);
        let ball = DomainSpec::ball(2).unwrap();
        assert_relative_eq!(ball.boundary_distance(&[p(0.3, 0.0), p(0.4, 0.0)]).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(DomainSpec::disc().boundary_distance(&[p(2.0, 0.0)]), Err(Error::PointOutsideDomain));
    }

    #[test]
    fn frames_on_model_domains() {
        let f = DomainSpec::disc().boundary_frame(&[p(0.9, 0.0)]).unwrap();
        assert_relative_eq!(f.base[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(f.normal[0].re, 1.0, epsilon = 1e-12);

        let ball = DomainSpec::ball(2).unwrap();
        let (un, uh) = ball.split_normal_tangential(&[p(0.0, 0.0), p(0.9, 0.0)], &[p(1.0, 0.0), p(1.0, 0.0)]).unwrap();
        assert!((un[0]).norm() < 1e-12 && (un[1] - p(1.0, 0.0)).norm() < 1e-12);
        assert!((uh[0] - p(1.0, 0.0)).norm() < 1e-12 && uh[1].norm() < 1e-12);

        let ann = DomainSpec::annulus(0.2).unwrap();
        let f = ann.boundary_frame(&[p(0.25, 0.0)]).unwrap();
        assert_relative_eq!(f.base[0].re, 0.2, epsilon = 1e-15);
        assert_relative_eq!(f.normal[0].re, -1.0, epsilon = 1e-12);

        assert!(matches!(DomainSpec::disc().boundary_frame(&[p(0.0, 0.0)]), Err(Error::AmbiguousNearestPoint { .. })));
    }

    #[test]
    fn levi_forms() {
        let ball = DomainSpec::ball(2).unwrap();
        assert_relative_eq!(ball.levi_form(&[p(1.0, 0.0), p(0.0, 0.0)], &[p(0.0, 0.0), p(1.0, 0.0)]).unwrap(), 1.0);
        assert!(matches!(
            ball.levi_form(&[p(1.0, 0.0), p(0.0, 0.0)], &[p(1.0, 0.0), p(0.0, 0.0)]),
            Err(Error::VectorNotTangential(_))
        ));
        let siegel = SiegelRho { n: 2 };
        let v = [p(0.3, -0.4), p(0.0, 0.0)];
        assert_relative_eq!(levi_form_of(&siegel, &[p(0.0, 0.0), p(0.0, 0.0)], &v).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(DomainSpec::disc().levi_form(&[p(0.0, 1.0)], &[p(0.0, 0.0)]).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_volumes() {
        let disc = DomainSpec::disc();
        let q = disc.build_quadrature(disc.default_quadrature_resolution()).unwrap();
        assert!((q.total_weight() - PI).abs() < 1e-6);
        let pd = DomainSpec::polydisc(2).unwrap();
        let q = pd.build_quadrature(pd.default_quadrature_resolution()).unwrap();
        assert!((q.total_weight() - PI * PI).abs() < 1e-5);
        let ann = DomainSpec::annulus(0.2).unwrap();
        let q = ann.build_quadrature(32).unwrap();
        assert!((q.total_weight() - PI * 0.96).abs() < 1e-6);
        let ball = DomainSpec::ball(2).unwrap();
        let q = ball.build_quadrature(8).unwrap();
        assert_relative_eq!(q.total_weight(), PI * PI / 2.0, max_relative = 1e-12);
        let seg = DomainSpec::circular_segment(0.25).unwrap();
        let q = seg.build_quadrature(24).unwrap();
        assert_relative_eq!(q.total_weight(), seg.volume().unwrap(), max_relative = 1e-10);
        assert!(q.nodes.iter().all(|z| seg.contains(z)));
    }

    #[test]
    fn solver_matches_closed_form_on_ball_as_ellipsoid() {
        let e = DomainSpec::ellipsoid(vec![1.0, 1.0], vec![1, 1]).unwrap();
        let z = [p(0.2, 0.1), p(-0.3, 0.5)];
        let d = e.boundary_distance(&z).unwrap();
        assert_relative_eq!(d, 1.0 - norm(&z), epsilon = 1e-10);
        let w = e.nearest_boundary_point(&z).unwrap();
        assert_relative_eq!(distance(&z, &w), d, epsilon = 1e-12);
    }

    #[test]
    fn general_domain_cell_rule() {
        let rho = Arc::new(PowerSumRho { coefficients: vec![1.0], exponents: vec![1] });
        let d = DomainSpec::general(rho, vec![(-1.1, 1.1), (-1.1, 1.1)], 0.5, vec![p(0.0, 0.0)]).unwrap();
        let q = d.build_quadrature(16).unwrap();
        assert!((q.total_weight() - PI).abs() < 1e-3);
        assert!(q.nodes.iter().all(|z| d.contains(z)));
        assert_relative_eq!(d.boundary_distance(&[p(0.5, 0.0)]).unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn json_round_trip() {
        let e = DomainSpec::ellipsoid(vec![1.0, 2.0], vec![1, 2]).unwrap();
        let v = e.to_json().unwrap();
        let back = DomainSpec::from_json(&v).unwrap();
        assert_eq!(back.to_json().unwrap(), v);
        assert!(DomainSpec::from_json(&json!({"kind": "torus", "n": 1})).is_err());
    }
}
