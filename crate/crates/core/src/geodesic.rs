//! Geodesics of the Kobayashi-Fuks metric as a Riemannian metric on
//! `R^{2n}`, closed-loop search on the annulus, and the domination probe.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::basis::OrthonormalBasis;
use crate::domain::{DomainKind, DomainSpec, Point};
use crate::error::{Error, Result};
use crate::fmt17;
use crate::linalg::real_form;
use crate::metrics::{hermitian_form, kernel_jet_with, MetricPipeline};
use crate::oracle::RadialKernel;

pub type RMat = DMatrix<f64>;

/// Gradient tolerance of the closed-loop search.
pub const LOOP_GRADIENT_TOL: f64 = 1e-8;
pub const LOOP_MAX_ITERATIONS: usize = 100_000;

/// `(Re z, Im z)`.
pub fn to_real(z: &[C64]) -> Vec<f64> {
    z.iter().map(|x| x.re).chain(z.iter().map(|x| x.im)).collect()
}

pub fn to_complex(x: &[f64]) -> Point {
    let n = x.len() / 2;
    (0..n).map(|i| C64::new(x[i], x[n + i])).collect()
}

type MetricFn = dyn Fn(&[C64]) -> Result<crate::linalg::CMat> + Send + Sync;

#[derive(Clone)]
enum Source {
    Euclidean,
    Radial(RadialKernel),
    Basis { ob: Arc<OrthonormalBasis>, force: bool },
    Custom(Arc<MetricFn>),
}

/// `z ↦` real form of `G_KF(z)`, so that `x^T g x = 2 τ²_KF`.
#[derive(Clone)]
pub struct RiemannianField {
    n: usize,
    domain: Option<DomainSpec>,
    source: Source,
}

impl std::fmt::Debug for RiemannianField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.source {
            Source::Euclidean => "euclidean",
            Source::Radial(_) => "radial",
            Source::Basis { .. } => "basis",
            Source::Custom(_) => "custom",
        };
        f.debug_struct("RiemannianField").field("n", &self.n).field("source", &kind).finish()
    }
}

impl RiemannianField {
    pub fn euclidean(n: usize) -> Self {
        Self { n, domain: None, source: Source::Euclidean }
    }

    /// Closed-form radial density on the disc or an annulus.
    pub fn radial_oracle(d: &DomainSpec) -> Result<Self> {
        Ok(Self { n: 1, domain: Some(d.clone()), source: Source::Radial(RadialKernel::for_domain(d)?) })
    }

    /// Density from the truncated kernel of `ob`.
    pub fn from_basis(ob: Arc<OrthonormalBasis>, force: bool) -> Self {
        let d = ob.domain().clone();
        Self { n: d.dim(), domain: Some(d), source: Source::Basis { ob, force } }
    }

    /// Arbitrary Hermitian metric field on `d`.
    pub fn custom(d: DomainSpec, g: Arc<MetricFn>) -> Self {
        Self { n: d.dim(), domain: Some(d), source: Source::Custom(g) }
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn domain(&self) -> Option<&DomainSpec> {
        self.domain.as_ref()
    }

    pub fn admissible(&self, x: &[f64]) -> bool {
        let z = to_complex(x);
        match (&self.domain, &self.source) {
            (None, _) => true,
            (Some(_), Source::Basis { ob, force }) => ob.domain().contains(&z) && (*force || ob.within_truncation(&z)),
            (Some(d), _) => d.contains(&z),
        }
    }

    /// Finite-difference step `max(1e-5, 1e-3 δ_D(z))`.
    pub fn step(&self, x: &[f64]) -> Result<f64> {
        match &self.domain {
            None => Ok(1e-5),
            Some(d) => Ok((1e-3 * d.boundary_distance(&to_complex(x))?).max(1e-5)),
        }
    }

    pub fn metric(&self, x: &[f64]) -> Result<RMat> {
        if !self.admissible(x) {
            return Err(Error::PointOutsideDomain);
        }
        let z = to_complex(x);
        Ok(match &self.source {
            Source::Euclidean => RMat::identity(2 * self.n, 2 * self.n),
            Source::Radial(rk) => RMat::identity(2, 2) * (2.0 * rk.profiles(z[0].norm_sqr()).kf),
            Source::Basis { ob, force } => {
                let jet = kernel_jet_with(ob, &z, 3, *force)?;
                real_form(&MetricPipeline::new(&jet)?.kf()?.g)
            }
            Source::Custom(f) => real_form(&f(&z)?),
        })
    }

    /// `∂g/∂x_k` for each real coordinate.
    pub fn metric_gradient(&self, x: &[f64]) -> Result<Vec<RMat>> {
        let m = 2 * self.n;
        match &self.source {
            Source::Euclidean => Ok(vec![RMat::zeros(m, m); m]),
            Source::Radial(rk) => {
                if !self.admissible(x) {
                    return Err(Error::PointOutsideDomain);
                }
                let t = x[0] * x[0] + x[1] * x[1];
                let d = rk.profiles(t).kf_dt;
                Ok((0..2).map(|k| RMat::identity(2, 2) * (4.0 * d * x[k])).collect())
            }
            _ => {
                let h = self.step(x)?;
                (0..m)
                    .map(|k| {
                        let mut a = x.to_vec();
                        let mut b = x.to_vec();
                        a[k] += h;
                        b[k] -= h;
                        if !self.admissible(&a) || !self.admissible(&b) {
                            return Err(Error::NearBoundary);
                        }
                        Ok((self.metric(&a)? - self.metric(&b)?) / (2.0 * h))
                    })
                    .collect()
            }
        }
    }

    /// `Γ^k_{ij}` of the Levi-Civita connection.
    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        let m = 2 * self.n;
        let g = self.metric(x)?;
        let ginv = g.clone().try_inverse().ok_or(Error::SingularMetric)?;
        let dg = self.metric_gradient(x)?;
        let mut data = vec![0.0; m * m * m];
        for i in 0..m {
            for j in i..m {
                // Γ_{l,ij} = ½(∂_i g_jl + ∂_j g_il - ∂_l g_ij).
                let lower: Vec<f64> = (0..m).map(|l| 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])).collect();
                for k in 0..m {
                    let v: f64 = (0..m).map(|l| ginv[(k, l)] * lower[l]).sum();
                    data[(k * m + i) * m + j] = v;
                    data[(k * m + j) * m + i] = v;
                }
            }
        }
        Ok(Christoffel { dim: m, data })
    }

    /// `ẍ = -Γ(ẋ, ẋ)`.
    fn acceleration(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let gamma = self.christoffel(x)?;
        let m = gamma.dim;
        Ok((0..m)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        s += gamma.get(k, i, j) * v[i] * v[j];
                    }
                }
                -s
            })
            .collect())
    }

    /// `ẋ^T g ẋ`.
    pub fn energy(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let g = self.metric(x)?;
        let v = DVector::from_column_slice(v);
        Ok((v.transpose() * g * &v)[(0, 0)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    pub dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl Trajectory {
    /// `max |E(t) - E(0)| / E(0)`.
    pub fn energy_drift(&self, field: &RiemannianField) -> Result<f64> {
        let e0 = field.energy(&self.positions[0], &self.velocities[0])?;
        let mut worst: f64 = 0.0;
        for (x, v) in self.positions.iter().zip(&self.velocities) {
            worst = worst.max((field.energy(x, v)? - e0).abs());
        }
        Ok(worst / e0.abs().max(f64::MIN_POSITIVE))
    }
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(p, q)| q + a * p).collect()
}

/// Classic fourth-order Runge-Kutta on `(x, ẋ)`.
pub fn integrate_geodesic(field: &RiemannianField, x0: &[f64], v0: &[f64], t: f64, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidDomain("geodesic integration needs at least one step".into()));
    }
    if !field.admissible(x0) {
        return Err(Error::PointOutsideDomain);
    }
    let h = t / steps as f64;
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut out = Trajectory { times: vec![0.0], positions: vec![x.clone()], velocities: vec![v.clone()] };
    for s in 0..steps {
        let stage = |x: &[f64], v: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
            if !field.admissible(x) {
                return Err(Error::TrajectoryExitsRegion(s + 1));
            }
            Ok((
                v.to_vec(),
                field.acceleration(x, v).map_err(|e| match e {
                    Error::NearBoundary | Error::PointOutsideDomain | Error::TruncationRadiusExceeded { .. } => {
                        Error::TrajectoryExitsRegion(s + 1)
                    }
                    other => other,
                })?,
            ))
        };
        let (k1x, k1v) = stage(&x, &v)?;
        let (k2x, k2v) = stage(&axpy(0.5 * h, &k1x, &x), &axpy(0.5 * h, &k1v, &v))?;
        let (k3x, k3v) = stage(&axpy(0.5 * h, &k2x, &x), &axpy(0.5 * h, &k2v, &v))?;
        let (k4x, k4v) = stage(&axpy(h, &k3x, &x), &axpy(h, &k3v, &v))?;
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        if !field.admissible(&x) {
            return Err(Error::TrajectoryExitsRegion(s + 1));
        }
        out.times.push((s + 1) as f64 * h);
        out.positions.push(x.clone());
        out.velocities.push(v.clone());
    }
    Ok(out)
}

/// Closed polyline in the domain.
#[derive(Debug, Clone, Serialize)]
pub struct LoopCandidate {
    pub nodes: Vec<Vec<f64>>,
    pub winding: i64,
    pub energy: f64,
    /// Polyline length.
    pub length: f64,
    /// Length of the trigonometric interpolant.
    pub smooth_length: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LoopCandidate {
    /// Mean and maximum deviation of `|z|` over the nodes.
    pub fn radius_stats(&self) -> (f64, f64) {
        let radii: Vec<f64> = self.nodes.iter().map(|x| (x[0] * x[0] + x[1] * x[1]).sqrt()).collect();
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        (mean, radii.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max))
    }
}

/// Winding number of a planar closed polyline about the origin.
pub fn winding_number(nodes: &[Vec<f64>]) -> i64 {
    let m = nodes.len();
    let mut total = 0.0;
    for i in 0..m {
        let a = &nodes[i];
        let b = &nodes[(i + 1) % m];
        let d = b[1].atan2(b[0]) - a[1].atan2(a[0]);
        total += (d + PI).rem_euclid(2.0 * PI) - PI;
    }
    (total / (2.0 * PI)).round() as i64
}

fn segment(field: &RiemannianField, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
    let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    if !field.admissible(&mid) {
        return Err(Error::PointOutsideDomain);
    }
    Ok((mid, d))
}

fn quad_form(g: &RMat, d: &[f64]) -> f64 {
    let v = DVector::from_column_slice(d);
    (v.transpose() * g * &v)[(0, 0)]
}

/// `Σ τ(mid_i)(Δ_i)` with `τ² = ½ Δ^T g Δ`.
pub fn loop_length(field: &RiemannianField, nodes: &[Vec<f64>]) -> Result<f64> {
    let m = nodes.len();
    let mut total = 0.0;
    for i in 0..m {
        let (mid, d) = segment(field, &nodes[i], &nodes[(i + 1) % m])?;
        total += (0.5 * quad_form(&field.metric(&mid)?, &d)).sqrt();
    }
    Ok(total)
}

/// Derivative matrix of the trigonometric interpolant through `m` equally
/// spaced samples of a 1-periodic function (`m` even).
fn periodic_derivative_matrix(m: usize) -> RMat {
    RMat::from_fn(m, m, |k, j| {
        if k == j {
            0.0
        } else {
            let d = k as f64 - j as f64;
            let sign = if (k + j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * PI / (PI * d / m as f64).tan()
        }
    })
}

/// Velocities `x'(s_k)` of the trigonometric interpolant of the loop.
fn loop_velocities(d: &RMat, nodes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = nodes.len();
    let dim = nodes[0].len();
    (0..m).map(|k| (0..dim).map(|a| (0..m).map(|j| d[(k, j)] * nodes[j][a]).sum()).collect()).collect()
}

/// `∫₀¹ τ(x'(s)) ds` on the trigonometric interpolant of the nodes.
pub fn interpolant_length(field: &RiemannianField, nodes: &[Vec<f64>]) -> Result<f64> {
    let m = nodes.len();
    let v = loop_velocities(&periodic_derivative_matrix(m), nodes);
    let mut total = 0.0;
    for (x, vk) in nodes.iter().zip(&v) {
        total += (0.5 * quad_form(&field.metric(x)?, vk)).sqrt();
    }
    Ok(total / m as f64)
}

/// `∫₀¹ τ²(x'(s)) ds` on the trigonometric interpolant, by the trapezoidal
/// rule at the nodes, and its gradient.
fn loop_energy(field: &RiemannianField, d: &RMat, nodes: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let m = nodes.len();
    let dim = nodes[0].len();
    let v = loop_velocities(d, nodes);
    let mut e = 0.0;
    let mut grad = vec![vec![0.0; dim]; m];
    let mut gv = Vec::with_capacity(m);
    for k in 0..m {
        let g = field.metric(&nodes[k])?;
        let dg = field.metric_gradient(&nodes[k])?;
        let w = &g * DVector::from_column_slice(&v[k]);
        e += 0.5 * v[k].iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        for a in 0..dim {
            grad[k][a] += 0.5 * quad_form(&dg[a], &v[k]) / m as f64;
        }
        gv.push(w);
    }
    for j in 0..m {
        for a in 0..dim {
            grad[j][a] += (0..m).map(|k| d[(k, j)] * gv[k][a]).sum::<f64>() / m as f64;
        }
    }
    Ok((e, grad))
}

fn flat_dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum()
}

/// Energy descent over loops in the winding class `w` of the annulus.
pub fn find_closed_geodesic(field: &RiemannianField, winding: i64, m: usize) -> Result<LoopCandidate> {
    let inner = match field.domain().map(|d| d.kind()) {
        Some(DomainKind::Annulus { inner_radius }) => *inner_radius,
        _ => return Err(Error::UnsupportedKind("closed-geodesic search needs an annulus".into())),
    };
    if winding == 0 {
        return Err(Error::TrivialClass);
    }
    let domain = field.domain().cloned().expect("annulus domain");
    let r0 = 0.5 * (inner + 1.0);
    let mut x: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            let a = 2.0 * PI * winding as f64 * k as f64 / m as f64;
            vec![r0 * a.cos(), r0 * a.sin()]
        })
        .collect();
    if m < 4 || m % 2 == 1 {
        return Err(Error::InvalidDomain(format!("loop needs an even node count of at least 4, got {m}")));
    }
    let dmat = periodic_derivative_matrix(m);
    let (mut e, mut g) = loop_energy(field, &dmat, &x)?;
    let mut alpha = 1e-3;
    let mut gnorm = flat_dot(&g, &g).sqrt();
    let mut it = 0;
    while gnorm >= LOOP_GRADIENT_TOL {
        if it >= LOOP_MAX_ITERATIONS {
            return Err(Error::NotConverged(gnorm));
        }
        it += 1;
        // Each node moves at most half its distance to either boundary circle.
        let mut scale: f64 = 1.0;
        for (xi, gi) in x.iter().zip(&g) {
            let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let room = 0.5 * (r - inner).min(1.0 - r);
            let step = alpha * (gi[0] * gi[0] + gi[1] * gi[1]).sqrt();
            if step > room {
                scale = scale.min(room / step);
            }
        }
        let next: Vec<Vec<f64>> =
            x.iter().zip(&g).map(|(xi, gi)| xi.iter().zip(gi).map(|(p, q)| p - scale * alpha * q).collect()).collect();
        let (e1, g1) = loop_energy(field, &dmat, &next)?;
        let s: Vec<Vec<f64>> =
            next.iter().zip(&x).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()).collect();
        let y: Vec<Vec<f64>> = g1.iter().zip(&g).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()).collect();
        let sy = flat_dot(&s, &y);
        alpha = if sy > 0.0 { flat_dot(&s, &s) / sy } else { alpha * 0.5 };
        x = next;
        e = e1;
        g = g1;
        gnorm = flat_dot(&g, &g).sqrt();
    }
    debug_assert!(x.iter().all(|p| domain.contains(&to_complex(p))));
    let length = loop_length(field, &x)?;
    let smooth_length = interpolant_length(field, &x)?;
    Ok(LoopCandidate {
        winding: winding_number(&x),
        nodes: x,
        energy: e,
        length,
        smooth_length,
        gradient_norm: gnorm,
        iterations: it,
        converged: true,
    })
}

/// Golden-section minimum of `L(ρ) = 2πρ τ(ρ)` over circles `|z| = ρ`.
pub fn circle_length_minimum(field: &RiemannianField, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let length = |rho: f64| -> Result<f64> {
        let g = field.metric(&[rho, 0.0])?;
        Ok(2.0 * PI * rho * (0.5 * g[(1, 1)]).sqrt())
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (length(c)?, length(d)?);
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = length(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = length(d)?;
        }
    }
    let rho = 0.5 * (a + b);
    Ok((rho, length(rho)?))
}

/// Geodesic started at `node` with the loop's interpolated velocity and
/// integrated over one period with `substeps` RK4 steps per node interval;
/// returns `max_k |x(k/m) - x_{node+k}|`.
pub fn closure_defect(field: &RiemannianField, lp: &LoopCandidate, node: usize, substeps: usize) -> Result<f64> {
    let m = lp.nodes.len();
    let x0 = lp.nodes[node % m].clone();
    let v0 = loop_velocities(&periodic_derivative_matrix(m), &lp.nodes)[node % m].clone();
    let traj = integrate_geodesic(field, &x0, &v0, 1.0, m * substeps.max(1))?;
    let mut worst: f64 = 0.0;
    for k in 0..=m {
        let p = &traj.positions[k * substeps.max(1)];
        let q = &lp.nodes[(node + k) % m];
        worst = worst.max(p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
    }
    Ok(worst)
}

pub fn write_loop_csv<W: Write>(lp: &LoopCandidate, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "# winding={},length={},smooth_length={},converged={}",
        lp.winding,
        fmt17(lp.length),
        fmt17(lp.smooth_length),
        lp.converged
    )?;
    writeln!(out, "k,re_z,im_z")?;
    for (k, x) in lp.nodes.iter().enumerate() {
        writeln!(out, "{},{},{}", k, fmt17(x[0]), fmt17(x[1]))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationRecord {
    pub z: Point,
    pub u: Vec<C64>,
    pub boundary_distance: f64,
    /// `τ_KF / τ_B`.
    pub ratio: f64,
    /// `√(n + 1 - Ric(u))`.
    pub ratio_from_ricci: f64,
    pub inside_truncation_layer: bool,
}

/// `τ_KF/τ_B` at each sample; the empirical constant is the infimum.
pub fn domination_probe(
    ob: &OrthonormalBasis,
    samples: &[(Point, Vec<C64>)],
    force: bool,
) -> Result<Vec<DominationRecord>> {
    let n = ob.domain().dim() as f64;
    samples
        .iter()
        .map(|(z, u)| {
            let jet = kernel_jet_with(ob, z, 3, force)?;
            let p = MetricPipeline::new(&jet)?;
            let tb = hermitian_form(&p.bergman()?.g, u);
            let tk = hermitian_form(&p.kf()?.g, u);
            let ric = p.ricci_curvature(u)?;
            Ok(DominationRecord {
                z: z.clone(),
                u: u.clone(),
                boundary_distance: ob.domain().boundary_distance(z)?,
                ratio: (tk / tb).sqrt(),
                ratio_from_ricci: (n + 1.0 - ric).sqrt(),
                inside_truncation_layer: jet.inside_truncation_layer,
            })
        })
        .collect()
}

pub fn empirical_domination_constant(records: &[DominationRecord]) -> f64 {
    records.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min)
}
