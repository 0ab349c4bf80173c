//! Bergman and Kobayashi-Fuks metrics, their curvatures and the canonical
//! invariant, assembled from kernel jets by exact series algebra.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::basis::OrthonormalBasis;
use crate::domain::Point;
use crate::error::{Error, Result};
use crate::jet::{det, table, Series};
use crate::linalg::{hermitian_eigen, hpd_inverse, quadratic, CMat};

/// Relative eigenvalue floor used when inverting metric tensors.
pub const METRIC_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Bergman,
    KobayashiFuks,
}

/// Mixed derivatives `∂^a ∂̄^b K(z)` for `|a|, |b| ≤ order`.
#[derive(Debug, Clone)]
pub struct KernelJet {
    pub z: Point,
    pub order: usize,
    /// Rows and columns indexed by `table(n, order)`.
    pub entries: CMat,
    /// Set when the point lies inside the truncation layer of the basis.
    pub inside_truncation_layer: bool,
}

impl KernelJet {
    /// Builds a jet from a derivative oracle `f(a, b) = ∂^a ∂̄^b K(z)`.
    pub fn from_fn(z: Point, order: usize, mut f: impl FnMut(&[usize], &[usize]) -> C64) -> Self {
        let t = table(z.len(), order);
        let entries = CMat::from_fn(t.len(), t.len(), |i, j| f(&t.list[i], &t.list[j]));
        Self { z, order, entries, inside_truncation_layer: false }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn get(&self, a: &[usize], b: &[usize]) -> C64 {
        let t = table(self.dim(), self.order);
        match (t.index_of(a), t.index_of(b)) {
            (Some(i), Some(j)) => self.entries[(i, j)],
            _ => panic!("multi-index beyond jet order {}", self.order),
        }
    }

    pub fn kernel(&self) -> f64 {
        self.entries[(0, 0)].re
    }

    /// The jet as a bivariate series of bidegree `(order, order)`.
    pub fn series(&self) -> Series {
        let t = table(self.dim(), self.order);
        Series::from_derivatives(self.dim(), self.order, self.order, |a, b| {
            self.entries[(t.index_of(a).unwrap(), t.index_of(b).unwrap())]
        })
    }

    /// Largest `|entry(a,b) - conj(entry(b,a))|`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        crate::linalg::hermitian_defect(&self.entries)
    }
}

/// `∂^a ∂̄^b K(z) = Σ_k ∂^a φ_k(z) conj(∂^b φ_k(z))`, refusing points inside
/// the truncation layer.
pub fn kernel_jet(ob: &OrthonormalBasis, z: &[C64], order: usize) -> Result<KernelJet> {
    ob.check_truncation(z)?;
    kernel_jet_forced(ob, z, order)
}

/// As [`kernel_jet`] without the truncation guard; the jet records whether
/// the guard would have refused.
pub fn kernel_jet_forced(ob: &OrthonormalBasis, z: &[C64], order: usize) -> Result<KernelJet> {
    let phi = ob.eval(z, order)?;
    let entries = phi.transpose() * phi.map(|x| x.conj());
    Ok(KernelJet {
        z: z.to_vec(),
        order,
        entries: crate::linalg::hermitian_part(&entries),
        inside_truncation_layer: !ob.within_truncation(z),
    })
}

/// Jet evaluation honouring an explicit override of the truncation guard.
pub fn kernel_jet_with(ob: &OrthonormalBasis, z: &[C64], order: usize, force: bool) -> Result<KernelJet> {
    if force {
        kernel_jet_forced(ob, z, order)
    } else {
        kernel_jet(ob, z, order)
    }
}

#[derive(Debug, Clone)]
pub struct MetricTensor {
    pub g: CMat,
    pub flavor: Flavor,
    pub z: Point,
}

impl MetricTensor {
    pub fn new(g: CMat, flavor: Flavor, z: Point) -> Self {
        Self { g, flavor, z }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn det(&self) -> f64 {
        self.g.determinant().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.g).0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn hermitian_defect(&self) -> f64 {
        crate::linalg::hermitian_defect(&self.g)
    }

    pub fn length(&self, u: &[C64]) -> f64 {
        metric_length(self, u)
    }
}

/// `τ = sqrt(u^T G conj(u))`.
pub fn metric_length(g: &MetricTensor, u: &[C64]) -> f64 {
    quadratic(&g.g, u).re.max(0.0).sqrt()
}

/// Value and first/second derivatives of a metric field at a point:
/// `dz[γ] = ∂_γ G`, `dzbar[δ] = ∂̄_δ G`, `ddbar[γ][δ] = ∂_γ ∂̄_δ G`.
#[derive(Debug, Clone)]
pub struct MetricDerivatives {
    pub g: CMat,
    pub dz: Vec<CMat>,
    pub dzbar: Vec<CMat>,
    pub ddbar: Vec<Vec<CMat>>,
}

impl MetricDerivatives {
    fn from_series(s: &[Vec<Series>]) -> Self {
        let n = s.len();
        let unit = |j: usize| {
            let mut e = vec![0usize; n];
            e[j] = 1;
            e
        };
        let zero = vec![0usize; n];
        let pick = |a: &[usize], b: &[usize]| CMat::from_fn(n, n, |i, j| s[i][j].derivative(a, b));
        let g = pick(&zero, &zero);
        let dz = (0..n).map(|k| pick(&unit(k), &zero)).collect();
        let dzbar = (0..n).map(|k| pick(&zero, &unit(k))).collect();
        let ddbar = (0..n).map(|k| (0..n).map(|l| pick(&unit(k), &unit(l))).collect()).collect();
        Self { g, dz, dzbar, ddbar }
    }

    /// `R(u) = R_{ᾱβγδ̄} ū_α u_β u_γ ū_δ / τ^4` with
    /// `R_{ᾱβγδ̄} = -∂_γ∂̄_δ G_{βᾱ} + Σ g^{νμ̄} ∂_γ G_{βμ̄} ∂̄_δ G_{νᾱ}`.
    pub fn holomorphic_sectional_curvature(&self, u: &[C64]) -> Result<f64> {
        let n = self.g.nrows();
        let ginv = hpd_inverse(&self.g, METRIC_FLOOR).ok_or(Error::SingularMetric)?;
        let tau2 = quadratic(&self.g, u).re;
        if !(tau2 > 0.0) {
            return Err(Error::SingularMetric);
        }
        let mut r = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                for g in 0..n {
                    for d in 0..n {
                        let w = u[a].conj() * u[b] * u[g] * u[d].conj();
                        if w == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut t = -self.ddbar[g][d][(b, a)];
                        for mu in 0..n {
                            for nu in 0..n {
                                t += ginv[(mu, nu)] * self.dz[g][(b, mu)] * self.dzbar[d][(nu, a)];
                            }
                        }
                        r += t * w;
                    }
                }
            }
        }
        Ok(r.re / (tau2 * tau2))
    }
}

/// Series representations of `K`, `G_B`, `Ric` and `G_KF` about one point.
#[derive(Debug, Clone)]
pub struct MetricPipeline {
    pub z: Point,
    pub kernel: f64,
    pub inside_truncation_layer: bool,
    bergman: Vec<Vec<Series>>,
    ricci: Option<Vec<Vec<Series>>>,
    kf: Option<Vec<Vec<Series>>>,
}

impl MetricPipeline {
    /// Full pipeline; requires a jet of order 3.
    pub fn new(jet: &KernelJet) -> Result<Self> {
        if jet.order < 3 {
            return Err(Error::JetOrderTooLow { have: jet.order, need: 3 });
        }
        Self::build(jet, true)
    }

    /// Bergman metric only; requires a jet of order 1.
    pub fn bergman_only(jet: &KernelJet) -> Result<Self> {
        if jet.order < 1 {
            return Err(Error::JetOrderTooLow { have: jet.order, need: 1 });
        }
        Self::build(jet, false)
    }

    fn build(jet: &KernelJet, full: bool) -> Result<Self> {
        let k = jet.kernel();
        if !(k > 0.0) {
            return Err(Error::NonpositiveKernel(k));
        }
        let n = jet.dim();
        let mut s = jet.series();
        if !full {
            s = s.truncate(1, 1);
        }
        let logk = s.ln();
        let bergman: Vec<Vec<Series>> = (0..n).map(|a| (0..n).map(|b| logk.dz(a).dzbar(b)).collect()).collect();
        let mut out = Self {
            z: jet.z.clone(),
            kernel: k,
            inside_truncation_layer: jet.inside_truncation_layer,
            bergman,
            ricci: None,
            kf: None,
        };
        if full {
            let gb = out.bergman_value();
            let (vals, _) = hermitian_eigen(&gb);
            if !(vals[0] > METRIC_FLOOR * vals[n - 1]) {
                return Err(Error::SingularMetric);
            }
            let logdet = det(&out.bergman).ln();
            let ricci: Vec<Vec<Series>> =
                (0..n).map(|a| (0..n).map(|b| logdet.dz(a).dzbar(b).scale_re(-1.0)).collect()).collect();
            let kf = (0..n)
                .map(|a| (0..n).map(|b| out.bergman[a][b].scale_re((n + 1) as f64).sub(&ricci[a][b])).collect())
                .collect();
            out.ricci = Some(ricci);
            out.kf = Some(kf);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    fn value_of(s: &[Vec<Series>]) -> CMat {
        let n = s.len();
        crate::linalg::hermitian_part(&CMat::from_fn(n, n, |i, j| s[i][j].value()))
    }

    fn bergman_value(&self) -> CMat {
        Self::value_of(&self.bergman)
    }

    pub fn bergman(&self) -> Result<MetricTensor> {
        let g = self.bergman_value();
        let m = hermitian_eigen(&g).0[0];
        if !(m > 0.0) {
            return Err(Error::PositivityViolation(m));
        }
        Ok(MetricTensor::new(g, Flavor::Bergman, self.z.clone()))
    }

    fn full(&self) -> Result<(&Vec<Vec<Series>>, &Vec<Vec<Series>>)> {
        match (&self.ricci, &self.kf) {
            (Some(r), Some(k)) => Ok((r, k)),
            _ => Err(Error::JetOrderTooLow { have: 1, need: 3 }),
        }
    }

    /// `Ric_{αβ̄} = -∂_α ∂̄_β log det G_B`.
    pub fn ricci(&self) -> Result<CMat> {
        Ok(Self::value_of(self.full()?.0))
    }

    /// `G_KF = (n+1) G_B - Ric`.
    pub fn kf(&self) -> Result<MetricTensor> {
        let g = Self::value_of(self.full()?.1);
        let m = hermitian_eigen(&g).0[0];
        if !(m > 0.0) {
            return Err(Error::PositivityViolation(m));
        }
        Ok(MetricTensor::new(g, Flavor::KobayashiFuks, self.z.clone()))
    }

    pub fn metric(&self, flavor: Flavor) -> Result<MetricTensor> {
        match flavor {
            Flavor::Bergman => self.bergman(),
            Flavor::KobayashiFuks => self.kf(),
        }
    }

    /// `Ric(z, u) = Ric(u, ū) / G_B(u, ū)`.
    pub fn ricci_curvature(&self, u: &[C64]) -> Result<f64> {
        let ric = self.ricci()?;
        let gb = self.bergman_value();
        let den = quadratic(&gb, u).re;
        if !(den > 0.0) {
            return Err(Error::SingularMetric);
        }
        Ok(quadratic(&ric, u).re / den)
    }

    /// `J_D = det G_B / K`.
    pub fn canonical_invariant(&self) -> f64 {
        self.bergman_value().determinant().re / self.kernel
    }

    pub fn derivatives(&self, flavor: Flavor) -> Result<MetricDerivatives> {
        match flavor {
            Flavor::Bergman => {
                let (p, q) = self.bergman[0][0].orders();
                if p < 1 || q < 1 {
                    return Err(Error::JetOrderTooLow { have: 1, need: 2 });
                }
                Ok(MetricDerivatives::from_series(&self.bergman))
            }
            Flavor::KobayashiFuks => Ok(MetricDerivatives::from_series(self.full()?.1)),
        }
    }

    pub fn holomorphic_sectional_curvature(&self, flavor: Flavor, u: &[C64]) -> Result<f64> {
        self.derivatives(flavor)?.holomorphic_sectional_curvature(u)
    }
}

pub fn bergman_metric(jet: &KernelJet) -> Result<MetricTensor> {
    MetricPipeline::bergman_only(jet)?.bergman()
}

pub fn bergman_ricci(jet: &KernelJet) -> Result<CMat> {
    MetricPipeline::new(jet)?.ricci()
}

pub fn kf_metric(jet: &KernelJet) -> Result<MetricTensor> {
    MetricPipeline::new(jet)?.kf()
}

pub fn ricci_curvature(jet: &KernelJet, u: &[C64]) -> Result<f64> {
    MetricPipeline::new(jet)?.ricci_curvature(u)
}

pub fn canonical_invariant(jet: &KernelJet) -> Result<f64> {
    Ok(MetricPipeline::bergman_only(jet)?.canonical_invariant())
}

pub fn holomorphic_sectional_curvature(flavor: Flavor, jet: &KernelJet, u: &[C64]) -> Result<f64> {
    if u.iter().all(|x| x.norm() == 0.0) {
        return Err(Error::SingularMetric);
    }
    MetricPipeline::new(jet)?.holomorphic_sectional_curvature(flavor, u)
}

/// Derivatives `a[j][k] = ∂^j ∂̄^k A` of `A = K ∂∂̄K - ∂K ∂̄K`, `j, k ≤ 2`.
#[derive(Debug, Clone, Copy)]
pub struct PotentialJet {
    pub a: [[C64; 3]; 3],
}

impl PotentialJet {
    /// `g_KF = A_{11}/A - A_{10}A_{01}/A^2`.
    pub fn kf_density(&self) -> f64 {
        let a = &self.a;
        (a[1][1] / a[0][0] - a[1][0] * a[0][1] / (a[0][0] * a[0][0])).re
    }

    /// `∂g_KF/∂z`.
    pub fn kf_density_dz(&self) -> C64 {
        let a = &self.a;
        let a0 = a[0][0];
        a[2][1] / a0 - a[1][0] * a[1][1] * 2.0 / (a0 * a0) - a[0][1] * a[2][0] / (a0 * a0)
            + a[0][1] * a[1][0] * a[1][0] * 2.0 / (a0 * a0 * a0)
    }

    /// `-∂∂̄ g_KF`.
    pub fn minus_kf_density_laplacian(&self) -> f64 {
        let a = &self.a;
        let a0 = a[0][0];
        let a2 = a0 * a0;
        let a3 = a2 * a0;
        let (a10, a01, a11) = (a[1][0], a[0][1], a[1][1]);
        let v = -a[2][2] / a0
            + a01 * a[2][1] * 2.0 / a2
            + a10 * a[1][2] * 2.0 / a2
            + a11 * a11 * 2.0 / a2
            + a[2][0] * a[0][2] / a2
            + a10 * a10 * a01 * a01 * 6.0 / (a2 * a2)
            - a01 * a01 * a[2][0] * 2.0 / a3
            - a10 * a10 * a[0][2] * 2.0 / a3
            - a10 * a01 * a11 * 8.0 / a3;
        v.re
    }

    /// `R = -(1/g) ∂∂̄ log g` with `g = g_KF`.
    pub fn gaussian_curvature(&self) -> f64 {
        let g = self.kf_density();
        let dg = self.kf_density_dz();
        (self.minus_kf_density_laplacian() + dg.norm_sqr() / g) / (g * g)
    }
}

pub fn kf_potential_dim1(jet: &KernelJet) -> Result<PotentialJet> {
    if jet.dim() != 1 {
        return Err(Error::DimensionNotOne(jet.dim()));
    }
    if jet.order < 3 {
        return Err(Error::JetOrderTooLow { have: jet.order, need: 3 });
    }
    let k = |p: usize, q: usize| jet.get(&[p], &[q]);
    let binom = |n: usize, r: usize| -> f64 { (0..r).map(|i| (n - i) as f64 / (i + 1) as f64).product() };
    let mut a = [[C64::new(0.0, 0.0); 3]; 3];
    for (j, row) in a.iter_mut().enumerate() {
        for (l, entry) in row.iter_mut().enumerate() {
            // Leibniz rule on K·K_{11} - K_{10}·K_{01}.
            let mut s = C64::new(0.0, 0.0);
            for p in 0..=j {
                for q in 0..=l {
                    let w = binom(j, p) * binom(l, q);
                    s += (k(p, q) * k(j - p + 1, l - q + 1) - k(p + 1, q) * k(j - p, l - q + 1)) * w;
                }
            }
            *entry = s;
        }
    }
    if !(a[0][0].re > 0.0) {
        return Err(Error::NonpositiveKernel(a[0][0].re));
    }
    Ok(PotentialJet { a })
}

/// Gaussian curvature of the Kobayashi-Fuks metric of a planar domain.
pub fn gaussian_curvature_kf(jet: &KernelJet) -> Result<f64> {
    Ok(kf_potential_dim1(jet)?.gaussian_curvature())
}

/// Ricci and sectional curvatures at one point in one direction.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub z: Vec<C64>,
    pub u: Vec<C64>,
    pub ricci_bergman: f64,
    pub hsc_bergman: f64,
    pub hsc_kf: f64,
    pub gaussian_kf: Option<f64>,
    pub inside_truncation_layer: bool,
}

pub fn curvature_report(jet: &KernelJet, u: &[C64]) -> Result<CurvatureReport> {
    let p = MetricPipeline::new(jet)?;
    Ok(CurvatureReport {
        z: jet.z.clone(),
        u: u.to_vec(),
        ricci_bergman: p.ricci_curvature(u)?,
        hsc_bergman: p.holomorphic_sectional_curvature(Flavor::Bergman, u)?,
        hsc_kf: p.holomorphic_sectional_curvature(Flavor::KobayashiFuks, u)?,
        gaussian_kf: if jet.dim() == 1 { Some(gaussian_curvature_kf(jet)?) } else { None },
        inside_truncation_layer: jet.inside_truncation_layer,
    })
}

/// One CSV row of point evaluations.
#[derive(Debug, Clone)]
pub struct PointRecord {
    pub z: Point,
    pub kernel: f64,
    pub det_bergman: f64,
    pub det_kf: f64,
    pub ricci_u: f64,
    pub gaussian_kf: Option<f64>,
    pub inside_truncation_layer: bool,
}

impl PointRecord {
    pub fn evaluate(jet: &KernelJet, u: &[C64]) -> Result<Self> {
        let p = MetricPipeline::new(jet)?;
        Ok(Self {
            z: jet.z.clone(),
            kernel: p.kernel,
            det_bergman: p.bergman()?.det(),
            det_kf: p.kf()?.det(),
            ricci_u: p.ricci_curvature(u)?,
            gaussian_kf: if jet.dim() == 1 { Some(gaussian_curvature_kf(jet)?) } else { None },
            inside_truncation_layer: jet.inside_truncation_layer,
        })
    }
}

/// Writes `{z components, K, det G_B, det G_KF, Ric(u), R_KF, truncated}` rows.
pub fn write_point_csv<W: Write>(records: &[PointRecord], mut out: W) -> std::io::Result<()> {
    let n = records.first().map_or(1, |r| r.z.len());
    let mut header: Vec<String> = Vec::new();
    for j in 1..=n {
        header.push(format!("re_z{j}"));
        header.push(format!("im_z{j}"));
    }
    for h in ["kernel", "det_bergman", "det_kf", "ricci_u", "gaussian_kf", "truncated"] {
        header.push(h.into());
    }
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut row: Vec<String> = Vec::new();
        for zj in &r.z {
            row.push(crate::fmt17(zj.re));
            row.push(crate::fmt17(zj.im));
        }
        row.push(crate::fmt17(r.kernel));
        row.push(crate::fmt17(r.det_bergman));
        row.push(crate::fmt17(r.det_kf));
        row.push(crate::fmt17(r.ricci_u));
        row.push(r.gaussian_kf.map_or_else(String::new, crate::fmt17));
        row.push(r.inside_truncation_layer.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `u^T M conj(u)` as a real number, for Hermitian `M`.
pub fn hermitian_form(m: &CMat, u: &[C64]) -> f64 {
    quadratic(m, u).re
}
