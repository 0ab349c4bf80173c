use std::sync::Arc;

use kfm_core::basis::{BasisSpec, OrthonormalBasis};
use kfm_core::domain::{DomainSpec, Point};
use kfm_core::extremal::{
    curvature_from_i, i_domain, i_double_prime, i_prime, localization_experiment, ricci_from_i, write_localization_csv,
};
use kfm_core::fmt17;
use kfm_core::geodesic::{circle_length_minimum, find_closed_geodesic, write_loop_csv, RiemannianField};
use kfm_core::linalg::CMat;
use kfm_core::metrics::{
    curvature_report, gaussian_curvature_kf, hermitian_form, kernel_jet_with, Flavor, MetricPipeline,
};
use kfm_core::oracle::oracle_metric;
use kfm_core::scaling::{
    asymptotics_experiment, geometric_schedule, schedule_within_truncation, write_asymptotics_csv, MetricSource,
    NormalizingChart,
};
use kfm_core::verify::{run_all, run_criterion, title, CriterionReport, CRITERIA};
use num_complex::Complex64 as C64;

use crate::config::{vector_or_axis, MetricChoice, RunConfig};
use crate::error::CliError;

pub struct Options {
    pub seed: u64,
    pub force: bool,
}

/// Named output tables plus a short human summary.
pub struct Output {
    pub files: Vec<(&'static str, String)>,
    pub summary: Vec<String>,
    pub failed: Option<String>,
}

impl Output {
    fn table(name: &'static str, body: String) -> Self {
        Self { files: vec![(name, body)], summary: Vec::new(), failed: None }
    }
}

fn csv<F>(f: F) -> Result<String, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn setup(cfg: &RunConfig) -> Result<(DomainSpec, OrthonormalBasis, Vec<Point>, Vec<C64>), CliError> {
    let d = cfg.domain()?;
    let ob = OrthonormalBasis::build(&d, &cfg.basis_spec(&d))?;
    let n = d.dim();
    Ok((d, ob, cfg.points(n)?, cfg.vector(n)?))
}

fn z_header(n: usize) -> Vec<String> {
    (1..=n).flat_map(|j| [format!("re_z{j}"), format!("im_z{j}")]).collect()
}

fn z_cols(z: &[C64]) -> Vec<String> {
    z.iter().flat_map(|x| [fmt17(x.re), fmt17(x.im)]).collect()
}

fn matrix_header(prefix: &str, n: usize) -> Vec<String> {
    let mut h = Vec::new();
    for a in 1..=n {
        for b in 1..=n {
            h.push(format!("{prefix}_{a}{b}_re"));
            h.push(format!("{prefix}_{a}{b}_im"));
        }
    }
    h
}

fn matrix_cols(g: &CMat) -> Vec<String> {
    let n = g.nrows();
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            out.push(fmt17(g[(a, b)].re));
            out.push(fmt17(g[(a, b)].im));
        }
    }
    out
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn join(rows: Vec<Vec<String>>) -> String {
    rows.into_iter().map(|r| r.join(",") + "\n").collect()
}

pub fn metric(cfg: &RunConfig, o: &Options) -> Result<Output, CliError> {
    let (d, ob, points, u) = setup(cfg)?;
    let n = d.dim();
    let mut header = z_header(n);
    header.extend(["kernel", "tau_bergman", "tau_kf", "det_bergman", "det_kf"].map(String::from));
    header.extend(matrix_header("g_bergman", n));
    header.extend(matrix_header("g_kf", n));
    header.push("truncated".into());
    let mut rows = vec![header];
    for z in &points {
        let jet = kernel_jet_with(&ob, z, 3, o.force)?;
        let p = MetricPipeline::new(&jet)?;
        let (gb, gk) = (p.bergman()?, p.kf()?);
        let mut row = z_cols(z);
        row.push(fmt17(p.kernel));
        row.push(fmt17(hermitian_form(&gb.g, &u).sqrt()));
        row.push(fmt17(hermitian_form(&gk.g, &u).sqrt()));
        row.push(fmt17(gb.det()));
        row.push(fmt17(gk.det()));
        row.extend(matrix_cols(&gb.g));
        row.extend(matrix_cols(&gk.g));
        row.push(jet.inside_truncation_layer.to_string());
        rows.push(row);
    }
    Ok(Output::table("metric.csv", join(rows)))
}

pub fn curvature(cfg: &RunConfig, o: &Options) -> Result<Output, CliError> {
    let (d, ob, points, u) = setup(cfg)?;
    let mut header = z_header(d.dim());
    header.extend(["ricci_u", "hsc_bergman", "hsc_kf", "gaussian_kf", "truncated"].map(String::from));
    let mut rows = vec![header];
    for z in &points {
        let jet = kernel_jet_with(&ob, z, 3, o.force)?;
        let r = curvature_report(&jet, &u)?;
        let mut row = z_cols(z);
        row.extend([fmt17(r.ricci_bergman), fmt17(r.hsc_bergman), fmt17(r.hsc_kf), opt(r.gaussian_kf)]);
        row.push(r.inside_truncation_layer.to_string());
        rows.push(row);
    }
    Ok(Output::table("curvature.csv", join(rows)))
}

/// `I`, `I'`, `I''` with the residuals of the identities they satisfy.
pub fn extremal(cfg: &RunConfig, o: &Options) -> Result<Output, CliError> {
    let (d, ob, points, u) = setup(cfg)?;
    let n = d.dim();
    let mut header = z_header(n);
    header.extend(
        [
            "i_domain",
            "i_domain_sup",
            "i_prime",
            "i_double_prime",
            "tau2_kf_residual",
            "ricci_residual",
            "curvature_residual",
            "truncated",
        ]
        .map(String::from),
    );
    let mut rows = vec![header];
    for z in &points {
        let jet = kernel_jet_with(&ob, z, 3, o.force)?;
        let p = MetricPipeline::new(&jet)?;
        let i = i_domain(&ob, &jet, z, &u)?;
        let tau2 = hermitian_form(&p.kf()?.g, &u);
        let tau_b = hermitian_form(&p.bergman()?.g, &u).sqrt();
        let tau_res = (tau2 - i.value / p.kernel).abs() / tau2;
        let ric_res = (p.ricci_curvature(&u)? - ricci_from_i(i.value, tau_b, p.kernel, n)).abs();
        let (i1, i2, curv_res) = if n == 1 {
            let i1 = i_prime(&ob, &jet, z)?.value;
            let i2 = i_double_prime(&ob, &jet, z)?.value;
            let r = (gaussian_curvature_kf(&jet)? - curvature_from_i(i1, i2, p.kernel)).abs();
            (Some(i1), Some(i2), Some(r))
        } else {
            (None, None, None)
        };
        let mut row = z_cols(z);
        row.extend([
            fmt17(i.value),
            fmt17(i.sup_value),
            opt(i1),
            opt(i2),
            fmt17(tau_res),
            fmt17(ric_res),
            opt(curv_res),
        ]);
        row.push(jet.inside_truncation_layer.to_string());
        rows.push(row);
    }
    Ok(Output::table("extremal.csv", join(rows)))
}

pub fn asymptotics(cfg: &RunConfig, o: &Options) -> Result<Output, CliError> {
    let d = cfg.domain()?;
    let n = d.dim();
    let a = &cfg.asymptotics;
    let p0 = vector_or_axis(a.p0.as_deref(), n, n - 1)?;
    let u = vector_or_axis(a.u.as_deref(), n, n - 1)?;
    let chart = NormalizingChart::for_domain(&d, &p0)?;
    let use_oracle = match a.metric {
        MetricChoice::Basis => false,
        MetricChoice::Oracle => true,
        MetricChoice::Auto => {
            let inner: Vec<C64> = p0.iter().map(|x| x * 0.8).collect();
            oracle_metric(&d, Flavor::KobayashiFuks, &inner).is_ok()
        }
    };
    let basis = if use_oracle { None } else { Some(OrthonormalBasis::build(&d, &cfg.basis_spec(&d))?) };
    let deltas = match (&a.deltas, &basis) {
        (Some(v), _) => v.clone(),
        (None, Some(ob)) if !o.force => {
            schedule_within_truncation(&chart, ob, &geometric_schedule(0.2, 1e-3), a.approach)?
        }
        (None, _) => geometric_schedule(0.2, 1e-3),
    };
    if deltas.is_empty() {
        return Err(CliError::Config(
            "no step of the schedule lies outside the truncation layer; raise the basis degree, \
             use the oracle metric or pass --force-truncation"
                .into(),
        ));
    }
    let source = match &basis {
        Some(ob) => MetricSource::Basis(ob),
        None => MetricSource::Oracle,
    };
    let recs = asymptotics_experiment(&d, &p0, &u, &deltas, source, a.approach, o.force)?;
    let body = csv(|w| write_asymptotics_csv(&recs, w))?;
    let mut out = Output::table("asymptotics.csv", body);
    if let Some(last) = recs.last() {
        let errs: Vec<String> =
            last.rel_err.iter().map(|e| e.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into())).collect();
        out.summary.push(format!("final delta {:.4e}: rel err {}", last.delta, errs.join(" ")));
    }
    Ok(out)
}

pub fn localize(cfg: &RunConfig, o: &Options) -> Result<Output, CliError> {
    let l = &cfg.localization;
    if !(l.cut > l.inner_radius && l.cut < 1.0) {
        return Err(CliError::Config(format!("cut {} must lie in ({}, 1)", l.cut, l.inner_radius)));
    }
    let big = OrthonormalBasis::build(&DomainSpec::annulus(l.inner_radius)?, &BasisSpec::laurent(l.degree))?;
    let local = OrthonormalBasis::build(&DomainSpec::circular_segment(l.cut)?, &BasisSpec::arnoldi(l.degree))?;
    let recs = localization_experiment(&big, &local, C64::new(1.0, 0.0), &l.deltas, o.force)?;
    Ok(Output::table("localization.csv", csv(|w| write_localization_csv(&recs, w))?))
}

pub fn geodesic(cfg: &RunConfig, o: &Options) -> Result<Output, CliError> {
    let g = &cfg.geodesic;
    let d = DomainSpec::annulus(g.inner_radius)?;
    let field = match g.metric {
        MetricChoice::Oracle | MetricChoice::Auto => RiemannianField::radial_oracle(&d)?,
        MetricChoice::Basis => {
            let ob = OrthonormalBasis::build(&d, &BasisSpec::laurent(g.degree))?;
            RiemannianField::from_basis(Arc::new(ob), o.force)
        }
    };
    let lp = find_closed_geodesic(&field, g.winding, g.nodes)?;
    let mut out = Output::table("geodesic.csv", csv(|w| write_loop_csv(&lp, w))?);
    let (mean, dev) = lp.radius_stats();
    out.summary.push(format!(
        "winding {} length {} (interpolant {}) after {} iterations, radius {mean:.9} spread {dev:.2e}",
        lp.winding,
        fmt17(lp.length),
        fmt17(lp.smooth_length),
        lp.iterations
    ));
    let lo = g.inner_radius * 1.05;
    if let Ok((rho, l)) = circle_length_minimum(&field, lo, 0.99) {
        out.summary.push(format!("shortest circle: radius {rho:.9}, length {}", fmt17(l * g.winding.abs() as f64)));
    }
    Ok(out)
}

pub fn verify(cfg: &RunConfig, o: &Options) -> Result<Output, CliError> {
    let ids = &cfg.verify.criteria;
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA) {
        return Err(CliError::Config(format!("no criterion {bad} (1..={CRITERIA})")));
    }
    let reports: Vec<CriterionReport> = if ids.is_empty() {
        run_all(o.seed)
    } else {
        ids.iter()
            .map(|&id| {
                run_criterion(id, o.seed).unwrap_or_else(|e| CriterionReport {
                    id,
                    title: title(id),
                    passed: false,
                    details: vec![format!("[FAIL] numerical breakdown: {e}")],
                })
            })
            .collect()
    };
    let mut out =
        Output::table("verify.json", serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n");
    for r in &reports {
        out.summary.push(r.summary());
        out.summary.extend(r.details.iter().map(|d| format!("    {d}")));
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if !failed.is_empty() {
        out.failed = Some(format!("criteria {}", failed.join(", ")));
    }
    Ok(out)
}
