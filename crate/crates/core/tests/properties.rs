use std::sync::OnceLock;

use kfm_core::basis::{BasisSpec, OrthonormalBasis};
use kfm_core::domain::DomainSpec;
use kfm_core::extremal::{i_domain, i_double_prime, i_prime};
use kfm_core::linalg::CMat;
use kfm_core::metrics::{gaussian_curvature_kf, kernel_jet, Flavor, MetricPipeline};
use kfm_core::oracle::{oracle_metric, transformation_residual, Biholomorphism, DiscMobius, LinearMap};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn disc_basis() -> &'static OrthonormalBasis {
    static B: OnceLock<OrthonormalBasis> = OnceLock::new();
    B.get_or_init(|| OrthonormalBasis::build(&DomainSpec::disc(), &BasisSpec::monomial(1, 60)).unwrap())
}

fn ball_basis() -> &'static OrthonormalBasis {
    static B: OnceLock<OrthonormalBasis> = OnceLock::new();
    B.get_or_init(|| OrthonormalBasis::build(&DomainSpec::ball(2).unwrap(), &BasisSpec::monomial(2, 40)).unwrap())
}

fn annulus_basis() -> &'static OrthonormalBasis {
    static B: OnceLock<OrthonormalBasis> = OnceLock::new();
    B.get_or_init(|| OrthonormalBasis::build(&DomainSpec::annulus(0.2).unwrap(), &BasisSpec::laurent(60)).unwrap())
}

fn ellipsoid_basis() -> &'static OrthonormalBasis {
    static B: OnceLock<OrthonormalBasis> = OnceLock::new();
    B.get_or_init(|| {
        let d = DomainSpec::ellipsoid(vec![1.0, 2.0], vec![1, 2]).unwrap();
        OrthonormalBasis::build(&d, &BasisSpec::monomial(2, 30)).unwrap()
    })
}

fn polar(r: f64, t: f64) -> C64 {
    C64::from_polar(r, t)
}

fn planar_point() -> impl Strategy<Value = C64> {
    (0.0..0.7f64, 0.0..std::f64::consts::TAU).prop_map(|(r, t)| polar(r, t))
}

/// Point of the 2-ball of radius < 0.7.
fn ball_point() -> impl Strategy<Value = Vec<C64>> {
    (0.0..0.7f64, 0.0..1.0f64, 0.0..6.3f64, 0.0..6.3f64)
        .prop_map(|(r, s, a, b)| vec![polar(r * s.sqrt(), a), polar(r * (1.0 - s).sqrt(), b)])
}

fn unit_vector() -> impl Strategy<Value = Vec<C64>> {
    (0.0..1.0f64, 0.0..6.3f64, 0.0..6.3f64).prop_map(|(s, a, b)| vec![polar(s.sqrt(), a), polar((1.0 - s).sqrt(), b)])
}

fn hermitian(g: &CMat) -> bool {
    (g - g.adjoint()).iter().all(|x| x.norm() < 1e-10 * g.iter().map(|y| y.norm()).fold(1.0, f64::max))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nearest_point_realizes_boundary_distance(r in 0.05..0.95f64, t in 0.0..6.3f64) {
        for d in [DomainSpec::disc(), DomainSpec::annulus(0.2).unwrap()] {
            let z = [polar(r.max(0.25), t)];
            let p = d.nearest_boundary_point(&z).unwrap();
            prop_assert!(((z[0] - p[0]).norm() - d.boundary_distance(&z).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn nearest_point_on_ball_and_ellipsoid(z in ball_point()) {
        let z: Vec<C64> = z.iter().map(|x| x * 1.3).collect();
        for d in [DomainSpec::ball(2).unwrap(), DomainSpec::ellipsoid(vec![1.0, 1.0], vec![1, 2]).unwrap()] {
            if !d.contains(&z) || d.boundary_distance(&z).unwrap() >= d.tubular_radius() {
                continue;
            }
            let p = d.nearest_boundary_point(&z).map_err(|e| TestCaseError::fail(format!("{} {z:?}: {e}", d.name())))?;
            let dist = z.iter().zip(&p).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((dist - d.boundary_distance(&z).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn levi_form_is_real_and_quadratic(a in 0.0..6.3f64, v in unit_vector(), cr in -2.0..2.0f64, ci in -2.0..2.0f64) {
        let d = DomainSpec::ellipsoid(vec![1.0, 1.0], vec![1, 2]).unwrap();
        // boundary point (cos a, s) with cos^2 a + s^4 = 1
        let p = [C64::new(a.cos(), 0.0), C64::new((a.sin() * a.sin()).sqrt().sqrt(), 0.0)];
        // complex tangent: v_1 ρ_{z_1} + v_2 ρ_{z_2} = 0
        let s2 = p[1].norm_sqr();
        let v = [-v[0] * 2.0 * s2 * p[1].conj(), v[0] * p[0].conj()];
        let c = C64::new(cr, ci);
        let cv: Vec<C64> = v.iter().map(|x| x * c).collect();
        let l1 = d.levi_form(&p, &v).unwrap();
        let l2 = d.levi_form(&p, &cv).unwrap();
        prop_assert!(l1.is_finite());
        prop_assert!((l2 - c.norm_sqr() * l1).abs() < 1e-9 * (1.0 + l2.abs()));
    }

    #[test]
    fn disc_kernel_is_monotone_in_degree(z in planar_point()) {
        let d = DomainSpec::disc();
        let mut last = 0.0;
        for deg in [0, 1, 2, 4, 8, 16] {
            let ob = OrthonormalBasis::build(&d, &BasisSpec::monomial(1, deg)).unwrap();
            let k = ob.kernel_diagonal(&[z]).unwrap();
            prop_assert!(k >= last * (1.0 - 1e-14));
            last = k;
        }
    }

    #[test]
    fn planar_metrics_are_positive_and_bounded(z in planar_point(), scale in 0.3..1.0f64) {
        for ob in [disc_basis(), annulus_basis()] {
            let w = [z / z.norm().max(1e-9) * (0.3 + 0.4 * scale)];
            if !ob.within_truncation(&w) {
                continue;
            }
            let jet = kernel_jet(ob, &w, 3).unwrap();
            let p = MetricPipeline::new(&jet).unwrap();
            prop_assert!(p.bergman().unwrap().min_eigenvalue() > 0.0);
            prop_assert!(p.kf().unwrap().min_eigenvalue() > 0.0);
            prop_assert!(p.ricci_curvature(&[C64::new(1.0, 0.0)]).unwrap() < 2.0);
            prop_assert!(gaussian_curvature_kf(&jet).unwrap() < 2.0);
        }
    }

    #[test]
    fn ball_and_ellipsoid_metrics(z in ball_point(), u in unit_vector()) {
        for ob in [ball_basis(), ellipsoid_basis()] {
            if !ob.domain().contains(&z) || !ob.within_truncation(&z) {
                continue;
            }
            let p = MetricPipeline::new(&kernel_jet(ob, &z, 3).unwrap()).unwrap();
            let gb = p.bergman().unwrap();
            let gk = p.kf().unwrap();
            prop_assert!(gb.min_eigenvalue() > 0.0 && gk.min_eigenvalue() > 0.0);
            prop_assert!(hermitian(&gb.g) && hermitian(&gk.g) && hermitian(&p.ricci().unwrap()));
            prop_assert!(p.ricci_curvature(&u).unwrap() < 3.0);
        }
    }

    #[test]
    fn mobius_invariance_with_oracle_inputs(a in planar_point(), z in planar_point()) {
        let d = DomainSpec::disc();
        let f = DiscMobius { a };
        let w = f.apply(&[z]).unwrap();
        for flavor in [Flavor::Bergman, Flavor::KobayashiFuks] {
            let gs = oracle_metric(&d, flavor, &[z]).unwrap();
            let gt = oracle_metric(&d, flavor, &w).unwrap();
            let scale = gs.g[(0, 0)].norm();
            prop_assert!(transformation_residual(&f, &[z], &gs, &gt).unwrap() < 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn rotation_invariance_on_ball(z in ball_point(), t in 0.0..6.3f64, s in 0.0..6.3f64) {
        let d = DomainSpec::ball(2).unwrap();
        let (ct, st) = (t.cos(), t.sin());
        let e = C64::from_polar(1.0, s);
        let u = CMat::from_row_slice(2, 2, &[C64::new(ct, 0.0) * e, C64::new(-st, 0.0), C64::new(st, 0.0), C64::new(ct, 0.0) * e.conj()]);
        let f = LinearMap { u };
        let w = f.apply(&z).unwrap();
        let gs = oracle_metric(&d, Flavor::KobayashiFuks, &z).unwrap();
        let gt = oracle_metric(&d, Flavor::KobayashiFuks, &w).unwrap();
        prop_assert!(transformation_residual(&f, &z, &gs, &gt).unwrap() < 1e-8);
    }

    #[test]
    fn extremal_maximizers_are_feasible(z in ball_point(), u in unit_vector(), cr in -3.0..3.0f64) {
        let ob = ball_basis();
        let jet = kernel_jet(ob, &z, 3).unwrap();
        let r = i_domain(ob, &jet, &z, &u).unwrap();
        prop_assert!(r.constraint_residual < 1e-8);
        prop_assert!((r.maximizer_norm() - 1.0).abs() < 1e-10);
        let cu: Vec<C64> = u.iter().map(|x| x * cr).collect();
        let rc = i_domain(ob, &jet, &z, &cu).unwrap();
        prop_assert!((rc.value - cr * cr * r.value).abs() <= 1e-10 * rc.value.max(1e-300));
    }

    #[test]
    fn planar_extremals_grow_with_degree(z in planar_point()) {
        let d = DomainSpec::disc();
        let mut last = [0.0f64; 3];
        for deg in [8, 16, 32] {
            let ob = OrthonormalBasis::build(&d, &BasisSpec::monomial(1, deg)).unwrap();
            let jet = kernel_jet_forced_or(&ob, z);
            let i0 = i_domain(&ob, &jet, &[z], &[C64::new(1.0, 0.0)]).unwrap();
            let i1 = i_prime(&ob, &jet, &[z]).unwrap();
            let i2 = i_double_prime(&ob, &jet, &[z]).unwrap();
            for r in [&i0, &i1, &i2] {
                prop_assert!(r.constraint_residual < 1e-8);
            }
            // the normalizing g_KF moves with the degree, so compare the
            // unnormalized suprema
            let g = MetricPipeline::new(&jet).unwrap();
            let gk = g.kf().unwrap().g[(0, 0)].re;
            let gb = g.bergman().unwrap().g[(0, 0)].re;
            let vals = [i0.value * gb, i1.value * gk, i2.value * gk.powi(3)];
            for k in 0..3 {
                prop_assert!(vals[k] >= last[k] * (1.0 - 1e-9), "{k}: {} < {}", vals[k], last[k]);
            }
            last = vals;
        }
    }
}

fn kernel_jet_forced_or(ob: &OrthonormalBasis, z: C64) -> kfm_core::metrics::KernelJet {
    kfm_core::metrics::kernel_jet_forced(ob, &[z], 3).unwrap()
}

#[test]
fn quadrature_nodes_lie_inside() {
    let domains = [
        DomainSpec::disc(),
        DomainSpec::annulus(0.2).unwrap(),
        DomainSpec::polydisc(2).unwrap(),
        DomainSpec::ball(2).unwrap(),
        DomainSpec::circular_segment(0.25).unwrap(),
        DomainSpec::annulus_cut(0.2, 0.3).unwrap(),
    ];
    for d in &domains {
        let rule = d.build_quadrature(d.default_quadrature_resolution().min(24)).unwrap();
        assert!(rule.nodes.iter().all(|z| d.contains(z)), "{}", d.name());
    }
}
