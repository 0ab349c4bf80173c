use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kfm_core::basis::{BasisSpec, OrthonormalBasis};
use kfm_core::domain::DomainSpec;
use kfm_core::extremal::i_domain;
use kfm_core::geodesic::{interpolant_length, RiemannianField};
use kfm_core::metrics::{kernel_jet, MetricPipeline};
use num_complex::Complex64 as C64;

fn basis_build(c: &mut Criterion) {
    let disc = DomainSpec::disc();
    let ball = DomainSpec::ball(2).unwrap();
    let annulus = DomainSpec::annulus(0.2).unwrap();
    c.bench_function("basis/disc_monomial_40", |b| {
        b.iter(|| OrthonormalBasis::build(&disc, &BasisSpec::monomial(1, 40)).unwrap())
    });
    c.bench_function("basis/ball2_monomial_20", |b| {
        b.iter(|| OrthonormalBasis::build(&ball, &BasisSpec::monomial(2, 20)).unwrap())
    });
    c.bench_function("basis/annulus_laurent_40", |b| {
        b.iter(|| OrthonormalBasis::build(&annulus, &BasisSpec::laurent(40)).unwrap())
    });
}

fn pipeline(c: &mut Criterion) {
    let disc = OrthonormalBasis::build(&DomainSpec::disc(), &BasisSpec::monomial(1, 80)).unwrap();
    let ball = OrthonormalBasis::build(&DomainSpec::ball(2).unwrap(), &BasisSpec::monomial(2, 30)).unwrap();
    let z1 = [C64::new(0.3, 0.2)];
    let z2 = [C64::new(0.2, 0.1), C64::new(-0.1, 0.3)];
    let u2 = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
    c.bench_function("jet/disc_80", |b| b.iter(|| kernel_jet(&disc, black_box(&z1), 3).unwrap()));
    c.bench_function("jet/ball2_30", |b| b.iter(|| kernel_jet(&ball, black_box(&z2), 3).unwrap()));
    let jet = kernel_jet(&ball, &z2, 3).unwrap();
    c.bench_function("pipeline/ball2_kf", |b| {
        b.iter(|| MetricPipeline::new(black_box(&jet)).unwrap().ricci_curvature(&u2).unwrap())
    });
    c.bench_function("extremal/ball2_i", |b| b.iter(|| i_domain(&ball, &jet, &z2, black_box(&u2)).unwrap()));
}

fn geodesic_energy(c: &mut Criterion) {
    let field = RiemannianField::radial_oracle(&DomainSpec::annulus(0.2).unwrap()).unwrap();
    let nodes: Vec<Vec<f64>> = (0..128)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / 128.0;
            vec![0.45 * t.cos(), 0.45 * t.sin()]
        })
        .collect();
    c.bench_function("geodesic/interpolant_length_128", |b| {
        b.iter(|| interpolant_length(&field, black_box(&nodes)).unwrap())
    });
}

criterion_group!(benches, basis_build, pipeline, geodesic_energy);
criterion_main!(benches);
