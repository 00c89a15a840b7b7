use k2gof_core::fit::{inverse_sqrt, FisherMatrix};
use k2gof_core::linalg::{symmetric_eigen, Matrix};
use k2gof_core::model::builtin::{self, default_region};
use k2gof_core::model::{instantiate, ParamDomain, Point};
use k2gof_core::process::{build_projection_plan, projected_process, ProjectionPlan};
use k2gof_core::quadrature::{inner_product, Grid, GridField};
use k2gof_core::rotation::apply_u_pair;
use k2gof_core::sim::{critical_value, p_value, NullDistribution, NullMethod};
use k2gof_core::stats::{stat_ad, stat_cvm, stat_sup};
use k2gof_core::{ParamVector, StatKind};
use proptest::prelude::*;
use std::sync::OnceLock;

fn plan() -> &'static ProjectionPlan {
    static PLAN: OnceLock<ProjectionPlan> = OnceLock::new();
    PLAN.get_or_init(|| {
        let g = Grid::new(&default_region(), 50, 40).unwrap();
        let inst = instantiate(&builtin::by_name("Q").unwrap(), &[6.0, 10.0, 20.0], &g).unwrap();
        build_projection_plan(&inst, &g).unwrap()
    })
}

fn point() -> impl Strategy<Value = Point> {
    (1.0..=20.0f64, 1.0..=25.0f64).prop_map(|(a, b)| [a, b])
}

fn points(max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(point(), 1..max)
}

fn null(values: Vec<f64>) -> NullDistribution {
    let params = ParamVector { labels: vec!["t".into()], values: vec![0.0] };
    NullDistribution::new(StatKind::D, values, 10, "Q".into(), params, 0, NullMethod::BootstrapProjected)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn process_is_additive_over_samples(a in points(40), b in points(40)) {
        let p = plan();
        let va = projected_process(&a, p).unwrap().field;
        let vb = projected_process(&b, p).unwrap().field;
        let joined: Vec<Point> = a.iter().chain(&b).copied().collect();
        let vj = projected_process(&joined, p).unwrap().field;
        let (na, nb) = ((a.len() as f64).sqrt(), (b.len() as f64).sqrt());
        let nj = (joined.len() as f64).sqrt();
        for k in 0..vj.values().len() {
            let want = (va.at(k) * na + vb.at(k) * nb) / nj;
            prop_assert!((vj.at(k) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn process_ignores_data_order(mut a in points(50), seed in any::<u64>()) {
        let p = plan();
        let before = projected_process(&a, p).unwrap().field;
        let len = a.len();
        a.rotate_left((seed as usize) % len);
        a.reverse();
        let after = projected_process(&a, p).unwrap().field;
        prop_assert!(before.max_abs_diff(&after).unwrap() < 1e-12);
    }

    #[test]
    fn statistics_scale_with_the_process(a in points(30), c in -5.0..5.0f64) {
        let p = plan();
        let q = p.instance().density_field();
        let cdf = p.cdf_field();
        let v = projected_process(&a, p).unwrap().field;
        let cv = v.scale(c);
        let tol = |x: f64| 1e-9 * x.abs().max(1.0);
        prop_assert!((stat_sup(&cv) - c.abs() * stat_sup(&v)).abs() < tol(stat_sup(&v)));
        let w = stat_cvm(&v, q).unwrap();
        prop_assert!((stat_cvm(&cv, q).unwrap() - c * c * w).abs() < tol(w) * c * c + 1e-12);
        let ad = stat_ad(&v, q, cdf).unwrap();
        prop_assert!((stat_ad(&cv, q, cdf).unwrap() - c * c * ad).abs() < tol(ad) * c * c + 1e-12);
        prop_assert!(ad >= 4.0 * w - 1e-12);
    }

    #[test]
    fn p_values_monotone_and_bounded(values in prop::collection::vec(0.0..10.0f64, 100..300), a in 0.0..12.0f64, b in 0.0..12.0f64) {
        let d = null(values);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (plo, phi) = (p_value(&d, lo), p_value(&d, hi));
        prop_assert!(phi <= plo);
        prop_assert!(phi >= 1.0 / (d.values.len() as f64 + 1.0) && plo <= 1.0);
    }

    #[test]
    fn critical_values_monotone_in_level(values in prop::collection::vec(0.0..10.0f64, 100..300), a in 0.001..0.5f64, b in 0.001..0.5f64) {
        let d = null(values);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(critical_value(&d, lo) >= critical_value(&d, hi));
        // at most a fraction alpha of the null lies strictly above the critical value
        let c = critical_value(&d, lo);
        let above = d.values.iter().filter(|&&v| v > c).count() as f64;
        prop_assert!(above <= lo * (d.values.len() as f64 + 1.0));
    }

    #[test]
    fn domain_maps_round_trip(lower in -10.0..0.0f64, width in 0.1..10.0f64, s in 0.01..0.99f64) {
        let upper = lower + width;
        let v = lower + s * width;
        for d in [ParamDomain::REAL, ParamDomain::POSITIVE, ParamDomain::new(lower, upper), ParamDomain::new(lower, f64::INFINITY)] {
            let x = if d.contains(v) { v } else { v.abs() + 0.5 };
            let back = d.from_unconstrained(d.to_unconstrained(x));
            prop_assert!((back - x).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn inverse_sqrt_whitens_spd(entries in prop::collection::vec(-2.0..2.0f64, 9), shift in 0.1..3.0f64) {
        let a = Matrix::from_rows(&[&entries[0..3], &entries[3..6], &entries[6..9]]);
        let mut m = a.matmul(&a.transpose());
        for j in 0..3 {
            m[(j, j)] += shift;
        }
        let eigenvalues = symmetric_eigen(&m).values;
        let s = inverse_sqrt(&FisherMatrix { matrix: m.clone(), eigenvalues }).unwrap();
        prop_assert!(s.matmul(&m).matmul(&s).frobenius_distance(&Matrix::identity(3)) < 1e-8);
        prop_assert!(s.max_asymmetry() < 1e-12);
    }

    #[test]
    fn reflection_swaps_unit_fields(seed in any::<u64>()) {
        let g = Grid::new(&default_region(), 12, 10).unwrap();
        let density = plan_density(&g);
        let mut rng = k2gof_core::RngStream::new(seed, 0);
        let unit = |rng: &mut k2gof_core::RngStream| {
            let f = GridField::new(&g, (0..g.len()).map(|_| rng.normal()).collect()).unwrap();
            let n = inner_product(&f, &f, &density).unwrap().sqrt();
            f.scale(1.0 / n)
        };
        let (a, c, h) = (unit(&mut rng), unit(&mut rng), unit(&mut rng));
        let uc = apply_u_pair(&c, &a, &c, &density).unwrap();
        prop_assert!(uc.max_abs_diff(&a).unwrap() < 1e-9);
        let uh = apply_u_pair(&h, &a, &c, &density).unwrap();
        let back = apply_u_pair(&uh, &a, &c, &density).unwrap();
        prop_assert!(back.max_abs_diff(&h).unwrap() < 1e-9);
    }
}

fn plan_density(g: &Grid) -> GridField {
    let inst = instantiate(&builtin::by_name("F2").unwrap(), &[5.0, 8.0, 20.0], g).unwrap();
    inst.density_field().clone()
}
