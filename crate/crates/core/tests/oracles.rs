//! Numerical results checked against routes that do not share code with the
//! implementation: closed forms, finer quadrature, finite differences of the
//! normalized likelihood and sampling frequencies.

use k2gof_core::fit::{fisher_information, inverse_sqrt, FisherMatrix};
use k2gof_core::linalg::{symmetric_eigen, Matrix};
use k2gof_core::model::builtin::{self, default_region};
use k2gof_core::model::{instantiate, sample, score, ModelInstance, ModelSpec, Point, SupportRect};
use k2gof_core::process::{build_projection_plan, projected_process, psi_field};
use k2gof_core::quadrature::{inner_product, Grid, GridField};
use k2gof_core::rotation::{apply_k, build_rotation_plan};
use k2gof_core::stats::{stat_ad, stat_ad_with_epsilon};
use k2gof_core::RngStream;

fn grid() -> Grid {
    Grid::new(&default_region(), 50, 40).unwrap()
}

fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Truncated normal cdf on `[lo, hi]` at `x`.
fn trunc_cdf(x: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let f = |t: f64| phi((t - mean) / sd);
    (f(x) - f(lo)) / (f(hi) - f(lo))
}

#[test]
fn q_cdf_matches_closed_form() {
    let q = builtin::by_name("Q").unwrap();
    let th = [5.0, 8.0, 25.0];
    let exact = |x1: f64, x2: f64| trunc_cdf(x1, th[0], 5.0, 1.0, 20.0) * trunc_cdf(x2, th[1], 5.0, 1.0, 25.0);
    for (n1, n2, tol) in [(50, 40, 2e-3), (400, 500, 5e-5)] {
        let g = Grid::new(q.support(), n1, n2).unwrap();
        let inst = instantiate(&q, &th, &g).unwrap();
        let [h1, h2] = g.cell_sides();
        let mut worst = 0.0f64;
        for k in 0..g.len() {
            let x = g.node(k);
            let got = inst.cdf_field().at(k);
            worst = worst.max((got - exact(x[0] + 0.5 * h1, x[1] + 0.5 * h2)).abs());
        }
        assert!(worst < tol, "{n1}x{n2}: {worst}");
    }
}

#[test]
fn coarse_cdf_agrees_with_fine_grid() {
    let coarse = grid();
    let fine = Grid::new(&default_region(), 400, 480).unwrap();
    for (name, th) in [("P", vec![0.0, 3.0, 20.0, 20.0, 10.0]), ("F1", vec![2.0, 3.0, 0.3]), ("F3", vec![6.0, 9.0, 0.5])] {
        let spec = builtin::by_name(name).unwrap();
        let a = instantiate(&spec, &th, &coarse).unwrap();
        let b = instantiate(&spec, &th, &fine).unwrap();
        let (n1, n2) = coarse.shape();
        let mut worst = 0.0f64;
        for i in 0..n1 {
            for j in 0..n2 {
                // coarse cell (i, j) ends where fine cell (8i+7, 12j+11) ends
                let fine_k = fine.index(8 * i + 7, 12 * j + 11);
                worst = worst.max((a.cdf_field().at(coarse.index(i, j)) - b.cdf_field().at(fine_k)).abs());
            }
        }
        assert!(worst < 5e-3, "{name}: {worst}");
    }
}

/// Score as the central difference of `ln f(x; θ) - ln C(θ)`.
fn fd_score(spec: &ModelSpec, th: &[f64], x: &Point, g: &Grid) -> Vec<f64> {
    let ll = |t: &[f64]| spec.log_unnormalized(t, x) - spec.log_norm_const(t, g).unwrap();
    (0..th.len())
        .map(|j| {
            let h = 1e-5 * th[j].abs().max(1.0);
            let (mut up, mut down) = (th.to_vec(), th.to_vec());
            up[j] += h;
            down[j] -= h;
            (ll(&up) - ll(&down)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn scores_match_finite_differences_of_likelihood() {
    let g = grid();
    let cases = [
        ("Q", vec![4.0, 9.0, 30.0]),
        ("F1", vec![2.0, 3.0, 0.3]),
        ("F2", vec![5.0, 8.0, 20.0]),
        ("F3", vec![6.0, 9.0, 0.5]),
        ("P", vec![0.0, 3.0, 20.0, 20.0, 10.0]),
    ];
    let points = [[1.5, 1.5], [7.3, 12.1], [19.9, 24.0], [10.0, 3.0]];
    for (name, th) in cases {
        let spec = builtin::by_name(name).unwrap();
        let inst = instantiate(&spec, &th, &g).unwrap();
        for x in &points {
            let got = score(&inst, x).unwrap();
            let want = fd_score(&spec, &th, x, &g);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-5 * b.abs().max(1.0), "{name} {x:?}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn fisher_matches_untruncated_normal() {
    let wide = SupportRect::new(vec![-30.0, -30.0], vec![30.0, 30.0]).unwrap();
    let q = builtin::by_name_on("Q", wide.clone()).unwrap();
    let g = Grid::new(&wide, 300, 300).unwrap();
    let v = 4.0;
    let inst = instantiate(&q, &[1.0, -2.0, v], &g).unwrap();
    let m = fisher_information(&inst, &g).unwrap().matrix;
    let want = [1.0 / v, 1.0 / v, 1.0 / (v * v)];
    for j in 0..3 {
        assert!((m[(j, j)] - want[j]).abs() < 1e-3 * want[j], "{j}: {}", m[(j, j)]);
        for k in 0..j {
            assert!(m[(j, k)].abs() < 1e-6);
        }
    }
}

#[test]
fn inverse_sqrt_whitens_fitted_information() {
    let g = grid();
    let inst = instantiate(&builtin::by_name("F3").unwrap(), &[6.0, 9.0, 0.5], &g).unwrap();
    let fisher = fisher_information(&inst, &g).unwrap();
    let s = inverse_sqrt(&fisher).unwrap();
    let w = s.matmul(&fisher.matrix).matmul(&s);
    assert!(w.frobenius_distance(&Matrix::identity(3)) < 1e-8);
    let rebuilt = FisherMatrix { matrix: fisher.matrix.clone(), eigenvalues: symmetric_eigen(&fisher.matrix).values };
    assert_eq!(inverse_sqrt(&rebuilt).unwrap(), s);
}

fn ecdf_deviation(inst: &ModelInstance, points: &[Point]) -> f64 {
    let g = inst.grid();
    let counts = g.cumulative_counts(points, None);
    let n = points.len() as f64;
    counts.iter().zip(inst.cdf_field().values()).map(|(c, f)| (c / n - f).abs()).fold(0.0, f64::max)
}

#[test]
fn samplers_reproduce_grid_cdf() {
    let g = grid();
    let n = 20_000;
    for (name, th) in [
        ("Q", vec![5.0, 8.0, 25.0]),
        ("P", vec![0.0, 3.0, 20.0, 20.0, 10.0]),
        ("F1", vec![2.0, 3.0, 0.3]),
        ("F2", vec![5.0, 8.0, 20.0]),
        ("F3", vec![6.0, 9.0, 0.5]),
    ] {
        let inst = instantiate(&builtin::by_name(name).unwrap(), &th, &g).unwrap();
        let pts = sample(&inst, n, &mut RngStream::new(99, 0)).unwrap();
        assert!(pts.iter().all(|x| inst.check_point(x).is_ok()));
        // DKW bound at level 1e-4 is 0.0153 for n = 20000; grid error adds a little
        let dev = ecdf_deviation(&inst, &pts);
        assert!(dev < 0.02, "{name}: {dev}");
    }
}

#[test]
fn q_sample_mean_near_truncated_mean() {
    let g = grid();
    let inst = instantiate(&builtin::by_name("Q").unwrap(), &[10.0, 13.0, 4.0], &g).unwrap();
    let pts = sample(&inst, 40_000, &mut RngStream::new(3, 1)).unwrap();
    let n = pts.len() as f64;
    let m1 = pts.iter().map(|x| x[0]).sum::<f64>() / n;
    let m2 = pts.iter().map(|x| x[1]).sum::<f64>() / n;
    // far from the edges the truncation is negligible, sd of the mean is 0.01
    assert!((m1 - 10.0).abs() < 0.05 && (m2 - 13.0).abs() < 0.05, "{m1} {m2}");
}

#[test]
fn projection_coefficients_two_routes() {
    let g = grid();
    let inst = instantiate(&builtin::by_name("Q").unwrap(), &[4.0, 9.0, 30.0], &g).unwrap();
    let plan = build_projection_plan(&inst, &g).unwrap();
    for x in [0, 17, 555, 1203, g.len() - 1] {
        let psi = psi_field(&g, x, plan.cdf_field().at(x));
        for j in 0..3 {
            let direct = inner_product(plan.scores().field(j), &psi, inst.density_field()).unwrap();
            assert!((direct - plan.proj_coeff()[j].at(x)).abs() < 1e-12, "{x} {j}");
        }
    }
}

fn pseudo_random_field(g: &Grid, seed: u64) -> GridField {
    let mut rng = RngStream::new(seed, 7);
    GridField::new(g, (0..g.len()).map(|_| rng.normal()).collect()).unwrap()
}

/// Removes the components along `1` and `basis` under `density`; the basis
/// must be orthonormal under `density`.
fn orthogonalize(h: &GridField, basis: &[&GridField], density: &GridField) -> GridField {
    let g = h.grid();
    let one = g.constant(1.0);
    let mass = inner_product(&one, &one, density).unwrap();
    let mut out = h.axpy(-inner_product(h, &one, density).unwrap() / mass, &one).unwrap();
    for b in basis {
        out = out.axpy(-inner_product(&out, b, density).unwrap(), b).unwrap();
    }
    out
}

fn fitted_pair(f_name: &str, f_params: &[f64]) -> (ModelInstance, ModelInstance, Grid) {
    let g = grid();
    let q = instantiate(&builtin::by_name("Q").unwrap(), &[4.0, 9.0, 30.0], &g).unwrap();
    let f = instantiate(&builtin::by_name(f_name).unwrap(), f_params, &g).unwrap();
    (q, f, g)
}

#[test]
fn rotation_is_unitary_on_random_fields() {
    for (name, th) in [("F1", vec![2.0, 3.0, 0.3]), ("F2", vec![5.0, 8.0, 20.0]), ("F3", vec![6.0, 9.0, 0.5])] {
        let (q, f, g) = fitted_pair(name, &th);
        let plan = build_rotation_plan(&q, &f, &g, &build_projection_plan(&q, &g).unwrap()).unwrap();
        let fd = f.density_field();
        let h1 = pseudo_random_field(&g, 1);
        let h2 = pseudo_random_field(&g, 2);
        let (k1, k2) = (apply_k(&h1, &plan).unwrap(), apply_k(&h2, &plan).unwrap());
        let (u1, u2) = (plan.apply_u(&h1).unwrap(), plan.apply_u(&h2).unwrap());
        let base = inner_product(&h1, &h2, fd).unwrap();
        let scale = base.abs().max(1.0);
        assert!((inner_product(&k1, &k2, fd).unwrap() - base).abs() < 1e-10 * scale, "{name} K");
        assert!((inner_product(&u1, &u2, fd).unwrap() - base).abs() < 1e-10 * scale, "{name} U");
    }
}

#[test]
fn rotation_carries_orthogonal_complement() {
    for (name, th) in [("F1", vec![2.0, 3.0, 0.3]), ("F2", vec![5.0, 8.0, 20.0]), ("F3", vec![6.0, 9.0, 0.5])] {
        let (q, f, g) = fitted_pair(name, &th);
        let proj = build_projection_plan(&q, &g).unwrap();
        let plan = build_rotation_plan(&q, &f, &g, &proj).unwrap();
        let b: Vec<&GridField> = proj.scores().fields().iter().collect();
        let h = orthogonalize(&pseudo_random_field(&g, 5), &b, q.density_field());
        let lifted = h.zip_with(plan.l_field(), |a, l| a * l).unwrap();
        let rotated = plan.apply_u(&apply_k(&lifted, &plan).unwrap()).unwrap();
        let fd = f.density_field();
        let norm = inner_product(&h, &h, q.density_field()).unwrap().sqrt();
        assert!(inner_product(&rotated, &g.constant(1.0), fd).unwrap().abs() < 1e-9 * norm, "{name} mean");
        for j in 0..3 {
            assert!(inner_product(&rotated, plan.a_field(j), fd).unwrap().abs() < 1e-9 * norm, "{name} a{j}");
        }
    }
}

#[test]
fn anderson_darling_insensitive_to_clamp() {
    let g = grid();
    let inst = instantiate(&builtin::by_name("Q").unwrap(), &[4.0, 9.0, 30.0], &g).unwrap();
    let plan = build_projection_plan(&inst, &g).unwrap();
    let data = sample(&inst, 100, &mut RngStream::new(8, 0)).unwrap();
    let v = projected_process(&data, &plan).unwrap().field;
    let (q, cdf) = (inst.density_field(), inst.cdf_field());
    let base = stat_ad(&v, q, cdf).unwrap();
    for eps in [1e-8, 1e-12, 1e-14] {
        let other = stat_ad_with_epsilon(&v, q, cdf, eps).unwrap();
        assert!((other - base).abs() < 1e-6 * base, "{eps}: {other} vs {base}");
    }
}
