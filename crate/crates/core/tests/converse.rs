mod common;

use lipflat::converse::{
    degree_coverage, degree_coverage_within, positive_image_perturb, rect_lower_bound, rect_threshold, segment_candidates,
    smooth_perturbation, GridMap, RectOptions, SLACK_FACTOR,
};
use lipflat::corpus::{generate, Kind};
use lipflat::metric::{FiniteMetricSpace, LipschitzMap};
use lipflat::normgeom::NormedSpace;
use lipflat::{Error, PointCloud};
use proptest::prelude::*;
use rand::Rng;

fn disc_sample(res: usize, keep: impl Fn(&[f64]) -> bool) -> FiniteMetricSpace {
    let h = 2.0 / (res - 1) as f64;
    let mut rows = Vec::new();
    for i in 0..res {
        for j in 0..res {
            let p = [-1.0 + i as f64 * h, -1.0 + j as f64 * h];
            if p[0] * p[0] + p[1] * p[1] <= 1.0 && keep(&p) {
                rows.push(p.to_vec());
            }
        }
    }
    FiniteMetricSpace::euclidean_cloud(PointCloud::from_rows(&rows).unwrap()).unwrap()
}

/// Signed crossings of the rightward horizontal ray from `p`.
fn crossing_number(poly: &[[f64; 2]], p: [f64; 2]) -> i64 {
    let mut w = 0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let up = a[1] <= p[1] && b[1] > p[1];
        let down = a[1] > p[1] && b[1] <= p[1];
        if up || down {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if x > p[0] {
                w += if up { 1 } else { -1 };
            }
        }
    }
    w
}

#[test]
fn identity_covers_every_eps_and_resolution() {
    for res in [32, 48, 64, 100] {
        let g = GridMap::sample(res, |p| p).unwrap();
        for k in 1..50 {
            let eps = k as f64 / 100.0;
            let c = degree_coverage(&g, eps).unwrap();
            assert!(c.covered, "res {res} eps {eps}: {:?}", c.uncovered.first());
        }
    }
}

#[test]
fn hundred_perturbations_cover() {
    for seed in 0..100 {
        let g = GridMap::sample(64, smooth_perturbation(seed, 0.099)).unwrap();
        assert!(g.boundary_disp < 0.1);
        let c = degree_coverage_within(&g, 0.1, 0.85).unwrap();
        assert!(c.covered, "seed {seed}: {} uncovered", c.uncovered.len());
    }
}

#[test]
fn winding_matches_crossing_oracle() {
    let mut r = common::rng(5);
    for seed in 0..20 {
        let g = GridMap::sample(24, smooth_perturbation(seed, 0.3)).unwrap();
        let poly: Vec<[f64; 2]> = g.boundary.iter().map(|&i| g.values[i]).collect();
        for _ in 0..50 {
            let p = [r.gen_range(-1.3..1.3), r.gen_range(-1.3..1.3)];
            assert_eq!(g.winding_number(p), crossing_number(&poly, p), "seed {seed} at {p:?}");
        }
    }
}

#[test]
fn constant_and_bad_eps_rejected() {
    let g = GridMap::sample(32, |_| [0.0, 0.0]).unwrap();
    assert!(matches!(degree_coverage(&g, 0.1), Err(Error::Precondition(_))));
    let id = GridMap::sample(32, |p| p).unwrap();
    assert!(degree_coverage(&id, 0.5).is_err());
    assert!(degree_coverage(&id, 0.0).is_err());
}

#[test]
fn punctured_sample_still_passes() {
    // remove a disc of area 5% of the unit ball
    let r = 0.05f64.sqrt();
    let full = disc_sample(41, |_| true);
    let holed = disc_sample(41, |p| (p[0] - 0.3).hypot(p[1] - 0.2) > r);
    let removed = 1.0 - holed.len() as f64 / full.len() as f64;
    assert!((removed - 0.05).abs() < 0.01, "{removed}");
    let id = LipschitzMap::identity(&holed).unwrap();
    let b = rect_lower_bound(&holed, &id, 1.0, 0.0, &RectOptions::default()).unwrap();
    assert!(b.passes, "{} < {}", b.lower, b.threshold);
    assert!(b.lower >= 0.088);
}

#[test]
fn sparse_sample_fails_density() {
    let half = disc_sample(41, |p| p[0] < 0.0);
    let id = LipschitzMap::identity(&half).unwrap();
    assert!(matches!(
        rect_lower_bound(&half, &id, 1.0, 0.0, &RectOptions::default()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn segment_candidates_are_small_contractions() {
    let space = generate(Kind::Segment { n: 201 }).unwrap().space().unwrap();
    let id = LipschitzMap::identity(&space).unwrap();
    for c in segment_candidates(&space, 50, 17).unwrap() {
        let lip = common::naive_lip(&space, c.values(), common::euclid);
        assert!(lip <= 1.0, "{lip}");
        let moved = (0..201)
            .map(|x| common::euclid(&[c.value(x)[0] - id.value(x)[0], c.value(x)[1] - id.value(x)[1]]))
            .fold(0.0, f64::max);
        assert!(moved < 0.01, "{moved}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perturbation_term_is_small(a in prop::collection::vec(-2.0f64..2.0, 6), eps in 0.01f64..0.5) {
        // a linear map R^2 -> R^3 on a unit-square sample
        let pts: Vec<Vec<f64>> = (0..9).flat_map(|i| (0..9).map(move |j| vec![i as f64 / 8.0, j as f64 / 8.0])).collect();
        let s = FiniteMetricSpace::euclidean_cloud(PointCloud::from_rows(&pts).unwrap()).unwrap();
        let vals: Vec<Vec<f64>> = pts.iter().map(|p| (0..3).map(|r| a[2 * r] * p[0] + a[2 * r + 1] * p[1]).collect()).collect();
        let f = LipschitzMap::new(&s, NormedSpace::euclidean(3).unwrap(), PointCloud::from_rows(&vals).unwrap()).unwrap();
        let (fs, rep) = positive_image_perturb(&s, &f, eps, None).unwrap();
        let t: Vec<Vec<f64>> = (0..s.len()).map(|x| (0..3).map(|k| fs.value(x)[k] - f.value(x)[k]).collect()).collect();
        let t_lip = common::naive_lip(&s, &PointCloud::from_rows(&t).unwrap(), common::euclid);
        let t_sup = t.iter().map(|v| common::euclid(v)).fold(0.0, f64::max);
        prop_assert!(t_lip < eps && t_sup < eps);
        prop_assert!((t_lip - rep.t_lip).abs() < 1e-12);
        prop_assert!(rep.singular_values.iter().all(|&s| s >= eps / 4.0 * (1.0 - 1e-12)));
        prop_assert!(rep.content.value > 0.0);
    }

    #[test]
    fn threshold_weakens_with_k(k1 in 1.0f64..10.0, dk in 0.0f64..10.0, n in 1usize..5) {
        prop_assert!(rect_threshold(k1 + dk, n, SLACK_FACTOR) <= rect_threshold(k1, n, SLACK_FACTOR));
    }
}
