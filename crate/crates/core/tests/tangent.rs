mod common;

use lipflat::corpus::{generate, Kind};
use lipflat::metric::{edge_fragments, neighborhood_graph, CurveFragment, FiniteMetricSpace, GraphMode, LipschitzMap};
use lipflat::tangent::{
    complement_membership, cone_membership, family_profiles, fit_tangent_field, fragment_profile, partition_by_field, DirectionSet,
    TangentField,
};
use lipflat::PointCloud;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = common::euclid(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn assert_orthonormal(field: &TangentField) {
    for fr in &field.frames {
        let g = fr.transpose() * fr;
        let err = (g - DMatrix::identity(fr.ncols(), fr.ncols())).abs().max();
        assert!(fr.ncols() == 0 || err < 1e-10, "{err}");
    }
    assert!(field.violation >= 0.0);
}

fn crossing() -> (FiniteMetricSpace, LipschitzMap, Vec<CurveFragment>) {
    let space = generate(Kind::CrossingSegments { n: 20 }).unwrap().space().unwrap();
    let f = LipschitzMap::identity(&space).unwrap();
    let graph = neighborhood_graph(&space, GraphMode::Knn(2)).unwrap();
    let frags = edge_fragments(&space, &graph);
    (space, f, frags)
}

#[test]
fn segment_field_is_horizontal() {
    let space = generate(Kind::Segment { n: 21 }).unwrap().space().unwrap();
    let f = LipschitzMap::identity(&space).unwrap();
    let frags = edge_fragments(&space, &neighborhood_graph(&space, GraphMode::Knn(2)).unwrap());
    let all: Vec<usize> = (0..21).collect();
    let field = fit_tangent_field(&space, &all, &f, &frags, 1, 0.2).unwrap();
    assert_orthonormal(&field);
    for fr in &field.frames {
        assert!((fr[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }
    assert_eq!(field.violation, 0.0);
    assert!(fit_tangent_field(&space, &all, &f, &frags, 3, 0.2).is_err());
}

#[test]
fn zero_dimensional_field_on_dust() {
    let space = generate(Kind::FourCorner { depth: 3 }).unwrap().space().unwrap();
    let f = LipschitzMap::identity(&space).unwrap();
    let frags = edge_fragments(&space, &neighborhood_graph(&space, GraphMode::Knn(3)).unwrap());
    let s: Vec<usize> = (0..space.len()).step_by(2).collect();
    let field = fit_tangent_field(&space, &s, &f, &frags, 0, 0.5).unwrap();
    assert!(field.frames.iter().all(|fr| fr.ncols() == 0));
    // every nonzero edge touching S leaves the trivial cone
    let in_s = |x: usize| s.contains(&x);
    let mut seen = std::collections::BTreeSet::new();
    let mut oracle = 0.0;
    for g in &frags {
        for (a, b, len) in g.steps() {
            if (in_s(a) || in_s(b)) && seen.insert((a.min(b), a.max(b))) {
                oracle += len;
            }
        }
    }
    assert!((field.violation - oracle).abs() < 1e-12);
    assert!((field.incident_length - oracle).abs() < 1e-12);
}

#[test]
fn crossing_field_follows_branches() {
    let (space, f, frags) = crossing();
    let all: Vec<usize> = (0..space.len()).collect();
    let field = fit_tangent_field(&space, &all, &f, &frags, 1, 0.1).unwrap();
    assert_orthonormal(&field);
    let branch = [unit(vec![1.0, 1.0]), unit(vec![1.0, -1.0])];
    let mut far_violation = 0.0;
    for (k, &x) in field.points.iter().enumerate() {
        let p = space.coords().unwrap().row(x);
        let near = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() < 0.15;
        if !near {
            let w = &branch[x / 20];
            let c = (field.frames[k][(0, 0)] * w[0] + field.frames[k][(1, 0)] * w[1]).abs();
            assert!((c - 1.0).abs() < 1e-9, "point {x}: {c}");
            far_violation += field.per_point_violation[k];
        }
    }
    assert_eq!(far_violation, 0.0);
    assert!(field.violation > 0.0);
}

#[test]
fn crossing_partition_separates_branches() {
    let (space, f, frags) = crossing();
    let all: Vec<usize> = (0..space.len()).collect();
    let field = fit_tangent_field(&space, &all, &f, &frags, 1, 0.5).unwrap();
    let part = partition_by_field(&field, &f, &frags, 0.5, 2, 3).unwrap();
    assert_eq!(part.pieces.len(), 2);
    let mut assigned: Vec<usize> = part.pieces.iter().flat_map(|p| p.indices.clone()).chain(part.unassigned.clone()).collect();
    assigned.sort();
    assert_eq!(assigned, all);
    for (k, &x) in field.points.iter().enumerate() {
        // nearest piece by the sine of the angle between lines
        let u = field.frames[k].column(0);
        let sines: Vec<f64> = part
            .pieces
            .iter()
            .map(|p| (1.0 - u.dot(&p.frame.column(0)).powi(2)).max(0.0).sqrt())
            .collect();
        let best = if sines[0] <= sines[1] { 0 } else { 1 };
        if sines[best] < 0.5 {
            assert!(part.pieces[best].indices.contains(&x), "point {x}");
        } else {
            assert!(part.unassigned.contains(&x));
        }
    }
    // away from the crossing each branch sits in one piece
    for b in 0..2 {
        let ends = [b * 20 + 1, b * 20 + 18];
        let owner = |x: usize| part.pieces.iter().position(|p| p.indices.contains(&x));
        assert!(owner(ends[0]).is_some());
        assert_eq!(owner(ends[0]), owner(ends[1]));
    }
    assert_ne!(
        part.pieces.iter().position(|p| p.indices.contains(&1)),
        part.pieces.iter().position(|p| p.indices.contains(&21))
    );
}

#[test]
fn piece_violation_matches_profiles() {
    for (space, f, frags) in [crossing(), {
        let space = generate(Kind::Dust { s: 1.5, depth: 3 }).unwrap().space().unwrap();
        let f = LipschitzMap::identity(&space).unwrap();
        let frags = edge_fragments(&space, &neighborhood_graph(&space, GraphMode::Knn(4)).unwrap());
        (space, f, frags)
    }] {
        let all: Vec<usize> = (0..space.len()).collect();
        for theta in [0.2, 0.5, 0.8] {
            let field = fit_tangent_field(&space, &all, &f, &frags, 1, theta).unwrap();
            let part = partition_by_field(&field, &f, &frags, theta, 3, 9).unwrap();
            for piece in &part.pieces {
                let set = DirectionSet::Complement {
                    frame: piece.frame.clone(),
                    theta,
                };
                let profiles = family_profiles(&frags, &f, &set).unwrap();
                let mut seen = std::collections::BTreeSet::new();
                let mut total = 0.0;
                for (g, p) in frags.iter().zip(&profiles) {
                    let (a, b) = (g.indices[0], g.indices[1]);
                    let touches = piece.indices.contains(&a) || piece.indices.contains(&b);
                    if p.in_direction && touches && seen.insert((a.min(b), a.max(b))) {
                        total += p.total_length;
                    }
                }
                assert!((total - piece.violation).abs() < 1e-12, "{total} vs {}", piece.violation);
            }
        }
    }
}

#[test]
fn constant_field_gives_one_piece() {
    let space = generate(Kind::Segment { n: 11 }).unwrap().space().unwrap();
    let f = LipschitzMap::identity(&space).unwrap();
    let frags = edge_fragments(&space, &neighborhood_graph(&space, GraphMode::Knn(1)).unwrap());
    let all: Vec<usize> = (0..11).collect();
    let field = fit_tangent_field(&space, &all, &f, &frags, 1, 0.3).unwrap();
    let part = partition_by_field(&field, &f, &frags, 0.3, 4, 0).unwrap();
    assert_eq!(part.pieces.len(), 1);
    assert_eq!(part.pieces[0].indices, all);
    assert!(part.unassigned.is_empty());
    assert!(partition_by_field(&field, &f, &frags, 0.3, 0, 0).is_err());
}

#[test]
fn profile_examples() {
    let rows: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![2.0, 1.0], vec![2.0, 2.0]];
    let space = FiniteMetricSpace::euclidean_cloud(PointCloud::from_rows(&rows).unwrap()).unwrap();
    let f = LipschitzMap::identity(&space).unwrap();
    let gamma = CurveFragment::from_path(&space, (0..5).collect()).unwrap();
    let cone = DirectionSet::Cone {
        w: vec![1.0, 0.0],
        theta: 0.1,
    };
    let p = fragment_profile(&gamma, &f, &cone).unwrap();
    assert_eq!(p.fraction_in, 0.5);
    assert!(!p.in_direction);
    assert_eq!(p.lengths.iter().sum::<f64>(), p.total_length);

    let zero = LipschitzMap::new(&space, f.target().clone(), PointCloud::new(2, vec![0.0; 10]).unwrap()).unwrap();
    assert_eq!(fragment_profile(&gamma, &zero, &cone).unwrap().fraction_in, 0.0);

    let short = CurveFragment::from_path(&space, vec![0]).unwrap();
    assert!(fragment_profile(&short, &f, &cone).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cone_is_scale_invariant(v in prop::collection::vec(-3.0f64..3.0, 3), w in prop::collection::vec(-1.0f64..1.0, 3),
                               theta in 0.01f64..0.99, lambda in 1e-3f64..1e3) {
        prop_assume!(common::euclid(&w) > 1e-3);
        let w = unit(w);
        let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
        let a = cone_membership(&v, &w, theta);
        let b = cone_membership(&scaled, &w, theta);
        // only a rounding-level tie could separate the two
        let margin = (v.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() - (1.0 - theta) * common::euclid(&v)).abs();
        prop_assert!(a == b || margin < 1e-12 * common::euclid(&v));
    }

    #[test]
    fn complement_degenerate_cases(v in prop::collection::vec(-3.0f64..3.0, 4), theta in 0.01f64..0.99) {
        prop_assume!(common::euclid(&v) > 1e-9);
        prop_assert!(complement_membership(&v, &DMatrix::zeros(4, 0), theta));
        let frame = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        // theta close to one leaves only the trivial requirement
        let almost = 1.0 - f64::EPSILON;
        let tiny_ok = complement_membership(&v, &frame, almost);
        let off = (v[2] * v[2] + v[3] * v[3]).sqrt();
        prop_assert!(tiny_ok || off < f64::EPSILON * 4.0 * common::euclid(&v));
    }
}
