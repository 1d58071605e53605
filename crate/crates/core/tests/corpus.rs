mod common;

use lipflat::corpus::{distort_check, dust_ratio, generate, Kind, Profile};
use lipflat::metric::{kuratowski_embed, max_epsilon_net, LipschitzMap};
use lipflat::PointCloud;

#[test]
fn similarity_dimension_of_dust() {
    for s in [0.3, 0.5, 0.9, 1.2, 1.5, 1.8] {
        let r = dust_ratio(s);
        assert!((4f64.ln() / (1.0 / r).ln() - s).abs() < 1e-12);
    }
}

#[test]
fn counts_and_spacing() {
    for kind in [
        Kind::FourCorner { depth: 0 },
        Kind::FourCorner { depth: 4 },
        Kind::Dust { s: 1.8, depth: 3 },
        Kind::Segment { n: 2 },
        Kind::Circle { n: 7 },
        Kind::LipschitzGraph { n: 30, g: Profile::Abs },
        Kind::CrossingSegments { n: 10 },
    ] {
        let g = generate(kind).unwrap();
        assert_eq!(g.points.len(), g.expected_len());
        assert!(g.spacing > 0.0);
        let space = g.space().unwrap();
        if space.len() > 1 {
            assert!((space.min_separation() - g.spacing).abs() < 1e-12, "{kind:?}");
        }
    }
}

#[test]
fn generators_are_deterministic() {
    let a = generate(Kind::Dust { s: 0.5, depth: 4 }).unwrap();
    let b = generate(Kind::Dust { s: 0.5, depth: 4 }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn distortion_examples() {
    let g = generate(Kind::FourCorner { depth: 3 }).unwrap();
    let space = g.space().unwrap();
    let id = LipschitzMap::identity(&space).unwrap();
    assert_eq!(distort_check(&id, &space).unwrap().max, 0.0);

    let constant = LipschitzMap::new(&space, id.target().clone(), PointCloud::new(2, vec![0.5; 128]).unwrap()).unwrap();
    assert!((distort_check(&constant, &space).unwrap().max - space.diameter()).abs() < 1e-12);

    for eps in [0.05, 0.1, 0.3] {
        let f = kuratowski_embed(&space, &max_epsilon_net(&space, eps).unwrap()).unwrap();
        let rep = distort_check(&f, &space).unwrap();
        assert!(rep.max <= 2.0 * eps, "{} > {}", rep.max, 2.0 * eps);
        assert_eq!(rep.pairs, 64 * 63 / 2);
        assert_eq!(rep.histogram.iter().map(|h| h.2).sum::<usize>(), rep.pairs);
    }
}

// At delta = 2 / (n - 1) a ball holds three consecutive points, so the
// value sits near 2/3 rather than 1.
#[test]
fn segment_content_at_coupled_delta() {
    use lipflat::content::greedy_content;
    use lipflat::normgeom::NormedSpace;
    let l2 = NormedSpace::euclidean(2).unwrap();
    for n in [51, 101, 201] {
        let g = generate(Kind::Segment { n }).unwrap();
        let delta = 2.0 / (n - 1) as f64;
        let v = greedy_content(&g.points, &l2, 1.0, delta).unwrap().value;
        let oracle = n.div_ceil(3) as f64 * delta;
        assert!((v - oracle).abs() < 1e-12, "n={n}: {v} vs {oracle}");
        assert!((0.6..0.7).contains(&v));
    }
}
