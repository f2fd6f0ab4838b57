mod common;

use common::{rel_close, star, star_with_hole};
use mangrove_core::geometry::{multipolygon_to_wkt, Polygon, Ring, Vertex};
use mangrove_core::ingest::{fix_geometry, parse_wkt};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coord() -> impl Strategy<Value = (f64, f64)> {
    (-180.0f64..180.0, -90.0f64..90.0)
}

fn ring_coords() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec(coord(), 3..12).prop_filter("three distinct vertices", |v| {
        let mut u = v.clone();
        u.sort_by(|a, b| a.partial_cmp(b).unwrap());
        u.dedup();
        u.len() >= 3
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wkt_round_trip_is_exact(outer in ring_coords(), holes in prop::collection::vec(ring_coords(), 0..3)) {
        let p = Polygon::new(Ring::from_coords(&outer), holes.iter().map(|h| Ring::from_coords(h)).collect());
        let back: Vec<Polygon<f64>> = parse_wkt(&p.to_wkt()).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back[0], &p);
        let multi: Vec<Polygon<f64>> = parse_wkt(&multipolygon_to_wkt(&[p.clone(), p.clone()])).unwrap();
        prop_assert_eq!(multi, vec![p.clone(), p]);
    }

    #[test]
    fn fix_output_meets_ring_invariants(seed in any::<u64>(), flip in any::<bool>(), dup in 0usize..16, jitter in 0.0f64..1e-3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let p = star_with_hole(&mut r, 10.0, 5.0, 1.0);
        let mut outer: Vec<Vertex<f64>> = p.outer.open().iter()
            .map(|v| Vertex::new(v.lon + r.random_range(-jitter..=jitter), v.lat + r.random_range(-jitter..=jitter)))
            .collect();
        let k = dup % outer.len();
        outer.insert(k, outer[k]);
        if flip {
            outer.reverse();
        }
        let messy = Polygon::new(Ring::new(outer), p.holes.clone());
        let fixed = fix_geometry(&messy).unwrap();
        prop_assert!(fixed.outer.is_ccw());
        prop_assert!(fixed.holes.iter().all(|h| !h.is_ccw()));
        for ring in fixed.rings() {
            let v = ring.vertices();
            prop_assert!(v.len() >= 4);
            prop_assert_eq!(v.first(), v.last());
            prop_assert!(v.windows(2).all(|w| w[0] != w[1]));
            prop_assert!(ring.signed_area() != 0.0);
        }
        prop_assert!(fixed.signed_area() >= 0.0);
        prop_assert!(rel_close(fixed.area(), messy.outer.area() - messy.holes[0].area(), 1e-12));
    }
}

/// Even-odd crossing test, written independently of the library.
fn inside(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut c = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            c = !c;
        }
        j = i;
    }
    c
}

#[test]
fn shoelace_area_matches_monte_carlo() {
    const SAMPLES: usize = 1_000_000;
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let n = r.random_range(3..20);
        let p = star(&mut r, 0.0, 0.0, 1.0, n);
        let ring: Vec<(f64, f64)> = p.outer.open().iter().map(|v| (v.lon, v.lat)).collect();
        let b = p.bbox();
        let box_area = (b.max_lon - b.min_lon) * (b.max_lat - b.min_lat);
        let hits = (0..SAMPLES)
            .filter(|_| inside(&ring, r.random_range(b.min_lon..b.max_lon), r.random_range(b.min_lat..b.max_lat)))
            .count();
        let frac = hits as f64 / SAMPLES as f64;
        let sigma = box_area * (frac * (1.0 - frac) / SAMPLES as f64).sqrt();
        let estimate = frac * box_area;
        assert!((p.area() - estimate).abs() <= 3.0 * sigma, "area {} vs MC {estimate} (sigma {sigma})", p.area());
    }
}

#[test]
fn single_precision_polygons_agree_with_double() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let p = star(&mut r, 3.0, 2.0, 1.0, 10);
        let q: Polygon<f32> = Polygon::new(
            Ring::new(p.outer.open().iter().map(|v| Vertex::new(v.lon as f32, v.lat as f32)).collect()),
            Vec::new(),
        );
        assert!(rel_close(f64::from(q.area()), p.area(), 1e-5));
        assert!(rel_close(f64::from(q.perimeter()), p.perimeter(), 1e-5));
    }
}
