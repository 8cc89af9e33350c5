use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vru_sim::geometry::{
    in_frustum, iou_axis_box, obb_distance, obb_overlap, ray_segment_intersect, sight_blocked, AxisBox2, Frustum,
    OrientedBox, Prism, SensorPose, Vec2, Vec3,
};

fn grown(b: &OrientedBox, d: f64) -> OrientedBox {
    OrientedBox {
        half_long: (b.half_long + d).max(1e-9),
        half_lat: (b.half_lat + d).max(1e-9),
        ..*b
    }
}

fn aabb(b: &OrientedBox) -> (Vec2, Vec2) {
    let c = b.corners();
    let min = Vec2::new(
        c.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
        c.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
    );
    let max = Vec2::new(
        c.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
        c.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
    );
    (min, max)
}

/// Is there a lattice point inside both boxes?
fn raster_overlap(a: &OrientedBox, b: &OrientedBox, h: f64) -> bool {
    let (amin, amax) = aabb(a);
    let (bmin, bmax) = aabb(b);
    let (x0, x1) = (amin.x.max(bmin.x), amax.x.min(bmax.x));
    let (y0, y1) = (amin.y.max(bmin.y), amax.y.min(bmax.y));
    if x0 > x1 || y0 > y1 {
        return false;
    }
    let (i0, i1) = ((x0 / h).floor() as i64, (x1 / h).ceil() as i64);
    let (j0, j1) = ((y0 / h).floor() as i64, (y1 / h).ceil() as i64);
    for i in i0..=i1 {
        for j in j0..=j1 {
            let p = Vec2::new(i as f64 * h, j as f64 * h);
            if a.contains(p) && b.contains(p) {
                return true;
            }
        }
    }
    false
}

fn random_box(rng: &mut ChaCha8Rng) -> OrientedBox {
    OrientedBox::new(
        Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
        rng.gen_range(0.05..1.5),
        rng.gen_range(0.05..1.5),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
    .unwrap()
}

#[test]
fn obb_overlap_matches_raster_oracle() {
    // Shrunk boxes sharing a lattice point certainly overlap; grown boxes
    // (by h, enough to hold a lattice point around any common point) sharing
    // none certainly do not. Pairs in between are ambiguous and skipped.
    let h = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut decided, mut skipped) = (0, 0);
    for _ in 0..15_000 {
        let a = random_box(&mut rng);
        let b = random_box(&mut rng);
        let got = obb_overlap(&a, &b);
        if raster_overlap(&grown(&a, -h / 4.0), &grown(&b, -h / 4.0), h / 8.0) {
            assert!(got, "raster sees overlap: {a:?} {b:?}");
            assert_eq!(obb_distance(&a, &b), 0.0);
            decided += 1;
        } else if !raster_overlap(&grown(&a, h), &grown(&b, h), h) {
            assert!(!got, "raster sees separation: {a:?} {b:?}");
            assert!(obb_distance(&a, &b) > 0.0);
            decided += 1;
        } else {
            skipped += 1;
        }
    }
    assert!(decided >= 10_000, "only {decided} decided pairs ({skipped} ambiguous)");
}

#[test]
fn obb_distance_matches_sampled_boundary_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let a = random_box(&mut rng);
        let b = random_box(&mut rng);
        if obb_overlap(&a, &b) {
            continue;
        }
        let sample = |bx: &OrientedBox| -> Vec<Vec2> {
            bx.edges()
                .iter()
                .flat_map(|&(p, q)| (0..=400).map(move |i| p + (q - p) * (i as f64 / 400.0)))
                .collect()
        };
        let (sa, sb) = (sample(&a), sample(&b));
        let brute = sa
            .iter()
            .flat_map(|p| sb.iter().map(move |q| p.distance(*q)))
            .fold(f64::INFINITY, f64::min);
        let got = obb_distance(&a, &b);
        assert!(got <= brute + 1e-9, "{got} > sampled {brute}");
        assert!(brute - got < 0.02, "{got} vs sampled {brute}");
    }
}

fn pixel_count(b: &AxisBox2, n: usize) -> Vec<bool> {
    let h = 1.0 / n as f64;
    let mut out = vec![false; n * n];
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        if x < b.min.x || x > b.max.x {
            continue;
        }
        for j in 0..n {
            let y = (j as f64 + 0.5) * h;
            if y >= b.min.y && y <= b.max.y {
                out[i * n + j] = true;
            }
        }
    }
    out
}

fn snapped_box() -> impl Strategy<Value = AxisBox2> {
    (0u32..900, 0u32..900, 10u32..400, 10u32..400).prop_map(|(x, y, w, h)| {
        let x1 = (x + w).min(1000);
        let y1 = (y + h).min(1000);
        AxisBox2::new(
            Vec2::new(x as f64 / 1000.0, y as f64 / 1000.0),
            Vec2::new(x1 as f64 / 1000.0, y1 as f64 / 1000.0),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iou_matches_1000_grid_raster(a in snapped_box(), b in snapped_box()) {
        let (pa, pb) = (pixel_count(&a, 1000), pixel_count(&b, 1000));
        let inter = pa.iter().zip(&pb).filter(|(x, y)| **x && **y).count();
        let union = pa.iter().zip(&pb).filter(|(x, y)| **x || **y).count();
        let raster = inter as f64 / union as f64;
        prop_assert!((iou_axis_box(&a, &b) - raster).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in snapped_box(), b in snapped_box()) {
        let ab = iou_axis_box(&a, &b);
        prop_assert_eq!(ab, iou_axis_box(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(iou_axis_box(&a, &a), 1.0);
    }

    #[test]
    fn ray_hit_lies_on_segment_and_matches_sign_change(
        ox in -5.0..5.0f64, oy in -5.0..5.0f64, ang in -std::f64::consts::PI..std::f64::consts::PI,
        ax in -10.0..10.0f64, ay in -10.0..10.0f64, bx in -10.0..10.0f64, by in -10.0..10.0f64,
    ) {
        let (a, b) = (Vec2::new(ax, ay), Vec2::new(bx, by));
        prop_assume!(a.distance(b) > 1e-3);
        let o = Vec2::new(ox, oy);
        let d = Vec2::from_heading(ang);
        let got = ray_segment_intersect(o, d, (a, b)).unwrap();
        // Dense oracle: walk the segment and look for a crossing of the ray's line.
        let n = 10_000;
        let side = |p: Vec2| d.cross(p - o);
        let mut crossing = None;
        for i in 0..n {
            let (p, q) = (a + (b - a) * (i as f64 / n as f64), a + (b - a) * ((i + 1) as f64 / n as f64));
            if side(p) * side(q) <= 0.0 {
                let t = (p - o).dot(d);
                crossing = Some(t);
                break;
            }
        }
        let tol = a.distance(b) / n as f64 * 2.0;
        match (got, crossing) {
            (Some(t), _) => {
                let p = o + d * t;
                prop_assert!(t >= -1e-12);
                let on = (p - a).cross(b - a).abs() / a.distance(b);
                prop_assert!(on < 1e-6, "hit {t} is {on} off the segment");
            }
            (None, Some(t)) => prop_assert!(t < tol, "oracle crossing at t={t} missed"),
            (None, None) => {}
        }
    }

    #[test]
    fn frustum_accepts_inside_and_rejects_outside(
        yaw in -3.1..3.1f64, pitch in -0.5..0.5f64,
        az in -1.0..1.0f64, el in -1.0..1.0f64, dist in 0.5..300.0f64,
    ) {
        let pose = SensorPose { x: 1.0, y: -2.0, z: 7.0, yaw, pitch };
        let f = Frustum { pose, hfov: 1.2, vfov: 0.8, range: 250.0 };
        let (fwd, left, up) = (el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        let f1 = fwd * cp - up * sp;
        let dz = fwd * sp + up * cp;
        let (dx, dy) = (f1 * cy - left * sy, f1 * sy + left * cy);
        let p = Vec3::new(pose.x + dx * dist, pose.y + dy * dist, pose.z + dz * dist);
        let margin = 1e-6;
        let inside = az.abs() < 0.6 - margin && el.abs() < 0.4 - margin && dist < 250.0;
        let outside = az.abs() > 0.6 + margin || el.abs() > 0.4 + margin || dist > 250.0 + margin;
        if inside {
            prop_assert!(in_frustum(&f, p));
        }
        if outside {
            prop_assert!(!in_frustum(&f, p));
        }
    }

    #[test]
    fn sight_blocked_matches_dense_samples(
        cx in -3.0..3.0f64, cy in -3.0..3.0f64, heading in -3.1..3.1f64,
        hl in 0.2..2.0f64, hw in 0.1..1.0f64, height in 0.5..4.0f64,
        ex in -10.0..10.0f64, ey in -10.0..10.0f64, ez in 0.1..8.0f64,
        tx in -10.0..10.0f64, ty in -10.0..10.0f64, tz in 0.0..2.0f64,
    ) {
        let fp = OrientedBox::new(Vec2::new(cx, cy), hl, hw, heading).unwrap();
        let eye = Vec3::new(ex, ey, ez);
        let target = Vec3::new(tx, ty, tz);
        prop_assume!(!fp.contains(eye.ground()) && !fp.contains(target.ground()));
        let prism = Prism::new(fp, height).unwrap();
        let got = sight_blocked(&prism, eye, target);
        let inside = |b: &OrientedBox, h: f64, n: usize| {
            (0..=n).any(|i| {
                let s = i as f64 / n as f64;
                let p = Vec3::new(ex + (tx - ex) * s, ey + (ty - ey) * s, ez + (tz - ez) * s);
                b.contains(p.ground()) && p.z < h
            })
        };
        if inside(&grown(&fp, -1e-3), height - 1e-3, 20_000) {
            prop_assert!(got, "samples inside the prism but not blocked");
        }
        if got {
            prop_assert!(inside(&grown(&fp, 1e-2), height + 1e-2, 20_000), "blocked without any sample inside");
        }
    }
}
