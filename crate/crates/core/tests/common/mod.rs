//! Shared instance generators for the integration suites.

use feasolve_core::geometry::SetSpec;
use feasolve_core::point::Point;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Point {
    Point(
        (0..n)
            .map(|_| rng.gen_range(-half_width..half_width))
            .collect(),
    )
}

pub fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Point {
    loop {
        let v = random_point(rng, n, 1.0);
        let norm = v.norm();
        if norm > 1e-3 {
            return v.scale(1.0 / norm);
        }
    }
}

/// A random convex catalog set in `R^n` (affine, hyperplane, halfspace,
/// ball, or box).
pub fn random_convex_set(rng: &mut ChaCha8Rng, n: usize) -> SetSpec {
    match rng.gen_range(0..5) {
        0 => {
            let k = rng.gen_range(1..=n);
            let spanning = (0..k).map(|_| random_point(rng, n, 1.0)).collect();
            SetSpec::affine(random_point(rng, n, 3.0), spanning).expect("valid affine")
        }
        1 => SetSpec::hyperplane(random_unit(rng, n), rng.gen_range(-3.0..3.0))
            .expect("valid hyperplane"),
        2 => SetSpec::halfspace(random_unit(rng, n), rng.gen_range(-3.0..3.0))
            .expect("valid halfspace"),
        3 => SetSpec::ball(random_point(rng, n, 3.0), rng.gen_range(0.5..3.0)).expect("valid ball"),
        _ => {
            let a = random_point(rng, n, 3.0);
            let b = random_point(rng, n, 3.0);
            let lower: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x.min(*y)).collect();
            let upper: Vec<f64> = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| x.max(*y) + 0.1)
                .collect();
            SetSpec::box_set(Point(lower), Point(upper)).expect("valid box")
        }
    }
}

/// Any catalog set, including the nonconvex variants.
pub fn random_set(rng: &mut ChaCha8Rng, n: usize) -> SetSpec {
    match rng.gen_range(0..7) {
        0..=4 => random_convex_set(rng, n),
        5 => SetSpec::sphere(random_point(rng, n, 3.0), rng.gen_range(0.5..3.0))
            .expect("valid sphere"),
        _ => {
            let count = rng.gen_range(1..=5);
            let points = (0..count).map(|_| random_point(rng, n, 3.0)).collect();
            SetSpec::cloud(points).expect("valid cloud")
        }
    }
}

/// A consistent instance (affine, ball, halfspace) with a certified common
/// point, returned alongside that point.  The ball may be active (common
/// point on its boundary) or slack.
pub fn random_consistent_instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<SetSpec>, Point) {
    let z = random_point(rng, n, 2.0);

    let k = rng.gen_range(1..=n);
    let spanning: Vec<Point> = (0..k).map(|_| random_point(rng, n, 1.0)).collect();
    // Anchor elsewhere on the subspace so the projector does real work.
    let affine = SetSpec::affine(z.clone(), spanning).expect("valid affine");
    let affine = match &affine {
        SetSpec::Affine(sub) => {
            let mut anchor = z.clone();
            for b in sub.basis() {
                anchor = anchor + b * rng.gen_range(-2.0..2.0);
            }
            SetSpec::Affine(sub.with_anchor(anchor))
        }
        _ => unreachable!(),
    };

    let offset_dir = random_unit(rng, n);
    let boundary = rng.gen_bool(0.5);
    let shift = rng.gen_range(0.3..1.5);
    let center = &z + &offset_dir.scale(shift);
    let radius = if boundary {
        shift
    } else {
        shift + rng.gen_range(0.2..1.0)
    };
    let ball = SetSpec::ball(center, radius).expect("valid ball");

    let normal = random_unit(rng, n);
    let offset = normal.dot(&z) + rng.gen_range(0.2..2.0);
    let halfspace = SetSpec::halfspace(normal, offset).expect("valid halfspace");

    (vec![affine, ball, halfspace], z)
}

/// The analytic two-line instance `A_1 = {y = 0}`, `A_2 = {y = 1}` in
/// `R^2`; with `lambda = 1/2` the cycle maps `(0, t)` to `(0, (1+t)/4)`.
pub fn parallel_lines() -> Vec<SetSpec> {
    vec![
        SetSpec::hyperplane(Point(vec![0.0, 1.0]), 0.0).expect("valid"),
        SetSpec::hyperplane(Point(vec![0.0, 1.0]), 1.0).expect("valid"),
    ]
}
