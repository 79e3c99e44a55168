//! Instance builders shared by the benchmark targets.

use feasolve_core::geometry::SetSpec;
use feasolve_core::operators::CycleOp;
use feasolve_core::point::Point;

/// A mixed cycle (affine subspace, ball, halfspace) in `R^n` with sets
/// arranged around the origin.
pub fn mixed_cycle(n: usize, lambda: f64) -> CycleOp {
    let mut spanning = Vec::new();
    for i in 0..n / 2 {
        spanning.push(Point::unit(n, i));
    }
    let affine = SetSpec::affine(Point::zeros(n), spanning).expect("valid affine");
    let mut center = Point::zeros(n);
    center.0[n - 1] = 0.5;
    let ball = SetSpec::ball(center, 2.0).expect("valid ball");
    let halfspace = SetSpec::halfspace(Point::unit(n, 0), 1.0).expect("valid halfspace");
    CycleOp::new(vec![affine, ball, halfspace], lambda).expect("valid cycle")
}

/// The two parallel hyperplanes `x_{n-1} = 0` and `x_{n-1} = 1`.
pub fn parallel_hyperplanes(n: usize, lambda: f64) -> CycleOp {
    let a = SetSpec::hyperplane(Point::unit(n, n - 1), 0.0).expect("valid");
    let b = SetSpec::hyperplane(Point::unit(n, n - 1), 1.0).expect("valid");
    CycleOp::new(vec![a, b], lambda).expect("valid cycle")
}
