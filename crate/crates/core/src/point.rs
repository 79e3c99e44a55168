//! Dense Euclidean vectors.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Index, Mul, Neg, Sub};

/// A point (or direction) in `R^n`, stored densely.
///
/// Serializes as a plain JSON array of numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn zeros(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    /// Canonical basis vector `e_axis` in `R^n`.
    pub fn unit(n: usize, axis: usize) -> Self {
        let mut v = vec![0.0; n];
        v[axis] = 1.0;
        Point(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, c: f64) -> Point {
        Point(self.0.iter().map(|v| c * v).collect())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Point {
        Point(v.as_slice().to_vec())
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Point> for &Point {
            type Output = Point;
            fn $method(self, rhs: &Point) -> Point {
                debug_assert_eq!(self.dim(), rhs.dim());
                Point(
                    self.0
                        .iter()
                        .zip(&rhs.0)
                        .map(|(a, b)| a $op b)
                        .collect(),
                )
            }
        }
        impl $trait<&Point> for Point {
            type Output = Point;
            fn $method(self, rhs: &Point) -> Point {
                (&self).$method(rhs)
            }
        }
        impl $trait<Point> for &Point {
            type Output = Point;
            fn $method(self, rhs: Point) -> Point {
                self.$method(&rhs)
            }
        }
        impl $trait<Point> for Point {
            type Output = Point;
            fn $method(self, rhs: Point) -> Point {
                (&self).$method(&rhs)
            }
        }
    };
}

impl_binop!(Add, add, +);
impl_binop!(Sub, sub, -);

impl Mul<f64> for &Point {
    type Output = Point;
    fn mul(self, c: f64) -> Point {
        self.scale(c)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, c: f64) -> Point {
        self.scale(c)
    }
}

impl Mul<&Point> for f64 {
    type Output = Point;
    fn mul(self, p: &Point) -> Point {
        p.scale(self)
    }
}

impl Mul<Point> for f64 {
    type Output = Point;
    fn mul(self, p: Point) -> Point {
        p.scale(self)
    }
}

impl Neg for &Point {
    type Output = Point;
    fn neg(self) -> Point {
        self.scale(-1.0)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        self.scale(-1.0)
    }
}
