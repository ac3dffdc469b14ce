//! Problem definitions: nodal drift and diffusion maps, initial data, and
//! the built-in benchmark problem
//! `du = (-Au + 1/(1+|u|)) dt + delta u dW` on (0,1) or (0,1)^2.
//!
//! Diffusion is restricted to scalar Nemytskii form: g(u(x)) multiplies the
//! noise pointwise. That is exactly the class covered by the commutative
//! Milstein correction in [`crate::scheme`].

use crate::fem::{Dim, Point, StateVector};

/// Closed set of scalar maps applied nodally. Keeping this an enum (rather
/// than boxed closures) keeps step loops branch-predictable and makes
/// problems definable from configuration alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarMap {
    Zero,
    Constant(f64),
    /// u -> c * u
    Scale(f64),
    /// u -> 1 / (1 + |u|)
    BoundedReciprocal,
}

impl ScalarMap {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            ScalarMap::Zero => 0.0,
            ScalarMap::Constant(c) => c,
            ScalarMap::Scale(c) => c * u,
            ScalarMap::BoundedReciprocal => 1.0 / (1.0 + u.abs()),
        }
    }
}

/// Initial datum choices evaluable on either domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialDatum {
    /// sin(2 pi x) in 1D, sin(2 pi x1) sin(2 pi x2) in 2D.
    SineProduct,
    Zero,
}

impl InitialDatum {
    pub fn eval(self, p: Point, dim: Dim) -> f64 {
        match self {
            InitialDatum::Zero => 0.0,
            InitialDatum::SineProduct => {
                let two_pi = 2.0 * std::f64::consts::PI;
                match dim {
                    Dim::One => (two_pi * p[0]).sin(),
                    Dim::Two => (two_pi * p[0]).sin() * (two_pi * p[1]).sin(),
                }
            }
        }
    }
}

/// Drift F, Nemytskii diffusion g with derivative g', initial datum, and
/// noise intensity.
#[derive(Clone, Copy, Debug)]
pub struct ProblemSpec {
    pub drift: ScalarMap,
    pub diffusion: ScalarMap,
    pub diffusion_derivative: ScalarMap,
    pub initial: InitialDatum,
    pub intensity: f64,
    /// The Milstein correction used here requires commutative noise; scalar
    /// Nemytskii diffusion always satisfies it.
    pub commutative_noise: bool,
}

/// The benchmark problem: F(u) = 1/(1+|u|), g(u) = delta u, u0 the sine
/// product, driven at intensity delta.
pub fn benchmark_problem(delta: f64) -> ProblemSpec {
    assert!(delta >= 0.0, "noise intensity must be nonnegative");
    ProblemSpec {
        drift: ScalarMap::BoundedReciprocal,
        diffusion: ScalarMap::Scale(delta),
        diffusion_derivative: ScalarMap::Constant(delta),
        initial: InitialDatum::SineProduct,
        intensity: delta,
        commutative_noise: true,
    }
}

/// Deterministic heat-equation variant (F and g switched off), used by the
/// exact-solution convergence checks.
pub fn deterministic_heat_problem() -> ProblemSpec {
    ProblemSpec {
        drift: ScalarMap::Zero,
        diffusion: ScalarMap::Zero,
        diffusion_derivative: ScalarMap::Zero,
        initial: InitialDatum::SineProduct,
        intensity: 0.0,
        commutative_noise: true,
    }
}

/// Entrywise application of a scalar map (the nodal Nemytskii operator).
pub fn nemytskii(map: ScalarMap, v: &StateVector) -> StateVector {
    StateVector::from_vec(v.as_slice().iter().map(|&u| map.eval(u)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_values() {
        let p = benchmark_problem(0.5);
        assert_eq!(p.drift.eval(0.0), 1.0);
        assert_eq!(p.diffusion.eval(2.0), 1.0);
        assert_eq!(p.diffusion_derivative.eval(2.0) * p.diffusion.eval(2.0), 0.5);
        assert!(p.commutative_noise);
    }

    #[test]
    fn nemytskii_examples() {
        let v = StateVector::from_vec(vec![0.0, 1.0]);
        let id = nemytskii(ScalarMap::Scale(1.0), &v);
        assert_eq!(id.as_slice(), v.as_slice());

        let f = nemytskii(ScalarMap::BoundedReciprocal, &v);
        assert_eq!(f.as_slice(), &[1.0, 0.5]);

        let z = nemytskii(ScalarMap::Zero, &v);
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn drift_difference_quotients_bounded_by_one() {
        // |F'| <= 1 for F(u) = 1/(1+|u|): audit sampled quotients on [-10,10].
        let f = ScalarMap::BoundedReciprocal;
        let n = 2000;
        for i in 0..n {
            let a = -10.0 + 20.0 * i as f64 / n as f64;
            let b = a + 20.0 / n as f64;
            let quotient = (f.eval(a) - f.eval(b)).abs() / (a - b).abs();
            assert!(quotient <= 1.0 + 1e-12, "{quotient} at {a}");
        }
    }

    #[test]
    fn diffusion_derivative_matches_finite_difference() {
        let p = benchmark_problem(0.5);
        let eps = 1e-6;
        for i in 0..200 {
            let u = -5.0 + 10.0 * i as f64 / 200.0;
            let fd = (p.diffusion.eval(u + eps) - p.diffusion.eval(u - eps)) / (2.0 * eps);
            assert!((fd - p.diffusion_derivative.eval(u)).abs() < 1e-6);
        }
    }

    #[test]
    fn initial_datum_values() {
        let u0 = InitialDatum::SineProduct;
        assert!((u0.eval([0.25, 0.0], Dim::One) - 1.0).abs() < 1e-15);
        assert!((u0.eval([0.25, 0.25], Dim::Two) - 1.0).abs() < 1e-15);
        assert!(u0.eval([0.5, 0.5], Dim::Two).abs() < 1e-30);
    }
}
