//! Trapezoidal contour integration on circles around the origin.
//!
//! Every integral in the transition formula runs over a product of circles
//! whose common radius keeps the interaction denominators away from zero.
//! On such circles the trapezoid rule is exact on Laurent monomials up to
//! aliasing: `M` nodes reproduce the coefficient of `xi^{-1}` exactly and
//! pick up spurious contributions only from exponents congruent mod `M`.
//! Convergence control therefore doubles the node count until two successive
//! levels agree.

use thiserror::Error;

use crate::bethe::SystemParams;
use crate::Complex64;

/// Largest number of integration variables the tensor grids support; the
/// cost grows as `M^n`.
pub const MAX_VARIABLES: usize = 5;

const MIN_NODES: usize = 8;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("contour radius {radius} outside the admissible interval (0, {max:.6})")]
    InadmissibleRadius { radius: f64, max: f64 },
    #[error("node count {0} must be even and at least {MIN_NODES}")]
    InvalidNodeCount(usize),
    #[error("no convergence at {nodes} nodes: deviation {delta:.3e} above tolerance {tol:.1e}")]
    NotConverged { nodes: usize, delta: f64, tol: f64 },
    #[error("{0} integration variables exceed the supported maximum of {MAX_VARIABLES}")]
    TooManyVariables(usize),
}

/// Largest admissible contour radius: the positive root of
/// `q r^2 + r - p = 0`. For any radius strictly below it the interaction
/// denominator obeys `|D| >= p - r - q r^2 > 0` on the product of circles.
pub fn max_radius(params: &SystemParams) -> f64 {
    let p = params.p();
    let q = params.q();
    (-1.0 + (1.0 + 4.0 * p * q).sqrt()) / (2.0 * q)
}

/// Circle radius and node count for one quadrature level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourSpec {
    radius: f64,
    nodes: usize,
}

impl ContourSpec {
    pub fn new(radius: f64, nodes: usize, params: &SystemParams) -> Result<Self, QuadratureError> {
        let max = max_radius(params);
        if !(radius > 0.0 && radius < max) || !radius.is_finite() {
            return Err(QuadratureError::InadmissibleRadius { radius, max });
        }
        if nodes < MIN_NODES || !nodes.is_multiple_of(2) {
            return Err(QuadratureError::InvalidNodeCount(nodes));
        }
        Ok(ContourSpec { radius, nodes })
    }

    /// Nine tenths of the admissible radius, 32 nodes to start.
    pub fn default_for(params: &SystemParams) -> Self {
        ContourSpec {
            radius: 0.9 * max_radius(params),
            nodes: 32,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }
}

/// One trapezoid node: `weight * f(xi)` summed over nodes approximates the
/// contour integral with measure `dxi / (2 pi i)`.
#[derive(Clone, Copy, Debug)]
pub struct QuadNode {
    pub xi: Complex64,
    pub weight: Complex64,
}

/// Equispaced nodes on the circle of the given radius; `weight = xi / count`.
pub fn circle_nodes(radius: f64, count: usize) -> Vec<QuadNode> {
    assert!(count >= 1 && radius > 0.0);
    let step = std::f64::consts::TAU / count as f64;
    (0..count)
        .map(|m| {
            let xi = Complex64::from_polar(radius, step * m as f64);
            QuadNode {
                xi,
                weight: xi / count as f64,
            }
        })
        .collect()
}

/// Stopping rule and cap for node doubling.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceSettings {
    /// Two successive levels must agree to this deviation.
    pub tol_rel: f64,
    /// Hard cap on the per-variable node count.
    pub max_nodes: usize,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings {
            tol_rel: 1e-9,
            max_nodes: 512,
        }
    }
}

/// A value accepted by the doubling rule, with the deviation between the two
/// agreeing levels as its error estimate.
#[derive(Clone, Copy, Debug)]
pub struct Refined<T> {
    pub value: T,
    pub est_error: f64,
    pub nodes: usize,
}

/// Outcome of a doubling run that may have hit the node cap.
#[derive(Clone, Debug)]
pub enum Refinement<T> {
    Converged(Refined<T>),
    /// The cap was reached before two levels agreed. `delta` is infinite if
    /// the cap allowed only a single evaluation.
    Exhausted { last: T, nodes: usize, delta: f64 },
}

/// Deviation that is relative above unit scale and absolute below, so
/// near-zero values do not demand unattainable relative accuracy.
pub fn scalar_deviation(prev: Complex64, cur: Complex64) -> f64 {
    (cur - prev).norm() / cur.norm().max(1.0)
}

/// Runs `eval` at `start` nodes and keeps doubling until two successive
/// results agree within `tol` under `deviation`, or doubling would exceed
/// `max_nodes`.
pub fn refine<T, E>(
    start: usize,
    max_nodes: usize,
    tol: f64,
    mut eval: impl FnMut(usize) -> Result<T, E>,
    deviation: impl Fn(&T, &T) -> f64,
) -> Result<Refinement<T>, E> {
    let mut nodes = start;
    let mut prev = eval(nodes)?;
    let mut last_delta = f64::INFINITY;
    loop {
        let next = nodes * 2;
        if next > max_nodes {
            return Ok(Refinement::Exhausted {
                last: prev,
                nodes,
                delta: last_delta,
            });
        }
        let cur = eval(next)?;
        let delta = deviation(&prev, &cur);
        if delta <= tol {
            return Ok(Refinement::Converged(Refined {
                value: cur,
                est_error: delta,
                nodes: next,
            }));
        }
        prev = cur;
        nodes = next;
        last_delta = delta;
    }
}

/// Tensor-grid contour integral of `f` over `n_vars` copies of the circle,
/// certified by node doubling. The integrand sees one slice of spectral
/// variables per call and must be finite on the contour.
pub fn integrate(
    n_vars: usize,
    f: impl Fn(&[Complex64]) -> Complex64,
    spec: &ContourSpec,
    settings: &ConvergenceSettings,
) -> Result<Refined<Complex64>, QuadratureError> {
    if n_vars == 0 || n_vars > MAX_VARIABLES {
        return Err(QuadratureError::TooManyVariables(n_vars));
    }
    let eval = |count: usize| -> Result<Complex64, QuadratureError> {
        let nodes = circle_nodes(spec.radius, count);
        let mut index = vec![0usize; n_vars];
        let mut xi = vec![Complex64::ZERO; n_vars];
        let mut sum = Complex64::ZERO;
        'grid: loop {
            let mut weight = Complex64::ONE;
            for (k, &m) in index.iter().enumerate() {
                xi[k] = nodes[m].xi;
                weight *= nodes[m].weight;
            }
            sum += weight * f(&xi);
            for slot in index.iter_mut() {
                *slot += 1;
                if *slot < count {
                    continue 'grid;
                }
                *slot = 0;
            }
            break;
        }
        Ok(sum)
    };
    match refine(spec.nodes, settings.max_nodes, settings.tol_rel, eval, |a, b| {
        scalar_deviation(*a, *b)
    })? {
        Refinement::Converged(r) => Ok(r),
        Refinement::Exhausted { nodes, delta, .. } => Err(QuadratureError::NotConverged {
            nodes,
            delta,
            tol: settings.tol_rel,
        }),
    }
}

/// Exponential clock factor attached to one spectral variable:
/// `eps(xi) = p / xi + q xi - 1`.
pub fn clock_exponent(xi: Complex64, params: &SystemParams) -> Complex64 {
    params.p() / xi + params.q() * xi - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64) -> SystemParams {
        SystemParams::new(p).unwrap()
    }

    #[test]
    fn max_radius_satisfies_defining_root() {
        for p in [0.2, 0.5, 0.6, 0.7, 0.9] {
            let sp = params(p);
            let r = max_radius(&sp);
            assert!(r > 0.0 && r < 1.0);
            let residual = sp.q() * r * r + r - sp.p();
            assert!(residual.abs() < 1e-14, "p = {p}: residual {residual:e}");
        }
        // symmetric case closes in radicals
        assert!((max_radius(&params(0.5)) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn denominator_bound_holds_on_admissible_circles() {
        use crate::bethe::SpectralPoint;
        use rand::SeedableRng;
        let sp = params(0.7);
        let r = 0.97 * max_radius(&sp);
        let bound = sp.p() - r - sp.q() * r * r;
        assert!(bound > 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let pt = SpectralPoint::random_on_circle(2, r, &mut rng);
            let d = sp.p() + sp.q() * pt.xi(0) * pt.xi(1) - pt.xi(0);
            assert!(d.norm() >= bound - 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        let sp = params(0.7);
        let rm = max_radius(&sp);
        assert!(ContourSpec::new(0.5 * rm, 32, &sp).is_ok());
        assert!(matches!(
            ContourSpec::new(rm, 32, &sp),
            Err(QuadratureError::InadmissibleRadius { .. })
        ));
        assert!(ContourSpec::new(0.0, 32, &sp).is_err());
        assert!(ContourSpec::new(-0.1, 32, &sp).is_err());
        assert!(matches!(
            ContourSpec::new(0.5 * rm, 33, &sp),
            Err(QuadratureError::InvalidNodeCount(33))
        ));
        assert!(ContourSpec::new(0.5 * rm, 6, &sp).is_err());
        let d = ContourSpec::default_for(&sp);
        assert_eq!(d.nodes(), 32);
        assert!((d.radius() - 0.9 * rm).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_is_exact_on_laurent_monomials() {
        let r = 0.3;
        let count = 16;
        let nodes = circle_nodes(r, count);
        for k in -15i32..=13 {
            let sum: Complex64 = nodes
                .iter()
                .map(|n| n.weight * n.xi.powi(k))
                .sum();
            // the sum cancels exactly in arithmetic; in floating point the
            // residual scales with the size of the individual terms, which
            // blow up like r^(k+1) for deep negative exponents
            let term_scale = r.powi(k + 1).max(1.0);
            if k == -1 {
                assert!((sum - Complex64::ONE).norm() < 1e-14);
            } else {
                // closest aliases sit at k = -17 and k = 15, outside this range
                assert!(
                    sum.norm() < 1e-13 * term_scale * count as f64,
                    "k = {k}: {sum}"
                );
            }
        }
        let aliased: Complex64 = nodes.iter().map(|n| n.weight * n.xi.powi(15)).sum();
        assert!((aliased - Complex64::from(r.powi(16))).norm() < 1e-14);
    }

    #[test]
    fn free_clock_integral_matches_bessel_series() {
        // coefficient of xi^{-1} in e^{eps(xi) t} at p = q = 1/2, t = 1:
        // e^{-1} sum_k (1/4)^k / (k!)^2
        let sp = params(0.5);
        let spec = ContourSpec::default_for(&sp);
        let refined = integrate(
            1,
            |xi| (clock_exponent(xi[0], &sp)).exp() / xi[0],
            &spec,
            &ConvergenceSettings::default(),
        )
        .unwrap();
        let mut series = 0.0f64;
        let mut term = 1.0f64;
        for k in 1..=30 {
            series += term;
            term *= 0.25 / (k as f64 * k as f64);
        }
        series *= (-1.0f64).exp();
        assert!((refined.value.re - series).abs() < 1e-12);
        assert!(refined.value.im.abs() < 1e-14);
    }

    #[test]
    fn tensor_grid_factorizes_products() {
        let sp = params(0.6);
        let spec = ContourSpec::default_for(&sp);
        let settings = ConvergenceSettings::default();
        let f1 = |xi: Complex64| (clock_exponent(xi, &sp) * 0.7).exp() / xi;
        let f2 = |xi: Complex64| (clock_exponent(xi, &sp) * 0.7).exp() * xi.powi(-3);
        let a = integrate(1, |x| f1(x[0]), &spec, &settings).unwrap().value;
        let b = integrate(1, |x| f2(x[0]), &spec, &settings).unwrap().value;
        let joint = integrate(2, |x| f1(x[0]) * f2(x[1]), &spec, &settings)
            .unwrap()
            .value;
        assert!((joint - a * b).norm() < 1e-12 * (a * b).norm().max(1.0));
    }

    #[test]
    fn doubling_certifies_slowly_converging_tail() {
        // 1 / (xi (1 - xi/a)) has xi^{-1} coefficient 1; aliasing decays like
        // (r/|a|)^M, so certification needs refinement past the start level
        let sp = params(0.5);
        let r = 0.3;
        let a = Complex64::from(0.36);
        let spec = ContourSpec::new(r, 32, &sp).unwrap();
        let refined = integrate(
            1,
            |xi| ((xi[0]) * (Complex64::ONE - xi[0] / a)).inv(),
            &spec,
            &ConvergenceSettings::default(),
        )
        .unwrap();
        assert!(refined.nodes >= 128, "nodes = {}", refined.nodes);
        assert!((refined.value - Complex64::ONE).norm() < 1e-8);
        assert!(refined.est_error <= 1e-9);
    }

    #[test]
    fn doubling_reports_exhaustion() {
        let sp = params(0.5);
        let r = 0.3;
        // pole just outside the contour: aliasing decays like 0.99^M, far too
        // slow for the node cap
        let a = Complex64::from(r / 0.99);
        let spec = ContourSpec::new(r, 32, &sp).unwrap();
        let err = integrate(
            1,
            |xi| ((xi[0]) * (Complex64::ONE - xi[0] / a)).inv(),
            &spec,
            &ConvergenceSettings::default(),
        )
        .unwrap_err();
        match err {
            QuadratureError::NotConverged { nodes, delta, tol } => {
                assert_eq!(nodes, 512);
                assert!(delta > tol);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn variable_count_capped() {
        let sp = params(0.5);
        let spec = ContourSpec::default_for(&sp);
        let err = integrate(6, |_| Complex64::ONE, &spec, &ConvergenceSettings::default());
        assert!(matches!(err, Err(QuadratureError::TooManyVariables(6))));
        let err = integrate(0, |_| Complex64::ONE, &spec, &ConvergenceSettings::default());
        assert!(matches!(err, Err(QuadratureError::TooManyVariables(0))));
    }

    #[test]
    fn refine_exhausts_when_cap_below_first_doubling() {
        let out: Result<Refinement<f64>, std::convert::Infallible> =
            refine(32, 32, 1e-9, |_| Ok(1.0), |a: &f64, b: &f64| (a - b).abs());
        match out.unwrap() {
            Refinement::Exhausted { nodes, delta, .. } => {
                assert_eq!(nodes, 32);
                assert!(delta.is_infinite());
            }
            Refinement::Converged(_) => panic!("cannot certify without a comparison"),
        }
    }
}
