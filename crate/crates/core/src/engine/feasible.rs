//! Locating strictly feasible starting points.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{
    solve, Affine, ConvexProgram, DomainGuard, EngineError, SmoothFunction, SolveOutcome,
    SolverSettings,
};

/// Axis-aligned sampling box; coordinates flagged `log_scale` are drawn
/// log-uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub log_scale: Vec<bool>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, log_scale: Vec<bool>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert_eq!(lower.len(), log_scale.len());
        Self {
            lower,
            upper,
            log_scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_nonempty(&self) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(&self.log_scale)
            .all(|((lo, hi), log)| lo <= hi && (!log || *lo > 0.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(&self.log_scale)
            .map(|((&lo, &hi), &log)| {
                let u: f64 = rng.random();
                if log {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                }
            })
            .collect()
    }
}

/// Constraint evaluated on a candidate point; negative means satisfied.
pub type PointCheck<'a> = &'a dyn Fn(&DVector<f64>) -> f64;

/// Random search for a point where every constraint is strictly negative.
///
/// `to_domain` maps a box sample to a candidate decision vector, which lets
/// callers sample in a reparametrized space (e.g. multiples of a
/// state-dependent bound).
pub fn find_feasible<R: Rng + ?Sized>(
    constraints: &[PointCheck<'_>],
    bounds: &SearchBox,
    to_domain: impl Fn(&[f64]) -> DVector<f64>,
    rng: &mut R,
    max_tries: usize,
) -> Result<DVector<f64>, EngineError> {
    if !bounds.is_nonempty() {
        return Err(EngineError::NoFeasiblePointFound { tries: 0 });
    }
    for _ in 0..max_tries {
        let z = to_domain(&bounds.sample(rng));
        if z.iter().all(|v| v.is_finite()) && constraints.iter().all(|c| c(&z) < 0.0) {
            return Ok(z);
        }
    }
    Err(EngineError::NoFeasiblePointFound { tries: max_tries })
}

/// `c(z) + s` on the augmented vector `(z, s)`.
struct Shifted {
    inner: Arc<dyn SmoothFunction>,
    dim: usize,
}

impl Shifted {
    fn head(&self, w: &DVector<f64>) -> DVector<f64> {
        w.rows(0, self.dim).into_owned()
    }
}

impl SmoothFunction for Shifted {
    fn value(&self, w: &DVector<f64>) -> f64 {
        self.inner.value(&self.head(w)) + w[self.dim]
    }
    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let g = self.inner.gradient(&self.head(w));
        let mut out = DVector::zeros(self.dim + 1);
        out.rows_mut(0, self.dim).copy_from(&g);
        out[self.dim] = 1.0;
        out
    }
    fn hessian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let h = self.inner.hessian(&self.head(w));
        let mut out = DMatrix::zeros(self.dim + 1, self.dim + 1);
        out.view_mut((0, 0), (self.dim, self.dim)).copy_from(&h);
        out
    }
}

#[derive(Debug, Clone)]
pub struct PhaseOneOutcome {
    /// Best point found.
    pub z: DVector<f64>,
    /// `-max_j c_j(z)` at that point; positive means strictly feasible.
    pub margin: f64,
    pub solve: SolveOutcome,
}

/// Maximizes the common slack `s` in `c_j(z) + s <= 0` (capped at `s <= 1`)
/// from any domain point `z0`. Constraints are expected to be normalized to
/// order-one values.
pub fn phase_one(
    constraints: &[Arc<dyn SmoothFunction>],
    dim: usize,
    domain: DomainGuard,
    z0: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<PhaseOneOutcome, EngineError> {
    if z0.len() != dim {
        return Err(EngineError::DimensionMismatch {
            expected: dim,
            got: z0.len(),
        });
    }
    if !(domain)(z0) {
        return Err(EngineError::OutsideDomain);
    }
    let worst = constraints
        .iter()
        .map(|c| c.value(z0))
        .fold(f64::NEG_INFINITY, f64::max);
    if !worst.is_finite() {
        return Err(EngineError::InfeasibleStart {
            max_constraint: worst,
        });
    }
    let s0 = (-worst).min(1.0) - 1.0;

    let mut objective = DVector::zeros(dim + 1);
    objective[dim] = -1.0;
    let mut cap = DVector::zeros(dim + 1);
    cap[dim] = 1.0;
    let inner_domain = domain.clone();
    let augmented_domain: DomainGuard = Arc::new(move |w: &DVector<f64>| {
        w[dim].is_finite() && inner_domain(&w.rows(0, dim).into_owned())
    });
    let mut prog = ConvexProgram::new(dim + 1, Arc::new(Affine::new(objective, 0.0)), augmented_domain)
        .with_constraint(Arc::new(Affine::new(cap, -1.0)));
    for c in constraints {
        prog = prog.with_constraint(Arc::new(Shifted {
            inner: c.clone(),
            dim,
        }));
    }
    let mut w0 = DVector::zeros(dim + 1);
    w0.rows_mut(0, dim).copy_from(z0);
    w0[dim] = s0;

    let out = solve(&prog, &w0, settings)?;
    let z = out.z().rows(0, dim).into_owned();
    let margin = -constraints
        .iter()
        .map(|c| c.value(&z))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PhaseOneOutcome {
        z,
        margin,
        solve: out,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::engine::positive_orthant;

    #[test]
    fn random_search_hits_a_disk() {
        let inside = |z: &DVector<f64>| (z[0] - 0.5).powi(2) + (z[1] - 0.5).powi(2) - 0.01;
        let bounds = SearchBox::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![false, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = find_feasible(&[&inside], &bounds, DVector::from_column_slice, &mut rng, 10_000)
            .unwrap();
        assert!(inside(&z) < 0.0);
    }

    #[test]
    fn random_search_reports_failure() {
        let never = |_: &DVector<f64>| 1.0;
        let bounds = SearchBox::new(vec![1.0], vec![10.0], vec![true]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = find_feasible(&[&never], &bounds, DVector::from_column_slice, &mut rng, 50);
        assert_eq!(err, Err(EngineError::NoFeasiblePointFound { tries: 50 }));
    }

    #[test]
    fn log_samples_stay_in_box() {
        let bounds = SearchBox::new(vec![1e-3], vec![1e3], vec![true]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let v = bounds.sample(&mut rng)[0];
            assert!((1e-3..=1e3).contains(&v));
        }
    }

    #[test]
    fn phase_one_finds_interior_of_thin_slab() {
        // 1 <= z0 + z1 <= 1.001, z > 0, starting outside.
        let lo: Arc<dyn SmoothFunction> = Arc::new(Affine::new(dvector![-1000.0, -1000.0], 1000.0));
        let hi: Arc<dyn SmoothFunction> = Arc::new(Affine::new(dvector![1000.0, 1000.0], -1001.0));
        let out = phase_one(&[lo.clone(), hi.clone()], 2, positive_orthant(), &dvector![3.0, 2.0], &SolverSettings::default())
            .unwrap();
        assert!(out.margin > 0.0);
        assert!(lo.value(&out.z) < 0.0 && hi.value(&out.z) < 0.0);
    }

    #[test]
    fn phase_one_reports_empty_interior() {
        // z <= 1 and z >= 1 leaves a single point.
        let a: Arc<dyn SmoothFunction> = Arc::new(Affine::new(dvector![1.0], -1.0));
        let b: Arc<dyn SmoothFunction> = Arc::new(Affine::new(dvector![-1.0], 1.0));
        let out = phase_one(&[a, b], 1, positive_orthant(), &dvector![0.5], &SolverSettings::default()).unwrap();
        assert!(out.margin <= 1e-9);
        assert!((out.z[0] - 1.0).abs() < 1e-6);
    }
}
