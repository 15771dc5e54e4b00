//! Marginal-zeroing transforms.
//!
//! Two constructions turn a model into one whose single-station conditional
//! expectations vanish while every pair correlation stays put:
//!
//! - [`time_symmetrize`] multiplies both outcomes by a clock-indexed sign
//!   `r(m)`. Since `r(m)² = 1` the products `AB` are untouched pointwise, and
//!   when the outcome does not vary with the slot the conditional expectation
//!   factors as `E{A|λ} · Σ_m w(m) r(m)`, which is zero for a balanced `r`.
//! - [`layer_double`] splits every slot `m` into a pair `(m, m')` of half
//!   weight and flips both outcomes on `m'`. Each pair then sums to zero at
//!   each station regardless of the slot dependence of the rules.
//!
//! [`source_symmetrize`] indexes the sign by `λ` instead of the clock and is
//! kept only as a negative control.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::inequality::exact_marginal;
use crate::model::{
    InstalledSign, LocalModel, Setting, Sign, SignScope, SignSource, Station, TimeGrid,
    TransformStep,
};
use crate::rng::stream;
use crate::EXACT_TOL;

const SIGN_STREAM: u64 = 0x5349_474e;

/// A `±1` function on time slots together with its weighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SignFunction {
    values: Vec<Sign>,
    mean: f64,
    seed: Option<u64>,
}

impl SignFunction {
    pub fn new(grid: &TimeGrid, values: Vec<Sign>) -> Result<SignFunction> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        let mut mean = weighted_mean(grid, &values);
        if grid.is_uniform() {
            // exact representable mean (2k - N)/N
            let n = grid.len() as f64;
            let k = values.iter().filter(|s| **s == Sign::Plus).count() as f64;
            debug_assert!(((2.0 * k - n) / n - mean).abs() <= EXACT_TOL);
            mean = (2.0 * k - n) / n;
        }
        Ok(SignFunction {
            values,
            mean,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> SignFunction {
        self.seed = Some(seed);
        self
    }

    /// `r ≡ +1`.
    pub fn identity(grid: &TimeGrid) -> SignFunction {
        SignFunction {
            values: alloc::vec![Sign::Plus; grid.len()],
            mean: 1.0,
            seed: None,
        }
    }

    pub fn values(&self) -> &[Sign] {
        &self.values
    }

    pub fn value(&self, slot: usize) -> Sign {
        self.values[slot]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ_m w(m) r(m)` on the grid the function was built for.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn plus_count(&self) -> usize {
        self.values.iter().filter(|s| **s == Sign::Plus).count()
    }

    fn regridded(&self, grid: &TimeGrid) -> Result<SignFunction> {
        let mut r = SignFunction::new(grid, self.values.clone())?;
        r.seed = self.seed;
        Ok(r)
    }
}

fn weighted_mean(grid: &TimeGrid, values: &[Sign]) -> f64 {
    grid.weights()
        .iter()
        .zip(values)
        .map(|(w, s)| w * s.as_f64())
        .sum()
}

/// Number of `+1` slots needed for `target_mean` on `slots` uniform slots.
fn plus_slots(target_mean: f64, slots: usize) -> Option<usize> {
    if !target_mean.is_finite() {
        return None;
    }
    let k = (target_mean + 1.0) * slots as f64 / 2.0;
    let rounded = libm::round(k);
    if (k - rounded).abs() > 1e-9 || rounded < 0.0 || rounded > slots as f64 {
        None
    } else {
        Some(rounded as usize)
    }
}

/// Nearest mean of the form `(2k - N)/N` to `target`.
pub fn nearest_representable_mean(target: f64, slots: usize) -> f64 {
    let n = slots as f64;
    let k = libm::round((target.clamp(-1.0, 1.0) + 1.0) * n / 2.0);
    (2.0 * k - n) / n
}

/// Sign function on a uniform grid with exactly `k` slots at `+1`, where
/// `target_mean = (2k - N)/N`; the `+1` slots are picked by a seeded shuffle.
pub fn make_sign_function(grid: &TimeGrid, target_mean: f64, seed: u64) -> Result<SignFunction> {
    if !grid.is_uniform() {
        return Err(Error::InvalidInput(
            "sign functions with a target mean need a uniform grid".to_string(),
        ));
    }
    let n = grid.len();
    let k = plus_slots(target_mean, n).ok_or(Error::InfeasibleMean {
        target: target_mean,
        slots: n,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &[SIGN_STREAM, n as u64]));
    let mut values = alloc::vec![Sign::Minus; n];
    for &slot in &order[..k] {
        values[slot] = Sign::Plus;
    }
    let mean = (2.0 * k as f64 - n as f64) / n as f64;
    debug_assert!((mean - weighted_mean(grid, &values)).abs() <= EXACT_TOL);
    Ok(SignFunction {
        values,
        mean,
        seed: Some(seed),
    })
}

fn install_time_sign(
    model: &LocalModel,
    r: &SignFunction,
    scope: SignScope,
    op: &str,
) -> Result<LocalModel> {
    if model.sign().is_some() {
        return Err(Error::AlreadySigned);
    }
    if r.len() != model.grid().len() {
        return Err(Error::GridMismatch {
            expected: model.grid().len(),
            found: r.len(),
        });
    }
    let r = r.regridded(model.grid())?;
    let step = TransformStep {
        op: op.to_string(),
        seed: r.seed(),
        attained_mean: Some(r.mean()),
    };
    model.rebuilt(
        |p| {
            p.sign = Some(InstalledSign {
                source: SignSource::Time(r),
                scope,
            })
        },
        step,
    )
}

/// `A' = A·r(m)`, `B' = B·r(m)` with the same clock-indexed `r` at both stations.
pub fn time_symmetrize(model: &LocalModel, r: &SignFunction) -> Result<LocalModel> {
    install_time_sign(model, r, SignScope::Both, "rademacher")
}

/// As [`time_symmetrize`], optionally at one station only. One-sided
/// application scales `E{AB}` by `mean(r)` only when `AB` is slot-constant.
pub fn time_symmetrize_scoped(
    model: &LocalModel,
    r: &SignFunction,
    scope: SignScope,
) -> Result<LocalModel> {
    let op = match scope {
        SignScope::Both => "rademacher".to_string(),
        SignScope::Only(s) => format!("rademacher_one_sided:{s}"),
    };
    install_time_sign(model, r, scope, &op)
}

/// Multiplies outcomes by `r(λ)`. Negative control: `E{A r|λ} = r(λ) E{A|λ}`.
pub fn source_symmetrize(
    model: &LocalModel,
    r: Vec<Sign>,
    scope: SignScope,
) -> Result<LocalModel> {
    if model.sign().is_some() {
        return Err(Error::AlreadySigned);
    }
    let step = TransformStep {
        op: "source_sign".to_string(),
        seed: None,
        attained_mean: None,
    };
    model.rebuilt(
        |p| {
            p.sign = Some(InstalledSign {
                source: SignSource::Source(r),
                scope,
            })
        },
        step,
    )
}

/// Splits every slot into a half-weight pair and flips both outcomes on the
/// second member of each pair.
pub fn layer_double(model: &LocalModel) -> Result<LocalModel> {
    if model.is_doubled() {
        return Err(Error::AlreadyDoubled);
    }
    let doubled_grid = model.grid().doubled();
    let sign = match model.sign() {
        Some(InstalledSign {
            source: SignSource::Time(r),
            scope,
        }) => {
            let values = r.values().iter().flat_map(|&s| [s, s]).collect();
            let mut expanded = SignFunction::new(&doubled_grid, values)?;
            expanded.seed = r.seed();
            Some(InstalledSign {
                source: SignSource::Time(expanded),
                scope: *scope,
            })
        }
        other => other.cloned(),
    };
    let step = TransformStep {
        op: "layer_double".to_string(),
        seed: None,
        attained_mean: None,
    };
    model.rebuilt(
        |p| {
            p.doubled = true;
            p.sign = sign;
        },
        step,
    )
}

/// Outcome of a one-sided marginal target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalTarget {
    pub alpha: f64,
    /// Marginal of the targeted station before the transform.
    pub beta: f64,
    /// Exact marginal after the transform.
    pub achieved: f64,
    pub feasible: bool,
}

impl MarginalTarget {
    pub fn is_feasible(alpha: f64, beta: f64) -> bool {
        alpha.is_finite() && alpha.abs() <= 1.0 && alpha.abs() <= beta.abs() + EXACT_TOL
    }
}

/// Installs a both-sided clock sign with mean `alpha / β` so the marginal of
/// `station` at `setting` becomes `alpha`. Exact when that station's outcome
/// is slot-constant; `achieved` always reports the exact result. With
/// `round`, a non-representable mean is replaced by the nearest one.
pub fn target_marginal(
    model: &LocalModel,
    station: Station,
    setting: &Setting,
    alpha: f64,
    seed: u64,
    round: bool,
) -> Result<(LocalModel, MarginalTarget)> {
    if model.sign().is_some() {
        return Err(Error::AlreadySigned);
    }
    let beta = exact_marginal(model, station, setting)?;
    let infeasible = Error::InfeasibleTarget { alpha, beta };
    if !MarginalTarget::is_feasible(alpha, beta) {
        return Err(infeasible);
    }
    let mut mean = if beta.abs() < EXACT_TOL {
        1.0
    } else {
        (alpha / beta).clamp(-1.0, 1.0)
    };
    if round {
        mean = nearest_representable_mean(mean, model.grid().len());
    }
    let r = match make_sign_function(model.grid(), mean, seed) {
        Ok(r) => r,
        Err(Error::InfeasibleMean { .. }) => return Err(infeasible),
        Err(e) => return Err(e),
    };
    let transformed = install_time_sign(model, &r, SignScope::Both, "target_marginal")?;
    let achieved = exact_marginal(&transformed, station, setting)?;
    Ok((
        transformed,
        MarginalTarget {
            alpha,
            beta,
            achieved,
            feasible: true,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequality::{correlate, exact_conditional, Method};
    use crate::model::{
        InstrumentParamGen, ModelParts, OutcomeFn, SourceSpace,
    };
    use alloc::vec;

    fn constant_model(a: Sign, b: Sign, slots: usize) -> LocalModel {
        LocalModel::new(ModelParts {
            name: "const".into(),
            source: SourceSpace::uniform(1).unwrap(),
            base_grid: TimeGrid::uniform(slots).unwrap(),
            gen1: InstrumentParamGen::constant(Station::S1),
            gen2: InstrumentParamGen::constant(Station::S2),
            out1: OutcomeFn::constant(Station::S1, a),
            out2: OutcomeFn::constant(Station::S2, b),
            doubled: false,
            sign: None,
            provenance: vec![],
        })
        .unwrap()
    }

    #[test]
    fn balanced_on_four_slots() {
        let grid = TimeGrid::uniform(4).unwrap();
        let r = make_sign_function(&grid, 0.0, 9).unwrap();
        assert_eq!(r.plus_count(), 2);
        assert_eq!(r.mean(), 0.0);
        assert_eq!(weighted_mean(&grid, r.values()), 0.0);
    }

    #[test]
    fn three_quarters_plus() {
        let grid = TimeGrid::uniform(4).unwrap();
        let r = make_sign_function(&grid, 0.5, 1).unwrap();
        assert_eq!(r.plus_count(), 3);
        assert_eq!(r.mean(), 0.5);
    }

    #[test]
    fn odd_grid_cannot_balance() {
        let grid = TimeGrid::uniform(3).unwrap();
        assert_eq!(
            make_sign_function(&grid, 0.0, 1).unwrap_err(),
            Error::InfeasibleMean {
                target: 0.0,
                slots: 3
            }
        );
        assert!(make_sign_function(&grid, 1.5, 1).is_err());
        assert!(make_sign_function(&grid, f64::NAN, 1).is_err());
    }

    #[test]
    fn sign_choice_depends_on_seed_only() {
        let grid = TimeGrid::uniform(16).unwrap();
        let a = make_sign_function(&grid, 0.0, 5).unwrap();
        let b = make_sign_function(&grid, 0.0, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn alternating_sign_on_labels() {
        // r(m) = (-1)^m for labels m = 1..4, i.e. -1 at slot index 0
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let grid = base.grid().clone();
        let values = (1..=4)
            .map(|m| if m % 2 == 0 { Sign::Plus } else { Sign::Minus })
            .collect();
        let r = SignFunction::new(&grid, values).unwrap();
        let m = time_symmetrize(&base, &r).unwrap();
        let a = Setting::s1(0.0);
        for (idx, label) in (0..4).zip(1..=4) {
            let expected = if label % 2 == 0 { Sign::Plus } else { Sign::Minus };
            assert_eq!(m.evaluate_outcome(Station::S1, &a, 0, idx).unwrap(), expected);
        }
    }

    #[test]
    fn second_sign_is_rejected() {
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let r = make_sign_function(base.grid(), 0.0, 1).unwrap();
        let once = time_symmetrize(&base, &r).unwrap();
        assert_eq!(time_symmetrize(&once, &r).unwrap_err(), Error::AlreadySigned);
    }

    #[test]
    fn grid_mismatch() {
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let r = make_sign_function(&TimeGrid::uniform(2).unwrap(), 0.0, 1).unwrap();
        assert_eq!(
            time_symmetrize(&base, &r).unwrap_err(),
            Error::GridMismatch {
                expected: 4,
                found: 2
            }
        );
    }

    #[test]
    fn marginal_scales_with_sign_mean() {
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let r = make_sign_function(base.grid(), 0.5, 3).unwrap();
        let m = time_symmetrize(&base, &r).unwrap();
        let a = Setting::s1(0.0);
        // (2p - 1)·β with p = 3/4, β = 1
        let by_formula = (2.0 * 0.75 - 1.0) * 1.0;
        let by_sum: f64 = (0..4)
            .map(|s| 0.25 * m.evaluate_outcome(Station::S1, &a, 0, s).unwrap().as_f64())
            .sum();
        assert_eq!(by_formula, 0.5);
        assert!((by_sum - by_formula).abs() < 1e-15);
        assert!((exact_marginal(&m, Station::S1, &a).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_sided_sign_scales_correlation() {
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let r = make_sign_function(base.grid(), 0.5, 3).unwrap();
        let m = time_symmetrize_scoped(&base, &r, SignScope::Only(Station::S1)).unwrap();
        let rep = correlate(&m, &Setting::s1(0.0), &Setting::s2(0.0), Method::Exact, 0, 0).unwrap();
        assert!((rep.e_ab - 0.5).abs() < 1e-15);
        assert!((rep.marginal_b - 1.0).abs() < 1e-15);
        assert_eq!(m.provenance()[0].op, "rademacher_one_sided:S1");
    }

    #[test]
    fn target_zero_from_constant() {
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let a = Setting::s1(0.0);
        let (m, t) = target_marginal(&base, Station::S1, &a, 0.0, 7, false).unwrap();
        assert_eq!(t.beta, 1.0);
        assert_eq!(t.achieved, 0.0);
        assert!(t.feasible);
        let rep = correlate(&m, &a, &Setting::s2(0.0), Method::Exact, 0, 0).unwrap();
        assert_eq!(rep.e_ab, 1.0);
    }

    #[test]
    fn target_one_is_identity() {
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let (m, t) = target_marginal(&base, Station::S1, &Setting::s1(0.0), 1.0, 7, false).unwrap();
        match m.sign().unwrap().source {
            SignSource::Time(ref r) => assert!(r.values().iter().all(|s| *s == Sign::Plus)),
            _ => panic!("expected time sign"),
        }
        assert_eq!(t.achieved, 1.0);
    }

    #[test]
    fn target_beyond_base_marginal_is_infeasible() {
        // β = 0.5: A = +1 on three of four slots
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let r = SignFunction::new(
            base.grid(),
            vec![Sign::Plus, Sign::Plus, Sign::Plus, Sign::Minus],
        )
        .unwrap();
        let half = time_symmetrize_scoped(&base, &r, SignScope::Only(Station::S1)).unwrap();
        let half = LocalModel::new({
            // bake the sign into an unsigned model via a slot table
            let mut p = half.parts().clone();
            p.sign = None;
            p.out1.rule = crate::model::OutcomeRule::Table(
                crate::model::OutcomeTable::from_fn(1, 1, 1, 4, |_, _, _, m| r.value(m)).unwrap(),
            );
            p
        })
        .unwrap();
        let a = Setting::s1(0.0);
        assert_eq!(exact_marginal(&half, Station::S1, &a).unwrap(), 0.5);
        assert_eq!(
            target_marginal(&half, Station::S1, &a, 0.75, 1, false).unwrap_err(),
            Error::InfeasibleTarget {
                alpha: 0.75,
                beta: 0.5
            }
        );
    }

    #[test]
    fn rounding_is_opt_in() {
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let a = Setting::s1(0.0);
        assert!(matches!(
            target_marginal(&base, Station::S1, &a, 0.3, 1, false),
            Err(Error::InfeasibleTarget { .. })
        ));
        let (_, t) = target_marginal(&base, Station::S1, &a, 0.3, 1, true).unwrap();
        assert_eq!(t.achieved, 0.5);
    }

    #[test]
    fn doubling_constant_model() {
        let base = constant_model(Sign::Plus, Sign::Plus, 1);
        let d = layer_double(&base).unwrap();
        let a = Setting::s1(0.0);
        assert_eq!(d.grid().len(), 2);
        assert_eq!(d.evaluate_outcome(Station::S1, &a, 0, 0).unwrap(), Sign::Plus);
        assert_eq!(d.evaluate_outcome(Station::S1, &a, 0, 1).unwrap(), Sign::Minus);
        let rep = correlate(&d, &a, &Setting::s2(0.0), Method::Exact, 0, 0).unwrap();
        assert_eq!(rep.marginal_a, 0.0);
        assert_eq!(rep.e_ab, 1.0);
        assert_eq!(layer_double(&d).unwrap_err(), Error::AlreadyDoubled);
        let total: f64 = d.grid().weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_after_sign_expands_sign() {
        let base = constant_model(Sign::Plus, Sign::Plus, 4);
        let r = make_sign_function(base.grid(), 0.5, 3).unwrap();
        let signed = time_symmetrize(&base, &r).unwrap();
        let d = layer_double(&signed).unwrap();
        let a = Setting::s1(0.0);
        for slot in 0..8 {
            let parent = signed.evaluate_outcome(Station::S1, &a, 0, slot / 2).unwrap();
            let flip = if slot % 2 == 0 { Sign::Plus } else { Sign::Minus };
            assert_eq!(d.evaluate_outcome(Station::S1, &a, 0, slot).unwrap(), parent * flip);
        }
        assert_eq!(exact_conditional(&d, Station::S1, &a).unwrap(), vec![0.0]);
    }

    #[test]
    fn source_sign_keeps_conditionals_nonzero() {
        let base = LocalModel::new(ModelParts {
            source: SourceSpace::uniform(2).unwrap(),
            ..constant_model(Sign::Plus, Sign::Plus, 4).into_parts()
        })
        .unwrap();
        let m = source_symmetrize(&base, vec![Sign::Plus, Sign::Minus], SignScope::Both).unwrap();
        let a = Setting::s1(0.0);
        assert_eq!(exact_conditional(&m, Station::S1, &a).unwrap(), vec![1.0, -1.0]);
        assert_eq!(exact_marginal(&m, Station::S1, &a).unwrap(), 0.0);
    }
}
