//! Correlations, conditional expectations, CHSH and reference values.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::distributions::{Distribution, WeightedIndex};

use crate::density::JointTable;
use crate::error::{Error, Result};
use crate::model::{LocalModel, Setting, Station};
use crate::rng::{derive_seed, stream};

/// Angles used for setting grids in checks and schedules.
pub const TEST_ANGLES: [f64; 4] = [0.0, FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4];

/// Tolerance of the `|S| ≤ 2` check on exact arithmetic paths.
pub const BOUND_TOL: f64 = 1e-9;

pub const LOCAL_BOUND: f64 = 2.0;

const MC_STREAM: u64 = 0x4d43;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub a: Setting,
    pub b: Setting,
    pub e_ab: f64,
    pub marginal_a: f64,
    pub marginal_b: f64,
    /// `E{A|λ}` per source state; NaN for states never sampled.
    pub cond_a: Vec<f64>,
    pub cond_b: Vec<f64>,
    pub method: Method,
    pub trials: u64,
    pub std_error: f64,
}

fn require(setting: &Setting, station: Station) -> Result<()> {
    if setting.station() == station {
        Ok(())
    } else {
        Err(Error::StationMismatch {
            expected: station,
            found: setting.station(),
        })
    }
}

/// `E{A|λ}` (or `E{B|λ}`) for every `λ`, summed over slots.
pub fn exact_conditional(model: &LocalModel, station: Station, setting: &Setting) -> Result<Vec<f64>> {
    require(setting, station)?;
    let grid = model.grid();
    (0..model.source().len())
        .map(|lambda| {
            (0..grid.len()).try_fold(0.0, |acc, slot| {
                let s = model.evaluate_outcome(station, setting, lambda, slot)?;
                Ok(acc + grid.weight(slot) * s.as_f64())
            })
        })
        .collect()
}

/// One-sided marginal `Σ_λ prior(λ) E{A|λ}`.
pub fn exact_marginal(model: &LocalModel, station: Station, setting: &Setting) -> Result<f64> {
    let cond = exact_conditional(model, station, setting)?;
    Ok(model
        .source()
        .weights()
        .iter()
        .zip(&cond)
        .map(|(w, c)| w * c)
        .sum())
}

/// `E{AB}` by direct summation over `(λ, m)`.
pub fn exact_pair_direct(model: &LocalModel, a: &Setting, b: &Setting) -> Result<f64> {
    require(a, Station::S1)?;
    require(b, Station::S2)?;
    let grid = model.grid();
    let mut total = 0.0;
    for (lambda, prior) in model.source().weights().iter().enumerate() {
        for slot in 0..grid.len() {
            let oa = model.evaluate_outcome(Station::S1, a, lambda, slot)?;
            let ob = model.evaluate_outcome(Station::S2, b, lambda, slot)?;
            total += prior * grid.weight(slot) * (oa * ob).as_f64();
        }
    }
    Ok(total)
}

/// `E{AB}` summed over the cells of a tabulated joint distribution. The
/// instrument values come from the table, not from the generators.
pub fn exact_pair_from_table(model: &LocalModel, table: &JointTable) -> Result<f64> {
    let (a, b) = table.settings();
    table.entries().iter().try_fold(0.0, |acc, (k, p)| {
        let oa = model.outcome_given_value(Station::S1, &a, k.lambda, k.star, k.slot)?;
        let ob = model.outcome_given_value(Station::S2, &b, k.lambda, k.dblstar, k.slot)?;
        Ok(acc + p * (oa * ob).as_f64())
    })
}

fn exact_report(model: &LocalModel, a: &Setting, b: &Setting) -> Result<CorrelationReport> {
    let e_ab = exact_pair_direct(model, a, b)?;
    let cond_a = exact_conditional(model, Station::S1, a)?;
    let cond_b = exact_conditional(model, Station::S2, b)?;
    let prior = model.source().weights();
    let dot = |c: &[f64]| prior.iter().zip(c).map(|(w, x)| w * x).sum::<f64>();
    Ok(CorrelationReport {
        a: *a,
        b: *b,
        e_ab,
        marginal_a: dot(&cond_a),
        marginal_b: dot(&cond_b),
        cond_a,
        cond_b,
        method: Method::Exact,
        trials: 0,
        std_error: 0.0,
    })
}

fn monte_carlo_report(
    model: &LocalModel,
    a: &Setting,
    b: &Setting,
    trials: u64,
    seed: u64,
) -> Result<CorrelationReport> {
    require(a, Station::S1)?;
    require(b, Station::S2)?;
    if trials == 0 {
        return Err(Error::ZeroTrials);
    }
    let lambdas = WeightedIndex::new(model.source().weights())
        .map_err(|_| Error::InvalidWeights(alloc::string::String::from("source prior")))?;
    let slots = WeightedIndex::new(model.grid().weights())
        .map_err(|_| Error::InvalidWeights(alloc::string::String::from("slot weights")))?;
    let mut rng = stream(seed, &[MC_STREAM]);
    let n_lambda = model.source().len();
    let mut count = alloc::vec![0u64; n_lambda];
    let mut sum_a = alloc::vec![0i64; n_lambda];
    let mut sum_b = alloc::vec![0i64; n_lambda];
    let mut sum_ab = 0i64;
    for _ in 0..trials {
        let lambda = lambdas.sample(&mut rng);
        let slot = slots.sample(&mut rng);
        let oa = model.evaluate_outcome(Station::S1, a, lambda, slot)?;
        let ob = model.evaluate_outcome(Station::S2, b, lambda, slot)?;
        count[lambda] += 1;
        sum_a[lambda] += i64::from(oa.value());
        sum_b[lambda] += i64::from(ob.value());
        sum_ab += i64::from((oa * ob).value());
    }
    let n = trials as f64;
    let e_ab = sum_ab as f64 / n;
    // AB² = 1, so the sample variance is n/(n-1)·(1 - mean²)
    let std_error = if trials > 1 {
        libm::sqrt(((1.0 - e_ab * e_ab) * n / (n - 1.0)).max(0.0) / n)
    } else {
        0.0
    };
    let cond = |sums: &[i64]| -> Vec<f64> {
        sums.iter()
            .zip(&count)
            .map(|(&s, &c)| if c == 0 { f64::NAN } else { s as f64 / c as f64 })
            .collect()
    };
    Ok(CorrelationReport {
        a: *a,
        b: *b,
        e_ab,
        marginal_a: sum_a.iter().sum::<i64>() as f64 / n,
        marginal_b: sum_b.iter().sum::<i64>() as f64 / n,
        cond_a: cond(&sum_a),
        cond_b: cond(&sum_b),
        method: Method::MonteCarlo,
        trials,
        std_error,
    })
}

/// Exact sums, or i.i.d. sampling of `(λ, m)` from a stream keyed by `seed`.
pub fn correlate(
    model: &LocalModel,
    a: &Setting,
    b: &Setting,
    method: Method,
    trials: u64,
    seed: u64,
) -> Result<CorrelationReport> {
    match method {
        Method::Exact => exact_report(model, a, b),
        Method::MonteCarlo => monte_carlo_report(model, a, b, trials, seed),
    }
}

/// `(a, a', b, b')` for `S = E(a,b) - E(a,b') + E(a',b) + E(a',b')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshSettings {
    pub a: Setting,
    pub a2: Setting,
    pub b: Setting,
    pub b2: Setting,
}

impl ChshSettings {
    pub fn new(a: f64, a2: f64, b: f64, b2: f64) -> ChshSettings {
        ChshSettings {
            a: Setting::s1(a),
            a2: Setting::s1(a2),
            b: Setting::s2(b),
            b2: Setting::s2(b2),
        }
    }

    /// `a = 0, a' = π/2, b = π/4, b' = 3π/4`.
    pub fn optimal() -> ChshSettings {
        ChshSettings::new(TEST_ANGLES[0], TEST_ANGLES[2], TEST_ANGLES[1], TEST_ANGLES[3])
    }

    /// The four setting pairs in CHSH order, with their `(i, j)` indices.
    pub fn pairs(&self) -> [((usize, usize), Setting, Setting); 4] {
        [
            ((0, 0), self.a, self.b),
            ((0, 1), self.a, self.b2),
            ((1, 0), self.a2, self.b),
            ((1, 1), self.a2, self.b2),
        ]
    }

    pub fn angles(&self) -> [f64; 4] {
        [self.a.angle(), self.a2.angle(), self.b.angle(), self.b2.angle()]
    }
}

pub fn chsh_value(e: [f64; 4]) -> f64 {
    e[0] - e[1] + e[2] + e[3]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChshResult {
    pub settings: ChshSettings,
    pub correlations: [CorrelationReport; 4],
    pub s_value: f64,
    pub local_bound: f64,
    pub within_local_bound: bool,
    pub tol: f64,
}

impl ChshResult {
    pub fn e_values(&self) -> [f64; 4] {
        [
            self.correlations[0].e_ab,
            self.correlations[1].e_ab,
            self.correlations[2].e_ab,
            self.correlations[3].e_ab,
        ]
    }
}

/// Seed for one setting pair of a CHSH run; independent of evaluation order.
pub fn pair_seed(seed: u64, pair: (usize, usize)) -> u64 {
    derive_seed(seed, &[pair.0 as u64, pair.1 as u64])
}

pub fn chsh(
    model: &LocalModel,
    settings: &ChshSettings,
    method: Method,
    trials: u64,
    seed: u64,
    tol: f64,
) -> Result<ChshResult> {
    require(&settings.a, Station::S1)?;
    require(&settings.a2, Station::S1)?;
    require(&settings.b, Station::S2)?;
    require(&settings.b2, Station::S2)?;
    let mut reports = Vec::with_capacity(4);
    for (pair, a, b) in settings.pairs() {
        reports.push(correlate(model, &a, &b, method, trials, pair_seed(seed, pair))?);
    }
    let correlations: [CorrelationReport; 4] = match reports.try_into() {
        Ok(arr) => arr,
        Err(_) => unreachable!("four setting pairs"),
    };
    let s_value = chsh_value([
        correlations[0].e_ab,
        correlations[1].e_ab,
        correlations[2].e_ab,
        correlations[3].e_ab,
    ]);
    Ok(ChshResult {
        settings: *settings,
        correlations,
        s_value,
        local_bound: LOCAL_BOUND,
        within_local_bound: s_value.abs() <= LOCAL_BOUND + tol,
        tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicBound {
    pub value: f64,
    pub strategies: usize,
}

/// Largest CHSH value over every deterministic `±1` assignment of outcomes to
/// `n` settings per side, maximised over every choice of `(a, a', b, b')`
/// among those settings.
pub fn deterministic_bound(n_settings_per_side: usize) -> Result<DeterministicBound> {
    let n = n_settings_per_side;
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedSize(n));
    }
    let bit = |assignment: u32, i: usize| -> f64 {
        if assignment >> i & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    };
    let mut best = f64::NEG_INFINITY;
    let mut strategies = 0;
    for assignment in 0..(1u32 << (2 * n)) {
        strategies += 1;
        let a = |i: usize| bit(assignment, i);
        let b = |j: usize| bit(assignment, n + j);
        for i in 0..n {
            for i2 in (0..n).filter(|&x| x != i) {
                for j in 0..n {
                    for j2 in (0..n).filter(|&x| x != j) {
                        let s = chsh_value([a(i) * b(j), a(i) * b(j2), a(i2) * b(j), a(i2) * b(j2)]);
                        best = best.max(s);
                    }
                }
            }
        }
    }
    Ok(DeterministicBound {
        value: best,
        strategies,
    })
}

/// Singlet reference `-cos(a - b)`.
pub fn reference_correlation(a: &Setting, b: &Setting) -> f64 {
    -libm::cos(a.angle() - b.angle())
}

pub fn reference_chsh(settings: &ChshSettings) -> f64 {
    let [p0, p1, p2, p3] = settings.pairs();
    chsh_value([
        reference_correlation(&p0.1, &p0.2),
        reference_correlation(&p1.1, &p1.2),
        reference_correlation(&p2.1, &p2.2),
        reference_correlation(&p3.1, &p3.2),
    ])
}
