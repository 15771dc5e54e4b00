//! Exact setting-dependent joint tables `ρ_s(λ*, λ**, λ, m)` and the
//! product-form check on them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::model::{LocalModel, Setting, Station};
use crate::EXACT_TOL;

/// One cell of a joint table. Slots are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub star: u16,
    pub dblstar: u16,
    pub lambda: usize,
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    Star,
    DblStar,
    Lambda,
    Slot,
}

impl CellKey {
    fn coord(&self, axis: Axis) -> usize {
        match axis {
            Axis::Star => usize::from(self.star),
            Axis::DblStar => usize::from(self.dblstar),
            Axis::Lambda => self.lambda,
            Axis::Slot => self.slot,
        }
    }
}

/// Joint distribution of both instrument parameters, the source state and
/// the slot, for one setting pair. Only cells of positive mass are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    a: Setting,
    b: Setting,
    star_values: u16,
    dblstar_values: u16,
    lambdas: usize,
    slots: usize,
    entries: BTreeMap<CellKey, f64>,
}

impl JointTable {
    /// Validates and builds a table from explicit cells (zero cells are dropped).
    pub fn from_entries(
        a: Setting,
        b: Setting,
        axes: (u16, u16, usize, usize),
        cells: impl IntoIterator<Item = (CellKey, f64)>,
    ) -> Result<JointTable> {
        let (star_values, dblstar_values, lambdas, slots) = axes;
        let mut entries = BTreeMap::new();
        for (key, p) in cells {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidWeights(format!("cell {key:?} has probability {p}")));
            }
            if key.star >= star_values
                || key.dblstar >= dblstar_values
                || key.lambda >= lambdas
                || key.slot >= slots
            {
                return Err(Error::InvalidInput(format!("cell {key:?} outside table axes")));
            }
            if p > 0.0 {
                *entries.entry(key).or_insert(0.0) += p;
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyTable);
        }
        let total: f64 = entries.values().sum();
        if (total - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidWeights(format!("table mass is {total}, not 1")));
        }
        Ok(JointTable {
            a,
            b,
            star_values,
            dblstar_values,
            lambdas,
            slots,
            entries,
        })
    }

    pub fn settings(&self) -> (Setting, Setting) {
        (self.a, self.b)
    }

    /// `(|λ*|, |λ**|, |Λ|, N)`.
    pub fn axes(&self) -> (u16, u16, usize, usize) {
        (self.star_values, self.dblstar_values, self.lambdas, self.slots)
    }

    pub fn entries(&self) -> &BTreeMap<CellKey, f64> {
        &self.entries
    }

    pub fn get(&self, key: &CellKey) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Marginal over the kept axes, keyed by their coordinates in order.
    pub fn marginal(&self, keep: &[Axis]) -> BTreeMap<Vec<usize>, f64> {
        let mut out = BTreeMap::new();
        for (key, p) in &self.entries {
            let coords = keep.iter().map(|&ax| key.coord(ax)).collect();
            *out.entry(coords).or_insert(0.0) += p;
        }
        out
    }

    /// The same table with the two instrument axes exchanged.
    pub fn swapped(&self) -> JointTable {
        JointTable {
            a: self.a,
            b: self.b,
            star_values: self.dblstar_values,
            dblstar_values: self.star_values,
            lambdas: self.lambdas,
            slots: self.slots,
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (
                        CellKey {
                            star: k.dblstar,
                            dblstar: k.star,
                            ..*k
                        },
                        *p,
                    )
                })
                .collect(),
        }
    }
}

/// `entry(λ*, λ**, λ, m) = prior(λ) · w(m) · [gen1(a, m) = λ*] · [gen2(b, m) = λ**]`.
pub fn tabulate_joint(model: &LocalModel, a: &Setting, b: &Setting) -> Result<JointTable> {
    if a.station() != Station::S1 {
        return Err(Error::StationMismatch {
            expected: Station::S1,
            found: a.station(),
        });
    }
    if b.station() != Station::S2 {
        return Err(Error::StationMismatch {
            expected: Station::S2,
            found: b.station(),
        });
    }
    let mut cells = Vec::new();
    for slot in 0..model.grid().len() {
        let star = model.instrument_value(Station::S1, a, slot)?;
        let dblstar = model.instrument_value(Station::S2, b, slot)?;
        let w = model.grid().weight(slot);
        for (lambda, prior) in model.source().weights().iter().enumerate() {
            cells.push((
                CellKey {
                    star,
                    dblstar,
                    lambda,
                    slot,
                },
                prior * w,
            ));
        }
    }
    JointTable::from_entries(
        *a,
        *b,
        (
            model.gen(Station::S1).value_count,
            model.gen(Station::S2).value_count,
            model.source().len(),
            model.grid().len(),
        ),
        cells,
    )
}

/// What the product form is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactorizationMode {
    /// Condition on `λ` only; the slot is pooled into each station's variable.
    GivenLambda,
    /// Condition on `(λ, m)`.
    #[default]
    GivenLambdaAndSlot,
}

impl FactorizationMode {
    pub const ALL: [FactorizationMode; 2] =
        [FactorizationMode::GivenLambda, FactorizationMode::GivenLambdaAndSlot];

    pub fn name(self) -> &'static str {
        match self {
            FactorizationMode::GivenLambda => "given_lambda",
            FactorizationMode::GivenLambdaAndSlot => "given_lambda_and_m",
        }
    }

    pub fn parse(s: &str) -> Option<FactorizationMode> {
        match s {
            "given_lambda" => Some(FactorizationMode::GivenLambda),
            "given_lambda_and_m" => Some(FactorizationMode::GivenLambdaAndSlot),
            _ => None,
        }
    }
}

impl fmt::Display for FactorizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub lambda: usize,
    pub slot: Option<usize>,
}

/// The cell attaining the largest deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCell {
    pub condition: Condition,
    pub star: u16,
    pub dblstar: u16,
    pub joint: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationReport {
    pub mode: FactorizationMode,
    pub tol: f64,
    /// Largest `|p(λ*, λ**|c) - p(λ*|c) p(λ**|c)|` over all cells and conditions.
    pub max_deviation: f64,
    /// Largest total-variation distance to the product, over conditions.
    pub max_total_variation: f64,
    pub pass: bool,
    pub deviations: BTreeMap<Condition, f64>,
    pub worst: Option<WorstCell>,
}

/// Compares each conditional joint of the instrument parameters with the
/// product of its marginals. Conditions of zero mass are skipped.
pub fn check_factorization(
    table: &JointTable,
    mode: FactorizationMode,
    tol: f64,
) -> Result<FactorizationReport> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidTolerance(tol));
    }
    if table.entries.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut groups: BTreeMap<Condition, BTreeMap<(u16, u16), f64>> = BTreeMap::new();
    for (key, p) in &table.entries {
        let condition = Condition {
            lambda: key.lambda,
            slot: match mode {
                FactorizationMode::GivenLambda => None,
                FactorizationMode::GivenLambdaAndSlot => Some(key.slot),
            },
        };
        *groups
            .entry(condition)
            .or_default()
            .entry((key.star, key.dblstar))
            .or_insert(0.0) += p;
    }

    let mut deviations = BTreeMap::new();
    let mut max_deviation = 0.0_f64;
    let mut max_tv = 0.0_f64;
    let mut worst: Option<WorstCell> = None;
    for (condition, joint) in &groups {
        let mass: f64 = joint.values().sum();
        if mass <= 0.0 {
            continue;
        }
        let mut p1: BTreeMap<u16, f64> = BTreeMap::new();
        let mut p2: BTreeMap<u16, f64> = BTreeMap::new();
        for (&(x, y), p) in joint {
            *p1.entry(x).or_insert(0.0) += p / mass;
            *p2.entry(y).or_insert(0.0) += p / mass;
        }
        let mut dev = 0.0_f64;
        let mut tv = 0.0;
        for (&x, q1) in &p1 {
            for (&y, q2) in &p2 {
                let pj = joint.get(&(x, y)).copied().unwrap_or(0.0) / mass;
                let product = q1 * q2;
                let d = (pj - product).abs();
                tv += d;
                if d > dev {
                    dev = d;
                }
                if worst.is_none_or(|w| d > (w.joint - w.product).abs()) {
                    worst = Some(WorstCell {
                        condition: *condition,
                        star: x,
                        dblstar: y,
                        joint: pj,
                        product,
                    });
                }
            }
        }
        max_deviation = max_deviation.max(dev);
        max_tv = max_tv.max(tv / 2.0);
        deviations.insert(*condition, dev);
    }
    Ok(FactorizationReport {
        mode,
        tol,
        max_deviation,
        max_total_variation: max_tv,
        pass: max_deviation <= tol,
        deviations,
        worst,
    })
}
