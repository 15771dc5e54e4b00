//! Parameter spaces, local rules and the [`LocalModel`] aggregate.
//!
//! Slots are addressed by zero-based index in the API; external formats label
//! them `m = 1..N`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::TAU;
use core::fmt;
use core::ops::{Mul, Neg};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::symmetry::SignFunction;
use crate::EXACT_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Station {
    S1,
    S2,
}

impl Station {
    pub fn other(self) -> Station {
        match self {
            Station::S1 => Station::S2,
            Station::S2 => Station::S1,
        }
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Station::S1 => "S1",
            Station::S2 => "S2",
        })
    }
}

/// A value in `{-1, +1}`: measurement outcomes and sign-function values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Minus => -1,
            Sign::Plus => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }

    /// `+1` for non-negative input.
    pub fn of(x: f64) -> Sign {
        if x >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl TryFrom<i64> for Sign {
    type Error = Error;

    fn try_from(v: i64) -> Result<Sign> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(Error::CodomainViolation(other)),
        }
    }
}

impl Neg for Sign {
    type Output = Sign;

    fn neg(self) -> Sign {
        match self {
            Sign::Minus => Sign::Plus,
            Sign::Plus => Sign::Minus,
        }
    }
}

impl Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// A measurement setting: an angle in `[0, 2π)` owned by one station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting {
    angle: f64,
    station: Station,
}

impl Setting {
    pub fn new(station: Station, angle: f64) -> Setting {
        let mut a = libm::fmod(angle, TAU);
        if a < 0.0 {
            a += TAU;
        }
        if a >= TAU {
            a = 0.0;
        }
        Setting { angle: a, station }
    }

    pub fn s1(angle: f64) -> Setting {
        Setting::new(Station::S1, angle)
    }

    pub fn s2(angle: f64) -> Setting {
        Setting::new(Station::S2, angle)
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn station(&self) -> Station {
        self.station
    }

    /// Index of the nearest of `bins` equally spaced directions on the circle.
    pub fn bin(&self, bins: usize) -> usize {
        let bins = bins.max(1);
        let x = libm::round(self.angle * bins as f64 / TAU) as usize;
        x % bins
    }

    fn expect(&self, station: Station) -> Result<()> {
        if self.station == station {
            Ok(())
        } else {
            Err(Error::StationMismatch {
                expected: station,
                found: self.station,
            })
        }
    }
}

fn check_distribution(what: &str, weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights(format!("{what}: empty")));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!("{what}: weight {w} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > EXACT_TOL {
        return Err(Error::InvalidWeights(format!("{what}: weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Finite source space: labelled states `λ` with a prior.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpace {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl SourceSpace {
    pub fn new(labels: Vec<String>, weights: Vec<f64>) -> Result<SourceSpace> {
        if labels.len() != weights.len() {
            return Err(Error::InvalidModel(format!(
                "source has {} labels but {} weights",
                labels.len(),
                weights.len()
            )));
        }
        check_distribution("source prior", &weights)?;
        Ok(SourceSpace { labels, weights })
    }

    /// `n` states labelled `l0..` with equal weight.
    pub fn uniform(n: usize) -> Result<SourceSpace> {
        if n == 0 {
            return Err(Error::InvalidWeights("source prior: empty".to_string()));
        }
        let labels = (0..n).map(|i| format!("l{i}")).collect();
        SourceSpace::new(labels, alloc::vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, lambda: usize) -> f64 {
        self.weights[lambda]
    }
}

/// The shared clock: `N` slots with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    weights: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(slots: usize) -> Result<TimeGrid> {
        if slots == 0 {
            return Err(Error::InvalidWeights("time grid: no slots".to_string()));
        }
        Ok(TimeGrid {
            weights: alloc::vec![1.0 / slots as f64; slots],
        })
    }

    pub fn with_weights(weights: Vec<f64>) -> Result<TimeGrid> {
        check_distribution("slot weights", &weights)?;
        Ok(TimeGrid { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, slot: usize) -> f64 {
        self.weights[slot]
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= EXACT_TOL)
    }

    /// Each slot split into two halves of equal weight.
    pub(crate) fn doubled(&self) -> TimeGrid {
        TimeGrid {
            weights: self.weights.iter().flat_map(|&w| [w / 2.0, w / 2.0]).collect(),
        }
    }
}

/// How a station computes its instrument parameter from `(setting, slot, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GenRule {
    Constant(u16),
    /// `f(m)`: one value per base slot, independent of the setting.
    BySlot(Vec<u16>),
    /// One row per setting bin, one value per base slot.
    BySettingSlot { bins: usize, table: Vec<Vec<u16>> },
    /// Seeded hash of the setting bin; ignores the slot.
    SettingHash { bins: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentParamGen {
    pub station: Station,
    pub value_count: u16,
    /// Station seed used when no schedule overrides it.
    pub seed: u64,
    pub rule: GenRule,
}

impl InstrumentParamGen {
    pub fn constant(station: Station) -> InstrumentParamGen {
        InstrumentParamGen {
            station,
            value_count: 1,
            seed: 0,
            rule: GenRule::Constant(0),
        }
    }

    /// Whether the generated value can change from slot to slot.
    pub fn is_slot_dependent(&self) -> bool {
        matches!(self.rule, GenRule::BySlot(_) | GenRule::BySettingSlot { .. })
    }

    fn validate(&self, expected: Station, base_slots: usize) -> Result<()> {
        if self.station != expected {
            return Err(Error::InvalidModel(format!(
                "generator for {expected} is typed {}",
                self.station
            )));
        }
        if self.value_count == 0 {
            return Err(Error::InvalidModel("generator has empty value space".to_string()));
        }
        let in_range = |v: &u16| *v < self.value_count;
        let ok = match &self.rule {
            GenRule::Constant(v) => in_range(v),
            GenRule::BySlot(f) => {
                if f.len() != base_slots {
                    return Err(Error::InvalidModel(format!(
                        "by-slot generator has {} entries for {base_slots} slots",
                        f.len()
                    )));
                }
                f.iter().all(in_range)
            }
            GenRule::BySettingSlot { bins, table } => {
                if *bins == 0 || table.len() != *bins {
                    return Err(Error::InvalidModel(format!(
                        "by-setting-slot generator has {} rows for {bins} bins",
                        table.len()
                    )));
                }
                if table.iter().any(|row| row.len() != base_slots) {
                    return Err(Error::InvalidModel(format!(
                        "by-setting-slot generator rows must have {base_slots} entries"
                    )));
                }
                table.iter().flatten().all(in_range)
            }
            GenRule::SettingHash { bins } => *bins > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "generator value outside 0..{}",
                self.value_count
            )))
        }
    }

    /// Pure value rule. `base_slot` indexes the undoubled grid.
    pub fn value(&self, setting: &Setting, base_slot: usize, seed: u64) -> Result<u16> {
        setting.expect(self.station)?;
        Ok(match &self.rule {
            GenRule::Constant(v) => *v,
            GenRule::BySlot(f) => f[base_slot],
            GenRule::BySettingSlot { bins, table } => table[setting.bin(*bins)][base_slot],
            GenRule::SettingHash { bins } => {
                let h = derive_seed(seed, &[setting.bin(*bins) as u64]);
                (h % u64::from(self.value_count)) as u16
            }
        })
    }
}

/// Dense outcome table indexed by `(setting bin, λ, instrument value, slot)`.
///
/// `slots` is 1 for slot-independent tables, otherwise the base slot count.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    bins: usize,
    lambdas: usize,
    values: usize,
    slots: usize,
    cells: Vec<Sign>,
}

impl OutcomeTable {
    pub fn new(
        bins: usize,
        lambdas: usize,
        values: usize,
        slots: usize,
        cells: Vec<Sign>,
    ) -> Result<OutcomeTable> {
        let expected = bins * lambdas * values * slots;
        if expected == 0 || cells.len() != expected {
            return Err(Error::InvalidModel(format!(
                "outcome table {bins}x{lambdas}x{values}x{slots} needs {expected} cells, got {}",
                cells.len()
            )));
        }
        Ok(OutcomeTable {
            bins,
            lambdas,
            values,
            slots,
            cells,
        })
    }

    /// Builds a table by evaluating `f(bin, λ, value, slot)` on every cell.
    pub fn from_fn(
        bins: usize,
        lambdas: usize,
        values: usize,
        slots: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> Sign,
    ) -> Result<OutcomeTable> {
        let mut cells = Vec::with_capacity(bins * lambdas * values * slots);
        for bin in 0..bins {
            for l in 0..lambdas {
                for v in 0..values {
                    for m in 0..slots {
                        cells.push(f(bin, l, v, m));
                    }
                }
            }
        }
        OutcomeTable::new(bins, lambdas, values, slots, cells)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.bins, self.lambdas, self.values, self.slots)
    }

    pub fn get(&self, bin: usize, lambda: usize, value: usize, slot: usize) -> Sign {
        let m = slot % self.slots;
        self.cells[((bin * self.lambdas + lambda) * self.values + value) * self.slots + m]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeRule {
    Constant(Sign),
    Table(OutcomeTable),
    /// `sign(cos(angle - θ_λ))`, optionally negated; one angle per source state.
    HalfPlane { lambda_angles: Vec<f64>, negate: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeFn {
    pub station: Station,
    pub rule: OutcomeRule,
}

impl OutcomeFn {
    pub fn constant(station: Station, sign: Sign) -> OutcomeFn {
        OutcomeFn {
            station,
            rule: OutcomeRule::Constant(sign),
        }
    }

    /// Whether the rule reads the slot argument directly.
    pub fn reads_slot(&self) -> bool {
        matches!(&self.rule, OutcomeRule::Table(t) if t.slots > 1)
    }

    fn validate(
        &self,
        expected: Station,
        lambdas: usize,
        values: u16,
        base_slots: usize,
    ) -> Result<()> {
        if self.station != expected {
            return Err(Error::InvalidModel(format!(
                "outcome rule for {expected} is typed {}",
                self.station
            )));
        }
        match &self.rule {
            OutcomeRule::Constant(_) => Ok(()),
            OutcomeRule::Table(t) => {
                if t.lambdas != lambdas || t.values != usize::from(values) {
                    return Err(Error::InvalidModel(format!(
                        "outcome table covers {} states x {} values, model has {lambdas} x {values}",
                        t.lambdas, t.values
                    )));
                }
                if t.slots != 1 && t.slots != base_slots {
                    return Err(Error::InvalidModel(format!(
                        "outcome table has {} slots, expected 1 or {base_slots}",
                        t.slots
                    )));
                }
                Ok(())
            }
            OutcomeRule::HalfPlane { lambda_angles, .. } => {
                if lambda_angles.len() != lambdas {
                    return Err(Error::InvalidModel(format!(
                        "half-plane rule has {} angles for {lambdas} states",
                        lambda_angles.len()
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn outcome(&self, setting: &Setting, lambda: usize, value: u16, base_slot: usize) -> Result<Sign> {
        setting.expect(self.station)?;
        Ok(match &self.rule {
            OutcomeRule::Constant(s) => *s,
            OutcomeRule::Table(t) => t.get(setting.bin(t.bins), lambda, usize::from(value), base_slot),
            OutcomeRule::HalfPlane {
                lambda_angles,
                negate,
            } => {
                let s = Sign::of(libm::cos(setting.angle() - lambda_angles[lambda]));
                if *negate {
                    -s
                } else {
                    s
                }
            }
        })
    }
}

/// What a sign multiplier is indexed by.
#[derive(Debug, Clone, PartialEq)]
pub enum SignSource {
    /// `r(m)` over the model's current slots, read off the shared clock.
    Time(SignFunction),
    /// `r(λ)` over source states. Negative control only: this sign is not
    /// a clock function and does not zero conditional expectations.
    Source(Vec<Sign>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignScope {
    Both,
    Only(Station),
}

impl SignScope {
    pub fn covers(self, station: Station) -> bool {
        match self {
            SignScope::Both => true,
            SignScope::Only(s) => s == station,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstalledSign {
    pub source: SignSource,
    pub scope: SignScope,
}

/// One applied transform, kept for descriptor provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformStep {
    pub op: String,
    pub seed: Option<u64>,
    pub attained_mean: Option<f64>,
}

/// Everything needed to build a [`LocalModel`]; validated by [`LocalModel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub name: String,
    pub source: SourceSpace,
    /// Grid before any layer doubling.
    pub base_grid: TimeGrid,
    pub gen1: InstrumentParamGen,
    pub gen2: InstrumentParamGen,
    pub out1: OutcomeFn,
    pub out2: OutcomeFn,
    pub doubled: bool,
    /// A time sign must cover the final (possibly doubled) grid.
    pub sign: Option<InstalledSign>,
    pub provenance: Vec<TransformStep>,
}

/// Output of one station's local computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalOutput {
    pub value: u16,
    pub outcome: Sign,
}

/// A validated, immutable two-station model.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel {
    parts: ModelParts,
    grid: TimeGrid,
    flip_mask: Option<Vec<Sign>>,
}

impl LocalModel {
    pub fn new(parts: ModelParts) -> Result<LocalModel> {
        let base_slots = parts.base_grid.len();
        if base_slots == 0 {
            return Err(Error::InvalidWeights("time grid: no slots".to_string()));
        }
        parts.gen1.validate(Station::S1, base_slots)?;
        parts.gen2.validate(Station::S2, base_slots)?;
        let lambdas = parts.source.len();
        parts
            .out1
            .validate(Station::S1, lambdas, parts.gen1.value_count, base_slots)?;
        parts
            .out2
            .validate(Station::S2, lambdas, parts.gen2.value_count, base_slots)?;
        let (grid, flip_mask) = if parts.doubled {
            let mask = (0..2 * base_slots)
                .map(|i| if i % 2 == 0 { Sign::Plus } else { Sign::Minus })
                .collect();
            (parts.base_grid.doubled(), Some(mask))
        } else {
            (parts.base_grid.clone(), None)
        };
        match &parts.sign {
            Some(InstalledSign {
                source: SignSource::Time(r),
                ..
            }) if r.len() != grid.len() => {
                return Err(Error::GridMismatch {
                    expected: grid.len(),
                    found: r.len(),
                });
            }
            Some(InstalledSign {
                source: SignSource::Source(r),
                ..
            }) if r.len() != lambdas => {
                return Err(Error::InvalidModel(format!(
                    "source sign has {} entries for {lambdas} states",
                    r.len()
                )));
            }
            _ => {}
        }
        Ok(LocalModel {
            parts,
            grid,
            flip_mask,
        })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn into_parts(self) -> ModelParts {
        self.parts
    }

    pub fn name(&self) -> &str {
        &self.parts.name
    }

    pub fn source(&self) -> &SourceSpace {
        &self.parts.source
    }

    /// The current grid (doubled if the model was layer-doubled).
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn gen(&self, station: Station) -> &InstrumentParamGen {
        match station {
            Station::S1 => &self.parts.gen1,
            Station::S2 => &self.parts.gen2,
        }
    }

    pub fn out(&self, station: Station) -> &OutcomeFn {
        match station {
            Station::S1 => &self.parts.out1,
            Station::S2 => &self.parts.out2,
        }
    }

    pub fn sign(&self) -> Option<&InstalledSign> {
        self.parts.sign.as_ref()
    }

    pub fn flip_mask(&self) -> Option<&[Sign]> {
        self.flip_mask.as_deref()
    }

    pub fn is_doubled(&self) -> bool {
        self.parts.doubled
    }

    pub fn provenance(&self) -> &[TransformStep] {
        &self.parts.provenance
    }

    /// Base-grid slot that a current slot reads its rules from.
    pub fn base_slot(&self, slot: usize) -> usize {
        if self.parts.doubled {
            slot / 2
        } else {
            slot
        }
    }

    fn check_indices(&self, lambda: usize, slot: usize) -> Result<()> {
        if lambda >= self.source().len() {
            return Err(Error::InvalidInput(format!(
                "source state {lambda} outside 0..{}",
                self.source().len()
            )));
        }
        if slot >= self.grid.len() {
            return Err(Error::InvalidInput(format!(
                "slot {slot} outside 0..{}",
                self.grid.len()
            )));
        }
        Ok(())
    }

    /// Instrument parameter of `station` at a current slot, with an explicit station seed.
    pub fn instrument_value_seeded(
        &self,
        station: Station,
        setting: &Setting,
        slot: usize,
        seed: u64,
    ) -> Result<u16> {
        setting.expect(station)?;
        if slot >= self.grid.len() {
            return Err(Error::InvalidInput(format!(
                "slot {slot} outside 0..{}",
                self.grid.len()
            )));
        }
        self.gen(station).value(setting, self.base_slot(slot), seed)
    }

    pub fn instrument_value(&self, station: Station, setting: &Setting, slot: usize) -> Result<u16> {
        self.instrument_value_seeded(station, setting, slot, self.gen(station).seed)
    }

    /// Outcome for a given instrument value, with sign function and flip mask applied.
    pub fn outcome_given_value(
        &self,
        station: Station,
        setting: &Setting,
        lambda: usize,
        value: u16,
        slot: usize,
    ) -> Result<Sign> {
        setting.expect(station)?;
        self.check_indices(lambda, slot)?;
        if value >= self.gen(station).value_count {
            return Err(Error::InvalidInput(format!(
                "instrument value {value} outside 0..{}",
                self.gen(station).value_count
            )));
        }
        let mut s = self
            .out(station)
            .outcome(setting, lambda, value, self.base_slot(slot))?;
        if let Some(sign) = &self.parts.sign {
            if sign.scope.covers(station) {
                s = s * match &sign.source {
                    SignSource::Time(r) => r.value(slot),
                    SignSource::Source(r) => r[lambda],
                };
            }
        }
        if let Some(mask) = &self.flip_mask {
            s = s * mask[slot];
        }
        Ok(s)
    }

    /// Full local computation of one station with an explicit station seed.
    pub fn evaluate_local(
        &self,
        station: Station,
        setting: &Setting,
        lambda: usize,
        slot: usize,
        seed: u64,
    ) -> Result<LocalOutput> {
        self.check_indices(lambda, slot)?;
        let value = self.instrument_value_seeded(station, setting, slot, seed)?;
        let outcome = self.outcome_given_value(station, setting, lambda, value, slot)?;
        Ok(LocalOutput { value, outcome })
    }

    /// `A_a(λ, m)` or `B_b(λ, m)` using the model's own station seeds.
    pub fn evaluate_outcome(
        &self,
        station: Station,
        setting: &Setting,
        lambda: usize,
        slot: usize,
    ) -> Result<Sign> {
        Ok(self
            .evaluate_local(station, setting, lambda, slot, self.gen(station).seed)?
            .outcome)
    }

    /// True when, for each of `settings` and every `λ`, the station's outcome is
    /// the same in every slot.
    pub fn is_slot_constant(&self, station: Station, settings: &[Setting]) -> Result<bool> {
        for setting in settings {
            for lambda in 0..self.source().len() {
                let first = self.evaluate_outcome(station, setting, lambda, 0)?;
                for slot in 1..self.grid.len() {
                    if self.evaluate_outcome(station, setting, lambda, slot)? != first {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Copy with one more provenance entry; used by transforms.
    pub(crate) fn rebuilt(
        &self,
        edit: impl FnOnce(&mut ModelParts),
        step: TransformStep,
    ) -> Result<LocalModel> {
        let mut parts = self.parts.clone();
        edit(&mut parts);
        parts.provenance.push(step);
        LocalModel::new(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::{FRAC_PI_2, PI};

    pub(crate) fn constant_model(a: Sign, b: Sign, slots: usize) -> LocalModel {
        LocalModel::new(ModelParts {
            name: "const".to_string(),
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
    fn setting_normalizes_angle() {
        let s = Setting::s1(-FRAC_PI_2);
        assert!((s.angle() - 1.5 * PI).abs() < 1e-15);
        assert_eq!(Setting::s1(TAU).angle(), 0.0);
        assert!((Setting::s2(5.0 * PI).angle() - PI).abs() < 1e-12);
        assert_eq!(Setting::s1(PI / 4.0).bin(8), 1);
        assert_eq!(Setting::s1(TAU - 1e-14).bin(8), 0);
    }

    #[test]
    fn sign_algebra() {
        assert_eq!(Sign::Minus * Sign::Minus, Sign::Plus);
        assert_eq!(-Sign::Plus, Sign::Minus);
        assert_eq!(Sign::try_from(0), Err(Error::CodomainViolation(0)));
        assert_eq!(Sign::try_from(-1), Ok(Sign::Minus));
    }

    #[test]
    fn prior_exceeding_one_is_rejected() {
        let err = SourceSpace::new(vec!["x".into(), "y".into()], vec![0.6, 0.6]).unwrap_err();
        assert!(matches!(err, Error::InvalidWeights(_)));
        assert!(SourceSpace::new(vec!["x".into()], vec![-0.0 + 1.0]).is_ok());
        assert!(TimeGrid::uniform(0).is_err());
        assert!(TimeGrid::with_weights(vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn constant_outcome_everywhere() {
        let m = constant_model(Sign::Plus, Sign::Plus, 4);
        for slot in 0..4 {
            for angle in [0.0, 1.0, 3.0] {
                assert_eq!(
                    m.evaluate_outcome(Station::S1, &Setting::s1(angle), 0, slot).unwrap(),
                    Sign::Plus
                );
            }
        }
    }

    #[test]
    fn station_mismatch_is_locality_guard() {
        let m = constant_model(Sign::Plus, Sign::Plus, 2);
        let err = m
            .evaluate_outcome(Station::S1, &Setting::s2(0.0), 0, 0)
            .unwrap_err();
        assert_eq!(
            err,
            Error::StationMismatch {
                expected: Station::S1,
                found: Station::S2
            }
        );
    }

    #[test]
    fn out_of_range_inputs_error() {
        let m = constant_model(Sign::Plus, Sign::Plus, 2);
        assert!(matches!(
            m.evaluate_outcome(Station::S1, &Setting::s1(0.0), 1, 0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            m.evaluate_outcome(Station::S1, &Setting::s1(0.0), 0, 2),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn mistyped_rule_is_rejected() {
        let mut parts = constant_model(Sign::Plus, Sign::Plus, 2).into_parts();
        parts.out1.station = Station::S2;
        assert!(matches!(LocalModel::new(parts), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn table_shape_is_checked() {
        let mut parts = constant_model(Sign::Plus, Sign::Plus, 2).into_parts();
        let t = OutcomeTable::from_fn(4, 2, 1, 1, |_, _, _, _| Sign::Plus).unwrap();
        parts.out1.rule = OutcomeRule::Table(t);
        assert!(matches!(LocalModel::new(parts), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn by_slot_generator_reads_base_slot() {
        let mut parts = constant_model(Sign::Plus, Sign::Plus, 3).into_parts();
        parts.gen1 = InstrumentParamGen {
            station: Station::S1,
            value_count: 3,
            seed: 0,
            rule: GenRule::BySlot(vec![2, 0, 1]),
        };
        parts.out1.rule = OutcomeRule::Table(
            OutcomeTable::from_fn(1, 1, 3, 1, |_, _, v, _| if v == 2 { Sign::Minus } else { Sign::Plus })
                .unwrap(),
        );
        let m = LocalModel::new(parts).unwrap();
        let a = Setting::s1(0.0);
        assert_eq!(m.instrument_value(Station::S1, &a, 0).unwrap(), 2);
        assert_eq!(m.evaluate_outcome(Station::S1, &a, 0, 0).unwrap(), Sign::Minus);
        assert_eq!(m.evaluate_outcome(Station::S1, &a, 0, 1).unwrap(), Sign::Plus);
        assert!(!m.is_slot_constant(Station::S1, &[a]).unwrap());
    }

    #[test]
    fn half_plane_rule() {
        let out = OutcomeFn {
            station: Station::S2,
            rule: OutcomeRule::HalfPlane {
                lambda_angles: vec![0.0],
                negate: true,
            },
        };
        assert_eq!(out.outcome(&Setting::s2(0.1), 0, 0, 0).unwrap(), Sign::Minus);
        assert_eq!(out.outcome(&Setting::s2(PI), 0, 0, 0).unwrap(), Sign::Plus);
    }
}
