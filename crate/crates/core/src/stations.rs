//! Clocked trial streams from two isolated station computations, and the
//! counterfactual locality audit.
//!
//! Each trial the schedule picks both settings, the source draws `λ`, and the
//! shared clock hands the same slot `m = trial mod N` to both stations. A
//! station sees only its own setting, `λ`, the slot and its own seed.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::inequality::TEST_ANGLES;
use crate::model::{LocalModel, LocalOutput, Setting, Sign, SourceSpace, Station, TimeGrid};
use crate::rng::{derive_seed, stream};

const SOURCE_STREAM: u64 = 0x534f_5552;
const SETTINGS_STREAM: u64 = 0x5345_5454;

/// The two local computations of an experiment, plus the shared source and clock.
pub trait Stations {
    fn source(&self) -> &SourceSpace;
    fn grid(&self) -> &TimeGrid;
    /// Station seeds used when a schedule does not override them.
    fn station_seeds(&self) -> (u64, u64);
    fn station1(&self, a: &Setting, lambda: usize, slot: usize, seed: u64) -> Result<LocalOutput>;
    fn station2(&self, b: &Setting, lambda: usize, slot: usize, seed: u64) -> Result<LocalOutput>;
}

impl Stations for LocalModel {
    fn source(&self) -> &SourceSpace {
        LocalModel::source(self)
    }

    fn grid(&self) -> &TimeGrid {
        LocalModel::grid(self)
    }

    fn station_seeds(&self) -> (u64, u64) {
        (self.gen(Station::S1).seed, self.gen(Station::S2).seed)
    }

    fn station1(&self, a: &Setting, lambda: usize, slot: usize, seed: u64) -> Result<LocalOutput> {
        self.evaluate_local(Station::S1, a, lambda, slot, seed)
    }

    fn station2(&self, b: &Setting, lambda: usize, slot: usize, seed: u64) -> Result<LocalOutput> {
        self.evaluate_local(Station::S2, b, lambda, slot, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleSeeds {
    pub source: u64,
    pub s1: u64,
    pub s2: u64,
    pub settings: u64,
}

/// How the settings of each trial are chosen. Angles are radians.
#[derive(Debug, Clone, PartialEq)]
pub enum SettingPolicy {
    Fixed { a: f64, b: f64 },
    /// Trial `i` uses `a[i mod |a|]` and `b[(i / |a|) mod |b|]`.
    Cycle { a: Vec<f64>, b: Vec<f64> },
    SeededRandom { a: Vec<f64>, b: Vec<f64> },
}

impl SettingPolicy {
    pub fn random_over_test_grid() -> SettingPolicy {
        SettingPolicy::SeededRandom {
            a: TEST_ANGLES.to_vec(),
            b: TEST_ANGLES.to_vec(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SettingPolicy::Fixed { .. } => "fixed",
            SettingPolicy::Cycle { .. } => "cycle",
            SettingPolicy::SeededRandom { .. } => "seeded-random",
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |xs: &[f64]| -> Result<()> {
            if xs.is_empty() {
                return Err(Error::InvalidSchedule("empty setting list".to_string()));
            }
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSchedule("non-finite setting angle".to_string()));
            }
            Ok(())
        };
        match self {
            SettingPolicy::Fixed { a, b } => check(&[*a, *b]),
            SettingPolicy::Cycle { a, b } | SettingPolicy::SeededRandom { a, b } => {
                check(a)?;
                check(b)
            }
        }
    }

    fn pick<R: Rng>(&self, trial: u64, rng: &mut R) -> (f64, f64) {
        match self {
            SettingPolicy::Fixed { a, b } => (*a, *b),
            SettingPolicy::Cycle { a, b } => {
                let i = trial as usize;
                (a[i % a.len()], b[(i / a.len()) % b.len()])
            }
            SettingPolicy::SeededRandom { a, b } => {
                (a[rng.gen_range(0..a.len())], b[rng.gen_range(0..b.len())])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub trials: u64,
    pub policy: SettingPolicy,
    pub seeds: ScheduleSeeds,
}

impl Schedule {
    /// Source and setting seeds derived from `seed`; station seeds taken
    /// from the stations themselves.
    pub fn new<S: Stations + ?Sized>(
        stations: &S,
        trials: u64,
        policy: SettingPolicy,
        seed: u64,
    ) -> Schedule {
        let (s1, s2) = stations.station_seeds();
        Schedule {
            trials,
            policy,
            seeds: ScheduleSeeds {
                source: derive_seed(seed, &[SOURCE_STREAM]),
                s1,
                s2,
                settings: derive_seed(seed, &[SETTINGS_STREAM]),
            },
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidSchedule("trials must be at least 1".to_string()));
        }
        if !grid.is_uniform() {
            return Err(Error::InvalidSchedule(
                "a clock advancing one slot per trial needs uniform slot weights".to_string(),
            ));
        }
        self.policy.validate()
    }
}

/// One coincidence event. `slot` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub slot: usize,
    pub a: f64,
    pub b: f64,
    pub lambda: usize,
    pub lambda_star: u16,
    pub lambda_dblstar: u16,
    pub outcome_a: Sign,
    pub outcome_b: Sign,
}

pub fn run_experiment<S: Stations + ?Sized>(
    stations: &S,
    schedule: &Schedule,
) -> Result<Vec<TrialRecord>> {
    let grid = stations.grid();
    schedule.validate(grid)?;
    let lambdas = WeightedIndex::new(stations.source().weights())
        .map_err(|_| Error::InvalidWeights("source prior".to_string()))?;
    let mut source_rng = stream(schedule.seeds.source, &[SOURCE_STREAM]);
    let mut settings_rng = stream(schedule.seeds.settings, &[SETTINGS_STREAM]);
    let slots = grid.len() as u64;
    let mut records = Vec::with_capacity(schedule.trials.min(1 << 24) as usize);
    for trial in 0..schedule.trials {
        let (a_angle, b_angle) = schedule.policy.pick(trial, &mut settings_rng);
        let (a, b) = (Setting::s1(a_angle), Setting::s2(b_angle));
        let lambda = lambdas.sample(&mut source_rng);
        let slot = (trial % slots) as usize;
        let out2 = stations.station2(&b, lambda, slot, schedule.seeds.s2)?;
        let out1 = stations.station1(&a, lambda, slot, schedule.seeds.s1)?;
        records.push(TrialRecord {
            trial,
            slot,
            a: a.angle(),
            b: b.angle(),
            lambda,
            lambda_star: out1.value,
            lambda_dblstar: out2.value,
            outcome_a: out1.outcome,
            outcome_b: out2.outcome,
        });
    }
    Ok(records)
}

/// Pooled empirical correlation over trials at one setting pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledCorrelation {
    pub count: u64,
    pub e_ab: f64,
    pub std_error: f64,
}

pub fn pooled_correlation(records: &[TrialRecord], a: f64, b: f64) -> Option<PooledCorrelation> {
    let (a, b) = (Setting::s1(a).angle(), Setting::s2(b).angle());
    let (count, sum) = records
        .iter()
        .filter(|r| r.a == a && r.b == b)
        .fold((0u64, 0i64), |(c, s), r| {
            (c + 1, s + i64::from((r.outcome_a * r.outcome_b).value()))
        });
    if count == 0 {
        return None;
    }
    let n = count as f64;
    let e_ab = sum as f64 / n;
    let std_error = if count > 1 {
        libm::sqrt(((1.0 - e_ab * e_ab) * n / (n - 1.0)).max(0.0) / n)
    } else {
        0.0
    };
    Some(PooledCorrelation {
        count,
        e_ab,
        std_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub trial: u64,
    /// The station whose output changed.
    pub station: Station,
    /// The remote setting that caused the change.
    pub remote_angle: f64,
    pub expected: LocalOutput,
    pub found: LocalOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub trials_checked: u64,
    pub perturbations: usize,
    pub mismatches: u64,
    pub pass: bool,
    pub first_mismatch: Option<Mismatch>,
}

/// `k`-th of `count` alternative angles spread evenly around `base`.
fn perturbed(base: f64, k: usize, count: usize) -> f64 {
    base + k as f64 * TAU / (count + 1) as f64
}

/// Re-runs each station of every trial with `remote_perturbations`
/// alternative settings at the other station, evaluated first, and counts
/// trials whose local output changed.
pub fn locality_audit<S: Stations + ?Sized>(
    stations: &S,
    schedule: &Schedule,
    remote_perturbations: usize,
) -> Result<AuditReport> {
    if remote_perturbations == 0 {
        return Err(Error::InvalidSchedule(format!(
            "remote perturbations must be at least 1, got {remote_perturbations}"
        )));
    }
    let records = run_experiment(stations, schedule)?;
    let mut mismatches = 0;
    let mut first_mismatch = None;
    for r in &records {
        let (a, b) = (Setting::s1(r.a), Setting::s2(r.b));
        let expected1 = LocalOutput {
            value: r.lambda_star,
            outcome: r.outcome_a,
        };
        let expected2 = LocalOutput {
            value: r.lambda_dblstar,
            outcome: r.outcome_b,
        };
        let mut bad: Option<Mismatch> = None;
        for k in 1..=remote_perturbations {
            let b_alt = Setting::s2(perturbed(r.b, k, remote_perturbations));
            stations.station2(&b_alt, r.lambda, r.slot, schedule.seeds.s2)?;
            let found = stations.station1(&a, r.lambda, r.slot, schedule.seeds.s1)?;
            if found != expected1 && bad.is_none() {
                bad = Some(Mismatch {
                    trial: r.trial,
                    station: Station::S1,
                    remote_angle: b_alt.angle(),
                    expected: expected1,
                    found,
                });
            }
            let a_alt = Setting::s1(perturbed(r.a, k, remote_perturbations));
            stations.station1(&a_alt, r.lambda, r.slot, schedule.seeds.s1)?;
            let found = stations.station2(&b, r.lambda, r.slot, schedule.seeds.s2)?;
            if found != expected2 && bad.is_none() {
                bad = Some(Mismatch {
                    trial: r.trial,
                    station: Station::S2,
                    remote_angle: a_alt.angle(),
                    expected: expected2,
                    found,
                });
            }
        }
        if let Some(m) = bad {
            mismatches += 1;
            first_mismatch.get_or_insert(m);
        }
    }
    Ok(AuditReport {
        trials_checked: records.len() as u64,
        perturbations: remote_perturbations,
        mismatches,
        pass: mismatches == 0,
        first_mismatch,
    })
}
