//! Catalogue of concrete models.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

use crate::error::{Error, Result};
use crate::model::{
    GenRule, InstrumentParamGen, LocalModel, ModelParts, OutcomeFn, OutcomeRule, OutcomeTable,
    Sign, SourceSpace, Station, TimeGrid,
};

/// `(name, description)` for every zoo entry.
pub const ZOO: &[(&str, &str)] = &[
    ("constant_plus", "A = +1, B = +1; one source state, one slot"),
    ("constant_anti", "A = +1, B = -1; one source state, one slot"),
    (
        "bell_product_basic",
        "two source states, four slots, slot-independent hashed instrument parameters per station",
    ),
    (
        "bell_half_plane",
        "eight source angles; A = sign cos(a - θ), B = -sign cos(b - θ)",
    ),
    (
        "hp_time_correlated",
        "both stations read the same injective clock function f(m) on four slots",
    ),
    (
        "setting_dependent_density",
        "instrument parameters depend on the local setting bin and the slot",
    ),
];

/// Name of the cosine reference table, which is not a local model.
pub const REFERENCE_COSINE: &str = "reference_cosine";

pub fn zoo_names() -> impl Iterator<Item = &'static str> {
    ZOO.iter().map(|(name, _)| *name)
}

pub fn zoo_models() -> Vec<LocalModel> {
    zoo_names()
        .map(|name| zoo_model(name).expect("zoo entries are valid"))
        .collect()
}

fn bin_angle(bin: usize, bins: usize) -> f64 {
    bin as f64 * 2.0 * PI / bins as f64
}

fn cos_sign(x: f64) -> Sign {
    Sign::of(libm::cos(x))
}

fn parts(
    name: &str,
    source: SourceSpace,
    slots: usize,
    gens: (InstrumentParamGen, InstrumentParamGen),
    outs: (OutcomeRule, OutcomeRule),
) -> Result<LocalModel> {
    LocalModel::new(ModelParts {
        name: name.to_string(),
        source,
        base_grid: TimeGrid::uniform(slots)?,
        gen1: gens.0,
        gen2: gens.1,
        out1: OutcomeFn {
            station: Station::S1,
            rule: outs.0,
        },
        out2: OutcomeFn {
            station: Station::S2,
            rule: outs.1,
        },
        doubled: false,
        sign: None,
        provenance: Vec::new(),
    })
}

fn constant_gens() -> (InstrumentParamGen, InstrumentParamGen) {
    (
        InstrumentParamGen::constant(Station::S1),
        InstrumentParamGen::constant(Station::S2),
    )
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn zoo_model(name: &str) -> Result<LocalModel> {
    match name {
        "constant_plus" | "constant_anti" => {
            let b = if name == "constant_plus" {
                Sign::Plus
            } else {
                Sign::Minus
            };
            parts(
                name,
                SourceSpace::uniform(1)?,
                1,
                constant_gens(),
                (OutcomeRule::Constant(Sign::Plus), OutcomeRule::Constant(b)),
            )
        }
        "bell_product_basic" => {
            let gen = |station, seed| InstrumentParamGen {
                station,
                value_count: 4,
                seed,
                rule: GenRule::SettingHash { bins: 8 },
            };
            let theta = |lambda: usize, v: usize| lambda as f64 * FRAC_PI_2 + v as f64 * FRAC_PI_8;
            let a = OutcomeTable::from_fn(8, 2, 4, 1, |bin, l, v, _| {
                cos_sign(bin_angle(bin, 8) - theta(l, v))
            })?;
            let b = OutcomeTable::from_fn(8, 2, 4, 1, |bin, l, v, _| {
                -cos_sign(bin_angle(bin, 8) - theta(l, 3 - v) - FRAC_PI_8 / 2.0)
            })?;
            parts(
                name,
                SourceSpace::new(labels(&["up", "down"]), vec![0.25, 0.75])?,
                4,
                (gen(Station::S1, 11), gen(Station::S2, 29)),
                (OutcomeRule::Table(a), OutcomeRule::Table(b)),
            )
        }
        "bell_half_plane" => {
            let angles: Vec<f64> = (0..8).map(|k| (2 * k + 1) as f64 * FRAC_PI_8).collect();
            parts(
                name,
                SourceSpace::uniform(8)?,
                1,
                constant_gens(),
                (
                    OutcomeRule::HalfPlane {
                        lambda_angles: angles.clone(),
                        negate: false,
                    },
                    OutcomeRule::HalfPlane {
                        lambda_angles: angles,
                        negate: true,
                    },
                ),
            )
        }
        "hp_time_correlated" => {
            let f = vec![0u16, 1, 2, 3];
            let gen = |station, seed| InstrumentParamGen {
                station,
                value_count: 4,
                seed,
                rule: GenRule::BySlot(f.clone()),
            };
            let phi = |v: usize| v as f64 * FRAC_PI_4 + FRAC_PI_8;
            let parity = |l: usize| if l == 0 { Sign::Plus } else { Sign::Minus };
            let a = OutcomeTable::from_fn(8, 2, 4, 1, |bin, l, v, _| {
                cos_sign(bin_angle(bin, 8) - phi(v)) * parity(l)
            })?;
            let b = OutcomeTable::from_fn(8, 2, 4, 1, |bin, l, v, _| {
                -cos_sign(bin_angle(bin, 8) - phi(v)) * parity(l)
            })?;
            parts(
                name,
                SourceSpace::uniform(2)?,
                4,
                (gen(Station::S1, 1), gen(Station::S2, 2)),
                (OutcomeRule::Table(a), OutcomeRule::Table(b)),
            )
        }
        "setting_dependent_density" => {
            let table = |mul_bin: usize, mul_slot: usize| -> Vec<Vec<u16>> {
                (0..4)
                    .map(|bin| (0..4).map(|m| ((mul_bin * bin + mul_slot * m) % 4) as u16).collect())
                    .collect()
            };
            let gen1 = InstrumentParamGen {
                station: Station::S1,
                value_count: 4,
                seed: 3,
                rule: GenRule::BySettingSlot {
                    bins: 4,
                    table: table(1, 1),
                },
            };
            let gen2 = InstrumentParamGen {
                station: Station::S2,
                value_count: 4,
                seed: 4,
                rule: GenRule::BySettingSlot {
                    bins: 4,
                    table: table(2, 3),
                },
            };
            let a = OutcomeTable::from_fn(8, 2, 4, 1, |bin, l, v, _| {
                cos_sign(bin_angle(bin, 8) - v as f64 * FRAC_PI_4 - l as f64 * PI / 3.0)
            })?;
            let b = OutcomeTable::from_fn(8, 2, 4, 1, |bin, l, v, _| {
                -cos_sign(bin_angle(bin, 8) - v as f64 * FRAC_PI_4 - l as f64 * PI / 3.0)
            })?;
            parts(
                name,
                SourceSpace::new(labels(&["p", "q"]), vec![0.5, 0.5])?,
                4,
                (gen1, gen2),
                (OutcomeRule::Table(a), OutcomeRule::Table(b)),
            )
        }
        other => Err(Error::UnknownZooEntry(other.to_string())),
    }
}

/// Size limits for [`random_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomLimits {
    pub max_lambdas: usize,
    pub max_slots: usize,
    pub max_values: u16,
    /// Slot-independent generators with unrelated seeds (product form given `λ`).
    /// Otherwise the generators are random setting-and-slot tables.
    pub factorized: bool,
}

impl Default for RandomLimits {
    fn default() -> Self {
        RandomLimits {
            max_lambdas: 8,
            max_slots: 8,
            max_values: 16,
            factorized: true,
        }
    }
}

/// A seeded random model: random prior, generators and outcome tables.
pub fn random_model(seed: u64, limits: RandomLimits) -> Result<LocalModel> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, &[0x007a_6f6f]);
    let lambdas = rng.gen_range(1..=limits.max_lambdas.max(1));
    let slots = rng.gen_range(1..=limits.max_slots.max(1));
    let raw: Vec<f64> = (0..lambdas).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // absorb rounding so the prior sums to 1 within the exact tolerance
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;
    let labels = (0..lambdas).map(|i| alloc::format!("l{i}")).collect();
    let source = SourceSpace::new(labels, weights)?;

    let gen = |station, rng: &mut rand_chacha::ChaCha8Rng| {
        let value_count = rng.gen_range(1..=limits.max_values.max(1));
        let seed = rng.gen();
        let rule = if limits.factorized {
            GenRule::SettingHash { bins: 8 }
        } else {
            GenRule::BySettingSlot {
                bins: 8,
                table: (0..8)
                    .map(|_| (0..slots).map(|_| rng.gen_range(0..value_count)).collect())
                    .collect(),
            }
        };
        InstrumentParamGen {
            station,
            value_count,
            seed,
            rule,
        }
    };
    let gen1 = gen(Station::S1, &mut rng);
    let gen2 = gen(Station::S2, &mut rng);
    let table = |values: u16, rng: &mut rand_chacha::ChaCha8Rng| {
        let table_slots = if rng.gen_bool(0.5) { 1 } else { slots };
        OutcomeTable::from_fn(8, lambdas, usize::from(values), table_slots, |_, _, _, _| {
            if rng.gen_bool(0.5) {
                Sign::Plus
            } else {
                Sign::Minus
            }
        })
    };
    let out1 = table(gen1.value_count, &mut rng)?;
    let out2 = table(gen2.value_count, &mut rng)?;
    parts(
        &alloc::format!("random_{seed}"),
        source,
        slots,
        (gen1, gen2),
        (OutcomeRule::Table(out1), OutcomeRule::Table(out2)),
    )
}
