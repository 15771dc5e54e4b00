//! TOML model descriptors.
//!
//! A descriptor either names a zoo entry (`zoo = "..."`) or spells a model out
//! in `[source]`, `[grid]`, `[gen1]`, `[gen2]`, `[out1]`, `[out2]` sections.
//! Tables are inline CSV blocks (`csv = """..."""`) or file references
//! (`file = "..."`, relative to the descriptor). `[layers]` and `[sign]`
//! restore transformed models; `[transform]` records provenance. The same
//! file may carry `[schedule]` and `[run]` sections for the command line.
//!
//! In CSV blocks `lambda` is a zero-based source-state index and `m` is the
//! one-based slot label.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hvsim_core::model::{
    GenRule, InstalledSign, InstrumentParamGen, LocalModel, ModelParts, OutcomeFn, OutcomeRule,
    OutcomeTable, Sign, SignScope, SignSource, SourceSpace, Station, TimeGrid, TransformStep,
};
use hvsim_core::symmetry::SignFunction;
use hvsim_core::zoo;

use crate::config::RunSection;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Descriptor {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zoo: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen1: Option<GenSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen2: Option<GenSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out1: Option<OutSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out2: Option<OutSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<LayersSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<SignSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub states: Vec<String>,
    /// Uniform when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub slots: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    /// `constant`, `by_slot`, `by_setting_slot` or `setting_hash`.
    pub rule: String,
    #[serde(default = "one")]
    pub values: u16,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<u16>,
    /// `by_slot`: one value per slot label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<u16>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// `by_setting_slot`: CSV with header `bin,m,value`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

fn one() -> u16 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutSection {
    /// `constant`, `table` or `half_plane`.
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// `table`: CSV with header `bin,lambda,value,outcome`, or with an `m`
    /// column before `outcome` for slot-dependent tables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negate: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayersSection {
    pub doubled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignSection {
    /// `time` (one value per current slot) or `source` (one per state).
    pub kind: String,
    pub values: Vec<i64>,
    /// `both`, `S1` or `S2`.
    #[serde(default = "both")]
    pub scope: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn both() -> String {
    "both".to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    #[serde(default)]
    pub steps: Vec<StepEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepEntry {
    pub op: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attained_mean: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// `fixed`, `cycle` or `random`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_source: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_s1: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_s2: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_settings: Option<u64>,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Descriptor(msg.into())
}

fn parse_station_scope(s: &str) -> Result<SignScope> {
    match s {
        "both" => Ok(SignScope::Both),
        "S1" | "s1" => Ok(SignScope::Only(Station::S1)),
        "S2" | "s2" => Ok(SignScope::Only(Station::S2)),
        other => Err(invalid(format!("unknown sign scope `{other}`"))),
    }
}

fn scope_name(scope: SignScope) -> String {
    match scope {
        SignScope::Both => "both".to_string(),
        SignScope::Only(s) => s.to_string(),
    }
}

impl Descriptor {
    pub fn parse(text: &str) -> Result<Descriptor> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<(Descriptor, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Descriptor::parse(&text)?, base))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Whether the descriptor describes a model (rather than only a run).
    pub fn has_model(&self) -> bool {
        self.zoo.is_some() || self.source.is_some()
    }

    /// Builds and validates the model; `base` resolves `file = ...` references.
    pub fn build_model(&self, base: &Path) -> Result<LocalModel> {
        let explicit = [
            self.source.is_some(),
            self.grid.is_some(),
            self.gen1.is_some(),
            self.gen2.is_some(),
            self.out1.is_some(),
            self.out2.is_some(),
        ];
        let mut parts = match &self.zoo {
            Some(name) => {
                if explicit.iter().any(|x| *x) {
                    return Err(HarnessError::Config(
                        "a descriptor naming a zoo entry cannot also define model sections"
                            .to_string(),
                    ));
                }
                zoo::zoo_model(name)?.into_parts()
            }
            None => self.explicit_parts(base)?,
        };
        if let Some(name) = &self.name {
            parts.name = name.clone();
        }
        if let Some(layers) = &self.layers {
            parts.doubled = layers.doubled;
        }
        if let Some(t) = &self.transform {
            parts.provenance = t
                .steps
                .iter()
                .map(|s| TransformStep {
                    op: s.op.clone(),
                    seed: s.seed,
                    attained_mean: s.attained_mean,
                })
                .collect();
        }
        if let Some(sign) = &self.sign {
            let scope = parse_station_scope(&sign.scope)?;
            let values = sign
                .values
                .iter()
                .map(|&v| Sign::try_from(v))
                .collect::<hvsim_core::Result<Vec<Sign>>>()?;
            let source = match sign.kind.as_str() {
                "time" => {
                    let grid = if parts.doubled {
                        doubled_grid(&parts.base_grid)?
                    } else {
                        parts.base_grid.clone()
                    };
                    let mut r = SignFunction::new(&grid, values)?;
                    if let Some(seed) = sign.seed {
                        r = r.with_seed(seed);
                    }
                    SignSource::Time(r)
                }
                "source" => SignSource::Source(values),
                other => return Err(invalid(format!("unknown sign kind `{other}`"))),
            };
            parts.sign = Some(InstalledSign { source, scope });
        }
        Ok(LocalModel::new(parts)?)
    }

    fn explicit_parts(&self, base: &Path) -> Result<ModelParts> {
        let missing = |what: &str| invalid(format!("missing [{what}] section"));
        let source = self.source.as_ref().ok_or_else(|| missing("source"))?;
        let grid = self.grid.as_ref().ok_or_else(|| missing("grid"))?;
        let n_states = source.states.len();
        let weights = source
            .weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / n_states.max(1) as f64; n_states]);
        let source = SourceSpace::new(source.states.clone(), weights)?;
        let base_grid = match &grid.weights {
            Some(w) => {
                if w.len() != grid.slots {
                    return Err(invalid(format!(
                        "[grid] has {} slots but {} weights",
                        grid.slots,
                        w.len()
                    )));
                }
                TimeGrid::with_weights(w.clone())?
            }
            None => TimeGrid::uniform(grid.slots)?,
        };
        let gen1 = self
            .gen1
            .as_ref()
            .ok_or_else(|| missing("gen1"))?
            .build(Station::S1, grid.slots, base)?;
        let gen2 = self
            .gen2
            .as_ref()
            .ok_or_else(|| missing("gen2"))?
            .build(Station::S2, grid.slots, base)?;
        let out1 = self.out1.as_ref().ok_or_else(|| missing("out1"))?.build(
            Station::S1,
            source.len(),
            gen1.value_count,
            grid.slots,
            base,
        )?;
        let out2 = self.out2.as_ref().ok_or_else(|| missing("out2"))?.build(
            Station::S2,
            source.len(),
            gen2.value_count,
            grid.slots,
            base,
        )?;
        Ok(ModelParts {
            name: self.name.clone().unwrap_or_else(|| "unnamed".to_string()),
            source,
            base_grid,
            gen1,
            gen2,
            out1,
            out2,
            doubled: false,
            sign: None,
            provenance: Vec::new(),
        })
    }

    /// Explicit descriptor reproducing `model`, with provenance.
    pub fn from_model(model: &LocalModel) -> Descriptor {
        let p = model.parts();
        let weights = p.source.weights().to_vec();
        let uniform_prior = weights.iter().all(|w| *w == 1.0 / weights.len() as f64);
        Descriptor {
            name: Some(p.name.clone()),
            zoo: None,
            source: Some(SourceSection {
                states: p.source.labels().to_vec(),
                weights: (!uniform_prior).then_some(weights),
            }),
            grid: Some(GridSection {
                slots: p.base_grid.len(),
                weights: (!p.base_grid.is_uniform()).then(|| p.base_grid.weights().to_vec()),
            }),
            gen1: Some(GenSection::from_gen(&p.gen1)),
            gen2: Some(GenSection::from_gen(&p.gen2)),
            out1: Some(OutSection::from_out(&p.out1)),
            out2: Some(OutSection::from_out(&p.out2)),
            layers: p.doubled.then_some(LayersSection { doubled: true }),
            sign: p.sign.as_ref().map(|s| match &s.source {
                SignSource::Time(r) => SignSection {
                    kind: "time".to_string(),
                    values: r.values().iter().map(|v| i64::from(v.value())).collect(),
                    scope: scope_name(s.scope),
                    seed: r.seed(),
                },
                SignSource::Source(r) => SignSection {
                    kind: "source".to_string(),
                    values: r.iter().map(|v| i64::from(v.value())).collect(),
                    scope: scope_name(s.scope),
                    seed: None,
                },
            }),
            transform: (!p.provenance.is_empty()).then(|| TransformSection {
                steps: p
                    .provenance
                    .iter()
                    .map(|s| StepEntry {
                        op: s.op.clone(),
                        seed: s.seed,
                        attained_mean: s.attained_mean,
                    })
                    .collect(),
            }),
            schedule: None,
            run: None,
        }
    }
}

fn doubled_grid(grid: &TimeGrid) -> Result<TimeGrid> {
    let w = grid.weights().iter().flat_map(|&w| [w / 2.0, w / 2.0]).collect();
    Ok(TimeGrid::with_weights(w)?)
}

fn table_text(csv: &Option<String>, file: &Option<String>, base: &Path) -> Result<String> {
    match (csv, file) {
        (Some(text), None) => Ok(text.clone()),
        (None, Some(f)) => {
            let path = base.join(f);
            std::fs::read_to_string(&path).map_err(|e| HarnessError::io(path, e))
        }
        (Some(_), Some(_)) => Err(invalid("give either `csv` or `file`, not both")),
        (None, None) => Err(invalid("table rule needs `csv` or `file`")),
    }
}

fn csv_rows(text: &str) -> Result<(Vec<String>, Vec<Vec<i64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.trim().as_bytes());
    let header = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.trim_start_matches('+')
                    .parse::<i64>()
                    .map_err(|_| invalid(format!("non-integer table field `{f}`")))
            })
            .collect::<Result<Vec<i64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn index(v: i64, bound: usize, what: &str) -> Result<usize> {
    usize::try_from(v)
        .ok()
        .filter(|&i| i < bound)
        .ok_or_else(|| invalid(format!("{what} {v} outside 0..{bound}")))
}

impl GenSection {
    fn build(&self, station: Station, slots: usize, base: &Path) -> Result<InstrumentParamGen> {
        let rule = match self.rule.as_str() {
            "constant" => GenRule::Constant(self.value.unwrap_or(0)),
            "by_slot" => GenRule::BySlot(
                self.table
                    .clone()
                    .ok_or_else(|| invalid("by_slot generator needs `table`"))?,
            ),
            "setting_hash" => GenRule::SettingHash {
                bins: self.bins.unwrap_or(8),
            },
            "by_setting_slot" => {
                let bins = self
                    .bins
                    .ok_or_else(|| invalid("by_setting_slot generator needs `bins`"))?;
                let (header, rows) = csv_rows(&table_text(&self.csv, &self.file, base)?)?;
                if header != ["bin", "m", "value"] {
                    return Err(invalid(format!("generator table header {header:?}, expected bin,m,value")));
                }
                let mut table = vec![vec![None; slots]; bins];
                for row in rows {
                    let bin = index(row[0], bins, "bin")?;
                    let m = index(row[1] - 1, slots, "slot index")?;
                    let v = u16::try_from(row[2]).map_err(|_| invalid("generator value out of range"))?;
                    if table[bin][m].replace(v).is_some() {
                        return Err(invalid(format!("duplicate generator cell bin={bin} m={}", m + 1)));
                    }
                }
                let table = table
                    .into_iter()
                    .map(|row| row.into_iter().collect::<Option<Vec<u16>>>())
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| invalid("generator table is incomplete"))?;
                GenRule::BySettingSlot { bins, table }
            }
            other => return Err(invalid(format!("unknown generator rule `{other}`"))),
        };
        Ok(InstrumentParamGen {
            station,
            value_count: self.values,
            seed: self.seed,
            rule,
        })
    }

    fn from_gen(g: &InstrumentParamGen) -> GenSection {
        let mut s = GenSection {
            rule: String::new(),
            values: g.value_count,
            seed: g.seed,
            value: None,
            table: None,
            bins: None,
            csv: None,
            file: None,
        };
        match &g.rule {
            GenRule::Constant(v) => {
                s.rule = "constant".into();
                s.value = Some(*v);
            }
            GenRule::BySlot(f) => {
                s.rule = "by_slot".into();
                s.table = Some(f.clone());
            }
            GenRule::SettingHash { bins } => {
                s.rule = "setting_hash".into();
                s.bins = Some(*bins);
            }
            GenRule::BySettingSlot { bins, table } => {
                s.rule = "by_setting_slot".into();
                s.bins = Some(*bins);
                let mut text = String::from("bin,m,value\n");
                for (bin, row) in table.iter().enumerate() {
                    for (m, v) in row.iter().enumerate() {
                        let _ = writeln!(text, "{bin},{},{v}", m + 1);
                    }
                }
                s.csv = Some(text);
            }
        }
        s
    }
}

impl OutSection {
    fn build(
        &self,
        station: Station,
        lambdas: usize,
        values: u16,
        slots: usize,
        base: &Path,
    ) -> Result<OutcomeFn> {
        let rule = match self.rule.as_str() {
            "constant" => OutcomeRule::Constant(Sign::try_from(self.sign.unwrap_or(1))?),
            "half_plane" => OutcomeRule::HalfPlane {
                lambda_angles: self
                    .angles
                    .clone()
                    .ok_or_else(|| invalid("half_plane rule needs `angles`"))?,
                negate: self.negate.unwrap_or(false),
            },
            "table" => {
                let bins = self.bins.ok_or_else(|| invalid("table rule needs `bins`"))?;
                let (header, rows) = csv_rows(&table_text(&self.csv, &self.file, base)?)?;
                let slot_dependent = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
                    ["bin", "lambda", "value", "outcome"] => false,
                    ["bin", "lambda", "value", "m", "outcome"] => true,
                    _ => {
                        return Err(invalid(format!(
                            "outcome table header {header:?}, expected bin,lambda,value[,m],outcome"
                        )))
                    }
                };
                let table_slots = if slot_dependent { slots } else { 1 };
                let v_count = usize::from(values);
                let mut cells = vec![None; bins * lambdas * v_count * table_slots];
                for row in rows {
                    let bin = index(row[0], bins, "bin")?;
                    let l = index(row[1], lambdas, "lambda")?;
                    let v = index(row[2], v_count, "value")?;
                    let (m, outcome) = if slot_dependent {
                        (index(row[3] - 1, slots, "slot index")?, row[4])
                    } else {
                        (0, row[3])
                    };
                    let sign = Sign::try_from(outcome)?;
                    let at = ((bin * lambdas + l) * v_count + v) * table_slots + m;
                    if cells[at].replace(sign).is_some() {
                        return Err(invalid(format!("duplicate outcome cell bin={bin} lambda={l} value={v}")));
                    }
                }
                let cells = cells
                    .into_iter()
                    .collect::<Option<Vec<Sign>>>()
                    .ok_or_else(|| invalid("outcome table is incomplete"))?;
                OutcomeRule::Table(OutcomeTable::new(bins, lambdas, v_count, table_slots, cells)?)
            }
            other => return Err(invalid(format!("unknown outcome rule `{other}`"))),
        };
        Ok(OutcomeFn { station, rule })
    }

    fn from_out(o: &OutcomeFn) -> OutSection {
        let mut s = OutSection {
            rule: String::new(),
            sign: None,
            bins: None,
            csv: None,
            file: None,
            angles: None,
            negate: None,
        };
        match &o.rule {
            OutcomeRule::Constant(sign) => {
                s.rule = "constant".into();
                s.sign = Some(i64::from(sign.value()));
            }
            OutcomeRule::HalfPlane {
                lambda_angles,
                negate,
            } => {
                s.rule = "half_plane".into();
                s.angles = Some(lambda_angles.clone());
                s.negate = Some(*negate);
            }
            OutcomeRule::Table(t) => {
                let (bins, lambdas, values, slots) = t.dims();
                s.rule = "table".into();
                s.bins = Some(bins);
                let mut text = String::from(if slots > 1 {
                    "bin,lambda,value,m,outcome\n"
                } else {
                    "bin,lambda,value,outcome\n"
                });
                for bin in 0..bins {
                    for l in 0..lambdas {
                        for v in 0..values {
                            for m in 0..slots {
                                let out = t.get(bin, l, v, m).value();
                                if slots > 1 {
                                    let _ = writeln!(text, "{bin},{l},{v},{},{out}", m + 1);
                                } else {
                                    let _ = writeln!(text, "{bin},{l},{v},{out}");
                                }
                            }
                        }
                    }
                }
                s.csv = Some(text);
            }
        }
        s
    }
}

/// Resolves a zoo name or a descriptor path to a model.
pub fn load_model(reference: &str) -> Result<LocalModel> {
    let path = Path::new(reference);
    if path.is_file() {
        let (desc, base) = Descriptor::load(path)?;
        if !desc.has_model() {
            return Err(HarnessError::Config(format!(
                "{reference} does not describe a model"
            )));
        }
        return desc.build_model(&base);
    }
    if reference.ends_with(".toml") || reference.contains('/') {
        return Err(HarnessError::Config(format!("model file {reference} not found")));
    }
    Ok(zoo::zoo_model(reference)?)
}
