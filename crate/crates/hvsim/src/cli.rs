//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use hvsim_core::density::{check_factorization, tabulate_joint, FactorizationMode, JointTable};
use hvsim_core::inequality::{
    chsh, deterministic_bound, exact_conditional, exact_marginal, reference_chsh, Method,
};
use hvsim_core::stations::{locality_audit, pooled_correlation, run_experiment};
use hvsim_core::symmetry::{
    layer_double, make_sign_function, nearest_representable_mean, source_symmetrize,
    target_marginal, time_symmetrize_scoped,
};
use hvsim_core::zoo::{REFERENCE_COSINE, ZOO};
use hvsim_core::{LocalModel, Setting, Sign, SignScope, Station};

use crate::config::{self, parse_angle, Overrides, RunConfig};
use crate::descriptor::{load_model, Descriptor};
use crate::error::{HarnessError, Result};
use crate::report::{self, num};
use crate::tables::{self, ChshRow};

#[derive(Debug, Parser)]
#[command(name = "hvsim", version, about = "Two-station hidden-variable model harness")]
pub struct Cli {
    /// Master seed for every derived random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (directory for `simulate`); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Omit timestamps so repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Tolerance for factorization and bound checks.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    /// Config file with `[run]`/`[schedule]` sections; may itself be a model descriptor.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the clocked two-station experiment and write trials plus a summary.
    Simulate(Common),
    /// Factorization checks in both modes and conditional expectations per λ.
    Check(CheckArgs),
    /// Apply transforms and write the resulting model descriptor.
    Transform(TransformArgs),
    /// CHSH value, reference value and deterministic bound.
    Chsh(ChshArgs),
    /// Counterfactual locality audit.
    Audit(AuditArgs),
    /// Built-in models.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ZooAction {
    List,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Zoo name or descriptor path.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// `a,a',b,b'` in radians or as `[k]pi[/d]`.
    #[arg(long, value_delimiter = ',', value_parser = parse_angle, allow_hyphen_values = true)]
    pub angles: Option<Vec<f64>>,
    /// Setting policy: fixed, cycle or random.
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// given_lambda, given_lambda_and_m, or both.
    #[arg(long, default_value = "both")]
    pub mode: String,
    /// Write the joint table of the first setting pair as CSV.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
    /// Check a joint table CSV instead of a model.
    #[arg(long)]
    pub table_in: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub common: Common,
    /// Transform to apply, in order. `layer_double`,
    /// `rademacher[:mean=X][:scope=both|S1|S2][:seed=N]`,
    /// `target_marginal:station=S1:alpha=X[:angle=A][:seed=N]`,
    /// `source_sign:values=+1/-1/...[:scope=..]`.
    #[arg(long)]
    pub apply: Vec<String>,
    /// Replace an unrepresentable sign mean by the nearest representable one.
    #[arg(long)]
    pub round: bool,
}

#[derive(Debug, Args)]
pub struct ChshArgs {
    #[command(flatten)]
    pub common: Common,
    /// exact or mc.
    #[arg(long)]
    pub method: Option<String>,
    /// Also write the result as a CSV row.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: Common,
    /// Alternative remote settings per trial.
    #[arg(long)]
    pub perturbations: Option<usize>,
}

impl Cli {
    fn overrides(&self, common: &Common) -> Overrides {
        Overrides {
            model: common.model.clone(),
            seed: self.seed,
            tol: self.tol,
            trials: common.trials,
            angles: common.angles.clone(),
            policy: common.policy.clone(),
            deterministic: self.deterministic,
            ..Overrides::default()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.clone();
    let config = config.as_deref();
    match &cli.command {
        Command::Simulate(c) => {
            let cfg = config::resolve("simulate", cli.overrides(c), config)?;
            simulate(&cfg, cli.out.as_deref())
        }
        Command::Check(args) => {
            let mut flags = cli.overrides(&args.common);
            if args.table_in.is_some() && flags.model.is_none() {
                flags.model = Some("-".to_string());
            }
            let cfg = config::resolve("check", flags, config)?;
            check(&cfg, args, cli.out.as_deref())
        }
        Command::Transform(args) => {
            let mut flags = cli.overrides(&args.common);
            flags.apply = args.apply.clone();
            flags.round = args.round;
            let cfg = config::resolve("transform", flags, config)?;
            transform(&cfg, cli.out.as_deref())
        }
        Command::Chsh(args) => {
            let mut flags = cli.overrides(&args.common);
            flags.method = args.method.clone();
            let cfg = config::resolve("chsh", flags, config)?;
            chsh_cmd(&cfg, args.csv.as_deref(), cli.out.as_deref())
        }
        Command::Audit(args) => {
            let mut flags = cli.overrides(&args.common);
            flags.perturbations = args.perturbations;
            let cfg = config::resolve("audit", flags, config)?;
            audit(&cfg, cli.out.as_deref())
        }
        Command::Zoo {
            action: ZooAction::List,
        } => {
            let mut text = String::new();
            for (name, description) in ZOO {
                text.push_str(&format!("{name}\t{description}\n"));
            }
            text.push_str(&format!(
                "{REFERENCE_COSINE}\tsinglet cosine correlation -cos(a-b); chsh only, not a local model\n"
            ));
            report::emit(cli.out.as_deref(), &text)
        }
    }
}

fn model_doc(model: &LocalModel) -> Value {
    json!({
        "name": model.name(),
        "lambdas": model.source().labels(),
        "slots": model.grid().len(),
        "doubled": model.is_doubled(),
        "provenance": model.provenance().iter().map(|s| s.op.clone()).collect::<Vec<_>>(),
    })
}

fn conditionals(model: &LocalModel, station: Station, angles: &[f64]) -> Result<Value> {
    let mut out = Vec::new();
    for &angle in angles {
        let setting = Setting::new(station, angle);
        let cond = exact_conditional(model, station, &setting)?;
        let by_lambda: Map<String, Value> = model
            .source()
            .labels()
            .iter()
            .zip(&cond)
            .map(|(l, v)| (l.clone(), num(*v)))
            .collect();
        out.push(json!({
            "setting": num(angle),
            "marginal": num(exact_marginal(model, station, &setting)?),
            "given_lambda": by_lambda,
        }));
    }
    Ok(Value::Array(out))
}

fn simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let model = load_model(&cfg.model)?;
    let schedule = cfg.schedule(&model)?;
    let records = run_experiment(&model, &schedule)?;
    let settings = cfg.chsh_settings();
    let mut pairs = Vec::new();
    for (_, a, b) in settings.pairs() {
        let exact = hvsim_core::correlate(&model, &a, &b, Method::Exact, 0, 0)?;
        let pooled = pooled_correlation(&records, a.angle(), b.angle());
        pairs.push(json!({
            "a": num(a.angle()),
            "b": num(b.angle()),
            "exact": num(exact.e_ab),
            "empirical": pooled.map(|p| num(p.e_ab)),
            "std_error": pooled.map(|p| num(p.std_error)),
            "count": pooled.map(|p| p.count).unwrap_or(0),
        }));
    }
    let exact = chsh(&model, &settings, Method::Exact, 0, 0, cfg.tol)?;
    let mut doc = report::header(cfg);
    doc.insert("model".into(), model_doc(&model));
    doc.insert("trials".into(), json!(records.len()));
    doc.insert(
        "seeds".into(),
        json!({
            "source": schedule.seeds.source,
            "s1": schedule.seeds.s1,
            "s2": schedule.seeds.s2,
            "settings": schedule.seeds.settings,
        }),
    );
    doc.insert("policy".into(), json!(schedule.policy.name()));
    doc.insert("correlations".into(), Value::Array(pairs));
    doc.insert(
        "conditionals_a".into(),
        conditionals(&model, Station::S1, &[settings.a.angle(), settings.a2.angle()])?,
    );
    doc.insert(
        "conditionals_b".into(),
        conditionals(&model, Station::S2, &[settings.b.angle(), settings.b2.angle()])?,
    );
    doc.insert("chsh".into(), report::chsh(model.source(), &exact));
    let summary = report::to_text(&doc);
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            let path = dir.join("trials.csv");
            let mut buf = report::comment_lines(cfg).into_bytes();
            tables::write_trials(&mut buf, model.source(), &records)?;
            fs::write(&path, buf).map_err(|e| HarnessError::io(&path, e))?;
            report::emit(Some(&dir.join("summary.json")), &summary)
        }
        None => report::emit(None, &summary),
    }
}

fn modes(mode: &str) -> Result<Vec<FactorizationMode>> {
    if mode == "both" {
        Ok(FactorizationMode::ALL.to_vec())
    } else {
        Ok(vec![config::parse_mode(mode)?])
    }
}

fn table_doc(table: &JointTable, modes: &[FactorizationMode], tol: f64) -> Result<Value> {
    let (a, b) = table.settings();
    let mut reports = Vec::new();
    for &mode in modes {
        reports.push(report::factorization(&check_factorization(table, mode, tol)?));
    }
    Ok(json!({
        "a": num(a.angle()),
        "b": num(b.angle()),
        "factorization": reports,
    }))
}

fn read_table(path: &Path) -> Result<JointTable> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    tables::read_joint_table(&text)
}

fn check(cfg: &RunConfig, args: &CheckArgs, out: Option<&Path>) -> Result<()> {
    let modes = modes(&args.mode)?;
    let mut doc = report::header(cfg);
    if let Some(path) = &args.table_in {
        let table = read_table(path)?;
        doc.insert("table".into(), json!(path.to_string_lossy()));
        doc.insert("pairs".into(), json!([table_doc(&table, &modes, cfg.tol)?]));
        return report::emit(out, &report::to_text(&doc));
    }
    let model = load_model(&cfg.model)?;
    let settings = cfg.chsh_settings();
    let mut pairs = Vec::new();
    for (i, (_, a, b)) in settings.pairs().into_iter().enumerate() {
        let table = tabulate_joint(&model, &a, &b)?;
        if i == 0 {
            if let Some(path) = &args.table_out {
                let text = tables::write_joint_table(&table, &report::comment_lines(cfg))?;
                fs::write(path, text).map_err(|e| HarnessError::io(path, e))?;
            }
        }
        pairs.push(table_doc(&table, &modes, cfg.tol)?);
    }
    doc.insert("model".into(), model_doc(&model));
    doc.insert("pairs".into(), Value::Array(pairs));
    doc.insert(
        "conditionals_a".into(),
        conditionals(&model, Station::S1, &[settings.a.angle(), settings.a2.angle()])?,
    );
    doc.insert(
        "conditionals_b".into(),
        conditionals(&model, Station::S2, &[settings.b.angle(), settings.b2.angle()])?,
    );
    report::emit(out, &report::to_text(&doc))
}

/// `op:key=value:key=value`.
fn parse_op(spec: &str) -> Result<(String, Vec<(String, String)>)> {
    let mut parts = spec.split(':');
    let op = parts.next().unwrap_or_default().trim().to_string();
    let mut options = Vec::new();
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| {
            HarnessError::Config(format!("transform option `{p}` in `{spec}` is not key=value"))
        })?;
        options.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok((op, options))
}

struct Options<'a> {
    spec: &'a str,
    items: Vec<(String, String)>,
}

impl Options<'_> {
    fn take(&mut self, key: &str) -> Option<String> {
        let i = self.items.iter().position(|(k, _)| k == key)?;
        Some(self.items.remove(i).1)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key)
            .map(|v| {
                parse_angle(&v).map_err(|_| {
                    HarnessError::Config(format!("`{key}={v}` in `{}` is not a number", self.spec))
                })
            })
            .transpose()
    }

    fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.take(key)
            .map(|v| {
                v.parse().map_err(|_| {
                    HarnessError::Config(format!("`{key}={v}` in `{}` is not an integer", self.spec))
                })
            })
            .transpose()
    }

    fn scope(&mut self) -> Result<SignScope> {
        match self.take("scope").as_deref() {
            None | Some("both") => Ok(SignScope::Both),
            Some("S1" | "s1") => Ok(SignScope::Only(Station::S1)),
            Some("S2" | "s2") => Ok(SignScope::Only(Station::S2)),
            Some(other) => Err(HarnessError::Config(format!("unknown scope `{other}`"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.items.first() {
            None => Ok(()),
            Some((k, _)) => Err(HarnessError::Config(format!(
                "unknown option `{k}` in `{}`",
                self.spec
            ))),
        }
    }
}

/// Applies one transform spec. `index` keys the default seed so repeated
/// transforms in one list draw different signs.
pub fn apply_transform(
    model: &LocalModel,
    spec: &str,
    seed: u64,
    index: usize,
    round: bool,
) -> Result<LocalModel> {
    let (op, items) = parse_op(spec)?;
    let mut o = Options { spec, items };
    let default_seed = hvsim_core::rng::derive_seed(seed, &[index as u64]);
    let result = match op.as_str() {
        "layer_double" => layer_double(model)?,
        "rademacher" => {
            let mut mean = o.take_f64("mean")?.unwrap_or(0.0);
            let scope = o.scope()?;
            let seed = o.take_u64("seed")?.unwrap_or(default_seed);
            if round {
                mean = nearest_representable_mean(mean, model.grid().len());
            }
            let r = make_sign_function(model.grid(), mean, seed)?;
            time_symmetrize_scoped(model, &r, scope)?
        }
        "target_marginal" => {
            let station = match o.take("station").as_deref() {
                Some("S1" | "s1") | None => Station::S1,
                Some("S2" | "s2") => Station::S2,
                Some(other) => {
                    return Err(HarnessError::Config(format!("unknown station `{other}`")))
                }
            };
            let alpha = o.take_f64("alpha")?.ok_or_else(|| {
                HarnessError::Config(format!("`{spec}` needs alpha=<target marginal>"))
            })?;
            let angle = o.take_f64("angle")?.unwrap_or(0.0);
            let seed = o.take_u64("seed")?.unwrap_or(default_seed);
            let setting = Setting::new(station, angle);
            target_marginal(model, station, &setting, alpha, seed, round)?.0
        }
        "source_sign" => {
            let values = o.take("values").ok_or_else(|| {
                HarnessError::Config(format!("`{spec}` needs values=<+1/-1 per source state>"))
            })?;
            let signs = values
                .split('/')
                .map(|v| {
                    let v: i64 = v.trim().trim_start_matches('+').parse().map_err(|_| {
                        HarnessError::Config(format!("bad sign `{v}` in `{spec}`"))
                    })?;
                    Ok(Sign::try_from(v)?)
                })
                .collect::<Result<Vec<Sign>>>()?;
            let scope = o.scope()?;
            source_symmetrize(model, signs, scope)?
        }
        other => {
            return Err(HarnessError::Config(format!(
                "unknown transform `{other}` (layer_double, rademacher, target_marginal, source_sign)"
            )))
        }
    };
    o.finish()?;
    Ok(result)
}

fn transform(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    if cfg.apply.is_empty() {
        return Err(HarnessError::Config("no transform given (use --apply)".to_string()));
    }
    let mut model = load_model(&cfg.model)?;
    for (i, spec) in cfg.apply.iter().enumerate() {
        model = apply_transform(&model, spec, cfg.seed, i, cfg.round)?;
    }
    let text = format!(
        "{}{}",
        report::comment_lines(cfg),
        Descriptor::from_model(&model).to_toml()?
    );
    report::emit(out, &text)
}

fn chsh_cmd(cfg: &RunConfig, csv: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let settings = cfg.chsh_settings();
    let method = cfg.method()?;
    let reference = reference_chsh(&settings);
    let bound = deterministic_bound(2)?;
    let mut doc = report::header(cfg);
    let row = if cfg.model == REFERENCE_COSINE {
        doc.insert("model".into(), json!({ "name": REFERENCE_COSINE }));
        doc.insert("s_value".into(), num(reference));
        ChshRow {
            model: REFERENCE_COSINE.to_string(),
            angles: settings.angles(),
            method: "reference".to_string(),
            trials: 0,
            seed: cfg.seed,
            s_value: reference,
            within_bound: reference.abs() <= bound.value + cfg.tol,
        }
    } else {
        let model = load_model(&cfg.model)?;
        let result = chsh(&model, &settings, method, cfg.trials, cfg.seed, cfg.tol)?;
        doc.insert("model".into(), model_doc(&model));
        doc.insert("s_value".into(), num(result.s_value));
        doc.insert("chsh".into(), report::chsh(model.source(), &result));
        ChshRow::from_result(model.name(), cfg.seed, &result)
    };
    doc.insert("within_bound".into(), json!(row.within_bound));
    doc.insert("deterministic_bound".into(), num(bound.value));
    doc.insert("strategies".into(), json!(bound.strategies));
    doc.insert("reference_s".into(), num(reference));
    doc.insert("gap".into(), num(reference.abs() - bound.value));
    doc.insert("excess_over_bound".into(), num(row.s_value.abs() - bound.value));
    if let Some(path) = csv {
        let text = tables::chsh_rows(&[row], &report::comment_lines(cfg))?;
        fs::write(path, text).map_err(|e| HarnessError::io(path, e))?;
    }
    report::emit(out, &report::to_text(&doc))
}

fn audit(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let model = load_model(&cfg.model)?;
    let schedule = cfg.schedule(&model)?;
    let result = locality_audit(&model, &schedule, cfg.perturbations)?;
    let mut doc = report::header(cfg);
    doc.insert("model".into(), model_doc(&model));
    doc.insert("audit".into(), report::audit(&result));
    report::emit(out, &report::to_text(&doc))
}
