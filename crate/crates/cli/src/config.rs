//! Experiment configuration: an optional TOML file, overridden by flags,
//! falling back to per-model defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use meanfield_core::{CountState, Functional, OccupancyVector, PopulationModel};
use serde::Deserialize;

use crate::registry::{self, Experiment, ResolvedParams};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MEANFIELD_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "results";
const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model id (see `list-models`).
    #[arg(long)]
    pub model: Option<String>,
    /// Parameter overrides, `name=value`.
    #[arg(long = "params", value_name = "K=V", num_args = 1..)]
    pub params: Vec<String>,
    /// Initial occupancy: fractions summing to 1, or integer counts.
    #[arg(long, value_name = "X1,X2,...")]
    pub init: Option<String>,
    /// Population size; repeat or comma-separate for several.
    #[arg(long = "n", value_name = "N", value_delimiter = ',')]
    pub n: Vec<u64>,
    /// Time horizon.
    #[arg(long)]
    pub tmax: Option<usize>,
    /// Number of simulation runs.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Functional id: `response-time`, `consensus`, `mass` or `state:<label>`.
    #[arg(long)]
    pub functional: Option<String>,
    /// Per-run cap applied to the simulated functional.
    #[arg(long)]
    pub clamp: Option<f64>,
    /// Output directory (default: $MEANFIELD_OUT_DIR, else ./results).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output formats.
    #[arg(long, value_delimiter = ',', value_name = "csv,svg")]
    pub format: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, toml::Value>,
    init: Option<Vec<f64>>,
    n: Option<Vec<u64>>,
    tmax: Option<usize>,
    runs: Option<usize>,
    seed: Option<u64>,
    functional: Option<String>,
    clamp: Option<f64>,
    out: Option<PathBuf>,
    format: Option<Vec<String>>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone)]
pub enum InitialState {
    Fractions(OccupancyVector),
    Counts(CountState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub svg: bool,
}

pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model_id: String,
    pub params: ResolvedParams,
    pub model: PopulationModel,
    pub init: InitialState,
    pub ns: Vec<u64>,
    pub t_max: usize,
    pub runs: usize,
    pub seed: u64,
    pub functional: Option<(String, Functional)>,
    pub clamp: Option<f64>,
    pub out_dir: PathBuf,
    pub formats: Formats,
}

fn parse_kv(items: &[String]) -> Result<BTreeMap<String, String>> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("parameter override '{item}' is not of the form name=value"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn toml_to_string(name: &str, v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::Float(x) => Ok(format!("{x:?}")),
        toml::Value::Integer(x) => Ok(x.to_string()),
        toml::Value::String(s) => Ok(s.clone()),
        other => bail!("parameter {name}: unsupported value {other}"),
    }
}

fn parse_init(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad initial value '{x}'")))
        .collect()
}

fn classify_init(values: Vec<f64>) -> Result<InitialState> {
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() <= 1e-9 {
        return Ok(InitialState::Fractions(OccupancyVector::new(values)?));
    }
    if values.iter().all(|&x| x >= 0.0 && x.fract() == 0.0) {
        return Ok(InitialState::Counts(CountState::new(values.iter().map(|&x| x as u64).collect())?));
    }
    bail!("initial state must be fractions summing to 1 or non-negative integer counts (sum is {sum})")
}

impl ExperimentConfig {
    pub fn resolve(experiment: Experiment, args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let model_id = args
            .model
            .clone()
            .or(file.model.clone())
            .unwrap_or_else(|| experiment.default_model().to_string());
        let spec = registry::spec(&model_id)?;
        let defaults = registry::defaults(experiment, &model_id);

        let mut overrides: BTreeMap<String, String> =
            defaults.params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in &file.params {
            overrides.insert(k.clone(), toml_to_string(k, v)?);
        }
        overrides.extend(parse_kv(&args.params)?);
        let params = ResolvedParams::resolve(&spec, &overrides)?;
        let model = registry::build_model(&model_id, &params)?;

        let init_values = match (&args.init, &file.init) {
            (Some(text), _) => parse_init(text)?,
            (None, Some(v)) => v.clone(),
            (None, None) if spec.default_init.len() == model.dim() => spec.default_init.clone(),
            (None, None) => vec![1.0 / model.dim() as f64; model.dim()],
        };
        if init_values.len() != model.dim() {
            bail!(
                "initial state has {} entries, model '{model_id}' has {} states",
                init_values.len(),
                model.dim()
            );
        }
        let init = classify_init(init_values)?;

        let mut ns = if !args.n.is_empty() {
            args.n.clone()
        } else {
            file.n.clone().unwrap_or_default()
        };
        if let InitialState::Counts(c) = &init {
            if ns.is_empty() {
                ns = vec![c.n_objects()];
            } else if ns != [c.n_objects()] {
                bail!("initial counts fix N = {}, which conflicts with --n {:?}", c.n_objects(), ns);
            }
        }
        if ns.is_empty() {
            ns = defaults.n.clone();
        }
        if ns.contains(&0) {
            bail!("population sizes must be positive");
        }

        let runs = args.runs.or(file.runs).unwrap_or(defaults.runs);
        if runs == 0 {
            bail!("--runs must be at least 1");
        }
        let functional_id = args
            .functional
            .clone()
            .or(file.functional.clone())
            .or(defaults.functional.map(str::to_string));
        let functional = functional_id
            .map(|id| registry::build_functional(&model_id, &model, &params, &id).map(|h| (id, h)))
            .transpose()?;
        let clamp = match args.clamp.or(file.clamp) {
            Some(c) => Some(c),
            None => registry::default_clamp(&params)?,
        };

        let out_dir = args
            .out
            .clone()
            .or(file.out.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR));

        let format_list = if !args.format.is_empty() {
            args.format.clone()
        } else {
            file.format.clone().unwrap_or_else(|| vec!["csv".into(), "svg".into()])
        };
        let mut formats = Formats { csv: false, svg: false };
        for f in &format_list {
            match f.trim() {
                "csv" => formats.csv = true,
                "svg" => formats.svg = true,
                other => bail!("unknown output format '{other}' (expected csv, svg)"),
            }
        }
        if !formats.csv && !formats.svg {
            bail!("no output format selected");
        }

        Ok(Self {
            experiment,
            model_id,
            params,
            model,
            init,
            ns,
            t_max: args.tmax.or(file.tmax).unwrap_or(defaults.t_max),
            runs,
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            functional,
            clamp,
            out_dir,
            formats,
        })
    }

    /// Integer initial state for population `n`, and a note when it was
    /// rounded from fractions.
    pub fn counts_for(&self, n: u64) -> Result<(CountState, Option<String>)> {
        match &self.init {
            InitialState::Counts(c) => Ok((c.clone(), None)),
            InitialState::Fractions(m) => {
                let c = CountState::from_fractions(m, n)?;
                let exact = m.iter().all(|x| (x * n as f64).fract() == 0.0);
                let note = (!exact).then(|| {
                    let fr: Vec<String> = m.iter().map(|x| format!("{x}")).collect();
                    let ct: Vec<String> = c.counts().iter().map(u64::to_string).collect();
                    format!("N={n}: initial fractions ({}) rounded to counts ({})", fr.join(", "), ct.join(", "))
                });
                Ok((c, note))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> CommonArgs {
        CommonArgs::default()
    }

    #[test]
    fn defaults_follow_the_model() {
        let c = ExperimentConfig::resolve(Experiment::Transient, &args()).unwrap();
        assert_eq!(c.model_id, "seir");
        assert_eq!(c.ns, vec![10, 20, 50, 100]);
        assert_eq!((c.t_max, c.runs), (500, 100_000));
        let c = ExperimentConfig::resolve(Experiment::SqrtFit, &args()).unwrap();
        assert_eq!(c.params.real("alpha").unwrap(), 0.75);
        assert_eq!(c.ns.len(), 100);
        let c = ExperimentConfig::resolve(Experiment::ResponseTime, &args()).unwrap();
        assert_eq!(c.functional.as_ref().unwrap().0, "response-time");
        assert_eq!(c.clamp, Some(100.0));
    }

    #[test]
    fn counts_fix_population_size() {
        let mut a = args();
        a.model = Some("two-state".into());
        a.init = Some("7,3".into());
        let c = ExperimentConfig::resolve(Experiment::Transient, &a).unwrap();
        assert_eq!(c.ns, vec![10]);
        a.n = vec![20];
        assert!(ExperimentConfig::resolve(Experiment::Transient, &a).is_err());
    }

    #[test]
    fn rounding_is_reported() {
        let mut a = args();
        a.model = Some("mrdl".into());
        let c = ExperimentConfig::resolve(Experiment::Transient, &a).unwrap();
        let (counts, note) = c.counts_for(32).unwrap();
        assert_eq!(counts.counts(), &[19, 0, 13, 0]);
        assert!(note.unwrap().contains("19, 0, 13, 0"));
        assert!(c.counts_for(160).unwrap().1.is_none());
    }

    #[test]
    fn bad_inputs_are_rejected() {
        for (init, params) in [("0.5,0.4", vec![]), ("0.5,0.5", vec!["alpha=2".to_string()]), ("0.5,0.5", vec!["alpha".into()])] {
            let mut a = args();
            a.model = Some("two-state".into());
            a.init = Some(init.into());
            a.params = params;
            assert!(ExperimentConfig::resolve(Experiment::Transient, &a).is_err());
        }
    }

    #[test]
    fn file_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            "model = \"two-state\"\nn = [10]\ntmax = 7\nruns = 3\n[params]\nalpha = 0.7\n",
        )
        .unwrap();
        let mut a = args();
        a.config = Some(path);
        a.tmax = Some(9);
        let c = ExperimentConfig::resolve(Experiment::Transient, &a).unwrap();
        assert_eq!((c.t_max, c.runs), (9, 3));
        assert_eq!(c.params.real("alpha").unwrap(), 0.7);
    }
}
