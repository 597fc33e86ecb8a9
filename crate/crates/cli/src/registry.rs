//! Built-in models, their parameter schemas and per-experiment defaults.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use meanfield_core::models::{self, MrdlParams, SeirParams, TwoStateParams, WsnParams};
use meanfield_core::{Functional, PopulationModel};
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: String,
    pub description: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSpec {
    pub id: &'static str,
    pub description: &'static str,
    pub states: Vec<String>,
    pub parameters: Vec<ParamSpec>,
    pub functionals: Vec<&'static str>,
    pub default_init: Vec<f64>,
}

const DEFAULT_CONSTANT_MATRIX: &str = "0.5,0.3,0.2;0.1,0.6,0.3;0.4,0.4,0.2";

fn p(name: &'static str, default: impl ToString, description: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        default: default.to_string(),
        description,
    }
}

pub fn specs() -> Vec<ModelSpec> {
    let seir = SeirParams::default();
    let wsn = WsnParams::default();
    let mrdl = MrdlParams::default();
    let labels = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    vec![
        ModelSpec {
            id: "seir",
            description: "SEIR epidemic with external and contact infection",
            states: labels(&["S", "E", "I", "R"]),
            parameters: vec![
                p("alpha_e", seir.alpha_e, "external infection probability"),
                p("alpha_i", seir.alpha_i, "contact infection probability per unit infected fraction"),
                p("alpha_a", seir.alpha_a, "exposed to infected"),
                p("alpha_r", seir.alpha_r, "infected to recovered"),
                p("alpha_l", seir.alpha_l, "recovered to susceptible"),
            ],
            functionals: vec!["state:<label>", "mass"],
            default_init: vec![0.2, 0.2, 0.2, 0.4],
        },
        ModelSpec {
            id: "wsn",
            description: "wireless sensor network with gateways (a, b) and sensors (c, d, e)",
            states: labels(&["a", "b", "c", "d", "e"]),
            parameters: vec![
                p("alpha", wsn.alpha, "gateway becomes available again"),
                p("beta", wsn.beta, "gateway-sensor communication"),
                p("lambda", wsn.lambda, "sensor becomes ready to send"),
                p("gamma", wsn.gamma, "sensor times out"),
                p("eta", wsn.eta, "delayed sensor retries"),
                p("clamp", wsn.clamp, "per-run cap on the simulated response time"),
            ],
            functionals: vec!["response-time", "state:<label>", "mass"],
            default_init: vec![1.0 / 3.0, 0.0, 0.0, 0.0, 2.0 / 3.0],
        },
        ModelSpec {
            id: "mrdl",
            description: "majority rule with differential latency (LA, NA, LB, NB)",
            states: labels(&["LA", "NA", "LB", "NB"]),
            parameters: vec![
                p("q", mrdl.q, "discretisation factor, latent agents activate with probability 1/q"),
                p("lambda", mrdl.lambda, "relative activation rate of opinion B"),
            ],
            functionals: vec!["consensus", "state:<label>", "mass"],
            default_init: vec![0.6, 0.0, 0.4, 0.0],
        },
        ModelSpec {
            id: "two-state",
            description: "two-state chain, state 0 moves to 1 with probability alpha * m0",
            states: labels(&["0", "1"]),
            parameters: vec![p("alpha", TwoStateParams::default().alpha, "jump probability scale, in (0, 1)")],
            functionals: vec!["state:<label>", "mass"],
            default_init: vec![0.7, 0.3],
        },
        ModelSpec {
            id: "constant",
            description: "occupancy-independent kernel given as a row-stochastic matrix",
            states: labels(&["s0", "s1", "s2"]),
            parameters: vec![p("matrix", DEFAULT_CONSTANT_MATRIX, "rows separated by ';', entries by ','")],
            functionals: vec!["state:<label>", "mass"],
            default_init: vec![1.0, 0.0, 0.0],
        },
    ]
}

pub fn spec(id: &str) -> Result<ModelSpec> {
    specs()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| anyhow!("unknown model '{id}' (see `meanfield list-models`)"))
}

/// Parameter values after applying overrides to the defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedParams {
    values: BTreeMap<String, String>,
}

impl ResolvedParams {
    pub fn resolve(spec: &ModelSpec, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut values: BTreeMap<String, String> =
            spec.parameters.iter().map(|p| (p.name.to_string(), p.default.clone())).collect();
        for (k, v) in overrides {
            if !values.contains_key(k) {
                let known: Vec<&str> = spec.parameters.iter().map(|p| p.name).collect();
                bail!("model '{}' has no parameter '{k}' (known: {})", spec.id, known.join(", "));
            }
            values.insert(k.clone(), v.clone());
        }
        Ok(Self { values })
    }

    pub fn real(&self, name: &str) -> Result<f64> {
        let raw = &self.values[name];
        raw.trim()
            .parse::<f64>()
            .with_context(|| format!("parameter {name}: '{raw}' is not a number"))
    }

    pub fn raw(&self, name: &str) -> &str {
        &self.values[name]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad matrix entry '{x}'")))
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        bail!("matrix must be square, got {n} rows of lengths {:?}", rows.iter().map(Vec::len).collect::<Vec<_>>());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn build_model(id: &str, params: &ResolvedParams) -> Result<PopulationModel> {
    let model = match id {
        "seir" => models::seir(&SeirParams {
            alpha_e: params.real("alpha_e")?,
            alpha_i: params.real("alpha_i")?,
            alpha_a: params.real("alpha_a")?,
            alpha_r: params.real("alpha_r")?,
            alpha_l: params.real("alpha_l")?,
        }),
        "wsn" => models::wsn(&wsn_params(params)?),
        "mrdl" => models::mrdl(&MrdlParams {
            q: params.real("q")?,
            lambda: params.real("lambda")?,
        }),
        "two-state" => models::two_state(&TwoStateParams {
            alpha: params.real("alpha")?,
        }),
        "constant" => models::constant(parse_matrix(params.raw("matrix"))?),
        other => bail!("unknown model '{other}'"),
    };
    Ok(model?)
}

pub fn wsn_params(params: &ResolvedParams) -> Result<WsnParams> {
    Ok(WsnParams {
        alpha: params.real("alpha")?,
        beta: params.real("beta")?,
        lambda: params.real("lambda")?,
        gamma: params.real("gamma")?,
        eta: params.real("eta")?,
        clamp: params.real("clamp")?,
    })
}

/// Resolves a functional id against a model: `response-time` (wsn),
/// `consensus` (mrdl), `mass`, or `state:<label>`.
pub fn build_functional(model_id: &str, model: &PopulationModel, params: &ResolvedParams, id: &str) -> Result<Functional> {
    let n = model.dim();
    match id {
        "response-time" if model_id == "wsn" => Ok(models::response_time_functional(&wsn_params(params)?)),
        "consensus" if model_id == "mrdl" => Ok(models::consensus_functional()),
        "mass" => Ok(Functional::total_mass(n)),
        _ => {
            if let Some(label) = id.strip_prefix("state:") {
                let i = model
                    .labels()
                    .iter()
                    .position(|l| l == label)
                    .ok_or_else(|| anyhow!("model '{model_id}' has no state '{label}' (states: {})", model.labels().join(", ")))?;
                Ok(Functional::coordinate(n, i))
            } else {
                bail!("functional '{id}' is not available for model '{model_id}'")
            }
        }
    }
}

/// Default clamp for the simulated functional: the model's own `clamp`
/// parameter when it has one.
pub fn default_clamp(params: &ResolvedParams) -> Result<Option<f64>> {
    if params.values.contains_key("clamp") {
        Ok(Some(params.real("clamp")?))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Transient,
    Steady,
    ResponseTime,
    SqrtFit,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Transient => "transient",
            Experiment::Steady => "steady",
            Experiment::ResponseTime => "response-time",
            Experiment::SqrtFit => "sqrt-fit",
        }
    }

    pub fn default_model(self) -> &'static str {
        match self {
            Experiment::Transient | Experiment::Steady => "seir",
            Experiment::ResponseTime => "wsn",
            Experiment::SqrtFit => "two-state",
        }
    }
}

/// Settings used when neither the config file nor a flag provides them.
#[derive(Debug, Clone, PartialEq)]
pub struct Defaults {
    pub n: Vec<u64>,
    pub t_max: usize,
    pub runs: usize,
    pub functional: Option<&'static str>,
    pub params: Vec<(&'static str, &'static str)>,
}

pub fn defaults(experiment: Experiment, model: &str) -> Defaults {
    let mut d = Defaults {
        n: vec![10],
        t_max: 100,
        runs: 10_000,
        functional: None,
        params: Vec::new(),
    };
    match (experiment, model) {
        (Experiment::Transient, "seir") => {
            d.n = vec![10, 20, 50, 100];
            d.t_max = 500;
            d.runs = 100_000;
        }
        (Experiment::Transient, "two-state") => {
            d.n = vec![10, 30];
            d.t_max = 50;
            d.runs = 100_000;
        }
        (Experiment::Transient | Experiment::ResponseTime, "mrdl") => {
            d.n = vec![32, 160];
            d.t_max = 500;
            d.runs = 1000;
        }
        (Experiment::Transient | Experiment::ResponseTime, "wsn") => {
            d.n = vec![15];
            d.t_max = 400;
            d.runs = 20_000;
        }
        (Experiment::Steady, "seir") => {
            d.t_max = 1000;
            d.runs = 100_000;
        }
        (Experiment::Steady, _) => d.t_max = 1000,
        (Experiment::SqrtFit, "two-state") => {
            d.n = (1..=100).map(|k| 10 * k).collect();
            d.params = vec![("alpha", "0.75")];
        }
        (Experiment::SqrtFit, _) => d.n = vec![5, 10, 20, 40],
        _ => {}
    }
    d.functional = match (experiment, model) {
        (Experiment::ResponseTime, "wsn") => Some("response-time"),
        (Experiment::ResponseTime, "mrdl") => Some("consensus"),
        _ => None,
    };
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_spec_builds_with_defaults() {
        for s in specs() {
            let params = ResolvedParams::resolve(&s, &BTreeMap::new()).unwrap();
            let model = build_model(s.id, &params).unwrap();
            assert_eq!(model.labels(), s.states.as_slice(), "{}", s.id);
            assert_eq!(s.default_init.len(), model.dim());
        }
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let s = spec("seir").unwrap();
        let overrides = BTreeMap::from([("beta".to_string(), "0.1".to_string())]);
        assert!(ResolvedParams::resolve(&s, &overrides).is_err());
    }

    #[test]
    fn matrix_parsing() {
        let m = parse_matrix("0.5, 0.5; 1, 0").unwrap();
        assert_eq!(m[(1, 0)], 1.0);
        assert!(parse_matrix("1,0;1").is_err());
        assert!(parse_matrix("a").is_err());
    }

    #[test]
    fn functionals_resolve_per_model() {
        let s = spec("wsn").unwrap();
        let params = ResolvedParams::resolve(&s, &BTreeMap::new()).unwrap();
        let model = build_model("wsn", &params).unwrap();
        assert!(build_functional("wsn", &model, &params, "response-time").is_ok());
        assert!(build_functional("wsn", &model, &params, "consensus").is_err());
        assert!(build_functional("wsn", &model, &params, "state:c").is_ok());
        assert!(build_functional("wsn", &model, &params, "state:z").is_err());
    }
}
