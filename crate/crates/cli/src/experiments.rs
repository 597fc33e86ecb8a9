//! The experiment commands. Each writes its tables through an [`OutputSet`].

use anyhow::{anyhow, bail, Result};
use meanfield_core::analysis::fit_sqrt_n;
use meanfield_core::steady::{find_fixed_point, steady_refinement_at, FixedPointOptions, Stability};
use meanfield_core::{
    exact_stationary, exact_transient, refine, refine_functional, refined_mean, simulate, CountState, OccupancyVector,
    SimulationOptions,
};

use crate::config::{ExperimentConfig, InitialState};
use crate::output::{Cell, OutputSet, Table};
use crate::svg::PlotSpec;

fn stem(cfg: &ExperimentConfig, n: u64) -> String {
    format!("{}_{}_N{n}", cfg.experiment.name(), cfg.model_id)
}

fn initial_counts(cfg: &ExperimentConfig, n: u64) -> Result<CountState> {
    let (counts, note) = cfg.counts_for(n)?;
    if let Some(note) = note {
        eprintln!("{note}");
    }
    Ok(counts)
}

fn report_warnings(n: u64, warnings: &[String]) {
    for w in warnings {
        eprintln!("warning (N={n}): {w}");
    }
}

/// Mean field, refined mean and simulated mean per state and time.
pub fn transient(cfg: &ExperimentConfig, out: &mut OutputSet, error_curves: bool, with_exact: bool) -> Result<()> {
    if cfg.functional.is_some() {
        eprintln!("note: transient ignores --functional; use response-time for functional curves");
    }
    let labels = cfg.model.labels();
    for &n in &cfg.ns {
        let init = initial_counts(cfg, n)?;
        let m0 = init.occupancy();
        let states = refine(&cfg.model, &m0, cfg.t_max)?;
        let sim = simulate(&cfg.model, &init, &SimulationOptions::new(cfg.t_max, cfg.runs, cfg.seed))?;
        report_warnings(n, &sim.warnings);
        let exact = if with_exact {
            Some(exact_transient(&cfg.model, &init, cfg.t_max)?)
        } else {
            None
        };

        let mut header = vec!["t", "state", "mu", "refined_mean", "sim_mean", "sim_stderr"];
        if error_curves {
            header.extend(["sim_minus_mu", "sim_minus_refined"]);
        }
        if with_exact {
            header.push("exact_mean");
        }
        let mut table = Table::new(&header);
        for (t, s) in states.iter().enumerate() {
            let rm = refined_mean(s, n)?;
            let se = sim.stderr(t);
            for (i, label) in labels.iter().enumerate() {
                let sm = sim.mean_trajectory[t][i];
                let mut row: Vec<Cell> =
                    vec![t.into(), label.as_str().into(), s.mu[i].into(), rm[i].into(), sm.into(), se[i].into()];
                if error_curves {
                    row.push((sm - s.mu[i]).into());
                    row.push((sm - rm[i]).into());
                }
                if let Some(e) = &exact {
                    row.push(e[t][i].into());
                }
                table.push(row);
            }
        }

        let name = stem(cfg, n);
        let mut series = vec!["mu", "refined_mean", "sim_mean"];
        if with_exact {
            series.push("exact_mean");
        }
        let mut plots = vec![(
            name.clone(),
            PlotSpec::new(format!("{} N={n}", cfg.model_id), "t", &series).grouped_by("state"),
        )];
        if error_curves {
            plots.push((
                format!("transient-error_{}_N{n}", cfg.model_id),
                PlotSpec::new(format!("{} N={n}: simulation minus approximation", cfg.model_id), "t", &["sim_minus_mu", "sim_minus_refined"])
                    .grouped_by("state"),
            ));
        }
        out.emit(&name, &table, &plots)?;
    }
    Ok(())
}

fn start_point(cfg: &ExperimentConfig) -> OccupancyVector {
    match &cfg.init {
        InitialState::Fractions(m) => m.clone(),
        InitialState::Counts(c) => c.occupancy(),
    }
}

/// Steady-state table: simulation at `t_max`, refined and classical fixed point.
pub fn steady(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let report = find_fixed_point(&cfg.model, &start_point(cfg), FixedPointOptions::default())?;
    let refined = match report.classification {
        Stability::ExponentiallyStable => Some(steady_refinement_at(&cfg.model, &report)?),
        other => {
            eprintln!("fixed point is {}; refined steady-state values are unavailable", other.as_str());
            None
        }
    };
    println!(
        "fixed point: residual {:.3e}, tangent spectral radius {:.12}, {} ({:?}, {} iterations)",
        report.residual,
        report.spectral_radius_tangent,
        report.classification.as_str(),
        report.method,
        report.iterations
    );

    let mut fp = Table::new(&["quantity", "value"]);
    fp.push(vec!["residual".into(), report.residual.into()]);
    fp.push(vec!["spectral_radius_tangent".into(), report.spectral_radius_tangent.into()]);
    fp.push(vec!["classification".into(), report.classification.as_str().into()]);
    fp.push(vec!["method".into(), format!("{:?}", report.method).to_lowercase().into()]);
    fp.push(vec!["iterations".into(), report.iterations.into()]);
    for (i, label) in cfg.model.labels().iter().enumerate() {
        fp.push(vec![format!("mu_inf[{label}]").into(), report.mu_inf[i].into()]);
    }
    out.emit(&format!("steady_{}_fixed_point", cfg.model_id), &fp, &[])?;

    for &n in &cfg.ns {
        let init = initial_counts(cfg, n)?;
        let sim = simulate(&cfg.model, &init, &SimulationOptions::new(cfg.t_max, cfg.runs, cfg.seed))?;
        report_warnings(n, &sim.warnings);
        let sm = &sim.mean_trajectory[cfg.t_max];
        let se = sim.stderr(cfg.t_max);
        let rm = refined.as_ref().map(|r| r.refined_mean(n)).transpose()?;
        let mut table = Table::new(&["state", "simulation", "simulation_stderr", "refined", "mean_field"]);
        for (i, label) in cfg.model.labels().iter().enumerate() {
            let refined_cell: Cell = match &rm {
                Some(v) => v[i].into(),
                None => "unavailable".into(),
            };
            table.push(vec![label.as_str().into(), sm[i].into(), se[i].into(), refined_cell, report.mu_inf[i].into()]);
        }
        let name = stem(cfg, n);
        let plot = PlotSpec::new(format!("{} steady state N={n}", cfg.model_id), "state", &["simulation", "refined", "mean_field"]);
        out.emit(&name, &table, &[(name.clone(), plot)])?;
    }
    Ok(())
}

/// The five curves for a functional `h`: `h(mu)`, simulated `E[h(M)]`, the
/// refined functional, `h(mu + V/N)` and `h` of the simulated mean.
pub fn response_time(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<()> {
    let (h_id, h) = cfg
        .functional
        .as_ref()
        .ok_or_else(|| anyhow!("model '{}' has no default functional; pass --functional", cfg.model_id))?;
    if h.outputs() != 1 {
        bail!("functional '{h_id}' is not scalar");
    }
    let optional = |r: meanfield_core::Result<nalgebra::DVector<f64>>| -> Cell {
        match r {
            Ok(v) => v[0].into(),
            Err(_) => "unavailable".into(),
        }
    };
    for &n in &cfg.ns {
        let init = initial_counts(cfg, n)?;
        let m0 = init.occupancy();
        let states = refine(&cfg.model, &m0, cfg.t_max)?;
        let refined_h = refine_functional(&cfg.model, h, &m0, cfg.t_max, n)?;
        let opts = SimulationOptions::new(cfg.t_max, cfg.runs, cfg.seed).with_functional(h.clone(), cfg.clamp);
        let sim = simulate(&cfg.model, &init, &opts)?;
        report_warnings(n, &sim.warnings);
        let f_mean = sim.functional_mean.as_ref().expect("functional requested");
        let f_err = sim.functional_stderr.as_ref().expect("functional requested");

        let mut table = Table::new(&[
            "t",
            "mean_field",
            "simulation",
            "simulation_stderr",
            "refined_functional",
            "h_of_refined_mean",
            "h_of_simulated_mean",
            "excluded_runs",
        ]);
        for (t, s) in states.iter().enumerate() {
            table.push(vec![
                t.into(),
                h.eval(s.mu.as_vector())?[0].into(),
                f_mean[t][0].into(),
                f_err[t][0].into(),
                refined_h[t][0].into(),
                optional(h.eval(&refined_mean(s, n)?)),
                optional(h.eval(&sim.mean_trajectory[t])),
                sim.functional_excluded[t].into(),
            ]);
        }
        let name = stem(cfg, n);
        let plot = PlotSpec::new(
            format!("{} {h_id} N={n}", cfg.model_id),
            "t",
            &["mean_field", "simulation", "refined_functional", "h_of_refined_mean", "h_of_simulated_mean"],
        );
        out.emit(&name, &table, &[(name.clone(), plot)])?;
    }
    Ok(())
}

/// Least-squares fit of `sqrt(N) (E[M_i] - mu_i(inf))` to `a + b / sqrt(N)`
/// from exact stationary expectations.
pub fn sqrt_fit(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<(f64, f64)> {
    let (state, label) = match cfg.functional.as_ref().map(|(id, _)| id.as_str()) {
        None => (0, cfg.model.labels()[0].clone()),
        Some(id) => {
            let label = id
                .strip_prefix("state:")
                .ok_or_else(|| anyhow!("sqrt-fit needs a coordinate functional (state:<label>), got '{id}'"))?;
            let i = cfg.model.labels().iter().position(|l| l == label).expect("resolved functional");
            (i, label.to_string())
        }
    };
    let report = find_fixed_point(&cfg.model, &start_point(cfg), FixedPointOptions::default())?;
    let limit = report.mu_inf[state];
    let mut expectations = Vec::with_capacity(cfg.ns.len());
    for &n in &cfg.ns {
        expectations.push(exact_stationary(&cfg.model, n)?[state]);
    }
    let (a, b) = fit_sqrt_n(&cfg.ns, &expectations, limit)?;
    println!("fit of sqrt(N) (E[M_{label}] - {limit:.12}) = a + b / sqrt(N): a = {a:.6}, b = {b:.6}");

    let mut table = Table::new(&["n", "exact_mean", "mu_inf", "scaled_gap", "fit"]);
    for (&n, &e) in cfg.ns.iter().zip(&expectations) {
        let root = (n as f64).sqrt();
        table.push(vec![n.into(), e.into(), limit.into(), (root * (e - limit)).into(), (a + b / root).into()]);
    }
    let name = format!("sqrt-fit_{}", cfg.model_id);
    let plot = PlotSpec::new(format!("{}: sqrt(N) (E[M_{label}] - mu_inf)", cfg.model_id), "n", &["scaled_gap", "fit"]);
    out.emit(&name, &table, &[(name.clone(), plot)])?;

    let mut coeffs = Table::new(&["a", "b", "points", "state"]);
    coeffs.push(vec![a.into(), b.into(), cfg.ns.len().into(), label.into()]);
    out.emit(&format!("{name}_coefficients"), &coeffs, &[])?;
    Ok((a, b))
}
