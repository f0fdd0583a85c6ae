//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use dynsbm::identify::{
    assignment_probabilities, build_conditional_matrix, check_conditions,
    joint_consecutive_edge_distribution, minimal_m_search_with, recover_static_params,
    recover_transitions_via_hmm, recover_transitions_via_phi, ConditionalMatrix, RankSearchConfig,
    Theorem, DEFAULT_MATCH_TOL,
};
use dynsbm::inference::{align_labels, fit, FitConfig, FitResult, InitStrategy};
use dynsbm::network::NetworkFile;
use dynsbm::params::pairs;
use dynsbm::presets::scenario_preset;
use dynsbm::simulate::sample_network;
use dynsbm::{LabelPermutation, ModelParams};
use log::{info, warn};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::{
    known_keys, merge, read_config, Cli, Command, EstimationArgs, ExperimentArgs, FitArgs,
    GlobalArgs, IdentifyArgs, ModelArgs, RankTableArgs, RecoverArgs, SimulateArgs,
};
use crate::report::{estimate_rows, estimates_csv, median, EntryKey, EstimateRow, Quartiles};
use crate::svg::{boxplot_svg, BoxSeries};
use crate::Outcome;

/// The `k`-th seed derived from the global seed; distinct `k` give
/// independent streams.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng.next_u64()
}

pub fn dispatch(cli: Cli) -> Result<Outcome> {
    let file = match &cli.global.config {
        Some(path) => read_config(path)?,
        None => Map::new(),
    };
    let global = GlobalArgs {
        config: cli.global.config.clone(),
        verbose: cli.global.verbose,
        ..merge(&cli.global, &file)?
    };
    if let Some(jobs) = global.jobs {
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        if rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .is_err()
        {
            warn!("worker pool already initialized; --jobs ignored");
        }
    }
    macro_rules! merged {
        ($args:expr, $ty:ty) => {{
            warn_unknown::<$ty>(&file);
            merge($args, &file)?
        }};
    }
    match &cli.command {
        Command::Simulate(a) => simulate(&global, &merged!(a, SimulateArgs)),
        Command::Fit(a) => fit_command(&global, &merged!(a, FitArgs)),
        Command::RankTable(a) => rank_table(&global, &merged!(a, RankTableArgs)),
        Command::Identify(a) => identify(&global, &merged!(a, IdentifyArgs)),
        Command::Experiment(a) => experiment(&global, &merged!(a, ExperimentArgs)),
        Command::RecoverDemo(a) => recover_demo(&global, &merged!(a, RecoverArgs)),
    }
}

fn warn_unknown<T: Serialize + Default>(file: &Map<String, Value>) {
    let mut known = known_keys::<T>();
    known.extend(known_keys::<GlobalArgs>());
    for key in file.keys().filter(|k| !known.contains(k)) {
        warn!("config key `{key}` is not used by this command");
    }
}

/// Resolves `--scenario` or `--params` into parameters and a display name.
pub fn load_model(model: &ModelArgs) -> Result<Option<(String, ModelParams)>> {
    match (&model.scenario, &model.params) {
        (Some(_), Some(_)) => bail!("give either a scenario or a parameter file, not both"),
        (Some(name), None) => Ok(Some((name.clone(), scenario_preset(name)?))),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let params: ModelParams = serde_json::from_str(&text)
                .with_context(|| format!("malformed parameter file {}", path.display()))?;
            Ok(Some((path.display().to_string(), params)))
        }
        (None, None) => Ok(None),
    }
}

fn require_model(model: &ModelArgs) -> Result<(String, ModelParams)> {
    load_model(model)?.ok_or_else(|| anyhow!("a model is required: pass --scenario or --params"))
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn fit_config(
    est: &EstimationArgs,
    default_q: Option<usize>,
    default_homogeneous: bool,
    seed: u64,
) -> Result<FitConfig> {
    let base = FitConfig::default();
    let n_states = est
        .states
        .or(default_q)
        .ok_or_else(|| anyhow!("--states is required without a true model"))?;
    let config = FitConfig {
        n_states,
        homogeneous: est.inhomogeneous.map_or(default_homogeneous, |i| !i),
        n_restarts: est.restarts.unwrap_or(base.n_restarts),
        max_outer_iterations: est.max_iter.unwrap_or(base.max_outer_iterations),
        elbo_rel_tol: est.elbo_tol.unwrap_or(base.elbo_rel_tol),
        e_step_fixed_point_iters: est.e_step_iters.unwrap_or(base.e_step_fixed_point_iters),
        e_step_tol: est.e_step_tol.unwrap_or(base.e_step_tol),
        init_strategy: est
            .init
            .as_deref()
            .map(str::parse::<InitStrategy>)
            .transpose()?
            .unwrap_or_default(),
        seed,
        harmonize_labels: !est.no_harmonize.unwrap_or(false),
    };
    config.validate()?;
    Ok(config)
}

/// Aligns a fit to the truth and returns the aligned estimate with the
/// permutation relating it to the raw best restart.
fn aligned_to_truth(
    result: &FitResult,
    truth: &ModelParams,
) -> Result<(ModelParams, LabelPermutation)> {
    let (aligned, sigma) = align_labels(&result.params_hat, Some(truth))?;
    Ok((aligned, result.alignment.compose(&sigma)))
}

fn simulate(global: &GlobalArgs, a: &SimulateArgs) -> Result<Outcome> {
    let (_, mut params) = require_model(&a.model)?;
    if let Some(t) = a.time_points {
        params = params.truncated(t)?;
    }
    let n = a.n.unwrap_or(150);
    let replicates = a.replicates.unwrap_or(1);
    let include_latent = !a.no_latent.unwrap_or(false);
    let files: Vec<String> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let sim = sample_network(&params, n, derive_seed(global.seed(), r as u64))?;
            Ok(serde_json::to_string(&sim.to_file(include_latent))? + "\n")
        })
        .collect::<Result<_>>()?;
    let dir = global.out_dir();
    for (r, contents) in files.iter().enumerate() {
        let path = write_output(&dir, &format!("sim_{:03}.json", r + 1), contents)?;
        println!("{}", path.display());
    }
    Ok(Outcome::Success)
}

fn fit_command(global: &GlobalArgs, a: &FitArgs) -> Result<Outcome> {
    let input = a
        .input
        .as_ref()
        .ok_or_else(|| anyhow!("--input is required"))?;
    let text =
        fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let file: NetworkFile = serde_json::from_str(&text)
        .with_context(|| format!("malformed network file {}", input.display()))?;
    let network = file.network()?;
    let truth = load_model(&a.truth)?.map(|(_, p)| p);
    let default_homogeneous = truth.as_ref().is_none_or(|t| t.is_homogeneous());
    let config = fit_config(
        &a.estimation,
        truth.as_ref().map(|t| t.n_states()),
        default_homogeneous,
        global.seed(),
    )?;
    let result = fit(&network, &config)?;
    let (estimate, sigma) = match &truth {
        Some(t) => aligned_to_truth(&result, t)?,
        None => (result.params_hat.clone(), result.alignment.clone()),
    };
    let dir = global.out_dir();
    write_output(&dir, "fit.json", &pretty(&result)?)?;
    let rows = estimate_rows(1, &estimate, truth.as_ref(), &sigma);
    write_output(&dir, "estimates.csv", &estimates_csv(&rows))?;
    println!(
        "elbo {:.6}  iterations {}  converged {}  best restart {} of {}  permutation {}",
        result.elbo,
        result.n_iterations,
        result.converged,
        result.best_restart + 1,
        result.n_restarts,
        sigma
    );
    if !result.empty_cells.is_empty() {
        warn!(
            "{} parameter cells had no responsibility mass and were set to uniform",
            result.empty_cells.len()
        );
    }
    Ok(Outcome::Success)
}

fn rank_table(global: &GlobalArgs, a: &RankTableArgs) -> Result<Outcome> {
    let (q_min, q_max) = (a.q_min.unwrap_or(2), a.q_max.unwrap_or(5));
    let (k_min, k_max) = (a.kappa_min.unwrap_or(2), a.kappa_max.unwrap_or(10));
    if q_min < 1 || q_min > q_max || k_min < 2 || k_min > k_max {
        bail!("empty or invalid grid: Q in {q_min}..={q_max}, kappa in {k_min}..={k_max}");
    }
    let base = RankSearchConfig::default();
    let config = RankSearchConfig {
        n_trials: a.trials.unwrap_or(base.n_trials),
        m_max: a.m_max.unwrap_or(base.m_max),
        rel_tol: a.rel_tol.unwrap_or(base.rel_tol),
        seed: global.seed(),
        ..base
    };
    let mut cells: Vec<(usize, usize)> = (q_min..=q_max)
        .flat_map(|q| (k_min..=k_max).map(move |k| (q, k)))
        .collect();
    for &c in a.cells.iter().flatten() {
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    let mut found = BTreeMap::new();
    for &(q, k) in &cells {
        let m = minimal_m_search_with(q, k, &config)?;
        info!("Q = {q}, kappa = {k}: {m:?}");
        found.insert((q, k), m);
    }
    let show = |m: Option<usize>| m.map_or_else(|| "--".to_string(), |m| m.to_string());
    let mut csv = String::from("Q,kappa,minimal_m,trials,rel_tol\n");
    for &(q, k) in &cells {
        csv.push_str(&format!(
            "{q},{k},{},{},{}\n",
            show(found[&(q, k)]),
            config.n_trials,
            config.rel_tol
        ));
    }
    write_output(&global.out_dir(), "rank_table.csv", &csv)?;
    print!("Q\\kappa");
    for k in k_min..=k_max {
        print!("{k:>4}");
    }
    println!();
    for q in q_min..=q_max {
        print!("{q:<7}");
        for k in k_min..=k_max {
            print!("{:>4}", show(found[&(q, k)]));
        }
        println!();
    }
    for &(q, k) in &cells[(q_max - q_min + 1) * (k_max - k_min + 1)..] {
        println!("Q = {q}, kappa = {k}: {}", show(found[&(q, k)]));
    }
    Ok(Outcome::Success)
}

fn parse_theorem(name: &str) -> Result<Option<Theorem>> {
    if name == "any" {
        return Ok(None);
    }
    Theorem::ALL
        .into_iter()
        .find(|t| t.key() == name)
        .map(Some)
        .ok_or_else(|| anyhow!("unknown theorem `{name}` (expected any, t1, t2, t3 or corollary)"))
}

fn identify(global: &GlobalArgs, a: &IdentifyArgs) -> Result<Outcome> {
    let (_, params) = require_model(&a.model)?;
    let n = a.n.ok_or_else(|| anyhow!("--n is required"))?;
    let theorem = parse_theorem(a.theorem.as_deref().unwrap_or("any"))?;
    let report = check_conditions(&params, n, a.m.unwrap_or(3));
    write_output(&global.out_dir(), "identify_report.json", &pretty(&report)?)?;
    print!("{report}");
    let ok = match theorem {
        None => report.any_satisfied(),
        Some(t) => report.satisfied(t),
    };
    Ok(if ok {
        Outcome::Success
    } else {
        Outcome::VerdictFailed
    })
}

#[derive(Serialize)]
struct ReplicateSummary {
    replicate: usize,
    seed: u64,
    elbo: f64,
    converged: bool,
    n_iterations: usize,
    best_restart: usize,
    max_elbo_decrease: f64,
    empty_cells: usize,
    /// 1-based image of each aligned state in the raw best restart.
    permutation: Vec<usize>,
}

#[derive(Serialize)]
struct EntrySummary {
    #[serde(flatten)]
    key: EntryKey,
    truth: Option<f64>,
    estimates: Vec<f64>,
    quartiles: Quartiles,
    median_abs_error: Option<f64>,
}

#[derive(Serialize)]
struct ExperimentSummary {
    model: String,
    n: usize,
    n_replicates: usize,
    seed: u64,
    fit: FitConfig,
    replicates: Vec<ReplicateSummary>,
    entries: Vec<EntrySummary>,
    /// Largest per-entry median absolute error in each group.
    worst_median_abs_error: BTreeMap<String, f64>,
}

fn experiment(global: &GlobalArgs, a: &ExperimentArgs) -> Result<Outcome> {
    let started = Instant::now();
    let (name, truth) = require_model(&a.model)?;
    let n = a.n.unwrap_or(150);
    let n_replicates = a.replicates.unwrap_or(10);
    if n < 2 || n_replicates == 0 {
        bail!("need n >= 2 and at least one replicate");
    }
    let base = fit_config(
        &a.estimation,
        Some(truth.n_states()),
        truth.is_homogeneous(),
        global.seed(),
    )?;
    if base.n_states != truth.n_states() {
        bail!(
            "alignment to the truth needs Q = {}, got {}",
            truth.n_states(),
            base.n_states
        );
    }
    let outcomes: Vec<(ReplicateSummary, Vec<EstimateRow>)> = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let sim_seed = derive_seed(global.seed(), 2 * r as u64);
            let sim = sample_network(&truth, n, sim_seed)?;
            let config = FitConfig {
                seed: derive_seed(global.seed(), 2 * r as u64 + 1),
                ..base.clone()
            };
            let result = fit(&sim.network, &config)?;
            let (estimate, sigma) = aligned_to_truth(&result, &truth)?;
            info!("replicate {} done, elbo {:.4}", r + 1, result.elbo);
            let summary = ReplicateSummary {
                replicate: r + 1,
                seed: sim_seed,
                elbo: result.elbo,
                converged: result.converged,
                n_iterations: result.n_iterations,
                best_restart: result.best_restart + 1,
                max_elbo_decrease: result.max_elbo_decrease(),
                empty_cells: result.empty_cells.len(),
                permutation: sigma.images().iter().map(|s| s + 1).collect(),
            };
            Ok((
                summary,
                estimate_rows(r + 1, &estimate, Some(&truth), &sigma),
            ))
        })
        .collect::<Result<_>>()?;

    let all_rows: Vec<EstimateRow> = outcomes
        .iter()
        .flat_map(|(_, rows)| rows.iter().cloned())
        .collect();
    let mut entries: Vec<EntrySummary> = Vec::new();
    for row in outcomes[0].1.iter().filter(|r| r.key.group != "sigma") {
        let estimates: Vec<f64> = outcomes
            .iter()
            .map(|(_, rows)| {
                rows.iter()
                    .find(|x| x.key == row.key)
                    .map_or(f64::NAN, |x| x.estimate)
            })
            .collect();
        let median_abs_error = row
            .truth
            .map(|t| median(&estimates.iter().map(|e| (e - t).abs()).collect::<Vec<_>>()));
        entries.push(EntrySummary {
            key: row.key.clone(),
            truth: row.truth,
            quartiles: Quartiles::of(&estimates).expect("at least one replicate"),
            estimates,
            median_abs_error,
        });
    }
    let mut worst = BTreeMap::new();
    for e in &entries {
        if let Some(err) = e.median_abs_error {
            let w = worst.entry(e.key.group.clone()).or_insert(0.0_f64);
            *w = w.max(err);
        }
    }

    let dir = global.out_dir();
    write_output(&dir, "estimates.csv", &estimates_csv(&all_rows))?;
    let mut panels: Vec<(String, Vec<BoxSeries>)> = Vec::new();
    for e in &entries {
        let panel = e.key.panel();
        let series = BoxSeries {
            label: e.key.label(),
            values: e.estimates.clone(),
            truth: e.truth,
        };
        match panels.iter_mut().find(|(p, _)| *p == panel) {
            Some((_, s)) => s.push(series),
            None => panels.push((panel, vec![series])),
        }
    }
    for (panel, series) in &panels {
        write_output(
            &dir,
            &format!("boxplot_{panel}.svg"),
            &boxplot_svg(panel, series),
        )?;
    }
    let n_converged = outcomes.iter().filter(|(s, _)| s.converged).count();
    let summary = ExperimentSummary {
        model: name,
        n,
        n_replicates,
        seed: global.seed(),
        fit: base,
        replicates: outcomes.into_iter().map(|(s, _)| s).collect(),
        entries,
        worst_median_abs_error: worst.clone(),
    };
    write_output(&dir, "summary.json", &pretty(&summary)?)?;
    println!("{n_converged} of {n_replicates} replicates converged");
    for (group, w) in &worst {
        println!("{group}: largest median absolute error {w:.4}");
    }
    println!("elapsed {:.1} s", started.elapsed().as_secs_f64());
    Ok(Outcome::Success)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Applies one random row order to the conditional matrix and the row
/// probabilities alike.
fn shuffled_rows(
    c: &ConditionalMatrix,
    lambda: &[f64],
    seed: u64,
) -> Result<(ConditionalMatrix, Vec<f64>)> {
    let data = c.data();
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let shuffled = DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| data[(order[i], j)]);
    let lambda = order.iter().map(|&r| lambda[r]).collect();
    Ok((
        ConditionalMatrix::from_rows(c.m(), c.n_states(), c.kappa(), shuffled)?,
        lambda,
    ))
}

fn recover_demo(global: &GlobalArgs, a: &RecoverArgs) -> Result<Outcome> {
    let (name, params) = require_model(&a.model)?;
    let method = a
        .method
        .as_deref()
        .ok_or_else(|| anyhow!("--method is required (phi, hmm or static)"))?;
    let m = a.m.unwrap_or(3);
    let to_internal = |t0: usize| t0.checked_sub(1).ok_or_else(|| anyhow!("--t0 is 1-based"));
    let (error, permutation, recovered) = match method {
        "phi" => {
            let t0 = to_internal(a.t0.unwrap_or(1))?;
            if t0 + 1 >= params.n_times() {
                bail!(
                    "--t0 must leave a following time point (T = {})",
                    params.n_times()
                );
            }
            let joint = joint_consecutive_edge_distribution(&params, t0)?;
            let pi = params.marginal_state_law(t0);
            let rec = recover_transitions_via_phi(
                &joint,
                params.edge_probs(t0),
                params.edge_probs(t0 + 1),
                &pi,
            )?;
            let err = max_abs_diff(&rec.rho, params.transition(t0 + 1));
            let out = json!({"target_time": t0 + 2, "rho": matrix_rows(&rec.rho), "residual": rec.residual});
            (err, LabelPermutation::identity(params.n_states()), out)
        }
        "hmm" => {
            let t0 = to_internal(a.t0.unwrap_or(2))?;
            let rec = recover_transitions_via_hmm(&params, m, t0)?;
            let err = max_abs_diff(&rec.rho, params.transition(rec.target_time));
            let out = json!({
                "target_time": rec.target_time + 1,
                "rho": matrix_rows(&rec.rho),
                "kron_error": rec.kron_error,
                "rank": rec.rank,
            });
            (err, LabelPermutation::identity(params.n_states()), out)
        }
        "static" => {
            let (c, lambda) = shuffled_rows(
                &build_conditional_matrix(params.edge_probs(0), m)?,
                &assignment_probabilities(params.pi(), m),
                global.seed(),
            )?;
            let rec = recover_static_params(&c, &lambda, DEFAULT_MATCH_TOL)?;
            let (sigma, err) = rec.align_to(params.pi(), params.edge_probs(0));
            let laws: Vec<Value> = pairs(params.n_states())
                .into_iter()
                .map(|(q, l)| json!({"q": q + 1, "l": l + 1, "law": rec.edge_probs.get(q, l)}))
                .collect();
            let out = json!({"pi": rec.pi, "edge_probs": laws, "min_gap": rec.min_gap});
            (err, sigma, out)
        }
        other => bail!("unknown method `{other}` (expected phi, hmm or static)"),
    };
    let report = json!({
        "model": name,
        "method": method,
        "m": m,
        "max_abs_error": error,
        "permutation": permutation.images().iter().map(|s| s + 1).collect::<Vec<_>>(),
        "recovered": recovered,
    });
    write_output(
        &global.out_dir(),
        &format!("recover_{method}.json"),
        &pretty(&report)?,
    )?;
    println!("{method} recovery on {name}: max abs error {error:.3e}, permutation {permutation}");
    Ok(Outcome::Success)
}
