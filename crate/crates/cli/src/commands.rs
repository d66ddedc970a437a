use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use semiblind::evalkit::{best_threshold, nmse, run_synthetic_kronecker, KroneckerExperiment};
use semiblind::graphmodel::{
    bandlimited_signals, kronecker_expand, laplacian, random_schedule, sample_adjacency, sample_observations,
    sem_synthesize, spectral_radius, svarm_synthesize, ObservationRecord,
};
use semiblind::ident::{
    check_as1, check_as2_with_budget, check_as3_with_budget, noiseless_recovery_oracle_with_budget,
    IdentVerdict, MaskedObservationMatrix, DEFAULT_SUBSET_BUDGET,
};
use semiblind::io::{format_f64, load_matrix};
use semiblind::online::{tracker_init, tracker_step, TrackerConfig};
use semiblind::rng::{seeded, standard_normal, SeededRng};
use semiblind::sem::{jisg, SemConfig};
use semiblind::svarm::{jisgot, SvarmConfig};
use semiblind::{Error, KroneckerSpec, NoiseSpec, ObservationSet, Result, TopologyMatrix};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{require_out, rows, Bundle, Manifest};
use crate::{BatchArgs, Cli, Command, EvalArgs, Experiment, GlobalArgs, IdentArgs, Model, SynthArgs, TrackArgs};

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if g.snapshot_every.is_some() && !matches!(cli.command, Command::Track(_)) {
        return Err(Error::InvalidArgument("--snapshot-every applies to track only".into()));
    }
    if g.snapshot_every == Some(0) {
        return Err(Error::InvalidArgument("--snapshot-every must be positive".into()));
    }
    match &cli.command {
        Command::Synth(a) => synth(g, a),
        Command::Jisg(a) => cmd_jisg(g, a),
        Command::Jisgot(a) => cmd_jisgot(g, a),
        Command::Track(a) => track(g, a),
        Command::Ident(a) => ident(g, a),
        Command::Eval(a) => eval(g, a),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        }
    }
}

fn load_observations(path: &Path) -> Result<ObservationSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// `truth/name` when the truth is a directory, the path itself otherwise.
fn truth_file(truth: &Path, name: &str) -> PathBuf {
    if truth.is_dir() {
        truth.join(name)
    } else {
        truth.to_path_buf()
    }
}

fn truth_signals(truth: &Path) -> Result<Option<DMatrix<f64>>> {
    let path = truth.join("signals.csv");
    if truth.is_dir() && path.exists() {
        Ok(Some(load_matrix(path)?))
    } else {
        Ok(None)
    }
}

fn trace_csv(trace: &[f64]) -> Vec<u8> {
    let mut out = String::from("iteration,objective\n");
    for (k, v) in trace.iter().enumerate() {
        out.push_str(&format!("{k},{}\n", format_f64(*v)));
    }
    out.into_bytes()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthConfig {
    model: Model,
    n: usize,
    slots: usize,
    /// Nodes sampled per slot; all of them when absent.
    samples: Option<usize>,
    bandwidth: usize,
    process_sigma: f64,
    obs_sigma: f64,
    kronecker_seed: Vec<Vec<f64>>,
    /// Spectral radius of `A` (SEM) or `A0` (SVARM).
    radius: f64,
    /// Spectral radius of the SVARM transition `(I - A0)^{-1} A1`.
    transition_radius: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            model: Model::Sem,
            n: 81,
            slots: 100,
            samples: None,
            bandwidth: 10,
            process_sigma: 1.0,
            obs_sigma: 0.0,
            kronecker_seed: rows(&KroneckerSpec::benchmark_seed()),
            radius: 0.5,
            transition_radius: 0.8,
        }
    }
}

fn stream(seed: u64, id: u64) -> SeededRng {
    let mut rng = seeded(seed);
    rng.set_stream(id);
    rng
}

fn kronecker_probabilities(cfg: &SynthConfig) -> Result<DMatrix<f64>> {
    let d = cfg.kronecker_seed.len();
    if d < 2 || cfg.kronecker_seed.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidSpec("kronecker_seed must be a square matrix of size >= 2".into()));
    }
    let seed = DMatrix::from_fn(d, d, |i, j| cfg.kronecker_seed[i][j]);
    let mut order = 0u32;
    let mut size = 1usize;
    while size < cfg.n {
        size = size.saturating_mul(d);
        order += 1;
    }
    if size != cfg.n || order == 0 {
        return Err(Error::InvalidArgument(format!("n = {} is not a power of the seed size {d}", cfg.n)));
    }
    Ok(kronecker_expand(&KroneckerSpec::new(seed, order)?))
}

/// Gaussian weights on a sampled Kronecker support, scaled to `radius`.
fn weighted_graph(prob: &DMatrix<f64>, radius: f64, rng: &mut SeededRng) -> Result<DMatrix<f64>> {
    let support = sample_adjacency(prob, rng)?;
    let w = support.entries().map(|x| if x != 0.0 { standard_normal(rng) } else { 0.0 });
    Ok(scaled(w, radius))
}

fn scaled(m: DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let rho = spectral_radius(&m);
    if rho > 0.0 {
        m * (radius / rho)
    } else {
        m
    }
}

fn synth(g: &GlobalArgs, a: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = load_config(&g.config)?;
    cfg.model = a.model;
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.slots {
        cfg.slots = v;
    }
    if a.samples.is_some() {
        cfg.samples = a.samples;
    }
    if let Some(v) = a.bandwidth {
        cfg.bandwidth = v;
    }
    if let Some(v) = a.process_sigma {
        cfg.process_sigma = v;
    }
    if let Some(v) = a.obs_sigma {
        cfg.obs_sigma = v;
    }
    if !(cfg.radius >= 0.0 && cfg.radius < 1.0 && cfg.transition_radius >= 0.0 && cfg.transition_radius < 1.0) {
        return Err(Error::InvalidConfig("radius and transition_radius must lie in [0, 1)".into()));
    }
    let out = require_out(&g.out)?;
    let seed = g.seed.unwrap_or(0);
    let prob = kronecker_probabilities(&cfg)?;
    let n = cfg.n;
    let noise = NoiseSpec::new(cfg.process_sigma, cfg.obs_sigma, seed)?;
    let mut graph_rng = stream(seed, 1);
    let mut bundle = Bundle::new();

    let signals = match cfg.model {
        Model::Sem => {
            let adj = TopologyMatrix::new(weighted_graph(&prob, cfg.radius, &mut graph_rng)?, true)?;
            bundle.matrix("adjacency.csv", adj.entries())?;
            sem_synthesize(&adj, &noise, cfg.slots)?
        }
        Model::Svarm => {
            let a0 = weighted_graph(&prob, cfg.radius, &mut graph_rng)?;
            let a1 = weighted_graph(&prob, 1.0, &mut graph_rng)?;
            let inv = (DMatrix::identity(n, n) - &a0)
                .try_inverse()
                .ok_or(Error::SingularModel { condition: f64::INFINITY })?;
            let rho = spectral_radius(&(inv * &a1));
            let a1 = if rho > 0.0 { a1 * (cfg.transition_radius / rho) } else { a1 };
            let a0 = TopologyMatrix::new(a0, true)?;
            let a1 = TopologyMatrix::new(a1, false)?;
            bundle.matrix("adjacency.csv", a0.entries())?;
            bundle.matrix("adjacency_lag.csv", a1.entries())?;
            let traj = svarm_synthesize(&a0, &a1, &DVector::zeros(n), &noise, cfg.slots)?;
            traj.columns(1, cfg.slots)?
        }
        Model::Bandlimited => {
            let adj = sample_adjacency(&prob, &mut graph_rng)?;
            bundle.matrix("adjacency.csv", adj.entries())?;
            bandlimited_signals(&laplacian(adj.entries()), cfg.bandwidth, cfg.slots, &mut stream(seed, 4))?
        }
    };
    let schedule = random_schedule(n, cfg.samples.unwrap_or(n), cfg.slots, &mut stream(seed, 2))?;
    let obs = sample_observations(&signals, &schedule, &noise, &mut stream(seed, 3))?;
    bundle.matrix("signals.csv", signals.values())?;
    bundle.json("schedule.json", &schedule)?;
    bundle.json("observations.json", &obs)?;

    let manifest = Manifest::new("synth", Some(seed), &cfg)?;
    bundle.write(out, manifest)
}

fn batch_config(g: &GlobalArgs, a: &BatchArgs, mut cfg: SemConfig) -> Result<SemConfig> {
    a.solver.apply(&mut cfg);
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn topology_metrics(truth: &Path, name: &str, est: &TopologyMatrix) -> Result<(f64, f64)> {
    let adj = load_matrix(truth_file(truth, name))?;
    let (tau, e) = best_threshold(&adj, est.entries())?;
    Ok((e, tau))
}

fn cmd_jisg(g: &GlobalArgs, a: &BatchArgs) -> Result<()> {
    let cfg = batch_config(g, a, load_config(&g.config)?)?;
    let out = require_out(&g.out)?;
    let obs = load_observations(&a.obs)?;
    let truth = match &g.truth {
        Some(t) => Some((load_matrix(truth_file(t, "adjacency.csv"))?, truth_signals(t)?)),
        None => None,
    };

    let fit = jisg(&obs, &cfg)?;
    let mut bundle = Bundle::new();
    bundle.matrix("adjacency.csv", fit.adjacency.entries())?;
    bundle.matrix("signals.csv", fit.signals.values())?;
    bundle.bytes("trace.csv", trace_csv(&fit.objective_trace));
    if let Some((adj, signals)) = &truth {
        let (tau, e) = best_threshold(adj, fit.adjacency.entries())?;
        let mut metrics = json!({ "eier": e, "threshold": tau });
        if let Some(s) = signals {
            metrics["nmse"] = json!(nmse(s, fit.signals.values())?);
        }
        bundle.json("metrics.json", &metrics)?;
    }

    let mut manifest = Manifest::new("jisg", g.seed, &cfg)?;
    manifest.input("obs", &a.obs);
    if let Some(t) = &g.truth {
        manifest.input("truth", t);
    }
    manifest.result = json!({
        "converged": fit.converged,
        "iterations": fit.iterations,
        "admm_converged": fit.admm_converged,
        "objective": fit.objective_trace.last(),
    });
    bundle.write(out, manifest)
}

fn cmd_jisgot(g: &GlobalArgs, a: &BatchArgs) -> Result<()> {
    let mut cfg: SvarmConfig = load_config(&g.config)?;
    cfg.sem = batch_config(g, a, cfg.sem)?;
    cfg.validate()?;
    let out = require_out(&g.out)?;
    let obs = load_observations(&a.obs)?;
    if let Some(t) = &g.truth {
        // Parse the truth before solving so a bad path fails fast.
        load_matrix(truth_file(t, "adjacency.csv"))?;
        if t.is_dir() {
            load_matrix(t.join("adjacency_lag.csv"))?;
        }
        truth_signals(t)?;
    }

    let fit = jisgot(&obs, &cfg)?;
    let horizon = obs.num_slots();
    let mut bundle = Bundle::new();
    bundle.matrix("adjacency.csv", fit.a0.entries())?;
    bundle.matrix("adjacency_lag.csv", fit.a1.entries())?;
    bundle.matrix("signals.csv", &fit.signals.values().columns(1, horizon).into_owned())?;
    bundle.matrix("initial_state.csv", &fit.signals.values().columns(0, 1).into_owned())?;
    bundle.bytes("trace.csv", trace_csv(&fit.objective_trace));
    if let Some(t) = &g.truth {
        let (e, tau) = topology_metrics(t, "adjacency.csv", &fit.a0)?;
        let mut metrics = json!({ "eier": e, "threshold": tau });
        if t.is_dir() {
            let (e1, tau1) = topology_metrics(t, "adjacency_lag.csv", &fit.a1)?;
            metrics["eier_lag"] = json!(e1);
            metrics["threshold_lag"] = json!(tau1);
        }
        if let Some(s) = truth_signals(t)? {
            metrics["nmse"] = json!(nmse(&s, &fit.signals.values().columns(1, horizon).into_owned())?);
        }
        bundle.json("metrics.json", &metrics)?;
    }

    let mut manifest = Manifest::new("jisgot", g.seed, &cfg)?;
    manifest.input("obs", &a.obs);
    if let Some(t) = &g.truth {
        manifest.input("truth", t);
    }
    manifest.result = json!({
        "converged": fit.converged,
        "iterations": fit.iterations,
        "admm_converged": fit.admm_converged,
        "guard_activations": fit.guard_activations,
        "objective": fit.objective_trace.last(),
    });
    bundle.write(out, manifest)
}

fn parse_record(line: &str, n: usize, expected_t: usize) -> Result<(Vec<usize>, DVector<f64>)> {
    let rec: ObservationRecord = serde_json::from_str(line).map_err(|e| Error::Parse(format!("slot {expected_t}: {e}")))?;
    if rec.t != expected_t {
        return Err(Error::Parse(format!("expected slot {expected_t}, got {}", rec.t)));
    }
    let set = ObservationSet::from_records(n, vec![rec])?;
    Ok((set.indices(0).to_vec(), set.values(0).clone()))
}

fn track(g: &GlobalArgs, a: &TrackArgs) -> Result<()> {
    let mut cfg: TrackerConfig = load_config(&g.config)?;
    a.solver.apply(&mut cfg.svarm.sem);
    if let Some(v) = a.lag {
        cfg.lag = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    if let Some(v) = a.max_bcd {
        cfg.max_bcd = v;
    }
    if let Some(s) = g.seed {
        cfg.svarm.sem.seed = s;
    }
    cfg.validate()?;
    if g.snapshot_every.is_some() && g.out.is_none() {
        return Err(Error::InvalidArgument("--snapshot-every needs --out".into()));
    }
    let z0 = cfg.svarm.initial_state(a.n)?;
    let mut state = tracker_init(&z0, &cfg)?;
    let mut bundle = Bundle::new();
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut writer = stdout.lock();
    let mut slots = 0usize;
    let mut last = None;
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (idx, y) = parse_record(&line, a.n, slots + 1)?;
        let step = tracker_step(&mut state, &cfg, &idx, &y)?;
        slots += 1;
        let record = json!({
            "t": step.time,
            "warm_up": step.warm_up,
            "converged": step.converged,
            "signal": step.latest().as_slice(),
            "delayed_t": step.window_start,
            "delayed": step.delayed().as_slice(),
            "a0": rows(step.a0.entries()),
            "a1": rows(step.a1.entries()),
        });
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if let Some(k) = g.snapshot_every {
            if slots % k == 0 {
                bundle.matrix(&format!("snapshots/adjacency_t{slots:06}.csv"), step.a0.entries())?;
                bundle.matrix(&format!("snapshots/adjacency_lag_t{slots:06}.csv"), step.a1.entries())?;
            }
        }
        last = Some(step);
    }
    if let Some(out) = &g.out {
        if let Some(step) = &last {
            bundle.matrix("adjacency.csv", step.a0.entries())?;
            bundle.matrix("adjacency_lag.csv", step.a1.entries())?;
        }
        let mut manifest = Manifest::new("track", g.seed, &cfg)?;
        manifest.inputs = json!({ "stdin": true, "n": a.n });
        manifest.result = json!({ "slots": slots, "snapshot_every": g.snapshot_every });
        bundle.write(out, manifest)?;
    }
    Ok(())
}

fn ident(g: &GlobalArgs, a: &IdentArgs) -> Result<()> {
    let out = require_out(&g.out)?;
    let obs = load_observations(&a.obs)?;
    let truth = match &g.truth {
        Some(t) => Some(TopologyMatrix::new(load_matrix(truth_file(t, "adjacency.csv"))?, false)?),
        None => None,
    };
    let budget = a.budget.unwrap_or(DEFAULT_SUBSET_BUDGET);
    let masked = MaskedObservationMatrix::from_observations(&obs)?;
    let as2 = check_as2_with_budget(&masked, a.sparsity, budget)?;
    let as3 = check_as3_with_budget(&masked, a.sparsity, budget)?;
    let as1 = truth.as_ref().map(|t| check_as1(t, a.sparsity));
    let recovered = if a.recover {
        Some(noiseless_recovery_oracle_with_budget(&masked, a.sparsity, budget)?)
    } else {
        None
    };

    let mut bundle = Bundle::new();
    let verdict = json!({
        "sparsity": a.sparsity,
        "as1": as1,
        "as2": one_based(&as2),
        "as3": one_based(&as3),
    });
    bundle.json("verdict.json", &verdict)?;
    if let Some(adj) = &recovered {
        bundle.matrix("adjacency.csv", adj.entries())?;
    }
    let config = json!({ "sparsity": a.sparsity, "budget": budget, "recover": a.recover });
    let mut manifest = Manifest::new("ident", g.seed, config)?;
    manifest.input("obs", &a.obs);
    if let Some(t) = &g.truth {
        manifest.input("truth", t);
    }
    manifest.result = json!({ "as2": as2.satisfied, "as3": as3.satisfied });
    bundle.write(out, manifest)
}

/// Verdict with one-based slot and node indices, matching the other files.
fn one_based(v: &IdentVerdict) -> serde_json::Value {
    let shift = |xs: &[usize]| xs.iter().map(|x| x + 1).collect::<Vec<_>>();
    json!({
        "satisfied": v.satisfied,
        "columns": shift(&v.columns),
        "rows": v.rows.as_deref().map(shift),
        "kruskal_value": v.kruskal_value,
    })
}

fn eval(g: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let out = require_out(&g.out)?;
    match (&a.experiment, &a.estimate) {
        (Some(Experiment::Kronecker), _) => eval_kronecker(g, a, out),
        (None, Some(est)) => eval_files(g, a, est, out),
        (None, None) => Err(Error::InvalidArgument("eval needs --estimate or --experiment".into())),
    }
}

fn eval_files(g: &GlobalArgs, a: &EvalArgs, est_path: &Path, out: &Path) -> Result<()> {
    let truth = g.truth.as_ref().ok_or_else(|| Error::InvalidArgument("--estimate needs --truth".into()))?;
    let adj_true = load_matrix(truth_file(truth, "adjacency.csv"))?;
    let adj_est = load_matrix(est_path)?;
    let signals = match &a.signals {
        Some(p) => {
            let s_true = truth_signals(truth)?
                .ok_or_else(|| Error::InvalidArgument("--signals needs a --truth directory with signals.csv".into()))?;
            Some((s_true, load_matrix(p)?))
        }
        None => None,
    };
    let (tau, e) = best_threshold(&adj_true, &adj_est)?;
    let mut report = format!("metric,value\neier,{}\nthreshold,{}\n", format_f64(e), format_f64(tau));
    if let Some((s_true, s_est)) = &signals {
        report.push_str(&format!("nmse,{}\n", format_f64(nmse(s_true, s_est)?)));
    }
    let mut bundle = Bundle::new();
    bundle.bytes("report.csv", report.into_bytes());
    let mut manifest = Manifest::new("eval", g.seed, json!({ "mode": "files" }))?;
    manifest.input("estimate", est_path);
    manifest.input("truth", truth);
    if let Some(p) = &a.signals {
        manifest.input("signals", p);
    }
    bundle.write(out, manifest)
}

fn eval_kronecker(g: &GlobalArgs, a: &EvalArgs, out: &Path) -> Result<()> {
    let mut cfg: KroneckerExperiment = load_config(&g.config)?;
    if g.seed.is_some() || a.replicates.is_some() {
        let start = g.seed.unwrap_or(0);
        let count = a.replicates.unwrap_or(cfg.seeds.len()) as u64;
        cfg.seeds = (start..start + count).collect();
    }
    let mut report = run_synthetic_kronecker(&cfg)?;
    if a.no_timing {
        report.records.iter_mut().for_each(|r| r.runtime_seconds = 0.0);
    }
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;

    let mut medians = Vec::new();
    let groups = [("jisg", &cfg.sample_sizes), ("bl", &cfg.sample_sizes), ("jisg-topology", &cfg.topology_sample_sizes)];
    for (method, sizes) in groups {
        for &m in sizes {
            medians.push(json!({
                "method": method,
                "m": m,
                "nmse": report.median(method, m, |r| r.nmse),
                "eier": report.median(method, m, |r| r.eier_percent),
            }));
        }
    }
    let n = KroneckerSpec::new(KroneckerSpec::benchmark_seed(), cfg.order)?.nodes();
    medians.push(json!({ "method": "en-sem", "m": n, "eier": report.median("en-sem", n, |r| r.eier_percent) }));

    let mut bundle = Bundle::new();
    bundle.bytes("report.csv", csv);
    bundle.json("summary.json", &json!({ "medians": medians }))?;
    let mut manifest = Manifest::new("eval", g.seed, &cfg)?;
    manifest.result = json!({ "experiment": "kronecker", "no_timing": a.no_timing, "records": report.records.len() });
    bundle.write(out, manifest)
}
