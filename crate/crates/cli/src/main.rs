//! Batch command-line front end: dataset generation, training, evaluation,
//! ablation sweeps, and topology-reconstruction export.

mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use deepnt_core::eval::{
    accuracy, baseline_mlp, baseline_nmf, export_reconstruction, f1, mape, mse, run_experiment,
    topology_f1, ExperimentConfig, GraphSource, Method, RESULTS_CSV_HEADER,
};
use deepnt_core::graph::{BinaryMatrix, DenseAdjacency};
use deepnt_core::learn::{history_to_csv, train, TrainedModel};
use deepnt_core::sim::{
    all_pairs_ground_truth, assign_edge_metrics, corrupt_topology, generate_graph,
    sample_observations, EdgeMetricMap, ObservationSet,
};
use deepnt_core::{Error, Result};

use config::{OutFiles, Settings};
use manifest::write_manifest;

#[derive(Parser)]
#[command(name = "deepnt", version, about = "Network tomography lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags mirroring every config key; unset flags fall back to the config
/// file, then to the defaults.
#[derive(Args, Debug, Default)]
struct KeyFlags {
    /// Flat key = value config file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "Delta")]
    corruption: Option<f64>,
    #[arg(long)]
    monitor_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seed list for multi-seed commands.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eta_adj: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    eps_pd: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    path_refresh: Option<usize>,
    #[arg(long)]
    walk_cap: Option<usize>,
    #[arg(long)]
    batch_train: Option<usize>,
    #[arg(long)]
    batch_eval: Option<usize>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    max_hops: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    adaptive: Option<bool>,
    #[arg(long)]
    init_adj_zero: Option<bool>,
    #[arg(long)]
    path_mode: Option<String>,
    #[arg(long)]
    nmf_rank: Option<usize>,
    #[arg(long)]
    nmf_iters: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    mlp_eta: Option<f64>,
    #[arg(long)]
    block: Option<usize>,
    #[arg(long)]
    record_timing: Option<bool>,
    #[arg(long)]
    threads: Option<usize>,
}

impl KeyFlags {
    fn resolve(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        macro_rules! over {
            ($field:ident, $key:literal) => {
                if let Some(v) = &self.$field {
                    s.set($key, &v.to_string())?;
                }
            };
        }
        over!(model, "model");
        over!(n, "n");
        over!(p, "p");
        over!(k, "k");
        over!(beta, "beta");
        over!(m, "m");
        over!(kind, "kind");
        over!(delta, "delta");
        over!(corruption, "Delta");
        over!(monitor_fraction, "monitor_fraction");
        over!(seed, "seed");
        over!(seeds, "seeds");
        over!(method, "method");
        over!(omega, "omega");
        over!(eta, "eta");
        over!(eta_adj, "eta_adj");
        over!(alpha, "alpha");
        over!(gamma, "gamma");
        over!(max_epochs, "max_epochs");
        over!(patience, "patience");
        over!(eps_pd, "eps_pd");
        over!(tau, "tau");
        over!(path_refresh, "path_refresh");
        over!(walk_cap, "walk_cap");
        over!(batch_train, "batch_train");
        over!(batch_eval, "batch_eval");
        over!(n_paths, "n_paths");
        over!(max_hops, "max_hops");
        over!(hidden, "hidden");
        over!(feature_dim, "feature_dim");
        over!(adaptive, "adaptive");
        over!(init_adj_zero, "init_adj_zero");
        over!(path_mode, "path_mode");
        over!(nmf_rank, "nmf_rank");
        over!(nmf_iters, "nmf_iters");
        over!(mlp_hidden, "mlp_hidden");
        over!(mlp_eta, "mlp_eta");
        over!(block, "block");
        over!(record_timing, "record_timing");
        over!(threads, "threads");
        Ok(s)
    }
}

#[derive(Args)]
struct GenerateCmd {
    #[command(flatten)]
    keys: KeyFlags,
    /// Output directory for the dataset files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    keys: KeyFlags,
    /// Directory holding graph.edges / metrics.txt / observed.edges /
    /// observations.csv (as written by `generate`).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    keys: KeyFlags,
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Also score the mean/nmf/mlp baselines on the same split.
    #[arg(long, default_value_t = false)]
    with_baselines: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AblateCmd {
    #[command(flatten)]
    keys: KeyFlags,
    /// Grid spec like `delta=0.1,0.2,0.3` or `delta=0.1,0.2;Delta=0.0,0.2`.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructCmd {
    #[command(flatten)]
    keys: KeyFlags,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: graph, edge metrics, corrupted
    /// topology, observation splits.
    Generate(GenerateCmd),
    /// Train a model on a generated dataset; writes checkpoint and history.
    Train(TrainCmd),
    /// Evaluate a checkpoint on a dataset's test split; writes results CSV.
    Eval(EvalCmd),
    /// Run the deepnt/deepnt_alpha/deepnt_gamma sweep over a delta grid.
    Ablate(AblateCmd),
    /// Export block-pooled heatmaps of true/observed/learned adjacency.
    Reconstruct(ReconstructCmd),
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Input(_) => 2,
        Error::Io(_)
        | Error::Parse(_)
        | Error::Generation(_)
        | Error::Simulation(_)
        | Error::Sampling(_) => 3,
        Error::Numeric(_) | Error::Metric(_) | Error::Contract(_) => 4,
    }
}

fn init_threads(threads: usize) {
    if threads >= 1 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn load_dataset(
    dir: &Path,
) -> Result<(DenseAdjacency, EdgeMetricMap, DenseAdjacency, ObservationSet)> {
    let files = OutFiles::new(dir);
    let graph = DenseAdjacency::read_edge_list(&files.graph())?;
    let metrics = EdgeMetricMap::read_metric_file(&files.metrics(), &graph)?;
    let observed = DenseAdjacency::read_edge_list(&files.observed())?;
    let observations = ObservationSet::read_csv(&files.observations())?;
    Ok((graph, metrics, observed, observations))
}

fn cmd_generate(cmd: GenerateCmd) -> Result<()> {
    let settings = cmd.keys.resolve()?;
    init_threads(settings.threads);
    let model = settings.graph_model()?;
    let kind = settings.metric_kind()?;
    std::fs::create_dir_all(&cmd.out)?;
    let files = OutFiles::new(&cmd.out);
    write_manifest(&files.manifest(), "generate", &settings, &[], &cmd.out)?;

    let graph = generate_graph(model, settings.n, settings.seed)?;
    let metrics = assign_edge_metrics(&graph, kind, settings.seed)?;
    let gt = all_pairs_ground_truth(&graph, &metrics, kind);
    let corrupted = corrupt_topology(&graph, settings.corruption, settings.seed)?;
    let obs =
        sample_observations(&gt, settings.delta, settings.monitor_fraction, settings.seed)?;

    graph.write_edge_list(&files.graph())?;
    metrics.write_metric_file(&graph, &files.metrics())?;
    corrupted.a_obs.write_edge_list(&files.observed())?;
    obs.write_csv(&files.observations())?;
    println!(
        "generated {} nodes, {} edges, {} train / {} validation / {} test pairs -> {}",
        graph.n(),
        graph.edge_count(),
        obs.train.len(),
        obs.validation.len(),
        obs.test.len(),
        cmd.out.display()
    );
    Ok(())
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let settings = cmd.keys.resolve()?;
    init_threads(settings.threads);
    let method = settings.method_enum()?;
    if !method.is_deepnt() {
        return Err(Error::Config(format!(
            "train expects a deepnt-family method, got {}",
            method.name()
        )));
    }
    let kind = settings.metric_kind()?;
    let optim = settings.optim()?;
    let optim = match method {
        Method::DeepntAlpha => {
            deepnt_core::learn::OptimConfig { alpha: 1e-4, gamma: 0.0, ..optim }
        }
        Method::DeepntGamma => {
            deepnt_core::learn::OptimConfig { gamma: 1.0, alpha: 0.0, ..optim }
        }
        _ => optim,
    };
    let (_graph, _metrics, observed, observations) = load_dataset(&cmd.data)?;
    std::fs::create_dir_all(&cmd.out)?;
    let out = OutFiles::new(&cmd.out);
    let data = OutFiles::new(&cmd.data);
    write_manifest(
        &out.manifest(),
        "train",
        &settings,
        &[&data.graph(), &data.metrics(), &data.observed(), &data.observations()],
        &cmd.out,
    )?;

    let mask = BinaryMatrix::from_support(&observed, 0.0);
    let outcome = train(&observations, &observed, &mask, kind, &optim, settings.seed)?;
    outcome.model.save(&out.checkpoint())?;
    std::fs::write(out.history(), history_to_csv(&outcome.history))?;
    let learned = DenseAdjacency::new(outcome.model.adj.clone(), false)?;
    learned.write_edge_list(&out.learned_edges())?;
    std::fs::write(out.learned_dense(), deepnt_core::eval::dense_csv(&outcome.model.adj))?;
    let last = outcome.history.last().expect("nonempty history");
    println!(
        "trained {} epochs, objective {:.6}, val loss {:.6} -> {}",
        last.epoch,
        last.objective,
        last.val_loss,
        cmd.out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn result_row(
    method: &str,
    settings: &Settings,
    n: usize,
    seed_label: &str,
    preds: &[f64],
    truths: &[f64],
    topo: (f64, f64, f64),
    seconds: f64,
    regression: bool,
) -> Result<String> {
    let (acc_v, f1_v) =
        if regression { (0.0, 0.0) } else { (accuracy(preds, truths), f1(preds, truths)) };
    Ok(format!(
        "{method},{},{n},{},{},{seed_label},{},{},{},{},{},{},{},{}\n",
        settings.kind,
        settings.delta,
        settings.corruption,
        mape(preds, truths)?,
        mse(preds, truths),
        acc_v,
        f1_v,
        topo.0,
        topo.1,
        topo.2,
        seconds
    ))
}

fn cmd_eval(cmd: EvalCmd) -> Result<()> {
    let settings = cmd.keys.resolve()?;
    init_threads(settings.threads);
    let model = TrainedModel::load(&cmd.checkpoint)?;
    let (graph, _metrics, observed, observations) = load_dataset(&cmd.data)?;
    std::fs::create_dir_all(&cmd.out)?;
    let out = OutFiles::new(&cmd.out);
    let data = OutFiles::new(&cmd.data);
    write_manifest(
        &out.manifest(),
        "eval",
        &settings,
        &[&cmd.checkpoint, &data.graph(), &data.observed(), &data.observations()],
        &cmd.out,
    )?;

    let test_pairs: Vec<(usize, usize)> =
        observations.test.iter().map(|&(u, v, _)| (u, v)).collect();
    let truths: Vec<f64> = observations.test.iter().map(|&(_, _, y)| y).collect();
    let regression = model.kind.is_regression();
    let seed_label = settings.seed.to_string();

    let mut csv = String::from(RESULTS_CSV_HEADER);
    csv.push('\n');
    let started = Instant::now();
    let preds = model.predict_pairs(&test_pairs)?;
    let secs = if settings.record_timing { started.elapsed().as_secs_f64() } else { 0.0 };
    let topo = topology_f1(&graph, &model.adj, settings.tau);
    csv.push_str(&result_row(
        "deepnt", &settings, graph.n(), &seed_label, &preds, &truths, topo, secs, regression,
    )?);

    if cmd.with_baselines {
        let obs_topo = topology_f1(&graph, observed.weights(), settings.tau);

        let started = Instant::now();
        let m = observations.train.iter().map(|&(_, _, y)| y).sum::<f64>()
            / observations.train.len() as f64;
        let mean_preds = vec![m; test_pairs.len()];
        let secs = if settings.record_timing { started.elapsed().as_secs_f64() } else { 0.0 };
        csv.push_str(&result_row(
            "mean", &settings, graph.n(), &seed_label, &mean_preds, &truths, obs_topo, secs,
            regression,
        )?);

        let started = Instant::now();
        let mut all_obs = observations.train.clone();
        all_obs.extend_from_slice(&observations.validation);
        let nmf = baseline_nmf(
            &all_obs,
            graph.n(),
            settings.nmf_rank,
            settings.nmf_iters,
            settings.seed,
        )?;
        let nmf_preds: Vec<f64> = test_pairs.iter().map(|&(u, v)| nmf.predict(u, v)).collect();
        let secs = if settings.record_timing { started.elapsed().as_secs_f64() } else { 0.0 };
        csv.push_str(&result_row(
            "nmf", &settings, graph.n(), &seed_label, &nmf_preds, &truths, obs_topo, secs,
            regression,
        )?);

        let started = Instant::now();
        let mlp = baseline_mlp(
            &observations.train,
            &observations.validation,
            graph.n(),
            model.kind,
            &settings.mlp(),
            settings.seed,
        )?;
        let mlp_preds: Vec<f64> = test_pairs.iter().map(|&(u, v)| mlp.predict(u, v)).collect();
        let secs = if settings.record_timing { started.elapsed().as_secs_f64() } else { 0.0 };
        csv.push_str(&result_row(
            "mlp", &settings, graph.n(), &seed_label, &mlp_preds, &truths, obs_topo, secs,
            regression,
        )?);
    }
    std::fs::write(out.results(), &csv)?;
    print!("{csv}");
    Ok(())
}

fn parse_grid(spec: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut deltas = vec![];
    let mut corruptions = vec![];
    for part in spec.split(';') {
        let Some((key, values)) = part.split_once('=') else {
            return Err(Error::Config(format!("bad grid spec segment {part:?}")));
        };
        let parsed: Result<Vec<f64>> = values
            .split(',')
            .map(|v| {
                v.trim().parse().map_err(|_| Error::Config(format!("bad grid value {v:?}")))
            })
            .collect();
        match key.trim() {
            "delta" => deltas = parsed?,
            "Delta" => corruptions = parsed?,
            other => return Err(Error::Config(format!("unknown grid key {other:?}"))),
        }
    }
    if deltas.is_empty() {
        return Err(Error::Config("grid needs at least delta=...".into()));
    }
    if corruptions.is_empty() {
        corruptions.push(f64::NAN); // marker: use the configured Delta
    }
    Ok((deltas, corruptions))
}

fn cmd_ablate(cmd: AblateCmd) -> Result<()> {
    let settings = cmd.keys.resolve()?;
    init_threads(settings.threads);
    let (deltas, corruptions) = parse_grid(&cmd.grid)?;
    std::fs::create_dir_all(&cmd.out)?;
    let out = OutFiles::new(&cmd.out);
    write_manifest(&out.manifest(), "ablate", &settings, &[], &cmd.out)?;

    let mut csv = String::from(RESULTS_CSV_HEADER);
    csv.push('\n');
    for &delta in &deltas {
        for &corr in &corruptions {
            let corruption = if corr.is_nan() { settings.corruption } else { corr };
            for method in [Method::Deepnt, Method::DeepntAlpha, Method::DeepntGamma] {
                let cfg = ExperimentConfig {
                    source: GraphSource::Synthetic {
                        model: settings.graph_model()?,
                        n: settings.n,
                    },
                    kind: settings.metric_kind()?,
                    sampling_rate: delta,
                    corruption,
                    monitor_fraction: settings.monitor_fraction,
                    seeds: settings.seeds.clone(),
                    method,
                    optim: settings.optim()?,
                    nmf_rank: settings.nmf_rank,
                    nmf_iters: settings.nmf_iters,
                    mlp: settings.mlp(),
                    topo_tau: settings.tau,
                    record_timing: settings.record_timing,
                };
                let record = run_experiment(&cfg)?;
                // aggregate row only: one line per (method, grid cell)
                let rows = record.to_csv_rows();
                let mean_row = rows
                    .lines()
                    .last()
                    .ok_or_else(|| Error::Contract("empty result rows".into()))?;
                csv.push_str(mean_row);
                csv.push('\n');
            }
        }
    }
    std::fs::write(out.results(), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_reconstruct(cmd: ReconstructCmd) -> Result<()> {
    let settings = cmd.keys.resolve()?;
    init_threads(settings.threads);
    let model = TrainedModel::load(&cmd.checkpoint)?;
    let data = OutFiles::new(&cmd.data);
    let graph = DenseAdjacency::read_edge_list(&data.graph())?;
    let observed = DenseAdjacency::read_edge_list(&data.observed())?;
    std::fs::create_dir_all(&cmd.out)?;
    let out = OutFiles::new(&cmd.out);
    write_manifest(
        &out.manifest(),
        "reconstruct",
        &settings,
        &[&cmd.checkpoint, &data.graph(), &data.observed()],
        &cmd.out,
    )?;
    export_reconstruction(
        graph.weights(),
        observed.weights(),
        &model.adj,
        settings.block,
        &cmd.out,
    )?;
    let (p, r, f) = topology_f1(&graph, &model.adj, settings.tau);
    println!(
        "reconstruction exported to {} (edge precision {p:.3}, recall {r:.3}, f1 {f:.3})",
        cmd.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(cmd) => cmd_generate(cmd),
        Command::Train(cmd) => cmd_train(cmd),
        Command::Eval(cmd) => cmd_eval(cmd),
        Command::Ablate(cmd) => cmd_ablate(cmd),
        Command::Reconstruct(cmd) => cmd_reconstruct(cmd),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
