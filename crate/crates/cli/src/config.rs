//! Flat `key = value` run configuration. Every key is mirrored by a CLI
//! flag; flags override file values; everything else falls back to the
//! built-in defaults, so a written manifest always carries the fully
//! resolved settings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use deepnt_core::eval::{Method, MlpConfig};
use deepnt_core::learn::OptimConfig;
use deepnt_core::paths::PathCost;
use deepnt_core::sim::{GraphModel, MetricKind};
use deepnt_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct Settings {
    pub model: String,
    pub n: usize,
    pub p: f64,
    pub ws_k: usize,
    pub ws_beta: f64,
    pub ba_m: usize,
    pub kind: String,
    pub delta: f64,
    pub corruption: f64,
    pub monitor_fraction: f64,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub method: String,

    pub omega: f64,
    pub eta: f64,
    pub eta_adj: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub eps_pd: f64,
    pub tau: f64,
    pub path_refresh: usize,
    pub walk_cap: usize,
    pub batch_train: usize,
    pub batch_eval: usize,
    pub n_paths: usize,
    pub max_hops: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub adaptive: bool,
    pub init_adj_zero: bool,
    pub path_mode: String,

    pub nmf_rank: usize,
    pub nmf_iters: usize,
    pub mlp_hidden: usize,
    pub mlp_eta: f64,

    pub block: usize,
    pub record_timing: bool,
    pub threads: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let o = OptimConfig::default();
        Self {
            model: "er".into(),
            n: 100,
            p: 0.05,
            ws_k: 4,
            ws_beta: 0.1,
            ba_m: 2,
            kind: "additive".into(),
            delta: 0.3,
            corruption: 0.2,
            monitor_fraction: 0.2,
            seed: 7,
            seeds: vec![1, 2, 3],
            method: "deepnt".into(),
            omega: o.omega,
            eta: o.eta,
            eta_adj: o.eta_adj,
            alpha: o.alpha,
            gamma: o.gamma,
            max_epochs: o.max_epochs,
            patience: o.patience,
            eps_pd: o.eps_pd,
            tau: o.tau,
            path_refresh: o.path_refresh,
            walk_cap: o.walk_cap,
            batch_train: o.batch_train,
            batch_eval: o.batch_eval,
            n_paths: o.n_paths,
            max_hops: o.max_hops,
            hidden: o.hidden,
            feature_dim: o.feature_dim,
            adaptive: o.adaptive,
            init_adj_zero: o.init_adj_zero,
            path_mode: "hops".into(),
            nmf_rank: 16,
            nmf_iters: 300,
            mlp_hidden: 64,
            mlp_eta: 1e-2,
            block: 50,
            record_timing: true,
            threads: 1,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean for {key}: {value:?}"))),
    }
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad seed list entry {s:?}")))
        })
        .collect()
}

impl Settings {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = value.into(),
            "n" => self.n = parse_as(key, value)?,
            "p" => self.p = parse_as(key, value)?,
            "k" => self.ws_k = parse_as(key, value)?,
            "beta" => self.ws_beta = parse_as(key, value)?,
            "m" => self.ba_m = parse_as(key, value)?,
            "kind" => self.kind = value.into(),
            "delta" => self.delta = parse_as(key, value)?,
            "Delta" => self.corruption = parse_as(key, value)?,
            "monitor_fraction" => self.monitor_fraction = parse_as(key, value)?,
            "seed" => self.seed = parse_as(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "method" => self.method = value.into(),
            "omega" => self.omega = parse_as(key, value)?,
            "eta" => self.eta = parse_as(key, value)?,
            "eta_adj" => self.eta_adj = parse_as(key, value)?,
            "alpha" => self.alpha = parse_as(key, value)?,
            "gamma" => self.gamma = parse_as(key, value)?,
            "max_epochs" => self.max_epochs = parse_as(key, value)?,
            "patience" => self.patience = parse_as(key, value)?,
            "eps_pd" => self.eps_pd = parse_as(key, value)?,
            "tau" => self.tau = parse_as(key, value)?,
            "path_refresh" => self.path_refresh = parse_as(key, value)?,
            "walk_cap" => self.walk_cap = parse_as(key, value)?,
            "batch_train" => self.batch_train = parse_as(key, value)?,
            "batch_eval" => self.batch_eval = parse_as(key, value)?,
            "n_paths" => self.n_paths = parse_as(key, value)?,
            "max_hops" => self.max_hops = parse_as(key, value)?,
            "hidden" => self.hidden = parse_as(key, value)?,
            "feature_dim" => self.feature_dim = parse_as(key, value)?,
            "adaptive" => self.adaptive = parse_bool(key, value)?,
            "init_adj_zero" => self.init_adj_zero = parse_bool(key, value)?,
            "path_mode" => self.path_mode = value.into(),
            "nmf_rank" => self.nmf_rank = parse_as(key, value)?,
            "nmf_iters" => self.nmf_iters = parse_as(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse_as(key, value)?,
            "mlp_eta" => self.mlp_eta = parse_as(key, value)?,
            "block" => self.block = parse_as(key, value)?,
            "record_timing" => self.record_timing = parse_bool(key, value)?,
            "threads" => self.threads = parse_as(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Loads `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected key = value, got {line:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// All settings in `key = value` form, sorted, fully resolved.
    pub fn resolved(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("model", self.model.clone());
        map.insert("n", self.n.to_string());
        map.insert("p", self.p.to_string());
        map.insert("k", self.ws_k.to_string());
        map.insert("beta", self.ws_beta.to_string());
        map.insert("m", self.ba_m.to_string());
        map.insert("kind", self.kind.clone());
        map.insert("delta", self.delta.to_string());
        map.insert("Delta", self.corruption.to_string());
        map.insert("monitor_fraction", self.monitor_fraction.to_string());
        map.insert("seed", self.seed.to_string());
        map.insert(
            "seeds",
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        );
        map.insert("method", self.method.clone());
        map.insert("omega", self.omega.to_string());
        map.insert("eta", self.eta.to_string());
        map.insert("eta_adj", self.eta_adj.to_string());
        map.insert("alpha", self.alpha.to_string());
        map.insert("gamma", self.gamma.to_string());
        map.insert("max_epochs", self.max_epochs.to_string());
        map.insert("patience", self.patience.to_string());
        map.insert("eps_pd", self.eps_pd.to_string());
        map.insert("tau", self.tau.to_string());
        map.insert("path_refresh", self.path_refresh.to_string());
        map.insert("walk_cap", self.walk_cap.to_string());
        map.insert("batch_train", self.batch_train.to_string());
        map.insert("batch_eval", self.batch_eval.to_string());
        map.insert("n_paths", self.n_paths.to_string());
        map.insert("max_hops", self.max_hops.to_string());
        map.insert("hidden", self.hidden.to_string());
        map.insert("feature_dim", self.feature_dim.to_string());
        map.insert("adaptive", self.adaptive.to_string());
        map.insert("init_adj_zero", self.init_adj_zero.to_string());
        map.insert("path_mode", self.path_mode.clone());
        map.insert("nmf_rank", self.nmf_rank.to_string());
        map.insert("nmf_iters", self.nmf_iters.to_string());
        map.insert("mlp_hidden", self.mlp_hidden.to_string());
        map.insert("mlp_eta", self.mlp_eta.to_string());
        map.insert("block", self.block.to_string());
        map.insert("record_timing", self.record_timing.to_string());
        map.insert("threads", self.threads.to_string());
        let mut s = String::new();
        for (k, v) in map {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn graph_model(&self) -> Result<GraphModel> {
        match self.model.as_str() {
            "er" => Ok(GraphModel::Er { p: self.p }),
            "ws" => Ok(GraphModel::Ws { k: self.ws_k, beta: self.ws_beta }),
            "ba" => Ok(GraphModel::Ba { m: self.ba_m }),
            other => Err(Error::Config(format!("unknown graph model {other:?}"))),
        }
    }

    pub fn metric_kind(&self) -> Result<MetricKind> {
        MetricKind::from_name(&self.kind)
    }

    pub fn method_enum(&self) -> Result<Method> {
        Method::from_name(&self.method)
    }

    pub fn path_cost(&self) -> Result<PathCost> {
        match self.path_mode.as_str() {
            "hops" => Ok(PathCost::Hops),
            "weight" => Ok(PathCost::InverseWeight),
            other => Err(Error::Config(format!("unknown path mode {other:?}"))),
        }
    }

    pub fn optim(&self) -> Result<OptimConfig> {
        let cfg = OptimConfig {
            omega: self.omega,
            eta: self.eta,
            eta_adj: self.eta_adj,
            alpha: self.alpha,
            gamma: self.gamma,
            max_epochs: self.max_epochs,
            patience: self.patience,
            eps_pd: self.eps_pd,
            tau: self.tau,
            path_refresh: self.path_refresh,
            walk_cap: self.walk_cap,
            batch_train: self.batch_train,
            batch_eval: self.batch_eval,
            n_paths: self.n_paths,
            max_hops: self.max_hops,
            hidden: self.hidden,
            feature_dim: self.feature_dim,
            adaptive: self.adaptive,
            init_adj_zero: self.init_adj_zero,
            path_cost: self.path_cost()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.mlp_hidden,
            eta: self.mlp_eta,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch: self.batch_train,
        }
    }
}

/// Standard artifact filenames inside an output directory.
pub struct OutFiles {
    pub dir: PathBuf,
}

impl OutFiles {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }

    pub fn graph(&self) -> PathBuf {
        self.dir.join("graph.edges")
    }

    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.txt")
    }

    pub fn observed(&self) -> PathBuf {
        self.dir.join("observed.edges")
    }

    pub fn observations(&self) -> PathBuf {
        self.dir.join("observations.csv")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("model.ckpt")
    }

    pub fn history(&self) -> PathBuf {
        self.dir.join("history.csv")
    }

    pub fn results(&self) -> PathBuf {
        self.dir.join("results.csv")
    }

    pub fn learned_edges(&self) -> PathBuf {
        self.dir.join("learned.edges")
    }

    pub fn learned_dense(&self) -> PathBuf {
        self.dir.join("learned_dense.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.txt")
    }
}
