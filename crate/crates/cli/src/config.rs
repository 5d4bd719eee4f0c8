use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use pfsl_core::baselines::BaselineKind;
use pfsl_core::scenario::{ScenarioSpec, Setting};
use pfsl_core::ExecMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Pfsl,
    Fl,
    #[value(name = "fl_tl")]
    FlTl,
    Sl,
    Sflv1,
    Sflv2,
}

impl Algo {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Algo::Pfsl => None,
            Algo::Fl => Some(BaselineKind::Fl),
            Algo::FlTl => Some(BaselineKind::FlTl),
            Algo::Sl => Some(BaselineKind::Sl),
            Algo::Sflv1 => Some(BaselineKind::Sflv1),
            Algo::Sflv2 => Some(BaselineKind::Sflv2),
        }
    }
}

/// Everything a run depends on.  `config.json` in a run directory is this
/// struct, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema: u32,
    pub algo: Algo,
    pub seed: u64,
    pub batch_size: usize,
    pub test_batch_size: usize,
    /// Total epoch budget.  For PFSL, phase 1 gets up to `checkpoint` of
    /// them and phase 2 the rest.
    pub epochs: usize,
    pub lr: f64,
    pub checkpoint: usize,
    /// Dropout probability at the merge barrier (S5 rounds).
    pub rate: f64,
    pub v_thres: f64,
    pub patience: usize,
    /// S5 rounds; `None` visits the whole pool once.
    pub rounds: Option<usize>,
    /// Weight file for the full model; `None` pretrains on the pretext domain.
    pub pretrained: Option<PathBuf>,
    pub scenario: ScenarioSpec,
    pub exec: ExecMode,
    /// Worker threads for parallel execution (0 = one per core).
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: SCHEMA,
            algo: Algo::Pfsl,
            seed: 1234,
            batch_size: 128,
            test_batch_size: 128,
            epochs: 10,
            lr: 0.001,
            checkpoint: 50,
            rate: 0.5,
            v_thres: 0.9,
            patience: 3,
            rounds: None,
            pretrained: None,
            scenario: ScenarioSpec {
                datapoints: 500,
                ..ScenarioSpec::default()
            },
            exec: ExecMode::Sequential,
            workers: 0,
            out: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            bail!("unsupported config schema {}, expected {SCHEMA}", self.schema);
        }
        if !(0.0..1.0).contains(&self.rate) {
            bail!("rate must be in [0, 1), got {}", self.rate);
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            bail!("lr must be positive, got {}", self.lr);
        }
        if self.batch_size == 0 || self.test_batch_size == 0 {
            bail!("batch sizes must be positive");
        }
        if self.epochs == 0 {
            bail!("epochs must be at least 1");
        }
        if self.checkpoint == 0 {
            bail!("checkpoint must be at least 1");
        }
        if self.patience == 0 {
            bail!("patience must be at least 1");
        }
        if !(self.v_thres.is_finite() && self.v_thres >= 0.0) {
            bail!("v_thres must be non-negative");
        }
        if self.scenario.clients == 0 || self.scenario.datapoints == 0 {
            bail!("clients and datapoints must be positive");
        }
        if self.scenario.setting == Setting::S5 && self.algo != Algo::Pfsl {
            bail!("setting s5 runs with --algo pfsl only");
        }
        Ok(())
    }

    /// Short content hash over everything that affects results.  The output
    /// root and the execution mode are left out: they change where results
    /// go and how fast they arrive, not what they are.
    pub fn run_id(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.exec = ExecMode::Sequential;
        c.workers = 0;
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        let digest = Sha256::digest(&bytes);
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1)"))
    }
}

/// Three-part split learning scenario runner.
///
/// Values come from built-in defaults, then `--config`, then flags given on
/// the command line.  Without any arguments the default configuration is
/// printed.
#[derive(Debug, Parser)]
#[command(name = "pfsl", version)]
pub struct Cli {
    /// Clients per run (in s5: concurrent clients per round).
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub test_batch_size: Option<usize>,
    /// Total epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_setting)]
    pub setting: Option<Setting>,
    /// Training samples per (small) client.
    #[arg(long)]
    pub datapoints: Option<usize>,
    /// Epoch after which personalization starts at the latest.
    #[arg(long)]
    pub checkpoint: Option<usize>,
    /// Dropout probability in [0, 1).
    #[arg(long, value_parser = parse_rate)]
    pub rate: Option<f64>,
    /// Weight file to start from instead of pretraining.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output root; each run writes `run_<id>/` below it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub v_thres: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Run clients on a thread pool of this size (results are identical).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Resolve and write config.json without training.
    #[arg(long)]
    pub dry_run: bool,
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    let s = s.strip_prefix("setting").map(|n| format!("s{n}")).unwrap_or_else(|| s.to_string());
    s.parse().map_err(|e: pfsl_core::Error| e.to_string())
}

impl Cli {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.clients => cfg.scenario.clients);
        set!(self.batch_size => cfg.batch_size);
        set!(self.test_batch_size => cfg.test_batch_size);
        set!(self.epochs => cfg.epochs);
        set!(self.lr => cfg.lr);
        set!(self.seed => cfg.seed);
        set!(self.setting => cfg.scenario.setting);
        set!(self.datapoints => cfg.scenario.datapoints);
        set!(self.checkpoint => cfg.checkpoint);
        set!(self.rate => cfg.rate);
        set!(self.algo => cfg.algo);
        set!(self.out => cfg.out);
        set!(self.v_thres => cfg.v_thres);
        if let Some(p) = &self.pretrained {
            cfg.pretrained = Some(p.clone());
        }
        if let Some(r) = self.rounds {
            cfg.rounds = Some(r);
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
            cfg.exec = ExecMode::Parallel;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
