//! Command-line front end.
//!
//! Every subcommand resolves a JSON config (from `--config`, then flag
//! overrides), writes it to `run_config.json` in the output directory and
//! produces its reports under stable file names there.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array2, Axis};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{activation_scatter, input_jacobian, line_coeffs_all, lipschitz_bounds, minimize_along};
use crate::bayes::{
    gaussian_predictive, histogram_with_density, ks_statistic_normal, mc_outputs, moments, variance_with_se,
    GaussianWeightPrior, Predictive, PredictiveTask,
};
use crate::compat::{from_fm2, from_poly_kernel, to_tensor_train, to_tensor_train_output, FM2Model, KernelModel};
use crate::dataio::{load_csv, split, CsvSchema, Dataset, Standardizer, Targets, Task};
use crate::error::{LpnnError, Result};
use crate::experiment::{product_approx, ProductApproxConfig};
use crate::model_io::{append_constant, load_model, save_model, tt_to_json, ModelBundle};
use crate::network::{init_network, Head, InitConfig, LadderNetwork};
use crate::train::{
    evaluate_loss, evaluate_metric, fold_network, predict_class, strip_zero_intercepts, train_model, OptimizerKind,
    TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "lpnn",
    version,
    about = "Train and analyze ladder polynomial neural networks"
)]
pub struct Cli {
    /// JSON config for the subcommand; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for all reports.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network on a CSV dataset.
    Train(TrainArgs),
    /// Evaluate a saved model on a CSV dataset.
    Eval(EvalArgs),
    /// Lipschitz bounds, line polynomials and activation scatter data.
    Analyze(AnalyzeArgs),
    /// Gaussian weight-prior moments checked against Monte Carlo.
    Bayes(BayesArgs),
    /// Build a network from a polynomial kernel or factorization machine spec.
    Convert(ConvertArgs),
    /// Export tensor-train cores of a model.
    Tt(TtArgs),
    /// Built-in experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// One-hidden-layer feedforward fits of a product and a ReLU ramp.
    ProductApprox(ProductApproxArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// CSV file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column name (or zero-based index).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Hidden layer widths, e.g. `8,8`.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Shrinking factor for geometric hidden widths.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of hidden layers when `--alpha` is used.
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Append a constant 1 to the inputs.
    #[arg(long)]
    pub input_constant: bool,
    #[arg(long)]
    pub no_standardize: bool,
    /// Train/validation/test fractions.
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Batch norm after every hidden layer.
    #[arg(long)]
    pub bn: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Input-norm radius for the Lipschitz bounds.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Line origin in the network input space.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Line direction; defaults to the output gradient at `x0`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub direction: Option<Vec<f64>>,
    /// Interval `lo,hi` for the line parameter.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t_range: Option<Vec<f64>>,
    #[arg(long)]
    pub line_points: Option<usize>,
    /// Skip the Lipschitz report.
    #[arg(long)]
    pub skip_lipschitz: bool,
    /// Inputs for activation scatter data (a column named by `--target` is skipped).
    #[arg(long)]
    pub scatter_data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Zero-based layer for scatter data.
    #[arg(long)]
    pub scatter_layer: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub scatter_units: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BayesArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Input point in the network input space.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Prior variances, e.g. `0.05,0.1`.
    #[arg(long, value_delimiter = ',')]
    pub sigma2: Option<Vec<f64>>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub noise_var: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConvertArgs {
    /// Polynomial kernel spec (JSON).
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Factorization machine spec (JSON).
    #[arg(long)]
    pub fm: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TtArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Export cores for a single output unit.
    #[arg(long)]
    pub output: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProductApproxArgs {
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    match s {
        "regression" => Ok(Task::Regression),
        "classification" => Ok(Task::Classification),
        _ => Err(format!("unknown task '{s}' (regression | classification)")),
    }
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(format!("unknown optimizer '{s}' (adam | sgd)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub target_column: String,
    pub has_header: bool,
    pub task: Task,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            target_column: "target".into(),
            has_header: true,
            task: Task::Regression,
        }
    }
}

impl DataConfig {
    fn apply(&mut self, args: &DataArgs) {
        if let Some(p) = &args.data {
            self.path = Some(p.clone());
        }
        if let Some(t) = &args.target {
            self.target_column = t.clone();
        }
        if let Some(t) = args.task {
            self.task = t;
        }
        if args.no_header {
            self.has_header = false;
        }
    }

    fn load(&self) -> Result<Dataset> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| LpnnError::Config("no dataset given (--data)".into()))?;
        let schema = CsvSchema {
            target_column: self.target_column.clone(),
            has_header: self.has_header,
            task: self.task,
        };
        load_csv(path, &schema)
    }
}

/// Hidden widths `round(α^ℓ (d_in - d_out) + d_out)` for `ℓ = 1..=hidden_layers`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricWidths {
    pub alpha: f64,
    pub hidden_layers: usize,
}

impl GeometricWidths {
    pub fn widths(&self, d_in: usize, d_out: usize) -> Result<Vec<usize>> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(LpnnError::Config(format!(
                "shrinking factor must be in (0, 1], got {}",
                self.alpha
            )));
        }
        let span = d_in as f64 - d_out as f64;
        Ok((1..=self.hidden_layers)
            .map(|l| ((self.alpha.powi(l as i32) * span + d_out as f64).round() as usize).max(1))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureConfig {
    pub hidden_widths: Vec<usize>,
    /// Takes precedence over `hidden_widths` when set.
    pub geometric: Option<GeometricWidths>,
    pub intercept: bool,
    /// Feed a constant 1 after the features so the input branch has an offset.
    pub input_constant: bool,
    pub init_gain: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![8],
            geometric: None,
            intercept: true,
            input_constant: false,
            init_gain: 1.0,
        }
    }
}

impl ArchitectureConfig {
    /// Full width list including the output layer.
    pub fn widths(&self, d_in: usize, d_out: usize) -> Result<Vec<usize>> {
        let mut widths = match &self.geometric {
            Some(g) => g.widths(d_in, d_out)?,
            None => self.hidden_widths.clone(),
        };
        widths.push(d_out);
        Ok(widths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub data: DataConfig,
    pub architecture: ArchitectureConfig,
    pub standardize: bool,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    /// Seed for the split, the initialization and training.
    pub seed: u64,
    pub training: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            architecture: ArchitectureConfig::default(),
            standardize: true,
            split: [0.7, 0.0, 0.3],
            seed: 0,
            training: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub model: Option<PathBuf>,
    pub data: DataConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScatterConfig {
    pub data: DataConfig,
    pub layer: usize,
    /// Empty means every unit of the layer.
    pub units: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    pub model: Option<PathBuf>,
    pub radius: f64,
    pub lipschitz: bool,
    pub x0: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
    pub t_range: [f64; 2],
    pub line_points: usize,
    pub scatter: Option<ScatterConfig>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            model: None,
            radius: 1.0,
            lipschitz: true,
            x0: None,
            direction: None,
            t_range: [-1.0, 1.0],
            line_points: 101,
            scatter: None,
        }
    }
}

impl Default for ScatterConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                has_header: true,
                ..DataConfig::default()
            },
            layer: 0,
            units: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesConfig {
    pub model: Option<PathBuf>,
    pub x: Option<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub samples: usize,
    pub bins: usize,
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            model: None,
            x: None,
            sigma2: vec![0.05, 0.1],
            samples: 10_000,
            bins: 50,
            noise_var: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvertConfig {
    pub kernel: Option<PathBuf>,
    pub fm: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TtConfig {
    pub model: Option<PathBuf>,
    pub output: Option<usize>,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| LpnnError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LpnnError::Config(format!("config {}: {e}", path.display())))
}

struct OutDir(PathBuf);

impl OutDir {
    fn create(path: &Path) -> Result<Self> {
        std::fs::create_dir_all(path)?;
        Ok(Self(path.to_path_buf()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.path(name), contents)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

fn require_model(model: &Option<PathBuf>) -> Result<&PathBuf> {
    model
        .as_ref()
        .ok_or_else(|| LpnnError::Config("no model given (--model)".into()))
}

/// Loads a model and folds batch norm so polynomial analyses apply.
fn load_polynomial(path: &Path) -> Result<(ModelBundle, LadderNetwork)> {
    let bundle = load_model(path)?;
    let net = strip_zero_intercepts(&fold_network(&bundle.net)?)?;
    Ok((bundle, net))
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    let seed = cli.seed;
    match cli.command {
        Command::Train(args) => {
            let mut cfg: TrainRunConfig = load_config(config)?;
            apply_train_args(&mut cfg, &args, seed)?;
            cmd_train(&cfg, &cli.out)
        }
        Command::Eval(args) => {
            let mut cfg: EvalConfig = load_config(config)?;
            if args.model.is_some() {
                cfg.model = args.model.clone();
            }
            cfg.data.apply(&args.data);
            cmd_eval(&cfg, &cli.out)
        }
        Command::Analyze(args) => {
            let mut cfg: AnalyzeConfig = load_config(config)?;
            apply_analyze_args(&mut cfg, &args);
            cmd_analyze(&cfg, &cli.out)
        }
        Command::Bayes(args) => {
            let mut cfg: BayesConfig = load_config(config)?;
            if args.model.is_some() {
                cfg.model = args.model.clone();
            }
            if args.x.is_some() {
                cfg.x = args.x.clone();
            }
            if let Some(s) = &args.sigma2 {
                cfg.sigma2 = s.clone();
            }
            cfg.samples = args.samples.unwrap_or(cfg.samples);
            cfg.bins = args.bins.unwrap_or(cfg.bins);
            cfg.noise_var = args.noise_var.unwrap_or(cfg.noise_var);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cmd_bayes(&cfg, &cli.out)
        }
        Command::Convert(args) => {
            let mut cfg: ConvertConfig = load_config(config)?;
            if args.kernel.is_some() {
                cfg.kernel = args.kernel.clone();
            }
            if args.fm.is_some() {
                cfg.fm = args.fm.clone();
            }
            cmd_convert(&cfg, &cli.out)
        }
        Command::Tt(args) => {
            let mut cfg: TtConfig = load_config(config)?;
            if args.model.is_some() {
                cfg.model = args.model.clone();
            }
            if args.output.is_some() {
                cfg.output = args.output;
            }
            cmd_tt(&cfg, &cli.out)
        }
        Command::Experiment(ExperimentCommand::ProductApprox(args)) => {
            let mut cfg: ProductApproxConfig = load_config(config)?;
            cfg.runs = args.runs.unwrap_or(cfg.runs);
            cfg.training.epochs = args.epochs.unwrap_or(cfg.training.epochs);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cmd_product_approx(&cfg, &cli.out)
        }
    }
}

fn apply_train_args(cfg: &mut TrainRunConfig, args: &TrainArgs, seed: Option<u64>) -> Result<()> {
    cfg.data.apply(&args.data);
    if let Some(w) = &args.widths {
        cfg.architecture.hidden_widths = w.clone();
        cfg.architecture.geometric = None;
    }
    match (args.alpha, args.hidden_layers) {
        (Some(alpha), Some(hidden_layers)) => {
            cfg.architecture.geometric = Some(GeometricWidths { alpha, hidden_layers });
        }
        (None, None) => {}
        _ => {
            return Err(LpnnError::Config(
                "--alpha and --hidden-layers must be given together".into(),
            ))
        }
    }
    if args.no_intercept {
        cfg.architecture.intercept = false;
    }
    if args.input_constant {
        cfg.architecture.input_constant = true;
    }
    if args.no_standardize {
        cfg.standardize = false;
    }
    if let Some(s) = &args.split {
        cfg.split = <[f64; 3]>::try_from(s.as_slice())
            .map_err(|_| LpnnError::Config(format!("--split needs three fractions, got {}", s.len())))?;
    }
    let t = &mut cfg.training;
    t.epochs = args.epochs.unwrap_or(t.epochs);
    t.learning_rate = args.lr.unwrap_or(t.learning_rate);
    t.batch_size = args.batch_size.unwrap_or(t.batch_size);
    t.optimizer = args.optimizer.unwrap_or(t.optimizer);
    t.l2_weight = args.l2.unwrap_or(t.l2_weight);
    t.dropout_rate = args.dropout.unwrap_or(t.dropout_rate);
    if args.bn {
        t.bn_enabled = true;
    }
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.training.seed = cfg.seed;
    Ok(())
}

fn apply_analyze_args(cfg: &mut AnalyzeConfig, args: &AnalyzeArgs) {
    if args.model.is_some() {
        cfg.model = args.model.clone();
    }
    cfg.radius = args.radius.unwrap_or(cfg.radius);
    if args.x0.is_some() {
        cfg.x0 = args.x0.clone();
    }
    if args.direction.is_some() {
        cfg.direction = args.direction.clone();
    }
    if let Some([lo, hi]) = args.t_range.as_deref().and_then(|t| <[f64; 2]>::try_from(t).ok()) {
        cfg.t_range = [lo, hi];
    }
    cfg.line_points = args.line_points.unwrap_or(cfg.line_points);
    if args.skip_lipschitz {
        cfg.lipschitz = false;
    }
    if let Some(path) = &args.scatter_data {
        let mut scatter = cfg.scatter.clone().unwrap_or_default();
        scatter.data.path = Some(path.clone());
        cfg.scatter = Some(scatter);
    }
    if let (Some(scatter), Some(t)) = (cfg.scatter.as_mut(), &args.target) {
        scatter.data.target_column = t.clone();
    }
    if let Some(scatter) = cfg.scatter.as_mut() {
        scatter.layer = args.scatter_layer.unwrap_or(scatter.layer);
        if let Some(u) = &args.scatter_units {
            scatter.units = u.clone();
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainMetrics {
    metric: &'static str,
    train: f64,
    val: Option<f64>,
    test: Option<f64>,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    final_train_loss: f64,
    epochs: usize,
}

fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "rmse",
        Task::Classification => "error_rate",
    }
}

pub fn cmd_train(cfg: &TrainRunConfig, out: &Path) -> Result<()> {
    let dataset = cfg.data.load()?;
    let indices = split(dataset.len(), cfg.split, cfg.seed)?;
    if indices.train.is_empty() {
        return Err(LpnnError::Config("the training split is empty".into()));
    }
    let mut train = dataset.subset(&indices.train)?;
    let standardizer = if cfg.standardize {
        Some(Standardizer::fit(train.features().view())?)
    } else {
        None
    };
    let input_constant = cfg.architecture.input_constant;
    let prepare = |ds: Dataset| -> Result<Dataset> {
        let xs = match &standardizer {
            Some(s) => s.transform(ds.features().view())?,
            None => ds.features().clone(),
        };
        let xs = if input_constant { append_constant(xs.view()) } else { xs };
        Dataset::new(xs, ds.targets().clone(), None)
    };
    train = prepare(train)?;
    let val = (!indices.val.is_empty())
        .then(|| prepare(dataset.subset(&indices.val)?))
        .transpose()?;
    let test = (!indices.test.is_empty())
        .then(|| prepare(dataset.subset(&indices.test)?))
        .transpose()?;

    let (head, d_out) = dataset.head();
    let widths = cfg.architecture.widths(dataset.n_features(), d_out)?;
    let init = InitConfig {
        gain: cfg.architecture.init_gain,
        intercept: cfg.architecture.intercept,
    };
    let d_in = dataset.n_features() + usize::from(input_constant);
    let net = init_network(d_in, &widths, head, init, cfg.seed)?;

    let train_data = train.to_train_data()?;
    let val_data = val.as_ref().map(Dataset::to_train_data).transpose()?;
    let test_data = test.as_ref().map(Dataset::to_train_data).transpose()?;
    let outcome = train_model(&net, &train_data, val_data.as_ref(), &cfg.training)?;

    let dir = OutDir::create(out)?;
    dir.write_json("run_config.json", cfg)?;
    dir.write_json("split.json", &indices)?;
    let bundle = ModelBundle {
        net: outcome.net,
        class_labels: dataset.class_labels().map(<[String]>::to_vec),
        standardizer,
        input_constant,
    };
    save_model(&bundle, dir.path("model.json"))?;
    dir.write("loss_history.csv", &outcome.history.to_csv())?;
    let metrics = TrainMetrics {
        metric: metric_name(dataset.task()),
        train: evaluate_metric(&bundle.net, &train_data)?,
        val: val_data.as_ref().map(|d| evaluate_metric(&bundle.net, d)).transpose()?,
        test: test_data
            .as_ref()
            .map(|d| evaluate_metric(&bundle.net, d))
            .transpose()?,
        n_train: indices.train.len(),
        n_val: indices.val.len(),
        n_test: indices.test.len(),
        final_train_loss: evaluate_loss(&bundle.net, &train_data)?,
        epochs: cfg.training.epochs,
    };
    dir.write_json("metrics.json", &metrics)
}

/// Re-indexes class labels of an evaluation file to the model's label table.
fn align_labels(ds: Dataset, model_labels: Option<&[String]>) -> Result<Dataset> {
    let Targets::Classes { indices, labels } = ds.targets() else {
        return Ok(ds);
    };
    let model_labels =
        model_labels.ok_or_else(|| LpnnError::Data("model has no class labels for a classification file".into()))?;
    let lookup: HashMap<&str, usize> = model_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let remapped = indices
        .iter()
        .map(|&i| {
            lookup
                .get(labels[i].as_str())
                .copied()
                .ok_or_else(|| LpnnError::Data(format!("label '{}' unknown to the model", labels[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = Targets::Classes {
        indices: remapped,
        labels: model_labels.to_vec(),
    };
    Dataset::new(
        ds.features().clone(),
        targets,
        ds.feature_names().map(<[String]>::to_vec),
    )
}

#[derive(Debug, Serialize)]
struct EvalMetrics {
    metric: &'static str,
    value: f64,
    n: usize,
}

pub fn cmd_eval(cfg: &EvalConfig, out: &Path) -> Result<()> {
    let bundle = load_model(require_model(&cfg.model)?)?;
    let ds = align_labels(cfg.data.load()?, bundle.class_labels.as_deref())?;
    let ds = ds.with_features(bundle.prepare_inputs(ds.features().view())?)?;
    let data = ds.to_train_data()?;
    let value = evaluate_metric(&bundle.net, &data)?;
    let preds = bundle.net.forward_batch(ds.features().view())?;

    let dir = OutDir::create(out)?;
    dir.write_json("run_config.json", cfg)?;
    dir.write_json(
        "metrics.json",
        &EvalMetrics {
            metric: metric_name(ds.task()),
            value,
            n: ds.len(),
        },
    )?;
    let mut csv = String::from("row");
    for k in 0..preds.ncols() {
        write!(csv, ",output_{k}").expect("string write");
    }
    if bundle.class_labels.is_some() {
        csv.push_str(",predicted_label");
    }
    csv.push('\n');
    for (i, row) in preds.axis_iter(Axis(0)).enumerate() {
        write!(csv, "{i}").expect("string write");
        for v in row {
            write!(csv, ",{v:.17e}").expect("string write");
        }
        if let Some(labels) = &bundle.class_labels {
            let class = predict_class(row, bundle.net.head());
            write!(csv, ",{}", labels.get(class).map_or("?", String::as_str)).expect("string write");
        }
        csv.push('\n');
    }
    dir.write("predictions.csv", &csv)
}

#[derive(Debug, Serialize)]
struct LineReport {
    x0: Vec<f64>,
    direction: Vec<f64>,
    t_range: [f64; 2],
    degree: usize,
    minimum: Option<crate::analysis::LineMinimum>,
}

pub fn cmd_analyze(cfg: &AnalyzeConfig, out: &Path) -> Result<()> {
    let (_, net) = load_polynomial(require_model(&cfg.model)?)?;
    let d = net.input_dim();
    let dir = OutDir::create(out)?;
    dir.write_json("run_config.json", cfg)?;

    if cfg.lipschitz {
        let report = lipschitz_bounds(&net, cfg.radius).map_err(|e| match e {
            LpnnError::Precondition(msg) => {
                LpnnError::Precondition(format!("{msg}; train with --no-intercept or pass --skip-lipschitz"))
            }
            other => other,
        })?;
        dir.write_json("lipschitz.json", &report)?;
    }

    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    if x0.len() != d {
        return Err(LpnnError::Config(format!(
            "x0 has length {}, network input is {d}",
            x0.len()
        )));
    }
    let direction = match &cfg.direction {
        Some(g) => g.clone(),
        None => {
            let grad = input_jacobian(&net, &x0)?.row(0).to_vec();
            if grad.iter().any(|&v| v != 0.0) {
                grad
            } else {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                e
            }
        }
    };
    if direction.len() != d {
        return Err(LpnnError::Config(format!(
            "direction has length {}, network input is {d}",
            direction.len()
        )));
    }
    let [lo, hi] = cfg.t_range;
    if !(lo <= hi) || cfg.line_points < 2 {
        return Err(LpnnError::Config("need lo <= hi and at least two line points".into()));
    }
    let coeffs = line_coeffs_all(&net, &x0, &direction)?;
    let last = coeffs.last().expect("at least one layer");
    let units = last.units();
    let mut table = String::from("t");
    for k in 0..units {
        if units == 1 {
            table.push_str(",value");
        } else {
            write!(table, ",value_{k}").expect("string write");
        }
    }
    table.push('\n');
    for i in 0..cfg.line_points {
        let t = lo + (hi - lo) * i as f64 / (cfg.line_points - 1) as f64;
        write!(table, "{t:.17e}").expect("string write");
        for v in last.eval(t) {
            write!(table, ",{v:.17e}").expect("string write");
        }
        table.push('\n');
    }
    dir.write("line_poly.csv", &table)?;

    let mut coeff_csv = String::from("power");
    for k in 0..units {
        write!(coeff_csv, ",unit_{k}").expect("string write");
    }
    coeff_csv.push('\n');
    for (j, column) in last.coeffs.columns().into_iter().enumerate() {
        write!(coeff_csv, "{}", last.degree() - j).expect("string write");
        for c in column {
            write!(coeff_csv, ",{c:.17e}").expect("string write");
        }
        coeff_csv.push('\n');
    }
    dir.write("line_coeffs.csv", &coeff_csv)?;

    let minimum = (net.output_dim() == 1)
        .then(|| minimize_along(&net, &x0, &direction, (lo, hi)))
        .transpose()?;
    dir.write_json(
        "line_min.json",
        &LineReport {
            x0,
            direction,
            t_range: cfg.t_range,
            degree: last.degree(),
            minimum,
        },
    )?;

    if let Some(sc) = &cfg.scatter {
        let path = sc
            .data
            .path
            .as_ref()
            .ok_or_else(|| LpnnError::Config("scatter needs a data file".into()))?;
        let xs = load_feature_matrix(path, sc.data.has_header, &sc.data.target_column)?;
        let bundle = load_model(require_model(&cfg.model)?)?;
        let xs = bundle.prepare_inputs(xs.view())?;
        let raw = &bundle.net;
        let layer = raw.layers().get(sc.layer).ok_or_else(|| {
            LpnnError::Config(format!(
                "scatter layer {} out of range (depth {})",
                sc.layer,
                raw.depth()
            ))
        })?;
        let units: Vec<usize> = if sc.units.is_empty() {
            (0..layer.width()).collect()
        } else {
            sc.units.clone()
        };
        let series = activation_scatter(raw, xs.view(), sc.layer, &units)?;
        let mut csv = String::from("layer,unit,u,h\n");
        for s in &series {
            for (u, h) in &s.points {
                writeln!(csv, "{},{},{u:.17e},{h:.17e}", s.layer, s.unit).expect("string write");
            }
        }
        dir.write("scatter.csv", &csv)?;
    }
    Ok(())
}

/// Numeric CSV columns as features, skipping a header column named `exclude`.
fn load_feature_matrix(path: &Path, has_header: bool, exclude: &str) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| LpnnError::Data(format!("{}: {e}", path.display())))?;
    let skip = if has_header {
        let header = reader
            .headers()
            .map_err(|e| LpnnError::Data(format!("{}: {e}", path.display())))?;
        header.iter().position(|h| h == exclude)
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| LpnnError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .filter(|&(j, _)| Some(j) != skip)
            .map(|(j, c)| {
                c.parse::<f64>()
                    .map_err(|_| LpnnError::Data(format!("line {line}, column {}: cannot parse '{c}'", j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LpnnError::Data(format!("{}: no data rows", path.display())));
    }
    crate::serde_rows::from_rows(rows).map_err(LpnnError::Data)
}

#[derive(Debug, Serialize)]
struct PredictiveEntry {
    sigma2: f64,
    #[serde(flatten)]
    predictive: PredictiveJson,
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PredictiveJson {
    Normal { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Bernoulli { p: f64 },
}

pub fn cmd_bayes(cfg: &BayesConfig, out: &Path) -> Result<()> {
    let (_, net) = load_polynomial(require_model(&cfg.model)?)?;
    let x = cfg
        .x
        .clone()
        .ok_or_else(|| LpnnError::Config("no input point given (--x)".into()))?;
    if cfg.samples < 2 || cfg.bins == 0 {
        return Err(LpnnError::Config("need at least two samples and one bin".into()));
    }
    let task = match net.head() {
        Head::BinaryLogit => PredictiveTask::Binary,
        _ => PredictiveTask::Regression {
            noise_var: cfg.noise_var,
        },
    };
    let dir = OutDir::create(out)?;
    dir.write_json("run_config.json", cfg)?;
    let mut moments_csv =
        String::from("sigma2,output,analytic_mean,analytic_var,mc_mean,mc_var,mc_mean_se,mc_var_se,ks\n");
    let mut hist_csv = String::from("sigma2,output,bin_left,bin_right,count,density\n");
    let mut predictive = Vec::new();
    for &s2 in &cfg.sigma2 {
        let prior = GaussianWeightPrior::isotropic(net.clone(), s2).map_err(|e| match e {
            LpnnError::Precondition(msg) => {
                LpnnError::Precondition(format!("{msg}; train with --no-intercept to use weight priors"))
            }
            other => other,
        })?;
        let m = moments(&prior, &x)?;
        let samples = mc_outputs(&prior, &x, cfg.samples, cfg.seed)?;
        for k in 0..net.output_dim() {
            let col = samples.column(k).to_vec();
            let mc_mean = col.iter().sum::<f64>() / col.len() as f64;
            let (mc_var, var_se) = variance_with_se(&col);
            let mean_se = (mc_var / col.len() as f64).sqrt();
            let var = m.cov[[k, k]].max(0.0);
            let ks = ks_statistic_normal(&col, m.mu[k], var);
            writeln!(
                moments_csv,
                "{s2},{k},{:.17e},{:.17e},{mc_mean:.17e},{mc_var:.17e},{mean_se:.17e},{var_se:.17e},{ks:.17e}",
                m.mu[k], var
            )
            .expect("string write");
            for bin in histogram_with_density(&col, cfg.bins, m.mu[k], var) {
                writeln!(
                    hist_csv,
                    "{s2},{k},{:.17e},{:.17e},{},{:.17e}",
                    bin.left, bin.right, bin.count, bin.density
                )
                .expect("string write");
            }
        }
        let p = match gaussian_predictive(&prior, &x, task)? {
            Predictive::Normal { mean, cov } => PredictiveJson::Normal {
                mean: mean.to_vec(),
                cov: crate::serde_rows::to_rows(&cov),
            },
            Predictive::Bernoulli { p } => PredictiveJson::Bernoulli { p },
        };
        predictive.push(PredictiveEntry {
            sigma2: s2,
            predictive: p,
        });
    }
    dir.write("moments.csv", &moments_csv)?;
    dir.write("histogram.csv", &hist_csv)?;
    dir.write_json("predictive.json", &predictive)
}

pub fn cmd_convert(cfg: &ConvertConfig, out: &Path) -> Result<()> {
    let read = |p: &PathBuf| {
        std::fs::read_to_string(p).map_err(|e| LpnnError::Data(format!("cannot read {}: {e}", p.display())))
    };
    let parse_err = |p: &PathBuf, e: serde_json::Error| LpnnError::Data(format!("{}: {e}", p.display()));
    let net = match (&cfg.kernel, &cfg.fm) {
        (Some(p), None) => {
            let model: KernelModel = serde_json::from_str(&read(p)?).map_err(|e| parse_err(p, e))?;
            from_poly_kernel(&model)?
        }
        (None, Some(p)) => {
            let model: FM2Model = serde_json::from_str(&read(p)?).map_err(|e| parse_err(p, e))?;
            from_fm2(&model)?
        }
        _ => return Err(LpnnError::Config("give exactly one of --kernel or --fm".into())),
    };
    let dir = OutDir::create(out)?;
    dir.write_json("run_config.json", cfg)?;
    let bundle = ModelBundle {
        input_constant: true,
        ..ModelBundle::bare(net)
    };
    save_model(&bundle, dir.path("model.json"))
}

pub fn cmd_tt(cfg: &TtConfig, out: &Path) -> Result<()> {
    let (_, net) = load_polynomial(require_model(&cfg.model)?)?;
    let cores = match cfg.output {
        Some(k) => to_tensor_train_output(&net, k)?,
        None => to_tensor_train(&net)?,
    };
    let dir = OutDir::create(out)?;
    dir.write_json("run_config.json", cfg)?;
    dir.write("tt.json", &(tt_to_json(&cores)? + "\n"))
}

pub fn cmd_product_approx(cfg: &ProductApproxConfig, out: &Path) -> Result<()> {
    let report = product_approx(cfg)?;
    let dir = OutDir::create(out)?;
    dir.write_json("run_config.json", cfg)?;
    dir.write("product_approx.csv", &report.to_csv())?;
    dir.write_json("product_approx.json", &report)
}
