use std::fs;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use designnav::api::{self, InferRequest, NavigateRequest};
use designnav::dataset::{Dataset, Provenance};
use designnav::discretize::DiscretizationScheme;
use designnav::linalg::{
    estimate_jacobian, navigate_linear, pseudo_inverse, svd, BbnFunction, FactorsExport, GroundTruthFunction,
    UnitCubeFunction, DEFAULT_SIGMA_TOL, DEFAULT_STEP,
};
use designnav::pipeline::{self, PipelineConfig, SensitivityArtifact};
use designnav::simulator::{read_decisions, GroundTruthModel, SyntheticEnergyModel};
use designnav::space::Value;
use indexmap::IndexMap;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "designnav", version, about = "Map and navigate a design space with a Bayesian network meta-model")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Pipeline config (`.toml` or `.json`); defaults apply otherwise.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file, or directory for `pipeline`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputSelection {
    /// Sensitivity artifact whose screened set becomes the network inputs.
    #[arg(long)]
    pub sensitivity: Option<PathBuf>,
    /// Explicit comma-separated inputs; overrides `--sensitivity`.
    #[arg(long, value_delimiter = ',')]
    pub inputs: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sobol design over the simulator's decision space.
    Sample {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Runs the simulator on a sample file.
    Simulate {
        #[arg(long)]
        samples: PathBuf,
    },
    /// Saltelli indices and top-k screening.
    Sensitivity,
    /// Fits bins for the inputs and every output.
    Bin {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        select: InputSelection,
    },
    /// Fits the network.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        select: InputSelection,
    },
    /// k-fold cross-validation.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        select: InputSelection,
    },
    /// Posterior marginals under evidence.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// JSON request file; merged with the flags below.
        #[arg(long)]
        request: Option<PathBuf>,
        /// `var=bin`.
        #[arg(long = "hard")]
        hard: Vec<String>,
        /// `var=bin,bin,...`.
        #[arg(long = "soft")]
        soft: Vec<String>,
        #[arg(long = "query")]
        query: Vec<String>,
    },
    /// Input recommendations for output target ranges.
    Navigate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        request: Option<PathBuf>,
        /// `var=lo:hi` in physical units.
        #[arg(long = "target")]
        targets: Vec<String>,
        /// `var=value`, a number or a category label.
        #[arg(long = "fix")]
        fixed: Vec<String>,
    },
    /// One pseudo-inverse step from a base design.
    NavigateLinear {
        /// `output=change`; unlisted outputs stay put.
        #[arg(long = "delta", required = true)]
        delta: Vec<String>,
        /// JSON object of decision values; the reference dwelling otherwise.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Differentiate this trained network instead of the simulator.
        #[arg(long)]
        surrogate: Option<PathBuf>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SIGMA_TOL)]
        sigma_tol: f64,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
    },
    /// Sample, simulate, screen, train and validate.
    Pipeline,
    /// Serves a model over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    let out = |default: &str| g.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::Sample { n } => {
            let cfg = PipelineConfig {
                n_samples: n.unwrap_or(cfg.n_samples),
                ..cfg
            };
            let sim = pipeline::simulator_by_name(&cfg.simulator)?;
            let xs = pipeline::sample(&cfg, sim.as_ref())?;
            let path = out(pipeline::SAMPLES_FILE);
            pipeline::write_samples(&path, sim.space(), &xs, &provenance(&cfg, sim.as_ref()))?;
            eprintln!("wrote {} samples to {}", xs.len(), path.display());
        }
        Command::Simulate { samples } => {
            let sim = pipeline::simulator_by_name(&cfg.simulator)?;
            let file = fs::File::open(&samples).with_context(|| format!("opening {}", samples.display()))?;
            let xs = read_decisions(BufReader::new(file), sim.space())?;
            let ds = Dataset::simulate(sim.as_ref(), xs, &cfg.hash())?;
            let path = out(pipeline::DATASET_FILE);
            ds.save(&path)?;
            eprintln!("wrote {} rows to {}", ds.len(), path.display());
        }
        Command::Sensitivity => {
            let sim = pipeline::simulator_by_name(&cfg.simulator)?;
            let (sensitivity, screening) = pipeline::screen(&cfg, sim.as_ref())?;
            say(&screening.to_table(&sensitivity))?;
            let artifact = SensitivityArtifact {
                config_hash: cfg.hash(),
                sensitivity,
                screening,
            };
            pipeline::write_json(&out(pipeline::SENSITIVITY_FILE), &artifact)?;
        }
        Command::Bin { dataset, select } => {
            let ds = load_dataset(&cfg, &dataset)?;
            let mut nodes = inputs(&select, &ds)?;
            nodes.extend(ds.space.output_names());
            let scheme = DiscretizationScheme::fit_dataset(&ds, &nodes, cfg.bins, cfg.binning)?;
            for v in &scheme.variables {
                say(&format!("{:<20} {}\n", v.variable, v.labels.join("  ")))?;
            }
            pipeline::write_json(&out("bins.json"), &scheme)?;
        }
        Command::Train { dataset, select } => {
            let ds = load_dataset(&cfg, &dataset)?;
            let names = inputs(&select, &ds)?;
            let mut model = pipeline::train(&cfg, &ds, &names)?;
            if let (Some(path), None) = (&select.sensitivity, &select.inputs) {
                let a = load_sensitivity(path)?;
                model.metadata.screening = Some(a.screening);
                model.metadata.sensitivity = Some(a.sensitivity);
            }
            let path = out(pipeline::MODEL_FILE);
            pipeline::save_model(&model, &path)?;
            eprintln!("wrote model over {} to {}", names.join(", "), path.display());
        }
        Command::Validate { dataset, select } => {
            let ds = load_dataset(&cfg, &dataset)?;
            let names = inputs(&select, &ds)?;
            let report = pipeline::validate(&cfg, &ds, &names)?;
            say(&report.to_table())?;
            pipeline::write_json(&out(pipeline::VALIDATION_FILE), &report)?;
        }
        Command::Infer {
            model,
            request,
            hard,
            soft,
            query,
        } => {
            let model = pipeline::load_model(&model)?;
            let mut req: InferRequest = read_request(request.as_deref())?;
            for (name, v) in parse_pairs(&hard)? {
                req.evidence.hard.insert(name, v.parse().with_context(|| format!("bin `{v}`"))?);
            }
            for (name, v) in parse_pairs(&soft)? {
                let bins = v
                    .split(',')
                    .map(|b| b.trim().parse::<usize>().with_context(|| format!("bin `{b}`")))
                    .collect::<Result<Vec<_>>>()?;
                req.evidence.soft.insert(name, bins);
            }
            if !query.is_empty() {
                req.query = Some(query);
            }
            emit(g, &api::infer(&model, &req)?)?;
        }
        Command::Navigate {
            model,
            request,
            targets,
            fixed,
        } => {
            let model = pipeline::load_model(&model)?;
            let mut req: NavigateRequest = read_request(request.as_deref())?;
            for (name, v) in parse_pairs(&targets)? {
                let (lo, hi) = v.split_once(':').ok_or_else(|| anyhow!("target `{name}` needs lo:hi"))?;
                req.targets.insert(name, [lo.trim().parse()?, hi.trim().parse()?]);
            }
            for (name, v) in parse_pairs(&fixed)? {
                req.fixed.insert(name, parse_value(&v));
            }
            if req.targets.is_empty() {
                bail!("navigate needs at least one --target");
            }
            emit(g, &api::navigate(&model, &req)?)?;
        }
        Command::NavigateLinear {
            delta,
            base,
            surrogate,
            rank,
            sigma_tol,
            step,
        } => {
            let report = match surrogate {
                Some(path) => {
                    if base.is_some() {
                        bail!("--base applies to the simulator; a surrogate is linearized at its cube center");
                    }
                    let model = pipeline::load_model(&path)?;
                    let f = BbnFunction(&model);
                    let x0 = vec![0.5; f.n_inputs()];
                    let ins = model.structure.input_nodes.clone();
                    let outs = model.structure.output_nodes.clone();
                    linear_step(&f, &x0, &ins, &outs, &delta, rank, sigma_tol, step)?
                }
                None => {
                    let sim = pipeline::simulator_by_name(&cfg.simulator)?;
                    let space = sim.space();
                    let x = match base {
                        Some(p) => space.decision_from_map(&serde_json::from_str(&fs::read_to_string(&p)?)?)?,
                        None if cfg.simulator == "synthetic-energy" => SyntheticEnergyModel::new().reference_dwelling(),
                        None => space.denormalize(&vec![0.5; space.n_decisions()])?,
                    };
                    let f = GroundTruthFunction(sim.as_ref());
                    let x0 = space.normalize(&x)?;
                    let mut r = linear_step(
                        &f,
                        &x0,
                        &space.decision_names(),
                        &space.output_names(),
                        &delta,
                        rank,
                        sigma_tol,
                        step,
                    )?;
                    let candidate = space.denormalize(&serde_json::from_value::<Vec<f64>>(r["x"].clone())?)?;
                    let simulated = sim.evaluate(&candidate)?;
                    r["candidate"] = serde_json::to_value(space.decision_to_map(&candidate))?;
                    r["simulated"] = serde_json::to_value(space.performance_to_map(&simulated))?;
                    r
                }
            };
            say(&(serde_json::to_string_pretty(&report)? + "\n"))?;
            if let Some(path) = &g.out {
                pipeline::write_json(path, &report["factors"])?;
            }
        }
        Command::Pipeline => {
            let cfg = PipelineConfig {
                out_dir: g.out.clone().unwrap_or(cfg.out_dir),
                ..cfg
            };
            let run = pipeline::run_pipeline(&cfg)?;
            say(&run.screening.to_table(&run.sensitivity))?;
            say(&run.validation.to_table())?;
            eprintln!("artifacts in {} (config {})", cfg.out_dir.display(), run.config_hash);
        }
        Command::Serve { model, addr } => {
            let model = pipeline::load_model(&model)?;
            tokio::runtime::Runtime::new()?.block_on(crate::server::serve(model, addr))?;
        }
    }
    Ok(())
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn provenance(cfg: &PipelineConfig, sim: &dyn GroundTruthModel) -> Provenance {
    Provenance {
        config_hash: cfg.hash(),
        simulator: sim.identity(),
    }
}

fn load_dataset(cfg: &PipelineConfig, path: &Path) -> Result<Dataset> {
    let sim = pipeline::simulator_by_name(&cfg.simulator)?;
    Dataset::load(path, sim.space()).with_context(|| format!("dataset {}", path.display()))
}

fn load_sensitivity(path: &Path) -> Result<SensitivityArtifact> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn inputs(select: &InputSelection, ds: &Dataset) -> Result<Vec<String>> {
    Ok(match (&select.inputs, &select.sensitivity) {
        (Some(names), _) => names.clone(),
        (None, Some(path)) => load_sensitivity(path)?.screening.selected,
        (None, None) => ds.space.decision_names(),
    })
}

fn read_request<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn parse_pairs(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| anyhow!("expected name=value, got `{s}`"))
        })
        .collect()
}

fn parse_value(s: &str) -> Value {
    s.parse::<f64>().map(Value::Real).unwrap_or_else(|_| Value::Label(s.to_string()))
}

/// Writes to stdout, returning the I/O error instead of panicking on a
/// closed pipe.
fn say(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn emit<T: serde::Serialize>(g: &Global, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    say(&text)?;
    if let Some(path) = &g.out {
        fs::write(path, text)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn linear_step<F: UnitCubeFunction>(
    f: &F,
    x0: &[f64],
    input_names: &[String],
    output_names: &[String],
    delta: &[String],
    rank: Option<usize>,
    sigma_tol: f64,
    h: f64,
) -> Result<serde_json::Value> {
    let mut delta_o = vec![0.0; output_names.len()];
    for (name, v) in parse_pairs(delta)? {
        let k = output_names
            .iter()
            .position(|o| *o == name)
            .ok_or_else(|| anyhow!("unknown output `{name}`"))?;
        delta_o[k] = v.parse().with_context(|| format!("change `{v}`"))?;
    }
    let jac = estimate_jacobian(f, x0, h)?;
    let factors = svd(&jac.matrix)?;
    let pinv = pseudo_inverse(&factors, rank, sigma_tol)?;
    let step = navigate_linear(&pinv, &delta_o, x0)?;
    if step.degenerate {
        log::warn!("the Jacobian is numerically zero; the step is empty");
    }
    let o0 = f.eval(x0)?;
    let predicted: IndexMap<&String, f64> = output_names
        .iter()
        .enumerate()
        .map(|(k, n)| (n, o0[k] + (0..x0.len()).map(|i| jac.matrix[(k, i)] * step.delta_x[i]).sum::<f64>()))
        .collect();
    let export = FactorsExport::new(&factors, pinv.retained.max(1), input_names.to_vec(), output_names.to_vec());
    let categorical: Vec<&String> = jac.categorical_columns.iter().map(|&i| &input_names[i]).collect();
    Ok(json!({
        "x": step.x,
        "delta_x": step.delta_x,
        "clamped": step.clamped,
        "degenerate": step.degenerate,
        "not_differentiated": categorical,
        "base_outputs": output_names.iter().zip(&o0).map(|(n, v)| (n.clone(), *v)).collect::<IndexMap<_, _>>(),
        "predicted": predicted,
        "factors": export,
    }))
}
