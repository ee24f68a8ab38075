//! The end-to-end workflow: sample, simulate, screen, bin and train,
//! validate. Every artifact carries the hash of the config that made it.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bbn::{BbnModel, BbnStructure, CptFallback, FitConfig};
use crate::dataset::{Dataset, Provenance};
use crate::discretize::{BinningMethod, DiscretizationScheme, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::sensitivity::{estimate_indices, saltelli_matrices, select_top_k, ScreeningReport, SensitivityResult};
use crate::simulator::{evaluate_batch, GroundTruthModel, SampleRecord, SyntheticEnergyModel};
use crate::sobol::SamplePlan;
use crate::space::DecisionVector;
use crate::validation::{cross_validate, make_folds, CvConfig, ValidationReport};

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const SENSITIVITY_FILE: &str = "sensitivity.json";
pub const MODEL_FILE: &str = "model.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const VALIDATION_TABLE_FILE: &str = "validation.txt";

/// Rows per screened input below which CPTs are likely too sparse.
pub const SPARSITY_ROWS_PER_INPUT: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_samples: usize,
    pub top_k: usize,
    pub bins: usize,
    pub binning: BinningMethod,
    pub alpha: f64,
    pub fallback: CptFallback,
    pub folds: usize,
    pub seed: u64,
    pub sensitivity_n_base: usize,
    pub simulator: String,
    /// Where artifacts go. Not part of the config hash.
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            top_k: 6,
            bins: DEFAULT_BINS,
            binning: BinningMethod::EqualFrequency,
            alpha: 1.0,
            fallback: CptFallback::Backoff { min_count: 5 },
            folds: 10,
            seed: 20240601,
            sensitivity_n_base: 1024,
            simulator: "synthetic-energy".into(),
            out_dir: PathBuf::from("artifacts"),
        }
    }
}

impl PipelineConfig {
    /// Reads a `.toml` or `.json` config; missing fields take defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Toml(e.to_string()))?,
            _ => serde_json::from_str(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [
            ("n_samples", self.n_samples),
            ("top_k", self.top_k),
            ("sensitivity_n_base", self.sensitivity_n_base),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.bins < 2 {
            return bad(format!("bins = {} must be at least 2", self.bins));
        }
        if self.folds < 2 {
            return bad(format!("folds = {} must be at least 2", self.folds));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {} must be ≥ 0", self.alpha));
        }
        if let CptFallback::Backoff { min_count: 0 } = self.fallback {
            return bad("backoff min_count must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of every field except `out_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("out_dir");
        }
        hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            alpha: self.alpha,
            fallback: self.fallback,
        }
    }
}

/// JSON with object keys sorted at every level.
fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&m[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

pub fn simulator_by_name(name: &str) -> Result<Box<dyn GroundTruthModel>> {
    match name {
        "synthetic-energy" => Ok(Box::new(SyntheticEnergyModel::new())),
        other => Err(Error::InvalidConfig(format!("unknown simulator `{other}`"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityArtifact {
    pub config_hash: String,
    pub sensitivity: SensitivityResult,
    pub screening: ScreeningReport,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub config_hash: String,
    pub dataset: Dataset,
    pub sensitivity: SensitivityResult,
    pub screening: ScreeningReport,
    pub model: BbnModel,
    pub validation: ValidationReport,
}

fn step<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Step {
        step: name,
        source: Box::new(e),
    })
}

/// Step 1: Sobol design over the simulator's decision space.
pub fn sample(cfg: &PipelineConfig, model: &dyn GroundTruthModel) -> Result<Vec<DecisionVector>> {
    SamplePlan::new(cfg.n_samples, model.space().clone())?.sample()
}

/// Step 3: Saltelli estimates on the simulator and top-k screening.
pub fn screen(cfg: &PipelineConfig, model: &dyn GroundTruthModel) -> Result<(SensitivityResult, ScreeningReport)> {
    let space = model.space();
    let plan = saltelli_matrices(space.n_decisions(), cfg.sensitivity_n_base)?;
    let xs = plan
        .points()
        .iter()
        .map(|u| space.denormalize(u))
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<Vec<f64>> = evaluate_batch(model, &xs)?.into_iter().map(|o| o.values).collect();
    let result = estimate_indices(&plan, &outputs, &space.decision_names(), &space.output_names())?;
    let mut report = select_top_k(&result, cfg.top_k)?;
    report.approximate_variables = space
        .decision_specs
        .iter()
        .filter(|s| s.is_categorical())
        .map(|s| s.name.clone())
        .collect();
    Ok((result, report))
}

/// Step 4: bins for the screened inputs and every output, then the fit.
pub fn train(cfg: &PipelineConfig, ds: &Dataset, inputs: &[String]) -> Result<BbnModel> {
    if cfg.n_samples < inputs.len() * SPARSITY_ROWS_PER_INPUT {
        log::warn!(
            "{} samples for {} inputs: CPTs will be sparse (fewer than {SPARSITY_ROWS_PER_INPUT} rows per input)",
            cfg.n_samples,
            inputs.len()
        );
    }
    let outputs = ds.space.output_names();
    let nodes: Vec<String> = inputs.iter().chain(&outputs).cloned().collect();
    let scheme = DiscretizationScheme::fit_dataset(ds, &nodes, cfg.bins, cfg.binning)?;
    let structure = BbnStructure::complete_bipartite(inputs.to_vec(), outputs)?;
    let mut model = BbnModel::fit_dataset(ds, structure, scheme, cfg.fit_config())?;
    model.metadata.config_hash = ds.provenance.config_hash.clone();
    model.metadata.space = Some(ds.space.clone());
    Ok(model)
}

/// Step 5: k-fold cross-validation of the same recipe.
pub fn validate(cfg: &PipelineConfig, ds: &Dataset, inputs: &[String]) -> Result<ValidationReport> {
    let plan = make_folds(ds.len(), cfg.folds, cfg.seed)?;
    let cv = CvConfig {
        inputs: inputs.to_vec(),
        bins: cfg.bins,
        method: cfg.binning,
        fit: cfg.fit_config(),
    };
    cross_validate(ds, &cv, &plan)
}

pub fn write_samples(path: &Path, ds_space: &crate::space::DesignSpace, xs: &[DecisionVector], provenance: &Provenance) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, &serde_json::json!({ "provenance": provenance }))?;
    w.write_all(b"\n")?;
    for x in xs {
        let rec = SampleRecord {
            x: ds_space.decision_to_map(x),
            o: None,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Runs steps 1–5, writing each artifact under `cfg.out_dir` as soon as it
/// exists. A failing step aborts with its name; earlier artifacts stay.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    step("config", cfg.validate())?;
    let hash = cfg.hash();
    let out = &cfg.out_dir;
    step("config", fs::create_dir_all(out).map_err(Error::from))?;
    let model_fn = step("config", simulator_by_name(&cfg.simulator))?;
    let provenance = Provenance {
        config_hash: hash.clone(),
        simulator: model_fn.identity(),
    };
    log::info!("pipeline {hash}: {} samples, top {}", cfg.n_samples, cfg.top_k);

    let xs = step("sample", sample(cfg, model_fn.as_ref()))?;
    step("sample", write_samples(&out.join(SAMPLES_FILE), model_fn.space(), &xs, &provenance))?;

    let dataset = step("simulate", Dataset::simulate(model_fn.as_ref(), xs, &hash))?;
    step("simulate", dataset.save(&out.join(DATASET_FILE)))?;

    let (sensitivity, screening) = step("sensitivity", screen(cfg, model_fn.as_ref()))?;
    let artifact = SensitivityArtifact {
        config_hash: hash.clone(),
        sensitivity,
        screening,
    };
    step("sensitivity", write_json(&out.join(SENSITIVITY_FILE), &artifact))?;
    let SensitivityArtifact {
        sensitivity, screening, ..
    } = artifact;
    log::info!("screened inputs: {}", screening.selected.join(", "));

    let mut model = step("train", train(cfg, &dataset, &screening.selected))?;
    model.metadata.screening = Some(screening.clone());
    model.metadata.sensitivity = Some(sensitivity.clone());
    step("train", save_model(&model, &out.join(MODEL_FILE)))?;

    let validation = step("validate", validate(cfg, &dataset, &screening.selected))?;
    step("validate", write_json(&out.join(VALIDATION_FILE), &validation))?;
    step(
        "validate",
        fs::write(out.join(VALIDATION_TABLE_FILE), validation.to_table()).map_err(Error::from),
    )?;

    Ok(PipelineOutput {
        config_hash: hash,
        dataset,
        sensitivity,
        screening,
        model,
        validation,
    })
}

pub fn save_model(model: &BbnModel, path: &Path) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: &Path) -> Result<BbnModel> {
    BbnModel::load(path)
}
