//! Paired input-output samples with provenance, persisted as JSON-lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{evaluate_batch, GroundTruthModel, SampleRecord};
use crate::space::{DecisionVector, DesignSpace, PerformanceVector, Value};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub simulator: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub x: DecisionVector,
    pub o: PerformanceVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub space: DesignSpace,
    pub rows: Vec<Row>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Header {
    provenance: Provenance,
}

impl Dataset {
    pub fn new(space: DesignSpace, rows: Vec<Row>, provenance: Provenance) -> Result<Self> {
        for row in &rows {
            space.validate_decision(&row.x)?;
            space.validate_performance(&row.o)?;
        }
        Ok(Self {
            space,
            rows,
            provenance,
        })
    }

    /// Runs the model on every decision vector.
    pub fn simulate<M: GroundTruthModel + ?Sized>(model: &M, xs: Vec<DecisionVector>, config_hash: &str) -> Result<Self> {
        let os = evaluate_batch(model, &xs)?;
        let rows = xs.into_iter().zip(os).map(|(x, o)| Row { x, o }).collect();
        Ok(Self {
            space: model.space().clone(),
            rows,
            provenance: Provenance {
                config_hash: config_hash.to_string(),
                simulator: model.identity(),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values of one decision variable, in row order.
    pub fn decision_values(&self, name: &str) -> Result<Vec<Value>> {
        let i = self.space.decision_index(name)?;
        Ok(self.rows.iter().map(|r| r.x.values[i].clone()).collect())
    }

    /// Values of a continuous decision or a performance variable.
    pub fn real_column(&self, name: &str) -> Result<Vec<f64>> {
        if let Ok(k) = self.space.output_index(name) {
            return Ok(self.rows.iter().map(|r| r.o.values[k]).collect());
        }
        let i = self.space.decision_index(name)?;
        self.rows
            .iter()
            .map(|r| {
                r.x.values[i].as_real().ok_or_else(|| Error::OutOfRange {
                    name: name.to_string(),
                    detail: "categorical variable has no real column".into(),
                })
            })
            .collect()
    }

    /// A dataset over a subset of rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            space: self.space.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// JSON-lines: a provenance header line, then one `{"x", "o"}` object per sample.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(
            &mut w,
            &Header {
                provenance: self.provenance.clone(),
            },
        )?;
        w.write_all(b"\n")?;
        for row in &self.rows {
            let rec = SampleRecord {
                x: self.space.decision_to_map(&row.x),
                o: Some(self.space.performance_to_map(&row.o)),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, space: &DesignSpace) -> Result<Self> {
        let mut provenance = Provenance::default();
        let mut rows = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line)?;
            if value.get("provenance").is_some() && value.get("x").is_none() {
                provenance = serde_json::from_value::<Header>(value)?.provenance;
                continue;
            }
            let rec: SampleRecord = serde_json::from_value(value)?;
            let o = rec
                .o
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: sample has no outputs", lineno + 1)))?;
            rows.push(Row {
                x: space.decision_from_map(&rec.x)?,
                o: space.performance_from_map(&o)?,
            });
        }
        Ok(Self {
            space: space.clone(),
            rows,
            provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, space: &DesignSpace) -> Result<Self> {
        Self::read_jsonl(BufReader::new(File::open(path)?), space)
    }
}
