//! Ground-truth models and the bundled synthetic building-energy model.

use std::io::{BufRead, Write};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{DecisionVector, DesignSpace, PerformanceVector, Value, VariableSpec};

/// A deterministic map from decision vectors to performance vectors.
pub trait GroundTruthModel: Send + Sync {
    fn space(&self) -> &DesignSpace;

    fn evaluate(&self, x: &DecisionVector) -> Result<PerformanceVector>;

    /// Identity recorded in dataset provenance.
    fn identity(&self) -> String;
}

/// Evaluates every vector, in parallel, preserving input order. The first
/// failing element (by index) is reported.
pub fn evaluate_batch<M: GroundTruthModel + ?Sized>(
    model: &M,
    xs: &[DecisionVector],
) -> Result<Vec<PerformanceVector>> {
    let results: Vec<Result<PerformanceVector>> = xs.par_iter().map(|x| model.evaluate(x)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Batch {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

pub const HEATING_DEGREE_HOURS: f64 = 70_000.0; // K·h/y
pub const PRIMARY_ENERGY_FACTOR: f64 = 1.45;
pub const SOLAR_GAIN_FACTOR: f64 = 0.35;
pub const PV_PERFORMANCE_RATIO: f64 = 0.75;
pub const REFERENCE_IRRADIATION: f64 = 1000.0; // kWh/m²y
/// Heating-season irradiation on a south façade, kWh/m². Scaled by the
/// orientation factor to give the window gain irradiation.
pub const FACADE_HEATING_IRRADIATION: f64 = 100.0;

pub const ORIENTATIONS: [&str; 4] = ["N", "E", "S", "W"];
pub const ORIENTATION_FACTORS: [f64; 4] = [0.4, 0.7, 1.0, 0.7];
pub const SYSTEM_TYPES: [&str; 3] = ["gas_boiler", "heat_pump", "district"];
/// Seasonal efficiency (or COP) per system type.
pub const SYSTEM_EFFICIENCIES: [f64; 3] = [0.9, 2.5, 1.25];

pub const DUMMY_VARIABLES: [&str; 6] = ["dummy_1", "dummy_2", "dummy_3", "dummy_4", "dummy_5", "dummy_6"];

// decision vector layout
const A_FLOOR: usize = 0;
const A_ROOF: usize = 1;
const A_WALL: usize = 2;
const A_WIN: usize = 3;
const U_ROOF: usize = 4;
const U_WALL: usize = 5;
const U_FLOOR: usize = 6;
const U_WIN: usize = 7;
const ORIENTATION: usize = 8;
const INFILTRATION: usize = 9;
const SYSTEM: usize = 10;
const AUX: usize = 11;
const AREA_PV: usize = 12;
const P_PV: usize = 13;

/// Closed-form dwelling model with 20 inputs (14 physical, 6 inert dummies)
/// and three BENG-style outputs.
///
/// ```text
/// loss     = (U_roof·A_roof + U_wall·A_wall + U_floor·A_floor + U_win·A_win)·H/1000
/// gains    = g·A_win·I_facade·f_orient
/// demand   = max(loss − gains, 0)·(1 + infiltration_rate)
/// beng1    = demand / A_floor
/// pv       = Area_PV·(P_PV/1000)·I·r_pv / A_floor
/// cons     = beng1/η(system_type) + aux
/// beng2    = max(cons·p_e − pv, 0)
/// beng3    = 100·pv/(pv + cons)          (0 when pv = 0)
/// ```
///
/// The roster ranges keep `pv < cons·p_e`, so all three outputs stay
/// strictly positive and relative error metrics are defined everywhere.
#[derive(Clone, Debug)]
pub struct SyntheticEnergyModel {
    space: DesignSpace,
}

impl Default for SyntheticEnergyModel {
    fn default() -> Self {
        Self::new()
    }
}

impl SyntheticEnergyModel {
    pub fn new() -> Self {
        let mut decision = vec![
            VariableSpec::continuous("A_floor", 100.0, 200.0, "m²"),
            VariableSpec::continuous("A_roof", 55.0, 65.0, "m²"),
            VariableSpec::continuous("A_wall", 130.0, 150.0, "m²"),
            VariableSpec::continuous("A_win", 15.0, 25.0, "m²"),
            VariableSpec::continuous("U_roof", 0.15, 0.25, "W/m²K"),
            VariableSpec::continuous("U_wall", 0.2, 1.0, "W/m²K"),
            VariableSpec::continuous("U_floor", 0.15, 0.25, "W/m²K"),
            VariableSpec::continuous("U_win", 1.0, 1.6, "W/m²K"),
            VariableSpec::categorical("orientation", ORIENTATIONS),
            VariableSpec::continuous("infiltration_rate", 0.0, 0.6, "-"),
            VariableSpec::categorical("system_type", SYSTEM_TYPES),
            VariableSpec::continuous("aux", 30.0, 40.0, "kWh/m²y"),
            VariableSpec::continuous("Area_PV", 10.0, 40.0, "m²"),
            VariableSpec::continuous("P_PV", 100.0, 200.0, "W/m²"),
        ];
        decision.extend(DUMMY_VARIABLES.iter().map(|n| VariableSpec::continuous(*n, 0.0, 1.0, "-")));
        let performance = vec![
            VariableSpec::continuous("beng1", 0.0, 1000.0, "kWh/m²y"),
            VariableSpec::continuous("beng2", 0.0, 1000.0, "kWh/m²y"),
            VariableSpec::continuous("beng3", 0.0, 100.0, "%"),
        ];
        Self {
            space: DesignSpace::new(decision, performance).expect("static roster is valid"),
        }
    }

    /// A mid-range dwelling used as a golden regression fixture.
    pub fn reference_dwelling(&self) -> DecisionVector {
        let mut values: Vec<Value> = vec![
            120.0.into(),
            60.0.into(),
            140.0.into(),
            20.0.into(),
            0.2.into(),
            0.5.into(),
            0.2.into(),
            1.2.into(),
            "S".into(),
            0.3.into(),
            "heat_pump".into(),
            32.0.into(),
            25.0.into(),
            150.0.into(),
        ];
        values.extend(std::iter::repeat_n(Value::Real(0.5), DUMMY_VARIABLES.len()));
        DecisionVector::new(values)
    }

    fn compute(&self, x: &DecisionVector) -> [f64; 3] {
        let r = |i: usize| x.values[i].as_real().expect("validated continuous");
        let cat = |i: usize| {
            let label = x.values[i].as_label().expect("validated categorical");
            self.space.decision_specs[i].category_index(label).expect("validated")
        };
        let loss = (r(U_ROOF) * r(A_ROOF) + r(U_WALL) * r(A_WALL) + r(U_FLOOR) * r(A_FLOOR) + r(U_WIN) * r(A_WIN))
            * HEATING_DEGREE_HOURS
            / 1000.0;
        let gains = SOLAR_GAIN_FACTOR * r(A_WIN) * FACADE_HEATING_IRRADIATION * ORIENTATION_FACTORS[cat(ORIENTATION)];
        let demand = (loss - gains).max(0.0) * (1.0 + r(INFILTRATION));
        let a_floor = r(A_FLOOR);
        let beng1 = demand / a_floor;
        let pv = r(AREA_PV) * (r(P_PV) / 1000.0) * REFERENCE_IRRADIATION * PV_PERFORMANCE_RATIO / a_floor;
        let consumption = beng1 / SYSTEM_EFFICIENCIES[cat(SYSTEM)] + r(AUX);
        let beng2 = (consumption * PRIMARY_ENERGY_FACTOR - pv).max(0.0);
        let beng3 = if pv == 0.0 { 0.0 } else { 100.0 * pv / (pv + consumption) };
        [beng1, beng2, beng3]
    }
}

impl GroundTruthModel for SyntheticEnergyModel {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn evaluate(&self, x: &DecisionVector) -> Result<PerformanceVector> {
        self.space.validate_decision(x)?;
        let out = self.compute(x);
        assert!(
            out.iter().all(|v| v.is_finite()),
            "synthetic model produced a non-finite output for a valid input"
        );
        Ok(PerformanceVector::new(out.to_vec()))
    }

    fn identity(&self) -> String {
        "synthetic-energy-v1".to_string()
    }
}

/// Adapts a function on the unit cube into a [`GroundTruthModel`] over a
/// space whose decision variables are all continuous.
pub struct UnitCubeModel<F> {
    space: DesignSpace,
    name: String,
    f: F,
}

impl<F> UnitCubeModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(name: impl Into<String>, space: DesignSpace, f: F) -> Self {
        Self {
            space,
            name: name.into(),
            f,
        }
    }
}

impl<F> GroundTruthModel for UnitCubeModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn evaluate(&self, x: &DecisionVector) -> Result<PerformanceVector> {
        let xs: Vec<f64> = x
            .values
            .iter()
            .map(|v| v.as_real().ok_or_else(|| Error::InvalidSpace("UnitCubeModel needs real inputs".into())))
            .collect::<Result<_>>()?;
        self.space.validate_decision(x)?;
        let o = PerformanceVector::new((self.f)(&xs));
        self.space.validate_performance(&o)?;
        Ok(o)
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}

/// One JSON-lines record: `{"x": {...}, "o": {...}}`. Sample files written
/// before simulation omit `o`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleRecord {
    pub x: IndexMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o: Option<IndexMap<String, f64>>,
}

pub fn write_decisions<W: Write>(mut w: W, space: &DesignSpace, xs: &[DecisionVector]) -> Result<()> {
    for x in xs {
        let rec = SampleRecord {
            x: space.decision_to_map(x),
            o: None,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads decision vectors from JSON-lines, ignoring any `o` field and any
/// line that is not a sample record (e.g. a provenance header).
pub fn read_decisions<R: BufRead>(r: R, space: &DesignSpace) -> Result<Vec<DecisionVector>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)?;
        if value.get("x").is_none() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_value(value)?;
        out.push(space.decision_from_map(&rec.x)?);
    }
    Ok(out)
}
