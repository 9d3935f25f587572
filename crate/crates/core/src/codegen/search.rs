// Unknown-status search. Slots are grouped into configuration classes by the
// two sharing rules: operators of the same unit with identical known
// parameters share their operator-scoped slots, and operators holding the
// same kind of data share data-scoped slots. Candidates are enumerated over
// classes in lexicographic order and the first one whose outputs stay within
// delta of the oracle on every verification input is accepted.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::graph::ModelBundle;
use crate::harness::{output_diff, verification_inputs, VerifyConfig};
use crate::interpreter::{ExecutablePlan, InterpError, StepSpec, TensorData, WeightTensors};
use crate::kernels::{OpStatus, StatusScope};

use super::{CodegenError, ConfigAnalysis, ExtractionResult, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassSlot {
    pub name: String,
    pub domain: Vec<String>,
    pub value_changing: bool,
}

/// A set of (operator, unknown) pairs that must take the same values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigurationClass {
    pub key: String,
    pub members: Vec<usize>,
    pub slots: Vec<ClassSlot>,
}

impl ConfigurationClass {
    pub fn size(&self) -> u64 {
        self.slots
            .iter()
            .fold(1u64, |acc, s| acc.saturating_mul(s.domain.len() as u64))
    }
}

/// Chosen value per (class, unknown name), plus the per-operator view.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatusAssignment {
    pub values: BTreeMap<String, BTreeMap<String, String>>,
    pub per_op: Vec<OpStatus>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub classes: Vec<ConfigurationClass>,
    pub assignment: StatusAssignment,
    pub candidates_evaluated: u64,
    /// Product over classes of their domain sizes.
    pub class_product: u64,
    /// Product over operators of their own domain sizes, without sharing.
    pub unpruned_candidates: u64,
    /// Largest per-input diff of the accepted candidate.
    pub max_diff: f64,
}

fn class_key(scope: StatusScope, unit_key: &str, params: &str) -> String {
    match scope {
        StatusScope::Operator => format!("op:{unit_key}|{params}"),
        StatusScope::Data(tag) => format!("data:{tag}"),
    }
}

pub fn build_classes(extraction: &ExtractionResult, analysis: &ConfigAnalysis) -> Vec<ConfigurationClass> {
    let mut classes: BTreeMap<String, ConfigurationClass> = BTreeMap::new();
    for (index, (unit, params)) in extraction.units.iter().zip(&analysis.params).enumerate() {
        for slot in &unit.status_schema {
            let key = class_key(slot.scope, &unit.key.to_string(), &params.canonical());
            let class = classes.entry(key.clone()).or_insert_with(|| ConfigurationClass {
                key,
                members: Vec::new(),
                slots: Vec::new(),
            });
            if class.members.last() != Some(&index) {
                class.members.push(index);
            }
            let domain: Vec<String> = slot.domain.iter().map(|v| v.to_string()).collect();
            match class.slots.iter_mut().find(|s| s.name == slot.name) {
                Some(existing) => {
                    existing.domain.retain(|v| domain.contains(v));
                    existing.value_changing |= slot.value_changing;
                }
                None => class.slots.push(ClassSlot {
                    name: slot.name.to_string(),
                    domain,
                    value_changing: slot.value_changing,
                }),
            }
        }
    }
    let mut out: Vec<ConfigurationClass> = classes.into_values().collect();
    for c in &mut out {
        c.slots.sort_by(|a, b| a.name.cmp(&b.name));
    }
    out
}

fn per_op_status(
    extraction: &ExtractionResult,
    analysis: &ConfigAnalysis,
    values: &BTreeMap<String, BTreeMap<String, String>>,
) -> Vec<OpStatus> {
    extraction
        .units
        .iter()
        .zip(&analysis.params)
        .map(|(unit, params)| {
            unit.status_schema
                .iter()
                .map(|slot| {
                    let key = class_key(slot.scope, &unit.key.to_string(), &params.canonical());
                    (slot.name.to_string(), values[&key][slot.name].clone())
                })
                .collect()
        })
        .collect()
}

/// Largest per-input diff of a candidate, stopping at the first input that
/// exceeds `delta`. `None` if the units reject the status.
fn evaluate(
    bundle: &ModelBundle,
    extraction: &ExtractionResult,
    analysis: &ConfigAnalysis,
    weights: &Arc<WeightTensors>,
    statuses: &[OpStatus],
    inputs: &[Vec<TensorData>],
    expected: &[Vec<TensorData>],
    delta: f64,
) -> Result<Option<f64>> {
    let specs = extraction
        .units
        .iter()
        .zip(&analysis.params)
        .zip(statuses)
        .map(|((unit, params), status)| StepSpec {
            unit: unit.clone(),
            params: params.clone(),
            status: status.clone(),
        })
        .collect();
    let plan = match ExecutablePlan::assemble(&bundle.graph, weights.clone(), specs, extraction.device) {
        Ok(plan) => plan,
        Err(InterpError::Op { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut worst = 0.0f64;
    for (x, want) in inputs.iter().zip(expected) {
        let got = plan.invoke(x)?;
        let d = output_diff(want, &got).map_err(|e| CodegenError::Manifest(e.to_string()))?;
        let d = if d.is_nan() { f64::INFINITY } else { d };
        worst = worst.max(d);
        if worst > delta {
            break;
        }
    }
    Ok(Some(worst))
}

pub fn search_status(
    bundle: &ModelBundle,
    extraction: &ExtractionResult,
    analysis: &ConfigAnalysis,
    oracle: &ExecutablePlan,
    cfg: &VerifyConfig,
) -> Result<SearchOutcome> {
    let classes = build_classes(extraction, analysis);
    let class_product = classes.iter().fold(1u64, |acc, c| acc.saturating_mul(c.size()));
    let unpruned_candidates = extraction
        .units
        .iter()
        .flat_map(|u| &u.status_schema)
        .fold(1u64, |acc, s| acc.saturating_mul(s.domain.len() as u64));

    let inputs = verification_inputs(&oracle.input_info(), cfg);
    let expected = inputs
        .iter()
        .map(|x| oracle.invoke(x))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let weights = Arc::new(WeightTensors::decode(bundle)?);

    // One odometer digit per (class, slot); the last digit turns fastest.
    let digits: Vec<(&ConfigurationClass, &ClassSlot)> = classes
        .iter()
        .flat_map(|c| c.slots.iter().map(move |s| (c, s)))
        .collect();
    let mut counter = vec![0usize; digits.len()];
    let mut evaluated = 0u64;
    let mut best = f64::INFINITY;
    if digits.iter().any(|(_, s)| s.domain.is_empty()) {
        return Err(CodegenError::SearchExhausted {
            candidates: 0,
            delta: cfg.delta,
            best_diff: best,
        });
    }

    loop {
        let mut values: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for ((class, slot), &i) in digits.iter().zip(&counter) {
            values
                .entry(class.key.clone())
                .or_default()
                .insert(slot.name.clone(), slot.domain[i].clone());
        }
        let per_op = per_op_status(extraction, analysis, &values);
        evaluated += 1;
        if let Some(diff) = evaluate(
            bundle, extraction, analysis, &weights, &per_op, &inputs, &expected, cfg.delta,
        )? {
            if diff <= cfg.delta {
                return Ok(SearchOutcome {
                    classes,
                    assignment: StatusAssignment { values, per_op },
                    candidates_evaluated: evaluated,
                    class_product,
                    unpruned_candidates,
                    max_diff: diff,
                });
            }
            best = best.min(diff);
        }

        let mut pos = digits.len();
        loop {
            if pos == 0 {
                return Err(CodegenError::SearchExhausted {
                    candidates: evaluated,
                    delta: cfg.delta,
                    best_diff: best,
                });
            }
            pos -= 1;
            counter[pos] += 1;
            if counter[pos] < digits[pos].1.domain.len() {
                break;
            }
            counter[pos] = 0;
        }
    }
}
