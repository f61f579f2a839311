//! Losses over outcomes and actions, post-processing, and omnipredictor
//! audits.

use serde_json::{json, Value};

use crate::audits::{audit_calibration, audit_multi_accuracy, Aggregate, AuditReport};
use crate::dist::{OutcomeDist, OutcomeSpace};
use crate::error::{Error, Result};
use crate::population::{HypothesisClass, PopulationInstance, Predictor};
use crate::scalar::Scalar;

/// `ℓ : 𝒪 × 𝒴 → [0, 1]`, stored as `table[outcome][action]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossFunction<T> {
    pub name: String,
    pub actions: Vec<String>,
    pub table: Vec<Vec<T>>,
}

impl<T: Scalar> LossFunction<T> {
    pub fn new(name: impl Into<String>, actions: Vec<String>, table: Vec<Vec<T>>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::invalid("loss needs at least one action"));
        }
        let mut sorted = actions.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != actions.len() {
            return Err(Error::invalid("loss actions must be distinct"));
        }
        for row in &table {
            if row.len() != actions.len() {
                return Err(Error::invalid("loss table rows must have one entry per action"));
            }
            if row.iter().any(|x| *x < T::zero() || *x > T::one()) {
                return Err(Error::invalid("loss values must lie in [0, 1]"));
            }
        }
        Ok(LossFunction {
            name: name.into(),
            actions,
            table,
        })
    }

    /// `ℓ(o, y) = 1[o ≠ y]` with the outcomes as actions.
    pub fn zero_one(outcomes: &OutcomeSpace) -> Self {
        let ell = outcomes.len();
        let table = (0..ell)
            .map(|o| (0..ell).map(|y| if o == y { T::zero() } else { T::one() }).collect())
            .collect();
        LossFunction {
            name: "zero-one".into(),
            actions: outcomes.labels().to_vec(),
            table,
        }
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }

    pub fn value(&self, o: usize, y: usize) -> &T {
        &self.table[o][y]
    }

    /// `E_{o∼v} ℓ(o, y)`.
    pub fn expected(&self, v: &OutcomeDist<T>, y: usize) -> T {
        v.weights()
            .iter()
            .zip(&self.table)
            .map(|(p, row)| p.clone() * row[y].clone())
            .sum()
    }

    /// `{name, actions, table: {outcome: {action: value}}}`.
    pub fn from_json(v: &Value, outcomes: &OutcomeSpace) -> Result<Self> {
        let name = v.get("name").and_then(Value::as_str).unwrap_or("loss").to_string();
        let actions: Vec<String> = v
            .get("actions")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("loss needs an \"actions\" array".into()))?
            .iter()
            .map(|a| a.as_str().map(String::from).ok_or_else(|| Error::Parse("actions must be strings".into())))
            .collect::<Result<_>>()?;
        let table = v
            .get("table")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Parse("loss needs a \"table\" object".into()))?;
        let mut rows = Vec::with_capacity(outcomes.len());
        for o in outcomes.labels() {
            let row = table
                .get(o)
                .and_then(Value::as_object)
                .ok_or_else(|| Error::Parse(format!("loss table has no row for outcome {o:?}")))?;
            let mut vals = Vec::with_capacity(actions.len());
            for a in &actions {
                let cell = row
                    .get(a)
                    .ok_or_else(|| Error::Parse(format!("loss table lacks ({o:?}, {a:?})")))?;
                let text = match cell {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    _ => return Err(Error::Parse("loss values must be numbers or decimal strings".into())),
                };
                vals.push(T::parse_decimal(&text)?);
            }
            rows.push(vals);
        }
        if table.len() != outcomes.len() {
            return Err(Error::Parse("loss table has rows for unknown outcomes".into()));
        }
        Self::new(name, actions, rows)
    }

    pub fn to_json(&self, outcomes: &OutcomeSpace) -> Value {
        let table: serde_json::Map<String, Value> = outcomes
            .labels()
            .iter()
            .zip(&self.table)
            .map(|(o, row)| {
                let cells: serde_json::Map<String, Value> = self
                    .actions
                    .iter()
                    .zip(row)
                    .map(|(a, x)| (a.clone(), Value::String(x.to_decimal())))
                    .collect();
                (o.clone(), Value::Object(cells))
            })
            .collect();
        json!({ "name": self.name, "actions": self.actions, "table": table })
    }

    fn check(&self, ell: usize) -> Result<()> {
        if self.table.len() != ell {
            return Err(Error::invalid(format!(
                "loss {:?} has {} outcome rows, population has {ell} outcomes",
                self.name,
                self.table.len()
            )));
        }
        Ok(())
    }
}

/// `argmin_y E_{o∼v} ℓ(o, y)`, the first action on ties.
pub fn post_process<T: Scalar>(loss: &LossFunction<T>, v: &OutcomeDist<T>) -> usize {
    let mut best = 0;
    let mut best_val = loss.expected(v, 0);
    for y in 1..loss.actions.len() {
        let val = loss.expected(v, y);
        if !best_val.le_tol(&val) {
            best = y;
            best_val = val;
        }
    }
    best
}

/// `E[ℓ(o*_i, y_i)]` and `E[ℓ(õ_i, y_i)]` for per-individual actions `y_i`.
pub fn expected_losses<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    loss: &LossFunction<T>,
    actions: &[usize],
) -> Result<(T, T)> {
    pred.check_against(pop)?;
    loss.check(pop.ell())?;
    let mut real = T::zero();
    let mut modeled = T::zero();
    for j in 0..pop.len() {
        let w = pop.weight(j);
        real += w.clone() * loss.expected(&pop.truth()[j], actions[j]);
        modeled += w.clone() * loss.expected(pred.get(j), actions[j]);
    }
    Ok((real, modeled))
}

fn hypothesis_actions<T: Scalar>(loss: &LossFunction<T>, class: &HypothesisClass) -> Result<Vec<Vec<usize>>> {
    class
        .hypotheses()
        .iter()
        .map(|h| {
            let map: Vec<usize> = h
                .range()
                .iter()
                .map(|r| {
                    loss.action_index(r).ok_or_else(|| {
                        Error::RangeMismatch(format!(
                            "hypothesis {:?} value {r:?} is not an action of loss {:?}",
                            h.name(),
                            loss.name
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            Ok(h.values().iter().map(|&v| map[v]).collect())
        })
        .collect()
}

/// `max_{ℓ,c} (E[ℓ(o*_i, p̃_i^ℓ)] − E[ℓ(o*_i, c_i)])`, clipped below at 0.
/// The breakdown keeps the signed gap of every `(ℓ, c)` pair.
pub fn omni_audit<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    losses: &[LossFunction<T>],
    class: &HypothesisClass,
) -> Result<AuditReport<T>> {
    class.check_against(pop)?;
    if losses.is_empty() {
        return Err(Error::invalid("need at least one loss"));
    }
    let mut breakdown = Vec::new();
    let mut best: Option<(T, String, String)> = None;
    for loss in losses {
        let post: Vec<usize> = pred.values().iter().map(|v| post_process(loss, v)).collect();
        let (own, _) = expected_losses(pop, pred, loss, &post)?;
        for (h, acts) in class.hypotheses().iter().zip(hypothesis_actions(loss, class)?) {
            let (theirs, _) = expected_losses(pop, pred, loss, &acts)?;
            let gap = own.clone() - theirs;
            if best.as_ref().map_or(true, |b| gap > b.0) {
                best = Some((gap.clone(), loss.name.clone(), h.name().to_string()));
            }
            breakdown.push((format!("{}|{}", loss.name, h.name()), gap));
        }
    }
    let (gap, l, c) = best.expect("at least one pair");
    Ok(AuditReport {
        kind: "omni".into(),
        value: T::max_of(gap, T::zero()),
        witness: json!({ "loss": l, "hypothesis": c }),
        breakdown,
        aggregate: Aggregate::Max,
    })
}

/// The omnipredictor gap against calibration plus multi-accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct OmniBound<T> {
    pub omni: T,
    pub calibration: T,
    pub multi_accuracy: T,
    /// `omni ≤ calibration + multi_accuracy`.
    pub holds: bool,
}

impl<T: Scalar> OmniBound<T> {
    pub fn to_json(&self) -> Value {
        json!({
            "omni": self.omni.to_decimal(),
            "calibration": self.calibration.to_decimal(),
            "multi_accuracy": self.multi_accuracy.to_decimal(),
            "holds": self.holds,
        })
    }
}

pub fn omni_bound_check<T: Scalar>(
    pop: &PopulationInstance<T>,
    pred: &Predictor<T>,
    losses: &[LossFunction<T>],
    class: &HypothesisClass,
) -> Result<OmniBound<T>> {
    let omni = omni_audit(pop, pred, losses, class)?.value;
    let calibration = audit_calibration(pop, pred)?.value;
    let multi_accuracy = audit_multi_accuracy(pop, pred, class)?.value;
    let holds = omni.le_tol(&(calibration.clone() + multi_accuracy.clone()));
    Ok(OmniBound {
        omni,
        calibration,
        multi_accuracy,
        holds,
    })
}
