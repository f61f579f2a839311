//! Instance, predictor and partition files.
//!
//! ```json
//! {
//!   "outcomes": ["0", "1"],
//!   "individuals": [{"id": "a", "weight": "0.5", "p_true": {"0": "0.5", "1": "0.5"}}],
//!   "hypotheses": [{"name": "c", "range": ["0", "1"], "values": {"a": "1"}}],
//!   "predictor": [{"id": "a", "p": {"0": "1", "1": "0"}}]
//! }
//! ```
//!
//! Numbers are decimal strings (`"0.25"`, `"1/3"`); plain JSON numbers are
//! accepted on input. Missing outcomes in a distribution have mass zero.

use serde_json::{json, Map, Value};

use regfair::dist::{OutcomeDist, OutcomeSpace};
use regfair::population::{Hypothesis, HypothesisClass, PopulationInstance, Predictor};
use regfair::{Error, Result, Scalar};

/// A parsed instance file.
pub struct Instance<T: Scalar> {
    pub pop: PopulationInstance<T>,
    /// `None` when the file lists no hypotheses.
    pub class: Option<HypothesisClass>,
    pub predictor: Option<Predictor<T>>,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn field<'a>(v: &'a Value, key: &str, what: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| parse_err(format!("{what} needs a {key:?} field")))
}

fn array<'a>(v: &'a Value, key: &str, what: &str) -> Result<&'a Vec<Value>> {
    field(v, key, what)?
        .as_array()
        .ok_or_else(|| parse_err(format!("{what}: {key:?} must be an array")))
}

fn text(v: &Value, what: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(parse_err(format!("{what} must be a string or number"))),
    }
}

fn number<T: Scalar>(v: &Value, what: &str) -> Result<T> {
    T::parse_decimal(&text(v, what)?)
}

fn dist<T: Scalar>(v: &Value, outcomes: &OutcomeSpace, what: &str) -> Result<OutcomeDist<T>> {
    let obj = v
        .as_object()
        .ok_or_else(|| parse_err(format!("{what} must map outcomes to weights")))?;
    let mut w = vec![T::zero(); outcomes.len()];
    for (label, x) in obj {
        let o = outcomes
            .index_of(label)
            .ok_or_else(|| parse_err(format!("{what}: unknown outcome {label:?}")))?;
        w[o] = number(x, what)?;
    }
    OutcomeDist::new(w)
}

fn dist_json<T: Scalar>(d: &OutcomeDist<T>, outcomes: &OutcomeSpace) -> Value {
    let m: Map<String, Value> = outcomes
        .labels()
        .iter()
        .zip(d.weights())
        .map(|(o, w)| (o.clone(), Value::String(w.to_decimal())))
        .collect();
    Value::Object(m)
}

pub fn parse_instance<T: Scalar>(v: &Value) -> Result<Instance<T>> {
    let labels = array(v, "outcomes", "instance")?
        .iter()
        .map(|o| text(o, "outcome label"))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = OutcomeSpace::new(labels)?;
    let mut ids = Vec::new();
    let mut weights = Vec::new();
    let mut truth = Vec::new();
    for (i, ind) in array(v, "individuals", "instance")?.iter().enumerate() {
        let what = format!("individual {i}");
        ids.push(text(field(ind, "id", &what)?, "id")?);
        weights.push(number(field(ind, "weight", &what)?, "weight")?);
        truth.push(dist(field(ind, "p_true", &what)?, &outcomes, &what)?);
    }
    let pop = PopulationInstance::new(ids, weights, truth, outcomes)?;
    let index = |id: &str, what: &str| {
        pop.index_of(id)
            .ok_or_else(|| parse_err(format!("{what}: unknown individual {id:?}")))
    };

    let hyps = match v.get("hypotheses") {
        None | Some(Value::Null) => Vec::new(),
        Some(_) => array(v, "hypotheses", "instance")?.clone(),
    };
    let mut list = Vec::with_capacity(hyps.len());
    for (i, h) in hyps.iter().enumerate() {
        let what = format!("hypothesis {i}");
        let name = text(field(h, "name", &what)?, "name")?;
        let range = array(h, "range", &what)?
            .iter()
            .map(|r| text(r, "range label"))
            .collect::<Result<Vec<_>>>()?;
        let vals = field(h, "values", &what)?
            .as_object()
            .ok_or_else(|| parse_err(format!("{what}: values must map ids to labels")))?;
        let mut values = vec![None; pop.len()];
        for (id, label) in vals {
            let j = index(id, &what)?;
            let label = text(label, "hypothesis value")?;
            let y = range
                .iter()
                .position(|r| *r == label)
                .ok_or_else(|| parse_err(format!("{what}: value {label:?} is not in its range")))?;
            values[j] = Some(y);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(j, y)| y.ok_or_else(|| parse_err(format!("{what}: no value for {:?}", pop.ids()[j]))))
            .collect::<Result<Vec<_>>>()?;
        list.push(Hypothesis::new(name, range, values)?);
    }
    let class = if list.is_empty() {
        None
    } else {
        Some(HypothesisClass::new(list, false)?)
    };

    let predictor = match v.get("predictor") {
        None | Some(Value::Null) => None,
        Some(p) => Some(parse_predictor(p, &pop)?),
    };
    Ok(Instance { pop, class, predictor })
}

/// `[{id, p: {outcome: weight}}]`, one entry per individual.
pub fn parse_predictor<T: Scalar>(v: &Value, pop: &PopulationInstance<T>) -> Result<Predictor<T>> {
    let entries = v
        .as_array()
        .ok_or_else(|| parse_err("predictor must be an array of {id, p}"))?;
    let mut values = vec![None; pop.len()];
    for (i, e) in entries.iter().enumerate() {
        let what = format!("predictor entry {i}");
        let id = text(field(e, "id", &what)?, "id")?;
        let j = pop
            .index_of(&id)
            .ok_or_else(|| parse_err(format!("{what}: unknown individual {id:?}")))?;
        values[j] = Some(dist(field(e, "p", &what)?, pop.outcomes(), &what)?);
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(j, d)| d.ok_or_else(|| parse_err(format!("predictor has no entry for {:?}", pop.ids()[j]))))
        .collect::<Result<Vec<_>>>()?;
    let p = Predictor::new(values)?;
    p.check_against(pop)?;
    Ok(p)
}

pub fn predictor_json<T: Scalar>(pred: &Predictor<T>, pop: &PopulationInstance<T>) -> Value {
    Value::Array(
        pop.ids()
            .iter()
            .zip(pred.values())
            .map(|(id, d)| json!({ "id": id, "p": dist_json(d, pop.outcomes()) }))
            .collect(),
    )
}

pub fn instance_json<T: Scalar>(
    pop: &PopulationInstance<T>,
    class: Option<&HypothesisClass>,
    pred: Option<&Predictor<T>>,
) -> Value {
    let individuals: Vec<Value> = (0..pop.len())
        .map(|j| {
            json!({
                "id": pop.ids()[j],
                "weight": pop.weight(j).to_decimal(),
                "p_true": dist_json(&pop.truth()[j], pop.outcomes()),
            })
        })
        .collect();
    let hypotheses: Vec<Value> = class
        .map(|c| {
            c.hypotheses()
                .iter()
                .map(|h| {
                    let values: Map<String, Value> = pop
                        .ids()
                        .iter()
                        .enumerate()
                        .map(|(j, id)| (id.clone(), Value::String(h.label(j).to_string())))
                        .collect();
                    json!({ "name": h.name(), "range": h.range(), "values": values })
                })
                .collect()
        })
        .unwrap_or_default();
    let mut out = json!({
        "outcomes": pop.outcomes().labels(),
        "individuals": individuals,
        "hypotheses": hypotheses,
    });
    if let Some(p) = pred {
        out["predictor"] = predictor_json(p, pop);
    }
    out
}
