//! Online update rules over the outcome simplex and their regret.
//!
//! Both rules run in `f64`: the multiplicative rule is transcendental, so
//! exactness is recovered downstream by auditing, not here.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    /// Projected gradient descent, Euclidean mirror map.
    Pgd,
    /// Multiplicative weights, entropic mirror map.
    Mwu,
}

impl std::str::FromStr for UpdateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgd" => Ok(UpdateKind::Pgd),
            "mwu" => Ok(UpdateKind::Mwu),
            other => Err(Error::Parse(format!("unknown update rule {other:?}"))),
        }
    }
}

/// A step size, starting point and mirror map.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateRule {
    pub kind: UpdateKind,
    pub eta: f64,
    pub initial: Vec<f64>,
}

impl UpdateRule {
    pub fn new(kind: UpdateKind, eta: f64, initial: Vec<f64>) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid("step size must be positive"));
        }
        if initial.len() < 2 {
            return Err(Error::invalid("need at least two outcomes"));
        }
        let sum: f64 = initial.iter().sum();
        if initial.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("initial point must lie in the simplex"));
        }
        if kind == UpdateKind::Mwu && initial.iter().any(|&x| x <= 0.0) {
            return Err(Error::invalid("multiplicative weights need a strictly positive start"));
        }
        Ok(UpdateRule { kind, eta, initial })
    }

    /// Uniform start.
    pub fn uniform(kind: UpdateKind, eta: f64, ell: usize) -> Result<Self> {
        Self::new(kind, eta, vec![1.0 / ell as f64; ell])
    }

    /// The step size `ε/L²` used by the constructors.
    pub fn for_accuracy(kind: UpdateKind, eps: f64, ell: usize) -> Result<Self> {
        let l = dual_norm_bound(kind, ell);
        Self::uniform(kind, eps / (l * l), ell)
    }

    pub fn ell(&self) -> usize {
        self.initial.len()
    }

    pub fn dual_norm_bound(&self) -> f64 {
        dual_norm_bound(self.kind, self.ell())
    }
}

/// `L = max_{f : 𝒪 → [0,1]} ‖f‖_*`: `√ℓ` for the Euclidean map, 1 for the
/// entropic one.
pub fn dual_norm_bound(kind: UpdateKind, ell: usize) -> f64 {
    match kind {
        UpdateKind::Pgd => (ell as f64).sqrt(),
        UpdateKind::Mwu => 1.0,
    }
}

/// The Bregman divergence of the rule's mirror map: `½‖x − y‖²` or `KL(x‖y)`.
pub fn divergence(kind: UpdateKind, x: &[f64], y: &[f64]) -> f64 {
    match kind {
        UpdateKind::Pgd => 0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        UpdateKind::Mwu => x
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                if a <= 0.0 {
                    0.0
                } else if b <= 0.0 {
                    f64::INFINITY
                } else {
                    a * (a / b).ln()
                }
            })
            .sum(),
    }
}

/// Euclidean projection onto the simplex by sorting and thresholding.
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = x.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in u.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (i as f64 + 1.0);
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// One step of the rule from `d` against `loss`.
pub fn update(rule: &UpdateRule, d: &[f64], loss: &[f64]) -> Vec<f64> {
    match rule.kind {
        UpdateKind::Pgd => {
            let moved: Vec<f64> = d.iter().zip(loss).map(|(p, l)| p - rule.eta * l).collect();
            project_simplex(&moved)
        }
        UpdateKind::Mwu => {
            // Shifting by the smallest loss leaves the normalized result
            // unchanged and keeps the exponentials away from underflow.
            let shift = loss.iter().cloned().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = d
                .iter()
                .zip(loss)
                .map(|(p, l)| p * (-rule.eta * (l - shift)).exp())
                .collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        }
    }
}

/// Average regret against the best fixed outcome, with the trajectory
/// `D⁽¹⁾, …, D⁽ᵀ⁾`.
#[derive(Clone, Debug)]
pub struct RegretReport {
    pub avg_regret: f64,
    pub best_outcome: usize,
    pub trajectory: Vec<Vec<f64>>,
}

pub fn measure_regret(rule: &UpdateRule, losses: &[Vec<f64>]) -> Result<RegretReport> {
    if losses.is_empty() {
        return Err(Error::invalid("need at least one loss table"));
    }
    let ell = rule.ell();
    if losses.iter().any(|l| l.len() != ell || l.iter().any(|&x| !(0.0..=1.0).contains(&x))) {
        return Err(Error::invalid("loss tables must have one [0, 1] entry per outcome"));
    }
    let mut d = rule.initial.clone();
    let mut alg = 0.0;
    let mut fixed = vec![0.0; ell];
    let mut trajectory = Vec::with_capacity(losses.len());
    for l in losses {
        alg += d.iter().zip(l).map(|(p, x)| p * x).sum::<f64>();
        for (f, x) in fixed.iter_mut().zip(l) {
            *f += x;
        }
        trajectory.push(d.clone());
        d = update(rule, &d, l);
    }
    let t = losses.len() as f64;
    let (best_outcome, best) = fixed
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (o, &v)| if v < acc.1 { (o, v) } else { acc });
    Ok(RegretReport {
        avg_regret: (alg - best) / t,
        best_outcome,
        trajectory,
    })
}

/// The mirror-descent bound `(D(x‖x₁)/η + η/2 Σ‖y_t‖²_*) / T`, maximized over
/// pure comparators `x`.
pub fn regret_bound(rule: &UpdateRule, losses: &[Vec<f64>]) -> f64 {
    let ell = rule.ell();
    let dual_sq: f64 = losses
        .iter()
        .map(|l| match rule.kind {
            UpdateKind::Pgd => l.iter().map(|x| x * x).sum::<f64>(),
            UpdateKind::Mwu => l.iter().cloned().fold(0.0, f64::max).powi(2),
        })
        .sum();
    let worst = (0..ell)
        .map(|o| {
            let mut e = vec![0.0; ell];
            e[o] = 1.0;
            divergence(rule.kind, &e, &rule.initial)
        })
        .fold(0.0, f64::max);
    (worst / rule.eta + rule.eta / 2.0 * dual_sq) / losses.len() as f64
}

/// The Hedge bound `ln ℓ/(ηT) + η/8` for the multiplicative rule with
/// uniform start and `[0, 1]` losses.
pub fn hedge_bound(rule: &UpdateRule, rounds: usize) -> f64 {
    (rule.ell() as f64).ln() / (rule.eta * rounds as f64) + rule.eta / 8.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn mwu_examples() {
        let rule = UpdateRule::uniform(UpdateKind::Mwu, 1.0, 2).unwrap();
        let d = vec![0.5, 0.5];
        assert!(close(&update(&rule, &d, &[0.0, 0.0]), &d));
        let skew = vec![0.3, 0.7];
        assert!(close(&update(&rule, &skew, &[0.4, 0.4]), &skew));
        let e = std::f64::consts::E;
        let out = update(&rule, &d, &[1.0, 0.0]);
        assert!(close(&out, &[1.0 / (1.0 + e), e / (1.0 + e)]));
        assert!((out[0] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn projection_examples() {
        assert!(close(&project_simplex(&[0.2, 0.8]), &[0.2, 0.8]));
        assert!(close(&project_simplex(&[1.5, 0.5]), &[1.0, 0.0]));
        assert!(close(&project_simplex(&[2.0, 0.0, 0.0]), &[1.0, 0.0, 0.0]));
    }

    #[test]
    fn projection_matches_mesh_search() {
        let x = [0.9, 0.6, -0.2];
        let p = project_simplex(&x);
        let dist = |q: &[f64]| q.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut best = (f64::INFINITY, vec![]);
        let n = 1000;
        for a in 0..=n {
            for b in 0..=(n - a) {
                let q = [a as f64 / n as f64, b as f64 / n as f64, (n - a - b) as f64 / n as f64];
                let v = dist(&q);
                if v < best.0 {
                    best = (v, q.to_vec());
                }
            }
        }
        assert!(p.iter().zip(&best.1).all(|(a, b)| (a - b).abs() <= 1e-3));
    }

    #[test]
    fn alternating_losses() {
        let t = 400;
        let eta = (8.0 * 2f64.ln() / t as f64).sqrt();
        let rule = UpdateRule::uniform(UpdateKind::Mwu, eta, 2).unwrap();
        let losses: Vec<Vec<f64>> = (0..t)
            .map(|s| if s % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let r = measure_regret(&rule, &losses).unwrap();
        let hedge = (2f64.ln() / (2.0 * t as f64)).sqrt();
        assert!((hedge_bound(&rule, t) - hedge).abs() < 1e-12);
        assert!(r.avg_regret <= hedge + 1e-9);
        assert!(r.avg_regret <= regret_bound(&rule, &losses) + 1e-9);
    }

    #[test]
    fn constant_losses_vanish() {
        let rule = UpdateRule::uniform(UpdateKind::Mwu, 0.5, 3).unwrap();
        let short = measure_regret(&rule, &vec![vec![0.9, 0.1, 0.5]; 10]).unwrap();
        let long = measure_regret(&rule, &vec![vec![0.9, 0.1, 0.5]; 1000]).unwrap();
        assert!(long.avg_regret < short.avg_regret);
        assert!(long.avg_regret < 0.01);
        let one = measure_regret(&rule, &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(one.avg_regret <= 1.0);
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(UpdateRule::new(UpdateKind::Mwu, 0.1, vec![1.0, 0.0]).is_err());
        assert!(UpdateRule::new(UpdateKind::Pgd, 0.1, vec![1.0, 0.0]).is_ok());
        assert!(UpdateRule::new(UpdateKind::Pgd, 0.0, vec![0.5, 0.5]).is_err());
    }
}
