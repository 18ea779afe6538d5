//! Closed-form risk floors, ceilings and information budgets.
//!
//! Everything here is arithmetic on audited inputs; no information quantity is
//! estimated in this module.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Inputs of the Fano floor. `info` is either the exact `I(U;Y|S)` of the
/// mixture or an upper bound on it such as the average total capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorInputs {
    #[serde(rename = "M")]
    pub m: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub info: f64,
}

impl FloorInputs {
    pub fn new(m: usize, delta: f64, epsilon: f64, info: f64) -> Result<Self> {
        let f = Self { m, delta, epsilon, info };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<()> {
        if self.m < 2 {
            return Err(invalid(format!("M must be at least 2, got {}", self.m)));
        }
        if !(self.info >= 0.0) || !self.info.is_finite() {
            return Err(invalid(format!("info must be finite and >= 0, got {}", self.info)));
        }
        if !(self.delta >= 0.0) || !(self.epsilon >= 0.0) {
            return Err(invalid("epsilon and delta must be >= 0"));
        }
        if self.epsilon + self.delta > 1.0 + 1e-12 {
            return Err(invalid(format!(
                "epsilon + delta = {} exceeds the loss range [0, 1]",
                self.epsilon + self.delta
            )));
        }
        Ok(())
    }
}

/// `(eps + Delta) * max(0, 1 - (info + ln 2) / ln M)`. Takes no sample size.
pub fn fano_floor(f: &FloorInputs) -> Result<f64> {
    f.check()?;
    let ln_m = (f.m as f64).ln();
    let frac = 1.0 - (f.info + LN_2) / ln_m;
    Ok((f.epsilon + f.delta) * frac.max(0.0))
}

/// A codebook summary for wall computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BookParams {
    #[serde(rename = "M")]
    pub m: usize,
    pub delta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub value: f64,
    pub argmax: usize,
    pub book: BookParams,
}

/// Largest floor over `books` at `info = capacity`; ties go to the smaller `M`,
/// then to the earlier entry.
pub fn information_wall(capacity: f64, books: &[BookParams]) -> Result<Wall> {
    if books.is_empty() {
        return Err(invalid("information wall needs at least one codebook"));
    }
    let mut best: Option<Wall> = None;
    for (i, b) in books.iter().enumerate() {
        let v = fano_floor(&FloorInputs::new(b.m, b.delta, b.epsilon, capacity)?)?;
        let better = match &best {
            None => true,
            Some(w) => v > w.value || (v == w.value && b.m < w.book.m),
        };
        if better {
            best = Some(Wall { value: v, argmax: i, book: *b });
        }
    }
    Ok(best.expect("nonempty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeilingInputs {
    /// Posterior-averaged empirical observable risk.
    pub emp_risk: f64,
    pub kl: f64,
    pub m: usize,
    pub delta_conf: f64,
}

/// `emp + sqrt((KL + ln(1/delta)) / (2m))`.
pub fn pacbayes_ceiling(c: &CeilingInputs) -> Result<f64> {
    if c.m == 0 {
        return Err(invalid("sample size m must be at least 1"));
    }
    check_unit_open("delta_conf", c.delta_conf)?;
    if !(c.kl >= 0.0) || !(c.emp_risk >= 0.0) {
        return Err(invalid("kl and emp_risk must be >= 0"));
    }
    Ok(c.emp_risk + ((c.kl + (1.0 / c.delta_conf).ln()) / (2.0 * c.m as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlBudget {
    pub value: f64,
    pub m: usize,
    pub cbar: f64,
    pub ius: f64,
    pub rho: f64,
    pub klprior: f64,
    /// Always "expectation over D": the budget bounds `E_D[KL(P||Q)]`, not the
    /// KL of a particular dataset.
    pub tag: String,
}

/// `m*cbar + m*ius + rho + klprior`.
pub fn kl_budget(m: usize, cbar: f64, ius: f64, rho: f64, klprior: f64) -> Result<KlBudget> {
    for (name, v) in [("cbar", cbar), ("ius", ius), ("rho", rho), ("klprior", klprior)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let mf = m as f64;
    Ok(KlBudget {
        value: mf * cbar + mf * ius + rho + klprior,
        m,
        cbar,
        ius,
        rho,
        klprior,
        tag: "expectation over D".into(),
    })
}

/// `expected_kl / eta`, exceeded with probability at most `eta`.
pub fn markov_lift(expected_kl: f64, eta: f64) -> Result<f64> {
    check_unit_open("eta", eta)?;
    if !(expected_kl >= 0.0) {
        return Err(invalid("expected KL must be >= 0"));
    }
    Ok(expected_kl / eta)
}

/// High-probability ceiling with the KL replaced by a lifted expected budget:
/// `emp + sqrt(budget / (2 m eta) + ln(1/delta) / (2m))`, valid with
/// probability at least `1 - delta - eta`.
pub fn lifted_ceiling(emp_risk: f64, budget: f64, m: usize, delta_conf: f64, eta: f64) -> Result<f64> {
    if m == 0 {
        return Err(invalid("sample size m must be at least 1"));
    }
    check_unit_open("delta_conf", delta_conf)?;
    check_unit_open("eta", eta)?;
    if delta_conf + eta >= 1.0 {
        return Err(invalid("delta + eta must be < 1"));
    }
    let lifted = markov_lift(budget, eta)?;
    pacbayes_ceiling(&CeilingInputs { emp_risk, kl: lifted, m, delta_conf })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequiredCapacity {
    pub value: f64,
    /// The value is negative: any capacity permits the target.
    pub vacuous: bool,
}

/// `(1 - r/(eps+Delta)) ln M - ln 2`, the least information compatible with a
/// floor of `r`. Returned unclamped.
pub fn required_capacity(r: f64, m: usize, delta: f64, epsilon: f64) -> Result<RequiredCapacity> {
    if m < 2 {
        return Err(invalid(format!("M must be at least 2, got {m}")));
    }
    let margin = epsilon + delta;
    if !(margin > 0.0) {
        return Err(invalid("epsilon + delta must be > 0"));
    }
    let value = (1.0 - r / margin) * (m as f64).ln() - LN_2;
    Ok(RequiredCapacity { value, vacuous: value < 0.0 })
}

/// `alpha * obs + beta`. With the canonical observable loss the pair must be
/// `(1, 0)`.
pub fn risk_transfer(alpha: f64, beta: f64, obs_bound: f64, canonical: bool) -> Result<f64> {
    if !(alpha >= 0.0) || !(beta >= 0.0) {
        return Err(invalid("alpha and beta must be >= 0"));
    }
    if canonical && (alpha != 1.0 || beta != 0.0) {
        return Err(invalid(format!(
            "the canonical observable loss transfers with (alpha, beta) = (1, 0), got ({alpha}, {beta})"
        )));
    }
    Ok(alpha * obs_bound + beta)
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Where an input value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Estimated,
    Budgeted,
}

/// Floor and ceiling on the same mixture risk, with every input echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(rename = "M")]
    pub m_book: usize,
    pub delta: f64,
    pub epsilon: f64,
    /// `I(U;Y|S)` of the mixture, when computed.
    pub info_exact: Option<f64>,
    /// Average total capacity.
    pub cbar: Option<f64>,
    /// Floor at `info_exact`.
    pub floor_exact: Option<f64>,
    /// Floor at `cbar`.
    pub floor_capacity: Option<f64>,
    /// Tightest available floor.
    pub floor: f64,
    pub m: usize,
    pub delta_conf: f64,
    pub eta: Option<f64>,
    pub emp_risk: f64,
    pub kl: f64,
    pub kl_provenance: Provenance,
    pub budget: Option<KlBudget>,
    pub ceiling: f64,
    pub interval_valid: bool,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str = "M,delta,epsilon,info_exact,cbar,floor_exact,floor_capacity,floor,m,delta_conf,eta,emp_risk,kl,kl_provenance,ceiling,interval_valid";

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        format!(
            "{},{:.17e},{:.17e},{},{},{},{},{:.17e},{},{:.17e},{},{:.17e},{:.17e},{},{:.17e},{}",
            self.m_book,
            self.delta,
            self.epsilon,
            opt(self.info_exact),
            opt(self.cbar),
            opt(self.floor_exact),
            opt(self.floor_capacity),
            self.floor,
            self.m,
            self.delta_conf,
            opt(self.eta),
            self.emp_risk,
            self.kl,
            match self.kl_provenance {
                Provenance::Exact => "exact",
                Provenance::Estimated => "estimated",
                Provenance::Budgeted => "budgeted",
            },
            self.ceiling,
            self.interval_valid
        )
    }
}

/// Inputs of [`bound_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalInputs {
    pub book: BookParams,
    pub info_exact: Option<f64>,
    pub cbar: Option<f64>,
    pub m: usize,
    pub delta_conf: f64,
    pub emp_risk: f64,
    /// Realized `KL(P||Q)`, used directly when `budget` is absent.
    pub kl: f64,
    /// Expected-KL budget lifted with `eta` when both are present.
    pub budget: Option<KlBudget>,
    pub eta: Option<f64>,
}

/// Assembles both floor variants and the ceiling. With a budget and `eta` the
/// ceiling is the lifted one; otherwise it uses the realized KL.
pub fn bound_report(x: &IntervalInputs) -> Result<BoundReport> {
    if x.info_exact.is_none() && x.cbar.is_none() {
        return Err(invalid("a floor needs info_exact or cbar"));
    }
    let floor_at = |info: Option<f64>| -> Result<Option<f64>> {
        info.map(|i| fano_floor(&FloorInputs::new(x.book.m, x.book.delta, x.book.epsilon, i)?)).transpose()
    };
    let floor_exact = floor_at(x.info_exact)?;
    let floor_capacity = floor_at(x.cbar)?;
    let floor = floor_exact.into_iter().chain(floor_capacity).fold(f64::NEG_INFINITY, f64::max);
    let (ceiling, kl, kl_provenance) = match (&x.budget, x.eta) {
        (Some(b), Some(eta)) => {
            (lifted_ceiling(x.emp_risk, b.value, x.m, x.delta_conf, eta)?, b.value, Provenance::Budgeted)
        }
        _ => (
            pacbayes_ceiling(&CeilingInputs { emp_risk: x.emp_risk, kl: x.kl, m: x.m, delta_conf: x.delta_conf })?,
            x.kl,
            Provenance::Exact,
        ),
    };
    Ok(BoundReport {
        m_book: x.book.m,
        delta: x.book.delta,
        epsilon: x.book.epsilon,
        info_exact: x.info_exact,
        cbar: x.cbar,
        floor_exact,
        floor_capacity,
        floor,
        m: x.m,
        delta_conf: x.delta_conf,
        eta: x.eta,
        emp_risk: x.emp_risk,
        kl,
        kl_provenance,
        budget: x.budget.clone(),
        ceiling,
        interval_valid: floor <= ceiling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn floor(m: usize, delta: f64, epsilon: f64, info: f64) -> f64 {
        fano_floor(&FloorInputs::new(m, delta, epsilon, info).unwrap()).unwrap()
    }

    #[test]
    fn fano_examples() {
        assert_eq!(floor(2, 1.0, 0.0, 0.0), 0.0);
        assert!((floor(4, 1.0, 0.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((floor(8, 1.0 / 3.0, 0.0, LN_2) - 1.0 / 9.0).abs() < 1e-15);
        assert!(FloorInputs::new(1, 1.0, 0.0, 0.0).is_err());
        assert!(FloorInputs::new(4, 1.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn clamp_is_exact_zero() {
        let ln8 = 8f64.ln();
        assert_eq!(floor(8, 1.0, 0.0, ln8 - LN_2), 0.0);
        assert_eq!(floor(8, 1.0, 0.0, 5.0), 0.0);
    }

    #[test]
    fn floor_monotone_in_info() {
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let v = floor(16, 0.5, 0.1, k as f64 * 0.02);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn wall_examples() {
        let b = |m| BookParams { m, delta: 1.0, epsilon: 0.0 };
        let w = information_wall(0.0, &[b(4), b(8)]).unwrap();
        assert_eq!(w.book.m, 8);
        assert!((w.value - 2.0 / 3.0).abs() < 1e-15);
        let single = information_wall(0.3, &[b(5)]).unwrap();
        assert_eq!(single.value, floor(5, 1.0, 0.0, 0.3));
        // both vacuous: the smaller M wins the tie
        let tie = information_wall(10.0, &[b(8), b(4)]).unwrap();
        assert_eq!(tie.book.m, 4);
        assert!(information_wall(0.0, &[]).is_err());
    }

    #[test]
    fn wall_is_max_of_floors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let books: Vec<BookParams> = (0..rng.random_range(1..6))
                .map(|_| {
                    let delta = rng.random_range(0.05..1.0);
                    BookParams { m: rng.random_range(2..40), delta, epsilon: rng.random_range(0.0..1.0 - delta) }
                })
                .collect();
            let cap = rng.random_range(0.0..3.0);
            let w = information_wall(cap, &books).unwrap();
            let max = books.iter().map(|b| floor(b.m, b.delta, b.epsilon, cap)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(w.value, max);
        }
    }

    #[test]
    fn ceiling_examples() {
        let c = |emp, kl, m, d| pacbayes_ceiling(&CeilingInputs { emp_risk: emp, kl, m, delta_conf: d }).unwrap();
        assert!((c(0.0, 0.0, 50, (-1f64).exp()) - 0.1).abs() < 1e-15);
        let a = c(0.0, 1.3, 40, 0.05);
        let b = c(0.0, 1.3, 160, 0.05);
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!((c(0.2, 2.0, 200, 0.05) - 0.31175).abs() < 1e-5);
        let exact = 0.2 + ((2.0 + 20f64.ln()) / 400.0).sqrt();
        assert_eq!(c(0.2, 2.0, 200, 0.05), exact);
        assert!(pacbayes_ceiling(&CeilingInputs { emp_risk: 0.0, kl: 0.0, m: 0, delta_conf: 0.1 }).is_err());
    }

    #[test]
    fn ceiling_monotone() {
        let c = |kl, m| pacbayes_ceiling(&CeilingInputs { emp_risk: 0.1, kl, m, delta_conf: 0.05 }).unwrap();
        for m in 1..100 {
            assert!(c(1.0, m + 1) <= c(1.0, m));
            assert!(c(1.0 + m as f64 * 0.01, 10) >= c(1.0, 10));
        }
    }

    #[test]
    fn budget_and_lift() {
        assert_eq!(kl_budget(0, 0.0, 0.0, 0.0, 0.0).unwrap().value, 0.0);
        let b = kl_budget(10, LN_2, 0.0, 0.0, 0.0).unwrap();
        assert!((b.value - 6.931471805599453).abs() < 1e-12);
        assert_eq!(b.tag, "expectation over D");
        assert_eq!(markov_lift(1.0, 0.5).unwrap(), 2.0);
        assert!(markov_lift(1.0, 1.0).is_err());
        assert!(markov_lift(1.0, 0.0).is_err());
        assert!(lifted_ceiling(0.0, 1.0, 10, 0.5, 0.5).is_err());
        let l = lifted_ceiling(0.1, 2.0, 100, 0.05, 0.1).unwrap();
        assert!((l - (0.1 + (20.0 / 200.0 + 20f64.ln() / 200.0).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn required_capacity_examples() {
        let r = required_capacity(1.0, 8, 1.0, 0.0).unwrap();
        assert!((r.value + LN_2).abs() < 1e-15 && r.vacuous);
        let r = required_capacity(0.0, 8, 1.0, 0.0).unwrap();
        assert!((r.value - 4f64.ln()).abs() < 1e-15 && !r.vacuous);
        assert!(required_capacity(0.1, 8, 0.0, 0.0).is_err());
    }

    #[test]
    fn transfer() {
        assert_eq!(risk_transfer(1.0, 0.0, 0.37, true).unwrap(), 0.37);
        assert!((risk_transfer(2.0, 0.1, 0.3, false).unwrap() - 0.7).abs() < 1e-15);
        assert!(risk_transfer(2.0, 0.1, 0.3, true).is_err());
    }

    #[test]
    fn report_picks_tightest_floor() {
        let r = bound_report(&IntervalInputs {
            book: BookParams { m: 8, delta: 1.0, epsilon: 0.0 },
            info_exact: Some(0.1),
            cbar: Some(0.5),
            m: 100,
            delta_conf: 0.05,
            emp_risk: 0.6,
            kl: 0.3,
            budget: None,
            eta: None,
        })
        .unwrap();
        assert_eq!(r.floor, r.floor_exact.unwrap());
        assert!(r.floor_capacity.unwrap() <= r.floor);
        assert!(r.interval_valid);
        assert_eq!(r.to_csv_row().split(',').count(), BoundReport::CSV_HEADER.split(',').count());
    }
}
