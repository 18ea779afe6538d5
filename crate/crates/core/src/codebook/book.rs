use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::loss::{check_mse, sq_dist, LossKind, LossTable, MAX_RANKING_ITEMS};
use crate::error::{invalid, Error, Result};

/// Slack below which a validation condition counts as violated.
pub const VALIDATION_TOL: f64 = 1e-12;

/// Built-in index decoders. All of them ignore the context: prototypes here do
/// not depend on `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhiRule {
    /// The codeword whose action equals the predicted label.
    #[serde(rename = "builtin:label")]
    PredictedLabel,
    /// The codeword whose action equals the predicted order.
    #[serde(rename = "builtin:order")]
    PredictedOrder,
    /// Nearest prototype in Euclidean distance; ties to the lowest index.
    #[serde(rename = "builtin:voronoi")]
    NearestPrototype,
    /// `argmin_i loss(u_i, a)`; ties to the lowest index.
    #[serde(rename = "builtin:argmin")]
    ArgminLoss,
}

/// `M` value-action pairs with margins `(epsilon, delta)`, a loss, and an
/// index decoder `phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCodebook", into = "RawCodebook")]
pub struct Codebook {
    loss_kind: LossKind,
    prototypes: Vec<usize>,
    actions: Vec<usize>,
    epsilon: f64,
    delta: f64,
    phi: PhiRule,
    table: LossTable,
    decode: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawCodebook {
    loss_kind: LossKind,
    #[serde(rename = "M")]
    m: usize,
    prototypes: Vec<usize>,
    actions: Vec<usize>,
    epsilon: f64,
    delta: f64,
    phi: PhiRule,
}

impl TryFrom<RawCodebook> for Codebook {
    type Error = Error;

    fn try_from(raw: RawCodebook) -> Result<Self> {
        if raw.m != raw.prototypes.len() {
            return Err(invalid(format!("M = {} but {} prototypes are listed", raw.m, raw.prototypes.len())));
        }
        Codebook::new(raw.loss_kind, raw.prototypes, raw.actions, raw.epsilon, raw.delta, raw.phi)
    }
}

impl From<Codebook> for RawCodebook {
    fn from(c: Codebook) -> Self {
        RawCodebook {
            m: c.prototypes.len(),
            loss_kind: c.loss_kind,
            prototypes: c.prototypes,
            actions: c.actions,
            epsilon: c.epsilon,
            delta: c.delta,
            phi: c.phi,
        }
    }
}

impl Codebook {
    /// Assembles a codebook; structural checks only. Use [`validate`] for the
    /// margin and link conditions.
    pub fn new(
        loss_kind: LossKind,
        prototypes: Vec<usize>,
        actions: Vec<usize>,
        epsilon: f64,
        delta: f64,
        phi: PhiRule,
    ) -> Result<Self> {
        let table = loss_kind.table()?;
        if prototypes.len() < 2 {
            return Err(invalid(format!("a codebook needs M >= 2, got {}", prototypes.len())));
        }
        if prototypes.len() != actions.len() {
            return Err(invalid("prototypes and actions must have the same length"));
        }
        if let Some(&u) = prototypes.iter().find(|&&u| u >= table.values()) {
            return Err(invalid(format!("prototype {u} is outside the value alphabet")));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= table.actions()) {
            return Err(invalid(format!("action {a} is outside the action alphabet")));
        }
        for (i, u) in prototypes.iter().enumerate() {
            if prototypes[..i].contains(u) {
                return Err(invalid(format!("prototype {u} is listed twice")));
            }
        }
        if !(epsilon.is_finite() && delta.is_finite()) {
            return Err(invalid("epsilon and delta must be finite"));
        }
        match (&loss_kind, phi) {
            (LossKind::TruncatedMse { .. }, _) => {}
            (_, PhiRule::NearestPrototype) => {
                return Err(invalid("builtin:voronoi needs a truncated_mse loss"));
            }
            _ => {}
        }
        let decode = decoder_map(&loss_kind, &table, &prototypes, &actions, phi);
        Ok(Self { loss_kind, prototypes, actions, epsilon, delta, phi, table, decode })
    }

    pub fn m(&self) -> usize {
        self.prototypes.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `epsilon + delta`.
    pub fn margin(&self) -> f64 {
        self.epsilon + self.delta
    }

    pub fn loss_kind(&self) -> &LossKind {
        &self.loss_kind
    }

    pub fn phi_rule(&self) -> PhiRule {
        self.phi
    }

    pub fn prototypes(&self) -> &[usize] {
        &self.prototypes
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn action_count(&self) -> usize {
        self.table.actions()
    }

    pub fn table(&self) -> &LossTable {
        &self.table
    }

    /// `loss(u^(i), a)`.
    pub fn codeword_loss(&self, i: usize, a: usize) -> f64 {
        self.table.get(self.prototypes[i], a)
    }

    /// `phi(a)`; the same in every context.
    pub fn decode(&self, a: usize) -> usize {
        self.decode[a]
    }

    /// The same book with a different declared margin.
    pub fn with_margins(&self, epsilon: f64, delta: f64) -> Self {
        Self { epsilon, delta, ..self.clone() }
    }

    /// The same book with codeword actions replaced.
    pub fn with_actions(&self, actions: Vec<usize>) -> Result<Self> {
        Self::new(self.loss_kind.clone(), self.prototypes.clone(), actions, self.epsilon, self.delta, self.phi)
    }
}

fn decoder_map(
    kind: &LossKind,
    table: &LossTable,
    prototypes: &[usize],
    actions: &[usize],
    phi: PhiRule,
) -> Vec<usize> {
    let argmin = |f: &dyn Fn(usize) -> f64| -> usize {
        let mut best = 0;
        for i in 1..prototypes.len() {
            if f(i) < f(best) {
                best = i;
            }
        }
        best
    };
    (0..table.actions())
        .map(|a| match phi {
            PhiRule::PredictedLabel | PhiRule::PredictedOrder => {
                actions.iter().position(|&x| x == a).unwrap_or_else(|| argmin(&|i| table.get(prototypes[i], a)))
            }
            PhiRule::ArgminLoss => argmin(&|i| table.get(prototypes[i], a)),
            PhiRule::NearestPrototype => {
                let LossKind::TruncatedMse { points, .. } = kind else { unreachable!("checked in Codebook::new") };
                argmin(&|i| sq_dist(&points[prototypes[i]], &points[a]))
            }
        })
        .collect()
}

/// Labels `0..M` with `a^(i) = i`: `epsilon = 0`, `delta = 1`.
pub fn build_classification(m: usize) -> Result<Codebook> {
    if m < 2 {
        return Err(invalid(format!("classification needs M >= 2, got {m}")));
    }
    let ids: Vec<usize> = (0..m).collect();
    Codebook::new(LossKind::ZeroOne { labels: m }, ids.clone(), ids, 0.0, 1.0, PhiRule::PredictedLabel)
}

/// All `n!` orders of `n` items: `epsilon = 0`, `delta = 1 / C(n, 2)`.
pub fn build_ranking(n: usize) -> Result<Codebook> {
    if !(2..=MAX_RANKING_ITEMS).contains(&n) {
        return Err(invalid(format!("ranking needs 2 <= n <= {MAX_RANKING_ITEMS}, got {n}")));
    }
    let m: usize = (1..=n).product();
    let ids: Vec<usize> = (0..m).collect();
    let pairs = (n * (n - 1) / 2) as f64;
    Codebook::new(LossKind::PairwiseRanking { n }, ids.clone(), ids, 0.0, 1.0 / pairs, PhiRule::PredictedOrder)
}

/// Greedy `r`-packing of `points` scanned in lexicographic order, with
/// `a^(i) = u^(i)`, `epsilon = 0` and `delta = min(r^2 / (4 tau^2), 1)`.
pub fn build_mse_packing(points: Vec<Vec<f64>>, r: f64, tau: f64) -> Result<Codebook> {
    check_mse(r, tau, &points)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(&points[a], &points[b]));
    let r2 = r * r;
    let mut chosen: Vec<usize> = Vec::new();
    for &i in &order {
        if chosen.iter().all(|&j| sq_dist(&points[i], &points[j]) >= r2) {
            chosen.push(i);
        }
    }
    if chosen.len() < 2 {
        return Err(invalid(format!(
            "packing at r = {r} keeps {} point(s); use a smaller r or a wider grid",
            chosen.len()
        )));
    }
    let delta = (r2 / (4.0 * tau * tau)).min(1.0);
    Codebook::new(
        LossKind::TruncatedMse { r, tau, points },
        chosen.clone(),
        chosen,
        0.0,
        delta,
        PhiRule::NearestPrototype,
    )
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Worst slack per condition; a condition holds when its slack is `>= -1e-12`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    #[serde(rename = "M")]
    pub m: usize,
    /// `epsilon - max_i loss(u_i, a_i)`.
    pub diagonal_slack: f64,
    /// `min_{j != i} loss(u_j, a_i) - (epsilon + delta)`.
    pub margin_slack: f64,
    /// `min over (a, i) with phi(a) != i of loss(u_i, a) - (epsilon + delta)`.
    pub link_slack: f64,
    /// Number of `(action, index)` pairs checked for the link.
    pub link_cells: usize,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Checks the margins and the loss-index link on the full action grid.
pub fn validate(book: &Codebook) -> ValidationReport {
    const MAX_LISTED: usize = 20;
    let m = book.m();
    let margin = book.margin();
    let mut failures = Vec::new();
    let note = |failures: &mut Vec<String>, msg: String| {
        if failures.len() < MAX_LISTED {
            failures.push(msg);
        }
    };
    if !(book.epsilon >= 0.0) || !(book.delta > 0.0) || book.delta > 1.0 {
        note(&mut failures, format!("need epsilon >= 0 and delta in (0, 1], got ({}, {})", book.epsilon, book.delta));
    }
    if margin > 1.0 + VALIDATION_TOL {
        note(&mut failures, format!("epsilon + delta = {margin} exceeds 1"));
    }

    let mut diagonal_slack = f64::INFINITY;
    for i in 0..m {
        let s = book.epsilon - book.codeword_loss(i, book.actions[i]);
        if s < -VALIDATION_TOL {
            note(&mut failures, format!("diagonal: codeword {i} has loss {} > epsilon", book.epsilon - s));
        }
        diagonal_slack = diagonal_slack.min(s);
    }

    let mut margin_slack = f64::INFINITY;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let s = book.codeword_loss(j, book.actions[i]) - margin;
            if s < -VALIDATION_TOL {
                note(&mut failures, format!("margin: value {j} under action of codeword {i} has slack {s}"));
            }
            margin_slack = margin_slack.min(s);
        }
    }

    let mut link_slack = f64::INFINITY;
    let mut link_cells = 0;
    for a in 0..book.action_count() {
        let hat = book.decode(a);
        for i in (0..m).filter(|&i| i != hat) {
            link_cells += 1;
            let s = book.codeword_loss(i, a) - margin;
            if s < -VALIDATION_TOL {
                note(
                    &mut failures,
                    format!("link: action {a} decodes to {hat} but loss to codeword {i} is {}", s + margin),
                );
            }
            link_slack = link_slack.min(s);
        }
    }

    ValidationReport { m, diagonal_slack, margin_slack, link_slack, link_cells, passed: failures.is_empty(), failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::loss::lattice;

    #[test]
    fn classification() {
        for m in [2, 5] {
            let b = build_classification(m).unwrap();
            assert_eq!((b.m(), b.epsilon(), b.delta()), (m, 0.0, 1.0));
            let r = validate(&b);
            assert!(r.passed, "{:?}", r.failures);
            assert_eq!(r.margin_slack, 0.0);
        }
        // every off-diagonal loss is exactly 1
        let b = build_classification(5).unwrap();
        for i in 0..5 {
            for j in (0..5).filter(|&j| j != i) {
                assert_eq!(b.codeword_loss(j, b.actions()[i]), 1.0);
            }
        }
        assert!(build_classification(1).is_err());
    }

    #[test]
    fn ranking() {
        let b = build_ranking(3).unwrap();
        assert_eq!(b.m(), 6);
        assert_eq!(b.delta(), 1.0 / 3.0);
        let mut min_off = f64::INFINITY;
        for i in 0..6 {
            for j in (0..6).filter(|&j| j != i) {
                min_off = min_off.min(b.codeword_loss(j, b.actions()[i]));
            }
        }
        assert_eq!(min_off, 1.0 / 3.0);
        assert_eq!(build_ranking(2).unwrap().delta(), 1.0);
        for n in 2..=5 {
            let b = build_ranking(n).unwrap();
            assert_eq!(b.delta() * (n * (n - 1) / 2) as f64, 1.0);
            assert!(validate(&b).passed);
        }
        assert!(build_ranking(7).is_err());
    }

    #[test]
    fn mse_packing() {
        let b = build_mse_packing(lattice(1, 4, 1.0), 2.0, 2.0).unwrap();
        assert_eq!(b.prototypes(), &[0, 2]);
        assert_eq!(b.delta(), 0.25);
        let r = validate(&b);
        assert!(r.passed, "{:?}", r.failures);
        // misdecoded actions sit at least r/2 from the true prototype
        let LossKind::TruncatedMse { points, .. } = b.loss_kind() else { unreachable!() };
        for a in 0..points.len() {
            for i in (0..b.m()).filter(|&i| i != b.decode(a)) {
                assert!(sq_dist(&points[a], &points[b.prototypes()[i]]).sqrt() >= 1.0);
            }
        }
        let unit = build_mse_packing(lattice(2, 3, 1.0), 1.0, 1.0).unwrap();
        assert_eq!(unit.delta(), 0.25);
        let sat = build_mse_packing(lattice(1, 5, 1.0), 2.0, 1.0).unwrap();
        assert_eq!(sat.margin(), 1.0);
        assert!(validate(&sat).passed);
        assert!(build_mse_packing(lattice(1, 2, 1.0), 5.0, 1.0).is_err());
    }

    #[test]
    fn corrupted_books_fail() {
        let b = build_classification(3).unwrap();
        let swapped = b.with_actions(vec![1, 0, 2]).unwrap();
        let r = validate(&swapped);
        assert!(!r.passed);
        assert!(r.failures.iter().any(|f| f.starts_with("diagonal: codeword 0")));

        let mse = build_mse_packing(lattice(1, 4, 1.0), 2.0, 2.0).unwrap();
        let wrong = mse.with_margins(0.0, 1.0);
        let r = validate(&wrong);
        assert!(!r.passed);
        assert!(r.link_slack < 0.0);
        assert!(r.failures.iter().any(|f| f.starts_with("link:")));
    }

    #[test]
    fn json_round_trip() {
        let b = build_mse_packing(lattice(1, 4, 1.0), 2.0, 2.0).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert!(s.contains(r#""M":2"#));
        assert!(s.contains(r#""phi":"builtin:voronoi""#));
        let back: Codebook = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        let bad = s.replace(r#""M":2"#, r#""M":3"#);
        assert!(serde_json::from_str::<Codebook>(&bad).is_err());
    }
}
