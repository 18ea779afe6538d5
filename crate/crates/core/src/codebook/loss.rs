use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The task loss, together with the value and action alphabets it lives on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `1[u != a]` over `labels` labels.
    ZeroOne { labels: usize },
    /// Fraction of misordered pairs between two orderings of `n` items.
    /// Values and actions are the `n!` permutations in lexicographic order.
    PairwiseRanking { n: usize },
    /// `min(|u - a|^2 / tau^2, 1)`; values and actions are the candidate points.
    TruncatedMse { r: f64, tau: f64, points: Vec<Vec<f64>> },
    /// An explicit `values x actions` table with entries in `[0, 1]`.
    Table { loss: Vec<Vec<f64>> },
}

/// Dense `values x actions` loss matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    values: usize,
    actions: usize,
    data: Vec<f64>,
}

impl LossTable {
    pub fn values(&self) -> usize {
        self.values
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, u: usize, a: usize) -> f64 {
        self.data[u * self.actions + a]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.actions..(u + 1) * self.actions]
    }
}

/// Upper limit on ranking size: `6! = 720` orders.
pub const MAX_RANKING_ITEMS: usize = 6;
/// Upper limit on loss-table entries.
pub const MAX_LOSS_CELLS: usize = 4_000_000;

impl LossKind {
    pub fn table(&self) -> Result<LossTable> {
        match self {
            LossKind::ZeroOne { labels } => {
                let n = *labels;
                if n == 0 {
                    return Err(invalid("zero-one loss needs at least one label"));
                }
                let data = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
                Ok(LossTable { values: n, actions: n, data })
            }
            LossKind::PairwiseRanking { n } => {
                if !(2..=MAX_RANKING_ITEMS).contains(n) {
                    return Err(invalid(format!("ranking size n must lie in [2, {MAX_RANKING_ITEMS}], got {n}")));
                }
                let perms = permutations(*n);
                let pairs = (n * (n - 1) / 2) as f64;
                let pos: Vec<Vec<usize>> = perms.iter().map(|p| positions(p)).collect();
                let k = perms.len();
                let mut data = Vec::with_capacity(k * k);
                for a in &pos {
                    for b in &pos {
                        data.push(discordant_pairs(a, b) as f64 / pairs);
                    }
                }
                Ok(LossTable { values: k, actions: k, data })
            }
            LossKind::TruncatedMse { r, tau, points } => {
                check_mse(*r, *tau, points)?;
                let k = points.len();
                check_cells(k, k)?;
                let t2 = tau * tau;
                let mut data = Vec::with_capacity(k * k);
                for u in points {
                    for a in points {
                        data.push((sq_dist(u, a) / t2).min(1.0));
                    }
                }
                Ok(LossTable { values: k, actions: k, data })
            }
            LossKind::Table { loss } => {
                let values = loss.len();
                let actions = loss.first().map_or(0, Vec::len);
                if values == 0 || actions == 0 {
                    return Err(invalid("loss table must be nonempty"));
                }
                check_cells(values, actions)?;
                let mut data = Vec::with_capacity(values * actions);
                for (u, row) in loss.iter().enumerate() {
                    if row.len() != actions {
                        return Err(invalid(format!(
                            "loss table row {u} has {} entries, expected {actions}",
                            row.len()
                        )));
                    }
                    for (a, &v) in row.iter().enumerate() {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(invalid(format!("loss[{u}][{a}] = {v} is outside [0, 1]")));
                        }
                        data.push(v);
                    }
                }
                Ok(LossTable { values, actions, data })
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::ZeroOne { .. } => "zero_one",
            LossKind::PairwiseRanking { .. } => "pairwise_ranking",
            LossKind::TruncatedMse { .. } => "truncated_mse",
            LossKind::Table { .. } => "table",
        }
    }
}

fn check_cells(values: usize, actions: usize) -> Result<()> {
    if values.saturating_mul(actions) > MAX_LOSS_CELLS {
        return Err(crate::Error::ResourceLimit(format!(
            "loss table {values} x {actions} exceeds {MAX_LOSS_CELLS} cells"
        )));
    }
    Ok(())
}

pub(crate) fn check_mse(r: f64, tau: f64, points: &[Vec<f64>]) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("need r > 0 and tau > 0, got r={r}, tau={tau}")));
    }
    let d = points.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(invalid("candidate grid must be nonempty with dimension >= 1"));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != d || p.iter().any(|x| !x.is_finite()) {
            return Err(invalid(format!("candidate point {i} is malformed")));
        }
    }
    Ok(())
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    // next_permutation
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// `pos[item]` = rank of `item` in the ordering `perm`.
fn positions(perm: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; perm.len()];
    for (rank, &item) in perm.iter().enumerate() {
        pos[item] = rank;
    }
    pos
}

fn discordant_pairs(a: &[usize], b: &[usize]) -> usize {
    let n = a.len();
    let mut count = 0;
    for x in 0..n {
        for y in x + 1..n {
            if (a[x] < a[y]) != (b[x] < b[y]) {
                count += 1;
            }
        }
    }
    count
}

/// Points of a `side^dims` lattice with the given spacing, in lexicographic order.
pub fn lattice(dims: usize, side: usize, spacing: f64) -> Vec<Vec<f64>> {
    let total = side.pow(dims as u32);
    (0..total)
        .map(|mut k| {
            let mut p = vec![0.0; dims];
            for d in (0..dims).rev() {
                p[d] = (k % side) as f64 * spacing;
                k /= side;
            }
            p
        })
        .collect()
}
