use serde::{Deserialize, Serialize};

use super::posterior::Learner;
use crate::channel::CascadeChannel;
use crate::codebook::{canonical_observable_loss, MixtureInstance};
use crate::error::{invalid, Error, Result};
use crate::probcore::{clamp_information, conditional_mi, kl_of, mutual_information, MAX_CELLS};

/// Largest sample size the audit will enumerate.
pub const MAX_AUDIT_M: usize = 3;
/// Tolerance of the certified identities and inequalities.
pub const AUDIT_TOL: f64 = 1e-9;

/// Exact information quantities of a learner on a mixture, by enumerating
/// every `(U^m, S^m, Y^m)` and the resulting posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoAudit {
    pub m: usize,
    pub u_size: usize,
    pub s_size: usize,
    pub y_size: usize,
    pub hypotheses: usize,
    /// `I(D; theta)`.
    pub i_d_theta: f64,
    /// `I(U^m; theta)`.
    pub i_um_theta: f64,
    /// `I(D; theta | U^m)`, the residual.
    pub i_d_theta_given_um: f64,
    /// `E_D[KL(P || Q)]`.
    pub expected_kl: f64,
    /// `KL(p(theta) || Q)`.
    pub kl_marginal_prior: f64,
    /// `I(U^m; D)`.
    pub i_um_d: f64,
    /// `I(U; S)` and `I(U; Y | S)` of one sample.
    pub i_us: f64,
    pub i_uy_s: f64,
    pub cbar: f64,
    /// `m * cbar + m * I(U;S)`.
    pub capacity_bound: f64,
    /// `|E[KL] - I(D;theta) - KL(p(theta)||Q)|`.
    pub identity_gap: f64,
    /// `|I(D;theta) - I(U^m;theta) - I(D;theta|U^m)|`.
    pub chain_gap: f64,
    /// `|I(U^m;D) - m I(U;S) - m I(U;Y|S)|`.
    pub sample_chain_gap: f64,
    /// `capacity_bound - I(U^m;theta)`.
    pub capacity_slack: f64,
    pub identity_holds: bool,
    pub chain_holds: bool,
    pub sample_chain_holds: bool,
    pub capacity_holds: bool,
}

impl InfoAudit {
    pub fn all_hold(&self) -> bool {
        self.identity_holds && self.chain_holds && self.sample_chain_holds && self.capacity_holds
    }
}

/// Enumerates the joint of `(U^m, D, theta)` for `m <= 3` and certifies the
/// expected-KL identity, the residual chain rule, the per-sample information
/// chain, and capacity control against `cbar`.
pub fn enumerate_information(
    learner: &dyn Learner,
    mix: &MixtureInstance,
    cascade: &CascadeChannel,
    m: usize,
    cbar: f64,
) -> Result<InfoAudit> {
    if m == 0 || m > MAX_AUDIT_M {
        return Err(invalid(format!("enumeration needs 1 <= m <= {MAX_AUDIT_M}, got {m}")));
    }
    let (u_n, s_n, y_n) = (mix.m(), cascade.contexts(), cascade.y_size());
    let theta_n = learner.hypotheses().len();
    let um_n = u_n.pow(m as u32);
    let d_n = (s_n * y_n).pow(m as u32);
    let cells = (um_n as f64) * (d_n as f64) * (theta_n as f64);
    if cells > MAX_CELLS as f64 {
        return Err(Error::ResourceLimit(format!(
            "enumeration needs {cells:.3e} cells (limit {MAX_CELLS}); use a smaller m, alphabet or hypothesis class"
        )));
    }
    let joint = mix.joint_usy(cascade)?;
    let obs = canonical_observable_loss(mix, cascade)?;
    let q = learner.prior().masses().to_vec();

    // p(u^m, d): one sample's (u, s, y) mass, multiplied out
    let mut p_ud = vec![0.0; um_n * d_n];
    for um in 0..um_n {
        for d in 0..d_n {
            let (mut uk, mut dk, mut p) = (um, d, 1.0);
            for _ in 0..m {
                let (u, sy) = (uk % u_n, dk % (s_n * y_n));
                let (s, y) = (sy / y_n, sy % y_n);
                p *= joint.mass(&[u, s, y]);
                uk /= u_n;
                dk /= s_n * y_n;
            }
            p_ud[um * d_n + d] = p;
        }
    }
    let p_d: Vec<f64> = (0..d_n).map(|d| (0..um_n).map(|um| p_ud[um * d_n + d]).sum()).collect();
    let p_um: Vec<f64> = (0..um_n).map(|um| p_ud[um * d_n..(um + 1) * d_n].iter().sum()).collect();

    // posterior per reachable dataset
    let mut post: Vec<Option<Vec<f64>>> = Vec::with_capacity(d_n);
    for (d, &pd) in p_d.iter().enumerate() {
        if pd <= 0.0 {
            post.push(None);
            continue;
        }
        let mut data = Vec::with_capacity(m);
        let mut dk = d;
        for _ in 0..m {
            let sy = dk % (s_n * y_n);
            data.push((sy % y_n, sy / y_n));
            dk /= s_n * y_n;
        }
        post.push(Some(learner.posterior(&data, &obs)?.masses().to_vec()));
    }

    let mut p_theta = vec![0.0; theta_n];
    for (d, p) in post.iter().enumerate() {
        if let Some(p) = p {
            for t in 0..theta_n {
                p_theta[t] += p_d[d] * p[t];
            }
        }
    }

    let (mut i_d_theta, mut expected_kl) = (0.0, 0.0);
    for (d, p) in post.iter().enumerate() {
        if let Some(p) = p {
            i_d_theta += p_d[d] * kl_of(p, &p_theta)?;
            expected_kl += p_d[d] * kl_of(p, &q)?;
        }
    }
    let kl_marginal_prior = kl_of(&p_theta, &q)?;

    // p(theta | u^m) and the two conditional pieces
    let (mut i_um_theta, mut residual, mut i_um_d) = (0.0, 0.0, 0.0);
    for um in 0..um_n {
        if p_um[um] <= 0.0 {
            continue;
        }
        let mut p_t_um = vec![0.0; theta_n];
        for d in 0..d_n {
            let w = p_ud[um * d_n + d];
            if w > 0.0 {
                let p = post[d].as_ref().expect("reachable dataset");
                for t in 0..theta_n {
                    p_t_um[t] += w * p[t];
                }
                i_um_d += w * (w / (p_um[um] * p_d[d])).ln();
            }
        }
        for v in &mut p_t_um {
            *v /= p_um[um];
        }
        i_um_theta += p_um[um] * kl_of(&p_t_um, &p_theta)?;
        for d in 0..d_n {
            let w = p_ud[um * d_n + d];
            if w > 0.0 {
                residual += w * kl_of(post[d].as_ref().expect("reachable"), &p_t_um)?;
            }
        }
    }
    let i_d_theta = clamp_information(i_d_theta)?;
    let i_um_theta = clamp_information(i_um_theta)?;
    let i_d_theta_given_um = clamp_information(residual)?;
    let i_um_d = clamp_information(i_um_d)?;

    let i_us = mutual_information(&joint, "U", "S")?;
    let i_uy_s = conditional_mi(&joint, "U", "Y", "S")?.value;
    let mf = m as f64;
    let capacity_bound = mf * cbar + mf * i_us;
    let identity_gap = (expected_kl - i_d_theta - kl_marginal_prior).abs();
    let chain_gap = (i_d_theta - i_um_theta - i_d_theta_given_um).abs();
    let sample_chain_gap = (i_um_d - mf * i_us - mf * i_uy_s).abs();
    let capacity_slack = capacity_bound - i_um_theta;
    Ok(InfoAudit {
        m,
        u_size: u_n,
        s_size: s_n,
        y_size: y_n,
        hypotheses: theta_n,
        i_d_theta,
        i_um_theta,
        i_d_theta_given_um,
        expected_kl,
        kl_marginal_prior,
        i_um_d,
        i_us,
        i_uy_s,
        cbar,
        capacity_bound,
        identity_gap,
        chain_gap,
        sample_chain_gap,
        capacity_slack,
        identity_holds: identity_gap <= AUDIT_TOL,
        chain_holds: chain_gap <= AUDIT_TOL,
        sample_chain_holds: sample_chain_gap <= AUDIT_TOL,
        capacity_holds: capacity_slack >= -AUDIT_TOL,
    })
}
