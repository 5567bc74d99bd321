//! The four training objectives and their weighted combination, each exposed
//! as a plain value function (unit-testable against brute-force oracles) plus
//! tape builders in [`graph`] for the differentiated path.
//!
//! Conventions shared by every term: means over rows (so magnitudes are batch
//! size invariant), and comparison targets treated as constants where the
//! training schedule says gradients must not reach them.

use crate::error::{Error, Result};
use crate::networks::CrossPredictors;
use crate::numerics::{
    joint_distribution_value, mi_loss_value, validate_joint, Matrix, NodeId, Tape,
};

/// Scalar hyper-parameters: term weights, the mutual-information regularizer,
/// and the target-network momentum.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Weight of the reconstruction term.
    pub alpha: f64,
    /// Weight of the online/target agreement term.
    pub beta: f64,
    /// Weight of the consistency pair (cross-view prediction + mutual information).
    pub lambda: f64,
    /// Marginal-entropy exponent in the mutual-information term.
    pub eta_reg: f64,
    /// Target-network trailing momentum.
    pub momentum: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.01,
            beta: 0.001,
            lambda: 1.0,
            eta_reg: 9.0,
            momentum: 0.996,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("eta_reg", self.eta_reg),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.momentum) || self.momentum.is_nan() {
            return Err(Error::Config(format!(
                "momentum must lie in [0,1], got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Per-term loss values for one batch or epoch. `total` always equals
/// `beta*cml + lambda*(ccl + pre if active) + alpha*rec`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub cml: f64,
    pub pre: f64,
    pub ccl: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(
        rec: f64,
        cml: f64,
        pre: f64,
        ccl: f64,
        w: &LossWeights,
        pre_active: bool,
    ) -> LossBreakdown {
        let mut b = LossBreakdown {
            rec,
            cml,
            pre,
            ccl,
            total: 0.0,
        };
        b.total = total_loss(&b, w, pre_active);
        b
    }
}

/// Weighted combination of the terms; `pre` participates only when active.
pub fn total_loss(parts: &LossBreakdown, w: &LossWeights, pre_active: bool) -> f64 {
    let pre = if pre_active { parts.pre } else { 0.0 };
    w.beta * parts.cml + w.lambda * (parts.ccl + pre) + w.alpha * parts.rec
}

fn mean_row_sq_dist_value(a: &Matrix, b: &Matrix, rows: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in rows {
        for (x, y) in a.row(i).iter().zip(b.row(i)) {
            total += (x - y) * (x - y);
        }
    }
    total / rows.len() as f64
}

/// Mean over observed rows of the squared reconstruction distance for one
/// view. The caller sums across views.
pub fn loss_rec(x: &Matrix, x_hat: &Matrix, observed: &[usize]) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::DimMismatch {
            op: "loss_rec",
            left: x.shape_str(),
            right: x_hat.shape_str(),
        });
    }
    if observed.is_empty() {
        return Err(Error::Degenerate("loss_rec over zero observed rows".into()));
    }
    Ok(mean_row_sq_dist_value(x, x_hat, observed))
}

/// Mean squared row distance between the online prediction and the target
/// embedding. Both inputs must be row-normalized (checked to 1e-6), which
/// makes the value equal 2 - 2*cos per row. One direction of the symmetric
/// agreement loss; the caller sums both.
pub fn loss_cml(q_online: &Matrix, z_target: &Matrix) -> Result<f64> {
    if q_online.shape() != z_target.shape() {
        return Err(Error::DimMismatch {
            op: "loss_cml",
            left: q_online.shape_str(),
            right: z_target.shape_str(),
        });
    }
    for (name, m) in [("online", q_online), ("target", z_target)] {
        for i in 0..m.rows() {
            let norm = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Contract(format!(
                    "loss_cml {name} row {i} has norm {norm}, expected 1"
                )));
            }
        }
    }
    let rows: Vec<usize> = (0..q_online.rows()).collect();
    Ok(mean_row_sq_dist_value(q_online, z_target, &rows))
}

/// Mean over complete rows of both cross-view prediction residuals:
/// |g12(z1) - z2|^2 + |g21(z2) - z1|^2. Prediction targets carry no
/// gradient in the training graph; this value form just reports the number.
pub fn loss_pre(
    z1: &Matrix,
    z2: &Matrix,
    preds: &CrossPredictors,
    complete: &[usize],
) -> Result<f64> {
    if complete.is_empty() {
        return Err(Error::Degenerate(
            "loss_pre over zero complete rows; skip the term this batch".into(),
        ));
    }
    let z1c = z1.gather_rows(complete);
    let z2c = z2.gather_rows(complete);
    let p12 = preds.g12.forward(&z1c)?;
    let p21 = preds.g21.forward(&z2c)?;
    let rows: Vec<usize> = (0..complete.len()).collect();
    Ok(mean_row_sq_dist_value(&p12, &z2c, &rows) + mean_row_sq_dist_value(&p21, &z1c, &rows))
}

/// Symmetrized joint cluster distribution of two row-stochastic matrices:
/// sym((1/n) p1' p2). Entries are non-negative and sum to 1.
pub fn joint_distribution(p1: &Matrix, p2: &Matrix) -> Result<Matrix> {
    if p1.shape() != p2.shape() {
        return Err(Error::DimMismatch {
            op: "joint_distribution",
            left: p1.shape_str(),
            right: p2.shape_str(),
        });
    }
    for (name, m) in [("first", p1), ("second", p2)] {
        for i in 0..m.rows() {
            let s: f64 = m.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!(
                    "joint_distribution: {name} input row {i} sums to {s}, expected 1"
                )));
            }
        }
    }
    Ok(joint_distribution_value(p1, p2))
}

/// Entropy-regularized mutual-information objective, minimized during
/// training: -sum_ij P_ij (ln P_ij - (1+eta)(ln P_i + ln P_j)) with marginals
/// P_i, P_j and the 0 ln 0 := 0 convention (floor 1e-16). At eta = 0 this is
/// exactly minus the mutual information of the joint distribution.
pub fn loss_ccl(p: &Matrix, eta_reg: f64) -> Result<f64> {
    validate_joint(p)?;
    if eta_reg < 0.0 {
        return Err(Error::Config(format!(
            "eta_reg must be >= 0, got {eta_reg}"
        )));
    }
    Ok(mi_loss_value(p, eta_reg))
}

/// Tape builders mirroring the value functions; the trainer composes these
/// into the per-batch objective.
pub mod graph {
    use super::*;

    /// Reconstruction term: mean squared row distance to the (constant) input.
    pub fn rec_term(t: &mut Tape, x_const: NodeId, x_hat: NodeId) -> Result<NodeId> {
        t.mean_row_sq_dist(x_hat, x_const)
    }

    /// One direction of the agreement term; `z_target` must be a constant
    /// node (stop-gradient side).
    pub fn cml_term(t: &mut Tape, q_online: NodeId, z_target: NodeId) -> Result<NodeId> {
        t.mean_row_sq_dist(q_online, z_target)
    }

    /// Both cross-view prediction residuals; the prediction targets must be
    /// constant nodes.
    pub fn pre_term(
        t: &mut Tape,
        pred12: NodeId,
        z2_const: NodeId,
        pred21: NodeId,
        z1_const: NodeId,
    ) -> Result<NodeId> {
        let a = t.mean_row_sq_dist(pred12, z2_const)?;
        let b = t.mean_row_sq_dist(pred21, z1_const)?;
        t.weighted_sum(&[(a, 1.0), (b, 1.0)])
    }

    /// Mutual-information term over the two cluster-head outputs.
    pub fn ccl_term(t: &mut Tape, p1: NodeId, p2: NodeId, eta_reg: f64) -> Result<NodeId> {
        let joint = t.joint_distribution(p1, p2)?;
        t.mi_loss(joint, eta_reg)
    }
}

/// Value-only probes of objective variants; nothing here is ever trained on.
pub mod diagnostics {
    use super::*;
    use crate::numerics::PROB_FLOOR;

    /// The log-ratio objective -sum_ij P_ij * ln(P_i P_j) / ln(P_i^(1+eta) P_j^(1+eta)).
    /// Algebraically the ratio collapses to 1/(1+eta) wherever the marginals
    /// are nondegenerate, so the whole expression is the constant -1/(1+eta)
    /// regardless of P. Exposed so that property can be observed directly.
    pub fn literal_log_ratio_objective(p: &Matrix, eta_reg: f64) -> Result<f64> {
        validate_joint(p)?;
        let mut r = vec![0.0; p.rows()];
        let mut c = vec![0.0; p.cols()];
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                r[i] += p.get(i, j);
                c[j] += p.get(i, j);
            }
        }
        let coef = 1.0 + eta_reg;
        let mut total = 0.0;
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                let pij = p.get(i, j);
                if pij < PROB_FLOOR {
                    continue;
                }
                let num = r[i].max(PROB_FLOOR).ln() + c[j].max(PROB_FLOOR).ln();
                let den = coef * num;
                if den == 0.0 {
                    continue;
                }
                total += pij * (num / den);
            }
        }
        Ok(-total)
    }
}
