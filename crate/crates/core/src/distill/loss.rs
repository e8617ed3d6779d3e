//! Deep hierarchical loss and temperature-scaled distillation loss, each
//! returning its value and the analytic gradient with respect to logits.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::taxonomy::{node_probabilities, softmax_into, RankedPath, TaxTree, PROB_FLOOR, ROOT};

/// `softmax(logits / tau)`.
pub fn soften(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if logits.is_empty() {
        return Err(Error::DegenerateTree);
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, tau, &mut out);
    Ok(out)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature must be > 0, got {tau}")))
    }
}

/// Mean negative path log-likelihood over the batch, by target path.
pub fn hier_loss(
    tree: &TaxTree,
    logits: ArrayView2<f64>,
    targets: &[RankedPath],
) -> Result<(f64, Array2<f64>)> {
    let ids = targets
        .iter()
        .map(|t| tree.resolve(t))
        .collect::<Result<Vec<_>>>()?;
    hier_loss_ids(tree, logits, &ids)
}

/// As [`hier_loss`] with targets already resolved to node ids; [`ROOT`]
/// marks an unlabeled row, which contributes nothing.
pub fn hier_loss_ids(
    tree: &TaxTree,
    logits: ArrayView2<f64>,
    targets: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (b, n) = logits.dim();
    if b == 0 {
        return Err(Error::Empty("empty batch".into()));
    }
    if targets.len() != b {
        return Err(Error::Shape(format!("{} targets for {b} rows", targets.len())));
    }
    if n != tree.n_leaves() {
        return Err(Error::Shape(format!(
            "{n} logits for {} leaves",
            tree.n_leaves()
        )));
    }
    let scale = 1.0 / b as f64;
    let mut grad = Array2::zeros((b, n));
    let mut total = 0.0;
    let mut probs = vec![0.0; n];
    for (i, (row, &target)) in logits.rows().into_iter().zip(targets).enumerate() {
        if target == ROOT {
            continue;
        }
        let z = row.to_vec();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit in row {i}")));
        }
        softmax_into(&z, 1.0, &mut probs);
        let node_p = node_probabilities(tree, &probs)?;
        let mut g = grad.row_mut(i);
        for &u in tree.path_ids(target) {
            let pu = node_p[u];
            if pu < PROB_FLOOR {
                total += PROB_FLOOR.ln();
                continue;
            }
            total += pu.ln();
            // d(-log P(u))/dz_k = p_k - 1[k in u] p_k / P(u)
            let inside = tree.descendant_leaves(u);
            for k in 0..n {
                let mut d = probs[k];
                if inside.contains(&k) {
                    d -= probs[k] / pu;
                }
                g[k] += d * scale;
            }
        }
    }
    Ok((-total * scale, grad))
}

/// `(tau^2 / B) sum_i KL(q_T || q_S)` at temperature `tau`, and its gradient
/// with respect to the student logits. Teacher logits are constants here.
pub fn kd_loss(
    teacher: ArrayView2<f64>,
    student: ArrayView2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    check_tau(tau)?;
    if teacher.dim() != student.dim() {
        return Err(Error::Shape(format!(
            "teacher logits {:?} vs student logits {:?}",
            teacher.dim(),
            student.dim()
        )));
    }
    let (b, n) = student.dim();
    if b == 0 {
        return Err(Error::Empty("empty batch".into()));
    }
    let mut grad = Array2::zeros((b, n));
    let mut total = 0.0;
    let mut q_t = vec![0.0; n];
    let mut q_s = vec![0.0; n];
    let row_grad_scale = tau / b as f64;
    for i in 0..b {
        let t = teacher.row(i).to_vec();
        let s = student.row(i).to_vec();
        if t.iter().chain(&s).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit in row {i}")));
        }
        softmax_into(&t, tau, &mut q_t);
        softmax_into(&s, tau, &mut q_s);
        let mut row = 0.0;
        // Teacher mass on unclamped student entries.
        let mut live_mass = 0.0;
        for l in 0..n {
            if q_t[l] > 0.0 {
                row += q_t[l] * (q_t[l].ln() - q_s[l].max(PROB_FLOOR).ln());
            }
            if q_s[l] >= PROB_FLOOR {
                live_mass += q_t[l];
            }
        }
        if q_s.iter().all(|&q| q >= PROB_FLOOR) {
            if let Some(kl) = kl_from_logits(&t, &s, tau, &q_t, &q_s) {
                row = kl;
            }
        }
        total += row.max(0.0);
        let mut g = grad.row_mut(i);
        for l in 0..n {
            let live = if q_s[l] >= PROB_FLOOR { q_t[l] } else { 0.0 };
            g[l] = row_grad_scale * (q_s[l] * live_mass - live);
        }
    }
    Ok((tau * tau * total / b as f64, grad))
}

/// Unclamped KL(q_t || q_s) from logit differences. The log ratio is
/// `d_l - ln sum_k q_s[k] e^{d_k}` with `d = (t - s) / tau`; centring `d`
/// on its student mean keeps the correction term near zero, so close pairs
/// don't lose their digits to cancellation the way `ln q_t - ln q_s` does.
fn kl_from_logits(t: &[f64], s: &[f64], tau: f64, q_t: &[f64], q_s: &[f64]) -> Option<f64> {
    let d: Vec<f64> = t.iter().zip(s).map(|(a, b)| (a - b) / tau).collect();
    let centre: f64 = d.iter().zip(q_s).map(|(x, q)| x * q).sum();
    let mut first = 0.0;
    let mut corr = 0.0;
    for ((x, qt), qs) in d.iter().zip(q_t).zip(q_s) {
        let x = x - centre;
        first += qt * x;
        corr += qs * x.exp_m1();
    }
    let kl = first - corr.ln_1p();
    kl.is_finite().then_some(kl)
}
