//! Correlation coefficients between predicted and ground-truth scores, and
//! the differentiable PLCC training loss.
//!
//! Ties use midranks for Spearman and the tau-b correction for Kendall.
//! Constant inputs are an error rather than a silent zero.

use std::cmp::Ordering;

use crate::{Error, Result};

/// Added to both variances inside the square roots of [`plcc_loss`], so a
/// batch of identical predictions still has a finite gradient.
pub const PLCC_LOSS_EPS: f64 = 1e-8;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooShort(a.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Moments {
    cov: f64,
    var_a: f64,
    var_b: f64,
}

fn moments(a: &[f64], b: &[f64]) -> Moments {
    let (ma, mb) = (mean(a), mean(b));
    let n = a.len() as f64;
    let mut m = Moments {
        cov: 0.0,
        var_a: 0.0,
        var_b: 0.0,
    };
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        m.cov += dx * dy;
        m.var_a += dx * dx;
        m.var_b += dy * dy;
    }
    m.cov /= n;
    m.var_a /= n;
    m.var_b /= n;
    m
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Result<f64> {
    let m = moments(a, b);
    if m.var_a <= 0.0 || m.var_b <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((m.cov / (m.var_a.sqrt() * m.var_b.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson linear correlation coefficient.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson_unchecked(a, b)
}

/// 1-based ranks, tied values sharing the mean of the ranks they span.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson of the midrank vectors.
pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson_unchecked(&midranks(a), &midranks(b))
}

/// Kendall tau-b, counted in `O(n log n)` with a merge sort.
pub fn krcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let pairs = |t: u64| t * (t.saturating_sub(1)) / 2;
    let n0 = pairs(n as u64);

    // ties in a, and joint ties in (a, b)
    let (mut ties_a, mut ties_ab) = (0u64, 0u64);
    let (mut run_a, mut run_ab) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        if a[i] == a[j] {
            run_a += 1;
            if b[i] == b[j] {
                run_ab += 1;
            } else {
                ties_ab += pairs(run_ab);
                run_ab = 1;
            }
        } else {
            ties_a += pairs(run_a);
            ties_ab += pairs(run_ab);
            run_a = 1;
            run_ab = 1;
        }
    }
    ties_a += pairs(run_a);
    ties_ab += pairs(run_ab);

    let mut ys: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let swaps = merge_count(&mut ys);

    let mut ties_b = 0u64;
    let mut run = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            ties_b += pairs(run);
            run = 1;
        }
    }
    ties_b += pairs(run);

    let denom_a = n0 - ties_a;
    let denom_b = n0 - ties_b;
    if denom_a == 0 || denom_b == 0 {
        return Err(Error::DegenerateVariance);
    }
    let numer = n0 as f64 - ties_a as f64 - ties_b as f64 + ties_ab as f64 - 2.0 * swaps as f64;
    Ok((numer / ((denom_a as f64).sqrt() * (denom_b as f64).sqrt())).clamp(-1.0, 1.0))
}

/// Stable merge sort returning the number of inversions (strictly greater
/// elements preceding smaller ones).
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            merged.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// `(1 - r) / 2` where `r` is the PLCC of the batch, with
/// [`PLCC_LOSS_EPS`] added to each variance under its square root.
pub fn plcc_loss(pred: &[f64], gt: &[f64]) -> Result<f64> {
    Ok(plcc_loss_with_grad(pred, gt)?.0)
}

/// The loss and its gradient with respect to `pred`.
pub fn plcc_loss_with_grad(pred: &[f64], gt: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_pair(pred, gt)?;
    let m = moments(pred, gt);
    if m.var_b <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let sp = (m.var_a + PLCC_LOSS_EPS).sqrt();
    let sg = (m.var_b + PLCC_LOSS_EPS).sqrt();
    let r = m.cov / (sp * sg);
    let n = pred.len() as f64;
    let (mp, mg) = (mean(pred), mean(gt));
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let (dp, dg) = (p - mp, g - mg);
            let dr = (dg - m.cov * dp / (sp * sp)) / (n * sp * sg);
            -0.5 * dr
        })
        .collect();
    Ok(((1.0 - r) / 2.0, grad))
}
