//! Multiclass softmax objective and the regularized split gain.

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the true class under softmax(scores).
pub fn log_loss(scores: &[f64], true_class: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    lse - scores[true_class]
}

/// Gradient `p_k - 1[k = true]` and diagonal Hessian `p_k (1 - p_k)` of the
/// log-loss with respect to each class score.
pub fn softmax_grad_hess(scores: &[f64], true_class: usize) -> (Vec<f64>, Vec<f64>) {
    let p = softmax(scores);
    let g = p.iter().enumerate().map(|(k, &pk)| if k == true_class { pk - 1.0 } else { pk }).collect();
    let h = p.iter().map(|&pk| pk * (1.0 - pk)).collect();
    (g, h)
}

/// Regularized structure-score improvement of splitting a node into the
/// given halves.
pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(g_left, h_left) + score(g_right, h_right) - score(g_left + g_right, h_left + h_right)) - gamma
}

/// Optimal leaf weight `-G / (H + lambda)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    if g == 0.0 {
        0.0
    } else {
        -g / (h + lambda)
    }
}
