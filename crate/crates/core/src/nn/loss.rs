use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.ndim() != 2 || logits.dim(0) != labels.len() {
        return Err(Error::shape("softmax_cross_entropy", logits.shape(), &[labels.len()]));
    }
    let (b, l) = (logits.dim(0), logits.dim(1));
    if let Some(&bad) = labels.iter().find(|&&y| y >= l) {
        return Err(Error::LabelOutOfRange { label: bad, classes: l });
    }
    let mut grad = Tensor::zeros(&[b, l]);
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for (r, &y) in labels.iter().enumerate() {
        let z = logits.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g = grad.row_mut(r);
        let mut sum = 0.0;
        for (gi, zi) in g.iter_mut().zip(z) {
            *gi = (zi - max).exp();
            sum += *gi;
        }
        loss += sum.ln() - (z[y] - max);
        for gi in g.iter_mut() {
            *gi *= inv_b / sum;
        }
        g[y] -= inv_b;
    }
    Ok((loss * inv_b, grad))
}

/// Index of the largest logit per row (lowest index on ties).
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
