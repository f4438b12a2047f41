//! Analytic gradients of the training losses, exposed for finite-difference
//! checks outside the crate.

use crate::grader::{head_backward, GraderConfig, LinearHead};
use crate::linalg::Matrix;
use crate::verifier::{pair_loss, PairExample, VerifierConfig};
use crate::Result;

/// Weighted BCE of one (report, dimension) pair and its gradients with
/// respect to the query and passage projections.
pub fn verifier_pair(
    wq: &Matrix,
    ws: &Matrix,
    query: &[f64],
    sentences: &[Vec<f64>],
    label: bool,
    positive_weight: f64,
    config: &VerifierConfig,
) -> (f64, Matrix, Matrix) {
    let ex = PairExample {
        query,
        sentences,
        label,
        weight: positive_weight,
    };
    let mut gq = Matrix::zeros(wq.rows, wq.cols);
    let mut gs = Matrix::zeros(ws.rows, ws.cols);
    let loss = pair_loss(wq, ws, &ex, config, Some((&mut gq, &mut gs, 1.0)));
    (loss, gq, gs)
}

/// Grader loss of one input vector and its gradient with respect to the
/// head weights and bias.
pub fn grader_head(head: &LinearHead, x: &[f64], y: u8, config: &GraderConfig) -> Result<(f64, LinearHead)> {
    let (loss, dz) = head_backward(head, x, y, config)?;
    let mut grad = LinearHead::zeros(head.input_dim());
    grad.weights.add_outer(1.0, &dz, x);
    grad.bias = dz;
    Ok((loss, grad))
}
