//! Q,K,V attention pipelines with softmax or linear row normalization,
//! followed by the thresholded read-out network.
//!
//! The pipeline evaluates the score matrix `S = A1 X A2^T` directly, where
//! `X = QK^T`. The Kronecker route `exp((A1 ⊗ A2) vec(X))` is only used to
//! cross-check it, since it costs `n^2 d^2` memory.

use crate::error::{shape_err, Error, Result};
use crate::linalg::{normalize_exp, normalize_lin, relu, relu_shift, Matrix};
use crate::{Kind, Label};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionInstance {
    pub a1: Matrix,
    pub a2: Matrix,
    pub a3: Matrix,
    /// Planted row of `A2`/`A3` (0-based).
    pub j3: usize,
    /// Planted row of `A1` for cross-attention (0-based).
    pub j2: Option<usize>,
    pub label: Label,
}

impl AttentionInstance {
    pub fn n(&self) -> usize {
        self.a1.rows()
    }

    pub fn d(&self) -> usize {
        self.a1.cols()
    }

    pub fn is_cross(&self) -> bool {
        self.j2.is_some()
    }

    fn check_shapes(&self) -> Result<()> {
        let shape = self.a1.shape();
        for (name, m) in [("A2", &self.a2), ("A3", &self.a3)] {
            if m.shape() != shape {
                return Err(shape_err(
                    "AttentionInstance",
                    format!("{name} of shape {}x{}", shape.0, shape.1),
                    format!("{}x{}", m.rows(), m.cols()),
                ));
            }
        }
        Ok(())
    }
}

/// Fixed network: combined key-query matrix `X = QK^T`, value matrix `V`,
/// Rademacher read-out `y` (`d x m`) and threshold `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub x: Matrix,
    pub v: Matrix,
    pub y: Matrix,
    pub tau: f64,
}

impl NetworkParams {
    pub fn new(x: Matrix, v: Matrix, y: Matrix, tau: f64) -> Result<Self> {
        let d = x.rows();
        if x.cols() != d || v.shape() != (d, d) {
            return Err(shape_err(
                "NetworkParams",
                format!("X and V of shape {d}x{d}"),
                format!("X {:?}, V {:?}", x.shape(), v.shape()),
            ));
        }
        if y.rows() != d {
            return Err(shape_err(
                "NetworkParams",
                format!("y with {d} rows"),
                format!("{} rows", y.rows()),
            ));
        }
        if y.cols() == 0 {
            return Err(Error::InvalidConfig("read-out width m must be >= 1".into()));
        }
        if y.as_slice().iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidConfig(
                "read-out entries must be +1 or -1".into(),
            ));
        }
        Ok(Self { x, v, y, tau })
    }

    pub fn d(&self) -> usize {
        self.x.rows()
    }

    pub fn m(&self) -> usize {
        self.y.cols()
    }
}

/// Pre-nonlinearity scores `S = A1 X A2^T` (`n x n`).
pub fn scores(inst: &AttentionInstance, params: &NetworkParams) -> Result<Matrix> {
    inst.check_shapes()?;
    if inst.d() != params.d() {
        return Err(shape_err(
            "scores",
            format!("X of size {}x{}", inst.d(), inst.d()),
            format!("{}x{}", params.d(), params.d()),
        ));
    }
    inst.a1.matmul(&params.x)?.matmul_transposed(&inst.a2)
}

/// Row-wise softmax or linear normalization of the score matrix.
pub fn attention_rows(s: &Matrix, kind: Kind) -> Result<Matrix> {
    let mut out = Matrix::zeros(s.rows(), s.cols());
    for i in 0..s.rows() {
        let row = match kind {
            Kind::Exp => normalize_exp(s.row(i)),
            Kind::Lin => normalize_lin(s.row(i))?,
        };
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

/// Value contraction `C = F A3 V` (`n x d`).
pub fn c_matrix(f: &Matrix, inst: &AttentionInstance, params: &NetworkParams) -> Result<Matrix> {
    let values = inst.a3.matmul(&params.v)?;
    f.matmul(&values)
}

/// `relu( sum_{j0} sum_l relu_tau(<C_{j0}, y_l>) )`.
pub fn network_output(c: &Matrix, params: &NetworkParams) -> Result<f64> {
    if c.cols() != params.y.rows() {
        return Err(shape_err(
            "network_output",
            format!("y with {} rows", c.cols()),
            format!("{} rows", params.y.rows()),
        ));
    }
    let projected = c.matmul(&params.y)?;
    let total: f64 = projected
        .as_slice()
        .iter()
        .map(|&z| relu_shift(z, params.tau))
        .sum();
    Ok(relu(total))
}

/// Every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    pub scores: Matrix,
    pub f: Matrix,
    pub c: Matrix,
    pub output: f64,
}

pub fn forward_trace(
    inst: &AttentionInstance,
    params: &NetworkParams,
    kind: Kind,
) -> Result<Trace> {
    let s = scores(inst, params)?;
    trace_from_scores(s, inst, params, kind)
}

pub(crate) fn trace_from_scores(
    scores: Matrix,
    inst: &AttentionInstance,
    params: &NetworkParams,
    kind: Kind,
) -> Result<Trace> {
    let f = attention_rows(&scores, kind)?;
    let c = c_matrix(&f, inst, params)?;
    let output = network_output(&c, params)?;
    Ok(Trace {
        scores,
        f,
        c,
        output,
    })
}

/// `F_exp` or `F_lin` on one instance.
pub fn forward(inst: &AttentionInstance, params: &NetworkParams, kind: Kind) -> Result<f64> {
    forward_trace(inst, params, kind).map(|t| t.output)
}

/// `(F_exp, F_lin)` sharing one score evaluation.
pub fn forward_both(inst: &AttentionInstance, params: &NetworkParams) -> Result<(f64, f64)> {
    let s = scores(inst, params)?;
    let exp = network_output(
        &c_matrix(&attention_rows(&s, Kind::Exp)?, inst, params)?,
        params,
    )?;
    let lin = network_output(
        &c_matrix(&attention_rows(&s, Kind::Lin)?, inst, params)?,
        params,
    )?;
    Ok((exp, lin))
}

/// Scores through the Kronecker route: block `j0` of `(A1 ⊗ A2) vec(X)`,
/// reshaped back to `n x n`.
pub fn kron_scores(a1: &Matrix, a2: &Matrix, x: &Matrix) -> Result<Matrix> {
    if a1.cols() != x.rows() || a2.cols() != x.cols() {
        return Err(shape_err(
            "kron_scores",
            format!("X of shape {}x{}", a1.cols(), a2.cols()),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    let big = a1.kron(a2);
    let flat = big.matvec(&x.vec())?;
    Matrix::from_vec(a1.rows(), a2.rows(), flat.into_inner())
}

fn tensor_trick_sides(a1: &Matrix, a2: &Matrix, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let direct = a1.matmul(x)?.matmul_transposed(a2)?.map(f64::exp).vec();
    let via_kron = kron_scores(a1, a2, x)?.map(f64::exp).vec();
    Ok((direct.into_inner(), via_kron.into_inner()))
}

/// Max absolute elementwise gap between `vec(exp(A1 X A2^T))` and
/// `exp((A1 ⊗ A2) vec(X))`.
pub fn tensor_trick_residual(a1: &Matrix, a2: &Matrix, x: &Matrix) -> Result<f64> {
    let (p, q) = tensor_trick_sides(a1, a2, x)?;
    Ok(crate::linalg::max_abs_diff(&p, &q))
}

/// Same gap, each entry scaled by `max(|lhs|, |rhs|, 1)`.
pub fn tensor_trick_relative_residual(a1: &Matrix, a2: &Matrix, x: &Matrix) -> Result<f64> {
    let (p, q) = tensor_trick_sides(a1, a2, x)?;
    Ok(p.iter()
        .zip(&q)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
        .fold(0.0, f64::max))
}
