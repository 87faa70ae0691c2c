//! BiDAF-style co-attention between the current node's sequence and one
//! neighbor's sequence.
//!
//! Given the current node C (T x D) and a neighbor S (L x D):
//!
//! 1. affinity  M[i][j] = proj_i . [S_i ; C_j ; S_i * C_j] + bias, M is L x T
//! 2. per current token j, attention over neighbor tokens:
//!        a_j = softmax(M[:, j]),  S~_j = sum_k a_jk S_k
//! 3. one global neighbor-to-current distribution:
//!        b = softmax(max over the L axis of M),  C~_j = sum_k b_k C_k
//! 4. O~_j = [C_j ; S~_j ; C_j * S~_j ; C_j * C~_j], O~ is T x 4D
//! 5. O = activation(O~ . proj_o + bias), O is T x D
//!
//! The output keeps the current node's length T for any neighbor length L,
//! which is what lets message passing run over nodes of mixed lengths.

use crate::params::Binder;
use crate::tensor::{Axis, Matrix, ReduceKind, Tape, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(&self, t: &Tensor) -> Tensor {
        match self {
            Activation::Relu => t.relu(),
            Activation::Identity => t.clone(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Weights of one co-attention aggregator: a 3D -> 1 input projection and a
/// 4D -> D output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct CoattnParams {
    /// 3D x 1 weight column of the scalar affinity projection.
    pub proj_i_w: Matrix,
    /// 1 x 1 bias of the affinity projection.
    pub proj_i_b: Matrix,
    /// 4D x D weights of the output projection.
    pub proj_o_w: Matrix,
    /// 1 x D bias row of the output projection.
    pub proj_o_b: Matrix,
    pub activation: Activation,
}

impl CoattnParams {
    pub fn zeros(dim: usize, activation: Activation) -> Self {
        CoattnParams {
            proj_i_w: Matrix::zeros(3 * dim, 1),
            proj_i_b: Matrix::zeros(1, 1),
            proj_o_w: Matrix::zeros(4 * dim, dim),
            proj_o_b: Matrix::zeros(1, dim),
            activation,
        }
    }

    pub fn dim(&self) -> usize {
        self.proj_o_w.cols()
    }

    /// Trainable weight count, biases excluded: 3D for proj_i plus 4D^2 for
    /// proj_o.
    pub fn weight_count(&self) -> usize {
        self.proj_i_w.len() + self.proj_o_w.len()
    }

    pub fn bias_count(&self) -> usize {
        self.proj_i_b.len() + self.proj_o_b.len()
    }

    pub fn bind(&self, binder: &mut Binder, prefix: &str) -> CoattnBound {
        CoattnBound {
            proj_i_w: binder.bind(format!("{prefix}.proj_i_w"), &self.proj_i_w),
            proj_i_b: binder.bind(format!("{prefix}.proj_i_b"), &self.proj_i_b),
            proj_o_w: binder.bind(format!("{prefix}.proj_o_w"), &self.proj_o_w),
            proj_o_b: binder.bind(format!("{prefix}.proj_o_b"), &self.proj_o_b),
            activation: self.activation,
        }
    }
}

/// Co-attention parameters registered on a tape.
#[derive(Clone)]
pub struct CoattnBound {
    pub proj_i_w: Tensor,
    pub proj_i_b: Tensor,
    pub proj_o_w: Tensor,
    pub proj_o_b: Tensor,
    pub activation: Activation,
}

impl CoattnBound {
    pub fn dim(&self) -> usize {
        self.proj_o_w.cols()
    }

    /// Bind raw tensors as parameters (used by gradient checks that
    /// differentiate with respect to the projections themselves).
    pub fn from_tensors(
        proj_i_w: Tensor,
        proj_i_b: Tensor,
        proj_o_w: Tensor,
        proj_o_b: Tensor,
        activation: Activation,
    ) -> Self {
        CoattnBound {
            proj_i_w,
            proj_i_b,
            proj_o_w,
            proj_o_b,
            activation,
        }
    }
}

/// Intermediates of one co-attention application, kept for inspection and
/// heatmap export.
#[derive(Clone)]
pub struct CoattnTrace {
    /// L x T affinity matrix.
    pub affinity: Tensor,
    /// T x L rows of per-current-token attention over neighbor tokens.
    pub current_to_neighbor: Tensor,
    /// 1 x T neighbor-side distribution over current tokens.
    pub neighbor_summary_weights: Tensor,
    /// T x D attended neighbor sequence.
    pub attended_neighbor: Tensor,
    /// T x D attended current summary; every row is the same weighted sum.
    pub attended_current: Tensor,
    /// T x 4D fused features before the output projection.
    pub fused: Tensor,
    /// T x D output.
    pub output: Tensor,
}

fn dim_guard(c: &Tensor, s: &Tensor, p: &CoattnBound) -> Result<(), TensorError> {
    if c.cols() != s.cols() || c.cols() != p.dim() {
        return Err(TensorError::ShapeMismatch {
            op: "coattn",
            lhs: c.shape(),
            rhs: s.shape(),
        });
    }
    Ok(())
}

/// Affinity matrix M (L x T): M[i][j] scores neighbor token i against
/// current token j through the 3D -> 1 projection of [S_i; C_j; S_i * C_j].
pub fn affinity(
    tape: &Tape,
    current: &Tensor,
    neighbor: &Tensor,
    p: &CoattnBound,
) -> Result<Tensor, TensorError> {
    dim_guard(current, neighbor, p)?;
    let d = p.dim();
    let t_len = current.rows();
    let l_len = neighbor.rows();

    let w_s = p.proj_i_w.slice_rows(0, d)?;
    let w_c = p.proj_i_w.slice_rows(d, d)?;
    let w_m = p.proj_i_w.slice_rows(2 * d, d)?;

    // Row/column broadcasts are expressed as products with all-ones vectors,
    // so the existing matmul backward covers them.
    let ones_l1 = tape.ones(l_len, 1);
    let ones_1t = tape.ones(1, t_len);

    let s_scores = neighbor.matmul(&w_s)?.matmul(&ones_1t)?; // L x T
    let c_scores = ones_l1.matmul(&current.matmul(&w_c)?.transpose())?; // L x T
    let w_m_rows = ones_l1.matmul(&w_m.transpose())?; // L x D
    let prod_scores = neighbor.mul(&w_m_rows)?.matmul(&current.transpose())?; // L x T
    let bias = ones_l1.matmul(&p.proj_i_b)?.matmul(&ones_1t)?; // L x T

    s_scores.add(&c_scores)?.add(&prod_scores)?.add(&bias)
}

/// Full co-attention: neighbor-aware representation of the current node.
pub fn coattn_forward(
    tape: &Tape,
    current: &Tensor,
    neighbor: &Tensor,
    p: &CoattnBound,
) -> Result<(Tensor, CoattnTrace), TensorError> {
    let t_len = current.rows();
    let m = affinity(tape, current, neighbor, p)?;

    // a_j = softmax over the neighbor axis of column j; rows of `a` index
    // current tokens.
    let a = m.transpose().softmax_rows();
    let attended_neighbor = a.matmul(neighbor)?;

    // b = softmax of the per-current-token maxima over the neighbor axis.
    let b = m.reduce(Axis::Rows, ReduceKind::Max)?.softmax_rows();
    let attended_current_row = b.matmul(current)?; // 1 x D
    let attended_current = tape.ones(t_len, 1).matmul(&attended_current_row)?;

    let fused = Tensor::concat_cols(&[
        current,
        &attended_neighbor,
        &current.mul(&attended_neighbor)?,
        &current.mul(&attended_current)?,
    ])?;

    let bias_rows = tape.ones(t_len, 1).matmul(&p.proj_o_b)?;
    let pre = fused.matmul(&p.proj_o_w)?.add(&bias_rows)?;
    let output = p.activation.apply(&pre);

    if !output.is_finite() {
        let v = output.value();
        for r in 0..v.rows() {
            for c in 0..v.cols() {
                if !v.get(r, c).is_finite() {
                    return Err(TensorError::NonFinite {
                        op: "coattn_forward",
                        input: 0,
                        row: r,
                        col: c,
                    });
                }
            }
        }
    }

    let trace = CoattnTrace {
        affinity: m,
        current_to_neighbor: a,
        neighbor_summary_weights: b,
        attended_neighbor,
        attended_current,
        fused,
        output: output.clone(),
    };
    Ok((output, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapNormalize {
    /// Softmax along the neighbor axis of each current-token column, showing
    /// where each current token attends.
    NeighborAxis,
    None,
}

/// CSV plus 8-bit binary portable graymap of an affinity matrix. The CSV has
/// current-node token labels across the first row and neighbor token labels
/// down the first column; cells carry 6 decimal places. The image is
/// min-max scaled, L rows by T columns.
pub struct Heatmap {
    pub csv: String,
    pub pgm: Vec<u8>,
}

pub fn export_heatmap(
    trace: &CoattnTrace,
    normalize: HeatmapNormalize,
    current_labels: Option<&[String]>,
    neighbor_labels: Option<&[String]>,
) -> Heatmap {
    let m = trace.affinity.value();
    let (l_len, t_len) = m.shape();
    let values = match normalize {
        HeatmapNormalize::None => m,
        HeatmapNormalize::NeighborAxis => {
            // Column-wise softmax over the L axis.
            let mut out = Matrix::zeros(l_len, t_len);
            for j in 0..t_len {
                let col: Vec<f64> = (0..l_len).map(|i| m.get(i, j)).collect();
                let mx = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = col.iter().map(|v| (v - mx).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for i in 0..l_len {
                    out.set(i, j, exps[i] / sum);
                }
            }
            out
        }
    };

    let label = |labels: Option<&[String]>, idx: usize, fallback: char| -> String {
        match labels {
            Some(ls) if idx < ls.len() => ls[idx].clone(),
            _ => format!("{fallback}{idx}"),
        }
    };

    let mut csv = String::new();
    for j in 0..t_len {
        csv.push(',');
        csv.push_str(&label(current_labels, j, 't'));
    }
    csv.push('\n');
    for i in 0..l_len {
        csv.push_str(&label(neighbor_labels, i, 'n'));
        for j in 0..t_len {
            csv.push_str(&format!(",{:.6}", values.get(i, j)));
        }
        csv.push('\n');
    }

    let min = values.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut pgm = format!("P5\n{t_len} {l_len}\n255\n").into_bytes();
    for v in values.data() {
        let byte = if span > 0.0 {
            ((v - min) / span * 255.0).round() as u8
        } else {
            0
        };
        pgm.push(byte);
    }

    Heatmap { csv, pgm }
}
