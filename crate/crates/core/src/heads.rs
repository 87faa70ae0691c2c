//! Prediction heads over message-passing output: answer-span extraction on
//! re-concatenated sequences, per-node supporting classification, and the
//! two-step attentive readout for graph classification.

use thiserror::Error;

use crate::layers::{summarize_node, AttentivePoolBound, AttentivePoolParams, SummarizerBound};
use crate::params::Binder;
use crate::tensor::{Matrix, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("head applied to an empty graph")]
    EmptyGraph,
    #[error("loss weight lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("gold label {label} out of range ({extent})")]
    LabelOutOfRange { label: usize, extent: usize },
    #[error("order must be a permutation of node ids 0..{nodes}")]
    BadOrder { nodes: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Span head parameters: two independent D -> 1 projections.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanHeadParams {
    pub start_w: Matrix,
    pub start_b: Matrix,
    pub end_w: Matrix,
    pub end_b: Matrix,
}

impl SpanHeadParams {
    pub fn zeros(dim: usize) -> Self {
        SpanHeadParams {
            start_w: Matrix::zeros(dim, 1),
            start_b: Matrix::zeros(1, 1),
            end_w: Matrix::zeros(dim, 1),
            end_b: Matrix::zeros(1, 1),
        }
    }

    pub fn weight_count(&self) -> usize {
        self.start_w.len() + self.end_w.len()
    }

    pub fn bind(&self, binder: &mut Binder, prefix: &str) -> SpanHeadBound {
        SpanHeadBound {
            start_w: binder.bind(format!("{prefix}.start_w"), &self.start_w),
            start_b: binder.bind(format!("{prefix}.start_b"), &self.start_b),
            end_w: binder.bind(format!("{prefix}.end_w"), &self.end_w),
            end_b: binder.bind(format!("{prefix}.end_b"), &self.end_b),
        }
    }
}

#[derive(Clone)]
pub struct SpanHeadBound {
    pub start_w: Tensor,
    pub start_b: Tensor,
    pub end_w: Tensor,
    pub end_b: Tensor,
}

/// Start/end logits over the concatenated token axis plus the greedy decode.
pub struct SpanPrediction {
    pub start_logits: Tensor,
    pub end_logits: Tensor,
    /// Global (start, end) token indices, start <= end <= start + window.
    pub decoded: (usize, usize),
    /// Offsets of each node's first token in the concatenation, indexed by
    /// node id, for mapping node-local labels to global positions.
    pub offsets: Vec<usize>,
}

fn project_tokens(
    tape: &Tape,
    cat: &Tensor,
    w: &Tensor,
    b: &Tensor,
) -> Result<Tensor, TensorError> {
    let logits = cat.matmul(w)?; // total x 1
    let bias = tape.ones(logits.rows(), 1).matmul(b)?;
    Ok(logits.add(&bias)?.transpose()) // 1 x total
}

/// Concatenate per-node states in `order` and score every token with two
/// independent linear projections. Decoding picks the argmax start, then the
/// argmax end at >= start within the window (ties to the lowest index).
pub fn span_head(
    tape: &Tape,
    states: &[Tensor],
    order: &[usize],
    params: &SpanHeadBound,
    window: usize,
) -> Result<SpanPrediction, HeadError> {
    if states.is_empty() {
        return Err(HeadError::EmptyGraph);
    }
    let mut seen = vec![false; states.len()];
    for &id in order {
        if id >= states.len() || seen[id] {
            return Err(HeadError::BadOrder {
                nodes: states.len(),
            });
        }
        seen[id] = true;
    }
    if order.len() != states.len() {
        return Err(HeadError::BadOrder {
            nodes: states.len(),
        });
    }

    let mut offsets = vec![0usize; states.len()];
    let mut running = 0usize;
    let ordered: Vec<&Tensor> = order
        .iter()
        .map(|&id| {
            offsets[id] = running;
            running += states[id].rows();
            &states[id]
        })
        .collect();
    let cat = Tensor::concat_rows(&ordered)?;

    let start_logits = project_tokens(tape, &cat, &params.start_w, &params.start_b)?;
    let end_logits = project_tokens(tape, &cat, &params.end_w, &params.end_b)?;

    let sv = start_logits.value();
    let ev = end_logits.value();
    let total = sv.cols();
    let mut best_start = 0;
    for i in 1..total {
        if sv.get(0, i) > sv.get(0, best_start) {
            best_start = i;
        }
    }
    let hi = (best_start + window).min(total - 1);
    let mut best_end = best_start;
    for i in best_start..=hi {
        if ev.get(0, i) > ev.get(0, best_end) {
            best_end = i;
        }
    }

    Ok(SpanPrediction {
        start_logits,
        end_logits,
        decoded: (best_start, best_end),
        offsets,
    })
}

/// Cross entropy on the start position plus cross entropy on the end
/// position, against global gold indices.
pub fn span_loss(
    prediction: &SpanPrediction,
    gold_start: usize,
    gold_end: usize,
) -> Result<Tensor, HeadError> {
    let total = prediction.start_logits.cols();
    for gold in [gold_start, gold_end] {
        if gold >= total {
            return Err(HeadError::LabelOutOfRange {
                label: gold,
                extent: total,
            });
        }
    }
    let start_ce = cross_entropy_row(&prediction.start_logits, gold_start)?;
    let end_ce = cross_entropy_row(&prediction.end_logits, gold_end)?;
    Ok(start_ce.add(&end_ce)?)
}

/// -log softmax(logits)[gold] for a 1 x N logits row.
fn cross_entropy_row(logits: &Tensor, gold: usize) -> Result<Tensor, TensorError> {
    logits
        .log_softmax_rows()
        .slice_cols(gold, 1)?
        .scale(-1.0)
        .sum_all()
        .pipe()
}

trait Pipe: Sized {
    fn pipe(self) -> Result<Self, TensorError> {
        Ok(self)
    }
}
impl Pipe for Tensor {}

/// Supporting-node head: pool each node's sequence, project to one logit,
/// squash with a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeHeadParams {
    pub pool: AttentivePoolParams,
    pub w: Matrix,
    pub b: Matrix,
}

impl NodeHeadParams {
    pub fn zeros(dim: usize) -> Self {
        NodeHeadParams {
            pool: AttentivePoolParams::zeros(dim),
            w: Matrix::zeros(dim, 1),
            b: Matrix::zeros(1, 1),
        }
    }

    pub fn weight_count(&self) -> usize {
        self.pool.weight_count() + self.w.len()
    }

    pub fn bind(&self, binder: &mut Binder, prefix: &str) -> NodeHeadBound {
        NodeHeadBound {
            pool: self.pool.bind(binder, &format!("{prefix}.pool")),
            w: binder.bind(format!("{prefix}.w"), &self.w),
            b: binder.bind(format!("{prefix}.b"), &self.b),
        }
    }
}

#[derive(Clone)]
pub struct NodeHeadBound {
    pub pool: AttentivePoolBound,
    pub w: Tensor,
    pub b: Tensor,
}

pub struct NodePrediction {
    /// 1 x N logits row, one per node.
    pub logits: Tensor,
    /// Per-node probability of the positive class.
    pub probs: Vec<f64>,
}

impl NodePrediction {
    /// Node ids predicted positive at the 0.5 threshold.
    pub fn positive_set(&self) -> std::collections::BTreeSet<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.5)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn node_head(
    _tape: &Tape,
    states: &[Tensor],
    params: &NodeHeadBound,
) -> Result<NodePrediction, HeadError> {
    if states.is_empty() {
        return Err(HeadError::EmptyGraph);
    }
    let pool = SummarizerBound::Attentive(params.pool.clone());
    let mut logit_cells = Vec::with_capacity(states.len());
    for state in states {
        let vec = summarize_node(state, &pool)?; // 1 x D
        let logit = vec.matmul(&params.w)?.add(&params.b)?; // 1 x 1
        logit_cells.push(logit);
    }
    let refs: Vec<&Tensor> = logit_cells.iter().collect();
    let logits = Tensor::concat_cols(&refs)?;
    let probs = logits.sigmoid().value().into_vec();
    Ok(NodePrediction { logits, probs })
}

/// Mean binary cross entropy over nodes, computed from logits as
/// softplus(z) - y z, which equals -(y ln p + (1-y) ln(1-p)) with
/// p = sigmoid(z) but stays finite for any logit.
pub fn node_loss(prediction: &NodePrediction, labels: &[bool]) -> Result<Tensor, HeadError> {
    let n = prediction.logits.cols();
    if labels.len() != n {
        return Err(HeadError::BadOrder { nodes: n });
    }
    let soft = prediction.logits.softplus();
    let mut terms = Vec::with_capacity(n);
    for (i, &label) in labels.iter().enumerate() {
        let s = soft.slice_cols(i, 1)?;
        let term = if label {
            s.add(&prediction.logits.slice_cols(i, 1)?.scale(-1.0))?
        } else {
            s
        };
        terms.push(term);
    }
    let refs: Vec<&Tensor> = terms.iter().collect();
    Ok(Tensor::concat_cols(&refs)?.sum_all().div_scalar(n as f64))
}

/// Graph-classification head: attentive pooling per node (step 1), attentive
/// pooling across node vectors (step 2), then a linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphHeadParams {
    pub pool_seq: AttentivePoolParams,
    pub pool_graph: AttentivePoolParams,
    pub cls_w: Matrix,
    pub cls_b: Matrix,
}

impl GraphHeadParams {
    pub fn zeros(dim: usize, num_classes: usize) -> Self {
        assert!(num_classes >= 2, "classification needs at least two classes");
        GraphHeadParams {
            pool_seq: AttentivePoolParams::zeros(dim),
            pool_graph: AttentivePoolParams::zeros(dim),
            cls_w: Matrix::zeros(dim, num_classes),
            cls_b: Matrix::zeros(1, num_classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.cls_w.cols()
    }

    pub fn weight_count(&self) -> usize {
        self.pool_seq.weight_count() + self.pool_graph.weight_count() + self.cls_w.len()
    }

    pub fn bind(&self, binder: &mut Binder, prefix: &str) -> GraphHeadBound {
        GraphHeadBound {
            pool_seq: self.pool_seq.bind(binder, &format!("{prefix}.pool_seq")),
            pool_graph: self.pool_graph.bind(binder, &format!("{prefix}.pool_graph")),
            cls_w: binder.bind(format!("{prefix}.cls_w"), &self.cls_w),
            cls_b: binder.bind(format!("{prefix}.cls_b"), &self.cls_b),
        }
    }
}

#[derive(Clone)]
pub struct GraphHeadBound {
    pub pool_seq: AttentivePoolBound,
    pub pool_graph: AttentivePoolBound,
    pub cls_w: Tensor,
    pub cls_b: Tensor,
}

pub struct GraphPrediction {
    /// 1 x num_classes logits.
    pub logits: Tensor,
    /// 1 x num_classes class distribution.
    pub probs: Matrix,
    pub predicted: usize,
}

pub fn graph_head(
    _tape: &Tape,
    states: &[Tensor],
    params: &GraphHeadBound,
) -> Result<GraphPrediction, HeadError> {
    if states.is_empty() {
        return Err(HeadError::EmptyGraph);
    }
    let pool1 = SummarizerBound::Attentive(params.pool_seq.clone());
    let mut vectors = Vec::with_capacity(states.len());
    for state in states {
        vectors.push(summarize_node(state, &pool1)?);
    }
    let refs: Vec<&Tensor> = vectors.iter().collect();
    let stacked = Tensor::concat_rows(&refs)?; // N x D
    let pool2 = SummarizerBound::Attentive(params.pool_graph.clone());
    let graph_vec = summarize_node(&stacked, &pool2)?; // 1 x D
    let logits = graph_vec.matmul(&params.cls_w)?.add(&params.cls_b)?;
    let probs = logits.softmax_rows().value();
    let mut predicted = 0;
    for c in 1..probs.cols() {
        if probs.get(0, c) > probs.get(0, predicted) {
            predicted = c;
        }
    }
    Ok(GraphPrediction {
        logits,
        probs,
        predicted,
    })
}

pub fn graph_loss(prediction: &GraphPrediction, gold_class: usize) -> Result<Tensor, HeadError> {
    if gold_class >= prediction.logits.cols() {
        return Err(HeadError::LabelOutOfRange {
            label: gold_class,
            extent: prediction.logits.cols(),
        });
    }
    Ok(cross_entropy_row(&prediction.logits, gold_class)?)
}

/// lambda * span_loss + (1 - lambda) * sup_loss.
pub fn joint_loss(
    span_loss: &Tensor,
    sup_loss: &Tensor,
    lambda: f64,
) -> Result<Tensor, HeadError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(HeadError::LambdaOutOfRange(lambda));
    }
    Ok(span_loss
        .scale(lambda)
        .add(&sup_loss.scale(1.0 - lambda))?)
}
