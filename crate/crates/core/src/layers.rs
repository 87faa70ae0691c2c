//! Message-passing layers: the co-attention GSN layer over sequence states,
//! layer stacking, sequence summarizers, and the early-summarization GCN
//! baseline that operates on pooled node vectors.

use thiserror::Error;

use crate::coattn::{coattn_forward, Activation, CoattnBound, CoattnParams};
use crate::graph::{GraphError, RelationalGraph};
use crate::params::Binder;
use crate::tensor::{Axis, Matrix, ReduceKind, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("layer has {params} relation parameter sets but graph has {graph} relations")]
    RelationMismatch { params: usize, graph: usize },
    #[error("layer got {states} states for {nodes} nodes")]
    StateCountMismatch { states: usize, nodes: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Sorted per-relation, per-node neighbor lists, precomputed once per graph.
#[derive(Debug, Clone)]
pub struct GraphTopology {
    pub neighbors: Vec<Vec<Vec<usize>>>,
    pub num_nodes: usize,
}

impl GraphTopology {
    pub fn new(g: &RelationalGraph) -> Result<Self, GraphError> {
        let neighbors = (0..g.num_relations())
            .map(|r| g.neighbor_sets(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GraphTopology {
            neighbors,
            num_nodes: g.nodes.len(),
        })
    }

    pub fn num_relations(&self) -> usize {
        self.neighbors.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combiner {
    Max,
    Mean,
}

impl Combiner {
    pub fn tag(&self) -> &'static str {
        match self {
            Combiner::Max => "max",
            Combiner::Mean => "mean",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "max" => Some(Combiner::Max),
            "mean" => Some(Combiner::Mean),
            _ => None,
        }
    }
}

/// One GSN layer: a co-attention parameter set per relation plus the
/// element-wise combiner over the neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct GsnLayerParams {
    pub relations: Vec<CoattnParams>,
    pub combiner: Combiner,
}

impl GsnLayerParams {
    pub fn zeros(dim: usize, num_relations: usize, combiner: Combiner, activation: Activation) -> Self {
        GsnLayerParams {
            relations: (0..num_relations)
                .map(|_| CoattnParams::zeros(dim, activation))
                .collect(),
            combiner,
        }
    }

    /// R * (3D + 4D^2), biases excluded.
    pub fn weight_count(&self) -> usize {
        self.relations.iter().map(|r| r.weight_count()).sum()
    }

    pub fn bind(&self, binder: &mut Binder, prefix: &str) -> GsnLayerBound {
        GsnLayerBound {
            relations: self
                .relations
                .iter()
                .enumerate()
                .map(|(r, p)| p.bind(binder, &format!("{prefix}.rel{r}")))
                .collect(),
            combiner: self.combiner,
        }
    }
}

#[derive(Clone)]
pub struct GsnLayerBound {
    pub relations: Vec<CoattnBound>,
    pub combiner: Combiner,
}

fn combine(terms: &[Tensor], combiner: Combiner) -> Result<Tensor, TensorError> {
    let mut acc = terms[0].clone();
    match combiner {
        Combiner::Max => {
            for t in &terms[1..] {
                acc = acc.max_ewise(t)?;
            }
        }
        Combiner::Mean => {
            for t in &terms[1..] {
                acc = acc.add(t)?;
            }
            acc = acc.div_scalar(terms.len() as f64);
        }
    }
    Ok(acc)
}

/// One message-passing hop. For each node i and relation r, co-attention runs
/// against the node itself and every neighbor in N^r(i), the results combine
/// element-wise (max or mean), and the per-relation results average. Output
/// states keep each node's own length.
///
/// Terms are always evaluated self-first then in ascending neighbor order,
/// so neighbor-list permutations cannot change the result even bitwise.
pub fn gsn_layer_forward(
    tape: &Tape,
    topology: &GraphTopology,
    states: &[Tensor],
    params: &GsnLayerBound,
) -> Result<Vec<Tensor>, LayerError> {
    if params.relations.len() != topology.num_relations() {
        return Err(LayerError::RelationMismatch {
            params: params.relations.len(),
            graph: topology.num_relations(),
        });
    }
    if states.len() != topology.num_nodes {
        return Err(LayerError::StateCountMismatch {
            states: states.len(),
            nodes: topology.num_nodes,
        });
    }
    let num_relations = params.relations.len();
    let mut out = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let mut rel_sum: Option<Tensor> = None;
        for (r, rel_params) in params.relations.iter().enumerate() {
            let mut order: Vec<usize> = topology.neighbors[r][i]
                .iter()
                .copied()
                .filter(|&j| j != i)
                .collect();
            order.sort_unstable();
            order.dedup();

            let mut terms = Vec::with_capacity(order.len() + 1);
            let (self_term, _) = coattn_forward(tape, state, state, rel_params)?;
            terms.push(self_term);
            for j in order {
                let (term, _) = coattn_forward(tape, state, &states[j], rel_params)?;
                terms.push(term);
            }
            let combined = combine(&terms, params.combiner)?;
            rel_sum = Some(match rel_sum {
                None => combined,
                Some(acc) => acc.add(&combined)?,
            });
        }
        out.push(rel_sum.expect("at least one relation").div_scalar(num_relations as f64));
    }
    Ok(out)
}

/// Sequential application of GSN layers; returns every layer's output states,
/// last entry final.
pub fn gsn_stack_forward(
    tape: &Tape,
    topology: &GraphTopology,
    initial: &[Tensor],
    layers: &[GsnLayerBound],
) -> Result<Vec<Vec<Tensor>>, LayerError> {
    assert!(!layers.is_empty(), "stack needs at least one layer");
    let mut per_layer = Vec::with_capacity(layers.len());
    let mut states = initial.to_vec();
    for layer in layers {
        states = gsn_layer_forward(tape, topology, &states, layer)?;
        per_layer.push(states.clone());
    }
    Ok(per_layer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummarizeMethod {
    Mean,
    Max,
    Attentive,
}

impl SummarizeMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            SummarizeMethod::Mean => "mean",
            SummarizeMethod::Max => "max",
            SummarizeMethod::Attentive => "attentive",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "mean" => Some(SummarizeMethod::Mean),
            "max" => Some(SummarizeMethod::Max),
            "attentive" => Some(SummarizeMethod::Attentive),
            _ => None,
        }
    }
}

/// Attentive pooling weights: scores = tanh(V W) u, weights = softmax(scores),
/// output = weighted sum of rows. Zero-initialized scores reduce to mean
/// pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentivePoolParams {
    pub score_w: Matrix,
    pub score_u: Matrix,
}

impl AttentivePoolParams {
    pub fn zeros(dim: usize) -> Self {
        AttentivePoolParams {
            score_w: Matrix::zeros(dim, dim),
            score_u: Matrix::zeros(dim, 1),
        }
    }

    pub fn weight_count(&self) -> usize {
        self.score_w.len() + self.score_u.len()
    }

    pub fn bind(&self, binder: &mut Binder, prefix: &str) -> AttentivePoolBound {
        AttentivePoolBound {
            score_w: binder.bind(format!("{prefix}.score_w"), &self.score_w),
            score_u: binder.bind(format!("{prefix}.score_u"), &self.score_u),
        }
    }
}

#[derive(Clone)]
pub struct AttentivePoolBound {
    pub score_w: Tensor,
    pub score_u: Tensor,
}

impl AttentivePoolBound {
    pub fn from_tensors(score_w: Tensor, score_u: Tensor) -> Self {
        AttentivePoolBound { score_w, score_u }
    }
}

/// Pooling over the sequence axis, T x D -> 1 x D.
#[derive(Clone)]
pub enum SummarizerBound {
    Mean,
    Max,
    Attentive(AttentivePoolBound),
}

pub fn summarize_node(v: &Tensor, summarizer: &SummarizerBound) -> Result<Tensor, TensorError> {
    match summarizer {
        SummarizerBound::Mean => v.reduce(Axis::Rows, ReduceKind::Mean),
        SummarizerBound::Max => v.reduce(Axis::Rows, ReduceKind::Max),
        SummarizerBound::Attentive(p) => {
            let scores = v.matmul(&p.score_w)?.tanh().matmul(&p.score_u)?; // T x 1
            let weights = scores.transpose().softmax_rows(); // 1 x T
            weights.matmul(v)
        }
    }
}

/// Attention weights of the attentive pool (1 x T), for probability checks.
pub fn attentive_pool_weights(
    v: &Tensor,
    p: &AttentivePoolBound,
) -> Result<Tensor, TensorError> {
    let scores = v.matmul(&p.score_w)?.tanh().matmul(&p.score_u)?;
    Ok(scores.transpose().softmax_rows())
}

/// One GCN relation: a square projection with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnRelationParams {
    pub proj_w: Matrix,
    pub proj_b: Matrix,
}

/// GCN layer over pooled node vectors: per relation, average the neighborhood
/// (self included) and project; relation results average.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayerParams {
    pub relations: Vec<GcnRelationParams>,
    pub activation: Activation,
    /// Divide by |N(i) union i| when true (default), by max(|N(i)|, 1)
    /// otherwise.
    pub self_inclusive_norm: bool,
}

impl GcnLayerParams {
    pub fn zeros(dim: usize, num_relations: usize, activation: Activation) -> Self {
        GcnLayerParams {
            relations: (0..num_relations)
                .map(|_| GcnRelationParams {
                    proj_w: Matrix::zeros(dim, dim),
                    proj_b: Matrix::zeros(1, dim),
                })
                .collect(),
            activation,
            self_inclusive_norm: true,
        }
    }

    pub fn identity(dim: usize, num_relations: usize) -> Self {
        let mut p = GcnLayerParams::zeros(dim, num_relations, Activation::Identity);
        for rel in &mut p.relations {
            rel.proj_w = Matrix::identity(dim);
        }
        p
    }

    pub fn weight_count(&self) -> usize {
        self.relations.iter().map(|r| r.proj_w.len()).sum()
    }

    pub fn bind(&self, binder: &mut Binder, prefix: &str) -> GcnLayerBound {
        GcnLayerBound {
            relations: self
                .relations
                .iter()
                .enumerate()
                .map(|(r, p)| GcnRelationBound {
                    proj_w: binder.bind(format!("{prefix}.rel{r}.proj_w"), &p.proj_w),
                    proj_b: binder.bind(format!("{prefix}.rel{r}.proj_b"), &p.proj_b),
                })
                .collect(),
            activation: self.activation,
            self_inclusive_norm: self.self_inclusive_norm,
        }
    }
}

#[derive(Clone)]
pub struct GcnRelationBound {
    pub proj_w: Tensor,
    pub proj_b: Tensor,
}

#[derive(Clone)]
pub struct GcnLayerBound {
    pub relations: Vec<GcnRelationBound>,
    pub activation: Activation,
    pub self_inclusive_norm: bool,
}

pub fn gcn_layer_forward(
    topology: &GraphTopology,
    vectors: &[Tensor],
    params: &GcnLayerBound,
) -> Result<Vec<Tensor>, LayerError> {
    if params.relations.len() != topology.num_relations() {
        return Err(LayerError::RelationMismatch {
            params: params.relations.len(),
            graph: topology.num_relations(),
        });
    }
    if vectors.len() != topology.num_nodes {
        return Err(LayerError::StateCountMismatch {
            states: vectors.len(),
            nodes: topology.num_nodes,
        });
    }
    let num_relations = params.relations.len();
    let mut out = Vec::with_capacity(vectors.len());
    for (i, vec_i) in vectors.iter().enumerate() {
        let mut rel_sum: Option<Tensor> = None;
        for (r, rel) in params.relations.iter().enumerate() {
            let mut order: Vec<usize> = topology.neighbors[r][i]
                .iter()
                .copied()
                .filter(|&j| j != i)
                .collect();
            order.sort_unstable();
            order.dedup();
            let mut sum = vec_i.clone();
            for &j in &order {
                sum = sum.add(&vectors[j])?;
            }
            let divisor = if params.self_inclusive_norm {
                (order.len() + 1) as f64
            } else {
                order.len().max(1) as f64
            };
            let avg = sum.div_scalar(divisor);
            let projected = avg.matmul(&rel.proj_w)?.add(&rel.proj_b)?;
            let activated = params.activation.apply(&projected);
            rel_sum = Some(match rel_sum {
                None => activated,
                Some(acc) => acc.add(&activated)?,
            });
        }
        out.push(rel_sum.expect("at least one relation").div_scalar(num_relations as f64));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SequenceNode;

    fn token_graph(n: usize, relations: usize) -> RelationalGraph {
        let nodes = (0..n)
            .map(|i| SequenceNode::from_tokens(i, vec![1, 2]))
            .collect();
        RelationalGraph::new(nodes, relations)
    }

    fn random_layer_act(
        dim: usize,
        relations: usize,
        combiner: Combiner,
        activation: Activation,
        seed: u64,
    ) -> GsnLayerParams {
        let mut layer = GsnLayerParams::zeros(dim, relations, combiner, activation);
        let mut state = seed.max(1);
        let mut next = move || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for rel in &mut layer.relations {
            for i in 0..rel.proj_i_w.rows() {
                rel.proj_i_w.set(i, 0, next());
            }
            rel.proj_i_b.set(0, 0, next());
            for i in 0..rel.proj_o_w.rows() {
                for j in 0..rel.proj_o_w.cols() {
                    rel.proj_o_w.set(i, j, next() * 0.6);
                }
            }
            for j in 0..rel.proj_o_b.cols() {
                rel.proj_o_b.set(0, j, next());
            }
        }
        layer
    }

    fn random_layer(dim: usize, relations: usize, combiner: Combiner, seed: u64) -> GsnLayerParams {
        random_layer_act(dim, relations, combiner, Activation::Relu, seed)
    }

    fn random_states(tape: &Tape, lens: &[usize], dim: usize, seed: u64) -> Vec<Tensor> {
        let mut state = seed.max(1);
        let mut next = move || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        lens.iter()
            .map(|&t| {
                let data: Vec<f64> = (0..t * dim).map(|_| next()).collect();
                tape.leaf(&Matrix::from_vec(t, dim, data).unwrap())
            })
            .collect()
    }

    fn bind_layer(tape: &Tape, layer: &GsnLayerParams) -> GsnLayerBound {
        let mut binder = Binder::new(tape);
        layer.bind(&mut binder, "layer")
    }

    #[test]
    fn isolated_node_single_relation_is_pure_self_attention() {
        let g = token_graph(1, 1);
        let topology = GraphTopology::new(&g).unwrap();
        let tape = Tape::new();
        let layer = random_layer(3, 1, Combiner::Max, 5);
        let bound = bind_layer(&tape, &layer);
        let states = random_states(&tape, &[4], 3, 9);
        let out = gsn_layer_forward(&tape, &topology, &states, &bound).unwrap();
        let (self_term, _) = coattn_forward(&tape, &states[0], &states[0], &bound.relations[0]).unwrap();
        // combiner over a singleton and the 1-relation average are identities
        assert_eq!(out[0].value(), self_term.value());
    }

    #[test]
    fn neighbor_permutation_leaves_output_bit_identical() {
        let mut g = token_graph(4, 1);
        for (i, j) in [(0, 1), (0, 2), (0, 3), (2, 3)] {
            g.add_edge(0, i, j).unwrap();
        }
        let topo = GraphTopology::new(&g).unwrap();
        let mut permuted = topo.clone();
        permuted.neighbors[0][0] = vec![3, 1, 2];
        permuted.neighbors[0][3] = vec![2, 0];

        for combiner in [Combiner::Max, Combiner::Mean] {
            let tape = Tape::new();
            let layer = random_layer(3, 1, combiner, 11);
            let bound = bind_layer(&tape, &layer);
            let states = random_states(&tape, &[2, 3, 4, 2], 3, 13);
            let a = gsn_layer_forward(&tape, &topo, &states, &bound).unwrap();
            let b = gsn_layer_forward(&tape, &permuted, &states, &bound).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.value().data(), y.value().data(), "{combiner:?}");
            }
        }
    }

    #[test]
    fn duplicate_relations_average_to_single_relation_result() {
        let mut g1 = token_graph(3, 1);
        g1.add_edge(0, 0, 1).unwrap();
        g1.add_edge(0, 1, 2).unwrap();
        let mut g2 = token_graph(3, 2);
        g2.add_edge(0, 0, 1).unwrap();
        g2.add_edge(0, 1, 2).unwrap();
        g2.add_edge(1, 0, 1).unwrap();
        g2.add_edge(1, 1, 2).unwrap();

        let tape = Tape::new();
        let single = random_layer(2, 1, Combiner::Max, 21);
        let mut double = GsnLayerParams {
            relations: vec![single.relations[0].clone(), single.relations[0].clone()],
            combiner: Combiner::Max,
        };
        double.combiner = Combiner::Max;

        let states = random_states(&tape, &[2, 2, 3], 2, 23);
        let b1 = bind_layer(&tape, &single);
        let b2 = bind_layer(&tape, &double);
        let out1 =
            gsn_layer_forward(&tape, &GraphTopology::new(&g1).unwrap(), &states, &b1).unwrap();
        let out2 =
            gsn_layer_forward(&tape, &GraphTopology::new(&g2).unwrap(), &states, &b2).unwrap();
        for (x, y) in out1.iter().zip(&out2) {
            assert_eq!(x.value().data(), y.value().data());
        }
    }

    #[test]
    fn one_layer_stack_equals_layer_forward() {
        let mut g = token_graph(3, 1);
        g.add_edge(0, 0, 1).unwrap();
        let topo = GraphTopology::new(&g).unwrap();
        let tape = Tape::new();
        let layer = random_layer(2, 1, Combiner::Mean, 31);
        let bound = bind_layer(&tape, &layer);
        let states = random_states(&tape, &[2, 2, 2], 2, 33);
        let direct = gsn_layer_forward(&tape, &topo, &states, &bound).unwrap();
        let stacked = gsn_stack_forward(&tape, &topo, &states, &[bound]).unwrap();
        for (x, y) in direct.iter().zip(stacked.last().unwrap()) {
            assert_eq!(x.value().data(), y.value().data());
        }
    }

    #[test]
    fn k_layer_output_depends_only_on_k_hop_neighborhood() {
        // Path 0-1-2-3-4: with 2 layers, node 0 sees nodes up to 2 hops away;
        // perturbing node 3 or 4 must leave node 0's output bit-identical,
        // perturbing node 2 must change it.
        let dim = 2;
        let mut g = token_graph(5, 1);
        for i in 0..4 {
            g.add_edge(0, i, i + 1).unwrap();
        }
        let topo = GraphTopology::new(&g).unwrap();
        // Mean combiner and identity activation keep information flowing, so
        // the in-radius perturbation check cannot be masked by max or relu.
        let layer = random_layer_act(dim, 1, Combiner::Mean, Activation::Identity, 41);
        let lens = [2usize, 3, 2, 3, 2];

        let run = |perturb: Option<usize>| {
            let tape = Tape::new();
            let bound1 = bind_layer(&tape, &layer);
            let bound2 = bind_layer(&tape, &layer);
            let mut states = random_states(&tape, &lens, dim, 43);
            if let Some(p) = perturb {
                let mut v = states[p].value();
                v.set(0, 0, v.get(0, 0) + 10.0);
                states[p] = tape.leaf(&v);
            }
            let layers = vec![bound1, bound2];
            let out = gsn_stack_forward(&tape, &topo, &states, &layers).unwrap();
            out.last().unwrap()[0].value()
        };

        let base = run(None);
        assert_eq!(base.data(), run(Some(3)).data());
        assert_eq!(base.data(), run(Some(4)).data());
        assert!(base.max_abs_diff(&run(Some(2))) > 0.0);
    }

    #[test]
    fn three_layer_stack_preserves_shapes_on_ten_nodes() {
        let mut g = token_graph(10, 2);
        for i in 0..9 {
            g.add_edge(i % 2, i, i + 1).unwrap();
        }
        let topo = GraphTopology::new(&g).unwrap();
        let tape = Tape::new();
        let layer = random_layer(3, 2, Combiner::Max, 51);
        let lens: Vec<usize> = (0..10).map(|i| 2 + (i % 4)).collect();
        let states = random_states(&tape, &lens, 3, 53);
        let bounds: Vec<GsnLayerBound> = (0..3).map(|_| bind_layer(&tape, &layer)).collect();
        let out = gsn_stack_forward(&tape, &topo, &states, &bounds).unwrap();
        for (layer_out, _) in out.iter().zip(0..) {
            for (i, s) in layer_out.iter().enumerate() {
                assert_eq!(s.shape(), (lens[i], 3));
            }
        }
    }

    #[test]
    fn relation_count_mismatch_is_configuration_error() {
        let g = token_graph(2, 2);
        let topo = GraphTopology::new(&g).unwrap();
        let tape = Tape::new();
        let layer = random_layer(2, 1, Combiner::Max, 61);
        let bound = bind_layer(&tape, &layer);
        let states = random_states(&tape, &[2, 2], 2, 63);
        assert!(matches!(
            gsn_layer_forward(&tape, &topo, &states, &bound),
            Err(LayerError::RelationMismatch { params: 1, graph: 2 })
        ));
    }

    #[test]
    fn summarize_singleton_is_identity_for_all_methods() {
        let tape = Tape::new();
        let row = Matrix::from_vec(1, 3, vec![0.5, -1.5, 2.5]).unwrap();
        let v = tape.leaf(&row);
        let attentive = AttentivePoolParams::zeros(3);
        let mut binder = Binder::new(&tape);
        let bound = attentive.bind(&mut binder, "pool");
        for summarizer in [
            SummarizerBound::Mean,
            SummarizerBound::Max,
            SummarizerBound::Attentive(bound),
        ] {
            let out = summarize_node(&v, &summarizer).unwrap();
            assert_eq!(out.value(), row);
        }
    }

    #[test]
    fn summarize_mean_arithmetic() {
        let tape = Tape::new();
        let v = tape.leaf(&Matrix::from_vec(2, 2, vec![1.0, 3.0, 3.0, 5.0]).unwrap());
        let out = summarize_node(&v, &SummarizerBound::Mean).unwrap();
        assert_eq!(out.value().data(), &[2.0, 4.0]);
    }

    #[test]
    fn attentive_pool_with_zero_scores_equals_mean() {
        let tape = Tape::new();
        let v = tape.leaf(
            &Matrix::from_vec(3, 2, vec![1.0, 2.0, 5.0, -2.0, 0.0, 3.0]).unwrap(),
        );
        let attentive = AttentivePoolParams::zeros(2);
        let mut binder = Binder::new(&tape);
        let bound = attentive.bind(&mut binder, "pool");
        let a = summarize_node(&v, &SummarizerBound::Attentive(bound)).unwrap();
        let m = summarize_node(&v, &SummarizerBound::Mean).unwrap();
        assert!(a.value().max_abs_diff(&m.value()) < 1e-15);
    }

    fn bind_gcn(tape: &Tape, p: &GcnLayerParams) -> GcnLayerBound {
        let mut binder = Binder::new(tape);
        p.bind(&mut binder, "gcn")
    }

    #[test]
    fn gcn_constant_field_is_fixed_point() {
        // Mixed degrees; values with small mantissas so sums and integer
        // divisions stay exact.
        let mut g = token_graph(4, 1);
        for (i, j) in [(0, 1), (0, 2), (1, 2), (2, 3)] {
            g.add_edge(0, i, j).unwrap();
        }
        let topo = GraphTopology::new(&g).unwrap();
        let tape = Tape::new();
        let v = Matrix::from_vec(1, 4, vec![1.5, -2.25, 0.5, 3.0]).unwrap();
        let vectors: Vec<Tensor> = (0..4).map(|_| tape.leaf(&v)).collect();
        let params = GcnLayerParams::identity(4, 1);
        let bound = bind_gcn(&tape, &params);
        let out = gcn_layer_forward(&topo, &vectors, &bound).unwrap();
        for o in &out {
            assert_eq!(o.value(), v);
        }
    }

    #[test]
    fn gcn_star_graph_hand_computed() {
        let mut g = token_graph(4, 1);
        for leaf in 1..4 {
            g.add_edge(0, 0, leaf).unwrap();
        }
        let topo = GraphTopology::new(&g).unwrap();
        let tape = Tape::new();
        let center = tape.leaf(&Matrix::from_vec(1, 1, vec![2.0]).unwrap());
        let leaves: Vec<Tensor> = (0..3)
            .map(|_| tape.leaf(&Matrix::from_vec(1, 1, vec![0.0]).unwrap()))
            .collect();
        let vectors = vec![center, leaves[0].clone(), leaves[1].clone(), leaves[2].clone()];
        let params = GcnLayerParams::identity(1, 1);
        let bound = bind_gcn(&tape, &params);
        let out = gcn_layer_forward(&topo, &vectors, &bound).unwrap();
        assert_eq!(out[0].value().data(), &[0.5]);
        for leaf in &out[1..] {
            assert_eq!(leaf.value().data(), &[1.0]);
        }
    }

    #[test]
    fn gcn_isolated_node_is_projection_of_itself() {
        let g = token_graph(1, 1);
        let topo = GraphTopology::new(&g).unwrap();
        let tape = Tape::new();
        let v = Matrix::from_vec(1, 2, vec![0.5, -0.5]).unwrap();
        let vectors = vec![tape.leaf(&v)];
        let mut params = GcnLayerParams::zeros(2, 1, Activation::Relu);
        params.relations[0].proj_w = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bound = bind_gcn(&tape, &params);
        let out = gcn_layer_forward(&topo, &vectors, &bound).unwrap();
        // relu([0.5, -0.5] . W) = relu([-1.0, -1.0]) = [0, 0]
        assert_eq!(out[0].value().data(), &[0.0, 0.0]);
    }

    #[test]
    fn gsn_layer_weight_count() {
        let layer = GsnLayerParams::zeros(8, 3, Combiner::Max, Activation::Relu);
        assert_eq!(layer.weight_count(), 3 * (3 * 8 + 4 * 64));
        assert_eq!(layer.weight_count(), 840);
    }
}
