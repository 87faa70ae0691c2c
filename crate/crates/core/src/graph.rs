//! Sequence-node multi-relational graphs: data model, sentence-graph
//! construction from entity annotations, and a line-oriented text format
//! for fixtures and generated datasets.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::tensor::Matrix;

/// Number of relations emitted by [`build_sentence_graph`].
pub const RELATION_COUNT: usize = 3;
/// Both sentences come from the same document.
pub const REL_SAME_DOC: usize = 0;
/// Different documents, sharing at least one normalized NE/NP string.
pub const REL_SHARED_ENTITY: usize = 1;
/// Different documents, both containing at least one question NE/NP.
pub const REL_QUESTION_ENTITY: usize = 2;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("corpus has no sentences")]
    EmptyCorpus,
    #[error("document {doc}, sentence {sentence}: {msg}")]
    BadSentence {
        doc: usize,
        sentence: usize,
        msg: String,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("relation {r} out of range (graph has {count})")]
    RelationOutOfRange { r: usize, count: usize },
}

/// One graph node: a length-T sequence, as token ids and/or a T x D feature
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceNode {
    pub node_id: usize,
    pub tokens: Option<Vec<usize>>,
    pub features: Option<Matrix>,
    pub doc_id: Option<usize>,
    /// Binary supporting label, when the task provides one.
    pub sup_label: Option<bool>,
}

impl SequenceNode {
    pub fn from_tokens(node_id: usize, tokens: Vec<usize>) -> Self {
        SequenceNode {
            node_id,
            tokens: Some(tokens),
            features: None,
            doc_id: None,
            sup_label: None,
        }
    }

    pub fn from_features(node_id: usize, features: Matrix) -> Self {
        SequenceNode {
            node_id,
            tokens: None,
            features: Some(features),
            doc_id: None,
            sup_label: None,
        }
    }

    /// Sequence length T.
    pub fn len(&self) -> usize {
        match (&self.tokens, &self.features) {
            (Some(t), _) => t.len(),
            (None, Some(f)) => f.rows(),
            (None, None) => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Answer span label: token positions within one node, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanLabel {
    pub node: usize,
    pub start: usize,
    pub end: usize,
}

/// A node set plus R undirected edge sets and optional task labels.
///
/// Edges are stored normalized as (lo, hi) pairs; self-loops are rejected
/// (self-inclusion is the message-passing layer's job). Immutable once built,
/// safe to share read-only across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalGraph {
    pub nodes: Vec<SequenceNode>,
    pub relations: Vec<BTreeSet<(usize, usize)>>,
    pub question: Option<Vec<usize>>,
    pub answer: Option<SpanLabel>,
    pub class_label: Option<usize>,
}

impl RelationalGraph {
    pub fn new(nodes: Vec<SequenceNode>, num_relations: usize) -> Self {
        RelationalGraph {
            nodes,
            relations: vec![BTreeSet::new(); num_relations],
            question: None,
            answer: None,
            class_label: None,
        }
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Insert an undirected edge into relation `r`.
    pub fn add_edge(&mut self, r: usize, i: usize, j: usize) -> Result<(), GraphError> {
        if r >= self.relations.len() {
            return Err(GraphError::RelationOutOfRange {
                r,
                count: self.relations.len(),
            });
        }
        if i == j {
            return Err(GraphError::Validation(format!("self-loop on node {i}")));
        }
        if i >= self.nodes.len() || j >= self.nodes.len() {
            return Err(GraphError::Validation(format!(
                "edge ({i}, {j}) references a node outside 0..{}",
                self.nodes.len()
            )));
        }
        self.relations[r].insert((i.min(j), i.max(j)));
        Ok(())
    }

    /// Shared feature dimension D, if any node carries features.
    pub fn feature_dim(&self) -> Option<usize> {
        self.nodes.iter().find_map(|n| n.features.as_ref().map(|f| f.cols()))
    }

    pub fn total_tokens(&self) -> usize {
        self.nodes.iter().map(|n| n.len()).sum()
    }

    /// Sorted, deduplicated neighbor ids per node under relation `r`,
    /// excluding the node itself.
    pub fn neighbor_sets(&self, r: usize) -> Result<Vec<Vec<usize>>, GraphError> {
        if r >= self.relations.len() {
            return Err(GraphError::RelationOutOfRange {
                r,
                count: self.relations.len(),
            });
        }
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.nodes.len()];
        for &(i, j) in &self.relations[r] {
            sets[i].insert(j);
            sets[j].insert(i);
        }
        Ok(sets.into_iter().map(|s| s.into_iter().collect()).collect())
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Validation("graph has no nodes".into()));
        }
        if self.relations.is_empty() {
            return Err(GraphError::Validation("graph has no relations".into()));
        }
        let mut dim: Option<usize> = None;
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.node_id != idx {
                return Err(GraphError::Validation(format!(
                    "node at position {idx} has id {} (ids must be dense and ordered)",
                    node.node_id
                )));
            }
            if node.len() == 0 {
                return Err(GraphError::Validation(format!("node {idx} is empty")));
            }
            if let (Some(t), Some(f)) = (&node.tokens, &node.features) {
                if t.len() != f.rows() {
                    return Err(GraphError::Validation(format!(
                        "node {idx}: {} tokens vs {} feature rows",
                        t.len(),
                        f.rows()
                    )));
                }
            }
            if let Some(f) = &node.features {
                match dim {
                    None => dim = Some(f.cols()),
                    Some(d) if d != f.cols() => {
                        return Err(GraphError::Validation(format!(
                            "node {idx} has feature dim {}, expected {d}",
                            f.cols()
                        )));
                    }
                    _ => {}
                }
                if !f.all_finite() {
                    return Err(GraphError::Validation(format!(
                        "node {idx} has non-finite features"
                    )));
                }
            }
        }
        for (r, edges) in self.relations.iter().enumerate() {
            for &(i, j) in edges {
                if i == j {
                    return Err(GraphError::Validation(format!(
                        "relation {r}: self-loop on node {i}"
                    )));
                }
                if j >= self.nodes.len() {
                    return Err(GraphError::Validation(format!(
                        "relation {r}: edge ({i}, {j}) outside 0..{}",
                        self.nodes.len()
                    )));
                }
            }
        }
        if let Some(a) = &self.answer {
            let node = self.nodes.get(a.node).ok_or_else(|| {
                GraphError::Validation(format!("answer references node {}", a.node))
            })?;
            if a.start > a.end || a.end >= node.len() {
                return Err(GraphError::Validation(format!(
                    "answer span ({}, {}) invalid for node of length {}",
                    a.start,
                    a.end,
                    node.len()
                )));
            }
        }
        Ok(())
    }
}

/// One sentence with its token ids and normalized NE/NP strings.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<usize>,
    pub entities: BTreeSet<String>,
}

impl AnnotatedSentence {
    pub fn new(tokens: Vec<usize>, entities: impl IntoIterator<Item = String>) -> Self {
        AnnotatedSentence {
            tokens,
            entities: entities.into_iter().collect(),
        }
    }
}

/// Documents of annotated sentences plus the annotated question.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCorpus {
    pub documents: Vec<Vec<AnnotatedSentence>>,
    pub question: AnnotatedSentence,
}

/// Lowercase and collapse whitespace; entity matching is exact equality on
/// the normalized string.
pub fn normalize_entity(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Build the three-relation sentence graph:
/// relation 0 connects sentences of the same document, relation 1 connects
/// cross-document sentences sharing an entity, relation 2 connects
/// cross-document sentences that each contain a question entity. The three
/// rules apply independently, so one pair may carry edges in several
/// relations.
pub fn build_sentence_graph(corpus: &AnnotatedCorpus) -> Result<RelationalGraph, GraphError> {
    let total: usize = corpus.documents.iter().map(|d| d.len()).sum();
    if total == 0 {
        return Err(GraphError::EmptyCorpus);
    }

    let mut nodes = Vec::with_capacity(total);
    let mut doc_of = Vec::with_capacity(total);
    let mut entity_sets: Vec<BTreeSet<String>> = Vec::with_capacity(total);
    for (doc_id, doc) in corpus.documents.iter().enumerate() {
        for (sent_id, sent) in doc.iter().enumerate() {
            if sent.tokens.is_empty() {
                return Err(GraphError::BadSentence {
                    doc: doc_id,
                    sentence: sent_id,
                    msg: "sentence has no tokens".into(),
                });
            }
            let mut normalized = BTreeSet::new();
            for e in &sent.entities {
                let n = normalize_entity(e);
                if n.is_empty() {
                    return Err(GraphError::BadSentence {
                        doc: doc_id,
                        sentence: sent_id,
                        msg: format!("entity {e:?} is empty after normalization"),
                    });
                }
                normalized.insert(n);
            }
            let mut node = SequenceNode::from_tokens(nodes.len(), sent.tokens.clone());
            node.doc_id = Some(doc_id);
            nodes.push(node);
            doc_of.push(doc_id);
            entity_sets.push(normalized);
        }
    }

    let question_entities: BTreeSet<String> = corpus
        .question
        .entities
        .iter()
        .map(|e| normalize_entity(e))
        .collect();

    let mut graph = RelationalGraph::new(nodes, RELATION_COUNT);
    graph.question = Some(corpus.question.tokens.clone());

    for i in 0..total {
        for j in (i + 1)..total {
            if doc_of[i] == doc_of[j] {
                graph.add_edge(REL_SAME_DOC, i, j)?;
            } else {
                if entity_sets[i].intersection(&entity_sets[j]).next().is_some() {
                    graph.add_edge(REL_SHARED_ENTITY, i, j)?;
                }
                let i_hits = entity_sets[i]
                    .intersection(&question_entities)
                    .next()
                    .is_some();
                let j_hits = entity_sets[j]
                    .intersection(&question_entities)
                    .next()
                    .is_some();
                if i_hits && j_hits {
                    graph.add_edge(REL_QUESTION_ENTITY, i, j)?;
                }
            }
        }
    }
    Ok(graph)
}

/// Serialize to the `gsn-graph v1` text format. Feature values use Rust's
/// shortest round-trip decimal encoding, so parse(serialize(g)) is bit-exact.
pub fn serialize_graph(g: &RelationalGraph) -> Result<String, GraphError> {
    g.validate()?;
    let dim = g.feature_dim().unwrap_or(0);
    let mut out = String::new();
    writeln!(
        out,
        "gsn-graph v1 nodes={} relations={} dim={}",
        g.nodes.len(),
        g.relations.len(),
        dim
    )
    .unwrap();
    for node in &g.nodes {
        write!(out, "node {} len={}", node.node_id, node.len()).unwrap();
        if let Some(d) = node.doc_id {
            write!(out, " doc={d}").unwrap();
        }
        if let Some(s) = node.sup_label {
            write!(out, " sup={}", if s { 1 } else { 0 }).unwrap();
        }
        out.push('\n');
        if let Some(tokens) = &node.tokens {
            let ids: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
            writeln!(out, "tokens: {}", ids.join(" ")).unwrap();
        } else if let Some(f) = &node.features {
            for r in 0..f.rows() {
                let row: Vec<String> = f.row(r).iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
    }
    for (r, edges) in g.relations.iter().enumerate() {
        writeln!(out, "relation {r}").unwrap();
        for &(i, j) in edges {
            writeln!(out, "edge {i} {j}").unwrap();
        }
    }
    if let Some(a) = &g.answer {
        writeln!(out, "answer {} {} {}", a.node, a.start, a.end).unwrap();
    }
    if let Some(c) = g.class_label {
        writeln!(out, "class {c}").unwrap();
    }
    if let Some(q) = &g.question {
        let ids: Vec<String> = q.iter().map(|t| t.to_string()).collect();
        writeln!(out, "question: {}", ids.join(" ")).unwrap();
    }
    Ok(out)
}

struct LineCursor<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> LineCursor<'a> {
    fn new(text: &'a str) -> Self {
        LineCursor {
            lines: text.lines().enumerate().peekable(),
        }
    }

    /// Next non-blank line as (1-based number, content).
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (idx, line) in self.lines.by_ref() {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Some((idx + 1, trimmed));
            }
        }
        None
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        loop {
            match self.lines.peek() {
                Some((idx, line)) => {
                    let trimmed = line.trim();
                    if trimmed.is_empty() {
                        self.lines.next();
                    } else {
                        return Some((idx + 1, trimmed));
                    }
                }
                None => return None,
            }
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_kv(field: &str, key: &str, line: usize) -> Result<usize, GraphError> {
    let rest = field
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| parse_err(line, format!("expected {key}=<n>, got {field:?}")))?;
    rest.parse::<usize>()
        .map_err(|_| parse_err(line, format!("bad value in {field:?}")))
}

/// Parse the `gsn-graph v1` text format.
pub fn parse_graph(text: &str) -> Result<RelationalGraph, GraphError> {
    let mut cur = LineCursor::new(text);
    let (hline, header) = cur.next().ok_or_else(|| parse_err(0, "empty input"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "gsn-graph" || fields[1] != "v1" {
        return Err(parse_err(
            hline,
            "expected header `gsn-graph v1 nodes=<N> relations=<R> dim=<D>`",
        ));
    }
    let n_nodes = parse_kv(fields[2], "nodes", hline)?;
    let n_relations = parse_kv(fields[3], "relations", hline)?;
    let dim = parse_kv(fields[4], "dim", hline)?;

    let mut nodes: Vec<SequenceNode> = Vec::with_capacity(n_nodes);
    let mut seen_ids = BTreeSet::new();
    for _ in 0..n_nodes {
        let (nline, line) = cur
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of input in node section"))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() < 3 || parts[0] != "node" {
            return Err(parse_err(nline, format!("expected node record, got {line:?}")));
        }
        let id: usize = parts[1]
            .parse()
            .map_err(|_| parse_err(nline, format!("bad node id {:?}", parts[1])))?;
        if !seen_ids.insert(id) {
            return Err(GraphError::Validation(format!("duplicate node id {id}")));
        }
        let len = parse_kv(parts[2], "len", nline)?;
        if len == 0 {
            return Err(parse_err(nline, "node length must be >= 1"));
        }
        let mut doc_id = None;
        let mut sup = None;
        for field in &parts[3..] {
            if field.starts_with("doc=") {
                doc_id = Some(parse_kv(field, "doc", nline)?);
            } else if field.starts_with("sup=") {
                sup = Some(match parse_kv(field, "sup", nline)? {
                    0 => false,
                    1 => true,
                    v => return Err(parse_err(nline, format!("sup must be 0 or 1, got {v}"))),
                });
            } else {
                return Err(parse_err(nline, format!("unknown node field {field:?}")));
            }
        }

        let (bline, body) = cur
            .next()
            .ok_or_else(|| parse_err(nline, "node body missing"))?;
        let mut node = SequenceNode {
            node_id: id,
            tokens: None,
            features: None,
            doc_id,
            sup_label: sup,
        };
        if let Some(rest) = body.strip_prefix("tokens:") {
            let tokens: Result<Vec<usize>, _> =
                rest.split_whitespace().map(|t| t.parse::<usize>()).collect();
            let tokens =
                tokens.map_err(|_| parse_err(bline, "token list must be non-negative integers"))?;
            if tokens.len() != len {
                return Err(parse_err(
                    bline,
                    format!("{} tokens but len={len}", tokens.len()),
                ));
            }
            node.tokens = Some(tokens);
        } else {
            if dim == 0 {
                return Err(parse_err(bline, "feature rows present but header dim=0"));
            }
            let mut data = Vec::with_capacity(len * dim);
            let mut row_line = (bline, body);
            for t in 0..len {
                let (fline, row) = row_line;
                let vals: Result<Vec<f64>, _> =
                    row.split_whitespace().map(|v| v.parse::<f64>()).collect();
                let vals = vals.map_err(|_| parse_err(fline, "bad decimal in feature row"))?;
                if vals.len() != dim {
                    return Err(parse_err(
                        fline,
                        format!("feature row has {} values, expected {dim}", vals.len()),
                    ));
                }
                data.extend(vals);
                if t + 1 < len {
                    row_line = cur
                        .next()
                        .ok_or_else(|| parse_err(fline, "truncated feature block"))?;
                }
            }
            node.features = Some(
                Matrix::from_vec(len, dim, data)
                    .map_err(|e| parse_err(bline, format!("bad feature block: {e}")))?,
            );
        }
        nodes.push(node);
    }
    nodes.sort_by_key(|n| n.node_id);

    let mut graph = RelationalGraph::new(nodes, n_relations);
    let mut current_rel: Option<usize> = None;
    while let Some((lno, line)) = cur.peek() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[0] {
            "relation" => {
                cur.next();
                if parts.len() != 2 {
                    return Err(parse_err(lno, "expected `relation <r>`"));
                }
                let r: usize = parts[1]
                    .parse()
                    .map_err(|_| parse_err(lno, format!("bad relation id {:?}", parts[1])))?;
                if r >= n_relations {
                    return Err(parse_err(
                        lno,
                        format!("relation {r} out of range (header says {n_relations})"),
                    ));
                }
                current_rel = Some(r);
            }
            "edge" => {
                cur.next();
                let r = current_rel
                    .ok_or_else(|| parse_err(lno, "edge before any relation record"))?;
                if parts.len() != 3 {
                    return Err(parse_err(lno, "expected `edge <i> <j>`"));
                }
                let i: usize = parts[1]
                    .parse()
                    .map_err(|_| parse_err(lno, "bad edge endpoint"))?;
                let j: usize = parts[2]
                    .parse()
                    .map_err(|_| parse_err(lno, "bad edge endpoint"))?;
                graph.add_edge(r, i, j)?;
            }
            "answer" => {
                cur.next();
                if parts.len() != 4 {
                    return Err(parse_err(lno, "expected `answer <node> <start> <end>`"));
                }
                let vals: Result<Vec<usize>, _> =
                    parts[1..].iter().map(|p| p.parse::<usize>()).collect();
                let vals = vals.map_err(|_| parse_err(lno, "bad answer record"))?;
                graph.answer = Some(SpanLabel {
                    node: vals[0],
                    start: vals[1],
                    end: vals[2],
                });
            }
            "class" => {
                cur.next();
                if parts.len() != 2 {
                    return Err(parse_err(lno, "expected `class <c>`"));
                }
                graph.class_label = Some(
                    parts[1]
                        .parse()
                        .map_err(|_| parse_err(lno, "bad class record"))?,
                );
            }
            "question:" => {
                cur.next();
                let tokens: Result<Vec<usize>, _> =
                    parts[1..].iter().map(|p| p.parse::<usize>()).collect();
                graph.question =
                    Some(tokens.map_err(|_| parse_err(lno, "bad question token list"))?);
            }
            other => {
                return Err(parse_err(lno, format!("unexpected record {other:?}")));
            }
        }
    }

    graph.validate()?;
    if let Some(d) = graph.feature_dim() {
        if d != dim {
            return Err(GraphError::Validation(format!(
                "header dim={dim} but features have dim {d}"
            )));
        }
    }
    Ok(graph)
}
