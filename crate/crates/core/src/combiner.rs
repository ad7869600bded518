//! Fusion of selected feature points and the final prediction head.
//!
//! Points from all blocks are projected to a common width (the FPN step),
//! fused with a single graph convolution over a degree-normalized complete
//! graph, averaged into one super node, and classified.

use crate::backbone::NUM_BLOCKS;
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::numerics::Tensor;

/// Desk-scale default projection width (full-scale reference: 1536).
pub const DESK_PROJ_WIDTH: usize = 96;
/// Desk-scale variant width (full-scale reference: 1024).
pub const DESK_PROJ_WIDTH_VARIANT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpnConfig {
    pub proj_width: usize,
}

impl Default for FpnConfig {
    fn default() -> Self {
        FpnConfig {
            proj_width: DESK_PROJ_WIDTH,
        }
    }
}

impl FpnConfig {
    /// Accepts either a desk-scale width directly or one of the full-scale
    /// reference sizes, which map onto the desk widths (1536 -> 96,
    /// 1024 -> 64; same 3:2 ratio).
    pub fn from_key(value: usize) -> Result<Self> {
        let proj_width = match value {
            1536 => DESK_PROJ_WIDTH,
            1024 => DESK_PROJ_WIDTH_VARIANT,
            0 => return Err(Error::Config("fpn_size: must be positive".into())),
            v => v,
        };
        Ok(FpnConfig { proj_width })
    }
}

/// Projected points plus the fixed fusion adjacency.
pub struct FusionGraph {
    /// `[N, proj_width]` node features.
    pub nodes: Tensor,
    /// `[N, N]` symmetric, self-looped, degree-normalized; rows sum to 1.
    pub adjacency: Tensor,
}

/// Projects each block's points to the common width and stacks them.
pub fn fpn_project(points_per_block: &[Tensor], projections: &[Linear]) -> Result<Tensor> {
    if points_per_block.len() != projections.len() {
        return Err(Error::Contract(format!(
            "fpn_project: {} point sets but {} projections",
            points_per_block.len(),
            projections.len()
        )));
    }
    let mut projected = Vec::with_capacity(points_per_block.len());
    for (points, proj) in points_per_block.iter().zip(projections) {
        projected.push(proj.forward(points)?);
    }
    let refs: Vec<&Tensor> = projected.iter().collect();
    Tensor::concat_rows(&refs)
}

/// Complete graph with self loops: `D^{-1/2} (A + I) D^{-1/2}` with `A`
/// all-ones, rows renormalized to sum 1. The adjacency carries no gradient.
pub fn build_graph(nodes: &Tensor) -> Result<FusionGraph> {
    let s = nodes.shape();
    if s.len() != 2 || s[0] == 0 {
        return Err(Error::dim("build_graph", &s, &s));
    }
    let n = s[0];
    let mut adj = vec![1.0f32; n * n];
    for i in 0..n {
        adj[i * n + i] += 1.0;
    }
    let degrees: Vec<f32> = (0..n)
        .map(|i| adj[i * n..(i + 1) * n].iter().sum::<f32>())
        .collect();
    for i in 0..n {
        for j in 0..n {
            adj[i * n + j] /= (degrees[i] * degrees[j]).sqrt();
        }
    }
    for i in 0..n {
        let row_sum: f32 = adj[i * n..(i + 1) * n].iter().sum();
        for v in adj[i * n..(i + 1) * n].iter_mut() {
            *v /= row_sum;
        }
    }
    Ok(FusionGraph {
        nodes: nodes.clone(),
        adjacency: Tensor::from_vec(&[n, n], adj)?,
    })
}

/// One graph-convolution layer: `relu(adjacency @ nodes @ weight)`.
pub fn gcn_forward(graph: &FusionGraph, weight: &Tensor) -> Result<Tensor> {
    let sw = weight.shape();
    let sn = graph.nodes.shape();
    if sw.len() != 2 || sw[0] != sn[1] {
        return Err(Error::dim("gcn_forward", &sn, &sw));
    }
    Ok(graph.adjacency.matmul(&graph.nodes)?.matmul(weight)?.relu())
}

/// Averages all fused nodes into a single super node `[1, proj_width]`.
pub fn pool_supernode(fused: &Tensor) -> Result<Tensor> {
    fused.row_mean()
}

/// Final logits from the pooled super node.
pub fn predict(pooled: &Tensor, head: &Linear) -> Result<Tensor> {
    head.forward(pooled)
}

/// Plain row-wise concatenation of per-point class logits, `[N, C']`.
///
/// Kept as a reference path for the shape law; the production path fuses
/// with the graph convolution instead.
pub fn concat_reference(points: &[&Tensor]) -> Result<Tensor> {
    Tensor::concat_rows(points)
}

/// The trainable fusion stack: one projection per block, one GCN weight,
/// and the final classification head.
pub struct Combiner {
    pub projections: Vec<Linear>,
    pub gcn_weight: Tensor,
    pub classifier: Linear,
    pub fpn: FpnConfig,
}

impl Combiner {
    pub fn init(
        block_channels: &[usize; NUM_BLOCKS],
        fpn: FpnConfig,
        num_classes: usize,
        seed: u64,
    ) -> Self {
        let p = fpn.proj_width;
        let projections = block_channels
            .iter()
            .enumerate()
            .map(|(b, &c)| Linear::init(&format!("fpn.block{}", b + 1), c, p, seed))
            .collect();
        let gcn_weight = Tensor::from_vec(
            &[p, p],
            crate::layers::glorot_uniform(seed, "gcn.weight", p * p, p, p),
        )
        .expect("sized construction")
        .with_grad();
        let classifier = Linear::init("classifier", p, num_classes, seed);
        Combiner {
            projections,
            gcn_weight,
            classifier,
            fpn,
        }
    }

    /// Projected points -> fused -> pooled -> logits `[1, C']`.
    pub fn forward(&self, points_per_block: &[Tensor]) -> Result<Tensor> {
        let nodes = fpn_project(points_per_block, &self.projections)?;
        let graph = build_graph(&nodes)?;
        let fused = gcn_forward(&graph, &self.gcn_weight)?;
        let pooled = pool_supernode(&fused)?;
        predict(&pooled, &self.classifier)
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for proj in &self.projections {
            out.extend(proj.params());
        }
        out.push(("gcn.weight".to_string(), self.gcn_weight.clone()));
        out.extend(self.classifier.params());
        out
    }
}
