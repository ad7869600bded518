//! f64 mirror of the full recognition pipeline, for end-to-end checks.
//!
//! Parameter names and layouts match the fast engine's model exactly; the
//! arithmetic is re-derived from scratch in f64. Selection indices are taken
//! as an input (the selection step is piecewise constant, so checks freeze
//! it at the base point).

use crate::{
    complete_graph_adjacency, conv2d, cross_entropy, gather_rows, linear, matmul, relu, row_mean,
    ParamMap,
};

/// Architecture sizes shared with the fast model.
#[derive(Debug, Clone)]
pub struct Sizes {
    pub in_channels: usize,
    pub base_channels: usize,
    pub input_size: usize,
    pub num_classes: usize,
    pub schedule: [usize; 4],
    pub proj_width: usize,
}

impl Sizes {
    pub fn block_channels(&self, block: usize) -> usize {
        self.base_channels << block
    }

    pub fn block_extent(&self, block: usize) -> usize {
        self.input_size >> (block + 1)
    }
}

fn p<'a>(params: &'a ParamMap, name: &str) -> &'a [f64] {
    params
        .get(name)
        .unwrap_or_else(|| panic!("missing parameter {name}"))
}

/// Backbone feature maps for one image, flattened per block as c*h*w.
pub fn backbone_forward(sizes: &Sizes, params: &ParamMap, image: &[f64]) -> Vec<Vec<f64>> {
    let mut maps = Vec::with_capacity(4);
    let mut cur = image.to_vec();
    let mut c_in = sizes.in_channels;
    let mut extent = sizes.input_size;
    for block in 0..4 {
        let c_out = sizes.block_channels(block);
        let w1 = p(params, &format!("backbone.block{}.conv1.weight", block + 1));
        let b1 = p(params, &format!("backbone.block{}.conv1.bias", block + 1));
        let w2 = p(params, &format!("backbone.block{}.conv2.weight", block + 1));
        let b2 = p(params, &format!("backbone.block{}.conv2.bias", block + 1));

        let half = extent / 2;
        let mut y = conv2d(&cur, w1, c_in, extent, extent, c_out, 3, 2, 1);
        add_channel_bias(&mut y, b1, c_out, half * half);
        let y = relu(&y);

        let mut z = conv2d(&y, w2, c_out, half, half, c_out, 3, 1, 1);
        add_channel_bias(&mut z, b2, c_out, half * half);
        let z = relu(&z);

        maps.push(z.clone());
        cur = z;
        c_in = c_out;
        extent = half;
    }
    maps
}

fn add_channel_bias(x: &mut [f64], bias: &[f64], c: usize, hw: usize) {
    for ch in 0..c {
        for v in x[ch * hw..(ch + 1) * hw].iter_mut() {
            *v += bias[ch];
        }
    }
}

/// Feature map (c,h,w) -> pixel-major rows (h*w, c).
pub fn pixel_rows(map: &[f64], c: usize, hw: usize) -> Vec<f64> {
    let mut rows = vec![0.0; hw * c];
    for ch in 0..c {
        for i in 0..hw {
            rows[i * c + ch] = map[ch * hw + i];
        }
    }
    rows
}

/// Total training loss (final head plus the four per-block auxiliary heads)
/// for a batch, with per-image selections supplied by the caller.
pub fn pipeline_loss(
    sizes: &Sizes,
    params: &ParamMap,
    images: &[Vec<f64>],
    labels: &[usize],
    selections: &[[Vec<usize>; 4]],
) -> f64 {
    let b = images.len();
    let c_cls = sizes.num_classes;
    let mut final_logits = Vec::with_capacity(b * c_cls);
    let mut aux_logits: [Vec<f64>; 4] = Default::default();

    for (img_idx, image) in images.iter().enumerate() {
        let maps = backbone_forward(sizes, params, image);
        let mut projected: Vec<Vec<f64>> = Vec::with_capacity(4);
        for block in 0..4 {
            let c_b = sizes.block_channels(block);
            let hw = sizes.block_extent(block) * sizes.block_extent(block);
            let rows = pixel_rows(&maps[block], c_b, hw);

            let head_w = p(params, &format!("selector.block{}.weight", block + 1));
            let head_b = p(params, &format!("selector.block{}.bias", block + 1));
            let scores = linear(&rows, head_w, head_b, hw, c_b, c_cls);
            aux_logits[block].extend(row_mean(&scores, hw, c_cls));

            let chosen = &selections[img_idx][block];
            let points = gather_rows(&rows, c_b, chosen);
            let proj_w = p(params, &format!("fpn.block{}.weight", block + 1));
            let proj_b = p(params, &format!("fpn.block{}.bias", block + 1));
            projected.push(linear(
                &points,
                proj_w,
                proj_b,
                chosen.len(),
                c_b,
                sizes.proj_width,
            ));
        }

        let n_total: usize = selections[img_idx].iter().map(|s| s.len()).sum();
        let mut nodes = Vec::with_capacity(n_total * sizes.proj_width);
        for block_nodes in &projected {
            nodes.extend_from_slice(block_nodes);
        }

        let adj = complete_graph_adjacency(n_total);
        let mixed = matmul(&adj, &nodes, n_total, n_total, sizes.proj_width);
        let gcn_w = p(params, "gcn.weight");
        let fused = relu(&matmul(
            &mixed,
            gcn_w,
            n_total,
            sizes.proj_width,
            sizes.proj_width,
        ));
        let pooled = row_mean(&fused, n_total, sizes.proj_width);

        let cls_w = p(params, "classifier.weight");
        let cls_b = p(params, "classifier.bias");
        final_logits.extend(linear(&pooled, cls_w, cls_b, 1, sizes.proj_width, c_cls));
    }

    let mut total = cross_entropy(&final_logits, labels, b, c_cls);
    for block_logits in &aux_logits {
        total += cross_entropy(block_logits, labels, b, c_cls);
    }
    total
}
