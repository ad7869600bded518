//! Four-block convolutional feature extractor.
//!
//! Each block is conv(stride 2) -> relu -> conv(stride 1) -> relu, so block
//! `b` halves the spatial extent and doubles the channel count relative to
//! its predecessor. The per-block maps feed the selector.

use crate::error::{Error, Result};
use crate::layers::ConvLayer;
use crate::numerics::Tensor;

pub const NUM_BLOCKS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub input_size: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            in_channels: 1,
            base_channels: 16,
            input_size: 64,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % 16 != 0 {
            return Err(Error::Config(format!(
                "backbone.input_size: {} is not divisible by 16",
                self.input_size
            )));
        }
        if self.in_channels == 0 || self.base_channels == 0 {
            return Err(Error::Config(
                "backbone: in_channels and base_channels must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Channels of block `b` (0-based): base * 2^b.
    pub fn block_channels(&self, block: usize) -> usize {
        self.base_channels << block
    }

    /// Spatial extent of block `b` (0-based): input / 2^(b+1).
    pub fn block_extent(&self, block: usize) -> usize {
        self.input_size >> (block + 1)
    }
}

/// One feature map per block, coarser and wider as the index grows.
pub struct FeatureMapSet {
    pub maps: Vec<Tensor>,
}

pub struct Backbone {
    cfg: BackboneConfig,
    blocks: Vec<(ConvLayer, ConvLayer)>,
}

impl Backbone {
    pub fn init(cfg: BackboneConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut blocks = Vec::with_capacity(NUM_BLOCKS);
        let mut in_ch = cfg.in_channels;
        for b in 0..NUM_BLOCKS {
            let out_ch = cfg.block_channels(b);
            let c1 = ConvLayer::init(
                &format!("backbone.block{}.conv1", b + 1),
                in_ch,
                out_ch,
                2,
                seed,
            );
            let c2 = ConvLayer::init(
                &format!("backbone.block{}.conv2", b + 1),
                out_ch,
                out_ch,
                1,
                seed,
            );
            blocks.push((c1, c2));
            in_ch = out_ch;
        }
        Ok(Backbone { cfg, blocks })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    pub fn forward(&self, image: &Tensor) -> Result<FeatureMapSet> {
        let shape = image.shape();
        let expect = vec![self.cfg.in_channels, self.cfg.input_size, self.cfg.input_size];
        if shape != expect {
            return Err(Error::dim("backbone.forward", &expect, &shape));
        }
        let mut maps = Vec::with_capacity(NUM_BLOCKS);
        let mut cur = image.clone();
        for (c1, c2) in &self.blocks {
            let y = c1.forward(&cur)?.relu();
            let z = c2.forward(&y)?.relu();
            maps.push(z.clone());
            cur = z;
        }
        Ok(FeatureMapSet { maps })
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (c1, c2) in &self.blocks {
            out.extend(c1.params());
            out.extend(c2.params());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes_follow_halving_rule() {
        let bb = Backbone::init(BackboneConfig::default(), 1).unwrap();
        let img = Tensor::zeros(&[1, 64, 64]);
        let maps = bb.forward(&img).unwrap().maps;
        let expected = [
            vec![16usize, 32, 32],
            vec![32, 16, 16],
            vec![64, 8, 8],
            vec![128, 4, 4],
        ];
        for (map, want) in maps.iter().zip(&expected) {
            assert_eq!(map.shape(), *want);
        }
    }

    #[test]
    fn shape_law_holds_for_other_extents() {
        for s in [16usize, 32, 48, 96] {
            let cfg = BackboneConfig {
                input_size: s,
                ..Default::default()
            };
            let bb = Backbone::init(cfg.clone(), 3).unwrap();
            let maps = bb.forward(&Tensor::zeros(&[1, s, s])).unwrap().maps;
            for (b, map) in maps.iter().enumerate() {
                assert_eq!(
                    map.shape(),
                    vec![cfg.block_channels(b), cfg.block_extent(b), cfg.block_extent(b)]
                );
            }
        }
    }

    #[test]
    fn zero_image_yields_finite_maps() {
        let bb = Backbone::init(BackboneConfig::default(), 5).unwrap();
        let maps = bb.forward(&Tensor::zeros(&[1, 64, 64])).unwrap().maps;
        for map in maps {
            assert!(map.all_finite());
        }
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let bb = Backbone::init(BackboneConfig::default(), 9).unwrap();
        let img = Tensor::from_vec(
            &[1, 64, 64],
            (0..64 * 64).map(|i| (i as f32 * 0.37).sin()).collect(),
        )
        .unwrap();
        let a = bb.forward(&img).unwrap().maps;
        let b = bb.forward(&img).unwrap().maps;
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_vec(), y.to_vec());
        }
    }

    #[test]
    fn indivisible_input_size_is_a_config_error() {
        let cfg = BackboneConfig {
            input_size: 50,
            ..Default::default()
        };
        match Backbone::init(cfg, 0) {
            Err(Error::Config(msg)) => assert!(msg.contains("input_size")),
            _ => panic!("expected config error"),
        }
    }

    #[test]
    fn same_seed_same_init() {
        let a = Backbone::init(BackboneConfig::default(), 11).unwrap();
        let b = Backbone::init(BackboneConfig::default(), 11).unwrap();
        for ((na, ta), (nb, tb)) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.to_vec(), tb.to_vec());
        }
    }
}
