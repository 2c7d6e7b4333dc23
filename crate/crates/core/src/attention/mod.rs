//! Cross-view RoI fusion: positional encoding of proposal centers and the
//! bidirectional co-attention transformer.

pub mod posenc;
pub mod record;
pub mod transformer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{ParamStore, Tape, Tensor};
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use posenc::positional_encoding_2d;
pub use record::{parse_attention, write_attention, AttentionMatrixEntry, AttentionRecord};
pub use transformer::{
    bidirectional_fuse, cross_transformer_block, multi_head_co_attention, position_term,
    scaled_dot_attention, Activation, AttentionVars, CoAttentionWeights, CrossTransformerConfig,
    FusionOutput, FusionWeights, ViewInput,
};

/// Proposal features of one view with their boxes and normalized centers.
#[derive(Clone, Debug, PartialEq)]
pub struct RoISet {
    pub features: Tensor,
    pub boxes: Vec<BBox>,
    pub centers: Vec<[f64; 2]>,
}

impl RoISet {
    /// Builds a set from `P×d` features and `P` boxes, deriving centers as box
    /// midpoints divided by the image extent.
    pub fn new(features: Tensor, boxes: Vec<BBox>, image_width: f64, image_height: f64) -> Result<Self> {
        let (p, _) = features.require_matrix("RoISet")?;
        if boxes.len() != p {
            return Err(Error::invalid(
                "boxes",
                format!("{} boxes for {p} feature rows", boxes.len()),
            ));
        }
        for b in &boxes {
            b.validate()?;
        }
        let centers = boxes
            .iter()
            .map(|b| {
                let (cx, cy) = b.center();
                [cx / image_width, cy / image_height]
            })
            .collect();
        Ok(RoISet {
            features,
            boxes,
            centers,
        })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of self.
    pub fn permuted(&self, perm: &[usize]) -> RoISet {
        let d = self.features.cols();
        let data = perm
            .iter()
            .flat_map(|&i| self.features.row(i).iter().copied())
            .collect();
        RoISet {
            features: Tensor::matrix(perm.len(), d, data).expect("permutation keeps shape"),
            boxes: perm.iter().map(|&i| self.boxes[i]).collect(),
            centers: perm.iter().map(|&i| self.centers[i]).collect(),
        }
    }
}

/// Result of fusing two value-level RoI sets.
#[derive(Clone, Debug)]
pub struct FusedPair {
    pub cc: RoISet,
    pub mlo: RoISet,
    pub cc_attention: AttentionRecord,
    pub mlo_attention: AttentionRecord,
}

/// Stand-alone cross-transformer owning its parameters.
#[derive(Clone, Debug)]
pub struct CrossTransformer {
    pub config: CrossTransformerConfig,
    pub params: ParamStore,
    pub weights: FusionWeights,
}

impl CrossTransformer {
    pub fn new(config: CrossTransformerConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let weights = FusionWeights::register(&mut params, "fusion", &config, &mut rng)?;
        Ok(CrossTransformer {
            config,
            params,
            weights,
        })
    }

    /// Fuses two RoI sets; geometry passes through untouched.
    pub fn fuse(&self, cc: &RoISet, mlo: &RoISet) -> Result<FusedPair> {
        self.fuse_with(&self.weights, cc, mlo)
    }

    pub fn fuse_with(&self, weights: &FusionWeights, cc: &RoISet, mlo: &RoISet) -> Result<FusedPair> {
        let mut tape = Tape::new();
        let bind = self.params.bind(&mut tape);
        let cc_f = tape.constant(cc.features.clone());
        let mlo_f = tape.constant(mlo.features.clone());
        let out = bidirectional_fuse(
            &mut tape,
            &bind,
            weights,
            &self.config,
            ViewInput {
                features: cc_f,
                centers: &cc.centers,
            },
            ViewInput {
                features: mlo_f,
                centers: &mlo.centers,
            },
        )?;
        let strip = |t: &Tensor| {
            let mut t = t.clone();
            t.zero_grad();
            t.with_requires_grad(false)
        };
        Ok(FusedPair {
            cc: RoISet {
                features: strip(tape.value(out.cc)),
                boxes: cc.boxes.clone(),
                centers: cc.centers.clone(),
            },
            mlo: RoISet {
                features: strip(tape.value(out.mlo)),
                boxes: mlo.boxes.clone(),
                centers: mlo.centers.clone(),
            },
            cc_attention: AttentionRecord::from_tape(&tape, &out.cc_attention, None),
            mlo_attention: AttentionRecord::from_tape(&tape, &out.mlo_attention, None),
        })
    }
}
