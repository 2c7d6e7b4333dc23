//! Bidirectional multi-head co-attention over the RoI sets of two views.
//!
//! One block, applied with `main` RoIs attending to `aux` RoIs:
//!
//! ```text
//! Q = main Wq + bq + Pos(main)     K = aux Wk + bk + Pos(aux)     V = aux Wv + bv
//! A_h = softmax(Q_h K_h^T / sqrt(d_h))
//! h   = LN1(main + concat_h(A_h V_h) Wo + bo)
//! out = LN2(h + FFN(h))
//! ```
//!
//! Both directions of a fusion layer read the other view's features from
//! before that layer, so the two updates are simultaneous.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::posenc::positional_encoding_2d;
use crate::autograd::{Bindings, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossTransformerConfig {
    pub d: usize,
    pub n_heads: usize,
    pub ffn_hidden: usize,
    pub n_blocks: usize,
    pub ln_eps: f64,
    /// Multiplier applied to normalized centers inside the sinusoid.
    pub pos_scale: f64,
    /// When false the positional term is the zero vector.
    pub use_positional: bool,
    /// Reuse the CC->MLO weights for the MLO->CC direction.
    pub share_direction_weights: bool,
    pub activation: Activation,
}

impl Default for CrossTransformerConfig {
    fn default() -> Self {
        CrossTransformerConfig {
            d: 32,
            n_heads: 4,
            ffn_hidden: 64,
            n_blocks: 1,
            ln_eps: 1e-5,
            pos_scale: 100.0,
            use_positional: true,
            share_direction_weights: false,
            activation: Activation::Relu,
        }
    }
}

impl CrossTransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 || self.ffn_hidden == 0 {
            return Err(Error::Config("d, n_heads and ffn_hidden must be positive".into()));
        }
        if !self.d.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d = {} is not divisible by n_heads = {}",
                self.d, self.n_heads
            )));
        }
        if !self.d.is_multiple_of(4) {
            return Err(Error::Config(format!("d = {} must be a multiple of 4", self.d)));
        }
        if !(self.ln_eps > 0.0) || !(self.pos_scale > 0.0) {
            return Err(Error::Config("ln_eps and pos_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }
}

/// Parameters of one cross-transformer block for one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct CoAttentionWeights {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
}

impl CoAttentionWeights {
    /// Registers a block under `prefix`. Matrices are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases start at zero and the
    /// layer-norm affines at identity.
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &CrossTransformerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let d = cfg.d;
        let f = cfg.ffn_hidden;
        let sd = 1.0 / (d as f64).sqrt();
        let sf = 1.0 / (f as f64).sqrt();
        let mut mat = |store: &mut ParamStore, name: &str, shape: &[usize], s: f64| {
            store.register_uniform(format!("{prefix}.{name}"), shape, s, rng)
        };
        let wq = mat(store, "wq", &[d, d], sd)?;
        let wk = mat(store, "wk", &[d, d], sd)?;
        let wv = mat(store, "wv", &[d, d], sd)?;
        let wo = mat(store, "wo", &[d, d], sd)?;
        let ffn_w1 = mat(store, "ffn_w1", &[d, f], sd)?;
        let ffn_w2 = mat(store, "ffn_w2", &[f, d], sf)?;
        let zeros = |store: &mut ParamStore, name: &str, n: usize| {
            store.register_filled(format!("{prefix}.{name}"), &[n], 0.0)
        };
        let bq = zeros(store, "bq", d)?;
        let bk = zeros(store, "bk", d)?;
        let bv = zeros(store, "bv", d)?;
        let bo = zeros(store, "bo", d)?;
        let ffn_b1 = zeros(store, "ffn_b1", f)?;
        let ffn_b2 = zeros(store, "ffn_b2", d)?;
        let ln1_beta = zeros(store, "ln1_beta", d)?;
        let ln2_beta = zeros(store, "ln2_beta", d)?;
        let ln1_gamma = store.register_filled(format!("{prefix}.ln1_gamma"), &[d], 1.0)?;
        let ln2_gamma = store.register_filled(format!("{prefix}.ln2_gamma"), &[d], 1.0)?;
        Ok(CoAttentionWeights {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ffn_w1,
            ffn_b1,
            ffn_w2,
            ffn_b2,
            ln1_gamma,
            ln1_beta,
            ln2_gamma,
            ln2_beta,
        })
    }

    pub fn ids(&self) -> [ParamId; 16] {
        [
            self.wq,
            self.bq,
            self.wk,
            self.bk,
            self.wv,
            self.bv,
            self.wo,
            self.bo,
            self.ffn_w1,
            self.ffn_b1,
            self.ffn_w2,
            self.ffn_b2,
            self.ln1_gamma,
            self.ln1_beta,
            self.ln2_gamma,
            self.ln2_beta,
        ]
    }
}

/// Weight stacks for both fusion directions.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights {
    /// CC RoIs attend to MLO RoIs.
    pub cc_from_mlo: Vec<CoAttentionWeights>,
    /// MLO RoIs attend to CC RoIs.
    pub mlo_from_cc: Vec<CoAttentionWeights>,
}

impl FusionWeights {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &CrossTransformerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut cc_from_mlo = Vec::with_capacity(cfg.n_blocks);
        let mut mlo_from_cc = Vec::with_capacity(cfg.n_blocks);
        for b in 0..cfg.n_blocks {
            cc_from_mlo.push(CoAttentionWeights::register(
                store,
                &format!("{prefix}.cc_from_mlo.{b}"),
                cfg,
                rng,
            )?);
        }
        for b in 0..cfg.n_blocks {
            if cfg.share_direction_weights {
                mlo_from_cc.push(cc_from_mlo[b].clone());
            } else {
                mlo_from_cc.push(CoAttentionWeights::register(
                    store,
                    &format!("{prefix}.mlo_from_cc.{b}"),
                    cfg,
                    rng,
                )?);
            }
        }
        Ok(FusionWeights {
            cc_from_mlo,
            mlo_from_cc,
        })
    }

    /// The same weights with the roles of the two directions exchanged.
    pub fn swapped(&self) -> Self {
        FusionWeights {
            cc_from_mlo: self.mlo_from_cc.clone(),
            mlo_from_cc: self.cc_from_mlo.clone(),
        }
    }
}

/// RoI features of one view on a tape, with their normalized centers.
#[derive(Clone, Copy, Debug)]
pub struct ViewInput<'a> {
    pub features: Var,
    pub centers: &'a [[f64; 2]],
}

/// Attention matrices of one direction: `[block][head]`, each `P_main × P_aux`.
pub type AttentionVars = Vec<Vec<Var>>;

#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub cc: Var,
    pub mlo: Var,
    pub cc_attention: AttentionVars,
    pub mlo_attention: AttentionVars,
}

/// Single-head scaled dot-product attention on already projected inputs.
/// Returns `(A V, A)` with `A = softmax(Q K^T / sqrt(d_h))`.
pub fn scaled_dot_attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let dh = tape.shape(q)[1];
    if tape.shape(k)[1] != dh {
        return Err(Error::ShapeMismatch {
            op: "scaled_dot_attention",
            left: tape.shape(q).to_vec(),
            right: tape.shape(k).to_vec(),
        });
    }
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.mul_scalar(scores, 1.0 / (dh as f64).sqrt());
    let a = tape.softmax_rows(scores)?;
    let out = tape.matmul(a, v)?;
    Ok((out, a))
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Encoding of a view's centers on the tape, or `None` when disabled.
pub fn position_term(
    tape: &mut Tape,
    cfg: &CrossTransformerConfig,
    centers: &[[f64; 2]],
) -> Result<Option<Var>> {
    if !cfg.use_positional {
        return Ok(None);
    }
    let e = positional_encoding_2d(centers, cfg.d, cfg.pos_scale)?;
    Ok(Some(tape.constant(e)))
}

/// Multi-head co-attention: `main` queries, `aux` keys and values.
/// Returns the projected output and one attention matrix per head.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_co_attention(
    tape: &mut Tape,
    bind: &Bindings,
    w: &CoAttentionWeights,
    cfg: &CrossTransformerConfig,
    main: Var,
    main_pos: Option<Var>,
    aux: Var,
    aux_pos: Option<Var>,
) -> Result<(Var, Vec<Var>)> {
    for x in [main, aux] {
        if tape.shape(x).len() != 2 || tape.shape(x)[1] != cfg.d {
            return Err(Error::ShapeMismatch {
                op: "multi_head_co_attention",
                left: tape.shape(x).to_vec(),
                right: vec![tape.shape(x)[0], cfg.d],
            });
        }
    }
    let mut q = linear(tape, main, bind[w.wq], bind[w.bq])?;
    if let Some(p) = main_pos {
        q = tape.add(q, p)?;
    }
    let mut k = linear(tape, aux, bind[w.wk], bind[w.bk])?;
    if let Some(p) = aux_pos {
        k = tape.add(k, p)?;
    }
    let v = linear(tape, aux, bind[w.wv], bind[w.bv])?;

    let dh = cfg.head_dim();
    let mut outs = Vec::with_capacity(cfg.n_heads);
    let mut attn = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let (qh, kh, vh) = if cfg.n_heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, lo, hi)?,
                tape.slice_cols(k, lo, hi)?,
                tape.slice_cols(v, lo, hi)?,
            )
        };
        let (o, a) = scaled_dot_attention(tape, qh, kh, vh)?;
        outs.push(o);
        attn.push(a);
    }
    let merged = if outs.len() == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)?
    };
    let out = linear(tape, merged, bind[w.wo], bind[w.bo])?;
    Ok((out, attn))
}

fn feed_forward(
    tape: &mut Tape,
    bind: &Bindings,
    w: &CoAttentionWeights,
    cfg: &CrossTransformerConfig,
    x: Var,
) -> Result<Var> {
    let h = linear(tape, x, bind[w.ffn_w1], bind[w.ffn_b1])?;
    let h = match cfg.activation {
        Activation::Relu => tape.relu(h),
        Activation::Tanh => tape.tanh(h),
    };
    linear(tape, h, bind[w.ffn_w2], bind[w.ffn_b2])
}

/// One post-norm block: co-attention sublayer then FFN sublayer, each wrapped
/// in a residual connection followed by layer norm.
#[allow(clippy::too_many_arguments)]
pub fn cross_transformer_block(
    tape: &mut Tape,
    bind: &Bindings,
    w: &CoAttentionWeights,
    cfg: &CrossTransformerConfig,
    main: Var,
    main_pos: Option<Var>,
    aux: Var,
    aux_pos: Option<Var>,
) -> Result<(Var, Vec<Var>)> {
    let (mca, attn) = multi_head_co_attention(tape, bind, w, cfg, main, main_pos, aux, aux_pos)?;
    let r1 = tape.add(main, mca)?;
    let h = tape.layer_norm(r1, bind[w.ln1_gamma], bind[w.ln1_beta], cfg.ln_eps)?;
    let ffn = feed_forward(tape, bind, w, cfg, h)?;
    let r2 = tape.add(h, ffn)?;
    let out = tape.layer_norm(r2, bind[w.ln2_gamma], bind[w.ln2_beta], cfg.ln_eps)?;
    Ok((out, attn))
}

/// Runs `n_blocks` layers of simultaneous CC<-MLO and MLO<-CC blocks.
pub fn bidirectional_fuse(
    tape: &mut Tape,
    bind: &Bindings,
    weights: &FusionWeights,
    cfg: &CrossTransformerConfig,
    cc: ViewInput<'_>,
    mlo: ViewInput<'_>,
) -> Result<FusionOutput> {
    let cc_pos = position_term(tape, cfg, cc.centers)?;
    let mlo_pos = position_term(tape, cfg, mlo.centers)?;
    let mut cc_feat = cc.features;
    let mut mlo_feat = mlo.features;
    let mut cc_attention = Vec::new();
    let mut mlo_attention = Vec::new();
    let layers = weights.cc_from_mlo.iter().zip(&weights.mlo_from_cc);
    for (w_cc, w_mlo) in layers.take(cfg.n_blocks) {
        let (new_cc, a_cc) =
            cross_transformer_block(tape, bind, w_cc, cfg, cc_feat, cc_pos, mlo_feat, mlo_pos)?;
        let (new_mlo, a_mlo) =
            cross_transformer_block(tape, bind, w_mlo, cfg, mlo_feat, mlo_pos, cc_feat, cc_pos)?;
        cc_feat = new_cc;
        mlo_feat = new_mlo;
        cc_attention.push(a_cc);
        mlo_attention.push(a_mlo);
    }
    Ok(FusionOutput {
        cc: cc_feat,
        mlo: mlo_feat,
        cc_attention,
        mlo_attention,
    })
}
