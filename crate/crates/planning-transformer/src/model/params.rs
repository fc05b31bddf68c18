//! Learnable tensors of the dual-head transformer, plus checkpoint I/O.

use crate::config::PtConfig;
use crate::tensor::checkpoint::{self, CheckpointError};
use crate::tensor::{Tensor, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::path::Path;

const INIT_STD: f64 = 0.02;
const MLP_WIDTH: usize = 4;

#[derive(Debug, Clone)]
pub struct LayerParams {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub w_q: Tensor,
    pub b_q: Tensor,
    pub w_k: Tensor,
    pub b_k: Tensor,
    pub w_v: Tensor,
    pub b_v: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w_mlp1: Tensor,
    pub b_mlp1: Tensor,
    pub w_mlp2: Tensor,
    pub b_mlp2: Tensor,
}

/// All learnable tensors. Per-modality input projections exist exactly for
/// the modalities the configured sequence layout can contain; the planning
/// head exists iff the model predicts plans (`n_plan_tokens > 0`).
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub proj_goal: Option<Tensor>,
    pub proj_rtg: Tensor,
    pub proj_state: Tensor,
    pub proj_plan: Option<Tensor>,
    pub proj_action: Tensor,
    /// One row per modality tag.
    pub type_emb: Tensor,
    pub timestep_emb: Option<Tensor>,
    pub layers: Vec<LayerParams>,
    pub ln_f_g: Tensor,
    pub ln_f_b: Tensor,
    pub head_action_w: Tensor,
    pub head_action_b: Tensor,
    /// `(weight, bias)`; a single linear layer.
    pub head_plan: Option<(Tensor, Tensor)>,
}

fn ones(n: usize) -> Tensor {
    Tensor::new(vec![n], vec![1.0; n]).unwrap()
}

impl ModelParams {
    pub fn init(cfg: &PtConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let d = cfg.d_model;
        let mut w = |rows: usize, cols: usize| Tensor::randn(vec![rows, cols], INIT_STD, &mut rng);

        let proj_goal = (cfg.n_goal_tokens() == 1).then(|| w(cfg.goal_token_dim(), d));
        let proj_rtg = w(1, d);
        let proj_state = w(cfg.state_dim, d);
        let proj_plan = (cfg.n_plan_tokens > 0).then(|| w(cfg.plan_feature_dim(), d));
        let proj_action = w(cfg.action_dim, d);
        let type_emb = w(crate::sequence::Modality::COUNT, d);
        let timestep_emb = cfg.use_timestep_embedding.then(|| w(cfg.max_timesteps, d));

        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams {
                ln1_g: ones(d),
                ln1_b: Tensor::zeros(vec![d]),
                w_q: w(d, d),
                b_q: Tensor::zeros(vec![d]),
                w_k: w(d, d),
                b_k: Tensor::zeros(vec![d]),
                w_v: w(d, d),
                b_v: Tensor::zeros(vec![d]),
                w_o: w(d, d),
                b_o: Tensor::zeros(vec![d]),
                ln2_g: ones(d),
                ln2_b: Tensor::zeros(vec![d]),
                w_mlp1: w(d, MLP_WIDTH * d),
                b_mlp1: Tensor::zeros(vec![MLP_WIDTH * d]),
                w_mlp2: w(MLP_WIDTH * d, d),
                b_mlp2: Tensor::zeros(vec![d]),
            })
            .collect();

        let head_plan = (cfg.n_plan_tokens > 0).then(|| {
            (
                w(d, cfg.plan_feature_dim()),
                Tensor::zeros(vec![cfg.plan_feature_dim()]),
            )
        });

        Self {
            proj_goal,
            proj_rtg,
            proj_state,
            proj_plan,
            proj_action,
            type_emb,
            timestep_emb,
            layers,
            ln_f_g: ones(d),
            ln_f_b: Tensor::zeros(vec![d]),
            head_action_w: w(d, cfg.action_dim),
            head_action_b: Tensor::zeros(vec![cfg.action_dim]),
            head_plan,
        }
    }

    /// All tensors with their stable names, in binding order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        if let Some(t) = &self.proj_goal {
            out.push(("embed.goal.w".into(), t));
        }
        out.push(("embed.rtg.w".into(), &self.proj_rtg));
        out.push(("embed.state.w".into(), &self.proj_state));
        if let Some(t) = &self.proj_plan {
            out.push(("embed.plan.w".into(), t));
        }
        out.push(("embed.action.w".into(), &self.proj_action));
        out.push(("embed.type".into(), &self.type_emb));
        if let Some(t) = &self.timestep_emb {
            out.push(("embed.timestep".into(), t));
        }
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.ln1.g"), &l.ln1_g));
            out.push((format!("layer{i}.ln1.b"), &l.ln1_b));
            out.push((format!("layer{i}.attn.wq"), &l.w_q));
            out.push((format!("layer{i}.attn.bq"), &l.b_q));
            out.push((format!("layer{i}.attn.wk"), &l.w_k));
            out.push((format!("layer{i}.attn.bk"), &l.b_k));
            out.push((format!("layer{i}.attn.wv"), &l.w_v));
            out.push((format!("layer{i}.attn.bv"), &l.b_v));
            out.push((format!("layer{i}.attn.wo"), &l.w_o));
            out.push((format!("layer{i}.attn.bo"), &l.b_o));
            out.push((format!("layer{i}.ln2.g"), &l.ln2_g));
            out.push((format!("layer{i}.ln2.b"), &l.ln2_b));
            out.push((format!("layer{i}.mlp.w1"), &l.w_mlp1));
            out.push((format!("layer{i}.mlp.b1"), &l.b_mlp1));
            out.push((format!("layer{i}.mlp.w2"), &l.w_mlp2));
            out.push((format!("layer{i}.mlp.b2"), &l.b_mlp2));
        }
        out.push(("ln_f.g".into(), &self.ln_f_g));
        out.push(("ln_f.b".into(), &self.ln_f_b));
        out.push(("head.action.w".into(), &self.head_action_w));
        out.push(("head.action.b".into(), &self.head_action_b));
        if let Some((w, b)) = &self.head_plan {
            out.push(("head.plan.w".into(), w));
            out.push(("head.plan.b".into(), b));
        }
        out
    }

    /// Same order as [`ModelParams::named_tensors`].
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(t) = &mut self.proj_goal {
            out.push(("embed.goal.w".into(), t));
        }
        out.push(("embed.rtg.w".into(), &mut self.proj_rtg));
        out.push(("embed.state.w".into(), &mut self.proj_state));
        if let Some(t) = &mut self.proj_plan {
            out.push(("embed.plan.w".into(), t));
        }
        out.push(("embed.action.w".into(), &mut self.proj_action));
        out.push(("embed.type".into(), &mut self.type_emb));
        if let Some(t) = &mut self.timestep_emb {
            out.push(("embed.timestep".into(), t));
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.ln1.g"), &mut l.ln1_g));
            out.push((format!("layer{i}.ln1.b"), &mut l.ln1_b));
            out.push((format!("layer{i}.attn.wq"), &mut l.w_q));
            out.push((format!("layer{i}.attn.bq"), &mut l.b_q));
            out.push((format!("layer{i}.attn.wk"), &mut l.w_k));
            out.push((format!("layer{i}.attn.bk"), &mut l.b_k));
            out.push((format!("layer{i}.attn.wv"), &mut l.w_v));
            out.push((format!("layer{i}.attn.bv"), &mut l.b_v));
            out.push((format!("layer{i}.attn.wo"), &mut l.w_o));
            out.push((format!("layer{i}.attn.bo"), &mut l.b_o));
            out.push((format!("layer{i}.ln2.g"), &mut l.ln2_g));
            out.push((format!("layer{i}.ln2.b"), &mut l.ln2_b));
            out.push((format!("layer{i}.mlp.w1"), &mut l.w_mlp1));
            out.push((format!("layer{i}.mlp.b1"), &mut l.b_mlp1));
            out.push((format!("layer{i}.mlp.w2"), &mut l.w_mlp2));
            out.push((format!("layer{i}.mlp.b2"), &mut l.b_mlp2));
        }
        out.push(("ln_f.g".into(), &mut self.ln_f_g));
        out.push(("ln_f.b".into(), &mut self.ln_f_b));
        out.push(("head.action.w".into(), &mut self.head_action_w));
        out.push(("head.action.b".into(), &mut self.head_action_b));
        if let Some((w, b)) = &mut self.head_plan {
            out.push(("head.plan.w".into(), w));
            out.push(("head.plan.b".into(), b));
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn clear_grads(&mut self) {
        for (_, t) in self.named_tensors_mut() {
            t.clear_grad();
        }
    }

    /// Rebuilds parameters from named tensors, validating shapes against
    /// the config-derived skeleton.
    pub fn from_named(
        cfg: &PtConfig,
        mut tensors: HashMap<String, Tensor>,
    ) -> Result<Self, TensorError> {
        let mut skeleton = Self::init(cfg, 0);
        for (name, dst) in skeleton.named_tensors_mut() {
            let src = tensors
                .remove(&name)
                .ok_or_else(|| TensorError::MissingGrad { name: name.clone() })?;
            if src.shape != dst.shape {
                return Err(TensorError::ShapeMismatch {
                    op: "checkpoint load",
                    left: dst.shape.clone(),
                    right: src.shape,
                });
            }
            *dst = src;
        }
        Ok(skeleton)
    }
}

/// Writes parameters and the config to the binary checkpoint container.
pub fn save_checkpoint<P: AsRef<Path>>(
    path: P,
    params: &ModelParams,
    cfg: &PtConfig,
) -> Result<(), CheckpointError> {
    let named = params.named_tensors();
    let refs: Vec<(&str, &Tensor)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    let cfg_json = serde_json::to_string(cfg).expect("config serializes");
    checkpoint::save(path, &refs, &cfg_json)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<(ModelParams, PtConfig), LoadError> {
    let (tensors, cfg_json) = checkpoint::load(path)?;
    let cfg: PtConfig =
        serde_json::from_str(&cfg_json).map_err(|e| LoadError::Config(e.to_string()))?;
    cfg.validate().map_err(|e| LoadError::Config(e.to_string()))?;
    let map: HashMap<String, Tensor> = tensors.into_iter().collect();
    let params = ModelParams::from_named(&cfg, map)?;
    Ok((params, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_used_modality_has_exactly_one_projection() {
        let cfg = PtConfig::default();
        let p = ModelParams::init(&cfg, 0);
        assert!(p.proj_goal.is_some());
        assert!(p.proj_plan.is_some());
        assert!(p.head_plan.is_some());
        let baseline = PtConfig {
            n_plan_tokens: 0,
            beta: 0.0,
            ..Default::default()
        };
        let pb = ModelParams::init(&baseline, 0);
        assert!(pb.proj_plan.is_none());
        assert!(pb.head_plan.is_none());
    }

    #[test]
    fn checkpoint_round_trip_restores_params_and_config() {
        let cfg = PtConfig {
            n_layers: 1,
            d_model: 8,
            ..Default::default()
        };
        let params = ModelParams::init(&cfg, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ptck");
        save_checkpoint(&path, &params, &cfg).unwrap();
        let (loaded, cfg2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg2, cfg);
        for ((n1, t1), (n2, t2)) in params.named_tensors().iter().zip(loaded.named_tensors()) {
            assert_eq!(n1.as_str(), n2.as_str());
            assert_eq!(t1.data, t2.data);
        }
    }

    #[test]
    fn named_tensor_orders_agree() {
        let cfg = PtConfig::default();
        let mut p = ModelParams::init(&cfg, 0);
        let a: Vec<String> = p.named_tensors().iter().map(|(n, _)| n.clone()).collect();
        let b: Vec<String> = p.named_tensors_mut().iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(a, b);
    }
}
