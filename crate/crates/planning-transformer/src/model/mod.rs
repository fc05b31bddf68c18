//! GPT-style causal transformer with per-modality input embeddings, an
//! optional timestep embedding, and two output heads: one predicting
//! actions, one predicting planning tokens.
//!
//! Blocks are pre-norm. Both heads run at every position; the losses mask
//! out the positions that carry no target. Sequences in a batch must share
//! one layout (they always do for a fixed config), which lets each modality
//! be projected with a single matmul and scattered into place.

pub mod params;

pub use params::{load_checkpoint, save_checkpoint, LayerParams, ModelParams};

use crate::config::PtConfig;
use crate::sequence::{Modality, TokenSequence};
use crate::tensor::graph::{Graph, Mode, Var};
use crate::tensor::{Float, Tensor};
use serde::{Deserialize, Serialize};

/// Post-softmax attention weights captured from one forward pass:
/// `layers[layer][head]` is a row-major `seq_len x seq_len` matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionCapture {
    pub seq_len: usize,
    pub layers: Vec<Vec<Vec<Float>>>,
}

impl AttentionCapture {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_heads(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }

    /// Head-averaged weights for one layer, row-major.
    pub fn layer_mean(&self, layer: usize) -> Vec<Float> {
        let heads = &self.layers[layer];
        let n = self.seq_len * self.seq_len;
        let mut out = vec![0.0; n];
        for h in heads {
            for (o, w) in out.iter_mut().zip(h) {
                *o += w;
            }
        }
        let inv = 1.0 / heads.len() as Float;
        for o in &mut out {
            *o *= inv;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("attention capture serializes")
    }
}

/// Result of a batched forward pass. Head outputs are `(batch*seq_len) x
/// dim` and live in the graph so losses can be attached.
pub struct BatchForward {
    pub graph: Graph,
    pub bindings: Vec<(String, Var)>,
    pub action_out: Var,
    pub plan_out: Option<Var>,
    pub attention_nodes: Vec<Var>,
    pub batch: usize,
    pub seq_len: usize,
}

impl BatchForward {
    /// Attention capture for one batch element.
    pub fn capture_attention(&self, element: usize) -> AttentionCapture {
        let mut layers = Vec::with_capacity(self.attention_nodes.len());
        for &node in &self.attention_nodes {
            let (w, _batch, heads, l) = self.graph.attention_weights(node);
            let mut per_head = Vec::with_capacity(heads);
            for h in 0..heads {
                let off = ((element * heads) + h) * l * l;
                per_head.push(w[off..off + l * l].to_vec());
            }
            layers.push(per_head);
        }
        AttentionCapture {
            seq_len: self.seq_len,
            layers,
        }
    }

    /// Row of the action head for one batch element and position.
    pub fn action_row(&self, element: usize, pos: usize) -> &[Float] {
        self.graph.value(self.action_out).row(element * self.seq_len + pos)
    }

    /// Row of the planning head for one batch element and position.
    pub fn plan_row(&self, element: usize, pos: usize) -> &[Float] {
        let var = self.plan_out.expect("model has no planning head");
        self.graph.value(var).row(element * self.seq_len + pos)
    }
}

/// Output of the single-sequence [`forward`].
pub struct ForwardOutput {
    /// `seq_len x action_dim`.
    pub action_out: Tensor,
    /// `seq_len x plan_feature_dim`; zero-column when the model has no
    /// planning head.
    pub plan_out: Tensor,
    pub attention: AttentionCapture,
}

struct BoundLayer {
    ln1_g: Var,
    ln1_b: Var,
    w_q: Var,
    b_q: Var,
    w_k: Var,
    b_k: Var,
    w_v: Var,
    b_v: Var,
    w_o: Var,
    b_o: Var,
    ln2_g: Var,
    ln2_b: Var,
    w_mlp1: Var,
    b_mlp1: Var,
    w_mlp2: Var,
    b_mlp2: Var,
}

struct BoundParams {
    proj: [Option<Var>; Modality::COUNT],
    type_emb: Var,
    timestep_emb: Option<Var>,
    layers: Vec<BoundLayer>,
    ln_f_g: Var,
    ln_f_b: Var,
    head_action_w: Var,
    head_action_b: Var,
    head_plan: Option<(Var, Var)>,
    ordered: Vec<(String, Var)>,
}

fn bind(graph: &mut Graph, params: &ModelParams) -> BoundParams {
    let mut ordered = Vec::new();
    let mut leaf = |graph: &mut Graph, name: &str, t: &Tensor| {
        let v = graph.leaf_from(t);
        ordered.push((name.to_string(), v));
        v
    };

    let mut proj: [Option<Var>; Modality::COUNT] = [None; Modality::COUNT];
    if let Some(t) = &params.proj_goal {
        proj[Modality::Goal.type_index()] = Some(leaf(graph, "embed.goal.w", t));
    }
    proj[Modality::Rtg.type_index()] = Some(leaf(graph, "embed.rtg.w", &params.proj_rtg));
    proj[Modality::State.type_index()] = Some(leaf(graph, "embed.state.w", &params.proj_state));
    if let Some(t) = &params.proj_plan {
        proj[Modality::Plan.type_index()] = Some(leaf(graph, "embed.plan.w", t));
    }
    proj[Modality::Action.type_index()] = Some(leaf(graph, "embed.action.w", &params.proj_action));
    let type_emb = leaf(graph, "embed.type", &params.type_emb);
    let timestep_emb = params
        .timestep_emb
        .as_ref()
        .map(|t| leaf(graph, "embed.timestep", t));

    let mut layers = Vec::with_capacity(params.layers.len());
    for (i, l) in params.layers.iter().enumerate() {
        layers.push(BoundLayer {
            ln1_g: leaf(graph, &format!("layer{i}.ln1.g"), &l.ln1_g),
            ln1_b: leaf(graph, &format!("layer{i}.ln1.b"), &l.ln1_b),
            w_q: leaf(graph, &format!("layer{i}.attn.wq"), &l.w_q),
            b_q: leaf(graph, &format!("layer{i}.attn.bq"), &l.b_q),
            w_k: leaf(graph, &format!("layer{i}.attn.wk"), &l.w_k),
            b_k: leaf(graph, &format!("layer{i}.attn.bk"), &l.b_k),
            w_v: leaf(graph, &format!("layer{i}.attn.wv"), &l.w_v),
            b_v: leaf(graph, &format!("layer{i}.attn.bv"), &l.b_v),
            w_o: leaf(graph, &format!("layer{i}.attn.wo"), &l.w_o),
            b_o: leaf(graph, &format!("layer{i}.attn.bo"), &l.b_o),
            ln2_g: leaf(graph, &format!("layer{i}.ln2.g"), &l.ln2_g),
            ln2_b: leaf(graph, &format!("layer{i}.ln2.b"), &l.ln2_b),
            w_mlp1: leaf(graph, &format!("layer{i}.mlp.w1"), &l.w_mlp1),
            b_mlp1: leaf(graph, &format!("layer{i}.mlp.b1"), &l.b_mlp1),
            w_mlp2: leaf(graph, &format!("layer{i}.mlp.w2"), &l.w_mlp2),
            b_mlp2: leaf(graph, &format!("layer{i}.mlp.b2"), &l.b_mlp2),
        });
    }
    let ln_f_g = leaf(graph, "ln_f.g", &params.ln_f_g);
    let ln_f_b = leaf(graph, "ln_f.b", &params.ln_f_b);
    let head_action_w = leaf(graph, "head.action.w", &params.head_action_w);
    let head_action_b = leaf(graph, "head.action.b", &params.head_action_b);
    let head_plan = params
        .head_plan
        .as_ref()
        .map(|(w, b)| (leaf(graph, "head.plan.w", w), leaf(graph, "head.plan.b", b)));

    BoundParams {
        proj,
        type_emb,
        timestep_emb,
        layers,
        ln_f_g,
        ln_f_b,
        head_action_w,
        head_action_b,
        head_plan,
        ordered,
    }
}

/// Projects raw token features modality by modality, adds type and
/// timestep embeddings, and applies embedding dropout. Returns the
/// `(batch*seq_len) x d_model` input to the first block.
fn embed(
    graph: &mut Graph,
    bound: &BoundParams,
    seqs: &[TokenSequence],
    cfg: &PtConfig,
) -> Var {
    let batch = seqs.len();
    let seq_len = seqs[0].len();
    let tags = seqs[0].tags();
    let total_rows = batch * seq_len;

    let mut x: Option<Var> = None;
    for modality in [
        Modality::Goal,
        Modality::Rtg,
        Modality::State,
        Modality::Plan,
        Modality::Action,
    ] {
        let positions: Vec<usize> = tags
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == modality)
            .map(|(p, _)| p)
            .collect();
        if positions.is_empty() {
            continue;
        }
        let proj = bound.proj[modality.type_index()]
            .unwrap_or_else(|| panic!("no projection for modality {modality:?}"));
        let feat_dim = graph.value(proj).shape[0];
        let mut raw = Vec::with_capacity(batch * positions.len() * feat_dim);
        let mut rows = Vec::with_capacity(batch * positions.len());
        for (b, seq) in seqs.iter().enumerate() {
            for &p in &positions {
                let f = &seq.tokens[p].features;
                assert_eq!(
                    f.len(),
                    feat_dim,
                    "token at position {p} has {} features, modality {modality:?} expects {feat_dim}",
                    f.len()
                );
                raw.extend_from_slice(f);
                rows.push(b * seq_len + p);
            }
        }
        let raw = graph.leaf(Tensor::new(vec![rows.len(), feat_dim], raw).unwrap());
        let projected = graph.matmul(raw, proj);
        let scattered = graph.scatter_rows(projected, &rows, total_rows);
        x = Some(match x {
            Some(acc) => graph.add(acc, scattered),
            None => scattered,
        });
    }
    let mut x = x.expect("sequence has no tokens");

    let type_indices: Vec<usize> = (0..batch)
        .flat_map(|_| tags.iter().map(|m| m.type_index()))
        .collect();
    let type_rows = graph.lookup(bound.type_emb, &type_indices);
    x = graph.add(x, type_rows);

    if let Some(table) = bound.timestep_emb {
        let t_indices: Vec<usize> = seqs
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.timestep))
            .collect();
        let t_rows = graph.lookup(table, &t_indices);
        x = graph.add(x, t_rows);
    }
    graph.dropout(x, cfg.dropout_embd)
}

fn block(
    graph: &mut Graph,
    layer: &BoundLayer,
    x: Var,
    cfg: &PtConfig,
    batch: usize,
    seq_len: usize,
    pad: &[bool],
) -> (Var, Var) {
    let h = graph.layernorm(x, layer.ln1_g, layer.ln1_b);
    let q = graph.matmul(h, layer.w_q);
    let q = graph.add(q, layer.b_q);
    let k = graph.matmul(h, layer.w_k);
    let k = graph.add(k, layer.b_k);
    let v = graph.matmul(h, layer.w_v);
    let v = graph.add(v, layer.b_v);
    let attn = graph.attention(q, k, v, cfg.n_heads, batch, seq_len, pad, cfg.dropout_attn);
    let o = graph.matmul(attn, layer.w_o);
    let o = graph.add(o, layer.b_o);
    let o = graph.dropout(o, cfg.dropout_resid);
    let x = graph.add(x, o);

    let h2 = graph.layernorm(x, layer.ln2_g, layer.ln2_b);
    let m = graph.matmul(h2, layer.w_mlp1);
    let m = graph.add(m, layer.b_mlp1);
    let m = graph.relu(m);
    let m = graph.matmul(m, layer.w_mlp2);
    let m = graph.add(m, layer.b_mlp2);
    let m = graph.dropout(m, cfg.dropout_resid);
    let x = graph.add(x, m);
    (x, attn)
}

/// Batched forward pass. All sequences must share one token layout.
pub fn forward_batch(
    seqs: &[TokenSequence],
    params: &ModelParams,
    cfg: &PtConfig,
    mode: Mode,
    dropout_seed: u64,
) -> BatchForward {
    assert!(!seqs.is_empty(), "empty batch");
    let seq_len = seqs[0].len();
    assert!(
        seq_len <= cfg.seq_capacity(),
        "sequence length {seq_len} exceeds capacity {}",
        cfg.seq_capacity()
    );
    let tags = seqs[0].tags();
    for s in seqs {
        assert_eq!(s.tags(), tags, "sequences in a batch must share a layout");
    }
    let batch = seqs.len();
    let pad: Vec<bool> = seqs.iter().flat_map(TokenSequence::pad_mask).collect();

    let mut graph = Graph::new(mode, dropout_seed);
    let bound = bind(&mut graph, params);
    let mut x = embed(&mut graph, &bound, seqs, cfg);

    let mut attention_nodes = Vec::with_capacity(bound.layers.len());
    for layer in &bound.layers {
        let (nx, attn) = block(&mut graph, layer, x, cfg, batch, seq_len, &pad);
        x = nx;
        attention_nodes.push(attn);
    }
    let x = graph.layernorm(x, bound.ln_f_g, bound.ln_f_b);
    let action_out = graph.matmul(x, bound.head_action_w);
    let action_out = graph.add(action_out, bound.head_action_b);
    let plan_out = bound.head_plan.map(|(w, b)| {
        let p = graph.matmul(x, w);
        graph.add(p, b)
    });

    BatchForward {
        graph,
        bindings: bound.ordered,
        action_out,
        plan_out,
        attention_nodes,
        batch,
        seq_len,
    }
}

/// Single-sequence forward pass returning dense head outputs and the
/// attention capture. Eval mode is deterministic.
pub fn forward(
    seq: &TokenSequence,
    params: &ModelParams,
    cfg: &PtConfig,
    mode: Mode,
) -> ForwardOutput {
    let fw = forward_batch(std::slice::from_ref(seq), params, cfg, mode, 0);
    let attention = fw.capture_attention(0);
    let action_out = fw.graph.value(fw.action_out).clone();
    let plan_out = match fw.plan_out {
        Some(v) => fw.graph.value(v).clone(),
        None => Tensor::zeros(vec![seq.len(), 0]),
    };
    ForwardOutput {
        action_out,
        plan_out,
        attention,
    }
}

/// Embeds one sequence without running the blocks (eval mode, so no
/// embedding dropout; the training path applies it inside
/// [`forward_batch`]).
pub fn embed_sequence(seq: &TokenSequence, params: &ModelParams, cfg: &PtConfig) -> Tensor {
    let mut graph = Graph::eval();
    let bound = bind(&mut graph, params);
    let x = embed(&mut graph, &bound, std::slice::from_ref(seq), cfg);
    graph.value(x).clone()
}

/// Attaches masked L2 losses to a batched forward pass and returns
/// `(total, action_loss, plan_loss)` where
/// `total = alpha * action + beta * plan`.
pub fn batch_losses(
    fw: &mut BatchForward,
    seqs: &[TokenSequence],
    cfg: &PtConfig,
) -> (Var, Var, Var) {
    let rows = fw.batch * fw.seq_len;
    let adim = cfg.action_dim;
    let mut a_target = Tensor::zeros(vec![rows, adim]);
    let mut a_mask = Tensor::zeros(vec![rows, adim]);
    for (b, seq) in seqs.iter().enumerate() {
        for (p, target) in seq.action_targets.iter().enumerate() {
            if let Some(t) = target {
                let off = (b * fw.seq_len + p) * adim;
                a_target.data[off..off + adim].copy_from_slice(t);
                for m in &mut a_mask.data[off..off + adim] {
                    *m = 1.0;
                }
            }
        }
    }
    let action_loss = fw.graph.mse_masked(fw.action_out, &a_target, &a_mask);

    let plan_loss = match fw.plan_out {
        Some(plan_out) => {
            let pdim = cfg.plan_feature_dim();
            let mut p_target = Tensor::zeros(vec![rows, pdim]);
            let mut p_mask = Tensor::zeros(vec![rows, pdim]);
            for (b, seq) in seqs.iter().enumerate() {
                for (p, target) in seq.plan_targets.iter().enumerate() {
                    if let Some(t) = target {
                        let off = (b * fw.seq_len + p) * pdim;
                        p_target.data[off..off + pdim].copy_from_slice(t);
                        for m in &mut p_mask.data[off..off + pdim] {
                            *m = 1.0;
                        }
                    }
                }
            }
            fw.graph.mse_masked(plan_out, &p_target, &p_mask)
        }
        None => fw.graph.leaf(Tensor::scalar(0.0)),
    };

    let wa = fw.graph.scale(action_loss, cfg.alpha);
    let wp = fw.graph.scale(plan_loss, cfg.beta);
    let total = fw.graph.add(wa, wp);
    (total, action_loss, plan_loss)
}

/// Runs backward from `loss` and copies gradients into the parameter set.
pub fn backward_into_params(fw: &mut BatchForward, loss: Var, params: &mut ModelParams) {
    fw.graph.backward(loss);
    let mut named = params.named_tensors_mut();
    assert_eq!(named.len(), fw.bindings.len(), "binding drift");
    for ((bname, var), (pname, tensor)) in fw.bindings.iter().zip(named.iter_mut()) {
        assert_eq!(bname.as_str(), pname.as_str(), "parameter order drift");
        fw.graph.write_grad(*var, tensor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::Plan;
    use crate::sequence::{build_training_sequence, TrainingWindow};

    fn tiny_cfg() -> PtConfig {
        PtConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 8,
            dropout_attn: 0.0,
            dropout_resid: 0.0,
            dropout_embd: 0.0,
            context_len: 3,
            n_plan_tokens: 2,
            replan_interval: 1,
            use_timestep_embedding: false,
            max_timesteps: 64,
            ..Default::default()
        }
    }

    fn tiny_seq(cfg: &PtConfig, w: usize) -> TokenSequence {
        let plan = Plan {
            tokens: (0..cfg.n_plan_tokens)
                .map(|i| vec![0.1 * i as Float; cfg.plan_feature_dim()])
                .collect(),
            source_indices: (0..cfg.n_plan_tokens).collect(),
            anchor_state: vec![0.0; cfg.state_dim],
            is_relative: true,
        };
        let window = TrainingWindow {
            t0: 0,
            rtg: (0..w).map(|t| 1.0 - 0.1 * t as Float).collect(),
            states: (0..w).map(|t| vec![0.2 * t as Float, -0.1]).collect(),
            actions: (0..w).map(|t| vec![0.05 * t as Float, 0.3]).collect(),
        };
        let goal = Some(vec![0.1; cfg.goal_token_dim()]);
        build_training_sequence(&window, &plan, goal, cfg)
    }

    #[test]
    fn output_shapes_match_contract() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 0);
        for w in 1..=3 {
            let seq = tiny_seq(&cfg, w);
            let out = forward(&seq, &params, &cfg, Mode::Eval);
            assert_eq!(out.action_out.shape, vec![seq.len(), cfg.action_dim]);
            assert_eq!(out.plan_out.shape, vec![seq.len(), cfg.plan_feature_dim()]);
        }
    }

    #[test]
    fn causality_probe_outputs_before_perturbation_unchanged() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 1);
        let seq = tiny_seq(&cfg, 3);
        let base = forward(&seq, &params, &cfg, Mode::Eval);
        // Perturb the final action token and compare everything before it.
        let mut perturbed = seq.clone();
        let j = seq.len() - 1;
        perturbed.tokens[j].features[0] += 1.0;
        let out = forward(&perturbed, &params, &cfg, Mode::Eval);
        for p in 0..j {
            assert_eq!(
                base.action_out.row(p),
                out.action_out.row(p),
                "action output at {p} changed"
            );
            assert_eq!(base.plan_out.row(p), out.plan_out.row(p));
        }
    }

    #[test]
    fn attention_rows_sum_to_one_and_pads_carry_zero() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 2);
        let seq = tiny_seq(&cfg, 2); // one padded timestep
        let out = forward(&seq, &params, &cfg, Mode::Eval);
        let pads = seq.pad_mask();
        for layer in &out.attention.layers {
            for head in layer {
                for i in 0..seq.len() {
                    let row = &head[i * seq.len()..(i + 1) * seq.len()];
                    let sum: Float = row.iter().sum();
                    assert!((sum - 1.0).abs() < 1e-5);
                    for (j, &w) in row.iter().enumerate() {
                        if j > i || pads[j] {
                            assert_eq!(w, 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 3);
        let seq = tiny_seq(&cfg, 3);
        let a = forward(&seq, &params, &cfg, Mode::Eval);
        let b = forward(&seq, &params, &cfg, Mode::Eval);
        assert_eq!(a.action_out, b.action_out);
        assert_eq!(a.plan_out, b.plan_out);
    }

    #[test]
    fn zero_tables_embed_to_zero() {
        let cfg = tiny_cfg();
        let mut params = ModelParams::init(&cfg, 4);
        for (_, t) in params.named_tensors_mut() {
            for v in &mut t.data {
                *v = 0.0;
            }
        }
        let mut seq = tiny_seq(&cfg, 3);
        for tok in &mut seq.tokens {
            for f in &mut tok.features {
                *f = 0.0;
            }
        }
        let emb = embed_sequence(&seq, &params, &cfg);
        assert!(emb.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn type_embedding_separates_identical_features() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 5);
        let seq = tiny_seq(&cfg, 3);
        let emb = embed_sequence(&seq, &params, &cfg);
        // rtg t=1 and action t=0 tokens can carry different features, so
        // compare two positions of differing modality with forced-equal raw
        // features instead: zero them both.
        let mut zeroed = seq.clone();
        let p_rtg = zeroed.layout.rtg_pos(1);
        let p_act = zeroed.layout.action_pos(0);
        zeroed.tokens[p_rtg].features = vec![0.0];
        zeroed.tokens[p_act].features = vec![0.0; cfg.action_dim];
        let emb2 = embed_sequence(&zeroed, &params, &cfg);
        assert_ne!(emb2.row(p_rtg), emb2.row(p_act));
        let _ = emb;
    }

    #[test]
    fn timestep_embedding_toggles_output_iff_table_nonzero() {
        let mut cfg = tiny_cfg();
        cfg.use_timestep_embedding = true;
        let mut params = ModelParams::init(&cfg, 6);
        let seq = tiny_seq(&cfg, 3);
        let with_table = embed_sequence(&seq, &params, &cfg);

        // Zero the timestep table: embedding must equal the disabled case.
        if let Some(t) = &mut params.timestep_emb {
            for v in &mut t.data {
                *v = 0.0;
            }
        }
        let with_zero_table = embed_sequence(&seq, &params, &cfg);
        let mut cfg_off = cfg.clone();
        cfg_off.use_timestep_embedding = false;
        let params_off = ModelParams {
            timestep_emb: None,
            ..params.clone()
        };
        let disabled = embed_sequence(&seq, &params_off, &cfg_off);
        assert_eq!(with_zero_table.data, disabled.data);
        assert_ne!(with_table.data, disabled.data);
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, 7);
        let seqs = vec![tiny_seq(&cfg, 3)];

        let names: Vec<String> = params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
        let tensors: Vec<Tensor> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| (*t).clone())
            .collect();
        let cfg2 = cfg.clone();
        let seqs2 = seqs.clone();
        // The generic harness rebuilds graphs from leaves; the model builds
        // its own graph from params, so run the same protocol manually.
        let loss_of = |ts: &[Tensor]| -> Float {
            let mut p = params.clone();
            for ((_, dst), src) in p.named_tensors_mut().iter_mut().zip(ts) {
                dst.data.copy_from_slice(&src.data);
            }
            let mut fw = forward_batch(&seqs2, &p, &cfg2, Mode::Eval, 0);
            let (total, _, _) = batch_losses(&mut fw, &seqs2, &cfg2);
            fw.graph.value(total).data[0]
        };
        // Analytic gradients.
        let mut fw = forward_batch(&seqs, &params, &cfg, Mode::Eval, 0);
        let (total, _, _) = batch_losses(&mut fw, &seqs, &cfg);
        let mut p = params.clone();
        backward_into_params(&mut fw, total, &mut p);

        let mut work = tensors.clone();
        let mut worst: Float = 0.0;
        for (ti, name) in names.iter().enumerate() {
            let grad = p.named_tensors()[ti].1.grad.clone().unwrap();
            for ei in 0..work[ti].numel() {
                let orig = work[ti].data[ei];
                let h = 1e-2 as Float * orig.abs().max(1.0);
                work[ti].data[ei] = orig + h;
                let plus = loss_of(&work);
                work[ti].data[ei] = orig - h;
                let minus = loss_of(&work);
                work[ti].data[ei] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = grad[ei];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                assert!(
                    rel < 1e-2,
                    "{name}[{ei}]: analytic {a:e} vs numeric {numeric:e} (rel {rel:e})"
                );
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-2);
    }
}
