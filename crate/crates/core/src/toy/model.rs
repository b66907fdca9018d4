use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::partition::TokenPartition;
use crate::rope::{attention_logits, RopeConfig};
use crate::tensor::{l2_norm, rms_norm, Matrix, RMS_EPS};
use crate::trace::{AttentionTrace, HeadTrace};

use super::tokenizer::SYS;
use super::ToyConfig;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    wq: Vec<Matrix>,
    wk: Vec<Matrix>,
    wv: Vec<Matrix>,
    wo: Matrix,
    w1: Matrix,
    w2: Matrix,
}

/// Randomly initialized decoder. Immutable once built; forward passes may run
/// concurrently on a shared model.
///
/// The residual stream is split in two halves. Token embeddings and projected
/// vision features live in the first ("content") half; attention and MLP
/// outputs are written only to the second ("update") half. Keys read the
/// content half through the slow rotary pairs and the update half through the
/// fast ones, so a token's phase sensitivity is carried by what the blocks
/// added to it, relative to how large its embedding is.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    cfg: ToyConfig,
    rope: RopeConfig,
    embedding: Matrix,
    projector: Matrix,
    layers: Vec<Layer>,
    unembed: Matrix,
}

/// One head's pre-rotation queries/keys and full causal attention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRecord {
    pub queries: Matrix,
    pub keys: Matrix,
    pub attention: Matrix,
}

/// Everything a forward pass computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    pub positions: Vec<f64>,
    /// `layers + 1` entries: the residual stream entering each block, then
    /// the final stream.
    pub hidden: Vec<Matrix>,
    /// Attention-block update added to the stream, per layer.
    pub attn_out: Vec<Matrix>,
    pub mlp_out: Vec<Matrix>,
    /// Layer-major, `layer * heads + head`.
    pub heads: Vec<HeadRecord>,
    /// Vocabulary logits at every position.
    pub logits: Matrix,
    layers: usize,
    n_heads: usize,
    head_dim: usize,
}

impl ForwardRecord {
    pub fn final_logits(&self) -> &[f64] {
        self.logits.row(self.logits.rows() - 1)
    }

    pub fn head(&self, layer: usize, head: usize) -> &HeadRecord {
        &self.heads[layer * self.n_heads + head]
    }

    /// Attention capture at the given query positions.
    pub fn trace(&self, query_steps: &[usize]) -> Result<AttentionTrace> {
        let captures = self
            .heads
            .iter()
            .map(|h| {
                Ok(HeadTrace {
                    queries: h.queries.select_rows(query_steps)?,
                    keys: h.keys.clone(),
                    attention: h.attention.select_rows(query_steps)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        AttentionTrace::new(
            self.layers,
            self.n_heads,
            self.head_dim,
            self.positions.clone(),
            query_steps.to_vec(),
            captures,
        )
    }

    /// Capture at the final position only.
    pub fn final_trace(&self) -> Result<AttentionTrace> {
        self.trace(&[self.positions.len() - 1])
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn rows_rms_norm(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let n = rms_norm(m.row(r), RMS_EPS, None)?;
        out.row_mut(r).copy_from_slice(&n);
    }
    Ok(out)
}

/// Sum whose value does not depend on the order of `terms`.
fn order_free_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

impl ToyModel {
    pub fn build(cfg: &ToyConfig) -> Result<Self> {
        cfg.validate()?;
        let rope = cfg.rope()?;
        let d = cfg.model_dim();
        let half = d / 2;
        let hd = cfg.head_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

        // content half only, every row at RMS exactly 1 over the full width
        let mut embedding = Matrix::zeros(cfg.vocab, d);
        let raw = gaussian(&mut rng, cfg.vocab, half, 1.0);
        for t in 0..cfg.vocab {
            let r = raw.row(t);
            let scale = (d as f64).sqrt() / l2_norm(r);
            embedding.row_mut(t)[..half].iter_mut().zip(r).for_each(|(e, x)| *e = x * scale);
        }
        let mut projector = Matrix::zeros(cfg.vision_feature_dim, d);
        let raw = gaussian(&mut rng, cfg.vision_feature_dim, half, (cfg.vision_feature_dim as f64).sqrt().recip());
        for f in 0..cfg.vision_feature_dim {
            projector.row_mut(f)[..half].copy_from_slice(raw.row(f));
        }

        // which rotary coordinates are fed by the content half
        let slow_pairs = hd / 2 - hd / 4;
        let mut slow = vec![false; hd];
        for i in (hd / 2 - slow_pairs)..hd / 2 {
            let (a, b) = rope.pairing().pair(i, hd / 2);
            slow[a] = true;
            slow[b] = true;
        }
        let in_std = (d as f64).sqrt().recip();
        let out_std = cfg.update_scale / (d as f64).sqrt();
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            let mut wq = Vec::with_capacity(cfg.heads);
            let mut wk = Vec::with_capacity(cfg.heads);
            let mut wv = Vec::with_capacity(cfg.heads);
            for _ in 0..cfg.heads {
                wq.push(gaussian(&mut rng, d, hd, in_std));
                let mut k = gaussian(&mut rng, d, hd, (half as f64).sqrt().recip());
                for r in 0..d {
                    let content = r < half;
                    for c in 0..hd {
                        if slow[c] != content {
                            k[(r, c)] = 0.0;
                        }
                    }
                }
                wk.push(k);
                wv.push(gaussian(&mut rng, d, hd, in_std));
            }
            let mut wo = gaussian(&mut rng, d, d, out_std);
            let w1 = gaussian(&mut rng, d, cfg.mlp_hidden, in_std);
            let mut w2 = gaussian(&mut rng, cfg.mlp_hidden, d, cfg.update_scale / (cfg.mlp_hidden as f64).sqrt());
            for m in [&mut wo, &mut w2] {
                for r in 0..m.rows() {
                    m.row_mut(r)[..half].fill(0.0);
                }
            }
            layers.push(Layer { wq, wk, wv, wo, w1, w2 });
        }
        let unembed = gaussian(&mut rng, d, cfg.vocab, in_std);
        Ok(Self {
            cfg: cfg.clone(),
            rope,
            embedding,
            projector,
            layers,
            unembed,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.cfg
    }

    pub fn rope(&self) -> &RopeConfig {
        &self.rope
    }

    pub fn model_dim(&self) -> usize {
        self.cfg.model_dim()
    }

    pub fn token_embeddings(&self, tokens: &[usize]) -> Result<Matrix> {
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.cfg.vocab) {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: self.cfg.vocab,
            });
        }
        self.embedding.select_rows(tokens)
    }

    /// Raw patch features through the linear projector, before scaling.
    pub fn project(&self, features: &Matrix) -> Result<Matrix> {
        features.matmul(&self.projector)
    }

    /// Rescales a block of vision rows so their mean L2 norm is
    /// `vision_norm_skew` times the text-row norm.
    pub fn apply_skew(&self, vision: &Matrix) -> Result<Matrix> {
        let mut norms: Vec<f64> = vision.iter_rows().map(l2_norm).collect();
        let mean = order_free_sum(&mut norms) / vision.rows().max(1) as f64;
        if !(mean > 0.0) {
            return Err(Error::InvalidArgument("vision rows are all zero".into()));
        }
        let target = self.cfg.vision_norm_skew * (self.model_dim() as f64).sqrt();
        Ok(vision.scale(target / mean))
    }

    /// `[system | vision | text]` input embeddings from already-projected
    /// vision rows.
    pub fn assemble(&self, vision: &Matrix, text_tokens: &[usize]) -> Result<(Matrix, TokenPartition)> {
        if vision.cols() != self.model_dim() {
            return Err(Error::dims(format!(
                "vision rows have width {}, model_dim is {}",
                vision.cols(),
                self.model_dim()
            )));
        }
        let system = self.token_embeddings(&vec![SYS; self.cfg.n_system])?;
        let text = self.token_embeddings(text_tokens)?;
        let emb = Matrix::vstack(&[&system, vision, &text])?;
        Ok((emb, TokenPartition::contiguous(self.cfg.n_system, vision.rows(), text_tokens.len())))
    }

    /// Full input for raw patch features: project, skew, assemble.
    pub fn embed(&self, features: &Matrix, text_tokens: &[usize]) -> Result<(Matrix, TokenPartition)> {
        let vision = self.apply_skew(&self.project(features)?)?;
        self.assemble(&vision, text_tokens)
    }

    /// Forward pass at positions `0, 1, ..., n-1`.
    pub fn forward(&self, input: &Matrix, partition: &TokenPartition) -> Result<ForwardRecord> {
        let positions: Vec<f64> = (0..input.rows()).map(|i| i as f64).collect();
        self.forward_at(input, partition, &positions)
    }

    /// Forward pass with explicit (possibly equal or fractional) positions.
    pub fn forward_at(&self, input: &Matrix, partition: &TokenPartition, positions: &[f64]) -> Result<ForwardRecord> {
        let n = input.rows();
        let d = self.model_dim();
        if input.cols() != d {
            return Err(Error::dims(format!("input width {} vs model_dim {d}", input.cols())));
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if partition.seq_len() != n {
            return Err(Error::dims(format!(
                "partition covers {} positions, input has {n}",
                partition.seq_len()
            )));
        }
        if positions.len() != n {
            return Err(Error::dims(format!("{} positions for {n} tokens", positions.len())));
        }
        let hd = self.cfg.head_dim;
        let mut h = input.clone();
        let mut rec = ForwardRecord {
            positions: positions.to_vec(),
            hidden: Vec::with_capacity(self.layers.len() + 1),
            attn_out: Vec::with_capacity(self.layers.len()),
            mlp_out: Vec::with_capacity(self.layers.len()),
            heads: Vec::with_capacity(self.layers.len() * self.cfg.heads),
            logits: Matrix::zeros(0, 0),
            layers: self.layers.len(),
            n_heads: self.cfg.heads,
            head_dim: hd,
        };
        let mut terms = Vec::with_capacity(n);
        for layer in &self.layers {
            rec.hidden.push(h.clone());
            let x = rows_rms_norm(&h)?;
            let mut concat = Matrix::zeros(n, d);
            for head in 0..self.cfg.heads {
                let q = x.matmul(&layer.wq[head])?;
                let k = x.matmul(&layer.wk[head])?;
                let v = x.matmul(&layer.wv[head])?;
                let mut attention = Matrix::zeros(n, n);
                let mut order: Vec<usize> = Vec::with_capacity(n);
                for i in 0..n {
                    let keys = Matrix::from_vec(i + 1, hd, k.as_slice()[..(i + 1) * hd].to_vec())?;
                    let logits = attention_logits(q.row(i), &keys, positions[i], &positions[..=i], &self.rope)?;
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
                    terms.clear();
                    terms.extend_from_slice(&exps);
                    let z = order_free_sum(&mut terms);
                    let row = attention.row_mut(i);
                    for (a, e) in row.iter_mut().zip(&exps) {
                        *a = e / z;
                    }
                    // accumulate values in an order fixed by their content
                    order.clear();
                    order.extend(0..=i);
                    order.sort_by(|&a, &b| {
                        row[a]
                            .total_cmp(&row[b])
                            .then_with(|| cmp_rows(v.row(a), v.row(b)))
                    });
                    let out = &mut concat.row_mut(i)[head * hd..(head + 1) * hd];
                    for &j in &order {
                        let w = attention[(i, j)];
                        for (o, val) in out.iter_mut().zip(v.row(j)) {
                            *o += w * val;
                        }
                    }
                }
                rec.heads.push(HeadRecord {
                    queries: q,
                    keys: k,
                    attention,
                });
            }
            let a = concat.matmul(&layer.wo)?;
            h = h.add(&a)?;
            rec.attn_out.push(a);
            let x2 = rows_rms_norm(&h)?;
            let mut hidden = x2.matmul(&layer.w1)?;
            for r in 0..n {
                hidden.row_mut(r).iter_mut().for_each(|z| *z = gelu(*z));
            }
            let m = hidden.matmul(&layer.w2)?;
            h = h.add(&m)?;
            rec.mlp_out.push(m);
        }
        rec.logits = h.matmul(&self.unembed)?;
        rec.hidden.push(h);
        Ok(rec)
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::TokenGroup;
    use crate::probes::{norm_profile, permute_vision_tokens};
    use crate::tensor::rms;

    fn small(layers: usize, skew: f64) -> ToyConfig {
        ToyConfig {
            layers,
            vision_norm_skew: skew,
            seed: 7,
            ..ToyConfig::default()
        }
    }

    fn features(cfg: &ToyConfig, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gaussian(&mut rng, cfg.n_vision, cfg.vision_feature_dim, 1.0)
    }

    fn text(cfg: &ToyConfig) -> Vec<usize> {
        (0..cfg.n_text).map(|i| 3 + i % 30).collect()
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = small(2, 1.0);
        assert_eq!(ToyModel::build(&cfg).unwrap(), ToyModel::build(&cfg).unwrap());
        let other = ToyConfig { seed: 8, ..cfg.clone() };
        assert_ne!(ToyModel::build(&cfg).unwrap(), ToyModel::build(&other).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            ToyConfig { head_dim: 3, ..ToyConfig::default() },
            ToyConfig { vocab: 10, ..ToyConfig::default() },
            ToyConfig { vision_norm_skew: 0.5, ..ToyConfig::default() },
            ToyConfig { heads: 0, ..ToyConfig::default() },
        ] {
            assert!(ToyModel::build(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn text_rows_have_unit_rms_and_skew_sets_layer0_ratio() {
        for skew in [1.0, 10.0, 100.0] {
            let cfg = small(1, skew);
            let m = ToyModel::build(&cfg).unwrap();
            let (emb, p) = m.embed(&features(&cfg, 1), &text(&cfg)).unwrap();
            for &i in p.text() {
                assert!((rms(emb.row(i)) - 1.0).abs() < 1e-12);
            }
            let rec = m.forward(&emb, &p).unwrap();
            let prof = norm_profile(&rec.hidden, &p).unwrap();
            let r0 = prof.layers[0].ratio.unwrap();
            assert!((r0 / skew - 1.0).abs() < 1e-9, "skew {skew}: ratio {r0}");
        }
    }

    #[test]
    fn zero_layers_read_out_linearly() {
        let cfg = small(0, 1.0);
        let m = ToyModel::build(&cfg).unwrap();
        let (a, p) = m.embed(&features(&cfg, 1), &text(&cfg)).unwrap();
        let b = a.scale(2.0);
        let la = m.forward(&a, &p).unwrap();
        let lb = m.forward(&b, &p).unwrap();
        let sum = m.forward(&a.add(&b).unwrap(), &p).unwrap();
        for ((x, y), s) in la.final_logits().iter().zip(lb.final_logits()).zip(sum.final_logits()) {
            assert!((x + y - s).abs() < 1e-10);
            assert!((2.0 * x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn attention_rows_are_causal_and_normalized() {
        let cfg = small(2, 10.0);
        let m = ToyModel::build(&cfg).unwrap();
        let (emb, p) = m.embed(&features(&cfg, 2), &text(&cfg)).unwrap();
        let rec = m.forward(&emb, &p).unwrap();
        assert_eq!(rec.hidden.len(), 3);
        assert_eq!(rec.heads.len(), 2 * cfg.heads);
        for h in &rec.heads {
            for i in 0..p.seq_len() {
                let row = h.attention.row(i);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row[i + 1..].iter().all(|&w| w == 0.0));
            }
        }
        let t = rec.final_trace().unwrap();
        assert_eq!(t.query_steps(), &[p.seq_len() - 1]);
        assert_eq!(t.layers(), 2);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = small(3, 10.0);
        let m = ToyModel::build(&cfg).unwrap();
        let (emb, p) = m.embed(&features(&cfg, 3), &text(&cfg)).unwrap();
        assert_eq!(m.forward(&emb, &p).unwrap(), m.forward(&emb, &p).unwrap());
    }

    #[test]
    fn single_layer_without_rope_ignores_vision_order() {
        let cfg = small(1, 10.0);
        let m = ToyModel::build(&cfg).unwrap();
        let (emb, p) = m.embed(&features(&cfg, 4), &text(&cfg)).unwrap();
        let flat = vec![0.0; p.seq_len()];
        let base = m.forward_at(&emb, &p, &flat).unwrap();
        for seed in 0..5 {
            let perm = permute_vision_tokens(&emb, &p, seed).unwrap();
            assert_ne!(perm, emb);
            let out = m.forward_at(&perm, &p, &flat).unwrap();
            assert_eq!(out.final_logits(), base.final_logits());
        }
        // with rotary positions the order matters again
        let rotated = m.forward(&emb, &p).unwrap();
        let perm = permute_vision_tokens(&emb, &p, 0).unwrap();
        assert_ne!(m.forward(&perm, &p).unwrap().final_logits(), rotated.final_logits());
    }

    #[test]
    fn skew_keeps_vision_norms_high_early() {
        let cfg = small(8, 10.0);
        let m = ToyModel::build(&cfg).unwrap();
        let (emb, p) = m.embed(&features(&cfg, 5), &text(&cfg)).unwrap();
        let rec = m.forward(&emb, &p).unwrap();
        let prof = norm_profile(&rec.hidden, &p).unwrap();
        for l in 0..cfg.layers.div_ceil(4) {
            assert!(prof.layers[l].ratio.unwrap() >= 2.0);
        }
        let v = p.indices(TokenGroup::Vision);
        assert!(!v.is_empty());
    }
}
