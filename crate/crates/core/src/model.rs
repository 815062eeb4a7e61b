//! The sequence model: concatenated item/position/user/score inputs, a
//! pre-norm causal transformer and two head MLPs that emit survival matrices
//! `p[i, j] = P(actions in the first j positions >= i)` for clicks and pays.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{EngineConfig, HeadMode, Item, UserContext};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::ops::{
    affine, affine_backward, attn_backward, attn_forward, ln_backward, ln_forward, mlp_backward, mlp_forward,
    AttnCache, AttnGrads, AttnWeights, LnCache, MlpCache, MlpGrads, MlpWeights,
};
use crate::nn::{ParamId, ParamStore, Tensor, LN_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Objective {
    Click,
    Pay,
}

/// Threshold probabilities for one objective over a list of `len` positions.
///
/// Entry `(i, j)` (both 1-based) is the probability that at least `i`
/// actions happen within the first `j` positions. Entries with `i > j` are
/// exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalMatrix {
    objective: Objective,
    len: usize,
    max_count: usize,
    values: Vec<f64>,
}

impl SurvivalMatrix {
    /// `values` is row-major `[len, max_count]`: row `j - 1` holds `p[1..=max_count, j]`.
    pub fn new(objective: Objective, len: usize, max_count: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != len * max_count {
            return Err(Error::shape(format!(
                "survival matrix [{len}, {max_count}] needs {} values, got {}",
                len * max_count,
                values.len()
            )));
        }
        for j in 1..=len {
            for i in 1..=max_count {
                let p = values[(j - 1) * max_count + i - 1];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!("p[{i},{j}] = {p} outside [0,1]")));
                }
                if i > j && p != 0.0 {
                    return Err(Error::invalid(format!("p[{i},{j}] must be 0 for i > j")));
                }
            }
        }
        Ok(Self { objective, len, max_count, values })
    }

    /// Builds from `f(i, j)` with 1-based indices; entries with `i > j` are set to 0.
    pub fn from_fn(objective: Objective, len: usize, max_count: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = vec![0.0; len * max_count];
        for j in 1..=len {
            for i in 1..=max_count.min(j) {
                values[(j - 1) * max_count + i - 1] = f(i, j);
            }
        }
        Self::new(objective, len, max_count, values)
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    /// Number of positions covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_count(&self) -> usize {
        self.max_count
    }

    /// `p[i, j]`, 1-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!((1..=self.max_count).contains(&i) && (1..=self.len).contains(&j));
        self.values[(j - 1) * self.max_count + i - 1]
    }

    /// Threshold probabilities `p[1..=max_count, j]` for the length-`j` prefix.
    pub fn position(&self, j: usize) -> &[f64] {
        &self.values[(j - 1) * self.max_count..j * self.max_count]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The first `t` positions.
    pub fn truncated(&self, t: usize) -> Self {
        let t = t.min(self.len);
        Self {
            objective: self.objective,
            len: t,
            max_count: self.max_count,
            values: self.values[..t * self.max_count].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalPair {
    pub click: SurvivalMatrix,
    pub pay: SurvivalMatrix,
}

/// Concatenated inputs `[n, l, d]` with feature blocks in the order item
/// embedding, position embedding, user features, prior scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub n: usize,
    pub l: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl ModelInput {
    pub fn sequence(&self, s: usize) -> &[f64] {
        &self.data[s * self.l * self.d..(s + 1) * self.l * self.d]
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Weight(usize),
    Zero,
    One,
    Small,
}

#[derive(Debug, Clone)]
struct BlockIds {
    ln1: [ParamId; 2],
    attn: [ParamId; 8],
    ln2: [ParamId; 2],
    ffn: [ParamId; 4],
}

#[derive(Debug, Clone)]
struct HeadIds {
    mlp: [ParamId; 4],
    thresholds: Option<ParamId>,
}

#[derive(Debug, Clone)]
struct Layout {
    input: [ParamId; 2],
    position: ParamId,
    blocks: Vec<BlockIds>,
    final_ln: [ParamId; 2],
    heads: [HeadIds; 2],
}

/// Architecture of the survival model; parameters live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct SortModel {
    config: EngineConfig,
    specs: Vec<(String, Vec<usize>, Init)>,
    layout: Layout,
}

/// Everything the backward pass needs from one sequence's forward pass.
#[derive(Debug, Clone)]
pub struct SeqCache {
    t: usize,
    x: Vec<f64>,
    blocks: Vec<(LnCache, AttnCache, LnCache, MlpCache)>,
    final_ln: LnCache,
    heads: [MlpCache; 2],
}

/// Per-sequence forward result: raw threshold logits (`-inf` where masked)
/// and the survival matrices derived from them.
#[derive(Debug, Clone)]
pub struct SeqOutput {
    pub click_logits: Vec<f64>,
    pub pay_logits: Vec<f64>,
    pub survival: SurvivalPair,
}

impl SortModel {
    pub fn new(config: &EngineConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let (d, dm, h, l) = (c.d_input(), c.d_model, c.head_hidden, c.max_count);
        let mut specs: Vec<(String, Vec<usize>, Init)> = Vec::new();
        let next = |specs: &mut Vec<(String, Vec<usize>, Init)>, name: String, shape: Vec<usize>, init| {
            specs.push((name, shape, init));
            ParamId(specs.len() - 1)
        };
        let input = [
            next(&mut specs, "input.w".into(), vec![d, dm], Init::Weight(d)),
            next(&mut specs, "input.b".into(), vec![dm], Init::Zero),
        ];
        let position = next(&mut specs, "position".into(), vec![c.l_o, c.d_position], Init::Small);
        let mut blocks = Vec::new();
        for k in 0..c.n_layers {
            let p = |s: &str| format!("block{k}.{s}");
            let ln1 = [
                next(&mut specs, p("ln1.gain"), vec![dm], Init::One),
                next(&mut specs, p("ln1.bias"), vec![dm], Init::Zero),
            ];
            let mut attn = [ParamId(0); 8];
            for (n, name) in ["q", "k", "v", "o"].iter().enumerate() {
                attn[2 * n] = next(&mut specs, p(&format!("attn.w{name}")), vec![dm, dm], Init::Weight(dm));
                attn[2 * n + 1] = next(&mut specs, p(&format!("attn.b{name}")), vec![dm], Init::Zero);
            }
            let ln2 = [
                next(&mut specs, p("ln2.gain"), vec![dm], Init::One),
                next(&mut specs, p("ln2.bias"), vec![dm], Init::Zero),
            ];
            let ffn = [
                next(&mut specs, p("ffn.w1"), vec![dm, 4 * dm], Init::Weight(dm)),
                next(&mut specs, p("ffn.b1"), vec![4 * dm], Init::Zero),
                next(&mut specs, p("ffn.w2"), vec![4 * dm, dm], Init::Weight(4 * dm)),
                next(&mut specs, p("ffn.b2"), vec![dm], Init::Zero),
            ];
            blocks.push(BlockIds { ln1, attn, ln2, ffn });
        }
        let final_ln = [
            next(&mut specs, "final_ln.gain".into(), vec![dm], Init::One),
            next(&mut specs, "final_ln.bias".into(), vec![dm], Init::Zero),
        ];
        let out = match c.head_mode {
            HeadMode::Literal => l,
            HeadMode::Monotone => 1,
        };
        let head = |specs: &mut Vec<(String, Vec<usize>, Init)>, obj: &str| {
            let p = |s: &str| format!("head.{obj}.{s}");
            let mlp = [
                next(specs, p("w1"), vec![dm, h], Init::Weight(dm)),
                next(specs, p("b1"), vec![h], Init::Zero),
                next(specs, p("w2"), vec![h, out], Init::Weight(h)),
                next(specs, p("b2"), vec![out], Init::Zero),
            ];
            let thresholds = match c.head_mode {
                HeadMode::Monotone => Some(next(specs, p("thresholds"), vec![c.l_o, l], Init::Zero)),
                HeadMode::Literal => None,
            };
            HeadIds { mlp, thresholds }
        };
        let heads = [head(&mut specs, "click"), head(&mut specs, "pay")];
        let layout = Layout { input, position, blocks, final_ln, heads };
        Ok(Self { config: config.clone(), specs, layout })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Number of scalar parameters for this architecture.
    pub fn param_count(&self) -> usize {
        self.specs.iter().map(|(_, s, _)| s.iter().product::<usize>()).sum()
    }

    /// Parameter names in canonical order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|(n, _, _)| n.as_str())
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero, layer-norm gains one,
    /// position table uniform in `±0.1`.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, shape, init) in &self.specs {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = match *init {
                Init::Weight(fan_in) => {
                    let a = 1.0 / math::sqrt(fan_in as f64);
                    (0..n).map(|_| rng.random_range(-a..a)).collect()
                }
                Init::Zero => vec![0.0; n],
                Init::One => vec![1.0; n],
                Init::Small => (0..n).map(|_| rng.random_range(-0.1..0.1)).collect(),
            };
            store
                .add(name, Tensor::new(shape.clone(), data).expect("spec shape"))
                .expect("unique names");
        }
        store
    }

    /// Re-orders a loaded store into canonical order, checking names and shapes.
    pub fn adopt(&self, store: &ParamStore) -> Result<ParamStore> {
        if store.len() != self.specs.len() {
            return Err(Error::shape(format!(
                "checkpoint has {} parameters, architecture needs {}",
                store.len(),
                self.specs.len()
            )));
        }
        let mut out = ParamStore::new();
        for (name, shape, _) in &self.specs {
            let t = store
                .get(name)
                .ok_or_else(|| Error::shape(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            out.add(name, t.clone())?;
        }
        Ok(out)
    }

    /// Concatenates item, position, user and score features for a batch of
    /// equally long lists.
    pub fn assemble_input(&self, params: &ParamStore, seqs: &[(&[&Item], &UserContext)]) -> Result<ModelInput> {
        let c = &self.config;
        let l = seqs.first().map_or(0, |(items, _)| items.len());
        if l == 0 {
            return Err(Error::invalid("cannot assemble an empty sub-list"));
        }
        if l > c.l_o {
            return Err(Error::invalid(format!("list length {l} exceeds the position table ({})", c.l_o)));
        }
        let d = c.d_input();
        let pos = params.value(self.layout.position).data();
        let mut data = Vec::with_capacity(seqs.len() * l * d);
        for (items, user) in seqs {
            if items.len() != l {
                return Err(Error::shape("all lists in a batch must share one length"));
            }
            if user.features.len() != c.d_user {
                return Err(Error::shape(format!(
                    "user features have {} components, expected {}",
                    user.features.len(),
                    c.d_user
                )));
            }
            for (j, item) in items.iter().enumerate() {
                if item.embedding.len() != c.d_emb {
                    return Err(Error::shape(format!("item {} embedding width", item.id)));
                }
                data.extend_from_slice(&item.embedding);
                data.extend_from_slice(&pos[j * c.d_position..(j + 1) * c.d_position]);
                data.extend_from_slice(&user.features);
                data.push(item.prior_ctr);
                data.push(item.prior_cvr);
            }
        }
        Ok(ModelInput { n: seqs.len(), l, d, data })
    }

    /// Inference over a batch; one survival pair per sequence.
    pub fn forward(&self, params: &ParamStore, input: &ModelInput) -> Result<Vec<SurvivalPair>> {
        self.check_input(input)?;
        (0..input.n)
            .map(|s| self.forward_seq(params.values(), input.sequence(s), input.l).map(|(o, _)| o.survival))
            .collect()
    }

    /// Forward pass that keeps the activations needed by [`SortModel::backward`].
    pub fn forward_train(&self, params: &ParamStore, input: &ModelInput) -> Result<Vec<(SeqOutput, SeqCache)>> {
        self.check_input(input)?;
        (0..input.n)
            .map(|s| self.forward_seq(params.values(), input.sequence(s), input.l))
            .collect()
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        if input.d != self.config.d_input() || input.data.len() != input.n * input.l * input.d {
            return Err(Error::shape("model input does not match the architecture"));
        }
        if input.l == 0 || input.l > self.config.l_o {
            return Err(Error::invalid(format!("sequence length {} outside 1..={}", input.l, self.config.l_o)));
        }
        Ok(())
    }

    fn mlp<'a>(v: &'a [Tensor], ids: &[ParamId; 4], inp: usize, hidden: usize, out: usize) -> MlpWeights<'a> {
        MlpWeights {
            w1: v[ids[0].0].data(),
            b1: v[ids[1].0].data(),
            w2: v[ids[2].0].data(),
            b2: v[ids[3].0].data(),
            inp,
            hidden,
            out,
        }
    }

    fn attn<'a>(v: &'a [Tensor], ids: &[ParamId; 8]) -> AttnWeights<'a> {
        let g = |k: usize| v[ids[k].0].data();
        AttnWeights { wq: g(0), bq: g(1), wk: g(2), bk: g(3), wv: g(4), bv: g(5), wo: g(6), bo: g(7) }
    }

    fn head_width(&self) -> usize {
        match self.config.head_mode {
            HeadMode::Literal => self.config.max_count,
            HeadMode::Monotone => 1,
        }
    }

    fn forward_seq(&self, v: &[Tensor], x: &[f64], t: usize) -> Result<(SeqOutput, SeqCache)> {
        let c = &self.config;
        let (d_in, dm) = (c.d_input(), c.d_model);
        let lay = &self.layout;
        let mut h = affine(x, t, d_in, v[lay.input[0].0].data(), v[lay.input[1].0].data(), dm);
        let mut blocks = Vec::with_capacity(lay.blocks.len());
        for b in &lay.blocks {
            let (a, ln1) = ln_forward(&h, t, dm, v[b.ln1[0].0].data(), v[b.ln1[1].0].data(), LN_EPS);
            let (att, ac) = attn_forward(&Self::attn(v, &b.attn), &a, t, dm, c.n_heads);
            h.iter_mut().zip(&att).for_each(|(h, a)| *h += a);
            let (f, ln2) = ln_forward(&h, t, dm, v[b.ln2[0].0].data(), v[b.ln2[1].0].data(), LN_EPS);
            let (m, mc) = mlp_forward(&Self::mlp(v, &b.ffn, dm, 4 * dm, dm), &f, t);
            h.iter_mut().zip(&m).for_each(|(h, a)| *h += a);
            blocks.push((ln1, ac, ln2, mc));
        }
        let (hf, final_ln) = ln_forward(&h, t, dm, v[lay.final_ln[0].0].data(), v[lay.final_ln[1].0].data(), LN_EPS);
        let width = self.head_width();
        let mut logits = [Vec::new(), Vec::new()];
        let mut caches = Vec::with_capacity(2);
        for (k, head) in lay.heads.iter().enumerate() {
            let (u, hc) = mlp_forward(&Self::mlp(v, &head.mlp, dm, c.head_hidden, width), &hf, t);
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("head activations".into()));
            }
            logits[k] = self.threshold_logits(v, head, &u, t);
            caches.push(hc);
        }
        let [click_logits, pay_logits] = logits;
        let survival = SurvivalPair {
            click: self.survival_from_logits(Objective::Click, &click_logits, t)?,
            pay: self.survival_from_logits(Objective::Pay, &pay_logits, t)?,
        };
        let heads: [MlpCache; 2] = caches.try_into().expect("two heads");
        let cache = SeqCache { t, x: x.to_vec(), blocks, final_ln, heads };
        Ok((SeqOutput { click_logits, pay_logits, survival }, cache))
    }

    /// Maps raw head output `u: [t, width]` to logits `[t, max_count]`, masking `i > j` with `-inf`.
    fn threshold_logits(&self, v: &[Tensor], head: &HeadIds, u: &[f64], t: usize) -> Vec<f64> {
        let l = self.config.max_count;
        let mut out = vec![f64::NEG_INFINITY; t * l];
        match head.thresholds {
            None => {
                for j in 0..t {
                    for i in 0..=j.min(l - 1) {
                        out[j * l + i] = u[j * l + i];
                    }
                }
            }
            Some(id) => {
                let raw = v[id.0].data();
                for j in 0..t {
                    let mut cut = raw[j * l];
                    for i in 0..=j.min(l - 1) {
                        if i > 0 {
                            cut += math::softplus(raw[j * l + i]);
                        }
                        out[j * l + i] = u[j] - cut;
                    }
                }
            }
        }
        out
    }

    fn survival_from_logits(&self, objective: Objective, logits: &[f64], t: usize) -> Result<SurvivalMatrix> {
        let values = logits.iter().map(|&z| math::sigmoid(z)).collect();
        SurvivalMatrix::new(objective, t, self.config.max_count, values)
    }

    /// Accumulates parameter gradients given `dL/dlogit` for both heads
    /// (`[t, max_count]`, masked entries ignored).
    pub fn backward(&self, params: &mut ParamStore, cache: &SeqCache, d_click: &[f64], d_pay: &[f64]) -> Result<()> {
        let c = &self.config;
        let (t, l, dm) = (cache.t, c.max_count, c.d_model);
        if d_click.len() != t * l || d_pay.len() != t * l {
            return Err(Error::shape("logit gradient does not match the forward pass"));
        }
        let lay = &self.layout;
        let width = self.head_width();
        let (v, g) = params.split_mut();
        let mut d_hf = vec![0.0; t * dm];
        for (k, head) in lay.heads.iter().enumerate() {
            let dz = if k == 0 { d_click } else { d_pay };
            let mut du = vec![0.0; t * width];
            match head.thresholds {
                None => {
                    for j in 0..t {
                        for i in 0..=j.min(l - 1) {
                            du[j * l + i] = dz[j * l + i];
                        }
                    }
                }
                Some(id) => {
                    let raw = v[id.0].data();
                    let dth = g[id.0].data_mut();
                    for j in 0..t {
                        let top = j.min(l - 1);
                        // logit[i] = u - raw[0] - sum_{k=1..=i} softplus(raw[k])
                        let mut tail = 0.0;
                        for i in (0..=top).rev() {
                            let gz = dz[j * l + i];
                            du[j] += gz;
                            tail += gz;
                            if i > 0 {
                                dth[j * l + i] -= tail * math::sigmoid(raw[j * l + i]);
                            } else {
                                dth[j * l] -= tail;
                            }
                        }
                    }
                }
            }
            let w = Self::mlp(v, &head.mlp, dm, c.head_hidden, width);
            let [w1, b1, w2, b2] = disjoint(g, &head.mlp)?;
            let dx = mlp_backward(&w, MlpGrads { w1, b1, w2, b2 }, &cache.heads[k], t, &du);
            d_hf.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
        }
        let [fg, fb] = disjoint(g, &lay.final_ln)?;
        let mut dh = ln_backward(&cache.final_ln, t, dm, v[lay.final_ln[0].0].data(), &d_hf, fg, fb);
        for (b, (ln1, ac, ln2, mc)) in lay.blocks.iter().zip(&cache.blocks).rev() {
            let w = Self::mlp(v, &b.ffn, dm, 4 * dm, dm);
            let [w1, b1, w2, b2] = disjoint(g, &b.ffn)?;
            let df = mlp_backward(&w, MlpGrads { w1, b1, w2, b2 }, mc, t, &dh);
            let [lg, lb] = disjoint(g, &b.ln2)?;
            let dres = ln_backward(ln2, t, dm, v[b.ln2[0].0].data(), &df, lg, lb);
            dh.iter_mut().zip(dres).for_each(|(a, b)| *a += b);

            let w = Self::attn(v, &b.attn);
            let [wq, bq, wk, bk, wv, bv, wo, bo] = disjoint(g, &b.attn)?;
            let da = attn_backward(&w, AttnGrads { wq, bq, wk, bk, wv, bv, wo, bo }, ac, t, dm, c.n_heads, &dh);
            let [lg, lb] = disjoint(g, &b.ln1)?;
            let dres = ln_backward(ln1, t, dm, v[b.ln1[0].0].data(), &da, lg, lb);
            dh.iter_mut().zip(dres).for_each(|(a, b)| *a += b);
        }
        let d_in = c.d_input();
        let [iw, ib] = disjoint(g, &lay.input)?;
        let dx = affine_backward(&cache.x, t, d_in, v[lay.input[0].0].data(), dm, &dh, iw, ib);
        let dpos = g[lay.position.0].data_mut();
        for j in 0..t {
            for k in 0..c.d_position {
                dpos[j * c.d_position + k] += dx[j * d_in + c.d_emb + k];
            }
        }
        Ok(())
    }
}

fn disjoint<'a, const N: usize>(g: &'a mut [Tensor], ids: &[ParamId; N]) -> Result<[&'a mut [f64]; N]> {
    let idx = ids.map(|p| p.0);
    let tensors = g
        .get_disjoint_mut(idx)
        .map_err(|_| Error::shape("parameter gradients do not match the architecture"))?;
    Ok(tensors.map(|t| t.data_mut()))
}

/// Anything that can score a batch of equally long lists for one user in a
/// single invocation.
pub trait SlateScorer {
    fn score_batch(&self, user: &UserContext, lists: &[&[&Item]]) -> Result<Vec<SurvivalPair>>;
}

/// A model bound to concrete parameters.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub model: &'a SortModel,
    pub params: &'a ParamStore,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a SortModel, params: &'a ParamStore) -> Self {
        Self { model, params }
    }
}

impl SlateScorer for Scorer<'_> {
    fn score_batch(&self, user: &UserContext, lists: &[&[&Item]]) -> Result<Vec<SurvivalPair>> {
        let seqs: Vec<(&[&Item], &UserContext)> = lists.iter().map(|l| (*l, user)).collect();
        let input = self.model.assemble_input(self.params, &seqs)?;
        self.model.forward(self.params, &input)
    }
}
