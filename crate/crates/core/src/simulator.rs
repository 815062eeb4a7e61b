//! Synthetic catalog, users and impression sessions drawn from a known
//! ground-truth behavior model.
//!
//! A user carries a latent taste vector in embedding space. Clicking on the
//! item at position `t` happens with probability
//! `prior_ctr * a(cat) * (1 + tau * <u, e>) * rho^(t-1) * (1 + kappa * (0.5 - s))`,
//! where `s` is the largest similarity to the previous `window` items and
//! `a(cat)` a hidden per-category appeal that the ranking priors do not know
//! about. A click converts with probability
//! `base_pay * (1 + tau * <u, e>) * prior_cvr / mean_cvr`. Both are clamped to `[0, 1]`.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, StandardNormal};

use crate::config::{Item, ObjectiveWeights, UserContext};
use crate::error::{Error, Result};
use crate::math;
use crate::value::{LabelVector, ListValue};

/// Everything that determines a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimConfig {
    pub n_items: usize,
    pub n_categories: usize,
    pub d_emb: usize,
    pub d_user: usize,
    pub l_s: usize,
    pub l_o: usize,
    /// Training impressions.
    pub sessions: usize,
    /// Held-out candidate pools for evaluation.
    pub eval_pools: usize,
    /// Spread of item embeddings around their category center.
    pub category_noise: f64,
    pub price_mu: f64,
    pub price_sigma: f64,
    pub ctr_beta: (f64, f64),
    pub cvr_beta: (f64, f64),
    /// Spread of user taste around the item it is drawn from.
    pub user_noise: f64,
    /// Noise added to log prior_ctr when ordering exposures.
    pub exposure_noise: f64,
    pub ground_truth: GroundTruthModel,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_items: 200,
            n_categories: 8,
            d_emb: 8,
            d_user: 8,
            l_s: 30,
            l_o: 10,
            sessions: 20_000,
            eval_pools: 200,
            category_noise: 0.25,
            price_mu: 1.5,
            price_sigma: 0.5,
            ctr_beta: (2.0, 10.0),
            cvr_beta: (2.0, 4.0),
            user_noise: 0.3,
            exposure_noise: 1.0,
            ground_truth: GroundTruthModel::default(),
            seed: 7,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_o == 0 || self.l_o > self.l_s {
            return Err(Error::invalid("need 1 <= l_o <= l_s"));
        }
        if self.n_items < self.l_s {
            return Err(Error::invalid(format!(
                "n_items ({}) is smaller than l_s ({})",
                self.n_items, self.l_s
            )));
        }
        if self.n_categories == 0 || self.d_emb == 0 || self.d_user == 0 {
            return Err(Error::invalid("n_categories, d_emb and d_user must be positive"));
        }
        for (name, (a, b)) in [("ctr_beta", self.ctr_beta), ("cvr_beta", self.cvr_beta)] {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::invalid(format!("{name} parameters must be positive")));
            }
        }
        if !(self.price_sigma >= 0.0) || !(self.category_noise >= 0.0) || !(self.user_noise >= 0.0) {
            return Err(Error::invalid("noise scales must be non-negative"));
        }
        if !(self.exposure_noise >= 0.0) {
            return Err(Error::invalid("exposure_noise must be non-negative"));
        }
        self.ground_truth.validate()
    }

    /// Mean of the conversion prior, used to normalise pay probabilities.
    pub fn cvr_mean(&self) -> f64 {
        self.cvr_beta.0 / (self.cvr_beta.0 + self.cvr_beta.1)
    }
}

/// The hidden behavior model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GroundTruthModel {
    /// Position decay, in (0, 1].
    pub rho: f64,
    /// Contrast coefficient on similarity to recent items.
    pub kappa: f64,
    pub base_pay: f64,
    /// Strength of user-item taste match.
    pub tau: f64,
    /// How many previous items the contrast term looks at.
    pub window: usize,
    /// Mean conversion prior; pay probabilities scale by `prior_cvr / cvr_mean`.
    pub cvr_mean: f64,
    /// Spread of the hidden per-category appeal that the ranking priors miss.
    pub appeal_sigma: f64,
    /// Seeds the per-category appeal draws.
    pub appeal_seed: u64,
}

impl Default for GroundTruthModel {
    fn default() -> Self {
        Self {
            rho: 0.9,
            kappa: 0.5,
            base_pay: 0.3,
            tau: 1.0,
            window: 5,
            cvr_mean: 1.0 / 3.0,
            appeal_sigma: 0.5,
            appeal_seed: 0,
        }
    }
}

impl GroundTruthModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid("rho must lie in (0, 1]"));
        }
        if !(self.kappa >= 0.0) || !(self.tau >= 0.0) || !(0.0..=1.0).contains(&self.base_pay) {
            return Err(Error::invalid("kappa and tau must be non-negative, base_pay in [0, 1]"));
        }
        if !(self.cvr_mean > 0.0) {
            return Err(Error::invalid("cvr_mean must be positive"));
        }
        Ok(())
    }

    /// Hidden multiplier on the click rate of every item in `category`.
    pub fn appeal(&self, category: u32) -> f64 {
        if self.appeal_sigma == 0.0 {
            return 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.appeal_seed);
        rng.set_stream(u64::from(category));
        math::exp(self.appeal_sigma * rng.sample::<f64, _>(StandardNormal))
    }

    fn match_factor(&self, user: &SimUser, item: &Item) -> f64 {
        1.0 + self.tau * math::dot(&user.latent, &item.embedding)
    }

    /// Click probability for every position of `list`.
    pub fn click_probabilities(&self, user: &SimUser, list: &[&Item]) -> Vec<f64> {
        let mut decay = 1.0;
        list.iter()
            .enumerate()
            .map(|(t, item)| {
                let start = t.saturating_sub(self.window);
                let contrast = list[start..t]
                    .iter()
                    .map(|p| math::dot(&p.embedding, &item.embedding))
                    .reduce(f64::max)
                    .map_or(1.0, |s| 1.0 + self.kappa * (0.5 - s));
                let p = item.prior_ctr * self.appeal(item.category) * self.match_factor(user, item) * decay * contrast;
                decay *= self.rho;
                math::clamp01(p)
            })
            .collect()
    }

    /// Probability of a pay given a click on `item`.
    pub fn pay_given_click(&self, user: &SimUser, item: &Item) -> f64 {
        math::clamp01(self.base_pay * self.match_factor(user, item) * item.prior_cvr / self.cvr_mean)
    }

    /// Exact expected click, pay and GMV contributions per position.
    pub fn expected_increments(&self, user: &SimUser, list: &[&Item]) -> Vec<[f64; 3]> {
        self.click_probabilities(user, list)
            .into_iter()
            .zip(list)
            .map(|(c, item)| {
                let pay = c * self.pay_given_click(user, item);
                [c, pay, pay * item.price]
            })
            .collect()
    }

    /// Exact ground-truth list value of `list` under weights `w`.
    pub fn list_value(&self, user: &SimUser, list: &[&Item], w: &ObjectiveWeights) -> ListValue {
        let mut total = [0.0; 3];
        for inc in self.expected_increments(user, list) {
            for (t, v) in total.iter_mut().zip(inc) {
                *t += v;
            }
        }
        ListValue::new(total[0], total[1], total[2], w)
    }
}

/// A simulated user: hidden taste plus the features the model is shown.
#[derive(Debug, Clone, PartialEq)]
pub struct SimUser {
    pub latent: Vec<f64>,
    pub context: UserContext,
}

impl SimUser {
    /// Builds the observable context by padding or truncating the latent vector.
    pub fn from_latent(latent: Vec<f64>, d_user: usize) -> Self {
        let mut features = latent.clone();
        features.resize(d_user, 0.0);
        Self { latent, context: UserContext::new(features) }
    }
}

/// One exposed list with its outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpressionSample {
    pub user: UserContext,
    pub items: Vec<Item>,
    pub labels: LabelVector,
}

/// A held-out candidate pool for evaluating slate generators.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPool {
    pub user: SimUser,
    pub pool: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub catalog: Vec<Item>,
    pub samples: Vec<ImpressionSample>,
    pub pools: Vec<EvalPool>,
}

// Independent random streams derived from one seed.
const STREAM_CATALOG: u64 = 1;
const STREAM_SESSIONS: u64 = 2;
const STREAM_POOLS: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = math::sqrt(math::dot(&v, &v));
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    } else if let Some(first) = v.first_mut() {
        *first = 1.0;
    }
    v
}

/// Items with category-clustered unit embeddings, log-normal prices and
/// Beta-distributed priors. Ids are `0..n_items`.
pub fn sample_catalog(config: &SimConfig) -> Result<Vec<Item>> {
    config.validate()?;
    let mut rng = stream(config.seed, STREAM_CATALOG);
    let centers: Vec<Vec<f64>> = (0..config.n_categories)
        .map(|_| normalize(gaussian_vector(&mut rng, config.d_emb, 1.0)))
        .collect();
    let price = LogNormal::new(config.price_mu, config.price_sigma).map_err(|e| Error::invalid(format!("price: {e}")))?;
    let ctr = Beta::new(config.ctr_beta.0, config.ctr_beta.1).map_err(|e| Error::invalid(format!("ctr_beta: {e}")))?;
    let cvr = Beta::new(config.cvr_beta.0, config.cvr_beta.1).map_err(|e| Error::invalid(format!("cvr_beta: {e}")))?;
    Ok((0..config.n_items)
        .map(|id| {
            let category = rng.random_range(0..config.n_categories);
            let noise = gaussian_vector(&mut rng, config.d_emb, config.category_noise);
            let embedding = normalize(centers[category].iter().zip(&noise).map(|(c, n)| c + n).collect());
            Item {
                id: id as u64,
                embedding,
                price: price.sample(&mut rng),
                prior_ctr: ctr.sample(&mut rng),
                prior_cvr: cvr.sample(&mut rng),
                category: category as u32,
            }
        })
        .collect())
}

/// A user whose taste sits near a random catalog item.
pub fn sample_user<R: Rng + ?Sized>(catalog: &[Item], config: &SimConfig, rng: &mut R) -> SimUser {
    let anchor = &catalog[rng.random_range(0..catalog.len())];
    let noise = gaussian_vector(rng, anchor.embedding.len(), config.user_noise);
    let dir = normalize(anchor.embedding.iter().zip(&noise).map(|(a, n)| a + n).collect());
    SimUser::from_latent(dir.into_iter().map(|x| 0.9 * x).collect(), config.d_user)
}

/// `l_s` distinct random catalog items.
pub fn sample_pool<R: Rng + ?Sized>(catalog: &[Item], l_s: usize, rng: &mut R) -> Vec<Item> {
    index::sample(rng, catalog.len(), l_s).into_iter().map(|i| catalog[i].clone()).collect()
}

/// What an upstream ranker would have shown: the top `l_o` of the pool by
/// log prior_ctr plus Gaussian noise.
pub fn exposure_order<R: Rng + ?Sized>(pool: &[Item], l_o: usize, noise: f64, rng: &mut R) -> Vec<usize> {
    let scores: Vec<f64> = pool
        .iter()
        .map(|it| math::ln(it.prior_ctr.max(1e-12)) + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(l_o);
    idx
}

/// Draws click and pay outcomes for one exposed list.
pub fn simulate_session<R: Rng + ?Sized>(user: &SimUser, list: &[&Item], gt: &GroundTruthModel, rng: &mut R) -> LabelVector {
    let probs = gt.click_probabilities(user, list);
    let mut clicks = Vec::with_capacity(list.len());
    let mut pays = Vec::with_capacity(list.len());
    for (p, item) in probs.iter().zip(list) {
        let click = rng.random::<f64>() < *p;
        let pay = click && rng.random::<f64>() < gt.pay_given_click(user, item);
        clicks.push(click);
        pays.push(pay);
    }
    LabelVector::new(clicks, pays).expect("equal lengths by construction")
}

/// Catalog, training impressions and evaluation pools for `config`.
pub fn simulate(config: &SimConfig) -> Result<Dataset> {
    let catalog = sample_catalog(config)?;
    let gt = &config.ground_truth;
    let mut rng = stream(config.seed, STREAM_SESSIONS);
    let samples = (0..config.sessions)
        .map(|_| {
            let user = sample_user(&catalog, config, &mut rng);
            let pool = sample_pool(&catalog, config.l_s, &mut rng);
            let order = exposure_order(&pool, config.l_o, config.exposure_noise, &mut rng);
            let items: Vec<Item> = order.iter().map(|&i| pool[i].clone()).collect();
            let refs: Vec<&Item> = items.iter().collect();
            let labels = simulate_session(&user, &refs, gt, &mut rng);
            ImpressionSample { user: user.context, items, labels }
        })
        .collect();
    let mut rng = stream(config.seed, STREAM_POOLS);
    let pools = (0..config.eval_pools)
        .map(|_| {
            let user = sample_user(&catalog, config, &mut rng);
            EvalPool { pool: sample_pool(&catalog, config.l_s, &mut rng), user }
        })
        .collect();
    Ok(Dataset { catalog, samples, pools })
}
