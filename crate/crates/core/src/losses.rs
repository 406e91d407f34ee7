//! Scalar objectives on critic scores.
//!
//! Sign convention, used everywhere in this crate: the critic *ascends*
//! `L_D` and the generator *descends* `L_G`. The gradient helpers return
//! derivatives of these quantities with respect to the critic scores; the
//! trainer negates the critic side before handing it to a descent optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 1.0;
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Scores of one preference pair, preferred first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub preferred: f64,
    pub other: f64,
}

impl From<(f64, f64)> for PairScore {
    fn from((preferred, other): (f64, f64)) -> Self {
        Self { preferred, other }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub wgan_term: f64,
    /// Mean hinge over the pair set, 0 when the set is empty.
    pub ranking_term: f64,
    pub total: f64,
    pub lambda: f64,
    pub margin: f64,
}

fn mean(xs: &[f64], what: &str) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} must not be empty")));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

fn check_weight(name: &str, value: f64) -> Result<()> {
    if !(value >= 0.0 && value.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be finite and >= 0, got {value}"
        )));
    }
    Ok(())
}

/// `mean(real) - mean(fake)`, the Wasserstein estimate the critic ascends.
pub fn wgan_critic_objective(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64> {
    Ok(mean(real_scores, "real scores")? - mean(fake_scores, "fake scores")?)
}

/// `mean(-fake)`.
pub fn wgan_generator_loss(fake_scores: &[f64]) -> Result<f64> {
    Ok(-mean(fake_scores, "fake scores")?)
}

/// `max(0, m - (preferred - other))`.
#[inline]
pub fn margin_ranking_loss(score_preferred: f64, score_other: f64, m: f64) -> f64 {
    (m - (score_preferred - score_other)).max(0.0)
}

/// Whether the hinge is strictly active; at the kink the subgradient taken is 0.
#[inline]
pub fn hinge_active(score_preferred: f64, score_other: f64, m: f64) -> bool {
    m - (score_preferred - score_other) > 0.0
}

pub fn mean_ranking_loss(pairs: &[PairScore], m: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|p| margin_ranking_loss(p.preferred, p.other, m))
        .sum::<f64>()
        / pairs.len() as f64
}

/// `L_D = mean(real) - mean(fake) - lambda * mean_s h(s)`. With no pairs the
/// ranking term is zero and `L_D` is the plain WGAN objective.
pub fn dicgan_critic_objective(
    real_scores: &[f64],
    fake_scores: &[f64],
    pair_scores: &[PairScore],
    lambda: f64,
    m: f64,
) -> Result<LossBreakdown> {
    check_weight("lambda", lambda)?;
    check_weight("margin", m)?;
    let wgan_term = wgan_critic_objective(real_scores, fake_scores)?;
    let ranking_term = mean_ranking_loss(pair_scores, m);
    let total = if lambda == 0.0 {
        wgan_term
    } else {
        wgan_term - lambda * ranking_term
    };
    Ok(LossBreakdown {
        wgan_term,
        ranking_term,
        total,
        lambda,
        margin: m,
    })
}

/// Generator loss with a ranking regularizer over (generated, undesired)
/// pairs: `L_G = -mean(fake) + lambda_g * mean_s' h(s')`.
pub fn regularized_generator_loss(fake_scores: &[f64], gen_pairs: &[PairScore], lambda_g: f64, m: f64) -> Result<f64> {
    check_weight("lambda_g", lambda_g)?;
    check_weight("margin", m)?;
    let base = wgan_generator_loss(fake_scores)?;
    if lambda_g == 0.0 {
        return Ok(base);
    }
    Ok(base + lambda_g * mean_ranking_loss(gen_pairs, m))
}

/// Ranking regularizer on the generator only: plain WGAN critic, and the
/// generator additionally pushed above undesired real samples.
pub fn prg1_losses(
    real_scores: &[f64],
    fake_scores: &[f64],
    gen_vs_undesired_pairs: &[PairScore],
    lambda_g: f64,
    m: f64,
) -> Result<(f64, f64)> {
    let l_d = wgan_critic_objective(real_scores, fake_scores)?;
    let l_g = regularized_generator_loss(fake_scores, gen_vs_undesired_pairs, lambda_g, m)?;
    Ok((l_d, l_g))
}

/// Ranking regularizer on both networks.
pub fn prg2_losses(
    real_scores: &[f64],
    fake_scores: &[f64],
    critic_pairs: &[PairScore],
    gen_pairs: &[PairScore],
    lambda: f64,
    lambda_g: f64,
    m: f64,
) -> Result<(f64, f64)> {
    let l_d = dicgan_critic_objective(real_scores, fake_scores, critic_pairs, lambda, m)?.total;
    let l_g = regularized_generator_loss(fake_scores, gen_pairs, lambda_g, m)?;
    Ok((l_d, l_g))
}

/// Derivatives of `L_D` with respect to each score fed to the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticScoreGrads {
    pub real: Vec<f64>,
    pub fake: Vec<f64>,
    pub pairs: Vec<PairScore>,
}

pub fn dicgan_critic_grads(
    real_scores: &[f64],
    fake_scores: &[f64],
    pair_scores: &[PairScore],
    lambda: f64,
    m: f64,
) -> Result<CriticScoreGrads> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(Error::InvalidArgument("score arrays must not be empty".into()));
    }
    check_weight("lambda", lambda)?;
    let real = vec![1.0 / real_scores.len() as f64; real_scores.len()];
    let fake = vec![-1.0 / fake_scores.len() as f64; fake_scores.len()];
    let w = if pair_scores.is_empty() {
        0.0
    } else {
        lambda / pair_scores.len() as f64
    };
    let pairs = pair_scores
        .iter()
        .map(|p| {
            if w > 0.0 && hinge_active(p.preferred, p.other, m) {
                // d(-w h)/d preferred = +w, d(-w h)/d other = -w
                PairScore {
                    preferred: w,
                    other: -w,
                }
            } else {
                PairScore {
                    preferred: 0.0,
                    other: 0.0,
                }
            }
        })
        .collect();
    Ok(CriticScoreGrads { real, fake, pairs })
}

/// Derivatives of [`regularized_generator_loss`] with respect to the fake
/// scores. `gen_pairs[i].preferred` must be the score of `fake_scores[pair_fake_index[i]]`.
/// The undesired side is a real sample and receives no gradient.
pub fn generator_score_grads(
    fake_scores: &[f64],
    gen_pairs: &[PairScore],
    pair_fake_index: &[usize],
    lambda_g: f64,
    m: f64,
) -> Result<Vec<f64>> {
    if fake_scores.is_empty() {
        return Err(Error::InvalidArgument("fake scores must not be empty".into()));
    }
    if gen_pairs.len() != pair_fake_index.len() {
        return Err(Error::shape(
            format!("{} pair indices", gen_pairs.len()),
            format!("{}", pair_fake_index.len()),
        ));
    }
    let b = fake_scores.len() as f64;
    let mut grads = vec![-1.0 / b; fake_scores.len()];
    if lambda_g > 0.0 && !gen_pairs.is_empty() {
        let w = lambda_g / gen_pairs.len() as f64;
        for (p, &i) in gen_pairs.iter().zip(pair_fake_index) {
            if i >= grads.len() {
                return Err(Error::InvalidArgument(format!("pair index {i} out of range")));
            }
            if hinge_active(p.preferred, p.other, m) {
                grads[i] -= w;
            }
        }
    }
    Ok(grads)
}
