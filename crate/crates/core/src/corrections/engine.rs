use std::time::Duration;

use log::{debug, info};
use ndarray::{concatenate, s, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::ReplacementBuffer;
use super::config::TrainingConfig;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{self, LossBreakdown, PairScore};
use crate::neural::{Activation, Adam, Mlp};
use crate::preferences::{build_pairs, PairSet, PreferenceOracle, PreferencePair, SupervisionLedger};

/// Training procedure. Ablations and baselines share one engine and differ
/// only in which terms are active and how the buffer evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Differential critic with minor corrections and replacement.
    Dicgan,
    /// Plain WGAN on all training data.
    WganAll,
    /// Plain WGAN on the oracle-approved subset.
    WganDesiredOnly,
    /// Feedback loop: oracle-approved generations replace the oldest data.
    Fbgan,
    /// Ranking regularizer on the generator only.
    Prg1,
    /// Ranking regularizer on critic and generator.
    Prg2,
    /// Differential critic without replacement (`n_g = 0`).
    #[serde(alias = "dicgan_no_replace")]
    DicganNg0,
    /// Replacement without the ranking term (`lambda = 0`).
    #[serde(alias = "dicgan_no_rank")]
    DicganLambda0,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Dicgan,
        Method::WganAll,
        Method::WganDesiredOnly,
        Method::Fbgan,
        Method::Prg1,
        Method::Prg2,
        Method::DicganNg0,
        Method::DicganLambda0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dicgan => "dicgan",
            Method::WganAll => "wgan_all",
            Method::WganDesiredOnly => "wgan_desired_only",
            Method::Fbgan => "fbgan",
            Method::Prg1 => "prg1",
            Method::Prg2 => "prg2",
            Method::DicganNg0 => "dicgan_ng0",
            Method::DicganLambda0 => "dicgan_lambda0",
        }
    }

    pub fn needs_oracle(self) -> bool {
        !matches!(self, Method::WganAll | Method::DicganLambda0)
    }

    /// Needs per-sample desired/undesired verdicts, which a human oracle
    /// does not provide.
    pub fn needs_classification(self) -> bool {
        matches!(
            self,
            Method::WganDesiredOnly | Method::Fbgan | Method::Prg1 | Method::Prg2
        )
    }

    fn critic_lambda(self, cfg: &TrainingConfig) -> f64 {
        match self {
            Method::Dicgan | Method::Prg2 | Method::DicganNg0 => cfg.lambda,
            _ => 0.0,
        }
    }

    fn generator_lambda(self, cfg: &TrainingConfig) -> f64 {
        match self {
            Method::Prg1 | Method::Prg2 => cfg.lambda_g,
            _ => 0.0,
        }
    }

    fn replacement(self, cfg: &TrainingConfig) -> Replacement {
        match self {
            Method::Dicgan | Method::Prg1 | Method::Prg2 | Method::DicganLambda0 => {
                Replacement::Generated(cfg.n_g)
            }
            Method::Fbgan => Replacement::Selected(cfg.n_g),
            Method::WganAll | Method::WganDesiredOnly | Method::DicganNg0 => Replacement::None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Replacement {
    None,
    /// Inject this many raw generations per correction.
    Generated(usize),
    /// Generate this many, inject the oracle-approved ones.
    Selected(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretraining,
    Correcting,
    AwaitingPreferences,
    Finished,
    Aborted,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretraining => "pretraining",
            Phase::Correcting => "correcting",
            Phase::AwaitingPreferences => "awaiting_preferences",
            Phase::Finished => "finished",
            Phase::Aborted => "aborted",
        }
    }
}

/// One row per executed correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRow {
    pub index: usize,
    /// PDD of the generator after this correction.
    pub pdd: f64,
    /// PDD of the training buffer during this correction.
    pub buffer_pdd: f64,
    /// `|E_buffer[D] - E_generated[D]|` after this correction.
    pub critic_gap: f64,
    pub eps_violated: Option<bool>,
    /// PDD increment over the previous correction.
    pub delta_hat: f64,
    pub loss_d: f64,
    pub wgan_term: f64,
    pub ranking_term: f64,
    pub loss_g: f64,
    pub pairs_built: usize,
    pub effective_pairs: u64,
    pub injected: usize,
    pub queries_used: u64,
    pub budget_exhausted: bool,
    pub human_timed_out: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxCorrections,
    Plateau,
    Interrupted,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub method: Method,
    /// PDD right after pretraining.
    pub initial_pdd: f64,
    pub rows: Vec<CorrectionRow>,
    pub critic_updates: u64,
    pub generator_updates: u64,
    pub stop_reason: StopReason,
    /// First correction that ran without supervision left.
    pub budget_exhausted_at: Option<usize>,
    /// Desired/undesired generation counts per epoch of the feedback loop.
    pub selection_counts: Vec<(u64, u64)>,
    pub ledger: SupervisionLedger,
}

impl ConvergenceRecord {
    pub fn final_pdd(&self) -> f64 {
        self.rows.last().map_or(self.initial_pdd, |r| r.pdd)
    }

    pub fn pdd_trajectory(&self) -> Vec<f64> {
        std::iter::once(self.initial_pdd)
            .chain(self.rows.iter().map(|r| r.pdd))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub critic: Mlp,
    pub generator: Mlp,
    pub buffer: ReplacementBuffer,
}

impl TrainedModel {
    pub fn noise_dim(&self) -> usize {
        self.generator.input_dim()
    }

    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        generate_with(&self.generator, n, rng)
    }

    pub fn critic_scores(&self, samples: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.critic.predict(samples)?.column(0).to_vec())
    }
}

/// Outcome of a run; `abort` carries the diagnostic if training stopped on a
/// numeric failure, in which case `model` and `record` hold the last state.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: TrainedModel,
    pub record: ConvergenceRecord,
    pub abort: Option<String>,
}

/// Hooks invoked by the engine. All methods default to no-ops.
pub trait TrainingObserver {
    fn on_phase(&mut self, _phase: Phase) {}
    fn on_correction(&mut self, _row: &CorrectionRow, _buffer: &ReplacementBuffer, _generated: ArrayView2<'_, f64>) {}
    fn on_pairs(&mut self, _correction: usize, _pairs: &[PreferencePair]) {}
    /// Checked between corrections; `true` ends training gracefully.
    fn should_stop(&mut self) -> bool {
        false
    }
}

pub struct NoopObserver;

impl TrainingObserver for NoopObserver {}

pub type DesiredFn<'f> = &'f dyn Fn(ArrayView1<'_, f64>) -> bool;

fn sample_noise<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, dim), || rng.sample(StandardNormal))
}

pub fn generate_with<R: Rng + ?Sized>(generator: &Mlp, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    if n == 0 {
        return Ok(Array2::zeros((0, generator.output_dim())));
    }
    let z = sample_noise(n, generator.input_dim(), rng);
    generator.predict(z.view())
}

/// `n_g` samples `G(z)`, `z ~ N(0, I)`, reproducible from `seed`.
pub fn generate_batch(generator: &Mlp, n_g: usize, seed: u64) -> Result<Array2<f64>> {
    generate_with(generator, n_g, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn build_critic(cfg: &TrainingConfig, data_dim: usize, seed: u64) -> Result<Mlp> {
    let mut sizes = vec![data_dim];
    sizes.extend(&cfg.critic_hidden);
    sizes.push(1);
    let mut acts = vec![Activation::LeakyRelu(cfg.leaky_slope); cfg.critic_hidden.len()];
    acts.push(Activation::Identity);
    let mut critic = Mlp::new(&sizes, &acts, seed)?;
    critic.clip_weights(cfg.clip)?;
    Ok(critic)
}

pub fn build_generator(cfg: &TrainingConfig, data_dim: usize, seed: u64) -> Result<Mlp> {
    let mut sizes = vec![cfg.noise_dim];
    sizes.extend(&cfg.generator_hidden);
    sizes.push(data_dim);
    let mut acts = vec![Activation::Relu; cfg.generator_hidden.len()];
    acts.push(Activation::Identity);
    Mlp::new(&sizes, &acts, seed)
}

mod stream {
    pub const INIT_CRITIC: u64 = 1;
    pub const INIT_GENERATOR: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const PAIRS: u64 = 4;
    pub const GENERATE: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const AUX: u64 = 7;
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::TrainingAborted(format!("{what} became {value}")))
    }
}

/// Networks, optimizers and data of one run.
struct Engine<'a> {
    cfg: &'a TrainingConfig,
    critic: Mlp,
    generator: Mlp,
    critic_opt: Adam,
    generator_opt: Adam,
    buffer: ReplacementBuffer,
    train_rng: ChaCha8Rng,
    pair_rng: ChaCha8Rng,
    gen_rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    aux_rng: ChaCha8Rng,
    critic_updates: u64,
    generator_updates: u64,
}

#[derive(Debug, Default, Clone, Copy)]
struct IterationLosses {
    critic: Option<LossBreakdown>,
    generator: f64,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a TrainingConfig, data: ArrayView2<'_, f64>, labels: Option<&[bool]>) -> Result<Self> {
        let dim = data.ncols();
        let critic = build_critic(cfg, dim, rng_stream(cfg.seed, stream::INIT_CRITIC).random())?;
        let generator = build_generator(cfg, dim, rng_stream(cfg.seed, stream::INIT_GENERATOR).random())?;
        Ok(Self {
            critic_opt: Adam::new(&critic, cfg.critic_adam),
            generator_opt: Adam::new(&generator, cfg.generator_adam),
            critic,
            generator,
            buffer: ReplacementBuffer::new(data.to_owned(), labels)?,
            train_rng: rng_stream(cfg.seed, stream::TRAIN),
            pair_rng: rng_stream(cfg.seed, stream::PAIRS),
            gen_rng: rng_stream(cfg.seed, stream::GENERATE),
            eval_rng: rng_stream(cfg.seed, stream::EVAL),
            aux_rng: rng_stream(cfg.seed, stream::AUX),
            critic_updates: 0,
            generator_updates: 0,
            cfg,
        })
    }

    fn critic_step(&mut self, pairs: &[PreferencePair], lambda: f64) -> Result<LossBreakdown> {
        let b = self.cfg.batch_size;
        let n = self.buffer.len();
        let idx: Vec<usize> = (0..b).map(|_| self.train_rng.random_range(0..n)).collect();
        let real = self.buffer.gather(&idx);
        let fake = generate_with(&self.generator, b, &mut self.train_rng)?;

        let use_pairs = lambda > 0.0 && !pairs.is_empty();
        let batch = if use_pairs {
            let k = self.cfg.n_s.max(1);
            let picks: Vec<&PreferencePair> = (0..k)
                .map(|_| &pairs[self.pair_rng.random_range(0..pairs.len())])
                .collect();
            let pref: Vec<usize> = picks.iter().map(|p| p.preferred).collect();
            let other: Vec<usize> = picks.iter().map(|p| p.other).collect();
            concatenate(
                Axis(0),
                &[
                    real.view(),
                    fake.view(),
                    self.buffer.gather(&pref).view(),
                    self.buffer.gather(&other).view(),
                ],
            )
            .expect("matching widths")
        } else {
            concatenate(Axis(0), &[real.view(), fake.view()]).expect("matching widths")
        };

        let trace = self.critic.forward(batch.view())?;
        let scale = self.cfg.critic_scale;
        let scores: Vec<f64> = trace.output().column(0).iter().map(|v| v * scale).collect();
        let (real_s, rest) = scores.split_at(b);
        let (fake_s, pair_s) = rest.split_at(b);
        let pair_scores: Vec<PairScore> = if use_pairs {
            let k = pair_s.len() / 2;
            (0..k)
                .map(|j| PairScore {
                    preferred: pair_s[j],
                    other: pair_s[k + j],
                })
                .collect()
        } else {
            Vec::new()
        };
        let breakdown =
            losses::dicgan_critic_objective(real_s, fake_s, &pair_scores, lambda, self.cfg.margin)?;
        check_finite(breakdown.total, "critic objective")?;
        let g = losses::dicgan_critic_grads(real_s, fake_s, &pair_scores, lambda, self.cfg.margin)?;

        // the critic ascends L_D: descend on -L_D
        let mut out = Array2::zeros((batch.nrows(), 1));
        for (i, v) in g.real.iter().chain(&g.fake).enumerate() {
            out[[i, 0]] = -v * scale;
        }
        let k = g.pairs.len();
        for (j, p) in g.pairs.iter().enumerate() {
            out[[2 * b + j, 0]] = -p.preferred * scale;
            out[[2 * b + k + j, 0]] = -p.other * scale;
        }
        let grads = self.critic.backward(&trace, out.view())?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        self.critic.clip_weights(self.cfg.clip)?;
        self.critic_updates += 1;
        Ok(breakdown)
    }

    fn generator_step(&mut self, lambda_g: f64, undesired: &[usize]) -> Result<f64> {
        let b = self.cfg.batch_size;
        let z = sample_noise(b, self.generator.input_dim(), &mut self.train_rng);
        let g_trace = self.generator.forward(z.view())?;
        let fake = g_trace.output();

        let regularize = lambda_g > 0.0 && !undesired.is_empty();
        let batch = if regularize {
            let picks: Vec<usize> = (0..b)
                .map(|_| undesired[self.aux_rng.random_range(0..undesired.len())])
                .collect();
            concatenate(Axis(0), &[fake.view(), self.buffer.gather(&picks).view()]).expect("matching widths")
        } else {
            fake.clone()
        };
        let d_trace = self.critic.forward(batch.view())?;
        let scale = self.cfg.critic_scale;
        let scores: Vec<f64> = d_trace.output().column(0).iter().map(|v| v * scale).collect();
        let fake_s = &scores[..b];
        let (gen_pairs, index): (Vec<PairScore>, Vec<usize>) = if regularize {
            (0..b)
                .map(|i| {
                    (
                        PairScore {
                            preferred: scores[i],
                            other: scores[b + i],
                        },
                        i,
                    )
                })
                .unzip()
        } else {
            (Vec::new(), Vec::new())
        };
        let loss = losses::regularized_generator_loss(fake_s, &gen_pairs, lambda_g, self.cfg.margin)?;
        check_finite(loss, "generator loss")?;
        let score_grads = losses::generator_score_grads(fake_s, &gen_pairs, &index, lambda_g, self.cfg.margin)?;

        let mut out = Array2::zeros((batch.nrows(), 1));
        for (i, v) in score_grads.iter().enumerate() {
            out[[i, 0]] = *v * scale;
        }
        let d_grads = self.critic.backward(&d_trace, out.view())?;
        let x_grad = d_grads.input.slice(s![..b, ..]);
        let g_grads = self.generator.backward(&g_trace, x_grad)?;
        self.generator_opt.step(&mut self.generator, &g_grads)?;
        self.generator_updates += 1;
        Ok(loss)
    }

    /// `n_critic` critic steps followed by one generator step.
    fn iteration(&mut self, pairs: &[PreferencePair], lambda: f64, lambda_g: f64, undesired: &[usize]) -> Result<IterationLosses> {
        let mut last = None;
        for _ in 0..self.cfg.n_critic {
            last = Some(self.critic_step(pairs, lambda)?);
        }
        let generator = self.generator_step(lambda_g, undesired)?;
        Ok(IterationLosses {
            critic: last,
            generator,
        })
    }

    fn evaluate(&mut self, is_desired: DesiredFn<'_>) -> Result<(f64, f64, Array2<f64>)> {
        let generated = generate_with(&self.generator, self.cfg.eval_samples, &mut self.eval_rng)?;
        let pdd = crate::metrics::pdd(generated.view(), is_desired)?;
        let real_mean = self.critic.predict(self.buffer.samples())?.mean().unwrap_or(0.0);
        let fake_mean = self.critic.predict(generated.view())?.mean().unwrap_or(0.0);
        Ok((pdd, (real_mean - fake_mean).abs(), generated))
    }

    fn model(&self) -> TrainedModel {
        TrainedModel {
            critic: self.critic.clone(),
            generator: self.generator.clone(),
            buffer: self.buffer.clone(),
        }
    }
}

/// Vanilla WGAN iterations on the given data (no ranking, no replacement).
pub fn pretrain(critic: &mut Mlp, generator: &mut Mlp, data: ArrayView2<'_, f64>, cfg: &TrainingConfig) -> Result<()> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::InvalidArgument("pretraining data is empty".into()));
    }
    if data.ncols() != critic.input_dim() || generator.output_dim() != critic.input_dim() {
        return Err(Error::shape(
            format!("{} data columns", critic.input_dim()),
            data.ncols(),
        ));
    }
    if generator.input_dim() != cfg.noise_dim {
        return Err(Error::shape(format!("noise_dim {}", cfg.noise_dim), generator.input_dim()));
    }
    let mut engine = Engine::new(cfg, data, None)?;
    engine.critic = critic.clone();
    engine.generator = generator.clone();
    engine.critic_opt = Adam::new(critic, cfg.critic_adam);
    engine.generator_opt = Adam::new(generator, cfg.generator_adam);
    for _ in 0..cfg.pretrain_iters {
        engine.iteration(&[], 0.0, 0.0, &[])?;
    }
    *critic = engine.critic;
    *generator = engine.generator;
    Ok(())
}

pub fn train_dicgan(
    data: &LabeledDataset,
    oracle: &mut PreferenceOracle,
    cfg: &TrainingConfig,
    is_desired: DesiredFn<'_>,
) -> Result<TrainingRun> {
    train(Method::Dicgan, data, Some(oracle), cfg, is_desired, &mut NoopObserver)
}

pub fn train_baseline(
    method: Method,
    data: &LabeledDataset,
    oracle: Option<&mut PreferenceOracle>,
    cfg: &TrainingConfig,
    is_desired: DesiredFn<'_>,
) -> Result<TrainingRun> {
    train(method, data, oracle, cfg, is_desired, &mut NoopObserver)
}

/// Runs `method` end to end: pretraining followed by up to
/// `max_corrections` corrections of `n_i` iterations each.
pub fn train(
    method: Method,
    data: &LabeledDataset,
    mut oracle: Option<&mut PreferenceOracle>,
    cfg: &TrainingConfig,
    is_desired: DesiredFn<'_>,
    observer: &mut dyn TrainingObserver,
) -> Result<TrainingRun> {
    cfg.validate()?;
    if method.needs_oracle() && oracle.is_none() {
        return Err(Error::config("oracle", format!("method {method} requires an oracle")));
    }
    if method.needs_classification() && oracle.as_ref().is_some_and(|o| o.is_human()) {
        return Err(Error::config(
            "oracle.kind",
            format!("method {method} needs per-sample verdicts; a human oracle only compares pairs"),
        ));
    }
    let replacement = method.replacement(cfg);
    if let Replacement::Generated(k) | Replacement::Selected(k) = replacement {
        if k > data.len() {
            return Err(Error::BufferOverflow {
                requested: k,
                capacity: data.len(),
            });
        }
    }

    // training pool
    let (pool, pool_labels) = if method == Method::WganDesiredOnly {
        let o = oracle.as_deref_mut().expect("checked above");
        let mut keep = Vec::new();
        for (i, row) in data.samples.rows().into_iter().enumerate() {
            if o.classify(row)? {
                keep.push(i);
            }
        }
        if keep.is_empty() {
            return Err(Error::InvalidArgument(
                "no desired samples to train on".into(),
            ));
        }
        let labels: Vec<bool> = keep.iter().map(|&i| data.labels[i]).collect();
        (data.samples.select(Axis(0), &keep), labels)
    } else {
        (data.samples.clone(), data.labels.clone())
    };

    let mut engine = Engine::new(cfg, pool.view(), Some(&pool_labels))?;
    let critic_lambda = method.critic_lambda(cfg);
    let generator_lambda = method.generator_lambda(cfg);

    // regularized-generator variants compare generations against real
    // undesired samples, which requires labeling the training data
    let mut undesired: Vec<usize> = Vec::new();
    if generator_lambda > 0.0 {
        let o = oracle.as_deref_mut().expect("checked above");
        for slot in 0..engine.buffer.len() {
            match o.classify(engine.buffer.row(slot)) {
                Ok(false) => undesired.push(slot),
                Ok(true) => {}
                Err(Error::BudgetExhausted { .. }) => break,
                Err(e) => return Err(e),
            }
        }
    }

    let mut record = ConvergenceRecord {
        method,
        initial_pdd: f64::NAN,
        rows: Vec::new(),
        critic_updates: 0,
        generator_updates: 0,
        stop_reason: StopReason::MaxCorrections,
        budget_exhausted_at: None,
        selection_counts: Vec::new(),
        ledger: SupervisionLedger::default(),
    };

    let outcome = run_phases(
        &mut engine,
        method,
        replacement,
        critic_lambda,
        generator_lambda,
        &mut undesired,
        &mut oracle,
        cfg,
        is_desired,
        observer,
        &mut record,
    );
    record.critic_updates = engine.critic_updates;
    record.generator_updates = engine.generator_updates;
    let abort = match outcome {
        Ok(()) => {
            observer.on_phase(Phase::Finished);
            None
        }
        Err(e @ (Error::TrainingAborted(_) | Error::NonFinite(_))) => {
            record.stop_reason = StopReason::Aborted;
            observer.on_phase(Phase::Aborted);
            Some(e.to_string())
        }
        Err(e) => return Err(e),
    };
    Ok(TrainingRun {
        model: engine.model(),
        record,
        abort,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_phases(
    engine: &mut Engine<'_>,
    method: Method,
    replacement: Replacement,
    critic_lambda: f64,
    generator_lambda: f64,
    undesired: &mut Vec<usize>,
    oracle: &mut Option<&mut PreferenceOracle>,
    cfg: &TrainingConfig,
    is_desired: DesiredFn<'_>,
    observer: &mut dyn TrainingObserver,
    record: &mut ConvergenceRecord,
) -> Result<()> {
    observer.on_phase(Phase::Pretraining);
    for _ in 0..cfg.pretrain_iters {
        engine.iteration(&[], 0.0, 0.0, &[])?;
    }
    let (initial_pdd, _, _) = engine.evaluate(is_desired)?;
    record.initial_pdd = initial_pdd;
    info!("{method}: pretraining done, PDD {initial_pdd:.1}");

    let mut previous_pdd = initial_pdd;
    for e in 0..cfg.max_corrections {
        if observer.should_stop() {
            record.stop_reason = StopReason::Interrupted;
            return Ok(());
        }
        observer.on_phase(Phase::Correcting);

        // shift the training distribution
        let mut injected = 0;
        let mut selection = None;
        match replacement {
            Replacement::None => {}
            Replacement::Generated(k) => {
                let generated = generate_with(&engine.generator, k, &mut engine.gen_rng)?;
                engine.buffer.replace_oldest(generated.view())?;
                injected = k;
            }
            Replacement::Selected(k) => {
                let o = oracle.as_deref_mut().expect("feedback loop has an oracle");
                let generated = generate_with(&engine.generator, k, &mut engine.gen_rng)?;
                let mut keep = Vec::new();
                let mut rejected = 0u64;
                for (i, row) in generated.rows().into_iter().enumerate() {
                    match o.classify(row) {
                        Ok(true) => keep.push(i),
                        Ok(false) => rejected += 1,
                        Err(Error::BudgetExhausted { .. }) => break,
                        Err(err) => return Err(err),
                    }
                }
                if !keep.is_empty() || rejected > 0 {
                    selection = Some((keep.len() as u64, rejected));
                }
                let chosen = generated.select(Axis(0), &keep);
                engine.buffer.replace_oldest(chosen.view())?;
                injected = keep.len();
            }
        }
        let buffer_pdd = crate::metrics::pdd(engine.buffer.samples(), is_desired)?;

        // preferences on the current buffer
        let mut set = PairSet::default();
        let mut exhausted = false;
        if critic_lambda > 0.0 && cfg.n_s > 0 {
            let o = oracle.as_deref_mut().expect("differential critic has an oracle");
            if o.exhausted() {
                exhausted = true;
            } else {
                if o.is_human() {
                    observer.on_phase(Phase::AwaitingPreferences);
                }
                set = build_pairs(engine.buffer.samples(), o, cfg.n_s, &mut engine.pair_rng)?;
                exhausted = set.budget_exhausted && set.pairs.is_empty();
                observer.on_phase(Phase::Correcting);
            }
            observer.on_pairs(e, &set.pairs);
        }
        if let Replacement::Selected(_) = replacement {
            exhausted = oracle.as_deref().is_some_and(|o| o.exhausted()) && selection.is_none();
        }
        if exhausted && record.budget_exhausted_at.is_none() {
            record.budget_exhausted_at = Some(e);
        }
        let effective_pairs = match replacement {
            Replacement::Selected(_) => {
                let (gd, gu) = selection.unwrap_or((0, 0));
                record.selection_counts.push((gd, gu));
                gd * gu
            }
            _ if !set.pairs.is_empty() => crate::preferences::ep_dicgan(1, cfg.n_i as u64, cfg.n_s as u64),
            _ => 0,
        };
        record.ledger.record(effective_pairs);

        let mut sums = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..cfg.n_i {
            let l = engine.iteration(&set.pairs, critic_lambda, generator_lambda, undesired)?;
            let c = l.critic.expect("n_critic >= 1");
            sums.0 += c.total;
            sums.1 += c.wgan_term;
            sums.2 += c.ranking_term;
            sums.3 += l.generator;
        }
        let ni = cfg.n_i as f64;

        let (pdd, gap, generated) = engine.evaluate(is_desired)?;
        let row = CorrectionRow {
            index: e,
            pdd,
            buffer_pdd,
            critic_gap: gap,
            eps_violated: cfg.eps_monitor.map(|eps| gap > eps),
            delta_hat: pdd - previous_pdd,
            loss_d: sums.0 / ni,
            wgan_term: sums.1 / ni,
            ranking_term: sums.2 / ni,
            loss_g: sums.3 / ni,
            pairs_built: set.pairs.len(),
            effective_pairs,
            injected,
            queries_used: oracle.as_deref().map_or(0, |o| o.queries_used()),
            budget_exhausted: exhausted,
            human_timed_out: set.timed_out,
        };
        debug!(
            "{method} correction {e}: PDD {pdd:.1} (buffer {buffer_pdd:.1}), pairs {}, L_D {:.4}",
            row.pairs_built, row.loss_d
        );
        previous_pdd = pdd;
        observer.on_correction(&row, &engine.buffer, generated.view());
        record.rows.push(row);

        let w = cfg.plateau_window;
        if w > 0
            && record.rows.len() >= w
            && record.rows[record.rows.len() - w..]
                .iter()
                .all(|r| r.delta_hat.abs() < cfg.plateau_tolerance)
        {
            record.stop_reason = StopReason::Plateau;
            return Ok(());
        }
    }
    Ok(())
}

pub fn human_timeout(cfg: &TrainingConfig) -> Duration {
    Duration::from_secs_f64(cfg.human_timeout_secs)
}
