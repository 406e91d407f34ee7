use std::sync::Arc;

use ndarray::ArrayView1;

use dicgan_core::corrections::{
    build_critic, build_generator, generate_batch, pretrain, train, CorrectionRow, Method, NoopObserver,
    ReplacementBuffer, StopReason, TrainingConfig, TrainingObserver,
};
use dicgan_core::datasets::{two_circles, LabeledDataset, TwoCircles};
use dicgan_core::metrics::radius_midpoint_classifier;
use dicgan_core::preferences::PreferenceOracle;
use dicgan_core::Error;

fn data(n: usize, seed: u64) -> LabeledDataset {
    two_circles(&TwoCircles {
        n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn small(seed: u64) -> TrainingConfig {
    TrainingConfig {
        seed,
        pretrain_iters: 100,
        max_corrections: 3,
        n_i: 10,
        n_g: 50,
        ..Default::default()
    }
}

fn inner(x: ArrayView1<'_, f64>) -> bool {
    x.dot(&x).sqrt() < 1.5
}

fn labels_oracle() -> PreferenceOracle {
    PreferenceOracle::labels(Arc::new(inner))
}

fn mean_radius(x: &ndarray::Array2<f64>) -> f64 {
    x.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / x.nrows() as f64
}

#[test]
fn zero_pretraining_leaves_networks_untouched() {
    let cfg = TrainingConfig {
        pretrain_iters: 0,
        ..Default::default()
    };
    let ds = data(200, 1);
    let mut critic = build_critic(&cfg, 2, 1).unwrap();
    let mut generator = build_generator(&cfg, 2, 2).unwrap();
    let (c0, g0) = (critic.clone(), generator.clone());
    pretrain(&mut critic, &mut generator, ds.samples.view(), &cfg).unwrap();
    assert_eq!(critic, c0);
    assert_eq!(generator, g0);
}

#[test]
fn pretraining_spreads_samples_between_the_rings() {
    let cfg = TrainingConfig::default();
    let ds = data(1000, 0);
    let mut critic = build_critic(&cfg, 2, 1).unwrap();
    let mut generator = build_generator(&cfg, 2, 2).unwrap();
    let before = mean_radius(&generate_batch(&generator, 2000, 9).unwrap());
    pretrain(&mut critic, &mut generator, ds.samples.view(), &cfg).unwrap();
    let after = mean_radius(&generate_batch(&generator, 2000, 9).unwrap());
    assert!((1.0..2.0).contains(&after), "mean radius {after} (was {before})");
    assert!(critic.max_abs_parameter() <= cfg.clip);
}

#[test]
fn pretrain_rejects_mismatched_shapes() {
    let cfg = TrainingConfig::default();
    let mut critic = build_critic(&cfg, 3, 1).unwrap();
    let mut generator = build_generator(&cfg, 2, 2).unwrap();
    let ds = data(20, 0);
    assert!(matches!(
        pretrain(&mut critic, &mut generator, ds.samples.view(), &cfg),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn generate_batch_is_seeded() {
    let cfg = TrainingConfig::default();
    let g = build_generator(&cfg, 2, 5).unwrap();
    let a = generate_batch(&g, 64, 3).unwrap();
    assert_eq!(a.dim(), (64, 2));
    assert_eq!(a, generate_batch(&g, 64, 3).unwrap());
    assert_ne!(a, generate_batch(&g, 64, 4).unwrap());
    assert_eq!(generate_batch(&g, 0, 3).unwrap().dim(), (0, 2));
}

#[test]
fn every_method_keeps_clip_cadence_and_buffer_size() {
    let ds = data(300, 4);
    let cfg = small(4);
    for method in Method::ALL {
        let mut oracle = labels_oracle();
        let run = train(method, &ds, Some(&mut oracle), &cfg, &inner, &mut NoopObserver).unwrap();
        let r = &run.record;
        assert!(run.abort.is_none(), "{method}: {:?}", run.abort);
        assert!(run.model.critic.max_abs_parameter() <= cfg.clip, "{method}");
        assert_eq!(r.critic_updates, cfg.n_critic as u64 * r.generator_updates, "{method}");
        let expected = (cfg.pretrain_iters + r.rows.len() * cfg.n_i) as u64;
        assert_eq!(r.generator_updates, expected, "{method}");
        let pool = if method == Method::WganDesiredOnly {
            ds.desired_count()
        } else {
            ds.len()
        };
        assert_eq!(run.model.buffer.len(), pool, "{method}");
        assert_eq!(r.rows.len(), cfg.max_corrections, "{method}");
    }
}

#[test]
fn feedback_loop_without_approvals_keeps_the_data() {
    let ds = data(200, 6);
    let mut oracle = PreferenceOracle::labels(Arc::new(|_| false));
    let run = train(Method::Fbgan, &ds, Some(&mut oracle), &small(6), &inner, &mut NoopObserver).unwrap();
    assert_eq!(run.model.buffer.samples(), ds.samples.view());
    assert!(run.record.rows.iter().all(|r| r.injected == 0));
    assert!(run.record.selection_counts.iter().all(|&(d, _)| d == 0));
}

#[test]
fn replacement_cannot_exceed_the_data() {
    let ds = data(40, 0);
    let cfg = TrainingConfig {
        n_g: 41,
        ..small(0)
    };
    let mut oracle = labels_oracle();
    let err = train(Method::Dicgan, &ds, Some(&mut oracle), &cfg, &inner, &mut NoopObserver).unwrap_err();
    assert!(matches!(
        err,
        Error::BufferOverflow {
            requested: 41,
            capacity: 40
        }
    ));
}

#[test]
fn desired_only_needs_desired_data() {
    let ds = data(100, 0);
    let mut oracle = PreferenceOracle::labels(Arc::new(|_| false));
    let err = train(Method::WganDesiredOnly, &ds, Some(&mut oracle), &small(0), &inner, &mut NoopObserver);
    assert!(matches!(err, Err(Error::InvalidArgument(_))));
}

#[test]
fn oracle_methods_require_an_oracle() {
    let ds = data(100, 0);
    for method in [Method::Dicgan, Method::Fbgan, Method::Prg1, Method::WganDesiredOnly] {
        let err = train(method, &ds, None, &small(0), &inner, &mut NoopObserver).unwrap_err();
        assert!(err.to_string().contains("oracle"), "{method}: {err}");
    }
}

#[test]
fn budget_caps_queries_and_marks_exhaustion() {
    let ds = data(300, 2);
    let cfg = TrainingConfig {
        max_corrections: 4,
        ..small(2)
    };
    let mut oracle = labels_oracle().with_budget(Some(4));
    let run = train(Method::Dicgan, &ds, Some(&mut oracle), &cfg, &inner, &mut NoopObserver).unwrap();
    assert_eq!(oracle.queries_used(), 4);
    let at = run.record.budget_exhausted_at.expect("budget runs out");
    for row in &run.record.rows {
        assert!(row.queries_used <= 4);
        if row.index >= at {
            assert!(row.budget_exhausted);
            assert_eq!(row.pairs_built, 0);
            assert_eq!(row.effective_pairs, 0);
        }
    }
}

struct StopAfter {
    rows: Vec<CorrectionRow>,
    sizes: Vec<usize>,
    limit: usize,
}

impl TrainingObserver for StopAfter {
    fn on_correction(&mut self, row: &CorrectionRow, buffer: &ReplacementBuffer, generated: ndarray::ArrayView2<'_, f64>) {
        self.rows.push(row.clone());
        self.sizes.push(buffer.len());
        assert!(generated.nrows() > 0);
    }

    fn should_stop(&mut self) -> bool {
        self.rows.len() >= self.limit
    }
}

#[test]
fn observer_sees_every_correction_and_can_stop() {
    let ds = data(200, 3);
    let cfg = TrainingConfig {
        max_corrections: 10,
        ..small(3)
    };
    let mut obs = StopAfter {
        rows: Vec::new(),
        sizes: Vec::new(),
        limit: 2,
    };
    let mut oracle = labels_oracle();
    let run = train(Method::Dicgan, &ds, Some(&mut oracle), &cfg, &inner, &mut obs).unwrap();
    assert_eq!(run.record.stop_reason, StopReason::Interrupted);
    assert_eq!(run.record.rows, obs.rows);
    assert_eq!(obs.rows.len(), 2);
    assert!(obs.sizes.iter().all(|&s| s == ds.len()));
}

#[test]
fn classifier_marks_the_inner_ring() {
    let c = radius_midpoint_classifier(1.0, 2.0).unwrap();
    let ds = data(500, 8);
    for (row, &label) in ds.samples.rows().into_iter().zip(&ds.labels) {
        assert_eq!(c.is_desired(row), label);
    }
}
