//! Wasserstein training with a gradient penalty: a generator learns to
//! raise the critic's score on its samples while the critic learns to
//! separate real from generated ones.

mod text;
pub mod toy;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::{AdamConfig, Bound, OptimizerState, ParamStore, Tape, Tensor, Var};

pub use text::real_one_hot;

/// Scores input-space samples; higher means "more real".
pub trait Critic {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn input_width(&self) -> usize;
    /// `[B x 1]` raw scores, one per sample.
    fn score<'t>(&self, tape: &'t Tape, p: &Bound<'t>, xs: &[Var<'t>]) -> Result<Var<'t>>;
}

/// Produces differentiable samples shaped like given real ones.
pub trait Generator {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn output_width(&self) -> usize;
    /// One sample per entry of `real`, with the same shape. `tau` is the
    /// relaxation temperature for discrete outputs.
    fn fake<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        real: &[&Tensor],
        tau: f64,
        rng: &mut Rng,
    ) -> Result<Vec<Var<'t>>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub epochs: usize,
    /// Critic passes over the current real and fake batch per epoch.
    pub critic_passes: usize,
    pub lambda_gp: f64,
    pub generator_optimizer: AdamConfig,
    pub critic_optimizer: AdamConfig,
    pub batch: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            epochs: 500,
            critic_passes: 5,
            lambda_gp: 10.0,
            generator_optimizer: AdamConfig::adam(1e-4),
            critic_optimizer: AdamConfig::adam(1e-4),
            batch: 32,
            tau: 1.0,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_gp >= 0.0) {
            return Err(Error::Config(format!("lambda_gp must be >= 0, got {}", self.lambda_gp)));
        }
        if self.batch == 0 {
            return Err(Error::Config("GAN batch must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("Gumbel temperature must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanRecord {
    pub epoch: usize,
    /// Mean critic score on real minus fake samples.
    pub wasserstein: f64,
    /// `lambda_gp` times the penalty.
    pub gp_term: f64,
    pub g_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GanTrace {
    pub records: Vec<GanRecord>,
}

impl GanTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\twasserstein_estimate\tgp_term\tg_loss\n");
        for r in &self.records {
            writeln!(s, "{}\t{}\t{}\t{}", r.epoch, r.wasserstein, r.gp_term, r.g_loss).expect("string write");
        }
        s
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Mean over samples of `(‖∇ critic(x̂)‖ - 1)²` at `x̂ = ε real + (1 - ε) fake`,
/// one `ε ~ U(0, 1)` per sample. The result stays differentiable in the
/// critic's parameters.
pub fn gradient_penalty<'t, C: Critic + ?Sized>(
    critic: &C,
    tape: &'t Tape,
    p: &Bound<'t>,
    real: &[&Tensor],
    fake: &[&Tensor],
    rng: &mut Rng,
) -> Result<Var<'t>> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::Shape(format!("{} real but {} fake samples", real.len(), fake.len())));
    }
    let mut points = Vec::with_capacity(real.len());
    for (r, f) in real.iter().zip(fake) {
        if r.shape() != f.shape() {
            return Err(Error::Shape(format!("real {:?} vs fake {:?}", r.shape(), f.shape())));
        }
        let eps: f64 = rng.random();
        let mixed = r
            .data()
            .iter()
            .zip(f.data())
            .map(|(a, b)| eps * a + (1.0 - eps) * b)
            .collect();
        points.push(tape.var(Tensor::new(r.shape().to_vec(), mixed)));
    }
    let scores = critic.score(tape, p, &points)?;
    let grads = tape.grad(scores.sum(), &points, true);
    let mut total: Option<Var<'t>> = None;
    for g in grads {
        // the tiny offset keeps the square root differentiable at zero
        let term = g.square().sum().affine(1.0, 1e-30).sqrt().affine(1.0, -1.0).square();
        total = Some(match total {
            Some(t) => t.add(term),
            None => term,
        });
    }
    Ok(total.expect("at least one sample").scale(1.0 / real.len() as f64))
}

/// Penalty value for fixed batches.
pub fn gradient_penalty_value<C: Critic + ?Sized>(critic: &C, real: &[Tensor], fake: &[Tensor], seed: u64) -> Result<f64> {
    let tape = Tape::new();
    let p = critic.store().bind_constants(&tape);
    let r: Vec<&Tensor> = real.iter().collect();
    let f: Vec<&Tensor> = fake.iter().collect();
    Ok(gradient_penalty(critic, &tape, &p, &r, &f, &mut crate::rng::rng_from(seed))?.item())
}

fn check_modality<G: Generator + ?Sized, C: Critic + ?Sized>(gen: &G, critic: &C, real: &[Tensor]) -> Result<()> {
    if gen.output_width() != critic.input_width() {
        return Err(Error::InvalidArgument(format!(
            "generator emits rows of width {} but the critic reads width {}",
            gen.output_width(),
            critic.input_width()
        )));
    }
    if let Some(r) = real.iter().find(|r| r.cols() != critic.input_width()) {
        return Err(Error::Shape(format!(
            "real sample of width {} for a critic reading width {}",
            r.cols(),
            critic.input_width()
        )));
    }
    Ok(())
}

/// One generator update minimising `-E[critic(fake)]` with the critic held
/// fixed. Returns the loss and the generator's gradient norm.
pub fn generator_step<G: Generator + ?Sized, C: Critic + ?Sized>(
    gen: &mut G,
    critic: &C,
    opt: &mut OptimizerState,
    real: &[&Tensor],
    tau: f64,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let tape = Tape::new();
    let pg = gen.store().bind(&tape);
    let pc = critic.store().bind_constants(&tape);
    let fakes = gen.fake(&tape, &pg, real, tau, rng)?;
    let loss = critic.score(&tape, &pc, &fakes)?.mean().scale(-1.0);
    let value = loss.item();
    let grads = tape.backward(loss)?;
    let store = gen.store_mut();
    store.accumulate(&pg, &grads);
    let norm = store.grad_norm();
    opt.step(store);
    store.zero_grad();
    Ok((value, norm))
}

/// One critic update on fixed batches. Returns the Wasserstein estimate
/// and the weighted penalty, both measured before the update.
pub fn critic_step<C: Critic + ?Sized>(
    critic: &mut C,
    opt: &mut OptimizerState,
    real: &[&Tensor],
    fake: &[&Tensor],
    lambda_gp: f64,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let tape = Tape::new();
    let p = critic.store().bind(&tape);
    let rv: Vec<Var> = real.iter().map(|t| tape.constant((*t).clone())).collect();
    let fv: Vec<Var> = fake.iter().map(|t| tape.constant((*t).clone())).collect();
    let d_real = critic.score(&tape, &p, &rv)?.mean();
    let d_fake = critic.score(&tape, &p, &fv)?.mean();
    let gp = gradient_penalty(&*critic, &tape, &p, real, fake, rng)?.scale(lambda_gp);
    let w = d_real.item() - d_fake.item();
    let gp_term = gp.item();
    let loss = d_fake.sub(d_real).add(gp);
    let grads = tape.backward(loss)?;
    let store = critic.store_mut();
    store.accumulate(&p, &grads);
    opt.step(store);
    store.zero_grad();
    Ok((w, gp_term))
}

/// Alternates one generator step and `critic_passes` critic steps per
/// epoch on a batch drawn with replacement from `real`. Fake samples for
/// the critic are drawn afresh after the generator step.
pub fn gan_train<G: Generator + ?Sized, C: Critic + ?Sized>(
    gen: &mut G,
    critic: &mut C,
    real: &[Tensor],
    cfg: &GanConfig,
) -> Result<GanTrace> {
    cfg.validate()?;
    if real.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    check_modality(gen, critic, real)?;
    let mut g_opt = OptimizerState::new(gen.store(), cfg.generator_optimizer);
    let mut c_opt = OptimizerState::new(critic.store(), cfg.critic_optimizer);
    let mut rng = stream(cfg.seed, &["gan"]);
    let mut trace = GanTrace::default();
    for epoch in 1..=cfg.epochs {
        let batch: Vec<&Tensor> = (0..cfg.batch).map(|_| &real[rng.random_range(0..real.len())]).collect();
        let (g_loss, _) = generator_step(gen, critic, &mut g_opt, &batch, cfg.tau, &mut rng)?;
        let fakes: Vec<Tensor> = {
            let tape = Tape::new();
            let p = gen.store().bind_constants(&tape);
            gen.fake(&tape, &p, &batch, cfg.tau, &mut rng)?
                .iter()
                .map(|v| (*v.value()).clone())
                .collect()
        };
        let fake_refs: Vec<&Tensor> = fakes.iter().collect();
        let (mut w, mut gp_term) = (f64::NAN, f64::NAN);
        for _ in 0..cfg.critic_passes {
            (w, gp_term) = critic_step(critic, &mut c_opt, &batch, &fake_refs, cfg.lambda_gp, &mut rng)?;
        }
        if cfg.critic_passes == 0 {
            let tape = Tape::new();
            let p = critic.store().bind_constants(&tape);
            let rv: Vec<Var> = batch.iter().map(|t| tape.constant((*t).clone())).collect();
            let fv: Vec<Var> = fakes.iter().map(|t| tape.constant(t.clone())).collect();
            w = critic.score(&tape, &p, &rv)?.mean().item() - critic.score(&tape, &p, &fv)?.mean().item();
            gp_term = 0.0;
        }
        let record = GanRecord {
            epoch,
            wasserstein: w,
            gp_term,
            g_loss,
        };
        if !(w.is_finite() && gp_term.is_finite() && g_loss.is_finite()) {
            return Err(Error::NonFinite(format!("GAN values at epoch {epoch}: {record:?}")));
        }
        trace.records.push(record);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::toy::{toy_real_samples, ToyCritic, ToyGenerator};
    use super::*;
    use crate::rng::rng_from;
    use crate::tensor::ParamId;
    use proptest::prelude::*;

    /// `score(x) = w · x` for single-row samples.
    struct LinearCritic {
        store: ParamStore,
        w: ParamId,
    }

    impl LinearCritic {
        fn new(w: Vec<f64>) -> Self {
            let mut store = ParamStore::new();
            let n = w.len();
            let w = store.add("w", Tensor::matrix(n, 1, w));
            LinearCritic { store, w }
        }
    }

    impl Critic for LinearCritic {
        fn store(&self) -> &ParamStore {
            &self.store
        }
        fn store_mut(&mut self) -> &mut ParamStore {
            &mut self.store
        }
        fn input_width(&self) -> usize {
            self.store.value(self.w).rows()
        }
        fn score<'t>(&self, tape: &'t Tape, p: &Bound<'t>, xs: &[Var<'t>]) -> Result<Var<'t>> {
            Ok(tape.concat_rows(xs).matmul(p.get(self.w)))
        }
    }

    fn batch(n: usize, d: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = rng_from(seed);
        (0..n)
            .map(|_| Tensor::row((0..d).map(|_| rng.random_range(-3.0..3.0)).collect()))
            .collect()
    }

    #[test]
    fn penalty_closed_forms() {
        let (r, f) = (batch(6, 3, 1), batch(6, 3, 2));
        let unit = LinearCritic::new(vec![0.6, 0.0, -0.8]);
        assert!(gradient_penalty_value(&unit, &r, &f, 0).unwrap().abs() < 1e-9);
        let constant = LinearCritic::new(vec![0.0, 0.0, 0.0]);
        assert!((gradient_penalty_value(&constant, &r, &f, 0).unwrap() - 1.0).abs() < 1e-9);
        let three = LinearCritic::new(vec![3.0, 0.0, 0.0]);
        assert!((gradient_penalty_value(&three, &r, &f, 0).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn penalty_rejects_mismatched_batches() {
        let c = LinearCritic::new(vec![1.0, 0.0]);
        assert!(gradient_penalty_value(&c, &batch(2, 2, 1), &batch(3, 2, 1), 0).is_err());
        let wide = vec![Tensor::row(vec![0.0; 3])];
        assert!(gradient_penalty_value(&c, &batch(1, 2, 1), &wide, 0).is_err());
    }

    #[test]
    fn zero_epochs_change_nothing() {
        let mut g = ToyGenerator::new(1);
        let mut c = ToyCritic::new(8, 2);
        let (gh, ch) = (g.store.fingerprint(), c.store.fingerprint());
        let cfg = GanConfig {
            epochs: 0,
            ..GanConfig::default()
        };
        let trace = gan_train(&mut g, &mut c, &toy_real_samples(16, 0), &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!((g.store.fingerprint(), c.store.fingerprint()), (gh, ch));
    }

    #[test]
    fn steps_touch_only_their_own_parameters() {
        let mut g = ToyGenerator::new(1);
        let mut c = ToyCritic::new(8, 2);
        let real = toy_real_samples(4, 0);
        let refs: Vec<&Tensor> = real.iter().collect();
        let mut rng = rng_from(0);
        let mut g_opt = OptimizerState::new(&g.store, AdamConfig::adam(0.01));
        let mut c_opt = OptimizerState::new(&c.store, AdamConfig::adam(0.01));
        let (gh, ch) = (g.store.fingerprint(), c.store.fingerprint());
        generator_step(&mut g, &c, &mut g_opt, &refs, 1.0, &mut rng).unwrap();
        assert_ne!(g.store.fingerprint(), gh);
        assert_eq!(c.store.fingerprint(), ch);
        let gh = g.store.fingerprint();
        let fake = batch(4, 2, 9);
        let fake_refs: Vec<&Tensor> = fake.iter().collect();
        critic_step(&mut c, &mut c_opt, &refs, &fake_refs, 10.0, &mut rng).unwrap();
        assert_ne!(c.store.fingerprint(), ch);
        assert_eq!(g.store.fingerprint(), gh);
    }

    #[test]
    fn trace_has_one_finite_record_per_epoch_and_is_seeded() {
        let real = toy_real_samples(32, 3);
        let cfg = GanConfig {
            epochs: 7,
            batch: 8,
            seed: 4,
            ..GanConfig::default()
        };
        let run = || {
            let mut g = ToyGenerator::new(5);
            let mut c = ToyCritic::new(8, 6);
            gan_train(&mut g, &mut c, &real, &cfg).unwrap()
        };
        let trace = run();
        assert_eq!(trace.len(), 7);
        assert!(trace.records.iter().all(|r| r.wasserstein.is_finite() && r.gp_term >= 0.0));
        assert_eq!(trace, run());
        let tsv = trace.to_tsv();
        assert!(tsv.starts_with("epoch\twasserstein_estimate\tgp_term\tg_loss\n"));
        assert_eq!(tsv.lines().count(), 8);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let mut g = ToyGenerator::new(1);
        let mut c = LinearCritic::new(vec![1.0, 0.0, 0.0]);
        let r = gan_train(&mut g, &mut c, &toy_real_samples(4, 0), &GanConfig::default());
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn penalty_is_non_negative(w in prop::collection::vec(-4.0f64..4.0, 3), seed in 0u64..1000) {
            let c = LinearCritic::new(w);
            let v = gradient_penalty_value(&c, &batch(4, 3, seed), &batch(4, 3, seed + 1), seed).unwrap();
            prop_assert!(v >= 0.0);
        }
    }
}
