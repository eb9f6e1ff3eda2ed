use super::{Critic, Generator};
use crate::classifiers::CnnNet;
use crate::error::{Error, Result};
use crate::generators::{Encoding, GeneratorModel, PROMPT_LEN};
use crate::rng::Rng;
use crate::tensor::gumbel::gumbel_softmax;
use crate::tensor::{Bound, ParamStore, Tape, Tensor, Var};

/// One-hot rows of a token sequence, the real-sample form for a one-hot GAN.
pub fn real_one_hot(ids: &[usize], vocab_size: usize) -> Tensor {
    Tensor::one_hot(ids, vocab_size)
}

impl Critic for CnnNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn input_width(&self) -> usize {
        CnnNet::input_width(self)
    }

    fn score<'t>(&self, tape: &'t Tape, p: &Bound<'t>, xs: &[Var<'t>]) -> Result<Var<'t>> {
        if self.config.bf_dim.is_some() {
            return Err(Error::InvalidArgument("a critic cannot use base features".into()));
        }
        let embedded: Vec<Var<'t>> = xs.iter().map(|x| self.embed_var(p, *x)).collect::<Result<_>>()?;
        // dropout is off, so the rng is never drawn from
        let mut unused = crate::rng::rng_from(0);
        let h = self.hidden(tape, p, &embedded, None, false, &mut unused)?;
        Ok(self.head(p, h))
    }
}

impl Generator for GeneratorModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn output_width(&self) -> usize {
        self.config.input_width()
    }

    /// Prompts with the first tokens of each real sample and rolls out to
    /// its length. One-hot outputs pass through a hard Gumbel-Softmax whose
    /// straight-through gradient reaches the generator; embedding outputs
    /// are fed back directly.
    fn fake<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        real: &[&Tensor],
        tau: f64,
        rng: &mut Rng,
    ) -> Result<Vec<Var<'t>>> {
        let width = self.config.input_width();
        if let Some(r) = real.iter().find(|r| r.cols() != width) {
            return Err(Error::Shape(format!("real rows of width {} for a generator of width {width}", r.cols())));
        }
        let Some(max_len) = real.iter().map(|r| r.rows()).max() else {
            return Ok(Vec::new());
        };
        let prompt = real.iter().map(|r| r.rows()).min().unwrap_or(0).min(PROMPT_LEN);
        if prompt == 0 {
            return Err(Error::InvalidArgument("real samples must have at least one row".into()));
        }
        let b = real.len();
        let mut stepper = self.stepper(tape, p, b);
        let mut emitted: Vec<Var<'t>> = Vec::with_capacity(max_len);
        for t in 0..max_len - 1 {
            let x = if t < prompt {
                let mut rows = Vec::with_capacity(b * width);
                for r in real {
                    rows.extend_from_slice(r.row_slice(t));
                }
                tape.constant(Tensor::matrix(b, width, rows))
            } else {
                emitted[t - prompt]
            };
            let out = stepper.push(x)?;
            if t + 1 >= prompt {
                let next = match self.config.encoding {
                    Encoding::OneHot => gumbel_softmax(out, tau, true, rng)?,
                    Encoding::Emb => out,
                };
                emitted.push(next);
            }
        }
        Ok(real
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let head = tape.constant(Tensor::matrix(prompt, width, r.data()[..prompt * width].to_vec()));
                let mut parts = vec![head];
                parts.extend(emitted[..r.rows() - prompt].iter().map(|e| e.row(i)));
                tape.concat_rows(&parts)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{CnnConfig, InputKind};
    use crate::gan::{gan_train, generator_step, GanConfig};
    use crate::generators::{Arch, GeneratorConfig};
    use crate::rng::rng_from;
    use crate::tensor::{AdamConfig, OptimizerState};

    const V: usize = 7;

    fn small_gen(arch: Arch, enc: Encoding) -> GeneratorModel {
        let cfg = GeneratorConfig {
            emb_dim: 5,
            projection: 6,
            hidden: 8,
            heads: 2,
            ..GeneratorConfig::new(arch, enc, V)
        };
        GeneratorModel::new(cfg, 0, 2).unwrap()
    }

    fn small_critic(input: InputKind) -> CnnNet {
        let cfg = CnnConfig {
            projection: 6,
            kernels: vec![3],
            widths: (6, 4),
            dropout: 0.0,
            trunk: 5,
            ..CnnConfig::new(input)
        };
        CnnNet::new(cfg, 3).unwrap()
    }

    fn reals(n: usize) -> Vec<Tensor> {
        (0..n)
            .map(|i| real_one_hot(&(0..12).map(|t| (t * 3 + i) % V).collect::<Vec<_>>(), V))
            .collect()
    }

    #[test]
    fn fakes_keep_prompt_and_shape_and_are_one_hot() {
        let g = small_gen(Arch::Gru, Encoding::OneHot);
        let real = reals(3);
        let refs: Vec<&Tensor> = real.iter().collect();
        let tape = Tape::new();
        let p = g.store.bind_constants(&tape);
        let fakes = g.fake(&tape, &p, &refs, 1.0, &mut rng_from(0)).unwrap();
        for (f, r) in fakes.iter().zip(&real) {
            let v = f.value();
            assert_eq!(v.shape(), r.shape());
            assert_eq!(&v.data()[..PROMPT_LEN * V], &r.data()[..PROMPT_LEN * V]);
            for row in 0..v.rows() {
                let s = v.row_slice(row);
                assert_eq!(s.iter().filter(|&&x| x == 1.0).count(), 1);
                assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generator_gradient_flows_through_the_relaxation_without_penalty() {
        for arch in [Arch::Gru, Arch::Tra] {
            let mut g = small_gen(arch, Encoding::OneHot);
            let mut c = small_critic(InputKind::OneHot { vocab_size: V });
            for param in c.store.iter_mut() {
                param.requires_grad = false;
            }
            let real = reals(4);
            let refs: Vec<&Tensor> = real.iter().collect();
            let mut opt = OptimizerState::new(&g.store, AdamConfig::adam(1e-3));
            let (_, norm) = generator_step(&mut g, &c, &mut opt, &refs, 1.0, &mut rng_from(1)).unwrap();
            assert!(norm > 0.0, "{arch}");
        }
    }

    #[test]
    fn embedding_gan_runs() {
        let mut g = small_gen(Arch::Gru, Encoding::Emb);
        let mut c = small_critic(InputKind::Dense { dim: 5 });
        let mut rng = rng_from(4);
        let real: Vec<Tensor> = (0..4)
            .map(|_| {
                use rand_distr::{Distribution, Normal};
                let n = Normal::new(0.0, 1.0).unwrap();
                Tensor::matrix(10, 5, (0..50).map(|_| n.sample(&mut rng)).collect())
            })
            .collect();
        let cfg = GanConfig {
            epochs: 2,
            critic_passes: 2,
            batch: 3,
            ..GanConfig::default()
        };
        let trace = gan_train(&mut g, &mut c, &real, &cfg).unwrap();
        assert_eq!(trace.len(), 2);
    }

    #[test]
    fn modality_mismatch_is_rejected() {
        let mut g = small_gen(Arch::Gru, Encoding::Emb);
        let mut c = small_critic(InputKind::OneHot { vocab_size: V });
        assert!(gan_train(&mut g, &mut c, &reals(2), &GanConfig::default()).is_err());
    }
}
