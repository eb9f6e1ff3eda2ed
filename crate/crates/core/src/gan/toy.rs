//! A continuous 2-D problem for checking the adversarial loop: real points
//! come from a shifted Gaussian, the generator is an affine map of noise.

use rand_distr::{Distribution, StandardNormal};

use super::{Critic, Generator};
use crate::error::Result;
use crate::rng::{rng_from, Rng};
use crate::tensor::nn::Linear;
use crate::tensor::{Bound, ParamId, ParamStore, Tape, Tensor, Var};

pub const TOY_MEAN: [f64; 2] = [2.0, -1.0];
pub const TOY_STD: f64 = 0.5;

/// `n` single-row samples from the real distribution.
pub fn toy_real_samples(n: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| {
            Tensor::row(
                TOY_MEAN
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + TOY_STD * z
                    })
                    .collect(),
            )
        })
        .collect()
}

/// `x = z A + b` with `z ~ N(0, I)`.
pub struct ToyGenerator {
    pub store: ParamStore,
    a: ParamId,
    b: ParamId,
}

impl ToyGenerator {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut store = ParamStore::new();
        let a = store.add_normal("a", &[2, 2], 0.5, &mut rng);
        let b = store.add("b", Tensor::zeros(&[1, 2]));
        ToyGenerator { store, a, b }
    }

    pub fn offset(&self) -> &Tensor {
        self.store.value(self.b)
    }
}

impl Generator for ToyGenerator {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn output_width(&self) -> usize {
        2
    }

    fn fake<'t>(&self, tape: &'t Tape, p: &Bound<'t>, real: &[&Tensor], _tau: f64, rng: &mut Rng) -> Result<Vec<Var<'t>>> {
        Ok(real
            .iter()
            .map(|r| {
                let z: Vec<f64> = (0..r.rows() * 2).map(|_| StandardNormal.sample(rng)).collect();
                tape.constant(Tensor::matrix(r.rows(), 2, z))
                    .matmul(p.get(self.a))
                    .add_row(p.get(self.b))
            })
            .collect())
    }
}

/// Two tanh layers followed by a linear score.
pub struct ToyCritic {
    pub store: ParamStore,
    l1: Linear,
    l2: Linear,
}

impl ToyCritic {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut store = ParamStore::new();
        let l1 = Linear::new(&mut store, "l1", 2, hidden, true, &mut rng);
        let l2 = Linear::new(&mut store, "l2", hidden, 1, true, &mut rng);
        ToyCritic { store, l1, l2 }
    }
}

impl Critic for ToyCritic {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn input_width(&self) -> usize {
        2
    }

    fn score<'t>(&self, tape: &'t Tape, p: &Bound<'t>, xs: &[Var<'t>]) -> Result<Var<'t>> {
        let x = tape.concat_rows(xs);
        Ok(self.l2.forward(p, self.l1.forward(p, x).tanh()))
    }
}
