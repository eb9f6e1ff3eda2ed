use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Poly,
    Rbf,
    Sigmoid,
}

impl KernelKind {
    /// Grid order; also the tie-break order of the grid search.
    pub const ALL: [KernelKind; 4] = [KernelKind::Linear, KernelKind::Poly, KernelKind::Rbf, KernelKind::Sigmoid];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Poly => "poly",
            KernelKind::Rbf => "rbf",
            KernelKind::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub coef0: f64,
    pub degree: i32,
}

impl Kernel {
    pub fn linear() -> Self {
        Kernel {
            kind: KernelKind::Linear,
            gamma: 1.0,
            coef0: 0.0,
            degree: 3,
        }
    }

    pub fn rbf(gamma: f64) -> Self {
        Kernel {
            kind: KernelKind::Rbf,
            gamma,
            ..Kernel::linear()
        }
    }

    pub fn poly(degree: i32, gamma: f64, coef0: f64) -> Self {
        Kernel {
            kind: KernelKind::Poly,
            gamma,
            coef0,
            degree,
        }
    }

    pub fn sigmoid(gamma: f64, coef0: f64) -> Self {
        Kernel {
            kind: KernelKind::Sigmoid,
            gamma,
            coef0,
            degree: 3,
        }
    }

    /// Default parameters for `kind` on data `x`: gamma `1 / (dim * var)`
    /// over all entries (1 when the data is constant), degree 3, coef0 0.
    pub fn fitted(kind: KernelKind, x: &[Vec<f64>]) -> Self {
        let dim = x.first().map_or(1, Vec::len).max(1);
        let n = (x.len() * dim) as f64;
        let mean = x.iter().flatten().sum::<f64>() / n.max(1.0);
        let var = x.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1.0);
        let gamma = if var > 0.0 { 1.0 / (dim as f64 * var) } else { 1.0 };
        Kernel {
            kind,
            gamma,
            coef0: 0.0,
            degree: 3,
        }
    }

    /// Panics on length mismatch; see [`kernel_eval`] for the checked form.
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), v.len());
        match self.kind {
            KernelKind::Linear => dot(u, v),
            KernelKind::Poly => (self.gamma * dot(u, v) + self.coef0).powi(self.degree),
            KernelKind::Rbf => {
                let d: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d).exp()
            }
            KernelKind::Sigmoid => (self.gamma * dot(u, v) + self.coef0).tanh(),
        }
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn kernel_eval(u: &[f64], v: &[f64], kernel: &Kernel) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("kernel on vectors of length {} and {}", u.len(), v.len())));
    }
    Ok(kernel.eval(u, v))
}
