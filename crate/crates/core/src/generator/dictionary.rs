//! A finite family of smooth test functions with `‖f‖_{3,∞} ≤ 1`.
//!
//! Each function is a product of one-dimensional factors (Gaussian bumps,
//! `tanh` sigmoids or constants) scaled so that
//! `Σ_{|α| ≤ 3} sup |∂^α f| = 1`. The supremum over the dictionary is a
//! reproducible lower bound for the supremum over the whole unit ball.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TestFunction;
use crate::error::{Error, Result};
use crate::rng::StreamFactory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Factor {
    /// `exp(-u²/2)` with `u = (x - center)/scale`.
    Bump { center: f64, scale: f64 },
    /// `tanh(u)`.
    Sigmoid { center: f64, scale: f64 },
    Constant,
}

/// `ψ^{(k)}(u)` for `k ≤ 3`.
fn shape(kind: u8, u: f64) -> [f64; 4] {
    if kind == 0 {
        let g = (-0.5 * u * u).exp();
        [g, -u * g, (u * u - 1.0) * g, (3.0 * u - u * u * u) * g]
    } else {
        let t = u.tanh();
        let s = 1.0 - t * t;
        [t, s, -2.0 * t * s, -2.0 * s * s + 4.0 * t * t * s]
    }
}

/// `sup_u |ψ^{(k)}(u)|`, by a dense scan.
fn shape_sups(kind: u8) -> [f64; 4] {
    static SUPS: OnceLock<[[f64; 4]; 2]> = OnceLock::new();
    SUPS.get_or_init(|| {
        let mut out = [[0.0; 4]; 2];
        for (kind, row) in out.iter_mut().enumerate() {
            for i in 0..=200_000 {
                let u = -10.0 + 20.0 * i as f64 / 200_000.0;
                let v = shape(kind as u8, u);
                for k in 0..4 {
                    row[k] = f64::max(row[k], v[k].abs());
                }
            }
            // tanh approaches 1 only asymptotically
            if kind == 1 {
                row[0] = 1.0;
            }
        }
        out
    })[kind as usize]
}

impl Factor {
    /// Value and first three derivatives at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        match *self {
            Factor::Bump { center, scale } | Factor::Sigmoid { center, scale } => {
                let kind = matches!(self, Factor::Sigmoid { .. }) as u8;
                let v = shape(kind, (x - center) / scale);
                [v[0], v[1] / scale, v[2] / (scale * scale), v[3] / (scale * scale * scale)]
            }
            Factor::Constant => [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// `sup |∂^k|` for `k ≤ 3`.
    pub fn sups(&self) -> [f64; 4] {
        match *self {
            Factor::Bump { scale, .. } | Factor::Sigmoid { scale, .. } => {
                let kind = matches!(self, Factor::Sigmoid { .. }) as u8;
                let s = shape_sups(kind);
                [s[0], s[1] / scale, s[2] / (scale * scale), s[3] / scale.powi(3)]
            }
            Factor::Constant => [1.0, 0.0, 0.0, 0.0],
        }
    }
}

/// `amplitude · Π_k φ_k(x_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryFunction {
    pub amplitude: f64,
    pub factors: Vec<Factor>,
}

/// Multi-indices `α ∈ ℕ^d` with `|α| ≤ order`.
fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|a: Vec<usize>| {
                let used: usize = a.iter().sum();
                (0..=order - used).map(move |k| {
                    let mut b = a.clone();
                    b.push(k);
                    b
                })
            })
            .collect();
    }
    out
}

impl DictionaryFunction {
    /// `Σ_{|α| ≤ 3} sup |∂^α f|` (exact for products of the factor shapes).
    pub fn norm3(&self) -> f64 {
        let sups: Vec<_> = self.factors.iter().map(Factor::sups).collect();
        multi_indices(self.factors.len(), 3)
            .iter()
            .map(|a| a.iter().zip(&sups).map(|(&k, s)| s[k]).product::<f64>())
            .sum::<f64>()
            * self.amplitude.abs()
    }

    /// `∂^α f(x)` for an unordered multi-index (entries are orders ≤ 3).
    pub fn partial(&self, x: &[f64], alpha: &[usize]) -> f64 {
        self.amplitude
            * self
                .factors
                .iter()
                .zip(x)
                .zip(alpha)
                .map(|((f, &xi), &k)| f.derivatives(xi)[k])
                .product::<f64>()
    }
}

impl TestFunction for DictionaryFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.amplitude
            * self
                .factors
                .iter()
                .zip(x)
                .map(|(f, &xi)| f.derivatives(xi)[0])
                .product::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        let mut alpha = vec![0; d];
        for i in 0..d {
            alpha[i] = 1;
            out[i] = self.partial(x, &alpha);
            alpha[i] = 0;
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        let mut alpha = vec![0; d];
        for i in 0..d {
            for j in 0..d {
                alpha[i] += 1;
                alpha[j] += 1;
                out[i * d + j] = self.partial(x, &alpha);
                alpha[i] -= 1;
                alpha[j] -= 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub functions: Vec<DictionaryFunction>,
    pub seed: u64,
}

impl Dictionary {
    pub const DEFAULT_SIZE: usize = 64;

    /// `size` random functions with centers in the box `[lo, hi]` and
    /// scales between 5% and 50% of the box width, each normalized to
    /// `‖f‖_{3,∞} = 1`.
    pub fn new(lo: &[f64], hi: &[f64], size: usize, seed: u64) -> Result<Self> {
        let d = lo.len();
        if d == 0 || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(b > a)) || size == 0 {
            return Err(Error::InvalidParameter(format!(
                "dictionary needs a nonempty box and size, got [{lo:?}, {hi:?}] and {size}"
            )));
        }
        let mut rng = StreamFactory::new(seed).child(0xd1c7).stream(0);
        let mut functions = Vec::with_capacity(size);
        while functions.len() < size {
            let factors: Vec<Factor> = (0..d)
                .map(|k| {
                    let width = hi[k] - lo[k];
                    let center = lo[k] + width * rng.random::<f64>();
                    let scale = width * (0.05f64.ln() + 10f64.ln() * rng.random::<f64>()).exp();
                    match rng.random_range(0..4) {
                        0 | 1 => Factor::Bump { center, scale },
                        2 => Factor::Sigmoid { center, scale },
                        _ if d > 1 => Factor::Constant,
                        _ => Factor::Bump { center, scale },
                    }
                })
                .collect();
            if factors.iter().all(|f| matches!(f, Factor::Constant)) {
                continue;
            }
            let mut f = DictionaryFunction {
                amplitude: 1.0,
                factors,
            };
            f.amplitude = 1.0 / f.norm3();
            functions.push(f);
        }
        Ok(Dictionary { functions, seed })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.functions.first().map_or(0, |f| f.factors.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::fd;

    #[test]
    fn normalized_and_matches_finite_differences() {
        let dict = Dictionary::new(&[-1.0, 0.0], &[3.0, 2.0], 64, 7).unwrap();
        assert_eq!(dict.len(), 64);
        for f in &dict.functions {
            assert!((f.norm3() - 1.0).abs() < 1e-12);
            let x = [0.4, 1.1];
            let mut g = [0.0; 2];
            let mut gf = [0.0; 2];
            f.gradient(&x, &mut g);
            fd::gradient(&|y| f.value(y), &x, &mut gf);
            for i in 0..2 {
                assert!((g[i] - gf[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "{g:?} {gf:?}");
            }
        }
    }

    #[test]
    fn known_shape_suprema() {
        let s = shape_sups(0);
        assert!((s[1] - (-0.5f64).exp()).abs() < 1e-9);
        assert!((s[2] - 1.0).abs() < 1e-12);
        let s = shape_sups(1);
        assert!((s[2] - 4.0 / (3.0 * 3f64.sqrt())).abs() < 1e-9);
        assert!((s[3] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn multi_index_count() {
        // C(d + 3, 3) indices of order at most 3
        assert_eq!(multi_indices(1, 3).len(), 4);
        assert_eq!(multi_indices(2, 3).len(), 10);
        assert_eq!(multi_indices(3, 3).len(), 20);
    }
}
