//! Random instances and the named hand-built instances.
//!
//! Random instances mix a common "quality" with idiosyncratic taste:
//! `v'_c(f) = λ q_f + (1 − λ) v̂_c(f)` and symmetrically for families, followed
//! by min-max normalisation of every agent's row to `[0, 1]`.
//!
//! The bit stream is `ChaCha8Rng::seed_from_u64(seed)` from `rand_chacha`
//! 0.3, sampled with `rand` 0.8's `Standard` distribution for `f64`. Draw
//! order: child qualities (`n`), family qualities (`m`), child idiosyncratic
//! values row-major (`n x m`), family idiosyncratic values row-major
//! (`m x n`). Redraws for ties continue the same stream. The draws do not
//! depend on `λ`, so one seed yields the same underlying tastes for every `λ`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Instance, Params};
use crate::{Error, Matrix};

fn first_duplicate(values: &[f64]) -> Option<usize> {
    (1..values.len()).find(|&j| values[..j].contains(&values[j]))
}

fn normalise(row: &mut [f64]) {
    if row.len() == 1 {
        row[0] = if row[0] > 0.0 { 1.0 } else { 0.0 };
        return;
    }
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        for v in row.iter_mut() {
            *v = (*v - lo) / span;
        }
    }
}

/// Draws an `n x m` instance with preference correlation `lambda`.
pub fn generate_instance(n: usize, m: usize, lambda: f64, seed: u64, params: Params) -> Result<Instance, Error> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("need n, m >= 1, got {n} x {m}")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q_child: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let mut q_family: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
    let mut idio_child: Vec<f64> = (0..n * m).map(|_| rng.gen()).collect();
    let mut idio_family: Vec<f64> = (0..m * n).map(|_| rng.gen()).collect();

    while let Some(j) = first_duplicate(&q_child) {
        q_child[j] = rng.gen();
    }
    while let Some(j) = first_duplicate(&q_family) {
        q_family[j] = rng.gen();
    }

    let mix = |quality: f64, idio: f64| lambda * quality + (1.0 - lambda) * idio;
    let mut v_child = Matrix::filled(n, m, 0.0);
    for c in 0..n {
        loop {
            let row = v_child.row_mut(c);
            for f in 0..m {
                row[f] = mix(q_family[f], idio_child[c * m + f]);
            }
            normalise(row);
            match first_duplicate(row) {
                None => break,
                Some(f) => {
                    idio_child[c * m + f] = rng.gen();
                    if lambda == 1.0 {
                        q_family[f] = rng.gen();
                    }
                }
            }
        }
    }
    let mut v_family = Matrix::filled(m, n, 0.0);
    for f in 0..m {
        loop {
            let row = v_family.row_mut(f);
            for c in 0..n {
                row[c] = mix(q_child[c], idio_family[f * n + c]);
            }
            normalise(row);
            match first_duplicate(row) {
                None => break,
                Some(c) => {
                    idio_family[f * n + c] = rng.gen();
                    if lambda == 1.0 {
                        q_child[c] = rng.gen();
                    }
                }
            }
        }
    }
    // A quality redraw for a family row can break an already accepted child
    // row when lambda = 1; rebuild in that (measure-zero) case.
    if lambda == 1.0 {
        for c in 0..n {
            let row = v_child.row_mut(c);
            row.copy_from_slice(&q_family);
            normalise(row);
        }
    }
    Instance::new(v_child, v_family, params)
}

/// Hand-built instances exhibiting the qualitative claims about the two
/// technologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedInstance {
    /// 2 x 2 market with crossed preferences and two equilibria far apart.
    Prop7,
    /// 2 x 2 market where the low child is matched in FS but not in CS.
    Prop8,
    /// 2 x 2 market where an FS family's best response is not value-upward closed.
    Prop9,
    /// 1 x 3 market where a family is worse off in CS.
    PropFamiliesWorse,
}

impl NamedInstance {
    pub const ALL: [NamedInstance; 4] =
        [NamedInstance::Prop7, NamedInstance::Prop8, NamedInstance::Prop9, NamedInstance::PropFamiliesWorse];

    pub fn name(self) -> &'static str {
        match self {
            NamedInstance::Prop7 => "prop7",
            NamedInstance::Prop8 => "prop8",
            NamedInstance::Prop9 => "prop9",
            NamedInstance::PropFamiliesWorse => "prop-families-worse",
        }
    }

    /// Default `(ε, parameters)` under which the instance shows its effect.
    pub fn defaults(self) -> (f64, Params) {
        match self {
            NamedInstance::Prop7 => (0.0, Params::symmetric(0.9, 0.1, 0.5)),
            NamedInstance::Prop8 => (0.1, Params { delta_c: 0.05, delta_f: 0.99, kappa_c: 0.1, kappa_f: 0.1, p: 0.9 }),
            NamedInstance::Prop9 => (0.1, Params { delta_c: 0.5, delta_f: 0.5, kappa_c: 0.02, kappa_f: 0.3, p: 0.5 }),
            NamedInstance::PropFamiliesWorse => {
                (0.1, Params { delta_c: 0.5, delta_f: 0.5, kappa_c: 0.01, kappa_f: 0.1, p: 0.5 })
            }
        }
    }

    /// Builds the instance; `epsilon` is ignored by `Prop7`.
    pub fn build(self, epsilon: f64, params: Params) -> Instance {
        let Params { kappa_c, kappa_f, p, .. } = params;
        let e = epsilon;
        // (v_child rows, v_family rows); v_family[f][c].
        let (vc, vf): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match self {
            NamedInstance::Prop7 => (
                alloc::vec![alloc::vec![1.0, kappa_c / p], alloc::vec![kappa_c / p, 1.0]],
                alloc::vec![alloc::vec![kappa_f / p, 1.0], alloc::vec![1.0, kappa_f / p]],
            ),
            NamedInstance::Prop8 => (
                alloc::vec![alloc::vec![1.0, 1.0 - e], alloc::vec![1.0, 1.0 - e]],
                alloc::vec![alloc::vec![1.0, 0.0], alloc::vec![1.0, kappa_f / p + e]],
            ),
            // The second child prefers the second family, so that family
            // competes for the first child against its top choice.
            NamedInstance::Prop9 => (
                alloc::vec![alloc::vec![1.0, 1.0 - e], alloc::vec![1.0 - e, 1.0]],
                alloc::vec![alloc::vec![1.0, 1.0 - e], alloc::vec![1.0, 1.0 - e]],
            ),
            NamedInstance::PropFamiliesWorse => (
                alloc::vec![alloc::vec![1.0, 1.0 - e, 1.0 - 2.0 * e]],
                alloc::vec![alloc::vec![1.0], alloc::vec![kappa_f / p], alloc::vec![1.0]],
            ),
        };
        Instance::from_rows(&vc, &vf, params).expect("named instances have consistent shapes")
    }
}

impl FromStr for NamedInstance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        NamedInstance::ALL
            .into_iter()
            .find(|named| named.name() == s)
            .ok_or_else(|| Error::UnknownInstance(s.to_string()))
    }
}

/// Named instance with its default `ε` and parameters.
pub fn paper_instance(name: &str) -> Result<Instance, Error> {
    let named: NamedInstance = name.parse()?;
    let (epsilon, params) = named.defaults();
    Ok(named.build(epsilon, params))
}
