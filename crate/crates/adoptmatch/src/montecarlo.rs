//! Step-by-step simulation of the search process, used to validate the
//! analytic utilities.
//!
//! One agent type is tagged at `t = 0` and followed until it is matched or the
//! horizon is reached. Every step one child type is active, uniformly at
//! random; a step only matters to the tagged agent when it is involved, so the
//! simulation jumps straight to those steps with a geometric draw. Payoffs and
//! costs at step `t` are discounted by `δ^t` of the tagged agent's side.
//!
//! Run `r` uses `ChaCha8Rng::seed_from_u64(seed)` on stream `r`, so estimates
//! do not depend on how runs are spread over threads.

use adoptmatch_core::{Agent, Error, Instance, Regime, StrategyProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Truncation is chosen so the ignored tail is worth less than this.
pub const BIAS_TARGET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(runs)`.
    pub stderr: f64,
    pub runs: usize,
    pub truncation_horizon: usize,
    /// Bound on the utility lost by stopping at the horizon.
    pub truncation_bias_bound: f64,
}

/// Smallest `T` with `δ^T (v̄ + max_cost / (1 − δ)) < BIAS_TARGET`, and that bound.
pub fn truncation_horizon(delta: f64, v_bar: f64, max_cost: f64) -> (usize, f64) {
    let scale = v_bar + max_cost / (1.0 - delta);
    let mut t = 0usize;
    let mut factor = 1.0;
    while factor * scale >= BIAS_TARGET {
        t += 1;
        factor *= delta;
    }
    (t, factor * scale)
}

/// Steps until an event of per-step probability `q` happens, counting from 0.
fn geometric(rng: &mut ChaCha8Rng, q: f64) -> usize {
    if q >= 1.0 {
        return 0;
    }
    let u: f64 = 1.0 - rng.gen::<f64>();
    let k = (u.ln() / (1.0 - q).ln()).floor();
    if k >= usize::MAX as f64 {
        usize::MAX
    } else {
        k as usize
    }
}

/// What happens to the tagged agent when it is involved in a step.
enum Outcome {
    /// Paid `cost`, no match; keep searching.
    Continue { cost: f64 },
    /// Paid `cost` and matched for `value`.
    Matched { cost: f64, value: f64 },
}

struct Episode<'a> {
    /// Per-step probability of an involving step.
    involvement: f64,
    delta: f64,
    horizon: usize,
    step: Box<dyn Fn(&mut ChaCha8Rng) -> Outcome + Sync + 'a>,
}

impl Episode<'_> {
    fn play(&self, rng: &mut ChaCha8Rng) -> f64 {
        let mut total = 0.0;
        let mut t = 0usize;
        loop {
            t = t.saturating_add(geometric(rng, self.involvement));
            if t >= self.horizon {
                return total;
            }
            let discount = self.delta.powi(t as i32);
            match (self.step)(rng) {
                Outcome::Continue { cost } => total -= discount * cost,
                Outcome::Matched { cost, value } => return total + discount * (value - cost),
            }
            t += 1;
        }
    }
}

fn run(episode: &Episode<'_>, runs: usize, seed: u64, bias: f64) -> SimEstimate {
    if episode.involvement <= 0.0 || episode.horizon == 0 {
        return SimEstimate { mean: 0.0, stderr: 0.0, runs, truncation_horizon: episode.horizon, truncation_bias_bound: bias };
    }
    let samples: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            episode.play(&mut rng)
        })
        .collect();
    // Summed in run order so the result is independent of the thread count.
    let mean = samples.iter().sum::<f64>() / runs as f64;
    let stderr = if runs > 1 {
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (runs - 1) as f64).sqrt() / (runs as f64).sqrt()
    } else {
        0.0
    };
    SimEstimate { mean, stderr, runs, truncation_horizon: episode.horizon, truncation_bias_bound: bias }
}

fn check(inst: &Instance, s: &StrategyProfile, runs: usize) -> Result<(), Error> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if s.n() != inst.n() || s.m() != inst.m() {
        return Err(Error::Shape(format!("profile is {} x {}, instance is {} x {}", s.n(), s.m(), inst.n(), inst.m())));
    }
    Ok(())
}

/// Mutual families of `c`, most preferred first.
fn mutual_families(inst: &Instance, s: &StrategyProfile, c: usize) -> Vec<usize> {
    inst.child_order(c).iter().copied().filter(|&f| s.mutual(c, f)).collect()
}

/// Walks `order` paying `kappa` per family until the first success.
fn sequential_search(rng: &mut ChaCha8Rng, p: f64, kappa: f64, order: &[usize], value: impl Fn(usize) -> f64) -> Outcome {
    let mut cost = 0.0;
    for &f in order {
        cost += kappa;
        if rng.gen_bool(p) {
            return Outcome::Matched { cost, value: value(f) };
        }
    }
    Outcome::Continue { cost }
}

fn child_episode(inst: &Instance, regime: Regime, c: usize, order: Vec<usize>) -> (Episode<'_>, f64) {
    let prm = *inst.params();
    let max_cost = prm.kappa_c * order.len() as f64;
    let (horizon, bias) = truncation_horizon(prm.delta_c, inst.v_bar(), max_cost);
    let involvement = if order.is_empty() { 0.0 } else { 1.0 / inst.n() as f64 };
    let step: Box<dyn Fn(&mut ChaCha8Rng) -> Outcome + Sync + '_> = match regime {
        Regime::Fs => Box::new(move |rng| {
            // Every mutual family is investigated; the best success wins.
            let mut best: Option<usize> = None;
            for &f in &order {
                if rng.gen_bool(prm.p) && best.is_none() {
                    best = Some(f);
                }
            }
            match best {
                Some(f) => Outcome::Matched { cost: max_cost, value: inst.v_child(c, f) },
                None => Outcome::Continue { cost: max_cost },
            }
        }),
        Regime::Cs => Box::new(move |rng| sequential_search(rng, prm.p, prm.kappa_c, &order, |f| inst.v_child(c, f))),
    };
    (Episode { involvement, delta: prm.delta_c, horizon, step }, bias)
}

fn family_episode<'a>(inst: &'a Instance, s: &StrategyProfile, regime: Regime, f: usize) -> (Episode<'a>, f64) {
    let prm = *inst.params();
    let (horizon, bias) = truncation_horizon(prm.delta_f, inst.v_bar(), prm.kappa_f);
    // For each child mutual with `f`: the number of mutual families it prefers to `f`.
    let rivals: Vec<(usize, usize)> = (0..inst.n())
        .filter(|&c| s.mutual(c, f))
        .map(|c| {
            let v = inst.v_child(c, f);
            let better = (0..inst.m()).filter(|&g| s.mutual(c, g) && inst.v_child(c, g) > v).count();
            (c, better)
        })
        .collect();
    let involvement = rivals.len() as f64 / inst.n() as f64;
    let step: Box<dyn Fn(&mut ChaCha8Rng) -> Outcome + Sync + '_> = Box::new(move |rng| {
        let (c, better) = rivals[rng.gen_range(0..rivals.len())];
        let value = inst.v_family(f, c);
        match regime {
            Regime::Fs => {
                let own = rng.gen_bool(prm.p);
                let beaten = (0..better).fold(false, |acc, _| rng.gen_bool(prm.p) | acc);
                if own && !beaten {
                    Outcome::Matched { cost: prm.kappa_f, value }
                } else {
                    Outcome::Continue { cost: prm.kappa_f }
                }
            }
            Regime::Cs => {
                if (0..better).any(|_| rng.gen_bool(prm.p)) {
                    Outcome::Continue { cost: 0.0 }
                } else if rng.gen_bool(prm.p) {
                    Outcome::Matched { cost: prm.kappa_f, value }
                } else {
                    Outcome::Continue { cost: prm.kappa_f }
                }
            }
        }
    });
    (Episode { involvement, delta: prm.delta_f, horizon, step }, bias)
}

/// Estimates the expected discounted utility of `agent` under `s`.
pub fn simulate_utility(
    inst: &Instance,
    s: &StrategyProfile,
    regime: Regime,
    agent: Agent,
    runs: usize,
    seed: u64,
) -> Result<SimEstimate, Error> {
    check(inst, s, runs)?;
    let (episode, bias) = match agent {
        Agent::Child(c) if c < inst.n() => child_episode(inst, regime, c, mutual_families(inst, s, c)),
        Agent::Family(f) if f < inst.m() => family_episode(inst, s, regime, f),
        Agent::Child(index) => return Err(Error::IndexOutOfRange { index, len: inst.n() }),
        Agent::Family(index) => return Err(Error::IndexOutOfRange { index, len: inst.m() }),
    };
    Ok(run(&episode, runs, seed, bias))
}

/// CS utility of child `c` when the caseworker walks its mutual families in
/// `order` instead of by decreasing value.
pub fn simulate_cs_with_order(
    inst: &Instance,
    s: &StrategyProfile,
    c: usize,
    order: &[usize],
    runs: usize,
    seed: u64,
) -> Result<SimEstimate, Error> {
    check(inst, s, runs)?;
    if c >= inst.n() {
        return Err(Error::IndexOutOfRange { index: c, len: inst.n() });
    }
    let mut expected = mutual_families(inst, s, c);
    let mut given = order.to_vec();
    expected.sort_unstable();
    given.sort_unstable();
    if expected != given {
        return Err(Error::InvalidPermutation);
    }
    let (episode, bias) = child_episode(inst, Regime::Cs, c, order.to_vec());
    Ok(run(&episode, runs, seed, bias))
}
