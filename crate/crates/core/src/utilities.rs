//! Exact expected utilities under a fixed strategy profile.
//!
//! Each agent's utility solves a balance equation that is linear in the
//! agent's own utility once the profile is fixed. For child `c` under FS
//!
//! ```text
//! u = δ u + (1/n) Σ_{f ∈ M_c} ( β_cf p (v_c(f) − δ u) − κ )
//! ```
//!
//! and under CS the cost is weighted by `β_cf` as well:
//! `β_cf (p (v_c(f) − δ u) − κ)`. Families use the same forms with their own
//! `δ`, `κ` and values, summed over `M_f`, always with the child's `β_cf` and
//! the `1/n` activation rate of child types. Isolating `u` gives the closed
//! forms implemented here.

use alloc::vec::Vec;

use crate::model::{Agent, Instance, Regime, StrategyProfile};
use crate::{Error, Matrix};

/// Expected utilities of all child and family types.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityVector {
    pub child: Vec<f64>,
    pub family: Vec<f64>,
}

impl UtilityVector {
    pub fn get(&self, agent: Agent) -> f64 {
        match agent {
            Agent::Child(c) => self.child[c],
            Agent::Family(f) => self.family[f],
        }
    }

    pub fn len(&self) -> usize {
        self.child.len() + self.family.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(agent, utility)` for children first, then families.
    pub fn iter(&self) -> impl Iterator<Item = (Agent, f64)> + '_ {
        let children = self.child.iter().enumerate().map(|(c, &u)| (Agent::Child(c), u));
        let families = self.family.iter().enumerate().map(|(f, &u)| (Agent::Family(f), u));
        children.chain(families)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelfareReport {
    pub avg_child: f64,
    pub avg_family: f64,
    pub avg_overall: f64,
}

/// `(1 - p)^k` by repeated multiplication.
#[inline]
pub fn miss_probability(p: f64, k: usize) -> f64 {
    let q = 1.0 - p;
    let mut out = 1.0;
    for _ in 0..k {
        out *= q;
    }
    out
}

fn check_pair(inst: &Instance, c: usize, f: usize) -> Result<(), Error> {
    inst.check_agent(Agent::Child(c))?;
    inst.check_agent(Agent::Family(f))
}

/// Number of families in `M_c(s)` that `c` strictly prefers to `f`.
pub fn better_count(inst: &Instance, s: &StrategyProfile, c: usize, f: usize) -> Result<usize, Error> {
    check_pair(inst, c, f)?;
    Ok(better_count_unchecked(inst, s, c, f))
}

#[inline]
fn better_count_unchecked(inst: &Instance, s: &StrategyProfile, c: usize, f: usize) -> usize {
    let v = inst.v_child(c, f);
    (0..inst.m()).filter(|&g| s.mutual(c, g) && inst.v_child(c, g) > v).count()
}

/// Probability that `c` matches none of the mutual families he prefers to `f`
/// in the current step, `(1 - p)^{b_cf(s)}`.
pub fn beta(inst: &Instance, s: &StrategyProfile, c: usize, f: usize) -> Result<f64, Error> {
    let b = better_count(inst, s, c, f)?;
    Ok(miss_probability(inst.params().p, b))
}

/// `β_cf(s)` for every pair, as an `n x m` matrix.
pub fn beta_matrix(inst: &Instance, s: &StrategyProfile) -> Matrix<f64> {
    let q = 1.0 - inst.params().p;
    let mut out = Matrix::filled(inst.n(), inst.m(), 1.0);
    for c in 0..inst.n() {
        let order = inst.child_order(c);
        let mut running = 1.0;
        let mut k = 0;
        while k < order.len() {
            // Families with equal value share the same β.
            let v = inst.v_child(c, order[k]);
            let mut end = k;
            while end < order.len() && inst.v_child(c, order[end]) == v {
                out[(c, order[end])] = running;
                end += 1;
            }
            for &f in &order[k..end] {
                if s.mutual(c, f) {
                    running *= q;
                }
            }
            k = end;
        }
    }
    out
}

pub(crate) struct Sums {
    pub numerator: f64,
    pub beta_sum: f64,
    pub count: usize,
}

#[inline]
pub(crate) fn closed_form(sums: &Sums, n: usize, delta: f64, p: f64) -> f64 {
    if sums.count == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let denom = 1.0 - delta + delta * p * sums.beta_sum / nf;
    assert!(denom > 0.0, "balance equation denominator must be positive");
    (sums.numerator / nf) / denom
}

#[inline]
pub(crate) fn term(regime: Regime, beta: f64, p: f64, value: f64, kappa: f64) -> f64 {
    match regime {
        Regime::Fs => beta * p * value - kappa,
        Regime::Cs => beta * (p * value - kappa),
    }
}

fn child_sums(inst: &Instance, s: &StrategyProfile, regime: Regime, c: usize, betas: Option<&Matrix<f64>>) -> Sums {
    let prm = inst.params();
    let mut sums = Sums { numerator: 0.0, beta_sum: 0.0, count: 0 };
    for f in 0..inst.m() {
        if !s.mutual(c, f) {
            continue;
        }
        let b = match betas {
            Some(m) => m[(c, f)],
            None => miss_probability(prm.p, better_count_unchecked(inst, s, c, f)),
        };
        sums.numerator += term(regime, b, prm.p, inst.v_child(c, f), prm.kappa_c);
        sums.beta_sum += b;
        sums.count += 1;
    }
    sums
}

fn family_sums(inst: &Instance, s: &StrategyProfile, regime: Regime, f: usize, betas: Option<&Matrix<f64>>) -> Sums {
    let prm = inst.params();
    let mut sums = Sums { numerator: 0.0, beta_sum: 0.0, count: 0 };
    for c in 0..inst.n() {
        if !s.mutual(c, f) {
            continue;
        }
        let b = match betas {
            Some(m) => m[(c, f)],
            None => miss_probability(prm.p, better_count_unchecked(inst, s, c, f)),
        };
        sums.numerator += term(regime, b, prm.p, inst.v_family(f, c), prm.kappa_f);
        sums.beta_sum += b;
        sums.count += 1;
    }
    sums
}

/// Expected utility of a single agent; agrees with [`utilities`] exactly.
pub fn agent_utility(inst: &Instance, s: &StrategyProfile, regime: Regime, agent: Agent) -> f64 {
    let prm = inst.params();
    match agent {
        Agent::Child(c) => closed_form(&child_sums(inst, s, regime, c, None), inst.n(), prm.delta_c, prm.p),
        Agent::Family(f) => closed_form(&family_sums(inst, s, regime, f, None), inst.n(), prm.delta_f, prm.p),
    }
}

/// Expected utilities of every agent under `s` in `regime`.
pub fn utilities(inst: &Instance, s: &StrategyProfile, regime: Regime) -> UtilityVector {
    debug_assert!(s.fits(inst));
    let prm = inst.params();
    let betas = beta_matrix(inst, s);
    let child = (0..inst.n())
        .map(|c| closed_form(&child_sums(inst, s, regime, c, Some(&betas)), inst.n(), prm.delta_c, prm.p))
        .collect();
    let family = (0..inst.m())
        .map(|f| closed_form(&family_sums(inst, s, regime, f, Some(&betas)), inst.n(), prm.delta_f, prm.p))
        .collect();
    UtilityVector { child, family }
}

/// Largest absolute residual of the balance equations when `u` is plugged
/// back in; evaluated in the original (un-isolated) form.
pub fn max_balance_residual(inst: &Instance, s: &StrategyProfile, regime: Regime, u: &UtilityVector) -> f64 {
    let prm = inst.params();
    let betas = beta_matrix(inst, s);
    let nf = inst.n() as f64;
    let bracket = |b: f64, value: f64, delta: f64, own: f64, kappa: f64| match regime {
        Regime::Fs => b * prm.p * (value - delta * own) - kappa,
        Regime::Cs => b * (prm.p * (value - delta * own) - kappa),
    };
    let mut worst: f64 = 0.0;
    for c in 0..inst.n() {
        let own = u.child[c];
        let sum: f64 = (0..inst.m())
            .filter(|&f| s.mutual(c, f))
            .map(|f| bracket(betas[(c, f)], inst.v_child(c, f), prm.delta_c, own, prm.kappa_c))
            .sum();
        worst = worst.max((own - prm.delta_c * own - sum / nf).abs());
    }
    for f in 0..inst.m() {
        let own = u.family[f];
        let sum: f64 = (0..inst.n())
            .filter(|&c| s.mutual(c, f))
            .map(|c| bracket(betas[(c, f)], inst.v_family(f, c), prm.delta_f, own, prm.kappa_f))
            .sum();
        worst = worst.max((own - prm.delta_f * own - sum / nf).abs());
    }
    worst
}

/// Per-side averages and the size-weighted overall average.
pub fn welfare(u: &UtilityVector) -> WelfareReport {
    let n = u.child.len() as f64;
    let m = u.family.len() as f64;
    let sum_c: f64 = u.child.iter().sum();
    let sum_f: f64 = u.family.iter().sum();
    let avg_child = if n > 0.0 { sum_c / n } else { 0.0 };
    let avg_family = if m > 0.0 { sum_f / m } else { 0.0 };
    let avg_overall = if n + m > 0.0 { (n * avg_child + m * avg_family) / (n + m) } else { 0.0 };
    WelfareReport { avg_child, avg_family, avg_overall }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Params;
    use alloc::vec;

    fn single(delta_c: f64) -> (Instance, StrategyProfile) {
        let params = Params { delta_c, delta_f: 0.5, kappa_c: 0.02, kappa_f: 0.02, p: 0.5 };
        let inst = Instance::from_rows(&[vec![1.0]], &[vec![1.0]], params).unwrap();
        let s = StrategyProfile::uniform(&inst, true);
        (inst, s)
    }

    fn one_child_three_families() -> (Instance, StrategyProfile) {
        let inst = Instance::from_rows(
            &[vec![1.0, 0.8, 0.6]],
            &[vec![0.5], vec![0.5], vec![0.5]],
            Params::symmetric(0.9, 0.01, 0.5),
        )
        .unwrap();
        let s = StrategyProfile::uniform(&inst, true);
        (inst, s)
    }

    #[test]
    fn better_count_of_top_and_bottom() {
        let (inst, s) = one_child_three_families();
        assert_eq!(better_count(&inst, &s, 0, 0).unwrap(), 0);
        assert_eq!(better_count(&inst, &s, 0, 2).unwrap(), 2);
    }

    #[test]
    fn better_count_empty_correspondence() {
        let (inst, _) = one_child_three_families();
        let s = StrategyProfile::uniform(&inst, false);
        for f in 0..3 {
            assert_eq!(better_count(&inst, &s, 0, f).unwrap(), 0);
        }
    }

    #[test]
    fn better_count_index_checked() {
        let (inst, s) = one_child_three_families();
        assert_eq!(better_count(&inst, &s, 1, 0), Err(Error::IndexOutOfRange { index: 1, len: 1 }));
        assert!(beta(&inst, &s, 0, 3).is_err());
    }

    #[test]
    fn beta_values() {
        let (inst, s) = one_child_three_families();
        assert_eq!(beta(&inst, &s, 0, 0).unwrap(), 1.0);
        assert_eq!(beta(&inst, &s, 0, 2).unwrap(), 0.25);
        assert!((miss_probability(0.9, 1) - 0.1).abs() <= 1e-15);
    }

    #[test]
    fn beta_matrix_matches_pointwise() {
        let (inst, mut s) = one_child_three_families();
        s.family_interest[(1, 0)] = false;
        let bm = beta_matrix(&inst, &s);
        for f in 0..3 {
            assert_eq!(bm[(0, f)], beta(&inst, &s, 0, f).unwrap());
        }
        assert_eq!(bm[(0, 2)], 0.5);
    }

    #[test]
    fn myopic_single_pair() {
        let (inst, s) = single(0.0);
        let u = utilities(&inst, &s, Regime::Fs);
        assert!((u.child[0] - 0.48).abs() < 1e-15);
    }

    #[test]
    fn patient_single_pair_matches_damped_iteration() {
        let (inst, s) = single(0.99);
        let u = utilities(&inst, &s, Regime::Fs).child[0];
        // Oracle: iterate the balance map u <- δu + (p(v - δu) - κ)/n.
        let (d, p, k) = (0.99f64, 0.5f64, 0.02f64);
        let mut x = 0.0f64;
        for _ in 0..20_000 {
            x = 0.5 * x + 0.5 * (d * x + (p * (1.0 - d * x) - k));
        }
        assert!((x - 0.48 / 0.505).abs() < 1e-12);
        assert!((u - x).abs() < 1e-12);
    }

    #[test]
    fn empty_mutual_set_gives_zero() {
        let (inst, _) = one_child_three_families();
        let s = StrategyProfile::uniform(&inst, false);
        let u = utilities(&inst, &s, Regime::Cs);
        assert!(u.iter().all(|(_, x)| x == 0.0));
    }

    #[test]
    fn agent_utility_agrees_with_vector() {
        let (inst, s) = one_child_three_families();
        for regime in Regime::ALL {
            let u = utilities(&inst, &s, regime);
            for a in inst.agents() {
                assert!((agent_utility(&inst, &s, regime, a) - u.get(a)).abs() <= 1e-15);
            }
            assert!(max_balance_residual(&inst, &s, regime, &u) < 1e-12);
        }
    }

    #[test]
    fn cs_beats_fs_with_multiple_mutual_families() {
        let (inst, s) = one_child_three_families();
        let fs = utilities(&inst, &s, Regime::Fs);
        let cs = utilities(&inst, &s, Regime::Cs);
        assert!(cs.child[0] > fs.child[0]);
        assert_eq!(cs.family[0], fs.family[0]);
        assert!(cs.family[2] > fs.family[2]);
    }

    #[test]
    fn welfare_examples() {
        let w = welfare(&UtilityVector { child: vec![0.5, 0.5], family: vec![0.3, 0.3] });
        assert!((w.avg_child - 0.5).abs() < 1e-15);
        assert!((w.avg_family - 0.3).abs() < 1e-15);
        assert!((w.avg_overall - 0.4).abs() < 1e-15);

        let w = welfare(&UtilityVector { child: vec![0.0; 2], family: vec![0.0; 2] });
        assert_eq!((w.avg_child, w.avg_family, w.avg_overall), (0.0, 0.0, 0.0));

        let w = welfare(&UtilityVector { child: vec![0.8], family: vec![0.2; 3] });
        assert!((w.avg_overall - 0.35).abs() < 1e-15);
    }
}
