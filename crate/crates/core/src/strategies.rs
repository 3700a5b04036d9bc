//! Threshold strategies and best responses.
//!
//! A threshold profile `y` assigns every agent a reservation utility. Under CS
//! it induces interest pointwise: child `c` is interested in `f` iff
//! `p (v_c(f) − δ_C y_c) ≥ κ_C`. Under FS the test is weighted by `β_cf`, which
//! itself depends on the induced profile, so the profile is built per child
//! by scanning families in decreasing order of the child's value; `β_cf` only
//! depends on families scanned earlier.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{Agent, Instance, Regime, StrategyProfile};
use crate::utilities::{agent_utility, beta_matrix, closed_form, miss_probability, term, Sums, UtilityVector};
use crate::{Error, Matrix};

/// One threshold per agent type; the lattice element of the equilibrium
/// iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdProfile {
    pub child: Vec<f64>,
    pub family: Vec<f64>,
}

impl ThresholdProfile {
    pub fn new(child: Vec<f64>, family: Vec<f64>) -> Self {
        ThresholdProfile { child, family }
    }

    pub fn constant(n: usize, m: usize, child: f64, family: f64) -> Self {
        ThresholdProfile { child: vec![child; n], family: vec![family; m] }
    }

    pub fn get(&self, agent: Agent) -> f64 {
        match agent {
            Agent::Child(c) => self.child[c],
            Agent::Family(f) => self.family[f],
        }
    }

    /// The lattice order: children's thresholds weakly higher and families'
    /// weakly lower in `other`.
    pub fn le_c(&self, other: &ThresholdProfile) -> bool {
        self.child.iter().zip(&other.child).all(|(a, b)| a <= b)
            && self.family.iter().zip(&other.family).all(|(a, b)| a >= b)
    }

    pub fn max_abs_diff(&self, other: &ThresholdProfile) -> f64 {
        self.child
            .iter()
            .zip(&other.child)
            .chain(self.family.iter().zip(&other.family))
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.child.iter().chain(&self.family).copied()
    }
}

impl From<&UtilityVector> for ThresholdProfile {
    fn from(u: &UtilityVector) -> Self {
        ThresholdProfile { child: u.child.clone(), family: u.family.clone() }
    }
}

fn check_thresholds(inst: &Instance, y: &ThresholdProfile) {
    assert!(
        y.child.len() == inst.n() && y.family.len() == inst.m(),
        "threshold profile has {} + {} entries, instance is {} x {}",
        y.child.len(),
        y.family.len(),
        inst.n(),
        inst.m()
    );
}

/// Profile in which every agent plays the CS threshold strategy of `y`.
pub fn induce_cs_profile(inst: &Instance, y: &ThresholdProfile) -> StrategyProfile {
    check_thresholds(inst, y);
    let prm = inst.params();
    let (n, m) = (inst.n(), inst.m());
    let mut s = StrategyProfile::uniform(inst, false);
    for c in 0..n {
        for f in 0..m {
            s.child_interest[(c, f)] = prm.p * (inst.v_child(c, f) - prm.delta_c * y.child[c]) >= prm.kappa_c;
            s.family_interest[(f, c)] = prm.p * (inst.v_family(f, c) - prm.delta_f * y.family[f]) >= prm.kappa_f;
        }
    }
    s
}

/// FS-induced profile together with the `β_cf` of that profile.
pub(crate) fn induce_fs_with_beta(inst: &Instance, y: &ThresholdProfile) -> (StrategyProfile, Matrix<f64>) {
    check_thresholds(inst, y);
    let prm = inst.params();
    let q = 1.0 - prm.p;
    let mut s = StrategyProfile::uniform(inst, false);
    let mut betas = Matrix::filled(inst.n(), inst.m(), 1.0);
    for c in 0..inst.n() {
        let mut beta = 1.0;
        for &f in inst.child_order(c) {
            betas[(c, f)] = beta;
            let family_in = beta * prm.p * (inst.v_family(f, c) - prm.delta_f * y.family[f]) >= prm.kappa_f;
            let child_in = beta * prm.p * (inst.v_child(c, f) - prm.delta_c * y.child[c]) >= prm.kappa_c;
            s.family_interest[(f, c)] = family_in;
            s.child_interest[(c, f)] = child_in;
            if family_in && child_in {
                beta *= q;
            }
        }
    }
    (s, betas)
}

/// Profile in which every agent plays the FS threshold strategy of `y`.
pub fn induce_fs_profile(inst: &Instance, y: &ThresholdProfile) -> StrategyProfile {
    induce_fs_with_beta(inst, y).0
}

pub fn induce_profile(inst: &Instance, y: &ThresholdProfile, regime: Regime) -> StrategyProfile {
    match regime {
        Regime::Fs => induce_fs_profile(inst, y),
        Regime::Cs => induce_cs_profile(inst, y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestResponseMethod {
    /// Value-ordered prefixes of the counterpart-interested agents.
    PrefixScan,
    /// All subsets of the counterpart-interested agents.
    SubsetEnumeration,
    /// Iterating the agent's own threshold until the induced set is stable.
    FsThresholdFixedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub interest: Vec<bool>,
    pub utility: f64,
    pub method: BestResponseMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BestResponseOptions {
    /// FS families with at most this many interested children are solved by
    /// enumerating subsets.
    pub subset_limit: usize,
}

impl Default for BestResponseOptions {
    fn default() -> Self {
        BestResponseOptions { subset_limit: 15 }
    }
}

/// Counterparts interested in `agent`, in decreasing order of `agent`'s value.
fn interested_counterparts(inst: &Instance, s: &StrategyProfile, agent: Agent) -> Vec<usize> {
    match agent {
        Agent::Child(c) => inst.child_order(c).iter().copied().filter(|&f| s.family(f, c)).collect(),
        Agent::Family(f) => inst.family_order(f).iter().copied().filter(|&c| s.child(c, f)).collect(),
    }
}

pub fn best_response(
    inst: &Instance,
    s: &StrategyProfile,
    agent: Agent,
    regime: Regime,
) -> Result<BestResponse, Error> {
    best_response_with(inst, s, agent, regime, BestResponseOptions::default())
}

/// An interest row maximising `agent`'s utility against the other rows of `s`.
///
/// Children (both regimes) and CS families have a best response among the
/// value-ordered prefixes of the agents interested in them. FS families do
/// not: competition from families a child prefers can make a top child not
/// worth the search cost, so their candidates are enumerated exhaustively or,
/// past `subset_limit`, found by iterating their own threshold. Equal
/// utilities resolve to the smaller set.
pub fn best_response_with(
    inst: &Instance,
    s: &StrategyProfile,
    agent: Agent,
    regime: Regime,
    opts: BestResponseOptions,
) -> Result<BestResponse, Error> {
    inst.check_agent(agent)?;
    if !s.fits(inst) {
        return Err(Error::Shape(alloc::format!(
            "profile is {} x {}, instance is {} x {}",
            s.n(),
            s.m(),
            inst.n(),
            inst.m()
        )));
    }
    let candidates = interested_counterparts(inst, s, agent);
    match (agent, regime) {
        (Agent::Family(f), Regime::Fs) if candidates.len() <= opts.subset_limit => {
            Ok(fs_family_enumerate(inst, s, f, &candidates))
        }
        (Agent::Family(f), Regime::Fs) => Ok(fs_family_fixed_point(inst, s, f, &candidates)),
        _ => Ok(prefix_scan(inst, s, agent, regime, &candidates)),
    }
}

fn prefix_scan(inst: &Instance, s: &StrategyProfile, agent: Agent, regime: Regime, candidates: &[usize]) -> BestResponse {
    let width = s.row(agent).len();
    let mut trial = s.with_row(agent, &vec![false; width]);
    let mut best_len = 0;
    let mut best = agent_utility(inst, &trial, regime, agent);
    for (k, &j) in candidates.iter().enumerate() {
        match agent {
            Agent::Child(c) => trial.child_interest[(c, j)] = true,
            Agent::Family(f) => trial.family_interest[(f, j)] = true,
        }
        let u = agent_utility(inst, &trial, regime, agent);
        if u > best {
            best = u;
            best_len = k + 1;
        }
    }
    let mut interest = vec![false; width];
    for &j in &candidates[..best_len] {
        interest[j] = true;
    }
    BestResponse { interest, utility: best, method: BestResponseMethod::PrefixScan }
}

/// `β_cf` of every candidate child; independent of `f`'s own row.
fn fs_family_betas(inst: &Instance, s: &StrategyProfile, f: usize, candidates: &[usize]) -> Vec<(usize, f64)> {
    let p = inst.params().p;
    let mut out: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&c| {
            let v = inst.v_child(c, f);
            let b = (0..inst.m()).filter(|&g| s.mutual(c, g) && inst.v_child(c, g) > v).count();
            (c, miss_probability(p, b))
        })
        .collect();
    // Same summation order as `utilities`.
    out.sort_by_key(|&(c, _)| c);
    out
}

fn fs_family_value(inst: &Instance, chosen: impl Iterator<Item = (usize, f64)>, f: usize) -> f64 {
    let prm = inst.params();
    let mut sums = Sums { numerator: 0.0, beta_sum: 0.0, count: 0 };
    for (c, b) in chosen {
        sums.numerator += term(Regime::Fs, b, prm.p, inst.v_family(f, c), prm.kappa_f);
        sums.beta_sum += b;
        sums.count += 1;
    }
    closed_form(&sums, inst.n(), prm.delta_f, prm.p)
}

fn fs_family_enumerate(inst: &Instance, s: &StrategyProfile, f: usize, candidates: &[usize]) -> BestResponse {
    let betas = fs_family_betas(inst, s, f, candidates);
    // Bit k of a mask selects `candidates[k]` (k-th most valued child).
    let rank = |c: usize| candidates.iter().position(|&x| x == c).unwrap_or(usize::MAX);
    let k = candidates.len();
    let mut best_mask = 0u64;
    let mut best = 0.0;
    for mask in 0u64..(1u64 << k) {
        let u = fs_family_value(inst, betas.iter().copied().filter(|&(c, _)| mask >> rank(c) & 1 == 1), f);
        if mask == 0 || u > best || (u == best && smaller_set(mask, best_mask, k)) {
            best = u;
            best_mask = mask;
        }
    }
    let mut interest = vec![false; inst.n()];
    for (bit, &c) in candidates.iter().enumerate() {
        interest[c] = best_mask >> bit & 1 == 1;
    }
    BestResponse { interest, utility: best, method: BestResponseMethod::SubsetEnumeration }
}

/// Fewer members first, then lexicographically smaller in decreasing-value
/// order.
fn smaller_set(a: u64, b: u64, k: usize) -> bool {
    if a.count_ones() != b.count_ones() {
        return a.count_ones() < b.count_ones();
    }
    for bit in 0..k {
        let (x, y) = (a >> bit & 1, b >> bit & 1);
        if x != y {
            return x < y;
        }
    }
    false
}

fn fs_family_fixed_point(inst: &Instance, s: &StrategyProfile, f: usize, candidates: &[usize]) -> BestResponse {
    let prm = inst.params();
    let betas = fs_family_betas(inst, s, f, candidates);
    let select = |z: f64| -> Vec<bool> {
        betas
            .iter()
            .map(|&(c, b)| b * prm.p * (inst.v_family(f, c) - prm.delta_f * z) >= prm.kappa_f)
            .collect()
    };
    let value = |sel: &[bool]| fs_family_value(inst, betas.iter().zip(sel).filter(|(_, &on)| on).map(|(x, _)| *x), f);
    // The utility of the threshold set at z is nondecreasing along the
    // iteration and the set sequence is finite, so this terminates.
    let mut z: f64 = 0.0;
    let mut sel = select(z);
    for _ in 0..10_000 {
        let next_z = value(&sel);
        let next_sel = select(next_z);
        let done = next_sel == sel || (next_z - z).abs() <= 1e-12;
        z = next_z;
        sel = next_sel;
        if done {
            break;
        }
    }
    let mut interest = vec![false; inst.n()];
    let mut utility = value(&sel);
    if utility > 0.0 {
        for (&(c, _), &on) in betas.iter().zip(&sel) {
            interest[c] = on;
        }
    } else {
        // The empty set attains 0 and is smaller.
        utility = 0.0;
    }
    BestResponse { interest, utility, method: BestResponseMethod::FsThresholdFixedPoint }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCheck {
    pub holds: bool,
    /// Largest gain any agent could get by deviating (may be negative noise).
    pub max_gap: f64,
    pub worst_agent: Option<Agent>,
}

/// Whether no agent can gain more than `tol` by changing its interest row.
pub fn is_equilibrium(inst: &Instance, s: &StrategyProfile, regime: Regime, tol: f64) -> EquilibriumCheck {
    let u = crate::utilities::utilities(inst, s, regime);
    let mut max_gap = f64::NEG_INFINITY;
    let mut worst_agent = None;
    for agent in inst.agents() {
        let br = best_response(inst, s, agent, regime).expect("agent ids come from the instance");
        let gap = br.utility - u.get(agent);
        if gap > max_gap {
            max_gap = gap;
            worst_agent = Some(agent);
        }
    }
    EquilibriumCheck { holds: max_gap <= tol, max_gap, worst_agent }
}

/// `β_cf` at the profile FS induces from `y`.
pub fn fs_betas(inst: &Instance, y: &ThresholdProfile) -> Matrix<f64> {
    induce_fs_with_beta(inst, y).1
}

/// `β_cf` at the profile CS induces from `y`.
pub fn cs_betas(inst: &Instance, y: &ThresholdProfile) -> Matrix<f64> {
    beta_matrix(inst, &induce_cs_profile(inst, y))
}
