//! Comparisons between equilibria of the two search technologies.

use alloc::vec;
use alloc::vec::Vec;

use crate::equilibrium::{solve_equilibrium, EquilibriumResult, Side, SolveOptions};
use crate::model::{Agent, Instance, MatchingCorrespondence, Params, Regime};
use crate::strategies::{induce_fs_profile, induce_cs_profile, ThresholdProfile};
use crate::utilities::{utilities, UtilityVector};

/// Default margin separating a strict improvement from numerical noise.
pub const STRICTNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParetoRelation {
    LeftDominates,
    RightDominates,
    Equal,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoVerdict {
    pub relation: ParetoRelation,
    /// Agents strictly better off under the left vector.
    pub left_better: Vec<Agent>,
    /// Agents strictly better off under the right vector.
    pub right_better: Vec<Agent>,
}

/// Componentwise comparison; differences within `tol` count as equal.
pub fn pareto_compare(left: &UtilityVector, right: &UtilityVector, tol: f64) -> ParetoVerdict {
    assert_eq!(left.child.len(), right.child.len(), "child dimension mismatch");
    assert_eq!(left.family.len(), right.family.len(), "family dimension mismatch");
    let mut left_better = Vec::new();
    let mut right_better = Vec::new();
    for ((agent, l), (_, r)) in left.iter().zip(right.iter()) {
        if l > r + tol {
            left_better.push(agent);
        } else if r > l + tol {
            right_better.push(agent);
        }
    }
    let relation = match (left_better.is_empty(), right_better.is_empty()) {
        (true, true) => ParetoRelation::Equal,
        (false, true) => ParetoRelation::LeftDominates,
        (true, false) => ParetoRelation::RightDominates,
        (false, false) => ParetoRelation::Incomparable,
    };
    ParetoVerdict { relation, left_better, right_better }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Check {
    /// Someone is strictly better off in FS and nobody strictly worse.
    pub violated: bool,
    pub fs_better: Vec<Agent>,
    pub fs_worse: Vec<Agent>,
}

/// Checks that an FS equilibrium never Pareto-improves on a CS equilibrium.
pub fn check_theorem1(fse: &EquilibriumResult, cse: &EquilibriumResult, tol: f64) -> Theorem1Check {
    assert_eq!(fse.regime, Regime::Fs, "left argument must be an FS equilibrium");
    assert_eq!(cse.regime, Regime::Cs, "right argument must be a CS equilibrium");
    let verdict = pareto_compare(&fse.utilities, &cse.utilities, tol);
    Theorem1Check {
        violated: verdict.relation == ParetoRelation::LeftDominates,
        fs_better: verdict.left_better,
        fs_worse: verdict.right_better,
    }
}

/// Children whose FS mutual set is contained in their CS mutual set but who
/// are nonetheless more than `tol` better off in FS. Should always be empty.
pub fn same_matches_violations(fse: &EquilibriumResult, cse: &EquilibriumResult, tol: f64) -> Vec<usize> {
    let m_fs = fse.profile.matching_correspondence();
    let m_cs = cse.profile.matching_correspondence();
    (0..fse.utilities.child.len())
        .filter(|&c| m_fs.families_of(c).iter().all(|&f| m_cs.contains(c, f)))
        .filter(|&c| fse.utilities.child[c] > cse.utilities.child[c] + tol)
        .collect()
}

/// Pairs mutual in FS but not in CS where neither partner is strictly worse
/// off in FS. Should always be empty.
pub fn additional_match_violations(
    fse: &EquilibriumResult,
    cse: &EquilibriumResult,
    tol: f64,
) -> Vec<(usize, usize)> {
    let m_fs = fse.profile.matching_correspondence();
    let m_cs = cse.profile.matching_correspondence();
    m_fs.pairs()
        .into_iter()
        .filter(|&(c, f)| !m_cs.contains(c, f))
        .filter(|&(c, f)| {
            let child_worse = fse.utilities.child[c] < cse.utilities.child[c] - tol;
            let family_worse = fse.utilities.family[f] < cse.utilities.family[f] - tol;
            !(child_worse || family_worse)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Popularity {
    pub children: Vec<usize>,
    pub families: Vec<usize>,
}

/// A child is popular when he is the top choice of every family mutually
/// interested in him in the child-optimal FS equilibrium; families likewise
/// with the family-optimal FS equilibrium.
pub fn popular_agents(inst: &Instance, co_fse: &EquilibriumResult, fo_fse: &EquilibriumResult) -> Popularity {
    let m_co = co_fse.profile.matching_correspondence();
    let m_fo = fo_fse.profile.matching_correspondence();
    let children = (0..inst.n())
        .filter(|&c| m_co.families_of(c).iter().all(|&f| inst.family_order(f)[0] == c))
        .collect();
    let families = (0..inst.m())
        .filter(|&f| m_fo.children_of(f).iter().all(|&c| inst.child_order(c)[0] == f))
        .collect();
    Popularity { children, families }
}

/// Static marriage market with the instance's rankings, truncated where the
/// expected value of a match no longer covers the search cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarriageMarket {
    /// Acceptable families per child, most preferred first.
    pub child_prefs: Vec<Vec<usize>>,
    /// Acceptable children per family, most preferred first.
    pub family_prefs: Vec<Vec<usize>>,
}

pub fn induced_marriage_market(inst: &Instance) -> MarriageMarket {
    let prm = inst.params();
    let child_prefs = (0..inst.n())
        .map(|c| inst.child_order(c).iter().copied().filter(|&f| prm.p * inst.v_child(c, f) >= prm.kappa_c).collect())
        .collect();
    let family_prefs = (0..inst.m())
        .map(|f| {
            inst.family_order(f).iter().copied().filter(|&c| prm.p * inst.v_family(f, c) >= prm.kappa_f).collect()
        })
        .collect();
    MarriageMarket { child_prefs, family_prefs }
}

impl MarriageMarket {
    pub fn n(&self) -> usize {
        self.child_prefs.len()
    }

    pub fn m(&self) -> usize {
        self.family_prefs.len()
    }

    fn child_rank(&self, c: usize, f: usize) -> Option<usize> {
        self.child_prefs[c].iter().position(|&x| x == f)
    }

    fn family_rank(&self, f: usize, c: usize) -> Option<usize> {
        self.family_prefs[f].iter().position(|&x| x == c)
    }
}

/// One-to-one partial assignment between children and families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StableMatching {
    pub child_partner: Vec<Option<usize>>,
    pub family_partner: Vec<Option<usize>>,
}

impl StableMatching {
    pub fn empty(n: usize, m: usize) -> Self {
        StableMatching { child_partner: vec![None; n], family_partner: vec![None; m] }
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.child_partner.iter().enumerate().filter_map(|(c, f)| f.map(|f| (c, f))).collect()
    }

    pub fn to_correspondence(&self) -> MatchingCorrespondence {
        MatchingCorrespondence::from_pairs(self.child_partner.len(), self.family_partner.len(), &self.pairs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposers {
    Children,
    Families,
}

/// Deferred acceptance with the given side proposing.
pub fn deferred_acceptance(mm: &MarriageMarket, proposers: Proposers) -> StableMatching {
    let (props, recv): (&Vec<Vec<usize>>, &Vec<Vec<usize>>) = match proposers {
        Proposers::Children => (&mm.child_prefs, &mm.family_prefs),
        Proposers::Families => (&mm.family_prefs, &mm.child_prefs),
    };
    let mut next = vec![0usize; props.len()];
    let mut holds: Vec<Option<usize>> = vec![None; recv.len()];
    let mut free: Vec<usize> = (0..props.len()).rev().collect();
    while let Some(i) = free.pop() {
        let Some(&j) = props[i].get(next[i]) else { continue };
        next[i] += 1;
        let Some(rank_i) = recv[j].iter().position(|&x| x == i) else {
            free.push(i);
            continue;
        };
        match holds[j] {
            None => holds[j] = Some(i),
            Some(k) => {
                let rank_k = recv[j].iter().position(|&x| x == k).expect("held proposer is acceptable");
                if rank_i < rank_k {
                    holds[j] = Some(i);
                    free.push(k);
                } else {
                    free.push(i);
                }
            }
        }
    }
    let mut out = StableMatching::empty(mm.n(), mm.m());
    for (j, held) in holds.iter().enumerate() {
        if let Some(i) = *held {
            let (c, f) = match proposers {
                Proposers::Children => (i, j),
                Proposers::Families => (j, i),
            };
            out.child_partner[c] = Some(f);
            out.family_partner[f] = Some(c);
        }
    }
    out
}

/// Child-optimal and family-optimal stable matchings.
pub fn stable_matchings(mm: &MarriageMarket) -> (StableMatching, StableMatching) {
    (deferred_acceptance(mm, Proposers::Children), deferred_acceptance(mm, Proposers::Families))
}

/// Pairs that are mutually acceptable and prefer each other to their current
/// assignment, plus any matched pair that is not mutually acceptable (reported
/// as `(c, f)` with the offending partner).
pub fn blocking_pairs(mm: &MarriageMarket, w: &StableMatching) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (c, f) in w.pairs() {
        if mm.child_rank(c, f).is_none() || mm.family_rank(f, c).is_none() {
            out.push((c, f));
        }
    }
    for c in 0..mm.n() {
        for (rc, &f) in mm.child_prefs[c].iter().enumerate() {
            let Some(rf) = mm.family_rank(f, c) else { continue };
            if w.child_partner[c] == Some(f) {
                continue;
            }
            let child_prefers = match w.child_partner[c] {
                None => true,
                Some(g) => mm.child_rank(c, g).is_none_or(|r| rc < r),
            };
            let family_prefers = match w.family_partner[f] {
                None => true,
                Some(d) => mm.family_rank(f, d).is_none_or(|r| rf < r),
            };
            if child_prefers && family_prefers {
                out.push((c, f));
            }
        }
    }
    out
}

pub fn is_stable(mm: &MarriageMarket, w: &StableMatching) -> bool {
    blocking_pairs(mm, w).is_empty()
}

/// Largest per-agent gap `|u^FS(s^FS(y)) − u^CS(s^CS(y))|` at a common
/// threshold profile.
pub fn regime_gap_at_thresholds(inst: &Instance, y: &ThresholdProfile) -> f64 {
    let fs = utilities(inst, &induce_fs_profile(inst, y), Regime::Fs);
    let cs = utilities(inst, &induce_cs_profile(inst, y), Regime::Cs);
    fs.iter().zip(cs.iter()).fold(0.0, |acc, ((_, a), (_, b))| acc.max((a - b).abs()))
}

/// Extremal equilibria at one discount factor, compared with the induced
/// marriage market.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPoint {
    pub delta: f64,
    /// Every extremal correspondence gives each agent at most one partner.
    pub all_matchings: bool,
    /// Child-optimal correspondences of both regimes equal the child-optimal
    /// stable matching, family-optimal ones the family-optimal stable matching.
    pub coincides_with_stable: bool,
    /// Child- and family-optimal correspondences agree within each regime.
    pub unique_per_regime: bool,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLimitReport {
    pub points: Vec<DeltaPoint>,
    /// Smallest grid value from which the coincidence holds at every larger
    /// grid value. Exhibited on the grid only.
    pub exhibited_threshold: Option<f64>,
}

/// Ties `δ_C = δ_F = δ` for every grid value and compares the extremal FS and
/// CS equilibrium correspondences with the stable matchings.
pub fn delta_limit_check(inst: &Instance, delta_grid: &[f64], opts: SolveOptions) -> DeltaLimitReport {
    let mm = induced_marriage_market(inst);
    let (child_opt, family_opt) = stable_matchings(&mm);
    let child_opt = child_opt.to_correspondence();
    let family_opt = family_opt.to_correspondence();
    let mut grid: Vec<f64> = delta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let points: Vec<DeltaPoint> = grid
        .iter()
        .map(|&delta| {
            let params = Params { delta_c: delta, delta_f: delta, ..*inst.params() };
            let at = inst.with_params(params);
            let mut all_matchings = true;
            let mut coincides = true;
            let mut unique = true;
            let mut converged = true;
            for regime in Regime::ALL {
                let co = solve_equilibrium(&at, regime, Side::ChildOptimal, opts);
                let fo = solve_equilibrium(&at, regime, Side::FamilyOptimal, opts);
                let (m_co, m_fo) = (co.profile.matching_correspondence(), fo.profile.matching_correspondence());
                all_matchings &= m_co.is_matching() && m_fo.is_matching();
                coincides &= m_co == child_opt && m_fo == family_opt;
                unique &= m_co == m_fo;
                converged &= co.converged && fo.converged;
            }
            DeltaPoint {
                delta,
                all_matchings,
                coincides_with_stable: all_matchings && coincides,
                unique_per_regime: unique,
                all_converged: converged,
            }
        })
        .collect();
    let mut exhibited_threshold = None;
    for point in points.iter().rev() {
        if point.coincides_with_stable {
            exhibited_threshold = Some(point.delta);
        } else {
            break;
        }
    }
    DeltaLimitReport { points, exhibited_threshold }
}
