//! Extremal equilibria by monotone iteration of the threshold map.
//!
//! The threshold map `T` sends a profile `y ∈ [0, v̄]^{n+m}` to the utilities
//! each agent would obtain by best responding, with reservation value `y`, to
//! the profile induced by `y`. `T` is monotone in the lattice order
//! ([`ThresholdProfile::le_c`]), so iterating from the bottom element
//! (`y_c = 0`, `y_f = v̄`) climbs to the family-optimal equilibrium and
//! iterating from the top (`y_c = v̄`, `y_f = 0`) descends to the child-optimal
//! one.

use alloc::vec::Vec;
use core::fmt;

use crate::model::{Instance, Regime, StrategyProfile};
use crate::strategies::{induce_cs_profile, induce_fs_with_beta, induce_profile, is_equilibrium, ThresholdProfile};
use crate::utilities::{beta_matrix, utilities, UtilityVector};
use crate::Matrix;

/// Which end of the equilibrium lattice to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    ChildOptimal,
    FamilyOptimal,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::ChildOptimal, Side::FamilyOptimal];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::ChildOptimal => "co",
            Side::FamilyOptimal => "fo",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[inline]
fn pos(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// One application of the threshold map.
pub fn t_map(inst: &Instance, y: &ThresholdProfile, regime: Regime) -> ThresholdProfile {
    let prm = inst.params();
    let (n, m) = (inst.n(), inst.m());
    let nf = n as f64;
    let (s, betas): (StrategyProfile, Matrix<f64>) = match regime {
        Regime::Fs => induce_fs_with_beta(inst, y),
        Regime::Cs => {
            let s = induce_cs_profile(inst, y);
            let b = beta_matrix(inst, &s);
            (s, b)
        }
    };
    // Per-pair gain of the child and the family, given the other side's
    // indicator already holds.
    let gain = |b: f64, value: f64, delta: f64, own: f64, kappa: f64| match regime {
        Regime::Fs => pos(b * prm.p * (value - delta * own) - kappa),
        Regime::Cs => b * pos(prm.p * (value - delta * own) - kappa),
    };
    let mut child = Vec::with_capacity(n);
    for c in 0..n {
        let yc = y.child[c];
        let sum: f64 = (0..m)
            .filter(|&f| s.family(f, c))
            .map(|f| gain(betas[(c, f)], inst.v_child(c, f), prm.delta_c, yc, prm.kappa_c))
            .sum();
        child.push(prm.delta_c * yc + sum / nf);
    }
    let mut family = Vec::with_capacity(m);
    for f in 0..m {
        let yf = y.family[f];
        let sum: f64 = (0..n)
            .filter(|&c| s.child(c, f))
            .map(|c| gain(betas[(c, f)], inst.v_family(f, c), prm.delta_f, yf, prm.kappa_f))
            .sum();
        family.push(prm.delta_f * yf + sum / nf);
    }
    ThresholdProfile { child, family }
}

/// Bottom (family-optimal start) or top (child-optimal start) of `[0, v̄]^{n+m}`.
pub fn lattice_extreme(inst: &Instance, side: Side) -> ThresholdProfile {
    let v_bar = inst.v_bar();
    match side {
        Side::FamilyOptimal => ThresholdProfile::constant(inst.n(), inst.m(), 0.0, v_bar),
        Side::ChildOptimal => ThresholdProfile::constant(inst.n(), inst.m(), v_bar, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once every coordinate moves by at most this much.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Tolerance of the best-response check on the polished profile.
    pub verify_tol: f64,
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { epsilon: 1e-10, max_iter: 1_000_000, verify_tol: 1e-8, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub regime: Regime,
    pub side: Side,
    /// Exact utilities of `profile`, used as thresholds.
    pub thresholds: ThresholdProfile,
    pub profile: StrategyProfile,
    pub utilities: UtilityVector,
    /// Applications of the threshold map, summed over reruns.
    pub iterations: usize,
    /// The epsilon criterion was met and the polished profile verified.
    pub converged: bool,
    /// Largest gain any agent could get by deviating from `profile`.
    pub max_deviation_gain: f64,
    /// Iterates `y^0, y^1, ...` of the last run, when requested.
    pub trace: Option<Vec<ThresholdProfile>>,
}

struct Run {
    y: ThresholdProfile,
    iterations: usize,
    criterion_met: bool,
    trace: Option<Vec<ThresholdProfile>>,
}

fn iterate(inst: &Instance, regime: Regime, side: Side, epsilon: f64, opts: &SolveOptions) -> Run {
    let mut y = lattice_extreme(inst, side);
    let mut trace = opts.record_trace.then(|| alloc::vec![y.clone()]);
    let mut iterations = 0;
    let mut criterion_met = false;
    while iterations < opts.max_iter {
        let next = t_map(inst, &y, regime);
        iterations += 1;
        let step = next.max_abs_diff(&y);
        y = next;
        if let Some(t) = trace.as_mut() {
            t.push(y.clone());
        }
        if step <= epsilon {
            criterion_met = true;
            break;
        }
    }
    Run { y, iterations, criterion_met, trace }
}

/// Rounds of re-inducing the profile from exact utilities. Knife-edge
/// indicators whose limit threshold is hit exactly (e.g. a family whose best
/// partner is worth exactly `κ_F / p`) are only reached here, never by the
/// epsilon-stopped iterate.
const POLISH_ROUNDS: usize = 4;

fn polish(inst: &Instance, y: &ThresholdProfile, regime: Regime) -> (StrategyProfile, UtilityVector, bool) {
    let mut profile = induce_profile(inst, y, regime);
    let mut u = utilities(inst, &profile, regime);
    for _ in 0..POLISH_ROUNDS {
        let next = induce_profile(inst, &ThresholdProfile::from(&u), regime);
        if next == profile {
            return (profile, u, true);
        }
        profile = next;
        u = utilities(inst, &profile, regime);
    }
    (profile, u, false)
}

/// Computes the child- or family-optimal equilibrium of `regime`.
///
/// After the epsilon-stopped iteration the induced profile is polished: exact
/// utilities replace the iterate as thresholds until they re-induce the same
/// profile, which is then checked to admit no profitable deviation. A failed check
/// triggers one rerun with `epsilon / 100`; if that also fails the result
/// carries `converged = false`.
pub fn solve_equilibrium(inst: &Instance, regime: Regime, side: Side, opts: SolveOptions) -> EquilibriumResult {
    assert!(opts.epsilon > 0.0, "epsilon must be positive");
    let mut total_iterations = 0;
    let mut epsilon = opts.epsilon;
    let mut attempt = 0;
    loop {
        let run = iterate(inst, regime, side, epsilon, &opts);
        total_iterations += run.iterations;
        let (profile, u, consistent) = polish(inst, &run.y, regime);
        let thresholds = ThresholdProfile::from(&u);
        let check = is_equilibrium(inst, &profile, regime, opts.verify_tol);
        let verified = consistent && check.holds;
        attempt += 1;
        if (run.criterion_met && verified) || attempt == 2 || !run.criterion_met {
            return EquilibriumResult {
                regime,
                side,
                thresholds,
                profile,
                utilities: u,
                iterations: total_iterations,
                converged: run.criterion_met && verified,
                max_deviation_gain: check.max_gap,
                trace: run.trace,
            };
        }
        epsilon /= 100.0;
    }
}
