//! Batch solving, aggregate statistics and parameter sweeps.

use adoptmatch_core::analysis::{check_theorem1, pareto_compare, regime_gap_at_thresholds, ParetoRelation, STRICTNESS_TOL};
use adoptmatch_core::equilibrium::{solve_equilibrium, EquilibriumResult, Side, SolveOptions};
use adoptmatch_core::utilities::welfare;
use adoptmatch_core::{Instance, Params, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// The four extremal equilibria of one instance.
#[derive(Debug, Clone)]
pub struct Equilibria {
    pub fs_co: EquilibriumResult,
    pub fs_fo: EquilibriumResult,
    pub cs_co: EquilibriumResult,
    pub cs_fo: EquilibriumResult,
}

impl Equilibria {
    pub fn solve(inst: &Instance, opts: SolveOptions) -> Self {
        let run = |regime, side| solve_equilibrium(inst, regime, side, opts);
        Equilibria {
            fs_co: run(Regime::Fs, Side::ChildOptimal),
            fs_fo: run(Regime::Fs, Side::FamilyOptimal),
            cs_co: run(Regime::Cs, Side::ChildOptimal),
            cs_fo: run(Regime::Cs, Side::FamilyOptimal),
        }
    }

    pub fn get(&self, regime: Regime, side: Side) -> &EquilibriumResult {
        match (regime, side) {
            (Regime::Fs, Side::ChildOptimal) => &self.fs_co,
            (Regime::Fs, Side::FamilyOptimal) => &self.fs_fo,
            (Regime::Cs, Side::ChildOptimal) => &self.cs_co,
            (Regime::Cs, Side::FamilyOptimal) => &self.cs_fo,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &EquilibriumResult> {
        [&self.fs_co, &self.fs_fo, &self.cs_co, &self.cs_fo].into_iter()
    }

    /// Number of (FSE, CSE) pairs in which FS Pareto-improves CS.
    pub fn theorem1_violations(&self) -> usize {
        let mut count = 0;
        for fse in [&self.fs_co, &self.fs_fo] {
            for cse in [&self.cs_co, &self.cs_fo] {
                count += check_theorem1(fse, cse, STRICTNESS_TOL).violated as usize;
            }
        }
        count
    }

    /// The `side` CSE Pareto-improves the `side` FSE.
    pub fn cs_improves_fs(&self, side: Side) -> bool {
        let verdict = pareto_compare(&self.get(Regime::Cs, side).utilities, &self.get(Regime::Fs, side).utilities, STRICTNESS_TOL);
        verdict.relation == ParetoRelation::LeftDominates
    }

    pub fn extremes_differ(&self, regime: Regime) -> bool {
        self.get(regime, Side::ChildOptimal).profile.matching_correspondence()
            != self.get(regime, Side::FamilyOptimal).profile.matching_correspondence()
    }

    pub fn all_converged(&self) -> bool {
        self.iter().all(|eq| eq.converged)
    }
}

/// Solves every instance in parallel; output order follows input order.
pub fn solve_batch(instances: &[Instance], opts: SolveOptions) -> Vec<Equilibria> {
    instances.par_iter().map(|inst| Equilibria::solve(inst, opts)).collect()
}

/// One row of `solve` and `experiment` output.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EquilibriumRow {
    pub instance: String,
    pub regime: &'static str,
    pub side: &'static str,
    pub avg_overall: f64,
    pub avg_child: f64,
    pub avg_family: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mutual_pairs: usize,
    pub max_deviation_gain: f64,
}

impl EquilibriumRow {
    pub fn new(instance: &str, eq: &EquilibriumResult) -> Self {
        let w = welfare(&eq.utilities);
        EquilibriumRow {
            instance: instance.to_string(),
            regime: eq.regime.as_str(),
            side: eq.side.as_str(),
            avg_overall: w.avg_overall,
            avg_child: w.avg_child,
            avg_family: w.avg_family,
            iterations: eq.iterations,
            converged: eq.converged,
            mutual_pairs: eq.profile.matching_correspondence().len(),
            max_deviation_gain: eq.max_deviation_gain,
        }
    }
}

/// Sample mean and standard error `sd / sqrt(k)`.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let k = xs.len();
    if k == 0 || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..k).map(|_| xs[rng.gen_range(0..k)]).sum::<f64>() / k as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    (at(tail), at(1.0 - tail))
}

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const BOOTSTRAP_LEVEL: f64 = 0.95;

/// Aggregate welfare of one (regime, side) over a batch.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AggregateRow {
    pub regime: &'static str,
    pub side: &'static str,
    pub instances: usize,
    pub overall_mean: f64,
    pub overall_se: f64,
    pub child_mean: f64,
    pub child_se: f64,
    pub family_mean: f64,
    pub family_se: f64,
}

pub fn aggregate(batch: &[Equilibria], regime: Regime, side: Side) -> AggregateRow {
    let w: Vec<_> = batch.iter().map(|e| welfare(&e.get(regime, side).utilities)).collect();
    let col = |f: fn(&adoptmatch_core::utilities::WelfareReport) -> f64| mean_stderr(&w.iter().map(f).collect::<Vec<_>>());
    let (overall_mean, overall_se) = col(|r| r.avg_overall);
    let (child_mean, child_se) = col(|r| r.avg_child);
    let (family_mean, family_se) = col(|r| r.avg_family);
    AggregateRow {
        regime: regime.as_str(),
        side: side.as_str(),
        instances: batch.len(),
        overall_mean,
        overall_se,
        child_mean,
        child_se,
        family_mean,
        family_se,
    }
}

/// Batch-level counts reported alongside the aggregates.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct ExperimentSummary {
    pub instances: usize,
    pub not_converged: usize,
    pub fs_co_ne_fo: usize,
    pub cs_co_ne_fo: usize,
    /// Instances where the fo-CSE Pareto-improves the fo-FSE.
    pub cs_improves_fs_fo: usize,
    /// Instances where the co-CSE Pareto-improves the co-FSE.
    pub cs_improves_fs_co: usize,
    /// (FSE, CSE) pairs in which FS Pareto-improves CS; must be 0.
    pub theorem1_violations: usize,
}

pub fn summarise(batch: &[Equilibria]) -> ExperimentSummary {
    ExperimentSummary {
        instances: batch.len(),
        not_converged: batch.iter().filter(|e| !e.all_converged()).count(),
        fs_co_ne_fo: batch.iter().filter(|e| e.extremes_differ(Regime::Fs)).count(),
        cs_co_ne_fo: batch.iter().filter(|e| e.extremes_differ(Regime::Cs)).count(),
        cs_improves_fs_fo: batch.iter().filter(|e| e.cs_improves_fs(Side::FamilyOptimal)).count(),
        cs_improves_fs_co: batch.iter().filter(|e| e.cs_improves_fs(Side::ChildOptimal)).count(),
        theorem1_violations: batch.iter().map(Equilibria::theorem1_violations).sum(),
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Kappa,
    Delta,
    P,
    Lambda,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Kappa => "kappa",
            SweepParam::Delta => "delta",
            SweepParam::P => "p",
            SweepParam::Lambda => "lambda",
        }
    }

    /// Overrides the swept parameter on both sides; `lambda` leaves `params` alone.
    pub fn apply(self, params: Params, value: f64) -> Params {
        match self {
            SweepParam::Kappa => Params { kappa_c: value, kappa_f: value, ..params },
            SweepParam::Delta => Params { delta_c: value, delta_f: value, ..params },
            SweepParam::P => Params { p: value, ..params },
            SweepParam::Lambda => params,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kappa" => Ok(SweepParam::Kappa),
            "delta" => Ok(SweepParam::Delta),
            "p" => Ok(SweepParam::P),
            "lambda" => Ok(SweepParam::Lambda),
            other => Err(format!("unknown sweep parameter {other:?}; expected kappa, delta, p or lambda")),
        }
    }
}

/// Per (value, instance, regime) row of a sweep at the equilibrium `side`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepRow {
    pub param: &'static str,
    pub value: f64,
    pub instance: String,
    pub regime: &'static str,
    pub side: &'static str,
    pub avg_overall: f64,
    pub avg_child: f64,
    pub avg_family: f64,
    pub mutual_pairs: usize,
    /// Largest per-agent `|u^FS − u^CS|` at the CSE thresholds of this side.
    pub regime_gap: f64,
    pub converged: bool,
}

/// Mean and bootstrap interval of one welfare column at one swept value.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepAggregateRow {
    pub param: &'static str,
    pub value: f64,
    pub regime: &'static str,
    pub metric: &'static str,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub const SWEEP_METRICS: [&str; 5] = ["avg_overall", "avg_child", "avg_family", "mutual_pairs", "regime_gap"];

/// Rows for one swept value over named instances that already carry it.
pub fn sweep_rows(param: SweepParam, value: f64, named: &[(String, Instance)], side: Side, opts: SolveOptions) -> Vec<SweepRow> {
    let per_instance: Vec<Vec<SweepRow>> = named
        .par_iter()
        .map(|(name, inst)| {
            let fse = solve_equilibrium(inst, Regime::Fs, side, opts);
            let cse = solve_equilibrium(inst, Regime::Cs, side, opts);
            let gap = regime_gap_at_thresholds(inst, &cse.thresholds);
            [fse, cse]
                .iter()
                .map(|eq| {
                    let w = welfare(&eq.utilities);
                    SweepRow {
                        param: param.as_str(),
                        value,
                        instance: name.clone(),
                        regime: eq.regime.as_str(),
                        side: side.as_str(),
                        avg_overall: w.avg_overall,
                        avg_child: w.avg_child,
                        avg_family: w.avg_family,
                        mutual_pairs: eq.profile.matching_correspondence().len(),
                        regime_gap: gap,
                        converged: eq.converged,
                    }
                })
                .collect()
        })
        .collect();
    per_instance.into_iter().flatten().collect()
}

/// Aggregates sweep rows per (value, regime, metric) in first-seen order.
pub fn sweep_aggregate(rows: &[SweepRow], seed: u64) -> Vec<SweepAggregateRow> {
    let mut keys: Vec<(f64, &'static str)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(v, g)| v == r.value && g == r.regime) {
            keys.push((r.value, r.regime));
        }
    }
    let mut out = Vec::new();
    for (k, &(value, regime)) in keys.iter().enumerate() {
        let group: Vec<&SweepRow> = rows.iter().filter(|r| r.value == value && r.regime == regime).collect();
        for (j, metric) in SWEEP_METRICS.iter().enumerate() {
            let xs: Vec<f64> = group
                .iter()
                .map(|r| match *metric {
                    "avg_overall" => r.avg_overall,
                    "avg_child" => r.avg_child,
                    "avg_family" => r.avg_family,
                    "mutual_pairs" => r.mutual_pairs as f64,
                    _ => r.regime_gap,
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let stream = seed.wrapping_add((k * SWEEP_METRICS.len() + j) as u64);
            let (ci_low, ci_high) = bootstrap_ci(&xs, BOOTSTRAP_RESAMPLES, BOOTSTRAP_LEVEL, stream);
            out.push(SweepAggregateRow { param: rows[0].param, value, regime, metric, mean, ci_low, ci_high });
        }
    }
    out
}
