//! Instances, strategy profiles and matching correspondences.
//!
//! Indices are 0-based: child types are `0..n`, family types `0..m`. Values are
//! measured against an outside option normalised to 0.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Matrix};

/// Scalar parameters shared by all agent types of one side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub delta_c: f64,
    pub delta_f: f64,
    pub kappa_c: f64,
    pub kappa_f: f64,
    /// Probability that an investigated pair turns out to be a successful match.
    pub p: f64,
}

impl Params {
    /// Same discount factor and search cost on both sides.
    pub fn symmetric(delta: f64, kappa: f64, p: f64) -> Self {
        Params { delta_c: delta, delta_f: delta, kappa_c: kappa, kappa_f: kappa, p }
    }
}

/// Which search technology drives the market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    /// Family-driven search: every interested family is investigated at once.
    Fs,
    /// Caseworker-driven search: families are investigated one by one in
    /// decreasing order of the child's value, stopping at the first success.
    Cs,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Fs, Regime::Cs];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Fs => "FS",
            Regime::Cs => "CS",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A child type or a family type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Agent {
    Child(usize),
    Family(usize),
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agent::Child(c) => write!(f, "c{c}"),
            Agent::Family(x) => write!(f, "f{x}"),
        }
    }
}

/// One adoption game: valuations of both sides plus the scalar parameters.
///
/// Preference orders (counterparts sorted by decreasing value) are computed
/// once at construction since every solver walks them repeatedly.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    v_child: Matrix<f64>,
    v_family: Matrix<f64>,
    params: Params,
    child_order: Matrix<usize>,
    family_order: Matrix<usize>,
}

fn descending_orders(values: &Matrix<f64>) -> Matrix<usize> {
    let mut orders = Matrix::filled(values.rows(), values.cols(), 0usize);
    for r in 0..values.rows() {
        let row = values.row(r);
        let order = orders.row_mut(r);
        for (k, slot) in order.iter_mut().enumerate() {
            *slot = k;
        }
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    }
    orders
}

impl Instance {
    /// `v_child` is `n x m` (`v_child[c][f]` is child `c`'s value for family
    /// `f`), `v_family` is `m x n`. Only the shapes are checked here; use
    /// [`validate_instance`] for the modelling assumptions.
    pub fn new(v_child: Matrix<f64>, v_family: Matrix<f64>, params: Params) -> Result<Self, Error> {
        let (n, m) = (v_child.rows(), v_child.cols());
        if n == 0 || m == 0 {
            return Err(Error::Shape(format!("need at least one type per side, got {n} x {m}")));
        }
        if v_family.rows() != m || v_family.cols() != n {
            return Err(Error::Shape(format!(
                "v_family is {} x {}, expected {m} x {n}",
                v_family.rows(),
                v_family.cols()
            )));
        }
        let child_order = descending_orders(&v_child);
        let family_order = descending_orders(&v_family);
        Ok(Instance { v_child, v_family, params, child_order, family_order })
    }

    pub fn from_rows(v_child: &[Vec<f64>], v_family: &[Vec<f64>], params: Params) -> Result<Self, Error> {
        Instance::new(Matrix::from_rows(v_child)?, Matrix::from_rows(v_family)?, params)
    }

    /// Same valuations under different parameters.
    pub fn with_params(&self, params: Params) -> Instance {
        Instance { params, ..self.clone() }
    }

    pub fn n(&self) -> usize {
        self.v_child.rows()
    }

    pub fn m(&self) -> usize {
        self.v_child.cols()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Child `c`'s value for family `f`.
    #[inline]
    pub fn v_child(&self, c: usize, f: usize) -> f64 {
        self.v_child[(c, f)]
    }

    /// Family `f`'s value for child `c`.
    #[inline]
    pub fn v_family(&self, f: usize, c: usize) -> f64 {
        self.v_family[(f, c)]
    }

    pub fn child_values(&self) -> &Matrix<f64> {
        &self.v_child
    }

    pub fn family_values(&self) -> &Matrix<f64> {
        &self.v_family
    }

    /// Families sorted by decreasing value for child `c`.
    #[inline]
    pub fn child_order(&self, c: usize) -> &[usize] {
        self.child_order.row(c)
    }

    /// Children sorted by decreasing value for family `f`.
    #[inline]
    pub fn family_order(&self, f: usize) -> &[usize] {
        self.family_order.row(f)
    }

    /// Largest valuation in the instance, and never below the outside option.
    pub fn v_bar(&self) -> f64 {
        self.v_child.iter().chain(self.v_family.iter()).fold(0.0, |acc, &v| acc.max(v))
    }

    pub fn agents(&self) -> impl Iterator<Item = Agent> {
        let (n, m) = (self.n(), self.m());
        (0..n).map(Agent::Child).chain((0..m).map(Agent::Family))
    }

    pub(crate) fn check_agent(&self, agent: Agent) -> Result<(), Error> {
        let (index, len) = match agent {
            Agent::Child(c) => (c, self.n()),
            Agent::Family(f) => (f, self.m()),
        };
        if index < len {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index, len })
        }
    }
}

/// A single broken modelling assumption.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ChildRowNotStrict { child: usize },
    FamilyRowNotStrict { family: usize },
    NonFiniteValue { what: String },
    DeltaOutOfRange { side: &'static str, value: f64 },
    KappaNegative { side: &'static str, value: f64 },
    POutOfRange { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ChildRowNotStrict { child } => write!(f, "row-strictness child {child}"),
            Violation::FamilyRowNotStrict { family } => write!(f, "row-strictness family {family}"),
            Violation::NonFiniteValue { what } => write!(f, "non-finite {what}"),
            Violation::DeltaOutOfRange { side, value } => write!(f, "delta_{side} = {value} out of [0,1)"),
            Violation::KappaNegative { side, value } => write!(f, "kappa_{side} = {value} negative"),
            Violation::POutOfRange { value } => write!(f, "p out of (0,1): {value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn row_is_strict(row: &[f64]) -> bool {
    row.iter().enumerate().all(|(i, a)| row[i + 1..].iter().all(|b| a != b))
}

/// Checks every modelling assumption and lists all that fail.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut violations = Vec::new();
    for c in 0..inst.n() {
        let row = inst.v_child.row(c);
        if row.iter().any(|v| !v.is_finite()) {
            violations.push(Violation::NonFiniteValue { what: format!("value in child row {c}") });
        }
        if !row_is_strict(row) {
            violations.push(Violation::ChildRowNotStrict { child: c });
        }
    }
    for f in 0..inst.m() {
        let row = inst.v_family.row(f);
        if row.iter().any(|v| !v.is_finite()) {
            violations.push(Violation::NonFiniteValue { what: format!("value in family row {f}") });
        }
        if !row_is_strict(row) {
            violations.push(Violation::FamilyRowNotStrict { family: f });
        }
    }
    let p = inst.params;
    for (side, delta) in [("C", p.delta_c), ("F", p.delta_f)] {
        if !(0.0..1.0).contains(&delta) {
            violations.push(Violation::DeltaOutOfRange { side, value: delta });
        }
    }
    for (side, kappa) in [("C", p.kappa_c), ("F", p.kappa_f)] {
        if !kappa.is_finite() {
            violations.push(Violation::NonFiniteValue { what: format!("kappa_{side}") });
        } else if kappa < 0.0 {
            violations.push(Violation::KappaNegative { side, value: kappa });
        }
    }
    if !(p.p > 0.0 && p.p < 1.0) {
        violations.push(Violation::POutOfRange { value: p.p });
    }
    ValidationReport { violations }
}

/// Bilateral interest indicators of every child and family type.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    /// `n x m`; entry `(c, f)` is whether child `c` is interested in family `f`.
    pub child_interest: Matrix<bool>,
    /// `m x n`; entry `(f, c)` is whether family `f` is interested in child `c`.
    pub family_interest: Matrix<bool>,
}

impl StrategyProfile {
    pub fn new(child_interest: Matrix<bool>, family_interest: Matrix<bool>) -> Result<Self, Error> {
        let (n, m) = (child_interest.rows(), child_interest.cols());
        if family_interest.rows() != m || family_interest.cols() != n {
            return Err(Error::Shape(format!(
                "family interest is {} x {}, expected {m} x {n}",
                family_interest.rows(),
                family_interest.cols()
            )));
        }
        Ok(StrategyProfile { child_interest, family_interest })
    }

    pub fn uniform(inst: &Instance, interested: bool) -> Self {
        let (n, m) = (inst.n(), inst.m());
        StrategyProfile {
            child_interest: Matrix::filled(n, m, interested),
            family_interest: Matrix::filled(m, n, interested),
        }
    }

    pub fn n(&self) -> usize {
        self.child_interest.rows()
    }

    pub fn m(&self) -> usize {
        self.child_interest.cols()
    }

    pub fn fits(&self, inst: &Instance) -> bool {
        self.n() == inst.n() && self.m() == inst.m()
    }

    #[inline]
    pub fn child(&self, c: usize, f: usize) -> bool {
        self.child_interest[(c, f)]
    }

    #[inline]
    pub fn family(&self, f: usize, c: usize) -> bool {
        self.family_interest[(f, c)]
    }

    #[inline]
    pub fn mutual(&self, c: usize, f: usize) -> bool {
        self.child_interest[(c, f)] && self.family_interest[(f, c)]
    }

    /// The strategy row of `agent`.
    pub fn row(&self, agent: Agent) -> &[bool] {
        match agent {
            Agent::Child(c) => self.child_interest.row(c),
            Agent::Family(f) => self.family_interest.row(f),
        }
    }

    /// Copy of the profile with `agent`'s row replaced.
    pub fn with_row(&self, agent: Agent, row: &[bool]) -> StrategyProfile {
        let mut out = self.clone();
        let target = match agent {
            Agent::Child(c) => out.child_interest.row_mut(c),
            Agent::Family(f) => out.family_interest.row_mut(f),
        };
        target.copy_from_slice(row);
        out
    }

    pub fn matching_correspondence(&self) -> MatchingCorrespondence {
        matching_correspondence(self)
    }
}

/// Set of mutually interested pairs `M(s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingCorrespondence {
    mutual: Matrix<bool>,
}

/// Extracts the mutually interested pairs of a profile.
pub fn matching_correspondence(s: &StrategyProfile) -> MatchingCorrespondence {
    let (n, m) = (s.n(), s.m());
    let mut mutual = Matrix::filled(n, m, false);
    for c in 0..n {
        for f in 0..m {
            mutual[(c, f)] = s.mutual(c, f);
        }
    }
    MatchingCorrespondence { mutual }
}

impl MatchingCorrespondence {
    /// Builds a correspondence on `n x m` types from explicit pairs.
    pub fn from_pairs(n: usize, m: usize, pairs: &[(usize, usize)]) -> Self {
        let mut mutual = Matrix::filled(n, m, false);
        for &(c, f) in pairs {
            mutual[(c, f)] = true;
        }
        MatchingCorrespondence { mutual }
    }

    pub fn contains(&self, c: usize, f: usize) -> bool {
        self.mutual[(c, f)]
    }

    /// Pairs in lexicographic `(child, family)` order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for c in 0..self.mutual.rows() {
            for f in 0..self.mutual.cols() {
                if self.mutual[(c, f)] {
                    out.push((c, f));
                }
            }
        }
        out
    }

    /// `M_c(s)`.
    pub fn families_of(&self, c: usize) -> Vec<usize> {
        (0..self.mutual.cols()).filter(|&f| self.mutual[(c, f)]).collect()
    }

    /// `M_f(s)`.
    pub fn children_of(&self, f: usize) -> Vec<usize> {
        (0..self.mutual.rows()).filter(|&c| self.mutual[(c, f)]).collect()
    }

    pub fn partners(&self, agent: Agent) -> Vec<usize> {
        match agent {
            Agent::Child(c) => self.families_of(c),
            Agent::Family(f) => self.children_of(f),
        }
    }

    pub fn len(&self) -> usize {
        self.mutual.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when every agent has at most one mutual partner.
    pub fn is_matching(&self) -> bool {
        let rows_ok = (0..self.mutual.rows()).all(|c| self.families_of(c).len() <= 1);
        let cols_ok = (0..self.mutual.cols()).all(|f| self.children_of(f).len() <= 1);
        rows_ok && cols_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn base() -> Params {
        Params::symmetric(0.5, 0.1, 0.5)
    }

    fn two_by_two(params: Params) -> Instance {
        Instance::from_rows(&[vec![1.0, 0.3], vec![0.2, 0.9]], &[vec![0.7, 0.1], vec![0.4, 0.8]], params)
            .unwrap()
    }

    #[test]
    fn valid_two_by_two() {
        assert!(validate_instance(&two_by_two(base())).is_ok());
    }

    #[test]
    fn tied_child_row_is_reported() {
        let inst = Instance::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.9]], &[vec![0.7, 0.1], vec![0.4, 0.8]], base())
            .unwrap();
        let report = validate_instance(&inst);
        assert_eq!(report.violations, vec![Violation::ChildRowNotStrict { child: 0 }]);
        assert_eq!(report.violations[0].to_string(), "row-strictness child 0");
    }

    #[test]
    fn p_equal_one_is_reported() {
        let report = validate_instance(&two_by_two(Params { p: 1.0, ..base() }));
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].to_string().starts_with("p out of (0,1)"));
    }

    #[test]
    fn every_parameter_violation_named() {
        let params = Params { delta_c: 1.0, delta_f: -0.1, kappa_c: -1.0, kappa_f: 0.0, p: 0.0 };
        let report = validate_instance(&two_by_two(params));
        assert_eq!(report.violations.len(), 4);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let err = Instance::from_rows(&[vec![1.0, 0.3]], &[vec![0.7, 0.1]], base()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn orders_are_descending() {
        let inst = two_by_two(base());
        assert_eq!(inst.child_order(0), &[0, 1]);
        assert_eq!(inst.child_order(1), &[1, 0]);
        assert_eq!(inst.family_order(1), &[1, 0]);
        assert_eq!(inst.v_bar(), 1.0);
    }

    #[test]
    fn correspondence_of_all_ones() {
        let inst = two_by_two(base());
        let s = StrategyProfile::uniform(&inst, true);
        assert_eq!(s.matching_correspondence().pairs(), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn correspondence_empty_without_child_interest() {
        let inst = two_by_two(base());
        let mut s = StrategyProfile::uniform(&inst, true);
        s.child_interest = Matrix::filled(2, 2, false);
        assert!(s.matching_correspondence().is_empty());
    }

    #[test]
    fn correspondence_single_overlap() {
        let inst = two_by_two(base());
        let mut s = StrategyProfile::uniform(&inst, false);
        s.child_interest[(0, 0)] = true;
        s.family_interest[(0, 0)] = true;
        s.family_interest[(0, 1)] = true;
        let mc = s.matching_correspondence();
        assert_eq!(mc.pairs(), vec![(0, 0)]);
        assert_eq!(mc.families_of(0), vec![0]);
        assert_eq!(mc.children_of(0), vec![0]);
        assert!(mc.is_matching());
    }
}
