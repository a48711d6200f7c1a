//! Large-deviations rates of the probability of false selection and the
//! sampling allocations that achieve them.
//!
//! For a best-arm (or epsilon-good) problem with true best arm `b`, an
//! allocation `w` on the simplex yields per-arm rates
//!
//! ```text
//! rate_i(w) = gap_i^2 / (2 (sigma_i^2 / w_i + sigma_b^2 / w_b)),  i != b
//! ```
//!
//! with `gap_i = mu_i - mu_b` (plus `epsilon` for epsilon-good), and the
//! overall rate is their minimum. For feasibility the per-arm rate is
//! `w_i d_i` with `d_i` the arm's constraint-distance exponent.

use log::warn;
use serde::Serialize;
use thiserror::Error;

use crate::model::{FeasibilityContext, Goal, ProblemInstance};
use crate::par::ordered_map;

/// Tolerance on every residual of [`solve_optimal_allocation`].
pub const SOLVER_TOLERANCE: f64 = 1e-8;
/// Tolerance on the simplex residual of every returned allocation.
pub const SIMPLEX_TOLERANCE: f64 = 1e-10;
/// Largest arm count accepted by [`brute_force_allocation`].
pub const BRUTE_FORCE_MAX_ARMS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("rate kind {kind} needs a {expected} goal")]
    WrongGoal { kind: &'static str, expected: &'static str },
    #[error("the best arm is not unique")]
    DuplicateBest,
    #[error("beta must lie in (0, 1), got {0}")]
    Beta(f64),
    #[error("could not bracket the root ({0})")]
    Bracket(&'static str),
    #[error("solver did not converge: simplex {simplex:.3e}, balance {balance:?}, rate equality {rate_equality:.3e}")]
    NotConverged {
        simplex: f64,
        balance: Option<f64>,
        rate_equality: f64,
        allocation: Box<AllocationVector>,
    },
    #[error("arm {0} has a zero rate exponent (mean on a threshold)")]
    ZeroExponent(usize),
    #[error("brute force is limited to {max} arms, got {k}")]
    TooManyArms { k: usize, max: usize },
    #[error("grid step must lie in [0.001, 0.1] and divide 1, got {0}")]
    GridStep(f64),
    #[error("need at least 3 usable points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid PFS point (n = {n}, pfs = {pfs})")]
    InvalidPoint { n: f64, pfs: f64 },
}

/// Which rate to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateKind {
    GammaKg,
    GammaTtei { beta: f64 },
    GammaIkg,
    GammaEps,
    GammaF,
}

impl RateKind {
    pub fn tag(&self) -> &'static str {
        match self {
            RateKind::GammaKg => "gamma_kg",
            RateKind::GammaTtei { .. } => "gamma_ttei",
            RateKind::GammaIkg => "gamma_ikg",
            RateKind::GammaEps => "gamma_eps",
            RateKind::GammaF => "gamma_f",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    /// `|sum(w) - 1|`
    pub simplex: f64,
    /// `|w_b^2 / sigma_b^2 - sum_{i != b} w_i^2 / sigma_i^2|`; absent for feasibility.
    pub balance: Option<f64>,
    /// Spread `max_i rate_i - min_i rate_i` of the per-arm rates.
    pub rate_equality: f64,
}

/// A point on the simplex together with its rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationVector {
    pub w: Vec<f64>,
    pub gamma: f64,
    pub residuals: Residuals,
}

/// JSON document emitted for a rate computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub kind: String,
    pub k: usize,
    pub w: Vec<f64>,
    pub gamma: f64,
    pub residuals: Residuals,
}

impl RateReport {
    pub fn new(kind: impl Into<String>, alloc: &AllocationVector) -> Self {
        Self {
            kind: kind.into(),
            k: alloc.w.len(),
            w: alloc.w.clone(),
            gamma: alloc.gamma,
            residuals: alloc.residuals.clone(),
        }
    }
}

/// Per-arm quantities of a best-arm / epsilon-good problem.
#[derive(Debug, Clone)]
struct PairwiseProblem {
    best: usize,
    /// `gap_i^2` for every arm (0 for the best arm).
    gap2: Vec<f64>,
    var: Vec<f64>,
}

impl PairwiseProblem {
    fn new(instance: &ProblemInstance, shift: f64) -> Result<Self, RateError> {
        let means = instance.ranking_means();
        let best = instance.best_arm();
        if shift == 0.0 && means.iter().enumerate().any(|(i, &m)| i != best && m == means[best]) {
            return Err(RateError::DuplicateBest);
        }
        let gap2 = means
            .iter()
            .enumerate()
            .map(|(i, &m)| if i == best { 0.0 } else { (m - means[best] + shift).powi(2) })
            .collect();
        let var = instance.ranking_stds().iter().map(|s| s * s).collect();
        Ok(Self { best, gap2, var })
    }

    fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.gap2.len()).filter(move |&i| i != self.best)
    }

    fn rate(&self, i: usize, w_best: f64, w_i: f64) -> f64 {
        self.gap2[i] / (2.0 * (self.var[i] / w_i + self.var[self.best] / w_best))
    }

    fn rates(&self, w: &[f64]) -> Vec<f64> {
        self.others().map(|i| self.rate(i, w[self.best], w[i])).collect()
    }

    fn balance(&self, w: &[f64]) -> f64 {
        let b = self.best;
        w[b] * w[b] / self.var[b] - self.others().map(|i| w[i] * w[i] / self.var[i]).sum::<f64>()
    }

    fn allocation(&self, w: Vec<f64>) -> AllocationVector {
        let rates = self.rates(&w);
        let (lo, hi) = min_max(&rates);
        AllocationVector {
            gamma: lo,
            residuals: Residuals {
                simplex: (w.iter().sum::<f64>() - 1.0).abs(),
                balance: Some(self.balance(&w).abs()),
                rate_equality: hi - lo,
            },
            w,
        }
    }

    /// Non-best allocation that equalizes every rate at a common value,
    /// given `w_best = beta`. Returns `(rate, w)`.
    ///
    /// With `x = 1 / (2 rate)`, each `w_i = sigma_i^2 / (gap_i^2 x - sigma_b^2 / beta)`
    /// is decreasing in `x`, so the sum constraint is solved by bisection on `x`.
    fn equalize(&self, beta: f64) -> Result<(f64, Vec<f64>), RateError> {
        let target = 1.0 - beta;
        let vb = self.var[self.best] / beta;
        let w_of = |x: f64| -> Vec<f64> {
            (0..self.gap2.len())
                .map(|i| if i == self.best { beta } else { self.var[i] / (self.gap2[i] * x - vb) })
                .collect()
        };
        let excess = |x: f64| -> f64 { self.others().map(|i| self.var[i] / (self.gap2[i] * x - vb)).sum::<f64>() - target };
        let x_min = self.others().map(|i| vb / self.gap2[i]).fold(0.0, f64::max);
        if !x_min.is_finite() || x_min <= 0.0 {
            return Err(RateError::Bracket("degenerate gaps"));
        }
        let mut lo = x_min;
        let mut hi = 2.0 * x_min;
        let mut guard = 0;
        while excess(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 2000 || !hi.is_finite() {
                return Err(RateError::Bracket("rate"));
            }
        }
        let x = bisect(lo, hi, |x| excess(x) > 0.0);
        Ok((1.0 / (2.0 * x), w_of(x)))
    }
}

/// Bisection on a monotone predicate that is true at `lo` and false at `hi`,
/// run until the interval cannot shrink further. Returns the endpoint closest
/// to the sign change (the midpoint of the final bracket).
fn bisect(mut lo: f64, mut hi: f64, mut is_low: impl FnMut(f64) -> bool) -> f64 {
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if is_low(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn require_best_arm(instance: &ProblemInstance, kind: &'static str) -> Result<(), RateError> {
    match instance.goal() {
        Goal::BestArm => Ok(()),
        _ => Err(RateError::WrongGoal { kind, expected: "best-arm" }),
    }
}

/// Rate and allocation of the knowledge-gradient policy.
pub fn gamma_kg(instance: &ProblemInstance) -> Result<AllocationVector, RateError> {
    require_best_arm(instance, "gamma_kg")?;
    let p = PairwiseProblem::new(instance, 0.0)?;
    let means = instance.ranking_means();
    let sd: Vec<f64> = p.var.iter().map(|v| v.sqrt()).collect();
    let b = p.best;
    let second = p
        .others()
        .fold(None, |acc: Option<usize>, i| match acc {
            Some(j) if means[j] >= means[i] => Some(j),
            _ => Some(i),
        })
        .expect("at least two arms");
    let ref_ratio = (means[b] - means[second]) / sd[second];
    let c: Vec<f64> = (0..means.len())
        .map(|i| if i == b { f64::NAN } else { ((means[b] - means[i]) / sd[i]) / ref_ratio })
        .collect();
    let inv_c_sum: f64 = p.others().map(|i| 1.0 / c[i]).sum();
    let (s1, s2) = (sd[b], sd[second]);
    let w: Vec<f64> = (0..means.len())
        .map(|i| if i == b { 1.0 / (s2 / s1 * inv_c_sum + 1.0) } else { 1.0 / (c[i] * (inv_c_sum + s1 / s2)) })
        .collect();
    // closed-form rate, one term per non-best arm
    let gamma = p
        .others()
        .map(|i| {
            let denom = (s2 * inv_c_sum + s1) * s1 + c[i] * p.var[i] * (inv_c_sum + s1 / s2);
            p.gap2[i] / (2.0 * denom)
        })
        .fold(f64::INFINITY, f64::min);
    let mut alloc = p.allocation(w);
    alloc.gamma = gamma;
    Ok(alloc)
}

/// Best rate among allocations that give the best arm exactly `beta`.
pub fn gamma_ttei(instance: &ProblemInstance, beta: f64) -> Result<AllocationVector, RateError> {
    require_best_arm(instance, "gamma_ttei")?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(RateError::Beta(beta));
    }
    let p = PairwiseProblem::new(instance, 0.0)?;
    let (_, w) = p.equalize(beta)?;
    let alloc = p.allocation(w);
    check_residuals(alloc, false)
}

/// Rate-optimal allocation for best-arm or epsilon-good identification.
///
/// Outer bisection on the best arm's share drives the balance residual to
/// zero; the inner solve equalizes the pairwise rates for that share.
pub fn solve_optimal_allocation(instance: &ProblemInstance) -> Result<AllocationVector, RateError> {
    let shift = match instance.goal() {
        Goal::BestArm => 0.0,
        Goal::EpsilonGood { epsilon } => *epsilon,
        Goal::Feasibility { .. } => {
            return Err(RateError::WrongGoal { kind: "gamma_ikg", expected: "best-arm or epsilon-good" })
        }
    };
    let p = PairwiseProblem::new(instance, shift)?;
    let balance_at = |beta: f64| -> Result<f64, RateError> {
        let (_, w) = p.equalize(beta)?;
        Ok(p.balance(&w))
    };
    // balance < 0 for small beta, > 0 for beta near 1
    let mut lo = 1e-12;
    let mut hi = 1.0 - 1e-12;
    if balance_at(lo)? >= 0.0 || balance_at(hi)? <= 0.0 {
        return Err(RateError::Bracket("best-arm share"));
    }
    let mut err = None;
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match balance_at(mid) {
            Ok(g) if g < 0.0 => lo = mid,
            Ok(_) => hi = mid,
            Err(e) => {
                err = Some(e);
                break;
            }
        }
    }
    if let Some(e) = err {
        return Err(e);
    }
    let beta = 0.5 * (lo + hi);
    let (_, w) = p.equalize(beta)?;
    check_residuals(p.allocation(w), true)
}

fn check_residuals(alloc: AllocationVector, with_balance: bool) -> Result<AllocationVector, RateError> {
    let r = &alloc.residuals;
    let balance_ok = !with_balance || r.balance.is_none_or(|b| b <= SOLVER_TOLERANCE);
    if r.simplex <= SIMPLEX_TOLERANCE && r.rate_equality <= SOLVER_TOLERANCE && balance_ok {
        Ok(alloc)
    } else {
        Err(RateError::NotConverged {
            simplex: r.simplex,
            balance: r.balance,
            rate_equality: r.rate_equality,
            allocation: Box::new(alloc),
        })
    }
}

/// Constraint-distance exponent of every arm under the true means.
///
/// Feasible arms use the closest constraint, infeasible arms the sum over
/// their violated constraints.
pub fn feasibility_exponents(instance: &ProblemInstance) -> Result<Vec<f64>, RateError> {
    let Goal::Feasibility { thresholds } = instance.goal() else {
        return Err(RateError::WrongGoal { kind: "gamma_f", expected: "feasibility" });
    };
    let m = instance.num_measures();
    let means: Vec<f64> = instance.arms().iter().flat_map(|a| a.means.iter().copied()).collect();
    let ctx = FeasibilityContext::from_means(&means, m, thresholds);
    let cell = |i: usize, j: usize| {
        let a = &instance.arms()[i];
        (thresholds[j] - a.means[j]).powi(2) / (2.0 * a.noise_stds[j].powi(2))
    };
    (0..instance.num_arms())
        .map(|i| {
            let d = if ctx.is_feasible(i) {
                ctx.satisfied[i].iter().map(|&j| cell(i, j)).fold(f64::INFINITY, f64::min)
            } else {
                ctx.violated[i].iter().map(|&j| cell(i, j)).sum()
            };
            if d > 0.0 && d.is_finite() {
                Ok(d)
            } else {
                Err(RateError::ZeroExponent(i))
            }
        })
        .collect()
}

/// Rate-optimal allocation for feasible-arm identification (closed form).
pub fn gamma_feasibility(instance: &ProblemInstance) -> Result<AllocationVector, RateError> {
    let d = feasibility_exponents(instance)?;
    let inv_sum: f64 = d.iter().map(|x| 1.0 / x).sum();
    let w: Vec<f64> = d.iter().map(|x| (1.0 / x) / inv_sum).collect();
    Ok(feasibility_allocation(&d, w))
}

fn feasibility_allocation(d: &[f64], w: Vec<f64>) -> AllocationVector {
    let rates: Vec<f64> = w.iter().zip(d).map(|(w, d)| w * d).collect();
    let (lo, hi) = min_max(&rates);
    AllocationVector {
        gamma: lo,
        residuals: Residuals {
            simplex: (w.iter().sum::<f64>() - 1.0).abs(),
            balance: None,
            rate_equality: hi - lo,
        },
        w,
    }
}

/// Rate of `kind` for `instance`.
pub fn compute_rate(instance: &ProblemInstance, kind: RateKind) -> Result<AllocationVector, RateError> {
    match kind {
        RateKind::GammaKg => gamma_kg(instance),
        RateKind::GammaTtei { beta } => gamma_ttei(instance, beta),
        RateKind::GammaIkg => {
            require_best_arm(instance, "gamma_ikg")?;
            solve_optimal_allocation(instance)
        }
        RateKind::GammaEps => match instance.goal() {
            Goal::EpsilonGood { .. } => solve_optimal_allocation(instance),
            _ => Err(RateError::WrongGoal { kind: "gamma_eps", expected: "epsilon-good" }),
        },
        RateKind::GammaF => gamma_feasibility(instance),
    }
}

/// Minimum per-arm rate at `w` for the instance's goal.
pub fn min_rate(instance: &ProblemInstance, w: &[f64]) -> Result<f64, RateError> {
    Ok(Objective::new(instance)?.value(w))
}

/// Goal-specific objective, arranged so that the first coordinate of the
/// search order is the only one every term depends on.
enum Objective {
    Pairwise(PairwiseProblem),
    Separable(Vec<f64>),
}

impl Objective {
    fn new(instance: &ProblemInstance) -> Result<Self, RateError> {
        Ok(match instance.goal() {
            Goal::BestArm => Objective::Pairwise(PairwiseProblem::new(instance, 0.0)?),
            Goal::EpsilonGood { epsilon } => Objective::Pairwise(PairwiseProblem::new(instance, *epsilon)?),
            Goal::Feasibility { .. } => Objective::Separable(feasibility_exponents(instance)?),
        })
    }

    fn value(&self, w: &[f64]) -> f64 {
        match self {
            Objective::Pairwise(p) => p.rates(w).into_iter().fold(f64::INFINITY, f64::min),
            Objective::Separable(d) => w.iter().zip(d).map(|(w, d)| w * d).fold(f64::INFINITY, f64::min),
        }
    }

    fn allocation(&self, w: Vec<f64>) -> AllocationVector {
        match self {
            Objective::Pairwise(p) => p.allocation(w),
            Objective::Separable(d) => feasibility_allocation(d, w),
        }
    }
}

/// Exhaustive maximization of the minimum rate over the simplex grid with
/// spacing `grid_step` (interior points only: every `w_i >= grid_step`).
///
/// The search is exact on the grid. Subtrees are skipped only when an upper
/// bound on every completion is no better than the incumbent, and ties keep
/// the lexicographically first grid point. The outer coordinate is split
/// across workers (`threads`, see [`crate::par::ordered_map`]).
pub fn brute_force_allocation(
    instance: &ProblemInstance,
    grid_step: f64,
    threads: usize,
) -> Result<AllocationVector, RateError> {
    let k = instance.num_arms();
    if k > BRUTE_FORCE_MAX_ARMS {
        return Err(RateError::TooManyArms { k, max: BRUTE_FORCE_MAX_ARMS });
    }
    if !(1e-3 - 1e-15..=0.1 + 1e-15).contains(&grid_step) {
        return Err(RateError::GridStep(grid_step));
    }
    let units = (1.0 / grid_step).round() as usize;
    if ((units as f64) * grid_step - 1.0).abs() > 1e-9 {
        return Err(RateError::GridStep(grid_step));
    }
    let objective = Objective::new(instance)?;
    let order: Vec<usize> = match &objective {
        Objective::Pairwise(p) => std::iter::once(p.best).chain(p.others()).collect(),
        Objective::Separable(_) => (0..k).collect(),
    };
    let step = 1.0 / units as f64;
    let search = GridSearch { objective: &objective, order: &order, units, step };
    // first coordinate takes 1..=units-(k-1) units
    let firsts = units - (k - 1);
    let results = ordered_map(firsts, threads, |c0| search.best_with_first(c0 + 1));
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (val, counts) in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            best = Some((val, counts));
        }
    }
    let (_, counts) = best.ok_or(RateError::Bracket("empty grid"))?;
    let mut w = vec![0.0; k];
    for (pos, &arm) in order.iter().enumerate() {
        w[arm] = counts[pos] as f64 * step;
    }
    Ok(objective.allocation(w))
}

struct GridSearch<'a> {
    objective: &'a Objective,
    order: &'a [usize],
    units: usize,
    step: f64,
}

impl GridSearch<'_> {
    /// Term contributed by the arm at position `pos` (> 0 for pairwise problems).
    fn term(&self, pos: usize, first_units: usize, units: usize) -> f64 {
        let arm = self.order[pos];
        match self.objective {
            Objective::Pairwise(p) => p.rate(arm, first_units as f64 * self.step, units as f64 * self.step),
            Objective::Separable(d) => d[arm] * units as f64 * self.step,
        }
    }

    fn best_with_first(&self, c0: usize) -> Option<(f64, Vec<usize>)> {
        let k = self.order.len();
        let mut counts = vec![0; k];
        counts[0] = c0;
        let first_term = match self.objective {
            Objective::Pairwise(_) => f64::INFINITY,
            Objective::Separable(_) => self.term(0, c0, c0),
        };
        let mut best = (f64::NEG_INFINITY, Vec::new());
        self.descend(1, self.units - c0, first_term, &mut counts, &mut best);
        (best.0 > f64::NEG_INFINITY).then_some(best)
    }

    fn upper_bound(&self, pos: usize, remaining: usize, running: f64, c0: usize) -> f64 {
        let k = self.order.len();
        let left = k - pos;
        let max_units = remaining + 1 - left;
        let mut bound = running;
        for q in pos..k {
            bound = bound.min(self.term(q, c0, max_units));
        }
        if let Objective::Separable(d) = self.objective {
            let inv: f64 = self.order[pos..].iter().map(|&a| 1.0 / d[a]).sum();
            bound = bound.min(remaining as f64 * self.step / inv);
        }
        bound
    }

    fn descend(&self, pos: usize, remaining: usize, running: f64, counts: &mut [usize], best: &mut (f64, Vec<usize>)) {
        let k = self.order.len();
        let c0 = counts[0];
        if pos == k - 1 {
            counts[pos] = remaining;
            let v = running.min(self.term(pos, c0, remaining));
            if v > best.0 {
                *best = (v, counts.to_vec());
            }
            return;
        }
        if self.upper_bound(pos, remaining, running, c0) <= best.0 {
            return;
        }
        let max_here = remaining - (k - 1 - pos);
        for c in 1..=max_here {
            counts[pos] = c;
            let r = running.min(self.term(pos, c0, c));
            if r <= best.0 {
                continue;
            }
            self.descend(pos + 1, remaining - c, r, counts, best);
        }
    }
}

/// Least-squares slope of `-ln(pfs)` against `n` over the later half of the
/// usable points, an estimate of the exponential decay rate of the PFS.
///
/// Points with `pfs == 0` carry no information about the rate and are
/// dropped with a warning.
pub fn empirical_rate(points: &[(f64, f64)]) -> Result<f64, RateError> {
    let mut usable: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &(n, pfs) in points {
        if !(n.is_finite() && pfs.is_finite()) || !(0.0..=1.0).contains(&pfs) {
            return Err(RateError::InvalidPoint { n, pfs });
        }
        if pfs == 0.0 {
            warn!("dropping PFS point at n = {n}: pfs is zero");
            continue;
        }
        usable.push((n, -pfs.ln()));
    }
    if usable.len() < 3 {
        return Err(RateError::TooFewPoints(usable.len()));
    }
    usable.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tail = &usable[usable.len() / 2..];
    let len = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / len;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RateError::TooFewPoints(1));
    }
    Ok(sxy / sxx)
}
