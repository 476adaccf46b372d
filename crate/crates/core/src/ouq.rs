//! Bounds on the probability of losing the self-powered condition over
//! finite-support product measures, and controller gain-region maps.
//!
//! Searches return the best measure found, so an upper bound is a lower
//! estimate of the true supremum (and a lower bound an upper estimate of the
//! infimum), each achieved by the returned witness.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{self, ControlScenario, PidGains, ReferenceSignal};
use crate::error::{config, domain, Error, Result};

/// Responses above this value mean the self-powered condition fails.
pub const FAILURE_THRESHOLD: f64 = 1.0;
/// Slack allowed on the mean constraint.
pub const MEAN_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_STARTS: usize = 32;
pub const DEFAULT_ITERATIONS: usize = 40;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedInput {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub support_points: usize,
}

impl BoundedInput {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, support_points: usize) -> Self {
        Self { name: name.into(), lower, upper, support_points }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower <= self.upper) {
            return Err(config(format!("input '{}' needs finite bounds with lower <= upper", self.name)));
        }
        if self.support_points == 0 {
            return Err(config(format!("input '{}' needs at least one support point", self.name)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// `n` evenly spaced values from lower to upper inclusive.
    pub fn grid(&self, n: usize) -> Result<Vec<f64>> {
        self.validate()?;
        if n < 2 {
            return Err(domain("a grid needs at least two points per axis"));
        }
        if !(self.upper > self.lower) {
            return Err(domain(format!("input '{}' has an empty range", self.name)));
        }
        let step = self.width() / (n - 1) as f64;
        Ok((0..n).map(|k| if k + 1 == n { self.upper } else { self.lower + k as f64 * step }).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// One finite-support marginal per input.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    pub marginals: Vec<Vec<Atom>>,
}

impl ProductMeasure {
    /// Point mass at `point`.
    pub fn dirac(point: &[f64]) -> Self {
        Self { marginals: point.iter().map(|&location| vec![Atom { location, weight: 1.0 }]).collect() }
    }

    pub fn validate(&self, inputs: &[BoundedInput]) -> Result<()> {
        if self.marginals.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "measure has {} marginals for {} inputs",
                self.marginals.len(),
                inputs.len()
            )));
        }
        for (atoms, input) in self.marginals.iter().zip(inputs) {
            if atoms.is_empty() {
                return Err(Error::Shape(format!("marginal for '{}' has no atoms", input.name)));
            }
            let mut total = 0.0;
            for a in atoms {
                if !(a.weight >= 0.0) {
                    return Err(domain(format!("negative weight on '{}'", input.name)));
                }
                if !(a.location >= input.lower && a.location <= input.upper) {
                    return Err(domain(format!("atom {} outside bounds of '{}'", a.location, input.name)));
                }
                total += a.weight;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(domain(format!("weights of '{}' sum to {total}", input.name)));
            }
        }
        Ok(())
    }
}

/// A scalar response (typically P_non) of the uncertain inputs.
pub trait Response: Sync {
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

impl<F> Response for F
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

pub struct AdmissibleSet<R> {
    pub inputs: Vec<BoundedInput>,
    pub response: R,
    /// Upper bound on the expected response.
    pub mean_constraint: f64,
}

impl<R: Response> AdmissibleSet<R> {
    pub fn new(inputs: Vec<BoundedInput>, response: R) -> Self {
        Self { inputs, response, mean_constraint: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(config("an admissible set needs at least one input"));
        }
        for i in &self.inputs {
            i.validate()?;
        }
        if !self.mean_constraint.is_finite() {
            return Err(config("mean constraint must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureEstimate {
    pub probability: f64,
    pub mean: f64,
}

impl FailureEstimate {
    pub fn satisfies_mean(&self, bound: f64) -> bool {
        self.mean <= bound + MEAN_TOLERANCE
    }
}

fn evaluate_at<R: Response>(response: &R, x: &[f64]) -> Result<f64> {
    let v = response.evaluate(x).map_err(|e| Error::Response { coords: x.to_vec(), message: e.to_string() })?;
    if v.is_nan() {
        return Err(Error::Response { coords: x.to_vec(), message: "response is NaN".into() });
    }
    Ok(v)
}

/// Visit every atom combination in mixed-radix order (last input fastest).
fn for_each_combination(measure: &ProductMeasure, mut f: impl FnMut(&[f64], f64) -> Result<()>) -> Result<()> {
    let dims = measure.marginals.len();
    let mut idx = vec![0usize; dims];
    let mut point = vec![0.0; dims];
    loop {
        let mut weight = 1.0;
        for j in 0..dims {
            let a = measure.marginals[j][idx[j]];
            point[j] = a.location;
            weight *= a.weight;
        }
        f(&point, weight)?;
        let mut j = dims;
        loop {
            if j == 0 {
                return Ok(());
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < measure.marginals[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// μ[response > 1] and E_μ[response] by full enumeration of atom combinations.
pub fn failure_probability<R: Response>(
    measure: &ProductMeasure,
    admissible: &AdmissibleSet<R>,
) -> Result<FailureEstimate> {
    measure.validate(&admissible.inputs)?;
    let (mut p, mut mean) = (0.0, 0.0);
    for_each_combination(measure, |x, w| {
        let v = evaluate_at(&admissible.response, x)?;
        if v > FAILURE_THRESHOLD {
            p += w;
        }
        mean += w * v;
        Ok(())
    })?;
    Ok(FailureEstimate { probability: p.clamp(0.0, 1.0), mean })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    pub starts: usize,
    /// Alternating location/weight sweeps per start.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { starts: DEFAULT_STARTS, iterations: DEFAULT_ITERATIONS, seed: DEFAULT_SEED }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimate {
    pub value: f64,
    pub mean: f64,
    pub witness: ProductMeasure,
    /// Distinct response evaluations performed.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    Maximize,
    Minimize,
}

struct Search<'a, R> {
    set: &'a AdmissibleSet<R>,
    cache: BTreeMap<Vec<u64>, f64>,
    goal: Goal,
}

impl<'a, R: Response> Search<'a, R> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let v = evaluate_at(&self.set.response, x)?;
        self.cache.insert(key, v);
        Ok(v)
    }

    fn estimate(&mut self, m: &ProductMeasure) -> Result<FailureEstimate> {
        let (mut p, mut mean) = (0.0, 0.0);
        let mut points = Vec::new();
        for_each_combination(m, |x, w| {
            points.push((x.to_vec(), w));
            Ok(())
        })?;
        for (x, w) in points {
            let v = self.eval(&x)?;
            if v > FAILURE_THRESHOLD {
                p += w;
            }
            mean += w * v;
        }
        Ok(FailureEstimate { probability: p, mean })
    }

    fn feasible(&self, e: &FailureEstimate) -> bool {
        e.satisfies_mean(self.set.mean_constraint)
    }

    /// Strict improvement: better objective, or equal objective with lower mean.
    fn better(&self, a: &FailureEstimate, b: &FailureEstimate) -> bool {
        let gain = match self.goal {
            Goal::Maximize => a.probability - b.probability,
            Goal::Minimize => b.probability - a.probability,
        };
        gain > 1e-15 || (gain.abs() <= 1e-15 && a.mean < b.mean - 1e-15)
    }

    /// Exact re-optimization of one marginal's weights with the others fixed:
    /// a linear program over the simplex cut by the mean half-space, whose
    /// optimum sits on a single atom or a pair of atoms.
    fn optimize_weights(&mut self, m: &mut ProductMeasure, j: usize) -> Result<()> {
        let n = m.marginals[j].len();
        let mut fail = vec![0.0; n];
        let mut mean = vec![0.0; n];
        for i in 0..n {
            let mut probe = m.clone();
            probe.marginals[j] = vec![Atom { location: m.marginals[j][i].location, weight: 1.0 }];
            let e = self.estimate(&probe)?;
            fail[i] = e.probability;
            mean[i] = e.mean;
        }
        let cap = self.set.mean_constraint;
        let sign = if self.goal == Goal::Maximize { 1.0 } else { -1.0 };
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        let mut consider = |w: Vec<f64>| {
            let obj = sign * w.iter().zip(&fail).map(|(a, b)| a * b).sum::<f64>();
            let mu = w.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>();
            let replace = match &best {
                None => true,
                Some((bo, bm, _)) => obj > bo + 1e-15 || ((obj - bo).abs() <= 1e-15 && mu < *bm),
            };
            if replace {
                best = Some((obj, mu, w));
            }
        };
        for i in 0..n {
            if mean[i] <= cap + MEAN_TOLERANCE {
                let mut w = vec![0.0; n];
                w[i] = 1.0;
                consider(w);
            }
        }
        for i in 0..n {
            for k in 0..n {
                if mean[i] <= cap && mean[k] > cap {
                    let wk = (cap - mean[i]) / (mean[k] - mean[i]);
                    let mut w = vec![0.0; n];
                    w[k] = wk;
                    w[i] = 1.0 - wk;
                    consider(w);
                }
            }
        }
        let weights = match best {
            Some((_, _, w)) => w,
            None => {
                // No feasible mix for this marginal: move everything onto the
                // lowest-mean atom and let the other marginals repair the rest.
                let lowest = (0..n).fold(0, |b, i| if mean[i] < mean[b] { i } else { b });
                let mut w = vec![0.0; n];
                w[lowest] = 1.0;
                w
            }
        };
        for (a, w) in m.marginals[j].iter_mut().zip(weights) {
            a.weight = w;
        }
        Ok(())
    }

    /// Pattern search on every atom location over a geometric ladder of
    /// step sizes, plus a few random relocations.
    fn optimize_locations(&mut self, m: &mut ProductMeasure, rng: &mut ChaCha8Rng) -> Result<()> {
        let mut current = self.estimate(m)?;
        for j in 0..m.marginals.len() {
            let input = self.set.inputs[j].clone();
            let width = input.width();
            if width <= 0.0 {
                continue;
            }
            for i in 0..m.marginals[j].len() {
                let mut candidates = Vec::new();
                for _ in 0..2 {
                    candidates.push(input.lower + unit(rng) * width);
                }
                candidates.push(input.lower);
                candidates.push(input.upper);
                for c in candidates {
                    self.try_move(m, j, i, c, &mut current)?;
                }
                let mut step = 0.25 * width;
                while step > 1e-12 * width {
                    let mut moved = true;
                    while moved {
                        moved = false;
                        for dir in [-1.0, 1.0] {
                            let loc = (m.marginals[j][i].location + dir * step).clamp(input.lower, input.upper);
                            if self.try_move(m, j, i, loc, &mut current)? {
                                moved = true;
                            }
                        }
                    }
                    step *= 0.5;
                }
            }
        }
        Ok(())
    }

    fn try_move(
        &mut self,
        m: &mut ProductMeasure,
        j: usize,
        i: usize,
        loc: f64,
        current: &mut FailureEstimate,
    ) -> Result<bool> {
        let old = m.marginals[j][i].location;
        if loc == old {
            return Ok(false);
        }
        m.marginals[j][i].location = loc;
        let e = self.estimate(m)?;
        let keep =
            if self.feasible(current) { self.feasible(&e) && self.better(&e, current) } else { e.mean < current.mean };
        if keep {
            *current = e;
            Ok(true)
        } else {
            m.marginals[j][i].location = old;
            Ok(false)
        }
    }

    fn run(&mut self, budget: &SearchBudget) -> Result<BoundEstimate> {
        self.set.validate()?;
        if budget.starts == 0 {
            return Err(config("search needs at least one start"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
        let mut best: Option<(FailureEstimate, ProductMeasure)> = None;
        for start in 0..budget.starts {
            let mut m = self.initial_measure(start, &mut rng);
            for _ in 0..budget.iterations.max(1) {
                for j in 0..m.marginals.len() {
                    self.optimize_weights(&mut m, j)?;
                }
                self.optimize_locations(&mut m, &mut rng)?;
            }
            for j in 0..m.marginals.len() {
                self.optimize_weights(&mut m, j)?;
            }
            let e = self.estimate(&m)?;
            if !self.feasible(&e) {
                continue;
            }
            let replace = match &best {
                None => true,
                Some((b, _)) => self.better(&e, b),
            };
            if replace {
                best = Some((e, m));
            }
        }
        let Some((e, mut witness)) = best else {
            return Err(Error::Infeasible(format!(
                "no measure with mean response <= {} found in {} starts",
                self.set.mean_constraint, budget.starts
            )));
        };
        normalize(&mut witness);
        Ok(BoundEstimate { value: e.probability.clamp(0.0, 1.0), mean: e.mean, witness, evaluations: self.cache.len() })
    }

    /// Start 0 spreads atoms evenly over each box; later starts are random.
    fn initial_measure(&self, start: usize, rng: &mut ChaCha8Rng) -> ProductMeasure {
        let marginals = self
            .set
            .inputs
            .iter()
            .map(|input| {
                let n = input.support_points;
                let mut atoms: Vec<Atom> = (0..n)
                    .map(|k| {
                        let location = if start == 0 {
                            if n == 1 {
                                input.lower + 0.5 * input.width()
                            } else {
                                input.lower + input.width() * k as f64 / (n - 1) as f64
                            }
                        } else {
                            input.lower + unit(rng) * input.width()
                        };
                        Atom { location: location.clamp(input.lower, input.upper), weight: 1.0 / n as f64 }
                    })
                    .collect();
                if start != 0 {
                    let raw: Vec<f64> = (0..n).map(|_| unit(rng) + 1e-3).collect();
                    let total: f64 = raw.iter().sum();
                    for (a, r) in atoms.iter_mut().zip(raw) {
                        a.weight = r / total;
                    }
                }
                atoms
            })
            .collect();
        ProductMeasure { marginals }
    }
}

/// Rescale each marginal to sum to one exactly (up to rounding).
fn normalize(m: &mut ProductMeasure) {
    for atoms in &mut m.marginals {
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if total > 0.0 {
            for a in atoms.iter_mut() {
                a.weight /= total;
            }
        }
    }
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Largest failure probability found over admissible measures.
pub fn ouq_upper_bound<R: Response>(admissible: &AdmissibleSet<R>, budget: &SearchBudget) -> Result<BoundEstimate> {
    Search { set: admissible, cache: BTreeMap::new(), goal: Goal::Maximize }.run(budget)
}

/// Smallest failure probability found over admissible measures.
pub fn ouq_lower_bound<R: Response>(admissible: &AdmissibleSet<R>, budget: &SearchBudget) -> Result<BoundEstimate> {
    Search { set: admissible, cache: BTreeMap::new(), goal: Goal::Minimize }.run(budget)
}

/// Axis along which the gain-map template applies its step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepAxis {
    X,
    Z,
}

fn is_nonzero_step(r: &ReferenceSignal) -> bool {
    matches!(r, ReferenceSignal::Step { amplitude, .. } if *amplitude != 0.0)
}

/// The step channel of a gain-map template: z if it carries a non-zero step, else x.
pub fn step_axis(template: &ControlScenario) -> Result<StepAxis> {
    if is_nonzero_step(&template.z_reference) {
        Ok(StepAxis::Z)
    } else if is_nonzero_step(&template.x_reference) {
        Ok(StepAxis::X)
    } else {
        Err(config("gain-map template needs a non-zero step reference on x or z"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCell {
    pub kp: f64,
    pub kd: f64,
    pub pnon_max: f64,
    pub overshoot: Option<f64>,
    /// Largest |inertial velocity| along the step axis, m/s.
    pub vmax: f64,
    pub peak_time: Option<f64>,
    pub diverged: bool,
}

impl GainCell {
    pub const CSV_HEADER: &'static str = "kp,kd,pnon_max,overshoot,vmax,peak_time,diverged";
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    /// kp-major: cell (i, j) sits at `i * kd.len() + j`.
    pub cells: Vec<GainCell>,
}

impl GainMap {
    pub fn cell(&self, i: usize, j: usize) -> &GainCell {
        &self.cells[i * self.kd.len() + j]
    }
}

/// Template with the force-loop proportional and derivative gains replaced.
pub fn with_force_gains(template: &ControlScenario, kp: f64, kd: f64) -> ControlScenario {
    let mut s = template.clone();
    s.gains_force = PidGains { kp, kd, ..template.gains_force };
    s
}

/// Simulate one (kp, kd) cell. Divergence marks the cell instead of failing.
pub fn evaluate_gain_cell(template: &ControlScenario, axis: StepAxis, kp: f64, kd: f64) -> Result<GainCell> {
    let scenario = with_force_gains(template, kp, kd);
    match control::simulate_closed_loop(&scenario) {
        Ok(result) => {
            let metrics = match axis {
                StepAxis::X => result.metrics.x,
                StepAxis::Z => result.metrics.z,
            };
            let vmax = result
                .samples
                .iter()
                .map(|s| {
                    let v = s.state().inertial_velocity();
                    match axis {
                        StepAxis::X => v[0].abs(),
                        StepAxis::Z => v[1].abs(),
                    }
                })
                .fold(0.0, f64::max);
            Ok(GainCell {
                kp,
                kd,
                pnon_max: result.max_nondimensional(),
                overshoot: metrics.overshoot,
                vmax,
                peak_time: metrics.peak_time,
                diverged: false,
            })
        }
        Err(Error::Divergence { .. }) => Ok(GainCell {
            kp,
            kd,
            pnon_max: f64::NAN,
            overshoot: None,
            vmax: f64::NAN,
            peak_time: None,
            diverged: true,
        }),
        Err(e) => Err(e),
    }
}

/// Sequential sweep over a kp × kd grid.
pub fn gain_region_map(
    template: &ControlScenario,
    kp_range: &BoundedInput,
    kd_range: &BoundedInput,
    resolution: (usize, usize),
) -> Result<GainMap> {
    template.validate()?;
    let axis = step_axis(template)?;
    let kp = kp_range.grid(resolution.0)?;
    let kd = kd_range.grid(resolution.1)?;
    let mut cells = Vec::with_capacity(kp.len() * kd.len());
    for &p in &kp {
        for &d in &kd {
            cells.push(evaluate_gain_cell(template, axis, p, d)?);
        }
    }
    Ok(GainMap { kp, kd, cells })
}

/// Per-cell limits; `None` disables a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GainConstraints {
    pub pnon_max: Option<f64>,
    pub overshoot_max: Option<f64>,
    pub velocity_min: Option<f64>,
    pub peak_time_max: Option<f64>,
}

impl GainConstraints {
    pub fn self_powered() -> Self {
        Self { pnon_max: Some(1.0), ..Default::default() }
    }

    pub fn admits(&self, c: &GainCell) -> bool {
        if c.diverged {
            return false;
        }
        let le = |v: Option<f64>, bound: Option<f64>| match bound {
            None => true,
            Some(b) => v.is_none_or(|v| v <= b),
        };
        le(Some(c.pnon_max), self.pnon_max)
            && le(c.overshoot, self.overshoot_max)
            && le(c.peak_time, self.peak_time_max)
            && self.velocity_min.is_none_or(|b| c.vmax >= b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    pub mask: Vec<bool>,
    pub count: usize,
    /// (min kp, max kp, min kd, max kd) over feasible cells.
    pub extents: Option<(f64, f64, f64, f64)>,
}

pub fn feasible_region(map: &GainMap, constraints: &GainConstraints) -> FeasibleRegion {
    let mask: Vec<bool> = map.cells.iter().map(|c| constraints.admits(c)).collect();
    let count = mask.iter().filter(|m| **m).count();
    let extents = map.cells.iter().zip(&mask).filter(|(_, m)| **m).fold(None, |acc, (c, _)| {
        Some(match acc {
            None => (c.kp, c.kp, c.kd, c.kd),
            Some((a, b, d, e)) => (f64::min(a, c.kp), f64::max(b, c.kp), f64::min(d, c.kd), f64::max(e, c.kd)),
        })
    });
    FeasibleRegion { mask, count, extents }
}
