//! The closed-form schedule, the adiabatic-condition evaluator, the
//! running time, and the time-dependent evolution.
//!
//! The propagator steps with the exact exponential of the midpoint-frozen
//! Hamiltonian. It never materializes the dense edge-space operator:
//! `H(s)` acts as `sqrt(1 - lambda_k^2) sigma_y` on the invariant plane
//! spanned by `{|v_k, 0>, |v_k, 0>_perp}` and as zero elsewhere, so one
//! step is a family of plane rotations driven by the discriminant
//! eigensystem at the midpoint. Each step is exactly unitary up to
//! roundoff; the truncation order in `dt` comes from freezing `s`.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::chain::{absorbing, interpolated_stationary_raw, StochasticChain};
use crate::discriminant::rotation_frame;
use crate::error::{Error, Result};
use crate::hamiltonian::{EdgeWalk, EDGE_CAP};
use crate::hitting::classical_hitting_time;
use crate::linalg::jacobi_eigh;

/// Eigenvalues above this are treated as part of the stationary cluster
/// and excluded from resolvent-style sums.
const DEGENERATE_TOL: f64 = 1e-12;

/// Maximum number of step-halving refinements in [`evolve`].
const MAX_REFINEMENTS: usize = 6;

/// Cauchy criterion on the final overlap between refinements.
const REFINE_TOL: f64 = 1e-4;

/// The closed-form schedule `s(t)` that advances `theta` at constant
/// angular velocity: `theta(s(t)) = omega t + theta_0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Schedule {
    /// Marked stationary mass the schedule was built for.
    pub p_m: f64,
    /// Target error amplitude recorded for reporting.
    pub epsilon: f64,
    /// Total evolution time `T`.
    pub t_total: f64,
    /// `theta_0 = arcsin sqrt(p_M)`.
    pub theta0: f64,
    /// `omega = arccos(sqrt(p_M)) / T`.
    pub omega: f64,
}

impl Schedule {
    pub fn new(p_m: f64, epsilon: f64, t_total: f64) -> Self {
        Schedule {
            p_m,
            epsilon,
            t_total,
            theta0: p_m.sqrt().asin(),
            omega: p_m.sqrt().acos() / t_total,
        }
    }

    /// `s(t) = (1 - p_M / sin^2(omega t + theta_0)) / (1 - p_M)`, clamped
    /// to [0, 1] against roundoff at the endpoints.
    pub fn s_at(&self, t: f64) -> f64 {
        let th = self.omega * t + self.theta0;
        let sin2 = th.sin() * th.sin();
        ((1.0 - self.p_m / sin2) / (1.0 - self.p_m)).clamp(0.0, 1.0)
    }

    pub fn theta_at(&self, t: f64) -> f64 {
        self.omega * t + self.theta0
    }
}

/// Build the schedule for a marked mass and total time, recording the
/// error target it was derived from.
pub fn schedule(p_m: f64, epsilon: f64, t_total: f64) -> Result<Schedule> {
    if !(p_m > 0.0 && p_m < 1.0) {
        return Err(Error::bad_params(format!(
            "schedule needs 0 < p_M < 1, got {p_m}"
        )));
    }
    if !t_total.is_finite() || t_total <= 0.0 {
        return Err(Error::bad_params(format!(
            "schedule needs T > 0, got {t_total}"
        )));
    }
    Ok(Schedule::new(p_m, epsilon, t_total))
}

/// Running time with its two derivations: the grid maximum of the
/// condition sum and the closed form from the hitting time. Construction
/// asserts they agree.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunningTime {
    /// `T = (pi / 2 eps) sqrt(HT)`.
    pub t: f64,
    pub epsilon: f64,
    pub ht: f64,
    /// Grid maximum of `sum_k |<v_k|vn_perp>|^2 / (1 - lambda_k)`.
    pub grid_max: f64,
    /// Grid point where the maximum is attained (must be s = 1).
    pub argmax_s: f64,
}

/// The resolvent-style sum `sum_{k != n} |<v_k(s)|vn_perp(s)>|^2 / den`
/// where `den` is `1 - lambda^2` (exact condition) or `1 - lambda`
/// (strengthened). Also enforces that the spectrum is nonnegative, which
/// the running-time derivation requires.
fn condition_sum(chain: &StochasticChain, s: f64, squared_denominator: bool) -> Result<f64> {
    let interp = crate::chain::interpolate(chain, s)?;
    let spectral = crate::discriminant::eigendecompose(&crate::discriminant::discriminant(&interp))?;
    if spectral.lambda(0) < -1e-10 {
        return Err(Error::bad_params(format!(
            "discriminant eigenvalue {:.3e} is negative at s = {s}; apply make_lazy first",
            spectral.lambda(0)
        )));
    }
    let frame = rotation_frame(chain, s)?;
    let n = chain.n();
    let mut sum = 0.0;
    for k in 0..n - 1 {
        let lambda = spectral.lambda(k);
        let overlap = spectral.vector(k).dot(&frame.vn_perp);
        if lambda > 1.0 - DEGENERATE_TOL {
            if s < 1.0 {
                return Err(Error::DegenerateDenominator { lambda, s });
            }
            continue;
        }
        let den = if squared_denominator {
            1.0 - lambda * lambda
        } else {
            1.0 - lambda
        };
        sum += overlap * overlap / den;
    }
    Ok(sum)
}

/// Compute the running time `T` for a target error amplitude.
///
/// Evaluates the strengthened condition sum on an s-grid, checks that its
/// maximum sits at s = 1 and reproduces `HT` to 1e-6 relative, and returns
/// `T = (pi / 2 eps) sqrt(HT)`.
pub fn running_time(
    chain: &StochasticChain,
    epsilon: f64,
    grid_points: usize,
) -> Result<RunningTime> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::bad_params(format!(
            "running_time needs 0 < epsilon < 1, got {epsilon}"
        )));
    }
    chain.require_searchable()?;
    let ht = classical_hitting_time(chain)?.ht;

    let mut grid_max = f64::NEG_INFINITY;
    let mut argmax_s = 0.0;
    let mut last_value = 0.0;
    for i in 0..grid_points {
        let s = i as f64 / (grid_points - 1) as f64;
        let value = condition_sum(chain, s, false)?;
        if value > grid_max {
            grid_max = value;
            argmax_s = s;
        }
        if i == grid_points - 1 {
            last_value = value;
        }
    }
    if grid_max > last_value + 1e-9 * grid_max.abs() {
        return Err(Error::ConsistencyFailure {
            what: format!("condition-sum grid maximum sits at s = {argmax_s}, not s = 1"),
            deviation: grid_max - last_value,
        });
    }

    let prefactor = std::f64::consts::PI / (2.0 * epsilon);
    let t1 = prefactor * grid_max.sqrt();
    let t2 = prefactor * ht.sqrt();
    let deviation = (t1 - t2).abs() / t2;
    if deviation > 1e-6 {
        return Err(Error::ConsistencyFailure {
            what: "grid-max running time disagrees with (pi/2eps) sqrt(HT)".to_string(),
            deviation,
        });
    }
    Ok(RunningTime {
        t: t2,
        epsilon,
        ht,
        grid_max,
        argmax_s,
    })
}

/// Left-hand side of the adiabatic condition at one grid point.
///
/// `strengthened = false`: the exact form
/// `(arccos sqrt(p_M) / T)^2 sum |<v_k|vn_perp>|^2 / (1 - lambda_k^2)`.
/// `strengthened = true`: the form that defines `T`, with `pi/2` in place
/// of the arccos and `1 - lambda_k` in the denominator; with `T` from
/// [`running_time`] it equals `epsilon^2` exactly at s = 1.
pub fn adiabatic_condition_lhs(
    chain: &StochasticChain,
    s: f64,
    t_total: f64,
    strengthened: bool,
) -> Result<f64> {
    if !t_total.is_finite() || t_total <= 0.0 {
        return Err(Error::bad_params("adiabatic condition needs T > 0"));
    }
    let (angle, sum) = if strengthened {
        (
            std::f64::consts::FRAC_PI_2,
            condition_sum(chain, s, false)?,
        )
    } else {
        (
            chain.p_marked().sqrt().acos(),
            condition_sum(chain, s, true)?,
        )
    };
    let omega = angle / t_total;
    Ok(omega * omega * sum)
}

/// The adiabatic condition swept over an s-grid, in the rearranged form
/// `(pi / 2T)^2 sum |<v_k|vn_perp>|^2 / (1 - lambda_k^2) <= epsilon^2`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub s_grid: Vec<f64>,
    pub lhs: Vec<f64>,
    pub max_lhs: f64,
    /// True when the lhs stays below `epsilon^2` on the whole grid.
    pub t_sufficient: bool,
}

pub fn condition_report(
    chain: &StochasticChain,
    t_total: f64,
    epsilon: f64,
    grid_points: usize,
) -> Result<ConditionReport> {
    let omega = std::f64::consts::FRAC_PI_2 / t_total;
    let mut s_grid = Vec::with_capacity(grid_points);
    let mut lhs = Vec::with_capacity(grid_points);
    let mut max_lhs = 0.0_f64;
    for i in 0..grid_points {
        let s = i as f64 / (grid_points - 1) as f64;
        let value = omega * omega * condition_sum(chain, s, true)?;
        max_lhs = max_lhs.max(value);
        s_grid.push(s);
        lhs.push(value);
    }
    Ok(ConditionReport {
        s_grid,
        lhs,
        max_lhs,
        t_sufficient: max_lhs <= epsilon * epsilon,
    })
}

/// A completed evolution: per-step overlap with the tracked eigenstate,
/// norms, the final state, and the measured-success probability.
#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub schedule: Schedule,
    pub ht: f64,
    /// Step grid `t_0 .. t_K` (including both endpoints).
    pub times: Vec<f64>,
    pub s_values: Vec<f64>,
    /// `|<Psi_n(s(t)) | psi(t)>|^2` per grid point.
    pub overlaps: Vec<f64>,
    pub norms: Vec<f64>,
    pub final_state: Array1<Complex64>,
    /// Marginal probability of measuring a marked vertex at `t = T`.
    pub success_prob: f64,
    pub dt: f64,
    /// Number of step-halving refinements taken by the Cauchy control.
    pub refinements: usize,
}

impl EvolutionTrace {
    pub fn min_overlap(&self) -> f64 {
        self.overlaps.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    }

    pub fn final_overlap(&self) -> f64 {
        *self.overlaps.last().expect("trace has at least one point")
    }
}

/// Per-vertex measurement distribution of the final state (marginal of the
/// first register).
pub fn vertex_marginal(trace: &EvolutionTrace, n: usize) -> Vec<f64> {
    let mut marginal = vec![0.0; n];
    for (x, mass) in marginal.iter_mut().enumerate() {
        for y in 0..n {
            *mass += trace.final_state[x * n + y].norm_sqr();
        }
    }
    marginal
}

/// Midpoint-exponential stepper on the analytic invariant planes.
struct Propagator {
    n: usize,
    p: Array2<f64>,
    p_abs: Array2<f64>,
}

impl Propagator {
    fn new(chain: &StochasticChain) -> Self {
        Propagator {
            n: chain.n(),
            p: chain.p().clone(),
            p_abs: absorbing(chain),
        }
    }

    fn ps_at(&self, s: f64) -> Array2<f64> {
        let mut ps = self.p.clone();
        ps.zip_mut_with(&self.p_abs, |a, &b| *a = (1.0 - s) * *a + s * b);
        ps
    }

    /// Advance `psi` by `exp(-i H(s) dt)` exactly (up to the eigensolver).
    fn step(&self, s: f64, dt: f64, psi: &mut Array1<Complex64>) -> Result<()> {
        let n = self.n;
        let ps = self.ps_at(s);
        let walk = EdgeWalk::from_rows(&ps);
        let mut d = Array2::<f64>::zeros((n, n));
        for x in 0..n {
            for y in 0..=x {
                let value = (ps[[x, y]] * ps[[y, x]]).sqrt();
                d[[x, y]] = value;
                d[[y, x]] = value;
            }
        }
        let (lambdas, vectors) = jacobi_eigh(&d)?;
        for k in 0..n - 1 {
            let lambda = lambdas[k];
            if lambda > 1.0 - DEGENERATE_TOL {
                // Degenerate pair: H acts as zero there.
                continue;
            }
            let energy = (1.0 - lambda * lambda).sqrt();
            let vk = vectors.column(k).to_owned();
            let wa = walk.apply_w_to_reference(&vk);
            // b_k = (W a_k - lambda a_k) / energy, with a_k = v_k (x) |0>.
            let mut b = wa / energy;
            let scale = lambda / energy;
            for x in 0..n {
                b[x * n] -= scale * vk[x];
            }

            let mut alpha = Complex64::new(0.0, 0.0);
            for x in 0..n {
                alpha += psi[x * n] * vk[x];
            }
            let mut beta = Complex64::new(0.0, 0.0);
            for i in 0..n * n {
                beta += psi[i] * b[i];
            }

            let (sin, cos) = (energy * dt).sin_cos();
            let delta_a = alpha * (cos - 1.0) - beta * sin;
            let delta_b = alpha * sin + beta * (cos - 1.0);
            for x in 0..n {
                psi[x * n] += delta_a * vk[x];
            }
            for i in 0..n * n {
                psi[i] += delta_b * b[i];
            }
        }
        Ok(())
    }
}

fn run_schedule(
    chain: &StochasticChain,
    sched: &Schedule,
    ht: f64,
    steps: usize,
    refinements: usize,
) -> Result<EvolutionTrace> {
    let n = chain.n();
    let dt = sched.t_total / steps as f64;
    let prop = Propagator::new(chain);

    let mut psi = Array1::<Complex64>::zeros(n * n);
    for x in 0..n {
        psi[x * n] = Complex64::new(chain.pi()[x].sqrt(), 0.0);
    }

    let mut times = Vec::with_capacity(steps + 1);
    let mut s_values = Vec::with_capacity(steps + 1);
    let mut overlaps = Vec::with_capacity(steps + 1);
    let mut norms = Vec::with_capacity(steps + 1);

    let record = |t: f64,
                  psi: &Array1<Complex64>,
                  times: &mut Vec<f64>,
                  s_values: &mut Vec<f64>,
                  overlaps: &mut Vec<f64>,
                  norms: &mut Vec<f64>|
     -> Result<()> {
        let s = sched.s_at(t);
        let vn = interpolated_stationary_raw(chain, s).mapv(f64::sqrt);
        let mut overlap = Complex64::new(0.0, 0.0);
        for x in 0..n {
            overlap += psi[x * n] * vn[x];
        }
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let drift = (norm - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::NonUnitaryDrift { drift });
        }
        times.push(t);
        s_values.push(s);
        overlaps.push(overlap.norm_sqr());
        norms.push(norm);
        Ok(())
    };

    record(0.0, &psi, &mut times, &mut s_values, &mut overlaps, &mut norms)?;
    for step in 0..steps {
        let t_mid = (step as f64 + 0.5) * dt;
        prop.step(sched.s_at(t_mid), dt, &mut psi)?;
        let t_next = (step + 1) as f64 * dt;
        record(
            t_next,
            &psi,
            &mut times,
            &mut s_values,
            &mut overlaps,
            &mut norms,
        )?;
    }

    let mut success_prob = 0.0;
    for &x in chain.marked() {
        for y in 0..n {
            success_prob += psi[x * n + y].norm_sqr();
        }
    }
    Ok(EvolutionTrace {
        schedule: *sched,
        ht,
        times,
        s_values,
        overlaps,
        norms,
        final_state: psi,
        success_prob,
        dt,
        refinements,
    })
}

/// Run the end-to-end adiabatic search: pick `T` from the hitting time,
/// start in the stationary edge state, and step to `t = T` with the
/// Cauchy-controlled midpoint exponential.
pub fn evolve(
    chain: &StochasticChain,
    epsilon: f64,
    dt_override: Option<f64>,
) -> Result<EvolutionTrace> {
    let n = chain.n();
    if n > EDGE_CAP {
        return Err(Error::DimensionCap { n, cap: EDGE_CAP });
    }
    let rt = running_time(chain, epsilon, 101)?;
    let sched = Schedule::new(chain.p_marked(), epsilon, rt.t);

    let dt0 = match dt_override {
        Some(dt) if dt > 0.0 => dt.min(rt.t),
        Some(dt) => {
            return Err(Error::bad_params(format!("dt must be positive, got {dt}")));
        }
        None => 0.02_f64.min(rt.t / 2000.0),
    };
    let mut steps = (rt.t / dt0).ceil().max(1.0) as usize;

    let mut prev = run_schedule(chain, &sched, rt.ht, steps, 0)?;
    for refinement in 1..=MAX_REFINEMENTS {
        steps *= 2;
        let finer = run_schedule(chain, &sched, rt.ht, steps, refinement)?;
        let delta = (finer.final_overlap() - prev.final_overlap()).abs();
        if delta < REFINE_TOL {
            return Ok(finer);
        }
        prev = finer;
    }
    Err(Error::StepControlFailure {
        refinements: MAX_REFINEMENTS,
    })
}

/// Sample a vertex from the final-state marginal. Deterministic for a
/// fixed seed.
pub fn measure(trace: &EvolutionTrace, n: usize, seed: u64) -> usize {
    let marginal = vertex_marginal(trace, n);
    let total: f64 = marginal.iter().sum();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let r = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (x, &w) in marginal.iter().enumerate() {
        acc += w;
        if r < acc {
            return x;
        }
    }
    n - 1
}

/// Per-step trace CSV: `t,s,overlap_sq,norm`.
pub fn trace_csv(trace: &EvolutionTrace) -> String {
    let mut out = String::from("t,s,overlap_sq,norm\n");
    for i in 0..trace.times.len() {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            trace.times[i], trace.s_values[i], trace.overlaps[i], trace.norms[i]
        ));
    }
    out
}

/// Summary of one evolution for the JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct EvolveSummary {
    #[serde(rename = "T")]
    pub t: f64,
    pub epsilon: f64,
    pub ht: f64,
    pub success_prob: f64,
    pub min_overlap: f64,
    pub dt: f64,
}

impl EvolveSummary {
    pub fn from_trace(trace: &EvolutionTrace) -> Self {
        EvolveSummary {
            t: trace.schedule.t_total,
            epsilon: trace.schedule.epsilon,
            ht: trace.ht,
            success_prob: trace.success_prob,
            min_overlap: trace.min_overlap(),
            dt: trace.dt,
        }
    }
}
