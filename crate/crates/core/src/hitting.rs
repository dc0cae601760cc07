//! Classical and extended hitting times, the resolvent `A(s)`, and the
//! numerical lemma checks that tie them together.
//!
//! Two independent computation routes are kept on purpose: hitting times
//! flow either through a linear solve with `B(s) = I - D(s) + v_n v_n^T`
//! or through the eigenexpansion of the discriminant, and the invariant
//! suite asserts they agree.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::chain::StochasticChain;
use crate::discriminant::{
    discriminant_raw, eigendecompose, theta, theta_dot, SpectralDecomposition,
};
use crate::error::{Error, Result};
use crate::linalg::lu_solve;

/// Eigenvalues this close to 1 (for k != n) make the resolvent denominator
/// degenerate.
const DEGENERATE_TOL: f64 = 1e-12;

/// Hard cap on the length of a single Monte Carlo walk.
const WALK_CAP: u64 = 10_000_000;

/// How a hitting time was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HtMethod {
    LinearSolve,
    Series,
    MonteCarlo,
}

/// A hitting-time estimate with its method and, for Monte Carlo, the
/// standard error of the mean.
#[derive(Debug, Clone, Serialize)]
pub struct HittingReport {
    pub ht: f64,
    pub method: HtMethod,
    pub stderr: Option<f64>,
    #[serde(skip)]
    pub trials: Option<u64>,
    #[serde(skip)]
    pub t_max: Option<usize>,
}

/// Unmarked indices, the unmarked block of `D(1)`, and the normalized
/// unmarked superposition restricted to that block.
fn unmarked_block(chain: &StochasticChain) -> Result<(Vec<usize>, Array2<f64>, Array1<f64>)> {
    chain.require_searchable()?;
    let unmarked = chain.unmarked();
    let m = unmarked.len();
    let p = chain.p();
    let mut d_uu = Array2::<f64>::zeros((m, m));
    for (i, &x) in unmarked.iter().enumerate() {
        for (j, &y) in unmarked.iter().enumerate() {
            d_uu[[i, j]] = (p[[x, y]] * p[[y, x]]).sqrt();
        }
    }
    let scale = (1.0 - chain.p_marked()).sqrt();
    let u = Array1::from_iter(unmarked.iter().map(|&x| chain.pi()[x].sqrt() / scale));
    Ok((unmarked, d_uu, u))
}

/// Hitting time by linear solve: `HT = <U| (I - D_UU(1))^{-1} |U>`.
pub fn classical_hitting_time(chain: &StochasticChain) -> Result<HittingReport> {
    let (_, d_uu, u) = unmarked_block(chain)?;
    let m = u.len();
    let mut a = -d_uu;
    for i in 0..m {
        a[[i, i]] += 1.0;
    }
    let y = lu_solve(&a, &u, "I - D_UU is singular; the marked set does not absorb")?;
    Ok(HittingReport {
        ht: u.dot(&y),
        method: HtMethod::LinearSolve,
        stderr: None,
        trials: None,
        t_max: None,
    })
}

/// Partial sums of the hitting-time series `sum_{t<=T} <U| D_UU^t |U>` for
/// every `T` up to `t_max`. Nondecreasing; converges to the linear-solve
/// hitting time.
pub fn hitting_time_series(chain: &StochasticChain, t_max: usize) -> Result<Vec<f64>> {
    let (_, d_uu, u) = unmarked_block(chain)?;
    let mut sums = Vec::with_capacity(t_max + 1);
    let mut w = u.clone();
    let mut acc = u.dot(&w);
    sums.push(acc);
    for _ in 0..t_max {
        w = d_uu.dot(&w);
        acc += u.dot(&w);
        sums.push(acc);
    }
    Ok(sums)
}

/// Hitting time by summing the series until the estimated geometric tail
/// drops below `tail_tol`.
pub fn series_hitting_time(chain: &StochasticChain, tail_tol: f64) -> Result<HittingReport> {
    let (_, d_uu, u) = unmarked_block(chain)?;
    let cap = 2_000_000usize;
    let mut w = u.clone();
    let mut term = u.dot(&w);
    let mut acc = term;
    let mut t = 0usize;
    while t < cap {
        let prev = term;
        w = d_uu.dot(&w);
        term = u.dot(&w);
        acc += term;
        t += 1;
        if term < 1e-18 {
            break;
        }
        let ratio = term / prev;
        if ratio < 1.0 {
            let tail = term * ratio / (1.0 - ratio);
            if tail < tail_tol {
                break;
            }
        }
    }
    if t >= cap {
        return Err(Error::ConsistencyFailure {
            what: "hitting-time series did not converge".to_string(),
            deviation: term,
        });
    }
    Ok(HittingReport {
        ht: acc,
        method: HtMethod::Series,
        stderr: None,
        trials: None,
        t_max: Some(t),
    })
}

/// Per-trial RNG seed: a SplitMix64 mix of the base seed and trial index,
/// so trials are independent streams and the aggregate is reproducible.
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn sample_cumulative(weights: &[f64], r: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Monte Carlo hitting time: absorbing walks started from the stationary
/// distribution restricted to unmarked vertices.
pub fn monte_carlo_hitting_time(
    chain: &StochasticChain,
    trials: u64,
    seed: u64,
) -> Result<HittingReport> {
    chain.require_searchable()?;
    if trials == 0 {
        return Err(Error::bad_params("monte_carlo_hitting_time needs trials >= 1"));
    }
    let n = chain.n();
    let unmarked = chain.unmarked();
    let start_weights: Vec<f64> = unmarked
        .iter()
        .map(|&x| chain.pi()[x] / (1.0 - chain.p_marked()))
        .collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|x| chain.p().row(x).to_vec()).collect();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for trial in 0..trials {
        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, trial));
        let mut x = unmarked[sample_cumulative(&start_weights, rng.random::<f64>())];
        let mut steps = 0u64;
        loop {
            x = sample_cumulative(&rows[x], rng.random::<f64>());
            steps += 1;
            if chain.is_marked(x) {
                break;
            }
            if steps >= WALK_CAP {
                return Err(Error::WalkDidNotAbsorb { cap: WALK_CAP });
            }
        }
        sum += steps as f64;
        sum_sq += (steps as f64) * (steps as f64);
    }
    let mean = sum / trials as f64;
    let stderr = if trials > 1 {
        let var = (sum_sq - sum * sum / trials as f64) / (trials as f64 - 1.0);
        Some((var.max(0.0) / trials as f64).sqrt())
    } else {
        None
    };
    Ok(HittingReport {
        ht: mean,
        method: HtMethod::MonteCarlo,
        stderr,
        trials: Some(trials),
        t_max: None,
    })
}

/// Eigenexpansion route for `HT(s)`; accepts `s` slightly outside [0, 1]
/// for finite differencing.
fn extended_hitting_time_from(
    chain: &StochasticChain,
    s: f64,
    spectral: &SpectralDecomposition,
) -> Result<f64> {
    let n = chain.n();
    let scale = (1.0 - chain.p_marked()).sqrt();
    let u = Array1::from_iter((0..n).map(|x| {
        if chain.is_marked(x) {
            0.0
        } else {
            chain.pi()[x].sqrt() / scale
        }
    }));
    let mut ht = 0.0;
    for k in 0..n - 1 {
        let lambda = spectral.lambda(k);
        let overlap = spectral.vector(k).dot(&u);
        if lambda > 1.0 - DEGENERATE_TOL {
            if s < 1.0 {
                return Err(Error::DegenerateDenominator { lambda, s });
            }
            // At s = 1 the top cluster is supported on marked vertices and
            // has zero overlap with |U>; those terms vanish.
            continue;
        }
        ht += overlap * overlap / (1.0 - lambda);
    }
    Ok(ht)
}

pub(crate) fn extended_hitting_time_raw(chain: &StochasticChain, s: f64) -> Result<f64> {
    let spectral = eigendecompose(&discriminant_raw(chain, s))?;
    extended_hitting_time_from(chain, s, &spectral)
}

/// Extended hitting time `HT(s) = sum_{k != n} |<v_k|U>|^2 / (1 - lambda_k)`.
///
/// `HT(1)` equals the classical hitting time; `HT(0)` is the residual of
/// `|U>` outside the stationary direction weighted by the spectral gaps.
/// On [0, 1) the function equals `HT+ sin^4(theta(s))` where
/// `HT+ = lim_{s->1} HT(s)`. With a single marked vertex `HT+ = HT`; with
/// several marked vertices the limit can exceed `HT`, because the
/// eigenvalue-1 cluster forming at s = 1 carries overlap terms whose
/// ratio tends to a nonzero value even though both numerator and
/// denominator vanish.
pub fn extended_hitting_time(chain: &StochasticChain, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::SOutOfRange { s });
    }
    chain.require_searchable()?;
    extended_hitting_time_raw(chain, s)
}

/// Apply the resolvent `A(s)` to a vector by solving with
/// `B(s) = I - D(s) + v_n v_n^T` and projecting the stationary direction
/// back out. Independent of the eigensolver.
pub fn apply_a(chain: &StochasticChain, s: f64, b: &Array1<f64>) -> Result<Array1<f64>> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::SOutOfRange { s });
    }
    chain.require_searchable()?;
    let disc = discriminant_raw(chain, s);
    let n = chain.n();
    let vn = disc.sqrt_pis();
    let mut bmat = -disc.matrix().clone();
    for i in 0..n {
        bmat[[i, i]] += 1.0;
        for j in 0..n {
            bmat[[i, j]] += vn[i] * vn[j];
        }
    }
    let y = lu_solve(&bmat, b, "B(s) = I - D + v_n v_n^T is singular")?;
    let overlap = vn.dot(b);
    Ok(&y - &(vn * overlap))
}

/// Closed form for the discriminant derivative
/// `dD/ds = {Pi_M, I - D(s)} / (2 (1-s))`, whose unmarked block vanishes.
pub fn d_discriminant(chain: &StochasticChain, s: f64) -> Result<Array2<f64>> {
    if s >= 1.0 {
        return Err(Error::SAtOne);
    }
    if s < 0.0 {
        return Err(Error::SOutOfRange { s });
    }
    let disc = discriminant_raw(chain, s);
    let n = chain.n();
    let mut out = Array2::<f64>::zeros((n, n));
    for x in 0..n {
        for y in 0..n {
            let marks = chain.is_marked(x) as usize + chain.is_marked(y) as usize;
            if marks == 0 {
                continue;
            }
            let identity = if x == y { 1.0 } else { 0.0 };
            out[[x, y]] =
                marks as f64 * (identity - disc.matrix()[[x, y]]) / (2.0 * (1.0 - s));
        }
    }
    Ok(out)
}

/// Central finite difference `(D(s+h) - D(s-h)) / 2h` of the discriminant,
/// the independent check against [`d_discriminant`]. Valid on [0, 0.9]
/// (the block form of `D` extends analytically past s = 0).
pub fn finite_difference_discriminant(
    chain: &StochasticChain,
    s: f64,
    h: f64,
) -> Array2<f64> {
    let plus = discriminant_raw(chain, s + h).matrix().clone();
    let minus = discriminant_raw(chain, s - h).matrix().clone();
    (&plus - &minus) / (2.0 * h)
}

/// Max relative deviation of `HT(s)` from `HT * sin^4(theta(s))` over a
/// grid of interpolation parameters.
///
/// Exact (up to roundoff) for singleton marked sets and for symmetric
/// multi-marked sets; asymmetric multi-marked chains show a genuine gap
/// because the boundary constant of the extension is `HT+`, not `HT`
/// (see [`extended_hitting_time`]).
pub fn verify_lemma_ht(chain: &StochasticChain, grid: &[f64]) -> Result<f64> {
    let ht = classical_hitting_time(chain)?.ht;
    let p_m = chain.p_marked();
    let mut worst = 0.0_f64;
    for &s in grid {
        let hts = extended_hitting_time(chain, s)?;
        let sin2 = theta(p_m, s).sin().powi(2);
        worst = worst.max((hts - ht * sin2 * sin2).abs() / ht);
    }
    Ok(worst)
}

/// Max relative deviation between the central finite difference of `HT(s)`
/// and the identity `dHT/ds = 4 theta' cot(theta) HT(s)` over a grid in
/// [0, 0.9].
pub fn verify_derivative_lemma(chain: &StochasticChain, grid: &[f64]) -> Result<f64> {
    chain.require_searchable()?;
    let p_m = chain.p_marked();
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for &s in grid {
        if !(0.0..=0.9).contains(&s) {
            return Err(Error::bad_params(
                "derivative lemma grid must lie in [0, 0.9]",
            ));
        }
        let fd = (extended_hitting_time_raw(chain, s + h)?
            - extended_hitting_time_raw(chain, s - h)?)
            / (2.0 * h);
        let th = theta(p_m, s);
        let rhs =
            4.0 * theta_dot(p_m, s) * th.cos() / th.sin() * extended_hitting_time_raw(chain, s)?;
        worst = worst.max((fd - rhs).abs() / rhs.abs());
    }
    Ok(worst)
}

/// CSV of the extended hitting time against the closed form:
/// `s,HT_s,HT_times_sin4theta,deviation`.
pub fn ht_grid_csv(chain: &StochasticChain, grid_points: usize) -> Result<String> {
    let ht = classical_hitting_time(chain)?.ht;
    let p_m = chain.p_marked();
    let mut out = String::from("s,HT_s,HT_times_sin4theta,deviation\n");
    for i in 0..grid_points {
        let s = i as f64 / (grid_points - 1) as f64;
        let hts = extended_hitting_time(chain, s)?;
        let sin2 = theta(p_m, s).sin().powi(2);
        let closed = ht * sin2 * sin2;
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s,
            hts,
            closed,
            (hts - closed).abs() / ht
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{generate, interpolate, make_lazy, Family, StochasticChain};
    use crate::discriminant::{discriminant, rotation_frame};
    use crate::linalg::max_abs_diff;
    use ndarray::arr2;

    fn two_state() -> StochasticChain {
        StochasticChain::new(arr2(&[[0.5, 0.5], [0.5, 0.5]]), &[1]).unwrap()
    }

    fn k4() -> StochasticChain {
        let third = 1.0 / 3.0;
        let p = arr2(&[
            [0.0, third, third, third],
            [third, 0.0, third, third],
            [third, third, 0.0, third],
            [third, third, third, 0.0],
        ]);
        StochasticChain::new(p, &[3]).unwrap()
    }

    fn lazy_k4() -> StochasticChain {
        make_lazy(&k4())
    }

    #[test]
    fn linear_solve_examples() {
        assert!((classical_hitting_time(&lazy_k4()).unwrap().ht - 6.0).abs() < 1e-10);
        assert!((classical_hitting_time(&two_state()).unwrap().ht - 2.0).abs() < 1e-12);
        // Laziness doubles the hitting time.
        let plain = classical_hitting_time(&k4()).unwrap().ht;
        assert!((plain - 3.0).abs() < 1e-10);
        let doubled = classical_hitting_time(&lazy_k4()).unwrap().ht;
        assert!((doubled - 2.0 * plain).abs() < 1e-8);
    }

    #[test]
    fn series_examples() {
        let chain = lazy_k4();
        let sums = hitting_time_series(&chain, 200).unwrap();
        assert!((sums[0] - 1.0).abs() < 1e-14, "t_max = 0 gives <U|U> = 1");
        assert!((sums[200] - 6.0).abs() < 1e-8);
        for t in 1..=50 {
            assert!(sums[t] >= sums[t - 1], "partial sums must be nondecreasing");
        }
        let auto = series_hitting_time(&chain, 1e-9).unwrap();
        assert!((auto.ht - 6.0).abs() < 1e-8, "ht = {}", auto.ht);
    }

    #[test]
    fn monte_carlo_matches_geometric() {
        let chain = lazy_k4();
        let report = monte_carlo_hitting_time(&chain, 100_000, 42).unwrap();
        let stderr = report.stderr.unwrap();
        // Geometric(1/6): sd = sqrt(1-p)/p = 6 sqrt(5/6) ~ 5.477.
        assert!((stderr - 6.0 * (5.0_f64 / 6.0).sqrt() / (100_000.0_f64).sqrt()).abs() < 0.005);
        assert!(
            (report.ht - 6.0).abs() < 3.0 * stderr,
            "ht = {}, stderr = {}",
            report.ht,
            stderr
        );
    }

    #[test]
    fn monte_carlo_deterministic_and_degenerate() {
        let chain = lazy_k4();
        let a = monte_carlo_hitting_time(&chain, 500, 7).unwrap();
        let b = monte_carlo_hitting_time(&chain, 500, 7).unwrap();
        assert_eq!(a.ht, b.ht, "same seed must reproduce the same estimate");

        // Single unmarked vertex that always jumps to the marked one.
        let p = arr2(&[[0.0, 1.0], [0.5, 0.5]]);
        let chain = StochasticChain::new(p, &[1]).unwrap();
        let report = monte_carlo_hitting_time(&chain, 200, 1).unwrap();
        assert_eq!(report.ht, 1.0);
        assert_eq!(report.stderr, Some(0.0));
    }

    #[test]
    fn extended_hitting_time_closed_forms() {
        let two = two_state();
        for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let expect = 2.0 / ((2.0 - s) * (2.0 - s));
            let got = extended_hitting_time(&two, s).unwrap();
            assert!((got - expect).abs() < 1e-12, "s = {s}: {got} vs {expect}");
        }
        let chain = lazy_k4();
        assert!((extended_hitting_time(&chain, 1.0).unwrap() - 6.0).abs() < 1e-8);
        assert!((extended_hitting_time(&chain, 0.0).unwrap() - 0.375).abs() < 1e-12);
    }

    #[test]
    fn apply_a_contracts() {
        let chain = lazy_k4();
        for s in [0.0, 0.4, 0.8] {
            let frame = rotation_frame(&chain, s).unwrap();
            let interp = interpolate(&chain, s).unwrap();
            let vn = discriminant(&interp).sqrt_pis().clone();

            // A v_n = 0.
            let avn = apply_a(&chain, s, &vn).unwrap();
            assert!(avn.iter().all(|x| x.abs() < 1e-10), "A v_n = {avn:?}");

            // A|M> = -cot(theta) A|U>.
            let am = apply_a(&chain, s, &frame.m_vec).unwrap();
            let au = apply_a(&chain, s, &frame.u).unwrap();
            let cot = frame.theta.cos() / frame.theta.sin();
            let residual = max_abs_diff(
                &am.clone().insert_axis(ndarray::Axis(0)),
                &au.mapv(|x| -cot * x).insert_axis(ndarray::Axis(0)),
            );
            assert!(residual < 1e-8, "s = {s}: A|M> proportionality residual {residual}");

            // <U|A|U> equals the eigenexpansion HT(s).
            let quad = frame.u.dot(&apply_a(&chain, s, &frame.u).unwrap());
            let hts = extended_hitting_time(&chain, s).unwrap();
            assert!((quad - hts).abs() < 1e-8, "s = {s}: {quad} vs {hts}");

            // <vn_perp|A|vn_perp> = HT(s) / sin^2(theta).
            let quad_perp = frame
                .vn_perp
                .dot(&apply_a(&chain, s, &frame.vn_perp).unwrap());
            let expect = hts / (frame.theta.sin() * frame.theta.sin());
            assert!((quad_perp - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn discriminant_derivative_closed_form() {
        let two = two_state();
        for s in [0.0, 0.3, 0.6, 0.9] {
            let ddot = d_discriminant(&two, s).unwrap();
            let off = -0.25 / (1.0 - s).sqrt();
            let expect = arr2(&[[0.0, off], [off, 0.5]]);
            assert!(max_abs_diff(&ddot, &expect) < 1e-13, "s = {s}");
        }
        assert!(matches!(d_discriminant(&two, 1.0), Err(Error::SAtOne)));

        // Unmarked block identically zero, and the anticommutator identity
        // Ddot + {Pi_M, D}/(2(1-s)) = Pi_M/(1-s).
        let chain = lazy_k4();
        for s in [0.0, 0.5, 0.9] {
            let ddot = d_discriminant(&chain, s).unwrap();
            for x in 0..3 {
                for y in 0..3 {
                    assert_eq!(ddot[[x, y]], 0.0);
                }
            }
            let d = discriminant(&interpolate(&chain, s).unwrap()).matrix().clone();
            let n = chain.n();
            let mut lhs = ddot.clone();
            for x in 0..n {
                for y in 0..n {
                    let marks =
                        chain.is_marked(x) as usize as f64 + chain.is_marked(y) as usize as f64;
                    lhs[[x, y]] += marks * d[[x, y]] / (2.0 * (1.0 - s));
                }
            }
            let mut rhs = Array2::<f64>::zeros((n, n));
            for &x in chain.marked() {
                rhs[[x, x]] = 1.0 / (1.0 - s);
            }
            assert!(max_abs_diff(&lhs, &rhs) < 1e-10, "s = {s}");
        }
    }

    #[test]
    fn discriminant_derivative_matches_finite_difference() {
        let chain = make_lazy(
            &generate(
                &Family::RandomReversible {
                    n: 6,
                    degree: 3,
                    seed: 9,
                },
                &[0, 3],
            )
            .unwrap(),
        );
        let h = 1e-5;
        for s in [0.0, 0.25, 0.5, 0.75, 0.9] {
            let closed = d_discriminant(&chain, s).unwrap();
            let plus = discriminant_raw(&chain, s + h).matrix().clone();
            let minus = discriminant_raw(&chain, s - h).matrix().clone();
            let fd = (&plus - &minus) / (2.0 * h);
            assert!(
                max_abs_diff(&closed, &fd) < 1e-6,
                "s = {s}: {}",
                max_abs_diff(&closed, &fd)
            );
        }
    }

    #[test]
    fn lemma_ht_deviation_small() {
        let grid: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        assert!(verify_lemma_ht(&two_state(), &grid).unwrap() < 1e-12);
        assert!(verify_lemma_ht(&lazy_k4(), &grid).unwrap() < 1e-10);
        // Spot values: s = 1 gives HT on both sides, s = 0 gives 3/8 for K4.
        assert!(
            (extended_hitting_time(&lazy_k4(), 0.0).unwrap() - 6.0 * 0.5_f64.powi(4)).abs()
                < 1e-12
        );
    }

    #[test]
    fn derivative_lemma_examples() {
        // Closed form for the two-state chain: dHT/ds = 4/(2-s)^3.
        let two = two_state();
        let p_m = two.p_marked();
        let s = 0.5;
        let th = theta(p_m, s);
        let rhs = 4.0 * theta_dot(p_m, s) * th.cos() / th.sin()
            * extended_hitting_time(&two, s).unwrap();
        assert!(
            (rhs - 4.0 / (1.5_f64).powi(3)).abs() < 1e-12,
            "rhs = {rhs} vs {}",
            4.0 / 1.5_f64.powi(3)
        );
        let grid = [0.0, 0.25, 0.5, 0.75, 0.9];
        assert!(verify_derivative_lemma(&two, &grid).unwrap() < 1e-5);
        assert!(verify_derivative_lemma(&lazy_k4(), &grid).unwrap() < 1e-5);
    }

    #[test]
    fn ht_monotone_in_s() {
        let chain = lazy_k4();
        let mut prev = -1.0;
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let hts = extended_hitting_time(&chain, s).unwrap();
            assert!(hts >= prev - 1e-12, "HT(s) decreased at s = {s}");
            prev = hts;
        }
    }

    /// The closed form `HT(s) = HT sin^4(theta)` pins the boundary constant
    /// to the classical hitting time, which is exact for a single marked
    /// vertex (and for symmetric multi-marked sets). For an asymmetric
    /// marked pair the sum defining `HT(s)` is discontinuous at s = 1: the
    /// ratio `HT(s)/sin^4(theta)` is still constant on [0, 1), but the
    /// constant is the one-sided limit `HT+ = lim_{s->1} HT(s) >= HT`, and
    /// the eigenvalue-1 cluster terms it carries drop out of the exact
    /// s = 1 evaluation. This regression freezes a chain where the gap is
    /// a few percent.
    #[test]
    fn multi_marked_ratio_is_constant_with_boundary_jump() {
        let p = arr2(&[
            [0.5, 0.10916859202807663, 0.1141510047991558, 0.0772665787160601, 0.08277710152572666, 0.11663672293098085],
            [0.19215320798119206, 0.5, 0.30784679201880794, 0.0, 0.0, 0.0],
            [0.13427387580405958, 0.20572946105780593, 0.5, 0.15999666313813452, 0.0, 0.0],
            [0.11737737955468247, 0.0, 0.2066292817091155, 0.5, 0.17599333873620204, 0.0],
            [0.11518986815261915, 0.0, 0.0, 0.16121578749388266, 0.5, 0.22359434435349815],
            [0.21029657240205968, 0.0, 0.0, 0.0, 0.2897034275979404, 0.5],
        ]);
        let chain = StochasticChain::with_lazy_flag(p, &[0, 5], true).unwrap();
        let p_m = chain.p_marked();
        let ht = classical_hitting_time(&chain).unwrap().ht;

        // HT(s)/sin^4(theta) is constant on [0, 1) ...
        let ht_plus = extended_hitting_time(&chain, 0.0).unwrap() / (p_m * p_m);
        for i in 0..=99 {
            let s = i as f64 / 100.0;
            let hts = extended_hitting_time(&chain, s).unwrap();
            let sin2 = theta(p_m, s).sin().powi(2);
            assert!(
                (hts - ht_plus * sin2 * sin2).abs() / ht_plus < 1e-10,
                "ratio drifts at s = {s}"
            );
        }
        // ... the boundary value matches the classical hitting time ...
        assert!((extended_hitting_time(&chain, 1.0).unwrap() - ht).abs() < 1e-8);
        // ... and the limit constant strictly exceeds it for this chain.
        assert!(ht_plus > ht * 1.02, "HT+ = {ht_plus}, HT = {ht}");
        // Both resolvent routes agree on HT(s); the jump is a property of
        // the extension, not a solver artifact.
        let frame = rotation_frame(&chain, 0.95).unwrap();
        let quad = frame.u.dot(&apply_a(&chain, 0.95, &frame.u).unwrap());
        let hts = extended_hitting_time(&chain, 0.95).unwrap();
        assert!((quad - hts).abs() < 1e-8);
    }

    #[test]
    fn near_degenerate_spectrum_is_refused() {
        // Two states joined by a vanishing edge: the second discriminant
        // eigenvalue is within 1e-12 of 1 and the resolvent denominator
        // degenerates for s < 1.
        let delta = 1e-13;
        let p = arr2(&[[1.0 - delta, delta], [delta, 1.0 - delta]]);
        let chain = StochasticChain::new(p, &[1]).unwrap();
        assert!(matches!(
            extended_hitting_time(&chain, 0.0),
            Err(Error::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn searchability_guards() {
        let p = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        let no_marks = StochasticChain::new(p, &[]).unwrap();
        assert!(classical_hitting_time(&no_marks).is_err());
        assert!(extended_hitting_time(&no_marks, 0.5).is_err());
    }

    #[test]
    fn ht_csv_shape() {
        let csv = ht_grid_csv(&lazy_k4(), 11).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "s,HT_s,HT_times_sin4theta,deviation");
        assert_eq!(lines.len(), 12);
    }

    #[test]
    fn report_serialization() {
        let report = classical_hitting_time(&lazy_k4()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"method\":\"linear_solve\""));
        assert!(json.contains("\"stderr\":null"));
    }
}
