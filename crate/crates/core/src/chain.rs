//! Classical Markov chains: validation, stationary distributions,
//! interpolation toward the absorbing walk, and test-graph generators.
//!
//! Conventions: transition matrices are row stochastic, distributions are
//! row vectors multiplied from the left, and marked vertices are stored as
//! a sorted, deduplicated index list.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lu_solve;

/// Analysis operations use dense n x n storage; chains above this size
/// are refused at construction.
pub const ANALYSIS_CAP: usize = 256;
/// Row sums may deviate from 1 by at most this much on input.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Stationary residual allowed on `pi P = pi`.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Detailed-balance violation allowed for a chain to count as reversible.
pub const REVERSIBLE_TOL: f64 = 1e-10;

/// A validated row-stochastic Markov chain with a marked vertex set.
///
/// Construction computes the stationary distribution and records the
/// ergodicity and reversibility check results; the fields are immutable
/// afterwards, so a value can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct StochasticChain {
    n: usize,
    p: Array2<f64>,
    marked: Vec<usize>,
    pi: Array1<f64>,
    p_marked: f64,
    lazy: bool,
    irreducible: bool,
    aperiodic: bool,
    reversible: bool,
    reversibility_violation: f64,
}

impl StochasticChain {
    /// Build and strictly validate a chain: row sums, irreducibility,
    /// aperiodicity, and detailed balance must all hold.
    pub fn new(p: Array2<f64>, marked: &[usize]) -> Result<Self> {
        Self::with_lazy_flag(p, marked, false)
    }

    /// As [`StochasticChain::new`] but recording whether the matrix already
    /// went through the laziness transform (used when loading files).
    pub fn with_lazy_flag(p: Array2<f64>, marked: &[usize], lazy: bool) -> Result<Self> {
        let chain = Self::build(p, marked, lazy)?;
        if !chain.irreducible {
            let vertex = first_unreachable(&chain.p).unwrap_or(0);
            return Err(Error::NotIrreducible { vertex });
        }
        if !chain.aperiodic {
            let (_, period) = ergodicity(&chain.p);
            return Err(Error::NotAperiodic { period });
        }
        if !chain.reversible {
            let (x, y, violation) = worst_balance_pair(&chain.p, &chain.pi);
            return Err(Error::NotReversible { x, y, violation });
        }
        Ok(chain)
    }

    /// Relaxed constructor for generated families: requires stochasticity,
    /// irreducibility (so the stationary distribution is unique) and
    /// reversibility, but tolerates periodic chains. Even cycles and tori
    /// are bipartite until the laziness transform is applied, and the
    /// generators must still be able to hand them out.
    fn new_allow_periodic(p: Array2<f64>, marked: &[usize]) -> Result<Self> {
        let chain = Self::build(p, marked, false)?;
        if !chain.irreducible {
            let vertex = first_unreachable(&chain.p).unwrap_or(0);
            return Err(Error::NotIrreducible { vertex });
        }
        if !chain.reversible {
            let (x, y, violation) = worst_balance_pair(&chain.p, &chain.pi);
            return Err(Error::NotReversible { x, y, violation });
        }
        Ok(chain)
    }

    fn build(p: Array2<f64>, marked: &[usize], lazy: bool) -> Result<Self> {
        let n = p.nrows();
        if n < 2 || p.ncols() != n {
            return Err(Error::bad_params(format!(
                "transition matrix must be square with n >= 2, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if n > ANALYSIS_CAP {
            return Err(Error::DimensionCap {
                n,
                cap: ANALYSIS_CAP,
            });
        }
        for ((row, col), &value) in p.indexed_iter() {
            if !(0.0..=1.0 + ROW_SUM_TOL).contains(&value) || !value.is_finite() {
                return Err(Error::BadEntry { row, col, value });
            }
        }
        for row in 0..n {
            let sum: f64 = p.row(row).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NonStochastic { row, sum });
            }
        }

        let mut marked: Vec<usize> = marked.to_vec();
        marked.sort_unstable();
        marked.dedup();
        if let Some(&idx) = marked.iter().find(|&&m| m >= n) {
            return Err(Error::MarkedOutOfRange { index: idx, n });
        }

        let (irreducible, period) = ergodicity(&p);
        if !irreducible {
            // No unique stationary distribution to compute; report now.
            let vertex = first_unreachable(&p).unwrap_or(0);
            return Err(Error::NotIrreducible { vertex });
        }
        let pi = stationary_distribution(&p)?;
        let violation = reversibility_violation(&p, &pi);
        let p_marked = marked.iter().map(|&x| pi[x]).sum();

        Ok(StochasticChain {
            n,
            p,
            marked,
            pi,
            p_marked,
            lazy,
            irreducible,
            aperiodic: period == 1,
            reversible: violation <= REVERSIBLE_TOL,
            reversibility_violation: violation,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn marked(&self) -> &[usize] {
        &self.marked
    }

    pub fn is_marked(&self, x: usize) -> bool {
        self.marked.binary_search(&x).is_ok()
    }

    /// Unmarked vertex indices in ascending order.
    pub fn unmarked(&self) -> Vec<usize> {
        (0..self.n).filter(|&x| !self.is_marked(x)).collect()
    }

    pub fn pi(&self) -> &Array1<f64> {
        &self.pi
    }

    /// Stationary probability mass on the marked set.
    pub fn p_marked(&self) -> f64 {
        self.p_marked
    }

    pub fn lazy(&self) -> bool {
        self.lazy
    }

    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.aperiodic
    }

    /// Detailed-balance verdict together with the worst violation found.
    pub fn is_reversible(&self) -> (bool, f64) {
        (self.reversible, self.reversibility_violation)
    }

    /// Guard used by the search algorithms: they need a nonempty proper
    /// marked set, ergodicity, and reversibility.
    pub fn require_searchable(&self) -> Result<()> {
        if self.marked.is_empty() || self.marked.len() >= self.n {
            return Err(Error::bad_params(format!(
                "marked set must satisfy 0 < |M| < n, got |M| = {} with n = {}",
                self.marked.len(),
                self.n
            )));
        }
        if !self.is_ergodic() {
            return Err(Error::bad_params(
                "chain is not ergodic; apply make_lazy or fix the support graph",
            ));
        }
        if !self.reversible {
            let (x, y, violation) = worst_balance_pair(&self.p, &self.pi);
            return Err(Error::NotReversible { x, y, violation });
        }
        Ok(())
    }
}

/// The interpolated walk `P(s) = (1-s) P + s P'` together with its
/// closed-form stationary distribution.
#[derive(Debug, Clone)]
pub struct InterpolatedChain {
    base: StochasticChain,
    s: f64,
    ps: Array2<f64>,
    pis: Array1<f64>,
}

impl InterpolatedChain {
    pub fn base(&self) -> &StochasticChain {
        &self.base
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn ps(&self) -> &Array2<f64> {
        &self.ps
    }

    pub fn pis(&self) -> &Array1<f64> {
        &self.pis
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }
}

/// Stationary distribution of an irreducible chain by direct linear solve.
///
/// Solves `(I - P^T + J) x = 1` where `J` is the all-ones matrix; the
/// system is nonsingular exactly when the chain is irreducible, so a
/// singular solve signals non-ergodicity missed upstream.
pub fn stationary_distribution(p: &Array2<f64>) -> Result<Array1<f64>> {
    let n = p.nrows();
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] = (if i == j { 1.0 } else { 0.0 }) - p[[j, i]] + 1.0;
        }
    }
    let b = Array1::<f64>::ones(n);
    let mut pi = lu_solve(&a, &b, "stationary distribution")?;
    let total: f64 = pi.sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::SingularSystem {
            context: "stationary distribution normalization".to_string(),
        });
    }
    pi.mapv_inplace(|x| x / total);
    if pi.iter().any(|&x| x <= 0.0) {
        return Err(Error::SingularSystem {
            context: "stationary distribution has a non-positive entry".to_string(),
        });
    }
    // Residual check: pi P = pi.
    let mut worst = 0.0_f64;
    for j in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            acc += pi[i] * p[[i, j]];
        }
        worst = worst.max((acc - pi[j]).abs());
    }
    if worst > STATIONARY_TOL {
        return Err(Error::SingularSystem {
            context: format!("stationary residual {worst:.3e} exceeds {STATIONARY_TOL:.1e}"),
        });
    }
    Ok(pi)
}

/// Irreducibility and period of the support digraph.
///
/// Irreducibility is two BFS passes (forward and backward from vertex 0);
/// the period is the gcd of `d(u) + 1 - d(v)` over support edges `(u, v)`,
/// with `d` the forward BFS levels. The chain is aperiodic iff the period
/// is 1.
pub fn ergodicity(p: &Array2<f64>) -> (bool, u64) {
    let n = p.nrows();
    let forward = bfs_levels(p, false);
    let backward = bfs_levels(p, true);
    let irreducible =
        forward.iter().all(|d| d.is_some()) && backward.iter().all(|d| d.is_some());
    if !irreducible {
        return (false, 0);
    }
    let mut g: u64 = 0;
    for u in 0..n {
        for v in 0..n {
            if p[[u, v]] > 0.0 {
                let diff = forward[u].unwrap() as i64 + 1 - forward[v].unwrap() as i64;
                g = gcd(g, diff.unsigned_abs());
            }
        }
    }
    (true, g.max(1))
}

/// True iff the chain is irreducible and aperiodic.
pub fn is_ergodic(p: &Array2<f64>) -> bool {
    let (irreducible, period) = ergodicity(p);
    irreducible && period == 1
}

fn bfs_levels(p: &Array2<f64>, reverse: bool) -> Vec<Option<usize>> {
    let n = p.nrows();
    let mut dist = vec![None; n];
    dist[0] = Some(0);
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for v in 0..n {
            let edge = if reverse { p[[v, u]] } else { p[[u, v]] };
            if edge > 0.0 && dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

fn first_unreachable(p: &Array2<f64>) -> Option<usize> {
    let forward = bfs_levels(p, false);
    if let Some(v) = forward.iter().position(|d| d.is_none()) {
        return Some(v);
    }
    bfs_levels(p, true).iter().position(|d| d.is_none())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Worst detailed-balance violation `max_{x,y} |pi_x P_xy - pi_y P_yx|`.
pub fn reversibility_violation(p: &Array2<f64>, pi: &Array1<f64>) -> f64 {
    let (_, _, violation) = worst_balance_pair(p, pi);
    violation
}

/// Detailed-balance predicate with the violation magnitude.
pub fn is_reversible(p: &Array2<f64>, pi: &Array1<f64>) -> (bool, f64) {
    let v = reversibility_violation(p, pi);
    (v <= REVERSIBLE_TOL, v)
}

fn worst_balance_pair(p: &Array2<f64>, pi: &Array1<f64>) -> (usize, usize, f64) {
    let n = p.nrows();
    let mut worst = (0, 0, 0.0_f64);
    for x in 0..n {
        for y in 0..n {
            let v = (pi[x] * p[[x, y]] - pi[y] * p[[y, x]]).abs();
            if v > worst.2 {
                worst = (x, y, v);
            }
        }
    }
    worst
}

/// Laziness transform `P <- (P + I) / 2`.
///
/// The stationary distribution is unchanged, the result is always
/// aperiodic, and every discriminant eigenvalue becomes nonnegative. The
/// hitting time doubles.
pub fn make_lazy(chain: &StochasticChain) -> StochasticChain {
    let n = chain.n;
    let mut p = chain.p.mapv(|x| x / 2.0);
    for i in 0..n {
        p[[i, i]] += 0.5;
    }
    let violation = reversibility_violation(&p, &chain.pi);
    StochasticChain {
        n,
        p,
        marked: chain.marked.clone(),
        pi: chain.pi.clone(),
        p_marked: chain.p_marked,
        lazy: true,
        irreducible: chain.irreducible,
        aperiodic: true,
        reversible: violation <= REVERSIBLE_TOL,
        reversibility_violation: violation,
    }
}

/// Absorbing walk `P'`: marked rows become self-loops, others are copied.
pub fn absorbing(chain: &StochasticChain) -> Array2<f64> {
    let n = chain.n;
    let mut p = chain.p.clone();
    for &x in &chain.marked {
        for y in 0..n {
            p[[x, y]] = if x == y { 1.0 } else { 0.0 };
        }
    }
    p
}

/// Interpolated chain `P(s) = (1-s) P + s P'` with its stationary
/// distribution from the closed form.
pub fn interpolate(chain: &StochasticChain, s: f64) -> Result<InterpolatedChain> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::SOutOfRange { s });
    }
    let p_abs = absorbing(chain);
    let mut ps = chain.p.clone();
    ps.zip_mut_with(&p_abs, |orig, &abs| *orig = (1.0 - s) * *orig + s * abs);
    let pis = interpolated_stationary(chain, s)?;
    Ok(InterpolatedChain {
        base: chain.clone(),
        s,
        ps,
        pis,
    })
}

/// Closed-form stationary distribution of `P(s)`:
/// `pi(s) = [(1-s) pi_U, pi_M] / (1 - s (1 - p_M))`.
pub fn interpolated_stationary(chain: &StochasticChain, s: f64) -> Result<Array1<f64>> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::SOutOfRange { s });
    }
    Ok(interpolated_stationary_raw(chain, s))
}

/// Same closed form without the range check; analytic in `s`, so callers
/// doing finite differences may evaluate slightly outside [0, 1].
pub(crate) fn interpolated_stationary_raw(chain: &StochasticChain, s: f64) -> Array1<f64> {
    let denom = 1.0 - s * (1.0 - chain.p_marked);
    Array1::from_iter((0..chain.n).map(|x| {
        let scale = if chain.is_marked(x) { 1.0 } else { 1.0 - s };
        scale * chain.pi[x] / denom
    }))
}

/// Built-in chain families for tests and experiments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Complete graph walk on `n` vertices: off-diagonal 1/(n-1).
    Complete { n: usize },
    /// Symmetric cycle walk `(C + C^T) / 2`. Bipartite (hence periodic)
    /// for even `n` until the laziness transform is applied.
    Cycle { n: usize },
    /// Nearest-neighbour walk on a `w x h` torus, step probability 1/4
    /// each direction. Bipartite for even `w*h` grids.
    Torus { w: usize, h: usize },
    /// Random reversible chain: a cycle backbone plus random chords with
    /// symmetric positive weights, rows normalized. Detailed balance holds
    /// by construction with `pi` proportional to the weighted degree.
    RandomReversible { n: usize, degree: usize, seed: u64 },
}

/// Generate a chain of the given family with the given marked set.
///
/// Deterministic for a fixed seed. The result is reversible and
/// irreducible; even cycles and tori are periodic until `make_lazy`.
pub fn generate(family: &Family, marked: &[usize]) -> Result<StochasticChain> {
    let p = match family {
        Family::Complete { n } => {
            require(*n >= 2, "complete family needs n >= 2")?;
            let n = *n;
            let off = 1.0 / (n as f64 - 1.0);
            Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { off })
        }
        Family::Cycle { n } => {
            require(*n >= 2, "cycle family needs n >= 2")?;
            let n = *n;
            let mut p = Array2::<f64>::zeros((n, n));
            for x in 0..n {
                p[[x, (x + 1) % n]] += 0.5;
                p[[x, (x + n - 1) % n]] += 0.5;
            }
            p
        }
        Family::Torus { w, h } => {
            require(*w >= 1 && *h >= 1 && w * h >= 2, "torus needs w*h >= 2")?;
            let (w, h) = (*w, *h);
            let n = w * h;
            let mut p = Array2::<f64>::zeros((n, n));
            for r in 0..h {
                for c in 0..w {
                    let x = r * w + c;
                    let steps = [
                        ((r + 1) % h) * w + c,
                        ((r + h - 1) % h) * w + c,
                        r * w + (c + 1) % w,
                        r * w + (c + w - 1) % w,
                    ];
                    for y in steps {
                        p[[x, y]] += 0.25;
                    }
                }
            }
            p
        }
        Family::RandomReversible { n, degree, seed } => {
            require(*n >= 3, "random_reversible needs n >= 3")?;
            require(
                *degree >= 2 && *degree < *n,
                "random_reversible needs 2 <= degree < n",
            )?;
            random_reversible(*n, *degree, *seed)
        }
    };
    StochasticChain::new_allow_periodic(p, marked)
}

fn require(cond: bool, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::bad_params(message))
    }
}

fn random_reversible(n: usize, degree: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut weights = Array2::<f64>::zeros((n, n));
    let add_edge = |w: &mut Array2<f64>, rng: &mut ChaCha12Rng, x: usize, y: usize| {
        if x != y && w[[x, y]] == 0.0 {
            let weight = 0.5 + rng.random::<f64>();
            w[[x, y]] = weight;
            w[[y, x]] = weight;
            true
        } else {
            false
        }
    };
    // Cycle backbone keeps the graph connected; the (0, 2) chord closes a
    // triangle so the chain cannot be bipartite.
    for x in 0..n {
        add_edge(&mut weights, &mut rng, x, (x + 1) % n);
    }
    if n > 3 {
        add_edge(&mut weights, &mut rng, 0, 2);
    }
    let target = n.max(n * degree / 2);
    let mut edges = weights.iter().filter(|&&w| w > 0.0).count() / 2;
    let mut attempts = 0;
    while edges < target && attempts < 100 * target {
        let x = rng.random_range(0..n);
        let y = rng.random_range(0..n);
        if add_edge(&mut weights, &mut rng, x, y) {
            edges += 1;
        }
        attempts += 1;
    }
    let mut p = weights;
    for x in 0..n {
        let strength: f64 = p.row(x).sum();
        for y in 0..n {
            p[[x, y]] /= strength;
        }
    }
    p
}

/// On-disk chain schema: `{"n": .., "P": [[..]], "marked": [..], "lazy": ..}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    n: usize,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    marked: Vec<usize>,
    lazy: bool,
}

/// Serialize a chain to the JSON file schema.
pub fn to_json(chain: &StochasticChain) -> String {
    let file = ChainFile {
        n: chain.n,
        p: (0..chain.n)
            .map(|i| chain.p.row(i).to_vec())
            .collect(),
        marked: chain.marked.clone(),
        lazy: chain.lazy,
    };
    serde_json::to_string_pretty(&file).expect("chain schema serializes")
}

/// Parse and strictly validate a chain from the JSON file schema.
pub fn from_json(text: &str) -> Result<StochasticChain> {
    let file: ChainFile = serde_json::from_str(text)?;
    if file.p.len() != file.n || file.p.iter().any(|r| r.len() != file.n) {
        return Err(Error::bad_params(format!(
            "P must be an {0}x{0} matrix matching \"n\"",
            file.n
        )));
    }
    let flat: Vec<f64> = file.p.into_iter().flatten().collect();
    let p = Array2::from_shape_vec((file.n, file.n), flat).expect("shape checked above");
    StochasticChain::with_lazy_flag(p, &file.marked, file.lazy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    /// Independent oracle: stationary distribution by long power iteration.
    fn power_iteration_pi(p: &Array2<f64>, iters: usize) -> Array1<f64> {
        let n = p.nrows();
        let mut pi = Array1::from_elem(n, 1.0 / n as f64);
        for _ in 0..iters {
            let mut next = Array1::<f64>::zeros(n);
            for j in 0..n {
                for i in 0..n {
                    next[j] += pi[i] * p[[i, j]];
                }
            }
            pi = next;
        }
        pi
    }

    fn two_state() -> StochasticChain {
        StochasticChain::new(arr2(&[[0.5, 0.5], [0.5, 0.5]]), &[1]).unwrap()
    }

    pub(crate) fn lazy_k4() -> StochasticChain {
        let third = 1.0 / 3.0;
        let p = arr2(&[
            [0.0, third, third, third],
            [third, 0.0, third, third],
            [third, third, 0.0, third],
            [third, third, third, 0.0],
        ]);
        make_lazy(&StochasticChain::new(p, &[3]).unwrap())
    }

    #[test]
    fn symmetric_two_state_has_uniform_pi() {
        let chain = two_state();
        assert!((chain.pi()[0] - 0.5).abs() < 1e-14);
        assert!((chain.pi()[1] - 0.5).abs() < 1e-14);
        assert!((chain.p_marked() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn disconnected_chain_is_rejected() {
        let p = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            StochasticChain::new(p, &[1]),
            Err(Error::NotIrreducible { .. })
        ));
    }

    #[test]
    fn lazy_k4_pi_matches_power_iteration_oracle() {
        let chain = lazy_k4();
        let oracle = power_iteration_pi(chain.p(), 4000);
        for x in 0..4 {
            assert!((chain.pi()[x] - 0.25).abs() < 1e-12, "pi = {:?}", chain.pi());
            assert!((chain.pi()[x] - oracle[x]).abs() < 1e-10);
        }
        assert!((chain.p_marked() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn stationary_matches_hand_solved_two_state() {
        let p = arr2(&[[0.9, 0.1], [0.2, 0.8]]);
        let pi = stationary_distribution(&p).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12, "pi = {pi:?}");
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-12);
        let oracle = power_iteration_pi(&p, 2000);
        assert!((pi[0] - oracle[0]).abs() < 1e-12);
    }

    #[test]
    fn lazy_clockwise_cycle_has_uniform_pi() {
        let n = 4;
        let mut p = Array2::<f64>::zeros((n, n));
        for x in 0..n {
            p[[x, x]] = 0.5;
            p[[x, (x + 1) % n]] = 0.5;
        }
        let pi = stationary_distribution(&p).unwrap();
        for x in 0..n {
            assert!((pi[x] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn reversibility_examples() {
        let chain = two_state();
        let (rev, viol) = chain.is_reversible();
        assert!(rev);
        assert!(viol < 1e-15);

        let p = arr2(&[[0.9, 0.1], [0.2, 0.8]]);
        let pi = stationary_distribution(&p).unwrap();
        let (rev, _) = is_reversible(&p, &pi);
        assert!(rev, "2/3 * 0.1 == 1/3 * 0.2");

        // Directed lazy cycle: ergodic but not reversible.
        let n = 5;
        let mut p = Array2::<f64>::zeros((n, n));
        for x in 0..n {
            p[[x, x]] = 0.5;
            p[[x, (x + 1) % n]] = 0.5;
        }
        let pi = stationary_distribution(&p).unwrap();
        let (rev, viol) = is_reversible(&p, &pi);
        assert!(!rev);
        assert!(viol > 0.01, "violation = {viol}");
        assert!(matches!(
            StochasticChain::new(p, &[0]),
            Err(Error::NotReversible { .. })
        ));
    }

    #[test]
    fn ergodicity_examples() {
        let chain = lazy_k4();
        assert!(chain.is_ergodic());

        let swap = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let (irr, period) = ergodicity(&swap);
        assert!(irr);
        assert_eq!(period, 2);
        assert!(!is_ergodic(&swap));

        // P(1) = P' has absorbing marked self-loops, so it is reducible.
        let absorbed = absorbing(&chain);
        assert!(!is_ergodic(&absorbed));
    }

    #[test]
    fn make_lazy_k4_entries_and_spectral_map() {
        let third = 1.0 / 3.0;
        let p = arr2(&[
            [0.0, third, third, third],
            [third, 0.0, third, third],
            [third, third, 0.0, third],
            [third, third, third, 0.0],
        ]);
        let chain = StochasticChain::new(p.clone(), &[3]).unwrap();
        let lazy = make_lazy(&chain);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.5 } else { 1.0 / 6.0 };
                assert!((lazy.p()[[i, j]] - expect).abs() < 1e-15);
            }
        }
        // Spectral mapping oracle: eigenvalues go lambda -> (lambda + 1)/2.
        let (before, _) = crate::linalg::jacobi_eigh(&p).unwrap();
        let (after, _) = crate::linalg::jacobi_eigh(lazy.p()).unwrap();
        for k in 0..4 {
            assert!(
                (after[k] - (before[k] + 1.0) / 2.0).abs() < 1e-12,
                "k = {k}: {} vs {}",
                after[k],
                before[k]
            );
        }
        // pi unchanged.
        assert!((lazy.pi()[0] - 0.25).abs() < 1e-14);
        assert!(lazy.lazy());
    }

    #[test]
    fn absorbing_examples() {
        let chain = two_state();
        let p_abs = absorbing(&chain);
        assert_eq!(p_abs, arr2(&[[0.5, 0.5], [0.0, 1.0]]));
        // Applying P' twice from a marked vertex stays put.
        let twice = p_abs.dot(&p_abs);
        assert!((twice[[1, 1]] - 1.0).abs() < 1e-15);
        assert!(twice[[1, 0]].abs() < 1e-15);
    }

    #[test]
    fn interpolation_examples() {
        let chain = two_state();
        let mid = interpolate(&chain, 0.5).unwrap();
        let expect = arr2(&[[0.5, 0.5], [0.25, 0.75]]);
        assert!(crate::linalg::max_abs_diff(mid.ps(), &expect) < 1e-15);

        let zero = interpolate(&chain, 0.0).unwrap();
        assert_eq!(zero.ps(), chain.p());
        let one = interpolate(&chain, 1.0).unwrap();
        assert_eq!(one.ps(), &absorbing(&chain));

        assert!(matches!(
            interpolate(&chain, 1.5),
            Err(Error::SOutOfRange { .. })
        ));
        assert!(matches!(
            interpolate(&chain, f64::NAN),
            Err(Error::SOutOfRange { .. })
        ));
    }

    #[test]
    fn interpolated_stationary_examples() {
        let chain = lazy_k4();
        let pis = interpolated_stationary(&chain, 0.5).unwrap();
        for x in 0..3 {
            assert!((pis[x] - 0.2).abs() < 1e-14, "pis = {pis:?}");
        }
        assert!((pis[3] - 0.4).abs() < 1e-14);

        let at_zero = interpolated_stationary(&chain, 0.0).unwrap();
        assert!(crate::linalg::max_abs_diff_vec(&at_zero, chain.pi()) < 1e-15);

        let at_one = interpolated_stationary(&chain, 1.0).unwrap();
        assert!((at_one[3] - 1.0).abs() < 1e-14);
        for x in 0..3 {
            assert!(at_one[x].abs() < 1e-15);
        }

        // pi(s) is stationary for P(s) and extended detailed balance holds.
        for s in [0.0, 0.25, 0.5, 0.75, 0.95] {
            let interp = interpolate(&chain, s).unwrap();
            let mut worst = 0.0_f64;
            for j in 0..4 {
                let mut acc = 0.0;
                for i in 0..4 {
                    acc += interp.pis()[i] * interp.ps()[[i, j]];
                }
                worst = worst.max((acc - interp.pis()[j]).abs());
            }
            assert!(worst < 1e-12, "s = {s}: residual {worst}");
            let viol = reversibility_violation(interp.ps(), interp.pis());
            assert!(viol < 1e-12, "s = {s}: balance violation {viol}");
        }
    }

    #[test]
    fn generator_examples() {
        let k4 = generate(&Family::Complete { n: 4 }, &[3]).unwrap();
        assert!((k4.p()[[0, 1]] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(k4.p()[[0, 0]], 0.0);

        let cycle = generate(&Family::Cycle { n: 4 }, &[0]).unwrap();
        assert!((cycle.p()[[0, 1]] - 0.5).abs() < 1e-15);
        assert!((cycle.p()[[0, 3]] - 0.5).abs() < 1e-15);
        assert!((cycle.pi()[2] - 0.25).abs() < 1e-12);
        // Even cycle is bipartite until lazified.
        assert!(!cycle.is_ergodic());
        assert!(make_lazy(&cycle).is_ergodic());

        let r1 = generate(
            &Family::RandomReversible {
                n: 6,
                degree: 3,
                seed: 7,
            },
            &[0],
        )
        .unwrap();
        let r2 = generate(
            &Family::RandomReversible {
                n: 6,
                degree: 3,
                seed: 7,
            },
            &[0],
        )
        .unwrap();
        assert_eq!(r1.p(), r2.p(), "same seed must reproduce the same matrix");

        assert!(matches!(
            generate(&Family::Complete { n: 1 }, &[0]),
            Err(Error::BadParams { .. })
        ));
    }

    #[test]
    fn generated_families_ergodic_reversible_after_lazy() {
        let families = [
            Family::Complete { n: 5 },
            Family::Cycle { n: 6 },
            Family::Torus { w: 3, h: 4 },
            Family::RandomReversible {
                n: 8,
                degree: 3,
                seed: 11,
            },
        ];
        for family in families {
            let chain = generate(&family, &[0]).unwrap();
            let lazy = make_lazy(&chain);
            assert!(lazy.is_ergodic(), "{family:?} not ergodic after lazy");
            let (rev, viol) = lazy.is_reversible();
            assert!(rev, "{family:?} violation {viol}");
        }
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let chain = lazy_k4();
        let text = to_json(&chain);
        let back = from_json(&text).unwrap();
        assert_eq!(back.n(), 4);
        assert_eq!(back.marked(), &[3]);
        assert!(back.lazy());
        assert!(crate::linalg::max_abs_diff(back.p(), chain.p()) == 0.0);

        // Unknown keys are rejected.
        let with_extra = text.replace("\"lazy\"", "\"extra\": 1, \"lazy\"");
        assert!(matches!(from_json(&with_extra), Err(Error::Json(_))));

        // Corrupted row sum is named.
        let bad = r#"{"n":2,"P":[[0.51,0.5],[0.5,0.5]],"marked":[1],"lazy":false}"#;
        match from_json(bad) {
            Err(Error::NonStochastic { row, .. }) => assert_eq!(row, 0),
            other => panic!("expected NonStochastic, got {other:?}"),
        }
    }

    #[test]
    fn stationary_solve_rejects_reducible_input() {
        // Two closed classes: the fixed-vector system is rank deficient.
        let p = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            stationary_distribution(&p),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn analysis_cap_refuses_oversized_chains() {
        let n = ANALYSIS_CAP + 1;
        let p = Array2::from_elem((n, n), 1.0 / n as f64);
        assert!(matches!(
            StochasticChain::new(p, &[0]),
            Err(Error::DimensionCap { .. })
        ));
    }

    #[test]
    fn row_stochasticity_preserved_by_transforms() {
        let chain = lazy_k4();
        for s in [0.0, 0.3, 0.7, 1.0] {
            let interp = interpolate(&chain, s).unwrap();
            for row in 0..4 {
                let sum: f64 = interp.ps().row(row).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        for row in 0..4 {
            let sum: f64 = absorbing(&chain).row(row).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_is_affine_in_s() {
        let chain = lazy_k4();
        let p0 = interpolate(&chain, 0.0).unwrap().ps().clone();
        let p1 = interpolate(&chain, 1.0).unwrap().ps().clone();
        for s in [0.25, 0.5, 0.9] {
            let ps = interpolate(&chain, s).unwrap().ps().clone();
            let affine = &p0 + &(&p1 - &p0) * s;
            assert!(crate::linalg::max_abs_diff(&ps, &affine) < 1e-15);
        }
    }

    #[test]
    fn marked_row_diagonal_blend() {
        // Marked-row diagonal of P(s) is (1-s) P_xx + s.
        let chain = lazy_k4();
        for s in [0.2, 0.6] {
            let interp = interpolate(&chain, s).unwrap();
            let expect = (1.0 - s) * 0.5 + s;
            assert!((interp.ps()[[3, 3]] - expect).abs() < 1e-15);
        }
    }
}
