//! Edge-space operators for the quantized interpolated walk: the row-state
//! isometry completion `V(s)`, the swap-conjugated reflection
//! `W(s) = V^T S V`, and the Hamiltonian `H(s) = i [W, Pi_0]`.
//!
//! `V(s)` is block diagonal over the first register; each block is the
//! Householder reflection taking the reference state `|0>` to the square
//! root of a transition row. Blocks are symmetric orthogonal, so `V` is as
//! well, and applying `V`, `S`, or `W` to a vector costs O(n^2) without
//! ever materializing the dense operators. The dense forms are still built
//! for [`EdgeOperators`] because the verification suite diagonalizes them.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::io::Write;

use crate::chain::{interpolated_stationary_raw, interpolate, InterpolatedChain, StochasticChain};
use crate::discriminant::{discriminant, eigendecompose, SpectralDecomposition};
use crate::error::{Error, Result};

/// Vertex-count cap for edge-space construction (the edge space is n^2).
pub const EDGE_CAP: usize = 32;

/// Eigenvalues above `1 - PAIR_TOL` fold into the zero eigenspace instead
/// of forming a +/- energy pair.
const PAIR_TOL: f64 = 1e-8;

/// Magic header of the binary Hamiltonian dump.
pub const DUMP_MAGIC: &[u8; 8] = b"ADIAWH01";

/// Block-structured application of `V(s)` and `W(s)` on the edge space.
#[derive(Debug, Clone)]
pub(crate) struct EdgeWalk {
    n: usize,
    /// `sqrt_rows[(x, y)] = sqrt(P_xy(s))`.
    sqrt_rows: Array2<f64>,
    /// Householder vector per block; `None` when the block is the identity.
    householders: Vec<Option<Array1<f64>>>,
}

impl EdgeWalk {
    pub fn from_rows(ps: &Array2<f64>) -> Self {
        let n = ps.nrows();
        let sqrt_rows = ps.mapv(|p| p.max(0.0).sqrt());
        let householders = (0..n)
            .map(|x| {
                let u = sqrt_rows.row(x);
                // w = (e0 - u) / ||e0 - u||; identity block when u = e0.
                let mut w = -u.to_owned();
                w[0] += 1.0;
                let norm = w.dot(&w).sqrt();
                if norm < 1e-14 {
                    None
                } else {
                    Some(w / norm)
                }
            })
            .collect();
        EdgeWalk {
            n,
            sqrt_rows,
            householders,
        }
    }

    /// Apply the (symmetric) block reflection `V` in place.
    pub fn apply_v(&self, vec: &mut Array1<f64>) {
        let n = self.n;
        for x in 0..n {
            if let Some(w) = &self.householders[x] {
                let seg = vec.slice_mut(ndarray::s![x * n..(x + 1) * n]);
                let mut dot = 0.0;
                for (a, b) in w.iter().zip(seg.iter()) {
                    dot += a * b;
                }
                let scale = 2.0 * dot;
                let mut seg = seg;
                for (a, b) in seg.iter_mut().zip(w.iter()) {
                    *a -= scale * b;
                }
            }
        }
    }

    fn swap_registers(&self, vec: &mut Array1<f64>) {
        let n = self.n;
        for x in 0..n {
            for y in x + 1..n {
                vec.swap(x * n + y, y * n + x);
            }
        }
    }

    /// `W v = V S V v`.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn apply_w(&self, vec: &Array1<f64>) -> Array1<f64> {
        let mut z = vec.clone();
        self.apply_v(&mut z);
        self.swap_registers(&mut z);
        self.apply_v(&mut z);
        z
    }

    /// `W (v (x) |0>)` for a first-register vector `v`, exploiting that
    /// `V (v (x) |0>)` has block `x` equal to `v_x` times the sqrt row.
    pub fn apply_w_to_reference(&self, v: &Array1<f64>) -> Array1<f64> {
        let n = self.n;
        let mut z = Array1::<f64>::zeros(n * n);
        // After V and the swap: z[(x, y)] = v_y * sqrt_rows[(y, x)].
        for x in 0..n {
            for y in 0..n {
                z[x * n + y] = v[y] * self.sqrt_rows[[y, x]];
            }
        }
        self.apply_v(&mut z);
        z
    }

    /// Dense `V` (edge space dimension squared entries).
    pub fn dense_v(&self) -> Array2<f64> {
        let n = self.n;
        let dim = n * n;
        let mut v = Array2::<f64>::zeros((dim, dim));
        for x in 0..n {
            match &self.householders[x] {
                None => {
                    for a in 0..n {
                        v[[x * n + a, x * n + a]] = 1.0;
                    }
                }
                Some(w) => {
                    for a in 0..n {
                        for b in 0..n {
                            let identity = if a == b { 1.0 } else { 0.0 };
                            v[[x * n + a, x * n + b]] = identity - 2.0 * w[a] * w[b];
                        }
                    }
                }
            }
        }
        v
    }
}

/// Dense `V(s)` with the Householder extension.
pub fn build_v(interp: &InterpolatedChain) -> Result<Array2<f64>> {
    check_cap(interp.n())?;
    Ok(EdgeWalk::from_rows(interp.ps()).dense_v())
}

fn check_cap(n: usize) -> Result<()> {
    if n > EDGE_CAP {
        return Err(Error::DimensionCap { n, cap: EDGE_CAP });
    }
    Ok(())
}

/// `W = V^T S V` from a dense `V`.
fn w_from_dense_v(v: &Array2<f64>, n: usize) -> Array2<f64> {
    let dim = n * n;
    let mut sv = Array2::<f64>::zeros((dim, dim));
    for x in 0..n {
        for y in 0..n {
            // Row (x, y) of S V is row (y, x) of V.
            for c in 0..dim {
                sv[[x * n + y, c]] = v[[y * n + x, c]];
            }
        }
    }
    v.t().dot(&sv)
}

/// `H = i [W, Pi_0]` entrywise: `H_ab = i W_ab ([b in ref] - [a in ref])`.
fn h_from_w(w: &Array2<f64>, n: usize) -> Array2<Complex64> {
    let dim = n * n;
    Array2::from_shape_fn((dim, dim), |(a, b)| {
        let sign = (b % n == 0) as i64 - (a % n == 0) as i64;
        Complex64::new(0.0, sign as f64 * w[[a, b]])
    })
}

/// The dense edge-space operators at one interpolation parameter.
#[derive(Debug, Clone)]
pub struct EdgeOperators {
    s: f64,
    n: usize,
    v: Array2<f64>,
    w: Array2<f64>,
    h: Array2<Complex64>,
}

impl EdgeOperators {
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Vertex count; the operators act on dimension n^2.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn v(&self) -> &Array2<f64> {
        &self.v
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<Complex64> {
        &self.h
    }
}

/// Build `V`, `W`, and `H` for an interpolated chain.
pub fn build_h(interp: &InterpolatedChain) -> Result<EdgeOperators> {
    check_cap(interp.n())?;
    let n = interp.n();
    let v = EdgeWalk::from_rows(interp.ps()).dense_v();
    let w = w_from_dense_v(&v, n);
    let h = h_from_w(&w, n);
    Ok(EdgeOperators {
        s: interp.s(),
        n,
        v,
        w,
        h,
    })
}

/// Build the operators with each block of `V` post-composed by a seeded
/// random orthogonal map fixing the reference state. The energies of `H`
/// must not depend on this extension choice.
pub fn build_h_with_random_extension(
    interp: &InterpolatedChain,
    seed: u64,
) -> Result<EdgeOperators> {
    check_cap(interp.n())?;
    let n = interp.n();
    let mut v = EdgeWalk::from_rows(interp.ps()).dense_v();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for x in 0..n {
        let r = random_orthogonal_fixing_reference(n, &mut rng);
        // V_x <- V_x R_x applied inside block x.
        let mut block = Array2::<f64>::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                block[[a, b]] = v[[x * n + a, x * n + b]];
            }
        }
        let block = block.dot(&r);
        for a in 0..n {
            for b in 0..n {
                v[[x * n + a, x * n + b]] = block[[a, b]];
            }
        }
    }
    let w = w_from_dense_v(&v, n);
    let h = h_from_w(&w, n);
    Ok(EdgeOperators {
        s: interp.s(),
        n,
        v,
        w,
        h,
    })
}

/// Random orthogonal matrix with `R e_0 = e_0`, by Gram-Schmidt on a
/// seeded random basis of the complement.
fn random_orthogonal_fixing_reference(n: usize, rng: &mut ChaCha12Rng) -> Array2<f64> {
    let mut r = Array2::<f64>::zeros((n, n));
    r[[0, 0]] = 1.0;
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(n - 1);
    while basis.len() < n - 1 {
        let mut cand =
            Array1::from_iter((0..n - 1).map(|_| rng.random::<f64>() * 2.0 - 1.0));
        for b in &basis {
            let overlap = b.dot(&cand);
            cand = &cand - &(b * overlap);
        }
        let norm = cand.dot(&cand).sqrt();
        if norm > 1e-6 {
            basis.push(cand / norm);
        }
    }
    for (col, b) in basis.iter().enumerate() {
        for row in 0..n - 1 {
            r[[row + 1, col + 1]] = b[row];
        }
    }
    r
}

/// One +/- energy pair of the analytic spectrum, with the real basis
/// `{a_k = |v_k, 0>, b_k}` of its invariant two-dimensional subspace.
#[derive(Debug, Clone)]
pub struct EnergyPair {
    /// Index into the ascending discriminant spectrum.
    pub k: usize,
    pub lambda: f64,
    /// `sqrt(1 - lambda^2)`; the pair eigenvalues are +/- this.
    pub energy: f64,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
}

impl EnergyPair {
    /// Eigenvector `(a + i b)/sqrt(2)` for the `+energy` eigenvalue.
    pub fn psi_plus(&self) -> Array1<Complex64> {
        self.combine(1.0)
    }

    /// Eigenvector `(a - i b)/sqrt(2)` for the `-energy` eigenvalue.
    pub fn psi_minus(&self) -> Array1<Complex64> {
        self.combine(-1.0)
    }

    fn combine(&self, sign: f64) -> Array1<Complex64> {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        Array1::from_iter(
            self.a
                .iter()
                .zip(self.b.iter())
                .map(|(&a, &b)| Complex64::new(inv * a, sign * inv * b)),
        )
    }
}

/// The spectrum of `H(s)` implied by the discriminant spectrum: energy
/// pairs `+/- sqrt(1 - lambda_k^2)` plus a zero eigenspace.
#[derive(Debug, Clone)]
pub struct AnalyticSpectrum {
    pub pairs: Vec<EnergyPair>,
    /// Dimension of the zero eigenspace, including `Psi_n`.
    pub zero_dim: usize,
    /// The tracked zero-energy state `|v_n(s), 0>` (real amplitudes).
    pub psi_n: Array1<f64>,
}

impl AnalyticSpectrum {
    /// Full eigenvalue multiset, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut all: Vec<f64> = Vec::new();
        for pair in &self.pairs {
            all.push(-pair.energy);
            all.push(pair.energy);
        }
        all.extend(std::iter::repeat_n(0.0, self.zero_dim));
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all
    }
}

fn embed_reference(v: &Array1<f64>, n: usize) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(n * n);
    for x in 0..n {
        out[x * n] = v[x];
    }
    out
}

/// Analytic spectrum of `H(s)` from a discriminant decomposition.
///
/// Eigenvalues within `1e-8` of 1 (the s = 1 cluster) degenerate to zero
/// energy and are assigned to the zero space.
pub fn analytic_spectrum(
    ops: &EdgeOperators,
    spectral: &SpectralDecomposition,
) -> AnalyticSpectrum {
    let n = ops.n();
    let walk_pairs: Vec<EnergyPair> = (0..n - 1)
        .filter(|&k| spectral.lambda(k) <= 1.0 - PAIR_TOL)
        .map(|k| {
            let lambda = spectral.lambda(k);
            let energy = (1.0 - lambda * lambda).sqrt();
            let a = embed_reference(&spectral.vector(k), n);
            let wa = ops.w.dot(&a);
            let b = (&wa - &(&a * lambda)) / energy;
            EnergyPair {
                k,
                lambda,
                energy,
                a,
                b,
            }
        })
        .collect();
    let zero_dim = n * n - 2 * walk_pairs.len();
    AnalyticSpectrum {
        pairs: walk_pairs,
        zero_dim,
        psi_n: embed_reference(&spectral.vn(), n),
    }
}

/// Numerical eigenvalues of `H(s)`, ascending.
pub fn h_eigenvalues(ops: &EdgeOperators) -> Result<Array1<f64>> {
    crate::linalg::hermitian_eigenvalues(&ops.h)
}

fn complex_matvec_real(h: &Array2<Complex64>, v: &Array1<f64>) -> Array1<Complex64> {
    let dim = h.nrows();
    Array1::from_iter((0..dim).map(|i| {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..dim {
            acc += h[[i, j]] * v[j];
        }
        acc
    }))
}

/// Worst deviation of the 2x2 restriction of `H` to each pair subspace
/// from `sqrt(1 - lambda_k^2) sigma_y` in the ordered basis `{a_k, b_k}`.
pub fn verify_block_action(ops: &EdgeOperators, spectral: &SpectralDecomposition) -> f64 {
    let spectrum = analytic_spectrum(ops, spectral);
    let mut worst = 0.0_f64;
    for pair in &spectrum.pairs {
        let ha = complex_matvec_real(&ops.h, &pair.a);
        let hb = complex_matvec_real(&ops.h, &pair.b);
        let entries = [
            (dot_real_complex(&pair.a, &ha), Complex64::new(0.0, 0.0)),
            (
                dot_real_complex(&pair.a, &hb),
                Complex64::new(0.0, -pair.energy),
            ),
            (
                dot_real_complex(&pair.b, &ha),
                Complex64::new(0.0, pair.energy),
            ),
            (dot_real_complex(&pair.b, &hb), Complex64::new(0.0, 0.0)),
        ];
        for (got, expect) in entries {
            worst = worst.max((got - expect).norm());
        }
    }
    worst
}

fn dot_real_complex(a: &Array1<f64>, b: &Array1<Complex64>) -> Complex64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &z)| z * x)
        .sum()
}

/// Norm of `H` restricted to the orthogonal complement of all pair
/// subspaces and `Psi_n`, probed with seeded random vectors. Zero in exact
/// arithmetic.
pub fn b_perp_action_norm(
    ops: &EdgeOperators,
    spectral: &SpectralDecomposition,
    probes: usize,
    seed: u64,
) -> f64 {
    let n = ops.n();
    let dim = ops.dim();
    let spectrum = analytic_spectrum(ops, spectral);
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for k in 0..n {
        basis.push(embed_reference(&spectral.vector(k), n));
    }
    for pair in &spectrum.pairs {
        basis.push(pair.b.clone());
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..probes {
        let mut re = Array1::from_iter((0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0));
        let mut im = Array1::from_iter((0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0));
        for b in &basis {
            let ore = b.dot(&re);
            let oim = b.dot(&im);
            re = &re - &(b * ore);
            im = &im - &(b * oim);
        }
        let norm = (re.dot(&re) + im.dot(&im)).sqrt();
        if norm < 1e-12 {
            continue;
        }
        let hre = complex_matvec_real(&ops.h, &re);
        let him = complex_matvec_real(&ops.h, &im);
        let mut out = 0.0;
        for i in 0..dim {
            // H (re + i im) componentwise.
            let z = hre[i] + Complex64::new(0.0, 1.0) * him[i];
            out += z.norm_sqr();
        }
        worst = worst.max(out.sqrt() / norm);
    }
    worst
}

/// Residual of the no-leaking condition: the central-difference derivative
/// of `|v_n(s), 0>` projected onto the complement of the pair subspaces.
pub fn no_leak_check(chain: &StochasticChain, s: f64, ds: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::SOutOfRange { s });
    }
    check_cap(chain.n())?;
    chain.require_searchable()?;
    let n = chain.n();
    let interp = interpolate(chain, s)?;
    let spectral = eigendecompose(&discriminant(&interp))?;
    let walk = EdgeWalk::from_rows(interp.ps());

    let plus = interpolated_stationary_raw(chain, s + ds).mapv(f64::sqrt);
    let minus = interpolated_stationary_raw(chain, s - ds).mapv(f64::sqrt);
    let deriv = embed_reference(&((&plus - &minus) / (2.0 * ds)), n);

    let mut residual = deriv.clone();
    for k in 0..n {
        let a = embed_reference(&spectral.vector(k), n);
        let overlap = a.dot(&deriv);
        residual = &residual - &(&a * overlap);
        if k < n - 1 && spectral.lambda(k) <= 1.0 - PAIR_TOL {
            let lambda = spectral.lambda(k);
            let wa = walk.apply_w_to_reference(&spectral.vector(k));
            let b = (&wa - &(&a * lambda)) / (1.0 - lambda * lambda).sqrt();
            let overlap = b.dot(&deriv);
            residual = &residual - &(&b * overlap);
        }
    }
    Ok(residual.dot(&residual).sqrt())
}

/// Binary dump of `H`: magic `ADIAWH01`, little-endian u32 edge dimension,
/// then row-major interleaved (re, im) little-endian f64.
pub fn write_h_dump<W: Write>(ops: &EdgeOperators, out: &mut W) -> std::io::Result<()> {
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&(ops.dim() as u32).to_le_bytes())?;
    for row in 0..ops.dim() {
        for col in 0..ops.dim() {
            let z = ops.h[[row, col]];
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}
