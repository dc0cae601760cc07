//! The symmetric discriminant `D(s)`, its spectral decomposition, and the
//! two-dimensional rotation frame spanned by the marked and unmarked
//! superpositions.

use ndarray::{Array1, Array2};

use crate::chain::{interpolated_stationary_raw, InterpolatedChain, StochasticChain};
use crate::error::{Error, Result};
use crate::linalg::jacobi_eigh;

/// Eigenvalues within this distance of 1 are treated as the degenerate
/// top cluster (multiplicity m at s = 1).
const CLUSTER_TOL: f64 = 1e-8;

/// The discriminant `D(s)` with the entrywise square root of the
/// interpolated stationary distribution it fixes.
#[derive(Debug, Clone)]
pub struct Discriminant {
    s: f64,
    d: Array2<f64>,
    sqrt_pis: Array1<f64>,
}

impl Discriminant {
    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.d
    }

    /// Entrywise square root of `pi(s)`, the eigenvector with eigenvalue 1.
    pub fn sqrt_pis(&self) -> &Array1<f64> {
        &self.sqrt_pis
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }
}

/// Build `D(s)` entrywise as `sqrt(P(s) . P(s)^T)`.
///
/// The construction never divides by `pi(s)`, so it is well defined at
/// s = 1 where the similarity form breaks down.
pub fn discriminant(interp: &InterpolatedChain) -> Discriminant {
    let n = interp.n();
    let ps = interp.ps();
    let mut d = Array2::<f64>::zeros((n, n));
    for x in 0..n {
        for y in 0..=x {
            let value = (ps[[x, y]] * ps[[y, x]]).sqrt();
            d[[x, y]] = value;
            d[[y, x]] = value;
        }
    }
    Discriminant {
        s: interp.s(),
        d,
        sqrt_pis: interp.pis().mapv(f64::sqrt),
    }
}

/// Block closed form of `D(s)`, analytic in `s`.
///
/// Equals the entrywise definition on [0, 1] and extends smoothly slightly
/// outside, which the finite-difference checks rely on at s = 0.
pub(crate) fn discriminant_raw(chain: &StochasticChain, s: f64) -> Discriminant {
    let n = chain.n();
    let p = chain.p();
    let root_one_minus_s = (1.0 - s).sqrt();
    let mut d = Array2::<f64>::zeros((n, n));
    for x in 0..n {
        for y in 0..=x {
            let base = (p[[x, y]] * p[[y, x]]).sqrt();
            let value = match (chain.is_marked(x), chain.is_marked(y)) {
                (false, false) => base,
                (true, true) => {
                    if x == y {
                        (1.0 - s) * p[[x, x]] + s
                    } else {
                        (1.0 - s) * base
                    }
                }
                _ => root_one_minus_s * base,
            };
            d[[x, y]] = value;
            d[[y, x]] = value;
        }
    }
    Discriminant {
        s,
        d,
        sqrt_pis: interpolated_stationary_raw(chain, s).mapv(f64::sqrt),
    }
}

/// Ascending eigensystem of a symmetric matrix, with the top eigenvector
/// pinned to the analytic `sqrt(pi(s))`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    lambdas: Array1<f64>,
    vectors: Array2<f64>,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    /// Eigenvalues in ascending order; the last is 1.
    pub fn lambdas(&self) -> &Array1<f64> {
        &self.lambdas
    }

    pub fn lambda(&self, k: usize) -> f64 {
        self.lambdas[k]
    }

    /// Eigenvectors as columns, ordered to match [`Self::lambdas`].
    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> Array1<f64> {
        self.vectors.column(k).to_owned()
    }

    /// The stationary eigenvector `v_n = sqrt(pi(s))`.
    pub fn vn(&self) -> Array1<f64> {
        self.vector(self.n() - 1)
    }
}

/// Diagonalize a discriminant.
///
/// The eigenvector of the top eigenvalue is replaced by the analytic
/// `sqrt(pi(s))`; when the top eigenvalue is degenerate (s = 1 with m > 1),
/// the whole cluster is re-orthogonalized against it so the remaining
/// cluster basis stays orthonormal.
pub fn eigendecompose(disc: &Discriminant) -> Result<SpectralDecomposition> {
    let n = disc.n();
    let (lambdas, mut vectors) = jacobi_eigh(disc.matrix())?;
    let top = lambdas[n - 1];
    if (top - 1.0).abs() > CLUSTER_TOL {
        return Err(Error::ConsistencyFailure {
            what: "top discriminant eigenvalue is not 1".to_string(),
            deviation: (top - 1.0).abs(),
        });
    }

    let cluster: Vec<usize> = (0..n).filter(|&k| lambdas[k] > 1.0 - CLUSTER_TOL).collect();
    let sqrt_pis = disc.sqrt_pis().clone();
    if cluster.len() == 1 {
        vectors.column_mut(n - 1).assign(&sqrt_pis);
    } else {
        // Drop the cluster vector closest to sqrt(pi), Gram-Schmidt the
        // rest against it, and keep sqrt(pi) in the top slot.
        let cols: Vec<Array1<f64>> = cluster.iter().map(|&k| vectors.column(k).to_owned()).collect();
        let drop_idx = cols
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                let da = a.dot(&sqrt_pis).abs();
                let db = b.dot(&sqrt_pis).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        let mut basis: Vec<Array1<f64>> = vec![sqrt_pis.clone()];
        for (i, col) in cols.iter().enumerate() {
            if i == drop_idx {
                continue;
            }
            let mut w = col.clone();
            for b in &basis {
                let overlap = b.dot(&w);
                w = &w - &(b * overlap);
            }
            let norm = w.dot(&w).sqrt();
            if norm < 1e-6 {
                return Err(Error::ConsistencyFailure {
                    what: "degenerate cluster re-orthogonalization collapsed".to_string(),
                    deviation: norm,
                });
            }
            basis.push(w / norm);
        }
        for (slot, vec) in cluster[..cluster.len() - 1].iter().zip(basis[1..].iter()) {
            vectors.column_mut(*slot).assign(vec);
        }
        vectors.column_mut(n - 1).assign(&sqrt_pis);
    }

    Ok(SpectralDecomposition { lambdas, vectors })
}

/// Rotation angle `theta(s) = arcsin sqrt(p_M / (1 - s (1 - p_M)))`.
pub fn theta(p_marked: f64, s: f64) -> f64 {
    let ratio = p_marked / (1.0 - s * (1.0 - p_marked));
    ratio.sqrt().clamp(0.0, 1.0).asin()
}

/// Derivative of the rotation angle: `2 theta' = cos(theta) sin(theta) / (1-s)`.
pub fn theta_dot(p_marked: f64, s: f64) -> f64 {
    let th = theta(p_marked, s);
    th.cos() * th.sin() / (2.0 * (1.0 - s))
}

/// The two-dimensional frame `{|U>, |M>}` together with `v_n(s)` and its
/// orthogonal companion.
#[derive(Debug, Clone)]
pub struct RotationFrame {
    /// Unit superposition over unmarked vertices, weighted by sqrt(pi).
    pub u: Array1<f64>,
    /// Unit superposition over marked vertices, weighted by sqrt(pi).
    pub m_vec: Array1<f64>,
    /// Entrywise sqrt of the base stationary distribution.
    pub pi_vec: Array1<f64>,
    pub theta: f64,
    /// `v_n(s) = cos(theta) |U> + sin(theta) |M>`.
    pub vn: Array1<f64>,
    /// `-sin(theta) |U> + cos(theta) |M>`.
    pub vn_perp: Array1<f64>,
}

/// Build the rotation frame for a chain at interpolation parameter `s`.
pub fn rotation_frame(chain: &StochasticChain, s: f64) -> Result<RotationFrame> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::SOutOfRange { s });
    }
    let p_m = chain.p_marked();
    if !(p_m > 0.0 && p_m < 1.0) {
        return Err(Error::bad_params(format!(
            "rotation frame needs 0 < p_M < 1, got p_M = {p_m}"
        )));
    }
    let n = chain.n();
    let mut u = Array1::<f64>::zeros(n);
    let mut m_vec = Array1::<f64>::zeros(n);
    for x in 0..n {
        let amp = chain.pi()[x].sqrt();
        if chain.is_marked(x) {
            m_vec[x] = amp / p_m.sqrt();
        } else {
            u[x] = amp / (1.0 - p_m).sqrt();
        }
    }
    let th = theta(p_m, s);
    let vn = &u * th.cos() + &m_vec * th.sin();
    let vn_perp = &u * (-th.sin()) + &m_vec * th.cos();
    Ok(RotationFrame {
        u,
        m_vec,
        pi_vec: chain.pi().mapv(f64::sqrt),
        theta: th,
        vn,
        vn_perp,
    })
}

/// Flip eigenvector signs in `next` to maximize overlap with `prev`.
///
/// Only useful when plotting eigenvector components along an s-grid; all
/// algorithmic quantities are sign-invariant.
pub fn align_signs(prev: &SpectralDecomposition, next: &mut SpectralDecomposition) {
    let n = next.n();
    for k in 0..n {
        let dot = prev.vectors.column(k).dot(&next.vectors.column(k));
        if dot < 0.0 {
            next.vectors.column_mut(k).mapv_inplace(|x| -x);
        }
    }
}

/// CSV dump of the discriminant spectrum over an s-grid: `s,k,lambda`
/// with one row per grid point and eigenvalue, 17 significant digits,
/// 1-based k.
pub fn spectrum_csv(chain: &StochasticChain, grid_points: usize) -> Result<String> {
    let mut out = String::from("s,k,lambda\n");
    for i in 0..grid_points {
        let s = i as f64 / (grid_points - 1) as f64;
        let interp = crate::chain::interpolate(chain, s)?;
        let spectral = eigendecompose(&discriminant(&interp))?;
        for k in 0..spectral.n() {
            out.push_str(&format!("{:.16e},{},{:.16e}\n", s, k + 1, spectral.lambda(k)));
        }
    }
    Ok(out)
}
