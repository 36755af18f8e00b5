//! Two-particle interaction scalars and their action on sector vectors.
//!
//! Every pairwise interaction is governed by four rational functions of two
//! spectral variables. An equal-species pair only picks up the scalar `S`;
//! a mixed pair mixes the stay and cross channels with weights built from
//! `P`, `Q` and `T`. Applying the adjacent-pair operator for every step of a
//! transposition path transports a basis vector to the amplitude column used
//! by the transition formula.

use rand::Rng;
use thiserror::Error;

use crate::combinatorics::{
    decompose, sector_of, CombinatoricsError, Permutation, Sector, SpeciesWord, TranspositionPath,
};
use crate::Complex64;

/// Below this magnitude the interaction denominator counts as singular.
/// Admissible contours keep it bounded away from zero by construction.
pub(crate) const DENOMINATOR_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum BetheError {
    #[error("hop probability p = {0} must lie strictly inside (0, 1)")]
    InvalidAsymmetry(f64),
    #[error("interaction denominator magnitude {abs:.3e} below floor {floor:.1e}")]
    SingularDenominator { abs: f64, floor: f64 },
    #[error("spectral variables must be nonzero")]
    ZeroSpectralVariable,
    #[error("degree mismatch: permutation {sigma}, word {word}, spectral point {point}")]
    DegreeMismatch {
        sigma: usize,
        word: usize,
        point: usize,
    },
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
}

/// Hop probabilities of the process: right with `p`, left with `q = 1 - p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    p: f64,
    q: f64,
}

impl SystemParams {
    pub fn new(p: f64) -> Result<Self, BetheError> {
        if !(p > 0.0 && p < 1.0) || !p.is_finite() {
            return Err(BetheError::InvalidAsymmetry(p));
        }
        Ok(SystemParams { p, q: 1.0 - p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

/// One spectral variable per particle; all entries nonzero.
#[derive(Clone, Debug)]
pub struct SpectralPoint {
    xi: Vec<Complex64>,
}

impl SpectralPoint {
    pub fn new(xi: Vec<Complex64>) -> Result<Self, BetheError> {
        if xi.iter().any(|z| z.norm_sqr() == 0.0) {
            return Err(BetheError::ZeroSpectralVariable);
        }
        Ok(SpectralPoint { xi })
    }

    /// Independent uniform angles on the circle of the given radius.
    pub fn random_on_circle<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Self {
        assert!(radius > 0.0);
        let xi = (0..n)
            .map(|_| {
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                Complex64::from_polar(radius, theta)
            })
            .collect();
        SpectralPoint { xi }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn xi(&self, i: usize) -> Complex64 {
        self.xi[i]
    }

    pub fn variables(&self) -> &[Complex64] {
        &self.xi
    }
}

/// Interaction scalars for one ordered pair of spectral variables, with the
/// hop probabilities already folded into the cross channels.
///
/// With `D = p + q xi_a xi_b - xi_a`:
///
/// * `same       = -(p + q xi_a xi_b - xi_b) / D`
/// * `stay_asc   = (p - q xi_a)(xi_b - 1) / D`
/// * `stay_desc  = (p - q xi_b)(xi_a - 1) / D`
/// * `cross_asc  = q (xi_b - xi_a) / D`
/// * `cross_desc = p (xi_b - xi_a) / D`
///
/// The decomposition `same = stay_asc + cross_asc = stay_desc + cross_desc`
/// holds identically and is what makes the single-species case collapse to a
/// product of `same` factors.
#[derive(Clone, Copy, Debug)]
pub struct RScalars {
    pub same: Complex64,
    pub stay_asc: Complex64,
    pub stay_desc: Complex64,
    pub cross_asc: Complex64,
    pub cross_desc: Complex64,
}

/// Evaluates the scalars at `(xi_a, xi_b)`. The order matters: a path step
/// exchanging values `(beta, alpha)` evaluates `pair_scalars(xi[alpha],
/// xi[beta], ..)`, and the inverse step uses the arguments swapped.
pub fn pair_scalars(
    xi_a: Complex64,
    xi_b: Complex64,
    params: &SystemParams,
) -> Result<RScalars, BetheError> {
    let p = params.p;
    let q = params.q;
    let c = p + q * xi_a * xi_b;
    let denom = c - xi_a;
    let abs = denom.norm();
    if abs < DENOMINATOR_FLOOR {
        return Err(BetheError::SingularDenominator {
            abs,
            floor: DENOMINATOR_FLOOR,
        });
    }
    let inv = denom.inv();
    let diff = xi_b - xi_a;
    Ok(RScalars {
        same: -(c - xi_b) * inv,
        stay_asc: (p - q * xi_a) * (xi_b - 1.0) * inv,
        stay_desc: (p - q * xi_b) * (xi_a - 1.0) * inv,
        cross_asc: q * diff * inv,
        cross_desc: p * diff * inv,
    })
}

/// Ordering of the two letters under an adjacent pair operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairClass {
    Equal,
    Ascending,
    Descending,
}

/// Precomputed swap targets and pair classes for every adjacent position of a
/// sector, so repeated transports avoid word lookups.
#[derive(Clone, Debug)]
pub struct SectorOps {
    sector: Sector,
    /// `swap_rank[l][r]`: rank of the word at rank `r` with letters `l`,
    /// `l + 1` exchanged. Equal pairs map to themselves.
    swap_rank: Vec<Vec<u32>>,
    class: Vec<Vec<PairClass>>,
}

impl SectorOps {
    pub fn new(sector: &Sector) -> Self {
        let words = sector.words();
        let n = sector.word_len();
        let dim = sector.dim();
        let positions = n.saturating_sub(1);
        let mut swap_rank = vec![vec![0u32; dim]; positions];
        let mut class = vec![vec![PairClass::Equal; dim]; positions];
        for l in 0..positions {
            for (r, w) in words.iter().enumerate() {
                let a = w.letters()[l];
                let b = w.letters()[l + 1];
                if a == b {
                    swap_rank[l][r] = r as u32;
                } else {
                    class[l][r] = if a < b {
                        PairClass::Ascending
                    } else {
                        PairClass::Descending
                    };
                    let swapped = w.swapped(l).expect("adjacent position in range");
                    swap_rank[l][r] = sector.rank(&swapped).expect("swap stays in sector") as u32;
                }
            }
        }
        SectorOps {
            sector: sector.clone(),
            swap_rank,
            class,
        }
    }

    pub fn sector(&self) -> &Sector {
        &self.sector
    }

    pub fn dim(&self) -> usize {
        self.sector.dim()
    }

    /// Applies the adjacent pair operator at `position` to `input`,
    /// overwriting `out`. Both slices must have the sector dimension and must
    /// not alias.
    pub fn apply(&self, position: usize, sc: &RScalars, input: &[Complex64], out: &mut [Complex64]) {
        let dim = self.dim();
        debug_assert_eq!(input.len(), dim);
        debug_assert_eq!(out.len(), dim);
        let swap = &self.swap_rank[position];
        let class = &self.class[position];
        out.fill(Complex64::ZERO);
        for r in 0..dim {
            let v = input[r];
            match class[r] {
                PairClass::Equal => out[r] += sc.same * v,
                PairClass::Ascending => {
                    out[r] += sc.stay_asc * v;
                    out[swap[r] as usize] += sc.cross_asc * v;
                }
                PairClass::Descending => {
                    out[r] += sc.stay_desc * v;
                    out[swap[r] as usize] += sc.cross_desc * v;
                }
            }
        }
    }

    /// Allocating convenience around [`SectorOps::apply`].
    pub fn applied(&self, position: usize, sc: &RScalars, input: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.dim()];
        self.apply(position, sc, input, &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Dense blocks
// ---------------------------------------------------------------------------

/// Small dense complex matrix on a sector basis, row-major.
#[derive(Clone, Debug)]
pub struct AmplitudeBlock {
    dim: usize,
    entries: Vec<Complex64>,
}

impl AmplitudeBlock {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex64::ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::ONE;
        }
        AmplitudeBlock { dim, entries }
    }

    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Self {
        assert_eq!(entries.len(), dim * dim);
        AmplitudeBlock { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    /// `self * rhs`, so `rhs` acts first.
    pub fn mul(&self, rhs: &AmplitudeBlock) -> AmplitudeBlock {
        assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        let mut entries = vec![Complex64::ZERO; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                for j in 0..d {
                    entries[i * d + j] += a * rhs.entries[k * d + j];
                }
            }
        }
        AmplitudeBlock { dim: d, entries }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.entries[i * d + j] * v[j]).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &AmplitudeBlock) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_deviation_from_identity(&self) -> f64 {
        self.max_abs_diff(&AmplitudeBlock::identity(self.dim))
    }
}

/// Dense matrix of the adjacent pair operator at `position` on the sector,
/// built column by column from the basis action.
pub fn transposition_matrix(ops: &SectorOps, position: usize, sc: &RScalars) -> AmplitudeBlock {
    let dim = ops.dim();
    let mut entries = vec![Complex64::ZERO; dim * dim];
    let mut basis = vec![Complex64::ZERO; dim];
    let mut col = vec![Complex64::ZERO; dim];
    for j in 0..dim {
        basis[j] = Complex64::ONE;
        ops.apply(position, sc, &basis, &mut col);
        basis[j] = Complex64::ZERO;
        for i in 0..dim {
            entries[i * dim + j] = col[i];
        }
    }
    AmplitudeBlock { dim, entries }
}

/// Two-letter boundary block: `[1]` on an equal pair, `[[p, p], [q, q]]` on a
/// distinct pair in the (ascending, descending) basis.
pub fn boundary_block(distinct: bool, params: &SystemParams) -> AmplitudeBlock {
    if distinct {
        let p = Complex64::from(params.p);
        let q = Complex64::from(params.q);
        AmplitudeBlock::from_entries(2, vec![p, p, q, q])
    } else {
        AmplitudeBlock::from_entries(1, vec![Complex64::ONE])
    }
}

/// Two-letter interaction block written directly from the case rules.
pub fn pair_block(
    distinct: bool,
    xi_a: Complex64,
    xi_b: Complex64,
    params: &SystemParams,
) -> Result<AmplitudeBlock, BetheError> {
    let sc = pair_scalars(xi_a, xi_b, params)?;
    Ok(if distinct {
        AmplitudeBlock::from_entries(
            2,
            vec![sc.stay_asc, sc.cross_desc, sc.cross_asc, sc.stay_desc],
        )
    } else {
        AmplitudeBlock::from_entries(1, vec![sc.same])
    })
}

/// Same block obtained from the boundary matrix `B` instead of the case
/// rules: with `c = p + q xi_a xi_b`, the block is
/// `-(cI - xi_a B)^{-1} (cI - xi_b B)`. Kept as an independent route so the
/// two constructions can check each other.
pub fn pair_block_from_boundary(
    distinct: bool,
    xi_a: Complex64,
    xi_b: Complex64,
    params: &SystemParams,
) -> Result<AmplitudeBlock, BetheError> {
    let b = boundary_block(distinct, params);
    let c = params.p + params.q * xi_a * xi_b;
    let d = b.dim;
    let shifted = |xi: Complex64| {
        let mut m = vec![Complex64::ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] = -xi * b.entries[i * d + j];
            }
            m[i * d + i] += c;
        }
        AmplitudeBlock {
            dim: d,
            entries: m,
        }
    };
    let m1 = shifted(xi_a);
    let m2 = shifted(xi_b);
    let inv1 = invert_small(&m1)?;
    let prod = inv1.mul(&m2);
    let entries = prod.entries.iter().map(|z| -z).collect();
    Ok(AmplitudeBlock { dim: d, entries })
}

/// Explicit inverse for the 1x1 and 2x2 blocks this crate works with.
fn invert_small(m: &AmplitudeBlock) -> Result<AmplitudeBlock, BetheError> {
    match m.dim {
        1 => {
            let det = m.entries[0];
            check_det(det)?;
            Ok(AmplitudeBlock {
                dim: 1,
                entries: vec![det.inv()],
            })
        }
        2 => {
            let [a, b, c, d] = [m.entries[0], m.entries[1], m.entries[2], m.entries[3]];
            let det = a * d - b * c;
            check_det(det)?;
            let inv = det.inv();
            Ok(AmplitudeBlock {
                dim: 2,
                entries: vec![d * inv, -b * inv, -c * inv, a * inv],
            })
        }
        n => unreachable!("no {n}x{n} inverses needed"),
    }
}

fn check_det(det: Complex64) -> Result<(), BetheError> {
    let abs = det.norm();
    if abs < DENOMINATOR_FLOOR {
        return Err(BetheError::SingularDenominator {
            abs,
            floor: DENOMINATOR_FLOOR,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Amplitude columns
// ---------------------------------------------------------------------------

/// Transports `e_nu` through the steps of `path`, yielding the amplitude
/// column of the path's target permutation in the sector of `nu`.
pub fn amplitude_column_for_path(
    path: &TranspositionPath,
    nu: &SpeciesWord,
    point: &SpectralPoint,
    params: &SystemParams,
) -> Result<(Sector, Vec<Complex64>), BetheError> {
    let n = nu.len();
    if path.target().degree() != n || point.len() != n {
        return Err(BetheError::DegreeMismatch {
            sigma: path.target().degree(),
            word: n,
            point: point.len(),
        });
    }
    let sector = sector_of(nu)?;
    let ops = SectorOps::new(&sector);
    let mut vec = vec![Complex64::ZERO; sector.dim()];
    vec[sector.rank(nu)?] = Complex64::ONE;
    let mut scratch = vec![Complex64::ZERO; sector.dim()];
    for step in path.steps() {
        let sc = pair_scalars(point.xi(step.alpha), point.xi(step.beta), params)?;
        ops.apply(step.position, &sc, &vec, &mut scratch);
        std::mem::swap(&mut vec, &mut scratch);
    }
    Ok((sector, vec))
}

/// Amplitude column of `sigma` using the canonical decomposition.
pub fn amplitude_column(
    sigma: &Permutation,
    nu: &SpeciesWord,
    point: &SpectralPoint,
    params: &SystemParams,
) -> Result<(Sector, Vec<Complex64>), BetheError> {
    amplitude_column_for_path(&decompose(sigma), nu, point, params)
}

/// Single matrix element `[A_sigma e_nu]_pi`.
pub fn amplitude_element(
    sigma: &Permutation,
    nu: &SpeciesWord,
    pi: &SpeciesWord,
    point: &SpectralPoint,
    params: &SystemParams,
) -> Result<Complex64, BetheError> {
    let (sector, column) = amplitude_column(sigma, nu, point, params)?;
    Ok(column[sector.rank(pi)?])
}

/// Scalar amplitude of the one-species process: the product of `same` factors
/// over the inversions of `sigma`.
pub fn single_species_amplitude(
    sigma: &Permutation,
    point: &SpectralPoint,
    params: &SystemParams,
) -> Result<Complex64, BetheError> {
    if point.len() != sigma.degree() {
        return Err(BetheError::DegreeMismatch {
            sigma: sigma.degree(),
            word: sigma.degree(),
            point: point.len(),
        });
    }
    let mut acc = Complex64::ONE;
    for (beta, alpha) in sigma.inversions() {
        acc *= pair_scalars(point.xi(alpha), point.xi(beta), params)?.same;
    }
    Ok(acc)
}
