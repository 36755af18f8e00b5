//! Exact transition probabilities for the multi-species interacting walk.
//!
//! A probability is a tensor-grid contour sum: for each permutation sigma of
//! the particle labels, the sector amplitude of sigma (a product of two-site
//! exchange blocks along a minimal transposition path) is transported through
//! the initial word and weighted by per-variable monomials xi^(x - y - 1) and
//! clock factors exp(eps(xi) t). Convergence in the node count is certified by
//! doubling until two successive levels agree.
//!
//! Three evaluation routes share the same node tables:
//!   - `probability` / `sector_block`: direct sums over node tuples,
//!   - `distribution`: a mode-by-mode contraction that sweeps every state of a
//!     position window at once (supported for up to three particles),
//!   - `single_species_probability`: scalar amplitudes only, kept free of the
//!     sector machinery so the two paths check each other.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bethe::{pair_scalars, BetheError, RScalars, SectorOps, SystemParams};
use crate::combinatorics::{
    decompose, sector_of, CombinatoricsError, PathStep, Permutation, Sector, SpeciesWord,
};
use crate::oracle::{OracleError, WindowedStateSpace};
use crate::quadrature::{
    circle_nodes, clock_exponent, max_radius, refine, ContourSpec, ConvergenceSettings,
    QuadratureError, Refinement, MAX_VARIABLES,
};
use crate::Complex64;

/// Residual imaginary part allowed after conjugate-node cancellation.
const IM_TOL: f64 = 1e-9;
/// Allowed overshoot outside [0, 1] before clamping is refused.
const OVERSHOOT_TOL: f64 = 1e-8;
/// Mass deficit target for calibrated windows.
const MASS_TOL: f64 = 1e-8;
/// Window sweeps contract one mode per particle; the cube staging is written
/// for up to this many particles. Larger systems go through `probability`.
pub const SWEEP_PARTICLE_CAP: usize = 3;

#[derive(Debug, Error)]
pub enum TransitionError {
    #[error("particle positions must be strictly increasing")]
    PositionsNotSorted,
    #[error("positions and species word differ in length ({positions} vs {species})")]
    LengthMismatch { positions: usize, species: usize },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("initial and final configurations hold {initial} and {terminal} particles")]
    ParticleCountMismatch { initial: usize, terminal: usize },
    #[error("{n} particles exceed the cap of {cap} for this operation")]
    TooManyParticles { n: usize, cap: usize },
    #[error("position offset {0} too large for power tables")]
    OffsetTooLarge(i64),
    #[error(
        "quadrature did not settle: deviation {delta:.3e} at {nodes} nodes (tolerance {tol:.1e})"
    )]
    NotConverged { nodes: usize, delta: f64, tol: f64 },
    #[error("imaginary residue {im:.3e} exceeds {tol:.1e}; result not trustworthy")]
    ImaginaryResidue { im: f64, tol: f64 },
    #[error("value {value:.6e} lies outside [0, 1] beyond the overshoot tolerance")]
    OutOfRange { value: f64 },
    #[error("window [{left}, {right}] retains only {mass:.9} of the probability mass")]
    WindowTooSmall { left: i64, right: i64, mass: f64 },
    #[error("window [{left}, {right}] does not contain the initial positions")]
    WindowExcludesInitial { left: i64, right: i64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Bethe(#[from] BetheError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
}

/// A configuration: strictly increasing positions on the integer line plus the
/// species word read off left to right.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct State {
    positions: Vec<i64>,
    species: SpeciesWord,
}

impl State {
    pub fn new(positions: Vec<i64>, species: SpeciesWord) -> Result<Self, TransitionError> {
        if positions.len() != species.len() {
            return Err(TransitionError::LengthMismatch {
                positions: positions.len(),
                species: species.len(),
            });
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TransitionError::PositionsNotSorted);
        }
        Ok(State { positions, species })
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn species(&self) -> &SpeciesWord {
        &self.species
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pos: Vec<String> = self.positions.iter().map(|p| p.to_string()).collect();
        write!(f, "{}:{}", pos.join(","), self.species)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State({self})")
    }
}

/// One transition probability request.
#[derive(Clone)]
pub struct TransitionQuery {
    pub initial: State,
    pub terminal: State,
    pub time: f64,
    pub params: SystemParams,
    /// Starting contour; `None` picks 0.9 of the admissible radius with 32 nodes.
    pub contour: Option<ContourSpec>,
    pub convergence: ConvergenceSettings,
}

impl TransitionQuery {
    pub fn new(
        initial: State,
        terminal: State,
        time: f64,
        params: SystemParams,
    ) -> Result<Self, TransitionError> {
        if time < 0.0 || !time.is_finite() {
            return Err(TransitionError::NegativeTime(time));
        }
        if initial.len() != terminal.len() {
            return Err(TransitionError::ParticleCountMismatch {
                initial: initial.len(),
                terminal: terminal.len(),
            });
        }
        Ok(TransitionQuery {
            initial,
            terminal,
            time,
            params,
            contour: None,
            convergence: ConvergenceSettings::default(),
        })
    }

    pub fn with_contour(mut self, contour: ContourSpec) -> Self {
        self.contour = Some(contour);
        self
    }

    pub fn with_convergence(mut self, settings: ConvergenceSettings) -> Self {
        self.convergence = settings;
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProbabilityResult {
    pub value: f64,
    /// Deviation between the last two node-doubling levels; 0 when no
    /// integration was needed.
    pub est_error: f64,
    /// Final nodes per circle; 0 when no integration was needed.
    pub nodes: usize,
    pub radius: f64,
}

/// All transition probabilities between two position tuples within one sector:
/// entry (pi, nu) is the probability of reaching (X, pi) from (Y, nu). One
/// quadrature pass serves the whole block.
#[derive(Clone)]
pub struct BlockResult {
    pub sector: Sector,
    /// Row-major, rows indexed by the final word, columns by the initial word.
    pub entries: Vec<f64>,
    pub est_error: f64,
    pub nodes: usize,
    pub radius: f64,
}

impl BlockResult {
    pub fn at(&self, terminal_rank: usize, initial_rank: usize) -> f64 {
        self.entries[terminal_rank * self.sector.dim() + initial_rank]
    }
}

/// Probabilities of every state in a position window, for one initial state.
#[derive(Debug)]
pub struct DistributionResult {
    pub space: WindowedStateSpace,
    /// Aligned with `space` indexing.
    pub probs: Vec<f64>,
    pub total_mass: f64,
    /// 1 - total_mass; how much probability lives outside the window.
    pub deficit: f64,
    pub est_error: f64,
    pub nodes: usize,
    pub radius: f64,
}

impl DistributionResult {
    pub fn probability_of(&self, state: &State) -> Option<f64> {
        self.space.index_of(state).map(|i| self.probs[i])
    }
}

/// Flat record of one probability evaluation, shaped for serialization.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProbabilityRecord {
    pub p: f64,
    pub t: f64,
    pub y: Vec<i64>,
    pub nu: String,
    pub x: Vec<i64>,
    pub pi: String,
    pub value: f64,
    pub err: f64,
    #[serde(rename = "M")]
    pub nodes: usize,
    pub radius: f64,
}

impl ProbabilityRecord {
    pub fn new(query: &TransitionQuery, result: &ProbabilityResult) -> Self {
        ProbabilityRecord {
            p: query.params.p(),
            t: query.time,
            y: query.initial.positions().to_vec(),
            nu: query.initial.species().to_string(),
            x: query.terminal.positions().to_vec(),
            pi: query.terminal.species().to_string(),
            value: result.value,
            err: result.est_error,
            nodes: result.nodes,
            radius: result.radius,
        }
    }
}

/// One permutation with its minimal transposition path and inverse images.
struct SigmaPath {
    identity: bool,
    /// inv[j] = position i with sigma(i) = j; variable j carries the monomial
    /// exponent x[inv[j]] - y[j] - 1.
    inv: Vec<usize>,
    steps: Vec<PathStep>,
}

fn sigma_paths(n: usize) -> Vec<SigmaPath> {
    Permutation::all(n)
        .into_iter()
        .map(|sigma| {
            let path = decompose(&sigma);
            let inverse = sigma.inverse();
            SigmaPath {
                identity: sigma.is_identity(),
                inv: (0..n).map(|j| inverse.image(j)).collect(),
                steps: path.steps().to_vec(),
            }
        })
        .collect()
}

/// Per-node data shared by every evaluation route at one node count.
struct NodeTables {
    m: usize,
    xi: Vec<Complex64>,
    /// weight * exp(eps(xi) t), one factor per integration variable.
    factor: Vec<Complex64>,
    /// Row-major m x m: pair scalars for (xi_a, xi_b); empty when pairs are
    /// never consulted (single particle).
    pair: Vec<RScalars>,
}

impl NodeTables {
    fn build(
        radius: f64,
        m: usize,
        t: f64,
        params: &SystemParams,
        need_pairs: bool,
    ) -> Result<Self, TransitionError> {
        let nodes = circle_nodes(radius, m);
        let mut xi = Vec::with_capacity(m);
        let mut factor = Vec::with_capacity(m);
        for node in &nodes {
            xi.push(node.xi);
            factor.push(node.weight * (clock_exponent(node.xi, params) * t).exp());
        }
        let mut pair = Vec::new();
        if need_pairs {
            pair.reserve(m * m);
            for a in 0..m {
                for b in 0..m {
                    pair.push(pair_scalars(xi[a], xi[b], params)?);
                }
            }
        }
        Ok(NodeTables { m, xi, factor, pair })
    }

    #[inline]
    fn scalars(&self, node_a: usize, node_b: usize) -> &RScalars {
        &self.pair[node_a * self.m + node_b]
    }
}

fn int_pow_exponent(e: i64) -> Result<i32, TransitionError> {
    i32::try_from(e).map_err(|_| TransitionError::OffsetTooLarge(e))
}

/// factor[m] * xi[m]^(x[i] - y[j] - 1) for every node, variable j against
/// final position i.
fn element_columns(
    tables: &NodeTables,
    y: &[i64],
    x: &[i64],
) -> Result<Vec<Vec<Vec<Complex64>>>, TransitionError> {
    let n = y.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut per_i = Vec::with_capacity(n);
        for i in 0..n {
            let e = int_pow_exponent(x[i] - y[j] - 1)?;
            let col: Vec<Complex64> = tables
                .xi
                .iter()
                .zip(&tables.factor)
                .map(|(xi, f)| f * xi.powi(e))
                .collect();
            per_i.push(col);
        }
        cols.push(per_i);
    }
    Ok(cols)
}

/// Transport the basis vector of `start` through the steps of one permutation
/// at a fixed node tuple. Leaves the result in `buf_a`.
#[inline]
fn transport(
    ops: &SectorOps,
    tables: &NodeTables,
    steps: &[PathStep],
    node_of: &[usize],
    start: usize,
    buf_a: &mut Vec<Complex64>,
    buf_b: &mut Vec<Complex64>,
) {
    buf_a.fill(Complex64::new(0.0, 0.0));
    buf_a[start] = Complex64::new(1.0, 0.0);
    for step in steps {
        let sc = tables.scalars(node_of[step.alpha], node_of[step.beta]);
        ops.apply(step.position, sc, buf_a, buf_b);
        std::mem::swap(buf_a, buf_b);
    }
}

fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Direct tensor-grid sum for a single matrix element (pi row, nu column).
fn element_eval(
    ops: &SectorOps,
    paths: &[SigmaPath],
    nu_rank: usize,
    pi_rank: usize,
    y: &[i64],
    x: &[i64],
    t: f64,
    radius: f64,
    m: usize,
    params: &SystemParams,
) -> Result<Complex64, TransitionError> {
    let n = y.len();
    let tables = NodeTables::build(radius, m, t, params, n >= 2)?;
    let cols = element_columns(&tables, y, x)?;
    let dim = ops.dim();

    let partials: Vec<Complex64> = (0..m)
        .into_par_iter()
        .map(|m0| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut node_of = vec![0usize; n];
            let mut buf_a = vec![Complex64::new(0.0, 0.0); dim];
            let mut buf_b = vec![Complex64::new(0.0, 0.0); dim];
            for path in paths {
                // Variable j reads its monomial column for position inv[j].
                let sigma_cols: Vec<&[Complex64]> =
                    (0..n).map(|j| cols[j][path.inv[j]].as_slice()).collect();
                node_of[0] = m0;
                let w0 = sigma_cols[0][m0];
                sum_tuples(
                    &tables,
                    ops,
                    path,
                    &sigma_cols,
                    1,
                    w0,
                    &mut node_of,
                    nu_rank,
                    pi_rank,
                    &mut buf_a,
                    &mut buf_b,
                    &mut acc,
                );
            }
            acc
        })
        .collect();
    Ok(pairwise_sum(&partials))
}

/// Recursive odometer over the remaining variables; `weight` carries the
/// partial product of per-variable columns.
#[allow(clippy::too_many_arguments)]
fn sum_tuples(
    tables: &NodeTables,
    ops: &SectorOps,
    path: &SigmaPath,
    sigma_cols: &[&[Complex64]],
    depth: usize,
    weight: Complex64,
    node_of: &mut Vec<usize>,
    nu_rank: usize,
    pi_rank: usize,
    buf_a: &mut Vec<Complex64>,
    buf_b: &mut Vec<Complex64>,
    acc: &mut Complex64,
) {
    let n = sigma_cols.len();
    if depth == n {
        if path.steps.is_empty() {
            if pi_rank == nu_rank {
                *acc += weight;
            }
        } else {
            transport(ops, tables, &path.steps, node_of, nu_rank, buf_a, buf_b);
            *acc += weight * buf_a[pi_rank];
        }
        return;
    }
    for mm in 0..tables.m {
        node_of[depth] = mm;
        sum_tuples(
            tables,
            ops,
            path,
            sigma_cols,
            depth + 1,
            weight * sigma_cols[depth][mm],
            node_of,
            nu_rank,
            pi_rank,
            buf_a,
            buf_b,
            acc,
        );
    }
}

/// Full sector block at one node count, optionally split by permutation.
/// Returns one dim x dim complex block per entry of `paths` when `split` is
/// set, otherwise a single accumulated block.
fn block_eval_inner(
    ops: &SectorOps,
    paths: &[SigmaPath],
    y: &[i64],
    x: &[i64],
    t: f64,
    radius: f64,
    m: usize,
    params: &SystemParams,
    split: bool,
) -> Result<Vec<Vec<Complex64>>, TransitionError> {
    let n = y.len();
    let tables = NodeTables::build(radius, m, t, params, n >= 2)?;
    let cols = element_columns(&tables, y, x)?;
    let dim = ops.dim();
    let blocks = if split { paths.len() } else { 1 };
    let mut out = vec![vec![Complex64::new(0.0, 0.0); dim * dim]; blocks];

    let mut node_of = vec![0usize; n];
    let mut buf_a = vec![Complex64::new(0.0, 0.0); dim];
    let mut buf_b = vec![Complex64::new(0.0, 0.0); dim];
    for (s, path) in paths.iter().enumerate() {
        let block = &mut out[if split { s } else { 0 }];
        let sigma_cols: Vec<&[Complex64]> =
            (0..n).map(|j| cols[j][path.inv[j]].as_slice()).collect();
        let mut stack = vec![0usize; n];
        // Odometer over full tuples with a running product per level.
        let mut weights = vec![Complex64::new(0.0, 0.0); n + 1];
        weights[0] = Complex64::new(1.0, 0.0);
        let mut level = 0usize;
        loop {
            if level == n {
                let w = weights[n];
                for start in 0..dim {
                    transport(ops, &tables, &path.steps, &node_of, start, &mut buf_a, &mut buf_b);
                    for (pi, amp) in buf_a.iter().enumerate() {
                        block[pi * dim + start] += w * amp;
                    }
                }
                // Backtrack to the deepest level that can still advance.
                level = n;
                loop {
                    if level == 0 {
                        break;
                    }
                    let d = level - 1;
                    stack[d] += 1;
                    if stack[d] < tables.m {
                        node_of[d] = stack[d];
                        weights[level] = weights[d] * sigma_cols[d][stack[d]];
                        break;
                    }
                    stack[d] = 0;
                    level = d;
                }
                if level == 0 {
                    break;
                }
            } else {
                node_of[level] = stack[level];
                weights[level + 1] = weights[level] * sigma_cols[level][stack[level]];
                level += 1;
            }
        }
    }
    Ok(out)
}

fn vector_deviation(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn realize(value: Complex64) -> Result<f64, TransitionError> {
    if value.im.abs() >= IM_TOL {
        return Err(TransitionError::ImaginaryResidue { im: value.im, tol: IM_TOL });
    }
    Ok(value.re)
}

fn clamp_unit(value: f64) -> Result<f64, TransitionError> {
    if !(-OVERSHOOT_TOL..=1.0 + OVERSHOOT_TOL).contains(&value) {
        return Err(TransitionError::OutOfRange { value });
    }
    Ok(value.clamp(0.0, 1.0))
}

fn run_refinement<T, F>(
    contour: &ContourSpec,
    settings: &ConvergenceSettings,
    eval: F,
    deviation: fn(&T, &T) -> f64,
) -> Result<(T, f64, usize), TransitionError>
where
    F: FnMut(usize) -> Result<T, TransitionError>,
{
    let max_nodes = settings.max_nodes.max(contour.nodes());
    match refine(contour.nodes(), max_nodes, settings.tol_rel, eval, deviation)? {
        Refinement::Converged(r) => Ok((r.value, r.est_error, r.nodes)),
        Refinement::Exhausted { nodes, delta, .. } => Err(TransitionError::NotConverged {
            nodes,
            delta,
            tol: settings.tol_rel,
        }),
    }
}

fn resolve_contour(contour: Option<ContourSpec>, params: &SystemParams) -> ContourSpec {
    contour.unwrap_or_else(|| ContourSpec::default_for(params))
}

/// Probability of finding the system in `query.terminal` at `query.time`,
/// starting from `query.initial`.
///
/// Species conservation is checked first: when the two words are not
/// rearrangements of each other the answer is exactly zero and no quadrature
/// runs. Otherwise the tensor-grid sum is refined by node doubling, the
/// imaginary residue is checked against 1e-9, and the real part is clamped to
/// [0, 1] provided it overshoots by less than 1e-8.
pub fn probability(query: &TransitionQuery) -> Result<ProbabilityResult, TransitionError> {
    if query.time < 0.0 || !query.time.is_finite() {
        return Err(TransitionError::NegativeTime(query.time));
    }
    if query.initial.len() != query.terminal.len() {
        return Err(TransitionError::ParticleCountMismatch {
            initial: query.initial.len(),
            terminal: query.terminal.len(),
        });
    }
    let n = query.initial.len();
    if n > MAX_VARIABLES {
        return Err(TransitionError::TooManyParticles { n, cap: MAX_VARIABLES });
    }
    let contour = resolve_contour(query.contour, &query.params);
    if !query.initial.species().same_multiset(query.terminal.species()) {
        return Ok(ProbabilityResult {
            value: 0.0,
            est_error: 0.0,
            nodes: 0,
            radius: contour.radius(),
        });
    }

    let sector = sector_of(query.initial.species())?;
    let ops = SectorOps::new(&sector);
    let nu_rank = sector.rank(query.initial.species())?;
    let pi_rank = sector.rank(query.terminal.species())?;
    let paths = sigma_paths(n);
    let y = query.initial.positions();
    let x = query.terminal.positions();

    let (value, est_error, nodes) = run_refinement(
        &contour,
        &query.convergence,
        |m| {
            element_eval(
                &ops,
                &paths,
                nu_rank,
                pi_rank,
                y,
                x,
                query.time,
                contour.radius(),
                m,
                &query.params,
            )
        },
        |a: &Complex64, b: &Complex64| (a - b).norm() / b.norm().max(1.0),
    )?;
    let value = clamp_unit(realize(value)?)?;
    Ok(ProbabilityResult { value, est_error, nodes, radius: contour.radius() })
}

/// Every transition probability between the position tuples `y` and `x`
/// within `sector`, from one shared quadrature pass.
pub fn sector_block(
    y: &[i64],
    sector: &Sector,
    x: &[i64],
    t: f64,
    params: &SystemParams,
    contour: Option<ContourSpec>,
    settings: &ConvergenceSettings,
) -> Result<BlockResult, TransitionError> {
    if t < 0.0 || !t.is_finite() {
        return Err(TransitionError::NegativeTime(t));
    }
    let n = sector.word_len();
    if y.len() != n || x.len() != n {
        return Err(TransitionError::ParticleCountMismatch {
            initial: y.len(),
            terminal: x.len(),
        });
    }
    if n > MAX_VARIABLES {
        return Err(TransitionError::TooManyParticles { n, cap: MAX_VARIABLES });
    }
    let contour = resolve_contour(contour, params);
    let ops = SectorOps::new(sector);
    let paths = sigma_paths(n);

    let (block, est_error, nodes) = run_refinement(
        &contour,
        settings,
        |m| {
            block_eval_inner(&ops, &paths, y, x, t, contour.radius(), m, params, false)
                .map(|mut v| v.pop().expect("one accumulated block"))
        },
        |a: &Vec<Complex64>, b: &Vec<Complex64>| vector_deviation(a, b),
    )?;

    let mut entries = Vec::with_capacity(block.len());
    for v in block {
        entries.push(clamp_unit(realize(v)?)?);
    }
    Ok(BlockResult {
        sector: sector.clone(),
        entries,
        est_error,
        nodes,
        radius: contour.radius(),
    })
}

/// Single-species probability via scalar amplitudes: every sector block
/// collapses to the product of exchange scalars over the inversions of sigma.
/// Kept independent of the sector transport so the two routes can be compared.
pub fn single_species_probability(
    y: &[i64],
    x: &[i64],
    t: f64,
    params: &SystemParams,
    contour: Option<ContourSpec>,
    settings: &ConvergenceSettings,
) -> Result<ProbabilityResult, TransitionError> {
    if t < 0.0 || !t.is_finite() {
        return Err(TransitionError::NegativeTime(t));
    }
    let n = y.len();
    if x.len() != n {
        return Err(TransitionError::ParticleCountMismatch {
            initial: n,
            terminal: x.len(),
        });
    }
    if n == 0 || n > MAX_VARIABLES {
        return Err(TransitionError::TooManyParticles { n, cap: MAX_VARIABLES });
    }
    let contour = resolve_contour(contour, params);
    let perms = Permutation::all(n);

    let (value, est_error, nodes) = run_refinement(
        &contour,
        settings,
        |m| {
            let tables = NodeTables::build(contour.radius(), m, t, params, n >= 2)?;
            let cols = element_columns(&tables, y, x)?;
            let partials: Vec<Complex64> = (0..m)
                .into_par_iter()
                .map(|m0| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut node_of = vec![0usize; n];
                    for sigma in &perms {
                        let inverse = sigma.inverse();
                        let sigma_cols: Vec<&[Complex64]> = (0..n)
                            .map(|j| cols[j][inverse.image(j)].as_slice())
                            .collect();
                        node_of[0] = m0;
                        scalar_sum_tuples(
                            &tables,
                            sigma,
                            &sigma_cols,
                            1,
                            sigma_cols[0][m0],
                            &mut node_of,
                            &mut acc,
                        );
                    }
                    acc
                })
                .collect();
            Ok(pairwise_sum(&partials))
        },
        |a: &Complex64, b: &Complex64| (a - b).norm() / b.norm().max(1.0),
    )?;
    let value = clamp_unit(realize(value)?)?;
    Ok(ProbabilityResult { value, est_error, nodes, radius: contour.radius() })
}

fn scalar_sum_tuples(
    tables: &NodeTables,
    sigma: &Permutation,
    sigma_cols: &[&[Complex64]],
    depth: usize,
    weight: Complex64,
    node_of: &mut Vec<usize>,
    acc: &mut Complex64,
) {
    let n = sigma_cols.len();
    if depth == n {
        let mut amp = Complex64::new(1.0, 0.0);
        for (beta, alpha) in sigma.inversions() {
            amp *= tables.scalars(node_of[alpha], node_of[beta]).same;
        }
        *acc += weight * amp;
        return;
    }
    for mm in 0..tables.m {
        node_of[depth] = mm;
        scalar_sum_tuples(
            tables,
            sigma,
            sigma_cols,
            depth + 1,
            weight * sigma_cols[depth][mm],
            node_of,
            acc,
        );
    }
}

/// Mode-by-mode contraction sweeping all window states at once.
///
/// For each permutation the grid sum factorizes into per-variable site
/// matrices C_j[node][site] = weight * exp(eps t) * xi^(site - y_j - 1); the
/// amplitude column is built per node tuple and contracted against one mode at
/// a time, so the cost is O(M^n * dim * W) instead of O(M^n * states).
fn sweep_eval(
    space: &WindowedStateSpace,
    ops: &SectorOps,
    paths: &[SigmaPath],
    nu_rank: usize,
    y: &[i64],
    t: f64,
    radius: f64,
    m: usize,
    params: &SystemParams,
) -> Result<Vec<Complex64>, TransitionError> {
    let n = y.len();
    let dim = ops.dim();
    let left = space.left();
    let w = (space.right() - left + 1) as usize;
    let tables = NodeTables::build(radius, m, t, params, n >= 2)?;

    // site_cols[j][node * w + u] = factor * xi^(left + u - y_j - 1)
    let mut site_cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for &yj in y {
        let start = int_pow_exponent(left - yj - 1)?;
        let mut col = vec![Complex64::new(0.0, 0.0); m * w];
        for mm in 0..m {
            let xi = tables.xi[mm];
            let mut pw = tables.factor[mm] * xi.powi(start);
            for u in 0..w {
                col[mm * w + u] = pw;
                pw *= xi;
            }
        }
        site_cols.push(col);
    }

    // The first mode index runs over 0..=m/2 only: the slice at m - m0 is the
    // exact conjugate of the slice at m0 (every input conjugates and the inner
    // mode sums cover the full grid), so a paired slice contributes twice its
    // real part and the two self-conjugate slices contribute their real part
    // alone. Entries of the fold are then exactly real.
    let half = m / 2;
    let pair_scale = |m0: usize| if m0 == 0 || m0 == half { 1.0 } else { 2.0 };

    let mut out = vec![Complex64::new(0.0, 0.0); space.len()];
    let mut cube = vec![0.0f64; dim * w.pow(n as u32)];
    // Scratch for the three-mode staging, reused across permutations.
    let mut cc = if n == 3 {
        vec![Complex64::new(0.0, 0.0); (half + 1) * dim * w * w]
    } else {
        Vec::new()
    };

    for path in paths {
        cube.fill(0.0);
        match n {
            1 => {
                // Single variable: the amplitude is trivially 1.
                for mm in 0..=half {
                    let scale = pair_scale(mm);
                    let row = &site_cols[0][mm * w..(mm + 1) * w];
                    for u in 0..w {
                        cube[u] += scale * row[u].re;
                    }
                }
            }
            2 => {
                let c0 = &site_cols[0];
                let c1 = &site_cols[1];
                let mut t1 = vec![Complex64::new(0.0, 0.0); dim * w];
                let mut plane = vec![Complex64::new(0.0, 0.0); dim * w * w];
                let mut buf_a = vec![Complex64::new(0.0, 0.0); dim];
                let mut buf_b = vec![Complex64::new(0.0, 0.0); dim];
                let mut node_of = [0usize; 2];
                for m0 in 0..=half {
                    t1.fill(Complex64::new(0.0, 0.0));
                    node_of[0] = m0;
                    for m1 in 0..m {
                        node_of[1] = m1;
                        transport(ops, &tables, &path.steps, &node_of, nu_rank, &mut buf_a, &mut buf_b);
                        let c1row = &c1[m1 * w..(m1 + 1) * w];
                        for (pi, amp) in buf_a.iter().enumerate() {
                            if amp.norm_sqr() == 0.0 {
                                continue;
                            }
                            let dst = &mut t1[pi * w..(pi + 1) * w];
                            for u in 0..w {
                                dst[u] += amp * c1row[u];
                            }
                        }
                    }
                    plane.fill(Complex64::new(0.0, 0.0));
                    let c0row = &c0[m0 * w..(m0 + 1) * w];
                    for pi in 0..dim {
                        let src = &t1[pi * w..(pi + 1) * w];
                        for v0 in 0..w {
                            let c = c0row[v0];
                            let dst = &mut plane[(pi * w + v0) * w..(pi * w + v0 + 1) * w];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += c * s;
                            }
                        }
                    }
                    let scale = pair_scale(m0);
                    for (d, s) in cube.iter_mut().zip(&plane) {
                        *d += scale * s.re;
                    }
                }
            }
            3 => {
                let stride = dim * w * w;
                // Stage one, parallel over the first node index: fuse the
                // amplitude transport with the mode-2 contraction, then fold
                // mode-1; each slice of cc belongs to one first-node value.
                cc.par_chunks_mut(stride).enumerate().for_each(|(m0, slice)| {
                    slice.fill(Complex64::new(0.0, 0.0));
                    let c1 = &site_cols[1];
                    let c2 = &site_cols[2];
                    let mut t1 = vec![Complex64::new(0.0, 0.0); dim * m * w];
                    let mut buf_a = vec![Complex64::new(0.0, 0.0); dim];
                    let mut buf_b = vec![Complex64::new(0.0, 0.0); dim];
                    let mut node_of = [0usize; 3];
                    node_of[0] = m0;
                    for m1 in 0..m {
                        node_of[1] = m1;
                        for m2 in 0..m {
                            node_of[2] = m2;
                            transport(
                                ops, &tables, &path.steps, &node_of, nu_rank, &mut buf_a,
                                &mut buf_b,
                            );
                            let c2row = &c2[m2 * w..(m2 + 1) * w];
                            for (pi, amp) in buf_a.iter().enumerate() {
                                if amp.norm_sqr() == 0.0 {
                                    continue;
                                }
                                let dst = &mut t1[(pi * m + m1) * w..(pi * m + m1 + 1) * w];
                                for u in 0..w {
                                    dst[u] += amp * c2row[u];
                                }
                            }
                        }
                    }
                    for pi in 0..dim {
                        for m1 in 0..m {
                            let src = &t1[(pi * m + m1) * w..(pi * m + m1 + 1) * w];
                            let c1row = &c1[m1 * w..(m1 + 1) * w];
                            for v1 in 0..w {
                                let c = c1row[v1];
                                if c.norm_sqr() == 0.0 {
                                    continue;
                                }
                                let dst = &mut slice[(pi * w + v1) * w..(pi * w + v1 + 1) * w];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += c * s;
                                }
                            }
                        }
                    }
                });
                // Stage two, sequential over the first node index so the
                // summation order is fixed regardless of thread count.
                let c0 = &site_cols[0];
                let mut plane = vec![Complex64::new(0.0, 0.0); dim * w * w * w];
                for m0 in 0..=half {
                    let slice = &cc[m0 * stride..(m0 + 1) * stride];
                    let c0row = &c0[m0 * w..(m0 + 1) * w];
                    plane.fill(Complex64::new(0.0, 0.0));
                    for pi in 0..dim {
                        for v0 in 0..w {
                            let c = c0row[v0];
                            let dst_base = ((pi * w + v0) * w) * w;
                            let src_base = pi * w * w;
                            let dst = &mut plane[dst_base..dst_base + w * w];
                            let src = &slice[src_base..src_base + w * w];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += c * s;
                            }
                        }
                    }
                    let scale = pair_scale(m0);
                    for (d, s) in cube.iter_mut().zip(&plane) {
                        *d += scale * s.re;
                    }
                }
            }
            _ => {
                return Err(TransitionError::TooManyParticles {
                    n,
                    cap: SWEEP_PARTICLE_CAP,
                })
            }
        }

        // Read the cube off into state order: variable j was contracted at the
        // site of particle inv[j].
        for (pos_idx, pos) in space.position_tuples().iter().enumerate() {
            let mut flat = 0usize;
            for j in 0..n {
                let u = (pos[path.inv[j]] - left) as usize;
                flat = flat * w + u;
            }
            for pi in 0..dim {
                out[pos_idx * dim + pi].re += cube[pi * w.pow(n as u32) + flat];
            }
        }
    }
    Ok(out)
}

/// The probability of every state in the window `[left, right]` at time `t`,
/// starting from `initial`. Errors if more than a fraction 1e-7 of the mass
/// has left the window; use `distribution_calibrated` to size the window
/// automatically.
pub fn distribution(
    initial: &State,
    t: f64,
    params: &SystemParams,
    window: (i64, i64),
    contour: Option<ContourSpec>,
    settings: &ConvergenceSettings,
) -> Result<DistributionResult, TransitionError> {
    if t < 0.0 || !t.is_finite() {
        return Err(TransitionError::NegativeTime(t));
    }
    let n = initial.len();
    if n == 0 || n > SWEEP_PARTICLE_CAP {
        return Err(TransitionError::TooManyParticles { n, cap: SWEEP_PARTICLE_CAP });
    }
    let (left, right) = window;
    let y = initial.positions();
    if y[0] < left || y[n - 1] > right {
        return Err(TransitionError::WindowExcludesInitial { left, right });
    }
    let contour = resolve_contour(contour, params);
    let space = WindowedStateSpace::new(left, right, initial.species())?;
    let ops = SectorOps::new(space.sector());
    let nu_rank = space.sector().rank(initial.species())?;
    let paths = sigma_paths(n);

    let (raw, est_error, nodes) = run_refinement(
        &contour,
        settings,
        |m| sweep_eval(&space, &ops, &paths, nu_rank, y, t, contour.radius(), m, params),
        |a: &Vec<Complex64>, b: &Vec<Complex64>| vector_deviation(a, b),
    )?;

    let mut probs = Vec::with_capacity(raw.len());
    for v in raw {
        probs.push(clamp_unit(realize(v)?)?);
    }
    let total_mass: f64 = probs.iter().sum();
    let deficit = 1.0 - total_mass;
    if deficit > 10.0 * MASS_TOL {
        return Err(TransitionError::WindowTooSmall { left, right, mass: total_mass });
    }
    Ok(DistributionResult {
        space,
        probs,
        total_mass,
        deficit,
        est_error,
        nodes,
        radius: contour.radius(),
    })
}

/// Window big enough that the mass outside is far below the deficit target,
/// based on the drift plus a generous spread term.
pub fn calibrated_window(initial: &State, t: f64) -> (i64, i64) {
    let h = (4.0 * t.sqrt() + t + 4.0).ceil() as i64;
    let y = initial.positions();
    (y[0] - h, y[y.len() - 1] + h)
}

/// `distribution` on a window sized from the time horizon, grown further if
/// the observed deficit is still above the target.
pub fn distribution_calibrated(
    initial: &State,
    t: f64,
    params: &SystemParams,
    contour: Option<ContourSpec>,
    settings: &ConvergenceSettings,
) -> Result<DistributionResult, TransitionError> {
    let (mut left, mut right) = calibrated_window(initial, t);
    let mut last_mass = 0.0;
    for _ in 0..4 {
        match distribution(initial, t, params, (left, right), contour, settings) {
            Ok(result) => {
                if result.deficit < MASS_TOL {
                    return Ok(result);
                }
                last_mass = result.total_mass;
            }
            Err(TransitionError::WindowTooSmall { mass, .. }) => last_mass = mass,
            Err(other) => return Err(other),
        }
        left -= 4;
        right += 4;
    }
    Err(TransitionError::WindowTooSmall { left, right, mass: last_mass })
}

/// One row of the zero-time check: a sector and final-position tuple with the
/// deviation of the full sum from the Kronecker delta and the largest single
/// permutation term besides the identity.
#[derive(Clone, Debug, Serialize)]
pub struct InitialRow {
    pub n: usize,
    pub sector: String,
    pub x: Vec<i64>,
    pub delta_deviation: f64,
    pub term_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InitialReport {
    pub p: f64,
    pub radius: f64,
    pub nodes: usize,
    pub tolerance: f64,
    pub rows: Vec<InitialRow>,
    pub max_delta_deviation: f64,
    pub max_term_deviation: f64,
}

impl InitialReport {
    pub fn passed(&self) -> bool {
        self.max_delta_deviation < self.tolerance && self.max_term_deviation < self.tolerance
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "zero-time check  p={:.4}  radius={:.6}  nodes={}  tolerance={:.1e}\n",
            self.p, self.radius, self.nodes, self.tolerance
        ));
        for row in &self.rows {
            let status = if row.delta_deviation < self.tolerance
                && row.term_deviation < self.tolerance
            {
                "[PASS]"
            } else {
                "[FAIL]"
            };
            let x: Vec<String> = row.x.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{status} n={} sector {}  X=({})  delta {:.3e}  largest off-identity term {:.3e}\n",
                row.n,
                row.sector,
                x.join(","),
                row.delta_deviation,
                row.term_deviation
            ));
        }
        out.push_str(&format!(
            "worst delta deviation {:.3e}  worst off-identity term {:.3e}  {}\n",
            self.max_delta_deviation,
            self.max_term_deviation,
            if self.passed() { "OK" } else { "FAILED" }
        ));
        out
    }
}

/// At time zero the full sum must reproduce the Kronecker delta in both the
/// positions and the word, and every permutation other than the identity must
/// contribute a vanishing integral on its own. Checks every final tuple with
/// x_i >= y_i within reach three of the initial positions, for one sector per
/// species pattern up to `max_n` particles.
pub fn initial_condition_report(
    params: &SystemParams,
    contour: Option<ContourSpec>,
    tolerance: f64,
    max_n: usize,
) -> Result<InitialReport, TransitionError> {
    // Half the admissible radius keeps the node count small: the discarded
    // high-order coefficients fall below the target within 32 nodes.
    let contour = match contour {
        Some(c) => c,
        None => ContourSpec::new(0.5 * max_radius(params), 32, params)?,
    };
    let mut rows = Vec::new();
    let cases: Vec<(usize, Vec<&str>)> = vec![
        (1, vec!["1"]),
        (2, vec!["11", "12"]),
        (3, vec!["111", "112", "123"]),
    ];
    for (n, words) in cases.into_iter().filter(|(n, _)| *n <= max_n) {
        let y: Vec<i64> = (0..n as i64).collect();
        for word in words {
            let nu: SpeciesWord = word.parse()?;
            let sector = sector_of(&nu)?;
            let ops = SectorOps::new(&sector);
            let paths = sigma_paths(n);
            let dim = sector.dim();
            for x in reachable_tuples(&y, 3) {
                let blocks = block_eval_inner(
                    &ops,
                    &paths,
                    &y,
                    &x,
                    0.0,
                    contour.radius(),
                    contour.nodes(),
                    params,
                    true,
                )?;
                let is_delta_pos = x == y;
                let mut delta_dev: f64 = 0.0;
                let mut term_dev: f64 = 0.0;
                for entry in 0..dim * dim {
                    let total: Complex64 = blocks.iter().map(|b| b[entry]).sum();
                    let target = if is_delta_pos && entry / dim == entry % dim {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    delta_dev = delta_dev.max((total - target).norm());
                }
                for (path, block) in paths.iter().zip(&blocks) {
                    if path.identity {
                        continue;
                    }
                    for v in block {
                        term_dev = term_dev.max(v.norm());
                    }
                }
                rows.push(InitialRow {
                    n,
                    sector: sector.first_word().to_string(),
                    x,
                    delta_deviation: delta_dev,
                    term_deviation: term_dev,
                });
            }
        }
    }
    let max_delta = rows.iter().map(|r| r.delta_deviation).fold(0.0, f64::max);
    let max_term = rows.iter().map(|r| r.term_deviation).fold(0.0, f64::max);
    Ok(InitialReport {
        p: params.p(),
        radius: contour.radius(),
        nodes: contour.nodes(),
        tolerance,
        rows,
        max_delta_deviation: max_delta,
        max_term_deviation: max_term,
    })
}

/// Strictly increasing tuples with y_i <= x_i <= y_i + reach.
fn reachable_tuples(y: &[i64], reach: i64) -> Vec<Vec<i64>> {
    let n = y.len();
    let mut out = Vec::new();
    let mut current = vec![0i64; n];
    fn rec(y: &[i64], reach: i64, depth: usize, current: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if depth == y.len() {
            out.push(current.clone());
            return;
        }
        let lo = if depth == 0 {
            y[0]
        } else {
            y[depth].max(current[depth - 1] + 1)
        };
        for x in lo..=y[depth] + reach {
            current[depth] = x;
            rec(y, reach, depth + 1, current, out);
        }
    }
    rec(y, reach, 0, &mut current, &mut out);
    out
}

/// Re-evaluates one fixed query while the left-hop rate is swept toward zero.
/// Purely diagnostic: the model keeps both rates positive, so this only shows
/// how the computed value and its error estimate drift near the boundary.
pub fn small_q_drift(
    initial: &State,
    terminal: &State,
    time: f64,
    qs: &[f64],
    settings: &ConvergenceSettings,
) -> Vec<(f64, Result<ProbabilityResult, TransitionError>)> {
    qs.iter()
        .map(|&q| {
            let outcome = SystemParams::new(1.0 - q)
                .map_err(TransitionError::from)
                .and_then(|params| {
                    let mut query = TransitionQuery::new(
                        initial.clone(),
                        terminal.clone(),
                        time,
                        params,
                    )?;
                    query.convergence = *settings;
                    probability(&query)
                });
            (q, outcome)
        })
        .collect()
}
