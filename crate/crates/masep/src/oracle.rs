//! Independent cross-check: the process as a plain continuous-time Markov
//! chain on a finite window of the lattice.
//!
//! Nothing here touches contours or amplitudes. States are enumerated
//! directly, the generator is assembled from the hop rules, and evolution
//! uses uniformization. Truncation is honest: a move that would leave the
//! window still contributes its rate to the diagonal, so row sums are
//! nonpositive, the window distribution is a lower bound, and the missing
//! mass (leakage) bounds the truncation error. A direct Gillespie sampler on
//! the unbounded lattice provides a second, simulation-based reference.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use thiserror::Error;

use crate::bethe::SystemParams;
use crate::combinatorics::{sector_of, CombinatoricsError, Sector, SpeciesWord};
use crate::transition::State;

/// Hard cap on enumerated window states; beyond this the dense distribution
/// vector and generator stop being practical.
pub const MAX_WINDOW_STATES: usize = 200_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("window [{left}, {right}] cannot hold {n} particles")]
    WindowTooNarrow { left: i64, right: i64, n: usize },
    #[error("state space of {count} states exceeds the limit {limit}")]
    TooManyStates { count: usize, limit: usize },
    #[error("initial state lies outside the window [{left}, {right}]")]
    InitialOutsideWindow { left: i64, right: i64 },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
}

/// All states with `n` distinct ordered positions inside `[left, right]` and
/// a species word from one sector. The index is `position_rank * sector_dim +
/// word_rank`, with position tuples in lexicographic order.
#[derive(Clone, Debug)]
pub struct WindowedStateSpace {
    left: i64,
    right: i64,
    n: usize,
    sector: Sector,
    positions: Vec<Vec<i64>>,
    pos_rank: HashMap<Vec<i64>, u32>,
}

impl WindowedStateSpace {
    pub fn new(left: i64, right: i64, template: &SpeciesWord) -> Result<Self, OracleError> {
        let n = template.len();
        let width = right - left + 1;
        if width < n as i64 {
            return Err(OracleError::WindowTooNarrow { left, right, n });
        }
        let sector = sector_of(template)?;
        let tuples = binomial(width as usize, n);
        let count = tuples.saturating_mul(sector.dim());
        if count > MAX_WINDOW_STATES {
            return Err(OracleError::TooManyStates {
                count,
                limit: MAX_WINDOW_STATES,
            });
        }
        let mut positions = Vec::with_capacity(tuples);
        let mut cur: Vec<i64> = (0..n as i64).map(|k| left + k).collect();
        loop {
            positions.push(cur.clone());
            // advance the rightmost index that can still move
            let mut i = n;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                let limit = right - (n - 1 - i) as i64;
                if cur[i] < limit {
                    cur[i] += 1;
                    for j in i + 1..n {
                        cur[j] = cur[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    i = n;
                    break;
                }
            }
            if i == n {
                break;
            }
        }
        debug_assert_eq!(positions.len(), tuples);
        let pos_rank = positions
            .iter()
            .enumerate()
            .map(|(r, p)| (p.clone(), r as u32))
            .collect();
        Ok(WindowedStateSpace {
            left,
            right,
            n,
            sector,
            positions,
            pos_rank,
        })
    }

    /// Window centred on the initial positions, `halfwidth` sites of slack on
    /// both sides.
    pub fn around(initial: &State, halfwidth: i64) -> Result<Self, OracleError> {
        let positions = initial.positions();
        let left = positions.first().copied().unwrap_or(0) - halfwidth;
        let right = positions.last().copied().unwrap_or(0) + halfwidth;
        WindowedStateSpace::new(left, right, initial.species())
    }

    pub fn len(&self) -> usize {
        self.positions.len() * self.sector.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn left(&self) -> i64 {
        self.left
    }

    pub fn right(&self) -> i64 {
        self.right
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn sector(&self) -> &Sector {
        &self.sector
    }

    pub fn index_of(&self, state: &State) -> Option<usize> {
        let pos = self.pos_rank.get(state.positions())?;
        let rank = self.sector.rank(state.species()).ok()?;
        Some(*pos as usize * self.sector.dim() + rank)
    }

    pub fn state_at(&self, index: usize) -> State {
        let dim = self.sector.dim();
        let positions = self.positions[index / dim].clone();
        let word = self.sector.unrank(index % dim).expect("rank in range");
        State::new(positions, word).expect("enumerated states are valid")
    }

    pub fn iter_states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len()).map(|i| self.state_at(i))
    }

    /// Position tuples in enumeration order; states with the same tuple are
    /// adjacent, one per sector word.
    pub fn position_tuples(&self) -> &[Vec<i64>] {
        &self.positions
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(usize::MAX as u128) as usize
}

// ---------------------------------------------------------------------------
// Moves and the generator
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
enum Move {
    Hop { particle: usize, to: i64 },
    /// Letters at `left`, `left + 1` exchange; positions stay.
    Swap { left: usize },
}

/// Enumerates every allowed move of the configuration on the unbounded
/// lattice. A jump onto an equal-or-higher species is no move at all; a jump
/// onto a lower species exchanges the two sites, which in sorted order means
/// the species letters swap.
fn visit_moves(
    positions: &[i64],
    letters: &[u32],
    params: &SystemParams,
    mut visit: impl FnMut(f64, Move),
) {
    let n = positions.len();
    let p = params.p();
    let q = params.q();
    for i in 0..n {
        let to = positions[i] + 1;
        if i + 1 < n && positions[i + 1] == to {
            if letters[i] > letters[i + 1] {
                visit(p, Move::Swap { left: i });
            }
        } else {
            visit(p, Move::Hop { particle: i, to });
        }
        let to = positions[i] - 1;
        if i > 0 && positions[i - 1] == to {
            if letters[i] > letters[i - 1] {
                visit(q, Move::Swap { left: i - 1 });
            }
        } else {
            visit(q, Move::Hop { particle: i, to });
        }
    }
}

/// Sparse generator over a windowed state space, rows indexed by source
/// state. Diagonals count every allowed move, including those leaving the
/// window; off-diagonal targets exist only inside the window.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    n_states: usize,
    diag: Vec<f64>,
    off: Vec<Vec<(u32, f64)>>,
    max_exit: f64,
}

impl GeneratorMatrix {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn row(&self, source: usize) -> &[(u32, f64)] {
        &self.off[source]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.max_exit
    }
}

pub fn build_generator(space: &WindowedStateSpace, params: &SystemParams) -> GeneratorMatrix {
    let n_states = space.len();
    let dim = space.sector.dim();
    let mut diag = vec![0.0f64; n_states];
    let mut off: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_states];
    let mut scratch: Vec<i64> = Vec::new();
    for (pos_idx, positions) in space.positions.iter().enumerate() {
        for rank in 0..dim {
            let source = pos_idx * dim + rank;
            let word = space.sector.unrank(rank).expect("rank in range");
            let letters = word.letters().to_vec();
            visit_moves(positions, &letters, params, |rate, mv| {
                diag[source] -= rate;
                match mv {
                    Move::Hop { particle, to } => {
                        if to < space.left || to > space.right {
                            return; // leaks out of the window
                        }
                        scratch.clear();
                        scratch.extend_from_slice(positions);
                        scratch[particle] = to;
                        let target_pos = space.pos_rank[&scratch];
                        off[source].push((target_pos * dim as u32 + rank as u32, rate));
                    }
                    Move::Swap { left } => {
                        let swapped = word.swapped(left).expect("adjacent in range");
                        let target_rank =
                            space.sector.rank(&swapped).expect("swap stays in sector");
                        off[source].push(((pos_idx * dim + target_rank) as u32, rate));
                    }
                }
            });
        }
    }
    let max_exit = diag.iter().fold(0.0f64, |m, &d| m.max(-d));
    GeneratorMatrix {
        n_states,
        diag,
        off,
        max_exit,
    }
}

// ---------------------------------------------------------------------------
// Uniformization
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct EvolveResult {
    /// Distribution over the window, aligned with the state-space index.
    pub probs: Vec<f64>,
    /// Mass lost through the window boundary: one minus the sum of `probs`.
    pub leakage: f64,
    pub poisson_terms: usize,
}

/// Evolution of the window chain by uniformization: with `L` the largest
/// exit rate, the distribution is a Poisson mixture of powers of the
/// substochastic matrix `I + G / L`, truncated once the remaining Poisson
/// tail drops below `series_tol`.
pub fn evolve(
    space: &WindowedStateSpace,
    gen: &GeneratorMatrix,
    initial: &State,
    t: f64,
    series_tol: f64,
) -> Result<EvolveResult, OracleError> {
    if t < 0.0 || !t.is_finite() {
        return Err(OracleError::NegativeTime(t));
    }
    let start = space.index_of(initial).ok_or(OracleError::InitialOutsideWindow {
        left: space.left,
        right: space.right,
    })?;
    let n = gen.n_states;
    let mut v = vec![0.0f64; n];
    v[start] = 1.0;
    let lambda = gen.max_exit;
    if lambda == 0.0 || t == 0.0 {
        let leakage = 0.0;
        return Ok(EvolveResult {
            probs: v,
            leakage,
            poisson_terms: 1,
        });
    }
    let lt = lambda * t;
    let mut weight = (-lt).exp();
    let mut cumulative = weight;
    let mut result: Vec<f64> = v.iter().map(|&x| x * weight).collect();
    let mut next = vec![0.0f64; n];
    let mut terms = 1usize;
    // cap well past the Poisson bulk; the tolerance loop exits long before
    let max_terms = (lt + 40.0 * lt.sqrt() + 64.0) as usize;
    while 1.0 - cumulative > series_tol && terms < max_terms {
        // one substochastic step: v <- v (I + G / L), scattering by source row
        next.fill(0.0);
        for s in 0..n {
            let mass = v[s];
            if mass == 0.0 {
                continue;
            }
            next[s] += mass * (1.0 + gen.diag[s] / lambda);
            for &(tgt, rate) in &gen.off[s] {
                next[tgt as usize] += mass * (rate / lambda);
            }
        }
        std::mem::swap(&mut v, &mut next);
        weight *= lt / terms as f64;
        cumulative += weight;
        for (r, &x) in result.iter_mut().zip(v.iter()) {
            *r += weight * x;
        }
        terms += 1;
    }
    let total: f64 = result.iter().sum();
    Ok(EvolveResult {
        probs: result,
        leakage: 1.0 - total,
        poisson_terms: terms,
    })
}

// ---------------------------------------------------------------------------
// Gillespie sampling
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct EmpiricalDistribution {
    pub counts: HashMap<State, u64>,
    pub samples: u64,
}

impl EmpiricalDistribution {
    pub fn frequency(&self, state: &State) -> f64 {
        *self.counts.get(state).unwrap_or(&0) as f64 / self.samples as f64
    }
}

/// Direct simulation on the unbounded lattice. Sample `i` uses stream `i` of
/// a counter-based generator seeded with `seed`, so results are reproducible
/// and independent of batching; samples run in parallel and the counts merge
/// exactly.
pub fn gillespie(
    params: &SystemParams,
    initial: &State,
    t: f64,
    samples: u64,
    seed: u64,
) -> EmpiricalDistribution {
    let counts = (0..samples)
        .into_par_iter()
        .fold(HashMap::<State, u64>::new, |mut acc, sample| {
            *acc.entry(run_sample(params, initial, t, seed, sample)).or_insert(0) += 1;
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (state, count) in b {
                *a.entry(state).or_insert(0) += count;
            }
            a
        });
    EmpiricalDistribution { counts, samples }
}

fn run_sample(params: &SystemParams, initial: &State, t: f64, seed: u64, sample: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    let mut positions = initial.positions().to_vec();
    let mut letters = initial.species().letters().to_vec();
    let mut moves: Vec<(f64, Move)> = Vec::with_capacity(2 * positions.len());
    let mut clock = 0.0f64;
    loop {
        moves.clear();
        visit_moves(&positions, &letters, params, |rate, mv| {
            moves.push((rate, mv));
        });
        // the outermost hops are never blocked, so the total is positive
        let total: f64 = moves.iter().map(|m| m.0).sum();
        clock += Exp::new(total).expect("positive rate").sample(&mut rng);
        if clock > t {
            break;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = moves.len() - 1;
        for (k, (rate, _)) in moves.iter().enumerate() {
            if pick < *rate {
                chosen = k;
                break;
            }
            pick -= rate;
        }
        match moves[chosen].1 {
            Move::Hop { particle, to } => positions[particle] = to,
            Move::Swap { left } => letters.swap(left, left + 1),
        }
    }
    State::new(positions, SpeciesWord::from_letters(letters)).expect("moves preserve ordering")
}

// ---------------------------------------------------------------------------
// Comparisons
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub max_abs_diff: f64,
    pub tv_distance: f64,
    pub worst_state: Option<State>,
    /// Leakage of the reference side.
    pub leakage: f64,
}

/// Compares a window-aligned distribution against a uniformization result.
/// The total-variation distance accounts for mass outside the window on both
/// sides.
pub fn compare(
    space: &WindowedStateSpace,
    probs: &[f64],
    reference: &EvolveResult,
) -> ComparisonReport {
    assert_eq!(probs.len(), space.len());
    let mut sum_abs = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut worst = None;
    for s in 0..space.len() {
        let d = (probs[s] - reference.probs[s]).abs();
        sum_abs += d;
        if d > max_abs {
            max_abs = d;
            worst = Some(s);
        }
    }
    let outside_probs = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let outside_ref = reference.leakage.max(0.0);
    ComparisonReport {
        max_abs_diff: max_abs,
        tv_distance: 0.5 * (sum_abs + (outside_probs - outside_ref).abs()),
        worst_state: worst.map(|s| space.state_at(s)),
        leakage: reference.leakage,
    }
}

/// Compares a window-aligned distribution against an empirical sample.
/// Sampled states outside the window count toward the outside mass.
pub fn compare_empirical(
    space: &WindowedStateSpace,
    probs: &[f64],
    empirical: &EmpiricalDistribution,
) -> ComparisonReport {
    assert_eq!(probs.len(), space.len());
    let mut sum_abs = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut worst = None;
    let mut outside_emp = 0.0f64;
    let mut seen = vec![0.0f64; space.len()];
    for (state, &count) in &empirical.counts {
        let f = count as f64 / empirical.samples as f64;
        match space.index_of(state) {
            Some(idx) => seen[idx] = f,
            None => outside_emp += f,
        }
    }
    for s in 0..space.len() {
        let d = (probs[s] - seen[s]).abs();
        sum_abs += d;
        if d > max_abs {
            max_abs = d;
            worst = Some(s);
        }
    }
    let outside_probs = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    ComparisonReport {
        max_abs_diff: max_abs,
        tv_distance: 0.5 * (sum_abs + (outside_probs - outside_emp).abs()),
        worst_state: worst.map(|s| space.state_at(s)),
        leakage: outside_emp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64) -> SystemParams {
        SystemParams::new(p).unwrap()
    }

    fn state(positions: &[i64], word: &str) -> State {
        State::new(positions.to_vec(), word.parse().unwrap()).unwrap()
    }

    #[test]
    fn window_enumeration_and_indexing() {
        let space = WindowedStateSpace::new(-2, 2, &"12".parse().unwrap()).unwrap();
        // C(5, 2) position pairs times two words
        assert_eq!(space.len(), 20);
        for idx in 0..space.len() {
            let s = space.state_at(idx);
            assert_eq!(space.index_of(&s), Some(idx));
        }
        assert_eq!(space.index_of(&state(&[-3, 0], "12")), None);
        assert_eq!(space.index_of(&state(&[0, 1], "11")), None);
    }

    #[test]
    fn window_too_narrow_rejected() {
        assert!(matches!(
            WindowedStateSpace::new(0, 1, &"123".parse().unwrap()),
            Err(OracleError::WindowTooNarrow { .. })
        ));
    }

    #[test]
    fn oversized_window_rejected() {
        let err = WindowedStateSpace::new(0, 399, &"123".parse().unwrap());
        assert!(matches!(err, Err(OracleError::TooManyStates { .. })));
    }

    #[test]
    fn adjacent_pair_exit_rates() {
        let sp = params(0.7);
        let space = WindowedStateSpace::new(-4, 5, &"12".parse().unwrap()).unwrap();
        let gen = build_generator(&space, &sp);

        // word 21 at adjacent sites: swap at p, outer hops at q and p
        let descending = space.index_of(&state(&[0, 1], "21")).unwrap();
        assert!((gen.diagonal()[descending] + (1.0 + sp.p())).abs() < 1e-15);
        assert_eq!(gen.row(descending).len(), 3);
        let swap_target = space.index_of(&state(&[0, 1], "12")).unwrap();
        let swap_rate = gen
            .row(descending)
            .iter()
            .find(|(tgt, _)| *tgt as usize == swap_target)
            .map(|(_, rate)| *rate)
            .unwrap();
        assert!((swap_rate - sp.p()).abs() < 1e-15);

        // word 12 at adjacent sites: swap at q instead
        let ascending = space.index_of(&state(&[0, 1], "12")).unwrap();
        assert!((gen.diagonal()[ascending] + (1.0 + sp.q())).abs() < 1e-15);
        let back_rate = gen
            .row(ascending)
            .iter()
            .find(|(tgt, _)| *tgt as usize == descending)
            .map(|(_, rate)| *rate)
            .unwrap();
        assert!((back_rate - sp.q()).abs() < 1e-15);
    }

    #[test]
    fn row_sums_vanish_away_from_the_boundary() {
        let sp = params(0.64);
        let space = WindowedStateSpace::new(-5, 5, &"112".parse().unwrap()).unwrap();
        let gen = build_generator(&space, &sp);
        for s in 0..space.len() {
            let row_sum: f64 = gen.diagonal()[s] + gen.row(s).iter().map(|(_, r)| r).sum::<f64>();
            assert!(row_sum < 1e-12, "row sums must be nonpositive");
            let st = space.state_at(s);
            let interior = st.positions()[0] > space.left() && st.positions()[2] < space.right();
            if interior {
                assert!(row_sum.abs() < 1e-12);
            } else {
                assert!(row_sum < -1e-9, "boundary states must leak");
            }
        }
    }

    #[test]
    fn single_particle_evolution_matches_jump_series() {
        // one particle performs free biased jumps; the window marginal must
        // match the two-sided Poisson jump series site by site
        let sp = params(0.7);
        let t = 1.0;
        let space = WindowedStateSpace::new(-14, 14, &"1".parse().unwrap()).unwrap();
        let gen = build_generator(&space, &sp);
        let out = evolve(&space, &gen, &state(&[0], "1"), t, 1e-12).unwrap();
        for x in -9i64..=9 {
            let idx = space.index_of(&state(&[x], "1")).unwrap();
            let expected = free_jump_probability(sp.p(), t, x);
            assert!(
                (out.probs[idx] - expected).abs() < 1e-9,
                "x = {x}: {} vs {expected}",
                out.probs[idx]
            );
        }
        assert!(out.leakage < 1e-6);
        // staying put is at least as likely as never firing the clock
        let home = space.index_of(&state(&[0], "1")).unwrap();
        assert!(out.probs[home] >= (-t).exp());
    }

    // independent series: e^{-t} p^{d+} q^{d-} sum_k (pq)^k t^{2k+|d|} / (k! (k+|d|)!)
    fn free_jump_probability(p: f64, t: f64, d: i64) -> f64 {
        let q = 1.0 - p;
        let ad = d.unsigned_abs() as usize;
        let skew = if d >= 0 {
            p.powi(d as i32)
        } else {
            q.powi((-d) as i32)
        };
        let mut sum = 0.0f64;
        let mut term = t.powi(ad as i32) / factorial(ad);
        for k in 0..40 {
            sum += term;
            let kf = (k + 1) as f64;
            term *= p * q * t * t / (kf * (kf + ad as f64));
        }
        (-t).exp() * skew * sum
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn uniformization_matches_dense_matrix_exponential() {
        let sp = params(0.64);
        let space = WindowedStateSpace::new(-3, 4, &"12".parse().unwrap()).unwrap();
        let gen = build_generator(&space, &sp);
        let initial = state(&[0, 1], "21");
        let t = 0.7;
        let fast = evolve(&space, &gen, &initial, t, 1e-13).unwrap();
        let dense = dense_matrix_exponential(&gen, t);
        let row = space.index_of(&initial).unwrap();
        for s in 0..space.len() {
            let exact = dense[row * space.len() + s];
            assert!(
                (fast.probs[s] - exact).abs() < 1e-10,
                "state {s}: {} vs {exact}",
                fast.probs[s]
            );
        }
    }

    // dense scaling-and-squaring exponential, used only as a second opinion
    fn dense_matrix_exponential(gen: &GeneratorMatrix, t: f64) -> Vec<f64> {
        let n = gen.n_states();
        let mut a = vec![0.0f64; n * n];
        for s in 0..n {
            a[s * n + s] += gen.diagonal()[s] * t;
            for &(tgt, rate) in gen.row(s) {
                a[s * n + tgt as usize] += rate * t;
            }
        }
        let norm = (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j].abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let squarings = if norm > 0.25 {
            (norm / 0.25).log2().ceil() as u32
        } else {
            0
        };
        let scale = 0.5f64.powi(squarings as i32);
        for entry in a.iter_mut() {
            *entry *= scale;
        }
        let mut result = identity(n);
        let mut term = identity(n);
        for k in 1..60 {
            term = matmul(&term, &a, n);
            for entry in term.iter_mut() {
                *entry /= k as f64;
            }
            let term_norm: f64 = term.iter().map(|x| x.abs()).sum();
            for (r, &x) in result.iter_mut().zip(term.iter()) {
                *r += x;
            }
            if term_norm < 1e-18 {
                break;
            }
        }
        for _ in 0..squarings {
            result = matmul(&result, &result, n);
        }
        result
    }

    fn identity(n: usize) -> Vec<f64> {
        let mut m = vec![0.0f64; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        m
    }

    fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0f64; n * n];
        for i in 0..n {
            for k in 0..n {
                let v = a[i * n + k];
                if v == 0.0 {
                    continue;
                }
                for j in 0..n {
                    c[i * n + j] += v * b[k * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gillespie_drift_matches_bias() {
        let sp = params(0.7);
        let t = 2.0;
        let samples = 20_000u64;
        let emp = gillespie(&sp, &state(&[0], "1"), t, samples, 1);
        let mean: f64 = emp
            .counts
            .iter()
            .map(|(s, &c)| s.positions()[0] as f64 * c as f64)
            .sum::<f64>()
            / samples as f64;
        let drift = (sp.p() - sp.q()) * t;
        // variance of the jump count is t per direction pair
        let bound = 4.0 * (t / samples as f64).sqrt();
        assert!((mean - drift).abs() < bound, "mean {mean}, drift {drift}");
    }

    #[test]
    fn gillespie_is_reproducible() {
        let sp = params(0.6);
        let initial = state(&[0, 1], "21");
        let a = gillespie(&sp, &initial, 0.5, 500, 42);
        let b = gillespie(&sp, &initial, 0.5, 500, 42);
        assert_eq!(a.counts, b.counts);
        let c = gillespie(&sp, &initial, 0.5, 500, 43);
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn comparison_reports_are_sane() {
        let sp = params(0.6);
        let space = WindowedStateSpace::new(-3, 4, &"12".parse().unwrap()).unwrap();
        let gen = build_generator(&space, &sp);
        let initial = state(&[0, 1], "12");
        let out = evolve(&space, &gen, &initial, 0.4, 1e-12).unwrap();
        let same = compare(&space, &out.probs, &out);
        assert!(same.max_abs_diff == 0.0 && same.tv_distance < 1e-15);

        let emp = gillespie(&sp, &initial, 0.4, 20_000, 9);
        let rep = compare_empirical(&space, &out.probs, &emp);
        // a well-mixed sample of this size sits within a few percent in TV
        assert!(rep.tv_distance < 0.05, "tv = {}", rep.tv_distance);
    }
}
