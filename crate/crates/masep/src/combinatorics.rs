//! Species words, sectors, permutations and adjacent-transposition paths.
//!
//! A species word is the ordered list of particle classes read off a
//! configuration from left to right. Words sharing a multiset of labels form a
//! sector; every matrix in this crate is blocked by sector and indexed by the
//! lexicographic order of the sector's words. Permutations enter through the
//! sum over the symmetric group in the transition formula, and their
//! adjacent-transposition decompositions drive the amplitude construction.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Sectors up to this dimension precompute the full word list and a rank map;
/// larger sectors fall back to counting-based rank/unrank.
const EAGER_DIM_LIMIT: usize = 10_080;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CombinatoricsError {
    #[error("species label {0} out of range (labels are 1-based)")]
    LabelOutOfRange(u64),
    #[error("species word must be non-empty")]
    EmptyWord,
    #[error("cannot parse species word {0:?}")]
    MalformedWord(String),
    #[error("word {word} does not belong to sector {sector}")]
    WordNotInSector { word: String, sector: String },
    #[error("rank {rank} out of range for sector of dimension {dim}")]
    RankOutOfRange { rank: usize, dim: usize },
    #[error("{0:?} is not a permutation of 1..=n")]
    NotAPermutation(Vec<usize>),
    #[error("sector dimension overflows usize")]
    DimensionOverflow,
    #[error("adjacent position {position} out of range for word length {len}")]
    PositionOutOfRange { position: usize, len: usize },
}

// ---------------------------------------------------------------------------
// Species words
// ---------------------------------------------------------------------------

/// Ordered species labels of a configuration. Labels are 1-based in every
/// constructor, accessor and textual form; storage is 0-based.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpeciesWord {
    letters: Vec<u32>,
}

impl SpeciesWord {
    /// Builds a word from 1-based labels.
    pub fn from_labels(labels: &[u32]) -> Result<Self, CombinatoricsError> {
        if labels.is_empty() {
            return Err(CombinatoricsError::EmptyWord);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0) {
            return Err(CombinatoricsError::LabelOutOfRange(bad as u64));
        }
        Ok(SpeciesWord {
            letters: labels.iter().map(|&l| l - 1).collect(),
        })
    }

    pub(crate) fn from_letters(letters: Vec<u32>) -> Self {
        debug_assert!(!letters.is_empty());
        SpeciesWord { letters }
    }

    /// 1-based labels, left to right.
    pub fn labels(&self) -> Vec<u32> {
        self.letters.iter().map(|&l| l + 1).collect()
    }

    /// 0-based letters; all internal comparisons use these.
    pub(crate) fn letters(&self) -> &[u32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn max_label(&self) -> u32 {
        self.letters.iter().copied().max().unwrap_or(0) + 1
    }

    /// Word with the letters at `position`, `position + 1` exchanged.
    pub fn swapped(&self, position: usize) -> Result<Self, CombinatoricsError> {
        if position + 1 >= self.letters.len() {
            return Err(CombinatoricsError::PositionOutOfRange {
                position,
                len: self.letters.len(),
            });
        }
        let mut letters = self.letters.clone();
        letters.swap(position, position + 1);
        Ok(SpeciesWord { letters })
    }

    fn sorted_letters(&self) -> Vec<u32> {
        let mut s = self.letters.clone();
        s.sort_unstable();
        s
    }

    /// True when both words carry the same multiset of labels.
    pub fn same_multiset(&self, other: &SpeciesWord) -> bool {
        self.len() == other.len() && self.sorted_letters() == other.sorted_letters()
    }
}

impl fmt::Display for SpeciesWord {
    /// Digit string when every label fits one digit, comma-separated otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.max_label() <= 9 {
            for &l in &self.letters {
                write!(f, "{}", l + 1)?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.letters.iter().map(|&l| (l + 1).to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl fmt::Debug for SpeciesWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpeciesWord({self})")
    }
}

impl FromStr for SpeciesWord {
    type Err = CombinatoricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || CombinatoricsError::MalformedWord(s.to_string());
        let labels: Vec<u32> = if s.contains(',') {
            s.split(',')
                .map(|part| part.trim().parse::<u32>().map_err(|_| malformed()))
                .collect::<Result<_, _>>()?
        } else {
            s.trim()
                .chars()
                .map(|c| c.to_digit(10).ok_or_else(malformed))
                .collect::<Result<_, _>>()?
        };
        if labels.is_empty() {
            return Err(CombinatoricsError::EmptyWord);
        }
        SpeciesWord::from_labels(&labels)
    }
}

// ---------------------------------------------------------------------------
// Sectors
// ---------------------------------------------------------------------------

/// All words over one multiset of labels, in lexicographic order.
#[derive(Clone, Debug)]
pub struct Sector {
    /// Ascending 0-based letters; the lexicographically first word.
    letters_sorted: Vec<u32>,
    /// (distinct letter, multiplicity), ascending by letter.
    counts: Vec<(u32, usize)>,
    dim: usize,
    eager: Option<EagerIndex>,
}

#[derive(Clone, Debug)]
struct EagerIndex {
    words: Vec<SpeciesWord>,
    rank_of: HashMap<Vec<u32>, usize>,
}

/// Sector of the given word.
pub fn sector_of(word: &SpeciesWord) -> Result<Sector, CombinatoricsError> {
    Sector::from_multiset(word.sorted_letters())
}

impl Sector {
    fn from_multiset(letters_sorted: Vec<u32>) -> Result<Self, CombinatoricsError> {
        let mut counts: Vec<(u32, usize)> = Vec::new();
        for &l in &letters_sorted {
            match counts.last_mut() {
                Some((letter, c)) if *letter == l => *c += 1,
                _ => counts.push((l, 1)),
            }
        }
        let dim = multinomial(letters_sorted.len(), counts.iter().map(|&(_, c)| c))
            .ok_or(CombinatoricsError::DimensionOverflow)?;
        let mut sector = Sector {
            letters_sorted,
            counts,
            dim,
            eager: None,
        };
        if dim <= EAGER_DIM_LIMIT {
            let words: Vec<SpeciesWord> = sector.generate_words();
            let rank_of = words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.letters.clone(), i))
                .collect();
            sector.eager = Some(EagerIndex { words, rank_of });
        }
        Ok(sector)
    }

    /// Number of distinct words: n! over the product of multiplicities.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Word length.
    pub fn word_len(&self) -> usize {
        self.letters_sorted.len()
    }

    /// 1-based labels of the multiset, ascending.
    pub fn labels(&self) -> Vec<u32> {
        self.letters_sorted.iter().map(|&l| l + 1).collect()
    }

    /// The lexicographically first word.
    pub fn first_word(&self) -> SpeciesWord {
        SpeciesWord::from_letters(self.letters_sorted.clone())
    }

    pub fn contains(&self, word: &SpeciesWord) -> bool {
        word.sorted_letters() == self.letters_sorted
    }

    /// Lexicographic rank of `word` within the sector.
    pub fn rank(&self, word: &SpeciesWord) -> Result<usize, CombinatoricsError> {
        let not_member = || CombinatoricsError::WordNotInSector {
            word: word.to_string(),
            sector: self.first_word().to_string(),
        };
        if let Some(eager) = &self.eager {
            return eager.rank_of.get(&word.letters).copied().ok_or_else(not_member);
        }
        if !self.contains(word) {
            return Err(not_member());
        }
        Ok(self.rank_by_counting(word.letters()))
    }

    /// Word at lexicographic rank `rank`.
    pub fn unrank(&self, rank: usize) -> Result<SpeciesWord, CombinatoricsError> {
        if rank >= self.dim {
            return Err(CombinatoricsError::RankOutOfRange {
                rank,
                dim: self.dim,
            });
        }
        if let Some(eager) = &self.eager {
            return Ok(eager.words[rank].clone());
        }
        Ok(self.unrank_by_counting(rank))
    }

    /// All words in lexicographic order.
    pub fn words(&self) -> Vec<SpeciesWord> {
        match &self.eager {
            Some(eager) => eager.words.clone(),
            None => self.generate_words(),
        }
    }

    fn generate_words(&self) -> Vec<SpeciesWord> {
        let mut out = Vec::with_capacity(self.dim.min(EAGER_DIM_LIMIT));
        let mut current = self.letters_sorted.clone();
        loop {
            out.push(SpeciesWord::from_letters(current.clone()));
            if !next_multiset_permutation(&mut current) {
                break;
            }
        }
        out
    }

    /// Rank by counting the words that start with a smaller letter at each
    /// position; linear in word length times distinct letters.
    fn rank_by_counting(&self, letters: &[u32]) -> usize {
        let mut counts = self.counts.clone();
        let mut remaining = letters.len();
        let mut rank = 0usize;
        for &c in letters {
            for &(letter, cnt) in counts.iter() {
                if letter >= c {
                    break;
                }
                if cnt > 0 {
                    rank += perms_with_removed(&counts, letter, remaining);
                }
            }
            let slot = counts.iter_mut().find(|(l, _)| *l == c).expect("member");
            slot.1 -= 1;
            remaining -= 1;
        }
        rank
    }

    fn unrank_by_counting(&self, mut rank: usize) -> SpeciesWord {
        let mut counts = self.counts.clone();
        let mut remaining = self.letters_sorted.len();
        let mut letters = Vec::with_capacity(remaining);
        while remaining > 0 {
            let mut placed = false;
            for i in 0..counts.len() {
                let (letter, cnt) = counts[i];
                if cnt == 0 {
                    continue;
                }
                let block = perms_with_removed(&counts, letter, remaining);
                if rank < block {
                    letters.push(letter);
                    counts[i].1 -= 1;
                    remaining -= 1;
                    placed = true;
                    break;
                }
                rank -= block;
            }
            debug_assert!(placed, "rank exhausted before word complete");
        }
        SpeciesWord::from_letters(letters)
    }
}

/// Words of the sub-multiset obtained by removing one copy of `removed`;
/// `remaining` counts letters still to place (including the removed one).
fn perms_with_removed(counts: &[(u32, usize)], removed: u32, remaining: usize) -> usize {
    multinomial(
        remaining - 1,
        counts
            .iter()
            .map(|&(l, c)| if l == removed { c - 1 } else { c }),
    )
    .expect("sub-multiset dimension fits usize when the sector dimension does")
}

/// n! / prod(m_i!) computed as a product of binomials; `None` on overflow.
fn multinomial(n: usize, mults: impl Iterator<Item = usize>) -> Option<usize> {
    let mut remaining = n;
    let mut acc: u128 = 1;
    for m in mults {
        acc = acc.checked_mul(binomial_u128(remaining, m)?)?;
        remaining -= m;
    }
    debug_assert_eq!(remaining, 0);
    usize::try_from(acc).ok()
}

fn binomial_u128(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// Advances to the next multiset permutation in lexicographic order;
/// returns false after the last one.
fn next_multiset_permutation(w: &mut [u32]) -> bool {
    let n = w.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && w[i - 1] >= w[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let pivot = i - 1;
    let mut j = n - 1;
    while w[j] <= w[pivot] {
        j -= 1;
    }
    w.swap(pivot, j);
    w[i..].reverse();
    true
}

// ---------------------------------------------------------------------------
// Permutations
// ---------------------------------------------------------------------------

/// Permutation of {1..n} in one-line notation; images are stored 0-based.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            images: (0..n).collect(),
        }
    }

    /// One-line notation with 1-based values, e.g. `[2, 1, 3]`.
    pub fn from_one_line(values: &[usize]) -> Result<Self, CombinatoricsError> {
        let n = values.len();
        let mut seen = vec![false; n];
        for &v in values {
            if v == 0 || v > n || seen[v - 1] {
                return Err(CombinatoricsError::NotAPermutation(values.to_vec()));
            }
            seen[v - 1] = true;
        }
        Ok(Permutation {
            images: values.iter().map(|&v| v - 1).collect(),
        })
    }

    pub fn one_line(&self) -> Vec<usize> {
        self.images.iter().map(|&v| v + 1).collect()
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    /// sigma(i) with both sides 0-based.
    pub fn image(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0usize; self.images.len()];
        for (i, &v) in self.images.iter().enumerate() {
            inv[v] = i;
        }
        Permutation { images: inv }
    }

    /// Value pairs (beta, alpha) with beta > alpha and beta appearing to the
    /// left of alpha; 0-based values. Found by the quadratic pair scan.
    pub fn inversions(&self) -> Vec<(usize, usize)> {
        let n = self.images.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.images[i] > self.images[j] {
                    out.push((self.images[i], self.images[j]));
                }
            }
        }
        out
    }

    pub fn inversion_count(&self) -> usize {
        self.inversions().len()
    }

    /// Left multiplication by the adjacent transposition at `position`:
    /// exchanges the one-line entries at `position`, `position + 1`.
    pub fn swapped(&self, position: usize) -> Result<Self, CombinatoricsError> {
        if position + 1 >= self.images.len() {
            return Err(CombinatoricsError::PositionOutOfRange {
                position,
                len: self.images.len(),
            });
        }
        let mut images = self.images.clone();
        images.swap(position, position + 1);
        Ok(Permutation { images })
    }

    /// All permutations of degree `n` in lexicographic one-line order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut images: Vec<usize> = (0..n).collect();
        let mut out = Vec::new();
        loop {
            out.push(Permutation {
                images: images.clone(),
            });
            // next_multiset_permutation is the plain next-permutation here
            let mut w: Vec<u32> = images.iter().map(|&v| v as u32).collect();
            if !next_multiset_permutation(&mut w) {
                break;
            }
            images = w.iter().map(|&v| v as usize).collect();
        }
        out
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.images.len() <= 9 {
            for &v in &self.images {
                write!(f, "{}", v + 1)?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.images.iter().map(|&v| (v + 1).to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation({self})")
    }
}

// ---------------------------------------------------------------------------
// Transposition paths
// ---------------------------------------------------------------------------

/// One step of a path from the identity: swap the one-line entries at
/// `position` of the running permutation. `beta > alpha` are the 0-based
/// values exchanged, recorded before the swap (right entry first).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathStep {
    pub position: usize,
    pub beta: usize,
    pub alpha: usize,
}

/// Minimal path of adjacent transpositions from the identity to `target`.
/// Path length equals the inversion count, and the multiset of (beta, alpha)
/// pairs equals the inversion set of the target.
#[derive(Clone, Debug)]
pub struct TranspositionPath {
    target: Permutation,
    steps: Vec<PathStep>,
}

impl TranspositionPath {
    /// Builds the path for a swap-position word applied left to right starting
    /// from the identity. Each swap must create an inversion (minimality).
    fn from_word(target: &Permutation, word: &[usize]) -> Self {
        let mut current = Permutation::identity(target.degree());
        let mut steps = Vec::with_capacity(word.len());
        for &l in word {
            let a = current.image(l);
            let b = current.image(l + 1);
            debug_assert!(b > a, "swap at {l} does not create an inversion");
            steps.push(PathStep {
                position: l,
                beta: b,
                alpha: a,
            });
            current = current.swapped(l).expect("position in range");
        }
        debug_assert_eq!(&current, target, "word does not reach the target");
        TranspositionPath {
            target: target.clone(),
            steps,
        }
    }

    pub fn target(&self) -> &Permutation {
        &self.target
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Swap positions in application order.
    pub fn word(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.position).collect()
    }

    /// (beta, alpha) pairs in application order; as a multiset these are the
    /// inversions of the target.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.steps.iter().map(|s| (s.beta, s.alpha)).collect()
    }

    /// Running permutations sigma_0 = id, ..., sigma_len = target.
    pub fn intermediates(&self) -> Vec<Permutation> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let mut current = Permutation::identity(self.target.degree());
        out.push(current.clone());
        for step in &self.steps {
            current = current.swapped(step.position).expect("position in range");
            out.push(current.clone());
        }
        out
    }
}

/// Canonical minimal decomposition: bubble-sort passes over the one-line word.
pub fn decompose(sigma: &Permutation) -> TranspositionPath {
    let n = sigma.degree();
    let mut w: Vec<usize> = (0..n).map(|i| sigma.image(i)).collect();
    let mut rec = Vec::new();
    loop {
        let mut changed = false;
        for i in 0..n.saturating_sub(1) {
            if w[i] > w[i + 1] {
                w.swap(i, i + 1);
                rec.push(i);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    rec.reverse();
    TranspositionPath::from_word(sigma, &rec)
}

/// Alternative minimal decomposition: right-to-left insertion. Produces a
/// different swap word than [`decompose`] whenever the target admits one.
pub fn decompose_insertion(sigma: &Permutation) -> TranspositionPath {
    let n = sigma.degree();
    let mut w: Vec<usize> = (0..n).map(|i| sigma.image(i)).collect();
    let mut rec = Vec::new();
    for i in (0..n.saturating_sub(1)).rev() {
        let mut j = i;
        while j + 1 < n && w[j] > w[j + 1] {
            w.swap(j, j + 1);
            rec.push(j);
            j += 1;
        }
    }
    rec.reverse();
    TranspositionPath::from_word(sigma, &rec)
}

/// Uniformly random minimal decomposition: at each step pick one of the
/// adjacent swaps that creates an inversion of the target.
pub fn decompose_random<R: Rng + ?Sized>(sigma: &Permutation, rng: &mut R) -> TranspositionPath {
    let n = sigma.degree();
    let inverse = sigma.inverse();
    let mut current = Permutation::identity(n);
    let mut word = Vec::with_capacity(sigma.inversion_count());
    loop {
        let valid: Vec<usize> = (0..n.saturating_sub(1))
            .filter(|&l| {
                let a = current.image(l);
                let b = current.image(l + 1);
                // swapping creates the pair (b, a); it must be an inversion of
                // the target, i.e. b sits before a in the target's word
                a < b && inverse.image(b) < inverse.image(a)
            })
            .collect();
        if valid.is_empty() {
            break;
        }
        let l = valid[rng.random_range(0..valid.len())];
        word.push(l);
        current = current.swapped(l).expect("position in range");
    }
    debug_assert_eq!(&current, sigma);
    TranspositionPath::from_word(sigma, &word)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn word(s: &str) -> SpeciesWord {
        s.parse().unwrap()
    }

    #[test]
    fn word_parse_and_display_round_trip() {
        assert_eq!(word("112").labels(), vec![1, 1, 2]);
        assert_eq!(word("112").to_string(), "112");
        assert_eq!(word("1,12,3").labels(), vec![1, 12, 3]);
        assert_eq!(word("1,12,3").to_string(), "1,12,3");
        assert!("".parse::<SpeciesWord>().is_err());
        assert!("1a2".parse::<SpeciesWord>().is_err());
        assert!("102".parse::<SpeciesWord>().is_err());
        assert!("1,,2".parse::<SpeciesWord>().is_err());
    }

    #[test]
    fn label_zero_rejected() {
        assert_eq!(
            SpeciesWord::from_labels(&[1, 0, 2]),
            Err(CombinatoricsError::LabelOutOfRange(0))
        );
    }

    #[test]
    fn sector_112_has_dim_three_in_lex_order() {
        let s = sector_of(&word("112")).unwrap();
        assert_eq!(s.dim(), 3);
        let words: Vec<String> = s.words().iter().map(|w| w.to_string()).collect();
        assert_eq!(words, vec!["112", "121", "211"]);
    }

    #[test]
    fn sector_123_has_dim_six_in_lex_order() {
        let s = sector_of(&word("123")).unwrap();
        assert_eq!(s.dim(), 6);
        let words: Vec<String> = s.words().iter().map(|w| w.to_string()).collect();
        assert_eq!(words, vec!["123", "132", "213", "231", "312", "321"]);
    }

    #[test]
    fn singleton_sector() {
        let s = sector_of(&word("11")).unwrap();
        assert_eq!(s.dim(), 1);
        assert_eq!(s.rank(&word("11")).unwrap(), 0);
    }

    #[test]
    fn rank_examples() {
        let s = sector_of(&word("112")).unwrap();
        assert_eq!(s.rank(&word("121")).unwrap(), 1);
        let s = sector_of(&word("123")).unwrap();
        assert_eq!(s.rank(&word("321")).unwrap(), 5);
        let s = sector_of(&word("22")).unwrap();
        assert_eq!(s.rank(&word("22")).unwrap(), 0);
    }

    #[test]
    fn rank_rejects_foreign_word() {
        let s = sector_of(&word("112")).unwrap();
        assert!(matches!(
            s.rank(&word("122")),
            Err(CombinatoricsError::WordNotInSector { .. })
        ));
    }

    #[test]
    fn counting_rank_matches_eager_index() {
        for base in ["1122", "1213121", "112233", "54321"] {
            let s = sector_of(&word(base)).unwrap();
            for (r, w) in s.words().iter().enumerate() {
                assert_eq!(s.rank_by_counting(w.letters()), r, "word {w}");
                assert_eq!(s.unrank_by_counting(r), *w);
            }
        }
    }

    #[test]
    fn rank_unrank_round_trip_medium_sectors() {
        // dims here: 6!/(2!2!2!) = 90, 6! = 720, 7!/(3!2!) = 420
        for base in ["112233", "123456", "1112233"] {
            let s = sector_of(&word(base)).unwrap();
            assert!(s.dim() <= 720);
            for r in 0..s.dim() {
                let w = s.unrank(r).unwrap();
                assert_eq!(s.rank(&w).unwrap(), r);
            }
        }
    }

    #[test]
    fn sector_dims_sum_to_full_tensor_dimension() {
        // sum over all multisets of size n from an alphabet of k letters
        for (k, n) in [(2usize, 4usize), (3, 4), (4, 3), (5, 5)] {
            let mut total = 0usize;
            let mut seen = HashSet::new();
            // enumerate words over the alphabet, collect their sectors
            let mut w = vec![0u32; n];
            loop {
                let mut key = w.clone();
                key.sort_unstable();
                if seen.insert(key.clone()) {
                    let s = Sector::from_multiset(key).unwrap();
                    total += s.dim();
                }
                // odometer over alphabet k
                let mut i = 0;
                loop {
                    if i == n {
                        break;
                    }
                    w[i] += 1;
                    if (w[i] as usize) < k {
                        break;
                    }
                    w[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
            assert_eq!(total, k.pow(n as u32), "k = {k}, n = {n}");
        }
    }

    #[test]
    fn permutation_constructors_validate() {
        assert!(Permutation::from_one_line(&[2, 1, 3]).is_ok());
        assert!(Permutation::from_one_line(&[2, 2, 3]).is_err());
        assert!(Permutation::from_one_line(&[0, 1]).is_err());
        assert!(Permutation::from_one_line(&[1, 4, 2]).is_err());
    }

    #[test]
    fn inversions_of_small_permutations() {
        assert!(Permutation::identity(4).inversions().is_empty());
        let p21 = Permutation::from_one_line(&[2, 1]).unwrap();
        assert_eq!(p21.inversions(), vec![(1, 0)]); // values (2,1), 0-based
        let p321 = Permutation::from_one_line(&[3, 2, 1]).unwrap();
        let set: HashSet<_> = p321.inversions().into_iter().collect();
        assert_eq!(set, HashSet::from([(2, 1), (2, 0), (1, 0)]));
    }

    #[test]
    fn all_permutations_count_and_order() {
        let s3 = Permutation::all(3);
        assert_eq!(s3.len(), 6);
        assert_eq!(s3[0], Permutation::identity(3));
        assert_eq!(s3[5], Permutation::from_one_line(&[3, 2, 1]).unwrap());
    }

    #[test]
    fn decompose_identity_is_empty() {
        assert!(decompose(&Permutation::identity(4)).is_empty());
        assert!(decompose_insertion(&Permutation::identity(1)).is_empty());
    }

    #[test]
    fn decompose_213() {
        let sigma = Permutation::from_one_line(&[2, 1, 3]).unwrap();
        let path = decompose(&sigma);
        assert_eq!(path.word(), vec![0]);
        assert_eq!(path.pairs(), vec![(1, 0)]);
    }

    #[test]
    fn decompose_321_both_strategies() {
        let sigma = Permutation::from_one_line(&[3, 2, 1]).unwrap();
        let a = decompose(&sigma);
        let b = decompose_insertion(&sigma);
        assert_eq!(a.len(), 3);
        assert_eq!(b.len(), 3);
        assert_ne!(a.word(), b.word(), "strategies should differ on 321");
        let inv: HashSet<_> = sigma.inversions().into_iter().collect();
        assert_eq!(a.pairs().into_iter().collect::<HashSet<_>>(), inv);
        assert_eq!(b.pairs().into_iter().collect::<HashSet<_>>(), inv);
    }

    #[test]
    fn paths_are_minimal_with_inversion_pairs_for_all_s5() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sigma in Permutation::all(5) {
            let inv_multiset = {
                let mut v = sigma.inversions();
                v.sort_unstable();
                v
            };
            for path in [
                decompose(&sigma),
                decompose_insertion(&sigma),
                decompose_random(&sigma, &mut rng),
            ] {
                assert_eq!(path.len(), sigma.inversion_count());
                assert_eq!(path.target(), &sigma);
                let mut pairs = path.pairs();
                pairs.sort_unstable();
                assert_eq!(pairs, inv_multiset, "sigma = {sigma}");
                let inter = path.intermediates();
                assert_eq!(inter.first().unwrap(), &Permutation::identity(5));
                assert_eq!(inter.last().unwrap(), &sigma);
            }
        }
    }

    #[test]
    fn swapped_word_positions() {
        let w = word("1213");
        assert_eq!(w.swapped(1).unwrap().to_string(), "1123");
        assert!(w.swapped(3).is_err());
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rank_unrank_round_trip(letters in proptest::collection::vec(0u32..4, 1..9)) {
                let s = Sector::from_multiset({ let mut l = letters.clone(); l.sort_unstable(); l }).unwrap();
                for r in 0..s.dim() {
                    let w = s.unrank(r).unwrap();
                    prop_assert_eq!(s.rank(&w).unwrap(), r);
                }
            }

            #[test]
            fn decompositions_agree_on_inversion_multiset(seed in 0u64..500, n in 2usize..8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut values: Vec<usize> = (1..=n).collect();
                for i in (1..n).rev() {
                    let j = rng.random_range(0..=i);
                    values.swap(i, j);
                }
                let sigma = Permutation::from_one_line(&values).unwrap();
                let mut inv = sigma.inversions();
                inv.sort_unstable();
                for path in [decompose(&sigma), decompose_insertion(&sigma), decompose_random(&sigma, &mut rng)] {
                    let mut pairs = path.pairs();
                    pairs.sort_unstable();
                    prop_assert_eq!(&pairs, &inv);
                    prop_assert_eq!(path.len(), inv.len());
                }
            }
        }
    }
}
