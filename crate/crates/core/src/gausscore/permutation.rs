use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Player-to-role assignment. `map[l] = k` means player `l` occupies role `k`,
/// i.e. the permutation matrix `Q` has `Q[l][k] = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let d = map.len();
        let mut seen = vec![false; d];
        for &k in &map {
            if k >= d || std::mem::replace(&mut seen[k], true) {
                return Err(Error::ContractViolation(format!("{map:?} is not a bijection")));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(d: usize) -> Self {
        Self { map: (0..d).collect() }
    }

    /// Swap of players `a` and `b`, everyone else fixed.
    pub fn transposition(d: usize, a: usize, b: usize) -> Self {
        let mut map: Vec<usize> = (0..d).collect();
        map.swap(a, b);
        Self { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(l, &k)| l == k)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (l, &k) in self.map.iter().enumerate() {
            inv[k] = l;
        }
        Self { map: inv }
    }

    /// Matrix product `self · other`: player `l` goes to `other.map[self.map[l]]`.
    ///
    /// With this convention `apply(compose(a, b), y) == apply(b, apply(a, y))`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            map: self.map.iter().map(|&j| other.map[j]).collect(),
        }
    }

    /// Computes `Qᵀ y`: row `k` of the output is the row `l` of `y` with `map[l] = k`.
    pub fn apply<T: Clone>(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.map.len());
        let mut out: Vec<Option<T>> = vec![None; y.len()];
        for (l, &k) in self.map.iter().enumerate() {
            out[k] = Some(y[l].clone());
        }
        out.into_iter().map(|v| v.expect("bijection")).collect()
    }

    /// Dense `d × d` matrix with ones at `(l, map[l])`.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.len();
        let mut m = vec![vec![0.0; d]; d];
        for (l, &k) in self.map.iter().enumerate() {
            m[l][k] = 1.0;
        }
        m
    }

    /// Block-doubled `2d × 2d` matrix acting on flattened frames, with
    /// `Q̃[2k][2l] = Q̃[2k+1][2l+1] = 1` whenever `Q[k][l] = 1`.
    pub fn expand_to_coordinates(&self) -> DMatrix<f64> {
        let d = self.len();
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        for (k, &l) in self.map.iter().enumerate() {
            m[(2 * k, 2 * l)] = 1.0;
            m[(2 * k + 1, 2 * l + 1)] = 1.0;
        }
        m
    }

    /// Index form of `Q̃`: `(Q̃ z)[i] = z[idx[i]]`.
    pub fn coordinate_index(&self) -> Vec<usize> {
        self.map.iter().flat_map(|&l| [2 * l, 2 * l + 1]).collect()
    }

    /// Number of players not mapped to their own role.
    pub fn displaced(&self) -> usize {
        self.map.iter().enumerate().filter(|(l, &k)| *l != k).count()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        Self::new(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.map
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, k) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "]")
    }
}

/// All `d!` permutations in lexicographic order of their maps.
pub fn all_permutations(d: usize) -> Vec<Permutation> {
    fn rec(d: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
        if cur.len() == d {
            out.push(Permutation { map: cur.clone() });
            return;
        }
        for k in 0..d {
            if !used[k] {
                used[k] = true;
                cur.push(k);
                rec(d, cur, used, out);
                cur.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(d, &mut Vec::with_capacity(d), &mut vec![false; d], &mut out);
    out
}
