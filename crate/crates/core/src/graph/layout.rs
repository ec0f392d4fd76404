use std::fmt;

use serde::{Deserialize, Serialize};

/// Memory layout of a tensor. Rank-4 tensors are either NCHW or NHWC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    NCHW,
    NHWC,
    NC,
    N,
}

impl Layout {
    pub fn rank(self) -> usize {
        self.letters().len()
    }

    pub fn letters(self) -> &'static str {
        match self {
            Layout::NCHW => "NCHW",
            Layout::NHWC => "NHWC",
            Layout::NC => "NC",
            Layout::N => "N",
        }
    }

    fn from_letters(letters: &str) -> Option<Layout> {
        match letters {
            "NCHW" => Some(Layout::NCHW),
            "NHWC" => Some(Layout::NHWC),
            "NC" => Some(Layout::NC),
            "N" => Some(Layout::N),
            _ => None,
        }
    }

    /// Axis carrying the channel dimension. Rank-1 tensors are one channel axis.
    pub fn channel_axis(self) -> usize {
        match self {
            Layout::NCHW | Layout::NC => 1,
            Layout::NHWC => 3,
            Layout::N => 0,
        }
    }

    /// Height and width axes; empty for non-spatial layouts.
    pub fn spatial_axes(self) -> &'static [usize] {
        match self {
            Layout::NCHW => &[2, 3],
            Layout::NHWC => &[1, 2],
            Layout::NC | Layout::N => &[],
        }
    }

    /// Layout after a transpose with `perm` (output axis i reads input axis `perm[i]`).
    pub fn permuted(self, perm: &[usize]) -> Option<Layout> {
        let letters = self.letters().as_bytes();
        if perm.len() != letters.len() || !is_permutation(perm) {
            return None;
        }
        let out: String = perm.iter().map(|&p| letters[p] as char).collect();
        Layout::from_letters(&out)
    }

    /// The layout whose channel axis comes last, for this rank.
    pub fn channel_last(rank: usize) -> Option<Layout> {
        match rank {
            4 => Some(Layout::NHWC),
            2 => Some(Layout::NC),
            1 => Some(Layout::N),
            _ => None,
        }
    }

    /// Default layout for a rank when it carries no spatial meaning.
    pub fn for_rank(rank: usize) -> Option<Layout> {
        match rank {
            4 => Some(Layout::NCHW),
            2 => Some(Layout::NC),
            1 => Some(Layout::N),
            _ => None,
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letters())
    }
}

/// Transpose permutation turning `from` into `to`, if both share axes.
pub fn perm_between(from: Layout, to: Layout) -> Option<Vec<usize>> {
    if from.rank() != to.rank() {
        return None;
    }
    let src = from.letters();
    to.letters().chars().map(|c| src.find(c)).collect()
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

pub fn is_identity(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(i, &p)| i == p)
}

/// Permutation equivalent to applying `first` then `second`.
pub fn compose(first: &[usize], second: &[usize]) -> Vec<usize> {
    second.iter().map(|&p| first[p]).collect()
}

pub fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub fn permute_dims(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    perm.iter().map(|&p| dims[p]).collect()
}
