//! Deterministic pairwise (cascade) summation.
//!
//! Values are combined along a fixed binary tree determined only by the
//! order of insertion, so the result is reproducible bit-for-bit regardless
//! of how the work that produced the terms was scheduled.

use num_complex::Complex64;
use std::ops::Add;

/// Streaming pairwise accumulator. Pushing `n` values costs `O(n)` additions
/// and `O(log n)` memory.
#[derive(Debug, Clone)]
pub struct Pairwise<T> {
    // (value, number of leaves it covers); counts strictly decrease along the stack
    stack: Vec<(T, u64)>,
    zero: T,
}

impl<T: Copy + Add<Output = T>> Pairwise<T> {
    pub fn new(zero: T) -> Self {
        Self {
            stack: Vec::with_capacity(64),
            zero,
        }
    }

    pub fn push(&mut self, v: T) {
        let mut cur = (v, 1u64);
        while let Some(&(top, n)) = self.stack.last() {
            if n != cur.1 {
                break;
            }
            self.stack.pop();
            cur = (top + cur.0, n + cur.1);
        }
        self.stack.push(cur);
    }

    pub fn total(&self) -> T {
        let mut acc = self.zero;
        // smallest subtrees first, then fold into the larger ones
        for &(v, _) in self.stack.iter().rev() {
            acc = v + acc;
        }
        acc
    }
}

impl Pairwise<f64> {
    pub fn real() -> Self {
        Self::new(0.0)
    }
}

impl Pairwise<Complex64> {
    pub fn complex() -> Self {
        Self::new(Complex64::new(0.0, 0.0))
    }
}

/// Pairwise sum of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().fold(0.0, |a, &b| a + b),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Pairwise sum of a complex slice.
pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    match xs.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => xs[0],
        n if n <= 8 => xs.iter().fold(Complex64::new(0.0, 0.0), |a, &b| a + b),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum_complex(l) + pairwise_sum_complex(r)
        }
    }
}
