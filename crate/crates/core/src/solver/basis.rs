//! Basis factorization handle: an LU factorization plus a product-form
//! eta file, refactorized every `refactor_every` updates.

use super::lu::{Deficiency, LuFactors};

/// Default number of basis updates between refactorizations.
pub const DEFAULT_REFACTOR_EVERY: usize = 100;

#[derive(Debug, Clone)]
struct Eta {
    position: usize,
    pivot: f64,
    start: usize,
    end: usize,
}

/// Factorized representation of the current basis matrix `B`.
///
/// Vectors passed to [`LpBasis::ftran`] are indexed by row on entry and by
/// basis position on exit; [`LpBasis::btran`] goes the other way.
#[derive(Debug, Clone)]
pub struct LpBasis {
    lu: LuFactors,
    etas: Vec<Eta>,
    eta_idx: Vec<usize>,
    eta_val: Vec<f64>,
    refactor_every: usize,
    scratch: Vec<f64>,
}

impl LpBasis {
    pub fn factorize<F>(m: usize, refactor_every: usize, column: F) -> (Self, Vec<Deficiency>)
    where
        F: FnMut(usize, &mut Vec<(usize, f64)>),
    {
        let (lu, def) = LuFactors::factorize(m, column);
        (
            LpBasis {
                lu,
                etas: Vec::new(),
                eta_idx: Vec::new(),
                eta_val: Vec::new(),
                refactor_every: refactor_every.max(1),
                scratch: Vec::with_capacity(m),
            },
            def,
        )
    }

    pub fn dim(&self) -> usize {
        self.lu.dim()
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub fn needs_refactor(&self) -> bool {
        self.etas.len() >= self.refactor_every
    }

    pub fn ftran(&mut self, v: &mut [f64]) {
        self.lu.solve(v, &mut self.scratch);
        for eta in &self.etas {
            let xr = v[eta.position];
            if xr == 0.0 {
                continue;
            }
            let t = xr / eta.pivot;
            v[eta.position] = t;
            for k in eta.start..eta.end {
                v[self.eta_idx[k]] -= self.eta_val[k] * t;
            }
        }
    }

    pub fn btran(&mut self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut acc = v[eta.position];
            for k in eta.start..eta.end {
                acc -= self.eta_val[k] * v[self.eta_idx[k]];
            }
            v[eta.position] = acc / eta.pivot;
        }
        self.lu.solve_transpose(v, &mut self.scratch);
    }

    /// Records the replacement of the column at `position` by a column whose
    /// FTRAN image is `alpha`.
    pub fn update(&mut self, position: usize, alpha: &[f64]) {
        let start = self.eta_idx.len();
        for (i, &a) in alpha.iter().enumerate() {
            if i != position && a.abs() > 1e-14 {
                self.eta_idx.push(i);
                self.eta_val.push(a);
            }
        }
        self.etas.push(Eta {
            position,
            pivot: alpha[position],
            start,
            end: self.eta_idx.len(),
        });
    }
}
