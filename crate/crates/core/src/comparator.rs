//! Comparator functions `Δ(q, p)` between an empirical risk `q` and a true
//! risk `p`, as consumed by the moment term and the inversion routines.

use crate::scalar_bounds::{catoni_value, kl_value};

pub trait Comparator: Sync {
    fn eval(&self, q: f64, p: f64) -> f64;
}

impl<F> Comparator for F
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    fn eval(&self, q: f64, p: f64) -> f64 {
        self(q, p)
    }
}

/// The Bernoulli KL `kl(q, p)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KlComparator;

impl Comparator for KlComparator {
    fn eval(&self, q: f64, p: f64) -> f64 {
        kl_value(q, p)
    }
}

/// `C_beta(q, p)`.
#[derive(Debug, Clone, Copy)]
pub struct CatoniComparator {
    pub beta: f64,
}

impl Comparator for CatoniComparator {
    fn eval(&self, q: f64, p: f64) -> f64 {
        catoni_value(q, p, self.beta)
    }
}
