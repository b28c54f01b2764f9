//! Limited-memory BFGS inverse-Hessian approximation used as a tCG
//! preconditioner.

use std::collections::VecDeque;

use super::space::LinearSpace;

#[derive(Debug, Clone)]
pub struct LbfgsPreconditioner<V> {
    pairs: VecDeque<(V, V)>,
    memory: usize,
}

impl<V: LinearSpace> LbfgsPreconditioner<V> {
    pub fn new(memory: usize) -> Self {
        Self {
            pairs: VecDeque::with_capacity(memory),
            memory,
        }
    }

    /// Adds a (step, gradient change) pair, dropping the oldest beyond memory.
    pub fn push(&mut self, s: V, y: V) {
        if self.memory == 0 {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Replaces the history with the latest `memory` pairs of `pairs`.
    pub fn replace(&mut self, pairs: Vec<(V, V)>) {
        self.pairs.clear();
        let skip = pairs.len().saturating_sub(self.memory);
        for (s, y) in pairs.into_iter().skip(skip) {
            self.push(s, y);
        }
    }

    /// Two-loop recursion. Curvature pairs are screened with the supplied
    /// inner product; with no usable pair this is the identity.
    pub fn apply<I: Fn(&V, &V) -> f64>(&self, inner: I, r: &V) -> V {
        let usable: Vec<(&V, &V, f64)> = self
            .pairs
            .iter()
            .filter_map(|(s, y)| {
                let sy = inner(s, y);
                let ns = inner(s, s).sqrt();
                let ny = inner(y, y).sqrt();
                (sy > 1e-12 * ns * ny && sy.is_finite()).then_some((s, y, sy))
            })
            .collect();
        let Some(&(_, y_new, sy_new)) = usable.last() else {
            return r.clone();
        };
        let mut q = r.clone();
        let mut alphas = vec![0.0; usable.len()];
        for (idx, (s, y, sy)) in usable.iter().enumerate().rev() {
            let a = inner(s, &q) / sy;
            alphas[idx] = a;
            q.axpy(-a, y);
        }
        let gamma = sy_new / inner(y_new, y_new);
        let mut z = q.scaled(gamma);
        for (idx, (s, y, sy)) in usable.iter().enumerate() {
            let b = inner(y, &z) / sy;
            z.axpy(alphas[idx] - b, s);
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(b)
    }

    #[test]
    fn empty_history_is_identity() {
        let p = LbfgsPreconditioner::<DVector<f64>>::new(5);
        let r = DVector::from_row_slice(&[1.0, -2.0, 3.0]);
        assert_eq!(p.apply(dot, &r), r);
    }

    #[test]
    fn operator_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let mut p = LbfgsPreconditioner::new(4);
        for _ in 0..6 {
            let s = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            // y = A s with A SPD-ish, plus one bad pair to be screened.
            let y = DVector::from_fn(n, |i, _| (i as f64 + 1.0) * s[i]);
            p.push(s, y);
        }
        p.push(DVector::from_element(n, 1.0), DVector::from_element(n, -1.0));
        for _ in 0..100 {
            let xi = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            assert!(p.apply(dot, &xi).dot(&xi) > 0.0);
        }
    }

    #[test]
    fn memory_is_bounded() {
        let mut p = LbfgsPreconditioner::new(2);
        for i in 0..5 {
            p.push(DVector::from_element(1, i as f64 + 1.0), DVector::from_element(1, 1.0));
        }
        assert_eq!(p.len(), 2);
        p.replace(vec![(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)); 7]);
        assert_eq!(p.len(), 2);
    }
}
