//! The full count-vector Markov chain for small populations.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::CountState;
use crate::error::{Error, Result};
use crate::population::{check_dim, OccupancyVector, PopulationModel};

/// Largest number of count vectors the exact solvers will enumerate.
pub const EXACT_STATE_LIMIT: u128 = 2_000_000;

/// Chains up to this size are solved for their stationary law with a dense LU.
const DENSE_LIMIT: usize = 5000;
const POWER_TOL: f64 = 1e-14;
const POWER_MAX_ITER: usize = 1_000_000;

/// `C(N + n - 1, n - 1)`, saturating.
pub fn state_space_size(n: usize, n_objects: u64) -> u128 {
    let mut size: u128 = 1;
    for k in 1..n as u128 {
        size = size.saturating_mul(n_objects as u128 + k) / k;
    }
    size
}

/// A fully enumerated chain: states in colexicographic order with sparse
/// transition rows.
#[derive(Debug, Clone)]
pub struct ExactChain {
    n_objects: u64,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ExactChain {
    pub fn build(model: &PopulationModel, n_objects: u64) -> Result<Self> {
        let n = model.dim();
        if n_objects == 0 {
            return Err(Error::InvalidCountState("population is empty".into()));
        }
        let size = state_space_size(n, n_objects);
        if size > EXACT_STATE_LIMIT {
            return Err(Error::StateSpaceTooLarge {
                size,
                limit: EXACT_STATE_LIMIT,
            });
        }
        let mut states = Vec::with_capacity(size as usize);
        compositions(n_objects as u32, n, &mut vec![0; n], 0, &mut states);
        states.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
        let index: HashMap<Vec<u32>, usize> = states.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();

        let ln_fact: Vec<f64> = std::iter::once(0.0)
            .chain((1..=n_objects).scan(0.0, |acc, k| {
                *acc += (k as f64).ln();
                Some(*acc)
            }))
            .collect();

        let mut rows = Vec::with_capacity(states.len());
        for s in &states {
            let counts: Vec<u64> = s.iter().map(|&c| c as u64).collect();
            let m = OccupancyVector::from_counts(&counts)?;
            let k = model.kernel().eval_checked(&m)?;
            let mut dist: HashMap<Vec<u32>, f64> = HashMap::from([(vec![0u32; n], 1.0)]);
            for (i, &c) in s.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let dests: Vec<usize> = (0..n).filter(|&j| k[(i, j)] > 0.0).collect();
                let mut splits = Vec::new();
                compositions(c, dests.len(), &mut vec![0; dests.len()], 0, &mut splits);
                let pmf: Vec<(Vec<u32>, f64)> = splits
                    .into_iter()
                    .filter_map(|x| {
                        let mut lp = ln_fact[c as usize];
                        for (&xj, &j) in x.iter().zip(&dests) {
                            lp += xj as f64 * k[(i, j)].ln() - ln_fact[xj as usize];
                        }
                        let p = lp.exp();
                        (p > 0.0).then_some((x, p))
                    })
                    .collect();
                let mut next: HashMap<Vec<u32>, f64> = HashMap::with_capacity(dist.len() * pmf.len().min(64));
                for (partial, p) in &dist {
                    for (x, q) in &pmf {
                        let mut dest = partial.clone();
                        for (&xj, &j) in x.iter().zip(&dests) {
                            dest[j] += xj;
                        }
                        *next.entry(dest).or_insert(0.0) += p * q;
                    }
                }
                dist = next;
            }
            let mut row: Vec<(usize, f64)> = dist.into_iter().map(|(dest, p)| (index[&dest], p)).collect();
            row.sort_by_key(|&(j, _)| j);
            rows.push(row);
        }
        Ok(Self {
            n_objects,
            states,
            index,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    pub fn index_of(&self, state: &CountState) -> Option<usize> {
        let key: Vec<u32> = state.counts().iter().map(|&c| c as u32).collect();
        self.index.get(&key).copied()
    }

    /// `p P` for a row distribution `p`.
    pub fn propagate(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        for (k, row) in self.rows.iter().enumerate() {
            if p[k] == 0.0 {
                continue;
            }
            for &(j, q) in row {
                out[j] += p[k] * q;
            }
        }
        out
    }

    /// Expected occupancy and its covariance under the distribution `p`.
    pub fn moments(&self, p: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.states[0].len();
        let big_n = self.n_objects as f64;
        let mut mean = DVector::zeros(n);
        let mut second = DMatrix::zeros(n, n);
        for (s, &w) in self.states.iter().zip(p) {
            if w == 0.0 {
                continue;
            }
            let x = DVector::from_fn(n, |i, _| s[i] as f64 / big_n);
            mean.axpy(w, &x, 1.0);
            second.ger(w, &x, &x, 1.0);
        }
        let cov = second - &mean * mean.transpose();
        (mean, cov)
    }

    fn closed_classes(&self) -> usize {
        let mut graph = DiGraph::<(), ()>::with_capacity(self.len(), 0);
        let nodes: Vec<_> = (0..self.len()).map(|_| graph.add_node(())).collect();
        for (k, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                if j != k {
                    graph.add_edge(nodes[k], nodes[j], ());
                }
            }
        }
        let sccs = tarjan_scc(&graph);
        let mut component = vec![0usize; self.len()];
        for (c, scc) in sccs.iter().enumerate() {
            for node in scc {
                component[node.index()] = c;
            }
        }
        let mut open = vec![false; sccs.len()];
        for (k, row) in self.rows.iter().enumerate() {
            if row.iter().any(|&(j, _)| component[j] != component[k]) {
                open[component[k]] = true;
            }
        }
        open.iter().filter(|&&o| !o).count()
    }

    /// The unique stationary distribution, or `SingularSystem` when the chain
    /// has more than one closed class.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        let closed = self.closed_classes();
        if closed > 1 {
            return Err(Error::SingularSystem(format!(
                "chain has {closed} closed classes; the stationary law depends on the initial state"
            )));
        }
        let s = self.len();
        if s <= DENSE_LIMIT {
            let mut a = DMatrix::<f64>::zeros(s, s);
            for (k, row) in self.rows.iter().enumerate() {
                for &(j, p) in row {
                    a[(j, k)] += p;
                }
                a[(k, k)] -= 1.0;
            }
            a.row_mut(s - 1).fill(1.0);
            let mut rhs = DVector::zeros(s);
            rhs[s - 1] = 1.0;
            let pi = a
                .lu()
                .solve(&rhs)
                .filter(|x| x.iter().all(|v| v.is_finite()))
                .ok_or_else(|| Error::SingularSystem("stationary equations are singular".into()))?;
            Ok(pi.iter().map(|&v| v.max(0.0)).collect())
        } else {
            let mut p = vec![1.0 / s as f64; s];
            for _ in 0..POWER_MAX_ITER {
                let q = self.propagate(&p);
                let lazy: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
                let delta: f64 = lazy.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
                p = lazy;
                if delta < POWER_TOL {
                    return Ok(p);
                }
            }
            Err(Error::SingularSystem("power iteration did not settle".into()))
        }
    }
}

fn compositions(total: u32, parts: usize, buf: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == parts {
        buf[pos] = total;
        out.push(buf.clone());
        return;
    }
    for x in 0..=total {
        buf[pos] = x;
        compositions(total - x, parts, buf, pos + 1, out);
    }
}

/// Exact `(E[M(t)], Cov[M(t)])` for `t = 0..=t_max` from a point mass at `initial`.
pub fn exact_transient_moments(
    model: &PopulationModel,
    initial: &CountState,
    t_max: usize,
) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    check_dim(model.dim(), initial.dim())?;
    let chain = ExactChain::build(model, initial.n_objects())?;
    let mut p = vec![0.0; chain.len()];
    p[chain.index_of(initial).expect("initial state is enumerated")] = 1.0;
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(chain.moments(&p));
    for _ in 0..t_max {
        p = chain.propagate(&p);
        out.push(chain.moments(&p));
    }
    Ok(out)
}

/// Exact `E[M(t)]` for `t = 0..=t_max`.
pub fn exact_transient(model: &PopulationModel, initial: &CountState, t_max: usize) -> Result<Vec<DVector<f64>>> {
    Ok(exact_transient_moments(model, initial, t_max)?.into_iter().map(|(m, _)| m).collect())
}

/// Stationary expected occupancy of the `n_objects` chain.
pub fn exact_stationary(model: &PopulationModel, n_objects: u64) -> Result<DVector<f64>> {
    let chain = ExactChain::build(model, n_objects)?;
    let pi = chain.stationary_distribution()?;
    Ok(chain.moments(&pi).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{self, MrdlParams, TwoStateParams};
    use crate::population::trajectory;

    #[test]
    fn enumeration_is_colexicographic() {
        let model = models::seir(&models::SeirParams::default()).unwrap();
        let chain = ExactChain::build(&model, 10).unwrap();
        assert_eq!(chain.len(), 286);
        assert_eq!(chain.states()[0], vec![10, 0, 0, 0]);
        assert_eq!(chain.states()[1], vec![9, 1, 0, 0]);
        assert_eq!(chain.states()[285], vec![0, 0, 0, 10]);
        for k in 0..chain.len() {
            let total: f64 = chain.row(k).iter().map(|&(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_object_matches_direct_enumeration() {
        let alpha = 0.6;
        let model = models::two_state(&TwoStateParams { alpha }).unwrap();
        let init = CountState::new(vec![1, 0]).unwrap();
        let exact = exact_transient(&model, &init, 6).unwrap();
        // with one object, K is evaluated at the vertex it occupies
        let mut p = [1.0, 0.0];
        for m in &exact {
            assert!((m[0] - p[0]).abs() < 1e-15 && (m[1] - p[1]).abs() < 1e-15);
            p = [p[0] * (1.0 - alpha) + p[1], p[0] * alpha];
        }
    }

    #[test]
    fn deterministic_kernel_follows_trajectory() {
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let model = models::constant(perm).unwrap();
        let init = CountState::new(vec![3, 1, 2]).unwrap();
        let exact = exact_transient(&model, &init, 5).unwrap();
        let mf = trajectory(&model, &init.occupancy(), 5).unwrap();
        for (e, m) in exact.iter().zip(&mf) {
            assert!((e - m.as_vector()).amax() < 1e-15);
        }
    }

    #[test]
    fn constant_kernel_stationary_law() {
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.4, 0.4, 0.2]);
        let model = models::constant(p.clone()).unwrap();
        let eig = stationary_oracle(&p);
        for n_objects in [1, 4, 9] {
            let e = exact_stationary(&model, n_objects).unwrap();
            assert!((&e - &eig).amax() < 1e-12, "N={n_objects}: {e} vs {eig}");
        }
    }

    /// Null vector of `Pᵀ - I` from an SVD, normalised to sum 1.
    fn stationary_oracle(p: &DMatrix<f64>) -> DVector<f64> {
        let n = p.nrows();
        let svd = (p.transpose() - DMatrix::identity(n, n)).svd(false, true);
        let v_t = svd.v_t.unwrap();
        let k = svd.singular_values.imin();
        let v = v_t.row(k).transpose();
        &v / v.sum()
    }

    #[test]
    fn absorbing_consensus_is_singular() {
        let model = models::mrdl(&MrdlParams::default()).unwrap();
        assert!(matches!(exact_stationary(&model, 4), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn oversized_state_space_is_refused() {
        let model = models::seir(&models::SeirParams::default()).unwrap();
        assert_eq!(state_space_size(4, 10), 286);
        assert!(matches!(
            ExactChain::build(&model, 1000),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn transient_covariance_is_symmetric_and_tangent() {
        let model = models::seir(&models::SeirParams::default()).unwrap();
        let init = CountState::new(vec![2, 2, 2, 4]).unwrap();
        for (mean, cov) in exact_transient_moments(&model, &init, 30).unwrap() {
            assert!((mean.sum() - 1.0).abs() < 1e-12);
            assert!((&cov - cov.transpose()).amax() < 1e-15);
            assert!(cov.column_sum().amax() < 1e-12);
        }
    }
}
