//! Banded `μ I + ρ JᵀJ` solves for a sparse Jacobian, used as the initial
//! inverse Hessian of the inner quasi-Newton iteration.

use std::collections::VecDeque;

/// Sparse rows of a Jacobian, `(column, value)` pairs.
pub(crate) type Rows = Vec<Vec<(usize, f64)>>;

/// Reverse Cuthill-McKee ordering of the column graph of `JᵀJ`.
/// Returns `(perm, bandwidth)` with `perm[new] = old`.
pub(crate) fn rcm_order(dim: usize, rows: &Rows) -> (Vec<usize>, usize) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
    for row in rows {
        for &(a, _) in row {
            for &(b, _) in row {
                if a != b {
                    adj[a].push(b);
                }
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let mut seen = vec![false; dim];
    let mut order = Vec::with_capacity(dim);
    let mut starts: Vec<usize> = (0..dim).collect();
    starts.sort_by_key(|&v| (adj[v].len(), v));
    for &s in &starts {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    let mut pos = vec![0; dim];
    for (new, &old) in order.iter().enumerate() {
        pos[old] = new;
    }
    let mut band = 0;
    for (v, list) in adj.iter().enumerate() {
        for &w in list {
            band = band.max(pos[v].abs_diff(pos[w]));
        }
    }
    (order, band)
}

/// `μ I + ρ JᵀJ` in permuted, lower-banded storage with its Cholesky factor.
pub(crate) struct BandSystem {
    perm: Vec<usize>,
    pos: Vec<usize>,
    band: usize,
    // gram[i * (band + 1) + d] = (JᵀJ)[i][i - d] in permuted indices
    gram: Vec<f64>,
    factor: Vec<f64>,
    rho: f64,
    mu: f64,
    factored: bool,
}

impl BandSystem {
    pub(crate) fn new(dim: usize, rows: &Rows, perm: Vec<usize>, band: usize, rho: f64) -> Self {
        let mut pos = vec![0; dim];
        for (new, &old) in perm.iter().enumerate() {
            pos[old] = new;
        }
        let w = band + 1;
        let mut gram = vec![0.0; dim * w];
        for row in rows {
            for &(a, va) in row {
                for &(b, vb) in row {
                    let (i, j) = (pos[a], pos[b]);
                    if j <= i {
                        gram[i * w + (i - j)] += va * vb;
                    }
                }
            }
        }
        BandSystem { perm, pos, band, gram, factor: vec![0.0; dim * w], rho, mu: 1.0, factored: false }
    }

    pub(crate) fn mu(&self) -> f64 {
        self.mu
    }

    pub(crate) fn set_mu(&mut self, mu: f64) {
        if mu != self.mu {
            self.mu = mu;
            self.factored = false;
        }
    }

    /// `ρ |J s|²` from the stored Gram matrix.
    pub(crate) fn penalty_curvature(&self, s: &[f64]) -> f64 {
        let w = self.band + 1;
        let n = self.perm.len();
        let mut acc = 0.0;
        for i in 0..n {
            let si = s[self.perm[i]];
            acc += self.gram[i * w] * si * si;
            for d in 1..=self.band.min(i) {
                acc += 2.0 * self.gram[i * w + d] * si * s[self.perm[i - d]];
            }
        }
        self.rho * acc
    }

    fn factorize(&mut self) -> bool {
        let w = self.band + 1;
        let n = self.perm.len();
        for i in 0..n {
            for d in (0..=self.band.min(i)).rev() {
                let j = i - d;
                let mut v = self.rho * self.gram[i * w + d] + if d == 0 { self.mu } else { 0.0 };
                let lo = i.saturating_sub(self.band).max(j.saturating_sub(self.band));
                for k in lo..j {
                    v -= self.factor[i * w + (i - k)] * self.factor[j * w + (j - k)];
                }
                if d == 0 {
                    if !(v > 0.0) {
                        return false;
                    }
                    self.factor[i * w] = v.sqrt();
                } else {
                    self.factor[i * w + d] = v / self.factor[j * w];
                }
            }
        }
        self.factored = true;
        true
    }

    /// Overwrite `q` with `(μ I + ρ JᵀJ)⁻¹ q`. Returns false if the factor
    /// could not be formed.
    pub(crate) fn solve(&mut self, q: &mut [f64]) -> bool {
        if !self.factored && !self.factorize() {
            return false;
        }
        let w = self.band + 1;
        let n = self.perm.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&old| q[old]).collect();
        for i in 0..n {
            let mut v = x[i];
            for d in 1..=self.band.min(i) {
                v -= self.factor[i * w + d] * x[i - d];
            }
            x[i] = v / self.factor[i * w];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for d in 1..=self.band.min(n - 1 - i) {
                v -= self.factor[(i + d) * w + d] * x[i + d];
            }
            x[i] = v / self.factor[i * w];
        }
        for (old, slot) in q.iter_mut().enumerate() {
            *slot = x[self.pos[old]];
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &mut [Vec<f64>], b: &mut [f64]) {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        for c in (0..n).rev() {
            let mut v = b[c];
            for k in c + 1..n {
                v -= a[c][k] * b[k];
            }
            b[c] = v / a[c][c];
        }
    }

    fn chain_rows(n: usize) -> Rows {
        // scrambled column labels on a difference operator plus a coupling
        let label = |i: usize| (i * 7) % n;
        (0..n - 1)
            .map(|i| vec![(label(i), -1.0), (label(i + 1), 1.0 + 0.1 * i as f64)])
            .chain(std::iter::once(vec![(label(0), 2.0), (label(2), -0.5)]))
            .collect()
    }

    #[test]
    fn rcm_recovers_narrow_band() {
        let n = 30;
        let (perm, band) = rcm_order(n, &chain_rows(n));
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        assert!(band <= 3, "band {band}");
    }

    #[test]
    fn solve_matches_dense() {
        let n = 12;
        let rows = chain_rows(n);
        let (perm, band) = rcm_order(n, &rows);
        let (rho, mu) = (3.0, 0.25);
        let mut sys = BandSystem::new(n, &rows, perm, band, rho);
        sys.set_mu(mu);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut q = rhs.clone();
        assert!(sys.solve(&mut q));

        let mut a = vec![vec![0.0; n]; n];
        for row in &rows {
            for &(i, vi) in row {
                for &(j, vj) in row {
                    a[i][j] += rho * vi * vj;
                }
            }
        }
        (0..n).for_each(|i| a[i][i] += mu);
        let s: Vec<f64> = rhs.iter().map(|v| v * 0.3).collect();
        let quad: f64 = (0..n).map(|i| (0..n).map(|j| s[i] * (a[i][j] - if i == j { mu } else { 0.0 }) * s[j]).sum::<f64>()).sum();
        let mut b = rhs.clone();
        dense_solve(&mut a, &mut b);
        for (x, y) in q.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert!((sys.penalty_curvature(&s) - quad).abs() < 1e-12 * quad.abs().max(1.0));
    }
}
