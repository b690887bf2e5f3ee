//! Sparse graph machinery shared by the sphere and grid solvers.
//!
//! Both discretizations reduce to flows on a graph: dual-graph arcs across
//! mesh edges on the sphere, interior cell faces on the staggered grid. The
//! incidence operator of such a network maps arc flows to nodal outflow, and
//! every linear solve in the crate is a weighted graph Laplacian
//! `D K D^T` on the constrained nodes, solved by preconditioned CG.

/// Directed arcs between nodes. A positive flow on arc `a` leaves node
/// `tail[a]` and enters node `head[a]`.
#[derive(Debug, Clone)]
pub struct Network {
    n_nodes: usize,
    tail: Vec<u32>,
    head: Vec<u32>,
    // CSR incidence: for node i, arcs node_arcs[offsets[i]..offsets[i+1]]
    offsets: Vec<usize>,
    node_arcs: Vec<u32>,
}

impl Network {
    pub fn new(n_nodes: usize, arcs: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; n_nodes + 1];
        for &(t, h) in arcs {
            assert!(t < n_nodes && h < n_nodes && t != h, "invalid arc ({t}, {h})");
            degree[t + 1] += 1;
            degree[h + 1] += 1;
        }
        for i in 0..n_nodes {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut node_arcs = vec![0u32; offsets[n_nodes]];
        for (a, &(t, h)) in arcs.iter().enumerate() {
            node_arcs[fill[t]] = a as u32;
            fill[t] += 1;
            node_arcs[fill[h]] = a as u32;
            fill[h] += 1;
        }
        Self {
            n_nodes,
            tail: arcs.iter().map(|a| a.0 as u32).collect(),
            head: arcs.iter().map(|a| a.1 as u32).collect(),
            offsets,
            node_arcs,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_arcs(&self) -> usize {
        self.tail.len()
    }

    #[inline]
    pub fn ends(&self, arc: usize) -> (usize, usize) {
        (self.tail[arc] as usize, self.head[arc] as usize)
    }

    pub fn arcs_at(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.node_arcs[self.offsets[node]..self.offsets[node + 1]]
            .iter()
            .map(|&a| a as usize)
    }

    /// Nodal outflow `D x`.
    pub fn divergence(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        for (a, &v) in x.iter().enumerate() {
            out[self.tail[a] as usize] += v;
            out[self.head[a] as usize] -= v;
        }
        out
    }

    /// Transposed incidence `D^T u`: the potential drop along each arc.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n_arcs())
            .map(|a| u[self.tail[a] as usize] - u[self.head[a] as usize])
            .collect()
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.arcs_at(node).map(move |a| {
            let (t, h) = self.ends(a);
            if t == node {
                h
            } else {
                t
            }
        })
    }

    pub fn is_connected(&self) -> bool {
        if self.n_nodes == 0 {
            return true;
        }
        let mut seen = vec![false; self.n_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n_nodes
    }

    /// Breadth-first arc path from `from` to `to`, with the sign each arc is
    /// traversed in (+1 along its orientation).
    pub fn path(&self, from: usize, to: usize) -> Option<Vec<(usize, f64)>> {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.n_nodes];
        let mut seen = vec![false; self.n_nodes];
        let mut queue = std::collections::VecDeque::new();
        seen[from] = true;
        queue.push_back(from);
        while let Some(i) = queue.pop_front() {
            if i == to {
                break;
            }
            for a in self.arcs_at(i) {
                let (t, h) = self.ends(a);
                let j = if t == i { h } else { t };
                if !seen[j] {
                    seen[j] = true;
                    prev[j] = Some((i, a));
                    queue.push_back(j);
                }
            }
        }
        if !seen[to] {
            return None;
        }
        let mut out = Vec::new();
        let mut cur = to;
        while cur != from {
            let (p, a) = prev[cur]?;
            let sign = if self.tail[a] as usize == p { 1.0 } else { -1.0 };
            out.push((a, sign));
            cur = p;
        }
        out.reverse();
        Some(out)
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `L u = b` restricted to the `active` nodes, where
/// `L = D K D^T` has arc conductances `k`, by conjugate gradients with an
/// incomplete Cholesky preconditioner. Inactive nodes are held at zero
/// potential. When every node is active the Laplacian is singular; the first
/// node is grounded and `b` must sum to zero for the system to be consistent.
///
/// `u` carries the initial guess in and the solution out.
pub fn solve_laplacian(
    net: &Network,
    k: &[f64],
    active: Option<&[bool]>,
    b: &[f64],
    u: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> CgStats {
    let n = net.n_nodes();
    let is_active = |i: usize| active.is_none_or(|m| m[i]);
    let all_active = active.is_none_or(|m| m.iter().all(|&x| x));
    // grounded node for the singular case
    let ground = if all_active { Some(0usize) } else { None };
    let free = |i: usize| is_active(i) && Some(i) != ground;

    let mut diag = vec![0.0; n];
    for a in 0..net.n_arcs() {
        let (t, h) = net.ends(a);
        diag[t] += k[a];
        diag[h] += k[a];
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            if !free(i) {
                y[i] = 0.0;
                continue;
            }
            let mut acc = 0.0;
            for a in net.arcs_at(i) {
                let (t, h) = net.ends(a);
                let j = if t == i { h } else { t };
                let xj = if free(j) { x[j] } else { 0.0 };
                acc += k[a] * (x[i] - xj);
            }
            y[i] = acc;
        }
    };

    for i in 0..n {
        if !free(i) {
            u[i] = 0.0;
        }
    }
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    apply(u, &mut tmp);
    let mut bnorm = 0.0;
    for i in 0..n {
        if free(i) {
            r[i] = b[i] - tmp[i];
            bnorm += b[i] * b[i];
        }
    }
    let bnorm = bnorm.sqrt();
    if bnorm == 0.0 {
        u.iter_mut().for_each(|x| *x = 0.0);
        return CgStats { iterations: 0, relative_residual: 0.0 };
    }
    let ic = IncompleteCholesky::new(net, k, &diag, &free);
    let mut z = vec![0.0; n];
    ic.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut it = 0;
    let mut rnorm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    while it < max_iter && rnorm > rel_tol * bnorm {
        apply(&p, &mut tmp);
        let pap: f64 = p.iter().zip(&tmp).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * tmp[i];
        }
        ic.apply(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        it += 1;
    }
    CgStats { iterations: it, relative_residual: rnorm / bnorm }
}

/// Zero-fill incomplete Cholesky factor `L Lᵀ ≈ A` of a grounded graph
/// Laplacian, stored by rows of the strictly lower part. Falls back to the
/// Jacobi preconditioner if a pivot breaks down.
struct IncompleteCholesky {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    free: Vec<bool>,
    jacobi: bool,
}

impl IncompleteCholesky {
    fn new(net: &Network, k: &[f64], adiag: &[f64], free: &dyn Fn(usize) -> bool) -> Self {
        let n = net.n_nodes();
        let free: Vec<bool> = (0..n).map(free).collect();
        let mut offsets = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            if free[i] {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for a in net.arcs_at(i) {
                    let (t, h) = net.ends(a);
                    let j = if t == i { h } else { t };
                    if j < i && free[j] {
                        match row.iter_mut().find(|e| e.0 == j) {
                            Some(e) => e.1 -= k[a],
                            None => row.push((j, -k[a])),
                        }
                    }
                }
                row.sort_by_key(|e| e.0);
                for (j, v) in row {
                    cols.push(j);
                    vals.push(v);
                }
            }
            offsets[i + 1] = cols.len();
        }
        let mut diag = vec![0.0; n];
        let mut jacobi = false;
        'rows: for i in 0..n {
            if !free[i] {
                continue;
            }
            let (s, e) = (offsets[i], offsets[i + 1]);
            for idx in s..e {
                let j = cols[idx];
                // subtract Σ_{m<j} L_im L_jm over the common pattern
                let (mut p, mut q) = (s, offsets[j]);
                let qe = offsets[j + 1];
                let mut acc = 0.0;
                while p < idx && q < qe {
                    match cols[p].cmp(&cols[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            acc += vals[p] * vals[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                vals[idx] = (vals[idx] - acc) / diag[j];
            }
            let sq: f64 = vals[s..e].iter().map(|v| v * v).sum();
            let piv = adiag[i] - sq;
            if !(piv > 1e-14 * adiag[i]) {
                jacobi = true;
                break 'rows;
            }
            diag[i] = piv.sqrt();
        }
        if jacobi {
            diag = adiag.to_vec();
        }
        Self { offsets, cols, vals, diag, free, jacobi }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        if self.jacobi {
            for i in 0..n {
                z[i] = if self.free[i] && self.diag[i] > 0.0 { r[i] / self.diag[i] } else { 0.0 };
            }
            return;
        }
        for i in 0..n {
            if !self.free[i] {
                z[i] = 0.0;
                continue;
            }
            let mut acc = r[i];
            for idx in self.offsets[i]..self.offsets[i + 1] {
                acc -= self.vals[idx] * z[self.cols[idx]];
            }
            z[i] = acc / self.diag[i];
        }
        for i in (0..n).rev() {
            if !self.free[i] {
                continue;
            }
            z[i] /= self.diag[i];
            let zi = z[i];
            for idx in self.offsets[i]..self.offsets[i + 1] {
                z[self.cols[idx]] -= self.vals[idx] * zi;
            }
        }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre01(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pnm1 = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Ordinary least-squares line fit. Returns `(slope, intercept, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let q = gauss_legendre01(8);
        let w: f64 = q.iter().map(|x| x.1).sum();
        assert!((w - 1.0).abs() < 1e-14);
        let i: f64 = q.iter().map(|(x, w)| w * x.powi(15)).sum();
        assert!((i - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn path_laplacian_solve() {
        // 0 - 1 - 2 - 3 chain with unit conductance, source at 0, sink at 3
        let net = Network::new(4, &[(0, 1), (1, 2), (2, 3)]);
        let k = vec![1.0; 3];
        let b = vec![1.0, 0.0, 0.0, -1.0];
        let mut u = vec![0.0; 4];
        let st = solve_laplacian(&net, &k, None, &b, &mut u, 1e-14, 100);
        assert!(st.relative_residual < 1e-12);
        let flow: Vec<f64> = net.gradient(&u);
        for f in flow {
            assert!((f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_telescopes() {
        let net = Network::new(3, &[(0, 1), (1, 2), (2, 0)]);
        let d = net.divergence(&[0.3, -1.2, 2.5]);
        assert!(d.iter().sum::<f64>().abs() < 1e-15);
        assert_eq!(net.path(0, 2).unwrap(), vec![(2, -1.0)]);
    }
}
