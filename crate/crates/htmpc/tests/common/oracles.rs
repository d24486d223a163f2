//! Brute-force reference solvers, written independently of the library.

use rand::Rng;

/// Gaussian elimination with partial pivoting; `None` if numerically singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())?;
        if a[p][k].abs() <= 1e-11 * scale {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A dense problem `min ½xᵀHx + gᵀx` s.t. `A_eq x = b_eq`, `A_in x ≤ b_in`.
#[derive(Clone, Debug)]
pub struct DenseQp {
    pub h: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_in: Vec<Vec<f64>>,
    pub b_in: Vec<f64>,
}

impl DenseQp {
    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx: Vec<f64> = self.h.iter().map(|r| dot(r, x)).collect();
        0.5 * dot(x, &hx) + dot(&self.g, x)
    }

    pub fn feasible(&self, x: &[f64], tol: f64) -> bool {
        self.a_eq
            .iter()
            .zip(&self.b_eq)
            .all(|(r, b)| (dot(r, x) - b).abs() <= tol)
            && self
                .a_in
                .iter()
                .zip(&self.b_in)
                .all(|(r, b)| dot(r, x) <= b + tol)
    }

    fn excludes(&self, i: usize, j: usize) -> bool {
        self.a_in[i]
            .iter()
            .zip(&self.a_in[j])
            .all(|(a, b)| (a + b).abs() < 1e-15)
    }
}

/// Minimum objective over every active set whose equality-constrained minimizer is
/// feasible. Exact for strictly convex problems.
pub fn qp_by_enumeration(qp: &DenseQp) -> Option<f64> {
    let n = qp.g.len();
    let mut best: Option<f64> = None;
    let mut active = Vec::new();
    enumerate(qp, n, 0, &mut active, &mut best);
    best
}

fn enumerate(qp: &DenseQp, n: usize, next: usize, active: &mut Vec<usize>, best: &mut Option<f64>) {
    if let Some(x) = eqp(qp, active) {
        if qp.feasible(&x, 1e-9) {
            let f = qp.objective(&x);
            if best.map_or(true, |b| f < b) {
                *best = Some(f);
            }
        }
    }
    if qp.a_eq.len() + active.len() >= n {
        return;
    }
    for i in next..qp.a_in.len() {
        if active.iter().any(|&j| qp.excludes(i, j)) {
            continue;
        }
        active.push(i);
        enumerate(qp, n, i + 1, active, best);
        active.pop();
    }
}

fn eqp(qp: &DenseQp, active: &[usize]) -> Option<Vec<f64>> {
    let n = qp.g.len();
    let rows: Vec<(&Vec<f64>, f64)> = qp
        .a_eq
        .iter()
        .zip(qp.b_eq.iter().copied())
        .chain(active.iter().map(|&i| (&qp.a_in[i], qp.b_in[i])))
        .collect();
    let w = rows.len();
    let mut k = vec![vec![0.0; n + w]; n + w];
    let mut rhs = vec![0.0; n + w];
    for i in 0..n {
        k[i][..n].copy_from_slice(&qp.h[i]);
        rhs[i] = -qp.g[i];
    }
    for (r, (a, b)) in rows.iter().enumerate() {
        for j in 0..n {
            k[n + r][j] = a[j];
            k[j][n + r] = a[j];
        }
        rhs[n + r] = *b;
    }
    gauss_solve(k, rhs).map(|s| s[..n].to_vec())
}

/// Minimum of `cᵀx` over all feasible basic solutions (vertices) of a bounded LP.
pub fn lp_by_vertices(
    c: &[f64],
    a_in: &[Vec<f64>],
    b_in: &[f64],
    a_eq: &[Vec<f64>],
    b_eq: &[f64],
) -> Option<f64> {
    let n = c.len();
    let need = n - a_eq.len();
    let mut best: Option<f64> = None;
    let mut pick = Vec::new();
    vertices(need, 0, a_in.len(), &mut pick, &mut |idx| {
        let mut a: Vec<Vec<f64>> = a_eq.to_vec();
        let mut b: Vec<f64> = b_eq.to_vec();
        for &i in idx {
            a.push(a_in[i].clone());
            b.push(b_in[i]);
        }
        if let Some(x) = gauss_solve(a, b) {
            let ok = a_in.iter().zip(b_in).all(|(r, b)| dot(r, &x) <= b + 1e-9)
                && a_eq
                    .iter()
                    .zip(b_eq)
                    .all(|(r, b)| (dot(r, &x) - b).abs() <= 1e-9);
            if ok {
                let f = dot(c, &x);
                if best.map_or(true, |v| f < v) {
                    best = Some(f);
                }
            }
        }
    });
    best
}

fn vertices(
    need: usize,
    next: usize,
    m: usize,
    pick: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if pick.len() == need {
        visit(pick);
        return;
    }
    for i in next..m {
        pick.push(i);
        vertices(need, i + 1, m, pick, visit);
        pick.pop();
    }
}

/// Random strictly convex QP with box bounds, a few general inequalities and at most one
/// equality, all feasible at a known interior point.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize) -> DenseQp {
    let m: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            h[i][j] = (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>();
        }
        h[i][i] += 0.1;
    }
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut a_in = Vec::new();
    let mut b_in = Vec::new();
    for i in 0..n {
        let (lo, hi) = (rng.gen_range(-2.0..-0.6), rng.gen_range(0.6..2.0));
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        a_in.push(e.clone());
        b_in.push(hi);
        e[i] = -1.0;
        a_in.push(e);
        b_in.push(-lo);
    }
    for _ in 0..rng.gen_range(0..3) {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = dot(&a, &x0) + rng.gen_range(0.0..0.5);
        a_in.push(a);
        b_in.push(b);
    }
    let (mut a_eq, mut b_eq) = (Vec::new(), Vec::new());
    if n > 1 && rng.gen_bool(0.4) {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        b_eq.push(dot(&a, &x0));
        a_eq.push(a);
    }
    DenseQp {
        h,
        g,
        a_eq,
        b_eq,
        a_in,
        b_in,
    }
}

/// Random bounded LP: box bounds plus random cuts, with the origin feasible unless
/// `allow_infeasible` draws an offset right-hand side.
pub fn random_lp<R: Rng>(rng: &mut R, n: usize, allow_infeasible: bool) -> DenseQp {
    let mut a_in = Vec::new();
    let mut b_in = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        a_in.push(e.clone());
        b_in.push(rng.gen_range(0.5..3.0));
        e[i] = -1.0;
        a_in.push(e);
        b_in.push(rng.gen_range(0.5..3.0));
    }
    for _ in 0..rng.gen_range(1..4) {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = if allow_infeasible {
            rng.gen_range(-3.0..1.0)
        } else {
            rng.gen_range(0.1..1.0)
        };
        a_in.push(a);
        b_in.push(b);
    }
    let (mut a_eq, mut b_eq) = (Vec::new(), Vec::new());
    if n > 1 && rng.gen_bool(0.3) {
        a_eq.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        b_eq.push(if allow_infeasible {
            rng.gen_range(-0.5..0.5)
        } else {
            0.0
        });
    }
    DenseQp {
        h: vec![vec![0.0; n]; n],
        g: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        a_eq,
        b_eq,
        a_in,
        b_in,
    }
}

pub fn mat(rows: &[Vec<f64>], cols: usize) -> htmpc::Matrix {
    if rows.is_empty() {
        htmpc::Matrix::zeros(0, cols)
    } else {
        htmpc::Matrix::from_rows(rows).unwrap()
    }
}

pub fn to_lib(d: &DenseQp) -> htmpc::qp::QuadProgram<f64> {
    let n = d.g.len();
    htmpc::qp::QuadProgram::new(mat(&d.h, n), d.g.clone())
        .with_eq(mat(&d.a_eq, n), d.b_eq.clone())
        .with_ineq(mat(&d.a_in, n), d.b_in.clone())
}
