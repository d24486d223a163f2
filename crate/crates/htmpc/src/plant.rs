//! Interconnected linear plant: subsystems, coupling graph, collective matrices,
//! standing-assumption checks, steady states and the exact one-step update.

use std::ops::Range;

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{
    rank, reachability_matrix, solve, spectral_radius, vec, Matrix, DEFAULT_SCHUR_TOL,
};
use crate::scalar::Real;

/// Relative singular-value threshold for the rank tests.
pub const RANK_RTOL: f64 = 1e-8;

/// One subsystem `x⁺ = A x + B u + E s`, `y = C x`, `z = C_z x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Subsystem<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub e: Matrix<T>,
    pub c: Matrix<T>,
    pub cz: Matrix<T>,
}

impl<T: Real> Subsystem<T> {
    pub fn new(
        a: Matrix<T>,
        b: Matrix<T>,
        e: Matrix<T>,
        c: Matrix<T>,
        cz: Matrix<T>,
    ) -> Result<Self> {
        let n = a.rows();
        let ok = a.is_square() && b.rows() == n && e.rows() == n && c.cols() == n && cz.cols() == n;
        if !ok {
            return Err(dim_err(
                "Subsystem::new",
                format!(
                    "A {:?}, B {:?}, E {:?}, C {:?}, C_z {:?}",
                    a.shape(),
                    b.shape(),
                    e.shape(),
                    c.shape(),
                    cz.shape()
                ),
            ));
        }
        Ok(Subsystem { a, b, e, c, cz })
    }

    /// Subsystem without coupling ports.
    pub fn isolated(a: Matrix<T>, b: Matrix<T>, c: Matrix<T>) -> Result<Self> {
        let n = a.rows();
        Self::new(a, b, Matrix::zeros(n, 0), c, Matrix::zeros(0, n))
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn p(&self) -> usize {
        self.c.rows()
    }

    pub fn ps(&self) -> usize {
        self.e.cols()
    }

    pub fn pz(&self) -> usize {
        self.cz.rows()
    }
}

/// `s_i = Σ_j L_ij z_j` with `L_ii = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingGraph<T> {
    pub l: Vec<Vec<Matrix<T>>>,
}

impl<T: Real> CouplingGraph<T> {
    /// All-zero coupling sized for `subs`.
    pub fn zero(subs: &[Subsystem<T>]) -> Self {
        CouplingGraph {
            l: subs
                .iter()
                .map(|si| {
                    subs.iter()
                        .map(|sj| Matrix::zeros(si.ps(), sj.pz()))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, l: Matrix<T>) {
        self.l[i][j] = l;
    }
}

/// The assembled collective plant `x⁺ = A_L x + B_L u`, `y = C_L x`.
#[derive(Clone, Debug, Serialize)]
pub struct LargeScaleSystem<T> {
    pub subsystems: Vec<Subsystem<T>>,
    pub coupling: CouplingGraph<T>,
    pub a_l: Matrix<T>,
    pub b_l: Matrix<T>,
    pub c_l: Matrix<T>,
    /// Block-diagonal part of `A_L`.
    pub a_l_d: Matrix<T>,
    state_offsets: Vec<usize>,
    input_offsets: Vec<usize>,
    output_offsets: Vec<usize>,
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().copied().unwrap_or(0) + s);
    }
    out
}

/// Builds the collective matrices with off-diagonal blocks `E_i L_ij C_zj`.
pub fn assemble<T: Real>(
    subsystems: Vec<Subsystem<T>>,
    coupling: CouplingGraph<T>,
) -> Result<LargeScaleSystem<T>> {
    let mm = subsystems.len();
    if mm == 0 {
        return Err(Error::Invalid("at least one subsystem is required".into()));
    }
    if coupling.l.len() != mm || coupling.l.iter().any(|r| r.len() != mm) {
        return Err(dim_err(
            "assemble",
            format!("coupling graph is not {mm}x{mm}"),
        ));
    }
    for i in 0..mm {
        for j in 0..mm {
            let l = &coupling.l[i][j];
            if l.shape() != (subsystems[i].ps(), subsystems[j].pz()) {
                return Err(dim_err(
                    "assemble",
                    format!(
                        "L[{i}][{j}] is {:?}, expected {}x{}",
                        l.shape(),
                        subsystems[i].ps(),
                        subsystems[j].pz()
                    ),
                ));
            }
        }
        if coupling.l[i][i].max_abs() != T::zero() {
            return Err(Error::Invalid(format!("L[{i}][{i}] must be zero")));
        }
    }
    let so = offsets(subsystems.iter().map(Subsystem::n));
    let io = offsets(subsystems.iter().map(Subsystem::m));
    let oo = offsets(subsystems.iter().map(Subsystem::p));
    let a_l_d = Matrix::block_diag(&subsystems.iter().map(|s| s.a.clone()).collect::<Vec<_>>());
    let mut a_l = a_l_d.clone();
    for i in 0..mm {
        for j in 0..mm {
            if i != j && subsystems[i].ps() > 0 && subsystems[j].pz() > 0 {
                let blk = subsystems[i]
                    .e
                    .matmul(&coupling.l[i][j])
                    .matmul(&subsystems[j].cz);
                a_l.set_block(so[i], so[j], &blk);
            }
        }
    }
    let b_l = Matrix::block_diag(&subsystems.iter().map(|s| s.b.clone()).collect::<Vec<_>>());
    let c_l = Matrix::block_diag(&subsystems.iter().map(|s| s.c.clone()).collect::<Vec<_>>());
    Ok(LargeScaleSystem {
        subsystems,
        coupling,
        a_l,
        b_l,
        c_l,
        a_l_d,
        state_offsets: so,
        input_offsets: io,
        output_offsets: oo,
    })
}

impl<T: Real> LargeScaleSystem<T> {
    pub fn num_subsystems(&self) -> usize {
        self.subsystems.len()
    }

    pub fn n(&self) -> usize {
        self.a_l.rows()
    }

    pub fn m(&self) -> usize {
        self.b_l.cols()
    }

    pub fn p(&self) -> usize {
        self.c_l.rows()
    }

    pub fn state_range(&self, i: usize) -> Range<usize> {
        self.state_offsets[i]..self.state_offsets[i + 1]
    }

    pub fn input_range(&self, i: usize) -> Range<usize> {
        self.input_offsets[i]..self.input_offsets[i + 1]
    }

    pub fn output_range(&self, i: usize) -> Range<usize> {
        self.output_offsets[i]..self.output_offsets[i + 1]
    }

    /// `n_i × n` selector of subsystem `i`'s state.
    pub fn state_selector(&self, i: usize) -> Matrix<T> {
        let r = self.state_range(i);
        Matrix::from_fn(r.len(), self.n(), |a, b| {
            if b == r.start + a {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn split_state<'a>(&self, x: &'a [T]) -> Vec<&'a [T]> {
        (0..self.num_subsystems())
            .map(|i| &x[self.state_range(i)])
            .collect()
    }

    pub fn split_input<'a>(&self, u: &'a [T]) -> Vec<&'a [T]> {
        (0..self.num_subsystems())
            .map(|i| &u[self.input_range(i)])
            .collect()
    }

    /// `A_L − A_L^D`.
    pub fn coupling_part(&self) -> Matrix<T> {
        &self.a_l - &self.a_l_d
    }
}

/// Pass/fail of one checked item with its numeric witness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub pass: bool,
    pub witness: f64,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, witness: f64, detail: impl Into<String>) -> Self {
        Check {
            pass,
            witness,
            detail: detail.into(),
        }
    }
}

/// Items 2–5 of the plant standing assumption (item 1, measurable state, is structural).
#[derive(Clone, Debug, Serialize)]
pub struct Assumption1Report {
    pub schur: Check,
    pub square_plant: Check,
    pub system_matrix_rank: Check,
    pub b_full_rank: Check,
    pub c_full_rank: Check,
    pub reachable: Vec<Check>,
}

impl Assumption1Report {
    pub fn passed(&self) -> bool {
        self.schur.pass
            && self.square_plant.pass
            && self.system_matrix_rank.pass
            && self.b_full_rank.pass
            && self.c_full_rank.pass
            && self.reachable.iter().all(|c| c.pass)
    }
}

/// `[[I − A_L, −B_L], [C_L, 0]]`.
pub fn system_matrix<T: Real>(sys: &LargeScaleSystem<T>) -> Matrix<T> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let mut s = Matrix::zeros(n + p, n + m);
    s.set_block(0, 0, &(&Matrix::identity(n) - &sys.a_l));
    s.set_block(0, n, &(-&sys.b_l));
    s.set_block(n, 0, &sys.c_l);
    s
}

pub fn validate_assumption1<T: Real>(sys: &LargeScaleSystem<T>) -> Assumption1Report {
    let rtol = Some(T::lit(RANK_RTOL));
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let rho = spectral_radius(&sys.a_l)
        .map(|r| r.as_f64())
        .unwrap_or(f64::NAN);
    let schur = Check::new(rho < 1.0 - DEFAULT_SCHUR_TOL, rho, "spectral radius of A_L");
    let square_plant = Check::new(m == p, (m as f64) - (p as f64), format!("m = {m}, p = {p}"));
    let s_rank = rank(&system_matrix(sys), rtol);
    let system_matrix_rank = Check::new(
        m == p && s_rank == n + m,
        s_rank as f64,
        format!("rank of the system matrix, required {}", n + m),
    );
    let b_rank = rank(&sys.b_l, rtol);
    let b_full_rank = Check::new(
        b_rank == m.min(n),
        b_rank as f64,
        format!("rank of B_L, full is {}", m.min(n)),
    );
    let c_rank = rank(&sys.c_l, rtol);
    let c_full_rank = Check::new(
        c_rank == p.min(n),
        c_rank as f64,
        format!("rank of C_L, full is {}", p.min(n)),
    );
    let reachable = sys
        .subsystems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let r = rank(&reachability_matrix(&s.a, &s.b, s.n()), rtol);
            Check::new(
                r == s.n(),
                r as f64,
                format!("reachability rank of subsystem {i}, required {}", s.n()),
            )
        })
        .collect();
    Assumption1Report {
        schur,
        square_plant,
        system_matrix_rank,
        b_full_rank,
        c_full_rank,
        reachable,
    }
}

/// Steady-state reference: `y_S`, and the pair `(x_S, u_S)` with
/// `x_S = A_L x_S + B_L u_S`, `C_L x_S = y_S`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceTriple<T> {
    pub y_s: Vec<T>,
    pub x_s: Vec<T>,
    pub u_s: Vec<T>,
}

pub fn steady_state_from_output<T: Real>(
    sys: &LargeScaleSystem<T>,
    y_s: &[T],
) -> Result<ReferenceTriple<T>> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    if y_s.len() != p {
        return Err(dim_err(
            "steady_state_from_output",
            format!("y_S has length {}, expected {p}", y_s.len()),
        ));
    }
    if m != p {
        return Err(Error::Invalid(format!(
            "steady state needs a square plant, got m = {m}, p = {p}"
        )));
    }
    let mut rhs = Matrix::zeros(n + p, 1);
    for (i, &v) in y_s.iter().enumerate() {
        rhs[(n + i, 0)] = v;
    }
    let sol = solve(&system_matrix(sys), &rhs)
        .map_err(|_| Error::Singular("steady_state_from_output"))?;
    let col = sol.col(0);
    Ok(ReferenceTriple {
        y_s: y_s.to_vec(),
        x_s: col[..n].to_vec(),
        u_s: col[n..].to_vec(),
    })
}

/// Result of one plant update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<T> {
    pub x_next: Vec<T>,
    pub y: Vec<T>,
    /// Coupling outputs `z_i = C_zi x_i` per subsystem.
    pub z: Vec<Vec<T>>,
}

pub fn step<T: Real>(sys: &LargeScaleSystem<T>, x: &[T], u: &[T]) -> Result<StepOutput<T>> {
    if x.len() != sys.n() || u.len() != sys.m() {
        return Err(dim_err(
            "step",
            format!(
                "x of length {}, u of length {} for n = {}, m = {}",
                x.len(),
                u.len(),
                sys.n(),
                sys.m()
            ),
        ));
    }
    let x_next = vec::add(&sys.a_l.mul_vec(x), &sys.b_l.mul_vec(u));
    let y = sys.c_l.mul_vec(x);
    let z = sys
        .subsystems
        .iter()
        .zip(sys.split_state(x))
        .map(|(s, xi)| s.cz.mul_vec(xi))
        .collect();
    Ok(StepOutput { x_next, y, z })
}
