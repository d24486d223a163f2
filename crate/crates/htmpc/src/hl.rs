//! Slow centralized tube MPC on the resampled reduced model: ancillary gain,
//! tube and terminal ingredients, the nominal OCP and the tube control law.

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{
    dlqr_gain, inverse, matrix_power_sum, solve_dlyap, spectral_radius, vec, Lu, Matrix,
};
use crate::plant::LargeScaleSystem;
use crate::qp::{self, QuadProgram, Status};
use crate::reduction::ReducedModel;
use crate::scalar::Real;
use crate::sets::{
    mrpi_outer, pontryagin_diff, AxisBox, Ball, BoundarySample, BoxBound, Ellipsoid, Zonotope,
};

pub const MAX_TERMINAL_CUTS: usize = 20;
pub const TERMINAL_TOL: f64 = 1e-8;
pub const LEVEL_BISECTIONS: usize = 40;
pub const LEVEL_SAMPLES: usize = 1000;
pub const DEFAULT_MRPI_EPS: f64 = 0.05;

/// Resampled reduced model with its LQ gain and both closed loops.
#[derive(Clone, Debug, Serialize)]
pub struct Ancillary<T> {
    /// `A_H^{N_L}`.
    pub a_nl: Matrix<T>,
    /// `B_H^{[N_L]}`.
    pub b_nl: Matrix<T>,
    /// `B_L^{[N_L]}`.
    pub b_l_nl: Matrix<T>,
    /// `K̄_H`.
    pub k: Matrix<T>,
    /// `P_H` with `F_HᵀP_HF_H − P_H = −(Q_H + K̄_HᵀR_HK̄_H)`.
    pub p: Matrix<T>,
    pub f_h: Matrix<T>,
    /// `A_L^{N_L} + B_L^{[N_L]}K̄_Hβ`.
    pub f_l_nl: Matrix<T>,
    pub q_h: Matrix<T>,
    pub r_h: Matrix<T>,
}

/// `K̄_H` by LQ design on `(A_H^{N_L}, B_H^{[N_L]})`; fails when the gain does not also
/// stabilize the resampled plant.
pub fn ancillary_gain<T: Real>(
    rm: &ReducedModel<T>,
    sys: &LargeScaleSystem<T>,
    n_l: usize,
    q_h: &Matrix<T>,
    r_h: &Matrix<T>,
) -> Result<Ancillary<T>> {
    let a_nl = rm.a_h.pow(n_l);
    let b_nl = matrix_power_sum(&rm.a_h, &rm.b_h, n_l)?;
    let (k, _) = dlqr_gain(&a_nl, &b_nl, q_h, r_h)?;
    let f_h = &a_nl + &b_nl.matmul(&k);
    let weight = (q_h + &k.tr_matmul(&r_h.matmul(&k))).symmetrize();
    let p = solve_dlyap(&f_h, &weight)?;
    let b_l_nl = matrix_power_sum(&sys.a_l, &sys.b_l, n_l)?;
    let f_l_nl = &sys.a_l.pow(n_l) + &b_l_nl.matmul(&k).matmul(&rm.beta);
    let rho = spectral_radius(&f_l_nl)?;
    if !(rho < T::one() - T::lit(crate::linalg::DEFAULT_SCHUR_TOL)) {
        return Err(Error::Synthesis(format!(
            "A_L^N_L + B_L^[N_L] K̄_H β is not Schur (spectral radius {rho}); retry with different HL weights"
        )));
    }
    Ok(Ancillary {
        a_nl,
        b_nl,
        b_l_nl,
        k,
        p,
        f_h,
        f_l_nl,
        q_h: q_h.clone(),
        r_h: r_h.clone(),
    })
}

/// Which RPI set backs the tube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeKind {
    /// `𝒲 = {0}`.
    Point,
    /// Bounding box of the mRPI approximation, itself invariant.
    Hull,
    /// `(I − |F_H|)⁻¹ r_W`, invariant whenever `ρ(|F_H|) < 1`.
    AbsoluteBox,
    Zonotope,
}

/// Condensed nominal OCP over `z = (d₀, δū₀, …, δū_{N_H−1}, λ)` in deviation coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct HlOcp<T> {
    pub n_bar: usize,
    pub m: usize,
    pub n_h: usize,
    pub generators: usize,
    /// Terminal map `z ↦ d_{N_H}`.
    pub terminal: Matrix<T>,
    pub hessian: Matrix<T>,
}

impl<T: Real> HlOcp<T> {
    pub fn dim(&self) -> usize {
        self.n_bar + self.n_h * self.m + self.generators
    }

    fn input_offset(&self, k: usize) -> usize {
        self.n_bar + k * self.m
    }

    fn lambda_offset(&self) -> usize {
        self.n_bar + self.n_h * self.m
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HlDesign<T> {
    pub ancillary: Ancillary<T>,
    pub rho_w: T,
    pub w: Ball<T>,
    pub z: Zonotope<T>,
    pub z_hull: AxisBox<T>,
    pub z_kind: TubeKind,
    /// `𝒰̄_S` around `ū_S`, realized per subsystem as `±ρ_ū_i/√m_i`.
    pub u_bar_set: AxisBox<T>,
    /// `ū_S ⊕ 𝒰̄_S ⊖ K̄_H𝒵`.
    pub u_tight: AxisBox<T>,
    pub x_f: Ellipsoid<T>,
    pub x_bar_s: Vec<T>,
    pub u_bar_s: Vec<T>,
    pub ocp: HlOcp<T>,
}

/// Inputs of [`synthesize_hl`] besides the ancillary design.
#[derive(Clone, Debug)]
pub struct HlSpec<'a, T> {
    pub rho_w: T,
    pub rho_u_bar: &'a [T],
    pub input_sizes: &'a [usize],
    pub x_bar_s: &'a [T],
    pub u_bar_s: &'a [T],
    pub n_h: usize,
    pub mrpi_eps: T,
}

fn tube_candidates<T: Real>(
    f_h: &Matrix<T>,
    rho_w: T,
    n_bar: usize,
    eps: T,
) -> Result<Vec<(TubeKind, Zonotope<T>)>> {
    if rho_w == T::zero() {
        return Ok(vec![(
            TubeKind::Point,
            Zonotope::point(&vec![T::zero(); n_bar]),
        )]);
    }
    let w = Ball::origin(n_bar, rho_w)?;
    let approx = mrpi_outer(f_h, &w, eps)?;
    let mut out = Vec::new();
    if approx.box_invariant {
        out.push((TubeKind::Hull, Zonotope::from_box(&approx.hull)));
    }
    let fa = f_h.abs();
    if spectral_radius(&fa)? < T::one() {
        let lu = Lu::factor(&(&Matrix::identity(n_bar) - &fa))?;
        let r = lu.solve_vec(&vec![rho_w; n_bar]);
        if r.iter().all(|&v| v > T::zero()) {
            out.push((
                TubeKind::AbsoluteBox,
                Zonotope::from_box(&AxisBox::from_radii(&r)?),
            ));
        }
    }
    out.push((TubeKind::Zonotope, approx.set));
    Ok(out)
}

/// Largest `c` with `K̄_H{d : dᵀP d ≤ c} ⊆ box`, by bisection on the closed-form support.
fn terminal_level<T: Real>(k: &Matrix<T>, p: &Matrix<T>, lower: &[T], upper: &[T]) -> Result<T> {
    let pinv = inverse(p)?;
    let spread: Vec<T> = (0..k.rows())
        .map(|j| {
            let row = k.row(j);
            vec::dot(row, &pinv.mul_vec(row)).max(T::zero())
        })
        .collect();
    let fits = |c: T| {
        (0..k.rows()).all(|j| {
            let s = (c * spread[j]).sqrt();
            s <= upper[j] && -s >= lower[j]
        })
    };
    let cap = T::lit(1e12);
    let mut hi = T::one();
    while fits(hi) {
        if hi >= cap {
            return Ok(cap);
        }
        hi = hi * T::lit(2.0);
    }
    let mut lo = T::zero();
    for _ in 0..LEVEL_BISECTIONS {
        let mid = (lo + hi) * T::lit(0.5);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn build_ocp<T: Real>(anc: &Ancillary<T>, n_h: usize, generators: usize) -> HlOcp<T> {
    let n_bar = anc.a_nl.rows();
    let m = anc.b_nl.cols();
    let nz = n_bar + n_h * m + generators;
    let mut phi = Matrix::zeros(n_bar, nz);
    phi.set_block(0, 0, &Matrix::identity(n_bar));
    let mut hessian = Matrix::zeros(nz, nz);
    for k in 0..n_h {
        hessian += &phi.tr_matmul(&anc.q_h.matmul(&phi));
        let off = n_bar + k * m;
        let mut blk = hessian.block(off, off, m, m);
        blk += &anc.r_h;
        hessian.set_block(off, off, &blk);
        let mut next = anc.a_nl.matmul(&phi);
        let mut b = next.block(0, off, n_bar, m);
        b += &anc.b_nl;
        next.set_block(0, off, &b);
        phi = next;
    }
    hessian += &phi.tr_matmul(&anc.p.matmul(&phi));
    let mut hessian = hessian.scale(T::lit(2.0)).symmetrize();
    // λ carries no cost; a small weight keeps the Hessian definite.
    let reg = T::lit(1e-10) * hessian.max_abs().max(T::one());
    for j in n_bar + n_h * m..nz {
        hessian[(j, j)] += reg;
    }
    HlOcp {
        n_bar,
        m,
        n_h,
        generators,
        terminal: phi,
        hessian,
    }
}

/// Tube, tightened input set, terminal ellipsoid and condensed OCP.
pub fn synthesize_hl<T: Real>(anc: &Ancillary<T>, spec: &HlSpec<'_, T>) -> Result<HlDesign<T>> {
    let n_bar = anc.a_nl.rows();
    let m = anc.b_nl.cols();
    if spec.x_bar_s.len() != n_bar
        || spec.u_bar_s.len() != m
        || spec.input_sizes.iter().sum::<usize>() != m
    {
        return Err(dim_err(
            "synthesize_hl",
            format!(
                "x̄_S of length {}, ū_S of length {}",
                spec.x_bar_s.len(),
                spec.u_bar_s.len()
            ),
        ));
    }
    if spec.n_h == 0 {
        return Err(Error::Invalid("N_H must be at least 1".into()));
    }
    let radii: Vec<T> = spec
        .rho_u_bar
        .iter()
        .zip(spec.input_sizes)
        .flat_map(|(&r, &mi)| std::iter::repeat(r / T::from_count(mi).sqrt()).take(mi))
        .collect();
    let u_bar_set = AxisBox::symmetric(spec.u_bar_s, &radii)?;
    let mut last_err = None;
    for (kind, z) in tube_candidates(&anc.f_h, spec.rho_w, n_bar, spec.mrpi_eps)? {
        let kz = z.linear_map(&anc.k);
        let u_tight = match pontryagin_diff(&u_bar_set, &kz) {
            Ok(b) => b,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let lower = vec::sub(&u_tight.lower, spec.u_bar_s);
        let upper = vec::sub(&u_tight.upper, spec.u_bar_s);
        if lower
            .iter()
            .zip(&upper)
            .any(|(&l, &u)| !(l < T::zero() && u > T::zero()))
        {
            last_err = Some(Error::Synthesis(format!(
                "{kind:?} tube: tightened input set leaves no room around ū_S"
            )));
            continue;
        }
        let level = terminal_level(&anc.k, &anc.p, &lower, &upper)?;
        if !(level > T::zero()) {
            last_err = Some(Error::Synthesis(format!(
                "{kind:?} tube: terminal level is zero"
            )));
            continue;
        }
        let x_f = Ellipsoid::new(spec.x_bar_s.to_vec(), anc.p.clone(), level)?;
        validate_terminal(anc, &x_f, &u_tight, spec.x_bar_s, spec.u_bar_s)?;
        let generators = z.order();
        return Ok(HlDesign {
            ancillary: anc.clone(),
            rho_w: spec.rho_w,
            w: Ball::origin(n_bar, spec.rho_w)?,
            z_hull: z.bounding_box(),
            z,
            z_kind: kind,
            u_bar_set,
            u_tight,
            x_f,
            x_bar_s: spec.x_bar_s.to_vec(),
            u_bar_s: spec.u_bar_s.to_vec(),
            ocp: build_ocp(anc, spec.n_h, generators),
        });
    }
    Err(last_err.unwrap_or_else(|| Error::Synthesis("no tube candidate".into())))
}

/// Sampled-boundary check of terminal invariance under `F_H` and of `K̄_H𝒳̄_F ⊆ U_tight`.
fn validate_terminal<T: Real>(
    anc: &Ancillary<T>,
    x_f: &Ellipsoid<T>,
    u_tight: &AxisBox<T>,
    x_bar_s: &[T],
    u_bar_s: &[T],
) -> Result<()> {
    let slack = T::tol(1e-9);
    for x in x_f.boundary_samples(LEVEL_SAMPLES) {
        let d = vec::sub(&x, x_bar_s);
        let next = vec::add(&anc.f_h.mul_vec(&d), x_bar_s);
        if x_f.quad_form(&next) > x_f.level * (T::one() + slack) {
            return Err(Error::Synthesis(
                "terminal set is not invariant on a sampled boundary point".into(),
            ));
        }
        let u = vec::add(&anc.k.mul_vec(&d), u_bar_s);
        let scale = T::one() + vec::norm_inf(&u);
        if (0..u.len()).any(|j| {
            u[j] > u_tight.upper[j] + slack * scale || u[j] < u_tight.lower[j] - slack * scale
        }) {
            return Err(Error::Synthesis(
                "terminal control law leaves the tightened input set".into(),
            ));
        }
    }
    Ok(())
}

/// Nominal solution and the data the LL layer needs.
#[derive(Clone, Debug, Serialize)]
pub struct HlState<T> {
    /// `x̄^o(k|k)`.
    pub x_bar_nom: Vec<T>,
    /// `ū^o(k+j|k)` for `j < N_H`.
    pub u_nom_seq: Vec<Vec<T>>,
    /// `x̄(k+1|k) = A_H^{N_L}βx + B_H^{[N_L]}ū`.
    pub last_prediction: Vec<T>,
    pub feasible: bool,
    pub cost: T,
    pub cuts: usize,
    /// `max(0, d_Nᵀ P d_N / c − 1)` at the returned solution.
    pub terminal_excess: T,
    /// Constraint family responsible for infeasibility, when infeasible.
    pub failure: Option<String>,
    z: Vec<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HlOutput<T> {
    pub u_bar: Vec<T>,
    pub state: HlState<T>,
}

fn warm_candidate<T: Real>(
    design: &HlDesign<T>,
    prev: &HlState<T>,
    rhs_eq: &[T],
) -> Option<Vec<T>> {
    let ocp = &design.ocp;
    if !prev.feasible || prev.z.len() != ocp.dim() {
        return None;
    }
    let anc = &design.ancillary;
    let (nb, m) = (ocp.n_bar, ocp.m);
    let z = &prev.z;
    let mut out = vec![T::zero(); ocp.dim()];
    let d1 = vec::add(
        &anc.a_nl.mul_vec(&z[..nb]),
        &anc.b_nl.mul_vec(&z[nb..nb + m]),
    );
    out[..nb].copy_from_slice(&d1);
    for k in 1..ocp.n_h {
        let (src, dst) = (ocp.input_offset(k), ocp.input_offset(k - 1));
        out[dst..dst + m].copy_from_slice(&z[src..src + m]);
    }
    let d_n = ocp.terminal.mul_vec(z);
    let last = ocp.input_offset(ocp.n_h - 1);
    out[last..last + m].copy_from_slice(&anc.k.mul_vec(&d_n));
    let g = &design.z.generators;
    if ocp.generators > 0 {
        if !g.is_square() {
            return None;
        }
        let lam = Lu::factor(g).ok()?.solve_vec(&vec::sub(rhs_eq, &d1));
        let off = ocp.lambda_offset();
        out[off..].copy_from_slice(&lam);
    }
    Some(out)
}

/// One slow step of the tube MPC at plant state `x`.
pub fn hl_step<T: Real>(
    design: &HlDesign<T>,
    beta: &Matrix<T>,
    x: &[T],
    warm: Option<&HlState<T>>,
) -> Result<HlOutput<T>> {
    let ocp = &design.ocp;
    let anc = &design.ancillary;
    if x.len() != beta.cols() || beta.rows() != ocp.n_bar {
        return Err(dim_err(
            "hl_step",
            format!("x of length {}, β {:?}", x.len(), beta.shape()),
        ));
    }
    let (nb, m, nz) = (ocp.n_bar, ocp.m, ocp.dim());
    let bx = beta.mul_vec(x);
    let e = vec::sub(&bx, &design.x_bar_s);

    // d₀ + Gλ = e − c
    let mut a_eq = Matrix::zeros(nb, nz);
    a_eq.set_block(0, 0, &Matrix::identity(nb));
    if ocp.generators > 0 {
        a_eq.set_block(0, ocp.lambda_offset(), &design.z.generators);
    }
    let b_eq = vec::sub(&e, &design.z.center);

    let lower = vec::sub(&design.u_tight.lower, &design.u_bar_s);
    let upper = vec::sub(&design.u_tight.upper, &design.u_bar_s);
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut rhs: Vec<T> = Vec::new();
    for k in 0..ocp.n_h {
        for j in 0..m {
            let col = ocp.input_offset(k) + j;
            let mut r = vec![T::zero(); nz];
            r[col] = T::one();
            rows.push(r.clone());
            rhs.push(upper[j]);
            r[col] = -T::one();
            rows.push(r);
            rhs.push(-lower[j]);
        }
    }
    for g in 0..ocp.generators {
        let mut r = vec![T::zero(); nz];
        r[ocp.lambda_offset() + g] = T::one();
        rows.push(r.clone());
        rhs.push(T::one());
        r[ocp.lambda_offset() + g] = -T::one();
        rows.push(r);
        rhs.push(T::one());
    }

    let level = design.x_f.level;
    let p = &anc.p;
    let mut start = warm.and_then(|w| warm_candidate(design, w, &b_eq));
    let mut cuts = 0;
    let tol = T::lit(qp::DEFAULT_TOL);
    loop {
        let a_in = Matrix::from_rows(&rows)?;
        let program = QuadProgram::new(ocp.hessian.clone(), vec![T::zero(); nz])
            .with_eq(a_eq.clone(), b_eq.clone())
            .with_ineq(a_in, rhs.clone());
        let sol = qp::solve_warm(&program, tol, start.as_deref())?;
        if sol.status != Status::Optimal {
            let failure = if cuts == 0 {
                format!("solver status {:?}", sol.status)
            } else {
                "terminal set (no nominal sequence reaches x̄_S ⊕ 𝒳̄_F within the tightened inputs)"
                    .to_string()
            };
            return Ok(infeasible_output(design, &bx, cuts, failure));
        }
        let d_n = ocp.terminal.mul_vec(&sol.x);
        let pd = p.mul_vec(&d_n);
        let qf = vec::dot(&d_n, &pd);
        let excess = (qf / level - T::one()).max(T::zero());
        if excess <= T::lit(TERMINAL_TOL) || cuts == MAX_TERMINAL_CUTS {
            return Ok(feasible_output(
                design,
                &bx,
                &e,
                sol.x,
                sol.objective,
                cuts,
                excess,
            ));
        }
        // Supporting half-space of the terminal ellipsoid at the radial projection of d_N.
        let row = ocp.terminal.tr_mul_vec(&pd);
        rows.push(row);
        rhs.push((level * qf).sqrt());
        cuts += 1;
        start = None;
    }
}

fn feasible_output<T: Real>(
    design: &HlDesign<T>,
    bx: &[T],
    e: &[T],
    z: Vec<T>,
    cost: T,
    cuts: usize,
    terminal_excess: T,
) -> HlOutput<T> {
    let ocp = &design.ocp;
    let anc = &design.ancillary;
    let (nb, m) = (ocp.n_bar, ocp.m);
    let d0 = &z[..nb];
    let du0 = &z[nb..nb + m];
    let u_bar = vec::add(
        &vec::add(&design.u_bar_s, du0),
        &anc.k.mul_vec(&vec::sub(e, d0)),
    );
    let last_prediction = vec::add(&anc.a_nl.mul_vec(bx), &anc.b_nl.mul_vec(&u_bar));
    let u_nom_seq = (0..ocp.n_h)
        .map(|k| {
            let off = ocp.input_offset(k);
            vec::add(&design.u_bar_s, &z[off..off + m])
        })
        .collect();
    HlOutput {
        u_bar,
        state: HlState {
            x_bar_nom: vec::add(&design.x_bar_s, d0),
            u_nom_seq,
            last_prediction,
            feasible: true,
            cost,
            cuts,
            terminal_excess,
            failure: None,
            z,
        },
    }
}

fn infeasible_output<T: Real>(
    design: &HlDesign<T>,
    bx: &[T],
    cuts: usize,
    failure: String,
) -> HlOutput<T> {
    let anc = &design.ancillary;
    let u_bar = design.u_bar_s.clone();
    let last_prediction = vec::add(&anc.a_nl.mul_vec(bx), &anc.b_nl.mul_vec(&u_bar));
    HlOutput {
        u_bar: u_bar.clone(),
        state: HlState {
            x_bar_nom: bx.to_vec(),
            u_nom_seq: vec![u_bar; design.ocp.n_h],
            last_prediction,
            feasible: false,
            cost: T::nan(),
            cuts,
            terminal_excess: T::nan(),
            failure: Some(failure),
            z: Vec::new(),
        },
    }
}

/// Nominal tracking error `ē = βx − x̄^o`.
pub fn tube_error<T: Real>(beta: &Matrix<T>, x: &[T], state: &HlState<T>) -> Vec<T> {
    vec::sub(&beta.mul_vec(x), &state.x_bar_nom)
}

/// Whether `ē` lies in the tube set.
pub fn in_tube<T: Real>(design: &HlDesign<T>, e: &[T]) -> bool {
    use crate::sets::Contains;
    design.z.contains(e)
}
