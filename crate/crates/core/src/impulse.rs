//! Impulse approximation of the periodic tracking problem.
//!
//! The horizon splits into `n` equal subintervals and the distributed
//! control is replaced by `n - 1` impulses acting at the interior
//! subdivision times `tau_i = i T / n`. The state evolves freely between
//! impulses and jumps by `window(u_i)` at `tau_i`. Impulses live in the
//! scaled space with inner product `(1/h) sum_i <u_i, v_i>` where
//! `h = T / n`, which makes the embedded piecewise-constant control
//! `u_i / h` carry the same norm.
//!
//! Optimality couples each impulse to a nodal read of the periodic
//! adjoint: `u_i = h window(p(tau_i))`. Eliminating state and adjoint
//! again leaves a self-adjoint coercive system solved with CG. The
//! correction term has a symmetric positive kernel because a nodal jump
//! propagates forward and a nodal adjoint read collects backward through
//! the same decay factors, so the composite is a Gram matrix of decay
//! profiles.

use crate::cg::{self, CgReport};
use crate::error::{invalid, mismatch, Result};
use crate::heat::{
    solve_impulse_periodic, solve_periodic_adjoint, BrokenTrajectory, ImpulseSequence,
    SourceTrajectory, TimeGrid, Trajectory,
};
use crate::ocp::OcpConfig;
use crate::real::Real;
use crate::spectral::{coupling_matrix, CouplingMatrix, Domain1D, SpectralField};

/// Converged impulses, the broken state they generate and diagnostics.
#[derive(Debug, Clone)]
pub struct ImpulseSolution<S> {
    pub impulses: ImpulseSequence<S>,
    pub state: BrokenTrajectory<S>,
    pub adjoint: Trajectory<S>,
    pub cost: S,
    pub iterations: usize,
    pub residual: S,
}

// Checks that the subdivision is usable and returns the cells per piece.
pub(crate) fn piece_cells<S: Real>(grid: &TimeGrid<S>, subdivision: usize) -> Result<usize> {
    if subdivision < 2 {
        return Err(invalid("impulse problems need at least 2 subintervals"));
    }
    grid.cells_per_piece(subdivision)
}

/// Cost of an impulse configuration: the tracking term integrates the
/// broken state through per-piece cell averages and the impulse penalty is
/// `1/(2h) sum_i ||u_i||^2`.
pub fn impulse_cost<S: Real>(
    state: &BrokenTrajectory<S>,
    impulses: &ImpulseSequence<S>,
    target: &SourceTrajectory<S>,
    grid: &TimeGrid<S>,
) -> Result<S> {
    let n = state.piece_count();
    if impulses.count() + 1 != n {
        return Err(mismatch("impulse count must be piece count minus one"));
    }
    if state.piece_count() * state.cells_per_piece() != grid.steps()
        || target.len() != grid.steps()
    {
        return Err(mismatch("state, target and grid disagree on cell count"));
    }
    if state.modes() != target.modes() || state.modes() != impulses.modes() {
        return Err(mismatch("state, impulses and target must share modes"));
    }
    let avg = state.cell_averages();
    let mut tracking = S::zero();
    for m in 0..grid.steps() {
        let diff = avg.cell(m).sub(target.cell(m));
        tracking += diff.dot(&diff);
    }
    let h = grid.horizon() / S::of_usize(n);
    let penalty: S = impulses.impulses().iter().map(|u| u.dot(u)).sum();
    Ok(S::of(0.5) * (tracking * grid.dt() + penalty / h))
}

// Windowed nodal reads of the periodic adjoint at the interior subdivision
// times, scaled by h: r_i = h window(p(tau_i)).
fn scaled_adjoint_reads<S: Real>(
    coupling: &CouplingMatrix<S>,
    adjoint: &Trajectory<S>,
    grid: &TimeGrid<S>,
    subdivision: usize,
) -> Result<ImpulseSequence<S>> {
    let q = piece_cells(grid, subdivision)?;
    let h = grid.horizon() / S::of_usize(subdivision);
    let mut fields = Vec::with_capacity(subdivision - 1);
    for i in 1..subdivision {
        fields.push(coupling.apply(adjoint.node(i * q))?.scale(h));
    }
    ImpulseSequence::new(fields)
}

// The reduced impulse map with a prebuilt coupling matrix.
pub(crate) fn apply_reduced_impulse<S: Real>(
    domain: &Domain1D<S>,
    coupling: &CouplingMatrix<S>,
    grid: &TimeGrid<S>,
    impulses: &ImpulseSequence<S>,
) -> Result<ImpulseSequence<S>> {
    let n = impulses.count() + 1;
    let state = solve_impulse_periodic(domain, impulses, coupling, grid)?;
    let adjoint = solve_periodic_adjoint(domain, &state.cell_averages(), grid)?;
    let reads = scaled_adjoint_reads(coupling, &adjoint, grid, n)?;
    let mut fields = Vec::with_capacity(impulses.count());
    for (u, r) in impulses.impulses().iter().zip(reads.impulses()) {
        let mut out = u.clone();
        out.axpy(-S::one(), r);
        fields.push(out);
    }
    ImpulseSequence::new(fields)
}

/// Reduced optimality map for the impulse problem with `n` subintervals:
/// `A(U)_i = u_i - h window(p(tau_i))` with `p` the periodic adjoint driven
/// by the cell averages of the state generated by `U`.
pub fn reduced_apply_impulse<S: Real>(
    impulses: &ImpulseSequence<S>,
    cfg: &OcpConfig<S>,
    subdivision: usize,
) -> Result<ImpulseSequence<S>> {
    cfg.validate()?;
    piece_cells(&cfg.grid, subdivision)?;
    if impulses.count() + 1 != subdivision {
        return Err(mismatch("impulse count must be subdivision minus one"));
    }
    if impulses.modes() != cfg.modes {
        return Err(mismatch("impulses do not match the config mode count"));
    }
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    apply_reduced_impulse(&cfg.domain, &coupling, &cfg.grid, impulses)
}

// Right-hand side of the reduced impulse system: scaled windowed reads of
// the adjoint driven by -y_d.
pub(crate) fn reduced_rhs_impulse<S: Real>(
    cfg: &OcpConfig<S>,
    coupling: &CouplingMatrix<S>,
    subdivision: usize,
) -> Result<ImpulseSequence<S>> {
    let adjoint = solve_periodic_adjoint(&cfg.domain, &cfg.target.scale(-S::one()), &cfg.grid)?;
    scaled_adjoint_reads(coupling, &adjoint, &cfg.grid, subdivision)
}

pub(crate) fn flatten_impulses<S: Real>(impulses: &ImpulseSequence<S>) -> Vec<S> {
    let mut out = Vec::with_capacity(impulses.count() * impulses.modes());
    for field in impulses.impulses() {
        out.extend_from_slice(field.coeffs());
    }
    out
}

pub(crate) fn unflatten_impulses<S: Real>(flat: &[S], modes: usize) -> ImpulseSequence<S> {
    debug_assert_eq!(flat.len() % modes, 0);
    ImpulseSequence::new(
        flat.chunks(modes)
            .map(|c| SpectralField::from_coeffs(c.to_vec()).expect("finite CG iterate"))
            .collect(),
    )
    .expect("nonempty impulse sequence")
}

/// Solve the impulse problem with `n` subintervals by CG on the reduced
/// system, in the scaled impulse inner product.
pub fn solve_impulse<S: Real>(cfg: &OcpConfig<S>, subdivision: usize) -> Result<ImpulseSolution<S>> {
    cfg.validate()?;
    piece_cells(&cfg.grid, subdivision)?;
    let coupling = coupling_matrix(&cfg.domain, cfg.modes)?;
    let modes = cfg.modes;
    let h = cfg.grid.horizon() / S::of_usize(subdivision);

    let rhs = flatten_impulses(&reduced_rhs_impulse(cfg, &coupling, subdivision)?);
    let x0 = vec![S::zero(); rhs.len()];
    let apply = |flat: &[S]| {
        let u = unflatten_impulses(flat, modes);
        let out = apply_reduced_impulse(&cfg.domain, &coupling, &cfg.grid, &u)
            .expect("shapes fixed by solver");
        flatten_impulses(&out)
    };

    let (flat, report): (Vec<S>, CgReport<S>) = cg::solve(
        apply,
        &rhs,
        x0,
        S::one() / h,
        cfg.residual_threshold(cfg.cg_tol),
        cfg.cg_max_iter,
        None,
    )?;

    let impulses = unflatten_impulses(&flat, modes);
    finish_solution(cfg, &coupling, impulses, report)
}

fn finish_solution<S: Real>(
    cfg: &OcpConfig<S>,
    coupling: &CouplingMatrix<S>,
    impulses: ImpulseSequence<S>,
    report: CgReport<S>,
) -> Result<ImpulseSolution<S>> {
    let state = solve_impulse_periodic(&cfg.domain, &impulses, coupling, &cfg.grid)?;
    let mut rhs = state.cell_averages();
    rhs.axpy(-S::one(), &cfg.target);
    let adjoint = solve_periodic_adjoint(&cfg.domain, &rhs, &cfg.grid)?;
    let cost = impulse_cost(&state, &impulses, &cfg.target, &cfg.grid)?;
    Ok(ImpulseSolution {
        impulses,
        state,
        adjoint,
        cost,
        iterations: report.iterations,
        residual: report.residual,
    })
}

/// Piecewise-constant control equivalent to an impulse sequence: zero on
/// the first subinterval and `u_i / h` on the subinterval following
/// `tau_i`. The embedding is an isometry onto the cost penalty:
/// `||embedded||_{L2}^2 = (1/h) sum_i ||u_i||^2`.
pub fn embed_impulse_control<S: Real>(
    impulses: &ImpulseSequence<S>,
    grid: &TimeGrid<S>,
) -> Result<SourceTrajectory<S>> {
    let n = impulses.count() + 1;
    let q = piece_cells(grid, n)?;
    let h = grid.horizon() / S::of_usize(n);
    let modes = impulses.modes();
    let mut cells = Vec::with_capacity(grid.steps());
    for _ in 0..q {
        cells.push(SpectralField::zeros(modes));
    }
    for i in 1..n {
        let value = impulses.impulse(i).scale(S::one() / h);
        for _ in 0..q {
            cells.push(value.clone());
        }
    }
    SourceTrajectory::new(cells)
}
