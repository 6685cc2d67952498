//! Time evolution in the sine basis.
//!
//! The semigroup acts diagonally, so time stepping is exact per mode: a
//! piecewise-constant-in-time source is integrated with the variation of
//! constants factor `(1 - e^{-lambda dt}) / lambda` and contributes no time
//! discretization error. Periodic-in-time solutions come from the per-mode
//! geometric fixed point, and the adjoint equation is solved by reversing
//! time, which turns it into the forward equation again.

use crate::error::{invalid, mismatch, Result};
use crate::real::Real;
use crate::spectral::{CouplingMatrix, Domain1D, SpectralField};

/// Uniform time grid on `[0, T]` with `steps` cells, optionally tagged with
/// a subdivision count for impulse and sample-hold problems.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<S> {
    horizon: S,
    steps: usize,
    subdivision: usize,
}

impl<S: Real> TimeGrid<S> {
    pub fn new(horizon: S, steps: usize) -> Result<Self> {
        Self::with_subdivision(horizon, steps, 1)
    }

    pub fn with_subdivision(horizon: S, steps: usize, subdivision: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > S::zero()) {
            return Err(invalid("time horizon must be positive and finite"));
        }
        if steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        if subdivision == 0 || steps % subdivision != 0 {
            return Err(invalid(format!(
                "subdivision {subdivision} must divide the step count {steps}"
            )));
        }
        Ok(Self {
            horizon,
            steps,
            subdivision,
        })
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn subdivision(&self) -> usize {
        self.subdivision
    }

    pub fn dt(&self) -> S {
        self.horizon / S::of_usize(self.steps)
    }

    pub fn node_time(&self, node: usize) -> S {
        self.dt() * S::of_usize(node)
    }

    /// Cells per subinterval for a given subdivision count; errors unless
    /// the count divides the grid.
    pub fn cells_per_piece(&self, subdivision: usize) -> Result<usize> {
        if subdivision == 0 || self.steps % subdivision != 0 {
            return Err(invalid(format!(
                "subdivision {subdivision} must divide the step count {}",
                self.steps
            )));
        }
        Ok(self.steps / subdivision)
    }
}

/// State sampled at every grid node (length `steps + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    nodes: Vec<SpectralField<S>>,
}

impl<S: Real> Trajectory<S> {
    pub fn new(nodes: Vec<SpectralField<S>>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(invalid("a trajectory needs at least two nodes"));
        }
        let modes = nodes[0].modes();
        if nodes.iter().any(|f| f.modes() != modes) {
            return Err(mismatch("trajectory nodes disagree on mode count"));
        }
        Ok(Self { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.nodes[0].modes()
    }

    pub fn node(&self, m: usize) -> &SpectralField<S> {
        &self.nodes[m]
    }

    pub fn nodes(&self) -> &[SpectralField<S>] {
        &self.nodes
    }

    pub fn initial(&self) -> &SpectralField<S> {
        &self.nodes[0]
    }

    pub fn terminal(&self) -> &SpectralField<S> {
        &self.nodes[self.nodes.len() - 1]
    }

    /// Distance between the two endpoint states.
    pub fn periodicity_residual(&self) -> S {
        self.terminal().sub(self.initial()).norm()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() || self.modes() != other.modes() {
            return Err(mismatch("trajectory difference needs matching shapes"));
        }
        Ok(Self {
            nodes: self
                .nodes
                .iter()
                .zip(&other.nodes)
                .map(|(a, b)| a.sub(b))
                .collect(),
        })
    }

    /// Per-cell nodal averages `(y_m + y_{m+1}) / 2` as a cell function.
    pub fn cell_averages(&self) -> SourceTrajectory<S> {
        let half = S::of(0.5);
        let cells = self
            .nodes
            .windows(2)
            .map(|w| w[0].add(&w[1]).scale(half))
            .collect();
        SourceTrajectory { cells }
    }
}

/// Piecewise-constant-in-time field: one value per grid cell
/// (length `steps`), the value living on `(t_m, t_{m+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTrajectory<S> {
    cells: Vec<SpectralField<S>>,
}

impl<S: Real> SourceTrajectory<S> {
    pub fn new(cells: Vec<SpectralField<S>>) -> Result<Self> {
        if cells.is_empty() {
            return Err(invalid("a source needs at least one cell"));
        }
        let modes = cells[0].modes();
        if cells.iter().any(|f| f.modes() != modes) {
            return Err(mismatch("source cells disagree on mode count"));
        }
        Ok(Self { cells })
    }

    pub fn zeros(modes: usize, cells: usize) -> Self {
        Self {
            cells: vec![SpectralField::zeros(modes); cells],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.cells[0].modes()
    }

    pub fn cell(&self, m: usize) -> &SpectralField<S> {
        &self.cells[m]
    }

    pub fn cells(&self) -> &[SpectralField<S>] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [SpectralField<S>] {
        &mut self.cells
    }

    pub fn scale(&self, factor: S) -> Self {
        Self {
            cells: self.cells.iter().map(|c| c.scale(factor)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() || self.modes() != other.modes() {
            return Err(mismatch("source difference needs matching shapes"));
        }
        Ok(Self {
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(a, b)| a.sub(b))
                .collect(),
        })
    }

    pub fn axpy(&mut self, factor: S, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.axpy(factor, b);
        }
    }

    /// Squared `L2(0,T; L2)` norm; exact for a cell function.
    pub fn norm_l2_sq(&self, grid: &TimeGrid<S>) -> S {
        let sum: S = self.cells.iter().map(|c| c.dot(c)).sum();
        sum * grid.dt()
    }
}

/// Impulse amplitudes `u_1, ..., u_{n-1}` attached to the interior
/// subdivision times `tau_1, ..., tau_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSequence<S> {
    fields: Vec<SpectralField<S>>,
}

impl<S: Real> ImpulseSequence<S> {
    pub fn new(fields: Vec<SpectralField<S>>) -> Result<Self> {
        if fields.is_empty() {
            return Err(invalid("an impulse sequence needs at least one impulse"));
        }
        let modes = fields[0].modes();
        if fields.iter().any(|f| f.modes() != modes) {
            return Err(mismatch("impulses disagree on mode count"));
        }
        Ok(Self { fields })
    }

    pub fn zeros(modes: usize, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(invalid("an impulse sequence needs at least one impulse"));
        }
        Ok(Self {
            fields: vec![SpectralField::zeros(modes); count],
        })
    }

    pub fn count(&self) -> usize {
        self.fields.len()
    }

    pub fn modes(&self) -> usize {
        self.fields[0].modes()
    }

    /// Impulse attached to `tau_i`, `i` in `1..=count`.
    pub fn impulse(&self, i: usize) -> &SpectralField<S> {
        &self.fields[i - 1]
    }

    pub fn impulses(&self) -> &[SpectralField<S>] {
        &self.fields
    }

    pub fn impulses_mut(&mut self) -> &mut [SpectralField<S>] {
        &mut self.fields
    }

    pub fn scale(&self, factor: S) -> Self {
        Self {
            fields: self.fields.iter().map(|f| f.scale(factor)).collect(),
        }
    }
}

/// State of an impulse problem: one free-evolution piece per subinterval,
/// each sampled on its own closed node range. Piece `i` (0-based) covers
/// `[tau_i, tau_{i+1}]`; the first node of piece `i+1` equals the last node
/// of piece `i` plus the injected jump.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenTrajectory<S> {
    pieces: Vec<Vec<SpectralField<S>>>,
}

impl<S: Real> BrokenTrajectory<S> {
    pub fn pieces(&self) -> &[Vec<SpectralField<S>>] {
        &self.pieces
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn cells_per_piece(&self) -> usize {
        self.pieces[0].len() - 1
    }

    pub fn modes(&self) -> usize {
        self.pieces[0][0].modes()
    }

    pub fn initial(&self) -> &SpectralField<S> {
        &self.pieces[0][0]
    }

    pub fn terminal(&self) -> &SpectralField<S> {
        let last = &self.pieces[self.pieces.len() - 1];
        &last[last.len() - 1]
    }

    /// Distance between the terminal state and the initial state.
    pub fn periodicity_residual(&self) -> S {
        self.terminal().sub(self.initial()).norm()
    }

    /// Jump injected at the start of piece `i` (1-based interior boundary):
    /// first node of piece `i` minus last node of piece `i-1`.
    pub fn jump(&self, i: usize) -> SpectralField<S> {
        let prev = &self.pieces[i - 1];
        self.pieces[i][0].sub(&prev[prev.len() - 1])
    }

    /// Single nodal trajectory using post-jump values at the interior
    /// subdivision nodes (the value carried forward in time).
    pub fn flatten_post_jump(&self) -> Trajectory<S> {
        let q = self.cells_per_piece();
        let mut nodes = Vec::with_capacity(self.pieces.len() * q + 1);
        for piece in &self.pieces {
            for node in &piece[..q] {
                nodes.push(node.clone());
            }
        }
        let last = &self.pieces[self.pieces.len() - 1];
        nodes.push(last[q].clone());
        Trajectory { nodes }
    }

    /// Per-cell nodal averages taken piece by piece, so each cell average
    /// uses the one-sided values of its own piece at jump nodes.
    pub fn cell_averages(&self) -> SourceTrajectory<S> {
        let half = S::of(0.5);
        let q = self.cells_per_piece();
        let mut cells = Vec::with_capacity(self.pieces.len() * q);
        for piece in &self.pieces {
            for w in piece.windows(2) {
                cells.push(w[0].add(&w[1]).scale(half));
            }
        }
        SourceTrajectory { cells }
    }
}

// Exponent above which the decay factor is flushed to zero to avoid
// underflow noise; e^{-700} is already ~1e-304.
fn decay_factor<S: Real>(lambda: S, t: S) -> S {
    if lambda * t > S::of(700.0) {
        S::zero()
    } else {
        (-lambda * t).exp()
    }
}

// Per-mode step factors for one cell of width dt: decay E = e^{-lambda dt}
// and source weight (1 - E) / lambda, the exact integral of the semigroup
// over the cell.
fn cell_factors<S: Real>(domain: &Domain1D<S>, modes: usize, dt: S) -> (Vec<S>, Vec<S>) {
    let mut decay = Vec::with_capacity(modes);
    let mut weight = Vec::with_capacity(modes);
    for k in 1..=modes {
        let lambda = domain.lambda(k);
        let e = decay_factor(lambda, dt);
        let w = if e == S::zero() {
            S::one() / lambda
        } else {
            // 1 - e^{-x} via expm1 keeps precision for small lambda dt.
            -(-lambda * dt).exp_m1() / lambda
        };
        decay.push(e);
        weight.push(w);
    }
    (decay, weight)
}

/// Free evolution of `y0` over a time span `t >= 0`.
pub fn propagate_free<S: Real>(
    domain: &Domain1D<S>,
    y0: &SpectralField<S>,
    t: S,
) -> Result<SpectralField<S>> {
    if !(t >= S::zero()) {
        return Err(invalid("free propagation needs t >= 0"));
    }
    let mut out = y0.clone();
    for (k, c) in out.coeffs_mut().iter_mut().enumerate() {
        *c *= decay_factor(domain.lambda(k + 1), t);
    }
    Ok(out)
}

/// One exact cell step with a constant source over the cell.
pub fn step_with_source<S: Real>(
    domain: &Domain1D<S>,
    y: &SpectralField<S>,
    source: &SpectralField<S>,
    dt: S,
) -> Result<SpectralField<S>> {
    if !(dt > S::zero()) {
        return Err(invalid("time step must be positive"));
    }
    if y.modes() != source.modes() {
        return Err(mismatch("state and source disagree on mode count"));
    }
    let (decay, weight) = cell_factors(domain, y.modes(), dt);
    let mut out = y.clone();
    for (k, c) in out.coeffs_mut().iter_mut().enumerate() {
        *c = decay[k] * *c + weight[k] * source.coeff(k + 1);
    }
    Ok(out)
}

/// March the state over the whole grid from `y0` with a cell source.
pub fn solve_forward<S: Real>(
    domain: &Domain1D<S>,
    y0: &SpectralField<S>,
    source: &SourceTrajectory<S>,
    grid: &TimeGrid<S>,
) -> Result<Trajectory<S>> {
    if source.len() != grid.steps() {
        return Err(mismatch(format!(
            "source has {} cells, grid has {} steps",
            source.len(),
            grid.steps()
        )));
    }
    if y0.modes() != source.modes() {
        return Err(mismatch("state and source disagree on mode count"));
    }
    let modes = y0.modes();
    let (decay, weight) = cell_factors(domain, modes, grid.dt());
    let mut nodes = Vec::with_capacity(grid.steps() + 1);
    nodes.push(y0.clone());
    let mut current = y0.clone();
    for cell in source.cells() {
        let mut next = current.clone();
        for (k, c) in next.coeffs_mut().iter_mut().enumerate() {
            *c = decay[k] * *c + weight[k] * cell.coeff(k + 1);
        }
        nodes.push(next.clone());
        current = next;
    }
    Trajectory::new(nodes)
}

// Per-mode divisor 1 - e^{-lambda T} of the periodic fixed point.
fn periodic_divisors<S: Real>(domain: &Domain1D<S>, modes: usize, horizon: S) -> Vec<S> {
    (1..=modes)
        .map(|k| {
            let lambda = domain.lambda(k);
            if decay_factor(lambda, horizon) == S::zero() {
                S::one()
            } else {
                -(-lambda * horizon).exp_m1()
            }
        })
        .collect()
}

/// Time-periodic solution of the heat equation with a cell source: the
/// initial state is the per-mode fixed point of one period of evolution.
pub fn solve_periodic<S: Real>(
    domain: &Domain1D<S>,
    source: &SourceTrajectory<S>,
    grid: &TimeGrid<S>,
) -> Result<Trajectory<S>> {
    let modes = source.modes();
    let zero = SpectralField::zeros(modes);
    let one_period = solve_forward(domain, &zero, source, grid)?;
    let divisors = periodic_divisors(domain, modes, grid.horizon());
    let mut y0 = SpectralField::zeros(modes);
    for (k, c) in y0.coeffs_mut().iter_mut().enumerate() {
        *c = one_period.terminal().coeff(k + 1) / divisors[k];
    }
    solve_forward(domain, &y0, source, grid)
}

/// Time-periodic solution of the adjoint equation `p' + Lap p = rhs`:
/// reversing time and negating the right-hand side turns it into the
/// forward periodic problem, so the same exact stepping applies.
pub fn solve_periodic_adjoint<S: Real>(
    domain: &Domain1D<S>,
    rhs: &SourceTrajectory<S>,
    grid: &TimeGrid<S>,
) -> Result<Trajectory<S>> {
    let reversed = SourceTrajectory::new(
        rhs.cells()
            .iter()
            .rev()
            .map(|c| c.scale(-S::one()))
            .collect(),
    )?;
    let forward = solve_periodic(domain, &reversed, grid)?;
    let nodes = forward.nodes().iter().rev().cloned().collect();
    Trajectory::new(nodes)
}

/// Periodic state of the impulse dynamics: free evolution on each
/// subinterval, jumps `M u_i` injected at the interior nodes, and the
/// initial state chosen as the per-mode geometric fixed point over one
/// period.
pub fn solve_impulse_periodic<S: Real>(
    domain: &Domain1D<S>,
    impulses: &ImpulseSequence<S>,
    coupling: &CouplingMatrix<S>,
    grid: &TimeGrid<S>,
) -> Result<BrokenTrajectory<S>> {
    let n = impulses.count() + 1;
    if n < 2 {
        return Err(invalid("impulse dynamics need at least two subintervals"));
    }
    let q = grid.cells_per_piece(n)?;
    let modes = impulses.modes();
    if coupling.dim() != modes {
        return Err(mismatch("impulses and coupling matrix disagree on modes"));
    }

    let jumps: Vec<SpectralField<S>> = impulses
        .impulses()
        .iter()
        .map(|u| coupling.apply(u))
        .collect::<Result<_>>()?;

    // Initial state per mode: sum of jumps decayed over the remainder of
    // the period, divided by 1 - e^{-lambda T}.
    let horizon = grid.horizon();
    let piece_span = horizon / S::of_usize(n);
    let divisors = periodic_divisors(domain, modes, horizon);
    let mut y0 = SpectralField::zeros(modes);
    for k in 1..=modes {
        let lambda = domain.lambda(k);
        let mut acc = S::zero();
        for (j, jump) in jumps.iter().enumerate() {
            // jump index j corresponds to tau_{j+1} = (j+1) T / n.
            let remaining = piece_span * S::of_usize(n - (j + 1));
            acc += decay_factor(lambda, remaining) * jump.coeff(k);
        }
        y0.coeffs_mut()[k - 1] = acc / divisors[k - 1];
    }

    let (decay, _) = cell_factors(domain, modes, grid.dt());
    let mut pieces = Vec::with_capacity(n);
    let mut start = y0;
    for i in 0..n {
        let mut piece = Vec::with_capacity(q + 1);
        piece.push(start.clone());
        let mut current = start.clone();
        for _ in 0..q {
            let mut next = current.clone();
            for (k, c) in next.coeffs_mut().iter_mut().enumerate() {
                *c *= decay[k];
            }
            piece.push(next.clone());
            current = next;
        }
        if i + 1 < n {
            start = current.add(&jumps[i]);
        }
        pieces.push(piece);
    }
    Ok(BrokenTrajectory { pieces })
}
