//! Spatial discretization: Dirichlet sine basis on an interval, control
//! window overlap matrices, mollified indicator functions and sampled
//! Lebesgue norms.
//!
//! All spatial objects are spectral: a field is its vector of coefficients
//! in the orthonormal basis `phi_k(x) = sqrt(2/L) sin(k pi x / L)`, so the
//! L2 norm of a field is the Euclidean norm of its coefficients.

use crate::error::{invalid, mismatch, Result};
use crate::quadrature::{composite_simpson, trapezoid_uniform};
use crate::real::Real;

/// Interval `(0, L)` with a control window `(lo, hi)` inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain1D<S> {
    length: S,
    control_lo: S,
    control_hi: S,
}

impl<S: Real> Domain1D<S> {
    pub fn new(length: S, control_lo: S, control_hi: S) -> Result<Self> {
        if !(length.is_finite() && length > S::zero()) {
            return Err(invalid("domain length must be positive and finite"));
        }
        if !(control_lo.is_finite() && control_hi.is_finite()) {
            return Err(invalid("control window bounds must be finite"));
        }
        if !(S::zero() <= control_lo && control_lo < control_hi && control_hi <= length) {
            return Err(invalid(
                "control window must satisfy 0 <= lo < hi <= length",
            ));
        }
        Ok(Self {
            length,
            control_lo,
            control_hi,
        })
    }

    /// Unit interval with the given control window.
    pub fn unit(control_lo: S, control_hi: S) -> Result<Self> {
        Self::new(S::one(), control_lo, control_hi)
    }

    pub fn length(&self) -> S {
        self.length
    }

    pub fn control_window(&self) -> (S, S) {
        (self.control_lo, self.control_hi)
    }

    /// True when the control window is the whole interval; overlap matrices
    /// collapse to the identity in that case.
    pub fn is_full_control(&self) -> bool {
        self.control_lo == S::zero() && self.control_hi == self.length
    }

    /// Laplacian eigenvalue `(k pi / L)^2` of the k-th sine mode, `k >= 1`.
    pub fn eigenvalue(&self, k: usize) -> Result<S> {
        if k == 0 {
            return Err(invalid("mode index must be at least 1"));
        }
        Ok(self.lambda(k))
    }

    pub(crate) fn lambda(&self, k: usize) -> S {
        debug_assert!(k >= 1);
        let r = S::of_usize(k) * S::PI() / self.length;
        r * r
    }
}

/// Coefficient vector of a field in the sine basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField<S> {
    coeffs: Vec<S>,
}

impl<S: Real> SpectralField<S> {
    pub fn zeros(modes: usize) -> Self {
        Self {
            coeffs: vec![S::zero(); modes],
        }
    }

    /// Unit coefficient on mode `k` (1-based), zero elsewhere.
    pub fn basis(modes: usize, k: usize) -> Result<Self> {
        if k == 0 || k > modes {
            return Err(invalid(format!(
                "basis mode {k} outside 1..={modes}"
            )));
        }
        let mut f = Self::zeros(modes);
        f.coeffs[k - 1] = S::one();
        Ok(f)
    }

    pub fn from_coeffs(coeffs: Vec<S>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("a field needs at least one mode"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("field coefficients must be finite"));
        }
        Ok(Self { coeffs })
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    /// Coefficient of mode `k` (1-based).
    pub fn coeff(&self, k: usize) -> S {
        self.coeffs[k - 1]
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [S] {
        &mut self.coeffs
    }

    /// L2(Omega) norm; Parseval makes it the Euclidean coefficient norm.
    pub fn norm(&self) -> S {
        self.coeffs.iter().map(|c| *c * *c).sum::<S>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> S {
        debug_assert_eq!(self.modes(), other.modes());
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| *a * *b)
            .sum()
    }

    pub fn scale(&self, factor: S) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| *c * factor).collect(),
        }
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: S, other: &Self) {
        debug_assert_eq!(self.modes(), other.modes());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * *b;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(S::one(), other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-S::one(), other);
        out
    }

    /// Zero-pad (or truncate is refused) to a larger mode count.
    pub fn padded(&self, modes: usize) -> Result<Self> {
        if modes < self.modes() {
            return Err(invalid("padding cannot drop modes"));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(modes, S::zero());
        Ok(Self { coeffs })
    }
}

/// Symmetric overlap matrix `M[j][k] = int_omega phi_j phi_k dx` of the
/// control window, acting on coefficient vectors. Multiplying by `M` is the
/// spectral form of multiplying a field by the window indicator and
/// projecting back onto the first `dim` modes.
#[derive(Debug, Clone)]
pub struct CouplingMatrix<S> {
    dim: usize,
    entries: Vec<S>,
    full_control: bool,
}

/// Closed-form overlap matrix of the control window of `domain`.
///
/// Entries come from the sine product antiderivative, so construction is
/// exact up to rounding; no quadrature is involved.
pub fn coupling_matrix<S: Real>(domain: &Domain1D<S>, modes: usize) -> Result<CouplingMatrix<S>> {
    if modes == 0 {
        return Err(invalid("coupling matrix needs at least one mode"));
    }
    if domain.is_full_control() {
        let mut entries = vec![S::zero(); modes * modes];
        for j in 0..modes {
            entries[j * modes + j] = S::one();
        }
        return Ok(CouplingMatrix {
            dim: modes,
            entries,
            full_control: true,
        });
    }
    let (a, b) = domain.control_window();
    let length = domain.length();
    let pi = S::PI();
    let two = S::of(2.0);
    let mut entries = vec![S::zero(); modes * modes];
    for j in 1..=modes {
        for k in 1..=j {
            let value = if j == k {
                let freq = two * S::of_usize(k) * pi / length;
                (b - a) / length
                    - ((freq * b).sin() - (freq * a).sin()) / (two * S::of_usize(k) * pi)
            } else {
                let dm = S::of_usize(j) - S::of_usize(k);
                let dp = S::of_usize(j) + S::of_usize(k);
                let fm = dm * pi / length;
                let fp = dp * pi / length;
                (((fm * b).sin() - (fm * a).sin()) / dm - ((fp * b).sin() - (fp * a).sin()) / dp)
                    / pi
            };
            entries[(j - 1) * modes + (k - 1)] = value;
            entries[(k - 1) * modes + (j - 1)] = value;
        }
    }
    Ok(CouplingMatrix {
        dim: modes,
        entries,
        full_control: false,
    })
}

impl<S: Real> CouplingMatrix<S> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        self.full_control
    }

    /// Entry coupling modes `j` and `k` (1-based).
    pub fn entry(&self, j: usize, k: usize) -> S {
        self.entries[(j - 1) * self.dim + (k - 1)]
    }

    /// Spectral multiplication by the window indicator.
    pub fn apply(&self, field: &SpectralField<S>) -> Result<SpectralField<S>> {
        if field.modes() != self.dim {
            return Err(mismatch(format!(
                "field has {} modes, coupling matrix has {}",
                field.modes(),
                self.dim
            )));
        }
        if self.full_control {
            return Ok(field.clone());
        }
        let mut out = SpectralField::zeros(self.dim);
        for j in 0..self.dim {
            let row = &self.entries[j * self.dim..(j + 1) * self.dim];
            let mut acc = S::zero();
            for (m, c) in row.iter().zip(field.coeffs()) {
                acc += *m * *c;
            }
            out.coeffs_mut()[j] = acc;
        }
        Ok(out)
    }
}

/// Samples of the mollified window indicator and of its exact spatial
/// derivative on a uniform grid over `[0, L]`.
#[derive(Debug, Clone)]
pub struct MollifiedIndicator<S> {
    epsilon: S,
    spacing: S,
    positions: Vec<S>,
    values: Vec<S>,
    gradient: Vec<S>,
}

impl<S: Real> MollifiedIndicator<S> {
    pub fn epsilon(&self) -> S {
        self.epsilon
    }

    pub fn spacing(&self) -> S {
        self.spacing
    }

    pub fn positions(&self) -> &[S] {
        &self.positions
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Samples of `d/dx` of the mollified indicator, evaluated from the
    /// kernel difference formula rather than by differencing `values`.
    pub fn gradient(&self) -> &[S] {
        &self.gradient
    }
}

// Panel count for every kernel integral; the integration variable is
// already scaled by epsilon, so this resolves the bump uniformly in eps.
const KERNEL_PANELS: usize = 256;

fn bump_unnormalized<S: Real>(z: S) -> S {
    if z.abs() < S::one() {
        (S::one() / (z * z - S::one())).exp()
    } else {
        S::zero()
    }
}

fn bump_mass<S: Real>() -> S {
    composite_simpson(-S::one(), S::one(), 2048, bump_unnormalized::<S>)
        .expect("fixed panel count is valid")
}

/// Convolution of the control-window indicator with the standard compactly
/// supported bump of width `epsilon`, sampled on `grid_points` uniform
/// points spanning `[0, L]`.
pub fn mollify_indicator<S: Real>(
    domain: &Domain1D<S>,
    epsilon: S,
    grid_points: usize,
) -> Result<MollifiedIndicator<S>> {
    let (a, b) = domain.control_window();
    let two = S::of(2.0);
    if !(epsilon > S::zero() && epsilon < (b - a) / two) {
        return Err(invalid(
            "mollifier width must satisfy 0 < eps < half the window width",
        ));
    }
    if grid_points < 2 {
        return Err(invalid("mollifier sampling needs at least two points"));
    }
    let norm = S::one() / bump_mass::<S>();
    let kernel = |z: S| norm * bump_unnormalized(z);

    let spacing = domain.length() / S::of_usize(grid_points - 1);
    let mut positions = Vec::with_capacity(grid_points);
    let mut values = Vec::with_capacity(grid_points);
    let mut gradient = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        let x = spacing * S::of_usize(i);
        positions.push(x);

        // chi^eps(x) = int_{(x-b)/eps}^{(x-a)/eps} kernel(z) dz, clipped to
        // the kernel support [-1, 1].
        let hi = ((x - a) / epsilon).min(S::one());
        let lo = ((x - b) / epsilon).max(-S::one());
        let v = if hi <= lo {
            S::zero()
        } else if hi >= S::one() && lo <= -S::one() {
            S::one()
        } else {
            composite_simpson(lo, hi, KERNEL_PANELS, kernel)?
        };
        values.push(v.max(S::zero()).min(S::one()));

        // d/dx chi^eps(x) = (kernel((x-a)/eps) - kernel((x-b)/eps)) / eps.
        let g = (kernel((x - a) / epsilon) - kernel((x - b) / epsilon)) / epsilon;
        gradient.push(g);
    }
    Ok(MollifiedIndicator {
        epsilon,
        spacing,
        positions,
        values,
        gradient,
    })
}

/// Samples of the sharp window indicator on the same grid layout as
/// [`mollify_indicator`], for distance measurements.
pub fn indicator_samples<S: Real>(domain: &Domain1D<S>, grid_points: usize) -> Result<Vec<S>> {
    if grid_points < 2 {
        return Err(invalid("indicator sampling needs at least two points"));
    }
    let (a, b) = domain.control_window();
    let spacing = domain.length() / S::of_usize(grid_points - 1);
    Ok((0..grid_points)
        .map(|i| {
            let x = spacing * S::of_usize(i);
            if x > a && x < b {
                S::one()
            } else if x == a || x == b {
                S::of(0.5)
            } else {
                S::zero()
            }
        })
        .collect())
}

/// Sampled Lebesgue norm of uniformly spaced samples: composite trapezoid
/// of `|f|^p` for finite `p >= 1`, maximum of `|f|` for `p = infinity`.
pub fn lp_norm_sampled<S: Real>(samples: &[S], spacing: S, p: S) -> Result<S> {
    if samples.len() < 2 {
        return Err(invalid("sampled norm needs at least two samples"));
    }
    if !(spacing > S::zero()) {
        return Err(invalid("sample spacing must be positive"));
    }
    if p.is_infinite() && p > S::zero() {
        return Ok(samples
            .iter()
            .fold(S::zero(), |acc, v| acc.max(v.abs())));
    }
    if !(p >= S::one()) || !p.is_finite() {
        return Err(invalid("norm exponent must satisfy p >= 1 or be infinite"));
    }
    let powered: Vec<S> = samples.iter().map(|v| v.abs().powf(p)).collect();
    Ok(trapezoid_uniform(&powered, spacing)?.powf(S::one() / p))
}
