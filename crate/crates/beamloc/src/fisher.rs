//! Fisher information and position error bounds.
//!
//! The observation FIM over the position parameter vector is assembled by
//! the chain rule: an inner FIM over the per-path channel parameters
//! `(tau, aod, aoa, |h|, arg h)` built from analytic atom derivatives, then
//! a sandwich with the position-to-channel Jacobian (delay/angle rows) and
//! gain selectors. The same inner machinery yields per-beam components
//! `J(q) = sum_k q_k J_k`, which is what makes the allocation problems
//! affine in `q` and therefore SDP-representable.
//!
//! The hybrid FIM adds the Gaussian clock prior `1/sigma_clk^2` on the
//! clock-offset entry. The SPEB is the trace of the leading 2x2 block of
//! the inverse, computed by a full symmetric eigen-solve with condition
//! monitoring; near-singular information matrices are an error, never
//! clamped.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::geometry::{
    pos_to_channel, pos_to_channel_jacobian, steering_derivative, steering_vector, ArrayGeometry,
    ChannelParams, GeometryError, PositionParams,
};
use crate::waveform::{ReferenceSignal, SystemModel};

/// Parameters per path in the channel-space FIM: delay, AOD, AOA,
/// gain magnitude, gain phase.
pub const PARAMS_PER_PATH: usize = 5;
/// Column index of the clock offset in the position parameter vector.
pub const CLOCK_INDEX: usize = 3;
/// Condition-number ceiling for inverting an information matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum FisherError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("information matrix singular or ill-conditioned (cond ~ {cond:.3e})")]
    Singular { cond: f64 },
    #[error("gain nuisance block is singular; cannot marginalize")]
    GainBlockSingular,
    #[error("sigma_clk must be positive (or +inf for the asynchronous case), got {0}")]
    BadSigmaClk(f64),
    #[error("too many degenerate prior draws ({0} resamples)")]
    DegeneratePrior(usize),
}

/// Hybrid Fisher information over the position parameter vector
/// (`(4L+2) x (4L+2)`, symmetric PSD).
#[derive(Debug, Clone)]
pub struct HybridFim {
    pub matrix: DMatrix<f64>,
}

impl HybridFim {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Squared position error bound and its square root.
#[derive(Debug, Clone, Copy)]
pub struct SpebValue {
    /// m^2
    pub speb: f64,
    /// m
    pub peb: f64,
}

/// FIM over the stacked channel parameters of all paths.
#[derive(Debug, Clone)]
pub struct ChannelFim {
    /// `5L x 5L`, path-major `(tau, aod, aoa, |h|, arg h)` per path.
    pub full: DMatrix<f64>,
    pub num_paths: usize,
}

impl ChannelFim {
    /// Weight matrix for the channel-to-position least squares: the
    /// `(tau, aod, aoa)` sub-block with the gain parameters marginalized
    /// out (Schur complement), in path-major delay/AOD/AOA ordering.
    pub fn exip_weight(&self) -> Result<DMatrix<f64>, FisherError> {
        let l = self.num_paths;
        let geo: Vec<usize> = (0..l)
            .flat_map(|p| (0..3).map(move |t| PARAMS_PER_PATH * p + t))
            .collect();
        let gain: Vec<usize> = (0..l)
            .flat_map(|p| (3..5).map(move |t| PARAMS_PER_PATH * p + t))
            .collect();
        let a = self.full.select_rows(&geo).select_columns(&geo);
        let b = self.full.select_rows(&geo).select_columns(&gain);
        let d = self.full.select_rows(&gain).select_columns(&gain);
        let chol = d.cholesky().ok_or(FisherError::GainBlockSingular)?;
        let dinv_bt = chol.solve(&b.transpose());
        let mut w = a - b * dinv_bt;
        // Exact symmetry for downstream factorizations.
        for r in 0..w.nrows() {
            for c in (r + 1)..w.ncols() {
                let v = 0.5 * (w[(r, c)] + w[(c, r)]);
                w[(r, c)] = v;
                w[(c, r)] = v;
            }
        }
        Ok(w)
    }

    /// Square roots of the CRLB diagonal for `(tau, aod, aoa)` of each path.
    pub fn crlb_sqrt_diag(&self) -> Result<Vec<[f64; 3]>, FisherError> {
        let inv = invert_spd(&self.full)?;
        Ok((0..self.num_paths)
            .map(|p| {
                let b = PARAMS_PER_PATH * p;
                [
                    inv[(b, b)].max(0.0).sqrt(),
                    inv[(b + 1, b + 1)].max(0.0).sqrt(),
                    inv[(b + 2, b + 2)].max(0.0).sqrt(),
                ]
            })
            .collect())
    }
}

/// Symmetric inverse with condition monitoring.
///
/// Information matrices mix units (s^-2, rad^-2, gain^-2 and their crosses),
/// so the raw spectrum spans many decades for purely dimensional reasons.
/// The matrix is first equilibrated by its diagonal (making it unit-free);
/// the condition gate applies to the equilibrated matrix.
fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, FisherError> {
    let n = m.nrows();
    let mut d = DVector::zeros(n);
    for i in 0..n {
        if m[(i, i)] <= 0.0 {
            return Err(FisherError::Singular { cond: f64::INFINITY });
        }
        d[i] = 1.0 / m[(i, i)].sqrt();
    }
    let scaled = DMatrix::from_fn(n, n, |r, c| m[(r, c)] * d[r] * d[c]);
    let eig = nalgebra::SymmetricEigen::new(scaled);
    let lmax = eig.eigenvalues.amax();
    let lmin = eig.eigenvalues.min();
    if lmin <= 0.0 || lmax / lmin > MAX_CONDITION {
        return Err(FisherError::Singular {
            cond: if lmin.abs() > 0.0 { lmax / lmin.abs() } else { f64::INFINITY },
        });
    }
    let mut q = eig.eigenvectors.clone();
    for (i, mut col) in q.column_iter_mut().enumerate() {
        col /= eig.eigenvalues[i].sqrt();
    }
    let inv_scaled = &q * q.transpose();
    Ok(DMatrix::from_fn(n, n, |r, c| inv_scaled[(r, c)] * d[r] * d[c]))
}

/// Per-path quantities shared by the FIM assembly routines.
struct PathFactors {
    gain: Complex64,
    /// Rx steering and its derivative.
    a_r: DVector<Complex64>,
    da_r: DVector<Complex64>,
    /// Tx steering and its derivative (used against beams or symbols).
    a_t: DVector<Complex64>,
    da_t: DVector<Complex64>,
    /// Delay phasors per subcarrier position.
    phasor: Vec<Complex64>,
}

fn path_factors(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    omegas: &[f64],
    ch: &ChannelParams,
) -> Vec<PathFactors> {
    ch.paths
        .iter()
        .map(|p| PathFactors {
            gain: p.gain,
            a_r: steering_vector(rx, p.aoa),
            da_r: steering_derivative(rx, p.aoa),
            a_t: steering_vector(tx, p.aod),
            da_t: steering_derivative(tx, p.aod),
            phasor: omegas
                .iter()
                .map(|&w| Complex64::from_polar(1.0, -w * p.delay))
                .collect(),
        })
        .collect()
}

/// Parameter type within a path block.
#[derive(Clone, Copy, PartialEq)]
enum ParamKind {
    Delay,
    Aod,
    Aoa,
    GainMag,
    GainPhase,
}

const PARAM_KINDS: [ParamKind; PARAMS_PER_PATH] = [
    ParamKind::Delay,
    ParamKind::Aod,
    ParamKind::Aoa,
    ParamKind::GainMag,
    ParamKind::GainPhase,
];

impl ParamKind {
    /// Complex prefactor of the derivative's scalar part.
    fn prefactor(self, gain: Complex64) -> Complex64 {
        match self {
            ParamKind::Delay => -Complex64::i() * gain,
            ParamKind::Aod | ParamKind::Aoa => gain,
            ParamKind::GainMag => Complex64::from_polar(1.0, gain.arg()),
            ParamKind::GainPhase => Complex64::i() * gain,
        }
    }

    /// Power of `w_p` carried by the derivative.
    fn omega_power(self) -> usize {
        usize::from(self == ParamKind::Delay)
    }

    /// Whether the Tx side uses the steering derivative.
    fn uses_tx_derivative(self) -> bool {
        self == ParamKind::Aod
    }

    /// Whether the Rx side uses the steering derivative.
    fn uses_rx_derivative(self) -> bool {
        self == ParamKind::Aoa
    }
}

fn rx_inner(a: &PathFactors, ka: ParamKind, b: &PathFactors, kb: ParamKind) -> Complex64 {
    let u = if ka.uses_rx_derivative() { &a.da_r } else { &a.a_r };
    let v = if kb.uses_rx_derivative() { &b.da_r } else { &b.a_r };
    u.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// FIM over the stacked channel parameters, from an explicit reference
/// signal (any spectral phases, any allocation).
pub fn channel_fim(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    x: &ReferenceSignal,
    ch: &ChannelParams,
    noise_var_mw: f64,
) -> ChannelFim {
    let l = ch.num_paths();
    let omegas = x.grid.angular_frequencies();
    let factors = path_factors(tx, rx, &omegas, ch);
    let n_p = x.grid.num_subcarriers();
    let n_b = x.grid.num_symbols;

    // Tx-projected symbols: tb[l][(ip, b)] = a_T(aod_l)^T x[p, b], and the
    // derivative version; both folded with the delay phasor.
    let mut base = vec![DMatrix::<Complex64>::zeros(n_p, n_b); l];
    let mut deriv = vec![DMatrix::<Complex64>::zeros(n_p, n_b); l];
    for (pl, f) in factors.iter().enumerate() {
        for (b, xb) in x.symbols.iter().enumerate() {
            for ip in 0..n_p {
                let col = xb.column(ip);
                let g: Complex64 = f.a_t.iter().zip(col.iter()).map(|(a, v)| a * v).sum();
                let gd: Complex64 = f.da_t.iter().zip(col.iter()).map(|(a, v)| a * v).sum();
                base[pl][(ip, b)] = f.phasor[ip] * g;
                deriv[pl][(ip, b)] = f.phasor[ip] * gd;
            }
        }
    }

    // Cross sums S[xy][m](l, l') = sum_{p,b} conj(x_l) y_l' w_p^m for
    // x, y in {base, deriv} and m = 0, 1, 2.
    let mut fim = DMatrix::zeros(PARAMS_PER_PATH * l, PARAMS_PER_PATH * l);
    let scale = 2.0 / noise_var_mw;
    for la in 0..l {
        for lb in 0..l {
            let mut s = [[Complex64::default(); 3]; 4]; // [cc, cd, dc, dd][m]
            for ip in 0..n_p {
                let w = omegas[ip];
                let wp = [1.0, w, w * w];
                for b in 0..n_b {
                    let ca = base[la][(ip, b)].conj();
                    let da = deriv[la][(ip, b)].conj();
                    let cb = base[lb][(ip, b)];
                    let db = deriv[lb][(ip, b)];
                    for (m, &wm) in wp.iter().enumerate() {
                        s[0][m] += ca * cb * wm;
                        s[1][m] += ca * db * wm;
                        s[2][m] += da * cb * wm;
                        s[3][m] += da * db * wm;
                    }
                }
            }
            fill_block(&mut fim, &factors, la, lb, &s, scale);
        }
    }
    ChannelFim { full: fim, num_paths: l }
}

/// Writes the 5x5 block (la, lb) of the channel FIM given the cross sums.
fn fill_block(
    fim: &mut DMatrix<f64>,
    factors: &[PathFactors],
    la: usize,
    lb: usize,
    s: &[[Complex64; 3]; 4],
    scale: f64,
) {
    for (ta, &ka) in PARAM_KINDS.iter().enumerate() {
        for (tb, &kb) in PARAM_KINDS.iter().enumerate() {
            let xy = match (ka.uses_tx_derivative(), kb.uses_tx_derivative()) {
                (false, false) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (true, true) => 3,
            };
            let m = ka.omega_power() + kb.omega_power();
            let pref = ka.prefactor(factors[la].gain).conj() * kb.prefactor(factors[lb].gain);
            let u = rx_inner(&factors[la], ka, &factors[lb], kb);
            fim[(PARAMS_PER_PATH * la + ta, PARAMS_PER_PATH * lb + tb)] =
                scale * (u * pref * s[xy][m]).re;
        }
    }
}

/// Per-beam channel-space FIM components: `J_channel(q) = sum_k q_k J_k`
/// for a reference built on the system's grid/codebook at full budget.
pub fn per_beam_channel_fims(sys: &SystemModel, ch: &ChannelParams) -> Vec<DMatrix<f64>> {
    let l = ch.num_paths();
    let omegas = sys.grid.angular_frequencies();
    let factors = path_factors(&sys.tx_array, &sys.rx_array, &omegas, ch);
    let scale = 2.0 / sys.noise_var_mw;
    let n_p = sys.grid.num_subcarriers();

    // Beam gains per path: beta[k][l] = a_T(aod_l)^T f_k (and derivative).
    let num_beams = sys.codebook.num_beams();
    let mut beta = vec![vec![Complex64::default(); l]; num_beams];
    let mut beta_d = vec![vec![Complex64::default(); l]; num_beams];
    for (k, f) in sys.codebook.beams.iter().enumerate() {
        for (pl, fac) in factors.iter().enumerate() {
            beta[k][pl] = fac.a_t.iter().zip(f.iter()).map(|(a, v)| a * v).sum();
            beta_d[k][pl] = fac.da_t.iter().zip(f.iter()).map(|(a, v)| a * v).sum();
        }
    }

    // Relative delay phasors per path pair and subcarrier.
    let mut rel = vec![vec![Complex64::default(); n_p]; l * l];
    for la in 0..l {
        for lb in 0..l {
            for ip in 0..n_p {
                rel[la * l + lb][ip] = factors[la].phasor[ip].conj() * factors[lb].phasor[ip];
            }
        }
    }

    (0..num_beams)
        .map(|k| {
            let w = sys.grid.beam_subcarrier_gamma(k);
            let mut fim = DMatrix::zeros(PARAMS_PER_PATH * l, PARAMS_PER_PATH * l);
            for la in 0..l {
                for lb in 0..l {
                    // Phase sums sum_p P_tot w_k[p] e^{i w_p (tau_a - tau_b)} w_p^m.
                    let mut p_m = [Complex64::default(); 3];
                    for ip in 0..n_p {
                        if w[ip] == 0.0 {
                            continue;
                        }
                        let ph = rel[la * l + lb][ip] * (sys.total_power_mw * w[ip]);
                        let om = omegas[ip];
                        p_m[0] += ph;
                        p_m[1] += ph * om;
                        p_m[2] += ph * om * om;
                    }
                    // Cross sums with the beam-gain factors attached.
                    let bb = beta[k][la].conj() * beta[k][lb];
                    let bd = beta[k][la].conj() * beta_d[k][lb];
                    let db = beta_d[k][la].conj() * beta[k][lb];
                    let dd = beta_d[k][la].conj() * beta_d[k][lb];
                    let s = [
                        [p_m[0] * bb, p_m[1] * bb, p_m[2] * bb],
                        [p_m[0] * bd, p_m[1] * bd, p_m[2] * bd],
                        [p_m[0] * db, p_m[1] * db, p_m[2] * db],
                        [p_m[0] * dd, p_m[1] * dd, p_m[2] * dd],
                    ];
                    fill_block(&mut fim, &factors, la, lb, &s, scale);
                }
            }
            fim
        })
        .collect()
}

/// Chain-rule matrix from channel to position parameters: `5L x (4L+2)`.
/// Delay/AOD/AOA rows come from the geometry Jacobian, gain rows select the
/// gain entries of the position vector.
pub fn chain_to_position(nu: &PositionParams) -> Result<DMatrix<f64>, FisherError> {
    let geo = pos_to_channel_jacobian(nu)?;
    let l = nu.num_paths();
    let dim = 4 * l + 2;
    let mut t = DMatrix::zeros(PARAMS_PER_PATH * l, dim);
    for p in 0..l {
        for row in 0..3 {
            t.row_mut(PARAMS_PER_PATH * p + row)
                .copy_from(&geo.row(3 * p + row));
        }
        let (mag_col, phase_col) = if p == 0 { (4, 5) } else { (6 + 4 * (p - 1) + 2, 6 + 4 * (p - 1) + 3) };
        t[(PARAMS_PER_PATH * p + 3, mag_col)] = 1.0;
        t[(PARAMS_PER_PATH * p + 4, phase_col)] = 1.0;
    }
    Ok(t)
}

/// Observation FIM over the position parameters (no prior term).
pub fn observation_fim(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    x: &ReferenceSignal,
    nu: &PositionParams,
    noise_var_mw: f64,
) -> Result<DMatrix<f64>, FisherError> {
    let ch = pos_to_channel(nu)?;
    let inner = channel_fim(tx, rx, x, &ch, noise_var_mw);
    let t = chain_to_position(nu)?;
    let mut j = t.transpose() * inner.full * t;
    for r in 0..j.nrows() {
        for c in (r + 1)..j.ncols() {
            let v = 0.5 * (j[(r, c)] + j[(c, r)]);
            j[(r, c)] = v;
            j[(c, r)] = v;
        }
    }
    Ok(j)
}

/// Per-beam position-space FIM components for a given geometry.
pub fn per_beam_position_fims(
    sys: &SystemModel,
    nu: &PositionParams,
) -> Result<Vec<DMatrix<f64>>, FisherError> {
    let ch = pos_to_channel(nu)?;
    let t = chain_to_position(nu)?;
    Ok(per_beam_channel_fims(sys, &ch)
        .into_iter()
        .map(|f| {
            let mut j = t.transpose() * f * &t;
            for r in 0..j.nrows() {
                for c in (r + 1)..j.ncols() {
                    let v = 0.5 * (j[(r, c)] + j[(c, r)]);
                    j[(r, c)] = v;
                    j[(c, r)] = v;
                }
            }
            j
        })
        .collect())
}

/// Adds the clock prior to an observation FIM. `sigma_clk = +inf` models the
/// fully asynchronous case (no prior information).
pub fn hybrid_fim(j_obs: &DMatrix<f64>, sigma_clk: f64) -> Result<HybridFim, FisherError> {
    if !(sigma_clk > 0.0) {
        return Err(FisherError::BadSigmaClk(sigma_clk));
    }
    let mut m = j_obs.clone();
    if sigma_clk.is_finite() {
        m[(CLOCK_INDEX, CLOCK_INDEX)] += 1.0 / (sigma_clk * sigma_clk);
    }
    Ok(HybridFim { matrix: m })
}

/// SPEB: trace of the leading 2x2 block of the inverse hybrid FIM, by full
/// symmetric solve (diagonally equilibrated; see [`invert_spd`]).
pub fn speb(j: &HybridFim) -> Result<SpebValue, FisherError> {
    let inv = invert_spd(&j.matrix)?;
    let s = inv[(0, 0)] + inv[(1, 1)];
    if !(s > 0.0) {
        return Err(FisherError::Singular { cond: f64::INFINITY });
    }
    Ok(SpebValue { speb: s, peb: s.sqrt() })
}

/// SPEB for allocation `q` at one geometry.
pub fn speb_for_allocation(
    sys: &SystemModel,
    q: &DVector<f64>,
    nu: &PositionParams,
    sigma_clk: f64,
) -> Result<SpebValue, FisherError> {
    let x = sys
        .reference(q)
        .map_err(|e| FisherError::Singular { cond: { let _ = e; f64::INFINITY } });
    let x = match x {
        Ok(x) => x,
        Err(_) => {
            return Err(FisherError::Singular { cond: f64::INFINITY });
        }
    };
    let j = observation_fim(&sys.tx_array, &sys.rx_array, &x, nu, sys.noise_var_mw)?;
    speb(&hybrid_fim(&j, sigma_clk)?)
}

/// Result of a sampled expected-SPEB evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EspebEstimate {
    pub mean_speb: f64,
    pub mean_peb: f64,
    /// Draws rejected for degenerate geometry and redrawn.
    pub resampled: usize,
}

/// Mean SPEB over draws from a geometry prior. Degenerate draws are
/// resampled (and counted); other failures propagate.
pub fn espeb_sample<R: Rng, F: FnMut(&mut R) -> PositionParams>(
    sys: &SystemModel,
    q: &DVector<f64>,
    mut draw: F,
    n_samples: usize,
    rng: &mut R,
    sigma_clk: f64,
) -> Result<EspebEstimate, FisherError> {
    let x = sys.reference(q).map_err(|_| FisherError::Singular { cond: f64::INFINITY })?;
    let mut sum_speb = 0.0;
    let mut sum_peb = 0.0;
    let mut resampled = 0usize;
    let mut accepted = 0usize;
    while accepted < n_samples {
        let nu = draw(rng);
        match observation_fim(&sys.tx_array, &sys.rx_array, &x, &nu, sys.noise_var_mw) {
            Ok(j) => {
                let s = speb(&hybrid_fim(&j, sigma_clk)?)?;
                sum_speb += s.speb;
                sum_peb += s.peb;
                accepted += 1;
            }
            Err(FisherError::Geometry(_)) => {
                resampled += 1;
                if resampled > 100 + 10 * n_samples {
                    return Err(FisherError::DegeneratePrior(resampled));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EspebEstimate {
        mean_speb: sum_speb / n_samples as f64,
        mean_peb: sum_peb / n_samples as f64,
        resampled,
    })
}

/// Mean SPEB over explicit weighted points (cubature form).
pub fn espeb_points(
    sys: &SystemModel,
    q: &DVector<f64>,
    points: &[(PositionParams, f64)],
    sigma_clk: f64,
) -> Result<f64, FisherError> {
    let x = sys.reference(q).map_err(|_| FisherError::Singular { cond: f64::INFINITY })?;
    let mut acc = 0.0;
    for (nu, w) in points {
        let j = observation_fim(&sys.tx_array, &sys.rx_array, &x, nu, sys.noise_var_mw)?;
        acc += w * speb(&hybrid_fim(&j, sigma_clk)?)?.speb;
    }
    Ok(acc)
}
