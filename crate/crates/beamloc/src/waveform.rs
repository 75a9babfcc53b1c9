//! OFDM reference signals on a beam codebook.
//!
//! A reference signal spans `N_B` OFDM symbols on the subcarrier set `P`.
//! Each codebook beam `f_k` owns a disjoint set `R_k` of resource elements
//! (subcarrier, symbol); the symbol placed on beam `k` at RE `(p, b)` is
//! `sqrt(P_tot q_k gamma_k[p,b]) e^{i beta} f_k`. The atom `C(tau, aod, aoa)`
//! collects the per-RE responses `a_R a_T^T x[p,b] e^{-i w_p tau}` into one
//! stacked matrix, so the noiseless observation is `sum_l h_l C_l`.
//!
//! Powers are milliwatts; all spectral phases default to zero (the Fisher
//! information is independent of them, and zero keeps runs reproducible).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{steering_vector, ArrayGeometry, ChannelParams};

/// Upper delay-grid limit in seconds, standing in for the cyclic-prefix
/// length: covers the longest scenario path (~320 ns) plus 3 sigma of clock
/// offset (~48 ns) with margin.
pub const TAU_MAX_S: f64 = 450e-9;

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("beam {0} has an empty resource-element set")]
    EmptyBeamResources(usize),
    #[error("allocation entry {index} is negative ({value})")]
    NegativeAllocation { index: usize, value: f64 },
    #[error("allocation sums to {0}, above the unit budget")]
    PowerBudgetExceeded(f64),
    #[error("allocation has {got} entries, codebook has {expected} beams")]
    AllocationLength { got: usize, expected: usize },
    #[error("codebook beam length {got} does not match the {expected}-element array")]
    BeamLength { got: usize, expected: usize },
    #[error("noise variance must be positive, got {0}")]
    BadNoiseVariance(f64),
}

/// Time-frequency resource grid with per-beam RE ownership.
#[derive(Debug, Clone)]
pub struct ResourceGrid {
    /// Subcarrier indices `P` (sorted, e.g. -31..-1, 1..31).
    pub subcarriers: Vec<i32>,
    /// Number of OFDM symbols `N_B`.
    pub num_symbols: usize,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing: f64,
    /// Per beam: owned REs as (subcarrier position in `subcarriers`, symbol).
    pub beam_res: Vec<Vec<(usize, usize)>>,
    /// Per beam: power fraction per owned RE, aligned with `beam_res`.
    pub gamma: Vec<Vec<f64>>,
}

impl ResourceGrid {
    pub fn num_subcarriers(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn num_beams(&self) -> usize {
        self.beam_res.len()
    }

    pub fn total_res(&self) -> usize {
        self.beam_res.iter().map(Vec::len).sum()
    }

    /// Angular frequency `w_p = 2 pi p df` per subcarrier position.
    pub fn angular_frequencies(&self) -> Vec<f64> {
        self.subcarriers
            .iter()
            .map(|&p| 2.0 * std::f64::consts::PI * p as f64 * self.subcarrier_spacing)
            .collect()
    }

    /// Sums `gamma_k` per subcarrier position: `sum_b gamma_k[p, b]`.
    /// This is all the Fisher information needs of the RE layout.
    pub fn beam_subcarrier_gamma(&self, k: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.num_subcarriers()];
        for ((ip, _b), w) in self.beam_res[k].iter().zip(&self.gamma[k]) {
            g[*ip] += w;
        }
        g
    }
}

/// Unit-norm Tx beamforming vectors.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub beams: Vec<DVector<Complex64>>,
}

impl Codebook {
    pub fn num_beams(&self) -> usize {
        self.beams.len()
    }

    pub fn beam_len(&self) -> usize {
        self.beams.first().map_or(0, |b| b.len())
    }
}

/// DFT codebook: beam `k`, entry `n` is `exp(-i 2 pi n k / N_T) / sqrt(N_T)`
/// (normalized so every beam has unit norm).
pub fn dft_codebook(num_antennas: usize) -> Codebook {
    assert!(num_antennas >= 1);
    let n = num_antennas as f64;
    let scale = 1.0 / n.sqrt();
    let beams = (0..num_antennas)
        .map(|k| {
            DVector::from_iterator(
                num_antennas,
                (0..num_antennas).map(|j| {
                    Complex64::from_polar(
                        scale,
                        -2.0 * std::f64::consts::PI * (j * k) as f64 / n,
                    )
                }),
            )
        })
        .collect();
    Codebook { beams }
}

/// Interleaved-staggered RE map: beam `k` owns `(p, b)` when
/// `(p - b) mod M_T == k`, power uniform within each beam's set.
pub fn interleaved_staggered_map(
    subcarriers: &[i32],
    num_symbols: usize,
    num_beams: usize,
    subcarrier_spacing: f64,
) -> Result<ResourceGrid, WaveformError> {
    let mut subcarriers = subcarriers.to_vec();
    subcarriers.sort_unstable();
    subcarriers.dedup();
    let m = num_beams as i32;
    let mut beam_res = vec![Vec::new(); num_beams];
    for (ip, &p) in subcarriers.iter().enumerate() {
        for b in 0..num_symbols {
            let k = (p - b as i32).rem_euclid(m) as usize;
            beam_res[k].push((ip, b));
        }
    }
    let mut gamma = Vec::with_capacity(num_beams);
    for (k, res) in beam_res.iter().enumerate() {
        if res.is_empty() {
            return Err(WaveformError::EmptyBeamResources(k));
        }
        gamma.push(vec![1.0 / res.len() as f64; res.len()]);
    }
    Ok(ResourceGrid {
        subcarriers,
        num_symbols,
        subcarrier_spacing,
        beam_res,
        gamma,
    })
}

/// A fully built reference signal: per-symbol transmit matrices plus the
/// allocation that produced them.
#[derive(Debug, Clone)]
pub struct ReferenceSignal {
    pub grid: ResourceGrid,
    pub codebook: Codebook,
    /// `X_b`, one `N_T x N_P` matrix per OFDM symbol.
    pub symbols: Vec<DMatrix<Complex64>>,
    /// Total transmit power budget in mW.
    pub total_power_mw: f64,
    /// Beam power fractions `q`.
    pub allocation: DVector<f64>,
}

impl ReferenceSignal {
    pub fn num_tx(&self) -> usize {
        self.codebook.beam_len()
    }

    /// Transmit energy actually placed on the grid (mW summed over REs).
    pub fn total_energy(&self) -> f64 {
        self.symbols
            .iter()
            .map(|x| x.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// Builds the transmit matrices for allocation `q`. `beta` optionally gives
/// a spectral phase per (subcarrier position, symbol); zero when absent.
pub fn build_reference(
    q: &DVector<f64>,
    grid: &ResourceGrid,
    codebook: &Codebook,
    total_power_mw: f64,
    beta: Option<&DMatrix<f64>>,
) -> Result<ReferenceSignal, WaveformError> {
    if q.len() != codebook.num_beams() || q.len() != grid.num_beams() {
        return Err(WaveformError::AllocationLength {
            got: q.len(),
            expected: codebook.num_beams(),
        });
    }
    for (index, &value) in q.iter().enumerate() {
        if value < 0.0 {
            return Err(WaveformError::NegativeAllocation { index, value });
        }
    }
    let total: f64 = q.sum();
    if total > 1.0 + 1e-9 {
        return Err(WaveformError::PowerBudgetExceeded(total));
    }
    let n_t = codebook.beam_len();
    let n_p = grid.num_subcarriers();
    let mut symbols = vec![DMatrix::<Complex64>::zeros(n_t, n_p); grid.num_symbols];
    for k in 0..grid.num_beams() {
        if q[k] == 0.0 {
            continue;
        }
        for ((ip, b), g) in grid.beam_res[k].iter().zip(&grid.gamma[k]) {
            let amp = (total_power_mw * q[k] * g).sqrt();
            let phase = beta.map_or(0.0, |m| m[(*ip, *b)]);
            let lambda = Complex64::from_polar(amp, phase);
            let mut col = symbols[*b].column_mut(*ip);
            for (dst, src) in col.iter_mut().zip(codebook.beams[k].iter()) {
                *dst = lambda * src;
            }
        }
    }
    Ok(ReferenceSignal {
        grid: grid.clone(),
        codebook: codebook.clone(),
        symbols,
        total_power_mw,
        allocation: q.clone(),
    })
}

/// Atom matrix `C(tau, aod, aoa)`: per symbol `C_b = a_R a_T^T X_b
/// diag(a_tau)`, stacked over symbols into `N_B N_R x N_P`.
pub fn atom(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    x: &ReferenceSignal,
    tau: f64,
    aod: f64,
    aoa: f64,
) -> DMatrix<Complex64> {
    let a_t = steering_vector(tx, aod);
    let a_r = steering_vector(rx, aoa);
    let omega = x.grid.angular_frequencies();
    let n_r = rx.len();
    let n_p = x.grid.num_subcarriers();
    let n_b = x.grid.num_symbols;
    let mut c = DMatrix::zeros(n_b * n_r, n_p);
    for (b, xb) in x.symbols.iter().enumerate() {
        // Row vector a_T^T X_b, then the delay phase per subcarrier.
        for ip in 0..n_p {
            let g: Complex64 = a_t
                .iter()
                .zip(xb.column(ip).iter())
                .map(|(a, v)| a * v)
                .sum();
            let v = g * Complex64::from_polar(1.0, -omega[ip] * tau);
            for i in 0..n_r {
                c[(b * n_r + i, ip)] = a_r[i] * v;
            }
        }
    }
    c
}

/// Noiseless observation `sum_l h_l C_l` for the given channel.
pub fn noiseless_observation(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    x: &ReferenceSignal,
    ch: &ChannelParams,
) -> DMatrix<Complex64> {
    let n_r = rx.len();
    let mut y = DMatrix::zeros(x.grid.num_symbols * n_r, x.grid.num_subcarriers());
    for path in &ch.paths {
        let c = atom(tx, rx, x, path.delay, path.aod, path.aoa);
        y += c * path.gain;
    }
    y
}

/// Observed signal: noiseless response plus i.i.d. circular complex Gaussian
/// noise with per-entry variance `noise_var_mw`.
pub fn synthesize_received<R: Rng>(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    x: &ReferenceSignal,
    ch: &ChannelParams,
    noise_var_mw: f64,
    rng: &mut R,
) -> Result<DMatrix<Complex64>, WaveformError> {
    if !(noise_var_mw > 0.0) {
        return Err(WaveformError::BadNoiseVariance(noise_var_mw));
    }
    let mut y = noiseless_observation(tx, rx, x, ch);
    let s = (noise_var_mw / 2.0).sqrt();
    for v in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(s * re, s * im);
    }
    Ok(y)
}

/// The subcarrier set of the evaluation scenario: -31..-1 and 1..31.
pub fn symmetric_subcarriers(half: i32) -> Vec<i32> {
    (-half..=half).filter(|&p| p != 0).collect()
}

/// Everything fixed about the radio link: arrays, grid, codebook, power
/// budget and noise level. Allocation strategies and estimators only vary
/// the beam power fractions on top of this.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub tx_array: ArrayGeometry,
    pub rx_array: ArrayGeometry,
    pub grid: ResourceGrid,
    pub codebook: Codebook,
    /// Total transmit power budget in mW.
    pub total_power_mw: f64,
    /// Per-entry noise variance in mW.
    pub noise_var_mw: f64,
}

impl SystemModel {
    pub fn num_beams(&self) -> usize {
        self.codebook.num_beams()
    }

    /// Builds the reference signal for allocation `q` (zero spectral phases).
    pub fn reference(&self, q: &DVector<f64>) -> Result<ReferenceSignal, WaveformError> {
        build_reference(q, &self.grid, &self.codebook, self.total_power_mw, None)
    }

    /// Uniform allocation over all beams.
    pub fn uniform_allocation(&self) -> DVector<f64> {
        DVector::from_element(self.num_beams(), 1.0 / self.num_beams() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GainPolar, PathParams};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const FC: f64 = 38e9;

    fn small_setup() -> (ArrayGeometry, ArrayGeometry, ResourceGrid, Codebook) {
        let tx = ArrayGeometry::ula(8, FC).unwrap();
        let rx = ArrayGeometry::uca(4, FC).unwrap();
        let grid =
            interleaved_staggered_map(&symmetric_subcarriers(7), 3, 8, 1.935e6).unwrap();
        let cb = dft_codebook(8);
        (tx, rx, grid, cb)
    }

    fn uniform_q(m: usize) -> DVector<f64> {
        DVector::from_element(m, 1.0 / m as f64)
    }

    #[test]
    fn dft_codebook_orthonormal() {
        let cb = dft_codebook(32);
        assert_eq!(cb.num_beams(), 32);
        for k in 0..32 {
            assert!((cb.beams[k].norm() - 1.0).abs() < 1e-12);
            for k2 in (k + 1)..32 {
                let ip: Complex64 = cb.beams[k]
                    .iter()
                    .zip(cb.beams[k2].iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                assert!(ip.norm() < 1e-12, "beams {k},{k2} overlap {}", ip.norm());
            }
        }
        let single = dft_codebook(1);
        assert_eq!(single.num_beams(), 1);
        assert!((single.beams[0][0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dft_beam_gains_satisfy_parseval() {
        // sum_k |a_T^T f_k|^2 = N_T for any direction.
        let tx = ArrayGeometry::ula(32, FC).unwrap();
        let cb = dft_codebook(32);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let theta = rng.gen_range(-PI..PI);
            let a = steering_vector(&tx, theta);
            let total: f64 = cb
                .beams
                .iter()
                .map(|f| {
                    let g: Complex64 = a.iter().zip(f.iter()).map(|(x, y)| x * y).sum();
                    g.norm_sqr()
                })
                .sum();
            assert!((total - 32.0).abs() < 1e-9, "theta {theta}: {total}");
        }
    }

    #[test]
    fn staggered_map_partitions_grid() {
        let grid =
            interleaved_staggered_map(&symmetric_subcarriers(31), 10, 32, 1.935e6).unwrap();
        assert_eq!(grid.num_subcarriers(), 62);
        assert_eq!(grid.total_res(), 620);
        let mut seen = std::collections::HashSet::new();
        for (k, res) in grid.beam_res.iter().enumerate() {
            assert!(!res.is_empty(), "beam {k} empty");
            let gsum: f64 = grid.gamma[k].iter().sum();
            assert!((gsum - 1.0).abs() < 1e-9);
            for re in res {
                assert!(seen.insert(*re), "duplicate RE {re:?}");
            }
        }
        assert_eq!(seen.len(), 620);
    }

    #[test]
    fn single_beam_map_owns_everything() {
        let grid = interleaved_staggered_map(&symmetric_subcarriers(31), 10, 1, 1.935e6).unwrap();
        assert_eq!(grid.beam_res[0].len(), 620);
    }

    #[test]
    fn reference_energy_accounting() {
        let (_tx, _rx, grid, cb) = small_setup();
        let p_tot = 620.0;
        let x = build_reference(&uniform_q(8), &grid, &cb, p_tot, None).unwrap();
        assert!((x.total_energy() - p_tot).abs() / p_tot < 1e-9);

        // All power on one beam: energy lands on that beam's REs only.
        let mut q = DVector::zeros(8);
        q[1] = 1.0;
        let x1 = build_reference(&q, &grid, &cb, p_tot, None).unwrap();
        assert!((x1.total_energy() - p_tot).abs() / p_tot < 1e-9);
        let owned: std::collections::HashSet<(usize, usize)> =
            grid.beam_res[1].iter().copied().collect();
        for b in 0..grid.num_symbols {
            for ip in 0..grid.num_subcarriers() {
                let e: f64 = x1.symbols[b].column(ip).iter().map(|v| v.norm_sqr()).sum();
                if owned.contains(&(ip, b)) {
                    assert!(e > 0.0);
                } else {
                    assert_eq!(e, 0.0);
                }
            }
        }

        // Negative allocations are rejected.
        let mut bad = uniform_q(8);
        bad[0] = -0.1;
        assert!(matches!(
            build_reference(&bad, &grid, &cb, p_tot, None),
            Err(WaveformError::NegativeAllocation { .. })
        ));
        // Budget overruns are rejected.
        let over = DVector::from_element(8, 0.2);
        assert!(matches!(
            build_reference(&over, &grid, &cb, p_tot, None),
            Err(WaveformError::PowerBudgetExceeded(_))
        ));
    }

    #[test]
    fn per_re_power_of_evaluation_grid() {
        // P_RE = P_tot / (N_B N_P) = 1 mW at P_tot = 620 mW on the 62 x 10 grid.
        let grid = interleaved_staggered_map(&symmetric_subcarriers(31), 10, 32, 1.935e6).unwrap();
        let p_re = 620.0 / (grid.num_symbols as f64 * grid.num_subcarriers() as f64);
        assert_eq!(p_re, 1.0);
    }

    #[test]
    fn atom_zero_delay_and_frobenius_consistency() {
        let (tx, rx, grid, cb) = small_setup();
        let x = build_reference(&uniform_q(8), &grid, &cb, 42.0, None).unwrap();
        let tau = 73e-9;
        let aod = 0.4;
        let aoa = -1.2;
        let c = atom(&tx, &rx, &x, tau, aod, aoa);
        assert_eq!(c.nrows(), grid.num_symbols * rx.len());
        assert_eq!(c.ncols(), grid.num_subcarriers());

        // Frobenius norm two ways: stacked matrix vs per-symbol blocks.
        let direct: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        let mut per_b = 0.0;
        for b in 0..grid.num_symbols {
            let block = c.rows(b * rx.len(), rx.len());
            per_b += block.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        assert!((direct - per_b).abs() <= 1e-12 * direct);

        // Per-RE oracle: trace(C^H C) = sum_{p,b} N_R |a_T^T x[p,b]|^2
        // (the delay phase is unit modulus).
        let a_t = steering_vector(&tx, aod);
        let mut oracle = 0.0;
        for xb in &x.symbols {
            for ip in 0..grid.num_subcarriers() {
                let g: Complex64 = a_t
                    .iter()
                    .zip(xb.column(ip).iter())
                    .map(|(a, v)| a * v)
                    .sum();
                oracle += rx.len() as f64 * g.norm_sqr();
            }
        }
        assert!((direct - oracle).abs() <= 1e-10 * oracle);

        // tau = 0 leaves the delay factor at exactly 1.
        let c0 = atom(&tx, &rx, &x, 0.0, aod, aoa);
        let a_r = steering_vector(&rx, aoa);
        for (b, xb) in x.symbols.iter().enumerate() {
            for ip in 0..grid.num_subcarriers() {
                let g: Complex64 = a_t
                    .iter()
                    .zip(xb.column(ip).iter())
                    .map(|(a, v)| a * v)
                    .sum();
                for i in 0..rx.len() {
                    let expect = a_r[i] * g;
                    assert!((c0[(b * rx.len() + i, ip)] - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn synthesis_noise_statistics_and_determinism() {
        let (tx, rx, grid, cb) = small_setup();
        let x = build_reference(&uniform_q(8), &grid, &cb, 10.0, None).unwrap();
        let ch = ChannelParams {
            paths: vec![PathParams {
                delay: 50e-9,
                aod: 0.3,
                aoa: 1.0,
                gain: GainPolar::new(2e-4, 0.7).to_complex(),
            }],
        };
        // Zero-noise limit: exact single-path reconstruction.
        let y0 = noiseless_observation(&tx, &rx, &x, &ch);
        let c = atom(&tx, &rx, &x, 50e-9, 0.3, 1.0);
        let diff = &y0 - &(c * ch.paths[0].gain);
        assert!(diff.iter().map(|v| v.norm_sqr()).sum::<f64>() < 1e-24);

        // Empirical per-entry variance over >= 1e5 noise samples within 2%.
        let sigma2 = 3.7e-9;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..700 {
            let y = synthesize_received(&tx, &rx, &x, &ch, sigma2, &mut rng).unwrap();
            for (v, m) in y.iter().zip(y0.iter()) {
                acc += (v - m).norm_sqr();
                count += 1;
            }
        }
        let emp = acc / count as f64;
        assert!(count >= 100_000);
        assert!(
            (emp - sigma2).abs() / sigma2 < 0.02,
            "empirical variance {emp:.3e} vs {sigma2:.3e}"
        );

        // Seeded synthesis is bit-reproducible.
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let y1 = synthesize_received(&tx, &rx, &x, &ch, sigma2, &mut r1).unwrap();
        let y2 = synthesize_received(&tx, &rx, &x, &ch, sigma2, &mut r2).unwrap();
        assert_eq!(y1, y2);

        assert!(synthesize_received(&tx, &rx, &x, &ch, 0.0, &mut r1).is_err());
    }

    #[test]
    fn atom_linear_in_reference() {
        let (tx, rx, grid, cb) = small_setup();
        let qa = uniform_q(8);
        let mut qb = DVector::zeros(8);
        qb[2] = 0.5;
        let xa = build_reference(&qa, &grid, &cb, 10.0, None).unwrap();
        let xb = build_reference(&qb, &grid, &cb, 10.0, None).unwrap();
        // Summing the transmit matrices sums the atoms.
        let mut xs = xa.clone();
        for (s, o) in xs.symbols.iter_mut().zip(&xb.symbols) {
            *s += o;
        }
        let ca = atom(&tx, &rx, &xa, 80e-9, 0.2, -0.4);
        let cb_ = atom(&tx, &rx, &xb, 80e-9, 0.2, -0.4);
        let cs = atom(&tx, &rx, &xs, 80e-9, 0.2, -0.4);
        let diff = &cs - &(ca + cb_);
        assert!(diff.iter().map(|v| v.norm_sqr()).sum::<f64>() < 1e-20);
    }
}
