//! Pilot design, the real measurement operator with a cached SVD, AWGN
//! observations, and the few-bit mid-rise quantizer.
//!
//! The complex measurement chain Y = H P + N is handled in its equivalent
//! real form y = A h + n, where h is the `[Re; Im]`-stacked angular-domain
//! channel vector. The operator factorizes as A_ad = (P^T conj(A_T)) kron A_R
//! with unitary DFT factors, so its exact thin SVD follows from the SVD of
//! the small N_p x N_t factor alone; no large decomposition is ever run.

use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::dft_matrix;
use crate::{Error, Result};

/// Pilot constellation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotKind {
    /// I.i.d. symbols from {±1/sqrt(2) ± j/sqrt(2)}.
    QpskRandom,
    /// Cyclic shifts of a Zadoff-Chu root sequence; mutually orthogonal
    /// columns when N_p = N_t.
    ZadoffChu,
}

/// Unit-modulus pilot matrix P of shape N_t x N_p.
#[derive(Debug, Clone)]
pub struct PilotMatrix {
    pub symbols: Array2<Complex64>,
    pub kind: PilotKind,
}

impl PilotMatrix {
    pub fn n_tx(&self) -> usize {
        self.symbols.nrows()
    }

    pub fn n_pilot(&self) -> usize {
        self.symbols.ncols()
    }
}

/// Draws a pilot matrix.
///
/// The Zadoff-Chu variant uses root index 1 (coprime with every length) and
/// maps pilot p to the cyclic shift by p of the root sequence, which needs
/// N_p <= N_t distinct shifts.
pub fn make_pilots(
    kind: PilotKind,
    n_tx: usize,
    n_pilot: usize,
    rng: &mut impl Rng,
) -> Result<PilotMatrix> {
    assert!(n_tx >= 1 && n_pilot >= 1, "pilot dims must be positive");
    let symbols = match kind {
        PilotKind::QpskRandom => {
            let a = std::f64::consts::FRAC_1_SQRT_2;
            Array2::from_shape_fn((n_tx, n_pilot), |_| {
                let re = if rng.random::<bool>() { a } else { -a };
                let im = if rng.random::<bool>() { a } else { -a };
                Complex64::new(re, im)
            })
        }
        PilotKind::ZadoffChu => {
            if n_pilot > n_tx {
                return Err(Error::PilotShiftsExhausted { n_pilot, n_tx });
            }
            let n = n_tx as f64;
            let root: Vec<Complex64> = (0..n_tx)
                .map(|k| {
                    let kf = k as f64;
                    let phase = if n_tx % 2 == 0 {
                        -std::f64::consts::PI * kf * kf / n
                    } else {
                        -std::f64::consts::PI * kf * (kf + 1.0) / n
                    };
                    Complex64::from_polar(1.0, phase)
                })
                .collect();
            Array2::from_shape_fn((n_tx, n_pilot), |(k, p)| root[(k + p) % n_tx])
        }
    };
    Ok(PilotMatrix { symbols, kind })
}

/// Thin SVD factors of the real measurement matrix, A = U diag(s) V^T.
///
/// Contiguous transposes of both factor matrices are kept alongside so the
/// per-step products U^T y and V^T h stream through memory instead of
/// striding down columns.
#[derive(Debug, Clone)]
pub struct MeasurementSvd {
    /// M x R with orthonormal columns.
    pub u: Array2<f64>,
    /// R singular values, nonnegative, sorted descending.
    pub s: Array1<f64>,
    /// N x R with orthonormal columns.
    pub v: Array2<f64>,
    u_t: Array2<f64>,
    v_t: Array2<f64>,
}

impl MeasurementSvd {
    pub fn new(u: Array2<f64>, s: Array1<f64>, v: Array2<f64>) -> Self {
        let u_t = u.t().as_standard_layout().to_owned();
        let v_t = v.t().as_standard_layout().to_owned();
        Self { u, s, v, u_t, v_t }
    }

    /// U^T y
    pub fn ut_dot(&self, y: &Array1<f64>) -> Array1<f64> {
        self.u_t.dot(y)
    }

    /// V^T h
    pub fn vt_dot(&self, h: &Array1<f64>) -> Array1<f64> {
        self.v_t.dot(h)
    }

    /// Thin SVD of an arbitrary real matrix, sorted descending. Used for
    /// unstructured operators in tests and baselines; pilot-built models get
    /// their factors from the Kronecker structure instead.
    pub fn from_matrix(a: &Array2<f64>) -> Self {
        let (m, n) = a.dim();
        let dense = DMatrix::from_fn(m, n, |i, j| a[[i, j]]);
        let svd = dense.svd(true, true);
        let u_na = svd.u.expect("u requested");
        let v_t_na = svd.v_t.expect("v_t requested");
        let r = svd.singular_values.len();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&x, &y| {
            svd.singular_values[y]
                .partial_cmp(&svd.singular_values[x])
                .unwrap()
                .then(x.cmp(&y))
        });
        let mut u = Array2::<f64>::zeros((m, r));
        let mut v = Array2::<f64>::zeros((n, r));
        let mut s = Array1::<f64>::zeros(r);
        for (slot, &k) in order.iter().enumerate() {
            s[slot] = svd.singular_values[k];
            for i in 0..m {
                u[[i, slot]] = u_na[(i, k)];
            }
            for j in 0..n {
                v[[j, slot]] = v_t_na[(k, j)];
            }
        }
        Self::new(u, s, v)
    }
}

/// Real measurement operator y = A h + n with cached SVD and pilot context.
#[derive(Debug)]
pub struct MeasurementModel {
    /// M x N real matrix.
    pub a: Array2<f64>,
    pub svd: MeasurementSvd,
    /// Noise variance per real component.
    pub noise_var: f64,
    pub pilot: PilotMatrix,
    pub n_rx: usize,
    row_norms_sq: Array1<f64>,
    gram: OnceLock<Array2<f64>>,
    svd_f32: OnceLock<SvdF32>,
}

/// Single-precision mirror of the SVD factors; the reverse chain's
/// per-step likelihood products are memory-bound, so halving the bytes
/// roughly halves the step cost at large antenna counts.
#[derive(Debug, Clone)]
pub struct SvdF32 {
    pub u_t: Array2<f32>,
    pub v_t: Array2<f32>,
    pub v: Array2<f32>,
    pub s: Array1<f32>,
}

impl MeasurementModel {
    /// Assembles A from the pilot matrix and DFT bases, and derives its thin
    /// SVD from the SVD of B = P^T conj(A_T) through the Kronecker and
    /// real-embedding structure.
    pub fn build(pilot: PilotMatrix, n_rx: usize, noise_var: f64) -> Self {
        let n_tx = pilot.n_tx();
        let n_pilot = pilot.n_pilot();
        let a_t = dft_matrix(n_tx);
        let a_r = dft_matrix(n_rx);

        // B = P^T conj(A_T), N_p x N_t
        let b_mat = pilot.symbols.t().dot(&a_t.mapv(|z| z.conj()));

        let m = 2 * n_rx * n_pilot;
        let n = 2 * n_rx * n_tx;
        let half_m = n_rx * n_pilot;
        let half_n = n_rx * n_tx;

        // A = [[Re A_ad, -Im A_ad], [Im A_ad, Re A_ad]] with
        // A_ad[p n_rx + i, q n_rx + r] = B[p, q] A_R[i, r]
        let mut a = Array2::<f64>::zeros((m, n));
        for p in 0..n_pilot {
            for i in 0..n_rx {
                let row = p * n_rx + i;
                for q in 0..n_tx {
                    let bq = b_mat[[p, q]];
                    for r in 0..n_rx {
                        let col = q * n_rx + r;
                        let z = bq * a_r[[i, r]];
                        a[[row, col]] = z.re;
                        a[[row, half_n + col]] = -z.im;
                        a[[half_m + row, col]] = z.im;
                        a[[half_m + row, half_n + col]] = z.re;
                    }
                }
            }
        }

        let svd = kron_real_svd(&b_mat, &a_r, n_rx, n_pilot, n_tx);

        let row_norms_sq = Array1::from_iter(a.rows().into_iter().map(|r| r.dot(&r)));

        Self {
            a,
            svd,
            noise_var,
            pilot,
            n_rx,
            row_norms_sq,
            gram: OnceLock::new(),
            svd_f32: OnceLock::new(),
        }
    }

    pub fn n_tx(&self) -> usize {
        self.pilot.n_tx()
    }

    pub fn dim_measurement(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim_channel(&self) -> usize {
        self.a.ncols()
    }

    /// Cached squared row norms ||a_m||^2.
    pub fn row_norms_sq(&self) -> &Array1<f64> {
        &self.row_norms_sq
    }

    /// Lazily cached Gram matrix A A^T used by the direct likelihood path.
    pub fn gram(&self) -> &Array2<f64> {
        self.gram.get_or_init(|| self.a.dot(&self.a.t()))
    }

    /// Lazily cached single-precision SVD factors for the sampler hot path.
    pub fn svd_f32(&self) -> &SvdF32 {
        self.svd_f32.get_or_init(|| SvdF32 {
            u_t: self.svd.u_t.mapv(|x| x as f32),
            v_t: self.svd.v_t.mapv(|x| x as f32),
            v: self.svd.v.mapv(|x| x as f32),
            s: self.svd.s.mapv(|x| x as f32),
        })
    }

    /// Draws y = A h + n with n ~ N(0, noise_var I).
    pub fn observe(&self, h: &Array1<f64>, rng: &mut impl Rng) -> Observation {
        assert_eq!(h.len(), self.dim_channel(), "channel vector length");
        let mut y = self.a.dot(h);
        if self.noise_var > 0.0 {
            let sigma = self.noise_var.sqrt();
            for v in y.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *v += sigma * e;
            }
        }
        Observation {
            y,
            kind: ObservationKind::Full,
            noise_var: self.noise_var,
        }
    }
}

fn kron_real_svd(
    b_mat: &Array2<Complex64>,
    a_r: &Array2<Complex64>,
    n_rx: usize,
    n_pilot: usize,
    n_tx: usize,
) -> MeasurementSvd {
    // complex SVD of the small factor B
    let b_na = DMatrix::from_fn(n_pilot, n_tx, |i, j| {
        Complex::new(b_mat[[i, j]].re, b_mat[[i, j]].im)
    });
    let svd_b = b_na.svd(true, true);
    let u_b = svd_b.u.expect("u requested");
    let v_b_t = svd_b.v_t.expect("v_t requested");
    let k_b = svd_b.singular_values.len();

    let m = 2 * n_rx * n_pilot;
    let n = 2 * n_rx * n_tx;
    let half_m = n_rx * n_pilot;
    let half_n = n_rx * n_tx;
    let rank = 2 * n_rx * k_b;

    // each complex triple (u_B[:,kb] ⊗ a_R[:,r], s_kb, v_B[:,kb] ⊗ e_r)
    // yields two real columns through the [[Re,-Im],[Im,Re]] embedding
    let mut order: Vec<(usize, usize)> = (0..k_b)
        .flat_map(|kb| (0..n_rx).map(move |r| (kb, r)))
        .collect();
    order.sort_by(|x, y| {
        let sx = svd_b.singular_values[x.0];
        let sy = svd_b.singular_values[y.0];
        sy.partial_cmp(&sx).unwrap().then(x.cmp(y))
    });

    let mut u = Array2::<f64>::zeros((m, rank));
    let mut v = Array2::<f64>::zeros((n, rank));
    let mut s = Array1::<f64>::zeros(rank);

    for (slot, &(kb, r)) in order.iter().enumerate() {
        let sigma = svd_b.singular_values[kb];
        let (c0, c1) = (2 * slot, 2 * slot + 1);
        s[c0] = sigma;
        s[c1] = sigma;
        for p in 0..n_pilot {
            for i in 0..n_rx {
                let row = p * n_rx + i;
                let ub = u_b[(p, kb)];
                let z = Complex64::new(ub.re, ub.im) * a_r[[i, r]];
                u[[row, c0]] = z.re;
                u[[half_m + row, c0]] = z.im;
                u[[row, c1]] = -z.im;
                u[[half_m + row, c1]] = z.re;
            }
        }
        for q in 0..n_tx {
            // v_t row kb holds conj(V[:, kb])
            let vb = v_b_t[(kb, q)].conj();
            let z = Complex64::new(vb.re, vb.im);
            let col = q * n_rx + r;
            v[[col, c0]] = z.re;
            v[[half_n + col, c0]] = z.im;
            v[[col, c1]] = -z.im;
            v[[half_n + col, c1]] = z.re;
        }
    }

    MeasurementSvd::new(u, s, v)
}

/// A received pilot observation, raw or quantized.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Length-M real vector; codewords when `kind` is quantized.
    pub y: Array1<f64>,
    pub kind: ObservationKind,
    /// Noise variance per real component at the receiver.
    pub noise_var: f64,
}

#[derive(Debug, Clone)]
pub enum ObservationKind {
    Full,
    Quantized(Quantizer),
}

impl Observation {
    pub fn is_quantized(&self) -> bool {
        matches!(self.kind, ObservationKind::Quantized(_))
    }

    /// Passes the observation through a few-bit ADC.
    pub fn quantize(&self, quantizer: &Quantizer) -> Observation {
        Observation {
            y: quantizer.quantize_vec(&self.y),
            kind: ObservationKind::Quantized(quantizer.clone()),
            noise_var: self.noise_var,
        }
    }
}

/// Step sizes minimizing E[(z - Q(z))^2] for z ~ N(0, 1) and a uniform
/// mid-rise quantizer with 2^b levels, b = 1..=8. Computed offline by
/// minimizing the closed-form quantization MSE; re-derived in tests.
pub const DELTA_B: [f64; 8] = [
    1.595_769_129_8,
    0.995_686_695_6,
    0.586_019_419_4,
    0.335_200_601_8,
    0.188_138_794_2,
    0.104_063_005_8,
    0.056_867_678_2,
    0.030_762_391_0,
];

/// Uniform mid-rise scalar quantizer with codewords
/// r_k = (2k - 2^b - 1) delta / 2 and unbounded outer cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    bits: u32,
    pub step: f64,
    codewords: Vec<f64>,
}

impl Quantizer {
    /// Builds the quantizer with the power-matched step
    /// delta = sqrt(P_y / 2) * delta_b, where `received_power` is the mean
    /// received power per complex sample (so P_y / 2 is the variance seen
    /// per real component).
    pub fn design(bits: u32, received_power: f64) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::UnsupportedBitDepth(bits));
        }
        assert!(received_power > 0.0, "received power must be positive");
        let step = (received_power / 2.0).sqrt() * DELTA_B[bits as usize - 1];
        Self::with_step(bits, step)
    }

    /// Builds the quantizer from an explicit step size.
    pub fn with_step(bits: u32, step: f64) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::UnsupportedBitDepth(bits));
        }
        assert!(step > 0.0, "step must be positive");
        let levels = 1usize << bits;
        let codewords = (0..levels)
            .map(|k0| (2.0 * k0 as f64 + 1.0 - levels as f64) * step / 2.0)
            .collect();
        Ok(Self {
            bits,
            step,
            codewords,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn codewords(&self) -> &[f64] {
        &self.codewords
    }

    fn levels(&self) -> usize {
        1 << self.bits
    }

    fn cell_index(&self, z: f64) -> usize {
        let raw = (z / self.step + self.levels() as f64 / 2.0).floor();
        raw.clamp(0.0, (self.levels() - 1) as f64) as usize
    }

    fn cell_bounds(&self, k0: usize) -> (f64, f64) {
        let half = self.levels() as f64 / 2.0;
        let low = if k0 == 0 {
            f64::NEG_INFINITY
        } else {
            (k0 as f64 - half) * self.step
        };
        let up = if k0 == self.levels() - 1 {
            f64::INFINITY
        } else {
            (k0 as f64 + 1.0 - half) * self.step
        };
        (low, up)
    }

    /// Element-wise codeword assignment.
    pub fn quantize(&self, z: f64) -> f64 {
        self.codewords[self.cell_index(z)]
    }

    pub fn quantize_vec(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|z| self.quantize(z))
    }

    /// Threshold pair (low, up) of a codeword's cell; infinite at the
    /// extremes.
    pub fn interval(&self, codeword: f64) -> Result<(f64, f64)> {
        let k0 = ((2.0 * codeword / self.step + self.levels() as f64 - 1.0) / 2.0).round();
        if !(0.0..self.levels() as f64).contains(&k0) {
            return Err(Error::InvalidCodeword(codeword));
        }
        let k0 = k0 as usize;
        if (self.codewords[k0] - codeword).abs() > 1e-9 * self.step {
            return Err(Error::InvalidCodeword(codeword));
        }
        Ok(self.cell_bounds(k0))
    }
}

/// Mean received power per complex sample of a real `[Re; Im]`-stacked
/// vector: E[|y_c|^2] estimated as 2 * mean(y_m^2).
pub fn received_power(y: &Array1<f64>) -> f64 {
    2.0 * y.dot(y) / y.len() as f64
}
