//! Legacy THz downlink: beamsteering codebook, zero-forcing digital stage,
//! path loss, random deployments, and the scalar gains every solver consumes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Fading, SystemConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Angles on the edge of the front half-plane are pulled inward by this much (rad).
pub const ANGLE_CLAMP: f64 = 1e-6;
/// Reciprocal condition number below which the ZF channel counts as singular.
pub const ZF_RCOND: f64 = 1e-10;
const GAIN_FLOOR: f64 = 1e-300;

/// Array response `a(θ)` of the uniform linear array; entry 0 is 1.
pub fn steering_vector(theta: f64, cfg: &SystemConfig) -> DVector<Complex64> {
    let phase = 2.0 * PI * cfg.carrier_hz * cfg.antenna_spacing * theta.sin() / SPEED_OF_LIGHT;
    DVector::from_fn(cfg.n_antennas, |n, _| {
        Complex64::from_polar(1.0, -(n as f64) * phase)
    })
}

/// `a^H b` for complex column vectors.
fn inner(a: &DVector<Complex64>, b: &DVector<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Debug, Clone)]
pub struct Codebook {
    pub angles: Vec<f64>,
    pub words: Vec<DVector<Complex64>>,
}

/// Codeword `q` is `a(2πq/N_Q)/√N`.
pub fn build_codebook(cfg: &SystemConfig) -> Codebook {
    let scale = 1.0 / (cfg.n_antennas as f64).sqrt();
    let angles: Vec<f64> = (0..cfg.codebook_size)
        .map(|q| 2.0 * PI * q as f64 / cfg.codebook_size as f64)
        .collect();
    let words = angles
        .iter()
        .map(|&th| steering_vector(th, cfg).scale(scale).map(|z| z))
        .collect();
    Codebook { angles, words }
}

/// For every primary angle, the codeword with the largest `|a(θ)^H w|`.
///
/// Near-ties (within 1e-12 relative) go to the lower index.
pub fn select_analog_beams(theta_p: &[f64], codebook: &Codebook, cfg: &SystemConfig) -> Vec<usize> {
    theta_p
        .iter()
        .map(|&theta| {
            let a = steering_vector(theta, cfg);
            let mut best = 0;
            let mut best_corr = f64::NEG_INFINITY;
            for (q, w) in codebook.words.iter().enumerate() {
                let corr = inner(&a, w).norm();
                if corr > best_corr * (1.0 + 1e-12) + 1e-300 {
                    best = q;
                    best_corr = corr;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BeamSet {
    pub codewords: Vec<usize>,
    /// N×K analog stage `F̃`.
    pub analog: DMatrix<Complex64>,
    /// K×K digital stage, column-scaled so that `composite = analog · digital`.
    pub digital: DMatrix<Complex64>,
    /// N×K unit-norm composite beams `f_k`.
    pub composite: DMatrix<Complex64>,
    /// False when the effective channel was singular and a least-squares
    /// digital stage had to be used instead of zero forcing.
    pub zero_forcing: bool,
}

impl BeamSet {
    pub fn beam(&self, k: usize) -> DVector<Complex64> {
        self.composite.column(k).into_owned()
    }
}

/// Effective channel `G` with rows `a(θ_k)^H F̃`.
pub fn effective_channel(
    theta_p: &[f64],
    analog: &DMatrix<Complex64>,
    cfg: &SystemConfig,
) -> DMatrix<Complex64> {
    let k = theta_p.len();
    let mut g = DMatrix::zeros(k, analog.ncols());
    for (row, &theta) in theta_p.iter().enumerate() {
        let a = steering_vector(theta, cfg);
        for col in 0..analog.ncols() {
            g[(row, col)] = inner(&a, &analog.column(col).into_owned());
        }
    }
    g
}

fn reciprocal_condition(g: &DMatrix<Complex64>) -> f64 {
    let sv = g.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

fn normalize_columns(
    analog: &DMatrix<Complex64>,
    mut digital: DMatrix<Complex64>,
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let mut composite = analog * &digital;
    for k in 0..composite.ncols() {
        let norm = composite.column(k).norm();
        if norm > 0.0 {
            let s = Complex64::new(1.0 / norm, 0.0);
            composite.column_mut(k).scale_mut(1.0 / norm);
            digital.column_mut(k).iter_mut().for_each(|z| *z *= s);
        }
    }
    (digital, composite)
}

/// Zero-forcing digital stage `P = G⁻¹`, with composite beams rescaled to unit norm.
///
/// Returns `(digital, composite)`.
pub fn zf_digital(
    g: &DMatrix<Complex64>,
    analog: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let rcond = reciprocal_condition(g);
    if !(rcond >= ZF_RCOND) {
        return Err(Error::SingularChannel { rcond });
    }
    let p = g
        .clone()
        .try_inverse()
        .ok_or(Error::SingularChannel { rcond })?;
    Ok(normalize_columns(analog, p))
}

/// Minimum-norm least-squares digital stage `P = G⁺` for rank-deficient channels.
pub fn least_squares_digital(
    g: &DMatrix<Complex64>,
    analog: &DMatrix<Complex64>,
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let sv_max = g.clone().svd(false, false).singular_values.max();
    let p = g
        .clone()
        .pseudo_inverse(ZF_RCOND * sv_max.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::identity(g.nrows(), g.ncols()));
    let (mut digital, mut composite) = normalize_columns(analog, p);
    // A column the pseudo-inverse annihilated falls back to its analog beam.
    for k in 0..composite.ncols() {
        if composite.column(k).norm() < 0.5 {
            composite.set_column(k, &analog.column(k));
            digital.set_column(k, &DVector::from_fn(g.ncols(), |i, _| {
                if i == k {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }));
        }
    }
    (digital, composite)
}

/// Departure angles of the primary users: `kπ/K − π/2`, `k = 1..K`, clamped
/// into the open front half-plane.
pub fn primary_angles(k: usize) -> Vec<f64> {
    (1..=k)
        .map(|i| clamp_angle(i as f64 * PI / k as f64 - PI / 2.0))
        .collect()
}

fn clamp_angle(theta: f64) -> f64 {
    theta.clamp(-PI / 2.0 + ANGLE_CLAMP, PI / 2.0 - ANGLE_CLAMP)
}

/// Configures the legacy hybrid beamformer for the fixed primary angles.
///
/// Falls back to a least-squares digital stage when the analog selection
/// leaves the effective channel singular, which happens when more primaries
/// than distinct codebook directions are present. Since the primary angles are
/// deterministic, redrawing the deployment cannot repair that case.
pub fn design_beams(cfg: &SystemConfig) -> Result<BeamSet> {
    cfg.validate()?;
    let theta_p = primary_angles(cfg.n_primary);
    let codebook = build_codebook(cfg);
    let codewords = select_analog_beams(&theta_p, &codebook, cfg);
    let analog = DMatrix::from_columns(
        &codewords
            .iter()
            .map(|&q| codebook.words[q].clone())
            .collect::<Vec<_>>(),
    );
    let g = effective_channel(&theta_p, &analog, cfg);
    let (digital, composite, zero_forcing) = match zf_digital(&g, &analog) {
        Ok((d, c)) => (d, c, true),
        Err(Error::SingularChannel { rcond }) => {
            log::warn!(
                "ZF channel singular for N={} K={} N_Q={} (rcond {rcond:.2e}); using least squares",
                cfg.n_antennas,
                cfg.n_primary,
                cfg.codebook_size
            );
            let (d, c) = least_squares_digital(&g, &analog);
            (d, c, false)
        }
        Err(e) => return Err(e),
    };
    Ok(BeamSet {
        codewords,
        analog,
        digital,
        composite,
        zero_forcing,
    })
}

/// Large-scale attenuation `(4πf_c/c)² · e^{ζr} · (r^α + 1)`.
pub fn path_loss(r: f64, cfg: &SystemConfig) -> f64 {
    let free_space = (4.0 * PI * cfg.carrier_hz / SPEED_OF_LIGHT).powi(2);
    free_space * (cfg.absorption * r).exp() * (r.powf(cfg.path_loss_exponent) + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub theta_p: Vec<f64>,
    pub dist_p: Vec<f64>,
    pub theta_s: Vec<f64>,
    pub dist_s: Vec<f64>,
    /// Fading coefficients as `[re, im]`.
    pub fading_p: Vec<[f64; 2]>,
    pub fading_s: Vec<[f64; 2]>,
}

/// Distance from the array to a point uniform in `(0, edge] × [−edge/2, edge/2)`.
fn square_distance<R: Rng + ?Sized>(edge: f64, rng: &mut R) -> f64 {
    let x = edge * (1.0 - rng.random::<f64>());
    let y = edge * (rng.random::<f64>() - 0.5);
    x.hypot(y)
}

fn draw_fading<R: Rng + ?Sized>(fading: Fading, rng: &mut R) -> [f64; 2] {
    match fading {
        Fading::UnitLos => [1.0, 0.0],
        Fading::Rayleigh => loop {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let a = [re / 2f64.sqrt(), im / 2f64.sqrt()];
            if a[0] != 0.0 || a[1] != 0.0 {
                break a;
            }
        },
    }
}

pub fn sample_deployment<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Deployment {
    let theta_p = primary_angles(cfg.n_primary);
    let dist_p = (0..cfg.n_primary)
        .map(|_| square_distance(cfg.primary_square, rng))
        .collect();
    let mut theta_s = Vec::with_capacity(cfg.n_secondary);
    let mut dist_s = Vec::with_capacity(cfg.n_secondary);
    for _ in 0..cfg.n_secondary {
        theta_s.push(clamp_angle(PI * (rng.random::<f64>() - 0.5)));
        dist_s.push(square_distance(cfg.secondary_square, rng));
    }
    let fading_p = (0..cfg.n_primary)
        .map(|_| draw_fading(cfg.fading, rng))
        .collect();
    let fading_s = (0..cfg.n_secondary)
        .map(|_| draw_fading(cfg.fading, rng))
        .collect();
    Deployment {
        theta_p,
        dist_p,
        theta_s,
        dist_s,
        fading_p,
        fading_s,
    }
}

/// Scalar channel constants of one deployment.
///
/// Matrices are row-major `Vec<Vec<f64>>`: `hp[k][i]`, `hs[j][k]`, `b[j][k]`, `t[j][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveGains {
    pub hp: Vec<Vec<f64>>,
    pub hs: Vec<Vec<f64>>,
    #[serde(with = "crate::nonfinite::vec")]
    pub c: Vec<f64>,
    #[serde(with = "crate::nonfinite::mat")]
    pub b: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub primary_power: f64,
    pub noise_power: f64,
    pub targets: Vec<f64>,
}

impl EffectiveGains {
    pub fn n_primary(&self) -> usize {
        self.c.len()
    }

    pub fn n_secondary(&self) -> usize {
        self.hs.len()
    }

    /// Builds the derived constants from raw power gains.
    ///
    /// `c_k` and `b_jk` are the negated secondary-power headroom that keeps the
    /// primary decodable at its own receiver and at secondary `j`, respectively;
    /// `t_jk` is the interference-plus-noise seen by `j` on beam `k` with no
    /// secondary power anywhere. A secondary gain that underflows makes the pair
    /// unusable (`b = +∞`); an underflowing primary gain is an error.
    pub fn from_gains(
        hp: Vec<Vec<f64>>,
        hs: Vec<Vec<f64>>,
        primary_power: f64,
        noise_power: f64,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let k_n = hp.len();
        let rho = primary_power;
        let headroom: Vec<f64> = targets
            .iter()
            .map(|&r| rho / (2f64.powf(r) - 1.0))
            .collect();
        let mut c = Vec::with_capacity(k_n);
        for k in 0..k_n {
            let own = hp[k][k];
            if !(own >= GAIN_FLOOR) {
                return Err(Error::DegenerateChannel(format!(
                    "primary {k} has no gain on its own beam ({own:e})"
                )));
            }
            let cross: f64 = (0..k_n).filter(|&i| i != k).map(|i| hp[k][i] * rho).sum();
            c.push(cross / own - headroom[k] + noise_power / own);
        }
        let mut b = Vec::with_capacity(hs.len());
        let mut t = Vec::with_capacity(hs.len());
        for row in &hs {
            let mut b_row = Vec::with_capacity(k_n);
            let mut t_row = Vec::with_capacity(k_n);
            for k in 0..k_n {
                let cross: f64 = (0..k_n).filter(|&i| i != k).map(|i| row[i] * rho).sum();
                t_row.push(cross + noise_power);
                if row[k] >= GAIN_FLOOR {
                    b_row.push(cross / row[k] - headroom[k] + noise_power / row[k]);
                } else {
                    b_row.push(f64::INFINITY);
                }
            }
            b.push(b_row);
            t.push(t_row);
        }
        Ok(Self {
            hp,
            hs,
            c,
            b,
            t,
            primary_power,
            noise_power,
            targets,
        })
    }
}

fn power_gain(fading: [f64; 2], pl: f64, a: &DVector<Complex64>, f: &DVector<Complex64>) -> f64 {
    let amp2 = fading[0] * fading[0] + fading[1] * fading[1];
    amp2 / pl * inner(a, f).norm_sqr()
}

pub fn compute_effective(
    cfg: &SystemConfig,
    dep: &Deployment,
    beams: &BeamSet,
) -> Result<EffectiveGains> {
    let k_n = cfg.n_primary;
    let beams_k: Vec<_> = (0..k_n).map(|k| beams.beam(k)).collect();
    let row = |theta: f64, dist: f64, fading: [f64; 2]| -> Vec<f64> {
        let a = steering_vector(theta, cfg);
        let pl = path_loss(dist, cfg);
        beams_k.iter().map(|f| power_gain(fading, pl, &a, f)).collect()
    };
    let hp = (0..k_n)
        .map(|k| row(dep.theta_p[k], dep.dist_p[k], dep.fading_p[k]))
        .collect();
    let hs = (0..cfg.n_secondary)
        .map(|j| row(dep.theta_s[j], dep.dist_s[j], dep.fading_s[j]))
        .collect();
    let targets = (0..k_n).map(|k| cfg.target_rate(k)).collect();
    EffectiveGains::from_gains(hp, hs, cfg.primary_power, cfg.noise_power, targets)
}
