//! The correlated-dephasing dual-rail channel.
//!
//! Each fiber adds an unknown phase to the photons it carries: `phi_H` on the
//! H rail, `phi_V` on the V rail. The default model draws an independent
//! uniform phase pair per trial (constant within the trial, mirroring drift
//! that is slow against the photon spacing); the Ornstein-Uhlenbeck model
//! gives the phases a finite correlation time so the spacing between the
//! reference and signal photons starts to matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{Path, PhotonicState};

/// Phase-noise process on the two fiber rails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// Fresh uniform `(phi_H, phi_V)` per trial, constant within the trial.
    IidUniform,
    /// Stationary Gaussian process with autocorrelation
    /// `exp(-dt / correlation_time)` per rail, sampled exactly at the photon
    /// passage times via the discrete OU update.
    OrnsteinUhlenbeck {
        correlation_time_ns: f64,
        sigma_phi_rad: f64,
    },
}

/// Noise process plus the seed that makes every trial reproducible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn iid_uniform(seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::IidUniform,
            seed,
        }
    }

    pub fn ornstein_uhlenbeck(correlation_time_ns: f64, sigma_phi_rad: f64, seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::OrnsteinUhlenbeck {
                correlation_time_ns,
                sigma_phi_rad,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseKind::OrnsteinUhlenbeck {
            correlation_time_ns,
            sigma_phi_rad,
        } = self.kind
        {
            if !(correlation_time_ns > 0.0) {
                return Err(Error::Validation(format!(
                    "OU correlation time must be positive, got {correlation_time_ns}"
                )));
            }
            if !(sigma_phi_rad >= 0.0) {
                return Err(Error::Validation(format!(
                    "OU stationary deviation must be nonnegative, got {sigma_phi_rad}"
                )));
            }
        }
        Ok(())
    }

    /// Samples the phases of trial `trial` at the given passage times.
    ///
    /// Trials draw from deterministic per-trial RNG streams split off the
    /// seed, so they can run concurrently and still reproduce bit-for-bit.
    pub fn sample_realization(&self, times_ns: &[f64], trial: u64) -> Result<NoiseRealization> {
        self.validate()?;
        let mut rng = self.trial_rng(trial);
        let mut times: Vec<f64> = times_ns.to_vec();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| a.to_bits() == b.to_bits());
        if times.is_empty() {
            return Err(Error::Validation("no passage times requested".into()));
        }
        let (phi_h, phi_v) = match self.kind {
            NoiseKind::IidUniform => {
                let h = rng.gen_range(0.0..std::f64::consts::TAU);
                let v = rng.gen_range(0.0..std::f64::consts::TAU);
                (vec![h; times.len()], vec![v; times.len()])
            }
            NoiseKind::OrnsteinUhlenbeck {
                correlation_time_ns,
                sigma_phi_rad,
            } => {
                let h = sample_ou_exact(&times, correlation_time_ns, sigma_phi_rad, &mut rng);
                let v = sample_ou_exact(&times, correlation_time_ns, sigma_phi_rad, &mut rng);
                (h, v)
            }
        };
        Ok(NoiseRealization {
            times,
            phi_h,
            phi_v,
        })
    }

    fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }
}

/// Exact discrete OU sampling at sorted times: stationary start, then
/// `x(t+dt) = x(t) e^{-dt/tau} + sigma sqrt(1 - e^{-2 dt/tau}) z`.
fn sample_ou_exact(times: &[f64], tau_ns: f64, sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut values = Vec::with_capacity(times.len());
    let z0: f64 = StandardNormal.sample(rng);
    values.push(sigma * z0);
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let decay = (-dt / tau_ns).exp();
        let z: f64 = StandardNormal.sample(rng);
        let prev = *values.last().expect("nonempty");
        values.push(prev * decay + sigma * (1.0 - decay * decay).sqrt() * z);
    }
    values
}

/// One trial's sampled phases, tabulated at the photon passage times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseRealization {
    times: Vec<f64>,
    phi_h: Vec<f64>,
    phi_v: Vec<f64>,
}

/// Lookup tolerance for passage times (they come from the same arithmetic
/// that built the realization, so this only absorbs rounding).
const TIME_LOOKUP_TOL_NS: f64 = 1e-9;

impl NoiseRealization {
    /// Phase pair constant in time (for fixed-phase studies).
    pub fn constant(phi_h: f64, phi_v: f64) -> Self {
        NoiseRealization {
            times: vec![0.0],
            phi_h: vec![phi_h],
            phi_v: vec![phi_v],
        }
    }

    fn lookup(&self, table: &[f64], t_ns: f64) -> Result<f64> {
        if self.times.len() == 1 {
            return Ok(table[0]);
        }
        let idx = self
            .times
            .iter()
            .position(|t| (t - t_ns).abs() <= TIME_LOOKUP_TOL_NS)
            .ok_or_else(|| {
                Error::Configuration(format!("no phase sampled at passage time {t_ns} ns"))
            })?;
        Ok(table[idx])
    }

    pub fn phi_h_at(&self, t_ns: f64) -> Result<f64> {
        self.lookup(&self.phi_h, t_ns)
    }

    pub fn phi_v_at(&self, t_ns: f64) -> Result<f64> {
        self.lookup(&self.phi_v, t_ns)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// Applies the rail phases: every photon on `ChannelH` at passage time `t`
/// gains `e^{i phi_H(t)}`, every photon on `ChannelV` gains `e^{i phi_V(t)}`.
/// Photons on `Hold` pass untouched; photons anywhere else are a wiring error.
pub fn apply_phase_channel(
    state: &PhotonicState,
    realization: &NoiseRealization,
) -> Result<PhotonicState> {
    for path in state.occupied_paths() {
        if !matches!(path, Path::ChannelH | Path::ChannelV | Path::Hold) {
            return Err(Error::Configuration(format!(
                "photon on `{path}` is outside the channel rails"
            )));
        }
    }
    let mut out = Vec::new();
    for (ket, amp) in state.terms() {
        let mut factor = num_complex::Complex64::new(1.0, 0.0);
        for m in ket.modes() {
            let phi = match m.path {
                Path::ChannelH => realization.phi_h_at(m.time_ns)?,
                Path::ChannelV => realization.phi_v_at(m.time_ns)?,
                Path::Hold => 0.0,
                _ => unreachable!("checked above"),
            };
            factor *= num_complex::Complex64::from_polar(1.0, phi);
        }
        out.push((*ket, amp * factor));
    }
    PhotonicState::from_terms(out)
}

/// Phase signature of a ket: how many photons ride each rail.
fn phase_orbit(ket: &crate::state::BasisKet) -> (usize, usize) {
    (ket.count_on(Path::ChannelH), ket.count_on(Path::ChannelV))
}

/// Closed-form uniform-phase average of the channel.
///
/// Under independent uniform `(phi_H, phi_V)` the cross terms between kets
/// with different phase signatures `(n_H, n_V)` average to zero, so the
/// channel output is the block mixture of the signature classes. Returns the
/// components with their weights (squared norms); each component keeps its
/// internal coherence and can be propagated through downstream linear optics
/// independently.
pub fn dephase_average(
    state: &PhotonicState,
    model: &NoiseModel,
) -> Result<Vec<(f64, PhotonicState)>> {
    match model.kind {
        NoiseKind::IidUniform => {}
        NoiseKind::OrnsteinUhlenbeck { .. } => {
            return Err(Error::UnsupportedModel(
                "closed-form dephasing average requires the IID uniform model".into(),
            ))
        }
    }
    for path in state.occupied_paths() {
        if !matches!(path, Path::ChannelH | Path::ChannelV | Path::Hold) {
            return Err(Error::Configuration(format!(
                "photon on `{path}` is outside the channel rails"
            )));
        }
    }
    let mut classes: std::collections::BTreeMap<(usize, usize), Vec<_>> =
        std::collections::BTreeMap::new();
    for (ket, amp) in state.terms() {
        classes
            .entry(phase_orbit(ket))
            .or_default()
            .push((*ket, *amp));
    }
    let mut blocks = Vec::with_capacity(classes.len());
    for (_, terms) in classes {
        let component = PhotonicState::from_terms(terms)?;
        blocks.push((component.plain_norm_sqr(), component));
    }
    Ok(blocks)
}
