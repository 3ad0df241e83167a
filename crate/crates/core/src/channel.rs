//! Geometry, large-scale path loss, and small-scale fading for the three
//! links of the sensing setup: transmitter to terminal (direct), transmitter
//! to RIS, and RIS to terminal.
//!
//! Channel entries are drawn from a counter-based generator keyed by
//! `(seed, link, indices)`, so a realization is a pure function of the seed,
//! independent of evaluation order, and growing the array or the surface
//! extends a realization without redrawing existing entries.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::{CMat, CVec};
use crate::seeds;
use crate::{Error, Result};

/// Planar positions of the three nodes plus the large-scale model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemGeometry {
    /// Primary transmitter position, meters.
    pub pt: [f64; 2],
    /// RIS position, meters.
    pub ris: [f64; 2],
    /// Secondary terminal position, meters.
    pub st: [f64; 2],
    /// Path-loss exponent of the transmitter-to-RIS link.
    pub exp_pt_ris: f64,
    /// Path-loss exponent of the RIS-to-terminal link.
    pub exp_ris_st: f64,
    /// Path-loss exponent of the direct transmitter-to-terminal link.
    pub exp_pt_st: f64,
    /// Average gain at the reference distance, dB.
    pub ref_gain_db: f64,
    /// Reference distance, meters.
    pub ref_distance: f64,
}

impl Default for SystemGeometry {
    fn default() -> Self {
        Self {
            pt: [0.0, 0.0],
            ris: [50.0, 20.0],
            st: [500.0, 0.0],
            exp_pt_ris: 2.0,
            exp_ris_st: 2.6,
            exp_pt_st: 3.5,
            ref_gain_db: -30.0,
            ref_distance: 1.0,
        }
    }
}

impl SystemGeometry {
    pub fn d_pt_ris(&self) -> f64 {
        dist(self.pt, self.ris)
    }
    pub fn d_ris_st(&self) -> f64 {
        dist(self.ris, self.st)
    }
    pub fn d_pt_st(&self) -> f64 {
        dist(self.pt, self.st)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Small-scale fading model applied on top of the distance-based loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FadingModel {
    /// Zero-mean unit-power circularly symmetric Gaussian entries.
    Rayleigh,
    /// Unit-power Rician entries: a fixed-modulus line-of-sight term with an
    /// independent uniform phase per entry, plus a scattered Gaussian part.
    Rician { k_factor_db: f64 },
}

impl Default for FadingModel {
    fn default() -> Self {
        FadingModel::Rayleigh
    }
}

/// Distance-based average channel gain
/// `10^(ref_gain_db/10) * (d / ref_distance)^(-exponent)`.
pub fn path_loss(d: f64, exponent: f64, ref_gain_db: f64, ref_distance: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!(
            "path_loss requires a positive distance, got {d}"
        )));
    }
    if !(ref_distance > 0.0) {
        return Err(Error::Domain(format!(
            "path_loss requires a positive reference distance, got {ref_distance}"
        )));
    }
    Ok(10f64.powf(ref_gain_db / 10.0) * (d / ref_distance).powf(-exponent))
}

/// One draw of the three links for `m` receive antennas and `n` RIS elements.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Direct link, transmitter to terminal, length `m`.
    pub h_d: CVec,
    /// Incident link, transmitter to RIS, length `n`.
    pub h_r: CVec,
    /// Outgoing link, RIS to terminal, `m x n`.
    pub h_mat: CMat,
}

impl ChannelRealization {
    pub fn m(&self) -> usize {
        self.h_d.len()
    }

    pub fn n(&self) -> usize {
        self.h_r.len()
    }

    /// Effective receive vector `h_d + H diag(g_n e^{j theta_n}) h_r`.
    ///
    /// Passive surfaces use unit gains; an absent surface is the all-zero
    /// gain vector.
    pub fn combined(&self, phases: &[f64], gains: &[f64]) -> CVec {
        assert_eq!(phases.len(), self.n(), "one phase per element");
        assert_eq!(gains.len(), self.n(), "one gain per element");
        let mut c = self.h_d.clone();
        for nn in 0..self.n() {
            let coef = Complex64::from_polar(gains[nn], phases[nn]) * self.h_r[nn];
            for mm in 0..self.m() {
                c[mm] += self.h_mat[[mm, nn]] * coef;
            }
        }
        c
    }

    /// Per-element couplings `(w^H H)_n g_n e^{j theta_n}` through which the
    /// surface's own noise reaches the combiner output.
    pub fn amplified_noise_row(&self, w: &CVec, phases: &[f64], gains: &[f64]) -> CVec {
        assert_eq!(w.len(), self.m());
        assert_eq!(phases.len(), self.n());
        assert_eq!(gains.len(), self.n());
        CVec::from_shape_fn(self.n(), |nn| {
            let mut dot = Complex64::new(0.0, 0.0);
            for mm in 0..self.m() {
                dot += w[mm].conj() * self.h_mat[[mm, nn]];
            }
            dot * Complex64::from_polar(gains[nn], phases[nn])
        })
    }
}

// Link tags for seed derivation.
const LINK_DIRECT: u64 = 1;
const LINK_TO_RIS: u64 = 2;
const LINK_FROM_RIS: u64 = 3;

/// Draws one channel realization.
///
/// Entry `(i, j)` of each link depends only on `(seed, link, i, j)` and the
/// fading model, so realizations are deterministic and nested: enlarging `m`
/// or `n` keeps every previously drawn entry.
pub fn sample_channels(
    geom: &SystemGeometry,
    fading: FadingModel,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<ChannelRealization> {
    if m == 0 {
        return Err(Error::Domain("sample_channels requires m >= 1".into()));
    }
    if n == 0 {
        return Err(Error::Domain("sample_channels requires n >= 1".into()));
    }
    let pl_direct = path_loss(
        geom.d_pt_st(),
        geom.exp_pt_st,
        geom.ref_gain_db,
        geom.ref_distance,
    )?;
    let pl_to_ris = path_loss(
        geom.d_pt_ris(),
        geom.exp_pt_ris,
        geom.ref_gain_db,
        geom.ref_distance,
    )?;
    let pl_from_ris = path_loss(
        geom.d_ris_st(),
        geom.exp_ris_st,
        geom.ref_gain_db,
        geom.ref_distance,
    )?;

    let h_d = CVec::from_shape_fn(m, |i| {
        entry(seed, &[LINK_DIRECT, i as u64], pl_direct, fading)
    });
    let h_r = CVec::from_shape_fn(n, |i| {
        entry(seed, &[LINK_TO_RIS, i as u64], pl_to_ris, fading)
    });
    let h_mat = CMat::from_shape_fn((m, n), |(i, j)| {
        entry(
            seed,
            &[LINK_FROM_RIS, i as u64, j as u64],
            pl_from_ris,
            fading,
        )
    });
    Ok(ChannelRealization { h_d, h_r, h_mat })
}

/// One unit-power small-scale coefficient scaled by the link's average gain.
fn entry(seed: u64, path: &[u64], avg_gain: f64, fading: FadingModel) -> Complex64 {
    let mut rng = seeds::rng(seeds::derive(seed, path));
    let scatter = {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    };
    let small = match fading {
        FadingModel::Rayleigh => scatter,
        FadingModel::Rician { k_factor_db } => {
            let k = 10f64.powf(k_factor_db / 10.0);
            let los_phase = rng.random::<f64>() * std::f64::consts::TAU;
            let los = Complex64::from_polar((k / (1.0 + k)).sqrt(), los_phase);
            los + scatter * (1.0 / (1.0 + k)).sqrt()
        }
    };
    small * avg_gain.sqrt()
}
