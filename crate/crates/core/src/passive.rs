//! Closed-form design for a passive surface.
//!
//! Both subproblems have exact solutions: for fixed phases the best combiner
//! is maximum-ratio combining on the combined channel, and for a fixed
//! combiner the best phases rotate every reflected term onto the direct
//! term. Alternating the two half-steps never lowers the output SNR, so the
//! loop stops on a relative-improvement test.

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::detector::{
    design_threshold, detection_prob_passive, false_alarm_prob, SensingParams, SensingSolution,
};
use crate::math::CVec;
use crate::{Error, Result};

const AO_TOL: f64 = 1e-8;
const AO_MAX_ITERS: usize = 50;

/// Maximum-ratio combiner `c / ||c||` for a combined channel `c`.
pub fn receive_beamformer(c: &CVec) -> Result<CVec> {
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::DegenerateChannel(
            "combined channel is zero, combiner undefined".into(),
        ));
    }
    Ok(c.mapv(|z| z / norm))
}

/// Phases that rotate every reflected term onto the direct term for a fixed
/// combiner: `theta_n = arg(w^H h_d) - arg((w^H H diag(h_r))_n)`, wrapped to
/// [0, 2 pi). With a zero direct term the reference phase is zero, which
/// still cophases the reflected terms with each other.
pub fn align_phases(w: &CVec, ch: &ChannelRealization) -> Vec<f64> {
    let mut direct = Complex64::new(0.0, 0.0);
    for k in 0..ch.m() {
        direct += w[k].conj() * ch.h_d[k];
    }
    let reference = if direct.norm_sqr() > 0.0 { direct.arg() } else { 0.0 };
    let mut theta = Vec::with_capacity(ch.n());
    for nn in 0..ch.n() {
        let mut term = Complex64::new(0.0, 0.0);
        for k in 0..ch.m() {
            term += w[k].conj() * ch.h_mat[[k, nn]] * ch.h_r[nn];
        }
        let shift = if term.norm_sqr() > 0.0 {
            reference - term.arg()
        } else {
            0.0
        };
        theta.push(shift.rem_euclid(std::f64::consts::TAU));
    }
    theta
}

fn gamma_of(w: &CVec, c: &CVec, prm: &SensingParams) -> f64 {
    let mut wc = Complex64::new(0.0, 0.0);
    for k in 0..w.len() {
        wc += w[k].conj() * c[k];
    }
    prm.p * wc.norm_sqr() / prm.delta2
}

/// Combiner that couples to at least one reflected element when the
/// combined channel vanishes at the starting phases.
fn fallback_combiner(ch: &ChannelRealization) -> Result<CVec> {
    for nn in 0..ch.n() {
        let mut col = CVec::zeros(ch.m());
        let mut norm2 = 0.0;
        for k in 0..ch.m() {
            let e = ch.h_mat[[k, nn]] * ch.h_r[nn];
            norm2 += e.norm_sqr();
            col[k] = e;
        }
        if norm2 > 0.0 {
            return Ok(col.mapv(|z| z / norm2.sqrt()));
        }
    }
    Err(Error::DegenerateChannel(
        "direct and reflected channels are both zero".into(),
    ))
}

/// One alternating-optimization run from a phase initialization. Returns a
/// self-consistent (combiner, phases, SNR) triple.
fn alternate(
    theta_init: &[f64],
    ch: &ChannelRealization,
    prm: &SensingParams,
) -> Result<(CVec, Vec<f64>, f64)> {
    let ones = vec![1.0; ch.n()];
    let mut theta = theta_init.to_vec();
    let c0 = ch.combined(&theta, &ones);
    let mut w = match receive_beamformer(&c0) {
        Ok(w) => w,
        Err(_) => fallback_combiner(ch)?,
    };
    let mut gamma = gamma_of(&w, &c0, prm);
    for _ in 0..AO_MAX_ITERS {
        let theta_new = align_phases(&w, ch);
        let c = ch.combined(&theta_new, &ones);
        let w_new = receive_beamformer(&c).unwrap_or_else(|_| w.clone());
        let gamma_new = gamma_of(&w_new, &c, prm);
        theta = theta_new;
        w = w_new;
        let gain = gamma_new - gamma;
        gamma = gamma_new;
        if gain <= AO_TOL * gamma.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok((w, theta, gamma))
}

/// Joint combiner and phase design for a passive surface, plus the detector
/// operating point at the false-alarm budget.
///
/// Runs the alternating loop from two starts, zero phases and a
/// direct-channel-anchored configuration, and keeps the better one. The
/// anchored start makes the result at least as good as ignoring the surface
/// whenever a direct path exists.
pub fn solve_passive(ch: &ChannelRealization, prm: &SensingParams) -> Result<SensingSolution> {
    let n = ch.n();
    let (mut w, mut theta, mut gamma) = alternate(&vec![0.0; n], ch, prm)?;
    let direct_norm2 = ch.h_d.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if direct_norm2 > 0.0 {
        let w0 = receive_beamformer(&ch.h_d)?;
        let anchored = align_phases(&w0, ch);
        let (w2, theta2, gamma2) = alternate(&anchored, ch, prm)?;
        if gamma2 > gamma {
            w = w2;
            theta = theta2;
            gamma = gamma2;
        }
    }
    let epsilon = design_threshold(prm)?;
    Ok(SensingSolution {
        w,
        theta,
        rho: vec![1.0; n],
        epsilon,
        gamma,
        pd: detection_prob_passive(gamma, epsilon, prm)?,
        pf: false_alarm_prob(epsilon, prm)?,
        warnings: Vec::new(),
    })
}

/// Baseline without any surface: maximum-ratio combining on the direct
/// channel alone.
pub fn solve_no_ris(ch: &ChannelRealization, prm: &SensingParams) -> Result<SensingSolution> {
    let n = ch.n();
    let mut warnings = Vec::new();
    let direct_norm2 = ch.h_d.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let (w, gamma) = if direct_norm2 > 0.0 {
        (
            receive_beamformer(&ch.h_d)?,
            prm.p * direct_norm2 / prm.delta2,
        )
    } else {
        let mut e1 = CVec::zeros(ch.m());
        if ch.m() == 0 {
            return Err(Error::DegenerateChannel("no receive antennas".into()));
        }
        e1[0] = Complex64::new(1.0, 0.0);
        warnings.push("direct channel is zero, combiner arbitrary".to_string());
        (e1, 0.0)
    };
    let epsilon = design_threshold(prm)?;
    Ok(SensingSolution {
        w,
        theta: vec![0.0; n],
        rho: vec![0.0; n],
        epsilon,
        gamma,
        pd: detection_prob_passive(gamma, epsilon, prm)?,
        pf: false_alarm_prob(epsilon, prm)?,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, FadingModel, SystemGeometry};
    use crate::math::CMat;
    use crate::seeds;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::TAU;

    fn random_channel(m: usize, n: usize, seed: u64) -> ChannelRealization {
        let mut rng = seeds::rng(seed);
        let mut draw = move || {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        };
        ChannelRealization {
            h_d: CVec::from_shape_fn(m, |_| draw()),
            h_r: CVec::from_shape_fn(n, |_| draw()),
            h_mat: CMat::from_shape_fn((m, n), |_| draw()),
        }
    }

    fn random_unit(m: usize, rng: &mut rand_chacha::ChaCha8Rng) -> CVec {
        let mut w = CVec::zeros(m);
        let mut norm2 = 0.0;
        for k in 0..m {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            w[k] = Complex64::new(re, im);
            norm2 += w[k].norm_sqr();
        }
        w.mapv(|z| z / norm2.sqrt())
    }

    fn snr(w: &CVec, theta: &[f64], ch: &ChannelRealization, prm: &SensingParams) -> f64 {
        let ones = vec![1.0; ch.n()];
        gamma_of(w, &ch.combined(theta, &ones), prm)
    }

    #[test]
    fn aligned_phases_add_magnitudes() {
        // After alignment the combined response is the direct magnitude plus
        // every reflected magnitude; no phase choice beats that.
        let prm = SensingParams::default();
        for seed in 0..10 {
            let ch = random_channel(3, 4, 100 + seed);
            let mut rng = seeds::rng(seed);
            let w = random_unit(3, &mut rng);
            let theta = align_phases(&w, &ch);
            let ones = vec![1.0; 4];
            let c = ch.combined(&theta, &ones);
            let mut wc = Complex64::new(0.0, 0.0);
            let mut direct = Complex64::new(0.0, 0.0);
            for k in 0..3 {
                wc += w[k].conj() * c[k];
                direct += w[k].conj() * ch.h_d[k];
            }
            let mut want = direct.norm();
            for nn in 0..4 {
                let mut term = Complex64::new(0.0, 0.0);
                for k in 0..3 {
                    term += w[k].conj() * ch.h_mat[[k, nn]] * ch.h_r[nn];
                }
                want += term.norm();
            }
            assert!((wc.norm() - want).abs() <= 1e-12 * want);
            // Random phase probes never exceed the aligned value.
            let aligned = snr(&w, &theta, &ch, &prm);
            for _ in 0..50 {
                let probe: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * TAU).collect();
                assert!(snr(&w, &probe, &ch, &prm) <= aligned * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn alignment_ignores_global_combiner_phase() {
        let ch = random_channel(4, 3, 7);
        let mut rng = seeds::rng(77);
        let w = random_unit(4, &mut rng);
        let base = align_phases(&w, &ch);
        for k in 1..8 {
            let rot = Complex64::from_polar(1.0, k as f64 * 0.7);
            let shifted = align_phases(&w.mapv(|z| z * rot), &ch);
            for (a, b) in base.iter().zip(shifted.iter()) {
                let diff = (a - b).rem_euclid(TAU);
                assert!(diff < 1e-9 || (TAU - diff) < 1e-9, "phase moved by {diff}");
            }
        }
    }

    #[test]
    fn half_steps_never_lower_snr() {
        let prm = SensingParams::default();
        for seed in 0..20 {
            let ch = random_channel(3, 5, 200 + seed);
            let mut rng = seeds::rng(300 + seed);
            let w = random_unit(3, &mut rng);
            let theta: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * TAU).collect();
            let before = snr(&w, &theta, &ch, &prm);
            // Combiner half-step.
            let ones = vec![1.0; 5];
            let w_mrc = receive_beamformer(&ch.combined(&theta, &ones)).unwrap();
            assert!(snr(&w_mrc, &theta, &ch, &prm) >= before * (1.0 - 1e-12));
            // Phase half-step.
            let aligned = align_phases(&w, &ch);
            assert!(snr(&w, &aligned, &ch, &prm) >= before * (1.0 - 1e-12));
        }
    }

    #[test]
    fn surface_never_hurts() {
        let g = SystemGeometry::default();
        let prm = SensingParams::default();
        for seed in 0..20 {
            let ch = sample_channels(&g, FadingModel::Rayleigh, 4, 6, 500 + seed).unwrap();
            let with = solve_passive(&ch, &prm).unwrap();
            let without = solve_no_ris(&ch, &prm).unwrap();
            assert!(
                with.gamma >= without.gamma * (1.0 - 1e-12),
                "seed {seed}: {} < {}",
                with.gamma,
                without.gamma
            );
            assert!(with.pd >= without.pd - 1e-12);
        }
    }

    #[test]
    fn solver_beats_random_probes() {
        let prm = SensingParams::default();
        for seed in 0..6 {
            let ch = random_channel(2, 3, 900 + seed);
            let sol = solve_passive(&ch, &prm).unwrap();
            let mut rng = seeds::rng(40 + seed);
            let ones = vec![1.0; 3];
            let mut best = 0.0f64;
            for _ in 0..400 {
                let probe: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * TAU).collect();
                let w = receive_beamformer(&ch.combined(&probe, &ones)).unwrap();
                best = best.max(snr(&w, &probe, &ch, &prm));
            }
            assert!(
                sol.gamma >= best * (1.0 - 1e-9),
                "seed {seed}: solver {} below probe {best}",
                sol.gamma
            );
            // The reported triple is self-consistent.
            assert!((snr(&sol.w, &sol.theta, &ch, &prm) - sol.gamma).abs() <= 1e-12 * sol.gamma);
        }
    }

    #[test]
    fn no_direct_path_closed_form() {
        // With h_d = 0 and one antenna the optimum is the coherent sum of
        // the per-element magnitudes.
        let mut ch = random_channel(1, 4, 31);
        ch.h_d[0] = Complex64::new(0.0, 0.0);
        let prm = SensingParams::default();
        let sol = solve_passive(&ch, &prm).unwrap();
        let mut amp = 0.0;
        for nn in 0..4 {
            amp += (ch.h_mat[[0, nn]] * ch.h_r[nn]).norm();
        }
        let want = prm.p * amp * amp / prm.delta2;
        assert!(
            (sol.gamma - want).abs() <= 1e-10 * want,
            "{} vs {want}",
            sol.gamma
        );
    }

    #[test]
    fn zero_elements_reduce_to_direct_combining() {
        let ch = ChannelRealization {
            h_d: random_channel(3, 1, 44).h_d,
            h_r: CVec::zeros(0),
            h_mat: CMat::zeros((3, 0)),
        };
        let prm = SensingParams::default();
        let with = solve_passive(&ch, &prm).unwrap();
        let without = solve_no_ris(&ch, &prm).unwrap();
        assert!((with.gamma - without.gamma).abs() <= 1e-12 * without.gamma);
        assert!(with.theta.is_empty() && with.rho.is_empty());
    }

    #[test]
    fn operating_point_matches_detector_formulas() {
        let g = SystemGeometry::default();
        let prm = SensingParams::default();
        let ch = sample_channels(&g, FadingModel::Rayleigh, 8, 6, 77).unwrap();
        let sol = solve_passive(&ch, &prm).unwrap();
        assert!((sol.epsilon - design_threshold(&prm).unwrap()).abs() < 1e-26);
        assert!((sol.pf - prm.pf_max).abs() < 1e-10);
        let pd = detection_prob_passive(sol.gamma, sol.epsilon, &prm).unwrap();
        assert_eq!(sol.pd, pd);
        assert!(sol.rho.iter().all(|&g| g == 1.0));
        assert!(sol.theta.iter().all(|&t| (0.0..TAU).contains(&t)));
    }

    #[test]
    fn dead_channel_is_an_error() {
        let ch = ChannelRealization {
            h_d: CVec::zeros(2),
            h_r: CVec::zeros(3),
            h_mat: CMat::zeros((2, 3)),
        };
        let prm = SensingParams::default();
        assert!(matches!(
            solve_passive(&ch, &prm),
            Err(Error::DegenerateChannel(_))
        ));
    }
}
