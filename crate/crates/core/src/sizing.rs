//! Element-count calculus for a single-antenna terminal.
//!
//! With every element set to the worst per-element magnitudes and the phase
//! shifts aligned, detection probability has a closed form in the element
//! count N. Inverting the three-sigma condition Q(-3) on that form gives
//! the smallest N with detection probability approximately one, for the
//! phase-only surface and for the amplifying surface under a uniform gain
//! chosen to exhaust the power budget. The same closed forms order the two
//! surface types at given counts, and component power draws convert a total
//! deployment budget into affordable counts.
//!
//! The bounds use the worst element twice (through |h| and |h_r|), so the
//! counts are sufficient, not tight, for any real channel draw.

use crate::channel::ChannelRealization;
use crate::detector::SensingParams;
use crate::math::{q_inverse, PowerValue};
use crate::{Error, Result};

/// Worst-element description of the sensing link.
#[derive(Debug, Clone)]
pub struct SizingInputs {
    pub prm: SensingParams,
    /// Smallest per-element surface-to-terminal magnitude.
    pub h_min: f64,
    /// Smallest per-element transmitter-to-surface magnitude.
    pub hr_min: f64,
}

impl SizingInputs {
    pub fn new(prm: SensingParams, h_min: f64, hr_min: f64) -> Result<Self> {
        prm.validate()?;
        if !(h_min > 0.0) || !(hr_min > 0.0) {
            return Err(Error::Domain(format!(
                "worst-element magnitudes must be positive, got {h_min} and {hr_min}"
            )));
        }
        Ok(Self { prm, h_min, hr_min })
    }

    /// Extracts the worst per-element magnitudes from a sampled channel.
    pub fn from_channel(prm: SensingParams, ch: &ChannelRealization) -> Result<Self> {
        let h_min = ch
            .h_mat
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min);
        let hr_min = ch
            .h_r
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min);
        Self::new(prm, h_min, hr_min)
    }
}

/// Numerator shared by the closed forms: `delta2 (Q^-1(pf) + sqrt I)`,
/// returned with `sqrt I`. The three-sigma inversion needs `sqrt I > 3`.
fn quantile_numerator(prm: &SensingParams) -> Result<(f64, f64)> {
    prm.validate()?;
    let sqrt_i = (prm.samples() as f64).sqrt();
    if sqrt_i <= 3.0 {
        return Err(Error::Domain(format!(
            "the three-sigma sizing rule needs more than nine samples, got {}",
            prm.samples()
        )));
    }
    Ok((prm.delta2 * (q_inverse(prm.pf_max)? + sqrt_i), sqrt_i))
}

/// Smallest element count at which the phase-only surface reaches a
/// detection probability of Q(-3) or better on the worst-element channel.
pub fn min_elements_passive(s: &SizingInputs) -> Result<usize> {
    let (r, sqrt_i) = quantile_numerator(&s.prm)?;
    let link = s.prm.p * s.h_min * s.h_min * s.hr_min * s.hr_min;
    let radicand = r / ((sqrt_i - 3.0) * link) - s.prm.delta2 / link;
    if radicand <= 0.0 {
        // The noise floor alone clears the condition; one element suffices.
        return Ok(1);
    }
    Ok((radicand.sqrt().ceil() as usize).max(1))
}

/// The uniform per-element gain that exhausts the amplification budget.
pub fn optimal_uniform_amplification(s: &SizingInputs, n: usize) -> Result<f64> {
    s.prm.validate()?;
    if n < 1 {
        return Err(Error::Domain("element count must be at least 1".into()));
    }
    if !(s.prm.prob_h1 > 0.0) {
        return Err(Error::Domain(
            "a zero activity prior puts no limit on the gain".into(),
        ));
    }
    let draw = s.prm.p * s.hr_min * s.hr_min + s.prm.sigma2;
    Ok((s.prm.p_ris_max / (s.prm.prob_h1 * n as f64 * draw)).sqrt())
}

/// Detection probability of the amplifying surface with n elements at the
/// budget-exhausting uniform gain, on the worst-element channel.
pub fn pd_active_uniform(s: &SizingInputs, n: usize) -> Result<f64> {
    let (r, sqrt_i) = quantile_numerator(&s.prm)?;
    if n < 1 {
        return Err(Error::Domain("element count must be at least 1".into()));
    }
    if !(s.prm.prob_h1 > 0.0) {
        return Err(Error::Domain(
            "a zero activity prior puts no limit on the gain".into(),
        ));
    }
    let h2 = s.h_min * s.h_min;
    let hr2 = s.hr_min * s.hr_min;
    let mean_energy = (s.prm.p * n as f64 * h2 * hr2 * s.prm.p_ris_max
        + s.prm.sigma2 * h2 * s.prm.p_ris_max)
        / (s.prm.prob_h1 * (s.prm.p * hr2 + s.prm.sigma2));
    Ok(crate::math::q_function(
        r / (mean_energy + s.prm.delta2) - sqrt_i,
    ))
}

/// Detection probability of the phase-only surface with n elements on the
/// worst-element channel.
pub fn pd_passive_uniform(s: &SizingInputs, n: usize) -> Result<f64> {
    let (r, sqrt_i) = quantile_numerator(&s.prm)?;
    if n < 1 {
        return Err(Error::Domain("element count must be at least 1".into()));
    }
    let nn = n as f64;
    let mean_energy = s.prm.p * nn * nn * s.h_min * s.h_min * s.hr_min * s.hr_min;
    Ok(crate::math::q_function(
        r / (mean_energy + s.prm.delta2) - sqrt_i,
    ))
}

/// Smallest element count at which the amplifying surface reaches Q(-3)
/// under the budget-exhausting uniform gain. Zero means the budget clears
/// the condition for any count.
pub fn min_elements_active(s: &SizingInputs) -> Result<usize> {
    let (r, sqrt_i) = quantile_numerator(&s.prm)?;
    if !(s.prm.p_ris_max > 0.0) {
        return Err(Error::Domain(
            "no element count compensates for a zero amplification budget".into(),
        ));
    }
    let h2 = s.h_min * s.h_min;
    let hr2 = s.hr_min * s.hr_min;
    let prior_draw = s.prm.prob_h1 * (s.prm.p * hr2 + s.prm.sigma2);
    let scale = s.prm.p * h2 * hr2 * s.prm.p_ris_max;
    let bracket = prior_draw * r / ((sqrt_i - 3.0) * scale)
        - (prior_draw * s.prm.delta2 + s.prm.sigma2 * h2 * s.prm.p_ris_max) / scale;
    if bracket <= 0.0 {
        return Ok(0);
    }
    Ok(bracket.ceil() as usize)
}

/// Which surface detects better at the given element counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    ActiveWins,
    PassiveWins,
}

/// Orders the two surfaces by mean received energy at the given counts and
/// also evaluates the count-only shortcut predicate. The shortcut implies
/// the full comparison whenever the uniform gain is at least one; below
/// that the amplifying surface attenuates and the shortcut says nothing.
pub fn compare_active_passive(
    s: &SizingInputs,
    n_act: usize,
    n_pas: usize,
) -> Result<(Winner, bool)> {
    s.prm.validate()?;
    if n_act < 1 || n_pas < 1 {
        return Err(Error::Domain("element counts must be at least 1".into()));
    }
    if !(s.prm.prob_h1 > 0.0) {
        return Err(Error::Domain(
            "a zero activity prior puts no limit on the gain".into(),
        ));
    }
    let h2 = s.h_min * s.h_min;
    let hr2 = s.hr_min * s.hr_min;
    let active_energy = (s.prm.p * h2 * hr2 * n_act as f64 * s.prm.p_ris_max
        + s.prm.sigma2 * h2 * s.prm.p_ris_max)
        / (s.prm.prob_h1 * (s.prm.p * hr2 + s.prm.sigma2));
    let passive_energy = s.prm.p * h2 * hr2 * (n_pas as f64) * (n_pas as f64);
    let winner = if active_energy > passive_energy {
        Winner::ActiveWins
    } else {
        Winner::PassiveWins
    };

    let na = n_act as f64;
    let np = n_pas as f64;
    let shortcut = na * na + s.prm.sigma2 / (s.prm.p * hr2) * na > np * np;
    if shortcut && optimal_uniform_amplification(s, n_act)? >= 1.0 {
        debug_assert_eq!(winner, Winner::ActiveWins);
    }
    Ok((winner, shortcut))
}

/// Element counts affordable within a total deployment budget: every
/// element pays the phase-switch draw, and an amplifying element also pays
/// its DC bias, after the amplification budget is set aside.
pub fn elements_from_power_budget(
    p_total: PowerValue,
    p_c: PowerValue,
    p_dc: PowerValue,
    p_ris_max: PowerValue,
) -> Result<(usize, usize)> {
    if !(p_c.watts() > 0.0) {
        return Err(Error::Domain(
            "per-element switch power must be positive".into(),
        ));
    }
    let n_pas = (p_total.watts() / p_c.watts()).floor() as usize;
    let left = p_total.watts() - p_ris_max.watts();
    let n_act = if left <= 0.0 {
        0
    } else {
        (left / (p_c.watts() + p_dc.watts())).floor() as usize
    };
    Ok((n_pas, n_act))
}
