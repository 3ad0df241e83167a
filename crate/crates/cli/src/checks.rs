//! Self-checks for the `validate` subcommand. Each check exercises one
//! promise the library makes, against simulation or an exhaustive reference,
//! on fixed seeds so a pass is reproducible. The whole suite stays in the
//! low single-digit seconds.

use std::f64::consts::TAU;

use ris_sensing::active::{one_stage_solve, two_stage_solve};
use ris_sensing::detector::{clt_moments_passive, SensingParams};
use ris_sensing::harness::{run_monte_carlo, ExperimentConfig, RunManifest, Scenario};
use ris_sensing::math::q_function;
use ris_sensing::passive::{solve_no_ris, solve_passive};
use ris_sensing::sizing::{
    compare_active_passive, min_elements_active, min_elements_passive,
    optimal_uniform_amplification, pd_active_uniform, pd_passive_uniform, SizingInputs, Winner,
};

type Check = std::result::Result<(), String>;

fn lib<T>(r: ris_sensing::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(detail)
    }
}

/// Runs every check, prints one PASS/FAIL line each, returns overall success.
pub fn run_all() -> bool {
    let suite: &[(&str, fn() -> Check)] = &[
        (
            "threshold_hits_the_false_alarm_target",
            threshold_false_alarm,
        ),
        (
            "statistic_moments_match_the_closed_forms",
            statistic_moments,
        ),
        ("reflection_never_hurts_detection", reflection_ordering),
        ("exhaustive_phase_grid_is_never_better", phase_grid_oracle),
        ("element_counts_are_minimal", sizing_minimality),
        (
            "count_shortcut_implies_the_energy_verdict",
            comparison_shortcut,
        ),
        ("manifest_round_trips_its_config", manifest_round_trip),
        ("bisection_matches_the_joint_ascent", solver_dominance),
    ];
    let mut ok = true;
    for (name, check) in suite {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(detail) => {
                ok = false;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    ok
}

/// Sensing window of 600 samples; keeps simulation-backed checks fast.
fn quick_prm() -> SensingParams {
    SensingParams {
        tau: 1e-4,
        ..Default::default()
    }
}

fn threshold_false_alarm() -> Check {
    let sc = Scenario::default();
    let ch = lib(sc.sample(0))?;
    let sol = lib(sc.solve(&ch))?;
    let mc = lib(run_monte_carlo(&sc, &ch, &sol, 2000))?;
    let slack = 3.0 * mc.stderr_pf + 0.01;
    ensure(
        (mc.pf - sc.prm.pf_max).abs() <= slack,
        format!(
            "measured false-alarm rate {:.4} strays from the target {} by more than {:.4}",
            mc.pf, sc.prm.pf_max, slack
        ),
    )
}

fn statistic_moments() -> Check {
    let sc = Scenario {
        prm: quick_prm(),
        ..Default::default()
    };
    let ch = lib(sc.sample(1))?;
    let sol = lib(sc.solve(&ch))?;
    let stats = lib(clt_moments_passive(&sol.w, &sol.theta, &ch, &sc.prm))?;
    let mc = lib(run_monte_carlo(&sc, &ch, &sol, 4000))?;
    let k = mc.trials as f64;
    let pairs = [
        ("H0 mean", mc.t_mean_h0, stats.u0, 4.0 * (stats.v0 / k).sqrt()),
        ("H1 mean", mc.t_mean_h1, stats.u1, 4.0 * (stats.v1 / k).sqrt()),
        (
            "H0 variance",
            mc.t_var_h0,
            stats.v0,
            4.0 * stats.v0 * (2.0 / (k - 1.0)).sqrt(),
        ),
        (
            "H1 variance",
            mc.t_var_h1,
            stats.v1,
            4.0 * stats.v1 * (2.0 / (k - 1.0)).sqrt(),
        ),
    ];
    for (what, got, want, tol) in pairs {
        ensure(
            (got - want).abs() <= tol,
            format!("{what}: simulated {got:.6e} vs closed form {want:.6e}, tolerance {tol:.2e}"),
        )?;
    }
    Ok(())
}

fn reflection_ordering() -> Check {
    for seed in 0..5u64 {
        let passive = Scenario {
            channel_seed: seed,
            ..Default::default()
        };
        let ch = lib(passive.sample(0))?;
        let with = lib(solve_passive(&ch, &passive.prm))?;
        let without = lib(solve_no_ris(&ch, &passive.prm))?;
        ensure(
            with.pd >= without.pd - 1e-12,
            format!(
                "seed {seed}: passive surface pd {:.6} below the no-surface pd {:.6}",
                with.pd, without.pd
            ),
        )?;
    }
    Ok(())
}

fn phase_grid_oracle() -> Check {
    let sc = Scenario {
        m: 2,
        n: 2,
        channel_seed: 3,
        ..Default::default()
    };
    let ch = lib(sc.sample(0))?;
    let sol = lib(solve_passive(&ch, &sc.prm))?;
    let ones = [1.0, 1.0];
    let mut best = 0.0f64;
    for k1 in 0..16 {
        for k2 in 0..16 {
            let theta = [TAU * k1 as f64 / 16.0, TAU * k2 as f64 / 16.0];
            let c = ch.combined(&theta, &ones);
            let energy: f64 = c.iter().map(|z| z.norm_sqr()).sum();
            best = best.max(sc.prm.p * energy / sc.prm.delta2);
        }
    }
    ensure(
        sol.gamma >= best * (1.0 - 1e-9),
        format!(
            "continuous design reached gamma {:.6e}, below the 16-level grid's {:.6e}",
            sol.gamma, best
        ),
    )
}

/// Deterministic spread of link budgets covering several decades.
fn sizing_grid() -> Vec<SizingInputs> {
    let mut out = Vec::new();
    for &p in &[1e-3, 0.1, 10.0] {
        for &h in &[1e-5, 1e-3] {
            for &hr in &[1e-4, 1e-2] {
                for &pf in &[0.05, 0.2] {
                    for &budget in &[1e-6, 1e-3] {
                        let prm = SensingParams {
                            p,
                            pf_max: pf,
                            p_ris_max: budget,
                            ..Default::default()
                        };
                        out.push(SizingInputs::new(prm, h, hr).expect("grid inputs are valid"));
                    }
                }
            }
        }
    }
    out
}

fn sizing_minimality() -> Check {
    let q3 = q_function(-3.0);
    for (i, s) in sizing_grid().iter().enumerate() {
        let n_pas = lib(min_elements_passive(s))?;
        ensure(
            lib(pd_passive_uniform(s, n_pas))? >= q3,
            format!("combo {i}: {n_pas} phase-only elements miss the three-sigma bar"),
        )?;
        if n_pas > 1 {
            ensure(
                lib(pd_passive_uniform(s, n_pas - 1))? < q3,
                format!("combo {i}: {} phase-only elements already suffice", n_pas - 1),
            )?;
        }
        let n_act = lib(min_elements_active(s))?;
        let reached = lib(pd_active_uniform(s, n_act.max(1)))?;
        ensure(
            reached >= q3,
            format!("combo {i}: {n_act} amplifying elements miss the three-sigma bar"),
        )?;
        if n_act > 1 {
            ensure(
                lib(pd_active_uniform(s, n_act - 1))? < q3,
                format!("combo {i}: {} amplifying elements already suffice", n_act - 1),
            )?;
        }
    }
    Ok(())
}

fn comparison_shortcut() -> Check {
    let mut asserted = 0usize;
    for s in sizing_grid() {
        for (n_act, n_pas) in [(4usize, 3usize), (2, 5), (6, 6)] {
            let (winner, shortcut) = lib(compare_active_passive(&s, n_act, n_pas))?;
            if shortcut && lib(optimal_uniform_amplification(&s, n_act))? >= 1.0 {
                ensure(
                    winner == Winner::ActiveWins,
                    format!(
                        "shortcut held at ({n_act}, {n_pas}) with amplifying gain, \
                         yet the phase-only surface won"
                    ),
                )?;
                asserted += 1;
            }
        }
    }
    ensure(
        asserted >= 5,
        format!("only {asserted} grid combos landed in the amplifying regime"),
    )
}

fn manifest_round_trip() -> Check {
    let cfg = ExperimentConfig::default();
    let manifest = lib(RunManifest::new(&cfg))?;
    let json = serde_json::to_string(&manifest).map_err(|e| e.to_string())?;
    let back: RunManifest = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    ensure(back.config == cfg, "config changed across the round trip".into())?;
    ensure(
        lib(RunManifest::new(&back.config))?.config_sha256 == manifest.config_sha256,
        "config hash is not reproducible".into(),
    )
}

fn solver_dominance() -> Check {
    for seed in [11u64, 12] {
        let sc = Scenario {
            m: 3,
            n: 3,
            prm: quick_prm(),
            channel_seed: seed,
            ..Default::default()
        };
        let ch = lib(sc.sample(0))?;
        let one = lib(one_stage_solve(&ch, &sc.prm))?;
        let two = lib(two_stage_solve(&ch, &sc.prm))?;
        ensure(
            two.pd >= one.pd - 1e-3,
            format!(
                "seed {seed}: bisection pd {:.6} trails the joint ascent pd {:.6}",
                two.pd, one.pd
            ),
        )?;
    }
    Ok(())
}
