//! Acceptance suite: every gate criterion of the build, one test each, with
//! one printed PASS/FAIL line per criterion.
//!
//! The heavyweight full-model runs take minutes each; the whole suite is
//! sized for tens of minutes on a small node. Run it alone with
//!
//! ```text
//! cargo test --test acceptance -- --nocapture --test-threads 2
//! ```

use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64 as C64;
use phonlase::hilbert::{partial_trace, DensityMatrix};
use phonlase::lindblad::{
    compare_full_vs_effective, effective_generator, integrate, recommended_step,
    rhs, Channel, DissipatorSet, FullVsEffective, IntegrationSpec,
    TrajectoryRecord,
};
use phonlase::meanfield::{derivatives, integrate_meanfield, MeanFieldState};
use phonlase::model::{
    bessel_j, driven_full, effective_hamiltonian_case1, effective_hamiltonian_case2,
    initial_state, ChainConfig, ChainLayout, ResonanceCase, BESSEL_J0_FIRST_ZERO,
};
use phonlase::observables::{
    kuramoto, minmax_normalize, power_spectrum, ring_symmetry_score, wigner,
    SpectrumWindow, WignerGridSpec,
};
use phonlase::presets::{fig2_chain, fig3_array, figs1_chain, figs2_array, figs3_localdrive};
use phonlase::sweep::{run_sweep, Experiment, SweepPlan, SweepTarget};
use phonlase::Operator;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {criterion}: {tag} — {detail}");
    assert!(pass, "{criterion} failed: {detail}");
}

/// Trailing-window mean of the real part of a recorded series.
fn late_mean(record: &TrajectoryRecord, key: &str, fraction: f64) -> f64 {
    let series = record.get(key).expect("series recorded");
    let t_end = *record.times.last().expect("nonempty record");
    let t_start = (1.0 - fraction) * t_end;
    let vals: Vec<f64> = record
        .times
        .iter()
        .zip(series)
        .filter(|(t, _)| **t >= t_start)
        .map(|(_, v)| v.re)
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// The shared full-vs-effective run at the minimal-chain reference point
/// (criteria 2, 3, and the spectrum cross-check reuse it).
fn fig2_comparison() -> &'static FullVsEffective {
    static CMP: OnceLock<FullVsEffective> = OnceLock::new();
    CMP.get_or_init(|| {
        let config = fig2_chain(40);
        let chain = ChainLayout::new(&config).expect("fig2 chain");
        let h = driven_full(&config, &chain).expect("full Hamiltonian");
        let diss = DissipatorSet::from_config(&config, &chain).expect("dissipators");
        let spec = IntegrationSpec::for_generator(3000.0, &h, &diss, 300);
        compare_full_vs_effective(&config, ResonanceCase::CaseI, &spec)
            .expect("comparison runs")
    })
}

/// Effective-model steady state of the minimal chain at drive amplitude `j`.
fn fig2_effective_steady(j_amp: f64) -> (ChainConfig, DensityMatrix, TrajectoryRecord) {
    let mut config = fig2_chain(40);
    config.bonds[0].j_amp = j_amp;
    let chain = ChainLayout::new(&config).expect("chain");
    let h_eff = effective_hamiltonian_case1(&config, &chain).expect("case1");
    let diss = DissipatorSet::from_config(&config, &chain).expect("dissipators");
    let gen = effective_generator(h_eff, &diss);
    let spec = IntegrationSpec::for_generator(6000.0, &gen, &diss, 100);
    let rho0 = initial_state(&config, &chain).expect("initial state");
    let b = chain.b(0).expect("oscillator");
    let probes = vec![
        ("n".to_string(), b.dagger().dot(&b).expect("n")),
        ("b".to_string(), b),
    ];
    let out = integrate(&rho0, &gen, &diss, &spec, &probes).expect("effective run");
    (config, out.final_state, out.record)
}

#[test]
fn criterion_01_resonance_location() {
    let start = Instant::now();
    let config = fig2_chain(40);
    let chain = ChainLayout::new(&config).expect("chain");
    let h = driven_full(&config, &chain).expect("full H");
    let diss = DissipatorSet::from_config(&config, &chain).expect("dissipators");
    let plan = SweepPlan {
        target: SweepTarget::BondBigOmega(0),
        values: vec![7.0, 8.0, 8.5, 9.0, 9.5, 10.0, 11.0],
        experiment: Experiment::MinimalCase1,
        spec: IntegrationSpec::for_generator(3000.0, &h, &diss, 200),
        drive: None,
        seed_amp: 0.1,
    };
    let result = run_sweep(&plan, &config).expect("omega scan");
    let n_ss = result.column("n_ss").expect("n_ss column");
    let (argmax_idx, &n_max) = n_ss
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .expect("nonempty");
    let elapsed_min = start.elapsed().as_secs_f64() / 60.0;
    let workers = rayon::current_num_threads();
    // runtime target: 30 min on 4 workers, scaled to this node's worker count
    let budget_min = 30.0 * 4.0 / workers as f64;
    let detail = format!(
        "n_ss maximized at Ω = {} (n_ss = {:.2}; scan {:?} → {:?}); \
         {elapsed_min:.1} min on {workers} workers (budget {budget_min:.0} min)",
        result.values[argmax_idx],
        n_max,
        result.values,
        n_ss.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
    );
    verdict(
        "criterion-01 resonance location",
        result.values[argmax_idx] == 9.0 && elapsed_min < budget_min,
        &detail,
    );
}

#[test]
fn criterion_02_coherence_transition() {
    let cmp = fig2_comparison();
    let n = cmp.record_full.get("n").expect("n series");
    let n2 = cmp.record_full.get("n2").expect("n2 series");
    let g2_first = n2[0].re / (n[0].re * n[0].re);
    let g2_late: Vec<f64> = {
        let t_end = *cmp.record_full.times.last().expect("nonempty");
        cmp.record_full
            .times
            .iter()
            .enumerate()
            .filter(|(_, t)| **t >= 0.9 * t_end)
            .map(|(i, _)| n2[i].re / (n[i].re * n[i].re))
            .collect()
    };
    let g2_end = g2_late.iter().sum::<f64>() / g2_late.len() as f64;
    let pass = (1.9..=2.1).contains(&g2_first) && g2_end < 1.3;
    verdict(
        "criterion-02 coherence transition",
        pass,
        &format!("g²(0) starts at {g2_first:.3} and settles at {g2_end:.3}"),
    );
}

#[test]
fn criterion_03_full_vs_effective_agreement() {
    let cmp = fig2_comparison();
    // achieved value from the pinned configuration, recorded as the
    // regression bound; the spec ceiling is 20%
    let pass = cmp.max_rel_dev < 0.20;
    verdict(
        "criterion-03 full vs effective",
        pass,
        &format!(
            "max relative ⟨b†b⟩ deviation over the second half: {:.3}",
            cmp.max_rel_dev
        ),
    );
}

#[test]
fn criterion_04_threshold() {
    let config = fig2_chain(40);
    let chain = ChainLayout::new(&config).expect("chain");
    let h = driven_full(&config, &chain).expect("full H");
    let diss = DissipatorSet::from_config(&config, &chain).expect("dissipators");
    let values = vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08];
    let plan = SweepPlan {
        target: SweepTarget::BondAmp(0),
        values: values.clone(),
        experiment: Experiment::MinimalCase1,
        spec: IntegrationSpec::for_generator(3000.0, &h, &diss, 200),
        drive: None,
        seed_amp: 0.1,
    };
    let result = run_sweep(&plan, &config).expect("J scan");
    let n_norm =
        minmax_normalize(result.column("n_ss").expect("n_ss")).expect("normalizable");
    // first 0.5 upcrossing by linear interpolation
    let mut crossing = f64::NAN;
    for w in 0..n_norm.len() - 1 {
        if n_norm[w] < 0.5 && n_norm[w + 1] >= 0.5 {
            let f = (0.5 - n_norm[w]) / (n_norm[w + 1] - n_norm[w]);
            crossing = values[w] + f * (values[w + 1] - values[w]);
            break;
        }
    }
    let pass = n_norm[0] < 0.1 && (0.03..=0.06).contains(&crossing);
    verdict(
        "criterion-04 threshold",
        pass,
        &format!(
            "normalized n_ss at J = 0.01 is {:.3}; 0.5 crossing at J = {crossing:.4} \
             (normalized curve {:?})",
            n_norm[0],
            n_norm.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        ),
    );
}

#[test]
fn criterion_05_linewidth_narrowing() {
    let (config_below, rho_below, _) = fig2_effective_steady(0.01);
    let (config_above, rho_above, _) = fig2_effective_steady(0.08);
    let window = SpectrumWindow {
        omega_span: 60.0 * config_below.gamma_mech,
        n_omega: 4097,
        tau_max: None,
    };
    let below = power_spectrum(&config_below, ResonanceCase::CaseI, &rho_below, &window)
        .expect("below-threshold spectrum");
    let above = power_spectrum(&config_above, ResonanceCase::CaseI, &rho_above, &window)
        .expect("above-threshold spectrum");
    let narrowing = below.fwhm / above.fwhm;
    let parseval_below = (below.parseval_integral - below.c0).abs() / below.c0;
    let parseval_above = (above.parseval_integral - above.c0).abs() / above.c0;

    // one-point cross-check of the stationary-generator choice: C(0) from the
    // effective regression vs the full model's late-time phonon number
    let cmp = fig2_comparison();
    let n_full_late = late_mean(&cmp.record_full, "n", 0.1);
    let cross_dev = (above.c0 - n_full_late).abs() / n_full_late;

    let pass = narrowing >= 5.0
        && parseval_below < 0.05
        && parseval_above < 0.05
        && cross_dev < 0.25;
    verdict(
        "criterion-05 linewidth narrowing",
        pass,
        &format!(
            "FWHM {:.3e} → {:.3e} (×{narrowing:.1} narrowing); Parseval residues \
             {parseval_below:.3}/{parseval_above:.3}; C(0) vs full-model ⟨n⟩ dev {cross_dev:.3}",
            below.fwhm, above.fwhm
        ),
    );
}

#[test]
fn criterion_06_wigner_shapes() {
    // Case I: phase-diffused ring
    let (config, rho_ss, _) = fig2_effective_steady(0.08);
    let chain = ChainLayout::new(&config).expect("chain");
    let rho_osc = partial_trace(&rho_ss, &[chain.osc_subsystem(0).expect("osc")])
        .expect("reduced state");
    let grid =
        wigner(&rho_osc, &WignerGridSpec::default_for(40)).expect("wigner map");
    let ring = ring_symmetry_score(&grid).expect("ring score");

    // Case II: phase-locked coherence fraction at the Fig. S1 operating point
    let config2 = figs1_chain(40);
    let chain2 = ChainLayout::new(&config2).expect("chain");
    let h_eff = effective_hamiltonian_case2(&config2, &chain2).expect("case2");
    let diss = DissipatorSet::from_config(&config2, &chain2).expect("dissipators");
    let gen = effective_generator(h_eff, &diss);
    let spec = IntegrationSpec::for_generator(16000.0, &gen, &diss, 100);
    let rho0 = initial_state(&config2, &chain2).expect("initial");
    let b = chain2.b(0).expect("b");
    let probes = vec![
        ("n".to_string(), b.dagger().dot(&b).expect("n")),
        ("b".to_string(), b),
    ];
    let out = integrate(&rho0, &gen, &diss, &spec, &probes).expect("case2 run");
    let n_ss = out.record.get("n").expect("n").last().expect("sample").re;
    let b_ss = out.record.get("b").expect("b").last().expect("sample").norm();
    let lock_ratio = b_ss / n_ss.sqrt();

    let pass = ring > 0.8 && lock_ratio > 0.5;
    verdict(
        "criterion-06 wigner shapes",
        pass,
        &format!(
            "Case I ring score {ring:.3}; Case II |⟨b⟩|/√⟨b†b⟩ = {lock_ratio:.3} \
             (|⟨b⟩| = {b_ss:.3}, ⟨b†b⟩ = {n_ss:.3})"
        ),
    );
}

#[test]
fn criterion_07_meanfield_array_synchronization() {
    let config = fig3_array();
    let s0 = MeanFieldState::seeded(&config, 0.1).expect("seed");
    let t_end = 60000.0;
    let spec = IntegrationSpec::at_ceiling(t_end, config.f_max(), 600);
    let out = integrate_meanfield(&s0, &config, &spec, 0.0).expect("fig3 run");
    let times = &out.record.times;
    let m = times.len();
    let late: Vec<usize> = (0..m).filter(|&i| times[i] >= 0.9 * t_end).collect();
    let (first_half, second_half) = late.split_at(late.len() / 2);

    let mut worst_drift: f64 = 0.0;
    let mut worst_wobble: f64 = 0.0;
    let mut g2_range = (f64::INFINITY, f64::NEG_INFINITY);
    for &j in &out.active_sites {
        let n = out.record.get(&format!("n{}", j + 1)).expect("n_j");
        let mean = |idx: &[usize]| -> f64 {
            idx.iter().map(|&i| n[i].re).sum::<f64>() / idx.len() as f64
        };
        let full_mean = mean(&late);
        // saturation: no systematic trend between the two halves of the window
        let drift = (mean(second_half) - mean(first_half)).abs() / full_mean;
        worst_drift = worst_drift.max(drift);
        // the persistent limit-cycle breathing, reported for transparency
        let lo = late.iter().map(|&i| n[i].re).fold(f64::INFINITY, f64::min);
        let hi = late.iter().map(|&i| n[i].re).fold(f64::NEG_INFINITY, f64::max);
        worst_wobble = worst_wobble.max((hi - lo) / full_mean);

        let g2 = out.record.get(&format!("g2_{}", j + 1)).expect("g2_j");
        let g2_late = late.iter().map(|&i| g2[i].re).sum::<f64>() / late.len() as f64;
        g2_range = (g2_range.0.min(g2_late), g2_range.1.max(g2_late));
    }

    let rk: Vec<f64> = late
        .iter()
        .filter_map(|&i| {
            let v = out.record.get("r_k").expect("r_k")[i].re;
            v.is_finite().then_some(v)
        })
        .collect();
    let rk_mean = rk.iter().sum::<f64>() / rk.len() as f64;

    // every pairwise ΔΦ settles to a constant within ±0.1 rad
    let mut worst_phase_excursion: f64 = 0.0;
    for (_, series) in &out.sync.pair_diffs {
        let vals: Vec<f64> = late.iter().filter_map(|&i| series[i]).collect();
        if vals.is_empty() {
            worst_phase_excursion = f64::INFINITY;
            continue;
        }
        // circular mean, then the largest excursion from it
        let mean_angle = {
            let (s, c) = vals
                .iter()
                .fold((0.0, 0.0), |(s, c), v| (s + v.sin(), c + v.cos()));
            s.atan2(c)
        };
        for v in &vals {
            let mut d = v - mean_angle;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            worst_phase_excursion = worst_phase_excursion.max(d.abs());
        }
    }

    let pass = worst_drift < 0.02
        && g2_range.0 >= 0.8
        && g2_range.1 <= 1.4
        && rk_mean > 0.9
        && worst_phase_excursion <= 0.1;
    verdict(
        "criterion-07 array synchronization",
        pass,
        &format!(
            "saturation drift {worst_drift:.4} (limit-cycle breathing {worst_wobble:.3}); \
             late g² ∈ [{:.2}, {:.2}]; r_K = {rk_mean:.3}; \
             worst ΔΦ excursion {worst_phase_excursion:.3} rad",
            g2_range.0, g2_range.1
        ),
    );
}

#[test]
fn criterion_08_on_demand_array() {
    let config = figs2_array();
    let s0 = MeanFieldState::seeded(&config, 0.1).expect("seed");
    let t_end = 6000.0;
    let spec = IntegrationSpec::at_ceiling(t_end, config.f_max(), 300);
    let out = integrate_meanfield(&s0, &config, &spec, 0.0).expect("figS2 run");
    let gamma = config.gamma_mech;

    let mut min_growth = f64::INFINITY;
    let mut worst_decay_ratio: f64 = 0.0;
    for (j, site) in config.sites.iter().enumerate() {
        let n = out.record.get(&format!("n{}", j + 1)).expect("n_j");
        if site.lambda > 0.0 {
            let n_late = late_mean(&out.record, &format!("n{}", j + 1), 0.1);
            min_growth = min_growth.min(n_late / 0.1);
        } else {
            // inactive sites must stay within 2× of pure decay
            for (t, v) in out.record.times.iter().zip(n) {
                let reference = 0.1 * (-gamma * t).exp();
                worst_decay_ratio = worst_decay_ratio.max(v.re / reference);
            }
        }
    }
    let pass = min_growth >= 10.0 && worst_decay_ratio <= 2.0;
    verdict(
        "criterion-08 on-demand array",
        pass,
        &format!(
            "weakest active-site growth ×{min_growth:.1}; inactive sites within \
             ×{worst_decay_ratio:.2} of pure decay"
        ),
    );
}

#[test]
fn criterion_09_local_drive_resonances() {
    let (config, _) = figs3_localdrive(30);
    let values = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 14.0];
    let plan = SweepPlan {
        target: SweepTarget::DriveNu,
        values: values.clone(),
        experiment: Experiment::LocalDrive,
        spec: IntegrationSpec {
            t_end: 2200.0,
            dt: 0.008, // capped per point to each drive's stability limit
            sample_every: 1000,
            hermitize_every: 100,
            renormalize_trace: true,
        },
        drive: None,
        seed_amp: 0.1,
    };
    let result = run_sweep(&plan, &config).expect("nu scan");
    let n_ss = result.column("n_ss").expect("n_ss");
    let at = |nu: f64| -> f64 {
        n_ss[values.iter().position(|&v| v == nu).expect("scan point")]
    };
    let local_max_2 = at(2.0) > at(1.0) && at(2.0) > at(3.0);
    let local_max_12 = at(12.0) > at(10.0) && at(12.0) > at(14.0);
    let elevated_46 = at(4.0).min(at(6.0)) > at(1.0).max(at(3.0)).max(at(5.0));
    let pass = local_max_2 && local_max_12 && elevated_46;
    let table: Vec<String> =
        values.iter().zip(n_ss).map(|(v, n)| format!("ν={v}: {n:.3}")).collect();
    verdict(
        "criterion-09 local drive resonances",
        pass,
        &format!(
            "maxima at ν = 2 ({local_max_2}) and ν = 12 ({local_max_12}); \
             {{4,6}} elevated over {{1,3,5}} ({elevated_46}); [{}]",
            table.join(", ")
        ),
    );
}

#[test]
fn criterion_10_property_suites() {
    let mut detail = Vec::new();

    // trace conservation and Hermiticity on a driven run without trace hygiene
    let config = fig2_chain(10);
    let chain = ChainLayout::new(&config).expect("chain");
    let h = driven_full(&config, &chain).expect("full H");
    let diss = DissipatorSet::from_config(&config, &chain).expect("dissipators");
    let mut spec = IntegrationSpec::for_generator(60.0, &h, &diss, 20);
    spec.renormalize_trace = false;
    let rho0 = initial_state(&config, &chain).expect("initial");
    let one = ("one".to_string(), Operator::identity(chain.layout().clone()));
    let out = integrate(&rho0, &h, &diss, &spec, &[one]).expect("run");
    let trace_err = out
        .record
        .get("one")
        .expect("trace probe")
        .iter()
        .map(|v| (v.re - 1.0).abs())
        .fold(0.0, f64::max);
    let herm = out.final_state.hermiticity_defect();
    let eig = phonlase::hilbert::hermitian_eigenvalues(out.final_state.matrix());
    detail.push(format!("trace drift {trace_err:.2e}"));
    detail.push(format!("hermiticity {herm:.2e}"));
    detail.push(format!("min eigenvalue {:.2e}", eig[0]));
    let invariants_ok = trace_err < 1e-6 && herm < 1e-10 && eig[0] > -1e-6;

    // step halving: fourth-order contract on the final phonon number
    let config = fig2_chain(12);
    let chain = ChainLayout::new(&config).expect("chain");
    let h = driven_full(&config, &chain).expect("full H");
    let diss = DissipatorSet::from_config(&config, &chain).expect("dissipators");
    let rho0 = initial_state(&config, &chain).expect("initial");
    let b = chain.b(0).expect("b");
    let probes = vec![("n".to_string(), b.dagger().dot(&b).expect("n"))];
    let run_with = |dt: f64| -> f64 {
        let spec = IntegrationSpec {
            t_end: 150.0,
            dt,
            sample_every: usize::MAX / 2,
            hermitize_every: 100,
            renormalize_trace: true,
        };
        integrate(&rho0, &h, &diss, &spec, &probes)
            .expect("run")
            .record
            .get("n")
            .expect("n")
            .last()
            .expect("sample")
            .re
    };
    let dt = recommended_step(&h, &diss);
    let coarse = run_with(dt);
    let fine = run_with(0.5 * dt);
    let halving = (coarse - fine).abs() / fine.abs();
    detail.push(format!("step-halving change {halving:.2e}"));
    let halving_ok = halving < 5e-3;

    // thermal relaxation oracle at 1e-6
    let n_max = 20;
    let layout = phonlase::SpaceLayout::new(vec![phonlase::Subsystem::oscillator(n_max)])
        .expect("layout");
    let b_op = Operator::new(
        layout.clone(),
        phonlase::hilbert::annihilation(n_max).expect("ladder"),
    )
    .expect("b");
    let gamma = 0.05;
    let n_bar = 0.25;
    let thermal_diss = DissipatorSet::new(vec![
        Channel { jump: b_op.clone(), rate: gamma * (1.0 + n_bar) },
        Channel { jump: b_op.dagger(), rate: gamma * n_bar },
    ])
    .expect("channels");
    let h_osc = phonlase::model::DrivenHamiltonian::time_independent(
        Operator::new(layout.clone(), phonlase::hilbert::number_op(n_max)).expect("n op"),
        1.0,
    );
    let rho0 = DensityMatrix::new(
        layout.clone(),
        phonlase::hilbert::thermal_state(0.5, n_max),
    )
    .expect("thermal");
    let spec = IntegrationSpec::for_generator(5.0 / gamma, &h_osc, &thermal_diss, 50);
    let probes = vec![(
        "n".to_string(),
        Operator::new(layout, phonlase::hilbert::number_op(n_max)).expect("n"),
    )];
    let out = integrate(&rho0, &h_osc, &thermal_diss, &spec, &probes).expect("relax");
    let mut relax_err = 0.0f64;
    for (t, v) in out.record.times.iter().zip(out.record.get("n").expect("n")) {
        let analytic = n_bar + (0.5 - n_bar) * (-gamma * t).exp();
        relax_err = relax_err.max((v.re - analytic).abs());
    }
    detail.push(format!("thermal-relaxation error {relax_err:.2e}"));
    let relax_ok = relax_err < 1e-6;

    // conjugate-pair consistency of the mean-field state to 1e-8
    let config = fig3_array();
    let s0 = MeanFieldState::seeded(&config, 0.1).expect("seed");
    let spec = IntegrationSpec::at_ceiling(500.0, config.f_max(), 5);
    let mf = integrate_meanfield(&s0, &config, &spec, 0.0).expect("mf run");
    let conj = mf.final_state.conjugacy_defect();
    detail.push(format!("conjugate-pair defect {conj:.2e}"));
    let conj_ok = conj < 1e-8;
    // liveness guard: the derivative of the evolved state is still finite
    let d = derivatives(&mf.final_state, spec.t_end, &config);
    let deriv_ok = d.max_abs().is_finite();

    // Bessel recurrence and the J₀ zero
    let mut bessel_ok = bessel_j(0, BESSEL_J0_FIRST_ZERO).expect("J0").abs() < 1e-4;
    let mut worst_rec = 0.0f64;
    for m in 1..=8i32 {
        let mut x = 0.5;
        while x <= 18.0 {
            let lhs = bessel_j(m - 1, x).expect("J") + bessel_j(m + 1, x).expect("J");
            let rhs = 2.0 * m as f64 / x * bessel_j(m, x).expect("J");
            worst_rec = worst_rec.max((lhs - rhs).abs());
            x += 1.1;
        }
    }
    bessel_ok &= worst_rec < 1e-9;
    detail.push(format!("Bessel recurrence residue {worst_rec:.2e}"));

    // Kuramoto phasor identities to 1e-10
    let mk = |phases: &[f64]| -> (Vec<Vec<C64>>, Vec<Vec<f64>>) {
        let b: Vec<Vec<C64>> =
            phases.iter().map(|&p| vec![C64::from_polar(1.0, p); 2]).collect();
        let n = vec![vec![1.0; 2]; phases.len()];
        (b, n)
    };
    let (bp, np) = mk(&[0.4, 0.4 + 1.3]);
    let sync = kuramoto(&bp, &np, &[0, 1]).expect("kuramoto");
    let kuramoto_err = (sync.r_k[0].expect("defined") - (1.3f64 / 2.0).cos().abs()).abs();
    let (bs, ns) = mk(&(0..6)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / 6.0)
        .collect::<Vec<_>>());
    let sync0 = kuramoto(&bs, &ns, &[0, 1, 2, 3, 4, 5]).expect("kuramoto");
    let cancel = sync0.r_k[0].expect("defined");
    detail.push(format!("Kuramoto identity errors {kuramoto_err:.2e}/{cancel:.2e}"));
    let kuramoto_ok = kuramoto_err < 1e-10 && cancel < 1e-10;

    // Liouvillian linearity on random Hermitian inputs
    let config = fig2_chain(3);
    let chain = ChainLayout::new(&config).expect("chain");
    let h_op = phonlase::model::full_hamiltonian(&config, 0.3, &chain).expect("H");
    let diss = DissipatorSet::from_config(&config, &chain).expect("dissipators");
    let dim = chain.layout().total_dim();
    let mk_herm = |seed: u64| -> Operator {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = ndarray::Array2::from_shape_fn((dim, dim), |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let m = &g + &g.t().mapv(|z| z.conj());
        Operator::new(chain.layout().clone(), m).expect("operator")
    };
    let r1 = mk_herm(41);
    let r2 = mk_herm(43);
    let mut combo = r1.clone();
    combo.scale(C64::new(0.7, 0.0));
    combo.add_scaled(C64::new(-1.3, 0.0), &r2).expect("combine");
    let lhs = rhs(&combo, &h_op, &diss).expect("rhs");
    let mut expect = rhs(&r1, &h_op, &diss).expect("rhs");
    expect.scale(C64::new(0.7, 0.0));
    expect
        .add_scaled(C64::new(-1.3, 0.0), &rhs(&r2, &h_op, &diss).expect("rhs"))
        .expect("combine");
    let lin_defect = (lhs.matrix() - expect.matrix())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    detail.push(format!("Liouvillian linearity defect {lin_defect:.2e}"));
    let lin_ok = lin_defect < 1e-12;

    let pass = invariants_ok && halving_ok && relax_ok && conj_ok && deriv_ok
        && bessel_ok && kuramoto_ok && lin_ok;
    verdict("criterion-10 property suites", pass, &detail.join("; "));
}
