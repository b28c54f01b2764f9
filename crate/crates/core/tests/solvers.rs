use trgmm_core::em::{fit_em, kmeanspp_init, EmConfig, KppConfig};
use trgmm_core::experiments::{derive_seed, generate_mixture, matched_mse, SimSpec, WeightSpec};
use trgmm_core::model::{build_penalty_config, PenaltyConfig, PenaltyOverrides};
use trgmm_core::report::Termination;
use trgmm_core::rtr::{fit_rntr, TrConfig};

fn sim(d: usize, k: usize, m: usize, c: f64, e: f64, seed: u64) -> trgmm_core::experiments::SimulatedMixture {
    generate_mixture(&SimSpec {
        d,
        k,
        m,
        c,
        e,
        weights: WeightSpec::Uniform,
        seed,
    })
    .unwrap()
}

#[test]
fn em_objective_never_decreases() {
    for run in 0..5 {
        let s = sim(3, 3, 300, 1.0, 3.0, derive_seed(21, 0, run));
        let pen = build_penalty_config(&s.data, &PenaltyOverrides::default()).unwrap();
        let init = kmeanspp_init(&s.data, 3, &KppConfig { seed: run, n_candidates: 1 }).unwrap();
        let fit = fit_em(&s.data, &init, &EmConfig::default(), &pen).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1].objective >= w[0].objective - 1e-9 * w[0].objective.abs().max(1.0));
        }
    }
}

#[test]
fn solvers_agree_on_well_separated_data() {
    let s = sim(2, 3, 600, 5.0, 2.0, 77);
    let pen = build_penalty_config(&s.data, &PenaltyOverrides::default()).unwrap();
    let init = kmeanspp_init(&s.data, 3, &KppConfig { seed: 1, n_candidates: 3 }).unwrap();
    let em = fit_em(&s.data, &init, &EmConfig::default(), &pen).unwrap();
    let tr = fit_rntr(&s.data, &init, &TrConfig::default(), &pen).unwrap();
    assert!((em.average_log_likelihood() - tr.average_log_likelihood()).abs() < 1e-6);
    assert!(tr.iterations < em.iterations);
    let mse = matched_mse(&s.truth, &tr.params).unwrap();
    assert!(mse.means < 0.05 && mse.weights < 1e-2, "{mse:?}");
}

#[test]
fn rntr_started_at_em_optimum_stops_quickly() {
    let s = sim(2, 2, 400, 5.0, 1.5, 5);
    let pen = build_penalty_config(&s.data, &PenaltyOverrides::default()).unwrap();
    let init = kmeanspp_init(&s.data, 2, &KppConfig { seed: 4, n_candidates: 1 }).unwrap();
    let em = fit_em(&s.data, &init, &EmConfig { all_diff_tol: 1e-14, ..EmConfig::default() }, &pen).unwrap();
    let tr = fit_rntr(&s.data, &em.params, &TrConfig { grad_tol: 1e-6, ..TrConfig::default() }, &pen).unwrap();
    assert!(tr.iterations <= 3, "{} iterations", tr.iterations);
    assert!(tr.average_log_likelihood() >= em.average_log_likelihood() - 1e-10);
}

#[test]
fn unpenalized_fits_run() {
    let s = sim(2, 2, 300, 3.0, 2.0, 8);
    let pen = PenaltyConfig::disabled(2);
    let init = kmeanspp_init(&s.data, 2, &KppConfig { seed: 2, n_candidates: 1 }).unwrap();
    let tr = fit_rntr(&s.data, &init, &TrConfig::default(), &pen).unwrap();
    assert!(matches!(tr.termination, Termination::GradientNorm | Termination::AllDifference));
    let em = fit_em(&s.data, &init, &EmConfig { map_mode: false, ..EmConfig::default() }, &pen).unwrap();
    assert!((em.average_log_likelihood() - tr.average_log_likelihood()).abs() < 1e-6);
}

#[test]
fn trace_is_consistent_with_report() {
    let s = sim(2, 2, 200, 2.0, 2.0, 13);
    let pen = build_penalty_config(&s.data, &PenaltyOverrides::default()).unwrap();
    let init = kmeanspp_init(&s.data, 2, &KppConfig { seed: 0, n_candidates: 1 }).unwrap();
    let tr = fit_rntr(&s.data, &init, &TrConfig::default(), &pen).unwrap();
    let last = tr.trace.last().unwrap();
    assert_eq!(last.objective, tr.objective);
    assert_eq!(tr.trace.iter().filter(|r| r.step.as_ref().is_some_and(|st| st.accepted)).count(), tr.accepted_iterations);
    assert!(tr.trace.iter().all(|r| r.min_weight > 0.0 && r.min_weight <= 0.5));
}
