//! Acceptance suite. Run with
//! `cargo test -p starris --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use starris::channel::SystemConfig;
use starris::estimation::{es_mse_lower_bound, theoretical_mse, Scheme};
use starris::matrixkit::{gram_orthogonality_defect, numerical_rank, trace_inverse_gram, DEFAULT_RANK_TOL};
use starris::simulator::{
    linear_grid, run_scheme, sweep_beta, sweep_power, sweep_subsurfaces, TrialAggregate, DEFAULT_ACCEPTANCE_TRIALS,
    DEFAULT_SWEEP_TRIALS,
};
use starris::training::{es_coupled_design, verify_coupled_constraint, BaseMatrix};

const SEED: u64 = 20_240_601;
const M: usize = 20;

const CLOSED_FORM_TOL: f64 = 0.03;
const TS_RUNTIME_LIMIT: Duration = Duration::from_secs(30);
const COUPLED_COS_TOL: f64 = 1e-9;
const COUPLED_TRACE_TOL: f64 = 0.01;
const BETA_GRID_STEP: f64 = 0.05;
const RATIO_TOL: f64 = 0.05;
const ONOFF_TOL: f64 = 0.05;
const SEPARATION_SE: f64 = 4.0;
/// The two ES designs share a closed form, so they must agree as tightly as
/// each agrees with it.
const ES_AGREEMENT_TOL: f64 = 0.03;
/// Per-point agreement with the M-dependent closed form, in standard errors.
const FLAT_THEORY_SE: f64 = 4.0;
/// Allowed relative spread `max/min - 1` of TS and ES NMSE over the M grid.
const FLAT_NMSE_SPREAD: f64 = 0.10;
const M_GRID: [usize; 4] = [10, 20, 30, 40];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got / want - 1.0).abs()
}

fn argmin(values: &[(f64, f64)]) -> f64 {
    values
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(x, _)| x)
        .unwrap()
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    max / min - 1.0
}

struct Shared {
    cfg: SystemConfig,
    ts: TrialAggregate,
    ts_elapsed: Duration,
    es_ideal: TrialAggregate,
}

fn ts_closed_form(s: &Shared) -> Outcome {
    let want = 2.0 * s.cfg.noise_power / s.cfg.total_power;
    let err = rel_err(s.ts.mse, want);
    outcome(
        err <= CLOSED_FORM_TOL && s.ts_elapsed < TS_RUNTIME_LIMIT,
        format!(
            "mse {:.5e} vs {want:.5e} (rel {err:.4} <= {CLOSED_FORM_TOL}), {} trials in {:.2?} (< {TS_RUNTIME_LIMIT:?})",
            s.ts.mse, s.ts.trials, s.ts_elapsed
        ),
    )
}

fn es_ideal_closed_form(s: &Shared) -> Outcome {
    let want = 82.0 / 21.0 * s.cfg.noise_power / s.cfg.total_power;
    let err = rel_err(s.es_ideal.mse, want);
    outcome(
        err <= CLOSED_FORM_TOL,
        format!("mse {:.5e} vs {want:.5e} (rel {err:.4} <= {CLOSED_FORM_TOL})", s.es_ideal.mse),
    )
}

fn coupled_feasibility() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_cos: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    let mut worst_defect: f64 = 0.0;
    for m in 1..=30 {
        let design = match es_coupled_design(m, BaseMatrix::Dft) {
            Ok(d) => d,
            Err(e) => {
                failures.push(format!("M={m}: {e}"));
                continue;
            }
        };
        let v = design.observation_matrix();
        let check = verify_coupled_constraint(&design, COUPLED_COS_TOL);
        let rank = numerical_rank(&v, DEFAULT_RANK_TOL);
        let trace = trace_inverse_gram(&v).unwrap();
        let ideal = (4 * m + 2) as f64 / (2 * m + 2) as f64;
        let trace_err = rel_err(trace, ideal);
        worst_cos = worst_cos.max(check.max_deviation);
        worst_trace = worst_trace.max(trace_err);
        worst_defect = worst_defect.max(gram_orthogonality_defect(&v).unwrap());
        if !check.satisfied || rank != 2 * m + 2 || trace_err > COUPLED_TRACE_TOL {
            failures.push(format!("M={m}: cos {:.2e} rank {rank} trace rel {trace_err:.2e}", check.max_deviation));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "M=1..30: max|cos| {worst_cos:.2e} <= {COUPLED_COS_TOL:e}, full rank, worst trace rel {worst_trace:.2e} <= {COUPLED_TRACE_TOL}; measured orthogonality defect {worst_defect:.2e}{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    )
}

fn splitting_optimum(cfg: &SystemConfig) -> Outcome {
    let grid = linear_grid(0.05, 0.95, BETA_GRID_STEP).unwrap();
    let tau = 2 * M + 2;
    let bound: Vec<(f64, f64)> = grid
        .iter()
        .map(|&bt| {
            let b = es_mse_lower_bound(&[bt; M], &[1.0 - bt; M], tau, cfg.total_power, cfg.noise_power);
            (bt, b.unwrap())
        })
        .collect();
    let bound_min = argmin(&bound);

    let sweep = sweep_beta(cfg, &grid, DEFAULT_SWEEP_TRIALS, SEED).unwrap();
    let worst_user = |suffix: &str| -> Vec<(f64, f64)> {
        grid.iter()
            .map(|&b| {
                let t = sweep.row(b, &format!("es-t-{suffix}")).unwrap().nmse;
                let r = sweep.row(b, &format!("es-r-{suffix}")).unwrap().nmse;
                (b, t.max(r))
            })
            .collect()
    };
    let joint_min = argmin(&worst_user("joint"));
    let own_min = argmin(&worst_user("own"));
    outcome(
        (bound_min - 0.5).abs() < 1e-9 && (joint_min - 0.5).abs() <= BETA_GRID_STEP + 1e-9,
        format!(
            "bound argmin beta_t={bound_min:.2}; Monte Carlo max-of-users argmin beta_t={joint_min:.2} (joint normalization, within {BETA_GRID_STEP}); own-power normalization argmin {own_min:.2} (info)"
        ),
    )
}

fn es_ts_ratio(s: &Shared) -> Outcome {
    let theory = theoretical_mse(Scheme::EsIdeal, M, 1.0, 1.0).unwrap() / theoretical_mse(Scheme::Ts, M, 1.0, 1.0).unwrap();
    let formula = (4 * M + 2) as f64 / (2 * M + 2) as f64;
    let empirical = s.es_ideal.mse / s.ts.mse;
    let err = rel_err(empirical, theory);
    outcome(
        (theory - formula).abs() < 1e-12 && (theory - 1.952).abs() < 5e-4 && err <= RATIO_TOL,
        format!("theory {theory:.4} = (4M+2)/(2M+2), empirical {empirical:.4} (rel {err:.4} <= {RATIO_TOL})"),
    )
}

fn onoff_oracle(cfg: &SystemConfig) -> Outcome {
    let agg = run_scheme(Scheme::OnOff, cfg, DEFAULT_ACCEPTANCE_TRIALS, SEED).unwrap();
    let want = (4 * M + 2) as f64 * cfg.noise_power / cfg.total_power;
    let err = rel_err(agg.mse, want);
    let sweep = sweep_subsurfaces(cfg, &M_GRID, &[Scheme::OnOff], DEFAULT_SWEEP_TRIALS, SEED).unwrap();
    let series = sweep.series("onoff");
    let increasing = series.windows(2).all(|w| w[1].nmse > w[0].nmse && w[1].mse > w[0].mse);
    let nmse: Vec<String> = series.iter().map(|r| format!("{:.3e}", r.nmse)).collect();
    outcome(
        err <= ONOFF_TOL && increasing,
        format!(
            "M=20 mse {:.5e} vs {want:.5e} (rel {err:.4} <= {ONOFF_TOL}); NMSE over M={M_GRID:?}: [{}] strictly increasing={increasing}",
            agg.mse,
            nmse.join(", ")
        ),
    )
}

fn scheme_ordering(cfg: &SystemConfig) -> Outcome {
    let sweep = sweep_power(cfg, &[30.0], &Scheme::ALL, DEFAULT_ACCEPTANCE_TRIALS, SEED).unwrap();
    let get = |s: Scheme| sweep.row(30.0, s.id()).unwrap();
    let (ts, ideal, coupled, two, onoff) = (
        get(Scheme::Ts),
        get(Scheme::EsIdeal),
        get(Scheme::EsCoupled),
        get(Scheme::TwoPhase),
        get(Scheme::OnOff),
    );
    // Channels are common to all schemes, so NMSE standard errors scale with the MSE ones.
    let nse = |r: &starris::simulator::SweepRow| r.stderr * r.nmse / r.mse;
    let gap = |lo: &starris::simulator::SweepRow, hi: &starris::simulator::SweepRow| {
        (hi.nmse - lo.nmse) / (nse(lo).powi(2) + nse(hi).powi(2)).sqrt()
    };
    let es_worse = if coupled.nmse > ideal.nmse { coupled } else { ideal };
    let es_better = if coupled.nmse > ideal.nmse { ideal } else { coupled };
    let gaps = [gap(ts, es_better), gap(es_worse, two), gap(two, onoff)];
    let agree = rel_err(coupled.nmse, ideal.nmse);
    outcome(
        gaps.iter().all(|&g| g > SEPARATION_SE) && agree <= ES_AGREEMENT_TOL,
        format!(
            "NMSE ts {:.3e} < es-coupled {:.3e} ~ es-ideal {:.3e} (rel {agree:.4} <= {ES_AGREEMENT_TOL}) < two-phase {:.3e} < onoff {:.3e}; gaps in SE [{:.0}, {:.0}, {:.0}] > {SEPARATION_SE}",
            ts.nmse, coupled.nmse, ideal.nmse, two.nmse, onoff.nmse, gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn flat_in_m(cfg: &SystemConfig) -> Outcome {
    let schemes = [Scheme::Ts, Scheme::EsIdeal, Scheme::EsCoupled, Scheme::OnOff];
    let sweep = sweep_subsurfaces(cfg, &M_GRID, &schemes, DEFAULT_SWEEP_TRIALS, SEED).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for s in schemes {
        let series = sweep.series(s.id());
        let worst_z = series
            .iter()
            .map(|r| (r.mse - r.theory_mse.unwrap()).abs() / r.stderr)
            .fold(0.0, f64::max);
        let nmse: Vec<f64> = series.iter().map(|r| r.nmse).collect();
        let sp = spread(&nmse);
        if s == Scheme::OnOff {
            parts.push(format!("onoff spread {sp:.2} (contrast)"));
            continue;
        }
        ok &= worst_z <= FLAT_THEORY_SE && sp <= FLAT_NMSE_SPREAD;
        parts.push(format!("{s} spread {sp:.4} worst |z| {worst_z:.2}"));
    }
    outcome(
        ok,
        format!(
            "M={M_GRID:?}: NMSE spread <= {FLAT_NMSE_SPREAD}, MSE within {FLAT_THEORY_SE} SE of closed form; {}",
            parts.join("; ")
        ),
    )
}

fn determinism(cfg: &SystemConfig) -> Outcome {
    let grid = [0.3, 0.5, 0.7];
    let run = || sweep_beta(cfg, &grid, 2_000, SEED).unwrap().to_csv_string().unwrap();
    let first = run();
    let second = run();
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let single = pool(1).install(run);
    let quad = pool(4).install(run);
    let power = || {
        sweep_power(cfg, &[0.0, 20.0], &Scheme::ALL, 1_000, SEED)
            .unwrap()
            .to_csv_string()
            .unwrap()
    };
    let power_a = power();
    let power_b = pool(1).install(power);
    let same = first == second && first == single && first == quad && power_a == power_b;
    outcome(
        same,
        format!(
            "sweep-beta CSV ({} bytes) identical on repeat, 1-thread and 4-thread pools; sweep-power CSV identical across pools: {same}",
            first.len()
        ),
    )
}

#[test]
fn acceptance() {
    let cfg = SystemConfig::default();
    assert_eq!(cfg.num_subsurfaces, M);
    assert_eq!(cfg.total_power, 1.0);
    assert!((cfg.noise_power / 1e-14 - 1.0).abs() < 1e-12);

    let start = Instant::now();
    let ts = run_scheme(Scheme::Ts, &cfg, DEFAULT_ACCEPTANCE_TRIALS, SEED).unwrap();
    let ts_elapsed = start.elapsed();
    let es_ideal = run_scheme(Scheme::EsIdeal, &cfg, DEFAULT_ACCEPTANCE_TRIALS, SEED).unwrap();
    let shared = Shared {
        cfg: cfg.clone(),
        ts,
        ts_elapsed,
        es_ideal,
    };

    let results = [
        ("1 ts-closed-form", ts_closed_form(&shared)),
        ("2 es-ideal-closed-form", es_ideal_closed_form(&shared)),
        ("3 coupled-feasibility", coupled_feasibility()),
        ("4 splitting-optimum", splitting_optimum(&cfg)),
        ("5 es-ts-ratio", es_ts_ratio(&shared)),
        ("6 onoff-oracle", onoff_oracle(&cfg)),
        ("7 scheme-ordering", scheme_ordering(&cfg)),
        ("8 flat-in-m", flat_in_m(&cfg)),
        ("9 determinism", determinism(&cfg)),
    ];
    for (name, o) in &results {
        println!("{} [{name}] {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.passed).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
