//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use alpe_core::agent::{AlpeAgent, AlpeConfig};
use alpe_core::baselines::{ForecasterSpec, ModelId};
use alpe_core::eval::experiment::{compute_importance, run_cell, run_grid, GridConfig, ImportanceConfig, Stock};
use alpe_core::eval::report::{write_results_csv, write_summary_table, SummaryRow};
use alpe_core::eval::{conover_posthoc, error_reduction_pct, friedman_test, rmse, rrmse, running_rmse};
use alpe_core::features::{extended_features, FeatureSet, FeatureSpec, KernelParams};
use alpe_core::importance::{fit_regression_forest, gd_fit, mdi_importance, ForestConfig, ImportanceMethod};
use alpe_core::lob::{generate_synthetic_stream, LobEvent, SyntheticStreamConfig};
use alpe_core::nn::{finite_diff_gradcheck, random_gradcheck_case};
use alpe_core::DatasetVariant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, u64);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn epsilon_schedule() -> Outcome {
    let cfg = AlpeConfig {
        eps0: 1.0,
        eps_decay: 0.999,
        eps_min: 1e-4,
        ..AlpeConfig::default()
    };
    let mut agent = AlpeAgent::new(cfg, FeatureSpec::simple(), None).map_err(|e| e.to_string())?;
    let mut first_floor = None;
    for t in 0..20_000u64 {
        agent.set_steps(t);
        let expected = 0.999f64.powi(t as i32).max(1e-4);
        ensure(
            agent.epsilon() == expected,
            format!("t={t}: {} != {expected}", agent.epsilon()),
        )?;
        if first_floor.is_none() && agent.epsilon() == 1e-4 {
            first_floor = Some(t);
        }
    }
    let closed_form = (1e-4f64.ln() / 0.999f64.ln()).ceil() as u64;
    ensure(first_floor == Some(9206), format!("floor first hit at {first_floor:?}"))?;
    ensure(closed_form == 9206, format!("closed form gives {closed_form}"))?;
    Ok("eps = max(1e-4, 0.999^t) for t < 20000; floor first hit at t=9206".into())
}

fn gradient_verification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let layers = [1, 3, 9][case % 3];
        let bn = (case / 3) % 2 == 0;
        let (net, x, target) = random_gradcheck_case(&mut rng, layers, bn, 1e-3).map_err(|e| e.to_string())?;
        let g = finite_diff_gradcheck(&net, &x, target, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(g.max_rel_error);
    }
    ensure(worst < 1e-4, format!("max relative error {worst:e}"))?;
    Ok(format!("100 cases, max relative error {worst:.2e}"))
}

fn gd_oracle() -> Outcome {
    let x = alpe_core::features::FeatureMatrix::from_rows(&[[1.0], [2.0]]).map_err(|e| e.to_string())?;
    let y = [2.0, 4.0];
    let state = gd_fit(&x, &y, 0.001, 10).map_err(|e| e.to_string())?;

    let (xs, ys, n) = ([1.0, 2.0], [2.0, 4.0], 2.0);
    let mut theta: f64 = 1.0;
    for _ in 0..10 {
        let grad = (2.0 / n) * (xs[0] * (theta * xs[0] - ys[0]) + xs[1] * (theta * xs[1] - ys[1]));
        let grad = if grad.is_finite() { grad.clamp(-1.0, 1.0) } else { 0.0 };
        theta -= 0.001 * grad;
    }
    let diff = (state.theta[0] - theta).abs();
    ensure(diff <= 1e-12, format!("theta {} vs scripted {theta}", state.theta[0]))?;

    let clip = gd_fit(&x, &[0.0, 0.0], 0.001, 1).map_err(|e| e.to_string())?;
    ensure(
        clip.gradient[0] == 1.0,
        format!("clipped gradient {}", clip.gradient[0]),
    )?;
    ensure(
        (clip.theta[0] - 0.999).abs() <= 1e-15,
        format!("theta after clipped step {}", clip.theta[0]),
    )?;
    Ok(format!(
        "theta_10 = {theta:.6} (|diff| {diff:.1e}); raw gradient 5 clipped to 1"
    ))
}

fn mdi_properties() -> Outcome {
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut first = 0;
    let mut min_score = f64::INFINITY;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 2]> = (0..200).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 5.0 * r[0] + noise.sample(&mut rng)).collect();
        let x = alpe_core::features::FeatureMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let forest = fit_regression_forest(&x, &y, &ForestConfig::default(), seed).map_err(|e| e.to_string())?;
        let fi = mdi_importance(&forest);
        min_score = fi.scores.iter().copied().fold(min_score, f64::min);
        if fi.ranking()[0] == 0 {
            first += 1;
        }
    }
    ensure(min_score >= 0.001, format!("score {min_score} below the floor"))?;
    ensure(first >= 95, format!("informative feature first in {first}/100"))?;
    Ok(format!(
        "informative feature first in {first}/100; min score {min_score:.4}"
    ))
}

fn table1(ask: f64, askv: f64, bid: f64, bidv: f64, k: &KernelParams) -> [f64; 12] {
    let p = ask * bid;
    let s = ask - bid;
    [
        (ask + bid) / 2.0,
        s,
        p.sin(),
        p,
        askv * bidv,
        ask * ask + bid * bid,
        askv * askv + bidv * bidv,
        p,
        (p + k.c0).powi(k.degree as i32),
        (k.gamma * p + k.c0).tanh(),
        (-k.gamma * s.abs()).exp(),
        (-k.gamma * s * s).exp(),
    ]
}

fn feature_formulas() -> Outcome {
    let k = KernelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let bid = (rng.random_range(100..20_000) as f64) / 100.0;
        let ticks = if i % 5 == 0 { 0 } else { rng.random_range(1..50) };
        let ask = bid + ticks as f64 / 100.0;
        let askv = rng.random_range(1..1000) as f64;
        let bidv = rng.random_range(1..1000) as f64;
        let e = LobEvent::new(i, ask, askv, bid, bidv);
        let u = extended_features(&e, &k).map_err(|e| e.to_string())?.values;
        let oracle = table1(ask, askv, bid, bidv, &k);
        ensure(u.len() == 12, "extended vector length")?;
        ensure(u[0] == e.mid_price(), format!("event {i}: u2 != mid"))?;
        ensure(u[3] == u[7], format!("event {i}: u5 != u9"))?;
        let locked = ask == bid;
        ensure(
            (u[10] == 1.0) == locked && (u[11] == 1.0) == locked,
            format!("event {i}: u12/u13 lock flag"),
        )?;
        for (a, b) in u.iter().zip(&oracle) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-12, format!("max scaled deviation {worst:e}"))?;
    Ok(format!("1000 events, max deviation {worst:.1e}"))
}

fn naive_rrmse(events: &[LobEvent]) -> Result<f64, String> {
    let spec = ForecasterSpec::new(FeatureSpec::simple());
    let rec = run_cell(events, ModelId::Naive, DatasetVariant::Simple, &spec, 0).map_err(|e| e.to_string())?;
    let pairs: Vec<(f64, f64)> = rec.iter().map(|r| (r.prediction, r.realized)).collect();
    rrmse(&pairs).map_err(|e| e.to_string())
}

fn metric_identities() -> Outcome {
    let events = generate_synthetic_stream(&SyntheticStreamConfig {
        n_events: 2000,
        seed: 3,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let c = 7.3;
    let scaled: Vec<LobEvent> = events
        .iter()
        .map(|e| LobEvent::new(e.seq, e.ask_price * c, e.ask_volume, e.bid_price * c, e.bid_volume))
        .collect();
    let (a, b) = (naive_rrmse(&events)?, naive_rrmse(&scaled)?);
    let drift = (a - b).abs() / a;
    ensure(drift < 1e-12, format!("rrmse drift {drift:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pairs: Vec<(f64, f64)> = (0..5000)
        .map(|_| (rng.random_range(90.0..110.0), rng.random_range(90.0..110.0)))
        .collect();
    let running = running_rmse(&pairs);
    let mut worst: f64 = 0.0;
    for (t, r) in running.iter().enumerate() {
        let batch = rmse(&pairs[..=t]).map_err(|e| e.to_string())?;
        worst = worst.max((r - batch).abs() / batch.max(f64::MIN_POSITIVE));
    }
    ensure(worst < 1e-10, format!("running vs batch {worst:e}"))?;

    let pct = error_reduction_pct(6.020e-1, 5.287e-3).map_err(|e| e.to_string())?;
    ensure((pct - 99.12).abs() <= 0.01, format!("error reduction {pct}"))?;
    Ok(format!(
        "scale drift {drift:.1e}; running/batch {worst:.1e}; reduction {pct:.2}%"
    ))
}

fn statistical_tests() -> Outcome {
    let strict = vec![vec![1.0, 2.0, 3.0]; 3];
    let f = friedman_test(&strict).map_err(|e| e.to_string())?;
    ensure((f.statistic - 6.0).abs() < 1e-12, format!("statistic {}", f.statistic))?;
    ensure((f.p_value - 0.0498).abs() < 5e-5, format!("p {}", f.p_value))?;

    // Reference values from scikit-posthocs `posthoc_conover_friedman(p_adjust="bonferroni")`.
    let b = vec![
        vec![0.31, 0.29, 0.35, 0.40],
        vec![0.22, 0.25, 0.21, 0.30],
        vec![0.50, 0.41, 0.47, 0.52],
        vec![0.18, 0.20, 0.19, 0.18],
        vec![0.33, 0.30, 0.36, 0.39],
        vec![0.27, 0.26, 0.31, 0.35],
    ];
    let expected = [
        ((0, 1), 1.0),
        ((0, 2), 1.0),
        ((0, 3), 0.20756495451249746),
        ((1, 2), 1.0),
        ((1, 3), 0.09658044149072567),
        ((2, 3), 0.6839763166985571),
    ];
    let r = conover_posthoc(&b).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for ((i, j), p) in expected {
        let got = r.p_adjusted[i][j].ok_or("missing entry")?;
        worst = worst.max((got - p).abs());
    }
    ensure(worst < 1e-6, format!("conover deviation {worst:e}"))?;
    ensure(
        (r.friedman.statistic - 6.559322033898308).abs() < 1e-9,
        format!("friedman on reference matrix {}", r.friedman.statistic),
    )?;

    let same = vec![vec![0.4, 0.4, 0.4]; 4];
    let r = conover_posthoc(&same).map_err(|e| e.to_string())?;
    ensure(r.friedman.p_value == 1.0, "identical columns: friedman p != 1")?;
    ensure(
        r.p_adjusted.iter().flatten().flatten().all(|&p| p == 1.0),
        "identical columns: conover p != 1",
    )?;
    Ok(format!(
        "friedman 6.0 p={:.4}; conover max deviation {worst:.1e}",
        f.p_value
    ))
}

fn post_warmup_rmse(events: &[LobEvent], model: ModelId, seed: u64) -> Result<f64, String> {
    let spec = ForecasterSpec::new(FeatureSpec::simple());
    let rec = run_cell(events, model, DatasetVariant::Simple, &spec, seed).map_err(|e| e.to_string())?;
    let pairs: Vec<(f64, f64)> = rec.iter().map(|r| (r.prediction, r.realized)).collect();
    rmse(&pairs).map_err(|e| e.to_string())
}

fn online_learning_sanity() -> Outcome {
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..10u64 {
        let events = generate_synthetic_stream(&SyntheticStreamConfig {
            n_events: 10_000,
            reversion_rate: 0.5,
            volatility: 0.1,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let alpe = post_warmup_rmse(&events, ModelId::Alpe, seed)?;
        let naive = post_warmup_rmse(&events, ModelId::Naive, seed)?;
        if alpe < naive {
            wins += 1;
        }
        detail.push(format!("{:.4}/{:.4}", alpe, naive));
    }
    ensure(
        wins >= 8,
        format!("ALPE below naive on {wins}/10 seeds (alpe/naive: {})", detail.join(" ")),
    )?;
    Ok(format!("ALPE below naive on {wins}/10 seeds"))
}

fn small_stock(id: &str, n: usize, seed: u64) -> Result<Stock, String> {
    Ok(Stock {
        id: id.into(),
        events: generate_synthetic_stream(&SyntheticStreamConfig {
            n_events: n,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?,
    })
}

fn grid(models: Vec<ModelId>, n_runs: usize, prefix: usize) -> GridConfig {
    GridConfig {
        feature_sets: vec![FeatureSet::Simple, FeatureSet::Extended],
        importance: vec![None, Some(ImportanceMethod::Mdi), Some(ImportanceMethod::Gd)],
        models,
        n_runs,
        master_seed: 11,
        calibration_prefix: prefix,
        importance_cfg: ImportanceConfig::default(),
        base: ForecasterSpec::new(FeatureSpec::simple()),
    }
}

fn results_bytes(stocks: &[Stock], g: &GridConfig) -> Result<Vec<u8>, String> {
    let out = run_grid(stocks, g).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &out.results).map_err(|e| e.to_string())?;
    Ok(buf)
}

fn determinism_and_no_lookahead() -> Outcome {
    let stocks = vec![small_stock("A", 160, 1)?, small_stock("B", 160, 2)?];
    let g = grid(ModelId::ALL.to_vec(), 2, 40);
    let first = results_bytes(&stocks, &g)?;
    let second = results_bytes(&stocks, &g)?;
    ensure(first == second, "result CSVs differ between identical runs")?;

    let events = small_stock("C", 220, 3)?.events;
    let (calibration, stream) = events.split_at(60);
    let mut checked = 0;
    for variant in [
        DatasetVariant::Simple,
        DatasetVariant::ExteMdi,
        DatasetVariant::SimpleGd,
    ] {
        let mut spec = ForecasterSpec::new(FeatureSpec::new(variant.feature_set()));
        if let Some(m) = variant.importance() {
            spec.importance = Some(
                compute_importance(calibration, &spec.features, m, &ImportanceConfig::default(), 5)
                    .map_err(|e| e.to_string())?,
            );
        }
        for model in ModelId::ALL {
            let full = run_cell(stream, model, variant, &spec, 21).map_err(|e| e.to_string())?;
            for cut in [12, 47, 100, 159] {
                let part = run_cell(&stream[..cut], model, variant, &spec, 21).map_err(|e| e.to_string())?;
                let t = stream[cut - 1].seq;
                let prefix: Vec<_> = full.iter().filter(|r| r.seq <= t).collect();
                ensure(
                    prefix.len() == part.len() && prefix.iter().zip(&part).all(|(a, b)| **a == *b),
                    format!("{model}/{variant}: truncation at seq {t} changed earlier records"),
                )?;
                checked += 1;
            }
        }
    }
    Ok(format!(
        "byte-identical results; {checked} truncations leave earlier records unchanged"
    ))
}

fn is_sci4(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 9
        && b[0].is_ascii_digit()
        && b[1] == b'.'
        && b[2..5].iter().all(u8::is_ascii_digit)
        && b[5] == b'E'
        && (b[6] == b'+' || b[6] == b'-')
        && b[7..].iter().all(u8::is_ascii_digit)
}

fn protocol_cardinality() -> Outcome {
    let stocks = vec![small_stock("S", 300, 4)?];
    let g = grid(ModelId::ALL.to_vec(), 10, 100);
    let out = run_grid(&stocks, &g).map_err(|e| e.to_string())?;
    ensure(out.results.len() == 240, format!("{} result rows", out.results.len()))?;
    let rows: Vec<SummaryRow> = out.summaries.iter().map(SummaryRow::from).collect();
    ensure(rows.len() == 24, format!("{} summary rows", rows.len()))?;
    let mut buf = Vec::new();
    write_summary_table(&mut buf, &rows).map_err(|e| e.to_string())?;
    let text = String::from_utf8(buf).map_err(|e| e.to_string())?;
    for line in text.lines().skip(1) {
        for cell in line.split(',').skip(3) {
            let (m, s) = cell.split_once(" ± ").ok_or(format!("no mean ± std in `{cell}`"))?;
            ensure(is_sci4(m) && is_sci4(s), format!("not 4-digit scientific: `{cell}`"))?;
        }
    }
    Ok("240 result rows; 24 mean ± std summaries in d.dddE±xx form".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 epsilon schedule", epsilon_schedule, 1),
        ("2 gradient verification", gradient_verification, 10),
        ("3 GD importance oracle", gd_oracle, 1),
        ("4 MDI properties", mdi_properties, 30),
        ("5 feature formulas", feature_formulas, 5),
        ("6 metric identities", metric_identities, 5),
        ("7 statistical tests", statistical_tests, 5),
        ("8 online-learning sanity", online_learning_sanity, 300),
        ("9 determinism and no-lookahead", determinism_and_no_lookahead, 120),
        ("10 protocol cardinality", protocol_cardinality, 300),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check, budget) in criteria {
        if only.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed > Duration::from_secs(budget) {
                Err(format!("{msg}; took {:.1}s, budget {budget}s", elapsed.as_secs_f64()))
            } else {
                Ok(msg)
            }
        });
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg} ({:.2}s)", elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} ({:.2}s)", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
