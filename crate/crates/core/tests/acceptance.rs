//! End-to-end acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p lexdiss --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use lexdiss::analyses::{adrf_estimate, assemble_lag_dataset, AdrfOptions, Panel, TreatmentDataset, DL};
use lexdiss::counts::{accumulate_counts, ContextTable, FrequencyTable, SocialUsageTable, UnitKind};
use lexdiss::dissemination::{expected_unit_count, linguistic_dissemination_month, social_dissemination_series};
use lexdiss::ingest::{build_vocabulary, normalize_tokens, MonthKey, NormalizationRules, NormalizedComment};
use lexdiss::numstats::{
    lmg_importance, logistic_regression_fit, ols_fit, spearman_rho, LogisticOptions, Matrix,
};
use lexdiss::pipeline::{run, Command, PipelineConfig, MANIFEST_FILE};
use lexdiss::survival::{concordance_index, cox_fit_rows, deviance_test, CoxOptions};
use lexdiss::synthgen::{SynthConfig, ALLOWLIST_FILE, BOTS_FILE, CONFIG_FILE, CORPUS_FILE, LABELS_FILE, POS_FILE};
use lexdiss::wordsets::{logistic_density, logistic_trajectory_fit, piecewise_fit, read_labels_tsv, Label, LogisticFitOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---- 1 ----

fn trigram_example() -> Check {
    let sentences = normalize_tokens("that's cool af haha", &NormalizationRules::default());
    let comment = NormalizedComment {
        month: MonthKey(1),
        author: "a".into(),
        subreddit: "s".into(),
        thread: "t".into(),
        sentences,
    };
    let mut counts = BTreeMap::new();
    for t in comment.sentences.iter().flatten() {
        *counts.entry(t.clone()).or_insert(0u64) += 1;
    }
    let vocab = ok(build_vocabulary(&counts, 10))?;
    let tables = ok(accumulate_counts(&[comment], &vocab, 1, 1))?;
    let i = tables.frequency.index_of("af").ok_or("af missing from the vocabulary")?;
    let c = tables.contexts.contexts[i][0];
    ensure!(c == 3, "af has {c} contexts, expected 3");
    Ok("\"af\" has 3 distinct trigram contexts".into())
}

// ---- 2 ----

fn null_model_examples() -> Check {
    let units: BTreeMap<String, u64> = [("u1".to_string(), 10), ("u2".to_string(), 10)].into();
    let expected = 2.0 * (1.0 - (-1.0f64).exp());
    let e = ok(expected_unit_count(0.1, &units))?;
    ensure!((e - expected).abs() < 1e-10, "expected count {e} vs {expected}");
    let ft = FrequencyTable {
        words: vec!["w".into()],
        counts: vec![vec![2]],
        month_totals: vec![20],
    };
    let mut out = Vec::new();
    for used in [1u64, 2] {
        let usage = SocialUsageTable {
            kind: UnitKind::User,
            units_of_word: vec![vec![used]],
            unit_tokens: vec![units.clone()],
        };
        let d = ok(social_dissemination_series(&usage, &ft, 0))?[0].ok_or("dissemination undefined")?;
        let hand = (used as f64 / expected).ln();
        ensure!((d - hand).abs() < 1e-10, "U={used}: D={d}, hand value {hand}");
        out.push(d);
    }
    Ok(format!("D = {:.4} (one user), {:+.4} (both users)", out[0], out[1]))
}

// ---- 3 ----

fn residual_properties() -> Check {
    // mixed corpus: residual means over the fitted words
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words: Vec<String> = (0..400).map(|i| format!("w{i}")).collect();
    let zipf = rand_distr::Zipf::new(400.0, 1.1).map_err(|e| e.to_string())?;
    let mut comments = Vec::new();
    for month in 1..=6u32 {
        for c in 0..300 {
            let sentences = (0..3)
                .map(|_| (0..rng.random_range(2..10)).map(|_| words[zipf.sample(&mut rng) as usize - 1].clone()).collect())
                .collect();
            comments.push(NormalizedComment {
                month: MonthKey(month),
                author: format!("u{}", c % 40),
                subreddit: "s".into(),
                thread: format!("t{month}"),
                sentences,
            });
        }
    }
    let mut counts = BTreeMap::new();
    for t in comments.iter().flat_map(|c| c.sentences.iter().flatten()) {
        *counts.entry(t.clone()).or_insert(0u64) += 1;
    }
    let vocab = ok(build_vocabulary(&counts, 1000))?;
    let tables = ok(accumulate_counts(&comments, &vocab, 6, 2))?;
    let mut worst: f64 = 0.0;
    for m in 0..6 {
        for min_count in [1, 3] {
            let (_, res) = ok(linguistic_dissemination_month(&tables.contexts, &tables.frequency, m, min_count))?;
            let fitted: Vec<f64> = (0..tables.frequency.words.len())
                .filter(|&w| tables.frequency.counts[w][m] >= min_count)
                .filter_map(|w| res[w])
                .collect();
            let mean = fitted.iter().sum::<f64>() / fitted.len() as f64;
            worst = worst.max(mean.abs());
        }
    }
    ensure!(worst < 1e-9, "residual mean {worst:e}");

    // perfect power law: contexts = sqrt(count)
    let n = 9;
    let ft = FrequencyTable {
        words: (0..n).map(|i| format!("p{i}")).collect(),
        counts: (0..n).map(|i| vec![4u64.pow(i as u32)]).collect(),
        month_totals: vec![4u64.pow(n as u32)],
    };
    let ct = ContextTable {
        contexts: (0..n).map(|i| vec![2u64.pow(i as u32)]).collect(),
        distinct_trigrams: vec![2u64.pow(n as u32)],
    };
    let (fit, res) = ok(linguistic_dissemination_month(&ct, &ft, 0, 1))?;
    let max = res.iter().flatten().fold(0.0f64, |a, r| a.max(r.abs()));
    ensure!(max < 1e-9, "power-law residual {max:e}");
    Ok(format!("max |mean residual| {worst:.1e}; power-law max residual {max:.1e} (slope {:.3})", fit.slope))
}

// ---- 4 ----

fn row_count_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words: Vec<String> = (0..1120).map(|i| format!("g{i:04}")).collect();
    let metrics: [Vec<Vec<Option<f64>>>; 5] = std::array::from_fn(|m| {
        (0..words.len())
            .map(|_| {
                let slope: f64 = rng.random_range(0.01..0.1);
                (1..=36).map(|t| Some(-5.0 + slope * t as f64 + 0.1 * m as f64)).collect()
            })
            .collect()
    });
    let panel = ok(Panel::new(words.clone(), metrics))?;
    let r12 = ok(assemble_lag_dataset(&panel, &words, 12))?.rows.len();
    let r24 = ok(assemble_lag_dataset(&panel, &words, 24))?.rows.len();
    ensure!(r12 == 26_880 && r24 == 13_440, "rows {r12} at k=12, {r24} at k=24");
    Ok("26880 rows at k=12, 13440 at k=24".into())
}

// ---- 5 ----

/// `(X'X)^-1 X'y` with an intercept column, by Gauss-Jordan elimination.
fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len() + 1;
    let design: Vec<Vec<f64>> = rows.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let mut aug = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            aug[i][j] = design.iter().map(|d| d[i] * d[j]).sum();
        }
        aug[i][p] = design.iter().zip(y).map(|(d, v)| d[i] * v).sum();
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs())).unwrap();
        aug.swap(c, piv);
        let pv = aug[c][c];
        aug[c].iter_mut().for_each(|v| *v /= pv);
        for r in 0..p {
            if r != c {
                let f = aug[r][c];
                let rc = aug[c].clone();
                aug[r].iter_mut().zip(rc).for_each(|(v, x)| *v -= f * x);
            }
        }
    }
    aug.iter().map(|r| r[p]).collect()
}

fn fit_kernels() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // OLS
    let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| 0.5 + r[0] - 2.0 * r[2] + rng.random_range(-0.3..0.3)).collect();
    let x = ok(Matrix::from_rows(&rows))?;
    let m = ok(ols_fit(&x, &y))?;
    let oracle = normal_equations(&rows, &y);
    let ols_err = m.coefficients.iter().zip(&oracle).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    ensure!(ols_err < 1e-8, "OLS differs from the normal equations by {ols_err:e}");

    // logistic regression against a dense likelihood grid
    let xs = [-1.0, -0.4, 0.2, 0.5, 1.1, 1.6];
    let ys = [false, true, false, true, false, true];
    let one = ok(Matrix::from_rows(&xs.iter().map(|&v| [v]).collect::<Vec<_>>()))?;
    let lm = ok(logistic_regression_fit(&one, &ys, LogisticOptions::default()))?;
    let ll = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &t)| {
                let p = 1.0 / (1.0 + (-(a + b * x)).exp());
                if t {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum()
    };
    let mut best = f64::NEG_INFINITY;
    for i in 0..=800 {
        for j in 0..=800 {
            best = best.max(ll(-4.0 + i as f64 / 100.0, -4.0 + j as f64 / 100.0));
        }
    }
    ensure!((lm.log_likelihood - best).abs() < 1e-3, "logistic log-likelihood {} vs grid {best}", lm.log_likelihood);

    // LMG
    let rows5: Vec<Vec<f64>> = (0..80).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y5: Vec<f64> = rows5.iter().map(|r| r[0] + 0.5 * r[1] + 0.3 * (r[1] + r[2]) + rng.random_range(-0.5..0.5)).collect();
    let d = ok(lmg_importance(&ok(Matrix::from_rows(&rows5))?, &y5))?;
    let gap = (d.shares.iter().sum::<f64>() - d.r2_full).abs();
    ensure!(gap < 1e-9, "LMG shares miss R² by {gap:e}");

    // Spearman
    let rho = ok(spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]))?.ok_or("rho undefined")?;
    ensure!((rho - 0.8).abs() < 1e-12, "spearman {rho}");

    // piecewise split: noiseless exact, noisy within one month
    let tent: Vec<f64> = (1..=36).map(|t| if t <= 20 { 0.1 * t as f64 } else { 4.0 - 0.1 * t as f64 }).collect();
    let split = ok(piecewise_fit(&tent))?.split;
    ensure!(split == 20, "noiseless split {split}, expected 20");
    let noise = Normal::new(0.0, 0.05).unwrap();
    for seed in 0..20 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let truth: i64 = r.random_range(8..=28);
        let y: Vec<f64> = (1..=36i64)
            .map(|t| {
                let base = if t <= truth { 0.1 * t as f64 } else { 0.1 * (2 * truth - t) as f64 };
                base + noise.sample(&mut r)
            })
            .collect();
        let s = ok(piecewise_fit(&y))?.split as i64;
        ensure!((s - truth).abs() <= 1, "noisy split {s} vs {truth}");
    }

    // logistic trajectory center
    for (mu, s) in [(18.0, 3.0), (9.4, 2.0), (25.7, 4.5)] {
        let y: Vec<f64> = (1..=36).map(|t| 0.02 * logistic_density(t as f64, mu, s)).collect();
        let f = ok(logistic_trajectory_fit(&y, LogisticFitOptions::default()))?;
        ensure!((f.mu - mu).abs() <= 0.5, "logistic center {} vs {mu}", f.mu);
    }
    Ok(format!("OLS {ols_err:.1e}, logistic Δll {:.1e}, LMG gap {gap:.1e}, rho 0.8, splits exact/±1, centers ±0.5", (lm.log_likelihood - best).abs()))
}

// ---- 6 ----

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f(lo) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn hazard_sample(n: usize, beta: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rows, mut time, mut event) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let x: f64 = StandardNormal.sample(&mut rng);
        let t: f64 = Exp::new((beta * x).exp()).unwrap().sample(&mut rng);
        let c: f64 = Exp::new(0.3).unwrap().sample(&mut rng);
        rows.push(vec![x]);
        time.push(t.min(c));
        event.push(t <= c);
    }
    (rows, time, event)
}

fn cox_oracles() -> Check {
    let opts = CoxOptions::default();
    // x = (1, 0, 0) dying at months 2, 1, 3
    let score = |b: f64| 1.0 - b.exp() / (b.exp() + 2.0) - b.exp() / (b.exp() + 1.0);
    let oracle = bisect(score, -5.0, 5.0);
    let m = ok(cox_fit_rows(&[vec![1.0], vec![0.0], vec![0.0]], &[2.0, 1.0, 3.0], &[true; 3], opts))?;
    ensure!((m.beta[0] - oracle).abs() < 1e-6, "beta {} vs bisection {oracle}", m.beta[0]);

    let (rows, time, event) = hazard_sample(200, 0.8, 3);
    let time: Vec<f64> = time.iter().map(|t| (t * 10.0).ceil()).collect();
    let sq: Vec<f64> = time.iter().map(|t| t * t).collect();
    let a = ok(cox_fit_rows(&rows, &time, &event, opts))?;
    let b = ok(cox_fit_rows(&rows, &sq, &event, opts))?;
    let relabel = (a.beta[0] - b.beta[0]).abs();
    ensure!(relabel < 1e-8, "t -> t² moved beta by {relabel:e}");

    let risk: Vec<f64> = (0..60).map(|i| ((i * 23) % 60) as f64).collect();
    let t: Vec<f64> = risk.iter().map(|r| 100.0 - r).collect();
    let c = concordance_index(&risk, &t, &[true; 60]);
    ensure!(c == Some(1.0), "ordered risk concordance {c:?}");

    let mut ps: Vec<f64> = (0..200)
        .map(|s| {
            let (rows, time, event) = hazard_sample(150, 0.7, 1000 + s);
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + s);
            let wide: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], StandardNormal.sample(&mut rng)]).collect();
            let nested = cox_fit_rows(&rows, &time, &event, opts).map_err(|e| e.to_string())?;
            let full = cox_fit_rows(&wide, &time, &event, opts).map_err(|e| e.to_string())?;
            deviance_test(&nested, &full, 1).map(|d| d.p).map_err(|e| e.to_string())
        })
        .collect::<Result<_, String>>()?;
    ps.sort_by(f64::total_cmp);
    let n = ps.len() as f64;
    let ks = ps
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    ensure!(ks < 0.1, "deviance p-value KS distance {ks}");
    Ok(format!("beta {:.8} vs ln2/2, relabel {relabel:.1e}, C=1, KS {ks:.3}", m.beta[0]))
}

// ---- 7 ----

fn treatment_data(n: usize, seed: u64, outcome: impl Fn(f64, &mut ChaCha8Rng) -> bool) -> TreatmentDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut td = TreatmentDataset {
        treatment: DL,
        words: Vec::new(),
        y: Vec::new(),
        z: Vec::new(),
        x: Vec::new(),
    };
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        td.words.push(format!("w{i}"));
        td.x.push((0..4).map(|_| StandardNormal.sample(&mut rng)).collect());
        td.y.push(outcome(z, &mut rng));
        td.z.push(z);
    }
    td
}

fn adrf_behavior() -> Check {
    let null = treatment_data(400, 71, |_, rng| rng.random());
    let c = ok(adrf_estimate(&null, AdrfOptions { seed: 1, ..Default::default() }))?;
    for p in &c.points {
        ensure!(p.lo <= 0.5 && 0.5 <= p.hi, "null curve band misses 0.5 at decile {}: {p:?}", p.quantile);
    }
    let thr = treatment_data(400, 72, |z, _| z > 0.0);
    let c = ok(adrf_estimate(&thr, AdrfOptions { seed: 2, ..Default::default() }))?;
    let (first, last) = (c.points[0].mu, c.points[9].mu);
    ensure!(first < 0.1 && last > 0.9, "threshold curve runs {first} to {last}");
    for w in c.points.windows(2) {
        ensure!(w[1].mu >= w[0].mu, "threshold curve drops at decile {}", w[1].quantile);
    }
    let noisy = treatment_data(200, 73, |z, rng| z + rng.random_range(-1.0..1.0) > 0.0);
    let opts = AdrfOptions { seed: 3, ..Default::default() };
    let (a, b) = (ok(adrf_estimate(&noisy, opts))?, ok(adrf_estimate(&noisy, opts))?);
    let bits = |c: &lexdiss::analyses::DoseResponseCurve| -> Vec<u64> {
        c.points.iter().flat_map(|p| [p.mu, p.lo, p.hi]).map(f64::to_bits).collect()
    };
    ensure!(bits(&a) == bits(&b), "fixed-seed curves differ");
    Ok(format!("null band covers 0.5 in all deciles; threshold {first:.3} -> {last:.3}; reproducible"))
}

// ---- 8 and 9 ----

/// Synthesizes a corpus into `workdir` and runs every stage on it.
fn full_pipeline(workdir: &Path, synth: Option<&str>, seed: u64, shards: usize) -> Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig {
        workdir: workdir.to_path_buf(),
        seed: Some(seed),
        shards,
        ..Default::default()
    };
    if let Some(text) = synth {
        let p = workdir.with_extension("synth.conf");
        ok(fs::write(&p, text))?;
        cfg.synth_config = Some(p);
    }
    ok(run(Command::Synth, &cfg))?;
    let synth_dir = workdir.join("synth");
    let sc = ok(SynthConfig::parse(&ok(fs::read_to_string(synth_dir.join(CONFIG_FILE)))?))?;
    cfg.start = sc.start.clone();
    cfg.months = sc.months;
    cfg.input = Some(synth_dir.join(CORPUS_FILE));
    cfg.bots = Some(synth_dir.join(BOTS_FILE));
    cfg.allowlist = Some(synth_dir.join(ALLOWLIST_FILE));
    cfg.pos = Some(synth_dir.join(POS_FILE));
    for c in Command::PIPELINE {
        run(c, &cfg).map_err(|e| format!("{c}: {e}"))?;
    }
    Ok(cfg)
}

fn csv_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let mut r = ok(csv::Reader::from_path(path))?;
    let h = ok(r.headers())?.clone();
    r.records()
        .map(|rec| rec.map(|rec| h.iter().zip(rec.iter()).map(|(a, b)| (a.to_string(), b.to_string())).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

fn field(row: &BTreeMap<String, String>, key: &str) -> Result<f64, String> {
    row.get(key).and_then(|v| v.parse().ok()).ok_or_else(|| format!("missing numeric {key}"))
}

fn synthetic_reproduction(root: &Path) -> Check {
    let work = root.join("c8");
    let seed = std::env::var("ACCEPTANCE_SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(1);
    full_pipeline(&work, None, seed, 4)?;
    let mut failures = Vec::new();

    let oracle = ok(read_labels_tsv(&work.join("synth").join(LABELS_FILE)))?;
    let got = ok(read_labels_tsv(&work.join("detect/labels.tsv")))?;
    let recovered = oracle
        .iter()
        .filter(|o| {
            got.iter().any(|g| {
                g.word == o.word
                    && g.label == o.label
                    && (o.label != Label::Decline
                        || matches!((g.split_month, o.split_month), (Some(a), Some(b)) if (a as i64 - b as i64).abs() <= 2))
            })
        })
        .count();
    let share = recovered as f64 / oracle.len() as f64;
    if share < 0.9 {
        failures.push(format!("(a) recovered {recovered}/{}", oracle.len()));
    }

    let acc = csv_rows(&work.join("predict/accuracy.csv"))?;
    let at = |set: &str| -> Result<f64, String> {
        let r = acc.iter().find(|r| r["k"] == "1" && r["feature_set"] == set).ok_or(format!("no k=1 {set} row"))?;
        field(r, "mean_acc")
    };
    let (af, afl) = (at("f")?, at("f+L")?);
    if afl - af < 0.05 {
        failures.push(format!("(b) accuracy f+L {afl:.3} vs f {af:.3}"));
    }

    let adrf = csv_rows(&work.join("causal/adrf_dl.csv"))?;
    let mu: Vec<f64> = adrf.iter().map(|r| field(r, "mu")).collect::<Result<_, _>>()?;
    let rising = mu.windows(2).filter(|w| w[1] > w[0]).count();
    if rising < 8 {
        failures.push(format!("(c) D_L dose response rises in {rising} of {} steps: {mu:?}", mu.len() - 1));
    }

    let cox = csv_rows(&work.join("survival/cox_coefficients.csv"))?;
    let beta = field(cox.iter().find(|r| r["predictor"] == "D_L").ok_or("no D_L coefficient")?, "beta")?;
    let tests = csv_rows(&work.join("survival/concordance_tests.csv"))?;
    let t = tests.iter().find(|r| r["a"] == "f+L" && r["b"] == "f").ok_or("no f+L vs f test")?;
    let (ca, cb, p) = (field(t, "mean_a")?, field(t, "mean_b")?, field(t, "p")?);
    if !(beta < 0.0 && ca > cb && p < 0.05) {
        failures.push(format!("(d) beta(D_L) {beta:.3}, C f+L {ca:.3} vs f {cb:.3}, p {p:.4}"));
    }
    let summary = format!(
        "(a) {recovered}/{} (b) f+L {afl:.3} vs f {af:.3} (c) {rising}/9 rising (d) beta(D_L) {beta:.3}, C {ca:.3} vs {cb:.3}, p {p:.4}",
        oracle.len()
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failures.join("; ")))
    }
}

/// Every file under `root` except manifests, keyed by relative path.
fn artifacts(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in ok(fs::read_dir(&dir))? {
            let p = ok(e)?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), ok(fs::read(&p))?);
            }
        }
    }
    Ok(out)
}

const SMALL_SYNTH: &str = "tokens_per_month = 40000\nusers = 400\nbackground_vocab = 1500\nfloor_min = 2e-4\nfloor_max = 4e-4\n";

fn determinism(root: &Path) -> Check {
    let runs = [("run1", 1), ("run2", 1), ("shards4", 4)];
    let mut sets = Vec::new();
    for (name, shards) in runs {
        let w = root.join(name);
        full_pipeline(&w, Some(SMALL_SYNTH), 9, shards)?;
        sets.push(artifacts(&w)?);
    }
    for (i, other) in sets.iter().enumerate().skip(1) {
        let base = &sets[0];
        ensure!(
            base.keys().eq(other.keys()),
            "{} produced a different file set than {}",
            runs[i].0,
            runs[0].0
        );
        for (path, bytes) in base {
            ensure!(&other[path] == bytes, "{} differs between {} and {}", path.display(), runs[0].0, runs[i].0);
        }
    }
    Ok(format!("{} artifacts byte-identical across two runs and shard counts 1 and 4", sets[0].len()))
}

// ---- harness ----

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path().to_path_buf();
    let criteria: Vec<(u32, &str, Duration, Box<dyn Fn() -> Check>)> = vec![
        (1, "trigram context example", Duration::from_secs(1), Box::new(trigram_example)),
        (2, "dissemination null model", Duration::from_secs(1), Box::new(null_model_examples)),
        (3, "linguistic residual properties", Duration::from_secs(10), Box::new(residual_properties)),
        (4, "lag dataset row counts", Duration::from_secs(60), Box::new(row_count_identity)),
        (5, "fit kernel oracles", Duration::from_secs(30), Box::new(fit_kernels)),
        (6, "Cox oracles", Duration::from_secs(120), Box::new(cox_oracles)),
        (7, "dose response behavior", Duration::from_secs(120), Box::new(adrf_behavior)),
        (8, "synthetic end-to-end reproduction", Duration::from_secs(600), Box::new({
            let r = root.clone();
            move || synthetic_reproduction(&r)
        })),
        (9, "determinism", Duration::from_secs(600), Box::new({
            let r = root.clone();
            move || determinism(&r)
        })),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (n, name, budget, check) in &criteria {
        if only.is_some_and(|o| o != *n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(msg) if took > *budget => Err(format!("{msg}; took {took:.1?}, budget {budget:?}")),
            r => r,
        };
        match result {
            Ok(msg) => println!("PASS {n} {name}: {msg} [{took:.1?}]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {n} {name}: {msg} [{took:.1?}]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
