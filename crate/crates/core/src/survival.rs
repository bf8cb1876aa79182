//! Proportional-hazards model of time to decline, with concordance and
//! deviance evaluation.

use std::path::Path;

use rayon::prelude::*;

use crate::analyses::{labeled_words, FeatureSet, FeatureSummary, PREDICTORS};
use crate::error::{Error, Result};
use crate::numstats::{chi_square_sf, cholesky, cholesky_inverse, cholesky_solve, kfold_balanced, mean, normal_sf, paired_t, variance, Matrix, TTest};
use crate::series::fmt_opt;
use crate::wordsets::WordLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub word: String,
    /// Months until decline onset, or `T` when censored.
    pub duration: f64,
    pub event: bool,
    /// Standardized early-window means, panel order.
    pub x: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalData {
    pub records: Vec<SurvivalRecord>,
    /// Labeled words without covariates in the early window.
    pub dropped: usize,
}

/// Decline words become events at their split month; growth words are
/// censored at `months`. Covariates are standardized over all records.
pub fn assemble_survival_records(labels: &[WordLabel], fs: &FeatureSummary, months: usize) -> Result<SurvivalData> {
    let split: std::collections::HashMap<&str, Option<u32>> = labels.iter().map(|l| (l.word.as_str(), l.split_month)).collect();
    let mut records = Vec::new();
    let mut dropped = 0;
    for (word, growth) in labeled_words(labels) {
        let duration = if growth {
            months as f64
        } else {
            match split[word.as_str()] {
                Some(s) if (1..=months as u32).contains(&s) => s as f64,
                Some(s) => return Err(Error::invalid(format!("decline word {word:?} splits at month {s}, outside 1..={months}"))),
                None => return Err(Error::invalid(format!("decline word {word:?} has no split month"))),
            }
        };
        match fs.index_of(&word) {
            Some(i) => records.push(SurvivalRecord {
                word,
                duration,
                event: !growth,
                x: fs.values[i],
            }),
            None => dropped += 1,
        }
    }
    for j in 0..5 {
        let col: Vec<f64> = records.iter().map(|r| r.x[j]).collect();
        if col.is_empty() {
            break;
        }
        let m = mean(&col);
        let sd = variance(&col).sqrt();
        for r in &mut records {
            r.x[j] = if sd > 0.0 { (r.x[j] - m) / sd } else { 0.0 };
        }
    }
    Ok(SurvivalData { records, dropped })
}

#[derive(Debug, Clone, Copy)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest coefficient change.
    pub tol: f64,
    /// Coefficients beyond this magnitude are treated as a diverging
    /// (monotone) likelihood.
    pub divergence_bound: f64,
    pub ridge: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            divergence_bound: 10.0,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxModel {
    pub predictors: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    /// Two-sided normal p-values.
    pub p: Vec<f64>,
    /// Partial log-likelihood at the estimate (without any penalty).
    pub loglik: f64,
    /// Objective after every accepted Newton step, starting at zero.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Largest absolute score component at the estimate.
    pub score_max: f64,
    /// The unpenalized likelihood diverged and a small ridge penalty was used.
    pub ridge: bool,
}

impl CoxModel {
    pub fn risk(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

/// Event times in descending order with the indices at each time.
fn time_groups(time: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if time[g[0]] == time[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

struct Evaluation {
    loglik: f64,
    score: Vec<f64>,
    /// Observed information, row-major p x p.
    info: Vec<f64>,
}

/// Efron partial log-likelihood with its score and information.
fn efron(rows: &[Vec<f64>], event: &[bool], groups: &[Vec<usize>], beta: &[f64]) -> Evaluation {
    let p = beta.len();
    let eta: Vec<f64> = rows.iter().map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum()).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];
    let mut ev = Evaluation {
        loglik: 0.0,
        score: vec![0.0; p],
        info: vec![0.0; p * p],
    };
    let mut a = vec![0.0; p];
    for g in groups {
        for &i in g {
            s0 += w[i];
            for j in 0..p {
                s1[j] += w[i] * rows[i][j];
                for k in 0..p {
                    s2[j * p + k] += w[i] * rows[i][j] * rows[i][k];
                }
            }
        }
        let deaths: Vec<usize> = g.iter().copied().filter(|&i| event[i]).collect();
        if deaths.is_empty() {
            continue;
        }
        let d = deaths.len() as f64;
        let mut d0 = 0.0;
        let mut d1 = vec![0.0; p];
        let mut d2 = vec![0.0; p * p];
        for &i in &deaths {
            ev.loglik += eta[i];
            d0 += w[i];
            for j in 0..p {
                ev.score[j] += rows[i][j];
                d1[j] += w[i] * rows[i][j];
                for k in 0..p {
                    d2[j * p + k] += w[i] * rows[i][j] * rows[i][k];
                }
            }
        }
        for l in 0..deaths.len() {
            let frac = l as f64 / d;
            let den = s0 - frac * d0;
            ev.loglik -= den.ln() + shift;
            for j in 0..p {
                a[j] = (s1[j] - frac * d1[j]) / den;
                ev.score[j] -= a[j];
            }
            for j in 0..p {
                for k in 0..p {
                    ev.info[j * p + k] += (s2[j * p + k] - frac * d2[j * p + k]) / den - a[j] * a[k];
                }
            }
        }
    }
    ev
}

fn penalized(ev: &Evaluation, beta: &[f64], ridge: f64) -> f64 {
    ev.loglik - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
}

struct Newton {
    beta: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn newton(rows: &[Vec<f64>], event: &[bool], groups: &[Vec<usize>], p: usize, ridge: f64, opts: &CoxOptions) -> Result<Newton> {
    let mut beta = vec![0.0; p];
    let mut ev = efron(rows, event, groups, &beta);
    let mut obj = penalized(&ev, &beta, ridge);
    let mut trace = vec![obj];
    for it in 1..=opts.max_iter {
        let mut info = Matrix::from_row_major(p, p, ev.info.clone())?;
        let mut grad = ev.score.clone();
        for j in 0..p {
            info.set(j, j, info.get(j, j) + ridge);
            grad[j] -= ridge * beta[j];
        }
        let l = match cholesky(&info) {
            Ok(l) => l,
            // information vanishing along a diverging direction
            Err(_) if beta.iter().any(|b| b.abs() > opts.divergence_bound) => {
                return Ok(Newton {
                    beta,
                    trace,
                    iterations: it,
                    converged: false,
                })
            }
            Err(_) => {
                return Err(Error::numerical(format!(
                    "information matrix is singular at iteration {it}; covariates may be collinear"
                )))
            }
        };
        let mut step = cholesky_solve(&l, &grad);
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
            let cev = efron(rows, event, groups, &cand);
            let cobj = penalized(&cev, &cand, ridge);
            if cobj >= obj {
                beta = cand;
                ev = cev;
                obj = cobj;
                accepted = true;
                break;
            }
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
        let change = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if accepted {
            trace.push(obj);
        }
        if !accepted || change < opts.tol {
            return Ok(Newton {
                beta,
                trace,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(Newton {
        beta,
        trace,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// Fits a proportional-hazards model by damped Newton iterations on the
/// Efron partial likelihood. `rows[i]` are the covariates of record `i`.
pub fn cox_fit_rows(rows: &[Vec<f64>], time: &[f64], event: &[bool], opts: CoxOptions) -> Result<CoxModel> {
    if rows.len() != time.len() || rows.len() != event.len() {
        return Err(Error::invalid("covariates, durations and events differ in length"));
    }
    if !event.iter().any(|&e| e) {
        return Err(Error::invalid("a hazards model needs at least one event"));
    }
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("covariate rows differ in length"));
    }
    // a column constant over all records carries no information; its coefficient is zero
    let active: Vec<usize> = (0..p).filter(|&j| rows.iter().any(|r| r[j] != rows[0][j])).collect();
    let sub: Vec<Vec<f64>> = rows.iter().map(|r| active.iter().map(|&j| r[j]).collect()).collect();
    let q = active.len();
    let groups = time_groups(time);
    let bounded = |b: &[f64]| b.iter().all(|v| v.abs() <= opts.divergence_bound);
    let mut fit = newton(&sub, event, &groups, q, 0.0, &opts)?;
    let mut ridge = 0.0;
    if !(fit.converged && bounded(&fit.beta)) {
        if fit.converged || !bounded(&fit.beta) {
            ridge = opts.ridge;
            fit = newton(&sub, event, &groups, q, ridge, &opts)?;
        }
        if !fit.converged {
            let biggest = fit.beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            return Err(Error::numerical(format!(
                "hazards model did not converge in {} iterations (largest |beta| = {biggest:.3e}, objective {:.6})",
                opts.max_iter,
                fit.trace.last().copied().unwrap_or(f64::NAN)
            )));
        }
    }
    let ev = efron(&sub, event, &groups, &fit.beta);
    let mut info = Matrix::from_row_major(q, q, ev.info.clone())?;
    for j in 0..q {
        info.set(j, j, info.get(j, j) + ridge);
    }
    let cov = if q > 0 { Some(cholesky_inverse(&cholesky(&info)?)) } else { None };
    let mut beta = vec![0.0; p];
    let mut se = vec![f64::NAN; p];
    for (a, &j) in active.iter().enumerate() {
        beta[j] = fit.beta[a];
        se[j] = cov.as_ref().map_or(f64::NAN, |c| c.get(a, a).sqrt());
    }
    let z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    Ok(CoxModel {
        predictors: (1..=p).map(|j| format!("x{j}")).collect(),
        p: z.iter().map(|z| (2.0 * normal_sf(z.abs())).min(1.0)).collect(),
        score_max: ev.score.iter().zip(&fit.beta).fold(0.0f64, |m, (g, b)| m.max((g - ridge * b).abs())),
        loglik: ev.loglik,
        beta,
        se,
        z,
        trace: fit.trace,
        iterations: fit.iterations,
        ridge: ridge > 0.0,
    })
}

/// Fits the model on the columns of one feature set.
pub fn cox_fit(records: &[SurvivalRecord], columns: &[usize], opts: CoxOptions) -> Result<CoxModel> {
    let rows: Vec<Vec<f64>> = records.iter().map(|r| columns.iter().map(|&c| r.x[c]).collect()).collect();
    let time: Vec<f64> = records.iter().map(|r| r.duration).collect();
    let event: Vec<bool> = records.iter().map(|r| r.event).collect();
    let mut m = cox_fit_rows(&rows, &time, &event, opts)?;
    m.predictors = columns.iter().map(|&c| PREDICTORS[c].to_string()).collect();
    Ok(m)
}

impl CoxModel {
    /// `predictor,beta,se,z,p`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["predictor", "beta", "se", "z", "p"])?;
        for j in 0..self.beta.len() {
            w.write_record([
                self.predictors[j].clone(),
                fmt_opt(Some(self.beta[j])),
                fmt_opt(Some(self.se[j])),
                fmt_opt(Some(self.z[j])),
                fmt_opt(Some(self.p[j])),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Harrell's C: over pairs where an event precedes another record's
/// duration, the fraction where the earlier record has the higher risk.
/// Risk ties count one half. `None` without comparable pairs.
pub fn concordance_index(risk: &[f64], time: &[f64], event: &[bool]) -> Option<f64> {
    let mut pairs = 0u64;
    let mut score = 0.0;
    for i in 0..risk.len() {
        if !event[i] {
            continue;
        }
        for j in 0..risk.len() {
            if time[j] > time[i] {
                pairs += 1;
                if risk[i] > risk[j] {
                    score += 1.0;
                } else if risk[i] == risk[j] {
                    score += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| score / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevianceTest {
    pub statistic: f64,
    pub df: u32,
    pub p: f64,
}

/// Likelihood-ratio test of a nested model against a larger one fit on the
/// same records.
pub fn deviance_test(nested: &CoxModel, full: &CoxModel, extra_df: u32) -> Result<DevianceTest> {
    let diff = full.loglik - nested.loglik;
    if diff < -1e-9 * (1.0 + nested.loglik.abs()) {
        return Err(Error::numerical(format!(
            "larger model fits worse than the nested one ({:.6} < {:.6})",
            full.loglik, nested.loglik
        )));
    }
    let statistic = 2.0 * diff.max(0.0);
    let p = if extra_df == 0 { 1.0 } else { chi_square_sf(statistic, extra_df) };
    Ok(DevianceTest {
        statistic,
        df: extra_df,
        p: if statistic == 0.0 { 1.0 } else { p },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCv {
    pub sets: Vec<FeatureSet>,
    /// `scores[s][fold]` for `sets[s]`.
    pub scores: Vec<Vec<f64>>,
}

impl SurvivalCv {
    pub fn mean(&self, set: FeatureSet) -> Option<f64> {
        self.sets.iter().position(|&s| s == set).map(|i| mean(&self.scores[i]))
    }

    /// Paired t-test of fold scores, `a` minus `b`; two-sided.
    pub fn compare(&self, a: FeatureSet, b: FeatureSet) -> Option<TTest> {
        let ia = self.sets.iter().position(|&s| s == a)?;
        let ib = self.sets.iter().position(|&s| s == b)?;
        paired_t(&self.scores[ia], &self.scores[ib])
    }

    /// `fold,feature_set,c`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["fold", "feature_set", "c"])?;
        for (s, set) in self.sets.iter().enumerate() {
            for (f, c) in self.scores[s].iter().enumerate() {
                w.write_record([(f + 1).to_string(), set.name().to_string(), fmt_opt(Some(*c))])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Held-out concordance per fold and feature set. Folds are stratified by
/// event status and shared across sets.
pub fn survival_cv(records: &[SurvivalRecord], folds: usize, sets: &[FeatureSet], seed: u64, opts: CoxOptions) -> Result<SurvivalCv> {
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events < folds {
        return Err(Error::invalid(format!("{n_events} events cannot be spread over {folds} folds")));
    }
    let fold_of = kfold_balanced(&events, folds, seed)?;
    let per_fold: Vec<Result<Vec<f64>>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<SurvivalRecord> = records.iter().zip(&fold_of).filter(|(_, &f)| f != fold).map(|(r, _)| r.clone()).collect();
            let test: Vec<&SurvivalRecord> = records.iter().zip(&fold_of).filter(|(_, &f)| f == fold).map(|(r, _)| r).collect();
            let time: Vec<f64> = test.iter().map(|r| r.duration).collect();
            let event: Vec<bool> = test.iter().map(|r| r.event).collect();
            sets.iter()
                .map(|set| {
                    let cols = set.columns();
                    let model = cox_fit(&train, cols, opts)?;
                    let risk: Vec<f64> = test
                        .iter()
                        .map(|r| model.risk(&cols.iter().map(|&c| r.x[c]).collect::<Vec<_>>()))
                        .collect();
                    concordance_index(&risk, &time, &event)
                        .ok_or_else(|| Error::invalid(format!("fold {} has no comparable pairs", fold + 1)))
                })
                .collect()
        })
        .collect();
    let per_fold: Vec<Vec<f64>> = per_fold.into_iter().collect::<Result<_>>()?;
    Ok(SurvivalCv {
        sets: sets.to_vec(),
        scores: (0..sets.len()).map(|s| per_fold.iter().map(|f| f[s]).collect()).collect(),
    })
}
