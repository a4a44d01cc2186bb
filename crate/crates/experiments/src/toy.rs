//! Toy ridge comparison of supervised (label-regression) and criterion-based
//! generator training, scored by integrated prediction loss.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use gentune_core::generator::{
    ipl, train_criterion, train_supervised, GeneratorModel, HyperProposal, InputSpec, OmegaEncoding,
};
use gentune_core::objective::RidgeProblem;
use gentune_core::rng::derive_seed;
use gentune_core::stats::RunningMoments;
use gentune_core::weights::WeightLaw;

use crate::checks::{Check, Outcome};
use crate::config::ToyConfig;
use crate::error::{ExpError, ExpResult};
use crate::records::{write_csv, ToyRow, ToySummaryRow, SCHEMA_VERSION};

pub const IPL_FILE: &str = "toy_gms_ipl.csv";
pub const SUMMARY_FILE: &str = "toy_gms_summary.csv";
pub const SUPERVISED: &str = "supervised";
pub const CRITERION: &str = "criterion";
pub const CRITERION_TIME_MATCHED: &str = "criterion_time_matched";

fn validate(cfg: &ToyConfig) -> ExpResult<()> {
    if cfg.budgets.is_empty() || cfg.budgets.contains(&0) {
        return Err(ExpError::Config(
            "budgets must be a non-empty list of positive integers".into(),
        ));
    }
    if cfg.ipl_draws < 2 {
        return Err(ExpError::Config("ipl_draws must be at least 2".into()));
    }
    if cfg.run.replications == 0 {
        return Err(ExpError::Config("replications must be at least 1".into()));
    }
    cfg.simulation
        .validate()
        .map_err(|e| ExpError::Config(format!("simulation: {e}")))?;
    HyperProposal::log_uniform(cfg.lambda_lo, cfg.lambda_hi)
        .validate()
        .map_err(|e| ExpError::Config(format!("lambda range: {e}")))?;
    cfg.criterion
        .sgd(cfg.criterion.base_steps.max(1))
        .validate()
        .map_err(|e| ExpError::Config(format!("criterion: {e}")))?;
    Ok(())
}

fn replication(cfg: &ToyConfig, rep: usize) -> ExpResult<Vec<ToyRow>> {
    let seed = derive_seed(cfg.run.seed, rep as u64);
    let data = cfg.simulation.simulate(derive_seed(seed, 0))?;
    let n = data.n();
    let p = data.p();
    let oracle = RidgeProblem::new(data.clone());
    let law = WeightLaw::new(cfg.weights, n)?;
    let proposal = HyperProposal::log_uniform(cfg.lambda_lo, cfg.lambda_hi);
    let init = GeneratorModel::linear(
        InputSpec::for_proposal(&proposal, OmegaEncoding::default_for(n)),
        p,
    );
    let ipl_seed = derive_seed(seed, 1);
    let row = |method: &str,
               b: usize,
               labels: usize,
               steps: usize,
               label_s: f64,
               train_s: f64,
               model: &GeneratorModel| {
        let t = Instant::now();
        let est = ipl(model, &proposal, &law, &oracle, cfg.ipl_draws, ipl_seed)?;
        Ok::<_, ExpError>(ToyRow {
            schema_version: SCHEMA_VERSION,
            experiment: "toy_gms".into(),
            replication: rep,
            seed,
            method: method.into(),
            budget_b: b,
            labels_used: labels,
            optimizer_steps: steps,
            ipl: est.mean,
            mc_std_err: est.std_err,
            label_seconds: label_s,
            train_seconds: train_s,
            eval_seconds: t.elapsed().as_secs_f64(),
        })
    };
    let mut rows = Vec::new();
    for (k, &b) in cfg.budgets.iter().enumerate() {
        let solver = RidgeProblem::new(data.clone());
        let sup = train_supervised(
            init.clone(),
            &proposal,
            &law,
            &solver,
            b,
            &cfg.supervised,
            derive_seed(seed, 10 + k as u64),
        )?;
        rows.push(row(
            SUPERVISED,
            b,
            solver.solve_count(),
            sup.steps_run,
            sup.label_seconds,
            sup.train_seconds,
            &sup.model,
        )?);

        let steps = cfg.criterion.base_steps + cfg.criterion.steps_per_label * b;
        let objective = RidgeProblem::new(data.clone());
        let crit_seed = derive_seed(seed, 100 + k as u64);
        let crit = train_criterion(
            init.clone(),
            &proposal,
            &law,
            &objective,
            &cfg.criterion.sgd(steps),
            crit_seed,
        )?;
        rows.push(row(
            CRITERION,
            b,
            objective.solve_count(),
            steps,
            0.0,
            crit.train_seconds,
            &crit.model,
        )?);

        if cfg.criterion.time_matched {
            let per_step = crit.train_seconds / steps.max(1) as f64;
            let budget = sup.label_seconds + sup.train_seconds;
            let tm_steps = ((budget / per_step.max(1e-12)).round() as usize).max(1);
            let objective = RidgeProblem::new(data.clone());
            let tm = train_criterion(
                init.clone(),
                &proposal,
                &law,
                &objective,
                &cfg.criterion.sgd(tm_steps),
                crit_seed,
            )?;
            rows.push(row(
                CRITERION_TIME_MATCHED,
                b,
                objective.solve_count(),
                tm_steps,
                0.0,
                tm.train_seconds,
                &tm.model,
            )?);
        }
    }
    Ok(rows)
}

fn summarize(cfg: &ToyConfig, rows: &[ToyRow]) -> Vec<ToySummaryRow> {
    let mut out = Vec::new();
    for method in [SUPERVISED, CRITERION, CRITERION_TIME_MATCHED] {
        for &b in &cfg.budgets {
            let sel: Vec<&ToyRow> = rows
                .iter()
                .filter(|r| r.method == method && r.budget_b == b)
                .collect();
            if sel.is_empty() {
                continue;
            }
            let mut ipl = RunningMoments::default();
            sel.iter().for_each(|r| ipl.push(r.ipl));
            let est = ipl.estimate();
            out.push(ToySummaryRow {
                schema_version: SCHEMA_VERSION,
                experiment: "toy_gms".into(),
                seed: cfg.run.seed,
                method: method.into(),
                budget_b: b,
                replications: sel.len(),
                labels_used: sel.iter().map(|r| r.labels_used).sum(),
                ipl: est.mean,
                mc_std_err: if sel.len() > 1 { est.std_err } else { 0.0 },
                train_seconds: sel
                    .iter()
                    .map(|r| r.label_seconds + r.train_seconds)
                    .sum::<f64>()
                    / sel.len() as f64,
            });
        }
    }
    out
}

fn checks(cfg: &ToyConfig, summary: &[ToySummaryRow]) -> Vec<Check> {
    let get = |m: &str, b: usize| summary.iter().find(|r| r.method == m && r.budget_b == b);
    let lo = *cfg.budgets.iter().min().unwrap();
    let hi = *cfg.budgets.iter().max().unwrap();
    let mut out = Vec::new();
    if let (Some(a), Some(z)) = (get(SUPERVISED, lo), get(SUPERVISED, hi)) {
        out.push(Check::new(
            "toy supervised IPL decreases with B",
            a.ipl > 1.5 * z.ipl,
            format!(
                "IPL(B={lo}) = {:.4} vs 1.5 x IPL(B={hi}) = {:.4}",
                a.ipl,
                1.5 * z.ipl
            ),
        ));
    }
    let crit: Vec<f64> = summary
        .iter()
        .filter(|r| r.method == CRITERION)
        .map(|r| r.ipl)
        .collect();
    if !crit.is_empty() {
        let (mn, mx) = crit
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let spread = mx / mn - 1.0;
        out.push(Check::new(
            "toy criterion IPL flat across budgets",
            spread < 0.2,
            format!(
                "IPL range [{mn:.4}, {mx:.4}], spread {:.1}% (limit 20%)",
                100.0 * spread
            ),
        ));
    }
    let labels: usize = summary
        .iter()
        .filter(|r| r.method != SUPERVISED)
        .map(|r| r.labels_used)
        .sum();
    out.push(Check::new(
        "toy criterion training uses no labels",
        labels == 0,
        format!("{labels} inner solves during criterion training"),
    ));
    out
}

pub fn run_toy_gms(cfg: &ToyConfig, out_dir: &Path) -> ExpResult<Outcome> {
    validate(cfg)?;
    let per_rep: Vec<ExpResult<Vec<ToyRow>>> = (0..cfg.run.replications)
        .into_par_iter()
        .map(|r| replication(cfg, r))
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    let summary = summarize(cfg, &rows);
    let files = vec![
        write_csv(out_dir, IPL_FILE, &rows)?,
        write_csv(out_dir, SUMMARY_FILE, &summary)?,
    ];
    Ok(Outcome {
        files,
        checks: checks(cfg, &summary),
    })
}
