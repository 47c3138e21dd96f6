//! Benchmark harness: acceptance-length aggregates, parameter sweeps,
//! expectation-versus-outcome calibration, and draft/verify cost ratios.
//!
//! The central figure of merit is the mean acceptance length, the average
//! number of tokens committed per decoding step. It is computed over step
//! records rather than emitted tokens so the final truncated step still
//! counts at full weight.

use crate::decoding::{run_decoding, BuilderKind, DecodeConfig, DecodeError, StepResult};
use crate::oracle::{splitmix64, Oracle};
use crate::tree::TokenId;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least {need} records, got {got}")]
    NotEnoughRecords { need: usize, got: usize },
    #[error("invalid benchmark input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Mean acceptance length: total committed tokens divided by steps.
pub fn mean_acceptance_length(steps: &[StepResult]) -> f64 {
    if steps.is_empty() {
        return 0.0;
    }
    let total: usize = steps.iter().map(|s| s.acceptance_length()).sum();
    total as f64 / steps.len() as f64
}

/// Per-step (expected, realized) acceptance-length pairs.
pub fn expectation_pairs(steps: &[StepResult]) -> Vec<(f64, usize)> {
    steps
        .iter()
        .map(|s| (s.expectation, s.acceptance_length()))
        .collect()
}

/// Aggregate outcome of one benchmark configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub builder: String,
    pub node_budget: usize,
    pub threshold: f64,
    pub temperature: f64,
    /// Mean acceptance length over all steps.
    pub mal: f64,
    /// Mean expected acceptance length of the drafted trees.
    pub mean_e: f64,
    pub steps: usize,
    /// Tokens actually emitted, after per-prompt truncation.
    pub tokens: usize,
    pub wall_s: f64,
    pub tokens_per_s: f64,
    /// Mean frontier advances per step; carried in JSON reports only.
    pub mean_drafting_steps: f64,
}

/// Rows from one benchmark or sweep invocation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

/// Column set of the CSV form. `mean_drafting_steps` is deliberately not
/// part of it; consumers that want it read the JSON report.
pub const BENCH_CSV_HEADER: &str =
    "builder,node_budget,threshold,temperature,mal,mean_e,steps,tokens,wall_s,tokens_per_s";

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BENCH_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.4},{:.4},{},{},{:.4},{:.1}",
                row.builder,
                row.node_budget,
                row.threshold,
                row.temperature,
                row.mal,
                row.mean_e,
                row.steps,
                row.tokens,
                row.wall_s,
                row.tokens_per_s,
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Runs `cfg` over every prompt and aggregates one row. Prompt `i` decodes
/// under a seed derived from `cfg.seed` and `i`, so runs are reproducible
/// yet prompts do not share sampling streams.
pub fn run_benchmark(
    prompts: &[Vec<TokenId>],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    cfg: &DecodeConfig,
) -> Result<(BenchRow, Vec<StepResult>), BenchError> {
    if prompts.is_empty() {
        return Err(BenchError::InvalidInput("no prompts supplied".into()));
    }
    let start = Instant::now();
    let mut steps = Vec::new();
    let mut tokens = 0usize;
    for (i, prompt) in prompts.iter().enumerate() {
        let mut prompt_cfg = cfg.clone();
        prompt_cfg.seed = splitmix64(cfg.seed ^ splitmix64(i as u64 + 1));
        let (generated, prompt_steps) = run_decoding(prompt, target, draft, &prompt_cfg)?;
        tokens += generated.len();
        steps.extend(prompt_steps);
    }
    let wall_s = start.elapsed().as_secs_f64();
    let n = steps.len() as f64;
    let row = BenchRow {
        builder: cfg.builder.label().to_string(),
        node_budget: cfg.effective_budget(),
        threshold: cfg.threshold,
        temperature: cfg.temperature,
        mal: mean_acceptance_length(&steps),
        mean_e: steps.iter().map(|s| s.expectation).sum::<f64>() / n,
        steps: steps.len(),
        tokens,
        wall_s,
        tokens_per_s: if wall_s > 0.0 {
            tokens as f64 / wall_s
        } else {
            0.0
        },
        mean_drafting_steps: steps.iter().map(|s| s.drafting_steps as f64).sum::<f64>() / n,
    };
    Ok((row, steps))
}

/// Benchmarks the same prompts under several tree construction strategies.
pub fn compare_builders(
    prompts: &[Vec<TokenId>],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    base: &DecodeConfig,
    builders: Vec<BuilderKind>,
) -> Result<BenchReport, BenchError> {
    let mut report = BenchReport::default();
    for builder in builders {
        let mut cfg = base.clone();
        cfg.builder = builder;
        report
            .rows
            .push(run_benchmark(prompts, target, draft, &cfg)?.0);
    }
    Ok(report)
}

/// One row per budget; everything else held at `base`. Budgets must be
/// strictly ascending.
pub fn sweep_node_budget(
    prompts: &[Vec<TokenId>],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    base: &DecodeConfig,
    budgets: &[usize],
) -> Result<BenchReport, BenchError> {
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::InvalidInput(
            "budgets must be strictly ascending".into(),
        ));
    }
    let mut report = BenchReport::default();
    for &node_budget in budgets {
        let cfg = DecodeConfig {
            node_budget,
            ..base.clone()
        };
        report
            .rows
            .push(run_benchmark(prompts, target, draft, &cfg)?.0);
    }
    Ok(report)
}

/// One row per stopping threshold; everything else held at `base`.
pub fn sweep_threshold(
    prompts: &[Vec<TokenId>],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    base: &DecodeConfig,
    thresholds: &[f64],
) -> Result<BenchReport, BenchError> {
    let mut report = BenchReport::default();
    for &threshold in thresholds {
        let cfg = DecodeConfig {
            threshold,
            ..base.clone()
        };
        report
            .rows
            .push(run_benchmark(prompts, target, draft, &cfg)?.0);
    }
    Ok(report)
}

/// One row per temperature; everything else held at `base`.
pub fn sweep_temperature(
    prompts: &[Vec<TokenId>],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    base: &DecodeConfig,
    temperatures: &[f64],
) -> Result<BenchReport, BenchError> {
    let mut report = BenchReport::default();
    for &temperature in temperatures {
        let cfg = DecodeConfig {
            temperature,
            ..base.clone()
        };
        report
            .rows
            .push(run_benchmark(prompts, target, draft, &cfg)?.0);
    }
    Ok(report)
}

/// Joint counts of rounded expected acceptance length against realized
/// acceptance length, plus their Pearson correlation over the raw pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGrid {
    /// `counts[e][a]`: steps whose expectation rounds to `e` and that
    /// committed `a` tokens.
    pub counts: Vec<Vec<usize>>,
    /// Pearson correlation of the unrounded pairs; 0 when degenerate.
    pub pearson: f64,
    /// True when either marginal has zero variance, which leaves the
    /// correlation undefined.
    pub degenerate: bool,
    pub steps: usize,
}

impl CorrelationGrid {
    /// Steps falling in expectation bin `e`.
    pub fn bin_total(&self, e: usize) -> usize {
        self.counts.get(e).map_or(0, |row| row.iter().sum())
    }

    /// Most frequent acceptance length within expectation bin `e`; the
    /// smaller length wins ties. `None` for an empty bin.
    pub fn modal_acceptance(&self, e: usize) -> Option<usize> {
        let row = self.counts.get(e)?;
        let best = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        if *best.1 == 0 {
            None
        } else {
            Some(best.0)
        }
    }

    /// CSV matrix: one row per rounded-expectation bin, one column per
    /// realized acceptance length, zero cells included.
    pub fn to_csv(&self) -> String {
        let width = self.counts.first().map_or(0, Vec::len);
        let mut out = String::from("e_bin");
        for a in 0..width {
            write!(out, ",a{a}").expect("writing to a String cannot fail");
        }
        out.push('\n');
        for (e, row) in self.counts.iter().enumerate() {
            write!(out, "{e}").expect("writing to a String cannot fail");
            for count in row {
                write!(out, ",{count}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serialization cannot fail")
    }
}

/// Builds the calibration grid from (expected, realized) pairs. Requires
/// at least two records; fewer cannot carry a correlation.
pub fn correlate(pairs: &[(f64, usize)]) -> Result<CorrelationGrid, BenchError> {
    if pairs.len() < 2 {
        return Err(BenchError::NotEnoughRecords {
            need: 2,
            got: pairs.len(),
        });
    }
    for &(e, _) in pairs {
        if !e.is_finite() || e < 0.0 {
            return Err(BenchError::InvalidInput(format!(
                "expectation {e} is not a finite non-negative number"
            )));
        }
    }
    let max_bin = pairs
        .iter()
        .map(|&(e, _)| e.round() as usize)
        .max()
        .unwrap_or(0);
    let max_a = pairs.iter().map(|&(_, a)| a).max().unwrap_or(0);
    let mut counts = vec![vec![0usize; max_a + 1]; max_bin + 1];
    for &(e, a) in pairs {
        counts[e.round() as usize][a] += 1;
    }

    let n = pairs.len() as f64;
    let mean_e = pairs.iter().map(|&(e, _)| e).sum::<f64>() / n;
    let mean_a = pairs.iter().map(|&(_, a)| a as f64).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_e = 0.0;
    let mut var_a = 0.0;
    for &(e, a) in pairs {
        let de = e - mean_e;
        let da = a as f64 - mean_a;
        cov += de * da;
        var_e += de * de;
        var_a += da * da;
    }
    let degenerate = var_e == 0.0 || var_a == 0.0;
    let pearson = if degenerate {
        0.0
    } else {
        cov / (var_e.sqrt() * var_a.sqrt())
    };
    Ok(CorrelationGrid {
        counts,
        pearson,
        degenerate,
        steps: pairs.len(),
    })
}

/// Measured ratio of drafting cost to verification cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    /// Median per-step ratio of draft time to verification time.
    pub mu: f64,
    /// Total seconds spent drafting across all trials.
    pub draft_s: f64,
    /// Total seconds spent verifying across all trials.
    pub verify_s: f64,
    pub trials: usize,
}

/// Times `trials` consecutive decode steps and reports the median ratio of
/// drafting cost to verification cost.
///
/// Verification is charged for scoring the candidate nodes and walking the
/// result. In a steady-state pipeline the root's distribution is left over
/// from the previous step, so the batched forward pass is charged pro rata
/// for the non-root nodes only.
pub fn measure_mu(
    prompt: &[TokenId],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    cfg: &DecodeConfig,
    trials: usize,
) -> Result<MuEstimate, BenchError> {
    use crate::attention::{build_mask, flatten};
    use crate::decoding::verify_greedy;

    if trials == 0 {
        return Err(BenchError::InvalidInput(
            "cost measurement needs at least one trial".into(),
        ));
    }
    if cfg.builder == BuilderKind::None {
        return Err(BenchError::InvalidInput(
            "no drafting happens without speculation, so the ratio is undefined".into(),
        ));
    }
    cfg.validate()?;
    if prompt.is_empty() {
        return Err(BenchError::Decode(DecodeError::EmptyPrompt));
    }

    let mut prefix = prompt.to_vec();
    let mut ratios = Vec::with_capacity(trials);
    let mut draft_s = 0.0;
    let mut verify_s = 0.0;
    for _ in 0..trials {
        let draft_start = Instant::now();
        let (tree, _) = crate::decoding::build_with_builder(&prefix, draft, cfg)?;
        let draft_t = draft_start.elapsed().as_secs_f64();

        let flat = flatten(&tree);
        let mask = build_mask(&flat);
        let context = &prefix[..prefix.len() - 1];
        let batch_start = Instant::now();
        let dists = target
            .batch_tree_forward(context, &flat, &mask)
            .map_err(DecodeError::from)?;
        let batch_t = batch_start.elapsed().as_secs_f64();

        let walk_start = Instant::now();
        let verify = verify_greedy(&tree, &dists)?;
        let walk_t = walk_start.elapsed().as_secs_f64();

        let candidates = tree.candidate_count() as f64;
        let verify_t = batch_t * candidates / (candidates + 1.0) + walk_t;
        draft_s += draft_t;
        verify_s += verify_t;
        ratios.push(if verify_t > 0.0 {
            draft_t / verify_t
        } else {
            f64::INFINITY
        });

        prefix.extend_from_slice(&verify.accepted);
        prefix.push(verify.bonus);
    }
    ratios.sort_by(f64::total_cmp);
    let mu = if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2]) / 2.0
    };
    Ok(MuEstimate {
        mu,
        draft_s,
        verify_s,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleError;
    use std::time::Duration;

    fn toks(ids: &[u32]) -> Vec<TokenId> {
        ids.iter().map(|&i| TokenId(i)).collect()
    }

    struct ChainOracle {
        vocab: usize,
    }

    impl Oracle for ChainOracle {
        fn vocab_size(&self) -> usize {
            self.vocab
        }
        fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>, OracleError> {
            let last = prefix.last().ok_or(OracleError::EmptyPrefix)?;
            let mut dist = vec![0.0; self.vocab];
            dist[(last.index() + 1) % self.vocab] = 1.0;
            Ok(dist)
        }
    }

    /// Burns a fixed amount of wall time per query; keeps the default
    /// node-by-node batch path so batch cost scales with tree size.
    struct DelayOracle {
        inner: ChainOracle,
        delay: Duration,
    }

    impl Oracle for DelayOracle {
        fn vocab_size(&self) -> usize {
            self.inner.vocab_size()
        }
        fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>, OracleError> {
            let start = Instant::now();
            while start.elapsed() < self.delay {
                std::hint::spin_loop();
            }
            self.inner.next_distribution(prefix)
        }
    }

    #[test]
    fn csv_header_is_pinned() {
        assert_eq!(
            BENCH_CSV_HEADER,
            "builder,node_budget,threshold,temperature,mal,mean_e,steps,tokens,wall_s,tokens_per_s"
        );
        let report = BenchReport::default();
        assert_eq!(report.to_csv(), format!("{BENCH_CSV_HEADER}\n"));
    }

    #[test]
    fn deterministic_chain_benchmark_hits_depth_plus_one() {
        let oracle = ChainOracle { vocab: 64 };
        let cfg = DecodeConfig {
            node_budget: 10,
            threshold: 0.5,
            max_new_tokens: 22,
            ..DecodeConfig::new(BuilderKind::Opt)
        };
        let prompts = vec![toks(&[0]), toks(&[5])];
        let (row, steps) = run_benchmark(&prompts, &oracle, &oracle, &cfg).unwrap();
        // Depth-10 chains are always fully accepted: 11 tokens per step,
        // 2 steps per prompt to cover 22 tokens.
        assert_eq!(row.mal, 11.0);
        assert_eq!(row.mean_e, 10.0);
        assert_eq!(row.steps, 4);
        assert_eq!(row.tokens, 44);
        assert_eq!(steps.len(), 4);
    }

    #[test]
    fn csv_report_carries_one_line_per_row() {
        let oracle = ChainOracle { vocab: 64 };
        let base = DecodeConfig {
            max_new_tokens: 6,
            ..DecodeConfig::new(BuilderKind::Opt)
        };
        let prompts = vec![toks(&[0])];
        let report = sweep_node_budget(&prompts, &oracle, &oracle, &base, &[2, 5]).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], BENCH_CSV_HEADER);
        assert!(lines[1].starts_with("opt,2,0.7,0,3.0000,2.0000,"));
        assert!(lines[2].starts_with("opt,5,0.7,0,6.0000,5.0000,"));
    }

    #[test]
    fn json_report_round_trips_and_keeps_drafting_steps() {
        let oracle = ChainOracle { vocab: 64 };
        let cfg = DecodeConfig {
            node_budget: 3,
            max_new_tokens: 4,
            ..DecodeConfig::new(BuilderKind::Opt)
        };
        let (row, _) = run_benchmark(&[toks(&[0])], &oracle, &oracle, &cfg).unwrap();
        let report = BenchReport { rows: vec![row] };
        let json = report.to_json();
        assert!(json.contains("mean_drafting_steps"));
        assert!(!BENCH_CSV_HEADER.contains("mean_drafting_steps"));
        let parsed: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn budget_sweep_mal_is_non_decreasing_for_a_deterministic_chain() {
        let oracle = ChainOracle { vocab: 64 };
        let base = DecodeConfig {
            max_new_tokens: 12,
            ..DecodeConfig::new(BuilderKind::Opt)
        };
        let prompts = vec![toks(&[0])];
        let report = sweep_node_budget(&prompts, &oracle, &oracle, &base, &[1, 4, 8]).unwrap();
        let mals: Vec<f64> = report.rows.iter().map(|r| r.mal).collect();
        assert_eq!(mals, vec![2.0, 5.0, 9.0]);
    }

    #[test]
    fn perfectly_aligned_pairs_correlate_fully() {
        let pairs = vec![(1.0, 1), (2.0, 2), (1.0, 1), (3.0, 3)];
        let grid = correlate(&pairs).unwrap();
        assert!((grid.pearson - 1.0).abs() < 1e-12);
        assert!(!grid.degenerate);
        assert_eq!(grid.steps, 4);
        assert_eq!(grid.counts[1][1], 2);
        assert_eq!(grid.counts[2][2], 1);
        assert_eq!(grid.counts[3][3], 1);
        assert_eq!(grid.bin_total(1), 2);
        assert_eq!(grid.modal_acceptance(1), Some(1));
        assert_eq!(grid.modal_acceptance(0), None);
    }

    #[test]
    fn constant_marginal_is_degenerate_with_zero_correlation() {
        let pairs = vec![(2.0, 1), (2.0, 2), (2.0, 3)];
        let grid = correlate(&pairs).unwrap();
        assert!(grid.degenerate);
        assert_eq!(grid.pearson, 0.0);
    }

    #[test]
    fn correlation_needs_two_records() {
        assert!(matches!(
            correlate(&[(1.0, 1)]).unwrap_err(),
            BenchError::NotEnoughRecords { need: 2, got: 1 }
        ));
    }

    #[test]
    fn grid_csv_is_a_bin_by_length_matrix() {
        let grid = correlate(&[(0.4, 1), (1.2, 2)]).unwrap();
        // bins 0 and 1 as rows, lengths 0 to 2 as columns.
        assert_eq!(grid.to_csv(), "e_bin,a0,a1,a2\n0,0,1,0\n1,0,0,1\n");
    }

    #[test]
    fn grid_counts_sum_to_the_number_of_steps() {
        let pairs = vec![(0.4, 1), (1.2, 2), (2.6, 3), (1.9, 2), (0.1, 1)];
        let grid = correlate(&pairs).unwrap();
        let total: usize = grid.counts.iter().flatten().sum();
        assert_eq!(total, grid.steps);
        assert_eq!(total, pairs.len());
    }

    #[test]
    fn rounding_buckets_expectations_to_the_nearest_bin() {
        let grid = correlate(&[(1.49, 1), (1.51, 2)]).unwrap();
        assert_eq!(grid.counts[1][1], 1);
        assert_eq!(grid.counts[2][2], 1);
    }

    #[test]
    fn equal_cost_oracles_measure_near_unit_mu() {
        let delay = Duration::from_millis(1);
        let target = DelayOracle {
            inner: ChainOracle { vocab: 32 },
            delay,
        };
        let draft = DelayOracle {
            inner: ChainOracle { vocab: 32 },
            delay,
        };
        let cfg = DecodeConfig {
            node_budget: 1,
            ..DecodeConfig::new(BuilderKind::Opt)
        };
        let est = measure_mu(&toks(&[0]), &target, &draft, &cfg, 5).unwrap();
        assert_eq!(est.trials, 5);
        assert!(
            (est.mu - 1.0).abs() <= 0.2,
            "equal per-query cost at budget 1 should give a ratio near 1, got {}",
            est.mu
        );
    }

    #[test]
    fn tenfold_slower_target_measures_mu_near_a_tenth() {
        let target = DelayOracle {
            inner: ChainOracle { vocab: 32 },
            delay: Duration::from_millis(5),
        };
        let draft = DelayOracle {
            inner: ChainOracle { vocab: 32 },
            delay: Duration::from_micros(500),
        };
        let cfg = DecodeConfig {
            node_budget: 1,
            ..DecodeConfig::new(BuilderKind::Opt)
        };
        let est = measure_mu(&toks(&[0]), &target, &draft, &cfg, 5).unwrap();
        assert!(
            (est.mu - 0.1).abs() <= 0.02,
            "a 10x slower target should give a ratio near 0.1, got {}",
            est.mu
        );
    }

    #[test]
    fn mu_measurement_rejects_zero_trials_and_no_speculation() {
        let oracle = ChainOracle { vocab: 8 };
        let cfg = DecodeConfig::new(BuilderKind::Opt);
        assert!(matches!(
            measure_mu(&toks(&[0]), &oracle, &oracle, &cfg, 0).unwrap_err(),
            BenchError::InvalidInput(_)
        ));
        let cfg = DecodeConfig::new(BuilderKind::None);
        assert!(matches!(
            measure_mu(&toks(&[0]), &oracle, &oracle, &cfg, 3).unwrap_err(),
            BenchError::InvalidInput(_)
        ));
    }

    #[test]
    fn benchmark_rejects_empty_prompt_lists() {
        let oracle = ChainOracle { vocab: 8 };
        let cfg = DecodeConfig::new(BuilderKind::Opt);
        assert!(matches!(
            run_benchmark(&[], &oracle, &oracle, &cfg).unwrap_err(),
            BenchError::InvalidInput(_)
        ));
    }

    #[test]
    fn compare_builders_labels_every_row() {
        let oracle = ChainOracle { vocab: 64 };
        let base = DecodeConfig {
            node_budget: 6,
            max_new_tokens: 8,
            ..DecodeConfig::new(BuilderKind::Opt)
        };
        let report = compare_builders(
            &[toks(&[0])],
            &oracle,
            &oracle,
            &base,
            vec![
                BuilderKind::Opt,
                BuilderKind::Binary,
                BuilderKind::Sequence {
                    chains: 2,
                    length: 3,
                },
                BuilderKind::None,
            ],
        )
        .unwrap();
        let labels: Vec<&str> = report.rows.iter().map(|r| r.builder.as_str()).collect();
        assert_eq!(labels, vec!["opt", "binary", "sequence", "none"]);
        // A deterministic chain favors the adaptive tree over fixed shapes
        // and no speculation commits exactly one token per step.
        assert!(report.rows[0].mal >= report.rows[1].mal);
        assert_eq!(report.rows[3].mal, 1.0);
        // Sequence and none budgets come from their own shapes.
        assert_eq!(report.rows[2].node_budget, 6);
        assert_eq!(report.rows[3].node_budget, 0);
    }
}
