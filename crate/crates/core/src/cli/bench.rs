//! Heuristic comparison over a suite of instances.
//!
//! Writes three CSV files to the output directory:
//!
//! - `results.csv`: one row per (instance, heuristic).
//! - `summary.csv`: per heuristic, verdict counts, mean and median branches
//!   and time, and the better-or-equal win rate against the baseline.
//! - `head_to_head.csv`: win/tie/loss counts against the baseline, skipping
//!   instances where both runs ended `Unknown`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resolve_config, BenchArgs, ResolvedConfig};
use crate::bab::{verify, Verdict};
use crate::heuristics::HeuristicKind;
use crate::model::{load_task, VerificationTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub heuristic: HeuristicKind,
    pub verdict: Verdict,
    pub branches: u64,
    pub splits: u64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub heuristic: HeuristicKind,
    pub instances: usize,
    pub safe: usize,
    #[serde(rename = "unsafe")]
    pub unsafe_: usize,
    pub unknown: usize,
    pub pct_unknown: f64,
    pub mean_branches: f64,
    pub median_branches: f64,
    pub mean_time_s: f64,
    pub median_time_s: f64,
    /// Percentage of instances with branches <= the baseline's.
    pub winrate_branches: f64,
    /// Percentage of instances with time <= the baseline's.
    pub winrate_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadToHead {
    pub heuristic: HeuristicKind,
    pub baseline: HeuristicKind,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub both_unknown: usize,
    /// `wins / (wins + losses)`, empty when there are no decided pairs.
    pub dom_rate: Option<f64>,
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn rows_for(rows: &[BenchRow], h: HeuristicKind) -> Vec<&BenchRow> {
    rows.iter().filter(|r| r.heuristic == h).collect()
}

fn find<'a>(rows: &[&'a BenchRow], instance: &str) -> Option<&'a BenchRow> {
    rows.iter().copied().find(|r| r.instance == instance)
}

pub fn summarize(rows: &[BenchRow], heuristics: &[HeuristicKind], baseline: HeuristicKind) -> Vec<SummaryRow> {
    let base = rows_for(rows, baseline);
    heuristics
        .iter()
        .map(|&h| {
            let mine = rows_for(rows, h);
            let count = |v: Verdict| mine.iter().filter(|r| r.verdict == v).count();
            let branches: Vec<f64> = mine.iter().map(|r| r.branches as f64).collect();
            let times: Vec<f64> = mine.iter().map(|r| r.time_s).collect();
            let paired: Vec<(&BenchRow, &BenchRow)> = mine
                .iter()
                .filter_map(|r| find(&base, &r.instance).map(|b| (*r, b)))
                .collect();
            let pct = |k: usize| {
                if paired.is_empty() {
                    f64::NAN
                } else {
                    100.0 * k as f64 / paired.len() as f64
                }
            };
            let unknown = count(Verdict::Unknown);
            SummaryRow {
                heuristic: h,
                instances: mine.len(),
                safe: count(Verdict::Safe),
                unsafe_: count(Verdict::Unsafe),
                unknown,
                pct_unknown: if mine.is_empty() {
                    f64::NAN
                } else {
                    100.0 * unknown as f64 / mine.len() as f64
                },
                mean_branches: mean(&branches),
                median_branches: median(&branches),
                mean_time_s: mean(&times),
                median_time_s: median(&times),
                winrate_branches: pct(paired.iter().filter(|(r, b)| r.branches <= b.branches).count()),
                winrate_time: pct(paired.iter().filter(|(r, b)| r.time_s <= b.time_s).count()),
            }
        })
        .collect()
}

pub fn head_to_head(rows: &[BenchRow], heuristics: &[HeuristicKind], baseline: HeuristicKind) -> Vec<HeadToHead> {
    let base = rows_for(rows, baseline);
    heuristics
        .iter()
        .filter(|&&h| h != baseline)
        .map(|&h| {
            let mut out = HeadToHead {
                heuristic: h,
                baseline,
                wins: 0,
                ties: 0,
                losses: 0,
                both_unknown: 0,
                dom_rate: None,
            };
            for r in rows_for(rows, h) {
                let Some(b) = find(&base, &r.instance) else { continue };
                let mine_unknown = r.verdict == Verdict::Unknown;
                let base_unknown = b.verdict == Verdict::Unknown;
                match (mine_unknown, base_unknown) {
                    (true, true) => out.both_unknown += 1,
                    (false, true) => out.wins += 1,
                    (true, false) => out.losses += 1,
                    (false, false) => match r.branches.cmp(&b.branches) {
                        std::cmp::Ordering::Less => out.wins += 1,
                        std::cmp::Ordering::Equal => out.ties += 1,
                        std::cmp::Ordering::Greater => out.losses += 1,
                    },
                }
            }
            let decided = out.wins + out.losses;
            out.dom_rate = (decided > 0).then(|| out.wins as f64 / decided as f64);
            out
        })
        .collect()
}

/// `(name, model, spec)` for every `<name>_model.json` with a matching spec,
/// sorted by name.
pub fn discover_suite(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| e.to_string())?.path();
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else { continue };
        if let Some(name) = file.strip_suffix("_model.json") {
            let spec = dir.join(format!("{name}_spec.json"));
            if spec.is_file() {
                found.push((name.to_string(), path.clone(), spec));
            }
        }
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found)
}

pub fn parse_heuristics(list: &str) -> Result<Vec<HeuristicKind>, String> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let h: HeuristicKind = name.parse()?;
        if !out.contains(&h) {
            out.push(h);
        }
    }
    if out.is_empty() {
        return Err("no heuristics given".into());
    }
    Ok(out)
}

/// Runs every heuristic on every instance; rows come back instance-major in
/// input order regardless of `jobs`.
pub fn run_bench(
    instances: &[(String, VerificationTask)],
    heuristics: &[HeuristicKind],
    cfg: &ResolvedConfig,
    jobs: usize,
) -> Vec<BenchRow> {
    let work: Vec<(&str, &VerificationTask, HeuristicKind)> = instances
        .iter()
        .flat_map(|(name, task)| heuristics.iter().map(move |&h| (name.as_str(), task, h)))
        .collect();
    let bab = cfg.bab();
    let run_one = |&(name, task, h): &(&str, &VerificationTask, HeuristicKind)| {
        let task = cfg.apply_budget(task.clone());
        let started = Instant::now();
        let stats = verify(&task, h, &bab);
        BenchRow {
            instance: name.to_string(),
            heuristic: h,
            verdict: stats.verdict,
            branches: stats.branches_visited,
            splits: stats.splits_made,
            time_s: started.elapsed().as_secs_f64(),
        }
    };
    if jobs <= 1 {
        work.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| work.par_iter().map(run_one).collect())
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    for r in rows {
        w.serialize(r).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    w.flush().map_err(|e| format!("{}: {e}", path.display()))
}

pub fn write_reports(
    dir: &Path,
    rows: &[BenchRow],
    heuristics: &[HeuristicKind],
    baseline: HeuristicKind,
) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    write_csv(&dir.join("results.csv"), rows)?;
    write_csv(&dir.join("summary.csv"), &summarize(rows, heuristics, baseline))?;
    write_csv(&dir.join("head_to_head.csv"), &head_to_head(rows, heuristics, baseline))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), String> {
    let heuristics = parse_heuristics(&args.heuristics)?;
    let baseline: HeuristicKind = args.baseline.parse()?;
    if !heuristics.contains(&baseline) {
        return Err(format!("baseline '{baseline}' is not among --heuristics"));
    }
    let cfg = resolve_config(&args.search, None, false, None)?;
    let pairs = discover_suite(&args.suite)?;
    if pairs.is_empty() {
        return Err(format!("suite {} contains no instances", args.suite.display()));
    }
    let instances = pairs
        .into_iter()
        .map(|(name, model, spec)| load_task(&model, &spec).map(|t| (name, t)).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = run_bench(&instances, &heuristics, &cfg, args.jobs);
    write_reports(&args.output, &rows, &heuristics, baseline)?;
    println!(
        "{} runs over {} instances; reports in {}",
        rows.len(),
        instances.len(),
        args.output.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(instance: &str, h: HeuristicKind, verdict: Verdict, branches: u64) -> BenchRow {
        BenchRow {
            instance: instance.into(),
            heuristic: h,
            verdict,
            branches,
            splits: branches,
            time_s: 0.0,
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn tie_is_a_win() {
        use HeuristicKind::{Babsr, Drg};
        let rows = vec![
            row("a", Drg, Verdict::Safe, 5),
            row("a", Babsr, Verdict::Safe, 5),
        ];
        let s = summarize(&rows, &[Drg, Babsr], Babsr);
        assert_eq!(s[0].winrate_branches, 100.0);
        let h = head_to_head(&rows, &[Drg, Babsr], Babsr);
        assert_eq!((h[0].wins, h[0].ties, h[0].losses), (0, 1, 0));
        assert_eq!(h[0].dom_rate, None);
    }

    #[test]
    fn head_to_head_skips_double_unknown() {
        use HeuristicKind::{Babsr, Drg};
        let rows = vec![
            row("a", Drg, Verdict::Unknown, 9),
            row("a", Babsr, Verdict::Unknown, 9),
            row("b", Drg, Verdict::Safe, 9),
            row("b", Babsr, Verdict::Unknown, 9),
            row("c", Drg, Verdict::Safe, 4),
            row("c", Babsr, Verdict::Safe, 2),
        ];
        let h = &head_to_head(&rows, &[Drg, Babsr], Babsr)[0];
        assert_eq!((h.wins, h.ties, h.losses, h.both_unknown), (1, 0, 1, 1));
        assert_eq!(h.dom_rate, Some(0.5));
    }
}
