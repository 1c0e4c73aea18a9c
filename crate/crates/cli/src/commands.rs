use std::path::Path;

use anyhow::Context;
use coordmd_core::montecarlo::{k_statistics, run_experiment, ExperimentConfig};
use coordmd_core::probability::{JointPmf, SymbolSequence};
use coordmd_core::region::{point_achievable, trace_frontier, RegionQuery, SearchConfig, Theorem, Witness};
use coordmd_core::typicality::{
    lemma_ta_bounds, lemma_tb_size_bounds, lemma_tc_prob_bounds, TaReport, TbReport, TcReport, TypicalityParams,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::output::{self, Table};
use crate::{Common, Format, UserError};

pub const BUDGET_ENV: &str = "COORDMD_BUDGET";

fn default_theorem() -> Theorem {
    Theorem::One
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub query: RegionQuery,
    #[serde(default = "default_theorem")]
    pub theorem: Theorem,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub p: JointPmf,
    pub n: usize,
    pub epsilon: f64,
    /// Number of leading axes treated as the conditioning block (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_axes: Option<usize>,
    /// Conditioning sequences, one per leading axis; enables the set-size bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KstatsConfig {
    pub experiment: ExperimentConfig,
    pub n: usize,
    pub draws: usize,
}

/// A fully resolved invocation: everything needed to reproduce the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Resolved {
    RegionTrace(RegionConfig),
    RegionCheck(RegionConfig),
    Simulate(ExperimentConfig),
    TypicalityBounds(BoundsConfig),
    Kstats(KstatsConfig),
}

impl Resolved {
    pub fn master_seed(&self) -> Option<u64> {
        match self {
            Resolved::RegionTrace(c) | Resolved::RegionCheck(c) => Some(c.search.seed),
            Resolved::Simulate(c) => Some(c.master_seed),
            Resolved::Kstats(c) => Some(c.experiment.master_seed),
            Resolved::TypicalityBounds(_) => None,
        }
    }
}

#[derive(Debug, Default)]
pub struct Extra {
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub n: Option<usize>,
    pub draws: Option<usize>,
}

/// Reads a JSON config, reporting parse failures as `path:line:column: msg`.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UserError(format!("{}: cannot read: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let msg = match msg.rfind(" at line ") {
            Some(i) => msg[..i].to_string(),
            None => msg,
        };
        UserError(format!("{}:{}:{}: {msg}", path.display(), e.line(), e.column())).into()
    })
}

fn budget_override() -> anyhow::Result<Option<u64>> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|e| UserError(format!("{BUDGET_ENV}={v:?}: {e}")).into()),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(UserError(format!("{BUDGET_ENV}: {e}")).into()),
    }
}

fn experiment(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_json(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(b) = budget_override()? {
        cfg.budget = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve(name: &str, common: &Common, extra: &Extra) -> anyhow::Result<Resolved> {
    Ok(match name {
        "region-trace" | "region-check" => {
            let mut cfg: RegionConfig = read_json(&common.config)?;
            if let Some(seed) = common.seed {
                cfg.search.seed = seed;
            }
            cfg.r1 = extra.r1.or(cfg.r1);
            cfg.r2 = extra.r2.or(cfg.r2);
            cfg.query.validate()?;
            cfg.search.validate()?;
            if name == "region-trace" {
                Resolved::RegionTrace(cfg)
            } else {
                if cfg.r1.is_none() || cfg.r2.is_none() {
                    return Err(UserError("region check needs --r1 and --r2 (or r1/r2 in the config)".into()).into());
                }
                Resolved::RegionCheck(cfg)
            }
        }
        "simulate" => Resolved::Simulate(experiment(common)?),
        "kstats" => {
            let cfg = experiment(common)?;
            let n = match extra.n.or_else(|| cfg.n_values.first().copied()) {
                Some(n) => n,
                None => return Err(UserError("kstats needs --n or a non-empty n_values".into()).into()),
            };
            Resolved::Kstats(KstatsConfig {
                experiment: cfg,
                n,
                draws: extra.draws.unwrap_or(500),
            })
        }
        "typicality-bounds" => {
            let cfg: BoundsConfig = read_json(&common.config)?;
            TypicalityParams::new(cfg.epsilon, cfg.n)?;
            Resolved::TypicalityBounds(cfg)
        }
        other => unreachable!("unknown command {other}"),
    })
}

#[derive(Serialize)]
struct WitnessEntry<'a> {
    id: usize,
    r1: f64,
    r2: f64,
    witness: &'a Witness,
}

#[derive(Serialize)]
struct CheckReport<'a> {
    r1: f64,
    r2: f64,
    theorem: Theorem,
    achievable: bool,
    witness: Option<&'a Witness>,
}

#[derive(Serialize)]
struct BoundsReport {
    ta: TaReport,
    tc: TcReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    tb: Option<TbReport>,
}

pub fn bounds_report(cfg: &BoundsConfig) -> anyhow::Result<serde_json::Value> {
    let params = TypicalityParams::new(cfg.epsilon, cfg.n)?;
    let x_axes = cfg.x_axes.unwrap_or(1);
    let ta = lemma_ta_bounds(&cfg.p, params)?;
    let tc = lemma_tc_prob_bounds(&cfg.p, x_axes, params)?;
    let tb = match &cfg.x {
        None => None,
        Some(xs) => {
            let seqs = xs
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let alphabet = *cfg.p.shape().get(k).ok_or_else(|| {
                        UserError(format!("x has {} sequences but p has {} axes", xs.len(), cfg.p.ndim()))
                    })?;
                    Ok(SymbolSequence::new(s.clone(), alphabet)?)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let refs: Vec<&SymbolSequence> = seqs.iter().collect();
            Some(lemma_tb_size_bounds(&cfg.p, &refs, params)?)
        }
    };
    Ok(serde_json::to_value(BoundsReport { ta, tc, tb })?)
}

/// Runs a resolved command, writing its outputs into `out`. Returns the
/// output file names relative to `out`, in a fixed order.
pub fn execute(resolved: &Resolved, format: Format, out: &Path) -> anyhow::Result<Vec<String>> {
    std::fs::create_dir_all(out).map_err(|e| UserError(format!("{}: cannot create: {e}", out.display())))?;
    let mut written = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> anyhow::Result<()> {
        let path = out.join(&name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        written.push(name);
        Ok(())
    };
    match resolved {
        Resolved::RegionTrace(cfg) => {
            let frontier = trace_frontier(&cfg.query, cfg.theorem, &cfg.search)?;
            let mut table = Table::new(&["R1", "R2", "rsum", "witness-id"]);
            for (id, p) in frontier.points.iter().enumerate() {
                table.row(vec![p.r1.into(), p.r2.into(), (p.r1 + p.r2).into(), id.into()]);
            }
            let meta = serde_json::json!({ "complete": frontier.complete, "search": frontier.meta });
            emit(table.file_name("frontier", format), table.render(format, Some(meta))?)?;
            let witnesses: Vec<WitnessEntry> = frontier
                .points
                .iter()
                .enumerate()
                .map(|(id, p)| WitnessEntry {
                    id,
                    r1: p.r1,
                    r2: p.r2,
                    witness: &p.witness,
                })
                .collect();
            emit("witnesses.json".into(), output::json_bytes(&witnesses)?)?;
        }
        Resolved::RegionCheck(cfg) => {
            let (r1, r2) = (cfg.r1.unwrap_or_default(), cfg.r2.unwrap_or_default());
            let w = point_achievable(&cfg.query, r1, r2, cfg.theorem, &cfg.search)?;
            let report = CheckReport {
                r1,
                r2,
                theorem: cfg.theorem,
                achievable: w.is_some(),
                witness: w.as_ref(),
            };
            emit("check.json".into(), output::json_bytes(&report)?)?;
        }
        Resolved::Simulate(cfg) => {
            let results = run_experiment(cfg)?;
            let mut summary = Table::new(&["n", "scenario", "mean_tv", "std_err", "case_a", "case_b", "case_c"]);
            let mut trials = Table::new(&["n", "trial", "case", "found", "indices", "tv_1", "tv_2", "tv_12"]);
            for r in &results {
                for s in &r.scenarios {
                    summary.row(vec![
                        r.n.into(),
                        s.scenario.as_str().into(),
                        s.mean_tv.into(),
                        s.std_err.into(),
                        s.case_counts.a.into(),
                        s.case_counts.b.into(),
                        s.case_counts.c.into(),
                    ]);
                }
                for t in &r.trials {
                    let indices: Vec<String> = t.encoding.indices.iter().map(|i| i.to_string()).collect();
                    trials.row(vec![
                        r.n.into(),
                        t.trial.into(),
                        output::case_str(t.encoding.case_label).into(),
                        t.encoding.found.into(),
                        indices.join(";").into(),
                        t.tv[0].into(),
                        t.tv[1].into(),
                        t.tv[2].into(),
                    ]);
                }
            }
            emit(summary.file_name("results", format), summary.render(format, None)?)?;
            emit(trials.file_name("trials", format), trials.render(format, None)?)?;
        }
        Resolved::Kstats(cfg) => {
            let stats = k_statistics(&cfg.experiment, cfg.n, cfg.draws)?;
            let mut samples = Table::new(&["draw", "k"]);
            for (i, k) in stats.samples.iter().enumerate() {
                samples.row(vec![i.into(), (*k).into()]);
            }
            let mut summary = serde_json::to_value(&stats)?;
            if let Some(obj) = summary.as_object_mut() {
                obj.remove("samples");
            }
            emit("kstats.json".into(), output::json_bytes(&summary)?)?;
            emit(samples.file_name("k_samples", format), samples.render(format, None)?)?;
        }
        Resolved::TypicalityBounds(cfg) => {
            let report = bounds_report(cfg)?;
            let bytes = output::json_bytes(&report)?;
            print!("{}", String::from_utf8_lossy(&bytes));
            emit("bounds.json".into(), bytes)?;
        }
    }
    Ok(written)
}
