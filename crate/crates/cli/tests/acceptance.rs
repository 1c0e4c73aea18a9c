//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use coordmd_core::montecarlo::{k_statistics, run_experiment, ExperimentConfig};
use coordmd_core::probability::{total_variation, ConditionalPmf, JointPmf, Pmf, SymbolSequence};
use coordmd_core::region::{
    grid_oracle, th1_constraints, th2_constraints, trace_frontier, CandidateTh1, CandidateTh2, RegionQuery,
    SearchConfig, Theorem, GRID_ORACLE_LIMIT,
};
use coordmd_core::typicality::{
    is_conditionally_typical, is_strongly_typical, lemma_ta_bounds, lemma_tb_size_bounds, lemma_tc_prob_bounds,
    TypicalityParams,
};
use coordmd_core::coding::{CaseLabel, DEFAULT_CELL_BUDGET};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN2: f64 = std::f64::consts::LN_2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_reference() -> ExperimentConfig {
    let text = std::fs::read_to_string(configs_dir().join("reference_simulate.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

// ---------- independent information oracle ----------

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Entropy of the marginal on `axes`, computed from scratch.
fn h_oracle(shape: &[usize], probs: &[f64], axes: &[usize]) -> f64 {
    let st = strides(shape);
    let mut marg: HashMap<Vec<usize>, f64> = HashMap::new();
    for (flat, &p) in probs.iter().enumerate() {
        let key: Vec<usize> = axes.iter().map(|&a| (flat / st[a]) % shape[a]).collect();
        *marg.entry(key).or_default() += p;
    }
    marg.values().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

fn random_table(rng: &mut ChaCha8Rng, shape: &[usize]) -> Vec<f64> {
    let cells: usize = shape.iter().product();
    let mut w: Vec<f64> = (0..cells)
        .map(|_| if rng.gen_bool(0.15) { 0.0 } else { -rng.gen::<f64>().max(1e-300).ln() })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..cells)] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let tol = 1e-10;
    let mut failures = 0;
    for _ in 0..10_000 {
        let shape: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=4)).collect();
        let probs = random_table(&mut rng, &shape);
        let p = JointPmf::new(shape.clone(), probs.clone()).unwrap();
        let (x, y, z) = (&[0usize][..], &[1usize][..], &[2usize][..]);
        let hx = h_oracle(&shape, &probs, x);
        let hy = h_oracle(&shape, &probs, y);
        let hxy = h_oracle(&shape, &probs, &[0, 1]);
        let hyz = h_oracle(&shape, &probs, &[1, 2]);
        let hxyz = h_oracle(&shape, &probs, &[0, 1, 2]);
        let errs = [
            p.entropy() - hxyz,
            p.entropy_of(&[0, 1]).unwrap() - hxy,
            // chain rule H(X,Y) = H(X) + H(Y|X)
            p.entropy_of(x).unwrap() + p.conditional_entropy_of(y, x).unwrap() - hxy,
            p.mutual_information(x, y).unwrap() - (hx + hy - hxy),
            p.mutual_information(x, y).unwrap() - p.mutual_information(y, x).unwrap(),
            // I(X; YZ) = I(X; Y) + I(X; Z | Y)
            p.mutual_information(x, &[1, 2]).unwrap()
                - p.mutual_information(x, y).unwrap()
                - p.conditional_mutual_information(x, z, y).unwrap(),
            p.conditional_mutual_information(x, z, y).unwrap() - (hxy + hyz - hxyz - hy),
        ];
        let e = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        worst = worst.max(e);
        let mi = p.mutual_information(x, y).unwrap();
        let cmi = p.conditional_mutual_information(x, z, y).unwrap();
        if e > tol || mi < -tol || cmi < -tol {
            failures += 1;
        }
        let q = JointPmf::new(shape.clone(), random_table(&mut rng, &shape)).unwrap();
        let r = JointPmf::new(shape.clone(), random_table(&mut rng, &shape)).unwrap();
        let (pq, qr, pr) = (
            total_variation(&p, &q).unwrap(),
            total_variation(&q, &r).unwrap(),
            total_variation(&p, &r).unwrap(),
        );
        let tv_direct: f64 = 0.5 * p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        if pr > pq + qr + tol || (pq - tv_direct).abs() > tol || !(0.0..=1.0 + tol).contains(&pq) {
            failures += 1;
        }
    }
    Outcome {
        pass: failures == 0,
        detail: format!("10000 tables, {failures} violations, worst identity error {worst:.2e}"),
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p0 = Pmf::new(random_table(&mut rng, &[2])).unwrap();
        let mut table = Vec::new();
        for _ in 0..2 {
            table.extend(random_table(&mut rng, &[2, 2, 2]));
        }
        let c1 = CandidateTh1::new(ConditionalPmf::new(vec![2], vec![2, 2, 2], table).unwrap()).unwrap();
        let a = th1_constraints(&p0, &c1).unwrap();
        let b = th2_constraints(&p0, &CandidateTh2::from_th1(&c1)).unwrap();
        for (u, v) in [(a.r1_min, b.r1_min), (a.r2_min, b.r2_min), (a.rsum_min, b.rsum_min)] {
            worst = worst.max((u - v).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("1000 candidates, worst constraint gap {worst:.2e}"),
    }
}

fn criterion_3() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let search = SearchConfig::default();
    for (deltas, target, tol) in [([0.0; 3], 2.0 * LN2, 0.01), ([0.5, 0.5, 0.0], LN2, 0.02)] {
        let q = RegionQuery::identity_target(Pmf::uniform(2).unwrap(), deltas).unwrap();
        let oracle = grid_oracle(&q, Theorem::One, 32, 1, GRID_ORACLE_LIMIT).unwrap();
        let trace = trace_frontier(&q, Theorem::One, &search).unwrap();
        let (ts, os) = (trace.min_sum_rate().unwrap(), oracle.min_sum_rate().unwrap());
        let covers = trace.covers(&oracle, tol);
        let mut weighted_gap = 0.0f64;
        for (l1, l2) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 2.0), (2.0, 1.0)] {
            let g = (trace.weighted_min(l1, l2).unwrap() - oracle.weighted_min(l1, l2).unwrap()).abs() / (l1 + l2);
            weighted_gap = weighted_gap.max(g);
        }
        let ok = (ts - target).abs() <= tol && (os - target).abs() <= tol && covers && weighted_gap <= tol;
        pass &= ok;
        notes.push(format!(
            "deltas {deltas:?}: trace sum {ts:.5}, oracle sum {os:.5}, target {target:.5}, covers {covers}, \
             weighted gap {weighted_gap:.4}"
        ));
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

// ---------- typicality by enumeration ----------

/// Independent membership rule on a 2x2 type.
fn typical_oracle(counts: &[u32], n: usize, probs: &[f64], eps: f64) -> bool {
    let thr = eps / probs.len() as f64;
    counts.iter().zip(probs).all(|(&c, &p)| {
        if p == 0.0 {
            c == 0
        } else {
            (c as f64 / n as f64 - p).abs() < thr
        }
    })
}

fn seq_from_bits(bits: u32, n: usize) -> SymbolSequence {
    SymbolSequence::new((0..n).map(|i| ((bits >> i) & 1) as usize).collect(), 2).unwrap()
}

/// Pair-type multiplicities from enumerating all `4^n` sequence pairs.
fn pair_types(n: usize) -> HashMap<[u32; 4], u64> {
    let mask = (1u32 << n) - 1;
    let mut out = HashMap::new();
    for x in 0..=mask {
        for y in 0..=mask {
            let c11 = (x & y).count_ones();
            let c10 = (x & !y & mask).count_ones();
            let c01 = (!x & y & mask).count_ones();
            let c00 = n as u32 - c11 - c10 - c01;
            *out.entry([c00, c01, c10, c11]).or_insert(0) += 1;
        }
    }
    out
}

fn pair_from_counts(c: &[u32; 4]) -> (SymbolSequence, SymbolSequence) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (cell, &k) in c.iter().enumerate() {
        for _ in 0..k {
            xs.push(cell / 2);
            ys.push(cell % 2);
        }
    }
    (SymbolSequence::new(xs, 2).unwrap(), SymbolSequence::new(ys, 2).unwrap())
}

fn criterion_4() -> Outcome {
    let tables: [[f64; 4]; 4] = [
        [0.25, 0.25, 0.25, 0.25],
        [0.4, 0.1, 0.1, 0.4],
        [0.5, 0.2, 0.0, 0.3],
        [0.7, 0.1, 0.1, 0.1],
    ];
    let epsilons = [0.05, 0.2, 0.4, 1.0];
    let rel = 1e-12;
    let (mut checked_ta, mut checked_tb, mut violations, mut disagreements) = (0u64, 0u64, 0u64, 0u64);
    for n in 1..=12usize {
        let types = pair_types(n);
        for probs in &tables {
            let p = JointPmf::new(vec![2, 2], probs.to_vec()).unwrap();
            for &eps in &epsilons {
                let params = TypicalityParams::new(eps, n).unwrap();
                let ta = lemma_ta_bounds(&p, params).unwrap();
                let mut set_prob = 0.0;
                for (c, &mult) in &types {
                    let typ = typical_oracle(c, n, probs, eps);
                    let (xs, ys) = pair_from_counts(c);
                    if typ != is_strongly_typical(&[&xs, &ys], &p, eps).unwrap() {
                        disagreements += 1;
                    }
                    if !typ {
                        continue;
                    }
                    let sp: f64 = c.iter().zip(probs).map(|(&k, &q)| q.powi(k as i32)).product();
                    set_prob += mult as f64 * sp;
                    if !ta.sequence_probability.trivial {
                        checked_ta += 1;
                        if !ta.sequence_probability.contains(sp, rel) {
                            violations += 1;
                        }
                    }
                }
                if ta.typical_set_probability.lower > 0.0 {
                    checked_ta += 1;
                    if set_prob < ta.typical_set_probability.lower * (1.0 - rel) {
                        violations += 1;
                    }
                }

                // conditional counts for one representative x per weight
                let mask = (1u32 << n) - 1;
                for w in 0..=n {
                    let xb = if w == 0 { 0 } else { mask >> (n - w) };
                    let xs = seq_from_bits(xb, n);
                    let tb = lemma_tb_size_bounds(&p, &[&xs], params).unwrap();
                    let mut count = 0u64;
                    for yb in 0..=mask {
                        let ys = seq_from_bits(yb, n);
                        if !is_conditionally_typical(&[&ys], &[&xs], &p, eps).unwrap() {
                            continue;
                        }
                        count += 1;
                        let cp: f64 = xs
                            .symbols()
                            .iter()
                            .zip(ys.symbols())
                            .map(|(&a, &b)| probs[2 * a + b] / (probs[2 * a] + probs[2 * a + 1]))
                            .product();
                        if !tb.conditional_probability.trivial {
                            checked_tb += 1;
                            if !tb.conditional_probability.contains(cp, rel) {
                                violations += 1;
                            }
                        }
                    }
                    let cells = 2f64.powi(n as i32);
                    if tb.set_size.upper < cells {
                        checked_tb += 1;
                        if count as f64 > tb.set_size.upper * (1.0 + rel) {
                            violations += 1;
                        }
                    }
                    if tb.lower_applies && tb.set_size.lower > 0.0 {
                        checked_tb += 1;
                        if (count as f64) < tb.set_size.lower * (1.0 - rel) {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }

    // independent-draw window by Monte Carlo
    let mut mc_notes = Vec::new();
    let mut mc_ok = true;
    for (eps, probs) in [(0.4, [0.4, 0.1, 0.1, 0.4]), (0.05, [0.4, 0.1, 0.1, 0.4])] {
        let n = 10;
        let p = JointPmf::new(vec![2, 2], probs.to_vec()).unwrap();
        let tc = lemma_tc_prob_bounds(&p, 1, TypicalityParams::new(eps, n).unwrap()).unwrap();
        let (px1, py1) = (probs[2] + probs[3], probs[1] + probs[3]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 100_000;
        let mut hits = 0u64;
        for _ in 0..draws {
            let xs: Vec<usize> = (0..n).map(|_| rng.gen_bool(px1) as usize).collect();
            let ys: Vec<usize> = (0..n).map(|_| rng.gen_bool(py1) as usize).collect();
            let xs = SymbolSequence::new(xs, 2).unwrap();
            let ys = SymbolSequence::new(ys, 2).unwrap();
            if is_strongly_typical(&[&xs, &ys], &p, eps).unwrap() {
                hits += 1;
            }
        }
        let f = hits as f64 / draws as f64;
        let sigma = (f * (1.0 - f) / draws as f64).sqrt();
        let w = tc.independent_pair;
        let lower_ok = w.lower <= 0.0 || f >= w.lower - 3.0 * sigma;
        let upper_ok = w.upper >= 1.0 || f <= w.upper + 3.0 * sigma;
        mc_ok &= lower_ok && upper_ok;
        mc_notes.push(format!(
            "eps {eps}: freq {f:.5} in [{:.3e}, {:.3e}]{}",
            w.lower,
            w.upper,
            if w.trivial { " (vacuous)" } else { "" }
        ));
    }
    Outcome {
        pass: violations == 0 && disagreements == 0 && mc_ok && checked_ta > 0 && checked_tb > 0,
        detail: format!(
            "n<=12: {checked_ta} sequence/set-probability checks, {checked_tb} count/conditional checks, \
             {violations} violations, {disagreements} membership disagreements; MC {}",
            mc_notes.join(", ")
        ),
    }
}

fn criterion_5_and_6() -> (Outcome, Outcome) {
    let cfg = load_reference();
    let results = run_experiment(&cfg).unwrap();
    let mean = |i: usize, s: usize| results[i].scenarios[s].mean_tv;
    let tv12: Vec<f64> = (0..results.len()).map(|i| mean(i, 2)).collect();
    let decreasing = tv12.windows(2).all(|w| w[1] < w[0]);
    let last = results.len() - 1;
    let ok12 = tv12[last] <= 0.25;
    let ok1 = mean(last, 0) <= 0.55 && mean(last, 1) <= 0.55;
    let cases: Vec<String> = results
        .iter()
        .map(|r| {
            let c = r.scenarios[2].case_counts;
            format!("n={} a/b/c {}/{}/{}", r.n, c.a, c.b, c.c)
        })
        .collect();
    let c5 = Outcome {
        pass: decreasing && ok12 && ok1,
        detail: format!(
            "scenario-12 mean TV {tv12:.5?} (decreasing {decreasing}, <=0.25 at n=16 {ok12}); \
             scenario-1/2 at n=16 {:.5}/{:.5} (<=0.55 {ok1}); {}",
            mean(last, 0),
            mean(last, 1),
            cases.join(", ")
        ),
    };

    let (mut case_c, mut bad, mut worst) = (0usize, 0usize, 0.0f64);
    for r in &results {
        let bound = cfg.case_c_bound(r.n);
        for t in &r.trials {
            if t.encoding.case_label == CaseLabel::C {
                case_c += 1;
                worst = worst.max(t.tv[2]);
                if t.tv[2] > bound {
                    bad += 1;
                }
            }
        }
    }
    let c6 = Outcome {
        pass: bad == 0 && case_c > 0,
        detail: format!("{case_c} case-c trials, {bad} violations, largest scenario-12 TV {worst:.4}"),
    };
    (c5, c6)
}

fn criterion_7() -> Outcome {
    let degenerate = ExperimentConfig {
        query: RegionQuery::new(
            Pmf::uniform(1).unwrap(),
            ConditionalPmf::from_rows(vec![vec![1.0]]).unwrap(),
            0.0,
            0.0,
            0.0,
        )
        .unwrap(),
        theorem: Theorem::One,
        candidate: ConditionalPmf::new(vec![1], vec![1, 1, 1], vec![1.0]).unwrap(),
        rates: vec![0.3, 0.3],
        rate_slacks: vec![0.0, 0.0],
        epsilon: 3.0,
        n_values: vec![10],
        trials: 1,
        master_seed: 11,
        fresh_codebook_per_trial: true,
        budget: DEFAULT_CELL_BUDGET,
    };
    let mut binary = load_reference();
    binary.epsilon = 100.0;
    binary.master_seed = 12;

    let mut pass = true;
    let mut notes = Vec::new();
    // only the first instance has a nontrivial closed-form mean bound; the
    // second is reported for its plug-in diagnostics
    for (idx, (name, cfg)) in [("size-1 alphabets", degenerate), ("binary reference, eps=100", binary)]
        .into_iter()
        .enumerate()
    {
        let k = k_statistics(&cfg, 10, 500).unwrap();
        let sigma_mean = (k.var_k / k.draws as f64).sqrt();
        let f = k.frac_k_zero;
        let sigma_f = (f * (1.0 - f) / k.draws as f64).sqrt();
        let b = k.bounds;
        let mean_ok = !b.mean_lower_trivial && k.mean_k >= b.mean_lower - 3.0 * sigma_mean;
        let zero_ok = b.zero_prob_upper_trivial || f <= b.zero_prob_upper + 3.0 * sigma_f;
        if idx == 0 {
            pass &= mean_ok && zero_ok;
        }
        notes.push(format!(
            "{name}: mean K {:.4} vs bound {:.3e} ({}), Pr[K=0] {:.4} vs Chebyshev {:.3e}{} (plug-in {:.4})",
            k.mean_k,
            b.mean_lower,
            if b.mean_lower_trivial { "vacuous" } else if mean_ok { "ok" } else { "violated" },
            f,
            b.zero_prob_upper,
            if b.zero_prob_upper_trivial { " vacuous" } else { "" },
            k.plugin_zero_prob_bound
        ));
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

// ---------- determinism through the binary ----------

fn coordmd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_coordmd")).args(args).output().unwrap()
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for name in names {
        let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs"));
        }
    }
    Ok(())
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir();
    let runs: [(&str, Vec<&str>, &str, Vec<&str>); 5] = [
        ("simulate", vec!["simulate"], "reference_simulate.json", vec!["results.csv", "trials.csv"]),
        ("trace", vec!["region", "trace"], "region_half.json", vec!["frontier.csv", "witnesses.json"]),
        (
            "check",
            vec!["region", "check", "--r1", "0.3", "--r2", "0.4"],
            "region_half.json",
            vec!["check.json"],
        ),
        ("kstats", vec!["kstats", "--n", "8", "--draws", "100"], "reference_simulate.json", vec!["kstats.json", "k_samples.csv"]),
        ("bounds", vec!["typicality", "bounds"], "typicality_bounds.json", vec!["bounds.json"]),
    ];
    let mut problems = Vec::new();
    for (label, sub, config, files) in &runs {
        let config = cfg.join(config);
        let mut dirs = Vec::new();
        for workers in ["1", "4"] {
            let out = tmp.path().join(format!("{label}-{workers}"));
            let mut args: Vec<&str> = sub.clone();
            args.extend(["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers]);
            let o = coordmd(&args);
            if !o.status.success() {
                problems.push(format!("{label} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
            }
            dirs.push(out);
        }
        if let Err(e) = same_files(&dirs[0], &dirs[1], files) {
            problems.push(format!("{label} across workers: {e}"));
        }
        let manifest = dirs[0].join("manifest.json");
        let o = coordmd(&["replay", manifest.to_str().unwrap(), "--workers", "3"]);
        if !o.status.success() {
            problems.push(format!("{label} replay exited {:?}", o.status.code()));
        }
        if let Err(e) = same_files(&dirs[0], &dirs[0].join("replay"), files) {
            problems.push(format!("{label} replay: {e}"));
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("{} commands identical across --workers 1/4 and on replay with --workers 3", runs.len())
        } else {
            problems.join("; ")
        },
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, limit: Duration, f: &dyn Fn() -> Vec<Outcome>| {
        let t0 = Instant::now();
        let outcomes = f();
        let elapsed = t0.elapsed();
        for (k, o) in outcomes.into_iter().enumerate() {
            let id = if k == 0 { id.to_string() } else { (id.parse::<u32>().unwrap() + k as u32).to_string() };
            let in_time = elapsed <= limit;
            let pass = o.pass && in_time;
            if !pass {
                failed += 1;
            }
            println!(
                "criterion {id} [{name}]: {} ({:.2?}{}) {}",
                if pass { "PASS" } else { "FAIL" },
                elapsed,
                if in_time { "" } else { ", over time limit" },
                o.detail
            );
        }
    };
    report("1", "information identities", Duration::from_secs(10), &|| vec![criterion_1()]);
    report("2", "lifted candidates", Duration::from_secs(10), &|| vec![criterion_2()]);
    report("3", "region oracle agreement", Duration::from_secs(300), &|| vec![criterion_3()]);
    report("4", "typicality windows", Duration::from_secs(120), &|| vec![criterion_4()]);
    report("5", "coordination convergence / case-c bound", Duration::from_secs(180), &|| {
        let (a, b) = criterion_5_and_6();
        vec![a, b]
    });
    report("7", "second-moment diagnostics", Duration::from_secs(120), &|| vec![criterion_7()]);
    report("8", "determinism", Duration::from_secs(600), &|| vec![criterion_8()]);
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
