//! The release acceptance suite: formula oracles, facility-location quality,
//! trace monotonicity, numerical checks, fixture round-trips, and the
//! synthetic end-to-end gap, plus the dataset-conditional UCI-HAR
//! reproduction when the dataset is available.
//!
//! Each criterion runs independently and reports pass/fail with a detail
//! string, so a failure never hides the other results.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cli::{DatasetConfig, RunConfig};
use crate::datastore::Activity;
use crate::evalbench::{self, SelectionMode};
use crate::featurizer;
use crate::knowledge::{self, KnowledgePrior};
use crate::linalg::Mat;
use crate::models::{Classifier, ClassifierKind};
use crate::scorer;
use crate::selector::{self, Strategy};
use crate::simgraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub status: CriterionStatus,
    pub detail: String,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            CriterionStatus::Pass => "PASS",
            CriterionStatus::Fail => "FAIL",
            CriterionStatus::Skipped => "SKIP",
        };
        write!(f, "[{tag}] criterion {}: {} — {}", self.id, self.name, self.detail)
    }
}

pub fn all_passed(outcomes: &[CriterionOutcome]) -> bool {
    outcomes.iter().all(|o| o.status != CriterionStatus::Fail)
}

/// Runs every criterion. UCI-HAR checks are skipped unless `ucihar_root`
/// points at the dataset.
pub fn run_all(ucihar_root: Option<&Path>) -> Vec<CriterionOutcome> {
    let mut outcomes = Vec::new();
    outcomes.push(criterion_formula_oracles());
    outcomes.push(criterion_facility_quality());

    // Criteria 3 and 7 share the ten synthetic end-to-end experiments.
    let synthetic = prepare_synthetic_experiments();
    outcomes.push(criterion_submodularity_trace(&synthetic, ucihar_root));
    outcomes.push(criterion_numerical_checks());
    outcomes.push(criterion_knowledge_fixture());
    outcomes.push(criterion_verticality_example());
    outcomes.push(criterion_synthetic_end_to_end(&synthetic));
    outcomes.push(criterion_ucihar_reproduction(ucihar_root));
    outcomes
}

fn pass(id: usize, name: &'static str, detail: String) -> CriterionOutcome {
    CriterionOutcome { id, name, status: CriterionStatus::Pass, detail }
}

fn fail(id: usize, name: &'static str, detail: String) -> CriterionOutcome {
    CriterionOutcome { id, name, status: CriterionStatus::Fail, detail }
}

fn skip(id: usize, name: &'static str, detail: String) -> CriterionOutcome {
    CriterionOutcome { id, name, status: CriterionStatus::Skipped, detail }
}

// ---------------------------------------------------------------------------
// Criterion 1: formula oracles
// ---------------------------------------------------------------------------

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Mat {
    Mat::from_rows(
        &(0..n)
            .map(|_| (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn criterion_formula_oracles() -> CriterionOutcome {
    const CASES: usize = 200;
    const TOL: f64 = 1e-8;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97);
    let mut worst: f64 = 0.0;

    // Semantic prior score vs direct evaluation of the formula.
    for _ in 0..CASES {
        let d = 2 + rng.gen_range(0..5usize);
        let columns: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        let mut prior = KnowledgePrior {
            label_feature_weights: BTreeMap::new(),
            confusability: BTreeMap::new(),
            label_budget_multiplier: BTreeMap::new(),
        };
        for label in Activity::ALL {
            let mut weights = BTreeMap::new();
            for col in &columns {
                if rng.gen::<f64>() < 0.7 {
                    weights.insert(col.clone(), rng.gen::<f64>() * 4.0 - 2.0);
                }
            }
            prior.label_feature_weights.insert(label, weights);
            let mut conf = BTreeMap::new();
            for other in Activity::ALL {
                if other != label && rng.gen::<f64>() < 0.6 {
                    conf.insert(other, rng.gen::<f64>() * 1.5);
                }
            }
            prior.confusability.insert(label, conf);
        }
        let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let label = Activity::from_index(rng.gen_range(0..6)).unwrap();
        let got = scorer::semantic_score(&x, label, &prior, &columns);

        let align = |l: Activity| -> f64 {
            let w = &prior.label_feature_weights[&l];
            columns
                .iter()
                .enumerate()
                .map(|(j, c)| w.get(c).copied().unwrap_or(0.0) * x[j])
                .sum()
        };
        let mut competitor = f64::NEG_INFINITY;
        for other in Activity::ALL {
            if other == label {
                continue;
            }
            let c = prior.confusability[&label].get(&other).copied().unwrap_or(0.0);
            competitor = competitor.max(c * align(other));
        }
        let expect = align(label) - competitor;
        worst = worst.max((got - expect).abs());
        if (got - expect).abs() > TOL {
            return fail(1, "formula-oracles", format!("semantic score mismatch {got} vs {expect}"));
        }
    }

    // Validation margin vs naive double loop.
    for case in 0..CASES {
        let n = 2 + rng.gen_range(0..19usize);
        let d = 2 + rng.gen_range(0..5usize);
        let rows = random_rows(&mut rng, n, d);
        let labels: Vec<Activity> =
            (0..n).map(|_| Activity::from_index(rng.gen_range(0..6)).unwrap()).collect();
        let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        let val =
            featurizer::FeatureMatrix::new(rows.clone(), names, labels.clone(), vec![1; n])
                .unwrap();
        let candidate: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let label = Activity::from_index(case % 6).unwrap();
        let got = scorer::margin(&candidate, label, &val).unwrap().value;

        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..n {
            let sim = oracle_cosine(&candidate, rows.row(i));
            if labels[i] == label {
                pos.push(sim);
            } else {
                neg.push(sim);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let expect = match (pos.is_empty(), neg.is_empty()) {
            (false, false) => mean(&pos) - mean(&neg),
            (true, false) => -mean(&neg),
            (false, true) => mean(&pos),
            (true, true) => unreachable!(),
        };
        worst = worst.max((got - expect).abs());
        if (got - expect).abs() > TOL {
            return fail(1, "formula-oracles", format!("margin mismatch {got} vs {expect}"));
        }
    }

    // Facility value vs brute force.
    for _ in 0..CASES {
        let n = 2 + rng.gen_range(0..19usize);
        let d = 2 + rng.gen_range(0..5usize);
        let rows = random_rows(&mut rng, n, d);
        let size = 1 + rng.gen_range(0..n.min(5));
        let mut selected: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            selected.swap(i, j);
        }
        selected.truncate(size);
        let got = selector::facility_value(&rows, &selected);
        let mut expect = 0.0;
        for i in 0..n {
            let best = selected
                .iter()
                .map(|&s| oracle_cosine(rows.row(i), rows.row(s)))
                .fold(f64::NEG_INFINITY, f64::max);
            expect += best;
        }
        worst = worst.max((got - expect).abs());
        if (got - expect).abs() > TOL {
            return fail(1, "formula-oracles", format!("facility value mismatch {got} vs {expect}"));
        }
    }

    // Macro-F1 vs the per-class definition.
    for _ in 0..CASES {
        let n = 1 + rng.gen_range(0..20usize);
        let y_true: Vec<Activity> =
            (0..n).map(|_| Activity::from_index(rng.gen_range(0..6)).unwrap()).collect();
        let y_pred: Vec<Activity> =
            (0..n).map(|_| Activity::from_index(rng.gen_range(0..6)).unwrap()).collect();
        let got = evalbench::macro_f1(&y_true, &y_pred).unwrap();
        let mut total = 0.0;
        for c in Activity::ALL {
            let tp = y_true.iter().zip(&y_pred).filter(|(t, p)| **t == c && **p == c).count()
                as f64;
            let pc = y_pred.iter().filter(|&&p| p == c).count() as f64;
            let tc = y_true.iter().filter(|&&t| t == c).count() as f64;
            if tp > 0.0 {
                let precision = tp / pc;
                let recall = tp / tc;
                total += 2.0 * precision * recall / (precision + recall);
            }
        }
        let expect = total / 6.0;
        worst = worst.max((got - expect).abs());
        if (got - expect).abs() > TOL {
            return fail(1, "formula-oracles", format!("macro-F1 mismatch {got} vs {expect}"));
        }
    }

    // PageRank vs a dense fixed-point oracle.
    for _ in 0..CASES {
        let n = 2 + rng.gen_range(0..19usize);
        let rows = random_rows(&mut rng, n, 4);
        let g = simgraph::build_mutual_knn(&rows, 1 + rng.gen_range(0..4usize));
        let pr = simgraph::pagerank(&g, 0.85, 1e-12, 1000);
        let oracle = dense_pagerank_oracle(&g, 0.85);
        for (a, b) in pr.scores.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
            if (a - b).abs() > TOL {
                return fail(1, "formula-oracles", format!("pagerank mismatch {a} vs {b}"));
            }
        }
    }

    // Hubness vs brute-force recount with an independent top-k pass.
    for _ in 0..CASES {
        let n = 2 + rng.gen_range(0..19usize);
        let k = 1 + rng.gen_range(0..4usize);
        let rows = random_rows(&mut rng, n, 4);
        let g = simgraph::build_mutual_knn(&rows, k);
        let got = simgraph::hubness(&g);
        let k_eff = k.min(n - 1);
        let mut expect = vec![0usize; n];
        for j in 0..n {
            let mut sims: Vec<(usize, f64)> = (0..n)
                .filter(|&i| i != j)
                .map(|i| (i, oracle_cosine(rows.row(j), rows.row(i))))
                .collect();
            sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            for &(i, _) in sims.iter().take(k_eff) {
                expect[i] += 1;
            }
        }
        if got != expect {
            return fail(1, "formula-oracles", format!("hubness mismatch {got:?} vs {expect:?}"));
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 10.0 {
        return fail(1, "formula-oracles", format!("runtime {elapsed:.2}s exceeds 10s"));
    }
    pass(
        1,
        "formula-oracles",
        format!("6 oracles x {CASES} cases, max |err| {worst:.2e}, {elapsed:.2}s"),
    )
}

fn dense_pagerank_oracle(g: &simgraph::SimilarityGraph, damping: f64) -> Vec<f64> {
    let n = g.node_count();
    if n == 0 {
        return Vec::new();
    }
    let mut t = vec![vec![0.0; n]; n];
    for u in 0..n {
        let strength: f64 = g.mutual_neighbors(u).iter().map(|&(_, w)| w.max(0.0)).sum();
        if strength <= 0.0 {
            for v in 0..n {
                t[u][v] = 1.0 / n as f64;
            }
        } else {
            for &(v, w) in g.mutual_neighbors(u) {
                t[u][v] = w.max(0.0) / strength;
            }
        }
    }
    let mut r = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut next = vec![(1.0 - damping) / n as f64; n];
        for u in 0..n {
            for v in 0..n {
                next[v] += damping * r[u] * t[u][v];
            }
        }
        let delta: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if delta < 1e-14 {
            break;
        }
    }
    r
}

// ---------------------------------------------------------------------------
// Criterion 2: facility-location quality
// ---------------------------------------------------------------------------

fn criterion_facility_quality() -> CriterionOutcome {
    const INSTANCES: usize = 100;
    let bound = 1.0 - 1.0 / std::f64::consts::E;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xFAC111);
    let mut exact = 0usize;

    for case in 0..INSTANCES {
        let n = 4 + rng.gen_range(0..9usize); // <= 12
        let budget = 1 + rng.gen_range(0..3usize); // <= 3
        let d = 3 + rng.gen_range(0..4usize);
        let rows = random_rows(&mut rng, n, d);
        let (picks, _) = selector::select_facility(&rows, &vec![0.0; n], budget, 0.0);
        let greedy_f = selector::facility_value(&rows, &picks);

        let mut best_f = f64::NEG_INFINITY;
        let mut subset = Vec::new();
        enumerate_subsets(n, budget.min(n), &mut subset, &mut |s: &[usize]| {
            let f = selector::facility_value(&rows, s);
            if f > best_f {
                best_f = f;
            }
        });

        if greedy_f < bound * best_f - 1e-9 {
            return fail(
                2,
                "facility-quality",
                format!("case {case}: greedy {greedy_f} < (1-1/e) * {best_f}"),
            );
        }
        if (greedy_f - best_f).abs() < 1e-9 {
            exact += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 30.0 {
        return fail(2, "facility-quality", format!("runtime {elapsed:.2}s exceeds 30s"));
    }
    pass(
        2,
        "facility-quality",
        format!(
            "bound held {INSTANCES}/{INSTANCES}; exact optimum in {exact}/{INSTANCES} ({:.0}%), {elapsed:.2}s",
            100.0 * exact as f64 / INSTANCES as f64
        ),
    )
}

fn enumerate_subsets(
    n: usize,
    size: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if current.len() == size {
        visit(current);
        return;
    }
    let start = current.last().map_or(0, |&l| l + 1);
    for j in start..n {
        current.push(j);
        enumerate_subsets(n, size, current, visit);
        current.pop();
    }
}

// ---------------------------------------------------------------------------
// Shared synthetic experiments (criteria 3 and 7)
// ---------------------------------------------------------------------------

const SYNTHETIC_SEEDS: [u64; 10] = [42, 43, 44, 45, 46, 47, 48, 49, 50, 51];
const SYNTHETIC_WINDOWS_PER_CLASS: usize = 200;

struct SyntheticRun {
    seed: u64,
    experiment: Result<evalbench::Experiment, crate::cli::StageError>,
}

fn prepare_synthetic_experiments() -> (Vec<SyntheticRun>, f64) {
    let started = Instant::now();
    let runs = SYNTHETIC_SEEDS
        .iter()
        .map(|&seed| SyntheticRun {
            seed,
            experiment: evalbench::prepare(&RunConfig::default_synthetic(
                seed,
                SYNTHETIC_WINDOWS_PER_CLASS,
            )),
        })
        .collect();
    (runs, started.elapsed().as_secs_f64())
}

// ---------------------------------------------------------------------------
// Criterion 3: submodularity trace
// ---------------------------------------------------------------------------

/// Checks both monotonicity forms on one experiment's selections.
///
/// With score blending active the greedy maximizes `F(S) + a * sum S(j)`,
/// whose marginal gains (the recorded blended objectives) submodularity
/// makes nonincreasing; the raw facility gains alone carry that guarantee
/// only at `blend_alpha = 0`, so those are checked on a zero-blend
/// selection over the same scored candidates.
fn check_traces(exp: &evalbench::Experiment) -> Result<usize, String> {
    let blended = evalbench::select_for_strategy(
        exp,
        Strategy::LlmGuided,
        &exp.score_table,
        SelectionMode::FacilityGreedy,
    )
    .map_err(|e| e.to_string())?;
    if !blended.objectives_nonincreasing() {
        return Err("blended step objectives increased within a class".into());
    }

    let pure = selector::select_exemplars(
        Strategy::LlmGuided,
        &exp.train,
        Some(&exp.score_table),
        &exp.budgets,
        0.0,
        exp.config.seed,
    )
    .map_err(|e| e.to_string())?;
    if !pure.gains_nonincreasing() {
        return Err("facility gains increased within a class at blend 0".into());
    }
    Ok(blended.classes.len() + pure.classes.len())
}

fn criterion_submodularity_trace(
    synthetic: &(Vec<SyntheticRun>, f64),
    ucihar_root: Option<&Path>,
) -> CriterionOutcome {
    let mut traces_checked = 0usize;
    for run in &synthetic.0 {
        let exp = match &run.experiment {
            Ok(e) => e,
            Err(e) => {
                return fail(3, "submodularity-trace", format!("seed {}: {e}", run.seed));
            }
        };
        match check_traces(exp) {
            Ok(n) => traces_checked += n,
            Err(e) => return fail(3, "submodularity-trace", format!("seed {}: {e}", run.seed)),
        }
    }

    let mut ucihar_note = String::new();
    if let Some(root) = ucihar_root {
        let config = ucihar_config(root);
        match evalbench::prepare(&config) {
            Ok(exp) => match check_traces(&exp) {
                Ok(n) => {
                    traces_checked += n;
                    ucihar_note = " (incl. UCI-HAR)".to_string();
                }
                Err(e) => return fail(3, "submodularity-trace", format!("UCI-HAR: {e}")),
            },
            Err(e) => return fail(3, "submodularity-trace", e.to_string()),
        }
    }

    pass(
        3,
        "submodularity-trace",
        format!("zero violations across {traces_checked} class traces{ucihar_note}"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 4: numerical checks
// ---------------------------------------------------------------------------

fn criterion_numerical_checks() -> CriterionOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E5D);
    let mut gauss = {
        let mut r = ChaCha8Rng::seed_from_u64(0x907A);
        move || {
            let u1: f64 = r.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = r.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        }
    };

    // Logistic analytic gradient vs central finite differences.
    let n = 14;
    let d = 4;
    let l_count = 3;
    let x = Mat::from_rows(
        &(0..n).map(|_| (0..d).map(|_| gauss()).collect::<Vec<f64>>()).collect::<Vec<_>>(),
    );
    let y: Vec<usize> = (0..n).map(|i| i % l_count).collect();
    let sw: Vec<f64> = (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect();
    for point in 0..20 {
        let mut w = Mat::zeros(l_count, d);
        for l in 0..l_count {
            for j in 0..d {
                w.set(l, j, gauss());
            }
        }
        let b: Vec<f64> = (0..l_count).map(|_| gauss()).collect();
        let (_, gw, gb) = crate::models::logistic_loss_grad(&x, &y, l_count, &sw, &w, &b, 1e-3);
        let h = 1e-5;
        for l in 0..l_count {
            for j in 0..d {
                let mut wp = w.clone();
                wp.set(l, j, w.get(l, j) + h);
                let mut wm = w.clone();
                wm.set(l, j, w.get(l, j) - h);
                let fp = crate::models::logistic_loss_grad(&x, &y, l_count, &sw, &wp, &b, 1e-3).0;
                let fm = crate::models::logistic_loss_grad(&x, &y, l_count, &sw, &wm, &b, 1e-3).0;
                let fd = (fp - fm) / (2.0 * h);
                let rel = (gw.get(l, j) - fd).abs() / fd.abs().max(1e-8);
                if rel >= 1e-4 {
                    return fail(
                        4,
                        "numerical-checks",
                        format!("gradient point {point}: rel err {rel:.2e}"),
                    );
                }
            }
            let mut bp = b.clone();
            bp[l] += h;
            let mut bm = b.clone();
            bm[l] -= h;
            let fp = crate::models::logistic_loss_grad(&x, &y, l_count, &sw, &w, &bp, 1e-3).0;
            let fm = crate::models::logistic_loss_grad(&x, &y, l_count, &sw, &w, &bm, 1e-3).0;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (gb[l] - fd).abs() / fd.abs().max(1e-8);
            if rel >= 1e-4 {
                return fail(4, "numerical-checks", format!("bias gradient rel err {rel:.2e}"));
            }
        }
    }

    // PageRank normalization on random graphs.
    for seed in 0..20u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 + (seed as usize % 15);
        let rows = random_rows(&mut r, n, 4);
        let g = simgraph::build_mutual_knn(&rows, 3);
        let pr = simgraph::pagerank(&g, 0.85, 1e-12, 1000);
        let sum: f64 = pr.scores.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return fail(4, "numerical-checks", format!("pagerank sum {sum}"));
        }
    }

    // predict_proba row normalization for the three classifier kinds.
    let rows: Vec<Vec<f64>> =
        (0..36).map(|_| (0..5).map(|_| gauss()).collect::<Vec<f64>>()).collect();
    let labels: Vec<Activity> = (0..36).map(|i| Activity::from_index(i % 6).unwrap()).collect();
    let x_train = Mat::from_rows(&rows);
    let queries = Mat::from_rows(
        &(0..25).map(|_| (0..5).map(|_| gauss()).collect::<Vec<f64>>()).collect::<Vec<_>>(),
    );
    for kind in ClassifierKind::ALL {
        let model = match Classifier::fit(kind, &x_train, &labels, &Default::default()) {
            Ok(m) => m,
            Err(e) => return fail(4, "numerical-checks", format!("{kind}: {e}")),
        };
        let probs = model.predict_proba(&queries);
        for i in 0..queries.rows() {
            let sum: f64 = probs.row(i).iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return fail(4, "numerical-checks", format!("{kind}: proba row sums to {sum}"));
            }
        }
    }

    // PCA projector idempotence on the synthetic feature matrix.
    let windows = crate::datastore::synthesize(77, 8);
    let stats = Mat::from_rows(
        &windows.iter().map(|w| featurizer::base_stats(w).to_vec()).collect::<Vec<_>>(),
    );
    let z = match featurizer::Standardizer::fit(&stats) {
        Ok(s) => s.apply(&stats),
        Err(e) => return fail(4, "numerical-checks", e.to_string()),
    };
    let pca = match featurizer::PcaModel::fit(&z, 6) {
        Ok(p) => p,
        Err(e) => return fail(4, "numerical-checks", e.to_string()),
    };
    let p = pca.projector();
    let pp = p.matmul(&p);
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            if (pp.get(i, j) - p.get(i, j)).abs() > 1e-8 {
                return fail(4, "numerical-checks", format!("projector not idempotent at ({i},{j})"));
            }
        }
    }

    // Parseval on the raw spectra of synthetic windows.
    for w in windows.iter().take(24) {
        for ch in 0..crate::datastore::NUM_CHANNELS {
            let sig = w.channel(ch);
            let energy: f64 = sig.iter().map(|v| v * v).sum();
            let mags = featurizer::rfft_magnitudes(&sig);
            let spectral = (mags[0].powi(2)
                + 2.0 * mags[1..64].iter().map(|m| m * m).sum::<f64>()
                + mags[64].powi(2))
                / 128.0;
            let rel = (energy - spectral).abs() / energy.max(1e-12);
            if rel > 1e-6 {
                return fail(4, "numerical-checks", format!("Parseval rel err {rel:.2e}"));
            }
        }
    }

    pass(
        4,
        "numerical-checks",
        "gradient FD, pagerank sums, proba rows, projector idempotence, Parseval all within tolerance"
            .to_string(),
    )
}

// ---------------------------------------------------------------------------
// Criterion 5: knowledge fixture round-trip and clamp properties
// ---------------------------------------------------------------------------

fn criterion_knowledge_fixture() -> CriterionOutcome {
    let vocab = match knowledge::base_and_semantic_vocabulary() {
        Ok(v) => v,
        Err(e) => return fail(5, "knowledge-fixture", e.to_string()),
    };
    let prior = match knowledge::parse_and_validate(
        knowledge::fixture_knowledge_text(),
        &Activity::ALL,
        &vocab,
    ) {
        Ok((p, _)) => p,
        Err(e) => return fail(5, "knowledge-fixture", format!("fixture parse: {e}")),
    };
    match knowledge::parse_and_validate(&prior.to_json_pretty(), &Activity::ALL, &vocab) {
        Ok((again, _)) => {
            if again != prior {
                return fail(5, "knowledge-fixture", "round-trip produced a different prior".into());
            }
        }
        Err(e) => return fail(5, "knowledge-fixture", format!("round-trip parse: {e}")),
    }

    // Clamp properties over 1000 random raw objects.
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1A4B);
    for case in 0..1000 {
        let mut root = serde_json::Map::new();
        let mut weights = serde_json::Map::new();
        let mut conf = serde_json::Map::new();
        let mut mult = serde_json::Map::new();
        for label in Activity::ALL {
            if rng.gen::<f64>() < 0.8 {
                let mut inner = serde_json::Map::new();
                for stat in featurizer::BASE_STAT_NAMES {
                    if rng.gen::<f64>() < 0.4 {
                        inner.insert(
                            stat.to_string(),
                            serde_json::json!(rng.gen::<f64>() * 20.0 - 10.0),
                        );
                    }
                }
                weights.insert(label.name().to_string(), inner.into());
            }
            if rng.gen::<f64>() < 0.8 {
                let mut inner = serde_json::Map::new();
                for other in Activity::ALL {
                    if other != label && rng.gen::<f64>() < 0.5 {
                        inner.insert(
                            other.name().to_string(),
                            serde_json::json!(rng.gen::<f64>() * 10.0 - 5.0),
                        );
                    }
                }
                conf.insert(label.name().to_string(), inner.into());
            }
            if rng.gen::<f64>() < 0.7 {
                mult.insert(
                    label.name().to_string(),
                    serde_json::json!(rng.gen::<f64>() * 7.0 - 3.0),
                );
            }
        }
        root.insert("label_feature_weights".into(), weights.into());
        root.insert("confusability".into(), conf.into());
        root.insert("label_budget_multiplier".into(), mult.into());
        let raw = serde_json::Value::Object(root).to_string();

        let (p, _) = match knowledge::parse_and_validate(&raw, &Activity::ALL, &vocab) {
            Ok(v) => v,
            Err(e) => return fail(5, "knowledge-fixture", format!("case {case}: {e}")),
        };
        for m in p.label_feature_weights.values() {
            for &v in m.values() {
                if !(-2.0..=2.0).contains(&v) {
                    return fail(5, "knowledge-fixture", format!("case {case}: weight {v}"));
                }
            }
        }
        for (a, row) in &p.confusability {
            for (b, &v) in row {
                if a == b || !(0.0..=1.5).contains(&v) {
                    return fail(5, "knowledge-fixture", format!("case {case}: confusability {v}"));
                }
            }
        }
        for &v in p.label_budget_multiplier.values() {
            if !(0.8..=1.3).contains(&v) {
                return fail(5, "knowledge-fixture", format!("case {case}: multiplier {v}"));
            }
        }
        // Idempotence of validation on the serialized form.
        match knowledge::parse_and_validate(&p.to_json_pretty(), &Activity::ALL, &vocab) {
            Ok((again, _)) => {
                if again != p {
                    return fail(5, "knowledge-fixture", format!("case {case}: not idempotent"));
                }
            }
            Err(e) => return fail(5, "knowledge-fixture", format!("case {case}: {e}")),
        }
    }

    pass(5, "knowledge-fixture", "fixture round-trips; 1000 random raw objects satisfy all clamps".into())
}

// ---------------------------------------------------------------------------
// Criterion 6: the verticality reference value
// ---------------------------------------------------------------------------

fn criterion_verticality_example() -> CriterionOutcome {
    let specs = match knowledge::fixture_semantic_specs() {
        Ok(s) => s,
        Err(e) => return fail(6, "verticality-example", e.to_string()),
    };
    let verticality = match specs.iter().find(|s| s.name == "verticality") {
        Some(s) => s,
        None => return fail(6, "verticality-example", "fixture lacks verticality".into()),
    };
    let mut row = [0.0; 12];
    row[4] = 0.45; // acc_z_mean
    row[5] = 0.30; // acc_z_std
    let value = featurizer::apply_semantic(verticality, &row);
    if value == 0.54 {
        pass(6, "verticality-example", "verticality(0.45, 0.30) == 0.54 exactly".into())
    } else {
        fail(6, "verticality-example", format!("verticality(0.45, 0.30) = {value:?}"))
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: synthetic end-to-end
// ---------------------------------------------------------------------------

fn criterion_synthetic_end_to_end(synthetic: &(Vec<SyntheticRun>, f64)) -> CriterionOutcome {
    let started = Instant::now();
    let mut llm_scores = Vec::new();
    let mut random_scores = Vec::new();
    let mut min_gate_acc = f64::INFINITY;

    for run in &synthetic.0 {
        let exp = match &run.experiment {
            Ok(e) => e,
            Err(e) => return fail(7, "synthetic-end-to-end", format!("seed {}: {e}", run.seed)),
        };
        min_gate_acc = min_gate_acc.min(exp.gate_train_accuracy);
        for (strategy, bucket) in [
            (Strategy::LlmGuided, &mut llm_scores),
            (Strategy::Random, &mut random_scores),
        ] {
            let set = match evalbench::select_for_strategy(
                exp,
                strategy,
                &exp.score_table,
                SelectionMode::FacilityGreedy,
            ) {
                Ok(s) => s,
                Err(e) => {
                    return fail(7, "synthetic-end-to-end", format!("seed {}: {e}", run.seed))
                }
            };
            match evalbench::evaluate_cell(exp, &set, ClassifierKind::Logistic, true) {
                Ok((f1, _)) => bucket.push(f1 * 100.0),
                Err(e) => {
                    return fail(7, "synthetic-end-to-end", format!("seed {}: {e}", run.seed))
                }
            }
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let llm_mean = mean(&llm_scores);
    let random_mean = mean(&random_scores);
    let gap = llm_mean - random_mean;
    let elapsed = synthetic.1 + started.elapsed().as_secs_f64();

    if min_gate_acc < 0.99 {
        return fail(
            7,
            "synthetic-end-to-end",
            format!("gate training accuracy {min_gate_acc:.4} below 0.99"),
        );
    }
    if gap < 5.0 {
        return fail(
            7,
            "synthetic-end-to-end",
            format!("llm-guided {llm_mean:.2} vs random {random_mean:.2}: gap {gap:.2} < 5.0"),
        );
    }
    if elapsed >= 120.0 {
        return fail(7, "synthetic-end-to-end", format!("runtime {elapsed:.1}s exceeds 120s"));
    }
    pass(
        7,
        "synthetic-end-to-end",
        format!(
            "10 seeds: llm-guided {llm_mean:.2} vs random {random_mean:.2} (gap {gap:.2} >= 5.0), min gate acc {min_gate_acc:.4}, {elapsed:.1}s"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: UCI-HAR reproduction (dataset-conditional)
// ---------------------------------------------------------------------------

fn ucihar_config(root: &Path) -> RunConfig {
    RunConfig {
        dataset: DatasetConfig::Ucihar {
            root: root.to_path_buf(),
            acc_source: crate::datastore::AccSource::TotalAcc,
        },
        ..RunConfig::default()
    }
}

fn criterion_ucihar_reproduction(ucihar_root: Option<&Path>) -> CriterionOutcome {
    let root = match ucihar_root {
        Some(r) if r.exists() => r,
        _ => {
            return skip(
                8,
                "ucihar-reproduction",
                "dataset not present; criteria 1-7 carry acceptance".into(),
            )
        }
    };
    let config = ucihar_config(root);
    let exp = match evalbench::prepare(&config) {
        Ok(e) => e,
        Err(e) => return fail(8, "ucihar-reproduction", e.to_string()),
    };
    if exp.train.n() != 6012 || exp.val.n() != 1340 || exp.test.n() != 2947 {
        return fail(
            8,
            "ucihar-reproduction",
            format!(
                "split sizes {}/{}/{} differ from 6012/1340/2947",
                exp.train.n(),
                exp.val.n(),
                exp.test.n()
            ),
        );
    }
    let report = match evalbench::run_full(&exp) {
        Ok(r) => r,
        Err(e) => return fail(8, "ucihar-reproduction", e.to_string()),
    };
    let mut checks = Vec::new();

    let logistic_llm = report.comparison.f1["logistic"]["llm_guided"];
    checks.push(((logistic_llm - 88.79).abs() <= 3.0, format!("(a) logistic {logistic_llm:.2} within ±3 of 88.79")));

    let knn_llm = report.comparison.f1["knn_cosine"]["llm_guided"];
    checks.push(((knn_llm - 85.88).abs() <= 4.0, format!("(b) knn {knn_llm:.2} within ±4 of 85.88")));

    let llm_mean = report.comparison.strategy_means["llm_guided"];
    let random_mean = report.comparison.strategy_means["random"];
    checks.push((llm_mean > random_mean, format!("(c) llm mean {llm_mean:.2} > random mean {random_mean:.2}")));

    let delta = |name: &str| {
        report.ablation.iter().find(|r| r.name == name).map(|r| r.change).unwrap_or(f64::NAN)
    };
    let no_fac = delta("no_facility");
    let no_sem = delta("no_semantic_prior");
    checks.push((no_fac < 0.0, format!("(d1) no-facility delta {no_fac:+.2} < 0")));
    checks.push((no_sem < 0.0, format!("(d2) no-semantic-prior delta {no_sem:+.2} < 0")));

    let gate_row = &report.gate_study["logistic"];
    checks.push((
        gate_row.with_gate >= gate_row.without_gate,
        format!("(e) gate on {:.2} >= off {:.2}", gate_row.with_gate, gate_row.without_gate),
    ));

    let timing = match evalbench::run_timing(&exp) {
        Ok(t) => t,
        Err(e) => return fail(8, "ucihar-reproduction", e.to_string()),
    };
    let logistic_ms = timing.get("logistic").copied().unwrap_or(f64::NAN);
    checks.push((logistic_ms < 1.0, format!("(f) logistic {logistic_ms:.4} ms/sample < 1")));

    let all_ok = checks.iter().all(|(ok, _)| *ok);
    let detail = checks
        .iter()
        .map(|(ok, msg)| format!("{}{}", if *ok { "ok " } else { "VIOLATED " }, msg))
        .collect::<Vec<_>>()
        .join("; ");
    if all_ok {
        pass(8, "ucihar-reproduction", detail)
    } else {
        fail(8, "ucihar-reproduction", detail)
    }
}
