//! Brute-force oracles and invariant checks shared by the integration tests
//! and the acceptance runner. Every check returns `Ok(summary)` or
//! `Err(reason)` so it can be asserted or reported.

#![allow(dead_code)]

use forestvar::cart::{best_split_sse, fit_cart};
use forestvar::citree::{best_split_ci, fit_citree, linear_statistic, select_variable};
use forestvar::data::Dataset;
use forestvar::numeric::normal_two_sided_p;
use forestvar::resampling::{bootstrap_counts, subsample_counts};
use forestvar::rng::{seeded, stream};
use forestvar::simgen::{gen_dataset, SimFunction, SimulationSpec, N_PREDICTORS};
use forestvar::{
    fit_forest, ij_components, ij_variance, jackknife_after_bootstrap, predict_with_variance,
    ForestConfig, ForestModel, Learner, ResampleCounts, ResampleMode, TreeModel, VarianceOptions,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Check = Result<String, String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn run_prop<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Split oracles

/// One randomly generated split-search instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub data: Dataset,
    pub w: ResampleCounts,
}

/// Random instances with `n <= 10` and `p <= 2`, mixing tied integer and
/// continuous values and unit, bootstrap and subsample weights.
pub fn split_instances(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=10usize);
            let p = rng.random_range(1..=2usize);
            let int_x = rng.random_bool(0.5);
            let int_y = rng.random_bool(0.5);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..p)
                        .map(|_| {
                            if int_x {
                                f64::from(rng.random_range(0..5u8))
                            } else {
                                StandardNormal.sample(&mut rng)
                            }
                        })
                        .collect()
                })
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|_| {
                    if int_y {
                        f64::from(rng.random_range(0..6u8))
                    } else {
                        StandardNormal.sample(&mut rng)
                    }
                })
                .collect();
            let w = match rng.random_range(0..3u8) {
                0 => ResampleCounts::unit(n),
                1 => bootstrap_counts(n, &mut rng).unwrap(),
                _ => {
                    let s = rng.random_range(2..=n);
                    subsample_counts(n, s, &mut rng).unwrap()
                }
            };
            Instance {
                data: Dataset::from_rows(&rows, y).unwrap(),
                w,
            }
        })
        .collect()
}

/// Active `(x, y, w)` triples of one column.
fn active(x: &[f64], y: &[f64], w: &ResampleCounts) -> Vec<(f64, f64, f64)> {
    x.iter()
        .zip(y)
        .zip(w.counts())
        .filter(|(_, &c)| c > 0)
        .map(|((&a, &b), &c)| (a, b, f64::from(c)))
        .collect()
}

/// Weighted SSE about the weighted mean, two passes.
fn weighted_sse(rows: &[&(f64, f64, f64)]) -> f64 {
    let w: f64 = rows.iter().map(|r| r.2).sum();
    if w == 0.0 {
        return 0.0;
    }
    let mean = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / w;
    rows.iter().map(|r| r.2 * (r.1 - mean).powi(2)).sum()
}

/// Midpoints between consecutive distinct active values, ascending.
fn candidate_cuts(rows: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.windows(2)
        .map(|pair| {
            let m = 0.5 * (pair[0] + pair[1]);
            if m < pair[1] {
                m
            } else {
                pair[0]
            }
        })
        .collect()
}

/// Every `(cut, sse)` of one column by direct evaluation.
pub fn brute_sse_cuts(x: &[f64], y: &[f64], w: &ResampleCounts) -> Vec<(f64, f64)> {
    let rows = active(x, y, w);
    candidate_cuts(&rows)
        .into_iter()
        .map(|cut| {
            let (left, right): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.0 <= cut);
            (cut, weighted_sse(&left) + weighted_sse(&right))
        })
        .collect()
}

/// First candidate (in the given order) whose score is within a relative
/// `1e-9` of the best; `lower` selects minimization.
fn first_best<T: Copy>(scored: &[(T, f64)], lower: bool) -> Option<(T, f64)> {
    let best = scored.iter().map(|s| s.1).fold(
        if lower { f64::INFINITY } else { f64::NEG_INFINITY },
        |a, b| if lower { a.min(b) } else { a.max(b) },
    );
    let tol = 1e-9 * best.abs().max(1e-300);
    scored
        .iter()
        .copied()
        .find(|s| if lower { s.1 <= best + tol } else { s.1 >= best - tol })
}

/// Root split CART must choose with every variable as a candidate.
pub fn brute_cart_root(data: &Dataset, w: &ResampleCounts) -> Option<(usize, f64)> {
    let y = data.response();
    let all = active(data.column(0), y, w);
    if all.iter().all(|r| r.1 == all[0].1) {
        return None;
    }
    let parent = weighted_sse(&all.iter().collect::<Vec<_>>());
    let scored: Vec<((usize, f64), f64)> = (0..data.p())
        .flat_map(|j| {
            brute_sse_cuts(data.column(j), y, w)
                .into_iter()
                .map(move |(cut, sse)| ((j, cut), sse))
        })
        .collect();
    let ((j, cut), sse) = first_best(&scored, true)?;
    (sse < parent * (1.0 - 1e-9)).then_some((j, cut))
}

/// Standardized statistic from the uncentred closed forms.
pub fn literal_c(g: &[f64], h: &[f64], w: &[f64]) -> f64 {
    let big_w: f64 = w.iter().sum();
    let eh = w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / big_w;
    let vh = w.iter().zip(h).map(|(a, b)| a * (b - eh).powi(2)).sum::<f64>() / big_w;
    let t: f64 = (0..g.len()).map(|i| w[i] * g[i] * h[i]).sum();
    let sg: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
    let sgg: f64 = w.iter().zip(g).map(|(a, b)| a * b * b).sum();
    let mu = eh * sg;
    let sigma2 = big_w / (big_w - 1.0) * vh * sgg - vh * sg * sg / (big_w - 1.0);
    let scale = big_w / (big_w - 1.0) * vh * sgg;
    if sigma2 <= 1e-10 * scale || sigma2 <= 0.0 {
        0.0
    } else {
        (t - mu).abs() / sigma2.sqrt()
    }
}

/// Root split a CI tree must choose with every variable as a candidate.
pub fn brute_ci_root(data: &Dataset, w: &ResampleCounts, alpha: f64) -> Option<(usize, f64)> {
    let y = data.response();
    let first = active(data.column(0), y, w);
    if first.iter().all(|r| r.1 == first[0].1) {
        return None;
    }
    let scored: Vec<(usize, f64)> = (0..data.p())
        .map(|j| {
            let rows = active(data.column(j), y, w);
            let g: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let h: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let ww: Vec<f64> = rows.iter().map(|r| r.2).collect();
            (j, literal_c(&g, &h, &ww))
        })
        .collect();
    let (j, c) = first_best(&scored, false)?;
    let adjusted = (normal_two_sided_p(c) * data.p() as f64).min(1.0);
    if c <= 0.0 || adjusted > alpha {
        return None;
    }
    let rows = active(data.column(j), y, w);
    let h: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ww: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let cuts: Vec<(f64, f64)> = candidate_cuts(&rows)
        .into_iter()
        .map(|cut| {
            let g: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.0 <= cut))).collect();
            (cut, literal_c(&g, &h, &ww))
        })
        .collect();
    first_best(&cuts, false).map(|(cut, _)| (j, cut))
}

fn root(tree: &TreeModel) -> Option<(usize, f64)> {
    tree.root_split().map(|r| (r.variable, r.cut))
}

pub fn cart_split_oracle(count: usize, seed: u64) -> Check {
    let mut splits = 0;
    for (k, inst) in split_instances(count, seed).iter().enumerate() {
        let p = inst.data.p();
        let tree = fit_cart(&inst.data, &inst.w, p, 1, &mut seeded(k as u64)).unwrap();
        let expected = brute_cart_root(&inst.data, &inst.w);
        ensure(root(&tree) == expected, || {
            format!("instance {k}: tree root {:?}, oracle {expected:?}: {inst:?}", root(&tree))
        })?;
        for j in 0..p {
            let got = best_split_sse(inst.data.column(j), inst.data.response(), &inst.w);
            let cuts = brute_sse_cuts(inst.data.column(j), inst.data.response(), &inst.w);
            let want = first_best(&cuts, true);
            let same = match (got, want) {
                (None, None) => true,
                (Some((c1, s1)), Some((c2, s2))) => {
                    c1 == c2 && (s1 - s2).abs() <= 1e-9 * s2.abs().max(1.0)
                }
                _ => false,
            };
            ensure(same, || format!("instance {k} column {j}: {got:?} vs {want:?}"))?;
        }
        splits += usize::from(expected.is_some());
    }
    Ok(format!("{count} instances, {splits} with a root split"))
}

pub fn ci_split_oracle(count: usize, seed: u64) -> Check {
    let mut splits = 0;
    for (k, inst) in split_instances(count, seed).iter().enumerate() {
        let p = inst.data.p();
        let alpha = if k % 2 == 0 { 0.5 } else { 0.05 };
        let tree = fit_citree(&inst.data, &inst.w, p, 1, alpha, &mut seeded(k as u64)).unwrap();
        let expected = brute_ci_root(&inst.data, &inst.w, alpha);
        ensure(root(&tree) == expected, || {
            format!("instance {k}: tree root {:?}, oracle {expected:?}: {inst:?}", root(&tree))
        })?;
        for j in 0..p {
            let rows = active(inst.data.column(j), inst.data.response(), &inst.w);
            let h: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let ww: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let cuts: Vec<(f64, f64)> = candidate_cuts(&rows)
                .into_iter()
                .map(|cut| {
                    let g: Vec<f64> =
                        rows.iter().map(|r| f64::from(u8::from(r.0 <= cut))).collect();
                    (cut, literal_c(&g, &h, &ww))
                })
                .collect();
            let want = first_best(&cuts, false).map(|c| c.0);
            let got = best_split_ci(inst.data.column(j), inst.data.response(), &inst.w);
            ensure(got == want, || format!("instance {k} column {j}: cut {got:?} vs {want:?}"))?;
        }
        splits += usize::from(expected.is_some());
    }
    Ok(format!("{count} instances, {splits} with a root split"))
}

/// Training SSE of a fitted tree never exceeds that of the best stump.
pub fn greedy_beats_stumps(count: usize, seed: u64) -> Check {
    let mut rng = seeded(seed);
    for k in 0..count {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
        let data = Dataset::from_rows(&rows, y.clone()).unwrap();
        let w = ResampleCounts::unit(8);
        let tree = fit_cart(&data, &w, 2, 1, &mut seeded(k as u64)).unwrap();
        let tree_sse: f64 = (0..8)
            .map(|i| (y[i] - tree.predict(&rows[i]).unwrap()).powi(2))
            .sum();
        let best_stump = (0..2)
            .flat_map(|j| brute_sse_cuts(data.column(j), &y, &w))
            .map(|(_, sse)| sse)
            .fold(f64::INFINITY, f64::min);
        ensure(tree_sse <= best_stump + 1e-12, || {
            format!("case {k}: tree SSE {tree_sse} > best stump {best_stump}")
        })?;
    }
    Ok(format!("{count} cases"))
}

// ---------------------------------------------------------------------------
// Permutation oracle

/// One linear-statistic fixture: `(g, h, w)` with integer weights.
pub type PermFixture = (Vec<f64>, Vec<f64>, Vec<u32>);

/// The fixed fixture suite: the documented closed-form cases plus seeded
/// random integer data sets with `n = 2..=7` (weights expand to at most 7 rows).
pub fn permutation_fixtures() -> Vec<PermFixture> {
    let mut out: Vec<PermFixture> = vec![
        (vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0], vec![1; 4]),
        (vec![1.0, 2.0, 3.0], vec![4.0; 3], vec![1; 3]),
        (vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 10.0, 10.0], vec![1; 4]),
    ];
    let mut rng = seeded(4);
    for n in 2..=7usize {
        for _ in 0..8 {
            let g = (0..n).map(|_| f64::from(rng.random_range(0..10u8))).collect();
            let h = (0..n).map(|_| f64::from(rng.random_range(0..10u8))).collect();
            let mut w = vec![1u32; n];
            if n <= 5 && rng.random_bool(0.5) {
                let extra = rng.random_range(0..n);
                w[extra] = 2;
            }
            out.push((g, h, w));
        }
    }
    out
}

fn permutations(items: &[f64]) -> Vec<Vec<f64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Exhaustive null mean, null variance and two-sided p-value of `t`.
pub fn enumerate_null(g: &[f64], h: &[f64], w: &[u32]) -> (f64, f64, f64) {
    let expand = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(w)
            .flat_map(|(&x, &c)| std::iter::repeat_n(x, c as usize))
            .collect()
    };
    let (ge, he) = (expand(g), expand(h));
    let ts: Vec<f64> = permutations(&he)
        .iter()
        .map(|perm| ge.iter().zip(perm).map(|(a, b)| a * b).sum())
        .collect();
    let m = ts.len() as f64;
    let mean = ts.iter().sum::<f64>() / m;
    let var = ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / m;
    let observed: f64 = ge.iter().zip(&he).map(|(a, b)| a * b).sum();
    let dist = (observed - mean).abs();
    let p = ts
        .iter()
        .filter(|t| (*t - mean).abs() >= dist - 1e-9 * dist.max(1.0))
        .count() as f64
        / m;
    (mean, var, p)
}

/// Closed-form moments against enumeration, and the worst normal-vs-exact
/// p-value gap. Returns `(moments_ok_detail, worst_gap, worst_fixture)`.
pub fn permutation_oracle() -> (Result<usize, String>, f64, Option<PermFixture>) {
    let fixtures = permutation_fixtures();
    let mut worst = 0.0;
    let mut worst_case = None;
    for (k, (g, h, w)) in fixtures.iter().enumerate() {
        // Weighted fixtures are padded with zero-weight rows so the count
        // vector is a valid bootstrap draw (length equals total weight).
        let total = w.iter().sum::<u32>() as usize;
        let pad = |v: &[f64]| {
            let mut v = v.to_vec();
            v.resize(total, 0.0);
            v
        };
        let mut padded = w.clone();
        padded.resize(total, 0);
        let counts = ResampleCounts::from_counts(padded, ResampleMode::Bootstrap, total).unwrap();
        let stat = linear_statistic(&pad(g), &pad(h), &counts).unwrap();
        let (mean, var, p_exact) = enumerate_null(g, h, w);
        let mean_ok = rel_diff(stat.mu, mean) <= 1e-10 || (stat.mu - mean).abs() <= 1e-10;
        let var_ok = rel_diff(stat.sigma2, var) <= 1e-10 || (stat.sigma2 - var).abs() <= 1e-10;
        if !(mean_ok && var_ok) {
            return (
                Err(format!(
                    "fixture {k}: closed form ({}, {}) vs enumeration ({mean}, {var})",
                    stat.mu, stat.sigma2
                )),
                worst,
                worst_case,
            );
        }
        let gap = (stat.p_value - p_exact).abs();
        if gap > worst {
            worst = gap;
            worst_case = Some((g.clone(), h.clone(), w.clone()));
        }
    }
    (Ok(fixtures.len()), worst, worst_case)
}

// ---------------------------------------------------------------------------
// Variance-estimator oracles

pub fn sum1(n: usize, seed: u64) -> Dataset {
    gen_dataset(&SimulationSpec::new(SimFunction::Sum1, n, seed).unwrap())
}

pub fn forest(
    data: &Dataset,
    tree: Learner,
    mode: ResampleMode,
    n_trees: usize,
    seed: u64,
) -> ForestModel {
    let config = ForestConfig {
        n_trees,
        seed,
        ..ForestConfig::with_defaults(tree, mode, data.n(), data.p())
    };
    fit_forest(data, &config).unwrap()
}

/// Jackknife-after-bootstrap against a separately written one-pass version.
pub fn jackknife_oracle() -> Check {
    let data = sum1(30, 11);
    let mut worst: f64 = 0.0;
    for (k, tree) in [Learner::Cart, Learner::Ci].into_iter().enumerate() {
        let f = forest(&data, tree, ResampleMode::Bootstrap, 500, 5 + k as u64);
        for x in data.rows().iter().take(5) {
            let got = jackknife_after_bootstrap(&f, x).unwrap().corrected;
            let preds: Vec<f64> = f.trees().iter().map(|t| t.predict(x).unwrap()).collect();
            let n = f.n();
            let mut sums = vec![0.0; n];
            let mut counts = vec![0.0; n];
            for (b, rc) in f.counts().iter().enumerate() {
                for (i, &c) in rc.counts().iter().enumerate() {
                    if c == 0 {
                        sums[i] += preds[b];
                        counts[i] += 1.0;
                    }
                }
            }
            let loo: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
            let s1: f64 = loo.iter().sum();
            let s2: f64 = loo.iter().map(|v| v * v).sum();
            let want = (n as f64 - 1.0) / n as f64 * (s2 - s1 * s1 / n as f64);
            worst = worst.max(rel_diff(got, want));
        }
    }
    ensure(worst <= 1e-10, || format!("relative gap {worst:e}"))?;
    Ok(format!("max relative gap {worst:.1e}"))
}

/// IJ components against the textbook covariance `sum_b (N_bi - N̄_i)(T_b - T̄)/B`.
pub fn covariance_oracle() -> Check {
    let data = sum1(40, 3);
    let mut worst: f64 = 0.0;
    for mode in [ResampleMode::Bootstrap, ResampleMode::Subsample] {
        let f = forest(&data, Learner::Cart, mode, 300, 9);
        for x in data.rows().iter().take(4) {
            let got = ij_components(&f, x).unwrap();
            let preds: Vec<f64> = f.trees().iter().map(|t| t.predict(x).unwrap()).collect();
            let b = preds.len() as f64;
            let t_bar = preds.iter().sum::<f64>() / b;
            let scale = got.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for (i, &ci) in got.iter().enumerate() {
                let n_bar =
                    f.counts().iter().map(|c| f64::from(c.counts()[i])).sum::<f64>() / b;
                let cov = f
                    .counts()
                    .iter()
                    .zip(&preds)
                    .map(|(c, t)| (f64::from(c.counts()[i]) - n_bar) * (t - t_bar))
                    .sum::<f64>()
                    / b;
                worst = worst.max((ci - cov).abs() / scale);
            }
        }
    }
    ensure(worst <= 1e-10, || format!("relative gap {worst:e}"))?;

    // All six 2-subsets of 4 points: every observation has mean count s/n.
    let subsets = [[1, 1, 0, 0], [1, 0, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 0, 1], [0, 0, 1, 1]];
    let values = [1.0, 2.0, 3.0, 4.0, 5.0, 9.0];
    let trees = values
        .iter()
        .map(|&v| TreeModel::single_leaf(v, 1, Learner::Cart))
        .collect();
    let counts = subsets
        .iter()
        .map(|s| ResampleCounts::from_counts(s.to_vec(), ResampleMode::Subsample, 2).unwrap())
        .collect();
    let config = ForestConfig {
        n_trees: 6,
        subsample_size: 2,
        ..ForestConfig::with_defaults(Learner::Cart, ResampleMode::Subsample, 4, 1)
    };
    let f = ForestModel::from_parts(trees, counts, config, 4, vec!["x1".into()]).unwrap();
    let got = ij_components(&f, &[0.0]).unwrap();
    let t_bar = values.iter().sum::<f64>() / 6.0;
    for (i, &ci) in got.iter().enumerate() {
        let cov = subsets
            .iter()
            .zip(&values)
            .map(|(s, t)| (f64::from(s[i]) - 0.5) * (t - t_bar))
            .sum::<f64>()
            / 6.0;
        ensure(ci == cov, || format!("fixture component {i}: {ci} vs {cov}"))?;
    }
    Ok(format!("max relative gap {worst:.1e}; balanced fixture exact"))
}

/// Batched estimates are bit-identical to one-row calls.
pub fn batch_matches_loop() -> Check {
    let data = sum1(60, 21);
    let test = sum1(100, 22).rows();
    for tree in Learner::ALL {
        for mode in ResampleMode::ALL {
            let f = forest(&data, tree, mode, 120, 4);
            let batch = predict_with_variance(&f, &test, VarianceOptions::default()).unwrap();
            for (x, (pred, v)) in test.iter().zip(&batch) {
                let single = ij_variance(&f, x).unwrap();
                ensure(
                    pred.to_bits() == f.predict(x).unwrap().to_bits()
                        && v.raw.to_bits() == single.raw.to_bits()
                        && v.corrected.to_bits() == single.corrected.to_bits(),
                    || format!("{tree}/{mode}: batch {v:?} vs single {single:?}"),
                )?;
            }
        }
    }
    Ok("100 rows x 4 forest types".into())
}

/// Corrected IJ is stable in B while raw IJ shrinks as Monte Carlo noise fades.
pub fn large_b_consistency() -> Check {
    let data = sum1(50, 8);
    let x = [0.5, 0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0, 10.0];
    let (mut raw_small, mut raw_big, mut cor_small, mut cor_big) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..20 {
        let small = ij_variance(&forest(&data, Learner::Cart, ResampleMode::Subsample, 250, seed), &x)
            .unwrap();
        let big = ij_variance(
            &forest(&data, Learner::Cart, ResampleMode::Subsample, 5000, 1000 + seed),
            &x,
        )
        .unwrap();
        raw_small += small.raw / 20.0;
        raw_big += big.raw / 20.0;
        cor_small += small.corrected / 20.0;
        cor_big += big.corrected / 20.0;
    }
    let gap = rel_diff(cor_small, cor_big);
    ensure(gap <= 0.10, || {
        format!("corrected B=250 {cor_small:.5} vs B=5000 {cor_big:.5} ({gap:.3})")
    })?;
    ensure(raw_small > raw_big, || {
        format!("raw B=250 {raw_small:.5} not above B=5000 {raw_big:.5}")
    })?;
    Ok(format!(
        "corrected {cor_small:.5} vs {cor_big:.5}; raw {raw_small:.5} > {raw_big:.5}"
    ))
}

// ---------------------------------------------------------------------------
// Invariant suites

pub fn count_sums() -> Check {
    run_prop(200, (2usize..300, any::<u64>(), 0.0f64..1.0), |(n, seed, frac)| {
        let mut rng = seeded(seed);
        let boot = bootstrap_counts(n, &mut rng).unwrap();
        prop_assert_eq!(boot.total(), n as u64);
        let s = 1 + ((n - 1) as f64 * frac) as usize;
        let sub = subsample_counts(n, s, &mut rng).unwrap();
        prop_assert_eq!(sub.total(), s as u64);
        prop_assert!(sub.counts().iter().all(|&c| c <= 1));
        Ok(())
    })?;

    // Inclusion frequency of every observation within three standard errors of s/n.
    let data = sum1(50, 2);
    let f = forest(&data, Learner::Cart, ResampleMode::Subsample, 2000, 77);
    let b = f.n_trees() as f64;
    let target = f.resample_size() as f64 / f.n() as f64;
    let se = (target * (1.0 - target) / b).sqrt();
    for i in 0..f.n() {
        let freq = f.counts().iter().map(|c| f64::from(c.counts()[i])).sum::<f64>() / b;
        ensure((freq - target).abs() <= 3.0 * se, || {
            format!("observation {i}: inclusion {freq:.4} vs {target:.4} (se {se:.4})")
        })?;
    }
    Ok("bootstrap sums n, subsample 0/1 sums s, inclusion within 3 SE".into())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

pub fn thread_determinism() -> Check {
    let data = sum1(80, 5);
    let test = sum1(10, 6).rows();
    for tree in Learner::ALL {
        for mode in ResampleMode::ALL {
            let run = |threads| {
                in_pool(threads, || {
                    let f = forest(&data, tree, mode, 64, 12);
                    let est = predict_with_variance(&f, &test, VarianceOptions::default()).unwrap();
                    (f, est)
                })
            };
            let (f1, e1) = run(1);
            let (f3, e3) = run(3);
            ensure(f1 == f3, || format!("{tree}/{mode}: forests differ across thread counts"))?;
            let bits = |e: &[(f64, forestvar::VarianceEstimate)]| -> Vec<u64> {
                e.iter()
                    .flat_map(|(p, v)| [p.to_bits(), v.raw.to_bits(), v.corrected.to_bits()])
                    .collect()
            };
            ensure(bits(&e1) == bits(&e3), || {
                format!("{tree}/{mode}: estimates differ across thread counts")
            })?;
        }
    }
    Ok("1 vs 3 threads identical for all four forest types".into())
}

pub fn scale_equivariance() -> Check {
    let strategy = (0.01f64..100.0, 0u64..1000, 0usize..4);
    run_prop(24, strategy, |(a, seed, kind)| {
        let tree = Learner::ALL[kind / 2];
        let mode = ResampleMode::ALL[kind % 2];
        let mut rng = seeded(seed);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0] + 0.5 * normal(&mut rng))
            .collect();
        let data = Dataset::from_rows(&rows, y.clone()).unwrap();
        let scaled = data.with_response(y.iter().map(|v| v * a).collect()).unwrap();
        let f1 = forest(&data, tree, mode, 60, seed);
        let f2 = forest(&scaled, tree, mode, 60, seed);
        for x in rows.iter().take(3) {
            let v1 = ij_variance(&f1, x).unwrap();
            let v2 = ij_variance(&f2, x).unwrap();
            for (lhs, rhs) in [(v1.raw, v2.raw), (v1.corrected, v2.corrected)] {
                let want = lhs * a * a;
                prop_assert!(
                    (rhs - want).abs() <= 1e-8 * want.abs().max(1e-300) + 1e-300,
                    "{tree}/{mode} a={a}: {rhs} vs {want}"
                );
            }
        }
        Ok(())
    })?;
    Ok("raw and corrected scale by a^2 for all four forest types".into())
}

pub fn ci_affine_invariance() -> Check {
    let strategy = (0.001f64..1000.0, -1e3f64..1e3, any::<u64>());
    run_prop(200, strategy, |(a, b, seed)| {
        let mut rng = seeded(seed);
        let n = 30;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 0.7 * r[1] + normal(&mut rng))
            .collect();
        let data = Dataset::from_rows(&rows, y.clone()).unwrap();
        let moved = data.with_response(y.iter().map(|v| a * v + b).collect()).unwrap();
        let w = bootstrap_counts(n, &mut rng).unwrap();
        for j in 0..3 {
            let s1 = linear_statistic(data.column(j), data.response(), &w).unwrap();
            let s2 = linear_statistic(data.column(j), moved.response(), &w).unwrap();
            prop_assert!(rel_diff(s1.c, s2.c) <= 1e-10, "c {} vs {}", s1.c, s2.c);
            prop_assert_eq!(
                best_split_ci(data.column(j), data.response(), &w),
                best_split_ci(data.column(j), moved.response(), &w)
            );
        }
        prop_assert_eq!(
            select_variable(&data, &w, &[0, 1, 2], 0.5).map(|s| s.0),
            select_variable(&moved, &w, &[0, 1, 2], 0.5).map(|s| s.0)
        );
        Ok(())
    })?;
    Ok("c, chosen variable and chosen cut unchanged under y -> a y + b".into())
}

pub fn simgen_ranges() -> Check {
    let mut rng = seeded(31);
    for f in SimFunction::ALL {
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..N_PREDICTORS)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if j < 5 { z } else { 10.0 + 5f64.sqrt() * z }
                })
                .collect();
            let v = f.apply(&x);
            let ok = match f {
                SimFunction::Or1 | SimFunction::Or3 | SimFunction::Or5 => v == 0.0 || v == 1.0,
                SimFunction::And3 => [0.0, 1.0, 2.0, 3.0].iter().any(|k| v == k / 3.0),
                SimFunction::And5 => [0.0, 1.0, 2.0, 3.0, 4.0].iter().any(|k| v == k / 5.0),
                SimFunction::Sq1 | SimFunction::Sq3 | SimFunction::Sq5 => v >= 0.0,
                _ => v.is_finite(),
            };
            ensure(ok, || format!("{f} produced {v} at {x:?}"))?;

            let mut moved = x.clone();
            for j in (0..N_PREDICTORS).filter(|j| !f.used_variables().contains(j)) {
                moved[j] += 1.0 + rng.random::<f64>() * 50.0;
            }
            ensure(f.apply(&moved) == v, || format!("{f} reads an unlisted variable"))?;
        }
    }
    Ok("11 functions x 10,000 inputs".into())
}

pub fn variance_identities() -> Check {
    run_prop(16, (0u64..1000, 0usize..4), |(seed, kind)| {
        let tree = Learner::ALL[kind / 2];
        let mode = ResampleMode::ALL[kind % 2];
        let data = sum1(40, seed);
        let f = forest(&data, tree, mode, 50, seed);
        for x in data.rows().iter().take(5) {
            let v = ij_variance(&f, x).unwrap();
            prop_assert!(v.raw >= 0.0);
            prop_assert!(v.correction >= 0.0);
            prop_assert!(v.corrected <= v.raw);
            prop_assert_eq!(v.corrected, v.raw - v.correction);
        }
        Ok(())
    })?;
    // Subsampling every row: the correction vanishes.
    let data = sum1(30, 1);
    let config = ForestConfig {
        n_trees: 20,
        subsample_size: 30,
        ..ForestConfig::with_defaults(Learner::Cart, ResampleMode::Subsample, 30, 10)
    };
    let f = fit_forest(&data, &config).unwrap();
    let v = ij_variance(&f, &data.row(0)).unwrap();
    ensure(v.correction == 0.0, || format!("s = n correction {}", v.correction))?;
    Ok("raw >= 0, corrected = raw - correction <= raw, zero correction at s = n".into())
}

/// Rows with zero weight have no influence on the fitted tree.
pub fn zero_weight_rows() -> Check {
    run_prop(64, (any::<u64>(), 0usize..2), |(seed, kind)| {
        let mut rng = seeded(seed);
        let n = 20;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + r[1] * r[1]).collect();
        let w = subsample_counts(n, 14, &mut rng).unwrap();
        let mut rows2 = rows.clone();
        let mut y2 = y.clone();
        let mut w2 = w.counts().to_vec();
        for i in 0..n {
            if w.counts()[i] == 0 {
                rows2.push(rows[i].iter().map(|v| v + 0.123).collect());
                y2.push(y[i] * 7.0);
                w2.push(0);
            }
        }
        let d1 = Dataset::from_rows(&rows, y).unwrap();
        let d2 = Dataset::from_rows(&rows2, y2).unwrap();
        let w2 = ResampleCounts::from_counts(w2, ResampleMode::Subsample, 14).unwrap();
        let (t1, t2) = if kind == 0 {
            (
                fit_cart(&d1, &w, 2, 2, &mut stream(seed, 1)).unwrap(),
                fit_cart(&d2, &w2, 2, 2, &mut stream(seed, 1)).unwrap(),
            )
        } else {
            (
                fit_citree(&d1, &w, 2, 2, 0.5, &mut stream(seed, 1)).unwrap(),
                fit_citree(&d2, &w2, 2, 2, 0.5, &mut stream(seed, 1)).unwrap(),
            )
        };
        prop_assert_eq!(t1.nodes(), t2.nodes());
        Ok(())
    })?;
    Ok("appending zero-weight rows leaves CART and CI trees identical".into())
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
