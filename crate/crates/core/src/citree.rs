//! Conditional-inference regression trees.
//!
//! Split variables are chosen by a permutation test on the linear statistic
//! `T = sum_i w_i g(x_i) h(y_i)`, whose mean and variance under all
//! rearrangements of the responses have closed forms. The p-value uses the
//! normal approximation. With `g` the raw covariate this is a test of linear
//! association; for the split point `g` becomes the indicator `x <= cut` and
//! the standardized statistic is maximized over cuts.
//!
//! The responses enter tree construction only through these statistics and
//! through the leaf means.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::normal_two_sided_p;
use crate::resampling::ResampleCounts;
use crate::tree::{
    draw_candidates, grow, midpoint, sorted_active, validate_grow, GrowParams, Learner, NodeView,
    Presorted, SplitRule, TreeModel,
};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Relative difference in standardized statistics below which two candidates
/// count as tied (the earlier candidate wins).
const TIE_TOLERANCE: f64 = 1e-12;

#[inline]
fn beats(c: f64, incumbent: f64) -> bool {
    c > incumbent * (1.0 + TIE_TOLERANCE)
}

/// Linear statistic with its permutation-null moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearStatistic {
    pub t: f64,
    pub mu: f64,
    pub sigma2: f64,
    /// `|t - mu| / sqrt(sigma2)`, or 0 when `sigma2` is not positive.
    pub c: f64,
    pub p_value: f64,
}

#[derive(Default)]
struct Moments {
    w: f64,
    wh: f64,
    wg: f64,
}

/// Computes the statistic over rows with positive weight. Weights act as
/// replication counts, so the null is the permutation distribution of the
/// expanded sample.
pub fn linear_statistic(g: &[f64], h: &[f64], w: &ResampleCounts) -> Result<LinearStatistic> {
    if g.len() != h.len() || g.len() != w.n() {
        return Err(Error::DimensionMismatch {
            expected: w.n(),
            got: g.len().max(h.len()),
        });
    }
    let rows: Vec<(f64, f64, f64)> = g
        .iter()
        .zip(h)
        .zip(w.counts())
        .filter(|(_, &c)| c > 0)
        .map(|((&gi, &hi), &c)| (gi, hi, f64::from(c)))
        .collect();
    if w.total() < 2 {
        return Err(Error::param("linear statistic needs total weight >= 2"));
    }
    Ok(statistic(&rows))
}

/// `rows` are `(g, h, w)` triples with `w > 0` and total weight at least 2.
pub(crate) fn statistic(rows: &[(f64, f64, f64)]) -> LinearStatistic {
    let mut m = Moments::default();
    for &(g, h, w) in rows {
        m.w += w;
        m.wh += w * h;
        m.wg += w * g;
    }
    let eh = m.wh / m.w;
    let eg = m.wg / m.w;
    let mut t = 0.0;
    let mut centred = 0.0;
    let mut vh = 0.0;
    let mut ssg = 0.0;
    for &(g, h, w) in rows {
        t += w * g * h;
        centred += w * g * (h - eh);
        vh += w * (h - eh) * (h - eh);
        ssg += w * (g - eg) * (g - eg);
    }
    vh /= m.w;
    let mu = eh * m.wg;
    // W/(W-1) Vh sum w g^2 - 1/(W-1) Vh (sum w g)^2, written in centred form.
    let sigma2 = m.w / (m.w - 1.0) * vh * ssg;
    finish(t, mu, centred, sigma2)
}

fn finish(t: f64, mu: f64, centred: f64, sigma2: f64) -> LinearStatistic {
    let c = if sigma2 > 0.0 {
        centred.abs() / sigma2.sqrt()
    } else {
        0.0
    };
    LinearStatistic {
        t,
        mu,
        sigma2: sigma2.max(0.0),
        c,
        p_value: if c > 0.0 { normal_two_sided_p(c) } else { 1.0 },
    }
}

/// Picks the candidate most associated with the response. The smallest
/// p-value is found as the largest standardized statistic, which stays
/// well-ordered after the p-values underflow to zero. Returns `None` when the
/// Bonferroni-adjusted p-value `min(1, p * |candidates|)` exceeds `alpha`.
pub fn select_variable(
    data: &Dataset,
    w: &ResampleCounts,
    candidates: &[usize],
    alpha: f64,
) -> Option<(usize, f64)> {
    assert_eq!(w.n(), data.n());
    let members: Vec<u32> = w
        .counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, _)| i as u32)
        .collect();
    let mut rows = Vec::new();
    select_among(data, w.counts(), &members, candidates, alpha, &mut rows)
}

fn select_among(
    data: &Dataset,
    weights: &[u32],
    members: &[u32],
    candidates: &[usize],
    alpha: f64,
    rows: &mut Vec<(f64, f64, f64)>,
) -> Option<(usize, f64)> {
    let y = data.response();
    let mut best: Option<(usize, LinearStatistic)> = None;
    for &j in candidates {
        let col = data.column(j);
        rows.clear();
        rows.extend(
            members
                .iter()
                .map(|&i| (col[i as usize], y[i as usize], f64::from(weights[i as usize]))),
        );
        let stat = statistic(rows);
        if best.is_none_or(|(_, b)| beats(stat.c, b.c)) {
            best = Some((j, stat));
        }
    }
    let (j, stat) = best?;
    let adjusted = (stat.p_value * candidates.len() as f64).min(1.0);
    (stat.c > 0.0 && adjusted <= alpha).then_some((j, stat.p_value))
}

/// Cut maximizing the standardized two-sample statistic; ties go to the
/// smallest cut. `None` when fewer than two distinct values are active.
pub fn best_split_ci(x: &[f64], y: &[f64], w: &ResampleCounts) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), w.n());
    scan_sorted(&sorted_active(x, y, w.counts()))
}

/// `rows` are `(x, y, w)` sorted by `x`. For `g = 1{x <= cut}` the centred
/// statistic is the left-hand sum of `w (y - Eh)` and the null variance is
/// `Vh W_L (W - W_L) / (W - 1)`.
pub(crate) fn scan_sorted(rows: &[(f64, f64, f64)]) -> Option<f64> {
    if rows.len() < 2 || rows[0].0 == rows[rows.len() - 1].0 {
        return None;
    }
    let total_w: f64 = rows.iter().map(|r| r.2).sum();
    let eh = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / total_w;
    let vh = rows
        .iter()
        .map(|&(_, y, w)| w * (y - eh) * (y - eh))
        .sum::<f64>()
        / total_w;

    let mut best: Option<(f64, f64)> = None;
    let mut left_w = 0.0;
    let mut left_s = 0.0;
    for k in 0..rows.len() - 1 {
        let (x, y, w) = rows[k];
        left_w += w;
        left_s += w * (y - eh);
        let next = rows[k + 1].0;
        if next == x {
            continue;
        }
        let sigma2 = vh * left_w * (total_w - left_w) / (total_w - 1.0);
        let c = if sigma2 > 0.0 {
            left_s.abs() / sigma2.sqrt()
        } else {
            0.0
        };
        if best.is_none_or(|(_, b)| beats(c, b)) {
            best = Some((midpoint(x, next), c));
        }
    }
    best.map(|(cut, _)| cut)
}

/// Fits one conditional-inference tree with `w` as case weights.
pub fn fit_citree<R: Rng + ?Sized>(
    data: &Dataset,
    w: &ResampleCounts,
    mtry: usize,
    min_node_size: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<TreeModel> {
    let presorted = Presorted::new(data);
    fit_citree_presorted(data, w, mtry, min_node_size, alpha, &presorted, rng)
}

pub(crate) fn fit_citree_presorted<R: Rng + ?Sized>(
    data: &Dataset,
    w: &ResampleCounts,
    mtry: usize,
    min_node_size: usize,
    alpha: f64,
    presorted: &Presorted,
    rng: &mut R,
) -> Result<TreeModel> {
    let params = GrowParams {
        mtry,
        min_node_size,
    };
    validate_grow(data, w, params)?;
    validate_alpha(alpha)?;
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    let tree = grow(data, w, params, Learner::Ci, presorted, rng, |node, rng| {
        choose_split(node, mtry, alpha, rng, &mut keys, &mut rows)
    });
    Ok(tree)
}

pub(crate) fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("alpha = {alpha} outside (0, 1)")))
    }
}

fn choose_split<R: Rng + ?Sized>(
    node: &NodeView<'_>,
    mtry: usize,
    alpha: f64,
    rng: &mut R,
    keys: &mut Vec<u64>,
    rows: &mut Vec<(f64, f64, f64)>,
) -> Option<SplitRule> {
    let candidates = draw_candidates(node.data.p(), mtry, rng);
    let (variable, _) = select_among(
        node.data,
        node.weights,
        node.members,
        &candidates,
        alpha,
        rows,
    )?;
    node.presorted
        .sorted_node(node.data, node.weights, variable, node.members, keys, rows);
    scan_sorted(rows).map(|cut| SplitRule { variable, cut })
}
