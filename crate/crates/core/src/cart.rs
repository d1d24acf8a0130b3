//! CART regression trees: at each node, the `(variable, cut)` pair with the
//! smallest weighted within-child sum of squared errors wins.
//!
//! Ties go to the smallest variable index, then the smallest cut.

use rand::Rng;

use crate::data::Dataset;
use crate::error::Result;
use crate::resampling::ResampleCounts;
use crate::tree::{
    draw_candidates, grow, midpoint, sorted_active, validate_grow, GrowParams, Learner, NodeView,
    Presorted, SplitRule, TreeModel,
};

pub const DEFAULT_MIN_NODE_SIZE: usize = 5;

/// Best SSE cut for one feature. Only rows with positive weight take part;
/// candidate cuts are midpoints between consecutive distinct values. Returns
/// `(cut, sse_after)` or `None` when fewer than two distinct values are active.
pub fn best_split_sse(x: &[f64], y: &[f64], w: &ResampleCounts) -> Option<(f64, f64)> {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), w.n());
    scan_sorted(&sorted_active(x, y, w.counts()))
}

/// Relative SSE difference below which two splits count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

pub(crate) fn scan_sorted(rows: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    scan(rows).map(|s| (s.cut, s.sse))
}

struct Scan {
    cut: f64,
    sse: f64,
    node_sse: f64,
}

/// Scans rows sorted by `x`. Responses are centred on the node mean first so
/// that the prefix sums do not cancel catastrophically.
fn scan(rows: &[(f64, f64, f64)]) -> Option<Scan> {
    if rows.len() < 2 || rows[0].0 == rows[rows.len() - 1].0 {
        return None;
    }
    let total_w: f64 = rows.iter().map(|r| r.2).sum();
    let mean = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / total_w;
    let mut total_s = 0.0;
    let mut total_ss = 0.0;
    for &(_, y, w) in rows {
        let r = y - mean;
        total_s += w * r;
        total_ss += w * r * r;
    }

    let tol = TIE_TOLERANCE * total_ss;
    let mut best: Option<(f64, f64)> = None;
    let mut left_w = 0.0;
    let mut left_s = 0.0;
    for k in 0..rows.len() - 1 {
        let (x, y, w) = rows[k];
        left_w += w;
        left_s += w * (y - mean);
        let next = rows[k + 1].0;
        if next == x {
            continue;
        }
        let right_w = total_w - left_w;
        let right_s = total_s - left_s;
        let explained = left_s * left_s / left_w + right_s * right_s / right_w;
        let sse = (total_ss - explained).max(0.0);
        if best.is_none_or(|(_, b)| sse < b - tol) {
            best = Some((midpoint(x, next), sse));
        }
    }
    best.map(|(cut, sse)| Scan {
        cut,
        sse,
        node_sse: total_ss,
    })
}

/// Fits one CART tree with `w` as case weights.
pub fn fit_cart<R: Rng + ?Sized>(
    data: &Dataset,
    w: &ResampleCounts,
    mtry: usize,
    min_node_size: usize,
    rng: &mut R,
) -> Result<TreeModel> {
    let presorted = Presorted::new(data);
    fit_cart_presorted(data, w, mtry, min_node_size, &presorted, rng)
}

pub(crate) fn fit_cart_presorted<R: Rng + ?Sized>(
    data: &Dataset,
    w: &ResampleCounts,
    mtry: usize,
    min_node_size: usize,
    presorted: &Presorted,
    rng: &mut R,
) -> Result<TreeModel> {
    let params = GrowParams {
        mtry,
        min_node_size,
    };
    validate_grow(data, w, params)?;
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    let tree = grow(data, w, params, Learner::Cart, presorted, rng, |node, rng| {
        choose_split(node, mtry, rng, &mut keys, &mut rows)
    });
    Ok(tree)
}

fn choose_split<R: Rng + ?Sized>(
    node: &NodeView<'_>,
    mtry: usize,
    rng: &mut R,
    keys: &mut Vec<u64>,
    rows: &mut Vec<(f64, f64, f64)>,
) -> Option<SplitRule> {
    let candidates = draw_candidates(node.data.p(), mtry, rng);
    let mut best: Option<(SplitRule, f64)> = None;
    let mut parent_sse = 0.0f64;
    for variable in candidates {
        node.presorted
            .sorted_node(node.data, node.weights, variable, node.members, keys, rows);
        if let Some(s) = scan(rows) {
            parent_sse = s.node_sse;
            let tol = TIE_TOLERANCE * s.node_sse;
            if best.is_none_or(|(_, b)| s.sse < b - tol) {
                best = Some((SplitRule { variable, cut: s.cut }, s.sse));
            }
        }
    }
    // Only splits that strictly reduce the node SSE are accepted.
    best.filter(|&(_, sse)| sse < parent_sse * (1.0 - TIE_TOLERANCE))
        .map(|(rule, _)| rule)
}
