//! Contour tracing on a price slice and the contour-integration Bayes update.
//!
//! A slice is the G×G restriction of the logit price tensor with one agent's
//! own coordinate fixed. Contours of a level are traced by two orthogonal
//! sweeps with linear interpolation of the logit slice along the off-grid
//! axis; crossings up to one grid spacing beyond the boundary are accepted by
//! extrapolating the edge segment.

use crate::grid::log_density;
use crate::numerics::logsumexp;
use crate::Real;

/// Which axis a sweep line runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    /// Line fixes the first slice axis, crossing coordinate on the second.
    Row,
    /// Line fixes the second slice axis, crossing coordinate on the first.
    Col,
}

/// One contour crossing: the sweep line it was found on and the interpolated
/// off-axis coordinate (which may sit up to one spacing outside the grid).
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub sweep: Sweep,
    pub line: usize,
    pub coord: Real,
}

/// Traced contour of one slice at one level.
#[derive(Debug, Clone)]
pub struct ContourTrace {
    pub level_logit: Real,
    pub crossings: Vec<Crossing>,
    pub rows_hit: usize,
    pub cols_hit: usize,
}

impl ContourTrace {
    pub fn is_empty(&self) -> bool {
        self.crossings.is_empty()
    }
    /// Active-cell rule: at least two crossings in one sweep direction.
    pub fn is_active(&self) -> bool {
        self.rows_hit >= 2 || self.cols_hit >= 2
    }
}

/// Borrowed view of a slice: `value(a, b)` is the logit price with the first
/// sweep axis at node `a` and the second at node `b`.
pub struct SliceView<'a> {
    pub get: &'a dyn Fn(usize, usize) -> Real,
    pub size: usize,
}

/// Scan one line of `g` values for crossings of `level`, linearly
/// interpolated; extrapolation band of one spacing at both ends.
fn line_crossings(
    values: &[Real],
    nodes: &[Real],
    level: Real,
    out: &mut Vec<Real>,
) {
    let g = values.len();
    let du = nodes[1] - nodes[0];
    out.clear();
    // interior segments, all sign changes
    for s in 0..g - 1 {
        let (a, b) = (values[s], values[s + 1]);
        if (a - level) * (b - level) <= 0.0 && a != b {
            let fr = (level - a) / (b - a);
            if (0.0..=1.0).contains(&fr) {
                out.push(nodes[s] + fr * du);
            }
        }
    }
    if !out.is_empty() {
        return;
    }
    // boundary extrapolation, one spacing
    let (a0, a1) = (values[0], values[1]);
    if level < a0.min(a1) && a1 != a0 {
        let fr = (level - a0) / (a1 - a0);
        if (-1.0..0.0).contains(&fr) {
            out.push(nodes[0] + fr * du);
            return;
        }
    }
    let (b0, b1) = (values[g - 2], values[g - 1]);
    if level > b0.max(b1) && b1 != b0 {
        let fr = (level - b0) / (b1 - b0);
        if (1.0..=2.0).contains(&fr) {
            out.push(nodes[g - 2] + fr * du);
        }
    }
}

/// Two-pass contour trace of `slice` at logit `level`.
pub fn trace_contour(slice: &SliceView<'_>, nodes: &[Real], level: Real) -> ContourTrace {
    let g = slice.size;
    let mut crossings = Vec::with_capacity(2 * g);
    let mut buf: Vec<Real> = Vec::with_capacity(4);
    let mut line_vals = vec![0.0; g];
    let (mut rows_hit, mut cols_hit) = (0usize, 0usize);
    for a in 0..g {
        for b in 0..g {
            line_vals[b] = (slice.get)(a, b);
        }
        line_crossings(&line_vals, nodes, level, &mut buf);
        if !buf.is_empty() {
            rows_hit += 1;
        }
        for &c in &buf {
            crossings.push(Crossing { sweep: Sweep::Row, line: a, coord: c });
        }
    }
    for b in 0..g {
        for a in 0..g {
            line_vals[a] = (slice.get)(a, b);
        }
        line_crossings(&line_vals, nodes, level, &mut buf);
        if !buf.is_empty() {
            cols_hit += 1;
        }
        for &c in &buf {
            crossings.push(Crossing { sweep: Sweep::Col, line: b, coord: c });
        }
    }
    ContourTrace { level_logit: level, crossings, rows_hit, cols_hit }
}

/// Log contour accumulators (ln A₁, ln A₀) of one trace: every crossing
/// contributes the product of the two peer densities, summed over both sweeps.
/// `tau_a`/`tau_b` are the precisions on the slice's first/second axis.
pub fn contour_log_accumulators(
    trace: &ContourTrace,
    nodes: &[Real],
    tau_a: Real,
    tau_b: Real,
) -> Option<(Real, Real)> {
    if trace.is_empty() {
        return None;
    }
    let mut c1 = Vec::with_capacity(trace.crossings.len());
    let mut c0 = Vec::with_capacity(trace.crossings.len());
    for cr in &trace.crossings {
        let (la1, la0) = match cr.sweep {
            Sweep::Row => (
                log_density(tau_a, 1, nodes[cr.line]) + log_density(tau_b, 1, cr.coord),
                log_density(tau_a, 0, nodes[cr.line]) + log_density(tau_b, 0, cr.coord),
            ),
            Sweep::Col => (
                log_density(tau_a, 1, cr.coord) + log_density(tau_b, 1, nodes[cr.line]),
                log_density(tau_a, 0, cr.coord) + log_density(tau_b, 0, nodes[cr.line]),
            ),
        };
        c1.push(la1);
        c0.push(la0);
    }
    Some((logsumexp(&c1), logsumexp(&c0)))
}
