//! Recursive crossing sets `R_0^j(x)` (forward) and `R_p^j(x)` (backward).

use serde::Serialize;

use super::{find_crossings, CrossingOptions, Orientation};
use crate::error::{Error, Result};
use crate::geometry::{Lambda, RelaySystem};
use crate::periodic::SwitchingVector;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeOptions {
    pub crossing: CrossingOptions,
    /// Search windows are `(0, window_scale * T_j)`.
    pub window_scale: f64,
    /// Upper bound on the number of nodes in any stage.
    pub max_nodes: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            crossing: CrossingOptions::default(),
            window_scale: 1.0,
            max_nodes: 4096,
        }
    }
}

/// A node of a crossing tree.
///
/// `times` lists the crossing times from the root down to this node, in the
/// order they were taken (`t_1, t_2, ..` forward; `t_p, t_{p-1}, ..` backward).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNode {
    pub point: Vec<f64>,
    pub times: Vec<f64>,
    pub parent: Option<usize>,
    pub children: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingTree {
    pub root: Vec<f64>,
    pub orientation: Orientation,
    /// `labels[s]` is the boundary index `j` of `stages[s]`.
    pub labels: Vec<usize>,
    pub stages: Vec<Vec<TreeNode>>,
}

impl CrossingTree {
    pub fn leaves(&self) -> &[TreeNode] {
        self.stages.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    pub fn parity(&self) -> u8 {
        (self.leaf_count() % 2) as u8
    }

    /// False when some non-final node has no child, which the system
    /// hypotheses rule out for forward trees.
    pub fn is_consistent(&self) -> bool {
        let last = self.stages.len().saturating_sub(1);
        self.stages[..last]
            .iter()
            .all(|stage| !stage.is_empty() && stage.iter().all(|n| n.children > 0))
    }

    /// Leaves as switching vectors `(x_0, t_1, .., t_p)`.
    pub fn switching_vectors(&self) -> Vec<SwitchingVector> {
        self.leaves()
            .iter()
            .map(|leaf| match self.orientation {
                Orientation::Forward => SwitchingVector {
                    x: self.root.clone(),
                    t: leaf.times.clone(),
                },
                Orientation::Backward => SwitchingVector {
                    x: leaf.point.clone(),
                    t: leaf.times.iter().rev().copied().collect(),
                },
            })
            .collect()
    }

    /// Total number of nodes over all stages.
    pub fn node_count(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }
}

fn check_root(s: &RelaySystem, lambda: &Lambda, x: &[f64], region: usize, tol: f64) -> Result<()> {
    s.check_lambda(lambda)?;
    s.check_point(x)?;
    let g = s.region(region).level(x, lambda.get(region))?;
    if g.abs() > tol {
        return Err(Error::InvalidInput(format!(
            "tree root is not on boundary {region}: |f - lambda| = {:e}",
            g.abs()
        )));
    }
    Ok(())
}

fn expand(
    s: &RelaySystem,
    lambda: &Lambda,
    root: &[f64],
    orientation: Orientation,
    order: &[(usize, usize)],
    opts: &TreeOptions,
) -> Result<CrossingTree> {
    let mut stages = vec![vec![TreeNode {
        point: root.to_vec(),
        times: Vec::new(),
        parent: None,
        children: 0,
    }]];
    let mut labels = vec![if orientation == Orientation::Forward { 0 } else { s.modes() }];
    for &(flow_idx, target) in order {
        let flow = s.flow(flow_idx);
        let window = opts.window_scale * flow.horizon;
        let region = s.region(target);
        let prev = stages.last_mut().expect("root stage");
        let mut next = Vec::new();
        for (pi, node) in prev.iter_mut().enumerate() {
            let events = find_crossings(
                flow,
                region,
                lambda.get(target),
                &node.point,
                window,
                orientation,
                &opts.crossing,
            )
            .map_err(|e| match e {
                Error::DegenerateCrossing { t, margin, .. } => Error::DegenerateCrossing {
                    stage: target,
                    t,
                    margin,
                },
                other => other,
            })?;
            node.children = events.len();
            for ev in events {
                let mut times = node.times.clone();
                times.push(ev.t);
                next.push(TreeNode {
                    point: ev.point,
                    times,
                    parent: Some(pi),
                    children: 0,
                });
            }
            if next.len() > opts.max_nodes {
                return Err(Error::InvalidInput(format!(
                    "crossing tree stage {target} exceeds {} nodes",
                    opts.max_nodes
                )));
            }
        }
        stages.push(next);
        labels.push(target);
    }
    Ok(CrossingTree {
        root: root.to_vec(),
        orientation,
        labels,
        stages,
    })
}

/// Expands `R_0^1(x), .., R_0^p(x)` for `x` on `dM_0`. The leaves are exactly
/// the points of `N^lambda` over `x`.
pub fn forward_tree(
    s: &RelaySystem,
    lambda: &Lambda,
    x: &[f64],
    opts: &TreeOptions,
) -> Result<CrossingTree> {
    check_root(s, lambda, x, 0, opts.crossing.tol_level)?;
    let order: Vec<(usize, usize)> = (1..=s.modes()).map(|j| (j, j)).collect();
    expand(s, lambda, x, Orientation::Forward, &order, opts)
}

/// Expands `R_p^{p-1}(x), .., R_p^0(x)` for `x` on `dM_p` using backward flows.
/// The leaves are the points of `N^lambda` whose chain ends at `x`.
pub fn backward_tree(
    s: &RelaySystem,
    lambda: &Lambda,
    x: &[f64],
    opts: &TreeOptions,
) -> Result<CrossingTree> {
    let p = s.modes();
    check_root(s, lambda, x, p, opts.crossing.tol_level)?;
    let order: Vec<(usize, usize)> = (1..=p).rev().map(|j| (j, j - 1)).collect();
    expand(s, lambda, x, Orientation::Backward, &order, opts)
}

/// Leaf count of the forward tree mod 2.
pub fn parity_nu0(s: &RelaySystem, lambda: &Lambda, x: &[f64], opts: &TreeOptions) -> Result<u8> {
    forward_tree(s, lambda, x, opts).map(|t| t.parity())
}

/// Leaf count of the backward tree mod 2.
pub fn parity_nu1(s: &RelaySystem, lambda: &Lambda, x: &[f64], opts: &TreeOptions) -> Result<u8> {
    backward_tree(s, lambda, x, opts).map(|t| t.parity())
}

/// Parity of one crossing tree grown from a boundary sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleParity {
    pub point: Vec<f64>,
    /// `None` when a crossing on the way was tangential.
    pub leaves: Option<usize>,
    pub parity: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParitySurvey {
    pub nu0: Vec<SampleParity>,
    pub nu1: Vec<SampleParity>,
    /// Common parity of all non-degenerate forward trees, if they agree.
    pub parity_nu0: Option<u8>,
    pub parity_nu1: Option<u8>,
    /// Fraction of samples (both kinds) with a tangential crossing.
    pub degenerate_rate: f64,
}

fn common(v: &[SampleParity]) -> Option<u8> {
    let mut it = v.iter().filter_map(|s| s.parity);
    let first = it.next()?;
    it.all(|p| p == first).then_some(first)
}

/// Forward trees over `samples` random points of `dM_0` and backward trees
/// over as many points of `dM_p`, drawn from the `seed` stream.
pub fn parity_survey(
    s: &RelaySystem,
    lambda: &Lambda,
    samples: usize,
    seed: u64,
    opts: &TreeOptions,
) -> Result<ParitySurvey> {
    s.check_lambda(lambda)?;
    let p = s.modes();
    let mut out = [Vec::new(), Vec::new()];
    for (kind, (label, level)) in [(0, lambda.get(0)), (p, lambda.get(p))].into_iter().enumerate() {
        let mut rng = crate::rng::stream(seed, &format!("degree.boundary.{label}"));
        let pts = crate::geometry::sample_boundary(s.region(label), level, s.bbox(), samples, &mut rng)?;
        for b in pts {
            let tree = if kind == 0 {
                forward_tree(s, lambda, &b.point, opts)
            } else {
                backward_tree(s, lambda, &b.point, opts)
            };
            let (leaves, parity) = match tree {
                Ok(t) => (Some(t.leaf_count()), Some(t.parity())),
                Err(Error::DegenerateCrossing { .. }) | Err(Error::UnresolvedCrossing { .. }) => (None, None),
                Err(e) => return Err(e),
            };
            out[kind].push(SampleParity {
                point: b.point,
                leaves,
                parity,
            });
        }
    }
    let [nu0, nu1] = out;
    let total = (nu0.len() + nu1.len()).max(1);
    let degenerate = nu0.iter().chain(&nu1).filter(|s| s.parity.is_none()).count();
    Ok(ParitySurvey {
        parity_nu0: common(&nu0),
        parity_nu1: common(&nu1),
        degenerate_rate: degenerate as f64 / total as f64,
        nu0,
        nu1,
    })
}
