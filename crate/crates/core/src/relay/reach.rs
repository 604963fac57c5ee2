//! Branching exploration of all switching choices: point clouds for the
//! accessible set and an estimate of the omega-limit set.

use std::collections::HashMap;

use serde::Serialize;

use super::mode_crossings;
use crate::error::{Error, Result};
use crate::events::CrossingOptions;
use crate::geometry::{Lambda, RelaySystem};

#[derive(Debug, Clone, PartialEq)]
pub struct ReachOptions {
    /// Number of switches explored; arcs exist for levels `0..=depth`.
    pub depth: usize,
    /// Maximum number of branches kept per level.
    pub breadth: usize,
    /// Arc-length sampling step; defaults to bbox diameter / 512.
    pub spacing: Option<f64>,
    pub horizon_factor: f64,
    pub crossing: CrossingOptions,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions {
            depth: 3,
            breadth: 64,
            spacing: None,
            horizon_factor: 10.0,
            crossing: CrossingOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcInfo {
    pub level: usize,
    pub mode: usize,
    /// Crossing indices chosen from the root to the start of this arc.
    pub path: Vec<usize>,
    pub first: usize,
    pub len: usize,
}

/// Sampled points with adjacency edges along arcs and across switches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCloud {
    pub dim: usize,
    pub spacing: f64,
    pub points: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub arcs: Vec<ArcInfo>,
    /// Branches dropped by the breadth cap.
    pub pruned: usize,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when every point of `self` occurs bit-for-bit in `other`.
    pub fn is_subset_of(&self, other: &PointCloud) -> bool {
        let key = |p: &Vec<f64>| p.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
        let set: std::collections::HashSet<Vec<u64>> = other.points.iter().map(key).collect();
        self.points.iter().all(|p| set.contains(&key(p)))
    }
}

struct Branch {
    point: Vec<f64>,
    mode: usize,
    path: Vec<usize>,
    /// Cloud index of the switch point on the parent arc, if emitted.
    anchor: Option<usize>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Samples one arc roughly every `spacing` of arc length; the crossing times
/// are always included. Returns the points and, for each crossing, the
/// position of its sample.
fn sample_arc(
    s: &RelaySystem,
    mode: usize,
    x: &[f64],
    window: f64,
    crossing_times: &[f64],
    crossing_points: &[Vec<f64>],
    spacing: f64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let traj = s.flow(mode).trajectory(window, x)?;
    let sol = traj.solution();
    let mut candidates: Vec<(f64, Option<usize>)> = Vec::new();
    for i in 0..sol.step_count() {
        let (a, b) = (sol.times[i], sol.times[i + 1]);
        let chord = dist(&sol.states[i], &sol.states[i + 1]);
        let sub = ((4.0 * chord / spacing).ceil() as usize).max(1);
        for j in 1..=sub {
            let t = if j == sub { b } else { a + (b - a) * j as f64 / sub as f64 };
            candidates.push((t, None));
        }
    }
    for (c, &t) in crossing_times.iter().enumerate() {
        candidates.push((t, Some(c)));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.is_some().cmp(&a.1.is_some())));

    let mut points = vec![x.to_vec()];
    let mut marks = vec![0; crossing_times.len()];
    let mut prev = x.to_vec();
    let mut acc = 0.0;
    let last_t = sol.span();
    for (t, forced) in candidates {
        let y = match forced {
            Some(c) => crossing_points[c].clone(),
            None => sol.eval(t),
        };
        acc += dist(&prev, &y);
        prev = y.clone();
        if let Some(c) = forced {
            marks[c] = points.len();
            points.push(y);
            acc = 0.0;
        } else if acc >= spacing || t == last_t {
            points.push(y);
            acc = 0.0;
        }
    }
    Ok((points, marks))
}

/// Expands the branching tree and emits arcs for levels `from..=depth`.
fn explore(
    s: &RelaySystem,
    lambda: &Lambda,
    x0: &[f64],
    k0: usize,
    from: usize,
    opts: &ReachOptions,
) -> Result<PointCloud> {
    s.check_lambda(lambda)?;
    s.check_point(x0)?;
    if opts.breadth == 0 {
        return Err(Error::InvalidInput("breadth must be at least 1".into()));
    }
    let spacing = opts.spacing.unwrap_or(s.bbox().diameter() / 512.0);
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput("sampling spacing must be positive".into()));
    }
    let p = s.modes();
    let mut cloud = PointCloud {
        dim: s.dim(),
        spacing,
        points: Vec::new(),
        edges: Vec::new(),
        arcs: Vec::new(),
        pruned: 0,
    };
    let mut frontier = vec![Branch {
        point: x0.to_vec(),
        mode: k0 % p,
        path: Vec::new(),
        anchor: None,
    }];
    for level in 0..=opts.depth {
        let mut next = Vec::new();
        for br in &frontier {
            let window = opts.horizon_factor * s.flow(br.mode).horizon;
            let events = mode_crossings(s, lambda, br.mode, &br.point, window, &opts.crossing)?;
            let mut anchors = vec![None; events.len()];
            if level >= from {
                let times: Vec<f64> = events.iter().map(|e| e.t).collect();
                let pts: Vec<Vec<f64>> = events.iter().map(|e| e.point.clone()).collect();
                let (samples, marks) =
                    sample_arc(s, br.mode, &br.point, window, &times, &pts, spacing)?;
                let first = cloud.points.len();
                if let Some(a) = br.anchor {
                    cloud.edges.push((a, first));
                }
                for j in 1..samples.len() {
                    cloud.edges.push((first + j - 1, first + j));
                }
                for (c, m) in marks.into_iter().enumerate() {
                    anchors[c] = Some(first + m);
                }
                cloud.arcs.push(ArcInfo {
                    level,
                    mode: br.mode,
                    path: br.path.clone(),
                    first,
                    len: samples.len(),
                });
                cloud.points.extend(samples);
            }
            if level < opts.depth {
                for (c, ev) in events.into_iter().enumerate() {
                    let mut path = br.path.clone();
                    path.push(c);
                    next.push(Branch {
                        point: ev.point,
                        mode: (br.mode + 1) % p,
                        path,
                        anchor: anchors[c],
                    });
                }
            }
        }
        next.sort_by(|a, b| a.path.cmp(&b.path));
        if next.len() > opts.breadth {
            cloud.pruned += next.len() - opts.breadth;
            next.truncate(opts.breadth);
        }
        frontier = next;
    }
    Ok(cloud)
}

/// Points reachable from `x0` in at most `depth` switches, over every choice
/// of crossing within the horizon.
pub fn accessible_set(
    s: &RelaySystem,
    lambda: &Lambda,
    x0: &[f64],
    k0: usize,
    opts: &ReachOptions,
) -> Result<PointCloud> {
    explore(s, lambda, x0, k0, 0, opts)
}

/// Arcs after the first `m_discard` switches, up to `opts.depth` switches.
/// Larger `m_discard` gives a subset of the same tree, so estimates for
/// increasing `m_discard` are nested.
pub fn omega_limit_estimate(
    s: &RelaySystem,
    lambda: &Lambda,
    x0: &[f64],
    k0: usize,
    m_discard: usize,
    opts: &ReachOptions,
) -> Result<PointCloud> {
    if m_discard > opts.depth {
        return Err(Error::InvalidInput(format!(
            "cannot discard {m_discard} levels of a depth {} tree",
            opts.depth
        )));
    }
    explore(s, lambda, x0, k0, m_discard, opts)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// Connected components of the graph joining points closer than `delta`
/// together with the cloud's own edges. Returns `(connected, components)`.
pub fn check_connected(cloud: &PointCloud, delta: f64) -> (bool, usize) {
    let n = cloud.points.len();
    if n == 0 {
        return (true, 0);
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in &cloud.edges {
        union(&mut parent, a, b);
    }
    if delta > 0.0 {
        let cell = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / delta).floor() as i64).collect() };
        let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in cloud.points.iter().enumerate() {
            grid.entry(cell(p)).or_default().push(i);
        }
        let dim = cloud.dim;
        let offsets: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
            .map(|mut code| {
                (0..dim)
                    .map(|_| {
                        let o = (code % 3) as i64 - 1;
                        code /= 3;
                        o
                    })
                    .collect()
            })
            .collect();
        for (i, p) in cloud.points.iter().enumerate() {
            let c = cell(p);
            for off in &offsets {
                let key: Vec<i64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
                if let Some(list) = grid.get(&key) {
                    for &j in list {
                        if j > i && dist(p, &cloud.points[j]) < delta {
                            union(&mut parent, i, j);
                        }
                    }
                }
            }
        }
    }
    let mut roots = std::collections::HashSet::new();
    for i in 0..n {
        roots.insert(find(&mut parent, i));
    }
    (roots.len() == 1, roots.len())
}
