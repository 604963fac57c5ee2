//! Regions `M_i^lambda = {f_i >= lambda_i}` and the relay system built on them.

use rand::Rng as _;
use serde::Serialize;

use crate::dynamics::Flow;
use crate::error::{Error, Result};
use crate::expr::{BinOp, Expression, Func, Node};
use crate::rng::{self, Rng};

/// Tolerance on `|f(x) - lambda|` for a point to count as lying on a boundary.
pub const TOL_LEVEL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidInput("bounding box corners differ in dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidInput("bounding box must satisfy lo < hi componentwise".into()));
        }
        Ok(BoundingBox { lo, hi })
    }

    pub fn cube(n: usize, half_width: f64) -> Self {
        BoundingBox {
            lo: vec![-half_width; n],
            hi: vec![half_width; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| rng.random_range(*a..*b))
            .collect()
    }
}

/// Level function `f_i` of region `i` with its default offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub f: Expression,
    pub lambda: f64,
    pub index: usize,
    pub eps_reg: f64,
}

impl Region {
    pub fn new(f: Expression, index: usize) -> Self {
        Region {
            f,
            lambda: 0.0,
            index,
            eps_reg: 1e-6,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// `f(x) - lambda`: positive inside, zero on the boundary, negative outside.
    pub fn level(&self, x: &[f64], lambda: f64) -> Result<f64> {
        Ok(self.f.evaluate(x)? - lambda)
    }

    /// [`Region::level`] at the region's own offset.
    pub fn signed_level(&self, x: &[f64]) -> Result<f64> {
        self.level(x, self.lambda)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.f.gradient(x)?)
    }
}

/// A boundary point together with `|grad f|` there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySample {
    pub point: Vec<f64>,
    pub grad_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Newton iteration along the gradient onto `{f = lambda}`.
fn project_newton(region: &Region, lambda: f64, mut x: Vec<f64>, max_iter: usize) -> Option<Vec<f64>> {
    let mut g = region.level(&x, lambda).ok()?;
    for _ in 0..max_iter {
        if g.abs() <= 1e-14 {
            break;
        }
        let grad = region.gradient(&x).ok()?;
        let gn2: f64 = grad.iter().map(|a| a * a).sum();
        if !(gn2 > 0.0) {
            return None;
        }
        let cand: Vec<f64> = x.iter().zip(&grad).map(|(a, d)| a - g * d / gn2).collect();
        let gc = region.level(&cand, lambda).ok()?;
        if !(gc.abs() < g.abs()) {
            break;
        }
        x = cand;
        g = gc;
    }
    (g.abs() <= TOL_LEVEL).then_some(x)
}

fn bisect_segment(region: &Region, lambda: f64, inside: &[f64], outside: &[f64]) -> Option<Vec<f64>> {
    let mut a = inside.to_vec();
    let mut b = outside.to_vec();
    let mut mid = a.clone();
    for _ in 0..60 {
        for j in 0..a.len() {
            mid[j] = 0.5 * (a[j] + b[j]);
        }
        let g = region.level(&mid, lambda).ok()?;
        if g == 0.0 {
            break;
        }
        if g > 0.0 {
            a.copy_from_slice(&mid);
        } else {
            b.copy_from_slice(&mid);
        }
        if norm(&a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>()) < 1e-9 {
            break;
        }
    }
    Some(mid)
}

/// Draws `m` points on `{f = lambda}` inside `bbox`.
///
/// Random inside/outside pairs from the box are bisected to a sign change and
/// then polished by Newton steps along `grad f`. Points with gradient norm
/// below the region's regularity floor are discarded.
pub fn sample_boundary(
    region: &Region,
    lambda: f64,
    bbox: &BoundingBox,
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<BoundarySample>> {
    const POOL: usize = 4096;
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for _ in 0..POOL {
        let x = bbox.sample(rng);
        match region.level(&x, lambda) {
            Ok(g) if g > 0.0 => inside.push(x),
            Ok(g) if g < 0.0 => outside.push(x),
            _ => {}
        }
    }
    let bracketing = !inside.is_empty() && !outside.is_empty();
    let budget = 64 * m + 1024;
    let mut out = Vec::with_capacity(m);
    let mut attempts = 0;
    while out.len() < m && attempts < budget {
        attempts += 1;
        let start = if bracketing {
            let a = &inside[rng.random_range(0..inside.len())];
            let b = &outside[rng.random_range(0..outside.len())];
            match bisect_segment(region, lambda, a, b) {
                Some(x) => x,
                None => continue,
            }
        } else {
            bbox.sample(rng)
        };
        let Some(x) = project_newton(region, lambda, start, 60) else {
            continue;
        };
        if !bbox.contains(&x) {
            continue;
        }
        let Ok(grad) = region.gradient(&x) else {
            continue;
        };
        let grad_norm = norm(&grad);
        if grad_norm < region.eps_reg {
            continue;
        }
        out.push(BoundarySample { point: x, grad_norm });
    }
    if out.len() < m {
        return Err(Error::BoundaryNotFound {
            region: region.index,
        });
    }
    Ok(out)
}

/// Rejection sample of `m` points with `f >= lambda` inside `bbox`. Returns
/// fewer points if the budget runs out.
pub fn sample_interior(
    region: &Region,
    lambda: f64,
    bbox: &BoundingBox,
    m: usize,
    rng: &mut Rng,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(m);
    for _ in 0..(4096 * m.max(1)) {
        if out.len() >= m {
            break;
        }
        let x = bbox.sample(rng);
        if matches!(region.level(&x, lambda), Ok(g) if g >= 0.0) {
            out.push(x);
        }
    }
    out
}

/// Composes `e` with the saturation `s(u) = (eps/3) tanh(3u/eps)`.
///
/// `s` is odd and increasing with `s(0) = 0`, `s'(0) = 1` and `|s| < eps/3`,
/// so the zero set and its regularity are unchanged while values far from the
/// boundary stay bounded.
pub fn saturate_level(e: &Expression, eps: f64) -> Result<Expression> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("saturation width must be positive, got {eps}")));
    }
    let inner = Node::binary(BinOp::Mul, Node::constant(3.0 / eps), e.node().clone());
    let node = Node::binary(
        BinOp::Mul,
        Node::constant(eps / 3.0),
        Node::call(Func::Tanh, inner),
    );
    Ok(Expression::from_node(node, e.dimension())?)
}

/// Offsets `(lambda_0, ..., lambda_p)`; `lambda_0` and `lambda_p` both apply to `f_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lambda(pub Vec<f64>);

impl Lambda {
    pub fn zeros(p: usize) -> Self {
        Lambda(vec![0.0; p + 1])
    }

    pub fn uniform(p: usize, v: f64) -> Self {
        Lambda(vec![v; p + 1])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Whether `lambda_p == lambda_0`, i.e. the switching chain closes on one surface.
    pub fn is_closed(&self) -> bool {
        self.0.first() == self.0.last()
    }

    /// `self + s (other - self)`.
    pub fn lerp(&self, other: &Lambda, s: f64) -> Lambda {
        Lambda(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| if s == 1.0 { *b } else { a + s * (b - a) })
                .collect(),
        )
    }
}

/// A cyclic relay of `p` flows on `R^n`.
///
/// Flows are indexed `1..=p` as `F_1..F_p`; mode `k` in `Z_p` runs `F_k` with
/// `F_0 = F_p`. Regions are indexed `0..p`, and index `p` denotes `f_0` again.
#[derive(Debug, Clone)]
pub struct RelaySystem {
    n: usize,
    p: usize,
    flows: Vec<Flow>,
    regions: Vec<Region>,
    lambda_p: f64,
    beta: Option<usize>,
    bbox: BoundingBox,
}

impl RelaySystem {
    pub fn new(
        flows: Vec<Flow>,
        regions: Vec<Region>,
        lambda_p: f64,
        beta: Option<usize>,
        bbox: BoundingBox,
    ) -> Result<Self> {
        let p = flows.len();
        if p < 2 {
            return Err(Error::InvalidInput(format!("a relay needs p > 1 modes, got {p}")));
        }
        if regions.len() != p {
            return Err(Error::InvalidInput(format!(
                "expected {p} regions, got {}",
                regions.len()
            )));
        }
        let n = bbox.dim();
        if n < 2 {
            return Err(Error::InvalidInput("dimension must be at least 2".into()));
        }
        for (k, fl) in flows.iter().enumerate() {
            if fl.dim() != n {
                return Err(Error::InvalidInput(format!(
                    "flow {} has dimension {}, expected {n}",
                    k + 1,
                    fl.dim()
                )));
            }
        }
        for r in &regions {
            if r.f.dimension() != n {
                return Err(Error::InvalidInput(format!(
                    "region {} has dimension {}, expected {n}",
                    r.index,
                    r.f.dimension()
                )));
            }
        }
        if let Some(b) = beta {
            if b > p {
                return Err(Error::InvalidInput(format!("beta = {b} is not in 0..={p}")));
            }
        }
        let beta = beta.map(|b| if b == 0 { p } else { b });
        Ok(RelaySystem {
            n,
            p,
            flows,
            regions,
            lambda_p,
            beta,
            bbox,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> usize {
        self.p
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn beta(&self) -> Option<usize> {
        self.beta
    }

    /// `F_k` for `k` in `1..=p`, or any integer read cyclically.
    pub fn flow(&self, k: usize) -> &Flow {
        &self.flows[(k + self.p - 1) % self.p]
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    /// Region `i` for `i` in `0..=p` (index `p` is region 0).
    pub fn region(&self, i: usize) -> &Region {
        &self.regions[i % self.p]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Offsets stored with the system.
    pub fn default_lambda(&self) -> Lambda {
        let mut v: Vec<f64> = self.regions.iter().map(|r| r.lambda).collect();
        v.push(self.lambda_p);
        Lambda(v)
    }

    pub fn check_lambda(&self, lambda: &Lambda) -> Result<()> {
        if lambda.0.len() != self.p + 1 {
            return Err(Error::InvalidInput(format!(
                "lambda has {} entries, expected p + 1 = {}",
                lambda.0.len(),
                self.p + 1
            )));
        }
        if lambda.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("lambda entries must be finite".into()));
        }
        Ok(())
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "point has dimension {}, expected {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Boundary samples per region.
    pub samples: usize,
    /// Number of grid times on `[T_beta, t_max]`.
    pub grid: usize,
    /// `t_max = t_max_factor * T_beta`.
    pub t_max_factor: f64,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            samples: 256,
            grid: 16,
            t_max_factor: 3.0,
            seed: 0,
        }
    }
}

/// `margin > 0` means the condition holds on every sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub k: usize,
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaCheck {
    pub beta: usize,
    pub t_max: f64,
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityCheck {
    pub index: usize,
    pub min_gradient_norm: f64,
    pub passed: bool,
}

/// Sampled margins for the system hypotheses.
///
/// * `disjoint[k-1]`: max of `f_k - lambda_k` over `dM_{k-1}` (must be < 0).
/// * `entry[k-1]`: min of `f_k(F_k(T_k, x)) - lambda_k` over `x` in `dM_{k-1}` (must be > 0).
/// * `absorbing`: per candidate `beta`, min of `f_beta(F_beta(t, x)) - lambda_beta`
///   over `x` in `M_{beta-1}` and grid times `t` in `[T_beta, t_max]` (must be > 0).
/// * `regularity`: min `|grad f_i|` on `dM_i`, `i = 0..=p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub lambda: Lambda,
    pub samples: usize,
    pub disjoint: Vec<ConditionCheck>,
    pub entry: Vec<ConditionCheck>,
    pub absorbing: Vec<BetaCheck>,
    pub beta: Option<usize>,
    pub regularity: Vec<RegularityCheck>,
}

impl ValidationReport {
    pub fn disjoint_ok(&self) -> bool {
        self.disjoint.iter().all(|c| c.passed)
    }

    pub fn entry_ok(&self) -> bool {
        self.entry.iter().all(|c| c.passed)
    }

    pub fn absorbing_ok(&self) -> bool {
        self.beta.is_some()
    }

    pub fn regularity_ok(&self) -> bool {
        self.regularity.iter().all(|c| c.passed)
    }

    pub fn passed(&self) -> bool {
        self.disjoint_ok() && self.entry_ok() && self.absorbing_ok() && self.regularity_ok()
    }

    /// Human-readable list of failed checks.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in self.disjoint.iter().filter(|c| !c.passed) {
            out.push(format!("(i) k={}: margin {:.6e}", c.k, c.margin));
        }
        for c in self.entry.iter().filter(|c| !c.passed) {
            out.push(format!("(ii) k={}: margin {:.6e}", c.k, c.margin));
        }
        if !self.absorbing_ok() {
            for c in &self.absorbing {
                out.push(format!("(Mbeta) beta={}: margin {:.6e}", c.beta, c.margin));
            }
        }
        for c in self.regularity.iter().filter(|c| !c.passed) {
            out.push(format!("regularity i={}: min |grad f| {:.6e}", c.index, c.min_gradient_norm));
        }
        out
    }
}

/// Checks the system hypotheses at offsets `lambda` by sampling.
pub fn validate_system(
    s: &RelaySystem,
    lambda: &Lambda,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    s.check_lambda(lambda)?;
    let p = s.modes();
    let m = opts.samples.max(1);

    let mut boundary: Vec<Vec<BoundarySample>> = Vec::with_capacity(p + 1);
    for i in 0..=p {
        let mut rng = rng::stream(opts.seed, &format!("validate.boundary.{i}"));
        boundary.push(sample_boundary(s.region(i), lambda.get(i), s.bbox(), m, &mut rng)?);
    }

    let mut disjoint = Vec::with_capacity(p);
    let mut entry = Vec::with_capacity(p);
    for k in 1..=p {
        let target = s.region(k);
        let lk = lambda.get(k);
        let flow = s.flow(k);
        let mut worst_in = f64::NEG_INFINITY;
        let mut worst_entry = f64::INFINITY;
        for sample in &boundary[k - 1] {
            worst_in = worst_in.max(target.level(&sample.point, lk)?);
            let y = flow.flow_map(flow.horizon, &sample.point)?;
            worst_entry = worst_entry.min(target.level(&y, lk)?);
        }
        disjoint.push(ConditionCheck {
            k,
            margin: -worst_in,
            passed: worst_in < 0.0,
        });
        entry.push(ConditionCheck {
            k,
            margin: worst_entry,
            passed: worst_entry > 0.0,
        });
    }

    let candidates: Vec<usize> = match s.beta() {
        Some(b) => vec![b],
        None => (1..=p).collect(),
    };
    let grid = opts.grid.max(2);
    let mut absorbing = Vec::with_capacity(candidates.len());
    for &b in &candidates {
        let flow = s.flow(b);
        let t_lo = flow.horizon;
        let t_max = (opts.t_max_factor.max(1.0) * t_lo).min(10.0 * t_lo);
        let mut rng = rng::stream(opts.seed, &format!("validate.interior.{}", b - 1));
        let interior = sample_interior(s.region(b - 1), lambda.get(b - 1), s.bbox(), m / 2 + 1, &mut rng);
        let starts = boundary[b - 1]
            .iter()
            .map(|bs| bs.point.clone())
            .take(m / 2 + 1)
            .chain(interior);
        let target = s.region(b);
        let lb = lambda.get(b);
        let mut worst = f64::INFINITY;
        for x in starts {
            let traj = flow.trajectory(t_max, &x)?;
            for j in 0..grid {
                let t = t_lo + (t_max - t_lo) * j as f64 / (grid - 1) as f64;
                let y = traj.eval(t.min(traj.end_time()))?;
                worst = worst.min(target.level(&y, lb)?);
            }
        }
        absorbing.push(BetaCheck {
            beta: b,
            t_max,
            margin: worst,
            passed: worst > 0.0,
        });
    }
    let beta = absorbing.iter().find(|c| c.passed).map(|c| c.beta);

    let regularity = boundary
        .iter()
        .enumerate()
        .map(|(i, samples)| {
            let min = samples.iter().map(|b| b.grad_norm).fold(f64::INFINITY, f64::min);
            RegularityCheck {
                index: i,
                min_gradient_norm: min,
                passed: min >= s.region(i).eps_reg,
            }
        })
        .collect();

    Ok(ValidationReport {
        lambda: lambda.clone(),
        samples: m,
        disjoint,
        entry,
        absorbing,
        beta,
        regularity,
    })
}
