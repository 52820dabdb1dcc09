//! Min–max test problem families with controllable support-scenario
//! structure, and a grid-backed well-placement objective over per-scenario
//! injectability fields.
//!
//! All five analytic families place the optimum at the origin. The
//! reference value F(x*) is always computed by evaluating at x*, not
//! assumed to be zero: the fourth family has F(0) = 5/K − 25/K² and the
//! fifth has F(0) = −1/(m−1)² for even m.

use crate::worstcase::WorstCaseProblem;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem parameters: {0}")]
    InvalidParams(String),
    #[error("interpolation point ({u}, {v}) outside grid [1, {rows}] x [1, {cols}]")]
    PointOutOfRange { u: f64, v: f64, rows: usize, cols: usize },
    #[error("well-placement design vector must have length 6, got {0}")]
    BadWellVector(usize),
    #[error("malformed grid header: {0}")]
    MalformedHeader(String),
    #[error("grid value count mismatch: expected {expected}, got {got}")]
    WrongValueCount { expected: usize, got: usize },
    #[error("grid contains a non-finite or negative value {value} at flat index {index}")]
    BadGridValue { index: usize, value: f64 },
    #[error("cannot parse grid value `{0}`")]
    BadGridToken(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The analytic families and the grid-based application problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    P1,
    P2,
    P3,
    P4,
    P5,
    WellPlacement,
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Family::P1),
            "p2" => Ok(Family::P2),
            "p3" => Ok(Family::P3),
            "p4" => Ok(Family::P4),
            "p5" => Ok(Family::P5),
            "well" | "wellplacement" => Ok(Family::WellPlacement),
            other => Err(format!("unknown problem family `{other}`")),
        }
    }
}

/// Parameters of an analytic problem instance.
#[derive(Debug, Clone, Copy)]
pub struct ProblemParams {
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub k: Option<usize>,
    pub l: Option<usize>,
}

impl ProblemParams {
    pub fn new(family: Family, n: usize, m: usize) -> Self {
        ProblemParams {
            family,
            n,
            m,
            k: None,
            l: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_l(mut self, l: usize) -> Self {
        self.l = Some(l);
        self
    }

    fn err(msg: impl Into<String>) -> ProblemError {
        ProblemError::InvalidParams(msg.into())
    }

    /// Checks the family invariants and resolves the derived group counts.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let (n, m) = (self.n, self.m);
        match self.family {
            Family::P1 | Family::P2 => {
                if n < 2 || m < 2 {
                    return Err(Self::err("first two families need n >= 2 and m >= 2"));
                }
                let k = self.k.ok_or_else(|| Self::err("K is required"))?;
                if k < 2 || k > m {
                    return Err(Self::err(format!("K must satisfy 2 <= K <= m, got K={k} m={m}")));
                }
            }
            Family::P3 => {
                if n < 1 || m < 2 * n {
                    return Err(Self::err("third family needs m >= 2n"));
                }
                let derived = m.div_ceil(2 * n);
                if let Some(k) = self.k {
                    if k != derived {
                        return Err(Self::err(format!(
                            "K={k} inconsistent with ceil(m/2n)={derived}"
                        )));
                    }
                }
            }
            Family::P4 => {
                let l = self.l.ok_or_else(|| Self::err("L is required"))?;
                if n < 1 || l < 2 || m < l || m % l != 0 {
                    return Err(Self::err(format!(
                        "fourth family needs m >= L >= 2 with L dividing m, got m={m} L={l}"
                    )));
                }
                if let Some(k) = self.k {
                    if k != m / l {
                        return Err(Self::err(format!("K={k} inconsistent with m/L={}", m / l)));
                    }
                }
            }
            Family::P5 => {
                if n < 1 || m < 2 {
                    return Err(Self::err("fifth family needs n >= 1 and m >= 2"));
                }
            }
            Family::WellPlacement => {
                return Err(Self::err(
                    "well placement is built from a grid stack, not analytic parameters",
                ));
            }
        }
        Ok(())
    }

    /// Group count K: given for P1/P2, ⌈m/2n⌉ for P3, m/L for P4.
    pub fn group_count(&self) -> usize {
        match self.family {
            Family::P1 | Family::P2 => self.k.expect("validated"),
            Family::P3 => self.m.div_ceil(2 * self.n),
            Family::P4 => self.m / self.l.expect("validated"),
            _ => 0,
        }
    }

    /// The analytically known support set around the origin.
    pub fn support_at_optimum(&self) -> Vec<usize> {
        match self.family {
            Family::P1 | Family::P2 => (1..=self.k.expect("validated")).collect(),
            Family::P3 => (1..=(2 * self.n).min(self.m)).collect(),
            Family::P4 => (1..=self.l.expect("validated")).collect(),
            Family::P5 => {
                if self.m % 2 == 1 {
                    vec![(self.m - 1) / 2 + 1]
                } else {
                    vec![self.m / 2, self.m / 2 + 1]
                }
            }
            Family::WellPlacement => Vec::new(),
        }
    }
}

fn dot2(x: &[f64], c: f64, s: f64) -> f64 {
    x[0] * c + x[1] * s
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// cos²ω / sin²ω, the stable form of (tan ω)⁻².
fn alpha_of(omega: f64) -> f64 {
    let (s, c) = omega.sin_cos();
    (c * c) / (s * s)
}

pub fn p1_eval(x: &[f64], s: usize, params: &ProblemParams) -> f64 {
    let k = params.k.expect("K required");
    if s <= k {
        let omega = std::f64::consts::PI / k as f64;
        let (vs, vc) = (omega * s as f64).sin_cos();
        let inner = dot2(x, vc, vs);
        norm_sq(x) - (1.0 + alpha_of(omega)) * inner * inner
    } else {
        let omega = 2.0 * std::f64::consts::PI / (params.m - k) as f64;
        let (vs, vc) = (omega * (s - k) as f64).sin_cos();
        let dx0 = x[0] - vc;
        let dx1 = x[1] - vs;
        let tail: f64 = x[2..].iter().map(|v| v * v).sum();
        2.0 * (dx0 * dx0 + dx1 * dx1 + tail) - 8.0
    }
}

pub fn p2_eval(x: &[f64], s: usize, params: &ProblemParams) -> f64 {
    let k = params.k.expect("K required");
    if s <= k {
        p1_eval(x, s, params)
    } else {
        let omega = 2.0 * std::f64::consts::PI / (params.m - k) as f64;
        let (vs, vc) = (omega * (s - k) as f64).sin_cos();
        let dx0 = x[0] - vc;
        let dx1 = x[1] - vs;
        let tail: f64 = x[2..].iter().map(|v| v * v).sum();
        (dx0 * dx0 + dx1 * dx1 + tail).sqrt() - 2.0
    }
}

/// α̃_k = 5k/K and the β̃ recursion β̃_1 = α̃_1²,
/// β̃_k = β̃_{k−1} + (α̃_k + α̃_{k−1})² − (2 α̃_{k−1})².
fn p3_alpha_beta(k: usize, group_count: usize) -> (f64, f64) {
    let alpha = |j: usize| 5.0 * j as f64 / group_count as f64;
    let mut beta = alpha(1) * alpha(1);
    for j in 2..=k {
        let a = alpha(j);
        let prev = alpha(j - 1);
        beta += (a + prev) * (a + prev) - (2.0 * prev) * (2.0 * prev);
    }
    (alpha(k), beta)
}

pub fn p3_eval(x: &[f64], s: usize, params: &ProblemParams) -> f64 {
    let n = params.n;
    let group_count = params.group_count();
    let k = s.div_ceil(2 * n);
    let ell = s - 2 * n * (k - 1);
    let coord = ell.div_ceil(2) - 1;
    let sign = if ell.is_multiple_of(2) { 1.0 } else { -1.0 };
    let (alpha, beta) = p3_alpha_beta(k, group_count);
    let inner = sign * x[coord] - alpha;
    inner * inner - beta
}

pub fn p4_eval(x: &[f64], s: usize, params: &ProblemParams) -> f64 {
    let l = params.l.expect("L required");
    let group_count = params.m / l;
    let k = s.div_ceil(l);
    let ell = s - l * (k - 1);
    let scale = 5.0 * k as f64 / group_count as f64;
    let omega = 2.0 * std::f64::consts::PI / l as f64;
    let (vs, vc) = (omega * ell as f64).sin_cos();
    norm_sq(x) + 2.0 * scale * dot2(x, vc, vs) - scale * scale + 5.0 / group_count as f64
}

/// Scalar family generalized to n > 1 as ‖x‖² + x₁·ω_s − ω_s².
pub fn p5_eval(x: &[f64], s: usize, params: &ProblemParams) -> f64 {
    let omega = 2.0 * (s as f64 - 1.0) / (params.m as f64 - 1.0) - 1.0;
    norm_sq(x) + x[0] * omega - omega * omega
}

/// Builds the worst-case problem for an analytic family, with x* = 0,
/// F(x*) evaluated at the origin, and the known support set attached.
pub fn make_problem(params: ProblemParams) -> Result<WorstCaseProblem, ProblemError> {
    params.validate()?;
    let eval = move |x: &[f64], s: usize| -> f64 {
        match params.family {
            Family::P1 => p1_eval(x, s, &params),
            Family::P2 => p2_eval(x, s, &params),
            Family::P3 => p3_eval(x, s, &params),
            Family::P4 => p4_eval(x, s, &params),
            Family::P5 => p5_eval(x, s, &params),
            Family::WellPlacement => unreachable!("validated"),
        }
    };
    Ok(WorstCaseProblem::new(params.n, params.m, eval)
        .with_known_optimum(vec![0.0; params.n])
        .with_known_support(params.support_at_optimum()))
}

/// Per-scenario 2D injectability fields on a regular grid.
///
/// Node (i, j) sits at real coordinates (i, j) with i ∈ [1, rows],
/// j ∈ [1, cols]. Values are stored scenario-major, row-major, and must be
/// finite and non-negative (the interference sandwich bound needs
/// non-negativity).
#[derive(Debug, Clone, PartialEq)]
pub struct GridStack {
    m: usize,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl GridStack {
    pub fn new(m: usize, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, ProblemError> {
        if m == 0 || rows == 0 || cols == 0 {
            return Err(ProblemError::InvalidParams(
                "grid extents must be positive".into(),
            ));
        }
        let expected = m * rows * cols;
        if values.len() != expected {
            return Err(ProblemError::WrongValueCount {
                expected,
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ProblemError::BadGridValue { index, value });
            }
        }
        Ok(GridStack {
            m,
            rows,
            cols,
            values,
        })
    }

    pub fn scenario_count(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Node value for scenario s (1-based) at node (i, j) (1-based).
    pub fn node(&self, s: usize, i: usize, j: usize) -> f64 {
        self.values[(s - 1) * self.rows * self.cols + (i - 1) * self.cols + (j - 1)]
    }

    pub fn layer(&self, s: usize) -> &[f64] {
        let size = self.rows * self.cols;
        &self.values[(s - 1) * size..s * size]
    }

    /// Bilinear interpolation of scenario s at (u, v) ∈ [1, rows]×[1, cols].
    pub fn interpolate(&self, s: usize, u: f64, v: f64) -> Result<f64, ProblemError> {
        bilinear_interpolate(self.layer(s), self.rows, self.cols, u, v)
    }
}

/// Standard bilinear blend of the four surrounding nodes; exact at nodes,
/// linear along grid lines. `layer` is row-major with extents rows × cols.
pub fn bilinear_interpolate(
    layer: &[f64],
    rows: usize,
    cols: usize,
    u: f64,
    v: f64,
) -> Result<f64, ProblemError> {
    if !(u >= 1.0 && u <= rows as f64 && v >= 1.0 && v <= cols as f64) {
        return Err(ProblemError::PointOutOfRange { u, v, rows, cols });
    }
    let (i0, tu) = if rows == 1 {
        (1usize, 0.0)
    } else {
        let i0 = (u.floor() as usize).min(rows - 1);
        (i0, u - i0 as f64)
    };
    let (j0, tv) = if cols == 1 {
        (1usize, 0.0)
    } else {
        let j0 = (v.floor() as usize).min(cols - 1);
        (j0, v - j0 as f64)
    };
    let at = |i: usize, j: usize| layer[(i - 1) * cols + (j - 1)];
    let i1 = (i0 + 1).min(rows);
    let j1 = (j0 + 1).min(cols);
    Ok((1.0 - tu) * (1.0 - tv) * at(i0, j0)
        + (1.0 - tu) * tv * at(i0, j1)
        + tu * (1.0 - tv) * at(i1, j0)
        + tu * tv * at(i1, j1))
}

/// Total injection volume of three wells under scenario s, discounted for
/// pairwise pressure interference.
///
/// The design vector packs three 2D well coordinates; each is clipped into
/// the grid box before interpolation. Wells are processed in descending
/// order of their single-well volume (ties broken by original well index,
/// ascending); the i-th well is damped by Π_{j<i} (1 − e^{−d_ij}) with d
/// the Euclidean distance in grid units.
pub fn well_placement_eval(grids: &GridStack, x: &[f64], s: usize) -> Result<f64, ProblemError> {
    if x.len() != 6 {
        return Err(ProblemError::BadWellVector(x.len()));
    }
    let rows = grids.rows() as f64;
    let cols = grids.cols() as f64;
    let wells: Vec<(f64, f64)> = (0..3)
        .map(|i| (x[2 * i].clamp(1.0, rows), x[2 * i + 1].clamp(1.0, cols)))
        .collect();
    let volumes: Vec<f64> = wells
        .iter()
        .map(|&(u, v)| grids.interpolate(s, u, v))
        .collect::<Result<_, _>>()?;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| volumes[b].partial_cmp(&volumes[a]).unwrap());

    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut total = 0.0;
    for (rank, &wi) in order.iter().enumerate() {
        let mut damp = 1.0;
        for &wj in order.iter().take(rank) {
            damp *= 1.0 - (-dist(wells[wi], wells[wj])).exp();
        }
        total += volumes[wi] * damp;
    }
    Ok(total)
}

/// Wraps a grid stack as a minimization problem: the max–min objective
/// (maximize the worst-scenario volume) is negated at this boundary.
pub fn make_well_placement_problem(grids: GridStack) -> WorstCaseProblem {
    let m = grids.scenario_count();
    let rows = grids.rows() as f64;
    let cols = grids.cols() as f64;
    let domain = vec![(1.0, rows), (1.0, cols)]
        .into_iter()
        .cycle()
        .take(6)
        .collect();
    WorstCaseProblem::new(6, m, move |x, s| {
        -well_placement_eval(&grids, x, s).expect("6-dimensional design vector")
    })
    .with_domain(domain)
}

/// Deterministic synthetic injectability stack: every scenario is a
/// non-negative sum of shared Gaussian bumps with per-scenario amplitude
/// perturbations, so different grid regions see different worst-case
/// scenarios.
pub fn generate_synthetic_grids(
    seed: u64,
    m: usize,
    rows: usize,
    cols: usize,
    bump_count: usize,
    smoothness: f64,
) -> GridStack {
    assert!(m >= 1 && rows >= 1 && cols >= 1 && bump_count >= 1);
    assert!(smoothness > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    struct Bump {
        cu: f64,
        cv: f64,
        amp: f64,
        inv_two_w2: f64,
    }
    let bumps: Vec<Bump> = (0..bump_count)
        .map(|_| {
            let cu = rng.random_range(1.0..=rows as f64);
            let cv = rng.random_range(1.0..=cols as f64);
            let amp = rng.random_range(0.5..1.5);
            let w = smoothness * rows.min(cols) as f64 * rng.random_range(0.6..1.4);
            Bump {
                cu,
                cv,
                amp,
                inv_two_w2: 1.0 / (2.0 * w * w),
            }
        })
        .collect();

    // Per-scenario amplitude multipliers: the spread across scenarios is
    // what makes the argmin partition nontrivial.
    let mults: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..bump_count).map(|_| rng.random_range(0.4..1.6)).collect())
        .collect();

    let mut values = Vec::with_capacity(m * rows * cols);
    for mult in &mults {
        for i in 1..=rows {
            for j in 1..=cols {
                let mut v = 0.0;
                for (b, bump) in bumps.iter().enumerate() {
                    let du = i as f64 - bump.cu;
                    let dv = j as f64 - bump.cv;
                    v += bump.amp * mult[b] * (-(du * du + dv * dv) * bump.inv_two_w2).exp();
                }
                values.push(v);
            }
        }
    }
    GridStack::new(m, rows, cols, values).expect("construction is non-negative and finite")
}

/// Writes a stack in the text format: header `m rows cols`, then m blocks
/// of rows lines with cols decimal values, blank line between blocks.
pub fn save_grids(stack: &GridStack, path: &Path) -> Result<(), ProblemError> {
    let wrap = |source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = String::new();
    out.push_str(&format!("{} {} {}\n", stack.m, stack.rows, stack.cols));
    for s in 1..=stack.m {
        for i in 1..=stack.rows {
            let line: Vec<String> = (1..=stack.cols)
                .map(|j| format!("{}", stack.node(s, i, j)))
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(wrap)?;
    file.write_all(out.as_bytes()).map_err(wrap)
}

/// Parses the text format written by [`save_grids`]; values are read in
/// full precision, so a save/load round trip is exact.
pub fn load_grids(path: &Path) -> Result<GridStack, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_grids(&text)
}

pub fn parse_grids(text: &str) -> Result<GridStack, ProblemError> {
    let mut lines = text.lines();
    let header = loop {
        match lines.next() {
            Some(line) if !line.trim().is_empty() => break line,
            Some(_) => continue,
            None => return Err(ProblemError::MalformedHeader("empty file".into())),
        }
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| ProblemError::MalformedHeader(header.to_string()))?;
    let [m, rows, cols] = dims[..] else {
        return Err(ProblemError::MalformedHeader(header.to_string()));
    };
    if m == 0 || rows == 0 || cols == 0 {
        return Err(ProblemError::MalformedHeader(header.to_string()));
    }
    let mut values = Vec::with_capacity(m * rows * cols);
    for line in lines {
        for token in line.split_whitespace() {
            let v: f64 = token
                .parse()
                .map_err(|_| ProblemError::BadGridToken(token.to_string()))?;
            values.push(v);
        }
    }
    GridStack::new(m, rows, cols, values)
}
