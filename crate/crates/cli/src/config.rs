//! Experiment configuration: a versioned TOML document describing the
//! program, schedule, run, diagnostics, acceptance thresholds and audits.

use serde::{Deserialize, Serialize};
use sfb_core::program::{BSelection, DataSampler, Family};
use sfb_core::{make_atom, CatalogAtom, DMatrix, DVector, DomainDescriptor, RandomProgram, Schedule};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub dimension: usize,
    pub program: ProgramSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub acceptance: AcceptanceSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSpec {
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default)]
    pub b_selection: SelectionSpec,
    pub a: Vec<WeightedAtom>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<WeightedAtom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_sampler: Option<SamplerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSpec {
    #[default]
    LeastNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedAtom {
    pub weight: f64,
    pub atom: AtomSpec,
}

/// Gaussian regression data: `a ~ N(0, scale² I)`, `y = <a, x_true> + noise ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub x_true: Vec<f64>,
    pub scale: f64,
    pub noise: f64,
    pub seed: u64,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AtomSpec {
    Zero,
    Identity,
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagonal: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vector: Option<Vec<f64>>,
    },
    L1 {
        lambda: f64,
    },
    NormalCone {
        set: SetSpec,
    },
    SkewLinear {
        matrix: Vec<Vec<f64>>,
    },
    Scaled {
        factor: f64,
        inner: Box<AtomSpec>,
    },
    SumWithQuadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagonal: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vector: Option<Vec<f64>>,
        other: Box<AtomSpec>,
    },
    LinearRegression {
        features: Vec<f64>,
        target: f64,
    },
    Cubic {
        coefficient: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Full,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Orthant { signs: Vec<f64> },
    Halfspace { normal: Vec<f64>, offset: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    /// `directions` lists the spanning vectors (one per entry).
    Affine { anchor: Vec<f64>, directions: Vec<Vec<f64>> },
    Ray { origin: Vec<f64>, direction: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "one")]
    pub gamma0: f64,
    #[serde(default = "default_exponent")]
    pub a: f64,
    #[serde(default)]
    pub n0: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        let s = Schedule::default();
        ScheduleSpec { gamma0: s.gamma0, a: s.a, n0: s.n0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub n_iters: usize,
    pub x0: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Thinning cap for stored iterates; absent means store everything.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_window")]
    pub apt_window: f64,
    #[serde(default)]
    pub apt_times: Vec<f64>,
    #[serde(default = "default_flow_h")]
    pub flow_h: f64,
    #[serde(default = "default_flow_tol")]
    pub flow_tol: f64,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    /// Explicit zero used for Fejér series and error predicates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    /// Compute a reference zero by the proximal point method when `x_star`
    /// is not given.
    #[serde(default = "yes")]
    pub reference: bool,
    #[serde(default = "one")]
    pub reference_step: f64,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
    #[serde(default = "default_reference_iters")]
    pub reference_max_iters: usize,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            apt_window: default_window(),
            apt_times: Vec::new(),
            flow_h: default_flow_h(),
            flow_tol: default_flow_tol(),
            tail_fraction: default_tail(),
            x_star: None,
            reference: true,
            reference_step: 1.0,
            reference_tol: default_reference_tol(),
            reference_max_iters: default_reference_iters(),
        }
    }
}

/// Thresholds of the scenario predicates; absent keys are not checked.
/// Every predicate must hold for every seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_oscillation_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_residual_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaged_residual_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_distance_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_error_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaged_error_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apt_last_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apt_max_inversions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    /// Grid for the moment and gap audits; defaults to `x0` projected onto
    /// the essential domain plus the reference zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_region")]
    pub region_radius: f64,
    #[serde(default = "default_audit_samples")]
    pub samples: usize,
    #[serde(default = "default_growth_radius")]
    pub growth_radius: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_bound: Option<f64>,
    #[serde(default = "default_interior_iters")]
    pub interior_iterations: usize,
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            grid: None,
            region_radius: default_region(),
            samples: default_audit_samples(),
            growth_radius: default_growth_radius(),
            seed: 0,
            gammas: default_gammas(),
            epsilon: 1.0,
            declared_bound: None,
            interior_iterations: default_interior_iters(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_mc() -> usize {
    1000
}
fn default_exponent() -> f64 {
    Schedule::default().a
}
fn default_window() -> f64 {
    2.0
}
fn default_flow_h() -> f64 {
    0.01
}
fn default_flow_tol() -> f64 {
    sfb_core::flow::DEFAULT_FLOW_TOL
}
fn default_tail() -> f64 {
    0.1
}
fn default_reference_tol() -> f64 {
    1e-10
}
fn default_reference_iters() -> usize {
    100_000
}
fn default_region() -> f64 {
    2.0
}
fn default_audit_samples() -> usize {
    2000
}
fn default_growth_radius() -> f64 {
    10.0
}
fn default_gammas() -> Vec<f64> {
    vec![1.0, 0.1, 0.01, 0.001]
}
fn default_interior_iters() -> usize {
    2000
}

/// One failed semantic check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

/// A validated configuration with its program and schedule.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub program: RandomProgram,
    pub schedule: Schedule,
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<Experiment, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
    validate(config)
}

fn syntax_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let offset = e.span().map(|s| s.start).unwrap_or(0).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    ConfigError::Syntax { line, column, message: e.message().to_string() }
}

pub fn validate(config: ExperimentConfig) -> Result<Experiment, ConfigError> {
    let mut v = Vec::new();
    let mut fail = |path: &str, message: String| v.push(Violation { path: path.to_string(), message });
    let n = config.dimension;
    if config.schema_version != SCHEMA_VERSION {
        fail("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", config.schema_version));
    }
    if n == 0 {
        fail("dimension", "must be positive".into());
    }
    let p = &config.program;
    if !(p.p.is_finite() && p.p >= 1.0) {
        fail("program.p", format!("must be >= 1, got {}", p.p));
    }
    let a_atoms = atoms(&p.a, "program.a", n, &mut fail);
    let b_family = match (p.b.is_empty(), &p.b_sampler) {
        (false, None) => atoms(&p.b, "program.b", n, &mut fail).map(Family::Mixture),
        (true, Some(s)) => {
            if s.x_true.len() != n {
                fail("program.b_sampler.x_true", format!("expected {n} entries, got {}", s.x_true.len()));
                None
            } else {
                match DataSampler::new(DVector::from_vec(s.x_true.clone()), s.scale, s.noise, s.seed, s.mc_samples) {
                    Ok(s) => Some(Family::Sampler(s)),
                    Err(e) => {
                        fail("program.b_sampler", e.to_string());
                        None
                    }
                }
            }
        }
        (true, None) => {
            fail("program.b", "one of program.b or program.b_sampler is required".into());
            None
        }
        (false, Some(_)) => {
            fail("program.b_sampler", "program.b and program.b_sampler are exclusive".into());
            None
        }
    };
    if let Some(Family::Mixture(atoms)) = &b_family {
        for (i, (_, atom)) in atoms.iter().enumerate() {
            if !atom.domain().is_full() {
                fail(&format!("program.b[{i}].atom"), "b atoms must have full domain".into());
            }
        }
    }
    let s = &config.schedule;
    let schedule = Schedule::new(s.gamma0, s.a, s.n0);
    if !(s.a > 0.5 && s.a <= 1.0) {
        fail("schedule.a", format!("exponent outside (1/2, 1]: {}", s.a));
    }
    if !(s.gamma0.is_finite() && s.gamma0 > 0.0) {
        fail("schedule.gamma0", format!("must be positive, got {}", s.gamma0));
    }
    if !(s.n0.is_finite() && s.n0 >= 0.0) {
        fail("schedule.n0", format!("must be >= 0, got {}", s.n0));
    }
    let r = &config.run;
    if r.n_iters == 0 {
        fail("run.n_iters", "must be >= 1".into());
    }
    if r.x0.len() != n {
        fail("run.x0", format!("expected {n} entries, got {}", r.x0.len()));
    } else if r.x0.iter().any(|x| !x.is_finite()) {
        fail("run.x0", "entries must be finite".into());
    }
    if r.seeds.is_empty() {
        fail("run.seeds", "at least one seed is required".into());
    }
    let mut sorted = r.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != r.seeds.len() {
        fail("run.seeds", "seeds must be distinct".into());
    }
    if r.thin_cap == Some(0) {
        fail("run.thin_cap", "must be positive".into());
    }
    let d = &config.diagnostics;
    if !(d.apt_window.is_finite() && d.apt_window >= 0.0) {
        fail("diagnostics.apt_window", format!("must be >= 0, got {}", d.apt_window));
    }
    if d.apt_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || d.apt_times.windows(2).any(|w| w[1] <= w[0]) {
        fail("diagnostics.apt_times", "times must be >= 0 and strictly increasing".into());
    }
    if !(d.flow_h.is_finite() && d.flow_h > 0.0) {
        fail("diagnostics.flow_h", format!("must be positive, got {}", d.flow_h));
    }
    if !(d.flow_tol.is_finite() && d.flow_tol > 0.0) {
        fail("diagnostics.flow_tol", format!("must be positive, got {}", d.flow_tol));
    }
    if !(d.tail_fraction > 0.0 && d.tail_fraction < 1.0) {
        fail("diagnostics.tail_fraction", format!("must lie in (0, 1), got {}", d.tail_fraction));
    }
    if let Some(x) = &d.x_star {
        if x.len() != n {
            fail("diagnostics.x_star", format!("expected {n} entries, got {}", x.len()));
        }
    }
    if !(d.reference_step > 0.0 && d.reference_tol > 0.0) {
        fail("diagnostics.reference_step", "reference step and tolerance must be positive".into());
    }
    let au = &config.audit;
    if let Some(grid) = &au.grid {
        for (i, g) in grid.iter().enumerate() {
            if g.len() != n {
                fail(&format!("audit.grid[{i}]"), format!("expected {n} entries, got {}", g.len()));
            }
        }
    }
    if !(au.region_radius > 0.0 && au.growth_radius > 0.0) {
        fail("audit.region_radius", "audit radii must be positive".into());
    }
    if au.gammas.is_empty() || au.gammas.iter().any(|g| !(*g > 0.0)) {
        fail("audit.gammas", "need at least one positive step".into());
    }
    if !(au.epsilon > 0.0 && au.epsilon <= 1.0) {
        fail("audit.epsilon", format!("must lie in (0, 1], got {}", au.epsilon));
    }
    if au.samples == 0 {
        fail("audit.samples", "must be positive".into());
    }

    let mut program = None;
    if let (Some(a), Some(b)) = (a_atoms, b_family) {
        match RandomProgram::new(Family::Mixture(a), b).and_then(|pr| pr.with_p(p.p)) {
            Ok(pr) => program = Some(pr.with_selection(match p.b_selection {
                SelectionSpec::LeastNorm => BSelection::LeastNorm,
            })),
            Err(e) => fail("program", e.to_string()),
        }
    }
    if !v.is_empty() {
        return Err(ConfigError::Invalid(v));
    }
    Ok(Experiment { config, program: program.expect("checked"), schedule: schedule.expect("checked") })
}

fn atoms(
    list: &[WeightedAtom],
    path: &str,
    n: usize,
    fail: &mut impl FnMut(&str, String),
) -> Option<Vec<(f64, sfb_core::OperatorAtom)>> {
    if list.is_empty() {
        fail(path, "at least one atom is required".into());
        return None;
    }
    let mut out = Vec::new();
    let mut ok = true;
    let mut total = 0.0;
    for (i, w) in list.iter().enumerate() {
        if !(w.weight.is_finite() && w.weight >= 0.0) {
            fail(&format!("{path}[{i}].weight"), format!("must be >= 0, got {}", w.weight));
            ok = false;
        }
        total += w.weight;
        let built = to_catalog(&w.atom, n).and_then(|spec| make_atom(&spec).map_err(|e| e.to_string()));
        match built {
            Ok(atom) => out.push((w.weight, atom)),
            Err(e) => {
                fail(&format!("{path}[{i}].atom"), e);
                ok = false;
            }
        }
    }
    if ok && (total - 1.0).abs() > 1e-12 {
        fail(path, format!("weights sum to {total}, expected 1"));
        ok = false;
    }
    ok.then_some(out)
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>, String> {
    if v.len() != n {
        return Err(format!("{what}: expected {n} entries, got {}", v.len()));
    }
    Ok(DVector::from_column_slice(v))
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, String> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(format!("{what}: expected a {n}x{n} matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn quadratic_parts(
    m: &Option<Vec<Vec<f64>>>,
    d: &Option<Vec<f64>>,
    q: &Option<Vec<f64>>,
    n: usize,
) -> Result<(DMatrix<f64>, DVector<f64>), String> {
    let matrix = match (m, d) {
        (Some(m), None) => matrix(m, n, "matrix")?,
        (None, Some(d)) => DMatrix::from_diagonal(&vector(d, n, "diagonal")?),
        _ => return Err("exactly one of matrix or diagonal is required".into()),
    };
    let vector = match q {
        Some(q) => vector(q, n, "vector")?,
        None => DVector::zeros(n),
    };
    Ok((matrix, vector))
}

/// Converts a config atom into catalog parameters in `R^n`.
pub fn to_catalog(spec: &AtomSpec, n: usize) -> Result<CatalogAtom, String> {
    Ok(match spec {
        AtomSpec::Zero => CatalogAtom::Zero { dim: n },
        AtomSpec::Identity => CatalogAtom::identity(n),
        AtomSpec::Quadratic { matrix, diagonal, vector } => {
            let (matrix, vector) = quadratic_parts(matrix, diagonal, vector, n)?;
            CatalogAtom::QuadraticGradient { matrix, vector }
        }
        AtomSpec::L1 { lambda } => CatalogAtom::L1Subdifferential { dim: n, lambda: *lambda },
        AtomSpec::NormalCone { set } => CatalogAtom::NormalCone { dim: n, set: to_set(set, n)? },
        AtomSpec::SkewLinear { matrix: m } => CatalogAtom::SkewLinear { matrix: matrix(m, n, "matrix")? },
        AtomSpec::Scaled { factor, inner } => CatalogAtom::Scaled { factor: *factor, inner: Box::new(to_catalog(inner, n)?) },
        AtomSpec::SumWithQuadratic { matrix, diagonal, vector, other } => {
            let (matrix, vector) = quadratic_parts(matrix, diagonal, vector, n)?;
            CatalogAtom::SumWithQuadratic { matrix, vector, other: Box::new(to_catalog(other, n)?) }
        }
        AtomSpec::LinearRegression { features, target } => {
            CatalogAtom::LinearRegression { features: vector(features, n, "features")?, target: *target }
        }
        AtomSpec::Cubic { coefficient } => CatalogAtom::Cubic { dim: n, coefficient: *coefficient },
    })
}

fn to_set(spec: &SetSpec, n: usize) -> Result<DomainDescriptor, String> {
    let e = |e: sfb_core::Error| e.to_string();
    Ok(match spec {
        SetSpec::Full => DomainDescriptor::Full,
        SetSpec::Box { lo, hi } => DomainDescriptor::boxed(vector(lo, n, "lo")?, vector(hi, n, "hi")?).map_err(e)?,
        SetSpec::Orthant { signs } => {
            vector(signs, n, "signs")?;
            DomainDescriptor::orthant(signs)
        }
        SetSpec::Halfspace { normal, offset } => DomainDescriptor::halfspace(vector(normal, n, "normal")?, *offset).map_err(e)?,
        SetSpec::Ball { center, radius } => DomainDescriptor::ball(vector(center, n, "center")?, *radius).map_err(e)?,
        SetSpec::Affine { anchor, directions } => {
            let cols = directions.iter().map(|d| vector(d, n, "directions")).collect::<Result<Vec<_>, _>>()?;
            let m = if cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols) };
            DomainDescriptor::affine(vector(anchor, n, "anchor")?, &m).map_err(e)?
        }
        SetSpec::Ray { origin, direction } => DomainDescriptor::ray(vector(origin, n, "origin")?, vector(direction, n, "direction")?).map_err(e)?,
    })
}

/// Serialises a config back to TOML.
pub fn to_toml(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("configs serialise")
}

/// Applies `key=value` overrides to a config document. Keys are dotted
/// paths with optional `[index]` suffixes, e.g. `program.a[0].weight`.
/// Values are parsed as TOML, falling back to a bare string.
pub fn apply_overrides(config: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut doc = toml::Value::try_from(config).expect("configs serialise");
    for o in overrides {
        let bad = |m: String| ConfigError::Invalid(vec![Violation { path: o.clone(), message: m }]);
        let (key, raw) = o.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        set_path(&mut doc, key.trim(), value).map_err(bad)?;
    }
    let text = toml::to_string(&doc).expect("values serialise");
    let config: ExperimentConfig = toml::from_str(&text).map_err(|e| syntax_error(&text, &e))?;
    Ok(config)
}

fn set_path(doc: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), String> {
    let mut cur = doc;
    let segments: Vec<&str> = key.split('.').collect();
    for (k, seg) in segments.iter().enumerate() {
        let last = k + 1 == segments.len();
        let (name, index) = match seg.split_once('[') {
            Some((name, rest)) => {
                let idx = rest.strip_suffix(']').and_then(|i| i.parse::<usize>().ok()).ok_or(format!("bad index in {seg}"))?;
                (name, Some(idx))
            }
            None => (*seg, None),
        };
        let table = cur.as_table_mut().ok_or(format!("{name} is not inside a table"))?;
        if last && index.is_none() {
            table.insert(name.to_string(), value);
            return Ok(());
        }
        let entry = table
            .entry(name.to_string())
            .or_insert_with(|| if index.is_some() { toml::Value::Array(Vec::new()) } else { toml::Value::Table(toml::Table::new()) });
        cur = match index {
            Some(i) => {
                let arr = entry.as_array_mut().ok_or(format!("{name} is not an array"))?;
                let len = arr.len();
                let slot = arr.get_mut(i).ok_or(format!("index {i} out of range for {name} (length {len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            None => entry,
        };
    }
    Ok(())
}
