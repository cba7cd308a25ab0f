//! Command-line layer: action files, subcommands, reports and exit codes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::affine::{
    is_partially_hyperbolic_1d_center, AffineMap, NilAutomorphism, SymplecticMatrix,
};
use crate::centralizer::{centralizer_report, mahler_gate, rank_bound_check};
use crate::circle::{
    abc_demo_maps, circle_dist, find_periodic_point_abc, rotation_number, AbcOptions, CircleMap,
    CompactSet,
};
use crate::error::{Error, Result};
use crate::intmat::IntMatrix;
use crate::nilpotent::{GroupElement, LatticeSpec};
use crate::poly::{classify_roots, IntPoly};
use crate::semiconjugacy::{
    conjugacy_residual, equivariance_defect, fiber_probe, CocycleField, FiberProbeOptions,
    FourierTerm, PerturbedMap, SolveOptions, DEFAULT_DEPTH, DEFAULT_GRID_CENTER, DEFAULT_GRID_SU,
};
use crate::spectral::{
    coarse_exponents, is_higher_rank, lyapunov_exponents, weyl_chambers, ActionSpec,
};
use crate::suword::{
    apply_su_word_affine, center_drift, phi_shift, symplectic_area, word_normal_form, Letter, Slot,
    SuModel, SuWord,
};

pub const VERSION_TAG: &str = "nildyn/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;
pub const EXIT_LAW: i32 = 4;
pub const EXIT_TOLERANCE: i32 = 5;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_ORACLE_BOUND: i64 = 50;
pub const DEFAULT_ITERATIONS: usize = 100_000;
pub const DEFAULT_CIRCLE_RESOLUTION: usize = 4096;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::NotSymplectic { .. }
        | Error::NonCommuting(..) => EXIT_PARSE,
        Error::NotHyperbolic(_)
        | Error::Reducible(_)
        | Error::Defective(_)
        | Error::Unsupported(_)
        | Error::Precondition(_)
        | Error::Overflow => EXIT_UNSUPPORTED,
        Error::LawViolation(_) => EXIT_LAW,
        Error::NoConvergence(_) | Error::ToleranceMiss { .. } => EXIT_TOLERANCE,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "nildyn",
    version,
    about = "Affine actions on Heisenberg nilmanifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Print the report as JSON instead of a table.
    #[arg(long, global = true)]
    pub json: bool,
    /// Output path: the grid file for `conjugacy`, a JSON copy of the report otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for sampled checks and probes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grid points per su-coordinate.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Truncation depth of the series.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Residual tolerance; larger residuals exit with code 5.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Entry bound for the centralizer oracle.
    #[arg(long, global = true)]
    pub bound: Option<i64>,
    /// Iterations for rotation numbers.
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lyapunov exponents, Weyl chambers and the higher-rank verdict.
    Analyze { file: PathBuf },
    /// Centralizer ranks of an integer matrix or characteristic polynomial.
    Centralizer {
        /// Row-major JSON matrix, JSON coefficient list (leading first) or a file.
        input: String,
        /// Restrict to Sp(d, Z).
        #[arg(long)]
        sp: bool,
        /// Cross-check against brute-force enumeration, optionally with an entry bound.
        #[arg(long, num_args = 0..=1, default_missing_value = "50")]
        oracle: Option<i64>,
    },
    /// Franks-Manning coordinates of a perturbed affine map.
    Conjugacy {
        file: PathBuf,
        /// Write the per-point residual field as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Center grid points.
        #[arg(long)]
        grid_center: Option<usize>,
        /// Skip the fiber probe.
        #[arg(long)]
        no_probe: bool,
    },
    /// su-word projection, normal form, center drift and area.
    Suword { file: PathBuf },
    /// Rotation numbers of circle maps and the AbC periodic point.
    Rotnum { file: PathBuf },
    /// Run the acceptance suite.
    Selftest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandEcho {
    pub name: String,
    pub args: BTreeMap<String, Value>,
}

/// Output of one subcommand. Timing goes to stderr so that the JSON is
/// reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: CommandEcho,
    pub results: Value,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are finite JSON")
    }
}

/// A failed command, with the partial report when one exists.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
    pub report: Option<Box<Report>>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self {
            code: exit_code(&error),
            error,
            report: None,
        }
    }
}

pub type CmdResult = std::result::Result<Report, Failure>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    pub n: usize,
    #[serde(default)]
    pub m: usize,
    #[serde(default = "one")]
    pub r: u32,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    /// Symplectic base matrix, row-major, `2n x 2n`.
    pub matrix: Vec<Vec<i64>>,
    /// Abelian block in `GL(m, Z)`; identity when omitted.
    #[serde(default)]
    pub abelian: Option<Vec<Vec<i64>>>,
    /// Flat `(q, p, z, t)` translation `g0` in `f(x) = L(x) g0^{-1}`.
    #[serde(default)]
    pub translation: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    /// Index of the perturbed generator.
    #[serde(default)]
    pub generator: usize,
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOptions {
    pub grid: Option<usize>,
    pub grid_center: Option<usize>,
    pub depth: Option<usize>,
    pub bound: Option<i64>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    /// Target point of the fiber probe, in base coordinates.
    pub probe_point: Option<Vec<f64>>,
    /// Base point for `suword`, flat `(q, p, z, t)`.
    pub base_point: Option<Vec<f64>>,
}

/// Word letter given either by its vector or by coordinates in the model
/// basis of its subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordLetter {
    pub slot: Slot,
    #[serde(default)]
    pub vec: Option<Vec<f64>>,
    #[serde(default)]
    pub coords: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionFile {
    pub version: String,
    pub group: GroupSection,
    pub generators: Vec<GeneratorSection>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSection>,
    #[serde(default)]
    pub options: FileOptions,
    /// Letters in written order; the rightmost acts first.
    #[serde(default)]
    pub word: Option<Vec<WordLetter>>,
}

/// A validated action file.
#[derive(Clone, Debug)]
pub struct Action {
    pub file: ActionFile,
    pub lattice: LatticeSpec,
    pub maps: Vec<AffineMap<f64>>,
    pub spec: ActionSpec,
    pub warnings: Vec<String>,
}

fn at(loc: &str, e: Error) -> Error {
    Error::InvalidInput(format!("{loc}: {e}"))
}

fn matrix_at(loc: &str, rows: &[Vec<i64>]) -> Result<IntMatrix> {
    IntMatrix::from_rows(rows).map_err(|e| at(loc, e))
}

/// Parses TOML, or JSON when the path ends in `.json`.
pub fn parse_document<T: for<'de> Deserialize<'de>>(text: &str, json: bool) -> Result<T> {
    if json {
        serde_json::from_str(text).map_err(|e| {
            Error::InvalidInput(format!(
                "JSON parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })
    } else {
        toml::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

fn is_json_path(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn load_action_file(path: &Path) -> Result<Action> {
    let text = read_text(path)?;
    Action::from_file(parse_document(&text, is_json_path(path))?)
}

impl Action {
    pub fn parse_toml(text: &str) -> Result<Self> {
        Self::from_file(parse_document(text, false)?)
    }

    pub fn from_file(file: ActionFile) -> Result<Self> {
        if file.version != VERSION_TAG {
            return Err(Error::InvalidInput(format!(
                "version: expected \"{VERSION_TAG}\", found \"{}\"",
                file.version
            )));
        }
        let g = &file.group;
        let lattice0 = LatticeSpec::new(g.n, g.m, g.r).map_err(|e| at("group", e))?;
        if file.generators.is_empty() {
            return Err(Error::InvalidInput(
                "generators: at least one generator is required".into(),
            ));
        }
        let mut parts = Vec::with_capacity(file.generators.len());
        for (i, gen) in file.generators.iter().enumerate() {
            let loc = format!("generators[{i}]");
            let m = matrix_at(&format!("{loc}.matrix"), &gen.matrix)?;
            if m.rows() != 2 * g.n || m.cols() != 2 * g.n {
                return Err(Error::InvalidInput(format!(
                    "{loc}.matrix: expected {0}x{0}, found {1}x{2}",
                    2 * g.n,
                    m.rows(),
                    m.cols()
                )));
            }
            let sym = SymplecticMatrix::new(m).map_err(|e| at(&format!("{loc}.matrix"), e))?;
            let abelian = match &gen.abelian {
                Some(rows) if g.m > 0 || !rows.is_empty() => {
                    matrix_at(&format!("{loc}.abelian"), rows)?
                }
                _ => IntMatrix::identity(g.m),
            };
            let translation = match &gen.translation {
                Some(t) => {
                    if t.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidInput(format!(
                            "{loc}.translation: non-finite entry"
                        )));
                    }
                    GroupElement::from_flat(g.n, g.m, t)
                        .map_err(|e| at(&format!("{loc}.translation"), e))?
                }
                None => GroupElement::identity(g.n, g.m),
            };
            parts.push((sym, abelian, translation));
        }
        // common center denominator: raise once if any generator needs it
        let mut lattice = lattice0;
        for (i, (sym, abelian, _)) in parts.iter().enumerate() {
            let aut = NilAutomorphism::new(sym.clone(), abelian.clone(), lattice)
                .map_err(|e| at(&format!("generators[{i}].abelian"), e))?;
            lattice = *aut.lattice();
        }
        let mut warnings = Vec::new();
        if lattice.r != lattice0.r {
            warnings.push(format!(
                "center denominator raised from {} to {} so that the automorphisms preserve the lattice",
                lattice0.r, lattice.r
            ));
        }
        let mut maps = Vec::with_capacity(parts.len());
        for (i, (sym, abelian, translation)) in parts.into_iter().enumerate() {
            let aut = NilAutomorphism::new(sym, abelian, lattice)
                .map_err(|e| at(&format!("generators[{i}]"), e))?;
            maps.push(
                AffineMap::new(aut, translation)
                    .map_err(|e| at(&format!("generators[{i}].translation"), e))?,
            );
        }
        let su: Vec<IntMatrix> = maps.iter().map(|f| f.automorphism.su_matrix()).collect();
        let spec = ActionSpec::new(su).map_err(|e| at("generators", e))?;
        if let Some(p) = &file.perturbation {
            if p.generator >= maps.len() {
                return Err(Error::InvalidInput(format!(
                    "perturbation.generator: index {} out of range for {} generators",
                    p.generator,
                    maps.len()
                )));
            }
            CocycleField::new(lattice, p.terms.clone()).map_err(|e| at("perturbation.terms", e))?;
        }
        Ok(Self {
            file,
            lattice,
            maps,
            spec,
            warnings,
        })
    }

    pub fn field(&self) -> Result<Option<(usize, CocycleField)>> {
        self.file
            .perturbation
            .as_ref()
            .map(|p| {
                Ok((
                    p.generator,
                    CocycleField::new(self.lattice, p.terms.clone())?,
                ))
            })
            .transpose()
    }
}

/// Command-line flags merged over file options.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub grid_center: Option<usize>,
    pub depth: Option<usize>,
    pub tol: Option<f64>,
    pub bound: Option<i64>,
    pub iters: Option<usize>,
}

impl Settings {
    fn from_cli(cli: &Cli) -> Self {
        Self {
            seed: cli.seed,
            grid: cli.grid,
            grid_center: None,
            depth: cli.depth,
            tol: cli.tol,
            bound: cli.bound,
            iters: cli.iters,
        }
    }

    fn merged(&self, o: &FileOptions) -> Self {
        Self {
            seed: self.seed.or(o.seed),
            grid: self.grid.or(o.grid),
            grid_center: self.grid_center.or(o.grid_center),
            depth: self.depth.or(o.depth),
            tol: self.tol.or(o.tol),
            bound: self.bound.or(o.bound),
            iters: self.iters.or(o.iters),
        }
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn echo(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            if !v.is_null() {
                m.insert(k.to_string(), v);
            }
        };
        put("seed", json!(self.seed));
        put("grid", json!(self.grid));
        put("grid_center", json!(self.grid_center));
        put("depth", json!(self.depth));
        put("tol", json!(self.tol));
        put("bound", json!(self.bound));
        put("iters", json!(self.iters));
        m
    }
}

fn echo(name: &str, settings: &Settings, extra: &[(&str, Value)]) -> CommandEcho {
    let mut args = settings.echo();
    for (k, v) in extra {
        args.insert(k.to_string(), v.clone());
    }
    CommandEcho {
        name: name.into(),
        args,
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable result")
}

pub fn cmd_analyze(action: &Action, settings: &Settings) -> CmdResult {
    let s = settings.merged(&action.file.options);
    let seed = s.seed();
    let spec = &action.spec;
    let mut warnings = action.warnings.clone();
    let mut per_generator = Vec::new();
    for f in &action.maps {
        let ph = if f.lattice().n > 0 {
            let p = is_partially_hyperbolic_1d_center(f)?;
            json!({
                "partially_hyperbolic": p.partially_hyperbolic,
                "stable_dim": p.stable_dim,
                "center_dim": p.center_dim,
                "unstable_dim": p.unstable_dim,
                "hyperbolic_base": p.classification.hyperbolic,
            })
        } else {
            Value::Null
        };
        per_generator.push(json!({
            "su_matrix": to_value(&f.automorphism.su_matrix()),
            "lattice_raised": f.automorphism.lattice_raised,
            "partial_hyperbolicity": ph,
        }));
    }
    let spectrum = lyapunov_exponents(spec, seed)?;
    let coarse = coarse_exponents(&spectrum.exponents);
    let k = spec.k();
    let mut exponent_sum = vec![0.0; k];
    for e in &spectrum.exponents {
        for (s, c) in exponent_sum.iter_mut().zip(&e.coeffs) {
            *s += e.space_dim as f64 * c;
        }
    }
    let chambers = weyl_chambers(&coarse, k)?;
    if !chambers.enumerated {
        warnings.push(format!(
            "chambers are not enumerated for k = {k} > 3; walls only"
        ));
    }
    let higher = is_higher_rank(spec, seed)?;
    let rank_bound = match rank_bound_check(spec, seed) {
        Ok(r) => to_value(&r),
        Err(Error::Precondition(msg)) => {
            warnings.push(format!("rank bound not checked: {msg}"));
            Value::Null
        }
        Err(e) => return Err(e.into()),
    };
    let exponents: Vec<Value> = spectrum
        .exponents
        .iter()
        .map(|e| json!({"coeffs": e.coeffs, "dim": e.space_dim}))
        .collect();
    let coarse_v: Vec<Value> = coarse
        .iter()
        .map(|c| json!({"direction": c.direction, "dim": c.space_dim, "members": c.members.len()}))
        .collect();
    let results = json!({
        "lattice": to_value(&action.lattice),
        "k": k,
        "d": spec.d(),
        "generators": per_generator,
        "exponents": exponents,
        "center_dim": spectrum.center_dim,
        "exponent_sum": exponent_sum,
        "coarse_exponents": coarse_v,
        "walls": chambers.walls,
        "chambers": to_value(&chambers.chambers),
        "chamber_count": chambers.chambers.len(),
        "higher_rank": higher.higher_rank,
        "higher_rank_report": to_value(&higher),
        "rank_bound": rank_bound,
    });
    Ok(Report {
        command: echo("analyze", &s, &[]),
        results,
        warnings,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CentralizerFile {
    #[serde(default)]
    matrix: Option<Vec<Vec<i64>>>,
    /// Coefficients, leading first.
    #[serde(default)]
    poly: Option<Vec<i64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CentralizerArg {
    Matrix(Vec<Vec<i64>>),
    Poly(Vec<i64>),
}

/// Matrix from inline JSON or a file, with the polynomial it came from.
pub fn parse_centralizer_input(input: &str) -> Result<(IntMatrix, Option<IntPoly>)> {
    let path = Path::new(input);
    let (matrix, poly) = if path.is_file() {
        let text = read_text(path)?;
        let f: CentralizerFile = parse_document(&text, is_json_path(path))?;
        match (f.matrix, f.poly) {
            (Some(m), None) => (Some(m), None),
            (None, Some(p)) => (None, Some(p)),
            _ => {
                return Err(Error::InvalidInput(
                    "exactly one of `matrix` or `poly` is required".into(),
                ))
            }
        }
    } else {
        match serde_json::from_str::<CentralizerArg>(input) {
            Ok(CentralizerArg::Matrix(m)) => (Some(m), None),
            Ok(CentralizerArg::Poly(p)) => (None, Some(p)),
            Err(e) => {
                return Err(Error::InvalidInput(format!(
                    "expected a JSON integer matrix, coefficient list or file path: {e}"
                )))
            }
        }
    };
    match (matrix, poly) {
        (Some(rows), _) => {
            let m = matrix_at("matrix", &rows)?;
            if !m.is_square() {
                return Err(Error::InvalidInput(format!(
                    "matrix: not square ({}x{})",
                    m.rows(),
                    m.cols()
                )));
            }
            Ok((m, None))
        }
        (None, Some(c)) => {
            if c.first() != Some(&1) {
                return Err(Error::InvalidInput(
                    "poly: leading coefficient must be 1".into(),
                ));
            }
            let p = IntPoly::from_descending(&c);
            if p.degree().unwrap_or(0) == 0 {
                return Err(Error::InvalidInput("poly: degree must be positive".into()));
            }
            Ok((
                IntMatrix::companion(&p).map_err(|e| at("poly", e))?,
                Some(p),
            ))
        }
        (None, None) => unreachable!("one of matrix or poly is set"),
    }
}

pub fn cmd_centralizer(
    a: &IntMatrix,
    sp: bool,
    oracle: Option<i64>,
    settings: &Settings,
) -> CmdResult {
    let mut warnings = Vec::new();
    let mut bound = oracle;
    if bound.is_some() && a.rows() > 4 {
        warnings.push(format!(
            "oracle limited to d <= 4; skipped for d = {}",
            a.rows()
        ));
        bound = None;
    }
    let cmd = echo(
        "centralizer",
        settings,
        &[
            ("matrix", to_value(a)),
            ("sp", json!(sp)),
            ("oracle", json!(bound)),
        ],
    );
    let charpoly = a.charpoly()?;
    let gate = mahler_gate(&charpoly)?;
    let report = match centralizer_report(a, bound, sp) {
        Ok(r) => r,
        Err(e @ (Error::Reducible(_) | Error::NotHyperbolic(_) | Error::Unsupported(_))) => {
            let classification = classify_roots(&charpoly).ok();
            let report = Report {
                command: cmd,
                results: json!({
                    "charpoly": to_value(&charpoly),
                    "classification": to_value(&classification),
                    "mahler_gate": to_value(&gate),
                    "verdict": e.to_string(),
                }),
                warnings,
            };
            return Err(Failure {
                code: exit_code(&e),
                error: e,
                report: Some(Box::new(report)),
            });
        }
        Err(e) => return Err(e.into()),
    };
    let agrees = report.oracle_agrees();
    let results = json!({
        "charpoly": to_value(&charpoly),
        "mahler_gate": to_value(&gate),
        "report": to_value(&report),
        "oracle_agrees": agrees,
    });
    let out = Report {
        command: cmd,
        results,
        warnings,
    };
    if !agrees {
        let e = Error::LawViolation("centralizer rank formula disagrees with the oracle".into());
        return Err(Failure {
            code: EXIT_LAW,
            error: e,
            report: Some(Box::new(out)),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct ConjugacyOutputs {
    pub grid: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub probe: bool,
}

fn default_probe_point(d: usize) -> Vec<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    (1..=d).map(|i| (i as f64 * g).fract()).collect()
}

pub fn cmd_conjugacy(
    action: &Action,
    settings: &Settings,
    outputs: &ConjugacyOutputs,
) -> CmdResult {
    let s = settings.merged(&action.file.options);
    let (gen, field) = action.field()?.ok_or_else(|| {
        Error::InvalidInput("perturbation: section required for conjugacy".into())
    })?;
    let f = &action.maps[gen];
    let opts = SolveOptions {
        grid_su: s.grid.unwrap_or(DEFAULT_GRID_SU),
        grid_center: s.grid_center.unwrap_or(DEFAULT_GRID_CENTER),
        depth: s.depth.unwrap_or(DEFAULT_DEPTH),
    };
    let tol = s.tol.unwrap_or(DEFAULT_TOL);
    let pm = PerturbedMap::new(f, &field)?;
    let sol = pm.solve(&opts)?;
    let mut warnings = action.warnings.clone();
    warnings.extend(sol.warnings.iter().cloned());
    let recheck = conjugacy_residual(&sol, &pm)?;
    let equivariance = equivariance_defect(&sol)?;
    if let Some(path) = &outputs.grid {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        sol.write_grid(std::io::BufWriter::new(file))?;
    }
    if let Some(path) = &outputs.csv {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        sol.write_residual_csv(std::io::BufWriter::new(file))?;
    }
    let probe = if !outputs.probe {
        Value::Null
    } else if !pm.gate.passes {
        warnings.push("fiber probe skipped: perturbation gate failed".into());
        Value::Null
    } else {
        let y = action
            .file
            .options
            .probe_point
            .clone()
            .unwrap_or_else(|| default_probe_point(sol.d));
        if y.len() != sol.d {
            return Err(Error::InvalidInput(format!(
                "options.probe_point: expected {} entries, found {}",
                sol.d,
                y.len()
            ))
            .into());
        }
        let probe_opts = FiberProbeOptions {
            seed: s.seed(),
            ..Default::default()
        };
        let r = fiber_probe(&sol, &pm, &y, &probe_opts)?;
        if r.failed > 0 {
            warnings.push(format!(
                "fiber probe: {} root solves did not converge",
                r.failed
            ));
        }
        json!({"target": y, "report": to_value(&r)})
    };
    let results = json!({
        "generator": gen,
        "lattice": to_value(&sol.lattice),
        "grid": sol.grid,
        "depth": sol.truncation_depth,
        "gate": to_value(&sol.gate),
        "residual_max": sol.residual_max,
        "residual_mean": sol.residual_mean,
        "recheck_max": recheck.max,
        "recheck_mean": recheck.mean,
        "equivariance_defect": equivariance,
        "interpolation_error_estimate": sol.interpolation_error_estimate(),
        "tolerance": tol,
        "grid_file": outputs.grid.as_ref().map(|p| p.display().to_string()),
        "csv_file": outputs.csv.as_ref().map(|p| p.display().to_string()),
        "fiber_probe": probe,
    });
    let report = Report {
        command: echo(
            "conjugacy",
            &Settings {
                grid: Some(opts.grid_su),
                grid_center: Some(opts.grid_center),
                depth: Some(opts.depth),
                tol: Some(tol),
                ..s.clone()
            },
            &[],
        ),
        results,
        warnings,
    };
    if sol.residual_max.is_nan() || sol.residual_max > tol {
        let e = Error::ToleranceMiss {
            achieved: sol.residual_max,
            tol,
        };
        return Err(Failure {
            code: EXIT_TOLERANCE,
            error: e,
            report: Some(Box::new(report)),
        });
    }
    Ok(report)
}

pub fn resolve_word(letters: &[WordLetter], model: &SuModel) -> Result<SuWord> {
    let mut out = Vec::with_capacity(letters.len());
    for (i, l) in letters.iter().enumerate() {
        let loc = format!("word[{i}]");
        let letter = match (&l.vec, &l.coords) {
            (Some(v), None) => Letter::new(l.slot, v.clone()),
            (None, Some(c)) => model
                .letter_from_coords(l.slot, c)
                .map_err(|e| at(&loc, e))?,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "{loc}: exactly one of `vec` or `coords` is required"
                )))
            }
        };
        if letter.vec.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("{loc}: non-finite entry")));
        }
        model.check_letter(&letter).map_err(|e| at(&loc, e))?;
        out.push(letter);
    }
    Ok(SuWord::new(out))
}

pub fn cmd_suword(action: &Action, settings: &Settings) -> CmdResult {
    let s = settings.merged(&action.file.options);
    let letters = action
        .file
        .word
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("word: section required for suword".into()))?;
    let model = SuModel::new(&action.maps[0])?;
    let w = resolve_word(letters, &model)?;
    let d = model.d();
    let (n, m) = (action.lattice.n, action.lattice.m);
    let x = match &action.file.options.base_point {
        Some(p) => GroupElement::from_flat(n, m, p).map_err(|e| at("options.base_point", e))?,
        None => GroupElement::identity(n, m),
    };
    let pi = w.pi(d);
    let nf = word_normal_form(&w, d);
    let recompose_ok = nf.recompose().approx_eq(&w, 1e-9);
    let y = apply_su_word_affine(&w, &x, &model)?;
    let shift = phi_shift(&w, &x, &model)?;
    let shift_gap = shift
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let closed = center_drift(&w, &model).ok();
    let mut warnings = action.warnings.clone();
    if closed.is_none() {
        warnings.push("word is not closed (Pi(w) != 0): center drift not defined".into());
    }
    let area = symplectic_area(&w, n);
    let results = json!({
        "word": to_value(&w),
        "letters": w.len(),
        "pi": pi,
        "closed": closed.is_some(),
        "normal_form": to_value(&nf),
        "normal_form_recomposes": recompose_ok,
        "base_point": to_value(&x),
        "image": to_value(&y),
        "phi_shift": shift,
        "phi_shift_minus_pi": shift_gap,
        "center_drift": closed,
        "symplectic_area": area,
        "drift_minus_area": closed.map(|c| c - area),
    });
    Ok(Report {
        command: echo("suword", &s, &[]),
        results,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// `x + rho`.
    Rotation { rho: f64 },
    /// `x + rho + k / (2 pi) sin(2 pi x)`, monotone for `|k| < 1`.
    Arnold { rho: f64, k: f64 },
    /// `h R_rho h^-1` with `h(x) = x + a / (2 pi) sin(2 pi x)`, `|a| < 1`.
    ConjugateRotation { rho: f64, a: f64 },
    /// Lift samples at `i / N`, `i = 0..=N`.
    Samples { samples: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSection {
    /// Build the demo maps with this parameter instead of `f`, `g`, `matrix`.
    #[serde(default)]
    pub demo: Option<f64>,
    #[serde(default)]
    pub f: Option<Vec<usize>>,
    #[serde(default)]
    pub g: Option<usize>,
    #[serde(default)]
    pub matrix: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    pub set: Option<Vec<(f64, f64)>>,
    /// Sampling resolution of the relation check.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleFile {
    pub version: String,
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub maps: Vec<MapSpec>,
    #[serde(default)]
    pub abc: Option<AbcSection>,
}

fn sine_shift(a: f64) -> impl Fn(f64) -> f64 {
    move |x| x + a / (2.0 * PI) * (2.0 * PI * x).sin()
}

/// Inverse of `x + a / (2 pi) sin(2 pi x)` by Newton's method.
fn sine_shift_inverse(a: f64, y: f64) -> f64 {
    let mut x = y;
    for _ in 0..100 {
        let fx = x + a / (2.0 * PI) * (2.0 * PI * x).sin() - y;
        let step = fx / (1.0 + a * (2.0 * PI * x).cos());
        x -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    x
}

pub fn build_circle_map(spec: &MapSpec, resolution: usize) -> Result<CircleMap> {
    match *spec {
        MapSpec::Rotation { rho } => Ok(CircleMap::rotation(rho, resolution)),
        MapSpec::Arnold { rho, k } => {
            if k.is_nan() || k.abs() >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "arnold map with |k| = {k} is not a homeomorphism"
                )));
            }
            CircleMap::from_fn(
                |x| x + rho + k / (2.0 * PI) * (2.0 * PI * x).sin(),
                resolution,
            )
        }
        MapSpec::ConjugateRotation { rho, a } => {
            if a.is_nan() || a.abs() >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "conjugacy with |a| = {a} is not a homeomorphism"
                )));
            }
            let h = sine_shift(a);
            CircleMap::from_fn(|x| h(sine_shift_inverse(a, x) + rho), resolution)
        }
        MapSpec::Samples { ref samples } => CircleMap::from_samples(samples.clone()),
    }
}

pub fn load_circle_file(path: &Path) -> Result<CircleFile> {
    let text = read_text(path)?;
    let file: CircleFile = parse_document(&text, is_json_path(path))?;
    if file.version != VERSION_TAG {
        return Err(Error::InvalidInput(format!(
            "version: expected \"{VERSION_TAG}\", found \"{}\"",
            file.version
        )));
    }
    Ok(file)
}

/// Max over sample points of `|f g(x) - g f(x)|` on the circle.
fn commutation_defect(f: &CircleMap, g: &CircleMap, samples: usize) -> f64 {
    (0..samples)
        .map(|i| {
            let x = i as f64 / samples as f64;
            circle_dist(f.eval(g.eval(x)), g.eval(f.eval(x)))
        })
        .fold(0.0, f64::max)
}

pub fn cmd_rotnum(file: &CircleFile, settings: &Settings) -> CmdResult {
    let resolution = file.resolution.unwrap_or(DEFAULT_CIRCLE_RESOLUTION);
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution: must be positive".into()).into());
    }
    let iterations = settings
        .iters
        .or(file.iterations)
        .unwrap_or(DEFAULT_ITERATIONS);
    let mut maps = Vec::with_capacity(file.maps.len());
    for (i, spec) in file.maps.iter().enumerate() {
        maps.push(build_circle_map(spec, resolution).map_err(|e| at(&format!("maps[{i}]"), e))?);
    }
    let mut warnings = Vec::new();
    let rotations: Vec<Value> = maps
        .iter()
        .map(|c| to_value(&rotation_number(c, iterations)))
        .collect();
    let composition = if maps.len() >= 2 {
        let mut prod = maps[0].clone();
        for c in &maps[1..] {
            prod = prod.compose(c)?;
        }
        let rho = rotation_number(&prod, iterations);
        let sum: f64 = maps
            .iter()
            .map(|c| rotation_number(c, iterations).value)
            .sum::<f64>();
        let defect = circle_dist(rho.value, sum);
        let comm = (1..maps.len())
            .map(|i| commutation_defect(&maps[0], &maps[i], 1024))
            .fold(0.0, f64::max);
        if comm > 1e-6 {
            warnings.push(format!(
                "maps do not commute (defect {comm:e}); additivity is not expected"
            ));
        }
        json!({"rotation": to_value(&rho), "sum_of_rotations": sum.rem_euclid(1.0), "additivity_defect": defect, "commutation_defect": comm})
    } else {
        Value::Null
    };
    let abc = match &file.abc {
        None => Value::Null,
        Some(sec) => {
            let mut opts = AbcOptions {
                start: sec.start,
                ..Default::default()
            };
            if let Some(s) = sec.samples {
                opts.samples = s;
            }
            if let Some(m) = sec.max_iterations {
                opts.max_iterations = m;
            }
            if let Some(t) = settings.tol {
                opts.cauchy_tol = t;
            }
            let (fs, g, a) = match sec.demo {
                Some(c) => {
                    let (f, g) = abc_demo_maps(c, resolution).map_err(|e| at("abc.demo", e))?;
                    (vec![f], g, IntMatrix::from_rows(&[vec![2]])?)
                }
                None => {
                    let fi = sec.f.as_ref().ok_or_else(|| {
                        Error::InvalidInput("abc.f: required without `demo`".into())
                    })?;
                    let gi = sec.g.ok_or_else(|| {
                        Error::InvalidInput("abc.g: required without `demo`".into())
                    })?;
                    let get = |i: usize, loc: &str| {
                        maps.get(i).cloned().ok_or_else(|| {
                            Error::InvalidInput(format!("{loc}: map index {i} out of range"))
                        })
                    };
                    let fs = fi
                        .iter()
                        .map(|&i| get(i, "abc.f"))
                        .collect::<Result<Vec<_>>>()?;
                    let rows = sec.matrix.as_ref().ok_or_else(|| {
                        Error::InvalidInput("abc.matrix: required without `demo`".into())
                    })?;
                    (fs, get(gi, "abc.g")?, matrix_at("abc.matrix", rows)?)
                }
            };
            let k_set = match &sec.set {
                Some(iv) => CompactSet::new(iv.clone()).map_err(|e| at("abc.set", e))?,
                None => CompactSet::circle(),
            };
            if opts.samples < 1 << 10 {
                warnings.push(format!(
                    "relation check sampled at {} points, below the default 1024",
                    opts.samples
                ));
            }
            let r = find_periodic_point_abc(&fs, &g, &a, &k_set, &opts)?;
            to_value(&r)
        }
    };
    let results = json!({
        "resolution": resolution,
        "iterations": iterations,
        "maps": rotations,
        "composition": composition,
        "abc": abc,
    });
    Ok(Report {
        command: echo("rotnum", settings, &[("resolution", json!(resolution))]),
        results,
        warnings,
    })
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) || a.is_empty() => {
            let parts: Vec<String> = a.iter().filter_map(scalar_text).collect();
            Some(format!("[{}]", parts.join(", ")))
        }
        Value::Array(a)
            if a.iter().all(|x| {
                x.as_array()
                    .is_some_and(|r| r.iter().all(|y| !y.is_object() && !y.is_array()))
            }) =>
        {
            let parts: Vec<String> = a.iter().filter_map(scalar_text).collect();
            Some(format!("[{}]", parts.join(", ")))
        }
        _ => None,
    }
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    if let Some(s) = scalar_text(v) {
        rows.push((prefix.to_string(), s));
        return;
    }
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, rows);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, rows);
            }
        }
        _ => unreachable!("scalars handled above"),
    }
}

/// Two-column text rendering of a report.
pub fn render_table(report: &Report) -> String {
    let mut rows = Vec::new();
    flatten("", &report.results, &mut rows);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = format!("{}\n", report.command.name);
    for (k, v) in rows {
        out.push_str(&format!("  {k:<width$}  {v}\n"));
    }
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

fn dispatch(cli: &Cli) -> CmdResult {
    let settings = Settings::from_cli(cli);
    match &cli.command {
        Command::Analyze { file } => {
            let action = load_action_file(file)?;
            cmd_analyze(&action, &settings)
        }
        Command::Centralizer { input, sp, oracle } => {
            let (a, _) = parse_centralizer_input(input)?;
            let oracle = oracle.map(|b| cli.bound.unwrap_or(b));
            cmd_centralizer(&a, *sp, oracle, &settings)
        }
        Command::Conjugacy {
            file,
            csv,
            grid_center,
            no_probe,
        } => {
            let action = load_action_file(file)?;
            let outputs = ConjugacyOutputs {
                grid: Some(cli.out.clone().unwrap_or_else(|| PathBuf::from("phi.grid"))),
                csv: csv.clone(),
                probe: !no_probe,
            };
            let settings = Settings {
                grid_center: *grid_center,
                ..settings
            };
            cmd_conjugacy(&action, &settings, &outputs)
        }
        Command::Suword { file } => {
            let action = load_action_file(file)?;
            cmd_suword(&action, &settings)
        }
        Command::Rotnum { file } => {
            let f = load_circle_file(file)?;
            cmd_rotnum(&f, &settings)
        }
        Command::Selftest => crate::selftest::cmd_selftest(settings.seed()),
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn print_stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn emit(cli: &Cli, report: &Report) -> Result<()> {
    let text = report.to_json();
    let shown = if cli.json {
        format!("{text}\n")
    } else if matches!(cli.command, Command::Selftest) {
        crate::selftest::render(report)
    } else {
        render_table(report)
    };
    print_stdout(&shown);
    if let (Some(path), false) = (&cli.out, matches!(cli.command, Command::Conjugacy { .. })) {
        std::fs::write(path, text + "\n")
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_PARSE;
        }
        // a second initialization only happens in tests; keep the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let start = Instant::now();
    let outcome = dispatch(&cli);
    let name = match &cli.command {
        Command::Analyze { .. } => "analyze",
        Command::Centralizer { .. } => "centralizer",
        Command::Conjugacy { .. } => "conjugacy",
        Command::Suword { .. } => "suword",
        Command::Rotnum { .. } => "rotnum",
        Command::Selftest => "selftest",
    };
    eprintln!("{name}: {:.3} s", start.elapsed().as_secs_f64());
    match outcome {
        Ok(report) => match emit(&cli, &report) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Err(f) => {
            if let Some(report) = &f.report {
                if let Err(e) = emit(&cli, report) {
                    eprintln!("error: {e}");
                }
            } else if cli.json {
                let v = json!({"error": f.error.to_string(), "exit_code": f.code});
                print_stdout(&format!(
                    "{}\n",
                    serde_json::to_string_pretty(&v).expect("plain JSON")
                ));
            }
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}
