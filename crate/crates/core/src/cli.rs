//! Scenario files and the command-line front end.
//!
//! Exit codes: 0 success, 1 synthesis or budget failure, 2 invalid input,
//! 3 theory gate.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{blowup_profile, AnalysisError, Sampled};
use crate::geometry::{
    GeometryError, Grid, LevelSetTube, MovingTube, Path as KnotPath, SetState, Vec2,
};
use crate::scare::{classify, ScareFunction};
use crate::synthesis::{approximate_sweeping, confine, ConfineParams, SweepParams, SynthesisError};

/// Version of the JSON artifacts written to run directories.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("theory gate: {0}")]
    Gate(String),
    #[error("{0}")]
    Failure(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failure(_) | CliError::Io(_) => 1,
            CliError::Input(_) => 2,
            CliError::Gate(_) => 3,
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::TheoryGate(m) => CliError::Gate(m),
            SynthesisError::Precondition(_) | SynthesisError::Geometry(_) => {
                CliError::Input(e.to_string())
            }
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Field(_) => CliError::Failure(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

/// A scare function given either as `power:p[:c]` or as a tagged object.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PhiSpec {
    Text(String),
    Full(ScareFunction),
}

impl PhiSpec {
    pub fn resolve(&self) -> Result<ScareFunction, CliError> {
        match self {
            PhiSpec::Text(s) => s
                .parse()
                .map_err(|e| CliError::Input(format!("scare function {s:?}: {e}"))),
            PhiSpec::Full(f) => Ok(f.clone()),
        }
    }
}

fn default_vertices() -> usize {
    256
}

/// Named planar set primitives.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Disk {
        center: Vec2,
        radius: f64,
        #[serde(default = "default_vertices")]
        vertices: usize,
        spacing: f64,
    },
    Ellipse {
        center: Vec2,
        a: f64,
        b: f64,
        #[serde(default)]
        angle: f64,
        #[serde(default = "default_vertices")]
        vertices: usize,
        spacing: f64,
    },
    Polygon {
        vertices: Vec<Vec2>,
        max_edge: f64,
        spacing: f64,
    },
    AnnularSector {
        center: Vec2,
        r_in: f64,
        r_out: f64,
        a0: f64,
        a1: f64,
        #[serde(default = "default_vertices")]
        arc_vertices: usize,
        spacing: f64,
    },
    /// Sublevel set `{g <= 0}` of a gridded function (header path relative
    /// to the scenario file).
    LevelSet {
        grid: PathBuf,
        #[serde(default = "default_vertices")]
        vertices: usize,
        spacing: f64,
    },
}

impl GeometrySpec {
    fn spacing(&self) -> f64 {
        match self {
            GeometrySpec::Disk { spacing, .. }
            | GeometrySpec::Ellipse { spacing, .. }
            | GeometrySpec::Polygon { spacing, .. }
            | GeometrySpec::AnnularSector { spacing, .. }
            | GeometrySpec::LevelSet { spacing, .. } => *spacing,
        }
    }

    /// Builds the set; `jitter` in `[0, 1)^2` shifts the sample lattice by
    /// that fraction of the spacing.
    pub fn build(&self, base: &Path, jitter: Vec2) -> Result<SetState, CliError> {
        let sp = self.spacing();
        if !(sp > 0.0 && sp.is_finite()) {
            return Err(CliError::Input(format!(
                "sample spacing must be positive, got {sp}"
            )));
        }
        let offset = jitter * sp;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Input(format!("{name} must be positive, got {v}")))
            }
        };
        let enough = |v: usize| {
            if v >= 8 {
                Ok(())
            } else {
                Err(CliError::Input(format!(
                    "at least 8 boundary vertices are required, got {v}"
                )))
            }
        };
        let set = match self {
            GeometrySpec::Disk {
                center,
                radius,
                vertices,
                ..
            } => {
                positive("radius", *radius)?;
                enough(*vertices)?;
                SetState::disk_with_offset(*center, *radius, *vertices, sp, offset)
            }
            GeometrySpec::Ellipse {
                center,
                a,
                b,
                angle,
                vertices,
                ..
            } => {
                positive("semi-axis a", *a)?;
                positive("semi-axis b", *b)?;
                enough(*vertices)?;
                SetState::ellipse(*center, *a, *b, *angle, *vertices, sp, offset)
            }
            GeometrySpec::Polygon {
                vertices, max_edge, ..
            } => {
                positive("max_edge", *max_edge)?;
                SetState::polygon(vertices, *max_edge, sp, offset)?
            }
            GeometrySpec::AnnularSector {
                center,
                r_in,
                r_out,
                a0,
                a1,
                arc_vertices,
                ..
            } => {
                positive("r_in", *r_in)?;
                if !(r_out > r_in && a1 > a0 && a1 - a0 < 2.0 * std::f64::consts::PI) {
                    return Err(CliError::Input(
                        "annular sector needs r_in < r_out and 0 < a1 - a0 < 2 pi".into(),
                    ));
                }
                enough(*arc_vertices)?;
                SetState::annular_sector(*center, *r_in, *r_out, *a0, *a1, *arc_vertices, sp)
            }
            GeometrySpec::LevelSet { grid, vertices, .. } => {
                enough(*vertices)?;
                let g = Grid::read(&base.join(grid))?;
                let l = Arc::new(LevelSetTube::new(g.clone(), g, 1.0)?);
                let boundary = l.contour(0.0)?.sample(*vertices, 0.0);
                SetState::with_grid_samples(boundary, sp, offset)
            }
        };
        set.validate()?;
        Ok(set)
    }
}

/// Tube given by knots of its center and size, or by two gridded level
/// functions blended over the horizon.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TubeSpec {
    Ball {
        center: Vec<(f64, Vec2)>,
        radius: Vec<(f64, f64)>,
    },
    Ellipse {
        center: Vec<(f64, Vec2)>,
        a: Vec<(f64, f64)>,
        b: Vec<(f64, f64)>,
        #[serde(default)]
        angle: f64,
    },
    LevelSet {
        psi0: PathBuf,
        psi1: PathBuf,
    },
}

impl TubeSpec {
    pub fn build(&self, base: &Path, horizon: f64) -> Result<MovingTube, CliError> {
        let tube = match self {
            TubeSpec::Ball { center, radius } => MovingTube::Ball {
                center: KnotPath::from_knots(center.clone())?,
                radius: KnotPath::from_knots(radius.clone())?,
                horizon,
            },
            TubeSpec::Ellipse {
                center,
                a,
                b,
                angle,
            } => MovingTube::Ellipse {
                center: KnotPath::from_knots(center.clone())?,
                a: KnotPath::from_knots(a.clone())?,
                b: KnotPath::from_knots(b.clone())?,
                angle: *angle,
                horizon,
            },
            TubeSpec::LevelSet { psi0, psi1 } => {
                let g0 = Grid::read(&base.join(psi0))?;
                let g1 = Grid::read(&base.join(psi1))?;
                MovingTube::LevelSet(Arc::new(LevelSetTube::new(g0, g1, horizon)?))
            }
        };
        tube.validate()?;
        Ok(tube)
    }
}

fn default_profile_panels() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default)]
    pub time: f64,
    pub eps: Vec<f64>,
    #[serde(default = "default_profile_panels")]
    pub panels: usize,
}

fn default_dim() -> u32 {
    2
}

fn default_outputs() -> usize {
    40
}

fn default_reference_steps() -> usize {
    2000
}

fn default_continuum_points() -> usize {
    200
}

/// A run configuration.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub phi: PhiSpec,
    #[serde(default = "default_dim")]
    pub dim: u32,
    #[serde(default)]
    pub omega0: Option<GeometrySpec>,
    #[serde(default)]
    pub omega1: Option<GeometrySpec>,
    #[serde(default)]
    pub tube: Option<TubeSpec>,
    pub horizon: f64,
    pub eps: f64,
    #[serde(default)]
    pub ladder: Vec<(usize, usize)>,
    /// fixed field scale for sweeps
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_outputs")]
    pub outputs: usize,
    #[serde(default = "default_reference_steps")]
    pub reference_steps: usize,
    #[serde(default = "default_continuum_points")]
    pub continuum_points: usize,
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// shifts the sample lattices; absent means unshifted lattices
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("scenario: {e}")))?;
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), CliError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Input(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(CliError::Input(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.dim < 2 {
            return Err(CliError::Input("dimension must be at least 2".into()));
        }
        if self.ladder.iter().any(|&(n, m)| n == 0 || m == 0) {
            return Err(CliError::Input("ladder rungs need positive n and N".into()));
        }
        self.phi.resolve()?;
        Ok(())
    }

    fn jitters(&self) -> (Vec2, Vec2) {
        match self.seed {
            None => (Vec2::ZERO, Vec2::ZERO),
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let mut draw = || Vec2::new(rng.gen::<f64>(), rng.gen::<f64>());
                (draw(), draw())
            }
        }
    }

    fn planar(&self) -> Result<(), CliError> {
        if self.dim != 2 {
            return Err(CliError::Input(format!(
                "set evolutions are planar; dimension {} is not supported",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Parses `n1xN1,n2xN2,...`.
pub fn parse_ladder(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    s.split(',')
        .map(|rung| {
            let (a, b) = rung.trim().split_once(['x', 'X']).ok_or_else(|| {
                CliError::Input(format!("ladder rung {rung:?} is not of the form nxN"))
            })?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&k| k > 0)
                    .ok_or_else(|| {
                        CliError::Input(format!("ladder rung {rung:?} needs positive integers"))
                    })
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

#[derive(Debug, Parser)]
#[command(
    name = "sweepctl",
    version,
    about = "Repelling-agent confinement and sweeping-process approximation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a scare function (JSON report on stdout).
    Classify {
        #[arg(long)]
        phi: Option<String>,
        #[arg(long)]
        dim: Option<u32>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Synthesize a confining schedule for a scenario.
    Confine(RunArgs),
    /// Approximate the sweeping process of a scenario's tube.
    Sweep(RunArgs),
    /// Near-boundary inflow and alignment profile of a scenario's tube.
    Profile(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// run directory (defaults to the scenario's `out`, then `runs/<name>`)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// overrides the scenario's scare function, e.g. `power:3`
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub dim: Option<u32>,
    /// overrides the budget ladder, e.g. `20x32,40x64`
    #[arg(long)]
    pub ladder: Option<String>,
}

/// A scenario with overrides applied and the location it was read from.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub base: PathBuf,
    /// SHA-256 of the scenario file bytes
    pub hash: String,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Input("scenario is not UTF-8".into()))?;
    let scenario = Scenario::from_json(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedScenario {
        scenario,
        base,
        hash: hex::encode(Sha256::digest(&bytes)),
    })
}

impl RunArgs {
    fn load(&self) -> Result<(LoadedScenario, PathBuf), CliError> {
        let mut loaded = load_scenario(&self.scenario)?;
        let sc = &mut loaded.scenario;
        if let Some(p) = &self.phi {
            sc.phi = PhiSpec::Text(p.clone());
        }
        if let Some(d) = self.dim {
            sc.dim = d;
        }
        if let Some(l) = &self.ladder {
            sc.ladder = parse_ladder(l)?;
        }
        sc.check()?;
        let out = self
            .out
            .clone()
            .or_else(|| sc.out.as_ref().map(|o| loaded.base.join(o)))
            .unwrap_or_else(|| {
                let name = if sc.name.is_empty() {
                    "run"
                } else {
                    sc.name.as_str()
                };
                PathBuf::from("runs").join(name)
            });
        Ok((loaded, out))
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    schema_version: u32,
    command: &'a str,
    scenario_name: &'a str,
    scenario_sha256: &'a str,
    exit_code: u8,
    started_unix_seconds: u64,
    elapsed_seconds: f64,
    files: Vec<String>,
}

/// Result of a run: the exit code and the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub exit_code: u8,
    pub dir: PathBuf,
    pub files: Vec<String>,
}

struct RunDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
    }

    fn finish(
        mut self,
        command: &str,
        loaded: &LoadedScenario,
        exit_code: u8,
        started: (u64, Instant),
    ) -> Result<RunSummary, CliError> {
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        let manifest = Manifest {
            tool: "sweepctl",
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            command,
            scenario_name: &loaded.scenario.name,
            scenario_sha256: &loaded.hash,
            exit_code,
            started_unix_seconds: started.0,
            elapsed_seconds: started.1.elapsed().as_secs_f64(),
            files: files.clone(),
        };
        self.json("manifest.json", &manifest)?;
        Ok(RunSummary {
            exit_code,
            dir: self.dir,
            files,
        })
    }
}

fn start_clock() -> (u64, Instant) {
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    (unix, Instant::now())
}

#[derive(Debug, Serialize)]
struct RunReport<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    scenario: &'a str,
    phi: String,
    #[serde(flatten)]
    body: T,
}

fn require<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::Input(format!("scenario needs {what}")))
}

/// Confinement run: `schedule.json`, `evolution.csv`, `final.csv`,
/// `rungs.csv`, `report.json` and `manifest.json`.
pub fn run_confine(loaded: &LoadedScenario, out: &Path) -> Result<RunSummary, CliError> {
    let started = start_clock();
    let sc = &loaded.scenario;
    sc.planar()?;
    let scare = sc.phi.resolve()?;
    if sc.ladder.is_empty() {
        return Err(CliError::Input("confinement needs a budget ladder".into()));
    }
    let (j0, j1) = sc.jitters();
    let omega0 = require(&sc.omega0, "omega0")?.build(&loaded.base, j0)?;
    let omega1 = require(&sc.omega1, "omega1")?.build(&loaded.base, j1)?;
    let params = ConfineParams {
        eps: sc.eps,
        horizon: sc.horizon,
        ladder: sc.ladder.clone(),
        outputs: sc.outputs,
    };
    let outcome = confine(&scare, &omega0, &omega1, &params)?;
    let mut run = RunDir::create(out)?;
    if let Some(s) = &outcome.schedule {
        run.json("schedule.json", s)?;
    }
    if let Some(evo) = &outcome.evolution {
        run.write("evolution.csv", |mut w| evo.write_csv(&mut w))?;
        run.write("final.csv", |w| {
            writeln!(w, "kind,x,y")?;
            let last = evo.last();
            for p in last.boundary() {
                writeln!(w, "boundary,{},{}", p.x, p.y)?;
            }
            for p in last.samples() {
                writeln!(w, "sample,{},{}", p.x, p.y)?;
            }
            Ok(())
        })?;
    }
    run.write("rungs.csv", |w| {
        writeln!(
            w,
            "n,N,delta_used,status,hausdorff,excess,coverage,min_agent_distance"
        )?;
        for r in &outcome.rungs {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{:?},{},{},{},{}",
                r.n,
                r.masses,
                r.delta_used,
                r.status,
                opt(r.hausdorff),
                opt(r.excess),
                opt(r.coverage),
                r.min_agent_distance
            )?;
        }
        Ok(())
    })?;
    let achieved = outcome.best_rung().and_then(|r| r.hausdorff);
    #[derive(Serialize)]
    struct Body<'a> {
        eps: f64,
        horizon: f64,
        #[serde(rename = "d_H")]
        d_h: Option<f64>,
        outcome: &'a crate::synthesis::ConfineOutcome,
    }
    let code = if outcome.success { 0 } else { 1 };
    run.json(
        "report.json",
        &RunReport {
            schema_version: SCHEMA_VERSION,
            command: "confine",
            scenario: &sc.name,
            phi: scare.to_string(),
            body: Body {
                eps: sc.eps,
                horizon: sc.horizon,
                d_h: achieved,
                outcome: &outcome,
            },
        },
    )?;
    run.finish("confine", loaded, code, started)
}

/// Sweeping run: `reference.csv`, `candidate.csv`, `errors.csv`,
/// `rungs.csv`, `schedule.json`, `report.json` and `manifest.json`.
pub fn run_sweep(loaded: &LoadedScenario, out: &Path) -> Result<RunSummary, CliError> {
    let started = start_clock();
    let sc = &loaded.scenario;
    sc.planar()?;
    let scare = sc.phi.resolve()?;
    if sc.ladder.is_empty() {
        return Err(CliError::Input("sweeping needs a budget ladder".into()));
    }
    let (j0, _) = sc.jitters();
    let omega0 = require(&sc.omega0, "omega0")?.build(&loaded.base, j0)?;
    let tube = require(&sc.tube, "a tube")?.build(&loaded.base, sc.horizon)?;
    let params = SweepParams {
        eps: sc.eps,
        horizon: sc.horizon,
        delta: sc.delta,
        ladder: sc.ladder.clone(),
        outputs: sc.outputs,
        reference_steps: sc.reference_steps,
        continuum_points: sc.continuum_points,
    };
    let outcome = approximate_sweeping(&scare, &tube, &omega0, &params)?;
    let mut run = RunDir::create(out)?;
    let times = outcome.output_times.clone();
    let skip = outcome.reference.len() - outcome.candidate.len();
    run.write("reference.csv", |w| {
        writeln!(w, "point,t,x,y")?;
        for (k, r) in outcome.reference[skip..].iter().enumerate() {
            for &t in &times {
                let p = r.position(t);
                writeln!(w, "{k},{t},{},{}", p.x, p.y)?;
            }
        }
        Ok(())
    })?;
    run.write("candidate.csv", |w| {
        writeln!(w, "point,t,x,y")?;
        for (k, c) in outcome.candidate.iter().enumerate() {
            for &t in &times {
                let p = c.position(t);
                writeln!(w, "{k},{t},{},{}", p.x, p.y)?;
            }
        }
        Ok(())
    })?;
    if let Some(e) = &outcome.errors {
        run.write("errors.csv", |mut w| e.write_csv(&mut w))?;
    }
    run.write("rungs.csv", |w| {
        writeln!(
            w,
            "n,N,delta_used,status,sup_error,max_hausdorff,min_agent_distance"
        )?;
        for r in &outcome.rungs {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{:?},{},{},{}",
                r.n,
                r.masses,
                r.delta_used,
                r.status,
                opt(r.sup_error),
                opt(r.max_hausdorff),
                r.min_agent_distance
            )?;
        }
        Ok(())
    })?;
    if let Some(s) = &outcome.schedule {
        run.json("schedule.json", s)?;
    }
    let last = outcome.rungs.last();
    #[derive(Serialize)]
    struct Body<'a> {
        eps: f64,
        horizon: f64,
        sup_error: Option<f64>,
        max_hausdorff: Option<f64>,
        outcome: &'a crate::synthesis::SweepOutcome,
    }
    let code = if outcome.success { 0 } else { 1 };
    run.json(
        "report.json",
        &RunReport {
            schema_version: SCHEMA_VERSION,
            command: "sweep",
            scenario: &sc.name,
            phi: scare.to_string(),
            body: Body {
                eps: sc.eps,
                horizon: sc.horizon,
                sup_error: last.and_then(|r| r.sup_error),
                max_hausdorff: last.and_then(|r| r.max_hausdorff),
                outcome: &outcome,
            },
        },
    )?;
    run.finish("sweep", loaded, code, started)
}

/// Profile run: `profiles.csv`, `report.json` and `manifest.json`.
pub fn run_profile(loaded: &LoadedScenario, out: &Path) -> Result<RunSummary, CliError> {
    let started = start_clock();
    let sc = &loaded.scenario;
    sc.planar()?;
    let scare = sc.phi.resolve()?;
    let tube = require(&sc.tube, "a tube")?.build(&loaded.base, sc.horizon)?;
    let spec = require(&sc.profile, "a profile section")?;
    if spec.eps.is_empty() {
        return Err(CliError::Input("profile needs at least one depth".into()));
    }
    let report = blowup_profile(&tube, &scare, spec.time, &spec.eps, spec.panels)?;
    let mut run = RunDir::create(out)?;
    run.write("profiles.csv", |mut w| report.write_csv(&mut w))?;
    run.json(
        "report.json",
        &RunReport {
            schema_version: SCHEMA_VERSION,
            command: "profile",
            scenario: &sc.name,
            phi: scare.to_string(),
            body: &report,
        },
    )?;
    run.finish("profile", loaded, 0, started)
}

/// JSON classification report for a scare function.
pub fn run_classify(
    phi: Option<&str>,
    dim: Option<u32>,
    scenario: Option<&Path>,
) -> Result<String, CliError> {
    let from_file = scenario.map(load_scenario).transpose()?;
    let scare = match (phi, &from_file) {
        (Some(p), _) => PhiSpec::Text(p.to_string()).resolve()?,
        (None, Some(l)) => l.scenario.phi.resolve()?,
        (None, None) => return Err(CliError::Input("give --phi or --scenario".into())),
    };
    let d = dim
        .or(from_file.as_ref().map(|l| l.scenario.dim))
        .unwrap_or(2);
    if d < 2 {
        return Err(CliError::Input("dimension must be at least 2".into()));
    }
    serde_json::to_string_pretty(&classify(&scare, d)).map_err(|e| CliError::Failure(e.to_string()))
}

/// Parses `args` and runs the command, printing diagnostics to stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Classify { phi, dim, scenario } => {
            run_classify(phi.as_deref(), *dim, scenario.as_deref()).map(|json| {
                println!("{json}");
                0
            })
        }
        Command::Confine(a) => a
            .load()
            .and_then(|(l, out)| run_confine(&l, &out))
            .map(|s| report_exit(&s)),
        Command::Sweep(a) => a
            .load()
            .and_then(|(l, out)| run_sweep(&l, &out))
            .map(|s| report_exit(&s)),
        Command::Profile(a) => a
            .load()
            .and_then(|(l, out)| run_profile(&l, &out))
            .map(|s| report_exit(&s)),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("sweepctl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn report_exit(s: &RunSummary) -> u8 {
    if s.exit_code != 0 {
        eprintln!(
            "sweepctl: budget exhausted; best-effort report in {}",
            s.dir.display()
        );
    } else {
        eprintln!("sweepctl: wrote {}", s.dir.display());
    }
    s.exit_code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_parsing() {
        assert_eq!(
            parse_ladder("20x32, 40x64").unwrap(),
            vec![(20, 32), (40, 64)]
        );
        assert!(parse_ladder("20-32").is_err());
        assert!(parse_ladder("0x4").is_err());
    }

    #[test]
    fn scenario_parsing() {
        let text = r#"{"name":"t","phi":"power:3","horizon":1,"eps":0.1,
            "omega0":{"disk":{"center":[0,0],"radius":1,"spacing":0.2}}}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.dim, 2);
        assert_eq!(
            s.phi.resolve().unwrap(),
            ScareFunction::power_law(3.0, 1.0).unwrap()
        );
        let full = text.replace("\"power:3\"", r#"{"kind":"power-law","p":4}"#);
        assert_eq!(
            Scenario::from_json(&full)
                .unwrap()
                .phi
                .resolve()
                .unwrap()
                .exponent(),
            Some(4.0)
        );
        assert!(Scenario::from_json(&text.replace("\"eps\":0.1", "\"eps\":-1")).is_err());
        assert!(Scenario::from_json(&text.replace("\"name\"", "\"nmae\"")).is_err());
        let set = s.omega0.unwrap().build(Path::new("."), Vec2::ZERO).unwrap();
        assert_eq!(set.boundary().len(), 256);
    }

    #[test]
    fn seeded_jitter_is_reproducible() {
        let text = r#"{"phi":"power:3","horizon":1,"eps":0.1,"seed":7}"#;
        let a = Scenario::from_json(text).unwrap().jitters();
        let b = Scenario::from_json(text).unwrap().jitters();
        assert_eq!(a, b);
        assert!(a.0.x >= 0.0 && a.0.x < 1.0 && a.0 != a.1);
    }
}
