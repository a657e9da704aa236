//! Many-path experiments: left-passage estimates, convergence sweeps and
//! their on-disk outputs.
//!
//! Replica `k` of a run uses the seed `substream_seed(master, k)`; replicas
//! run in parallel and are reduced sequentially in index order, so every
//! number is independent of the thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::schramm_lpp;
use crate::error::{Error, Result};
use crate::explorer::{run_explorer, ExplorerConfig, ExplorerRun};
use crate::hitting::HittingField;
use crate::lattice::{DomainConfig, DomainState, Label, Side, Termination, Vertex};
use crate::rng;

/// Minimum lattice distance from a snapped query vertex to ∂D.
pub const MIN_BOUNDARY_DISTANCE: i32 = 2;
/// Discretization slack for the centre-line check at κ = 4.
pub const CENTRE_SLACK: f64 = 0.02;
/// Discretization slack for the off-axis check at κ = 4.
pub const OFF_AXIS_SLACK: f64 = 0.03;
/// Physical query point used by sweeps unless overridden.
pub const DEFAULT_SWEEP_POINT: (f64, f64) = (0.25, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPoint {
    pub x: f64,
    pub y: f64,
}

impl QueryPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Snap points to their nearest vertices, refusing ones too close to ∂D.
pub fn snap_points(domain: &DomainConfig, points: &[QueryPoint]) -> Result<Vec<Vertex>> {
    points
        .iter()
        .map(|p| {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::Domain(format!("query point ({}, {}) is not finite", p.x, p.y)));
            }
            let v = domain.nearest_vertex(p.x, p.y);
            let (x, y) = domain.physical(v);
            let inside = (p.x - x).abs() <= domain.spacing && (p.y - y).abs() <= domain.spacing;
            let d = domain.distance_to_boundary(v);
            if !inside || d < MIN_BOUNDARY_DISTANCE {
                return Err(Error::Domain(format!(
                    "query point ({}, {}) snaps to {v}, {d} lattice units from the boundary \
                     (at least {MIN_BOUNDARY_DISTANCE} required)",
                    p.x, p.y
                )));
            }
            Ok(v)
        })
        .collect()
}

/// Per-range counts; ranges combine exactly with [`Tally::merge`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub attempted: u64,
    pub completed: u64,
    /// Paths passing to the left of each query vertex (vertex on the right side).
    pub right: Vec<u64>,
    /// Excluded paths by reason.
    pub failures: BTreeMap<String, u64>,
    pub monotonicity_violations: u64,
    pub saddle_anomalies: u64,
    pub forced_overrides: u64,
    pub label_conflicts: u64,
    pub max_excess: Option<f64>,
    pub total_steps: u64,
}

impl Tally {
    fn empty(n_points: usize) -> Self {
        Self {
            right: vec![0; n_points],
            ..Self::default()
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        if self.right.is_empty() {
            self.right = vec![0; other.right.len()];
        }
        self.attempted += other.attempted;
        self.completed += other.completed;
        for (a, b) in self.right.iter_mut().zip(&other.right) {
            *a += b;
        }
        for (k, v) in &other.failures {
            *self.failures.entry(k.clone()).or_insert(0) += v;
        }
        self.monotonicity_violations += other.monotonicity_violations;
        self.saddle_anomalies += other.saddle_anomalies;
        self.forced_overrides += other.forced_overrides;
        self.label_conflicts += other.label_conflicts;
        self.max_excess = match (self.max_excess, other.max_excess) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.total_steps += other.total_steps;
    }

    fn failed(&mut self, reason: String) {
        self.attempted += 1;
        *self.failures.entry(reason).or_insert(0) += 1;
    }

    pub fn failed_count(&self) -> u64 {
        self.failures.values().sum()
    }
}

enum Replica {
    Done(Box<ExplorerRun>, Vec<bool>),
    Failed(String),
}

fn run_replica(config: &ExplorerConfig, vertices: &[Vertex], index: u64) -> Replica {
    let cfg = config.with_seed(rng::substream_seed(config.seed, index));
    let run = match run_explorer(&cfg) {
        Ok(r) => r,
        Err(e) => return Replica::Failed(format!("error: {e}")),
    };
    if run.termination != Termination::ReachedVEnd {
        return Replica::Failed(run.termination.as_str().to_string());
    }
    let sides = run.state.side_partition().and_then(|part| {
        vertices
            .iter()
            .map(|v| part.side(*v).map(|s| s == Side::Right))
            .collect::<Result<Vec<_>>>()
    });
    match sides {
        Ok(s) => Replica::Done(Box::new(run), s),
        Err(e) => Replica::Failed(format!("error: {e}")),
    }
}

/// Run replicas `range` and count sides at `vertices`.
pub fn tally_range(config: &ExplorerConfig, vertices: &[Vertex], range: Range<u64>) -> Result<Tally> {
    config.validate()?;
    let results: Vec<Replica> = range
        .into_par_iter()
        .map(|k| run_replica(config, vertices, k))
        .collect();
    let mut tally = Tally::empty(vertices.len());
    for r in results {
        match r {
            Replica::Failed(reason) => tally.failed(reason),
            Replica::Done(run, sides) => {
                let mut one = Tally::empty(vertices.len());
                one.attempted = 1;
                one.completed = 1;
                for (c, s) in one.right.iter_mut().zip(sides) {
                    *c = u64::from(s);
                }
                let d = run.diagnostics;
                one.monotonicity_violations = d.monotonicity_violations;
                one.saddle_anomalies = d.saddle_anomalies;
                one.forced_overrides = d.forced_overrides;
                one.label_conflicts = u64::from(run.state.label_conflicts());
                one.max_excess = d.max_excess;
                one.total_steps = u64::from(run.state.step_count());
                tally.merge(&one);
            }
        }
    }
    Ok(tally)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LppEstimate {
    pub requested: QueryPoint,
    pub vertex: Vertex,
    /// Snapped physical coordinates; the analytic value is taken here.
    pub x: f64,
    pub y: f64,
    pub n_paths: u64,
    pub h_hat: f64,
    pub se: f64,
    pub analytic: f64,
    pub difference: f64,
}

/// Turn a tally into estimates.
pub fn estimates_from_tally(
    config: &ExplorerConfig,
    points: &[QueryPoint],
    vertices: &[Vertex],
    tally: &Tally,
) -> Result<Vec<LppEstimate>> {
    if tally.completed == 0 {
        return Err(Error::Domain(format!(
            "no path completed out of {} ({:?})",
            tally.attempted, tally.failures
        )));
    }
    let n = tally.completed as f64;
    points
        .iter()
        .zip(vertices)
        .zip(&tally.right)
        .map(|((p, v), &c)| {
            let (x, y) = config.domain.physical(*v);
            let h_hat = c as f64 / n;
            let analytic = schramm_lpp(&config.kappa, x, y)?;
            Ok(LppEstimate {
                requested: *p,
                vertex: *v,
                x,
                y,
                n_paths: tally.completed,
                h_hat,
                se: (h_hat * (1.0 - h_hat) / n).sqrt(),
                analytic,
                difference: h_hat - analytic,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FieldRun {
    pub config: ExplorerConfig,
    pub n_paths: u64,
    pub points: Vec<QueryPoint>,
    pub estimates: Vec<LppEstimate>,
    pub tally: Tally,
}

pub fn estimate_lpp_field(config: &ExplorerConfig, points: &[QueryPoint], n_paths: u64) -> Result<FieldRun> {
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be at least 1".into()));
    }
    let vertices = snap_points(&config.domain, points)?;
    let tally = tally_range(config, &vertices, 0..n_paths)?;
    let estimates = estimates_from_tally(config, points, &vertices, &tally)?;
    Ok(FieldRun {
        config: *config,
        n_paths,
        points: points.to_vec(),
        estimates,
        tally,
    })
}

impl FieldRun {
    pub fn manifest(&self) -> serde_json::Value {
        let seeds: Vec<u64> = (0..self.n_paths)
            .map(|k| rng::substream_seed(self.config.seed, k))
            .collect();
        serde_json::json!({
            "kind": "field",
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "max_steps": self.config.max_steps(),
            "master_seed": self.config.seed,
            "n_paths": self.n_paths,
            "points": self.points,
            "replica_seeds": seeds,
        })
    }

    pub fn report(&self, manifest_hash: &str) -> serde_json::Value {
        serde_json::json!({
            "manifest_hash": manifest_hash,
            "estimates": self.estimates,
            "tally": self.tally,
        })
    }
}

/// Hex SHA-256 of the canonical manifest bytes.
pub fn manifest_hash(manifest: &serde_json::Value) -> Result<String> {
    let bytes = serde_json::to_vec(manifest)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

pub fn estimates_csv(estimates: &[LppEstimate], hash: &str) -> String {
    let mut s = String::from(
        "manifest_hash,requested_x,requested_y,x_index,y_index,x,y,n_paths,h_hat,se,analytic,difference\n",
    );
    for e in estimates {
        let _ = writeln!(
            s,
            "{hash},{},{},{},{},{},{},{},{},{},{},{}",
            e.requested.x, e.requested.y, e.vertex.i, e.vertex.j, e.x, e.y, e.n_paths, e.h_hat, e.se, e.analytic, e.difference
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Wall-clock data kept apart from the reproducible outputs.
pub fn write_timing(dir: &Path, wall_seconds: f64, threads: usize) -> Result<()> {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({
            "finished_unix": now,
            "wall_seconds": wall_seconds,
            "threads": threads,
        }),
    )
}

/// Write manifest, results and report for a field run. Returns the manifest hash.
pub fn write_field_outputs(dir: &Path, run: &FieldRun, format: OutputFormat) -> Result<String> {
    fs::create_dir_all(dir)?;
    let manifest = run.manifest();
    let hash = manifest_hash(&manifest)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    match format {
        OutputFormat::Csv => fs::write(dir.join("results.csv"), estimates_csv(&run.estimates, &hash))?,
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = run
                .estimates
                .iter()
                .map(|e| {
                    let mut v = serde_json::to_value(e).unwrap_or_default();
                    v["manifest_hash"] = serde_json::Value::String(hash.clone());
                    v
                })
                .collect();
            write_json(&dir.join("results.json"), &serde_json::Value::Array(rows))?
        }
    }
    write_json(&dir.join("report.json"), &run.report(&hash))?;
    Ok(hash)
}

/// Write path, domain and manifest for a single run. Returns the manifest hash.
pub fn write_sample_outputs(dir: &Path, run: &ExplorerRun, svg: bool) -> Result<String> {
    fs::create_dir_all(dir)?;
    let manifest = run.manifest();
    let hash = manifest_hash(&manifest)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    let mut text = Vec::new();
    run.state.path().write_text(run.state.config(), &mut text)?;
    fs::write(dir.join("path.txt"), text)?;
    let mut domain = run.state.to_json();
    domain["manifest_hash"] = serde_json::Value::String(hash.clone());
    write_json(&dir.join("domain.json"), &domain)?;
    if svg {
        fs::write(dir.join("path.svg"), render_svg(&run.state, None))?;
    }
    Ok(hash)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub width: u32,
    pub height: u32,
    pub spacing: f64,
    pub estimate: LppEstimate,
    pub abs_difference: f64,
    pub failed: u64,
}

/// For each κ and size, estimate the left-passage probability at fixed
/// physical points on the domain rescaled to unit height
/// (δ = 1/(height − 1)). `base` supplies everything except κ and the domain.
pub fn convergence_sweep(
    base: &ExplorerConfig,
    kappas: &[f64],
    sizes: &[(u32, u32)],
    points: &[QueryPoint],
    n_paths: u64,
) -> Result<Vec<SweepRow>> {
    for w in sizes.windows(2) {
        if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
            return Err(Error::Config(format!("sizes must increase, got {:?} then {:?}", w[0], w[1])));
        }
    }
    let mut rows = Vec::new();
    for &kappa in kappas {
        for &(width, height) in sizes {
            let spacing = 1.0 / (f64::from(height) - 1.0);
            let domain = DomainConfig::new(width, height, spacing);
            let mut cfg = ExplorerConfig::new(kappa, base.kappa.convention, domain, base.seed)?;
            cfg.variation = base.variation;
            cfg.walk.scheme = base.walk.scheme;
            cfg.walk.p_floor_height = base.walk.p_floor_height;
            let run = estimate_lpp_field(&cfg, points, n_paths)?;
            for e in run.estimates {
                rows.push(SweepRow {
                    kappa,
                    width,
                    height,
                    spacing,
                    abs_difference: e.difference.abs(),
                    estimate: e,
                    failed: run.tally.failed_count(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow], hash: &str) -> String {
    let mut s = String::from(
        "manifest_hash,kappa,width,height,spacing,requested_x,requested_y,x,y,n_paths,h_hat,se,analytic,abs_difference,failed\n",
    );
    for r in rows {
        let e = &r.estimate;
        let _ = writeln!(
            s,
            "{hash},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.kappa, r.width, r.height, r.spacing, e.requested.x, e.requested.y, e.x, e.y, e.n_paths, e.h_hat, e.se,
            e.analytic, r.abs_difference, r.failed
        );
    }
    s
}

/// Plain SVG picture of the domain: labels as dots, the path as a polyline,
/// and optionally a field heatmap underneath.
pub fn render_svg(state: &DomainState, field: Option<&HittingField>) -> String {
    let cfg = state.config();
    let cell = 12.0;
    let (w, h) = (f64::from(cfg.width) * cell, f64::from(cfg.height) * cell);
    let px = |x: f64| (x + 0.5) * cell;
    let py = |y: f64| h - (y + 0.5) * cell;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect width="{w}" height="{h}" fill="#ffffff"/>"##);
    if let Some(f) = field {
        for (v, val) in f.iter() {
            let shade = (255.0 * (1.0 - val.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)"/>"#,
                px(f64::from(v.i)) - cell / 2.0,
                py(f64::from(v.j)) - cell / 2.0
            );
        }
    }
    for k in 0..cfg.n_vertices() {
        let v = cfg.vertex_at(k);
        if let Some(l) = state.label(v) {
            let colour = match l {
                Label::Zero => "#404040",
                Label::One => "#c0c0c0",
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="{}" fill="{colour}"/>"#,
                px(f64::from(v.i)),
                py(f64::from(v.j)),
                cell * 0.25
            );
        }
    }
    let pts: Vec<String> = state
        .path()
        .vertices
        .iter()
        .map(|m| {
            let (x, y) = m.lattice_xy();
            format!("{},{}", px(x), py(y))
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#d02020" stroke-width="2"/>"##,
        pts.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::BetaConvention;

    fn config(kappa: f64, w: u32, h: u32, seed: u64) -> ExplorerConfig {
        let d = DomainConfig::new(w, h, 1.0 / (f64::from(h) - 1.0));
        ExplorerConfig::new(kappa, BetaConvention::Matched, d, seed).unwrap()
    }

    #[test]
    fn ranges_combine_to_pooled() {
        let c = config(3.0, 12, 8, 21);
        let pts = [QueryPoint::new(0.0, 3.0 / 7.0), QueryPoint::new(2.0 / 7.0, 3.0 / 7.0)];
        let v = snap_points(&c.domain, &pts).unwrap();
        let all = tally_range(&c, &v, 0..40).unwrap();
        let mut parts = tally_range(&c, &v, 0..13).unwrap();
        parts.merge(&tally_range(&c, &v, 13..40).unwrap());
        assert_eq!(all, parts);
    }

    #[test]
    fn boundary_point_refused() {
        let c = config(4.0, 12, 8, 1);
        let r = snap_points(&c.domain, &[QueryPoint::new(0.0, 1.0 / 7.0)]);
        assert!(matches!(r, Err(Error::Domain(_))));
        let r = snap_points(&c.domain, &[QueryPoint::new(5.0, 0.5)]);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn estimates_are_consistent() {
        let c = config(3.0, 12, 8, 2);
        let run = estimate_lpp_field(&c, &[QueryPoint::new(0.1, 0.5)], 60).unwrap();
        let e = &run.estimates[0];
        assert_eq!(e.n_paths + run.tally.failed_count(), 60);
        assert!((0.0..=1.0).contains(&e.h_hat));
        assert!((e.se - (e.h_hat * (1.0 - e.h_hat) / e.n_paths as f64).sqrt()).abs() < 1e-15);
        assert!((e.difference - (e.h_hat - e.analytic)).abs() < 1e-15);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let c = config(5.0, 12, 8, 4);
        let pts = [QueryPoint::new(0.2, 0.4)];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| estimate_lpp_field(&c, &pts, 30).unwrap());
        let b = three.install(|| estimate_lpp_field(&c, &pts, 30).unwrap());
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.tally, b.tally);
    }

    #[test]
    fn sweep_shapes() {
        let c = config(4.0, 12, 8, 3);
        assert!(convergence_sweep(&c, &[], &[(10, 5), (20, 10)], &[QueryPoint::new(0.25, 0.5)], 10)
            .unwrap()
            .is_empty());
        let rows = convergence_sweep(&c, &[4.0], &[(10, 5), (20, 10)], &[QueryPoint::new(0.25, 0.5)], 10).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(convergence_sweep(&c, &[4.0], &[(20, 10), (10, 5)], &[QueryPoint::new(0.25, 0.5)], 10).is_err());
    }

    #[test]
    fn outputs_are_reproducible() {
        let c = config(3.0, 12, 8, 9);
        let run = estimate_lpp_field(&c, &[QueryPoint::new(0.1, 0.5)], 20).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let h1 = write_field_outputs(d1.path(), &run, OutputFormat::Csv).unwrap();
        let run2 = estimate_lpp_field(&c, &[QueryPoint::new(0.1, 0.5)], 20).unwrap();
        let h2 = write_field_outputs(d2.path(), &run2, OutputFormat::Csv).unwrap();
        assert_eq!(h1, h2);
        for f in ["manifest.json", "results.csv", "report.json"] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap());
        }
        let csv = fs::read_to_string(d1.path().join("results.csv")).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with(&h1));
    }

    #[test]
    fn svg_renders() {
        let r = run_explorer(&config(4.0, 10, 6, 1)).unwrap();
        let s = render_svg(&r.state, None);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("<polyline"));
    }
}
