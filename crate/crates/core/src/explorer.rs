//! Path growth: read the exit probabilities at the two frontier vertices,
//! flip the coins of the chosen variation, label, repeat.

use std::time::Instant;

use rand::distributions::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{BetaConvention, KappaParams};
use crate::error::{Error, Result};
use crate::hitting::HittingSolver;
use crate::lattice::{build_domain, DomainConfig, DomainState, Label, Termination, Turn, Vertex};
use crate::rng::{self, Stream};
use crate::walk::{WalkParams, WalkScheme};

/// Numerical slack before `p_L > p_R` counts as an anomaly.
pub const MONOTONICITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variation {
    /// One uniform per step, split at p_L and p_R.
    V1,
    /// Two independent uniforms per step, one per frontier vertex.
    V2,
}

impl Variation {
    pub fn as_str(self) -> &'static str {
        match self {
            Variation::V1 => "v1",
            Variation::V2 => "v2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorerConfig {
    pub variation: Variation,
    /// `None` means 10·width·height.
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub kappa: KappaParams,
    pub walk: WalkParams,
    pub domain: DomainConfig,
}

impl ExplorerConfig {
    /// Variation 1, Csáki walk with ν derived from κ under `convention`.
    pub fn new(kappa: f64, convention: BetaConvention, domain: DomainConfig, seed: u64) -> Result<Self> {
        let kappa = KappaParams::new(kappa, convention)?;
        Ok(Self {
            variation: Variation::V1,
            max_steps: None,
            seed,
            kappa,
            walk: WalkParams::new(kappa.nu(), WalkScheme::Csaki),
            domain,
        })
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
            .unwrap_or(10 * u64::from(self.domain.width) * u64::from(self.domain.height))
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.walk.validate()?;
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn check_unit(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {p} is outside [0, 1]")))
    }
}

/// Variation-1 rule. When `p_L > p_R` the straight band is empty.
pub fn turn_v1(p_l: f64, p_r: f64, u: f64) -> Result<Turn> {
    check_unit("p_L", p_l)?;
    check_unit("p_R", p_r)?;
    check_unit("u", u)?;
    if p_l > p_r {
        return Ok(if u <= p_r { Turn::Left } else { Turn::Right });
    }
    Ok(if u <= p_l {
        Turn::Left
    } else if u < p_r {
        Turn::Straight
    } else {
        Turn::Right
    })
}

/// Variation-2 rule: the left coin decides Left; otherwise the right coin
/// decides Straight against Right.
pub fn turn_v2(p_l: f64, p_r: f64, u_l: f64, u_r: f64) -> Result<Turn> {
    check_unit("p_L", p_l)?;
    check_unit("p_R", p_r)?;
    check_unit("u_L", u_l)?;
    check_unit("u_R", u_r)?;
    Ok(if u_l <= p_l {
        Turn::Left
    } else if u_r <= p_r {
        Turn::Straight
    } else {
        Turn::Right
    })
}

/// Whether `turn` keeps the labels already present on the frontier.
fn compatible(turn: Turn, existing: (Option<Label>, Option<Label>)) -> bool {
    let (l, r) = crate::lattice::turn_labels(turn);
    existing.0.map_or(true, |e| e == l) && existing.1.map_or(true, |e| e == r)
}

/// One step as it happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub p_l: f64,
    pub p_r: f64,
    pub turn: Turn,
    /// The coins decided the turn (false when labels forced it).
    pub drawn: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Steps with p_L > p_R beyond the slack.
    pub monotonicity_violations: u64,
    /// Frontier squares labeled (1, 0): both labeled, no consistent turn.
    pub saddle_anomalies: u64,
    /// Drawn turns replaced by the unique label-consistent one.
    pub forced_overrides: u64,
    /// Linear solves performed.
    pub solves: u64,
    /// Largest p_L − p_R seen (negative when monotone throughout).
    pub max_excess: Option<f64>,
}

/// Stepwise explorer owning its state, solver and coin stream.
#[derive(Debug, Clone)]
pub struct Explorer {
    config: ExplorerConfig,
    state: DomainState,
    solver: HittingSolver,
    stream: Stream,
    steps: Vec<StepRecord>,
    diagnostics: Diagnostics,
}

impl Explorer {
    pub fn new(config: ExplorerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: build_domain(config.domain)?,
            solver: HittingSolver::new(config.domain, config.walk)?,
            stream: rng::stream(config.seed),
            steps: Vec::new(),
            diagnostics: Diagnostics::default(),
            config,
        })
    }

    pub fn config(&self) -> &ExplorerConfig {
        &self.config
    }

    pub fn state(&self) -> &DomainState {
        &self.state
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn solver_mut(&mut self) -> &mut HittingSolver {
        &mut self.solver
    }

    /// Exit probability at `v` for the current state; labels give 0 or 1.
    pub fn h(&mut self, v: Vertex) -> Result<f64> {
        if let Some(l) = self.state.label(v) {
            return Ok(l.value());
        }
        self.diagnostics.solves += 1;
        let field = self.solver.solve(&self.state)?;
        field.extended(&self.state, v)
    }

    /// Advance one step. Returns the termination reason once the run is over.
    pub fn step(&mut self) -> Result<Option<Termination>> {
        if let Some(t) = self.state.termination() {
            return Ok(Some(t));
        }
        if u64::from(self.state.step_count()) >= self.config.max_steps() {
            self.state.terminate(Termination::MaxSteps);
            return Ok(self.state.termination());
        }
        let (wl, wr) = match self.state.frontier() {
            Ok(f) => f,
            Err(Error::Stuck(_)) => {
                self.state.terminate(Termination::Stuck);
                return Ok(self.state.termination());
            }
            Err(e) => return Err(e),
        };
        let existing = (self.state.label(wl), self.state.label(wr));
        let (p_l, p_r) = match existing {
            (Some(a), Some(b)) => (a.value(), b.value()),
            _ => {
                self.diagnostics.solves += 1;
                let field = self.solver.solve(&self.state)?;
                (
                    field.extended(&self.state, wl)?.clamp(0.0, 1.0),
                    field.extended(&self.state, wr)?.clamp(0.0, 1.0),
                )
            }
        };
        // Coins are drawn every step, used or not, so the stream stays aligned.
        let u: f64 = self.stream.sample(Open01);
        let drawn_turn = match self.config.variation {
            Variation::V1 => turn_v1(p_l, p_r, u)?,
            Variation::V2 => {
                let u_r: f64 = self.stream.sample(Open01);
                turn_v2(p_l, p_r, u, u_r)?
            }
        };

        let excess = p_l - p_r;
        self.diagnostics.max_excess = Some(self.diagnostics.max_excess.map_or(excess, |m| m.max(excess)));
        if excess > MONOTONICITY_SLACK {
            self.diagnostics.monotonicity_violations += 1;
        }

        let mut drawn = true;
        let turn = match existing {
            (Some(Label::One), Some(Label::Zero)) => {
                self.diagnostics.saddle_anomalies += 1;
                self.state.apply_forced_turn(Turn::Left)?;
                drawn = false;
                Turn::Left
            }
            _ => {
                let turn = if compatible(drawn_turn, existing) {
                    drawn_turn
                } else {
                    // Only reachable through a monotonicity anomaly: fall back
                    // to the turn the labels allow, preferring Straight.
                    self.diagnostics.forced_overrides += 1;
                    drawn = false;
                    [Turn::Straight, Turn::Left, Turn::Right]
                        .into_iter()
                        .find(|t| compatible(*t, existing))
                        .ok_or_else(|| Error::Consistency("no turn agrees with the frontier labels".into()))?
                };
                self.state.apply_turn(turn)?;
                turn
            }
        };
        self.steps.push(StepRecord { p_l, p_r, turn, drawn });
        if self.state.termination().is_none() && u64::from(self.state.step_count()) >= self.config.max_steps() {
            self.state.terminate(Termination::MaxSteps);
        }
        Ok(self.state.termination())
    }

    pub fn run(mut self) -> Result<ExplorerRun> {
        while self.step()?.is_none() {}
        Ok(ExplorerRun {
            config: self.config,
            termination: self.state.termination().unwrap_or(Termination::MaxSteps),
            state: self.state,
            steps: self.steps,
            diagnostics: self.diagnostics,
        })
    }
}

/// Outcome of a complete run.
#[derive(Debug, Clone)]
pub struct ExplorerRun {
    pub config: ExplorerConfig,
    pub state: DomainState,
    pub termination: Termination,
    pub steps: Vec<StepRecord>,
    pub diagnostics: Diagnostics,
}

impl ExplorerRun {
    /// Manifest of the run. Wall time is passed in separately so that the
    /// rest of the document is reproducible.
    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "max_steps": self.config.max_steps(),
            "seed": self.config.seed,
            "variation": self.config.variation.as_str(),
            "termination": self.termination.as_str(),
            "steps": self.state.step_count(),
            "diagnostics": self.diagnostics,
            "label_conflicts": self.state.label_conflicts(),
            "version": env!("CARGO_PKG_VERSION"),
        })
    }
}

pub fn run_explorer(config: &ExplorerConfig) -> Result<ExplorerRun> {
    Explorer::new(*config)?.run()
}

/// Run and time it.
pub fn run_explorer_timed(config: &ExplorerConfig) -> Result<(ExplorerRun, f64)> {
    let t = Instant::now();
    let run = run_explorer(config)?;
    Ok((run, t.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleProbe {
    pub mean: f64,
    /// `None` with fewer than two usable runs.
    pub se: Option<f64>,
    pub used: u64,
    pub skipped: u64,
}

/// Mean one-step increment of the exit probability at `w` between steps
/// `probe_step` and `probe_step + 1`, over `n_paths` runs seeded from
/// substreams of `config.seed`.
pub fn martingale_probe(w: Vertex, config: &ExplorerConfig, n_paths: u64, probe_step: u32) -> Result<MartingaleProbe> {
    config.validate()?;
    if !config.domain.contains(w) || config.domain.is_boundary(w) {
        return Err(Error::Domain(format!("probe vertex {w} must be interior")));
    }
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be at least 1".into()));
    }
    let increments: Vec<Option<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|r| -> Result<Option<f64>> {
            let cfg = config.with_seed(rng::substream_seed(config.seed, r));
            let mut ex = Explorer::new(cfg)?;
            while ex.state().step_count() < probe_step {
                if ex.step()?.is_some() {
                    return Ok(None);
                }
            }
            if ex.state().label(w).is_some() || ex.state().termination().is_some() {
                return Ok(None);
            }
            let before = ex.h(w)?;
            if ex.step()?.is_some_and(|t| t != Termination::ReachedVEnd) {
                return Ok(None);
            }
            let after = ex.h(w)?;
            Ok(Some(after - before))
        })
        .collect::<Result<_>>()?;
    let used: Vec<f64> = increments.iter().flatten().copied().collect();
    let skipped = n_paths - used.len() as u64;
    if used.is_empty() {
        return Err(Error::Domain(format!("no run had {w} unlabeled at step {probe_step}")));
    }
    let n = used.len() as f64;
    let mean = used.iter().sum::<f64>() / n;
    let se = (used.len() >= 2).then(|| {
        let var = used.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    Ok(MartingaleProbe {
        mean,
        se,
        used: used.len() as u64,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn config(kappa: f64, w: u32, h: u32, seed: u64) -> ExplorerConfig {
        ExplorerConfig::new(kappa, BetaConvention::Matched, DomainConfig::new(w, h, 1.0), seed).unwrap()
    }

    #[test]
    fn v1_rule() {
        assert_eq!(turn_v1(0.3, 0.6, 0.1).unwrap(), Turn::Left);
        assert_eq!(turn_v1(0.3, 0.6, 0.45).unwrap(), Turn::Straight);
        assert_eq!(turn_v1(0.3, 0.6, 0.9).unwrap(), Turn::Right);
        assert_eq!(turn_v1(0.3, 0.6, 0.3).unwrap(), Turn::Left);
        assert_eq!(turn_v1(0.3, 0.6, 0.6).unwrap(), Turn::Right);
        // Anomalous order: no straight band.
        assert_eq!(turn_v1(0.6, 0.3, 0.2).unwrap(), Turn::Left);
        assert_eq!(turn_v1(0.6, 0.3, 0.45).unwrap(), Turn::Right);
        assert!(turn_v1(1.2, 0.3, 0.1).is_err());
        assert!(turn_v1(0.2, 0.3, -0.1).is_err());
    }

    #[test]
    fn v2_rule() {
        assert_eq!(turn_v2(0.3, 0.6, 0.2, 0.99).unwrap(), Turn::Left);
        assert_eq!(turn_v2(0.3, 0.6, 0.9, 0.1).unwrap(), Turn::Straight);
        assert_eq!(turn_v2(0.3, 0.6, 0.9, 0.99).unwrap(), Turn::Right);
        assert!(turn_v2(0.3, 0.6, 0.9, 1.5).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let c = config(4.0, 20, 10, 7);
        let a = run_explorer(&c).unwrap();
        let b = run_explorer(&c).unwrap();
        assert_eq!(a.state.path(), b.state.path());
        assert_eq!(a.steps, b.steps);
        let d = run_explorer(&c.with_seed(8)).unwrap();
        assert_ne!(a.state.path(), d.state.path());
    }

    #[test]
    fn max_steps_one() {
        let mut c = config(4.0, 20, 10, 7);
        c.max_steps = Some(1);
        let r = run_explorer(&c).unwrap();
        assert_eq!(r.state.path().len(), 1);
        assert_eq!(r.termination, Termination::MaxSteps);
    }

    #[test]
    fn paths_reach_v_end_and_sides_agree_with_labels() {
        for kappa in [3.0, 4.0, 5.0] {
            for seed in 0..35 {
                let r = run_explorer(&config(kappa, 12, 8, seed)).unwrap();
                assert_eq!(r.termination, Termination::ReachedVEnd);
                let part = r.state.side_partition().unwrap();
                assert_eq!(part.unassigned(), 0);
                assert!(part.count(crate::lattice::Side::Left) > 0);
                assert!(part.count(crate::lattice::Side::Right) > 0);
                let cfg = r.state.config();
                for k in 0..cfg.n_vertices() {
                    let v = cfg.vertex_at(k);
                    if let Some(l) = r.state.label(v) {
                        let want = match l {
                            Label::Zero => crate::lattice::Side::Left,
                            Label::One => crate::lattice::Side::Right,
                        };
                        assert_eq!(part.side(v).unwrap(), want, "kappa {kappa}, seed {seed}, {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn v1_split_frequencies_chi_square() {
        let mut counts = [0.0_f64; 3];
        let mut expected = [0.0_f64; 3];
        for seed in 0..60 {
            let r = run_explorer(&config(3.0, 16, 8, seed)).unwrap();
            for s in r.steps.iter().filter(|s| s.drawn) {
                expected[0] += s.p_l;
                expected[1] += s.p_r - s.p_l;
                expected[2] += 1.0 - s.p_r;
                let k = match s.turn {
                    Turn::Left => 0,
                    Turn::Straight => 1,
                    Turn::Right => 2,
                };
                counts[k] += 1.0;
            }
        }
        let stat: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o - e).powi(2) / e)
            .sum();
        let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
        assert!(p > 0.01, "chi-square {stat}, p = {p}, counts {counts:?}, expected {expected:?}");
    }

    #[test]
    fn v2_manifest_records_variation() {
        let mut c = config(3.0, 12, 8, 1);
        c.variation = Variation::V2;
        let r = run_explorer(&c).unwrap();
        assert_eq!(r.manifest()["variation"], "v2");
    }

    #[test]
    fn martingale_probe_single_path_has_no_se() {
        let c = config(4.0, 12, 8, 3);
        let p = martingale_probe(Vertex::new(6, 4), &c, 1, 0).unwrap();
        assert!(p.se.is_none());
        assert_eq!(p.used, 1);
        assert!(martingale_probe(Vertex::new(0, 4), &c, 1, 0).is_err());
    }

    /// E[h_{n+1}(w)] over the three v1 outcomes equals h_n(w) exactly.
    #[test]
    fn martingale_identity_by_enumeration() {
        use crate::hitting::solve_field;
        let mut checked = 0;
        for kappa in [3.0, 4.0, 5.0] {
            for seed in 0..8 {
                let c = config(kappa, 14, 9, seed);
                let mut ex = Explorer::new(c).unwrap();
                for _ in 0..(seed % 5) {
                    ex.step().unwrap();
                }
                let st = ex.state().clone();
                let Ok((wl, wr)) = st.frontier() else { continue };
                if st.label(wl).is_some() || st.label(wr).is_some() {
                    continue;
                }
                let f = solve_field(&st, &c.walk).unwrap();
                let (p_l, p_r) = (f.value(wl).unwrap(), f.value(wr).unwrap());
                let weights = [p_l, p_r - p_l, 1.0 - p_r];
                for (w, h) in f.iter().filter(|(v, _)| *v != wl && *v != wr) {
                    let mut expect = 0.0;
                    for (turn, weight) in [Turn::Left, Turn::Straight, Turn::Right].into_iter().zip(weights) {
                        let mut next = st.clone();
                        next.apply_turn(turn).unwrap();
                        let g = solve_field(&next, &c.walk).unwrap();
                        expect += weight * g.extended(&next, w).unwrap();
                    }
                    assert!((expect - h).abs() < 1e-10, "kappa {kappa} seed {seed} {w}: {expect} vs {h}");
                }
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn martingale_v1_small() {
        let c = config(3.0, 12, 8, 5);
        let p = martingale_probe(Vertex::new(7, 4), &c, 300, 2).unwrap();
        let se = p.se.unwrap();
        assert!(p.mean.abs() <= 3.0 * se + 1e-12, "{p:?}");
    }
}
