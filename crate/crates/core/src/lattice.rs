//! Rectangle on the square lattice, its medial vertices, boundary labels and
//! the growing exploration path.
//!
//! Primal vertices are `(i, j)` with `0 ≤ i < width`, `0 ≤ j < height`.
//! A medial vertex is the midpoint of a primal edge, stored in doubled
//! coordinates. The path tip always sits on a primal edge `(left, right)`
//! with a heading; the lattice square ahead of it has the two vertices
//! `w_L = left + heading`, `w_R = right + heading`, and the path leaves that
//! square through its left side, its far side or its right side.
//!
//! Left of the path carries label 0, right of the path label 1. A turn
//! labels the two frontier vertices:
//!
//! | turn     | w_L | w_R |
//! |----------|-----|-----|
//! | Left     | 1   | 1   |
//! | Straight | 0   | 1   |
//! | Right    | 0   | 0   |

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub i: i32,
    pub j: i32,
}

impl Vertex {
    pub const fn new(i: i32, j: i32) -> Self {
        Self { i, j }
    }

    fn step(self, h: Heading) -> Self {
        let (di, dj) = h.delta();
        Self::new(self.i + di, self.j + dj)
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// Midpoint of a primal edge in doubled coordinates: the edge `(a, b)` maps
/// to `(a.i + b.i, a.j + b.j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MedialVertex {
    pub x2: i32,
    pub y2: i32,
}

impl MedialVertex {
    pub fn from_edge(a: Vertex, b: Vertex) -> Self {
        Self {
            x2: a.i + b.i,
            y2: a.j + b.j,
        }
    }

    /// The primal edge this medial vertex sits on, in increasing order.
    pub fn endpoints(self) -> Option<(Vertex, Vertex)> {
        let (xo, yo) = (self.x2.rem_euclid(2), self.y2.rem_euclid(2));
        match (xo, yo) {
            (1, 0) => Some((
                Vertex::new((self.x2 - 1) / 2, self.y2 / 2),
                Vertex::new((self.x2 + 1) / 2, self.y2 / 2),
            )),
            (0, 1) => Some((
                Vertex::new(self.x2 / 2, (self.y2 - 1) / 2),
                Vertex::new(self.x2 / 2, (self.y2 + 1) / 2),
            )),
            _ => None,
        }
    }

    /// Lattice coordinates (half-integers).
    pub fn lattice_xy(self) -> (f64, f64) {
        (self.x2 as f64 / 2.0, self.y2 as f64 / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, 1),
            Heading::East => (1, 0),
            Heading::South => (0, -1),
            Heading::West => (-1, 0),
        }
    }

    pub fn ccw(self) -> Self {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub fn cw(self) -> Self {
        self.ccw().ccw().ccw()
    }

    fn from_delta(di: i32, dj: i32) -> Option<Self> {
        match (di, dj) {
            (0, 1) => Some(Heading::North),
            (1, 0) => Some(Heading::East),
            (0, -1) => Some(Heading::South),
            (-1, 0) => Some(Heading::West),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Turn {
    Left,
    Straight,
    Right,
}

impl Turn {
    pub fn as_str(self) -> &'static str {
        match self {
            Turn::Left => "L",
            Turn::Straight => "S",
            Turn::Right => "R",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Zero,
    One,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Zero => 0.0,
            Label::One => 1.0,
        }
    }

    pub fn digit(self) -> u8 {
        match self {
            Label::Zero => 0,
            Label::One => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedVEnd,
    MaxSteps,
    Stuck,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ReachedVEnd => "reached_v_end",
            Termination::MaxSteps => "max_steps",
            Termination::Stuck => "stuck",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Number of vertex columns (even).
    pub width: u32,
    /// Number of vertex rows.
    pub height: u32,
    /// Lattice spacing δ in physical units.
    pub spacing: f64,
    pub v0: MedialVertex,
    pub v_end: MedialVertex,
}

impl DomainConfig {
    /// Rectangle with the path running from bottom-centre to top-centre.
    pub fn new(width: u32, height: u32, spacing: f64) -> Self {
        let w = width as i32;
        let h = height as i32;
        Self {
            width,
            height,
            spacing,
            v0: MedialVertex { x2: w - 1, y2: 0 },
            v_end: MedialVertex {
                x2: w - 1,
                y2: 2 * (h - 1),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 4 || self.width % 2 != 0 {
            return Err(Error::Config(format!(
                "width must be an even integer >= 4, got {}",
                self.width
            )));
        }
        if self.height < 4 {
            return Err(Error::Config(format!("height must be >= 4, got {}", self.height)));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::Config(format!("spacing must be positive, got {}", self.spacing)));
        }
        if self.v0 == self.v_end {
            return Err(Error::Config("v0 and v_end coincide".into()));
        }
        for (name, m) in [("v0", self.v0), ("v_end", self.v_end)] {
            self.boundary_edge(m)
                .ok_or_else(|| Error::Config(format!("{name} = {m:?} is not a boundary medial vertex")))?;
        }
        Ok(())
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.i >= 0 && v.j >= 0 && v.i < self.width as i32 && v.j < self.height as i32
    }

    pub fn is_boundary(&self, v: Vertex) -> bool {
        self.contains(v)
            && (v.i == 0 || v.j == 0 || v.i == self.width as i32 - 1 || v.j == self.height as i32 - 1)
    }

    pub fn index(&self, v: Vertex) -> usize {
        v.j as usize * self.width as usize + v.i as usize
    }

    pub fn vertex_at(&self, index: usize) -> Vertex {
        let w = self.width as usize;
        Vertex::new((index % w) as i32, (index / w) as i32)
    }

    pub fn n_vertices(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Endpoints of `m` when it is the midpoint of an edge of ∂D.
    fn boundary_edge(&self, m: MedialVertex) -> Option<(Vertex, Vertex)> {
        let (a, b) = m.endpoints()?;
        if !(self.is_boundary(a) && self.is_boundary(b)) {
            return None;
        }
        let w = self.width as i32 - 1;
        let h = self.height as i32 - 1;
        let same_side = (a.j == 0 && b.j == 0)
            || (a.j == h && b.j == h)
            || (a.i == 0 && b.i == 0)
            || (a.i == w && b.i == w);
        same_side.then_some((a, b))
    }

    /// Boundary vertices in counter-clockwise order, starting at (0, 0).
    pub fn boundary_cycle(&self) -> Vec<Vertex> {
        let w = self.width as i32;
        let h = self.height as i32;
        let mut cycle = Vec::with_capacity(2 * (w + h) as usize);
        cycle.extend((0..w).map(|i| Vertex::new(i, 0)));
        cycle.extend((1..h).map(|j| Vertex::new(w - 1, j)));
        cycle.extend((0..w - 1).rev().map(|i| Vertex::new(i, h - 1)));
        cycle.extend((1..h - 1).rev().map(|j| Vertex::new(0, j)));
        cycle
    }

    /// Physical position of a primal vertex. The origin is the default
    /// starting point (midpoint of the bottom side), so vertex columns sit at
    /// half-integer multiples of δ.
    pub fn physical(&self, v: Vertex) -> (f64, f64) {
        let cx = (self.width as f64 - 1.0) / 2.0;
        ((v.i as f64 - cx) * self.spacing, v.j as f64 * self.spacing)
    }

    pub fn physical_medial(&self, m: MedialVertex) -> (f64, f64) {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let (x, y) = m.lattice_xy();
        ((x - cx) * self.spacing, y * self.spacing)
    }

    /// Nearest primal vertex to a physical point; ties round towards +x / +y.
    pub fn nearest_vertex(&self, x: f64, y: f64) -> Vertex {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let i = (x / self.spacing + cx + 0.5).floor();
        let j = (y / self.spacing + 0.5).floor();
        let i = i.clamp(0.0, self.width as f64 - 1.0) as i32;
        let j = j.clamp(0.0, self.height as f64 - 1.0) as i32;
        Vertex::new(i, j)
    }

    /// Lattice distance from `v` to the nearest side of the rectangle.
    pub fn distance_to_boundary(&self, v: Vertex) -> i32 {
        let w = self.width as i32 - 1;
        let h = self.height as i32 - 1;
        v.i.min(v.j).min(w - v.i).min(h - v.j)
    }
}

/// Where the path tip is: on the primal edge `(left, right)`, facing `heading`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tip {
    pub left: Vertex,
    pub right: Vertex,
    pub heading: Heading,
}

impl Tip {
    pub fn medial(&self) -> MedialVertex {
        MedialVertex::from_edge(self.left, self.right)
    }

    /// The two primal vertices of the square ahead, `(w_L, w_R)`.
    pub fn ahead(&self) -> (Vertex, Vertex) {
        (self.left.step(self.heading), self.right.step(self.heading))
    }

    fn advance(&self, turn: Turn) -> Tip {
        let (wl, wr) = self.ahead();
        match turn {
            Turn::Left => Tip {
                left: self.left,
                right: wl,
                heading: self.heading.ccw(),
            },
            Turn::Straight => Tip {
                left: wl,
                right: wr,
                heading: self.heading,
            },
            Turn::Right => Tip {
                left: wr,
                right: self.right,
                heading: self.heading.cw(),
            },
        }
    }
}

/// Label assigned to the frontier pair by a turn.
pub fn turn_labels(turn: Turn) -> (Label, Label) {
    match turn {
        Turn::Left => (Label::One, Label::One),
        Turn::Straight => (Label::Zero, Label::One),
        Turn::Right => (Label::Zero, Label::Zero),
    }
}

/// One labeling event of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub vertex: Vertex,
    pub label: Label,
    /// False when the vertex already carried a label.
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathRecord {
    /// Medial vertices visited, starting with v0.
    pub vertices: Vec<MedialVertex>,
    pub turns: Vec<Turn>,
    /// Frontier labels `(w_L, w_R)` per step.
    pub labels: Vec<[LabelEvent; 2]>,
    pub termination: Option<Termination>,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Line-oriented export: one record per step.
    pub fn write_text<W: Write>(&self, config: &DomainConfig, out: &mut W) -> Result<()> {
        writeln!(out, "# step\tmedial_x\tmedial_y\tturn\tw_l_i\tw_l_j\tw_l_label\tw_r_i\tw_r_j\tw_r_label")?;
        if let Some(v0) = self.vertices.first() {
            let (x, y) = v0.lattice_xy();
            writeln!(out, "0\t{x}\t{y}\t-\t-\t-\t-\t-\t-\t-")?;
        }
        for (k, (turn, ev)) in self.turns.iter().zip(&self.labels).enumerate() {
            let (x, y) = self.vertices[k + 1].lattice_xy();
            writeln!(
                out,
                "{}\t{x}\t{y}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                k + 1,
                turn.as_str(),
                ev[0].vertex.i,
                ev[0].vertex.j,
                ev[0].label.digit(),
                ev[1].vertex.i,
                ev[1].vertex.j,
                ev[1].label.digit(),
            )?;
        }
        let reason = self.termination.map_or("running", Termination::as_str);
        writeln!(out, "# termination\t{reason}\t{}x{}", config.width, config.height)?;
        Ok(())
    }
}

/// Snapshot of the slit domain after `step_count` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainState {
    config: DomainConfig,
    labels: Vec<Option<Label>>,
    /// Step at which each vertex received its label (0 for ∂D).
    labeled_at: Vec<Option<u32>>,
    path: PathRecord,
    tip: Tip,
    visited: HashSet<(MedialVertex, MedialVertex)>,
    step_count: u32,
    boundary_count: usize,
    label_conflicts: u32,
}

impl DomainState {
    pub fn config(&self) -> &DomainConfig {
        &self.config
    }

    pub fn path(&self) -> &PathRecord {
        &self.path
    }

    pub fn into_path(self) -> PathRecord {
        self.path
    }

    pub fn tip(&self) -> Tip {
        self.tip
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn termination(&self) -> Option<Termination> {
        self.path.termination
    }

    pub fn label(&self, v: Vertex) -> Option<Label> {
        if !self.config.contains(v) {
            return None;
        }
        self.labels[self.config.index(v)]
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    pub fn labeled_at(&self, v: Vertex) -> Option<u32> {
        self.labeled_at[self.config.index(v)]
    }

    /// |V_n \ V_0|.
    pub fn grown_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count() - self.boundary_count
    }

    pub fn unlabeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Labels kept against the turn rule by forced moves.
    pub fn label_conflicts(&self) -> u32 {
        self.label_conflicts
    }

    /// Overwrite one label directly, bypassing the turn rule. Only meant for
    /// synthetic boundary data in oracles and tests.
    pub fn set_label(&mut self, v: Vertex, label: Option<Label>) -> Result<()> {
        if !self.config.contains(v) {
            return Err(Error::Domain(format!("{v} lies outside the domain")));
        }
        if label.is_none() && self.config.is_boundary(v) {
            return Err(Error::Domain(format!("boundary vertex {v} must stay labeled")));
        }
        let idx = self.config.index(v);
        self.labels[idx] = label;
        self.labeled_at[idx] = label.map(|_| self.step_count);
        Ok(())
    }

    pub fn terminate(&mut self, reason: Termination) {
        if self.path.termination.is_none() {
            self.path.termination = Some(reason);
        }
    }

    /// The frontier pair `(w_L, w_R)` of the square ahead of the tip.
    pub fn frontier(&self) -> Result<(Vertex, Vertex)> {
        if let Some(t) = self.path.termination {
            return Err(Error::Domain(format!("path already terminated ({})", t.as_str())));
        }
        let (wl, wr) = self.tip.ahead();
        if !(self.config.contains(wl) && self.config.contains(wr)) {
            return Err(Error::Stuck(format!(
                "tip at {:?} faces the outside of the domain",
                self.tip.medial()
            )));
        }
        Ok((wl, wr))
    }

    /// Advance the tip by `turn` and label the frontier pair. A label that
    /// would change an existing one is a consistency error; the state is left
    /// untouched in that case.
    pub fn apply_turn(&mut self, turn: Turn) -> Result<()> {
        self.advance(turn, false)
    }

    /// As [`apply_turn`](Self::apply_turn), but existing labels silently win.
    /// Used for moves forced by an inconsistent frontier.
    pub fn apply_forced_turn(&mut self, turn: Turn) -> Result<()> {
        self.advance(turn, true)
    }

    fn advance(&mut self, turn: Turn, forced: bool) -> Result<()> {
        let (wl, wr) = self.frontier()?;
        let (ll, lr) = turn_labels(turn);
        let mut conflicts = 0;
        for (v, l) in [(wl, ll), (wr, lr)] {
            if let Some(existing) = self.label(v) {
                if existing != l {
                    if !forced {
                        return Err(Error::Consistency(format!(
                            "turn {turn:?} would relabel {v} from {} to {}",
                            existing.digit(),
                            l.digit()
                        )));
                    }
                    conflicts += 1;
                }
            }
        }
        let next = self.tip.advance(turn);
        let edge = (self.tip.medial(), next.medial());
        if self.visited.contains(&edge) {
            return Err(Error::Consistency(format!(
                "path repeats the directed medial edge {:?} -> {:?}",
                edge.0, edge.1
            )));
        }

        self.step_count += 1;
        let events = [(wl, ll), (wr, lr)].map(|(v, l)| {
            let idx = self.config.index(v);
            match self.labels[idx] {
                Some(existing) => LabelEvent {
                    vertex: v,
                    label: existing,
                    fresh: false,
                },
                None => {
                    self.labels[idx] = Some(l);
                    self.labeled_at[idx] = Some(self.step_count);
                    LabelEvent {
                        vertex: v,
                        label: l,
                        fresh: true,
                    }
                }
            }
        });
        self.label_conflicts += conflicts;
        self.visited.insert(edge);
        self.tip = next;
        self.path.vertices.push(next.medial());
        self.path.turns.push(turn);
        self.path.labels.push(events);
        if next.medial() == self.config.v_end {
            self.path.termination = Some(Termination::ReachedVEnd);
        }
        Ok(())
    }

    /// Partition of the primal vertices by the completed path.
    pub fn side_partition(&self) -> Result<SidePartition> {
        if self.path.termination != Some(Termination::ReachedVEnd) {
            return Err(Error::Classification(
                "side classification needs a path that reached v_end".into(),
            ));
        }
        let cfg = &self.config;
        let crossed: HashSet<MedialVertex> = self.path.vertices.iter().copied().collect();
        let mut sides: Vec<Option<Side>> = vec![None; cfg.n_vertices()];
        let (arc_minus, arc_plus) = boundary_arcs(cfg)?;
        for (seeds, side) in [(arc_minus, Side::Left), (arc_plus, Side::Right)] {
            let mut queue: VecDeque<Vertex> = VecDeque::new();
            for v in seeds {
                let idx = cfg.index(v);
                match sides[idx] {
                    Some(s) if s != side => {
                        return Err(Error::Classification(format!("{v} seeds both sides")));
                    }
                    Some(_) => {}
                    None => {
                        sides[idx] = Some(side);
                        queue.push_back(v);
                    }
                }
            }
            while let Some(v) = queue.pop_front() {
                for h in [Heading::North, Heading::East, Heading::South, Heading::West] {
                    let u = v.step(h);
                    if !cfg.contains(u) || crossed.contains(&MedialVertex::from_edge(v, u)) {
                        continue;
                    }
                    let idx = cfg.index(u);
                    match sides[idx] {
                        None => {
                            sides[idx] = Some(side);
                            queue.push_back(u);
                        }
                        Some(s) if s != side => {
                            return Err(Error::Classification(format!(
                                "left and right components meet at {u}"
                            )));
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        Ok(SidePartition {
            config: *cfg,
            sides,
        })
    }

    /// Side of `v` relative to the completed path.
    pub fn classify_side(&self, v: Vertex) -> Result<Side> {
        self.side_partition()?.side(v)
    }

    /// Domain export: configuration plus the current label map.
    pub fn to_json(&self) -> serde_json::Value {
        let labeled: Vec<[i32; 3]> = self
            .labels
            .iter()
            .enumerate()
            .filter_map(|(k, l)| {
                l.map(|l| {
                    let v = self.config.vertex_at(k);
                    [v.i, v.j, i32::from(l.digit())]
                })
            })
            .collect();
        serde_json::json!({
            "config": self.config,
            "step_count": self.step_count,
            "termination": self.path.termination.map(Termination::as_str),
            "labels": labeled,
        })
    }
}

/// Boundary vertices on the left arc (A⁻, label 0) and the right arc (A⁺).
fn boundary_arcs(cfg: &DomainConfig) -> Result<(Vec<Vertex>, Vec<Vertex>)> {
    let cycle = cfg.boundary_cycle();
    let n = cycle.len();
    let locate = |m: MedialVertex| -> Result<usize> {
        let (a, b) = cfg
            .boundary_edge(m)
            .ok_or_else(|| Error::Config(format!("{m:?} is not a boundary medial vertex")))?;
        (0..n)
            .find(|&k| {
                let (p, q) = (cycle[k], cycle[(k + 1) % n]);
                (p == a && q == b) || (p == b && q == a)
            })
            .ok_or_else(|| Error::Config(format!("{m:?} is not on the boundary cycle")))
    };
    let k0 = locate(cfg.v0)?;
    let k_end = locate(cfg.v_end)?;
    // From the left endpoint of v0 walk clockwise until the far endpoint of
    // v_end is included; everything else is the right arc.
    let mut minus = Vec::new();
    let mut k = k0;
    let stop = (k_end + 1) % n;
    loop {
        minus.push(cycle[k]);
        if k == stop {
            break;
        }
        k = (k + n - 1) % n;
    }
    let minus_set: HashSet<Vertex> = minus.iter().copied().collect();
    let plus = cycle.iter().copied().filter(|v| !minus_set.contains(v)).collect();
    Ok((minus, plus))
}

/// Left/right component of every primal vertex for a completed path.
#[derive(Debug, Clone)]
pub struct SidePartition {
    config: DomainConfig,
    sides: Vec<Option<Side>>,
}

impl SidePartition {
    pub fn side(&self, v: Vertex) -> Result<Side> {
        if !self.config.contains(v) {
            return Err(Error::Domain(format!("{v} lies outside the domain")));
        }
        self.sides[self.config.index(v)]
            .ok_or_else(|| Error::Classification(format!("{v} is in neither component")))
    }

    /// Side of the vertex nearest to a physical point.
    pub fn side_of_point(&self, x: f64, y: f64) -> Result<Side> {
        self.side(self.config.nearest_vertex(x, y))
    }

    pub fn count(&self, side: Side) -> usize {
        self.sides.iter().filter(|s| **s == Some(side)).count()
    }

    pub fn unassigned(&self) -> usize {
        self.sides.iter().filter(|s| s.is_none()).count()
    }
}

/// Fresh domain with boundary labels and the tip at v0 facing inward.
pub fn build_domain(config: DomainConfig) -> Result<DomainState> {
    config.validate()?;
    let (minus, plus) = boundary_arcs(&config)?;
    let mut labels = vec![None; config.n_vertices()];
    let mut labeled_at = vec![None; config.n_vertices()];
    for (arc, label) in [(&minus, Label::Zero), (&plus, Label::One)] {
        for &v in arc {
            let idx = config.index(v);
            labels[idx] = Some(label);
            labeled_at[idx] = Some(0);
        }
    }
    // The left endpoint of v0 is the one carrying label 0; the heading is the
    // inward normal, i.e. `right − left` rotated counter-clockwise.
    let (a, b) = config
        .boundary_edge(config.v0)
        .ok_or_else(|| Error::Config("v0 is not a boundary medial vertex".into()))?;
    let (left, right) = if labels[config.index(a)] == Some(Label::Zero) {
        (a, b)
    } else {
        (b, a)
    };
    let along = Heading::from_delta(right.i - left.i, right.j - left.j)
        .ok_or_else(|| Error::Consistency("v0 endpoints are not lattice neighbours".into()))?;
    let tip = Tip {
        left,
        right,
        heading: along.ccw(),
    };
    if !(config.contains(tip.ahead().0) && config.contains(tip.ahead().1)) {
        return Err(Error::Consistency("initial heading points outside the domain".into()));
    }
    let boundary_count = minus.len() + plus.len();
    Ok(DomainState {
        config,
        labels,
        labeled_at,
        path: PathRecord {
            vertices: vec![tip.medial()],
            ..PathRecord::default()
        },
        tip,
        visited: HashSet::new(),
        step_count: 0,
        boundary_count,
        label_conflicts: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain(w: u32, h: u32) -> DomainState {
        build_domain(DomainConfig::new(w, h, 1.0)).unwrap()
    }

    #[test]
    fn small_rectangle_labels() {
        let s = domain(4, 4);
        let cfg = *s.config();
        let perimeter = cfg.boundary_cycle().len();
        assert_eq!(perimeter, 12);
        let labeled = s.labels().iter().filter(|l| l.is_some()).count();
        assert_eq!(labeled, perimeter);
        for j in 0..4 {
            for i in 0..4 {
                let v = Vertex::new(i, j);
                assert_eq!(s.label(v).is_some(), cfg.is_boundary(v));
            }
        }
        assert_eq!(s.label(Vertex::new(0, 0)), Some(Label::Zero));
        assert_eq!(s.label(Vertex::new(3, 0)), Some(Label::One));
        assert_eq!(s.label(Vertex::new(0, 3)), Some(Label::Zero));
        assert_eq!(s.label(Vertex::new(3, 3)), Some(Label::One));
    }

    #[test]
    fn arcs_split_at_centre() {
        let s = domain(10, 6);
        assert_eq!(s.label(Vertex::new(4, 0)), Some(Label::Zero));
        assert_eq!(s.label(Vertex::new(5, 0)), Some(Label::One));
        assert_eq!(s.label(Vertex::new(4, 5)), Some(Label::Zero));
        assert_eq!(s.label(Vertex::new(5, 5)), Some(Label::One));
        for j in 0..6 {
            assert_eq!(s.label(Vertex::new(0, j)), Some(Label::Zero));
            assert_eq!(s.label(Vertex::new(9, j)), Some(Label::One));
        }
    }

    #[test]
    fn config_errors() {
        let mut c = DomainConfig::new(8, 6, 1.0);
        c.v_end = c.v0;
        assert!(matches!(build_domain(c), Err(Error::Config(_))));
        let mut c = DomainConfig::new(8, 6, 1.0);
        c.v0 = MedialVertex { x2: 5, y2: 2 };
        assert!(matches!(build_domain(c), Err(Error::Config(_))));
        assert!(build_domain(DomainConfig::new(7, 6, 1.0)).is_err());
        assert!(build_domain(DomainConfig::new(8, 3, 1.0)).is_err());
        assert!(build_domain(DomainConfig::new(8, 6, 0.0)).is_err());
    }

    #[test]
    fn initial_frontier_flanks_v0() {
        let s = domain(10, 6);
        let (wl, wr) = s.frontier().unwrap();
        assert_eq!(wl, Vertex::new(4, 1));
        assert_eq!(wr, Vertex::new(5, 1));
        assert!(s.label(wl).is_none() && s.label(wr).is_none());
    }

    #[test]
    fn straight_first_step_labels() {
        let mut s = domain(10, 6);
        s.apply_turn(Turn::Straight).unwrap();
        assert_eq!(s.label(Vertex::new(4, 1)), Some(Label::Zero));
        assert_eq!(s.label(Vertex::new(5, 1)), Some(Label::One));
        assert_eq!(s.step_count(), 1);
        assert_eq!(s.grown_count(), 2);
        assert_eq!(*s.path().vertices.last().unwrap(), MedialVertex { x2: 9, y2: 2 });
    }

    #[test]
    fn left_turn_rotates_heading() {
        let mut s = domain(10, 6);
        s.apply_turn(Turn::Left).unwrap();
        let t = s.tip();
        assert_eq!(t.heading, Heading::West);
        assert_eq!(t.left, Vertex::new(4, 0));
        assert_eq!(t.right, Vertex::new(4, 1));
        let (wl, wr) = s.frontier().unwrap();
        assert_eq!((wl, wr), (Vertex::new(3, 0), Vertex::new(3, 1)));
        assert_eq!(s.label(Vertex::new(5, 1)), Some(Label::One));
    }

    #[test]
    fn right_turn_rotates_heading() {
        let mut s = domain(10, 6);
        s.apply_turn(Turn::Right).unwrap();
        let t = s.tip();
        assert_eq!(t.heading, Heading::East);
        assert_eq!((t.left, t.right), (Vertex::new(5, 1), Vertex::new(5, 0)));
    }

    #[test]
    fn relabel_conflict_is_an_error() {
        let mut s = domain(10, 6);
        s.apply_turn(Turn::Left).unwrap();
        // Now the square ahead is (3,0) [label 0] and (3,1); a Left turn would
        // set (3,0) to 1.
        let before = s.clone();
        assert!(matches!(s.apply_turn(Turn::Left), Err(Error::Consistency(_))));
        assert_eq!(s, before);
        s.apply_forced_turn(Turn::Left).unwrap();
        assert_eq!(s.label(Vertex::new(3, 0)), Some(Label::Zero));
        assert_eq!(s.label_conflicts(), 1);
    }

    #[test]
    fn already_labeled_left_keeps_label() {
        // Walk up the middle, then turn so that the next square reuses a vertex
        // labeled 1 earlier.
        let mut s = domain(10, 8);
        s.apply_turn(Turn::Straight).unwrap(); // (4,1)=0, (5,1)=1
        s.apply_turn(Turn::Right).unwrap(); // (4,2)=0, (5,2)=0, heading east at edge (5,2)-(5,1)
        let (wl, wr) = s.frontier().unwrap();
        assert_eq!((wl, wr), (Vertex::new(6, 2), Vertex::new(6, 1)));
        s.apply_turn(Turn::Left).unwrap();
        assert_eq!(s.label(Vertex::new(6, 2)), Some(Label::One));
        assert_eq!(s.step_count(), 3);
    }

    #[test]
    fn facing_top_next_to_v_end_sees_boundary_labels() {
        let mut s = domain(10, 6);
        for _ in 0..4 {
            s.apply_turn(Turn::Straight).unwrap();
        }
        let (wl, wr) = s.frontier().unwrap();
        assert_eq!((wl, wr), (Vertex::new(4, 5), Vertex::new(5, 5)));
        assert_eq!(s.label(wl), Some(Label::Zero));
        assert_eq!(s.label(wr), Some(Label::One));
        s.apply_turn(Turn::Straight).unwrap();
        assert_eq!(s.termination(), Some(Termination::ReachedVEnd));
        assert!(s.frontier().is_err());
    }

    /// Hand-drawn fixture on a 6×6 domain: v0 sits between (2,0) and (3,0),
    /// v_end between (2,5) and (3,5). Path: Right, Left, Left, then straight up.
    ///
    /// ```text
    ///  j=5  0 0 0|1 1 1
    ///  j=4  0 0 0|1 1 1
    ///  j=3  0 0 0|1 1 1
    ///  j=2  0 0 0 1 1 1      path enters square (2..3, 1..2) from the east,
    ///  j=1  0 0 0 0 1 1      then turns north between columns 2 and 3
    ///  j=0  0 0 0|1 1 1
    /// ```
    #[test]
    fn hand_drawn_three_step_fixture() {
        let mut s = domain(6, 6);
        s.apply_turn(Turn::Right).unwrap(); // square (2,1),(3,1): both 0; exit east
        s.apply_turn(Turn::Left).unwrap(); // square ahead (4,1),(4,0): (4,1)=1; heading north
        s.apply_turn(Turn::Left).unwrap(); // square ahead (3,2),(4,2): both 1; heading west
        assert_eq!(s.tip().heading, Heading::West);
        s.apply_turn(Turn::Right).unwrap(); // square ahead (2,2),(2,1): (2,2)=0; heading north
        while s.termination().is_none() {
            s.apply_turn(Turn::Straight).unwrap();
        }
        let part = s.side_partition().unwrap();
        let expect_right = [
            (3, 0), (4, 0), (5, 0),
            (4, 1), (5, 1),
            (3, 2), (4, 2), (5, 2),
            (3, 3), (4, 3), (5, 3),
            (3, 4), (4, 4), (5, 4),
            (3, 5), (4, 5), (5, 5),
        ];
        for j in 0..6 {
            for i in 0..6 {
                let want = if expect_right.contains(&(i, j)) { Side::Right } else { Side::Left };
                assert_eq!(part.side(Vertex::new(i, j)).unwrap(), want, "({i}, {j})");
            }
        }
        assert_eq!(part.unassigned(), 0);
    }

    #[test]
    fn classify_requires_completion() {
        let s = domain(6, 6);
        assert!(matches!(s.classify_side(Vertex::new(1, 1)), Err(Error::Classification(_))));
    }

    #[test]
    fn repeated_directed_edge_is_rejected() {
        let mut s = domain(10, 8);
        s.apply_turn(Turn::Straight).unwrap();
        for _ in 0..4 {
            s.apply_forced_turn(Turn::Left).unwrap();
        }
        // Tip is back on the edge (4,1)-(5,1) heading north again.
        assert_eq!(s.tip().medial(), MedialVertex { x2: 9, y2: 2 });
        let r1 = s.apply_forced_turn(Turn::Left);
        assert!(matches!(r1, Err(Error::Consistency(_))), "{r1:?}");
    }

    #[test]
    fn physical_coordinates_are_centred_on_v0() {
        let c = DomainConfig::new(40, 20, 0.5);
        assert_eq!(c.physical_medial(c.v0), (0.0, 0.0));
        assert_eq!(c.physical(Vertex::new(20, 4)), (0.25, 2.0));
        assert_eq!(c.physical(Vertex::new(19, 4)), (-0.25, 2.0));
        assert_eq!(c.nearest_vertex(0.0, 2.0), Vertex::new(20, 4));
        assert_eq!(c.nearest_vertex(-0.3, 1.9), Vertex::new(19, 4));
        assert_eq!(c.nearest_vertex(1e9, -3.0), Vertex::new(39, 0));
    }

    #[test]
    fn path_text_export() {
        let mut s = domain(6, 6);
        s.apply_turn(Turn::Straight).unwrap();
        let mut buf = Vec::new();
        s.path().write_text(s.config(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "0\t2.5\t0\t-\t-\t-\t-\t-\t-\t-");
        assert_eq!(lines[2], "1\t2.5\t1\tS\t2\t1\t0\t3\t1\t1");
        assert!(lines[3].starts_with("# termination\trunning"));
    }

    #[test]
    fn domain_json_lists_labels() {
        let s = domain(4, 4);
        let j = s.to_json();
        assert_eq!(j["labels"].as_array().unwrap().len(), 12);
        assert_eq!(j["config"]["width"], 4);
    }
}
