//! Grid assignment of motion patterns.
//!
//! Every correspondence is binned on the motion-pattern table and dropped
//! into the grid cell containing its matched-frame pixel. Each cell then
//! votes for a single verdict. Cells whose vote is split get refined by a
//! quadtree, and the whole procedure is repeated on grids shifted by half a
//! cell so that objects cut by a cell boundary are seen whole at least once.

use crate::error::{Error, Result};
use crate::geometry::{quantize, residual, Correspondence, MotionBin, Pixel, SE3};
use crate::stats::StatModel;

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub gx: usize,
    pub gy: usize,
    pub bins_per_axis: usize,
    pub e_int_z: f64,
    pub e_int_x: f64,
    pub alpha: f64,
    /// Minimum share of the winning pattern before a cell is split.
    pub p_min: f64,
    /// Minimum number of keypoints for a cell to vote at all.
    pub n_min: usize,
    pub max_quad_depth: usize,
    pub k_sigma: f64,
    /// A dynamic winner needs at least this multiple of the static count.
    pub static_margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            image_width: 640,
            image_height: 480,
            gx: 20,
            gy: 15,
            bins_per_axis: 5,
            e_int_z: 0.05,
            e_int_x: 0.05,
            alpha: 1.0,
            p_min: 0.7,
            n_min: 8,
            max_quad_depth: 2,
            k_sigma: 3.0,
            static_margin: 1.5,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.image_width == 0 || self.image_height == 0 {
            return fail("image dimensions must be positive".into());
        }
        if self.gx == 0 || self.gy == 0 {
            return fail(format!("grid must have at least one cell, got {}x{}", self.gx, self.gy));
        }
        if self.bins_per_axis < 3 || self.bins_per_axis.is_multiple_of(2) {
            return fail(format!("bins_per_axis must be odd and >= 3, got {}", self.bins_per_axis));
        }
        for (name, v) in [("e_int_z", self.e_int_z), ("e_int_x", self.e_int_x), ("alpha", self.alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return fail(format!("p_min must lie in (0, 1], got {}", self.p_min));
        }
        if self.n_min == 0 {
            return fail("n_min must be at least 1".into());
        }
        if !(self.k_sigma >= 0.0 && self.k_sigma.is_finite()) {
            return fail(format!("k_sigma must be non-negative, got {}", self.k_sigma));
        }
        if !(self.static_margin >= 0.0 && self.static_margin.is_finite()) {
            return fail(format!("static_margin must be non-negative, got {}", self.static_margin));
        }
        Ok(())
    }

    fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.image_width as f64 && px.v < self.image_height as f64
    }
}

/// Axis-aligned pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= self.x0 && px.u < self.x1 && px.v >= self.y0 && px.v < self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Quadrant index: bit 0 set for the right half, bit 1 for the bottom half.
    pub fn quadrant_of(&self, px: &Pixel) -> u8 {
        let (mx, my) = self.center();
        (px.u >= mx) as u8 | (((px.v >= my) as u8) << 1)
    }

    pub fn quadrant(&self, q: u8) -> Rect {
        let (mx, my) = self.center();
        let (x0, x1) = if q & 1 == 0 { (self.x0, mx) } else { (mx, self.x1) };
        let (y0, y1) = if q & 2 == 0 { (self.y0, my) } else { (my, self.y1) };
        Rect::new(x0, y0, x1, y1)
    }

    /// Closed rectangles intersect: sharing an edge or a corner counts.
    pub fn touches(&self, other: &Rect) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }
}

/// One of the four passes; shifts are half a cell along the image axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shift {
    pub horizontal: bool,
    pub vertical: bool,
}

impl Shift {
    pub const PASSES: [Shift; 4] = [
        Shift { horizontal: false, vertical: false },
        Shift { horizontal: true, vertical: false },
        Shift { horizontal: false, vertical: true },
        Shift { horizontal: true, vertical: true },
    ];
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Axis {
    extent: f64,
    cell: f64,
    offset: f64,
    count: usize,
}

impl Axis {
    fn new(extent: f64, cells: usize, shifted: bool) -> Self {
        let cell = extent / cells as f64;
        // shifting a single-cell axis only adds an empty margin
        if shifted && cells > 1 {
            Axis { extent, cell, offset: cell / 2.0, count: cells + 1 }
        } else {
            Axis { extent, cell, offset: 0.0, count: cells }
        }
    }

    fn index(&self, p: f64) -> usize {
        let raw =
            if self.offset > 0.0 { ((p - self.offset) / self.cell).floor() + 1.0 } else { (p / self.cell).floor() };
        (raw.max(0.0) as usize).min(self.count - 1)
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        let start = |k: usize| {
            if self.offset > 0.0 {
                if k == 0 {
                    0.0
                } else {
                    self.offset + (k - 1) as f64 * self.cell
                }
            } else {
                k as f64 * self.cell
            }
        };
        let end = if i + 1 == self.count { self.extent } else { start(i + 1) };
        (start(i), end)
    }
}

/// Cell layout of one pass. Boundary cells of shifted passes are truncated
/// at the image edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub shift: Shift,
    cols: Axis,
    rows: Axis,
}

impl GridGeometry {
    pub fn new(cfg: &GridConfig, shift: Shift) -> Self {
        Self {
            shift,
            cols: Axis::new(cfg.image_width as f64, cfg.gx, shift.horizontal),
            rows: Axis::new(cfg.image_height as f64, cfg.gy, shift.vertical),
        }
    }

    pub fn cols(&self) -> usize {
        self.cols.count
    }

    pub fn rows(&self) -> usize {
        self.rows.count
    }

    pub fn cell_count(&self) -> usize {
        self.cols.count * self.rows.count
    }

    /// Caller guarantees `px` lies inside the image.
    pub fn cell_of(&self, px: &Pixel) -> usize {
        self.rows.index(px.v) * self.cols.count + self.cols.index(px.u)
    }

    pub fn col_row(&self, cell: usize) -> (usize, usize) {
        (cell % self.cols.count, cell / self.cols.count)
    }

    pub fn cell_rect(&self, cell: usize) -> Rect {
        let (c, r) = self.col_row(cell);
        let (x0, x1) = self.cols.bounds(c);
        let (y0, y1) = self.rows.bounds(r);
        Rect::new(x0, y0, x1, y1)
    }

    /// The cell itself and its 8-connected neighbors.
    pub fn neighborhood(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let (c, r) = self.col_row(cell);
        let (c, r) = (c as isize, r as isize);
        (-1isize..=1).flat_map(move |dr| {
            (-1isize..=1).filter_map(move |dc| {
                let (nc, nr) = (c + dc, r + dr);
                let inside = nc >= 0 && nr >= 0 && (nc as usize) < self.cols.count && (nr as usize) < self.rows.count;
                inside.then(|| nr as usize * self.cols.count + nc as usize)
            })
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    OutOfBounds,
    NonPositiveDepth,
    DegeneratePoint,
}

/// A correspondence that could not be placed on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub index: usize,
    pub id: u64,
    pub reason: RejectReason,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinnedMatch {
    pub pixel: Pixel,
    pub bin: MotionBin,
}

/// Motion bins of all correspondences under one pose; independent of the
/// grid layout and shared by every pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedMatches {
    pub entries: Vec<Option<BinnedMatch>>,
    pub rejected: Vec<Rejection>,
}

pub fn bin_matches(matches: &[Correspondence], pose0: &SE3, cfg: &GridConfig) -> BinnedMatches {
    let mut rejected = Vec::new();
    let entries = matches
        .iter()
        .enumerate()
        .map(|(index, c)| {
            let reject = |reason| Rejection { index, id: c.id, reason };
            if !cfg.contains(&c.px_ma) {
                rejected.push(reject(RejectReason::OutOfBounds));
                return None;
            }
            if !c.has_positive_depth() {
                rejected.push(reject(RejectReason::NonPositiveDepth));
                return None;
            }
            match residual(c, pose0, cfg.alpha) {
                Ok(r) => {
                    Some(BinnedMatch { pixel: c.px_ma, bin: quantize(&r, cfg.e_int_z, cfg.e_int_x, cfg.bins_per_axis) })
                }
                Err(_) => {
                    rejected.push(reject(RejectReason::DegeneratePoint));
                    None
                }
            }
        })
        .collect();
    BinnedMatches { entries, rejected }
}

/// Motion-bin histogram of one cell with the member indices of every bin.
#[derive(Clone, Debug, PartialEq)]
pub struct CellHistogram {
    pub counts: Vec<u32>,
    pub members: Vec<Vec<usize>>,
}

impl CellHistogram {
    fn new(bins_per_axis: usize) -> Self {
        let len = bins_per_axis * bins_per_axis;
        Self { counts: vec![0; len], members: vec![Vec::new(); len] }
    }

    fn push(&mut self, slot: usize, index: usize) {
        self.counts[slot] += 1;
        self.members[slot].push(index);
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }
}

/// The per-cell motion statistics tensor of one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTensor {
    pub bins_per_axis: usize,
    pub geometry: GridGeometry,
    pub cells: Vec<CellHistogram>,
    pub rejected: Vec<Rejection>,
}

impl GridTensor {
    pub fn assigned(&self) -> usize {
        self.cells.iter().map(CellHistogram::total).sum()
    }
}

/// Bins every correspondence and accumulates the unshifted grid tensor.
pub fn assign(matches: &[Correspondence], pose0: &SE3, cfg: &GridConfig) -> GridTensor {
    let binned = bin_matches(matches, pose0, cfg);
    let geometry = GridGeometry::new(cfg, Shift::PASSES[0]);
    accumulate(&binned, geometry, cfg.bins_per_axis)
}

pub fn accumulate(binned: &BinnedMatches, geometry: GridGeometry, bins_per_axis: usize) -> GridTensor {
    let mut cells = vec![CellHistogram::new(bins_per_axis); geometry.cell_count()];
    for (index, entry) in binned.entries.iter().enumerate() {
        if let Some(m) = entry {
            cells[geometry.cell_of(&m.pixel)].push(m.bin.index(bins_per_axis), index);
        }
    }
    GridTensor { bins_per_axis, geometry, cells, rejected: binned.rejected.clone() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinCount {
    pub bin: MotionBin,
    pub count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellStats {
    pub cell_id: usize,
    pub n: usize,
    pub s_max1: BinCount,
    pub s_max2: BinCount,
    pub static_count: u32,
}

/// Ranking used to pick the winning pattern: larger count first, then the
/// static bin, then the lexicographically larger `(iz, ix)`.
fn outranks(a: BinCount, b: BinCount) -> bool {
    if a.count != b.count {
        return a.count > b.count;
    }
    if a.bin.is_static() != b.bin.is_static() {
        return a.bin.is_static();
    }
    a.bin > b.bin
}

impl CellStats {
    pub fn from_counts(cell_id: usize, counts: &[u32], bins_per_axis: usize) -> Self {
        let static_slot = MotionBin::STATIC.index(bins_per_axis);
        let mut best = BinCount { bin: MotionBin::STATIC, count: counts[static_slot] };
        let mut second: Option<BinCount> = None;
        for (slot, &count) in counts.iter().enumerate() {
            if slot == static_slot {
                continue;
            }
            let cand = BinCount { bin: MotionBin::from_index(slot, bins_per_axis), count };
            if outranks(cand, best) {
                second = Some(best);
                best = cand;
            } else if second.is_none_or(|s| outranks(cand, s)) {
                second = Some(cand);
            }
        }
        CellStats {
            cell_id,
            n: counts.iter().map(|&c| c as usize).sum(),
            s_max1: best,
            s_max2: second.unwrap_or(best),
            static_count: counts[static_slot],
        }
    }
}

pub fn cell_stats(t: &GridTensor, cell_id: usize) -> CellStats {
    CellStats::from_counts(cell_id, &t.cells[cell_id].counts, t.bins_per_axis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Static,
    Dynamic(MotionBin),
    /// Too few keypoints to vote.
    Unknown,
}

/// Verdict for one region, which is either a whole grid cell or a quadtree
/// leaf inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct CellDecision {
    pub pass: usize,
    pub cell_id: usize,
    /// Quadrant indices from the grid cell down to this region.
    pub quad_path: Vec<u8>,
    pub rect: Rect,
    pub verdict: Verdict,
    pub n: usize,
    pub support: u32,
    pub winning_bin: MotionBin,
    /// Every correspondence inside the region.
    pub members: Vec<usize>,
    /// Correspondences voting for the winning bin.
    pub winners: Vec<usize>,
}

impl CellDecision {
    pub fn support_ratio(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.support as f64 / self.n as f64
        }
    }
}

pub fn classify_cell(s: &CellStats, model: &StatModel, cfg: &GridConfig) -> Verdict {
    if s.n < cfg.n_min {
        return Verdict::Unknown;
    }
    let winner = s.s_max1;
    if winner.bin.is_static() {
        return Verdict::Static;
    }
    let support = winner.count as f64;
    let tau = model.support_threshold(s.n, cfg.k_sigma);
    if support > tau && support >= cfg.static_margin * s.static_count as f64 {
        Verdict::Dynamic(winner.bin)
    } else {
        Verdict::Static
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadNode {
    pub rect: Rect,
    pub depth: usize,
    pub cell_id: usize,
    pub path: Vec<u8>,
    pub members: Vec<usize>,
    pub children: Vec<QuadNode>,
}

impl QuadNode {
    pub fn root(cell_id: usize, rect: Rect, members: Vec<usize>) -> Self {
        Self { rect, depth: 0, cell_id, path: Vec::new(), members, children: Vec::new() }
    }

    pub fn leaves(&self) -> Vec<&QuadNode> {
        if self.children.is_empty() {
            vec![self]
        } else {
            self.children.iter().flat_map(QuadNode::leaves).collect()
        }
    }
}

fn histogram_of(members: &[usize], binned: &BinnedMatches, bins_per_axis: usize) -> CellHistogram {
    let mut hist = CellHistogram::new(bins_per_axis);
    for &index in members {
        if let Some(m) = &binned.entries[index] {
            hist.push(m.bin.index(bins_per_axis), index);
        }
    }
    hist
}

/// Classifies `node` and splits it into quadrants while the winning pattern
/// lacks consensus. Children are attached to `node`; the returned decisions
/// are those of the leaves.
pub fn subdivide_binned(
    node: &mut QuadNode,
    binned: &BinnedMatches,
    pass: usize,
    cfg: &GridConfig,
    model: &StatModel,
) -> Vec<CellDecision> {
    let hist = histogram_of(&node.members, binned, cfg.bins_per_axis);
    let stats = CellStats::from_counts(node.cell_id, &hist.counts, cfg.bins_per_axis);
    let n = stats.n;
    let split = (stats.s_max1.count as f64) < cfg.p_min * n as f64 && n > cfg.n_min && node.depth < cfg.max_quad_depth;

    if split {
        let mut quads: [Vec<usize>; 4] = Default::default();
        for &index in &node.members {
            if let Some(m) = &binned.entries[index] {
                quads[node.rect.quadrant_of(&m.pixel) as usize].push(index);
            }
        }
        node.children = quads
            .into_iter()
            .enumerate()
            .map(|(q, members)| {
                let mut path = node.path.clone();
                path.push(q as u8);
                QuadNode {
                    rect: node.rect.quadrant(q as u8),
                    depth: node.depth + 1,
                    cell_id: node.cell_id,
                    path,
                    members,
                    children: Vec::new(),
                }
            })
            .collect();
        return node.children.iter_mut().flat_map(|child| subdivide_binned(child, binned, pass, cfg, model)).collect();
    }

    let winning_bin = stats.s_max1.bin;
    let winners = hist.members[winning_bin.index(cfg.bins_per_axis)].clone();
    vec![CellDecision {
        pass,
        cell_id: node.cell_id,
        quad_path: node.path.clone(),
        rect: node.rect,
        verdict: classify_cell(&stats, model, cfg),
        n,
        support: stats.s_max1.count,
        winning_bin,
        members: node.members.clone(),
        winners,
    }]
}

/// [`subdivide_binned`] for callers holding raw correspondences.
pub fn subdivide(
    node: &mut QuadNode,
    matches: &[Correspondence],
    pose0: &SE3,
    cfg: &GridConfig,
    model: &StatModel,
) -> Vec<CellDecision> {
    let binned = bin_matches(matches, pose0, cfg);
    subdivide_binned(node, &binned, 0, cfg, model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassResult {
    pub pass_id: usize,
    pub geometry: GridGeometry,
    pub tensor: GridTensor,
    pub decisions: Vec<CellDecision>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPasses {
    pub binned: BinnedMatches,
    pub passes: Vec<PassResult>,
}

pub fn run_pass(
    binned: &BinnedMatches,
    pass_id: usize,
    shift: Shift,
    cfg: &GridConfig,
    model: &StatModel,
) -> PassResult {
    let geometry = GridGeometry::new(cfg, shift);
    let tensor = accumulate(binned, geometry, cfg.bins_per_axis);
    let decisions = tensor
        .cells
        .iter()
        .enumerate()
        .flat_map(|(cell_id, hist)| {
            let members: Vec<usize> = {
                let mut all: Vec<usize> = hist.members.iter().flatten().copied().collect();
                all.sort_unstable();
                all
            };
            let mut root = QuadNode::root(cell_id, geometry.cell_rect(cell_id), members);
            subdivide_binned(&mut root, binned, pass_id, cfg, model)
        })
        .collect();
    PassResult { pass_id, geometry, tensor, decisions }
}

/// Runs the unshifted pass and the three half-cell-shifted passes.
pub fn run_passes(matches: &[Correspondence], pose0: &SE3, cfg: &GridConfig, model: &StatModel) -> GridPasses {
    let binned = bin_matches(matches, pose0, cfg);
    let passes = Shift::PASSES
        .iter()
        .enumerate()
        .map(|(pass_id, &shift)| run_pass(&binned, pass_id, shift, cfg, model))
        .collect();
    GridPasses { binned, passes }
}
